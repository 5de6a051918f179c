use arc_core::harness::{evaluate_stages, train_stages};
use arc_core::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn stream(num_tasks: usize, step: usize, dim: usize, seed: u64) -> TaskStream {
    generate_synthetic(&SyntheticSpec {
        num_tasks,
        step,
        dim,
        mean_scale: 1.0,
        noise_sigma: 0.8,
        train_per_class: 12,
        test_per_class: 8,
        seed,
    })
    .unwrap()
}

fn random_head(rng: &mut ChaCha8Rng, dim: usize, step: usize, tasks: usize) -> LinearHead {
    let k = step * tasks;
    LinearHead::from_parts(
        dim,
        step,
        tasks,
        (0..k * dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
        (0..k).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn sum_reducer(r: &RMatrix) -> (f64, Option<f64>) {
    let rows = r.rows();
    let last = rows.last().unwrap();
    let mut a = 0.0;
    for v in last {
        a += v;
    }
    a /= last.len() as f64;
    if rows.len() < 2 {
        return (a, None);
    }
    let mut f = 0.0;
    for i in 0..rows.len() - 1 {
        f += rows[i][i] - last[i];
    }
    (a, Some(f / (rows.len() - 1) as f64))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn expansion_preserves_old_logits(
        seed in any::<u64>(),
        dim in 1usize..6,
        step in 1usize..4,
        tasks in 1usize..4,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let head = random_head(&mut rng, dim, step, tasks);
        let layout = TaskLayout::new(tasks + 1, step).unwrap();
        let grown = head.expanded(&layout).unwrap();
        prop_assert_eq!(grown.classes(), step * (tasks + 1));
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        let before = head.forward(&x).unwrap();
        let after = grown.forward(&x).unwrap();
        prop_assert_eq!(&after[..before.len()], &before[..]);
        prop_assert!(after[before.len()..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn retention_changes_only_head_parameters(
        seed in any::<u64>(),
        n in 1usize..10,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let head = random_head(&mut rng, 4, 2, 3);
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let snapshot = xs.clone();
        let batch: Vec<(&[f64], usize)> = xs
            .iter()
            .map(|x| (x.as_slice(), rng.random_range(0..6)))
            .collect();
        let out = adaptive_retention(&head, &batch, &ArcConfig::default()).unwrap();
        prop_assert_eq!(&xs, &snapshot);
        prop_assert_eq!(out.head.classes(), head.classes());
        prop_assert_eq!(out.head.dim(), head.dim());
        prop_assert_eq!(out.head.visible_tasks(), head.visible_tasks());
        prop_assert_eq!(out.predictions.len(), n);
    }

    #[test]
    fn arc_evaluation_keeps_head_shape(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let head = random_head(&mut rng, 3, 2, 3);
        let batches: Vec<Vec<Vec<f64>>> = (0..4)
            .map(|_| {
                (0..5)
                    .map(|_| (0..3).map(|_| rng.random_range(-3.0..3.0)).collect())
                    .collect()
            })
            .collect();
        let eval = arc_evaluate(&head, &batches, 3, 2, &ArcConfig::default()).unwrap();
        prop_assert_eq!(eval.records.len(), 20);
        prop_assert_eq!(eval.head.classes(), 6);
        prop_assert_eq!(eval.head.dim(), 3);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn stream_level_invariants(
        seed in 0u64..1000,
        num_tasks in 1usize..5,
        step in 1usize..4,
    ) {
        let s = stream(num_tasks, step, 6, seed);
        for (i, task) in s.tasks().iter().enumerate() {
            for ex in task.train.iter().chain(&task.test) {
                prop_assert!(s.layout().task_range(i + 1).contains(&ex.label));
            }
        }

        let train = TrainConfig { seed, epochs: 3, ..TrainConfig::default() };
        let arc = ArcConfig { batch_size: 7, ..ArcConfig::default() };
        let run = run_stream(&s, &train, &arc).unwrap();

        for r in [&run.arc.r, &run.baseline.r] {
            prop_assert_eq!(r.stages(), num_tasks);
            for (t, row) in r.rows().iter().enumerate() {
                prop_assert_eq!(row.len(), t + 1);
                prop_assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }

        let plain = evaluate_stages(&s, &run.heads, seed, &ArcConfig::disabled()).unwrap();
        prop_assert_eq!(&plain.r, &run.baseline.r);

        let heads = train_stages(&s, &train).unwrap();
        prop_assert_eq!(&heads, &run.heads);
        let layout = s.layout();
        let mut head = LinearHead::new(6, step).unwrap();
        for t in 1..=num_tasks {
            if t > 1 {
                head = run.heads[t - 2].expanded(layout).unwrap();
            }
            let fitted = fit_task(&head, &s.task(t).train, &train).unwrap();
            prop_assert_eq!(&fitted, &run.heads[t - 1]);
        }

        for (report, r) in [(&run.arc_report, &run.arc.r), (&run.baseline_report, &run.baseline.r)] {
            let (a, f) = sum_reducer(r);
            prop_assert!((report.average_accuracy - a).abs() <= 1e-12);
            match (report.forgetting, f) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-12),
                (None, None) => {}
                other => prop_assert!(false, "forgetting mismatch {:?}", other),
            }
        }

        let t = num_tasks;
        for eval in [&run.arc, &run.baseline] {
            let samples = &eval.stages[t - 1];
            let hist = bias_histogram(samples, layout, t).unwrap();
            let wrong = samples.iter().filter(|x| x.task == 1 && !x.is_correct()).count();
            prop_assert_eq!(hist.total(), wrong);
        }

        let again = run_stream(&s, &train, &arc).unwrap();
        prop_assert_eq!(&again.arc_report, &run.arc_report);
        prop_assert_eq!(&again.arc.stages, &run.arc.stages);
    }

    #[test]
    fn embeddings_round_trip_through_a_file(seed in any::<u64>(), dim in 2usize..6) {
        let s = stream(2, 2, dim, seed);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stream.emb1");
        write_embeddings(&s, &path).unwrap();
        let loaded = load_embeddings(&path).unwrap();
        prop_assert_eq!(&loaded, &s);
        prop_assert_eq!(generate_synthetic(&SyntheticSpec {
            num_tasks: 2, step: 2, dim, mean_scale: 1.0, noise_sigma: 0.8,
            train_per_class: 12, test_per_class: 8, seed,
        }).unwrap(), s);
    }
}
