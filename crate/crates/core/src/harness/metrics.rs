use crate::error::{invalid, Error, Result};

/// Lower-triangular accuracy matrix: row `t` (1-based) holds the accuracy on
/// tasks `1..=t` measured after training task `t`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RMatrix {
    rows: Vec<Vec<f64>>,
}

impl RMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut r = Self::new();
        for row in rows {
            r.push_row(row)?;
        }
        Ok(r)
    }

    /// Appends the next stage's row, which must have one more entry than the last.
    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.rows.len() + 1 {
            return Err(invalid(
                "R row",
                format!("stage {} needs {} entries, got {}", self.rows.len() + 1, self.rows.len() + 1, row.len()),
            ));
        }
        if !row.iter().all(|v| (0.0..=1.0).contains(v)) {
            return Err(invalid("R row", "accuracies must lie in [0, 1]"));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn stages(&self) -> usize {
        self.rows.len()
    }

    /// `R[t][i]`, both 1-based.
    pub fn get(&self, t: usize, i: usize) -> f64 {
        self.rows[t - 1][i - 1]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn final_row(&self) -> Option<&[f64]> {
        self.rows.last().map(Vec::as_slice)
    }
}

/// Mean of the final row: `(1/T) Σ_i R[T][i]`.
pub fn average_accuracy(r: &RMatrix) -> Result<f64> {
    let row = r.final_row().ok_or(Error::EmptyDataset)?;
    Ok(row.iter().sum::<f64>() / row.len() as f64)
}

/// `(1/(T−1)) Σ_{i<T} (R[i][i] − R[T][i])`; undefined for a single stage.
pub fn forgetting(r: &RMatrix) -> Result<f64> {
    let stages = r.stages();
    if stages < 2 {
        return Err(invalid("R matrix", "forgetting needs at least two stages"));
    }
    let total: f64 = (1..stages)
        .map(|i| r.get(i, i) - r.get(stages, i))
        .sum();
    Ok(total / (stages - 1) as f64)
}
