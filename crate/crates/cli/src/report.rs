//! CSV tables and atomically written report bundles.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::CliError;

/// `%.17g`: 17 significant digits, trailing zeros dropped, exponent form
/// outside `[1e-4, 1e17)`. Parsing the text gives back the same `f64`.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0" } else { "0" }.into();
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let mantissa = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        trim_fraction(&format!("{:.*}", (16 - exp) as usize, x)).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

/// Header plus string rows; serialized as comma-separated, LF-terminated.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.into_inner()
            .map_err(|e| CliError::Csv(csv::Error::from(e.into_error())))
    }
}

/// Named files making up one command's output.
#[derive(Debug, Clone, Default)]
pub struct Bundle {
    pub files: Vec<(String, Vec<u8>)>,
}

pub const METADATA_FILE: &str = "metadata.txt";

impl Bundle {
    pub fn add_table(&mut self, name: &str, table: &Table) -> Result<(), CliError> {
        self.files.push((name.to_string(), table.to_csv()?));
        Ok(())
    }

    pub fn add_text(&mut self, name: &str, text: String) {
        self.files.push((name.to_string(), text.into_bytes()));
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, b)| b.as_slice())
    }

    /// Writes every file into a scratch directory next to `target`, then
    /// moves it into place. A previous bundle at `target` is replaced; any
    /// other existing directory is left alone and reported.
    pub fn write_atomic(&self, target: &Path) -> Result<PathBuf, CliError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| CliError::Io { path, source }
        };
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).map_err(io(&parent))?;
        let scratch = tempfile::Builder::new()
            .prefix(".arc-bench-")
            .tempdir_in(&parent)
            .map_err(io(&parent))?;
        for (name, bytes) in &self.files {
            let path = scratch.path().join(name);
            fs::write(&path, bytes).map_err(io(&path))?;
        }
        if target.exists() {
            if !target.join(METADATA_FILE).is_file() {
                return Err(CliError::OccupiedOutput(target.to_path_buf()));
            }
            fs::remove_dir_all(target).map_err(io(target))?;
        }
        let staged = scratch.keep();
        fs::rename(&staged, target).map_err(io(target))?;
        Ok(target.to_path_buf())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_num(0.75), "0.75");
        assert_eq!(fmt_num(0.1), "0.10000000000000001");
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(-2.5), "-2.5");
        assert_eq!(fmt_num(1e-5), "1.0000000000000001e-05");
        assert_eq!(fmt_num(123456.0), "123456");
        assert_eq!(fmt_num(1e20), "1e+20");
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_opt(None), "");
    }

    #[test]
    fn formatting_round_trips() {
        let mut x = 0.123_456_789_f64;
        for _ in 0..200 {
            let s = fmt_num(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
            x = x * 7.3 + 1e-9;
            if x > 1e30 {
                x = 1.0 / x;
            }
        }
        for x in [f64::MIN_POSITIVE, f64::MAX, 1.0 / 3.0, 2.0 / 3.0, 9.999_999_999_999_999e16] {
            assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn csv_dialect() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1".into(), "x,y".into()]);
        assert_eq!(t.to_csv().unwrap(), b"a,b\n1,\"x,y\"\n");
    }

    #[test]
    fn bundles_replace_only_previous_bundles() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("out").join("run");
        let mut b = Bundle::default();
        b.add_text(METADATA_FILE, "tool=x\n".into());
        b.add_text("a.csv", "a\n".into());
        b.write_atomic(&target).unwrap();
        b.write_atomic(&target).unwrap();
        assert_eq!(fs::read(target.join("a.csv")).unwrap(), b"a\n");

        let other = dir.path().join("keep");
        fs::create_dir_all(&other).unwrap();
        fs::write(other.join("notes"), "x").unwrap();
        assert!(matches!(
            b.write_atomic(&other),
            Err(CliError::OccupiedOutput(_))
        ));
        assert!(other.join("notes").is_file());
        let leftovers = fs::read_dir(dir.path())
            .unwrap()
            .filter(|e| {
                e.as_ref()
                    .unwrap()
                    .file_name()
                    .to_string_lossy()
                    .starts_with(".arc-bench-")
            })
            .count();
        assert_eq!(leftovers, 0);
    }
}
