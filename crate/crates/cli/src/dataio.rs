//! Dataset CSV ingestion and writing.
//!
//! Input schema: header `y,a,s`; `y` a float, `a` an integer arm code with
//! 0 the control, `s` an arbitrary string stratum label. Stratum labels are
//! mapped to dense codes 1..|S| in first-appearance order and the mapping
//! is preserved for output.

use std::path::Path;

use carstat::types::{Dataset, Observation};

use crate::CmdError;

/// Mapping between external stratum labels and dense codes.
#[derive(Debug, Clone, Default)]
pub struct StratumMap {
    labels: Vec<String>,
}

impl StratumMap {
    fn code_for(&mut self, label: &str) -> usize {
        if let Some(pos) = self.labels.iter().position(|l| l == label) {
            pos + 1
        } else {
            self.labels.push(label.to_string());
            self.labels.len()
        }
    }

    #[cfg_attr(not(test), allow(dead_code))]
    pub fn label(&self, code: usize) -> &str {
        &self.labels[code - 1]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, &str)> {
        self.labels.iter().enumerate().map(|(i, l)| (i + 1, l.as_str()))
    }
}

fn bad_input(msg: impl Into<String>) -> CmdError {
    CmdError::input(msg)
}

/// Read a dataset CSV. Malformed rows are reported with their 1-based line
/// number (header is line 1).
pub fn read_dataset_csv(path: &Path) -> Result<(Dataset, StratumMap), CmdError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad_input(format!("cannot open {}: {e}", path.display())))?;
    {
        let headers = reader
            .headers()
            .map_err(|e| bad_input(format!("bad header: {e}")))?;
        let expect = ["y", "a", "s"];
        if headers.len() < 3 || (0..3).any(|i| headers.get(i) != Some(expect[i])) {
            return Err(bad_input(format!(
                "expected header 'y,a,s', found '{}'",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
    }
    let mut map = StratumMap::default();
    let mut observations = Vec::new();
    let mut max_arm = 0usize;
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| bad_input(format!("line {line}: {e}")))?;
        if record.len() < 3 {
            return Err(bad_input(format!("line {line}: expected 3 fields")));
        }
        let y: f64 = record[0]
            .parse()
            .map_err(|_| bad_input(format!("line {line}: bad outcome '{}'", &record[0])))?;
        let a: usize = record[1]
            .parse()
            .map_err(|_| bad_input(format!("line {line}: bad treatment '{}'", &record[1])))?;
        let s = map.code_for(&record[2]);
        max_arm = max_arm.max(a);
        observations.push(Observation::new(y, a, s));
    }
    if observations.is_empty() {
        return Err(bad_input("dataset has no rows"));
    }
    if max_arm == 0 {
        return Err(bad_input("dataset has no treated units (all a = 0)"));
    }
    let dataset = Dataset::new(observations, max_arm, map.len())
        .map_err(|e| bad_input(e.to_string()))?;
    Ok((dataset, map))
}

/// Write a dataset in the same schema, using the stratum map's external
/// labels. Outcomes are written with round-trip precision.
#[cfg_attr(not(test), allow(dead_code))]
pub fn write_dataset_csv<W: std::io::Write>(
    w: &mut W,
    dataset: &Dataset,
    map: &StratumMap,
) -> std::io::Result<()> {
    writeln!(w, "y,a,s")?;
    for obs in dataset.observations() {
        writeln!(w, "{:.16e},{},{}", obs.y, obs.a.0, map.label(obs.s.0))?;
    }
    Ok(())
}
