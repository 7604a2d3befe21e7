use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One training record `(A_j, y_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

/// The empirical-risk dataset. Never empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    samples: Vec<Sample>,
}

impl SampleSet {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Input("sample set must contain at least one sample".into()));
        }
        Ok(Self { samples })
    }

    /// Scalar targets with no inputs, as used by the median family.
    pub fn from_targets(values: &[f64]) -> Result<Self> {
        Self::new(
            values
                .iter()
                .map(|&v| Sample {
                    input: Vec::new(),
                    target: vec![v],
                })
                .collect(),
        )
    }

    /// Load from CSV: one sample per row, header row naming the columns.
    /// Columns whose name starts with `y` are targets, the rest inputs.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let is_target: Vec<bool> = headers
            .iter()
            .map(|h| h.starts_with('y') || h.starts_with('Y'))
            .collect();
        if !is_target.iter().any(|&t| t) {
            return Err(Error::Input("csv needs at least one target column (name starting with 'y')".into()));
        }
        let mut samples = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let mut input = Vec::new();
            let mut target = Vec::new();
            for (field, &t) in rec.iter().zip(&is_target) {
                let v: f64 = field.parse().map_err(|_| {
                    Error::Input(format!("row {}: cannot parse {field:?} as a number", row + 1))
                })?;
                if t {
                    target.push(v);
                } else {
                    input.push(v);
                }
            }
            samples.push(Sample { input, target });
        }
        Self::new(samples)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::from_csv_reader(file)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, j: usize) -> &Sample {
        &self.samples[j]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_splits_inputs_and_targets() {
        let text = "a1,a2,y\n1.0,2.0,3.5\n-1,0,0.25\n";
        let set = SampleSet::from_csv_reader(text.as_bytes()).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.get(0).input, vec![1.0, 2.0]);
        assert_eq!(set.get(1).target, vec![0.25]);
    }

    #[test]
    fn csv_without_target_is_rejected() {
        assert!(SampleSet::from_csv_reader("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn empty_set_is_rejected() {
        assert!(SampleSet::new(vec![]).is_err());
        assert!(SampleSet::from_csv_reader("y\n".as_bytes()).is_err());
    }
}
