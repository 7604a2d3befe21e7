use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Affine2, Dc2d, Median, Problem, ReluMlp, Sample, SampleSet, SelectionRule};
use crate::error::{Error, Result};

/// Parameter record addressing a zoo problem by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case")]
pub enum ProblemSpec {
    Median {
        /// Inline data points `a_j`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        values: Option<Vec<f64>>,
        /// CSV file with a target column.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        csv: Option<PathBuf>,
        /// Draw `count` points uniformly from `[0, 10)` with `seed`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        count: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gap_radius: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        selection: Option<SelectionRule>,
    },
    Dc2d {
        /// Convex part as `[slope1, slope2, offset]` rows; defaults to the
        /// shipped separating instance.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        top: Option<Vec<[f64; 3]>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bottom: Option<Vec<[f64; 3]>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shifts: Option<Vec<[f64; 2]>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        start: Option<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gap_radius: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        selection: Option<SelectionRule>,
    },
    ReluMlp {
        widths: Vec<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        samples: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        csv: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        data: Option<Vec<Sample>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        param_box: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        selection: Option<SelectionRule>,
    },
}

fn affine_rows(rows: &[[f64; 3]]) -> Vec<Affine2> {
    rows.iter().map(|r| Affine2::new(r[0], r[1], r[2])).collect()
}

fn load_csv(path: &Path, base: Option<&Path>) -> Result<SampleSet> {
    let full = match base {
        Some(b) if path.is_relative() => b.join(path),
        _ => path.to_path_buf(),
    };
    SampleSet::from_csv_path(&full).map_err(|e| Error::Input(format!("{}: {e}", full.display())))
}

impl ProblemSpec {
    pub fn id(&self) -> &'static str {
        match self {
            ProblemSpec::Median { .. } => "median",
            ProblemSpec::Dc2d { .. } => "dc2d",
            ProblemSpec::ReluMlp { .. } => "relu-mlp",
        }
    }

    /// Construct the problem; relative CSV paths resolve against `base`.
    pub fn build(&self, base: Option<&Path>) -> Result<Problem> {
        match self.resolve(base)? {
            ProblemSpec::Median {
                values,
                gap_radius,
                selection,
                ..
            } => {
                let mut p = Median::new(values.unwrap_or_default())?;
                if let Some(r) = gap_radius {
                    p.gap_radius = r;
                }
                if let Some(s) = selection {
                    s.validate()?;
                    p.selection = s;
                }
                Ok(p.into())
            }
            ProblemSpec::Dc2d {
                top,
                bottom,
                shifts,
                start,
                gap_radius,
                selection,
            } => {
                let base = Dc2d::separating_instance();
                let mut p = match top {
                    Some(t) => Dc2d::new(
                        affine_rows(&t),
                        affine_rows(&bottom.unwrap_or_default()),
                        shifts.clone().unwrap_or_default(),
                    )?,
                    None => Dc2d::new(base.top().to_vec(), base.bottom().to_vec(), shifts.unwrap_or_default())?
                        .with_start(base.default_x0()),
                };
                if let Some(s) = start {
                    p = p.with_start(s);
                }
                if let Some(r) = gap_radius {
                    p.gap_radius = r;
                }
                if let Some(s) = selection {
                    s.validate()?;
                    p.selection = s;
                }
                Ok(p.into())
            }
            ProblemSpec::ReluMlp {
                widths,
                samples,
                seed,
                data,
                param_box,
                selection,
                ..
            } => {
                let seed = seed.unwrap_or(0);
                let mut p = match data {
                    Some(d) => {
                        let shape = ReluMlp::synthetic(widths.clone(), 1, seed)?;
                        ReluMlp::new(widths, SampleSet::new(d)?, ReluMlp::DEFAULT_PARAM_BOX)?
                            .with_init(shape.default_x0())?
                    }
                    None => ReluMlp::synthetic(widths, samples.unwrap_or(8), seed)?,
                };
                if let Some(b) = param_box {
                    p = ReluMlp::new(p.widths().to_vec(), p.data().clone(), b)?.with_init(p.default_x0())?;
                }
                if let Some(s) = selection {
                    s.validate()?;
                    p.selection = s;
                }
                Ok(p.into())
            }
        }
    }

    /// Same problem with every external input inlined, so the record alone
    /// rebuilds it.
    pub fn resolve(&self, base: Option<&Path>) -> Result<ProblemSpec> {
        let mut out = self.clone();
        match &mut out {
            ProblemSpec::Median {
                values,
                csv,
                count,
                seed,
                ..
            } => {
                let provided = values.is_some() as u8 + csv.is_some() as u8 + count.is_some() as u8;
                if provided != 1 {
                    return Err(Error::Config(
                        "median problem needs exactly one of `values`, `csv`, `count`".into(),
                    ));
                }
                if let Some(path) = csv.take() {
                    let set = load_csv(&path, base)?;
                    *values = Some(Median::from_samples(&set)?.values().to_vec());
                } else if let Some(m) = count.take() {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed.take().unwrap_or(0));
                    *values = Some((0..m).map(|_| rng.gen_range(0.0..10.0)).collect());
                }
                *seed = None;
            }
            ProblemSpec::Dc2d { .. } => {}
            ProblemSpec::ReluMlp { csv, data, samples, .. } => {
                if let Some(path) = csv.take() {
                    *data = Some(load_csv(&path, base)?.samples().to_vec());
                    *samples = None;
                }
            }
        }
        Ok(out)
    }
}
