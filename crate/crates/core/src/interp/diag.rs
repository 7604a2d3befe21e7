use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{GapMethod, Problem, SelectionRule};
use crate::trace::Trace;

/// Largest dataset the martingale diagnostic enumerates exactly.
pub const MAX_ENUM_SAMPLES: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapPoint {
    /// Commits before this iterate.
    pub k: usize,
    /// Virtual time of the iterate.
    pub t: f64,
    pub gap: f64,
    pub block_gaps: Vec<f64>,
}

/// Commit time of each iterate: `times[0] = 0`, then the running maximum
/// of the records' virtual commit times.
fn iterate_times(trace: &Trace) -> Vec<f64> {
    let mut out = Vec::with_capacity(trace.len() + 1);
    let mut t = 0.0_f64;
    out.push(t);
    for r in &trace.records {
        t = t.max(r.time);
        out.push(t);
    }
    out
}

/// Exact full and block gaps at every `stride`-th iterate and the last.
pub fn stationarity_curve(trace: &Trace, problem: &Problem, blocks: &[Vec<usize>], stride: usize) -> Result<Vec<GapPoint>> {
    if stride == 0 {
        return Err(Error::Input("stride must be positive".into()));
    }
    let times = iterate_times(trace);
    let last = trace.len();
    let mut out = Vec::new();
    let mut err = None;
    trace.for_each_iterate(|k, x| {
        if err.is_some() || (k % stride != 0 && k != last) {
            return;
        }
        let point = (|| -> Result<GapPoint> {
            Ok(GapPoint {
                k,
                t: times[k],
                gap: problem.clarke_gap(x, GapMethod::Exact)?,
                block_gaps: blocks.iter().map(|b| problem.block_gap(x, b, GapMethod::Exact)).collect::<Result<_>>()?,
            })
        })();
        match point {
            Ok(p) => out.push(p),
            Err(e) => err = Some(e),
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Fraction of virtual time in `[from, to]` during which the
/// piecewise-constant iterate path has exact Clarke gap below each `ε`.
/// Time-weighted: iterate `k` holds on `[T_k, T_{k+1})`.
pub fn time_fraction_in_set(trace: &Trace, problem: &Problem, eps: &[f64], from: f64, to: f64) -> Result<Vec<f64>> {
    let times = iterate_times(trace);
    let span = *times.last().expect("x0 present");
    if !(from >= 0.0 && from < to && to <= span) {
        return Err(Error::Input(format!("window [{from}, {to}] must lie inside the trace span [0, {span}]")));
    }
    let need_gaps = eps.iter().any(|e| e.is_finite());
    let mut inside = vec![0.0; eps.len()];
    let mut err = None;
    trace.for_each_iterate(|k, x| {
        if err.is_some() {
            return;
        }
        let lo = times[k].max(from);
        let hi = times.get(k + 1).copied().unwrap_or(span).min(to);
        if hi <= lo {
            return;
        }
        let gap = if need_gaps {
            match problem.clarke_gap(x, GapMethod::Exact) {
                Ok(g) => g,
                Err(e) => {
                    err = Some(e);
                    return;
                }
            }
        } else {
            0.0
        };
        for (acc, &e) in inside.iter_mut().zip(eps) {
            if gap < e {
                *acc += hi - lo;
            }
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(inside.into_iter().map(|v| (v / (to - from)).min(1.0)).collect())
}

/// Distinct write sets of a trace, in first-appearance order.
fn write_sets(trace: &Trace) -> (Vec<Vec<usize>>, Vec<usize>) {
    let mut ids: BTreeMap<&[usize], usize> = BTreeMap::new();
    let mut sets = Vec::new();
    let idx = trace
        .records
        .iter()
        .map(|r| {
            *ids.entry(&r.components).or_insert_with(|| {
                sets.push(r.components.clone());
                sets.len() - 1
            })
        })
        .collect();
    (sets, idx)
}

fn combinations(m: usize, b: usize, mut f: impl FnMut(&[usize]) -> Result<()>) -> Result<()> {
    let mut c: Vec<usize> = (0..b).collect();
    loop {
        f(&c)?;
        let Some(i) = (0..b).rev().find(|&i| c[i] != i + m - b) else {
            return Ok(());
        };
        c[i] += 1;
        for j in i + 1..b {
            c[j] = c[j - 1] + 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleDiag {
    /// Write sets of the trace; the running means are per set.
    pub write_sets: Vec<Vec<usize>>,
    /// `(k, running-mean norm per write set)` after each record.
    pub curve: Vec<(u64, Vec<f64>)>,
    /// Final running mean of the noise, per write set.
    pub means: Vec<Vec<f64>>,
    pub counts: Vec<u64>,
}

/// Noise `δM_k = Y_k − E_ξ[g(view_k, ξ)]` per record, with the expectation
/// taken exactly over every minibatch of the record's size.
pub fn martingale_diag(trace: &Trace, problem: &Problem) -> Result<MartingaleDiag> {
    let m = problem.num_samples();
    if m > MAX_ENUM_SAMPLES {
        return Err(Error::Unsupported(format!(
            "exact noise diagnostic enumerates minibatches and needs at most {MAX_ENUM_SAMPLES} samples, got {m}"
        )));
    }
    trace.check_complete()?;
    let views = trace.views()?;
    let (sets, idx) = write_sets(trace);
    let mut sums: Vec<Vec<f64>> = sets.iter().map(|s| vec![0.0; s.len()]).collect();
    let mut counts = vec![0u64; sets.len()];
    let mut curve = Vec::with_capacity(trace.len());
    let norm_of = |s: &[f64], c: u64| {
        if c == 0 {
            0.0
        } else {
            s.iter().map(|v| (v / c as f64).powi(2)).sum::<f64>().sqrt()
        }
    };
    for ((r, view), &set) in trace.records.iter().zip(&views).zip(&idx) {
        let b = r.batch.len();
        let mut mean = vec![0.0; r.components.len()];
        let mut count = 0u64;
        combinations(m, b, |batch| {
            let (g, _) = problem.block_subgrad(view, batch, &r.components)?;
            mean.iter_mut().zip(&g).for_each(|(a, v)| *a += v);
            count += 1;
            Ok(())
        })?;
        for ((s, y), e) in sums[set].iter_mut().zip(&r.y).zip(&mean) {
            *s += y - e / count as f64;
        }
        counts[set] += 1;
        curve.push((r.k, sums.iter().zip(&counts).map(|(s, &c)| norm_of(s, c)).collect()));
    }
    let means = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s.iter().map(|v| if c == 0 { 0.0 } else { v / c as f64 }).collect())
        .collect();
    Ok(MartingaleDiag {
        write_sets: sets,
        curve,
        means,
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasDiag {
    pub hits: u64,
    pub total: u64,
    pub fraction: f64,
    /// Mean selection bias over the kink hits, full length.
    pub beta_mean: Vec<f64>,
    /// `(k, hit fraction so far, running mean norm of β)` per record.
    pub curve: Vec<(u64, f64, f64)>,
}

/// How often a read lands on a kink of a sampled term, and the average
/// deviation of the configured selection from the subdifferential midpoint
/// there.
pub fn bias_diag(trace: &Trace, problem: &Problem) -> Result<BiasDiag> {
    trace.check_complete()?;
    let views = trace.views()?;
    let mid = problem.with_selection(SelectionRule::midpoint());
    let n = trace.dim();
    let mut beta_sum = vec![0.0; n];
    let mut hits = 0u64;
    let mut curve = Vec::with_capacity(trace.len());
    for (i, (r, view)) in trace.records.iter().zip(&views).enumerate() {
        let kinks = problem.kink_samples(view)?;
        if r.batch.iter().any(|j| kinks.binary_search(j).is_ok()) {
            hits += 1;
            let (g, _) = problem.block_subgrad(view, &r.batch, &r.components)?;
            let (h, _) = mid.block_subgrad(view, &r.batch, &r.components)?;
            for ((&j, a), b) in r.components.iter().zip(&g).zip(&h) {
                beta_sum[j] += a - b;
            }
        }
        let norm = if hits == 0 {
            0.0
        } else {
            beta_sum.iter().map(|v| (v / hits as f64).powi(2)).sum::<f64>().sqrt()
        };
        curve.push((r.k, hits as f64 / (i + 1) as f64, norm));
    }
    let total = trace.len() as u64;
    Ok(BiasDiag {
        hits,
        total,
        fraction: if total == 0 { 0.0 } else { hits as f64 / total as f64 },
        beta_mean: beta_sum.iter().map(|v| if hits == 0 { 0.0 } else { v / hits as f64 }).collect(),
        curve,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateTime {
    pub mean: f64,
    /// Three standard errors.
    pub half_width: f64,
    pub count: usize,
}

/// Sample mean of the elapsed time of updates writing `block`.
pub fn mean_update_time(trace: &Trace, block: &[usize]) -> Result<UpdateTime> {
    let Some(&first) = block.first() else {
        return Err(Error::Input("block must be nonempty".into()));
    };
    let d: Vec<f64> = trace
        .records
        .iter()
        .filter(|r| r.components.binary_search(&first).is_ok())
        .map(|r| r.dtau)
        .collect();
    if d.len() < 100 {
        return Err(Error::InsufficientData(format!(
            "block {block:?} has {} updates; the estimate needs at least 100",
            d.len()
        )));
    }
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(UpdateTime {
        mean,
        half_width: 3.0 * (var / n).sqrt(),
        count: d.len(),
    })
}

pub fn write_stationarity_csv(out: impl Write, points: &[GapPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let nb = points.first().map_or(0, |p| p.block_gaps.len());
    let mut header = vec!["k".to_string(), "t".into(), "gap".into()];
    header.extend((0..nb).map(|i| format!("block_gap_{i}")));
    w.write_record(&header)?;
    for p in points {
        let mut row = vec![p.k.to_string(), p.t.to_string(), p.gap.to_string()];
        row.extend(p.block_gaps.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_martingale_csv(out: impl Write, diag: &MartingaleDiag) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["k".to_string()];
    header.extend((0..diag.write_sets.len()).map(|i| format!("dM_mean_{i}")));
    w.write_record(&header)?;
    for (k, norms) in &diag.curve {
        let mut row = vec![k.to_string()];
        row.extend(norms.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_bias_csv(out: impl Write, diag: &BiasDiag) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "kink_frac", "beta_norm"])?;
    for (k, f, b) in &diag.curve {
        w.write_record([k.to_string(), f.to_string(), b.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
