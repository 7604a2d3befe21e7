//! Probe points covering every cell of a planar line arrangement that meets
//! a disc. A piecewise-affine function whose pieces only switch across
//! these lines has one gradient per cell, so evaluating it at the probes
//! yields every gradient attained in the disc.

#[derive(Debug, Clone, Copy)]
pub(crate) struct Line {
    /// Unit normal.
    n: [f64; 2],
    c: f64,
}

impl Line {
    /// `{y : n·y = c}`; `None` when `n` vanishes.
    pub(crate) fn new(n: [f64; 2], c: f64) -> Option<Line> {
        let norm = n[0].hypot(n[1]);
        if norm == 0.0 || !norm.is_finite() {
            return None;
        }
        Some(Line {
            n: [n[0] / norm, n[1] / norm],
            c: c / norm,
        })
    }

    fn signed_dist(&self, y: [f64; 2]) -> f64 {
        self.n[0] * y[0] + self.n[1] * y[1] - self.c
    }

    fn same_as(&self, o: &Line) -> bool {
        let tol = 1e-12;
        let same = (self.n[0] - o.n[0]).abs() < tol && (self.n[1] - o.n[1]).abs() < tol && (self.c - o.c).abs() < tol;
        let flipped = (self.n[0] + o.n[0]).abs() < tol && (self.n[1] + o.n[1]).abs() < tol && (self.c + o.c).abs() < tol;
        same || flipped
    }
}

fn dedup(lines: &[Line]) -> Vec<Line> {
    let mut out: Vec<Line> = Vec::new();
    for l in lines {
        if !out.iter().any(|o| o.same_as(l)) {
            out.push(*l);
        }
    }
    out
}

/// Probe points for the closed disc of radius `r` around `x`: `x` itself and,
/// for every line piece inside the disc between consecutive crossings, a
/// point just off each side of its midpoint.
pub(crate) fn probe_points(x: [f64; 2], r: f64, lines: &[Line]) -> Vec<[f64; 2]> {
    let lines = dedup(lines);
    let mut probes = vec![x];
    let floor = 1e-12 * (1.0 + x[0].abs().max(x[1].abs()));
    for (li, l) in lines.iter().enumerate() {
        let d = l.signed_dist(x);
        if d.abs() > r {
            continue;
        }
        let foot = [x[0] - d * l.n[0], x[1] - d * l.n[1]];
        let dir = [-l.n[1], l.n[0]];
        let half = (r * r - d * d).max(0.0).sqrt();
        let mut cuts = vec![-half, half];
        for (oi, o) in lines.iter().enumerate() {
            if oi == li {
                continue;
            }
            let denom = o.n[0] * dir[0] + o.n[1] * dir[1];
            if denom.abs() < 1e-14 {
                continue;
            }
            let s = -o.signed_dist(foot) / denom;
            if s > -half && s < half {
                cuts.push(s);
            }
        }
        cuts.sort_by(f64::total_cmp);
        let mids: Vec<f64> = if half == 0.0 {
            vec![0.0]
        } else {
            cuts.windows(2).filter(|w| w[1] > w[0]).map(|w| 0.5 * (w[0] + w[1])).collect()
        };
        for s in mids {
            let m = [foot[0] + s * dir[0], foot[1] + s * dir[1]];
            let clearance = lines
                .iter()
                .enumerate()
                .filter(|&(oi, _)| oi != li)
                .map(|(_, o)| o.signed_dist(m).abs())
                .fold(r.max(floor), f64::min);
            let eta = (0.5 * clearance).max(floor);
            probes.push([m[0] + eta * l.n[0], m[1] + eta * l.n[1]]);
            probes.push([m[0] - eta * l.n[0], m[1] - eta * l.n[1]]);
        }
    }
    probes
}
