//! Minimum-norm point of the convex hull of a finite point set.
//!
//! Wolfe's method: alternate between adding the point most aligned against
//! the current iterate (major cycle) and projecting onto the affine hull of
//! the working set, backing off to the hull boundary whenever the affine
//! minimizer leaves the simplex (minor cycle).

const MAX_MAJOR: usize = 500;
const MAX_MINOR: usize = 500;

/// Result of a min-norm-point computation.
#[derive(Debug, Clone)]
pub struct MinNormPoint {
    pub point: Vec<f64>,
    pub norm: f64,
    /// Convex weights over the input points (zero for points outside the
    /// final working set).
    pub weights: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn combine(points: &[Vec<f64>], set: &[usize], w: &[f64], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for (&i, &wi) in set.iter().zip(w) {
        for (o, p) in out.iter_mut().zip(&points[i]) {
            *o += wi * p;
        }
    }
    out
}

/// Solve the dense system `a · x = b` in place by Gaussian elimination with
/// partial pivoting. Returns `None` when the system is numerically singular.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(1.0);
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() <= 1e-14 * scale {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                let (upper, lower) = a.split_at_mut(row);
                for (dst, src) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                    *dst -= f * src;
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Affine-hull minimizer weights for the working set, or `None` if the set is
/// affinely dependent.
fn affine_minimizer(points: &[Vec<f64>], set: &[usize]) -> Option<Vec<f64>> {
    let k = set.len();
    if k == 1 {
        return Some(vec![1.0]);
    }
    let mut a = vec![vec![0.0; k + 1]; k + 1];
    for i in 0..k {
        for j in 0..k {
            a[i][j] = dot(&points[set[i]], &points[set[j]]);
        }
        a[i][k] = 1.0;
        a[k][i] = 1.0;
    }
    let mut rhs = vec![0.0; k + 1];
    rhs[k] = 1.0;
    let sol = solve_dense(a, rhs)?;
    Some(sol[..k].to_vec())
}

/// Minimum-norm point of `conv(points)` with stopping tolerance `tol` on the
/// Wolfe optimality gap `‖x‖² − min_p ⟨x, p⟩`, relative to the squared point
/// scale.
pub fn min_norm_point(points: &[Vec<f64>], tol: f64) -> MinNormPoint {
    assert!(!points.is_empty(), "min_norm_point needs at least one point");
    let dim = points[0].len();
    let scale = points
        .iter()
        .map(|p| dot(p, p))
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);

    let start = (0..points.len())
        .min_by(|&i, &j| dot(&points[i], &points[i]).total_cmp(&dot(&points[j], &points[j])))
        .unwrap();
    let mut set = vec![start];
    let mut lambda = vec![1.0];
    let mut x = points[start].clone();

    'major: for _ in 0..MAX_MAJOR {
        let xx = dot(&x, &x);
        if xx <= tol * tol * scale {
            break;
        }
        let (j, xp) = (0..points.len())
            .map(|j| (j, dot(&x, &points[j])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if xx - xp <= tol * scale || set.contains(&j) {
            break;
        }
        set.push(j);
        lambda.push(0.0);

        for _ in 0..MAX_MINOR {
            let Some(mu) = affine_minimizer(points, &set) else {
                // Affinely dependent working set: drop the newest point and stop.
                set.pop();
                lambda.pop();
                break 'major;
            };
            if mu.iter().all(|&m| m > 1e-14) {
                lambda = mu;
                x = combine(points, &set, &lambda, dim);
                continue 'major;
            }
            let theta = lambda
                .iter()
                .zip(&mu)
                .filter(|(_, &m)| m <= 1e-14)
                .map(|(&l, &m)| if l - m > 0.0 { l / (l - m) } else { 0.0 })
                .fold(1.0_f64, f64::min);
            for (l, m) in lambda.iter_mut().zip(&mu) {
                *l = (1.0 - theta) * *l + theta * m;
            }
            let mut i = 0;
            while i < set.len() {
                if lambda[i] <= 1e-14 {
                    set.remove(i);
                    lambda.remove(i);
                } else {
                    i += 1;
                }
            }
            let total: f64 = lambda.iter().sum();
            lambda.iter_mut().for_each(|l| *l /= total);
            x = combine(points, &set, &lambda, dim);
        }
        break;
    }

    let mut weights = vec![0.0; points.len()];
    for (&i, &l) in set.iter().zip(&lambda) {
        weights[i] += l;
    }
    let norm = dot(&x, &x).sqrt();
    MinNormPoint {
        point: x,
        norm,
        weights,
    }
}

/// Norm of the min-norm point, snapped to zero below `tol` times the point
/// scale.
pub fn min_norm(points: &[Vec<f64>], tol: f64) -> f64 {
    let scale = points
        .iter()
        .map(|p| dot(p, p).sqrt())
        .fold(0.0_f64, f64::max);
    let r = min_norm_point(points, tol);
    if r.norm <= tol * scale.max(1.0) {
        0.0
    } else {
        r.norm
    }
}

/// Min-norm over the coordinate projection of the hull onto `block`.
pub fn min_norm_projected(points: &[Vec<f64>], block: &[usize], tol: f64) -> f64 {
    let projected: Vec<Vec<f64>> = points
        .iter()
        .map(|p| block.iter().map(|&j| p[j]).collect())
        .collect();
    min_norm(&projected, tol)
}
