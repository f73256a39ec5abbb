//! Lawson–Hanson active-set solver for nonnegative least squares, posed in
//! normal-equation form: minimize `½ xᵀKx − cᵀx` subject to `x ≥ 0`, where
//! `K = AᵀA` and `c = Aᵀb`. Working on the Gram matrix keeps the problem size
//! equal to the number of variables regardless of how long the columns of `A` are.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NnlsOptions {
    pub max_iter: usize,
    /// Tolerance on the normal-equation residual `c − Kx`, relative to `max(1, ‖c‖∞)`.
    pub tol: f64,
}

impl Default for NnlsOptions {
    fn default() -> Self {
        NnlsOptions {
            max_iter: 10_000,
            tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest violation of the optimality conditions on `c − Kx`.
    pub dual_residual: f64,
}

fn solve_subsystem(gram: &DMatrix<f64>, rhs: &DVector<f64>, idx: &[usize]) -> Vec<f64> {
    let p = idx.len();
    let sub = DMatrix::from_fn(p, p, |a, b| gram[(idx[a], idx[b])]);
    let sub_rhs = DVector::from_fn(p, |a, _| rhs[idx[a]]);
    if let Some(chol) = sub.clone().cholesky() {
        let z = chol.solve(&sub_rhs);
        if z.iter().all(|v| v.is_finite()) {
            return z.iter().copied().collect();
        }
    }
    let svd = sub.svd(true, true);
    let eps = 1e-14 * svd.singular_values.max().max(f64::MIN_POSITIVE);
    match svd.solve(&sub_rhs, eps) {
        Ok(z) => z.iter().copied().collect(),
        Err(_) => vec![0.0; p],
    }
}

fn dual(gram: &DMatrix<f64>, rhs: &DVector<f64>, x: &[f64]) -> Vec<f64> {
    let xv = DVector::from_column_slice(x);
    (rhs - gram * xv).iter().copied().collect()
}

pub fn nnls_gram(gram: &DMatrix<f64>, rhs: &DVector<f64>, opts: NnlsOptions) -> NnlsSolution {
    let n = rhs.len();
    assert_eq!(gram.shape(), (n, n), "Gram matrix must be square and match rhs");
    let scale = rhs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = opts.tol * scale;

    let mut x = vec![0.0; n];
    let mut passive = vec![false; n];
    let mut blocked = vec![false; n];
    let mut iterations = 0;
    let mut converged = false;

    'outer: while iterations < opts.max_iter {
        let w = dual(gram, rhs, &x);
        let candidate = (0..n)
            .filter(|&j| !passive[j] && !blocked[j])
            .max_by(|&a, &b| w[a].total_cmp(&w[b]));
        let t = match candidate {
            Some(t) if w[t] > tol => t,
            _ => {
                converged = true;
                break;
            }
        };
        passive[t] = true;
        let mut first = true;
        loop {
            iterations += 1;
            let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let z = solve_subsystem(gram, rhs, &idx);
            if first {
                first = false;
                let pos = idx.iter().position(|&j| j == t).expect("t is passive");
                if z[pos] <= 0.0 {
                    // Numerically the new variable cannot enter; skip it until x moves.
                    passive[t] = false;
                    blocked[t] = true;
                    continue 'outer;
                }
            }
            if z.iter().all(|&v| v > 0.0) {
                for (&j, &v) in idx.iter().zip(&z) {
                    x[j] = v;
                }
                blocked.iter_mut().for_each(|b| *b = false);
                break;
            }
            let mut alpha = f64::INFINITY;
            for (&j, &v) in idx.iter().zip(&z) {
                if v <= 0.0 {
                    alpha = alpha.min(x[j] / (x[j] - v));
                }
            }
            for (&j, &v) in idx.iter().zip(&z) {
                x[j] += alpha * (v - x[j]);
                if x[j] <= 0.0 || (v <= 0.0 && x[j] <= f64::EPSILON * scale) {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
            blocked.iter_mut().for_each(|b| *b = false);
            if iterations >= opts.max_iter {
                break 'outer;
            }
        }
    }

    let w = dual(gram, rhs, &x);
    let dual_residual = (0..n)
        .map(|j| if x[j] > 0.0 { w[j].abs() } else { w[j].max(0.0) })
        .fold(0.0, f64::max);
    NnlsSolution {
        x,
        iterations,
        converged,
        dual_residual,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(gram: &DMatrix<f64>, rhs: &DVector<f64>) -> (Vec<f64>, f64) {
        // Enumerate all passive sets; keep the best feasible stationary point.
        let n = rhs.len();
        let mut best = (vec![0.0; n], 0.0);
        for mask in 1u32..(1 << n) {
            let idx: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
            let z = solve_subsystem(gram, rhs, &idx);
            if z.iter().any(|&v| v < 0.0) {
                continue;
            }
            let mut x = vec![0.0; n];
            for (&j, &v) in idx.iter().zip(&z) {
                x[j] = v;
            }
            let xv = DVector::from_column_slice(&x);
            let obj = 0.5 * xv.dot(&(gram * &xv)) - rhs.dot(&xv);
            if obj < best.1 {
                best = (x, obj);
            }
        }
        best
    }

    #[test]
    fn unconstrained_optimum_is_returned() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_column_slice(&[1.0, 2.0, 3.0]);
        let sol = nnls_gram(&(a.transpose() * &a), &(a.transpose() * b), NnlsOptions::default());
        assert!(sol.converged);
        assert!((sol.x[0] - 1.0).abs() < 1e-12);
        assert!((sol.x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn negative_direction_clamps_to_zero() {
        let gram = DMatrix::identity(2, 2);
        let rhs = DVector::from_column_slice(&[-1.0, 2.0]);
        let sol = nnls_gram(&gram, &rhs, NnlsOptions::default());
        assert_eq!(sol.x, vec![0.0, 2.0]);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let sol = nnls_gram(&DMatrix::identity(3, 3), &DVector::zeros(3), NnlsOptions::default());
        assert!(sol.converged);
        assert_eq!(sol.x, vec![0.0; 3]);
    }

    #[test]
    fn matches_enumeration_on_correlated_problems() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let (rows, cols) = (6, 4);
            let a = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
            let b = DVector::from_fn(rows, |_, _| rng.random_range(-1.0..1.0));
            let gram = a.transpose() * &a;
            let rhs = a.transpose() * &b;
            let sol = nnls_gram(&gram, &rhs, NnlsOptions::default());
            let (expect, _) = brute_force(&gram, &rhs);
            assert!(sol.converged);
            for (x, e) in sol.x.iter().zip(&expect) {
                assert!((x - e).abs() < 1e-9, "{:?} vs {:?}", sol.x, expect);
            }
        }
    }
}
