//! Dense and matrix-free linear solvers shared by the surface and particle systems.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::Mat;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

/// A square linear operator `x ↦ (I + G) x` given through the action of `G`.
pub trait InteractionOperator: Sync {
    fn dim(&self) -> usize;
    /// Writes `G x` into `out`.
    fn apply_interaction(&self, x: &[Complex64], out: &mut [Complex64]);

    /// Writes `(I + G) x` into `out`.
    fn apply(&self, x: &[Complex64], out: &mut [Complex64]) {
        self.apply_interaction(x, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o += xi;
        }
    }
}

pub fn norm2(x: &[Complex64]) -> f64 {
    x.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

fn dotc(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Diagnostics attached to every solve.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolveReport {
    pub method: String,
    pub iterations: usize,
    /// Final relative residual `‖b − Ax‖ / ‖b‖`.
    pub residual: f64,
    pub history: Vec<f64>,
    /// Largest observed ratio of successive fixed-point residuals.
    pub contraction: Option<f64>,
    /// 1-norm condition estimate (direct solves only).
    pub condition: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterativeOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub restart: usize,
}

impl Default for IterativeOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-11,
            max_iterations: 500,
            restart: 60,
        }
    }
}

/// LU factorization with partial pivoting and a cached 1-norm of the matrix.
pub struct DenseLu {
    lu: PartialPivLu<Complex64>,
    norm1: f64,
    n: usize,
}

impl DenseLu {
    pub fn new(a: &Mat<Complex64>) -> Self {
        assert_eq!(a.nrows(), a.ncols(), "matrix must be square");
        let n = a.nrows();
        let norm1 = (0..n)
            .map(|j| (0..n).map(|i| a[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max);
        Self {
            lu: a.partial_piv_lu(),
            norm1,
            n,
        }
    }

    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let rhs = Mat::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }

    fn solve_adjoint(&self, b: &[Complex64]) -> Vec<Complex64> {
        let rhs = Mat::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.lu.solve_adjoint(&rhs);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }

    /// Hager–Higham estimate of `‖A‖₁ ‖A⁻¹‖₁`.
    pub fn condition_estimate(&self) -> f64 {
        let n = self.n;
        if n == 0 {
            return 1.0;
        }
        let mut x = vec![Complex64::new(1.0 / n as f64, 0.0); n];
        let mut estimate = 0.0;
        let mut last_j = usize::MAX;
        for _ in 0..5 {
            let y = self.solve(&x);
            let y_norm: f64 = y.iter().map(|c| c.norm()).sum();
            if y_norm <= estimate {
                break;
            }
            estimate = y_norm;
            let xi: Vec<Complex64> = y
                .iter()
                .map(|c| if c.norm() > 0.0 { c / c.norm() } else { Complex64::new(1.0, 0.0) })
                .collect();
            let z = self.solve_adjoint(&xi);
            let (j, zmax) = z
                .iter()
                .enumerate()
                .map(|(i, c)| (i, c.norm()))
                .fold((0, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
            if zmax <= dotc(&z, &x).re || j == last_j {
                break;
            }
            last_j = j;
            x.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            x[j] = Complex64::new(1.0, 0.0);
        }
        // Higham's alternative vector guards against the estimate stalling low.
        let alt: Vec<Complex64> = (0..n)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                Complex64::new(s * (1.0 + i as f64 / (n.max(2) - 1) as f64), 0.0)
            })
            .collect();
        let y = self.solve(&alt);
        let alt_est = 2.0 * y.iter().map(|c| c.norm()).sum::<f64>() / (3.0 * n as f64);
        self.norm1 * estimate.max(alt_est)
    }
}

/// Residual `‖b − (I+G)x‖ / ‖b‖`.
pub fn relative_residual<O: InteractionOperator + ?Sized>(op: &O, x: &[Complex64], b: &[Complex64]) -> f64 {
    let mut ax = vec![Complex64::new(0.0, 0.0); op.dim()];
    op.apply(x, &mut ax);
    let bn = norm2(b);
    let r: f64 = ax
        .iter()
        .zip(b)
        .map(|(a, bi)| (bi - a).norm_sqr())
        .sum::<f64>()
        .sqrt();
    if bn > 0.0 {
        r / bn
    } else {
        r
    }
}

/// Fixed-point (Neumann/Born) iteration `x ← b − G x`, handing over to GMRES when
/// the observed contraction is too slow.
pub fn solve_iterative<O: InteractionOperator + ?Sized>(
    op: &O,
    b: &[Complex64],
    opts: &IterativeOptions,
) -> Result<(Vec<Complex64>, SolveReport)> {
    let n = op.dim();
    assert_eq!(b.len(), n);
    let bn = norm2(b);
    let zero = Complex64::new(0.0, 0.0);
    if bn == 0.0 {
        return Ok((
            vec![zero; n],
            SolveReport {
                method: "fixed-point".into(),
                ..Default::default()
            },
        ));
    }
    let mut x = b.to_vec();
    let mut gx = vec![zero; n];
    let mut history = Vec::new();
    let mut contraction: f64 = 0.0;
    let mut slow = 0;
    let fixed_point_cap = opts.max_iterations.min(200);
    for it in 0..fixed_point_cap {
        op.apply_interaction(&x, &mut gx);
        // residual b − x − Gx equals the next update
        let mut rn = 0.0;
        for i in 0..n {
            let next = b[i] - gx[i];
            rn += (next - x[i]).norm_sqr();
            x[i] = next;
        }
        let rel = rn.sqrt() / bn;
        if let Some(prev) = history.last().copied() {
            let ratio: f64 = rel / prev;
            contraction = contraction.max(ratio);
            if ratio > 0.9 {
                slow += 1;
            }
        }
        history.push(rel);
        if rel <= opts.tolerance {
            // the residual above belongs to the previous iterate; report the final one
            let residual = relative_residual(op, &x, b);
            return Ok((
                x,
                SolveReport {
                    method: "fixed-point".into(),
                    iterations: it + 1,
                    residual,
                    history,
                    contraction: Some(contraction),
                    condition: None,
                },
            ));
        }
        if slow >= 3 || !rel.is_finite() || rel > 1e6 {
            break;
        }
    }
    let start = if history.last().is_some_and(|r| r.is_finite() && *r < 1.0) {
        x
    } else {
        b.to_vec()
    };
    let (x, mut report) = gmres(op, b, start, opts)?;
    let mut full = history;
    let fp_iters = full.len();
    full.extend(report.history.iter().copied());
    report.history = full;
    report.iterations += fp_iters;
    report.contraction = Some(contraction);
    report.method = "fixed-point+gmres".into();
    Ok((x, report))
}

/// Restarted GMRES for `(I + G) x = b`.
pub fn gmres<O: InteractionOperator + ?Sized>(
    op: &O,
    b: &[Complex64],
    x0: Vec<Complex64>,
    opts: &IterativeOptions,
) -> Result<(Vec<Complex64>, SolveReport)> {
    let n = op.dim();
    let zero = Complex64::new(0.0, 0.0);
    let bn = norm2(b);
    let mut x = x0;
    let mut history = Vec::new();
    if bn == 0.0 {
        return Ok((
            vec![zero; n],
            SolveReport {
                method: "gmres".into(),
                ..Default::default()
            },
        ));
    }
    let m = opts.restart.max(1).min(n.max(1));
    let mut total = 0;
    let mut ax = vec![zero; n];
    while total < opts.max_iterations {
        op.apply(&x, &mut ax);
        let r: Vec<Complex64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm2(&r);
        if beta / bn <= opts.tolerance {
            history.push(beta / bn);
            return Ok((
                x,
                SolveReport {
                    method: "gmres".into(),
                    iterations: total,
                    residual: beta / bn,
                    history,
                    contraction: None,
                    condition: None,
                },
            ));
        }
        let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|c| c / beta).collect());
        let mut h = vec![vec![zero; m]; m + 1];
        let mut cs = vec![zero; m];
        let mut sn = vec![zero; m];
        let mut g = vec![zero; m + 1];
        g[0] = Complex64::new(beta, 0.0);
        let mut steps = 0;
        for j in 0..m {
            let mut w = vec![zero; n];
            op.apply(&basis[j], &mut w);
            for (i, v) in basis.iter().enumerate() {
                let hij = dotc(v, &w);
                h[i][j] = hij;
                for (wk, vk) in w.iter_mut().zip(v) {
                    *wk -= hij * vk;
                }
            }
            let wn = norm2(&w);
            h[j + 1][j] = Complex64::new(wn, 0.0);
            for i in 0..j {
                let t = cs[i].conj() * h[i][j] + sn[i].conj() * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let (c, s) = givens(h[j][j], h[j + 1][j]);
            cs[j] = c;
            sn[j] = s;
            h[j][j] = c.conj() * h[j][j] + s.conj() * h[j + 1][j];
            h[j + 1][j] = zero;
            g[j + 1] = -s * g[j];
            g[j] = c.conj() * g[j];
            steps = j + 1;
            total += 1;
            let rel = g[j + 1].norm() / bn;
            history.push(rel);
            if rel <= opts.tolerance * 0.5 || wn == 0.0 || total >= opts.max_iterations {
                break;
            }
            basis.push(w.iter().map(|c| c / wn).collect());
        }
        // back substitution on the triangular Hessenberg factor
        let mut y = vec![zero; steps];
        for i in (0..steps).rev() {
            let mut acc = g[i];
            for l in i + 1..steps {
                acc -= h[i][l] * y[l];
            }
            y[i] = acc / h[i][i];
        }
        for (l, yl) in y.iter().enumerate() {
            for (xi, vi) in x.iter_mut().zip(&basis[l]) {
                *xi += yl * vi;
            }
        }
    }
    let residual = relative_residual(op, &x, b);
    if residual <= opts.tolerance {
        history.push(residual);
        return Ok((
            x,
            SolveReport {
                method: "gmres".into(),
                iterations: total,
                residual,
                history,
                contraction: None,
                condition: None,
            },
        ));
    }
    history.push(residual);
    Err(Error::NoConvergence {
        iterations: total,
        history,
    })
}

fn givens(a: Complex64, b: Complex64) -> (Complex64, Complex64) {
    // returns (c, s) with [c̄ s̄; −s c][a; b] = [r; 0]
    let an = a.norm();
    let bn = b.norm();
    if bn == 0.0 {
        return (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
    }
    if an == 0.0 {
        return (Complex64::new(0.0, 0.0), b / bn);
    }
    let r = (an * an + bn * bn).sqrt();
    (a / r, b / r)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct DenseOp(Mat<Complex64>);

    impl InteractionOperator for DenseOp {
        fn dim(&self) -> usize {
            self.0.nrows()
        }
        fn apply_interaction(&self, x: &[Complex64], out: &mut [Complex64]) {
            for (i, o) in out.iter_mut().enumerate() {
                *o = (0..x.len()).map(|j| self.0[(i, j)] * x[j]).sum();
            }
        }
    }

    fn test_matrix(n: usize, strength: f64) -> Mat<Complex64> {
        Mat::from_fn(n, n, |i, j| {
            let t = ((i * 31 + j * 17) % 13) as f64 / 13.0 - 0.5;
            let u = ((i * 7 + j * 29) % 11) as f64 / 11.0 - 0.5;
            Complex64::new(t, u) * (strength / n as f64)
        })
    }

    fn rhs(n: usize) -> Vec<Complex64> {
        (0..n).map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect()
    }

    #[test]
    fn fixed_point_converges_for_contraction() {
        let op = DenseOp(test_matrix(40, 0.5));
        let b = rhs(40);
        let (x, rep) = solve_iterative(&op, &b, &IterativeOptions::default()).unwrap();
        assert_eq!(rep.method, "fixed-point");
        assert!(relative_residual(&op, &x, &b) < 1e-10);
        assert!(rep.contraction.unwrap() < 1.0);
    }

    #[test]
    fn gmres_handles_non_contracting_interaction() {
        let op = DenseOp(test_matrix(40, 12.0));
        let b = rhs(40);
        let (x, rep) = solve_iterative(&op, &b, &IterativeOptions::default()).unwrap();
        assert!(rep.method.contains("gmres"));
        assert!(relative_residual(&op, &x, &b) < 1e-10);
    }

    #[test]
    fn direct_and_gmres_agree() {
        let n = 30;
        let g = test_matrix(n, 5.0);
        let full = Mat::from_fn(n, n, |i, j| g[(i, j)] + if i == j { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) });
        let b = rhs(n);
        let lu = DenseLu::new(&full);
        let xd = lu.solve(&b);
        let op = DenseOp(g);
        let (xi, _) = gmres(&op, &b, vec![Complex64::new(0.0, 0.0); n], &IterativeOptions::default()).unwrap();
        let diff: Vec<Complex64> = xd.iter().zip(&xi).map(|(a, b)| a - b).collect();
        assert!(norm2(&diff) / norm2(&xd) < 1e-9);
    }

    #[test]
    fn condition_estimate_of_diagonal_matrix() {
        let n = 8;
        let a = Mat::from_fn(n, n, |i, j| if i == j { Complex64::new(10f64.powi(i as i32), 0.0) } else { Complex64::new(0.0, 0.0) });
        let cond = DenseLu::new(&a).condition_estimate();
        assert!((cond / 1e7 - 1.0).abs() < 1e-12, "cond = {cond}");
    }

    #[test]
    fn zero_rhs_gives_zero_solution() {
        let op = DenseOp(test_matrix(10, 30.0));
        let b = vec![Complex64::new(0.0, 0.0); 10];
        let (x, _) = solve_iterative(&op, &b, &IterativeOptions::default()).unwrap();
        assert!(norm2(&x) == 0.0);
    }
}
