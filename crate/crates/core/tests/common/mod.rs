//! Dense reference solvers for small 1-D problems, built from explicit
//! difference matrices and a log-barrier Newton method.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tgv_core::fields::{GridShape, ScalarField};

/// `(rows x cols)` forward-difference matrix `(x[k+1] - x[k]) / h`.
pub fn forward_diff(rows: usize, cols: usize, h: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for k in 0..rows {
        m[(k, k)] = -1.0 / h;
        m[(k, k + 1)] = 1.0 / h;
    }
    m
}

/// `min 1/2 z^T diag(p) z + q^T z  s.t.  G z <= b`, from a strictly feasible
/// `z0`. Returns the minimiser and the objective.
pub fn barrier_qp(p: &DVector<f64>, q: &DVector<f64>, g: &DMatrix<f64>, b: &DVector<f64>, z0: DVector<f64>) -> (DVector<f64>, f64) {
    let m = g.nrows() as f64;
    let obj = |z: &DVector<f64>| 0.5 * z.dot(&p.component_mul(z)) + q.dot(z);
    let mut z = z0;
    assert!((b - g * &z).iter().all(|s| *s > 0.0), "start is not strictly feasible");
    let mut t = 1.0;
    let scale = 1.0 + obj(&z).abs();
    while m / t > 1e-13 * scale {
        for _ in 0..200 {
            let s = b - g * &z;
            let inv_s = s.map(|v| 1.0 / v);
            let grad = (p.component_mul(&z) + q) * t + g.transpose() * &inv_s;
            let mut hess = g.transpose() * DMatrix::from_diagonal(&inv_s.component_mul(&inv_s)) * g;
            for k in 0..hess.nrows() {
                hess[(k, k)] += t * p[k];
            }
            let dz = match hess.clone().cholesky() {
                Some(c) => -c.solve(&grad),
                None => -hess.lu().solve(&grad).expect("singular Newton system"),
            };
            let decrement = -grad.dot(&dz);
            if decrement < 1e-14 {
                break;
            }
            let gdz = g * &dz;
            let phi = |z: &DVector<f64>, s: &DVector<f64>| t * obj(z) - s.iter().map(|v| v.ln()).sum::<f64>();
            let f0 = phi(&z, &s);
            let mut step = 1.0;
            while (0..s.len()).any(|k| s[k] - step * gdz[k] <= 0.0) {
                step *= 0.5;
            }
            loop {
                let zn = &z + &dz * step;
                let sn = b - g * &zn;
                if phi(&zn, &sn) <= f0 - 0.25 * step * decrement || step < 1e-12 {
                    z = zn;
                    break;
                }
                step *= 0.5;
            }
        }
        t *= 8.0;
    }
    let v = obj(&z);
    (z, v)
}

/// One absolute-value term `weight * sum_k |A x|_k` over the core variables.
pub struct L1Term {
    pub a: DMatrix<f64>,
    pub weight: f64,
}

/// `h * ( (1/p) sum |f - u|^p  + sum_terms weight * sum |A x| )` minimised
/// over core variables `x = (u, extra...)`, with `u` the first `f.len()`
/// entries. Returns the optimal energy.
pub fn l1_energy(f: &[f64], extra: usize, p: u32, terms: &[L1Term], h: f64) -> f64 {
    let n = f.len();
    let core = n + extra;
    let fid_slacks = if p == 1 { n } else { 0 };
    let term_slacks: usize = terms.iter().map(|t| t.a.nrows()).sum();
    let dim = core + fid_slacks + term_slacks;
    let rows = 2 * (fid_slacks + term_slacks);
    let mut pd = DVector::zeros(dim);
    let mut q = DVector::zeros(dim);
    let mut g = DMatrix::zeros(rows, dim);
    let mut b = DVector::zeros(rows);
    let mut constant = 0.0;
    if p == 2 {
        for k in 0..n {
            pd[k] = h;
            q[k] = -h * f[k];
            constant += 0.5 * h * f[k] * f[k];
        }
    } else {
        // |u - f| <= r
        for k in 0..n {
            let r = core + k;
            q[r] = h;
            g[(2 * k, k)] = 1.0;
            g[(2 * k, r)] = -1.0;
            b[2 * k] = f[k];
            g[(2 * k + 1, k)] = -1.0;
            g[(2 * k + 1, r)] = -1.0;
            b[2 * k + 1] = -f[k];
        }
    }
    let mut slack = core + fid_slacks;
    let mut row = 2 * fid_slacks;
    for term in terms {
        for k in 0..term.a.nrows() {
            q[slack] = h * term.weight;
            for j in 0..core {
                g[(row, j)] = term.a[(k, j)];
                g[(row + 1, j)] = -term.a[(k, j)];
            }
            g[(row, slack)] = -1.0;
            g[(row + 1, slack)] = -1.0;
            slack += 1;
            row += 2;
        }
    }
    // strictly feasible start: u = f, extra = 0, slacks above the residuals
    let mut z0 = DVector::zeros(dim);
    for k in 0..n {
        z0[k] = f[k];
    }
    let resid = &g * &z0 - &b;
    for r in 0..rows / 2 {
        let need = resid[2 * r].max(resid[2 * r + 1]);
        let s = core + r;
        z0[s] = need.max(0.0) + 1.0;
    }
    let (_, v) = barrier_qp(&pd, &q, &g, &b, z0);
    v + constant
}

/// Horizontal concatenation `[a | b]`.
pub fn hcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows());
    let mut m = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    m.view_mut((0, 0), a.shape()).copy_from(a);
    m.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    m
}

/// Reference `L^p`-TV energy of a 1-D signal.
pub fn oracle_tv(f: &[f64], alpha: f64, p: u32, h: f64) -> f64 {
    let n = f.len();
    l1_energy(f, 0, p, &[L1Term { a: forward_diff(n - 1, n, h), weight: alpha }], h)
}

/// Reference `L^p`-TGV² energy of a 1-D signal; `w` lives on the `n - 1`
/// difference slots.
pub fn oracle_tgv(f: &[f64], alpha: f64, beta: f64, p: u32, h: f64) -> f64 {
    let n = f.len();
    let d = forward_diff(n - 1, n, h);
    let jump = hcat(&d, &(-DMatrix::identity(n - 1, n - 1)));
    let e = hcat(&DMatrix::zeros(n - 2, n), &forward_diff(n - 2, n - 1, h));
    l1_energy(f, n - 1, p, &[L1Term { a: jump, weight: alpha }, L1Term { a: e, weight: beta }], h)
}

/// Reference L²-second-order-TV energy of a 1-D signal.
pub fn oracle_tv2(f: &[f64], beta: f64, h: f64) -> f64 {
    let n = f.len();
    let dd = forward_diff(n - 2, n - 1, h) * forward_diff(n - 1, n, h);
    l1_energy(f, 0, 2, &[L1Term { a: dd, weight: beta }], h)
}

/// A seeded random 1-D instance: piecewise signal plus noise.
pub struct Instance {
    pub f: ScalarField,
    pub alpha: f64,
    pub beta: f64,
}

pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(8..=32);
    let h = [0.5, 1.0, 2.0][rng.random_range(0..3)];
    let jump = rng.random_range(0..n);
    let slope: f64 = rng.random_range(-0.2..0.2);
    let values: Vec<f64> = (0..n)
        .map(|i| (if i >= jump { 1.0 } else { 0.0 }) + slope * i as f64 + rng.random_range(-0.2..0.2))
        .collect();
    let shape = GridShape::line(n).unwrap().with_spacing(h).unwrap();
    Instance {
        f: ScalarField::new(shape, values).unwrap(),
        alpha: rng.random_range(0.05..0.5),
        beta: rng.random_range(0.05..1.0),
    }
}
