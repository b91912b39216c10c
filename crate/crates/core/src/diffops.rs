//! Discrete gradient, symmetrised gradient, their negative adjoints, and a
//! power-iteration estimate of operator norms.
//!
//! Stencils are forward differences. The gradient uses Neumann replication,
//! so channel 1 of `grad(u)` is zero on the last row and channel 2 is zero on
//! the last column. Those trailing slots are not degrees of freedom of a
//! gradient, and `sym_grad` treats them the same way: `t11` differences
//! channel 1 only between rows `0..n1-1`, `t22` differences channel 2 only
//! between columns `0..n2-1`, and the mixed term lives on the interior cell
//! grid `i < n1-1, j < n2-1`. With this convention `sym_grad(grad(u))`
//! vanishes for every affine `u` and `sym_grad` annihilates every rigid
//! displacement `Ax + b`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fields::{Field, GridShape, ScalarField, SymTensorField, VectorField};

/// Result of a power iteration on `K^T K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpNormEstimate {
    /// Estimated largest singular value of `K`.
    pub value: f64,
    pub iterations: usize,
    /// Eigen-residual `|K^T K x - value² x|` of the final unit iterate, mapped
    /// to singular-value scale.
    pub residual: f64,
}

impl OpNormEstimate {
    /// A norm bound safe for step-size selection: the estimate inflated by
    /// its residual and a 2% margin, capped by the analytic ceiling.
    pub fn step_bound(&self, ceiling: f64) -> f64 {
        ((self.value + self.residual) * 1.02).min(ceiling)
    }
}

/// Linear operators the solvers need norms of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OperatorKind {
    /// `u -> grad u`
    Gradient,
    /// `w -> sym_grad w`
    SymGradient,
    /// `u -> sym_grad(grad u)`; the second difference in 1-D.
    SecondOrder,
    /// `(u, w) -> (grad u - w, sym_grad w)`
    Tgv,
}

impl OperatorKind {
    pub(crate) fn input_len(self, shape: &GridShape) -> usize {
        let n = shape.len();
        match self {
            OperatorKind::Gradient | OperatorKind::SecondOrder => n,
            OperatorKind::SymGradient => shape.dims() * n,
            OperatorKind::Tgv => n + shape.dims() * n,
        }
    }

    pub(crate) fn output_len(self, shape: &GridShape) -> usize {
        let n = shape.len();
        match self {
            OperatorKind::Gradient => shape.dims() * n,
            OperatorKind::SymGradient | OperatorKind::SecondOrder => shape.tensor_channels() * n,
            OperatorKind::Tgv => shape.dims() * n + shape.tensor_channels() * n,
        }
    }

    /// Analytic upper bound on the operator norm.
    pub fn analytic_bound(self, shape: &GridShape) -> f64 {
        let h = shape.spacing();
        let d = shape.dims() as f64;
        let grad = (4.0 * d).sqrt() / h;
        let sym = if shape.dims() == 1 { 2.0 / h } else { 8f64.sqrt() / h };
        match self {
            OperatorKind::Gradient => grad,
            OperatorKind::SymGradient => sym,
            OperatorKind::SecondOrder => grad * sym,
            OperatorKind::Tgv => grad + 1.0 + sym,
        }
    }
}

/// Forward-difference gradient, written into `out` (`dims` planes).
pub(crate) fn grad_into(shape: &GridShape, u: &[f64], out: &mut [f64]) {
    let (n1, n2, len) = (shape.n1(), shape.n2(), shape.len());
    let inv_h = 1.0 / shape.spacing();
    let (g1, rest) = out.split_at_mut(len);
    for i in 0..n1 {
        let row = i * n2;
        if i + 1 < n1 {
            for j in 0..n2 {
                g1[row + j] = (u[row + n2 + j] - u[row + j]) * inv_h;
            }
        } else {
            g1[row..row + n2].fill(0.0);
        }
    }
    if shape.dims() == 2 {
        let g2 = &mut rest[..len];
        for i in 0..n1 {
            let row = i * n2;
            for j in 0..n2 - 1 {
                g2[row + j] = (u[row + j + 1] - u[row + j]) * inv_h;
            }
            g2[row + n2 - 1] = 0.0;
        }
    }
}

/// Negative adjoint of [`grad_into`].
pub(crate) fn div_vec_into(shape: &GridShape, p: &[f64], out: &mut [f64]) {
    let (n1, n2, len) = (shape.n1(), shape.n2(), shape.len());
    let inv_h = 1.0 / shape.spacing();
    let p1 = &p[..len];
    for i in 0..n1 {
        let row = i * n2;
        for j in 0..n2 {
            let mut v = 0.0;
            if i + 1 < n1 {
                v += p1[row + j];
            }
            if i > 0 {
                v -= p1[row - n2 + j];
            }
            out[row + j] = v * inv_h;
        }
    }
    if shape.dims() == 2 {
        let p2 = &p[len..2 * len];
        for i in 0..n1 {
            let row = i * n2;
            for j in 0..n2 {
                let mut v = 0.0;
                if j + 1 < n2 {
                    v += p2[row + j];
                }
                if j > 0 {
                    v -= p2[row + j - 1];
                }
                out[row + j] += v * inv_h;
            }
        }
    }
}

/// Symmetrised gradient on the staggered valid slots (see module docs).
pub(crate) fn sym_grad_into(shape: &GridShape, w: &[f64], out: &mut [f64]) {
    let (n1, n2, len) = (shape.n1(), shape.n2(), shape.len());
    let inv_h = 1.0 / shape.spacing();
    let w1 = &w[..len];
    if shape.dims() == 1 {
        for i in 0..n1 {
            out[i] = if i + 2 < n1 { (w1[i + 1] - w1[i]) * inv_h } else { 0.0 };
        }
        return;
    }
    let w2 = &w[len..2 * len];
    let (t11, rest) = out.split_at_mut(len);
    let (t22, t12) = rest.split_at_mut(len);
    let half = 0.5 * inv_h;
    for i in 0..n1 {
        let row = i * n2;
        for j in 0..n2 {
            let idx = row + j;
            t11[idx] = if i + 2 < n1 { (w1[idx + n2] - w1[idx]) * inv_h } else { 0.0 };
            t22[idx] = if j + 2 < n2 { (w2[idx + 1] - w2[idx]) * inv_h } else { 0.0 };
            t12[idx] = if i + 1 < n1 && j + 1 < n2 {
                ((w1[idx + 1] - w1[idx]) + (w2[idx + n2] - w2[idx])) * half
            } else {
                0.0
            };
        }
    }
}

/// Negative adjoint of [`sym_grad_into`] under the weighted tensor inner
/// product.
pub(crate) fn div_tensor_into(shape: &GridShape, q: &[f64], out: &mut [f64]) {
    let (n1, n2, len) = (shape.n1(), shape.n2(), shape.len());
    let inv_h = 1.0 / shape.spacing();
    let q11 = &q[..len];
    if shape.dims() == 1 {
        for i in 0..n1 {
            let mut v = 0.0;
            if i + 2 < n1 {
                v += q11[i];
            }
            if i >= 1 && i + 1 < n1 {
                v -= q11[i - 1];
            }
            out[i] = v * inv_h;
        }
        return;
    }
    let q22 = &q[len..2 * len];
    let q12 = &q[2 * len..3 * len];
    let (o1, o2) = out.split_at_mut(len);
    for i in 0..n1 {
        let row = i * n2;
        for j in 0..n2 {
            let idx = row + j;
            // channel 1: d1- q11 + d2- q12
            let mut v1 = 0.0;
            if i + 2 < n1 {
                v1 += q11[idx];
            }
            if i >= 1 && i + 1 < n1 {
                v1 -= q11[idx - n2];
            }
            if i + 1 < n1 {
                if j + 1 < n2 {
                    v1 += q12[idx];
                }
                if j >= 1 {
                    v1 -= q12[idx - 1];
                }
            }
            o1[idx] = v1 * inv_h;

            // channel 2: d2- q22 + d1- q12
            let mut v2 = 0.0;
            if j + 2 < n2 {
                v2 += q22[idx];
            }
            if j >= 1 && j + 1 < n2 {
                v2 -= q22[idx - 1];
            }
            if j + 1 < n2 {
                if i + 1 < n1 {
                    v2 += q12[idx];
                }
                if i >= 1 {
                    v2 -= q12[idx - n2];
                }
            }
            o2[idx] = v2 * inv_h;
        }
    }
}

/// Forward-difference gradient with Neumann replication.
pub fn grad(u: &ScalarField) -> VectorField {
    let shape = *u.shape();
    let mut out = vec![0.0; shape.dims() * shape.len()];
    grad_into(&shape, u.values(), &mut out);
    VectorField::from_raw(shape, out)
}

/// Symmetrised gradient `(d1 w1, d2 w2, (d2 w1 + d1 w2)/2)`.
pub fn sym_grad(w: &VectorField) -> SymTensorField {
    let shape = *w.shape();
    let mut out = vec![0.0; shape.tensor_channels() * shape.len()];
    sym_grad_into(&shape, w.data(), &mut out);
    SymTensorField::from_raw(shape, out)
}

/// `div p = -grad^T p`.
pub fn div_vec(p: &VectorField) -> ScalarField {
    let shape = *p.shape();
    let mut out = vec![0.0; shape.len()];
    div_vec_into(&shape, p.data(), &mut out);
    ScalarField::from_raw(shape, out)
}

/// `div q = -sym_grad^T q` under the weighted tensor inner product.
pub fn div_tensor(q: &SymTensorField) -> VectorField {
    let shape = *q.shape();
    let mut out = vec![0.0; shape.dims() * shape.len()];
    div_tensor_into(&shape, q.data(), &mut out);
    VectorField::from_raw(shape, out)
}

/// Second-order operator `sym_grad(grad u)`; in 1-D the interior second
/// difference `(u[i+2] - 2u[i+1] + u[i]) / h²`.
pub fn second_diff(u: &ScalarField) -> SymTensorField {
    sym_grad(&grad(u))
}

/// Workspace-holding applicator for `K` and `K^T` of an [`OperatorKind`].
pub(crate) struct LinearOp {
    pub kind: OperatorKind,
    pub shape: GridShape,
    scratch_vec: Vec<f64>,
}

impl LinearOp {
    pub fn new(kind: OperatorKind, shape: GridShape) -> Self {
        let n = shape.len();
        Self {
            kind,
            shape,
            scratch_vec: vec![0.0; shape.dims() * n],
        }
    }

    pub fn apply(&mut self, x: &[f64], out: &mut [f64]) {
        let shape = self.shape;
        let n = shape.len();
        let dn = shape.dims() * n;
        match self.kind {
            OperatorKind::Gradient => grad_into(&shape, x, out),
            OperatorKind::SymGradient => sym_grad_into(&shape, x, out),
            OperatorKind::SecondOrder => {
                grad_into(&shape, x, &mut self.scratch_vec);
                sym_grad_into(&shape, &self.scratch_vec, out);
            }
            OperatorKind::Tgv => {
                let (u, w) = x.split_at(n);
                let (op, oq) = out.split_at_mut(dn);
                grad_into(&shape, u, op);
                for (a, b) in op.iter_mut().zip(w) {
                    *a -= b;
                }
                sym_grad_into(&shape, w, oq);
            }
        }
    }

    /// `K^T y`.
    pub fn apply_adjoint(&mut self, y: &[f64], out: &mut [f64]) {
        let shape = self.shape;
        let n = shape.len();
        let dn = shape.dims() * n;
        match self.kind {
            OperatorKind::Gradient => {
                div_vec_into(&shape, y, out);
                negate(out);
            }
            OperatorKind::SymGradient => {
                div_tensor_into(&shape, y, out);
                negate(out);
            }
            OperatorKind::SecondOrder => {
                div_tensor_into(&shape, y, &mut self.scratch_vec);
                // grad^T (sym_grad^T y) = div(div y)
                div_vec_into(&shape, &self.scratch_vec, out);
            }
            OperatorKind::Tgv => {
                let (p, q) = y.split_at(dn);
                let (ou, ow) = out.split_at_mut(n);
                div_vec_into(&shape, p, ou);
                negate(ou);
                div_tensor_into(&shape, q, ow);
                for (a, b) in ow.iter_mut().zip(p) {
                    *a = -*a - b;
                }
            }
        }
    }

    /// Weighted inner product on the output space.
    #[cfg(test)]
    pub fn output_inner(&self, a: &[f64], b: &[f64]) -> f64 {
        let shape = self.shape;
        let n = shape.len();
        let tensor =
            |a: &[f64], b: &[f64]| dot(&a[..2 * n], &b[..2 * n]) + 2.0 * dot(&a[2 * n..], &b[2 * n..]);
        match self.kind {
            OperatorKind::Gradient => dot(a, b),
            OperatorKind::SymGradient | OperatorKind::SecondOrder => {
                if shape.dims() == 1 {
                    dot(a, b)
                } else {
                    tensor(a, b)
                }
            }
            OperatorKind::Tgv => {
                let dn = shape.dims() * n;
                let tail = if shape.dims() == 1 {
                    dot(&a[dn..], &b[dn..])
                } else {
                    tensor(&a[dn..], &b[dn..])
                };
                dot(&a[..dn], &b[..dn]) + tail
            }
        }
    }
}

fn negate(v: &mut [f64]) {
    for x in v {
        *x = -*x;
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Largest singular value of `K` from the Krylov sequence of `K^T K`
/// started at a fixed pseudo-random vector.
///
/// The Krylov vectors are those of plain power iteration, but the estimate
/// is the top Ritz value of the Lanczos tridiagonalisation (with full
/// reorthogonalisation), which converges far faster on the clustered spectra
/// of difference operators. `max_iter` caps the Krylov dimension.
pub fn estimate_op_norm_of(kind: OperatorKind, shape: &GridShape, max_iter: usize) -> OpNormEstimate {
    let mut op = LinearOp::new(kind, *shape);
    let mut rng = ChaCha8Rng::seed_from_u64(0x7467_7632);
    let mut x: Vec<f64> = (0..kind.input_len(shape)).map(|_| rng.random::<f64>() - 0.5).collect();
    let nx = norm2(&x);
    x.iter_mut().for_each(|v| *v /= nx);

    let cap = max_iter.max(1);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(cap);
    let mut alphas: Vec<f64> = Vec::with_capacity(cap);
    let mut betas: Vec<f64> = Vec::with_capacity(cap);
    let mut kx = vec![0.0; kind.output_len(shape)];
    let mut r = vec![0.0; x.len()];
    let mut estimate = (0.0, f64::INFINITY);
    let mut iterations = 0;

    for k in 0..cap {
        iterations = k + 1;
        op.apply(&x, &mut kx);
        op.apply_adjoint(&kx, &mut r);
        let a = dot(&x, &r);
        for (ri, xi) in r.iter_mut().zip(&x) {
            *ri -= a * xi;
        }
        if let Some(prev) = basis.last() {
            let b = *betas.last().unwrap();
            for (ri, pi) in r.iter_mut().zip(prev) {
                *ri -= b * pi;
            }
        }
        // full reorthogonalisation, twice for stability
        for _ in 0..2 {
            for v in basis.iter().chain(std::iter::once(&x)) {
                let c = dot(&r, v);
                for (ri, vi) in r.iter_mut().zip(v) {
                    *ri -= c * vi;
                }
            }
        }
        alphas.push(a);
        let b = norm2(&r);
        let done = k + 1 == cap || b <= 1e-14 * a.abs().max(1e-300);
        if done || (k + 1) % 10 == 0 {
            estimate = top_ritz(&alphas, &betas, b);
            if done || estimate.1 <= 1e-13 * estimate.0 {
                break;
            }
        }
        betas.push(b);
        let next: Vec<f64> = r.iter().map(|v| v / b).collect();
        basis.push(std::mem::replace(&mut x, next));
    }
    let (lambda, res) = estimate;
    let value = lambda.max(0.0).sqrt();
    // |K^T K y - s² y| <= r for the unit Ritz vector y means some singular
    // value s' has |s'² - s²| <= r, hence |s' - s| <= r / s.
    let residual = if value > 0.0 { res / value } else { res.sqrt() };
    OpNormEstimate { value, iterations, residual }
}

/// Largest eigenvalue of the Lanczos tridiagonal and its Ritz residual.
fn top_ritz(alphas: &[f64], betas: &[f64], next_beta: f64) -> (f64, f64) {
    let k = alphas.len();
    let t = nalgebra::DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            alphas[i]
        } else if i + 1 == j {
            betas[i]
        } else if j + 1 == i {
            betas[j]
        } else {
            0.0
        }
    });
    let eig = t.symmetric_eigen();
    let (idx, lambda) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best });
    let residual = (next_beta * eig.eigenvectors[(k - 1, idx)]).abs();
    (lambda, residual)
}

/// Norm of the full TGV operator `K(u, w) = (grad u - w, sym_grad w)` with
/// the default 200-iteration cap.
pub fn estimate_op_norm(shape: &GridShape) -> OpNormEstimate {
    estimate_op_norm_of(OperatorKind::Tgv, shape, 200)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::inner;
    use rand::Rng;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
    }

    #[test]
    fn grad_of_constant_is_zero() {
        let g = GridShape::plane(6, 5).unwrap();
        let u = ScalarField::new(g, vec![3.5; 30]).unwrap();
        assert!(grad(&u).data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn grad_of_ramp() {
        let g = GridShape::plane(5, 4).unwrap().with_spacing(0.5).unwrap();
        let u = ScalarField::from_fn(g, |i, _| i as f64 * 0.5).unwrap();
        let d = grad(&u);
        for i in 0..5 {
            for j in 0..4 {
                let idx = g.index(i, j);
                let expect = if i < 4 { 1.0 } else { 0.0 };
                assert_eq!(d.channel(0)[idx], expect);
                assert_eq!(d.channel(1)[idx], 0.0);
            }
        }
    }

    #[test]
    fn sym_grad_of_constant_and_linear() {
        let g = GridShape::plane(6, 6).unwrap();
        let w = VectorField::from_channels(g, &[vec![2.0; 36], vec![-1.0; 36]]).unwrap();
        assert!(sym_grad(&w).data().iter().all(|v| *v == 0.0));

        let x1: Vec<f64> = (0..36).map(|k| g.x1(k / 6)).collect();
        let w = VectorField::from_channels(g, &[x1, vec![0.0; 36]]).unwrap();
        let e = sym_grad(&w);
        for i in 0..4 {
            for j in 0..6 {
                assert_eq!(e.channel(0)[g.index(i, j)], 1.0);
            }
        }
        assert!(e.channel(1).iter().chain(e.channel(2)).all(|v| *v == 0.0));
    }

    #[test]
    fn sym_grad_kills_affine_gradients() {
        let g = GridShape::plane(7, 5).unwrap().with_spacing(0.3).unwrap();
        let u = ScalarField::from_fn(g, |i, j| 1.5 - 2.0 * g.x1(i) + 0.7 * g.x2(j)).unwrap();
        let e = sym_grad(&grad(&u));
        assert!(e.data().iter().all(|v| v.abs() < 1e-12), "{:?}", e.data());

        let g = GridShape::line(9).unwrap();
        let u = ScalarField::from_fn(g, |i, _| 3.0 * i as f64 - 1.0).unwrap();
        assert!(second_diff(&u).data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn zero_dual_has_zero_divergence() {
        let g = GridShape::plane(4, 4).unwrap();
        assert!(div_vec(&VectorField::zeros(g)).values().iter().all(|v| *v == 0.0));
        assert!(div_tensor(&SymTensorField::zeros(g)).data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn one_d_div_of_constant_vanishes_inside() {
        let g = GridShape::line(10).unwrap();
        let p = VectorField::new(g, vec![2.0; 10]).unwrap();
        let d = div_vec(&p);
        assert!(d.values()[1..9].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn one_d_sym_grad_is_grad_of_replicated_field() {
        let g = GridShape::line(12).unwrap().with_spacing(0.25).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut w = random_vec(&mut rng, 12);
        let e = sym_grad(&VectorField::new(g, w.clone()).unwrap());
        w[11] = w[10];
        let d = grad(&ScalarField::new(g, w).unwrap());
        assert_eq!(e.data(), d.data());
    }

    #[test]
    fn one_d_div_tensor_is_div_vec_of_truncated_dual() {
        let g = GridShape::line(12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut q = random_vec(&mut rng, 12);
        q[10] = 0.0;
        q[11] = 0.0;
        let a = div_tensor(&SymTensorField::new(g, q.clone()).unwrap());
        let mut b = div_vec(&VectorField::new(g, q).unwrap()).into_values();
        // the trailing gradient slot of w is outside the symmetrised stencil
        b[11] = 0.0;
        assert_eq!(a.data(), &b[..]);
    }

    fn adjoint_mismatch_grad(g: GridShape, rng: &mut ChaCha8Rng) -> f64 {
        let u = ScalarField::new(g, random_vec(rng, g.len())).unwrap();
        let p = VectorField::new(g, random_vec(rng, g.dims() * g.len())).unwrap();
        let lhs = inner(&grad(&u), &p).unwrap();
        let rhs = inner(&u, &div_vec(&p)).unwrap();
        (lhs + rhs).abs() / (lhs.abs() + rhs.abs()).max(1.0)
    }

    fn adjoint_mismatch_sym(g: GridShape, rng: &mut ChaCha8Rng) -> f64 {
        let w = VectorField::new(g, random_vec(rng, g.dims() * g.len())).unwrap();
        let q = SymTensorField::new(g, random_vec(rng, g.tensor_channels() * g.len())).unwrap();
        let lhs = inner(&sym_grad(&w), &q).unwrap();
        let rhs = inner(&w, &div_tensor(&q)).unwrap();
        (lhs + rhs).abs() / (lhs.abs() + rhs.abs()).max(1.0)
    }

    #[test]
    fn adjointness_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for g in [
            GridShape::plane(16, 16).unwrap(),
            GridShape::plane(5, 9).unwrap().with_spacing(0.37).unwrap(),
            GridShape::line(64).unwrap(),
            GridShape::line(3).unwrap().with_spacing(2.0).unwrap(),
        ] {
            for _ in 0..20 {
                assert!(adjoint_mismatch_grad(g, &mut rng) <= 1e-12);
                assert!(adjoint_mismatch_sym(g, &mut rng) <= 1e-12);
            }
        }
    }

    #[test]
    fn linear_op_adjoint_matches_for_every_kind() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for g in [GridShape::plane(7, 6).unwrap(), GridShape::line(11).unwrap()] {
            for kind in [
                OperatorKind::Gradient,
                OperatorKind::SymGradient,
                OperatorKind::SecondOrder,
                OperatorKind::Tgv,
            ] {
                let mut op = LinearOp::new(kind, g);
                let x = random_vec(&mut rng, kind.input_len(&g));
                let y = random_vec(&mut rng, kind.output_len(&g));
                let mut kx = vec![0.0; y.len()];
                let mut kty = vec![0.0; x.len()];
                op.apply(&x, &mut kx);
                op.apply_adjoint(&y, &mut kty);
                let lhs = op.output_inner(&kx, &y);
                let rhs = dot(&x, &kty);
                assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0), "{kind:?} {lhs} {rhs}");
            }
        }
    }

    #[test]
    fn gradient_norm_below_classical_bound() {
        for (g, bound) in [
            (GridShape::plane(16, 16).unwrap().with_spacing(0.5).unwrap(), 8.0 / 0.25),
            (GridShape::line(40).unwrap().with_spacing(2.0).unwrap(), 4.0 / 4.0),
        ] {
            let est = estimate_op_norm_of(OperatorKind::Gradient, &g, 500);
            assert!(est.value * est.value <= bound * (1.0 + 1e-12));
            // the bound is nearly attained by the checkerboard mode
            assert!(est.value * est.value >= 0.9 * bound);
        }
    }

    #[test]
    fn tgv_norm_is_stable_across_caps() {
        let g = GridShape::plane(32, 32).unwrap();
        let a = estimate_op_norm(&g);
        let b = estimate_op_norm_of(OperatorKind::Tgv, &g, 400);
        assert!(a.value > 0.0 && a.residual >= 0.0);
        assert!(a.value <= OperatorKind::Tgv.analytic_bound(&g));
        assert!((a.value - b.value).abs() <= 1e-6 * b.value, "{a:?} {b:?}");
    }
}
