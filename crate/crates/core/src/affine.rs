//! Rigid displacements (the kernel of the symmetrised gradient), the L¹
//! median of a vector field over that kernel, and L² affine regression.
//!
//! Coordinates are centred at the domain midpoint, see [`GridShape::x1`].
//!
//! The discrete kernel of [`sym_grad`](crate::diffops::sym_grad) consists of
//! fields that are rigid on the slots a gradient can occupy; the trailing row
//! of channel 1 and trailing column of channel 2 are unconstrained. Distances
//! to the kernel therefore skip those slots: a kernel element is free to match
//! `g` there.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fields::{Field, GridShape, ScalarField, VectorField};

/// `r(x) = A x + b` with `A = [[0, -skew], [skew, 0]]`.
///
/// On 1-D grids only `offset[0]` is used; the kernel is the constants.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KerEElement {
    pub skew: f64,
    pub offset: [f64; 2],
}

impl KerEElement {
    pub fn new(skew: f64, b1: f64, b2: f64) -> Self {
        Self { skew, offset: [b1, b2] }
    }

    pub fn constant(b: f64) -> Self {
        Self { skew: 0.0, offset: [b, 0.0] }
    }

    /// Parameter vector `(a, b1, b2)` in 2-D, `(b)` in 1-D.
    fn params(&self, dims: usize) -> Vec<f64> {
        if dims == 1 {
            vec![self.offset[0]]
        } else {
            vec![self.skew, self.offset[0], self.offset[1]]
        }
    }

    fn from_params(dims: usize, p: &[f64]) -> Self {
        if dims == 1 {
            Self::constant(p[0])
        } else {
            Self::new(p[0], p[1], p[2])
        }
    }

    #[inline]
    fn at(&self, shape: &GridShape, i: usize, j: usize) -> [f64; 2] {
        if shape.dims() == 1 {
            [self.offset[0], 0.0]
        } else {
            [
                -self.skew * shape.x2(j) + self.offset[0],
                self.skew * shape.x1(i) + self.offset[1],
            ]
        }
    }
}

/// Sample a rigid displacement at every pixel.
pub fn eval_ker_e(e: &KerEElement, shape: &GridShape) -> VectorField {
    let n = shape.len();
    let mut data = vec![0.0; shape.dims() * n];
    for i in 0..shape.n1() {
        for j in 0..shape.n2() {
            let idx = shape.index(i, j);
            let r = e.at(shape, i, j);
            data[idx] = r[0];
            if shape.dims() == 2 {
                data[n + idx] = r[1];
            }
        }
    }
    VectorField::from_raw(*shape, data)
}

/// Whether channel `k` at pixel `(i, j)` is a gradient slot.
#[inline]
pub(crate) fn slot_active(shape: &GridShape, k: usize, i: usize, j: usize) -> bool {
    if k == 0 {
        i + 1 < shape.n1()
    } else {
        j + 1 < shape.n2()
    }
}

/// Residual `g - r` at pixel `(i, j)` with inactive slots zeroed.
#[inline]
fn masked_residual(g: &VectorField, e: &KerEElement, i: usize, j: usize) -> [f64; 2] {
    let shape = g.shape();
    let idx = shape.index(i, j);
    let gv = g.pixel(idx);
    let r = e.at(shape, i, j);
    let mut res = [0.0; 2];
    for k in 0..shape.dims() {
        if slot_active(shape, k, i, j) {
            res[k] = gv[k] - r[k];
        }
    }
    res
}

/// L¹ distance `sum h^d |g(x) - r(x)|` from `g` to the kernel element `e`,
/// taken over gradient slots.
pub fn ker_e_distance(g: &VectorField, e: &KerEElement) -> f64 {
    let shape = g.shape();
    let mut sum = 0.0;
    for i in 0..shape.n1() {
        for j in 0..shape.n2() {
            let [a, b] = masked_residual(g, e, i, j);
            sum += a.hypot(b);
        }
    }
    shape.cell_volume() * sum
}

/// The field `r` on gradient slots and `g` elsewhere: the nearest member of
/// the discrete kernel that agrees with `e`.
pub fn ker_e_field(g: &VectorField, e: &KerEElement) -> VectorField {
    let shape = *g.shape();
    let mut out = eval_ker_e(e, &shape).into_data();
    let n = shape.len();
    for i in 0..shape.n1() {
        for j in 0..shape.n2() {
            let idx = shape.index(i, j);
            for k in 0..shape.dims() {
                if !slot_active(&shape, k, i, j) {
                    out[k * n + idx] = g.channel(k)[idx];
                }
            }
        }
    }
    VectorField::from_raw(shape, out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MedianResult {
    pub element: KerEElement,
    /// `ker_e_distance(g, element)`.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn median_of(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

/// Design rows of the rigid parameterisation at `(i, j)`: the derivative of
/// `r_k(x)` with respect to the parameters, per channel.
#[inline]
fn design_rows(shape: &GridShape, i: usize, j: usize) -> [[f64; 3]; 2] {
    [[-shape.x2(j), 1.0, 0.0], [shape.x1(i), 0.0, 1.0]]
}

/// L¹ median of `g` over the kernel of the symmetrised gradient.
///
/// Iteratively reweighted least squares with weights `1/sqrt(|res|² + eps²)`
/// (`eps = 1e-9` relative to the field scale), started at the componentwise
/// median of `g`, followed by a coordinate-descent polish. `tol` bounds the
/// relative objective change at which the reweighting stops.
pub fn median_ker_e(g: &VectorField, tol: f64, max_iter: usize) -> Result<MedianResult> {
    if !(tol >= 0.0) {
        return Err(Error::param(format!("tol must be non-negative, got {tol}")));
    }
    let shape = *g.shape();
    let dims = shape.dims();
    let np = if dims == 1 { 1 } else { 3 };

    let mut start = KerEElement::default();
    for k in 0..dims {
        let mut vals = Vec::with_capacity(shape.len());
        for i in 0..shape.n1() {
            for j in 0..shape.n2() {
                if slot_active(&shape, k, i, j) {
                    vals.push(g.channel(k)[shape.index(i, j)]);
                }
            }
        }
        start.offset[k] = median_of(&mut vals);
    }

    let scale = g.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let eps = 1e-9 * scale.max(f64::MIN_POSITIVE);
    let mut best = start;
    let mut best_obj = ker_e_distance(g, &best);
    let mut theta = start.params(dims);
    let mut prev_obj = best_obj;
    let mut iterations = 0;
    let mut converged = best_obj == 0.0;

    while !converged && iterations < max_iter {
        iterations += 1;
        let e = KerEElement::from_params(dims, &theta);
        let mut a = DMatrix::<f64>::zeros(np, np);
        let mut rhs = DVector::<f64>::zeros(np);
        for i in 0..shape.n1() {
            for j in 0..shape.n2() {
                let [r1, r2] = masked_residual(g, &e, i, j);
                let w = 1.0 / (r1 * r1 + r2 * r2 + eps * eps).sqrt();
                let rows = design_rows(&shape, i, j);
                let idx = shape.index(i, j);
                for k in 0..dims {
                    if !slot_active(&shape, k, i, j) {
                        continue;
                    }
                    let row: &[f64] = if dims == 1 { &rows[0][1..2] } else { &rows[k] };
                    let gk = g.channel(k)[idx];
                    for p in 0..np {
                        rhs[p] += w * row[p] * gk;
                        for q in 0..np {
                            a[(p, q)] += w * row[p] * row[q];
                        }
                    }
                }
            }
        }
        let Some(sol) = a.cholesky().map(|c| c.solve(&rhs)) else {
            break;
        };
        theta = sol.iter().copied().collect();
        let cand = KerEElement::from_params(dims, &theta);
        let obj = ker_e_distance(g, &cand);
        if obj < best_obj {
            best_obj = obj;
            best = cand;
        }
        if (prev_obj - obj).abs() <= tol * 1e-3 * obj.max(f64::MIN_POSITIVE) {
            converged = true;
        }
        prev_obj = obj;
    }

    let (element, objective) = polish(g, best, best_obj);
    Ok(MedianResult { element, objective, iterations, converged: converged || objective == 0.0 })
}

/// Coordinate descent with exact line searches on the convex objective.
fn polish(g: &VectorField, start: KerEElement, start_obj: f64) -> (KerEElement, f64) {
    let shape = *g.shape();
    let dims = shape.dims();
    let mut theta = start.params(dims);
    let mut obj = start_obj;
    let scale = g.data().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let extent = (shape.n1().max(shape.n2()) as f64 * shape.spacing()).max(1e-12);
    for _sweep in 0..8 {
        let before = obj;
        for k in 0..theta.len() {
            // skew acts through coordinates, so its natural scale is field/extent
            let step = if dims == 2 && k == 0 { scale / extent } else { scale };
            let f = |t: f64| {
                let mut p = theta.clone();
                p[k] = t;
                ker_e_distance(g, &KerEElement::from_params(dims, &p))
            };
            let (t, v) = line_minimise(&f, theta[k], step);
            if v < obj {
                obj = v;
                theta[k] = t;
            }
        }
        if before - obj <= 1e-15 * before {
            break;
        }
    }
    (KerEElement::from_params(dims, &theta), obj)
}

/// Minimise a convex function of one variable near `x0`: bracket by doubling,
/// then golden-section search down to roundoff.
fn line_minimise(f: &impl Fn(f64) -> f64, x0: f64, step: f64) -> (f64, f64) {
    let (mut c, mut fc, mut s) = (x0, f(x0), step);
    for _ in 0..100 {
        let fa = f(c - s);
        if fa < fc {
            c -= s;
            fc = fa;
            s *= 2.0;
            continue;
        }
        let fb = f(c + s);
        if fb < fc {
            c += s;
            fc = fb;
            s *= 2.0;
            continue;
        }
        break;
    }
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (c - s, c + s);
    let mut x = b - inv_phi * (b - a);
    let mut y = a + inv_phi * (b - a);
    let (mut fx, mut fy) = (f(x), f(y));
    for _ in 0..200 {
        if b - a <= 1e-15 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fx <= fy {
            b = y;
            y = x;
            fy = fx;
            x = b - inv_phi * (b - a);
            fx = f(x);
        } else {
            a = x;
            x = y;
            fx = fy;
            y = a + inv_phi * (b - a);
            fy = f(y);
        }
    }
    [(x, fx), (y, fy), (c, fc)]
        .into_iter()
        .fold((c, fc), |best, cand| if cand.1 < best.1 { cand } else { best })
}

/// Coefficients of `phi(x) = c0 + c1 x1 + c2 x2` in centred coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AffineFit {
    pub c0: f64,
    pub c1: f64,
    /// Zero on 1-D grids.
    pub c2: f64,
}

impl AffineFit {
    pub fn evaluate(&self, shape: &GridShape) -> ScalarField {
        let mut values = Vec::with_capacity(shape.len());
        for i in 0..shape.n1() {
            for j in 0..shape.n2() {
                let mut v = self.c0 + self.c1 * shape.x1(i);
                if shape.dims() == 2 {
                    v += self.c2 * shape.x2(j);
                }
                values.push(v);
            }
        }
        ScalarField::from_raw(*shape, values)
    }
}

/// L² regression of `f` onto affine functions via the normal equations.
pub fn linear_regression(f: &ScalarField) -> Result<AffineFit> {
    let shape = *f.shape();
    let np = shape.dims() + 1;
    let mut a = DMatrix::<f64>::zeros(np, np);
    let mut rhs = DVector::<f64>::zeros(np);
    for i in 0..shape.n1() {
        for j in 0..shape.n2() {
            let basis = [1.0, shape.x1(i), shape.x2(j)];
            let v = f.get(i, j);
            for p in 0..np {
                rhs[p] += basis[p] * v;
                for q in 0..np {
                    a[(p, q)] += basis[p] * basis[q];
                }
            }
        }
    }
    let sol = a
        .cholesky()
        .ok_or_else(|| Error::Singular("affine normal equations".into()))?
        .solve(&rhs);
    Ok(AffineFit { c0: sol[0], c1: sol[1], c2: if np == 3 { sol[2] } else { 0.0 } })
}
