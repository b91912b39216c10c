//! Grid containers for scalar, vector and symmetric-tensor data.
//!
//! All containers store `f64` values in row-major order: pixel `(i, j)` lives
//! at flat index `i * n2 + j`. Vector and tensor fields store one contiguous
//! plane per channel, so channel `k` of pixel `idx` sits at `k * len + idx`.
//!
//! Norms discretise the Radon norm: every pixel contributes its pointwise
//! Euclidean (vectors) or Frobenius (tensors) magnitude times the cell volume
//! `spacing^dims`.

use crate::error::{Error, Result};

/// A regular 1-D or 2-D grid with uniform spacing.
///
/// 1-D grids have `n2 == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridShape {
    dims: usize,
    n1: usize,
    n2: usize,
    spacing: f64,
}

impl GridShape {
    pub fn new(dims: usize, n1: usize, n2: usize, spacing: f64) -> Result<Self> {
        match dims {
            1 if n2 != 1 => {
                return Err(Error::InvalidGrid(format!("1-D grid needs n2 = 1, got {n2}")))
            }
            1 | 2 => {}
            _ => return Err(Error::InvalidGrid(format!("dims must be 1 or 2, got {dims}"))),
        }
        if n1 < 2 {
            return Err(Error::InvalidGrid(format!("n1 must be at least 2, got {n1}")));
        }
        if n2 < 1 {
            return Err(Error::InvalidGrid("n2 must be positive".into()));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {spacing}")));
        }
        Ok(Self { dims, n1, n2, spacing })
    }

    /// 1-D grid of `n` samples with unit spacing.
    pub fn line(n: usize) -> Result<Self> {
        Self::new(1, n, 1, 1.0)
    }

    /// 2-D grid of `n1 x n2` pixels with unit spacing.
    pub fn plane(n1: usize, n2: usize) -> Result<Self> {
        Self::new(2, n1, n2, 1.0)
    }

    pub fn with_spacing(self, spacing: f64) -> Result<Self> {
        Self::new(self.dims, self.n1, self.n2, spacing)
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Number of pixels.
    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n2 + j
    }

    /// `spacing^dims`, the measure of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dims as i32)
    }

    /// Channels of a symmetric tensor field on this grid.
    pub fn tensor_channels(&self) -> usize {
        if self.dims == 1 {
            1
        } else {
            3
        }
    }

    /// Coordinate along axis 1 of row `i`, centred at the domain midpoint.
    pub fn x1(&self, i: usize) -> f64 {
        (i as f64 - (self.n1 as f64 - 1.0) / 2.0) * self.spacing
    }

    /// Coordinate along axis 2 of column `j`, centred at the domain midpoint.
    /// Always zero on 1-D grids.
    pub fn x2(&self, j: usize) -> f64 {
        (j as f64 - (self.n2 as f64 - 1.0) / 2.0) * self.spacing
    }

    pub(crate) fn check_same(&self, other: &GridShape) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(idx) => Err(Error::NonFinite(idx)),
        None => Ok(()),
    }
}

/// Common access to the flat storage of every field kind.
pub trait Field {
    fn shape(&self) -> &GridShape;
    fn data(&self) -> &[f64];
    fn channels(&self) -> usize;

    /// Weight each channel carries in the inner product.
    fn channel_weight(&self, _channel: usize) -> f64 {
        1.0
    }
}

/// Weighted Euclidean inner product over all stored components.
///
/// Tensor `t12` channels carry weight 2, so the result equals the full
/// matrix inner product of the symmetric tensors.
pub fn inner<F: Field>(a: &F, b: &F) -> Result<f64> {
    a.shape().check_same(b.shape())?;
    Ok(inner_flat(a, a.data(), b.data()))
}

pub(crate) fn inner_flat<F: Field>(kind: &F, a: &[f64], b: &[f64]) -> f64 {
    let len = kind.shape().len();
    (0..kind.channels())
        .map(|k| {
            let plane = k * len..(k + 1) * len;
            let s: f64 = a[plane.clone()].iter().zip(&b[plane]).map(|(x, y)| x * y).sum();
            kind.channel_weight(k) * s
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    shape: GridShape,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(shape: GridShape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values, got {}",
                shape.len(),
                values.len()
            )));
        }
        check_finite(&values)?;
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: GridShape) -> Self {
        Self { shape, values: vec![0.0; shape.len()] }
    }

    pub fn from_fn(shape: GridShape, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(shape.len());
        for i in 0..shape.n1() {
            for j in 0..shape.n2() {
                values.push(f(i, j));
            }
        }
        Self::new(shape, values)
    }

    pub(crate) fn from_raw(shape: GridShape, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), shape.len());
        Self { shape, values }
    }

    /// Same samples on a grid with a different spacing.
    pub fn with_spacing(self, spacing: f64) -> Result<Self> {
        let shape = self.shape.with_spacing(spacing)?;
        Ok(Self { shape, values: self.values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.shape.index(i, j)]
    }

    /// Spacing-weighted L^p norm, `(sum h^d |v|^p)^(1/p)`.
    pub fn lp_norm(&self, p: f64) -> f64 {
        let vol = self.shape.cell_volume();
        if p == 1.0 {
            vol * self.values.iter().map(|v| v.abs()).sum::<f64>()
        } else if p == 2.0 {
            (vol * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
        } else {
            (vol * self.values.iter().map(|v| v.abs().powf(p)).sum::<f64>()).powf(1.0 / p)
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// `self - other`.
    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField> {
        self.shape.check_same(&other.shape)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Self::from_raw(self.shape, values))
    }

    pub fn scaled(&self, c: f64) -> ScalarField {
        Self::from_raw(self.shape, self.values.iter().map(|v| c * v).collect())
    }

    /// Relative L² distance `||self - other|| / ||self||` (0 when both vanish).
    pub fn rel_l2_distance(&self, other: &ScalarField) -> Result<f64> {
        let diff = self.sub(other)?.lp_norm(2.0);
        let base = self.lp_norm(2.0);
        Ok(if base > 0.0 { diff / base } else { diff })
    }
}

impl Field for ScalarField {
    fn shape(&self) -> &GridShape {
        &self.shape
    }
    fn data(&self) -> &[f64] {
        &self.values
    }
    fn channels(&self) -> usize {
        1
    }
}

/// `dims` real values per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    shape: GridShape,
    data: Vec<f64>,
}

impl VectorField {
    /// `data` holds `dims` consecutive channel planes.
    pub fn new(shape: GridShape, data: Vec<f64>) -> Result<Self> {
        let expected = shape.dims() * shape.len();
        if data.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "expected {expected} vector components, got {}",
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: GridShape) -> Self {
        Self { shape, data: vec![0.0; shape.dims() * shape.len()] }
    }

    pub fn from_channels(shape: GridShape, channels: &[Vec<f64>]) -> Result<Self> {
        if channels.len() != shape.dims() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} channels, got {}",
                shape.dims(),
                channels.len()
            )));
        }
        Self::new(shape, channels.concat())
    }

    pub(crate) fn from_raw(shape: GridShape, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), shape.dims() * shape.len());
        Self { shape, data }
    }

    pub fn channel(&self, k: usize) -> &[f64] {
        let len = self.shape.len();
        &self.data[k * len..(k + 1) * len]
    }

    pub fn pixel(&self, idx: usize) -> [f64; 2] {
        let len = self.shape.len();
        if self.shape.dims() == 1 {
            [self.data[idx], 0.0]
        } else {
            [self.data[idx], self.data[len + idx]]
        }
    }

    pub fn sub(&self, other: &VectorField) -> Result<VectorField> {
        self.shape.check_same(&other.shape)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self::from_raw(self.shape, data))
    }

    pub fn scaled(&self, c: f64) -> VectorField {
        Self::from_raw(self.shape, self.data.iter().map(|v| c * v).collect())
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

impl Field for VectorField {
    fn shape(&self) -> &GridShape {
        &self.shape
    }
    fn data(&self) -> &[f64] {
        &self.data
    }
    fn channels(&self) -> usize {
        self.shape.dims()
    }
}

/// Symmetric matrix per pixel: one channel in 1-D, `(t11, t22, t12)` in 2-D.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTensorField {
    shape: GridShape,
    data: Vec<f64>,
}

impl SymTensorField {
    pub fn new(shape: GridShape, data: Vec<f64>) -> Result<Self> {
        let expected = shape.tensor_channels() * shape.len();
        if data.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "expected {expected} tensor components, got {}",
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: GridShape) -> Self {
        Self { shape, data: vec![0.0; shape.tensor_channels() * shape.len()] }
    }

    pub(crate) fn from_raw(shape: GridShape, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), shape.tensor_channels() * shape.len());
        Self { shape, data }
    }

    pub fn channel(&self, k: usize) -> &[f64] {
        let len = self.shape.len();
        &self.data[k * len..(k + 1) * len]
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

impl Field for SymTensorField {
    fn shape(&self) -> &GridShape {
        &self.shape
    }
    fn data(&self) -> &[f64] {
        &self.data
    }
    fn channels(&self) -> usize {
        self.shape.tensor_channels()
    }
    fn channel_weight(&self, channel: usize) -> f64 {
        if channel == 2 {
            2.0
        } else {
            1.0
        }
    }
}

/// Pointwise Euclidean norm of pixel `idx` in a planar vector buffer.
#[inline]
pub(crate) fn vec_pixel_norm(data: &[f64], len: usize, dims: usize, idx: usize) -> f64 {
    if dims == 1 {
        data[idx].abs()
    } else {
        data[idx].hypot(data[len + idx])
    }
}

/// Pointwise Frobenius norm of pixel `idx` in a planar tensor buffer.
#[inline]
pub(crate) fn tensor_pixel_norm(data: &[f64], len: usize, dims: usize, idx: usize) -> f64 {
    if dims == 1 {
        data[idx].abs()
    } else {
        let (a, b, c) = (data[idx], data[len + idx], data[2 * len + idx]);
        (a * a + b * b + 2.0 * c * c).sqrt()
    }
}

pub(crate) fn radon_vec_flat(shape: &GridShape, data: &[f64]) -> f64 {
    let len = shape.len();
    let sum: f64 = (0..len).map(|idx| vec_pixel_norm(data, len, shape.dims(), idx)).sum();
    shape.cell_volume() * sum
}

pub(crate) fn radon_tensor_flat(shape: &GridShape, data: &[f64]) -> f64 {
    let len = shape.len();
    let sum: f64 = (0..len).map(|idx| tensor_pixel_norm(data, len, shape.dims(), idx)).sum();
    shape.cell_volume() * sum
}

/// Discrete Radon norm of a vector field: `sum h^d |p(x)|`.
pub fn radon_norm_vec(p: &VectorField) -> f64 {
    radon_vec_flat(&p.shape, &p.data)
}

/// Discrete Radon norm of a symmetric tensor field with the pointwise
/// Frobenius norm `sqrt(t11² + t22² + 2 t12²)`.
pub fn radon_norm_tensor(q: &SymTensorField) -> f64 {
    radon_tensor_flat(&q.shape, &q.data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid8() -> GridShape {
        GridShape::plane(8, 8).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(GridShape::line(1).is_err());
        assert!(GridShape::new(1, 4, 2, 1.0).is_err());
        assert!(GridShape::new(3, 4, 4, 1.0).is_err());
        assert!(GridShape::plane(4, 4).unwrap().with_spacing(0.0).is_err());
        assert!(GridShape::plane(4, 4).unwrap().with_spacing(f64::NAN).is_err());
        let g = GridShape::plane(3, 5).unwrap();
        assert_eq!(g.len(), 15);
        assert_eq!(g.index(2, 1), 11);
    }

    #[test]
    fn centred_coordinates() {
        let g = GridShape::plane(5, 4).unwrap().with_spacing(0.5).unwrap();
        assert_eq!(g.x1(2), 0.0);
        assert_eq!(g.x1(0), -1.0);
        assert_eq!(g.x2(0), -0.75);
        assert_eq!(g.x2(3), 0.75);
    }

    #[test]
    fn rejects_non_finite() {
        let g = GridShape::line(3).unwrap();
        assert!(matches!(
            ScalarField::new(g, vec![0.0, f64::INFINITY, 1.0]),
            Err(Error::NonFinite(1))
        ));
        assert!(ScalarField::new(g, vec![0.0; 2]).is_err());
    }

    #[test]
    fn radon_norm_zero_and_pixel() {
        let g = grid8();
        assert_eq!(radon_norm_vec(&VectorField::zeros(g)), 0.0);
        assert_eq!(radon_norm_tensor(&SymTensorField::zeros(g)), 0.0);

        let mut data = vec![0.0; 2 * 64];
        data[10] = 3.0;
        data[64 + 10] = 4.0;
        assert_eq!(radon_norm_vec(&VectorField::new(g, data).unwrap()), 5.0);
    }

    #[test]
    fn radon_norm_tensor_pixels() {
        let g = grid8();
        let mut identity = vec![0.0; 3 * 64];
        identity[5] = 1.0;
        identity[64 + 5] = 1.0;
        let q = SymTensorField::new(g, identity).unwrap();
        assert!((radon_norm_tensor(&q) - 2f64.sqrt()).abs() < 1e-15);

        let mut off = vec![0.0; 3 * 64];
        off[128 + 7] = 1.0;
        let q = SymTensorField::new(g, off).unwrap();
        assert!((radon_norm_tensor(&q) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn radon_norm_uses_cell_volume() {
        let g = GridShape::plane(4, 4).unwrap().with_spacing(0.5).unwrap();
        let p = VectorField::new(g, vec![1.0; 32]).unwrap();
        assert!((radon_norm_vec(&p) - 16.0 * 0.25 * 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn tensor_inner_weights_off_diagonal() {
        let g = grid8();
        let mut a = vec![0.0; 3 * 64];
        a[128 + 3] = 1.0;
        let a = SymTensorField::new(g, a).unwrap();
        assert_eq!(inner(&a, &a.clone()).unwrap(), 2.0);
    }

    #[test]
    fn inner_shape_mismatch() {
        let a = ScalarField::zeros(grid8());
        let b = ScalarField::zeros(GridShape::plane(8, 7).unwrap());
        assert!(matches!(inner(&a, &b), Err(Error::ShapeMismatch(_))));
    }

    fn vec_field(vals: Vec<f64>) -> VectorField {
        VectorField::new(grid8(), vals).unwrap()
    }

    fn tensor_field(vals: Vec<f64>) -> SymTensorField {
        SymTensorField::new(grid8(), vals).unwrap()
    }

    proptest! {
        #[test]
        fn radon_vec_matches_resummation(vals in prop::collection::vec(-5.0f64..5.0, 128)) {
            let p = vec_field(vals.clone());
            let oracle: f64 = (0..64).map(|i| (vals[i] * vals[i] + vals[64 + i] * vals[64 + i]).sqrt()).sum();
            prop_assert!((radon_norm_vec(&p) - oracle).abs() <= 1e-12 * oracle.max(1.0));
        }

        #[test]
        fn radon_norms_are_seminorms(
            a in prop::collection::vec(-5.0f64..5.0, 192),
            b in prop::collection::vec(-5.0f64..5.0, 192),
            c in -3.0f64..3.0,
        ) {
            let (va, vb) = (vec_field(a[..128].to_vec()), vec_field(b[..128].to_vec()));
            let sum = VectorField::new(grid8(), a[..128].iter().zip(&b[..128]).map(|(x, y)| x + y).collect()).unwrap();
            let tol = 1e-12 * (radon_norm_vec(&va) + radon_norm_vec(&vb)).max(1.0);
            prop_assert!(radon_norm_vec(&sum) <= radon_norm_vec(&va) + radon_norm_vec(&vb) + tol);
            prop_assert!((radon_norm_vec(&va.scaled(c)) - c.abs() * radon_norm_vec(&va)).abs() <= tol * 3.0);

            let (ta, tb) = (tensor_field(a.clone()), tensor_field(b.clone()));
            let tsum = SymTensorField::new(grid8(), a.iter().zip(&b).map(|(x, y)| x + y).collect()).unwrap();
            let ttol = 1e-12 * (radon_norm_tensor(&ta) + radon_norm_tensor(&tb)).max(1.0);
            prop_assert!(radon_norm_tensor(&tsum) <= radon_norm_tensor(&ta) + radon_norm_tensor(&tb) + ttol);
        }

        #[test]
        fn inner_symmetric_and_bilinear(
            a in prop::collection::vec(-5.0f64..5.0, 192),
            b in prop::collection::vec(-5.0f64..5.0, 192),
            c in -3.0f64..3.0,
        ) {
            let (ta, tb) = (tensor_field(a.clone()), tensor_field(b.clone()));
            let ab = inner(&ta, &tb).unwrap();
            prop_assert!((ab - inner(&tb, &ta).unwrap()).abs() <= 1e-12 * ab.abs().max(1.0));
            let scaled = SymTensorField::new(grid8(), a.iter().map(|x| c * x).collect()).unwrap();
            prop_assert!((inner(&scaled, &tb).unwrap() - c * ab).abs() <= 1e-10 * ab.abs().max(1.0));
            prop_assert_eq!(inner(&ta, &SymTensorField::zeros(grid8())).unwrap(), 0.0);
        }

        #[test]
        fn radon_vec_zero_iff_all_zero(vals in prop::collection::vec(prop_oneof![Just(0.0), -1.0f64..1.0], 128)) {
            let p = vec_field(vals.clone());
            prop_assert_eq!(radon_norm_vec(&p) == 0.0, vals.iter().all(|v| *v == 0.0));
        }
    }
}
