//! Dual certificates and the jump-switch threshold for 1-D TGV².
//!
//! At a 1-D optimum of the L²-TGV² problem the residual satisfies
//! `f - u = (E D)^T q` and the first-order dual is `p = E^T q`. The dual `v`
//! is recovered from `f - u` alone by double summation starting at the left
//! end, so `v(a) = v'(a) = 0` hold by construction and `v(b)`, `v'(b)` are the
//! residuals to check.

use crate::diffops;
use crate::error::{Error, Result};
use crate::fields::{Field, GridShape, ScalarField, SymTensorField, VectorField};
use crate::report::{config_hash, data_digest, ExperimentReport, ReportMeta};
use crate::solver::{solve_tgv2, solve_tv2_1d, SolveResult, SolverConfig};

fn require_line(shape: &GridShape) -> Result<()> {
    if shape.dims() != 1 {
        return Err(Error::param("1-D input required"));
    }
    Ok(())
}

/// `v` with `(v[k] - 2 v[k-1] + v[k-2]) / h^2 = f[k] - u[k]` and
/// `v[-1] = v[-2] = 0`.
pub fn build_dual(f: &ScalarField, u: &ScalarField) -> Result<ScalarField> {
    f.shape().check_same(u.shape())?;
    require_line(f.shape())?;
    let h2 = f.shape().spacing().powi(2);
    let mut v = Vec::with_capacity(f.values().len());
    let (mut v1, mut v2) = (0.0, 0.0);
    for (fk, uk) in f.values().iter().zip(u.values()) {
        let vk = h2 * (fk - uk) + 2.0 * v1 - v2;
        v.push(vk);
        v2 = v1;
        v1 = vk;
    }
    ScalarField::new(*f.shape(), v)
}

/// Largest violation of `dual ∈ bound · Sgn(measure)`: the excess of
/// `|dual|` over `bound`, and `|dual - bound·sign(measure)|` wherever
/// `|measure| > tol`.
pub fn check_sgn_inclusion(measure: &[f64], dual: &[f64], bound: f64, tol: f64) -> f64 {
    measure
        .iter()
        .zip(dual)
        .map(|(&m, &d)| {
            let ball = (d.abs() - bound).max(0.0);
            let support = if m.abs() > tol { (d - bound * m.signum()).abs() } else { 0.0 };
            ball.max(support)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityReport {
    pub v: ScalarField,
    /// `[|v(a)|, |v(b)|, |v'(a)|, |v'(b)|]`
    pub boundary_residual: [f64; 4],
    pub c_alpha_violation: f64,
    pub c_beta_violation: f64,
    pub passed: bool,
}

/// Check the three optimality conditions for a 1-D TGV² pair `(u, w)`.
///
/// Residuals are judged relative to their natural scales: boundary values
/// against `max|v|` (at least 1), violations against `alpha` and `beta`.
/// `Du - w` counts as supported where it exceeds `tol * max|Du|`, and `E w`
/// where it exceeds `tol * max|Du| / h`.
pub fn certify(
    f: &ScalarField,
    u: &ScalarField,
    w: &VectorField,
    alpha: f64,
    beta: f64,
    tol: f64,
) -> Result<OptimalityReport> {
    f.shape().check_same(w.shape())?;
    let v = build_dual(f, u)?;
    let shape = *f.shape();
    let n = shape.len();
    let h = shape.spacing();
    let vv = v.values();
    let boundary_residual = [0.0, vv[n - 2].abs(), 0.0, (vv[n - 1] - vv[n - 2]).abs() / h];

    // q lives on the n - 2 second-difference slots
    let mut q = vv.to_vec();
    q[n - 2] = 0.0;
    q[n - 1] = 0.0;
    let q = SymTensorField::new(shape, q)?;
    let p = diffops::div_tensor(&q).scaled(-1.0);

    let du = diffops::grad(u);
    let measure_a: Vec<f64> = du.data().iter().zip(w.data()).map(|(a, b)| a - b).collect();
    let ew = diffops::sym_grad(w);
    let measure_b = &ew.data()[..n - 2];

    // support is judged against the size of Du (and Du / h for E w), so a
    // measure that is numerically zero has no support
    let max_abs = |m: &[f64]| m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let scale = max_abs(du.data()).max(max_abs(&measure_a));
    let c_alpha_violation = check_sgn_inclusion(&measure_a[..n - 1], &p.data()[..n - 1], alpha, tol * scale);
    let c_beta_violation =
        check_sgn_inclusion(measure_b, &q.data()[..n - 2], beta, tol * scale.max(max_abs(measure_b) * h) / h);

    let vscale = vv.iter().fold(1.0f64, |a, x| a.max(x.abs()));
    let passed = boundary_residual.iter().all(|r| *r <= tol * vscale)
        && c_alpha_violation <= tol * alpha
        && c_beta_violation <= tol * beta;
    Ok(OptimalityReport { v, boundary_residual, c_alpha_violation, c_beta_violation, passed })
}

/// Outcome of the threshold search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdStatus {
    Found,
    /// The upper end of the bracket still has no jump part.
    AllQualify,
    /// Even the lower end has a jump part.
    NoneQualify,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaStarConfig {
    pub beta_lo: f64,
    pub beta_hi: f64,
    pub steps: usize,
    /// Jump detection: `max|Du - w|` at or below this counts as no jump.
    pub detect_tol: f64,
}

impl Default for BetaStarConfig {
    fn default() -> Self {
        Self { beta_lo: 1e-6, beta_hi: 1.0, steps: 40, detect_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaStar {
    /// Largest sampled β without a jump part; NaN unless `status` is `Found`.
    pub beta_star: f64,
    pub status: ThresholdStatus,
    pub table: ExperimentReport,
}

/// `max|Du - w|` over the gradient slots.
pub fn max_jump(result: &SolveResult) -> f64 {
    let du = diffops::grad(result.u());
    du.data().iter().zip(result.w().data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

struct Probe {
    beta: f64,
    jump: f64,
    dist: f64,
}

fn probe(f: &ScalarField, alpha: f64, beta: f64, cfg: &SolverConfig) -> Result<Probe> {
    let tgv = solve_tgv2(f, alpha, beta, cfg)?;
    let tv2 = solve_tv2_1d(f, beta, cfg)?;
    Ok(Probe { beta, jump: max_jump(&tgv), dist: tgv.u().rel_l2_distance(tv2.u())? })
}

/// Log-space bisection for the largest β at which the 1-D L²-TGV² solution
/// has no jump part (`Du = w`).
pub fn find_beta_star(f: &ScalarField, alpha: f64, cfg: &SolverConfig) -> Result<BetaStar> {
    find_beta_star_with(f, alpha, cfg, &BetaStarConfig::default())
}

pub fn find_beta_star_with(
    f: &ScalarField,
    alpha: f64,
    cfg: &SolverConfig,
    search: &BetaStarConfig,
) -> Result<BetaStar> {
    require_line(f.shape())?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::param(format!("alpha must be positive, got {alpha}")));
    }
    if !(search.beta_lo > 0.0 && search.beta_lo < search.beta_hi && search.beta_hi.is_finite()) {
        return Err(Error::param("beta bracket must satisfy 0 < lo < hi"));
    }
    let qualifies = |p: &Probe| p.jump <= search.detect_tol;
    let mut probes = Vec::new();
    let lo = probe(f, alpha, search.beta_lo, cfg)?;
    let hi = probe(f, alpha, search.beta_hi, cfg)?;
    let status = match (qualifies(&lo), qualifies(&hi)) {
        (true, false) => ThresholdStatus::Found,
        (true, true) => ThresholdStatus::AllQualify,
        (false, _) => ThresholdStatus::NoneQualify,
    };
    let mut beta_star = f64::NAN;
    if status == ThresholdStatus::Found {
        let (mut a, mut b) = (search.beta_lo.ln(), search.beta_hi.ln());
        for _ in 0..search.steps {
            let mid = 0.5 * (a + b);
            let pr = probe(f, alpha, mid.exp(), cfg)?;
            if qualifies(&pr) {
                a = mid;
            } else {
                b = mid;
            }
            probes.push(pr);
        }
        beta_star = a.exp();
    }
    probes.push(lo);
    probes.push(hi);
    probes.sort_by(|x, y| x.beta.total_cmp(&y.beta));

    let shape = f.shape();
    let canonical = format!(
        "beta_star;alpha={alpha:e};lo={:e};hi={:e};steps={};detect={:e};spacing={:e};data={};{}",
        search.beta_lo,
        search.beta_hi,
        search.steps,
        search.detect_tol,
        shape.spacing(),
        data_digest(f.values()),
        cfg.canonical()
    );
    let mut table = ExperimentReport::new(
        "beta-star",
        ReportMeta { n1: shape.n1(), n2: shape.n2(), seed: None, config_hash: config_hash(&canonical) },
    );
    for p in &probes {
        table.push(&[("beta", p.beta)], &[("max_abs_Du_minus_w", p.jump), ("dist_to_tv2", p.dist)])?;
    }
    Ok(BetaStar { beta_star, status, table })
}
