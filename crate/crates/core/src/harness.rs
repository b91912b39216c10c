//! Test images, noise, and the parameter-sweep experiments.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::affine::{ker_e_distance, linear_regression, median_ker_e, eval_ker_e, KerEElement};
use crate::diffops::{grad, sym_grad};
use crate::error::{Error, Result};
use crate::fields::{radon_norm_tensor, radon_norm_vec, Field, GridShape, ScalarField, VectorField};
use crate::report::{config_hash, data_digest, ExperimentReport, ReportMeta};
use crate::solver::{solve_tgv2, solve_tv, SolveResult, SolverConfig};

/// Fractional pixel-centre coordinates in `[-1/2, 1/2]`, symmetric about 0.
fn frac(i: usize, n: usize) -> f64 {
    (i as f64 - (n as f64 - 1.0) / 2.0) / n as f64
}

fn square(n: usize) -> Result<GridShape> {
    GridShape::plane(n, n)
}

/// Indicator of a disk of radius `radius_frac * n` pixels centred at
/// `center_offset_frac * n` from the image centre.
pub fn gen_disk(n: usize, radius_frac: f64, center_offset_frac: [f64; 2]) -> Result<ScalarField> {
    if !(radius_frac > 0.0 && radius_frac < 0.5) {
        return Err(Error::param(format!("radius_frac must lie in (0, 1/2), got {radius_frac}")));
    }
    let [o1, o2] = center_offset_frac;
    if !(o1.abs() + radius_frac <= 0.5 && o2.abs() + radius_frac <= 0.5) {
        return Err(Error::param(format!(
            "disk of radius {radius_frac} at offset ({o1}, {o2}) leaves the domain"
        )));
    }
    let r2 = radius_frac * radius_frac;
    ScalarField::from_fn(square(n)?, |i, j| {
        let (x, y) = (frac(i, n) - o1, frac(j, n) - o2);
        if x * x + y * y <= r2 {
            1.0
        } else {
            0.0
        }
    })
}

/// Concentric centred squares: 0 outside, 1 in the middle band, 0.5 at the
/// centre.
pub fn gen_squares(n: usize) -> Result<ScalarField> {
    ScalarField::from_fn(square(n)?, |i, j| {
        let d = frac(i, n).abs().max(frac(j, n).abs());
        if d < 0.1875 {
            0.5
        } else if d < 0.375 {
            1.0
        } else {
            0.0
        }
    })
}

/// Affine ramp plus a smooth raised bump on a tilted ellipse.
pub fn gen_ramp_ellipse(n: usize) -> Result<ScalarField> {
    let (c1, c2) = (0.1, -0.05);
    let (a, b) = (0.22, 0.14);
    let (cos, sin) = (0.5f64.cos(), 0.5f64.sin());
    ScalarField::from_fn(square(n)?, |i, j| {
        let (x, y) = (frac(i, n), frac(j, n));
        let background = 0.5 + 0.3 * x + 0.2 * y;
        let (dx, dy) = (x - c1, y - c2);
        let (s, t) = ((cos * dx + sin * dy) / a, (-sin * dx + cos * dy) / b);
        let rho2 = s * s + t * t;
        let bump = if rho2 < 1.0 { 0.3 * (1.0 - rho2).powi(2) } else { 0.0 };
        background + bump
    })
}

/// Pixels of [`gen_ramp_ellipse`] outside the bump.
pub fn ramp_ellipse_background_mask(n: usize) -> Vec<bool> {
    let (c1, c2) = (0.1, -0.05);
    let (a, b) = (0.22, 0.14);
    let (cos, sin) = (0.5f64.cos(), 0.5f64.sin());
    let mut mask = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let (dx, dy) = (frac(i, n) - c1, frac(j, n) - c2);
            let (s, t) = ((cos * dx + sin * dy) / a, (-sin * dx + cos * dy) / b);
            mask.push(s * s + t * t >= 1.0);
        }
    }
    mask
}

/// `f + sigma * N(0, 1)` drawn pixel by pixel in storage order from a
/// ChaCha8 stream seeded with `seed`.
pub fn add_noise(f: &ScalarField, sigma: f64, seed: u64) -> Result<ScalarField> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::param(format!("noise sigma must be non-negative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(f.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::param(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = f.values().iter().map(|v| v + normal.sample(&mut rng)).collect();
    ScalarField::new(*f.shape(), values)
}

/// Solver settings shared by the experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSettings {
    pub tv: SolverConfig,
    pub tgv: SolverConfig,
    /// Noise seed the input was generated with, recorded in reports.
    pub seed: Option<u64>,
    /// Worker threads for independent sweep points.
    pub jobs: usize,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            tv: SolverConfig::default().with_adaptive(true),
            tgv: SolverConfig::default().with_step_ratio(1e-4).with_max_iter(50_000),
            seed: None,
            jobs: 1,
        }
    }
}

impl ExperimentSettings {
    fn meta(&self, name: &str, f: &ScalarField, params: &str) -> ReportMeta {
        let shape = f.shape();
        let canonical = format!(
            "{name};{params};grid={}x{}x{};spacing={:e};data={};seed={:?};tv[{}];tgv[{}]",
            shape.dims(),
            shape.n1(),
            shape.n2(),
            shape.spacing(),
            data_digest(f.values()),
            self.seed,
            self.tv.canonical(),
            self.tgv.canonical()
        );
        ReportMeta { n1: shape.n1(), n2: shape.n2(), seed: self.seed, config_hash: config_hash(&canonical) }
    }

    /// Evaluate `run` on every point, in order, on up to `jobs` threads.
    fn sweep<P, T, F>(&self, points: &[P], run: F) -> Result<Vec<T>>
    where
        P: Sync,
        T: Send,
        F: Fn(&P) -> Result<T> + Sync + Send,
    {
        if self.jobs <= 1 || points.len() <= 1 {
            return points.iter().map(&run).collect();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::param(format!("thread pool: {e}")))?;
        pool.install(|| points.par_iter().map(&run).collect())
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// `(||Du - w||_M, ||E w||_M)` of a TGV result.
pub fn tgv_parts(res: &SolveResult) -> (f64, f64) {
    let du = grad(res.u());
    let w = res.w();
    let jump = radon_norm_vec(&du.sub(w).expect("same grid"));
    (jump, radon_norm_tensor(&sym_grad(w)))
}

/// One of the two limits in the data-fitting sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum ToDataSweep {
    /// `alpha` fixed, `beta` decreasing.
    FixedAlpha { alpha: f64, betas: Vec<f64> },
    /// `beta` fixed, `alpha` decreasing.
    FixedBeta { beta: f64, alphas: Vec<f64> },
}

impl ToDataSweep {
    /// `(alpha, beta)` pairs ordered from the largest swept value down.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = match self {
            ToDataSweep::FixedAlpha { alpha, betas } => betas.iter().map(|b| (*alpha, *b)).collect(),
            ToDataSweep::FixedBeta { beta, alphas } => alphas.iter().map(|a| (*a, *beta)).collect(),
        };
        let key = |p: &(f64, f64)| match self {
            ToDataSweep::FixedAlpha { .. } => p.1,
            ToDataSweep::FixedBeta { .. } => p.0,
        };
        pts.sort_by(|a, b| key(b).total_cmp(&key(a)));
        pts
    }
}

/// L²-TGV² solutions along a sweep toward the data: distance to `f` and the
/// two regulariser parts per point.
pub fn experiment_to_data(f: &ScalarField, sweep: &ToDataSweep, settings: &ExperimentSettings) -> Result<ExperimentReport> {
    let points = sweep.points();
    let params = format!("{sweep:?}");
    let mut report = ExperimentReport::new("to-data", settings.meta("to-data", f, &params));
    let f_norm = f.lp_norm(2.0);
    let df_scale = radon_norm_vec(&grad(f));
    let results = settings.sweep(&points, |&(alpha, beta)| solve_tgv2(f, alpha, beta, &settings.tgv))?;
    for (&(alpha, beta), res) in points.iter().zip(&results) {
        let dist = f.sub(res.u())?.lp_norm(2.0);
        let (jump, ew) = tgv_parts(res);
        report.push(
            &[("alpha", alpha), ("beta", beta)],
            &[
                ("dist_f_u", dist),
                ("rel_dist_f_u", if f_norm > 0.0 { dist / f_norm } else { dist }),
                ("du_minus_w", jump),
                ("ew", ew),
                ("alpha_du_minus_w", alpha * jump),
                ("beta_ew", beta * ew),
                ("df_scale", df_scale),
                ("objective", res.objective),
                ("iterations", res.iterations as f64),
                ("converged", flag(res.converged)),
            ],
        )?;
    }
    Ok(report)
}

/// Median gap `d(g, 0) - min_r d(g, r)` over the discrete kernel of `E`.
pub fn median_gap(g: &VectorField) -> Result<f64> {
    let m = median_ker_e(g, 1e-12, 10_000)?;
    Ok((ker_e_distance(g, &KerEElement::default()) - m.objective).max(0.0))
}

/// TGV² against `alpha`-TV on the same data.
pub fn experiment_tv_equivalence(
    f: &ScalarField,
    alpha: f64,
    beta: f64,
    settings: &ExperimentSettings,
) -> Result<ExperimentReport> {
    let params = format!("alpha={alpha:e};beta={beta:e}");
    let mut report = ExperimentReport::new("tv-equivalence", settings.meta("tv-equivalence", f, &params));
    let tv = solve_tv(f, alpha, &settings.tv)?;
    let tgv = solve_tgv2(f, alpha, beta, &settings.tgv)?;
    let (_, ew) = tgv_parts(&tgv);
    report.push(
        &[("alpha", alpha), ("beta", beta)],
        &[
            ("dist_tgv_tv", tv.u().rel_l2_distance(tgv.u())?),
            ("ew", ew),
            ("median_gap", median_gap(&grad(tgv.u()))?),
            ("tv_objective", tv.objective),
            ("tgv_objective", tgv.objective),
            ("tv_iterations", tv.iterations as f64),
            ("tgv_iterations", tgv.iterations as f64),
            ("tv_converged", flag(tv.converged)),
            ("tgv_converged", flag(tgv.converged)),
        ],
    )?;
    Ok(report)
}

/// Distance of L²-TGV² solutions to the L² regression of the data along a
/// ladder of `(alpha, beta)` pairs, in the given order.
pub fn experiment_regression(
    f: &ScalarField,
    ladder: &[(f64, f64)],
    settings: &ExperimentSettings,
) -> Result<ExperimentReport> {
    let params = format!("ladder={ladder:?}");
    let mut report = ExperimentReport::new("regression", settings.meta("regression", f, &params));
    let fstar = linear_regression(f)?.evaluate(f.shape());
    let results = settings.sweep(ladder, |&(alpha, beta)| solve_tgv2(f, alpha, beta, &settings.tgv))?;
    for (&(alpha, beta), res) in ladder.iter().zip(&results) {
        let (jump, ew) = tgv_parts(res);
        report.push(
            &[("alpha", alpha), ("beta", beta)],
            &[
                ("dist_to_regression", fstar.rel_l2_distance(res.u())?),
                ("du_minus_w", jump),
                ("ew", ew),
                ("iterations", res.iterations as f64),
                ("converged", flag(res.converged)),
            ],
        )?;
    }
    Ok(report)
}

/// `(alpha, beta), (2 alpha, 2 beta), ...` with `rungs` entries.
pub fn doubling_ladder(alpha: f64, beta: f64, rungs: usize) -> Vec<(f64, f64)> {
    (0..rungs).map(|k| (alpha * 2f64.powi(k as i32), beta * 2f64.powi(k as i32))).collect()
}

/// TGV² at a large `beta / alpha` against plain TV: how far apart the two
/// solutions are and how close the optimal `w` is to the kernel of `E`.
pub fn experiment_affine_correction(
    f: &ScalarField,
    alpha: f64,
    beta: f64,
    settings: &ExperimentSettings,
) -> Result<ExperimentReport> {
    let params = format!("alpha={alpha:e};beta={beta:e}");
    let mut report = ExperimentReport::new("affine-correction", settings.meta("affine-correction", f, &params));
    let tv = solve_tv(f, alpha, &settings.tv)?;
    let tgv = solve_tgv2(f, alpha, beta, &settings.tgv)?;
    let (jump, ew) = tgv_parts(&tgv);
    let g = grad(tgv.u());
    let median = median_ker_e(&g, 1e-12, 10_000)?;
    let correction = radon_norm_vec(&eval_ker_e(&median.element, f.shape()));
    report.push(
        &[("alpha", alpha), ("beta", beta)],
        &[
            ("dist_tgv_tv", tv.u().rel_l2_distance(tgv.u())?),
            ("ew", ew),
            ("du_minus_w", jump),
            ("correction_norm", correction),
            ("median_gap", (ker_e_distance(&g, &KerEElement::default()) - median.objective).max(0.0)),
            ("tgv_iterations", tgv.iterations as f64),
            ("tgv_converged", flag(tgv.converged)),
        ],
    )?;
    Ok(report)
}
