//! First-order primal-dual solvers for the TV, TGV², second-order TV and
//! L¹-symmetrised-gradient problems.
//!
//! Every problem is written as `min_x G(x) + F(Kx)` with `F` a sum of
//! pointwise norms, and solved through its saddle form
//! `min_x max_y G(x) + <Kx, y> - F*(y)`:
//!
//! ```text
//! y <- proj_balls(y + sigma K xbar)
//! x_new <- prox_{tau G}(x - tau K^T y)
//! xbar <- 2 x_new - x
//! ```
//!
//! with `tau * sigma * |K|^2 < 1`. Inside the iteration all sums are
//! unweighted; reported energies carry the cell volume `spacing^dims`.

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Mutex, OnceLock};

use crate::diffops::{self, dot, norm2, LinearOp, OpNormEstimate, OperatorKind};
use crate::error::{Error, Result};
use crate::fields::{
    radon_tensor_flat, radon_vec_flat, tensor_pixel_norm, vec_pixel_norm, Field, GridShape,
    ScalarField, SymTensorField, VectorField,
};

/// Fidelity exponent of `(1/p) |f - u|_p^p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fidelity {
    L1,
    L2,
}

impl Fidelity {
    pub fn from_exponent(p: u32) -> Result<Self> {
        match p {
            1 => Ok(Fidelity::L1),
            2 => Ok(Fidelity::L2),
            _ => Err(Error::param(format!("fidelity exponent must be 1 or 2, got {p}"))),
        }
    }

    pub fn exponent(self) -> u32 {
        match self {
            Fidelity::L1 => 1,
            Fidelity::L2 => 2,
        }
    }
}

/// Stopping metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    /// Primal-dual gap relative to the current energy. The denominator is
    /// floored at 1e-6 of the energy of the all-zero primal, so problems whose
    /// optimal value is zero still terminate.
    PrimalDualGap,
    /// Relative change of the primal iterate over a 10-iteration window.
    /// Duals are left out: they are typically non-unique and keep drifting
    /// along the optimal set after the primal has settled.
    RelativeIterateChange,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Primal step; derived from the operator norm when `None`.
    pub tau: Option<f64>,
    /// Dual step; derived from the operator norm when `None`.
    pub sigma: Option<f64>,
    /// `tau / sigma` when the steps are derived.
    pub step_ratio: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub metric: Metric,
    pub p: Fidelity,
    /// Record a checkpoint every this many iterations (0 disables).
    pub log_every: usize,
    /// Rebalance `tau / sigma` from the primal and dual residuals while
    /// keeping `tau * sigma` fixed.
    pub adaptive: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tau: None,
            sigma: None,
            step_ratio: 1.0,
            max_iter: 20_000,
            tol: 1e-8,
            metric: Metric::RelativeIterateChange,
            p: Fidelity::L2,
            log_every: 100,
            adaptive: false,
        }
    }
}

impl SolverConfig {
    /// Settings for [`eval_tgv`]. The minimiser in `w` is not unique, so the
    /// stop is on the duality gap, which certifies the value itself. Without
    /// a strongly convex term the gap closes like `1/k`, hence the looser tol.
    pub fn eval_tgv_defaults() -> Self {
        Self::default()
            .with_metric(Metric::PrimalDualGap)
            .with_step_ratio(1e-3)
            .with_tol(1e-6)
            .with_max_iter(200_000)
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_metric(mut self, metric: Metric) -> Self {
        self.metric = metric;
        self
    }

    pub fn with_fidelity(mut self, p: Fidelity) -> Self {
        self.p = p;
        self
    }

    pub fn with_step_ratio(mut self, ratio: f64) -> Self {
        self.step_ratio = ratio;
        self
    }

    pub fn with_adaptive(mut self, adaptive: bool) -> Self {
        self.adaptive = adaptive;
        self
    }

    pub fn with_steps(mut self, tau: f64, sigma: f64) -> Self {
        self.tau = Some(tau);
        self.sigma = Some(sigma);
        self
    }

    /// Stable `key=value` rendering, used for report hashing.
    pub fn canonical(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("auto".to_string(), |x| format!("{x:e}"));
        format!(
            "tau={};sigma={};step_ratio={:e};max_iter={};tol={:e};metric={:?};p={};log_every={};adaptive={}",
            opt(self.tau),
            opt(self.sigma),
            self.step_ratio,
            self.max_iter,
            self.tol,
            self.metric,
            self.p.exponent(),
            self.log_every,
            self.adaptive
        )
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol >= 0.0) {
            return Err(Error::param(format!("tol must be non-negative, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::param("max_iter must be positive"));
        }
        if !(self.step_ratio > 0.0 && self.step_ratio.is_finite()) {
            return Err(Error::param(format!("step_ratio must be positive, got {}", self.step_ratio)));
        }
        for (name, v) in [("tau", self.tau), ("sigma", self.sigma)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::param(format!("{name} must be positive, got {v}")));
                }
            }
        }
        Ok(())
    }

    /// Resolve `(tau, sigma)` for an operator of norm bound `norm`.
    fn steps(&self, norm: f64) -> Result<(f64, f64)> {
        let budget = 0.99 / (norm * norm);
        let (tau, sigma) = match (self.tau, self.sigma) {
            (Some(t), Some(s)) => (t, s),
            (Some(t), None) => (t, budget / t),
            (None, Some(s)) => (budget / s, s),
            (None, None) => {
                let t = (budget * self.step_ratio).sqrt();
                (t, budget / t)
            }
        };
        if tau * sigma * norm * norm >= 1.0 {
            return Err(Error::param(format!(
                "step sizes violate tau*sigma*|K|^2 < 1: tau={tau}, sigma={sigma}, |K|={norm}"
            )));
        }
        Ok((tau, sigma))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Checkpoint {
    pub iteration: usize,
    pub energy: f64,
    pub metric: f64,
}

/// Primal and dual variables of a saddle problem; absent entries do not
/// belong to the problem.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SaddleState {
    pub u: Option<ScalarField>,
    pub w: Option<VectorField>,
    /// Dual of the first-order term.
    pub p: Option<VectorField>,
    /// Dual of the symmetrised-gradient (or second-order) term.
    pub q: Option<SymTensorField>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub state: SaddleState,
    /// Primal energy of the returned iterate.
    pub objective: f64,
    pub metric_history: Vec<Checkpoint>,
    pub iterations: usize,
    pub converged: bool,
    /// Last evaluated stopping metric.
    pub final_metric: f64,
    pub tau: f64,
    pub sigma: f64,
}

impl SolveResult {
    /// Denoised image. Panics for [`solve_l1_sym`] results, which have none.
    pub fn u(&self) -> &ScalarField {
        self.state.u.as_ref().expect("problem has no scalar primal variable")
    }

    /// Vector primal variable. Panics for pure TV results.
    pub fn w(&self) -> &VectorField {
        self.state.w.as_ref().expect("problem has no vector primal variable")
    }
}

/// A concrete variational problem.
#[derive(Debug, Clone, Copy)]
pub enum Problem<'a> {
    /// `(1/p)|f - u|_p^p + alpha |Du|_M`
    Tv { f: &'a ScalarField, alpha: f64, p: Fidelity },
    /// `(1/p)|f - u|_p^p + alpha |Du - w|_M + beta |E w|_M`
    Tgv2 { f: &'a ScalarField, alpha: f64, beta: f64, p: Fidelity },
    /// `(1/2)|f - u|^2 + beta |D²u|_M`, 1-D only.
    Tv2 { f: &'a ScalarField, beta: f64 },
    /// `|g - w|_L1 + lambda |E w|_M`
    L1Sym { g: &'a VectorField, lambda: f64 },
}

impl<'a> Problem<'a> {
    pub fn shape(&self) -> GridShape {
        match self {
            Problem::Tv { f, .. } | Problem::Tgv2 { f, .. } | Problem::Tv2 { f, .. } => *f.shape(),
            Problem::L1Sym { g, .. } => *g.shape(),
        }
    }

    fn operator(&self) -> OperatorKind {
        match self {
            Problem::Tv { .. } => OperatorKind::Gradient,
            Problem::Tgv2 { .. } => OperatorKind::Tgv,
            Problem::Tv2 { .. } => OperatorKind::SecondOrder,
            Problem::L1Sym { .. } => OperatorKind::SymGradient,
        }
    }

    fn validate(&self) -> Result<()> {
        let shape = self.shape();
        if shape.n1() < 2 || (shape.dims() == 2 && shape.n2() < 2) {
            return Err(Error::InvalidGrid(format!(
                "solvers need at least 2 pixels per axis, got {}x{}",
                shape.n1(),
                shape.n2()
            )));
        }
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(format!("{name} must be positive and finite, got {v}")))
            }
        };
        match *self {
            Problem::Tv { alpha, .. } => positive("alpha", alpha),
            Problem::Tgv2 { alpha, beta, .. } => {
                positive("alpha", alpha)?;
                positive("beta", beta)
            }
            Problem::Tv2 { beta, .. } => {
                if shape.dims() != 1 {
                    return Err(Error::param("second-order TV solver is 1-D only"));
                }
                positive("beta", beta)
            }
            Problem::L1Sym { lambda, .. } => positive("lambda", lambda),
        }
    }

    /// The all-zero primal/dual state.
    pub fn zero_state(&self) -> SaddleState {
        let shape = self.shape();
        match self {
            Problem::Tv { .. } => SaddleState {
                u: Some(ScalarField::zeros(shape)),
                p: Some(VectorField::zeros(shape)),
                ..Default::default()
            },
            Problem::Tgv2 { .. } => SaddleState {
                u: Some(ScalarField::zeros(shape)),
                w: Some(VectorField::zeros(shape)),
                p: Some(VectorField::zeros(shape)),
                q: Some(SymTensorField::zeros(shape)),
            },
            Problem::Tv2 { .. } => SaddleState {
                u: Some(ScalarField::zeros(shape)),
                q: Some(SymTensorField::zeros(shape)),
                ..Default::default()
            },
            Problem::L1Sym { .. } => SaddleState {
                w: Some(VectorField::zeros(shape)),
                q: Some(SymTensorField::zeros(shape)),
                ..Default::default()
            },
        }
    }

    /// Primal energy of `state`, spacing-weighted.
    pub fn energy(&self, state: &SaddleState) -> Result<f64> {
        let x = self.pack_primal(state)?;
        let mut engine = Engine::new(*self);
        Ok(engine.energy(&x))
    }

    fn pack_primal(&self, state: &SaddleState) -> Result<Vec<f64>> {
        let shape = self.shape();
        let need_u = !matches!(self, Problem::L1Sym { .. });
        let need_w = matches!(self, Problem::Tgv2 { .. } | Problem::L1Sym { .. });
        let mut x = Vec::new();
        if need_u {
            let u = state.u.as_ref().ok_or_else(|| Error::param("state is missing u"))?;
            u.shape().check_same(&shape)?;
            x.extend_from_slice(u.values());
        }
        if need_w {
            let w = state.w.as_ref().ok_or_else(|| Error::param("state is missing w"))?;
            w.shape().check_same(&shape)?;
            x.extend_from_slice(w.data());
        }
        Ok(x)
    }

    fn pack_dual(&self, state: &SaddleState) -> Result<Vec<f64>> {
        let shape = self.shape();
        let need_p = matches!(self, Problem::Tv { .. } | Problem::Tgv2 { .. });
        let need_q = !matches!(self, Problem::Tv { .. });
        let mut y = Vec::new();
        if need_p {
            let p = state.p.as_ref().ok_or_else(|| Error::param("state is missing p"))?;
            p.shape().check_same(&shape)?;
            y.extend_from_slice(p.data());
        }
        if need_q {
            let q = state.q.as_ref().ok_or_else(|| Error::param("state is missing q"))?;
            q.shape().check_same(&shape)?;
            y.extend_from_slice(q.data());
        }
        Ok(y)
    }

    fn unpack(&self, x: Vec<f64>, y: Vec<f64>) -> SaddleState {
        let shape = self.shape();
        let n = shape.len();
        let dn = shape.dims() * n;
        match self {
            Problem::Tv { .. } => SaddleState {
                u: Some(ScalarField::from_raw(shape, x)),
                p: Some(VectorField::from_raw(shape, y)),
                ..Default::default()
            },
            Problem::Tgv2 { .. } => {
                let mut x = x;
                let w = x.split_off(n);
                let mut y = y;
                let q = y.split_off(dn);
                SaddleState {
                    u: Some(ScalarField::from_raw(shape, x)),
                    w: Some(VectorField::from_raw(shape, w)),
                    p: Some(VectorField::from_raw(shape, y)),
                    q: Some(SymTensorField::from_raw(shape, q)),
                }
            }
            Problem::Tv2 { .. } => SaddleState {
                u: Some(ScalarField::from_raw(shape, x)),
                q: Some(SymTensorField::from_raw(shape, y)),
                ..Default::default()
            },
            Problem::L1Sym { .. } => SaddleState {
                w: Some(VectorField::from_raw(shape, x)),
                q: Some(SymTensorField::from_raw(shape, y)),
                ..Default::default()
            },
        }
    }

    /// Starting point: `u = f`, `w = 0` (TGV) or `w = g` (L¹ problem), zero
    /// duals.
    fn initial(&self) -> (Vec<f64>, Vec<f64>) {
        let shape = self.shape();
        let kind = self.operator();
        let mut x = vec![0.0; kind.input_len(&shape)];
        let y = vec![0.0; kind.output_len(&shape)];
        match self {
            Problem::Tv { f, .. } | Problem::Tgv2 { f, .. } | Problem::Tv2 { f, .. } => {
                x[..shape.len()].copy_from_slice(f.values());
            }
            Problem::L1Sym { g, .. } => x.copy_from_slice(g.data()),
        }
        (x, y)
    }
}

fn norm_cache() -> &'static Mutex<HashMap<(OperatorKind, usize, usize, usize, u64), OpNormEstimate>> {
    static CACHE: OnceLock<Mutex<HashMap<(OperatorKind, usize, usize, usize, u64), OpNormEstimate>>> =
        OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Operator-norm bound used for step sizes, memoised per operator and grid.
pub fn step_norm(kind: OperatorKind, shape: &GridShape) -> f64 {
    let key = (kind, shape.dims(), shape.n1(), shape.n2(), shape.spacing().to_bits());
    let est = {
        let cache = norm_cache().lock().unwrap();
        cache.get(&key).copied()
    };
    let est = est.unwrap_or_else(|| {
        let e = diffops::estimate_op_norm_of(kind, shape, 200);
        norm_cache().lock().unwrap().insert(key, e);
        e
    });
    est.step_bound(kind.analytic_bound(shape))
}

#[inline]
fn shrink_toward(value: f64, target: f64, t: f64) -> f64 {
    let d = value - target;
    if d > t {
        value - t
    } else if d < -t {
        value + t
    } else {
        target
    }
}

/// Flat-vector machinery shared by all problems.
struct Engine<'a> {
    problem: Problem<'a>,
    shape: GridShape,
    op: LinearOp,
    scratch_out: Vec<f64>,
    scratch_in: Vec<f64>,
}

impl<'a> Engine<'a> {
    fn new(problem: Problem<'a>) -> Self {
        let shape = problem.shape();
        let kind = problem.operator();
        Self {
            problem,
            shape,
            op: LinearOp::new(kind, shape),
            scratch_out: vec![0.0; kind.output_len(&shape)],
            scratch_in: vec![0.0; kind.input_len(&shape)],
        }
    }

    fn n(&self) -> usize {
        self.shape.len()
    }

    fn dn(&self) -> usize {
        self.shape.dims() * self.shape.len()
    }

    /// `prox_{tau G}` in place.
    fn prox_primal(&self, x: &mut [f64], tau: f64) {
        let n = self.n();
        match self.problem {
            Problem::Tv { f, p, .. } | Problem::Tgv2 { f, p, .. } => {
                prox_fidelity(&mut x[..n], f.values(), p, tau)
            }
            Problem::Tv2 { f, .. } => prox_fidelity(x, f.values(), Fidelity::L2, tau),
            Problem::L1Sym { g, .. } => {
                let gd = g.data();
                let dims = self.shape.dims();
                for idx in 0..n {
                    if dims == 1 {
                        x[idx] = shrink_toward(x[idx], gd[idx], tau);
                    } else {
                        let (d1, d2) = (x[idx] - gd[idx], x[n + idx] - gd[n + idx]);
                        let m = d1.hypot(d2);
                        let s = if m > tau { 1.0 - tau / m } else { 0.0 };
                        x[idx] = gd[idx] + s * d1;
                        x[n + idx] = gd[n + idx] + s * d2;
                    }
                }
            }
        }
    }

    /// Projection onto the pointwise dual balls.
    fn project_dual(&self, y: &mut [f64]) {
        let dn = self.dn();
        match self.problem {
            Problem::Tv { alpha, .. } => project_vec_ball(&self.shape, y, alpha),
            Problem::Tgv2 { alpha, beta, .. } => {
                let (p, q) = y.split_at_mut(dn);
                project_vec_ball(&self.shape, p, alpha);
                project_tensor_ball(&self.shape, q, beta);
            }
            Problem::Tv2 { beta, .. } => project_tensor_ball(&self.shape, y, beta),
            Problem::L1Sym { lambda, .. } => project_tensor_ball(&self.shape, y, lambda),
        }
    }

    /// Spacing-weighted primal energy.
    fn energy(&mut self, x: &[f64]) -> f64 {
        let shape = self.shape;
        let vol = shape.cell_volume();
        let n = self.n();
        let dn = self.dn();
        self.op.apply(x, &mut self.scratch_out);
        let kx = &self.scratch_out;
        match self.problem {
            Problem::Tv { f, alpha, p } => {
                fidelity_energy(&x[..n], f.values(), p) * vol + alpha * radon_vec_flat(&shape, kx)
            }
            Problem::Tgv2 { f, alpha, beta, p } => {
                fidelity_energy(&x[..n], f.values(), p) * vol
                    + alpha * radon_vec_flat(&shape, &kx[..dn])
                    + beta * radon_tensor_flat(&shape, &kx[dn..])
            }
            Problem::Tv2 { f, beta } => {
                fidelity_energy(x, f.values(), Fidelity::L2) * vol + beta * radon_tensor_flat(&shape, kx)
            }
            Problem::L1Sym { g, lambda } => {
                let diff: Vec<f64> = x.iter().zip(g.data()).map(|(a, b)| a - b).collect();
                radon_vec_flat(&shape, &diff) + lambda * radon_tensor_flat(&shape, kx)
            }
        }
    }

    /// Primal-dual gap at `(x, y)`; the dual is first made feasible.
    fn gap(&mut self, x: &[f64], y: &[f64]) -> (f64, bool) {
        let primal = self.energy(x);
        let (dual, projected) = self.dual_value(y);
        ((primal - dual).max(0.0), projected)
    }

    /// Dual objective at a feasible modification of `y`, spacing-weighted.
    fn dual_value(&mut self, y: &[f64]) -> (f64, bool) {
        let shape = self.shape;
        let vol = shape.cell_volume();
        let n = self.n();
        let dn = self.dn();
        let mut y = y.to_vec();
        let mut projected = false;
        // bring y into its balls
        let before = y.clone();
        self.project_dual(&mut y);
        if before != y {
            projected = true;
        }
        match self.problem {
            Problem::Tv { f, p, .. } => {
                let mut div_p = vec![0.0; n];
                diffops::div_vec_into(&shape, &y, &mut div_p);
                (scalar_dual(f.values(), &mut div_p, p, &mut projected) * vol, projected)
            }
            Problem::Tgv2 { f, alpha, p, .. } => {
                // feasibility in w forces p = -div q
                let q = &y[dn..];
                let mut pq = vec![0.0; dn];
                diffops::div_tensor_into(&shape, q, &mut pq);
                pq.iter_mut().for_each(|v| *v = -*v);
                let max_p = (0..n).map(|idx| vec_pixel_norm(&pq, n, shape.dims(), idx)).fold(0.0, f64::max);
                if max_p > alpha {
                    let s = alpha / max_p;
                    pq.iter_mut().for_each(|v| *v *= s);
                    projected = true;
                }
                let mut div_p = vec![0.0; n];
                diffops::div_vec_into(&shape, &pq, &mut div_p);
                (scalar_dual(f.values(), &mut div_p, p, &mut projected) * vol, projected)
            }
            Problem::Tv2 { f, .. } => {
                // u = f - K^T q
                self.op.apply_adjoint(&y, &mut self.scratch_in);
                let mut c: Vec<f64> = self.scratch_in.iter().map(|v| -v).collect();
                (scalar_dual(f.values(), &mut c, Fidelity::L2, &mut projected) * vol, projected)
            }
            Problem::L1Sym { g, .. } => {
                let mut d = vec![0.0; dn];
                diffops::div_tensor_into(&shape, &y, &mut d);
                let max_d = (0..n).map(|idx| vec_pixel_norm(&d, n, shape.dims(), idx)).fold(0.0, f64::max);
                if max_d > 1.0 {
                    d.iter_mut().for_each(|v| *v /= max_d);
                    projected = true;
                }
                (-dot(g.data(), &d) * vol, projected)
            }
        }
    }
}

/// Dual value `min_u fid(u) - <u, c>` where `c = div p` is the scalar
/// coupling; rescales `c` into the unit ball for the L¹ case.
fn scalar_dual(f: &[f64], c: &mut [f64], p: Fidelity, projected: &mut bool) -> f64 {
    match p {
        Fidelity::L2 => {
            // min_u 1/2|u-f|^2 - <u,c>  at u = f + c
            let ff = dot(f, f);
            let fc: f64 = f.iter().zip(c.iter()).map(|(a, b)| (a + b) * (a + b)).sum();
            0.5 * ff - 0.5 * fc
        }
        Fidelity::L1 => {
            let m = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if m > 1.0 {
                c.iter_mut().for_each(|v| *v /= m);
                *projected = true;
            }
            dot(f, c)
        }
    }
}

fn fidelity_energy(u: &[f64], f: &[f64], p: Fidelity) -> f64 {
    match p {
        Fidelity::L1 => u.iter().zip(f).map(|(a, b)| (a - b).abs()).sum(),
        Fidelity::L2 => 0.5 * u.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
    }
}

fn prox_fidelity(u: &mut [f64], f: &[f64], p: Fidelity, tau: f64) {
    match p {
        Fidelity::L2 => {
            let inv = 1.0 / (1.0 + tau);
            for (ui, fi) in u.iter_mut().zip(f) {
                *ui = (*ui + tau * fi) * inv;
            }
        }
        Fidelity::L1 => {
            for (ui, fi) in u.iter_mut().zip(f) {
                *ui = shrink_toward(*ui, *fi, tau);
            }
        }
    }
}

fn project_vec_ball(shape: &GridShape, p: &mut [f64], radius: f64) {
    let n = shape.len();
    if shape.dims() == 1 {
        for v in p.iter_mut() {
            *v = v.clamp(-radius, radius);
        }
        return;
    }
    for idx in 0..n {
        let m = vec_pixel_norm(p, n, 2, idx);
        if m > radius {
            let s = radius / m;
            p[idx] *= s;
            p[n + idx] *= s;
        }
    }
}

fn project_tensor_ball(shape: &GridShape, q: &mut [f64], radius: f64) {
    let n = shape.len();
    if shape.dims() == 1 {
        for v in q.iter_mut() {
            *v = v.clamp(-radius, radius);
        }
        return;
    }
    for idx in 0..n {
        let m = tensor_pixel_norm(q, n, 2, idx);
        if m > radius {
            let s = radius / m;
            q[idx] *= s;
            q[n + idx] *= s;
            q[2 * n + idx] *= s;
        }
    }
}

fn rel_change(cur: &[f64], old: &[f64]) -> f64 {
    let diff = cur.iter().zip(old).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let base = norm2(cur);
    if base > 0.0 {
        diff / base
    } else {
        diff
    }
}

/// Residual balancing for the step sizes: `tau * sigma` stays fixed while
/// `tau / sigma` moves toward equal primal and dual residuals. Each change
/// shrinks the adaptation strength, so the steps settle.
struct Balancer {
    strength: f64,
}

impl Default for Balancer {
    fn default() -> Self {
        Self { strength: 0.5 }
    }
}

impl Balancer {
    const DECAY: f64 = 0.95;
    const BAND: f64 = 1.5;

    fn update(&mut self, primal_res: f64, dual_res: f64, tau: &mut f64, sigma: &mut f64) {
        let a = self.strength;
        if primal_res > Self::BAND * dual_res {
            *tau /= 1.0 - a;
            *sigma *= 1.0 - a;
            self.strength *= Self::DECAY;
        } else if primal_res * Self::BAND < dual_res {
            *tau *= 1.0 - a;
            *sigma /= 1.0 - a;
            self.strength *= Self::DECAY;
        }
    }
}

/// Optional warm start for [`solve`].
#[derive(Debug, Clone, Copy, Default)]
pub struct WarmStart<'s> {
    pub state: Option<&'s SaddleState>,
}

/// Run the primal-dual iteration on `problem`.
pub fn solve(problem: Problem<'_>, cfg: &SolverConfig) -> Result<SolveResult> {
    solve_from(problem, cfg, WarmStart::default())
}

pub fn solve_from(problem: Problem<'_>, cfg: &SolverConfig, warm: WarmStart<'_>) -> Result<SolveResult> {
    problem.validate()?;
    cfg.validate()?;
    if cfg.metric == Metric::PrimalDualGap
        && matches!(problem, Problem::Tv { p: Fidelity::L1, .. } | Problem::Tgv2 { p: Fidelity::L1, .. })
    {
        return Err(Error::param("the gap metric is available for p = 2 problems only"));
    }
    let shape = problem.shape();
    let kind = problem.operator();
    let (mut tau, mut sigma) = cfg.steps(step_norm(kind, &shape))?;

    let (mut x, mut y) = match warm.state {
        Some(s) => (problem.pack_primal(s)?, problem.pack_dual(s)?),
        None => problem.initial(),
    };
    let mut engine = Engine::new(problem);
    let mut x_old = x.clone();
    let mut y_old = y.clone();
    // K x_k and K xbar_k; xbar_k = 2 x_k - x_{k-1}
    let mut kx = vec![0.0; y.len()];
    engine.op.apply(&x, &mut kx);
    let mut kxbar = kx.clone();
    let mut kx_new = vec![0.0; y.len()];
    let mut kty = vec![0.0; x.len()];
    let mut snap_x = x.clone();
    let mut adapt = cfg.adaptive.then(Balancer::default);
    let gap_floor = match cfg.metric {
        Metric::PrimalDualGap => 1e-6 * engine.energy(&vec![0.0; x.len()]),
        Metric::RelativeIterateChange => 0.0,
    };

    let mut history = Vec::new();
    let mut metric = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=cfg.max_iter {
        iterations = it;
        y_old.copy_from_slice(&y);
        for (yi, ki) in y.iter_mut().zip(&kxbar) {
            *yi += sigma * ki;
        }
        engine.project_dual(&mut y);

        engine.op.apply_adjoint(&y, &mut kty);
        x_old.copy_from_slice(&x);
        for (xi, gi) in x.iter_mut().zip(&kty) {
            *xi -= tau * gi;
        }
        engine.prox_primal(&mut x, tau);
        engine.op.apply(&x, &mut kx_new);

        if let Some(b) = adapt.as_mut() {
            // primal residual (x_k - x_{k+1}) / tau; dual residual
            // (y_{k+1} - y_k) / sigma - K (xbar_k - x_{k+1})
            let pr = x.iter().zip(&x_old).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() / tau;
            let dr = y
                .iter()
                .zip(&y_old)
                .zip(kxbar.iter().zip(&kx_new))
                .map(|((yn, yo), (kb, kn))| {
                    let r = (yn - yo) / sigma - (kb - kn);
                    r * r
                })
                .sum::<f64>()
                .sqrt();
            b.update(pr, dr, &mut tau, &mut sigma);
        }
        for ((b, kn), ko) in kxbar.iter_mut().zip(&kx_new).zip(&kx) {
            *b = 2.0 * kn - ko;
        }
        std::mem::swap(&mut kx, &mut kx_new);

        if it % 10 == 0 {
            metric = match cfg.metric {
                Metric::RelativeIterateChange => {
                    let m = rel_change(&x, &snap_x);
                    snap_x.copy_from_slice(&x);
                    m
                }
                Metric::PrimalDualGap => {
                    let (g, _) = engine.gap(&x, &y);
                    let e = engine.energy(&x);
                    g / e.abs().max(gap_floor).max(f64::MIN_POSITIVE)
                }
            };
            if metric <= cfg.tol {
                converged = true;
            }
        }
        if cfg.log_every > 0 && (it % cfg.log_every == 0 || converged) {
            history.push(Checkpoint { iteration: it, energy: engine.energy(&x), metric });
        }
        if converged {
            break;
        }
    }
    let objective = engine.energy(&x);
    Ok(SolveResult {
        state: problem.unpack(x, y),
        objective,
        metric_history: history,
        iterations,
        converged,
        final_metric: metric,
        tau,
        sigma,
    })
}

/// Gap at a given state, plus whether its duals had to be made feasible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapReport {
    pub gap: f64,
    pub primal: f64,
    pub dual: f64,
    pub projected: bool,
}

/// Primal-dual gap of `state` for `problem`. Infeasible duals are projected
/// onto their balls (and rescaled to satisfy the linear dual constraints)
/// before evaluation; `projected` reports whether that happened.
pub fn duality_gap(problem: &Problem<'_>, state: &SaddleState) -> Result<GapReport> {
    problem.validate()?;
    let x = problem.pack_primal(state)?;
    let y = problem.pack_dual(state)?;
    let mut engine = Engine::new(*problem);
    let primal = engine.energy(&x);
    let (dual, projected) = engine.dual_value(&y);
    Ok(GapReport { gap: (primal - dual).max(0.0), primal, dual, projected })
}

/// L^p-TV denoising.
pub fn solve_tv(f: &ScalarField, alpha: f64, cfg: &SolverConfig) -> Result<SolveResult> {
    solve(Problem::Tv { f, alpha, p: cfg.p }, cfg)
}

/// L^p-TGV² denoising, jointly in `(u, w)`.
pub fn solve_tgv2(f: &ScalarField, alpha: f64, beta: f64, cfg: &SolverConfig) -> Result<SolveResult> {
    solve(Problem::Tgv2 { f, alpha, beta, p: cfg.p }, cfg)
}

/// 1-D L²-second-order-TV denoising. The fidelity is always L².
pub fn solve_tv2_1d(f: &ScalarField, beta: f64, cfg: &SolverConfig) -> Result<SolveResult> {
    solve(Problem::Tv2 { f, beta }, cfg)
}

/// `min_w |g - w|_L1 + lambda |E w|_M`. The result carries `w` and `q` only.
pub fn solve_l1_sym(g: &VectorField, lambda: f64, cfg: &SolverConfig) -> Result<SolveResult> {
    solve(Problem::L1Sym { g, lambda }, cfg)
}

/// `TGV²_{beta,alpha}(u)`: the inner minimisation over `w` for fixed `u`,
/// solved as the L¹ problem on `g = grad u` with `lambda = beta / alpha`.
pub fn eval_tgv(u: &ScalarField, alpha: f64, beta: f64, cfg: &SolverConfig) -> Result<(f64, SolveResult)> {
    for (name, v) in [("alpha", alpha), ("beta", beta)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::param(format!("{name} must be positive and finite, got {v}")));
        }
    }
    let g = diffops::grad(u);
    let res = solve_l1_sym(&g, beta / alpha, cfg)?;
    Ok((alpha * res.objective, res))
}

/// Write checkpoints as CSV with header `iteration,energy,metric`.
pub fn write_checkpoints_csv<W: Write>(out: W, checkpoints: &[Checkpoint]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["iteration", "energy", "metric"])?;
    for c in checkpoints {
        wtr.write_record([c.iteration.to_string(), c.energy.to_string(), c.metric.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}
