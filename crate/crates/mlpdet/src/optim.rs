//! BFGS quasi-Newton minimization, multi-start fitting, and the iterated
//! feasible-GLS procedure.
//!
//! The line search enforces the strong Wolfe conditions via bracketing and
//! bisection, falling back to Armijo backtracking. Points where the
//! objective is undefined (degenerate residual covariance under the log-det
//! cost) are treated as +inf so the search shrinks away from them; only an
//! undefined starting point is an error.
//!
//! Weights can be frozen at zero by masking their gradient entries. With the
//! scaled-identity initial inverse Hessian, frozen coordinates then never
//! move and the update keeps their rows of the approximation diagonal, so no
//! reduced parameterization is needed.

use rayon::prelude::*;
use serde::Serialize;

use crate::cost::{self, CostKind, Dataset};
use crate::error::{Error, Result};
use crate::linalg::{self, SpdMatrix};
use crate::model::{self, MlpSpec, WeightVector};
use crate::rng::RngStream;

/// Knobs for a single BFGS run.
#[derive(Clone, Debug)]
pub struct OptimOptions {
    /// Termination threshold on the gradient infinity norm.
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Armijo constant of the Wolfe conditions.
    pub c1: f64,
    /// Curvature constant of the Wolfe conditions.
    pub c2: f64,
    /// Bisection budget of the line search.
    pub max_halvings: usize,
    /// Record every accepted iterate (used by diagnostics and tests).
    pub keep_trace: bool,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self { grad_tol: 1e-8, max_iters: 500, c1: 1e-4, c2: 0.9, max_halvings: 60, keep_trace: false }
    }
}

impl OptimOptions {
    fn validate(&self) -> Result<()> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::Invalid("need 0 < c1 < c2 < 1".into()));
        }
        Ok(())
    }
}

/// Why a BFGS run stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradTol,
    MaxIters,
    LineSearchFailed,
}

/// Outcome of one BFGS run.
#[derive(Clone, Debug)]
pub struct BfgsResult {
    pub point: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub reason: Termination,
    /// Accepted iterates (starting point included) with their values;
    /// empty unless `keep_trace` was set.
    pub trace: Vec<(Vec<f64>, f64)>,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

struct Probe {
    f: f64,
    grad: Option<Vec<f64>>,
}

fn probe<F>(objective: &F, w: &[f64], dir: &[f64], alpha: f64, buf: &mut Vec<f64>) -> Probe
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    buf.clear();
    buf.extend(w.iter().zip(dir).map(|(wi, di)| wi + alpha * di));
    match objective(buf) {
        Ok((f, g)) if f.is_finite() => Probe { f, grad: Some(g) },
        _ => Probe { f: f64::INFINITY, grad: None },
    }
}

struct Accepted {
    alpha: f64,
    f: f64,
    grad: Vec<f64>,
}

/// Strong Wolfe search along `dir`; `d0 = g0 . dir` must be negative.
fn wolfe_search<F>(
    objective: &F,
    w: &[f64],
    f0: f64,
    d0: f64,
    dir: &[f64],
    opts: &OptimOptions,
) -> Option<Accepted>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut buf = Vec::with_capacity(w.len());
    let armijo = |alpha: f64, f: f64| f <= f0 + opts.c1 * alpha * d0;
    let strong = |dphi: f64| dphi.abs() <= -opts.c2 * d0;

    let zoom = |mut lo: f64, mut f_lo: f64, mut hi: f64, buf: &mut Vec<f64>| -> Option<Accepted> {
        for _ in 0..opts.max_halvings {
            let alpha = 0.5 * (lo + hi);
            let p = probe(objective, w, dir, alpha, buf);
            if !p.f.is_finite() || !armijo(alpha, p.f) || p.f >= f_lo {
                hi = alpha;
                continue;
            }
            let grad = p.grad.expect("finite probe carries a gradient");
            let dphi = dot(&grad, dir);
            if strong(dphi) {
                return Some(Accepted { alpha, f: p.f, grad });
            }
            if dphi * (hi - lo) >= 0.0 {
                hi = lo;
            }
            lo = alpha;
            f_lo = p.f;
        }
        None
    };

    let mut alpha_prev = 0.0;
    let mut f_prev = f0;
    let mut alpha = 1.0;
    for i in 0..30 {
        let p = probe(objective, w, dir, alpha, &mut buf);
        if !p.f.is_finite() || !armijo(alpha, p.f) || (i > 0 && p.f >= f_prev) {
            return zoom(alpha_prev, f_prev, alpha, &mut buf);
        }
        let grad = p.grad.expect("finite probe carries a gradient");
        let dphi = dot(&grad, dir);
        if strong(dphi) {
            return Some(Accepted { alpha, f: p.f, grad });
        }
        if dphi >= 0.0 {
            return zoom(alpha, p.f, alpha_prev, &mut buf);
        }
        alpha_prev = alpha;
        f_prev = p.f;
        alpha *= 2.0;
    }
    None
}

/// Plain Armijo backtracking from alpha = 1.
fn armijo_search<F>(
    objective: &F,
    w: &[f64],
    f0: f64,
    d0: f64,
    dir: &[f64],
    opts: &OptimOptions,
) -> Option<Accepted>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut buf = Vec::with_capacity(w.len());
    let mut alpha = 1.0;
    for _ in 0..opts.max_halvings {
        let p = probe(objective, w, dir, alpha, &mut buf);
        if p.f.is_finite() && p.f <= f0 + opts.c1 * alpha * d0 {
            let grad = p.grad.expect("finite probe carries a gradient");
            return Some(Accepted { alpha, f: p.f, grad });
        }
        alpha *= 0.5;
    }
    None
}

/// Minimizes `objective` from `w0` with BFGS.
///
/// Accepted values are monotone non-increasing. The inverse-Hessian
/// approximation starts as the identity scaled by 1/|g0| and is updated by
/// the rank-two BFGS formula, skipping updates whose curvature
/// `s.y <= 1e-12 |s||y|`.
pub fn bfgs_minimize<F>(objective: F, w0: &[f64], opts: &OptimOptions) -> Result<BfgsResult>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    opts.validate()?;
    let s_dim = w0.len();
    let (mut f, mut g) = objective(w0).map_err(|_| Error::InfeasibleStart)?;
    if !f.is_finite() {
        return Err(Error::InfeasibleStart);
    }
    let mut w = w0.to_vec();
    let mut trace = Vec::new();
    if opts.keep_trace {
        trace.push((w.clone(), f));
    }
    if inf_norm(&g) <= opts.grad_tol {
        return Ok(BfgsResult {
            point: w,
            value: f,
            grad_norm: inf_norm(&g),
            iterations: 0,
            reason: Termination::GradTol,
            trace,
        });
    }

    let scale = 1.0 / norm2(&g).max(f64::MIN_POSITIVE);
    let mut h = vec![0.0; s_dim * s_dim];
    let reset = |h: &mut Vec<f64>, scale: f64| {
        h.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..s_dim {
            h[i * s_dim + i] = scale;
        }
    };
    reset(&mut h, scale);

    let mut reason = Termination::MaxIters;
    let mut iterations = 0;
    for _ in 0..opts.max_iters {
        let mut dir: Vec<f64> = (0..s_dim)
            .map(|i| -(0..s_dim).map(|j| h[i * s_dim + j] * g[j]).sum::<f64>())
            .collect();
        let mut d0 = dot(&dir, &g);
        if d0 >= 0.0 {
            // approximation lost descent; restart from scaled steepest descent
            reset(&mut h, 1.0 / norm2(&g).max(f64::MIN_POSITIVE));
            dir = g.iter().map(|v| -v / norm2(&g).max(f64::MIN_POSITIVE)).collect();
            d0 = dot(&dir, &g);
        }

        let accepted = wolfe_search(&objective, &w, f, d0, &dir, opts)
            .or_else(|| armijo_search(&objective, &w, f, d0, &dir, opts));
        let Some(acc) = accepted else {
            reason = Termination::LineSearchFailed;
            break;
        };

        let step: Vec<f64> = dir.iter().map(|d| acc.alpha * d).collect();
        let y: Vec<f64> = acc.grad.iter().zip(&g).map(|(gn, go)| gn - go).collect();
        for (wi, si) in w.iter_mut().zip(&step) {
            *wi += si;
        }
        f = acc.f;
        g = acc.grad;
        iterations += 1;
        if opts.keep_trace {
            trace.push((w.clone(), f));
        }
        if inf_norm(&g) <= opts.grad_tol {
            reason = Termination::GradTol;
            break;
        }

        let sy = dot(&step, &y);
        if sy > 1e-12 * norm2(&step) * norm2(&y) {
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..s_dim)
                .map(|i| (0..s_dim).map(|j| h[i * s_dim + j] * y[j]).sum())
                .collect();
            let yhy = dot(&y, &hy);
            let c = rho * rho * yhy + rho;
            for i in 0..s_dim {
                for j in 0..s_dim {
                    h[i * s_dim + j] +=
                        c * step[i] * step[j] - rho * (step[i] * hy[j] + hy[i] * step[j]);
                }
            }
        }
    }

    Ok(BfgsResult { point: w, value: f, grad_norm: inf_norm(&g), iterations, reason, trace })
}

/// Options for a multi-start fit.
#[derive(Clone, Debug)]
pub struct MultistartOptions {
    /// Number of random initializations.
    pub restarts: usize,
    /// Half-width of the uniform initialization box.
    pub init_half_range: f64,
    /// Flat weight indices held at zero.
    pub frozen: Vec<usize>,
    /// Extra starting points tried before the random ones.
    pub warm_starts: Vec<Vec<f64>>,
    pub optim: OptimOptions,
}

impl Default for MultistartOptions {
    fn default() -> Self {
        Self {
            restarts: 20,
            init_half_range: 0.7,
            frozen: Vec::new(),
            warm_starts: Vec::new(),
            optim: OptimOptions::default(),
        }
    }
}

/// Final state of one start within a multi-start fit.
#[derive(Clone, Debug, Serialize)]
pub struct RestartRecord {
    pub start_index: usize,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub reason: Termination,
    pub feasible: bool,
}

/// Result of a multi-start fit: the best run plus per-start diagnostics.
#[derive(Clone, Debug, Serialize)]
pub struct FitReport {
    pub cost_kind: String,
    /// Best weights; canonicalized unless some weights were frozen, in which
    /// case the constrained parameterization is kept so the zeros stay at
    /// their designated indices.
    pub weights: WeightVector,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub restarts_attempted: usize,
    pub restart_results: Vec<RestartRecord>,
    /// Empirical residual covariance at the solution.
    pub gamma_hat: SpdMatrix,
    pub reason: Termination,
}

pub(crate) fn fit_objective<'a>(
    spec: &'a MlpSpec,
    data: &'a Dataset,
    kind: &'a CostKind,
    frozen: &'a [usize],
) -> impl Fn(&[f64]) -> Result<(f64, Vec<f64>)> + Sync + 'a {
    move |w: &[f64]| {
        let (value, mut grad) = cost::cost_value_and_grad(kind, spec, w, data)?;
        for &k in frozen {
            grad[k] = 0.0;
        }
        Ok((value, grad))
    }
}

fn check_frozen(spec: &MlpSpec, frozen: &[usize]) -> Result<()> {
    let s = spec.param_count();
    let mut seen = vec![false; s];
    for &k in frozen {
        if k >= s {
            return Err(Error::Invalid(format!("frozen index {k} out of range (s = {s})")));
        }
        if seen[k] {
            return Err(Error::Invalid(format!("frozen index {k} repeated")));
        }
        seen[k] = true;
    }
    Ok(())
}

/// Runs BFGS from warm starts and `restarts` independent random
/// initializations and keeps the best final value.
///
/// Random start `i` draws from substream `i` of `stream`, so the result is a
/// deterministic function of the seed no matter how starts are scheduled;
/// ties are broken by start index.
pub fn multistart_fit(
    spec: &MlpSpec,
    data: &Dataset,
    kind: &CostKind,
    opts: &MultistartOptions,
    stream: &RngStream,
) -> Result<FitReport> {
    if opts.restarts == 0 {
        return Err(Error::Invalid("restarts must be at least 1".into()));
    }
    check_frozen(spec, &opts.frozen)?;
    opts.optim.validate()?;
    let s = spec.param_count();
    for warm in &opts.warm_starts {
        if warm.len() != s {
            return Err(Error::DimensionMismatch(format!(
                "warm start has {} entries, spec {} needs {}",
                warm.len(),
                spec,
                s
            )));
        }
    }

    let objective = fit_objective(spec, data, kind, &opts.frozen);
    let total = opts.warm_starts.len() + opts.restarts;
    let runs: Vec<Option<BfgsResult>> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let mut w0 = if idx < opts.warm_starts.len() {
                opts.warm_starts[idx].clone()
            } else {
                let restart = (idx - opts.warm_starts.len()) as u64;
                let mut rng = stream.substream(restart).rng();
                model::random_init(spec, opts.init_half_range, &mut rng).into_vec()
            };
            for &k in &opts.frozen {
                w0[k] = 0.0;
            }
            match bfgs_minimize(&objective, &w0, &opts.optim) {
                Ok(res) => Some(res),
                Err(_) => None,
            }
        })
        .collect();

    let records: Vec<RestartRecord> = runs
        .iter()
        .enumerate()
        .map(|(i, run)| match run {
            Some(r) => RestartRecord {
                start_index: i,
                value: r.value,
                grad_norm: r.grad_norm,
                iterations: r.iterations,
                reason: r.reason,
                feasible: true,
            },
            None => RestartRecord {
                start_index: i,
                value: f64::INFINITY,
                grad_norm: f64::NAN,
                iterations: 0,
                reason: Termination::LineSearchFailed,
                feasible: false,
            },
        })
        .collect();

    let best = runs
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.as_ref().map(|r| (i, r)))
        .fold(None::<(usize, &BfgsResult)>, |acc, (i, r)| match acc {
            Some((_, b)) if b.value <= r.value => acc,
            _ => Some((i, r)),
        });
    let Some((_, best)) = best else {
        return Err(Error::AllRestartsInfeasible(total));
    };

    let raw = WeightVector::new(spec, best.point.clone())?;
    let weights =
        if opts.frozen.is_empty() { model::canonicalize(spec, &raw) } else { raw };
    let gamma_hat = cost::empirical_cov(&cost::residuals(spec, &weights, data)?);
    Ok(FitReport {
        cost_kind: kind.name().to_string(),
        weights,
        value: best.value,
        grad_norm: best.grad_norm,
        iterations: best.iterations,
        restarts_attempted: total,
        restart_results: records,
        gamma_hat,
        reason: best.reason,
    })
}

/// One round of the iterated feasible-GLS procedure.
#[derive(Clone, Debug, Serialize)]
pub struct FglsRound {
    pub round: usize,
    pub weights: WeightVector,
    /// Empirical residual covariance at this round's solution (the weighting
    /// used by the next round).
    pub gamma: SpdMatrix,
    /// Log-determinant of `gamma`.
    pub u_n: f64,
}

/// Alternates weight fitting and covariance re-estimation.
///
/// Round 0 is an ordinary multi-start MSE fit; round k >= 1 fits GLS
/// weighted by the previous round's residual covariance, warm-started at the
/// previous solution alongside fresh restarts. The returned trajectory
/// carries U_n at every round; the fixed point of the iteration minimizes
/// the log-determinant cost.
pub fn fgls_iterate(
    spec: &MlpSpec,
    data: &Dataset,
    rounds: usize,
    opts: &MultistartOptions,
    stream: &RngStream,
) -> Result<Vec<FglsRound>> {
    if rounds == 0 {
        return Err(Error::Invalid("rounds must be at least 1".into()));
    }
    let mut base = opts.clone();
    base.warm_starts.clear();

    let mse = multistart_fit(spec, data, &CostKind::Mse, &base, &stream.substream(0))?;
    let mut trajectory = Vec::with_capacity(rounds + 1);
    let u0 = linalg::logdet(&mse.gamma_hat).map_err(|_| Error::DegenerateCovariance)?;
    trajectory.push(FglsRound { round: 0, weights: mse.weights, gamma: mse.gamma_hat, u_n: u0 });

    for round in 1..=rounds {
        let prev = trajectory.last().expect("round 0 recorded");
        let gamma = prev.gamma.clone();
        linalg::cholesky(&gamma).map_err(|_| Error::DegenerateCovariance)?;
        let mut round_opts = base.clone();
        round_opts.warm_starts = vec![prev.weights.as_slice().to_vec()];
        let fit = multistart_fit(
            spec,
            data,
            &CostKind::Gls(gamma),
            &round_opts,
            &stream.substream(round as u64),
        )?;
        let u_n = linalg::logdet(&fit.gamma_hat).map_err(|_| Error::DegenerateCovariance)?;
        trajectory.push(FglsRound { round, weights: fit.weights, gamma: fit.gamma_hat, u_n });
    }
    Ok(trajectory)
}
