//! Data generation and the replicated experiments.
//!
//! Two headline experiments are provided: the estimator comparison, which
//! fits each configured cost on independently generated autoregressive
//! series and averages the fitted noise covariances, and the test
//! calibration, which repeatedly computes the parameter-count statistic
//! under a true null and compares its empirical law against chi-square.
//!
//! Randomness is organized as a tree of streams under the master seed:
//! stream 0 drives the generator-weight draw (with its stability probes),
//! stream 1 fans out one substream per replication, and inside a replication
//! substream 0 generates data while the following ones seed the fits. Each
//! piece owns its stream, so reports are bit-identical however replications
//! are scheduled.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::cost::{self, CostKind, Dataset};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, SpdMatrix};
use crate::model::{self, MlpSpec, WeightVector};
use crate::optim::{self, MultistartOptions};
use crate::rng::RngStream;

/// Absolute bound on series values before the generator counts as explosive.
pub const DIVERGENCE_BOUND: f64 = 1e6;

const W0_REDRAW_LIMIT: usize = 100;

/// Draws `count` rows of centered noise with covariance `gamma0`
/// (Cholesky factor times standard normals).
pub fn gen_noise(gamma0: &SpdMatrix, count: usize, rng: &mut ChaCha8Rng) -> Result<Matrix> {
    let d = gamma0.dim();
    let l = linalg::cholesky(gamma0)?;
    let mut out = Matrix::zeros(count, d);
    let mut g = vec![0.0; d];
    for t in 0..count {
        for v in &mut g {
            *v = rng.sample(StandardNormal);
        }
        let row = out.row_mut(t);
        for i in 0..d {
            let mut s = 0.0;
            for k in 0..=i {
                s += l.get(i, k) * g[k];
            }
            row[i] = s;
        }
    }
    Ok(out)
}

fn noise_or_zero(gamma0: &SpdMatrix, count: usize, rng: &mut ChaCha8Rng) -> Result<Matrix> {
    if gamma0.is_zero() {
        Ok(Matrix::zeros(count, gamma0.dim()))
    } else {
        gen_noise(gamma0, count, rng)
    }
}

/// Simulates the autoregressive series Y_{t+1} = F_{W0}(Y_t) + eps_{t+1}
/// from Y_0 = 0 and returns the n pairs (Y_t, Y_{t+1}).
///
/// Requires input and output dimensions to match. The all-zero covariance is
/// accepted here (noise-free generation); any value exceeding
/// [`DIVERGENCE_BOUND`] aborts with [`Error::Diverged`] so the caller can
/// redraw the generator weights.
pub fn gen_nar_series(
    spec: &MlpSpec,
    w0: &[f64],
    n: usize,
    gamma0: &SpdMatrix,
    rng: &mut ChaCha8Rng,
) -> Result<Dataset> {
    if spec.input_dim != spec.output_dim {
        return Err(Error::DimensionMismatch(format!(
            "autoregressive generation needs L = d, spec is {spec}"
        )));
    }
    if gamma0.dim() != spec.output_dim {
        return Err(Error::DimensionMismatch(format!(
            "noise covariance dim {} vs output dim {}",
            gamma0.dim(),
            spec.output_dim
        )));
    }
    let noise = noise_or_zero(gamma0, n, rng)?;
    let d = spec.output_dim;
    let mut y = vec![0.0; d];
    let mut tanh_buf = vec![0.0; spec.hidden];
    let mut fwd = vec![0.0; d];
    let mut inputs = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for t in 0..n {
        inputs.push(y.clone());
        model::forward_into(spec, w0, &y, &mut tanh_buf, &mut fwd);
        let eps = noise.row(t);
        for i in 0..d {
            y[i] = fwd[i] + eps[i];
        }
        if y.iter().any(|v| v.abs() > DIVERGENCE_BOUND) {
            return Err(Error::Diverged { t, bound: DIVERGENCE_BOUND });
        }
        targets.push(y.clone());
    }
    Dataset::from_rows(&inputs, &targets)
}

/// I.i.d. regression pairs with inputs from a caller-supplied sampler.
pub fn gen_iid_regression_with<S>(
    spec: &MlpSpec,
    w0: &[f64],
    n: usize,
    mut sampler: S,
    gamma0: &SpdMatrix,
    rng: &mut ChaCha8Rng,
) -> Result<Dataset>
where
    S: FnMut(&mut ChaCha8Rng) -> Vec<f64>,
{
    let inputs: Vec<Vec<f64>> = (0..n).map(|_| sampler(rng)).collect();
    let noise = noise_or_zero(gamma0, n, rng)?;
    let mut targets = Vec::with_capacity(n);
    for (t, z) in inputs.iter().enumerate() {
        let mut y = model::forward(spec, w0, z)?;
        let eps = noise.row(t);
        for i in 0..y.len() {
            y[i] += eps[i];
        }
        targets.push(y);
    }
    Dataset::from_rows(&inputs, &targets)
}

/// I.i.d. regression pairs with standard-normal inputs (the default
/// sampler), used for calibration experiments.
pub fn gen_iid_regression(
    spec: &MlpSpec,
    w0: &[f64],
    n: usize,
    gamma0: &SpdMatrix,
    rng: &mut ChaCha8Rng,
) -> Result<Dataset> {
    let dim = spec.input_dim;
    gen_iid_regression_with(
        spec,
        w0,
        n,
        |rng| (0..dim).map(|_| rng.sample(StandardNormal)).collect(),
        gamma0,
        rng,
    )
}

/// Where the generator weights come from.
#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum W0Source {
    File(PathBuf),
    Random { half_range: f64 },
}

/// Cost kinds the comparison experiment can fit. `Gls0` weights by the true
/// generator covariance, the infeasible baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CostName {
    LogDet,
    Mse,
    Gls0,
}

impl CostName {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "logdet" => Ok(Self::LogDet),
            "mse" => Ok(Self::Mse),
            "gls0" => Ok(Self::Gls0),
            other => Err(Error::Invalid(format!("unknown cost kind `{other}`"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::LogDet => "logdet",
            Self::Mse => "mse",
            Self::Gls0 => "gls0",
        }
    }

    fn to_kind(self, gamma0: &SpdMatrix) -> CostKind {
        match self {
            Self::LogDet => CostKind::LogDet,
            Self::Mse => CostKind::Mse,
            Self::Gls0 => CostKind::Gls(gamma0.clone()),
        }
    }
}

/// Everything a replicated experiment needs.
#[derive(Clone, Debug, Serialize)]
pub struct ExperimentConfig {
    pub spec: MlpSpec,
    pub n: usize,
    pub replications: usize,
    pub restarts: usize,
    pub seed: u64,
    pub gamma0: SpdMatrix,
    pub w0: W0Source,
    pub costs: Vec<CostName>,
    /// Flat weight indices held at zero by the restricted model (and zeroed
    /// in the generator) during calibration.
    pub freeze: Vec<usize>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n <= self.spec.output_dim {
            return Err(Error::Invalid(format!(
                "need n > d, got n = {} with d = {}",
                self.n, self.spec.output_dim
            )));
        }
        if self.replications == 0 {
            return Err(Error::Invalid("replications must be at least 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Invalid("restarts must be at least 1".into()));
        }
        if self.gamma0.dim() != self.spec.output_dim {
            return Err(Error::Invalid(format!(
                "gamma0 is {}x{} but the model has {} outputs",
                self.gamma0.dim(),
                self.gamma0.dim(),
                self.spec.output_dim
            )));
        }
        linalg::cholesky(&self.gamma0)?;
        if self.costs.is_empty() {
            return Err(Error::Invalid("at least one cost kind is required".into()));
        }
        let s = self.spec.param_count();
        if self.freeze.iter().any(|k| *k >= s) {
            return Err(Error::Invalid(format!("freeze indices must be below s = {s}")));
        }
        Ok(())
    }

    /// Parses the flat `key = value` config format (`#` starts a comment).
    pub fn from_str_named(text: &str, origin: &str) -> Result<Self> {
        let err = |msg: String| Error::Parse { path: origin.to_string(), msg };
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(err(format!("line {}: expected `key = value`", lineno + 1)));
            };
            pairs.push((key.trim().to_string(), value.trim().to_string()));
        }
        let get = |key: &str| pairs.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str());

        for (key, _) in &pairs {
            if !matches!(
                key.as_str(),
                "arch" | "n" | "replications" | "restarts" | "seed" | "gamma0" | "w0_file"
                    | "w0_range" | "costs" | "freeze"
            ) {
                return Err(err(format!("unknown key `{key}`")));
            }
        }

        let arch = get("arch").ok_or_else(|| err("missing `arch`".into()))?;
        let spec = MlpSpec::parse(arch)?;
        let parse_num = |key: &str, default: u64| -> Result<u64> {
            match get(key) {
                None => Ok(default),
                Some(v) => v.parse().map_err(|_| err(format!("bad integer for `{key}`"))),
            }
        };
        let n = parse_num("n", 1000)? as usize;
        let replications = parse_num("replications", 50)? as usize;
        let restarts = parse_num("restarts", 20)? as usize;
        let seed = parse_num("seed", 0)?;

        let gamma_values: Vec<f64> = get("gamma0")
            .ok_or_else(|| err("missing `gamma0`".into()))?
            .split(',')
            .map(|v| v.trim().parse().map_err(|_| err("bad value in `gamma0`".into())))
            .collect::<Result<_>>()?;
        let d = spec.output_dim;
        if gamma_values.len() != d * d {
            return Err(err(format!("`gamma0` needs {} row-major values", d * d)));
        }
        let rows: Vec<Vec<f64>> =
            (0..d).map(|i| gamma_values[i * d..(i + 1) * d].to_vec()).collect();
        let gamma0 = SpdMatrix::from_rows(&rows)?;

        let w0 = match (get("w0_file"), get("w0_range")) {
            (Some(_), Some(_)) => {
                return Err(err("give only one of `w0_file` and `w0_range`".into()))
            }
            (Some(path), None) => W0Source::File(PathBuf::from(path)),
            (None, Some(r)) => W0Source::Random {
                half_range: r.parse().map_err(|_| err("bad value for `w0_range`".into()))?,
            },
            (None, None) => W0Source::Random { half_range: 2.0 },
        };

        let costs = match get("costs") {
            None => vec![CostName::LogDet, CostName::Mse],
            Some(list) => list
                .split(',')
                .map(|c| CostName::parse(c.trim()))
                .collect::<Result<Vec<_>>>()?,
        };
        let freeze = match get("freeze") {
            None => Vec::new(),
            Some(list) => list
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|v| v.trim().parse().map_err(|_| err("bad index in `freeze`".into())))
                .collect::<Result<Vec<usize>>>()?,
        };

        let config =
            ExperimentConfig { spec, n, replications, restarts, seed, gamma0, w0, costs, freeze };
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str_named(&text, &path.display().to_string())
    }

    fn fit_options(&self) -> MultistartOptions {
        MultistartOptions { restarts: self.restarts, ..Default::default() }
    }
}

/// Resolves the generator weights: loads them from a file, or draws them
/// uniformly and probes one series per draw, redrawing (up to 100 times) any
/// weights that produce an explosive series. Returns the weights and the
/// number of redraws.
pub fn draw_stable_generator(config: &ExperimentConfig, probe_nar: bool) -> Result<(WeightVector, usize)> {
    let w0_stream = RngStream::new(config.seed).substream(0);
    match &config.w0 {
        W0Source::File(path) => {
            let (file_spec, w0) = model::load_model(path)?;
            if file_spec != config.spec {
                return Err(Error::DimensionMismatch(format!(
                    "generator file is {file_spec}, config wants {}",
                    config.spec
                )));
            }
            Ok((w0, 0))
        }
        W0Source::Random { half_range } => {
            for attempt in 0..W0_REDRAW_LIMIT {
                let attempt_stream = w0_stream.substream(attempt as u64);
                let w0 = model::random_init(&config.spec, *half_range, &mut attempt_stream.rng());
                if !probe_nar {
                    return Ok((w0, attempt));
                }
                let mut probe_rng = attempt_stream.substream(1).rng();
                match gen_nar_series(&config.spec, &w0, config.n, &config.gamma0, &mut probe_rng) {
                    Ok(_) => return Ok((w0, attempt)),
                    Err(Error::Diverged { .. }) => continue,
                    Err(e) => return Err(e),
                }
            }
            Err(Error::Invalid(format!(
                "no stable generator weights found in {W0_REDRAW_LIMIT} draws"
            )))
        }
    }
}

/// One fitted cost on one replication, as persisted per row of the
/// replication CSV.
#[derive(Clone, Debug, Serialize)]
pub struct RepRecord {
    pub rep: usize,
    pub kind: String,
    pub status: String,
    pub det: Option<f64>,
    pub gamma: Option<SpdMatrix>,
    pub grad_norm: Option<f64>,
    pub iterations: Option<usize>,
}

/// Aggregates over the non-failed replications for one cost kind.
#[derive(Clone, Debug, Serialize)]
pub struct KindSummary {
    pub kind: String,
    pub used_replications: usize,
    pub mean_gamma: Vec<Vec<f64>>,
    pub se_gamma: Vec<Vec<f64>>,
    pub mean_det: f64,
    pub se_det: f64,
    /// Determinants per used replication, in replication order; the lists of
    /// all kinds are aligned.
    pub dets: Vec<f64>,
}

/// Output of the estimator-comparison experiment.
#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub w0: WeightVector,
    pub w0_redraws: usize,
    /// Replications excluded from every summary (any cost failed).
    pub failed: usize,
    pub kinds: Vec<KindSummary>,
    pub records: Vec<RepRecord>,
    pub deterministic: bool,
}

impl ExperimentReport {
    pub fn kind(&self, name: &str) -> Option<&KindSummary> {
        self.kinds.iter().find(|k| k.kind == name)
    }

    /// More than 10% failed replications fail the run.
    pub fn check_failures(&self) -> Result<()> {
        check_failures(self.failed, self.replications)
    }
}

fn check_failures(failed: usize, total: usize) -> Result<()> {
    if 10 * failed > total {
        Err(Error::TooManyFailures { failed, total })
    } else {
        Ok(())
    }
}

fn accumulate(values: &[f64], compensated: bool) -> f64 {
    if compensated {
        // Kahan summation; insensitive to accumulation order
        let (mut sum, mut c) = (0.0, 0.0);
        for &v in values {
            let y = v - c;
            let t = sum + y;
            c = (t - sum) - y;
            sum = t;
        }
        sum
    } else {
        values.iter().sum()
    }
}

fn mean_and_se(values: &[f64], compensated: bool) -> (f64, f64) {
    let m = values.len();
    if m == 0 {
        return (0.0, 0.0);
    }
    let mean = accumulate(values, compensated) / m as f64;
    if m < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = accumulate(&sq, compensated) / (m - 1) as f64;
    (mean, (var / m as f64).sqrt())
}

struct KindOutcome {
    status: String,
    det: Option<f64>,
    gamma: Option<SpdMatrix>,
    grad_norm: Option<f64>,
    iterations: Option<usize>,
}

impl KindOutcome {
    fn failed(status: &str) -> Self {
        Self { status: status.into(), det: None, gamma: None, grad_norm: None, iterations: None }
    }
}

/// Fits every configured cost kind on independently generated series and
/// averages the fitted noise covariances and their determinants.
///
/// Failed replications are excluded from the means but kept in the records;
/// use [`ExperimentReport::check_failures`] to enforce the 10% budget. With
/// `deterministic` set, aggregation uses plain ordered sums; otherwise
/// compensated summation. Per-replication results are deterministic under
/// the seed either way.
pub fn run_comparison(config: &ExperimentConfig, deterministic: bool) -> Result<ExperimentReport> {
    config.validate()?;
    let (w0, w0_redraws) = draw_stable_generator(config, true)?;
    let root = RngStream::new(config.seed);
    let rep_root = root.substream(1);
    let opts = config.fit_options();

    let outcomes: Vec<Vec<KindOutcome>> = (0..config.replications)
        .into_par_iter()
        .map(|rep| {
            let rep_stream = rep_root.substream(rep as u64);
            let data = match gen_nar_series(
                &config.spec,
                &w0,
                config.n,
                &config.gamma0,
                &mut rep_stream.substream(0).rng(),
            ) {
                Ok(d) => d,
                Err(_) => {
                    return config.costs.iter().map(|_| KindOutcome::failed("diverged")).collect()
                }
            };
            config
                .costs
                .iter()
                .enumerate()
                .map(|(i, cost)| {
                    let kind = cost.to_kind(&config.gamma0);
                    let fit = optim::multistart_fit(
                        &config.spec,
                        &data,
                        &kind,
                        &opts,
                        &rep_stream.substream(1 + i as u64),
                    );
                    match fit {
                        Ok(fit) => match linalg::logdet(&fit.gamma_hat) {
                            Ok(ld) => KindOutcome {
                                status: "ok".into(),
                                det: Some(ld.exp()),
                                gamma: Some(fit.gamma_hat),
                                grad_norm: Some(fit.grad_norm),
                                iterations: Some(fit.iterations),
                            },
                            Err(_) => KindOutcome::failed("degenerate"),
                        },
                        Err(_) => KindOutcome::failed("infeasible"),
                    }
                })
                .collect()
        })
        .collect();

    let rep_ok: Vec<bool> =
        outcomes.iter().map(|kinds| kinds.iter().all(|o| o.status == "ok")).collect();
    let failed = rep_ok.iter().filter(|ok| !**ok).count();

    let d = config.spec.output_dim;
    let mut kinds = Vec::new();
    for (i, cost) in config.costs.iter().enumerate() {
        let used: Vec<&KindOutcome> = outcomes
            .iter()
            .zip(&rep_ok)
            .filter(|(_, ok)| **ok)
            .map(|(kinds, _)| &kinds[i])
            .collect();
        let dets: Vec<f64> = used.iter().map(|o| o.det.expect("ok outcome has det")).collect();
        let (mean_det, se_det) = mean_and_se(&dets, !deterministic);
        let mut mean_gamma = vec![vec![0.0; d]; d];
        let mut se_gamma = vec![vec![0.0; d]; d];
        for r in 0..d {
            for c in 0..d {
                let entries: Vec<f64> = used
                    .iter()
                    .map(|o| o.gamma.as_ref().expect("ok outcome has gamma").get(r, c))
                    .collect();
                let (m, se) = mean_and_se(&entries, !deterministic);
                mean_gamma[r][c] = m;
                se_gamma[r][c] = se;
            }
        }
        kinds.push(KindSummary {
            kind: cost.as_str().to_string(),
            used_replications: used.len(),
            mean_gamma,
            se_gamma,
            mean_det,
            se_det,
            dets,
        });
    }

    let records = outcomes
        .into_iter()
        .enumerate()
        .flat_map(|(rep, kinds)| {
            kinds.into_iter().zip(&config.costs).map(move |(o, cost)| RepRecord {
                rep,
                kind: cost.as_str().to_string(),
                status: o.status,
                det: o.det,
                gamma: o.gamma,
                grad_norm: o.grad_norm,
                iterations: o.iterations,
            })
        })
        .collect();

    Ok(ExperimentReport {
        n: config.n,
        replications: config.replications,
        seed: config.seed,
        w0,
        w0_redraws,
        failed,
        kinds,
        records,
        deterministic,
    })
}

/// One replication of the calibration experiment.
#[derive(Clone, Debug, Serialize)]
pub struct CalibRecord {
    pub rep: usize,
    pub status: String,
    pub t_n: Option<f64>,
    pub u_restricted: Option<f64>,
    pub u_full: Option<f64>,
}

/// Output of the chi-square calibration experiment.
#[derive(Clone, Debug, Serialize)]
pub struct CalibrationReport {
    pub df: usize,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub w0: WeightVector,
    pub failed: usize,
    /// Statistics of the non-failed replications, in replication order.
    pub t_values: Vec<f64>,
    /// The same values sorted: the support of the empirical CDF.
    pub sorted_t: Vec<f64>,
    pub mean_t: f64,
    /// Kolmogorov-Smirnov distance (and p-value) of the statistics against
    /// the chi-square law with `df` degrees of freedom; trivially 0 and 1
    /// when df = 0.
    pub ks_distance: f64,
    pub ks_p_value: f64,
    pub records: Vec<CalibRecord>,
    pub deterministic: bool,
}

impl CalibrationReport {
    pub fn check_failures(&self) -> Result<()> {
        check_failures(self.failed, self.replications)
    }
}

/// Repeatedly fits restricted and full log-det models on data generated
/// under the null (the frozen generator weights are zeroed) and reports the
/// empirical law of T_n against chi-square.
///
/// Data are i.i.d. regression pairs with standard-normal inputs; the full
/// fit is warm-started from the restricted solution so nesting holds up to
/// optimizer tolerance.
pub fn run_calibration(config: &ExperimentConfig, deterministic: bool) -> Result<CalibrationReport> {
    config.validate()?;
    let df = config.freeze.len();
    let (mut w0, _) = draw_stable_generator(config, false)?;
    if df > 0 {
        let mut raw = w0.into_vec();
        for &k in &config.freeze {
            raw[k] = 0.0;
        }
        w0 = WeightVector::new(&config.spec, raw)?;
    }
    let root = RngStream::new(config.seed);
    let rep_root = root.substream(1);
    let base_opts = config.fit_options();

    let records: Vec<CalibRecord> = (0..config.replications)
        .into_par_iter()
        .map(|rep| {
            let rep_stream = rep_root.substream(rep as u64);
            let data = match gen_iid_regression(
                &config.spec,
                &w0,
                config.n,
                &config.gamma0,
                &mut rep_stream.substream(0).rng(),
            ) {
                Ok(d) => d,
                Err(_) => {
                    return CalibRecord {
                        rep,
                        status: "generation_failed".into(),
                        t_n: None,
                        u_restricted: None,
                        u_full: None,
                    }
                }
            };
            let mut restricted_opts = base_opts.clone();
            restricted_opts.frozen = config.freeze.clone();
            let restricted = match optim::multistart_fit(
                &config.spec,
                &data,
                &CostKind::LogDet,
                &restricted_opts,
                &rep_stream.substream(1),
            ) {
                Ok(f) => f,
                Err(_) => {
                    return CalibRecord {
                        rep,
                        status: "infeasible".into(),
                        t_n: None,
                        u_restricted: None,
                        u_full: None,
                    }
                }
            };
            let mut full_opts = base_opts.clone();
            full_opts.warm_starts = vec![restricted.weights.as_slice().to_vec()];
            let full = match optim::multistart_fit(
                &config.spec,
                &data,
                &CostKind::LogDet,
                &full_opts,
                &rep_stream.substream(2),
            ) {
                Ok(f) => f,
                Err(_) => {
                    return CalibRecord {
                        rep,
                        status: "infeasible".into(),
                        t_n: None,
                        u_restricted: Some(restricted.value),
                        u_full: None,
                    }
                }
            };
            match crate::inference::lr_test(&restricted, &full, config.n, df) {
                Ok(test) => CalibRecord {
                    rep,
                    status: "ok".into(),
                    t_n: Some(test.t_n),
                    u_restricted: Some(test.u_restricted),
                    u_full: Some(test.u_full),
                },
                Err(_) => CalibRecord {
                    rep,
                    status: "nesting_violation".into(),
                    t_n: None,
                    u_restricted: Some(restricted.value),
                    u_full: Some(full.value),
                },
            }
        })
        .collect();

    let t_values: Vec<f64> =
        records.iter().filter(|r| r.status == "ok").map(|r| r.t_n.expect("ok has t_n")).collect();
    let failed = config.replications - t_values.len();
    let mut sorted_t = t_values.clone();
    sorted_t.sort_by(f64::total_cmp);
    let (mean_t, _) = mean_and_se(&t_values, !deterministic);
    let (ks_distance, ks_p_value) = if df == 0 || t_values.is_empty() {
        (0.0, 1.0)
    } else {
        let d = crate::inference::ks_statistic(&sorted_t, |x| {
            crate::inference::chi2_cdf(x.max(0.0), df as u32)
        });
        (d, crate::inference::ks_pvalue(d, sorted_t.len()))
    };

    Ok(CalibrationReport {
        df,
        n: config.n,
        replications: config.replications,
        seed: config.seed,
        w0,
        failed,
        t_values,
        sorted_t,
        mean_t,
        ks_distance,
        ks_p_value,
        records,
        deterministic,
    })
}

/// Generates the single dataset written by the `simulate` command: the
/// autoregressive series under replication stream 0.
pub fn simulate_dataset(config: &ExperimentConfig) -> Result<(Dataset, WeightVector, usize)> {
    config.validate()?;
    let (w0, redraws) = draw_stable_generator(config, true)?;
    let rep_stream = RngStream::new(config.seed).substream(1).substream(0);
    let data =
        gen_nar_series(&config.spec, &w0, config.n, &config.gamma0, &mut rep_stream.substream(0).rng())?;
    Ok((data, w0, redraws))
}
