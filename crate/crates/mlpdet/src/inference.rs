//! Asymptotic inference: information matrix, weight standard errors and Wald
//! statistics, and the chi-square test for the number of parameters.
//!
//! Under the log-det cost the estimator is asymptotically normal with
//! covariance I0^-1 / n, where I0 contracts the inverse noise covariance
//! with Jacobian outer products. Its plug-in estimate here uses the
//! empirical residual covariance at the fitted weights. The likelihood-ratio
//! style statistic T_n = n (U_restricted - U_full) is referred to a plain
//! chi-square law with one degree of freedom per freed weight; the analogous
//! MSE-based statistic only reaches a weighted sum of chi-square-1 variables
//! with unknown weights, which [`weighted_chi2_sample`] tabulates by Monte
//! Carlo for comparison purposes.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::cost::{self, Dataset};
use crate::error::{Error, Result};
use crate::linalg::{self, SpdMatrix};
use crate::model::{self, MlpSpec};
use crate::optim::FitReport;

/// Plug-in information matrix estimate over a subset of weights:
/// (1/n) sum_t J_t' Gamma^-1 J_t restricted to `free` columns.
pub fn information_matrix_subset(
    spec: &MlpSpec,
    w: &[f64],
    data: &Dataset,
    gamma: &SpdMatrix,
    free: &[usize],
) -> Result<SpdMatrix> {
    if gamma.dim() != spec.output_dim {
        return Err(Error::DimensionMismatch(format!(
            "weighting covariance is {}x{}, outputs are {}",
            gamma.dim(),
            gamma.dim(),
            spec.output_dim
        )));
    }
    let chol = linalg::cholesky(gamma)?;
    let (n, d, q) = (data.n(), spec.output_dim, free.len());
    let mut acc = vec![0.0; q * q];
    let mut col = vec![0.0; d];
    for t in 0..n {
        let jac = model::jacobian(spec, w, data.input(t))?;
        // U = Gamma^-1 J restricted to free columns
        let mut u = vec![0.0; d * q];
        for (c, &k) in free.iter().enumerate() {
            for i in 0..d {
                col[i] = jac.get(i, k);
            }
            let sol = chol.solve(&col);
            for i in 0..d {
                u[i * q + c] = sol[i];
            }
        }
        for (a, &ka) in free.iter().enumerate() {
            for b in 0..=a {
                let kb = free[b];
                let mut s = 0.0;
                for i in 0..d {
                    s += jac.get(i, ka) * u[i * q + b];
                }
                let _ = kb;
                acc[a * q + b] += s;
            }
        }
    }
    let mut out = SpdMatrix::zeros(q);
    for a in 0..q {
        for b in 0..=a {
            out.set_sym(a, b, acc[a * q + b] / n as f64);
        }
    }
    Ok(out)
}

/// Information matrix over the full weight vector.
pub fn information_matrix(
    spec: &MlpSpec,
    w: &[f64],
    data: &Dataset,
    gamma: &SpdMatrix,
) -> Result<SpdMatrix> {
    let all: Vec<usize> = (0..spec.param_count()).collect();
    information_matrix_subset(spec, w, data, gamma, &all)
}

/// Asymptotic covariance, standard errors, and Wald statistics of the
/// fitted weights.
#[derive(Clone, Debug, Serialize)]
pub struct WeightInference {
    /// Flat indices the entries below refer to (frozen weights excluded).
    pub free_indices: Vec<usize>,
    pub i_hat: SpdMatrix,
    /// I_hat^-1 / n.
    pub asym_cov: SpdMatrix,
    pub std_errors: Vec<f64>,
    /// W_k^2 / var_k, marginally chi-square-1; a pruning ranking, not a
    /// multiplicity-corrected test.
    pub wald: Vec<f64>,
    pub n: usize,
}

/// Inference at `w` with some weights frozen at zero (excluded from the
/// information matrix). The weighting covariance is the empirical residual
/// covariance at `w`.
///
/// A singular information matrix signals non-identifiability (for example
/// redundant hidden units) and is reported as an error, never patched.
pub fn weight_inference_restricted(
    spec: &MlpSpec,
    w: &[f64],
    data: &Dataset,
    frozen: &[usize],
) -> Result<WeightInference> {
    let res = cost::residuals(spec, w, data)?;
    let gamma = cost::empirical_cov(&res);
    linalg::cholesky(&gamma).map_err(|_| Error::DegenerateCovariance)?;
    let free: Vec<usize> =
        (0..spec.param_count()).filter(|k| !frozen.contains(k)).collect();
    let i_hat = information_matrix_subset(spec, w, data, &gamma, &free)?;
    let inv = linalg::spd_inverse(&i_hat)?;
    let n = data.n();
    let mut asym_cov = SpdMatrix::zeros(free.len());
    for a in 0..free.len() {
        for b in 0..=a {
            asym_cov.set_sym(a, b, inv.get(a, b) / n as f64);
        }
    }
    let std_errors: Vec<f64> = (0..free.len()).map(|a| asym_cov.get(a, a).sqrt()).collect();
    let wald: Vec<f64> = free
        .iter()
        .enumerate()
        .map(|(a, &k)| {
            let var = asym_cov.get(a, a);
            w[k] * w[k] / var
        })
        .collect();
    Ok(WeightInference { free_indices: free, i_hat, asym_cov, std_errors, wald, n })
}

/// Inference over all weights of an unrestricted fit.
pub fn weight_inference(spec: &MlpSpec, w: &[f64], data: &Dataset) -> Result<WeightInference> {
    weight_inference_restricted(spec, w, data, &[])
}

/// Result of the parameter-count test.
#[derive(Clone, Debug, Serialize)]
pub struct TestReport {
    /// n times the drop of the log-det cost from the restricted to the full
    /// model.
    pub t_n: f64,
    /// Freed weights s - q.
    pub df: usize,
    pub p_value: f64,
    pub u_restricted: f64,
    pub u_full: f64,
    pub n: usize,
}

/// Compares a restricted log-det fit against a full one.
///
/// T_n = n (U_q - U_s) is referred to chi-square with `df` degrees of
/// freedom. A T_n below -1e-6 is a nesting violation: the full fit must be
/// warm-started from the restricted solution for the statistic to be
/// meaningful. With df = 0 the test degenerates and p = 1 by convention.
pub fn lr_test(restricted: &FitReport, full: &FitReport, n: usize, df: usize) -> Result<TestReport> {
    if restricted.cost_kind != "logdet" || full.cost_kind != "logdet" {
        return Err(Error::KindMismatch(format!(
            "test needs two logdet fits, got {} and {}",
            restricted.cost_kind, full.cost_kind
        )));
    }
    let t_n = n as f64 * (restricted.value - full.value);
    if t_n < -1e-6 {
        return Err(Error::NestingViolation { t_n });
    }
    let p_value = if df == 0 { 1.0 } else { chi2_sf(t_n.max(0.0), df as u32) };
    Ok(TestReport {
        t_n,
        df,
        p_value,
        u_restricted: restricted.value,
        u_full: full.value,
        n,
    })
}

const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// ln Gamma(x) for x > 0 (Lanczos, g = 7).
fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

const GAMMA_MAX_ITER: usize = 300;

/// Regularized lower incomplete gamma P(a, x) and its complement, via the
/// series for x < a + 1 and a Lentz continued fraction otherwise.
fn gamma_p_q(a: f64, x: f64) -> (f64, f64) {
    debug_assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return (0.0, 1.0);
    }
    let log_pre = -x + a * x.ln() - ln_gamma(a);
    let pre = log_pre.exp();
    if x < a + 1.0 {
        // series for P
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..GAMMA_MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * f64::EPSILON {
                break;
            }
        }
        let p = (pre * sum).clamp(0.0, 1.0);
        (p, 1.0 - p)
    } else {
        // Lentz continued fraction for Q
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut f = d;
        for i in 1..=GAMMA_MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            f *= delta;
            if (delta - 1.0).abs() < f64::EPSILON {
                break;
            }
        }
        let q = (pre * f).clamp(0.0, 1.0);
        (1.0 - q, q)
    }
}

/// Chi-square CDF with `k` degrees of freedom.
pub fn chi2_cdf(x: f64, k: u32) -> f64 {
    assert!(k >= 1, "degrees of freedom must be positive");
    if x <= 0.0 {
        return 0.0;
    }
    gamma_p_q(k as f64 / 2.0, x / 2.0).0
}

/// Upper tail 1 - CDF, computed directly to keep precision in the tail.
pub fn chi2_sf(x: f64, k: u32) -> f64 {
    assert!(k >= 1, "degrees of freedom must be positive");
    if x <= 0.0 {
        return 1.0;
    }
    gamma_p_q(k as f64 / 2.0, x / 2.0).1
}

/// Draws from sum_i lambda_i Z_i^2 with Z_i standard normal: the reference
/// law of the MSE-based parameter test, tabulated by Monte Carlo since its
/// weights are instance-dependent.
pub fn weighted_chi2_sample(
    lambdas: &[f64],
    draws: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    if lambdas.is_empty() || lambdas.iter().any(|l| *l <= 0.0) {
        return Err(Error::Invalid("weights must be a non-empty positive list".into()));
    }
    Ok((0..draws)
        .map(|_| {
            lambdas
                .iter()
                .map(|l| {
                    let z: f64 = rng.sample(StandardNormal);
                    l * z * z
                })
                .sum()
        })
        .collect())
}

/// Kolmogorov-Smirnov distance of a sample against a CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, x) in sorted.iter().enumerate() {
        let f = cdf(*x);
        d = d.max(((i + 1) as f64 / n - f).abs());
        d = d.max((f - i as f64 / n).abs());
    }
    d
}

/// Asymptotic Kolmogorov-Smirnov p-value for distance `d` at sample size `n`.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sqrt_n = (n as f64).sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    let mut p = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = 2.0 * (-2.0 * jf * jf * lambda * lambda).exp();
        p += if j % 2 == 1 { term } else { -term };
    }
    p.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::CostKind;
    use crate::linalg::Matrix;
    use crate::model::random_init;
    use crate::optim::Termination;
    use crate::rng::RngStream;
    use approx::assert_relative_eq;

    fn fake_report(kind: &str, value: f64) -> FitReport {
        let spec = MlpSpec::new(1, 1, 1).unwrap();
        FitReport {
            cost_kind: kind.to_string(),
            weights: crate::model::WeightVector::zeros(&spec),
            value,
            grad_norm: 0.0,
            iterations: 0,
            restarts_attempted: 1,
            restart_results: Vec::new(),
            gamma_hat: SpdMatrix::identity(1),
            reason: Termination::GradTol,
        }
    }

    #[test]
    fn lr_test_examples() {
        // restricted == full: df 0, p = 1 by convention
        let r = fake_report("logdet", 2.3);
        let t = lr_test(&r, &fake_report("logdet", 2.3), 500, 0).unwrap();
        assert_eq!(t.t_n, 0.0);
        assert_eq!(t.p_value, 1.0);

        // U_q = 2.30, U_s = 2.29, n = 1000, df = 2: T_n = 10, p = exp(-5)
        let t = lr_test(&fake_report("logdet", 2.30), &fake_report("logdet", 2.29), 1000, 2)
            .unwrap();
        assert_relative_eq!(t.t_n, 10.0, max_relative = 1e-12);
        assert_relative_eq!(t.p_value, (-5.0f64).exp(), max_relative = 1e-9);

        assert!(matches!(
            lr_test(&fake_report("logdet", 2.0), &fake_report("logdet", 2.1), 1000, 2),
            Err(Error::NestingViolation { .. })
        ));
        assert!(matches!(
            lr_test(&fake_report("mse", 2.0), &fake_report("logdet", 1.9), 1000, 2),
            Err(Error::KindMismatch(_))
        ));
    }

    #[test]
    fn chi2_basics() {
        for k in [1u32, 2, 5] {
            assert_eq!(chi2_cdf(0.0, k), 0.0);
            assert_eq!(chi2_sf(0.0, k), 1.0);
        }
        // k = 2 is exactly exponential
        for x in [0.1, 0.5, 1.0, 3.0, 10.0] {
            assert_relative_eq!(chi2_cdf(x, 2), 1.0 - (-x / 2.0).exp(), max_relative = 1e-13);
        }
        // 95% quantile of chi-square 1
        assert!((chi2_cdf(3.841459, 1) - 0.95).abs() < 1e-6);
    }

    /// Adaptive Simpson quadrature, the independent oracle for the CDF.
    fn simpson<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson_rule<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
            (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
        }
        fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let left = simpson_rule(f, a, m);
            let right = simpson_rule(f, m, b);
            if depth > 40 || (left + right - whole).abs() < 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                recurse(f, a, m, left, tol / 2.0, depth + 1)
                    + recurse(f, m, b, right, tol / 2.0, depth + 1)
            }
        }
        recurse(&f, a, b, simpson_rule(&f, a, b), tol, 0)
    }

    #[test]
    fn chi2_cdf_matches_quadrature_oracle() {
        // gamma(k/2) hard-coded so the oracle shares nothing with ln_gamma
        let cases: [(u32, f64); 5] = [
            (1, std::f64::consts::PI.sqrt()),
            (2, 1.0),
            (3, std::f64::consts::PI.sqrt() / 2.0),
            (5, 3.0 * std::f64::consts::PI.sqrt() / 4.0),
            (10, 24.0),
        ];
        for (k, gamma_half_k) in cases {
            let half = k as f64 / 2.0;
            let norm = 2.0f64.powf(half) * gamma_half_k;
            for x in [0.05f64, 0.5, 1.2, 3.841459, 7.0, 15.0] {
                let oracle = if k == 1 {
                    // substitute x = u^2 to remove the endpoint singularity
                    let g = |u: f64| 2.0 * (-u * u / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
                    simpson(g, 0.0, x.sqrt(), 1e-13)
                } else {
                    let density = move |t: f64| t.powf(half - 1.0) * (-t / 2.0).exp() / norm;
                    simpson(density, 0.0, x, 1e-13)
                };
                let got = chi2_cdf(x, k);
                assert!(
                    (got - oracle).abs() < 1e-10,
                    "k={k} x={x}: cdf {got} vs quadrature {oracle}"
                );
            }
        }
    }

    #[test]
    fn chi2_cdf_is_monotone_and_stochastically_ordered() {
        for k in [1u32, 2, 4, 7] {
            let mut prev = 0.0;
            for i in 1..200 {
                let x = i as f64 * 0.1;
                let c = chi2_cdf(x, k);
                assert!(c >= prev);
                assert!(c >= chi2_cdf(x, k + 2), "ordering failed at k={k} x={x}");
                prev = c;
            }
        }
    }

    #[test]
    fn information_matrix_reduces_to_gauss_newton() {
        let spec = MlpSpec::new(2, 2, 1).unwrap();
        let stream = RngStream::new(31);
        let mut rng = stream.rng();
        let w = random_init(&spec, 1.0, &mut rng);
        let inputs: Vec<Vec<f64>> =
            (0..12).map(|_| (0..2).map(|_| rng.gen_range(-1.5..1.5)).collect()).collect();
        let targets: Vec<Vec<f64>> = (0..12).map(|_| vec![rng.gen_range(-1.0..1.0)]).collect();
        let data = Dataset::from_rows(&inputs, &targets).unwrap();

        let info = information_matrix(&spec, &w, &data, &SpdMatrix::identity(1)).unwrap();
        let s = spec.param_count();
        let mut gn = Matrix::zeros(s, s);
        for t in 0..data.n() {
            let jac = model::jacobian(&spec, &w, data.input(t)).unwrap();
            for a in 0..s {
                for b in 0..s {
                    gn.add_at(a, b, jac.get(0, a) * jac.get(0, b));
                }
            }
        }
        gn.scale(1.0 / data.n() as f64);
        assert!(info.to_matrix().max_abs_diff(&gn) < 1e-14);
    }

    #[test]
    fn single_sample_information_is_weighted_outer_product() {
        let spec = MlpSpec::new(1, 1, 2).unwrap();
        let w = random_init(&spec, 0.8, &mut RngStream::new(32).rng());
        let data = Dataset::from_rows(&[vec![0.7]], &[vec![0.1, -0.2]]).unwrap();
        let info = information_matrix(&spec, &w, &data, &SpdMatrix::identity(2)).unwrap();
        let jac = model::jacobian(&spec, &w, data.input(0)).unwrap();
        let s = spec.param_count();
        for a in 0..s {
            for b in 0..s {
                let expect: f64 = (0..2).map(|i| jac.get(i, a) * jac.get(i, b)).sum();
                assert_relative_eq!(info.get(a, b), expect, max_relative = 1e-13, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn information_matrix_matches_literal_trace_formula() {
        let spec = MlpSpec::new(2, 2, 2).unwrap();
        let stream = RngStream::new(33);
        let mut rng = stream.rng();
        let w = random_init(&spec, 1.1, &mut rng);
        let inputs: Vec<Vec<f64>> =
            (0..9).map(|_| (0..2).map(|_| rng.gen_range(-1.5..1.5)).collect()).collect();
        let targets: Vec<Vec<f64>> =
            (0..9).map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let data = Dataset::from_rows(&inputs, &targets).unwrap();
        let gamma = SpdMatrix::from_rows(&[vec![2.0, 0.7], vec![0.7, 1.2]]).unwrap();

        let info = information_matrix(&spec, &w, &data, &gamma).unwrap();
        let inv = linalg::spd_inverse(&gamma).unwrap();
        let s = spec.param_count();
        for k in 0..s {
            for l in 0..s {
                // literal form: tr(Gamma^-1 * mean_t B_t(k, l))
                let mut b = Matrix::zeros(2, 2);
                for t in 0..data.n() {
                    let jac = model::jacobian(&spec, &w, data.input(t)).unwrap();
                    for i in 0..2 {
                        for j in 0..2 {
                            b.add_at(i, j, jac.get(i, k) * jac.get(j, l));
                        }
                    }
                }
                b.scale(1.0 / data.n() as f64);
                let expect = linalg::trace_prod(&inv.to_matrix(), &b).unwrap();
                assert_relative_eq!(info.get(k, l), expect, max_relative = 1e-10, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn restricted_inference_excludes_frozen_weights() {
        let spec = MlpSpec::new(2, 2, 2).unwrap();
        let stream = RngStream::new(34);
        let mut rng = stream.rng();
        let w_true = random_init(&spec, 1.2, &mut rng);
        let inputs: Vec<Vec<f64>> =
            (0..80).map(|_| (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let targets: Vec<Vec<f64>> = inputs
            .iter()
            .map(|z| {
                let mut y = model::forward(&spec, &w_true, z).unwrap();
                for v in &mut y {
                    *v += 0.3 * rng.gen_range(-1.0..1.0);
                }
                y
            })
            .collect();
        let data = Dataset::from_rows(&inputs, &targets).unwrap();

        let s = spec.param_count();
        let frozen = vec![3, 7];
        let inf = weight_inference_restricted(&spec, &w_true, &data, &frozen).unwrap();
        assert_eq!(inf.free_indices.len(), s - 2);
        assert!(!inf.free_indices.contains(&3));
        assert!(!inf.free_indices.contains(&7));
        assert_eq!(inf.i_hat.dim(), s - 2);
        assert_eq!(inf.std_errors.len(), s - 2);
        assert!(inf.std_errors.iter().all(|se| se.is_finite() && *se > 0.0));
    }

    #[test]
    fn standard_errors_shrink_like_one_over_sqrt_n() {
        let spec = MlpSpec::new(1, 2, 1).unwrap();
        // fixed generator with well-separated units, so I_hat stays PD
        let w_true = crate::model::WeightVector::new(
            &spec,
            vec![0.3, 1.2, -0.8, 0.4, 1.3, -0.5, 2.1],
        )
        .unwrap();
        let mut ratios = Vec::new();
        for seed in 0..11u64 {
            let stream = RngStream::new(1000 + seed);
            let mut rng = stream.rng();
            let gen = |n: usize, rng: &mut ChaCha8Rng| {
                let inputs: Vec<Vec<f64>> =
                    (0..n).map(|_| vec![rng.gen_range(-2.0..2.0)]).collect();
                let targets: Vec<Vec<f64>> = inputs
                    .iter()
                    .map(|z| {
                        let mut y = model::forward(&spec, &w_true, z).unwrap();
                        y[0] += 0.5 * rng.gen_range(-1.0..1.0);
                        y
                    })
                    .collect();
                Dataset::from_rows(&inputs, &targets).unwrap()
            };
            let small = gen(400, &mut rng);
            let large = gen(800, &mut rng);
            let inf_small = weight_inference(&spec, &w_true, &small).unwrap();
            let inf_large = weight_inference(&spec, &w_true, &large).unwrap();
            let var_small: f64 = inf_small.asym_cov.trace();
            let var_large: f64 = inf_large.asym_cov.trace();
            ratios.push(var_small / var_large);
        }
        ratios.sort_by(f64::total_cmp);
        let median = ratios[ratios.len() / 2];
        assert!((1.5..2.6).contains(&median), "median variance ratio {median}");
    }

    #[test]
    fn weighted_chi2_with_unit_weights_is_chi_square() {
        let mut rng = RngStream::new(2024).rng();
        let sample = weighted_chi2_sample(&[1.0, 1.0, 1.0], 100_000, &mut rng).unwrap();
        let d = ks_statistic(&sample, |x| chi2_cdf(x, 3));
        assert!(d < 0.02, "KS distance {d}");
    }

    #[test]
    fn weighted_chi2_scales_linearly() {
        let stream = RngStream::new(2025);
        let a = weighted_chi2_sample(&[2.0], 50_000, &mut stream.substream(0).rng()).unwrap();
        let b = weighted_chi2_sample(&[1.0], 50_000, &mut stream.substream(1).rng()).unwrap();
        let mut a = a;
        let mut b = b;
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        for q in [0.25, 0.5, 0.9] {
            let ia = (q * a.len() as f64) as usize;
            let ratio = a[ia] / b[ia];
            assert!((ratio - 2.0).abs() < 0.15, "quantile {q}: ratio {ratio}");
        }
    }

    #[test]
    fn weighted_chi2_rejects_bad_weights() {
        let mut rng = RngStream::new(1).rng();
        assert!(weighted_chi2_sample(&[], 10, &mut rng).is_err());
        assert!(weighted_chi2_sample(&[1.0, -0.5], 10, &mut rng).is_err());
    }

    #[test]
    fn ks_accepts_the_true_law() {
        let mut rng = RngStream::new(3030).rng();
        let sample: Vec<f64> = (0..2000).map(|_| rng.gen_range(0.0..1.0)).collect();
        let d = ks_statistic(&sample, |x| x.clamp(0.0, 1.0));
        let p = ks_pvalue(d, sample.len());
        assert!(p > 0.01, "uniform sample rejected: d={d} p={p}");
    }
}
