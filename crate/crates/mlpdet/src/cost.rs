//! Residuals, empirical covariance, and the three regression costs with
//! analytic derivatives.
//!
//! The costs are the plain mean square error, generalized least squares with
//! a fixed weighting covariance, and the log-determinant of the empirical
//! residual covariance. All three share one gradient shape,
//!
//! ```text
//! grad = -(2/n) sum_t J_t' M r_t
//! ```
//!
//! with M the identity (MSE), the inverse of the fixed covariance (GLS), or
//! the inverse of the current empirical covariance (log-det; the factor two
//! comes from the trace form of the determinant derivative). The weighting
//! for the log-det cost is recomputed from a fresh Cholesky at every call.
//! A degenerate covariance is reported as an error so optimizers can treat
//! the point as infeasible; it is never patched with jitter.

use crate::error::{Error, Result};
use crate::linalg::{self, LowerTriangular, Matrix, SpdMatrix};
use crate::model::{self, MlpSpec};

/// Paired regression records: n inputs in R^L and n targets in R^d.
#[derive(Clone, Debug)]
pub struct Dataset {
    inputs: Matrix,
    targets: Matrix,
}

impl Dataset {
    pub fn new(inputs: Matrix, targets: Matrix) -> Result<Self> {
        if inputs.rows() != targets.rows() {
            return Err(Error::DimensionMismatch(format!(
                "{} input rows vs {} target rows",
                inputs.rows(),
                targets.rows()
            )));
        }
        if inputs.rows() == 0 {
            return Err(Error::Invalid("dataset must contain at least one record".into()));
        }
        if inputs.data().iter().chain(targets.data()).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("dataset contains non-finite values".into()));
        }
        Ok(Self { inputs, targets })
    }

    pub fn from_rows(inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(inputs)?, Matrix::from_rows(targets)?)
    }

    pub fn n(&self) -> usize {
        self.inputs.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.targets.cols()
    }

    pub fn input(&self, t: usize) -> &[f64] {
        self.inputs.row(t)
    }

    pub fn target(&self, t: usize) -> &[f64] {
        self.targets.row(t)
    }

    /// Keeps only the first `n` records.
    pub fn truncated(&self, n: usize) -> Result<Dataset> {
        let inputs: Vec<Vec<f64>> = (0..n).map(|t| self.input(t).to_vec()).collect();
        let targets: Vec<Vec<f64>> = (0..n).map(|t| self.target(t).to_vec()).collect();
        Dataset::from_rows(&inputs, &targets)
    }
}

/// n x d matrix of residuals y_t - F_W(z_t).
pub type ResidualMatrix = Matrix;

/// Which cost is being minimized.
#[derive(Clone, Debug)]
pub enum CostKind {
    /// Mean squared Euclidean residual norm.
    Mse,
    /// Residuals weighted by the inverse of a fixed covariance.
    Gls(SpdMatrix),
    /// Log-determinant of the empirical residual covariance.
    LogDet,
}

impl CostKind {
    pub fn name(&self) -> &'static str {
        match self {
            CostKind::Mse => "mse",
            CostKind::Gls(_) => "gls",
            CostKind::LogDet => "logdet",
        }
    }
}

fn check_dims(spec: &MlpSpec, w: &[f64], data: &Dataset) -> Result<()> {
    if w.len() != spec.param_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights given, spec {} needs {}",
            w.len(),
            spec,
            spec.param_count()
        )));
    }
    if data.input_dim() != spec.input_dim || data.output_dim() != spec.output_dim {
        return Err(Error::DimensionMismatch(format!(
            "dataset is {}-in/{}-out, spec is {}",
            data.input_dim(),
            data.output_dim(),
            spec
        )));
    }
    Ok(())
}

/// Residuals plus the per-sample hidden activations (reused by gradients).
fn residuals_cached(spec: &MlpSpec, w: &[f64], data: &Dataset) -> (ResidualMatrix, Matrix) {
    let n = data.n();
    let (h, d) = (spec.hidden, spec.output_dim);
    let mut res = Matrix::zeros(n, d);
    let mut tanh_cache = Matrix::zeros(n, h);
    let mut out = vec![0.0; d];
    for t in 0..n {
        model::forward_into(spec, w, data.input(t), tanh_cache.row_mut(t), &mut out);
        let target = data.target(t);
        let row = res.row_mut(t);
        for i in 0..d {
            row[i] = target[i] - out[i];
        }
    }
    (res, tanh_cache)
}

/// Residual matrix r_t = y_t - F_W(z_t), one row per record.
pub fn residuals(spec: &MlpSpec, w: &[f64], data: &Dataset) -> Result<ResidualMatrix> {
    check_dims(spec, w, data)?;
    Ok(residuals_cached(spec, w, data).0)
}

/// Empirical residual covariance (1/n) R'R; symmetric PSD by construction.
pub fn empirical_cov(res: &ResidualMatrix) -> SpdMatrix {
    let (n, d) = (res.rows(), res.cols());
    assert!(n >= 1, "empirical covariance needs at least one residual row");
    let mut cov = SpdMatrix::zeros(d);
    for i in 0..d {
        for j in 0..=i {
            let mut s = 0.0;
            for t in 0..n {
                let row = res.row(t);
                s += row[i] * row[j];
            }
            cov.set_sym(i, j, s / n as f64);
        }
    }
    cov
}

enum Weighting {
    Identity,
    Chol(LowerTriangular),
}

impl Weighting {
    fn apply(&self, r: &[f64]) -> Vec<f64> {
        match self {
            Weighting::Identity => r.to_vec(),
            Weighting::Chol(l) => l.solve(r),
        }
    }
}

/// Value and the weighting used by the matching gradient.
fn prepare(kind: &CostKind, res: &ResidualMatrix) -> Result<(f64, Weighting)> {
    let n = res.rows() as f64;
    match kind {
        CostKind::Mse => {
            let mut total = 0.0;
            for t in 0..res.rows() {
                let r = res.row(t);
                total += r.iter().zip(r).map(|(a, b)| a * b).sum::<f64>();
            }
            Ok((total / n, Weighting::Identity))
        }
        CostKind::Gls(gamma) => {
            let l = linalg::cholesky(gamma)?;
            let mut total = 0.0;
            for t in 0..res.rows() {
                let r = res.row(t);
                let u = l.solve(r);
                total += r.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>();
            }
            Ok((total / n, Weighting::Chol(l)))
        }
        CostKind::LogDet => {
            let cov = empirical_cov(res);
            let l = linalg::cholesky(&cov).map_err(|_| Error::DegenerateCovariance)?;
            Ok((l.logdet(), Weighting::Chol(l)))
        }
    }
}

/// Cost at W: MSE, GLS (with the kind's fixed covariance), or U_n.
pub fn cost_value(kind: &CostKind, spec: &MlpSpec, w: &[f64], data: &Dataset) -> Result<f64> {
    check_dims(spec, w, data)?;
    let (res, _) = residuals_cached(spec, w, data);
    Ok(prepare(kind, &res)?.0)
}

/// Cost and its analytic gradient, sharing one forward pass.
pub fn cost_value_and_grad(
    kind: &CostKind,
    spec: &MlpSpec,
    w: &[f64],
    data: &Dataset,
) -> Result<(f64, Vec<f64>)> {
    check_dims(spec, w, data)?;
    let (res, tanh_cache) = residuals_cached(spec, w, data);
    let (value, weighting) = prepare(kind, &res)?;

    let (n, d, s) = (data.n(), spec.output_dim, spec.param_count());
    let mut grad = vec![0.0; s];
    let mut jac = Matrix::zeros(d, s);
    for t in 0..n {
        model::jacobian_into(spec, w, data.input(t), tanh_cache.row(t), &mut jac);
        let u = weighting.apply(res.row(t));
        for i in 0..d {
            let ui = u[i];
            if ui == 0.0 {
                continue;
            }
            for (g, j) in grad.iter_mut().zip(jac.row(i)) {
                *g += j * ui;
            }
        }
    }
    let scale = -2.0 / n as f64;
    for g in &mut grad {
        *g *= scale;
    }
    Ok((value, grad))
}

/// Analytic gradient of the cost at W.
pub fn cost_grad(kind: &CostKind, spec: &MlpSpec, w: &[f64], data: &Dataset) -> Result<Vec<f64>> {
    Ok(cost_value_and_grad(kind, spec, w, data)?.1)
}

/// Hessian of the log-determinant cost at W, using the empirical residual
/// covariance at W as weighting.
pub fn logdet_hessian(spec: &MlpSpec, w: &[f64], data: &Dataset) -> Result<Matrix> {
    check_dims(spec, w, data)?;
    let res = residuals_cached(spec, w, data).0;
    let cov = empirical_cov(&res);
    if linalg::cholesky(&cov).is_err() {
        return Err(Error::DegenerateCovariance);
    }
    logdet_hessian_with_cov(spec, w, data, &cov)
}

/// Hessian assembly with an explicit weighting covariance.
///
/// Three trace terms: a cross term in the per-weight covariance derivatives
/// A_k, a Gauss-Newton term in the Jacobian outer products, and a curvature
/// term contracting residuals with second derivatives of the network. The
/// second derivatives are central differences of the analytic Jacobian
/// (step 1e-5 * max(1, |W_k|)); the k- and l-side estimates are averaged so
/// the assembled matrix is symmetric.
pub fn logdet_hessian_with_cov(
    spec: &MlpSpec,
    w: &[f64],
    data: &Dataset,
    gamma: &SpdMatrix,
) -> Result<Matrix> {
    check_dims(spec, w, data)?;
    if gamma.dim() != spec.output_dim {
        return Err(Error::DimensionMismatch(format!(
            "weighting covariance is {}x{}, outputs are {}",
            gamma.dim(),
            gamma.dim(),
            spec.output_dim
        )));
    }
    let chol = linalg::cholesky(gamma)?;
    let gamma_inv = linalg::spd_inverse(gamma)?;
    let (n, d, s) = (data.n(), spec.output_dim, spec.param_count());
    let nf = n as f64;

    let (res, tanh_cache) = residuals_cached(spec, w, data);

    // A_k = (1/n) sum_t (-J_t[:,k]) r_t', the derivative halves of Gamma_n;
    // gauss[k][l] = (1/n) sum_t J_t[:,k]' Gamma^-1 J_t[:,l];
    // weighted residuals u_t = Gamma^-1 r_t for the curvature pass.
    let mut a_mats = vec![Matrix::zeros(d, d); s];
    let mut gauss = Matrix::zeros(s, s);
    let mut weighted_res = Matrix::zeros(n, d);
    let mut jac = Matrix::zeros(d, s);
    let mut col = vec![0.0; d];
    for t in 0..n {
        model::jacobian_into(spec, w, data.input(t), tanh_cache.row(t), &mut jac);
        let r = res.row(t);
        let u = chol.solve(r);
        weighted_res.row_mut(t).copy_from_slice(&u);
        for k in 0..s {
            for i in 0..d {
                let jik = jac.get(i, k);
                if jik == 0.0 {
                    continue;
                }
                for j in 0..d {
                    a_mats[k].add_at(i, j, -jik * r[j]);
                }
            }
        }
        // V = Gamma^-1 J, then gauss += J'V
        let mut v = Matrix::zeros(d, s);
        for k in 0..s {
            for i in 0..d {
                col[i] = jac.get(i, k);
            }
            let sol = chol.solve(&col);
            for i in 0..d {
                v.set(i, k, sol[i]);
            }
        }
        for k in 0..s {
            for l in 0..s {
                let mut acc = 0.0;
                for i in 0..d {
                    acc += jac.get(i, k) * v.get(i, l);
                }
                gauss.add_at(k, l, acc);
            }
        }
    }
    for a in &mut a_mats {
        a.scale(1.0 / nf);
    }
    gauss.scale(1.0 / nf);

    // Cross term: -2 tr(Gamma^-1 (A_k + A_k') Gamma^-1 A_l).
    let mut sandwich = Vec::with_capacity(s);
    for a in &a_mats {
        let mut sym = Matrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                sym.set(i, j, a.get(i, j) + a.get(j, i));
            }
        }
        let mut left = Matrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0.0;
                for m in 0..d {
                    acc += gamma_inv.get(i, m) * sym.get(m, j);
                }
                left.set(i, j, acc);
            }
        }
        let mut full = Matrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0.0;
                for m in 0..d {
                    acc += left.get(i, m) * gamma_inv.get(m, j);
                }
                full.set(i, j, acc);
            }
        }
        sandwich.push(full);
    }

    let mut hess = Matrix::zeros(s, s);
    for k in 0..s {
        for l in 0..s {
            let cross = linalg::trace_prod(&sandwich[k], &a_mats[l]).expect("square d x d");
            hess.set(k, l, -2.0 * cross + 2.0 * gauss.get(k, l));
        }
    }

    // Curvature term: second network derivatives by central differences of
    // the analytic Jacobian along each weight.
    let mut curvature = Matrix::zeros(s, s);
    let mut wp = w.to_vec();
    let mut tanh_buf = vec![0.0; spec.hidden];
    let mut out_buf = vec![0.0; d];
    let mut jac_p = Matrix::zeros(d, s);
    let mut jac_m = Matrix::zeros(d, s);
    for k in 0..s {
        let step = 1e-5 * w[k].abs().max(1.0);
        for t in 0..n {
            let z = data.input(t);
            wp[k] = w[k] + step;
            model::forward_into(spec, &wp, z, &mut tanh_buf, &mut out_buf);
            model::jacobian_into(spec, &wp, z, &tanh_buf, &mut jac_p);
            wp[k] = w[k] - step;
            model::forward_into(spec, &wp, z, &mut tanh_buf, &mut out_buf);
            model::jacobian_into(spec, &wp, z, &tanh_buf, &mut jac_m);
            wp[k] = w[k];
            let u = weighted_res.row(t);
            for l in 0..s {
                let mut acc = 0.0;
                for i in 0..d {
                    acc += u[i] * (jac_p.get(i, l) - jac_m.get(i, l));
                }
                curvature.add_at(k, l, -acc / (2.0 * step));
            }
        }
    }
    curvature.scale(1.0 / nf);

    for k in 0..s {
        for l in 0..s {
            let c = curvature.get(k, l) + curvature.get(l, k);
            hess.add_at(k, l, c);
        }
    }
    Ok(hess)
}
