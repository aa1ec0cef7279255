//! One-hidden-layer perceptron: forward map, per-output Jacobian, and
//! canonicalization under the sign-flip / hidden-unit-permutation group.
//!
//! The network computes
//!
//! ```text
//! y_i = a_i0 + sum_j a_ij * tanh(w_j0 + sum_k w_jk * z_k)
//! ```
//!
//! Parameters live in one flat vector: first the output weights
//! `(a_10, .., a_1H, a_20, .., a_dH)`, then the hidden rows
//! `(w_10, .., w_1L, .., w_H0, .., w_HL)`. This order is the canonical
//! serialization used by model files and Jacobian columns.

use std::fmt;
use std::ops::Deref;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Architecture: input dimension L, hidden units H, output dimension d.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: usize,
    pub output_dim: usize,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden: usize, output_dim: usize) -> Result<Self> {
        if input_dim == 0 || hidden == 0 || output_dim == 0 {
            return Err(Error::Invalid("all architecture dimensions must be positive".into()));
        }
        Ok(Self { input_dim, hidden, output_dim })
    }

    /// Parses the `L,H,d` architecture notation.
    pub fn parse(text: &str) -> Result<Self> {
        let dims: Vec<usize> = text
            .split(',')
            .map(|p| p.trim().parse().map_err(|_| Error::Invalid(format!("bad architecture `{text}`"))))
            .collect::<Result<_>>()?;
        if dims.len() != 3 {
            return Err(Error::Invalid(format!("architecture `{text}` must be `L,H,d`")));
        }
        Self::new(dims[0], dims[1], dims[2])
    }

    /// Total parameter count s = d(H+1) + H(L+1).
    pub fn param_count(&self) -> usize {
        self.output_dim * (self.hidden + 1) + self.hidden * (self.input_dim + 1)
    }

    /// Flat index of the output weight a_{i,j}; `j == 0` is the bias a_{i0},
    /// `j >= 1` connects hidden unit `j-1` to output `i`.
    #[inline]
    pub fn a_index(&self, output: usize, j: usize) -> usize {
        debug_assert!(output < self.output_dim && j <= self.hidden);
        output * (self.hidden + 1) + j
    }

    /// Flat index of the hidden weight w_{j,k}; `k == 0` is the bias w_{j0}.
    #[inline]
    pub fn w_index(&self, unit: usize, k: usize) -> usize {
        debug_assert!(unit < self.hidden && k <= self.input_dim);
        self.output_dim * (self.hidden + 1) + unit * (self.input_dim + 1) + k
    }
}

impl fmt::Display for MlpSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}-{}", self.input_dim, self.hidden, self.output_dim)
    }
}

/// Flat parameter vector in the canonical serialization order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(spec: &MlpSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.param_count() {
            return Err(Error::DimensionMismatch(format!(
                "weight vector has {} entries, spec {} needs {}",
                values.len(),
                spec,
                spec.param_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("weight vector contains non-finite entries".into()));
        }
        Ok(Self(values))
    }

    pub fn zeros(spec: &MlpSpec) -> Self {
        Self(vec![0.0; spec.param_count()])
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for WeightVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

fn check_dims(spec: &MlpSpec, w: &[f64], z: &[f64]) -> Result<()> {
    if w.len() != spec.param_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights given, spec {} needs {}",
            w.len(),
            spec,
            spec.param_count()
        )));
    }
    if z.len() != spec.input_dim {
        return Err(Error::DimensionMismatch(format!(
            "input has {} entries, spec {} needs {}",
            z.len(),
            spec,
            spec.input_dim
        )));
    }
    Ok(())
}

/// Hidden activations tanh(h_j) into `tanh_h`, outputs into `out`.
/// Hot path used by the cost layer; dimensions are the caller's problem.
pub(crate) fn forward_into(spec: &MlpSpec, w: &[f64], z: &[f64], tanh_h: &mut [f64], out: &mut [f64]) {
    for unit in 0..spec.hidden {
        let base = spec.w_index(unit, 0);
        let mut h = w[base];
        for (k, &zk) in z.iter().enumerate() {
            h += w[base + 1 + k] * zk;
        }
        tanh_h[unit] = h.tanh();
    }
    for i in 0..spec.output_dim {
        let base = spec.a_index(i, 0);
        let mut y = w[base];
        for (j, &t) in tanh_h.iter().enumerate() {
            y += w[base + 1 + j] * t;
        }
        out[i] = y;
    }
}

/// Evaluates the network at one input.
pub fn forward(spec: &MlpSpec, w: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    check_dims(spec, w, z)?;
    let mut tanh_h = vec![0.0; spec.hidden];
    let mut out = vec![0.0; spec.output_dim];
    forward_into(spec, w, z, &mut tanh_h, &mut out);
    Ok(out)
}

/// Fills the d x s Jacobian given cached activations from [`forward_into`].
///
/// Entry (i, k) is the derivative of output i with respect to flat weight k:
/// 1 for the output bias, tanh(h_j) for a_{ij}, and
/// a_{ij} (1 - tanh^2(h_j)) z_k for the hidden weights (z_0 = 1). Output-i
/// rows are zero in the a-columns of every other output.
pub(crate) fn jacobian_into(spec: &MlpSpec, w: &[f64], z: &[f64], tanh_h: &[f64], jac: &mut Matrix) {
    debug_assert_eq!(jac.rows(), spec.output_dim);
    debug_assert_eq!(jac.cols(), spec.param_count());
    for i in 0..spec.output_dim {
        let row = jac.row_mut(i);
        for v in row.iter_mut() {
            *v = 0.0;
        }
        row[spec.a_index(i, 0)] = 1.0;
        for j in 0..spec.hidden {
            row[spec.a_index(i, j + 1)] = tanh_h[j];
        }
        for j in 0..spec.hidden {
            let aij = w[spec.a_index(i, j + 1)];
            let sech2 = 1.0 - tanh_h[j] * tanh_h[j];
            let c = aij * sech2;
            let base = spec.w_index(j, 0);
            row[base] = c;
            for (k, &zk) in z.iter().enumerate() {
                row[base + 1 + k] = c * zk;
            }
        }
    }
}

/// Per-output derivative matrix at one input (d rows, s columns).
pub fn jacobian(spec: &MlpSpec, w: &[f64], z: &[f64]) -> Result<Matrix> {
    check_dims(spec, w, z)?;
    let mut tanh_h = vec![0.0; spec.hidden];
    let mut out = vec![0.0; spec.output_dim];
    forward_into(spec, w, z, &mut tanh_h, &mut out);
    let mut jac = Matrix::zeros(spec.output_dim, spec.param_count());
    jacobian_into(spec, w, z, &tanh_h, &mut jac);
    Ok(jac)
}

/// Negates the incoming row and outgoing column of one hidden unit.
/// Leaves the input-output map unchanged since tanh is odd.
pub fn flip_unit_sign(spec: &MlpSpec, w: &WeightVector, unit: usize) -> WeightVector {
    let mut v = w.as_slice().to_vec();
    for k in 0..=spec.input_dim {
        let idx = spec.w_index(unit, k);
        v[idx] = -v[idx];
    }
    for i in 0..spec.output_dim {
        let idx = spec.a_index(i, unit + 1);
        v[idx] = -v[idx];
    }
    WeightVector(v)
}

/// Relabels hidden units: new unit `p` takes old unit `perm[p]`.
pub fn permute_hidden_units(spec: &MlpSpec, w: &WeightVector, perm: &[usize]) -> WeightVector {
    assert_eq!(perm.len(), spec.hidden);
    let mut v = w.as_slice().to_vec();
    for (p, &old) in perm.iter().enumerate() {
        for k in 0..=spec.input_dim {
            v[spec.w_index(p, k)] = w[spec.w_index(old, k)];
        }
        for i in 0..spec.output_dim {
            v[spec.a_index(i, p + 1)] = w[spec.a_index(i, old + 1)];
        }
    }
    WeightVector(v)
}

/// Picks the orbit representative under the weight-symmetry group.
///
/// For each hidden unit the first nonzero entry of its incoming row
/// (bias included) is made positive by flipping the unit's sign; units are
/// then sorted by lexicographic order of their rows. All-zero rows are left
/// untouched and sort last. Idempotent, and the forward map is unchanged.
pub fn canonicalize(spec: &MlpSpec, w: &WeightVector) -> WeightVector {
    let mut work = w.clone();
    for unit in 0..spec.hidden {
        let lead = (0..=spec.input_dim)
            .map(|k| work[spec.w_index(unit, k)])
            .find(|v| *v != 0.0);
        if let Some(lead) = lead {
            if lead < 0.0 {
                work = flip_unit_sign(spec, &work, unit);
            }
        }
    }
    let mut order: Vec<usize> = (0..spec.hidden).collect();
    let row = |unit: usize| -> Vec<f64> {
        (0..=spec.input_dim).map(|k| work[spec.w_index(unit, k)]).collect()
    };
    order.sort_by(|&a, &b| {
        let (ra, rb) = (row(a), row(b));
        let za = ra.iter().all(|v| *v == 0.0);
        let zb = rb.iter().all(|v| *v == 0.0);
        za.cmp(&zb).then_with(|| {
            ra.iter().zip(&rb).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    permute_hidden_units(spec, &work, &order)
}

/// Draws entries i.i.d. uniform on [-half_range, half_range].
pub fn random_init<R: Rng>(spec: &MlpSpec, half_range: f64, rng: &mut R) -> WeightVector {
    assert!(half_range > 0.0, "half_range must be positive");
    let v = (0..spec.param_count()).map(|_| rng.gen_range(-half_range..=half_range)).collect();
    WeightVector(v)
}

/// Writes the text model format: `mlp L H d` then the flat weights at
/// 17 significant digits (round-trips bit-faithfully).
pub fn save_model(path: &Path, spec: &MlpSpec, w: &WeightVector) -> Result<()> {
    let mut line = String::new();
    for (i, v) in w.iter().enumerate() {
        if i > 0 {
            line.push(' ');
        }
        line.push_str(&format!("{v:.16e}"));
    }
    std::fs::write(
        path,
        format!("mlp {} {} {}\n{}\n", spec.input_dim, spec.hidden, spec.output_dim, line),
    )?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(MlpSpec, WeightVector)> {
    let err = |msg: &str| Error::Parse { path: path.display().to_string(), msg: msg.into() };
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| err("empty file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != "mlp" {
        return Err(err("header must be `mlp L H d`"));
    }
    let dims: Vec<usize> = fields[1..]
        .iter()
        .map(|f| f.parse().map_err(|_| err("bad dimension in header")))
        .collect::<Result<_>>()?;
    let spec = MlpSpec::new(dims[0], dims[1], dims[2])?;
    let weights_line = lines.next().ok_or_else(|| err("missing weights line"))?;
    let values: Vec<f64> = weights_line
        .split_whitespace()
        .map(|f| f.parse().map_err(|_| err("bad weight value")))
        .collect::<Result<_>>()?;
    let w = WeightVector::new(&spec, values)?;
    Ok((spec, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use approx::assert_relative_eq;

    fn spec_232() -> MlpSpec {
        MlpSpec::new(2, 3, 2).unwrap()
    }

    #[test]
    fn param_count_layout() {
        let s = spec_232();
        assert_eq!(s.param_count(), 2 * 4 + 3 * 3);
        assert_eq!(s.a_index(0, 0), 0);
        assert_eq!(s.a_index(1, 3), 7);
        assert_eq!(s.w_index(0, 0), 8);
        assert_eq!(s.w_index(2, 2), 16);
    }

    #[test]
    fn forward_zero_weights() {
        let spec = spec_232();
        let w = WeightVector::zeros(&spec);
        let y = forward(&spec, &w, &[0.3, -1.2]).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
    }

    #[test]
    fn forward_hand_value() {
        // 1-1-1 net, a = (0.5, 2), w = (0, 1), z = (1): 0.5 + 2 tanh(1)
        let spec = MlpSpec::new(1, 1, 1).unwrap();
        let w = WeightVector::new(&spec, vec![0.5, 2.0, 0.0, 1.0]).unwrap();
        let y = forward(&spec, &w, &[1.0]).unwrap();
        assert_relative_eq!(y[0], 0.5 + 2.0 * 1.0_f64.tanh(), max_relative = 1e-15);
        assert_relative_eq!(y[0], 2.0231883119115297, max_relative = 1e-14);
    }

    #[test]
    fn forward_at_zero_input() {
        let spec = spec_232();
        let w = random_init(&spec, 1.5, &mut RngStream::new(5).rng());
        let y = forward(&spec, &w, &[0.0, 0.0]).unwrap();
        for i in 0..2 {
            let mut expect = w[spec.a_index(i, 0)];
            for j in 0..3 {
                expect += w[spec.a_index(i, j + 1)] * w[spec.w_index(j, 0)].tanh();
            }
            assert_relative_eq!(y[i], expect, max_relative = 1e-15);
        }
    }

    #[test]
    fn forward_rejects_bad_dims() {
        let spec = spec_232();
        let w = WeightVector::zeros(&spec);
        assert!(matches!(forward(&spec, &w, &[1.0]), Err(Error::DimensionMismatch(_))));
        assert!(matches!(forward(&spec, &w[..5], &[1.0, 2.0]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn jacobian_zero_weights() {
        let spec = spec_232();
        let w = WeightVector::zeros(&spec);
        let j = jacobian(&spec, &w, &[0.7, 0.1]).unwrap();
        for i in 0..2 {
            for c in 0..spec.param_count() {
                let expect = if c == spec.a_index(i, 0) { 1.0 } else { 0.0 };
                assert_eq!(j.get(i, c), expect, "row {i} col {c}");
            }
        }
    }

    #[test]
    fn jacobian_cross_output_columns_are_zero() {
        let spec = spec_232();
        let w = random_init(&spec, 1.0, &mut RngStream::new(11).rng());
        let j = jacobian(&spec, &w, &[0.4, -0.9]).unwrap();
        // output-0 a-columns must be zero in row 1, and vice versa
        for col in 0..=spec.hidden {
            assert_eq!(j.get(1, spec.a_index(0, col)), 0.0);
            assert_eq!(j.get(0, spec.a_index(1, col)), 0.0);
        }
    }

    fn fd_jacobian(spec: &MlpSpec, w: &[f64], z: &[f64], step: f64) -> Matrix {
        let s = spec.param_count();
        let mut fd = Matrix::zeros(spec.output_dim, s);
        let mut wp = w.to_vec();
        for k in 0..s {
            let orig = wp[k];
            wp[k] = orig + step;
            let up = forward(spec, &wp, z).unwrap();
            wp[k] = orig - step;
            let dn = forward(spec, &wp, z).unwrap();
            wp[k] = orig;
            for i in 0..spec.output_dim {
                fd.set(i, k, (up[i] - dn[i]) / (2.0 * step));
            }
        }
        fd
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let specs = [
            MlpSpec::new(1, 1, 1).unwrap(),
            MlpSpec::new(2, 3, 2).unwrap(),
            MlpSpec::new(3, 2, 4).unwrap(),
        ];
        let mut draws = 0;
        for (si, spec) in specs.iter().enumerate() {
            for rep in 0..20 {
                let stream = RngStream::new(42).substream(si as u64).substream(rep);
                let mut rng = stream.rng();
                let w = random_init(spec, 1.2, &mut rng);
                let z: Vec<f64> =
                    (0..spec.input_dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let j = jacobian(spec, &w, &z).unwrap();
                let fd = fd_jacobian(spec, &w, &z, 1e-6);
                for i in 0..spec.output_dim {
                    for k in 0..spec.param_count() {
                        let (a, b) = (j.get(i, k), fd.get(i, k));
                        let rel = (a - b).abs() / a.abs().max(b.abs()).max(1.0);
                        assert!(rel < 1e-6, "spec {spec} entry ({i},{k}): {a} vs {b}");
                    }
                }
                draws += 1;
            }
        }
        assert!(draws >= 50);
    }

    #[test]
    fn canonicalize_is_idempotent_and_inverts_flips() {
        let spec = spec_232();
        let w = random_init(&spec, 2.0, &mut RngStream::new(3).rng());
        let canon = canonicalize(&spec, &w);
        assert_eq!(canonicalize(&spec, &canon), canon);
        // flipping any unit of a canonical vector and re-canonicalizing undoes it
        for unit in 0..spec.hidden {
            let flipped = flip_unit_sign(&spec, &canon, unit);
            assert_eq!(canonicalize(&spec, &flipped), canon);
        }
    }

    #[test]
    fn canonicalize_preserves_forward_map() {
        let spec = spec_232();
        let stream = RngStream::new(9);
        let w = random_init(&spec, 2.0, &mut stream.rng());
        let canon = canonicalize(&spec, &w);
        let mut rng = stream.substream(1).rng();
        for _ in 0..100 {
            let z: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let y0 = forward(&spec, &w, &z).unwrap();
            let y1 = forward(&spec, &canon, &z).unwrap();
            let err: f64 =
                y0.iter().zip(&y1).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            assert!(err <= 1e-14, "forward changed by {err}");
        }
    }

    #[test]
    fn canonicalize_collapses_orbit() {
        let spec = spec_232();
        let stream = RngStream::new(17);
        let w = random_init(&spec, 2.0, &mut stream.rng());
        let target = canonicalize(&spec, &w);
        let mut rng = stream.substream(1).rng();
        for _ in 0..30 {
            let mut t = w.clone();
            for unit in 0..spec.hidden {
                if rng.gen_bool(0.5) {
                    t = flip_unit_sign(&spec, &t, unit);
                }
            }
            // random permutation by repeated swaps
            let mut perm: Vec<usize> = (0..spec.hidden).collect();
            for i in (1..perm.len()).rev() {
                perm.swap(i, rng.gen_range(0..=i));
            }
            t = permute_hidden_units(&spec, &t, &perm);
            assert_eq!(canonicalize(&spec, &t), target);
        }
    }

    #[test]
    fn canonicalize_keeps_zero_rows_last() {
        let spec = MlpSpec::new(1, 2, 1).unwrap();
        // unit 0 has an all-zero row, unit 1 a negative-leading row
        let w = WeightVector::new(&spec, vec![0.1, 0.5, 0.7, 0.0, 0.0, -1.0, 0.3]).unwrap();
        let c = canonicalize(&spec, &w);
        // non-zero row first, sign-corrected
        assert_eq!(c[spec.w_index(0, 0)], 1.0);
        assert_eq!(c[spec.w_index(0, 1)], -0.3);
        assert_eq!(c[spec.w_index(1, 0)], 0.0);
        assert_eq!(c[spec.w_index(1, 1)], 0.0);
        assert_eq!(c[spec.a_index(0, 1)], -0.7);
        assert_eq!(c[spec.a_index(0, 2)], 0.5);
    }

    #[test]
    fn random_init_is_deterministic_and_bounded() {
        let spec = spec_232();
        let stream = RngStream::new(123).substream(4);
        let a = random_init(&spec, 0.7, &mut stream.rng());
        let b = random_init(&spec, 0.7, &mut stream.rng());
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.abs() <= 0.7));
        let wide = random_init(&spec, 2.0, &mut stream.substream(1).rng());
        assert!(wide.iter().any(|v| v.abs() > 0.7));
    }

    #[test]
    fn model_file_roundtrip_is_bit_faithful() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.txt");
        let spec = spec_232();
        let w = random_init(&spec, 2.0, &mut RngStream::new(77).rng());
        save_model(&path, &spec, &w).unwrap();
        let (spec2, w2) = load_model(&path).unwrap();
        assert_eq!(spec, spec2);
        for (a, b) in w.iter().zip(w2.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn load_model_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "mlp 2 3\n1 2 3\n").unwrap();
        assert!(matches!(load_model(&path), Err(Error::Parse { .. })));
        std::fs::write(&path, "mlp 2 3 2\n1 2 3\n").unwrap();
        assert!(matches!(load_model(&path), Err(Error::DimensionMismatch(_))));
    }
}
