use std::f64::consts::LN_2;

use ndarray::{Array1, ArrayView1};

use crate::code::TernaryCode;
use crate::error::{Error, Result};
use crate::transform::Transform;

/// Keeps the `s` largest-magnitude entries of `t` and zeroes the rest.
///
/// Magnitude ties are broken toward the lower index, so the output is a
/// deterministic function of the input.
pub fn hard_threshold(t: ArrayView1<'_, f64>, s: usize) -> Array1<f64> {
    let l = t.len();
    if s >= l {
        return t.to_owned();
    }
    let mut out = Array1::zeros(l);
    if s == 0 {
        return out;
    }
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_unstable_by(|&a, &b| t[b].abs().total_cmp(&t[a].abs()).then(a.cmp(&b)));
    for &i in &order[..s] {
        out[i] = t[i];
    }
    out
}

fn sign_of(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Maps each entry to its sign in `{-1, 0, +1}`; both zeros map to 0.
pub fn ternarize(t: ArrayView1<'_, f64>) -> TernaryCode {
    TernaryCode::from_signs(t.iter().map(|&v| sign_of(v)).collect())
}

/// Encodes a feature vector as the signs of the `s` largest-magnitude
/// projection coefficients.
pub fn encode(x: ArrayView1<'_, f64>, transform: &Transform, s: usize) -> Result<TernaryCode> {
    if s == 0 || s > transform.rows() {
        return Err(Error::invalid(format!(
            "sparsity must satisfy 1 <= S <= L, got S = {s}, L = {}",
            transform.rows()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("feature vector entries must be finite"));
    }
    let projection = transform.project(x)?;
    Ok(ternarize(hard_threshold(projection.view(), s).view()))
}

/// Reconstructs `gain · W† u` from a code.
pub fn decode(code: &TernaryCode, transform: &Transform, gain: f64) -> Result<Array1<f64>> {
    if code.len() != transform.rows() {
        return Err(Error::DimensionMismatch {
            expected: transform.rows(),
            actual: code.len(),
        });
    }
    let n = transform.cols();
    let mut x = Array1::<f64>::zeros(n);
    if transform.is_orthonormal() {
        // W† = Wᵀ, so column ℓ of the pseudo-inverse is row ℓ of W.
        let w = transform.matrix();
        for (pos, sign) in code.support() {
            let g = gain * f64::from(sign);
            let row = w.row(pos);
            for j in 0..n {
                x[j] += g * row[j];
            }
        }
    } else {
        let pinv = transform.pinv()?;
        for (pos, sign) in code.support() {
            let g = gain * f64::from(sign);
            let col = pinv.column(pos);
            for j in 0..n {
                x[j] += g * col[j];
            }
        }
    }
    Ok(x)
}

/// Least-squares scalar gain `⟨t, u⟩ / ‖u‖²` aligning a code with a target
/// coefficient vector. An all-zero code yields 0.
pub fn fit_gain(target: ArrayView1<'_, f64>, code: &TernaryCode) -> Result<f64> {
    if target.len() != code.len() {
        return Err(Error::DimensionMismatch {
            expected: code.len(),
            actual: target.len(),
        });
    }
    let (num, den) = gain_terms(target, code);
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(num / den)
}

/// Numerator `⟨t, u⟩` and denominator `‖u‖²` of the fitted gain, exposed so
/// callers can pool them across a batch before dividing.
pub(crate) fn gain_terms(target: ArrayView1<'_, f64>, code: &TernaryCode) -> (f64, f64) {
    let mut num = 0.0;
    for (pos, sign) in code.support() {
        num += f64::from(sign) * target[pos];
    }
    (num, code.support_size() as f64)
}

/// Rate in bits per dimension of a length-`l`, sparsity-`s` ternary code:
/// `(1/l) · log2(C(l, s) · 2^s)`.
pub fn code_rate(l: usize, s: usize) -> Result<f64> {
    if l == 0 {
        return Err(Error::invalid("code length must be at least 1"));
    }
    if s > l {
        return Err(Error::invalid(format!(
            "sparsity must satisfy S <= L, got S = {s}, L = {l}"
        )));
    }
    Ok((ln_binomial(l, s) / LN_2 + s as f64) / l as f64)
}

/// `ln C(n, k)` as a sum of logs; exact to within a few ulps of the sum.
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut acc = 0.0f64;
    for i in 1..=k {
        acc += (((n - k + i) as f64) / (i as f64)).ln();
    }
    acc
}
