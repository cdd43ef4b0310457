use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Tolerance on `max |W Wᵀ − I|` for a transform to count as orthonormal-rows.
pub const ORTHONORMALITY_TOL: f64 = 1e-8;

/// Default relative singular-value cutoff for the SVD pseudo-inverse.
pub const DEFAULT_SVD_CUTOFF: f64 = 1e-10;

/// How the pseudo-inverse of a transform is realized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PinvPolicy {
    /// `W† = Wᵀ`; valid only when the rows are orthonormal (checked at
    /// construction).
    TransposeIfOrthonormal,
    /// SVD pseudo-inverse, zeroing singular values below
    /// `relative_cutoff · σ_max`.
    SvdWithCutoff { relative_cutoff: f64 },
}

/// An `L×N` linear map from the feature domain into the code domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Transform {
    matrix: Array2<f64>,
    policy: PinvPolicy,
}

impl Transform {
    pub fn new(matrix: Array2<f64>, policy: PinvPolicy) -> Result<Self> {
        let (l, n) = matrix.dim();
        if l == 0 || n == 0 {
            return Err(Error::invalid("transform must have L >= 1 and N >= 1"));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("transform entries must be finite"));
        }
        if let PinvPolicy::TransposeIfOrthonormal = policy {
            let defect = orthonormality_defect(matrix.view());
            if defect > ORTHONORMALITY_TOL {
                return Err(Error::invalid(format!(
                    "rows are not orthonormal (max |W Wᵀ - I| = {defect:.3e})"
                )));
            }
        }
        Ok(Self { matrix, policy })
    }

    /// Transform with orthonormal rows and the transpose pseudo-inverse.
    pub fn orthonormal(matrix: Array2<f64>) -> Result<Self> {
        Self::new(matrix, PinvPolicy::TransposeIfOrthonormal)
    }

    /// Transform with the SVD pseudo-inverse at the default cutoff.
    pub fn with_svd_pinv(matrix: Array2<f64>) -> Result<Self> {
        Self::new(
            matrix,
            PinvPolicy::SvdWithCutoff {
                relative_cutoff: DEFAULT_SVD_CUTOFF,
            },
        )
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: Array2::eye(n),
            policy: PinvPolicy::TransposeIfOrthonormal,
        }
    }

    /// Code-domain dimension `L`.
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    /// Feature-domain dimension `N`.
    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.matrix.view()
    }

    pub fn policy(&self) -> PinvPolicy {
        self.policy
    }

    pub fn is_orthonormal(&self) -> bool {
        matches!(self.policy, PinvPolicy::TransposeIfOrthonormal)
    }

    /// `W x`, with a dimension check.
    pub fn project(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        if x.len() != self.cols() {
            return Err(Error::DimensionMismatch {
                expected: self.cols(),
                actual: x.len(),
            });
        }
        Ok(self.matrix.dot(&x))
    }

    /// The `N×L` pseudo-inverse under this transform's policy.
    pub fn pinv(&self) -> Result<Array2<f64>> {
        match self.policy {
            PinvPolicy::TransposeIfOrthonormal => Ok(self.matrix.t().to_owned()),
            PinvPolicy::SvdWithCutoff { relative_cutoff } => {
                svd_pinv(self.matrix.view(), relative_cutoff)
            }
        }
    }
}

/// `max |W Wᵀ − I|` over all entries.
pub fn orthonormality_defect(w: ArrayView2<'_, f64>) -> f64 {
    let gram = w.dot(&w.t());
    let l = gram.nrows();
    let mut defect = 0.0f64;
    for i in 0..l {
        for j in 0..l {
            let target = if i == j { 1.0 } else { 0.0 };
            defect = defect.max((gram[[i, j]] - target).abs());
        }
    }
    defect
}

fn svd_pinv(w: ArrayView2<'_, f64>, relative_cutoff: f64) -> Result<Array2<f64>> {
    let (l, n) = w.dim();
    let m = DMatrix::from_fn(l, n, |i, j| w[[i, j]]);
    let svd = m.svd(true, true);
    let u = svd
        .u
        .ok_or_else(|| Error::Numeric("SVD did not produce U".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numeric("SVD did not produce Vᵀ".into()))?;
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    if !(sigma_max.is_finite()) {
        return Err(Error::Numeric("SVD produced non-finite singular values".into()));
    }
    let cutoff = relative_cutoff * sigma_max;
    if sigma_max <= 0.0 {
        return Err(Error::Numeric(
            "rank-deficient transform: all singular values below cutoff".into(),
        ));
    }
    // W† = V Σ⁺ Uᵀ.
    let r = svd.singular_values.len();
    let mut pinv = Array2::<f64>::zeros((n, l));
    for k in 0..r {
        let s = svd.singular_values[k];
        if s <= cutoff {
            continue;
        }
        let inv = 1.0 / s;
        for i in 0..n {
            let vik = v_t[(k, i)];
            if vik == 0.0 {
                continue;
            }
            for j in 0..l {
                pinv[[i, j]] += vik * inv * u[(j, k)];
            }
        }
    }
    Ok(pinv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn orthonormal_construction_validates_rows() {
        let ok = array![[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(Transform::orthonormal(ok).is_ok());

        let skewed = array![[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(Transform::orthonormal(skewed).is_err());
    }

    #[test]
    fn orthonormal_pinv_is_transpose() {
        let w = array![[0.6, 0.8], [-0.8, 0.6]];
        let t = Transform::orthonormal(w.clone()).unwrap();
        let p = t.pinv().unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(p[[i, j]], w[[j, i]]);
            }
        }
    }

    #[test]
    fn svd_pinv_matches_known_inverse() {
        // Diagonal-ish rectangular map: pinv is the transposed reciprocal.
        let w = array![[2.0, 0.0, 0.0], [0.0, 4.0, 0.0]];
        let t = Transform::with_svd_pinv(w).unwrap();
        let p = t.pinv().unwrap();
        let expected = array![[0.5, 0.0], [0.0, 0.25], [0.0, 0.0]];
        for i in 0..3 {
            for j in 0..2 {
                assert_abs_diff_eq!(p[[i, j]], expected[[i, j]], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn zero_matrix_pinv_is_numeric_error() {
        let t = Transform::with_svd_pinv(Array2::zeros((2, 3))).unwrap();
        assert!(matches!(t.pinv(), Err(Error::Numeric(_))));
    }

    #[test]
    fn project_checks_dimension() {
        let t = Transform::identity(3);
        assert!(t.project(array![1.0, 2.0].view()).is_err());
    }
}
