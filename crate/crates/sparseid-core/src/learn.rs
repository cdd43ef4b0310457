use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2, Zip};
use rand::{Rng, RngExt};
use rand_distr::StandardNormal;

use crate::encode::hard_threshold;
use crate::error::{Error, Result};
use crate::seeding::stream_rng;
use crate::transform::Transform;

const INIT_STREAM_TAG: u64 = 0x6c65_6172_6e;

/// Settings for the alternating sparse-coding / transform-update loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningConfig {
    /// Number of coefficients kept per item.
    pub sparsity: usize,
    /// Upper bound on alternating iterations.
    pub max_iterations: usize,
    /// Stop once the relative objective decrease falls below this.
    pub convergence_tol: f64,
    /// Seed for the random orthonormal initialization.
    pub seed: u64,
}

impl LearningConfig {
    pub fn new(sparsity: usize) -> Self {
        Self {
            sparsity,
            max_iterations: 50,
            convergence_tol: 1e-6,
            seed: 0,
        }
    }
}

/// Result of transform learning.
#[derive(Debug, Clone)]
pub struct LearnOutcome {
    /// Learned row-orthonormal `L×N` analysis transform.
    pub transform: Transform,
    /// Final sparse coefficient matrix `A = H_S(W X)`, `L×M`.
    pub coefficients: Array2<f64>,
    /// Objective `‖W X − A‖²_F` per completed iteration, starting at the
    /// random initialization. Non-increasing.
    pub objectives: Vec<f64>,
    /// Whether the loop stopped on its own before `max_iterations`.
    pub converged: bool,
}

/// A random `l×n` matrix with orthonormal rows, from the QR factorization of
/// a Gaussian sample. Requires `l <= n`.
pub fn random_orthonormal<R: Rng + ?Sized>(l: usize, n: usize, rng: &mut R) -> Result<Array2<f64>> {
    if l == 0 || l > n {
        return Err(Error::invalid(format!(
            "orthonormal rows need 1 <= L <= N, got L = {l}, N = {n}"
        )));
    }
    let g = DMatrix::from_fn(n, l, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    // Fix the column signs so the factorization is unique.
    for j in 0..l {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    Ok(Array2::from_shape_fn((l, n), |(i, j)| q[(j, i)]))
}

/// Learns a row-orthonormal sparsifying transform for the columns of `x`
/// (`N×M`, one item per column) by alternating hard-threshold sparse coding
/// with an orthonormal Procrustes update.
///
/// The recorded objective history is non-increasing: a transform update that
/// would raise the objective is rolled back and the loop stops.
pub fn learn_transform(
    x: ArrayView2<'_, f64>,
    l: usize,
    config: &LearningConfig,
) -> Result<LearnOutcome> {
    let (n, m) = x.dim();
    if n == 0 || m == 0 {
        return Err(Error::invalid("training data must be non-empty"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("training data entries must be finite"));
    }
    if l == 0 || l > n {
        return Err(Error::invalid(format!(
            "code length must satisfy 1 <= L <= N, got L = {l}, N = {n}"
        )));
    }
    let s = config.sparsity;
    if s == 0 || s > l {
        return Err(Error::invalid(format!(
            "sparsity must satisfy 1 <= S <= L, got S = {s}, L = {l}"
        )));
    }
    if config.max_iterations == 0 {
        return Err(Error::invalid("max_iterations must be at least 1"));
    }
    if !(config.convergence_tol >= 0.0) {
        return Err(Error::invalid("convergence_tol must be non-negative"));
    }

    let mut rng = stream_rng(config.seed, INIT_STREAM_TAG);
    let mut w = random_orthonormal(l, n, &mut rng)?;
    let mut p = w.dot(&x);
    let mut a = threshold_columns(&p, s);
    let mut objective = residual_energy(&p, &a);
    let mut objectives = vec![objective];
    let mut converged = false;

    for _ in 1..config.max_iterations {
        let w_next = procrustes_rows(&a.dot(&x.t()))?;
        let p_next = w_next.dot(&x);
        let a_next = threshold_columns(&p_next, s);
        let objective_next = residual_energy(&p_next, &a_next);
        if objective_next > objective {
            converged = true;
            break;
        }
        let improvement = objective - objective_next;
        w = w_next;
        p = p_next;
        a = a_next;
        objective = objective_next;
        objectives.push(objective);
        if improvement <= config.convergence_tol * objectives[0].max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    drop(p);

    Ok(LearnOutcome {
        transform: Transform::orthonormal(w)?,
        coefficients: a,
        objectives,
        converged,
    })
}

fn threshold_columns(p: &Array2<f64>, s: usize) -> Array2<f64> {
    let mut a = Array2::<f64>::zeros(p.dim());
    Zip::from(a.columns_mut())
        .and(p.columns())
        .par_for_each(|mut ac, pc| {
            ac.assign(&hard_threshold(pc, s));
        });
    a
}

fn residual_energy(p: &Array2<f64>, a: &Array2<f64>) -> f64 {
    p.iter()
        .zip(a.iter())
        .map(|(&x, &y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Row-orthonormal maximizer of `⟨W, B⟩`: `W = U Vᵀ` from the thin SVD of
/// `B`.
fn procrustes_rows(b: &Array2<f64>) -> Result<Array2<f64>> {
    let (l, n) = b.dim();
    let m = DMatrix::from_fn(l, n, |i, j| b[[i, j]]);
    let svd = m.svd(true, true);
    let u = svd
        .u
        .ok_or_else(|| Error::Numeric("SVD did not produce U".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numeric("SVD did not produce Vᵀ".into()))?;
    let w = u * v_t;
    Ok(Array2::from_shape_fn((l, n), |(i, j)| w[(i, j)]))
}
