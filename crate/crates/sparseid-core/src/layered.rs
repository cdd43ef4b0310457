use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::code::TernaryCode;
use crate::encode::{code_rate, gain_terms, hard_threshold, ternarize};
use crate::error::{Error, Result};
use crate::learn::{learn_transform, LearningConfig};
use crate::seeding::derive_seed;
use crate::transform::Transform;

/// Where a layer's analysis transform comes from.
#[derive(Debug, Clone)]
pub enum TransformSource {
    /// Learn a sparsifying transform on this layer's residual.
    Learn {
        max_iterations: usize,
        convergence_tol: f64,
    },
    /// Use the given transform as-is.
    Fixed(Transform),
}

impl TransformSource {
    pub fn learn_default() -> Self {
        Self::Learn {
            max_iterations: 50,
            convergence_tol: 1e-6,
        }
    }
}

/// How a layer's scalar reconstruction gain is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainMode {
    /// Least-squares gain pooled over the whole batch.
    Fitted,
    /// Fixed unit gain.
    Unit,
}

/// Specification of one refinement layer.
#[derive(Debug, Clone)]
pub struct LayerSpec {
    pub code_length: usize,
    pub sparsity: usize,
    pub transform: TransformSource,
    pub gain: GainMode,
}

impl LayerSpec {
    pub fn learned(code_length: usize, sparsity: usize) -> Self {
        Self {
            code_length,
            sparsity,
            transform: TransformSource::learn_default(),
            gain: GainMode::Fitted,
        }
    }
}

/// One built layer: transform, per-item codes and the shared gain.
#[derive(Debug, Clone)]
pub struct Layer {
    transform: Transform,
    codes: Vec<TernaryCode>,
    gain: f64,
    sparsity: usize,
}

impl Layer {
    pub fn new(
        transform: Transform,
        codes: Vec<TernaryCode>,
        gain: f64,
        sparsity: usize,
    ) -> Result<Self> {
        if codes.is_empty() {
            return Err(Error::invalid("a layer must hold at least one code"));
        }
        let l = transform.rows();
        if let Some(bad) = codes.iter().find(|c| c.len() != l) {
            return Err(Error::DimensionMismatch {
                expected: l,
                actual: bad.len(),
            });
        }
        if sparsity == 0 || sparsity > l {
            return Err(Error::invalid(format!(
                "layer sparsity must satisfy 1 <= S <= L, got S = {sparsity}, L = {l}"
            )));
        }
        if !gain.is_finite() {
            return Err(Error::invalid("layer gain must be finite"));
        }
        Ok(Self {
            transform,
            codes,
            gain,
            sparsity,
        })
    }

    pub fn transform(&self) -> &Transform {
        &self.transform
    }

    pub fn codes(&self) -> &[TernaryCode] {
        &self.codes
    }

    pub fn code(&self, item: usize) -> Result<&TernaryCode> {
        self.codes.get(item).ok_or(Error::IndexOutOfRange {
            index: item,
            len: self.codes.len(),
        })
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn sparsity(&self) -> usize {
        self.sparsity
    }

    pub fn code_length(&self) -> usize {
        self.transform.rows()
    }
}

/// Reconstruction depth: use layers `1..=k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ReconstructionLevel(usize);

impl ReconstructionLevel {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("reconstruction level must be at least 1"));
        }
        Ok(Self(k))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LayeredManifest {
    version: u32,
    dimension: usize,
    items: usize,
    layers: usize,
    residual_history: Vec<f64>,
}

/// A stack of refinement layers over a common item set.
///
/// Layer `i + 1` encodes the residual left by layers `1..=i`, so a depth-`k`
/// reconstruction reads only the first `k` layers and is unaffected by
/// anything stored deeper.
#[derive(Debug, Clone)]
pub struct LayeredCodebooks {
    layers: Vec<Layer>,
    residual_history: Vec<f64>,
    dimension: usize,
    items: usize,
}

impl LayeredCodebooks {
    /// Assembles a stack from prebuilt layers, checking shape consistency.
    pub fn from_parts(
        layers: Vec<Layer>,
        dimension: usize,
        items: usize,
        residual_history: Vec<f64>,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("at least one layer is required"));
        }
        for layer in &layers {
            if layer.transform.cols() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    actual: layer.transform.cols(),
                });
            }
            if layer.codes.len() != items {
                return Err(Error::DimensionMismatch {
                    expected: items,
                    actual: layer.codes.len(),
                });
            }
        }
        if residual_history.len() != layers.len() {
            return Err(Error::invalid(format!(
                "residual history must have one entry per layer, got {} for {} layers",
                residual_history.len(),
                layers.len()
            )));
        }
        Ok(Self {
            layers,
            residual_history,
            dimension,
            items,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn num_items(&self) -> usize {
        self.items
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer(&self, index: usize) -> Result<&Layer> {
        self.layers.get(index).ok_or(Error::IndexOutOfRange {
            index,
            len: self.layers.len(),
        })
    }

    /// Frobenius norm of the residual after each layer, in layer order.
    pub fn residual_history(&self) -> &[f64] {
        &self.residual_history
    }

    /// Rate in bits per dimension contributed by each layer.
    pub fn layer_rates(&self) -> Vec<f64> {
        self.layers
            .iter()
            .map(|layer| {
                code_rate(layer.code_length(), layer.sparsity)
                    .expect("layer invariants keep S <= L")
            })
            .collect()
    }

    /// Running total of `layer_rates`.
    pub fn cumulative_rates(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.layer_rates()
            .into_iter()
            .map(|r| {
                acc += r;
                acc
            })
            .collect()
    }

    /// Sum of the first `level` layer contributions for one item.
    pub fn reconstruct_item(&self, item: usize, level: ReconstructionLevel) -> Result<Array1<f64>> {
        let k = level.get();
        if k > self.layers.len() {
            return Err(Error::IndexOutOfRange {
                index: k,
                len: self.layers.len(),
            });
        }
        if item >= self.items {
            return Err(Error::IndexOutOfRange {
                index: item,
                len: self.items,
            });
        }
        let mut x = Array1::<f64>::zeros(self.dimension);
        for layer in &self.layers[..k] {
            add_scaled_decode(&mut x, layer.transform(), &layer.codes[item], layer.gain);
        }
        Ok(x)
    }
}

fn add_scaled_decode(x: &mut Array1<f64>, transform: &Transform, code: &TernaryCode, gain: f64) {
    let n = x.len();
    if transform.is_orthonormal() {
        let w = transform.matrix();
        for (pos, sign) in code.support() {
            let g = gain * f64::from(sign);
            let row = w.row(pos);
            for j in 0..n {
                x[j] += g * row[j];
            }
        }
    } else {
        let pinv = transform.pinv().expect("validated at construction");
        for (pos, sign) in code.support() {
            let g = gain * f64::from(sign);
            let col = pinv.column(pos);
            for j in 0..n {
                x[j] += g * col[j];
            }
        }
    }
}

/// Builds a refinement stack over the columns of `x` (`N×M`, one item per
/// column). Each layer encodes the residual left by the layers before it;
/// learned layers draw their initialization from `seed` and the layer index.
pub fn build_layers(
    x: ArrayView2<'_, f64>,
    specs: &[LayerSpec],
    seed: u64,
) -> Result<LayeredCodebooks> {
    let (n, m) = x.dim();
    if n == 0 || m == 0 {
        return Err(Error::invalid("item matrix must be non-empty"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("item entries must be finite"));
    }
    if specs.is_empty() {
        return Err(Error::invalid("at least one layer spec is required"));
    }

    let mut residual: Array2<f64> = x.to_owned();
    let mut layers = Vec::with_capacity(specs.len());
    let mut residual_history = Vec::with_capacity(specs.len());

    for (index, spec) in specs.iter().enumerate() {
        let l = spec.code_length;
        if spec.sparsity == 0 || spec.sparsity > l {
            return Err(Error::invalid(format!(
                "layer {index}: sparsity must satisfy 1 <= S <= L, got S = {}, L = {l}",
                spec.sparsity
            )));
        }
        let transform = match &spec.transform {
            TransformSource::Learn {
                max_iterations,
                convergence_tol,
            } => {
                let cfg = LearningConfig {
                    sparsity: spec.sparsity,
                    max_iterations: *max_iterations,
                    convergence_tol: *convergence_tol,
                    seed: derive_seed(seed, index as u64),
                };
                learn_transform(residual.view(), l, &cfg)?.transform
            }
            TransformSource::Fixed(t) => {
                if t.rows() != l {
                    return Err(Error::DimensionMismatch {
                        expected: l,
                        actual: t.rows(),
                    });
                }
                if t.cols() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        actual: t.cols(),
                    });
                }
                t.clone()
            }
        };

        let projections = transform.matrix().dot(&residual);
        let mut codes = Vec::with_capacity(m);
        let mut gain_num = 0.0;
        let mut gain_den = 0.0;
        for col in projections.columns() {
            let code = ternarize(hard_threshold(col, spec.sparsity).view());
            let (num, den) = gain_terms(col, &code);
            gain_num += num;
            gain_den += den;
            codes.push(code);
        }
        let gain = match spec.gain {
            GainMode::Fitted => {
                if gain_den == 0.0 {
                    0.0
                } else {
                    gain_num / gain_den
                }
            }
            GainMode::Unit => 1.0,
        };

        for (item, mut col) in residual.columns_mut().into_iter().enumerate() {
            let code = &codes[item];
            if transform.is_orthonormal() {
                let w = transform.matrix();
                for (pos, sign) in code.support() {
                    let g = gain * f64::from(sign);
                    let row = w.row(pos);
                    for j in 0..n {
                        col[j] -= g * row[j];
                    }
                }
            } else {
                let pinv = transform.pinv()?;
                for (pos, sign) in code.support() {
                    let g = gain * f64::from(sign);
                    let pcol = pinv.column(pos);
                    for j in 0..n {
                        col[j] -= g * pcol[j];
                    }
                }
            }
        }
        residual_history.push(residual.iter().map(|v| v * v).sum::<f64>().sqrt());
        layers.push(Layer::new(transform, codes, gain, spec.sparsity)?);
    }

    LayeredCodebooks::from_parts(layers, n, m, residual_history)
}

pub(crate) use manifest_io::{read_manifest, write_manifest};

mod manifest_io {
    use std::fs;
    use std::path::Path;

    use super::{LayeredCodebooks, LayeredManifest};
    use crate::error::{Error, Result};

    pub(crate) fn write_manifest(stack: &LayeredCodebooks, path: &Path) -> Result<()> {
        let manifest = LayeredManifest {
            version: 1,
            dimension: stack.dimension,
            items: stack.items,
            layers: stack.layers.len(),
            residual_history: stack.residual_history.clone(),
        };
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::format(format!("manifest encoding failed: {e}")))?;
        fs::write(path, text)?;
        Ok(())
    }

    pub(crate) fn read_manifest(path: &Path) -> Result<(usize, usize, usize, Vec<f64>)> {
        let text = fs::read_to_string(path)?;
        let manifest: LayeredManifest = serde_json::from_str(&text)
            .map_err(|e| Error::format(format!("manifest decoding failed: {e}")))?;
        if manifest.version != 1 {
            return Err(Error::format(format!(
                "unsupported manifest version {}",
                manifest.version
            )));
        }
        Ok((
            manifest.dimension,
            manifest.items,
            manifest.layers,
            manifest.residual_history,
        ))
    }
}

impl LayeredCodebooks {
    /// Writes one transform and one codebook file per layer plus a manifest
    /// into `dir`.
    pub fn save_dir(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_manifest(self, &dir.join("manifest.json"))?;
        for (index, layer) in self.layers.iter().enumerate() {
            crate::io::write_transform(&dir.join(format!("layer_{index:02}.sttf")), layer.transform())?;
            crate::io::write_codebook(
                &dir.join(format!("layer_{index:02}.stcb")),
                index as u8,
                layer.sparsity(),
                layer.gain(),
                layer.codes(),
            )?;
        }
        Ok(())
    }

    /// Reads a stack previously written by `save_dir`.
    pub fn load_dir(dir: &std::path::Path) -> Result<Self> {
        let (dimension, items, num_layers, residual_history) =
            read_manifest(&dir.join("manifest.json"))?;
        let mut layers = Vec::with_capacity(num_layers);
        for index in 0..num_layers {
            let transform = crate::io::read_transform(&dir.join(format!("layer_{index:02}.sttf")))?;
            let book = crate::io::read_codebook(&dir.join(format!("layer_{index:02}.stcb")))?;
            if usize::from(book.layer_index) != index {
                return Err(Error::format(format!(
                    "codebook file for layer {index} carries layer index {}",
                    book.layer_index
                )));
            }
            layers.push(Layer::new(transform, book.codes, book.gain, book.sparsity)?);
        }
        Self::from_parts(layers, dimension, items, residual_history)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::stream_rng;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, RngExt};
    use rand_distr::StandardNormal;

    fn identity_spec(n: usize, s: usize) -> LayerSpec {
        LayerSpec {
            code_length: n,
            sparsity: s,
            transform: TransformSource::Fixed(Transform::identity(n)),
            gain: GainMode::Fitted,
        }
    }

    #[test]
    fn two_identity_layers_refine_a_single_item() {
        let x = array![[3.0], [-1.0], [0.5], [-2.0]];
        let specs = vec![identity_spec(4, 2), identity_spec(4, 2)];
        let stack = build_layers(x.view(), &specs, 0).unwrap();

        assert_eq!(stack.layer(0).unwrap().codes()[0].entries(), &[1, 0, 0, -1]);
        assert_abs_diff_eq!(stack.layer(0).unwrap().gain(), 2.5, epsilon = 1e-12);

        let level1 = stack
            .reconstruct_item(0, ReconstructionLevel::new(1).unwrap())
            .unwrap();
        assert_abs_diff_eq!(level1[0], 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(level1[3], -2.5, epsilon = 1e-12);

        assert_eq!(stack.layer(1).unwrap().codes()[0].entries(), &[1, -1, 0, 0]);
        assert_abs_diff_eq!(stack.layer(1).unwrap().gain(), 0.75, epsilon = 1e-12);

        let level2 = stack
            .reconstruct_item(0, ReconstructionLevel::new(2).unwrap())
            .unwrap();
        assert_abs_diff_eq!(level2[0], 3.25, epsilon = 1e-12);
        assert_abs_diff_eq!(level2[1], -0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(level2[2], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(level2[3], -2.5, epsilon = 1e-12);

        let history = stack.residual_history();
        assert_abs_diff_eq!(history[0], 1.75f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(history[1], 0.625f64.sqrt(), epsilon = 1e-12);
    }

    fn gaussian_items(n: usize, m: usize, seed: u64) -> Array2<f64> {
        let mut rng = stream_rng(seed, 21);
        Array2::from_shape_fn((n, m), |_| rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn residuals_shrink_with_learned_layers() {
        let x = gaussian_items(24, 80, 4);
        let specs = vec![LayerSpec::learned(24, 6); 3];
        let stack = build_layers(x.view(), &specs, 7).unwrap();
        let initial = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let history = stack.residual_history();
        assert!(history[0] < initial);
        for pair in history.windows(2) {
            assert!(pair[1] < pair[0]);
        }
    }

    #[test]
    fn depth_k_reconstruction_ignores_deeper_layers() {
        let x = gaussian_items(16, 30, 2);
        let specs = vec![LayerSpec::learned(16, 4); 3];
        let stack = build_layers(x.view(), &specs, 9).unwrap();

        let mut truncated_layers = stack.layers()[..2].to_vec();
        let scrambled = TernaryCode::new(vec![1i8; 16]).unwrap();
        let bogus = Layer::new(
            stack.layer(2).unwrap().transform().clone(),
            vec![scrambled; 30],
            99.0,
            16,
        )
        .unwrap();
        truncated_layers.push(bogus);
        let tampered = LayeredCodebooks::from_parts(
            truncated_layers,
            16,
            30,
            stack.residual_history().to_vec(),
        )
        .unwrap();

        let level = ReconstructionLevel::new(2).unwrap();
        for item in 0..30 {
            let a = stack.reconstruct_item(item, level).unwrap();
            let b = tampered.reconstruct_item(item, level).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn save_and_load_round_trip() {
        let x = gaussian_items(12, 25, 3);
        let specs = vec![LayerSpec::learned(12, 3); 2];
        let stack = build_layers(x.view(), &specs, 5).unwrap();

        let dir = tempfile::tempdir().unwrap();
        stack.save_dir(dir.path()).unwrap();
        let loaded = LayeredCodebooks::load_dir(dir.path()).unwrap();

        assert_eq!(loaded.num_layers(), stack.num_layers());
        assert_eq!(loaded.num_items(), stack.num_items());
        assert_eq!(loaded.residual_history(), stack.residual_history());
        for (a, b) in stack.layers().iter().zip(loaded.layers()) {
            assert_eq!(a.gain(), b.gain());
            assert_eq!(a.sparsity(), b.sparsity());
            assert_eq!(a.codes(), b.codes());
            assert_eq!(a.transform().matrix(), b.transform().matrix());
        }
    }

    #[test]
    fn cumulative_rates_accumulate_layer_rates() {
        let x = gaussian_items(8, 10, 1);
        let specs = vec![identity_spec(8, 2), identity_spec(8, 4)];
        let stack = build_layers(x.view(), &specs, 0).unwrap();
        let per_layer = stack.layer_rates();
        let cumulative = stack.cumulative_rates();
        assert_abs_diff_eq!(cumulative[0], per_layer[0], epsilon = 1e-15);
        assert_abs_diff_eq!(
            cumulative[1],
            per_layer[0] + per_layer[1],
            epsilon = 1e-15
        );
    }

    #[test]
    fn level_zero_is_rejected() {
        assert!(ReconstructionLevel::new(0).is_err());
    }
}
