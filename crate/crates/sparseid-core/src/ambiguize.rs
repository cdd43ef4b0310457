use rand::seq::index::sample;
use rand::{Rng, RngExt};
use rayon::prelude::*;

use crate::code::TernaryCode;
use crate::error::{Error, Result};
use crate::seeding::{derive_seed, stream_rng};

const SELECTION_STREAM_TAG: u64 = 0x7375_6273_7061_6365;
const NOISE_STREAM_TAG: u64 = 0x616d_6269_67;

/// Settings for publishing a codebook: how much `±1` noise goes into each
/// code's co-support and which coordinate subspace survives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AmbiguizationConfig {
    /// Number of noise entries inserted per code.
    pub noise_support: usize,
    /// Number of coordinates kept by subspace selection.
    pub retained_length: usize,
    /// Seed for drawing the retained coordinate subset.
    pub selection_seed: u64,
    /// Seed for the per-item noise streams.
    pub noise_seed: u64,
}

/// A publishable codebook: ambiguized codes restricted to the retained
/// subspace, together with the subspace itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicBundle {
    /// One length-`retained_length` code per database item.
    pub codes: Vec<TernaryCode>,
    /// Sorted original-domain indices of the retained coordinates.
    pub selection: Vec<usize>,
}

/// Draws `retained_length` distinct coordinates out of `code_length`
/// uniformly at random and returns them sorted ascending.
pub fn select_subspace(
    code_length: usize,
    retained_length: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if retained_length == 0 || retained_length > code_length {
        return Err(Error::invalid(format!(
            "retained length must satisfy 1 <= L_p <= L, got L_p = {retained_length}, L = {code_length}"
        )));
    }
    let mut rng = stream_rng(seed, SELECTION_STREAM_TAG);
    let mut picked = sample(&mut rng, code_length, retained_length).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Inserts `noise_support` i.i.d. `±1` entries at distinct positions drawn
/// uniformly from the code's co-support. Original nonzero entries are never
/// touched.
pub fn ambiguize_code<R: Rng + ?Sized>(
    code: &TernaryCode,
    noise_support: usize,
    rng: &mut R,
) -> Result<TernaryCode> {
    let zeros: Vec<usize> = code.co_support().collect();
    if noise_support > zeros.len() {
        return Err(Error::invalid(format!(
            "noise support {noise_support} exceeds co-support size {}",
            zeros.len()
        )));
    }
    let mut entries = code.entries().to_vec();
    if noise_support > 0 {
        for slot in sample(rng, zeros.len(), noise_support) {
            entries[zeros[slot]] = if rng.random::<bool>() { 1 } else { -1 };
        }
    }
    Ok(TernaryCode::from_signs(entries))
}

/// Restricts a code to the given sorted coordinate subset.
pub fn apply_selection(code: &TernaryCode, selection: &[usize]) -> Result<TernaryCode> {
    if selection.is_empty() {
        return Err(Error::invalid("selection must keep at least one coordinate"));
    }
    let entries = code.entries();
    let mut out = Vec::with_capacity(selection.len());
    let mut prev: Option<usize> = None;
    for &idx in selection {
        if idx >= entries.len() {
            return Err(Error::IndexOutOfRange {
                index: idx,
                len: entries.len(),
            });
        }
        if prev.is_some_and(|p| p >= idx) {
            return Err(Error::invalid(
                "selection indices must be strictly increasing",
            ));
        }
        prev = Some(idx);
        out.push(entries[idx]);
    }
    Ok(TernaryCode::from_signs(out))
}

/// Ambiguizes a query code and restricts it to the published subspace in one
/// step. The noise is drawn from the caller's stream, so repeated queries
/// differ.
pub fn ambiguize_query<R: Rng + ?Sized>(
    code: &TernaryCode,
    noise_support: usize,
    selection: &[usize],
    rng: &mut R,
) -> Result<TernaryCode> {
    let noisy = ambiguize_code(code, noise_support, rng)?;
    apply_selection(&noisy, selection)
}

/// Ambiguizes every code of a codebook with an independent per-item noise
/// stream and restricts the result to a freshly drawn subspace.
pub fn ambiguize_codebook(
    codes: &[TernaryCode],
    config: &AmbiguizationConfig,
) -> Result<PublicBundle> {
    let Some(first) = codes.first() else {
        return Err(Error::invalid("codebook must hold at least one code"));
    };
    let l = first.len();
    if let Some(bad) = codes.iter().find(|c| c.len() != l) {
        return Err(Error::DimensionMismatch {
            expected: l,
            actual: bad.len(),
        });
    }
    let selection = select_subspace(l, config.retained_length, config.selection_seed)?;
    let public_codes = codes
        .par_iter()
        .enumerate()
        .map(|(item, code)| {
            let mut rng = stream_rng(
                config.noise_seed,
                derive_seed(NOISE_STREAM_TAG, item as u64),
            );
            let noisy = ambiguize_code(code, config.noise_support, &mut rng)?;
            apply_selection(&noisy, &selection)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PublicBundle {
        codes: public_codes,
        selection,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::stream_rng;

    #[test]
    fn subspace_is_sorted_unique_and_reproducible() {
        let a = select_subspace(64, 24, 5).unwrap();
        let b = select_subspace(64, 24, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 24);
        for pair in a.windows(2) {
            assert!(pair[0] < pair[1]);
        }
        assert!(*a.last().unwrap() < 64);

        let full = select_subspace(16, 16, 9).unwrap();
        assert_eq!(full, (0..16).collect::<Vec<_>>());
    }

    #[test]
    fn noise_lands_only_in_the_co_support() {
        let code = TernaryCode::new(vec![1, 0, -1, 0, 0, 0, 1, 0]).unwrap();
        let mut rng = stream_rng(3, 0);
        let noisy = ambiguize_code(&code, 4, &mut rng).unwrap();
        assert_eq!(noisy.support_size(), code.support_size() + 4);
        for (pos, sign) in code.support() {
            assert_eq!(noisy.entries()[pos], sign);
        }
    }

    #[test]
    fn oversized_noise_support_is_rejected() {
        let code = TernaryCode::new(vec![1, -1, 0]).unwrap();
        let mut rng = stream_rng(0, 0);
        assert!(ambiguize_code(&code, 2, &mut rng).is_err());
        assert!(ambiguize_code(&code, 1, &mut rng).is_ok());
    }

    #[test]
    fn selection_extracts_coordinates_in_order() {
        let code = TernaryCode::new(vec![1, 0, -1, 0]).unwrap();
        let out = apply_selection(&code, &[0, 2]).unwrap();
        assert_eq!(out.entries(), &[1, -1]);

        assert!(apply_selection(&code, &[2, 0]).is_err());
        assert!(apply_selection(&code, &[1, 1]).is_err());
        assert!(apply_selection(&code, &[4]).is_err());
        assert!(apply_selection(&code, &[]).is_err());
    }

    #[test]
    fn codebook_ambiguization_is_deterministic() {
        let codes: Vec<TernaryCode> = (0..20)
            .map(|i| {
                let mut entries = vec![0i8; 32];
                entries[i] = 1;
                entries[i + 8] = -1;
                TernaryCode::new(entries).unwrap()
            })
            .collect();
        let cfg = AmbiguizationConfig {
            noise_support: 10,
            retained_length: 24,
            selection_seed: 11,
            noise_seed: 12,
        };
        let a = ambiguize_codebook(&codes, &cfg).unwrap();
        let b = ambiguize_codebook(&codes, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.codes.len(), 20);
        for code in &a.codes {
            assert_eq!(code.len(), 24);
        }
    }

    #[test]
    fn per_item_noise_streams_differ() {
        let code = TernaryCode::new(vec![0i8; 64]).unwrap();
        let cfg = AmbiguizationConfig {
            noise_support: 16,
            retained_length: 64,
            selection_seed: 1,
            noise_seed: 2,
        };
        let bundle = ambiguize_codebook(&[code.clone(), code], &cfg).unwrap();
        assert_ne!(bundle.codes[0], bundle.codes[1]);
    }
}
