//! Sparse ternary coding toolkit.
//!
//! Data vectors are mapped to length-`L` codes over `{-1, 0, +1}` by a learned
//! orthonormal transform followed by sign-of-hard-threshold. On top of that
//! single-layer codec this crate provides:
//!
//! - [`learn`]: alternating sparse-coding / transform-update learning of the
//!   sparsifying transform,
//! - [`layered`]: a successive-refinement stack of ternary codebooks, each
//!   layer encoding the residual left by the previous ones,
//! - [`ambiguize`]: privacy amplification by inserting random `±1` entries
//!   into the zero positions (co-support) of a code, plus coordinate subspace
//!   selection for publishable codebooks,
//! - [`search`]: support-intersection similarity scoring, candidate-list
//!   extraction and an inverted index that matches brute force bit for bit,
//! - [`io`]: the `STTF`/`STCB`/`STSL` binary file formats.

pub mod ambiguize;
pub mod code;
pub mod encode;
pub mod error;
pub mod io;
pub mod layered;
pub mod learn;
pub mod search;
pub mod seeding;
pub mod transform;

pub use ambiguize::{ambiguize_code, ambiguize_codebook, ambiguize_query, apply_selection, select_subspace};
pub use ambiguize::{AmbiguizationConfig, PublicBundle};
pub use code::TernaryCode;
pub use encode::{code_rate, decode, encode, fit_gain, hard_threshold, ternarize};
pub use error::{Error, Result};
pub use layered::{build_layers, GainMode, Layer, LayerSpec, LayeredCodebooks, ReconstructionLevel, TransformSource};
pub use learn::{learn_transform, random_orthonormal, LearnOutcome, LearningConfig};
pub use search::{score, threshold_list, top_gamma, CandidateList, InvertedIndex, ScorePair, SelectionRule, Stage};
pub use transform::{PinvPolicy, Transform};
