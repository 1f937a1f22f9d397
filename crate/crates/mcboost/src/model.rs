//! Trained ensemble: scoring, classification, and JSON persistence.
//!
//! A model stores its trees with raw Newton leaf values; the shrinkage is
//! kept once in the header and applied at replay. That makes prediction at
//! any round prefix `m <= M` possible after the fact, so one trained model
//! yields a whole learning curve.
//!
//! Score replay mirrors training exactly. MART rounds add
//! `nu * leaf(sample)` to every class. ABC-family rounds update the non-base
//! classes the same way and then overwrite the base-class score with minus
//! the sum of the others, the same assignment the trainer performs, so the
//! replayed scores match the final training state bit for bit and every
//! score vector sums to zero.
//!
//! The on-disk format is JSON with a `version` field, checked on load, and
//! floats printed with 17 significant digits so that parsing returns the
//! exact bits that were saved.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boosting::Variant;
use crate::regtree::{Node, RegressionTree};

/// Version stamped into every saved model file and required on load.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported model format version {found} (this build reads version {expected})")]
    Version { found: u64, expected: u32 },
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("sample has {got} features, model expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("round {requested} out of range: model has {available} rounds")]
    RoundOutOfRange { requested: usize, available: usize },
}

/// One boosting round: `base` is the mirrored class for ABC-family rounds
/// (None for MART), and `trees` are the class trees in ascending class
/// order, skipping the base class when there is one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRound {
    pub base: Option<usize>,
    pub trees: Vec<RegressionTree>,
}

/// A trained ensemble plus the metadata needed to apply it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub version: u32,
    /// number of classes
    #[serde(rename = "K")]
    pub k: usize,
    /// number of features
    #[serde(rename = "D")]
    pub d: usize,
    /// shrinkage applied to every leaf at replay
    pub nu: f64,
    pub variant: Variant,
    /// original label strings, index = encoded class
    pub class_names: Vec<String>,
    pub rounds: Vec<ModelRound>,
}

/// Applies one round's trees to a score row, exactly as training does:
/// add `nu * leaf` per trained class, then for ABC-family rounds overwrite
/// the base score with minus the sum of the other scores.
pub(crate) fn apply_round_to_scores(
    round: &ModelRound,
    nu: f64,
    sample: &[f64],
    scores: &mut [f64],
) {
    let k_classes = scores.len();
    match round.base {
        None => {
            for (k, tree) in round.trees.iter().enumerate() {
                scores[k] += nu * tree.predict(sample);
            }
        }
        Some(b) => {
            let mut trees = round.trees.iter();
            for k in (0..k_classes).filter(|&k| k != b) {
                let tree = trees.next().expect("ABC round must hold K-1 trees");
                scores[k] += nu * tree.predict(sample);
            }
            let mut sum = 0.0;
            for (k, v) in scores.iter().enumerate() {
                if k != b {
                    sum += *v;
                }
            }
            scores[b] = -sum;
        }
    }
}

impl Model {
    pub fn num_rounds(&self) -> usize {
        self.rounds.len()
    }

    /// Scores after replaying the first `up_to_round` rounds on `sample`.
    /// `up_to_round = 0` returns the all-zero initialization.
    pub fn predict_scores(
        &self,
        sample: &[f64],
        up_to_round: usize,
    ) -> Result<Vec<f64>, ModelError> {
        if sample.len() != self.d {
            return Err(ModelError::Dimension {
                expected: self.d,
                got: sample.len(),
            });
        }
        if up_to_round > self.rounds.len() {
            return Err(ModelError::RoundOutOfRange {
                requested: up_to_round,
                available: self.rounds.len(),
            });
        }
        let mut scores = vec![0.0; self.k];
        for round in &self.rounds[..up_to_round] {
            apply_round_to_scores(round, self.nu, sample, &mut scores);
        }
        Ok(scores)
    }

    /// Class with the largest score after a full replay; the softmax is
    /// monotone, so this is also the argmax of the class probabilities.
    /// Ties break to the lowest class index.
    pub fn predict_class(&self, sample: &[f64]) -> Result<usize, ModelError> {
        let scores = self.predict_scores(sample, self.rounds.len())?;
        Ok(argmax(&scores))
    }

    /// Structural integrity: per-variant tree counts and base classes,
    /// feature indices within dimension, child ids within bounds, finite
    /// numbers, and consistent header fields.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.k < 2 {
            return Err(ModelError::Invalid(format!(
                "K must be >= 2, got {}",
                self.k
            )));
        }
        if self.d < 1 {
            return Err(ModelError::Invalid("D must be >= 1".into()));
        }
        if self.class_names.len() != self.k {
            return Err(ModelError::Invalid(format!(
                "{} class names for K = {}",
                self.class_names.len(),
                self.k
            )));
        }
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(ModelError::Invalid(format!(
                "nu must be in (0, 1], got {}",
                self.nu
            )));
        }
        if let Variant::FixedBase(b) = self.variant {
            if b >= self.k {
                return Err(ModelError::Invalid(format!(
                    "fixed base class {b} out of range for K = {}",
                    self.k
                )));
            }
        }
        for (m, round) in self.rounds.iter().enumerate() {
            let expected_trees = if self.variant.is_abc_family() {
                self.k - 1
            } else {
                self.k
            };
            if round.trees.len() != expected_trees {
                return Err(ModelError::Invalid(format!(
                    "round {m} holds {} trees, variant {} requires {expected_trees}",
                    round.trees.len(),
                    self.variant
                )));
            }
            match (self.variant.is_abc_family(), round.base) {
                (true, Some(b)) if b < self.k => {
                    if let Variant::FixedBase(fixed) = self.variant {
                        if b != fixed {
                            return Err(ModelError::Invalid(format!(
                                "round {m} uses base {b}, variant pins base {fixed}"
                            )));
                        }
                    }
                }
                (true, Some(b)) => {
                    return Err(ModelError::Invalid(format!(
                        "round {m} base class {b} out of range for K = {}",
                        self.k
                    )));
                }
                (true, None) => {
                    return Err(ModelError::Invalid(format!(
                        "round {m} is missing a base class"
                    )));
                }
                (false, Some(_)) => {
                    return Err(ModelError::Invalid(format!(
                        "round {m} carries a base class but the variant is mart"
                    )));
                }
                (false, None) => {}
            }
            for (t, tree) in round.trees.iter().enumerate() {
                validate_tree(tree, self.d)
                    .map_err(|e| ModelError::Invalid(format!("round {m} tree {t}: {e}")))?;
            }
        }
        Ok(())
    }
}

fn validate_tree(tree: &RegressionTree, d: usize) -> Result<(), String> {
    let n = tree.num_nodes();
    if n == 0 {
        return Err("empty tree".into());
    }
    for (id, node) in tree.nodes().iter().enumerate() {
        match node {
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if *feature >= d {
                    return Err(format!("split on feature {feature}, dimension is {d}"));
                }
                if !threshold.is_finite() {
                    return Err(format!("non-finite threshold at node {id}"));
                }
                if *left >= n || *right >= n {
                    return Err(format!("child id out of range at node {id}"));
                }
            }
            Node::Leaf { value } => {
                if !value.is_finite() {
                    return Err(format!("non-finite leaf value at node {id}"));
                }
            }
        }
    }
    Ok(())
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = k;
        }
    }
    best
}

/// JSON formatter that prints every float with 17 significant digits, enough
/// to reproduce the exact f64 bits on parse.
struct FullPrecision;

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Writes the model as self-describing JSON. Floats keep full precision, so
/// a load returns bit-identical predictions.
pub fn save_model(model: &Model, path: &Path) -> Result<(), ModelError> {
    let io_err = |source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut writer = std::io::BufWriter::new(file);
    let mut ser = serde_json::Serializer::with_formatter(&mut writer, FullPrecision);
    model.serialize(&mut ser)?;
    writer.write_all(b"\n").map_err(io_err)?;
    writer.flush().map_err(io_err)?;
    Ok(())
}

/// Reads a model saved by [`save_model`], checking the format version before
/// interpreting the rest and validating the structure afterwards. Truncated
/// or malformed files produce an error, never a partial model.
pub fn load_model(path: &Path) -> Result<Model, ModelError> {
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let found = value
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| ModelError::Invalid("missing version field".into()))?;
    if found != MODEL_FORMAT_VERSION as u64 {
        return Err(ModelError::Version {
            found,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let model: Model = serde_json::from_value(value)?;
    model.validate()?;
    Ok(model)
}
