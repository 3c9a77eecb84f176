//! The feature extractor, the normalized prototype classifier, and model
//! checkpoints.
//!
//! The extractor is a rectified MLP mapping flattened pixels to a d-dim
//! representation h; classification L2-normalizes h onto the unit
//! hypersphere and scores it against one prototype row per class, scaled by
//! 1/T before the softmax. In `normalized_mode` the prototypes themselves
//! are unit-normalized at classification time, making the logits cosine
//! similarities (the "w cosine" variant).

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::PixelBuf;
use crate::error::{Error, Result};
use crate::seeding;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Layer widths: input -> hidden... -> feature_dim, plus the class count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelDims {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    pub num_classes: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            input_dim: 3 * 16 * 16,
            hidden: vec![512, 512],
            feature_dim: 256,
            num_classes: 5,
        }
    }
}

impl ModelDims {
    pub fn layer_widths(&self) -> Vec<usize> {
        let mut widths = Vec::with_capacity(self.hidden.len() + 2);
        widths.push(self.input_dim);
        widths.extend_from_slice(&self.hidden);
        widths.push(self.feature_dim);
        widths
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.feature_dim == 0 || self.num_classes == 0 {
            return Err(Error::config(format!(
                "model dims must be positive: input {}, feature {}, classes {}",
                self.input_dim, self.feature_dim, self.num_classes
            )));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::config("hidden widths must be positive"));
        }
        Ok(())
    }
}

/// MLP with rectified hidden layers and a linear output layer (the
/// embedding head), weights stored `[out, in]` (one row per unit). Keeping
/// the last layer linear lets embeddings span the full hypersphere and
/// rules out all-dead feature rows, which normalization must reject.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractor {
    weights: Vec<Tensor>,
    biases: Vec<Tensor>,
    dims: ModelDims,
}

impl FeatureExtractor {
    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights_mut(&mut self) -> &mut [Tensor] {
        &mut self.weights
    }
}

/// One prototype row per class plus the softmax temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeClassifier {
    /// `[K, d]`; row k is the direction prototype of class k.
    pub prototypes: Tensor,
    pub temperature: f64,
    pub normalized_mode: bool,
}

/// Extractor and classifier trained together.
#[derive(Debug, Clone, PartialEq)]
pub struct Con2daModel {
    pub extractor: FeatureExtractor,
    pub classifier: PrototypeClassifier,
}

impl Con2daModel {
    /// All trainable tensors in a fixed order: per-layer weight then bias,
    /// then the prototype matrix.
    pub fn parameters(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for (w, b) in self.extractor.weights.iter().zip(&self.extractor.biases) {
            out.push(w);
            out.push(b);
        }
        out.push(&self.classifier.prototypes);
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for (w, b) in self
            .extractor
            .weights
            .iter_mut()
            .zip(self.extractor.biases.iter_mut())
        {
            out.push(w);
            out.push(b);
        }
        out.push(&mut self.classifier.prototypes);
        out
    }

    /// Extractor parameters only (everything but the prototypes).
    pub fn extractor_parameters(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for (w, b) in self.extractor.weights.iter().zip(&self.extractor.biases) {
            out.push(w);
            out.push(b);
        }
        out
    }

    pub fn zero_grads(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }
}

/// Glorot-uniform initialization: weights and prototypes drawn from
/// U(-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))), biases zero.
/// Deterministic under `seed`. Temperature starts at the standard 0.05;
/// the trainer overwrites it from its config.
pub fn init_model(seed: u64, dims: &ModelDims) -> Result<Con2daModel> {
    dims.validate()?;
    let mut rng = seeding::rng_from(&[seed, seeding::stream::MODEL_INIT]);
    let widths = dims.layer_widths();
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for pair in widths.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let values = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        weights.push(Tensor::param(vec![fan_out, fan_in], values)?);
        biases.push(Tensor::param(vec![fan_out], vec![0.0; fan_out])?);
    }
    let bound = (6.0 / (dims.feature_dim + dims.num_classes) as f64).sqrt();
    let proto_values = (0..dims.num_classes * dims.feature_dim)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    let prototypes = Tensor::param(vec![dims.num_classes, dims.feature_dim], proto_values)?;

    Ok(Con2daModel {
        extractor: FeatureExtractor {
            weights,
            biases,
            dims: dims.clone(),
        },
        classifier: PrototypeClassifier {
            prototypes,
            temperature: 0.05,
            normalized_mode: false,
        },
    })
}

/// A model's parameters registered on one tape. Gradients accumulate on the
/// tape leaves; [`BoundModel::apply_grads`] copies them back to the tensors.
pub struct BoundModel {
    layer_vars: Vec<(Var, Var)>,
    prototypes_var: Var,
    /// Same prototype values as a constant: classification through this node
    /// leaves the prototype gradient untouched.
    prototypes_const: Var,
    pub temperature: f64,
    pub normalized_mode: bool,
    input_dim: usize,
}

impl Con2daModel {
    pub fn bind(&self, tape: &mut Tape) -> BoundModel {
        let layer_vars = self
            .extractor
            .weights
            .iter()
            .zip(&self.extractor.biases)
            .map(|(w, b)| (tape.leaf(w), tape.leaf(b)))
            .collect();
        let prototypes_var = tape.leaf(&self.classifier.prototypes);
        let prototypes_const = tape.constant(&self.classifier.prototypes);
        BoundModel {
            layer_vars,
            prototypes_var,
            prototypes_const,
            temperature: self.classifier.temperature,
            normalized_mode: self.classifier.normalized_mode,
            input_dim: self.extractor.dims.input_dim,
        }
    }
}

impl BoundModel {
    /// MLP forward: `relu(x W^T + b)` on hidden layers, linear output.
    pub fn extract_features(&self, tape: &mut Tape, input: Var) -> Result<Var> {
        let cols = match tape.shape(input) {
            [_, c] => *c,
            other => {
                return Err(Error::contract(format!(
                    "extract_features: expected [batch, input_dim], got {other:?}"
                )))
            }
        };
        if cols != self.input_dim {
            return Err(Error::contract(format!(
                "extract_features: input width {cols} != input_dim {}",
                self.input_dim
            )));
        }
        let mut x = input;
        let last = self.layer_vars.len() - 1;
        for (i, (w, b)) in self.layer_vars.iter().enumerate() {
            let pre = tape.matmul_nt(x, *w)?;
            let pre = tape.add_bias(pre, *b)?;
            x = if i < last { tape.relu(pre) } else { pre };
        }
        Ok(x)
    }

    /// `softmax((1/T) * z W^T)` over already-normalized features `z`.
    /// With `detach_prototypes`, the prototype matrix is treated as a
    /// constant: no gradient flows to it from this branch.
    pub fn classify_normalized(
        &self,
        tape: &mut Tape,
        z: Var,
        detach_prototypes: bool,
    ) -> Result<Var> {
        let w = if detach_prototypes {
            self.prototypes_const
        } else {
            self.prototypes_var
        };
        let w = if self.normalized_mode {
            tape.l2_normalize_rows(w)?
        } else {
            w
        };
        let logits = tape.matmul_nt(z, w)?;
        tape.softmax_t(logits, self.temperature)
    }

    /// L2-normalize features, then classify.
    pub fn classify(&self, tape: &mut Tape, features: Var, detach_prototypes: bool) -> Result<Var> {
        let z = tape.l2_normalize_rows(features)?;
        self.classify_normalized(tape, z, detach_prototypes)
    }

    /// Parameter leaves in the same order as [`Con2daModel::parameters`].
    pub fn param_vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for (w, b) in &self.layer_vars {
            out.push(*w);
            out.push(*b);
        }
        out.push(self.prototypes_var);
        out
    }

    /// Copies tape gradients into the model's parameter grad buffers.
    pub fn apply_grads(&self, tape: &Tape, model: &mut Con2daModel) -> Result<()> {
        let vars = self.param_vars();
        for (var, param) in vars.iter().zip(model.parameters_mut()) {
            if let Some(g) = tape.grad(*var) {
                param.accumulate_grad(g)?;
            }
        }
        Ok(())
    }
}

/// One-shot forward without binding: used by evaluation paths.
pub fn extract_features(tape: &mut Tape, model: &Con2daModel, input: Var) -> Result<Var> {
    let bound = model.bind(tape);
    bound.extract_features(tape, input)
}

/// One-shot normalize-and-classify over plain features.
pub fn normalize_and_classify(
    tape: &mut Tape,
    model: &Con2daModel,
    features: Var,
) -> Result<Var> {
    let bound = model.bind(tape);
    bound.classify(tape, features, true)
}

/// Flattens pixel views into a `[batch, input_dim]` constant node.
pub fn batch_input(tape: &mut Tape, views: &[&PixelBuf], input_dim: usize) -> Result<Var> {
    if views.is_empty() {
        return Err(Error::contract("batch_input: empty batch"));
    }
    let mut values = Vec::with_capacity(views.len() * input_dim);
    for v in views {
        if v.numel() != input_dim {
            return Err(Error::contract(format!(
                "batch_input: view has {} pixels, expected {input_dim}",
                v.numel()
            )));
        }
        values.extend(v.data.iter().map(|&p| p as f64));
    }
    tape.constant_from(vec![views.len(), input_dim], values)
}

// ── Checkpoints ─────────────────────────────────────────────────────

const CHECKPOINT_MAGIC: &[u8; 4] = b"C2DA";
const CHECKPOINT_VERSION: u32 = 1;

/// Writes the model to the "C2DA" binary container (version, dims, then
/// f64 parameter blobs in parameter order).
pub fn save_model(model: &Con2daModel, path: impl AsRef<Path>) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&model.classifier.temperature.to_le_bytes());
    out.push(model.classifier.normalized_mode as u8);
    let dims = &model.extractor.dims;
    let widths = dims.layer_widths();
    out.extend_from_slice(&(widths.len() as u32).to_le_bytes());
    for w in &widths {
        out.extend_from_slice(&(*w as u32).to_le_bytes());
    }
    out.extend_from_slice(&(dims.num_classes as u32).to_le_bytes());
    for p in model.parameters() {
        for v in p.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let path = path.as_ref();
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Con2daModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut off = 0usize;
    let take = |off: &mut usize, n: usize, field: &'static str| -> Result<&[u8]> {
        if *off + n > bytes.len() {
            return Err(Error::Parse {
                offset: *off as u64,
                field,
                message: "truncated checkpoint".to_string(),
            });
        }
        let s = &bytes[*off..*off + n];
        *off += n;
        Ok(s)
    };
    if take(&mut off, 4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            field: "magic",
            message: "not a C2DA checkpoint".to_string(),
        });
    }
    let version = u32::from_le_bytes(take(&mut off, 4, "version")?.try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Parse {
            offset: 4,
            field: "version",
            message: format!("unsupported version {version}"),
        });
    }
    let temperature =
        f64::from_le_bytes(take(&mut off, 8, "temperature")?.try_into().expect("8 bytes"));
    let normalized_mode = take(&mut off, 1, "normalized_mode")?[0] != 0;
    let n_widths =
        u32::from_le_bytes(take(&mut off, 4, "widths")?.try_into().expect("4 bytes")) as usize;
    let mut widths = Vec::with_capacity(n_widths);
    for _ in 0..n_widths {
        widths
            .push(u32::from_le_bytes(take(&mut off, 4, "width")?.try_into().expect("4 bytes"))
                as usize);
    }
    if widths.len() < 2 {
        return Err(Error::Parse {
            offset: off as u64,
            field: "widths",
            message: "need at least input and feature widths".to_string(),
        });
    }
    let num_classes =
        u32::from_le_bytes(take(&mut off, 4, "num_classes")?.try_into().expect("4 bytes")) as usize;
    let dims = ModelDims {
        input_dim: widths[0],
        hidden: widths[1..widths.len() - 1].to_vec(),
        feature_dim: *widths.last().expect("non-empty"),
        num_classes,
    };
    dims.validate().map_err(|e| Error::Parse {
        offset: off as u64,
        field: "dims",
        message: e.to_string(),
    })?;

    let read_blob = |off: &mut usize, shape: Vec<usize>, field: &'static str| -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        let raw = take(off, numel * 8, field)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Tensor::param(shape, values)
    };
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for pair in dims.layer_widths().windows(2) {
        weights.push(read_blob(&mut off, vec![pair[1], pair[0]], "layer_weight")?);
        biases.push(read_blob(&mut off, vec![pair[1]], "layer_bias")?);
    }
    let prototypes = read_blob(&mut off, vec![num_classes, dims.feature_dim], "prototypes")?;
    if off != bytes.len() {
        return Err(Error::Parse {
            offset: off as u64,
            field: "end",
            message: format!("{} trailing bytes", bytes.len() - off),
        });
    }
    Ok(Con2daModel {
        extractor: FeatureExtractor {
            weights,
            biases,
            dims,
        },
        classifier: PrototypeClassifier {
            prototypes,
            temperature,
            normalized_mode,
        },
    })
}
