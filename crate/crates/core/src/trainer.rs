//! The training loop: dual mini-batch iterations, the three-loss backward
//! with asymmetric routing, Adam under cosine decay, early stopping, and
//! evaluation.
//!
//! Routing: the prototype matrix W receives gradient only from the
//! supervised loss. The unlabeled branches classify through a detached
//! (constant) copy of W, so one combined backward plus one Adam step per
//! iteration reproduces the split update rule exactly: f is driven by every
//! enabled loss, W by the supervised loss alone.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::augment::{make_pair, AugmentPolicy, PixelBuf, Sample};
use crate::data::{resolve_batch_size, BatchSpec, SsdaDataset};
use crate::error::{Error, Result};
use crate::losses::{
    entropy_loss, ntxent_loss, pseudo_label, self_supervised_loss, supervised_loss,
    NtxentDenominator,
};
use crate::model::{batch_input, init_model, Con2daModel, ModelDims};
use crate::optim::{adam_step, cosine_decay, AdamState, LrSchedule};
use crate::seeding::{self, stream};
use crate::tape::{Tape, Var};

/// Training objective family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMethod {
    /// Full dual-view objective: supervised + contrastive + self-supervised.
    #[default]
    Con2da,
    /// Labeled data only (both unsupervised losses forced off).
    SPlusT,
    /// Supervised loss plus conditional entropy on unlabeled predictions,
    /// with both f and W updated by the entropy term.
    Ent,
}

/// Every knob of a training run. Defaults carry the standard recipe:
/// T = 0.05, tau = 0.9, Adam(0.9, 0.999) at 8e-5 under cosine decay over
/// 5000 iterations with patience 50.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub method: TrainMethod,
    pub temperature: f64,
    pub threshold: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub total_iterations: u64,
    pub patience: u64,
    pub shots: u32,
    /// None applies the batch-size rule to the labeled target count.
    pub batch: Option<BatchSpec>,
    pub augment: AugmentPolicy,
    pub disable_contrastive: bool,
    pub disable_self_supervised: bool,
    /// Diagnostic switch used by the routing checks; not an experiment knob.
    pub disable_supervised: bool,
    /// The "w cosine" variant: unit-normalize prototypes at classification.
    pub cosine_classifier: bool,
    pub ntxent_denominator: NtxentDenominator,
    pub dims: ModelDims,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: TrainMethod::Con2da,
            temperature: 0.05,
            threshold: 0.9,
            learning_rate: 8e-5,
            beta1: 0.9,
            beta2: 0.999,
            total_iterations: 5000,
            patience: 50,
            shots: 3,
            batch: None,
            augment: AugmentPolicy::default(),
            disable_contrastive: false,
            disable_self_supervised: false,
            disable_supervised: false,
            cosine_classifier: false,
            ntxent_denominator: NtxentDenominator::Paper,
            dims: ModelDims::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.temperature > 0.0) {
            problems.push(format!("temperature must be positive, got {}", self.temperature));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            problems.push(format!("threshold must lie in (0, 1], got {}", self.threshold));
        }
        if !(self.learning_rate > 0.0) {
            problems.push(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                problems.push(format!("{name} must lie in [0, 1), got {beta}"));
            }
        }
        if self.total_iterations == 0 {
            problems.push("total_iterations must be positive".to_string());
        }
        if self.patience == 0 {
            problems.push("patience must be >= 1".to_string());
        }
        if !(self.shots == 1 || self.shots == 3) {
            problems.push(format!("shots must be 1 or 3, got {}", self.shots));
        }
        if let Err(e) = self.augment.validate() {
            problems.push(e.to_string());
        }
        if let Some(batch) = &self.batch {
            if let Err(e) = batch.validate() {
                problems.push(e.to_string());
            }
        }
        if let Err(e) = self.dims.validate() {
            problems.push(e.to_string());
        }
        if !self.supervised_enabled()
            && !self.contrastive_enabled()
            && !self.self_supervised_enabled()
            && self.method != TrainMethod::Ent
        {
            problems.push("every loss is disabled; nothing to train".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::config(problems.join("\n")))
        }
    }

    pub fn supervised_enabled(&self) -> bool {
        !self.disable_supervised
    }

    pub fn contrastive_enabled(&self) -> bool {
        self.method == TrainMethod::Con2da && !self.disable_contrastive
    }

    pub fn self_supervised_enabled(&self) -> bool {
        self.method == TrainMethod::Con2da && !self.disable_self_supervised
    }

    fn uses_unlabeled(&self) -> bool {
        self.contrastive_enabled()
            || self.self_supervised_enabled()
            || self.method == TrainMethod::Ent
    }

    fn schedule(&self) -> LrSchedule {
        LrSchedule {
            base_lr: self.learning_rate,
            total_iterations: self.total_iterations,
        }
    }

    /// Effective batch sizes: the configured ones, or the batch-size rule
    /// applied to the labeled target pool.
    pub fn resolve_batch(&self, n_target_labeled: usize) -> BatchSpec {
        self.batch.unwrap_or_else(|| {
            let n = resolve_batch_size(n_target_labeled);
            BatchSpec {
                labeled_batch_size: n,
                unlabeled_batch_size: n,
            }
        })
    }
}

/// One row of the training trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u64,
    pub lr: f64,
    pub l_sup: f64,
    pub l_cont: f64,
    pub l_self: f64,
    pub mask_fraction: f64,
    pub clamp_count: u64,
    /// Post-step validation accuracy; NaN until `fit` fills it in.
    pub val_acc: f64,
}

/// Everything a run produced. `wall_time_seconds` is the only
/// non-deterministic field; [`TrainReport::deterministic_eq`] ignores it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub per_iteration: Vec<IterationRecord>,
    pub best_validation_accuracy: f64,
    pub best_iteration: u64,
    pub final_target_unlabeled_accuracy: f64,
    pub wall_time_seconds: f64,
}

impl TrainReport {
    /// Equality over every reproducible field (wall time excluded).
    pub fn deterministic_eq(&self, other: &TrainReport) -> bool {
        self.per_iteration == other.per_iteration
            && self.best_validation_accuracy == other.best_validation_accuracy
            && self.best_iteration == other.best_iteration
            && self.final_target_unlabeled_accuracy == other.final_target_unlabeled_accuracy
    }

    /// The line-delimited metrics trace:
    /// `iteration,lr,l_sup,l_cont,l_self,mask_fraction,val_acc`.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("iteration,lr,l_sup,l_cont,l_self,mask_fraction,val_acc\n");
        for r in &self.per_iteration {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.iteration, r.lr, r.l_sup, r.l_cont, r.l_self, r.mask_fraction, r.val_acc
            ));
        }
        out
    }

    pub fn write_metrics_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.metrics_csv()).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

fn batch_ids(batch: &[&Sample]) -> Vec<u64> {
    batch.iter().map(|s| s.id).collect()
}

fn view_refs(views: &[PixelBuf]) -> Vec<&PixelBuf> {
    views.iter().collect()
}

/// Executes one training iteration: augments both batches into view pairs,
/// forwards them, assembles the enabled losses, backpropagates once, and
/// applies a single Adam step at the scheduled learning rate. `val_acc` in
/// the returned record is left NaN for [`fit`] to fill.
pub fn train_iteration(
    model: &mut Con2daModel,
    optimizer: &mut AdamState,
    labeled: &[&Sample],
    unlabeled: &[&Sample],
    cfg: &TrainConfig,
    iteration: u64,
) -> Result<IterationRecord> {
    let lr = cosine_decay(&cfg.schedule(), iteration)?;
    let aug_seed = seeding::derive_seed(&[cfg.seed, stream::AUGMENT_ITERATION, iteration]);
    let input_dim = cfg.dims.input_dim;

    model.zero_grads();
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);

    let mut losses: Vec<Var> = Vec::new();
    let mut l_sup = 0.0;
    let mut l_cont = 0.0;
    let mut l_self = 0.0;
    let mut mask_fraction = 0.0;

    if cfg.supervised_enabled() {
        if labeled.is_empty() {
            return Err(Error::contract("train_iteration: empty labeled batch"));
        }
        let labels: Vec<usize> = labeled
            .iter()
            .map(|s| {
                s.label
                    .map(|l| l as usize)
                    .ok_or_else(|| Error::contract(format!("labeled sample {} has no label", s.id)))
            })
            .collect::<Result<_>>()?;
        let pairs: Vec<_> = labeled
            .iter()
            .map(|s| make_pair(s, &cfg.augment, aug_seed))
            .collect();
        let weak: Vec<PixelBuf> = pairs.iter().map(|p| p.weak.clone()).collect();
        let strong: Vec<PixelBuf> = pairs.iter().map(|p| p.strong.clone()).collect();
        let x_weak = batch_input(&mut tape, &view_refs(&weak), input_dim)?;
        let x_strong = batch_input(&mut tape, &view_refs(&strong), input_dim)?;
        let h_weak = bound.extract_features(&mut tape, x_weak)?;
        let h_strong = bound.extract_features(&mut tape, x_strong)?;
        let p_weak = bound.classify(&mut tape, h_weak, false)?;
        let p_strong = bound.classify(&mut tape, h_strong, false)?;
        let sup = supervised_loss(&mut tape, p_weak, p_strong, &labels)?;
        l_sup = tape.value(sup)[0];
        losses.push(sup);
    }

    if cfg.uses_unlabeled() {
        if unlabeled.is_empty() {
            return Err(Error::contract("train_iteration: empty unlabeled batch"));
        }
        let pairs: Vec<_> = unlabeled
            .iter()
            .map(|s| make_pair(s, &cfg.augment, aug_seed))
            .collect();
        let weak: Vec<PixelBuf> = pairs.iter().map(|p| p.weak.clone()).collect();
        let x_weak = batch_input(&mut tape, &view_refs(&weak), input_dim)?;
        let h_weak = bound.extract_features(&mut tape, x_weak)?;
        let z_weak = tape.l2_normalize_rows(h_weak)?;

        match cfg.method {
            TrainMethod::Con2da => {
                let strong: Vec<PixelBuf> = pairs.iter().map(|p| p.strong.clone()).collect();
                let x_strong = batch_input(&mut tape, &view_refs(&strong), input_dim)?;
                let h_strong = bound.extract_features(&mut tape, x_strong)?;
                let z_strong = tape.l2_normalize_rows(h_strong)?;

                if cfg.contrastive_enabled() {
                    let cont = ntxent_loss(
                        &mut tape,
                        z_weak,
                        z_strong,
                        cfg.temperature,
                        cfg.ntxent_denominator,
                    )?;
                    l_cont = tape.value(cont)[0];
                    losses.push(cont);
                }
                if cfg.self_supervised_enabled() {
                    // Prototypes stay constant on this branch: the
                    // self-supervised loss drives the extractor only.
                    let p_weak = bound.classify_normalized(&mut tape, z_weak, true)?;
                    let p_strong = bound.classify_normalized(&mut tape, z_strong, true)?;
                    let pseudo = pseudo_label(
                        &tape.value_tensor(p_weak),
                        &tape.value_tensor(p_strong),
                        cfg.threshold,
                    )?;
                    mask_fraction = pseudo.mask_fraction();
                    let selfsup = self_supervised_loss(&mut tape, p_weak, p_strong, &pseudo)?;
                    l_self = tape.value(selfsup)[0];
                    losses.push(selfsup);
                }
            }
            TrainMethod::Ent => {
                // Conditional entropy over the weak-view predictions,
                // minimized with respect to both f and W.
                let p_weak = bound.classify_normalized(&mut tape, z_weak, false)?;
                let ent = entropy_loss(&mut tape, p_weak)?;
                losses.push(ent);
            }
            TrainMethod::SPlusT => unreachable!("s_plus_t never reaches the unlabeled branch"),
        }
    }

    let mut total = *losses
        .first()
        .ok_or_else(|| Error::config("no losses enabled for this iteration"))?;
    for extra in &losses[1..] {
        total = tape.add(total, *extra)?;
    }
    let total_value = tape.value(total)[0];
    if !total_value.is_finite() {
        return Err(Error::NonFiniteLoss {
            iteration,
            labeled_ids: batch_ids(labeled),
            unlabeled_ids: batch_ids(unlabeled),
        });
    }

    tape.backward(total)?;
    bound.apply_grads(&tape, model)?;
    let mut params = model.parameters_mut();
    adam_step(&mut params, optimizer, lr)?;

    Ok(IterationRecord {
        iteration,
        lr,
        l_sup,
        l_cont,
        l_self,
        mask_fraction,
        clamp_count: tape.clamp_count(),
        val_acc: f64::NAN,
    })
}

/// Argmax predictions over raw (un-augmented) pixels. Ties break toward the
/// lowest class index.
pub fn predict(model: &Con2daModel, samples: &[Sample]) -> Result<Vec<usize>> {
    if samples.is_empty() {
        return Err(Error::contract("predict: empty sample list"));
    }
    let input_dim = model.extractor.dims().input_dim;
    let mut tape = Tape::new();
    let views: Vec<&PixelBuf> = samples.iter().map(|s| &s.pixels).collect();
    let input = batch_input(&mut tape, &views, input_dim)?;
    let bound = model.bind(&mut tape);
    let h = bound.extract_features(&mut tape, input)?;
    let probs = bound.classify(&mut tape, h, true)?;
    let k = model.extractor.dims().num_classes;
    let values = tape.value(probs);
    Ok((0..samples.len())
        .map(|i| {
            let row = &values[i * k..(i + 1) * k];
            let mut best = 0;
            for (j, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect())
}

/// Fraction of correct argmax predictions on labeled samples. Deterministic
/// and side-effect free.
pub fn evaluate(model: &Con2daModel, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::contract("evaluate: empty sample list"));
    }
    let labels: Vec<usize> = samples
        .iter()
        .map(|s| {
            s.label
                .map(|l| l as usize)
                .ok_or_else(|| Error::contract(format!("evaluate: sample {} has no label", s.id)))
        })
        .collect::<Result<_>>()?;
    let predictions = predict(model, samples)?;
    let correct = predictions
        .iter()
        .zip(&labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(correct as f64 / samples.len() as f64)
}

/// Trains up to `total_iterations`, evaluating validation accuracy after
/// every iteration. Stops early after `patience` consecutive evaluations
/// without improvement, restores the best snapshot, and reveals the hidden
/// unlabeled labels exactly once for the final report.
pub fn fit(dataset: &SsdaDataset, cfg: &TrainConfig) -> Result<(Con2daModel, TrainReport)> {
    cfg.validate()?;
    let start = Instant::now();

    let mut problems = Vec::new();
    if cfg.dims.num_classes != dataset.num_classes() as usize {
        problems.push(format!(
            "model num_classes = {} but dataset K = {}",
            cfg.dims.num_classes,
            dataset.num_classes()
        ));
    }
    if let Some(sample) = dataset.source_labeled().first() {
        if sample.pixels.numel() != cfg.dims.input_dim {
            problems.push(format!(
                "model input_dim = {} but samples carry {} pixels",
                cfg.dims.input_dim,
                sample.pixels.numel()
            ));
        }
    }
    if dataset.target_validation().is_empty() {
        problems.push("validation split is empty".to_string());
    }
    let batch = cfg.resolve_batch(dataset.target_labeled().len());
    if cfg.contrastive_enabled()
        && (batch.unlabeled_batch_size < 2 || dataset.target_unlabeled().len() < 2)
    {
        problems.push("contrastive loss needs at least 2 unlabeled samples per batch".to_string());
    }
    if !problems.is_empty() {
        return Err(Error::config(problems.join("\n")));
    }

    let mut model = init_model(cfg.seed, &cfg.dims)?;
    model.classifier.temperature = cfg.temperature;
    model.classifier.normalized_mode = cfg.cosine_classifier;
    let mut optimizer = AdamState::with_betas(&model.parameters(), cfg.beta1, cfg.beta2);

    let mut labeled_stream = dataset.labeled_batches(&batch, cfg.seed)?;
    let mut unlabeled_stream = if cfg.uses_unlabeled() {
        Some(dataset.unlabeled_batches(&batch, cfg.seed)?)
    } else {
        None
    };

    let mut report_rows: Vec<IterationRecord> = Vec::new();
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_iteration = 0u64;
    let mut best_snapshot = model.clone();
    let mut stale = 0u64;

    for t in 0..cfg.total_iterations {
        let labeled_batch = labeled_stream.next().expect("labeled stream is infinite");
        let unlabeled_batch = match unlabeled_stream.as_mut() {
            Some(stream) => stream.next().expect("unlabeled stream is infinite"),
            None => Vec::new(),
        };
        let mut record = train_iteration(
            &mut model,
            &mut optimizer,
            &labeled_batch,
            &unlabeled_batch,
            cfg,
            t,
        )?;
        let val_acc = evaluate(&model, dataset.target_validation())?;
        record.val_acc = val_acc;
        report_rows.push(record);

        if val_acc > best_acc {
            best_acc = val_acc;
            best_iteration = t;
            best_snapshot = model.clone();
            stale = 0;
        } else {
            // A tie is not an improvement (patience still counts down), but
            // among equally-good snapshots the most-trained one wins.
            if val_acc == best_acc {
                best_iteration = t;
                best_snapshot = model.clone();
            }
            stale += 1;
            if stale >= cfg.patience {
                log::info!(
                    "early stop at iteration {t}: no improvement for {} evaluations",
                    cfg.patience
                );
                break;
            }
        }
    }

    let model = best_snapshot;
    let final_samples = dataset.unlabeled_for_evaluation("final-evaluation");
    let final_acc = evaluate(&model, &final_samples)?;
    let report = TrainReport {
        per_iteration: report_rows,
        best_validation_accuracy: best_acc,
        best_iteration,
        final_target_unlabeled_accuracy: final_acc,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}
