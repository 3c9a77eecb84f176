//! SSDA dataset construction: the four-way split protocol, synthetic
//! domain-shift generators, batch samplers, and a portable binary format.
//!
//! Ground-truth labels of the unlabeled target split are retained for final
//! evaluation but sit behind an access-recording gate; training code never
//! touches them, and the audit log proves it.

mod format;
mod generate;

pub use format::{load_dataset, save_dataset};
pub use generate::generate_synthetic_ssda;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::Sample;
use crate::error::{Error, Result};
use crate::seeding;

/// Synthetic point-cloud/texture generators standing in for real image
/// domain pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    TwoMoons,
    GaussianBlobs,
    TexturedGrid,
}

/// The transform separating the target domain from the source domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftKind {
    Rotation,
    Translation,
    ChannelSwap,
    Noise,
}

/// Recipe for one synthetic domain-shift dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub generator: GeneratorKind,
    pub num_classes: u32,
    pub samples_per_domain: u32,
    pub shift_kind: ShiftKind,
    /// Degrees for rotation, pixels for translation, blend fraction for
    /// channel swap, noise standard deviation for noise. Zero means the two
    /// domains are identically distributed.
    pub shift_magnitude: f64,
    pub seed: u64,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        ShiftSpec {
            generator: GeneratorKind::TexturedGrid,
            num_classes: 5,
            samples_per_domain: 300,
            shift_kind: ShiftKind::Rotation,
            shift_magnitude: 25.0,
            seed: 0,
        }
    }
}

/// Labeled mini-batch composition. `labeled_batch_size` must be even: each
/// labeled batch is half source, half target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub labeled_batch_size: usize,
    pub unlabeled_batch_size: usize,
}

impl BatchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.labeled_batch_size < 2 || self.labeled_batch_size % 2 != 0 {
            return Err(Error::config(format!(
                "labeled_batch_size must be even and >= 2, got {}",
                self.labeled_batch_size
            )));
        }
        if self.unlabeled_batch_size < 1 {
            return Err(Error::config("unlabeled_batch_size must be >= 1"));
        }
        Ok(())
    }
}

/// Batch-size rule: cap at 256 or the number of labeled target objects,
/// whichever is smaller, then round down to an even number (floor 2) so the
/// half-source/half-target composition stays exact.
pub fn resolve_batch_size(n_target_labeled: usize) -> usize {
    (n_target_labeled.min(256) & !1).max(2)
}

/// The four-way SSDA split. Immutable after construction.
#[derive(Debug)]
pub struct SsdaDataset {
    source_labeled: Vec<Sample>,
    target_labeled: Vec<Sample>,
    target_unlabeled: Vec<Sample>,
    target_validation: Vec<Sample>,
    /// Ground truth for `target_unlabeled`, parallel by index. Gated.
    hidden_labels: Vec<Option<u32>>,
    num_classes: u32,
    hidden_reads: AtomicU64,
    access_log: Mutex<Vec<String>>,
}

impl PartialEq for SsdaDataset {
    fn eq(&self, other: &Self) -> bool {
        self.source_labeled == other.source_labeled
            && self.target_labeled == other.target_labeled
            && self.target_unlabeled == other.target_unlabeled
            && self.target_validation == other.target_validation
            && self.hidden_labels == other.hidden_labels
            && self.num_classes == other.num_classes
    }
}

impl Clone for SsdaDataset {
    fn clone(&self) -> Self {
        SsdaDataset {
            source_labeled: self.source_labeled.clone(),
            target_labeled: self.target_labeled.clone(),
            target_unlabeled: self.target_unlabeled.clone(),
            target_validation: self.target_validation.clone(),
            hidden_labels: self.hidden_labels.clone(),
            num_classes: self.num_classes,
            hidden_reads: AtomicU64::new(0),
            access_log: Mutex::new(Vec::new()),
        }
    }
}

impl SsdaDataset {
    /// Assembles and validates a dataset. `target_unlabeled` samples must
    /// carry `label: None`; their ground truth goes into `hidden_labels`.
    pub fn assemble(
        source_labeled: Vec<Sample>,
        target_labeled: Vec<Sample>,
        target_unlabeled: Vec<Sample>,
        hidden_labels: Vec<Option<u32>>,
        target_validation: Vec<Sample>,
        num_classes: u32,
    ) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::config("num_classes must be positive"));
        }
        if hidden_labels.len() != target_unlabeled.len() {
            return Err(Error::contract(format!(
                "{} hidden labels for {} unlabeled samples",
                hidden_labels.len(),
                target_unlabeled.len()
            )));
        }
        let ds = SsdaDataset {
            source_labeled,
            target_labeled,
            target_unlabeled,
            target_validation,
            hidden_labels,
            num_classes,
            hidden_reads: AtomicU64::new(0),
            access_log: Mutex::new(Vec::new()),
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let mut ids = std::collections::HashSet::new();
        for s in self.all_samples() {
            if !ids.insert(s.id) {
                problems.push(format!("duplicate sample id {}", s.id));
            }
            if let Some(l) = s.label {
                if l >= self.num_classes {
                    problems.push(format!("sample {} has label {l} >= K={}", s.id, self.num_classes));
                }
            }
        }
        for s in &self.target_unlabeled {
            if s.label.is_some() {
                problems.push(format!("unlabeled sample {} carries an open label", s.id));
            }
        }
        // Domain tags are implied by split membership in the file format;
        // keep them consistent so round trips are lossless.
        for s in &self.source_labeled {
            if s.domain != crate::augment::Domain::Source {
                problems.push(format!("source split sample {} tagged as target", s.id));
            }
        }
        for s in self
            .target_labeled
            .iter()
            .chain(&self.target_unlabeled)
            .chain(&self.target_validation)
        {
            if s.domain != crate::augment::Domain::Target {
                problems.push(format!("target split sample {} tagged as source", s.id));
            }
        }
        for (s, h) in self.target_unlabeled.iter().zip(&self.hidden_labels) {
            if let Some(l) = h {
                if *l >= self.num_classes {
                    problems.push(format!("hidden label {l} for sample {} >= K", s.id));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::config(problems.join("\n")))
        }
    }

    fn all_samples(&self) -> impl Iterator<Item = &Sample> {
        self.source_labeled
            .iter()
            .chain(&self.target_labeled)
            .chain(&self.target_unlabeled)
            .chain(&self.target_validation)
    }

    pub fn source_labeled(&self) -> &[Sample] {
        &self.source_labeled
    }

    pub fn target_labeled(&self) -> &[Sample] {
        &self.target_labeled
    }

    /// The unlabeled split as training code sees it: labels absent.
    pub fn target_unlabeled(&self) -> &[Sample] {
        &self.target_unlabeled
    }

    pub fn target_validation(&self) -> &[Sample] {
        &self.target_validation
    }

    pub fn num_classes(&self) -> u32 {
        self.num_classes
    }

    /// Reveals the unlabeled split with ground-truth labels attached. Every
    /// call is recorded; the audit log must stay empty until final
    /// evaluation.
    pub fn unlabeled_for_evaluation(&self, purpose: &str) -> Vec<Sample> {
        self.hidden_reads.fetch_add(1, Ordering::SeqCst);
        self.access_log
            .lock()
            .expect("access log lock")
            .push(purpose.to_string());
        self.target_unlabeled
            .iter()
            .zip(&self.hidden_labels)
            .map(|(s, h)| {
                let mut s = s.clone();
                s.label = *h;
                s
            })
            .collect()
    }

    /// Number of times the hidden labels have been revealed.
    pub fn hidden_label_reads(&self) -> u64 {
        self.hidden_reads.load(Ordering::SeqCst)
    }

    /// Purposes recorded at each reveal, in order.
    pub fn hidden_access_log(&self) -> Vec<String> {
        self.access_log.lock().expect("access log lock").clone()
    }

    pub(crate) fn hidden_labels(&self) -> &[Option<u32>] {
        &self.hidden_labels
    }

    /// SHA-256 of the serialized dataset; identical splits hash identically.
    pub fn checksum(&self) -> String {
        let bytes = format::to_bytes(self);
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Infinite stream of labeled batches, each exactly half source and half
    /// target. Source cycles without replacement; the target side falls back
    /// to with-replacement draws when fewer than N/2 labeled targets exist.
    pub fn labeled_batches(&self, spec: &BatchSpec, seed: u64) -> Result<LabeledBatches<'_>> {
        spec.validate()?;
        if self.source_labeled.is_empty() || self.target_labeled.is_empty() {
            return Err(Error::config("labeled pools must be non-empty"));
        }
        let half = spec.labeled_batch_size / 2;
        if half > self.source_labeled.len() {
            return Err(Error::config(format!(
                "N/2 = {half} exceeds source pool of {}",
                self.source_labeled.len()
            )));
        }
        Ok(LabeledBatches {
            dataset: self,
            half,
            rng: seeding::rng_from(&[seed, seeding::stream::LABELED_BATCHES]),
            source_order: Vec::new(),
            source_pos: 0,
            target_order: Vec::new(),
            target_pos: 0,
        })
    }

    /// Infinite stream of unlabeled batches; each cycle visits every sample
    /// once (the final batch of a cycle may be short), then reshuffles.
    pub fn unlabeled_batches(&self, spec: &BatchSpec, seed: u64) -> Result<UnlabeledBatches<'_>> {
        spec.validate()?;
        if self.target_unlabeled.is_empty() {
            return Err(Error::config("unlabeled pool must be non-empty"));
        }
        Ok(UnlabeledBatches {
            dataset: self,
            batch: spec.unlabeled_batch_size,
            rng: seeding::rng_from(&[seed, seeding::stream::UNLABELED_BATCHES]),
            order: Vec::new(),
            pos: 0,
        })
    }
}

/// See [`SsdaDataset::labeled_batches`].
pub struct LabeledBatches<'a> {
    dataset: &'a SsdaDataset,
    half: usize,
    rng: ChaCha8Rng,
    source_order: Vec<usize>,
    source_pos: usize,
    target_order: Vec<usize>,
    target_pos: usize,
}

impl<'a> Iterator for LabeledBatches<'a> {
    type Item = Vec<&'a Sample>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut batch = Vec::with_capacity(2 * self.half);
        for _ in 0..self.half {
            if self.source_pos >= self.source_order.len() {
                self.source_order = (0..self.dataset.source_labeled.len()).collect();
                self.source_order.shuffle(&mut self.rng);
                self.source_pos = 0;
            }
            batch.push(&self.dataset.source_labeled[self.source_order[self.source_pos]]);
            self.source_pos += 1;
        }
        let n_target = self.dataset.target_labeled.len();
        if self.half > n_target {
            // Scarce labeled targets: sample with replacement.
            for _ in 0..self.half {
                let i = rand::Rng::random_range(&mut self.rng, 0..n_target);
                batch.push(&self.dataset.target_labeled[i]);
            }
        } else {
            for _ in 0..self.half {
                if self.target_pos >= self.target_order.len() {
                    self.target_order = (0..n_target).collect();
                    self.target_order.shuffle(&mut self.rng);
                    self.target_pos = 0;
                }
                batch.push(&self.dataset.target_labeled[self.target_order[self.target_pos]]);
                self.target_pos += 1;
            }
        }
        Some(batch)
    }
}

/// See [`SsdaDataset::unlabeled_batches`].
pub struct UnlabeledBatches<'a> {
    dataset: &'a SsdaDataset,
    batch: usize,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    pos: usize,
}

impl<'a> Iterator for UnlabeledBatches<'a> {
    type Item = Vec<&'a Sample>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.order.len() {
            self.order = (0..self.dataset.target_unlabeled.len()).collect();
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let end = (self.pos + self.batch).min(self.order.len());
        let batch = self.order[self.pos..end]
            .iter()
            .map(|&i| &self.dataset.target_unlabeled[i])
            .collect();
        self.pos = end;
        Some(batch)
    }
}
