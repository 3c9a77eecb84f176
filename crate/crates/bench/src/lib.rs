//! Shared fixtures for the benchmark targets.

use con2da_core::data::{generate_synthetic_ssda, GeneratorKind, ShiftKind, ShiftSpec, SsdaDataset};
use con2da_core::model::ModelDims;
use con2da_core::trainer::TrainConfig;

/// The desk-scale benchmark recipe: textured grid, K=5, 3-shot, moderate
/// rotation shift, compact extractor.
pub fn bench_dataset(seed: u64) -> SsdaDataset {
    generate_synthetic_ssda(
        &ShiftSpec {
            generator: GeneratorKind::TexturedGrid,
            num_classes: 5,
            samples_per_domain: 300,
            shift_kind: ShiftKind::Rotation,
            shift_magnitude: 25.0,
            seed,
        },
        3,
    )
    .expect("benchmark spec is satisfiable")
}

pub fn bench_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        dims: ModelDims {
            input_dim: 3 * 16 * 16,
            hidden: vec![64, 64],
            feature_dim: 32,
            num_classes: 5,
        },
        seed,
        ..TrainConfig::default()
    }
}
