//! Throwaway calibration probe for the qualitative benchmark.

use std::collections::BTreeSet;
use std::time::Instant;

use con2da_core::data::{generate_synthetic_ssda, GeneratorKind, ShiftKind, ShiftSpec};
use con2da_core::model::ModelDims;
use con2da_core::seeding;
use con2da_core::trainer::{evaluate, fit, TrainConfig, TrainMethod};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let magnitude: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(25.0);
    let lr: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(8e-5);
    let iters: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(5000);
    let patience: u64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(50);
    let shift_kind = match args.get(5).map(|s| s.as_str()) {
        Some("translation") => ShiftKind::Translation,
        Some("channel_swap") => ShiftKind::ChannelSwap,
        Some("noise") => ShiftKind::Noise,
        _ => ShiftKind::Rotation,
    };

    println!("magnitude={magnitude} lr={lr} iters={iters} patience={patience} kind={shift_kind:?}");
    let t0 = Instant::now();

    for method in [TrainMethod::Con2da, TrainMethod::SPlusT] {
        let mut accs = Vec::new();
        let mut iters_run = Vec::new();
        for r in 0..5u64 {
            let spec = ShiftSpec {
                generator: GeneratorKind::TexturedGrid,
                num_classes: 5,
                samples_per_domain: 300,
                shift_kind,
                shift_magnitude: magnitude,
                seed: seeding::derive_seed(&[0, seeding::stream::DATASET_REPEAT, r]),
            };
            let ds = generate_synthetic_ssda(&spec, 3).unwrap();
            let cfg = TrainConfig {
                method,
                learning_rate: lr,
                total_iterations: iters,
                patience,
                dims: ModelDims {
                    input_dim: 768,
                    hidden: vec![64, 64],
                    feature_dim: 32,
                    num_classes: 5,
                },
                seed: seeding::derive_seed(&[0, seeding::stream::EXPERIMENT_REPEAT, r]),
                ..TrainConfig::default()
            };
            let t = Instant::now();
            let (model, report) = fit(&ds, &cfg).unwrap();
            let src_acc = evaluate(&model, ds.source_labeled()).unwrap();
            accs.push(report.final_target_unlabeled_accuracy);
            iters_run.push(report.per_iteration.len());
            println!(
                "  {method:?} r{r}: test={:.3} val={:.3} src={src_acc:.3} iters={} time={:.1}s",
                report.final_target_unlabeled_accuracy,
                report.best_validation_accuracy,
                report.per_iteration.len(),
                t.elapsed().as_secs_f64()
            );
        }
        accs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        println!("{method:?}: median={:.3} accs={accs:?}", accs[2]);
    }
    println!("total {:.1}s", t0.elapsed().as_secs_f64());
}
