//! Trains a CDL and a DQC head with the same seed on the default synthetic
//! long-tailed dataset and reports validation curves and test AUROC.
//!
//! `cargo run --release --example train_heads -- [num_labels] [num_samples] [seed]`

use dqclab::analytics::{evaluate_labels, label_sets};
use dqclab::datapipe::{generate_longtail, LongTailSpec, PreparedData, PreprocessConfig, Split};
use dqclab::model::{FeatureExtractor, HeadKind, ProjectionConfig, DEFAULT_FEATURE_DIM};
use dqclab::trainer::{predict, train, FeatureSet, TrainConfig};

fn main() -> dqclab::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let n = args.first().copied().unwrap_or(8) as usize;
    let samples = args.get(1).copied().unwrap_or(4000) as usize;
    let seed = args.get(2).copied().unwrap_or(0);

    let spec = LongTailSpec::desk_default(n, samples, 7);
    let (dataset, split) = generate_longtail(&spec)?;
    let data = PreparedData::from_dataset(&dataset, &split, &PreprocessConfig::imagenet(72, 64), None)?;
    let extractor = FeatureExtractor::projection(ProjectionConfig::image(3, 64, 64, 8, DEFAULT_FEATURE_DIM, 0))?;
    let test_idx = data.indices(Split::Test);
    let test = FeatureSet::for_indices(&extractor, &data, &test_idx)?;
    let names: Vec<String> = (0..n).map(|l| format!("label{l}")).collect();
    let truths: Vec<Vec<u8>> = test_idx.iter().map(|&i| data.labels[i].clone()).collect();

    for head in [HeadKind::Cdl, HeadKind::Dqc] {
        let started = std::time::Instant::now();
        let run = train(TrainConfig::new(head, n, seed), &data, &extractor)?;
        let probs = predict(&run.best.head, &test)?;
        let (per_label, mean) = evaluate_labels(&label_sets(&names, &probs, &truths)?)?;
        println!(
            "{head}: {} epochs ({:?}), best epoch {}, {:.1}s",
            run.epochs_run(),
            run.stop_reason,
            run.best_epoch,
            started.elapsed().as_secs_f64()
        );
        let curve: Vec<String> = run.val_losses.iter().map(|v| format!("{v:.4}")).collect();
        println!("  validation BCE: {}", curve.join(" "));
        let labels: Vec<String> = per_label.iter().map(|a| format!("{a:.3}")).collect();
        println!("  test AUROC: mean {mean:.4} per label [{}]", labels.join(", "));
    }
    Ok(())
}
