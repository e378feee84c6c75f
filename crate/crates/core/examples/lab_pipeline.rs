//! The command pipeline in process, on a small configuration: generate a
//! dataset, train both heads on three seeds, and compare them.
//!
//! The same steps from the shell:
//!
//! ```text
//! dqclab gen-data --config small.toml --out data
//! dqclab train --config small.toml --data data --seeds 0..2 --paired
//! dqclab eval --paired runs/*
//! ```

use dqclab::cli::{cmd_eval, cmd_gen_data, cmd_train, format_train_outcomes, LabConfig, TrainRequest};

const SMALL: &str = r#"
[data]
num_labels = 4
num_samples = 600
height = 16
width = 16
min_split_positives = 3
tail_frequency = 0.1
signal_strength = 3.0

[preprocess]
resize = 18
crop = 16

[extractor]
pool = 4
feature_dim = 128

[train]
max_epochs = 10
lr = 0.01
"#;

fn main() -> dqclab::Result<()> {
    let root = std::env::temp_dir().join(format!("dqclab-pipeline-{}", std::process::id()));
    let config = LabConfig::parse(SMALL)?;

    let data_dir = root.join("data");
    let record = cmd_gen_data(&config, &data_dir, false)?;
    println!("dataset {} with {} samples", &record.prepared_fingerprint[..12], record.num_samples);

    let request = TrainRequest {
        config,
        config_path: None,
        data_dir: Some(data_dir),
        out: root.join("runs"),
        seeds: vec![0, 1, 2],
        paired: true,
        force: false,
    };
    let outcomes = cmd_train(&request)?;
    print!("{}", format_train_outcomes(&outcomes));

    let dirs: Vec<_> = outcomes.iter().map(|o| o.dir.clone()).collect();
    let report = cmd_eval(&dirs, true, None)?;
    println!();
    print!("{}", report.comparison_tsv().unwrap_or_default());

    std::fs::remove_dir_all(&root).map_err(|e| dqclab::Error::Io { path: root, source: e })?;
    Ok(())
}
