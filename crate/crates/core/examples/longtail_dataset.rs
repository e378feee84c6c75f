//! Generates the default long-tailed dataset and prints how the positives of
//! each label fall into the train, validation and test splits.
//!
//! `cargo run --release --example longtail_dataset -- [num_labels] [num_samples] [seed]`

use dqclab::datapipe::{generate_longtail, LongTailSpec, Manifest, Split};

fn main() -> dqclab::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let n = args.first().copied().unwrap_or(8) as usize;
    let samples = args.get(1).copied().unwrap_or(4000) as usize;
    let seed = args.get(2).copied().unwrap_or(7);

    let spec = LongTailSpec::desk_default(n, samples, seed);
    let (dataset, split) = generate_longtail(&spec)?;
    println!("decay {:.4}, head {:.2}, tail {:.4}", spec.decay, spec.frequency(0), spec.frequency(n - 1));

    let counts: Vec<Vec<usize>> = Split::ALL
        .iter()
        .map(|&s| dataset.label_counts(&split.indices(s)))
        .collect();
    println!("label\tfrequency\ttrain\tvalidation\ttest");
    for l in 0..n {
        println!(
            "{l}\t{:.4}\t{}\t{}\t{}",
            spec.frequency(l),
            counts[0][l],
            counts[1][l],
            counts[2][l]
        );
    }

    let manifest = Manifest::from_dataset(&dataset, &split);
    for line in manifest.to_tsv().lines().take(4) {
        println!("{line}");
    }
    Ok(())
}
