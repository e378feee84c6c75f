//! Per-label AUROC, paired t-tests across seeds and the volcano table, on
//! made-up scores for two heads over five seeds.

use dqclab::analytics::{comparison_table, evaluate_labels, label_sets, volcano_data, PairedComparison};
use dqclab::mlcore::Rng;
use rand::Rng as _;

fn main() -> dqclab::Result<()> {
    let (labels, samples, seeds) = (4, 300, 5);
    let names: Vec<String> = (0..labels).map(|l| format!("label{l}")).collect();
    let mut rng = Rng::new(1);
    let truths: Vec<Vec<u8>> = (0..samples)
        .map(|_| (0..labels).map(|l| rng.random_bool(0.3 / (l + 1) as f64) as u8).collect())
        .collect();

    // Scores separate positives by a per-head, per-label margin plus noise.
    let mut score = |margin: f64| -> Vec<Vec<f64>> {
        truths
            .iter()
            .map(|t| t.iter().map(|&y| margin * y as f64 + rng.random_range(-1.0..1.0)).collect())
            .collect()
    };
    let mut per_head = [Vec::new(), Vec::new()];
    for _ in 0..seeds {
        for (h, margin) in [0.9, 0.6].into_iter().enumerate() {
            let (per_label, _) = evaluate_labels(&label_sets(&names, &score(margin), &truths)?)?;
            per_head[h].push(per_label);
        }
    }

    let comparisons = (0..labels)
        .map(|l| {
            let cdl = per_head[0].iter().map(|s| s[l]).collect();
            let dqc = per_head[1].iter().map(|s| s[l]).collect();
            PairedComparison::new(names[l].clone(), "synthetic", cdl, dqc)
        })
        .collect::<dqclab::Result<Vec<_>>>()?;
    print!("{}", comparison_table(&comparisons));
    println!();
    print!("{}", volcano_data(&comparisons)?.to_tsv());
    Ok(())
}
