//! Times one training step of each head on a zero batch at several widths
//! and prints the table.
//!
//! `cargo run --release --example benchmark_step -- [n ...]` (default 8 14 19)

use dqclab::bench::{format_results, run_bench, BenchProtocol};
use dqclab::model::HeadKind;

fn main() -> dqclab::Result<()> {
    let mut widths: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    if widths.is_empty() {
        widths = vec![8, 14, 19];
    }
    let mut results = Vec::new();
    for head in [HeadKind::Cdl, HeadKind::Dqc] {
        for &n in &widths {
            let r = run_bench(&BenchProtocol::new(head, n))?;
            eprintln!("{head} n={n}: {:.4} s/step", r.mean);
            results.push(r);
        }
    }
    print!("{}", format_results(&results));
    Ok(())
}
