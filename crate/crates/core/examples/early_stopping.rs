//! Replays validation-loss curves through the patience-5 stopping rule.

use dqclab::trainer::replay;

fn main() {
    let curves: [(&str, Vec<f64>); 3] = [
        ("steady", (0..50).map(|e| 1.0 / (e as f64 + 1.0)).collect()),
        ("plateau", vec![0.9, 0.7, 0.6, 0.6, 0.61, 0.62, 0.6, 0.65, 0.7, 0.5]),
        ("late dip", vec![0.9, 0.8, 0.85, 0.86, 0.87, 0.88, 0.79, 0.7]),
    ];
    println!("curve\tepochs_run\tbest_epoch");
    for (name, curve) in curves {
        let (epochs, best) = replay(&curve, 5, 50);
        println!("{name}\t{epochs}\t{best}");
    }
}
