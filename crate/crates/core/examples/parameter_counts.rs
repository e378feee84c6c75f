//! Trainable parameter counts of both heads on 2048 features with depth 3.

use dqclab::mlcore::Rng;
use dqclab::model::{count_parameters, Head, HeadKind};

fn main() -> dqclab::Result<()> {
    println!("n\thead\tpreprocess\tquantum\tpostprocess\ttotal");
    for n in [8, 14, 19] {
        for kind in [HeadKind::Cdl, HeadKind::Dqc] {
            let head = Head::init(kind, &mut Rng::new(0), 2048, n, 3)?;
            let c = count_parameters(&head);
            println!("{n}\t{kind}\t{}\t{}\t{}\t{}", c.preprocess, c.quantum, c.postprocess, c.total());
        }
    }
    Ok(())
}
