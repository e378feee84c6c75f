//! Stores preprocessed tensors in the compressed on-disk cache, reads them
//! back, and shows what a crash in the middle of a write leaves behind.

use dqclab::datapipe::{FaultPoint, Tensor, TensorCache};

fn main() -> dqclab::Result<()> {
    let dir = std::env::temp_dir().join(format!("dqclab-cache-demo-{}", std::process::id()));
    let cache = TensorCache::open(&dir)?;

    let data: Vec<f32> = (0..3 * 8 * 8).map(|i| (i as f32 * 0.37).sin()).collect();
    let tensor = Tensor::new(vec![3, 8, 8], data)?;
    let entry = cache.put("img-0001", &tensor)?;
    println!("stored {} at {} (sha256 {})", entry.sample_id, entry.path.display(), &entry.checksum[..16]);
    let back = cache.get("img-0001")?.expect("entry was just written");
    println!("round trip exact: {}", back == tensor);

    let err = cache.put_with_fault("img-0002", &tensor, FaultPoint::MidWrite).unwrap_err();
    println!("interrupted write: {err}");
    println!("readable afterwards: {}", cache.get("img-0002")?.is_some());
    drop(cache);

    let reopened = TensorCache::open(&dir)?;
    println!("recovery on reopen: {:?}", reopened.recovery());
    println!("entries: {}", reopened.len()?);
    drop(reopened);
    std::fs::remove_dir_all(&dir).map_err(|e| dqclab::Error::Io { path: dir, source: e })?;
    Ok(())
}
