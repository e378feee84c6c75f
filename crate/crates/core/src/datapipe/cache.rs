//! Content-addressed on-disk tensor cache.
//!
//! Blobs are zstd-compressed tensor bytes under `blobs/`; an SQLite index maps
//! sample ids to blob paths and SHA-256 checksums of the uncompressed bytes.
//! A blob is written to a temporary file and renamed into place before its
//! index row is committed, so readers never see a partial entry.

use std::collections::HashSet;
use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, MutexGuard};
use std::time::Duration;

use rusqlite::{params, Connection, OptionalExtension};
use sha2::{Digest, Sha256};

use super::Tensor;
use crate::{Error, Result};

pub const CODEC: &str = "zstd";
const ZSTD_LEVEL: i32 = 3;
const INDEX_FILE: &str = "index.sqlite";
const BLOB_DIR: &str = "blobs";
const TMP_MARKER: &str = ".tmp-";

/// Where a simulated crash interrupts [`TensorCache::put_with_fault`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaultPoint {
    /// Half the blob has been written to the temporary file.
    MidWrite,
    /// The blob is in place but the index row was never written.
    BeforeIndex,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CacheEntry {
    pub sample_id: String,
    pub path: PathBuf,
    pub checksum: String,
}

/// Outcome of the start-up recovery sweep.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Recovery {
    pub removed_temp_files: usize,
    pub removed_orphans: usize,
}

#[derive(Debug)]
pub struct TensorCache {
    root: PathBuf,
    index: Mutex<Connection>,
    recovery: Recovery,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl TensorCache {
    /// Opens or creates a cache under `root`, sweeping leftovers of
    /// interrupted writes.
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(root.join(BLOB_DIR)).map_err(|e| Error::io(&root, e))?;
        let conn = Connection::open(root.join(INDEX_FILE))?;
        conn.busy_timeout(Duration::from_secs(30))?;
        conn.execute_batch(
            "PRAGMA journal_mode=WAL;
             CREATE TABLE IF NOT EXISTS meta (key TEXT PRIMARY KEY, value TEXT NOT NULL);
             CREATE TABLE IF NOT EXISTS entries (
                 sample_id TEXT PRIMARY KEY,
                 path TEXT NOT NULL,
                 checksum TEXT NOT NULL,
                 codec TEXT NOT NULL
             );",
        )?;
        let stored: Option<String> = conn
            .query_row("SELECT value FROM meta WHERE key = 'codec'", [], |r| r.get(0))
            .optional()?;
        match stored {
            Some(c) if c != CODEC => {
                return Err(Error::Corruption {
                    id: INDEX_FILE.into(),
                    reason: format!("cache written with codec {c}, expected {CODEC}"),
                })
            }
            Some(_) => {}
            None => {
                conn.execute("INSERT INTO meta VALUES ('codec', ?1)", [CODEC])?;
            }
        }
        conn.execute(
            "INSERT OR REPLACE INTO meta VALUES ('codec_version', ?1)",
            [zstd::zstd_safe::version_string()],
        )?;
        let mut cache = TensorCache {
            root,
            index: Mutex::new(conn),
            recovery: Recovery::default(),
        };
        cache.recovery = cache.sweep()?;
        Ok(cache)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// What the sweep at open time cleaned up.
    pub fn recovery(&self) -> &Recovery {
        &self.recovery
    }

    fn conn(&self) -> MutexGuard<'_, Connection> {
        self.index.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn sweep(&self) -> Result<Recovery> {
        let known: HashSet<String> = {
            let conn = self.conn();
            let mut stmt = conn.prepare("SELECT path FROM entries")?;
            let rows = stmt.query_map([], |r| r.get::<_, String>(0))?;
            rows.collect::<rusqlite::Result<_>>()?
        };
        let mut rec = Recovery::default();
        let blobs = self.root.join(BLOB_DIR);
        for shard in fs::read_dir(&blobs).map_err(|e| Error::io(&blobs, e))? {
            let shard = shard.map_err(|e| Error::io(&blobs, e))?.path();
            if !shard.is_dir() {
                continue;
            }
            for file in fs::read_dir(&shard).map_err(|e| Error::io(&shard, e))? {
                let path = file.map_err(|e| Error::io(&shard, e))?.path();
                let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
                if name.contains(TMP_MARKER) {
                    fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
                    rec.removed_temp_files += 1;
                } else if !known.contains(&self.relative(&path)) {
                    fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
                    rec.removed_orphans += 1;
                }
            }
        }
        if rec != Recovery::default() {
            log::info!("cache recovery at {}: {rec:?}", self.root.display());
        }
        Ok(rec)
    }

    fn relative(&self, path: &Path) -> String {
        path.strip_prefix(&self.root)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }

    fn blob_path(sample_id: &str, checksum: &str) -> String {
        let key = sha256_hex(sample_id.as_bytes());
        format!("{BLOB_DIR}/{}/{}-{}.zst", &key[..2], &key[..32], &checksum[..16])
    }

    pub fn put(&self, sample_id: &str, tensor: &Tensor) -> Result<CacheEntry> {
        self.put_inner(sample_id, tensor, None)
    }

    /// Like [`put`](Self::put) but stops at `fault` as if the process died,
    /// leaving on disk whatever a crash at that point would leave.
    #[doc(hidden)]
    pub fn put_with_fault(&self, sample_id: &str, tensor: &Tensor, fault: FaultPoint) -> Result<CacheEntry> {
        self.put_inner(sample_id, tensor, Some(fault))
    }

    fn put_inner(&self, sample_id: &str, tensor: &Tensor, fault: Option<FaultPoint>) -> Result<CacheEntry> {
        let raw = tensor.to_bytes();
        let checksum = sha256_hex(&raw);
        let compressed = zstd::bulk::compress(&raw, ZSTD_LEVEL).map_err(|e| Error::io(&self.root, e))?;
        let rel = Self::blob_path(sample_id, &checksum);
        let path = self.root.join(&rel);
        let dir = path.parent().expect("blob path has a shard directory");
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

        let tmp = path.with_extension(format!(
            "zst{TMP_MARKER}{}-{}",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        {
            let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
            if fault == Some(FaultPoint::MidWrite) {
                f.write_all(&compressed[..compressed.len() / 2]).map_err(|e| Error::io(&tmp, e))?;
                return Err(Error::io(&tmp, std::io::Error::other("injected fault mid-write")));
            }
            f.write_all(&compressed).map_err(|e| Error::io(&tmp, e))?;
            f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        }
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        if fault == Some(FaultPoint::BeforeIndex) {
            return Err(Error::io(&path, std::io::Error::other("injected fault before index commit")));
        }

        let previous: Option<String> = {
            let mut conn = self.conn();
            let tx = conn.transaction()?;
            let previous = tx
                .query_row("SELECT path FROM entries WHERE sample_id = ?1", [sample_id], |r| r.get(0))
                .optional()?;
            tx.execute(
                "INSERT OR REPLACE INTO entries (sample_id, path, checksum, codec) VALUES (?1, ?2, ?3, ?4)",
                params![sample_id, rel, checksum, CODEC],
            )?;
            tx.commit()?;
            previous
        };
        if let Some(old) = previous.filter(|old| *old != rel) {
            let _ = fs::remove_file(self.root.join(old));
        }
        Ok(CacheEntry {
            sample_id: sample_id.to_string(),
            path,
            checksum,
        })
    }

    fn lookup(&self, sample_id: &str) -> Result<Option<(String, String)>> {
        Ok(self
            .conn()
            .query_row(
                "SELECT path, checksum FROM entries WHERE sample_id = ?1",
                [sample_id],
                |r| Ok((r.get(0)?, r.get(1)?)),
            )
            .optional()?)
    }

    /// `Ok(None)` is a cache miss. A blob that fails its checksum or does not
    /// decode is a corruption error, never a tensor.
    pub fn get(&self, sample_id: &str) -> Result<Option<Tensor>> {
        // A concurrent put of the same id may delete the blob between the
        // index read and the file read; a second lookup sees the new row.
        for _ in 0..2 {
            let Some((rel, checksum)) = self.lookup(sample_id)? else {
                return Ok(None);
            };
            let path = self.root.join(&rel);
            let compressed = match fs::read(&path) {
                Ok(b) => b,
                Err(e) if e.kind() == ErrorKind::NotFound => continue,
                Err(e) => return Err(Error::io(&path, e)),
            };
            let corrupt = |reason: String| Error::Corruption {
                id: sample_id.to_string(),
                reason,
            };
            let raw = zstd::stream::decode_all(&compressed[..]).map_err(|e| corrupt(format!("zstd: {e}")))?;
            let actual = sha256_hex(&raw);
            if actual != checksum {
                return Err(corrupt(format!("checksum {actual} != indexed {checksum}")));
            }
            return Tensor::from_bytes(&raw).map(Some).map_err(|e| corrupt(e.to_string()));
        }
        Err(Error::Corruption {
            id: sample_id.to_string(),
            reason: "indexed blob is missing".into(),
        })
    }

    pub fn contains(&self, sample_id: &str) -> Result<bool> {
        Ok(self.lookup(sample_id)?.is_some())
    }

    pub fn len(&self) -> Result<usize> {
        let n: i64 = self.conn().query_row("SELECT COUNT(*) FROM entries", [], |r| r.get(0))?;
        Ok(n as usize)
    }

    pub fn is_empty(&self) -> Result<bool> {
        Ok(self.len()? == 0)
    }

    /// Absolute blob path for an indexed id.
    pub fn blob_file(&self, sample_id: &str) -> Result<Option<PathBuf>> {
        Ok(self.lookup(sample_id)?.map(|(rel, _)| self.root.join(rel)))
    }
}
