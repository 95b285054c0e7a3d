//! On-disk cache of solved design targets.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::KbError;
use crate::reasoning::{DerivedTargets, DesignSpec, ReasoningConfig};

/// Environment variable that overrides the cache directory.
pub const CACHE_DIR_ENV: &str = "AMPSIZER_CACHE_DIR";
pub const CACHE_FORMAT_VERSION: u32 = 1;
const DEFAULT_DIR: &str = ".ampsizer-cache";

/// Rounds to four significant figures and prints canonically.
fn canonical(x: f64) -> String {
    format!("{x:.3e}")
}

/// Identity of a cached solve.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheKey {
    pub topology: String,
    pub spec: String,
    /// Digest of the solver settings, so a changed config never hits a stale entry.
    pub config: String,
}

impl CacheKey {
    pub fn new(topology: &str, spec: &DesignSpec, config: &ReasoningConfig) -> Self {
        let spec = format!(
            "cl={};gbw={};pm={};gain={}",
            canonical(spec.cl),
            canonical(spec.gbw_min),
            canonical(spec.pm_min),
            canonical(spec.gain_min)
        );
        let cfg = serde_json::to_string(config).expect("config serializes");
        CacheKey {
            topology: topology.to_ascii_uppercase(),
            spec,
            config: hex::encode(&Sha256::digest(cfg.as_bytes())[..8]),
        }
    }

    /// File stem used for this key.
    pub fn digest(&self) -> String {
        let text = format!("{}|{}|{}", self.topology, self.spec, self.config);
        hex::encode(&Sha256::digest(text.as_bytes())[..16])
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheEntry {
    pub format_version: u32,
    pub key: CacheKey,
    pub created_unix_s: u64,
    pub targets: DerivedTargets,
}

/// One JSON file per key under a directory.
///
/// Writes go through a temporary file and a rename, so readers never see a
/// partial entry and concurrent writers of one key resolve last-writer-wins.
#[derive(Debug, Clone)]
pub struct ReasoningCache {
    dir: PathBuf,
}

impl ReasoningCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ReasoningCache { dir: dir.into() }
    }

    /// Directory from the environment, falling back to `.ampsizer-cache`.
    pub fn default_dir() -> PathBuf {
        std::env::var_os(CACHE_DIR_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_DIR))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(format!("{}.json", key.digest()))
    }

    /// `Ok(None)` on a miss. Unreadable or foreign entries count as misses.
    pub fn get(&self, key: &CacheKey) -> Result<Option<DerivedTargets>, KbError> {
        let path = self.path_for(key);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(KbError::Storage { path, source }),
        };
        match serde_json::from_str::<CacheEntry>(&text) {
            Ok(entry) if entry.format_version == CACHE_FORMAT_VERSION && entry.key == *key => {
                Ok(Some(entry.targets))
            }
            _ => Ok(None),
        }
    }

    pub fn put(&self, key: &CacheKey, targets: &DerivedTargets) -> Result<(), KbError> {
        let storage = |path: &Path| {
            let path = path.to_path_buf();
            move |source| KbError::Storage { path, source }
        };
        fs::create_dir_all(&self.dir).map_err(storage(&self.dir))?;
        let entry = CacheEntry {
            format_version: CACHE_FORMAT_VERSION,
            key: key.clone(),
            created_unix_s: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            targets: targets.clone(),
        };
        let body = serde_json::to_string_pretty(&entry).expect("cache entry serializes");
        let path = self.path_for(key);
        let tmp = self.dir.join(format!(
            ".{}.{}.tmp",
            key.digest(),
            std::process::id()
        ));
        let mut f = fs::File::create(&tmp).map_err(storage(&tmp))?;
        f.write_all(body.as_bytes()).map_err(storage(&tmp))?;
        f.sync_all().map_err(storage(&tmp))?;
        drop(f);
        fs::rename(&tmp, &path).map_err(storage(&path))
    }

    /// All readable entries, sorted by topology then spec.
    pub fn entries(&self) -> Result<Vec<CacheEntry>, KbError> {
        let rd = match fs::read_dir(&self.dir) {
            Ok(rd) => rd,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(source) => {
                return Err(KbError::Storage {
                    path: self.dir.clone(),
                    source,
                })
            }
        };
        let mut out = Vec::new();
        for item in rd.flatten() {
            let p = item.path();
            if p.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            if let Ok(text) = fs::read_to_string(&p) {
                if let Ok(entry) = serde_json::from_str::<CacheEntry>(&text) {
                    out.push(entry);
                }
            }
        }
        out.sort_by(|a, b| (&a.key.topology, &a.key.spec).cmp(&(&b.key.topology, &b.key.spec)));
        Ok(out)
    }

    /// Removes every entry file; returns how many were deleted.
    pub fn clear(&self) -> Result<usize, KbError> {
        let rd = match fs::read_dir(&self.dir) {
            Ok(rd) => rd,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(0),
            Err(source) => {
                return Err(KbError::Storage {
                    path: self.dir.clone(),
                    source,
                })
            }
        };
        let mut n = 0;
        for item in rd.flatten() {
            let p = item.path();
            if p.extension().and_then(|e| e.to_str()) == Some("json") {
                fs::remove_file(&p).map_err(|source| KbError::Storage {
                    path: p.clone(),
                    source,
                })?;
                n += 1;
            }
        }
        Ok(n)
    }
}
