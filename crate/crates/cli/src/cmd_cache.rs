use std::collections::HashSet;
use std::path::PathBuf;

use clap::{Args, Subcommand};
use ctlab_core::gateway::{CacheKey, ResponseCache};

use crate::config::FileConfig;
use crate::error::{Class, Failure, Result};
use crate::require_file;

#[derive(Args)]
pub struct CacheArgs {
    #[command(subcommand)]
    action: CacheAction,
}

#[derive(Subcommand)]
enum CacheAction {
    /// Print every key with its timestamp and model.
    List(CacheDir),
    /// Check that every entry parses, hashes to its key and is indexed.
    Verify(CacheDir),
    /// Remove corrupt entries and, with `--keep`, every entry not listed.
    Gc {
        #[command(flatten)]
        dir: CacheDir,
        /// Key files (one key per line, e.g. `queries/*.keys`) to retain.
        #[arg(long)]
        keep: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct CacheDir {
    #[arg(long)]
    cache: Option<PathBuf>,
}

impl CacheDir {
    fn open(&self, cfg: &FileConfig) -> Result<ResponseCache> {
        let dir = cfg.require_path(self.cache.clone(), "cache")?;
        require_file(&dir, "cache")?;
        Ok(ResponseCache::open_existing(dir)?)
    }
}

pub fn run(a: CacheArgs, cfg: &FileConfig) -> Result<()> {
    match a.action {
        CacheAction::List(dir) => {
            let cache = dir.open(cfg)?;
            for key in cache.keys()? {
                match cache.get(&key)? {
                    Some(ex) => {
                        let model = ex.request.get("model").and_then(|m| m.as_str()).unwrap_or("");
                        println!("{key}\t{}\t{model}", ex.timestamp);
                    }
                    None => println!("{key}\t-\t-"),
                }
            }
            Ok(())
        }
        CacheAction::Verify(dir) => {
            let cache = dir.open(cfg)?;
            let problems = cache.verify()?;
            for p in &problems {
                println!("{p}");
            }
            if problems.is_empty() {
                println!("ok: {} entries", cache.keys()?.len());
                Ok(())
            } else {
                Err(Failure::new(
                    Class::Data,
                    format!("{} cache problem(s) in {}", problems.len(), cache.root().display()),
                ))
            }
        }
        CacheAction::Gc { dir, keep } => {
            let mut keys: HashSet<CacheKey> = HashSet::new();
            for path in &keep {
                let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
                for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                    let key = CacheKey::parse(line.trim()).ok_or_else(|| {
                        Failure::new(Class::Data, format!("{} line {}: not a cache key", path.display(), i + 1))
                    })?;
                    keys.insert(key);
                }
            }
            let cache = dir.open(cfg)?;
            let removed = cache.gc((!keep.is_empty()).then_some(&keys))?;
            for p in &removed {
                println!("removed {}", p.display());
            }
            println!("{} removed, {} kept", removed.len(), cache.keys()?.len());
            Ok(())
        }
    }
}
