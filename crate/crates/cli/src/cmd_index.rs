use std::path::PathBuf;

use clap::Args;
use ctlab_core::corpus::{load_trials, CorpusFormat};
use ctlab_core::index::InvertedIndex;

use crate::config::FileConfig;
use crate::error::{Failure, Result};
use crate::{pipeline, require_file, write_output};

pub const INDEX_FILE: &str = "index.ctix";
pub const DUMP_FILE: &str = "index.txt";

#[derive(Args)]
pub struct IndexArgs {
    /// Directory, `.zip`, `.xml` or `.jsonl` corpus.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// `xml` or `flat`; detected from file names when omitted.
    #[arg(long)]
    format: Option<String>,
    /// Stoplist file; the bundled list when omitted.
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Output directory; the index is written to `<out>/index.ctix`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a text dump to `<out>/index.txt`.
    #[arg(long)]
    dump: bool,
}

pub fn run(a: IndexArgs, cfg: &FileConfig) -> Result<()> {
    let corpus = cfg.require_path(a.corpus, "corpus")?;
    let out = cfg.require_path(a.out, "out")?;
    let format = cfg
        .pick::<String>(a.format, "format")?
        .map(|f| f.parse::<CorpusFormat>().map_err(Failure::config))
        .transpose()?;
    require_file(&corpus, "corpus")?;
    let pipeline = pipeline(cfg, a.stopwords)?;

    let load = load_trials(&corpus, format)?;
    for w in &load.warnings {
        log::warn!("skipped {}: {}", w.source, w.message);
    }
    let index = InvertedIndex::build(&load.trials, &pipeline)?;
    let path = out.join(INDEX_FILE);
    std::fs::create_dir_all(&out).map_err(|e| Failure::io(&out, e))?;
    index.save(&path)?;
    println!(
        "indexed {} trials ({} skipped), {} terms, avgdl {:.2} -> {}",
        index.num_docs(),
        load.warnings.len(),
        index.vocabulary_size(),
        index.avg_doc_length(),
        path.display()
    );
    if a.dump {
        let dump = out.join(DUMP_FILE);
        write_output(&dump, index.dump_text().as_bytes())?;
        println!("dump -> {}", dump.display());
    }
    Ok(())
}
