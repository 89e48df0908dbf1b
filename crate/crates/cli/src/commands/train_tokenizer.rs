//! `train-tokenizer`: learn a byte-level BPE vocabulary from a corpus.

use std::path::PathBuf;

use clap::Args;
use lexforge_core::data::collect_documents;
use lexforge_core::tokenizer::{save_tokenizer, train_bpe, SpecialTagSet};

use crate::commands::ensure_dir;
use crate::fail::CliResult;
use crate::manifest::RunManifest;

#[derive(Debug, Args)]
pub struct TrainTokenizerArgs {
    /// Corpus directory (.txt files and/or .jsonl files with a "text" key).
    #[arg(long)]
    pub input: PathBuf,
    /// Target vocabulary size, byte tokens and special tags included.
    #[arg(long, default_value_t = 2048)]
    pub vocab_size: usize,
    /// Output directory for the tokenizer files.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &TrainTokenizerArgs) -> CliResult {
    let (docs, skipped) = collect_documents(&args.input)?;
    let tokenizer = train_bpe(
        docs.iter().map(String::as_str),
        args.vocab_size,
        SpecialTagSet::default(),
    )?;
    ensure_dir(&args.out)?;
    save_tokenizer(&tokenizer, &args.out)?;

    let mut manifest = RunManifest::new("train-tokenizer");
    manifest.add_input("corpus", &args.input);
    manifest
        .config
        .insert("vocab_size".into(), args.vocab_size.to_string());
    for name in ["vocab.txt", "merges.txt", "special_tokens.txt"] {
        manifest.add_artifact(&args.out, name)?;
    }
    manifest.write(&args.out)?;

    println!(
        "train-tokenizer: {} documents ({} skipped) -> vocab {} (fingerprint {:016x}) in {}",
        docs.len(),
        skipped,
        tokenizer.vocab_size(),
        tokenizer.fingerprint(),
        args.out.display()
    );
    Ok(())
}
