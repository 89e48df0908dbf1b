//! `ingest`: tokenize a corpus into binary shards plus an index.

use std::path::PathBuf;

use clap::Args;
use lexforge_core::data::ingest;

use crate::commands::load_tokenizer_dir;
use crate::fail::CliResult;
use crate::manifest::RunManifest;

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Corpus directory (.txt files and/or .jsonl files with a "text" key).
    #[arg(long)]
    pub input: PathBuf,
    /// Tokenizer directory produced by train-tokenizer.
    #[arg(long)]
    pub tokenizer: PathBuf,
    /// Output directory for shards and index.tsv.
    #[arg(long)]
    pub out: PathBuf,
    /// Tokens per shard file.
    #[arg(long, default_value_t = 4_194_304)]
    pub shard_size: usize,
}

pub fn run(args: &IngestArgs) -> CliResult {
    let tokenizer = load_tokenizer_dir(&args.tokenizer)?;
    let (index, report) = ingest(&args.input, &tokenizer, &args.out, args.shard_size)?;

    let mut manifest = RunManifest::new("ingest");
    manifest.add_input("corpus", &args.input);
    manifest.add_input("tokenizer", &args.tokenizer);
    manifest
        .config
        .insert("shard_size".into(), args.shard_size.to_string());
    manifest.add_artifact(&args.out, "index.tsv")?;
    for (name, _) in &index.shards {
        manifest.add_artifact(&args.out, name)?;
    }
    manifest.write(&args.out)?;

    println!(
        "ingest: {} documents ({} skipped) -> {} tokens in {} shard(s) under {}",
        report.documents,
        report.skipped,
        report.tokens,
        report.shards,
        args.out.display()
    );
    Ok(())
}
