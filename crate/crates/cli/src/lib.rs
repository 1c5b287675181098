//! Command-line pipeline from labeled texts to panel regressions.

pub mod config;
pub mod demo;
pub mod error;
pub mod pipeline;
pub mod validate;

use std::fs;

pub use config::PipelineConfig;
pub use error::{CliError, Result};

/// Writes the synthetic inputs under `out_dir/demo` and runs every stage on them.
pub fn run_demo(cfg: &PipelineConfig) -> Result<String> {
    let dir = cfg.out_dir.join("demo");
    fs::create_dir_all(&dir)?;
    let corpus_path = dir.join("corpus.tsv");
    let posts_path = dir.join("posts.tsv");
    let cov_path = dir.join("covariates.csv");
    demo::corpus(&cfg.demo, cfg.seed).write_tsv(&corpus_path)?;
    let synth = demo::panel(&cfg.demo, cfg.seed.wrapping_add(1));
    fs::write(&posts_path, pipeline::format_posts(&demo::posts(&synth, cfg.seed.wrapping_add(2))))?;
    fs::write(&cov_path, pipeline::format_covariates(&demo::covariates(&synth)))?;

    let mut cfg = cfg.clone();
    if cfg.tasks.is_empty() {
        cfg.tasks = demo::tasks();
    }
    cfg.paths.corpora = vec![corpus_path];
    cfg.paths.posts = Some(posts_path);
    cfg.paths.covariates = Some(cov_path);
    cfg.paths.embeddings = None;
    cfg.paths.checkpoint = None;
    cfg.paths.classified = None;
    cfg.paths.panel = None;

    let mut summary = String::new();
    type Stage = fn(&PipelineConfig) -> Result<String>;
    let stages: [(&str, Stage); 6] = [
        ("embed", pipeline::embed),
        ("train", pipeline::train),
        ("eval", pipeline::eval),
        ("classify", pipeline::classify),
        ("aggregate", pipeline::aggregate),
        ("regress", pipeline::regress),
    ];
    for (name, stage) in stages {
        let s = stage(&cfg).map_err(|e| e.context(name))?;
        pipeline::log_run(&cfg, name, &s)?;
        summary.push_str(&format!("== {name}\n{}\n", s.trim_end()));
    }
    Ok(summary)
}
