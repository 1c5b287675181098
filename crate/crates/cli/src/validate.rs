//! Input checks that report every problem with its file and line instead of
//! stopping at the first.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use sentipanel_core::train::CORPUS_HEADER;
use sentipanel_core::Split;
use sentipanel_panel::PanelDataset;

use crate::config::{PipelineConfig, TaskSection};
use crate::pipeline::{parse_classified, parse_covariates, parse_posts, regression_specs, Artifacts};

/// Problems in a labeled corpus, as `line N: ...`. Labels are checked against
/// the class count of their task; unknown tasks are reported once per task.
pub fn check_corpus(text: &str, tasks: &[TaskSection]) -> Vec<String> {
    let classes: HashMap<&str, usize> = tasks.iter().map(|t| (t.id.as_str(), t.classes.len())).collect();
    let mut out = Vec::new();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == CORPUS_HEADER => {}
        _ => {
            out.push(format!("line 1: expected header `{}`", CORPUS_HEADER.replace('\t', "\\t")));
            return out;
        }
    }
    let mut unknown = std::collections::HashSet::new();
    for (i, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let n = i + 1;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            out.push(format!("line {n}: expected 4 tab-separated fields, got {}", f.len()));
            continue;
        }
        if f[3].parse::<Split>().is_err() {
            out.push(format!("line {n}: split `{}` is not train, dev or test", f[3]));
        }
        let Ok(label) = f[2].parse::<usize>() else {
            out.push(format!("line {n}: label `{}` is not a nonnegative integer", f[2]));
            continue;
        };
        match classes.get(f[1]) {
            Some(&k) if label >= k => {
                out.push(format!("line {n}: label {label} is out of range for task `{}` ({k} classes)", f[1]))
            }
            Some(_) => {}
            None if tasks.is_empty() => {}
            None => {
                if unknown.insert(f[1].to_string()) {
                    out.push(format!("line {n}: unknown task `{}`", f[1]));
                }
            }
        }
    }
    out
}

fn check_file(path: &Path, check: impl FnOnce(&str) -> Vec<String>, out: &mut Vec<String>) {
    match fs::read_to_string(path) {
        Ok(text) => out.extend(check(&text).into_iter().map(|m| format!("{}: {m}", path.display()))),
        Err(e) => out.push(format!("{}: cannot read: {e}", path.display())),
    }
}

/// Every problem found in the configuration and the inputs that exist.
pub fn validate(cfg: &PipelineConfig) -> Vec<String> {
    let mut out = Vec::new();
    if cfg.tasks.is_empty() {
        out.push("config: no tasks configured".into());
    }
    for t in &cfg.tasks {
        if let Err(e) = sentipanel_core::TaskSpec::new(t.id.clone(), t.classes.clone()) {
            out.push(format!("config: {e}"));
        }
    }
    if let Err(e) = cfg.eval.split.parse::<Split>() {
        out.push(format!("config: eval.split: {e}"));
    }
    if let Err(e) = regression_specs(cfg) {
        out.push(format!("config: {e}"));
    }

    let missing = |p: &Path| format!("{}: file does not exist", p.display());
    for p in &cfg.paths.corpora {
        if p.exists() {
            check_file(p, |t| check_corpus(t, &cfg.tasks), &mut out);
        } else {
            out.push(missing(p));
        }
    }
    let art = Artifacts::new(cfg);
    let optional = [&cfg.paths.texts, &cfg.paths.embeddings, &cfg.paths.checkpoint];
    for p in optional.into_iter().flatten() {
        if !p.exists() {
            out.push(missing(p));
        }
    }
    if let Some(p) = &cfg.paths.posts {
        if p.exists() {
            check_file(p, |t| parse_posts(t).err().into_iter().collect(), &mut out);
        } else {
            out.push(missing(p));
        }
    }
    if let Some(p) = &cfg.paths.covariates {
        if p.exists() {
            check_file(p, |t| parse_covariates(t).err().into_iter().collect(), &mut out);
        } else {
            out.push(missing(p));
        }
    }
    let classified = art.classified();
    if classified.exists() {
        check_file(&classified, |t| parse_classified(t).err().into_iter().collect(), &mut out);
    } else if cfg.paths.classified.is_some() {
        out.push(missing(&classified));
    }
    let panel = art.panel();
    if panel.exists() {
        if let Err(e) = PanelDataset::read_csv_path(&panel) {
            out.push(format!("{}: {e}", panel.display()));
        }
    } else if cfg.paths.panel.is_some() {
        out.push(missing(&panel));
    }
    out
}
