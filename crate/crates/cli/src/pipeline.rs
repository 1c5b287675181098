//! Pipeline stages. Each reads its inputs from the configured paths (or the
//! previous stage's artifact in `out_dir`), writes its artifacts and returns
//! a short summary.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use sentipanel_core::embedding::{read_embeddings, write_embeddings};
use sentipanel_core::metrics::{format_csv, format_report};
use sentipanel_core::train::evaluate;
use sentipanel_core::{
    build_model, build_vocab, checkpoint, confusion, metrics, train_cbow, train_multitask, AclmmModel, CbowConfig,
    LabeledCorpus, ModelConfig, Split, TaskSpec, TrainConfig,
};
use sentipanel_panel::data::{emotion_index, DayCounts};
use sentipanel_panel::report::{format_protocol, to_json};
use sentipanel_panel::{
    aggregate_shares, count_texts, run_protocol, ClassifiedText, CovarianceKind, Dependent, PanelDataset,
    ProtocolOptions, RegressionSpec, SentimentPanelRow, EMOTIONS,
};

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::validate::check_corpus;

pub const POSTS_HEADER: &str = "city\tdate\ttext";
pub const CLASSIFIED_HEADER: &str = "city\tdate\tpandemic\tpandemic_prob\temotion\temotion_prob\tattention\ttext";
pub const COVARIATE_COLUMNS: [&str; 9] =
    ["city", "date", "cases", "foreign", "risk", "distance", "pmedical", "pgovernment", "density"];

#[derive(Debug, Clone, PartialEq)]
pub struct Post {
    pub city: String,
    pub date: NaiveDate,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovariateRow {
    pub city: String,
    pub date: NaiveDate,
    pub cases: f64,
    pub foreign: f64,
    pub risk: f64,
    pub distance: f64,
    pub pmedical: f64,
    pub pgovernment: f64,
    pub density: f64,
    pub netout: Option<f64>,
}

/// Artifact locations under `out_dir`, with configured inputs taking precedence.
pub struct Artifacts<'a> {
    cfg: &'a PipelineConfig,
}

impl<'a> Artifacts<'a> {
    pub fn new(cfg: &'a PipelineConfig) -> Self {
        Self { cfg }
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.cfg.out_dir.join(name)
    }

    fn input(&self, configured: &Option<PathBuf>, name: &str) -> PathBuf {
        configured.clone().unwrap_or_else(|| self.out(name))
    }

    pub fn embeddings(&self) -> PathBuf {
        self.input(&self.cfg.paths.embeddings, "embeddings.txt")
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.input(&self.cfg.paths.checkpoint, "model.ckpt")
    }

    pub fn classified(&self) -> PathBuf {
        self.input(&self.cfg.paths.classified, "classified.tsv")
    }

    pub fn panel(&self) -> PathBuf {
        self.input(&self.cfg.paths.panel, "panel.csv")
    }
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{what} {} does not exist", path.display())))
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Appends a timestamped line to `run.log`; the only place wall-clock time is recorded.
pub fn log_run(cfg: &PipelineConfig, stage: &str, summary: &str) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir)?;
    let mut f = fs::OpenOptions::new().create(true).append(true).open(cfg.out_dir.join("run.log"))?;
    let first = summary.lines().next().unwrap_or("");
    writeln!(f, "{} {stage} seed={} {first}", chrono::Utc::now().to_rfc3339(), cfg.seed)?;
    Ok(())
}

fn task_specs(cfg: &PipelineConfig) -> Result<Vec<TaskSpec>> {
    if cfg.tasks.is_empty() {
        return Err(CliError::Config("no tasks configured (add [[tasks]] sections)".into()));
    }
    cfg.tasks.iter().map(|t| TaskSpec::new(t.id.clone(), t.classes.clone()).map_err(CliError::from)).collect()
}

/// Reads every configured corpus, rejecting labels outside their task's class range.
pub fn load_corpora(cfg: &PipelineConfig) -> Result<Vec<LabeledCorpus>> {
    if cfg.paths.corpora.is_empty() {
        return Err(CliError::Config("no labeled corpora configured (paths.corpora)".into()));
    }
    let mut out = Vec::new();
    for path in &cfg.paths.corpora {
        require(path, "corpus")?;
        let text = fs::read_to_string(path)?;
        if let Some(problem) = check_corpus(&text, &cfg.tasks).into_iter().next() {
            return Err(CliError::Input(format!("{}:{problem}", path.display())));
        }
        out.push(LabeledCorpus::parse_tsv(&text).map_err(|e| CliError::from(e).context(path.display()))?);
    }
    Ok(out)
}

pub fn embed(cfg: &PipelineConfig) -> Result<String> {
    let corpora = load_corpora(cfg)?;
    let mut texts: Vec<String> = corpora.iter().flat_map(|c| c.texts().map(String::from)).collect();
    if let Some(p) = &cfg.paths.texts {
        require(p, "text file")?;
        texts.extend(fs::read_to_string(p)?.lines().filter(|l| !l.trim().is_empty()).map(String::from));
    }
    let e = &cfg.embedding;
    let vocab = build_vocab(&texts, e.min_count)?;
    let cbow = CbowConfig {
        dim: e.dim,
        window: e.window,
        negatives: e.negatives,
        epochs: e.epochs,
        learning_rate: e.learning_rate,
        seed: cfg.seed,
    };
    let out = train_cbow(&texts, &vocab, &cbow)?;
    fs::create_dir_all(&cfg.out_dir)?;
    let path = Artifacts::new(cfg).out("embeddings.txt");
    write_embeddings(&path, &vocab, &out.embeddings)?;
    let last = out.epoch_losses.last().copied().unwrap_or(f64::NAN);
    Ok(format!(
        "embeddings: {} characters x {} dims from {} texts, final loss {last:.4} -> {}",
        vocab.len(),
        e.dim,
        texts.len(),
        path.display()
    ))
}

pub fn train(cfg: &PipelineConfig) -> Result<String> {
    let art = Artifacts::new(cfg);
    let tasks = task_specs(cfg)?;
    let corpora = load_corpora(cfg)?;
    let emb_path = art.embeddings();
    require(&emb_path, "embeddings")?;
    let (vocab, matrix) = read_embeddings(&emb_path).map_err(|e| CliError::from(e).context(emb_path.display()))?;
    let m = &cfg.model;
    let model_cfg =
        ModelConfig { kernel_size: m.kernel_size, channels: m.channels, max_len: m.max_len, fixed_length: m.fixed_length };
    let mut model = build_model(&vocab, &matrix, model_cfg, tasks, cfg.seed)?;
    let t = &cfg.train;
    let train_cfg = TrainConfig {
        epochs: t.epochs,
        batch_size: t.batch_size,
        optimizer: t.optimizer,
        learning_rate: t.learning_rate,
        seed: cfg.seed,
        schedule: t.schedule,
        freeze_embeddings: t.freeze_embeddings,
    };
    let log = train_multitask(&mut model, &corpora, &train_cfg)?;
    fs::create_dir_all(&cfg.out_dir)?;
    let ckpt = art.out("model.ckpt");
    checkpoint::save(&model, &ckpt)?;
    write(&art.out("train_log.tsv"), &log.to_tsv())?;
    let mut summary = format!("trained {} epochs -> {}\n", t.epochs, ckpt.display());
    if let Some(last) = log.epochs.last() {
        for te in &last.tasks {
            let acc = te.dev_accuracy.map_or_else(|| "NA".into(), |a| format!("{a:.4}"));
            let _ = writeln!(summary, "  {}: train loss {:.4}, dev accuracy {acc}", te.task, te.train_loss);
        }
    }
    Ok(summary)
}

fn load_model(cfg: &PipelineConfig) -> Result<AclmmModel> {
    let path = Artifacts::new(cfg).checkpoint();
    require(&path, "checkpoint")?;
    checkpoint::load(&path).map_err(|e| CliError::from(e).context(path.display()))
}

pub fn eval(cfg: &PipelineConfig) -> Result<String> {
    let split: Split = cfg.eval.split.parse()?;
    let model = load_model(cfg)?;
    let corpora = load_corpora(cfg)?;
    let art = Artifacts::new(cfg);
    fs::create_dir_all(&cfg.out_dir)?;
    let mut summary = String::new();
    for task in model.tasks() {
        let records: Vec<_> = corpora.iter().flat_map(|c| c.select(&task.id, split)).collect();
        if records.is_empty() {
            let _ = writeln!(summary, "{}: no {split} records", task.id);
            continue;
        }
        let ev = evaluate(&model, &records, &task.id)?;
        let m = metrics(&confusion(&ev.pairs, task.num_classes())?)?;
        let report = format_report(&m, &task.classes);
        write(&art.out(&format!("eval_{}.txt", task.id)), &report)?;
        write(&art.out(&format!("eval_{}.csv", task.id)), &format_csv(&m, &task.classes))?;
        let _ = writeln!(summary, "{} ({split}, n={}): accuracy {:.4}, loss {:.4}", task.id, m.total, m.accuracy, ev.loss);
    }
    Ok(summary)
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

/// Reads a `city<TAB>date<TAB>text` file.
pub fn parse_posts(input: &str) -> std::result::Result<Vec<Post>, String> {
    let mut lines = input.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == POSTS_HEADER => {}
        _ => return Err(format!("line 1: expected header `{}`", POSTS_HEADER.replace('\t', "\\t"))),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.splitn(3, '\t').collect();
        if fields.len() != 3 {
            return Err(format!("line {}: expected 3 tab-separated fields", i + 1));
        }
        let date = parse_date(fields[1]).ok_or_else(|| format!("line {}: `{}` is not an ISO-8601 date", i + 1, fields[1]))?;
        out.push(Post { city: fields[0].to_string(), date, text: fields[2].to_string() });
    }
    Ok(out)
}

pub fn format_posts(posts: &[Post]) -> String {
    let mut out = format!("{POSTS_HEADER}\n");
    for p in posts {
        let _ = writeln!(out, "{}\t{}\t{}", p.city, p.date, p.text.replace(['\t', '\n', '\r'], " "));
    }
    out
}

pub fn read_posts(path: &Path) -> Result<Vec<Post>> {
    require(path, "posts file")?;
    parse_posts(&fs::read_to_string(path)?).map_err(|m| CliError::Input(format!("{}: {m}", path.display())))
}

pub fn classify(cfg: &PipelineConfig) -> Result<String> {
    let c = &cfg.classify;
    let posts_path = cfg.paths.posts.clone().ok_or_else(|| CliError::Config("paths.posts is not set".into()))?;
    let posts = read_posts(&posts_path)?;
    let model = load_model(cfg)?;
    let identify = &model.tasks()[model.task_index(&c.identify_task)?];
    let pandemic_class = identify.classes.iter().position(|k| *k == c.pandemic_class).ok_or_else(|| {
        CliError::Config(format!("task `{}` has no class `{}`", identify.id, c.pandemic_class))
    })?;
    let emotion = &model.tasks()[model.task_index(&c.emotion_task)?];
    for k in &emotion.classes {
        if emotion_index(k).is_none() {
            return Err(CliError::Config(format!(
                "class `{k}` of task `{}` is not an emotion ({})",
                emotion.id,
                EMOTIONS.join(", ")
            )));
        }
    }

    let texts: Vec<&str> = posts.iter().map(|p| p.text.as_str()).collect();
    let ident = model.predict_batch(&texts, &identify.id)?;
    let flagged: Vec<usize> = (0..posts.len()).filter(|&i| ident[i].class == pandemic_class).collect();
    let flagged_texts: Vec<&str> = flagged.iter().map(|&i| texts[i]).collect();
    let emo = model.predict_batch(&flagged_texts, &emotion.id)?;
    let emo_of: HashMap<usize, usize> = flagged.iter().enumerate().map(|(j, &i)| (i, j)).collect();

    let weights = |w: &[f64]| w.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
    let mut out = format!("{CLASSIFIED_HEADER}\n");
    for (i, p) in posts.iter().enumerate() {
        let pi = &ident[i];
        let text = p.text.replace(['\t', '\n', '\r'], " ");
        let _ = match emo_of.get(&i).map(|&j| &emo[j]) {
            Some(e) => writeln!(
                out,
                "{}\t{}\t1\t{:.4}\t{}\t{:.4}\t{}\t{text}",
                p.city,
                p.date,
                pi.probs[pandemic_class],
                emotion.classes[e.class],
                e.probs[e.class],
                weights(&e.attention)
            ),
            None => writeln!(
                out,
                "{}\t{}\t0\t{:.4}\tNA\tNA\t{}\t{text}",
                p.city,
                p.date,
                pi.probs[pandemic_class],
                weights(&pi.attention)
            ),
        };
    }
    fs::create_dir_all(&cfg.out_dir)?;
    let path = Artifacts::new(cfg).out("classified.tsv");
    write(&path, &out)?;
    Ok(format!("classified {} posts, {} pandemic-related -> {}", posts.len(), flagged.len(), path.display()))
}

pub fn parse_classified(input: &str) -> std::result::Result<Vec<ClassifiedText>, String> {
    let mut lines = input.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == CLASSIFIED_HEADER => {}
        _ => return Err("line 1: not a classified-posts file (unexpected header)".into()),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fail = |m: String| format!("line {}: {m}", i + 1);
        let f: Vec<&str> = line.splitn(8, '\t').collect();
        if f.len() != 8 {
            return Err(fail("expected 8 tab-separated fields".into()));
        }
        let date = parse_date(f[1]).ok_or_else(|| fail(format!("`{}` is not an ISO-8601 date", f[1])))?;
        let pandemic = match f[2] {
            "1" => true,
            "0" => false,
            other => return Err(fail(format!("pandemic flag `{other}` is not 0 or 1"))),
        };
        let emotion = match (pandemic, f[4]) {
            (false, _) | (true, "NA") => None,
            (true, name) => Some(emotion_index(name).ok_or_else(|| fail(format!("unknown emotion `{name}`")))?),
        };
        out.push(ClassifiedText { city: f[0].to_string(), date, pandemic, emotion });
    }
    Ok(out)
}

pub fn parse_covariates(input: &str) -> std::result::Result<Vec<CovariateRow>, String> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input.as_bytes());
    let headers = rdr.headers().map_err(|e| format!("line 1: {e}"))?.clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    if let Some(col) = COVARIATE_COLUMNS.iter().find(|c| !index.contains_key(*c)) {
        return Err(format!("missing required column `{col}`"));
    }
    let netout = index.get("netout").copied();
    let mut seen: HashMap<(String, NaiveDate), usize> = HashMap::new();
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| format!("line {line}: {e}"))?;
        let field = |name: &str| rec.get(index[name]).unwrap_or("");
        let real = |name: &str| {
            field(name).parse::<f64>().map_err(|_| format!("line {line}: column `{name}`: `{}` is not a number", field(name)))
        };
        let city = field("city").to_string();
        if city.is_empty() {
            return Err(format!("line {line}: empty city"));
        }
        let date = parse_date(field("date")).ok_or_else(|| format!("line {line}: `{}` is not an ISO-8601 date", field("date")))?;
        if let Some(first) = seen.insert((city.clone(), date), line) {
            return Err(format!("lines {first} and {line}: duplicate row for city `{city}` on {date}"));
        }
        let netout = match netout.and_then(|c| rec.get(c)).filter(|s| !s.is_empty() && *s != "NA") {
            Some(s) => Some(s.parse::<f64>().map_err(|_| format!("line {line}: column `netout`: `{s}` is not a number"))?),
            None => None,
        };
        out.push(CovariateRow {
            city,
            date,
            cases: real("cases")?,
            foreign: real("foreign")?,
            risk: real("risk")?,
            distance: real("distance")?,
            pmedical: real("pmedical")?,
            pgovernment: real("pgovernment")?,
            density: real("density")?,
            netout,
        });
    }
    Ok(out)
}

pub fn format_covariates(rows: &[CovariateRow]) -> String {
    let with_netout = rows.iter().any(|r| r.netout.is_some());
    let mut out = COVARIATE_COLUMNS.join(",");
    if with_netout {
        out.push_str(",netout");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.city, r.date, r.cases, r.foreign, r.risk, r.distance, r.pmedical, r.pgovernment, r.density
        );
        if with_netout {
            let _ = write!(out, ",{}", r.netout.map_or_else(|| "NA".into(), |v| v.to_string()));
        }
        out.push('\n');
    }
    out
}

pub fn read_covariates(path: &Path) -> Result<Vec<CovariateRow>> {
    require(path, "covariates file")?;
    parse_covariates(&fs::read_to_string(path)?).map_err(|m| CliError::Input(format!("{}: {m}", path.display())))
}

/// Joins per-day text counts onto covariate rows. City-days without texts
/// get zero counts; counts for city-days absent from the covariates are
/// reported and dropped.
pub fn join_panel(
    counts: &BTreeMap<(String, NaiveDate), DayCounts>,
    covariates: &[CovariateRow],
) -> Result<(PanelDataset, Vec<String>)> {
    let mut notes = Vec::new();
    let keys: std::collections::HashSet<(&str, NaiveDate)> = covariates.iter().map(|c| (c.city.as_str(), c.date)).collect();
    let orphans: Vec<_> = counts.keys().filter(|(c, d)| !keys.contains(&(c.as_str(), *d))).collect();
    if !orphans.is_empty() {
        let (c, d) = orphans[0];
        notes.push(format!("{} city-days have texts but no covariates (first: {c} {d}); dropped", orphans.len()));
    }
    let rows = covariates
        .iter()
        .map(|c| {
            let n = counts.get(&(c.city.clone(), c.date)).copied().unwrap_or_default();
            SentimentPanelRow {
                city: c.city.clone(),
                date: c.date,
                total_texts: n.total,
                pandemic_texts: n.pandemic,
                emotions: n.emotions,
                cases: c.cases,
                foreign: c.foreign,
                risk: c.risk,
                distance: c.distance,
                pmedical: c.pmedical,
                pgovernment: c.pgovernment,
                density: c.density,
                netout: c.netout,
            }
        })
        .collect();
    Ok((PanelDataset::new(rows)?, notes))
}

pub fn aggregate(cfg: &PipelineConfig) -> Result<String> {
    let art = Artifacts::new(cfg);
    let classified_path = art.classified();
    require(&classified_path, "classified posts")?;
    let texts = parse_classified(&fs::read_to_string(&classified_path)?)
        .map_err(|m| CliError::Input(format!("{}: {m}", classified_path.display())))?;
    let cov_path = cfg.paths.covariates.clone().ok_or_else(|| CliError::Config("paths.covariates is not set".into()))?;
    let covariates = read_covariates(&cov_path)?;
    let counts = count_texts(&texts)?;
    let (panel, mut notes) = join_panel(&counts, &covariates)?;
    let shares = aggregate_shares(&panel);
    notes.extend(shares.diagnostics.iter().cloned());

    fs::create_dir_all(&cfg.out_dir)?;
    let panel_path = art.out("panel.csv");
    panel.write_csv_path(&panel_path)?;
    let mut csv = format!("city,date,attention,{}\n", EMOTIONS.join(","));
    for r in &shares.rows {
        let _ = write!(csv, "{},{},{}", r.city, r.date, r.attention);
        match r.emotions {
            Some(e) => e.iter().for_each(|v| {
                let _ = write!(csv, ",{v}");
            }),
            None => csv.push_str(&",NA".repeat(EMOTIONS.len())),
        }
        csv.push('\n');
    }
    write(&art.out("shares.csv"), &csv)?;
    let mut summary = format!(
        "panel: {} cities x {} rows from {} texts -> {}\n",
        panel.cities().len(),
        panel.len(),
        texts.len(),
        panel_path.display()
    );
    for n in notes {
        let _ = writeln!(summary, "  note: {n}");
    }
    Ok(summary)
}

fn covariance_kind(name: &str) -> Result<CovarianceKind> {
    match name.to_ascii_lowercase().as_str() {
        "hc0" => Ok(CovarianceKind::Hc0),
        "hc1" => Ok(CovarianceKind::Hc1),
        other => Err(CliError::Config(format!("regression.robust `{other}` must be hc0 or hc1"))),
    }
}

/// Standard specifications for the configured dependents.
pub fn regression_specs(cfg: &PipelineConfig) -> Result<(Vec<RegressionSpec>, ProtocolOptions)> {
    let r = &cfg.regression;
    if !(r.alpha > 0.0 && r.alpha < 1.0) {
        return Err(CliError::Config(format!("regression.alpha {} must lie in (0, 1)", r.alpha)));
    }
    let opts = ProtocolOptions { alpha: r.alpha, robust: covariance_kind(&r.robust)? };
    let specs = r
        .dependents
        .iter()
        .map(|d| {
            let dep: Dependent = d.parse().map_err(|e: sentipanel_panel::PanelError| CliError::Config(e.to_string()))?;
            let mut spec = RegressionSpec::standard(dep);
            spec.trend = r.trend;
            spec.baseline = r.baseline.clone();
            Ok(spec)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((specs, opts))
}

pub fn regress(cfg: &PipelineConfig) -> Result<String> {
    let (specs, opts) = regression_specs(cfg)?;
    let art = Artifacts::new(cfg);
    let path = art.panel();
    require(&path, "panel")?;
    let panel = PanelDataset::read_csv_path(&path).map_err(|e| CliError::from(e).context(path.display()))?;
    let report = run_protocol(&panel, &specs, &opts)?;
    let text = format_protocol(&report);
    fs::create_dir_all(&cfg.out_dir)?;
    write(&art.out("regression.txt"), &text)?;
    write(&art.out("regression.json"), &to_json(&report))?;
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn posts_round_trip() {
        let posts = vec![Post { city: "A".into(), date: NaiveDate::from_ymd_opt(2020, 1, 2).unwrap(), text: "x\ty".into() }];
        let back = parse_posts(&format_posts(&posts)).unwrap();
        assert_eq!(back[0].text, "x y");
        assert!(parse_posts("city\tdate\ttext\nA\t2020-13-01\tx\n").unwrap_err().starts_with("line 2"));
    }

    #[test]
    fn covariates_need_every_column() {
        let err = parse_covariates("city,date,cases,foreign,risk,distance,pmedical,density\n").unwrap_err();
        assert!(err.contains("`pgovernment`"), "{err}");
    }

    #[test]
    fn duplicate_covariate_rows_cite_both_lines() {
        let row = "A,2020-01-01,1,0,0,1,1,1,1\n";
        let text = format!("{}\n{row}B,2020-01-01,1,0,0,1,1,1,1\n{row}", COVARIATE_COLUMNS.join(","));
        assert_eq!(parse_covariates(&text).unwrap_err(), "lines 2 and 4: duplicate row for city `A` on 2020-01-01");
    }

    #[test]
    fn days_without_texts_get_zero_counts() {
        let d = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let cov = CovariateRow {
            city: "A".into(),
            date: d,
            cases: 1.0,
            foreign: 0.0,
            risk: 0.0,
            distance: 1.0,
            pmedical: 1.0,
            pgovernment: 1.0,
            density: 1.0,
            netout: None,
        };
        let mut counts = BTreeMap::new();
        counts.insert(("B".to_string(), d), DayCounts { total: 3, ..DayCounts::default() });
        let (panel, notes) = join_panel(&counts, &[cov]).unwrap();
        assert_eq!(panel.rows()[0].total_texts, 0);
        assert_eq!(notes.len(), 1);
    }
}
