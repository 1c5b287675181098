//! Character vocabulary, CBOW embedding training with negative sampling,
//! and the plain-text embedding file format.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::{PAD_ID, UNK_ID};
use crate::tape::sigmoid;
use crate::tensor::DenseTensor;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
const FILE_MAGIC: &str = "sentipanel-emb";
const FILE_VERSION: &str = "v1";

/// Character-to-id map. Ids 0 and 1 are reserved for PAD and UNK; every
/// other id maps to exactly one character.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    ids: HashMap<char, usize>,
    chars: Vec<char>,
}

impl Vocabulary {
    /// Builds a vocabulary from characters in first-seen order.
    pub fn from_chars(chars: impl IntoIterator<Item = char>) -> Result<Self> {
        let mut v = Self { ids: HashMap::new(), chars: Vec::new() };
        for ch in chars {
            if v.ids.insert(ch, v.chars.len() + 2).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary character {ch:?}")));
            }
            v.chars.push(ch);
        }
        Ok(v)
    }

    /// Total size including the two reserved entries.
    pub fn len(&self) -> usize {
        self.chars.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, ch: char) -> Option<usize> {
        self.ids.get(&ch).copied()
    }

    pub fn token(&self, id: usize) -> Option<String> {
        match id {
            PAD_ID => Some(PAD_TOKEN.to_string()),
            UNK_ID => Some(UNK_TOKEN.to_string()),
            _ => self.chars.get(id - 2).map(|c| c.to_string()),
        }
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    /// One id per character; unknown characters become UNK.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        text.chars().map(|c| self.id(c).unwrap_or(UNK_ID)).collect()
    }

    /// Inverse of [`encode`](Self::encode) for in-vocabulary text. PAD is
    /// dropped and UNK becomes U+FFFD.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&i| i != PAD_ID)
            .map(|&i| if i < 2 { '\u{FFFD}' } else { self.chars.get(i - 2).copied().unwrap_or('\u{FFFD}') })
            .collect()
    }
}

/// Segments every text per character and keeps characters seen at least
/// `min_count` times, most frequent first (ties by code point).
pub fn build_vocab<S: AsRef<str>>(corpus: &[S], min_count: usize) -> Result<Vocabulary> {
    let mut counts: HashMap<char, usize> = HashMap::new();
    for text in corpus {
        for ch in text.as_ref().chars() {
            *counts.entry(ch).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::EmptyCorpus("no characters to build a vocabulary from".into()));
    }
    let mut kept: Vec<(char, usize)> = counts.into_iter().filter(|(_, n)| *n >= min_count.max(1)).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    Vocabulary::from_chars(kept.into_iter().map(|(c, _)| c))
}

/// `vocab_size × dim` embedding rows, indexed by vocabulary id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    table: DenseTensor,
}

impl EmbeddingMatrix {
    pub fn new(table: DenseTensor) -> Result<Self> {
        if table.shape().len() != 2 || !table.is_finite() {
            return Err(Error::Shape("embedding table must be a finite 2-D matrix".into()));
        }
        Ok(Self { table })
    }

    pub fn vocab_size(&self) -> usize {
        self.table.rows()
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    pub fn row(&self, id: usize) -> &[f64] {
        self.table.row(id)
    }

    pub fn table(&self) -> &DenseTensor {
        &self.table
    }

    pub fn into_table(self) -> DenseTensor {
        self.table
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CbowConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for CbowConfig {
    fn default() -> Self {
        Self { dim: 200, window: 2, negatives: 5, epochs: 5, learning_rate: 0.05, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct CbowOutput {
    pub embeddings: EmbeddingMatrix,
    /// Mean negative-sampling loss per training example, one entry per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Trains character vectors by predicting each character from the mean of
/// its context vectors, with a negative-sampling objective against a
/// unigram^0.75 noise distribution. The learning rate decays linearly.
pub fn train_cbow<S: AsRef<str>>(corpus: &[S], vocab: &Vocabulary, cfg: &CbowConfig) -> Result<CbowOutput> {
    if cfg.window < 1 || cfg.dim < 1 {
        return Err(Error::Config("CBOW window and dimension must be >= 1".into()));
    }
    if cfg.learning_rate.is_nan() || cfg.learning_rate <= 0.0 {
        return Err(Error::Config("CBOW learning rate must be positive".into()));
    }
    let v = vocab.len();
    let d = cfg.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut input: Vec<f64> = (0..v * d).map(|_| (rng.random::<f64>() - 0.5) / d as f64).collect();
    let mut output = vec![0.0; v * d];

    let docs: Vec<Vec<usize>> = corpus
        .iter()
        .map(|t| vocab.encode(t.as_ref()).into_iter().filter(|&i| i >= 2).collect())
        .collect();
    let mut counts = vec![0usize; v];
    docs.iter().flatten().for_each(|&i| counts[i] += 1);
    let total_tokens: usize = counts.iter().sum();
    let noise = NoiseTable::new(&counts);

    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    if let Some(noise) = noise.filter(|_| total_tokens > 0) {
        let total_steps = (cfg.epochs * total_tokens).max(1) as f64;
        let mut done = 0usize;
        let mut hidden = vec![0.0; d];
        let mut err = vec![0.0; d];
        for _ in 0..cfg.epochs {
            let mut loss = 0.0;
            let mut examples = 0usize;
            for doc in &docs {
                for (pos, &center) in doc.iter().enumerate() {
                    let lr = (cfg.learning_rate * (1.0 - done as f64 / total_steps)).max(cfg.learning_rate * 1e-4);
                    done += 1;
                    let lo = pos.saturating_sub(cfg.window);
                    let hi = (pos + cfg.window + 1).min(doc.len());
                    let ctx: Vec<usize> = (lo..hi).filter(|&j| j != pos).map(|j| doc[j]).collect();
                    if ctx.is_empty() {
                        continue;
                    }
                    hidden.iter_mut().for_each(|h| *h = 0.0);
                    for &c in &ctx {
                        hidden.iter_mut().zip(&input[c * d..(c + 1) * d]).for_each(|(h, x)| *h += x);
                    }
                    let inv = 1.0 / ctx.len() as f64;
                    hidden.iter_mut().for_each(|h| *h *= inv);
                    err.iter_mut().for_each(|e| *e = 0.0);

                    for n in 0..=cfg.negatives {
                        let (target, label) = if n == 0 {
                            (center, 1.0)
                        } else {
                            let t = noise.sample(&mut rng);
                            if t == center {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let out = &mut output[target * d..(target + 1) * d];
                        let score: f64 = out.iter().zip(&hidden).map(|(a, b)| a * b).sum();
                        let p = sigmoid(score);
                        loss -= if label > 0.0 { p.max(1e-12).ln() } else { (1.0 - p).max(1e-12).ln() };
                        let g = (label - p) * lr;
                        err.iter_mut().zip(out.iter()).for_each(|(e, o)| *e += g * o);
                        out.iter_mut().zip(&hidden).for_each(|(o, h)| *o += g * h);
                    }
                    for &c in &ctx {
                        input[c * d..(c + 1) * d].iter_mut().zip(&err).for_each(|(x, e)| *x += e);
                    }
                    examples += 1;
                }
            }
            epoch_losses.push(if examples > 0 { loss / examples as f64 } else { 0.0 });
        }
    } else {
        epoch_losses.resize(cfg.epochs, 0.0);
    }

    let embeddings = EmbeddingMatrix::new(DenseTensor::new(vec![v, d], input)?)?;
    Ok(CbowOutput { embeddings, epoch_losses })
}

struct NoiseTable {
    ids: Vec<usize>,
    cumulative: Vec<f64>,
}

impl NoiseTable {
    fn new(counts: &[usize]) -> Option<Self> {
        let mut ids = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = 0.0;
        for (id, &n) in counts.iter().enumerate() {
            if n > 0 {
                acc += (n as f64).powf(0.75);
                ids.push(id);
                cumulative.push(acc);
            }
        }
        if ids.is_empty() {
            return None;
        }
        cumulative.iter_mut().for_each(|c| *c /= acc);
        Some(Self { ids, cumulative })
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.random();
        let i = self.cumulative.partition_point(|&c| c < u).min(self.ids.len() - 1);
        self.ids[i]
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Up to `k` vocabulary tokens ranked by cosine similarity to `query`, excluding the query itself.
pub fn nearest_neighbors(
    matrix: &EmbeddingMatrix,
    vocab: &Vocabulary,
    query: char,
    k: usize,
) -> Result<Vec<(String, f64)>> {
    let qid = vocab.id(query).ok_or_else(|| Error::UnknownChar(query.to_string()))?;
    let q = matrix.row(qid);
    let mut scored: Vec<(usize, f64)> =
        (0..matrix.vocab_size()).filter(|&i| i != qid).map(|i| (i, cosine(q, matrix.row(i)))).collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored.into_iter().map(|(i, s)| (vocab.token(i).unwrap_or_default(), s)).collect())
}

fn escape_char(c: char) -> String {
    match c {
        '\t' => "\\t".into(),
        '\n' => "\\n".into(),
        '\r' => "\\r".into(),
        '\\' => "\\\\".into(),
        c => c.to_string(),
    }
}

fn unescape_token(s: &str) -> Option<char> {
    let mut it = s.chars();
    let first = it.next()?;
    let c = if first == '\\' {
        match (it.next()?, it.next()) {
            ('t', None) => '\t',
            ('n', None) => '\n',
            ('r', None) => '\r',
            ('\\', None) => '\\',
            _ => return None,
        }
    } else {
        if it.next().is_some() {
            return None;
        }
        first
    };
    Some(c)
}

/// Serializes to the `sentipanel-emb v1` text format.
pub fn format_embeddings(vocab: &Vocabulary, matrix: &EmbeddingMatrix) -> Result<String> {
    if vocab.len() != matrix.vocab_size() {
        return Err(Error::Shape(format!(
            "vocabulary has {} entries but the matrix has {} rows",
            vocab.len(),
            matrix.vocab_size()
        )));
    }
    let mut out = format!("{FILE_MAGIC} {FILE_VERSION} {} {}\n", vocab.len(), matrix.dim());
    for id in 0..vocab.len() {
        let token = match id {
            PAD_ID => PAD_TOKEN.to_string(),
            UNK_ID => UNK_TOKEN.to_string(),
            _ => escape_char(vocab.chars()[id - 2]),
        };
        out.push_str(&token);
        out.push('\t');
        for (j, v) in matrix.row(id).iter().enumerate() {
            if j > 0 {
                out.push(' ');
            }
            write!(out, "{v}").expect("writing to a String");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_embeddings(text: &str) -> Result<(Vocabulary, EmbeddingMatrix)> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::Format { line: 1, message: "empty embedding file".into() })?;
    let parts: Vec<&str> = header.split(' ').collect();
    if parts.len() != 4 || parts[0] != FILE_MAGIC || parts[1] != FILE_VERSION {
        return Err(Error::Format { line: 1, message: format!("expected `{FILE_MAGIC} {FILE_VERSION} <vocab> <d>`") });
    }
    let bad_header = |_| Error::Format { line: 1, message: "vocab size and dimension must be integers".into() };
    let size: usize = parts[2].parse().map_err(bad_header)?;
    let dim: usize = parts[3].parse().map_err(bad_header)?;
    if size < 2 {
        return Err(Error::Format { line: 1, message: "vocabulary must include PAD and UNK".into() });
    }
    let mut chars = Vec::with_capacity(size - 2);
    let mut values = Vec::with_capacity(size * dim);
    for id in 0..size {
        let line_no = id + 2;
        let line = lines.next().ok_or(Error::Format { line: line_no, message: "missing embedding row".into() })?;
        let (token, floats) =
            line.split_once('\t').ok_or(Error::Format { line: line_no, message: "expected token<TAB>values".into() })?;
        match id {
            PAD_ID if token != PAD_TOKEN => {
                return Err(Error::Format { line: line_no, message: format!("row 0 must be {PAD_TOKEN}") })
            }
            UNK_ID if token != UNK_TOKEN => {
                return Err(Error::Format { line: line_no, message: format!("row 1 must be {UNK_TOKEN}") })
            }
            PAD_ID | UNK_ID => {}
            _ => chars.push(
                unescape_token(token)
                    .ok_or(Error::Format { line: line_no, message: format!("bad character token {token:?}") })?,
            ),
        }
        let row: Vec<f64> = floats
            .split(' ')
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format { line: line_no, message: e.to_string() })?;
        if row.len() != dim {
            return Err(Error::Format { line: line_no, message: format!("expected {dim} values, got {}", row.len()) });
        }
        values.extend(row);
    }
    let vocab = Vocabulary::from_chars(chars)?;
    let matrix = EmbeddingMatrix::new(DenseTensor::new(vec![size, dim], values)?)?;
    Ok((vocab, matrix))
}

pub fn write_embeddings(path: &Path, vocab: &Vocabulary, matrix: &EmbeddingMatrix) -> Result<()> {
    fs::write(path, format_embeddings(vocab, matrix)?)?;
    Ok(())
}

pub fn read_embeddings(path: &Path) -> Result<(Vocabulary, EmbeddingMatrix)> {
    parse_embeddings(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocab_examples() {
        let v = build_vocab(&["aba"], 1).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(v.id('a'), Some(2));
        assert_eq!(v.id('b'), Some(3));
        let v = build_vocab(&["aba"], 2).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.encode("ab"), vec![2, UNK_ID]);
        assert!(build_vocab::<&str>(&[], 1).is_err());
        assert!(build_vocab(&["", ""], 1).is_err());
    }

    #[test]
    fn vocab_segments_per_character() {
        let v = build_vocab(&["疫情 好"], 1).unwrap();
        assert_eq!(v.len(), 2 + 4);
        assert_eq!(v.encode("疫情").len(), 2);
        assert_eq!(v.decode(&v.encode("好 疫情")), "好 疫情");
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let corpus = ["abcabc", "cab"];
        let vocab = build_vocab(&corpus, 1).unwrap();
        let cfg = CbowConfig { dim: 8, epochs: 0, seed: 3, ..Default::default() };
        let a = train_cbow(&corpus, &vocab, &cfg).unwrap();
        let b = train_cbow(&corpus, &vocab, &CbowConfig { epochs: 0, ..cfg.clone() }).unwrap();
        assert_eq!(a.embeddings, b.embeddings);
        assert!(a.epoch_losses.is_empty());
        let trained = train_cbow(&corpus, &vocab, &CbowConfig { epochs: 1, ..cfg }).unwrap();
        assert_ne!(trained.embeddings, a.embeddings);
    }

    #[test]
    fn config_errors() {
        let vocab = build_vocab(&["ab"], 1).unwrap();
        assert!(train_cbow(&["ab"], &vocab, &CbowConfig { window: 0, ..Default::default() }).is_err());
        assert!(train_cbow(&["ab"], &vocab, &CbowConfig { dim: 0, ..Default::default() }).is_err());
    }

    #[test]
    fn neighbors_duplicate_row_first() {
        let vocab = Vocabulary::from_chars(['a', 'b', 'c']).unwrap();
        let rows = vec![
            vec![0.0, 0.0],
            vec![0.1, 0.1],
            vec![1.0, 2.0],
            vec![-1.0, 0.5],
            vec![2.0, 4.0],
        ];
        let m = EmbeddingMatrix::new(DenseTensor::from_rows(&rows).unwrap()).unwrap();
        let nn = nearest_neighbors(&m, &vocab, 'a', 2).unwrap();
        assert_eq!(nn[0].0, "c");
        assert!((nn[0].1 - 1.0).abs() < 1e-12);
        let all = nearest_neighbors(&m, &vocab, 'a', 100).unwrap();
        assert_eq!(all.len(), vocab.len() - 1);
        assert!(all.windows(2).all(|w| w[0].1 >= w[1].1));
        assert!(matches!(nearest_neighbors(&m, &vocab, 'z', 2), Err(Error::UnknownChar(_))));
    }

    #[test]
    fn file_round_trip_with_escapes() {
        let vocab = Vocabulary::from_chars(['a', '\t', '\\', '疫']).unwrap();
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 0.1, -1.0 / 3.0, 1e-300]).collect();
        let m = EmbeddingMatrix::new(DenseTensor::from_rows(&rows).unwrap()).unwrap();
        let text = format_embeddings(&vocab, &m).unwrap();
        assert!(text.starts_with("sentipanel-emb v1 6 3\n<pad>\t"));
        let (v2, m2) = parse_embeddings(&text).unwrap();
        assert_eq!(v2, vocab);
        assert_eq!(m2, m);
    }

    #[test]
    fn file_errors() {
        assert!(parse_embeddings("").is_err());
        assert!(parse_embeddings("word2vec 3 2\n").is_err());
        let e = parse_embeddings("sentipanel-emb v1 3 2\n<pad>\t0 0\n<unk>\t0 0\na\t1\n").unwrap_err();
        assert!(matches!(e, Error::Format { line: 4, .. }));
    }
}
