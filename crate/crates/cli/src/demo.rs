//! Synthetic inputs for the end-to-end demo: a labeled corpus with planted
//! class-marker characters, posts whose city-day counts follow a synthetic
//! panel, and that panel's covariates.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sentipanel_core::{LabeledCorpus, Record, Split};
use sentipanel_panel::synth::{generate, SynthConfig, SynthPanel};
use sentipanel_panel::EMOTIONS;

use crate::config::{DemoSection, TaskSection};
use crate::pipeline::{CovariateRow, Post};

const FILLER: &str = "的了是我你他她们在有不这个人来去说好天今年日子就都也很会要看想和吗吧呢啊上下";
const PANDEMIC: &str = "疫病毒罩诊隔";
const EMOTION_MARKERS: [&str; 8] = ["怕恐慌", "恶厌烦", "乐喜笑", "惊奇竟", "信赢稳", "悲哭伤", "怒气骂", "疑或许"];

pub const IDENTIFY: &str = "identify";
pub const EMOTION: &str = "emotion";

pub fn tasks() -> Vec<TaskSection> {
    vec![
        TaskSection { id: IDENTIFY.into(), classes: vec!["other".into(), "pandemic".into()] },
        TaskSection { id: EMOTION.into(), classes: EMOTIONS.map(String::from).to_vec() },
    ]
}

/// Filler text with planted markers. Pandemic posts carry one or two pandemic
/// characters and three characters of their emotion; half of the other posts
/// carry an emotion marker too, so `identify` has to key on the pandemic set.
pub struct TextGenerator {
    filler: Vec<char>,
    pandemic: Vec<char>,
    emotions: Vec<Vec<char>>,
}

impl Default for TextGenerator {
    fn default() -> Self {
        Self {
            filler: FILLER.chars().collect(),
            pandemic: PANDEMIC.chars().collect(),
            emotions: EMOTION_MARKERS.iter().map(|m| m.chars().collect()).collect(),
        }
    }
}

impl TextGenerator {
    fn insert(rng: &mut ChaCha8Rng, text: &mut Vec<char>, ch: char) {
        let at = rng.random_range(0..=text.len());
        text.insert(at, ch);
    }

    /// `emotion = Some(e)` gives a pandemic post of emotion `e`.
    pub fn text(&self, rng: &mut ChaCha8Rng, emotion: Option<usize>) -> String {
        let len = rng.random_range(8..16);
        let mut text: Vec<char> = (0..len).map(|_| *self.filler.choose(rng).expect("filler")).collect();
        match emotion {
            Some(e) => {
                for _ in 0..rng.random_range(1..=2) {
                    let c = *self.pandemic.choose(rng).expect("markers");
                    Self::insert(rng, &mut text, c);
                }
                for _ in 0..3 {
                    let c = *self.emotions[e].choose(rng).expect("markers");
                    Self::insert(rng, &mut text, c);
                }
            }
            None => {
                if rng.random_bool(0.5) {
                    let e = rng.random_range(0..self.emotions.len());
                    let c = *self.emotions[e].choose(rng).expect("markers");
                    Self::insert(rng, &mut text, c);
                }
            }
        }
        text.into_iter().collect()
    }
}

/// Identify and emotion records with train, dev and test splits.
pub fn corpus(cfg: &DemoSection, seed: u64) -> LabeledCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let generator = TextGenerator::default();
    let mut records = Vec::new();
    let splits = [(Split::Train, cfg.identify_train), (Split::Dev, cfg.identify_eval), (Split::Test, cfg.identify_eval)];
    for (split, n) in splits {
        for i in 0..n {
            let label = i % 2;
            let emotion = (label == 1).then(|| rng.random_range(0..EMOTIONS.len()));
            records.push(Record { text: generator.text(&mut rng, emotion), task: IDENTIFY.into(), label, split });
        }
    }
    let splits = [(Split::Train, cfg.emotion_train), (Split::Dev, cfg.emotion_eval), (Split::Test, cfg.emotion_eval)];
    for (split, per_class) in splits {
        for i in 0..per_class * EMOTIONS.len() {
            let label = i % EMOTIONS.len();
            records.push(Record { text: generator.text(&mut rng, Some(label)), task: EMOTION.into(), label, split });
        }
    }
    LabeledCorpus::new(records)
}

/// Synthetic panel at `posts_per_day` texts per city-day.
pub fn panel(cfg: &DemoSection, seed: u64) -> SynthPanel {
    let synth = SynthConfig { n_cities: cfg.cities, n_days: cfg.days, texts_per_day: cfg.posts_per_day, ..SynthConfig::default() };
    generate(&synth, seed)
}

/// Posts reproducing the panel's W, A and E counts, in city-date order.
pub fn posts(synth: &SynthPanel, seed: u64) -> Vec<Post> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let generator = TextGenerator::default();
    let mut out = Vec::new();
    for row in synth.panel.rows() {
        let mut kinds: Vec<Option<usize>> = Vec::with_capacity(row.total_texts as usize);
        for (e, &count) in row.emotions.iter().enumerate() {
            kinds.extend(std::iter::repeat_n(Some(e), count as usize));
        }
        kinds.extend(std::iter::repeat_n(None, (row.total_texts - row.pandemic_texts) as usize));
        for kind in kinds {
            out.push(Post { city: row.city.clone(), date: row.date, text: generator.text(&mut rng, kind) });
        }
    }
    out
}

pub fn covariates(synth: &SynthPanel) -> Vec<CovariateRow> {
    synth
        .panel
        .rows()
        .iter()
        .map(|r| CovariateRow {
            city: r.city.clone(),
            date: r.date,
            cases: r.cases,
            foreign: r.foreign,
            risk: r.risk,
            distance: r.distance,
            pmedical: r.pmedical,
            pgovernment: r.pgovernment,
            density: r.density,
            netout: r.netout,
        })
        .collect()
}
