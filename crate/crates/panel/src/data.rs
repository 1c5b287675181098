//! City-day panel rows, CSV I/O and sentiment-share aggregation.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{PanelError, Result};

pub const EMOTIONS: [&str; 8] = ["fear", "disgust", "joy", "surprise", "confidence", "sadness", "anger", "uncertainty"];

pub const COVARIATES: [&str; 7] = ["cases", "foreign", "risk", "distance", "pmedical", "pgovernment", "density"];

/// Required header columns, in file order; `netout` may follow.
pub const REQUIRED_COLUMNS: [&str; 19] = [
    "city",
    "date",
    "total_texts",
    "pandemic_texts",
    "fear",
    "disgust",
    "joy",
    "surprise",
    "confidence",
    "sadness",
    "anger",
    "uncertainty",
    "cases",
    "foreign",
    "risk",
    "distance",
    "pmedical",
    "pgovernment",
    "density",
];

pub fn emotion_index(name: &str) -> Option<usize> {
    EMOTIONS.iter().position(|e| *e == name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentPanelRow {
    pub city: String,
    pub date: NaiveDate,
    /// All texts posted in the city that day (W).
    pub total_texts: u64,
    /// Pandemic-related texts among them (A).
    pub pandemic_texts: u64,
    /// Pandemic texts per emotion class, in [`EMOTIONS`] order.
    pub emotions: [u64; 8],
    pub cases: f64,
    pub foreign: f64,
    pub risk: f64,
    pub distance: f64,
    pub pmedical: f64,
    pub pgovernment: f64,
    pub density: f64,
    pub netout: Option<f64>,
}

impl SentimentPanelRow {
    pub fn covariate(&self, name: &str) -> Option<f64> {
        Some(match name {
            "cases" => self.cases,
            "foreign" => self.foreign,
            "risk" => self.risk,
            "distance" => self.distance,
            "pmedical" => self.pmedical,
            "pgovernment" => self.pgovernment,
            "density" => self.density,
            _ => return None,
        })
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.pandemic_texts > self.total_texts {
            return Err(format!("pandemic_texts {} exceeds total_texts {}", self.pandemic_texts, self.total_texts));
        }
        let counted: u64 = self.emotions.iter().sum();
        if counted > self.pandemic_texts {
            return Err(format!("emotion counts sum to {counted}, more than pandemic_texts {}", self.pandemic_texts));
        }
        for name in ["cases", "foreign", "risk"] {
            let v = self.covariate(name).unwrap_or(0.0);
            if v < 0.0 {
                return Err(format!("{name} must be nonnegative, got {v}"));
            }
        }
        let numbers = COVARIATES.iter().filter_map(|c| self.covariate(c)).chain(self.netout);
        if numbers.into_iter().any(|v| !v.is_finite()) {
            return Err("non-finite covariate".into());
        }
        Ok(())
    }
}

/// Rows sorted by (city, date) with unique keys.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    rows: Vec<SentimentPanelRow>,
    cities: Vec<String>,
}

impl PanelDataset {
    pub fn new(mut rows: Vec<SentimentPanelRow>) -> Result<Self> {
        for r in &rows {
            r.check().map_err(|message| PanelError::InvalidRow {
                city: r.city.clone(),
                date: r.date.to_string(),
                message,
            })?;
        }
        rows.sort_by(|a, b| (&a.city, a.date).cmp(&(&b.city, b.date)));
        for w in rows.windows(2) {
            if w[0].city == w[1].city && w[0].date == w[1].date {
                return Err(PanelError::DuplicateKey {
                    city: w[0].city.clone(),
                    date: w[0].date.to_string(),
                    first_line: 0,
                    second_line: 0,
                });
            }
        }
        let mut cities: Vec<String> = rows.iter().map(|r| r.city.clone()).collect();
        cities.dedup();
        Ok(Self { rows, cities })
    }

    pub fn rows(&self) -> &[SentimentPanelRow] {
        &self.rows
    }

    /// Cities in sorted order; index positions are used as group ids.
    pub fn cities(&self) -> &[String] {
        &self.cities
    }

    pub fn city_index(&self, city: &str) -> Option<usize> {
        self.cities.binary_search_by(|c| c.as_str().cmp(city)).ok()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.rows.iter().map(|r| r.date).min()
    }

    pub fn has_netout(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.netout.is_some())
    }

    /// True when every city covers the same contiguous run of dates.
    pub fn is_balanced(&self) -> bool {
        let mut spans: Vec<(NaiveDate, NaiveDate, usize)> = Vec::new();
        for city in &self.cities {
            let dates: Vec<NaiveDate> = self.rows.iter().filter(|r| &r.city == city).map(|r| r.date).collect();
            let (first, last) = (dates[0], dates[dates.len() - 1]);
            if (last - first).num_days() as usize + 1 != dates.len() {
                return false;
            }
            spans.push((first, last, dates.len()));
        }
        spans.windows(2).all(|w| w[0] == w[1])
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
        for col in REQUIRED_COLUMNS {
            if !index.contains_key(col) {
                return Err(PanelError::MissingColumn(col.to_string()));
            }
        }
        let netout_col = index.get("netout").copied();
        let mut rows = Vec::new();
        let mut seen: HashMap<(String, NaiveDate), usize> = HashMap::new();
        for (i, record) in rdr.records().enumerate() {
            let line = i + 2;
            let record = record?;
            let field = |name: &str| record.get(index[name]).unwrap_or("");
            let fail = |name: &str, what: &str| PanelError::Parse {
                line,
                message: format!("column `{name}`: `{}` is not {what}", field(name)),
            };
            let count = |name: &str| field(name).parse::<u64>().map_err(|_| fail(name, "a nonnegative integer"));
            let real = |name: &str| field(name).parse::<f64>().map_err(|_| fail(name, "a number"));
            let date = NaiveDate::parse_from_str(field("date"), "%Y-%m-%d").map_err(|_| fail("date", "an ISO-8601 date"))?;
            let city = field("city").to_string();
            if city.is_empty() {
                return Err(PanelError::Parse { line, message: "empty city".into() });
            }
            if let Some(first) = seen.insert((city.clone(), date), line) {
                return Err(PanelError::DuplicateKey { city, date: date.to_string(), first_line: first, second_line: line });
            }
            let mut emotions = [0u64; 8];
            for (e, name) in emotions.iter_mut().zip(EMOTIONS) {
                *e = count(name)?;
            }
            let netout = match netout_col.and_then(|c| record.get(c)).filter(|s| !s.is_empty() && *s != "NA") {
                Some(s) => Some(s.parse::<f64>().map_err(|_| fail("netout", "a number"))?),
                None => None,
            };
            rows.push(SentimentPanelRow {
                city,
                date,
                total_texts: count("total_texts")?,
                pandemic_texts: count("pandemic_texts")?,
                emotions,
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
        Self::new(rows)
    }

    pub fn read_csv_path(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let with_netout = self.rows.iter().any(|r| r.netout.is_some());
        let mut header: Vec<&str> = REQUIRED_COLUMNS.to_vec();
        if with_netout {
            header.push("netout");
        }
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.city.clone(), r.date.to_string(), r.total_texts.to_string(), r.pandemic_texts.to_string()];
            rec.extend(r.emotions.iter().map(u64::to_string));
            rec.extend([r.cases, r.foreign, r.risk, r.distance, r.pmedical, r.pgovernment, r.density].map(|v| v.to_string()));
            if with_netout {
                rec.push(r.netout.map_or_else(|| "NA".to_string(), |v| v.to_string()));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Shares for one city-day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareRow {
    pub city: String,
    pub date: NaiveDate,
    /// A / W.
    pub attention: f64,
    /// E_e / A per emotion; `None` when A = 0.
    pub emotions: Option<[f64; 8]>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Shares {
    pub rows: Vec<ShareRow>,
    /// One line per rejected or flagged row.
    pub diagnostics: Vec<String>,
}

/// Attention share A/W and emotion shares E/A per row. Rows with W = 0 are
/// rejected; rows with A = 0 keep their attention share but have no emotion shares.
pub fn aggregate_shares(panel: &PanelDataset) -> Shares {
    let mut out = Shares::default();
    for r in panel.rows() {
        if r.total_texts == 0 {
            out.diagnostics.push(format!("{} {}: total_texts is 0, row rejected", r.city, r.date));
            continue;
        }
        let attention = r.pandemic_texts as f64 / r.total_texts as f64;
        let emotions = if r.pandemic_texts == 0 {
            out.diagnostics.push(format!("{} {}: no pandemic texts, emotion shares missing", r.city, r.date));
            None
        } else {
            let a = r.pandemic_texts as f64;
            Some(r.emotions.map(|e| e as f64 / a))
        };
        out.rows.push(ShareRow { city: r.city.clone(), date: r.date, attention, emotions });
    }
    out
}

/// Per-text classifier output used to build the count columns of a panel.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifiedText {
    pub city: String,
    pub date: NaiveDate,
    pub pandemic: bool,
    /// Emotion class index, only meaningful for pandemic texts.
    pub emotion: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DayCounts {
    pub total: u64,
    pub pandemic: u64,
    pub emotions: [u64; 8],
}

/// Counts W, A and E per (city, date).
pub fn count_texts<'a, I>(texts: I) -> Result<BTreeMap<(String, NaiveDate), DayCounts>>
where
    I: IntoIterator<Item = &'a ClassifiedText>,
{
    let mut out: BTreeMap<(String, NaiveDate), DayCounts> = BTreeMap::new();
    for t in texts {
        let c = out.entry((t.city.clone(), t.date)).or_default();
        c.total += 1;
        if t.pandemic {
            c.pandemic += 1;
            if let Some(e) = t.emotion {
                if e >= EMOTIONS.len() {
                    return Err(PanelError::Spec(format!("emotion index {e} out of range")));
                }
                c.emotions[e] += 1;
            }
        }
    }
    Ok(out)
}
