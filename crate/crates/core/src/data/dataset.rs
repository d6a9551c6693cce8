use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TrainingInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Ranking,
    Classification,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Ranking => "ranking",
            Task::Classification => "classification",
        })
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ranking" | "ranking_tsv" => Ok(Task::Ranking),
            "classification" | "classification_tsv" => Ok(Task::Classification),
            other => Err(Error::Config(format!("unknown task `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairRecord {
    pub group: Option<String>,
    pub instance: TrainingInstance,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairDataset {
    pub task: Task,
    pub records: Vec<PairRecord>,
}

impl PairDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.records.iter().filter(|r| r.instance.label).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    /// Distinct group ids, in first-seen order.
    pub fn groups(&self) -> Vec<&str> {
        let mut seen = std::collections::HashSet::new();
        self.records
            .iter()
            .filter_map(|r| r.group.as_deref())
            .filter(|g| seen.insert(*g))
            .collect()
    }

    pub fn instances(&self) -> Vec<TrainingInstance> {
        self.records.iter().map(|r| r.instance.clone()).collect()
    }

    /// Serializes back to the TSV layout of [`load_dataset`].
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let s = r.instance.s.join(" ");
            let t = r.instance.t.join(" ");
            let label = u8::from(r.instance.label);
            let _ = match self.task {
                Task::Ranking => writeln!(out, "{}\t{s}\t{t}\t{label}", r.group.as_deref().unwrap_or("")),
                Task::Classification => writeln!(out, "{label}\t{s}\t{t}"),
            };
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

fn parse_label(path: &Path, line: usize, field: &str) -> Result<bool> {
    match field.trim() {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(Error::parse(path, line, format!("bad label `{other}`"))),
    }
}

fn parse_sentence(path: &Path, line: usize, field: &str) -> Result<Vec<String>> {
    let tokens: Vec<String> = field.split(' ').filter(|t| !t.is_empty()).map(str::to_string).collect();
    if tokens.is_empty() {
        return Err(Error::parse(path, line, "empty sentence"));
    }
    Ok(tokens)
}

/// Parses dataset text. `path` is used for error messages only.
pub fn parse_dataset(path: &Path, text: &str, task: Task) -> Result<PairDataset> {
    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if raw.is_empty() {
            continue;
        }
        let cols: Vec<&str> = raw.split('\t').collect();
        let (group, s, t, label) = match (task, cols.as_slice()) {
            (Task::Ranking, [g, s, t, l]) => {
                if g.trim().is_empty() {
                    return Err(Error::parse(path, line, "empty group id"));
                }
                (Some(g.trim().to_string()), *s, *t, *l)
            }
            (Task::Classification, [l, s, t]) => (None, *s, *t, *l),
            _ => {
                let expected = if task == Task::Ranking { 4 } else { 3 };
                return Err(Error::parse(
                    path,
                    line,
                    format!("expected {expected} tab-separated columns, found {}", cols.len()),
                ));
            }
        };
        records.push(PairRecord {
            group,
            instance: TrainingInstance {
                s: parse_sentence(path, line, s)?,
                t: parse_sentence(path, line, t)?,
                label: parse_label(path, line, label)?,
            },
        });
    }
    Ok(PairDataset { task, records })
}

/// Loads a ranking (`group<TAB>s<TAB>t<TAB>label`) or classification
/// (`label<TAB>s<TAB>t`) TSV file.
pub fn load_dataset(path: impl AsRef<Path>, task: Task) -> Result<PairDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ds = parse_dataset(path, &text, task)?;
    log::info!(
        "{}: {} records ({} positive, {} negative, {} groups)",
        path.display(),
        ds.len(),
        ds.positives(),
        ds.negatives(),
        ds.groups().len()
    );
    Ok(ds)
}

/// Samples `n_pos` positives and `n_neg` negatives (without replacement) into a dev set.
///
/// Both outputs keep the original record order.
pub fn split_dev(dataset: &PairDataset, n_pos: usize, n_neg: usize, seed: u64) -> Result<(PairDataset, PairDataset)> {
    let pos: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.records[i].instance.label).collect();
    let neg: Vec<usize> = (0..dataset.len()).filter(|&i| !dataset.records[i].instance.label).collect();
    if pos.len() < n_pos {
        return Err(Error::InsufficientInstances {
            kind: "positives",
            requested: n_pos,
            available: pos.len(),
        });
    }
    if neg.len() < n_neg {
        return Err(Error::InsufficientInstances {
            kind: "negatives",
            requested: n_neg,
            available: neg.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_dev = vec![false; dataset.len()];
    for &i in pos.choose_multiple(&mut rng, n_pos).chain(neg.choose_multiple(&mut rng, n_neg)) {
        in_dev[i] = true;
    }
    let (dev, train): (Vec<_>, Vec<_>) = dataset
        .records
        .iter()
        .zip(&in_dev)
        .partition(|(_, &d)| d);
    let collect = |v: Vec<(&PairRecord, &bool)>| PairDataset {
        task: dataset.task,
        records: v.into_iter().map(|(r, _)| r.clone()).collect(),
    };
    Ok((collect(train), collect(dev)))
}
