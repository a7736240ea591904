//! Key-value store of interface embeddings with brute-force inner-product
//! search.

mod format;

use std::collections::{HashMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::molgraph::DomainTag;
use crate::{Error, Result};

pub use format::RADB_VERSION;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatabaseEntry {
    pub id: String,
    /// Site embedding.
    pub key: Vec<f32>,
    /// Binder embedding.
    pub value: Vec<f32>,
    pub domain_tag: DomainTag,
}

impl DatabaseEntry {
    pub fn new(id: impl Into<String>, key: &[f64], value: &[f64], domain_tag: DomainTag) -> Self {
        Self {
            id: id.into(),
            key: key.iter().map(|&x| x as f32).collect(),
            value: value.iter().map(|&x| x as f32).collect(),
            domain_tag,
        }
    }

    pub fn value_f64(&self) -> Vec<f64> {
        self.value.iter().map(|&x| x as f64).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Database {
    pub dim: usize,
    pub version: u32,
    entries: Vec<DatabaseEntry>,
    index: HashMap<String, usize>,
}

/// Which stored vector a query key is scored against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scoring {
    /// Query site key against stored site keys.
    #[default]
    KeyKey,
    /// Query site key against stored binder values.
    KeyValue,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum QueryMode {
    #[serde(rename = "topN")]
    TopN,
    #[serde(rename = "reverseN")]
    ReverseN,
    #[serde(rename = "random")]
    Random,
}

impl std::str::FromStr for QueryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "topN" | "top" => Ok(QueryMode::TopN),
            "reverseN" | "reverse" => Ok(QueryMode::ReverseN),
            "random" => Ok(QueryMode::Random),
            other => Err(Error::InvalidArgument(format!("unknown retrieval mode {other}"))),
        }
    }
}

impl std::str::FromStr for Scoring {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "key_key" => Ok(Scoring::KeyKey),
            "key_value" => Ok(Scoring::KeyValue),
            other => Err(Error::InvalidArgument(format!("unknown scoring {other}"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub entry_ids: Vec<String>,
    pub scores: Vec<f64>,
    /// Value vectors of the retrieved entries, in result order.
    #[serde(skip)]
    pub prompt: Vec<Vec<f64>>,
}

impl RetrievalResult {
    pub fn len(&self) -> usize {
        self.entry_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entry_ids.is_empty()
    }
}

fn dot(a: &[f64], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, &y)| x * y as f64).sum()
}

impl Database {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            version: RADB_VERSION,
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn from_entries(dim: usize, entries: impl IntoIterator<Item = DatabaseEntry>) -> Result<Self> {
        let mut db = Self::new(dim);
        for e in entries {
            db.push(e)?;
        }
        Ok(db)
    }

    pub fn push(&mut self, entry: DatabaseEntry) -> Result<()> {
        for v in [&entry.key, &entry.value] {
            if v.len() != self.dim {
                return Err(Error::DimMismatch {
                    expected: self.dim,
                    got: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument(format!("entry {} has non-finite values", entry.id)));
            }
        }
        if self.index.contains_key(&entry.id) {
            return Err(Error::InvalidArgument(format!("duplicate entry id {}", entry.id)));
        }
        self.index.insert(entry.id.clone(), self.entries.len());
        self.entries.push(entry);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[DatabaseEntry] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Option<&DatabaseEntry> {
        self.index.get(id).map(|&i| &self.entries[i])
    }

    fn check_dim(&self, key: &[f64]) -> Result<()> {
        if key.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: key.len(),
            });
        }
        Ok(())
    }

    /// Non-excluded entries sorted by descending score, ties by ascending id.
    pub fn ranked(&self, key: &[f64], exclude: &HashSet<String>, scoring: Scoring) -> Result<Vec<(f64, usize)>> {
        self.check_dim(key)?;
        let mut scored: Vec<(f64, usize)> = self
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| !exclude.contains(&e.id))
            .map(|(i, e)| {
                let target = match scoring {
                    Scoring::KeyKey => &e.key,
                    Scoring::KeyValue => &e.value,
                };
                (dot(key, target), i)
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| self.entries[a.1].id.cmp(&self.entries[b.1].id)));
        Ok(scored)
    }

    fn result(&self, picked: impl IntoIterator<Item = (f64, usize)>) -> RetrievalResult {
        let mut r = RetrievalResult::default();
        for (s, i) in picked {
            r.entry_ids.push(self.entries[i].id.clone());
            r.scores.push(s);
            r.prompt.push(self.entries[i].value_f64());
        }
        r
    }
}

/// Top-`k` entries by inner product with the stored keys.
pub fn query_topk(db: &Database, key: &[f64], k: usize, exclude: &HashSet<String>) -> Result<RetrievalResult> {
    query_topk_with(db, key, k, exclude, Scoring::KeyKey)
}

pub fn query_topk_with(db: &Database, key: &[f64], k: usize, exclude: &HashSet<String>, scoring: Scoring) -> Result<RetrievalResult> {
    let ranked = db.ranked(key, exclude, scoring)?;
    Ok(db.result(ranked.into_iter().take(k)))
}

/// Every non-excluded entry scoring strictly above `threshold`.
pub fn query_adaptive(db: &Database, key: &[f64], threshold: f64, exclude: &HashSet<String>) -> Result<RetrievalResult> {
    query_adaptive_with(db, key, threshold, exclude, Scoring::KeyKey)
}

pub fn query_adaptive_with(
    db: &Database,
    key: &[f64],
    threshold: f64,
    exclude: &HashSet<String>,
    scoring: Scoring,
) -> Result<RetrievalResult> {
    let ranked = db.ranked(key, exclude, scoring)?;
    Ok(db.result(ranked.into_iter().take_while(|(s, _)| *s > threshold)))
}

/// Top-n, bottom-n (lowest similarity first) or n uniformly random entries.
pub fn query_mode<R: Rng + ?Sized>(
    db: &Database,
    key: &[f64],
    mode: QueryMode,
    n: usize,
    exclude: &HashSet<String>,
    rng: &mut R,
) -> Result<RetrievalResult> {
    query_mode_with(db, key, mode, n, exclude, rng, Scoring::KeyKey)
}

pub fn query_mode_with<R: Rng + ?Sized>(
    db: &Database,
    key: &[f64],
    mode: QueryMode,
    n: usize,
    exclude: &HashSet<String>,
    rng: &mut R,
    scoring: Scoring,
) -> Result<RetrievalResult> {
    let ranked = db.ranked(key, exclude, scoring)?;
    if n > ranked.len() {
        return Err(Error::InvalidArgument(format!(
            "requested {n} entries but only {} are available",
            ranked.len()
        )));
    }
    Ok(match mode {
        QueryMode::TopN => db.result(ranked.into_iter().take(n)),
        QueryMode::ReverseN => db.result(ranked.into_iter().rev().take(n)),
        QueryMode::Random => {
            let picked = rand::seq::index::sample(rng, ranked.len(), n);
            db.result(picked.into_iter().map(|i| ranked[i]))
        }
    })
}

/// `ceil(percent% of n)` robust to floating-point noise in the product.
pub fn cutoff_rank(percent: f64, n: usize) -> usize {
    let x = percent * n as f64 / 100.0;
    (x - 1e-9).ceil().max(0.0) as usize
}

/// Recall (percent of queries) whose true entry ranks within the top
/// `percent%` of the whole database, scoring query keys against stored
/// binder values. Nothing is excluded.
pub fn rc_at(db: &Database, queries: &[(Vec<f64>, String)], percents: &[f64]) -> Result<Vec<f64>> {
    rc_at_with(db, queries, percents, Scoring::KeyValue)
}

pub fn rc_at_with(db: &Database, queries: &[(Vec<f64>, String)], percents: &[f64], scoring: Scoring) -> Result<Vec<f64>> {
    let none = HashSet::new();
    let mut ranks = Vec::with_capacity(queries.len());
    for (key, truth) in queries {
        let &truth_idx = db.index.get(truth).ok_or_else(|| Error::UnknownId(truth.clone()))?;
        let ranked = db.ranked(key, &none, scoring)?;
        ranks.push(ranked.iter().position(|&(_, i)| i == truth_idx).unwrap() + 1);
    }
    Ok(percents
        .iter()
        .map(|&p| {
            let cut = cutoff_rank(p, db.len());
            if queries.is_empty() {
                return f64::NAN;
            }
            100.0 * ranks.iter().filter(|&&r| r <= cut).count() as f64 / queries.len() as f64
        })
        .collect())
}

#[cfg(test)]
mod tests;
