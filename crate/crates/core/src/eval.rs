//! Scoring a dataset with a model and reducing the scores to task metrics.

use rayon::prelude::*;

use crate::data::{PairDataset, Task};
use crate::embeddings::EmbeddingStore;
use crate::error::Result;
use crate::metrics::{accuracy_f1, map_mrr, ClassificationEval, ClassificationScores, RankedEvalSet, RankingScores};
use crate::model::Model;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metrics {
    Ranking(RankingScores),
    Classification(ClassificationScores),
}

impl Metrics {
    /// MAP for ranking, accuracy for classification.
    pub fn primary(&self) -> f64 {
        match self {
            Metrics::Ranking(r) => r.map,
            Metrics::Classification(c) => c.accuracy,
        }
    }

    /// `MAP 0.1234 MRR 0.5678` or `Acc 0.1234 F1 0.5678`.
    pub fn summary(&self) -> String {
        match self {
            Metrics::Ranking(r) => format!("MAP {:.4} MRR {:.4}", r.map, r.mrr),
            Metrics::Classification(c) => format!("Acc {:.4} F1 {:.4}", c.accuracy, c.f1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub scores: Vec<f64>,
    pub metrics: Metrics,
}

pub fn score_dataset(model: &Model, store: &EmbeddingStore, dataset: &PairDataset) -> Result<Vec<f64>> {
    dataset
        .records
        .par_iter()
        .map(|r| model.score(store, &r.instance.s, &r.instance.t))
        .collect()
}

/// Candidates are identified by their record index in the dataset.
pub fn ranked_set(dataset: &PairDataset, scores: &[f64]) -> RankedEvalSet {
    RankedEvalSet::from_rows(dataset.records.iter().zip(scores).enumerate().map(|(i, (r, &s))| {
        (
            r.group.clone().unwrap_or_default(),
            i.to_string(),
            r.instance.label,
            s,
        )
    }))
}

pub fn metrics_for(dataset: &PairDataset, scores: &[f64], drop_no_positive: bool) -> Result<Metrics> {
    Ok(match dataset.task {
        Task::Ranking => Metrics::Ranking(map_mrr(&ranked_set(dataset, scores), drop_no_positive)?),
        Task::Classification => {
            let pairs = dataset.records.iter().map(|r| r.instance.label).zip(scores.iter().copied()).collect();
            Metrics::Classification(accuracy_f1(&ClassificationEval::new(pairs))?)
        }
    })
}

pub fn evaluate(model: &Model, store: &EmbeddingStore, dataset: &PairDataset, drop_no_positive: bool) -> Result<Evaluation> {
    let scores = score_dataset(model, store, dataset)?;
    let metrics = metrics_for(dataset, &scores, drop_no_positive)?;
    Ok(Evaluation { scores, metrics })
}
