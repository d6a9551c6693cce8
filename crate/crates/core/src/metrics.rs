//! Ranking (MAP, MRR) and classification (accuracy, positive-class F1) metrics.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub id: String,
    pub label: bool,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryGroup {
    pub query_id: String,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankedEvalSet {
    pub groups: Vec<QueryGroup>,
}

impl RankedEvalSet {
    /// Groups `(query, candidate, label, score)` rows by query in first-seen order.
    pub fn from_rows<Q, C>(rows: impl IntoIterator<Item = (Q, C, bool, f64)>) -> Self
    where
        Q: Into<String>,
        C: Into<String>,
    {
        let mut groups: Vec<QueryGroup> = Vec::new();
        let mut index = std::collections::HashMap::new();
        for (q, c, label, score) in rows {
            let q = q.into();
            let slot = *index.entry(q.clone()).or_insert_with(|| {
                groups.push(QueryGroup {
                    query_id: q,
                    candidates: Vec::new(),
                });
                groups.len() - 1
            });
            groups[slot].candidates.push(Candidate {
                id: c.into(),
                label,
                score,
            });
        }
        RankedEvalSet { groups }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankingScores {
    pub map: f64,
    pub mrr: f64,
    /// Number of queries that entered the averages.
    pub queries: usize,
}

/// Candidate indices sorted by descending score; ties keep input order.
pub fn rank_order(candidates: &[Candidate]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| candidates[b].score.total_cmp(&candidates[a].score));
    order
}

fn average_precision_and_rr(candidates: &[Candidate]) -> (f64, f64) {
    let mut hits = 0usize;
    let mut precision_sum = 0.0;
    let mut rr = 0.0;
    for (rank0, &i) in rank_order(candidates).iter().enumerate() {
        if candidates[i].label {
            hits += 1;
            let rank = (rank0 + 1) as f64;
            precision_sum += hits as f64 / rank;
            if hits == 1 {
                rr = 1.0 / rank;
            }
        }
    }
    if hits == 0 {
        (0.0, 0.0)
    } else {
        (precision_sum / hits as f64, rr)
    }
}

/// Mean average precision and mean reciprocal rank.
///
/// With `drop_no_positive`, queries without any positive candidate are
/// skipped; otherwise they contribute zero to both means.
pub fn map_mrr(evalset: &RankedEvalSet, drop_no_positive: bool) -> Result<RankingScores> {
    let mut ap_sum = 0.0;
    let mut rr_sum = 0.0;
    let mut queries = 0;
    for g in &evalset.groups {
        if g.candidates.is_empty() {
            return Err(Error::Empty("query group"));
        }
        if g.candidates.iter().any(|c| !c.score.is_finite()) {
            return Err(Error::NonFinite("candidate score"));
        }
        if drop_no_positive && !g.candidates.iter().any(|c| c.label) {
            continue;
        }
        let (ap, rr) = average_precision_and_rr(&g.candidates);
        ap_sum += ap;
        rr_sum += rr;
        queries += 1;
    }
    if queries == 0 {
        return Err(Error::NoEvaluableQueries);
    }
    Ok(RankingScores {
        map: ap_sum / queries as f64,
        mrr: rr_sum / queries as f64,
        queries,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationEval {
    pub pairs: Vec<(bool, f64)>,
    pub threshold: f64,
}

impl ClassificationEval {
    pub fn new(pairs: Vec<(bool, f64)>) -> Self {
        ClassificationEval {
            pairs,
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationScores {
    pub accuracy: f64,
    pub f1: f64,
    pub confusion: Confusion,
}

/// Predictions are `score >= threshold`. F1 is zero when precision + recall is zero.
pub fn accuracy_f1(eval: &ClassificationEval) -> Result<ClassificationScores> {
    if eval.pairs.is_empty() {
        return Err(Error::Empty("classification set"));
    }
    let mut c = Confusion::default();
    for &(label, score) in &eval.pairs {
        match (label, score >= eval.threshold) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    let total = eval.pairs.len() as f64;
    let accuracy = (c.tp + c.tn) as f64 / total;
    let precision = if c.tp + c.fp == 0 {
        0.0
    } else {
        c.tp as f64 / (c.tp + c.fp) as f64
    };
    let recall = if c.tp + c.fn_ == 0 {
        0.0
    } else {
        c.tp as f64 / (c.tp + c.fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(ClassificationScores {
        accuracy,
        f1,
        confusion: c,
    })
}

/// trec_eval `qrels` lines: `qid 0 docid rel`.
pub fn qrels_text(evalset: &RankedEvalSet) -> String {
    let mut out = String::new();
    for g in &evalset.groups {
        for c in &g.candidates {
            let _ = writeln!(out, "{} 0 {} {}", g.query_id, c.id, u8::from(c.label));
        }
    }
    out
}

/// trec_eval results lines: `qid Q0 docid rank score runid`, ranked by our tie-break.
pub fn results_text(evalset: &RankedEvalSet, run_id: &str) -> String {
    let mut out = String::new();
    for g in &evalset.groups {
        for (rank0, &i) in rank_order(&g.candidates).iter().enumerate() {
            let c = &g.candidates[i];
            let _ = writeln!(out, "{} Q0 {} {} {} {}", g.query_id, c.id, rank0 + 1, c.score, run_id);
        }
    }
    out
}

/// Writes `qrels` and `results` files for cross-checking with trec_eval.
pub fn write_trec_files(evalset: &RankedEvalSet, qrels: &Path, results: &Path, run_id: &str) -> Result<()> {
    for (path, text) in [(qrels, qrels_text(evalset)), (results, results_text(evalset, run_id))] {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn group(q: &str, items: &[(bool, f64)]) -> QueryGroup {
        QueryGroup {
            query_id: q.to_string(),
            candidates: items
                .iter()
                .enumerate()
                .map(|(i, &(label, score))| Candidate {
                    id: format!("{q}-{i}"),
                    label,
                    score,
                })
                .collect(),
        }
    }

    #[test]
    fn single_positive_second() {
        let set = RankedEvalSet {
            groups: vec![group("q", &[(false, 0.9), (true, 0.5), (false, 0.1)])],
        };
        let r = map_mrr(&set, true).unwrap();
        assert_eq!((r.map, r.mrr), (0.5, 0.5));
    }

    #[test]
    fn perfect_ranking() {
        let set = RankedEvalSet {
            groups: vec![
                group("a", &[(true, 0.9), (true, 0.8), (false, 0.1)]),
                group("b", &[(false, 0.2), (true, 0.7)]),
            ],
        };
        let r = map_mrr(&set, false).unwrap();
        assert_eq!((r.map, r.mrr), (1.0, 1.0));
    }

    #[test]
    fn no_positive_groups() {
        let set = RankedEvalSet {
            groups: vec![group("a", &[(false, 0.3)]), group("b", &[(true, 0.3), (false, 0.9)])],
        };
        let kept = map_mrr(&set, false).unwrap();
        assert_eq!((kept.map, kept.mrr, kept.queries), (0.25, 0.25, 2));
        let dropped = map_mrr(&set, true).unwrap();
        assert_eq!((dropped.map, dropped.mrr, dropped.queries), (0.5, 0.5, 1));
        let none = RankedEvalSet {
            groups: vec![group("a", &[(false, 0.3)])],
        };
        assert!(matches!(map_mrr(&none, true), Err(Error::NoEvaluableQueries)));
        assert!(matches!(
            map_mrr(&RankedEvalSet::default(), false),
            Err(Error::NoEvaluableQueries)
        ));
    }

    #[test]
    fn ties_follow_input_order() {
        let first = RankedEvalSet {
            groups: vec![group("q", &[(true, 0.5), (false, 0.5)])],
        };
        let second = RankedEvalSet {
            groups: vec![group("q", &[(false, 0.5), (true, 0.5)])],
        };
        assert_eq!(map_mrr(&first, true).unwrap().map, 1.0);
        assert_eq!(map_mrr(&second, true).unwrap().map, 0.5);
    }

    #[test]
    fn classification_examples() {
        let all = ClassificationEval::new(vec![(true, 0.9), (false, 0.1), (true, 0.5)]);
        let r = accuracy_f1(&all).unwrap();
        assert_eq!((r.accuracy, r.f1), (1.0, 1.0));

        let none = ClassificationEval::new(vec![(true, 0.1), (false, 0.2)]);
        let r = accuracy_f1(&none).unwrap();
        assert_eq!((r.accuracy, r.f1), (0.5, 0.0));

        // TP: 0.9, 0.7, 0.55   FN: 0.2   FP: 0.6, 0.8   TN: 0.1, 0.3
        let mixed = ClassificationEval::new(vec![
            (true, 0.9),
            (false, 0.1),
            (true, 0.2),
            (false, 0.6),
            (true, 0.7),
            (false, 0.3),
            (true, 0.55),
            (false, 0.8),
        ]);
        let r = accuracy_f1(&mixed).unwrap();
        assert_eq!(r.confusion, Confusion { tp: 3, fp: 2, tn: 2, fn_: 1 });
        let (p, rc) = (3.0 / 5.0, 3.0 / 4.0);
        assert!((r.accuracy - 5.0 / 8.0).abs() < 1e-15);
        assert!((r.f1 - 2.0 * p * rc / (p + rc)).abs() < 1e-15);

        assert!(accuracy_f1(&ClassificationEval::new(vec![])).is_err());
    }

    #[test]
    fn trec_lines() {
        let set = RankedEvalSet::from_rows([("q1", "d1", false, 0.2), ("q1", "d2", true, 0.7)]);
        assert_eq!(qrels_text(&set), "q1 0 d1 0\nq1 0 d2 1\n");
        assert_eq!(results_text(&set, "run"), "q1 Q0 d2 1 0.7 run\nq1 Q0 d1 2 0.2 run\n");
    }

    fn groups_strategy() -> impl Strategy<Value = Vec<Vec<(bool, f64)>>> {
        prop::collection::vec(
            prop::collection::vec((any::<bool>(), -5.0f64..5.0), 1..8),
            1..6,
        )
    }

    proptest! {
        #[test]
        fn monotone_transform_invariance(groups in groups_strategy()) {
            let set = RankedEvalSet { groups: groups.iter().enumerate().map(|(i, g)| group(&i.to_string(), g)).collect() };
            let mut moved = set.clone();
            for g in &mut moved.groups {
                for c in &mut g.candidates {
                    c.score = (c.score * 0.5).exp() + 3.0;
                }
            }
            let a = map_mrr(&set, false).unwrap();
            let b = map_mrr(&moved, false).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!((0.0..=1.0).contains(&a.map) && (0.0..=1.0).contains(&a.mrr));
        }

        #[test]
        fn permuting_distinct_scores(groups in groups_strategy(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let set = RankedEvalSet { groups: groups.iter().enumerate().map(|(i, g)| {
                // make scores distinct
                let g: Vec<_> = g.iter().enumerate().map(|(j, &(l, s))| (l, s + j as f64 * 1e-6)).collect();
                group(&i.to_string(), &g)
            }).collect() };
            let mut shuffled = set.clone();
            for g in &mut shuffled.groups {
                g.candidates.shuffle(&mut rng);
            }
            let a = map_mrr(&set, false).unwrap();
            let b = map_mrr(&shuffled, false).unwrap();
            prop_assert!((a.map - b.map).abs() < 1e-12 && (a.mrr - b.mrr).abs() < 1e-12);
        }
    }
}
