//! Ablation sweeps over matching functions, decomposition operations and filter groups.
//!
//! A sweep trains one model per `(variant, repetition)` with seeds
//! `base_seed + rep`, scores it on a dev set and collects the chosen metric
//! into an [`AblationTable`]. Every variant config is validated before any
//! training starts.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::composer::{win_groups, FilterGroup};
use crate::data::{PairDataset, Task};
use crate::decomposer::DecompStrategy;
use crate::embeddings::EmbeddingStore;
use crate::error::{Error, Result};
use crate::eval::{evaluate, Metrics};
use crate::matcher::MatchStrategy;
use crate::model::{train, Model, ModelConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Matching,
    Decomposition,
    Filters,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Matching => "matching",
            Axis::Decomposition => "decomposition",
            Axis::Filters => "filters",
        })
    }
}

impl FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matching" | "match" => Ok(Axis::Matching),
            "decomposition" | "decomp" => Ok(Axis::Decomposition),
            "filters" => Ok(Axis::Filters),
            other => Err(Error::Config(format!("unknown ablation axis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Map,
    Mrr,
    Acc,
    F1,
}

impl MetricKind {
    fn task(self) -> Task {
        match self {
            MetricKind::Map | MetricKind::Mrr => Task::Ranking,
            MetricKind::Acc | MetricKind::F1 => Task::Classification,
        }
    }

    fn pick(self, m: &Metrics) -> Result<f64> {
        match (self, m) {
            (MetricKind::Map, Metrics::Ranking(r)) => Ok(r.map),
            (MetricKind::Mrr, Metrics::Ranking(r)) => Ok(r.mrr),
            (MetricKind::Acc, Metrics::Classification(c)) => Ok(c.accuracy),
            (MetricKind::F1, Metrics::Classification(c)) => Ok(c.f1),
            _ => Err(Error::Config(format!("metric {self} does not fit the dataset task"))),
        }
    }

    /// MAP for ranking, accuracy for classification.
    pub fn default_for(task: Task) -> MetricKind {
        match task {
            Task::Ranking => MetricKind::Map,
            Task::Classification => MetricKind::Acc,
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricKind::Map => "map",
            MetricKind::Mrr => "mrr",
            MetricKind::Acc => "acc",
            MetricKind::F1 => "f1",
        })
    }
}

impl FromStr for MetricKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "map" => Ok(MetricKind::Map),
            "mrr" => Ok(MetricKind::Mrr),
            "acc" | "accuracy" => Ok(MetricKind::Acc),
            "f1" => Ok(MetricKind::F1),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

/// Fields a variant overrides on top of the base config.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfigDelta {
    pub match_strategy: Option<MatchStrategy>,
    pub decomp: Option<DecompStrategy>,
    pub filters: Option<Vec<FilterGroup>>,
}

impl ConfigDelta {
    pub fn apply(&self, config: &mut ModelConfig) {
        if let Some(m) = self.match_strategy {
            config.match_strategy = m;
        }
        if let Some(d) = self.decomp {
            config.decomp = d;
        }
        if let Some(f) = &self.filters {
            config.filters = f.clone();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub name: String,
    pub delta: ConfigDelta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationSpec {
    pub axis: Axis,
    /// Applied to the base config before each variant's own delta.
    pub fixed: ConfigDelta,
    pub variants: Vec<Variant>,
    pub metric: MetricKind,
    pub repetitions: usize,
    pub base_seed: u64,
}

impl AblationSpec {
    /// max, global, local-1..4 with linear decomposition.
    pub fn matching(metric: MetricKind) -> Self {
        let strategies = [
            MatchStrategy::Max,
            MatchStrategy::Global,
            MatchStrategy::Local { window: 1 },
            MatchStrategy::Local { window: 2 },
            MatchStrategy::Local { window: 3 },
            MatchStrategy::Local { window: 4 },
        ];
        AblationSpec {
            axis: Axis::Matching,
            fixed: ConfigDelta {
                decomp: Some(DecompStrategy::Linear),
                ..ConfigDelta::default()
            },
            variants: strategies
                .into_iter()
                .map(|m| Variant {
                    name: m.to_string(),
                    delta: ConfigDelta {
                        match_strategy: Some(m),
                        ..ConfigDelta::default()
                    },
                })
                .collect(),
            metric,
            repetitions: 3,
            base_seed: 0,
        }
    }

    /// rigid (with the max matcher it requires), linear, orthogonal; local-3 otherwise.
    pub fn decomposition(metric: MetricKind) -> Self {
        let variant = |d: DecompStrategy| Variant {
            name: d.to_string(),
            delta: ConfigDelta {
                decomp: Some(d),
                match_strategy: (d == DecompStrategy::Rigid).then_some(MatchStrategy::Max),
                ..ConfigDelta::default()
            },
        };
        AblationSpec {
            axis: Axis::Decomposition,
            fixed: ConfigDelta {
                match_strategy: Some(MatchStrategy::Local { window: 3 }),
                ..ConfigDelta::default()
            },
            variants: [DecompStrategy::Rigid, DecompStrategy::Linear, DecompStrategy::Orthogonal]
                .into_iter()
                .map(variant)
                .collect(),
            metric,
            repetitions: 3,
            base_seed: 0,
        }
    }

    /// win-1..win-5 with `per_type` filters per window, local-3 + orthogonal.
    pub fn filters(per_type: usize, metric: MetricKind) -> Self {
        AblationSpec {
            axis: Axis::Filters,
            fixed: ConfigDelta {
                match_strategy: Some(MatchStrategy::Local { window: 3 }),
                decomp: Some(DecompStrategy::Orthogonal),
                ..ConfigDelta::default()
            },
            variants: (1..=5)
                .map(|k| Variant {
                    name: format!("win-{k}"),
                    delta: ConfigDelta {
                        filters: Some(win_groups(k, per_type)),
                        ..ConfigDelta::default()
                    },
                })
                .collect(),
            metric,
            repetitions: 3,
            base_seed: 0,
        }
    }

    pub fn standard(axis: Axis, per_type: usize, metric: MetricKind) -> Self {
        match axis {
            Axis::Matching => AblationSpec::matching(metric),
            Axis::Decomposition => AblationSpec::decomposition(metric),
            Axis::Filters => AblationSpec::filters(per_type, metric),
        }
    }

    /// The config of every variant, validated.
    pub fn variant_configs(&self, base: &ModelConfig) -> Result<Vec<ModelConfig>> {
        if self.variants.is_empty() {
            return Err(Error::Config("ablation has no variants".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("ablation repetitions must be >= 1".into()));
        }
        self.variants
            .iter()
            .map(|v| {
                let mut cfg = base.clone();
                self.fixed.apply(&mut cfg);
                v.delta.apply(&mut cfg);
                cfg.validate()
                    .map_err(|e| Error::Config(format!("variant {}: {e}", v.name)))?;
                Ok(cfg)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub rep: usize,
    pub seed: u64,
    pub metric: MetricKind,
    pub value: f64,
    pub wall_ms: u128,
    pub feature_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub variant: String,
    pub mean: f64,
    pub sd: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantManifest {
    pub name: String,
    pub feature_len: usize,
    pub config: BTreeMap<String, String>,
}

/// Everything needed to rerun a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub axis: Axis,
    pub metric: MetricKind,
    pub repetitions: usize,
    pub seeds: Vec<u64>,
    pub variants: Vec<VariantManifest>,
    pub train_sha256: String,
    pub dev_sha256: String,
    pub embedding_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    pub manifest: Manifest,
}

fn dataset_hash(ds: &PairDataset) -> String {
    Sha256::digest(ds.to_tsv().as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

impl AblationTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,rep,seed,metric,value,wall_ms,feature_len\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.variant, r.rep, r.seed, r.metric, r.value, r.wall_ms, r.feature_len
            );
        }
        out
    }

    /// Mean and sample standard deviation per variant, in variant order.
    pub fn summary(&self) -> Vec<SummaryRow> {
        self.manifest
            .variants
            .iter()
            .map(|v| {
                let values: Vec<f64> = self.rows.iter().filter(|r| r.variant == v.name).map(|r| r.value).collect();
                let (mean, sd) = mean_sd(&values);
                SummaryRow {
                    variant: v.name.clone(),
                    mean,
                    sd,
                    runs: values.len(),
                }
            })
            .collect()
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("variant,mean,sd,runs\n");
        for s in self.summary() {
            let _ = writeln!(out, "{},{:.6},{:.6},{}", s.variant, s.mean, s.sd, s.runs);
        }
        out
    }

    /// `x,y,series` rows: x is the variant position, one series per metric.
    pub fn plot_data(&self) -> String {
        let mut out = String::from("x,y,series\n");
        for (x, s) in self.summary().iter().enumerate() {
            let _ = writeln!(out, "{x},{},{}", s.mean, self.manifest.metric);
        }
        out
    }

    /// True when both tables hold the same results, ignoring wall time.
    pub fn same_results(&self, other: &AblationTable) -> bool {
        self.rows.len() == other.rows.len()
            && self.rows.iter().zip(&other.rows).all(|(a, b)| {
                a.variant == b.variant
                    && a.rep == b.rep
                    && a.seed == b.seed
                    && a.metric == b.metric
                    && a.value.to_bits() == b.value.to_bits()
                    && a.feature_len == b.feature_len
            })
            && self.manifest == other.manifest
    }

    /// Writes `<axis>_results.csv`, `<axis>_summary.csv`, `<axis>_plot.csv` and `<axis>_manifest.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let axis = self.manifest.axis;
        let manifest = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| Error::Config(format!("manifest serialization: {e}")))?;
        for (suffix, text) in [
            ("results.csv", self.to_csv()),
            ("summary.csv", self.summary_csv()),
            ("plot.csv", self.plot_data()),
            ("manifest.json", manifest),
        ] {
            let path = dir.join(format!("{axis}_{suffix}"));
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Trains and scores every `(variant, repetition)`; jobs run in parallel.
pub fn run_ablation(
    spec: &AblationSpec,
    base: &ModelConfig,
    train_set: &PairDataset,
    dev_set: &PairDataset,
    store: &EmbeddingStore,
    drop_no_positive: bool,
) -> Result<AblationTable> {
    let configs = spec.variant_configs(base)?;
    if spec.metric.task() != dev_set.task {
        return Err(Error::Config(format!(
            "metric {} does not fit a {} dataset",
            spec.metric, dev_set.task
        )));
    }
    if train_set.is_empty() || dev_set.is_empty() {
        return Err(Error::Empty("ablation dataset"));
    }
    if store.dim() != base.embedding_dim {
        return Err(Error::DimensionMismatch {
            expected: base.embedding_dim,
            actual: store.dim(),
        });
    }

    let seeds: Vec<u64> = (0..spec.repetitions as u64).map(|r| spec.base_seed + r).collect();
    let jobs: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|v| (0..spec.repetitions).map(move |r| (v, r)))
        .collect();
    let data = train_set.instances();

    let rows = jobs
        .par_iter()
        .map(|&(v, rep)| {
            let start = Instant::now();
            let mut cfg = configs[v].clone();
            cfg.seed = seeds[rep];
            let mut model = Model::new(cfg)?;
            train(&mut model, store, &data)?;
            let eval = evaluate(&model, store, dev_set, drop_no_positive)?;
            let value = spec.metric.pick(&eval.metrics)?;
            log::info!("ablation {} rep={rep} {}={value:.4}", spec.variants[v].name, spec.metric);
            Ok(AblationRow {
                variant: spec.variants[v].name.clone(),
                rep,
                seed: seeds[rep],
                metric: spec.metric,
                value,
                wall_ms: start.elapsed().as_millis(),
                feature_len: model.feature_len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = Manifest {
        axis: spec.axis,
        metric: spec.metric,
        repetitions: spec.repetitions,
        seeds,
        variants: spec
            .variants
            .iter()
            .zip(&configs)
            .map(|(v, cfg)| VariantManifest {
                name: v.name.clone(),
                feature_len: cfg.feature_len(),
                config: cfg
                    .to_kv()
                    .into_iter()
                    .filter(|(k, _)| *k != "seed")
                    .map(|(k, val)| (k.to_string(), val))
                    .collect(),
            })
            .collect(),
        train_sha256: dataset_hash(train_set),
        dev_sha256: dataset_hash(dev_set),
        embedding_fingerprint: store.fingerprint().to_string(),
    };
    Ok(AblationTable { rows, manifest })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{random_store, ranking_fixture};

    #[test]
    fn standard_variant_sets() {
        let names = |s: &AblationSpec| s.variants.iter().map(|v| v.name.clone()).collect::<Vec<_>>();
        assert_eq!(
            names(&AblationSpec::matching(MetricKind::Map)),
            ["max", "global", "local-1", "local-2", "local-3", "local-4"]
        );
        assert_eq!(
            names(&AblationSpec::decomposition(MetricKind::Map)),
            ["rigid", "linear", "orthogonal"]
        );
        assert_eq!(
            names(&AblationSpec::filters(500, MetricKind::Map)),
            ["win-1", "win-2", "win-3", "win-4", "win-5"]
        );
    }

    #[test]
    fn win3_feature_len_is_1500() {
        let spec = AblationSpec::filters(500, MetricKind::Map);
        let cfgs = spec.variant_configs(&ModelConfig::default()).unwrap();
        assert_eq!(cfgs[2].feature_len(), 1500);
        assert_eq!(cfgs[4].feature_len(), 2500);
    }

    #[test]
    fn decomposition_sweep_validates() {
        let cfgs = AblationSpec::decomposition(MetricKind::Map)
            .variant_configs(&ModelConfig::default())
            .unwrap();
        assert_eq!(cfgs[0].match_strategy, MatchStrategy::Max);
        assert_eq!(cfgs[1].match_strategy, MatchStrategy::Local { window: 3 });
    }

    #[test]
    fn invalid_variant_aborts_before_training() {
        let mut spec = AblationSpec::matching(MetricKind::Map);
        spec.fixed.decomp = Some(DecompStrategy::Rigid);
        let store = random_store(10, 3, 0).unwrap();
        let ds = ranking_fixture(10, 2, 1, 2, 0);
        let base = ModelConfig {
            embedding_dim: 3,
            ..ModelConfig::default()
        };
        // rigid is invalid for every non-max variant
        let err = run_ablation(&spec, &base, &ds, &ds, &store, true).unwrap_err();
        assert!(err.to_string().contains("variant global"), "{err}");

        let mut empty = AblationSpec::matching(MetricKind::Map);
        empty.repetitions = 0;
        assert!(empty.variant_configs(&base).is_err());
        let wrong_metric = AblationSpec::matching(MetricKind::Acc);
        assert!(run_ablation(&wrong_metric, &base, &ds, &ds, &store, true).is_err());
    }

    #[test]
    fn summary_statistics() {
        assert_eq!(mean_sd(&[1.0, 2.0, 3.0]), (2.0, 1.0));
        assert_eq!(mean_sd(&[4.0]), (4.0, 0.0));
    }
}
