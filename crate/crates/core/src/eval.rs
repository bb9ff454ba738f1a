//! Sampled-candidate ranking metrics, the popularity baseline and scoring
//! cost instrumentation.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{Entity, EvalQuery, InteractionDataset, Task};
use crate::error::{Error, Result};
use crate::model::{ConsensusModel, ForwardOutputs, ModelParams};

pub const DEFAULT_KS: [usize; 2] = [5, 10];

/// 1-based rank of `scores[positive]`. Ties with the positive count half,
/// rounded up.
pub fn rank_position(scores: &[f64], positive: usize) -> usize {
    let p = scores[positive];
    let (mut greater, mut ties) = (0usize, 0usize);
    for (i, &s) in scores.iter().enumerate() {
        if i == positive {
            continue;
        }
        if s > p {
            greater += 1;
        } else if s == p {
            ties += 1;
        }
    }
    1 + greater + ties.div_ceil(2)
}

pub fn hr_at_k(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0
    } else {
        0.0
    }
}

pub fn ndcg_at_k(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    }
}

/// Scores a list of candidate items for one entity.
pub trait Scorer: Sync {
    fn score(&self, entity: Entity, items: &[usize]) -> Result<Vec<f64>>;
}

/// Trained-model scorer over precomputed view outputs.
pub struct ModelScorer<'a> {
    params: &'a ModelParams,
    outputs: &'a ForwardOutputs,
}

impl<'a> ModelScorer<'a> {
    pub fn new(params: &'a ModelParams, outputs: &'a ForwardOutputs) -> Self {
        Self { params, outputs }
    }
}

impl Scorer for ModelScorer<'_> {
    fn score(&self, entity: Entity, items: &[usize]) -> Result<Vec<f64>> {
        self.params.score_candidates(entity, items, self.outputs)
    }
}

/// Scores items by their training interaction count, separately per task.
#[derive(Debug, Clone)]
pub struct PopularityScorer {
    group_counts: Vec<usize>,
    user_counts: Vec<usize>,
}

impl PopularityScorer {
    pub fn new(train: &InteractionDataset) -> Self {
        let count = |lists: &[Vec<usize>]| {
            let mut c = vec![0; train.num_items()];
            for &j in lists.iter().flatten() {
                c[j] += 1;
            }
            c
        };
        Self {
            group_counts: count(train.group_items()),
            user_counts: count(train.user_items()),
        }
    }

    pub fn count(&self, task: Task, item: usize) -> usize {
        match task {
            Task::Group => self.group_counts[item],
            Task::User => self.user_counts[item],
        }
    }
}

impl Scorer for PopularityScorer {
    fn score(&self, entity: Entity, items: &[usize]) -> Result<Vec<f64>> {
        let counts = match entity {
            Entity::Group(_) => &self.group_counts,
            Entity::User(_) => &self.user_counts,
        };
        items
            .iter()
            .map(|&j| {
                counts.get(j).map(|&c| c as f64).ok_or(Error::IndexOutOfRange {
                    what: "item",
                    index: j,
                    len: counts.len(),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: Task,
    pub ks: Vec<usize>,
    pub hr: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub n_queries: usize,
    pub seconds: f64,
    pub propagation_passes: usize,
}

impl MetricsReport {
    pub fn hr_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.hr[i])
    }

    pub fn ndcg_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.ndcg[i])
    }

    /// One record per (metric, K), HR records first.
    pub fn records(&self, model: Option<&str>) -> Vec<MetricRecord> {
        let mut out = Vec::with_capacity(2 * self.ks.len());
        for (metric, values) in [("HR", &self.hr), ("NDCG", &self.ndcg)] {
            for (&k, &value) in self.ks.iter().zip(values) {
                out.push(MetricRecord {
                    task: self.task,
                    metric: metric.into(),
                    k,
                    value,
                    n_queries: self.n_queries,
                    model: model.map(str::to_string),
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub task: Task,
    pub metric: String,
    pub k: usize,
    pub value: f64,
    pub n_queries: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

pub fn write_metrics_jsonl(records: &[MetricRecord], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("metric records serialize");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Ranks of every `task` query's positive among its candidates.
pub fn query_ranks<S: Scorer + ?Sized>(scorer: &S, queries: &[EvalQuery], task: Task) -> Result<Vec<usize>> {
    queries
        .iter()
        .filter(|q| q.entity.task() == task)
        .map(|q| Ok(rank_position(&scorer.score(q.entity, &q.candidates())?, 0)))
        .collect()
}

fn check_ks(ks: &[usize]) -> Result<()> {
    if ks.is_empty() || ks.contains(&0) || ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!("Ks must be non-empty, positive and ascending, got {ks:?}")));
    }
    Ok(())
}

/// Averages HR@K and NDCG@K uniformly over the `task` queries.
/// `propagation_passes` is copied into the report for instrumentation.
pub fn evaluate<S: Scorer + ?Sized>(
    scorer: &S,
    queries: &[EvalQuery],
    ks: &[usize],
    task: Task,
    propagation_passes: usize,
) -> Result<MetricsReport> {
    check_ks(ks)?;
    let start = Instant::now();
    let ranks = query_ranks(scorer, queries, task)?;
    let n = ranks.len();
    let mean = |f: fn(usize, usize) -> f64, k: usize| {
        if n == 0 {
            0.0
        } else {
            ranks.iter().map(|&r| f(r, k)).sum::<f64>() / n as f64
        }
    };
    Ok(MetricsReport {
        task,
        ks: ks.to_vec(),
        hr: ks.iter().map(|&k| mean(hr_at_k, k)).collect(),
        ndcg: ks.iter().map(|&k| mean(ndcg_at_k, k)).collect(),
        n_queries: n,
        seconds: start.elapsed().as_secs_f64(),
        propagation_passes,
    })
}

pub fn popularity_baseline(train: &InteractionDataset, queries: &[EvalQuery], ks: &[usize], task: Task) -> Result<MetricsReport> {
    evaluate(&PopularityScorer::new(train), queries, ks, task, 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringPoint {
    pub n_queries: usize,
    pub seconds: f64,
    pub propagation_passes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyProfile {
    pub forward_seconds: f64,
    pub passes_after_forward: usize,
    pub points: Vec<ScoringPoint>,
    /// Least-squares fit of seconds against query count.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y = a + b x`; returns `(b, a, R²)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if sxx > 0.0 && syy > 0.0 { sxy * sxy / (sxx * syy) } else { 0.0 };
    (slope, my - slope * mx, r2)
}

/// Runs one forward pass, then times scoring of growing query workloads
/// (cycling through `queries` to reach each size). Each size is timed
/// `repeats` times and the fastest run kept.
pub fn efficiency_profile(
    model: &ConsensusModel,
    params: &ModelParams,
    queries: &[EvalQuery],
    sizes: &[usize],
    repeats: usize,
) -> Result<EfficiencyProfile> {
    let start = Instant::now();
    let outputs = model.forward(params)?;
    let forward_seconds = start.elapsed().as_secs_f64();
    let passes_after_forward = model.propagation_passes();
    let scorer = ModelScorer::new(params, &outputs);

    let workloads: Vec<Vec<&EvalQuery>> = sizes
        .iter()
        .map(|&size| queries.iter().cycle().take(if queries.is_empty() { 0 } else { size }).collect())
        .collect();
    let mut best = vec![f64::INFINITY; sizes.len()];
    let mut sink = 0.0;
    // repeats are interleaved across sizes so slow stretches hit every size
    for _ in 0..repeats.max(1) {
        for (w, workload) in workloads.iter().enumerate() {
            let t = Instant::now();
            for q in workload {
                sink += scorer.score(q.entity, &q.candidates())?[0];
            }
            best[w] = best[w].min(t.elapsed().as_secs_f64());
        }
    }
    std::hint::black_box(sink);
    let points: Vec<ScoringPoint> = workloads
        .iter()
        .zip(best)
        .map(|(w, seconds)| ScoringPoint {
            n_queries: w.len(),
            seconds,
            propagation_passes: model.propagation_passes(),
        })
        .collect();
    let xs: Vec<f64> = points.iter().map(|p| p.n_queries as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.seconds).collect();
    let (slope, intercept, r_squared) = linear_fit(&xs, &ys);
    Ok(EfficiencyProfile {
        forward_seconds,
        passes_after_forward,
        points,
        slope,
        intercept,
        r_squared,
    })
}
