//! Benchmark metrics: MAE and exact-accuracy against ground truth, and the
//! per-query ranking statistics (tie-aware Spearman rho, Kendall tau-b,
//! precision at top-k) computed over each query graph's partner set.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::denoiser::DenoiserParams;
use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};
use crate::graph::GraphPair;
use crate::rng::derive_seed;
use crate::solver::{diffged_solve, SolveConfig, SolveResult};

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub mae: f64,
    pub accuracy: f64,
    #[serde(rename = "rho")]
    pub spearman_rho: Option<f64>,
    #[serde(rename = "tau")]
    pub kendall_tau: Option<f64>,
    #[serde(rename = "p10")]
    pub p_at_10: Option<f64>,
    #[serde(rename = "p20")]
    pub p_at_20: Option<f64>,
    #[serde(rename = "time_s")]
    pub mean_solve_seconds: f64,
}

/// One solved pair together with everything the metrics need.
#[derive(Debug, Clone)]
pub struct EvaluatedPair {
    pub index: usize,
    pub ground_truth: u32,
    pub result: SolveResult,
    pub seconds: f64,
    /// Structural key of the query graph (the pair's original first side);
    /// pairs sharing a query form one ranking group.
    pub query_key: String,
}

/// Solves every pair (deterministic per-pair seeds derived from the config
/// seed) and returns the raw per-pair outcomes.
pub fn evaluate_detailed(
    pairs: &[GraphPair],
    params: &DenoiserParams,
    schedule: &NoiseSchedule,
    config: &SolveConfig,
) -> Result<Vec<EvaluatedPair>> {
    for (i, pair) in pairs.iter().enumerate() {
        if pair.ground_truth_ged.is_none() {
            return Err(Error::MissingGroundTruth(format!(
                "pair {i} carries no ground-truth GED"
            )));
        }
    }
    pairs
        .par_iter()
        .enumerate()
        .map(|(index, pair)| -> Result<EvaluatedPair> {
            let pair_config = SolveConfig { seed: derive_seed(config.seed, index as u64), ..*config };
            let start = Instant::now();
            let result = diffged_solve(pair, params, schedule, &pair_config)?;
            let seconds = start.elapsed().as_secs_f64();
            Ok(EvaluatedPair {
                index,
                ground_truth: pair.ground_truth_ged.expect("checked above"),
                result,
                seconds,
                query_key: query_key(pair),
            })
        })
        .collect()
}

/// Aggregate metrics over solved pairs (see [`compute_metrics`]).
pub fn evaluate(
    pairs: &[GraphPair],
    params: &DenoiserParams,
    schedule: &NoiseSchedule,
    config: &SolveConfig,
) -> Result<MetricsReport> {
    let detailed = evaluate_detailed(pairs, params, schedule, config)?;
    let outcomes: Vec<PairOutcome> = detailed.iter().map(PairOutcome::from).collect();
    Ok(compute_metrics(&outcomes))
}

fn query_key(pair: &GraphPair) -> String {
    let g = if pair.swapped { &pair.g_prime } else { &pair.g };
    format!("{}|{:?}|{:?}", g.node_count(), g.edges(), g.labels())
}

/// The minimum a metric computation needs to know about one solved pair.
#[derive(Debug, Clone)]
pub struct PairOutcome {
    pub ground_truth: f64,
    pub predicted: f64,
    pub seconds: f64,
    pub query_key: String,
}

impl From<&EvaluatedPair> for PairOutcome {
    fn from(e: &EvaluatedPair) -> Self {
        Self {
            ground_truth: e.ground_truth as f64,
            predicted: e.result.predicted_ged as f64,
            seconds: e.seconds,
            query_key: e.query_key.clone(),
        }
    }
}

/// MAE and accuracy over all outcomes; ranking metrics averaged over query
/// groups with at least two partners (`None` when no such group exists).
pub fn compute_metrics(outcomes: &[PairOutcome]) -> MetricsReport {
    assert!(!outcomes.is_empty(), "no outcomes to aggregate");
    let n = outcomes.len() as f64;
    let mae = outcomes.iter().map(|o| (o.predicted - o.ground_truth).abs()).sum::<f64>() / n;
    let accuracy = outcomes.iter().filter(|o| o.predicted == o.ground_truth).count() as f64 / n;
    let mean_solve_seconds = outcomes.iter().map(|o| o.seconds).sum::<f64>() / n;

    let mut groups: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for o in outcomes {
        groups.entry(&o.query_key).or_default().push((o.ground_truth, o.predicted));
    }
    let mut rho_sum = 0.0;
    let mut tau_sum = 0.0;
    let mut p10_sum = 0.0;
    let mut p20_sum = 0.0;
    let mut group_count = 0usize;
    for members in groups.values() {
        if members.len() < 2 {
            continue;
        }
        let gt: Vec<f64> = members.iter().map(|&(g, _)| g).collect();
        let pred: Vec<f64> = members.iter().map(|&(_, p)| p).collect();
        rho_sum += spearman_rho(&gt, &pred);
        tau_sum += kendall_tau_b(&gt, &pred);
        p10_sum += precision_at_k(&gt, &pred, 10);
        p20_sum += precision_at_k(&gt, &pred, 20);
        group_count += 1;
    }
    let avg = |s: f64| if group_count > 0 { Some(s / group_count as f64) } else { None };
    MetricsReport {
        mae,
        accuracy,
        spearman_rho: avg(rho_sum),
        kendall_tau: avg(tau_sum),
        p_at_10: avg(p10_sum),
        p_at_20: avg(p20_sum),
        mean_solve_seconds,
    }
}

/// Average ranks scaled by two, which makes them exact integers even with
/// midpoint ties.
fn double_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("no NaN scores").then(a.cmp(&b)));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // average of positions i..=j (1-based), doubled: (i + j + 2)
        let doubled = (i + j + 2) as f64;
        for &idx in &order[i..=j] {
            ranks[idx] = doubled;
        }
        i = j + 1;
    }
    ranks
}

/// Tie-aware Spearman rank correlation (average ranks, Pearson on ranks).
/// All intermediate sums are exact integers for realistic group sizes, so
/// perfect and reversed rankings return exactly +-1.
pub fn spearman_rho(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    assert!(n >= 2, "need at least two observations");
    let ra = double_ranks(a);
    let rb = double_ranks(b);
    // centered doubled ranks: mean of doubled ranks is exactly n + 1
    let center = (n + 1) as f64;
    let mut s_ab = 0.0;
    let mut s_aa = 0.0;
    let mut s_bb = 0.0;
    for i in 0..n {
        let x = ra[i] - center;
        let y = rb[i] - center;
        s_ab += x * y;
        s_aa += x * x;
        s_bb += y * y;
    }
    if s_aa == 0.0 || s_bb == 0.0 {
        // a constant ranking carries no order information
        return 0.0;
    }
    s_ab / (s_aa * s_bb).sqrt()
}

/// Kendall tau-b by direct concordant/discordant counting with tie
/// corrections.
pub fn kendall_tau_b(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    assert!(n >= 2, "need at least two observations");
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    let mut ties_a = 0i64; // tied in a only
    let mut ties_b = 0i64; // tied in b only
    for i in 0..n {
        for j in (i + 1)..n {
            let da = a[i] - a[j];
            let db = b[i] - b[j];
            if da == 0.0 && db == 0.0 {
                continue;
            } else if da == 0.0 {
                ties_a += 1;
            } else if db == 0.0 {
                ties_b += 1;
            } else if (da > 0.0) == (db > 0.0) {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    // pairs not tied in a: those decided (C + D) plus those tied only in b
    let untied_a = ties_b + concordant + discordant;
    let untied_b = ties_a + concordant + discordant;
    let denom = (untied_a as f64) * (untied_b as f64);
    if denom == 0.0 {
        return 0.0;
    }
    debug_assert!(untied_a <= n0 && untied_b <= n0);
    (concordant - discordant) as f64 / denom.sqrt()
}

/// Overlap ratio of the top-`k` most similar partners (smallest scores) under
/// both orderings, with index tie-breaking; `k` is capped at the group size.
pub fn precision_at_k(gt: &[f64], pred: &[f64], k: usize) -> f64 {
    assert_eq!(gt.len(), pred.len());
    let n = gt.len();
    let k_eff = k.min(n);
    if k_eff == 0 {
        return 1.0;
    }
    let top = |scores: &[f64]| -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&x, &y| {
            scores[x].partial_cmp(&scores[y]).expect("no NaN scores").then(x.cmp(&y))
        });
        order.truncate(k_eff);
        order
    };
    let gt_top = top(gt);
    let pred_top = top(pred);
    let gt_set: std::collections::HashSet<usize> = gt_top.into_iter().collect();
    let overlap = pred_top.iter().filter(|i| gt_set.contains(i)).count();
    overlap as f64 / k_eff as f64
}
