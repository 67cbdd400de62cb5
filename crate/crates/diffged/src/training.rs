//! Training loop for the denoising network: uniform time-step sampling,
//! forward corruption of the ground-truth matching matrix, BCE gradients,
//! Adam with decoupled weight decay, per-epoch validation through the solver
//! and best-checkpoint retention. Fully deterministic given the config seed.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoiser::{denoise_backward, DenoiserConfig, DenoiserParams};
use crate::diffusion::{build_schedule, forward_sample, MatchingMatrix, NoiseSchedule};
use crate::error::{Error, Result};
use crate::graph::{GraphPair, LabelVocabulary};
use crate::oracle::ground_truth_matrix;
use crate::rng::{derive_seed, stream};
use crate::solver::{diffged_solve, ExtractionMethod, SolveConfig};

/// Items per deterministic reduction chunk: gradients are summed within a
/// chunk sequentially and chunks are combined in index order, so the result
/// does not depend on thread scheduling or worker count.
const GRAD_CHUNK: usize = 8;

fn default_epochs() -> usize {
    200
}
fn default_batch() -> usize {
    128
}
fn default_lr() -> f64 {
    1e-3
}
fn default_wd() -> f64 {
    5e-4
}
fn default_t() -> usize {
    1000
}
fn default_beta_start() -> f64 {
    1e-4
}
fn default_beta_end() -> f64 {
    0.02
}
fn default_val_k() -> usize {
    2
}
fn default_val_s() -> usize {
    3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_wd")]
    pub weight_decay: f64,
    #[serde(default = "default_t")]
    pub t_steps: usize,
    #[serde(default = "default_beta_start")]
    pub beta_start: f64,
    #[serde(default = "default_beta_end")]
    pub beta_end: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "DenoiserConfig::default_dims")]
    pub layer_dims: Vec<usize>,
    /// Chains per validation solve (kept small; validation runs every epoch).
    #[serde(default = "default_val_k")]
    pub val_k: usize,
    /// Reverse steps per validation solve.
    #[serde(default = "default_val_s")]
    pub val_s: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            batch_size: default_batch(),
            learning_rate: default_lr(),
            weight_decay: default_wd(),
            t_steps: default_t(),
            beta_start: default_beta_start(),
            beta_end: default_beta_end(),
            seed: 0,
            layer_dims: DenoiserConfig::default_dims(),
            val_k: default_val_k(),
            val_s: default_val_s(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning_rate must be finite and >= 0".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidArgument("weight_decay must be finite and >= 0".into()));
        }
        if self.val_k == 0 || self.val_s == 0 {
            return Err(Error::InvalidArgument("val_k and val_s must be positive".into()));
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(json)
            .map_err(|e| Error::Parse { record: None, msg: e.to_string() })?;
        config.validate()?;
        Ok(config)
    }
}

/// Adam accumulators over the flattened parameter vector, with decoupled
/// weight decay applied multiplicatively before each step.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerState {
    pub fn new(param_count: usize) -> Self {
        Self {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, params: &mut [f64], grads: &[f64], lr: f64, weight_decay: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let decay = 1.0 - lr * weight_decay;
        for i in 0..params.len() {
            params[i] *= decay;
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// One optimizer step over a batch of `(pair, clean matching matrix)` items.
///
/// Per item: a time step is drawn uniformly from `1..=T`, the clean matrix is
/// corrupted by the forward process, and BCE gradients are averaged over the
/// batch (fixed chunked reduction order). Returns the mean item loss.
pub fn train_step<R: Rng>(
    params: &mut DenoiserParams,
    opt: &mut OptimizerState,
    batch: &[(&GraphPair, &MatchingMatrix)],
    schedule: &NoiseSchedule,
    lr: f64,
    weight_decay: f64,
    rng: &mut R,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    // Draw all per-item randomness up front so worker scheduling cannot
    // influence the stream.
    let draws: Vec<(usize, u64)> = batch
        .iter()
        .map(|_| (rng.random_range(1..=schedule.len()), rng.random::<u64>()))
        .collect();

    let chunks: Vec<(DenoiserParams, f64)> = batch
        .par_chunks(GRAD_CHUNK)
        .zip(draws.par_chunks(GRAD_CHUNK))
        .map(|(items, item_draws)| -> Result<(DenoiserParams, f64)> {
            let mut grad_sum = params.zeros_like();
            let mut loss_sum = 0.0;
            for ((pair, m0), &(t, noise_seed)) in items.iter().zip(item_draws) {
                let mut noise_rng = stream(noise_seed, 0);
                let mt = forward_sample(m0, t, schedule, &mut noise_rng)?;
                let (loss, grads) = denoise_backward(pair, &mt, t, params, m0)?;
                grad_sum.add_assign(&grads);
                loss_sum += loss;
            }
            Ok((grad_sum, loss_sum))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut grad_total = params.zeros_like();
    let mut loss_total = 0.0;
    for (g, l) in &chunks {
        grad_total.add_assign(g);
        loss_total += l;
    }
    let scale = 1.0 / batch.len() as f64;
    grad_total.scale(scale);
    let mean_loss = loss_total * scale;
    if !mean_loss.is_finite() {
        return Err(Error::NonFinite(format!(
            "training loss became {mean_loss} at optimizer step {}",
            opt.step_count() + 1
        )));
    }

    let mut flat = params.to_flat();
    opt.update(&mut flat, &grad_total.to_flat(), lr, weight_decay);
    params.set_from_flat(&flat)?;
    Ok(mean_loss)
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_bce: f64,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug)]
pub struct TrainOutput {
    /// Checkpoint of the validation-best parameters (final parameters when no
    /// validation pairs were supplied).
    pub checkpoint: Checkpoint,
    /// Parameters after the last epoch.
    pub final_params: DenoiserParams,
    pub curve: Vec<EpochStats>,
    pub best_epoch: Option<usize>,
}

fn fisher_yates<R: Rng>(len: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    for i in (1..len).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    order
}

/// Full training run: shuffled epochs, per-epoch validation accuracy through
/// the solver (small `k`), best-checkpoint retention, loss curve.
pub fn train(
    train_pairs: &[GraphPair],
    val_pairs: &[GraphPair],
    vocab: &LabelVocabulary,
    config: &TrainConfig,
) -> Result<TrainOutput> {
    config.validate()?;
    if train_pairs.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let vocab_size = vocab.size().max(1);
    let net_config = DenoiserConfig::new(config.layer_dims.clone(), vocab_size)?;
    let schedule = build_schedule(config.t_steps, config.beta_start, config.beta_end)?;
    let mut params = DenoiserParams::init(&net_config, derive_seed(config.seed, 1))?;
    let mut opt = OptimizerState::new(params.num_params());

    let targets: Vec<MatchingMatrix> = train_pairs
        .iter()
        .map(ground_truth_matrix)
        .collect::<Result<Vec<_>>>()
        .map_err(|e| match e {
            Error::MissingGroundTruth(_) => Error::MissingGroundTruth(
                "every training pair needs a ground-truth mapping".into(),
            ),
            other => other,
        })?;
    for pair in val_pairs {
        if pair.ground_truth_ged.is_none() {
            return Err(Error::MissingGroundTruth(
                "every validation pair needs a ground-truth GED".into(),
            ));
        }
    }

    let mut curve = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, DenoiserParams)> = None;
    for epoch in 0..config.epochs {
        let mut order_rng = stream(config.seed, 1_000 + epoch as u64);
        let order = fisher_yates(train_pairs.len(), &mut order_rng);
        let mut loss_sum = 0.0;
        for (batch_idx, batch_indices) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<(&GraphPair, &MatchingMatrix)> =
                batch_indices.iter().map(|&i| (&train_pairs[i], &targets[i])).collect();
            let mut step_rng =
                stream(config.seed, 2_000_000 + epoch as u64 * 100_000 + batch_idx as u64);
            let loss = train_step(
                &mut params,
                &mut opt,
                &batch,
                &schedule,
                config.learning_rate,
                config.weight_decay,
                &mut step_rng,
            )?;
            loss_sum += loss * batch.len() as f64;
        }
        let train_bce = loss_sum / train_pairs.len() as f64;

        let val_accuracy = if val_pairs.is_empty() {
            None
        } else {
            Some(validation_accuracy(val_pairs, &params, &schedule, config, epoch)?)
        };
        if let Some(acc) = val_accuracy {
            let better = match &best {
                None => true,
                Some((best_acc, _, _)) => acc > *best_acc,
            };
            if better {
                best = Some((acc, epoch, params.clone()));
            }
        }
        curve.push(EpochStats { epoch, train_bce, val_accuracy });
    }

    let (best_epoch, best_params) = match best {
        Some((_, epoch, p)) => (Some(epoch), p),
        None => (None, params.clone()),
    };
    let checkpoint = Checkpoint::from_params(&best_params, vocab, config);
    Ok(TrainOutput { checkpoint, final_params: params, curve, best_epoch })
}

fn validation_accuracy(
    val_pairs: &[GraphPair],
    params: &DenoiserParams,
    schedule: &NoiseSchedule,
    config: &TrainConfig,
    epoch: usize,
) -> Result<f64> {
    let hits: Vec<bool> = val_pairs
        .par_iter()
        .enumerate()
        .map(|(idx, pair)| -> Result<bool> {
            let solve_config = SolveConfig {
                k: config.val_k,
                s: config.val_s.min(schedule.len()),
                method: ExtractionMethod::Greedy,
                one_shot: false,
                seed: derive_seed(config.seed, 5_000_000 + epoch as u64 * 100_000 + idx as u64),
            };
            let result = diffged_solve(pair, params, schedule, &solve_config)?;
            Ok(Some(result.predicted_ged) == pair.ground_truth_ged)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
}

/// Writes the loss curve as CSV (`epoch,train_bce,val_accuracy`).
pub fn write_loss_curve<W: std::io::Write>(mut w: W, curve: &[EpochStats]) -> Result<()> {
    writeln!(w, "epoch,train_bce,val_accuracy")?;
    for row in curve {
        match row.val_accuracy {
            Some(acc) => writeln!(w, "{},{},{}", row.epoch, row.train_bce, acc)?,
            None => writeln!(w, "{},{},", row.epoch, row.train_bce)?,
        }
    }
    Ok(())
}

/// Versioned JSON container for trained parameters: network config, label
/// vocabulary, the diffusion schedule the model was trained with, and every
/// parameter block by name. Round-trips bit-exactly (f64 via shortest
/// round-trip decimal).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: DenoiserConfig,
    pub vocab: Vec<String>,
    pub t_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub params: BTreeMap<String, Vec<f64>>,
}

pub const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn from_params(
        params: &DenoiserParams,
        vocab: &LabelVocabulary,
        config: &TrainConfig,
    ) -> Self {
        let mut blocks = BTreeMap::new();
        params.for_each_block(|name, data| {
            blocks.insert(name, data.to_vec());
        });
        Self {
            version: CHECKPOINT_VERSION,
            config: params.config.clone(),
            vocab: vocab.names().to_vec(),
            t_steps: config.t_steps,
            beta_start: config.beta_start,
            beta_end: config.beta_end,
            params: blocks,
        }
    }

    /// Rebuilds the parameter struct, validating block names, lengths and
    /// finiteness.
    pub fn to_params(&self) -> Result<DenoiserParams> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Parse {
                record: None,
                msg: format!(
                    "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                    self.version
                ),
            });
        }
        self.config.validate()?;
        if self.vocab.len() != self.config.vocab_size {
            return Err(Error::Validation(format!(
                "vocabulary has {} entries but config says {}",
                self.vocab.len(),
                self.config.vocab_size
            )));
        }
        let mut params = DenoiserParams::init(&self.config, 0)?.zeros_like();
        let mut missing = Vec::new();
        let mut used = 0usize;
        let mut bad: Option<String> = None;
        params.for_each_block_mut(|name, data| {
            match self.params.get(&name) {
                Some(values) if values.len() == data.len() => {
                    if values.iter().any(|x| !x.is_finite()) {
                        bad = Some(format!("block {name} contains non-finite values"));
                    }
                    data.copy_from_slice(values);
                    used += 1;
                }
                Some(values) => {
                    bad = Some(format!(
                        "block {name} has {} values, expected {}",
                        values.len(),
                        data.len()
                    ));
                }
                None => missing.push(name),
            }
        });
        if let Some(msg) = bad {
            return Err(Error::Validation(msg));
        }
        if !missing.is_empty() {
            return Err(Error::Validation(format!("missing parameter blocks: {missing:?}")));
        }
        if used != self.params.len() {
            return Err(Error::Validation(format!(
                "checkpoint has {} parameter blocks, expected {used}",
                self.params.len()
            )));
        }
        Ok(params)
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        build_schedule(self.t_steps, self.beta_start, self.beta_end)
    }

    pub fn vocabulary(&self) -> Result<LabelVocabulary> {
        LabelVocabulary::from_names(self.vocab.iter().cloned())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serialization cannot fail")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::Parse { record: None, msg: e.to_string() })
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        fs::write(path.as_ref(), self.to_json())?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path.as_ref())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::LabeledGraph;
    use crate::synthetic::{build_corpus, random_base_graph};

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 4,
            learning_rate: 1e-3,
            weight_decay: 5e-4,
            t_steps: 20,
            beta_start: 1e-3,
            beta_end: 0.05,
            seed: 7,
            layer_dims: vec![8, 6],
            val_k: 2,
            val_s: 2,
        }
    }

    fn tiny_corpus(count_bases: usize, per: usize, seed: u64) -> Vec<GraphPair> {
        let mut rng = stream(seed, 0);
        let bases: Vec<LabeledGraph> =
            (0..count_bases).map(|_| random_base_graph(5, 0.5, 2, &mut rng)).collect();
        build_corpus(&bases, per, Some((1, 2)), 2, 1, seed, false).unwrap()
    }

    fn vocab2() -> LabelVocabulary {
        LabelVocabulary::from_names(["0".into(), "1".into()]).unwrap()
    }

    #[test]
    fn zero_learning_rate_keeps_params_bit_identical() {
        let pairs = tiny_corpus(2, 2, 3);
        let vocab = vocab2();
        let net = DenoiserConfig::new(vec![6, 4], vocab.size()).unwrap();
        let mut params = DenoiserParams::init(&net, 5).unwrap();
        let before = params.to_flat();
        let mut opt = OptimizerState::new(params.num_params());
        let schedule = build_schedule(10, 1e-3, 0.02).unwrap();
        let targets: Vec<MatchingMatrix> =
            pairs.iter().map(|p| ground_truth_matrix(p).unwrap()).collect();
        let batch: Vec<(&GraphPair, &MatchingMatrix)> =
            pairs.iter().zip(&targets).collect();
        let mut rng = stream(1, 0);
        train_step(&mut params, &mut opt, &batch, &schedule, 0.0, 5e-4, &mut rng).unwrap();
        assert_eq!(params.to_flat(), before);
    }

    #[test]
    fn batch_loss_is_mean_of_item_losses() {
        let pairs = tiny_corpus(2, 2, 11);
        let vocab = vocab2();
        let net = DenoiserConfig::new(vec![6, 4], vocab.size()).unwrap();
        let schedule = build_schedule(10, 1e-3, 0.02).unwrap();
        let targets: Vec<MatchingMatrix> =
            pairs.iter().map(|p| ground_truth_matrix(p).unwrap()).collect();
        let batch: Vec<(&GraphPair, &MatchingMatrix)> =
            pairs.iter().zip(&targets).collect();

        // Batch pass.
        let mut params = DenoiserParams::init(&net, 5).unwrap();
        let mut opt = OptimizerState::new(params.num_params());
        let mut rng = stream(42, 0);
        let batch_loss =
            train_step(&mut params, &mut opt, &batch, &schedule, 1e-3, 0.0, &mut rng).unwrap();

        // Same randomness, per-item losses computed independently.
        let params2 = DenoiserParams::init(&net, 5).unwrap();
        let mut rng = stream(42, 0);
        let draws: Vec<(usize, u64)> =
            batch.iter().map(|_| (rng.random_range(1..=10), rng.random::<u64>())).collect();
        let mut sum = 0.0;
        for ((pair, m0), (t, seed)) in batch.iter().zip(draws) {
            let mt = forward_sample(m0, t, &schedule, &mut stream(seed, 0)).unwrap();
            let (loss, _) = denoise_backward(pair, &mt, t, &params2, m0).unwrap();
            sum += loss;
        }
        assert!((batch_loss - sum / batch.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn single_item_overfit_loss_trends_down() {
        let pairs = tiny_corpus(1, 1, 21);
        let vocab = vocab2();
        let net = DenoiserConfig::new(vec![8, 6], vocab.size()).unwrap();
        let schedule = build_schedule(10, 1e-3, 0.02).unwrap();
        let target = ground_truth_matrix(&pairs[0]).unwrap();
        let mut params = DenoiserParams::init(&net, 1).unwrap();
        let mut opt = OptimizerState::new(params.num_params());
        let mut losses = Vec::new();
        for step in 0..50 {
            let mut rng = stream(100 + step, 0);
            let batch = vec![(&pairs[0], &target)];
            let loss =
                train_step(&mut params, &mut opt, &batch, &schedule, 5e-3, 0.0, &mut rng).unwrap();
            losses.push(loss);
        }
        let first: f64 = losses[..10].iter().sum::<f64>() / 10.0;
        let last: f64 = losses[40..].iter().sum::<f64>() / 10.0;
        assert!(last < first, "windowed loss did not decrease: {first} -> {last}");
    }

    #[test]
    fn adam_converges_on_quadratic() {
        // min of sum (x_i - c_i)^2: optimizer-only sanity check
        let target = [1.5, -2.0, 0.25, 3.0];
        let mut x = vec![0.0; 4];
        let mut opt = OptimizerState::new(4);
        for _ in 0..5000 {
            let grads: Vec<f64> = x.iter().zip(target).map(|(&xi, ci)| 2.0 * (xi - ci)).collect();
            opt.update(&mut x, &grads, 0.05, 0.0);
        }
        for (xi, ci) in x.iter().zip(target) {
            assert!((xi - ci).abs() < 1e-4, "{xi} vs {ci}");
        }
    }

    #[test]
    fn weight_decay_changes_params_not_gradients() {
        let g = vec![0.3, -0.2];
        let mut a = vec![1.0, -1.0];
        let mut b = a.clone();
        let mut opt_a = OptimizerState::new(2);
        let mut opt_b = OptimizerState::new(2);
        opt_a.update(&mut a, &g, 0.1, 0.0);
        opt_b.update(&mut b, &g, 0.1, 0.5);
        assert_eq!(opt_a.m, opt_b.m);
        assert_eq!(opt_a.v, opt_b.v);
        assert!(a.iter().map(|x| x * x).sum::<f64>() > b.iter().map(|x| x * x).sum::<f64>());
    }

    #[test]
    fn zero_epochs_returns_initialized_params() {
        let pairs = tiny_corpus(2, 2, 31);
        let vocab = vocab2();
        let mut config = tiny_config();
        config.epochs = 0;
        let out = train(&pairs, &[], &vocab, &config).unwrap();
        let net = DenoiserConfig::new(config.layer_dims.clone(), vocab.size()).unwrap();
        let init = DenoiserParams::init(&net, derive_seed(config.seed, 1)).unwrap();
        assert_eq!(out.final_params, init);
        assert!(out.curve.is_empty());
    }

    #[test]
    fn training_is_seed_deterministic() {
        let pairs = tiny_corpus(3, 2, 41);
        let (val, tr) = pairs.split_at(2);
        let vocab = vocab2();
        let config = tiny_config();
        let a = train(tr, val, &vocab, &config).unwrap();
        let b = train(tr, val, &vocab, &config).unwrap();
        assert_eq!(a.final_params, b.final_params);
        assert_eq!(a.checkpoint, b.checkpoint);
        assert_eq!(a.curve.len(), b.curve.len());
        for (x, y) in a.curve.iter().zip(&b.curve) {
            assert_eq!(x.train_bce, y.train_bce);
            assert_eq!(x.val_accuracy, y.val_accuracy);
        }
    }

    #[test]
    fn missing_ground_truth_is_rejected() {
        let g = LabeledGraph::new(3, vec![(0, 1)], vec![0, 0, 0]).unwrap();
        let h = LabeledGraph::new(3, vec![(0, 1), (1, 2)], vec![0, 0, 0]).unwrap();
        let pair = GraphPair::new(g, h, None, None).unwrap();
        let vocab = LabelVocabulary::from_names(["0".into()]).unwrap();
        let err = train(&[pair], &[], &vocab, &tiny_config()).unwrap_err();
        assert!(matches!(err, Error::MissingGroundTruth(_)));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let vocab = vocab2();
        let net = DenoiserConfig::new(vec![6, 4], vocab.size()).unwrap();
        let params = DenoiserParams::init(&net, 77).unwrap();
        let config = tiny_config();
        let ckpt = Checkpoint::from_params(&params, &vocab, &config);
        let json = ckpt.to_json();
        let back = Checkpoint::from_json(&json).unwrap();
        assert_eq!(ckpt, back);
        assert_eq!(back.to_params().unwrap(), params);
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let vocab = vocab2();
        let net = DenoiserConfig::new(vec![6, 4], vocab.size()).unwrap();
        let params = DenoiserParams::init(&net, 7).unwrap();
        let mut ckpt = Checkpoint::from_params(&params, &vocab, &tiny_config());
        ckpt.params.get_mut("head.a.b").unwrap().pop();
        assert!(ckpt.to_params().is_err());

        let mut ckpt2 = Checkpoint::from_params(&params, &vocab, &tiny_config());
        ckpt2.params.remove("head.a.w");
        assert!(ckpt2.to_params().is_err());

        let mut ckpt3 = Checkpoint::from_params(&params, &vocab, &tiny_config());
        ckpt3.version = 99;
        assert!(ckpt3.to_params().is_err());

        let mut ckpt4 = Checkpoint::from_params(&params, &vocab, &tiny_config());
        ckpt4.params.get_mut("head.a.w").unwrap()[0] = f64::NAN;
        assert!(ckpt4.to_params().is_err());
    }

    #[test]
    fn save_load_train_continuation_is_bit_identical() {
        // two consecutive steps vs. save/load between the steps
        let pairs = tiny_corpus(2, 2, 51);
        let vocab = vocab2();
        let net = DenoiserConfig::new(vec![6, 4], vocab.size()).unwrap();
        let schedule = build_schedule(10, 1e-3, 0.02).unwrap();
        let targets: Vec<MatchingMatrix> =
            pairs.iter().map(|p| ground_truth_matrix(p).unwrap()).collect();
        let batch: Vec<(&GraphPair, &MatchingMatrix)> =
            pairs.iter().zip(&targets).collect();

        let mut params_a = DenoiserParams::init(&net, 5).unwrap();
        let mut opt_a = OptimizerState::new(params_a.num_params());
        let mut rng = stream(9, 0);
        train_step(&mut params_a, &mut opt_a, &batch, &schedule, 1e-3, 5e-4, &mut rng).unwrap();

        // round-trip through the JSON container
        let ckpt = Checkpoint::from_params(&params_a, &vocab, &tiny_config());
        let mut params_b = Checkpoint::from_json(&ckpt.to_json()).unwrap().to_params().unwrap();
        let mut opt_b = opt_a.clone();

        let mut rng_a = stream(10, 0);
        let mut rng_b = stream(10, 0);
        train_step(&mut params_a, &mut opt_a, &batch, &schedule, 1e-3, 5e-4, &mut rng_a).unwrap();
        train_step(&mut params_b, &mut opt_b, &batch, &schedule, 1e-3, 5e-4, &mut rng_b).unwrap();
        assert_eq!(params_a.to_flat(), params_b.to_flat());
    }
}
