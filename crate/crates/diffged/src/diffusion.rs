//! Discrete diffusion over binary matching matrices: the noise schedule, the
//! forward bit-flip corruption, the reverse posterior (with arbitrary step
//! gaps for sub-sequence sampling) and the initial noise draw.
//!
//! Every per-entry transition kernel is a symmetric 2x2 matrix
//! `[[1-b, b], [b, 1-b]]`, so all products collapse to the closed form
//! `stay = (1 + prod(1-2b))/2`. The schedule caches the running product.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Rectangular matrix of matching states: binary `{0,1}` entries when used as
/// a diffusion state, probabilities in `[0,1]` when produced by the denoiser.
/// No row or column stochasticity is imposed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchingMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl MatchingMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transposed(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0 || x == 1.0)
    }

    fn require_binary(&self, what: &str) -> Result<()> {
        if self.is_binary() {
            Ok(())
        } else {
            Err(Error::Validation(format!("{what} must be a binary matrix")))
        }
    }

    fn require_same_shape(&self, other: &Self) -> Result<()> {
        if self.rows == other.rows && self.cols == other.cols {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "shape mismatch: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )))
        }
    }
}

/// Bit-flip noise schedule: switch probabilities `beta_1..beta_T` together with
/// the cached running product `prod_{s<=t}(1 - 2 beta_s)` that encodes every
/// cumulative transition matrix.
#[derive(Debug, Clone)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    /// `cum[t] = prod_{s=1..t} (1 - 2 beta_s)`, with `cum[0] = 1`.
    cum: Vec<f64>,
}

impl NoiseSchedule {
    /// Builds a schedule from explicit betas. Betas may be zero here (useful
    /// for identity-kernel tests); [`build_schedule`] is stricter.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::InvalidArgument("schedule needs at least one step".into()));
        }
        if betas.iter().any(|&b| !(0.0..0.5).contains(&b)) {
            return Err(Error::InvalidArgument("every beta must lie in [0, 0.5)".into()));
        }
        let mut cum = Vec::with_capacity(betas.len() + 1);
        cum.push(1.0);
        for &b in &betas {
            cum.push(cum.last().unwrap() * (1.0 - 2.0 * b));
        }
        Ok(Self { betas, cum })
    }

    /// Number of diffusion steps `T`.
    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    /// Switch probability of step `t` (1-based).
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// Flip probability of the cumulative kernel `Q^bar_t` (1-based; `t = 0`
    /// gives the identity kernel).
    pub fn marginal_flip(&self, t: usize) -> f64 {
        (1.0 - self.cum[t]) / 2.0
    }

    pub fn marginal_stay(&self, t: usize) -> f64 {
        (1.0 + self.cum[t]) / 2.0
    }

    /// Flip probability of the bridging kernel `Q_{t_to+1} ... Q_{t_from}`.
    pub fn bridge_flip(&self, t_to: usize, t_from: usize) -> f64 {
        (1.0 - self.cum[t_from] / self.cum[t_to]) / 2.0
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.len() {
            return Err(Error::InvalidArgument(format!(
                "time step {t} outside 1..={}",
                self.len()
            )));
        }
        Ok(())
    }
}

/// Linear schedule from `beta_start` to `beta_end` over `t_steps` steps.
///
/// The closed-form cumulative products are cross-checked against iterated 2x2
/// matrix multiplication to 1e-12 before the schedule is returned.
pub fn build_schedule(t_steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if t_steps == 0 {
        return Err(Error::InvalidArgument("t_steps must be positive".into()));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 0.5) {
        return Err(Error::InvalidArgument(format!(
            "beta range must satisfy 0 < start <= end < 0.5 (got {beta_start}, {beta_end})"
        )));
    }
    let betas: Vec<f64> = (0..t_steps)
        .map(|i| {
            if t_steps == 1 {
                beta_start
            } else {
                beta_start + (i as f64 / (t_steps - 1) as f64) * (beta_end - beta_start)
            }
        })
        .collect();
    let schedule = NoiseSchedule::from_betas(betas)?;

    // Closed form vs. explicit matrix chain.
    let mut q = [[1.0f64, 0.0], [0.0, 1.0]];
    for t in 1..=t_steps {
        let b = schedule.beta(t);
        let step = [[1.0 - b, b], [b, 1.0 - b]];
        q = mat2_mul(q, step);
        let stay = schedule.marginal_stay(t);
        let flip = schedule.marginal_flip(t);
        if (q[0][0] - stay).abs() > 1e-12 || (q[0][1] - flip).abs() > 1e-12 {
            return Err(Error::NonFinite(format!(
                "cumulative kernel drifted from closed form at step {t}"
            )));
        }
    }
    Ok(schedule)
}

fn mat2_mul(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Samples `M^t` from `M^0` by flipping each entry independently with the
/// cumulative flip probability of step `t`.
pub fn forward_sample<R: Rng>(
    m0: &MatchingMatrix,
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<MatchingMatrix> {
    m0.require_binary("forward_sample input")?;
    schedule.check_t(t)?;
    let flip = schedule.marginal_flip(t);
    let mut out = m0.clone();
    for x in out.data_mut() {
        if rng.random::<f64>() < flip {
            *x = 1.0 - *x;
        }
    }
    Ok(out)
}

/// Per-entry probability that the state at `t_to` equals 1, given the state at
/// `t_from` and the predicted probability that the clean state is 1.
///
/// Marginalizes the two-term mixture over the hypothesized clean state: for
/// each hypothesis the bridge combines the `t_to`-step marginal, the
/// `t_to -> t_from` bridging kernel and the `t_from`-step marginal.
pub fn posterior_entry(
    state_at_from: f64,
    p_clean_one: f64,
    t_from: usize,
    t_to: usize,
    schedule: &NoiseSchedule,
) -> Result<f64> {
    let bridge = schedule.bridge_flip(t_to, t_from);
    let mut p1 = 0.0;
    for clean in [1.0, 0.0] {
        let weight = if clean == 1.0 { p_clean_one } else { 1.0 - p_clean_one };
        // q(state at t_to = 1 | clean)
        let to_one = if clean == 1.0 { schedule.marginal_stay(t_to) } else { schedule.marginal_flip(t_to) };
        // q(observed state at t_from | state at t_to = 1)
        let obs_given_one = if state_at_from == 1.0 { 1.0 - bridge } else { bridge };
        // q(observed state at t_from | clean)
        let denom = if state_at_from == clean {
            schedule.marginal_stay(t_from)
        } else {
            schedule.marginal_flip(t_from)
        };
        if denom < 1e-15 {
            return Err(Error::NonFinite(format!(
                "degenerate marginal q(m_t | m0) = {denom} at t = {t_from}"
            )));
        }
        p1 += weight * obs_given_one * to_one / denom;
    }
    Ok(p1)
}

/// Element-wise reverse posterior parameters `P(state = 1 at t_to)`.
pub fn posterior(
    mt: &MatchingMatrix,
    m0_probs: &MatchingMatrix,
    t_from: usize,
    t_to: usize,
    schedule: &NoiseSchedule,
) -> Result<MatchingMatrix> {
    mt.require_binary("posterior state")?;
    mt.require_same_shape(m0_probs)?;
    schedule.check_t(t_from)?;
    if t_to >= t_from || t_to == 0 {
        return Err(Error::InvalidArgument(format!(
            "posterior requires 1 <= t_to < t_from (got t_to={t_to}, t_from={t_from})"
        )));
    }
    if m0_probs.data().iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(Error::Validation("clean-state probabilities must lie in [0, 1]".into()));
    }
    let mut out = MatchingMatrix::zeros(mt.rows(), mt.cols());
    for i in 0..mt.data().len() {
        out.data_mut()[i] =
            posterior_entry(mt.data()[i], m0_probs.data()[i], t_from, t_to, schedule)?;
    }
    Ok(out)
}

/// Samples the binary state at `t_to` from the reverse posterior.
pub fn reverse_step<R: Rng>(
    mt: &MatchingMatrix,
    m0_probs: &MatchingMatrix,
    t_from: usize,
    t_to: usize,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<MatchingMatrix> {
    let params = posterior(mt, m0_probs, t_from, t_to, schedule)?;
    let mut out = MatchingMatrix::zeros(mt.rows(), mt.cols());
    for (o, &p) in out.data_mut().iter_mut().zip(params.data()) {
        *o = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
    }
    Ok(out)
}

/// Uniform random binary matrix: the reverse chain's starting point, matching
/// the forward process's stationary distribution.
pub fn sample_initial<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> MatchingMatrix {
    let mut m = MatchingMatrix::zeros(rows, cols);
    for x in m.data_mut() {
        *x = if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 };
    }
    m
}

/// Descending sub-sequence `[tau_S, ..., tau_1]` of reverse time points:
/// linearly spaced from `T` down to 1, rounded, deduplicated.
pub fn ddim_subsequence(t_steps: usize, s_steps: usize) -> Result<Vec<usize>> {
    if s_steps == 0 || s_steps > t_steps {
        return Err(Error::InvalidArgument(format!(
            "reverse step count must satisfy 1 <= S <= T (got S={s_steps}, T={t_steps})"
        )));
    }
    if s_steps == 1 {
        return Ok(vec![t_steps]);
    }
    let spacing = (t_steps - 1) as f64 / (s_steps - 1) as f64;
    let mut taus: Vec<usize> = (0..s_steps)
        .map(|i| (t_steps as f64 - i as f64 * spacing).round().max(1.0) as usize)
        .collect();
    taus.dedup();
    debug_assert!(taus.windows(2).all(|w| w[0] > w[1]));
    debug_assert_eq!(*taus.first().unwrap(), t_steps);
    debug_assert_eq!(*taus.last().unwrap(), 1);
    Ok(taus)
}
