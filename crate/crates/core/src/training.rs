//! Delayed-feedback projected online learning and online-to-batch
//! conversion.
//!
//! Round `t` consumes the datum `Zₜ = (x₀..xₜ₋₁ → xₜ)`. The learner predicts
//! with its current hypothesis `hₜ`, and the gradient of that loss is
//! revealed only `d` rounds later. The update applied in round `t` is
//!
//! ```text
//! hₜ₊₁ = Π_R( hₜ − ηₜ · ∇ℓ(hₜ₋d, Zₜ₋d) ),   ηₜ = s·√(ln N / t)
//! ```
//!
//! where `Π_R` projects every convolutional layer onto its ℓ2,1 ball. With
//! the squared ℓ2 regularizer, mirror descent is exactly this projected
//! gradient step. The batch predictor is the running mean of `h₁..h_T`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mixing::{rng_from_seed, Series};
use crate::model::{
    clipped_loss, forward_trace, loss_gradient_multi, point_loss_gradient, receptive_field, total_norm, TcnConfig,
    TcnWeights,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub delay: usize,
    /// Number of passes over the training sequence.
    pub steps: usize,
    pub step_scale: f64,
    /// Share of each sequence held out as a contiguous test suffix.
    pub eval_fraction: f64,
    pub seed: u64,
}

pub const DEFAULT_STEP_SCALE: f64 = 0.3;
pub const DEFAULT_EVAL_FRACTION: f64 = 0.2;

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            delay: 0,
            steps: 1,
            step_scale: DEFAULT_STEP_SCALE,
            eval_fraction: DEFAULT_EVAL_FRACTION,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(invalid("at least one pass is required"));
        }
        if !(self.step_scale > 0.0 && self.step_scale.is_finite()) {
            return Err(invalid("step scale must be > 0"));
        }
        if !(self.eval_fraction > 0.0 && self.eval_fraction < 1.0) {
            return Err(invalid("eval fraction must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Splits a sequence into a training prefix and a held-out suffix of
    /// `⌈len·eval_fraction⌉` values.
    pub fn split(&self, series: &Series) -> Result<(Series, Series)> {
        let n_test = (series.len() as f64 * self.eval_fraction).ceil() as usize;
        series.split_at(series.len().saturating_sub(n_test))
    }
}

/// `scale·√(ln N / t)`
pub fn step_size(t: u64, n: u64, scale: f64) -> Result<f64> {
    if t == 0 {
        return Err(invalid("step index t starts at 1"));
    }
    if n < 2 {
        return Err(invalid("the step-size schedule needs N >= 2"));
    }
    Ok(scale * ((n as f64).ln() / t as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub averaged_weights: TcnWeights,
    pub final_weights: TcnWeights,
    /// Cumulative online loss after every round.
    pub regret_trace: Vec<f64>,
    /// Total weight norm after every round.
    pub norms_trace: Vec<f64>,
    pub rounds_per_pass: usize,
    pub passes: usize,
}

impl TrainedModel {
    pub fn cumulative_loss(&self) -> f64 {
        self.regret_trace.last().copied().unwrap_or(0.0)
    }
}

/// What one call to [`DelayedLearner::step`] observed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub online_loss: f64,
    /// Whether a delayed gradient was applied this round.
    pub updated: bool,
}

/// Online state of the delayed-feedback learner.
#[derive(Debug, Clone)]
pub struct DelayedLearner {
    config: TcnConfig,
    delay: usize,
    step_scale: f64,
    horizon: u64,
    t: u64,
    weights: TcnWeights,
    average: TcnWeights,
    pending: VecDeque<TcnWeights>,
}

impl DelayedLearner {
    /// `horizon` is the N in the step-size schedule.
    pub fn new(config: &TcnConfig, tcfg: &TrainConfig, horizon: u64) -> Result<Self> {
        config.validate()?;
        tcfg.validate()?;
        if horizon < 2 {
            return Err(invalid("the step-size schedule needs N >= 2"));
        }
        let weights = TcnWeights::init(config, &mut rng_from_seed(tcfg.seed));
        Ok(Self {
            config: config.clone(),
            delay: tcfg.delay,
            step_scale: tcfg.step_scale,
            horizon,
            t: 0,
            average: TcnWeights::zeros(config),
            weights,
            pending: VecDeque::with_capacity(tcfg.delay + 1),
        })
    }

    pub fn weights(&self) -> &TcnWeights {
        &self.weights
    }

    pub fn average(&self) -> &TcnWeights {
        &self.average
    }

    pub fn rounds(&self) -> u64 {
        self.t
    }

    /// One round: predict the last step of `history` against `target`,
    /// queue that gradient and apply the one from `d` rounds ago.
    pub fn step(&mut self, history: &[f64], target: f64) -> StepOutcome {
        self.t += 1;
        // hₜ joins the running mean before it is updated
        let inv = 1.0 / self.t as f64;
        for (a, w) in self.average.params_mut().zip(self.weights.params()) {
            *a += (w - *a) * inv;
        }
        let lg = point_loss_gradient(&self.config, &self.weights, history, target);
        self.pending.push_back(lg.grad);
        let updated = self.pending.len() > self.delay;
        if updated {
            let g = self.pending.pop_front().expect("queue is non-empty");
            let eta = self.step_scale * ((self.horizon as f64).ln() / self.t as f64).sqrt();
            self.weights.axpy(-eta, &g);
            self.weights.project(self.config.norm_radius);
        }
        StepOutcome {
            online_loss: lg.loss,
            updated,
        }
    }
}

/// Runs `tcfg.steps` passes of delayed-feedback learning over `train`.
pub fn train_delayed_feedback(config: &TcnConfig, train: &Series, tcfg: &TrainConfig) -> Result<TrainedModel> {
    if config.in_dim != 1 {
        return Err(invalid("training runs on univariate series"));
    }
    let rf = receptive_field(config);
    let len = train.len();
    if len <= tcfg.delay + rf {
        return Err(Error::TooShort(format!(
            "training sequence of {len} values needs more than delay {} + receptive field {rf}",
            tcfg.delay
        )));
    }
    let x = train.values();
    let mut learner = DelayedLearner::new(config, tcfg, len as u64)?;
    let rounds = len - 1;
    let mut regret_trace = Vec::with_capacity(rounds * tcfg.steps);
    let mut norms_trace = Vec::with_capacity(rounds * tcfg.steps);
    let mut cumulative = 0.0;
    for _ in 0..tcfg.steps {
        for s in 1..len {
            let out = learner.step(&x[..s], x[s]);
            cumulative += out.online_loss;
            regret_trace.push(cumulative);
            norms_trace.push(total_norm(learner.weights()));
        }
    }
    Ok(TrainedModel {
        averaged_weights: learner.average,
        final_weights: learner.weights,
        regret_trace,
        norms_trace,
        rounds_per_pass: rounds,
        passes: tcfg.steps,
    })
}

/// Clipped one-step-ahead losses `ℓ(f, Zₛ)` for `s = 1..len−1`, where the
/// prediction for `xₛ` sees `x₀..xₛ₋₁` with zero padding before `x₀`.
pub fn sequence_losses(config: &TcnConfig, weights: &TcnWeights, series: &Series) -> Result<Vec<f64>> {
    weights.check_shape(config)?;
    let x = series.values();
    if x.len() < 2 {
        return Err(Error::TooShort("need at least two values".into()));
    }
    let trace = forward_trace(config, weights, &x[..x.len() - 1]);
    Ok(trace
        .output
        .iter()
        .zip(&x[1..])
        .map(|(&p, &y)| clipped_loss(p, y))
        .collect())
}

/// `R_T = Σₜ ℓ(hₜ, Zₜ) − Σₜ ℓ(f, Zₜ)` over the same rounds the learner saw.
/// No sign constraint: `f` is only a proxy for the best fixed hypothesis.
pub fn regret_against_comparator(
    model: &TrainedModel,
    config: &TcnConfig,
    comparator: &TcnWeights,
    series: &Series,
) -> Result<f64> {
    let losses = sequence_losses(config, comparator, series)?;
    if losses.len() != model.rounds_per_pass {
        return Err(Error::ShapeMismatch(format!(
            "series has {} rounds, model was trained on {}",
            losses.len(),
            model.rounds_per_pass
        )));
    }
    let comparator_total = model.passes as f64 * losses.iter().sum::<f64>();
    Ok(model.cumulative_loss() - comparator_total)
}

/// Full-batch projected gradient descent on the mean one-step-ahead loss,
/// used to build regret comparators.
pub fn fit_offline(
    config: &TcnConfig,
    series: &Series,
    epochs: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<TcnWeights> {
    let x = series.values();
    if x.len() < 2 {
        return Err(Error::TooShort("need at least two values".into()));
    }
    let mut w = TcnWeights::init(config, &mut rng_from_seed(seed));
    for _ in 0..epochs {
        let lg = loss_gradient_multi(config, &w, &x[..x.len() - 1], &x[1..])?;
        w.axpy(-learning_rate, &lg.grad);
        w.project(config.norm_radius);
    }
    Ok(w)
}

/// Lowest-loss hypothesis among the offline fit, the zero network and the
/// learner's final weights.
pub fn best_comparator(
    config: &TcnConfig,
    model: &TrainedModel,
    offline: &TcnWeights,
    series: &Series,
) -> Result<TcnWeights> {
    let zero = TcnWeights::zeros(config);
    let mut best: Option<(f64, &TcnWeights)> = None;
    for cand in [offline, &zero, &model.final_weights] {
        let total: f64 = sequence_losses(config, cand, series)?.iter().sum();
        if best.is_none_or(|(b, _)| total < b) {
            best = Some((total, cand));
        }
    }
    Ok(best.expect("three candidates").1.clone())
}

/// Held-out evaluation of a trained model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub train_loss: f64,
    pub test_loss: f64,
    pub gap: f64,
    pub total_norm: f64,
}

/// Mean clipped one-step-ahead loss over the steps whose prediction has a
/// full receptive field of real data behind it.
pub fn evaluation_loss(config: &TcnConfig, weights: &TcnWeights, series: &Series) -> Result<f64> {
    let rf = receptive_field(config);
    if series.len() <= rf {
        return Err(Error::TooShort(format!(
            "evaluation sequence of {} values must exceed the receptive field {rf}",
            series.len()
        )));
    }
    let losses = sequence_losses(config, weights, series)?;
    // losses[s-1] predicts x[s] from x[..s]; full context needs s >= rf
    let tail = &losses[rf - 1..];
    Ok(tail.iter().sum::<f64>() / tail.len() as f64)
}

/// Train and test losses of the averaged predictor and their absolute gap.
pub fn evaluate_gap(config: &TcnConfig, model: &TrainedModel, train: &Series, test: &Series) -> Result<RunResult> {
    let w = &model.averaged_weights;
    let train_loss = evaluation_loss(config, w, train)?;
    let test_loss = evaluation_loss(config, w, test)?;
    Ok(RunResult {
        train_loss,
        test_loss,
        gap: (test_loss - train_loss).abs(),
        total_norm: total_norm(w),
    })
}
