//! Bridge matching of a Gaussian-mixture potential.
//!
//! Each iteration draws pairs from the configured coupling, times
//! `t ~ U[0, t_max]` and bridge points `x_t`, then takes an Adam step on
//!
//! ```text
//! L(θ) = 1/N Σ_n ‖g_θ(x_t, t) − (x₁ − x_t)/(1 − t)‖²
//! ```
//!
//! using the analytic gradient of the closed-form drift.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::couplings::{CouplingKind, CouplingSampler};
use crate::error::{check_dim, Error, Result};
use crate::io::{Checkpoint, TrainMeta};
use crate::potential::{Derived, GaussianMixturePotential, InitConfig};
use crate::processes::{bridge_point, PairBatch};
use crate::samples::Samples;

pub const DEFAULT_T_MAX: f64 = 1.0 - 1e-4;

/// Samples per parallel work unit; fixed so reductions are order-stable.
const CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub eps: f64,
    pub n_components: usize,
    pub batch_size: usize,
    pub n_iters: usize,
    pub learning_rate: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub t_max: f64,
    pub seed: u64,
    pub sampler: CouplingKind,
    pub init_scale: f64,
    /// Emit a checkpoint every this many iterations; 0 disables.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eps: 1.0,
            n_components: 100,
            batch_size: 128,
            n_iters: 10_000,
            learning_rate: 1e-3,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            t_max: DEFAULT_T_MAX,
            seed: 0,
            sampler: CouplingKind::Independent,
            init_scale: 0.1,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad("eps must be positive");
        }
        if self.n_components == 0 {
            return bad("n_components must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.n_iters == 0 {
            return bad("n_iters must be at least 1");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.t_max > 0.0 && self.t_max < 1.0) {
            return bad("t_max must lie in (0, 1)");
        }
        if !(self.init_scale > 0.0) {
            return bad("init_scale must be positive");
        }
        Ok(())
    }
}

/// Pairs together with their bridge times and points.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgeBatch {
    pub pairs: PairBatch,
    pub ts: Vec<f64>,
    pub xts: Samples,
}

impl BridgeBatch {
    pub fn len(&self) -> usize {
        self.ts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ts.is_empty()
    }

    /// Regression target `(x₁ − x_t)/(1 − t)` for row `i`.
    pub fn target(&self, i: usize) -> Vec<f64> {
        let u = 1.0 - self.ts[i];
        self.pairs.x1.row(i).iter().zip(self.xts.row(i)).map(|(a, b)| (a - b) / u).collect()
    }
}

/// Draw `t ~ U[0, t_max]` and `x_t` from the Brownian bridge of each pair.
pub fn sample_bridge_batch<R: Rng + ?Sized>(pairs: PairBatch, t_max: f64, eps: f64, rng: &mut R) -> BridgeBatch {
    let n = pairs.len();
    let mut ts = Vec::with_capacity(n);
    let mut xts = Samples::zeros(n, pairs.dim());
    for i in 0..n {
        let t = rng.random::<f64>() * t_max;
        let xt = bridge_point(pairs.x0.row(i), pairs.x1.row(i), t, eps, rng);
        xts.row_mut(i).copy_from_slice(&xt);
        ts.push(t);
    }
    BridgeBatch { pairs, ts, xts }
}

fn validate_batch(v: &GaussianMixturePotential, batch: &BridgeBatch, t_max: f64) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Empty("bridge batch"));
    }
    check_dim(v.dim(), batch.pairs.dim())?;
    check_dim(v.dim(), batch.xts.dim())?;
    if batch.xts.len() != batch.len() || batch.pairs.len() != batch.len() {
        return Err(Error::InvalidArgument("bridge batch rows are misaligned".into()));
    }
    if !(t_max < 1.0) {
        return Err(Error::InvalidArgument("t_max must be below 1".into()));
    }
    if let Some(&t) = batch.ts.iter().find(|&&t| !(0.0..=t_max).contains(&t)) {
        return Err(Error::OutOfDomain { t, domain: "[0, t_max]" });
    }
    batch.xts.check_finite()?;
    batch.pairs.x1.check_finite()
}

/// `1/N Σ ‖g_v(x_t, t) − (x₁ − x_t)/(1 − t)‖²`.
pub fn matching_loss(v: &GaussianMixturePotential, batch: &BridgeBatch, t_max: f64) -> Result<f64> {
    validate_batch(v, batch, t_max)?;
    let der = v.derived();
    let total: f64 = (0..batch.len())
        .map(|i| {
            let (g, _) = v.drift_with_aux(&der, batch.xts.row(i), batch.ts[i]);
            let y = batch.target(i);
            g.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        })
        .sum();
    Ok(total / batch.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub loss: f64,
    /// Gradient in the flat raw-parameter layout of the potential.
    pub grad: Vec<f64>,
}

/// Matching loss and its exact gradient w.r.t. `(raw_weights, means, raw_log_vars)`.
pub fn loss_gradient(v: &GaussianMixturePotential, batch: &BridgeBatch, t_max: f64) -> Result<LossGradient> {
    validate_batch(v, batch, t_max)?;
    let der = v.derived();
    let n = batch.len();
    let chunk_result = |start: usize| {
        let mut grad = vec![0.0; v.n_params()];
        let mut loss = 0.0;
        for i in start..(start + CHUNK).min(n) {
            loss += accumulate_sample(v, &der, batch, i, n, &mut grad);
        }
        (loss, grad)
    };
    let starts: Vec<usize> = (0..n).step_by(CHUNK).collect();

    #[cfg(feature = "parallel")]
    let parts: Vec<(f64, Vec<f64>)> = {
        use rayon::prelude::*;
        starts.par_iter().map(|&s| chunk_result(s)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<(f64, Vec<f64>)> = starts.iter().map(|&s| chunk_result(s)).collect();

    let mut grad = vec![0.0; v.n_params()];
    let mut loss = 0.0;
    for (l, g) in parts {
        loss += l;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    Ok(LossGradient { loss: loss / n as f64, grad })
}

/// Adds sample `i`'s contribution to `grad` and returns its squared residual.
fn accumulate_sample(
    v: &GaussianMixturePotential,
    der: &Derived,
    batch: &BridgeBatch,
    i: usize,
    n: usize,
    grad: &mut [f64],
) -> f64 {
    let (k_n, d, eps) = (v.n_components(), v.dim(), v.eps());
    let x = batch.xts.row(i);
    let t = batch.ts[i];
    let (g, aux) = v.drift_with_aux(der, x, t);
    let y = batch.target(i);
    let resid: Vec<f64> = g.iter().zip(&y).map(|(a, b)| a - b).collect();
    let sq: f64 = resid.iter().map(|r| r * r).sum();
    let e: Vec<f64> = resid.iter().map(|r| 2.0 * r / n as f64).collect();

    // g = Σ_k w_k disp_k with w the softmax of the component log-terms.
    let dw: Vec<f64> = (0..k_n)
        .map(|k| (0..d).map(|j| e[j] * aux.disp[k * d + j]).sum())
        .collect();
    let mean_dw: f64 = (0..k_n).map(|k| aux.weights[k] * dw[k]).sum();
    let means = v.means();
    let (off_m, off_s) = (k_n, k_n + k_n * d);
    for k in 0..k_n {
        let wk = aux.weights[k];
        // ∂L/∂log_term_k; also ∂L/∂raw_weight_k because ∂log α/∂raw sums out.
        let dt = wk * (dw[k] - mean_dw);
        grad[k] += dt;
        for j in 0..d {
            let idx = k * d + j;
            let b = aux.denom[idx];
            let r = means[idx];
            let xr = x[j] - r * t;
            let d_disp = e[j] * wk;
            grad[off_m + idx] += d_disp / b + dt * xr / (eps * b);
            let d_var = d_disp * xr / (b * b) + dt * (-0.5 * t / b + xr * xr / (2.0 * eps * b * b));
            grad[off_s + idx] += d_var * der.dvar[idx];
        }
    }
    sq
}

/// First/second moment accumulators for Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        Self { m: vec![0.0; n_params], v: vec![0.0; n_params], step: 0 }
    }
}

/// Bias-corrected Adam update in place.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    betas: (f64, f64),
    adam_eps: f64,
) -> Result<()> {
    check_dim(params.len(), grads.len())?;
    check_dim(params.len(), state.m.len())?;
    state.step += 1;
    let (b1, b2) = betas;
    let bc1 = 1.0 - b1.powi(state.step as i32);
    let bc2 = 1.0 - b2.powi(state.step as i32);
    for ((p, &g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + adam_eps);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub iteration: usize,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub potential: GaussianMixturePotential,
    pub checkpoint: Checkpoint,
    pub trace: Vec<TracePoint>,
}

/// Step-wise bridge-matching trainer; owns the parameters exclusively.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    sampler: CouplingSampler,
    potential: GaussianMixturePotential,
    adam: AdamState,
    rng: crate::Rng,
    iteration: usize,
    trace: Vec<TracePoint>,
}

impl Trainer {
    /// Initialises the potential with means drawn from the sampler's target store.
    pub fn new(config: TrainConfig, sampler: CouplingSampler) -> Result<Self> {
        config.validate()?;
        let init = InitConfig {
            dim: sampler.dim(),
            n_components: config.n_components,
            eps: config.eps,
            init_scale: config.init_scale,
            seed: config.seed,
        };
        let potential = GaussianMixturePotential::init(&init, Some(sampler.target()))?;
        Self::with_potential(config, sampler, potential)
    }

    pub fn with_potential(
        config: TrainConfig,
        sampler: CouplingSampler,
        potential: GaussianMixturePotential,
    ) -> Result<Self> {
        config.validate()?;
        check_dim(potential.dim(), sampler.dim())?;
        if (potential.eps() - config.eps).abs() > 0.0 {
            return Err(Error::InvalidArgument("potential eps differs from config eps".into()));
        }
        let adam = AdamState::new(potential.n_params());
        let rng = crate::rng_from_seed(config.seed ^ 0x9e37_79b9_7f4a_7c15);
        Ok(Self { config, sampler, potential, adam, rng, iteration: 0, trace: Vec::new() })
    }

    pub fn potential(&self) -> &GaussianMixturePotential {
        &self.potential
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn trace(&self) -> &[TracePoint] {
        &self.trace
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let loss = self.trace.last().map(|p| p.loss).filter(|l| l.is_finite());
        Checkpoint::from_potential(
            &self.potential,
            TrainMeta {
                iterations: self.iteration,
                seed: self.config.seed,
                sampler: self.config.sampler,
                loss,
            },
        )
    }

    /// One optimisation step; returns the batch loss before the update.
    pub fn step(&mut self) -> Result<f64> {
        let pairs = self.sampler.sample(&mut self.rng)?;
        let batch = sample_bridge_batch(pairs, self.config.t_max, self.config.eps, &mut self.rng);
        let lg = loss_gradient(&self.potential, &batch, self.config.t_max)?;
        if !lg.loss.is_finite() || lg.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss {
                iteration: self.iteration,
                last_checkpoint: Box::new(self.checkpoint()),
            });
        }
        let before = self.potential.clone();
        adam_step(
            self.potential.params_mut(),
            &lg.grad,
            &mut self.adam,
            self.config.learning_rate,
            self.config.adam_betas,
            self.config.adam_eps,
        )?;
        if self.potential.params().iter().any(|p| !p.is_finite()) {
            self.potential = before;
            return Err(Error::NonFiniteLoss {
                iteration: self.iteration,
                last_checkpoint: Box::new(self.checkpoint()),
            });
        }
        self.iteration += 1;
        self.trace.push(TracePoint { iteration: self.iteration, loss: lg.loss });
        Ok(lg.loss)
    }

    /// Runs the remaining iterations, handing periodic checkpoints to `on_checkpoint`.
    pub fn run<F: FnMut(&Checkpoint)>(mut self, mut on_checkpoint: F) -> Result<TrainOutcome> {
        while self.iteration < self.config.n_iters {
            self.step()?;
            let every = self.config.checkpoint_every;
            if every > 0 && self.iteration % every == 0 {
                on_checkpoint(&self.checkpoint());
            }
        }
        Ok(TrainOutcome { checkpoint: self.checkpoint(), potential: self.potential, trace: self.trace })
    }
}

/// Trains from scratch with the given coupling.
pub fn train(config: TrainConfig, sampler: CouplingSampler) -> Result<TrainOutcome> {
    Trainer::new(config, sampler)?.run(|_| {})
}
