//! Gaussian-mixture adjusted Schrödinger potential
//!
//! `v(x₁) = Σ_k α_k N(x₁ | r_k, ε Σ_k)` with diagonal `Σ_k`, and every closed
//! form derived from it: the normaliser `c_v`, the conditional plan
//! `π_v(x₁|x₀) ∝ exp(⟨x₀,x₁⟩/ε) v(x₁)`, and the drift `g_v(x, t)` of the
//! Schrödinger bridge whose endpoint plan is `π_v`.
//!
//! Parameters are stored unconstrained in one flat vector laid out as
//! `[raw_weights (K) | means (K·D) | raw_log_vars (K·D)]`; `α = softmax(raw_weights)`
//! and `Σ_k[d,d] = max(exp(raw_log_vars[k,d]), 1e-8)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::math::{fill_normal, logsumexp, sample_categorical, softmax_in_place};
use crate::samples::Samples;

pub const VARIANCE_FLOOR: f64 = 1e-8;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixturePotential {
    eps: f64,
    dim: usize,
    n_components: usize,
    params: Vec<f64>,
}

/// Initialisation settings for [`GaussianMixturePotential::init`].
#[derive(Debug, Clone, Copy)]
pub struct InitConfig {
    pub dim: usize,
    pub n_components: usize,
    pub eps: f64,
    pub init_scale: f64,
    pub seed: u64,
}

/// Derived (constrained) parameters, computed once per batch of evaluations.
#[derive(Debug, Clone)]
pub(crate) struct Derived {
    pub log_alpha: Vec<f64>,
    pub alpha: Vec<f64>,
    pub var: Vec<f64>,
    /// `d var / d raw_log_var`; zero where the floor is active.
    pub dvar: Vec<f64>,
    /// `1 / (ε Σ_k[d,d])`.
    pub inv_scaled_var: Vec<f64>,
    /// `log α_k − ½ log det(2π ε Σ_k)`.
    pub log_norm: Vec<f64>,
}

/// Per-evaluation intermediates of the drift, kept for the gradient.
///
/// With `u = 1 − t` and `B_kd = t Σ_k[d,d] + u`, the diagonal of
/// `(A_k^t)⁻¹` is `ε u Σ_k[d,d] / B_kd` and `(A_k^t)⁻¹ h_k − x = u · disp_k`.
#[derive(Debug, Clone)]
pub(crate) struct DriftAux {
    pub denom: Vec<f64>,
    pub disp: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Exact mixture form of `π_v(·|x₀)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalPlanMixture {
    pub dim: usize,
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub diag_covs: Vec<f64>,
}

impl ConditionalPlanMixture {
    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Samples {
        let d = self.dim;
        let mut out = Samples::zeros(n, d);
        let mut z = vec![0.0; d];
        for i in 0..n {
            let k = sample_categorical(rng, &self.weights);
            fill_normal(rng, &mut z);
            let row = out.row_mut(i);
            for j in 0..d {
                row[j] = self.means[k * d + j] + self.diag_covs[k * d + j].sqrt() * z[j];
            }
        }
        out
    }

    /// Mean of the mixture.
    pub fn mean(&self) -> Vec<f64> {
        let d = self.dim;
        let mut m = vec![0.0; d];
        for (k, w) in self.weights.iter().enumerate() {
            for j in 0..d {
                m[j] += w * self.means[k * d + j];
            }
        }
        m
    }

    /// Covariance of the mixture (row-major `D × D`).
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dim;
        let m = self.mean();
        let mut c = vec![0.0; d * d];
        for (k, w) in self.weights.iter().enumerate() {
            let mk = &self.means[k * d..(k + 1) * d];
            for i in 0..d {
                c[i * d + i] += w * self.diag_covs[k * d + i];
                for j in 0..d {
                    c[i * d + j] += w * (mk[i] - m[i]) * (mk[j] - m[j]);
                }
            }
        }
        c
    }
}

impl GaussianMixturePotential {
    pub fn from_parts(
        eps: f64,
        dim: usize,
        raw_weights: &[f64],
        means: &[f64],
        raw_log_vars: &[f64],
    ) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
        }
        if dim == 0 {
            return Err(Error::InvalidArgument("dim must be at least 1".into()));
        }
        let k = raw_weights.len();
        if k == 0 {
            return Err(Error::InvalidArgument("need at least one component".into()));
        }
        check_dim(k * dim, means.len())?;
        check_dim(k * dim, raw_log_vars.len())?;
        let mut params = Vec::with_capacity(k * (2 * dim + 1));
        params.extend_from_slice(raw_weights);
        params.extend_from_slice(means);
        params.extend_from_slice(raw_log_vars);
        check_finite("potential parameters", &params)?;
        Ok(Self { eps, dim, n_components: k, params })
    }

    /// Uniform weights, `Σ_k = init_scale · I`, means subsampled from
    /// `target` when given, otherwise `init_scale · N(0, I)`.
    pub fn init(cfg: &InitConfig, target: Option<&Samples>) -> Result<Self> {
        if cfg.dim == 0 || cfg.n_components == 0 {
            return Err(Error::InvalidArgument(
                "dim and n_components must be at least 1".into(),
            ));
        }
        if !(cfg.init_scale > 0.0) {
            return Err(Error::InvalidArgument("init_scale must be positive".into()));
        }
        let (k, d) = (cfg.n_components, cfg.dim);
        let mut rng = crate::rng_from_seed(cfg.seed);
        let means = match target {
            Some(samples) => {
                check_dim(d, samples.dim())?;
                if samples.is_empty() {
                    return Err(Error::Empty("target samples"));
                }
                let n = samples.len();
                let mut idx = Vec::with_capacity(k);
                // Without replacement; cycles through fresh permutations when K > n.
                while idx.len() < k {
                    let take = (k - idx.len()).min(n);
                    idx.extend(rand::seq::index::sample(&mut rng, n, take).into_iter());
                }
                samples.select(&idx).into_vec()
            }
            None => {
                let mut m = vec![0.0; k * d];
                fill_normal(&mut rng, &mut m);
                m.iter_mut().for_each(|x| *x *= cfg.init_scale);
                m
            }
        };
        let raw_log_vars = vec![cfg.init_scale.ln(); k * d];
        Self::from_parts(cfg.eps, d, &vec![0.0; k], &means, &raw_log_vars)
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn raw_weights(&self) -> &[f64] {
        &self.params[..self.n_components]
    }

    pub fn means(&self) -> &[f64] {
        let k = self.n_components;
        &self.params[k..k + k * self.dim]
    }

    pub fn raw_log_vars(&self) -> &[f64] {
        let k = self.n_components;
        &self.params[k + k * self.dim..]
    }

    pub fn raw_weights_mut(&mut self) -> &mut [f64] {
        let k = self.n_components;
        &mut self.params[..k]
    }

    pub fn means_mut(&mut self) -> &mut [f64] {
        let k = self.n_components;
        let d = self.dim;
        &mut self.params[k..k + k * d]
    }

    pub fn raw_log_vars_mut(&mut self) -> &mut [f64] {
        let k = self.n_components;
        let d = self.dim;
        &mut self.params[k + k * d..]
    }

    /// Mixture weights `α = softmax(raw_weights)`.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = self.raw_weights().to_vec();
        softmax_in_place(&mut w);
        w
    }

    /// Floored diagonal variances `Σ_k[d,d]`, row-major `K × D`.
    pub fn variances(&self) -> Vec<f64> {
        self.raw_log_vars().iter().map(|l| l.exp().max(VARIANCE_FLOOR)).collect()
    }

    pub(crate) fn derived(&self) -> Derived {
        let mut alpha = self.raw_weights().to_vec();
        let lse = softmax_in_place(&mut alpha);
        let log_alpha: Vec<f64> = self.raw_weights().iter().map(|w| w - lse).collect();
        let mut var = Vec::with_capacity(self.raw_log_vars().len());
        let mut dvar = Vec::with_capacity(var.capacity());
        for l in self.raw_log_vars() {
            let e = l.exp();
            if e > VARIANCE_FLOOR {
                var.push(e);
                dvar.push(e);
            } else {
                var.push(VARIANCE_FLOOR);
                dvar.push(0.0);
            }
        }
        let d = self.dim;
        let inv_scaled_var = var.iter().map(|s| 1.0 / (self.eps * s)).collect();
        let log_norm = (0..self.n_components)
            .map(|k| {
                let log_det: f64 = var[k * d..(k + 1) * d].iter().map(|s| LN_2PI + (self.eps * s).ln()).sum();
                log_alpha[k] - 0.5 * log_det
            })
            .collect();
        Derived { log_alpha, alpha, var, dvar, inv_scaled_var, log_norm }
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        check_dim(self.dim, x.len())?;
        check_finite("input point", x)
    }

    /// `log v(x₁) = log Σ_k α_k N(x₁ | r_k, ε Σ_k)`.
    pub fn log_v(&self, x1: &[f64]) -> Result<f64> {
        self.check_point(x1)?;
        let der = self.derived();
        Ok(logsumexp(&self.log_v_terms(&der, x1)))
    }

    pub(crate) fn log_v_terms(&self, der: &Derived, x1: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let means = self.means();
        (0..self.n_components)
            .map(|k| {
                let mut quad = 0.0;
                for j in 0..d {
                    let idx = k * d + j;
                    let diff = x1[j] - means[idx];
                    quad += diff * diff * der.inv_scaled_var[idx];
                }
                der.log_norm[k] - 0.5 * quad
            })
            .collect()
    }

    /// `∇ₓ log v(x)` with precomputed parameters; `x` must have length `D`.
    pub(crate) fn grad_log_v_with(&self, der: &Derived, x: &[f64]) -> Vec<f64> {
        let mut resp = self.log_v_terms(der, x);
        softmax_in_place(&mut resp);
        let d = self.dim;
        let means = self.means();
        let mut g = vec![0.0; d];
        for (k, rk) in resp.iter().enumerate() {
            for j in 0..d {
                let idx = k * d + j;
                g[j] -= rk * (x[j] - means[idx]) * der.inv_scaled_var[idx];
            }
        }
        g
    }

    /// The drift as a closure with parameters transformed once up front.
    pub fn drift_fn(&self) -> impl Fn(&[f64], f64) -> Result<Vec<f64>> + '_ {
        let der = self.derived();
        move |x: &[f64], t: f64| {
            self.check_point(x)?;
            check_time(t)?;
            Ok(self.drift_with_aux(&der, x, t).0)
        }
    }

    /// `∇ₓ log v(x)`.
    pub fn grad_log_v(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        Ok(self.grad_log_v_with(&self.derived(), x))
    }

    /// Gradient of `log v(x)` with respect to the raw parameters (flat layout).
    pub fn grad_params_log_v(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let der = self.derived();
        let mut resp = self.log_v_terms(&der, x);
        softmax_in_place(&mut resp);
        let (k_n, d) = (self.n_components, self.dim);
        let means = self.means();
        let mut g = vec![0.0; self.params.len()];
        for k in 0..k_n {
            g[k] = resp[k] - der.alpha[k];
            for j in 0..d {
                let idx = k * d + j;
                let s = der.var[idx];
                let diff = x[j] - means[idx];
                g[k_n + idx] = resp[k] * diff / (self.eps * s);
                // ∂/∂s of −½ log s − diff²/(2εs), chained through s(raw).
                let ds = -0.5 / s + diff * diff / (2.0 * self.eps * s * s);
                g[k_n + k_n * d + idx] = resp[k] * ds * der.dvar[idx];
            }
        }
        Ok(g)
    }

    /// Unnormalised log-weights of the conditional plan components; their
    /// log-sum-exp is `log c_v(x₀)`.
    fn plan_log_weights(&self, der: &Derived, x0: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let means = self.means();
        (0..self.n_components)
            .map(|k| {
                let mut lt = der.log_alpha[k];
                for j in 0..d {
                    let idx = k * d + j;
                    lt += (x0[j] * means[idx] + 0.5 * der.var[idx] * x0[j] * x0[j]) / self.eps;
                }
                lt
            })
            .collect()
    }

    /// `log c_v(x₀) = log ∫ exp(⟨x₀,x₁⟩/ε) v(x₁) dx₁`.
    pub fn log_c(&self, x0: &[f64]) -> Result<f64> {
        self.check_point(x0)?;
        let der = self.derived();
        Ok(logsumexp(&self.plan_log_weights(&der, x0)))
    }

    pub fn conditional_plan(&self, x0: &[f64]) -> Result<ConditionalPlanMixture> {
        self.check_point(x0)?;
        let der = self.derived();
        Ok(self.conditional_plan_with(&der, x0))
    }

    fn conditional_plan_with(&self, der: &Derived, x0: &[f64]) -> ConditionalPlanMixture {
        let d = self.dim;
        let mut weights = self.plan_log_weights(der, x0);
        softmax_in_place(&mut weights);
        let mut means = self.means().to_vec();
        let mut diag_covs = der.var.clone();
        for k in 0..self.n_components {
            for j in 0..d {
                let idx = k * d + j;
                means[idx] += der.var[idx] * x0[j];
                diag_covs[idx] *= self.eps;
            }
        }
        ConditionalPlanMixture { dim: d, weights, means, diag_covs }
    }

    /// `n` draws from `π_v(·|x₀)`.
    pub fn sample_conditional<R: Rng + ?Sized>(
        &self,
        x0: &[f64],
        n: usize,
        rng: &mut R,
    ) -> Result<Samples> {
        Ok(self.conditional_plan(x0)?.sample(n, rng))
    }

    /// One endpoint draw per row of `x0`.
    pub fn sample_endpoints<R: Rng + ?Sized>(&self, x0: &Samples, rng: &mut R) -> Result<Samples> {
        check_dim(self.dim, x0.dim())?;
        x0.check_finite()?;
        let der = self.derived();
        let mut out = Samples::zeros(x0.len(), self.dim);
        for (i, row) in x0.rows().enumerate() {
            let plan = self.conditional_plan_with(&der, row);
            out.row_mut(i).copy_from_slice(plan.sample(1, rng).row(0));
        }
        Ok(out)
    }

    /// Schrödinger bridge drift `g_v(x, t)` for `t ∈ [0, 1)`.
    pub fn drift(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check_point(x)?;
        check_time(t)?;
        let der = self.derived();
        Ok(self.drift_with_aux(&der, x, t).0)
    }

    /// Drift evaluation with precomputed derived parameters; the caller
    /// guarantees `x` has length `D` and `t ∈ [0, 1)`.
    ///
    /// Uses `(A_k^t)⁻¹ h_k − x = (1−t)((Σ_k − I)x + r_k) / B_k`, so the
    /// `1/(1−t)` factor of the drift cancels analytically.
    pub(crate) fn drift_with_aux(&self, der: &Derived, x: &[f64], t: f64) -> (Vec<f64>, DriftAux) {
        let (k_n, d) = (self.n_components, self.dim);
        let u = 1.0 - t;
        let means = self.means();
        let mut denom = vec![0.0; k_n * d];
        let mut disp = vec![0.0; k_n * d];
        let mut log_terms = vec![0.0; k_n];
        for k in 0..k_n {
            let mut lt = der.log_alpha[k];
            let mut quad = 0.0;
            for j in 0..d {
                let idx = k * d + j;
                let (s, r, xj) = (der.var[idx], means[idx], x[j]);
                let b = t * s + u;
                // x²s/(uB) splits into x²/(ut) − x²/(tB); the first piece is
                // shared by all components and dropped for t ≥ ½.
                let xx = if t < 0.5 { xj * xj * s / (u * b) } else { -xj * xj / (t * b) };
                quad += xx + (2.0 * xj * r - r * r * t) / b;
                lt -= 0.5 * b.ln();
                denom[idx] = b;
                disp[idx] = ((s - 1.0) * xj + r) / b;
            }
            log_terms[k] = lt + quad / (2.0 * self.eps);
        }
        let mut weights = log_terms;
        softmax_in_place(&mut weights);
        let mut g = vec![0.0; d];
        for k in 0..k_n {
            for j in 0..d {
                g[j] += weights[k] * disp[k * d + j];
            }
        }
        (g, DriftAux { denom, disp, weights })
    }

    /// Monte-Carlo estimate of `L₀(v) = E_{p₀} log c_v − E_{p₁} log v`.
    pub fn lightsb_objective(&self, source: &Samples, target: &Samples) -> Result<f64> {
        if source.is_empty() {
            return Err(Error::Empty("source batch"));
        }
        if target.is_empty() {
            return Err(Error::Empty("target batch"));
        }
        check_dim(self.dim, source.dim())?;
        check_dim(self.dim, target.dim())?;
        source.check_finite()?;
        target.check_finite()?;
        let der = self.derived();
        let lc: f64 = source.rows().map(|x| logsumexp(&self.plan_log_weights(&der, x))).sum();
        let lv: f64 = target.rows().map(|x| logsumexp(&self.log_v_terms(&der, x))).sum();
        Ok(lc / source.len() as f64 - lv / target.len() as f64)
    }
}

pub(crate) fn check_time(t: f64) -> Result<()> {
    if (0.0..1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::OutOfDomain { t, domain: "[0, 1)" })
    }
}
