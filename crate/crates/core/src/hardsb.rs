//! Sampling-based estimators for a generic Schrödinger potential `φ`.
//!
//! They need only `log φ` and its gradients, so they apply to any potential;
//! on a Gaussian mixture they cross-check the closed forms.

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::math::{fill_normal, logsumexp, softmax_in_place};
use crate::potential::{check_time, Derived, GaussianMixturePotential};
use crate::samples::Samples;
use crate::trainer::BridgeBatch;

/// A Schrödinger potential given through `log φ` and its gradients.
pub trait PotentialFn {
    fn dim(&self) -> usize;

    fn log_phi(&self, x: &[f64]) -> Result<f64>;

    fn grad_log_phi(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Gradient of `log φ` w.r.t. its parameters, when it has any.
    fn grad_params_log_phi(&self, _x: &[f64]) -> Option<Result<Vec<f64>>> {
        None
    }
}

/// `φ(x) = v(x)·exp(‖x‖²/2ε)` for a mixture `v`.
#[derive(Debug, Clone)]
pub struct MixturePhi {
    potential: GaussianMixturePotential,
    derived: Derived,
}

pub fn phi_from_mixture(v: GaussianMixturePotential) -> MixturePhi {
    let derived = v.derived();
    MixturePhi { potential: v, derived }
}

impl MixturePhi {
    pub fn potential(&self) -> &GaussianMixturePotential {
        &self.potential
    }
}

impl PotentialFn for MixturePhi {
    fn dim(&self) -> usize {
        self.potential.dim()
    }

    fn log_phi(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let sq: f64 = x.iter().map(|a| a * a).sum();
        let log_v = logsumexp(&self.potential.log_v_terms(&self.derived, x));
        Ok(log_v + 0.5 * sq / self.potential.eps())
    }

    fn grad_log_phi(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let eps = self.potential.eps();
        let mut g = self.potential.grad_log_v_with(&self.derived, x);
        g.iter_mut().zip(x).for_each(|(gi, xi)| *gi += xi / eps);
        Ok(g)
    }

    fn grad_params_log_phi(&self, x: &[f64]) -> Option<Result<Vec<f64>>> {
        Some(self.potential.grad_params_log_v(x))
    }
}

/// `φ ≡ exp(log_value)`: the potential of the Wiener process itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantPhi {
    pub dim: usize,
    pub log_value: f64,
}

impl PotentialFn for ConstantPhi {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_phi(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        Ok(self.log_value)
    }

    fn grad_log_phi(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        Ok(vec![0.0; self.dim])
    }

    fn grad_params_log_phi(&self, x: &[f64]) -> Option<Result<Vec<f64>>> {
        Some(check_dim(self.dim, x.len()).map(|_| vec![1.0]))
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument("eps must be positive".into()))
    }
}

/// Self-normalised estimate of `ε∇ₓ log E_z[φ(x + √((1−t)ε) z)]`.
///
/// Numerator and denominator share the same `n` draws, taken as antithetic
/// pairs `±z`; weights are formed in log space so `φ` may span any range.
pub fn mc_drift<P, R>(phi: &P, x: &[f64], t: f64, eps: f64, n: usize, rng: &mut R) -> Result<Vec<f64>>
where
    P: PotentialFn + ?Sized,
    R: Rng + ?Sized,
{
    check_time(t)?;
    check_eps(eps)?;
    check_dim(phi.dim(), x.len())?;
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let d = x.len();
    let sd = ((1.0 - t) * eps).sqrt();
    let mut z = vec![0.0; d];
    let mut xp = vec![0.0; d];
    let mut log_w = Vec::with_capacity(n);
    let mut grads = Vec::with_capacity(n * d);
    for i in 0..n {
        if i % 2 == 0 {
            fill_normal(rng, &mut z);
        } else {
            z.iter_mut().for_each(|v| *v = -*v);
        }
        for j in 0..d {
            xp[j] = x[j] + sd * z[j];
        }
        log_w.push(phi.log_phi(&xp)?);
        grads.extend(phi.grad_log_phi(&xp)?);
    }
    let lse = softmax_in_place(&mut log_w);
    if !lse.is_finite() || log_w.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite(
            "potential weights underflowed for every draw; increase n or rescale the potential".into(),
        ));
    }
    let mut g = vec![0.0; d];
    for (w, gr) in log_w.iter().zip(grads.chunks(d)) {
        g.iter_mut().zip(gr).for_each(|(a, b)| *a += w * b);
    }
    g.iter_mut().for_each(|a| *a *= eps);
    Ok(g)
}

/// Langevin settings for the MCMC estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UlaConfig {
    pub n_steps: usize,
    pub step_size: f64,
    pub n_chains: usize,
}

impl Default for UlaConfig {
    fn default() -> Self {
        Self { n_steps: 50, step_size: 1e-4, n_chains: 100 }
    }
}

/// Unadjusted Langevin chains all started at `x_init`; returns final states.
pub fn ula_sample<G, R>(
    mut grad_log_density: G,
    x_init: &[f64],
    n_steps: usize,
    step_size: f64,
    n_chains: usize,
    rng: &mut R,
) -> Result<Samples>
where
    G: FnMut(&[f64]) -> Result<Vec<f64>>,
    R: Rng + ?Sized,
{
    if !(step_size > 0.0 && step_size.is_finite()) {
        return Err(Error::InvalidArgument("step_size must be positive".into()));
    }
    if n_chains == 0 {
        return Err(Error::InvalidArgument("n_chains must be at least 1".into()));
    }
    let d = x_init.len();
    let noise = (2.0 * step_size).sqrt();
    let mut out = Samples::zeros(n_chains, d);
    let mut z = vec![0.0; d];
    for c in 0..n_chains {
        let x = out.row_mut(c);
        x.copy_from_slice(x_init);
        for step in 0..n_steps {
            let g = grad_log_density(x)?;
            check_dim(d, g.len())?;
            fill_normal(rng, &mut z);
            for j in 0..d {
                x[j] += step_size * g[j] + noise * z[j];
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("Langevin state at step {step}")));
            }
        }
    }
    Ok(out)
}

/// ULA draws from `p(x′|x_t) ∝ exp(−‖x′ − x_t‖²/(2ε(1−t))) φ(x′)`.
pub fn sample_posterior<P, R>(phi: &P, x_t: &[f64], t: f64, eps: f64, cfg: &UlaConfig, rng: &mut R) -> Result<Samples>
where
    P: PotentialFn + ?Sized,
    R: Rng + ?Sized,
{
    check_time(t)?;
    check_eps(eps)?;
    check_dim(phi.dim(), x_t.len())?;
    let prec = 1.0 / (eps * (1.0 - t));
    let grad = |x: &[f64]| {
        let mut g = phi.grad_log_phi(x)?;
        for ((gi, xi), ci) in g.iter_mut().zip(x).zip(x_t) {
            *gi -= prec * (xi - ci);
        }
        Ok(g)
    };
    ula_sample(grad, x_t, cfg.n_steps, cfg.step_size, cfg.n_chains, rng)
}

/// `(E[x′|x_t] − x_t)/(1 − t)` with the expectation from ULA chains started at `x_t`.
pub fn mcmc_drift<P, R>(phi: &P, x_t: &[f64], t: f64, eps: f64, cfg: &UlaConfig, rng: &mut R) -> Result<Vec<f64>>
where
    P: PotentialFn + ?Sized,
    R: Rng + ?Sized,
{
    let draws = sample_posterior(phi, x_t, t, eps, cfg, rng)?;
    let u = 1.0 - t;
    Ok(draws.mean().iter().zip(x_t).map(|(m, x)| (m - x) / u).collect())
}

/// Sampling estimate of `∇_θ` of `(1/2ε)·mean‖g_θ − (x₁ − x_t)/(1−t)‖²`.
///
/// Uses `∇_θ E[x′] = Cov(x′, ∇_θ log φ(x′))`; the drift and the covariance
/// come from independent chain sets.
pub fn mcmc_loss_grad<P, R>(phi: &P, batch: &BridgeBatch, eps: f64, cfg: &UlaConfig, rng: &mut R) -> Result<Vec<f64>>
where
    P: PotentialFn + ?Sized,
    R: Rng + ?Sized,
{
    if batch.is_empty() {
        return Err(Error::Empty("bridge batch"));
    }
    check_dim(phi.dim(), batch.xts.dim())?;
    let d = phi.dim();
    let mut total: Option<Vec<f64>> = None;
    for i in 0..batch.len() {
        let (x_t, t) = (batch.xts.row(i), batch.ts[i]);
        let u = 1.0 - t;
        let g = mcmc_drift(phi, x_t, t, eps, cfg, rng)?;
        let resid: Vec<f64> = g.iter().zip(batch.target(i)).map(|(a, b)| a - b).collect();

        let draws = sample_posterior(phi, x_t, t, eps, cfg, rng)?;
        let mut pgrads = Vec::with_capacity(draws.len());
        for x in draws.rows() {
            let pg = phi
                .grad_params_log_phi(x)
                .ok_or_else(|| Error::InvalidArgument("potential has no parameter gradient".into()))??;
            pgrads.push(pg);
        }
        let n_p = pgrads[0].len();
        let n = draws.len() as f64;
        let x_mean = draws.mean();
        let mut p_mean = vec![0.0; n_p];
        for pg in &pgrads {
            p_mean.iter_mut().zip(pg).for_each(|(a, b)| *a += b / n);
        }
        // Σ_d resid_d · Cov(x′_d, ∇θ log φ) / u, scaled by 1/ε.
        let acc = total.get_or_insert_with(|| vec![0.0; n_p]);
        let scale = 1.0 / (eps * u * n * batch.len() as f64);
        for (x, pg) in draws.rows().zip(&pgrads) {
            let proj: f64 = (0..d).map(|j| resid[j] * (x[j] - x_mean[j])).sum();
            for p in 0..n_p {
                acc[p] += scale * proj * (pg[p] - p_mean[p]);
            }
        }
    }
    Ok(total.expect("non-empty batch"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::processes::PairBatch;
    use rand_distr::StandardNormal;

    fn mixture(seed: u64, d: usize, k: usize, eps: f64) -> GaussianMixturePotential {
        let mut rng = crate::rng_from_seed(seed);
        let w: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m: Vec<f64> = (0..k * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let l: Vec<f64> = (0..k * d).map(|_| rng.random_range(-0.5..0.3)).collect();
        GaussianMixturePotential::from_parts(eps, d, &w, &m, &l).unwrap()
    }

    #[test]
    fn wiener_mixture_gives_constant_phi() {
        let eps = 0.8;
        let phi = phi_from_mixture(GaussianMixturePotential::from_parts(eps, 2, &[0.0], &[0.0, 0.0], &[0.0, 0.0]).unwrap());
        let c = phi.log_phi(&[0.0, 0.0]).unwrap();
        for x in [[1.0, 2.0], [-3.0, 0.5]] {
            assert!((phi.log_phi(&x).unwrap() - c).abs() < 1e-12);
            assert!(phi.grad_log_phi(&x).unwrap().iter().all(|g| g.abs() < 1e-12));
        }
        // log N(0 | 0, εI) in two dimensions.
        assert!((c + (2.0 * std::f64::consts::PI * eps).ln()).abs() < 1e-12);
    }

    #[test]
    fn phi_gradient_matches_finite_differences() {
        let phi = phi_from_mixture(mixture(1, 3, 4, 0.6));
        let x = [0.2, -0.5, 0.9];
        let g = phi.grad_log_phi(&x).unwrap();
        let h = 1e-6;
        for j in 0..3 {
            let (mut a, mut b) = (x, x);
            a[j] += h;
            b[j] -= h;
            let fd = (phi.log_phi(&a).unwrap() - phi.log_phi(&b).unwrap()) / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-6 * g[j].abs().max(1.0));
        }
    }

    #[test]
    fn mc_drift_constant_phi_is_zero() {
        let phi = ConstantPhi { dim: 3, log_value: 5.0 };
        let mut rng = crate::rng_from_seed(0);
        for n in [1, 10, 100] {
            assert_eq!(mc_drift(&phi, &[1.0, 2.0, 3.0], 0.3, 1.0, n, &mut rng).unwrap(), vec![0.0; 3]);
        }
    }

    #[test]
    fn mc_drift_matches_closed_form() {
        for seed in 0..4 {
            let d = 1 + seed as usize;
            let v = mixture(seed, d, 3, 1.0);
            let phi = phi_from_mixture(v.clone());
            let x: Vec<f64> = (0..d).map(|j| 0.3 * j as f64 - 0.2).collect();
            let t = 0.2 * seed as f64;
            let exact = v.drift(&x, t).unwrap();
            let est = mc_drift(&phi, &x, t, 1.0, 100_000, &mut crate::rng_from_seed(seed + 10)).unwrap();
            let err = crate::math::norm(&exact.iter().zip(&est).map(|(a, b)| a - b).collect::<Vec<_>>());
            assert!(err < 0.01 * crate::math::norm(&exact).max(0.1), "seed {seed}: {est:?} vs {exact:?}");
        }
    }

    #[test]
    fn mc_drift_is_scale_invariant() {
        struct Shifted(MixturePhi, f64);
        impl PotentialFn for Shifted {
            fn dim(&self) -> usize {
                self.0.dim()
            }
            fn log_phi(&self, x: &[f64]) -> Result<f64> {
                Ok(self.0.log_phi(x)? + self.1)
            }
            fn grad_log_phi(&self, x: &[f64]) -> Result<Vec<f64>> {
                self.0.grad_log_phi(x)
            }
        }
        let phi = phi_from_mixture(mixture(2, 2, 3, 0.5));
        let a = mc_drift(&phi, &[0.1, 0.2], 0.5, 0.5, 500, &mut crate::rng_from_seed(1)).unwrap();
        let b = mc_drift(&Shifted(phi, 700.0), &[0.1, 0.2], 0.5, 0.5, 500, &mut crate::rng_from_seed(1)).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn mc_drift_variance_shrinks_with_n() {
        let v = mixture(3, 2, 3, 1.0);
        let phi = phi_from_mixture(v);
        let spread = |n: usize| {
            let runs: Vec<f64> = (0..40)
                .map(|s| mc_drift(&phi, &[0.3, -0.1], 0.3, 1.0, n, &mut crate::rng_from_seed(100 + s)).unwrap()[0])
                .collect();
            let m = runs.iter().sum::<f64>() / runs.len() as f64;
            runs.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / (runs.len() - 1) as f64
        };
        let ratio = spread(1000) / spread(10_000);
        assert!((4.0..25.0).contains(&ratio), "variance ratio {ratio}");
    }

    #[test]
    fn ula_standard_normal_variance() {
        let mut rng = crate::rng_from_seed(4);
        let s = ula_sample(|x: &[f64]| Ok(vec![-x[0]]), &[0.0], 5000, 1e-3, 10_000, &mut rng).unwrap();
        let var = s.covariance()[0];
        // Stationary variance of ULA on N(0,1) is 1/(1 − η/2).
        assert!((var - 1.0 / (1.0 - 5e-4)).abs() < 0.05, "{var}");
    }

    #[test]
    fn ula_bias_grows_with_step_size() {
        // Exact stationary variance for the linear recursion: 1/(1 − η/2).
        let bias = |eta: f64| 1.0 / (1.0 - eta / 2.0) - 1.0;
        let mut rng = crate::rng_from_seed(8);
        let measured: Vec<f64> = [1e-1, 1e-2]
            .iter()
            .map(|&eta| {
                let s = ula_sample(|x: &[f64]| Ok(vec![-x[0]]), &[0.0], (20.0 / eta) as usize, eta, 20_000, &mut rng).unwrap();
                s.covariance()[0] - 1.0
            })
            .collect();
        assert!(measured[0] > measured[1]);
        assert!(bias(1e-2) > bias(1e-3) && bias(1e-3) > bias(1e-4));
    }

    #[test]
    fn ula_zero_gradient_is_random_walk_and_deterministic() {
        let run = |seed| ula_sample(|_x: &[f64]| Ok(vec![0.0, 0.0]), &[1.0, -1.0], 100, 0.01, 4000, &mut crate::rng_from_seed(seed)).unwrap();
        let s = run(5);
        let c = s.covariance();
        assert!((c[0] - 2.0).abs() < 0.15 && (c[3] - 2.0).abs() < 0.15);
        assert_eq!(s, run(5));
        assert!(ula_sample(|_x: &[f64]| Ok(vec![0.0]), &[0.0], 1, 0.0, 1, &mut crate::rng_from_seed(0)).is_err());
    }

    #[test]
    fn ula_reports_divergence_step() {
        let err = ula_sample(|x: &[f64]| Ok(vec![x[0] * 1e200]), &[1.0], 10, 1.0, 1, &mut crate::rng_from_seed(0)).unwrap_err();
        assert!(err.to_string().contains("step 1"), "{err}");
    }

    #[test]
    fn mcmc_drift_constant_phi_is_near_zero() {
        let phi = ConstantPhi { dim: 2, log_value: 0.0 };
        let (eps, t) = (1.0, 0.5);
        let g = mcmc_drift(&phi, &[0.4, -0.3], t, eps, &UlaConfig::default(), &mut crate::rng_from_seed(6)).unwrap();
        let scale = eps / (1.0 - t);
        assert!(g.iter().all(|x| x.abs() < 0.02 * scale), "{g:?}");
    }

    fn rel_err(a: &[f64], exact: &[f64]) -> f64 {
        crate::math::norm(&a.iter().zip(exact).map(|(p, q)| p - q).collect::<Vec<_>>()) / crate::math::norm(exact)
    }

    #[test]
    fn mcmc_drift_matches_closed_form_at_small_eps() {
        // Small ε makes the posterior tight enough for 50 steps at η = 10⁻⁴.
        let eps = 5e-4;
        let v = GaussianMixturePotential::from_parts(eps, 2, &[0.0, 0.3], &[0.8, -0.6, 0.81, -0.59], &[0.1, -0.2, 0.0, -0.1])
            .unwrap();
        let (x, t) = ([0.3, 0.5], 0.4);
        let exact = v.drift(&x, t).unwrap();
        let mcmc = mcmc_drift(&phi_from_mixture(v), &x, t, eps, &UlaConfig::default(), &mut crate::rng_from_seed(7)).unwrap();
        assert!(rel_err(&mcmc, &exact) < 0.02, "{mcmc:?} vs {exact:?}");
    }

    #[test]
    fn mcmc_and_mc_agree_with_closed_form() {
        let eps = 0.5;
        let v = mixture(21, 2, 3, eps);
        let phi = phi_from_mixture(v.clone());
        let (x, t) = ([1.5, -1.5], 0.5);
        let exact = v.drift(&x, t).unwrap();
        let cfg = UlaConfig { n_steps: 800, step_size: 2.5e-3, n_chains: 8000 };
        let mcmc = mcmc_drift(&phi, &x, t, eps, &cfg, &mut crate::rng_from_seed(7)).unwrap();
        let mc = mc_drift(&phi, &x, t, eps, 100_000, &mut crate::rng_from_seed(8)).unwrap();
        assert!(rel_err(&mc, &exact) < 0.01, "{mc:?} vs {exact:?}");
        assert!(rel_err(&mcmc, &exact) < 0.03, "{mcmc:?} vs {exact:?}");
        assert!(rel_err(&mcmc, &mc) < 0.03, "{mcmc:?} vs {mc:?}");
    }

    fn probe_batch(seed: u64, n: usize, eps: f64) -> BridgeBatch {
        let mut rng = crate::rng_from_seed(seed);
        let x0: Vec<f64> = (0..2 * n).map(|_| rng.sample(StandardNormal)).collect();
        let x1: Vec<f64> = (0..2 * n).map(|_| 0.5 + rng.sample::<f64, _>(StandardNormal)).collect();
        let pairs = PairBatch::new(Samples::new(2, x0).unwrap(), Samples::new(2, x1).unwrap()).unwrap();
        crate::trainer::sample_bridge_batch(pairs, 0.9, eps, &mut rng)
    }

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        crate::math::dot(a, b) / (crate::math::norm(a) * crate::math::norm(b))
    }

    #[test]
    fn mcmc_loss_grad_aligns_with_trainer_gradient() {
        let eps = 1.0;
        let v = mixture(11, 2, 3, eps);
        let batch = probe_batch(12, 6, eps);
        let exact = crate::trainer::loss_gradient(&v, &batch, 0.9).unwrap().grad;
        let cfg = UlaConfig { n_steps: 600, step_size: 5e-3, n_chains: 10_000 };
        let est = mcmc_loss_grad(&phi_from_mixture(v), &batch, eps, &cfg, &mut crate::rng_from_seed(13)).unwrap();
        let c = cosine(&exact, &est);
        assert!(c > 0.95, "cosine {c}");
    }

    #[test]
    fn mcmc_loss_grad_ignores_global_scale() {
        let batch = probe_batch(14, 4, 1.0);
        let cfg = UlaConfig { n_steps: 100, step_size: 1e-2, n_chains: 200 };
        let g = mcmc_loss_grad(&ConstantPhi { dim: 2, log_value: 3.0 }, &batch, 1.0, &cfg, &mut crate::rng_from_seed(1)).unwrap();
        assert!(g[0].abs() < 1e-12, "{g:?}");
    }

    #[test]
    fn mcmc_loss_grad_requires_parameter_hook() {
        struct NoParams;
        impl PotentialFn for NoParams {
            fn dim(&self) -> usize {
                2
            }
            fn log_phi(&self, _x: &[f64]) -> Result<f64> {
                Ok(0.0)
            }
            fn grad_log_phi(&self, _x: &[f64]) -> Result<Vec<f64>> {
                Ok(vec![0.0, 0.0])
            }
        }
        let batch = probe_batch(15, 2, 1.0);
        assert!(mcmc_loss_grad(&NoParams, &batch, 1.0, &UlaConfig::default(), &mut crate::rng_from_seed(0)).is_err());
    }

    #[test]
    fn two_stage_inference_refines_sde_endpoints() {
        // SDE proposal, then Langevin on log π_v(x₁|x₀) = ⟨x₀, x₁⟩/ε + log v(x₁) + const.
        let eps = 0.5;
        let v = GaussianMixturePotential::from_parts(eps, 2, &[0.0], &[1.0, -0.5], &[0.2, -0.3]).unwrap();
        let x0 = [0.4, 0.1];
        let starts = Samples::new(2, [x0; 2000].concat()).unwrap();
        let mut rng = crate::rng_from_seed(20);
        let proposal = crate::processes::euler_maruyama_endpoints(|x, t| v.drift(x, t), &starts, eps, 5, &mut rng).unwrap();
        let mut refined = Samples::zeros(0, 2);
        for x in proposal.rows() {
            let grad = |y: &[f64]| {
                let mut g = v.grad_log_v(y)?;
                g.iter_mut().zip(&x0).for_each(|(gi, a)| *gi += a / eps);
                Ok(g)
            };
            let s = ula_sample(grad, x, 300, 5e-3, 1, &mut rng).unwrap();
            refined.push(s.row(0)).unwrap();
        }
        let plan = v.conditional_plan(&x0).unwrap();
        let (m, c) = (refined.mean(), refined.covariance());
        let (pm, pc) = (plan.mean(), plan.covariance());
        for j in 0..2 {
            assert!((m[j] - pm[j]).abs() < 0.05, "{m:?} vs {pm:?}");
            assert!((c[j * 3] / pc[j * 3] - 1.0).abs() < 0.1, "{c:?} vs {pc:?}");
        }
    }
}
