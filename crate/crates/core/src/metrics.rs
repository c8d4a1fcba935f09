//! Sample-based evaluation: Bures–Wasserstein UVP, its conditional variant,
//! energy distance, and path-space KL between two drifts.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::math::{fill_normal, trapezoid};
use crate::oracle::sqrtm_psd;
use crate::samples::Samples;

const EIGEN_FLOOR: f64 = 1e-12;
const SINGULAR_JITTER: f64 = 1e-6;

/// Flat result of one metric evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub name: String,
    pub value: f64,
    pub n_samples: usize,
    pub details: Vec<(String, String)>,
    pub curve: Option<MetricCurve>,
}

/// Per-time values of a dynamic metric.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricCurve {
    pub ts: Vec<f64>,
    pub columns: Vec<(String, Vec<f64>)>,
}

impl MetricReport {
    pub fn new(name: impl Into<String>, value: f64, n_samples: usize) -> Self {
        Self { name: name.into(), value, n_samples, details: Vec::new(), curve: None }
    }

    pub fn with_detail(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.details.push((key.into(), value.to_string()));
        self
    }

    /// `key=value` lines.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "metric={}", self.name);
        let _ = writeln!(s, "value={}", self.value);
        let _ = writeln!(s, "n_samples={}", self.n_samples);
        for (k, v) in &self.details {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }
}

fn to_matrix(d: usize, row_major: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(d, d, row_major)
}

/// Squared Bures–Wasserstein distance between two Gaussians.
pub fn bures_wasserstein_sq(ma: &[f64], ca: &DMatrix<f64>, mb: &[f64], cb: &DMatrix<f64>) -> f64 {
    let mean_term: f64 = ma.iter().zip(mb).map(|(a, b)| (a - b) * (a - b)).sum();
    let sb = sqrtm_psd(cb, EIGEN_FLOOR);
    let cross = sqrtm_psd(&(&sb * ca * &sb), EIGEN_FLOOR);
    (mean_term + ca.trace() + cb.trace() - 2.0 * cross.trace()).max(0.0)
}

/// `100 · BW₂²(a, b) / (½ tr C_b)` from moments; covariances row-major.
pub fn bw_uvp_moments(ma: &[f64], ca: &[f64], mb: &[f64], cb: &[f64]) -> Result<f64> {
    let d = ma.len();
    check_dim(d, mb.len())?;
    check_dim(d * d, ca.len())?;
    check_dim(d * d, cb.len())?;
    let (ca, cb) = (to_matrix(d, ca), to_matrix(d, cb));
    let var_b = cb.trace();
    if !(var_b > 0.0) {
        return Err(Error::InvalidArgument("reference set has zero variance".into()));
    }
    Ok(100.0 * bures_wasserstein_sq(ma, &ca, mb, &cb) / (0.5 * var_b))
}

fn fitted_covariance(s: &Samples, which: &str) -> DMatrix<f64> {
    let d = s.dim();
    let mut c = to_matrix(d, &s.covariance());
    if c.clone().cholesky().is_none() {
        log::warn!("{which} covariance is singular; adding {SINGULAR_JITTER}·I");
        c += DMatrix::identity(d, d) * SINGULAR_JITTER;
    }
    c
}

/// BW₂²-UVP between Gaussian fits of `a` (model) and `b` (reference), in percent.
pub fn bw_uvp(a: &Samples, b: &Samples) -> Result<f64> {
    check_dim(b.dim(), a.dim())?;
    let d = a.dim();
    if a.len() < d + 1 || b.len() < d + 1 {
        return Err(Error::InvalidArgument(format!("need at least {} samples per side", d + 1)));
    }
    let (ca, cb) = (fitted_covariance(a, "model"), fitted_covariance(b, "reference"));
    let var_b = cb.trace();
    if !(var_b > 0.0) {
        return Err(Error::InvalidArgument("reference set has zero variance".into()));
    }
    Ok(100.0 * bures_wasserstein_sq(&a.mean(), &ca, &b.mean(), &cb) / (0.5 * var_b))
}

/// Mean over probes of [`bw_uvp`] between model and reference conditional draws.
pub fn cbw_uvp<M, O, R>(
    mut model: M,
    mut reference: O,
    probes: &Samples,
    n_per_x0: usize,
    rng: &mut R,
) -> Result<f64>
where
    M: FnMut(&[f64], usize, &mut R) -> Result<Samples>,
    O: FnMut(&[f64], usize, &mut R) -> Result<Samples>,
    R: Rng + ?Sized,
{
    if probes.is_empty() {
        return Err(Error::Empty("probe set"));
    }
    let mut total = 0.0;
    for x0 in probes.rows() {
        let a = model(x0, n_per_x0, rng)?;
        let b = reference(x0, n_per_x0, rng)?;
        total += bw_uvp(&a, &b)?;
    }
    Ok(total / probes.len() as f64)
}

/// Conditional mean and row-major covariance of `x₁ | x₀`.
pub type ConditionalMoments = (Vec<f64>, Vec<f64>);

/// [`cbw_uvp`] from exact conditional moments instead of draws.
pub fn cbw_uvp_moments<M, O>(mut model: M, mut reference: O, probes: &Samples) -> Result<f64>
where
    M: FnMut(&[f64]) -> Result<ConditionalMoments>,
    O: FnMut(&[f64]) -> Result<ConditionalMoments>,
{
    if probes.is_empty() {
        return Err(Error::Empty("probe set"));
    }
    let mut total = 0.0;
    for x0 in probes.rows() {
        let (ma, ca) = model(x0)?;
        let (mb, cb) = reference(x0)?;
        total += bw_uvp_moments(&ma, &ca, &mb, &cb)?;
    }
    Ok(total / probes.len() as f64)
}

fn mean_cross_distance(a: &Samples, b: &Samples) -> f64 {
    let sum: f64 = a.rows().map(|x| b.rows().map(|y| crate::math::sq_dist(x, y).sqrt()).sum::<f64>()).sum();
    sum / (a.len() * b.len()) as f64
}

/// V-statistic `2E‖A−B‖ − E‖A−A′‖ − E‖B−B′‖`.
pub fn energy_distance(a: &Samples, b: &Samples) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("sample set"));
    }
    check_dim(a.dim(), b.dim())?;
    Ok(2.0 * mean_cross_distance(a, b) - mean_cross_distance(a, a) - mean_cross_distance(b, b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PermutationTest {
    pub statistic: f64,
    /// 95th percentile of the permutation null.
    pub threshold: f64,
    pub p_value: f64,
    pub n_permutations: usize,
}

impl PermutationTest {
    /// True when the observed statistic does not exceed the null threshold.
    pub fn passes(&self) -> bool {
        self.statistic <= self.threshold
    }
}

/// Condensed pairwise distances of the pooled sample; index `(i, j)` with `i < j`.
struct PooledDistances {
    n: usize,
    d: Vec<f64>,
}

impl PooledDistances {
    fn new(pool: &Samples) -> Self {
        let n = pool.len();
        let mut d = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            let xi = pool.row(i);
            for j in i + 1..n {
                d.push(crate::math::sq_dist(xi, pool.row(j)).sqrt());
            }
        }
        Self { n, d }
    }

    /// Energy statistic for the split marked by `in_a`.
    fn statistic(&self, in_a: &[bool], total: f64) -> f64 {
        let (mut s_aa, mut s_bb) = (0.0, 0.0);
        let mut idx = 0;
        for i in 0..self.n {
            let len = self.n - i - 1;
            let row = &self.d[idx..idx + len];
            idx += len;
            let ai = in_a[i];
            for (k, &dist) in row.iter().enumerate() {
                let aj = in_a[i + 1 + k];
                if ai && aj {
                    s_aa += dist;
                } else if !ai && !aj {
                    s_bb += dist;
                }
            }
        }
        let s_ab = total - s_aa - s_bb;
        let na = in_a.iter().filter(|&&x| x).count() as f64;
        let nb = self.n as f64 - na;
        2.0 * s_ab / (na * nb) - 2.0 * s_aa / (na * na) - 2.0 * s_bb / (nb * nb)
    }
}

/// Two-sample permutation test on the energy statistic.
pub fn energy_permutation_test<R: Rng + ?Sized>(
    a: &Samples,
    b: &Samples,
    n_permutations: usize,
    rng: &mut R,
) -> Result<PermutationTest> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("sample set"));
    }
    check_dim(a.dim(), b.dim())?;
    if n_permutations == 0 {
        return Err(Error::InvalidArgument("n_permutations must be positive".into()));
    }
    let mut pool = a.clone();
    for r in b.rows() {
        pool.push(r)?;
    }
    let dist = PooledDistances::new(&pool);
    let total: f64 = dist.d.iter().sum();
    let mut labels: Vec<bool> = (0..pool.len()).map(|i| i < a.len()).collect();
    let statistic = dist.statistic(&labels, total);
    let perms: Vec<Vec<bool>> = (0..n_permutations)
        .map(|_| {
            labels.shuffle(rng);
            labels.clone()
        })
        .collect();

    #[cfg(feature = "parallel")]
    let mut null: Vec<f64> = {
        use rayon::prelude::*;
        perms.par_iter().map(|l| dist.statistic(l, total)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let mut null: Vec<f64> = perms.iter().map(|l| dist.statistic(l, total)).collect();

    let exceed = null.iter().filter(|&&s| s >= statistic).count();
    null.sort_by(f64::total_cmp);
    let rank = ((0.95 * n_permutations as f64).ceil() as usize).clamp(1, n_permutations) - 1;
    Ok(PermutationTest {
        statistic,
        threshold: null[rank],
        p_value: (1 + exceed) as f64 / (1 + n_permutations) as f64,
        n_permutations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicKl {
    /// `KL(T*‖S)`: disagreement along the reference process.
    pub kl_fwd: f64,
    /// `KL(S‖T*)`: disagreement along the model process.
    pub kl_rev: f64,
    pub ts: Vec<f64>,
    pub l2_fwd: Vec<f64>,
    pub l2_rev: Vec<f64>,
}

impl DynamicKl {
    pub fn curve(&self) -> MetricCurve {
        MetricCurve {
            ts: self.ts.clone(),
            columns: vec![("l2_fwd".into(), self.l2_fwd.clone()), ("l2_rev".into(), self.l2_rev.clone())],
        }
    }
}

/// Settings for [`dynamic_kl`].
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicKlConfig {
    pub eps: f64,
    /// Increasing evaluation times within `[0, 1 − 10⁻⁴]`.
    pub t_grid: Vec<f64>,
    /// Samples per time on the reference side.
    pub n: usize,
    /// Uniform Euler–Maruyama steps on `[0, 1]` for the model side.
    pub sde_steps: usize,
}

fn mean_sq_gap<GM, GS>(g_model: &mut GM, g_star: &mut GS, xs: &Samples, t: f64) -> Result<f64>
where
    GM: FnMut(&[f64], f64) -> Result<Vec<f64>>,
    GS: FnMut(&[f64], f64) -> Result<Vec<f64>>,
{
    let mut total = 0.0;
    for x in xs.rows() {
        let (a, b) = (g_model(x, t)?, g_star(x, t)?);
        total += a.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
    }
    Ok(total / xs.len() as f64)
}

/// Path-space KL in both directions via `(1/2ε)∫ E‖g_model − g_star‖² dt`.
///
/// `sample_star(t, n, rng)` draws the reference marginal at `t`; the model
/// marginals come from Euler–Maruyama started at `x0` on the union of a
/// uniform grid and `t_grid`.
pub fn dynamic_kl<GM, GS, S, R>(
    mut g_model: GM,
    mut g_star: GS,
    mut sample_star: S,
    x0: &Samples,
    cfg: &DynamicKlConfig,
    rng: &mut R,
) -> Result<DynamicKl>
where
    GM: FnMut(&[f64], f64) -> Result<Vec<f64>>,
    GS: FnMut(&[f64], f64) -> Result<Vec<f64>>,
    S: FnMut(f64, usize, &mut R) -> Result<Samples>,
    R: Rng + ?Sized,
{
    let ts = &cfg.t_grid;
    if ts.len() < 2 || ts.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("t_grid must have two or more increasing times".into()));
    }
    if ts[0] < 0.0 || *ts.last().unwrap() > 1.0 - 1e-4 {
        return Err(Error::InvalidArgument("t_grid must lie within [0, 1 - 1e-4]".into()));
    }
    if !(cfg.eps > 0.0) || cfg.n == 0 || cfg.sde_steps == 0 {
        return Err(Error::InvalidArgument("eps, n and sde_steps must be positive".into()));
    }
    if x0.is_empty() {
        return Err(Error::Empty("model initial samples"));
    }

    let mut l2_fwd = Vec::with_capacity(ts.len());
    for &t in ts {
        let xs = sample_star(t, cfg.n, rng)?;
        l2_fwd.push(mean_sq_gap(&mut g_model, &mut g_star, &xs, t)?);
    }

    // Union grid: uniform steps plus every evaluation time, up to the last one.
    let t_end = *ts.last().unwrap();
    let mut grid: Vec<f64> = (0..=cfg.sde_steps)
        .map(|i| i as f64 / cfg.sde_steps as f64)
        .filter(|&t| t < t_end)
        .chain(ts.iter().copied())
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if grid[0] > 0.0 {
        grid.insert(0, 0.0);
    }

    let d = x0.dim();
    let mut xs = x0.clone();
    let mut l2_rev = Vec::with_capacity(ts.len());
    let mut next = 0;
    let mut z = vec![0.0; d];
    for (step, &t) in grid.iter().enumerate() {
        if next < ts.len() && (ts[next] - t).abs() < 1e-12 {
            l2_rev.push(mean_sq_gap(&mut g_model, &mut g_star, &xs, t)?);
            next += 1;
        }
        let Some(&t_next) = grid.get(step + 1) else { break };
        let h = t_next - t;
        let sd = (cfg.eps * h).sqrt();
        for i in 0..xs.len() {
            let g = g_model(xs.row(i), t)?;
            check_dim(d, g.len())?;
            fill_normal(rng, &mut z);
            let row = xs.row_mut(i);
            for j in 0..d {
                row[j] += g[j] * h + sd * z[j];
            }
        }
        if xs.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("model SDE state at step {step} (t = {t})")));
        }
    }
    debug_assert_eq!(l2_rev.len(), ts.len());

    let scale = 0.5 / cfg.eps;
    Ok(DynamicKl {
        kl_fwd: scale * trapezoid(ts, &l2_fwd),
        kl_rev: scale * trapezoid(ts, &l2_rev),
        ts: ts.clone(),
        l2_fwd,
        l2_rev,
    })
}

/// Draws from `N(mean, cov)` with `cov` row-major; used by tests and probes.
pub fn sample_gaussian<R: Rng + ?Sized>(mean: &[f64], cov: &[f64], n: usize, rng: &mut R) -> Result<Samples> {
    let d = mean.len();
    check_dim(d * d, cov.len())?;
    let l = to_matrix(d, cov)
        .cholesky()
        .ok_or_else(|| Error::NotSpd("covariance is not positive definite".into()))?
        .l();
    let m = DVector::from_column_slice(mean);
    let mut out = Samples::zeros(n, d);
    let mut z = vec![0.0; d];
    for i in 0..n {
        fill_normal(rng, &mut z);
        out.row_mut(i).copy_from_slice((&l * DVector::from_column_slice(&z) + &m).as_slice());
    }
    Ok(out)
}
