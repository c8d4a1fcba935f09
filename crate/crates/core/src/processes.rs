//! Brownian bridges, reciprocal processes and Euler–Maruyama simulation
//! under the Wiener prior `dx = g dt + √ε dW`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, check_finite, Error, Result};
use crate::samples::Samples;

/// Aligned endpoint pairs `(x₀, x₁)` drawn from some coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    pub x0: Samples,
    pub x1: Samples,
}

impl PairBatch {
    pub fn new(x0: Samples, x1: Samples) -> Result<Self> {
        check_dim(x0.dim(), x1.dim())?;
        if x0.len() != x1.len() {
            return Err(Error::InvalidArgument(format!(
                "pair sides have {} and {} rows",
                x0.len(),
                x1.len()
            )));
        }
        Ok(Self { x0, x1 })
    }

    pub fn len(&self) -> usize {
        self.x0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x0.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x0.dim()
    }
}

/// `N` trajectories observed at `L` common times.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    times: Vec<f64>,
    dim: usize,
    eps: f64,
    /// Row-major `N × L × D`.
    points: Vec<f64>,
}

impl TrajectoryBatch {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn n_trajectories(&self) -> usize {
        self.points.len() / (self.dim * self.times.len())
    }

    pub fn point(&self, traj: usize, time_idx: usize) -> &[f64] {
        let (l, d) = (self.times.len(), self.dim);
        let start = (traj * l + time_idx) * d;
        &self.points[start..start + d]
    }

    /// Keeps only the given time indices, in the order given.
    pub fn select_times(&self, idx: &[usize]) -> Result<Self> {
        let l = self.times.len();
        if idx.is_empty() || idx.iter().any(|&i| i >= l) {
            return Err(Error::InvalidArgument("time index out of range".into()));
        }
        let mut points = Vec::with_capacity(self.n_trajectories() * idx.len() * self.dim);
        for traj in 0..self.n_trajectories() {
            for &i in idx {
                points.extend_from_slice(self.point(traj, i));
            }
        }
        let times = idx.iter().map(|&i| self.times[i]).collect();
        Ok(Self { times, dim: self.dim, eps: self.eps, points })
    }

    /// Cross-section of all trajectories at one time index.
    pub fn at(&self, time_idx: usize) -> Samples {
        let mut data = Vec::with_capacity(self.n_trajectories() * self.dim);
        for i in 0..self.n_trajectories() {
            data.extend_from_slice(self.point(i, time_idx));
        }
        Samples::new(self.dim, data).expect("consistent shape")
    }
}

pub fn validate_times(times: &[f64]) -> Result<()> {
    if times.len() < 2 || times[0] != 0.0 || *times.last().unwrap() != 1.0 {
        return Err(Error::InvalidArgument("times must start at 0 and end at 1".into()));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("times must be strictly increasing".into()));
    }
    Ok(())
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")))
    }
}

/// Draw `x_t ~ N(t x₁ + (1−t) x₀, ε t(1−t) I)`. Endpoints are returned exactly.
pub fn sample_bridge_point<R: Rng + ?Sized>(
    x0: &[f64],
    x1: &[f64],
    t: f64,
    eps: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_dim(x0.len(), x1.len())?;
    check_eps(eps)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::OutOfDomain { t, domain: "[0, 1]" });
    }
    Ok(bridge_point(x0, x1, t, eps, rng))
}

pub(crate) fn bridge_point<R: Rng + ?Sized>(x0: &[f64], x1: &[f64], t: f64, eps: f64, rng: &mut R) -> Vec<f64> {
    if t == 0.0 {
        return x0.to_vec();
    }
    if t == 1.0 {
        return x1.to_vec();
    }
    let sd = (eps * t * (1.0 - t)).sqrt();
    x0.iter()
        .zip(x1)
        .map(|(a, b)| t * b + (1.0 - t) * a + sd * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Insert a point at `t_new ∈ (tl, tr)` into a bridge known at `tl` and `tr`.
pub fn refine_trajectory<R: Rng + ?Sized>(
    x_tl: &[f64],
    x_tr: &[f64],
    tl: f64,
    tr: f64,
    t_new: f64,
    eps: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_dim(x_tl.len(), x_tr.len())?;
    check_eps(eps)?;
    if !(tl < t_new && t_new < tr) {
        return Err(Error::InvalidArgument(format!(
            "refinement time {t_new} not inside ({tl}, {tr})"
        )));
    }
    let frac = (t_new - tl) / (tr - tl);
    let sd = (eps * (t_new - tl) * (tr - t_new) / (tr - tl)).sqrt();
    Ok(x_tl
        .iter()
        .zip(x_tr)
        .map(|(a, b)| a + frac * (b - a) + sd * rng.sample::<f64, _>(StandardNormal))
        .collect())
}

/// Mixture of Brownian bridges over the given pairs, observed at `times`.
/// Interior points are filled left to right, each conditioned on the
/// previous point and the right endpoint.
pub fn sample_reciprocal<R: Rng + ?Sized>(
    pairs: &PairBatch,
    times: &[f64],
    eps: f64,
    rng: &mut R,
) -> Result<TrajectoryBatch> {
    validate_times(times)?;
    check_eps(eps)?;
    let (n, l, d) = (pairs.len(), times.len(), pairs.dim());
    let mut points = Vec::with_capacity(n * l * d);
    for i in 0..n {
        let x1 = pairs.x1.row(i);
        let mut prev = pairs.x0.row(i).to_vec();
        points.extend_from_slice(&prev);
        for li in 1..l - 1 {
            prev = refine_trajectory(&prev, x1, times[li - 1], 1.0, times[li], eps, rng)?;
            points.extend_from_slice(&prev);
        }
        points.extend_from_slice(x1);
    }
    Ok(TrajectoryBatch { times: times.to_vec(), dim: d, eps, points })
}

/// Euler–Maruyama on an arbitrary increasing grid starting at 0; drift is
/// evaluated at every grid time except the last.
pub fn simulate_sde<F, R>(
    mut drift: F,
    x0: &Samples,
    eps: f64,
    grid: &[f64],
    rng: &mut R,
) -> Result<TrajectoryBatch>
where
    F: FnMut(&[f64], f64) -> Result<Vec<f64>>,
    R: Rng + ?Sized,
{
    check_eps(eps)?;
    if grid.len() < 2 || grid[0] != 0.0 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("grid must start at 0 and increase strictly".into()));
    }
    x0.check_finite()?;
    let (n, l, d) = (x0.len(), grid.len(), x0.dim());
    let mut points = vec![0.0; n * l * d];
    for i in 0..n {
        let mut x = x0.row(i).to_vec();
        points[i * l * d..i * l * d + d].copy_from_slice(&x);
        for step in 0..l - 1 {
            let (t, h) = (grid[step], grid[step + 1] - grid[step]);
            let g = drift(&x, t)?;
            check_dim(d, g.len())?;
            check_finite("drift", &g)
                .map_err(|_| Error::NonFinite(format!("drift output at step {step} (t = {t})")))?;
            let sd = (eps * h).sqrt();
            for j in 0..d {
                x[j] += g[j] * h + sd * rng.sample::<f64, _>(StandardNormal);
            }
            let start = (i * l + step + 1) * d;
            points[start..start + d].copy_from_slice(&x);
        }
    }
    Ok(TrajectoryBatch { times: grid.to_vec(), dim: d, eps, points })
}

pub fn uniform_grid(n_steps: usize) -> Vec<f64> {
    (0..=n_steps).map(|i| i as f64 / n_steps as f64).collect()
}

/// Euler–Maruyama with `n_steps` uniform steps on `[0, 1]`.
pub fn euler_maruyama<F, R>(
    drift: F,
    x0: &Samples,
    eps: f64,
    n_steps: usize,
    rng: &mut R,
) -> Result<TrajectoryBatch>
where
    F: FnMut(&[f64], f64) -> Result<Vec<f64>>,
    R: Rng + ?Sized,
{
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
    }
    simulate_sde(drift, x0, eps, &uniform_grid(n_steps), rng)
}

/// Endpoints of [`euler_maruyama`] without storing the paths.
pub fn euler_maruyama_endpoints<F, R>(
    mut drift: F,
    x0: &Samples,
    eps: f64,
    n_steps: usize,
    rng: &mut R,
) -> Result<Samples>
where
    F: FnMut(&[f64], f64) -> Result<Vec<f64>>,
    R: Rng + ?Sized,
{
    check_eps(eps)?;
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
    }
    x0.check_finite()?;
    let d = x0.dim();
    let h = 1.0 / n_steps as f64;
    let sd = (eps * h).sqrt();
    let mut out = x0.clone();
    for i in 0..out.len() {
        let x = out.row_mut(i);
        for step in 0..n_steps {
            let t = step as f64 * h;
            let g = drift(x, t)?;
            check_dim(d, g.len())?;
            check_finite("drift", &g)
                .map_err(|_| Error::NonFinite(format!("drift output at step {step} (t = {t})")))?;
            for j in 0..d {
                x[j] += g[j] * h + sd * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    Ok(out)
}
