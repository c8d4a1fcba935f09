//! Synthetic 2-D and Gaussian point clouds.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::samples::Samples;

/// Noisy 2-D Swiss roll, scaled to roughly unit spread.
pub fn swiss_roll<R: Rng + ?Sized>(n: usize, noise: f64, rng: &mut R) -> Samples {
    let mut data = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let t = 1.5 * std::f64::consts::PI * (1.0 + 2.0 * rng.random::<f64>());
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        data.push((t * t.cos() + noise * a) / 7.5);
        data.push((t * t.sin() + noise * b) / 7.5);
    }
    Samples::new(2, data).expect("even length")
}

/// Isotropic Gaussian `N(mean, std² I)`.
pub fn gaussian<R: Rng + ?Sized>(n: usize, mean: &[f64], std: f64, rng: &mut R) -> Result<Samples> {
    if mean.is_empty() {
        return Err(Error::InvalidArgument("mean must be non-empty".into()));
    }
    if !(std >= 0.0 && std.is_finite()) {
        return Err(Error::InvalidArgument("std must be non-negative".into()));
    }
    let d = mean.len();
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        for m in mean {
            data.push(m + std * rng.sample::<f64, _>(StandardNormal));
        }
    }
    Samples::new(d, data)
}

/// Equal mixture of eight Gaussians on a circle of the given radius.
pub fn eight_gaussians<R: Rng + ?Sized>(n: usize, radius: f64, std: f64, rng: &mut R) -> Samples {
    let mut data = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let k = rng.random_range(0..8) as f64;
        let angle = k * std::f64::consts::FRAC_PI_4;
        data.push(radius * angle.cos() + std * rng.sample::<f64, _>(StandardNormal));
        data.push(radius * angle.sin() + std * rng.sample::<f64, _>(StandardNormal));
    }
    Samples::new(2, data).expect("even length")
}
