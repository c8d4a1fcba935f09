use sbmatch::couplings::{CouplingKind, CouplingSampler};
use sbmatch::processes::{sample_reciprocal, PairBatch};
use sbmatch::trainer::{TrainConfig, Trainer};
use sbmatch::{datasets, rng_from_seed, Samples};
use wasm_bindgen::prelude::*;

const STORE: usize = 2000;

fn target_set(name: &str, rng: &mut sbmatch::Rng) -> sbmatch::Result<Samples> {
    match name {
        "swiss-roll" => Ok(datasets::swiss_roll(STORE, 0.8, rng)),
        "eight-gaussians" => Ok(datasets::eight_gaussians(STORE, 1.5, 0.1, rng)),
        "gaussian" => datasets::gaussian(STORE, &[1.0, 1.0], 0.3, rng),
        other => Err(sbmatch::Error::InvalidArgument(format!("unknown dataset '{other}'"))),
    }
}

/// Browser-independent state behind [`Demo`].
pub struct Session {
    trainer: Trainer,
    target: Samples,
    rng: sbmatch::Rng,
    loss: f64,
}

impl Session {
    pub fn new(dataset: &str, eps: f64, components: usize, seed: u64) -> sbmatch::Result<Self> {
        let mut rng = rng_from_seed(seed);
        let target = target_set(dataset, &mut rng)?;
        let source = datasets::gaussian(STORE, &[0.0, 0.0], 1.0, &mut rng)?;
        let config = TrainConfig {
            eps,
            n_components: components,
            batch_size: 128,
            learning_rate: 1e-2,
            init_scale: 0.1,
            seed,
            sampler: CouplingKind::MinibatchOt,
            ..TrainConfig::default()
        };
        let sampler = CouplingSampler::new(config.sampler, source, target.clone(), config.batch_size)?;
        let trainer = Trainer::new(config, sampler)?;
        Ok(Self { trainer, target, rng, loss: f64::NAN })
    }

    /// Runs `steps` optimisation steps and returns their mean loss.
    pub fn train(&mut self, steps: usize) -> sbmatch::Result<f64> {
        let mut total = 0.0;
        for _ in 0..steps {
            total += self.trainer.step()?;
        }
        if steps > 0 {
            self.loss = total / steps as f64;
        }
        Ok(self.loss)
    }

    pub fn iteration(&self) -> usize {
        self.trainer.iteration()
    }

    pub fn loss(&self) -> f64 {
        self.loss
    }

    pub fn target(&self) -> &[f64] {
        self.target.as_slice()
    }

    /// Trajectories from standard-normal starts, flattened as `[traj][time][x, y]`.
    pub fn trajectories(&mut self, n: usize, n_times: usize) -> sbmatch::Result<Vec<f64>> {
        if n_times < 2 {
            return Err(sbmatch::Error::InvalidArgument("need at least 2 times".into()));
        }
        let times: Vec<f64> = (0..n_times).map(|i| i as f64 / (n_times - 1) as f64).collect();
        let v = self.trainer.potential();
        let x0 = datasets::gaussian(n, &[0.0, 0.0], 1.0, &mut self.rng)?;
        let x1 = v.sample_endpoints(&x0, &mut self.rng)?;
        let traj = sample_reciprocal(&PairBatch::new(x0, x1)?, &times, v.eps(), &mut self.rng)?;
        let mut out = Vec::with_capacity(n * n_times * 2);
        for i in 0..n {
            for k in 0..n_times {
                out.extend_from_slice(traj.point(i, k));
            }
        }
        Ok(out)
    }

    /// Drift on a `side × side` grid over `[-extent, extent]²`, as `[x, y, gx, gy]` rows.
    pub fn drift_field(&self, t: f64, side: usize, extent: f64) -> sbmatch::Result<Vec<f64>> {
        let v = self.trainer.potential();
        let step = if side > 1 { 2.0 * extent / (side - 1) as f64 } else { 0.0 };
        let mut out = Vec::with_capacity(side * side * 4);
        for i in 0..side {
            for j in 0..side {
                let x = [-extent + j as f64 * step, -extent + i as f64 * step];
                let g = v.drift(&x, t)?;
                out.extend_from_slice(&[x[0], x[1], g[0], g[1]]);
            }
        }
        Ok(out)
    }
}

fn js(e: sbmatch::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    session: Session,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(dataset: &str, eps: f64, components: usize, seed: u64) -> Result<Demo, JsError> {
        Session::new(dataset, eps, components, seed).map(|session| Demo { session }).map_err(js)
    }

    #[wasm_bindgen(js_name = trainSteps)]
    pub fn train_steps(&mut self, steps: usize) -> Result<f64, JsError> {
        self.session.train(steps).map_err(js)
    }

    #[wasm_bindgen(getter)]
    pub fn iteration(&self) -> usize {
        self.session.iteration()
    }

    #[wasm_bindgen(getter)]
    pub fn loss(&self) -> f64 {
        self.session.loss()
    }

    #[wasm_bindgen(js_name = targetPoints)]
    pub fn target_points(&self) -> Vec<f64> {
        self.session.target().to_vec()
    }

    #[wasm_bindgen(js_name = sampleTrajectories)]
    pub fn sample_trajectories(&mut self, n: usize, n_times: usize) -> Result<Vec<f64>, JsError> {
        self.session.trajectories(n, n_times).map_err(js)
    }

    #[wasm_bindgen(js_name = driftField)]
    pub fn drift_field(&self, t: f64, side: usize, extent: f64) -> Result<Vec<f64>, JsError> {
        self.session.drift_field(t, side, extent).map_err(js)
    }
}
