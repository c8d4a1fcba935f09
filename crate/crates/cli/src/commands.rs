use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use sbmatch::couplings::{CouplingKind, CouplingSampler};
use sbmatch::datasets;
use sbmatch::hardsb::{mc_drift, phi_from_mixture};
use sbmatch::io::{self, Checkpoint};
use sbmatch::math::{fill_normal, norm, sq_dist};
use sbmatch::metrics::{self, DynamicKlConfig, MetricReport};
use sbmatch::oracle::{self, gaussian_sb_drift, GaussianEotOracle, OracleRecord};
use sbmatch::processes::{sample_bridge_point, sample_reciprocal, simulate_sde, uniform_grid, validate_times, PairBatch};
use sbmatch::trainer::{TrainConfig, Trainer, DEFAULT_T_MAX};
use sbmatch::{rng_from_seed, Error, GaussianMixturePotential, Samples};

use crate::args::{Dataset, EvalArgs, GenerateArgs, Metric, OracleArgs, SampleArgs, SampleMode, TrainArgs};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => f.write_str(msg),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(CliError::Usage(msg.into()))
}

fn require<'a>(value: &'a Option<PathBuf>, flag: &str, metric: &str) -> Result<&'a Path> {
    match value {
        Some(p) => Ok(p),
        None => usage(format!("--{flag} is required for --metric {metric}")),
    }
}

fn load_potential(path: &Path) -> Result<GaussianMixturePotential> {
    Ok(Checkpoint::load(path)?.to_potential()?)
}

fn load_oracle(path: &Path) -> Result<GaussianEotOracle> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    let rec: OracleRecord = serde_json::from_str(&text)
        .map_err(|e| Error::Parse { path: path.display().to_string(), msg: e.to_string() })?;
    Ok(GaussianEotOracle::from_record(&rec)?)
}

fn check_same_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got }.into());
    }
    Ok(())
}

fn parse_list(spec: &str, flag: &str) -> Result<Vec<f64>> {
    spec.split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .or_else(|_| usage(format!("--{flag}: expected comma-separated numbers, got '{spec}'")))
}

/// A scalar is broadcast; otherwise exactly `dim` entries.
pub fn parse_vector(spec: &str, dim: usize, flag: &str) -> Result<Vec<f64>> {
    let vals = parse_list(spec, flag)?;
    match vals.len() {
        1 => Ok(vec![vals[0]; dim]),
        n if n == dim => Ok(vals),
        n => usage(format!("--{flag}: expected 1 or {dim} values, got {n}")),
    }
}

/// Scalar (times I), diagonal (`dim` values) or full row-major (`dim²` values).
pub fn parse_matrix(spec: &str, dim: usize, flag: &str) -> Result<Vec<f64>> {
    let vals = parse_list(spec, flag)?;
    let diag = |d: &[f64]| {
        let mut m = vec![0.0; dim * dim];
        for (i, v) in d.iter().enumerate() {
            m[i * dim + i] = *v;
        }
        m
    };
    match vals.len() {
        1 => Ok(diag(&vec![vals[0]; dim])),
        n if n == dim => Ok(diag(&vals)),
        n if n == dim * dim => Ok(vals),
        n => usage(format!("--{flag}: expected 1, {dim} or {} values, got {n}", dim * dim)),
    }
}

fn trace_path(out: &Path) -> PathBuf {
    out.with_extension("trace.csv")
}

pub fn train(a: TrainArgs) -> Result<()> {
    let kind = CouplingKind::from(a.plan);
    let (source, target) = match (kind, &a.paired_target, &a.target) {
        (CouplingKind::Paired, Some(p), _) => (io::read_samples(&a.source)?, io::read_samples(p)?),
        (CouplingKind::Paired, None, _) => {
            let pairs = io::read_pairs(&a.source)?;
            (pairs.x0, pairs.x1)
        }
        (_, _, Some(t)) => (io::read_samples(&a.source)?, io::read_samples(t)?),
        (_, _, None) => return usage("--target is required unless --plan paired"),
    };
    check_same_dim(source.dim(), target.dim())?;
    let config = TrainConfig {
        eps: a.eps,
        n_components: a.components,
        batch_size: a.batch,
        n_iters: a.iters,
        learning_rate: a.lr,
        t_max: a.t_max.unwrap_or(DEFAULT_T_MAX),
        seed: a.seed,
        sampler: kind,
        init_scale: a.init_scale,
        checkpoint_every: a.checkpoint_every,
        ..TrainConfig::default()
    };
    let sampler = CouplingSampler::new(kind, source, target, a.batch)?;
    let start = Instant::now();
    let trainer = Trainer::new(config, sampler)?;
    let mut save_err = None;
    let outcome = trainer.run(|ckpt| {
        log::info!("iteration {}: loss {:?}", ckpt.train_meta.iterations, ckpt.train_meta.loss);
        if save_err.is_none() {
            save_err = ckpt.save(&a.out).err();
        }
    });
    if let Some(e) = save_err {
        return Err(e.into());
    }
    let outcome = match outcome {
        Ok(o) => o,
        Err(Error::NonFiniteLoss { iteration, last_checkpoint }) => {
            let fallback = a.out.with_extension("last-finite.json");
            last_checkpoint.save(&fallback)?;
            eprintln!("last finite checkpoint written to {}", fallback.display());
            return Err(Error::NonFiniteLoss { iteration, last_checkpoint }.into());
        }
        Err(e) => return Err(e.into()),
    };
    outcome.checkpoint.save(&a.out)?;
    let trace = a.trace.unwrap_or_else(|| trace_path(&a.out));
    io::write_trace(&trace, &outcome.trace)?;
    let loss = outcome.trace.last().map_or(f64::NAN, |p| p.loss);
    println!("final_loss={loss}");
    println!("wall_time_s={:.3}", start.elapsed().as_secs_f64());
    println!("checkpoint={}", a.out.display());
    println!("trace={}", trace.display());
    Ok(())
}

fn merge_grid(steps: usize, times: &[f64]) -> Vec<f64> {
    let mut grid = uniform_grid(steps);
    grid.extend_from_slice(times);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

pub fn sample(a: SampleArgs) -> Result<()> {
    let v = load_potential(&a.ckpt)?;
    let x0 = io::read_samples(&a.input)?;
    check_same_dim(v.dim(), x0.dim())?;
    let times = parse_list(&a.times, "times")?;
    validate_times(&times)?;
    let mut rng = rng_from_seed(a.seed);
    let traj = match a.mode {
        SampleMode::Plan => {
            let x1 = v.sample_endpoints(&x0, &mut rng)?;
            sample_reciprocal(&PairBatch::new(x0, x1)?, &times, v.eps(), &mut rng)?
        }
        SampleMode::Sde => {
            let Some(steps) = a.sde_steps.filter(|&s| s > 0) else {
                return usage("--mode sde needs --sde-steps N with N ≥ 1");
            };
            let grid = merge_grid(steps, &times);
            let drift = v.drift_fn();
            let full = simulate_sde(&drift, &x0, v.eps(), &grid, &mut rng)?;
            let idx: Vec<usize> = times.iter().map(|t| grid.iter().position(|g| g == t).expect("merged")).collect();
            full.select_times(&idx)?
        }
    };
    io::write_trajectories(&a.out, &traj)?;
    println!("rows={}", traj.n_trajectories() * traj.times().len());
    println!("out={}", a.out.display());
    Ok(())
}

fn standard_normal(rng: &mut sbmatch::Rng, n: usize, d: usize) -> Samples {
    let mut data = vec![0.0; n * d];
    fill_normal(rng, &mut data);
    Samples::new(d, data).expect("shape")
}

fn bridge_marginal(o: &GaussianEotOracle, t: f64, n: usize, rng: &mut sbmatch::Rng) -> sbmatch::Result<Samples> {
    let pairs = o.sample_pairs(n, rng)?;
    let mut out = Samples::zeros(n, o.dim());
    for i in 0..n {
        let x = sample_bridge_point(pairs.x0.row(i), pairs.x1.row(i), t, o.eps, rng)?;
        out.row_mut(i).copy_from_slice(&x);
    }
    Ok(out)
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let mut rng = rng_from_seed(a.seed);
    let report = match a.metric {
        Metric::BwUvp => {
            let x = io::read_samples(require(&a.a, "a", "bw-uvp")?)?;
            let y = io::read_samples(require(&a.b, "b", "bw-uvp")?)?;
            MetricReport::new("bw-uvp", metrics::bw_uvp(&x, &y)?, x.len().min(y.len()))
        }
        Metric::Energy => {
            let x = io::read_samples(require(&a.a, "a", "energy")?)?;
            let y = io::read_samples(require(&a.b, "b", "energy")?)?;
            let n = x.len() + y.len();
            if a.permutations == 0 {
                MetricReport::new("energy", metrics::energy_distance(&x, &y)?, n)
            } else {
                let test = metrics::energy_permutation_test(&x, &y, a.permutations, &mut rng)?;
                MetricReport::new("energy", test.statistic, n)
                    .with_detail("threshold_95", test.threshold)
                    .with_detail("p_value", test.p_value)
                    .with_detail("passes", test.passes())
            }
        }
        Metric::CbwUvp => {
            let v = load_potential(require(&a.ckpt, "ckpt", "cbw-uvp")?)?;
            let o = load_oracle(require(&a.oracle, "oracle", "cbw-uvp")?)?;
            check_same_dim(o.dim(), v.dim())?;
            let probes = o.sample_source(a.probes, &mut rng)?;
            let value = metrics::cbw_uvp_moments(
                |x0| {
                    let plan = v.conditional_plan(x0)?;
                    Ok((plan.mean(), plan.covariance()))
                },
                |x0| {
                    let (m, c) = o.conditional_moments(x0)?;
                    Ok((m.as_slice().to_vec(), c.transpose().as_slice().to_vec()))
                },
                &probes,
            )?;
            MetricReport::new("cbw-uvp", value, a.probes)
        }
        Metric::Dynkl => {
            let v = load_potential(require(&a.ckpt, "ckpt", "dynkl")?)?;
            let o = load_oracle(require(&a.oracle, "oracle", "dynkl")?)?;
            check_same_dim(o.dim(), v.dim())?;
            if a.t_points < 2 {
                return usage("--t-points must be at least 2");
            }
            let last = a.t_points - 1;
            let cfg = DynamicKlConfig {
                eps: o.eps,
                t_grid: (0..a.t_points).map(|i| DEFAULT_T_MAX * i as f64 / last as f64).collect(),
                n: a.n,
                sde_steps: a.sde_steps,
            };
            let x0 = o.sample_source(a.n, &mut rng)?;
            let kl = metrics::dynamic_kl(
                v.drift_fn(),
                |x, t| gaussian_sb_drift(&o, x, t),
                |t, n, rng| bridge_marginal(&o, t, n, rng),
                &x0,
                &cfg,
                &mut rng,
            )?;
            if let Some(p) = &a.curve_out {
                io::write_curve(p, &kl.curve())?;
            }
            MetricReport::new("dynkl", kl.kl_fwd, a.n)
                .with_detail("kl_fwd", kl.kl_fwd)
                .with_detail("kl_rev", kl.kl_rev)
        }
        Metric::DriftXcheck => {
            let v = load_potential(require(&a.ckpt, "ckpt", "drift-xcheck")?)?;
            let points = match &a.points {
                Some(p) => io::read_samples(p)?,
                None => standard_normal(&mut rng, a.queries, v.dim()),
            };
            check_same_dim(v.dim(), points.dim())?;
            let eps = v.eps();
            let exact: Vec<(Vec<f64>, f64)> = points
                .rows()
                .map(|x| {
                    let t = rng.random_range(0.0..0.9);
                    Ok((v.drift(x, t)?, t))
                })
                .collect::<sbmatch::Result<_>>()?;
            let phi = phi_from_mixture(v);
            let (mut worst, mut total) = (0.0f64, 0.0);
            for (x, (g, t)) in points.rows().zip(&exact) {
                let est = mc_drift(&phi, x, *t, eps, a.mc_samples, &mut rng)?;
                let rel = sq_dist(&est, g).sqrt() / norm(g).max(f64::MIN_POSITIVE);
                worst = worst.max(rel);
                total += rel;
            }
            MetricReport::new("drift-xcheck", worst, points.len())
                .with_detail("mean_relative_error", total / points.len() as f64)
                .with_detail("mc_samples", a.mc_samples)
        }
    };
    print!("{}", report.to_key_value());
    Ok(())
}

pub fn oracle(a: OracleArgs) -> Result<()> {
    if a.dim == 0 {
        return usage("--dim must be at least 1");
    }
    if a.n == 0 {
        return usage("--n must be at least 1");
    }
    let d = a.dim;
    let m0 = parse_vector(&a.m0, d, "m0")?;
    let m1 = parse_vector(&a.m1, d, "m1")?;
    let c0 = parse_matrix(&a.c0, d, "c0")?;
    let c1 = parse_matrix(&a.c1, d, "c1")?;
    oracle::ensure_validated()?;
    let o = oracle::gaussian_eot_plan(&m0, &c0, &m1, &c1, a.eps)?;
    let mut rng = rng_from_seed(a.seed);
    let src = o.sample_source(a.n, &mut rng)?;
    let tgt = o.sample_target(a.n, &mut rng)?;
    let pairs = o.sample_pairs(a.n, &mut rng)?;
    let path = |suffix: &str| PathBuf::from(format!("{}_{suffix}", a.out_prefix));
    io::write_samples(path("src.csv"), &src)?;
    io::write_samples(path("tgt.csv"), &tgt)?;
    io::write_pairs(path("paired.csv"), &pairs)?;
    let json = serde_json::to_string_pretty(&o.to_record()).expect("oracle record serializes");
    let record = path("oracle.json");
    std::fs::write(&record, json).map_err(|source| Error::Io { path: record.display().to_string(), source })?;
    println!("prefix={}", a.out_prefix);
    println!("rows={}", a.n);
    Ok(())
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    if a.n == 0 {
        return usage("--n must be at least 1");
    }
    let mut rng = rng_from_seed(a.seed);
    let samples = match a.dataset {
        Dataset::SwissRoll => datasets::swiss_roll(a.n, a.noise, &mut rng),
        Dataset::Gaussian => {
            if a.dim == 0 {
                return usage("--dim must be at least 1");
            }
            let mean = parse_vector(&a.mean, a.dim, "mean")?;
            datasets::gaussian(a.n, &mean, a.std.unwrap_or(1.0), &mut rng)?
        }
        Dataset::EightGaussians => datasets::eight_gaussians(a.n, a.radius, a.std.unwrap_or(0.05), &mut rng),
    };
    io::write_samples(&a.out, &samples)?;
    println!("rows={}", samples.len());
    println!("out={}", a.out.display());
    Ok(())
}
