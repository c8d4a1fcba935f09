use proptest::prelude::*;
use sbmatch::couplings::{CouplingKind, CouplingSampler};
use sbmatch::io::{self, Checkpoint, TrainMeta};
use sbmatch::oracle::gaussian_eot_plan;
use sbmatch::processes::{sample_reciprocal, PairBatch};
use sbmatch::trainer::{train, TrainConfig};
use sbmatch::{datasets, rng_from_seed, GaussianMixturePotential, Samples};

fn config(kind: CouplingKind, seed: u64) -> TrainConfig {
    TrainConfig {
        eps: 0.5,
        n_components: 3,
        batch_size: 64,
        n_iters: 300,
        learning_rate: 1e-2,
        seed,
        sampler: kind,
        init_scale: 1.0,
        ..TrainConfig::default()
    }
}

fn stores(seed: u64) -> (Samples, Samples) {
    let mut rng = rng_from_seed(seed);
    let src = datasets::gaussian(2000, &[0.0, 0.0], 1.0, &mut rng).unwrap();
    let tgt = datasets::eight_gaussians(2000, 1.5, 0.2, &mut rng);
    (src, tgt)
}

fn fit(kind: CouplingKind, seed: u64) -> GaussianMixturePotential {
    let (src, tgt) = stores(3);
    let sampler = CouplingSampler::new(kind, src, tgt, 64).unwrap();
    train(config(kind, seed), sampler).unwrap().potential
}

#[test]
fn training_is_reproducible_per_seed() {
    let a = fit(CouplingKind::MinibatchOt, 4);
    let b = fit(CouplingKind::MinibatchOt, 4);
    let c = fit(CouplingKind::MinibatchOt, 5);
    assert_eq!(a.params(), b.params());
    assert_ne!(a.params(), c.params());
}

#[test]
fn trained_checkpoint_survives_disk() {
    let v = fit(CouplingKind::Independent, 1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    let meta = TrainMeta { iterations: 300, seed: 1, sampler: CouplingKind::Independent, loss: Some(1.5) };
    Checkpoint::from_potential(&v, meta).save(&path).unwrap();
    let w = Checkpoint::load(&path).unwrap().to_potential().unwrap();
    for (x, t) in [([0.3, -1.2], 0.0), ([2.0, 0.1], 0.5), ([-0.7, 0.9], 0.99)] {
        assert_eq!(v.drift(&x, t).unwrap(), w.drift(&x, t).unwrap());
        assert_eq!(v.log_c(&x).unwrap().to_bits(), w.log_c(&x).unwrap().to_bits());
    }
}

#[test]
fn paired_training_on_oracle_pairs_recovers_conditional_mean() {
    let mut rng = rng_from_seed(6);
    let o = gaussian_eot_plan(&[0.0], &[1.0], &[2.0], &[0.5], 0.5).unwrap();
    let pairs = o.sample_pairs(20_000, &mut rng).unwrap();
    let sampler = CouplingSampler::new(CouplingKind::Paired, pairs.x0, pairs.x1, 256).unwrap();
    let mut cfg = config(CouplingKind::Paired, 2);
    cfg.n_iters = 2000;
    cfg.batch_size = 256;
    let v = train(cfg, sampler).unwrap().potential;
    for x0 in [-1.0, 0.0, 1.0] {
        let (m, _) = o.conditional_moments(&[x0]).unwrap();
        let got = v.conditional_plan(&[x0]).unwrap().mean()[0];
        assert!((got - m[0]).abs() < 0.1, "x0 {x0}: {got} vs {}", m[0]);
    }
}

#[test]
fn written_trajectories_start_and_end_at_the_pairs() {
    let v = fit(CouplingKind::MinibatchOt, 9);
    let mut rng = rng_from_seed(10);
    let x0 = datasets::gaussian(50, &[0.0, 0.0], 1.0, &mut rng).unwrap();
    let x1 = v.sample_endpoints(&x0, &mut rng).unwrap();
    let pairs = PairBatch::new(x0.clone(), x1.clone()).unwrap();
    let traj = sample_reciprocal(&pairs, &[0.0, 0.3, 0.7, 1.0], v.eps(), &mut rng).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    io::write_trajectories(&path, &traj).unwrap();
    let back = io::read_samples(&path).unwrap();
    assert_eq!(back.len(), 200);
    for i in 0..50 {
        assert_eq!(&back.row(4 * i)[1..], x0.row(i));
        assert_eq!(&back.row(4 * i + 3)[1..], x1.row(i));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn checkpoint_json_round_trip_is_bit_exact(
        eps in 0.01f64..10.0,
        params in prop::collection::vec(-3.0f64..3.0, 10),
        x in prop::collection::vec(-4.0f64..4.0, 2),
        t in 0.0f64..0.999,
    ) {
        let v = GaussianMixturePotential::from_parts(eps, 2, &params[..2], &params[2..6], &params[6..]).unwrap();
        let meta = TrainMeta { iterations: 0, seed: 0, sampler: CouplingKind::Independent, loss: None };
        let json = Checkpoint::from_potential(&v, meta).to_json();
        let w = Checkpoint::from_json(&json).unwrap().to_potential().unwrap();
        prop_assert_eq!(v.params(), w.params());
        prop_assert_eq!(v.drift(&x, t).unwrap(), w.drift(&x, t).unwrap());
    }

    #[test]
    fn conditional_plan_weights_sum_to_one(
        params in prop::collection::vec(-2.0f64..2.0, 9),
        x0 in -3.0f64..3.0,
    ) {
        let v = GaussianMixturePotential::from_parts(0.7, 1, &params[..3], &params[3..6], &params[6..]).unwrap();
        let plan = v.conditional_plan(&[x0]).unwrap();
        let total: f64 = plan.weights.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(v.log_c(&[x0]).unwrap().is_finite());
    }
}
