//! Experiment definitions shared by the acceptance suite and the calibration example.
#![allow(dead_code)]

use lsgan::diffnet::Activation;
use lsgan::evalkit::{self, MreConfig};
use lsgan::objectives::{CostSlope, ObjectiveConfig};
use lsgan::synthdata::{self, Split, SynthSpec};
use lsgan::trainer::{self, Mode, TrainConfig, TrainData};

pub const BATCH: usize = 64;

/// Steps per epoch for `n` training samples at the fixed batch size.
pub fn steps_per_epoch(n: usize) -> usize {
    n.div_ceil(BATCH)
}

/// Two unit-weight Gaussians at ±1 with σ = 0.5.
pub fn one_d_task() -> SynthSpec {
    SynthSpec::two_gaussians_1d(1.0, 0.5)
}

pub const ONE_D_TRAIN: usize = 1000;

pub fn ring_task() -> SynthSpec {
    SynthSpec::ring(8, 2.0, 0.2)
}

/// Three diagonal Gaussians with overlapping tails.
pub fn three_class_task() -> SynthSpec {
    let c = |x: f64, y: f64| synthdata::Component {
        mean: vec![x, y],
        variance: vec![0.5, 0.5],
        weight: 1.0 / 3.0,
    };
    SynthSpec::GaussianMixture {
        components: vec![c(0.0, 1.2), c(-1.1, -0.6), c(1.1, -0.6)],
    }
}

/// Adam at lr 1e−3, β₁ 0.5, batch 64, learning rate ×0.8 every 25 epochs of `n_train`.
pub fn base_config(objective: ObjectiveConfig, steps: usize, seed: u64, n_train: usize) -> TrainConfig {
    let mut c = TrainConfig::desk_default(objective);
    c.total_steps = steps;
    c.seed = seed;
    c.batch_size = BATCH;
    c.noise_dim = 2;
    c.loss_hidden = vec![32, 32];
    c.generator_hidden = vec![32, 32];
    c.hidden_activation = Activation::LeakyRelu;
    c.anneal_every = 25 * steps_per_epoch(n_train);
    c.checkpoint_every = steps.max(1);
    c
}

pub fn one_d_data(seed: u64) -> TrainData {
    TrainData::Unconditional {
        samples: synthdata::sample(&one_d_task(), ONE_D_TRAIN, seed).unwrap().samples,
    }
}

/// LS-GAN (ν = 0, λ = 10, penalty 0.1) for 5000 steps on the 1D mixture; returns the
/// histogram TV to fresh target samples (100 bins, 10⁴ per side).
pub fn consistency_run(seed: u64) -> f64 {
    let spec = one_d_task();
    let mut obj = ObjectiveConfig::lsgan(10.0);
    obj.penalty_weight = 0.1;
    let cfg = base_config(obj, 5000, seed, ONE_D_TRAIN);
    let out = trainer::train(&cfg, &one_d_data(seed), Mode::Lsgan).unwrap();
    let gens = trainer::generate_samples(&out.checkpoint.phi, cfg.noise_dim, 10_000, seed).unwrap();
    let reals = synthdata::sample(&spec, 10_000, seed + 1000).unwrap().samples;
    evalkit::tv_distance(&reals, &gens, 100, &spec.bounding_box()).unwrap().tv
}

/// 100 loss-network steps per generator step for 10 cycles on the 1D task; returns the
/// logged generator gradient norms.
pub fn overtrain_run(seed: u64) -> Vec<f64> {
    let mut obj = ObjectiveConfig::lsgan(10.0);
    obj.penalty_weight = 0.1;
    let mut cfg = base_config(obj, 1000, seed, ONE_D_TRAIN);
    cfg.critic_steps_per_gen_step = 100;
    let out = trainer::train(&cfg, &one_d_data(seed), Mode::Lsgan).unwrap();
    out.log.iter().filter_map(|r| r.grad_phi_norm).collect()
}

pub const RING_SAMPLES: usize = 800;
pub const RING_STEPS: usize = 3000;
/// Penalty weight of the regularized ring models; 0.1 was too weak to keep all modes alive.
pub const RING_PENALTY: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct MreOrdering {
    /// `(ν, mean test MRE)` of the penalty-regularized models.
    pub regularized: Vec<(f64, f64)>,
    /// Mean test MRE of the penalty-off, first-term-off model.
    pub baseline: f64,
}

fn ring_mre(obj: ObjectiveConfig, seed: u64) -> f64 {
    let raw = synthdata::sample(&ring_task(), RING_SAMPLES, seed).unwrap();
    let ds = synthdata::make_splits(&raw, [0.5, 0.25, 0.25], seed).unwrap();
    let train = ds.split_samples(Split::Train);
    let test = ds.split_samples(Split::Test);
    let cfg = base_config(obj, RING_STEPS, seed, train.len());
    let out = trainer::train(&cfg, &TrainData::Unconditional { samples: train }, Mode::Glsgan).unwrap();
    evalkit::mre(&out.checkpoint.phi, &test, &MreConfig::default(), seed).unwrap().mean
}

/// Test MRE of GLS-GAN with penalty for ν ∈ {0, 0.01, 1} against the unregularized
/// (linear cost, no first term, no penalty) model, same seed and step budget.
pub fn mre_ordering_run(seed: u64) -> MreOrdering {
    let regularized = [0.0, 0.01, 1.0]
        .iter()
        .map(|&nu| {
            let mut obj = ObjectiveConfig::lsgan(10.0);
            obj.cost = CostSlope::new(nu).unwrap();
            obj.penalty_weight = RING_PENALTY;
            (nu, ring_mre(obj, seed))
        })
        .collect();
    let mut base = ObjectiveConfig::lsgan(10.0);
    base.cost = CostSlope::LINEAR;
    base.include_first_loss_term = false;
    base.penalty_weight = 0.0;
    MreOrdering {
        regularized,
        baseline: ring_mre(base, seed),
    }
}

pub const SEMI_LABELS_PER_CLASS: usize = 10;
pub const SEMI_UNLABELED: usize = 2000;
pub const SEMI_STEPS: usize = 2000;

/// CLS-GAN test accuracy with (γ > 0) and without (γ = 0) the unlabeled pool.
pub fn semi_supervised_run(seed: u64) -> (f64, f64) {
    let spec = three_class_task();
    let n_train = SEMI_UNLABELED + 3 * SEMI_LABELS_PER_CLASS;
    // Train split of exactly n_train points plus a 1000-point test split.
    let raw = synthdata::sample(&spec, n_train + 1000, seed).unwrap();
    let frac = n_train as f64 / raw.len() as f64;
    let ds = synthdata::make_splits(&raw, [frac, 0.0, 1.0 - frac], seed).unwrap();
    let budget = synthdata::label_budget(&ds, SEMI_LABELS_PER_CLASS, seed).unwrap();
    let test = ds.split_labeled(Split::Test);
    let run = |gamma: f64| {
        let mut obj = ObjectiveConfig::lsgan(1.0);
        obj.gamma = gamma;
        let cfg = base_config(obj, SEMI_STEPS, seed, n_train);
        let data = TrainData::Conditional {
            labeled: budget.labeled.clone(),
            unlabeled: budget.unlabeled.samples.clone(),
            num_classes: 3,
        };
        let out = trainer::train(&cfg, &data, Mode::Clsgan).unwrap();
        evalkit::accuracy(&out.checkpoint.theta, &test, 3).unwrap()
    };
    (run(0.5), run(0.0))
}
