//! Alternating optimisation of the loss network and the generator.
//!
//! Every step updates the loss network once; the generator is updated after every
//! `critic_steps_per_gen_step`-th loss step, against the freshly updated loss network. The
//! learning rate at global step `t` is `lr · anneal_factor^⌊t / anneal_every⌋`. All
//! randomness after initialisation comes from one batching stream whose position is part
//! of the checkpoint, so a resumed run continues bit-identically.

use std::fmt::Write as _;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffnet::{self, Activation, MlpSpec, ParamVector};
use crate::error::{Error, Result};
use crate::objectives::{self, ClsBatch, ObjectiveConfig};
use crate::rng::{substream, uniform_noise, RngState, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Hinge cost (`nu = 0`).
    Lsgan,
    /// Any cost slope `nu ≤ 1`.
    Glsgan,
    /// Conditional, optionally semi-supervised.
    Clsgan,
}

fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_hidden() -> Vec<usize> {
    vec![32, 32]
}
fn default_activation() -> Activation {
    Activation::LeakyRelu
}
fn default_loss_output() -> Activation {
    Activation::Abs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub objective: ObjectiveConfig,
    pub lr: f64,
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub adam_eps: f64,
    pub batch_size: usize,
    pub total_steps: usize,
    pub critic_steps_per_gen_step: usize,
    pub anneal_factor: f64,
    pub anneal_every: usize,
    pub seed: u64,
    pub checkpoint_every: usize,
    pub noise_dim: usize,
    #[serde(default = "default_hidden")]
    pub loss_hidden: Vec<usize>,
    #[serde(default = "default_hidden")]
    pub generator_hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub hidden_activation: Activation,
    /// Output activation of a scalar loss network; the default `abs` keeps `L ≥ 0`.
    #[serde(default = "default_loss_output")]
    pub loss_output_activation: Activation,
}

impl TrainConfig {
    /// Optimiser constants of the reference setup (Adam, lr 1e−3, β₁ 0.5, anneal ×0.8).
    pub fn desk_default(objective: ObjectiveConfig) -> Self {
        TrainConfig {
            objective,
            lr: 1e-3,
            beta1: 0.5,
            beta2: default_beta2(),
            adam_eps: default_eps(),
            batch_size: 64,
            total_steps: 1000,
            critic_steps_per_gen_step: 1,
            anneal_factor: 0.8,
            anneal_every: 1000,
            seed: 0,
            checkpoint_every: 1000,
            noise_dim: 4,
            loss_hidden: default_hidden(),
            generator_hidden: default_hidden(),
            hidden_activation: default_activation(),
            loss_output_activation: default_loss_output(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.objective.validate()?;
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.lr) {
            return Err(Error::config("lr must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("beta1 and beta2 must lie in [0, 1)"));
        }
        if !pos(self.adam_eps) {
            return Err(Error::config("adam_eps must be positive"));
        }
        if !(self.anneal_factor > 0.0 && self.anneal_factor <= 1.0) {
            return Err(Error::config("anneal_factor must lie in (0, 1]"));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("critic_steps_per_gen_step", self.critic_steps_per_gen_step),
            ("anneal_every", self.anneal_every),
            ("checkpoint_every", self.checkpoint_every),
            ("noise_dim", self.noise_dim),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if self.loss_hidden.contains(&0) || self.generator_hidden.contains(&0) {
            return Err(Error::config("hidden layer widths must be positive"));
        }
        Ok(())
    }

    /// `lr · anneal_factor^⌊step / anneal_every⌋`
    pub fn lr_at(&self, step: usize) -> f64 {
        self.lr * self.anneal_factor.powi((step / self.anneal_every) as i32)
    }

    pub fn loss_spec(&self, data_dim: usize, outputs: usize) -> Result<MlpSpec> {
        let mut sizes = vec![data_dim];
        sizes.extend(&self.loss_hidden);
        sizes.push(outputs);
        // Conditional networks emit logits, which stay unconstrained.
        let out = if outputs == 1 {
            self.loss_output_activation
        } else {
            Activation::Identity
        };
        MlpSpec::new(sizes, self.hidden_activation, out)
    }

    pub fn generator_spec(&self, data_dim: usize, condition_dim: usize) -> Result<MlpSpec> {
        let mut sizes = vec![self.noise_dim + condition_dim];
        sizes.extend(&self.generator_hidden);
        sizes.push(data_dim);
        MlpSpec::new(sizes, self.hidden_activation, Activation::Identity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Number of updates applied so far.
    pub t: u64,
}

impl Moments {
    pub fn zeros(n: usize) -> Self {
        Moments {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update at step index `t ≥ 1`.
pub fn adam_step(
    params: &mut [f64],
    grad: &[f64],
    moments: &mut Moments,
    hyper: &AdamHyper,
    t: u64,
) -> Result<()> {
    crate::error::check_dim("gradient length", params.len(), grad.len())?;
    crate::error::check_dim("moment length", params.len(), moments.m.len())?;
    if t == 0 {
        return Err(Error::input("Adam step index starts at 1"));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient entry {i} is {}", grad[i])));
    }
    let c1 = 1.0 - hyper.beta1.powi(t as i32);
    let c2 = 1.0 - hyper.beta2.powi(t as i32);
    for i in 0..params.len() {
        let g = grad[i];
        moments.m[i] = hyper.beta1 * moments.m[i] + (1.0 - hyper.beta1) * g;
        moments.v[i] = hyper.beta2 * moments.v[i] + (1.0 - hyper.beta2) * g * g;
        let m_hat = moments.m[i] / c1;
        let v_hat = moments.v[i] / c2;
        params[i] -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
    }
    moments.t = t;
    Ok(())
}

/// Training data for either family of models.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainData {
    Unconditional {
        samples: Vec<Vec<f64>>,
    },
    Conditional {
        labeled: Vec<(Vec<f64>, usize)>,
        unlabeled: Vec<Vec<f64>>,
        num_classes: usize,
    },
}

impl TrainData {
    pub fn dim(&self) -> usize {
        match self {
            TrainData::Unconditional { samples } => samples.first().map_or(0, |x| x.len()),
            TrainData::Conditional { labeled, .. } => labeled.first().map_or(0, |x| x.0.len()),
        }
    }

    fn validate(&self, mode: Mode) -> Result<()> {
        match (self, mode) {
            (TrainData::Unconditional { samples }, Mode::Lsgan | Mode::Glsgan) => {
                if samples.is_empty() {
                    return Err(Error::input("training set is empty"));
                }
                Ok(())
            }
            (
                TrainData::Conditional {
                    labeled,
                    unlabeled,
                    num_classes,
                },
                Mode::Clsgan,
            ) => {
                if labeled.is_empty() {
                    return Err(Error::input("clsgan mode needs a nonempty labeled set"));
                }
                if labeled.iter().any(|(_, y)| y >= num_classes) {
                    return Err(Error::input("label out of range"));
                }
                let d = labeled[0].0.len();
                if unlabeled.iter().any(|x| x.len() != d) {
                    return Err(Error::input("unlabeled samples have the wrong dimension"));
                }
                Ok(())
            }
            _ => Err(Error::config(format!("training data does not match mode {mode:?}"))),
        }
    }
}

/// Snapshot of a run between two steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Number of loss-network updates completed.
    pub step: usize,
    pub theta: ParamVector,
    pub phi: ParamVector,
    pub adam_theta: Moments,
    pub adam_phi: Moments,
    pub rng: RngState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub step: usize,
    pub s: f64,
    /// Present on steps that also updated the generator.
    pub t: Option<f64>,
    pub grad_phi_norm: Option<f64>,
    pub lr: f64,
}

pub const METRICS_HEADER: &str = "step,S,T,grad_phi_norm,lr";

/// CSV with header `step,S,T,grad_phi_norm,lr`; `T` and `grad_phi_norm` are empty on steps
/// without a generator update.
pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:?},{},{},{:?}",
            r.step,
            r.s,
            opt(r.t),
            opt(r.grad_phi_norm),
            r.lr
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<MetricRow>,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Setup(#[from] Error),
    #[error("non-finite objective at step {step}: {message}")]
    NonFinite {
        step: usize,
        message: String,
        last_checkpoint: Box<Checkpoint>,
        log: Vec<MetricRow>,
    },
}

fn outputs_and_conditions(data: &TrainData) -> (usize, usize) {
    match data {
        TrainData::Unconditional { .. } => (1, 0),
        TrainData::Conditional { num_classes, .. } => (*num_classes, *num_classes),
    }
}

fn check_mode(config: &TrainConfig, mode: Mode) -> Result<()> {
    if mode == Mode::Lsgan && config.objective.cost.nu() != 0.0 {
        return Err(Error::config("lsgan mode uses the hinge cost; set cost to 0 or use glsgan"));
    }
    if mode == Mode::Clsgan && (config.objective.penalty_weight != 0.0 || config.objective.param_penalty_weight != 0.0) {
        return Err(Error::config("gradient penalties are not defined for the conditional loss; set them to 0"));
    }
    Ok(())
}

/// Initial state of a run: seeded networks, zero moments, fresh batching stream.
pub fn initial_checkpoint(config: &TrainConfig, data: &TrainData) -> Result<Checkpoint> {
    let (outputs, conds) = outputs_and_conditions(data);
    let dim = data.dim();
    let theta = diffnet::init_params_with(
        &config.loss_spec(dim, outputs)?,
        &mut substream(config.seed, Stream::InitLoss),
    )?;
    let phi = diffnet::init_params_with(
        &config.generator_spec(dim, conds)?,
        &mut substream(config.seed, Stream::InitGenerator),
    )?;
    Ok(Checkpoint {
        step: 0,
        adam_theta: Moments::zeros(theta.len()),
        adam_phi: Moments::zeros(phi.len()),
        theta,
        phi,
        rng: RngState::capture(&substream(config.seed, Stream::Batching)),
    })
}

pub fn train(config: &TrainConfig, data: &TrainData, mode: Mode) -> std::result::Result<TrainOutcome, TrainError> {
    train_with(config, data, mode, &mut |_| Ok(()))
}

/// [`train`], calling `on_checkpoint` every `checkpoint_every` steps.
pub fn train_with(
    config: &TrainConfig,
    data: &TrainData,
    mode: Mode,
    on_checkpoint: &mut dyn FnMut(&Checkpoint) -> Result<()>,
) -> std::result::Result<TrainOutcome, TrainError> {
    config.validate()?;
    data.validate(mode)?;
    let start = initial_checkpoint(config, data)?;
    run(config, data, mode, start, on_checkpoint)
}

/// Continues a run from `checkpoint` up to `config.total_steps`.
pub fn resume(
    checkpoint: &Checkpoint,
    config: &TrainConfig,
    data: &TrainData,
    mode: Mode,
) -> std::result::Result<TrainOutcome, TrainError> {
    resume_with(checkpoint, config, data, mode, &mut |_| Ok(()))
}

pub fn resume_with(
    checkpoint: &Checkpoint,
    config: &TrainConfig,
    data: &TrainData,
    mode: Mode,
    on_checkpoint: &mut dyn FnMut(&Checkpoint) -> Result<()>,
) -> std::result::Result<TrainOutcome, TrainError> {
    config.validate()?;
    data.validate(mode)?;
    let (outputs, conds) = outputs_and_conditions(data);
    let dim = data.dim();
    if checkpoint.theta.spec() != &config.loss_spec(dim, outputs)?
        || checkpoint.phi.spec() != &config.generator_spec(dim, conds)?
    {
        return Err(Error::config("checkpoint network shapes do not match the configuration").into());
    }
    run(config, data, mode, checkpoint.clone(), on_checkpoint)
}

fn draw_batch<T: Clone>(rng: &mut ChaCha8Rng, pool: &[T], n: usize) -> Vec<T> {
    (0..n).map(|_| pool[rng.gen_range(0..pool.len())].clone()).collect()
}

fn draw_noise(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| uniform_noise(rng, dim)).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn all_finite(value: f64, grad: &[f64]) -> bool {
    value.is_finite() && grad.iter().all(|g| g.is_finite())
}

fn run(
    config: &TrainConfig,
    data: &TrainData,
    mode: Mode,
    mut state: Checkpoint,
    on_checkpoint: &mut dyn FnMut(&Checkpoint) -> Result<()>,
) -> std::result::Result<TrainOutcome, TrainError> {
    check_mode(config, mode)?;
    let cfg = &config.objective;
    let mut rng = state.rng.restore();
    let mut log = Vec::new();
    let b = config.batch_size;
    let hyper = |lr| AdamHyper {
        lr,
        beta1: config.beta1,
        beta2: config.beta2,
        eps: config.adam_eps,
    };

    while state.step < config.total_steps {
        let step = state.step;
        let lr = config.lr_at(step);
        let gen_step = (step + 1).is_multiple_of(config.critic_steps_per_gen_step);
        let snapshot = |s: &Checkpoint, rng: &ChaCha8Rng| Checkpoint {
            rng: RngState::capture(rng),
            ..s.clone()
        };
        let fail = |message: String, s: &Checkpoint, log: &Vec<MetricRow>| TrainError::NonFinite {
            step,
            message,
            last_checkpoint: Box::new(s.clone()),
            log: log.clone(),
        };
        let before = snapshot(&state, &rng);
        let theta_t = state.adam_theta.t + 1;
        let phi_t = state.adam_phi.t + 1;

        let (s_value, t_value, grad_norm) = match data {
            TrainData::Unconditional { samples } => {
                let reals = draw_batch(&mut rng, samples, b);
                let noises = draw_noise(&mut rng, b, config.noise_dim);
                let obj = objectives::loss_objective(&state.theta, &state.phi, &reals, &noises, cfg)?;
                if !all_finite(obj.value, &obj.grad_theta) {
                    return Err(fail(format!("S = {}", obj.value), &before, &log));
                }
                adam_step(
                    state.theta.values_mut(),
                    &obj.grad_theta,
                    &mut state.adam_theta,
                    &hyper(lr),
                    theta_t,
                )?;
                let mut t_out = None;
                if gen_step {
                    let noises = draw_noise(&mut rng, b, config.noise_dim);
                    let g = objectives::generator_objective(&state.theta, &state.phi, &noises, cfg)?;
                    if !all_finite(g.value, &g.grad_phi) {
                        return Err(fail(format!("T = {}", g.value), &before, &log));
                    }
                    adam_step(
                        state.phi.values_mut(),
                        &g.grad_phi,
                        &mut state.adam_phi,
                        &hyper(lr),
                        phi_t,
                    )?;
                    t_out = Some((g.value, norm(&g.grad_phi)));
                }
                (obj.value, t_out.map(|t| t.0), t_out.map(|t| t.1))
            }
            TrainData::Conditional {
                labeled,
                unlabeled,
                num_classes,
            } => {
                let nc = *num_classes;
                let picked = draw_batch(&mut rng, labeled, b);
                let noises = draw_noise(&mut rng, b, config.noise_dim);
                let mut batch = ClsBatch {
                    labels: picked.iter().map(|p| p.1).collect(),
                    labeled: picked.into_iter().map(|p| p.0).collect(),
                    noises,
                    ..ClsBatch::default()
                };
                if cfg.gamma > 0.0 && !unlabeled.is_empty() {
                    batch.unlabeled = draw_batch(&mut rng, unlabeled, b);
                    batch.unlabeled_noises = draw_noise(&mut rng, b, config.noise_dim);
                    batch.unlabeled_gen_labels = (0..b).map(|_| rng.gen_range(0..nc)).collect();
                }
                let obj = objectives::cls_objectives(&state.theta, &state.phi, &batch, nc, cfg)?;
                if !all_finite(obj.s_value, &obj.s_grad_theta) {
                    return Err(fail(format!("S = {}", obj.s_value), &before, &log));
                }
                adam_step(
                    state.theta.values_mut(),
                    &obj.s_grad_theta,
                    &mut state.adam_theta,
                    &hyper(lr),
                    theta_t,
                )?;
                let mut t_out = None;
                if gen_step {
                    let picked = draw_batch(&mut rng, labeled, b);
                    let gen_batch = ClsBatch {
                        labels: picked.iter().map(|p| p.1).collect(),
                        labeled: picked.into_iter().map(|p| p.0).collect(),
                        noises: draw_noise(&mut rng, b, config.noise_dim),
                        ..ClsBatch::default()
                    };
                    let g = objectives::cls_objectives(&state.theta, &state.phi, &gen_batch, nc, cfg)?;
                    if !all_finite(g.t_value, &g.t_grad_phi) {
                        return Err(fail(format!("T = {}", g.t_value), &before, &log));
                    }
                    adam_step(
                        state.phi.values_mut(),
                        &g.t_grad_phi,
                        &mut state.adam_phi,
                        &hyper(lr),
                        phi_t,
                    )?;
                    t_out = Some((g.t_value, norm(&g.t_grad_phi)));
                }
                (obj.s_value, t_out.map(|t| t.0), t_out.map(|t| t.1))
            }
        };

        state.step += 1;
        log.push(MetricRow {
            step,
            s: s_value,
            t: t_value,
            grad_phi_norm: grad_norm,
            lr,
        });
        if state.step.is_multiple_of(config.checkpoint_every) {
            on_checkpoint(&snapshot(&state, &rng))?;
        }
    }
    state.rng = RngState::capture(&rng);
    Ok(TrainOutcome {
        checkpoint: state,
        log,
    })
}

/// Draws `n` generator samples from `Unif[-1,1]^noise_dim` noise.
pub fn generate_samples(phi: &ParamVector, noise_dim: usize, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = substream(seed, Stream::Eval);
    (0..n)
        .map(|_| diffnet::forward(phi, &uniform_noise(&mut rng, noise_dim)))
        .collect()
}

// ---------------------------------------------------------------------------------------
// Checkpoint files: JSON container, float arrays as base64 of little-endian f64 bytes.

pub const CHECKPOINT_FORMAT: &str = "lsgan-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

fn encode_f64(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    B64.encode(bytes)
}

fn decode_f64(s: &str) -> Result<Vec<f64>> {
    let bytes = B64
        .decode(s)
        .map_err(|e| Error::input(format!("bad float array encoding: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::input("float array byte length is not a multiple of 8"));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsWire {
    spec: MlpSpec,
    values_f64le: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MomentsWire {
    t: u64,
    m_f64le: String,
    v_f64le: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RngWire {
    seed_hex: String,
    stream: u64,
    word_pos: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointWire {
    format: String,
    version: u32,
    step: usize,
    theta: ParamsWire,
    phi: ParamsWire,
    adam_theta: MomentsWire,
    adam_phi: MomentsWire,
    rng: RngWire,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        let params = |p: &ParamVector| ParamsWire {
            spec: p.spec().clone(),
            values_f64le: encode_f64(p.values()),
        };
        let moments = |m: &Moments| MomentsWire {
            t: m.t,
            m_f64le: encode_f64(&m.m),
            v_f64le: encode_f64(&m.v),
        };
        let wire = CheckpointWire {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            step: self.step,
            theta: params(&self.theta),
            phi: params(&self.phi),
            adam_theta: moments(&self.adam_theta),
            adam_phi: moments(&self.adam_phi),
            rng: RngWire {
                seed_hex: self.rng.seed.iter().map(|b| format!("{b:02x}")).collect(),
                stream: self.rng.stream,
                word_pos: self.rng.word_pos.to_string(),
            },
        };
        serde_json::to_string_pretty(&wire).expect("checkpoint serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wire: CheckpointWire =
            serde_json::from_str(text).map_err(|e| Error::input(format!("bad checkpoint: {e}")))?;
        if wire.format != CHECKPOINT_FORMAT || wire.version != CHECKPOINT_VERSION {
            return Err(Error::input(format!(
                "unsupported checkpoint {} v{}",
                wire.format, wire.version
            )));
        }
        let params = |w: &ParamsWire| ParamVector::new(w.spec.clone(), decode_f64(&w.values_f64le)?);
        let moments = |w: &MomentsWire, n: usize| -> Result<Moments> {
            let m = decode_f64(&w.m_f64le)?;
            let v = decode_f64(&w.v_f64le)?;
            if m.len() != n || v.len() != n {
                return Err(Error::input("optimizer moments do not match parameter count"));
            }
            Ok(Moments { m, v, t: w.t })
        };
        let theta = params(&wire.theta)?;
        let phi = params(&wire.phi)?;
        let hex = &wire.rng.seed_hex;
        if hex.len() != 64 {
            return Err(Error::input("rng seed must be 32 bytes of hex"));
        }
        let mut seed = [0u8; 32];
        for (i, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16)
                .map_err(|e| Error::input(format!("bad rng seed: {e}")))?;
        }
        Ok(Checkpoint {
            step: wire.step,
            adam_theta: moments(&wire.adam_theta, theta.len())?,
            adam_phi: moments(&wire.adam_phi, phi.len())?,
            theta,
            phi,
            rng: RngState {
                seed,
                stream: wire.rng.stream,
                word_pos: wire
                    .rng
                    .word_pos
                    .parse()
                    .map_err(|e| Error::input(format!("bad rng position: {e}")))?,
            },
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::from_json(&text)
    }
}
