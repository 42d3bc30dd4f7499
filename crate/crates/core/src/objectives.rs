//! Training objectives: margins, the leaky cost family `C_nu`, the loss-network objective
//! `S` and generator objective `T`, and the conditional / semi-supervised variants.
//!
//! Every batch objective pairs the i-th real sample with the i-th generated sample. Terms
//! are reduced in a canonical order (lexicographic over the pair's inputs), so permuting
//! the pairs of a batch leaves values and gradients bit-identical.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::diffnet::{self, ParamVector};
use crate::error::{check_dim, Error, Result};

/// Slope `nu` of the cost `C_nu(a) = max(a, nu·a)`; must satisfy `nu ≤ 1`.
///
/// `nu = 0` is the hinge of LS-GAN, `nu = 1` the identity of WGAN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct CostSlope(f64);

impl CostSlope {
    pub const HINGE: CostSlope = CostSlope(0.0);
    pub const LINEAR: CostSlope = CostSlope(1.0);

    pub fn new(nu: f64) -> Result<Self> {
        if !nu.is_finite() || nu > 1.0 {
            return Err(Error::config(format!("cost slope must be finite and <= 1, got {nu}")));
        }
        Ok(CostSlope(nu))
    }

    pub fn nu(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn apply(self, a: f64) -> f64 {
        a.max(self.0 * a)
    }

    /// Right derivative; 1 at the kink.
    #[inline]
    pub fn derivative(self, a: f64) -> f64 {
        if a >= 0.0 {
            1.0
        } else {
            self.0
        }
    }
}

impl TryFrom<f64> for CostSlope {
    type Error = Error;
    fn try_from(nu: f64) -> Result<Self> {
        CostSlope::new(nu)
    }
}

impl From<CostSlope> for f64 {
    fn from(c: CostSlope) -> f64 {
        c.0
    }
}

pub fn cost(nu: CostSlope, a: f64) -> f64 {
    nu.apply(a)
}

/// Scaled Minkowski distance used as the margin `Δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginSpec {
    pub p: f64,
    pub scale: f64,
}

impl Default for MarginSpec {
    fn default() -> Self {
        MarginSpec { p: 1.0, scale: 1.0 }
    }
}

impl MarginSpec {
    pub fn new(p: f64, scale: f64) -> Result<Self> {
        let m = MarginSpec { p, scale };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(Error::config(format!("margin order p must be >= 1, got {}", self.p)));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::config("margin scale must be positive"));
        }
        Ok(())
    }

    pub fn distance(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dim("margin operand length", x.len(), y.len())?;
        Ok(self.distance_unchecked(x, y))
    }

    pub(crate) fn distance_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let diffs = x.iter().zip(y).map(|(a, b)| (a - b).abs());
        let raw = if self.p == 1.0 {
            diffs.sum::<f64>()
        } else if self.p == 2.0 {
            diffs.map(|d| d * d).sum::<f64>().sqrt()
        } else {
            diffs.map(|d| d.powf(self.p)).sum::<f64>().powf(1.0 / self.p)
        };
        self.scale * raw
    }

    /// Norm of a gradient measured in the dual of this margin, so that a function with
    /// gradient norm `k` everywhere is `k`-Lipschitz with respect to the margin.
    pub fn dual_norm(&self, g: &[f64]) -> f64 {
        let raw = if self.p == 1.0 {
            g.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
        } else {
            let q = self.p / (self.p - 1.0);
            g.iter().map(|v| v.abs().powf(q)).sum::<f64>().powf(1.0 / q)
        };
        raw / self.scale
    }
}

pub fn margin(m: &MarginSpec, x: &[f64], x2: &[f64]) -> Result<f64> {
    m.distance(x, x2)
}

/// Which softmax normalisation a conditional loss uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoftmaxVariant {
    /// `exp(a_l) / Σ exp(a_k)`
    #[default]
    Standard,
    /// `exp(a_l) / (1 + Σ exp(a_k))`: the extra unit of mass means "no known class".
    PlusOne,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub lambda: f64,
    #[serde(default)]
    pub gamma: f64,
    /// Weight of `½‖∇ₓ L_θ(x)‖²` averaged over real samples.
    #[serde(default)]
    pub penalty_weight: f64,
    /// Weight of `½‖∇_θ L_θ(x)‖²`; off unless set.
    #[serde(default)]
    pub param_penalty_weight: f64,
    pub cost: CostSlope,
    #[serde(default)]
    pub margin: MarginSpec,
    #[serde(default = "default_true")]
    pub include_first_loss_term: bool,
    #[serde(default)]
    pub labeled_softmax: SoftmaxVariant,
}

impl ObjectiveConfig {
    pub fn lsgan(lambda: f64) -> Self {
        ObjectiveConfig {
            lambda,
            gamma: 0.0,
            penalty_weight: 0.0,
            param_penalty_weight: 0.0,
            cost: CostSlope::HINGE,
            margin: MarginSpec::default(),
            include_first_loss_term: true,
            labeled_softmax: SoftmaxVariant::Standard,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("lambda must be positive"));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::config("gamma must be nonnegative"));
        }
        if !(self.penalty_weight >= 0.0 && self.penalty_weight.is_finite()) {
            return Err(Error::config("penalty_weight must be nonnegative"));
        }
        if !(self.param_penalty_weight >= 0.0 && self.param_penalty_weight.is_finite()) {
            return Err(Error::config("param_penalty_weight must be nonnegative"));
        }
        CostSlope::new(self.cost.nu())?;
        self.margin.validate()
    }
}

/// Step used for the difference-based Hessian-vector product of the parameter penalty.
const PARAM_PENALTY_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct LossObjective {
    pub value: f64,
    pub grad_theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorObjective {
    pub value: f64,
    pub grad_phi: Vec<f64>,
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

/// Indices sorted by the concatenation of each item's key slices; ties keep index order.
pub(crate) fn canonical_order<'a>(n: usize, key: impl Fn(usize) -> Vec<&'a [f64]>) -> Vec<usize> {
    let keys: Vec<Vec<f64>> = (0..n).map(|i| key(i).concat()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| lexicographic(&keys[i], &keys[j]));
    order
}

fn check_batch(reals: &[Vec<f64>], noises: &[Vec<f64>]) -> Result<()> {
    if reals.is_empty() {
        return Err(Error::input("empty batch"));
    }
    check_dim("batch size (noises vs reals)", reals.len(), noises.len())
}

fn generate(phi: &ParamVector, noises: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    noises.iter().map(|z| diffnet::forward(phi, z)).collect()
}

/// Empirical loss-network objective for a batch of `(real, noise)` pairs with the
/// generator held fixed:
///
/// `[ (1/m) Σ L(xᵢ) ] + (λ/m) Σ C_ν(Δ(xᵢ, Gᵢ) + L(xᵢ) − L(Gᵢ)) + w · (1/m) Σ ½‖∇ₓ L(xᵢ)‖²`
pub fn loss_objective(
    theta: &ParamVector,
    phi: &ParamVector,
    reals: &[Vec<f64>],
    noises: &[Vec<f64>],
    cfg: &ObjectiveConfig,
) -> Result<LossObjective> {
    check_batch(reals, noises)?;
    let gens = generate(phi, noises)?;
    loss_objective_on_samples(theta, reals, &gens, cfg)
}

/// [`loss_objective`] with generated samples supplied directly.
pub fn loss_objective_on_samples(
    theta: &ParamVector,
    reals: &[Vec<f64>],
    gens: &[Vec<f64>],
    cfg: &ObjectiveConfig,
) -> Result<LossObjective> {
    check_batch(reals, gens)?;
    check_dim("scalar loss network output", 1, theta.spec().output_dim())?;
    let m = reals.len() as f64;
    let first = if cfg.include_first_loss_term { 1.0 } else { 0.0 };
    let mut value = 0.0;
    let mut grad = vec![0.0; theta.len()];
    for i in canonical_order(reals.len(), |i| vec![&reals[i], &gens[i]]) {
        let (x, g) = (&reals[i], &gens[i]);
        let delta = cfg.margin.distance(x, g)?;
        let lx = diffnet::forward_scalar(theta, x)?;
        let lg = diffnet::forward_scalar(theta, g)?;
        let a = delta + lx - lg;
        let slope = cfg.cost.derivative(a);
        let mut term = first * lx + cfg.lambda * cfg.cost.apply(a);

        let coef_x = first + cfg.lambda * slope;
        let coef_g = -cfg.lambda * slope;
        diffnet::accumulate_grad_params(theta, x, &[coef_x], 1.0 / m, &mut grad)?;
        diffnet::accumulate_grad_params(theta, g, &[coef_g], 1.0 / m, &mut grad)?;

        if cfg.penalty_weight > 0.0 {
            let (pv, pg) = diffnet::input_penalty(theta, x)?;
            term += cfg.penalty_weight * pv;
            let s = cfg.penalty_weight / m;
            grad.iter_mut().zip(&pg).for_each(|(o, v)| *o += s * v);
        }
        if cfg.param_penalty_weight > 0.0 {
            let (pv, pg) = diffnet::param_penalty(theta, x, PARAM_PENALTY_STEP)?;
            term += cfg.param_penalty_weight * pv;
            let s = cfg.param_penalty_weight / m;
            grad.iter_mut().zip(&pg).for_each(|(o, v)| *o += s * v);
        }
        value += term;
    }
    Ok(LossObjective {
        value: value / m,
        grad_theta: grad,
    })
}

/// Value of [`loss_objective`] without the gradient.
pub fn loss_objective_value(
    theta: &ParamVector,
    phi: &ParamVector,
    reals: &[Vec<f64>],
    noises: &[Vec<f64>],
    cfg: &ObjectiveConfig,
) -> Result<f64> {
    check_batch(reals, noises)?;
    check_dim("scalar loss network output", 1, theta.spec().output_dim())?;
    let gens = generate(phi, noises)?;
    let first = if cfg.include_first_loss_term { 1.0 } else { 0.0 };
    let mut value = 0.0;
    for i in canonical_order(reals.len(), |i| vec![&reals[i], &gens[i]]) {
        let (x, g) = (&reals[i], &gens[i]);
        let lx = diffnet::forward_scalar(theta, x)?;
        let lg = diffnet::forward_scalar(theta, g)?;
        let mut term = first * lx + cfg.lambda * cfg.cost.apply(cfg.margin.distance(x, g)? + lx - lg);
        if cfg.penalty_weight > 0.0 {
            let gx = diffnet::grad_input(theta, x, &[1.0])?;
            term += cfg.penalty_weight * 0.5 * gx.iter().map(|v| v * v).sum::<f64>();
        }
        if cfg.param_penalty_weight > 0.0 {
            let gp = diffnet::grad_params(theta, x, &[1.0])?;
            term += cfg.param_penalty_weight * 0.5 * gp.iter().map(|v| v * v).sum::<f64>();
        }
        value += term;
    }
    Ok(value / reals.len() as f64)
}

/// `T = (1/k) Σ L_θ(G_φ(zᵢ))` and its gradient with respect to the generator parameters.
pub fn generator_objective(
    theta: &ParamVector,
    phi: &ParamVector,
    noises: &[Vec<f64>],
    _cfg: &ObjectiveConfig,
) -> Result<GeneratorObjective> {
    if noises.is_empty() {
        return Err(Error::input("empty noise batch"));
    }
    check_dim("scalar loss network output", 1, theta.spec().output_dim())?;
    check_dim(
        "generator output vs loss input",
        theta.spec().input_dim(),
        phi.spec().output_dim(),
    )?;
    let k = noises.len() as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; phi.len()];
    for i in canonical_order(noises.len(), |i| vec![&noises[i]]) {
        let z = &noises[i];
        let g = diffnet::forward(phi, z)?;
        value += diffnet::forward_scalar(theta, &g)?;
        let upstream = diffnet::grad_input(theta, &g, &[1.0 / k])?;
        diffnet::accumulate_grad_params(phi, z, &upstream, 1.0, &mut grad)?;
    }
    Ok(GeneratorObjective {
        value: value / k,
        grad_phi: grad,
    })
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `−log softmax_label(logits)` under the chosen normalisation, with its gradient with
/// respect to the logits.
pub fn neg_log_softmax(logits: &[f64], label: usize, variant: SoftmaxVariant) -> (f64, Vec<f64>) {
    let lse = match variant {
        SoftmaxVariant::Standard => log_sum_exp(logits.iter().copied()),
        SoftmaxVariant::PlusOne => log_sum_exp(std::iter::once(0.0).chain(logits.iter().copied())),
    };
    let value = lse - logits[label];
    let grad = logits
        .iter()
        .enumerate()
        .map(|(j, &a)| (a - lse).exp() - if j == label { 1.0 } else { 0.0 })
        .collect();
    (value, grad)
}

/// Index of the largest logit, lowest index on ties.
pub fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (j, &a) in logits.iter().enumerate().skip(1) {
        if a > logits[best] {
            best = j;
        }
    }
    best
}

fn class_logits(theta: &ParamVector, x: &[f64], num_classes: usize) -> Result<Vec<f64>> {
    check_dim("loss network outputs vs classes", num_classes, theta.spec().output_dim())?;
    diffnet::forward(theta, x)
}

fn check_label(label: usize, num_classes: usize) -> Result<()> {
    if label >= num_classes {
        return Err(Error::input(format!(
            "label {label} out of range for {num_classes} classes"
        )));
    }
    Ok(())
}

/// `L_θ(x, y=label)` as a negative log-softmax of the loss network's outputs.
pub fn conditional_loss(
    theta: &ParamVector,
    x: &[f64],
    label: usize,
    num_classes: usize,
) -> Result<f64> {
    conditional_loss_with(theta, x, label, num_classes, SoftmaxVariant::Standard)
}

pub fn conditional_loss_with(
    theta: &ParamVector,
    x: &[f64],
    label: usize,
    num_classes: usize,
    variant: SoftmaxVariant,
) -> Result<f64> {
    check_label(label, num_classes)?;
    let logits = class_logits(theta, x, num_classes)?;
    Ok(neg_log_softmax(&logits, label, variant).0)
}

/// Loss of an unlabeled example under the "+1" softmax at its best-guess label; the
/// returned gradient is with respect to the logits.
pub fn unlabeled_loss_from_logits(logits: &[f64]) -> (f64, Vec<f64>) {
    neg_log_softmax(logits, argmax(logits), SoftmaxVariant::PlusOne)
}

/// `min_l −log(exp(a_l) / (1 + Σ exp(a_k)))`; always strictly positive.
pub fn unlabeled_loss(theta: &ParamVector, x: &[f64], num_classes: usize) -> Result<f64> {
    let logits = class_logits(theta, x, num_classes)?;
    Ok(unlabeled_loss_from_logits(&logits).0)
}

/// `argmin_y L_θ(x, y)`, i.e. the index of the largest logit (lowest index on ties).
pub fn classify(theta: &ParamVector, x: &[f64], num_classes: usize) -> Result<usize> {
    Ok(argmax(&class_logits(theta, x, num_classes)?))
}

/// Conditional generator input: noise followed by the one-hot class code.
pub fn conditional_input(noise: &[f64], label: usize, num_classes: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(noise.len() + num_classes);
    v.extend_from_slice(noise);
    v.extend((0..num_classes).map(|c| if c == label { 1.0 } else { 0.0 }));
    v
}

/// One mini-batch for the conditional objectives.
///
/// Labeled pairs `(xᵢ, yᵢ)` are matched with `noises[i]`; each unlabeled sample is matched
/// with `unlabeled_noises[j]` fed to the generator under class `unlabeled_gen_labels[j]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClsBatch {
    pub labeled: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub noises: Vec<Vec<f64>>,
    pub unlabeled: Vec<Vec<f64>>,
    pub unlabeled_noises: Vec<Vec<f64>>,
    pub unlabeled_gen_labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClsObjectives {
    pub s_value: f64,
    pub s_grad_theta: Vec<f64>,
    pub t_value: f64,
    pub t_grad_phi: Vec<f64>,
}

impl ClsBatch {
    fn validate(&self, num_classes: usize) -> Result<()> {
        if self.labeled.is_empty() {
            return Err(Error::input("empty labeled batch"));
        }
        check_dim("labels vs labeled samples", self.labeled.len(), self.labels.len())?;
        check_dim("noises vs labeled samples", self.labeled.len(), self.noises.len())?;
        check_dim(
            "unlabeled noises vs unlabeled samples",
            self.unlabeled.len(),
            self.unlabeled_noises.len(),
        )?;
        check_dim(
            "generator labels vs unlabeled samples",
            self.unlabeled.len(),
            self.unlabeled_gen_labels.len(),
        )?;
        for &y in self.labels.iter().chain(&self.unlabeled_gen_labels) {
            check_label(y, num_classes)?;
        }
        Ok(())
    }
}

/// Conditional loss objective `S + γ·S_ul` (gradient in θ) and generator objective `T`
/// (gradient in φ), each with the other network held fixed.
pub fn cls_objectives(
    theta: &ParamVector,
    phi: &ParamVector,
    batch: &ClsBatch,
    num_classes: usize,
    cfg: &ObjectiveConfig,
) -> Result<ClsObjectives> {
    batch.validate(num_classes)?;
    check_dim("loss network outputs vs classes", num_classes, theta.spec().output_dim())?;
    check_dim(
        "generator output vs loss input",
        theta.spec().input_dim(),
        phi.spec().output_dim(),
    )?;
    let noise_dim = phi
        .spec()
        .input_dim()
        .checked_sub(num_classes)
        .ok_or_else(|| Error::input("generator input narrower than the class code"))?;

    let m = batch.labeled.len() as f64;
    let first = if cfg.include_first_loss_term { 1.0 } else { 0.0 };
    let variant = cfg.labeled_softmax;
    let mut s_value = 0.0;
    let mut s_grad = vec![0.0; theta.len()];
    let mut t_value = 0.0;
    let mut t_grad = vec![0.0; phi.len()];

    let label_keys: Vec<[f64; 1]> = batch.labels.iter().map(|&y| [y as f64]).collect();
    let order = canonical_order(batch.labeled.len(), |i| {
        vec![&batch.labeled[i], &label_keys[i], &batch.noises[i]]
    });
    for i in order {
        let (x, y) = (&batch.labeled[i], batch.labels[i]);
        check_dim("noise dimension", noise_dim, batch.noises[i].len())?;
        let input = conditional_input(&batch.noises[i], y, num_classes);
        let g = diffnet::forward(phi, &input)?;
        let (lx, dx) = neg_log_softmax(&diffnet::forward(theta, x)?, y, variant);
        let (lg, dg) = neg_log_softmax(&diffnet::forward(theta, &g)?, y, variant);
        let a = cfg.margin.distance(x, &g)? + lx - lg;
        let slope = cfg.cost.derivative(a);
        s_value += first * lx + cfg.lambda * cfg.cost.apply(a);
        let cx = first + cfg.lambda * slope;
        let cg = -cfg.lambda * slope;
        let ux: Vec<f64> = dx.iter().map(|d| d * cx).collect();
        let ug: Vec<f64> = dg.iter().map(|d| d * cg).collect();
        diffnet::accumulate_grad_params(theta, x, &ux, 1.0 / m, &mut s_grad)?;
        diffnet::accumulate_grad_params(theta, &g, &ug, 1.0 / m, &mut s_grad)?;

        // Generator side: T = (1/m) Σ L(G(zᵢ, yᵢ), yᵢ).
        t_value += lg;
        let back: Vec<f64> = dg.iter().map(|d| d / m).collect();
        let upstream = diffnet::grad_input(theta, &g, &back)?;
        diffnet::accumulate_grad_params(phi, &input, &upstream, 1.0, &mut t_grad)?;
    }
    s_value /= m;
    t_value /= m;

    if cfg.gamma > 0.0 && !batch.unlabeled.is_empty() {
        let mu = batch.unlabeled.len() as f64;
        let scale = cfg.gamma / mu;
        let gen_keys: Vec<[f64; 1]> = batch
            .unlabeled_gen_labels
            .iter()
            .map(|&y| [y as f64])
            .collect();
        let order = canonical_order(batch.unlabeled.len(), |j| {
            vec![&batch.unlabeled[j], &gen_keys[j], &batch.unlabeled_noises[j]]
        });
        let mut ul_value = 0.0;
        for j in order {
            let x = &batch.unlabeled[j];
            check_dim("noise dimension", noise_dim, batch.unlabeled_noises[j].len())?;
            let input = conditional_input(
                &batch.unlabeled_noises[j],
                batch.unlabeled_gen_labels[j],
                num_classes,
            );
            let g = diffnet::forward(phi, &input)?;
            let (lx, dx) = unlabeled_loss_from_logits(&diffnet::forward(theta, x)?);
            let (lg, dg) = unlabeled_loss_from_logits(&diffnet::forward(theta, &g)?);
            let a = cfg.margin.distance(x, &g)? + lx - lg;
            let slope = cfg.cost.derivative(a);
            ul_value += cfg.cost.apply(a);
            let ux: Vec<f64> = dx.iter().map(|d| d * slope).collect();
            let ug: Vec<f64> = dg.iter().map(|d| -d * slope).collect();
            diffnet::accumulate_grad_params(theta, x, &ux, scale, &mut s_grad)?;
            diffnet::accumulate_grad_params(theta, &g, &ug, scale, &mut s_grad)?;
        }
        s_value += cfg.gamma * ul_value / mu;
    }

    Ok(ClsObjectives {
        s_value,
        s_grad_theta: s_grad,
        t_value,
        t_grad_phi: t_grad,
    })
}
