//! Minimal differentiable multilayer perceptron.
//!
//! Parameters live in one flat `Vec<f64>`. Layer `k` stores its weight matrix row-major with
//! shape `(n_out, n_in)` followed by its `n_out` biases; layers are concatenated in order.
//!
//! Besides values and first derivatives with respect to parameters and inputs, the module
//! provides the θ-gradient of the input-gradient penalty `½‖∇ₓ L_θ(x)‖²`, computed by
//! pushing a forward-mode tangent through the reverse pass.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Negative-side slope of the leaky rectifier.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Standard deviation of the Gaussian weight initialisation.
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// `max(z, 0.2 z)`; the derivative at exactly 0 is taken as 1.
    LeakyRelu,
    Tanh,
    Identity,
    /// `ln(1 + eᶻ)`; output-only, keeps a loss network nonnegative.
    Softplus,
    /// `|z|`; output-only, keeps a loss network nonnegative. Derivative at 0 is taken as 1.
    Abs,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::LeakyRelu => {
                if z >= 0.0 {
                    z
                } else {
                    LEAKY_SLOPE * z
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
            Activation::Softplus => z.max(0.0) + (-z.abs()).exp().ln_1p(),
            Activation::Abs => z.abs(),
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::LeakyRelu => {
                if z >= 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
            Activation::Softplus => sigmoid(z),
            Activation::Abs => {
                if z >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    #[inline]
    fn second_derivative(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                -2.0 * t * (1.0 - t * t)
            }
            Activation::Softplus => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Activation::LeakyRelu | Activation::Identity | Activation::Abs => 0.0,
        }
    }

    /// Whether the activation has a kink (a point where the derivative jumps).
    pub fn has_kink(self) -> bool {
        matches!(self, Activation::LeakyRelu | Activation::Abs)
    }
}

/// Layer sizes plus activations of a fully connected network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

#[derive(Debug, Clone, Copy)]
struct LayerLayout {
    n_in: usize,
    n_out: usize,
    w_offset: usize,
    b_offset: usize,
    activation: Activation,
}

impl MlpSpec {
    pub fn new(
        layer_sizes: Vec<usize>,
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self> {
        let spec = MlpSpec {
            layer_sizes,
            hidden_activation,
            output_activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::config("an MLP needs at least an input and an output layer"));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::config("layer sizes must be positive"));
        }
        if !matches!(
            self.hidden_activation,
            Activation::LeakyRelu | Activation::Tanh
        ) {
            return Err(Error::config("hidden activation must be leaky_relu or tanh"));
        }
        if !matches!(
            self.output_activation,
            Activation::Identity | Activation::Tanh | Activation::Softplus | Activation::Abs
        ) {
            return Err(Error::config("output activation must be identity, tanh, softplus or abs"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated spec")
    }

    /// `Σ (n_in + 1) · n_out` over layers.
    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

    fn layers(&self) -> Vec<LayerLayout> {
        let n_layers = self.layer_sizes.len() - 1;
        let mut offset = 0;
        self.layer_sizes
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let (n_in, n_out) = (w[0], w[1]);
                let layout = LayerLayout {
                    n_in,
                    n_out,
                    w_offset: offset,
                    b_offset: offset + n_in * n_out,
                    activation: if k + 1 == n_layers {
                        self.output_activation
                    } else {
                        self.hidden_activation
                    },
                };
                offset += (n_in + 1) * n_out;
                layout
            })
            .collect()
    }

    /// Whether parameter `index` is a bias entry.
    pub fn is_bias(&self, index: usize) -> bool {
        self.layers()
            .iter()
            .any(|l| index >= l.b_offset && index < l.b_offset + l.n_out)
    }
}

/// Flat parameter array paired with the spec that gives it shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    spec: MlpSpec,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(spec: MlpSpec, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        check_dim("parameter vector length", spec.param_count(), values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector has non-finite entries".into()));
        }
        Ok(ParamVector { spec, values })
    }

    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        let n = spec.param_count();
        Self::new(spec, vec![0.0; n])
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Copy with different values but the same shape.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.spec.clone(), values)
    }
}

/// Weights i.i.d. `N(0, 0.02²)`, biases zero.
pub fn init_params(spec: &MlpSpec, seed: u64) -> Result<ParamVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_params_with(spec, &mut rng)
}

pub fn init_params_with(spec: &MlpSpec, rng: &mut ChaCha8Rng) -> Result<ParamVector> {
    spec.validate()?;
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    let mut values = vec![0.0; spec.param_count()];
    for layer in spec.layers() {
        for w in &mut values[layer.w_offset..layer.b_offset] {
            *w = normal.sample(rng);
        }
    }
    ParamVector::new(spec.clone(), values)
}

/// Pre-activations and activations of every layer; `post[0]` is the input.
struct Trace {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

fn run_forward(params: &ParamVector, x: &[f64]) -> Trace {
    let layers = params.spec.layers();
    let p = &params.values;
    let mut pre = Vec::with_capacity(layers.len());
    let mut post = Vec::with_capacity(layers.len() + 1);
    post.push(x.to_vec());
    for l in &layers {
        let input = post.last().expect("non-empty");
        let mut z = p[l.b_offset..l.b_offset + l.n_out].to_vec();
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &p[l.w_offset + o * l.n_in..l.w_offset + (o + 1) * l.n_in];
            *zo += row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>();
        }
        let a = z.iter().map(|&v| l.activation.apply(v)).collect();
        pre.push(z);
        post.push(a);
    }
    Trace { pre, post }
}

/// Reverse pass. Adds `scale ·` the parameter gradient into `grad_params` when given and
/// returns the input gradient (unscaled).
fn run_backward(
    params: &ParamVector,
    trace: &Trace,
    upstream: &[f64],
    scale: f64,
    mut grad_params: Option<&mut [f64]>,
) -> Vec<f64> {
    let layers = params.spec.layers();
    let p = &params.values;
    let mut delta: Vec<f64> = Vec::new();
    let mut back = upstream.to_vec();
    for (k, l) in layers.iter().enumerate().rev() {
        delta.clear();
        delta.extend(
            back.iter()
                .zip(&trace.pre[k])
                .map(|(e, &z)| e * l.activation.derivative(z)),
        );
        if let Some(g) = grad_params.as_deref_mut() {
            let input = &trace.post[k];
            for (o, &d) in delta.iter().enumerate() {
                let sd = scale * d;
                if sd != 0.0 {
                    let row = &mut g[l.w_offset + o * l.n_in..l.w_offset + (o + 1) * l.n_in];
                    for (gw, a) in row.iter_mut().zip(input) {
                        *gw += sd * a;
                    }
                }
                g[l.b_offset + o] += sd;
            }
        }
        let mut next = vec![0.0; l.n_in];
        for (o, &d) in delta.iter().enumerate() {
            if d != 0.0 {
                let row = &p[l.w_offset + o * l.n_in..l.w_offset + (o + 1) * l.n_in];
                for (n, w) in next.iter_mut().zip(row) {
                    *n += w * d;
                }
            }
        }
        back = next;
    }
    back
}

fn check_input(params: &ParamVector, x: &[f64]) -> Result<()> {
    check_dim("network input", params.spec.input_dim(), x.len())
}

fn check_upstream(params: &ParamVector, upstream: &[f64]) -> Result<()> {
    check_dim("upstream gradient", params.spec.output_dim(), upstream.len())
}

pub fn forward(params: &ParamVector, x: &[f64]) -> Result<Vec<f64>> {
    check_input(params, x)?;
    Ok(run_forward(params, x).post.pop().expect("output layer"))
}

/// Scalar output of a network with one output unit.
pub fn forward_scalar(params: &ParamVector, x: &[f64]) -> Result<f64> {
    check_dim("scalar network output", 1, params.spec.output_dim())?;
    Ok(forward(params, x)?[0])
}

/// Gradient of `⟨upstream, forward(params, x)⟩` with respect to every parameter.
pub fn grad_params(params: &ParamVector, x: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
    let mut g = vec![0.0; params.len()];
    accumulate_grad_params(params, x, upstream, 1.0, &mut g)?;
    Ok(g)
}

/// Gradient of `⟨upstream, forward(params, x)⟩` with respect to `x`.
pub fn grad_input(params: &ParamVector, x: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
    check_input(params, x)?;
    check_upstream(params, upstream)?;
    let trace = run_forward(params, x);
    Ok(run_backward(params, &trace, upstream, 1.0, None))
}

/// Adds `scale · ∇_θ ⟨upstream, forward(params, x)⟩` into `out` and returns the network
/// output and the unscaled input gradient, all from a single forward/backward pass.
pub fn accumulate_grad_params(
    params: &ParamVector,
    x: &[f64],
    upstream: &[f64],
    scale: f64,
    out: &mut [f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_input(params, x)?;
    check_upstream(params, upstream)?;
    check_dim("gradient buffer", params.len(), out.len())?;
    let trace = run_forward(params, x);
    let gx = run_backward(params, &trace, upstream, scale, Some(out));
    let y = trace.post.last().expect("output").clone();
    Ok((y, gx))
}

/// Gradient of `⟨upstream, forward(params, x)⟩` with respect to θ, together with its
/// directional derivative along the input direction `direction`:
/// `d/dε ∇_θ ⟨upstream, f(θ, x + ε·direction)⟩ |_{ε=0}`.
///
/// This is a forward-mode tangent carried through both the forward and the reverse pass.
pub fn grad_params_input_jvp(
    params: &ParamVector,
    x: &[f64],
    upstream: &[f64],
    direction: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_input(params, x)?;
    check_upstream(params, upstream)?;
    check_dim("input direction", x.len(), direction.len())?;
    let layers = params.spec.layers();
    let p = &params.values;

    // Forward with tangents.
    let mut pre = Vec::with_capacity(layers.len());
    let mut pre_dot = Vec::with_capacity(layers.len());
    let mut post = vec![x.to_vec()];
    let mut post_dot = vec![direction.to_vec()];
    for l in &layers {
        let (a, a_dot) = (post.last().unwrap(), post_dot.last().unwrap());
        let mut z = p[l.b_offset..l.b_offset + l.n_out].to_vec();
        let mut z_dot = vec![0.0; l.n_out];
        for o in 0..l.n_out {
            let row = &p[l.w_offset + o * l.n_in..l.w_offset + (o + 1) * l.n_in];
            for i in 0..l.n_in {
                z[o] += row[i] * a[i];
                z_dot[o] += row[i] * a_dot[i];
            }
        }
        let next: Vec<f64> = z.iter().map(|&v| l.activation.apply(v)).collect();
        let next_dot: Vec<f64> = z
            .iter()
            .zip(&z_dot)
            .map(|(&v, &vd)| l.activation.derivative(v) * vd)
            .collect();
        pre.push(z);
        pre_dot.push(z_dot);
        post.push(next);
        post_dot.push(next_dot);
    }

    // Reverse with tangents; the upstream vector is constant in x.
    let mut grad = vec![0.0; params.len()];
    let mut grad_dot = vec![0.0; params.len()];
    let mut back = upstream.to_vec();
    let mut back_dot = vec![0.0; upstream.len()];
    for (k, l) in layers.iter().enumerate().rev() {
        let mut delta = vec![0.0; l.n_out];
        let mut delta_dot = vec![0.0; l.n_out];
        for o in 0..l.n_out {
            let z = pre[k][o];
            let d1 = l.activation.derivative(z);
            delta[o] = back[o] * d1;
            delta_dot[o] =
                back_dot[o] * d1 + back[o] * l.activation.second_derivative(z) * pre_dot[k][o];
        }
        let (a, a_dot) = (&post[k], &post_dot[k]);
        for o in 0..l.n_out {
            let base = l.w_offset + o * l.n_in;
            for i in 0..l.n_in {
                grad[base + i] += delta[o] * a[i];
                grad_dot[base + i] += delta_dot[o] * a[i] + delta[o] * a_dot[i];
            }
            grad[l.b_offset + o] += delta[o];
            grad_dot[l.b_offset + o] += delta_dot[o];
        }
        let mut next = vec![0.0; l.n_in];
        let mut next_dot = vec![0.0; l.n_in];
        for o in 0..l.n_out {
            let row = &p[l.w_offset + o * l.n_in..l.w_offset + (o + 1) * l.n_in];
            for i in 0..l.n_in {
                next[i] += row[i] * delta[o];
                next_dot[i] += row[i] * delta_dot[o];
            }
        }
        back = next;
        back_dot = next_dot;
    }
    Ok((grad, grad_dot))
}

/// Value and θ-gradient of penalty I, `½‖∇ₓ L_θ(x)‖²`, for a scalar-output network.
pub fn input_penalty(params: &ParamVector, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    if params.spec.output_dim() != 1 {
        return Err(Error::input(format!(
            "input-gradient penalty needs a scalar-output network, got output dim {}",
            params.spec.output_dim()
        )));
    }
    let gx = grad_input(params, x, &[1.0])?;
    let value = 0.5 * gx.iter().map(|g| g * g).sum::<f64>();
    // ∇_θ ½‖g‖² = Σ_j g_j ∂g_j/∂θ = directional derivative of ∇_θ L along g.
    let (_, hvp) = grad_params_input_jvp(params, x, &[1.0], &gx)?;
    Ok((value, hvp))
}

/// `∇_θ [½‖∇ₓ L_θ(x)‖²]` at one point.
pub fn hvp_input_penalty(params: &ParamVector, x: &[f64]) -> Result<Vec<f64>> {
    input_penalty(params, x).map(|(_, g)| g)
}

/// Value and approximate θ-gradient of penalty II, `½‖∇_θ L_θ(x)‖²`.
///
/// The gradient `∇²_θ L · ∇_θ L` is a Hessian-vector product formed by central differences
/// of `∇_θ L` along the direction `∇_θ L` with relative step `step`.
pub fn param_penalty(params: &ParamVector, x: &[f64], step: f64) -> Result<(f64, Vec<f64>)> {
    if params.spec.output_dim() != 1 {
        return Err(Error::input("parameter-gradient penalty needs a scalar-output network"));
    }
    let g = grad_params(params, x, &[1.0])?;
    let value = 0.5 * g.iter().map(|v| v * v).sum::<f64>();
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok((value, vec![0.0; g.len()]));
    }
    let h = step / norm;
    let shifted = |sign: f64| -> Result<Vec<f64>> {
        let values = params
            .values
            .iter()
            .zip(&g)
            .map(|(p, d)| p + sign * h * d)
            .collect();
        grad_params(&params.with_values(values)?, x, &[1.0])
    };
    let (plus, minus) = (shifted(1.0)?, shifted(-1.0)?);
    let hvp = plus
        .iter()
        .zip(&minus)
        .map(|(a, b)| (a - b) / (2.0 * h))
        .collect();
    Ok((value, hvp))
}

/// Worst coordinate-wise disagreement between analytic and central-difference gradients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FdReport {
    pub max_rel_error_params: f64,
    pub max_rel_error_input: f64,
    /// Coordinates skipped because the difference stencil crossed an activation kink.
    pub skipped: usize,
}

/// Floor on the denominator of the relative error, so that coordinates whose true
/// derivative is zero are judged on absolute error.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Signs of all kinked pre-activations; two evaluations whose patterns differ straddle a
/// kink and cannot be compared with a difference quotient.
fn kink_pattern(params: &ParamVector, x: &[f64]) -> Vec<bool> {
    let layers = params.spec.layers();
    let trace = run_forward(params, x);
    layers
        .iter()
        .zip(&trace.pre)
        .filter(|(l, _)| l.activation.has_kink())
        .flat_map(|(_, z)| z.iter().map(|&v| v >= 0.0))
        .collect()
}

/// Compares analytic gradients of `Σ forward(params, x)` against central differences.
pub fn finite_diff_check(params: &ParamVector, x: &[f64], step: f64) -> Result<FdReport> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::input("finite-difference step must be positive"));
    }
    check_input(params, x)?;
    let upstream = vec![1.0; params.spec.output_dim()];
    let objective = |p: &ParamVector, xx: &[f64]| -> f64 {
        run_forward(p, xx).post.last().unwrap().iter().sum()
    };
    let gp = grad_params(params, x, &upstream)?;
    let gx = grad_input(params, x, &upstream)?;
    let mut skipped = 0;

    let mut max_p: f64 = 0.0;
    let mut work = params.clone();
    for (i, &analytic) in gp.iter().enumerate() {
        let orig = work.values[i];
        work.values[i] = orig + step;
        let plus = objective(&work, x);
        let kp = kink_pattern(&work, x);
        work.values[i] = orig - step;
        let minus = objective(&work, x);
        let km = kink_pattern(&work, x);
        work.values[i] = orig;
        if kp != km {
            skipped += 1;
            continue;
        }
        max_p = max_p.max(relative_error(analytic, (plus - minus) / (2.0 * step)));
    }

    let mut max_x: f64 = 0.0;
    let mut xw = x.to_vec();
    for (j, &analytic) in gx.iter().enumerate() {
        let orig = xw[j];
        xw[j] = orig + step;
        let plus = objective(params, &xw);
        let kp = kink_pattern(params, &xw);
        xw[j] = orig - step;
        let minus = objective(params, &xw);
        let km = kink_pattern(params, &xw);
        xw[j] = orig;
        if kp != km {
            skipped += 1;
            continue;
        }
        max_x = max_x.max(relative_error(analytic, (plus - minus) / (2.0 * step)));
    }

    Ok(FdReport {
        max_rel_error_params: max_p,
        max_rel_error_input: max_x,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn spec(sizes: &[usize], hidden: Activation) -> MlpSpec {
        MlpSpec::new(sizes.to_vec(), hidden, Activation::Identity).unwrap()
    }

    fn random_params(spec: &MlpSpec, seed: u64, scale: f64) -> ParamVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..spec.param_count())
            .map(|_| rng.gen_range(-scale..scale))
            .collect();
        ParamVector::new(spec.clone(), values).unwrap()
    }

    /// Independent straight-line evaluator: no shared code with `run_forward`.
    fn reference_forward(params: &ParamVector, x: &[f64]) -> Vec<f64> {
        let s = params.spec();
        let v = params.values();
        let mut a = x.to_vec();
        let mut off = 0;
        let n_layers = s.layer_sizes.len() - 1;
        for k in 0..n_layers {
            let (n_in, n_out) = (s.layer_sizes[k], s.layer_sizes[k + 1]);
            let w = &v[off..off + n_in * n_out];
            let b = &v[off + n_in * n_out..off + n_in * n_out + n_out];
            off += (n_in + 1) * n_out;
            let act = if k + 1 == n_layers {
                s.output_activation
            } else {
                s.hidden_activation
            };
            let mut out = Vec::new();
            for o in 0..n_out {
                let mut z = b[o];
                for i in 0..n_in {
                    z += w[o * n_in + i] * a[i];
                }
                out.push(match act {
                    Activation::LeakyRelu => if z < 0.0 { 0.2 * z } else { z },
                    Activation::Tanh => z.tanh(),
                    Activation::Identity => z,
                    Activation::Softplus => (1.0 + z.exp()).ln(),
                    Activation::Abs => z.abs(),
                });
            }
            a = out;
        }
        a
    }

    #[test]
    fn spec_validation_and_count() {
        assert!(MlpSpec::new(vec![3], Activation::Tanh, Activation::Identity).is_err());
        assert!(MlpSpec::new(vec![3, 0, 1], Activation::Tanh, Activation::Identity).is_err());
        assert!(MlpSpec::new(vec![3, 1], Activation::Identity, Activation::Identity).is_err());
        assert!(MlpSpec::new(vec![3, 1], Activation::Tanh, Activation::LeakyRelu).is_err());
        let s = spec(&[2, 4, 1], Activation::LeakyRelu);
        assert_eq!(s.param_count(), 3 * 4 + 5);
        assert!(ParamVector::new(s.clone(), vec![0.0; 16]).is_err());
        let mut bad = vec![0.0; 17];
        bad[3] = f64::NAN;
        assert!(ParamVector::new(s, bad).is_err());
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let s = spec(&[2, 4, 1], Activation::LeakyRelu);
        let a = init_params(&s, 7).unwrap();
        let b = init_params(&s, 7).unwrap();
        assert_eq!(a.values(), b.values());
        for (i, v) in a.values().iter().enumerate() {
            if s.is_bias(i) {
                assert_eq!(*v, 0.0);
            }
        }
        let c = init_params(&s, 8).unwrap();
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn init_weight_std_matches() {
        let s = spec(&[2, 16, 16, 2], Activation::LeakyRelu);
        let p = init_params(&s, 1).unwrap();
        let w: Vec<f64> = p
            .values()
            .iter()
            .enumerate()
            .filter(|(i, _)| !s.is_bias(*i))
            .map(|(_, v)| *v)
            .collect();
        assert!(w.len() >= 100);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (w.len() - 1) as f64;
        let sd = var.sqrt();
        assert!((0.015..=0.025).contains(&sd), "sd = {sd}");
    }

    #[test]
    fn forward_zero_and_identity() {
        let s = spec(&[3, 5, 2], Activation::Tanh);
        let p = ParamVector::zeros(s).unwrap();
        assert_eq!(forward(&p, &[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);

        let lin = spec(&[2, 2], Activation::Tanh);
        let p = ParamVector::new(lin, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(forward(&p, &[3.0, -1.0]).unwrap(), vec![3.0, -1.0]);
        assert!(forward(&p, &[1.0]).is_err());
    }

    #[test]
    fn forward_matches_reference_evaluator() {
        for hidden in [Activation::LeakyRelu, Activation::Tanh] {
            let s = spec(&[2, 8, 8, 3], hidden);
            let p = random_params(&s, 3, 1.0);
            let got = forward(&p, &[0.5, 0.5]).unwrap();
            let want = reference_forward(&p, &[0.5, 0.5]);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn linear_layer_closed_forms() {
        let lin = spec(&[3, 2], Activation::Tanh);
        // W = [[1,2,3],[4,5,6]], b = [7,8]
        let p = ParamVector::new(lin, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        let x = [0.5, -1.0, 2.0];
        let u = [2.0, -3.0];
        let gp = grad_params(&p, &x, &u).unwrap();
        let want: Vec<f64> = vec![1.0, -2.0, 4.0, -1.5, 3.0, -6.0, 2.0, -3.0];
        assert_eq!(gp, want);
        let gx = grad_input(&p, &x, &u).unwrap();
        assert_eq!(gx, vec![1.0 * 2.0 - 4.0 * 3.0, 2.0 * 2.0 - 5.0 * 3.0, 3.0 * 2.0 - 6.0 * 3.0]);
        assert_eq!(grad_params(&p, &x, &[0.0, 0.0]).unwrap(), vec![0.0; 8]);
        assert_eq!(grad_input(&p, &x, &[0.0, 0.0]).unwrap(), vec![0.0; 3]);
        assert!(grad_input(&p, &x, &[1.0]).is_err());
    }

    #[test]
    fn finite_differences_agree_on_small_nets() {
        let s = spec(&[2, 8, 1], Activation::LeakyRelu);
        let p = random_params(&s, 11, 1.0);
        let r = finite_diff_check(&p, &[0.3, -0.7], 1e-5).unwrap();
        assert!(r.max_rel_error_params < 1e-4, "{r:?}");
        assert!(r.max_rel_error_input < 1e-4, "{r:?}");

        let s = spec(&[2, 8, 8, 1], Activation::Tanh);
        let p = random_params(&s, 12, 1.0);
        let r = finite_diff_check(&p, &[0.1, 0.9], 1e-5).unwrap();
        assert!(r.max_rel_error_params < 1e-4 && r.max_rel_error_input < 1e-4, "{r:?}");
    }

    #[test]
    fn finite_difference_linear_and_coarse_step() {
        let lin = spec(&[3, 1], Activation::Tanh);
        let p = random_params(&lin, 4, 1.0);
        let r = finite_diff_check(&p, &[0.2, 0.4, -0.1], 1e-5).unwrap();
        assert!(r.max_rel_error_params < 1e-8 && r.max_rel_error_input < 1e-8);

        let s = spec(&[2, 16, 16, 1], Activation::Tanh);
        let p = random_params(&s, 5, 0.8);
        let fine = finite_diff_check(&p, &[0.4, -0.2], 1e-5).unwrap();
        let coarse = finite_diff_check(&p, &[0.4, -0.2], 1e-1).unwrap();
        assert!(fine.max_rel_error_params < 1e-4 && fine.max_rel_error_input < 1e-4);
        assert!(coarse.max_rel_error_params > fine.max_rel_error_params);
        assert!(coarse.max_rel_error_input > fine.max_rel_error_input);
        assert!(finite_diff_check(&p, &[0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn penalty_linear_closed_form() {
        let lin = spec(&[3, 1], Activation::Tanh);
        let p = ParamVector::new(lin.clone(), vec![0.5, -1.0, 2.0, 0.7]).unwrap();
        let (value, g) = input_penalty(&p, &[0.1, 0.2, 0.3]).unwrap();
        assert!((value - 0.5 * (0.25 + 1.0 + 4.0)).abs() < 1e-15);
        assert_eq!(g, vec![0.5, -1.0, 2.0, 0.0]);

        let s = spec(&[2, 4, 1], Activation::Tanh);
        let zero = ParamVector::zeros(s).unwrap();
        assert!(hvp_input_penalty(&zero, &[0.3, 0.1]).unwrap().iter().all(|v| *v == 0.0));

        let vec_out = spec(&[2, 2], Activation::Tanh);
        let p = ParamVector::zeros(vec_out).unwrap();
        assert!(hvp_input_penalty(&p, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn penalty_gradient_matches_finite_differences() {
        let tanh = spec(&[2, 8, 1], Activation::Tanh);
        let soft = MlpSpec::new(vec![2, 6, 6, 1], Activation::Tanh, Activation::Softplus).unwrap();
        for (s, seed) in [(tanh, 21), (soft, 22)] {
            let p = random_params(&s, seed, 1.0);
            let x = [0.4, -0.3];
            let analytic = hvp_input_penalty(&p, &x).unwrap();
            let h = 1e-5;
            let mut work = p.clone();
            for (i, &a) in analytic.iter().enumerate() {
                let orig = work.values()[i];
                work.values_mut()[i] = orig + h;
                let plus = input_penalty(&work, &x).unwrap().0;
                work.values_mut()[i] = orig - h;
                let minus = input_penalty(&work, &x).unwrap().0;
                work.values_mut()[i] = orig;
                let rel = relative_error(a, (plus - minus) / (2.0 * h));
                assert!(rel < 1e-3, "coordinate {i}: rel {rel}");
            }
        }
    }

    #[test]
    fn softplus_output_is_nonnegative_and_differentiable() {
        let s = MlpSpec::new(vec![2, 8, 1], Activation::LeakyRelu, Activation::Softplus).unwrap();
        let p = random_params(&s, 31, 1.0);
        let r = finite_diff_check(&p, &[0.3, -0.2], 1e-5).unwrap();
        assert!(r.max_rel_error_params < 1e-4 && r.max_rel_error_input < 1e-4, "{r:?}");
        assert!((Activation::Softplus.apply(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(Activation::Softplus.apply(-800.0), 0.0);
        assert_eq!(Activation::Softplus.apply(800.0), 800.0);
        for x in [-50.0, -3.0, 0.0, 2.5, 40.0] {
            assert!(forward_scalar(&p, &[x, -x]).unwrap() >= 0.0);
        }
    }

    #[test]
    fn abs_output_is_nonnegative_with_signed_gradient() {
        let s = MlpSpec::new(vec![2, 8, 8, 1], Activation::LeakyRelu, Activation::Abs).unwrap();
        let p = random_params(&s, 5, 1.0);
        for x in [[0.3, -0.2], [-1.1, 0.7], [2.0, 2.0]] {
            let r = finite_diff_check(&p, &x, 1e-5).unwrap();
            assert!(r.max_rel_error_params < 1e-4 && r.max_rel_error_input < 1e-4, "{r:?}");
            assert!(forward_scalar(&p, &x).unwrap() >= 0.0);
        }
        assert_eq!(Activation::Abs.apply(-3.0), 3.0);
        assert_eq!(Activation::Abs.derivative(-3.0), -1.0);
        assert_eq!(Activation::Abs.derivative(0.0), 1.0);
    }

    #[test]
    fn param_penalty_gradient_is_close_to_finite_differences() {
        let s = spec(&[2, 4, 1], Activation::Tanh);
        let p = random_params(&s, 31, 1.0);
        let x = [0.2, 0.6];
        let (_, approx) = param_penalty(&p, &x, 1e-5).unwrap();
        let h = 1e-5;
        let mut work = p.clone();
        for (i, &a) in approx.iter().enumerate() {
            let orig = work.values()[i];
            work.values_mut()[i] = orig + h;
            let plus = param_penalty(&work, &x, 1e-5).unwrap().0;
            work.values_mut()[i] = orig - h;
            let minus = param_penalty(&work, &x, 1e-5).unwrap().0;
            work.values_mut()[i] = orig;
            assert!(relative_error(a, (plus - minus) / (2.0 * h)) < 1e-3);
        }
    }

    #[test]
    fn leaky_relu_slope_and_kink_convention() {
        assert_eq!(Activation::LeakyRelu.apply(-2.0), -0.4);
        assert_eq!(Activation::LeakyRelu.derivative(0.0), 1.0);
        assert_eq!(Activation::LeakyRelu.derivative(-1e-300), LEAKY_SLOPE);
    }
}
