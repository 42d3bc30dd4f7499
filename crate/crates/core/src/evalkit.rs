//! Measurement instruments: minimum reconstruction error, histogram total variation,
//! empirical Lipschitz constants, objective gaps and classification accuracy.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffnet::{self, ParamVector};
use crate::error::{check_dim, Error, Result};
use crate::objectives::{self, MarginSpec, ObjectiveConfig};
use crate::rng::{indexed_substream, uniform_noise, Stream};
use crate::synthdata::{self, BoundingBox, SynthSpec, UnlabeledSet};
use crate::trainer::{adam_step, AdamHyper, Moments};

fn default_restarts() -> usize {
    5
}
fn default_steps() -> usize {
    500
}
fn default_mre_lr() -> f64 {
    0.05
}

/// Settings of the latent-space descent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MreConfig {
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Initial Adam step size; halved whenever a step is rejected.
    #[serde(default = "default_mre_lr")]
    pub lr: f64,
    /// Keep `z` inside `[-1, 1]^d` during descent.
    #[serde(default)]
    pub clamp_z: bool,
}

impl Default for MreConfig {
    fn default() -> Self {
        MreConfig {
            restarts: default_restarts(),
            steps: default_steps(),
            lr: default_mre_lr(),
            clamp_z: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MreReport {
    /// Best final error per test sample.
    pub errors: Vec<f64>,
    /// Best initial (pre-descent) error per test sample.
    pub initial_errors: Vec<f64>,
    pub mean: f64,
    pub steps: usize,
    pub restarts: usize,
    /// Accepted descent steps summed over samples and restarts.
    pub accepted_steps: usize,
}

impl MreReport {
    /// `index,initial,final` rows.
    pub fn per_sample_csv(&self) -> String {
        let mut out = String::from("index,initial,final\n");
        for (i, (a, b)) in self.initial_errors.iter().zip(&self.errors).enumerate() {
            let _ = writeln!(out, "{i},{a:?},{b:?}");
        }
        out
    }
}

fn recon_error(phi: &ParamVector, x: &[f64], z: &[f64]) -> Result<(f64, Vec<f64>)> {
    let g = diffnet::forward(phi, z)?;
    let d = x.len() as f64;
    let err = g.iter().zip(x).map(|(a, b)| (a - b).abs()).sum::<f64>() / d;
    Ok((err, g))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// One seeded descent; returns `(initial error, final error, accepted steps)`.
fn descend(phi: &ParamVector, x: &[f64], cfg: &MreConfig, rng: &mut impl Rng) -> Result<(f64, f64, usize)> {
    let d = x.len() as f64;
    let mut z = uniform_noise(rng, phi.spec().input_dim());
    let (mut err, mut gz) = recon_error(phi, x, &z)?;
    let initial = err;
    let mut moments = Moments::zeros(z.len());
    let mut lr = cfg.lr;
    let mut accepted = 0;
    for _ in 0..cfg.steps {
        let upstream: Vec<f64> = gz.iter().zip(x).map(|(g, v)| sign(g - v) / d).collect();
        let grad = diffnet::grad_input(phi, &z, &upstream)?;
        let mut cand = z.clone();
        let mut cand_moments = moments.clone();
        let hyper = AdamHyper {
            lr,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        };
        adam_step(&mut cand, &grad, &mut cand_moments, &hyper, moments.t + 1)?;
        if cfg.clamp_z {
            cand.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
        }
        let (cand_err, cand_g) = recon_error(phi, x, &cand)?;
        if cand_err < err {
            z = cand;
            moments = cand_moments;
            err = cand_err;
            gz = cand_g;
            accepted += 1;
        } else {
            lr *= 0.5;
        }
    }
    Ok((initial, err, accepted))
}

/// Minimum reconstruction error `min_z ‖x − G(z)‖₁ / dim(x)` per test sample, by Adam
/// descent on `z` from `restarts` seeded starts. Steps that do not lower the error are
/// rejected (and the step size halved), so every final error is at most its initial one.
pub fn mre(phi: &ParamVector, test: &[Vec<f64>], cfg: &MreConfig, seed: u64) -> Result<MreReport> {
    if cfg.restarts == 0 {
        return Err(Error::config("mre needs at least one restart"));
    }
    if !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
        return Err(Error::config("mre lr must be positive"));
    }
    if test.is_empty() {
        return Err(Error::input("mre test set is empty"));
    }
    for x in test {
        check_dim("test sample", phi.spec().output_dim(), x.len())?;
    }
    let per_sample: Vec<(f64, f64, usize)> = test
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut rng = indexed_substream(seed, Stream::Eval, i as u64);
            let mut best = (f64::INFINITY, f64::INFINITY, 0);
            for _ in 0..cfg.restarts {
                let (a, b, k) = descend(phi, x, cfg, &mut rng)?;
                best.0 = best.0.min(a);
                best.1 = best.1.min(b);
                best.2 += k;
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let errors: Vec<f64> = per_sample.iter().map(|s| s.1).collect();
    Ok(MreReport {
        mean: errors.iter().sum::<f64>() / errors.len() as f64,
        initial_errors: per_sample.iter().map(|s| s.0).collect(),
        accepted_steps: per_sample.iter().map(|s| s.2).sum(),
        errors,
        steps: cfg.steps,
        restarts: cfg.restarts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvReport {
    /// Bins per axis.
    pub bins: usize,
    pub n_p: usize,
    pub n_q: usize,
    pub tv: f64,
}

fn cell(x: &[f64], bbox: &BoundingBox, bins: usize) -> Vec<usize> {
    x.iter()
        .zip(bbox.lo.iter().zip(&bbox.hi))
        .map(|(v, (lo, hi))| {
            let u = ((v - lo) / (hi - lo) * bins as f64).floor();
            if u.is_nan() || u < 0.0 {
                0
            } else {
                (u as usize).min(bins - 1)
            }
        })
        .collect()
}

/// `½ Σ_b |p̂_b − q̂_b|` over a shared grid of `bins` cells per axis spanning `bbox`;
/// samples outside the box count towards the nearest edge cell.
///
/// The sum is formed over integer counts, so identical inputs give exactly 0 and
/// disjoint histograms exactly 1.
pub fn tv_distance(p: &[Vec<f64>], q: &[Vec<f64>], bins: usize, bbox: &BoundingBox) -> Result<TvReport> {
    if bins < 2 {
        return Err(Error::config("tv_distance needs at least 2 bins"));
    }
    if p.is_empty() || q.is_empty() {
        return Err(Error::input("tv_distance needs two nonempty sample sets"));
    }
    for x in p.iter().chain(q) {
        check_dim("sample", bbox.dim(), x.len())?;
    }
    let mut counts: BTreeMap<Vec<usize>, (u64, u64)> = BTreeMap::new();
    for x in p {
        counts.entry(cell(x, bbox, bins)).or_default().0 += 1;
    }
    for x in q {
        counts.entry(cell(x, bbox, bins)).or_default().1 += 1;
    }
    let (np, nq) = (p.len() as i128, q.len() as i128);
    let diff: i128 = counts
        .values()
        .map(|&(a, b)| (a as i128 * nq - b as i128 * np).abs())
        .sum();
    Ok(TvReport {
        bins,
        n_p: p.len(),
        n_q: q.len(),
        tv: diff as f64 / (2 * np * nq) as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    /// `max |L(x) − L(x′)| / Δ(x, x′)` over sampled pairs.
    pub pair_estimate: f64,
    /// `max ‖∇ₓ L(x)‖_*` over sampled points, in the dual norm of the margin.
    pub gradient_estimate: f64,
    pub pairs: usize,
}

/// Empirical Lipschitz constant of a scalar loss network with respect to `margin`, from
/// `pairs` uniform pairs in `region`.
pub fn lipschitz_estimate(
    theta: &ParamVector,
    margin: &MarginSpec,
    pairs: usize,
    region: &BoundingBox,
    seed: u64,
) -> Result<LipschitzReport> {
    check_dim("scalar loss network output", 1, theta.spec().output_dim())?;
    check_dim("region dimension", theta.spec().input_dim(), region.dim())?;
    margin.validate()?;
    let mut rng = indexed_substream(seed, Stream::Eval, u64::MAX);
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        region
            .lo
            .iter()
            .zip(&region.hi)
            .map(|(lo, hi)| lo + (hi - lo) * rng.gen::<f64>())
            .collect()
    };
    let mut pair_est = 0.0_f64;
    let mut grad_est = 0.0_f64;
    for _ in 0..pairs {
        let x = draw(&mut rng);
        let y = draw(&mut rng);
        let d = margin.distance(&x, &y)?;
        let lx = diffnet::forward_scalar(theta, &x)?;
        if d > 0.0 {
            let ly = diffnet::forward_scalar(theta, &y)?;
            pair_est = pair_est.max((lx - ly).abs() / d);
        }
        let g = diffnet::grad_input(theta, &x, &[1.0])?;
        grad_est = grad_est.max(margin.dual_norm(&g));
    }
    Ok(LipschitzReport {
        pair_estimate: pair_est,
        gradient_estimate: grad_est,
        pairs,
    })
}

/// Mean over `trials` of `|S_{m_small} − S_{m_large}|`, the empirical loss objective
/// evaluated on fresh draws from `data` and the generator's noise. Within a trial the
/// small batch is a prefix of the large one.
#[allow(clippy::too_many_arguments)]
pub fn objective_gap(
    theta: &ParamVector,
    phi: &ParamVector,
    cfg: &ObjectiveConfig,
    data: &SynthSpec,
    m_small: usize,
    m_large: usize,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if m_small == 0 || m_large < m_small || trials == 0 {
        return Err(Error::config("objective_gap needs 0 < m_small ≤ m_large and trials ≥ 1"));
    }
    let noise_dim = phi.spec().input_dim();
    let mut total = 0.0;
    for t in 0..trials {
        let mut rng = indexed_substream(seed, Stream::Eval, t as u64);
        let reals = synthdata::sample(data, m_large, rng.next_u64())?.samples;
        let noises: Vec<Vec<f64>> = (0..m_large).map(|_| uniform_noise(&mut rng, noise_dim)).collect();
        let large = objectives::loss_objective_value(theta, phi, &reals, &noises, cfg)?;
        let small = objectives::loss_objective_value(theta, phi, &reals[..m_small], &noises[..m_small], cfg)?;
        total += (small - large).abs();
    }
    Ok(total / trials as f64)
}

/// Fraction of `(x, y)` with `classify(x) = y`.
pub fn accuracy(theta: &ParamVector, test: &[(Vec<f64>, usize)], num_classes: usize) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::input("accuracy of an empty set is undefined"));
    }
    let mut hits = 0usize;
    for (x, y) in test {
        if *y >= num_classes {
            return Err(Error::input(format!("label {y} out of range")));
        }
        hits += usize::from(objectives::classify(theta, x, num_classes)? == *y);
    }
    Ok(hits as f64 / test.len() as f64)
}

/// [`accuracy`] on an unlabeled pool, scored against its withheld labels.
pub fn accuracy_hidden(theta: &ParamVector, pool: &UnlabeledSet, num_classes: usize) -> Result<f64> {
    let test: Vec<(Vec<f64>, usize)> = pool
        .samples
        .iter()
        .cloned()
        .zip(pool.hidden_labels().iter().copied())
        .collect();
    accuracy(theta, &test, num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::{Activation, MlpSpec};
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn linear(weights: &[f64], bias: &[f64], n_in: usize) -> ParamVector {
        let spec = MlpSpec::new(vec![n_in, bias.len()], Activation::LeakyRelu, Activation::Identity).unwrap();
        let mut v = weights.to_vec();
        v.extend_from_slice(bias);
        ParamVector::new(spec, v).unwrap()
    }

    #[test]
    fn mre_identity_generator_reconstructs() {
        let g = linear(&[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0], 2);
        let test = vec![vec![0.3, -0.7], vec![-0.95, 0.1], vec![0.0, 0.5]];
        let cfg = MreConfig {
            restarts: 2,
            steps: 200,
            ..MreConfig::default()
        };
        let r = mre(&g, &test, &cfg, 9).unwrap();
        assert!(r.mean <= 1e-3, "mean {}", r.mean);
        for (a, b) in r.initial_errors.iter().zip(&r.errors) {
            assert!(b <= a);
        }
    }

    #[test]
    fn mre_zero_steps_and_constant_generator() {
        let c = [0.25, -1.5];
        let g = linear(&[0.0; 6], &c, 3);
        let test = vec![vec![1.0, 1.0], vec![-2.0, 0.5]];
        for (restarts, steps) in [(1, 0), (3, 50)] {
            let cfg = MreConfig {
                restarts,
                steps,
                ..MreConfig::default()
            };
            let r = mre(&g, &test, &cfg, 1).unwrap();
            let expect = ((0.75 + 2.5) / 2.0 + (2.25 + 2.0) / 2.0) / 2.0;
            assert_eq!(r.mean, expect);
            assert_eq!(r.accepted_steps, 0);
        }
        // steps = 0: final error is the best initial error.
        let g = linear(&[0.7, -0.2, 0.4, 1.1], &[0.1, 0.0], 2);
        let cfg = MreConfig {
            restarts: 4,
            steps: 0,
            ..MreConfig::default()
        };
        let r = mre(&g, &test, &cfg, 5).unwrap();
        assert_eq!(r.errors, r.initial_errors);
        let mut rng = indexed_substream(5, Stream::Eval, 1);
        let best = (0..4)
            .map(|_| recon_error(&g, &test[1], &uniform_noise(&mut rng, 2)).unwrap().0)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(r.errors[1], best);
    }

    #[test]
    fn mre_is_deterministic_and_monotone() {
        let spec = MlpSpec::new(vec![2, 8, 2], Activation::LeakyRelu, Activation::Identity).unwrap();
        let g = diffnet::init_params(&spec, 4).unwrap();
        let g = g.with_values(g.values().iter().map(|v| v * 40.0).collect()).unwrap();
        let test = synthdata::sample(&SynthSpec::ring(4, 1.0, 0.1), 10, 2).unwrap().samples;
        let cfg = MreConfig {
            restarts: 2,
            steps: 60,
            ..MreConfig::default()
        };
        let a = mre(&g, &test, &cfg, 3).unwrap();
        let b = mre(&g, &test, &cfg, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.accepted_steps > 0);
        for (x, y) in a.initial_errors.iter().zip(&a.errors) {
            assert!(y <= x);
        }
        assert!(mre(&g, &test, &MreConfig { restarts: 0, ..cfg }, 3).is_err());
    }

    fn bbox1(lo: f64, hi: f64) -> BoundingBox {
        BoundingBox::new(vec![lo], vec![hi]).unwrap()
    }

    #[test]
    fn tv_degenerate_cases() {
        let p: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 / 50.0]).collect();
        assert_eq!(tv_distance(&p, &p, 10, &bbox1(0.0, 1.0)).unwrap().tv, 0.0);
        let q: Vec<Vec<f64>> = (0..30).map(|i| vec![2.0 + i as f64 / 30.0]).collect();
        assert_eq!(tv_distance(&p, &q, 10, &bbox1(0.0, 3.0)).unwrap().tv, 1.0);
        // Out-of-box samples land in the edge cells.
        let far = vec![vec![-100.0], vec![100.0]];
        let edge = vec![vec![0.01], vec![0.99]];
        assert_eq!(tv_distance(&far, &edge, 10, &bbox1(0.0, 1.0)).unwrap().tv, 0.0);
        assert!(tv_distance(&p, &q, 1, &bbox1(0.0, 1.0)).is_err());
        assert!(tv_distance(&p, &[], 10, &bbox1(0.0, 1.0)).is_err());
    }

    #[test]
    fn tv_symmetric_and_permutation_invariant() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let p: Vec<Vec<f64>> = (0..300).map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()]).collect();
        let q: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.gen::<f64>().powi(2), rng.gen::<f64>()]).collect();
        let b = BoundingBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let a = tv_distance(&p, &q, 5, &b).unwrap().tv;
        assert_eq!(a, tv_distance(&q, &p, 5, &b).unwrap().tv);
        let mut pr = p.clone();
        pr.reverse();
        assert_eq!(a, tv_distance(&pr, &q, 5, &b).unwrap().tv);
        assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn lipschitz_of_linear_and_constant_networks() {
        let w = [0.6, -1.7];
        let net = linear(&w, &[0.3], 2);
        let region = BoundingBox::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let l2 = MarginSpec::new(2.0, 1.0).unwrap();
        let r = lipschitz_estimate(&net, &l2, 20_000, &region, 3).unwrap();
        let norm = (w[0] * w[0] + w[1] * w[1]).sqrt();
        assert!((r.gradient_estimate - norm).abs() < 1e-12);
        assert!(r.pair_estimate <= norm * (1.0 + 1e-12));
        assert!(norm - r.pair_estimate < 1e-6, "pair {} vs {norm}", r.pair_estimate);

        let flat = linear(&[0.0, 0.0], &[2.0], 2);
        let r = lipschitz_estimate(&flat, &l2, 100, &region, 3).unwrap();
        assert_eq!((r.pair_estimate, r.gradient_estimate), (0.0, 0.0));
    }

    fn gap_fixture() -> (ParamVector, ParamVector, ObjectiveConfig, SynthSpec) {
        let theta = diffnet::init_params(
            &MlpSpec::new(vec![1, 8, 1], Activation::LeakyRelu, Activation::Identity).unwrap(),
            1,
        )
        .unwrap();
        let phi = diffnet::init_params(
            &MlpSpec::new(vec![2, 8, 1], Activation::LeakyRelu, Activation::Identity).unwrap(),
            2,
        )
        .unwrap();
        let theta = theta.with_values(theta.values().iter().map(|v| v * 30.0).collect()).unwrap();
        (theta, phi, ObjectiveConfig::lsgan(1.0), SynthSpec::two_gaussians_1d(1.0, 0.5))
    }

    #[test]
    fn objective_gap_properties() {
        let (theta, phi, cfg, data) = gap_fixture();
        assert_eq!(objective_gap(&theta, &phi, &cfg, &data, 64, 64, 3, 1).unwrap(), 0.0);
        let small = objective_gap(&theta, &phi, &cfg, &data, 32, 3200, 20, 7).unwrap();
        let large = objective_gap(&theta, &phi, &cfg, &data, 512, 3200, 20, 7).unwrap();
        assert!(small >= large, "{small} < {large}");
    }

    #[test]
    fn objective_gap_zero_network_is_margin_deviation() {
        let (theta, phi, cfg, data) = gap_fixture();
        let zero = ParamVector::zeros(theta.spec().clone()).unwrap();
        let got = objective_gap(&zero, &phi, &cfg, &data, 10, 200, 5, 3).unwrap();
        // With L ≡ 0 the objective reduces to λ · mean Δ(x, G(z)); simulate that directly.
        let mut want = 0.0;
        for t in 0..5u64 {
            let mut rng = indexed_substream(3, Stream::Eval, t);
            let reals = synthdata::sample(&data, 200, rng.next_u64()).unwrap().samples;
            let deltas: Vec<f64> = reals
                .iter()
                .map(|x| {
                    let z = uniform_noise(&mut rng, 2);
                    (x[0] - diffnet::forward(&phi, &z).unwrap()[0]).abs()
                })
                .collect();
            let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
            want += (mean(&deltas[..10]) - mean(&deltas)).abs();
        }
        assert!((got - want / 5.0).abs() < 1e-12);
    }

    #[test]
    fn accuracy_edge_cases_and_partition() {
        // Logits = x itself: class of the largest coordinate.
        let net = linear(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], &[0.0; 3], 3);
        let test: Vec<(Vec<f64>, usize)> = (0..30)
            .map(|i| {
                let y = i % 3;
                let mut x = vec![0.0; 3];
                x[y] = 1.0 + i as f64;
                (x, y)
            })
            .collect();
        assert_eq!(accuracy(&net, &test, 3).unwrap(), 1.0);
        let shifted = linear(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], &[5.0; 3], 3);
        assert_eq!(accuracy(&shifted, &test, 3).unwrap(), 1.0);
        let permuted: Vec<_> = test.iter().map(|(x, y)| (x.clone(), (y + 1) % 3)).collect();
        let a = accuracy(&net, &test, 3).unwrap() * 30.0;
        let b = accuracy(&net, &permuted, 3).unwrap() * 30.0;
        assert!(a + b <= 30.0);
        assert!(accuracy(&net, &[], 3).is_err());
    }

    #[test]
    fn accuracy_at_chance() {
        let net = linear(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], &[0.0; 3], 3);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = Normal::new(0.0, 1.0).unwrap();
        let test: Vec<(Vec<f64>, usize)> = (0..10_000)
            .map(|_| ((0..3).map(|_| n.sample(&mut rng)).collect(), rng.gen_range(0..3)))
            .collect();
        let a = accuracy(&net, &test, 3).unwrap();
        assert!((a - 1.0 / 3.0).abs() < 0.02, "{a}");
    }
}
