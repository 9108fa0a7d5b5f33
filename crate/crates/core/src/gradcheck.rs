//! Central-finite-difference verification of every analytic gradient,
//! runnable standalone or from the CLI.
//!
//! Each trial draws random parameters, input, and upstream weights, forms
//! the scalar loss ⟨upstream, forward(input)⟩ (cross-entropy for the full
//! encoder), and compares analytic gradients against central differences.
//! Reported numbers are per-trial maxima of
//! |analytic − numeric| / max(|analytic|, |numeric|, 1).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GtError, Result};
use crate::gt::{gt_forward_1d, gt_grad_input, gt_grad_params, GtParams};
use crate::nlp::{batch_loss_and_grads, EncoderConfig, EncoderModel};

/// Which parameterization the 1-D check exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pipeline {
    Vision,
    Nlp,
    Encoder,
}

impl std::str::FromStr for Pipeline {
    type Err = GtError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vision" => Ok(Pipeline::Vision),
            "nlp" => Ok(Pipeline::Nlp),
            "encoder" => Ok(Pipeline::Encoder),
            other => Err(GtError::Format(format!("unknown pipeline {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Max relative error per trial.
    pub trial_errors: Vec<f64>,
    pub max_error: f64,
}

impl GradCheckReport {
    fn from_trials(trial_errors: Vec<f64>) -> Self {
        let max_error = trial_errors.iter().cloned().fold(0.0, f64::max);
        GradCheckReport {
            trial_errors,
            max_error,
        }
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_error < tol
    }
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Check blend-weight, mixer, and input gradients of the 1-D forward pass.
pub fn gradcheck_gt(pipeline: Pipeline, n: usize, trials: usize, seed: u64) -> Result<GradCheckReport> {
    let transforms = match pipeline {
        Pipeline::Vision => GtParams::vision().transforms,
        Pipeline::Nlp => GtParams::nlp().transforms,
        Pipeline::Encoder => {
            return Err(GtError::InvalidConfig(
                "the encoder check has its own entry point; use gradcheck_encoder".into(),
            ))
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = 1e-6;
    let mut trial_errors = Vec::with_capacity(trials);
    for _ in 0..trials {
        let params = GtParams::new(
            transforms.clone(),
            vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
            rng.gen_range(-1.0..1.0),
        )?;
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let upstream: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = |p: &GtParams, input: &[f64]| -> Result<f64> {
            let (out, _) = gt_forward_1d(p, input)?;
            Ok(out.iter().zip(&upstream).map(|(o, u)| o * u).sum())
        };

        let (_, cache) = gt_forward_1d(&params, &x)?;
        let (dp, dp3) = gt_grad_params(&params, &x, &upstream, &cache)?;
        let d_input = gt_grad_input(&params, &upstream)?;

        let mut worst: f64 = 0.0;
        for i in 0..params.weights.len() {
            let mut plus = params.clone();
            plus.weights[i] += step;
            let mut minus = params.clone();
            minus.weights[i] -= step;
            let fd = (loss(&plus, &x)? - loss(&minus, &x)?) / (2.0 * step);
            worst = worst.max(rel_err(dp[i], fd));
        }
        {
            let mut plus = params.clone();
            plus.mixer += step;
            let mut minus = params.clone();
            minus.mixer -= step;
            let fd = (loss(&plus, &x)? - loss(&minus, &x)?) / (2.0 * step);
            worst = worst.max(rel_err(dp3, fd));
        }
        for i in 0..n {
            let mut plus = x.clone();
            plus[i] += step;
            let mut minus = x.clone();
            minus[i] -= step;
            let fd = (loss(&params, &plus)? - loss(&params, &minus)?) / (2.0 * step);
            worst = worst.max(rel_err(d_input[i], fd));
        }
        trial_errors.push(worst);
    }
    Ok(GradCheckReport::from_trials(trial_errors))
}

/// Check the full toy encoder: every trial perturbs all blend parameters
/// plus a random subset of the remaining scalars against the cross-entropy
/// loss.
pub fn gradcheck_encoder(trials: usize, seed: u64) -> Result<GradCheckReport> {
    let config = EncoderConfig {
        vocab_size: 12,
        seq_len: 8,
        hidden_dim: 8,
        ffn_dim: 16,
        num_layers: 1,
        num_classes: 2,
        shared_gt: false,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = 1e-5;
    let mut trial_errors = Vec::with_capacity(trials);
    for trial in 0..trials {
        let model = EncoderModel::init(config.clone(), seed.wrapping_add(trial as u64))?;
        let inputs: Vec<Vec<usize>> = (0..2)
            .map(|_| (0..8).map(|_| rng.gen_range(0..config.vocab_size)).collect())
            .collect();
        let labels: Vec<usize> = (0..2).map(|_| rng.gen_range(0..2usize)).collect();
        let (_, _, grads) = batch_loss_and_grads(&model, &inputs, &labels)?;
        let analytic = grads.flatten();
        let flat = model.flatten_params();

        // Blend parameters sit right after the two embedding tables.
        let gt_offset = config.vocab_size * config.hidden_dim
            + config.seq_len * config.hidden_dim;
        let mut indices: Vec<usize> = (gt_offset..gt_offset + 3).collect();
        indices.extend((0..12).map(|_| rng.gen_range(0..flat.len())));

        let mut probe = model.clone();
        let mut worst: f64 = 0.0;
        for &i in &indices {
            let mut plus = flat.clone();
            plus[i] += step;
            probe.set_from_flat(&plus)?;
            let (loss_plus, _, _) = batch_loss_and_grads(&probe, &inputs, &labels)?;
            let mut minus = flat.clone();
            minus[i] -= step;
            probe.set_from_flat(&minus)?;
            let (loss_minus, _, _) = batch_loss_and_grads(&probe, &inputs, &labels)?;
            let fd = (loss_plus - loss_minus) / (2.0 * step);
            worst = worst.max(rel_err(analytic[i], fd));
        }
        trial_errors.push(worst);
    }
    Ok(GradCheckReport::from_trials(trial_errors))
}
