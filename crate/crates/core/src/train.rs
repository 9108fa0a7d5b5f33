//! Loss, metrics, optimizers, learning-rate schedules, and the desk-scale
//! basis-recovery experiment showing that blend weights migrate toward the
//! basis that carries the labels.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GtError, Result};
use crate::gt::{gt_forward_1d, gt_grad_params, GtParams};
use crate::kernels::{build_kernel, TransformKind};

/// Optimizer family and its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd {
        momentum: f64,
        weight_decay: f64,
    },
    AdamW {
        beta1: f64,
        beta2: f64,
        eps: f64,
        weight_decay: f64,
    },
}

impl Optimizer {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Optimizer::Sgd { momentum, .. } => {
                if !(0.0..1.0).contains(&momentum) {
                    return Err(GtError::InvalidConfig(format!(
                        "momentum {momentum} must be in [0, 1)"
                    )));
                }
            }
            Optimizer::AdamW { beta1, beta2, eps, .. } => {
                for (name, b) in [("beta1", beta1), ("beta2", beta2)] {
                    if !(0.0 < b && b < 1.0) {
                        return Err(GtError::InvalidConfig(format!(
                            "{name} {b} must be in (0, 1)"
                        )));
                    }
                }
                if eps <= 0.0 {
                    return Err(GtError::InvalidConfig(format!("eps {eps} must be > 0")));
                }
            }
        }
        Ok(())
    }
}

/// Learning-rate schedule; `epoch` is continuous (step / steps-per-epoch) so
/// warmup is smooth within an epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    StepDecay {
        initial_lr: f64,
        factor: f64,
        every_epochs: f64,
    },
    WarmupLinearDecay {
        peak_lr: f64,
        warmup_epochs: f64,
        end_epoch: f64,
    },
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        let lr = match *self {
            Schedule::StepDecay { initial_lr, every_epochs, .. } => {
                if every_epochs <= 0.0 {
                    return Err(GtError::InvalidConfig(
                        "step decay interval must be positive".into(),
                    ));
                }
                initial_lr
            }
            Schedule::WarmupLinearDecay { peak_lr, warmup_epochs, end_epoch } => {
                if warmup_epochs < 0.0 || end_epoch <= warmup_epochs {
                    return Err(GtError::InvalidConfig(
                        "warmup must be non-negative and end after warmup".into(),
                    ));
                }
                peak_lr
            }
        };
        if lr <= 0.0 {
            return Err(GtError::InvalidConfig(format!(
                "learning rate {lr} must be positive"
            )));
        }
        Ok(())
    }
}

/// Learning rate at a (possibly fractional) epoch.
pub fn lr_at(schedule: &Schedule, epoch: f64) -> f64 {
    match *schedule {
        Schedule::StepDecay {
            initial_lr,
            factor,
            every_epochs,
        } => initial_lr * factor.powi((epoch / every_epochs).floor() as i32),
        Schedule::WarmupLinearDecay {
            peak_lr,
            warmup_epochs,
            end_epoch,
        } => {
            if epoch >= end_epoch {
                0.0
            } else if epoch <= warmup_epochs {
                if warmup_epochs == 0.0 {
                    peak_lr
                } else {
                    peak_lr * epoch / warmup_epochs
                }
            } else {
                peak_lr * (end_epoch - epoch) / (end_epoch - warmup_epochs)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub schedule: Schedule,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        self.schedule.validate()?;
        if self.batch_size == 0 {
            return Err(GtError::InvalidConfig("batch size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(GtError::InvalidConfig("epoch count must be >= 1".into()));
        }
        Ok(())
    }
}

/// Mean cross-entropy over the batch plus the gradient w.r.t. the logits,
/// stabilized by max subtraction.
pub fn cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (batch, classes) = logits.dim();
    if batch == 0 {
        return Err(GtError::EmptyBatch);
    }
    if labels.len() != batch {
        return Err(GtError::ShapeMismatch(format!(
            "{batch} logit rows but {} labels",
            labels.len()
        )));
    }
    let mut loss = 0.0;
    let mut grad = Array2::zeros((batch, classes));
    for (i, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(GtError::LabelOutOfRange { label, classes });
        }
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|z| (z - max).exp()).sum();
        let log_sum = max + sum_exp.ln();
        loss += log_sum - row[label];
        for j in 0..classes {
            let softmax = (row[j] - max).exp() / sum_exp;
            grad[[i, j]] = (softmax - if j == label { 1.0 } else { 0.0 }) / batch as f64;
        }
    }
    Ok((loss / batch as f64, grad))
}

/// Percentage of rows whose largest logit matches the label; ties go to the
/// lowest class index.
pub fn top1_accuracy(logits: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    let (batch, _) = logits.dim();
    if batch == 0 {
        return Err(GtError::EmptyBatch);
    }
    if labels.len() != batch {
        return Err(GtError::ShapeMismatch(format!(
            "{batch} logit rows but {} labels",
            labels.len()
        )));
    }
    let mut correct = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        if argmax(logits.row(i).as_slice().expect("contiguous row")) == label {
            correct += 1;
        }
    }
    Ok(100.0 * correct as f64 / batch as f64)
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// One named parameter tensor paired with its gradient. `decay` opts the
/// tensor into weight decay; blend weights and mixers stay out by default.
pub struct ParamGroup<'a> {
    pub values: &'a mut [f64],
    pub grads: &'a [f64],
    pub decay: bool,
    /// Per-tensor learning-rate scale (1.0 for ordinary tensors).
    pub lr_scale: f64,
}

impl<'a> ParamGroup<'a> {
    pub fn new(values: &'a mut [f64], grads: &'a [f64]) -> Self {
        ParamGroup {
            values,
            grads,
            decay: true,
            lr_scale: 1.0,
        }
    }

    pub fn no_decay(mut self) -> Self {
        self.decay = false;
        self
    }

    pub fn with_lr_scale(mut self, scale: f64) -> Self {
        self.lr_scale = scale;
        self
    }
}

#[derive(Debug, Clone, Default)]
enum TensorState {
    #[default]
    Empty,
    Sgd {
        velocity: Vec<f64>,
    },
    Adam {
        m: Vec<f64>,
        v: Vec<f64>,
    },
}

/// Per-tensor optimizer state; tensors are matched to groups by position,
/// which must stay stable across steps.
#[derive(Debug, Clone, Default)]
pub struct OptimizerState {
    tensors: Vec<TensorState>,
    step: u64,
}

impl Optimizer {
    /// Apply one update to every group at learning rate `lr`.
    pub fn step(
        &self,
        groups: &mut [ParamGroup<'_>],
        state: &mut OptimizerState,
        lr: f64,
    ) -> Result<()> {
        if state.tensors.is_empty() {
            state.tensors = vec![TensorState::Empty; groups.len()];
        }
        if state.tensors.len() != groups.len() {
            return Err(GtError::ShapeMismatch(format!(
                "optimizer state tracks {} tensors, step got {}",
                state.tensors.len(),
                groups.len()
            )));
        }
        state.step += 1;
        for (group, tensor_state) in groups.iter_mut().zip(&mut state.tensors) {
            if group.values.len() != group.grads.len() {
                return Err(GtError::ShapeMismatch(format!(
                    "{} parameters with {} gradients",
                    group.values.len(),
                    group.grads.len()
                )));
            }
            let lr = lr * group.lr_scale;
            match *self {
                Optimizer::Sgd {
                    momentum,
                    weight_decay,
                } => {
                    let velocity = match tensor_state {
                        TensorState::Sgd { velocity } => velocity,
                        TensorState::Empty => {
                            *tensor_state = TensorState::Sgd {
                                velocity: vec![0.0; group.values.len()],
                            };
                            match tensor_state {
                                TensorState::Sgd { velocity } => velocity,
                                _ => unreachable!(),
                            }
                        }
                        TensorState::Adam { .. } => {
                            return Err(GtError::ShapeMismatch(
                                "optimizer state was built by a different optimizer".into(),
                            ))
                        }
                    };
                    if velocity.len() != group.values.len() {
                        return Err(GtError::ShapeMismatch(
                            "velocity length changed between steps".into(),
                        ));
                    }
                    let wd = if group.decay { weight_decay } else { 0.0 };
                    for i in 0..group.values.len() {
                        velocity[i] = momentum * velocity[i] + group.grads[i];
                        group.values[i] -= lr * (velocity[i] + wd * group.values[i]);
                    }
                }
                Optimizer::AdamW {
                    beta1,
                    beta2,
                    eps,
                    weight_decay,
                } => {
                    let (m, v) = match tensor_state {
                        TensorState::Adam { m, v } => (m, v),
                        TensorState::Empty => {
                            *tensor_state = TensorState::Adam {
                                m: vec![0.0; group.values.len()],
                                v: vec![0.0; group.values.len()],
                            };
                            match tensor_state {
                                TensorState::Adam { m, v } => (m, v),
                                _ => unreachable!(),
                            }
                        }
                        TensorState::Sgd { .. } => {
                            return Err(GtError::ShapeMismatch(
                                "optimizer state was built by a different optimizer".into(),
                            ))
                        }
                    };
                    if m.len() != group.values.len() {
                        return Err(GtError::ShapeMismatch(
                            "moment length changed between steps".into(),
                        ));
                    }
                    let wd = if group.decay { weight_decay } else { 0.0 };
                    let bias1 = 1.0 - beta1.powi(state.step as i32);
                    let bias2 = 1.0 - beta2.powi(state.step as i32);
                    for i in 0..group.values.len() {
                        let g = group.grads[i];
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                        let m_hat = m[i] / bias1;
                        let v_hat = v[i] / bias2;
                        group.values[i] -=
                            lr * (m_hat / (v_hat.sqrt() + eps)) + lr * wd * group.values[i];
                    }
                }
            }
        }
        Ok(())
    }
}

/// Blend parameters captured at the end of an epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct GtSnapshot {
    pub weights: Vec<f64>,
    pub mixer: f64,
}

impl From<&GtParams> for GtSnapshot {
    fn from(p: &GtParams) -> Self {
        GtSnapshot {
            weights: p.weights.clone(),
            mixer: p.mixer,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub train_loss: f64,
    pub train_top1: f64,
    pub val_loss: f64,
    pub val_top1: f64,
    pub gt: Vec<GtSnapshot>,
}

/// Per-epoch metrics and blend-parameter trajectories.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunHistory {
    pub epochs: Vec<EpochRecord>,
}

impl RunHistory {
    /// CSV with one row per epoch. Weight columns come in one group per
    /// blend instance: `p1..pm` then the mixer as `p{m+1}`, with `_2`, `_3`,
    /// … suffixes for later instances.
    pub fn to_csv(&self) -> String {
        let mut header = vec![
            "epoch".to_string(),
            "train_loss".into(),
            "train_top1".into(),
            "val_loss".into(),
            "val_top1".into(),
        ];
        if let Some(first) = self.epochs.first() {
            for (g, snapshot) in first.gt.iter().enumerate() {
                let suffix = if g == 0 {
                    String::new()
                } else {
                    format!("_{}", g + 1)
                };
                for i in 1..=snapshot.weights.len() {
                    header.push(format!("p{i}{suffix}"));
                }
                header.push(format!("p{}{suffix}", snapshot.weights.len() + 1));
            }
        }
        let mut out = header.join(",");
        out.push('\n');
        for (epoch, record) in self.epochs.iter().enumerate() {
            let mut fields = vec![
                epoch.to_string(),
                record.train_loss.to_string(),
                record.train_top1.to_string(),
                record.val_loss.to_string(),
                record.val_top1.to_string(),
            ];
            for snapshot in &record.gt {
                fields.extend(snapshot.weights.iter().map(|w| w.to_string()));
                fields.push(snapshot.mixer.to_string());
            }
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

/// Epoch with the highest validation top-1; ties go to the earliest epoch.
pub fn select_best_epoch(history: &RunHistory) -> Result<usize> {
    if history.epochs.is_empty() {
        return Err(GtError::EmptyHistory);
    }
    let mut best = 0;
    for (i, record) in history.epochs.iter().enumerate().skip(1) {
        if record.val_top1 > history.epochs[best].val_top1 {
            best = i;
        }
    }
    Ok(best)
}

/// Synthetic basis-recovery task: labels carry the sign of one coefficient
/// in the target basis, while a competing basis direction injects
/// label-free variance.
#[derive(Debug, Clone)]
pub struct BasisRecoveryConfig {
    pub target: TransformKind,
    pub n: usize,
    pub train_samples: usize,
    pub val_samples: usize,
    pub coefficient_index: usize,
    pub noise_amplitude: f64,
    pub label_flip_prob: f64,
    /// Samples whose labeling coefficient falls below this fraction of its
    /// standard deviation are redrawn, so the clean task is separable with
    /// a margin.
    pub margin_frac: f64,
    pub gt_lr_multiplier: f64,
    pub train: TrainConfig,
}

impl BasisRecoveryConfig {
    /// Defaults sized for a seconds-scale run at N = 8.
    pub fn new(target: TransformKind, seed: u64) -> Self {
        BasisRecoveryConfig {
            target,
            n: 8,
            train_samples: 2000,
            val_samples: 500,
            coefficient_index: 3,
            noise_amplitude: 2.0,
            label_flip_prob: 0.05,
            margin_frac: 0.1,
            gt_lr_multiplier: 0.3,
            train: TrainConfig {
                optimizer: Optimizer::Sgd {
                    momentum: 0.5,
                    weight_decay: 1e-4,
                },
                schedule: Schedule::StepDecay {
                    initial_lr: 0.05,
                    factor: 0.1,
                    every_epochs: 31.0,
                },
                batch_size: 250,
                epochs: 15,
                seed,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct BasisRecoveryOutcome {
    pub history: RunHistory,
    pub final_params: GtParams,
    /// Validation top-1 of a classifier trained identically on the exact
    /// target-basis coefficient.
    pub oracle_val_top1: f64,
}

struct Dataset {
    inputs: Vec<Vec<f64>>,
    labels: Vec<usize>,
    /// Exact target-basis coefficient per sample, for the oracle.
    oracle_features: Vec<f64>,
}

fn sample_standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; two uniforms per draw keeps the stream simple.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn generate_dataset(
    config: &BasisRecoveryConfig,
    samples: usize,
    flip_labels: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Dataset> {
    let target = build_kernel(config.target, config.n)?;
    let target_row: Vec<f64> = target
        .entries
        .row(config.coefficient_index)
        .iter()
        .map(|z| z.re)
        .collect();
    let sigma = dot(&target_row, &target_row).sqrt();

    // Noise lives along the analysis rows of every competing transform in
    // the list, orthogonalized against the target row: the labeling
    // coefficient never sees the noise, while each competing blend
    // component does.
    let list = transform_list_for(config.target)?;
    let mut directions: Vec<Vec<f64>> = Vec::new();
    for kind in list.iter().filter(|k| **k != config.target) {
        let kernel = build_kernel(*kind, config.n)?;
        let row = kernel.entries.row(config.coefficient_index);
        for part in [|z: &num_complex::Complex64| z.re, |z: &num_complex::Complex64| z.im] {
            let mut dir: Vec<f64> = row.iter().map(part).collect();
            let overlap = dot(&dir, &target_row) / (sigma * sigma);
            for (d, t) in dir.iter_mut().zip(&target_row) {
                *d -= overlap * t;
            }
            let norm = dot(&dir, &dir).sqrt();
            if norm > 1e-10 {
                for d in &mut dir {
                    *d /= norm;
                }
                directions.push(dir);
            }
        }
    }
    if directions.is_empty() && config.noise_amplitude != 0.0 {
        return Err(GtError::InvalidConfig(
            "every competing row is parallel to the target row; no noise direction".into(),
        ));
    }

    let margin = config.margin_frac * sigma;
    let mut inputs = Vec::with_capacity(samples);
    let mut labels = Vec::with_capacity(samples);
    let mut oracle_features = Vec::with_capacity(samples);
    for _ in 0..samples {
        let (signal, coeff) = loop {
            let candidate: Vec<f64> =
                (0..config.n).map(|_| sample_standard_normal(rng)).collect();
            let coeff = dot(&target_row, &candidate);
            if coeff.abs() >= margin {
                break (candidate, coeff);
            }
        };
        let mut label = usize::from(coeff > 0.0);
        if flip_labels && rng.gen_range(0.0..1.0) < config.label_flip_prob {
            label = 1 - label;
        }
        let mut x = signal;
        for dir in &directions {
            let eta = sample_standard_normal(rng);
            for (v, &d) in x.iter_mut().zip(dir) {
                *v += config.noise_amplitude * eta * d;
            }
        }
        // The oracle reads the exact coefficient off the released input.
        let oracle = dot(&target_row, &x);
        inputs.push(x);
        labels.push(label);
        oracle_features.push(oracle);
    }
    Ok(Dataset {
        inputs,
        labels,
        oracle_features,
    })
}

fn transform_list_for(target: TransformKind) -> Result<Vec<TransformKind>> {
    let vision = GtParams::vision().transforms;
    let nlp = GtParams::nlp().transforms;
    if vision.contains(&target) {
        Ok(vision)
    } else if nlp.contains(&target) {
        Ok(nlp)
    } else {
        Err(GtError::InvalidConfig(format!(
            "target {target} is in neither the vision nor the NLP transform list"
        )))
    }
}

/// Two-class head on a single scalar feature.
#[derive(Debug, Clone)]
struct ScalarHead {
    w: [f64; 2],
    b: [f64; 2],
}

impl ScalarHead {
    fn logits(&self, f: f64) -> [f64; 2] {
        [self.w[0] * f + self.b[0], self.w[1] * f + self.b[1]]
    }
}

/// Train the blend + scalar head on the synthetic task and report the
/// trajectory together with the identically trained oracle classifier.
pub fn run_basis_recovery_experiment(
    config: &BasisRecoveryConfig,
) -> Result<BasisRecoveryOutcome> {
    config.train.validate()?;
    let list = transform_list_for(config.target)?;
    if config.coefficient_index >= config.n {
        return Err(GtError::InvalidConfig(format!(
            "coefficient index {} out of range for N = {}",
            config.coefficient_index, config.n
        )));
    }

    let mut data_rng = ChaCha8Rng::seed_from_u64(config.train.seed);
    let train_set = generate_dataset(config, config.train_samples, true, &mut data_rng)?;
    let val_set = generate_dataset(config, config.val_samples, false, &mut data_rng)?;

    // Neutral start: every component weighted equally, mixer halfway.
    let m = list.len() - 1;
    let neutral = 1.0 / list.len() as f64;
    let mut params = GtParams::new(list, vec![neutral; m], 0.5)?;
    let mut head = ScalarHead {
        w: [0.0; 2],
        b: [0.0; 2],
    };

    let mut opt_state = OptimizerState::default();
    let mut history = RunHistory::default();
    let steps_per_epoch = config.train_samples.div_ceil(config.train.batch_size);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.train.seed.wrapping_add(1));
    let j = config.coefficient_index;

    for epoch in 0..config.train.epochs {
        let mut order: Vec<usize> = (0..config.train_samples).collect();
        // Fisher-Yates with the dedicated stream.
        for i in (1..order.len()).rev() {
            let k = shuffle_rng.gen_range(0..=i);
            order.swap(i, k);
        }
        for (step, batch) in order.chunks(config.train.batch_size).enumerate() {
            let epoch_float = epoch as f64 + step as f64 / steps_per_epoch as f64;
            let lr = lr_at(&config.train.schedule, epoch_float);

            let mut logits = Array2::zeros((batch.len(), 2));
            let mut features = Vec::with_capacity(batch.len());
            let mut caches = Vec::with_capacity(batch.len());
            for (row, &idx) in batch.iter().enumerate() {
                let (out, cache) = gt_forward_1d(&params, &train_set.inputs[idx])?;
                let f = out[j];
                let l = head.logits(f);
                logits[[row, 0]] = l[0];
                logits[[row, 1]] = l[1];
                features.push(f);
                caches.push(cache);
            }
            let batch_labels: Vec<usize> = batch.iter().map(|&i| train_set.labels[i]).collect();
            let (_, dlogits) = cross_entropy(&logits, &batch_labels)?;

            let mut dw = [0.0; 2];
            let mut db = [0.0; 2];
            let mut dweights = vec![0.0; params.weights.len()];
            let mut dmixer = 0.0;
            for (row, &idx) in batch.iter().enumerate() {
                let dl = [dlogits[[row, 0]], dlogits[[row, 1]]];
                for c in 0..2 {
                    dw[c] += dl[c] * features[row];
                    db[c] += dl[c];
                }
                let dfeature = head.w[0] * dl[0] + head.w[1] * dl[1];
                let mut upstream = vec![0.0; config.n];
                upstream[j] = dfeature;
                let (dp, dp3) = gt_grad_params(
                    &params,
                    &train_set.inputs[idx],
                    &upstream,
                    &caches[row],
                )?;
                for (acc, d) in dweights.iter_mut().zip(&dp) {
                    *acc += d;
                }
                dmixer += dp3;
            }

            let mixer_grad = [dmixer];
            let mut mixer_value = [params.mixer];
            let mut groups = [
                ParamGroup::new(&mut head.w, &dw),
                ParamGroup::new(&mut head.b, &db).no_decay(),
                ParamGroup::new(&mut params.weights, &dweights)
                    .no_decay()
                    .with_lr_scale(config.gt_lr_multiplier),
                ParamGroup::new(&mut mixer_value, &mixer_grad)
                    .no_decay()
                    .with_lr_scale(config.gt_lr_multiplier),
            ];
            config.train.optimizer.step(&mut groups, &mut opt_state, lr)?;
            params.mixer = mixer_value[0];
        }

        let evaluate = |set: &Dataset| -> Result<(f64, f64)> {
            let mut logits = Array2::zeros((set.inputs.len(), 2));
            for (row, x) in set.inputs.iter().enumerate() {
                let (out, _) = gt_forward_1d(&params, x)?;
                let l = head.logits(out[j]);
                logits[[row, 0]] = l[0];
                logits[[row, 1]] = l[1];
            }
            let (loss, _) = cross_entropy(&logits, &set.labels)?;
            let top1 = top1_accuracy(&logits, &set.labels)?;
            Ok((loss, top1))
        };
        let (train_loss, train_top1) = evaluate(&train_set)?;
        let (val_loss, val_top1) = evaluate(&val_set)?;
        history.epochs.push(EpochRecord {
            train_loss,
            train_top1,
            val_loss,
            val_top1,
            gt: vec![GtSnapshot::from(&params)],
        });
    }

    let oracle_val_top1 = train_oracle_classifier(config, &train_set, &val_set)?;
    Ok(BasisRecoveryOutcome {
        history,
        final_params: params,
        oracle_val_top1,
    })
}

/// Logistic regression on the exact target-basis coefficient, trained with
/// the same optimizer, schedule, batching, and seed as the blend model.
fn train_oracle_classifier(
    config: &BasisRecoveryConfig,
    train_set: &Dataset,
    val_set: &Dataset,
) -> Result<f64> {
    let mut head = ScalarHead {
        w: [0.0; 2],
        b: [0.0; 2],
    };
    let mut opt_state = OptimizerState::default();
    let steps_per_epoch = config.train_samples.div_ceil(config.train.batch_size);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.train.seed.wrapping_add(1));
    for epoch in 0..config.train.epochs {
        let mut order: Vec<usize> = (0..train_set.inputs.len()).collect();
        for i in (1..order.len()).rev() {
            let k = shuffle_rng.gen_range(0..=i);
            order.swap(i, k);
        }
        for (step, batch) in order.chunks(config.train.batch_size).enumerate() {
            let epoch_float = epoch as f64 + step as f64 / steps_per_epoch as f64;
            let lr = lr_at(&config.train.schedule, epoch_float);
            let mut logits = Array2::zeros((batch.len(), 2));
            for (row, &idx) in batch.iter().enumerate() {
                let l = head.logits(train_set.oracle_features[idx]);
                logits[[row, 0]] = l[0];
                logits[[row, 1]] = l[1];
            }
            let batch_labels: Vec<usize> = batch.iter().map(|&i| train_set.labels[i]).collect();
            let (_, dlogits) = cross_entropy(&logits, &batch_labels)?;
            let mut dw = [0.0; 2];
            let mut db = [0.0; 2];
            for (row, &idx) in batch.iter().enumerate() {
                for c in 0..2 {
                    dw[c] += dlogits[[row, c]] * train_set.oracle_features[idx];
                    db[c] += dlogits[[row, c]];
                }
            }
            let mut groups = [
                ParamGroup::new(&mut head.w, &dw),
                ParamGroup::new(&mut head.b, &db).no_decay(),
            ];
            config.train.optimizer.step(&mut groups, &mut opt_state, lr)?;
        }
    }
    let mut logits = Array2::zeros((val_set.inputs.len(), 2));
    for (row, &f) in val_set.oracle_features.iter().enumerate() {
        let l = head.logits(f);
        logits[[row, 0]] = l[0];
        logits[[row, 1]] = l[1];
    }
    top1_accuracy(&logits, &val_set.labels)
}
