//! `gt` — kernels, blends, feature pipelines, training toys, and the LCU
//! simulator from the command line.
//!
//! Exit codes: 0 success, 1 a requested check failed, 2 usage or input
//! error. All randomized commands are deterministic under `--seed`. A
//! `--config` file supplies `key=value` defaults; explicit flags win.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;

use general_transform::error::{GtError, Result};
use general_transform::gradcheck::{gradcheck_encoder, gradcheck_gt, Pipeline};
use general_transform::gt::{blend_kernel, GtParams};
use general_transform::io::{atomic_write, Tensor};
use general_transform::kernels::{
    apply_kernel, build_kernel, build_kernel_with, KernelMatrix, KernelOptions, TransformKind,
};
use general_transform::qgt::{
    build_experiment_config, lcu_apply, qgt_matrix, random_unitary_spec, train_qgt_toy,
    LcuConfig, QState,
};
use general_transform::train::{
    run_basis_recovery_experiment, select_best_epoch, BasisRecoveryConfig, Optimizer, Schedule,
};
use general_transform::vision::{
    extract_features, fit_channel_stats, normalize, rgb_to_ycbcr, CoefficientOrder, PerChannelGt,
    RgbImage,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "gt", version, about = "Blended discrete transforms: kernels, features, training toys, and an LCU simulator")]
struct Cli {
    /// Seed for every randomized command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write results here instead of stdout (binary outputs require it).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// key=value file with per-flag defaults; explicit flags override.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Export one transform kernel as a tensor file.
    Kernel(KernelArgs),
    /// Apply a kernel to a vector from a tensor file.
    Apply(ApplyArgs),
    /// Export a blended kernel matrix.
    Blend(BlendArgs),
    /// Verify analytic gradients against central finite differences.
    Gradcheck(GradcheckArgs),
    /// Run the block feature pipeline on a PPM image.
    Features(FeaturesArgs),
    /// Train the blend on the synthetic basis-recovery task.
    TrainToy(TrainToyArgs),
    /// Check the LCU circuit against the direct weighted sum, or train the
    /// mixture weights on the toy task.
    Qgt(QgtArgs),
}

#[derive(Args)]
struct KernelArgs {
    /// dft | dct2 | haar | dlt | identity
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    /// Rescale DCT-II rows to an orthonormal matrix.
    #[arg(long)]
    orthonormal_dct: bool,
}

#[derive(Args)]
struct ApplyArgs {
    #[arg(long)]
    kind: Option<String>,
    /// Tensor file holding the input vector (real or complex).
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Args)]
struct BlendArgs {
    /// Blend parameter file (key=value text).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Comma-separated transform list, e.g. dct2,dft,haar.
    #[arg(long)]
    transforms: Option<String>,
    /// Comma-separated weights, one fewer than transforms.
    #[arg(long)]
    weights: Option<String>,
    #[arg(long)]
    mixer: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// vision | nlp | encoder
    #[arg(long)]
    pipeline: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct FeaturesArgs {
    /// Input image (binary PPM, P6).
    #[arg(long)]
    image: Option<PathBuf>,
    /// Coefficients retained per color channel.
    #[arg(long)]
    k: Option<usize>,
    /// zigzag | raster
    #[arg(long)]
    order: Option<String>,
    /// Blend parameter files per channel (default: DCT corner).
    #[arg(long)]
    params_y: Option<PathBuf>,
    #[arg(long)]
    params_cb: Option<PathBuf>,
    #[arg(long)]
    params_cr: Option<PathBuf>,
    /// Fail on dimensions not divisible by 8 instead of center-cropping.
    #[arg(long)]
    no_crop: bool,
    /// Standardize channels using stats fit on this image.
    #[arg(long)]
    normalize: bool,
}

#[derive(Args)]
struct TrainToyArgs {
    /// Target transform the labels live in (dct2, identity, ...).
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    train_samples: Option<usize>,
    #[arg(long)]
    val_samples: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    flip_prob: Option<f64>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    coefficient: Option<usize>,
    #[arg(long)]
    gt_lr_mult: Option<f64>,
}

#[derive(Args)]
struct QgtArgs {
    /// S1 | S2 | S3 | S4 | random
    #[arg(long)]
    experiment: Option<String>,
    /// Emit per-case equivalence residuals (default action).
    #[arg(long)]
    check_lcu: bool,
    #[arg(long)]
    cases: Option<usize>,
    /// Train the mixture weights for this many steps instead.
    #[arg(long)]
    train_steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
}

/// key=value defaults, lowest precedence.
struct ConfigMap(HashMap<String, String>);

impl ConfigMap {
    fn load(path: Option<&Path>) -> Result<Self> {
        let mut map = HashMap::new();
        if let Some(path) = path {
            let content = std::fs::read_to_string(path)?;
            for (lineno, line) in content.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    GtError::Format(format!(
                        "config line {}: expected key=value",
                        lineno + 1
                    ))
                })?;
                map.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        Ok(ConfigMap(map))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                GtError::Format(format!("config key {key}: cannot parse {raw:?}"))
            }),
        }
    }
}

fn pick<T: FromStr>(flag: Option<T>, config: &ConfigMap, key: &str, default: T) -> Result<T> {
    if let Some(v) = flag {
        return Ok(v);
    }
    Ok(config.get::<T>(key)?.unwrap_or(default))
}

fn pick_required<T: FromStr>(flag: Option<T>, config: &ConfigMap, key: &str) -> Result<T> {
    if let Some(v) = flag {
        return Ok(v);
    }
    config.get::<T>(key)?.ok_or_else(|| {
        GtError::InvalidConfig(format!("missing required value --{}", key.replace('_', "-")))
    })
}

fn emit(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        Some(path) => atomic_write(path, content.as_bytes()),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn required_out(out: Option<&Path>) -> Result<&Path> {
    out.ok_or_else(|| GtError::InvalidConfig("this command writes binary output; pass --out".into()))
}

fn kernel_to_tensor(kernel: &KernelMatrix) -> Tensor {
    let dims = vec![kernel.size, kernel.size];
    if kernel.kind == TransformKind::Dft {
        Tensor::complex(dims, kernel.entries.iter().copied().collect()).unwrap()
    } else {
        Tensor::real(dims, kernel.entries.iter().map(|z| z.re).collect()).unwrap()
    }
}

fn cmd_kernel(args: KernelArgs, config: &ConfigMap, out: Option<&Path>) -> Result<i32> {
    let kind: String = pick_required(args.kind, config, "kind")?;
    let kind: TransformKind = kind.parse()?;
    let n = pick_required(args.n, config, "n")?;
    let opts = KernelOptions {
        orthonormal_dct: args.orthonormal_dct,
    };
    let kernel = build_kernel_with(kind, n, &opts)?;
    let path = required_out(out)?;
    kernel_to_tensor(&kernel).save(path)?;
    // Round-trip guard: the exported bytes decode to the same matrix.
    let reread = Tensor::load(path)?;
    if reread != kernel_to_tensor(&kernel) {
        return Err(GtError::Format("exported kernel failed verification".into()));
    }
    eprintln!("wrote {}x{} {} kernel to {}", n, n, kind, path.display());
    Ok(0)
}

fn cmd_apply(args: ApplyArgs, config: &ConfigMap, out: Option<&Path>) -> Result<i32> {
    let kind: String = pick_required(args.kind, config, "kind")?;
    let kind: TransformKind = kind.parse()?;
    let input: PathBuf = pick_required(args.input, config, "input")?;
    let tensor = Tensor::load(&input)?;
    if tensor.dims.len() != 1 {
        return Err(GtError::Format(format!(
            "expected a 1-D tensor, got dims {:?}",
            tensor.dims
        )));
    }
    let x = tensor.to_complex();
    let kernel = build_kernel(kind, x.len())?;
    let y = apply_kernel(&kernel, &x)?;
    let result = Tensor::complex(vec![y.len()], y)?;
    result.save(required_out(out)?)?;
    Ok(0)
}

fn parse_params(args: &BlendArgs, config: &ConfigMap) -> Result<GtParams> {
    if let Some(path) = &args.params {
        return GtParams::from_text(&std::fs::read_to_string(path)?);
    }
    let transforms: String = pick_required(args.transforms.clone(), config, "transforms")?;
    let transforms: Result<Vec<TransformKind>> =
        transforms.split(',').map(|s| s.trim().parse()).collect();
    let weights: String = pick_required(args.weights.clone(), config, "weights")?;
    let weights: std::result::Result<Vec<f64>, _> =
        weights.split(',').map(|s| s.trim().parse::<f64>()).collect();
    let weights =
        weights.map_err(|e| GtError::Format(format!("cannot parse weights: {e}")))?;
    let mixer = pick_required(args.mixer, config, "mixer")?;
    GtParams::new(transforms?, weights, mixer)
}

fn cmd_blend(args: BlendArgs, config: &ConfigMap, out: Option<&Path>) -> Result<i32> {
    let n = pick_required(args.n, config, "n")?;
    let params = parse_params(&args, config)?;
    let blended = blend_kernel(&params, n)?;
    let tensor = Tensor::complex(vec![n, n], blended.entries.iter().copied().collect())?;
    tensor.save(required_out(out)?)?;
    Ok(0)
}

fn cmd_gradcheck(
    args: GradcheckArgs,
    config: &ConfigMap,
    seed: u64,
    out: Option<&Path>,
) -> Result<i32> {
    let pipeline: String = pick(args.pipeline, config, "pipeline", "vision".into())?;
    let pipeline: Pipeline = pipeline.parse()?;
    let n = pick(args.n, config, "n", 8)?;
    let trials = pick(args.trials, config, "trials", 100)?;
    let (report, tol) = match pipeline {
        Pipeline::Encoder => (
            gradcheck_encoder(trials, seed)?,
            pick(args.tol, config, "tol", 1e-4)?,
        ),
        p => (
            gradcheck_gt(p, n, trials, seed)?,
            pick(args.tol, config, "tol", 1e-6)?,
        ),
    };
    let mut csv = String::from("trial,max_rel_err\n");
    for (i, err) in report.trial_errors.iter().enumerate() {
        csv.push_str(&format!("{i},{err}\n"));
    }
    emit(out, &csv)?;
    eprintln!("max relative error {} (tolerance {tol})", report.max_error);
    Ok(if report.passes(tol) { 0 } else { 1 })
}

fn load_channel_params(path: Option<&Path>) -> Result<GtParams> {
    match path {
        Some(p) => GtParams::from_text(&std::fs::read_to_string(p)?),
        None => Ok(GtParams::vision()),
    }
}

fn cmd_features(args: FeaturesArgs, config: &ConfigMap, out: Option<&Path>) -> Result<i32> {
    let image: PathBuf = pick_required(args.image, config, "image")?;
    let k = pick(args.k, config, "k", 24)?;
    let order: String = pick(args.order, config, "order", "zigzag".into())?;
    let order = match order.as_str() {
        "zigzag" => CoefficientOrder::Zigzag,
        "raster" => CoefficientOrder::Raster,
        other => {
            return Err(GtError::InvalidConfig(format!(
                "unknown coefficient order {other:?}"
            )))
        }
    };
    let gts = PerChannelGt::new(
        load_channel_params(args.params_y.as_deref())?,
        load_channel_params(args.params_cb.as_deref())?,
        load_channel_params(args.params_cr.as_deref())?,
    )?;
    // The image may be a PPM or an (H, W, 3) tensor file; sniff the magic.
    let head = std::fs::read(&image)?;
    let rgb = if head.starts_with(b"GTTF") {
        RgbImage::from_tensor(&Tensor::load(&image)?)?
    } else {
        RgbImage::from_ppm_bytes(&head)?
    };
    let mut planes = rgb_to_ycbcr(&rgb)?;
    if !args.no_crop {
        planes = planes.center_crop()?;
    }
    let mut features = extract_features(&planes, &gts, k, order)?;
    if args.normalize {
        let stats = fit_channel_stats(std::slice::from_ref(&features))?;
        features = normalize(&features, &stats)?;
    }
    features.to_tensor().save(required_out(out)?)?;
    eprintln!(
        "wrote {} channels on a {}x{} grid",
        features.channels, features.block_rows, features.block_cols
    );
    Ok(0)
}

fn cmd_train_toy(
    args: TrainToyArgs,
    config: &ConfigMap,
    seed: u64,
    out: Option<&Path>,
) -> Result<i32> {
    let target: String = pick(args.target, config, "target", "dct2".into())?;
    let target: TransformKind = target.parse()?;
    let mut experiment = BasisRecoveryConfig::new(target, seed);
    experiment.n = pick(args.n, config, "n", experiment.n)?;
    experiment.train_samples =
        pick(args.train_samples, config, "train_samples", experiment.train_samples)?;
    experiment.val_samples =
        pick(args.val_samples, config, "val_samples", experiment.val_samples)?;
    experiment.coefficient_index =
        pick(args.coefficient, config, "coefficient", experiment.coefficient_index)?;
    experiment.noise_amplitude = pick(args.noise, config, "noise", experiment.noise_amplitude)?;
    experiment.label_flip_prob =
        pick(args.flip_prob, config, "flip_prob", experiment.label_flip_prob)?;
    experiment.margin_frac = pick(args.margin, config, "margin", experiment.margin_frac)?;
    experiment.gt_lr_multiplier =
        pick(args.gt_lr_mult, config, "gt_lr_mult", experiment.gt_lr_multiplier)?;
    experiment.train.epochs = pick(args.epochs, config, "epochs", experiment.train.epochs)?;
    experiment.train.batch_size =
        pick(args.batch_size, config, "batch_size", experiment.train.batch_size)?;
    let lr = pick(args.lr, config, "lr", 0.05)?;
    let momentum = pick(args.momentum, config, "momentum", 0.5)?;
    let weight_decay = pick(args.weight_decay, config, "weight_decay", 1e-4)?;
    experiment.train.optimizer = Optimizer::Sgd {
        momentum,
        weight_decay,
    };
    experiment.train.schedule = Schedule::StepDecay {
        initial_lr: lr,
        factor: 0.1,
        every_epochs: 31.0,
    };
    let outcome = run_basis_recovery_experiment(&experiment)?;
    emit(out, &outcome.history.to_csv())?;
    let best = select_best_epoch(&outcome.history)?;
    eprintln!(
        "best epoch {} (val top-1 {:.2}); oracle val top-1 {:.2}",
        best, outcome.history.epochs[best].val_top1, outcome.oracle_val_top1
    );
    Ok(0)
}

fn experiment_menu(name: &str, seed: u64, case: usize) -> Result<LcuConfig> {
    if name.eq_ignore_ascii_case("random") {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(case as u64));
        let n = rng.gen_range(1..=3usize);
        let count = rng.gen_range(1..=4usize);
        let menu = (0..count).map(|_| random_unitary_spec(n, &mut rng)).collect();
        let mut config = LcuConfig::uniform(menu)?;
        for logit in &mut config.raw_logits {
            *logit = rng.gen_range(-1.0..1.0);
        }
        Ok(config)
    } else {
        build_experiment_config(name)
    }
}

fn cmd_qgt(args: QgtArgs, config: &ConfigMap, seed: u64, out: Option<&Path>) -> Result<i32> {
    let experiment: String = pick(args.experiment, config, "experiment", "S1".into())?;
    if let Some(steps) = args.train_steps {
        if args.check_lcu {
            return Err(GtError::InvalidConfig(
                "--check-lcu and --train-steps are mutually exclusive".into(),
            ));
        }
        let lr = pick(args.lr, config, "lr", 0.5)?;
        let menu = experiment_menu(&experiment, seed, 0)?;
        let outcome = train_qgt_toy(&menu, steps, lr, seed)?;
        let m = outcome.final_config.raw_logits.len();
        let mut csv = String::from("step,loss");
        for i in 0..m {
            csv.push_str(&format!(",w{i}"));
        }
        csv.push('\n');
        for (step, (loss, weights)) in outcome
            .losses
            .iter()
            .zip(&outcome.weights_per_step)
            .enumerate()
        {
            csv.push_str(&step.to_string());
            csv.push(',');
            csv.push_str(&loss.to_string());
            for w in weights {
                csv.push(',');
                csv.push_str(&w.to_string());
            }
            csv.push('\n');
        }
        emit(out, &csv)?;
        let decreased = outcome.losses.last().unwrap() < &outcome.losses[0];
        return Ok(if decreased { 0 } else { 1 });
    }

    // Equivalence check (default action).
    let cases = pick(args.cases, config, "cases", 50)?;
    let tol = pick(args.tol, config, "tol", 1e-10)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut csv = String::from("case,qubits,menu,success_prob,fidelity_residual,success_residual\n");
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let menu = experiment_menu(&experiment, seed, case)?;
        let n = menu.num_qubits();
        let dim = 1usize << n;
        let raw: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let amplitudes: Vec<Complex64> =
            raw.iter().map(|&v| Complex64::new(v / norm, 0.0)).collect();
        let input = QState::new(n, amplitudes)?;
        let direct = qgt_matrix(&menu)?;
        let mut expected = vec![Complex64::new(0.0, 0.0); dim];
        for i in 0..dim {
            for j in 0..dim {
                expected[i] += direct[[i, j]] * input.amplitudes[j];
            }
        }
        let expected_success: f64 = expected.iter().map(|z| z.norm_sqr()).sum();
        let labels: Vec<&str> = menu.unitaries.iter().map(|u| u.label()).collect();
        match lcu_apply(&menu, &input) {
            Ok((output, success)) => {
                let scale = expected_success.sqrt();
                let fidelity: f64 = output
                    .amplitudes
                    .iter()
                    .zip(&expected)
                    .map(|(a, b)| (a.conj() * (b / scale)).re)
                    .sum();
                let fidelity_residual = (1.0 - fidelity).abs();
                let success_residual = (success - expected_success).abs();
                worst = worst.max(fidelity_residual).max(success_residual);
                csv.push_str(&format!(
                    "{case},{n},{},{success},{fidelity_residual},{success_residual}\n",
                    labels.join("+")
                ));
            }
            Err(GtError::PostselectionImpossible(p)) => {
                worst = worst.max(expected_success);
                csv.push_str(&format!(
                    "{case},{n},{},{p},{},0\n",
                    labels.join("+"),
                    expected_success
                ));
            }
            Err(other) => return Err(other),
        }
    }
    emit(out, &csv)?;
    eprintln!("worst residual {worst} (tolerance {tol})");
    Ok(if worst < tol { 0 } else { 1 })
}

fn run(cli: Cli) -> Result<i32> {
    let config = ConfigMap::load(cli.config.as_deref())?;
    let seed = match cli.seed {
        Some(s) => s,
        None => config.get::<u64>("seed")?.unwrap_or(0),
    };
    let out = cli.out.as_deref();
    match cli.command {
        Command::Kernel(args) => cmd_kernel(args, &config, out),
        Command::Apply(args) => cmd_apply(args, &config, out),
        Command::Blend(args) => cmd_blend(args, &config, out),
        Command::Gradcheck(args) => cmd_gradcheck(args, &config, seed, out),
        Command::Features(args) => cmd_features(args, &config, out),
        Command::TrainToy(args) => cmd_train_toy(args, &config, seed, out),
        Command::Qgt(args) => cmd_qgt(args, &config, seed, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("gt: {err}");
            ExitCode::from(2)
        }
    }
}
