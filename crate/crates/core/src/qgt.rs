//! Statevector simulation of the quantum blend: a non-unitary operator
//! Σᵢ pᵢ·Uᵢ realized by ancilla preparation, a multiplexed SELECT, and
//! postselection, with softmax-parameterized weights so training keeps them
//! positive and summing to one.
//!
//! Qubit 0 is the most significant bit of a basis index. The unitary menu
//! (QFT ladder, Clifford+T sequences, IQP sandwiches, ring-entangled
//! rotation layers) is built gate by gate on the statevector.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GtError, Result};
use crate::train::cross_entropy;

const UNITARY_TOL: f64 = 1e-10;
const POSTSELECT_FLOOR: f64 = 1e-14;
const MAX_ANCILLAS: usize = 16;

/// A pure state on `num_qubits` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct QState {
    pub num_qubits: usize,
    pub amplitudes: Vec<Complex64>,
}

impl QState {
    pub fn new(num_qubits: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != 1 << num_qubits {
            return Err(GtError::DimensionMismatch {
                expected: 1 << num_qubits,
                got: amplitudes.len(),
            });
        }
        let state = QState {
            num_qubits,
            amplitudes,
        };
        let norm = state.norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(GtError::InvalidConfig(format!(
                "state norm {norm} is not 1"
            )));
        }
        Ok(state)
    }

    pub fn basis(num_qubits: usize, index: usize) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << num_qubits];
        amplitudes[index] = Complex64::new(1.0, 0.0);
        QState {
            num_qubits,
            amplitudes,
        }
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// Normalize a classical vector of length 2ⁿ into amplitudes, returning the
/// norm for later rescaling.
pub fn amplitude_encode(x: &[f64]) -> Result<(QState, f64)> {
    if x.is_empty() || !x.len().is_power_of_two() {
        return Err(GtError::InvalidSize(format!(
            "amplitude encoding needs a power-of-two length, got {}",
            x.len()
        )));
    }
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(GtError::ZeroVector);
    }
    let amplitudes = x.iter().map(|&v| Complex64::new(v / norm, 0.0)).collect();
    Ok((
        QState {
            num_qubits: x.len().trailing_zeros() as usize,
            amplitudes,
        },
        norm,
    ))
}

/// Clifford+T gate alphabet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CtGate {
    H(usize),
    S(usize),
    T(usize),
    Cnot { control: usize, target: usize },
}

/// Per-qubit (Rz, Ry, Rz) angles for one entangling layer.
#[derive(Debug, Clone, PartialEq)]
pub struct QnnLayer {
    pub angles: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum UnitarySpec {
    Qft {
        num_qubits: usize,
    },
    CliffordT {
        num_qubits: usize,
        gates: Vec<CtGate>,
    },
    Iqp {
        num_qubits: usize,
        z_angles: Vec<f64>,
        zz_angles: Vec<(usize, usize, f64)>,
    },
    Qnn {
        num_qubits: usize,
        layers: Vec<QnnLayer>,
    },
}

impl UnitarySpec {
    pub fn num_qubits(&self) -> usize {
        match *self {
            UnitarySpec::Qft { num_qubits }
            | UnitarySpec::CliffordT { num_qubits, .. }
            | UnitarySpec::Iqp { num_qubits, .. }
            | UnitarySpec::Qnn { num_qubits, .. } => num_qubits,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            UnitarySpec::Qft { .. } => "qft",
            UnitarySpec::CliffordT { .. } => "clifford_t",
            UnitarySpec::Iqp { .. } => "iqp",
            UnitarySpec::Qnn { .. } => "qnn",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_qubits();
        if n == 0 || n > MAX_ANCILLAS {
            return Err(GtError::InvalidSpec(format!("{n} qubits out of range")));
        }
        let check_qubit = |q: usize| -> Result<()> {
            if q >= n {
                return Err(GtError::InvalidSpec(format!(
                    "gate touches qubit {q} of a {n}-qubit register"
                )));
            }
            Ok(())
        };
        match self {
            UnitarySpec::Qft { .. } => {}
            UnitarySpec::CliffordT { gates, .. } => {
                for gate in gates {
                    match *gate {
                        CtGate::H(q) | CtGate::S(q) | CtGate::T(q) => check_qubit(q)?,
                        CtGate::Cnot { control, target } => {
                            check_qubit(control)?;
                            check_qubit(target)?;
                            if control == target {
                                return Err(GtError::InvalidSpec(
                                    "CNOT control equals target".into(),
                                ));
                            }
                        }
                    }
                }
            }
            UnitarySpec::Iqp {
                z_angles,
                zz_angles,
                ..
            } => {
                if z_angles.len() != n {
                    return Err(GtError::InvalidSpec(format!(
                        "{} Z angles for {n} qubits",
                        z_angles.len()
                    )));
                }
                for &(a, b, _) in zz_angles {
                    check_qubit(a)?;
                    check_qubit(b)?;
                    if a == b {
                        return Err(GtError::InvalidSpec("ZZ phase needs two qubits".into()));
                    }
                }
            }
            UnitarySpec::Qnn { layers, .. } => {
                for layer in layers {
                    if layer.angles.len() != n {
                        return Err(GtError::InvalidSpec(format!(
                            "layer has {} angle triples for {n} qubits",
                            layer.angles.len()
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

fn apply_single_qubit(state: &mut [Complex64], n: usize, qubit: usize, u: [[Complex64; 2]; 2]) {
    let stride = 1usize << (n - 1 - qubit);
    let mut base = 0;
    while base < state.len() {
        for offset in 0..stride {
            let i0 = base + offset;
            let i1 = i0 + stride;
            let (a, b) = (state[i0], state[i1]);
            state[i0] = u[0][0] * a + u[0][1] * b;
            state[i1] = u[1][0] * a + u[1][1] * b;
        }
        base += stride * 2;
    }
}

fn apply_phase_if(state: &mut [Complex64], mask: usize, phase: Complex64) {
    for (idx, amp) in state.iter_mut().enumerate() {
        if idx & mask == mask {
            *amp *= phase;
        }
    }
}

fn apply_cnot(state: &mut [Complex64], n: usize, control: usize, target: usize) {
    let cbit = 1usize << (n - 1 - control);
    let tbit = 1usize << (n - 1 - target);
    for idx in 0..state.len() {
        if idx & cbit == cbit && idx & tbit == 0 {
            state.swap(idx, idx | tbit);
        }
    }
}

fn apply_swap(state: &mut [Complex64], n: usize, a: usize, b: usize) {
    let abit = 1usize << (n - 1 - a);
    let bbit = 1usize << (n - 1 - b);
    for idx in 0..state.len() {
        if idx & abit == abit && idx & bbit == 0 {
            state.swap(idx, (idx & !abit) | bbit);
        }
    }
}

fn h_matrix() -> [[Complex64; 2]; 2] {
    let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    [[s, s], [s, -s]]
}

fn rz_matrix(theta: f64) -> [[Complex64; 2]; 2] {
    let zero = Complex64::new(0.0, 0.0);
    [
        [Complex64::from_polar(1.0, -theta / 2.0), zero],
        [zero, Complex64::from_polar(1.0, theta / 2.0)],
    ]
}

fn ry_matrix(theta: f64) -> [[Complex64; 2]; 2] {
    let (s, c) = (theta / 2.0).sin_cos();
    let zero = 0.0;
    [
        [Complex64::new(c, zero), Complex64::new(-s, zero)],
        [Complex64::new(s, zero), Complex64::new(c, zero)],
    ]
}

/// Run a spec's circuit on a raw amplitude buffer.
fn run_circuit(spec: &UnitarySpec, state: &mut [Complex64]) {
    let n = spec.num_qubits();
    match spec {
        UnitarySpec::Qft { .. } => {
            // H plus the controlled-R_k ladder, then qubit reversal; R_k
            // applies the phase e^{i2pi/2^k} when control and target are set.
            for i in 0..n {
                apply_single_qubit(state, n, i, h_matrix());
                for j in 1..n - i {
                    let k = j + 1;
                    let phase =
                        Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / (1 << k) as f64);
                    let mask = (1usize << (n - 1 - i)) | (1usize << (n - 1 - (i + j)));
                    apply_phase_if(state, mask, phase);
                }
            }
            for i in 0..n / 2 {
                apply_swap(state, n, i, n - 1 - i);
            }
        }
        UnitarySpec::CliffordT { gates, .. } => {
            for gate in gates {
                match *gate {
                    CtGate::H(q) => apply_single_qubit(state, n, q, h_matrix()),
                    CtGate::S(q) => apply_phase_if(
                        state,
                        1usize << (n - 1 - q),
                        Complex64::new(0.0, 1.0),
                    ),
                    CtGate::T(q) => apply_phase_if(
                        state,
                        1usize << (n - 1 - q),
                        Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4),
                    ),
                    CtGate::Cnot { control, target } => {
                        apply_cnot(state, n, control, target)
                    }
                }
            }
        }
        UnitarySpec::Iqp {
            z_angles,
            zz_angles,
            ..
        } => {
            for q in 0..n {
                apply_single_qubit(state, n, q, h_matrix());
            }
            for (q, &theta) in z_angles.iter().enumerate() {
                apply_phase_if(state, 1usize << (n - 1 - q), Complex64::from_polar(1.0, theta));
            }
            for &(a, b, theta) in zz_angles {
                let mask = (1usize << (n - 1 - a)) | (1usize << (n - 1 - b));
                apply_phase_if(state, mask, Complex64::from_polar(1.0, theta));
            }
            for q in 0..n {
                apply_single_qubit(state, n, q, h_matrix());
            }
        }
        UnitarySpec::Qnn { layers, .. } => {
            for layer in layers {
                for (q, angles) in layer.angles.iter().enumerate() {
                    apply_single_qubit(state, n, q, rz_matrix(angles[0]));
                    apply_single_qubit(state, n, q, ry_matrix(angles[1]));
                    apply_single_qubit(state, n, q, rz_matrix(angles[2]));
                }
                if n >= 2 {
                    for q in 0..n {
                        apply_cnot(state, n, q, (q + 1) % n);
                    }
                }
            }
        }
    }
}

/// Realize the spec as a dense matrix by running its circuit on every basis
/// state; the result is checked unitary to 1e-10.
pub fn build_unitary(spec: &UnitarySpec) -> Result<Array2<Complex64>> {
    spec.validate()?;
    let n = spec.num_qubits();
    let dim = 1usize << n;
    let mut matrix = Array2::zeros((dim, dim));
    for col in 0..dim {
        let mut state = vec![Complex64::new(0.0, 0.0); dim];
        state[col] = Complex64::new(1.0, 0.0);
        run_circuit(spec, &mut state);
        for row in 0..dim {
            matrix[[row, col]] = state[row];
        }
    }
    // U^H U = I guards against construction mistakes.
    for i in 0..dim {
        for j in 0..dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..dim {
                acc += matrix[[k, i]].conj() * matrix[[k, j]];
            }
            let want = if i == j { 1.0 } else { 0.0 };
            if (acc - Complex64::new(want, 0.0)).norm() > UNITARY_TOL {
                return Err(GtError::InvalidSpec(format!(
                    "{} circuit is not unitary at ({i},{j})",
                    spec.label()
                )));
            }
        }
    }
    Ok(matrix)
}

/// Trainable mixture: positive weights summing to one via softmax over raw
/// logits, plus the unitary menu.
#[derive(Debug, Clone, PartialEq)]
pub struct LcuConfig {
    pub raw_logits: Vec<f64>,
    pub unitaries: Vec<UnitarySpec>,
}

impl LcuConfig {
    pub fn uniform(unitaries: Vec<UnitarySpec>) -> Result<Self> {
        let config = LcuConfig {
            raw_logits: vec![0.0; unitaries.len()],
            unitaries,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.unitaries.is_empty() {
            return Err(GtError::InvalidConfig("unitary menu is empty".into()));
        }
        if self.raw_logits.len() != self.unitaries.len() {
            return Err(GtError::ShapeMismatch(format!(
                "{} logits for {} unitaries",
                self.raw_logits.len(),
                self.unitaries.len()
            )));
        }
        let n = self.unitaries[0].num_qubits();
        for spec in &self.unitaries {
            spec.validate()?;
            if spec.num_qubits() != n {
                return Err(GtError::MixedDimensions);
            }
        }
        Ok(())
    }

    pub fn num_qubits(&self) -> usize {
        self.unitaries[0].num_qubits()
    }

    /// softmax(raw_logits): positive, sums to one.
    pub fn weights(&self) -> Vec<f64> {
        softmax(&self.raw_logits)
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// The weighted operator Σᵢ pᵢ·Uᵢ, generally non-unitary.
pub fn qgt_matrix(config: &LcuConfig) -> Result<Array2<Complex64>> {
    config.validate()?;
    let dim = 1usize << config.num_qubits();
    let weights = config.weights();
    let mut acc = Array2::zeros((dim, dim));
    for (spec, &p) in config.unitaries.iter().zip(&weights) {
        let u = build_unitary(spec)?;
        acc.zip_mut_with(&u, |a, &v| *a += p * v);
    }
    Ok(acc)
}

/// Full PREPARE / SELECT / postselect simulation on the joint
/// ancilla-system register. Returns the normalized postselected state and
/// the success probability ‖Σᵢ pᵢ·Uᵢ|ψ⟩‖².
pub fn lcu_apply(config: &LcuConfig, input: &QState) -> Result<(QState, f64)> {
    config.validate()?;
    let n = config.num_qubits();
    if input.num_qubits != n {
        return Err(GtError::DimensionMismatch {
            expected: n,
            got: input.num_qubits,
        });
    }
    let m = config.unitaries.len();
    let ancillas = usize::max(1, m.next_power_of_two().trailing_zeros() as usize);
    let ancillas = if m == 1 { 0 } else { ancillas };
    if ancillas > MAX_ANCILLAS {
        return Err(GtError::TooManyUnitaries {
            count: m,
            ancillas: MAX_ANCILLAS,
        });
    }
    let weights = config.weights();
    let chi: Vec<f64> = weights.iter().map(|p| p.sqrt()).collect();
    let dim = 1usize << n;

    // PREPARE ⊗ input.
    let mut joint = vec![Complex64::new(0.0, 0.0); (1 << ancillas) * dim];
    for (i, &c) in chi.iter().enumerate() {
        for (j, &amp) in input.amplitudes.iter().enumerate() {
            joint[(i << n) | j] = c * amp;
        }
    }
    // SELECT: block i gets its unitary.
    for (i, spec) in config.unitaries.iter().enumerate() {
        run_circuit(spec, &mut joint[(i << n)..(i << n) + dim]);
    }
    // Project the ancilla register back onto the PREPARE state.
    let mut projected = vec![Complex64::new(0.0, 0.0); dim];
    for (i, &c) in chi.iter().enumerate() {
        for j in 0..dim {
            projected[j] += c * joint[(i << n) | j];
        }
    }
    let success: f64 = projected.iter().map(|a| a.norm_sqr()).sum();
    if success < POSTSELECT_FLOOR {
        return Err(GtError::PostselectionImpossible(success));
    }
    let scale = success.sqrt();
    let amplitudes = projected.into_iter().map(|a| a / scale).collect();
    Ok((
        QState {
            num_qubits: n,
            amplitudes,
        },
        success,
    ))
}

/// Canonical 3-qubit Clifford+T sequence used by the named experiment
/// configurations.
pub fn fixed_clifford_t_3() -> UnitarySpec {
    UnitarySpec::CliffordT {
        num_qubits: 3,
        gates: vec![
            CtGate::H(0),
            CtGate::T(1),
            CtGate::Cnot {
                control: 0,
                target: 1,
            },
            CtGate::S(2),
            CtGate::T(0),
            CtGate::Cnot {
                control: 1,
                target: 2,
            },
            CtGate::H(2),
            CtGate::S(0),
            CtGate::T(2),
            CtGate::Cnot {
                control: 2,
                target: 0,
            },
            CtGate::H(1),
            CtGate::T(1),
        ],
    }
}

/// IQP sandwich with fixed, documented angles.
pub fn fixed_iqp(num_qubits: usize) -> UnitarySpec {
    let z_angles = (0..num_qubits)
        .map(|q| std::f64::consts::PI * (q + 1) as f64 / (num_qubits + 1) as f64)
        .collect();
    let mut zz_angles = Vec::new();
    for a in 0..num_qubits {
        for b in a + 1..num_qubits {
            zz_angles.push((
                a,
                b,
                std::f64::consts::PI * (a + b + 2) as f64 / (2 * num_qubits + 2) as f64,
            ));
        }
    }
    UnitarySpec::Iqp {
        num_qubits,
        z_angles,
        zz_angles,
    }
}

/// Ring-entangled rotation layers with fixed, documented angles.
pub fn fixed_qnn(num_qubits: usize, num_layers: usize) -> UnitarySpec {
    let layers = (0..num_layers)
        .map(|l| QnnLayer {
            angles: (0..num_qubits)
                .map(|q| {
                    let base = (l * num_qubits + q + 1) as f64
                        / (num_layers * num_qubits + 1) as f64;
                    [
                        std::f64::consts::PI * base,
                        std::f64::consts::FRAC_PI_2 * base,
                        std::f64::consts::PI * (1.0 - base),
                    ]
                })
                .collect(),
        })
        .collect();
    UnitarySpec::Qnn {
        num_qubits,
        layers,
    }
}

/// The four named 3-qubit menus, with uniform initial weights.
pub fn build_experiment_config(id: &str) -> Result<LcuConfig> {
    let n = 3;
    let menu = match id.to_ascii_uppercase().replace('-', "").as_str() {
        "S1" => vec![fixed_iqp(n), UnitarySpec::Qft { num_qubits: n }],
        "S2" => vec![fixed_iqp(n), fixed_clifford_t_3()],
        "S3" => vec![fixed_clifford_t_3(), UnitarySpec::Qft { num_qubits: n }],
        "S4" => vec![
            fixed_clifford_t_3(),
            UnitarySpec::Qft { num_qubits: n },
            fixed_iqp(n),
            fixed_qnn(n, 5),
        ],
        other => return Err(GtError::UnknownId(other.to_string())),
    };
    LcuConfig::uniform(menu)
}

/// Random spec menu for equivalence sweeps.
pub fn random_unitary_spec(num_qubits: usize, rng: &mut ChaCha8Rng) -> UnitarySpec {
    match rng.gen_range(0..4) {
        0 => UnitarySpec::Qft { num_qubits },
        1 => {
            let len = rng.gen_range(4..16);
            let gates = (0..len)
                .map(|_| match rng.gen_range(0..4) {
                    0 => CtGate::H(rng.gen_range(0..num_qubits)),
                    1 => CtGate::S(rng.gen_range(0..num_qubits)),
                    2 => CtGate::T(rng.gen_range(0..num_qubits)),
                    _ => {
                        if num_qubits < 2 {
                            CtGate::H(0)
                        } else {
                            let control = rng.gen_range(0..num_qubits);
                            let mut target = rng.gen_range(0..num_qubits);
                            while target == control {
                                target = rng.gen_range(0..num_qubits);
                            }
                            CtGate::Cnot { control, target }
                        }
                    }
                })
                .collect();
            UnitarySpec::CliffordT { num_qubits, gates }
        }
        2 => {
            let z_angles = (0..num_qubits)
                .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
                .collect();
            let mut zz_angles = Vec::new();
            for a in 0..num_qubits {
                for b in a + 1..num_qubits {
                    if rng.gen_bool(0.5) {
                        zz_angles.push((a, b, rng.gen_range(0.0..std::f64::consts::TAU)));
                    }
                }
            }
            UnitarySpec::Iqp {
                num_qubits,
                z_angles,
                zz_angles,
            }
        }
        _ => {
            let layers = (0..rng.gen_range(1..4))
                .map(|_| QnnLayer {
                    angles: (0..num_qubits)
                        .map(|_| {
                            [
                                rng.gen_range(0.0..std::f64::consts::TAU),
                                rng.gen_range(0.0..std::f64::consts::TAU),
                                rng.gen_range(0.0..std::f64::consts::TAU),
                            ]
                        })
                        .collect(),
                })
                .collect();
            UnitarySpec::Qnn {
                num_qubits,
                layers,
            }
        }
    }
}

/// Amplitude-encode, run the LCU, and read out rescaled real parts.
pub fn qgt_feature_map(x: &[f64], config: &LcuConfig) -> Result<(Vec<f64>, f64)> {
    config.validate()?;
    let dim = 1usize << config.num_qubits();
    if x.len() != dim {
        return Err(GtError::DimensionMismatch {
            expected: dim,
            got: x.len(),
        });
    }
    let (state, norm) = amplitude_encode(x)?;
    let (output, success) = lcu_apply(config, &state)?;
    let features = output.amplitudes.iter().map(|a| a.re * norm).collect();
    Ok((features, success))
}

/// Analytic gradient of ⟨upstream, features⟩ with respect to the raw
/// logits, through the softmax, the weighted sum of unitaries, and the
/// output normalization.
pub fn qgt_feature_map_grad(
    x: &[f64],
    config: &LcuConfig,
    upstream: &[f64],
) -> Result<Vec<f64>> {
    config.validate()?;
    let dim = 1usize << config.num_qubits();
    if x.len() != dim || upstream.len() != dim {
        return Err(GtError::DimensionMismatch {
            expected: dim,
            got: x.len().max(upstream.len()),
        });
    }
    let (state, norm) = amplitude_encode(x)?;
    let weights = config.weights();
    // Per-unitary applications vᵢ = Uᵢ|ψ⟩ and the raw combination φ.
    let mut applied = Vec::with_capacity(config.unitaries.len());
    for spec in &config.unitaries {
        let mut buffer = state.amplitudes.clone();
        run_circuit(spec, &mut buffer);
        applied.push(buffer);
    }
    let mut phi = vec![Complex64::new(0.0, 0.0); dim];
    for (v, &p) in applied.iter().zip(&weights) {
        for (acc, &a) in phi.iter_mut().zip(v) {
            *acc += p * a;
        }
    }
    let s_sq: f64 = phi.iter().map(|a| a.norm_sqr()).sum();
    if s_sq < POSTSELECT_FLOOR {
        return Err(GtError::PostselectionImpossible(s_sq));
    }
    let s = s_sq.sqrt();
    // f_k = norm * Re(phi_k) / s; d f_k / d p_i combines the direct term and
    // the normalization pullback.
    let mut d_weights = vec![0.0; weights.len()];
    for (i, v) in applied.iter().enumerate() {
        let overlap_re: f64 = phi
            .iter()
            .zip(v)
            .map(|(a, b)| (a.conj() * b).re)
            .sum();
        let mut acc = 0.0;
        for k in 0..dim {
            let df = norm * v[k].re / s - (norm * phi[k].re / s) * overlap_re / s_sq;
            acc += upstream[k] * df;
        }
        d_weights[i] = acc;
    }
    // Softmax Jacobian.
    let mut d_logits = vec![0.0; weights.len()];
    for j in 0..weights.len() {
        let mut acc = 0.0;
        for (i, &dp) in d_weights.iter().enumerate() {
            let jac = weights[i] * (if i == j { 1.0 } else { 0.0 } - weights[j]);
            acc += dp * jac;
        }
        d_logits[j] = acc;
    }
    Ok(d_logits)
}

#[derive(Debug, Clone)]
pub struct QgtToyOutcome {
    pub losses: Vec<f64>,
    pub weights_per_step: Vec<Vec<f64>>,
    pub final_config: LcuConfig,
}

/// Train the mixture weights (and a small linear head) on a synthetic task
/// whose labels live in the QFT basis, with full-batch gradient steps.
pub fn train_qgt_toy(
    config: &LcuConfig,
    steps: usize,
    lr: f64,
    seed: u64,
) -> Result<QgtToyOutcome> {
    config.validate()?;
    let n = config.num_qubits();
    let dim = 1usize << n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = 48;
    let qft = build_unitary(&UnitarySpec::Qft { num_qubits: n })?;
    let coefficient = 1;
    let mut inputs = Vec::with_capacity(samples);
    let mut labels = Vec::with_capacity(samples);
    for _ in 0..samples {
        let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c: Complex64 = (0..dim)
            .map(|j| qft[[coefficient, j]] * Complex64::new(x[j], 0.0))
            .sum();
        labels.push(usize::from(c.re > 0.0));
        inputs.push(x);
    }

    let mut work = config.clone();
    let mut head = vec![vec![0.0; dim]; 2];
    let mut bias = [0.0; 2];
    let mut losses = Vec::with_capacity(steps);
    let mut weights_per_step = Vec::with_capacity(steps);
    for _ in 0..steps {
        let mut logits = Array2::zeros((samples, 2));
        let mut features = Vec::with_capacity(samples);
        for (i, x) in inputs.iter().enumerate() {
            let (f, _) = qgt_feature_map(x, &work)?;
            for c in 0..2 {
                logits[[i, c]] =
                    head[c].iter().zip(&f).map(|(w, v)| w * v).sum::<f64>() + bias[c];
            }
            features.push(f);
        }
        let (loss, dlogits) = cross_entropy(&logits, &labels)?;
        losses.push(loss);
        weights_per_step.push(work.weights());

        let mut d_head = vec![vec![0.0; dim]; 2];
        let mut d_bias = [0.0; 2];
        let mut d_raw = vec![0.0; work.raw_logits.len()];
        for (i, x) in inputs.iter().enumerate() {
            let dl = [dlogits[[i, 0]], dlogits[[i, 1]]];
            let mut upstream = vec![0.0; dim];
            for c in 0..2 {
                d_bias[c] += dl[c];
                for k in 0..dim {
                    d_head[c][k] += dl[c] * features[i][k];
                    upstream[k] += dl[c] * head[c][k];
                }
            }
            let d = qgt_feature_map_grad(x, &work, &upstream)?;
            for (acc, g) in d_raw.iter_mut().zip(&d) {
                *acc += g;
            }
        }
        for c in 0..2 {
            bias[c] -= lr * d_bias[c];
            for k in 0..dim {
                head[c][k] -= lr * d_head[c][k];
            }
        }
        for (logit, g) in work.raw_logits.iter_mut().zip(&d_raw) {
            *logit -= lr * g;
        }
    }
    Ok(QgtToyOutcome {
        losses,
        weights_per_step,
        final_config: work,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn max_abs_diff(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn amplitude_encoding_basics() {
        let (state, norm) = amplitude_encode(&[3.0, 4.0]).unwrap();
        assert_eq!(norm, 5.0);
        assert!((state.amplitudes[0] - c(0.6, 0.0)).norm() < 1e-15);
        assert!((state.amplitudes[1] - c(0.8, 0.0)).norm() < 1e-15);

        let (basis, _) = amplitude_encode(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(basis, QState::basis(2, 0));

        assert!(matches!(
            amplitude_encode(&[0.0, 0.0]),
            Err(GtError::ZeroVector)
        ));
        assert!(matches!(
            amplitude_encode(&[1.0, 2.0, 3.0]),
            Err(GtError::InvalidSize(_))
        ));
    }

    #[test]
    fn encoded_states_are_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let (state, _) = amplitude_encode(&x).unwrap();
            assert!((state.norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn qft_single_qubit_is_hadamard() {
        let u = build_unitary(&UnitarySpec::Qft { num_qubits: 1 }).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((u[[0, 0]] - c(s, 0.0)).norm() < 1e-12);
        assert!((u[[0, 1]] - c(s, 0.0)).norm() < 1e-12);
        assert!((u[[1, 0]] - c(s, 0.0)).norm() < 1e-12);
        assert!((u[[1, 1]] - c(-s, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn qft_matches_closed_form() {
        use std::f64::consts::TAU;
        for n in 1..=3usize {
            let u = build_unitary(&UnitarySpec::Qft { num_qubits: n }).unwrap();
            let dim = 1usize << n;
            let scale = 1.0 / (dim as f64).sqrt();
            for k in 0..dim {
                for x in 0..dim {
                    let want = Complex64::from_polar(scale, TAU * (k * x) as f64 / dim as f64);
                    assert!((u[[k, x]] - want).norm() < 1e-12, "n={n} ({k},{x})");
                }
            }
        }
    }

    #[test]
    fn qft_is_conjugate_of_dft_kernel() {
        use crate::kernels::{build_kernel, TransformKind};
        let n = 3usize;
        let dim = 1usize << n;
        let qft = build_unitary(&UnitarySpec::Qft { num_qubits: n }).unwrap();
        let dft = build_kernel(TransformKind::Dft, dim).unwrap();
        // Sign-convention bridge: the DFT kernel is symmetric, so
        // conj(DFT)/sqrt(N) equals the QFT entrywise, and QFT.DFT/sqrt(N)
        // is the identity.
        for i in 0..dim {
            for j in 0..dim {
                let want = dft.entries[[i, j]].conj() / (dim as f64).sqrt();
                assert!((qft[[i, j]] - want).norm() < 1e-10, "entry ({i},{j})");
            }
        }
        let mut residual: f64 = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                let mut acc = c(0.0, 0.0);
                for k in 0..dim {
                    acc += qft[[i, k]] * dft.entries[[k, j]] / (dim as f64).sqrt();
                }
                let want = if i == j { 1.0 } else { 0.0 };
                residual = residual.max((acc - c(want, 0.0)).norm());
            }
        }
        assert!(residual < 1e-10, "residual {residual}");
    }

    #[test]
    fn iqp_with_zero_angles_is_identity() {
        let spec = UnitarySpec::Iqp {
            num_qubits: 2,
            z_angles: vec![0.0, 0.0],
            zz_angles: vec![(0, 1, 0.0)],
        };
        let u = build_unitary(&spec).unwrap();
        let eye = Array2::eye(4).mapv(|v: f64| c(v, 0.0));
        assert!(max_abs_diff(&u, &eye) < 1e-12);
    }

    #[test]
    fn all_menu_unitaries_are_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for n in 1..=3usize {
            for _ in 0..10 {
                let spec = random_unitary_spec(n, &mut rng);
                let u = build_unitary(&spec).unwrap();
                let dim = 1usize << n;
                for i in 0..dim {
                    for j in 0..dim {
                        let mut acc = c(0.0, 0.0);
                        for k in 0..dim {
                            acc += u[[k, i]].conj() * u[[k, j]];
                        }
                        let want = if i == j { 1.0 } else { 0.0 };
                        assert!((acc - c(want, 0.0)).norm() < 1e-10, "{}", spec.label());
                    }
                }
            }
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(build_unitary(&UnitarySpec::CliffordT {
            num_qubits: 2,
            gates: vec![CtGate::H(5)],
        })
        .is_err());
        assert!(build_unitary(&UnitarySpec::Iqp {
            num_qubits: 2,
            z_angles: vec![0.0],
            zz_angles: vec![],
        })
        .is_err());
    }

    #[test]
    fn qgt_matrix_single_and_pair() {
        let single = LcuConfig::uniform(vec![UnitarySpec::Qft { num_qubits: 2 }]).unwrap();
        let m = qgt_matrix(&single).unwrap();
        let u = build_unitary(&UnitarySpec::Qft { num_qubits: 2 }).unwrap();
        assert!(max_abs_diff(&m, &u) < 1e-12);

        // Z = S.S; (I + Z)/2 = diag(1, 0).
        let identity = UnitarySpec::CliffordT {
            num_qubits: 1,
            gates: vec![],
        };
        let z = UnitarySpec::CliffordT {
            num_qubits: 1,
            gates: vec![CtGate::S(0), CtGate::S(0)],
        };
        let config = LcuConfig::uniform(vec![identity, z]).unwrap();
        let m = qgt_matrix(&config).unwrap();
        assert!((m[[0, 0]] - c(1.0, 0.0)).norm() < 1e-12);
        assert!(m[[0, 1]].norm() < 1e-12);
        assert!(m[[1, 0]].norm() < 1e-12);
        assert!(m[[1, 1]].norm() < 1e-12);
    }

    #[test]
    fn mixed_qubit_counts_rejected() {
        let config = LcuConfig::uniform(vec![
            UnitarySpec::Qft { num_qubits: 1 },
            UnitarySpec::Qft { num_qubits: 2 },
        ]);
        assert!(matches!(config, Err(GtError::MixedDimensions)));
    }

    #[test]
    fn weighted_sum_is_a_contraction() {
        // Largest singular value of a convex combination of unitaries stays
        // at or below one; power iteration on A^H A is the oracle.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10 {
            let n = rng.gen_range(1..=3usize);
            let count = rng.gen_range(2..=4usize);
            let menu = (0..count).map(|_| random_unitary_spec(n, &mut rng)).collect();
            let mut config = LcuConfig::uniform(menu).unwrap();
            for logit in &mut config.raw_logits {
                *logit = rng.gen_range(-1.5..1.5);
            }
            let a = qgt_matrix(&config).unwrap();
            let dim = 1usize << n;
            let mut v: Vec<Complex64> = (0..dim)
                .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let mut sigma_sq = 0.0;
            for _ in 0..300 {
                // w = A v, u = A^H w
                let mut w = vec![c(0.0, 0.0); dim];
                for i in 0..dim {
                    for j in 0..dim {
                        w[i] += a[[i, j]] * v[j];
                    }
                }
                let mut u = vec![c(0.0, 0.0); dim];
                for i in 0..dim {
                    for j in 0..dim {
                        u[i] += a[[j, i]].conj() * w[j];
                    }
                }
                let norm: f64 = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if norm == 0.0 {
                    break;
                }
                sigma_sq = norm;
                for z in &mut u {
                    *z /= norm;
                }
                v = u;
            }
            assert!(sigma_sq.sqrt() <= 1.0 + 1e-10, "sigma {}", sigma_sq.sqrt());
        }
    }

    #[test]
    fn lcu_matches_direct_weighted_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..40 {
            let n = rng.gen_range(1..=3usize);
            let count = rng.gen_range(1..=4usize);
            let menu: Vec<UnitarySpec> =
                (0..count).map(|_| random_unitary_spec(n, &mut rng)).collect();
            let mut config = LcuConfig::uniform(menu).unwrap();
            for logit in &mut config.raw_logits {
                *logit = rng.gen_range(-1.0..1.0);
            }
            let dim = 1usize << n;
            let raw: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (input, _) = match amplitude_encode(&raw) {
                Ok(v) => v,
                Err(_) => continue,
            };
            let direct = qgt_matrix(&config).unwrap();
            let mut expected = vec![c(0.0, 0.0); dim];
            for i in 0..dim {
                for j in 0..dim {
                    expected[i] += direct[[i, j]] * input.amplitudes[j];
                }
            }
            let expected_success: f64 = expected.iter().map(|z| z.norm_sqr()).sum();
            match lcu_apply(&config, &input) {
                Ok((output, success)) => {
                    assert!((success - expected_success).abs() < 1e-10);
                    // Fidelity between the postselected state and the
                    // normalized direct product.
                    let scale = expected_success.sqrt();
                    let fidelity: f64 = output
                        .amplitudes
                        .iter()
                        .zip(&expected)
                        .map(|(a, b)| (a.conj() * (b / scale)).re)
                        .sum();
                    assert!(fidelity >= 1.0 - 1e-10, "fidelity {fidelity}");
                }
                Err(GtError::PostselectionImpossible(_)) => {
                    assert!(expected_success < 1e-10);
                }
                Err(other) => panic!("unexpected error {other}"),
            }
        }
    }

    #[test]
    fn near_corner_weights_recover_single_unitary() {
        let qft = UnitarySpec::Qft { num_qubits: 2 };
        let other = fixed_iqp(2);
        let config = LcuConfig {
            raw_logits: vec![12.0, -12.0],
            unitaries: vec![qft.clone(), other],
        };
        let (input, _) = amplitude_encode(&[0.5, -0.2, 0.8, 0.1]).unwrap();
        let (output, success) = lcu_apply(&config, &input).unwrap();
        let u = build_unitary(&qft).unwrap();
        let mut want = vec![c(0.0, 0.0); 4];
        for i in 0..4 {
            for j in 0..4 {
                want[i] += u[[i, j]] * input.amplitudes[j];
            }
        }
        assert!((success - 1.0).abs() < 1e-6);
        for (a, b) in output.amplitudes.iter().zip(&want) {
            assert!((a - b).norm() < 1e-6);
        }
    }

    #[test]
    fn postselection_can_be_impossible() {
        // (I + Z)/2 = diag(1, 0) annihilates |1>.
        let identity = UnitarySpec::CliffordT {
            num_qubits: 1,
            gates: vec![],
        };
        let z = UnitarySpec::CliffordT {
            num_qubits: 1,
            gates: vec![CtGate::S(0), CtGate::S(0)],
        };
        let config = LcuConfig::uniform(vec![identity, z]).unwrap();
        let zero = QState::basis(1, 0);
        let (out, success) = lcu_apply(&config, &zero).unwrap();
        assert!((success - 1.0).abs() < 1e-12);
        assert!((out.amplitudes[0] - c(1.0, 0.0)).norm() < 1e-12);

        let one = QState::basis(1, 1);
        assert!(matches!(
            lcu_apply(&config, &one),
            Err(GtError::PostselectionImpossible(_))
        ));
    }

    #[test]
    fn experiment_menus_match_table() {
        let s1 = build_experiment_config("S1").unwrap();
        assert_eq!(s1.unitaries.len(), 2);
        assert_eq!(s1.unitaries[0].label(), "iqp");
        assert_eq!(s1.unitaries[1].label(), "qft");
        assert_eq!(s1.weights(), vec![0.5, 0.5]);

        let s2 = build_experiment_config("s-2").unwrap();
        assert_eq!(s2.unitaries.len(), 2);
        assert_eq!(s2.unitaries[1].label(), "clifford_t");

        let s3 = build_experiment_config("S3").unwrap();
        assert_eq!(s3.unitaries.len(), 2);

        let s4 = build_experiment_config("S4").unwrap();
        assert_eq!(s4.unitaries.len(), 4);
        assert_eq!(s4.weights(), vec![0.25; 4]);
        match &s4.unitaries[3] {
            UnitarySpec::Qnn { layers, .. } => assert_eq!(layers.len(), 5),
            other => panic!("expected the rotation-layer unitary, got {}", other.label()),
        }

        assert!(matches!(
            build_experiment_config("S9"),
            Err(GtError::UnknownId(_))
        ));
    }

    #[test]
    fn feature_map_identity_menu_reproduces_input() {
        let config = LcuConfig::uniform(vec![UnitarySpec::CliffordT {
            num_qubits: 3,
            gates: vec![],
        }])
        .unwrap();
        let x = [0.5, -1.0, 2.0, 0.25, -0.75, 1.5, -0.125, 3.0];
        let (features, success) = qgt_feature_map(&x, &config).unwrap();
        assert!((success - 1.0).abs() < 1e-12);
        for (f, v) in features.iter().zip(&x) {
            assert!((f - v).abs() < 1e-10);
        }
    }

    #[test]
    fn qft_menu_concentrates_constant_input() {
        let config = LcuConfig::uniform(vec![UnitarySpec::Qft { num_qubits: 3 }]).unwrap();
        let x = [1.0; 8];
        let (features, _) = qgt_feature_map(&x, &config).unwrap();
        assert!(features[0].abs() > 1e-6);
        for f in &features[1..] {
            assert!(f.abs() < 1e-10);
        }
    }

    #[test]
    fn feature_map_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut config = build_experiment_config("S1").unwrap();
        config.raw_logits = vec![0.3, -0.2];
        let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let upstream: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let analytic = qgt_feature_map_grad(&x, &config, &upstream).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            let mut plus = config.clone();
            plus.raw_logits[i] += h;
            let mut minus = config.clone();
            minus.raw_logits[i] -= h;
            let f = |cfg: &LcuConfig| -> f64 {
                let (features, _) = qgt_feature_map(&x, cfg).unwrap();
                features.iter().zip(&upstream).map(|(a, b)| a * b).sum()
            };
            let fd = (f(&plus) - f(&minus)) / (2.0 * h);
            let denom = analytic[i].abs().max(fd.abs()).max(1.0);
            assert!(
                (analytic[i] - fd).abs() / denom < 1e-5,
                "logit {i}: {} vs {fd}",
                analytic[i]
            );
        }
    }

    #[test]
    fn quadratic_loss_gradient_matches_finite_differences() {
        // L = 0.5 * |f(logits) - target|^2, pulled back through the softmax
        // and the normalized simulation output.
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        let mut config = build_experiment_config("S4").unwrap();
        config.raw_logits = vec![0.2, -0.4, 0.1, 0.3];
        let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let target: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = |cfg: &LcuConfig| -> f64 {
            let (f, _) = qgt_feature_map(&x, cfg).unwrap();
            f.iter().zip(&target).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum()
        };
        let (f0, _) = qgt_feature_map(&x, &config).unwrap();
        let upstream: Vec<f64> = f0.iter().zip(&target).map(|(a, b)| a - b).collect();
        let analytic = qgt_feature_map_grad(&x, &config, &upstream).unwrap();
        let h = 1e-6;
        for i in 0..4 {
            let mut plus = config.clone();
            plus.raw_logits[i] += h;
            let mut minus = config.clone();
            minus.raw_logits[i] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let denom = analytic[i].abs().max(fd.abs()).max(1.0);
            assert!(
                (analytic[i] - fd).abs() / denom < 1e-5,
                "logit {i}: {} vs {fd}",
                analytic[i]
            );
        }
    }

    #[test]
    fn toy_training_decreases_loss_on_simplex() {
        let config = build_experiment_config("S1").unwrap();
        let outcome = train_qgt_toy(&config, 50, 0.5, 7).unwrap();
        assert_eq!(outcome.losses.len(), 50);
        assert!(
            outcome.losses[49] < outcome.losses[0],
            "loss went {} -> {}",
            outcome.losses[0],
            outcome.losses[49]
        );
        for weights in &outcome.weights_per_step {
            let sum: f64 = weights.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(weights.iter().all(|&p| p > 0.0));
        }
        let final_weights = outcome.final_config.weights();
        let sum: f64 = final_weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }
}
