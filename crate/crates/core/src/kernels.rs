//! Dense matrix realizations of the component transforms.
//!
//! Every transform is materialized as an explicit N×N complex matrix so that
//! blending, gradients, and algebraic identities stay trivially checkable.
//! The DFT and DCT-II are unnormalized; the Haar DWT is orthonormal by
//! construction; the discrete Legendre transform has unit-norm rows only
//! (sampled Legendre polynomials are not mutually orthogonal under the
//! discrete sum on an equispaced grid).

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{GtError, Result};

/// The closed menu of component transforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransformKind {
    Dft,
    Dct2,
    HaarDwt,
    Dlt,
    Identity,
}

impl TransformKind {
    pub const ALL: [TransformKind; 5] = [
        TransformKind::Dft,
        TransformKind::Dct2,
        TransformKind::HaarDwt,
        TransformKind::Dlt,
        TransformKind::Identity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TransformKind::Dft => "dft",
            TransformKind::Dct2 => "dct2",
            TransformKind::HaarDwt => "haar",
            TransformKind::Dlt => "dlt",
            TransformKind::Identity => "identity",
        }
    }

    /// Whether a kernel of this kind can be built at size `n`.
    pub fn admits(self, n: usize) -> bool {
        match self {
            TransformKind::HaarDwt => n >= 1 && n.is_power_of_two(),
            TransformKind::Dlt => n >= 2,
            _ => n >= 1,
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TransformKind {
    type Err = GtError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dft" => Ok(TransformKind::Dft),
            "dct2" | "dct" => Ok(TransformKind::Dct2),
            "haar" | "haardwt" | "dwt" => Ok(TransformKind::HaarDwt),
            "dlt" => Ok(TransformKind::Dlt),
            "identity" | "id" => Ok(TransformKind::Identity),
            other => Err(GtError::Format(format!("unknown transform kind {other:?}"))),
        }
    }
}

/// One discrete transform as a dense row-major matrix: `entries[[k, n]]`
/// multiplies input sample `n` into output coefficient `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub kind: TransformKind,
    pub size: usize,
    pub entries: Array2<Complex64>,
}

/// Optional construction tweaks. `orthonormal_dct` rescales DCT-II rows to
/// make the matrix orthonormal, for comparison against orthonormal
/// references; the default (false) keeps the unnormalized form used by the
/// blend.
#[derive(Debug, Clone, Copy, Default)]
pub struct KernelOptions {
    pub orthonormal_dct: bool,
}

/// Build the dense kernel for `kind` at size `n`.
pub fn build_kernel(kind: TransformKind, n: usize) -> Result<KernelMatrix> {
    build_kernel_with(kind, n, &KernelOptions::default())
}

pub fn build_kernel_with(
    kind: TransformKind,
    n: usize,
    opts: &KernelOptions,
) -> Result<KernelMatrix> {
    if n == 0 {
        return Err(GtError::InvalidSize("kernel size must be positive".into()));
    }
    let entries = match kind {
        TransformKind::Dft => dft_entries(n),
        TransformKind::Dct2 => {
            let mut m = dct2_entries(n);
            if opts.orthonormal_dct {
                orthonormalize_dct(&mut m, n);
            }
            m
        }
        TransformKind::HaarDwt => {
            if !n.is_power_of_two() {
                return Err(GtError::InvalidSize(format!(
                    "Haar DWT size must be a power of two, got {n}"
                )));
            }
            haar_entries(n)
        }
        TransformKind::Dlt => {
            if n < 2 {
                return Err(GtError::InvalidSize(format!(
                    "DLT needs at least two grid points, got {n}"
                )));
            }
            dlt_entries(n)
        }
        TransformKind::Identity => Array2::eye(n).mapv(re),
    };
    Ok(KernelMatrix {
        kind,
        size: n,
        entries,
    })
}

/// Apply the kernel to a complex vector: `result[k] = Σₙ entries[k][n]·x[n]`.
pub fn apply_kernel(kernel: &KernelMatrix, x: &[Complex64]) -> Result<Vec<Complex64>> {
    if x.len() != kernel.size {
        return Err(GtError::DimensionMismatch {
            expected: kernel.size,
            got: x.len(),
        });
    }
    let xv = Array1::from(x.to_vec());
    Ok(kernel.entries.dot(&xv).to_vec())
}

/// Conjugate transpose of the kernel's matrix.
pub fn kernel_adjoint(kernel: &KernelMatrix) -> Array2<Complex64> {
    kernel.entries.t().mapv(|z| z.conj())
}

fn re(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

fn dft_entries(n: usize) -> Array2<Complex64> {
    let nf = n as f64;
    Array2::from_shape_fn((n, n), |(k, col)| {
        let phase = -2.0 * PI * (k as f64) * (col as f64) / nf;
        Complex64::from_polar(1.0, phase)
    })
}

fn dct2_entries(n: usize) -> Array2<Complex64> {
    let nf = n as f64;
    Array2::from_shape_fn((n, n), |(k, col)| {
        re((PI * k as f64 * (col as f64 + 0.5) / nf).cos())
    })
}

fn orthonormalize_dct(m: &mut Array2<Complex64>, n: usize) {
    let nf = n as f64;
    for (k, mut row) in m.rows_mut().into_iter().enumerate() {
        let scale = if k == 0 {
            (1.0 / nf).sqrt()
        } else {
            (2.0 / nf).sqrt()
        };
        row.mapv_inplace(|z| z * scale);
    }
}

/// Haar case-table kernel for N = 2^J: row 0 is the scaling function, row
/// k = 2^{J-j} + m is the level-j wavelet at shift m, with values ±2^{-j/2}
/// on its 2^j-sample support.
fn haar_entries(n: usize) -> Array2<Complex64> {
    let levels = n.trailing_zeros();
    let mut m = Array2::zeros((n, n));
    let dc = 1.0 / (n as f64).sqrt();
    for col in 0..n {
        m[[0, col]] = re(dc);
    }
    for j in 1..=levels {
        let mag = 2f64.powf(-(j as f64) / 2.0);
        let shifts = 1usize << (levels - j);
        let span = 1usize << j;
        for shift in 0..shifts {
            let k = shifts + shift;
            let start = span * shift;
            let mid = start + span / 2;
            let end = span * (shift + 1);
            for col in start..mid {
                m[[k, col]] = re(mag);
            }
            for col in mid..end {
                m[[k, col]] = re(-mag);
            }
        }
    }
    m
}

/// Legendre polynomials on the equispaced grid t_n = -1 + 2n/(N-1), built by
/// the three-term recurrence and then L2-normalized per row.
fn dlt_entries(n: usize) -> Array2<Complex64> {
    let grid: Vec<f64> = (0..n)
        .map(|i| -1.0 + 2.0 * i as f64 / (n as f64 - 1.0))
        .collect();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    rows.push(vec![1.0; n]);
    rows.push(grid.clone());
    for k in 1..n - 1 {
        let kf = k as f64;
        let next: Vec<f64> = (0..n)
            .map(|i| {
                ((2.0 * kf + 1.0) * grid[i] * rows[k][i] - kf * rows[k - 1][i]) / (kf + 1.0)
            })
            .collect();
        rows.push(next);
    }
    rows.truncate(n);
    let mut m = Array2::zeros((n, n));
    for (k, row) in rows.iter().enumerate() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        for col in 0..n {
            m[[k, col]] = re(row[col] / norm);
        }
    }
    m
}
