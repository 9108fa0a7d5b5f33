//! The blended transform: a trainable affine combination of component
//! kernels followed by a real/imaginary output mixer.
//!
//! With component kernels F₁…F_{m+1} and weights p₁…p_m, the blend is
//! B(p) = Σᵢ pᵢ·Fᵢ + (1 − Σᵢ pᵢ)·F_{m+1}; the real output is
//! p₃·Re(B·x) + (1 − p₃)·Im(B·x). Weights are unconstrained reals, and at a
//! corner (one pᵢ = 1, rest 0, or all 0) the blend reproduces the matching
//! component exactly. All maps here are linear in the input and affine in
//! each weight, so the analytic gradients below are exact.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{GtError, Result};
use crate::kernels::{build_kernel, TransformKind};

/// Trainable blend configuration: an ordered transform list of length m+1,
/// m free weights (the last transform carries the residual weight), and the
/// real/imaginary mixer.
#[derive(Debug, Clone, PartialEq)]
pub struct GtParams {
    pub transforms: Vec<TransformKind>,
    pub weights: Vec<f64>,
    pub mixer: f64,
}

impl GtParams {
    pub fn new(transforms: Vec<TransformKind>, weights: Vec<f64>, mixer: f64) -> Result<Self> {
        let params = GtParams {
            transforms,
            weights,
            mixer,
        };
        params.validate()?;
        Ok(params)
    }

    /// Vision blend (DCT-II, DFT, Haar) started at the DCT corner.
    pub fn vision() -> Self {
        GtParams {
            transforms: vec![
                TransformKind::Dct2,
                TransformKind::Dft,
                TransformKind::HaarDwt,
            ],
            weights: vec![1.0, 0.0],
            mixer: 1.0,
        }
    }

    /// NLP blend (DFT, DLT, identity) started at the pure real-part DFT
    /// configuration (1, 0, 1).
    pub fn nlp() -> Self {
        GtParams {
            transforms: vec![TransformKind::Dft, TransformKind::Dlt, TransformKind::Identity],
            weights: vec![1.0, 0.0],
            mixer: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.transforms.len() < 2 {
            return Err(GtError::EmptyTransformList);
        }
        if self.weights.len() + 1 != self.transforms.len() {
            return Err(GtError::ShapeMismatch(format!(
                "{} transforms need {} weights, got {}",
                self.transforms.len(),
                self.transforms.len() - 1,
                self.weights.len()
            )));
        }
        Ok(())
    }

    /// Weights applied to each component in order: p₁…p_m, then 1 − Σᵢ pᵢ.
    pub fn effective_weights(&self) -> Vec<f64> {
        let residual = 1.0 - self.weights.iter().sum::<f64>();
        let mut all = self.weights.clone();
        all.push(residual);
        all
    }

    /// Serialize as `key=value` lines. Finite doubles round-trip bit-exact.
    pub fn to_text(&self) -> String {
        let transforms: Vec<&str> = self.transforms.iter().map(|t| t.name()).collect();
        let weights: Vec<String> = self.weights.iter().map(|w| w.to_string()).collect();
        format!(
            "transforms={}\nweights={}\nmixer={}\n",
            transforms.join(","),
            weights.join(","),
            self.mixer
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut transforms = None;
        let mut weights = None;
        let mut mixer = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| GtError::Format(format!("expected key=value, got {line:?}")))?;
            match key.trim() {
                "transforms" => {
                    let parsed: Result<Vec<TransformKind>> =
                        value.split(',').map(|s| s.trim().parse()).collect();
                    transforms = Some(parsed?);
                }
                "weights" => {
                    let parsed: std::result::Result<Vec<f64>, _> =
                        value.split(',').map(|s| s.trim().parse::<f64>()).collect();
                    weights = Some(parsed.map_err(|e| {
                        GtError::Format(format!("bad weight in {value:?}: {e}"))
                    })?);
                }
                "mixer" => {
                    mixer = Some(value.trim().parse::<f64>().map_err(|e| {
                        GtError::Format(format!("bad mixer {value:?}: {e}"))
                    })?);
                }
                other => {
                    return Err(GtError::Format(format!("unknown field {other:?}")));
                }
            }
        }
        let transforms =
            transforms.ok_or_else(|| GtError::Format("missing transforms field".into()))?;
        let weights = weights.ok_or_else(|| GtError::Format("missing weights field".into()))?;
        let mixer = mixer.ok_or_else(|| GtError::Format("missing mixer field".into()))?;
        GtParams::new(transforms, weights, mixer)
    }
}

/// The materialized blend B(p) at one size.
#[derive(Debug, Clone)]
pub struct BlendedKernel {
    pub params: GtParams,
    pub size: usize,
    pub entries: Array2<Complex64>,
}

/// Materialize B(p) = Σᵢ pᵢ·Fᵢ + (1 − Σᵢ pᵢ)·F_{m+1} at size `n`.
pub fn blend_kernel(params: &GtParams, n: usize) -> Result<BlendedKernel> {
    params.validate()?;
    let weights = params.effective_weights();
    let mut entries = Array2::<Complex64>::zeros((n, n));
    for (kind, &w) in params.transforms.iter().zip(&weights) {
        let component = build_kernel(*kind, n)?;
        entries.zip_mut_with(&component.entries, |acc, &f| *acc += w * f);
    }
    Ok(BlendedKernel {
        params: params.clone(),
        size: n,
        entries,
    })
}

/// Complex intermediates kept by the 1-D forward pass for gradient reuse.
#[derive(Debug, Clone)]
pub struct Cache1d {
    y: Vec<Complex64>,
    component_outputs: Vec<Vec<Complex64>>,
}

impl Cache1d {
    pub fn intermediate(&self) -> &[Complex64] {
        &self.y
    }
}

fn components_for(params: &GtParams, n: usize) -> Result<Vec<Array2<Complex64>>> {
    params.validate()?;
    params
        .transforms
        .iter()
        .map(|kind| build_kernel(*kind, n).map(|k| k.entries))
        .collect()
}

/// 1-D forward pass: Y = B(p)·x, output[k] = p₃·Re(Y[k]) + (1−p₃)·Im(Y[k]).
pub fn gt_forward_1d(params: &GtParams, x: &[f64]) -> Result<(Vec<f64>, Cache1d)> {
    let n = x.len();
    let components = components_for(params, n)?;
    let xc: Array1<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let component_outputs: Vec<Vec<Complex64>> =
        components.iter().map(|f| f.dot(&xc).to_vec()).collect();
    let weights = params.effective_weights();
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    for (z, &w) in component_outputs.iter().zip(&weights) {
        for (acc, &v) in y.iter_mut().zip(z) {
            *acc += w * v;
        }
    }
    let output = mix(&y, params.mixer);
    Ok((
        output,
        Cache1d {
            y,
            component_outputs,
        },
    ))
}

/// Forward without retaining the cache, for inference.
pub fn gt_apply_1d(params: &GtParams, x: &[f64]) -> Result<Vec<f64>> {
    Ok(gt_forward_1d(params, x)?.0)
}

fn mix(y: &[Complex64], mixer: f64) -> Vec<f64> {
    y.iter().map(|v| mixer * v.re + (1.0 - mixer) * v.im).collect()
}

/// Gradients of ⟨upstream, output⟩ with respect to the blend weights and the
/// mixer, reusing the forward cache.
pub fn gt_grad_params(
    params: &GtParams,
    x: &[f64],
    upstream: &[f64],
    cache: &Cache1d,
) -> Result<(Vec<f64>, f64)> {
    params.validate()?;
    let n = x.len();
    if upstream.len() != n {
        return Err(GtError::DimensionMismatch {
            expected: n,
            got: upstream.len(),
        });
    }
    if cache.y.len() != n || cache.component_outputs.len() != params.transforms.len() {
        return Err(GtError::StaleCache(format!(
            "cache holds {} outputs for {} components, forward had {} and {}",
            cache.y.len(),
            cache.component_outputs.len(),
            n,
            params.transforms.len()
        )));
    }
    let p3 = params.mixer;
    let last = cache.component_outputs.len() - 1;
    let mut dp = Vec::with_capacity(params.weights.len());
    for i in 0..params.weights.len() {
        let mut acc = 0.0;
        for k in 0..n {
            let diff = cache.component_outputs[i][k] - cache.component_outputs[last][k];
            acc += upstream[k] * (p3 * diff.re + (1.0 - p3) * diff.im);
        }
        dp.push(acc);
    }
    let dp3 = upstream
        .iter()
        .zip(&cache.y)
        .map(|(&u, v)| u * (v.re - v.im))
        .sum();
    Ok((dp, dp3))
}

/// Jacobian-transpose product of the 1-D forward with respect to its input:
/// Mᵀ·upstream where M = p₃·Re(B) + (1−p₃)·Im(B).
pub fn gt_grad_input(params: &GtParams, upstream: &[f64]) -> Result<Vec<f64>> {
    let n = upstream.len();
    let blended = blend_kernel(params, n)?;
    let p3 = params.mixer;
    let mut grad = vec![0.0; n];
    for k in 0..n {
        for (col, g) in grad.iter_mut().enumerate() {
            let b = blended.entries[[k, col]];
            *g += upstream[k] * (p3 * b.re + (1.0 - p3) * b.im);
        }
    }
    Ok(grad)
}

/// Complex intermediate of the 2-D forward pass.
#[derive(Debug, Clone)]
pub struct Cache2d {
    y: Array2<Complex64>,
}

impl Cache2d {
    pub fn intermediate(&self) -> &Array2<Complex64> {
        &self.y
    }
}

/// 2-D forward: Y = B_R(p)·X·B_C(p)ᵀ with the weights shared between axes,
/// then one real/imaginary mix of the final Y.
pub fn gt_forward_2d(params: &GtParams, x: &Array2<f64>) -> Result<(Array2<f64>, Cache2d)> {
    let (rows, cols) = x.dim();
    let b_rows = blend_kernel(params, rows)?;
    let b_cols = blend_kernel(params, cols)?;
    let xc = x.mapv(|v| Complex64::new(v, 0.0));
    let y = b_rows.entries.dot(&xc).dot(&b_cols.entries.t());
    let p3 = params.mixer;
    let output = y.mapv(|v| p3 * v.re + (1.0 - p3) * v.im);
    Ok((output, Cache2d { y }))
}

pub fn gt_apply_2d(params: &GtParams, x: &Array2<f64>) -> Result<Array2<f64>> {
    Ok(gt_forward_2d(params, x)?.0)
}

/// Gradients of ⟨upstream, output⟩ for the 2-D forward.
#[derive(Debug, Clone)]
pub struct GtGrads2d {
    pub d_input: Array2<f64>,
    pub d_weights: Vec<f64>,
    pub d_mixer: f64,
}

pub fn gt_backward_2d(
    params: &GtParams,
    x: &Array2<f64>,
    upstream: &Array2<f64>,
    cache: &Cache2d,
) -> Result<GtGrads2d> {
    let (rows, cols) = x.dim();
    if upstream.dim() != (rows, cols) {
        return Err(GtError::ShapeMismatch(format!(
            "upstream {:?} does not match input {:?}",
            upstream.dim(),
            x.dim()
        )));
    }
    if cache.y.dim() != (rows, cols) {
        return Err(GtError::StaleCache(format!(
            "cache shape {:?}, expected {:?}",
            cache.y.dim(),
            (rows, cols)
        )));
    }
    let row_components = components_for(params, rows)?;
    let col_components = components_for(params, cols)?;
    let weights = params.effective_weights();
    let last = weights.len() - 1;
    let p3 = params.mixer;

    let blend = |components: &[Array2<Complex64>], n: usize| {
        let mut acc = Array2::<Complex64>::zeros((n, n));
        for (f, &w) in components.iter().zip(&weights) {
            acc.zip_mut_with(f, |a, &v| *a += w * v);
        }
        acc
    };
    let b_rows = blend(&row_components, rows);
    let b_cols = blend(&col_components, cols);

    let xc = x.mapv(|v| Complex64::new(v, 0.0));
    let gc = upstream.mapv(|v| Complex64::new(v, 0.0));

    // d/dX of p₃·Re(B_R X B_Cᵀ) + (1−p₃)·Im(...) is the same mix applied to
    // B_Rᵀ G B_C (plain transposes, no conjugation: X is real).
    let t = b_rows.t().dot(&gc).dot(&b_cols);
    let d_input = t.mapv(|v| p3 * v.re + (1.0 - p3) * v.im);

    let x_bc_t = xc.dot(&b_cols.t());
    let br_x = b_rows.dot(&xc);
    let mut d_weights = Vec::with_capacity(params.weights.len());
    for i in 0..params.weights.len() {
        let d_row = &row_components[i] - &row_components[last];
        let d_col = &col_components[i] - &col_components[last];
        let dy = d_row.dot(&x_bc_t) + br_x.dot(&d_col.t());
        let mut acc = 0.0;
        for (g, v) in upstream.iter().zip(dy.iter()) {
            acc += g * (p3 * v.re + (1.0 - p3) * v.im);
        }
        d_weights.push(acc);
    }
    let mut d_mixer = 0.0;
    for (g, v) in upstream.iter().zip(cache.y.iter()) {
        d_mixer += g * (v.re - v.im);
    }
    Ok(GtGrads2d {
        d_input,
        d_weights,
        d_mixer,
    })
}
