//! Block-based frequency-domain feature extraction for images.
//!
//! The pipeline mirrors the classic DCT front end: RGB → YCbCr (BT.601
//! full-range), non-overlapping 8×8 blocks, a 2-D blended transform per
//! block with independent parameters per color channel, retention of the
//! leading coefficients in zigzag order, and per-channel normalization.
//! Images whose dimensions are not divisible by 8 are center-cropped.

use std::path::Path;
use std::sync::OnceLock;

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{GtError, Result};
use crate::gt::{gt_apply_2d, GtParams};
use crate::io::Tensor;

pub const BLOCK: usize = 8;

/// Standard JPEG zigzag scan of an 8×8 block as flat row-major indices.
const ZIGZAG_8: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27,
    20, 13, 6, 7, 14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58,
    59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
];

/// 8-bit interleaved RGB image.
#[derive(Debug, Clone)]
pub struct RgbImage {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width * 3 {
            return Err(GtError::ShapeMismatch(format!(
                "{}x{} RGB image needs {} bytes, got {}",
                height,
                width,
                height * width * 3,
                data.len()
            )));
        }
        Ok(RgbImage {
            height,
            width,
            data,
        })
    }

    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let base = (row * self.width + col) * 3;
        [self.data[base], self.data[base + 1], self.data[base + 2]]
    }

    /// Parse a binary PPM (P6) image with 8-bit samples.
    pub fn from_ppm_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut next_token = |bytes: &[u8]| -> Result<String> {
            // Skip whitespace and `#` comments between header tokens.
            loop {
                while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < bytes.len() && bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(GtError::Format("truncated PPM header".into()));
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        let magic = next_token(bytes)?;
        if magic != "P6" {
            return Err(GtError::Format(format!(
                "expected PPM magic P6, got {magic:?}"
            )));
        }
        let width: usize = parse_header_int(&next_token(bytes)?, "width")?;
        let height: usize = parse_header_int(&next_token(bytes)?, "height")?;
        let maxval: usize = parse_header_int(&next_token(bytes)?, "maxval")?;
        if maxval == 0 || maxval > 255 {
            return Err(GtError::Format(format!(
                "only 8-bit PPM supported, maxval {maxval}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(GtError::EmptyImage);
        }
        // Exactly one whitespace byte separates the header from the payload.
        if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
            return Err(GtError::Format("missing PPM header terminator".into()));
        }
        pos += 1;
        let need = width * height * 3;
        let payload = &bytes[pos..];
        if payload.len() < need {
            return Err(GtError::Format(format!(
                "PPM payload has {} bytes, needs {need}",
                payload.len()
            )));
        }
        RgbImage::new(height, width, payload[..need].to_vec())
    }

    pub fn from_ppm_file(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_ppm_bytes(&bytes)
    }

    pub fn to_ppm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    /// Accept an image stored as an (H, W, 3) real tensor with 8-bit values.
    pub fn from_tensor(tensor: &Tensor) -> Result<Self> {
        if tensor.dims.len() != 3 || tensor.dims[2] != 3 {
            return Err(GtError::Format(format!(
                "expected an (H, W, 3) tensor, got dims {:?}",
                tensor.dims
            )));
        }
        let values = tensor.as_real()?;
        let mut data = Vec::with_capacity(values.len());
        for &v in values {
            if !(-0.5..=255.5).contains(&v) {
                return Err(GtError::Format(format!(
                    "pixel value {v} outside the 8-bit range"
                )));
            }
            data.push(v.round().clamp(0.0, 255.0) as u8);
        }
        RgbImage::new(tensor.dims[0], tensor.dims[1], data)
    }
}

fn parse_header_int(token: &str, field: &str) -> Result<usize> {
    token
        .parse::<usize>()
        .map_err(|_| GtError::Format(format!("bad PPM {field} {token:?}")))
}

/// Luma/chroma planes of one image, clamped to [0, 255].
#[derive(Debug, Clone)]
pub struct ImagePlanes {
    pub height: usize,
    pub width: usize,
    pub y: Array2<f64>,
    pub cb: Array2<f64>,
    pub cr: Array2<f64>,
}

/// BT.601 full-range conversion of one pixel, before clamping.
pub fn ycbcr_pixel(r: u8, g: u8, b: u8) -> (f64, f64, f64) {
    let (r, g, b) = (r as f64, g as f64, b as f64);
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    let cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b;
    let cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b;
    (y, cb, cr)
}

pub fn rgb_to_ycbcr(image: &RgbImage) -> Result<ImagePlanes> {
    if image.height == 0 || image.width == 0 {
        return Err(GtError::EmptyImage);
    }
    let (h, w) = (image.height, image.width);
    let mut y = Array2::zeros((h, w));
    let mut cb = Array2::zeros((h, w));
    let mut cr = Array2::zeros((h, w));
    for row in 0..h {
        for col in 0..w {
            let [r, g, b] = image.pixel(row, col);
            let (py, pcb, pcr) = ycbcr_pixel(r, g, b);
            y[[row, col]] = py.clamp(0.0, 255.0);
            cb[[row, col]] = pcb.clamp(0.0, 255.0);
            cr[[row, col]] = pcr.clamp(0.0, 255.0);
        }
    }
    Ok(ImagePlanes {
        height: h,
        width: w,
        y,
        cb,
        cr,
    })
}

impl ImagePlanes {
    /// Center-crop all planes so both dimensions are multiples of `BLOCK`.
    pub fn center_crop(&self) -> Result<ImagePlanes> {
        let h = self.height - self.height % BLOCK;
        let w = self.width - self.width % BLOCK;
        if h == 0 || w == 0 {
            return Err(GtError::InvalidSize(format!(
                "image {}x{} is smaller than one {BLOCK}x{BLOCK} block",
                self.height, self.width
            )));
        }
        let top = (self.height - h) / 2;
        let left = (self.width - w) / 2;
        let crop = |p: &Array2<f64>| {
            p.slice(ndarray::s![top..top + h, left..left + w])
                .to_owned()
        };
        Ok(ImagePlanes {
            height: h,
            width: w,
            y: crop(&self.y),
            cb: crop(&self.cb),
            cr: crop(&self.cr),
        })
    }
}

/// Non-overlapping 8×8 blocks tiling a plane in raster order.
#[derive(Debug, Clone)]
pub struct BlockGrid {
    pub block_rows: usize,
    pub block_cols: usize,
    pub blocks: Vec<Array2<f64>>,
}

pub fn block_partition(plane: &Array2<f64>) -> Result<BlockGrid> {
    let (h, w) = plane.dim();
    if h % BLOCK != 0 || w % BLOCK != 0 {
        return Err(GtError::NotDivisible {
            height: h,
            width: w,
            block: BLOCK,
        });
    }
    let block_rows = h / BLOCK;
    let block_cols = w / BLOCK;
    let mut blocks = Vec::with_capacity(block_rows * block_cols);
    for by in 0..block_rows {
        for bx in 0..block_cols {
            let view = plane.slice(ndarray::s![
                by * BLOCK..(by + 1) * BLOCK,
                bx * BLOCK..(bx + 1) * BLOCK
            ]);
            blocks.push(view.to_owned());
        }
    }
    Ok(BlockGrid {
        block_rows,
        block_cols,
        blocks,
    })
}

/// Inverse of [`block_partition`]; partition-then-reassemble is the identity.
pub fn block_reassemble(grid: &BlockGrid) -> Array2<f64> {
    let mut plane = Array2::zeros((grid.block_rows * BLOCK, grid.block_cols * BLOCK));
    for (i, block) in grid.blocks.iter().enumerate() {
        let by = i / grid.block_cols;
        let bx = i % grid.block_cols;
        plane
            .slice_mut(ndarray::s![
                by * BLOCK..(by + 1) * BLOCK,
                bx * BLOCK..(bx + 1) * BLOCK
            ])
            .assign(block);
    }
    plane
}

/// Zigzag permutation for an n×n block; only n = 8 is defined.
pub fn zigzag_order(n: usize) -> Result<&'static [usize; 64]> {
    if n != BLOCK {
        return Err(GtError::UnsupportedSize(n));
    }
    Ok(&ZIGZAG_8)
}

/// How retained coefficients are ordered within a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoefficientOrder {
    #[default]
    Zigzag,
    Raster,
}

/// One blend parameterization per color channel.
#[derive(Debug, Clone)]
pub struct PerChannelGt {
    pub y_params: GtParams,
    pub cb_params: GtParams,
    pub cr_params: GtParams,
}

impl PerChannelGt {
    pub fn new(y_params: GtParams, cb_params: GtParams, cr_params: GtParams) -> Result<Self> {
        for (name, p) in [
            ("Y", &y_params),
            ("Cb", &cb_params),
            ("Cr", &cr_params),
        ] {
            p.validate()?;
            if p.transforms != GtParams::vision().transforms {
                return Err(GtError::InvalidConfig(format!(
                    "{name}-channel transform list {:?} is not the vision list (dct2, dft, haar)",
                    p.transforms.iter().map(|t| t.name()).collect::<Vec<_>>()
                )));
            }
        }
        Ok(PerChannelGt {
            y_params,
            cb_params,
            cr_params,
        })
    }

    /// All three channels at the DCT corner (1, 0, 1).
    pub fn dct_corner() -> Self {
        PerChannelGt {
            y_params: GtParams::vision(),
            cb_params: GtParams::vision(),
            cr_params: GtParams::vision(),
        }
    }

    pub fn channels(&self) -> [&GtParams; 3] {
        [&self.y_params, &self.cb_params, &self.cr_params]
    }
}

/// Channel-major feature maps on the block grid: Y coefficients first,
/// then Cb, then Cr.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub channels: usize,
    pub block_rows: usize,
    pub block_cols: usize,
    pub values: Vec<f64>,
}

impl FeatureTensor {
    pub fn get(&self, channel: usize, by: usize, bx: usize) -> f64 {
        self.values[(channel * self.block_rows + by) * self.block_cols + bx]
    }

    pub fn spatial_len(&self) -> usize {
        self.block_rows * self.block_cols
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::real(
            vec![self.channels, self.block_rows, self.block_cols],
            self.values.clone(),
        )
        .expect("feature tensor dims are consistent")
    }
}

fn worker_pool() -> Option<&'static rayon::ThreadPool> {
    static POOL: OnceLock<Option<rayon::ThreadPool>> = OnceLock::new();
    POOL.get_or_init(|| {
        std::env::var("GT_NUM_THREADS")
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .filter(|&n| n >= 1)
            .map(|n| {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .expect("worker pool")
            })
    })
    .as_ref()
}

/// Transform every 8×8 block of every plane and keep the first `k`
/// coefficients per color channel, producing 3·k feature channels.
pub fn extract_features(
    planes: &ImagePlanes,
    gts: &PerChannelGt,
    k: usize,
    order: CoefficientOrder,
) -> Result<FeatureTensor> {
    if k == 0 || k > BLOCK * BLOCK {
        return Err(GtError::InvalidConfig(format!(
            "retained coefficient count {k} must be in 1..={}",
            BLOCK * BLOCK
        )));
    }
    let scan: Vec<usize> = match order {
        CoefficientOrder::Zigzag => zigzag_order(BLOCK)?[..k].to_vec(),
        CoefficientOrder::Raster => (0..k).collect(),
    };
    let mut grids = Vec::with_capacity(3);
    for plane in [&planes.y, &planes.cb, &planes.cr] {
        grids.push(block_partition(plane)?);
    }
    let block_rows = grids[0].block_rows;
    let block_cols = grids[0].block_cols;
    let spatial = block_rows * block_cols;
    let mut values = vec![0.0; 3 * k * spatial];

    for (color, grid) in grids.iter().enumerate() {
        let params = gts.channels()[color];
        let per_block = |block: &Array2<f64>| -> Result<Vec<f64>> {
            let out = gt_apply_2d(params, block)?;
            let flat = out.as_slice().expect("blocks are standard layout");
            Ok(scan.iter().map(|&idx| flat[idx]).collect())
        };
        let compute = || -> Result<Vec<Vec<f64>>> {
            grid.blocks.par_iter().map(per_block).collect()
        };
        let block_coeffs = match worker_pool() {
            Some(pool) => pool.install(compute)?,
            None => compute()?,
        };
        // Disjoint output slots per (channel, block) keep the result
        // independent of worker count.
        for (b, coeffs) in block_coeffs.iter().enumerate() {
            for (c, &v) in coeffs.iter().enumerate() {
                let channel = color * k + c;
                values[channel * spatial + b] = v;
            }
        }
    }
    Ok(FeatureTensor {
        channels: 3 * k,
        block_rows,
        block_cols,
        values,
    })
}

/// Variant where `total_k` counts channels across all three colors; it must
/// split evenly.
pub fn extract_features_total(
    planes: &ImagePlanes,
    gts: &PerChannelGt,
    total_k: usize,
    order: CoefficientOrder,
) -> Result<FeatureTensor> {
    if total_k == 0 || total_k % 3 != 0 {
        return Err(GtError::InvalidConfig(format!(
            "total channel count {total_k} must be a positive multiple of 3"
        )));
    }
    extract_features(planes, gts, total_k / 3, order)
}

/// Per-channel mean and standard deviation over a feature dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub const STD_FLOOR: f64 = 1e-8;

/// Two-pass mean/variance per channel over all samples and positions.
pub fn fit_channel_stats(features: &[FeatureTensor]) -> Result<ChannelStats> {
    let first = features.first().ok_or(GtError::EmptyDataset)?;
    let channels = first.channels;
    for f in features {
        if f.channels != channels {
            return Err(GtError::ShapeMismatch(format!(
                "feature channel counts differ: {} vs {channels}",
                f.channels
            )));
        }
    }
    let mut mean = vec![0.0; channels];
    let mut counts = vec![0usize; channels];
    for f in features {
        let spatial = f.spatial_len();
        for c in 0..channels {
            let slab = &f.values[c * spatial..(c + 1) * spatial];
            mean[c] += slab.iter().sum::<f64>();
            counts[c] += spatial;
        }
    }
    for c in 0..channels {
        mean[c] /= counts[c] as f64;
    }
    let mut var = vec![0.0; channels];
    for f in features {
        let spatial = f.spatial_len();
        for c in 0..channels {
            let slab = &f.values[c * spatial..(c + 1) * spatial];
            var[c] += slab.iter().map(|v| (v - mean[c]).powi(2)).sum::<f64>();
        }
    }
    let std = var
        .iter()
        .zip(&counts)
        .map(|(v, &n)| (v / n as f64).sqrt().max(STD_FLOOR))
        .collect();
    Ok(ChannelStats { mean, std })
}

pub fn normalize(features: &FeatureTensor, stats: &ChannelStats) -> Result<FeatureTensor> {
    if stats.mean.len() != features.channels {
        return Err(GtError::ShapeMismatch(format!(
            "stats cover {} channels, features have {}",
            stats.mean.len(),
            features.channels
        )));
    }
    let spatial = features.spatial_len();
    let mut values = features.values.clone();
    for c in 0..features.channels {
        let (m, s) = (stats.mean[c], stats.std[c]);
        for v in &mut values[c * spatial..(c + 1) * spatial] {
            *v = (*v - m) / s;
        }
    }
    Ok(FeatureTensor {
        values,
        ..features.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::TransformKind;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn gray_image(h: usize, w: usize, v: u8) -> RgbImage {
        RgbImage::new(h, w, vec![v; h * w * 3]).unwrap()
    }

    #[test]
    fn gray_has_neutral_chroma() {
        for v in [0u8, 77, 255] {
            let planes = rgb_to_ycbcr(&gray_image(8, 8, v)).unwrap();
            assert!((planes.y[[3, 4]] - v as f64).abs() < 1e-9);
            assert!((planes.cb[[3, 4]] - 128.0).abs() < 1e-9);
            assert!((planes.cr[[3, 4]] - 128.0).abs() < 1e-9);
        }
    }

    #[test]
    fn pure_red_conversion() {
        let (y, cb, cr) = ycbcr_pixel(255, 0, 0);
        assert!((y - 76.245).abs() < 1e-9);
        assert!((cb - 84.97232).abs() < 1e-9);
        assert!((cr - 255.5).abs() < 1e-9);
        // The plane clamps the half-step excursion.
        let mut data = vec![0u8; 8 * 8 * 3];
        data[0] = 255;
        let planes = rgb_to_ycbcr(&RgbImage::new(8, 8, data).unwrap()).unwrap();
        assert_eq!(planes.cr[[0, 0]], 255.0);
    }

    #[test]
    fn empty_image_rejected() {
        assert!(matches!(
            rgb_to_ycbcr(&RgbImage {
                height: 0,
                width: 0,
                data: vec![]
            }),
            Err(GtError::EmptyImage)
        ));
    }

    #[test]
    fn single_block_partition() {
        let plane = Array2::from_shape_fn((8, 8), |(r, c)| (r * 8 + c) as f64);
        let grid = block_partition(&plane).unwrap();
        assert_eq!(grid.blocks.len(), 1);
        assert_eq!(grid.blocks[0], plane);
    }

    #[test]
    fn constant_blocks_partition() {
        let mut plane = Array2::zeros((16, 16));
        for by in 0..2 {
            for bx in 0..2 {
                let v = (by * 2 + bx) as f64;
                plane
                    .slice_mut(ndarray::s![by * 8..(by + 1) * 8, bx * 8..(bx + 1) * 8])
                    .fill(v);
            }
        }
        let grid = block_partition(&plane).unwrap();
        for (i, block) in grid.blocks.iter().enumerate() {
            assert!(block.iter().all(|&v| v == i as f64));
        }
    }

    #[test]
    fn partition_round_trip() {
        let mut rng = StdRng::seed_from_u64(21);
        let plane = Array2::from_shape_fn((24, 16), |_| rng.gen_range(-10.0..10.0));
        let grid = block_partition(&plane).unwrap();
        assert_eq!(grid.block_rows, 3);
        assert_eq!(grid.block_cols, 2);
        assert_eq!(block_reassemble(&grid), plane);
    }

    #[test]
    fn indivisible_plane_rejected() {
        let plane = Array2::zeros((10, 16));
        assert!(matches!(
            block_partition(&plane),
            Err(GtError::NotDivisible { .. })
        ));
    }

    #[test]
    fn center_crop_trims_borders() {
        let img = gray_image(19, 26, 50);
        let planes = rgb_to_ycbcr(&img).unwrap().center_crop().unwrap();
        assert_eq!((planes.height, planes.width), (16, 24));
        assert!(matches!(
            rgb_to_ycbcr(&gray_image(5, 5, 1)).unwrap().center_crop(),
            Err(GtError::InvalidSize(_))
        ));
    }

    #[test]
    fn zigzag_endpoints() {
        let order = zigzag_order(8).unwrap();
        assert_eq!(order[0], 0); // (0,0)
        assert_eq!(order[1], 1); // (0,1)
        assert_eq!(order[2], 8); // (1,0)
        assert_eq!(order[63], 63); // (7,7)
        assert!(matches!(zigzag_order(4), Err(GtError::UnsupportedSize(4))));
    }

    #[test]
    fn zigzag_matches_antidiagonal_enumeration() {
        // Oracle: walk anti-diagonals, alternating direction, odd diagonals
        // top-down.
        let mut expected = Vec::new();
        for d in 0..=14usize {
            let lo = d.saturating_sub(7);
            let hi = d.min(7);
            let cells: Vec<usize> = (lo..=hi).map(|i| i * 8 + (d - i)).collect();
            if d % 2 == 1 {
                expected.extend(cells);
            } else {
                expected.extend(cells.into_iter().rev());
            }
        }
        assert_eq!(zigzag_order(8).unwrap().as_slice(), expected.as_slice());
    }

    #[test]
    fn dc_feature_of_constant_block() {
        // Unnormalized 2-D DCT row 0 sums all 64 entries: 8 * 64 = 512.
        let planes = rgb_to_ycbcr(&gray_image(8, 8, 8)).unwrap();
        let features = extract_features(
            &planes,
            &PerChannelGt::dct_corner(),
            1,
            CoefficientOrder::Zigzag,
        )
        .unwrap();
        assert_eq!(features.channels, 3);
        assert!((features.get(0, 0, 0) - 512.0).abs() < 1e-9);
    }

    #[test]
    fn identity_transform_list_is_a_config_error() {
        let identity_ish = GtParams::new(
            vec![TransformKind::Identity, TransformKind::Identity],
            vec![0.0],
            1.0,
        )
        .unwrap();
        assert!(matches!(
            PerChannelGt::new(identity_ish, GtParams::vision(), GtParams::vision()),
            Err(GtError::InvalidConfig(_))
        ));
    }

    #[test]
    fn k64_keeps_every_coefficient() {
        let mut rng = StdRng::seed_from_u64(4);
        let mut data = vec![0u8; 16 * 8 * 3];
        rng.fill(&mut data[..]);
        let planes = rgb_to_ycbcr(&RgbImage::new(16, 8, data).unwrap()).unwrap();
        let gts = PerChannelGt::dct_corner();
        let features = extract_features(&planes, &gts, 64, CoefficientOrder::Zigzag).unwrap();
        assert_eq!(features.channels, 192);
        let order = zigzag_order(8).unwrap();
        let grid = block_partition(&planes.cb).unwrap();
        for (b, block) in grid.blocks.iter().enumerate() {
            let out = gt_apply_2d(&gts.cb_params, block).unwrap();
            let flat = out.as_slice().unwrap();
            let (by, bx) = (b / grid.block_cols, b % grid.block_cols);
            for c in 0..64 {
                let feat = features.get(64 + c, by, bx);
                assert!((feat - flat[order[c]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn retention_bounds_checked() {
        let planes = rgb_to_ycbcr(&gray_image(8, 8, 1)).unwrap();
        let gts = PerChannelGt::dct_corner();
        assert!(extract_features(&planes, &gts, 0, CoefficientOrder::Zigzag).is_err());
        assert!(extract_features(&planes, &gts, 65, CoefficientOrder::Zigzag).is_err());
        assert!(extract_features_total(&planes, &gts, 32, CoefficientOrder::Zigzag).is_err());
        let total = extract_features_total(&planes, &gts, 24, CoefficientOrder::Zigzag).unwrap();
        assert_eq!(total.channels, 24);
    }

    #[test]
    fn stats_floor_and_simple_case() {
        let constant = FeatureTensor {
            channels: 1,
            block_rows: 1,
            block_cols: 2,
            values: vec![5.0, 5.0],
        };
        let stats = fit_channel_stats(std::slice::from_ref(&constant)).unwrap();
        assert_eq!(stats.std[0], STD_FLOOR);
        let normalized = normalize(&constant, &stats).unwrap();
        assert!(normalized.values.iter().all(|&v| v == 0.0));

        let a = FeatureTensor {
            channels: 1,
            block_rows: 1,
            block_cols: 1,
            values: vec![1.0],
        };
        let b = FeatureTensor {
            channels: 1,
            block_rows: 1,
            block_cols: 1,
            values: vec![3.0],
        };
        let stats = fit_channel_stats(&[a.clone(), b]).unwrap();
        assert_eq!(stats.mean[0], 2.0);
        assert_eq!(stats.std[0], 1.0);
        assert_eq!(normalize(&a, &stats).unwrap().values, vec![-1.0]);
    }

    #[test]
    fn normalize_round_trip() {
        let mut rng = StdRng::seed_from_u64(31);
        let samples: Vec<FeatureTensor> = (0..4)
            .map(|_| FeatureTensor {
                channels: 3,
                block_rows: 2,
                block_cols: 2,
                values: (0..12).map(|_| rng.gen_range(-5.0..5.0)).collect(),
            })
            .collect();
        let stats = fit_channel_stats(&samples).unwrap();
        let spatial = 4;
        for sample in &samples {
            let normalized = normalize(sample, &stats).unwrap();
            for c in 0..3 {
                for i in 0..spatial {
                    let recovered =
                        normalized.values[c * spatial + i] * stats.std[c] + stats.mean[c];
                    assert!((recovered - sample.values[c * spatial + i]).abs() < 1e-12);
                }
            }
        }
        assert!(matches!(fit_channel_stats(&[]), Err(GtError::EmptyDataset)));
    }

    #[test]
    fn normalized_dataset_is_standardized() {
        let mut rng = StdRng::seed_from_u64(63);
        let samples: Vec<FeatureTensor> = (0..6)
            .map(|_| FeatureTensor {
                channels: 2,
                block_rows: 4,
                block_cols: 4,
                values: (0..32).map(|_| rng.gen_range(-3.0..9.0)).collect(),
            })
            .collect();
        let stats = fit_channel_stats(&samples).unwrap();
        let normalized: Vec<FeatureTensor> = samples
            .iter()
            .map(|s| normalize(s, &stats).unwrap())
            .collect();
        let post = fit_channel_stats(&normalized).unwrap();
        for c in 0..2 {
            assert!(post.mean[c].abs() < 1e-9);
            assert!((post.std[c] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn dct_corner_matches_reference_block_dct() {
        use std::f64::consts::PI;
        let mut rng = StdRng::seed_from_u64(8);
        let mut data = vec![0u8; 16 * 16 * 3];
        rng.fill(&mut data[..]);
        let planes = rgb_to_ycbcr(&RgbImage::new(16, 16, data).unwrap()).unwrap();
        let features = extract_features(
            &planes,
            &PerChannelGt::dct_corner(),
            64,
            CoefficientOrder::Zigzag,
        )
        .unwrap();

        // Reference: literal double-sum block DCT, zigzag retention.
        let order = zigzag_order(8).unwrap();
        for (color, plane) in [&planes.y, &planes.cb, &planes.cr].iter().enumerate() {
            let grid = block_partition(plane).unwrap();
            for (b, block) in grid.blocks.iter().enumerate() {
                let (by, bx) = (b / grid.block_cols, b % grid.block_cols);
                for c in 0..64 {
                    let (k, l) = (order[c] / 8, order[c] % 8);
                    let mut acc = 0.0;
                    for n in 0..8 {
                        for m in 0..8 {
                            acc += (PI * k as f64 * (n as f64 + 0.5) / 8.0).cos()
                                * (PI * l as f64 * (m as f64 + 0.5) / 8.0).cos()
                                * block[[n, m]];
                        }
                    }
                    let feat = features.get(color * 64 + c, by, bx);
                    assert!((feat - acc).abs() < 1e-9, "color {color} block {b} c {c}");
                }
            }
        }
    }

    #[test]
    fn features_respond_to_weight_perturbations() {
        let mut rng = StdRng::seed_from_u64(17);
        let mut data = vec![0u8; 8 * 8 * 3];
        rng.fill(&mut data[..]);
        let planes = rgb_to_ycbcr(&RgbImage::new(8, 8, data).unwrap()).unwrap();
        let base = extract_features(
            &planes,
            &PerChannelGt::dct_corner(),
            8,
            CoefficientOrder::Zigzag,
        )
        .unwrap();
        let h = 1e-6;
        for channel in 0..3 {
            for wi in 0..2 {
                let mut gts = PerChannelGt::dct_corner();
                let target = match channel {
                    0 => &mut gts.y_params,
                    1 => &mut gts.cb_params,
                    _ => &mut gts.cr_params,
                };
                target.weights[wi] += h;
                let bumped =
                    extract_features(&planes, &gts, 8, CoefficientOrder::Zigzag).unwrap();
                let max_delta = bumped
                    .values
                    .iter()
                    .zip(&base.values)
                    .map(|(a, b)| (a - b).abs() / h)
                    .fold(0.0, f64::max);
                assert!(max_delta > 1e-3, "channel {channel} weight {wi}");
            }
        }
    }

    #[test]
    fn tensor_image_input() {
        let values: Vec<f64> = (0..2 * 2 * 3).map(|i| i as f64 * 20.0).collect();
        let tensor = Tensor::real(vec![2, 2, 3], values).unwrap();
        let img = RgbImage::from_tensor(&tensor).unwrap();
        assert_eq!((img.height, img.width), (2, 2));
        assert_eq!(img.pixel(1, 1), [180, 200, 220]);

        let flat = Tensor::real(vec![12], vec![0.0; 12]).unwrap();
        assert!(RgbImage::from_tensor(&flat).is_err());
        let hot = Tensor::real(vec![1, 1, 3], vec![0.0, 300.0, 0.0]).unwrap();
        assert!(RgbImage::from_tensor(&hot).is_err());
    }

    #[test]
    fn ppm_parsing() {
        let img = RgbImage::new(2, 3, (0u8..18).collect()).unwrap();
        let bytes = img.to_ppm_bytes();
        let back = RgbImage::from_ppm_bytes(&bytes).unwrap();
        assert_eq!(back.data, img.data);
        assert_eq!((back.height, back.width), (2, 3));

        let commented = b"P6 # toy\n# size line\n3 2\n255\n".to_vec();
        let mut with_payload = commented;
        with_payload.extend_from_slice(&img.data);
        let parsed = RgbImage::from_ppm_bytes(&with_payload).unwrap();
        assert_eq!(parsed.data, img.data);

        assert!(RgbImage::from_ppm_bytes(b"P5\n1 1\n255\n\0").is_err());
        assert!(RgbImage::from_ppm_bytes(b"P6\n2 2\n255\n\0\0").is_err());
        assert!(RgbImage::from_ppm_bytes(b"P6\n1 1\n65535\n").is_err());
    }
}
