//! On-disk formats: the binary tensor file, the named-tensor checkpoint
//! container, and atomic file writes.
//!
//! Tensor file layout (all integers little-endian):
//! magic `GTTF` | version u32 = 1 | dtype u8 (0 = real64, 1 = complex as
//! interleaved f64 pairs) | ndim u8 | dims u64[ndim] | payload, row-major.
//! Round trips are bitwise lossless.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{GtError, Result};
use crate::gt::GtParams;

const TENSOR_MAGIC: &[u8; 4] = b"GTTF";
const CHECKPOINT_MAGIC: &[u8; 4] = b"GTCK";
const FORMAT_VERSION: u32 = 1;
const MAX_NDIM: usize = 8;
const MAX_ELEMENTS: usize = 1 << 28;

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

impl TensorData {
    fn len(&self) -> usize {
        match self {
            TensorData::Real(v) => v.len(),
            TensorData::Complex(v) => v.len(),
        }
    }

    fn dtype_tag(&self) -> u8 {
        match self {
            TensorData::Real(_) => 0,
            TensorData::Complex(_) => 1,
        }
    }
}

/// A dense row-major tensor as stored in a `GTTF` file.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: TensorData,
}

impl Tensor {
    pub fn real(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        Self::checked(dims, TensorData::Real(values))
    }

    pub fn complex(dims: Vec<usize>, values: Vec<Complex64>) -> Result<Self> {
        Self::checked(dims, TensorData::Complex(values))
    }

    fn checked(dims: Vec<usize>, data: TensorData) -> Result<Self> {
        let expected = element_count(&dims)?;
        if data.len() != expected {
            return Err(GtError::ShapeMismatch(format!(
                "dims {:?} need {} values, got {}",
                dims,
                expected,
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn as_real(&self) -> Result<&[f64]> {
        match &self.data {
            TensorData::Real(v) => Ok(v),
            TensorData::Complex(_) => Err(GtError::Format(
                "expected a real tensor, found complex".into(),
            )),
        }
    }

    pub fn as_complex(&self) -> Result<&[Complex64]> {
        match &self.data {
            TensorData::Complex(v) => Ok(v),
            TensorData::Real(_) => Err(GtError::Format(
                "expected a complex tensor, found real".into(),
            )),
        }
    }

    /// Promote to complex regardless of the stored dtype.
    pub fn to_complex(&self) -> Vec<Complex64> {
        match &self.data {
            TensorData::Complex(v) => v.clone(),
            TensorData::Real(v) => v.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        }
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(TENSOR_MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&[self.data.dtype_tag(), self.dims.len() as u8])?;
        for &d in &self.dims {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        match &self.data {
            TensorData::Real(values) => {
                for v in values {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            TensorData::Complex(values) => {
                for v in values {
                    w.write_all(&v.re.to_le_bytes())?;
                    w.write_all(&v.im.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != TENSOR_MAGIC {
            return Err(GtError::Format(format!(
                "bad tensor magic {:?}, expected \"GTTF\"",
                String::from_utf8_lossy(&magic)
            )));
        }
        let version = read_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(GtError::Format(format!(
                "unsupported tensor format version {version}"
            )));
        }
        let mut head = [0u8; 2];
        read_exact(r, &mut head)?;
        let (dtype, ndim) = (head[0], head[1] as usize);
        if ndim > MAX_NDIM {
            return Err(GtError::Format(format!("ndim {ndim} exceeds {MAX_NDIM}")));
        }
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(read_u64(r)? as usize);
        }
        let count = element_count(&dims)?;
        let data = match dtype {
            0 => {
                let mut values = Vec::with_capacity(count);
                for _ in 0..count {
                    values.push(read_f64(r)?);
                }
                TensorData::Real(values)
            }
            1 => {
                let mut values = Vec::with_capacity(count);
                for _ in 0..count {
                    let re = read_f64(r)?;
                    let im = read_f64(r)?;
                    values.push(Complex64::new(re, im));
                }
                TensorData::Complex(values)
            }
            other => {
                return Err(GtError::Format(format!("unknown dtype tag {other}")));
            }
        };
        Ok(Tensor { dims, data })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::new();
        self.write_to(&mut bytes)?;
        atomic_write(path, &bytes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = BufReader::new(File::open(path)?);
        let tensor = Self::read_from(&mut reader)?;
        let mut rest = [0u8; 1];
        if reader.read(&mut rest)? != 0 {
            return Err(GtError::Format("trailing bytes after tensor payload".into()));
        }
        Ok(tensor)
    }
}

fn element_count(dims: &[usize]) -> Result<usize> {
    let mut count: usize = 1;
    for &d in dims {
        count = count
            .checked_mul(d)
            .ok_or_else(|| GtError::Format(format!("dims {dims:?} overflow")))?;
    }
    if count > MAX_ELEMENTS {
        return Err(GtError::Format(format!(
            "tensor with {count} elements exceeds the {MAX_ELEMENTS} cap"
        )));
    }
    Ok(count)
}

/// Write via a sibling temp file and rename into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let file_name = path
        .file_name()
        .ok_or_else(|| GtError::Format(format!("path {} has no file name", path.display())))?;
    let tmp_path = match dir {
        Some(d) => d.join(format!(".{}.tmp", file_name.to_string_lossy())),
        None => Path::new(&format!(".{}.tmp", file_name.to_string_lossy())).to_path_buf(),
    };
    {
        let mut w = BufWriter::new(File::create(&tmp_path)?);
        w.write_all(bytes)?;
        w.flush()?;
    }
    std::fs::rename(&tmp_path, path)?;
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            GtError::Format("truncated file".into())
        } else {
            GtError::Io(e)
        }
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

/// A checkpoint: named tensors plus named blend-parameter blocks, in
/// insertion order so that round trips are byte-identical.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Tensor)>,
    pub params: Vec<(String, GtParams)>,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| GtError::Format(format!("checkpoint has no tensor {name:?}")))
    }

    pub fn gt_params(&self, name: &str) -> Result<&GtParams> {
        self.params
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, p)| p)
            .ok_or_else(|| GtError::Format(format!("checkpoint has no params {name:?}")))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        let count = (self.tensors.len() + self.params.len()) as u32;
        w.write_all(&count.to_le_bytes())?;
        for (name, tensor) in &self.tensors {
            write_record_header(w, 0, name)?;
            let mut body = Vec::new();
            tensor.write_to(&mut body)?;
            w.write_all(&(body.len() as u64).to_le_bytes())?;
            w.write_all(&body)?;
        }
        for (name, params) in &self.params {
            write_record_header(w, 1, name)?;
            let body = params.to_text();
            w.write_all(&(body.len() as u64).to_le_bytes())?;
            w.write_all(body.as_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(GtError::Format("bad checkpoint magic".into()));
        }
        let version = read_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(GtError::Format(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let count = read_u32(r)?;
        let mut checkpoint = Checkpoint::default();
        for _ in 0..count {
            let mut tag = [0u8; 1];
            read_exact(r, &mut tag)?;
            let name_len = read_u32(r)? as usize;
            let mut name_bytes = vec![0u8; name_len];
            read_exact(r, &mut name_bytes)?;
            let name = String::from_utf8(name_bytes)
                .map_err(|_| GtError::Format("record name is not UTF-8".into()))?;
            let body_len = read_u64(r)? as usize;
            let mut body = vec![0u8; body_len];
            read_exact(r, &mut body)?;
            match tag[0] {
                0 => {
                    let tensor = Tensor::read_from(&mut body.as_slice())?;
                    checkpoint.tensors.push((name, tensor));
                }
                1 => {
                    let text = std::str::from_utf8(&body)
                        .map_err(|_| GtError::Format("params block is not UTF-8".into()))?;
                    checkpoint.params.push((name, GtParams::from_text(text)?));
                }
                other => {
                    return Err(GtError::Format(format!("unknown record tag {other}")));
                }
            }
        }
        Ok(checkpoint)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::new();
        self.write_to(&mut bytes)?;
        atomic_write(path, &bytes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = BufReader::new(File::open(path)?);
        Self::read_from(&mut reader)
    }
}

fn write_record_header<W: Write>(w: &mut W, tag: u8, name: &str) -> Result<()> {
    w.write_all(&[tag])?;
    w.write_all(&(name.len() as u32).to_le_bytes())?;
    w.write_all(name.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn tensor_round_trip_is_bitwise() {
        let mut rng = StdRng::seed_from_u64(77);
        let values: Vec<f64> = (0..24).map(|_| rng.gen_range(-1e9..1e9)).collect();
        let t = Tensor::real(vec![2, 3, 4], values).unwrap();
        let mut bytes = Vec::new();
        t.write_to(&mut bytes).unwrap();
        let back = Tensor::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back.dims, t.dims);
        for (a, b) in back.as_real().unwrap().iter().zip(t.as_real().unwrap()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let mut bytes2 = Vec::new();
        back.write_to(&mut bytes2).unwrap();
        assert_eq!(bytes, bytes2);
    }

    #[test]
    fn complex_tensor_round_trip() {
        let values: Vec<Complex64> = vec![
            Complex64::new(1.0, -2.0),
            Complex64::new(f64::MIN_POSITIVE, 1e300),
            Complex64::new(-0.0, 3.5),
            Complex64::new(0.1 + 0.2, -1.0 / 3.0),
        ];
        let t = Tensor::complex(vec![2, 2], values.clone()).unwrap();
        let mut bytes = Vec::new();
        t.write_to(&mut bytes).unwrap();
        let back = Tensor::read_from(&mut bytes.as_slice()).unwrap();
        for (a, b) in back.as_complex().unwrap().iter().zip(&values) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }

    #[test]
    fn malformed_tensors_error_cleanly() {
        assert!(matches!(
            Tensor::read_from(&mut &b"GARB"[..]),
            Err(GtError::Format(_))
        ));
        let t = Tensor::real(vec![2], vec![1.0, 2.0]).unwrap();
        let mut bytes = Vec::new();
        t.write_to(&mut bytes).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(
            Tensor::read_from(&mut bytes.as_slice()),
            Err(GtError::Format(_))
        ));
        // Huge claimed dims must not allocate.
        let mut huge = Vec::new();
        huge.extend_from_slice(b"GTTF");
        huge.extend_from_slice(&1u32.to_le_bytes());
        huge.extend_from_slice(&[0u8, 2u8]);
        huge.extend_from_slice(&u64::MAX.to_le_bytes());
        huge.extend_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(
            Tensor::read_from(&mut huge.as_slice()),
            Err(GtError::Format(_))
        ));
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(Tensor::real(vec![2, 3], vec![1.0; 5]).is_err());
    }

    #[test]
    fn tensor_file_round_trip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.gttf");
        let t = Tensor::real(vec![3], vec![1.5, -2.5, 0.25]).unwrap();
        t.save(&path).unwrap();
        let back = Tensor::load(&path).unwrap();
        assert_eq!(back, t);
        assert!(!dir.path().join(".k.gttf.tmp").exists());
    }

    #[test]
    fn checkpoint_round_trip() {
        use crate::gt::GtParams;
        let mut ck = Checkpoint::default();
        ck.tensors.push((
            "embed.token".into(),
            Tensor::real(vec![4, 2], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]).unwrap(),
        ));
        ck.params.push(("layer0.gt".into(), GtParams::nlp()));
        ck.params.push((
            "layer1.gt".into(),
            GtParams::new(GtParams::nlp().transforms, vec![-3.63, -0.06], 0.15).unwrap(),
        ));
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes).unwrap();
        let back = Checkpoint::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, ck);
        let mut bytes2 = Vec::new();
        back.write_to(&mut bytes2).unwrap();
        assert_eq!(bytes, bytes2);
        assert!(back.tensor("embed.token").is_ok());
        assert!(back.tensor("missing").is_err());
        assert_eq!(back.gt_params("layer1.gt").unwrap().weights[0], -3.63);
    }
}
