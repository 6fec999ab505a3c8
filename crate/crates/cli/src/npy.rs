//! NPY v1.0 reading and writing.
//!
//! Only little-endian `<f4`, `<f8`, `<i4`, `<i8` and `|u1` payloads in C order
//! are supported. Weights are 2-D; label vectors are 1-D.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use topoprune_core::pruning::{MaskMethod, PruneMask};
use topoprune_core::LayerWeights;

pub const MAGIC: [u8; 6] = *b"\x93NUMPY";
const ALIGN: usize = 64;
const PREAMBLE: usize = MAGIC.len() + 2 + 2;

#[derive(Debug, thiserror::Error)]
pub enum NpyError {
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("not an NPY file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported NPY version {0}.{1}, only 1.0 is read")]
    UnsupportedVersion(u8, u8),
    #[error("malformed NPY header: {0}")]
    BadHeader(String),
    #[error("unsupported dtype {0:?}")]
    UnsupportedDescr(String),
    #[error("unsupported layout: fortran_order arrays are not read")]
    UnsupportedLayout,
    #[error("expected 2-D array, found {0}-D")]
    ExpectedTwoD(usize),
    #[error("expected 1-D array, found {0}-D")]
    ExpectedOneD(usize),
    #[error("payload holds {actual} bytes, header promises {expected}")]
    Truncated { expected: usize, actual: usize },
    #[error("{0}")]
    Content(#[from] topoprune_core::Error),
}

impl NpyError {
    /// Stable identifier for scripts matching on failures.
    pub fn code(&self) -> &'static str {
        match self {
            NpyError::Io(_) => "npy-io",
            NpyError::BadMagic => "npy-bad-magic",
            NpyError::UnsupportedVersion(..) => "npy-bad-version",
            NpyError::BadHeader(_) => "npy-bad-header",
            NpyError::UnsupportedDescr(_) => "npy-bad-descr",
            NpyError::UnsupportedLayout => "npy-bad-layout",
            NpyError::ExpectedTwoD(_) | NpyError::ExpectedOneD(_) => "npy-bad-ndim",
            NpyError::Truncated { .. } => "npy-truncated",
            NpyError::Content(_) => "npy-bad-content",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Descr {
    F4,
    F8,
    I4,
    I8,
    U1,
}

impl Descr {
    pub fn as_str(self) -> &'static str {
        match self {
            Descr::F4 => "<f4",
            Descr::F8 => "<f8",
            Descr::I4 => "<i4",
            Descr::I8 => "<i8",
            Descr::U1 => "|u1",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "<f4" => Descr::F4,
            "<f8" => Descr::F8,
            "<i4" => Descr::I4,
            "<i8" => Descr::I8,
            // Single bytes have no byte order; numpy writes '|u1'.
            "|u1" | "<u1" | "=u1" => Descr::U1,
            _ => return None,
        })
    }

    pub fn size(self) -> usize {
        match self {
            Descr::U1 => 1,
            Descr::F4 | Descr::I4 => 4,
            Descr::F8 | Descr::I8 => 8,
        }
    }
}

/// Raw array as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub descr: Descr,
    pub shape: Vec<usize>,
    pub data: Vec<u8>,
}

impl NpyArray {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements widened to `f64`.
    pub fn to_f64(&self) -> Vec<f64> {
        let chunks = self.data.chunks_exact(self.descr.size());
        match self.descr {
            Descr::F4 => chunks.map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect(),
            Descr::F8 => chunks.map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
            Descr::I4 => chunks.map(|c| i32::from_le_bytes(c.try_into().unwrap()) as f64).collect(),
            Descr::I8 => chunks.map(|c| i64::from_le_bytes(c.try_into().unwrap()) as f64).collect(),
            Descr::U1 => self.data.iter().map(|&b| b as f64).collect(),
        }
    }

    /// Elements as integers; floats are rejected.
    pub fn to_i64(&self) -> Result<Vec<i64>, NpyError> {
        let chunks = self.data.chunks_exact(self.descr.size());
        Ok(match self.descr {
            Descr::I4 => chunks.map(|c| i32::from_le_bytes(c.try_into().unwrap()) as i64).collect(),
            Descr::I8 => chunks.map(|c| i64::from_le_bytes(c.try_into().unwrap())).collect(),
            Descr::U1 => self.data.iter().map(|&b| b as i64).collect(),
            Descr::F4 | Descr::F8 => {
                return Err(NpyError::UnsupportedDescr(format!("{} where integers are expected", self.descr.as_str())))
            }
        })
    }

    fn matrix_shape(&self) -> Result<(usize, usize), NpyError> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(NpyError::ExpectedTwoD(self.shape.len())),
        }
    }
}

#[derive(Debug, Default)]
struct HeaderDict {
    descr: Option<String>,
    fortran_order: Option<bool>,
    shape: Option<Vec<usize>>,
}

/// Parses the Python dict literal of an NPY header. Only the three standard
/// keys and the literal forms numpy emits for them are understood.
fn parse_header(text: &str) -> Result<HeaderDict, NpyError> {
    let bad = |msg: &str| NpyError::BadHeader(msg.to_string());
    let mut s = text.trim();
    s = s.strip_prefix('{').ok_or_else(|| bad("header is not a dict"))?;
    s = s.trim_end().strip_suffix('}').ok_or_else(|| bad("header dict is not closed"))?;

    let mut dict = HeaderDict::default();
    let mut rest = s.trim_start();
    while !rest.is_empty() {
        let (key, after) = take_string(rest).ok_or_else(|| bad("expected a quoted key"))?;
        rest = after.trim_start().strip_prefix(':').ok_or_else(|| bad("expected ':' after key"))?.trim_start();
        match key {
            "descr" => {
                let (v, after) = take_string(rest).ok_or_else(|| bad("descr must be a string"))?;
                dict.descr = Some(v.to_string());
                rest = after;
            }
            "fortran_order" => {
                if let Some(after) = rest.strip_prefix("True") {
                    dict.fortran_order = Some(true);
                    rest = after;
                } else if let Some(after) = rest.strip_prefix("False") {
                    dict.fortran_order = Some(false);
                    rest = after;
                } else {
                    return Err(bad("fortran_order must be True or False"));
                }
            }
            "shape" => {
                let body = rest.strip_prefix('(').ok_or_else(|| bad("shape must be a tuple"))?;
                let close = body.find(')').ok_or_else(|| bad("shape tuple is not closed"))?;
                let dims = body[..close]
                    .split(',')
                    .map(str::trim)
                    .filter(|d| !d.is_empty())
                    .map(|d| d.trim_end_matches('L').parse::<usize>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| bad("shape entries must be non-negative integers"))?;
                dict.shape = Some(dims);
                rest = &body[close + 1..];
            }
            other => return Err(NpyError::BadHeader(format!("unexpected key {other:?}"))),
        }
        rest = rest.trim_start();
        rest = rest.strip_prefix(',').unwrap_or(rest).trim_start();
    }
    Ok(dict)
}

fn take_string(s: &str) -> Option<(&str, &str)> {
    let quote = s.chars().next().filter(|c| *c == '\'' || *c == '"')?;
    let body = &s[1..];
    let end = body.find(quote)?;
    Some((&body[..end], &body[end + 1..]))
}

pub fn read_array<R: Read>(reader: &mut R) -> Result<NpyArray, NpyError> {
    let mut magic = [0u8; 6];
    read_exact_or(reader, &mut magic, NpyError::BadMagic)?;
    if magic != MAGIC {
        return Err(NpyError::BadMagic);
    }
    let mut version = [0u8; 2];
    read_exact_or(reader, &mut version, NpyError::BadHeader("missing version".into()))?;
    if version != [1, 0] {
        return Err(NpyError::UnsupportedVersion(version[0], version[1]));
    }
    let mut len = [0u8; 2];
    read_exact_or(reader, &mut len, NpyError::BadHeader("missing header length".into()))?;
    let mut header = vec![0u8; u16::from_le_bytes(len) as usize];
    read_exact_or(reader, &mut header, NpyError::BadHeader("header shorter than declared".into()))?;
    let text = std::str::from_utf8(&header).map_err(|_| NpyError::BadHeader("header is not ASCII".into()))?;

    let dict = parse_header(text)?;
    let descr_str = dict.descr.ok_or_else(|| NpyError::BadHeader("missing descr".into()))?;
    let descr = Descr::parse(&descr_str).ok_or(NpyError::UnsupportedDescr(descr_str))?;
    if dict.fortran_order.ok_or_else(|| NpyError::BadHeader("missing fortran_order".into()))? {
        return Err(NpyError::UnsupportedLayout);
    }
    let shape = dict.shape.ok_or_else(|| NpyError::BadHeader("missing shape".into()))?;

    let expected = shape
        .iter()
        .try_fold(descr.size(), |acc, d| acc.checked_mul(*d))
        .ok_or_else(|| NpyError::BadHeader("shape overflows".into()))?;
    let mut data = Vec::with_capacity(expected);
    reader.take(expected as u64 + 1).read_to_end(&mut data)?;
    if data.len() != expected {
        return Err(NpyError::Truncated { expected, actual: data.len() });
    }
    Ok(NpyArray { descr, shape, data })
}

fn read_exact_or<R: Read>(reader: &mut R, buf: &mut [u8], short: NpyError) -> Result<(), NpyError> {
    match reader.read_exact(buf) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => Err(short),
        Err(e) => Err(e.into()),
    }
}

pub fn write_array<W: Write>(writer: &mut W, array: &NpyArray) -> Result<(), NpyError> {
    let expected = array.len() * array.descr.size();
    if array.data.len() != expected {
        return Err(NpyError::Truncated { expected, actual: array.data.len() });
    }
    let shape = match array.shape[..] {
        [d] => format!("({d},)"),
        _ => format!("({})", array.shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")),
    };
    let mut header =
        format!("{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}", array.descr.as_str(), shape);
    // Pad with spaces so the payload starts on a 64-byte boundary.
    let total = (PREAMBLE + header.len() + 1).div_ceil(ALIGN) * ALIGN;
    header.extend(std::iter::repeat_n(' ', total - PREAMBLE - header.len() - 1));
    header.push('\n');
    let header_len = u16::try_from(header.len()).map_err(|_| NpyError::BadHeader("header too long".into()))?;

    writer.write_all(&MAGIC)?;
    writer.write_all(&[1, 0])?;
    writer.write_all(&header_len.to_le_bytes())?;
    writer.write_all(header.as_bytes())?;
    writer.write_all(&array.data)?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<NpyArray, NpyError> {
    read_array(&mut BufReader::new(File::open(path)?))
}

pub fn write_file(path: &Path, array: &NpyArray) -> Result<(), NpyError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_array(&mut w, array)?;
    w.flush()?;
    Ok(())
}

/// Weight matrix from a 2-D `<f4` or `<f8` array.
pub fn weights_from_array(array: &NpyArray) -> Result<LayerWeights, NpyError> {
    if !matches!(array.descr, Descr::F4 | Descr::F8) {
        return Err(NpyError::UnsupportedDescr(array.descr.as_str().to_string()));
    }
    let (rows, cols) = array.matrix_shape()?;
    Ok(LayerWeights::new(rows, cols, array.to_f64())?)
}

pub fn weights_to_array(w: &LayerWeights, descr: Descr) -> Result<NpyArray, NpyError> {
    let data = match descr {
        Descr::F8 => w.values().iter().flat_map(|v| v.to_le_bytes()).collect(),
        Descr::F4 => w.values().iter().flat_map(|v| (*v as f32).to_le_bytes()).collect(),
        other => return Err(NpyError::UnsupportedDescr(other.as_str().to_string())),
    };
    Ok(NpyArray { descr, shape: vec![w.rows(), w.cols()], data })
}

pub fn read_npy(path: &Path) -> Result<LayerWeights, NpyError> {
    weights_from_array(&read_file(path)?)
}

pub fn write_npy(path: &Path, w: &LayerWeights, descr: Descr) -> Result<(), NpyError> {
    write_file(path, &weights_to_array(w, descr)?)
}

pub fn mask_to_array(mask: &PruneMask) -> NpyArray {
    let (rows, cols) = mask.shape();
    NpyArray { descr: Descr::U1, shape: vec![rows, cols], data: mask.to_bytes() }
}

pub fn mask_from_array(array: &NpyArray, method: MaskMethod) -> Result<PruneMask, NpyError> {
    if array.descr != Descr::U1 {
        return Err(NpyError::UnsupportedDescr(array.descr.as_str().to_string()));
    }
    let (rows, cols) = array.matrix_shape()?;
    Ok(PruneMask::from_bytes(rows, cols, &array.data, method)?)
}

pub fn write_mask(path: &Path, mask: &PruneMask) -> Result<(), NpyError> {
    write_file(path, &mask_to_array(mask))
}

pub fn read_mask(path: &Path, method: MaskMethod) -> Result<PruneMask, NpyError> {
    mask_from_array(&read_file(path)?, method)
}

/// Class labels from a 1-D integer array.
pub fn read_labels(path: &Path) -> Result<Vec<usize>, NpyError> {
    let array = read_file(path)?;
    if array.shape.len() != 1 {
        return Err(NpyError::ExpectedOneD(array.shape.len()));
    }
    array
        .to_i64()?
        .into_iter()
        .map(|l| usize::try_from(l).map_err(|_| NpyError::BadHeader(format!("negative label {l}"))))
        .collect()
}
