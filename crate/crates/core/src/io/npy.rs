//! NPY container: version 1.0 little-endian `<f8` and `|b1` on write;
//! versions 1.0 and 2.0 with `<f4`, `<f8`, `|b1` or `|u1` payloads on read.

use ndarray::{ArrayD, IxDyn};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F4,
    F8,
    B1,
    U1,
}

impl Dtype {
    fn parse(descr: &str) -> Option<Self> {
        match descr {
            "<f4" => Some(Dtype::F4),
            "<f8" => Some(Dtype::F8),
            "|b1" => Some(Dtype::B1),
            "|u1" => Some(Dtype::U1),
            _ => None,
        }
    }

    fn descr(self) -> &'static str {
        match self {
            Dtype::F4 => "<f4",
            Dtype::F8 => "<f8",
            Dtype::B1 => "|b1",
            Dtype::U1 => "|u1",
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::F4 => 4,
            Dtype::F8 => 8,
            Dtype::B1 | Dtype::U1 => 1,
        }
    }
}

/// A decoded array with its on-disk element type.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    data: Vec<u8>,
    data_offset: usize,
}

impl NpyArray {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Floating payloads, or 0/1 for boolean and byte payloads.
    pub fn to_real<T: Scalar>(&self) -> Result<ArrayD<T>> {
        let values: Vec<T> = match self.dtype {
            Dtype::F4 => self
                .data
                .chunks_exact(4)
                .map(|c| T::lit(f32::from_le_bytes(c.try_into().unwrap()) as f64))
                .collect(),
            Dtype::F8 => self
                .data
                .chunks_exact(8)
                .map(|c| T::lit(f64::from_le_bytes(c.try_into().unwrap())))
                .collect(),
            Dtype::B1 | Dtype::U1 => self
                .data
                .iter()
                .map(|&b| T::from_count(b as usize))
                .collect(),
        };
        Ok(ArrayD::from_shape_vec(IxDyn(&self.shape), values).expect("length checked on decode"))
    }

    /// Boolean payload; bytes must be 0 or 1.
    pub fn to_bool(&self) -> Result<ArrayD<bool>> {
        if !matches!(self.dtype, Dtype::B1 | Dtype::U1) {
            return Err(Error::Parse {
                offset: self.data_offset,
                message: format!("expected a boolean array, found {}", self.dtype.descr()),
            });
        }
        let values = self
            .data
            .iter()
            .enumerate()
            .map(|(i, &b)| match b {
                0 => Ok(false),
                1 => Ok(true),
                _ => Err(Error::Parse {
                    offset: self.data_offset + i,
                    message: format!("invalid boolean byte {b}"),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ArrayD::from_shape_vec(IxDyn(&self.shape), values).expect("length checked on decode"))
    }
}

fn header_bytes(dtype: Dtype, shape: &[usize]) -> Vec<u8> {
    let dims = match shape {
        [n] => format!("({n},)"),
        _ => format!(
            "({})",
            shape
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ),
    };
    let mut dict = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        dtype.descr(),
        dims
    );
    let unpadded = MAGIC.len() + 4 + dict.len() + 1;
    dict.push_str(&" ".repeat(unpadded.next_multiple_of(ALIGN) - unpadded));
    dict.push('\n');
    let mut out = Vec::with_capacity(MAGIC.len() + 4 + dict.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out
}

/// C-order `<f8` encoding of `values` with the given shape.
pub fn encode_f64<T: Scalar>(shape: &[usize], values: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut out = header_bytes(Dtype::F8, shape);
    for v in values {
        out.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
    }
    out
}

pub fn encode_bool(shape: &[usize], values: impl IntoIterator<Item = bool>) -> Vec<u8> {
    let mut out = header_bytes(Dtype::B1, shape);
    out.extend(values.into_iter().map(u8::from));
    out
}

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        message: message.into(),
    }
}

/// Cursor over the header dictionary; offsets are absolute file positions.
struct DictParser<'a> {
    text: &'a [u8],
    pos: usize,
    base: usize,
}

impl DictParser<'_> {
    fn offset(&self) -> usize {
        self.base + self.pos
    }

    fn skip_ws(&mut self) {
        while self.pos < self.text.len() && self.text[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.text.get(self.pos).copied()
    }

    fn expect(&mut self, ch: u8) -> Result<()> {
        match self.peek() {
            Some(c) if c == ch => {
                self.pos += 1;
                Ok(())
            }
            Some(c) => Err(parse_err(
                self.offset(),
                format!("expected '{}', found '{}'", ch as char, c as char),
            )),
            None => Err(parse_err(
                self.offset(),
                format!("expected '{}', found end of header", ch as char),
            )),
        }
    }

    fn string(&mut self) -> Result<String> {
        let quote = match self.peek() {
            Some(q @ (b'\'' | b'"')) => q,
            _ => return Err(parse_err(self.offset(), "expected a quoted string")),
        };
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.text.len() && self.text[self.pos] != quote {
            self.pos += 1;
        }
        if self.pos == self.text.len() {
            return Err(parse_err(self.base + start, "unterminated string"));
        }
        let s = String::from_utf8_lossy(&self.text[start..self.pos]).into_owned();
        self.pos += 1;
        Ok(s)
    }

    fn word(&mut self) -> &[u8] {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.text.len()
            && (self.text[self.pos].is_ascii_alphanumeric() || self.text[self.pos] == b'_')
        {
            self.pos += 1;
        }
        &self.text[start..self.pos]
    }

    fn boolean(&mut self) -> Result<bool> {
        let at = {
            self.skip_ws();
            self.offset()
        };
        match self.word() {
            b"True" => Ok(true),
            b"False" => Ok(false),
            _ => Err(parse_err(at, "expected True or False")),
        }
    }

    fn shape(&mut self) -> Result<Vec<usize>> {
        self.expect(b'(')?;
        let mut dims = Vec::new();
        loop {
            if self.peek() == Some(b')') {
                self.pos += 1;
                return Ok(dims);
            }
            let at = self.offset();
            let digits = self.word();
            let dim = std::str::from_utf8(digits)
                .ok()
                .and_then(|d| d.parse::<usize>().ok())
                .ok_or_else(|| parse_err(at, "expected a dimension"))?;
            dims.push(dim);
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b')') => {}
                _ => return Err(parse_err(self.offset(), "expected ',' or ')' in shape")),
            }
        }
    }
}

struct Header {
    dtype: Dtype,
    shape: Vec<usize>,
}

fn parse_dict(text: &[u8], base: usize) -> Result<Header> {
    let mut p = DictParser { text, pos: 0, base };
    let (mut descr, mut fortran, mut shape) = (None, None, None);
    p.expect(b'{')?;
    loop {
        if p.peek() == Some(b'}') {
            break;
        }
        let key_at = p.offset();
        let key = p.string()?;
        p.expect(b':')?;
        let value_at = {
            p.skip_ws();
            p.offset()
        };
        match key.as_str() {
            "descr" => {
                let d = p.string()?;
                descr = Some(
                    Dtype::parse(&d)
                        .ok_or_else(|| parse_err(value_at, format!("unsupported dtype '{d}'")))?,
                );
            }
            "fortran_order" => fortran = Some(p.boolean()?),
            "shape" => shape = Some(p.shape()?),
            other => {
                return Err(parse_err(
                    key_at,
                    format!("unexpected header key '{other}'"),
                ))
            }
        }
        match p.peek() {
            Some(b',') => p.pos += 1,
            Some(b'}') => {}
            _ => return Err(parse_err(p.offset(), "expected ',' or '}' in header")),
        }
    }
    let end = p.offset();
    match (descr, fortran, shape) {
        (Some(_), Some(true), _) => Err(parse_err(base, "fortran-order arrays are not supported")),
        (Some(dtype), Some(false), Some(shape)) => Ok(Header { dtype, shape }),
        _ => Err(parse_err(
            end,
            "header is missing descr, fortran_order or shape",
        )),
    }
}

pub fn decode(bytes: &[u8]) -> Result<NpyArray> {
    if bytes.len() < 8 || &bytes[..6] != MAGIC {
        return Err(parse_err(0, "missing NPY magic string"));
    }
    let (len_bytes, dict_start) = match bytes[6] {
        1 => (2, 10),
        2 | 3 => (4, 12),
        v => return Err(parse_err(6, format!("unsupported NPY version {v}"))),
    };
    if bytes.len() < dict_start {
        return Err(parse_err(bytes.len(), "truncated header length"));
    }
    let header_len = if len_bytes == 2 {
        u16::from_le_bytes([bytes[8], bytes[9]]) as usize
    } else {
        u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize
    };
    let data_offset = dict_start + header_len;
    if bytes.len() < data_offset {
        return Err(parse_err(
            bytes.len(),
            format!("header claims {header_len} bytes but file ends early"),
        ));
    }
    let header = parse_dict(&bytes[dict_start..data_offset], dict_start)?;
    let count = header
        .shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| parse_err(dict_start, "shape overflows"))?;
    let expected = count * header.dtype.width();
    let payload = &bytes[data_offset..];
    if payload.len() != expected {
        return Err(parse_err(
            data_offset,
            format!(
                "payload has {} bytes, shape {:?} needs {expected}",
                payload.len(),
                header.shape
            ),
        ));
    }
    Ok(NpyArray {
        dtype: header.dtype,
        shape: header.shape,
        data: payload.to_vec(),
        data_offset,
    })
}
