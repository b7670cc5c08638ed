// SPDX-License-Identifier: MIT OR Apache-2.0

//! Reading and writing the numpy `.npy` array format.
//!
//! Only little-endian `f4`/`f8` payloads in C order with rank 1 or 2 are
//! accepted. Files are always written as version 1.0 `<f8` with the header
//! laid out exactly as numpy lays it out, so a numpy-written `f8` file
//! survives a load/save cycle byte for byte.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 6] = *b"\x93NUMPY";
const ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn descr(self) -> &'static str {
        match self {
            Dtype::F32 => "<f4",
            Dtype::F64 => "<f8",
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

pub fn save_tensor(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    save_tensor_as(path, tensor, Dtype::F64)
}

/// Write with the given dtype. `F32` narrows and is lossy.
pub fn save_tensor_as(path: impl AsRef<Path>, tensor: &Tensor, dtype: Dtype) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(tensor, dtype)).map_err(|e| Error::io(path, e))
}

pub fn encode(tensor: &Tensor, dtype: Dtype) -> Vec<u8> {
    let shape = match tensor.shape() {
        [n] => format!("({n},)"),
        [r, c] => format!("({r}, {c})"),
        _ => unreachable!("tensors have rank 1 or 2"),
    };
    let mut dict = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {shape}, }}",
        dtype.descr()
    );
    // magic + version + u16 length + dict + newline
    let unpadded = MAGIC.len() + 2 + 2 + dict.len() + 1;
    dict.extend(std::iter::repeat_n(' ', (ALIGN - unpadded % ALIGN) % ALIGN));
    dict.push('\n');

    let mut out = Vec::with_capacity(10 + dict.len() + tensor.len() * dtype.size());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    match dtype {
        Dtype::F64 => tensor
            .data()
            .iter()
            .for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        Dtype::F32 => tensor
            .data()
            .iter()
            .for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
    }
    out
}

/// Parse a complete file image. `origin` names the file in errors.
pub fn decode(bytes: &[u8], origin: impl AsRef<Path>) -> Result<Tensor> {
    let origin = origin.as_ref();
    let (header, offset) = read_header(bytes, origin)?;
    let count: usize = header.shape.iter().product();
    let expected = count * header.dtype.size();
    let payload = &bytes[offset..];
    if payload.len() != expected {
        return Err(Error::PayloadSize {
            path: origin.to_path_buf(),
            expected,
            actual: payload.len(),
        });
    }
    let data: Vec<f64> = match header.dtype {
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect(),
    };
    if data.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("npy payload contains NaN"));
    }
    Tensor::new(header.shape, data)
}

/// Returns the header and the byte offset of the payload.
pub fn read_header(bytes: &[u8], origin: impl AsRef<Path>) -> Result<(Header, usize)> {
    let origin = origin.as_ref();
    let malformed = |reason: &str| Error::MalformedHeader {
        path: origin.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < 10 || bytes[..6] != MAGIC {
        return Err(malformed("missing NUMPY magic"));
    }
    let (len, start) = match bytes[6] {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 => {
            if bytes.len() < 12 {
                return Err(malformed("truncated header length"));
            }
            (
                u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
                12,
            )
        }
        v => return Err(malformed(&format!("unsupported format version {v}.{}", bytes[7]))),
    };
    let end = start + len;
    if bytes.len() < end {
        return Err(malformed("header length exceeds file size"));
    }
    let text = std::str::from_utf8(&bytes[start..end]).map_err(|_| malformed("header is not UTF-8"))?;
    let dict = parse_dict(text).map_err(|r| malformed(&r))?;

    let mut descr = None;
    let mut fortran = None;
    let mut shape = None;
    for (key, value) in dict {
        match (key.as_str(), value) {
            ("descr", Literal::Str(s)) => descr = Some(s),
            ("fortran_order", Literal::Bool(b)) => fortran = Some(b),
            ("shape", Literal::Tuple(t)) => shape = Some(t),
            ("descr" | "fortran_order" | "shape", _) => return Err(malformed(&format!("bad value for {key:?}"))),
            _ => {}
        }
    }
    let descr = descr.ok_or_else(|| malformed("missing 'descr'"))?;
    let fortran = fortran.ok_or_else(|| malformed("missing 'fortran_order'"))?;
    let shape = shape.ok_or_else(|| malformed("missing 'shape'"))?;
    let dtype = match descr.as_str() {
        "<f8" => Dtype::F64,
        "<f4" => Dtype::F32,
        _ => {
            return Err(Error::UnsupportedDtype {
                path: origin.to_path_buf(),
                descr,
            })
        }
    };
    if fortran {
        return Err(malformed("Fortran order is not supported"));
    }
    if shape.is_empty() || shape.len() > 2 {
        return Err(malformed(&format!("rank {} is not supported", shape.len())));
    }
    Ok((Header { dtype, shape }, end))
}

#[derive(Debug, Clone, PartialEq)]
enum Literal {
    Str(String),
    Bool(bool),
    Tuple(Vec<usize>),
}

/// Parse the Python dict literal numpy writes.
fn parse_dict(text: &str) -> std::result::Result<Vec<(String, Literal)>, String> {
    let mut p = Cursor {
        s: text.trim_end().as_bytes(),
        i: 0,
    };
    p.expect(b'{')?;
    let mut out = Vec::new();
    loop {
        p.skip_ws();
        if p.eat(b'}') {
            break;
        }
        let key = p.string()?;
        p.expect(b':')?;
        let value = p.literal()?;
        out.push((key, value));
        p.skip_ws();
        if !p.eat(b',') {
            p.expect(b'}')?;
            break;
        }
    }
    p.skip_ws();
    if p.i != p.s.len() {
        return Err("trailing characters after header dict".into());
    }
    Ok(out)
}

struct Cursor<'a> {
    s: &'a [u8],
    i: usize,
}

impl Cursor<'_> {
    fn skip_ws(&mut self) {
        while self.s.get(self.i).is_some_and(|c| c.is_ascii_whitespace()) {
            self.i += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.s.get(self.i) == Some(&c) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> std::result::Result<(), String> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(format!("expected {:?} at header byte {}", c as char, self.i))
        }
    }

    fn string(&mut self) -> std::result::Result<String, String> {
        self.skip_ws();
        let quote = match self.s.get(self.i) {
            Some(&q @ (b'\'' | b'"')) => q,
            _ => return Err(format!("expected string at header byte {}", self.i)),
        };
        let start = self.i + 1;
        let len = self.s[start..]
            .iter()
            .position(|&c| c == quote)
            .ok_or("unterminated string in header")?;
        self.i = start + len + 1;
        Ok(String::from_utf8_lossy(&self.s[start..start + len]).into_owned())
    }

    fn word(&mut self) -> &str {
        let start = self.i;
        while self.s.get(self.i).is_some_and(|c| c.is_ascii_alphanumeric()) {
            self.i += 1;
        }
        std::str::from_utf8(&self.s[start..self.i]).unwrap()
    }

    fn literal(&mut self) -> std::result::Result<Literal, String> {
        self.skip_ws();
        match self.s.get(self.i) {
            Some(b'\'' | b'"') => self.string().map(Literal::Str),
            Some(b'(') => {
                self.i += 1;
                let mut dims = Vec::new();
                loop {
                    if self.eat(b')') {
                        break;
                    }
                    self.skip_ws();
                    let w = self.word().to_string();
                    // numpy 1.x may write 2L on some platforms
                    let w = w.trim_end_matches('L');
                    dims.push(w.parse().map_err(|_| format!("bad dimension {w:?} in shape"))?);
                    if !self.eat(b',') {
                        self.expect(b')')?;
                        break;
                    }
                }
                Ok(Literal::Tuple(dims))
            }
            _ => match self.word() {
                "True" => Ok(Literal::Bool(true)),
                "False" => Ok(Literal::Bool(false)),
                w => Err(format!("unsupported header value {w:?}")),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeros_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.npy");
        save_tensor(&path, &Tensor::zeros(&[2, 3])).unwrap();
        let t = load_tensor(&path).unwrap();
        assert_eq!(t.shape(), &[2, 3]);
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn header_matches_numpy_layout() {
        let bytes = encode(&Tensor::zeros(&[2, 3]), Dtype::F64);
        // Produced by numpy.save(f, numpy.zeros((2, 3)))
        let expected_dict = "{'descr': '<f8', 'fortran_order': False, 'shape': (2, 3), }";
        let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        assert_eq!((10 + header_len) % 64, 0);
        assert_eq!(header_len, 118);
        let text = std::str::from_utf8(&bytes[10..10 + header_len]).unwrap();
        assert!(text.starts_with(expected_dict));
        assert!(text.ends_with(" \n"));
        let one_d = encode(&Tensor::new(vec![4], vec![0.0; 4]).unwrap(), Dtype::F64);
        assert!(std::str::from_utf8(&one_d[10..70]).unwrap().contains("'shape': (4,)"));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let bytes = encode(&Tensor::zeros(&[2, 3]), Dtype::F64);
        let err = decode(&bytes[..bytes.len() - 8], "t.npy").unwrap_err();
        assert!(matches!(
            err,
            Error::PayloadSize {
                expected: 48,
                actual: 40,
                ..
            }
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode(&long, "t.npy"), Err(Error::PayloadSize { .. })));
    }

    #[test]
    fn f32_widens_exactly() {
        let t = Tensor::matrix(1, 3, vec![0.1, -2.5, 3.0e10]).unwrap();
        let back = decode(&encode(&t, Dtype::F32), "f").unwrap();
        let widened: Vec<f64> = t.data().iter().map(|&v| f64::from(v as f32)).collect();
        assert_eq!(back.data(), widened.as_slice());
    }

    fn raw(dict: &str, payload_len: usize) -> Vec<u8> {
        let mut bytes = MAGIC.to_vec();
        bytes.extend_from_slice(&[1, 0]);
        bytes.extend_from_slice(&(dict.len() as u16 + 1).to_le_bytes());
        bytes.extend_from_slice(dict.as_bytes());
        bytes.push(b'\n');
        bytes.resize(bytes.len() + payload_len, 0);
        bytes
    }

    #[test]
    fn rejects_bad_headers() {
        let mut bad_magic = encode(&Tensor::zeros(&[1, 1]), Dtype::F64);
        bad_magic[1] = b'X';
        assert!(matches!(decode(&bad_magic, "m"), Err(Error::MalformedHeader { .. })));
        let cases = [
            "{'descr': '>f8', 'fortran_order': False, 'shape': (1, 1), }",
            "{'descr': '<i8', 'fortran_order': False, 'shape': (1, 1), }",
        ];
        for dict in cases {
            assert!(
                matches!(decode(&raw(dict, 8), "b"), Err(Error::UnsupportedDtype { .. })),
                "{dict}"
            );
        }
        let cases = [
            "{'descr': '<f8', 'fortran_order': True, 'shape': (1, 1), }",
            "{'descr': '<f8', 'fortran_order': False, 'shape': (1, 1, 1), }",
            "{'descr': '<f8', 'fortran_order': False, 'shape': (), }",
            "{'descr': '<f8', 'shape': (1, 1), }",
            "{'descr': '<f8', 'fortran_order': False, 'shape': (1, 1), } junk",
            "{'descr': '<f8', 'fortran_order': maybe, 'shape': (1, 1), }",
            "{'descr': '<f8', 'fortran_order': False, 'shape': (1, x), }",
        ];
        for dict in cases {
            assert!(
                matches!(decode(&raw(dict, 8), "b"), Err(Error::MalformedHeader { .. })),
                "{dict}"
            );
        }
        assert!(decode(
            &raw("{'descr': '<f8', 'fortran_order': False, 'shape': (1, 1), }", 8),
            "ok"
        )
        .is_ok());
        let good = encode(&Tensor::zeros(&[1, 1]), Dtype::F64);
        assert!(matches!(decode(&good[..9], "b"), Err(Error::MalformedHeader { .. })));
        assert!(matches!(decode(&good[..40], "b"), Err(Error::MalformedHeader { .. })));
    }

    #[test]
    fn nan_payload_is_numerical_error() {
        let t = Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap();
        let mut bytes = encode(&t, Dtype::F64);
        let n = bytes.len();
        bytes[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
        let err = decode(&bytes, "nan").unwrap_err();
        assert_eq!(err.class(), crate::error::ErrorClass::Numerical);
    }

    #[test]
    fn parses_version_two_and_key_order() {
        let dict = "{'shape': (2,), 'fortran_order': False, 'descr': '<f8'}";
        let mut bytes = MAGIC.to_vec();
        bytes.extend_from_slice(&[2, 0]);
        bytes.extend_from_slice(&(dict.len() as u32 + 1).to_le_bytes());
        bytes.extend_from_slice(dict.as_bytes());
        bytes.push(b'\n');
        bytes.extend_from_slice(&1.5f64.to_le_bytes());
        bytes.extend_from_slice(&(-0.0f64).to_le_bytes());
        let t = decode(&bytes, "v2").unwrap();
        assert_eq!(t.shape(), &[2]);
        assert_eq!(t.data()[0], 1.5);
        assert!(t.data()[1].is_sign_negative());
    }
}
