//! Binary PGM (P5, 8-bit) reading and writing.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub fn encode_pgm(width: usize, height: usize, data: &[u8]) -> Vec<u8> {
    assert_eq!(data.len(), width * height, "pgm payload size");
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(data);
    out
}

/// Parses a P5 file with maxval <= 255. Returns `(width, height, pixels)`.
pub fn decode_pgm(bytes: &[u8]) -> std::result::Result<(usize, usize, Vec<u8>), String> {
    let mut pos = 0usize;
    let mut fields = [0usize; 3];

    let magic = bytes.get(..2).ok_or("truncated header")?;
    if magic != b"P5" {
        return Err(format!("bad magic {:?}", String::from_utf8_lossy(magic)));
    }
    pos += 2;

    for field in fields.iter_mut() {
        // whitespace and '#' comments may separate header fields
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while let Some(&c) = bytes.get(pos) {
                        pos += 1;
                        if c == b'\n' {
                            break;
                        }
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err("truncated header".into()),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|c| c.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err("expected a decimal header field".into());
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|e| format!("header field: {e}"))?;
    }
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(format!("unsupported maxval {maxval}"));
    }
    match bytes.get(pos) {
        Some(c) if c.is_ascii_whitespace() => pos += 1,
        _ => return Err("missing whitespace after maxval".into()),
    }
    let payload = &bytes[pos..];
    if payload.len() != width * height {
        return Err(format!(
            "expected {} pixel bytes, found {}",
            width * height,
            payload.len()
        ));
    }
    Ok((width, height, payload.to_vec()))
}

pub fn save_pgm(path: &Path, width: usize, height: usize, data: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_pgm(width, height, data))
        .map_err(|e| Error::io(path, e))
}

pub fn load_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes).map_err(|reason| Error::format(path, reason))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let bytes = encode_pgm(2, 1, &[0, 255]);
        assert_eq!(&bytes[..], b"P5\n2 1\n255\n\x00\xff");
    }

    #[test]
    fn decode_with_comments() {
        let bytes = b"P5 # comment\n3\n# another\n 2 255\n\x01\x02\x03\x04\x05\x06";
        let (w, h, px) = decode_pgm(bytes).unwrap();
        assert_eq!((w, h), (3, 2));
        assert_eq!(px, vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn decode_errors() {
        assert!(decode_pgm(b"P6\n1 1\n255\n\x00").is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\x00").is_err());
        assert!(decode_pgm(b"P5\n1 1\n65535\n\x00\x00").is_err());
        assert!(decode_pgm(b"P5\n1").is_err());
    }
}
