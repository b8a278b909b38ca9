use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::ScalarImage;

use super::{read_file, write_atomic};

/// Splits the next whitespace-delimited header token, skipping `#` comments.
fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' && bytes[*pos] != b'\r' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    (start < *pos).then(|| &bytes[start..*pos])
}

/// Decodes a binary (P5) PGM with maxval 255 or 65535.
///
/// The grid is `[height, width]`. Sixteen-bit samples are big-endian.
pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<ScalarImage> {
    let malformed = |reason: &str| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut pos = 0;
    match next_token(bytes, &mut pos) {
        Some(b"P5") => {}
        Some(b"P2") => return Err(malformed("ASCII PGM (P2) is not supported")),
        _ => return Err(malformed("expected magic P5")),
    }
    let mut number = |what: &str| -> Result<u32> {
        let tok = next_token(bytes, &mut pos).ok_or_else(|| malformed(&format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| malformed(&format!("bad {what}")))
    };
    let width = number("width")? as usize;
    let height = number("height")? as usize;
    let maxval = number("maxval")?;
    if width == 0 || height == 0 {
        return Err(malformed("zero image size"));
    }
    let sample_bytes = match maxval {
        255 => 1,
        65535 => 2,
        _ => {
            return Err(Error::UnsupportedMaxval {
                path: path.to_path_buf(),
                maxval,
            })
        }
    };
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::TruncatedPayload {
            path: path.to_path_buf(),
            expected: width * height * sample_bytes,
            actual: 0,
        });
    }
    pos += 1;
    let payload = &bytes[pos..];
    let expected = width * height * sample_bytes;
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            path: path.to_path_buf(),
            expected,
            actual: payload.len(),
        });
    }
    let values = if sample_bytes == 1 {
        payload[..expected].iter().map(|&b| f64::from(b)).collect()
    } else {
        payload[..expected]
            .chunks_exact(2)
            .map(|c| f64::from(u16::from_be_bytes([c[0], c[1]])))
            .collect()
    };
    ScalarImage::new(vec![height, width], values)
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<ScalarImage> {
    let path = path.as_ref();
    decode_pgm(&read_file(path)?, path)
}

/// Encodes a 2D image as P5. Values are rounded half away from zero and
/// clamped to `[0, maxval]`; maxval is 255 when every rounded value fits in a
/// byte and 65535 otherwise.
pub fn encode_pgm(img: &ScalarImage) -> Result<Vec<u8>> {
    if img.ndim() != 2 {
        return Err(Error::InvalidImage("PGM holds 2D images only".into()));
    }
    let (height, width) = (img.dims()[0], img.dims()[1]);
    let rounded: Vec<f64> = img.values().iter().map(|v| v.round()).collect();
    let maxval: u32 = if rounded.iter().all(|&v| v <= 255.0) {
        255
    } else {
        65535
    };
    let mut out = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    let clamp = |v: f64| v.clamp(0.0, f64::from(maxval));
    if maxval == 255 {
        out.extend(rounded.iter().map(|&v| clamp(v) as u8));
    } else {
        for &v in &rounded {
            out.extend((clamp(v) as u16).to_be_bytes());
        }
    }
    Ok(out)
}

pub fn write_pgm(img: &ScalarImage, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_pgm(img)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn decode(bytes: &[u8]) -> Result<ScalarImage> {
        decode_pgm(bytes, Path::new("test.pgm"))
    }

    #[test]
    fn decodes_small_payload_with_comments() {
        let mut bytes = b"P5\n# made by hand\n2 2 # size\n255\n".to_vec();
        bytes.extend([50, 200, 50, 50]);
        let img = decode(&bytes).unwrap();
        assert_eq!(img.dims(), &[2, 2]);
        assert_eq!(img.values(), &[50.0, 200.0, 50.0, 50.0]);
    }

    #[test]
    fn decodes_sixteen_bit_big_endian() {
        let mut bytes = b"P5 2 1 65535\n".to_vec();
        bytes.extend([0x01, 0x02, 0xff, 0xfe]);
        let img = decode(&bytes).unwrap();
        assert_eq!(img.values(), &[258.0, 65534.0]);
    }

    #[test]
    fn header_errors() {
        assert!(matches!(
            decode(b"P2\n2 2\n255\n0 0 0 0"),
            Err(Error::MalformedHeader { .. })
        ));
        assert!(matches!(decode(b"P6\n2 2\n255\n"), Err(Error::MalformedHeader { .. })));
        assert!(matches!(decode(b"P5\n2 x\n255\n"), Err(Error::MalformedHeader { .. })));
        assert!(matches!(
            decode(b"P5\n2 2\n100\n1234"),
            Err(Error::UnsupportedMaxval { maxval: 100, .. })
        ));
        assert!(matches!(
            decode(b"P5\n2 2\n255\n123"),
            Err(Error::TruncatedPayload {
                expected: 4,
                actual: 3,
                ..
            })
        ));
    }

    #[test]
    fn encode_rounds_and_clamps() {
        let img = ScalarImage::new(vec![1, 4], vec![-3.0, 2.5, 254.49, 10.2]).unwrap();
        let bytes = encode_pgm(&img).unwrap();
        assert!(bytes.starts_with(b"P5\n4 1\n255\n"));
        assert_eq!(&bytes[bytes.len() - 4..], &[0, 3, 254, 10]);
        let wide = ScalarImage::new(vec![1, 2], vec![300.0, 70000.0]).unwrap();
        let back = decode(&encode_pgm(&wide).unwrap()).unwrap();
        assert_eq!(back.values(), &[300.0, 65535.0]);
        let cube = ScalarImage::constant(vec![2, 2, 2], 1.0).unwrap();
        assert!(encode_pgm(&cube).is_err());
    }

    proptest! {
        #[test]
        fn integer_images_round_trip(
            h in 1usize..12, w in 1usize..12, wide in any::<bool>(),
            data in proptest::collection::vec(any::<u16>(), 144),
        ) {
            let values: Vec<f64> = data[..h * w]
                .iter()
                .map(|&v| if wide { f64::from(v) } else { f64::from(v % 256) })
                .collect();
            let img = ScalarImage::new(vec![h, w], values).unwrap();
            prop_assert_eq!(decode(&encode_pgm(&img).unwrap()).unwrap(), img);
        }
    }
}
