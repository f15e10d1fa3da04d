//! Portable float maps: `Pf` (one channel) or `PF` (three), a `W H` line,
//! a scale line whose sign encodes endianness (negative = little-endian),
//! then rows bottom to top as 32-bit floats.

use std::fs;
use std::io::{BufRead, Read, Write};
use std::path::Path;

use super::FactoryError;
use crate::image::Image;

/// Encodes `map` (1 or 3 channels) little-endian.
pub fn encode_pfm(map: &Image<f32>) -> Result<Vec<u8>, FactoryError> {
    let tag = match map.channels() {
        1 => "Pf",
        3 => "PF",
        c => return Err(FactoryError::Format(format!("PFM supports 1 or 3 channels, got {c}"))),
    };
    if !map.is_finite() {
        return Err(FactoryError::Format("PFM payload must be finite".into()));
    }
    let (w, h, ch) = (map.width(), map.height(), map.channels());
    let mut out = format!("{tag}\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * ch * 4);
    for y in (0..h).rev() {
        for x in 0..w {
            for &v in map.pixel(x, y) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn write_pfm(map: &Image<f32>, path: &Path) -> Result<(), FactoryError> {
    let bytes = encode_pfm(map)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

fn header_line<R: BufRead>(r: &mut R) -> Result<String, FactoryError> {
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(FactoryError::Format("truncated PFM header".into()));
    }
    line.pop();
    String::from_utf8(line)
        .map(|s| s.trim().to_owned())
        .map_err(|_| FactoryError::Format("PFM header is not text".into()))
}

/// Decodes either byte order.
pub fn decode_pfm(bytes: &[u8]) -> Result<Image<f32>, FactoryError> {
    let mut r = bytes;
    let ch = match header_line(&mut r)?.as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(FactoryError::Format(format!("bad PFM magic {other:?}"))),
    };
    let dims = header_line(&mut r)?;
    let mut it = dims.split_whitespace().map(str::parse::<usize>);
    let (w, h) = match (it.next(), it.next(), it.next()) {
        (Some(Ok(w)), Some(Ok(h)), None) if w > 0 && h > 0 => (w, h),
        _ => return Err(FactoryError::Format(format!("bad PFM dimensions {dims:?}"))),
    };
    let scale: f32 = header_line(&mut r)?
        .parse()
        .map_err(|_| FactoryError::Format("bad PFM scale".into()))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(FactoryError::Format("PFM scale must be non-zero".into()));
    }
    let little = scale < 0.0;
    let n = w * h * ch;
    let mut payload = vec![0u8; n * 4];
    r.read_exact(&mut payload)
        .map_err(|_| FactoryError::Format("truncated PFM payload".into()))?;
    let mut img = Image::zeros(w, h, ch);
    for (k, chunk) in payload.chunks_exact(4).enumerate() {
        let b: [u8; 4] = chunk.try_into().expect("chunk of 4");
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (row, rem) = (k / (w * ch), k % (w * ch));
        img.set(rem / ch, h - 1 - row, rem % ch, v);
    }
    Ok(img)
}

pub fn read_pfm(path: &Path) -> Result<Image<f32>, FactoryError> {
    decode_pfm(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_pixel_bytes() {
        let bytes = encode_pfm(&Image::filled(1, 1, 1, 3.5f32)).unwrap();
        let mut expect = b"Pf\n1 1\n-1.0\n".to_vec();
        expect.extend_from_slice(&3.5f32.to_le_bytes());
        assert_eq!(bytes, expect);
    }

    #[test]
    fn rows_stored_bottom_up() {
        let img = Image::from_vec(1, 2, 1, vec![1.0f32, 2.0]);
        let bytes = encode_pfm(&img).unwrap();
        let body = &bytes[bytes.len() - 8..];
        assert_eq!(&body[..4], &2.0f32.to_le_bytes());
    }

    #[test]
    fn big_endian_input_is_swapped() {
        let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&1.25f32.to_be_bytes());
        bytes.extend_from_slice(&(-7.0f32).to_be_bytes());
        let img = decode_pfm(&bytes).unwrap();
        assert_eq!(img.as_slice(), &[1.25, -7.0]);
    }

    #[test]
    fn malformed_headers_rejected() {
        for bad in [&b"P5\n1 1\n-1.0\n"[..], b"Pf\n1\n-1.0\n", b"Pf\n1 1\nx\n", b"Pf\n1 1\n-1.0\n\0\0"] {
            assert!(matches!(decode_pfm(bad), Err(FactoryError::Format(_))));
        }
    }

    #[test]
    fn non_finite_rejected() {
        assert!(encode_pfm(&Image::filled(2, 2, 1, f32::NAN)).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_bit_exact(w in 1usize..12, h in 1usize..12, three in any::<bool>(), seed in any::<u64>()) {
            let ch = if three { 3 } else { 1 };
            let mut s = seed;
            let img = Image::from_fn(w, h, ch, |_, _, _| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                f32::from_bits((s >> 33) as u32 & 0x7f7f_ffff) * if s & 1 == 0 { 1.0 } else { -1.0 }
            });
            let back = decode_pfm(&encode_pfm(&img).unwrap()).unwrap();
            let a: Vec<u32> = img.as_slice().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = back.as_slice().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
