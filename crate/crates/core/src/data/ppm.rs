//! Binary portable pixmap (`P6`, max value 255) reading and writing.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array3;

use crate::error::{Error, Result};
use crate::image::Image;

/// Encodes an image as `P6`. Values are rounded and clamped to `0..=255`;
/// grayscale images are written with the channel replicated.
pub fn encode_ppm(image: &Image) -> Vec<u8> {
    let (h, w, c) = image.dims();
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(h * w * 3);
    let px = image.pixels();
    for r in 0..h {
        for col in 0..w {
            for ch in 0..3 {
                let v = px[[r, col, if c == 1 { 0 } else { ch }]];
                out.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    out
}

pub fn write_ppm(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&encode_ppm(image))
        .map_err(|e| Error::io(path, e))
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes).map_err(|message| Error::Format {
        path: path.to_path_buf(),
        message,
    })
}

/// Decodes a `P6` byte stream into a three-channel image.
pub fn decode_ppm(bytes: &[u8]) -> Result<Image, String> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos).ok_or("missing magic number")?;
    if magic != b"P6" {
        return Err(format!(
            "unsupported variant {:?}; only binary P6 is accepted",
            String::from_utf8_lossy(magic)
        ));
    }
    let mut header = [0usize; 3];
    for (slot, name) in header.iter_mut().zip(["width", "height", "max value"]) {
        let tok = next_token(bytes, &mut pos).ok_or_else(|| format!("missing {name}"))?;
        *slot = std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("malformed {name}"))?;
    }
    let [w, h, max] = header;
    if max != 255 {
        return Err(format!("unsupported max value {max}; expected 255"));
    }
    if w == 0 || h == 0 {
        return Err("zero image dimension".into());
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err("missing raster".into());
    }
    pos += 1;
    let raster = &bytes[pos..];
    let expected = w * h * 3;
    if raster.len() < expected {
        return Err(format!(
            "truncated raster: expected {expected} bytes, found {}",
            raster.len()
        ));
    }
    let data = raster[..expected].iter().map(|&b| b as f64).collect();
    let px = Array3::from_shape_vec((h, w, 3), data).map_err(|e| e.to_string())?;
    Image::new(px).map_err(|e| e.to_string())
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| &bytes[start..*pos])
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;

    #[test]
    fn black_pixel_bytes() {
        let img = Image::from_gray(Array2::zeros((1, 1)));
        assert_eq!(encode_ppm(&img), b"P6\n1 1\n255\n\0\0\0".to_vec());
    }

    #[test]
    fn rejects_p5() {
        let err = decode_ppm(b"P5\n1 1\n255\n\0").unwrap_err();
        assert!(err.contains("unsupported variant"), "{err}");
    }

    #[test]
    fn rejects_truncated_and_bad_max() {
        assert!(decode_ppm(b"P6\n2 1\n255\n\0\0\0").is_err());
        assert!(decode_ppm(b"P6\n1 1\n65535\n\0\0\0\0\0\0").is_err());
        assert!(decode_ppm(b"P6\n1\n").is_err());
    }

    #[test]
    fn header_comments_are_skipped() {
        let img = decode_ppm(b"P6\n# made by hand\n1 1\n255\n\x01\x02\x03").unwrap();
        assert_eq!(img.pixels().as_slice().unwrap(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn grayscale_replicates_channels() {
        let img = Image::from_gray(ndarray::array![[7.0, 200.0]]);
        let back = decode_ppm(&encode_ppm(&img)).unwrap();
        assert_eq!(back.channels(), 3);
        assert_eq!(back.to_gray(), img.to_gray());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ppm");
        let px = Array3::from_shape_fn((3, 4, 3), |(r, c, ch)| ((r * 31 + c * 7 + ch * 101) % 256) as f64);
        let img = Image::new(px).unwrap();
        write_ppm(&img, &path).unwrap();
        assert_eq!(read_ppm(&path).unwrap(), img);
        assert!(matches!(read_ppm(dir.path().join("missing.ppm")), Err(Error::Io { .. })));
    }

    proptest! {
        #[test]
        fn integer_images_round_trip(h in 1usize..6, w in 1usize..6, seed in any::<u64>()) {
            let px = Array3::from_shape_fn((h, w, 3), |(r, c, ch)| {
                (seed.wrapping_mul(6364136223846793005).wrapping_add((r * 131 + c * 17 + ch) as u64) >> 56) as f64
            });
            let img = Image::new(px).unwrap();
            prop_assert_eq!(decode_ppm(&encode_ppm(&img)).unwrap(), img);
        }
    }
}
