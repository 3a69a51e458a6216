//! 8-bit grayscale image files: binary PGM (P5) read/write, PNG read.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::Image;
use crate::error::{Error, Result};

const PNG_SIGNATURE: &[u8] = &[0x89, b'P', b'N', b'G', b'\r', b'\n', 0x1a, b'\n'];

/// Loads a P5 PGM or an 8-bit grayscale PNG. Intensities are the raw byte
/// values, not rescaled.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    if bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(bytes)
    } else if bytes.starts_with(b"P2") {
        Err(Error::Unsupported("ASCII PGM (P2) is not supported, use P5".into()))
    } else {
        Err(Error::format("image", "neither a P5 PGM nor a PNG file"))
    }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn number(&mut self, field: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format("PGM header", format!("missing {field}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format("PGM header", format!("bad {field}")))
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if maxval == 0 {
        return Err(Error::format("PGM header", "maxval must be positive"));
    }
    if maxval > 255 {
        return Err(Error::Unsupported(format!(
            "PGM maxval {maxval} implies 16-bit samples; only 8-bit is supported"
        )));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(Error::format("PGM header", "truncated header")),
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::format("PGM header", "dimensions overflow"))?;
    let raster = &bytes[cur.pos..];
    if raster.len() < n {
        return Err(Error::format(
            "PGM raster",
            format!("expected {n} bytes, found {}", raster.len()),
        ));
    }
    Image::new(width, height, raster[..n].iter().map(|&b| b as f64).collect())
}

fn decode_png(bytes: &[u8]) -> Result<Image> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(|e| Error::format("PNG", e.to_string()))?;
    let info = reader.info();
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Unsupported(format!(
            "PNG bit depth {:?}; only 8-bit is supported",
            info.bit_depth
        )));
    }
    if info.color_type != png::ColorType::Grayscale {
        return Err(Error::Unsupported(format!(
            "PNG color type {:?}; only grayscale is supported",
            info.color_type
        )));
    }
    let (width, height) = (info.width as usize, info.height as usize);
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(width * height)];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format("PNG", e.to_string()))?;
    let stride = frame.line_size;
    let mut data = Vec::with_capacity(width * height);
    for y in 0..height {
        data.extend(buf[y * stride..y * stride + width].iter().map(|&b| b as f64));
    }
    Image::new(width, height, data)
}

/// Rounds (half to even), clamps to `[0, 255]` and writes a P5 PGM.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_pgm(img);
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_pgm(img: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| to_byte(v)));
    out
}

#[inline]
fn to_byte(v: f64) -> u8 {
    v.round_ties_even().clamp(0.0, 255.0) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_tiny_p5() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend([0u8, 128, 255, 64]);
        let img = decode_image(&bytes).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert_eq!(img.data(), &[0.0, 128.0, 255.0, 64.0]);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5 # made by hand\n2 1 255\n".to_vec();
        bytes.extend([7u8, 9]);
        assert_eq!(decode_image(&bytes).unwrap().data(), &[7.0, 9.0]);
    }

    #[test]
    fn truncated_header_is_a_format_error() {
        for bad in [&b"P5\n2 2"[..], b"P5\n2", b"P5 2 2 255", b"P5\n2 2\n255\n\x01"] {
            let err = decode_image(bad).unwrap_err();
            assert!(matches!(err, Error::Format { .. }), "{err:?}");
        }
    }

    #[test]
    fn sixteen_bit_pgm_is_unsupported() {
        let mut bytes = b"P5\n1 1\n65535\n".to_vec();
        bytes.extend([0u8, 1]);
        assert!(matches!(decode_image(&bytes), Err(Error::Unsupported(_))));
    }

    #[test]
    fn save_rounds_and_clamps() {
        let img = Image::new(5, 1, vec![255.7, -3.0, 2.5, 3.5, 100.49]).unwrap();
        let bytes = encode_pgm(&img);
        assert_eq!(&bytes[bytes.len() - 5..], &[255, 0, 2, 4, 100]);
    }

    fn png_bytes(depth: png::BitDepth, color: png::ColorType, raw: &[u8], w: u32, h: u32) -> Vec<u8> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, w, h);
            enc.set_depth(depth);
            enc.set_color(color);
            let mut writer = enc.write_header().unwrap();
            writer.write_image_data(raw).unwrap();
        }
        out
    }

    #[test]
    fn reads_gray8_png() {
        let bytes = png_bytes(
            png::BitDepth::Eight,
            png::ColorType::Grayscale,
            &[1, 2, 3, 250, 251, 252],
            3,
            2,
        );
        let img = decode_image(&bytes).unwrap();
        assert_eq!((img.width(), img.height()), (3, 2));
        assert_eq!(img.data(), &[1., 2., 3., 250., 251., 252.]);
    }

    #[test]
    fn sixteen_bit_png_is_unsupported() {
        let bytes = png_bytes(png::BitDepth::Sixteen, png::ColorType::Grayscale, &[0, 1, 0, 2], 2, 1);
        assert!(matches!(decode_image(&bytes), Err(Error::Unsupported(_))));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_image("/definitely/not/here.pgm").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
