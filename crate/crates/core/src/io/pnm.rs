//! Binary PGM (P5) and PPM (P6) rasters.
//!
//! Depth values live in [−1, 1] and are stored as 16-bit gray samples with
//! the affine map `round((v+1)/2 · 65535)` (round half away from zero),
//! giving a 2/65535 round-trip bound. Pseudo-image channels use the same
//! map at 8 bits, `round((v+1) · 127.5)`, which inverts the codec's
//! `c/127.5 − 1` palette mapping exactly on palette colors. Samples are
//! big-endian per the format; headers are written in one canonical form and
//! parsed leniently (whitespace and `#` comments).

use std::path::Path;

use crate::error::{CoreError, Result};

/// Maps a normalized value in [−1, 1] to a 16-bit sample.
pub fn quantize_unit(v: f64) -> u16 {
    ((v.clamp(-1.0, 1.0) + 1.0) / 2.0 * 65535.0).round() as u16
}

/// Inverse of [`quantize_unit`] up to the quantization step.
pub fn dequantize_unit(q: u16) -> f64 {
    q as f64 / 65535.0 * 2.0 - 1.0
}

/// Maps a normalized channel in [−1, 1] to an 8-bit sample.
pub fn quantize_channel(v: f64) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

/// Inverse of [`quantize_channel`] up to the quantization step.
pub fn dequantize_channel(c: u8) -> f64 {
    c as f64 / 127.5 - 1.0
}

fn malformed(path: &Path, format: &'static str, offset: usize, message: String) -> CoreError {
    CoreError::MalformedFile {
        path: path.display().to_string(),
        format,
        offset,
        message,
    }
}

/// Pulls the next whitespace-delimited unsigned integer out of a PNM header,
/// skipping `#` comments; returns the value and the offset just past it.
fn next_header_int(
    bytes: &[u8],
    mut pos: usize,
    path: &Path,
    format: &'static str,
    what: &str,
) -> Result<(usize, usize)> {
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
    while pos < bytes.len() && bytes[pos].is_ascii_digit() {
        pos += 1;
    }
    if pos == start {
        return Err(malformed(
            path,
            format,
            start,
            format!("expected {what}, found {}", describe_byte(bytes.get(start))),
        ));
    }
    let text = std::str::from_utf8(&bytes[start..pos]).expect("digits are ascii");
    let value: usize = text
        .parse()
        .map_err(|_| malformed(path, format, start, format!("{what} out of range: {text}")))?;
    Ok((value, pos))
}

fn describe_byte(b: Option<&u8>) -> String {
    match b {
        Some(&b) if b.is_ascii_graphic() => format!("{:?}", b as char),
        Some(&b) => format!("byte 0x{b:02x}"),
        None => "end of file".into(),
    }
}

struct PnmHeader {
    width: usize,
    height: usize,
    maxval: usize,
    data_start: usize,
}

fn parse_header(
    bytes: &[u8],
    path: &Path,
    format: &'static str,
    magic: &[u8; 2],
) -> Result<PnmHeader> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(malformed(
            path,
            format,
            0,
            format!(
                "bad magic: expected {:?}, found {}",
                std::str::from_utf8(magic).unwrap(),
                describe_byte(bytes.first())
            ),
        ));
    }
    let (width, pos) = next_header_int(bytes, 2, path, format, "width")?;
    let (height, pos) = next_header_int(bytes, pos, path, format, "height")?;
    let (maxval, pos) = next_header_int(bytes, pos, path, format, "maxval")?;
    if width == 0 || height == 0 {
        return Err(malformed(
            path,
            format,
            2,
            format!("dimensions must be positive, got {width}x{height}"),
        ));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(malformed(
            path,
            format,
            pos,
            "expected single whitespace before raster data".into(),
        ));
    }
    Ok(PnmHeader {
        width,
        height,
        maxval,
        data_start: pos + 1,
    })
}

/// Writes a 16-bit binary PGM (P5, maxval 65535, big-endian samples).
pub fn write_pgm16(path: &Path, width: usize, height: usize, samples: &[u16]) -> Result<()> {
    if samples.len() != width * height {
        return Err(CoreError::ShapeMismatch {
            context: "write_pgm16",
            expected: format!("{} samples ({width}x{height})", width * height),
            actual: format!("{}", samples.len()),
        });
    }
    let mut bytes = format!("P5\n{width} {height}\n65535\n").into_bytes();
    bytes.reserve(2 * samples.len());
    for &s in samples {
        bytes.extend_from_slice(&s.to_be_bytes());
    }
    super::write_bytes(path, &bytes)
}

/// Reads a 16-bit binary PGM written by [`write_pgm16`] (or any P5 file with
/// maxval 65535).
pub fn read_pgm16(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let bytes = super::read_bytes(path)?;
    let header = parse_header(&bytes, path, "PGM", b"P5")?;
    if header.maxval != 65535 {
        return Err(malformed(
            path,
            "PGM",
            2,
            format!("expected maxval 65535, got {}", header.maxval),
        ));
    }
    let n = header.width * header.height;
    let raster = &bytes[header.data_start..];
    if raster.len() != 2 * n {
        return Err(malformed(
            path,
            "PGM",
            header.data_start,
            format!("expected {} raster bytes, found {}", 2 * n, raster.len()),
        ));
    }
    let samples = raster
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok((header.width, header.height, samples))
}

/// Writes an 8-bit binary PPM (P6, maxval 255, RGB interleaved).
pub fn write_ppm8(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    if rgb.len() != 3 * width * height {
        return Err(CoreError::ShapeMismatch {
            context: "write_ppm8",
            expected: format!("{} bytes (3x{width}x{height})", 3 * width * height),
            actual: format!("{}", rgb.len()),
        });
    }
    let mut bytes = format!("P6\n{width} {height}\n255\n").into_bytes();
    bytes.extend_from_slice(rgb);
    super::write_bytes(path, &bytes)
}

/// Reads an 8-bit binary PPM written by [`write_ppm8`] (or any P6 file with
/// maxval 255).
pub fn read_ppm8(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = super::read_bytes(path)?;
    let header = parse_header(&bytes, path, "PPM", b"P6")?;
    if header.maxval != 255 {
        return Err(malformed(
            path,
            "PPM",
            2,
            format!("expected maxval 255, got {}", header.maxval),
        ));
    }
    let n = 3 * header.width * header.height;
    let raster = &bytes[header.data_start..];
    if raster.len() != n {
        return Err(malformed(
            path,
            "PPM",
            header.data_start,
            format!("expected {n} raster bytes, found {}", raster.len()),
        ));
    }
    Ok((header.width, header.height, raster.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("cooper-pnm-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn unit_quantization_round_trips_within_one_step() {
        for i in 0..=1000 {
            let v = -1.0 + 2.0 * i as f64 / 1000.0;
            let back = dequantize_unit(quantize_unit(v));
            assert!((back - v).abs() <= 1.0 / 65535.0, "v {v} back {back}");
        }
        assert_eq!(quantize_unit(-1.0), 0);
        assert_eq!(quantize_unit(1.0), 65535);
        assert_eq!(quantize_unit(0.0), 32768); // 32767.5 rounds away from zero
        assert_eq!(quantize_unit(-2.0), 0); // clamped
        assert_eq!(quantize_unit(2.0), 65535);
    }

    #[test]
    fn channel_quantization_inverts_palette_byte_mapping_exactly() {
        for c in 0..=255u8 {
            let v = dequantize_channel(c);
            assert_eq!(quantize_channel(v), c);
        }
    }

    #[test]
    fn pgm_round_trips_bytes_exactly() {
        let path = tmp("roundtrip.pgm");
        let samples: Vec<u16> = (0..12).map(|i| (i * 5461) as u16).collect();
        write_pgm16(&path, 4, 3, &samples).unwrap();
        let (w, h, back) = read_pgm16(&path).unwrap();
        assert_eq!((w, h), (4, 3));
        assert_eq!(back, samples);
        // Writing again produces identical bytes.
        let first = std::fs::read(&path).unwrap();
        write_pgm16(&path, 4, 3, &samples).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }

    #[test]
    fn ppm_round_trips_bytes_exactly() {
        let path = tmp("roundtrip.ppm");
        let rgb: Vec<u8> = (0..3 * 6).map(|i| (i * 41) as u8).collect();
        write_ppm8(&path, 3, 2, &rgb).unwrap();
        let (w, h, back) = read_ppm8(&path).unwrap();
        assert_eq!((w, h), (3, 2));
        assert_eq!(back, rgb);
    }

    #[test]
    fn header_comments_and_whitespace_are_tolerated() {
        let path = tmp("comments.pgm");
        let mut bytes = b"P5 # magic\n# a comment line\n 2\t1 # dims\n65535\n".to_vec();
        bytes.extend_from_slice(&[0x12, 0x34, 0xAB, 0xCD]);
        std::fs::write(&path, &bytes).unwrap();
        let (w, h, samples) = read_pgm16(&path).unwrap();
        assert_eq!((w, h), (2, 1));
        assert_eq!(samples, vec![0x1234, 0xABCD]);
    }

    #[test]
    fn malformed_files_name_the_byte_offset() {
        let path = tmp("bad-magic.pgm");
        std::fs::write(&path, b"P2\n1 1\n65535\n??").unwrap();
        match read_pgm16(&path).unwrap_err() {
            CoreError::MalformedFile {
                offset, message, ..
            } => {
                assert_eq!(offset, 0);
                assert!(message.contains("magic"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }

        let path = tmp("bad-width.pgm");
        std::fs::write(&path, b"P5\nxx 1\n65535\n").unwrap();
        match read_pgm16(&path).unwrap_err() {
            CoreError::MalformedFile {
                offset, message, ..
            } => {
                assert_eq!(offset, 3);
                assert!(message.contains("width"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }

        let path = tmp("truncated.pgm");
        std::fs::write(&path, b"P5\n2 2\n65535\n\x00\x01").unwrap();
        match read_pgm16(&path).unwrap_err() {
            CoreError::MalformedFile {
                offset, message, ..
            } => {
                assert_eq!(offset, 13);
                assert!(message.contains("raster"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }

        let path = tmp("wrong-maxval.pgm");
        std::fs::write(&path, b"P5\n1 1\n255\n\x00").unwrap();
        assert!(read_pgm16(&path).is_err());

        assert!(read_pgm16(&tmp("does-not-exist.pgm")).is_err());
    }

    #[test]
    fn size_mismatches_are_rejected_at_write_time() {
        assert!(write_pgm16(&tmp("short.pgm"), 2, 2, &[0u16; 3]).is_err());
        assert!(write_ppm8(&tmp("short.ppm"), 2, 2, &[0u8; 11]).is_err());
    }
}
