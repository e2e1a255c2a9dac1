//! File-level round trips through the modality codecs.
//!
//! Depth travels as 16-bit PGM: raw integer depths in, percentile-normalized
//! values stored as `round((v + 1)/2 · 65535)`, normalized depths in `[0, 1]`
//! back out under the same rule. Segmentation travels as a label-mask JSON
//! and an 8-bit palette PPM whose quantizer exactly inverts the palette
//! normalization, so its round trip is lossless.

use std::path::Path;

use serde::{Deserialize, Serialize};

use cooper_core::codec::{
    compute_percentiles, depth_to_pseudo, make_palette, pseudo_to_depth, pseudo_to_seg,
    seg_to_pseudo, DepthMap, PseudoImage, SegMask,
};
use cooper_core::config::RunConfig;
use cooper_core::io::{
    dequantize_channel, dequantize_unit, quantize_channel, quantize_unit, read_json, read_pgm16,
    read_ppm8, write_json, write_pgm16, write_ppm8,
};
use cooper_core::Result;

/// Label mask as stored on disk.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskFile {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
}

/// Raw 16-bit depth PGM -> normalized pseudo-image PGM.
pub fn encode_depth(input: &Path, output: &Path) -> Result<()> {
    let (width, height, samples) = read_pgm16(input)?;
    let depth = DepthMap::new(
        width,
        height,
        samples.iter().map(|&s| f64::from(s)).collect(),
        None,
    )?;
    let stats = compute_percentiles(&depth);
    let (img, degenerate) = depth_to_pseudo(&depth, &stats)?;
    if degenerate {
        log::warn!(
            "{}: depth has no spread; encoding a flat image",
            input.display()
        );
    }
    // Depth pseudo-images replicate one value across the channels, so a
    // single-channel raster carries the whole image.
    let quantized: Vec<u16> = (0..width * height)
        .map(|i| quantize_unit(img.pixel(i)[0]))
        .collect();
    write_pgm16(output, width, height, &quantized)?;
    println!("wrote {}", output.display());
    Ok(())
}

/// Normalized pseudo-image PGM -> normalized depth PGM with values in [0, 1].
pub fn decode_depth(input: &Path, output: &Path) -> Result<()> {
    let (width, height, samples) = read_pgm16(input)?;
    let data: Vec<f64> = samples
        .iter()
        .flat_map(|&s| {
            let v = dequantize_unit(s);
            [v, v, v]
        })
        .collect();
    let img = PseudoImage::new(width, height, data)?;
    let norm = pseudo_to_depth(&img);
    // d in [0, 1] maps to 2d - 1 in [-1, 1], so the shared quantizer stores
    // it as round(d * 65535).
    let quantized: Vec<u16> = norm
        .values
        .iter()
        .map(|&d| quantize_unit(2.0 * d - 1.0))
        .collect();
    write_pgm16(output, width, height, &quantized)?;
    println!("wrote {}", output.display());
    Ok(())
}

/// Label mask JSON -> palette pseudo-image PPM.
pub fn encode_seg(cfg: &RunConfig, input: &Path, output: &Path) -> Result<()> {
    let mask_file: MaskFile = read_json(input)?;
    let mask = SegMask::new(mask_file.width, mask_file.height, mask_file.labels)?;
    let palette = make_palette(cfg.palette_size)?;
    let img = seg_to_pseudo(&mask, &palette)?;
    let rgb: Vec<u8> = img.data().iter().map(|&v| quantize_channel(v)).collect();
    write_ppm8(output, mask.width(), mask.height(), &rgb)?;
    println!("wrote {}", output.display());
    Ok(())
}

/// Palette pseudo-image PPM -> label mask JSON via nearest-color decode.
pub fn decode_seg(cfg: &RunConfig, input: &Path, output: &Path) -> Result<()> {
    let (width, height, rgb) = read_ppm8(input)?;
    let data: Vec<f64> = rgb.iter().map(|&c| dequantize_channel(c)).collect();
    let img = PseudoImage::new(width, height, data)?;
    let palette = make_palette(cfg.palette_size)?;
    let mask = pseudo_to_seg(&img, &palette);
    write_json(
        output,
        &MaskFile {
            width: mask.width(),
            height: mask.height(),
            labels: mask.labels().to_vec(),
        },
    )?;
    println!("wrote {}", output.display());
    Ok(())
}
