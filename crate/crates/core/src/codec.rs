//! RGB pseudo-image codecs for the two auxiliary modalities.
//!
//! Depth maps are normalized with a robust percentile affine map
//! `x~ = ((x - x2) / (x98 - x2) - 0.5) * 2`, clamped to `[-1, 1]` and
//! replicated across the three channels; decoding takes the channel mean.
//! The map is invariant to positive affine transforms of the input, so the
//! codec never needs to know the depth unit.
//!
//! Segmentation masks index a deterministic golden-angle palette
//! (`hue = fract(k * 0.6180339887) * 360`, S = V = 1); encoding maps a
//! palette color `c` to `c / 127.5 - 1` per channel and decoding snaps each
//! pixel to the nearest palette color (squared RGB distance, lowest label on
//! ties), which makes the mask round trip exact and robust to channel noise
//! smaller than half the palette's minimum color separation.

use crate::error::{ensure_finite, CoreError, Result};

/// Conjugate golden ratio used for hue stepping.
pub const GOLDEN_RATIO_CONJUGATE: f64 = 0.6180339887;

/// Largest palette the golden-angle construction supports; beyond 1024 the
/// caller almost certainly wants a different color scheme anyway. Colors are
/// pairwise distinct for every size up to 990 (checked empirically; entry 991
/// first repeats entry 4 after integer rounding).
pub const MAX_PALETTE: usize = 1024;

/// A rectangular map of non-negative depth samples, optionally bounded by a
/// far plane.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
    far_plane: Option<f64>,
}

impl DepthMap {
    /// Builds a depth map; data is row-major and must be finite and
    /// non-negative (and `<= far_plane` when one is given).
    pub fn new(
        width: usize,
        height: usize,
        data: Vec<f64>,
        far_plane: Option<f64>,
    ) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(CoreError::ShapeMismatch {
                context: "DepthMap::new",
                expected: format!("{width}x{height} = {} samples", width * height),
                actual: data.len().to_string(),
            });
        }
        ensure_finite(&data, "DepthMap::new")?;
        let far = far_plane.unwrap_or(f64::INFINITY);
        if !(far > 0.0) {
            return Err(CoreError::InvalidArgument {
                context: "DepthMap::new",
                message: format!("far plane must be positive, got {far}"),
            });
        }
        if let Some(bad) = data.iter().find(|&&x| x < 0.0 || x > far) {
            return Err(CoreError::InvalidArgument {
                context: "DepthMap::new",
                message: format!("depth sample {bad} outside [0, {far}]"),
            });
        }
        Ok(Self {
            width,
            height,
            data,
            far_plane,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn far_plane(&self) -> Option<f64> {
        self.far_plane
    }
}

/// Robust normalization anchors: the 2nd and 98th percentile depth values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepthStats {
    pub p2: f64,
    pub p98: f64,
}

/// A three-channel image with every channel value in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoImage {
    width: usize,
    height: usize,
    /// Interleaved RGB, row-major: `data[3 * (y * width + x) + c]`.
    data: Vec<f64>,
}

impl PseudoImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != 3 * width * height {
            return Err(CoreError::ShapeMismatch {
                context: "PseudoImage::new",
                expected: format!("{width}x{height}x3 = {} values", 3 * width * height),
                actual: data.len().to_string(),
            });
        }
        ensure_finite(&data, "PseudoImage::new")?;
        if let Some(bad) = data.iter().find(|&&v| !(-1.0..=1.0).contains(&v)) {
            return Err(CoreError::InvalidArgument {
                context: "PseudoImage::new",
                message: format!("channel value {bad} outside [-1, 1]"),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, idx: usize) -> [f64; 3] {
        [
            self.data[3 * idx],
            self.data[3 * idx + 1],
            self.data[3 * idx + 2],
        ]
    }
}

/// Per-pixel depth in normalized `[-1, 1]` units (the codec's decode target;
/// raw units are unrecoverable by design).
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedDepth {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

/// A rectangular mask of segmentation labels.
#[derive(Clone, Debug, PartialEq)]
pub struct SegMask {
    width: usize,
    height: usize,
    labels: Vec<u32>,
}

impl SegMask {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if width == 0 || height == 0 || labels.len() != width * height {
            return Err(CoreError::ShapeMismatch {
                context: "SegMask::new",
                expected: format!("{width}x{height} = {} labels", width * height),
                actual: labels.len().to_string(),
            });
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }
}

/// An ordered list of distinct RGB colors; index = label.
#[derive(Clone, Debug, PartialEq)]
pub struct Palette {
    colors: Vec<[u8; 3]>,
}

impl Palette {
    /// Builds a palette from explicit colors, rejecting duplicates (a
    /// duplicate would make decoding ambiguous).
    pub fn from_colors(colors: Vec<[u8; 3]>) -> Result<Self> {
        if colors.is_empty() {
            return Err(CoreError::InvalidArgument {
                context: "Palette::from_colors",
                message: "palette must contain at least one color".into(),
            });
        }
        for i in 0..colors.len() {
            for j in 0..i {
                if colors[i] == colors[j] {
                    return Err(CoreError::InvalidArgument {
                        context: "Palette::from_colors",
                        message: format!("duplicate color {:?} at indices {j} and {i}", colors[i]),
                    });
                }
            }
        }
        Ok(Self { colors })
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    pub fn colors(&self) -> &[[u8; 3]] {
        &self.colors
    }

    pub fn color(&self, label: u32) -> Result<[u8; 3]> {
        self.colors
            .get(label as usize)
            .copied()
            .ok_or(CoreError::LabelOverflow {
                label,
                palette_len: self.colors.len(),
            })
    }

    /// Smallest pairwise squared RGB distance between palette entries.
    pub fn min_pairwise_sq_dist(&self) -> u32 {
        let mut min = u32::MAX;
        for i in 0..self.colors.len() {
            for j in 0..i {
                min = min.min(sq_dist_u8(self.colors[i], self.colors[j]));
            }
        }
        min
    }
}

fn sq_dist_u8(a: [u8; 3], b: [u8; 3]) -> u32 {
    let mut s = 0u32;
    for c in 0..3 {
        let d = a[c] as i32 - b[c] as i32;
        s += (d * d) as u32;
    }
    s
}

/// 2nd/98th percentile of the depth samples using linear interpolation on the
/// sorted values (`rank = p/100 * (n - 1)`).
pub fn compute_percentiles(depth: &DepthMap) -> DepthStats {
    let mut sorted = depth.data.clone();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    DepthStats {
        p2: interpolated_percentile(&sorted, 2.0),
        p98: interpolated_percentile(&sorted, 98.0),
    }
}

fn interpolated_percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = p / 100.0 * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    // Equal endpoints interpolate to themselves; skipping the arithmetic
    // keeps constant data exactly constant (0.98·x + 0.02·x can round).
    if lo == hi || sorted[lo] == sorted[hi] {
        sorted[lo]
    } else {
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

/// Encodes depth into a pseudo-image via the percentile affine map; all three
/// channels carry the same value.
///
/// Returns the image and a degenerate-range flag: when `p2 == p98` the map
/// is undefined, the output is all zeros, and the flag is set (also logged).
pub fn depth_to_pseudo(depth: &DepthMap, stats: &DepthStats) -> Result<(PseudoImage, bool)> {
    let n = depth.width * depth.height;
    let mut data = Vec::with_capacity(3 * n);
    let degenerate = stats.p2 == stats.p98;
    if degenerate {
        log::warn!(
            "depth_to_pseudo: degenerate percentile range (p2 == p98 == {}); emitting all-zero image",
            stats.p2
        );
        data.resize(3 * n, 0.0);
    } else {
        if !(stats.p98 > stats.p2) {
            return Err(CoreError::InvalidArgument {
                context: "depth_to_pseudo",
                message: format!(
                    "percentiles out of order: p2 {} > p98 {}",
                    stats.p2, stats.p98
                ),
            });
        }
        for &x in &depth.data {
            let v = (((x - stats.p2) / (stats.p98 - stats.p2)) - 0.5) * 2.0;
            let v = v.clamp(-1.0, 1.0);
            data.extend_from_slice(&[v, v, v]);
        }
    }
    Ok((
        PseudoImage::new(depth.width, depth.height, data)?,
        degenerate,
    ))
}

/// Decodes a pseudo-image back to normalized depth by averaging the channels.
pub fn pseudo_to_depth(img: &PseudoImage) -> NormalizedDepth {
    let n = img.width * img.height;
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let [r, g, b] = img.pixel(i);
        // Equal channels short-circuit so replicated-channel depth images
        // decode to exactly the encoded value (3v/3 can round in f64).
        let v = if r == g && g == b {
            r
        } else {
            (r + g + b) / 3.0
        };
        values.push(v);
    }
    NormalizedDepth {
        width: img.width,
        height: img.height,
        values,
    }
}

/// Deterministic golden-angle palette: entry `k` has hue
/// `fract(k * 0.6180339887) * 360` at full saturation and value, converted
/// with the standard HSV to RGB formula and rounded to integer channels.
pub fn make_palette(n: usize) -> Result<Palette> {
    if n == 0 || n > MAX_PALETTE {
        return Err(CoreError::InvalidArgument {
            context: "make_palette",
            message: format!("palette size must be in 1..={MAX_PALETTE}, got {n}"),
        });
    }
    let colors = (0..n)
        .map(|k| {
            let hue = (k as f64 * GOLDEN_RATIO_CONJUGATE).fract() * 360.0;
            hsv_to_rgb(hue, 1.0, 1.0)
        })
        .collect();
    Ok(Palette { colors })
}

/// Standard HSV to RGB with h in degrees, s and v in [0, 1]; channels are
/// rounded half away from zero to integers.
fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [
        ((r + m) * 255.0).round() as u8,
        ((g + m) * 255.0).round() as u8,
        ((b + m) * 255.0).round() as u8,
    ]
}

/// Encodes a mask into a pseudo-image: label k becomes palette color k with
/// each channel mapped by `c / 127.5 - 1`.
pub fn seg_to_pseudo(mask: &SegMask, palette: &Palette) -> Result<PseudoImage> {
    let mut data = Vec::with_capacity(3 * mask.labels.len());
    for &label in &mask.labels {
        let color = palette.color(label)?;
        for c in color {
            data.push(c as f64 / 127.5 - 1.0);
        }
    }
    PseudoImage::new(mask.width, mask.height, data)
}

/// Decodes a pseudo-image to a mask by snapping each pixel to the nearest
/// palette color (squared RGB distance; the lowest label wins ties).
pub fn pseudo_to_seg(img: &PseudoImage, palette: &Palette) -> SegMask {
    let n = img.width * img.height;
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let px = img.pixel(i).map(|v| (v + 1.0) * 127.5);
        let mut best = 0u32;
        let mut best_d = f64::INFINITY;
        for (k, color) in palette.colors.iter().enumerate() {
            let d: f64 = (0..3)
                .map(|c| {
                    let diff = px[c] - color[c] as f64;
                    diff * diff
                })
                .sum();
            if d < best_d {
                best_d = d;
                best = k as u32;
            }
        }
        labels.push(best);
    }
    SegMask {
        width: img.width,
        height: img.height,
        labels,
    }
}
