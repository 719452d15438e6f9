//! Slice quality gate (Shannon entropy + decibel SNR) and histogram
//! equalization.
//!
//! Per-slice order is resize, then gate, then equalize.

use thiserror::Error;

use crate::imaging::{resize_bilinear, GraySlice, ImagingError, Volume};

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("slice is empty")]
    EmptySlice,
    #[error("volume is empty")]
    EmptyVolume,
    #[error("background region {0:?} does not fit a {1}x{2} slice or covers fewer than 4 pixels")]
    BadRegion(Rect, usize, usize),
    #[error("non-finite threshold {0}")]
    BadThreshold(&'static str),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

pub type Result<T> = std::result::Result<T, PreprocessError>;

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.x + self.w <= width && self.y + self.h <= height
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    /// Slices must have entropy strictly above this many bits.
    pub entropy_threshold: f64,
    /// Slices must have SNR at or above this many dB.
    pub snr_threshold: f64,
    pub background_region: Rect,
    pub target_size: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            entropy_threshold: 1.3,
            snr_threshold: 5.0,
            background_region: Rect { x: 0, y: 0, w: 16, h: 16 },
            target_size: 256,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.entropy_threshold.is_finite() {
            return Err(PreprocessError::BadThreshold("entropy_threshold"));
        }
        if !self.snr_threshold.is_finite() {
            return Err(PreprocessError::BadThreshold("snr_threshold"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceQuality {
    pub entropy_bits: f64,
    /// May be `+inf` (flat background) or `-inf` (zero mean).
    pub snr_db: f64,
    pub selected: bool,
}

pub fn histogram(slice: &GraySlice) -> [u64; 256] {
    let mut h = [0u64; 256];
    for &v in slice.data() {
        h[v as usize] += 1;
    }
    h
}

/// Shannon entropy of the intensity histogram, in bits, over all 256 levels.
pub fn shannon_entropy(slice: &GraySlice) -> Result<f64> {
    if slice.is_empty() {
        return Err(PreprocessError::EmptySlice);
    }
    let total = slice.data().len() as f64;
    let h = histogram(slice)
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum::<f64>();
    // -0.0 for single-symbol slices
    Ok(h.max(0.0))
}

/// `10 * log10(mean^2 / var_bg)` where `var_bg` is the population variance
/// inside `background`.
pub fn snr_db(slice: &GraySlice, background: Rect) -> Result<f64> {
    if slice.is_empty() {
        return Err(PreprocessError::EmptySlice);
    }
    if !background.fits(slice.width(), slice.height()) || background.w * background.h < 4 {
        return Err(PreprocessError::BadRegion(background, slice.width(), slice.height()));
    }
    let n = slice.data().len() as f64;
    let mean = slice.data().iter().map(|&v| v as f64).sum::<f64>() / n;
    let signal = mean * mean;

    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for y in background.y..background.y + background.h {
        for x in background.x..background.x + background.w {
            let v = slice.pixel(x, y) as f64;
            sum += v;
            sum_sq += v * v;
        }
    }
    let m = (background.w * background.h) as f64;
    let bg_mean = sum / m;
    let variance = (sum_sq / m - bg_mean * bg_mean).max(0.0);

    if signal == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    if variance == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / variance).log10())
}

pub fn assess(slice: &GraySlice, config: &PreprocessConfig) -> Result<SliceQuality> {
    let entropy_bits = shannon_entropy(slice)?;
    let snr = snr_db(slice, config.background_region)?;
    Ok(SliceQuality {
        entropy_bits,
        snr_db: snr,
        selected: entropy_bits > config.entropy_threshold && snr >= config.snr_threshold,
    })
}

/// Keeps the slices that pass the quality gate, in order. Returns one
/// [`SliceQuality`] per input slice.
pub fn select_slices(volume: &Volume, config: &PreprocessConfig) -> Result<(Volume, Vec<SliceQuality>)> {
    if volume.is_empty() {
        return Err(PreprocessError::EmptyVolume);
    }
    config.validate()?;
    let qualities = volume.slices().iter().map(|s| assess(s, config)).collect::<Result<Vec<_>>>()?;
    let kept = volume.slices().iter().zip(&qualities).filter(|(_, q)| q.selected).map(|(s, _)| s.clone()).collect();
    Ok((Volume::new(volume.patient_id.clone(), volume.modality, kept)?, qualities))
}

/// Intensity remap table of classic CDF histogram equalization.
pub fn equalization_map(slice: &GraySlice) -> [u8; 256] {
    let hist = histogram(slice);
    let total = slice.data().len() as u64;
    let mut cdf = [0u64; 256];
    let mut acc = 0;
    for (c, h) in cdf.iter_mut().zip(hist) {
        acc += h;
        *c = acc;
    }
    let cdf_min = cdf.iter().copied().find(|&c| c > 0).unwrap_or(0);
    let mut map = [0u8; 256];
    if total == cdf_min {
        return map;
    }
    let denom = (total - cdf_min) as f64;
    for (m, &c) in map.iter_mut().zip(&cdf) {
        let v = 255.0 * (c.saturating_sub(cdf_min)) as f64 / denom;
        *m = v.round().clamp(0.0, 255.0) as u8;
    }
    map
}

pub fn histogram_equalize(slice: &GraySlice) -> GraySlice {
    let map = equalization_map(slice);
    GraySlice::from_fn(slice.width(), slice.height(), |x, y| map[slice.pixel(x, y) as usize])
}

/// Result of running one slice through resize, gate and equalization.
#[derive(Debug, Clone)]
pub struct ProcessedSlice {
    pub quality: SliceQuality,
    /// Equalized slice when it passed the gate.
    pub slice: Option<GraySlice>,
}

pub fn preprocess_slice(slice: &GraySlice, config: &PreprocessConfig) -> Result<ProcessedSlice> {
    let resized = resize_bilinear(slice, config.target_size, config.target_size)?;
    let quality = assess(&resized, config)?;
    let slice = quality.selected.then(|| histogram_equalize(&resized));
    Ok(ProcessedSlice { quality, slice })
}

/// CSV header of the per-slice quality report.
pub const QUALITY_HEADER: &str = "patient_id,modality,slice_index,entropy_bits,snr_db,selected";

pub fn quality_row(patient_id: &str, modality: &str, index: usize, q: &SliceQuality) -> String {
    let snr = if q.snr_db.is_infinite() {
        if q.snr_db > 0.0 {
            "inf".to_owned()
        } else {
            "-inf".to_owned()
        }
    } else {
        format!("{:.6}", q.snr_db)
    };
    format!("{patient_id},{modality},{index},{:.6},{snr},{}", q.entropy_bits, q.selected)
}
