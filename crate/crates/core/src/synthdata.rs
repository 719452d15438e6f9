//! Labelled synthetic "phantom" datasets.
//!
//! Every patient gets an elliptical brain (smooth intensity gradient plus
//! mild noise) on an exactly black background, in four modality variants
//! with distinct base intensities, and an elliptical tumour blob. Under the
//! texture rule, label-1 tumours carry a fine checkerboard texture and
//! label-0 tumours a smooth bump with the same mean intensity, so mean
//! brightness alone does not separate the classes. The intensity rule
//! instead makes label-1 tumours brighter (an easy diagnostic).
//!
//! Each patient draws from its own ChaCha stream (seed, patient index), so
//! the output does not depend on generation order.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::imaging::{write_slice, DatasetManifest, GraySlice, ImagingError, ManifestEntry, Modality, Volume};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid phantom spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

pub type Result<T> = std::result::Result<T, SynthError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelRule {
    #[default]
    Texture,
    Intensity,
}

impl LabelRule {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelRule::Texture => "texture",
            LabelRule::Intensity => "intensity",
        }
    }
}

impl std::str::FromStr for LabelRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "texture" => Ok(LabelRule::Texture),
            "intensity" => Ok(LabelRule::Intensity),
            _ => Err(format!("expected texture or intensity, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhantomSpec {
    pub n_patients: usize,
    pub slices_per_patient: usize,
    /// Side length in pixels; a multiple of 4.
    pub size: usize,
    pub seed: u64,
    pub rule: LabelRule,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self { n_patients: 8, slices_per_patient: 4, size: 256, seed: 0, rule: LabelRule::Texture }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_patients == 0 || self.slices_per_patient == 0 {
            return Err(SynthError::Spec("n_patients and slices_per_patient must be at least 1".into()));
        }
        if self.size < 16 || !self.size.is_multiple_of(4) {
            return Err(SynthError::Spec(format!("size {} must be a multiple of 4 and at least 16", self.size)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomPatient {
    pub id: String,
    pub label: u8,
    /// One volume per modality, in [`Modality::ALL`] order.
    pub volumes: Vec<Volume>,
}

fn base_intensity(m: Modality) -> f64 {
    match m {
        Modality::Flair => 150.0,
        Modality::T1w => 105.0,
        Modality::T1wCE => 125.0,
        Modality::T2w => 170.0,
    }
}

pub fn patient_id(index: usize) -> String {
    format!("P{index:04}")
}

/// Balanced labels: `n / 2` ones (rounded down) in seeded random order.
fn labels(n: usize, seed: u64) -> Vec<u8> {
    let mut v: Vec<u8> = (0..n).map(|i| u8::from(i < n / 2)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    v.shuffle(&mut rng);
    v
}

struct Geometry {
    cx: f64,
    cy: f64,
    ax: f64,
    ay: f64,
    grad_angle: f64,
    tx: f64,
    ty: f64,
    tr: f64,
    phase: usize,
}

fn draw_geometry(rng: &mut ChaCha8Rng, s: f64) -> Geometry {
    let (cx, cy) = (s * rng.random_range(0.48..0.52), s * rng.random_range(0.48..0.52));
    let (ax, ay) = (s * rng.random_range(0.30..0.34), s * rng.random_range(0.36..0.40));
    // tumour centre well inside the brain
    let ang = rng.random_range(0.0..std::f64::consts::TAU);
    let rad = rng.random_range(0.0..0.35);
    Geometry {
        cx,
        cy,
        ax,
        ay,
        grad_angle: rng.random_range(0.0..std::f64::consts::TAU),
        tx: cx + rad * ax * ang.cos(),
        ty: cy + rad * ay * ang.sin(),
        tr: s * rng.random_range(0.12..0.16),
        phase: rng.random_range(0..2),
    }
}

#[allow(clippy::too_many_arguments)]
fn render(
    g: &Geometry,
    s: usize,
    slice: usize,
    n_slices: usize,
    modality: Modality,
    label: u8,
    rule: LabelRule,
    rng: &mut ChaCha8Rng,
) -> GraySlice {
    let sf = s as f64;
    // slices sample a sphere-like tumour off-centre; it is present in all
    let z = if n_slices == 1 { 0.0 } else { (slice as f64 / (n_slices - 1) as f64 - 0.5) * 1.2 };
    let tr = g.tr * (1.0 - z * z).sqrt();
    let base = base_intensity(modality);
    let tumour_base = base + 35.0;
    let cell = (s / 64).max(1);
    let noise = Normal::new(0.0, 3.0).expect("valid");
    let (gc, gs) = (g.grad_angle.cos(), g.grad_angle.sin());
    let mut data = Vec::with_capacity(s * s);
    for y in 0..s {
        for x in 0..s {
            let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
            let e = ((fx - g.cx) / g.ax).powi(2) + ((fy - g.cy) / g.ay).powi(2);
            if e > 1.0 {
                data.push(0u8);
                continue;
            }
            let ramp = ((fx - g.cx) * gc + (fy - g.cy) * gs) / sf;
            let mut v = base * (1.0 + 0.5 * ramp) * (1.0 - 0.15 * e);
            let d2 = ((fx - g.tx).powi(2) + (fy - g.ty).powi(2)) / (tr * tr);
            if d2 <= 1.0 {
                v = match (rule, label) {
                    (LabelRule::Texture, 1) => {
                        let on = (x / cell + y / cell + g.phase).is_multiple_of(2);
                        tumour_base + if on { 45.0 } else { -45.0 }
                    }
                    (LabelRule::Texture, _) => tumour_base + 20.0 * (1.0 - d2) - 10.0,
                    (LabelRule::Intensity, 1) => tumour_base + 50.0,
                    (LabelRule::Intensity, _) => tumour_base - 40.0,
                };
            }
            v += noise.sample(rng);
            data.push(v.round().clamp(1.0, 255.0) as u8);
        }
    }
    GraySlice::new(s, s, data).expect("s*s pixels")
}

/// Generates all patients in memory.
pub fn generate_patients(spec: &PhantomSpec) -> Result<Vec<PhantomPatient>> {
    spec.validate()?;
    let labels = labels(spec.n_patients, spec.seed);
    let mut out = Vec::with_capacity(spec.n_patients);
    for (i, &label) in labels.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64);
        let g = draw_geometry(&mut rng, spec.size as f64);
        let id = patient_id(i);
        let mut volumes = Vec::with_capacity(4);
        for m in Modality::ALL {
            let slices = (0..spec.slices_per_patient)
                .map(|k| render(&g, spec.size, k, spec.slices_per_patient, m, label, spec.rule, &mut rng))
                .collect();
            volumes.push(Volume::new(id.clone(), m, slices)?);
        }
        out.push(PhantomPatient { id, label, volumes });
    }
    Ok(out)
}

pub const MANIFEST_FILE: &str = "manifest.csv";

/// Relative path of one slice inside a dataset directory.
pub fn slice_relpath(patient: &str, modality: Modality, index: usize) -> PathBuf {
    PathBuf::from(patient).join(format!("{}_{index:03}.pgm", modality.as_str().to_ascii_lowercase()))
}

/// Writes the dataset under `out_dir` (one sub-directory per patient, P5
/// slices, and `manifest.csv`) and returns its manifest.
pub fn generate_phantoms(spec: &PhantomSpec, out_dir: &Path) -> Result<DatasetManifest> {
    let patients = generate_patients(spec)?;
    let mut entries = Vec::new();
    for p in &patients {
        let dir = out_dir.join(&p.id);
        std::fs::create_dir_all(&dir).map_err(|source| ImagingError::Io { path: dir.clone(), source })?;
        for v in &p.volumes {
            for (k, s) in v.slices().iter().enumerate() {
                let path = out_dir.join(slice_relpath(&p.id, v.modality, k));
                write_slice(s, &path)?;
                entries.push(ManifestEntry {
                    patient_id: p.id.clone(),
                    modality: v.modality,
                    slice_path: path,
                    label: Some(p.label),
                });
            }
        }
    }
    let manifest = DatasetManifest::from_entries(entries).map_err(SynthError::Spec)?;
    manifest.save(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
