//! Grayscale slices, per-modality volumes and dataset manifests.
//!
//! Slices are stored on disk as binary portable graymaps (`P5`, maxval 255).
//! Manifests are CSV files with the fixed header
//! `patient_id,modality,slice_path,label`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: at byte {offset}: {message}")]
    Format { path: PathBuf, offset: usize, message: String },
    #[error("slice data has {len} bytes, expected {width}x{height}")]
    DataLength { width: usize, height: usize, len: usize },
    #[error("slice has zero width or height")]
    Empty,
    #[error("volume slices disagree in size: {0}x{1} vs {2}x{3}")]
    SizeMismatch(usize, usize, usize, usize),
    #[error("{path}: line {line}: {message}")]
    Manifest { path: PathBuf, line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, ImagingError>;

/// An 8-bit grayscale image, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct GraySlice {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl fmt::Debug for GraySlice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GraySlice")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("len", &self.data.len())
            .finish()
    }
}

impl GraySlice {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(ImagingError::DataLength { width, height, len: data.len() });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn pixel(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    /// Intensities scaled to `[0, 1]`.
    pub fn normalized<T: crate::Scalar>(&self) -> Vec<T> {
        let scale = T::from_f64_lossy(1.0 / 255.0);
        self.data.iter().map(|&v| T::from_f64_lossy(v as f64) * scale).collect()
    }

    /// Inverse of [`normalized`](Self::normalized): clamps and rounds to 8 bits.
    pub fn from_normalized<T: crate::Scalar>(width: usize, height: usize, values: &[T]) -> Result<Self> {
        let data = values.iter().map(|v| (v.to_f64_lossy().clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        Self::new(width, height, data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Modality {
    Flair,
    T1w,
    T1wCE,
    T2w,
}

impl Modality {
    pub const ALL: [Modality; 4] = [Modality::Flair, Modality::T1w, Modality::T1wCE, Modality::T2w];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Flair => "FLAIR",
            Modality::T1w => "T1w",
            Modality::T1wCE => "T1wCE",
            Modality::T2w => "T2w",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Modality::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown modality {s:?} (expected FLAIR, T1w, T1wCE or T2w)"))
    }
}

/// Ordered slice stack for one patient and one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub patient_id: String,
    pub modality: Modality,
    slices: Vec<GraySlice>,
}

impl Volume {
    pub fn new(patient_id: impl Into<String>, modality: Modality, slices: Vec<GraySlice>) -> Result<Self> {
        if let Some(first) = slices.first() {
            for s in &slices[1..] {
                if s.width != first.width || s.height != first.height {
                    return Err(ImagingError::SizeMismatch(first.width, first.height, s.width, s.height));
                }
            }
        }
        Ok(Self { patient_id: patient_id.into(), modality, slices })
    }

    pub fn slices(&self) -> &[GraySlice] {
        &self.slices
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }
}

/// Methylation status: 0 = unmethylated, 1 = methylated.
pub type Label = u8;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ManifestEntry {
    pub patient_id: String,
    pub modality: Modality,
    pub slice_path: PathBuf,
    pub label: Option<Label>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

pub const MANIFEST_HEADER: &str = "patient_id,modality,slice_path,label";

impl DatasetManifest {
    /// Validates uniqueness of (patient, modality, path) and per-patient
    /// label agreement.
    pub fn from_entries(entries: Vec<ManifestEntry>) -> std::result::Result<Self, String> {
        let mut seen = HashSet::new();
        let mut labels: BTreeMap<&str, Label> = BTreeMap::new();
        for e in &entries {
            if !seen.insert((&e.patient_id, e.modality, &e.slice_path)) {
                return Err(format!("duplicate entry ({}, {}, {})", e.patient_id, e.modality, e.slice_path.display()));
            }
            if let Some(l) = e.label {
                if let Some(&prev) = labels.get(e.patient_id.as_str()) {
                    if prev != l {
                        return Err(format!("conflicting labels for patient {}: {prev} and {l}", e.patient_id));
                    }
                } else {
                    labels.insert(&e.patient_id, l);
                }
            }
        }
        Ok(Self { entries })
    }

    /// Distinct patient ids in sorted order.
    pub fn patients(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.entries.iter().map(|e| e.patient_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn label_of(&self, patient_id: &str) -> Option<Label> {
        self.entries.iter().filter(|e| e.patient_id == patient_id).find_map(|e| e.label)
    }

    /// Entries as a sorted set, for order-independent comparison.
    pub fn canonical(&self) -> Vec<ManifestEntry> {
        let mut v = self.entries.clone();
        v.sort();
        v
    }

    /// Writes the manifest with paths made relative to `path`'s directory
    /// where possible.
    pub fn save(&self, path: &Path) -> Result<()> {
        let base = path.parent().unwrap_or(Path::new(""));
        let mut out = String::from(MANIFEST_HEADER);
        out.push('\n');
        for e in &self.entries {
            let rel = e.slice_path.strip_prefix(base).unwrap_or(&e.slice_path);
            let label = e.label.map(|l| l.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{}\n", e.patient_id, e.modality, rel.display(), label));
        }
        fs::write(path, out).map_err(|source| ImagingError::Io { path: path.to_owned(), source })
    }
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|source| ImagingError::Io { path: path.to_owned(), source })?;
    let base = path.parent().unwrap_or(Path::new(""));
    let err = |line: usize, message: String| ImagingError::Manifest { path: path.to_owned(), line, message };

    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == MANIFEST_HEADER => {}
        Some((_, h)) => return Err(err(1, format!("expected header {MANIFEST_HEADER:?}, found {h:?}"))),
        None => return Err(err(1, "empty manifest".into())),
    }

    let mut entries = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(err(lineno, format!("expected 4 fields, found {}", fields.len())));
        }
        if fields[0].is_empty() {
            return Err(err(lineno, "empty patient_id".into()));
        }
        let modality = fields[1].parse::<Modality>().map_err(|m| err(lineno, m))?;
        let slice_path = base.join(fields[2]);
        let label = match fields[3] {
            "" => None,
            "0" => Some(0),
            "1" => Some(1),
            other => return Err(err(lineno, format!("label must be 0, 1 or empty, found {other:?}"))),
        };
        entries.push(ManifestEntry { patient_id: fields[0].to_owned(), modality, slice_path, label });
    }
    DatasetManifest::from_entries(entries).map_err(|m| err(0, m))
}

fn format_err(path: &Path, offset: usize, message: impl Into<String>) -> ImagingError {
    ImagingError::Format { path: path.to_owned(), offset, message: message.into() }
}

/// Parses a binary graymap from memory. `path` is used for diagnostics only.
pub fn parse_pgm(bytes: &[u8], path: &Path) -> Result<GraySlice> {
    if bytes.len() < 2 {
        return Err(format_err(path, 0, "truncated header"));
    }
    if &bytes[..2] != b"P5" {
        return Err(format_err(path, 0, format!("unsupported magic {:?}", String::from_utf8_lossy(&bytes[..2]))));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                Some(_) => break,
                None => return Err(format_err(path, pos, "truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(format_err(path, pos, "expected a decimal number in header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format_err(path, start, "header number out of range"))?;
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(format_err(path, pos, "missing whitespace after maxval")),
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(format_err(path, pos, format!("maxval {maxval} unsupported (only 255)")));
    }
    if width == 0 || height == 0 {
        return Err(format_err(path, pos, "zero image dimension"));
    }
    let need = width * height;
    let payload = &bytes[pos..];
    if payload.len() < need {
        return Err(format_err(path, bytes.len(), format!("truncated payload: {} of {need} bytes", payload.len())));
    }
    GraySlice::new(width, height, payload[..need].to_vec())
}

pub fn encode_pgm(slice: &GraySlice) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", slice.width, slice.height).into_bytes();
    out.extend_from_slice(&slice.data);
    out
}

pub fn read_slice(path: &Path) -> Result<GraySlice> {
    let bytes = fs::read(path).map_err(|source| ImagingError::Io { path: path.to_owned(), source })?;
    parse_pgm(&bytes, path)
}

pub fn write_slice(slice: &GraySlice, path: &Path) -> Result<()> {
    if slice.data.len() != slice.width * slice.height {
        return Err(ImagingError::DataLength { width: slice.width, height: slice.height, len: slice.data.len() });
    }
    fs::write(path, encode_pgm(slice)).map_err(|source| ImagingError::Io { path: path.to_owned(), source })
}

/// Bilinear resampling with half-pixel-centred sample positions.
///
/// Output pixel `(x, y)` samples the input at
/// `((x + 0.5) * w_in / w_out - 0.5, ...)`, clamped to the image border.
pub fn resize_bilinear(slice: &GraySlice, out_w: usize, out_h: usize) -> Result<GraySlice> {
    if slice.width == 0 || slice.height == 0 || out_w == 0 || out_h == 0 {
        return Err(ImagingError::Empty);
    }
    if out_w == slice.width && out_h == slice.height {
        return Ok(slice.clone());
    }
    let axis = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f64)> {
        let scale = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|o| {
                let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                let i0 = src.floor() as usize;
                let i1 = (i0 + 1).min(n_in - 1);
                (i0, i1, src - i0 as f64)
            })
            .collect()
    };
    let xs = axis(slice.width, out_w);
    let ys = axis(slice.height, out_h);
    let src = |x: usize, y: usize| slice.data[y * slice.width + x] as f64;
    let mut data = Vec::with_capacity(out_w * out_h);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = src(x0, y0) * (1.0 - fx) + src(x1, y0) * fx;
            let bottom = src(x0, y1) * (1.0 - fx) + src(x1, y1) * fx;
            let v = top * (1.0 - fy) + bottom * fy;
            data.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    GraySlice::new(out_w, out_h, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reads_small_p5() {
        let bytes = b"P5\n2 2\n255\n\x00\x80\xff\x40";
        let s = parse_pgm(bytes, Path::new("mem")).unwrap();
        assert_eq!((s.width(), s.height()), (2, 2));
        assert_eq!(s.data(), &[0, 128, 255, 64]);
    }

    #[test]
    fn rejects_ascii_variant() {
        let err = parse_pgm(b"P2\n1 1\n255\n0\n", Path::new("a.pgm")).unwrap_err().to_string();
        assert!(err.contains("unsupported magic"), "{err}");
        assert!(err.contains("a.pgm"));
    }

    #[test]
    fn rejects_bad_maxval_and_truncation() {
        let e = parse_pgm(b"P5\n1 1\n65535\n\x00\x00", Path::new("m")).unwrap_err().to_string();
        assert!(e.contains("maxval"), "{e}");
        let e = parse_pgm(b"P5\n3 3\n255\n\x00", Path::new("m")).unwrap_err().to_string();
        assert!(e.contains("truncated payload"), "{e}");
        let e = parse_pgm(b"P5\n3", Path::new("m")).unwrap_err().to_string();
        assert!(e.contains("byte"), "{e}");
    }

    #[test]
    fn header_comments_are_skipped() {
        let s = parse_pgm(b"P5 # comment\n1 1\n255\n\x07", Path::new("m")).unwrap();
        assert_eq!(s.data(), &[7]);
    }

    #[test]
    fn smallest_slice_encoding() {
        let s = GraySlice::new(1, 1, vec![42]).unwrap();
        let enc = encode_pgm(&s);
        // 11 header bytes ("P5\n1 1\n255\n") + 1 payload byte
        assert_eq!(enc.len(), 12);
        assert_eq!(&enc, b"P5\n1 1\n255\n*");
    }

    #[test]
    fn wrong_length_rejected() {
        assert!(matches!(GraySlice::new(2, 2, vec![0; 3]), Err(ImagingError::DataLength { .. })));
    }

    #[test]
    fn write_then_read_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.pgm");
        let s = GraySlice::from_fn(5, 3, |x, y| (x * 40 + y) as u8);
        write_slice(&s, &p).unwrap();
        assert_eq!(read_slice(&p).unwrap(), s);
        assert!(matches!(read_slice(&dir.path().join("missing.pgm")), Err(ImagingError::Io { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn pgm_round_trip(w in 1usize..40, h in 1usize..40, seed in any::<u64>()) {
            let mut state = seed;
            let s = GraySlice::from_fn(w, h, |_, _| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 56) as u8
            });
            let enc = encode_pgm(&s);
            let back = parse_pgm(&enc, Path::new("mem")).unwrap();
            prop_assert_eq!(&back, &s);
            prop_assert_eq!(encode_pgm(&back), enc);
        }

        #[test]
        fn resize_stays_within_input_range(w in 1usize..20, h in 1usize..20, ow in 1usize..30, oh in 1usize..30, seed in any::<u64>()) {
            let mut state = seed | 1;
            let s = GraySlice::from_fn(w, h, |_, _| {
                state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                (state & 0xff) as u8
            });
            let lo = *s.data().iter().min().unwrap();
            let hi = *s.data().iter().max().unwrap();
            let r = resize_bilinear(&s, ow, oh).unwrap();
            prop_assert!(r.data().iter().all(|&v| v >= lo && v <= hi));
        }
    }

    #[test]
    fn resize_constant_and_identity() {
        let c = GraySlice::filled(512, 512, 100);
        let r = resize_bilinear(&c, 256, 256).unwrap();
        assert_eq!((r.width(), r.height()), (256, 256));
        assert!(r.data().iter().all(|&v| v == 100));

        let s = GraySlice::from_fn(7, 5, |x, y| (x * 30 + y * 3) as u8);
        assert_eq!(resize_bilinear(&s, 7, 5).unwrap(), s);
        assert!(resize_bilinear(&s, 0, 5).is_err());
    }

    #[test]
    fn resize_upsample_ramp_matches_formula() {
        let s = GraySlice::new(2, 1, vec![0, 255]).unwrap();
        let r = resize_bilinear(&s, 4, 1).unwrap();
        // sample positions -0.25, 0.25, 0.75, 1.25 clamp to [0, 1]
        let want: Vec<u8> = [0.0f64, 0.25, 0.75, 1.0].iter().map(|f| (255.0 * f).round() as u8).collect();
        assert_eq!(r.data(), &want[..]);
        assert!(r.data().windows(2).all(|w| w[0] <= w[1]));
    }

    fn write_manifest(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("manifest.csv");
        fs::write(&p, format!("{MANIFEST_HEADER}\n{body}")).unwrap();
        p
    }

    #[test]
    fn manifest_accepts_agreeing_labels_and_resolves_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_manifest(dir.path(), "p1,FLAIR,a.pgm,1\np1,T1w,b.pgm,1\np2,T2w,c.pgm,\n");
        let m = load_manifest(&p).unwrap();
        assert_eq!(m.entries.len(), 3);
        assert_eq!(m.entries[0].slice_path, dir.path().join("a.pgm"));
        assert_eq!(m.label_of("p1"), Some(1));
        assert_eq!(m.label_of("p2"), None);
    }

    #[test]
    fn manifest_rejects_conflicts_duplicates_and_bad_modality() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_manifest(dir.path(), "p1,FLAIR,a.pgm,1\np1,T1w,b.pgm,0\n");
        assert!(load_manifest(&p).unwrap_err().to_string().contains("conflicting labels"));
        let p = write_manifest(dir.path(), "p1,FLAIR,a.pgm,1\np1,FLAIR,a.pgm,1\n");
        assert!(load_manifest(&p).unwrap_err().to_string().contains("duplicate"));
        let p = write_manifest(dir.path(), "p1,DWI,a.pgm,1\n");
        assert!(load_manifest(&p).unwrap_err().to_string().contains("unknown modality"));
    }

    #[test]
    fn manifest_585_patients_and_order_independence() {
        let dir = tempfile::tempdir().unwrap();
        let mut rows = Vec::new();
        for p in 0..585 {
            for m in Modality::ALL {
                rows.push(format!("P{p:05},{m},P{p:05}/{m}_000.pgm,{}", p % 2));
            }
        }
        let p = write_manifest(dir.path(), &(rows.join("\n") + "\n"));
        let m = load_manifest(&p).unwrap();
        assert_eq!(m.entries.len(), 585 * 4);
        assert_eq!(m.patients().len(), 585);

        rows.reverse();
        rows.swap(3, 1000);
        let q = dir.path().join("shuffled.csv");
        fs::write(&q, format!("{MANIFEST_HEADER}\n{}\n", rows.join("\n"))).unwrap();
        assert_eq!(load_manifest(&q).unwrap().canonical(), m.canonical());
    }

    #[test]
    fn manifest_save_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_manifest(dir.path(), "p1,FLAIR,x/a.pgm,1\np2,T1wCE,b.pgm,\n");
        let m = load_manifest(&p).unwrap();
        let q = dir.path().join("copy.csv");
        m.save(&q).unwrap();
        assert_eq!(load_manifest(&q).unwrap(), m);
    }
}
