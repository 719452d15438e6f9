//! Classification metrics, ROC/AUC, patient-level aggregation and
//! activation-map export.
//!
//! Metrics with a zero denominator are `None` rather than 0 or NaN.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::imaging::{write_slice, GraySlice, ImagingError};
use crate::models::{ModelError, ModelGraph};
use crate::tensor::{Mode, Tape, Tensor};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{what}: {a} scores but {b} labels")]
    Length { what: &'static str, a: usize, b: usize },
    #[error("threshold {0} outside [0, 1]")]
    Threshold(f64),
    #[error("label {0} is not 0 or 1")]
    Label(u8),
    #[error("patient {0} has no scored slices")]
    EmptyGroup(String),
    #[error("unknown layer {0:?}")]
    UnknownLayer(String),
    #[error("layer {layer:?} output {shape:?} is not an image batch")]
    NotImageLayer { layer: String, shape: Vec<usize> },
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, EvalError>;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn check_pairs(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(EvalError::Length { what: "scores/labels", a: scores.len(), b: labels.len() });
    }
    if let Some(&l) = labels.iter().find(|&&l| l > 1) {
        return Err(EvalError::Label(l));
    }
    Ok(())
}

/// Counts outcomes, predicting positive iff `score >= threshold`.
pub fn confusion(scores: &[f64], labels: &[u8], threshold: f64) -> Result<ConfusionMatrix> {
    check_pairs(scores, labels)?;
    if !(0.0..=1.0).contains(&threshold) {
        return Err(EvalError::Threshold(threshold));
    }
    let mut cm = ConfusionMatrix::default();
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l == 1) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, false) => cm.tn += 1,
            (false, true) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn accuracy(cm: &ConfusionMatrix) -> Option<f64> {
    ratio(cm.tp + cm.tn, cm.total())
}

/// True-positive rate (recall).
pub fn sensitivity(cm: &ConfusionMatrix) -> Option<f64> {
    ratio(cm.tp, cm.tp + cm.fn_)
}

pub fn specificity(cm: &ConfusionMatrix) -> Option<f64> {
    ratio(cm.tn, cm.tn + cm.fp)
}

pub fn precision(cm: &ConfusionMatrix) -> Option<f64> {
    ratio(cm.tp, cm.tp + cm.fp)
}

/// Harmonic mean of precision and sensitivity; `None` if either is
/// undefined or both are zero.
pub fn f1(cm: &ConfusionMatrix) -> Option<f64> {
    let (p, r) = (precision(cm)?, sensitivity(cm)?);
    (p + r > 0.0).then(|| 2.0 * p * r / (p + r))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    /// `+inf` for the initial (0, 0) point.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Roc {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// ROC curve over every distinct score (descending) and its trapezoidal
/// area. Tied scores move both rates in one step, so the area counts tied
/// positive/negative pairs as one half. `None` for single-class input.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<Option<Roc>> {
    check_pairs(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let neg = labels.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp, mut auc) = (0.0, 0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] == 1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        let prev = *points.last().expect("starts non-empty");
        let p = RocPoint { threshold: t, fpr: fp / neg, tpr: tp / pos };
        auc += (p.fpr - prev.fpr) * (p.tpr + prev.tpr) / 2.0;
        points.push(p);
    }
    Ok(Some(Roc { points, auc }))
}

pub const ROC_HEADER: &str = "threshold,fpr,tpr";

pub fn roc_csv(roc: &Roc) -> String {
    let mut s = format!("{ROC_HEADER}\n");
    for p in &roc.points {
        let _ = writeln!(s, "{:?},{:?},{:?}", p.threshold, p.fpr, p.tpr);
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub confusion: ConfusionMatrix,
    pub threshold: f64,
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
    pub auc: Option<f64>,
}

pub const METRICS_HEADER: &str = "metric,value";
pub const UNDEFINED: &str = "undefined";

impl MetricsReport {
    pub fn compute(scores: &[f64], labels: &[u8], threshold: f64) -> Result<Self> {
        let cm = confusion(scores, labels, threshold)?;
        Ok(Self {
            confusion: cm,
            threshold,
            accuracy: accuracy(&cm),
            sensitivity: sensitivity(&cm),
            specificity: specificity(&cm),
            precision: precision(&cm),
            f1: f1(&cm),
            auc: roc_auc(scores, labels)?.map(|r| r.auc),
        })
    }

    fn rows(&self) -> Vec<(&'static str, String)> {
        let f = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_else(|| UNDEFINED.into());
        vec![
            ("threshold", format!("{:?}", self.threshold)),
            ("tp", self.confusion.tp.to_string()),
            ("fp", self.confusion.fp.to_string()),
            ("tn", self.confusion.tn.to_string()),
            ("fn", self.confusion.fn_.to_string()),
            ("accuracy", f(self.accuracy)),
            ("sensitivity", f(self.sensitivity)),
            ("specificity", f(self.specificity)),
            ("precision", f(self.precision)),
            ("f1", f(self.f1)),
            ("auc", f(self.auc)),
        ]
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{METRICS_HEADER}\n");
        for (k, v) in self.rows() {
            let _ = writeln!(s, "{k},{v}");
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.rows() {
            let _ = writeln!(s, "{k:<12} {v}");
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    #[default]
    Mean,
    Max,
}

/// Groups `(patient, score)` pairs by patient, in sorted patient order.
pub fn group_by_patient(pairs: &[(String, f64)]) -> Vec<(String, Vec<f64>)> {
    let mut map: std::collections::BTreeMap<&str, Vec<f64>> = Default::default();
    for (p, s) in pairs {
        map.entry(p.as_str()).or_default().push(*s);
    }
    map.into_iter().map(|(p, v)| (p.to_string(), v)).collect()
}

/// One score per patient: the mean of its slice scores, or the max.
pub fn aggregate_patient(groups: &[(String, Vec<f64>)], rule: Aggregation) -> Result<Vec<(String, f64)>> {
    groups
        .iter()
        .map(|(p, scores)| {
            if scores.is_empty() {
                return Err(EvalError::EmptyGroup(p.clone()));
            }
            let v = match rule {
                Aggregation::Mean => scores.iter().sum::<f64>() / scores.len() as f64,
                Aggregation::Max => scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            };
            Ok((p.clone(), v))
        })
        .collect()
}

/// Min-max scales one channel to `[0, 255]`; a constant channel maps to 0.
pub fn scale_map(width: usize, height: usize, values: &[f64]) -> GraySlice {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let data = values.iter().map(|&v| if span > 0.0 { ((v - lo) / span * 255.0).round() as u8 } else { 0 }).collect();
    GraySlice::new(width, height, data).expect("one value per pixel")
}

/// Runs `slice` (`[s, s, 1]`) through `model` in inference mode and writes
/// every channel of each named layer as `<layer>_<channel>.pgm` in `out_dir`.
pub fn export_activation_maps<T: Scalar>(
    model: &mut ModelGraph<T>,
    slice: &Tensor<T>,
    layers: &[&str],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    for name in layers {
        let spec =
            model.layers.iter().find(|l| l.name == *name).ok_or_else(|| EvalError::UnknownLayer(name.to_string()))?;
        if spec.output_shape.len() != 3 {
            return Err(EvalError::NotImageLayer { layer: name.to_string(), shape: spec.output_shape.clone() });
        }
    }
    let mut shape = vec![1];
    shape.extend_from_slice(slice.shape());
    let batch = slice.clone().reshape(&shape).map_err(ModelError::from)?;
    let prev = model.mode;
    model.set_mode(Mode::Infer);
    let mut tape = Tape::new();
    let x = tape.constant(batch);
    let vars: Vec<_> = model.params.iter().map(|p| tape.constant(p.value.clone())).collect();
    let fwd = model.forward_with(&mut tape, x, &vars, &mut ChaCha8Rng::seed_from_u64(0));
    model.set_mode(prev);
    let fwd = fwd?;
    std::fs::create_dir_all(out_dir).map_err(|source| ImagingError::Io { path: out_dir.into(), source })?;
    let mut written = Vec::new();
    for name in layers {
        let v = tape.value(fwd.layer(name).expect("validated above"));
        let (h, w, c) = (v.shape()[1], v.shape()[2], v.shape()[3]);
        for ch in 0..c {
            let values: Vec<f64> = (0..h * w).map(|i| v.data()[i * c + ch].to_f64_lossy()).collect();
            let path = out_dir.join(format!("{name}_{ch}.pgm"));
            write_slice(&scale_map(w, h, &values), &path)?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::read_slice;
    use crate::models::{build_camp1, ModelOptions};
    use proptest::prelude::*;

    fn cm(tp: u64, fp: u64, tn: u64, fn_: u64) -> ConfusionMatrix {
        ConfusionMatrix { tp, fp, tn, fn_ }
    }

    #[test]
    fn confusion_examples() {
        assert_eq!(confusion(&[0.9, 0.1], &[1, 0], 0.5).unwrap(), cm(1, 0, 1, 0));
        assert_eq!(confusion(&[1.0, 0.0, 1.0], &[1, 0, 1], 0.5).unwrap(), cm(2, 0, 1, 0));
        // threshold itself counts as positive
        assert_eq!(confusion(&[0.5], &[0], 0.5).unwrap(), cm(0, 1, 0, 0));
        assert!(matches!(confusion(&[0.1], &[1, 0], 0.5), Err(EvalError::Length { .. })));
        assert!(confusion(&[0.1], &[1], 1.5).is_err());
        assert!(confusion(&[0.1], &[2], 0.5).is_err());
    }

    #[test]
    fn metric_examples() {
        let m = cm(50, 5, 40, 5);
        assert!((accuracy(&m).unwrap() - 0.9).abs() < 1e-15);
        assert!((sensitivity(&m).unwrap() - 50.0 / 55.0).abs() < 1e-15);
        assert!((specificity(&m).unwrap() - 40.0 / 45.0).abs() < 1e-15);
        assert_eq!(format!("{:.4}", sensitivity(&m).unwrap()), "0.9091");
        assert_eq!(format!("{:.4}", specificity(&m).unwrap()), "0.8889");
        assert_eq!(accuracy(&cm(3, 0, 2, 0)), Some(1.0));
        assert_eq!(sensitivity(&cm(4, 1, 0, 0)), Some(1.0));
        assert_eq!(specificity(&cm(0, 0, 4, 1)), Some(1.0));
        assert_eq!(accuracy(&ConfusionMatrix::default()), None);
        assert_eq!(sensitivity(&cm(0, 2, 3, 0)), None);
        assert_eq!(specificity(&cm(2, 0, 0, 3)), None);
        assert_eq!(f1(&cm(0, 2, 3, 4)), None);
    }

    #[test]
    fn auc_examples() {
        let r = roc_auc(&[0.9, 0.8, 0.3, 0.1], &[1, 1, 0, 0]).unwrap().unwrap();
        assert_eq!(r.auc, 1.0);
        assert_eq!(r.points.last().unwrap().fpr, 1.0);
        assert_eq!(roc_auc(&[0.5; 6], &[1, 0, 1, 0, 0, 1]).unwrap().unwrap().auc, 0.5);
        assert_eq!(roc_auc(&[0.2, 0.4], &[1, 1]).unwrap(), None);
        assert!(roc_csv(&r).starts_with("threshold,fpr,tpr\ninf,0.0,0.0\n"));
    }

    #[test]
    fn report_marks_undefined() {
        let r = MetricsReport::compute(&[0.9, 0.8], &[1, 1], 0.5).unwrap();
        assert_eq!(r.accuracy, Some(1.0));
        let csv = r.to_csv();
        assert!(csv.starts_with("metric,value\n"));
        assert!(csv.contains("specificity,undefined\n") && csv.contains("auc,undefined\n"));
        assert!(csv.contains("accuracy,1.0\n"));
    }

    #[test]
    fn aggregation() {
        let g = vec![("A".to_string(), vec![0.2, 0.8]), ("B".to_string(), vec![0.4])];
        assert_eq!(aggregate_patient(&g, Aggregation::Mean).unwrap(), vec![("A".into(), 0.5), ("B".into(), 0.4)]);
        assert_eq!(aggregate_patient(&g, Aggregation::Max).unwrap()[0].1, 0.8);
        assert!(matches!(aggregate_patient(&[("C".into(), vec![])], Aggregation::Mean), Err(EvalError::EmptyGroup(_))));
        let pairs = vec![("B".to_string(), 0.4), ("A".to_string(), 0.2), ("A".to_string(), 0.8)];
        assert_eq!(group_by_patient(&pairs), g);
    }

    #[test]
    fn scale_map_matches_direct_minmax() {
        // two channels, interleaved as a [2, 2, 2] activation
        let act = [1.0, -3.0, 2.0, -1.0, 3.0, 1.0, 5.0, 5.0];
        let ch0: Vec<f64> = act.iter().step_by(2).copied().collect();
        let ch1: Vec<f64> = act.iter().skip(1).step_by(2).copied().collect();
        assert_eq!(scale_map(2, 2, &ch0).data(), &[0, 64, 128, 255]);
        assert_eq!(scale_map(2, 2, &ch1).data(), &[0, 64, 128, 255]);
        assert_eq!(scale_map(2, 1, &[0.7, 0.7]).data(), &[0, 0]);
    }

    #[test]
    fn constant_input_identity_conv_gives_blank_maps() {
        let mut m = build_camp1::<f32>(0, &ModelOptions::with_size(32)).unwrap();
        let k = m.param_mut("conv1.kernel").unwrap();
        let data = k.value.data_mut();
        data.fill(0.0);
        // centre tap (1, 1), single input channel, every output channel
        data[4 * 64..5 * 64].fill(1.0);
        let dir = tempfile::tempdir().unwrap();
        let files =
            export_activation_maps(&mut m, &Tensor::full(&[32, 32, 1], 0.6), &["conv1", "pool2"], dir.path()).unwrap();
        assert_eq!(files.len(), 64 + 32);
        assert!(files[0].ends_with("conv1_0.pgm") && files[64].ends_with("pool2_0.pgm"));
        for f in &files[..64] {
            assert!(read_slice(f).unwrap().data().iter().all(|&v| v == 0));
        }
        assert!(matches!(
            export_activation_maps(&mut m, &Tensor::zeros(&[32, 32, 1]), &["nope"], dir.path()),
            Err(EvalError::UnknownLayer(_))
        ));
    }

    fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if labels[i] == 1 && labels[j] == 0 {
                    den += 1.0;
                    num += if si > sj {
                        1.0
                    } else if si == sj {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    fn scores_labels() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
        (2usize..60).prop_flat_map(|n| {
            // coarse scores so ties occur
            (prop::collection::vec((0u32..20).prop_map(|v| v as f64 / 19.0), n), prop::collection::vec(0u8..2, n))
        })
    }

    proptest! {
        #[test]
        fn metrics_match_formulas(tp in 0u64..50, fp in 0u64..50, tn in 0u64..50, fn_ in 0u64..50) {
            let m = cm(tp, fp, tn, fn_);
            let tot = tp + fp + tn + fn_;
            prop_assert_eq!(accuracy(&m), (tot > 0).then(|| (tp + tn) as f64 / tot as f64));
            prop_assert_eq!(sensitivity(&m), (tp + fn_ > 0).then(|| tp as f64 / (tp + fn_) as f64));
            prop_assert_eq!(specificity(&m), (tn + fp > 0).then(|| tn as f64 / (tn + fp) as f64));
            if let Some(f) = f1(&m) {
                prop_assert!((0.0..=1.0).contains(&f));
            }
        }

        #[test]
        fn auc_matches_pairwise_and_is_monotone_invariant((s, l) in scores_labels()) {
            if let Some(r) = roc_auc(&s, &l).unwrap() {
                prop_assert!((r.auc - pairwise_auc(&s, &l)).abs() < 1e-12);
                let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
                prop_assert!((roc_auc(&t, &l).unwrap().unwrap().auc - r.auc).abs() < 1e-12);
            }
        }

        #[test]
        fn threshold_consistency((s, l) in scores_labels(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (cl, ch) = (confusion(&s, &l, lo).unwrap(), confusion(&s, &l, hi).unwrap());
            if let (Some(x), Some(y)) = (sensitivity(&cl), sensitivity(&ch)) {
                prop_assert!(y <= x);
            }
            if let (Some(x), Some(y)) = (specificity(&cl), specificity(&ch)) {
                prop_assert!(y >= x);
            }
        }

        #[test]
        fn mean_aggregation_is_order_free(v in prop::collection::vec(0.0f64..1.0, 1..20), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut w = v.clone();
            w.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let a = aggregate_patient(&[("P".into(), v)], Aggregation::Mean).unwrap()[0].1;
            let b = aggregate_patient(&[("P".into(), w)], Aggregation::Mean).unwrap()[0].1;
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
