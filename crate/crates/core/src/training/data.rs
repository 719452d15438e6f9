use super::{Result, TrainError};
use crate::imaging::{read_slice, DatasetManifest, Modality};
use crate::tensor::Tensor;
use crate::Scalar;

/// A slice read from a manifest, scaled to `[0, 1]`, shape `[s, s, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceRecord<T: Scalar> {
    pub patient: String,
    pub modality: Modality,
    pub label: Option<u8>,
    pub image: Tensor<T>,
}

/// Reads every slice of the manifest (optionally one modality only) in
/// canonical manifest order. Slices must be square and of equal size.
pub fn load_slices<T: Scalar>(manifest: &DatasetManifest, modality: Option<Modality>) -> Result<Vec<SliceRecord<T>>> {
    let mut out: Vec<SliceRecord<T>> = Vec::new();
    for e in manifest.canonical() {
        if modality.is_some_and(|m| m != e.modality) {
            continue;
        }
        let s = read_slice(&e.slice_path)?;
        let shape = [s.height(), s.width(), 1];
        if s.width() != s.height() {
            return Err(TrainError::SliceShape { expected: vec![s.width(), s.width(), 1], found: shape.to_vec() });
        }
        if let Some(first) = out.first() {
            if first.image.shape() != shape {
                return Err(TrainError::SliceShape { expected: first.image.shape().to_vec(), found: shape.to_vec() });
            }
        }
        let image = Tensor::new(&shape, s.normalized())?;
        out.push(SliceRecord { patient: e.patient_id, modality: e.modality, label: e.label, image });
    }
    Ok(out)
}

/// Checks that every record carries a label.
pub fn labeled<T: Scalar>(records: &[SliceRecord<T>]) -> Result<()> {
    match records.iter().position(|r| r.label.is_none()) {
        Some(index) => Err(TrainError::Unlabeled { patient: records[index].patient.clone(), index }),
        None => Ok(()),
    }
}
