//! Phantoms on disk through both training phases, checkpoints and scoring.

use camp_core::imaging::{load_manifest, Modality};
use camp_core::models::{load_checkpoint, save_checkpoint, Architecture, ModelOptions};
use camp_core::synthdata::{generate_phantoms, PhantomSpec};
use camp_core::training::{load_slices, score_slices, AutoencoderTrainer, ClassifierTrainer, SliceRecord, TrainConfig};
use camp_core::Tensor32;

#[test]
fn phantoms_train_save_reload_and_score() {
    let dir = tempfile::tempdir().unwrap();
    let spec = PhantomSpec { n_patients: 4, slices_per_patient: 2, size: 32, seed: 5, ..PhantomSpec::default() };
    generate_phantoms(&spec, dir.path()).unwrap();
    let manifest = load_manifest(&dir.path().join("manifest.csv")).unwrap();
    let records: Vec<SliceRecord<f32>> = load_slices(&manifest, Some(Modality::Flair)).unwrap();
    assert_eq!(records.len(), 8);

    let cfg = TrainConfig { epochs: 2, batch_size: 4, ..TrainConfig::default() };
    let images: Vec<Tensor32> = records.iter().map(|r| r.image.clone()).collect();
    let mut ae = AutoencoderTrainer::new(&images, &[], &cfg).unwrap();
    for _ in 0..cfg.epochs {
        ae.run_epoch().unwrap();
    }
    let encoder = ae.into_model();
    let ae_path = dir.path().join("camp1.ckpt");
    save_checkpoint(&encoder, &ae_path).unwrap();
    let encoder: camp_core::Model32 =
        load_checkpoint(&ae_path, Some(Architecture::Camp1), &ModelOptions::default()).unwrap();

    let refs: Vec<&SliceRecord<f32>> = records.iter().collect();
    let mut clf = ClassifierTrainer::new(&refs, &[], &encoder, &cfg).unwrap();
    for _ in 0..cfg.epochs {
        clf.run_epoch().unwrap();
    }
    let mut model = clf.into_model();
    let inputs: Vec<&Tensor32> = images.iter().collect();
    let scores = score_slices(&mut model, &inputs, 3).unwrap();
    assert_eq!(scores.len(), 8);
    assert!(scores.iter().all(|s| (0.0..=1.0).contains(s)));

    let clf_path = dir.path().join("camp2.ckpt");
    save_checkpoint(&model, &clf_path).unwrap();
    let mut reloaded: camp_core::Model32 =
        load_checkpoint(&clf_path, Some(Architecture::Camp2), &ModelOptions::default()).unwrap();
    assert_eq!(score_slices(&mut reloaded, &inputs, 8).unwrap(), scores);
    assert!(load_checkpoint::<f32>(&clf_path, Some(Architecture::Camp1), &ModelOptions::default()).is_err());
}
