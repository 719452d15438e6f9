use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use camp_core::eval::{
    aggregate_patient, export_activation_maps, group_by_patient, roc_auc, roc_csv, Aggregation, EvalError,
    MetricsReport,
};
use camp_core::gradsuite::{run_suite, suite_csv};
use camp_core::imaging::{
    load_manifest, read_slice, resize_bilinear, write_slice, DatasetManifest, ManifestEntry, Modality,
};
use camp_core::models::{decode_checkpoint, load_checkpoint, save_checkpoint, Architecture, ModelOptions};
use camp_core::preprocess::{preprocess_slice, quality_row, PreprocessConfig, Rect, QUALITY_HEADER};
use camp_core::synthdata::{generate_phantoms, slice_relpath, LabelRule, PhantomSpec, MANIFEST_FILE};
use camp_core::training::{
    cross_validate, load_slices, log_csv, score_slices, AutoencoderTrainer, ClassifierTrainer, FoldPlan, SliceRecord,
    StepRecord, TrainConfig,
};
use camp_core::{Model32, Tensor32};

use crate::failure::{data, numerical, usage, Context, Result};
use crate::run_manifest::RunManifest;
use crate::{
    ActivationsArgs, AggregateArg, EvaluateArgs, GradcheckArgs, Level, PredictArgs, PreprocessArgs, SynthArgs,
    TrainAeArgs, TrainClfArgs, TrainFlags,
};

pub const SEED_ENV: &str = "CAMP_SEED";
pub const QUALITY_FILE: &str = "quality.csv";
pub const SLICE_SCORES_FILE: &str = "slice_scores.csv";
pub const PATIENT_SCORES_FILE: &str = "patient_scores.csv";
pub const SLICE_SCORES_HEADER: &str = "patient_id,modality,slice_path,score,label";
pub const PATIENT_SCORES_HEADER: &str = "patient_id,score,label";
pub const STEPS_HEADER: &str = "epoch,step,loss,bce,r,sum_kl,beta2";

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| usage(format!("{SEED_ENV}: expected an unsigned integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

/// Applies `key=value` lines of `path` through `set`. Blank lines and `#`
/// comments are skipped.
fn apply_config_file(path: &Path, mut set: impl FnMut(&str, &str) -> std::result::Result<(), String>) -> Result<()> {
    let text = fs::read_to_string(path).context(format!("reading config {}", path.display()))?;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let at = || format!("{}:{}", path.display(), i + 1);
        let (k, v) = line.split_once('=').ok_or_else(|| usage(format!("{}: expected key=value", at())))?;
        set(k.trim(), v.trim()).map_err(|m| usage(format!("{}: {m}", at())))?;
    }
    Ok(())
}

/// Defaults, then `CAMP_SEED`, then the config file, then flags.
pub fn resolve_train_config(flags: &TrainFlags) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    if let Some(seed) = env_seed()? {
        cfg.seed = seed;
    }
    if let Some(path) = &flags.config {
        apply_config_file(path, |k, v| cfg.set(k, v))?;
    }
    for (key, value) in flags.pairs() {
        if let Some(v) = value {
            cfg.set(key, v).map_err(|m| usage(format!("--{}: {m}", key.replace('_', "-"))))?;
        }
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).context(format!("creating {}", dir.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).context(format!("writing {}", path.display()))
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

/// Refuses to write `output` over one of the inputs.
fn guard_inputs(output: &Path, inputs: &[&Path]) -> Result<()> {
    match inputs.iter().find(|i| same_file(output, i)) {
        Some(i) => Err(usage(format!("output {} would overwrite input {}", output.display(), i.display()))),
        None => Ok(()),
    }
}

fn parse_modality(m: &Option<String>) -> Result<Option<Modality>> {
    m.as_deref().map(|s| s.parse::<Modality>().map_err(|e| usage(format!("--modality: {e}")))).transpose()
}

/// Model groups: one per modality present (or the one requested), or a
/// single `pooled` group.
fn groups(manifest: &DatasetManifest, only: Option<Modality>, pooled: bool) -> Vec<(String, Option<Modality>)> {
    if pooled {
        return vec![("pooled".into(), only)];
    }
    Modality::ALL
        .into_iter()
        .filter(|m| only.is_none_or(|o| o == *m) && manifest.entries.iter().any(|e| e.modality == *m))
        .map(|m| (m.as_str().to_ascii_lowercase(), Some(m)))
        .collect()
}

fn load_records(manifest: &DatasetManifest, path: &Path, m: Option<Modality>) -> Result<Vec<SliceRecord<f32>>> {
    load_slices(manifest, m).context(format!("loading slices of {}", path.display()))
}

fn model_options(cfg: &TrainConfig) -> ModelOptions {
    ModelOptions { leaky_alpha: cfg.leaky_alpha, dropout_rate: cfg.dropout_rate, ..ModelOptions::default() }
}

fn record_train_settings(run: &mut RunManifest, cfg: &TrainConfig) {
    run.seed = Some(cfg.seed);
    for (k, v) in cfg.entries() {
        run.setting(k, v);
    }
}

// synth -------------------------------------------------------------------

pub fn synth(a: &SynthArgs) -> Result<()> {
    let rule: LabelRule = a.rule.parse().map_err(|e| usage(format!("--rule: {e}")))?;
    let seed = match a.seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    };
    let spec = PhantomSpec { n_patients: a.patients, slices_per_patient: a.slices, size: a.size, seed, rule };
    spec.validate()?;
    create_dir(&a.out)?;
    let manifest = generate_phantoms(&spec, &a.out).context(format!("writing phantoms to {}", a.out.display()))?;

    let mut run = RunManifest::new("synth", &a.out);
    run.seed = Some(seed);
    run.setting("patients", spec.n_patients);
    run.setting("slices", spec.slices_per_patient);
    run.setting("size", spec.size);
    run.setting("seed", seed);
    run.setting("rule", rule.as_str());
    run.write(&a.out)?;
    println!("wrote {} slices of {} patients to {}", manifest.entries.len(), spec.n_patients, a.out.display());
    Ok(())
}

// preprocess --------------------------------------------------------------

fn parse_rect(s: &str) -> std::result::Result<Rect, String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [x, y, w, h] => Ok(Rect { x, y, w, h }),
        _ => Err(format!("expected x,y,w,h, got {s:?}")),
    }
}

fn set_preprocess(cfg: &mut PreprocessConfig, key: &str, value: &str) -> std::result::Result<(), String> {
    let num = |v: &str| v.parse::<f64>().map_err(|e| format!("{key}: {e}"));
    match key {
        "entropy_threshold" => cfg.entropy_threshold = num(value)?,
        "snr_threshold" => cfg.snr_threshold = num(value)?,
        "background_region" => cfg.background_region = parse_rect(value).map_err(|e| format!("{key}: {e}"))?,
        "target_size" => cfg.target_size = value.parse().map_err(|e| format!("{key}: {e}"))?,
        _ => return Err(format!("unknown key {key:?}")),
    }
    Ok(())
}

pub fn resolve_preprocess_config(a: &PreprocessArgs) -> Result<PreprocessConfig> {
    let mut cfg = PreprocessConfig::default();
    if let Some(path) = &a.config {
        apply_config_file(path, |k, v| set_preprocess(&mut cfg, k, v))?;
    }
    let flags = [
        ("entropy_threshold", &a.entropy_threshold),
        ("snr_threshold", &a.snr_threshold),
        ("background_region", &a.background_region),
        ("target_size", &a.target_size),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            set_preprocess(&mut cfg, key, v).map_err(|m| usage(format!("--{}: {m}", key.replace('_', "-"))))?;
        }
    }
    cfg.validate()?;
    if cfg.target_size == 0 {
        return Err(usage("--target-size must be positive"));
    }
    if !cfg.background_region.fits(cfg.target_size, cfg.target_size) {
        return Err(usage(format!(
            "background region {:?} does not fit a {} pixel slice",
            cfg.background_region, cfg.target_size
        )));
    }
    Ok(cfg)
}

pub fn preprocess(a: &PreprocessArgs) -> Result<()> {
    let cfg = resolve_preprocess_config(a)?;
    let manifest = load_manifest(&a.manifest)?;
    create_dir(&a.out)?;
    let out_manifest = a.out.join(MANIFEST_FILE);
    guard_inputs(&out_manifest, &[&a.manifest])?;

    let mut quality = format!("{QUALITY_HEADER}\n");
    let mut kept = Vec::new();
    let mut counters: std::collections::HashMap<(String, Modality), usize> = Default::default();
    for e in &manifest.entries {
        let idx = counters.entry((e.patient_id.clone(), e.modality)).or_insert(0);
        let index = *idx;
        *idx += 1;
        let slice = read_slice(&e.slice_path)?;
        let processed = preprocess_slice(&slice, &cfg).context(format!("preprocessing {}", e.slice_path.display()))?;
        quality.push_str(&quality_row(&e.patient_id, e.modality.as_str(), index, &processed.quality));
        quality.push('\n');
        if let Some(s) = processed.slice {
            let path = a.out.join(slice_relpath(&e.patient_id, e.modality, index));
            guard_inputs(&path, &[&e.slice_path])?;
            create_dir(path.parent().expect("relpath has a patient directory"))?;
            write_slice(&s, &path)?;
            kept.push(ManifestEntry { slice_path: path, ..e.clone() });
        }
    }
    let n_kept = kept.len();
    let out = DatasetManifest::from_entries(kept).map_err(data)?;
    out.save(&out_manifest)?;
    write_file(&a.out.join(QUALITY_FILE), quality)?;

    let mut run = RunManifest::new("preprocess", &a.out);
    run.input("manifest", &a.manifest);
    run.setting("entropy_threshold", format!("{:?}", cfg.entropy_threshold));
    run.setting("snr_threshold", format!("{:?}", cfg.snr_threshold));
    let r = cfg.background_region;
    run.setting("background_region", format!("{},{},{},{}", r.x, r.y, r.w, r.h));
    run.setting("target_size", cfg.target_size);
    run.write(&a.out)?;
    println!(
        "kept {n_kept} of {} slices; quality report in {}",
        manifest.entries.len(),
        a.out.join(QUALITY_FILE).display()
    );
    Ok(())
}

// train-ae ----------------------------------------------------------------

pub fn train_ae(a: &TrainAeArgs) -> Result<()> {
    let cfg = resolve_train_config(&a.train)?;
    let only = parse_modality(&a.modality)?;
    let manifest = load_manifest(&a.manifest)?;
    let val_manifest = a.val_manifest.as_deref().map(load_manifest).transpose()?;
    create_dir(&a.out)?;

    let groups = groups(&manifest, only, cfg.pooled_modalities);
    if groups.is_empty() {
        return Err(data(format!("{}: no slices to train on", a.manifest.display())));
    }
    for (name, m) in &groups {
        let train: Vec<Tensor32> = load_records(&manifest, &a.manifest, *m)?.into_iter().map(|r| r.image).collect();
        let val: Vec<Tensor32> = match (&val_manifest, &a.val_manifest) {
            (Some(vm), Some(p)) => load_records(vm, p, *m)?.into_iter().map(|r| r.image).collect(),
            _ => Vec::new(),
        };
        if train.is_empty() {
            return Err(data(format!("{}: no {name} slices", a.manifest.display())));
        }
        let mut trainer = AutoencoderTrainer::new(&train, &val, &cfg).context(format!("model {name}"))?;
        for _ in 0..cfg.epochs {
            let rec = trainer.run_epoch().context(format!("training camp1 {name}"))?;
            let val_rmse = trainer
                .history
                .iter()
                .rev()
                .find(|r| r.epoch == rec.epoch && r.split == camp_core::training::Split::Validation)
                .and_then(|r| r.rmse);
            eprintln!(
                "camp1 {name} epoch {}/{}: loss {:.5} rmse {:.5}{}",
                rec.epoch,
                cfg.epochs,
                rec.loss.unwrap_or(f64::NAN),
                rec.rmse.unwrap_or(f64::NAN),
                val_rmse.map(|v| format!(" val rmse {v:.5}")).unwrap_or_default()
            );
        }
        let log = log_csv(&trainer.history);
        let model = trainer.into_model();
        let ckpt = a.out.join(format!("camp1_{name}.ckpt"));
        save_checkpoint(&model, &ckpt)?;
        write_file(&a.out.join(format!("ae_log_{name}.csv")), log)?;
        println!("{name}: {} slices, checkpoint {}", train.len(), ckpt.display());
    }

    let mut run = RunManifest::new("train-ae", &a.out);
    run.input("manifest", &a.manifest);
    if let Some(p) = &a.val_manifest {
        run.input("val_manifest", p);
    }
    if let Some(m) = only {
        run.setting("modality", m.as_str());
    }
    record_train_settings(&mut run, &cfg);
    run.write(&a.out)
}

// train-clf ---------------------------------------------------------------

fn encoder_path(encoder: &Path, group: &str) -> PathBuf {
    if encoder.is_dir() {
        encoder.join(format!("camp1_{group}.ckpt"))
    } else {
        encoder.to_path_buf()
    }
}

fn steps_csv(steps: &[StepRecord]) -> String {
    let mut s = format!("{STEPS_HEADER}\n");
    for r in steps {
        let _ = writeln!(s, "{},{},{:?},{:?},{:?},{:?},{:?}", r.epoch, r.step, r.loss, r.bce, r.r, r.sum_kl, r.beta2);
    }
    s
}

pub fn train_clf(a: &TrainClfArgs) -> Result<()> {
    let cfg = resolve_train_config(&a.train)?;
    let only = parse_modality(&a.modality)?;
    let manifest = load_manifest(&a.manifest)?;
    let val_manifest = a.val_manifest.as_deref().map(load_manifest).transpose()?;
    create_dir(&a.out)?;

    let groups = groups(&manifest, only, cfg.pooled_modalities);
    if groups.is_empty() {
        return Err(data(format!("{}: no slices to train on", a.manifest.display())));
    }
    for (name, m) in &groups {
        let records = load_records(&manifest, &a.manifest, *m)?;
        let val = match (&val_manifest, &a.val_manifest) {
            (Some(vm), Some(p)) => load_records(vm, p, *m)?,
            _ => Vec::new(),
        };
        if records.is_empty() {
            return Err(data(format!("{}: no {name} slices", a.manifest.display())));
        }
        let enc_path = encoder_path(&a.encoder, name);
        let encoder: Model32 = load_checkpoint(&enc_path, Some(Architecture::Camp1), &model_options(&cfg))
            .context(format!("loading encoder {}", enc_path.display()))?;

        let train_refs: Vec<&SliceRecord<f32>> = records.iter().collect();
        let val_refs: Vec<&SliceRecord<f32>> = val.iter().collect();
        let mut trainer =
            ClassifierTrainer::new(&train_refs, &val_refs, &encoder, &cfg).context(format!("model {name}"))?;
        for _ in 0..cfg.epochs {
            let rec = trainer.run_epoch().context(format!("training camp2 {name}"))?;
            eprintln!(
                "camp2 {name} epoch {}/{}: loss {:.5} accuracy {:.3} beta2 {:.3}",
                rec.epoch,
                cfg.epochs,
                rec.loss.unwrap_or(f64::NAN),
                rec.accuracy.unwrap_or(f64::NAN),
                rec.beta2.unwrap_or(f64::NAN)
            );
        }
        let log = log_csv(&trainer.history);
        let steps = steps_csv(&trainer.steps);
        let model = trainer.into_model();
        let ckpt = a.out.join(format!("camp2_{name}.ckpt"));
        save_checkpoint(&model, &ckpt)?;
        write_file(&a.out.join(format!("clf_log_{name}.csv")), log)?;
        write_file(&a.out.join(format!("clf_steps_{name}.csv")), steps)?;
        println!("{name}: {} slices, checkpoint {}", records.len(), ckpt.display());

        if a.cv {
            let ids: Vec<String> = records.iter().map(|r| r.patient.clone()).collect();
            let plan = FoldPlan::from_patients(&ids, cfg.folds, cfg.seed)?;
            let report = cross_validate(&records, &plan, &encoder, &cfg).context(format!("cross-validating {name}"))?;
            let mut scores = String::from("fold,patient_id,score,label\n");
            let mut summary = String::from("fold,train_accuracy,val_accuracy\n");
            for f in &report.folds {
                for (p, s, l) in &f.val_scores {
                    let _ = writeln!(scores, "{},{p},{s:?},{l}", f.fold);
                }
                let _ = writeln!(summary, "{},{:?},{:?}", f.fold, f.train_accuracy, f.val_accuracy);
            }
            write_file(&a.out.join(format!("cv_scores_{name}.csv")), scores)?;
            write_file(&a.out.join(format!("cv_summary_{name}.csv")), summary)?;
            println!(
                "{name}: {}-fold cv, mean train accuracy {:.3}, pooled held-out accuracy {:.3}",
                cfg.folds,
                report.mean_train_accuracy(),
                report.pooled_val_accuracy()
            );
        }
    }

    let mut run = RunManifest::new("train-clf", &a.out);
    run.input("manifest", &a.manifest);
    run.input("encoder", &a.encoder);
    if let Some(p) = &a.val_manifest {
        run.input("val_manifest", p);
    }
    if let Some(m) = only {
        run.setting("modality", m.as_str());
    }
    if a.cv {
        run.command.push("--cv".into());
    }
    record_train_settings(&mut run, &cfg);
    run.write(&a.out)
}

// predict -----------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct SliceScore {
    pub entry: ManifestEntry,
    pub score: f64,
}

fn load_classifier(path: &Path) -> Result<Model32> {
    load_checkpoint(path, Some(Architecture::Camp2), &ModelOptions::default())
        .context(format!("loading classifier {}", path.display()))
}

/// Scores every slice of `manifest` (canonical order). `model` is a
/// checkpoint, or a directory with `camp2_pooled.ckpt` or one
/// `camp2_<modality>.ckpt` per modality.
pub fn score_manifest(
    manifest: &DatasetManifest,
    manifest_path: &Path,
    model: &Path,
    batch: usize,
) -> Result<Vec<SliceScore>> {
    let pooled = model.join("camp2_pooled.ckpt");
    let plan: Vec<(Option<Modality>, PathBuf)> = if !model.is_dir() {
        vec![(None, model.to_path_buf())]
    } else if pooled.is_file() {
        vec![(None, pooled)]
    } else {
        groups(manifest, None, false)
            .into_iter()
            .map(|(name, m)| (m, model.join(format!("camp2_{name}.ckpt"))))
            .collect()
    };
    let mut out = Vec::new();
    for (m, path) in plan {
        let mut net = load_classifier(&path)?;
        let records = load_records(manifest, manifest_path, m)?;
        let entries: Vec<ManifestEntry> =
            manifest.canonical().into_iter().filter(|e| m.is_none_or(|mm| mm == e.modality)).collect();
        let images: Vec<&Tensor32> = records.iter().map(|r| &r.image).collect();
        let scores = score_slices(&mut net, &images, batch).context(format!("scoring with {}", path.display()))?;
        if let Some(bad) = scores.iter().position(|s| !s.is_finite()) {
            return Err(numerical(format!("non-finite score for {}", entries[bad].slice_path.display())));
        }
        out.extend(entries.into_iter().zip(scores).map(|(entry, score)| SliceScore { entry, score }));
    }
    out.sort_by(|a, b| a.entry.cmp(&b.entry));
    Ok(out)
}

fn aggregation(a: AggregateArg) -> Aggregation {
    match a {
        AggregateArg::Mean => Aggregation::Mean,
        AggregateArg::Max => Aggregation::Max,
    }
}

/// Per-patient scores, with each patient's label when the manifest has one.
fn patient_scores(
    scores: &[SliceScore],
    manifest: &DatasetManifest,
    rule: Aggregation,
) -> Result<Vec<(String, f64, Option<u8>)>> {
    let pairs: Vec<(String, f64)> = scores.iter().map(|s| (s.entry.patient_id.clone(), s.score)).collect();
    let agg = aggregate_patient(&group_by_patient(&pairs), rule)?;
    Ok(agg
        .into_iter()
        .map(|(p, s)| {
            let l = manifest.label_of(&p);
            (p, s, l)
        })
        .collect())
}

fn label_str(l: Option<u8>) -> String {
    l.map(|v| v.to_string()).unwrap_or_default()
}

pub fn predict(a: &PredictArgs) -> Result<()> {
    if a.batch_size == 0 {
        return Err(usage("--batch-size must be positive"));
    }
    let manifest = load_manifest(&a.manifest)?;
    create_dir(&a.out)?;
    let scores = score_manifest(&manifest, &a.manifest, &a.model, a.batch_size)?;

    let mut slices = format!("{SLICE_SCORES_HEADER}\n");
    for s in &scores {
        let e = &s.entry;
        let _ = writeln!(
            slices,
            "{},{},{},{:?},{}",
            e.patient_id,
            e.modality,
            e.slice_path.display(),
            s.score,
            label_str(e.label)
        );
    }
    let mut patients = format!("{PATIENT_SCORES_HEADER}\n");
    let per_patient = patient_scores(&scores, &manifest, aggregation(a.aggregate))?;
    for (p, s, l) in &per_patient {
        let _ = writeln!(patients, "{p},{s:?},{}", label_str(*l));
    }
    write_file(&a.out.join(SLICE_SCORES_FILE), slices)?;
    write_file(&a.out.join(PATIENT_SCORES_FILE), patients)?;

    let mut run = RunManifest::new("predict", &a.out);
    run.input("manifest", &a.manifest);
    run.input("model", &a.model);
    run.setting("aggregate", format!("{:?}", a.aggregate).to_ascii_lowercase());
    run.setting("batch_size", a.batch_size);
    run.write(&a.out)?;
    println!("scored {} slices of {} patients", scores.len(), per_patient.len());
    Ok(())
}

// evaluate ----------------------------------------------------------------

/// Reads the `score` and `label` columns of a CSV with a header row.
fn read_scores(path: &Path) -> Result<(Vec<f64>, Vec<u8>)> {
    let text = fs::read_to_string(path).context(format!("reading {}", path.display()))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| data(format!("{}: empty file", path.display())))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| {
        cols.iter().position(|c| *c == name).ok_or_else(|| data(format!("{}: no {name:?} column", path.display())))
    };
    let (si, li) = (find("score")?, find("label")?);
    let (mut scores, mut labels) = (Vec::new(), Vec::new());
    for (i, line) in lines {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let at = format!("{}:{}", path.display(), i + 1);
        let s = f.get(si).and_then(|v| v.parse::<f64>().ok()).ok_or_else(|| data(format!("{at}: bad score")))?;
        let l = match f.get(li).copied() {
            Some("0") => 0,
            Some("1") => 1,
            other => return Err(data(format!("{at}: label must be 0 or 1, found {:?}", other.unwrap_or("")))),
        };
        scores.push(s);
        labels.push(l);
    }
    if scores.is_empty() {
        return Err(data(format!("{}: no rows", path.display())));
    }
    Ok((scores, labels))
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(EvalError::Threshold(a.threshold).into());
    }
    let (scores, labels) = match (&a.scores, &a.model, &a.manifest) {
        (Some(p), _, _) => read_scores(p)?,
        (None, Some(model), Some(mp)) => {
            let manifest = load_manifest(mp)?;
            let slice_scores = score_manifest(&manifest, mp, model, 8)?;
            let rows: Vec<(f64, Option<u8>, String)> = match a.level {
                Level::Slice => {
                    slice_scores.iter().map(|s| (s.score, s.entry.label, s.entry.patient_id.clone())).collect()
                }
                Level::Patient => patient_scores(&slice_scores, &manifest, aggregation(a.aggregate))?
                    .into_iter()
                    .map(|(p, s, l)| (s, l, p))
                    .collect(),
            };
            let mut labels = Vec::new();
            for (_, l, p) in &rows {
                labels.push(l.ok_or_else(|| data(format!("{}: patient {p} has no label", mp.display())))?);
            }
            (rows.iter().map(|r| r.0).collect(), labels)
        }
        _ => return Err(usage("evaluate needs --scores, or --model with --manifest")),
    };
    let report = MetricsReport::compute(&scores, &labels, a.threshold)?;
    create_dir(&a.out)?;
    write_file(&a.out.join("metrics.csv"), report.to_csv())?;
    write_file(&a.out.join("metrics.txt"), report.to_text())?;
    if let Some(roc) = roc_auc(&scores, &labels)? {
        write_file(&a.out.join("roc.csv"), roc_csv(&roc))?;
    } else {
        eprintln!("only one class present; ROC curve not written");
    }

    let mut run = RunManifest::new("evaluate", &a.out);
    if let Some(p) = &a.scores {
        run.input("scores", p);
    }
    if let (Some(m), Some(mp)) = (&a.model, &a.manifest) {
        run.input("model", m);
        run.input("manifest", mp);
        run.setting("level", format!("{:?}", a.level).to_ascii_lowercase());
        run.setting("aggregate", format!("{:?}", a.aggregate).to_ascii_lowercase());
    }
    run.setting("threshold", format!("{:?}", a.threshold));
    run.write(&a.out)?;
    print!("{}", report.to_text());
    Ok(())
}

// activations -------------------------------------------------------------

pub fn activations(a: &ActivationsArgs) -> Result<()> {
    let bytes = fs::read(&a.model).context(format!("reading {}", a.model.display()))?;
    let mut model: Model32 =
        decode_checkpoint(&bytes, None, &ModelOptions::default()).context(format!("loading {}", a.model.display()))?;
    let mut slice = read_slice(&a.slice)?;
    let s = model.input_size();
    if slice.width() != s || slice.height() != s {
        slice = resize_bilinear(&slice, s, s)?;
    }
    let input = Tensor32::new(&[s, s, 1], slice.normalized()).expect("s*s pixels");
    let layers: Vec<&str> = a.layers.iter().map(String::as_str).collect();
    create_dir(&a.out)?;
    let written = export_activation_maps(&mut model, &input, &layers, &a.out)?;

    let mut run = RunManifest::new("activations", &a.out);
    run.input("model", &a.model);
    run.input("slice", &a.slice);
    run.setting("layers", a.layers.join(","));
    run.write(&a.out)?;
    println!("wrote {} maps to {}", written.len(), a.out.display());
    Ok(())
}

// gradcheck ---------------------------------------------------------------

pub fn gradcheck(a: &GradcheckArgs) -> Result<()> {
    let seed = match a.seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    };
    let results = run_suite(seed);
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    for r in &results {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        let detail = r.error.as_deref().map(|e| format!("  ({e})")).unwrap_or_default();
        println!("{:<width$}  {:>10.3e}  {:>5}  {:>3}  {status}{detail}", r.name, r.max_rel_error, r.checked, r.kinks);
    }
    if let Some(out) = &a.out {
        create_dir(out)?;
        write_file(&out.join("gradcheck.csv"), suite_csv(&results))?;
        let mut run = RunManifest::new("gradcheck", out);
        run.seed = Some(seed);
        run.setting("seed", seed);
        run.write(out)?;
    }
    let failed = results.iter().filter(|r| !r.passed()).count();
    if failed > 0 {
        return Err(numerical(format!("{failed} of {} gradient checks failed", results.len())));
    }
    Ok(())
}
