//! Stage orchestration behind the CLI: synth, cohort, render, train, eval,
//! compare and explain. Every stage reads a [`RunConfig`] and returns a
//! serializable summary.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{ClinicalCatalog, MedicationCatalog};
use crate::config::RunConfig;
use crate::encode::{
    normalize_image, preprocess_ecg, render_clinical, render_cxr, render_ecg, render_medications, render_missing_modality, Canvas,
    MedicationStats, Modality, IMAGENET_MEAN, IMAGENET_STD, WHITE,
};
use crate::error::{Error, Result};
use crate::explain::{cls_attention_map, overlay, text_attention, AttentionStack, SaliencyMap, SaliencyMode, TokenWeight};
use crate::ingest::{
    build_cohort, parse_cxr_manifest, parse_ecg, parse_ecg_manifest, parse_events, parse_medications, parse_metadata, parse_stays,
    split_stratified, CohortBuild, CohortInstance, CohortSplit,
};
use crate::metrics::{compare_methods, evaluate, MetricReport, SignificanceRecord};
use crate::model::{self, load_checkpoint, save_checkpoint, CheckpointHeader, Example, FusionModel, ModelInput, Task};
use crate::synth::{generate_synthetic, oracle_auroc};
use crate::text::{serialize_metadata, tokenize, BpeModel};

pub const COHORT_FILE: &str = "cohort.json";
pub const SPLIT_FILE: &str = "split.json";
pub const MED_STATS_FILE: &str = "med_stats.json";
pub const BPE_FILE: &str = "bpe.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const PREDICTIONS_FILE: &str = "predictions_test.csv";

/// Caps the global rayon pool from `MODIMG_THREADS` (default: all cores).
pub fn init_threads() -> Result<usize> {
    let n = match std::env::var("MODIMG_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("MODIMG_THREADS={v:?} is not a positive integer")))?,
        Err(_) => 0,
    };
    // a pool may already exist (e.g. in tests); that is fine
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(rayon::current_num_threads())
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(v)?).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub stays: usize,
    pub positives: usize,
    pub oracle_auroc: Option<f64>,
    pub data_dir: PathBuf,
}

pub fn run_synth(cfg: &RunConfig) -> Result<SynthSummary> {
    let spec = cfg.synth.as_ref().ok_or_else(|| Error::Config("the [synth] section is required for synth".into()))?;
    mkdir(&cfg.data_dir)?;
    let side = generate_synthetic(spec, &cfg.data_dir)?;
    Ok(SynthSummary {
        stays: side.stays.len(),
        positives: side.stays.iter().filter(|s| s.label == 1).count(),
        oracle_auroc: oracle_auroc(&side).ok(),
        data_dir: cfg.data_dir.clone(),
    })
}

// ---------------------------------------------------------------- cohort

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub instances: usize,
    pub excluded: usize,
    pub warnings: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub positives: [usize; 3],
    pub with_ecg: usize,
}

/// Parses every input file under `data_dir` and applies the cohort rules.
pub fn load_cohort_inputs(data_dir: &Path, window_h: f64) -> Result<(CohortBuild, usize)> {
    let clinical = ClinicalCatalog::standard();
    let medcat = MedicationCatalog::standard();
    let stays = parse_stays(&data_dir.join("stays.csv"))?;
    let events = parse_events(&data_dir.join("events.csv"), &clinical)?;
    let meds = parse_medications(&data_dir.join("meds.csv"), &medcat)?;
    let cxr = parse_cxr_manifest(&data_dir.join("cxr_manifest.csv"))?;
    let ecg_path = data_dir.join("ecg_manifest.csv");
    let ecg = if ecg_path.exists() { parse_ecg_manifest(&ecg_path)? } else { BTreeMap::new() };
    let metadata = parse_metadata(&data_dir.join("metadata.jsonl"))?;
    for w in events.warnings.iter().chain(&meds.warnings) {
        log::warn!("line {}: {}", w.line, w.message);
    }
    let build = build_cohort(&stays, &events.data, &meds.data, &cxr, &ecg, &metadata, window_h);
    Ok((build, events.warnings.len() + meds.warnings.len()))
}

pub fn run_cohort(cfg: &RunConfig) -> Result<CohortSummary> {
    mkdir(&cfg.out_dir)?;
    let (build, warnings) = load_cohort_inputs(&cfg.data_dir, cfg.cohort.window_h)?;
    let keyed: Vec<(String, u8)> = build.instances.iter().map(|i| (i.stay.stay_id.clone(), i.stay.label_mortality)).collect();
    let split = split_stratified(&keyed, cfg.cohort.fractions, cfg.cohort.split_seed)?;
    let by_id: BTreeMap<&str, &CohortInstance> = build.instances.iter().map(|i| (i.stay.stay_id.as_str(), i)).collect();

    let train_meds: Vec<&[crate::ingest::MedicationEvent]> = split.train.iter().map(|id| by_id[id.as_str()].meds.as_slice()).collect();
    let stats = MedicationStats::fit(
        train_meds,
        &MedicationCatalog::standard(),
        cfg.cohort.window_h,
        cfg.cohort.split_seed,
        format!("train split of {} stays", split.train.len()),
    );
    stats.save(&cfg.out_dir.join(MED_STATS_FILE))?;
    if cfg.model.text {
        let include = cfg.model.task == Task::Mortality;
        let corpus: Vec<String> = split.train.iter().map(|id| serialize_metadata(&by_id[id.as_str()].metadata, include).text).collect();
        BpeModel::train(&corpus, cfg.model.text_encoder.bpe_vocab_size)?.save(&cfg.out_dir.join(BPE_FILE))?;
    }
    let positives = split.parts().map(|p| p.iter().filter(|id| by_id[id.as_str()].stay.label_mortality == 1).count());
    write_json(&cfg.out_dir.join(COHORT_FILE), &build)?;
    write_json(&cfg.out_dir.join(SPLIT_FILE), &split)?;
    Ok(CohortSummary {
        instances: build.instances.len(),
        excluded: build.excluded.len(),
        warnings,
        train: split.train.len(),
        val: split.val.len(),
        test: split.test.len(),
        positives,
        with_ecg: build.instances.iter().filter(|i| i.ecg.is_some()).count(),
    })
}

pub fn load_cohort(out_dir: &Path) -> Result<(CohortBuild, CohortSplit)> {
    Ok((read_json(&out_dir.join(COHORT_FILE))?, read_json(&out_dir.join(SPLIT_FILE))?))
}

// ---------------------------------------------------------------- render

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderSummary {
    pub rendered: usize,
}

pub fn image_path(out_dir: &Path, stay_id: &str, m: Modality) -> PathBuf {
    out_dir.join("images").join(format!("{stay_id}.{}.png", m.file_tag()))
}

/// All four modality images of one instance, in fusion order.
pub fn render_instance(cfg: &RunConfig, inst: &CohortInstance, stats: &MedicationStats) -> Result<[Canvas; 4]> {
    let enc = &cfg.encode;
    let clinical = render_clinical(&inst.events, &ClinicalCatalog::standard(), enc)?;
    let meds = render_medications(&inst.meds, &MedicationCatalog::standard(), stats, enc)?;
    let cxr = render_cxr(&cfg.data_dir.join(&inst.cxr.image_path), enc)?;
    let ecg = match &inst.ecg {
        Some(r) => {
            let rec = parse_ecg(&cfg.data_dir.join(&r.header_path), &cfg.data_dir.join(&r.data_path))?;
            render_ecg(&preprocess_ecg(&rec, enc.ecg_target_hz, enc.ecg_duration_s)?, enc)?
        }
        None => render_missing_modality(enc),
    };
    Ok([clinical, meds, cxr, ecg])
}

pub fn run_render(cfg: &RunConfig) -> Result<RenderSummary> {
    let (build, _) = load_cohort(&cfg.out_dir)?;
    let stats = MedicationStats::load(&cfg.out_dir.join(MED_STATS_FILE))?;
    mkdir(&cfg.out_dir.join("images"))?;
    mkdir(&cfg.out_dir.join("prompts"))?;
    let include = cfg.model.task == Task::Mortality;
    build
        .instances
        .par_iter()
        .map(|inst| {
            let id = &inst.stay.stay_id;
            let imgs = render_instance(cfg, inst, &stats)?;
            for (m, img) in Modality::FUSION_ORDER.iter().zip(&imgs) {
                img.save_png(&image_path(&cfg.out_dir, id, *m))?;
            }
            let prompt = cfg.out_dir.join("prompts").join(format!("{id}.prompt.txt"));
            std::fs::write(&prompt, serialize_metadata(&inst.metadata, include).text).map_err(|e| Error::io(&prompt, e))
        })
        .collect::<Result<Vec<()>>>()?;
    Ok(RenderSummary { rendered: build.instances.len() })
}

// ---------------------------------------------------------------- examples

fn fit_canvas(c: Canvas, size: usize) -> Canvas {
    if c.width() as usize == size && c.height() as usize == size {
        return c;
    }
    let (w, h) = (c.width(), c.height());
    let img = image::RgbImage::from_raw(w, h, c.into_pixels()).expect("canvas buffer matches its size");
    let img = image::imageops::resize(&img, size as u32, size as u32, image::imageops::FilterType::Triangle);
    Canvas::from_rgb_bytes(size as u32, size as u32, img.into_raw(), WHITE)
}

pub fn labels_for(inst: &CohortInstance, task: Task) -> Vec<f64> {
    match task {
        Task::Mortality => vec![f64::from(inst.stay.label_mortality)],
        Task::Phenotyping => inst.stay.label_phenotypes.iter().map(|&p| f64::from(p)).collect(),
    }
}

/// Loads rendered images (and tokens when text is on) for the given stays.
pub fn load_examples(cfg: &RunConfig, build: &CohortBuild, ids: &[String], bpe: Option<&BpeModel>) -> Result<Vec<Example>> {
    let by_id: BTreeMap<&str, &CohortInstance> = build.instances.iter().map(|i| (i.stay.stay_id.as_str(), i)).collect();
    let mods = cfg.modalities()?;
    let size = cfg.model.vision.image_size;
    let include = cfg.model.task == Task::Mortality;
    ids.par_iter()
        .map(|id| {
            let inst = by_id.get(id.as_str()).ok_or_else(|| Error::Validation(format!("stay {id} is not in the cohort")))?;
            let images = mods
                .iter()
                .map(|&m| Canvas::load_png(&image_path(&cfg.out_dir, id, m)).map(|c| fit_canvas(c, size)))
                .collect::<Result<Vec<_>>>()?;
            let tokens = bpe.map(|b| tokenize(&serialize_metadata(&inst.metadata, include).text, b, cfg.model.text_encoder.context_length));
            Ok(Example { id: id.clone(), images, tokens, labels: labels_for(inst, cfg.model.task) })
        })
        .collect()
}

fn load_bpe(cfg: &RunConfig) -> Result<Option<BpeModel>> {
    cfg.model.text.then(|| BpeModel::load(&cfg.out_dir.join(BPE_FILE))).transpose()
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub n_params: usize,
    pub best_epoch: usize,
    pub best_val_auroc: Option<f64>,
    pub history: Vec<model::EpochRecord>,
    pub init_hash: String,
    pub final_hash: String,
    pub checkpoint: PathBuf,
}

pub fn run_train(cfg: &RunConfig) -> Result<TrainSummary> {
    let (build, split) = load_cohort(&cfg.out_dir)?;
    let bpe = load_bpe(cfg)?;
    let train_set = load_examples(cfg, &build, &split.train, bpe.as_ref())?;
    let val_set = load_examples(cfg, &build, &split.val, bpe.as_ref())?;
    let mut model = FusionModel::new(cfg.model_config(bpe.as_ref().map(BpeModel::vocab_size))?)?;
    log::info!("model has {} parameters", model.n_params());
    let tc = cfg.train.to_train_config();
    let out = model::train(&mut model, &train_set, &val_set, &tc, Some(&cfg.out_dir.join(HISTORY_FILE)))?;
    let ckpt = cfg.out_dir.join(CHECKPOINT_FILE);
    save_checkpoint(&ckpt, &model, Some(&out.optimizer), out.best_epoch, tc.seed, &out.thresholds)?;
    Ok(TrainSummary {
        n_params: model.n_params(),
        best_epoch: out.best_epoch,
        best_val_auroc: out.history[out.best_epoch].val_auroc,
        history: out.history,
        init_hash: out.init_hash,
        final_hash: out.final_hash,
        checkpoint: ckpt,
    })
}

// ---------------------------------------------------------------- eval

/// Loads the run's checkpoint, refusing one trained under a different model section.
pub fn load_run_model(cfg: &RunConfig) -> Result<(FusionModel, CheckpointHeader)> {
    let (model, header) = load_checkpoint(&cfg.out_dir.join(CHECKPOINT_FILE))?;
    let mods = cfg.modalities()?;
    if model.config.modalities != mods || model.config.text.is_some() != cfg.model.text || model.config.n_outputs != cfg.model.task.n_outputs() {
        return Err(Error::Validation(format!(
            "checkpoint was trained for modalities {:?} (text: {}, {} outputs); the config asks for {:?} (text: {}, {} outputs)",
            model.config.modalities,
            model.config.text.is_some(),
            model.config.n_outputs,
            mods,
            cfg.model.text,
            cfg.model.task.n_outputs()
        )));
    }
    Ok((model, header))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub split: String,
    pub n: usize,
    pub metrics: MetricReport,
    pub params_sha256: String,
    pub predictions: PathBuf,
}

/// Test-split probabilities (row-major, `n × n_outputs`) with their examples.
pub fn predict_split(cfg: &RunConfig, model: &FusionModel, ids: &[String]) -> Result<(Vec<Example>, Vec<f64>)> {
    let (build, _) = load_cohort(&cfg.out_dir)?;
    let bpe = load_bpe(cfg)?;
    let examples = load_examples(cfg, &build, ids, bpe.as_ref())?;
    let scores = model::predict(model, &examples)?;
    Ok((examples, scores))
}

pub fn run_eval(cfg: &RunConfig) -> Result<EvalSummary> {
    let (_, split) = load_cohort(&cfg.out_dir)?;
    let (model, header) = load_run_model(cfg)?;
    let (examples, scores) = predict_split(cfg, &model, &split.test)?;
    let labels = model::train::label_matrix(&examples);
    let k = model.config.n_outputs;
    let metrics = evaluate(&scores, &labels, k, &header.thresholds)?;
    let path = cfg.out_dir.join(PREDICTIONS_FILE);
    write_predictions(&path, &examples, &scores, k)?;
    Ok(EvalSummary { split: "test".into(), n: examples.len(), metrics, params_sha256: header.params_sha256, predictions: path })
}

fn write_predictions(path: &Path, examples: &[Example], scores: &[f64], k: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    let csv_err = |e: csv::Error| Error::Validation(format!("{}: {e}", path.display()));
    w.write_record(["stay_id", "output", "label", "score"]).map_err(csv_err)?;
    for (i, ex) in examples.iter().enumerate() {
        for j in 0..k {
            w.write_record([ex.id.clone(), j.to_string(), format!("{}", ex.labels[j]), format!("{}", scores[i * k + j])])
                .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub stay_id: String,
    pub output: usize,
    pub label: u8,
    pub score: f64,
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    let file = path.display().to_string();
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::parse(&file, line, e.to_string()))?;
            let field = |k: usize| rec.get(k).ok_or_else(|| Error::parse(&file, line, "missing column"));
            let num = |k: usize| -> Result<f64> { field(k)?.parse().map_err(|_| Error::parse(&file, line, "not a number")) };
            Ok(PredictionRow {
                stay_id: field(0)?.to_string(),
                output: field(1)?.parse().map_err(|_| Error::parse(&file, line, "bad output index"))?,
                label: u8::from(num(2)? >= 0.5),
                score: num(3)?,
            })
        })
        .collect()
}

// ---------------------------------------------------------------- compare

pub fn run_compare(cfg: &RunConfig) -> Result<SignificanceRecord> {
    let c = cfg.compare.as_ref().ok_or_else(|| Error::Config("the [compare] section is required for compare".into()))?;
    let a = read_predictions(&c.a)?;
    let b = read_predictions(&c.b)?;
    let key = |r: &PredictionRow| (r.stay_id.clone(), r.output);
    let b_map: BTreeMap<_, &PredictionRow> = b.iter().map(|r| (key(r), r)).collect();
    let (mut sa, mut sb, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    for r in a.iter().filter(|r| r.output == 0) {
        let other = b_map
            .get(&key(r))
            .ok_or_else(|| Error::Validation(format!("stay {} is missing from {}", r.stay_id, c.b.display())))?;
        if other.label != r.label {
            return Err(Error::Validation(format!("label of stay {} differs between prediction files", r.stay_id)));
        }
        sa.push(r.score);
        sb.push(other.score);
        labels.push(r.label);
    }
    compare_methods(&sa, &sb, &labels, c.n_boot, c.seed)
}

// ---------------------------------------------------------------- explain

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainSummary {
    pub instances: usize,
    pub overlays: usize,
    pub text_files: usize,
    pub dir: PathBuf,
}

/// Saliency maps for every image encoder, plus text token weights when present.
pub fn explain_example(
    model: &FusionModel,
    input: &ModelInput,
    mode: SaliencyMode,
    bpe: Option<&BpeModel>,
) -> Result<(Vec<SaliencyMap>, Option<Vec<TokenWeight>>)> {
    let (_, cache) = model.forward(input)?;
    let maps = model
        .arch
        .vision
        .iter()
        .zip(&cache.vision)
        .zip(&input.images)
        .map(|((enc, c), img)| cls_attention_map(&AttentionStack::from_cache(c, enc.is_windowed()), mode, img.width, img.height))
        .collect::<Result<Vec<_>>>()?;
    let text = match (&cache.text, &input.tokens, bpe) {
        (Some(c), Some(t), Some(b)) => Some(text_attention(&AttentionStack::from_cache(c, false), t, b)?),
        _ => None,
    };
    Ok((maps, text))
}

pub fn run_explain(cfg: &RunConfig) -> Result<ExplainSummary> {
    let (build, split) = load_cohort(&cfg.out_dir)?;
    let (model, _) = load_run_model(cfg)?;
    let bpe = load_bpe(cfg)?;
    let ids: Vec<String> = split.test.iter().take(cfg.explain.max_instances).cloned().collect();
    let examples = load_examples(cfg, &build, &ids, bpe.as_ref())?;
    let dir = cfg.out_dir.join("explain");
    mkdir(&dir)?;
    let mods = cfg.modalities()?;
    let counts = examples
        .par_iter()
        .map(|ex| {
            let (maps, text) = explain_example(&model, &ex.input()?, cfg.explain.mode, bpe.as_ref())?;
            for ((m, map), img) in mods.iter().zip(&maps).zip(&ex.images) {
                overlay(img, map, cfg.explain.alpha)?.save_png(&dir.join(format!("{}.{}.attn.png", ex.id, m.file_tag())))?;
            }
            if let Some(t) = &text {
                let p = dir.join(format!("{}.text.attn.json", ex.id));
                let mut f = std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
                f.write_all(serde_json::to_string_pretty(t)?.as_bytes()).map_err(|e| Error::io(&p, e))?;
            }
            Ok((maps.len(), usize::from(text.is_some())))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExplainSummary {
        instances: examples.len(),
        overlays: counts.iter().map(|c| c.0).sum(),
        text_files: counts.iter().map(|c| c.1).sum(),
        dir,
    })
}

/// Normalized input for a canvas at the model's image size.
pub fn model_input(canvases: Vec<Canvas>, size: usize) -> Result<ModelInput> {
    let images = canvases
        .into_iter()
        .map(|c| normalize_image(&fit_canvas(c, size), IMAGENET_MEAN, IMAGENET_STD))
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelInput { images, tokens: None })
}
