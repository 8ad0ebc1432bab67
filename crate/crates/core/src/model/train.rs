//! Mini-batch training with parallel per-example gradients and a fixed reduction order.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fusion::{backward_with, forward_with, FusionModel, ModelInput};
use super::loss::{bce_term, bce_term_grad, sigmoid};
use super::optim::AdamW;
use super::params::{Grads, ParamStore};
use crate::encode::{normalize_image, Canvas, IMAGENET_MEAN, IMAGENET_STD};
use crate::error::{Error, Result};
use crate::metrics;
use crate::text::TokenSequence;

/// Examples are summed sequentially inside fixed-size groups, then the group
/// sums are added in order, so the result does not depend on the thread count.
const REDUCE_GROUP: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    /// One canvas per configured modality, in fusion order.
    pub images: Vec<Canvas>,
    pub tokens: Option<TokenSequence>,
    pub labels: Vec<f64>,
}

impl Example {
    pub fn input(&self) -> Result<ModelInput> {
        let images = self
            .images
            .iter()
            .map(|c| normalize_image(c, IMAGENET_MEAN, IMAGENET_STD))
            .collect::<Result<Vec<_>>>()?;
        Ok(ModelInput { images, tokens: self.tokens.clone() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// One rate per epoch; overrides `learning_rate` when present.
    #[serde(default)]
    pub lr_schedule: Option<Vec<f64>>,
    #[serde(default = "default_wd")]
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

fn default_wd() -> f64 {
    3e-8
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        let rates: Vec<f64> = match &self.lr_schedule {
            Some(s) if s.len() != self.epochs => {
                return Err(Error::Config(format!("lr_schedule has {} entries for {} epochs", s.len(), self.epochs)))
            }
            Some(s) => s.clone(),
            None => vec![self.learning_rate],
        };
        if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("learning rates and weight decay must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn lr_for_epoch(&self, epoch: usize) -> f64 {
        self.lr_schedule.as_ref().map_or(self.learning_rate, |s| s[epoch])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auroc: Option<f64>,
    pub val_auprc: Option<f64>,
    pub val_balacc: Option<f64>,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub init_hash: String,
    pub final_hash: String,
    /// Balanced-accuracy thresholds fit on validation at the selected epoch.
    pub thresholds: Vec<f64>,
    pub optimizer: AdamW,
}

/// Mean loss and mean gradient over `batch`.
pub fn batch_gradient(model: &FusionModel, batch: &[&Example]) -> Result<(f64, Grads)> {
    let p = &model.params;
    let k = model.config.n_outputs;
    let partial: Vec<(f64, Grads)> = batch
        .par_chunks(REDUCE_GROUP)
        .map(|group| {
            let mut g = p.zeros_like();
            let mut loss = 0.0;
            for ex in group {
                loss += example_gradient(model, p, &mut g, ex)?;
            }
            Ok((loss, g))
        })
        .collect::<Result<_>>()?;
    let mut total = p.zeros_like();
    let mut loss = 0.0;
    for (l, g) in &partial {
        loss += l;
        total.add_assign(g);
    }
    let denom = (batch.len() * k) as f64;
    total.scale(1.0 / denom);
    check_finite(p, &total)?;
    Ok((loss / denom, total))
}

/// Summed loss of one example; unscaled gradient accumulated into `g`.
fn example_gradient(model: &FusionModel, p: &ParamStore, g: &mut Grads, ex: &Example) -> Result<f64> {
    if ex.labels.len() != model.config.n_outputs {
        return Err(Error::Shape(format!("{} labels for {} outputs", ex.labels.len(), model.config.n_outputs)));
    }
    let (logits, cache) = forward_with(&model.arch, p, &ex.input()?)?;
    let loss = logits.iter().zip(&ex.labels).map(|(&x, &y)| bce_term(x, y)).sum();
    let dlogits: Vec<f64> = logits.iter().zip(&ex.labels).map(|(&x, &y)| bce_term_grad(x, y)).collect();
    backward_with(&model.arch, p, g, &cache, &dlogits);
    Ok(loss)
}

fn check_finite(p: &ParamStore, g: &Grads) -> Result<()> {
    if let Some(i) = g.data.iter().position(|v| !v.is_finite()) {
        let name = p.tensor_of(i).map_or_else(|| format!("index {i}"), |t| t.name.clone());
        return Err(Error::NonFiniteGradient(name));
    }
    Ok(())
}

/// One optimizer step; returns the batch loss before the update.
pub fn train_step(model: &mut FusionModel, opt: &mut AdamW, batch: &[&Example], lr: f64) -> Result<f64> {
    let (loss, g) = batch_gradient(model, batch)?;
    opt.update(&mut model.params, &g, lr);
    Ok(loss)
}

/// Sigmoid probabilities, row-major `n × n_outputs`.
pub fn predict(model: &FusionModel, examples: &[Example]) -> Result<Vec<f64>> {
    let rows: Vec<Vec<f64>> = examples
        .par_iter()
        .map(|ex| Ok(model.predict_logits(&ex.input()?)?.into_iter().map(sigmoid).collect()))
        .collect::<Result<_>>()?;
    Ok(rows.concat())
}

pub fn label_matrix(examples: &[Example]) -> Vec<u8> {
    examples.iter().flat_map(|e| e.labels.iter().map(|&l| u8::from(l >= 0.5))).collect()
}

/// Validation metrics with thresholds fit on the same set.
pub fn validation_report(model: &FusionModel, val: &[Example]) -> Result<Option<metrics::MetricReport>> {
    if val.is_empty() {
        return Ok(None);
    }
    let scores = predict(model, val)?;
    let labels = label_matrix(val);
    let k = model.config.n_outputs;
    let report = metrics::fit_thresholds(&scores, &labels, k).and_then(|t| metrics::evaluate(&scores, &labels, k, &t));
    Ok(report.ok())
}

fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5348_5546_464c_4500u64.wrapping_add(epoch as u64));
    idx.shuffle(&mut rng);
    idx
}

/// Trains in place, leaving the best-validation-AUROC parameters in `model`.
///
/// The per-epoch history is appended to `log` as JSONL when given; on
/// divergence the history written so far stays on disk and an error is returned.
pub fn train(model: &mut FusionModel, train_set: &[Example], val: &[Example], cfg: &TrainConfig, log: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Validation("training set is empty".into()));
    }
    let mut log_file = log
        .map(|p| std::fs::File::create(p).map_err(|e| Error::io(p, e)))
        .transpose()?;
    let init_hash = model.params.sha256();
    let mut opt = AdamW::new(model.params.len(), cfg.weight_decay);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ParamStore, Vec<f64>)> = None;
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_for_epoch(epoch);
        let order = epoch_order(train_set.len(), cfg.seed, epoch);
        let (mut loss_sum, mut n_seen) = (0.0, 0usize);
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train_set[i]).collect();
            let loss = train_step(model, &mut opt, &batch, lr)?;
            if !loss.is_finite() || model.params.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged { epoch, step });
            }
            loss_sum += loss * batch.len() as f64;
            n_seen += batch.len();
        }
        let report = validation_report(model, val)?;
        let rec = EpochRecord {
            epoch,
            train_loss: loss_sum / n_seen as f64,
            val_auroc: report.as_ref().map(|r| r.auroc),
            val_auprc: report.as_ref().map(|r| r.auprc),
            val_balacc: report.as_ref().map(|r| r.bal_acc),
            lr,
        };
        log::info!("epoch {epoch}: loss {:.5} val auroc {:?}", rec.train_loss, rec.val_auroc);
        if let Some(f) = log_file.as_mut() {
            let line = serde_json::to_string(&rec)?;
            writeln!(f, "{line}").map_err(|e| Error::io(log.unwrap_or(Path::new("")), e))?;
        }
        let score = rec.val_auroc.unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|b| score > b.0) {
            let th = report.map_or_else(|| vec![0.5; model.config.n_outputs], |r| r.thresholds);
            best = Some((score, epoch, model.params.clone(), th));
        }
        history.push(rec);
    }
    let (_, best_epoch, params, thresholds) = best.expect("at least one epoch ran");
    model.params = params;
    Ok(TrainOutcome { history, best_epoch, init_hash, final_hash: model.params.sha256(), thresholds, optimizer: opt })
}
