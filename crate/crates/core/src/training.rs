//! Training: CTC objective with squared-norm regularization on the
//! attribute projection, optimized by plain SGD with global-norm gradient
//! clipping and uniform corpus sampling (pick a corpus uniformly, then a
//! batch from that corpus, so one signature applies per batch).
//!
//! The signature matrix is constant: gradients flow through it into the
//! projection and the encoder, but no update ever touches it.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{parse_kv, parse_value};
use crate::ctc::{ctc_loss, LabelSeq, LogitSeq};
use crate::data::{Corpus, Utterance};
use crate::encoder::{self, EncoderParams};
use crate::error::{Error, Result};
use crate::numerics::Mat;
use crate::scalar::Scalar;
use crate::model::{BaselineModel, UpmModel};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Weight on the squared Frobenius norm of the projection.
    pub reg_lambda: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    /// Global gradient norm cap; `inf` disables clipping.
    pub grad_clip_norm: f64,
    pub seed: u64,
    pub validation_fraction: f64,
    pub log_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.005,
            reg_lambda: 1e-4,
            batch_size: 4,
            max_steps: 1000,
            grad_clip_norm: 5.0,
            seed: 0,
            validation_fraction: 0.05,
            log_interval: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Error::parse("<train config>", 0, msg);
        // Zero is tolerated so a no-op run stays expressible; negative rates
        // are rejected.
        if !(self.learning_rate >= 0.0) {
            return Err(bad("learning_rate must be non-negative"));
        }
        if !(self.reg_lambda >= 0.0) {
            return Err(bad("reg_lambda must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(bad("batch_size must be positive"));
        }
        if !(self.grad_clip_norm > 0.0) {
            return Err(bad("grad_clip_norm must be positive (inf disables clipping)"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(bad("validation_fraction must lie in [0, 1)"));
        }
        if self.log_interval == 0 {
            return Err(bad("log_interval must be positive"));
        }
        Ok(())
    }

    /// Parse a `key = value` config file; unspecified keys keep their
    /// defaults. `grad_clip_norm = inf` disables clipping.
    pub fn from_config_text(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (key, value, line) in parse_kv(text, origin)? {
            match key.as_str() {
                "learning_rate" => cfg.learning_rate = parse_value(&value, &key, origin, line)?,
                "reg_lambda" => cfg.reg_lambda = parse_value(&value, &key, origin, line)?,
                "batch_size" => cfg.batch_size = parse_value(&value, &key, origin, line)?,
                "max_steps" => cfg.max_steps = parse_value(&value, &key, origin, line)?,
                "grad_clip_norm" => cfg.grad_clip_norm = parse_value(&value, &key, origin, line)?,
                "seed" => cfg.seed = parse_value(&value, &key, origin, line)?,
                "validation_fraction" => {
                    cfg.validation_fraction = parse_value(&value, &key, origin, line)?
                }
                "log_interval" => cfg.log_interval = parse_value(&value, &key, origin, line)?,
                _ => return Err(Error::parse(origin, line, format!("unknown key {key:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_config_text(&text, &path.display().to_string())
    }
}

/// Gradients of the attribute-space objective, shaped like the parameters.
#[derive(Clone, Debug)]
pub struct UpmGrads<S> {
    pub encoder: EncoderParams<S>,
    pub projection: Mat<S>,
}

impl<S: Scalar> UpmGrads<S> {
    fn flatten(&self) -> Vec<S> {
        let mut out = self.encoder.flatten();
        out.extend_from_slice(self.projection.data());
        out
    }
}

#[derive(Clone, Debug)]
pub struct BaselineGrads<S> {
    pub encoder: EncoderParams<S>,
    pub output: Mat<S>,
}

impl<S: Scalar> BaselineGrads<S> {
    fn flatten(&self) -> Vec<S> {
        let mut out = self.encoder.flatten();
        out.extend_from_slice(self.output.data());
        out
    }
}

fn transcript_labels<S: Scalar>(
    utt: &Utterance<S>,
    index: &HashMap<&str, usize>,
) -> Result<LabelSeq> {
    let mut labels = Vec::with_capacity(utt.transcript.len());
    for p in &utt.transcript {
        let Some(&row) = index.get(p.as_str()) else {
            return Err(Error::TranscriptPhonemeOutsideInventory {
                utterance: utt.id.clone(),
                phoneme: p.as_str().to_string(),
                language: utt.language.clone(),
            });
        };
        labels.push(row);
    }
    Ok(LabelSeq::new(labels))
}

fn tag_alignment_error(err: Error, utterance: &str) -> Error {
    match err {
        Error::ImpossibleAlignment {
            frames,
            labels,
            required,
            ..
        } => Error::ImpossibleAlignment {
            frames,
            labels,
            required,
            utterance: Some(utterance.to_string()),
        },
        other => other,
    }
}

/// Batch objective: mean CTC loss plus `reg_lambda * ||V||_F^2`, with exact
/// gradients for the encoder and the projection. The signature matrix gets
/// none.
pub fn objective_and_grads<S: Scalar>(
    model: &UpmModel<S>,
    batch: &[&Utterance<S>],
    cfg: &TrainConfig,
) -> Result<(S, UpmGrads<S>)> {
    assert!(!batch.is_empty(), "empty batch");
    let mut grads = UpmGrads {
        encoder: EncoderParams::zeros(model.encoder.config),
        projection: Mat::zeros(
            model.projection.weights.rows(),
            model.projection.weights.cols(),
        ),
    };
    let scale = S::of(1.0 / batch.len() as f64);
    let mut loss = S::zero();

    let mut grad_acc: Option<Vec<S>> = None;
    for utt in batch {
        let sig = model.signature(&utt.language)?;
        let index = sig.label_index();
        let labels = transcript_labels(utt, &index)?;
        let s_mat = sig.to_mat::<S>();

        let hidden = model.encode(&utt.features)?;
        let attr = model.attribute_logits(hidden.values())?;
        let logits = LogitSeq::new(attr.matmul(&s_mat.transpose())?);
        let ctc = ctc_loss(&logits, &labels).map_err(|e| tag_alignment_error(e, &utt.id))?;
        loss += scale * ctc.loss;

        // Chain rule through the two-stage linear map: the logit gradient
        // pulls back through S to attribute space, then splits into the
        // projection gradient and the hidden-state gradient.
        let grad_attr = ctc.grad_logits.matmul(&s_mat)?;
        let grad_v = grad_attr.transpose().matmul(hidden.values())?;
        let grad_hidden = grad_attr.matmul(&model.projection.weights)?;
        let (enc_grads, _) = encoder::backward(&model.encoder, &hidden, &grad_hidden)?;

        let mut flat = enc_grads.flatten();
        flat.extend_from_slice(grad_v.data());
        match &mut grad_acc {
            None => grad_acc = Some(flat),
            Some(acc) => {
                for (a, g) in acc.iter_mut().zip(&flat) {
                    *a += *g;
                }
            }
        }
    }

    let mut flat = grad_acc.expect("batch is non-empty");
    for g in &mut flat {
        *g *= scale;
    }
    let n_enc = grads.encoder.param_count();
    grads.encoder.assign_flat(&flat[..n_enc]);
    grads.projection.data_mut().copy_from_slice(&flat[n_enc..]);

    // Regularizer: reg_lambda * ||V||^2, gradient 2 * reg_lambda * V.
    let lambda = S::of(cfg.reg_lambda);
    loss += lambda * model.projection.weights.sum_sq();
    let two_lambda = S::of(2.0 * cfg.reg_lambda);
    for (g, &v) in grads
        .projection
        .data_mut()
        .iter_mut()
        .zip(model.projection.weights.data())
    {
        *g += two_lambda * v;
    }

    Ok((loss, grads))
}

/// Baseline batch objective: mean CTC loss only (the baseline has no
/// projection to regularize).
pub fn baseline_objective_and_grads<S: Scalar>(
    model: &BaselineModel<S>,
    batch: &[&Utterance<S>],
) -> Result<(S, BaselineGrads<S>)> {
    assert!(!batch.is_empty(), "empty batch");
    let index: HashMap<&str, usize> = model
        .shared_inventory
        .phonemes()
        .iter()
        .enumerate()
        .map(|(i, p)| (p.as_str(), i))
        .collect();
    let scale = S::of(1.0 / batch.len() as f64);
    let mut loss = S::zero();
    let mut grads = BaselineGrads {
        encoder: EncoderParams::zeros(model.encoder.config),
        output: Mat::zeros(model.output.rows(), model.output.cols()),
    };
    let mut grad_acc: Option<Vec<S>> = None;

    for utt in batch {
        let labels = transcript_labels(utt, &index)?;
        let hidden = model.encode(&utt.features)?;
        let logits = model.logits_from_hidden(hidden.values())?;
        let ctc = ctc_loss(&logits, &labels).map_err(|e| tag_alignment_error(e, &utt.id))?;
        loss += scale * ctc.loss;

        let grad_out = ctc.grad_logits.transpose().matmul(hidden.values())?;
        let grad_hidden = ctc.grad_logits.matmul(&model.output)?;
        let (enc_grads, _) = encoder::backward(&model.encoder, &hidden, &grad_hidden)?;

        let mut flat = enc_grads.flatten();
        flat.extend_from_slice(grad_out.data());
        match &mut grad_acc {
            None => grad_acc = Some(flat),
            Some(acc) => {
                for (a, g) in acc.iter_mut().zip(&flat) {
                    *a += *g;
                }
            }
        }
    }

    let mut flat = grad_acc.expect("batch is non-empty");
    for g in &mut flat {
        *g *= scale;
    }
    let n_enc = grads.encoder.param_count();
    grads.encoder.assign_flat(&flat[..n_enc]);
    grads.output.data_mut().copy_from_slice(&flat[n_enc..]);
    Ok((loss, grads))
}

/// Uniform corpus sampling: pick one corpus uniformly at random, then
/// `batch_size` utterances uniformly with replacement from it. Every batch
/// therefore shares a single language.
pub fn sample_batch<'a, S: Scalar>(
    corpora: &'a [Corpus<S>],
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<Vec<&'a Utterance<S>>> {
    if corpora.is_empty() {
        return Err(Error::EmptyCorpus {
            language: "<none>".into(),
        });
    }
    for corpus in corpora {
        if corpus.utterances.is_empty() {
            return Err(Error::EmptyCorpus {
                language: corpus.language.clone(),
            });
        }
    }
    let corpus = &corpora[rng.gen_range(0..corpora.len())];
    Ok((0..cfg.batch_size)
        .map(|_| &corpus.utterances[rng.gen_range(0..corpus.utterances.len())])
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryEntry {
    pub step: usize,
    pub train_loss: f64,
    /// NaN when the validation split is empty.
    pub val_loss: f64,
}

/// Deterministic train/validation split: a seeded shuffle per corpus, then
/// the last `ceil(fraction * n)` utterances (capped at `n - 1`) become
/// validation.
fn split_corpora<S: Scalar>(
    corpora: &[Corpus<S>],
    fraction: f64,
    rng: &mut impl Rng,
) -> (Vec<Corpus<S>>, Vec<Corpus<S>>) {
    let mut train = Vec::with_capacity(corpora.len());
    let mut val = Vec::new();
    for corpus in corpora {
        let n = corpus.utterances.len();
        let mut indices: Vec<usize> = (0..n).collect();
        indices.shuffle(rng);
        let n_val = ((fraction * n as f64).ceil() as usize).min(n.saturating_sub(1));
        let (train_idx, val_idx) = indices.split_at(n - n_val);
        let pick = |idx: &[usize]| Corpus {
            language: corpus.language.clone(),
            inventory: corpus.inventory.clone(),
            utterances: idx.iter().map(|&i| corpus.utterances[i].clone()).collect(),
        };
        train.push(pick(train_idx));
        if n_val > 0 {
            val.push(pick(val_idx));
        }
    }
    (train, val)
}

fn clip_gradient<S: Scalar>(flat: &mut [S], cap: f64) {
    if cap.is_infinite() {
        return;
    }
    let norm_sq = flat.iter().fold(S::zero(), |acc, &g| acc + g * g);
    let norm = norm_sq.sqrt().as_f64();
    if norm > cap {
        let scale = S::of(cap / norm);
        for g in flat {
            *g *= scale;
        }
    }
}

fn sgd_step<S: Scalar>(params: &mut Vec<S>, grads: &mut Vec<S>, cfg: &TrainConfig) {
    clip_gradient(grads, cfg.grad_clip_norm);
    let lr = S::of(cfg.learning_rate);
    for (p, &g) in params.iter_mut().zip(grads.iter()) {
        *p = *p - lr * g;
    }
}

fn mean_val_loss_upm<S: Scalar>(model: &UpmModel<S>, val: &[Corpus<S>]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for corpus in val {
        for utt in &corpus.utterances {
            let batch = [utt];
            // Validation reports the raw CTC loss, without the regularizer.
            let cfg = TrainConfig {
                reg_lambda: 0.0,
                ..TrainConfig::default()
            };
            let (loss, _) = objective_and_grads(model, &batch, &cfg)?;
            total += loss.as_f64();
            count += 1;
        }
    }
    Ok(if count == 0 {
        f64::NAN
    } else {
        total / count as f64
    })
}

fn mean_val_loss_baseline<S: Scalar>(model: &BaselineModel<S>, val: &[Corpus<S>]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for corpus in val {
        for utt in &corpus.utterances {
            let (loss, _) = baseline_objective_and_grads(model, &[utt])?;
            total += loss.as_f64();
            count += 1;
        }
    }
    Ok(if count == 0 {
        f64::NAN
    } else {
        total / count as f64
    })
}

/// Train the attribute-space model with plain SGD. Fully deterministic for
/// a fixed `(seed, config, corpora)`.
pub fn train<S: Scalar>(
    mut model: UpmModel<S>,
    corpora: &[Corpus<S>],
    cfg: &TrainConfig,
    mut progress: impl FnMut(&HistoryEntry),
) -> Result<(UpmModel<S>, Vec<HistoryEntry>)> {
    cfg.validate()?;
    for corpus in corpora {
        model.signature(&corpus.language)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (train_set, val_set) = split_corpora(corpora, cfg.validation_fraction, &mut rng);
    let mut history = Vec::new();

    for step in 1..=cfg.max_steps {
        let batch = sample_batch(&train_set, cfg, &mut rng)?;
        let (loss, grads) = objective_and_grads(&model, &batch, cfg)?;
        let mut flat_params = model.param_vec();
        let mut flat_grads = grads.flatten();
        sgd_step(&mut flat_params, &mut flat_grads, cfg);
        model.assign_param_vec(&flat_params);

        if step % cfg.log_interval == 0 || step == cfg.max_steps {
            let entry = HistoryEntry {
                step,
                train_loss: loss.as_f64(),
                val_loss: mean_val_loss_upm(&model, &val_set)?,
            };
            progress(&entry);
            history.push(entry);
        }
    }
    Ok((model, history))
}

/// Train the shared-inventory baseline: same loop, direct output layer, no
/// regularizer.
pub fn train_baseline<S: Scalar>(
    mut model: BaselineModel<S>,
    corpora: &[Corpus<S>],
    cfg: &TrainConfig,
    mut progress: impl FnMut(&HistoryEntry),
) -> Result<(BaselineModel<S>, Vec<HistoryEntry>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (train_set, val_set) = split_corpora(corpora, cfg.validation_fraction, &mut rng);
    let mut history = Vec::new();

    for step in 1..=cfg.max_steps {
        let batch = sample_batch(&train_set, cfg, &mut rng)?;
        let (loss, grads) = baseline_objective_and_grads(&model, &batch)?;
        let mut flat_params = model.param_vec();
        let mut flat_grads = grads.flatten();
        sgd_step(&mut flat_params, &mut flat_grads, cfg);
        model.assign_param_vec(&flat_params);

        if step % cfg.log_interval == 0 || step == cfg.max_steps {
            let entry = HistoryEntry {
                step,
                train_loss: loss.as_f64(),
                val_loss: mean_val_loss_baseline(&model, &val_set)?,
            };
            progress(&entry);
            history.push(entry);
        }
    }
    Ok((model, history))
}
