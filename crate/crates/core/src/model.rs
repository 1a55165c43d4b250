//! Model composition: encoder plus attribute projection plus signature
//! matrices (the attribute-space model), and the shared-inventory baseline.
//!
//! The attribute-space model computes per-frame phoneme logits as a pure
//! two-stage linear map: attribute logits `g_t = V h_t`, phoneme logits
//! `l_t = S g_t`, with no bias or nonlinearity in between. `S` is a constant
//! binary matrix per language and receives no gradient; retargeting to a new
//! language swaps in a freshly built `S'` and touches nothing else.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::catalog::{AttributeCatalog, BasePhonemeTable};
use crate::ctc::{greedy_decode, LogitSeq};
use crate::encoder::{self, EncoderConfig, EncoderParams, HiddenSequence};
use crate::error::{Error, Result};
use crate::numerics::{softmax, Mat};
use crate::scalar::Scalar;
use crate::signature::{PhonemeInventory, SignatureMatrix};
use crate::xsampa::Phoneme;

/// The linear map from hidden space to attribute logits (`a x d`, no bias).
#[derive(Clone, Debug, PartialEq)]
pub struct AttributeProjection<S> {
    pub weights: Mat<S>,
}

/// Attribute-space acoustic model with per-language signature matrices.
#[derive(Clone, Debug)]
pub struct UpmModel<S> {
    pub encoder: EncoderParams<S>,
    pub projection: AttributeProjection<S>,
    pub catalog: AttributeCatalog,
    pub table: BasePhonemeTable,
    pub signatures: BTreeMap<String, SignatureMatrix>,
}

impl<S: Scalar> UpmModel<S> {
    /// Fresh model with seeded uniform initialization; no languages are
    /// registered yet.
    pub fn init(
        catalog: AttributeCatalog,
        table: BasePhonemeTable,
        config: EncoderConfig,
        rng: &mut impl Rng,
    ) -> Self {
        let encoder = EncoderParams::init(config, rng);
        let d = config.hidden_dim();
        let s = 1.0 / (d as f64).sqrt();
        let weights = Mat::from_fn(catalog.len(), d, |_, _| S::of(rng.gen_range(-s..=s)));
        UpmModel {
            encoder,
            projection: AttributeProjection { weights },
            catalog,
            table,
            signatures: BTreeMap::new(),
        }
    }

    /// Build and register the signature matrix of an inventory, replacing
    /// any previous signature for the same language.
    pub fn add_language(&mut self, inv: &PhonemeInventory) -> Result<()> {
        let sig = SignatureMatrix::build(inv, &self.catalog)?;
        self.signatures.insert(inv.language().to_string(), sig);
        Ok(())
    }

    pub fn signature(&self, language: &str) -> Result<&SignatureMatrix> {
        self.signatures
            .get(language)
            .ok_or_else(|| Error::UnknownLanguage {
                language: language.to_string(),
            })
    }

    pub fn encode(&self, features: &Mat<S>) -> Result<HiddenSequence<S>> {
        encoder::forward(&self.encoder, features)
    }

    /// Attribute logits for every frame: `h V^T`, a `T x a` matrix.
    pub fn attribute_logits(&self, hidden: &Mat<S>) -> Result<Mat<S>> {
        hidden.matmul(&self.projection.weights.transpose())
    }

    /// Phoneme logits for the frames of an already-encoded sequence.
    pub fn logits_from_hidden(&self, hidden: &Mat<S>, language: &str) -> Result<LogitSeq<S>> {
        let sig = self.signature(language)?;
        let attr = self.attribute_logits(hidden)?;
        let logits = attr.matmul(&sig.to_mat::<S>().transpose())?;
        Ok(LogitSeq::new(logits))
    }

    /// Per-frame phoneme logits `l_t = S V h_t` over the language's
    /// inventory plus blank.
    pub fn logits(&self, features: &Mat<S>, language: &str) -> Result<LogitSeq<S>> {
        let hidden = self.encode(features)?;
        self.logits_from_hidden(hidden.values(), language)
    }

    /// Row-stochastic `T x (z + 1)` posterior matrix.
    pub fn posterior(&self, features: &Mat<S>, language: &str) -> Result<Mat<S>> {
        let logits = self.logits(features, language)?;
        let mut out = Mat::zeros(logits.frames(), logits.values().cols());
        for t in 0..logits.frames() {
            out.row_mut(t)
                .copy_from_slice(&softmax(logits.values().row(t)));
        }
        Ok(out)
    }

    /// Zero-shot retarget: returns a model that additionally carries the
    /// signature of `inv`. Learned parameters are bitwise untouched.
    pub fn retarget(&self, inv: &PhonemeInventory) -> Result<Self> {
        let mut out = self.clone();
        out.add_language(inv)?;
        Ok(out)
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.projection.weights.data().len()
    }

    /// Learned parameters in canonical order: encoder, then projection
    /// row-major.
    pub fn param_vec(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.param_count());
        self.encoder.flatten_into(&mut out);
        out.extend_from_slice(self.projection.weights.data());
        out
    }

    pub fn assign_param_vec(&mut self, flat: &[S]) {
        let n = self.encoder.param_count();
        self.encoder.assign_flat(&flat[..n]);
        self.projection
            .weights
            .data_mut()
            .copy_from_slice(&flat[n..]);
    }
}

/// Multilingual baseline: the same encoder with a single output layer over
/// one shared phoneme inventory (plus blank).
#[derive(Clone, Debug)]
pub struct BaselineModel<S> {
    pub encoder: EncoderParams<S>,
    pub output: Mat<S>,
    pub shared_inventory: PhonemeInventory,
    pub catalog: AttributeCatalog,
    pub table: BasePhonemeTable,
}

impl<S: Scalar> BaselineModel<S> {
    pub fn init(
        catalog: AttributeCatalog,
        table: BasePhonemeTable,
        config: EncoderConfig,
        shared_inventory: PhonemeInventory,
        rng: &mut impl Rng,
    ) -> Self {
        let encoder = EncoderParams::init(config, rng);
        let d = config.hidden_dim();
        let s = 1.0 / (d as f64).sqrt();
        let output = Mat::from_fn(shared_inventory.len() + 1, d, |_, _| {
            S::of(rng.gen_range(-s..=s))
        });
        BaselineModel {
            encoder,
            output,
            shared_inventory,
            catalog,
            table,
        }
    }

    pub fn encode(&self, features: &Mat<S>) -> Result<HiddenSequence<S>> {
        encoder::forward(&self.encoder, features)
    }

    pub fn logits_from_hidden(&self, hidden: &Mat<S>) -> Result<LogitSeq<S>> {
        Ok(LogitSeq::new(hidden.matmul(&self.output.transpose())?))
    }

    /// Direct phoneme logits over the fixed shared inventory plus blank.
    pub fn logits(&self, features: &Mat<S>) -> Result<LogitSeq<S>> {
        let hidden = self.encode(features)?;
        self.logits_from_hidden(hidden.values())
    }

    pub fn posterior(&self, features: &Mat<S>) -> Result<Mat<S>> {
        let logits = self.logits(features)?;
        let mut out = Mat::zeros(logits.frames(), logits.values().cols());
        for t in 0..logits.frames() {
            out.row_mut(t)
                .copy_from_slice(&softmax(logits.values().row(t)));
        }
        Ok(out)
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.output.data().len()
    }

    pub fn param_vec(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.param_count());
        self.encoder.flatten_into(&mut out);
        out.extend_from_slice(self.output.data());
        out
    }

    pub fn assign_param_vec(&mut self, flat: &[S]) {
        let n = self.encoder.param_count();
        self.encoder.assign_flat(&flat[..n]);
        self.output.data_mut().copy_from_slice(&flat[n..]);
    }
}

/// Either model kind, as stored in a checkpoint.
#[derive(Clone, Debug)]
pub enum Model<S> {
    Upm(UpmModel<S>),
    Baseline(BaselineModel<S>),
}

impl<S: Scalar> Model<S> {
    pub fn encoder_config(&self) -> EncoderConfig {
        match self {
            Model::Upm(m) => m.encoder.config,
            Model::Baseline(m) => m.encoder.config,
        }
    }

    pub fn catalog(&self) -> &AttributeCatalog {
        match self {
            Model::Upm(m) => &m.catalog,
            Model::Baseline(m) => &m.catalog,
        }
    }

    pub fn table(&self) -> &BasePhonemeTable {
        match self {
            Model::Upm(m) => &m.table,
            Model::Baseline(m) => &m.table,
        }
    }

    /// Greedy transcription of one utterance. The baseline always decodes
    /// over its shared inventory; `language` selects the signature for the
    /// attribute-space model.
    pub fn transcribe(&self, features: &Mat<S>, language: &str) -> Result<Vec<Phoneme>> {
        match self {
            Model::Upm(m) => {
                let logits = m.logits(features, language)?;
                let sig = m.signature(language)?;
                let decoded = greedy_decode(&logits);
                Ok(decoded.labels().iter().map(|&r| sig.phoneme(r)).collect())
            }
            Model::Baseline(m) => {
                let logits = m.logits(features)?;
                let decoded = greedy_decode(&logits);
                Ok(decoded
                    .labels()
                    .iter()
                    .map(|&r| m.shared_inventory.phonemes()[r].clone())
                    .collect())
            }
        }
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"ZPHM";
const CHECKPOINT_VERSION: u32 = 1;

fn push_section(buf: &mut Vec<u8>, bytes: &[u8]) {
    buf.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
    buf.extend_from_slice(bytes);
}

fn floats_to_bytes<S: Scalar>(values: &[S]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 8);
    for &v in values {
        out.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    out
}

fn bytes_to_floats<S: Scalar>(bytes: &[u8]) -> Result<Vec<S>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::FormatVersionMismatch {
            msg: "float section length is not a multiple of 8".into(),
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| S::of(f64::from_le_bytes(c.try_into().unwrap())))
        .collect())
}

fn config_text(mode: &str, config: EncoderConfig) -> String {
    format!(
        "mode = {mode}\ninput_dim = {}\nlayers = {}\ncells_per_direction = {}\n",
        config.input_dim, config.layers, config.cells_per_direction
    )
}

fn parse_config_text(text: &str) -> Result<(String, EncoderConfig)> {
    let mut mode = None;
    let mut input_dim = None;
    let mut layers = None;
    let mut cells = None;
    for line in text.lines() {
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::FormatVersionMismatch {
                msg: format!("bad config line {line:?}"),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        let bad = |k: &str| Error::FormatVersionMismatch {
            msg: format!("bad config value for {k}"),
        };
        match key {
            "mode" => mode = Some(value.to_string()),
            "input_dim" => input_dim = Some(value.parse().map_err(|_| bad(key))?),
            "layers" => layers = Some(value.parse().map_err(|_| bad(key))?),
            "cells_per_direction" => cells = Some(value.parse().map_err(|_| bad(key))?),
            _ => {
                return Err(Error::FormatVersionMismatch {
                    msg: format!("unknown config key {key:?}"),
                })
            }
        }
    }
    match (mode, input_dim, layers, cells) {
        (Some(m), Some(i), Some(l), Some(c)) => Ok((m, EncoderConfig::new(i, l, c))),
        _ => Err(Error::FormatVersionMismatch {
            msg: "incomplete checkpoint config".into(),
        }),
    }
}

/// Serialize a model. All floating values are stored as IEEE-754 64-bit
/// little-endian; save → load → save is byte-identical.
pub fn save_checkpoint<S: Scalar>(model: &Model<S>, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());

    let catalog = model.catalog();
    push_section(&mut buf, catalog.to_tsv().as_bytes());
    push_section(&mut buf, model.table().to_tsv(catalog).as_bytes());

    match model {
        Model::Upm(m) => {
            push_section(&mut buf, config_text("upm", m.encoder.config).as_bytes());
            push_section(&mut buf, &floats_to_bytes(&m.encoder.flatten()));
            push_section(&mut buf, &floats_to_bytes(m.projection.weights.data()));
            let mut sigs = String::new();
            sigs.push_str(&format!("{}\n", m.signatures.len()));
            for (language, sig) in &m.signatures {
                sigs.push_str(language);
                sigs.push('\n');
                sigs.push_str(&sig.to_text());
            }
            push_section(&mut buf, sigs.as_bytes());
        }
        Model::Baseline(m) => {
            push_section(&mut buf, config_text("baseline", m.encoder.config).as_bytes());
            push_section(&mut buf, &floats_to_bytes(&m.encoder.flatten()));
            push_section(&mut buf, &floats_to_bytes(m.output.data()));
            let mut inv = String::new();
            inv.push_str(m.shared_inventory.language());
            inv.push('\n');
            inv.push_str(&format!("{}\n", m.shared_inventory.len()));
            for p in m.shared_inventory.phonemes() {
                inv.push_str(p.as_str());
                inv.push('\n');
            }
            push_section(&mut buf, inv.as_bytes());
        }
    }

    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

struct SectionReader {
    bytes: Vec<u8>,
    pos: usize,
}

impl SectionReader {
    fn next(&mut self) -> Result<&[u8]> {
        if self.pos + 8 > self.bytes.len() {
            return Err(Error::FormatVersionMismatch {
                msg: "truncated checkpoint: missing section header".into(),
            });
        }
        let len = u64::from_le_bytes(self.bytes[self.pos..self.pos + 8].try_into().unwrap());
        self.pos += 8;
        let len: usize = len.try_into().map_err(|_| Error::FormatVersionMismatch {
            msg: "section length overflow".into(),
        })?;
        if self.pos + len > self.bytes.len() {
            return Err(Error::FormatVersionMismatch {
                msg: "truncated checkpoint: section exceeds file".into(),
            });
        }
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn next_text(&mut self) -> Result<String> {
        let bytes = self.next()?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::FormatVersionMismatch {
            msg: "section is not UTF-8".into(),
        })
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::FormatVersionMismatch {
                msg: "trailing bytes after final section".into(),
            });
        }
        Ok(())
    }
}

/// Load a model saved by [`save_checkpoint`]. Never yields a partial model:
/// every structural problem is an error.
pub fn load_checkpoint<S: Scalar>(path: &Path) -> Result<Model<S>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::FormatVersionMismatch {
            msg: "missing ZPHM magic".into(),
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::FormatVersionMismatch {
            msg: format!("unsupported version {version}"),
        });
    }

    let mut reader = SectionReader { bytes, pos: 8 };
    let catalog_text = reader.next_text()?;
    let table_text = reader.next_text()?;
    let config_text = reader.next_text()?;
    let encoder_bytes = reader.next()?.to_vec();
    let head_bytes = reader.next()?.to_vec();
    let tail_text = reader.next_text()?;
    reader.finish()?;

    let catalog = AttributeCatalog::from_tsv(&catalog_text, "<checkpoint>")?;
    let table = BasePhonemeTable::from_tsv(&table_text, &catalog, "<checkpoint>")?;
    let (mode, config) = parse_config_text(&config_text)?;

    let mut encoder = EncoderParams::zeros(config);
    let encoder_values: Vec<S> = bytes_to_floats(&encoder_bytes)?;
    if encoder_values.len() != encoder.param_count() {
        return Err(Error::FormatVersionMismatch {
            msg: format!(
                "encoder section holds {} values, config expects {}",
                encoder_values.len(),
                encoder.param_count()
            ),
        });
    }
    encoder.assign_flat(&encoder_values);
    let head: Vec<S> = bytes_to_floats(&head_bytes)?;
    let d = config.hidden_dim();

    match mode.as_str() {
        "upm" => {
            let a = catalog.len();
            if head.len() != a * d {
                return Err(Error::FormatVersionMismatch {
                    msg: "projection size does not match catalog and encoder".into(),
                });
            }
            let weights = Mat::from_vec(a, d, head);
            let mut lines = tail_text.lines();
            let count: usize = lines
                .next()
                .and_then(|l| l.parse().ok())
                .ok_or_else(|| Error::FormatVersionMismatch {
                    msg: "bad signature count".into(),
                })?;
            let mut signatures = BTreeMap::new();
            for _ in 0..count {
                let language = lines
                    .next()
                    .ok_or_else(|| Error::FormatVersionMismatch {
                        msg: "missing signature language".into(),
                    })?
                    .to_string();
                let sig = SignatureMatrix::parse_lines(&mut lines, "<checkpoint>")?;
                if sig.cols() != a || sig.blank_col() != catalog.blank().0 {
                    return Err(Error::FormatVersionMismatch {
                        msg: format!("signature for {language:?} does not match catalog"),
                    });
                }
                signatures.insert(language, sig);
            }
            Ok(Model::Upm(UpmModel {
                encoder,
                projection: AttributeProjection { weights },
                catalog,
                table,
                signatures,
            }))
        }
        "baseline" => {
            let mut lines = tail_text.lines();
            let language = lines
                .next()
                .ok_or_else(|| Error::FormatVersionMismatch {
                    msg: "missing inventory language".into(),
                })?
                .to_string();
            let z: usize = lines
                .next()
                .and_then(|l| l.parse().ok())
                .ok_or_else(|| Error::FormatVersionMismatch {
                    msg: "bad inventory size".into(),
                })?;
            let mut phonemes = Vec::with_capacity(z);
            for _ in 0..z {
                let line = lines.next().ok_or_else(|| Error::FormatVersionMismatch {
                    msg: "missing inventory phoneme".into(),
                })?;
                phonemes.push(Phoneme::new(line)?);
            }
            if head.len() != (z + 1) * d {
                return Err(Error::FormatVersionMismatch {
                    msg: "output layer size does not match inventory and encoder".into(),
                });
            }
            let output = Mat::from_vec(z + 1, d, head);
            let shared_inventory = PhonemeInventory::new(language, phonemes, &table)?;
            Ok(Model::Baseline(BaselineModel {
                encoder,
                output,
                shared_inventory,
                catalog,
                table,
            }))
        }
        other => Err(Error::FormatVersionMismatch {
            msg: format!("unknown mode {other:?}"),
        }),
    }
}
