//! Dataset ingestion and the attribute-grounded synthetic generator.
//!
//! On disk a dataset is a TSV manifest (`utt_id, language, feature file,
//! transcript`), one `<language>.inv` inventory file per language next to
//! the manifest, and one binary feature file per utterance. Feature files
//! hold 32-bit floats; models convert to their own scalar on load.
//!
//! The synthetic generator draws one Gaussian prototype vector per
//! attribute and emits each phoneme as noisy frames around the mean of its
//! attributes' prototypes. Phonemes are therefore acoustically composed of
//! their attributes, which is exactly the structure a zero-shot model needs:
//! a held-out phoneme whose attributes all occur in training is recoverable
//! in principle without ever being observed.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::catalog::{AttrId, AttributeCatalog, BasePhonemeTable};
use crate::config::{parse_kv, parse_value};
use crate::error::{Error, Result};
use crate::numerics::Mat;
use crate::scalar::Scalar;
use crate::xsampa::{assign_attributes, Phoneme};

/// One labeled utterance: a feature matrix and its phoneme transcript.
#[derive(Clone, Debug)]
pub struct Utterance<S> {
    pub id: String,
    pub language: String,
    pub features: Mat<S>,
    pub transcript: Vec<Phoneme>,
}

/// All utterances of one language plus the language's declared inventory.
#[derive(Clone, Debug)]
pub struct Corpus<S> {
    pub language: String,
    pub inventory: Vec<Phoneme>,
    pub utterances: Vec<Utterance<S>>,
}

const FEATURE_MAGIC: &[u8; 4] = b"ZPHF";
const FEATURE_VERSION: u32 = 1;

/// Write a feature matrix: magic, version, `T`, `d_in` (u32 LE), then
/// `T * d_in` IEEE-754 32-bit little-endian values, row-major.
pub fn write_features<S: Scalar>(path: &Path, features: &Mat<S>) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + features.data().len() * 4);
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(features.rows() as u32).to_le_bytes());
    buf.extend_from_slice(&(features.cols() as u32).to_le_bytes());
    for &v in features.data() {
        buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_features<S: Scalar>(path: &Path) -> Result<Mat<S>> {
    let display = path.display().to_string();
    let bad = |msg: &str| Error::BadFeatureHeader {
        path: display.clone(),
        msg: msg.to_string(),
    };
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[..4] != FEATURE_MAGIC {
        return Err(bad("missing ZPHF magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FEATURE_VERSION {
        return Err(bad("unsupported version"));
    }
    let frames = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if frames == 0 || dim == 0 {
        return Err(bad("frame count and dimension must be positive"));
    }
    let payload = &bytes[16..];
    if payload.len() != frames * dim * 4 {
        return Err(bad("payload length does not match header"));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| S::of(f32::from_le_bytes(c.try_into().unwrap()) as f64))
        .collect();
    Ok(Mat::from_vec(frames, dim, data))
}

fn read_phoneme_lines(path: &Path) -> Result<Vec<Phoneme>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(Phoneme::new(line)?);
    }
    Ok(out)
}

/// Write one phoneme per line; used for inventories and train-union files.
pub fn write_phoneme_lines(path: &Path, phonemes: &[Phoneme]) -> Result<()> {
    let mut text = String::new();
    for p in phonemes {
        text.push_str(p.as_str());
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Read a phoneme-per-line file (inventory or train-union).
pub fn read_phoneme_file(path: &Path) -> Result<Vec<Phoneme>> {
    read_phoneme_lines(path)
}

/// Load a manifest dataset. Corpora come back grouped by language in order
/// of first appearance; feature paths resolve relative to the manifest.
pub fn load_dataset<S: Scalar>(manifest_path: &Path) -> Result<Vec<Corpus<S>>> {
    let origin = manifest_path.display().to_string();
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let text = std::fs::read_to_string(manifest_path)?;

    let mut order: Vec<String> = Vec::new();
    let mut corpora: BTreeMap<String, Vec<Utterance<S>>> = BTreeMap::new();
    let mut seen_ids = BTreeSet::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [id, language, feature_file, transcript] = fields.as_slice() else {
            return Err(Error::parse(
                &origin,
                lineno + 1,
                "expected four tab-separated fields",
            ));
        };
        if id.is_empty() || language.is_empty() {
            return Err(Error::parse(&origin, lineno + 1, "empty utterance id or language"));
        }
        if !seen_ids.insert(id.to_string()) {
            return Err(Error::parse(
                &origin,
                lineno + 1,
                format!("duplicate utterance id {id:?}"),
            ));
        }
        let features = read_features(&dir.join(feature_file))?;
        let transcript = transcript
            .split_whitespace()
            .map(Phoneme::new)
            .collect::<Result<Vec<_>>>()?;
        if !corpora.contains_key(*language) {
            order.push(language.to_string());
        }
        corpora.entry(language.to_string()).or_default().push(Utterance {
            id: id.to_string(),
            language: language.to_string(),
            features,
            transcript,
        });
    }

    let mut out = Vec::with_capacity(order.len());
    for language in order {
        let inv_path = dir.join(format!("{language}.inv"));
        let inventory = read_phoneme_lines(&inv_path)?;
        let allowed: BTreeSet<&Phoneme> = inventory.iter().collect();
        let utterances = corpora.remove(&language).unwrap();
        for utt in &utterances {
            for p in &utt.transcript {
                if !allowed.contains(p) {
                    return Err(Error::TranscriptPhonemeOutsideInventory {
                        utterance: utt.id.clone(),
                        phoneme: p.as_str().to_string(),
                        language: language.clone(),
                    });
                }
            }
        }
        out.push(Corpus {
            language,
            inventory,
            utterances,
        });
    }
    Ok(out)
}

/// Write corpora as a manifest dataset into `dir`: `manifest.tsv`, one
/// `<language>.inv` per corpus, one `<utt_id>.zphf` per utterance. Returns
/// the manifest path.
pub fn write_dataset<S: Scalar>(dir: &Path, corpora: &[Corpus<S>]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    for corpus in corpora {
        write_phoneme_lines(&dir.join(format!("{}.inv", corpus.language)), &corpus.inventory)?;
        for utt in &corpus.utterances {
            let feature_file = format!("{}.zphf", utt.id);
            write_features(&dir.join(&feature_file), &utt.features)?;
            let transcript: Vec<&str> = utt.transcript.iter().map(|p| p.as_str()).collect();
            manifest.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                utt.id,
                utt.language,
                feature_file,
                transcript.join(" ")
            ));
        }
    }
    let manifest_path = dir.join("manifest.tsv");
    std::fs::write(&manifest_path, manifest)?;
    Ok(manifest_path)
}

/// Parameters of the synthetic generator.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub num_languages: usize,
    pub phonemes_per_language: usize,
    pub num_unseen_test_phonemes: usize,
    pub utterances_per_language: usize,
    pub test_utterances: usize,
    pub transcript_len: (usize, usize),
    pub frames_per_phoneme: (usize, usize),
    pub feature_dim: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_languages: 3,
            phonemes_per_language: 8,
            num_unseen_test_phonemes: 3,
            utterances_per_language: 30,
            test_utterances: 30,
            transcript_len: (3, 8),
            frames_per_phoneme: (2, 5),
            feature_dim: 12,
            noise_sigma: 0.3,
            seed: 0,
        }
    }
}

impl SynthSpec {
    /// Parse a `key = value` spec file; unspecified keys keep their
    /// defaults.
    pub fn from_config_text(text: &str, origin: &str) -> Result<Self> {
        let mut spec = SynthSpec::default();
        for (key, value, line) in parse_kv(text, origin)? {
            match key.as_str() {
                "num_languages" => spec.num_languages = parse_value(&value, &key, origin, line)?,
                "phonemes_per_language" => {
                    spec.phonemes_per_language = parse_value(&value, &key, origin, line)?
                }
                "num_unseen_test_phonemes" => {
                    spec.num_unseen_test_phonemes = parse_value(&value, &key, origin, line)?
                }
                "utterances_per_language" => {
                    spec.utterances_per_language = parse_value(&value, &key, origin, line)?
                }
                "test_utterances" => {
                    spec.test_utterances = parse_value(&value, &key, origin, line)?
                }
                "transcript_len_min" => {
                    spec.transcript_len.0 = parse_value(&value, &key, origin, line)?
                }
                "transcript_len_max" => {
                    spec.transcript_len.1 = parse_value(&value, &key, origin, line)?
                }
                "frames_per_phoneme_min" => {
                    spec.frames_per_phoneme.0 = parse_value(&value, &key, origin, line)?
                }
                "frames_per_phoneme_max" => {
                    spec.frames_per_phoneme.1 = parse_value(&value, &key, origin, line)?
                }
                "feature_dim" => spec.feature_dim = parse_value(&value, &key, origin, line)?,
                "noise_sigma" => spec.noise_sigma = parse_value(&value, &key, origin, line)?,
                "seed" => spec.seed = parse_value(&value, &key, origin, line)?,
                _ => {
                    return Err(Error::parse(origin, line, format!("unknown key {key:?}")));
                }
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_config_text(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Error::InfeasibleSpec { msg };
        if self.num_languages == 0
            || self.phonemes_per_language == 0
            || self.utterances_per_language == 0
            || self.test_utterances == 0
            || self.feature_dim == 0
        {
            return Err(bad("counts and dimensions must be positive".into()));
        }
        if self.num_unseen_test_phonemes > self.phonemes_per_language {
            return Err(bad(format!(
                "{} unseen phonemes cannot fit a {}-phoneme test inventory",
                self.num_unseen_test_phonemes, self.phonemes_per_language
            )));
        }
        if self.transcript_len.0 == 0 || self.transcript_len.0 > self.transcript_len.1 {
            return Err(bad("bad transcript length range".into()));
        }
        // Two frames per phoneme guarantee a feasible CTC alignment for any
        // transcript, repeats included.
        if self.frames_per_phoneme.0 < 2 || self.frames_per_phoneme.0 > self.frames_per_phoneme.1 {
            return Err(bad("frames per phoneme must span at least 2..=2".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(bad("noise sigma must be non-negative".into()));
        }
        Ok(())
    }
}

/// A generated train/test split plus the union of training inventories.
#[derive(Clone, Debug)]
pub struct SyntheticDataset<S> {
    pub train: Vec<Corpus<S>>,
    pub test: Corpus<S>,
    pub train_union: BTreeSet<Phoneme>,
}

fn attribute_set(p: &Phoneme, table: &BasePhonemeTable) -> Option<BTreeSet<AttrId>> {
    assign_attributes(p, table).ok().map(|a| a.attributes)
}

/// Deterministically generate a synthetic dataset.
///
/// Training inventories are sampled from the pool of parseable phonemes
/// (base entries and base+diacritic combinations). The test inventory mixes
/// `num_unseen_test_phonemes` phonemes that occur in no training inventory —
/// but whose attributes are all covered by training phonemes — with seen
/// phonemes. Generation happens in f64 and is rounded through the on-disk
/// f32 interchange precision, so an in-memory dataset and its
/// written-and-reloaded copy are identical.
pub fn generate_synthetic<S: Scalar>(
    spec: &SynthSpec,
    catalog: &AttributeCatalog,
    table: &BasePhonemeTable,
) -> Result<SyntheticDataset<S>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // One prototype vector per attribute, in catalog order.
    let prototypes: Vec<Vec<f64>> = (0..catalog.len())
        .map(|_| {
            (0..spec.feature_dim)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();

    // Candidate pool: every base entry plus every base+diacritic combination
    // that parses, in sorted order for determinism.
    let mut pool: Vec<Phoneme> = Vec::new();
    for base in table.base_strings() {
        pool.push(Phoneme::new(base)?);
        for suffix in table.diacritic_strings() {
            let combo = Phoneme::new(format!("{base}{suffix}"))?;
            if assign_attributes(&combo, table).is_ok() {
                pool.push(combo);
            }
        }
    }
    pool.sort();
    pool.dedup();
    if pool.len() < spec.phonemes_per_language {
        return Err(Error::InfeasibleSpec {
            msg: format!(
                "pool of {} parseable phonemes cannot fill inventories of {}",
                pool.len(),
                spec.phonemes_per_language
            ),
        });
    }

    // Training inventories: independent uniform samples; languages overlap
    // naturally, like real inventories do.
    let mut train_inventories: Vec<Vec<Phoneme>> = Vec::with_capacity(spec.num_languages);
    for _ in 0..spec.num_languages {
        let mut inv: Vec<Phoneme> = pool
            .choose_multiple(&mut rng, spec.phonemes_per_language)
            .cloned()
            .collect();
        inv.sort();
        train_inventories.push(inv);
    }
    let train_union: BTreeSet<Phoneme> = train_inventories.iter().flatten().cloned().collect();
    let covered_attrs: BTreeSet<AttrId> = train_union
        .iter()
        .filter_map(|p| attribute_set(p, table))
        .flatten()
        .collect();

    // Unseen test phonemes: outside every training inventory, attributes
    // fully covered by training.
    let mut unseen_candidates: Vec<Phoneme> = pool
        .iter()
        .filter(|p| !train_union.contains(*p))
        .filter(|p| {
            attribute_set(p, table)
                .map(|attrs| attrs.is_subset(&covered_attrs))
                .unwrap_or(false)
        })
        .cloned()
        .collect();
    if unseen_candidates.len() < spec.num_unseen_test_phonemes {
        return Err(Error::InfeasibleSpec {
            msg: format!(
                "only {} attribute-covered unseen phonemes available, need {}",
                unseen_candidates.len(),
                spec.num_unseen_test_phonemes
            ),
        });
    }
    unseen_candidates.shuffle(&mut rng);
    let unseen: Vec<Phoneme> = unseen_candidates[..spec.num_unseen_test_phonemes].to_vec();

    let seen_count = spec.phonemes_per_language - spec.num_unseen_test_phonemes;
    let seen_pool: Vec<Phoneme> = train_union.iter().cloned().collect();
    let seen_count = seen_count.min(seen_pool.len());
    let mut test_inventory: Vec<Phoneme> = seen_pool
        .choose_multiple(&mut rng, seen_count)
        .cloned()
        .collect();
    test_inventory.extend(unseen.iter().cloned());
    test_inventory.sort();

    let mut gen_corpus = |language: String, inventory: &[Phoneme], count: usize| -> Corpus<S> {
        let mut utterances = Vec::with_capacity(count);
        for u in 0..count {
            let len = rng.gen_range(spec.transcript_len.0..=spec.transcript_len.1);
            let transcript: Vec<Phoneme> = (0..len)
                .map(|_| inventory.choose(&mut rng).unwrap().clone())
                .collect();
            let mut frames: Vec<f64> = Vec::new();
            let mut rows = 0;
            for p in &transcript {
                let attrs = attribute_set(p, table).expect("inventory phonemes parse");
                let mean: Vec<f64> = (0..spec.feature_dim)
                    .map(|j| {
                        attrs.iter().map(|&AttrId(i)| prototypes[i][j]).sum::<f64>()
                            / attrs.len() as f64
                    })
                    .collect();
                let duration =
                    rng.gen_range(spec.frames_per_phoneme.0..=spec.frames_per_phoneme.1);
                for _ in 0..duration {
                    rows += 1;
                    for m in &mean {
                        let noise: f64 = rng.sample(StandardNormal);
                        let value = m + spec.noise_sigma * noise;
                        // Round through interchange precision.
                        frames.push((value as f32) as f64);
                    }
                }
            }
            let features = Mat::from_vec(
                rows,
                spec.feature_dim,
                frames.into_iter().map(S::of).collect(),
            );
            utterances.push(Utterance {
                id: format!("{language}_{u:03}"),
                language: language.clone(),
                features,
                transcript,
            });
        }
        Corpus {
            language,
            inventory: inventory.to_vec(),
            utterances,
        }
    };

    let train: Vec<Corpus<S>> = train_inventories
        .iter()
        .enumerate()
        .map(|(i, inv)| gen_corpus(format!("lang{i}"), inv, spec.utterances_per_language))
        .collect();
    let test = gen_corpus("test".to_string(), &test_inventory, spec.test_utterances);

    Ok(SyntheticDataset {
        train,
        test,
        train_union,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{default_base_table, default_catalog};
    use proptest::prelude::*;

    fn tiny_spec() -> SynthSpec {
        SynthSpec {
            num_languages: 2,
            phonemes_per_language: 5,
            num_unseen_test_phonemes: 2,
            utterances_per_language: 4,
            test_utterances: 3,
            transcript_len: (2, 4),
            frames_per_phoneme: (2, 3),
            feature_dim: 6,
            noise_sigma: 0.2,
            seed: 7,
        }
    }

    #[test]
    fn feature_file_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.zphf");
        let m = Mat::from_fn(3, 4, |r, c| (r as f64 * 0.125 - c as f64 * 0.5) / 3.0);
        write_features(&path, &m).unwrap();
        let back: Mat<f64> = read_features(&path).unwrap();
        // Values round-trip through f32 exactly once written.
        let path2 = dir.path().join("u2.zphf");
        write_features(&path2, &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn zero_frame_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.zphf");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"ZPHF");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&0u32.to_le_bytes());
        bytes.extend_from_slice(&4u32.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            read_features::<f64>(&path),
            Err(Error::BadFeatureHeader { .. })
        ));
    }

    #[test]
    fn dataset_round_trip() {
        let cat = default_catalog();
        let table = default_base_table(&cat);
        let ds = generate_synthetic::<f64>(&tiny_spec(), &cat, &table).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_dataset(dir.path(), &ds.train).unwrap();
        let back: Vec<Corpus<f64>> = load_dataset(&manifest).unwrap();
        assert_eq!(back.len(), ds.train.len());
        for (a, b) in ds.train.iter().zip(&back) {
            assert_eq!(a.language, b.language);
            assert_eq!(a.inventory, b.inventory);
            assert_eq!(a.utterances.len(), b.utterances.len());
            for (ua, ub) in a.utterances.iter().zip(&b.utterances) {
                assert_eq!(ua.id, ub.id);
                assert_eq!(ua.transcript, ub.transcript);
                // Bitwise: generation already rounded through f32.
                assert_eq!(ua.features, ub.features);
            }
        }
    }

    #[test]
    fn manifest_with_one_language_groups_into_one_corpus() {
        let cat = default_catalog();
        let table = default_base_table(&cat);
        let mut spec = tiny_spec();
        spec.num_languages = 1;
        spec.utterances_per_language = 2;
        let ds = generate_synthetic::<f64>(&spec, &cat, &table).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_dataset(dir.path(), &ds.train).unwrap();
        let back: Vec<Corpus<f64>> = load_dataset::<f64>(&manifest).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].utterances.len(), 2);
    }

    #[test]
    fn synthetic_generation_is_deterministic() {
        let cat = default_catalog();
        let table = default_base_table(&cat);
        let spec = tiny_spec();
        let a = generate_synthetic::<f64>(&spec, &cat, &table).unwrap();
        let b = generate_synthetic::<f64>(&spec, &cat, &table).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let ma = write_dataset(&dir.path().join("a"), &a.train).unwrap();
        let mb = write_dataset(&dir.path().join("b"), &b.train).unwrap();
        assert_eq!(std::fs::read(ma).unwrap(), std::fs::read(mb).unwrap());
        for (ca, cb) in a.train.iter().zip(&b.train) {
            for (ua, ub) in ca.utterances.iter().zip(&cb.utterances) {
                assert_eq!(ua.features, ub.features);
            }
        }
    }

    #[test]
    fn unseen_phonemes_are_unseen_but_attribute_covered() {
        let cat = default_catalog();
        let table = default_base_table(&cat);
        let ds = generate_synthetic::<f64>(&tiny_spec(), &cat, &table).unwrap();
        let covered: BTreeSet<AttrId> = ds
            .train_union
            .iter()
            .flat_map(|p| assign_attributes(p, &table).unwrap().attributes)
            .collect();
        let unseen: Vec<&Phoneme> = ds
            .test
            .inventory
            .iter()
            .filter(|p| !ds.train_union.contains(*p))
            .collect();
        assert_eq!(unseen.len(), tiny_spec().num_unseen_test_phonemes);
        for p in unseen {
            let attrs = assign_attributes(p, &table).unwrap().attributes;
            assert!(attrs.is_subset(&covered), "{p} not covered");
        }
    }

    #[test]
    fn zero_unseen_means_test_is_subset_of_train_union() {
        let cat = default_catalog();
        let table = default_base_table(&cat);
        let mut spec = tiny_spec();
        spec.num_unseen_test_phonemes = 0;
        let ds = generate_synthetic::<f64>(&spec, &cat, &table).unwrap();
        for p in &ds.test.inventory {
            assert!(ds.train_union.contains(p));
        }
    }

    proptest! {
        /// Corrupting a transcript with a phoneme outside the declared
        /// inventory must be rejected at load time.
        #[test]
        fn loader_rejects_out_of_inventory_transcripts(utt in 0usize..4, seed in 0u64..50) {
            let cat = default_catalog();
            let table = default_base_table(&cat);
            let mut spec = tiny_spec();
            spec.seed = seed;
            let ds = generate_synthetic::<f64>(&spec, &cat, &table).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let manifest = write_dataset(dir.path(), &ds.train).unwrap();

            // Inject a phoneme that is not in lang0's inventory.
            let text = std::fs::read_to_string(&manifest).unwrap();
            let victim = utt % ds.train[0].utterances.len();
            let outside = ds.test.inventory.iter()
                .find(|p| !ds.train[0].inventory.contains(p));
            prop_assume!(outside.is_some());
            let mut lines: Vec<String> = text.lines().map(String::from).collect();
            lines[victim].push_str(&format!(" {}", outside.unwrap()));
            std::fs::write(&manifest, lines.join("\n")).unwrap();

            let err = load_dataset::<f64>(&manifest).unwrap_err();
            let rejected = matches!(err, Error::TranscriptPhonemeOutsideInventory { .. });
            prop_assert!(rejected, "unexpected error: {:?}", err);
        }
    }
}
