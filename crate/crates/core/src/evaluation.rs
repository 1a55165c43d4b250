//! Scoring: edit-distance alignment, phoneme error rate with its
//! substitution/deletion/insertion decomposition, the per-phoneme
//! seen/unseen split, and model comparison summaries.
//!
//! Rates are pooled over the whole test set (total edit counts over total
//! reference length), which keeps `PER = sub + del + ins` exact. Alignment
//! backtraces break ties deterministically, preferring match, then
//! substitute, then delete, then insert, so per-phoneme numbers are
//! reproducible.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::xsampa::Phoneme;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum EditOp {
    Match,
    Substitute,
    Delete,
    Insert,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlignStep {
    pub op: EditOp,
    pub reference: Option<Phoneme>,
    pub hypothesis: Option<Phoneme>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Alignment {
    pub steps: Vec<AlignStep>,
}

impl Alignment {
    pub fn distance(&self) -> usize {
        self.steps.iter().filter(|s| s.op != EditOp::Match).count()
    }
}

/// Minimum-edit-distance alignment under unit costs, with the deterministic
/// backtrace preference match > substitute > delete > insert.
pub fn align(reference: &[Phoneme], hypothesis: &[Phoneme]) -> Alignment {
    let r = reference.len();
    let h = hypothesis.len();
    let mut dist = vec![vec![0usize; h + 1]; r + 1];
    for (i, row) in dist.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=h {
        dist[0][j] = j;
    }
    for i in 1..=r {
        for j in 1..=h {
            let sub_cost = usize::from(reference[i - 1] != hypothesis[j - 1]);
            dist[i][j] = (dist[i - 1][j - 1] + sub_cost)
                .min(dist[i - 1][j] + 1)
                .min(dist[i][j - 1] + 1);
        }
    }

    let mut steps = Vec::with_capacity(r.max(h));
    let (mut i, mut j) = (r, h);
    while i > 0 || j > 0 {
        let step = if i > 0 && j > 0 && reference[i - 1] == hypothesis[j - 1]
            && dist[i][j] == dist[i - 1][j - 1]
        {
            EditOp::Match
        } else if i > 0 && j > 0 && dist[i][j] == dist[i - 1][j - 1] + 1 {
            EditOp::Substitute
        } else if i > 0 && dist[i][j] == dist[i - 1][j] + 1 {
            EditOp::Delete
        } else {
            EditOp::Insert
        };
        let (reference_p, hypothesis_p) = match step {
            EditOp::Match | EditOp::Substitute => {
                i -= 1;
                j -= 1;
                (Some(reference[i].clone()), Some(hypothesis[j].clone()))
            }
            EditOp::Delete => {
                i -= 1;
                (Some(reference[i].clone()), None)
            }
            EditOp::Insert => {
                j -= 1;
                (None, Some(hypothesis[j].clone()))
            }
        };
        steps.push(AlignStep {
            op: step,
            reference: reference_p,
            hypothesis: hypothesis_p,
        });
    }
    steps.reverse();
    Alignment { steps }
}

/// Pooled corpus-level error rates, as percentages of the total reference
/// length. `per` always equals the sum of the three component rates.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub per: f64,
    pub substitution_rate: f64,
    pub deletion_rate: f64,
    pub insertion_rate: f64,
    pub ref_len: usize,
    pub matches: usize,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
}

impl ErrorReport {
    /// `metric<TAB>value` rows.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("per\t{:.2}\n", self.per));
        out.push_str(&format!("substitution_rate\t{:.2}\n", self.substitution_rate));
        out.push_str(&format!("deletion_rate\t{:.2}\n", self.deletion_rate));
        out.push_str(&format!("insertion_rate\t{:.2}\n", self.insertion_rate));
        out.push_str(&format!("ref_len\t{}\n", self.ref_len));
        out.push_str(&format!("matches\t{}\n", self.matches));
        out.push_str(&format!("substitutions\t{}\n", self.substitutions));
        out.push_str(&format!("deletions\t{}\n", self.deletions));
        out.push_str(&format!("insertions\t{}\n", self.insertions));
        out
    }
}

/// Score a set of (reference, hypothesis) pairs. Errors out when every
/// reference is empty (the rates would be undefined).
pub fn error_report(pairs: &[(Vec<Phoneme>, Vec<Phoneme>)]) -> Result<ErrorReport> {
    let ref_len: usize = pairs.iter().map(|(r, _)| r.len()).sum();
    if ref_len == 0 {
        return Err(Error::EmptyReference);
    }
    let mut counts = [0usize; 4];
    for (reference, hypothesis) in pairs {
        for step in align(reference, hypothesis).steps {
            counts[step.op as usize] += 1;
        }
    }
    let rate = |n: usize| n as f64 / ref_len as f64 * 100.0;
    let (matches, substitutions, deletions, insertions) =
        (counts[0], counts[1], counts[2], counts[3]);
    Ok(ErrorReport {
        per: rate(substitutions + deletions + insertions),
        substitution_rate: rate(substitutions),
        deletion_rate: rate(deletions),
        insertion_rate: rate(insertions),
        ref_len,
        matches,
        substitutions,
        deletions,
        insertions,
    })
}

/// Occurrence and match counts for one reference phoneme.
#[derive(Clone, Debug, PartialEq)]
pub struct PhonemeStat {
    pub phoneme: Phoneme,
    pub occurrences: usize,
    pub matches: usize,
}

impl PhonemeStat {
    /// Percentage of reference occurrences aligned as a match.
    pub fn correction_rate(&self) -> f64 {
        100.0 * self.matches as f64 / self.occurrences as f64
    }

    pub fn error_rate(&self) -> f64 {
        100.0 * (1.0 - self.matches as f64 / self.occurrences as f64)
    }
}

/// Seen/unseen breakdown of per-phoneme error. A phoneme is unseen iff it
/// is absent from the training inventory union; aggregate rates are
/// occurrence-weighted means, `None` when a partition never occurs in the
/// references (mirroring an N.A. table cell).
#[derive(Clone, Debug)]
pub struct SeenUnseenReport {
    pub stats: Vec<PhonemeStat>,
    pub seen: BTreeSet<Phoneme>,
    pub unseen: BTreeSet<Phoneme>,
    /// Test-inventory phonemes with zero reference occurrences.
    pub not_applicable: Vec<Phoneme>,
    pub seen_per: Option<f64>,
    pub unseen_per: Option<f64>,
}

impl SeenUnseenReport {
    pub fn to_tsv(&self) -> String {
        let fmt = |v: Option<f64>| match v {
            Some(x) => format!("{x:.2}"),
            None => "na".to_string(),
        };
        let mut out = String::new();
        out.push_str(&format!("seen_per\t{}\n", fmt(self.seen_per)));
        out.push_str(&format!("unseen_per\t{}\n", fmt(self.unseen_per)));
        for stat in &self.stats {
            out.push_str(&format!(
                "correction_rate.{}\t{:.2}\n",
                stat.phoneme,
                stat.correction_rate()
            ));
        }
        for p in &self.not_applicable {
            out.push_str(&format!("correction_rate.{p}\tna\n"));
        }
        out
    }
}

pub fn seen_unseen_split(
    pairs: &[(Vec<Phoneme>, Vec<Phoneme>)],
    test_inventory: &[Phoneme],
    train_union: &BTreeSet<Phoneme>,
) -> SeenUnseenReport {
    let mut occurrences: BTreeMap<Phoneme, (usize, usize)> = BTreeMap::new();
    for (reference, hypothesis) in pairs {
        for step in align(reference, hypothesis).steps {
            if let Some(p) = step.reference {
                let entry = occurrences.entry(p).or_insert((0, 0));
                entry.0 += 1;
                if step.op == EditOp::Match {
                    entry.1 += 1;
                }
            }
        }
    }

    let stats: Vec<PhonemeStat> = occurrences
        .iter()
        .map(|(p, &(occurrences, matches))| PhonemeStat {
            phoneme: p.clone(),
            occurrences,
            matches,
        })
        .collect();
    let not_applicable: Vec<Phoneme> = test_inventory
        .iter()
        .filter(|p| !occurrences.contains_key(*p))
        .cloned()
        .collect();

    let (mut seen, mut unseen) = (BTreeSet::new(), BTreeSet::new());
    for p in test_inventory {
        if train_union.contains(p) {
            seen.insert(p.clone());
        } else {
            unseen.insert(p.clone());
        }
    }

    let aggregate = |want_seen: bool| -> Option<f64> {
        let mut occ = 0usize;
        let mut matches = 0usize;
        for stat in &stats {
            if train_union.contains(&stat.phoneme) == want_seen {
                occ += stat.occurrences;
                matches += stat.matches;
            }
        }
        if occ == 0 {
            None
        } else {
            Some(100.0 * (1.0 - matches as f64 / occ as f64))
        }
    };

    SeenUnseenReport {
        stats,
        seen,
        unseen,
        not_applicable,
        seen_per: aggregate(true),
        unseen_per: aggregate(false),
    }
}

/// Side-by-side comparison of two reports over the same test pairs. Deltas
/// are `baseline - other`, so positive means the second model is better.
#[derive(Clone, Debug)]
pub struct ModelComparison {
    pub baseline: ErrorReport,
    pub upm: ErrorReport,
    pub per_delta: f64,
    pub substitution_delta: f64,
    pub deletion_delta: f64,
    pub insertion_delta: f64,
}

pub fn compare_models(upm: &ErrorReport, baseline: &ErrorReport) -> Result<ModelComparison> {
    if upm.ref_len != baseline.ref_len {
        return Err(Error::MismatchedTestSet {
            left: upm.ref_len,
            right: baseline.ref_len,
        });
    }
    Ok(ModelComparison {
        baseline: baseline.clone(),
        upm: upm.clone(),
        per_delta: baseline.per - upm.per,
        substitution_delta: baseline.substitution_rate - upm.substitution_rate,
        deletion_delta: baseline.deletion_rate - upm.deletion_rate,
        insertion_delta: baseline.insertion_rate - upm.insertion_rate,
    })
}

impl ModelComparison {
    /// One header row plus one data row per language.
    pub fn to_table_tsv(&self, language: &str) -> String {
        format!(
            "language\tbaseline_per\tupm_per\tbaseline_sub\tupm_sub\n{}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\n",
            language,
            self.baseline.per,
            self.upm.per,
            self.baseline.substitution_rate,
            self.upm.substitution_rate
        )
    }
}
