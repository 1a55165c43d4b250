//! X-SAMPA phoneme parsing by iterated longest-suffix stripping.
//!
//! A phoneme not present in the base table is decomposed by repeatedly
//! finding the longest suffix that is a table entry, accumulating that
//! entry's attributes, and stripping the suffix, until the remainder is
//! itself a table entry. `/ts_>/` first matches the suffix `/_>/` (ejective),
//! then recognizes `/ts/` as a base consonant. The attribute set of the
//! phoneme is the union over all matched parts.

use std::collections::BTreeSet;
use std::fmt;

use crate::catalog::{AttrId, BasePhonemeTable, EntryKind};
use crate::error::{Error, Result};

/// An X-SAMPA phoneme string: non-empty, no internal whitespace.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Phoneme(String);

impl Phoneme {
    pub fn new(s: impl Into<String>) -> Result<Self> {
        let s = s.into();
        if s.is_empty() || s.chars().any(char::is_whitespace) {
            return Err(Error::parse(
                "<phoneme>",
                0,
                format!("invalid X-SAMPA phoneme {s:?}"),
            ));
        }
        Ok(Phoneme(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Phoneme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Phoneme {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// The attribute set assigned to one phoneme, together with the derivation
/// that produced it. Concatenating `matched_parts` (base first, then the
/// suffixes in the order they appear in the phoneme) reconstructs the
/// original string.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributeAssignment {
    pub phoneme: Phoneme,
    pub attributes: BTreeSet<AttrId>,
    pub matched_parts: Vec<(String, EntryKind)>,
}

/// Assign an attribute set by iterated longest-suffix stripping.
///
/// Fails with [`Error::UnknownPhoneme`] when at some iteration no suffix of
/// the remaining string is a table entry (stripping a suffix down to the
/// empty string fails the same way: the empty string is never a phoneme).
pub fn assign_attributes(
    phoneme: &Phoneme,
    table: &BasePhonemeTable,
) -> Result<AttributeAssignment> {
    let mut attributes = BTreeSet::new();
    // Suffixes in strip order, i.e. rightmost first.
    let mut stripped: Vec<(String, EntryKind)> = Vec::new();
    let mut rest = phoneme.as_str();

    while !table.contains(rest) {
        let suffix = longest_proper_suffix_in_table(rest, table);
        let Some(suffix) = suffix else {
            return Err(Error::UnknownPhoneme {
                phoneme: phoneme.as_str().to_string(),
                remainder: rest.to_string(),
            });
        };
        let entry = table.get(suffix).expect("suffix came from the table");
        attributes.extend(entry.attributes.iter().copied());
        stripped.push((suffix.to_string(), entry.kind));
        rest = &rest[..rest.len() - suffix.len()];
    }

    let entry = table.get(rest).expect("loop exits only on a table hit");
    attributes.extend(entry.attributes.iter().copied());

    let mut matched_parts = Vec::with_capacity(stripped.len() + 1);
    matched_parts.push((rest.to_string(), entry.kind));
    matched_parts.extend(stripped.into_iter().rev());

    Ok(AttributeAssignment {
        phoneme: phoneme.clone(),
        attributes,
        matched_parts,
    })
}

/// Longest proper suffix of `s` present in the table, if any. Suffix
/// boundaries respect UTF-8 character boundaries.
fn longest_proper_suffix_in_table<'a>(s: &'a str, table: &BasePhonemeTable) -> Option<&'a str> {
    for (start, _) in s.char_indices().skip(1) {
        let candidate = &s[start..];
        if table.contains(candidate) {
            return Some(candidate);
        }
    }
    None
}

/// Element-wise [`assign_attributes`] over a whole inventory, preserving
/// order and failing fast on the first error.
pub fn assign_inventory(
    phonemes: &[Phoneme],
    table: &BasePhonemeTable,
) -> Result<Vec<AttributeAssignment>> {
    let mut seen = BTreeSet::new();
    for (index, p) in phonemes.iter().enumerate() {
        if !seen.insert(p) {
            return Err(Error::DuplicatePhoneme {
                phoneme: p.as_str().to_string(),
                index,
            });
        }
    }
    phonemes.iter().map(|p| assign_attributes(p, table)).collect()
}
