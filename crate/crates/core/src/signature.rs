//! Phoneme inventories and binary signature matrices.
//!
//! A signature matrix has one row per inventory phoneme (set bits mark the
//! phoneme's attributes) plus a final blank row that is one-hot at the
//! catalog's blank attribute. Swapping the matrix retargets a trained model
//! to a new language without touching any learned parameter.

use std::collections::{BTreeSet, HashMap};

use crate::catalog::{AttrId, AttributeCatalog, BasePhonemeTable};
use crate::error::{Error, Result};
use crate::numerics::Mat;
use crate::scalar::Scalar;
use crate::xsampa::{assign_inventory, AttributeAssignment, Phoneme};

/// Row label used for the appended blank row. Angle brackets keep it
/// disjoint from every valid X-SAMPA phoneme.
pub const BLANK_LABEL: &str = "<blank>";

/// An ordered phoneme inventory for one language, with the attribute
/// assignment of every phoneme.
#[derive(Clone, Debug, PartialEq)]
pub struct PhonemeInventory {
    language: String,
    phonemes: Vec<Phoneme>,
    assignments: Vec<AttributeAssignment>,
}

impl PhonemeInventory {
    /// Parse every phoneme against the base table. Fails on duplicates and
    /// on unparseable phonemes.
    pub fn new(
        language: impl Into<String>,
        phonemes: Vec<Phoneme>,
        table: &BasePhonemeTable,
    ) -> Result<Self> {
        let assignments = assign_inventory(&phonemes, table)?;
        Ok(PhonemeInventory {
            language: language.into(),
            phonemes,
            assignments,
        })
    }

    /// Assemble from precomputed assignments; `assignments[i]` must belong
    /// to `phonemes[i]`.
    pub fn from_assignments(
        language: impl Into<String>,
        assignments: Vec<AttributeAssignment>,
    ) -> Self {
        let phonemes = assignments.iter().map(|a| a.phoneme.clone()).collect();
        PhonemeInventory {
            language: language.into(),
            phonemes,
            assignments,
        }
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn phonemes(&self) -> &[Phoneme] {
        &self.phonemes
    }

    pub fn assignments(&self) -> &[AttributeAssignment] {
        &self.assignments
    }

    /// Inventory size `z`.
    pub fn len(&self) -> usize {
        self.phonemes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phonemes.is_empty()
    }

    pub fn index_of(&self, p: &Phoneme) -> Option<usize> {
        self.phonemes.iter().position(|q| q == p)
    }
}

/// Binary phoneme-by-attribute matrix with the blank row appended.
#[derive(Clone, Debug, PartialEq)]
pub struct SignatureMatrix {
    rows: usize,
    cols: usize,
    bits: Vec<u8>,
    row_labels: Vec<String>,
}

impl SignatureMatrix {
    /// Build the signature of an inventory: row `i` sets exactly the bits of
    /// phoneme `i`'s attribute set, and row `z` is one-hot at the catalog's
    /// blank attribute.
    pub fn build(inv: &PhonemeInventory, catalog: &AttributeCatalog) -> Result<Self> {
        let z = inv.len();
        let a = catalog.len();
        let mut bits = vec![0u8; (z + 1) * a];
        let mut row_labels = Vec::with_capacity(z + 1);
        for (i, assignment) in inv.assignments().iter().enumerate() {
            if assignment.attributes.is_empty() {
                return Err(Error::EmptyAttributeSet {
                    phoneme: assignment.phoneme.as_str().to_string(),
                });
            }
            for &AttrId(j) in &assignment.attributes {
                debug_assert!(j < a, "assignment references attribute outside catalog");
                bits[i * a + j] = 1;
            }
            row_labels.push(assignment.phoneme.as_str().to_string());
        }
        bits[z * a + catalog.blank().0] = 1;
        row_labels.push(BLANK_LABEL.to_string());
        Ok(SignatureMatrix {
            rows: z + 1,
            cols: a,
            bits,
            row_labels,
        })
    }

    /// Total rows, blank included (`z + 1`).
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Attribute count `a`.
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of phoneme rows `z`.
    pub fn phoneme_count(&self) -> usize {
        self.rows - 1
    }

    pub fn blank_row(&self) -> usize {
        self.rows - 1
    }

    /// Column index of the blank row's single set bit.
    pub fn blank_col(&self) -> usize {
        let row = self.blank_row();
        (0..self.cols)
            .find(|&c| self.get(row, c))
            .expect("blank row is one-hot")
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.cols + col] != 0
    }

    pub fn row_labels(&self) -> &[String] {
        &self.row_labels
    }

    /// Phoneme of a non-blank row.
    pub fn phoneme(&self, row: usize) -> Phoneme {
        debug_assert!(row < self.blank_row());
        Phoneme::new(self.row_labels[row].clone()).expect("labels are valid phonemes")
    }

    pub fn row_index(&self, phoneme: &Phoneme) -> Option<usize> {
        self.row_labels[..self.blank_row()]
            .iter()
            .position(|l| l == phoneme.as_str())
    }

    /// Map from phoneme to row index for transcript encoding.
    pub fn label_index(&self) -> HashMap<&str, usize> {
        self.row_labels[..self.blank_row()]
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect()
    }

    /// All unordered pairs of identical phoneme rows. Identical rows are
    /// legal (a coarse catalog may not distinguish two phonemes) but worth a
    /// warning: the model cannot tell them apart.
    pub fn warn_collisions(&self) -> Vec<(usize, usize)> {
        let z = self.phoneme_count();
        let mut pairs = Vec::new();
        for i in 0..z {
            for j in i + 1..z {
                let a = &self.bits[i * self.cols..(i + 1) * self.cols];
                let b = &self.bits[j * self.cols..(j + 1) * self.cols];
                if a == b {
                    pairs.push((i, j));
                }
            }
        }
        pairs
    }

    /// The matrix as scalars for the logit transform.
    pub fn to_mat<S: Scalar>(&self) -> Mat<S> {
        Mat::from_fn(self.rows, self.cols, |r, c| {
            if self.get(r, c) {
                S::one()
            } else {
                S::zero()
            }
        })
    }

    /// Text serialization: header `z a`, then `z + 1` rows of space-separated
    /// bits, then `z + 1` row labels, one per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{} {}\n", self.phoneme_count(), self.cols));
        for r in 0..self.rows {
            let row: Vec<&str> = (0..self.cols)
                .map(|c| if self.get(r, c) { "1" } else { "0" })
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        for label in &self.row_labels {
            out.push_str(label);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        Self::parse_lines(&mut lines, "<signature>")
    }

    /// Parse from a line cursor; used both for standalone files and for the
    /// signature sections embedded in checkpoints.
    pub(crate) fn parse_lines<'a>(
        lines: &mut impl Iterator<Item = &'a str>,
        origin: &str,
    ) -> Result<Self> {
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(origin, 1, "missing signature header"))?;
        let mut parts = header.split_whitespace();
        let (z, a) = match (parts.next(), parts.next(), parts.next()) {
            (Some(z), Some(a), None) => {
                let z: usize = z
                    .parse()
                    .map_err(|_| Error::parse(origin, 1, "bad phoneme count"))?;
                let a: usize = a
                    .parse()
                    .map_err(|_| Error::parse(origin, 1, "bad attribute count"))?;
                (z, a)
            }
            _ => return Err(Error::parse(origin, 1, "header must be `z a`")),
        };
        if a < 2 {
            return Err(Error::parse(origin, 1, "attribute count must be at least 2"));
        }
        let mut bits = Vec::with_capacity((z + 1) * a);
        for r in 0..z + 1 {
            let line = lines
                .next()
                .ok_or_else(|| Error::parse(origin, r + 2, "missing bit row"))?;
            let row: Vec<&str> = line.split_whitespace().collect();
            if row.len() != a {
                return Err(Error::parse(
                    origin,
                    r + 2,
                    format!("expected {a} bits, found {}", row.len()),
                ));
            }
            for bit in row {
                match bit {
                    "0" => bits.push(0),
                    "1" => bits.push(1),
                    other => {
                        return Err(Error::parse(origin, r + 2, format!("bad bit {other:?}")))
                    }
                }
            }
        }
        let mut row_labels = Vec::with_capacity(z + 1);
        for r in 0..z + 1 {
            let label = lines
                .next()
                .ok_or_else(|| Error::parse(origin, z + 3 + r, "missing row label"))?;
            row_labels.push(label.to_string());
        }
        let sig = SignatureMatrix {
            rows: z + 1,
            cols: a,
            bits,
            row_labels,
        };
        sig.validate(origin)?;
        Ok(sig)
    }

    fn validate(&self, origin: &str) -> Result<()> {
        let z = self.phoneme_count();
        let blank_bits: Vec<usize> = (0..self.cols)
            .filter(|&c| self.get(z, c))
            .collect();
        let [blank_col] = blank_bits.as_slice() else {
            return Err(Error::parse(origin, 0, "blank row must be one-hot"));
        };
        if self.row_labels[z] != BLANK_LABEL {
            return Err(Error::parse(
                origin,
                0,
                format!("blank row must be labeled {BLANK_LABEL:?}"),
            ));
        }
        for r in 0..z {
            if (0..self.cols).all(|c| !self.get(r, c)) {
                return Err(Error::EmptyAttributeSet {
                    phoneme: self.row_labels[r].clone(),
                });
            }
            if self.get(r, *blank_col) {
                return Err(Error::parse(
                    origin,
                    0,
                    format!("phoneme row {r} sets the blank column"),
                ));
            }
            Phoneme::new(self.row_labels[r].clone())?;
        }
        let mut seen = BTreeSet::new();
        for label in &self.row_labels[..z] {
            if !seen.insert(label) {
                return Err(Error::parse(origin, 0, format!("duplicate row label {label:?}")));
            }
        }
        Ok(())
    }
}
