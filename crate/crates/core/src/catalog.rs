//! Articulatory attribute catalog and the curated base phoneme table.
//!
//! The catalog fixes the universe of articulatory attributes (consonant
//! place/manner classes, vowel qualities, diacritics) plus one reserved
//! `blank` attribute used by the CTC layer. The base table maps a curated
//! set of X-SAMPA strings — whole phonemes and diacritic suffixes — to
//! attribute subsets; everything else is derived from it by suffix matching
//! (see [`crate::xsampa`]).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

/// Index of an attribute within its catalog.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct AttrId(pub usize);

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum AttrCategory {
    Consonant,
    Vowel,
    Diacritic,
    Blank,
}

impl AttrCategory {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "consonant" => Some(AttrCategory::Consonant),
            "vowel" => Some(AttrCategory::Vowel),
            "diacritic" => Some(AttrCategory::Diacritic),
            "blank" => Some(AttrCategory::Blank),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AttrCategory::Consonant => "consonant",
            AttrCategory::Vowel => "vowel",
            AttrCategory::Diacritic => "diacritic",
            AttrCategory::Blank => "blank",
        }
    }
}

impl fmt::Display for AttrCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The fixed attribute universe. Immutable once loaded.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributeCatalog {
    names: Vec<String>,
    categories: Vec<AttrCategory>,
    by_name: HashMap<String, AttrId>,
    blank: AttrId,
}

pub const DEFAULT_CATALOG_TSV: &str = include_str!("../data/default_catalog.tsv");
pub const DEFAULT_BASE_TABLE_TSV: &str = include_str!("../data/default_base_table.tsv");

pub fn default_catalog() -> AttributeCatalog {
    AttributeCatalog::from_tsv(DEFAULT_CATALOG_TSV, "<builtin catalog>")
        .expect("builtin catalog is valid")
}

pub fn default_base_table(catalog: &AttributeCatalog) -> BasePhonemeTable {
    BasePhonemeTable::from_tsv(DEFAULT_BASE_TABLE_TSV, catalog, "<builtin table>")
        .expect("builtin table is valid")
}

impl AttributeCatalog {
    /// Parse from TSV text: one `name<TAB>category` row per attribute, `#`
    /// comment lines ignored. Attribute indices follow file order.
    pub fn from_tsv(text: &str, origin: &str) -> Result<Self> {
        let mut names = Vec::new();
        let mut categories = Vec::new();
        let mut by_name = HashMap::new();
        let mut blank = None;

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split('\t');
            let (name, category) = match (fields.next(), fields.next(), fields.next()) {
                (Some(n), Some(c), None) => (n, c),
                _ => {
                    return Err(Error::parse(
                        origin,
                        lineno + 1,
                        "expected exactly two tab-separated fields",
                    ))
                }
            };
            if name.is_empty() || name.chars().any(char::is_whitespace) {
                return Err(Error::parse(
                    origin,
                    lineno + 1,
                    format!("bad attribute name {name:?}"),
                ));
            }
            let category = AttrCategory::parse(category).ok_or_else(|| {
                Error::parse(origin, lineno + 1, format!("unknown category {category:?}"))
            })?;
            let id = AttrId(names.len());
            if by_name.insert(name.to_string(), id).is_some() {
                return Err(Error::parse(
                    origin,
                    lineno + 1,
                    format!("duplicate attribute {name:?}"),
                ));
            }
            if category == AttrCategory::Blank {
                if name != "blank" {
                    return Err(Error::parse(
                        origin,
                        lineno + 1,
                        "the blank attribute must be named \"blank\"",
                    ));
                }
                if blank.replace(id).is_some() {
                    return Err(Error::parse(origin, lineno + 1, "second blank attribute"));
                }
            }
            names.push(name.to_string());
            categories.push(category);
        }

        let blank = blank
            .ok_or_else(|| Error::parse(origin, text.lines().count(), "missing blank attribute row"))?;
        if names.len() < 2 {
            return Err(Error::parse(origin, 0, "catalog needs at least two attributes"));
        }
        Ok(AttributeCatalog {
            names,
            categories,
            by_name,
            blank,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_tsv(&text, &path.display().to_string())
    }

    /// Canonical TSV serialization (comments are not preserved).
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (name, cat) in self.names.iter().zip(&self.categories) {
            out.push_str(name);
            out.push('\t');
            out.push_str(cat.as_str());
            out.push('\n');
        }
        out
    }

    /// Number of attributes, blank included.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        false // invariant: at least two attributes
    }

    pub fn blank(&self) -> AttrId {
        self.blank
    }

    pub fn name(&self, id: AttrId) -> &str {
        &self.names[id.0]
    }

    pub fn category(&self, id: AttrId) -> AttrCategory {
        self.categories[id.0]
    }

    pub fn lookup(&self, name: &str) -> Option<AttrId> {
        self.by_name.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = AttrId> {
        (0..self.names.len()).map(AttrId)
    }

    /// Render an attribute set as comma-separated names in catalog order.
    pub fn set_to_string(&self, attrs: &BTreeSet<AttrId>) -> String {
        let names: Vec<&str> = attrs.iter().map(|&id| self.name(id)).collect();
        names.join(",")
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum EntryKind {
    Base,
    Diacritic,
}

impl EntryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntryKind::Base => "base",
            EntryKind::Diacritic => "diacritic",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TableEntry {
    pub kind: EntryKind,
    pub attributes: BTreeSet<AttrId>,
}

/// The curated restricted assignment map over base phonemes and diacritic
/// suffixes. Keys are X-SAMPA strings; both kinds participate in suffix
/// matching.
#[derive(Clone, Debug, PartialEq)]
pub struct BasePhonemeTable {
    entries: BTreeMap<String, TableEntry>,
}

impl BasePhonemeTable {
    /// Parse from TSV text: `xsampa<TAB>kind<TAB>attr,attr,...` rows, `#`
    /// comment lines ignored. Every attribute must exist in the catalog and
    /// must not be the blank attribute.
    pub fn from_tsv(text: &str, catalog: &AttributeCatalog, origin: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [xsampa, kind, attrs] = fields.as_slice() else {
                return Err(Error::parse(
                    origin,
                    lineno + 1,
                    "expected exactly three tab-separated fields",
                ));
            };
            if xsampa.is_empty() || xsampa.chars().any(char::is_whitespace) {
                return Err(Error::parse(
                    origin,
                    lineno + 1,
                    format!("bad X-SAMPA string {xsampa:?}"),
                ));
            }
            let kind = match *kind {
                "base" => EntryKind::Base,
                "diacritic" => EntryKind::Diacritic,
                other => {
                    return Err(Error::parse(
                        origin,
                        lineno + 1,
                        format!("unknown entry kind {other:?}"),
                    ))
                }
            };
            let mut attributes = BTreeSet::new();
            for name in attrs.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let id = catalog.lookup(name).ok_or_else(|| Error::UnknownAttribute {
                    entry: xsampa.to_string(),
                    name: name.to_string(),
                })?;
                if id == catalog.blank() {
                    return Err(Error::parse(
                        origin,
                        lineno + 1,
                        format!("entry {xsampa:?} must not use the blank attribute"),
                    ));
                }
                attributes.insert(id);
            }
            if attributes.is_empty() {
                return Err(Error::parse(
                    origin,
                    lineno + 1,
                    format!("entry {xsampa:?} has an empty attribute set"),
                ));
            }
            if entries
                .insert(xsampa.to_string(), TableEntry { kind, attributes })
                .is_some()
            {
                return Err(Error::parse(
                    origin,
                    lineno + 1,
                    format!("duplicate entry {xsampa:?}"),
                ));
            }
        }
        Ok(BasePhonemeTable { entries })
    }

    pub fn load(path: &Path, catalog: &AttributeCatalog) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_tsv(&text, catalog, &path.display().to_string())
    }

    /// Canonical TSV serialization: entries in sorted key order.
    pub fn to_tsv(&self, catalog: &AttributeCatalog) -> String {
        let mut out = String::new();
        for (xsampa, entry) in &self.entries {
            out.push_str(xsampa);
            out.push('\t');
            out.push_str(entry.kind.as_str());
            out.push('\t');
            out.push_str(&catalog.set_to_string(&entry.attributes));
            out.push('\n');
        }
        out
    }

    pub fn get(&self, xsampa: &str) -> Option<&TableEntry> {
        self.entries.get(xsampa)
    }

    pub fn contains(&self, xsampa: &str) -> bool {
        self.entries.contains_key(xsampa)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &TableEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Base-kind entries in sorted order.
    pub fn base_strings(&self) -> impl Iterator<Item = &str> {
        self.entries
            .iter()
            .filter(|(_, e)| e.kind == EntryKind::Base)
            .map(|(k, _)| k.as_str())
    }

    /// Diacritic-kind entries in sorted order.
    pub fn diacritic_strings(&self) -> impl Iterator<Item = &str> {
        self.entries
            .iter()
            .filter(|(_, e)| e.kind == EntryKind::Diacritic)
            .map(|(k, _)| k.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_catalog_readback() {
        let text = "vowel\tvowel\nopen\tvowel\nfront\tvowel\nunrounded\tvowel\nblank\tblank\n";
        let cat = AttributeCatalog::from_tsv(text, "<test>").unwrap();
        assert_eq!(cat.len(), 5);
        assert_eq!(cat.blank(), AttrId(4));
        assert_eq!(cat.name(AttrId(0)), "vowel");
        assert_eq!(cat.category(AttrId(4)), AttrCategory::Blank);
    }

    #[test]
    fn missing_blank_row_is_rejected() {
        let text = "vowel\tvowel\nopen\tvowel\n";
        assert!(matches!(
            AttributeCatalog::from_tsv(text, "<test>"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn duplicate_name_is_rejected() {
        let text = "vowel\tvowel\nvowel\tvowel\nblank\tblank\n";
        assert!(matches!(
            AttributeCatalog::from_tsv(text, "<test>"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn default_catalog_covers_the_major_classes() {
        let cat = default_catalog();
        assert!(cat.len() >= 30);
        for name in ["labial", "coronal", "dorsal", "stop", "fricative", "approximant"] {
            assert!(cat.lookup(name).is_some(), "missing {name}");
        }
        assert_eq!(cat.name(cat.blank()), "blank");
    }

    #[test]
    fn base_table_entry_readback() {
        let cat = default_catalog();
        let table = default_base_table(&cat);
        let a = table.get("a").unwrap();
        assert_eq!(a.kind, EntryKind::Base);
        assert_eq!(cat.set_to_string(&a.attributes), "vowel,open,front,unrounded");
        let ejective = table.get("_>").unwrap();
        assert_eq!(ejective.kind, EntryKind::Diacritic);
        assert_eq!(cat.set_to_string(&ejective.attributes), "ejective");
    }

    #[test]
    fn unknown_attribute_is_rejected() {
        let cat = default_catalog();
        let text = "a\tbase\txyzzy\n";
        assert!(matches!(
            BasePhonemeTable::from_tsv(text, &cat, "<test>"),
            Err(Error::UnknownAttribute { .. })
        ));
    }

    #[test]
    fn blank_attribute_in_entry_is_rejected() {
        let cat = default_catalog();
        let text = "a\tbase\tvowel,blank\n";
        assert!(matches!(
            BasePhonemeTable::from_tsv(text, &cat, "<test>"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn tsv_round_trip_is_structurally_equal() {
        let cat = default_catalog();
        let table = default_base_table(&cat);
        let cat2 = AttributeCatalog::from_tsv(&cat.to_tsv(), "<round>").unwrap();
        assert_eq!(cat, cat2);
        let table2 = BasePhonemeTable::from_tsv(&table.to_tsv(&cat), &cat2, "<round>").unwrap();
        assert_eq!(table, table2);
    }

    #[test]
    fn no_default_entry_is_empty_or_blank() {
        let cat = default_catalog();
        let table = default_base_table(&cat);
        assert!(!table.is_empty());
        for (xsampa, entry) in table.iter() {
            assert!(!entry.attributes.is_empty(), "{xsampa} empty");
            assert!(!entry.attributes.contains(&cat.blank()), "{xsampa} has blank");
        }
    }
}
