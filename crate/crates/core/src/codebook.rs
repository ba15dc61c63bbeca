//! The dementia-qualifying ICD-10 codes and their diagnostic categories.
//!
//! The compiled-in table holds 17 codes in five categories. A replacement
//! table can be loaded from a delimited file with `code,category,description`
//! columns, which is how alternative code sets are evaluated.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{squash, Header, TableFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DiagnosticCategory {
    AlzheimersDisease,
    VascularDementia,
    NonSpecificDementia,
    PicksDisease,
    NeurocognitiveDisorder,
}

impl DiagnosticCategory {
    pub const COUNT: usize = 5;

    pub const ALL: [DiagnosticCategory; 5] = [
        DiagnosticCategory::AlzheimersDisease,
        DiagnosticCategory::VascularDementia,
        DiagnosticCategory::NonSpecificDementia,
        DiagnosticCategory::PicksDisease,
        DiagnosticCategory::NeurocognitiveDisorder,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Human-readable label.
    pub fn label(self) -> &'static str {
        match self {
            DiagnosticCategory::AlzheimersDisease => "Alzheimer's disease",
            DiagnosticCategory::VascularDementia => "Vascular dementia",
            DiagnosticCategory::NonSpecificDementia => "Non-specific dementia",
            DiagnosticCategory::PicksDisease => "Pick's disease",
            DiagnosticCategory::NeurocognitiveDisorder => "Neurocognitive disorder",
        }
    }

    /// Identifier used in exported files.
    pub fn name(self) -> &'static str {
        match self {
            DiagnosticCategory::AlzheimersDisease => "AlzheimersDisease",
            DiagnosticCategory::VascularDementia => "VascularDementia",
            DiagnosticCategory::NonSpecificDementia => "NonSpecificDementia",
            DiagnosticCategory::PicksDisease => "PicksDisease",
            DiagnosticCategory::NeurocognitiveDisorder => "NeurocognitiveDisorder",
        }
    }

    /// Every category except non-specific dementia names a specific etiology.
    pub fn is_specific(self) -> bool {
        self != DiagnosticCategory::NonSpecificDementia
    }
}

impl fmt::Display for DiagnosticCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DiagnosticCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let key = squash(s);
        DiagnosticCategory::ALL
            .into_iter()
            .find(|c| squash(c.name()) == key || squash(c.label()) == key)
            .or(match key.as_str() {
                "alzheimer" | "alzheimers" => Some(DiagnosticCategory::AlzheimersDisease),
                "vascular" => Some(DiagnosticCategory::VascularDementia),
                "nonspecific" => Some(DiagnosticCategory::NonSpecificDementia),
                "pick" | "picks" => Some(DiagnosticCategory::PicksDisease),
                "neurocognitive" => Some(DiagnosticCategory::NeurocognitiveDisorder),
                _ => None,
            })
            .ok_or_else(|| format!("unknown diagnostic category `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DementiaCode {
    pub code: String,
    pub category: DiagnosticCategory,
    pub description: String,
}

/// Position of a code within its codebook.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CodeId(pub u8);

impl CodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

const STANDARD_CODES: [(&str, DiagnosticCategory, &str); 17] = {
    use DiagnosticCategory::*;
    [
        ("G300", AlzheimersDisease, "Alzheimer's disease with early onset"),
        ("G301", AlzheimersDisease, "Alzheimer's disease with late onset"),
        ("G308", AlzheimersDisease, "Other Alzheimer's disease"),
        ("G309", AlzheimersDisease, "Alzheimer's disease, unspecified"),
        ("G3183", NeurocognitiveDisorder, "Neurocognitive disorder with Lewy bodies"),
        ("G3185", NeurocognitiveDisorder, "Corticobasal degeneration"),
        (
            "F0280",
            NonSpecificDementia,
            "Dementia in other diseases classified elsewhere, unspecified severity, without \
             behavioral disturbance, psychotic disturbance, mood disturbance, and anxiety",
        ),
        (
            "F0281",
            NonSpecificDementia,
            "Dementia in other diseases classified elsewhere, unspecified severity, with \
             behavioral disturbance",
        ),
        (
            "F0390",
            NonSpecificDementia,
            "Unspecified dementia, unspecified severity, without behavioral disturbance, \
             psychotic disturbance, mood disturbance, and anxiety",
        ),
        (
            "F0391",
            NonSpecificDementia,
            "Unspecified dementia, unspecified severity, with behavioral disturbance",
        ),
        ("G3109", NonSpecificDementia, "Other frontotemporal neurocognitive disorder"),
        ("G311", NonSpecificDementia, "Senile degeneration of brain, not elsewhere classified"),
        ("G3189", NonSpecificDementia, "Other specified degenerative diseases of nervous system"),
        ("G319", NonSpecificDementia, "Degenerative disease of nervous system, unspecified"),
        ("G3101", PicksDisease, "Pick's disease"),
        (
            "F0150",
            VascularDementia,
            "Vascular dementia, unspecified severity, without behavioral disturbance, \
             psychotic disturbance, mood disturbance, and anxiety",
        ),
        (
            "F0151",
            VascularDementia,
            "Vascular dementia, unspecified severity, with behavioral disturbance",
        ),
    ]
};

/// Trims, uppercases and deletes a single dot, so `" f01.50 "` becomes `"F0150"`.
///
/// A string with more than one dot is left dotted and therefore never matches.
pub fn normalize_code(raw: &str) -> String {
    let mut code = raw.trim().to_ascii_uppercase();
    if code.matches('.').count() == 1 {
        code.retain(|c| c != '.');
    }
    code
}

/// An immutable lookup table of qualifying codes.
#[derive(Debug, Clone)]
pub struct Codebook {
    entries: Vec<DementiaCode>,
    index: HashMap<String, CodeId>,
}

impl Codebook {
    /// The compiled-in 17-code table, shared process-wide.
    pub fn standard() -> &'static Codebook {
        static STANDARD: OnceLock<Codebook> = OnceLock::new();
        STANDARD.get_or_init(|| {
            let entries = STANDARD_CODES
                .iter()
                .map(|&(code, category, description)| DementiaCode {
                    code: code.to_string(),
                    category,
                    description: description.to_string(),
                })
                .collect();
            Codebook::from_entries(entries).expect("compiled-in codebook is valid")
        })
    }

    /// Builds a codebook, normalizing codes and rejecting duplicates.
    pub fn from_entries(entries: Vec<DementiaCode>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Codebook("a codebook needs at least one code".into()));
        }
        if entries.len() > u8::MAX as usize {
            return Err(Error::Codebook(format!("too many codes ({})", entries.len())));
        }
        let mut index = HashMap::with_capacity(entries.len());
        let mut normalized = Vec::with_capacity(entries.len());
        for (i, mut entry) in entries.into_iter().enumerate() {
            entry.code = normalize_code(&entry.code);
            if entry.code.is_empty() {
                return Err(Error::Codebook(format!("entry {} has an empty code", i + 1)));
            }
            if index.insert(entry.code.clone(), CodeId(i as u8)).is_some() {
                return Err(Error::Codebook(format!("duplicate code `{}`", entry.code)));
            }
            normalized.push(entry);
        }
        Ok(Codebook {
            entries: normalized,
            index,
        })
    }

    /// Loads an override table with `code,category,description` columns.
    pub fn from_path(path: &Path, format: &TableFormat) -> Result<Self> {
        let mut reader = format.reader(path)?;
        let header = Header::new(reader.headers().map_err(|e| Error::csv(path, e))?);
        let code_col = header.require(path, "code")?;
        let cat_col = header.require(path, "category")?;
        let desc_col = header.position("description");

        let mut entries = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::csv(path, e))?;
            let code = record.get(code_col).unwrap_or("");
            let category = record
                .get(cat_col)
                .unwrap_or("")
                .parse()
                .map_err(|e| Error::Codebook(format!("{}: row {}: {e}", path.display(), row + 1)))?;
            let description = desc_col
                .and_then(|c| record.get(c))
                .unwrap_or("")
                .to_string();
            entries.push(DementiaCode {
                code: code.to_string(),
                category,
                description,
            });
        }
        Codebook::from_entries(entries).map_err(|e| match e {
            Error::Codebook(msg) => Error::Codebook(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[DementiaCode] {
        &self.entries
    }

    pub fn get(&self, id: CodeId) -> &DementiaCode {
        &self.entries[id.index()]
    }

    pub fn id_of(&self, raw: &str) -> Option<CodeId> {
        self.index.get(&normalize_code(raw)).copied()
    }

    pub fn lookup(&self, raw: &str) -> Option<&DementiaCode> {
        self.id_of(raw).map(|id| self.get(id))
    }

    pub fn classify(&self, raw: &str) -> Option<DiagnosticCategory> {
        self.lookup(raw).map(|c| c.category)
    }

    pub fn is_qualifying(&self, raw: &str) -> bool {
        self.id_of(raw).is_some()
    }

    /// Ids of every code in `category`, in table order.
    pub fn codes_in(&self, category: DiagnosticCategory) -> Vec<CodeId> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.category == category)
            .map(|(i, _)| CodeId(i as u8))
            .collect()
    }

    pub fn category_counts(&self) -> [usize; DiagnosticCategory::COUNT] {
        let mut counts = [0; DiagnosticCategory::COUNT];
        for e in &self.entries {
            counts[e.category.index()] += 1;
        }
        counts
    }
}

/// Classifies a raw code string against the standard table.
pub fn classify_code(raw: &str) -> Option<DiagnosticCategory> {
    Codebook::standard().classify(raw)
}

pub fn is_dementia_qualifying(raw: &str) -> bool {
    Codebook::standard().is_qualifying(raw)
}
