//! Descriptive code and category frequencies.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::claims::Cohort;
use crate::codebook::DiagnosticCategory;
use crate::table::fmt_f64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeFrequency {
    pub code: String,
    pub category: DiagnosticCategory,
    /// Patients with at least one retained hospitalization carrying the code.
    pub patients: usize,
    pub total_patients: usize,
}

/// Share of hospitalizations in a state (or nationally) that carry at least
/// one code of a category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryShare {
    /// `None` for the national row.
    pub state: Option<String>,
    pub category: DiagnosticCategory,
    pub hospitalizations: usize,
    pub total_hospitalizations: usize,
}

impl CategoryShare {
    pub fn percent(&self) -> f64 {
        if self.total_hospitalizations == 0 {
            0.0
        } else {
            100.0 * self.hospitalizations as f64 / self.total_hospitalizations as f64
        }
    }
}

/// Distinct-patient count for every code in the cohort's codebook.
pub fn code_frequencies(cohort: &Cohort) -> Vec<CodeFrequency> {
    let cb = cohort.codebook();
    let mut counts = vec![0usize; cb.len()];
    for idx in cohort.patient_indices() {
        let mut seen = vec![false; cb.len()];
        for e in cohort.events_of(idx) {
            seen[e.code.index()] = true;
        }
        for (c, s) in counts.iter_mut().zip(seen) {
            *c += s as usize;
        }
    }
    cb.entries()
        .iter()
        .zip(counts)
        .map(|(entry, patients)| CodeFrequency {
            code: entry.code.clone(),
            category: entry.category,
            patients,
            total_patients: cohort.len(),
        })
        .collect()
}

/// National rows followed by one block per state, ordered by state.
pub fn category_shares(cohort: &Cohort) -> Vec<CategoryShare> {
    let cb = cohort.codebook();
    let mut national = ([0usize; DiagnosticCategory::COUNT], 0usize);
    let mut by_state: BTreeMap<&str, ([usize; DiagnosticCategory::COUNT], usize)> = BTreeMap::new();
    for h in cohort.hospitalizations() {
        let state = cohort.patient(h.patient).state.as_str();
        let mut present = [false; DiagnosticCategory::COUNT];
        for code in &h.codes {
            present[cb.get(*code).category.index()] = true;
        }
        for tally in [&mut national, by_state.entry(state).or_default()] {
            tally.1 += 1;
            for (n, p) in tally.0.iter_mut().zip(present) {
                *n += p as usize;
            }
        }
    }
    let mut out = Vec::new();
    let tallies = std::iter::once((None, national)).chain(by_state.into_iter().map(|(s, t)| (Some(s), t)));
    for (state, (counts, total)) in tallies {
        out.extend(DiagnosticCategory::ALL.into_iter().map(|category| CategoryShare {
            state: state.map(str::to_string),
            category,
            hospitalizations: counts[category.index()],
            total_hospitalizations: total,
        }));
    }
    out
}

pub fn write_code_frequencies<W: Write>(out: W, rows: &[CodeFrequency]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["code", "category", "patients", "total_patients", "percent"])?;
    for r in rows {
        let pct = if r.total_patients == 0 {
            0.0
        } else {
            100.0 * r.patients as f64 / r.total_patients as f64
        };
        w.write_record([
            r.code.as_str(),
            r.category.name(),
            &r.patients.to_string(),
            &r.total_patients.to_string(),
            &fmt_f64(pct),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes state rows with the national percentage alongside as a reference.
pub fn write_category_shares<W: Write>(out: W, rows: &[CategoryShare]) -> Result<(), csv::Error> {
    let national: BTreeMap<DiagnosticCategory, f64> = rows
        .iter()
        .filter(|r| r.state.is_none())
        .map(|r| (r.category, r.percent()))
        .collect();
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "state",
        "category",
        "hospitalizations",
        "total_hospitalizations",
        "percent",
        "national_percent",
    ])?;
    for r in rows {
        w.write_record([
            r.state.as_deref().unwrap_or("national"),
            r.category.name(),
            &r.hospitalizations.to_string(),
            &r.total_hospitalizations.to_string(),
            &fmt_f64(r.percent()),
            &fmt_f64(national.get(&r.category).copied().unwrap_or(0.0)),
        ])?;
    }
    w.flush()?;
    Ok(())
}
