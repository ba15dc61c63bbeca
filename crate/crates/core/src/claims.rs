//! Beneficiary and hospitalization records, their delimited-text loaders, and
//! the cohort filters that turn raw claims into a stream of coded events.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codebook::{CodeId, Codebook, DiagnosticCategory};
use crate::error::{Error, Result};
use crate::geo;
use crate::table::{squash, Header, Loaded, RowIssue, TableFormat};

/// Maximum number of billing diagnoses on one claim.
pub const MAX_DIAGNOSIS_SLOTS: usize = 25;

pub const DEFAULT_MIN_AGE: i32 = 65;

const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sex {
    Male,
    Female,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RaceEthnicity {
    Hispanic,
    NativeAmericanAlaskaNative,
    NonHispanicAsian,
    NonHispanicBlack,
    NonHispanicWhite,
    Other,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntitlementReason {
    Age,
    Disability,
    #[serde(rename = "ESRD")]
    Esrd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AdmissionSource {
    NursingFacility,
    Other,
}

impl Sex {
    pub const ALL: [Sex; 3] = [Sex::Male, Sex::Female, Sex::Unknown];

    pub fn name(self) -> &'static str {
        match self {
            Sex::Male => "Male",
            Sex::Female => "Female",
            Sex::Unknown => "Unknown",
        }
    }
}

impl RaceEthnicity {
    pub const ALL: [RaceEthnicity; 7] = [
        RaceEthnicity::Hispanic,
        RaceEthnicity::NativeAmericanAlaskaNative,
        RaceEthnicity::NonHispanicAsian,
        RaceEthnicity::NonHispanicBlack,
        RaceEthnicity::NonHispanicWhite,
        RaceEthnicity::Other,
        RaceEthnicity::Unknown,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RaceEthnicity::Hispanic => "Hispanic",
            RaceEthnicity::NativeAmericanAlaskaNative => "NativeAmericanAlaskaNative",
            RaceEthnicity::NonHispanicAsian => "NonHispanicAsian",
            RaceEthnicity::NonHispanicBlack => "NonHispanicBlack",
            RaceEthnicity::NonHispanicWhite => "NonHispanicWhite",
            RaceEthnicity::Other => "Other",
            RaceEthnicity::Unknown => "Unknown",
        }
    }
}

impl EntitlementReason {
    pub fn name(self) -> &'static str {
        match self {
            EntitlementReason::Age => "Age",
            EntitlementReason::Disability => "Disability",
            EntitlementReason::Esrd => "ESRD",
        }
    }
}

impl AdmissionSource {
    pub fn name(self) -> &'static str {
        match self {
            AdmissionSource::NursingFacility => "NursingFacility",
            AdmissionSource::Other => "Other",
        }
    }
}

macro_rules! display_by_name {
    ($($t:ty),*) => {$(
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    )*};
}
display_by_name!(Sex, RaceEthnicity, EntitlementReason, AdmissionSource);

impl FromStr for Sex {
    type Err = ();
    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match squash(s).as_str() {
            "m" | "male" | "1" => Ok(Sex::Male),
            "f" | "female" | "2" => Ok(Sex::Female),
            "u" | "unknown" | "0" => Ok(Sex::Unknown),
            _ => Err(()),
        }
    }
}

impl FromStr for RaceEthnicity {
    type Err = ();
    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        let key = squash(s);
        if let Some(r) = RaceEthnicity::ALL.into_iter().find(|r| squash(r.name()) == key) {
            return Ok(r);
        }
        match key.as_str() {
            "nativeamerican" | "aian" | "americanindianalaskanative" => {
                Ok(RaceEthnicity::NativeAmericanAlaskaNative)
            }
            "asian" => Ok(RaceEthnicity::NonHispanicAsian),
            "black" => Ok(RaceEthnicity::NonHispanicBlack),
            "white" => Ok(RaceEthnicity::NonHispanicWhite),
            _ => Err(()),
        }
    }
}

impl FromStr for EntitlementReason {
    type Err = ();
    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match squash(s).as_str() {
            "age" | "oasi" => Ok(EntitlementReason::Age),
            "disability" | "dib" => Ok(EntitlementReason::Disability),
            "esrd" => Ok(EntitlementReason::Esrd),
            _ => Err(()),
        }
    }
}

impl FromStr for AdmissionSource {
    type Err = ();
    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match squash(s).as_str() {
            "nursingfacility" | "nf" | "snf" => Ok(AdmissionSource::NursingFacility),
            "other" => Ok(AdmissionSource::Other),
            _ => Err(()),
        }
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match squash(s).as_str() {
        "1" | "true" | "yes" | "y" => Some(true),
        "0" | "false" | "no" | "n" => Some(false),
        _ => None,
    }
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT).ok()
}

fn is_zip(s: &str) -> bool {
    s.len() == 5 && s.bytes().all(|b| b.is_ascii_digit())
}

/// Inclusive date range of the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl StudyWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::Config(format!(
                "study window ends ({end}) before it starts ({start})"
            )));
        }
        Ok(StudyWindow { start, end })
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    pub fn days(&self) -> i64 {
        (self.end - self.start).num_days() + 1
    }
}

impl Default for StudyWindow {
    /// Calendar years 2016 through 2018.
    fn default() -> Self {
        StudyWindow {
            start: NaiveDate::from_ymd_opt(2016, 1, 1).unwrap(),
            end: NaiveDate::from_ymd_opt(2018, 12, 31).unwrap(),
        }
    }
}

/// One residence interval. An open `end` means the residence continues.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZipSpan {
    pub zip: String,
    pub start: NaiveDate,
    pub end: Option<NaiveDate>,
}

impl ZipSpan {
    pub fn overlaps(&self, window: &StudyWindow) -> bool {
        self.start <= window.end && self.end.is_none_or(|e| e >= window.start)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Beneficiary {
    pub patient_id: String,
    pub birth_year: i32,
    pub sex: Sex,
    pub race_ethnicity: RaceEthnicity,
    pub medicaid_eligible: bool,
    pub entitlement_reason: EntitlementReason,
    pub zip_history: Vec<ZipSpan>,
}

impl Beneficiary {
    /// The single zip code held throughout `window`, if there is one.
    pub fn stable_zip(&self, window: &StudyWindow) -> Option<&str> {
        let mut zips = self
            .zip_history
            .iter()
            .filter(|s| s.overlaps(window))
            .map(|s| s.zip.as_str());
        let first = zips.next()?;
        zips.all(|z| z == first).then_some(first)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HospitalizationRecord {
    pub patient_id: String,
    pub admission_date: NaiveDate,
    pub diagnosis_codes: Vec<String>,
    pub admission_source: AdmissionSource,
    pub zip: String,
    pub county_fips: String,
    pub state: String,
}

pub const BENEFICIARY_COLUMNS: [&str; 9] = [
    "patient_id",
    "birth_year",
    "sex",
    "race",
    "medicaid",
    "entitlement",
    "zip",
    "zip_start",
    "zip_end",
];

pub const HOSPITALIZATION_COLUMNS: [&str; 6] = [
    "patient_id",
    "admission_date",
    "admission_source",
    "zip",
    "county_fips",
    "state",
];

/// Loads the beneficiary file.
///
/// A patient's residence history is carried in the `zip`, `zip_start` and
/// `zip_end` columns as `;`-separated lists of equal length; a blank `zip_end`
/// entry leaves that span open.
pub fn load_beneficiaries(path: &Path, format: &TableFormat) -> Result<Loaded<Beneficiary>> {
    let mut reader = format.reader(path)?;
    let header = Header::new(reader.headers().map_err(|e| Error::csv(path, e))?);
    let cols: Vec<usize> = BENEFICIARY_COLUMNS
        .iter()
        .map(|c| header.require(path, c))
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    let mut rejects = Vec::new();
    let mut seen = HashSet::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::csv(path, e))?;
        let field = |k: usize| record.get(cols[k]).unwrap_or("").trim();
        match parse_beneficiary(row, &field) {
            Ok(b) => {
                if !seen.insert(b.patient_id.clone()) {
                    return Err(Error::Duplicate {
                        path: path.to_path_buf(),
                        what: "patient_id",
                        key: b.patient_id,
                    });
                }
                records.push(b);
            }
            Err(issue) => rejects.push(issue),
        }
    }
    Ok(Loaded { records, rejects })
}

fn parse_beneficiary<'a>(
    row: usize,
    field: &impl Fn(usize) -> &'a str,
) -> std::result::Result<Beneficiary, RowIssue> {
    let bad = |k: usize, why: String| RowIssue::new(row, BENEFICIARY_COLUMNS[k], why);
    let patient_id = field(0);
    if patient_id.is_empty() {
        return Err(bad(0, "empty patient_id".into()));
    }
    let birth_year = field(1)
        .parse::<i32>()
        .ok()
        .filter(|y| (1850..=2100).contains(y))
        .ok_or_else(|| bad(1, format!("invalid birth year `{}`", field(1))))?;
    let sex = field(2)
        .parse()
        .map_err(|_| bad(2, format!("unrecognized sex `{}`", field(2))))?;
    let race_ethnicity = field(3)
        .parse()
        .map_err(|_| bad(3, format!("unrecognized race `{}`", field(3))))?;
    let medicaid_eligible =
        parse_bool(field(4)).ok_or_else(|| bad(4, format!("not a boolean `{}`", field(4))))?;
    let entitlement_reason = field(5)
        .parse()
        .map_err(|_| bad(5, format!("unrecognized entitlement `{}`", field(5))))?;

    let zips: Vec<&str> = field(6).split(';').map(str::trim).collect();
    let starts: Vec<&str> = field(7).split(';').map(str::trim).collect();
    let ends: Vec<&str> = field(8).split(';').map(str::trim).collect();
    if zips.len() != starts.len() || zips.len() != ends.len() {
        return Err(bad(6, "zip, zip_start and zip_end list lengths differ".into()));
    }
    let mut zip_history = Vec::with_capacity(zips.len());
    for ((zip, start), end) in zips.iter().zip(&starts).zip(&ends) {
        if !is_zip(zip) {
            return Err(bad(6, format!("invalid zip `{zip}`")));
        }
        let start = parse_date(start).ok_or_else(|| bad(7, format!("invalid date `{start}`")))?;
        let end = match *end {
            "" => None,
            e => Some(parse_date(e).ok_or_else(|| bad(8, format!("invalid date `{e}`")))?),
        };
        if end.is_some_and(|e| e < start) {
            return Err(bad(8, "zip span ends before it starts".into()));
        }
        zip_history.push(ZipSpan {
            zip: zip.to_string(),
            start,
            end,
        });
    }
    for pair in zip_history.windows(2) {
        let ordered = pair[0].end.is_some_and(|e| e < pair[1].start);
        if !ordered {
            return Err(bad(7, "zip spans overlap or are out of order".into()));
        }
    }

    Ok(Beneficiary {
        patient_id: patient_id.to_string(),
        birth_year,
        sex,
        race_ethnicity,
        medicaid_eligible,
        entitlement_reason,
        zip_history,
    })
}

/// Loads the hospitalization file. Diagnosis slots are every `dxN` column plus
/// any trailing unnamed fields; blanks are skipped and claim order is kept.
pub fn load_hospitalizations(
    path: &Path,
    format: &TableFormat,
    window: &StudyWindow,
) -> Result<Loaded<HospitalizationRecord>> {
    let mut reader = format.reader(path)?;
    let raw_header = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let header = Header::new(&raw_header);
    let cols: Vec<usize> = HOSPITALIZATION_COLUMNS
        .iter()
        .map(|c| header.require(path, c))
        .collect::<Result<_>>()?;
    let mut dx_cols: Vec<(u32, usize)> = raw_header
        .iter()
        .enumerate()
        .filter_map(|(i, h)| {
            let h = h.trim().to_ascii_lowercase();
            h.strip_prefix("dx")
                .and_then(|n| n.parse::<u32>().ok())
                .map(|n| (n, i))
        })
        .collect();
    dx_cols.sort_unstable();
    let dx_cols: Vec<usize> = dx_cols.into_iter().map(|(_, i)| i).collect();
    let width = header.len();

    let mut records = Vec::new();
    let mut rejects = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::csv(path, e))?;
        let field = |k: usize| record.get(cols[k]).unwrap_or("").trim();
        let codes: Vec<String> = dx_cols
            .iter()
            .filter_map(|&c| record.get(c))
            .chain(record.iter().skip(width))
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .map(str::to_string)
            .collect();
        match parse_hospitalization(row, &field, codes, window) {
            Ok(h) => records.push(h),
            Err(issue) => rejects.push(issue),
        }
    }
    Ok(Loaded { records, rejects })
}

fn parse_hospitalization<'a>(
    row: usize,
    field: &impl Fn(usize) -> &'a str,
    diagnosis_codes: Vec<String>,
    window: &StudyWindow,
) -> std::result::Result<HospitalizationRecord, RowIssue> {
    let bad = |k: usize, why: String| RowIssue::new(row, HOSPITALIZATION_COLUMNS[k], why);
    let patient_id = field(0);
    if patient_id.is_empty() {
        return Err(bad(0, "empty patient_id".into()));
    }
    let admission_date =
        parse_date(field(1)).ok_or_else(|| bad(1, format!("invalid date `{}`", field(1))))?;
    if !window.contains(admission_date) {
        return Err(bad(
            1,
            format!(
                "admission date {admission_date} outside study window {}..{}",
                window.start, window.end
            ),
        ));
    }
    let admission_source = field(2)
        .parse()
        .map_err(|_| bad(2, format!("unrecognized admission source `{}`", field(2))))?;
    let zip = field(3);
    if !is_zip(zip) {
        return Err(bad(3, format!("invalid zip `{zip}`")));
    }
    let county_fips = field(4);
    if !geo::is_county_fips(county_fips) {
        return Err(bad(4, format!("invalid county FIPS `{county_fips}`")));
    }
    let state = field(5).to_ascii_uppercase();
    let Some(prefix) = geo::state_fips(&state) else {
        return Err(bad(5, format!("unknown state `{state}`")));
    };
    if !county_fips.starts_with(prefix) {
        return Err(bad(
            4,
            format!("county FIPS {county_fips} is not in state {state} ({prefix})"),
        ));
    }
    if diagnosis_codes.is_empty() {
        return Err(RowIssue::new(row, "dx1", "no diagnosis codes"));
    }
    if diagnosis_codes.len() > MAX_DIAGNOSIS_SLOTS {
        return Err(RowIssue::new(
            row,
            format!("dx{}", MAX_DIAGNOSIS_SLOTS + 1),
            format!("too many diagnosis slots ({})", diagnosis_codes.len()),
        ));
    }
    Ok(HospitalizationRecord {
        patient_id: patient_id.to_string(),
        admission_date,
        diagnosis_codes,
        admission_source,
        zip: zip.to_string(),
        county_fips: county_fips.to_string(),
        state,
    })
}

/// Writes beneficiaries in the loader's format.
pub fn write_beneficiaries<W: Write>(out: W, rows: &[Beneficiary]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BENEFICIARY_COLUMNS)?;
    for b in rows {
        let join = |f: &dyn Fn(&ZipSpan) -> String| {
            b.zip_history.iter().map(f).collect::<Vec<_>>().join(";")
        };
        w.write_record([
            b.patient_id.clone(),
            b.birth_year.to_string(),
            b.sex.name().to_string(),
            b.race_ethnicity.name().to_string(),
            (b.medicaid_eligible as u8).to_string(),
            b.entitlement_reason.name().to_string(),
            join(&|s| s.zip.clone()),
            join(&|s| s.start.format(DATE_FORMAT).to_string()),
            join(&|s| s.end.map(|e| e.format(DATE_FORMAT).to_string()).unwrap_or_default()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes hospitalizations with `dx1..dx25` columns.
pub fn write_hospitalizations<W: Write>(
    out: W,
    rows: &[HospitalizationRecord],
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = HOSPITALIZATION_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((1..=MAX_DIAGNOSIS_SLOTS).map(|i| format!("dx{i}")));
    w.write_record(&header)?;
    for h in rows {
        let mut rec = vec![
            h.patient_id.clone(),
            h.admission_date.format(DATE_FORMAT).to_string(),
            h.admission_source.name().to_string(),
            h.zip.clone(),
            h.county_fips.clone(),
            h.state.clone(),
        ];
        rec.extend(h.diagnosis_codes.iter().cloned());
        rec.resize(HOSPITALIZATION_COLUMNS.len() + MAX_DIAGNOSIS_SLOTS, String::new());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Index of a patient within a [`Cohort`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PatientIdx(pub u32);

impl PatientIdx {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// One dementia code occurrence after cohort filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodedEvent {
    pub patient: PatientIdx,
    pub date: NaiveDate,
    pub code: CodeId,
    pub category: DiagnosticCategory,
    /// Retained hospitalization and diagnosis slot the event was first seen in.
    pub hospitalization: u32,
    pub slot: u8,
}

/// A hospitalization that passed the record filters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetainedHospitalization {
    pub patient: PatientIdx,
    pub date: NaiveDate,
    /// Position in the record slice passed to [`build_cohort`].
    pub source_record: usize,
    /// Distinct qualifying codes, in claim order.
    pub codes: Vec<CodeId>,
}

#[derive(Debug, Clone)]
pub struct CohortPatient {
    pub beneficiary: Beneficiary,
    pub state: String,
    pub county_fips: String,
    pub zip: String,
    pub first_admission: NaiveDate,
    pub age_at_first_admission: i32,
    pub hospitalizations: Range<usize>,
    pub events: Range<usize>,
}

impl CohortPatient {
    pub fn id(&self) -> &str {
        &self.beneficiary.patient_id
    }

    pub fn race(&self) -> RaceEthnicity {
        self.beneficiary.race_ethnicity
    }
}

/// Counts of what the filters removed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionTally {
    pub records_nursing_facility: usize,
    pub records_without_qualifying_code: usize,
    pub records_outside_window: usize,
    pub records_under_min_age: usize,
    pub records_unknown_patient: usize,
    pub patients_without_retained_record: usize,
    pub patients_zip_unstable: usize,
}

/// The analytic cohort: retained patients, their hospitalizations and events.
///
/// Patients are ordered by id; events are ordered by patient, date and code.
#[derive(Debug, Clone)]
pub struct Cohort {
    pub window: StudyWindow,
    pub min_age: i32,
    codebook: Codebook,
    patients: Vec<CohortPatient>,
    hospitalizations: Vec<RetainedHospitalization>,
    events: Vec<CodedEvent>,
    pub exclusions: ExclusionTally,
}

impl Cohort {
    pub fn codebook(&self) -> &Codebook {
        &self.codebook
    }

    pub fn patients(&self) -> &[CohortPatient] {
        &self.patients
    }

    pub fn patient(&self, idx: PatientIdx) -> &CohortPatient {
        &self.patients[idx.index()]
    }

    pub fn hospitalizations(&self) -> &[RetainedHospitalization] {
        &self.hospitalizations
    }

    pub fn events(&self) -> &[CodedEvent] {
        &self.events
    }

    pub fn events_of(&self, idx: PatientIdx) -> &[CodedEvent] {
        &self.events[self.patients[idx.index()].events.clone()]
    }

    pub fn hospitalizations_of(&self, idx: PatientIdx) -> &[RetainedHospitalization] {
        &self.hospitalizations[self.patients[idx.index()].hospitalizations.clone()]
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn patient_indices(&self) -> impl Iterator<Item = PatientIdx> + '_ {
        (0..self.patients.len() as u32).map(PatientIdx)
    }
}

struct PatientBuild {
    patient: CohortPatient,
    hospitalizations: Vec<RetainedHospitalization>,
    events: Vec<CodedEvent>,
    tally: ExclusionTally,
    retained: bool,
}

/// Applies the cohort filters.
///
/// A record is retained when it is inside `window`, its admission source is
/// not a nursing facility, the patient is at least `min_age` in the admission
/// year, and it carries at least one qualifying code. A patient is retained
/// when they have a retained record and a single zip code throughout the
/// window. Qualifying codes on retained records become events, one per
/// (patient, date, code).
pub fn build_cohort(
    beneficiaries: &[Beneficiary],
    records: &[HospitalizationRecord],
    window: StudyWindow,
    min_age: i32,
    codebook: &Codebook,
) -> Result<Cohort> {
    let by_id: HashMap<&str, &Beneficiary> = beneficiaries
        .iter()
        .map(|b| (b.patient_id.as_str(), b))
        .collect();
    let mut grouped: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        grouped.entry(r.patient_id.as_str()).or_default().push(i);
    }

    let mut tally = ExclusionTally::default();
    let groups: Vec<(&Beneficiary, Vec<usize>)> = grouped
        .into_iter()
        .filter_map(|(id, idx)| match by_id.get(id) {
            Some(b) => Some((*b, idx)),
            None => {
                tally.records_unknown_patient += idx.len();
                None
            }
        })
        .collect();

    let built: Vec<PatientBuild> = groups
        .par_iter()
        .map(|(b, idx)| build_patient(b, idx, records, &window, min_age, codebook))
        .collect::<Result<_>>()?;

    let mut patients = Vec::new();
    let mut hospitalizations = Vec::new();
    let mut events = Vec::new();
    for build in built {
        merge_tally(&mut tally, &build.tally);
        if !build.retained {
            continue;
        }
        let idx = PatientIdx(patients.len() as u32);
        let hosp_offset = hospitalizations.len();
        let event_offset = events.len();
        let mut patient = build.patient;
        patient.hospitalizations = hosp_offset..hosp_offset + build.hospitalizations.len();
        patient.events = event_offset..event_offset + build.events.len();
        hospitalizations.extend(build.hospitalizations.into_iter().map(|mut h| {
            h.patient = idx;
            h
        }));
        events.extend(build.events.into_iter().map(|mut e| {
            e.patient = idx;
            e.hospitalization += hosp_offset as u32;
            e
        }));
        patients.push(patient);
    }

    Ok(Cohort {
        window,
        min_age,
        codebook: codebook.clone(),
        patients,
        hospitalizations,
        events,
        exclusions: tally,
    })
}

fn merge_tally(into: &mut ExclusionTally, from: &ExclusionTally) {
    into.records_nursing_facility += from.records_nursing_facility;
    into.records_without_qualifying_code += from.records_without_qualifying_code;
    into.records_outside_window += from.records_outside_window;
    into.records_under_min_age += from.records_under_min_age;
    into.records_unknown_patient += from.records_unknown_patient;
    into.patients_without_retained_record += from.patients_without_retained_record;
    into.patients_zip_unstable += from.patients_zip_unstable;
}

/// Admission date, record position and the (code, slot) pairs it qualified with.
type KeptRecord = (NaiveDate, usize, Vec<(CodeId, u8)>);

fn build_patient(
    beneficiary: &Beneficiary,
    record_idx: &[usize],
    records: &[HospitalizationRecord],
    window: &StudyWindow,
    min_age: i32,
    codebook: &Codebook,
) -> Result<PatientBuild> {
    let mut tally = ExclusionTally::default();
    let mut kept: Vec<KeptRecord> = Vec::new();
    for &i in record_idx {
        let r = &records[i];
        if !window.contains(r.admission_date) {
            tally.records_outside_window += 1;
            continue;
        }
        if r.admission_source == AdmissionSource::NursingFacility {
            tally.records_nursing_facility += 1;
            continue;
        }
        if r.admission_date.year() - beneficiary.birth_year < min_age {
            tally.records_under_min_age += 1;
            continue;
        }
        let mut seen = BTreeSet::new();
        let slots: Vec<(CodeId, u8)> = r
            .diagnosis_codes
            .iter()
            .enumerate()
            .filter_map(|(slot, c)| codebook.id_of(c).map(|id| (id, slot as u8)))
            .filter(|(id, _)| seen.insert(*id))
            .collect();
        if slots.is_empty() {
            tally.records_without_qualifying_code += 1;
            continue;
        }
        kept.push((r.admission_date, i, slots));
    }
    kept.sort_by_key(|(date, i, _)| (*date, *i));

    let placeholder = CohortPatient {
        beneficiary: beneficiary.clone(),
        state: String::new(),
        county_fips: String::new(),
        zip: String::new(),
        first_admission: window.start,
        age_at_first_admission: 0,
        hospitalizations: 0..0,
        events: 0..0,
    };
    let reject = |mut tally: ExclusionTally, zip: bool| {
        if zip {
            tally.patients_zip_unstable += 1;
        } else {
            tally.patients_without_retained_record += 1;
        }
        PatientBuild {
            patient: placeholder.clone(),
            hospitalizations: Vec::new(),
            events: Vec::new(),
            tally,
            retained: false,
        }
    };

    if kept.is_empty() {
        return Ok(reject(tally, false));
    }
    let Some(zip) = beneficiary.stable_zip(window) else {
        return Ok(reject(tally, true));
    };

    let first = &records[kept[0].1];
    for (_, i, _) in &kept[1..] {
        let r = &records[*i];
        if r.county_fips != first.county_fips || r.state != first.state {
            return Err(Error::Geography {
                patient: beneficiary.patient_id.clone(),
                detail: format!(
                    "zip {zip} maps to both county {} ({}) and county {} ({})",
                    first.county_fips, first.state, r.county_fips, r.state
                ),
            });
        }
    }

    let mut hospitalizations = Vec::with_capacity(kept.len());
    let mut first_seen: BTreeMap<(NaiveDate, CodeId), (u32, u8)> = BTreeMap::new();
    for (h, (date, i, slots)) in kept.iter().enumerate() {
        for &(code, slot) in slots {
            first_seen.entry((*date, code)).or_insert((h as u32, slot));
        }
        hospitalizations.push(RetainedHospitalization {
            patient: PatientIdx(0),
            date: *date,
            source_record: *i,
            codes: slots.iter().map(|(c, _)| *c).collect(),
        });
    }
    let events = first_seen
        .into_iter()
        .map(|((date, code), (hospitalization, slot))| CodedEvent {
            patient: PatientIdx(0),
            date,
            code,
            category: codebook.get(code).category,
            hospitalization,
            slot,
        })
        .collect();

    let first_admission = kept[0].0;
    Ok(PatientBuild {
        patient: CohortPatient {
            state: first.state.clone(),
            county_fips: first.county_fips.clone(),
            zip: zip.to_string(),
            first_admission,
            age_at_first_admission: first_admission.year() - beneficiary.birth_year,
            ..placeholder
        },
        hospitalizations,
        events,
        tally,
        retained: true,
    })
}

/// One row of a tabulation: `count` out of `denominator`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub section: String,
    pub level: String,
    pub count: usize,
    pub denominator: usize,
}

impl Tally {
    pub fn percent(&self) -> f64 {
        if self.denominator == 0 {
            0.0
        } else {
            100.0 * self.count as f64 / self.denominator as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemographicSummary {
    pub patients: usize,
    pub hospitalizations: usize,
    pub rows: Vec<Tally>,
}

impl DemographicSummary {
    pub fn get(&self, section: &str, level: &str) -> Option<&Tally> {
        self.rows
            .iter()
            .find(|t| t.section == section && t.level == level)
    }
}

pub const AGE_BANDS: [(&str, i32, i32); 7] = [
    ("65-69", 65, 69),
    ("70-74", 70, 74),
    ("75-79", 75, 79),
    ("80-84", 80, 84),
    ("85-89", 85, 89),
    ("90-94", 90, 94),
    ("95+", 95, i32::MAX),
];

fn age_band(age: i32) -> &'static str {
    AGE_BANDS
        .iter()
        .find(|(_, lo, hi)| (*lo..=*hi).contains(&age))
        .map(|(label, _, _)| *label)
        .unwrap_or("<65")
}

/// Counts by sex, age band at first qualifying admission, race/ethnicity and
/// Medicaid eligibility.
pub fn demographic_summary(cohort: &Cohort) -> DemographicSummary {
    let n = cohort.len();
    let mut rows = Vec::new();
    let mut push = |section: &str, level: &str, count: usize| {
        rows.push(Tally {
            section: section.to_string(),
            level: level.to_string(),
            count,
            denominator: n,
        })
    };
    let ps = cohort.patients();

    for sex in Sex::ALL {
        push("sex", sex.name(), ps.iter().filter(|p| p.beneficiary.sex == sex).count());
    }
    let under = ps.iter().filter(|p| age_band(p.age_at_first_admission) == "<65").count();
    if under > 0 {
        push("age", "<65", under);
    }
    for (label, _, _) in AGE_BANDS {
        let count = ps
            .iter()
            .filter(|p| age_band(p.age_at_first_admission) == label)
            .count();
        push("age", label, count);
    }
    for race in RaceEthnicity::ALL {
        push("race", race.name(), ps.iter().filter(|p| p.race() == race).count());
    }
    let eligible = ps.iter().filter(|p| p.beneficiary.medicaid_eligible).count();
    push("medicaid", "Ineligible", n - eligible);
    push("medicaid", "Eligible", eligible);

    DemographicSummary {
        patients: n,
        hospitalizations: cohort.hospitalizations().len(),
        rows,
    }
}
