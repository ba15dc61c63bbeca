//! Transitive temporal pair mining.
//!
//! Every ordered pair of a patient's events is an exposure, not only
//! consecutive ones. The day lag between the two events picks one of four
//! buckets. Counts are kept per patient so that downstream correlation can
//! use intensity rather than presence.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::claims::{CodedEvent, Cohort, PatientIdx};
use crate::codebook::{Codebook, DiagnosticCategory};
use crate::strata::{StratumId, StratumLevel};

/// Days per month for bucketing.
pub const MONTH_DAYS: i64 = 30;
/// Days in three months for bucketing.
pub const QUARTER_DAYS: i64 = 90;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LagBucket {
    Cooccurrence,
    WithinOneMonth,
    OneToThreeMonths,
    OverThreeMonths,
}

impl LagBucket {
    pub const COUNT: usize = 4;

    pub const ALL: [LagBucket; 4] = [
        LagBucket::Cooccurrence,
        LagBucket::WithinOneMonth,
        LagBucket::OneToThreeMonths,
        LagBucket::OverThreeMonths,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            LagBucket::Cooccurrence => "Cooccurrence",
            LagBucket::WithinOneMonth => "WithinOneMonth",
            LagBucket::OneToThreeMonths => "OneToThreeMonths",
            LagBucket::OverThreeMonths => "OverThreeMonths",
        }
    }

    /// Inclusive day range covered by the bucket (`None` upper bound is open).
    pub fn day_range(self) -> (i64, Option<i64>) {
        match self {
            LagBucket::Cooccurrence => (0, Some(0)),
            LagBucket::WithinOneMonth => (1, Some(MONTH_DAYS)),
            LagBucket::OneToThreeMonths => (MONTH_DAYS + 1, Some(QUARTER_DAYS)),
            LagBucket::OverThreeMonths => (QUARTER_DAYS + 1, None),
        }
    }
}

impl fmt::Display for LagBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Maps a non-negative day lag to its bucket.
///
/// # Panics
///
/// Panics if `lag_days` is negative.
pub fn assign_bucket(lag_days: i64) -> LagBucket {
    assert!(lag_days >= 0, "lag must be non-negative, got {lag_days}");
    match lag_days {
        0 => LagBucket::Cooccurrence,
        1..=MONTH_DAYS => LagBucket::WithinOneMonth,
        _ if lag_days <= QUARTER_DAYS => LagBucket::OneToThreeMonths,
        _ => LagBucket::OverThreeMonths,
    }
}

/// Whether events are identified by individual code or by category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Granularity {
    Code17,
    Category5,
}

impl Granularity {
    pub fn dimension(self, codebook: &Codebook) -> usize {
        match self {
            Granularity::Code17 => codebook.len(),
            Granularity::Category5 => DiagnosticCategory::COUNT,
        }
    }

    pub fn item(self, event: &CodedEvent) -> u8 {
        match self {
            Granularity::Code17 => event.code.0,
            Granularity::Category5 => event.category.index() as u8,
        }
    }

    pub fn item_label(self, codebook: &Codebook, item: usize) -> String {
        match self {
            Granularity::Code17 => codebook.entries()[item].code.clone(),
            Granularity::Category5 => DiagnosticCategory::ALL[item].name().to_string(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Granularity::Code17 => "code17",
            Granularity::Category5 => "category5",
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Granularity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "code17" | "code" | "codes" => Ok(Granularity::Code17),
            "category5" | "category" | "categories" => Ok(Granularity::Category5),
            _ => Err(format!("unknown granularity `{s}` (expected code17 or category5)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairKey {
    pub bucket: LagBucket,
    pub antecedent: u8,
    pub consequent: u8,
}

impl PairKey {
    pub fn new(antecedent: u8, consequent: u8, bucket: LagBucket) -> Self {
        PairKey {
            bucket,
            antecedent,
            consequent,
        }
    }

    /// Position in a bucket-major `4 × dim × dim` layout.
    pub fn flat(self, dim: usize) -> usize {
        (self.bucket.index() * dim + self.antecedent as usize) * dim + self.consequent as usize
    }

    pub fn from_flat(flat: usize, dim: usize) -> Self {
        let consequent = flat % dim;
        let antecedent = (flat / dim) % dim;
        let bucket = LagBucket::ALL[flat / (dim * dim)];
        PairKey::new(antecedent as u8, consequent as u8, bucket)
    }
}

/// Calls `f(antecedent, consequent, bucket)` for every exposure in one
/// patient's date-sorted events.
///
/// Same-day pairs of distinct codes count in both directions. A code paired
/// with itself needs a positive lag. At category granularity the exclusion
/// is still decided on codes, so two different codes of one category on the
/// same day produce a category self-pair in each direction.
fn for_each_pair(events: &[CodedEvent], granularity: Granularity, mut f: impl FnMut(u8, u8, LagBucket)) {
    for (i, e1) in events.iter().enumerate() {
        let a = granularity.item(e1);
        for e2 in &events[i + 1..] {
            let lag = (e2.date - e1.date).num_days();
            let c = granularity.item(e2);
            if lag == 0 {
                if e1.code != e2.code {
                    f(a, c, LagBucket::Cooccurrence);
                    f(c, a, LagBucket::Cooccurrence);
                }
            } else {
                f(a, c, assign_bucket(lag));
            }
        }
    }
}

fn check_patient_events(events: &[CodedEvent]) {
    if let Some(first) = events.first() {
        assert!(
            events.iter().all(|e| e.patient == first.patient),
            "events must belong to one patient"
        );
    }
    assert!(
        events.windows(2).all(|w| w[0].date <= w[1].date),
        "events must be sorted by date"
    );
}

/// Pair-bucket counts for one patient.
///
/// # Panics
///
/// Panics if the events are not sorted by date or span several patients.
pub fn mine_patient(events: &[CodedEvent], granularity: Granularity) -> BTreeMap<PairKey, u32> {
    check_patient_events(events);
    let mut counts = BTreeMap::new();
    for_each_pair(events, granularity, |a, c, b| {
        *counts.entry(PairKey::new(a, c, b)).or_insert(0) += 1;
    });
    counts
}

/// One patient's mining result in flat-key form.
#[derive(Debug, Clone, Default)]
struct PatientPairs {
    items: Vec<u32>,
    pairs: Vec<(u32, u32)>,
}

fn mine_patient_flat(events: &[CodedEvent], granularity: Granularity, dim: usize, scratch: &mut Vec<u32>) -> PatientPairs {
    scratch.clear();
    scratch.resize(LagBucket::COUNT * dim * dim, 0);
    let mut items = vec![0u32; dim];
    for e in events {
        items[granularity.item(e) as usize] += 1;
    }
    for_each_pair(events, granularity, |a, c, b| {
        scratch[PairKey::new(a, c, b).flat(dim)] += 1;
    });
    let pairs = scratch
        .iter()
        .enumerate()
        .filter(|(_, &n)| n > 0)
        .map(|(k, &n)| (k as u32, n))
        .collect();
    PatientPairs { items, pairs }
}

/// A view of one pair's per-patient counts.
#[derive(Debug, Clone, Copy)]
pub struct PairExposure<'a> {
    pub key: PairKey,
    /// `(local patient position, count)`, ascending by position; absent patients count 0.
    pub counts: &'a [(u32, u32)],
}

/// Exposures aggregated over the patients of one stratum.
#[derive(Debug, Clone)]
pub struct MinedStratum {
    pub stratum: StratumId,
    pub granularity: Granularity,
    dimension: usize,
    patients: Vec<PatientIdx>,
    item_counts: Vec<u32>,
    exposures: Vec<Vec<(u32, u32)>>,
}

impl MinedStratum {
    fn assemble<'a>(
        stratum: StratumId,
        granularity: Granularity,
        dimension: usize,
        members: impl Iterator<Item = (PatientIdx, &'a PatientPairs)>,
    ) -> Self {
        let mut patients = Vec::new();
        let mut item_counts = Vec::new();
        let mut exposures = vec![Vec::new(); LagBucket::COUNT * dimension * dimension];
        for (local, (idx, mined)) in members.enumerate() {
            patients.push(idx);
            item_counts.extend_from_slice(&mined.items);
            for &(k, n) in &mined.pairs {
                exposures[k as usize].push((local as u32, n));
            }
        }
        MinedStratum {
            stratum,
            granularity,
            dimension,
            patients,
            item_counts,
            exposures,
        }
    }

    pub fn patient_count(&self) -> usize {
        self.patients.len()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Cohort indices of the member patients, ascending.
    pub fn patients(&self) -> &[PatientIdx] {
        &self.patients
    }

    /// Event counts per item for the patient at local position `local`.
    pub fn item_counts(&self, local: usize) -> &[u32] {
        &self.item_counts[local * self.dimension..(local + 1) * self.dimension]
    }

    /// Per-patient event counts of one item, dense over the stratum.
    pub fn item_column(&self, item: usize) -> Vec<u32> {
        self.item_counts
            .chunks_exact(self.dimension)
            .map(|row| row[item])
            .collect()
    }

    pub fn exposure(&self, key: PairKey) -> PairExposure<'_> {
        PairExposure {
            key,
            counts: &self.exposures[key.flat(self.dimension)],
        }
    }

    /// Every pair with at least one non-zero count, in bucket-major order.
    pub fn exposures(&self) -> impl Iterator<Item = PairExposure<'_>> + '_ {
        self.exposures
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_empty())
            .map(|(k, v)| PairExposure {
                key: PairKey::from_flat(k, self.dimension),
                counts: v,
            })
    }

    /// Total count of one pair over all patients.
    pub fn total(&self, key: PairKey) -> u64 {
        self.exposure(key).counts.iter().map(|&(_, n)| n as u64).sum()
    }
}

/// Per-patient mining results for a whole cohort, from which any stratum can
/// be assembled without re-mining.
#[derive(Debug, Clone)]
pub struct MinedCohort {
    granularity: Granularity,
    dimension: usize,
    per_patient: Vec<PatientPairs>,
}

impl MinedCohort {
    pub fn new(cohort: &Cohort, granularity: Granularity) -> Self {
        let dimension = granularity.dimension(cohort.codebook());
        let per_patient = cohort
            .patient_indices()
            .collect::<Vec<_>>()
            .par_iter()
            .map_init(Vec::new, |scratch, &idx| {
                mine_patient_flat(cohort.events_of(idx), granularity, dimension, scratch)
            })
            .collect();
        MinedCohort {
            granularity,
            dimension,
            per_patient,
        }
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn stratum(&self, cohort: &Cohort, stratum: &StratumId) -> MinedStratum {
        let members = cohort
            .patient_indices()
            .filter(|&i| stratum.contains(cohort.patient(i)))
            .map(|i| (i, &self.per_patient[i.index()]));
        MinedStratum::assemble(stratum.clone(), self.granularity, self.dimension, members)
    }

    /// Every non-empty stratum at `level`, ordered by stratum id.
    pub fn strata(&self, cohort: &Cohort, level: StratumLevel) -> Vec<MinedStratum> {
        let mut groups: BTreeMap<StratumId, Vec<PatientIdx>> = BTreeMap::new();
        for i in cohort.patient_indices() {
            groups
                .entry(StratumId::of(level, cohort.patient(i)))
                .or_default()
                .push(i);
        }
        groups
            .into_iter()
            .map(|(id, members)| {
                MinedStratum::assemble(
                    id,
                    self.granularity,
                    self.dimension,
                    members.into_iter().map(|i| (i, &self.per_patient[i.index()])),
                )
            })
            .collect()
    }
}

/// Mines the patients of one stratum.
pub fn mine_stratum(cohort: &Cohort, stratum: &StratumId, granularity: Granularity) -> MinedStratum {
    let dimension = granularity.dimension(cohort.codebook());
    let members: Vec<PatientIdx> = cohort
        .patient_indices()
        .filter(|&i| stratum.contains(cohort.patient(i)))
        .collect();
    let mined: Vec<PatientPairs> = members
        .par_iter()
        .map_init(Vec::new, |scratch, &idx| {
            mine_patient_flat(cohort.events_of(idx), granularity, dimension, scratch)
        })
        .collect();
    MinedStratum::assemble(
        stratum.clone(),
        granularity,
        dimension,
        members.into_iter().zip(mined.iter()),
    )
}

/// Writes `stratum,antecedent,consequent,bucket,patient_id,count` rows.
pub fn write_exposures<W: Write>(out: W, mined: &MinedStratum, cohort: &Cohort) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["stratum", "antecedent", "consequent", "bucket", "patient_id", "count"])?;
    let cb = cohort.codebook();
    for exposure in mined.exposures() {
        let a = mined.granularity.item_label(cb, exposure.key.antecedent as usize);
        let c = mined.granularity.item_label(cb, exposure.key.consequent as usize);
        for &(local, n) in exposure.counts {
            let pid = cohort.patient(mined.patients[local as usize]).id();
            w.write_record([
                mined.stratum.to_string().as_str(),
                &a,
                &c,
                exposure.key.bucket.name(),
                pid,
                &n.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::CodeId;
    use chrono::NaiveDate;

    fn ev(code: u8, day: i64) -> CodedEvent {
        let cb = Codebook::standard();
        CodedEvent {
            patient: PatientIdx(0),
            date: NaiveDate::from_ymd_opt(2016, 1, 1).unwrap() + chrono::Duration::days(day),
            code: CodeId(code),
            category: cb.get(CodeId(code)).category,
            hospitalization: 0,
            slot: 0,
        }
    }

    const G300: u8 = 0;
    const G309: u8 = 3;
    const F0390: u8 = 8;
    const G3101: u8 = 14;

    #[test]
    fn bucket_boundaries() {
        assert_eq!(assign_bucket(0), LagBucket::Cooccurrence);
        assert_eq!(assign_bucket(1), LagBucket::WithinOneMonth);
        assert_eq!(assign_bucket(30), LagBucket::WithinOneMonth);
        assert_eq!(assign_bucket(31), LagBucket::OneToThreeMonths);
        assert_eq!(assign_bucket(45), LagBucket::OneToThreeMonths);
        assert_eq!(assign_bucket(90), LagBucket::OneToThreeMonths);
        assert_eq!(assign_bucket(91), LagBucket::OverThreeMonths);
        assert_eq!(assign_bucket(10_000), LagBucket::OverThreeMonths);
    }

    #[test]
    #[should_panic(expected = "non-negative")]
    fn negative_lag_panics() {
        assign_bucket(-1);
    }

    #[test]
    fn same_day_pairs_are_symmetric() {
        let m = mine_patient(&[ev(G309, 0), ev(F0390, 0)], Granularity::Code17);
        assert_eq!(m.len(), 2);
        assert_eq!(m[&PairKey::new(G309, F0390, LagBucket::Cooccurrence)], 1);
        assert_eq!(m[&PairKey::new(F0390, G309, LagBucket::Cooccurrence)], 1);
    }

    #[test]
    fn single_ordered_pair() {
        let m = mine_patient(&[ev(G309, 0), ev(F0390, 45)], Granularity::Code17);
        assert_eq!(m.len(), 1);
        assert_eq!(m[&PairKey::new(G309, F0390, LagBucket::OneToThreeMonths)], 1);
    }

    #[test]
    fn transitive_pairs() {
        let m = mine_patient(&[ev(G300, 0), ev(G309, 10), ev(F0390, 100)], Granularity::Code17);
        let expected: BTreeMap<PairKey, u32> = [
            (PairKey::new(G300, G309, LagBucket::WithinOneMonth), 1),
            (PairKey::new(G300, F0390, LagBucket::OverThreeMonths), 1),
            (PairKey::new(G309, F0390, LagBucket::OneToThreeMonths), 1),
        ]
        .into_iter()
        .collect();
        assert_eq!(m, expected);
    }

    #[test]
    fn self_pairs_need_positive_lag() {
        let m = mine_patient(&[ev(G309, 0), ev(G309, 200)], Granularity::Code17);
        assert_eq!(m[&PairKey::new(G309, G309, LagBucket::OverThreeMonths)], 1);

        // two Alzheimer's codes on one day: a category self-pair each way
        let m = mine_patient(&[ev(G300, 0), ev(G309, 0)], Granularity::Category5);
        assert_eq!(m[&PairKey::new(0, 0, LagBucket::Cooccurrence)], 2);
    }

    #[test]
    #[should_panic(expected = "sorted")]
    fn unsorted_input_panics() {
        mine_patient(&[ev(G309, 5), ev(G3101, 0)], Granularity::Code17);
    }

    #[test]
    fn flat_key_round_trip() {
        for dim in [5usize, 17] {
            for k in 0..4 * dim * dim {
                assert_eq!(PairKey::from_flat(k, dim).flat(dim), k);
            }
        }
    }

    #[test]
    fn granularity_parsing() {
        assert_eq!("Code17".parse::<Granularity>().unwrap(), Granularity::Code17);
        assert_eq!("category-5".parse::<Granularity>().unwrap(), Granularity::Category5);
        assert!("icd9".parse::<Granularity>().is_err());
    }
}
