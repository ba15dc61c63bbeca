use std::collections::BTreeMap;

use proptest::prelude::*;

use signal_decay::claims::{build_cohort, StudyWindow};
use signal_decay::codebook::{Codebook, DiagnosticCategory};
use signal_decay::strata::{StratumId, StratumLevel};
use signal_decay::synth::{self, CodingProfile, CountySpec, ScenarioConfig};
use signal_decay::tspm::{assign_bucket, mine_patient, Granularity, LagBucket, MinedCohort, PairKey};

fn small_scenario(n: usize) -> ScenarioConfig {
    ScenarioConfig {
        name: "mining".into(),
        window: StudyWindow::default(),
        baseline: CodingProfile::default(),
        counties: vec![
            CountySpec::new("25001", "MA", n),
            CountySpec::new("25003", "MA", n),
            CountySpec::new("39001", "OH", n),
        ],
        regression: None,
    }
}

#[test]
fn bucket_edges() {
    let cases = [
        (0, LagBucket::Cooccurrence),
        (1, LagBucket::WithinOneMonth),
        (30, LagBucket::WithinOneMonth),
        (31, LagBucket::OneToThreeMonths),
        (90, LagBucket::OneToThreeMonths),
        (91, LagBucket::OverThreeMonths),
        (1000, LagBucket::OverThreeMonths),
    ];
    for (lag, bucket) in cases {
        assert_eq!(assign_bucket(lag), bucket, "lag {lag}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cohort_totals_are_sums_of_patients(seed in 0..1000u64, n in 5..40usize) {
        let g = synth::generate(&small_scenario(n), seed).unwrap();
        let cohort = build_cohort(&g.beneficiaries, &g.hospitalizations, StudyWindow::default(), 65, Codebook::standard()).unwrap();
        for granularity in [Granularity::Code17, Granularity::Category5] {
            let mined = MinedCohort::new(&cohort, granularity);
            let national = mined.stratum(&cohort, &StratumId::National);
            let mut expected: BTreeMap<PairKey, u64> = BTreeMap::new();
            for idx in cohort.patient_indices() {
                for (k, v) in mine_patient(cohort.events_of(idx), granularity) {
                    *expected.entry(k).or_default() += v as u64;
                }
            }
            for (k, v) in &expected {
                prop_assert_eq!(national.total(*k), *v);
            }
            let grand: u64 = expected.values().sum();
            let all: u64 = national.exposures().map(|e| national.total(e.key)).sum();
            prop_assert_eq!(all, grand);

            // strata partition the national cohort
            for level in [StratumLevel::State, StratumLevel::County, StratumLevel::Race] {
                let strata = mined.strata(&cohort, level);
                let patients: usize = strata.iter().map(|s| s.patient_count()).sum();
                prop_assert_eq!(patients, cohort.len());
                for k in expected.keys() {
                    let summed: u64 = strata.iter().map(|s| s.total(*k)).sum();
                    prop_assert_eq!(summed, national.total(*k));
                }
            }
        }
    }

    #[test]
    fn category_counts_aggregate_code_counts(seed in 0..1000u64) {
        let g = synth::generate(&small_scenario(20), seed).unwrap();
        let cohort = build_cohort(&g.beneficiaries, &g.hospitalizations, StudyWindow::default(), 65, Codebook::standard()).unwrap();
        let cb = cohort.codebook();
        for idx in cohort.patient_indices() {
            let events = cohort.events_of(idx);
            let mut folded: BTreeMap<PairKey, u32> = BTreeMap::new();
            for (k, v) in mine_patient(events, Granularity::Code17) {
                let cat = |c: u8| cb.entries()[c as usize].category.index() as u8;
                *folded.entry(PairKey::new(cat(k.antecedent), cat(k.consequent), k.bucket)).or_default() += v;
            }
            prop_assert_eq!(mine_patient(events, Granularity::Category5), folded);
        }
    }
}

#[test]
fn dimensions_follow_granularity() {
    let cb = Codebook::standard();
    assert_eq!(Granularity::Code17.dimension(cb), 17);
    assert_eq!(Granularity::Category5.dimension(cb), DiagnosticCategory::COUNT);
}
