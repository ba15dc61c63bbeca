//! Synthetic cohorts with planted coding behavior.
//!
//! Every county draws its patients from a [`CodingProfile`]. A patient's first
//! hospitalization gets a code from the profile's category and code mixes;
//! each later hospitalization carries that code forward, except that with
//! probability `decay` a specific code is replaced by a non-specific one. The
//! amount by which a county's profile departs from the baseline is recorded in
//! [`PlantedTruth`], so that similarity scores can be checked against it.
//!
//! Output is a pure function of the scenario and the seed: county `i` draws
//! from its own ChaCha8 stream, and rows are written sorted by patient and
//! date.

use std::collections::{BTreeMap, HashSet};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate};
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::claims::{
    write_beneficiaries, write_hospitalizations, AdmissionSource, Beneficiary, EntitlementReason,
    HospitalizationRecord, RaceEthnicity, Sex, StudyWindow, ZipSpan, AGE_BANDS,
};
use crate::codebook::{CodeId, Codebook, DiagnosticCategory};
use crate::error::{Error, Result};
use crate::geo;
use crate::regression::{write_covariates, CountyCovariates, PREDICTORS};
use crate::similarity::{write_scores, SimilarityMethod, SimilarityScore};
use crate::strata::StratumId;
use crate::table::create;
use crate::tspm::LagBucket;

pub const SCENARIOS: [&str; 3] = ["uniform", "planted-divergence", "regression-recovery"];

pub const BENEFICIARIES_FILE: &str = "beneficiaries.csv";
pub const HOSPITALIZATIONS_FILE: &str = "hospitalizations.csv";
pub const COVARIATES_FILE: &str = "covariates.csv";
pub const TRUTH_FILE: &str = "truth.toml";
pub const PLANTED_SCORES_FILE: &str = "planted_scores.csv";

/// Coefficients of the county model in predictor order.
pub const PLANTED_COEFFICIENTS: [f64; 9] = [-0.13, 0.24, -0.19, -0.07, 0.32, 1.27, -0.13, -0.16, 0.27];

const PROBABILITY_TOLERANCE: f64 = 1e-9;

/// Share of patients by age band at first admission, aligned with [`AGE_BANDS`].
const AGE_WEIGHTS: [f64; 7] = [5.2, 9.1, 14.5, 20.6, 24.6, 18.9, 7.2];
const OLDEST_AGE: i32 = 100;

/// Longest revisit gap drawn for the open-ended bucket.
const LONGEST_GAP: i64 = 365;

/// Non-dementia diagnoses used to pad claims.
const FILLER_CODES: [&str; 8] = ["I10", "E119", "N179", "J189", "I509", "E785", "N390", "R4182"];
const MAX_FILLERS: usize = 3;

/// Ranges for drawn county covariates, aligned with [`PREDICTORS`].
const COVARIATE_RANGES: [(f64, f64); 9] = [
    (0.05, 0.35),
    (0.02, 0.12),
    (0.0, 1.0),
    (0.10, 0.60),
    (0.05, 0.35),
    (0.02, 0.15),
    (0.0, 0.40),
    (0.0, 0.40),
    (0.0, 0.15),
];

/// Everything that shapes a county's patients and their coding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodingProfile {
    pub female: f64,
    pub unknown_sex: f64,
    pub medicaid: f64,
    /// Share entitled through disability rather than age.
    pub disability: f64,
    /// Over [`RaceEthnicity::ALL`].
    pub race_mix: Vec<f64>,
    /// Category of the first code, over [`DiagnosticCategory::ALL`].
    pub category_mix: Vec<f64>,
    /// Code within each category, in codebook order.
    pub code_mix: Vec<Vec<f64>>,
    /// Chance that a revisit downgrades a specific code to a non-specific one.
    pub decay: f64,
    /// Gap before each revisit, over [`LagBucket::ALL`].
    pub gap_mix: Vec<f64>,
    /// `visits[k]` is the chance of `k + 1` hospitalizations.
    pub visits: Vec<f64>,
    /// Chance that the first hospitalization also carries a second dementia
    /// code drawn from the same mixes.
    pub secondary_rate: f64,
    /// Chance that a revisit is admitted from a nursing facility.
    pub nursing_rate: f64,
    /// Chance that a patient changes zip code inside the study window.
    pub mover_rate: f64,
}

impl Default for CodingProfile {
    fn default() -> Self {
        let codebook = Codebook::standard();
        CodingProfile {
            female: 0.604,
            unknown_sex: 0.001,
            medicaid: 0.327,
            disability: 0.12,
            race_mix: vec![0.058, 0.005, 0.022, 0.107, 0.796, 0.006, 0.006],
            category_mix: vec![0.30, 0.10, 0.45, 0.02, 0.13],
            code_mix: DiagnosticCategory::ALL
                .iter()
                .map(|&c| {
                    let n = codebook.codes_in(c).len();
                    vec![1.0 / n as f64; n]
                })
                .collect(),
            decay: 0.15,
            gap_mix: vec![0.10, 0.30, 0.30, 0.30],
            visits: vec![0.10, 0.15, 0.20, 0.20, 0.15, 0.10, 0.10],
            secondary_rate: 0.30,
            nursing_rate: 0.10,
            mover_rate: 0.0,
        }
    }
}

impl CodingProfile {
    pub fn validate(&self, codebook: &Codebook) -> Result<()> {
        for (name, p) in [
            ("female", self.female),
            ("unknown_sex", self.unknown_sex),
            ("medicaid", self.medicaid),
            ("disability", self.disability),
            ("decay", self.decay),
            ("secondary_rate", self.secondary_rate),
            ("nursing_rate", self.nursing_rate),
            ("mover_rate", self.mover_rate),
        ] {
            check_probability(name, p)?;
        }
        if self.female + self.unknown_sex > 1.0 + PROBABILITY_TOLERANCE {
            return Err(Error::Config("female + unknown_sex exceeds 1".into()));
        }
        check_mix("race_mix", &self.race_mix, Some(RaceEthnicity::ALL.len()))?;
        check_mix("category_mix", &self.category_mix, Some(DiagnosticCategory::COUNT))?;
        check_mix("gap_mix", &self.gap_mix, Some(LagBucket::ALL.len()))?;
        check_mix("visits", &self.visits, None)?;
        if self.code_mix.len() != DiagnosticCategory::COUNT {
            return Err(Error::Config(format!(
                "code_mix has {} entries, expected one per category ({})",
                self.code_mix.len(),
                DiagnosticCategory::COUNT
            )));
        }
        for (c, mix) in DiagnosticCategory::ALL.iter().zip(&self.code_mix) {
            let n = codebook.codes_in(*c).len();
            check_mix(&format!("code_mix for {}", c.name()), mix, Some(n))?;
        }
        if codebook.codes_in(DiagnosticCategory::NonSpecificDementia).is_empty() && self.decay > 0.0 {
            return Err(Error::Config("decay needs at least one non-specific code".into()));
        }
        Ok(())
    }

    /// Distance from `baseline`: the decay difference plus half the L1
    /// distance between category mixes.
    pub fn divergence(&self, baseline: &CodingProfile) -> f64 {
        let mix: f64 = self
            .category_mix
            .iter()
            .zip(&baseline.category_mix)
            .map(|(a, b)| (a - b).abs())
            .sum();
        (self.decay - baseline.decay).abs() + 0.5 * mix
    }
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("{name} must be in [0, 1], got {p}")));
    }
    Ok(())
}

fn check_mix(name: &str, mix: &[f64], len: Option<usize>) -> Result<()> {
    if let Some(len) = len {
        if mix.len() != len {
            return Err(Error::Config(format!("{name} has {} entries, expected {len}", mix.len())));
        }
    }
    if mix.is_empty() {
        return Err(Error::Config(format!("{name} is empty")));
    }
    if let Some(bad) = mix.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(Error::Config(format!("{name} has invalid weight {bad}")));
    }
    let sum: f64 = mix.iter().sum();
    if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
        return Err(Error::Config(format!("{name} sums to {sum}, not 1")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountySpec {
    pub fips: String,
    pub state: String,
    pub n_patients: usize,
    /// Added to the decay of the county's profile.
    #[serde(default)]
    pub decay_shift: f64,
    /// Replaces the baseline profile for this county.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<CodingProfile>,
}

impl CountySpec {
    pub fn new(fips: impl Into<String>, state: impl Into<String>, n_patients: usize) -> Self {
        CountySpec {
            fips: fips.into(),
            state: state.into(),
            n_patients,
            decay_shift: 0.0,
            profile: None,
        }
    }

    /// The profile this county draws from.
    pub fn profile(&self, baseline: &CodingProfile) -> CodingProfile {
        let mut p = self.profile.clone().unwrap_or_else(|| baseline.clone());
        p.decay += self.decay_shift;
        p
    }
}

/// County outcomes generated from covariates rather than from claims.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionPlant {
    pub intercept: f64,
    /// Aligned with [`PREDICTORS`].
    pub coefficients: Vec<f64>,
    pub noise_sd: f64,
    /// Added to the outcome of every county in the named state.
    #[serde(default)]
    pub state_effects: BTreeMap<String, f64>,
}

impl Default for RegressionPlant {
    fn default() -> Self {
        RegressionPlant {
            intercept: 0.9,
            coefficients: PLANTED_COEFFICIENTS.to_vec(),
            noise_sd: 0.05,
            state_effects: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub window: StudyWindow,
    #[serde(default)]
    pub baseline: CodingProfile,
    pub counties: Vec<CountySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regression: Option<RegressionPlant>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn patient_count(&self) -> usize {
        self.counties.iter().map(|c| c.n_patients).sum()
    }

    pub fn validate(&self, codebook: &Codebook) -> Result<()> {
        if self.counties.is_empty() {
            return Err(Error::Config(format!("scenario `{}` has no counties", self.name)));
        }
        self.baseline
            .validate(codebook)
            .map_err(|e| Error::Config(format!("baseline: {e}")))?;
        let mut seen = HashSet::new();
        for c in &self.counties {
            let Some(prefix) = geo::state_fips(&c.state) else {
                return Err(Error::Config(format!("county {}: unknown state `{}`", c.fips, c.state)));
            };
            if !geo::is_county_fips(&c.fips) || !c.fips.starts_with(prefix) {
                return Err(Error::Config(format!(
                    "county `{}` is not a county FIPS code in {}",
                    c.fips, c.state
                )));
            }
            if !seen.insert(c.fips.as_str()) {
                return Err(Error::Config(format!("county {} is listed twice", c.fips)));
            }
            c.profile(&self.baseline)
                .validate(codebook)
                .map_err(|e| Error::Config(format!("county {}: {e}", c.fips)))?;
        }
        if let Some(plant) = &self.regression {
            if plant.coefficients.len() != PREDICTORS.len() {
                return Err(Error::Config(format!(
                    "regression plant has {} coefficients, expected {}",
                    plant.coefficients.len(),
                    PREDICTORS.len()
                )));
            }
            if !(plant.noise_sd >= 0.0 && plant.noise_sd.is_finite()) {
                return Err(Error::Config(format!("noise_sd must be finite and >= 0, got {}", plant.noise_sd)));
            }
        }
        Ok(())
    }
}

fn county_fips(state: &str, index: usize) -> String {
    let prefix = geo::state_fips(state).expect("known state");
    format!("{prefix}{:03}", 2 * index + 1)
}

fn counties(states: &[&str], per_state: usize, n_patients: usize) -> Vec<CountySpec> {
    (0..per_state)
        .flat_map(|i| states.iter().map(move |s| CountySpec::new(county_fips(s, i), *s, n_patients)))
        .collect()
}

/// The built-in scenarios, in [`SCENARIOS`] order.
pub fn scenario_library() -> Vec<ScenarioConfig> {
    SCENARIOS.iter().map(|n| scenario(n).expect("listed scenario")).collect()
}

/// A built-in scenario by name.
pub fn scenario(name: &str) -> Option<ScenarioConfig> {
    let config = match name {
        "uniform" => ScenarioConfig {
            name: name.into(),
            window: StudyWindow::default(),
            baseline: CodingProfile::default(),
            counties: counties(&["MA", "OH", "TX"], 4, 150),
            regression: None,
        },
        "planted-divergence" => planted_divergence(&linspace(0.1, 0.5, 10), 30, 16_000),
        "regression-recovery" => {
            let states = ["AL", "AZ", "CO", "FL", "IA", "KY", "MN", "NC", "PA", "WA"];
            let state_effects = states
                .iter()
                .enumerate()
                .map(|(i, s)| (s.to_string(), -0.05 + 0.01 * i as f64))
                .collect();
            ScenarioConfig {
                name: name.into(),
                window: StudyWindow::default(),
                baseline: CodingProfile::default(),
                counties: counties(&states, 50, 12),
                regression: Some(RegressionPlant {
                    state_effects,
                    ..RegressionPlant::default()
                }),
            }
        }
        _ => return None,
    };
    Some(config)
}

/// Baseline decay for [`planted_divergence`]; leaves room for shifts of 0.5
/// either way.
pub const PLANTED_BASELINE_DECAY: f64 = 0.5;

/// `baseline` unshifted counties plus one county per entry of `shifts`.
///
/// Shifts are magnitudes. They are applied with alternating sign, smallest
/// first and upward, so the pooled national cohort stays close to the
/// baseline profile. With every shift in one direction the national
/// reference moves toward the shifted counties, and a small shift ends up
/// nearer to it than the baseline counties are.
pub fn planted_divergence(shifts: &[f64], baseline: usize, n_patients: usize) -> ScenarioConfig {
    let states = ["CA", "GA", "IL", "NY"];
    let total = baseline + shifts.len();
    let mut specs: Vec<CountySpec> = (0..total)
        .map(|i| {
            let state = states[i % states.len()];
            CountySpec::new(county_fips(state, i / states.len()), state, n_patients)
        })
        .collect();
    // spread the shifted counties over the list instead of bunching them at the end
    for (k, &shift) in shifts.iter().enumerate() {
        let slot = (k * total) / shifts.len() + total / (2 * shifts.len());
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        specs[slot.min(total - 1)].decay_shift = sign * shift;
    }
    ScenarioConfig {
        name: "planted-divergence".into(),
        window: StudyWindow::default(),
        baseline: CodingProfile {
            decay: PLANTED_BASELINE_DECAY,
            ..CodingProfile::default()
        },
        counties: specs,
        regression: None,
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountyTruth {
    pub fips: String,
    pub state: String,
    pub n_patients: usize,
    pub decay: f64,
    /// Zero for counties drawn from the baseline profile.
    pub divergence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planted_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTruth {
    pub intercept: f64,
    pub coefficients: BTreeMap<String, f64>,
    pub noise_sd: f64,
    pub state_effects: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub scenario: String,
    pub seed: u64,
    pub counties: Vec<CountyTruth>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regression: Option<RegressionTruth>,
}

impl PlantedTruth {
    pub fn county(&self, fips: &str) -> Option<&CountyTruth> {
        self.counties.iter().find(|c| c.fips == fips)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("truth serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// A generated scenario.
#[derive(Debug, Clone)]
pub struct Generated {
    /// Sorted by patient id.
    pub beneficiaries: Vec<Beneficiary>,
    /// Sorted by patient id and admission date.
    pub hospitalizations: Vec<HospitalizationRecord>,
    pub covariates: Vec<CountyCovariates>,
    /// County outcomes from the regression plant; empty without one.
    pub planted_scores: Vec<SimilarityScore>,
    pub truth: PlantedTruth,
}

/// Paths written by [`Generated::write`].
#[derive(Debug, Clone)]
pub struct SynthFiles {
    pub beneficiaries: PathBuf,
    pub hospitalizations: PathBuf,
    pub covariates: PathBuf,
    pub truth: PathBuf,
    pub planted_scores: Option<PathBuf>,
}

impl Generated {
    pub fn write(&self, dir: &Path) -> Result<SynthFiles> {
        let files = SynthFiles {
            beneficiaries: dir.join(BENEFICIARIES_FILE),
            hospitalizations: dir.join(HOSPITALIZATIONS_FILE),
            covariates: dir.join(COVARIATES_FILE),
            truth: dir.join(TRUTH_FILE),
            planted_scores: (!self.planted_scores.is_empty()).then(|| dir.join(PLANTED_SCORES_FILE)),
        };
        let csv_err = |path: &Path| {
            let path = path.to_path_buf();
            move |e: csv::Error| Error::csv(path, e)
        };
        write_beneficiaries(BufWriter::new(create(&files.beneficiaries)?), &self.beneficiaries)
            .map_err(csv_err(&files.beneficiaries))?;
        write_hospitalizations(BufWriter::new(create(&files.hospitalizations)?), &self.hospitalizations)
            .map_err(csv_err(&files.hospitalizations))?;
        write_covariates(BufWriter::new(create(&files.covariates)?), &self.covariates)
            .map_err(csv_err(&files.covariates))?;
        if let Some(path) = &files.planted_scores {
            write_scores(BufWriter::new(create(path)?), &self.planted_scores).map_err(csv_err(path))?;
        }
        std::fs::write(&files.truth, self.truth.to_toml()).map_err(|e| Error::io(&files.truth, e))?;
        Ok(files)
    }
}

/// Generates `config` with `seed`.
pub fn generate(config: &ScenarioConfig, seed: u64) -> Result<Generated> {
    let codebook = Codebook::standard();
    config.validate(codebook)?;

    let parts: Vec<CountyOutput> = config
        .counties
        .par_iter()
        .enumerate()
        .map(|(i, spec)| generate_county(config, spec, county_rng(seed, i), codebook))
        .collect();

    let mut beneficiaries = Vec::with_capacity(config.patient_count());
    let mut hospitalizations = Vec::new();
    let mut covariates = Vec::with_capacity(parts.len());
    let mut planted_scores = Vec::new();
    let mut truths = Vec::with_capacity(parts.len());
    for part in parts {
        beneficiaries.extend(part.beneficiaries);
        hospitalizations.extend(part.hospitalizations);
        covariates.push(part.covariates);
        if let Some(score) = part.planted_score {
            planted_scores.push(score);
        }
        truths.push(part.truth);
    }
    beneficiaries.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    hospitalizations.sort_by(|a, b| {
        (&a.patient_id, a.admission_date).cmp(&(&b.patient_id, b.admission_date))
    });
    covariates.sort_by(|a, b| a.county_fips.cmp(&b.county_fips));
    planted_scores.sort_by(|a, b| a.stratum.cmp(&b.stratum));

    let regression = config.regression.as_ref().map(|p| RegressionTruth {
        intercept: p.intercept,
        coefficients: PREDICTORS
            .iter()
            .zip(&p.coefficients)
            .map(|(n, b)| (n.to_string(), *b))
            .collect(),
        noise_sd: p.noise_sd,
        state_effects: p.state_effects.clone(),
    });
    Ok(Generated {
        beneficiaries,
        hospitalizations,
        covariates,
        planted_scores,
        truth: PlantedTruth {
            scenario: config.name.clone(),
            seed,
            counties: truths,
            regression,
        },
    })
}

fn county_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

struct CountyOutput {
    beneficiaries: Vec<Beneficiary>,
    hospitalizations: Vec<HospitalizationRecord>,
    covariates: CountyCovariates,
    planted_score: Option<SimilarityScore>,
    truth: CountyTruth,
}

fn generate_county(
    config: &ScenarioConfig,
    spec: &CountySpec,
    mut rng: ChaCha8Rng,
    codebook: &Codebook,
) -> CountyOutput {
    let profile = spec.profile(&config.baseline);

    let mut values = [0.0; 9];
    for (v, (lo, hi)) in values.iter_mut().zip(COVARIATE_RANGES) {
        *v = rng.random_range(lo..=hi);
    }
    let covariates = CountyCovariates {
        county_fips: spec.fips.clone(),
        state: spec.state.clone(),
        values,
    };
    let planted_score = config.regression.as_ref().map(|plant| {
        let noise = if plant.noise_sd > 0.0 {
            Normal::new(0.0, plant.noise_sd).expect("valid sd").sample(&mut rng)
        } else {
            0.0
        };
        let linear: f64 = plant
            .coefficients
            .iter()
            .zip(&values)
            .map(|(b, x)| b * x)
            .sum();
        let effect = plant.state_effects.get(&spec.state).copied().unwrap_or(0.0);
        SimilarityScore {
            stratum: StratumId::County(spec.fips.clone()),
            method: SimilarityMethod::RandomSkewers,
            value: Some(plant.intercept + linear + effect + noise),
            n_skewers: 0,
            seed: 0,
            censored: false,
            patient_count: spec.n_patients,
        }
    });

    let sampler = Sampler::new(&profile, codebook);
    let mut beneficiaries = Vec::with_capacity(spec.n_patients);
    let mut hospitalizations = Vec::new();
    for p in 0..spec.n_patients {
        let id = format!("P{}{:06}", spec.fips, p);
        let (b, h) = sampler.patient(&mut rng, id, spec, &config.window);
        beneficiaries.push(b);
        hospitalizations.extend(h);
    }

    CountyOutput {
        beneficiaries,
        hospitalizations,
        covariates,
        truth: CountyTruth {
            fips: spec.fips.clone(),
            state: spec.state.clone(),
            n_patients: spec.n_patients,
            decay: profile.decay,
            divergence: profile.divergence(&config.baseline),
            planted_score: planted_score.as_ref().and_then(|s| s.value),
        },
        planted_score,
    }
}

/// Precomputed draws for one profile.
struct Sampler<'a> {
    profile: &'a CodingProfile,
    codebook: &'a Codebook,
    race: WeightedIndex<f64>,
    category: WeightedIndex<f64>,
    codes: Vec<(Vec<CodeId>, WeightedIndex<f64>)>,
    non_specific: Vec<CodeId>,
    gap: WeightedIndex<f64>,
    visits: WeightedIndex<f64>,
    age: WeightedIndex<f64>,
}

impl<'a> Sampler<'a> {
    fn new(profile: &'a CodingProfile, codebook: &'a Codebook) -> Self {
        let weights = |w: &[f64]| WeightedIndex::new(w.iter().copied()).expect("validated weights");
        Sampler {
            profile,
            codebook,
            race: weights(&profile.race_mix),
            category: weights(&profile.category_mix),
            codes: DiagnosticCategory::ALL
                .iter()
                .zip(&profile.code_mix)
                .map(|(&c, mix)| {
                    let ids = codebook.codes_in(c);
                    // a category with no weight is never drawn, so any index works
                    let dist = if mix.iter().sum::<f64>() > 0.0 {
                        weights(mix)
                    } else {
                        weights(&vec![1.0; ids.len().max(1)])
                    };
                    (ids, dist)
                })
                .collect(),
            non_specific: codebook.codes_in(DiagnosticCategory::NonSpecificDementia),
            gap: weights(&profile.gap_mix),
            visits: weights(&profile.visits),
            age: weights(&AGE_WEIGHTS),
        }
    }

    fn code(&self, rng: &mut ChaCha8Rng) -> CodeId {
        let (ids, dist) = &self.codes[self.category.sample(rng)];
        ids[dist.sample(rng)]
    }

    fn patient(
        &self,
        rng: &mut ChaCha8Rng,
        id: String,
        spec: &CountySpec,
        window: &StudyWindow,
    ) -> (Beneficiary, Vec<HospitalizationRecord>) {
        let p = self.profile;

        let visits = self.visits.sample(rng) + 1;
        let mut gaps: Vec<i64> = (1..visits)
            .map(|_| {
                let bucket = LagBucket::ALL[self.gap.sample(rng)];
                draw_lag(rng, bucket)
            })
            .collect();
        let limit = window.days() - 1;
        let mut span = 0;
        let kept = gaps
            .iter()
            .take_while(|&&g| {
                span += g;
                span <= limit
            })
            .count();
        gaps.truncate(kept);
        let span: i64 = gaps.iter().sum();
        let first = window.start + Duration::days(rng.random_range(0..=limit - span));

        let (lo, hi) = {
            let (_, lo, hi) = AGE_BANDS[self.age.sample(rng)];
            (lo, hi.min(OLDEST_AGE))
        };
        let age = rng.random_range(lo..=hi);
        let u: f64 = rng.random();
        let sex = if u < p.unknown_sex {
            Sex::Unknown
        } else if u < p.unknown_sex + p.female {
            Sex::Female
        } else {
            Sex::Male
        };
        let race_ethnicity = RaceEthnicity::ALL[self.race.sample(rng)];
        let medicaid_eligible = rng.random::<f64>() < p.medicaid;
        let entitlement_reason = if rng.random::<f64>() < p.disability {
            EntitlementReason::Disability
        } else {
            EntitlementReason::Age
        };

        let residence_start = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
        let zip_history = if rng.random::<f64>() < p.mover_rate {
            let moved = window.start + Duration::days(rng.random_range(1..window.days().max(2)));
            vec![
                ZipSpan {
                    zip: spec.fips.clone(),
                    start: residence_start,
                    end: Some(moved - Duration::days(1)),
                },
                ZipSpan {
                    zip: other_zip(&spec.fips),
                    start: moved,
                    end: None,
                },
            ]
        } else {
            vec![ZipSpan {
                zip: spec.fips.clone(),
                start: residence_start,
                end: None,
            }]
        };

        let mut records = Vec::with_capacity(gaps.len() + 1);
        let mut code = self.code(rng);
        let mut date = first;
        for v in 0..=gaps.len() {
            if v > 0 {
                date += Duration::days(gaps[v - 1]);
                if self.codebook.get(code).category.is_specific() && rng.random::<f64>() < p.decay {
                    code = self.non_specific[rng.random_range(0..self.non_specific.len())];
                }
            }
            let mut dx = vec![self.codebook.get(code).code.clone()];
            if v == 0 && rng.random::<f64>() < p.secondary_rate {
                let second = self.code(rng);
                if second != code {
                    dx.push(self.codebook.get(second).code.clone());
                }
            }
            for _ in 0..rng.random_range(0..=MAX_FILLERS) {
                dx.push(FILLER_CODES[rng.random_range(0..FILLER_CODES.len())].to_string());
            }
            let admission_source = if v > 0 && rng.random::<f64>() < p.nursing_rate {
                AdmissionSource::NursingFacility
            } else {
                AdmissionSource::Other
            };
            records.push(HospitalizationRecord {
                patient_id: id.clone(),
                admission_date: date,
                diagnosis_codes: dx,
                admission_source,
                zip: spec.fips.clone(),
                county_fips: spec.fips.clone(),
                state: spec.state.clone(),
            });
        }

        let beneficiary = Beneficiary {
            patient_id: id,
            birth_year: first.year() - age,
            sex,
            race_ethnicity,
            medicaid_eligible,
            entitlement_reason,
            zip_history,
        };
        (beneficiary, records)
    }
}

fn draw_lag(rng: &mut ChaCha8Rng, bucket: LagBucket) -> i64 {
    let (lo, hi) = bucket.day_range();
    let hi = hi.unwrap_or(LONGEST_GAP);
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// A neighboring zip code for patients who move.
fn other_zip(zip: &str) -> String {
    let n: u32 = zip.parse().expect("numeric zip");
    format!("{:05}", (n + 1) % 100_000)
}
