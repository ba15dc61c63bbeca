//! Configured runs of the whole analysis.
//!
//! A run goes through up to five stages, `cohort`, `frequencies`, `mine`,
//! `similarity` and `regress`, writing delimited files into the output
//! directory as it goes. After every stage the run manifest is rewritten, so
//! a failure leaves the earlier artifacts and a record of where it stopped.
//! Nothing in the outputs depends on timing or on the size of the thread pool.

use std::collections::BTreeMap;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::claims::{
    build_cohort, demographic_summary, load_beneficiaries, load_hospitalizations, Cohort,
    StudyWindow, DEFAULT_MIN_AGE,
};
use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::frequency::{category_shares, code_frequencies, write_category_shares, write_code_frequencies};
use crate::regression::{
    fit_fixed_effects, load_covariates, sensitivity_slot, sensitivity_table, write_coefficients,
    RegressionOptions, RegressionResult,
};
use crate::similarity::{
    build_matrices, load_scores, write_matrices, write_scores, CorrelationMatrixSet, Reference,
    ScoringOptions, SimilarityMethod, SimilarityScore, DEFAULT_ALPHA, DEFAULT_CENSOR_THRESHOLD,
    DEFAULT_SEED, DEFAULT_SKEWERS,
};
use crate::strata::{StratumId, StratumLevel};
use crate::table::{create, fmt_f64, write_rejects, RowIssue, TableFormat};
use crate::tspm::{Granularity, MinedCohort};

pub const STAGES: [&str; 5] = ["cohort", "frequencies", "mine", "similarity", "regress"];

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const COHORT_SUMMARY_FILE: &str = "cohort_summary.csv";
pub const BENEFICIARY_REJECTS_FILE: &str = "rejects_beneficiaries.csv";
pub const HOSPITALIZATION_REJECTS_FILE: &str = "rejects_hospitalizations.csv";
pub const CODE_FREQUENCIES_FILE: &str = "code_frequencies.csv";
pub const CATEGORY_SHARES_FILE: &str = "category_shares.csv";
pub const MATRICES_FILE: &str = "matrices.csv";
pub const SCORES_FILE: &str = "scores.csv";
pub const COVARIATE_REJECTS_FILE: &str = "rejects_covariates.csv";
pub const COEFFICIENTS_FILE: &str = "coefficients.csv";
pub const REGRESSION_REPORT_FILE: &str = "regression.txt";

/// Everything a run needs. Loaded from TOML; unset keys take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub beneficiaries: PathBuf,
    pub hospitalizations: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariates: Option<PathBuf>,
    /// County scores to regress on instead of computing them.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scores: Option<PathBuf>,
    /// Replaces the built-in dementia code table.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub codebook: Option<PathBuf>,
    /// Read inputs as tab-separated rather than comma-separated.
    pub tab_separated: bool,
    pub window: StudyWindow,
    pub min_age: i32,
    #[serde(with = "by_name")]
    pub granularity: Granularity,
    pub alpha: f64,
    pub n_skewers: usize,
    pub seed: u64,
    pub censor_threshold: usize,
    #[serde(with = "by_name")]
    pub method: SimilarityMethod,
    #[serde(with = "by_name")]
    pub level: StratumLevel,
    pub state_fixed_effects: bool,
    pub weight_by_patients: bool,
    pub out: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            beneficiaries: PathBuf::from(crate::synth::BENEFICIARIES_FILE),
            hospitalizations: PathBuf::from(crate::synth::HOSPITALIZATIONS_FILE),
            covariates: None,
            scores: None,
            codebook: None,
            tab_separated: false,
            window: StudyWindow::default(),
            min_age: DEFAULT_MIN_AGE,
            granularity: Granularity::Category5,
            alpha: DEFAULT_ALPHA,
            n_skewers: DEFAULT_SKEWERS,
            seed: DEFAULT_SEED,
            censor_threshold: DEFAULT_CENSOR_THRESHOLD,
            method: SimilarityMethod::RandomSkewers,
            level: StratumLevel::County,
            state_fixed_effects: true,
            weight_by_patients: false,
            out: PathBuf::from("out"),
        }
    }
}

/// Serializes through `Display` and parses through `FromStr`, so config files
/// can say `granularity = "code17"` or `method = "1-mad"`.
mod by_name {
    use std::fmt::Display;
    use std::str::FromStr;

    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<T: Display, S: Serializer>(value: &T, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(value)
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<T, D::Error>
    where
        T: FromStr,
        T::Err: Display,
        D: Deserializer<'de>,
    {
        String::deserialize(d)?.parse().map_err(de::Error::custom)
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config =
            Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            config.rebase(base);
        }
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.beneficiaries);
        fix(&mut self.hospitalizations);
        fix(&mut self.out);
        for p in [&mut self.covariates, &mut self.scores, &mut self.codebook].into_iter().flatten() {
            fix(p);
        }
    }

    /// Points the three input files at `dir`, as written by the generator.
    pub fn with_data_dir(mut self, dir: &Path) -> Self {
        self.beneficiaries = dir.join(crate::synth::BENEFICIARIES_FILE);
        self.hospitalizations = dir.join(crate::synth::HOSPITALIZATIONS_FILE);
        self.covariates = Some(dir.join(crate::synth::COVARIATES_FILE));
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn scoring(&self) -> ScoringOptions {
        ScoringOptions {
            method: self.method,
            granularity: self.granularity,
            alpha: self.alpha,
            n_skewers: self.n_skewers,
            seed: self.seed,
            censor_threshold: self.censor_threshold,
        }
    }

    pub fn regression(&self) -> RegressionOptions {
        RegressionOptions {
            state_fixed_effects: self.state_fixed_effects,
            weight_by_patients: self.weight_by_patients,
        }
    }

    pub fn format(&self) -> TableFormat {
        if self.tab_separated {
            TableFormat::tab_separated()
        } else {
            TableFormat::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scoring().validate()?;
        if self.window.end < self.window.start {
            return Err(Error::Config("study window ends before it starts".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub file: String,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Named counts worth auditing, such as excluded records.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub counts: BTreeMap<String, u64>,
    #[serde(default)]
    pub outputs: Vec<OutputRecord>,
}

/// What a run did, written as `manifest.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config: PipelineConfig,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Results kept in memory between stages.
#[derive(Debug, Default)]
pub struct RunState {
    pub cohort: Option<Cohort>,
    pub mined: Option<MinedCohort>,
    pub national: Option<CorrelationMatrixSet>,
    pub strata: Vec<CorrelationMatrixSet>,
    pub scores: Vec<SimilarityScore>,
    pub regression: Option<RegressionResult>,
}

/// A run in progress.
pub struct Run {
    config: PipelineConfig,
    codebook: Codebook,
    manifest: Manifest,
    pub state: RunState,
}

impl Run {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let codebook = match &config.codebook {
            Some(path) => Codebook::from_path(path, &config.format())?,
            None => Codebook::standard().clone(),
        };
        std::fs::create_dir_all(&config.out).map_err(|e| Error::io(&config.out, e))?;
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config: config.clone(),
            stages: Vec::new(),
        };
        Ok(Run {
            config,
            codebook,
            manifest,
            state: RunState::default(),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    fn path(&self, file: &str) -> PathBuf {
        self.config.out.join(file)
    }

    fn write_manifest(&self) -> Result<()> {
        let path = self.path(MANIFEST_FILE);
        let text = toml::to_string(&self.manifest).expect("manifest serializes");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    /// Runs `body` as the named stage and records the outcome.
    fn stage<T>(&mut self, name: &str, body: impl FnOnce(&mut Self, &mut StageRecord) -> Result<T>) -> Result<T> {
        let mut record = StageRecord {
            name: name.to_string(),
            status: StageStatus::Ok,
            error: None,
            counts: BTreeMap::new(),
            outputs: Vec::new(),
        };
        let result = body(self, &mut record);
        if let Err(e) = &result {
            record.status = StageStatus::Failed;
            record.error = Some(e.to_string());
        }
        self.manifest.stages.push(record);
        self.write_manifest()?;
        result
    }

    fn emit(
        &self,
        record: &mut StageRecord,
        file: &str,
        rows: usize,
        write: impl FnOnce(BufWriter<std::fs::File>) -> std::result::Result<(), csv::Error>,
    ) -> Result<()> {
        let path = self.path(file);
        write(BufWriter::new(create(&path)?)).map_err(|e| Error::csv(&path, e))?;
        record.outputs.push(OutputRecord {
            file: file.to_string(),
            rows,
        });
        Ok(())
    }

    fn emit_rejects(&self, record: &mut StageRecord, file: &str, rejects: &[RowIssue]) -> Result<()> {
        self.emit(record, file, rejects.len(), |w| write_rejects(w, rejects).map_err(csv::Error::from))
    }

    /// Loads the inputs, applies the cohort filters and writes the cohort
    /// summary and reject reports.
    pub fn cohort(&mut self) -> Result<()> {
        self.stage("cohort", |run, record| {
            let format = run.config.format();
            let window = run.config.window;
            let beneficiaries = load_beneficiaries(&run.config.beneficiaries, &format)?;
            let records = load_hospitalizations(&run.config.hospitalizations, &format, &window)?;
            run.emit_rejects(record, BENEFICIARY_REJECTS_FILE, &beneficiaries.rejects)?;
            run.emit_rejects(record, HOSPITALIZATION_REJECTS_FILE, &records.rejects)?;
            let cohort = build_cohort(
                &beneficiaries.records,
                &records.records,
                window,
                run.config.min_age,
                &run.codebook,
            )?;
            let x = &cohort.exclusions;
            for (k, v) in [
                ("beneficiaries_loaded", beneficiaries.records.len()),
                ("hospitalizations_loaded", records.records.len()),
                ("patients", cohort.len()),
                ("hospitalizations", cohort.hospitalizations().len()),
                ("events", cohort.events().len()),
                ("records_nursing_facility", x.records_nursing_facility),
                ("records_without_qualifying_code", x.records_without_qualifying_code),
                ("records_outside_window", x.records_outside_window),
                ("records_under_min_age", x.records_under_min_age),
                ("records_unknown_patient", x.records_unknown_patient),
                ("patients_without_retained_record", x.patients_without_retained_record),
                ("patients_zip_unstable", x.patients_zip_unstable),
            ] {
                record.counts.insert(k.to_string(), v as u64);
            }
            let summary = demographic_summary(&cohort);
            run.emit(record, COHORT_SUMMARY_FILE, summary.rows.len() + 2, |out| {
                let mut w = csv::Writer::from_writer(out);
                w.write_record(["section", "level", "count", "denominator", "percent"])?;
                w.write_record(["total", "patients", &summary.patients.to_string(), "", ""])?;
                w.write_record(["total", "hospitalizations", &summary.hospitalizations.to_string(), "", ""])?;
                for t in &summary.rows {
                    w.write_record([
                        t.section.as_str(),
                        &t.level,
                        &t.count.to_string(),
                        &t.denominator.to_string(),
                        &fmt_f64(t.percent()),
                    ])?;
                }
                w.flush()?;
                Ok(())
            })?;
            run.state.cohort = Some(cohort);
            Ok(())
        })
    }

    fn cohort_ref(&self) -> &Cohort {
        self.state.cohort.as_ref().expect("cohort stage runs first")
    }

    /// Per-code patient counts and per-state category shares.
    pub fn frequencies(&mut self) -> Result<()> {
        self.stage("frequencies", |run, record| {
            let cohort = run.cohort_ref();
            let codes = code_frequencies(cohort);
            let shares = category_shares(cohort);
            run.emit(record, CODE_FREQUENCIES_FILE, codes.len(), |w| write_code_frequencies(w, &codes))?;
            run.emit(record, CATEGORY_SHARES_FILE, shares.len(), |w| write_category_shares(w, &shares))?;
            Ok(())
        })
    }

    /// Mines pair counts and builds the national and per-stratum matrices.
    pub fn mine(&mut self) -> Result<()> {
        self.stage("mine", |run, record| {
            let cohort = run.state.cohort.as_ref().expect("cohort stage runs first");
            let alpha = run.config.alpha;
            let mined = MinedCohort::new(cohort, run.config.granularity);
            let national = build_matrices(&mined.stratum(cohort, &StratumId::National), alpha);
            let strata: Vec<CorrelationMatrixSet> = if run.config.level == StratumLevel::National {
                Vec::new()
            } else {
                mined
                    .strata(cohort, run.config.level)
                    .par_iter()
                    .map(|m| build_matrices(m, alpha))
                    .collect()
            };
            let sets: Vec<&CorrelationMatrixSet> = std::iter::once(&national).chain(&strata).collect();
            let rows = sets.iter().map(|s| s.cells.len()).sum();
            record.counts.insert("strata".into(), strata.len() as u64);
            record.counts.insert("national_tests".into(), national.tests as u64);
            record
                .counts
                .insert("national_significant".into(), national.significant_cells() as u64);
            run.emit(record, MATRICES_FILE, rows, |w| write_matrices(w, &sets, &run.codebook))?;
            run.state.mined = Some(mined);
            run.state.national = Some(national);
            run.state.strata = strata;
            Ok(())
        })
    }

    /// Scores each stratum against the national matrices.
    pub fn similarity(&mut self) -> Result<()> {
        self.stage("similarity", |run, record| {
            let national = run.state.national.as_ref().expect("mine stage runs first");
            let reference = Reference::new(national, run.config.scoring());
            let scores: Vec<SimilarityScore> = if run.config.level == StratumLevel::National {
                vec![reference.score(national)?]
            } else {
                run.state
                    .strata
                    .par_iter()
                    .map(|s| reference.score(s))
                    .collect::<Result<_>>()?
            };
            record
                .counts
                .insert("censored".into(), scores.iter().filter(|s| s.censored).count() as u64);
            record.counts.insert(
                "undefined".into(),
                scores.iter().filter(|s| !s.censored && s.value.is_none()).count() as u64,
            );
            run.emit(record, SCORES_FILE, scores.len(), |w| write_scores(w, &scores))?;
            run.state.scores = scores;
            Ok(())
        })
    }

    /// Regresses county scores on county covariates. Uses the configured
    /// score file if there is one, the similarity stage's scores if they are
    /// county scores, and otherwise scores the counties first.
    pub fn regress(&mut self) -> Result<()> {
        self.stage("regress", |run, record| {
            let Some(cov_path) = run.config.covariates.clone() else {
                return Err(Error::Config("no covariates file configured".into()));
            };
            let format = run.config.format();
            let covariates = load_covariates(&cov_path, &format)?;
            run.emit_rejects(record, COVARIATE_REJECTS_FILE, &covariates.rejects)?;

            let scores: Vec<SimilarityScore> = if let Some(path) = &run.config.scores {
                let loaded = load_scores(path, &format)?;
                if let Some(first) = loaded.rejects.first() {
                    return Err(Error::Config(format!(
                        "{}: row {}: {}: {}",
                        path.display(),
                        first.row,
                        first.column,
                        first.reason
                    )));
                }
                loaded.records
            } else if run.config.level == StratumLevel::County && !run.state.scores.is_empty() {
                run.state.scores.clone()
            } else {
                run.county_scores()?
            };

            let result = fit_fixed_effects(&scores, &covariates.records, run.config.regression())?;
            record.counts.insert("observations".into(), result.n_observations as u64);
            record.counts.insert("censored_excluded".into(), result.censored_excluded as u64);
            record.counts.insert("unmatched_excluded".into(), result.unmatched_excluded as u64);
            run.emit(record, COEFFICIENTS_FILE, result.coefficients.len(), |w| {
                write_coefficients(w, &result)
            })?;

            let mut columns = [None, None, None];
            if let Some(slot) = sensitivity_slot(run.config.granularity, run.config.method) {
                columns[slot] = Some(&result);
            }
            let mut report = sensitivity_table(columns);
            if sensitivity_slot(run.config.granularity, run.config.method).is_none() {
                report = crate::regression::coefficient_table(
                    &result,
                    &format!("{} ({})", run.config.granularity, run.config.method.short()),
                );
            }
            let path = run.path(REGRESSION_REPORT_FILE);
            let mut f = create(&path)?;
            f.write_all(report.as_bytes()).map_err(|e| Error::io(&path, e))?;
            record.outputs.push(OutputRecord {
                file: REGRESSION_REPORT_FILE.to_string(),
                rows: report.lines().count(),
            });
            run.state.regression = Some(result);
            Ok(())
        })
    }

    fn county_scores(&mut self) -> Result<Vec<SimilarityScore>> {
        let cohort = self.state.cohort.as_ref().ok_or_else(|| {
            Error::Config("county scores are needed but no cohort was built".into())
        })?;
        let mined = match self.state.mined.take() {
            Some(m) => m,
            None => MinedCohort::new(cohort, self.config.granularity),
        };
        let analysis = crate::similarity::analyze_level(cohort, &mined, StratumLevel::County, self.config.scoring())?;
        self.state.mined = Some(mined);
        Ok(analysis.scores)
    }
}

/// Which stages a command runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Frequencies,
    Mine,
    Similarity,
    Regress,
    Pipeline,
}

/// Runs `command` and returns the manifest. On failure the manifest on disk
/// records the failing stage.
pub fn execute(config: PipelineConfig, command: Command) -> Result<Manifest> {
    let mut run = Run::new(config)?;
    let regress_only = command == Command::Regress && run.config.scores.is_some();
    if !regress_only {
        run.cohort()?;
    }
    match command {
        Command::Frequencies => run.frequencies()?,
        Command::Mine => run.mine()?,
        Command::Similarity => {
            run.mine()?;
            run.similarity()?;
        }
        Command::Regress => {
            if !regress_only {
                run.mine()?;
                run.similarity()?;
            }
            run.regress()?;
        }
        Command::Pipeline => {
            run.frequencies()?;
            run.mine()?;
            run.similarity()?;
            run.regress()?;
        }
    }
    Ok(run.manifest)
}
