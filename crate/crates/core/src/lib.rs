//! Measures how diagnosis-code usage in a region or population group drifts
//! away from the national pattern.
//!
//! The pipeline runs in five steps:
//!
//! 1. [`claims`] loads beneficiaries and hospitalizations and builds the
//!    analytic cohort, keeping the dementia-qualifying codes listed in
//!    [`codebook`].
//! 2. [`tspm`] enumerates every ordered pair of a patient's coded events and
//!    bins the gap between them into four lag buckets.
//! 3. [`similarity`] turns per-patient pair counts into Spearman correlation
//!    matrices, keeps the cells that survive Holm–Bonferroni, and compares each
//!    stratum's matrices with the national ones.
//! 4. [`regression`] relates county similarity to county covariates with
//!    state fixed effects.
//! 5. [`synth`] generates cohorts with planted divergence so every step can
//!    be checked against known truth.
//!
//! [`pipeline`] wires the steps together and writes every artifact.

pub mod claims;
pub mod codebook;
pub mod error;
pub mod frequency;
pub mod geo;
pub mod matrix;
pub mod pipeline;
pub mod regression;
pub mod similarity;
pub mod stats;
pub mod strata;
pub mod synth;
pub mod table;
pub mod tspm;

pub use claims::{build_cohort, demographic_summary, Beneficiary, Cohort, CodedEvent, HospitalizationRecord, StudyWindow};
pub use codebook::{classify_code, is_dementia_qualifying, Codebook, DiagnosticCategory};
pub use error::{Error, ErrorKind, Result};
pub use matrix::SquareMatrix;
pub use regression::{fit_fixed_effects, interpret_delta, RegressionResult};
pub use similarity::{build_matrices, one_minus_mad, random_skewers, score_strata, ScoringOptions, SimilarityMethod, SimilarityScore};
pub use stats::{holm_bonferroni, spearman};
pub use strata::{StratumId, StratumLevel};
pub use tspm::{assign_bucket, mine_patient, mine_stratum, Granularity, LagBucket};
