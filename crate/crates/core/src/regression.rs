//! County covariates and the state fixed-effects least-squares fit of
//! similarity scores on them.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo;
use crate::similarity::{SimilarityMethod, SimilarityScore};
use crate::stats::t_two_sided_p;
use crate::strata::StratumId;
use crate::table::{fmt_f64, Header, Loaded, RowIssue, TableFormat};
use crate::tspm::Granularity;

/// Predictor columns, in report order.
pub const PREDICTORS: [&str; 9] = [
    "pct_less_hs",
    "unemployment",
    "pct_rural",
    "pct_medicaid_dementia",
    "pct_disability_dementia",
    "pct_dementia",
    "pct_black_dementia",
    "pct_hispanic_dementia",
    "pct_asian_dementia",
];

/// Row labels for the coefficient table, aligned with [`PREDICTORS`].
pub const PREDICTOR_LABELS: [&str; 9] = [
    "Proportion of individuals with less than a high school education",
    "Unemployment rate",
    "Proportion of individuals residing in rural areas",
    "Proportion of dementia patients eligible for Medicaid",
    "Proportion of dementia patients with disabilities",
    "Proportion of dementia patients",
    "Proportion of Black dementia patients",
    "Proportion of Hispanic dementia patients",
    "Proportion of Asian dementia patients",
];

pub const INTERCEPT: &str = "(intercept)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountyCovariates {
    pub county_fips: String,
    pub state: String,
    /// Proportions in `[0, 1]`, aligned with [`PREDICTORS`].
    pub values: [f64; 9],
}

impl CountyCovariates {
    pub fn get(&self, predictor: &str) -> Option<f64> {
        PREDICTORS
            .iter()
            .position(|p| *p == predictor)
            .map(|i| self.values[i])
    }
}

/// Loads county covariates. Proportions must be fractions; `54.2%` style
/// values are rejected rather than rescaled.
pub fn load_covariates(path: &Path, format: &TableFormat) -> Result<Loaded<CountyCovariates>> {
    let mut reader = format.reader(path)?;
    let header = Header::new(reader.headers().map_err(|e| Error::csv(path, e))?);
    let fips_col = header.require(path, "county_fips")?;
    let state_col = header.require(path, "state")?;
    let value_cols: Vec<usize> = PREDICTORS
        .iter()
        .map(|p| header.require(path, p))
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    let mut rejects = Vec::new();
    let mut seen = HashSet::new();
    'rows: for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::csv(path, e))?;
        let fips = record.get(fips_col).unwrap_or("").trim();
        let state = record.get(state_col).unwrap_or("").trim().to_ascii_uppercase();
        if !geo::is_county_fips(fips) {
            rejects.push(RowIssue::new(row, "county_fips", format!("invalid county FIPS `{fips}`")));
            continue;
        }
        match geo::state_fips(&state) {
            None => {
                rejects.push(RowIssue::new(row, "state", format!("unknown state `{state}`")));
                continue;
            }
            Some(prefix) if !fips.starts_with(prefix) => {
                rejects.push(RowIssue::new(
                    row,
                    "county_fips",
                    format!("county FIPS {fips} is not in state {state}"),
                ));
                continue;
            }
            Some(_) => {}
        }
        if !seen.insert(fips.to_string()) {
            return Err(Error::Duplicate {
                path: path.to_path_buf(),
                what: "county_fips",
                key: fips.to_string(),
            });
        }
        let mut values = [0.0; 9];
        for (k, &col) in value_cols.iter().enumerate() {
            let raw = record.get(col).unwrap_or("").trim();
            let reason = if raw.contains('%') {
                Some(format!("`{raw}` is a percentage; proportions must be fractions in [0, 1]"))
            } else {
                match raw.parse::<f64>() {
                    Ok(v) if (0.0..=1.0).contains(&v) => {
                        values[k] = v;
                        None
                    }
                    Ok(v) => Some(format!("proportion {v} outside [0, 1]")),
                    Err(_) => Some(format!("not a number `{raw}`")),
                }
            };
            if let Some(reason) = reason {
                rejects.push(RowIssue::new(row, PREDICTORS[k], reason));
                continue 'rows;
            }
        }
        records.push(CountyCovariates {
            county_fips: fips.to_string(),
            state,
            values,
        });
    }
    Ok(Loaded { records, rejects })
}

pub fn write_covariates<W: Write>(out: W, rows: &[CountyCovariates]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["county_fips", "state"];
    header.extend(PREDICTORS);
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.county_fips.clone(), r.state.clone()];
        rec.extend(r.values.iter().map(|v| fmt_f64(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub term: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    /// Intercept, predictors and `state:XX` indicators that survived the
    /// collinearity screen, in design order.
    pub coefficients: Vec<Coefficient>,
    pub r_squared: f64,
    pub n_observations: usize,
    pub residual_df: usize,
    pub fixed_effect_groups: usize,
    pub reference_state: Option<String>,
    pub dropped_collinear: Vec<String>,
    /// County FIPS of each observation, ascending.
    pub observations: Vec<String>,
    pub outcomes: Vec<f64>,
    pub residuals: Vec<f64>,
    pub censored_excluded: usize,
    pub unmatched_excluded: usize,
}

impl RegressionResult {
    pub fn coefficient(&self, term: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.term == term)
    }

    /// The change in similarity implied by raising `predictor` by `delta`.
    ///
    /// # Panics
    ///
    /// Panics if `predictor` is not in the fitted model.
    pub fn effect_of(&self, predictor: &str, delta: f64) -> f64 {
        match self.coefficient(predictor) {
            Some(c) => c.estimate * delta,
            None => panic!("predictor `{predictor}` is not in the fitted model"),
        }
    }
}

/// Reads a coefficient the way the report is meant to be read: a rise of
/// `delta` in the predictor moves similarity by `estimate × delta`.
pub fn interpret_delta(result: &RegressionResult, predictor: &str, delta: f64) -> f64 {
    result.effect_of(predictor, delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionOptions {
    pub state_fixed_effects: bool,
    /// Weight counties by patient count instead of equally.
    pub weight_by_patients: bool,
}

impl Default for RegressionOptions {
    fn default() -> Self {
        RegressionOptions {
            state_fixed_effects: true,
            weight_by_patients: false,
        }
    }
}

/// Relative residual norm below which a column counts as collinear.
const COLLINEAR_TOL: f64 = 1e-9;

struct LeastSquares {
    kept: Vec<usize>,
    dropped: Vec<usize>,
    coefficients: Vec<f64>,
    /// Upper-triangular factor over the kept columns, row-major `r × r`.
    r: Vec<f64>,
}

/// Householder least squares over `columns` (each of length n), screening
/// columns left to right: a column whose component orthogonal to the
/// already-kept columns is negligible is dropped, so later columns go first.
fn householder_least_squares(columns: &[Vec<f64>], y: &[f64]) -> LeastSquares {
    let n = y.len();
    let mut reflectors: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut r_cols: Vec<Vec<f64>> = Vec::new();

    let apply = |reflectors: &[(usize, Vec<f64>)], x: &mut [f64]| {
        for (row, v) in reflectors {
            let s: f64 = v.iter().zip(&x[*row..]).map(|(a, b)| a * b).sum();
            for (xi, vi) in x[*row..].iter_mut().zip(v) {
                *xi -= 2.0 * s * vi;
            }
        }
    };

    for (j, col) in columns.iter().enumerate() {
        let rank = kept.len();
        let original = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut x = col.clone();
        apply(&reflectors, &mut x);
        let below = x[rank.min(n)..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if rank >= n || original == 0.0 || below <= COLLINEAR_TOL * original {
            dropped.push(j);
            continue;
        }
        let alpha = if x[rank] > 0.0 { -below } else { below };
        let mut v = x[rank..].to_vec();
        v[0] -= alpha;
        let vn = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= vn);
        reflectors.push((rank, v));
        x[rank] = alpha;
        r_cols.push(x[..=rank].to_vec());
        kept.push(j);
    }

    let rank = kept.len();
    let mut qty = y.to_vec();
    apply(&reflectors, &mut qty);
    let mut r = vec![0.0; rank * rank];
    for (c, col) in r_cols.iter().enumerate() {
        for (row, &v) in col.iter().enumerate() {
            r[row * rank + c] = v;
        }
    }
    let mut coefficients = vec![0.0; rank];
    for i in (0..rank).rev() {
        let s: f64 = (i + 1..rank).map(|k| r[i * rank + k] * coefficients[k]).sum();
        coefficients[i] = (qty[i] - s) / r[i * rank + i];
    }
    LeastSquares {
        kept,
        dropped,
        coefficients,
        r,
    }
}

/// Diagonal of `(RᵀR)⁻¹` for an upper-triangular `R`.
fn inverse_gram_diagonal(r: &[f64], rank: usize) -> Vec<f64> {
    // columns of R⁻¹ by back substitution on unit vectors
    let mut inv = vec![0.0; rank * rank];
    for c in 0..rank {
        for i in (0..=c).rev() {
            let unit = if i == c { 1.0 } else { 0.0 };
            let s: f64 = (i + 1..=c).map(|k| r[i * rank + k] * inv[k * rank + c]).sum();
            inv[i * rank + c] = (unit - s) / r[i * rank + i];
        }
    }
    (0..rank)
        .map(|i| (i..rank).map(|c| inv[i * rank + c].powi(2)).sum())
        .collect()
}

/// Fits similarity on the county covariates with state indicators.
///
/// Only county scores that are neither censored nor undefined and that join
/// to a covariate row enter the fit. The design is an intercept, the nine
/// predictors, and one indicator per state other than the alphabetically
/// first.
pub fn fit_fixed_effects(
    scores: &[SimilarityScore],
    covariates: &[CountyCovariates],
    options: RegressionOptions,
) -> Result<RegressionResult> {
    let by_fips: BTreeMap<&str, &CountyCovariates> = covariates
        .iter()
        .map(|c| (c.county_fips.as_str(), c))
        .collect();
    let mut censored_excluded = 0;
    let mut unmatched_excluded = 0;
    let mut rows: BTreeMap<&str, (f64, f64, &CountyCovariates)> = BTreeMap::new();
    for s in scores {
        let StratumId::County(fips) = &s.stratum else {
            continue;
        };
        let Some(value) = s.value.filter(|_| !s.censored) else {
            censored_excluded += 1;
            continue;
        };
        match by_fips.get(fips.as_str()) {
            Some(c) => {
                rows.insert(fips, (value, s.patient_count as f64, c));
            }
            None => unmatched_excluded += 1,
        }
    }

    let states: Vec<&str> = if options.state_fixed_effects {
        rows.values()
            .map(|(_, _, c)| c.state.as_str())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    } else {
        Vec::new()
    };
    let mut terms: Vec<String> = vec![INTERCEPT.to_string()];
    terms.extend(PREDICTORS.iter().map(|p| p.to_string()));
    terms.extend(states.iter().skip(1).map(|s| format!("state:{s}")));

    let n = rows.len();
    if n < terms.len() || n == 0 {
        return Err(Error::UnderIdentified {
            observations: n,
            parameters: terms.len(),
        });
    }

    let weights: Vec<f64> = rows
        .values()
        .map(|(_, w, _)| if options.weight_by_patients { *w } else { 1.0 })
        .collect();
    let root_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let mut columns: Vec<Vec<f64>> = vec![root_w.clone()];
    for k in 0..PREDICTORS.len() {
        columns.push(
            rows.values()
                .zip(&root_w)
                .map(|((_, _, c), rw)| c.values[k] * rw)
                .collect(),
        );
    }
    for s in states.iter().skip(1) {
        columns.push(
            rows.values()
                .zip(&root_w)
                .map(|((_, _, c), rw)| if c.state == *s { *rw } else { 0.0 })
                .collect(),
        );
    }
    let outcomes: Vec<f64> = rows.values().map(|(v, _, _)| *v).collect();
    let y: Vec<f64> = outcomes.iter().zip(&root_w).map(|(v, rw)| v * rw).collect();

    let ls = householder_least_squares(&columns, &y);
    let rank = ls.kept.len();

    // residuals on the original scale
    let fitted: Vec<f64> = (0..n)
        .map(|i| {
            ls.kept
                .iter()
                .zip(&ls.coefficients)
                .map(|(&j, b)| columns[j][i] / root_w[i] * b)
                .sum()
        })
        .collect();
    let residuals: Vec<f64> = outcomes.iter().zip(&fitted).map(|(y, f)| y - f).collect();
    let wsum: f64 = weights.iter().sum();
    let mean = outcomes.iter().zip(&weights).map(|(y, w)| y * w).sum::<f64>() / wsum;
    let sst: f64 = outcomes.iter().zip(&weights).map(|(y, w)| w * (y - mean).powi(2)).sum();
    let ssr: f64 = residuals.iter().zip(&weights).map(|(e, w)| w * e * e).sum();
    let r_squared = if sst > 0.0 {
        (1.0 - ssr / sst).clamp(0.0, 1.0)
    } else {
        0.0
    };

    let residual_df = n - rank;
    let sigma2 = if residual_df > 0 {
        ssr / residual_df as f64
    } else {
        f64::NAN
    };
    let gram = inverse_gram_diagonal(&ls.r, rank);
    let coefficients = ls
        .kept
        .iter()
        .zip(&ls.coefficients)
        .zip(&gram)
        .map(|((&j, &estimate), &g)| {
            let std_error = (sigma2 * g).sqrt();
            let t = estimate / std_error;
            Coefficient {
                term: terms[j].clone(),
                estimate,
                std_error,
                t,
                p_value: t_two_sided_p(t, residual_df as f64),
            }
        })
        .collect();

    Ok(RegressionResult {
        coefficients,
        r_squared,
        n_observations: n,
        residual_df,
        fixed_effect_groups: states.len(),
        reference_state: states.first().map(|s| s.to_string()),
        dropped_collinear: ls.dropped.iter().map(|&j| terms[j].clone()).collect(),
        observations: rows.keys().map(|k| k.to_string()).collect(),
        outcomes,
        residuals,
        censored_excluded,
        unmatched_excluded,
    })
}

pub const COEFFICIENT_COLUMNS: [&str; 6] = ["term", "estimate", "std_error", "t", "p_value", "significant"];

/// Writes every fitted term with its significance at 0.05.
pub fn write_coefficients<W: Write>(out: W, result: &RegressionResult) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COEFFICIENT_COLUMNS)?;
    for c in &result.coefficients {
        w.write_record([
            c.term.as_str(),
            &fmt_f64(c.estimate),
            &fmt_f64(c.std_error),
            &fmt_f64(c.t),
            &fmt_f64(c.p_value),
            if c.p_value < 0.05 { "true" } else { "false" },
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn cell(result: Option<&RegressionResult>, predictor: &str) -> String {
    match result.and_then(|r| r.coefficient(predictor)) {
        Some(c) => format!(
            "{:.2}{} ({:.2})",
            c.estimate,
            if c.p_value < 0.05 { "*" } else { "" },
            c.std_error
        ),
        None if result.is_some() => "dropped".to_string(),
        None => "-".to_string(),
    }
}

fn render_table(headers: &[String], results: &[Option<&RegressionResult>]) -> String {
    let label_width = PREDICTOR_LABELS.iter().map(|l| l.len()).max().unwrap_or(0);
    let widths: Vec<usize> = headers.iter().map(|h| h.len().max(16)).collect();
    let mut out = String::new();
    let _ = write!(out, "{:label_width$}", "Variables at the county level");
    for (h, w) in headers.iter().zip(&widths) {
        let _ = write!(out, "  {h:>w$}");
    }
    out.push('\n');
    for (p, label) in PREDICTORS.iter().zip(PREDICTOR_LABELS) {
        let _ = write!(out, "{label:label_width$}");
        for (r, w) in results.iter().zip(&widths) {
            let _ = write!(out, "  {:>w$}", cell(*r, p));
        }
        out.push('\n');
    }
    let footer = |name: &str, f: &dyn Fn(&RegressionResult) -> String| {
        let mut line = format!("{name:label_width$}");
        for (r, w) in results.iter().zip(&widths) {
            let _ = write!(line, "  {:>w$}", r.map(f).unwrap_or_else(|| "-".into()));
        }
        line.push('\n');
        line
    };
    out.push_str(&footer("R-squared", &|r| format!("{:.2}", r.r_squared)));
    out.push_str(&footer("Counties", &|r| r.n_observations.to_string()));
    out.push_str(&footer("State fixed effects", &|r| r.fixed_effect_groups.to_string()));
    out.push_str("* p < 0.05. Coefficient (standard error); a 0.1 rise in a predictor moves similarity by 0.1 × coefficient.\n");
    out
}

/// Single-column coefficient table.
pub fn coefficient_table(result: &RegressionResult, column: &str) -> String {
    render_table(&[column.to_string()], &[Some(result)])
}

/// Position of a (granularity, method) variant in the three-column
/// sensitivity layout, if it has one.
pub fn sensitivity_slot(granularity: Granularity, method: SimilarityMethod) -> Option<usize> {
    match (granularity, method) {
        (Granularity::Category5, SimilarityMethod::RandomSkewers) => Some(0),
        (Granularity::Category5, SimilarityMethod::OneMinusMad) => Some(1),
        (Granularity::Code17, SimilarityMethod::RandomSkewers) => Some(2),
        (Granularity::Code17, SimilarityMethod::OneMinusMad) => None,
    }
}

pub const SENSITIVITY_HEADERS: [&str; 3] = [
    "5 categories regression (RS)",
    "5 categories regression (1-MAD)",
    "17 ICD-10 code regression (RS)",
];

/// Three-column sensitivity table; missing variants print as `-`.
pub fn sensitivity_table(columns: [Option<&RegressionResult>; 3]) -> String {
    let headers: Vec<String> = SENSITIVITY_HEADERS.iter().map(|s| s.to_string()).collect();
    render_table(&headers, &columns)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(fips: &str, value: Option<f64>, censored: bool) -> SimilarityScore {
        SimilarityScore {
            stratum: StratumId::County(fips.into()),
            method: SimilarityMethod::RandomSkewers,
            value,
            n_skewers: 10,
            seed: 1,
            censored,
            patient_count: 50,
        }
    }

    fn county(i: usize, state: &str, prefix: &str) -> CountyCovariates {
        // deterministic, linearly independent pattern
        let mut values = [0.0; 9];
        for (k, v) in values.iter_mut().enumerate() {
            *v = (((i * (k + 3) * 7919 + k * 104_729) % 1000) as f64) / 1000.0;
        }
        CountyCovariates {
            county_fips: format!("{prefix}{i:03}"),
            state: state.into(),
            values,
        }
    }

    #[test]
    fn exact_linear_recovery() {
        let covs: Vec<_> = (0..40).map(|i| county(i, "PA", "42")).collect();
        let scores: Vec<_> = covs
            .iter()
            .map(|c| score(&c.county_fips, Some(0.9 - 0.19 * c.values[2]), false))
            .collect();
        let r = fit_fixed_effects(&scores, &covs, RegressionOptions::default()).unwrap();
        let rural = r.coefficient("pct_rural").unwrap();
        assert!((rural.estimate + 0.19).abs() < 1e-10, "{}", rural.estimate);
        assert!((r.r_squared - 1.0).abs() < 1e-10);
        assert_eq!(r.fixed_effect_groups, 1);
        assert!(r.coefficients.iter().all(|c| !c.term.starts_with("state:")));
    }

    #[test]
    fn constant_outcome() {
        let covs: Vec<_> = (0..30).map(|i| county(i, "PA", "42")).collect();
        let scores: Vec<_> = covs.iter().map(|c| score(&c.county_fips, Some(0.8), false)).collect();
        let r = fit_fixed_effects(&scores, &covs, RegressionOptions::default()).unwrap();
        for p in PREDICTORS {
            assert!(r.coefficient(p).unwrap().estimate.abs() < 1e-12);
        }
        assert_eq!(r.r_squared, 0.0);
    }

    #[test]
    fn censored_and_unmatched_are_excluded() {
        let covs: Vec<_> = (0..30).map(|i| county(i, "PA", "42")).collect();
        let mut scores: Vec<_> = covs
            .iter()
            .map(|c| score(&c.county_fips, Some(0.5 + 0.1 * c.values[0]), false))
            .collect();
        scores[0] = score(&covs[0].county_fips, None, true);
        scores.push(score("42999", Some(0.3), false));
        let r = fit_fixed_effects(&scores, &covs, RegressionOptions::default()).unwrap();
        assert_eq!(r.n_observations, 29);
        assert_eq!(r.censored_excluded, 1);
        assert_eq!(r.unmatched_excluded, 1);
    }

    #[test]
    fn under_identified() {
        let covs: Vec<_> = (0..5).map(|i| county(i, "PA", "42")).collect();
        let scores: Vec<_> = covs.iter().map(|c| score(&c.county_fips, Some(0.5), false)).collect();
        let err = fit_fixed_effects(&scores, &covs, RegressionOptions::default()).unwrap_err();
        assert!(matches!(err, Error::UnderIdentified { observations: 5, parameters: 10 }));
    }

    #[test]
    fn collinear_columns_dropped_latest_first() {
        let mut covs: Vec<_> = (0..30).map(|i| county(i, "PA", "42")).collect();
        for c in &mut covs {
            c.values[8] = c.values[2];
        }
        let scores: Vec<_> = covs
            .iter()
            .map(|c| score(&c.county_fips, Some(0.9 - 0.19 * c.values[2]), false))
            .collect();
        let r = fit_fixed_effects(&scores, &covs, RegressionOptions::default()).unwrap();
        assert_eq!(r.dropped_collinear, vec!["pct_asian_dementia".to_string()]);
        assert!((r.coefficient("pct_rural").unwrap().estimate + 0.19).abs() < 1e-10);
    }

    #[test]
    fn state_indicators_use_first_state_as_reference() {
        let mut covs: Vec<_> = (0..20).map(|i| county(i, "PA", "42")).collect();
        covs.extend((0..20).map(|i| county(i, "FL", "12")));
        let scores: Vec<_> = covs
            .iter()
            .map(|c| {
                let fe = if c.state == "PA" { 0.05 } else { 0.0 };
                score(&c.county_fips, Some(0.7 + fe + 0.2 * c.values[5]), false)
            })
            .collect();
        let r = fit_fixed_effects(&scores, &covs, RegressionOptions::default()).unwrap();
        assert_eq!(r.reference_state.as_deref(), Some("FL"));
        assert!((r.coefficient("state:PA").unwrap().estimate - 0.05).abs() < 1e-10);
        assert!((r.coefficient("pct_dementia").unwrap().estimate - 0.2).abs() < 1e-10);
    }

    #[test]
    fn delta_reading() {
        let covs: Vec<_> = (0..40).map(|i| county(i, "PA", "42")).collect();
        let scores: Vec<_> = covs
            .iter()
            .map(|c| score(&c.county_fips, Some(0.2 - 0.19 * c.values[2] + 1.27 * c.values[5]), false))
            .collect();
        let r = fit_fixed_effects(&scores, &covs, RegressionOptions::default()).unwrap();
        assert!((interpret_delta(&r, "pct_rural", 0.1) + 0.019).abs() < 1e-10);
        assert!((interpret_delta(&r, "pct_dementia", 0.1) - 0.127).abs() < 1e-10);
        assert_eq!(interpret_delta(&r, "pct_dementia", 0.0), 0.0);
    }

    #[test]
    #[should_panic(expected = "not in the fitted model")]
    fn unknown_predictor_panics() {
        let covs: Vec<_> = (0..40).map(|i| county(i, "PA", "42")).collect();
        let scores: Vec<_> = covs.iter().map(|c| score(&c.county_fips, Some(c.values[0]), false)).collect();
        let r = fit_fixed_effects(&scores, &covs, RegressionOptions::default()).unwrap();
        interpret_delta(&r, "pct_left_handed", 0.1);
    }

    #[test]
    fn inverse_gram_of_known_r() {
        // R = [[2, 1], [0, 4]]: (RᵀR)⁻¹ = R⁻¹R⁻ᵀ, R⁻¹ = [[0.5, -0.125], [0, 0.25]]
        let d = inverse_gram_diagonal(&[2.0, 1.0, 0.0, 4.0], 2);
        assert!((d[0] - (0.25 + 0.015625)).abs() < 1e-15);
        assert!((d[1] - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn sensitivity_layout_slots() {
        assert_eq!(sensitivity_slot(Granularity::Category5, SimilarityMethod::OneMinusMad), Some(1));
        assert_eq!(sensitivity_slot(Granularity::Code17, SimilarityMethod::RandomSkewers), Some(2));
    }
}
