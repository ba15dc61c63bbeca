//! Correlation matrices per stratum and their similarity to the national
//! reference.
//!
//! For every ordered pair of items and every lag bucket, the correlation is
//! taken between how often a patient carries the antecedent and how often
//! the pair occurs for that patient. Correlations that do not survive
//! Holm–Bonferroni within the stratum are zeroed. The four bucket matrices
//! are then laid out block-diagonally and compared to the national matrix,
//! either by random skewers or by one minus the mean absolute difference.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::claims::Cohort;
use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::matrix::{dot, SquareMatrix};
use crate::stats::{average_ranks, holm_bonferroni, spearman_ranked, CorrelationOutcome};
use crate::strata::{StratumId, StratumLevel};
use crate::table::{fmt_f64, Header, Loaded, RowIssue, TableFormat};
use crate::tspm::{Granularity, LagBucket, MinedCohort, MinedStratum, PairKey};

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_SKEWERS: usize = 10_000;
pub const DEFAULT_SEED: u64 = 20_160_101;
/// Strata with fewer patients than this are not scored.
pub const DEFAULT_CENSOR_THRESHOLD: usize = 11;

/// Test outcome for one (antecedent, consequent, bucket) cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellTest {
    pub key: PairKey,
    pub outcome: CorrelationOutcome,
    pub adjusted_p: Option<f64>,
    pub significant: bool,
}

#[derive(Debug, Clone)]
pub struct CorrelationMatrixSet {
    pub stratum: StratumId,
    pub granularity: Granularity,
    pub patient_count: usize,
    pub alpha: f64,
    /// Number of defined tests, i.e. the Holm–Bonferroni family size.
    pub tests: usize,
    /// Significant rho per bucket, zero elsewhere.
    pub buckets: [SquareMatrix; 4],
    /// Every cell in bucket-major order.
    pub cells: Vec<CellTest>,
}

impl CorrelationMatrixSet {
    pub fn dimension(&self) -> usize {
        self.buckets[0].dim()
    }

    pub fn bucket(&self, bucket: LagBucket) -> &SquareMatrix {
        &self.buckets[bucket.index()]
    }

    /// The four bucket matrices along the diagonal of one `4C × 4C` matrix.
    pub fn block_diagonal(&self) -> SquareMatrix {
        SquareMatrix::block_diagonal(&self.buckets)
    }

    pub fn significant_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.significant).count()
    }
}

/// Ranks for a count vector stored sparsely as `(position, count > 0)`;
/// every other position is zero and ties at the bottom.
fn sparse_count_ranks(n: usize, entries: &[(u32, u32)]) -> Vec<f64> {
    let zeros = n - entries.len();
    let mut ranks = vec![(zeros as f64 + 1.0) / 2.0; n];
    let values: Vec<f64> = entries.iter().map(|&(_, c)| c as f64).collect();
    let local = average_ranks(&values);
    for (&(pos, _), r) in entries.iter().zip(local) {
        ranks[pos as usize] = r + zeros as f64;
    }
    ranks
}

/// Builds the significance-masked correlation matrices of one stratum.
///
/// # Panics
///
/// Panics if `alpha` is outside `(0, 1)`.
pub fn build_matrices(mined: &MinedStratum, alpha: f64) -> CorrelationMatrixSet {
    assert!(alpha > 0.0 && alpha < 1.0, "alpha must be in (0, 1), got {alpha}");
    let dim = mined.dimension();
    let n = mined.patient_count();
    let keys: Vec<PairKey> = (0..LagBucket::COUNT * dim * dim)
        .map(|k| PairKey::from_flat(k, dim))
        .collect();

    let antecedent_ranks: Vec<Option<Vec<f64>>> = (0..dim)
        .map(|item| {
            let column = mined.item_column(item);
            let constant = column.windows(2).all(|w| w[0] == w[1]);
            (!constant && n >= 3).then(|| {
                average_ranks(&column.iter().map(|&c| c as f64).collect::<Vec<_>>())
            })
        })
        .collect();

    let outcomes: Vec<CorrelationOutcome> = keys
        .par_iter()
        .map(|&key| {
            let undefined = CorrelationOutcome {
                rho: None,
                p_value: None,
                n,
            };
            let Some(rank_x) = &antecedent_ranks[key.antecedent as usize] else {
                return undefined;
            };
            let counts = mined.exposure(key).counts;
            let constant = counts.is_empty()
                || (counts.len() == n && counts.iter().all(|&(_, c)| c == counts[0].1));
            if constant {
                return undefined;
            }
            spearman_ranked(rank_x, &sparse_count_ranks(n, counts))
        })
        .collect();

    let defined: Vec<usize> = (0..keys.len())
        .filter(|&i| outcomes[i].p_value.is_some())
        .collect();
    let p_values: Vec<f64> = defined.iter().map(|&i| outcomes[i].p_value.unwrap()).collect();
    let holm = holm_bonferroni(&p_values, alpha);

    let mut cells: Vec<CellTest> = keys
        .iter()
        .zip(&outcomes)
        .map(|(&key, &outcome)| CellTest {
            key,
            outcome,
            adjusted_p: None,
            significant: false,
        })
        .collect();
    for (j, &i) in defined.iter().enumerate() {
        cells[i].adjusted_p = Some(holm.adjusted[j]);
        cells[i].significant = holm.reject[j];
    }

    let mut buckets: [SquareMatrix; 4] = std::array::from_fn(|_| SquareMatrix::zeros(dim));
    for cell in cells.iter().filter(|c| c.significant) {
        let k = cell.key;
        buckets[k.bucket.index()][(k.antecedent as usize, k.consequent as usize)] =
            cell.outcome.rho.unwrap();
    }

    CorrelationMatrixSet {
        stratum: mined.stratum.clone(),
        granularity: mined.granularity,
        patient_count: n,
        alpha,
        tests: defined.len(),
        buckets,
        cells,
    }
}

/// A reproducible set of random unit directions.
///
/// Direction `j` is drawn from a ChaCha8 stream keyed by `seed` and selected
/// by `j`, so the set does not depend on how work is split across threads.
#[derive(Debug, Clone)]
pub struct SkewerBank {
    dim: usize,
    seed: u64,
    vectors: Vec<f64>,
}

impl SkewerBank {
    /// # Panics
    ///
    /// Panics if `count` is zero.
    pub fn new(dim: usize, count: usize, seed: u64) -> Self {
        assert!(count >= 1, "at least one skewer is required");
        let vectors: Vec<Vec<f64>> = (0..count as u64)
            .into_par_iter()
            .map(|j| skewer(dim, seed, j))
            .collect();
        SkewerBank {
            dim,
            seed,
            vectors: vectors.concat(),
        }
    }

    pub fn len(&self) -> usize {
        self.vectors.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn get(&self, j: usize) -> &[f64] {
        &self.vectors[j * self.dim..(j + 1) * self.dim]
    }

    /// `m · v` for every skewer `v`, concatenated.
    pub fn responses(&self, m: &SquareMatrix) -> Vec<f64> {
        assert_eq!(m.dim(), self.dim, "matrix and skewer dimensions differ");
        let mut out = vec![0.0; self.vectors.len()];
        out.par_chunks_mut(self.dim.max(1))
            .enumerate()
            .for_each(|(j, o)| m.mul_vec_into(self.get(j), o));
        out
    }
}

/// One standard-normal direction, normalized. A zero draw stays zero.
fn skewer(dim: usize, seed: u64, index: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = dot(&v, &v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// Cosine similarity, or `None` when either vector is zero.
fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let (aa, bb) = (dot(a, a), dot(b, b));
    if aa == 0.0 || bb == 0.0 {
        return None;
    }
    Some((dot(a, b) / (aa * bb).sqrt()).clamp(-1.0, 1.0))
}

/// Mean cosine between paired responses, skipping zero responses.
fn mean_response_cosine(dim: usize, left: &[f64], right: &[f64]) -> Result<f64> {
    let mut sum = 0.0;
    let mut used = 0usize;
    for (a, b) in left.chunks(dim.max(1)).zip(right.chunks(dim.max(1))) {
        if let Some(r) = cosine(a, b) {
            sum += r;
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::UndefinedSimilarity);
    }
    Ok(sum / used as f64)
}

/// Random skewers similarity: the mean cosine between the responses of `m1`
/// and `m2` to `n_skewers` random unit vectors.
pub fn random_skewers(m1: &SquareMatrix, m2: &SquareMatrix, n_skewers: usize, seed: u64) -> Result<f64> {
    if m1.dim() != m2.dim() {
        return Err(Error::DimensionMismatch {
            left: m1.dim(),
            right: m2.dim(),
        });
    }
    let bank = SkewerBank::new(m1.dim(), n_skewers, seed);
    mean_response_cosine(m1.dim(), &bank.responses(m1), &bank.responses(m2))
}

/// One minus the mean absolute elementwise difference.
pub fn one_minus_mad(m1: &SquareMatrix, m2: &SquareMatrix) -> Result<f64> {
    if m1.dim() != m2.dim() {
        return Err(Error::DimensionMismatch {
            left: m1.dim(),
            right: m2.dim(),
        });
    }
    let cells = m1.as_slice().len();
    if cells == 0 {
        return Ok(1.0);
    }
    let total: f64 = m1
        .as_slice()
        .iter()
        .zip(m2.as_slice())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(1.0 - total / cells as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SimilarityMethod {
    RandomSkewers,
    OneMinusMad,
}

impl SimilarityMethod {
    pub fn name(self) -> &'static str {
        match self {
            SimilarityMethod::RandomSkewers => "RandomSkewers",
            SimilarityMethod::OneMinusMad => "OneMinusMAD",
        }
    }

    /// Short label used in table headers.
    pub fn short(self) -> &'static str {
        match self {
            SimilarityMethod::RandomSkewers => "RS",
            SimilarityMethod::OneMinusMad => "1-MAD",
        }
    }
}

impl fmt::Display for SimilarityMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SimilarityMethod {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().replace(['-', '_', ' '], "").as_str() {
            "rs" | "randomskewers" => Ok(SimilarityMethod::RandomSkewers),
            "1mad" | "oneminusmad" | "mad" => Ok(SimilarityMethod::OneMinusMad),
            _ => Err(format!("unknown similarity method `{s}` (expected rs or 1-mad)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringOptions {
    pub method: SimilarityMethod,
    pub granularity: Granularity,
    pub alpha: f64,
    pub n_skewers: usize,
    pub seed: u64,
    pub censor_threshold: usize,
}

impl Default for ScoringOptions {
    fn default() -> Self {
        ScoringOptions {
            method: SimilarityMethod::RandomSkewers,
            granularity: Granularity::Category5,
            alpha: DEFAULT_ALPHA,
            n_skewers: DEFAULT_SKEWERS,
            seed: DEFAULT_SEED,
            censor_threshold: DEFAULT_CENSOR_THRESHOLD,
        }
    }
}

impl ScoringOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        if self.n_skewers == 0 {
            return Err(Error::Config("the skewer count must be at least 1".into()));
        }
        if self.censor_threshold == 0 {
            return Err(Error::Config("the censoring threshold must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub stratum: StratumId,
    pub method: SimilarityMethod,
    /// `None` when censored, or when random skewers is undefined because the
    /// stratum matrix has no significant cell.
    pub value: Option<f64>,
    pub n_skewers: usize,
    pub seed: u64,
    pub censored: bool,
    pub patient_count: usize,
}

/// Precomputed reference side of a comparison.
pub struct Reference {
    block: SquareMatrix,
    bank: Option<(SkewerBank, Vec<f64>)>,
    options: ScoringOptions,
}

impl Reference {
    pub fn new(national: &CorrelationMatrixSet, options: ScoringOptions) -> Self {
        let block = national.block_diagonal();
        let bank = (options.method == SimilarityMethod::RandomSkewers).then(|| {
            let bank = SkewerBank::new(block.dim(), options.n_skewers, options.seed);
            let responses = bank.responses(&block);
            (bank, responses)
        });
        Reference {
            block,
            bank,
            options,
        }
    }

    pub fn compare(&self, stratum: &SquareMatrix) -> Result<f64> {
        match &self.bank {
            Some((bank, reference)) => {
                if stratum.dim() != bank.dim() {
                    return Err(Error::DimensionMismatch {
                        left: bank.dim(),
                        right: stratum.dim(),
                    });
                }
                mean_response_cosine(bank.dim(), reference, &bank.responses(stratum))
            }
            None => one_minus_mad(&self.block, stratum),
        }
    }

    /// Scores one stratum, censoring it when it is too small.
    pub fn score(&self, set: &CorrelationMatrixSet) -> Result<SimilarityScore> {
        let censored = set.patient_count < self.options.censor_threshold;
        let value = if censored {
            None
        } else {
            match self.compare(&set.block_diagonal()) {
                Ok(v) => Some(v),
                Err(Error::UndefinedSimilarity) => None,
                Err(e) => return Err(e),
            }
        };
        Ok(SimilarityScore {
            stratum: set.stratum.clone(),
            method: self.options.method,
            value,
            n_skewers: self.options.n_skewers,
            seed: self.options.seed,
            censored,
            patient_count: set.patient_count,
        })
    }
}

/// Matrices and scores for every stratum at one level.
#[derive(Debug, Clone)]
pub struct LevelAnalysis {
    pub level: StratumLevel,
    pub options: ScoringOptions,
    pub national: CorrelationMatrixSet,
    pub strata: Vec<CorrelationMatrixSet>,
    pub scores: Vec<SimilarityScore>,
}

/// Builds matrices for the national reference and each stratum at `level`,
/// and scores each stratum against the reference.
pub fn analyze_level(cohort: &Cohort, mined: &MinedCohort, level: StratumLevel, options: ScoringOptions) -> Result<LevelAnalysis> {
    options.validate()?;
    if mined.granularity() != options.granularity {
        return Err(Error::Config(format!(
            "mined at {} but scoring requested {}",
            mined.granularity(),
            options.granularity
        )));
    }
    let national = build_matrices(&mined.stratum(cohort, &StratumId::National), options.alpha);
    let strata: Vec<CorrelationMatrixSet> = if level == StratumLevel::National {
        vec![national.clone()]
    } else {
        mined
            .strata(cohort, level)
            .par_iter()
            .map(|m| build_matrices(m, options.alpha))
            .collect()
    };
    let reference = Reference::new(&national, options);
    let scores = strata
        .par_iter()
        .map(|s| reference.score(s))
        .collect::<Result<Vec<_>>>()?;
    Ok(LevelAnalysis {
        level,
        options,
        national,
        strata,
        scores,
    })
}

/// Scores every stratum at `level` against the national reference.
pub fn score_strata(cohort: &Cohort, level: StratumLevel, options: ScoringOptions) -> Result<Vec<SimilarityScore>> {
    options.validate()?;
    let mined = MinedCohort::new(cohort, options.granularity);
    Ok(analyze_level(cohort, &mined, level, options)?.scores)
}

pub const MATRIX_COLUMNS: [&str; 10] = [
    "stratum",
    "level",
    "bucket",
    "antecedent",
    "consequent",
    "rho",
    "p_value",
    "adjusted_p",
    "significant",
    "tests",
];

/// Writes one row per cell of each matrix set.
pub fn write_matrices<W: Write>(out: W, sets: &[&CorrelationMatrixSet], codebook: &Codebook) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MATRIX_COLUMNS)?;
    for set in sets {
        let tests = set.tests.to_string();
        for cell in &set.cells {
            let k = cell.key;
            w.write_record([
                set.stratum.key(),
                set.stratum.level().name(),
                k.bucket.name(),
                &set.granularity.item_label(codebook, k.antecedent as usize),
                &set.granularity.item_label(codebook, k.consequent as usize),
                &cell.outcome.rho.map(fmt_f64).unwrap_or_default(),
                &cell.outcome.p_value.map(fmt_f64).unwrap_or_default(),
                &cell.adjusted_p.map(fmt_f64).unwrap_or_default(),
                if cell.significant { "true" } else { "false" },
                &tests,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub const SCORE_COLUMNS: [&str; 8] = [
    "stratum",
    "level",
    "method",
    "value",
    "patient_count",
    "censored",
    "n_skewers",
    "seed",
];

pub fn write_scores<W: Write>(out: W, scores: &[SimilarityScore]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SCORE_COLUMNS)?;
    for s in scores {
        w.write_record([
            s.stratum.key(),
            s.stratum.level().name(),
            s.method.name(),
            &s.value.map(fmt_f64).unwrap_or_default(),
            &s.patient_count.to_string(),
            if s.censored { "true" } else { "false" },
            &s.n_skewers.to_string(),
            &s.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a score file written by [`write_scores`]. `n_skewers` and `seed`
/// may be absent.
pub fn load_scores(path: &Path, format: &TableFormat) -> Result<Loaded<SimilarityScore>> {
    let mut reader = format.reader(path)?;
    let header = Header::new(reader.headers().map_err(|e| Error::csv(path, e))?);
    let cols: Vec<usize> = ["stratum", "level", "method", "value", "patient_count", "censored"]
        .iter()
        .map(|c| header.require(path, c))
        .collect::<Result<_>>()?;
    let skewers_col = header.position("n_skewers");
    let seed_col = header.position("seed");

    let mut records = Vec::new();
    let mut rejects = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::csv(path, e))?;
        let field = |c: usize| record.get(c).unwrap_or("").trim();
        match parse_score(&field, &cols, skewers_col, seed_col) {
            Ok(score) => records.push(score),
            Err((column, reason)) => rejects.push(RowIssue::new(row, column, reason)),
        }
    }
    Ok(Loaded { records, rejects })
}

fn parse_score<'a>(
    field: &dyn Fn(usize) -> &'a str,
    cols: &[usize],
    skewers_col: Option<usize>,
    seed_col: Option<usize>,
) -> std::result::Result<SimilarityScore, (&'static str, String)> {
    let key = field(cols[0]);
    let level: StratumLevel = field(cols[1]).parse().map_err(|e| ("level", e))?;
    let stratum = match level {
        StratumLevel::National => StratumId::National,
        StratumLevel::State => StratumId::State(key.to_ascii_uppercase()),
        StratumLevel::County => StratumId::County(key.to_string()),
        StratumLevel::Race => StratumId::Race(
            key.parse()
                .map_err(|_| ("stratum", format!("unknown race/ethnicity `{key}`")))?,
        ),
    };
    let method = field(cols[2]).parse().map_err(|e| ("method", e))?;
    let value = match field(cols[3]) {
        "" => None,
        v => Some(v.parse::<f64>().map_err(|_| ("value", format!("not a number `{v}`")))?),
    };
    let count = |name, raw: &str| raw.parse::<u64>().map_err(|_| (name, format!("not a count `{raw}`")));
    let patient_count = count("patient_count", field(cols[4]))? as usize;
    let censored = match field(cols[5]).to_ascii_lowercase().as_str() {
        "true" | "1" => true,
        "false" | "0" => false,
        other => return Err(("censored", format!("expected true or false, got `{other}`"))),
    };
    let n_skewers = match skewers_col.map(field).filter(|s| !s.is_empty()) {
        Some(raw) => count("n_skewers", raw)? as usize,
        None => 0,
    };
    let seed = match seed_col.map(field).filter(|s| !s.is_empty()) {
        Some(raw) => count("seed", raw)?,
        None => 0,
    };
    Ok(SimilarityScore {
        stratum,
        method,
        value,
        n_skewers,
        seed,
        censored,
        patient_count,
    })
}
