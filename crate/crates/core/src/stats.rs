//! Spearman rank correlation and Holm–Bonferroni step-down adjustment.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationOutcome {
    /// `None` when either input is constant or fewer than three pairs exist.
    pub rho: Option<f64>,
    pub p_value: Option<f64>,
    pub n: usize,
}

impl CorrelationOutcome {
    fn undefined(n: usize) -> Self {
        CorrelationOutcome {
            rho: None,
            p_value: None,
            n,
        }
    }

    pub fn is_defined(&self) -> bool {
        self.rho.is_some()
    }
}

/// Ranks starting at 1, with tied values sharing the mean of their ranks.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Pearson correlation, or `None` if either input has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "pearson: length mismatch");
    let n = x.len() as f64;
    if x.is_empty() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Two-sided p-value for a correlation of `rho` over `n` pairs, using the
/// t statistic `rho·sqrt((n−2)/(1−rho²))` with `n − 2` degrees of freedom.
pub fn correlation_p_value(rho: f64, n: usize) -> f64 {
    assert!(n >= 3, "p-value needs at least 3 observations");
    let one_minus = (1.0 - rho * rho).max(0.0);
    if one_minus == 0.0 {
        return 0.0;
    }
    // P(|T| > t) = I_{df/(df+t²)}(df/2, 1/2), and df/(df+t²) = 1 − rho².
    let df = (n - 2) as f64;
    beta_reg(df / 2.0, 0.5, one_minus).clamp(0.0, 1.0)
}

/// Two-sided tail probability of a t statistic with `df` degrees of freedom.
/// Returns NaN when `df` is zero or `t` is NaN.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if df <= 0.0 || t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// Correlation of two pre-ranked vectors.
pub fn spearman_ranked(rank_x: &[f64], rank_y: &[f64]) -> CorrelationOutcome {
    assert_eq!(rank_x.len(), rank_y.len(), "spearman: length mismatch");
    let n = rank_x.len();
    if n < 3 {
        return CorrelationOutcome::undefined(n);
    }
    match pearson(rank_x, rank_y) {
        Some(rho) => CorrelationOutcome {
            rho: Some(rho),
            p_value: Some(correlation_p_value(rho, n)),
            n,
        },
        None => CorrelationOutcome::undefined(n),
    }
}

/// Spearman rank correlation with a two-sided t-approximation p-value.
///
/// # Panics
///
/// Panics if `x` and `y` differ in length.
pub fn spearman(x: &[f64], y: &[f64]) -> CorrelationOutcome {
    assert_eq!(x.len(), y.len(), "spearman: length mismatch");
    spearman_ranked(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultipleTestResult {
    pub adjusted: Vec<f64>,
    pub reject: Vec<bool>,
    pub alpha: f64,
}

/// Holm–Bonferroni step-down adjustment. Outputs are in input order.
///
/// # Panics
///
/// Panics if any p-value is outside `[0, 1]` or `alpha` is outside `(0, 1)`.
pub fn holm_bonferroni(p_values: &[f64], alpha: f64) -> MultipleTestResult {
    assert!(alpha > 0.0 && alpha < 1.0, "alpha must be in (0, 1), got {alpha}");
    for &p in p_values {
        assert!((0.0..=1.0).contains(&p), "p-value {p} outside [0, 1]");
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));

    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (k, &i) in order.iter().enumerate() {
        let scaled = ((m - k) as f64 * p_values[i]).min(1.0);
        running = running.max(scaled);
        adjusted[i] = running;
    }
    let reject = adjusted.iter().map(|&a| a <= alpha).collect();
    MultipleTestResult {
        adjusted,
        reject,
        alpha,
    }
}
