//! Frequency estimates of outcome probabilities from finite ensembles.
//!
//! Bob can only learn outcome probabilities `p_j` as frequencies `f_j` over
//! `N` runs. The fluctuation density used here is
//! `√(N/2πp)·exp[-(N/2)(f - p)²/p]`, a normal with variance `p/N`; the
//! conventional binomial variance `p(1-p)/N` is available as
//! [`VarianceMode::Binomial`].

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF, Normal};

use crate::error::{Error, Result};

/// Minimum expected count per category for the chi-square approximation.
pub const CHI_SQUARE_MIN_EXPECTED: f64 = 5.0;

/// Largest number of count vectors enumerated by the exact multinomial test.
pub const EXACT_ENUMERATION_LIMIT: u64 = 2_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyEstimate {
    pub counts: Vec<u64>,
    pub n: u64,
    pub f: Vec<f64>,
    /// `√(f(1-f)/N)` per category.
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateCsvRow {
    pub category: usize,
    pub count: u64,
    pub frequency: f64,
    pub sigma: f64,
}

impl FrequencyEstimate {
    pub fn from_counts(counts: Vec<u64>) -> Result<Self> {
        let n: u64 = counts.iter().sum();
        if n == 0 {
            return Err(Error::validation("no outcomes to estimate from"));
        }
        let nf = n as f64;
        let f: Vec<f64> = counts.iter().map(|&c| c as f64 / nf).collect();
        let sigma = f.iter().map(|&p| (p * (1.0 - p) / nf).sqrt()).collect();
        Ok(Self {
            counts,
            n,
            f,
            sigma,
        })
    }

    pub fn categories(&self) -> usize {
        self.counts.len()
    }

    pub fn csv_rows(&self) -> Vec<EstimateCsvRow> {
        (0..self.categories())
            .map(|j| EstimateCsvRow {
                category: j,
                count: self.counts[j],
                frequency: self.f[j],
                sigma: self.sigma[j],
            })
            .collect()
    }
}

/// Counts outcomes in `[0, k)`.
pub fn estimate(outcomes: &[usize], k: usize) -> Result<FrequencyEstimate> {
    if outcomes.is_empty() {
        return Err(Error::validation("no outcomes to estimate from"));
    }
    let mut counts = vec![0u64; k];
    for &o in outcomes {
        *counts
            .get_mut(o)
            .ok_or_else(|| Error::validation(format!("outcome {o} outside [0, {k})")))? += 1;
    }
    FrequencyEstimate::from_counts(counts)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMode {
    /// Variance `p/N`.
    #[default]
    AsPrinted,
    /// Variance `p(1-p)/N`.
    Binomial,
}

impl VarianceMode {
    fn std_dev(self, p: f64, n: u64) -> f64 {
        match self {
            VarianceMode::AsPrinted => (p / n as f64).sqrt(),
            VarianceMode::Binomial => (p * (1.0 - p) / n as f64).sqrt(),
        }
    }
}

fn check_density_args(p: f64, n: u64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::validation(format!("p = {p} must lie in (0, 1)")));
    }
    if n == 0 {
        return Err(Error::validation("N must be at least 1"));
    }
    Ok(())
}

/// Density of the frequency `f` of an outcome with probability `p` over `n` runs.
pub fn frequency_density(f: f64, p: f64, n: u64) -> Result<f64> {
    frequency_density_with(f, p, n, VarianceMode::AsPrinted)
}

pub fn frequency_density_with(f: f64, p: f64, n: u64, mode: VarianceMode) -> Result<f64> {
    check_density_args(p, n)?;
    let var = mode.std_dev(p, n).powi(2);
    Ok((2.0 * std::f64::consts::PI * var).recip().sqrt() * (-(f - p).powi(2) / (2.0 * var)).exp())
}

/// Cumulative distribution matching [`frequency_density_with`].
pub fn frequency_cdf(f: f64, p: f64, n: u64, mode: VarianceMode) -> Result<f64> {
    check_density_args(p, n)?;
    Ok(Normal::new(p, mode.std_dev(p, n))
        .expect("positive standard deviation")
        .cdf(f))
}

/// One-sample Kolmogorov-Smirnov distance between `samples` and `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::validation("KS statistic needs at least one sample"));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    Ok(xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / n).max((i + 1) as f64 / n - c)
        })
        .fold(0.0, f64::max))
}

/// Asymptotic critical KS distance `√(-ln(α/2)/2)/√n`.
pub fn ks_critical_value(n: usize, significance: f64) -> f64 {
    (-(0.5 * significance).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// How a [`consistency_test`] reached its verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsistencyMethod {
    ChiSquare,
    ExactMultinomial,
    /// Per-category exact binomial tests, Bonferroni corrected.
    BinomialBonferroni,
    /// A category claimed impossible was observed.
    ImpossibleOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyResult {
    pub method: ConsistencyMethod,
    pub statistic: f64,
    pub p_value: f64,
    pub accepted: bool,
}

fn check_claimed(est: &FrequencyEstimate, claimed: &[f64]) -> Result<()> {
    if claimed.len() != est.categories() {
        return Err(Error::validation(format!(
            "{} claimed probabilities for {} categories",
            claimed.len(),
            est.categories()
        )));
    }
    if claimed.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::validation(
            "claimed probabilities must lie in [0, 1]",
        ));
    }
    let total: f64 = claimed.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::validation(format!(
            "claimed probabilities sum to {total}"
        )));
    }
    Ok(())
}

/// Goodness of fit of observed counts to `claimed` probabilities.
///
/// Chi-square when every expected count is at least 5; otherwise the exact
/// multinomial test if enumeration is affordable, else per-category exact
/// binomial tests.
pub fn consistency_test(
    est: &FrequencyEstimate,
    claimed: &[f64],
    significance: f64,
) -> Result<ConsistencyResult> {
    check_claimed(est, claimed)?;
    if !(significance > 0.0 && significance < 1.0) {
        return Err(Error::validation(format!(
            "significance {significance} must lie in (0, 1)"
        )));
    }
    let n = est.n as f64;
    if claimed
        .iter()
        .zip(&est.counts)
        .any(|(&p, &c)| p == 0.0 && c > 0)
    {
        return Ok(ConsistencyResult {
            method: ConsistencyMethod::ImpossibleOutcome,
            statistic: f64::INFINITY,
            p_value: 0.0,
            accepted: false,
        });
    }
    // Categories claimed impossible and unobserved carry no information.
    let live: Vec<(u64, f64)> = est
        .counts
        .iter()
        .zip(claimed)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&c, &p)| (c, p))
        .collect();
    if live.len() == 1 {
        return Ok(ConsistencyResult {
            method: ConsistencyMethod::ExactMultinomial,
            statistic: 0.0,
            p_value: 1.0,
            accepted: true,
        });
    }

    let (method, statistic, p_value) =
        if live.iter().all(|&(_, p)| p * n >= CHI_SQUARE_MIN_EXPECTED) {
            let chi2: f64 = live
                .iter()
                .map(|&(c, p)| (c as f64 - n * p).powi(2) / (n * p))
                .sum();
            let dist =
                ChiSquared::new((live.len() - 1) as f64).expect("positive degrees of freedom");
            (ConsistencyMethod::ChiSquare, chi2, dist.sf(chi2))
        } else if let Some(p) = exact_multinomial_p_value(&live, est.n) {
            (ConsistencyMethod::ExactMultinomial, 0.0, p)
        } else {
            let k = live.len() as f64;
            let min_p = live
                .iter()
                .map(|&(c, p)| binomial_two_sided(c, est.n, p))
                .fold(1.0, f64::min);
            (
                ConsistencyMethod::BinomialBonferroni,
                min_p,
                (min_p * k).min(1.0),
            )
        };
    Ok(ConsistencyResult {
        method,
        statistic,
        p_value,
        accepted: p_value >= significance,
    })
}

fn compositions(n: u64, k: usize) -> Option<u64> {
    // C(n + k - 1, k - 1), bailing out once past the limit.
    let mut acc: u128 = 1;
    for i in 1..k as u128 {
        acc = acc * (n as u128 + i) / i;
        if acc > EXACT_ENUMERATION_LIMIT as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

/// Sum of the probabilities of all count vectors no more likely than the observed one.
fn exact_multinomial_p_value(live: &[(u64, f64)], n: u64) -> Option<f64> {
    compositions(n, live.len())?;
    let ln_fact = |x: u64| statrs::function::gamma::ln_gamma(x as f64 + 1.0);
    let ln_p: Vec<f64> = live.iter().map(|&(_, p)| p.ln()).collect();
    let log_prob = |counts: &[u64]| -> f64 {
        ln_fact(n)
            + counts
                .iter()
                .zip(&ln_p)
                .map(|(&c, &lp)| c as f64 * lp - ln_fact(c))
                .sum::<f64>()
    };
    let observed: Vec<u64> = live.iter().map(|&(c, _)| c).collect();
    let threshold = log_prob(&observed) + 1e-9;

    let k = live.len();
    let mut counts = vec![0u64; k];
    let mut total = 0.0;
    fn walk(i: usize, left: u64, counts: &mut [u64], f: &mut dyn FnMut(&[u64])) {
        if i + 1 == counts.len() {
            counts[i] = left;
            f(counts);
            return;
        }
        for c in 0..=left {
            counts[i] = c;
            walk(i + 1, left - c, counts, f);
        }
    }
    walk(0, n, &mut counts, &mut |c| {
        let lp = log_prob(c);
        if lp <= threshold {
            total += lp.exp();
        }
    });
    Some(total.min(1.0))
}

fn binomial_two_sided(c: u64, n: u64, p: f64) -> f64 {
    let b = Binomial::new(p, n).expect("valid probability");
    let lower = b.cdf(c);
    let upper = if c == 0 { 1.0 } else { b.sf(c - 1) };
    (2.0 * lower.min(upper)).min(1.0)
}

/// Runs needed to tell apart two outcome probabilities `2^{-m}` apart near
/// `1/2` at the given two-sided significance, `⌈z²·p(1-p)/Δ²⌉`.
pub fn required_sample_size(m: u32, significance: f64) -> Result<u64> {
    if m < 2 {
        return Err(Error::validation(format!("m = {m} must be at least 2")));
    }
    if !(significance > 0.0 && significance <= 1.0) {
        return Err(Error::validation(format!(
            "significance {significance} must lie in (0, 1]"
        )));
    }
    let z = if significance >= 1.0 {
        0.0
    } else {
        Normal::standard().inverse_cdf(1.0 - 0.5 * significance)
    };
    let delta = (-(m as f64)).exp2();
    let n = (z * z * 0.25 / (delta * delta)).ceil();
    Ok((n as u64).max(1))
}

/// Two-proportion z statistic for `k1/n1` versus `k2/n2` with pooled variance.
pub fn two_proportion_z(k1: u64, n1: u64, k2: u64, n2: u64) -> f64 {
    let (p1, p2) = (k1 as f64 / n1 as f64, k2 as f64 / n2 as f64);
    let pooled = (k1 + k2) as f64 / (n1 + n2) as f64;
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    if se == 0.0 {
        0.0
    } else {
        (p1 - p2) / se
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{sample_discrete, SeedStream};

    #[test]
    fn estimate_examples() {
        let e = estimate(&[0, 0, 0, 0], 2).unwrap();
        assert_eq!(e.f, vec![1.0, 0.0]);
        assert_eq!(e.sigma, vec![0.0, 0.0]);
        assert_eq!(estimate(&[0, 1, 0, 1], 2).unwrap().f, vec![0.5, 0.5]);
        assert!(estimate(&[], 2).is_err());
        assert!(estimate(&[0, 2], 2).is_err());
    }

    #[test]
    fn balanced_coin() {
        let mut rng = SeedStream::new(11).substream(0);
        let outcomes: Vec<usize> = (0..10_000)
            .map(|_| sample_discrete(&[0.5, 0.5], &mut rng))
            .collect();
        let e = estimate(&outcomes, 2).unwrap();
        assert!((e.f[0] - 0.5).abs() < 3.0 * (0.25f64 / 1e4).sqrt());
        assert_eq!(e.counts.iter().sum::<u64>(), e.n);
    }

    #[test]
    fn density_examples() {
        let peak = frequency_density(0.5, 0.5, 100).unwrap();
        assert!((peak - (100.0 / std::f64::consts::PI).sqrt()).abs() < 1e-12);
        assert!((peak - 5.64190).abs() < 1e-5);
        let off = frequency_density(0.6, 0.5, 100).unwrap();
        assert!((off - peak * (-1f64).exp()).abs() < 1e-12);
        assert!((off - 2.075537).abs() < 1e-6);
        for n in [1, 7, 1000] {
            let v = frequency_density(0.3, 0.3, n).unwrap();
            assert!((v - (n as f64 / (2.0 * std::f64::consts::PI * 0.3)).sqrt()).abs() < 1e-9);
        }
        assert!(frequency_density(0.5, 0.0, 10).is_err());
        assert!(frequency_density(0.5, 1.0, 10).is_err());
        assert!(frequency_density(0.5, 0.5, 0).is_err());
    }

    #[test]
    fn binomial_mode_is_narrower() {
        let a = frequency_density_with(0.5, 0.5, 100, VarianceMode::AsPrinted).unwrap();
        let b = frequency_density_with(0.5, 0.5, 100, VarianceMode::Binomial).unwrap();
        assert!((b / a - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cdf_matches_density() {
        let (p, n) = (0.3, 400);
        let h = 1e-5;
        for f in [0.25, 0.3, 0.33] {
            let d = (frequency_cdf(f + h, p, n, VarianceMode::AsPrinted).unwrap()
                - frequency_cdf(f - h, p, n, VarianceMode::AsPrinted).unwrap())
                / (2.0 * h);
            assert!((d / frequency_density(f, p, n).unwrap() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let d = ks_statistic(&xs, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!((d - 0.0005).abs() < 1e-12);
        assert!((ks_critical_value(100, 1e-3) - 0.19495).abs() < 1e-4);
    }

    #[test]
    fn consistency_examples() {
        let mut rng = SeedStream::new(5).substream(0);
        let fair: Vec<usize> = (0..10_000)
            .map(|_| sample_discrete(&[0.5, 0.5], &mut rng))
            .collect();
        let r = consistency_test(&estimate(&fair, 2).unwrap(), &[0.5, 0.5], 1e-3).unwrap();
        assert_eq!(r.method, ConsistencyMethod::ChiSquare);
        assert!(r.accepted);

        let biased: Vec<usize> = (0..10_000)
            .map(|_| sample_discrete(&[0.9, 0.1], &mut rng))
            .collect();
        assert!(
            !consistency_test(&estimate(&biased, 2).unwrap(), &[0.5, 0.5], 1e-3)
                .unwrap()
                .accepted
        );

        let single = consistency_test(&estimate(&[1], 2).unwrap(), &[0.5, 0.5], 1e-3).unwrap();
        assert_eq!(single.method, ConsistencyMethod::ExactMultinomial);
        assert!(single.accepted);
        assert!((single.p_value - 1.0).abs() < 1e-12);

        let impossible =
            consistency_test(&estimate(&[0, 1], 2).unwrap(), &[1.0, 0.0], 1e-3).unwrap();
        assert!(!impossible.accepted);
        let certain = consistency_test(&estimate(&[0, 0], 2).unwrap(), &[1.0, 0.0], 1e-3).unwrap();
        assert!(certain.accepted);
        assert!(consistency_test(&estimate(&[0], 2).unwrap(), &[0.5, 0.6], 1e-3).is_err());
    }

    #[test]
    fn exact_multinomial_against_binomial() {
        // For two categories the exact test is the two-sided likelihood-ordered binomial test.
        let est = FrequencyEstimate::from_counts(vec![1, 7]).unwrap();
        let r = consistency_test(&est, &[0.5, 0.5], 1e-3).unwrap();
        assert_eq!(r.method, ConsistencyMethod::ExactMultinomial);
        let expected = 2.0 * (1.0 + 8.0) / 256.0;
        assert!((r.p_value - expected).abs() < 1e-12, "{}", r.p_value);
    }

    #[test]
    fn chi_square_null_calibration() {
        let streams = SeedStream::new(99);
        let rejections = (0..400)
            .filter(|&i| {
                let mut rng = streams.substream(i);
                let xs: Vec<usize> = (0..2000)
                    .map(|_| sample_discrete(&[0.25; 4], &mut rng))
                    .collect();
                !consistency_test(&estimate(&xs, 4).unwrap(), &[0.25; 4], 0.05)
                    .unwrap()
                    .accepted
            })
            .count();
        // 5% nominal: 20 expected, binomial sd ≈ 4.4.
        assert!((5..=38).contains(&rejections), "{rejections}");
    }

    #[test]
    fn sample_size_growth() {
        let a = required_sample_size(4, 1e-3).unwrap();
        let b = required_sample_size(8, 1e-3).unwrap();
        assert!((b as f64 / a as f64 / 256.0 - 1.0).abs() < 1e-3);
        assert!(required_sample_size(16, 1e-3).unwrap() > 1_000_000_000);
        assert_eq!(required_sample_size(8, 1.0).unwrap(), 1);
        assert!(required_sample_size(1, 0.05).is_err());
    }

    #[test]
    fn two_proportion_examples() {
        assert_eq!(two_proportion_z(50, 100, 50, 100), 0.0);
        let z = two_proportion_z(60, 100, 40, 100);
        assert!((z - 0.2 / (0.25f64 * 0.02).sqrt()).abs() < 1e-12);
    }
}
