//! Distribution fits, equilibrium predictions and inequality metrics for
//! wealth samples.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("saving propensity {0} outside (0, 1)")]
    LambdaOutOfRange(f64),
    #[error("sample has {got} values, need at least {needed}")]
    SampleTooSmall { needed: usize, got: usize },
    #[error("sample has zero variance")]
    ZeroVariance,
    #[error("tail has {got} values above the threshold, need at least {needed}")]
    TailTooSmall { needed: usize, got: usize },
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("no stable window among {snapshots} snapshots")]
    NotConverged { snapshots: usize },
    #[error("{0}")]
    InvalidArgument(String),
}

pub const MIN_FIT_SAMPLE: usize = 100;
pub const MIN_TAIL_SAMPLE: usize = 50;

fn check_lambda(lambda: f64) -> Result<(), AnalysisError> {
    if lambda > 0.0 && lambda < 1.0 {
        Ok(())
    } else {
        Err(AnalysisError::LambdaOutOfRange(lambda))
    }
}

fn check_sample(sample: &[f64], needed: usize) -> Result<(), AnalysisError> {
    if sample.len() < needed {
        return Err(AnalysisError::SampleTooSmall {
            needed,
            got: sample.len(),
        });
    }
    if sample.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(AnalysisError::InvalidSample(
            "values must be finite and nonnegative".into(),
        ));
    }
    Ok(())
}

/// Gamma shape `D/2 = (1 + 2 lambda) / (1 - lambda)` of the global-saving
/// equilibrium.
pub fn effective_dimension(lambda: f64) -> Result<f64, AnalysisError> {
    check_lambda(lambda)?;
    Ok((1.0 + 2.0 * lambda) / (1.0 - lambda))
}

/// `T = <F> (1 - lambda) / (1 + 2 lambda)`
pub fn temperature(lambda: f64, mean_wealth: f64) -> Result<f64, AnalysisError> {
    check_lambda(lambda)?;
    if !(mean_wealth > 0.0) {
        return Err(AnalysisError::InvalidArgument(format!(
            "mean wealth must be positive, got {mean_wealth}"
        )));
    }
    Ok(mean_wealth * (1.0 - lambda) / (1.0 + 2.0 * lambda))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrediction {
    pub lambda: f64,
    pub d_half: f64,
    pub temperature: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

impl GammaPrediction {
    pub fn new(lambda: f64, mean_wealth: f64) -> Result<Self, AnalysisError> {
        let d_half = effective_dimension(lambda)?;
        let d = 2.0 * d_half;
        Ok(Self {
            lambda,
            d_half,
            temperature: temperature(lambda, mean_wealth)?,
            skewness: 2.0 * 2f64.sqrt() / d.sqrt(),
            excess_kurtosis: 12.0 / d,
        })
    }
}

fn mean(sample: &[f64]) -> f64 {
    sample.iter().sum::<f64>() / sample.len() as f64
}

fn sorted(sample: &[f64]) -> Vec<f64> {
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Kolmogorov-Smirnov distance between the empirical CDF of `sample` and
/// `cdf`.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let xs = sorted(sample);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialFit {
    pub mean: f64,
    pub ks: f64,
}

/// Maximum-likelihood exponential fit plus KS distance to `Exp(mean)`.
pub fn fit_exponential(sample: &[f64]) -> Result<ExponentialFit, AnalysisError> {
    check_sample(sample, MIN_FIT_SAMPLE)?;
    let m = mean(sample);
    if m <= 0.0 {
        return Err(AnalysisError::ZeroVariance);
    }
    let ks = ks_statistic(sample, |x| 1.0 - (-x / m).exp());
    Ok(ExponentialFit { mean: m, ks })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaFit {
    pub shape: f64,
    pub scale: f64,
}

/// Method-of-moments Gamma fit: `shape = mean^2 / var`, `scale = var / mean`.
pub fn fit_gamma(sample: &[f64]) -> Result<GammaFit, AnalysisError> {
    check_sample(sample, MIN_FIT_SAMPLE)?;
    let m = mean(sample);
    let var = sample.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (sample.len() - 1) as f64;
    if var <= 0.0 || m <= 0.0 {
        return Err(AnalysisError::ZeroVariance);
    }
    Ok(GammaFit {
        shape: m * m / var,
        scale: var / m,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoFit {
    pub alpha: f64,
    pub x_min: f64,
    pub n_tail: usize,
}

/// Hill estimator over values `>= x_min`.
pub fn fit_pareto_tail(sample: &[f64], x_min: f64) -> Result<ParetoFit, AnalysisError> {
    if !(x_min > 0.0) || !x_min.is_finite() {
        return Err(AnalysisError::InvalidArgument(format!(
            "tail threshold must be positive, got {x_min}"
        )));
    }
    let (n_tail, log_sum) = sample
        .iter()
        .filter(|&&x| x >= x_min)
        .fold((0usize, 0.0), |(n, s), &x| (n + 1, s + (x / x_min).ln()));
    if n_tail < MIN_TAIL_SAMPLE {
        return Err(AnalysisError::TailTooSmall {
            needed: MIN_TAIL_SAMPLE,
            got: n_tail,
        });
    }
    if log_sum <= 0.0 {
        return Err(AnalysisError::ZeroVariance);
    }
    Ok(ParetoFit {
        alpha: n_tail as f64 / log_sum,
        x_min,
        n_tail,
    })
}

/// Empirical `q`-quantile (nearest rank).
pub fn quantile(sample: &[f64], q: f64) -> f64 {
    let xs = sorted(sample);
    let idx = ((q * xs.len() as f64).ceil() as usize).clamp(1, xs.len()) - 1;
    xs[idx]
}

/// Default tail threshold: the 80th percentile.
pub fn default_tail_threshold(sample: &[f64]) -> f64 {
    quantile(sample, 0.8)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailStability {
    pub quantiles: Vec<f64>,
    pub alphas: Vec<f64>,
    /// `(max - min) / mean` of the estimates.
    pub relative_spread: f64,
    pub power_law: bool,
}

/// Hill estimates at several thresholds. A power law gives roughly the same
/// exponent at every threshold; lighter tails give estimates that climb.
pub fn tail_stability(sample: &[f64], quantiles: &[f64]) -> Result<TailStability, AnalysisError> {
    let alphas = quantiles
        .iter()
        .map(|&q| fit_pareto_tail(sample, quantile(sample, q)).map(|f| f.alpha))
        .collect::<Result<Vec<_>, _>>()?;
    let lo = alphas.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = alphas.iter().copied().fold(0.0, f64::max);
    let spread = (hi - lo) / mean(&alphas);
    Ok(TailStability {
        quantiles: quantiles.to_vec(),
        alphas,
        relative_spread: spread,
        power_law: spread < 0.3,
    })
}

/// Share of the total held by the top `ceil(q n)` values.
pub fn top_share(sample: &[f64], q: f64) -> Result<f64, AnalysisError> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(AnalysisError::InvalidArgument(format!(
            "fraction must be in (0, 1], got {q}"
        )));
    }
    check_sample(sample, 1)?;
    let mut xs = sorted(sample);
    xs.reverse();
    let k = ((q * xs.len() as f64).ceil() as usize).min(xs.len());
    let total: f64 = xs.iter().sum();
    if total == 0.0 {
        return Err(AnalysisError::ZeroVariance);
    }
    if k == xs.len() {
        return Ok(1.0);
    }
    Ok(xs[..k].iter().sum::<f64>() / total)
}

/// Gini coefficient from the sorted-rank formula.
pub fn gini(sample: &[f64]) -> Result<f64, AnalysisError> {
    check_sample(sample, 1)?;
    let xs = sorted(sample);
    let n = xs.len() as f64;
    let total: f64 = xs.iter().sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    let weighted: f64 = xs
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * (i as f64 + 1.0) - n - 1.0) * x)
        .sum();
    Ok(weighted / (n * total))
}

/// Wasserstein-1 distance between two empirical distributions, i.e. the L1
/// distance between their CDFs.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> f64 {
    let xa = sorted(a);
    let xb = sorted(b);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut prev = xa[0].min(xb[0]);
    let mut dist = 0.0;
    while i < xa.len() || j < xb.len() {
        let next = match (xa.get(i), xb.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        dist += (i as f64 / na - j as f64 / nb).abs() * (next - prev);
        while i < xa.len() && xa[i] == next {
            i += 1;
        }
        while j < xb.len() && xb[j] == next {
            j += 1;
        }
        prev = next;
    }
    dist
}

/// Earliest snapshot index `i` from which the distance between the pooled
/// windows before and after each boundary stays below `tol` for `window`
/// consecutive boundaries. Distances are Wasserstein-1 divided by the pooled
/// mean, so `tol` is scale free.
pub fn equilibrium_detect(
    snapshots: &[Vec<f64>],
    window: usize,
    tol: f64,
) -> Result<usize, AnalysisError> {
    if window == 0 {
        return Err(AnalysisError::InvalidArgument("window must be positive".into()));
    }
    let len = snapshots.len();
    if len < 2 * window {
        return Err(AnalysisError::SampleTooSmall {
            needed: 2 * window,
            got: len,
        });
    }
    let pool = |r: std::ops::Range<usize>| -> Vec<f64> {
        snapshots[r].iter().flat_map(|s| s.iter().copied()).collect()
    };
    let distance: Vec<f64> = (window..=len - window)
        .map(|i| {
            let before = pool(i - window..i);
            let after = pool(i..i + window);
            let scale = mean(&before).max(f64::MIN_POSITIVE);
            wasserstein1(&before, &after) / scale
        })
        .collect();
    let mut run = 0;
    for (k, &d) in distance.iter().enumerate() {
        if d < tol {
            run += 1;
            if run == window.min(distance.len()) {
                return Ok(k + 1 - run + window);
            }
        } else {
            run = 0;
        }
    }
    Err(AnalysisError::NotConverged { snapshots: len })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub density: Vec<f64>,
}

/// Equal-width histogram over `[lo, hi]`; values outside are dropped from the
/// counts but not from the density normalisation.
pub fn histogram(sample: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Histogram, AnalysisError> {
    if bins == 0 || !(hi > lo) {
        return Err(AnalysisError::InvalidArgument(format!(
            "need bins > 0 and hi > lo, got {bins} bins over [{lo}, {hi}]"
        )));
    }
    check_sample(sample, 1)?;
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &x in sample {
        if x >= lo && x <= hi {
            let b = (((x - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
    }
    let n = sample.len() as f64;
    Ok(Histogram {
        edges: (0..=bins).map(|i| lo + width * i as f64).collect(),
        density: counts.iter().map(|&c| c as f64 / (n * width)).collect(),
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predictions() {
        assert_eq!(effective_dimension(0.5).unwrap(), 4.0);
        assert!((effective_dimension(0.8).unwrap() - 13.0).abs() < 1e-12);
        assert!((effective_dimension(1e-9).unwrap() - 1.0).abs() < 1e-8);
        assert!(effective_dimension(1.0).is_err());
        assert_eq!(temperature(0.5, 10.0).unwrap(), 2.5);
        assert_eq!(temperature(0.25, 10.0).unwrap(), 5.0);
        assert!(temperature(0.6, 10.0).unwrap() < temperature(0.4, 10.0).unwrap());
        let p = GammaPrediction::new(0.5, 10.0).unwrap();
        assert!((p.skewness - 1.0).abs() < 1e-12);
        assert!((p.excess_kurtosis - 1.5).abs() < 1e-12);
    }

    #[test]
    fn constant_sample_fits_poorly() {
        let fit = fit_exponential(&[5.0; 200]).unwrap();
        assert!(fit.ks > 0.6);
        assert_eq!(fit_gamma(&[5.0; 200]), Err(AnalysisError::ZeroVariance));
        assert!(matches!(
            fit_exponential(&[1.0; 10]),
            Err(AnalysisError::SampleTooSmall { .. })
        ));
    }

    #[test]
    fn shares_and_gini() {
        let equal = vec![3.0; 100];
        assert!((top_share(&equal, 0.2).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(top_share(&equal, 1.0).unwrap(), 1.0);
        assert_eq!(gini(&equal).unwrap(), 0.0);
        let mut one = vec![0.0; 100];
        one[7] = 50.0;
        assert_eq!(top_share(&one, 0.2).unwrap(), 1.0);
        assert!((gini(&one).unwrap() - 0.99).abs() < 1e-12);
    }

    #[test]
    fn wasserstein_of_shift() {
        let a: Vec<f64> = (0..10).map(f64::from).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 0.5).collect();
        assert!((wasserstein1(&a, &b) - 0.5).abs() < 1e-12);
        assert_eq!(wasserstein1(&a, &a), 0.0);
    }

    #[test]
    fn constant_snapshots_converge_immediately() {
        let snaps = vec![vec![1.0, 2.0, 3.0]; 10];
        assert_eq!(equilibrium_detect(&snaps, 3, 0.01).unwrap(), 3);
        assert!(equilibrium_detect(&snaps[..5], 3, 0.01).is_err());
    }

    #[test]
    fn drifting_snapshots_do_not_converge() {
        let snaps: Vec<Vec<f64>> = (0..20).map(|k| vec![1.0, 1.0 + k as f64]).collect();
        assert!(matches!(
            equilibrium_detect(&snaps, 3, 0.01),
            Err(AnalysisError::NotConverged { .. })
        ));
    }

    #[test]
    fn histogram_bins() {
        let h = histogram(&[0.5, 1.5, 1.5, 2.0], 2, 0.0, 2.0).unwrap();
        assert_eq!(h.counts, vec![1, 3]);
        assert_eq!(h.edges, vec![0.0, 1.0, 2.0]);
        assert!((h.density.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
