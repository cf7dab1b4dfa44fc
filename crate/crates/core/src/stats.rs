//! Empirical distributions, one-sided stochastic-dominance tests and moment
//! and ratio estimators.

use crate::streams::{Lane, RandomStream};
use serde::Serialize;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = CompensatedSum::default();
    values.into_iter().for_each(|v| s.add(v));
    s.value()
}

pub fn mean(values: &[f64]) -> f64 {
    compensated_sum(values.iter().copied()) / values.len() as f64
}

/// Unbiased sample variance.
pub fn variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    compensated_sum(values.iter().map(|v| (v - m) * (v - m))) / (n - 1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

pub fn mean_estimate(values: &[f64]) -> MeanEstimate {
    let n = values.len();
    MeanEstimate { mean: mean(values), se: (variance(values) / n as f64).sqrt(), n }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("empty sample")]
    EmptyArm,
    #[error("sample contains NaN")]
    NotANumber,
    #[error("denominator mean is zero")]
    ZeroDenominatorMean,
    #[error("paired arms differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Sorted sample with right-continuous ECDF.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalDistribution {
    values: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(mut values: Vec<f64>) -> Result<Self, StatsError> {
        if values.is_empty() {
            return Err(StatsError::EmptyArm);
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(StatsError::NotANumber);
        }
        values.sort_by(f64::total_cmp);
        Ok(EmpiricalDistribution { values })
    }

    pub fn from_slice(values: &[f64]) -> Result<Self, StatsError> {
        Self::new(values.to_vec())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Number of samples `<= u`.
    pub fn count_le(&self, u: f64) -> usize {
        self.values.partition_point(|&v| v <= u)
    }

    /// Number of samples `< u`.
    pub fn count_lt(&self, u: f64) -> usize {
        self.values.partition_point(|&v| v < u)
    }

    /// `F(u) = #{x <= u} / n`.
    pub fn ecdf(&self, u: f64) -> f64 {
        self.count_le(u) as f64 / self.len() as f64
    }

    /// `F(u-) = #{x < u} / n`.
    pub fn ecdf_before(&self, u: f64) -> f64 {
        self.count_lt(u) as f64 / self.len() as f64
    }

    /// `#{x > u} / n`.
    pub fn survival(&self, u: f64) -> f64 {
        1.0 - self.ecdf(u)
    }

    /// Smallest sample `x` with `F(x) >= p`.
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.len();
        let k = ((p * n as f64).ceil() as usize).clamp(1, n);
        self.values[k - 1]
    }

    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }

    /// Largest mass the ECDF puts on a half-open window `(w - delta, w]`;
    /// for `delta = 0` the largest atom.
    pub fn concentration(&self, delta: f64) -> f64 {
        let v = &self.values;
        let mut best = 0usize;
        let mut lo = 0usize;
        for hi in 0..v.len() {
            if delta > 0.0 {
                while v[hi] - v[lo] >= delta {
                    lo += 1;
                }
            } else if v[lo] != v[hi] {
                lo = hi;
            }
            best = best.max(hi - lo + 1);
        }
        best as f64 / v.len() as f64
    }

    /// `(u, F(u))` pairs for plotting.
    pub fn grid(&self, u: &[f64]) -> Vec<(f64, f64)> {
        u.iter().map(|&x| (x, self.ecdf(x))).collect()
    }
}

/// `F(u)` for samples; see [`EmpiricalDistribution::ecdf`].
pub fn ecdf_eval(dist: &EmpiricalDistribution, u: f64) -> f64 {
    dist.ecdf(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    /// The data do not contradict `lower <=st upper` at the test level.
    Consistent,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum TestMethod {
    Asymptotic,
    Permutation { resamples: usize, p_value: f64 },
    OneSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DominanceVerdict {
    /// `sup_u (F_upper(u) - F_lower(u))` over the pooled sample points.
    pub statistic: f64,
    pub critical: f64,
    pub alpha: f64,
    pub verdict: Verdict,
    pub n_lower: usize,
    pub n_upper: usize,
    pub method: TestMethod,
}

impl DominanceVerdict {
    pub fn consistent(&self) -> bool {
        self.verdict == Verdict::Consistent
    }
}

fn check_alpha(alpha: f64) -> Result<(), StatsError> {
    if alpha > 0.0 && alpha < 0.5 {
        Ok(())
    } else {
        Err(StatsError::InvalidArgument(format!("alpha must lie in (0, 0.5), got {alpha}")))
    }
}

/// One-sided Smirnov critical value `sqrt(-ln(alpha)/2 * (n+m)/(nm))`.
pub fn smirnov_critical(n: usize, m: usize, alpha: f64) -> f64 {
    let (n, m) = (n as f64, m as f64);
    (-alpha.ln() / 2.0 * (n + m) / (n * m)).sqrt()
}

/// `sup_u (F_upper(u) - F_lower(u))` evaluated after each pooled value.
pub fn dominance_statistic(lower: &EmpiricalDistribution, upper: &EmpiricalDistribution) -> f64 {
    let (x, z) = (lower.values(), upper.values());
    let (n, m) = (x.len() as f64, z.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut best = f64::NEG_INFINITY;
    while i < x.len() || j < z.len() {
        let v = match (x.get(i), z.get(j)) {
            (Some(&a), Some(&b)) => a.min(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => unreachable!(),
        };
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < z.len() && z[j] <= v {
            j += 1;
        }
        best = best.max(j as f64 / m - i as f64 / n);
    }
    best
}

/// Test `lower <=st upper` (i.e. `F_lower >= F_upper` everywhere).
///
/// Rejects when `D+ = sup (F_upper - F_lower)` exceeds the one-sided
/// Smirnov critical value.
pub fn test_st_dominance(lower: &[f64], upper: &[f64], alpha: f64) -> Result<DominanceVerdict, StatsError> {
    check_alpha(alpha)?;
    let lo = EmpiricalDistribution::from_slice(lower)?;
    let hi = EmpiricalDistribution::from_slice(upper)?;
    let statistic = dominance_statistic(&lo, &hi);
    let critical = smirnov_critical(lo.len(), hi.len(), alpha);
    Ok(DominanceVerdict {
        statistic,
        critical,
        alpha,
        verdict: if statistic > critical { Verdict::Rejected } else { Verdict::Consistent },
        n_lower: lo.len(),
        n_upper: hi.len(),
        method: TestMethod::Asymptotic,
    })
}

/// Arm size below which [`test_st_dominance_permutation`] is preferred.
pub const PERMUTATION_THRESHOLD: usize = 500;

/// Permutation version of [`test_st_dominance`] for small arms: the null
/// distribution of `D+` is built by reshuffling the pooled sample.
pub fn test_st_dominance_permutation(
    lower: &[f64],
    upper: &[f64],
    alpha: f64,
    resamples: usize,
    seed: u64,
) -> Result<DominanceVerdict, StatsError> {
    check_alpha(alpha)?;
    let lo = EmpiricalDistribution::from_slice(lower)?;
    let hi = EmpiricalDistribution::from_slice(upper)?;
    let observed = dominance_statistic(&lo, &hi);
    let mut pooled: Vec<f64> = lower.iter().chain(upper).copied().collect();
    let mut rng = RandomStream::new(seed, 0, Lane::Auxiliary);
    let mut exceed = 0usize;
    for _ in 0..resamples {
        shuffle(&mut pooled, &mut rng);
        let (a, b) = pooled.split_at(lower.len());
        let d = dominance_statistic(
            &EmpiricalDistribution::from_slice(a)?,
            &EmpiricalDistribution::from_slice(b)?,
        );
        if d >= observed {
            exceed += 1;
        }
    }
    let p_value = (exceed + 1) as f64 / (resamples + 1) as f64;
    Ok(DominanceVerdict {
        statistic: observed,
        critical: smirnov_critical(lo.len(), hi.len(), alpha),
        alpha,
        verdict: if p_value < alpha { Verdict::Rejected } else { Verdict::Consistent },
        n_lower: lo.len(),
        n_upper: hi.len(),
        method: TestMethod::Permutation { resamples, p_value },
    })
}

fn shuffle(v: &mut [f64], rng: &mut RandomStream) {
    for i in (1..v.len()).rev() {
        let j = (rng.uniform() * (i + 1) as f64) as usize;
        v.swap(i, j.min(i));
    }
}

/// Test `lower <=st Z` against a known CDF of `Z`.
///
/// `D+ = sup_u (F_Z(u) - F_lower(u))` is evaluated on both sides of every
/// sample jump; the critical value is the one-sample `sqrt(-ln(alpha)/(2n))`.
pub fn test_st_dominance_cdf(
    lower: &[f64],
    upper_cdf: &dyn Fn(f64) -> f64,
    alpha: f64,
) -> Result<DominanceVerdict, StatsError> {
    check_alpha(alpha)?;
    let lo = EmpiricalDistribution::from_slice(lower)?;
    let v = lo.values();
    let n = v.len();
    let mut best = f64::NEG_INFINITY;
    let mut i = 0;
    while i < n {
        let x = v[i];
        let below = i as f64 / n as f64;
        let mut k = i;
        while k < n && v[k] == x {
            k += 1;
        }
        best = best.max(upper_cdf(x.next_down()) - below);
        best = best.max(upper_cdf(x) - k as f64 / n as f64);
        i = k;
    }
    let critical = (-alpha.ln() / (2.0 * n as f64)).sqrt();
    Ok(DominanceVerdict {
        statistic: best,
        critical,
        alpha,
        verdict: if best > critical { Verdict::Rejected } else { Verdict::Consistent },
        n_lower: n,
        n_upper: 0,
        method: TestMethod::OneSample,
    })
}

/// Asymptotic Kolmogorov survival `P{K > lambda}`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sided one-sample Kolmogorov-Smirnov test against `cdf`.
pub fn ks_one_sample(samples: &[f64], cdf: &dyn Fn(f64) -> f64) -> Result<KsResult, StatsError> {
    let dist = EmpiricalDistribution::from_slice(samples)?;
    let v = dist.values();
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let en = n.sqrt();
    Ok(KsResult { statistic: d, p_value: kolmogorov_survival((en + 0.12 + 0.11 / en) * d) })
}

/// Two-sided two-sample Kolmogorov-Smirnov test.
pub fn ks_two_sample(x: &[f64], y: &[f64]) -> Result<KsResult, StatsError> {
    let a = EmpiricalDistribution::from_slice(x)?;
    let b = EmpiricalDistribution::from_slice(y)?;
    let d = dominance_statistic(&a, &b).max(dominance_statistic(&b, &a)).max(0.0);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let en = (n * m / (n + m)).sqrt();
    Ok(KsResult { statistic: d, p_value: kolmogorov_survival((en + 0.12 + 0.11 / en) * d) })
}

// ---------------------------------------------------------------------------
// Moments and ratios
// ---------------------------------------------------------------------------

/// Bootstrap resamples used by the moment and ratio estimators.
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub order: u32,
    pub estimate: f64,
    pub se: f64,
    pub confidence: f64,
    pub ci: (f64, f64),
    pub n: usize,
    /// `(prefix length, estimate)` over doubling prefixes, ending at `n`.
    pub running: Vec<(usize, f64)>,
}

impl MomentEstimate {
    /// Relative change of the running estimate over the last doubling.
    pub fn last_doubling_change(&self) -> Option<f64> {
        let k = self.running.len();
        if k < 2 {
            return None;
        }
        let (_, prev) = self.running[k - 2];
        let (_, last) = self.running[k - 1];
        if last == 0.0 {
            return Some(if prev == 0.0 { 0.0 } else { f64::INFINITY });
        }
        Some(((last - prev) / last).abs())
    }
}

fn normal_quantile(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().inverse_cdf(p)
}

fn doubling_prefixes(n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut k = 16usize.min(n);
    while k < n {
        out.push(k);
        k *= 2;
    }
    out.push(n);
    out
}

/// Sample `m`-th moment with bootstrap standard error.
pub fn moment_estimate(samples: &[f64], m: u32, confidence: f64, seed: u64) -> Result<MomentEstimate, StatsError> {
    if m == 0 {
        return Err(StatsError::InvalidArgument("moment order must be >= 1".into()));
    }
    if samples.is_empty() {
        return Err(StatsError::EmptyArm);
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(StatsError::InvalidArgument(format!("confidence must lie in (0, 1), got {confidence}")));
    }
    let powers: Vec<f64> = samples.iter().map(|&x| if m == 1 { x } else { x.powi(m as i32) }).collect();
    let n = powers.len();
    let estimate = mean(&powers);
    let mut rng = RandomStream::new(seed, u64::from(m), Lane::Auxiliary);
    let boots: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let mut s = CompensatedSum::default();
            for _ in 0..n {
                s.add(powers[((rng.uniform() * n as f64) as usize).min(n - 1)]);
            }
            s.value() / n as f64
        })
        .collect();
    let se = variance(&boots).sqrt();
    let z = normal_quantile(0.5 + confidence / 2.0);
    let running = doubling_prefixes(n).into_iter().map(|k| (k, mean(&powers[..k]))).collect();
    Ok(MomentEstimate { order: m, estimate, se, confidence, ci: (estimate - z * se, estimate + z * se), n, running })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatioMethod {
    DeltaMethod,
    Bootstrap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioEstimate {
    pub estimate: f64,
    pub se: f64,
    pub method: RatioMethod,
    pub paired: bool,
    pub n_numerator: usize,
    pub n_denominator: usize,
}

/// `mean(numerator) / mean(denominator)` with a delta-method SE.
///
/// Paired arms use the linearisation `x_i - R y_i`; unpaired arms combine
/// the two variances.
pub fn ratio_estimate(numerator: &[f64], denominator: &[f64], paired: bool) -> Result<RatioEstimate, StatsError> {
    if numerator.is_empty() || denominator.is_empty() {
        return Err(StatsError::EmptyArm);
    }
    if paired && numerator.len() != denominator.len() {
        return Err(StatsError::LengthMismatch(numerator.len(), denominator.len()));
    }
    let mx = mean(numerator);
    let my = mean(denominator);
    if my == 0.0 {
        return Err(StatsError::ZeroDenominatorMean);
    }
    let r = mx / my;
    let se = if paired {
        let n = numerator.len();
        if n < 2 {
            0.0
        } else {
            let resid: Vec<f64> = numerator.iter().zip(denominator).map(|(x, y)| x - r * y).collect();
            let ss = compensated_sum(resid.iter().map(|d| d * d));
            (ss / ((n - 1) as f64 * n as f64)).sqrt() / my.abs()
        }
    } else {
        let vx = variance(numerator) / numerator.len() as f64;
        let vy = variance(denominator) / denominator.len() as f64;
        ((vx + r * r * vy).sqrt()) / my.abs()
    };
    Ok(RatioEstimate {
        estimate: r,
        se,
        method: RatioMethod::DeltaMethod,
        paired,
        n_numerator: numerator.len(),
        n_denominator: denominator.len(),
    })
}

/// Ratio of means with an SE from bootstrapping replication indices.
pub fn ratio_estimate_bootstrap(
    numerator: &[f64],
    denominator: &[f64],
    paired: bool,
    seed: u64,
) -> Result<RatioEstimate, StatsError> {
    let base = ratio_estimate(numerator, denominator, paired)?;
    let mut rng = RandomStream::new(seed, 1, Lane::Auxiliary);
    let (nx, ny) = (numerator.len(), denominator.len());
    let pick = |rng: &mut RandomStream, n: usize| ((rng.uniform() * n as f64) as usize).min(n - 1);
    let boots: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .filter_map(|_| {
            let (mut sx, mut sy) = (CompensatedSum::default(), CompensatedSum::default());
            if paired {
                for _ in 0..nx {
                    let i = pick(&mut rng, nx);
                    sx.add(numerator[i]);
                    sy.add(denominator[i]);
                }
            } else {
                for _ in 0..nx {
                    sx.add(numerator[pick(&mut rng, nx)]);
                }
                for _ in 0..ny {
                    sy.add(denominator[pick(&mut rng, ny)]);
                }
            }
            let d = sy.value() / ny as f64;
            (d != 0.0).then(|| (sx.value() / nx as f64) / d)
        })
        .collect();
    Ok(RatioEstimate { se: variance(&boots).sqrt(), method: RatioMethod::Bootstrap, ..base })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ecdf_examples() {
        let d = EmpiricalDistribution::new(vec![3.0, 1.0, 2.0]).unwrap();
        assert_eq!(d.ecdf(2.0), 2.0 / 3.0);
        assert_eq!(d.ecdf(0.5), 0.0);
        assert_eq!(d.ecdf(3.0), 1.0);
        assert_eq!(d.ecdf_before(2.0), 1.0 / 3.0);
        assert_eq!(d.quantile(0.5), 2.0);
        assert_eq!(d.quantile(1.0), 3.0);
        assert!(EmpiricalDistribution::new(vec![]).is_err());
    }

    #[test]
    fn identical_arms_are_consistent() {
        let x: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let v = test_st_dominance(&x, &x, 0.01).unwrap();
        assert_eq!(v.statistic, 0.0);
        assert!(v.consistent());
    }

    #[test]
    fn shifted_down_arm_is_consistent() {
        let z: Vec<f64> = (0..100).map(|i| (i as f64).sqrt()).collect();
        let x: Vec<f64> = z.iter().map(|v| v - 1.0).collect();
        let v = test_st_dominance(&x, &z, 0.01).unwrap();
        assert!(v.statistic <= 0.0 && v.consistent());
    }

    #[test]
    fn statistic_handles_ties() {
        let lo = EmpiricalDistribution::new(vec![1.0, 1.0, 2.0, 2.0]).unwrap();
        let hi = EmpiricalDistribution::new(vec![1.0, 2.0, 2.0, 2.0]).unwrap();
        // After 1.0: F_hi = 1/4, F_lo = 1/2. After 2.0: both 1.
        assert_eq!(dominance_statistic(&lo, &hi), 0.0);
        assert_eq!(dominance_statistic(&hi, &lo), 0.25);
    }

    #[test]
    fn concentration_counts_windows() {
        let d = EmpiricalDistribution::new(vec![0.0, 0.1, 0.2, 1.0, 1.0]).unwrap();
        assert_eq!(d.concentration(0.0), 0.4);
        assert_eq!(d.concentration(0.15), 0.4);
        assert_eq!(d.concentration(0.25), 0.6);
        assert_eq!(d.concentration(10.0), 1.0);
    }

    #[test]
    fn constant_moment() {
        let e = moment_estimate(&[2.0; 4], 3, 0.95, 1).unwrap();
        assert_eq!((e.estimate, e.se), (8.0, 0.0));
        let xs = [1.0, 2.5, 4.0, 0.25];
        assert_eq!(moment_estimate(&xs, 1, 0.95, 1).unwrap().estimate, mean(&xs));
    }

    #[test]
    fn ratio_examples() {
        let r = ratio_estimate(&[2.0; 10], &[4.0; 10], true).unwrap();
        assert_eq!((r.estimate, r.se), (0.5, 0.0));
        assert_eq!(ratio_estimate(&[1.0], &[0.0], false), Err(StatsError::ZeroDenominatorMean));
        assert!(ratio_estimate(&[1.0, 2.0], &[1.0], true).is_err());
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
    }

    #[test]
    fn kolmogorov_tail_values() {
        assert!((kolmogorov_survival(1.36) - 0.049).abs() < 2e-3);
        assert!((kolmogorov_survival(1.63) - 0.01).abs() < 1e-3);
    }
}
