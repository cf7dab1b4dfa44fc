//! Stability reports, geometric decompounding, geometric-sum Monte Carlo
//! bounds, tail diagnostics and classical M/G/1 reference values.

use crate::model::{JointLaw, Marginal};
use crate::stats::{moment_estimate, EmpiricalDistribution, MomentEstimate, StatsError};
use crate::streams::{map_replications, Lane, RandomStream, ReplicationKey};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BoundsError {
    #[error("service law has an infinite mean")]
    InfiniteMeanService,
    #[error("unstable input: rho = {0} >= 1")]
    UnstableInput(f64),
    #[error("empty sample")]
    DegenerateEmptySample,
    #[error("negative sample value {0}")]
    NegativeSample(f64),
    #[error("quantile level {0} lies beyond the sample")]
    QuantileBeyondSample(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("replication {id}: {message}")]
    Replication { id: u64, message: String },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

// ---------------------------------------------------------------------------
// Stability
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StabilityVerdict {
    Stable,
    Unstable,
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityReport {
    pub lambda_h: f64,
    pub mean_service: f64,
    /// `lambda_h * E[S]`.
    pub rho_h: f64,
    /// `lim (1 - H(y))` as `y -> inf`.
    pub p_inf: f64,
    /// `rho_h * p_inf`.
    pub rho_eff: f64,
    pub verdict: StabilityVerdict,
}

/// Load of the dominating homogeneous queue against the threshold 1.
pub fn stability_check(lambda_h: f64, service: &Marginal, p_inf: f64) -> Result<StabilityReport, BoundsError> {
    let mean_service = service.mean();
    if !mean_service.is_finite() {
        return Err(BoundsError::InfiniteMeanService);
    }
    if !(0.0..=1.0).contains(&p_inf) {
        return Err(BoundsError::InvalidArgument(format!("p_inf must lie in [0, 1], got {p_inf}")));
    }
    let rho_h = lambda_h * mean_service;
    let rho_eff = rho_h * p_inf;
    let verdict = if rho_eff < 1.0 {
        StabilityVerdict::Stable
    } else if rho_eff == 1.0 {
        StabilityVerdict::Boundary
    } else {
        StabilityVerdict::Unstable
    };
    Ok(StabilityReport { lambda_h, mean_service, rho_h, p_inf, rho_eff, verdict })
}

pub fn stability_for(lambda_h: f64, joint: &JointLaw) -> Result<StabilityReport, BoundsError> {
    stability_check(lambda_h, &joint.service, joint.patience_survival_limit())
}

// ---------------------------------------------------------------------------
// M/G/1 reference values
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Mg1Oracles {
    pub rho: f64,
    /// `E[tau(1)]`; scale by `x` for other initial workloads.
    pub tau_per_unit_workload: f64,
    /// Pollaczek-Khinchine mean workload `lambda E[S^2] / (2 (1 - rho))`.
    pub pk_mean_workload: f64,
    /// Mean number served in a busy period opened by one customer,
    /// that customer included.
    pub busy_count_mean: f64,
}

impl Mg1Oracles {
    /// `E[tau(x)] = x / (1 - rho)`.
    pub fn mean_tau(&self, x: f64) -> f64 {
        x * self.tau_per_unit_workload
    }
}

pub fn mg1_oracles(lambda_h: f64, service: &Marginal) -> Result<Mg1Oracles, BoundsError> {
    let m1 = service.mean();
    if !m1.is_finite() {
        return Err(BoundsError::InfiniteMeanService);
    }
    let rho = lambda_h * m1;
    if rho >= 1.0 {
        return Err(BoundsError::UnstableInput(rho));
    }
    let m2 = service.moment(2);
    Ok(Mg1Oracles {
        rho,
        tau_per_unit_workload: 1.0 / (1.0 - rho),
        pk_mean_workload: if lambda_h == 0.0 { 0.0 } else { lambda_h * m2 / (2.0 * (1.0 - rho)) },
        busy_count_mean: 1.0 / (1.0 - rho),
    })
}

// ---------------------------------------------------------------------------
// Geometric-sum samplers
// ---------------------------------------------------------------------------

/// `p = exp(-kappa lambda_h)`, the chance that a rate-`lambda_h` idle gap
/// outlasts `kappa`.
pub fn long_idle_probability(kappa: f64, lambda_h: f64) -> f64 {
    (-kappa * lambda_h).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeometricBoundSamples {
    pub success: f64,
    pub iota: Vec<u64>,
    /// `iota kappa g(0) + sum_{i < iota} A^i`.
    pub prop2: Vec<f64>,
    /// `iota g(0) + sum_{i < iota} A*^i`.
    pub prop3: Vec<f64>,
    /// `sum_{i <= iota} (A^i + g(0) max(kappa, 1))`.
    pub shifted_sum: Vec<f64>,
}

/// Largest geometric count a bound sample may need before giving up.
pub const MAX_IOTA: u64 = 1 << 24;

/// Draw the geometric-sum bounds. `busy_sampler(key)` must return one
/// `(A, A*)` pair of the dominating busy period (initial work drawn from
/// the service law) for the given key.
pub fn sample_prop_bound<F>(
    busy_sampler: F,
    kappa: f64,
    lambda_h: f64,
    g0: f64,
    reps: u64,
    seed: u64,
    threads: Option<usize>,
) -> Result<GeometricBoundSamples, BoundsError>
where
    F: Fn(ReplicationKey) -> Result<(f64, f64), String> + Sync + Send,
{
    if reps < 100 {
        return Err(BoundsError::InvalidArgument(format!("reps must be >= 100, got {reps}")));
    }
    let p = long_idle_probability(kappa, lambda_h);
    let shift = g0 * kappa.max(1.0);
    let rows = map_replications(reps, threads, |r| -> Result<(u64, f64, f64, f64), BoundsError> {
        let mut aux = RandomStream::new(seed, r, Lane::Auxiliary);
        let iota = aux.geometric(p);
        if iota > MAX_IOTA {
            return Err(BoundsError::InvalidArgument(format!(
                "geometric count {iota} too large (success probability {p})"
            )));
        }
        let base = ReplicationKey::new(seed, r).fork(0xB0B);
        let (mut s2, mut s3, mut heavy) = (
            crate::stats::CompensatedSum::default(),
            crate::stats::CompensatedSum::default(),
            crate::stats::CompensatedSum::default(),
        );
        s2.add(iota as f64 * kappa * g0);
        s3.add(iota as f64 * g0);
        for i in 0..iota {
            let key = ReplicationKey::new(base.seed, r.wrapping_mul(MAX_IOTA).wrapping_add(i));
            let (a, a_star) =
                busy_sampler(key).map_err(|message| BoundsError::Replication { id: r, message })?;
            if i + 1 < iota {
                s2.add(a);
                s3.add(a_star);
            }
            heavy.add(a + shift);
        }
        Ok((iota, s2.value(), s3.value(), heavy.value()))
    });
    let mut out = GeometricBoundSamples {
        success: p,
        iota: Vec::with_capacity(reps as usize),
        prop2: Vec::with_capacity(reps as usize),
        prop3: Vec::with_capacity(reps as usize),
        shifted_sum: Vec::with_capacity(reps as usize),
    };
    for row in rows {
        let (i, a, b, c) = row?;
        out.iota.push(i);
        out.prop2.push(a);
        out.prop3.push(b);
        out.shifted_sum.push(c);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Geometric decompounding on a lattice
// ---------------------------------------------------------------------------

/// Lattice cells never exceed this count; the achieved error is reported
/// when the tolerance cannot be met below it.
pub const MAX_LATTICE_CELLS: usize = 1 << 22;

const DIRECT_CONVOLUTION_CELLS: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decompounding {
    pub u: Vec<f64>,
    pub j: Vec<f64>,
    /// Success probability `exp(-kappa lambda_h)` of the geometric count.
    pub p: f64,
    /// `max(1, kappa)`.
    pub shift: f64,
    /// Lattice width (a power of two).
    pub h: f64,
    pub cells: usize,
    pub n_max: usize,
    /// Geometric weight beyond `n_max`.
    pub residual_weight: f64,
    /// Largest gap on the grid between the round-down and round-up lattice
    /// columns, which bracket the exact decompounding of the sample.
    pub lattice_error: f64,
    pub tol: f64,
    pub tol_met: bool,
    /// Samples are rounded up to the lattice, so `j` never exceeds the
    /// exact decompounding of the sample.
    pub rounding: &'static str,
}

/// `J(u) = sum_{n >= 1} (1-p)^{n-1} p F^{*n}(u - max(1, kappa))`,
/// `p = exp(-kappa lambda_h)`, for the empirical `F`.
pub fn decompound_cdf(
    f_hat: &EmpiricalDistribution,
    kappa: f64,
    lambda_h: f64,
    u_grid: &[f64],
    tol: f64,
) -> Result<Decompounding, BoundsError> {
    if f_hat.is_empty() {
        return Err(BoundsError::DegenerateEmptySample);
    }
    if !(tol > 0.0 && tol < 1.0) {
        return Err(BoundsError::InvalidArgument(format!("tol must lie in (0, 1), got {tol}")));
    }
    if !(kappa > 0.0 && lambda_h > 0.0) {
        return Err(BoundsError::InvalidArgument("kappa and lambda_h must be > 0".into()));
    }
    if f_hat.min() < 0.0 {
        return Err(BoundsError::NegativeSample(f_hat.min()));
    }
    let p = long_idle_probability(kappa, lambda_h);
    let q = 1.0 - p;
    let shift = kappa.max(1.0);
    let n_max = if q <= 0.0 {
        1
    } else {
        ((tol / 2.0).ln() / q.ln()).ceil().max(1.0) as usize
    };
    let residual_weight = q.powi(n_max as i32);
    let weights: Vec<f64> = (1..=n_max).map(|n| q.powi(n as i32 - 1) * p).collect();

    let v_max = u_grid.iter().fold(0.0f64, |m, &u| m.max(u - shift));
    let base = Decompounding {
        u: u_grid.to_vec(),
        j: vec![0.0; u_grid.len()],
        p,
        shift,
        h: 0.0,
        cells: 0,
        n_max,
        residual_weight,
        lattice_error: 0.0,
        tol,
        tol_met: true,
        rounding: "up",
    };
    if v_max < f_hat.min() {
        // Any sum of n >= 1 terms exceeds every grid point.
        return Ok(base);
    }

    let (h, cells, j, lattice_error) = bracket_on_lattice(f_hat, v_max, shift, u_grid, &weights, tol / 2.0);
    Ok(Decompounding {
        j,
        h,
        cells,
        lattice_error,
        tol_met: lattice_error <= tol / 2.0 && residual_weight <= tol / 2.0,
        ..base
    })
}

/// Truncated mixture CDF on the grid for samples rounded up (`ceil`) or
/// down (`floor`) to multiples of `h`.
fn lattice_cdf(
    f_hat: &EmpiricalDistribution,
    h: f64,
    cells: usize,
    shift: f64,
    u_grid: &[f64],
    weights: &[f64],
    round: fn(f64) -> f64,
) -> Vec<f64> {
    let n = f_hat.len() as f64;
    let mut pmf = vec![0.0; cells];
    for &x in f_hat.values() {
        let k = round(x / h);
        if k < cells as f64 {
            pmf[k as usize] += 1.0 / n;
        }
    }
    let mixture = geometric_mixture(&pmf, weights);
    let mut cdf = Vec::with_capacity(cells);
    let mut acc = crate::stats::CompensatedSum::default();
    for m in &mixture {
        acc.add(*m);
        cdf.push(acc.value().min(1.0));
    }
    u_grid
        .iter()
        .map(|&u| {
            let v = u - shift;
            if v < 0.0 {
                0.0
            } else {
                cdf[((v / h).floor() as usize).min(cells - 1)]
            }
        })
        .collect()
}

/// Halve a dyadic lattice width until the round-down and round-up lattice
/// CDFs, which bracket the exact decompounding, agree within `target` on
/// the grid. Stops early at the cell cap or when four halvings in a row
/// past the direct-convolution size fail to shrink the gap. Returns the round-up column.
fn bracket_on_lattice(
    f_hat: &EmpiricalDistribution,
    v_max: f64,
    shift: f64,
    u_grid: &[f64],
    weights: &[f64],
    target: f64,
) -> (f64, usize, Vec<f64>, f64) {
    let mut h = 2f64.powi(v_max.max(1.0).log2().ceil() as i32);
    let (mut best_gap, mut stalled) = (f64::INFINITY, 0);
    loop {
        let cells = (v_max / h).floor() as usize + 1;
        let up = lattice_cdf(f_hat, h, cells, shift, u_grid, weights, f64::ceil);
        let down = lattice_cdf(f_hat, h, cells, shift, u_grid, weights, f64::floor);
        let gap = up.iter().zip(&down).fold(0.0f64, |m, (a, b)| m.max(b - a));
        if gap < 0.9 * best_gap {
            best_gap = gap;
            stalled = 0;
        } else if cells > DIRECT_CONVOLUTION_CELLS {
            stalled += 1;
        }
        let next = (v_max / (h / 2.0)).floor() as usize + 1;
        if gap <= target || next > MAX_LATTICE_CELLS || stalled >= 4 {
            return (h, cells, up, gap);
        }
        h /= 2.0;
    }
}

/// `sum_n w_n pmf^{*n}` truncated to `pmf.len()` cells.
fn geometric_mixture(pmf: &[f64], weights: &[f64]) -> Vec<f64> {
    let cells = pmf.len();
    let mut mixture = vec![0.0; cells];
    let mut power = pmf.to_vec();
    for (n, &w) in weights.iter().enumerate() {
        if n > 0 {
            power = convolve_truncated(&power, pmf);
        }
        for (m, p) in mixture.iter_mut().zip(&power) {
            *m += w * p;
        }
    }
    mixture
}

fn convolve_truncated(a: &[f64], b: &[f64]) -> Vec<f64> {
    let cells = a.len();
    if cells <= DIRECT_CONVOLUTION_CELLS {
        let mut out = vec![0.0; cells];
        for (i, &x) in a.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (j, &y) in b[..cells - i].iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        return out;
    }
    let size = (2 * cells).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let lift = |v: &[f64]| {
        let mut buf: Vec<Complex<f64>> = v.iter().map(|&x| Complex::new(x, 0.0)).collect();
        buf.resize(size, Complex::new(0.0, 0.0));
        buf
    };
    let mut fa = lift(a);
    let mut fb = lift(b);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    let scale = 1.0 / size as f64;
    fa[..cells].iter().map(|c| (c.re * scale).max(0.0)).collect()
}

/// Monte Carlo draws of `max(1, kappa) + sum_{i <= N} X_i`, `N` geometric
/// on `{1, 2, ...}` with success `exp(-kappa lambda_h)` and `X_i` resampled
/// from `f_hat`.
pub fn sample_compound_geometric(
    f_hat: &EmpiricalDistribution,
    kappa: f64,
    lambda_h: f64,
    draws: usize,
    seed: u64,
) -> Vec<f64> {
    let p = long_idle_probability(kappa, lambda_h);
    let shift = kappa.max(1.0);
    let v = f_hat.values();
    let mut rng = RandomStream::new(seed, 0, Lane::Auxiliary);
    (0..draws)
        .map(|_| {
            let n = rng.geometric(p);
            let mut s = shift;
            for _ in 0..n {
                s += v[((rng.uniform() * v.len() as f64) as usize).min(v.len() - 1)];
            }
            s
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundResult {
    pub u: Vec<f64>,
    pub j: Vec<f64>,
    pub j_star: Vec<f64>,
    /// ECDF of the geometric-sum Monte Carlo bound on the grid.
    pub prop2_cdf: Vec<f64>,
    pub j_meta: Decompounding,
    pub j_star_meta: Decompounding,
}

pub fn bound_result(
    f: &EmpiricalDistribution,
    f_star: &EmpiricalDistribution,
    prop2: &EmpiricalDistribution,
    kappa: f64,
    lambda_h: f64,
    u_grid: &[f64],
    tol: f64,
) -> Result<BoundResult, BoundsError> {
    let j_meta = decompound_cdf(f, kappa, lambda_h, u_grid, tol)?;
    let j_star_meta = decompound_cdf(f_star, kappa, lambda_h, u_grid, tol)?;
    Ok(BoundResult {
        u: u_grid.to_vec(),
        j: j_meta.j.clone(),
        j_star: j_star_meta.j.clone(),
        prop2_cdf: u_grid.iter().map(|&u| prop2.ecdf(u)).collect(),
        j_meta,
        j_star_meta,
    })
}

/// Evaluate a column computed on `grid` at an arbitrary `u` (step
/// interpolation from the left grid point; 0 below the grid).
pub fn step_lookup(grid: &[f64], values: &[f64], u: f64) -> f64 {
    let k = grid.partition_point(|&g| g <= u);
    if k == 0 {
        0.0
    } else {
        values[k - 1]
    }
}

// ---------------------------------------------------------------------------
// Tail diagnostics
// ---------------------------------------------------------------------------

/// `(1 - p) / ((1 - rho_h) p)` with `p = exp(-kappa lambda_h)`.
pub fn tail_constant(kappa: f64, lambda_h: f64, rho_h: f64) -> f64 {
    let p = long_idle_probability(kappa, lambda_h);
    -(-kappa * lambda_h).exp_m1() / ((1.0 - rho_h) * p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailTarget {
    /// Cycle lengths; reference `1 - G[(u - c)(1 - rho_h)]`.
    CycleLength,
    /// Served counts; reference `1 - G[(u - c)(1 - rho_h) / lambda_h]`.
    ServedCount,
    /// Homogeneous busy periods; reference `1 - G[u (1 - rho_h)]`.
    BusyPeriod,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailRow {
    pub level: f64,
    pub u: f64,
    pub survival: f64,
    pub reference: f64,
    pub ratio: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailReport {
    pub target: TailTarget,
    /// Always "trend check": these are finite-u values of a limsup.
    pub label: &'static str,
    pub rho_h: f64,
    pub kappa: f64,
    pub lambda_h: f64,
    pub g0: f64,
    pub bound: f64,
    pub rows: Vec<TailRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailSetup<'a> {
    pub service: &'a Marginal,
    pub rho_h: f64,
    pub kappa: f64,
    pub lambda_h: f64,
    pub g0: f64,
}

/// Empirical-to-reference survival ratios at sample quantiles.
pub fn tail_ratio(
    samples: &[f64],
    target: TailTarget,
    setup: TailSetup<'_>,
    levels: &[f64],
) -> Result<TailReport, BoundsError> {
    if setup.rho_h.is_nan() || setup.rho_h >= 1.0 {
        return Err(BoundsError::UnstableInput(setup.rho_h));
    }
    let dist = EmpiricalDistribution::from_slice(samples)?;
    let offset = setup.g0 * setup.kappa.max(1.0);
    let bound = match target {
        TailTarget::BusyPeriod => 1.0 / (1.0 - setup.rho_h),
        _ => tail_constant(setup.kappa, setup.lambda_h, setup.rho_h),
    };
    let mut rows = Vec::with_capacity(levels.len());
    for &level in levels {
        if !(level > 0.0 && level < 1.0) {
            return Err(BoundsError::QuantileBeyondSample(level));
        }
        let u = dist.quantile(level);
        let survival = dist.survival(u);
        if survival <= 0.0 {
            return Err(BoundsError::QuantileBeyondSample(level));
        }
        let arg = match target {
            TailTarget::CycleLength => (u - offset) * (1.0 - setup.rho_h),
            TailTarget::ServedCount => (u - offset) * (1.0 - setup.rho_h) / setup.lambda_h,
            TailTarget::BusyPeriod => u * (1.0 - setup.rho_h),
        };
        let reference = setup.service.survival(arg);
        rows.push(TailRow { level, u, survival, reference, ratio: survival / reference, bound });
    }
    Ok(TailReport {
        target,
        label: "trend check",
        rho_h: setup.rho_h,
        kappa: setup.kappa,
        lambda_h: setup.lambda_h,
        g0: setup.g0,
        bound,
        rows,
    })
}

// ---------------------------------------------------------------------------
// Served-count moments
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentApplicability {
    pub product_form: bool,
    pub stable: bool,
    /// `E[S^m] < inf`; only required for `m >= 2`.
    pub service_moment_finite: bool,
    /// All hypotheses hold, so `E[eta*^m] < inf` is guaranteed.
    pub guaranteed_finite: bool,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaMomentReport {
    pub estimate: MomentEstimate,
    pub applicability: MomentApplicability,
}

/// `E[(eta*)^m]` from cycle samples, annotated with whether the finiteness
/// hypotheses (product form, stability, finite `m`-th service moment for
/// `m >= 2`) hold for `joint` at rate bound `lambda_h`.
pub fn eta_moment_report(
    eta: &[f64],
    m: u32,
    joint: &JointLaw,
    lambda_h: f64,
    seed: u64,
) -> Result<EtaMomentReport, BoundsError> {
    let estimate = moment_estimate(eta, m, 0.95, seed)?;
    let product_form = joint.is_product_form();
    let stable = stability_for(lambda_h, joint)
        .map(|r| r.verdict == StabilityVerdict::Stable)
        .unwrap_or(false);
    let service_moment_finite = m < 2 || joint.service.moment(m).is_finite();
    let guaranteed_finite = product_form && stable && service_moment_finite;
    let mut missing = Vec::new();
    if !product_form {
        missing.push("service and patience are dependent");
    }
    if !stable {
        missing.push("dominating load is not below 1");
    }
    if !service_moment_finite {
        missing.push("service law lacks the m-th moment");
    }
    let note = if missing.is_empty() {
        format!("finite moment of order {m} guaranteed")
    } else {
        format!("no finiteness guarantee: {}", missing.join("; "))
    };
    Ok(EtaMomentReport {
        estimate,
        applicability: MomentApplicability { product_form, stable, service_moment_finite, guaranteed_finite, note },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Patience;

    #[test]
    fn stability_examples() {
        let r = stability_check(1.0, &Marginal::Deterministic { value: 0.5 }, 1.0).unwrap();
        assert_eq!((r.rho_eff, r.verdict), (0.5, StabilityVerdict::Stable));
        let r = stability_check(2.0, &Marginal::Exponential { rate: 1.0 }, 0.4).unwrap();
        assert!((r.rho_eff - 0.8).abs() < 1e-15);
        assert_eq!(r.verdict, StabilityVerdict::Stable);
        let r = stability_check(2.0, &Marginal::Exponential { rate: 1.0 }, 1.0).unwrap();
        assert_eq!((r.rho_eff, r.verdict), (2.0, StabilityVerdict::Unstable));
        assert_eq!(
            stability_check(1.0, &Marginal::Pareto { shape: 0.9, scale: 1.0 }, 1.0),
            Err(BoundsError::InfiniteMeanService)
        );
    }

    #[test]
    fn oracle_values() {
        let o = mg1_oracles(0.5, &Marginal::Exponential { rate: 1.0 }).unwrap();
        assert_eq!(o.mean_tau(1.0), 2.0);
        assert_eq!(o.pk_mean_workload, 1.0);
        let o = mg1_oracles(1e-12, &Marginal::Exponential { rate: 1.0 }).unwrap();
        assert!((o.mean_tau(3.0) - 3.0).abs() < 1e-9);
        assert!(mg1_oracles(1.0, &Marginal::Exponential { rate: 1.0 }).is_err());
    }

    #[test]
    fn tail_constant_value() {
        assert!((tail_constant(1.0, 0.4, 0.8) - 2.459).abs() < 1e-3);
    }

    #[test]
    fn point_mass_decompounding() {
        let f = EmpiricalDistribution::new(vec![1.0; 10]).unwrap();
        let d = decompound_cdf(&f, 1.0, std::f64::consts::LN_2, &[0.5, 1.5, 2.0, 3.5, 100.0], 1e-3).unwrap();
        assert_eq!(d.j[0], 0.0);
        assert_eq!(d.j[1], 0.0);
        assert!((d.j[2] - 0.5).abs() < 1e-9);
        assert!((d.j[3] - 0.75).abs() < 1e-9);
        assert!(d.j[4] > 1.0 - 1e-3);
        assert_eq!(d.lattice_error, 0.0);
    }

    #[test]
    fn fft_matches_direct_convolution() {
        let a: Vec<f64> = (0..2000).map(|i| ((i * 7919) % 13) as f64 / 1e4).collect();
        let b: Vec<f64> = (0..2000).map(|i| ((i * 104_729) % 11) as f64 / 1e4).collect();
        let fft = convolve_truncated(&a, &b);
        let mut direct = vec![0.0; a.len()];
        for i in 0..a.len() {
            for j in 0..a.len() - i {
                direct[i + j] += a[i] * b[j];
            }
        }
        for (x, y) in fft.iter().zip(&direct) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn applicability_flags() {
        let heavy = JointLaw::product(Marginal::Pareto { shape: 1.5, scale: 1.0 }, Patience::infinite());
        let r = eta_moment_report(&[0.0, 1.0, 2.0], 2, &heavy, 0.1, 1).unwrap();
        assert!(!r.applicability.service_moment_finite);
        assert!(!r.applicability.guaranteed_finite);
        let r = eta_moment_report(&[0.0, 1.0, 2.0], 1, &heavy, 0.1, 1).unwrap();
        assert!(r.applicability.guaranteed_finite);
    }
}
