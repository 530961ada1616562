//! Analytic models of parallelized sequential performance.
//!
//! Execution time of a job split over `n` cores, normalized to the single-core
//! time, is modeled as
//!
//! ```text
//! T(n) = s + (1 - s) / n + c * (n - 1)
//! ```
//!
//! where `s` is the non-payload (serial, communication, housekeeping) fraction
//! and `c` the time every additional core adds. With `c = 0` this is the
//! first-order (saturating) model, `S(n) = 1 / (s + (1 - s) / n)`. With `c > 0`
//! the speedup `S = 1 / T` peaks at an interior core count and then falls.
//!
//! Every function here is pure and generic over [`Scalar`].

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter out of domain: {name} = {value}")]
    Domain { name: &'static str, value: f64 },
    #[error("no interior optimum: overhead coefficient is zero or the workload is fully serial")]
    NoInteriorOptimum,
    #[error("optimal core count {0} does not fit in an integer core count")]
    OptimumOverflow(f64),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("no speedup: reduced-width performance must exceed full-width performance")]
    NoSpeedup,
    #[error("zero/negative housekeeping: performance ratio {ratio} reaches the width ratio {width_ratio}")]
    NonPositiveHousekeeping { ratio: f64, width_ratio: f64 },
}

fn domain<T: Scalar>(name: &'static str, value: T) -> ModelError {
    ModelError::Domain {
        name,
        value: value.to_f64().unwrap_or(f64::NAN),
    }
}

/// Parameters of the scaling model.
///
/// The symbol α used in the supercomputing literature for this quantity has two
/// readings: as the non-payload fraction itself (then α = `nonpayload_fraction`)
/// or as the parallelizable fraction (then α = 1 − `nonpayload_fraction`).
/// [`ScalingParams::from_alpha`] takes the first reading; use
/// [`ScalingParams::from_parallel_fraction`] for the second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingParams<T> {
    nonpayload_fraction: T,
    overhead_coeff: T,
    per_core_perf: T,
}

impl<T: Scalar> ScalingParams<T> {
    pub fn new(nonpayload_fraction: T, overhead_coeff: T, per_core_perf: T) -> Result<Self, ModelError> {
        let s = nonpayload_fraction;
        if !(s >= T::zero() && s <= T::one()) {
            return Err(domain("nonpayload_fraction", s));
        }
        if !overhead_coeff.is_finite() || overhead_coeff < T::zero() {
            return Err(domain("overhead_coeff", overhead_coeff));
        }
        if !per_core_perf.is_finite() || per_core_perf <= T::zero() {
            return Err(domain("per_core_perf", per_core_perf));
        }
        Ok(Self {
            nonpayload_fraction,
            overhead_coeff,
            per_core_perf,
        })
    }

    /// First-order parameters (`c = 0`) with unit per-core performance.
    pub fn first_order(nonpayload_fraction: T) -> Result<Self, ModelError> {
        Self::new(nonpayload_fraction, T::zero(), T::one())
    }

    /// Reads α as the non-payload fraction.
    pub fn from_alpha(alpha: T) -> Result<Self, ModelError> {
        Self::first_order(alpha)
    }

    /// Reads α as the parallelizable fraction, `s = 1 - α`.
    pub fn from_parallel_fraction(parallel: T) -> Result<Self, ModelError> {
        if !(parallel >= T::zero() && parallel <= T::one()) {
            return Err(domain("parallel_fraction", parallel));
        }
        Self::first_order(T::one() - parallel)
    }

    pub fn with_overhead(self, overhead_coeff: T) -> Result<Self, ModelError> {
        Self::new(self.nonpayload_fraction, overhead_coeff, self.per_core_perf)
    }

    pub fn with_perf(self, per_core_perf: T) -> Result<Self, ModelError> {
        Self::new(self.nonpayload_fraction, self.overhead_coeff, per_core_perf)
    }

    pub fn nonpayload_fraction(&self) -> T {
        self.nonpayload_fraction
    }

    pub fn overhead_coeff(&self) -> T {
        self.overhead_coeff
    }

    pub fn per_core_perf(&self) -> T {
        self.per_core_perf
    }

    /// Normalized execution time `T(n)` of the second-order model.
    pub fn relative_time(&self, n: T) -> Result<T, ModelError> {
        check_cores(n)?;
        let s = self.nonpayload_fraction;
        Ok(s + (T::one() - s) / n + self.overhead_coeff * (n - T::one()))
    }
}

/// A named set of scaling parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadProfile<T> {
    pub name: String,
    pub params: ScalingParams<T>,
}

impl<T: Scalar> WorkloadProfile<T> {
    pub fn new(name: impl Into<String>, params: ScalingParams<T>) -> Self {
        Self {
            name: name.into(),
            params,
        }
    }

    /// Default profiles in order of increasing non-payload fraction.
    ///
    /// The fractions are illustrative defaults chosen to spread the plateaus
    /// over several decades, not measured values.
    pub fn presets() -> Vec<Self> {
        [
            ("hpl-like", 1e-7),
            ("hpcg-like", 1e-5),
            ("ai-like", 1e-4),
            ("brain-sim-like", 1e-2),
        ]
        .into_iter()
        .map(|(name, s)| {
            let params = ScalingParams::first_order(T::lit(s)).expect("preset in domain");
            Self::new(name, params)
        })
        .collect()
    }
}

/// One sample of a model curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint<T> {
    pub n_cores: u64,
    pub value: T,
}

fn check_cores<T: Scalar>(n: T) -> Result<(), ModelError> {
    if n >= T::one() && n.is_finite() {
        Ok(())
    } else {
        Err(domain("n", n))
    }
}

/// Saturating speedup `1 / (s + (1 - s) / n)`; the overhead coefficient is ignored.
pub fn speedup_first_order<T: Scalar>(params: &ScalingParams<T>, n: T) -> Result<T, ModelError> {
    check_cores(n)?;
    let s = params.nonpayload_fraction;
    Ok(T::one() / (s + (T::one() - s) / n))
}

/// Peaked speedup `1 / T(n)` including the per-core overhead term.
pub fn speedup_second_order<T: Scalar>(params: &ScalingParams<T>, n: T) -> Result<T, ModelError> {
    params.relative_time(n).map(|t| T::one() / t)
}

/// Integer core count maximizing [`speedup_second_order`]; ties go to the
/// smaller count.
pub fn optimal_cores<T: Scalar>(params: &ScalingParams<T>) -> Result<u64, ModelError> {
    let s = params.nonpayload_fraction;
    let c = params.overhead_coeff;
    if c <= T::zero() || s >= T::one() {
        return Err(ModelError::NoInteriorOptimum);
    }
    // T(n) is convex for n > 0, so the integer optimum is a neighbour of the
    // real stationary point.
    let real = ((T::one() - s) / c).sqrt();
    let lo = real.floor().max(T::one());
    let lo = lo
        .to_u64()
        .filter(|&v| v < u64::MAX)
        .ok_or_else(|| ModelError::OptimumOverflow(real.to_f64().unwrap_or(f64::INFINITY)))?;
    let hi = lo + 1;
    let s_lo = speedup_second_order(params, T::from_count(lo))?;
    let s_hi = speedup_second_order(params, T::from_count(hi))?;
    Ok(if s_hi > s_lo { hi } else { lo })
}

/// Second-order speedup per core.
pub fn efficiency<T: Scalar>(params: &ScalingParams<T>, n: T) -> Result<T, ModelError> {
    Ok(speedup_second_order(params, n)? / n)
}

/// `grid[i][j] = efficiency(s_values[i], n_values[j])` at a fixed overhead coefficient.
pub fn efficiency_surface<T: Scalar>(
    s_values: &[T],
    n_values: &[T],
    overhead_coeff: T,
) -> Result<Vec<Vec<T>>, ModelError> {
    if s_values.is_empty() {
        return Err(ModelError::EmptyInput("s_values"));
    }
    if n_values.is_empty() {
        return Err(ModelError::EmptyInput("n_values"));
    }
    s_values
        .iter()
        .map(|&s| {
            let params = ScalingParams::new(s, overhead_coeff, T::one())?;
            n_values.iter().map(|&n| efficiency(&params, n)).collect()
        })
        .collect()
}

/// Delivered (payload) performance `p * n * efficiency(n)`.
pub fn payload_performance<T: Scalar>(params: &ScalingParams<T>, n: T) -> Result<T, ModelError> {
    Ok(params.per_core_perf * n * efficiency(params, n)?)
}

/// A named curve.
pub type Curve<T> = (String, Vec<CurvePoint<T>>);

/// Payload performance of each profile sampled at `n_values`.
pub fn roofline<T: Scalar>(profiles: &[WorkloadProfile<T>], n_values: &[u64]) -> Result<Vec<Curve<T>>, ModelError> {
    if n_values.is_empty() {
        return Err(ModelError::EmptyInput("n_values"));
    }
    profiles
        .iter()
        .map(|profile| {
            let curve = n_values
                .iter()
                .map(|&n| {
                    payload_performance(&profile.params, T::from_count(n)).map(|value| CurvePoint { n_cores: n, value })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok((profile.name.clone(), curve))
        })
        .collect()
}

/// Roughly `count` log-spaced integers in `[min, max]`, deduplicated, both ends included.
pub fn log_spaced(min: u64, max: u64, count: usize) -> Vec<u64> {
    let min = min.max(1);
    if max <= min || count < 2 {
        return vec![min];
    }
    let (lo, hi) = ((min as f64).ln(), (max as f64).ln());
    let mut out: Vec<u64> = (0..count)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (count - 1) as f64;
            (x.exp().round() as u64).clamp(min, max)
        })
        .collect();
    out.dedup();
    out
}

/// Result of [`mixed_precision_extrapolate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrapolation<T> {
    /// Width-independent share of the full-width execution time.
    pub housekeeping_share: T,
    /// Performance with zero-width operands, where only housekeeping remains.
    pub fp0_performance: T,
}

/// Splits execution time into width-independent housekeeping `H` and payload
/// `P` scaled by operand width, `T(w) = H + P * w / width_a`, from two
/// measurements at the same operation count.
pub fn mixed_precision_extrapolate<T: Scalar>(
    perf_a: T,
    width_a: u32,
    perf_b: T,
    width_b: u32,
) -> Result<Extrapolation<T>, ModelError> {
    if width_a == 0 {
        return Err(domain("width_a", T::zero()));
    }
    if width_b == 0 || width_b >= width_a {
        return Err(domain("width_b", T::from_count(u64::from(width_b))));
    }
    if !perf_a.is_finite() || perf_a <= T::zero() {
        return Err(domain("perf_a", perf_a));
    }
    if !perf_b.is_finite() || perf_b <= T::zero() {
        return Err(domain("perf_b", perf_b));
    }
    let ratio = perf_b / perf_a;
    if ratio <= T::one() {
        return Err(ModelError::NoSpeedup);
    }
    let width_ratio = T::from_count(u64::from(width_a)) / T::from_count(u64::from(width_b));
    if ratio >= width_ratio {
        return Err(ModelError::NonPositiveHousekeeping {
            ratio: ratio.to_f64().unwrap_or(f64::NAN),
            width_ratio: width_ratio.to_f64().unwrap_or(f64::NAN),
        });
    }
    // ratio = (H + P) / (H + P / width_ratio)  =>  P / H = (ratio - 1) / (1 - ratio / width_ratio)
    let payload_per_housekeeping = (ratio - T::one()) / (T::one() - ratio / width_ratio);
    Ok(Extrapolation {
        housekeeping_share: T::one() / (T::one() + payload_per_housekeeping),
        fp0_performance: perf_a * (T::one() + payload_per_housekeeping),
    })
}
