//! Path functionals and refinement probes: grid-average integral estimate,
//! level-set volume fraction, path extremes, averaged conditional
//! coefficients of nested grids, and the analytic functional laws of the
//! standard Brownian bridge.

use crate::covariance::normal_cdf;
use crate::error::{Error, Result};
use crate::field::{FieldModel, FieldPlan};
use crate::geometry::Domain;
use crate::rng::StreamId;
use crate::sparse::TargetConditionals;
use nalgebra::DVector;
use rayon::prelude::*;

/// Open interval, possibly unbounded on either side.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub a: f64,
    pub b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a < b) {
            return Err(Error::InvalidArgument(format!("interval ({a}, {b})")));
        }
        Ok(Interval { a, b })
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        self.a < x && x < self.b
    }
}

/// Domain-volume-weighted grid average: `volume * mean(values)`, the grid
/// estimate of the path integral.
pub fn h1(domain: &Domain, values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "h1 of an empty grid");
    domain.volume() * values.iter().sum::<f64>() / values.len() as f64
}

/// Fraction of values strictly inside the interval, the grid estimate of a
/// level-set volume fraction.
pub fn h2(values: &[f64], interval: Interval) -> f64 {
    assert!(!values.is_empty(), "h2 of an empty grid");
    values.iter().filter(|v| interval.contains(**v)).count() as f64 / values.len() as f64
}

/// Exact grid extremes `(min, max)`.
pub fn h3(values: &[f64]) -> (f64, f64) {
    assert!(!values.is_empty(), "h3 of an empty grid");
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// Per-reference averaged conditional coefficients of one grid level:
/// `c_j = sum_i a_ij / n` over the `n` grid targets. As the grid refines,
/// the grid average of the field collapses onto `sum_j c_j z_ref[j]`.
pub fn averaged_reference_coefficients(conds: &TargetConditionals, r: usize) -> Result<Vec<f64>> {
    if conds.is_empty() {
        return Err(Error::InvalidArgument("no targets".into()));
    }
    let mut c = vec![0.0f64; r];
    for i in 0..conds.len() {
        let sc = conds.conditional(i);
        if sc.coefficients.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "target {i} has an empty conditioning set"
            )));
        }
        for (a, &k) in sc.coefficients.iter().zip(conds.neighbors(i)) {
            c[k] += a;
        }
    }
    let n = conds.len() as f64;
    for v in &mut c {
        *v /= n;
    }
    Ok(c)
}

/// Expectation of an interval indicator of `N(mu, sigma^2)` in closed form.
pub fn indicator_mean(mu: f64, sigma: f64, interval: Interval) -> f64 {
    assert!(sigma > 0.0, "sigma must be positive");
    normal_cdf((interval.b - mu) / sigma) - normal_cdf((interval.a - mu) / sigma)
}

/// Analytic laws of standard Brownian-bridge path functionals.
#[derive(Clone, Copy, Debug)]
pub struct BridgeLaws {
    /// Variance of the path integral (mean is zero).
    pub integral_variance: f64,
    /// Mean of the path maximum.
    pub max_mean: f64,
    /// Variance of the path maximum.
    pub max_variance: f64,
}

/// Exact functional laws of the standard Brownian bridge: the path integral
/// is `N(0, 1/12)`; the maximum has density `4x exp(-2x^2)` on `x > 0`.
pub fn bridge_laws() -> BridgeLaws {
    BridgeLaws {
        integral_variance: 1.0 / 12.0,
        max_mean: (std::f64::consts::PI / 8.0).sqrt(),
        max_variance: (4.0 - std::f64::consts::PI) / 8.0,
    }
}

/// Density of the Brownian-bridge maximum; zero for `x < 0`.
pub fn bridge_max_density(x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else {
        4.0 * x * (-2.0 * x * x).exp()
    }
}

/// Mean, standard deviation and batch-based Monte Carlo standard error of
/// the mean.
#[derive(Clone, Copy, Debug)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
    pub n: usize,
}

/// Number of batches used for Monte Carlo standard errors.
pub const SE_BATCHES: usize = 20;

/// Summarise replication values; the standard error of the mean comes from
/// `SE_BATCHES` batch means, which stays honest for heavy-tailed statistics
/// such as extremes.
pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len();
    assert!(n > 1, "need at least two replications");
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    Summary { mean, sd: var.sqrt(), se: batch_se(values, SE_BATCHES), n }
}

fn batch_means(values: &[f64], batches: usize) -> Vec<f64> {
    let n = values.len();
    let b = batches.min(n).max(1);
    (0..b)
        .map(|k| {
            let lo = k * n / b;
            let hi = ((k + 1) * n / b).max(lo + 1);
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Batch-means standard error of the mean.
pub fn batch_se(values: &[f64], batches: usize) -> f64 {
    let means = batch_means(values, batches);
    let b = means.len();
    if b < 2 {
        return f64::NAN;
    }
    let grand = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (b - 1) as f64;
    (var / b as f64).sqrt()
}

/// Sample variance plus a batch-based standard error for it: the variance is
/// estimated within each batch and the batch estimates are averaged.
pub fn variance_with_se(values: &[f64], batches: usize) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let b = batches.min(n / 2).max(2);
    let batch_vars: Vec<f64> = (0..b)
        .map(|k| {
            let lo = k * n / b;
            let hi = ((k + 1) * n / b).max(lo + 2);
            let chunk = &values[lo..hi.min(n)];
            let m = chunk.iter().sum::<f64>() / chunk.len() as f64;
            chunk.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (chunk.len() - 1) as f64
        })
        .collect();
    let grand = batch_vars.iter().sum::<f64>() / b as f64;
    let se = (batch_vars.iter().map(|v| (v - grand) * (v - grand)).sum::<f64>()
        / ((b - 1) as f64 * b as f64))
        .sqrt();
    (var, se)
}

/// Per-level Monte Carlo means of the path extremes under grid refinement.
#[derive(Clone, Debug)]
pub struct DivergenceLevel {
    pub level: usize,
    pub grid_size: usize,
    pub mean_min: Summary,
    pub mean_max: Summary,
}

/// Refine one path per replication through the nested levels of `plan`,
/// reusing values on shared points, and summarise the extremes per level.
/// The reference vector is redrawn each replication from
/// `stream.child(rep).child(0)`; targets use `child(rep).child(1)`.
pub fn divergence_probe(
    model: &FieldModel,
    plan: &FieldPlan,
    replications: usize,
    stream: StreamId,
) -> Vec<DivergenceLevel> {
    let levels = plan.level_count();
    let per_rep: Vec<Vec<(f64, f64)>> = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let rep_stream = stream.child(rep as u64);
            let z = model.simulate_reference(rep_stream.child(0));
            let path = plan.simulate(&z, rep_stream.child(1));
            (0..levels).map(|l| h3(path.at_level(l))).collect()
        })
        .collect();
    (0..levels)
        .map(|l| {
            let mins: Vec<f64> = per_rep.iter().map(|r| r[l].0).collect();
            let maxs: Vec<f64> = per_rep.iter().map(|r| r[l].1).collect();
            DivergenceLevel {
                level: l,
                grid_size: plan.level_end(l),
                mean_min: summarize(&mins),
                mean_max: summarize(&maxs),
            }
        })
        .collect()
}

/// Conditional mean vector of the grid average given a reference vector:
/// `sum_i (offset_i + a_i . z_N(i)) / n`.
pub fn conditional_mean_of_average(conds: &TargetConditionals, z_ref: &DVector<f64>) -> f64 {
    conds.means(z_ref).sum() / conds.len() as f64
}
