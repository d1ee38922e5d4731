//! Covariance kernels, dense Gaussian linear algebra and exact conditional
//! Gaussian computation.
//!
//! Every process construction in the crate reduces to repeated calls of
//! [`CovarianceModel::condition`]: the coefficients `A = C_TN C_NN^-1`, the
//! mean offset and the conditional covariance of a target set given a
//! conditioning set under the parent process. Conditioning is done through
//! one Cholesky factor of `C_NN` plus triangular solves; no explicit
//! inverses.

use crate::error::{Error, Result};
use crate::geometry::{distance, Location};
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

const LN_2PI: f64 = 1.8378770664093453;

/// Relative diagonal jitter applied once if a Cholesky factorisation fails.
pub const JITTER_REL: f64 = 1e-10;

/// Relative floor for conditional standard deviations.
pub const SD_FLOOR_REL: f64 = 1e-12;

/// Correlation family of the parent process.
#[derive(Clone, Debug, PartialEq)]
pub enum Kernel {
    /// `rho(d) = exp{-(d/phi)^nu}` with `nu` in (0, 2]. `nu = 2` (the
    /// Gaussian kernel) is accepted but severely ill-conditioned on dense
    /// point sets.
    PoweredExponential { phi: f64, nu: f64 },
    /// Brownian-bridge kernel `min(s,t) - s*t`, valid on one-dimensional
    /// domains inside [0, 1]. The process is pinned to zero at both ends.
    BrownianBridge,
}

/// Mean, variance and correlation family of the parent Gaussian process.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceModel {
    pub mean: f64,
    pub variance: f64,
    pub kernel: Kernel,
}

impl CovarianceModel {
    pub fn new(mean: f64, variance: f64, kernel: Kernel) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::InvalidArgument(format!("variance {variance}")));
        }
        if let Kernel::PoweredExponential { phi, nu } = kernel {
            if !(phi > 0.0 && phi.is_finite()) {
                return Err(Error::InvalidArgument(format!("range phi {phi}")));
            }
            if !(nu > 0.0 && nu <= 2.0) {
                return Err(Error::InvalidArgument(format!("smoothness nu {nu} not in (0,2]")));
            }
        }
        Ok(CovarianceModel { mean, variance, kernel })
    }

    /// Powered-exponential model parameterised by `phi^nu` (configs may give
    /// the range either way).
    pub fn powered_exponential_phi_pow(
        mean: f64,
        variance: f64,
        phi_pow_nu: f64,
        nu: f64,
    ) -> Result<Self> {
        if !(phi_pow_nu > 0.0) {
            return Err(Error::InvalidArgument(format!("phi^nu {phi_pow_nu}")));
        }
        Self::new(mean, variance, Kernel::PoweredExponential { phi: phi_pow_nu.powf(1.0 / nu), nu })
    }

    /// Standard Brownian bridge on [0, 1].
    pub fn brownian_bridge() -> Self {
        CovarianceModel { mean: 0.0, variance: 1.0, kernel: Kernel::BrownianBridge }
    }

    /// Same correlation structure with zero mean and unit variance.
    pub fn unit_scale(&self) -> Self {
        CovarianceModel { mean: 0.0, variance: 1.0, kernel: self.kernel.clone() }
    }

    fn check_location(&self, u: &Location) -> Result<()> {
        if let Kernel::BrownianBridge = self.kernel {
            if u.dim() != 1 {
                return Err(Error::DimensionMismatch { expected: 1, got: u.dim() });
            }
            let t = u.coords()[0];
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::InvalidArgument(format!(
                    "Brownian-bridge coordinate {t} outside [0,1]"
                )));
            }
        }
        Ok(())
    }

    /// Covariance between two locations.
    pub fn covariance(&self, u: &Location, v: &Location) -> Result<f64> {
        self.check_location(u)?;
        self.check_location(v)?;
        Ok(match &self.kernel {
            Kernel::PoweredExponential { phi, nu } => {
                let d = distance(u, v);
                self.variance * (-(d / phi).powf(*nu)).exp()
            }
            Kernel::BrownianBridge => {
                let s = u.coords()[0];
                let t = v.coords()[0];
                self.variance * (s.min(t) - s * t)
            }
        })
    }

    /// Dense covariance matrix over pairwise-distinct locations.
    pub fn matrix(&self, locs: &[Location]) -> Result<DMatrix<f64>> {
        check_distinct(locs, "covariance matrix")?;
        let n = locs.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let c = self.covariance(&locs[i], &locs[j])?;
                m[(i, j)] = c;
                m[(j, i)] = c;
            }
        }
        Ok(m)
    }

    /// Exact conditional law of `targets` given values at `cond_locs` under
    /// the parent process. With an empty conditioning set this is the prior.
    pub fn condition(&self, targets: &[Location], cond_locs: &[Location]) -> Result<Conditional> {
        check_distinct(targets, "conditional targets")?;
        check_disjoint(targets, cond_locs)?;
        let t = targets.len();
        let n = cond_locs.len();
        if n == 0 {
            let cov = self.matrix(targets)?;
            let chol = cholesky_with_jitter(&cov, self.variance, "prior covariance")?;
            return Ok(Conditional {
                coefficients: DMatrix::zeros(t, 0),
                offset: DVector::from_element(t, self.mean),
                covariance: cov,
                chol,
            });
        }
        let c_nn = self.matrix(cond_locs)?;
        let mut c_nt = DMatrix::zeros(n, t);
        for i in 0..n {
            for j in 0..t {
                c_nt[(i, j)] = self.covariance(&cond_locs[i], &targets[j])?;
            }
        }
        let chol_nn = cholesky_factor(&c_nn, self.variance, &describe_set(cond_locs))?;
        // A^T = C_NN^-1 C_NT via two triangular solves
        let at = chol_nn.solve(&c_nt);
        let coefficients = at.transpose();
        let mut covariance = self.matrix(targets)?;
        covariance -= &coefficients * &c_nt;
        symmetrize(&mut covariance);
        let chol = cholesky_with_jitter(&covariance, self.variance, "conditional covariance")?;
        let row_sums = coefficients.column_sum();
        let offset = DVector::from_fn(t, |i, _| self.mean * (1.0 - row_sums[i]));
        Ok(Conditional { coefficients, offset, covariance, chol })
    }

    /// Scalar version of [`condition`](Self::condition) for a single target;
    /// avoids matrix churn on hot paths. Returns coefficients, mean offset
    /// and conditional standard deviation (floored at `SD_FLOOR_REL * sigma`).
    pub fn condition_scalar(&self, target: &Location, cond_locs: &[Location]) -> Result<ScalarConditional> {
        let floor = SD_FLOOR_REL * self.variance.sqrt();
        let n = cond_locs.len();
        if n == 0 {
            // marginal law; the variance is location-dependent for
            // non-stationary kernels
            return Ok(ScalarConditional {
                coefficients: Vec::new(),
                offset: self.mean,
                sd: self.covariance(target, target)?.sqrt().max(floor),
            });
        }
        let c_nn = self.matrix(cond_locs)?;
        let mut c_nt = DVector::zeros(n);
        for i in 0..n {
            c_nt[i] = self.covariance(&cond_locs[i], target)?;
            if cond_locs[i] == *target {
                return Err(Error::DuplicateLocations("target equals conditioner".into()));
            }
        }
        let chol_nn = cholesky_factor(&c_nn, self.variance, &describe_set(cond_locs))?;
        let a = chol_nn.solve(&c_nt);
        let var = self.covariance(target, target)? - a.dot(&c_nt);
        let sd = var.max(0.0).sqrt().max(floor);
        let offset = self.mean * (1.0 - a.sum());
        Ok(ScalarConditional { coefficients: a.as_slice().to_vec(), offset, sd })
    }
}

/// Conditional Gaussian law of a target set given a conditioning set.
///
/// Mean given conditioner values `z` is `offset + coefficients * z`; the
/// conditional covariance and its lower Cholesky factor are stored for
/// density evaluation and simulation.
#[derive(Clone, Debug)]
pub struct Conditional {
    pub coefficients: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub chol: DMatrix<f64>,
}

impl Conditional {
    pub fn mean(&self, cond_values: &DVector<f64>) -> DVector<f64> {
        &self.offset + &self.coefficients * cond_values
    }
}

/// Single-target conditional: coefficients over the conditioning set, mean
/// offset and conditional standard deviation.
#[derive(Clone, Debug)]
pub struct ScalarConditional {
    pub coefficients: Vec<f64>,
    pub offset: f64,
    pub sd: f64,
}

impl ScalarConditional {
    #[inline]
    pub fn mean_from(&self, values: impl Fn(usize) -> f64) -> f64 {
        let mut m = self.offset;
        for (k, a) in self.coefficients.iter().enumerate() {
            m += a * values(k);
        }
        m
    }
}

pub(crate) fn check_distinct(locs: &[Location], context: &str) -> Result<()> {
    let mut keys: Vec<Vec<u64>> = locs.iter().map(|l| l.bit_key()).collect();
    keys.sort_unstable();
    if keys.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::DuplicateLocations(context.into()));
    }
    Ok(())
}

fn check_disjoint(targets: &[Location], cond: &[Location]) -> Result<()> {
    use std::collections::HashSet;
    let set: HashSet<Vec<u64>> = cond.iter().map(|l| l.bit_key()).collect();
    for t in targets {
        if set.contains(&t.bit_key()) {
            return Err(Error::DuplicateLocations(
                "target also appears in the conditioning set".into(),
            ));
        }
    }
    Ok(())
}

// names a conditioning set in singularity errors
fn describe_set(locs: &[Location]) -> String {
    match locs.first() {
        None => "empty conditioning set".to_string(),
        Some(first) => format!(
            "conditioning set of {} locations starting at {:?}",
            locs.len(),
            first.coords()
        ),
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Cholesky of a covariance matrix with the one-shot jitter policy: on
/// failure add `JITTER_REL * sigma2` to the diagonal once, then give up.
fn cholesky_factor(m: &DMatrix<f64>, sigma2: f64, context: &str) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let mut jittered = m.clone();
    for i in 0..m.nrows() {
        jittered[(i, i)] += JITTER_REL * sigma2;
    }
    Cholesky::new(jittered).ok_or_else(|| Error::NotPositiveDefinite { context: context.into() })
}

/// Lower-triangular factor `L` with `L L^T = m`, applying the jitter policy.
pub fn cholesky_with_jitter(m: &DMatrix<f64>, sigma2: f64, context: &str) -> Result<DMatrix<f64>> {
    Ok(cholesky_factor(m, sigma2, context)?.unpack())
}

/// Exact multivariate normal log-density through a lower-triangular factor.
pub fn mvn_log_density(mean: &DVector<f64>, chol_lower: &DMatrix<f64>, x: &DVector<f64>) -> Result<f64> {
    let n = mean.len();
    assert_eq!(chol_lower.nrows(), n);
    assert_eq!(x.len(), n);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite observation".into()));
    }
    let resid = x - mean;
    let w = chol_lower
        .solve_lower_triangular(&resid)
        .ok_or_else(|| Error::NotPositiveDefinite { context: "singular factor".into() })?;
    let log_det_half: f64 = (0..n).map(|i| chol_lower[(i, i)].ln()).sum();
    Ok(-0.5 * n as f64 * LN_2PI - log_det_half - 0.5 * w.norm_squared())
}

/// Draw `mean + L w` with `w` standard normal from `rng`.
pub fn mvn_sample<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    chol_lower: &DMatrix<f64>,
    rng: &mut R,
) -> DVector<f64> {
    let n = mean.len();
    let w = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    mean + chol_lower * w
}

/// Univariate normal log-density.
#[inline]
pub fn normal_log_density(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * LN_2PI - sd.ln() - 0.5 * z * z
}

/// Standard normal cumulative distribution function.
#[inline]
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::uniform_locations;
    use crate::rng::StreamId;
    use crate::Domain;
    use approx::assert_abs_diff_eq;

    fn pe_model(mean: f64, variance: f64) -> CovarianceModel {
        CovarianceModel::powered_exponential_phi_pow(mean, variance, 4.0, 1.9).unwrap()
    }

    #[test]
    fn kernel_values_match_formulas() {
        let m = pe_model(0.0, 2.5);
        let u = Location::d2(1.0, 1.0);
        assert_abs_diff_eq!(m.covariance(&u, &u).unwrap(), 2.5, epsilon = 1e-14);
        // d = 4^{1/1.9} makes (d/phi)^nu = 1
        let d = 4f64.powf(1.0 / 1.9);
        let v = Location::d2(1.0 + d, 1.0);
        assert_abs_diff_eq!(m.covariance(&u, &v).unwrap(), 2.5 * (-1.0f64).exp(), epsilon = 1e-12);

        let bb = CovarianceModel::brownian_bridge();
        let half = Location::d1(0.5);
        assert_abs_diff_eq!(bb.covariance(&half, &half).unwrap(), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn brownian_bridge_domain_checks() {
        let bb = CovarianceModel::brownian_bridge();
        assert!(bb.covariance(&Location::d2(0.5, 0.5), &Location::d1(0.5)).is_err());
        assert!(bb.covariance(&Location::d1(1.5), &Location::d1(0.5)).is_err());
    }

    #[test]
    fn correlation_is_strictly_decreasing() {
        let m = pe_model(0.0, 1.0);
        let o = Location::d1(0.0);
        let mut last = f64::INFINITY;
        for k in 1..20 {
            let c = m.covariance(&o, &Location::d1(0.3 * k as f64)).unwrap();
            assert!(c < last);
            last = c;
        }
    }

    #[test]
    fn matrix_is_symmetric_and_factorable() {
        let m = pe_model(0.0, 1.3);
        let locs = uniform_locations(&Domain::square(10.0), 5, StreamId::root(3)).unwrap();
        let c = m.matrix(&locs).unwrap();
        assert_eq!(c, c.transpose());
        assert!(Cholesky::new(c.clone()).is_some());
        assert_eq!(c[(0, 0)], 1.3);

        let single = m.matrix(&locs[..1]).unwrap();
        assert_eq!(single.nrows(), 1);
        assert_eq!(single[(0, 0)], 1.3);
    }

    #[test]
    fn duplicate_locations_rejected() {
        let m = pe_model(0.0, 1.0);
        let locs = vec![Location::d1(1.0), Location::d1(1.0)];
        assert!(matches!(m.matrix(&locs), Err(Error::DuplicateLocations(_))));
    }

    #[test]
    fn empty_conditioning_set_returns_prior() {
        let m = pe_model(1.7, 1.0);
        let targets = vec![Location::d1(0.0), Location::d1(2.0)];
        let c = m.condition(&targets, &[]).unwrap();
        assert_eq!(c.offset, DVector::from_element(2, 1.7));
        assert_eq!(c.covariance, m.matrix(&targets).unwrap());
    }

    #[test]
    fn single_conditioner_closed_form() {
        // unit variance, mu = 0, rho(d) = 0.5, conditioner value 2
        let m = CovarianceModel::new(
            0.0,
            1.0,
            Kernel::PoweredExponential { phi: 1.0, nu: 1.0 },
        )
        .unwrap();
        let d = std::f64::consts::LN_2; // exp(-d) = 0.5
        let c = m
            .condition(&[Location::d1(0.0)], &[Location::d1(d)])
            .unwrap();
        let mean = c.mean(&DVector::from_element(1, 2.0));
        assert_abs_diff_eq!(mean[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.covariance[(0, 0)], 0.75, epsilon = 1e-12);
    }

    #[test]
    fn bridge_conditional_matches_markov_formula() {
        // target 0.5 given Z_{0.25} = 0, Z_{0.75} = 0: N(0, (t-s1)(s2-t)/(s2-s1))
        let bb = CovarianceModel::brownian_bridge();
        let c = bb
            .condition(&[Location::d1(0.5)], &[Location::d1(0.25), Location::d1(0.75)])
            .unwrap();
        let mean = c.mean(&DVector::zeros(2));
        assert_abs_diff_eq!(mean[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.covariance[(0, 0)], 0.125, epsilon = 1e-12);
    }

    #[test]
    fn conditioning_consistency_on_sub_targets() {
        let m = pe_model(0.4, 1.2);
        let s = StreamId::root(8);
        let dom = Domain::square(10.0);
        let targets = uniform_locations(&dom, 5, s.child(0)).unwrap();
        let conds = uniform_locations(&dom, 7, s.child(1)).unwrap();
        let full = m.condition(&targets, &conds).unwrap();
        let sub = m.condition(&targets[..2], &conds).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(full.offset[i], sub.offset[i], epsilon = 1e-10);
            for j in 0..2 {
                assert_abs_diff_eq!(
                    full.covariance[(i, j)],
                    sub.covariance[(i, j)],
                    epsilon = 1e-10
                );
            }
            for k in 0..conds.len() {
                assert_abs_diff_eq!(
                    full.coefficients[(i, k)],
                    sub.coefficients[(i, k)],
                    epsilon = 1e-10
                );
            }
        }
    }

    #[test]
    fn law_of_total_variance() {
        let m = pe_model(0.0, 1.0);
        let s = StreamId::root(21);
        let dom = Domain::square(10.0);
        for trial in 0..5 {
            let targets = uniform_locations(&dom, 3, s.child(2 * trial)).unwrap();
            let conds = uniform_locations(&dom, 4, s.child(2 * trial + 1)).unwrap();
            let c = m.condition(&targets, &conds).unwrap();
            let prior = m.matrix(&targets).unwrap();
            let c_nn = m.matrix(&conds).unwrap();
            let recon = &c.coefficients * c_nn * c.coefficients.transpose() + &c.covariance;
            for i in 0..3 {
                for j in 0..3 {
                    assert_abs_diff_eq!(prior[(i, j)], recon[(i, j)], epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn variance_scaling_leaves_coefficients_fixed() {
        let base = pe_model(0.3, 1.0);
        let scaled = pe_model(0.3, 3.7);
        let s = StreamId::root(5);
        let dom = Domain::square(10.0);
        let targets = uniform_locations(&dom, 3, s.child(0)).unwrap();
        let conds = uniform_locations(&dom, 5, s.child(1)).unwrap();
        let c1 = base.condition(&targets, &conds).unwrap();
        let c2 = scaled.condition(&targets, &conds).unwrap();
        for i in 0..3 {
            for k in 0..5 {
                assert_abs_diff_eq!(
                    c1.coefficients[(i, k)],
                    c2.coefficients[(i, k)],
                    epsilon = 1e-10
                );
            }
            for j in 0..3 {
                assert_abs_diff_eq!(
                    3.7 * c1.covariance[(i, j)],
                    c2.covariance[(i, j)],
                    epsilon = 1e-10
                );
            }
        }
        let m1 = base.matrix(&targets).unwrap() * 3.7;
        let m2 = scaled.matrix(&targets).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(m1[(i, j)], m2[(i, j)], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn log_density_standard_cases() {
        let d1 = mvn_log_density(
            &DVector::zeros(1),
            &DMatrix::identity(1, 1),
            &DVector::zeros(1),
        )
        .unwrap();
        assert_abs_diff_eq!(d1, -0.9189385332046727, epsilon = 1e-12);
        let d2 = mvn_log_density(
            &DVector::zeros(2),
            &DMatrix::identity(2, 2),
            &DVector::zeros(2),
        )
        .unwrap();
        assert_abs_diff_eq!(d2, -LN_2PI, epsilon = 1e-12);
        assert!(mvn_log_density(
            &DVector::zeros(1),
            &DMatrix::identity(1, 1),
            &DVector::from_element(1, f64::NAN)
        )
        .is_err());
    }

    #[test]
    fn log_density_matches_determinant_oracle() {
        // independent evaluation through explicit determinant and inverse
        let m = pe_model(0.2, 1.4);
        let s = StreamId::root(13);
        let dom = Domain::square(10.0);
        let locs = uniform_locations(&dom, 4, s.child(0)).unwrap();
        let cov = m.matrix(&locs).unwrap();
        let mean = DVector::from_element(4, 0.2);
        let x = DVector::from_iterator(4, [0.3, -0.5, 1.1, 0.0]);
        let l = cholesky_with_jitter(&cov, m.variance, "test").unwrap();
        let got = mvn_log_density(&mean, &l, &x).unwrap();

        let det = cov.determinant();
        let inv = cov.try_inverse().unwrap();
        let r = &x - &mean;
        let quad = (r.transpose() * inv * r)[(0, 0)];
        let want = -0.5 * (4.0 * LN_2PI + det.ln() + quad);
        assert_abs_diff_eq!(got, want, epsilon = 1e-10);
    }

    #[test]
    fn sampling_is_deterministic_and_respects_mean() {
        let mean = DVector::from_iterator(2, [1.0, -2.0]);
        let zero = DMatrix::zeros(2, 2);
        let mut rng = StreamId::root(17).rng();
        let x = mvn_sample(&mean, &zero, &mut rng);
        assert_eq!(x, mean);

        let l = DMatrix::identity(2, 2);
        let a = mvn_sample(&mean, &l, &mut StreamId::root(9).rng());
        let b = mvn_sample(&mean, &l, &mut StreamId::root(9).rng());
        assert_eq!(a, b);
    }

    #[test]
    fn sample_covariance_close_to_target() {
        // 1e5 draws of a correlated 2-D Gaussian: entries within 3 MC SEs
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 0.5]);
        let l = cholesky_with_jitter(&cov, 2.0, "test").unwrap();
        let mean = DVector::zeros(2);
        let mut rng = StreamId::root(31).rng();
        let n = 100_000usize;
        let mut acc = [0.0f64; 3];
        for _ in 0..n {
            let x = mvn_sample(&mean, &l, &mut rng);
            acc[0] += x[0] * x[0];
            acc[1] += x[0] * x[1];
            acc[2] += x[1] * x[1];
        }
        let nf = n as f64;
        // SE of a second moment of Gaussians: sqrt((c_ii c_jj + c_ij^2)/n)
        let checks = [
            (acc[0] / nf, 2.0, ((2.0f64 * 2.0 + 4.0) / nf).sqrt()),
            (acc[1] / nf, 0.6, ((2.0f64 * 0.5 + 0.36) / nf).sqrt()),
            (acc[2] / nf, 0.5, ((0.5f64 * 0.5 + 0.25) / nf).sqrt()),
        ];
        for (got, want, se) in checks {
            assert!((got - want).abs() < 3.0 * se, "{got} vs {want} (se {se})");
        }
    }

    #[test]
    fn normal_cdf_reference_values() {
        assert_abs_diff_eq!(normal_cdf(0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(normal_cdf(1.959963984540054), 0.975, epsilon = 1e-12);
        assert_abs_diff_eq!(normal_cdf(-8.0) + normal_cdf(8.0), 1.0, epsilon = 1e-15);
    }
}
