//! Profile maximum likelihood for the process mean and variance with the
//! correlation parameters held fixed.
//!
//! Both constructions expose the same interface: products with the inverse
//! of the unit-variance marginal correlation matrix and its log-determinant.
//! The sequential-neighbour factorisation applies its sparse precision
//! directly; the piecewise construction uses the low-rank identity
//! `Sigma = D + (A L)(A L)^T` with `D` block diagonal, `A` the sparse
//! cell-to-reference coefficients and `L` the innovation factor of the
//! reference covariance, so no dense `n x n` matrix is ever formed.

use crate::covariance::cholesky_with_jitter;
use crate::error::{Error, Result};
use crate::geometry::Location;
use crate::pcgp::{BlockConditional, PcgpModel};
use crate::sparse::{ReferenceSet, SparseFactor};
use nalgebra::{DMatrix, DVector};

const LN_2PI: f64 = 1.8378770664093453;

/// Floor applied to degenerate variance estimates.
pub const SIGMA2_FLOOR: f64 = 1e-12;

/// Profile maximum likelihood estimate.
#[derive(Clone, Debug)]
pub struct MleResult {
    pub mu: f64,
    pub sigma2: f64,
    pub log_likelihood: f64,
    pub model: String,
    pub n: usize,
    /// Set when the variance estimate hit [`SIGMA2_FLOOR`].
    pub degenerate: bool,
}

/// Unit-variance marginal correlation structure of a Gaussian model:
/// everything profile likelihood needs.
pub trait MarginalCorrelation: Sync {
    fn len(&self) -> usize;
    /// `Omega^{-1} v` at unit variance.
    fn solve(&self, v: &DVector<f64>) -> DVector<f64>;
    /// `log det Omega` at unit variance.
    fn log_det(&self) -> f64;
}

/// Sequential-neighbour marginal over data observed exactly at the
/// reference set; the precision is `(I-B)^T F^{-1} (I-B)` applied in
/// `O(n m)` per product.
pub struct NngpCorrelation {
    factor: SparseFactor,
}

impl NngpCorrelation {
    /// Build the unit-scale factorisation for the given kernel.
    pub fn build(model: &crate::covariance::CovarianceModel, refset: &ReferenceSet) -> Result<Self> {
        let factor = SparseFactor::build(&model.unit_scale(), refset)?;
        Ok(NngpCorrelation { factor })
    }

    pub fn factor(&self) -> &SparseFactor {
        &self.factor
    }
}

impl MarginalCorrelation for NngpCorrelation {
    fn len(&self) -> usize {
        self.factor.len()
    }

    fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        let nodes = self.factor.nodes();
        let n = nodes.len();
        // w = F^{-1} (I - B) v
        let mut w = Vec::with_capacity(n);
        for (i, node) in nodes.iter().enumerate() {
            let mut u = v[i];
            for (a, &k) in node.coefficients.iter().zip(&node.neighbors) {
                u -= a * v[k];
            }
            w.push(u / (node.sd * node.sd));
        }
        // out = (I - B)^T w
        let mut out = w.clone();
        for (i, node) in nodes.iter().enumerate() {
            for (a, &k) in node.coefficients.iter().zip(&node.neighbors) {
                out[k] -= a * w[i];
            }
        }
        DVector::from_vec(out)
    }

    fn log_det(&self) -> f64 {
        self.factor.nodes().iter().map(|n| 2.0 * n.sd.ln()).sum()
    }
}

/// Piecewise marginal over arbitrary targets: `Omega = D + (A L)(A L)^T`,
/// solved through the rank-`r` core `I + L^T A^T D^{-1} A L`, whose
/// eigenvalues are at least one.
pub struct PcgpCorrelation {
    blocks: Vec<BlockConditional>,
    n: usize,
    r: usize,
    /// Innovation factor `L` of the unit-scale reference covariance.
    innovation: DMatrix<f64>,
    /// Lower Cholesky factor of `I + L^T A^T D^{-1} A L`.
    core_chol: DMatrix<f64>,
    log_det: f64,
}

impl PcgpCorrelation {
    /// Build the unit-scale structure of `model` over the given targets.
    pub fn build(model: &PcgpModel, targets: &[Location]) -> Result<Self> {
        let unit = PcgpModel::new(
            model.model().unit_scale(),
            model.reference_set().clone(),
            SparseFactor::build(&model.model().unit_scale(), model.reference_set())?,
            model.partition().clone(),
            model.m_region(),
        )?
        .with_cell_cap(usize::MAX);
        let blocks = unit.block_conditionals(targets)?;
        let n = targets.len();
        let r = model.reference_set().len();
        let innovation = unit.factor().innovation_factor()?;

        // G = A^T D^{-1} A, assembled block by block over reference columns
        let mut g = DMatrix::<f64>::zeros(r, r);
        let mut log_det_d = 0.0;
        for b in &blocks {
            let l = &b.cond.chol;
            for i in 0..l.nrows() {
                log_det_d += 2.0 * l[(i, i)].ln();
            }
            let a = &b.cond.coefficients;
            let y = l
                .solve_lower_triangular(a)
                .ok_or_else(|| Error::NotPositiveDefinite { context: "block factor".into() })?;
            let w = l
                .transpose()
                .solve_upper_triangular(&y)
                .ok_or_else(|| Error::NotPositiveDefinite { context: "block factor".into() })?;
            let gk = a.transpose() * w;
            for (p, &kp) in b.neighbor_refs.iter().enumerate() {
                for (q, &kq) in b.neighbor_refs.iter().enumerate() {
                    g[(kp, kq)] += gk[(p, q)];
                }
            }
        }
        let mut core = innovation.transpose() * (&g * &innovation);
        for i in 0..r {
            core[(i, i)] += 1.0;
            for j in 0..i {
                let v = 0.5 * (core[(i, j)] + core[(j, i)]);
                core[(i, j)] = v;
                core[(j, i)] = v;
            }
        }
        let core_chol = cholesky_with_jitter(&core, 1.0, "low-rank core")?;
        let log_det_core: f64 = (0..r).map(|i| 2.0 * core_chol[(i, i)].ln()).sum();
        Ok(PcgpCorrelation {
            blocks,
            n,
            r,
            innovation,
            core_chol,
            log_det: log_det_d + log_det_core,
        })
    }

    /// `D^{-1} v` through the per-block factors.
    fn block_solve(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for b in &self.blocks {
            let sub = DVector::from_iterator(b.members.len(), b.members.iter().map(|&g| v[g]));
            let y = b.cond.chol.solve_lower_triangular(&sub).expect("factored");
            let x = b
                .cond
                .chol
                .transpose()
                .solve_upper_triangular(&y)
                .expect("factored");
            for (p, &g) in b.members.iter().enumerate() {
                out[g] = x[p];
            }
        }
        out
    }

    /// `A^T v` over the sparse reference columns.
    fn coeffs_t_mul(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.r);
        for b in &self.blocks {
            let a = &b.cond.coefficients;
            for (p, &g) in b.members.iter().enumerate() {
                let vp = v[g];
                for (q, &k) in b.neighbor_refs.iter().enumerate() {
                    out[k] += a[(p, q)] * vp;
                }
            }
        }
        out
    }

    /// `A v` over the sparse reference columns.
    fn coeffs_mul(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for b in &self.blocks {
            let a = &b.cond.coefficients;
            for (p, &g) in b.members.iter().enumerate() {
                let mut acc = 0.0;
                for (q, &k) in b.neighbor_refs.iter().enumerate() {
                    acc += a[(p, q)] * v[k];
                }
                out[g] = acc;
            }
        }
        out
    }
}

impl MarginalCorrelation for PcgpCorrelation {
    fn len(&self) -> usize {
        self.n
    }

    fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        // Omega^{-1} v = D^{-1} v - D^{-1} A L (I+V)^{-1} L^T A^T D^{-1} v
        let dv = self.block_solve(v);
        let t = self.innovation.transpose() * self.coeffs_t_mul(&dv);
        let y = self.core_chol.solve_lower_triangular(&t).expect("core factored");
        let s = self
            .core_chol
            .transpose()
            .solve_upper_triangular(&y)
            .expect("core factored");
        let u = self.coeffs_mul(&(&self.innovation * s));
        &dv - self.block_solve(&u)
    }

    fn log_det(&self) -> f64 {
        self.log_det
    }
}

/// Dense correlation structure; test oracle and small-instance fallback.
pub struct DenseCorrelation {
    chol: DMatrix<f64>,
    log_det: f64,
}

impl DenseCorrelation {
    pub fn new(correlation: &DMatrix<f64>) -> Result<Self> {
        let chol = cholesky_with_jitter(correlation, 1.0, "dense correlation")?;
        let log_det = (0..chol.nrows()).map(|i| 2.0 * chol[(i, i)].ln()).sum();
        Ok(DenseCorrelation { chol, log_det })
    }
}

impl MarginalCorrelation for DenseCorrelation {
    fn len(&self) -> usize {
        self.chol.nrows()
    }

    fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        let y = self.chol.solve_lower_triangular(v).expect("factored");
        self.chol.transpose().solve_upper_triangular(&y).expect("factored")
    }

    fn log_det(&self) -> f64 {
        self.log_det
    }
}

/// The three quadratic forms and the log-determinant that the profile
/// likelihood needs; computing them once makes every likelihood evaluation
/// O(1).
#[derive(Clone, Copy, Debug)]
pub struct GlsSummary {
    pub n: usize,
    /// `1^T Omega^{-1} 1`
    pub s11: f64,
    /// `1^T Omega^{-1} y`
    pub sy1: f64,
    /// `y^T Omega^{-1} y`
    pub syy: f64,
    pub log_det: f64,
}

impl GlsSummary {
    pub fn new(corr: &dyn MarginalCorrelation, y: &DVector<f64>) -> Self {
        let n = corr.len();
        assert_eq!(y.len(), n, "data length mismatch");
        let ones = DVector::from_element(n, 1.0);
        let w1 = corr.solve(&ones);
        let wy = corr.solve(y);
        GlsSummary {
            n,
            s11: ones.dot(&w1),
            sy1: y.dot(&w1),
            syy: y.dot(&wy),
            log_det: corr.log_det(),
        }
    }

    /// Log-likelihood at arbitrary `(mu, sigma2)`.
    pub fn log_likelihood(&self, mu: f64, sigma2: f64) -> f64 {
        let quad = self.syy - 2.0 * mu * self.sy1 + mu * mu * self.s11;
        -0.5 * self.n as f64 * (LN_2PI + sigma2.ln()) - 0.5 * self.log_det
            - 0.5 * quad / sigma2
    }

    /// Closed-form generalized-least-squares maximiser of the likelihood.
    pub fn mle(&self, model: &str) -> MleResult {
        let mu = self.sy1 / self.s11;
        let quad = self.syy - self.sy1 * self.sy1 / self.s11;
        let raw = quad / self.n as f64;
        let degenerate = !(raw > SIGMA2_FLOOR);
        let sigma2 = raw.max(SIGMA2_FLOOR);
        MleResult {
            mu,
            sigma2,
            log_likelihood: self.log_likelihood(mu, sigma2),
            model: model.into(),
            n: self.n,
            degenerate,
        }
    }

    /// Exact sampling variance of the mean estimate at the given variance.
    pub fn mu_variance(&self, sigma2: f64) -> f64 {
        sigma2 / self.s11
    }
}

/// Asymptotic standard error of the variance estimate.
pub fn sigma2_standard_error(sigma2: f64, n: usize) -> f64 {
    sigma2 * (2.0 / n as f64).sqrt()
}

/// Derivative-free maximiser over `(mu, ln sigma2)`; cross-checks the
/// closed-form estimate. Converges when the simplex diameter falls below
/// `1e-8` in scaled coordinates.
pub fn fit_simplex(summary: &GlsSummary, init_mu: f64, init_sigma2: f64) -> Result<(f64, f64)> {
    if !(init_sigma2 > 0.0) {
        return Err(Error::InvalidArgument("initial variance must be positive".into()));
    }
    let f = |p: [f64; 2]| summary.log_likelihood(p[0], p[1].exp());
    let (p, _) = maximize_simplex(f, [init_mu, init_sigma2.ln()], 500)?;
    Ok((p[0], p[1].exp()))
}

/// Nelder-Mead maximisation in two dimensions.
pub fn maximize_simplex<F: Fn([f64; 2]) -> f64>(
    f: F,
    init: [f64; 2],
    max_iter: usize,
) -> Result<([f64; 2], f64)> {
    let step = |i: usize| {
        let s = 0.1 * (1.0 + init[i].abs());
        s.max(1e-3)
    };
    let mut simplex: Vec<([f64; 2], f64)> = Vec::with_capacity(3);
    simplex.push((init, f(init)));
    for i in 0..2 {
        let mut p = init;
        p[i] += step(i);
        simplex.push((p, f(p)));
    }
    for iter in 0..max_iter {
        // descending by value: best first
        simplex.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let (best, worst) = (simplex[0], simplex[2]);
        let scale = 1.0 + best.0[0].abs().max(best.0[1].abs());
        let diameter = (0..2)
            .map(|i| {
                simplex
                    .iter()
                    .map(|(p, _)| p[i])
                    .fold(f64::NEG_INFINITY, f64::max)
                    - simplex.iter().map(|(p, _)| p[i]).fold(f64::INFINITY, f64::min)
            })
            .fold(0.0f64, f64::max);
        if diameter < 1e-8 * scale {
            let _ = iter;
            return Ok(best);
        }
        let centroid = [
            0.5 * (simplex[0].0[0] + simplex[1].0[0]),
            0.5 * (simplex[0].0[1] + simplex[1].0[1]),
        ];
        let reflect = [
            centroid[0] + (centroid[0] - worst.0[0]),
            centroid[1] + (centroid[1] - worst.0[1]),
        ];
        let fr = f(reflect);
        if fr > best.1 {
            let expand = [
                centroid[0] + 2.0 * (centroid[0] - worst.0[0]),
                centroid[1] + 2.0 * (centroid[1] - worst.0[1]),
            ];
            let fe = f(expand);
            simplex[2] = if fe > fr { (expand, fe) } else { (reflect, fr) };
        } else if fr > simplex[1].1 {
            simplex[2] = (reflect, fr);
        } else {
            let contract = [
                centroid[0] + 0.5 * (worst.0[0] - centroid[0]),
                centroid[1] + 0.5 * (worst.0[1] - centroid[1]),
            ];
            let fc = f(contract);
            if fc > worst.1 {
                simplex[2] = (contract, fc);
            } else {
                // shrink toward the best point
                for k in 1..3 {
                    let p = [
                        best.0[0] + 0.5 * (simplex[k].0[0] - best.0[0]),
                        best.0[1] + 0.5 * (simplex[k].0[1] - best.0[1]),
                    ];
                    simplex[k] = (p, f(p));
                }
            }
        }
    }
    Err(Error::NoConvergence(max_iter))
}
