//! Sequential neighbour factorisation of a reference set, and the
//! conditionally independent extension to arbitrary target locations.
//!
//! An ordered reference set with per-node neighbour sets defines the joint
//! density as a product of univariate parent-process conditionals; targets
//! outside the reference set are conditionally independent given the
//! reference values. The nearest-`m` rule gives the NNGP, the radius rule
//! the RNGP, and `Full` recovers the exact parent law on the reference set.

use crate::covariance::{check_distinct, normal_log_density, CovarianceModel, ScalarConditional};
use crate::error::{Error, Result};
use crate::geometry::{Location, NeighborFinder};
use crate::rng::StreamId;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::collections::HashSet;

/// Entry cap for dense implied-covariance oracles.
pub const IMPLIED_COV_ENTRY_CAP: usize = 4_000_000;

/// How each node (or target) selects its conditioning set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NeighborRule {
    /// The `m` nearest predecessors (all predecessors for the first `m`
    /// nodes); for targets, the `m` nearest reference locations.
    NearestM(usize),
    /// All predecessors (reference locations) strictly within the radius.
    Radius(f64),
    /// Every predecessor (the exact sequential factorisation).
    Full,
}

/// How reference locations are ordered before factorisation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrderingRule {
    /// Lexicographic by coordinates (the default).
    SortedCoordinate,
    /// Seeded random permutation, for sensitivity runs.
    Random(u64),
    /// Keep the input order.
    AsGiven,
}

/// Permutation realising an ordering rule: element `k` of the result is the
/// input index placed at position `k`.
pub fn ordering_permutation(locs: &[Location], rule: OrderingRule) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..locs.len()).collect();
    match rule {
        OrderingRule::AsGiven => {}
        OrderingRule::SortedCoordinate => {
            perm.sort_by(|&a, &b| locs[a].coords().partial_cmp(locs[b].coords()).unwrap());
        }
        OrderingRule::Random(seed) => {
            let mut rng = StreamId::root(seed).child(0x0ed3).rng();
            // Fisher-Yates
            for i in (1..perm.len()).rev() {
                let j = rng.random_range(0..=i);
                perm.swap(i, j);
            }
        }
    }
    perm
}

/// Apply an ordering rule, returning the permuted locations.
pub fn order_locations(locs: &[Location], rule: OrderingRule) -> Vec<Location> {
    ordering_permutation(locs, rule)
        .into_iter()
        .map(|i| locs[i].clone())
        .collect()
}

/// Ordered reference locations with their per-node neighbour sets.
#[derive(Clone, Debug)]
pub struct ReferenceSet {
    locs: Vec<Location>,
    rule: NeighborRule,
    neighbors: Vec<Vec<usize>>,
}

impl ReferenceSet {
    /// Build neighbour sets for already-ordered locations. Node `i`
    /// conditions only on nodes `0..i`; ties in the nearest rule break
    /// toward the smaller index.
    pub fn new(ordered: Vec<Location>, rule: NeighborRule) -> Result<Self> {
        if ordered.is_empty() {
            return Err(Error::InvalidArgument("empty reference set".into()));
        }
        check_distinct(&ordered, "reference set")?;
        if let NeighborRule::Radius(radius) = rule {
            if !(radius > 0.0) {
                return Err(Error::InvalidArgument(format!("radius {radius}")));
            }
        }
        let r = ordered.len();
        let mut neighbors = Vec::with_capacity(r);
        neighbors.push(Vec::new());
        // incremental index over predecessors, sized for the full set
        let mut finder = NeighborFinder::sized_for(&ordered, r);
        finder.insert(ordered[0].clone());
        for i in 1..r {
            let set = match rule {
                NeighborRule::Full => (0..i).collect(),
                NeighborRule::NearestM(m) => {
                    if i <= m {
                        (0..i).collect()
                    } else {
                        let mut s = finder.nearest(&ordered[i], m);
                        s.sort_unstable();
                        s
                    }
                }
                NeighborRule::Radius(radius) => finder.within_radius(&ordered[i], radius),
            };
            neighbors.push(set);
            finder.insert(ordered[i].clone());
        }
        Ok(ReferenceSet { locs: ordered, rule, neighbors })
    }

    /// Convenience constructor: order then build.
    pub fn from_unordered(locs: &[Location], ordering: OrderingRule, rule: NeighborRule) -> Result<Self> {
        ReferenceSet::new(order_locations(locs, ordering), rule)
    }

    pub fn len(&self) -> usize {
        self.locs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locs.is_empty()
    }

    pub fn rule(&self) -> NeighborRule {
        self.rule
    }

    pub fn locations(&self) -> &[Location] {
        &self.locs
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    fn gather(&self, idx: &[usize]) -> Vec<Location> {
        idx.iter().map(|&k| self.locs[k].clone()).collect()
    }
}

/// One node of the sequential factorisation.
#[derive(Clone, Debug)]
pub struct NodeConditional {
    pub neighbors: Vec<usize>,
    pub coefficients: Vec<f64>,
    pub offset: f64,
    pub sd: f64,
}

impl NodeConditional {
    #[inline]
    fn mean(&self, z: &[f64]) -> f64 {
        let mut m = self.offset;
        for (a, &k) in self.coefficients.iter().zip(&self.neighbors) {
            m += a * z[k];
        }
        m
    }
}

/// Per-node conditional coefficients and standard deviations of the
/// reference factorisation.
#[derive(Clone, Debug)]
pub struct SparseFactor {
    nodes: Vec<NodeConditional>,
    variance: f64,
}

impl SparseFactor {
    /// Condition every node on its neighbour set under the parent model.
    pub fn build(model: &CovarianceModel, refset: &ReferenceSet) -> Result<Self> {
        let nodes: Vec<NodeConditional> = (0..refset.len())
            .into_par_iter()
            .map(|i| {
                let cond_locs = refset.gather(refset.neighbors(i));
                let sc = model.condition_scalar(&refset.locs[i], &cond_locs)?;
                Ok(NodeConditional {
                    neighbors: refset.neighbors(i).to_vec(),
                    coefficients: sc.coefficients,
                    offset: sc.offset,
                    sd: sc.sd,
                })
            })
            .collect::<Result<_>>()?;
        Ok(SparseFactor { nodes, variance: model.variance })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[NodeConditional] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &NodeConditional {
        &self.nodes[i]
    }

    /// Joint log-density of a full reference vector under the factorisation.
    pub fn log_density(&self, z: &DVector<f64>) -> Result<f64> {
        if z.len() != self.nodes.len() {
            return Err(Error::InvalidArgument("value length != reference size".into()));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite reference values".into()));
        }
        let zs = z.as_slice();
        Ok(self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| normal_log_density(zs[i], n.mean(zs), n.sd))
            .sum())
    }

    /// Ancestral sampling in reference order; one sequential stream.
    pub fn simulate(&self, stream: StreamId) -> DVector<f64> {
        let mut rng = stream.rng();
        let mut z = vec![0.0f64; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            let w: f64 = rng.sample(StandardNormal);
            z[i] = n.mean(&z) + n.sd * w;
        }
        DVector::from_vec(z)
    }

    /// Lower-triangular innovation factor `M = (I - B)^{-1} S` of the
    /// factorisation `Z = B Z + offset + S W`: the implied reference
    /// covariance is `M M^T`. Dense; capped for desk-scale use.
    pub fn innovation_factor(&self) -> Result<DMatrix<f64>> {
        let r = self.nodes.len();
        if r * r > IMPLIED_COV_ENTRY_CAP {
            return Err(Error::SizeCap(format!("innovation factor {r}x{r}")));
        }
        // forward substitution on (I - B) M = S, B strictly lower triangular
        let mut m = DMatrix::<f64>::zeros(r, r);
        for i in 0..r {
            let node = &self.nodes[i];
            for j in 0..=i {
                let mut acc = if i == j { node.sd } else { 0.0 };
                for (a, &k) in node.coefficients.iter().zip(&node.neighbors) {
                    if k >= j {
                        acc += a * m[(k, j)];
                    }
                }
                m[(i, j)] = acc;
            }
        }
        Ok(m)
    }

    /// Exact covariance of the reference vector implied by the
    /// factorisation, `M M^T` with `M` the innovation factor.
    pub fn reference_covariance(&self) -> Result<DMatrix<f64>> {
        let m = self.innovation_factor()?;
        Ok(&m * m.transpose())
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }
}

/// Conditional laws of targets given the reference vector; targets are
/// conditionally independent of each other by construction.
#[derive(Clone, Debug)]
pub struct TargetConditionals {
    targets: Vec<Location>,
    neighbors: Vec<Vec<usize>>,
    conds: Vec<ScalarConditional>,
}

impl TargetConditionals {
    /// Condition each target on the reference subset selected by `rule`.
    /// Targets must not coincide with reference locations.
    pub fn build(
        model: &CovarianceModel,
        refset: &ReferenceSet,
        targets: &[Location],
        rule: NeighborRule,
    ) -> Result<Self> {
        let ref_keys: HashSet<Vec<u64>> = refset.locs.iter().map(|l| l.bit_key()).collect();
        for t in targets {
            if ref_keys.contains(&t.bit_key()) {
                let index = refset
                    .locs
                    .iter()
                    .position(|l| l == t)
                    .expect("key matched");
                return Err(Error::TargetOnReference { index });
            }
        }
        if let NeighborRule::Radius(radius) = rule {
            if !(radius > 0.0) {
                return Err(Error::InvalidArgument(format!("radius {radius}")));
            }
        }
        let finder = NeighborFinder::new(&refset.locs);
        let mut neighbors = Vec::with_capacity(targets.len());
        for t in targets {
            let set = match rule {
                NeighborRule::Full => (0..refset.len()).collect(),
                NeighborRule::NearestM(m) => {
                    let mut s = finder.nearest(t, m);
                    s.sort_unstable();
                    s
                }
                NeighborRule::Radius(radius) => finder.within_radius(t, radius),
            };
            neighbors.push(set);
        }
        let conds: Vec<ScalarConditional> = targets
            .par_iter()
            .zip(neighbors.par_iter())
            .map(|(t, n)| model.condition_scalar(t, &refset.gather(n)))
            .collect::<Result<_>>()?;
        Ok(TargetConditionals { targets: targets.to_vec(), neighbors, conds })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn targets(&self) -> &[Location] {
        &self.targets
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn conditional(&self, i: usize) -> &ScalarConditional {
        &self.conds[i]
    }

    /// Conditional mean of every target given reference values.
    pub fn means(&self, z_ref: &DVector<f64>) -> DVector<f64> {
        let zs = z_ref.as_slice();
        DVector::from_iterator(
            self.len(),
            self.conds.iter().zip(&self.neighbors).map(|(c, n)| {
                c.mean_from(|k| zs[n[k]])
            }),
        )
    }

    /// Analytic conditional variance of the grid average `sum(z)/n` given
    /// the reference values: `sum_i sd_i^2 / n^2`.
    pub fn mean_functional_variance(&self) -> f64 {
        let n = self.len() as f64;
        self.conds.iter().map(|c| c.sd * c.sd).sum::<f64>() / (n * n)
    }
}

/// Independent per-target draws given the reference vector; target `i` uses
/// substream `stream.child(base_index + i)`, so draws do not depend on
/// evaluation order.
pub fn simulate_targets(
    conds: &TargetConditionals,
    z_ref: &DVector<f64>,
    stream: StreamId,
    base_index: u64,
) -> DVector<f64> {
    let zs = z_ref.as_slice();
    let vals: Vec<f64> = conds
        .conds
        .iter()
        .zip(&conds.neighbors)
        .enumerate()
        .map(|(i, (c, n))| {
            let mut rng = stream.child(base_index + i as u64).rng();
            let w: f64 = rng.sample(StandardNormal);
            c.mean_from(|k| zs[n[k]]) + c.sd * w
        })
        .collect();
    DVector::from_vec(vals)
}

/// Exact covariance between targets implied by the construction:
/// `Cov(u, v) = a_u^T C_ref[N(u), N(v)] a_v`, plus `sd_u^2` on the diagonal.
/// Entries are computed pairwise so that restriction to a subset of targets
/// reproduces the smaller matrix exactly.
pub fn target_covariance(
    factor: &SparseFactor,
    conds: &TargetConditionals,
) -> Result<DMatrix<f64>> {
    let r = factor.len();
    let t = conds.len();
    if r * t > IMPLIED_COV_ENTRY_CAP || t * t > IMPLIED_COV_ENTRY_CAP {
        return Err(Error::SizeCap(format!("target covariance {t}x{t} over {r} references")));
    }
    let c_ref = factor.reference_covariance()?;
    let mut cov = DMatrix::zeros(t, t);
    for i in 0..t {
        let (ci, ni) = (&conds.conds[i], &conds.neighbors[i]);
        for j in 0..=i {
            let (cj, nj) = (&conds.conds[j], &conds.neighbors[j]);
            let mut acc = 0.0;
            for (ai, &ki) in ci.coefficients.iter().zip(ni) {
                let mut inner = 0.0;
                for (aj, &kj) in cj.coefficients.iter().zip(nj) {
                    inner += aj * c_ref[(ki, kj)];
                }
                acc += ai * inner;
            }
            if i == j {
                acc += ci.sd * ci.sd;
            }
            cov[(i, j)] = acc;
            cov[(j, i)] = acc;
        }
    }
    Ok(cov)
}
