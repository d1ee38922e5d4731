//! Uniform interface over the process constructions: the dense parent
//! process, sequential-neighbour processes (nearest-`m` and radius rules),
//! the piecewise continuous process and its shifted-partition mixture.
//!
//! Simulation is organised around refinement plans: the caller names the new
//! locations of each level, the plan precomputes every conditional once, and
//! each replication extends a single path level by level so that values on
//! shared points are reused, never redrawn.

use crate::covariance::{cholesky_with_jitter, mvn_log_density, Conditional, CovarianceModel};
use crate::error::{Error, Result};
use crate::geometry::{Location, NeighborFinder};
use crate::pcgp::{MpcgpModel, PcgpModel, PcgpPlan};
use crate::rng::StreamId;
use crate::sparse::{
    simulate_targets, target_covariance, NeighborRule, ReferenceSet, SparseFactor,
    TargetConditionals,
};
use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

/// A sequential-neighbour process: reference factorisation plus the rule
/// used to condition non-reference targets on the reference set.
#[derive(Clone, Debug)]
pub struct SparseGp {
    pub model: CovarianceModel,
    pub refset: ReferenceSet,
    pub factor: SparseFactor,
    pub target_rule: NeighborRule,
}

impl SparseGp {
    pub fn new(model: CovarianceModel, refset: ReferenceSet, target_rule: NeighborRule) -> Result<Self> {
        let factor = SparseFactor::build(&model, &refset)?;
        Ok(SparseGp { model, refset, factor, target_rule })
    }
}

/// Tagged union over the process constructions.
#[derive(Clone, Debug)]
pub enum FieldModel {
    Parent(CovarianceModel),
    Sparse(SparseGp),
    Pcgp(PcgpModel),
    Mpcgp(MpcgpModel),
}

impl FieldModel {
    pub fn tag(&self) -> &'static str {
        match self {
            FieldModel::Parent(_) => "full_gp",
            FieldModel::Sparse(s) => match s.refset.rule() {
                NeighborRule::Radius(_) => "rngp",
                _ => "nngp",
            },
            FieldModel::Pcgp(_) => "pcgp",
            FieldModel::Mpcgp(_) => "mpcgp",
        }
    }

    pub fn covariance_model(&self) -> &CovarianceModel {
        match self {
            FieldModel::Parent(m) => m,
            FieldModel::Sparse(s) => &s.model,
            FieldModel::Pcgp(p) => p.model(),
            FieldModel::Mpcgp(m) => m.components()[0].model(),
        }
    }

    /// Reference values shared by every conditional replication; empty for
    /// the parent process.
    pub fn simulate_reference(&self, stream: StreamId) -> DVector<f64> {
        match self {
            FieldModel::Parent(_) => DVector::zeros(0),
            FieldModel::Sparse(s) => s.factor.simulate(stream),
            FieldModel::Pcgp(p) => p.simulate_reference(stream),
            FieldModel::Mpcgp(m) => m.simulate_reference(stream),
        }
    }

    /// Precompute the conditionals for a nested simulation;
    /// `level_targets[l]` holds the locations new at level `l`.
    pub fn plan(&self, level_targets: &[Vec<Location>]) -> Result<FieldPlan> {
        if level_targets.is_empty() {
            return Err(Error::InvalidArgument("no refinement levels".into()));
        }
        let ends: Vec<usize> = level_targets
            .iter()
            .scan(0usize, |acc, l| {
                *acc += l.len();
                Some(*acc)
            })
            .collect();
        let kind = match self {
            FieldModel::Parent(m) => {
                let mut seen: Vec<Location> = Vec::new();
                let mut levels = Vec::with_capacity(level_targets.len());
                for new in level_targets {
                    levels.push(m.condition(new, &seen)?);
                    seen.extend(new.iter().cloned());
                }
                PlanKind::Parent(levels)
            }
            FieldModel::Sparse(s) => {
                let levels: Vec<TargetConditionals> = level_targets
                    .iter()
                    .map(|new| TargetConditionals::build(&s.model, &s.refset, new, s.target_rule))
                    .collect::<Result<_>>()?;
                PlanKind::Sparse(levels)
            }
            FieldModel::Pcgp(p) => PlanKind::Pcgp(p.plan(level_targets)?),
            FieldModel::Mpcgp(m) => PlanKind::Mpcgp(m.plan(level_targets)?),
        };
        Ok(FieldPlan { kind, level_ends: ends })
    }

    /// Exact covariance matrix between targets under the construction's law
    /// (marginally over the reference values).
    pub fn implied_covariance(&self, targets: &[Location]) -> Result<nalgebra::DMatrix<f64>> {
        match self {
            FieldModel::Parent(m) => m.matrix(targets),
            FieldModel::Sparse(s) => {
                let conds =
                    TargetConditionals::build(&s.model, &s.refset, targets, s.target_rule)?;
                target_covariance(&s.factor, &conds)
            }
            FieldModel::Pcgp(p) => p.implied_covariance(targets),
            FieldModel::Mpcgp(_) => Err(Error::InvalidArgument(
                "implied covariance of the mixture is not supported".into(),
            )),
        }
    }

    /// Log-likelihood of observed values at the given locations, where the
    /// construction defines one: the parent evaluates the dense Gaussian,
    /// the sequential-neighbour process requires the data to sit exactly on
    /// its reference set, and the piecewise process integrates the reference
    /// vector out analytically.
    pub fn log_likelihood(&self, locations: &[Location], values: &DVector<f64>) -> Result<f64> {
        if locations.len() != values.len() {
            return Err(Error::InvalidArgument("locations/values length mismatch".into()));
        }
        match self {
            FieldModel::Parent(m) => {
                let cov = m.matrix(locations)?;
                let chol = cholesky_with_jitter(&cov, m.variance, "parent likelihood")?;
                let mean = DVector::from_element(locations.len(), m.mean);
                mvn_log_density(&mean, &chol, values)
            }
            FieldModel::Sparse(s) => {
                if locations.len() != s.refset.len()
                    || locations
                        .iter()
                        .zip(s.refset.locations())
                        .any(|(a, b)| a != b)
                {
                    return Err(Error::InvalidArgument(
                        "sequential-neighbour likelihood needs data exactly on the reference set"
                            .into(),
                    ));
                }
                s.factor.log_density(values)
            }
            FieldModel::Pcgp(p) => {
                let corr = crate::inference::PcgpCorrelation::build(p, locations)?;
                let summary = crate::inference::GlsSummary::new(&corr, values);
                Ok(summary.log_likelihood(p.model().mean, p.model().variance))
            }
            FieldModel::Mpcgp(_) => Err(Error::InvalidArgument(
                "mixture likelihood is not supported".into(),
            )),
        }
    }
}

enum PlanKind {
    Parent(Vec<Conditional>),
    Sparse(Vec<TargetConditionals>),
    Pcgp(PcgpPlan),
    Mpcgp(Vec<PcgpPlan>),
}

/// Precomputed refinement plan for one model over fixed target levels.
pub struct FieldPlan {
    kind: PlanKind,
    level_ends: Vec<usize>,
}

/// One simulated path over every refinement level; `values[..level_end(l)]`
/// are the values on grid level `l` in target order.
pub struct SimulatedPath {
    pub values: Vec<f64>,
    level_ends: Vec<usize>,
}

impl SimulatedPath {
    pub fn level_count(&self) -> usize {
        self.level_ends.len()
    }

    pub fn at_level(&self, level: usize) -> &[f64] {
        &self.values[..self.level_ends[level]]
    }

    /// Values new at this level.
    pub fn new_at_level(&self, level: usize) -> &[f64] {
        let start = if level == 0 { 0 } else { self.level_ends[level - 1] };
        &self.values[start..self.level_ends[level]]
    }
}

impl FieldPlan {
    pub fn level_count(&self) -> usize {
        self.level_ends.len()
    }

    pub fn total_targets(&self) -> usize {
        *self.level_ends.last().unwrap()
    }

    /// Cumulative target count through the given level.
    pub fn level_end(&self, level: usize) -> usize {
        self.level_ends[level]
    }

    /// Per-level target conditionals of a sequential-neighbour plan.
    pub fn sparse_levels(&self) -> Option<&[TargetConditionals]> {
        match &self.kind {
            PlanKind::Sparse(levels) => Some(levels),
            _ => None,
        }
    }

    /// The underlying piecewise plan, when this is one.
    pub fn pcgp_plan(&self) -> Option<&PcgpPlan> {
        match &self.kind {
            PlanKind::Pcgp(plan) => Some(plan),
            _ => None,
        }
    }

    /// Simulate one path given the reference values, refining through every
    /// level. Substreams are derived per target (sequential-neighbour), per
    /// level and cell (piecewise), or per level (parent), so results do not
    /// depend on evaluation order.
    pub fn simulate(&self, z_ref: &DVector<f64>, stream: StreamId) -> SimulatedPath {
        let total = self.total_targets();
        let mut values = vec![0.0f64; total];
        match &self.kind {
            PlanKind::Sparse(levels) => {
                let mut offset = 0usize;
                for conds in levels {
                    let v = simulate_targets(conds, z_ref, stream, offset as u64);
                    values[offset..offset + conds.len()].copy_from_slice(v.as_slice());
                    offset += conds.len();
                }
            }
            PlanKind::Pcgp(plan) => {
                let comp = stream.child(0);
                for level in 0..plan.level_count() {
                    plan.simulate_level(level, &mut values, z_ref, comp, 1.0);
                }
            }
            PlanKind::Mpcgp(plans) => {
                let g = plans.len();
                let scale = (g as f64).sqrt();
                let mut acc = vec![0.0f64; total];
                for (j, plan) in plans.iter().enumerate() {
                    let mut comp_values = vec![0.0f64; total];
                    for level in 0..plan.level_count() {
                        plan.simulate_level(
                            level,
                            &mut comp_values,
                            z_ref,
                            stream.child(j as u64),
                            scale,
                        );
                    }
                    for (a, v) in acc.iter_mut().zip(&comp_values) {
                        *a += v;
                    }
                }
                for (slot, a) in values.iter_mut().zip(acc) {
                    *slot = a / g as f64;
                }
            }
            PlanKind::Parent(levels) => {
                let mut offset = 0usize;
                for (level, cond) in levels.iter().enumerate() {
                    let mut rng = stream.child(level as u64).rng();
                    let prev = DVector::from_column_slice(&values[..offset]);
                    let mean = cond.mean(&prev);
                    let w = DVector::from_fn(cond.offset.len(), |_, _| {
                        rng.sample::<f64, _>(StandardNormal)
                    });
                    let draw = mean + &cond.chol * w;
                    values[offset..offset + draw.len()].copy_from_slice(draw.as_slice());
                    offset += draw.len();
                }
            }
        }
        SimulatedPath { values, level_ends: self.level_ends.clone() }
    }
}

/// Near-exact simulation of the parent process at many locations: each value
/// is drawn sequentially conditional on the `window` closest previously
/// simulated locations. With `window >= locations`, this is exact.
pub fn simulate_parent_windowed(
    model: &CovarianceModel,
    locations: &[Location],
    window: usize,
    stream: StreamId,
) -> Result<DVector<f64>> {
    if window == 0 {
        return Err(Error::InvalidArgument("window must be positive".into()));
    }
    let n = locations.len();
    if n == 0 {
        return Ok(DVector::zeros(0));
    }
    let mut rng = stream.rng();
    let mut values: Vec<f64> = Vec::with_capacity(n);
    let mut finder = NeighborFinder::sized_for(locations, n);
    finder.insert(locations[0].clone());
    let first = model.condition_scalar(&locations[0], &[])?;
    let w: f64 = rng.sample(StandardNormal);
    values.push(first.offset + first.sd * w);
    for i in 1..n {
        let mut neigh = finder.nearest(&locations[i], window);
        neigh.sort_unstable();
        let cond_locs: Vec<Location> = neigh.iter().map(|&k| locations[k].clone()).collect();
        let sc = model.condition_scalar(&locations[i], &cond_locs)?;
        let w: f64 = rng.sample(StandardNormal);
        values.push(sc.mean_from(|p| values[neigh[p]]) + sc.sd * w);
        finder.insert(locations[i].clone());
    }
    Ok(DVector::from_vec(values))
}
