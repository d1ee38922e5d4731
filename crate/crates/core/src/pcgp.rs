//! Piecewise continuous Gaussian process: partition the domain into cells,
//! keep the full parent conditional law inside each cell given a set of
//! reference values, and make cells conditionally independent of each other.
//!
//! Within a cell the conditional covariance is the parent's (a full matrix,
//! not a diagonal), so sample paths keep the parent's regularity there;
//! discontinuities are confined to cell boundaries. Averaging several
//! independent copies on shifted partitions (each with conditional
//! covariance scaled by the number of copies) smooths those boundaries
//! without changing the within-cell law.

use crate::covariance::{check_distinct, Conditional, CovarianceModel};
use crate::error::{Error, Result};
use crate::geometry::{Location, NeighborFinder, Partition};
use crate::rng::StreamId;
use crate::sparse::{ReferenceSet, SparseFactor, IMPLIED_COV_ENTRY_CAP};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::collections::HashSet;

/// Default cap on the number of targets a single cell may hold.
pub const DEFAULT_CELL_CAP: usize = 2000;

/// The `m` reference locations nearest each cell centroid, ties broken by
/// smaller index; every set has exactly `min(m, r)` members.
pub fn region_neighbor_sets(
    partition: &Partition,
    reference_locations: &[Location],
    m_region: usize,
) -> Vec<Vec<usize>> {
    let finder = NeighborFinder::new(reference_locations);
    partition
        .centroids()
        .iter()
        .map(|c| {
            let mut s = finder.nearest(c, m_region);
            s.sort_unstable();
            s
        })
        .collect()
}

/// Parent model, reference factorisation and partition of one piecewise
/// continuous process.
#[derive(Clone, Debug)]
pub struct PcgpModel {
    model: CovarianceModel,
    refset: ReferenceSet,
    factor: SparseFactor,
    partition: Partition,
    m_region: usize,
    region_neighbors: Vec<Vec<usize>>,
    cell_cap: usize,
}

impl PcgpModel {
    pub fn new(
        model: CovarianceModel,
        refset: ReferenceSet,
        factor: SparseFactor,
        partition: Partition,
        m_region: usize,
    ) -> Result<Self> {
        if m_region == 0 {
            return Err(Error::InvalidArgument("region neighbour size must be positive".into()));
        }
        if factor.len() != refset.len() {
            return Err(Error::InvalidArgument("factor/reference size mismatch".into()));
        }
        let region_neighbors = region_neighbor_sets(&partition, refset.locations(), m_region);
        Ok(PcgpModel {
            model,
            refset,
            factor,
            partition,
            m_region,
            region_neighbors,
            cell_cap: DEFAULT_CELL_CAP,
        })
    }

    /// Replace the per-cell target cap (default [`DEFAULT_CELL_CAP`]).
    pub fn with_cell_cap(mut self, cap: usize) -> Self {
        self.cell_cap = cap;
        self
    }

    pub fn model(&self) -> &CovarianceModel {
        &self.model
    }

    pub fn reference_set(&self) -> &ReferenceSet {
        &self.refset
    }

    pub fn factor(&self) -> &SparseFactor {
        &self.factor
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn m_region(&self) -> usize {
        self.m_region
    }

    pub fn region_neighbors(&self, cell: usize) -> &[usize] {
        &self.region_neighbors[cell]
    }

    /// Draw the reference vector (shared by all cells).
    pub fn simulate_reference(&self, stream: StreamId) -> DVector<f64> {
        self.factor.simulate(stream)
    }

    fn check_targets(&self, targets: &[Location]) -> Result<()> {
        check_distinct(targets, "piecewise targets")?;
        let ref_keys: HashSet<Vec<u64>> =
            self.refset.locations().iter().map(|l| l.bit_key()).collect();
        for t in targets {
            if ref_keys.contains(&t.bit_key()) {
                let index = self
                    .refset
                    .locations()
                    .iter()
                    .position(|l| l == t)
                    .expect("key matched");
                return Err(Error::TargetOnReference { index });
            }
        }
        Ok(())
    }

    /// Group targets by cell and condition each group on the cell's
    /// reference neighbours under the parent law. One conditional per
    /// nonempty cell.
    pub fn block_conditionals(&self, targets: &[Location]) -> Result<Vec<BlockConditional>> {
        let plan = self.plan(std::slice::from_ref(&targets.to_vec()))?;
        Ok(plan.levels.into_iter().next().unwrap_or_default())
    }

    /// Multi-level simulation plan. `level_targets[l]` holds the locations
    /// that appear at refinement level `l`; levels after the first are
    /// conditioned on the cell's reference neighbours plus the cell members
    /// already simulated, so each level extends one path rather than drawing
    /// a fresh one.
    pub fn plan(&self, level_targets: &[Vec<Location>]) -> Result<PcgpPlan> {
        let all: Vec<Location> = level_targets.iter().flatten().cloned().collect();
        self.check_targets(&all)?;

        // membership per cell, cumulative across levels
        let mut members: Vec<Vec<(usize, usize)>> = vec![Vec::new(); self.partition.len()];
        let mut global = 0usize;
        for (l, level) in level_targets.iter().enumerate() {
            for t in level {
                let cell = self.partition.locate(t)?;
                members[cell].push((l, global));
                global += 1;
                let count = members[cell].len();
                if count > self.cell_cap {
                    return Err(Error::CellCap { cell, count, cap: self.cell_cap });
                }
            }
        }

        let mut levels: Vec<Vec<BlockSpec>> =
            (0..level_targets.len()).map(|_| Vec::new()).collect();
        for (cell, cell_members) in members.iter().enumerate() {
            if cell_members.is_empty() {
                continue;
            }
            let mut old: Vec<usize> = Vec::new();
            for l in 0..level_targets.len() {
                let new: Vec<usize> = cell_members
                    .iter()
                    .filter(|(ml, _)| *ml == l)
                    .map(|(_, g)| *g)
                    .collect();
                if !new.is_empty() {
                    levels[l].push(BlockSpec { cell, new: new.clone(), old: old.clone() });
                    old.extend(new);
                }
            }
        }

        let built: Vec<Vec<BlockConditional>> = levels
            .into_par_iter()
            .map(|level| {
                level
                    .into_par_iter()
                    .map(|spec| self.build_block(&all, spec))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        Ok(PcgpPlan { levels: built, total: all.len() })
    }

    fn build_block(&self, all: &[Location], spec: BlockSpec) -> Result<BlockConditional> {
        let neighbor_refs = self.region_neighbors[spec.cell].clone();
        let mut cond_locs: Vec<Location> = neighbor_refs
            .iter()
            .map(|&k| self.refset.locations()[k].clone())
            .collect();
        cond_locs.extend(spec.old.iter().map(|&g| all[g].clone()));
        let new_locs: Vec<Location> = spec.new.iter().map(|&g| all[g].clone()).collect();
        let cond = self.model.condition(&new_locs, &cond_locs)?;
        Ok(BlockConditional {
            cell: spec.cell,
            members: spec.new,
            previous: spec.old,
            neighbor_refs,
            cond,
        })
    }

    /// Exact covariance between targets under the piecewise law, computed
    /// entrywise: the shared part flows through the implied reference
    /// covariance, and targets in a common cell add the parent conditional
    /// covariance given that cell's reference neighbours.
    pub fn implied_covariance(&self, targets: &[Location]) -> Result<DMatrix<f64>> {
        self.check_targets(targets)?;
        let t = targets.len();
        let r = self.factor.len();
        if t * t > IMPLIED_COV_ENTRY_CAP || r * t > IMPLIED_COV_ENTRY_CAP {
            return Err(Error::SizeCap(format!("piecewise covariance {t}x{t} over {r} references")));
        }
        let c_ref = self.factor.reference_covariance()?;

        struct PerTarget {
            cell: usize,
            coeffs: DVector<f64>,
            cross: DVector<f64>,
        }
        let mut per = Vec::with_capacity(t);
        for u in targets {
            let cell = self.partition.locate(u)?;
            let nk = &self.region_neighbors[cell];
            let cond_locs: Vec<Location> =
                nk.iter().map(|&k| self.refset.locations()[k].clone()).collect();
            let sc = self.model.condition_scalar(u, &cond_locs)?;
            let mut cross = DVector::zeros(nk.len());
            for (p, c) in cond_locs.iter().enumerate() {
                cross[p] = self.model.covariance(c, u)?;
            }
            per.push(PerTarget { cell, coeffs: DVector::from_vec(sc.coefficients), cross });
        }

        let mut cov = DMatrix::zeros(t, t);
        for i in 0..t {
            let pi = &per[i];
            let ni = &self.region_neighbors[pi.cell];
            for j in 0..=i {
                let pj = &per[j];
                let nj = &self.region_neighbors[pj.cell];
                let mut acc = 0.0;
                for (p, &kp) in ni.iter().enumerate() {
                    let ai = pi.coeffs[p];
                    let mut inner = 0.0;
                    for (q, &kq) in nj.iter().enumerate() {
                        inner += pj.coeffs[q] * c_ref[(kp, kq)];
                    }
                    acc += ai * inner;
                }
                if pi.cell == pj.cell {
                    acc += self.model.covariance(&targets[i], &targets[j])?
                        - pi.coeffs.dot(&pj.cross);
                }
                cov[(i, j)] = acc;
                cov[(j, i)] = acc;
            }
        }
        Ok(cov)
    }
}

struct BlockSpec {
    cell: usize,
    new: Vec<usize>,
    old: Vec<usize>,
}

/// Conditional law of the targets of one cell (at one refinement level)
/// given the cell's reference neighbours and previously simulated members.
#[derive(Clone, Debug)]
pub struct BlockConditional {
    pub cell: usize,
    /// Global target indices simulated by this block.
    pub members: Vec<usize>,
    /// Global target indices of earlier levels in the same cell.
    pub previous: Vec<usize>,
    /// Reference indices the cell conditions on.
    pub neighbor_refs: Vec<usize>,
    pub cond: Conditional,
}

/// Precomputed blocks per refinement level; geometry only, reusable across
/// replications.
#[derive(Clone, Debug)]
pub struct PcgpPlan {
    levels: Vec<Vec<BlockConditional>>,
    total: usize,
}

impl PcgpPlan {
    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn total_targets(&self) -> usize {
        self.total
    }

    pub fn blocks(&self, level: usize) -> &[BlockConditional] {
        &self.levels[level]
    }

    /// Simulate one level in place. `values` must already hold every target
    /// of earlier levels; cells are independent given the reference vector
    /// and use substream `stream.child(level).child(cell)`. `sd_scale`
    /// multiplies the conditional standard deviation (mixture components
    /// pass `sqrt(G)`).
    pub fn simulate_level(
        &self,
        level: usize,
        values: &mut [f64],
        z_ref: &DVector<f64>,
        stream: StreamId,
        sd_scale: f64,
    ) {
        let lvl_stream = stream.child(level as u64);
        for block in &self.levels[level] {
            let mut rng = lvl_stream.child(block.cell as u64).rng();
            let nc = block.neighbor_refs.len() + block.previous.len();
            let mut cond_values = DVector::zeros(nc);
            for (p, &k) in block.neighbor_refs.iter().enumerate() {
                cond_values[p] = z_ref[k];
            }
            for (p, &g) in block.previous.iter().enumerate() {
                cond_values[block.neighbor_refs.len() + p] = values[g];
            }
            let mean = block.cond.mean(&cond_values);
            let w = DVector::from_fn(block.members.len(), |_, _| {
                rng.sample::<f64, _>(StandardNormal)
            });
            let draw = mean + (&block.cond.chol * w) * sd_scale;
            for (p, &g) in block.members.iter().enumerate() {
                values[g] = draw[p];
            }
        }
    }

    /// Simulate every level, returning the full target vector.
    pub fn simulate(&self, z_ref: &DVector<f64>, stream: StreamId) -> DVector<f64> {
        let mut values = vec![0.0; self.total];
        for level in 0..self.levels.len() {
            self.simulate_level(level, &mut values, z_ref, stream, 1.0);
        }
        DVector::from_vec(values)
    }
}

impl PcgpModel {
    /// One-shot simulation at a flat target set given the reference vector.
    /// Identical to a mixture with a single component: the component
    /// substream is `stream.child(0)`.
    pub fn simulate(
        &self,
        plan: &PcgpPlan,
        z_ref: &DVector<f64>,
        stream: StreamId,
    ) -> DVector<f64> {
        plan.simulate(z_ref, stream.child(0))
    }
}

/// `g` partitions shifted so that cell centroids of one sit at the vertices
/// of another: `g = 1` is the base partition, `g = 2` adds a half-cell
/// diagonal shift, `g = 4` the four half-cell shifts. Shifted cells are
/// clipped at the domain boundary.
pub fn shifted_partitions(
    domain: &crate::geometry::Domain,
    counts: &[usize],
    g: usize,
) -> Result<Vec<Partition>> {
    let d = domain.dim();
    let zero = vec![0.0; d];
    let base = Partition::new(domain, counts, &zero)?;
    match (d, g) {
        (_, 1) => Ok(vec![base]),
        (2, 2) | (2, 4) => {
            let hx = 0.5 * domain.side(0) / counts[0] as f64;
            let hy = 0.5 * domain.side(1) / counts[1] as f64;
            let shifts: Vec<[f64; 2]> = if g == 2 {
                vec![[0.0, 0.0], [hx, hy]]
            } else {
                vec![[0.0, 0.0], [hx, 0.0], [0.0, hy], [hx, hy]]
            };
            shifts
                .iter()
                .map(|s| Partition::new(domain, counts, s))
                .collect()
        }
        _ => Err(Error::InvalidArgument(format!(
            "mixture size {g} unsupported on a {d}-dimensional domain"
        ))),
    }
}

/// Average of `g` independent piecewise processes on shifted partitions,
/// sharing one reference vector. Component conditional covariances carry the
/// factor `g`, which cancels in the average inside common regions.
#[derive(Clone, Debug)]
pub struct MpcgpModel {
    components: Vec<PcgpModel>,
    g: usize,
}

impl MpcgpModel {
    /// Build from an explicit domain and base partition counts.
    pub fn with_domain(
        domain: &crate::geometry::Domain,
        model: CovarianceModel,
        refset: ReferenceSet,
        factor: SparseFactor,
        counts: &[usize],
        m_region: usize,
        g: usize,
        cell_cap: usize,
    ) -> Result<Self> {
        let partitions = shifted_partitions(domain, counts, g)?;
        let components = partitions
            .into_iter()
            .map(|p| {
                PcgpModel::new(model.clone(), refset.clone(), factor.clone(), p, m_region)
                    .map(|m| m.with_cell_cap(cell_cap))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MpcgpModel { components, g })
    }

    pub fn g(&self) -> usize {
        self.g
    }

    pub fn components(&self) -> &[PcgpModel] {
        &self.components
    }

    pub fn simulate_reference(&self, stream: StreamId) -> DVector<f64> {
        self.components[0].simulate_reference(stream)
    }

    /// Plans for all components over the same target levels.
    pub fn plan(&self, level_targets: &[Vec<Location>]) -> Result<Vec<PcgpPlan>> {
        self.components.iter().map(|c| c.plan(level_targets)).collect()
    }

    /// Average of the component draws; component `j` uses substream
    /// `stream.child(j)` and conditional sd scale `sqrt(g)`, so `g = 1`
    /// reproduces the single-partition simulation bit for bit.
    pub fn simulate(
        &self,
        plans: &[PcgpPlan],
        z_ref: &DVector<f64>,
        stream: StreamId,
    ) -> DVector<f64> {
        assert_eq!(plans.len(), self.g);
        let total = plans[0].total_targets();
        let scale = (self.g as f64).sqrt();
        let mut acc = vec![0.0f64; total];
        for (j, plan) in plans.iter().enumerate() {
            let mut values = vec![0.0f64; total];
            for level in 0..plan.level_count() {
                plan.simulate_level(level, &mut values, z_ref, stream.child(j as u64), scale);
            }
            for (a, v) in acc.iter_mut().zip(&values) {
                *a += v;
            }
        }
        let inv = 1.0 / self.g as f64;
        DVector::from_iterator(total, acc.into_iter().map(|v| v * inv))
    }
}

/// Mean absolute jump across grid-neighbour pairs that straddle a cell
/// boundary of `partition`. `counts` are the per-axis grid counts of the
/// row-major 2-D grid `locs` (last axis fastest).
pub fn edge_discontinuity(
    values: &[f64],
    locs: &[Location],
    counts: (usize, usize),
    partition: &Partition,
) -> Result<f64> {
    let (nx, ny) = counts;
    assert_eq!(values.len(), nx * ny);
    assert_eq!(locs.len(), nx * ny);
    let cell_of: Vec<usize> = locs
        .iter()
        .map(|l| partition.locate(l))
        .collect::<Result<_>>()?;
    let mut sum = 0.0;
    let mut n = 0usize;
    let idx = |ix: usize, iy: usize| ix * ny + iy;
    for ix in 0..nx {
        for iy in 0..ny {
            let a = idx(ix, iy);
            if ix + 1 < nx {
                let b = idx(ix + 1, iy);
                if cell_of[a] != cell_of[b] {
                    sum += (values[a] - values[b]).abs();
                    n += 1;
                }
            }
            if iy + 1 < ny {
                let b = idx(ix, iy + 1);
                if cell_of[a] != cell_of[b] {
                    sum += (values[a] - values[b]).abs();
                    n += 1;
                }
            }
        }
    }
    if n == 0 {
        return Err(Error::InvalidArgument("no grid pairs straddle a cell boundary".into()));
    }
    Ok(sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{regular_grid, uniform_locations, Domain, GridStyle};
    use crate::sparse::{NeighborRule, OrderingRule};
    use approx::assert_abs_diff_eq;

    fn pe_model(mean: f64, variance: f64) -> CovarianceModel {
        CovarianceModel::powered_exponential_phi_pow(mean, variance, 4.0, 1.9).unwrap()
    }

    fn build_pcgp(
        domain: &Domain,
        r: usize,
        rule: NeighborRule,
        counts: &[usize],
        m_region: usize,
        seed: u64,
    ) -> PcgpModel {
        let model = pe_model(0.0, 1.0);
        let refs = uniform_locations(domain, r, StreamId::root(seed)).unwrap();
        let refset = ReferenceSet::from_unordered(&refs, OrderingRule::SortedCoordinate, rule).unwrap();
        let factor = SparseFactor::build(&model, &refset).unwrap();
        let partition = Partition::new(domain, counts, &vec![0.0; domain.dim()]).unwrap();
        PcgpModel::new(model, refset, factor, partition, m_region).unwrap()
    }

    #[test]
    fn region_sets_have_the_right_shape() {
        let domain = Domain::square(10.0);
        let refs = uniform_locations(&domain, 20, StreamId::root(1)).unwrap();
        let p = Partition::new(&domain, &[4, 4], &[0.0, 0.0]).unwrap();
        // more neighbours than references: every cell sees all of them
        let sets = region_neighbor_sets(&p, &refs, 50);
        assert!(sets.iter().all(|s| s.len() == 20));
        let sets = region_neighbor_sets(&p, &refs, 6);
        for s in &sets {
            assert_eq!(s.len(), 6);
            let mut dedup = s.clone();
            dedup.dedup();
            assert_eq!(dedup.len(), 6);
        }
        // single cell: the set is the m nearest to the domain centre
        let p1 = Partition::new(&domain, &[1, 1], &[0.0, 0.0]).unwrap();
        let sets = region_neighbor_sets(&p1, &refs, 6);
        let mut want = crate::geometry::nearest_neighbors(&Location::d2(5.0, 5.0), &refs, 6);
        want.sort_unstable();
        assert_eq!(sets[0], want);
    }

    #[test]
    fn single_cell_block_is_the_parent_conditional() {
        let domain = Domain::square(10.0);
        let m = build_pcgp(&domain, 15, NeighborRule::Full, &[1, 1], 15, 2);
        let targets = uniform_locations(&domain, 4, StreamId::root(3)).unwrap();
        let blocks = m.block_conditionals(&targets).unwrap();
        assert_eq!(blocks.len(), 1);
        let cond_locs: Vec<Location> = m.reference_set().locations().to_vec();
        let dense = m.model().condition(&targets, &cond_locs).unwrap();
        let got = &blocks[0].cond;
        for i in 0..4 {
            for j in 0..4 {
                assert_abs_diff_eq!(
                    got.covariance[(i, j)],
                    dense.covariance[(i, j)],
                    epsilon = 1e-10
                );
            }
        }
    }

    #[test]
    fn targets_in_different_cells_form_separate_blocks() {
        let domain = Domain::square(10.0);
        let m = build_pcgp(&domain, 15, NeighborRule::NearestM(5), &[2, 2], 5, 4);
        let targets = vec![Location::d2(1.0, 1.0), Location::d2(9.0, 9.0)];
        let blocks = m.block_conditionals(&targets).unwrap();
        assert_eq!(blocks.len(), 2);
        assert!(blocks.iter().all(|b| b.members.len() == 1));
    }

    #[test]
    fn cell_cap_is_enforced() {
        let domain = Domain::square(10.0);
        let m = build_pcgp(&domain, 10, NeighborRule::Full, &[1, 1], 10, 5).with_cell_cap(3);
        let targets = uniform_locations(&domain, 4, StreamId::root(6)).unwrap();
        assert!(matches!(
            m.block_conditionals(&targets),
            Err(Error::CellCap { count: 4, cap: 3, .. })
        ));
    }

    #[test]
    fn bridge_block_matches_markov_bridge_covariance() {
        // three points between two reference points: conditional covariance
        // is the standard bridge one, (s-a)(b-t)/(b-a) for s <= t
        let bb = CovarianceModel::brownian_bridge();
        let cuts: Vec<Location> = (1..=3).map(|j| Location::d1(j as f64 / 4.0)).collect();
        let refset = ReferenceSet::new(cuts, NeighborRule::Full).unwrap();
        let factor = SparseFactor::build(&bb, &refset).unwrap();
        let partition = Partition::new(&Domain::unit_interval(), &[4], &[0.0]).unwrap();
        let m = PcgpModel::new(bb, refset, factor, partition, 2).unwrap();
        let (a, b) = (0.25, 0.5);
        let pts = [0.3, 0.35, 0.45];
        let targets: Vec<Location> = pts.iter().map(|&t| Location::d1(t)).collect();
        let blocks = m.block_conditionals(&targets).unwrap();
        assert_eq!(blocks.len(), 1);
        let got = &blocks[0].cond.covariance;
        for i in 0..3 {
            for j in 0..3 {
                let (s, t) = (pts[i].min(pts[j]), pts[i].max(pts[j]));
                let want = (s - a) * (b - t) / (b - a);
                assert_abs_diff_eq!(got[(i, j)], want, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn simulation_is_seed_deterministic() {
        let domain = Domain::square(10.0);
        let m = build_pcgp(&domain, 30, NeighborRule::NearestM(6), &[3, 3], 6, 7);
        let targets = uniform_locations(&domain, 25, StreamId::root(8)).unwrap();
        let plan = m.plan(std::slice::from_ref(&targets)).unwrap();
        let z = m.simulate_reference(StreamId::root(9));
        let a = m.simulate(&plan, &z, StreamId::root(10));
        let b = m.simulate(&plan, &z, StreamId::root(10));
        assert_eq!(a, b);
    }

    #[test]
    fn within_and_cross_block_monte_carlo() {
        let domain = Domain::square(10.0);
        let m = build_pcgp(&domain, 20, NeighborRule::NearestM(6), &[2, 1], 6, 11);
        // two targets in the left cell, one in the right
        let targets = vec![
            Location::d2(2.0, 5.0),
            Location::d2(3.0, 4.0),
            Location::d2(8.0, 5.0),
        ];
        let plan = m.plan(std::slice::from_ref(&targets)).unwrap();
        let z = m.simulate_reference(StreamId::root(12));
        let blocks = m.block_conditionals(&targets).unwrap();
        let left = blocks.iter().find(|b| b.members.contains(&0)).unwrap();
        let want_within = left.cond.covariance[(0, 1)];

        let reps = 20_000usize;
        let stream = StreamId::root(13);
        let mut mean = DVector::<f64>::zeros(3);
        let mut draws = Vec::with_capacity(reps);
        for rep in 0..reps {
            let v = m.simulate(&plan, &z, stream.child(rep as u64));
            mean += &v;
            draws.push(v);
        }
        mean /= reps as f64;
        let mut c01 = 0.0;
        let mut c02 = 0.0;
        let mut v0 = 0.0;
        let mut v1 = 0.0;
        let mut v2 = 0.0;
        for v in &draws {
            let d = v - &mean;
            c01 += d[0] * d[1];
            c02 += d[0] * d[2];
            v0 += d[0] * d[0];
            v1 += d[1] * d[1];
            v2 += d[2] * d[2];
        }
        let nf = (reps - 1) as f64;
        c01 /= nf;
        c02 /= nf;
        v0 /= nf;
        v1 /= nf;
        v2 /= nf;
        let se01 = ((v0 * v1 + c01 * c01) / reps as f64).sqrt();
        let se02 = ((v0 * v2 + c02 * c02) / reps as f64).sqrt();
        assert!((c01 - want_within).abs() < 3.0 * se01, "{c01} vs {want_within}");
        // cross-cell conditional covariance is exactly zero
        assert!(c02.abs() < 3.0 * se02, "cross-block covariance {c02}");
    }

    #[test]
    fn k1_full_rule_recovers_parent_covariance() {
        let domain = Domain::square(10.0);
        let r = 15;
        let m = build_pcgp(&domain, r, NeighborRule::Full, &[1, 1], r, 14);
        let targets = uniform_locations(&domain, 8, StreamId::root(15)).unwrap();
        let got = m.implied_covariance(&targets).unwrap();
        let want = m.model().matrix(&targets).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                assert_abs_diff_eq!(got[(i, j)], want[(i, j)], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn implied_covariance_matches_monte_carlo() {
        let domain = Domain::square(10.0);
        let m = build_pcgp(&domain, 12, NeighborRule::NearestM(4), &[2, 2], 4, 16);
        let targets = vec![
            Location::d2(2.0, 2.0),
            Location::d2(2.5, 3.0),
            Location::d2(8.0, 2.0),
        ];
        let want = m.implied_covariance(&targets).unwrap();
        let plan = m.plan(std::slice::from_ref(&targets)).unwrap();
        let reps = 20_000usize;
        let stream = StreamId::root(17);
        let mut acc = DMatrix::<f64>::zeros(3, 3);
        for rep in 0..reps {
            let rep_stream = stream.child(rep as u64);
            let z = m.simulate_reference(rep_stream.child(0));
            let v = m.simulate(&plan, &z, rep_stream.child(1));
            acc += &v * v.transpose();
        }
        acc /= reps as f64;
        for i in 0..3 {
            for j in 0..3 {
                let se = ((want[(i, i)] * want[(j, j)] + want[(i, j)].powi(2)) / reps as f64)
                    .sqrt();
                assert!(
                    (acc[(i, j)] - want[(i, j)]).abs() < 3.0 * se,
                    "({i},{j}): {} vs {}",
                    acc[(i, j)],
                    want[(i, j)]
                );
            }
        }
    }

    #[test]
    fn bridge_with_references_on_cuts_is_exact() {
        // references at the partition cut points, two neighbours per cell:
        // the construction recovers the parent bridge law exactly
        let bb = CovarianceModel::brownian_bridge();
        let domain = Domain::unit_interval();
        let partition = Partition::new(&domain, &[6], &[0.0]).unwrap();
        let cuts: Vec<Location> = partition.cuts(0).iter().map(|&c| Location::d1(c)).collect();
        let refset = ReferenceSet::new(cuts, NeighborRule::Full).unwrap();
        let factor = SparseFactor::build(&bb, &refset).unwrap();
        let m = PcgpModel::new(bb.clone(), refset, factor, partition, 2).unwrap();
        let targets: Vec<Location> =
            [0.05, 0.12, 0.3, 0.55, 0.61, 0.93].iter().map(|&t| Location::d1(t)).collect();
        let got = m.implied_covariance(&targets).unwrap();
        let want = bb.matrix(&targets).unwrap();
        for i in 0..targets.len() {
            for j in 0..targets.len() {
                assert_abs_diff_eq!(got[(i, j)], want[(i, j)], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn implied_covariance_restriction_is_exact() {
        let domain = Domain::square(10.0);
        let m = build_pcgp(&domain, 20, NeighborRule::NearestM(5), &[4, 4], 5, 18);
        let targets = uniform_locations(&domain, 10, StreamId::root(19)).unwrap();
        let big = m.implied_covariance(&targets).unwrap();
        let small = m.implied_covariance(&targets[..4]).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((big[(i, j)] - small[(i, j)]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn within_cell_covariance_is_continuous_in_location() {
        // finite-difference continuity of the implied covariance inside a cell
        let domain = Domain::square(10.0);
        let m = build_pcgp(&domain, 25, NeighborRule::NearestM(6), &[2, 2], 6, 20);
        let base = Location::d2(2.0, 2.0);
        let probe = |eps: f64| {
            let ts = vec![base.clone(), Location::d2(2.0 + eps, 2.0)];
            m.implied_covariance(&ts).unwrap()[(0, 1)]
        };
        let var = m.implied_covariance(std::slice::from_ref(&base)).unwrap()[(0, 0)];
        let c1 = probe(1e-3);
        let c2 = probe(1e-5);
        assert!((c1 - var).abs() < 1e-2);
        assert!((c2 - var).abs() < (c1 - var).abs());
    }

    #[test]
    fn shifted_partition_family() {
        let domain = Domain::square(10.0);
        let parts = shifted_partitions(&domain, &[16, 16], 1).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].offset(), &[0.0, 0.0]);

        let parts = shifted_partitions(&domain, &[16, 16], 4).unwrap();
        assert_eq!(parts.len(), 4);
        assert_eq!(parts[1].offset(), &[0.3125, 0.0]);
        assert_eq!(parts[3].offset(), &[0.3125, 0.3125]);

        assert!(shifted_partitions(&domain, &[16, 16], 3).is_err());
        assert!(shifted_partitions(&Domain::unit_interval(), &[4], 2).is_err());

        // every fine-grid point lands in exactly one cell of each partition
        let grid = regular_grid(&domain, &[60, 60], GridStyle::CellCentered).unwrap();
        for p in &parts {
            for g in &grid {
                let c = p.locate(g).unwrap();
                assert!(c < p.len());
            }
        }
    }

    #[test]
    fn mixture_of_one_equals_plain_simulation() {
        let domain = Domain::square(10.0);
        let model = pe_model(0.0, 1.0);
        let refs = uniform_locations(&domain, 25, StreamId::root(21)).unwrap();
        let refset =
            ReferenceSet::from_unordered(&refs, OrderingRule::SortedCoordinate, NeighborRule::NearestM(6))
                .unwrap();
        let factor = SparseFactor::build(&model, &refset).unwrap();
        let mix = MpcgpModel::with_domain(
            &domain,
            model.clone(),
            refset.clone(),
            factor.clone(),
            &[4, 4],
            6,
            1,
            DEFAULT_CELL_CAP,
        )
        .unwrap();
        let plain = PcgpModel::new(
            model,
            refset,
            factor,
            Partition::new(&domain, &[4, 4], &[0.0, 0.0]).unwrap(),
            6,
        )
        .unwrap();
        let targets = uniform_locations(&domain, 30, StreamId::root(22)).unwrap();
        let mix_plans = mix.plan(std::slice::from_ref(&targets)).unwrap();
        let plain_plan = plain.plan(std::slice::from_ref(&targets)).unwrap();
        let z = plain.simulate_reference(StreamId::root(23));
        let stream = StreamId::root(24);
        assert_eq!(mix.simulate(&mix_plans, &z, stream), plain.simulate(&plain_plan, &z, stream));
    }

    #[test]
    fn mixture_average_keeps_single_partition_variance() {
        // all components share the block membership and neighbour set in a
        // one-cell configuration with full conditioning, so the averaged
        // conditional variance equals the unscaled one
        let domain = Domain::square(10.0);
        let model = pe_model(0.0, 1.0);
        let refs = uniform_locations(&domain, 10, StreamId::root(25)).unwrap();
        let refset =
            ReferenceSet::from_unordered(&refs, OrderingRule::SortedCoordinate, NeighborRule::Full)
                .unwrap();
        let factor = SparseFactor::build(&model, &refset).unwrap();
        let mix = MpcgpModel::with_domain(
            &domain,
            model.clone(),
            refset.clone(),
            factor.clone(),
            &[1, 1],
            10,
            4,
            DEFAULT_CELL_CAP,
        )
        .unwrap();
        let target = vec![Location::d2(5.2, 4.8)];
        let plans = mix.plan(std::slice::from_ref(&target)).unwrap();
        let v_unscaled = mix.components()[0]
            .block_conditionals(&target)
            .unwrap()[0]
            .cond
            .covariance[(0, 0)];
        let z = mix.simulate_reference(StreamId::root(26));
        let reps = 40_000usize;
        let stream = StreamId::root(27);
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for rep in 0..reps {
            let v = mix.simulate(&plans, &z, stream.child(rep as u64))[0];
            sum += v;
            sum2 += v * v;
        }
        let mean = sum / reps as f64;
        let var = sum2 / reps as f64 - mean * mean;
        let se = v_unscaled * (2.0 / reps as f64).sqrt();
        assert!((var - v_unscaled).abs() < 3.0 * se, "{var} vs {v_unscaled}");
    }

    #[test]
    fn mixture_smooths_cell_boundaries() {
        // mean |jump| across base-partition edges, 100 shared-reference reps
        let domain = Domain::square(10.0);
        let model = pe_model(0.0, 1.0);
        let refs = uniform_locations(&domain, 100, StreamId::root(28)).unwrap();
        let refset = ReferenceSet::from_unordered(
            &refs,
            OrderingRule::SortedCoordinate,
            NeighborRule::NearestM(8),
        )
        .unwrap();
        let factor = SparseFactor::build(&model, &refset).unwrap();
        let counts = [4usize, 4];
        let base = Partition::new(&domain, &counts, &[0.0, 0.0]).unwrap();
        let plain = PcgpModel::new(model.clone(), refset.clone(), factor.clone(), base.clone(), 8)
            .unwrap();
        let mix = MpcgpModel::with_domain(
            &domain, model, refset, factor, &counts, 8, 4, DEFAULT_CELL_CAP,
        )
        .unwrap();
        let grid = regular_grid(&domain, &[40, 40], GridStyle::CellCentered).unwrap();
        let plain_plan = plain.plan(std::slice::from_ref(&grid)).unwrap();
        let mix_plans = mix.plan(std::slice::from_ref(&grid)).unwrap();
        let stream = StreamId::root(29);
        let mut stat_plain = 0.0;
        let mut stat_mix = 0.0;
        let reps = 100usize;
        for rep in 0..reps {
            let rep_stream = stream.child(rep as u64);
            let z = plain.simulate_reference(rep_stream.child(0));
            let vp = plain.simulate(&plain_plan, &z, rep_stream.child(1));
            let vm = mix.simulate(&mix_plans, &z, rep_stream.child(2));
            stat_plain +=
                edge_discontinuity(vp.as_slice(), &grid, (40, 40), &base).unwrap();
            stat_mix += edge_discontinuity(vm.as_slice(), &grid, (40, 40), &base).unwrap();
        }
        assert!(
            stat_mix < stat_plain,
            "mixture edge jump {stat_mix} not below {stat_plain}"
        );
    }
}
