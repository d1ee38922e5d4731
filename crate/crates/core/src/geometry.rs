//! Domains, grids, partitions and deterministic nearest-neighbour search.
//!
//! All constructions here are pure geometry shared by every process type:
//! box domains, regular and nested dyadic grids, half-open box partitions
//! with an optional shift, and a bucket-grid spatial index whose results are
//! bit-identical to brute force.

use crate::error::{Error, Result};
use crate::rng::StreamId;
use rand::distr::{Distribution, Uniform};

/// Hard cap on the number of points any single grid may generate.
pub const GRID_POINT_CAP: usize = 20_000_000;

/// A point of the spatial domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Location {
    coords: Vec<f64>,
}

impl Location {
    pub fn new(coords: Vec<f64>) -> Self {
        debug_assert!(coords.iter().all(|c| c.is_finite()));
        Location { coords }
    }

    pub fn d1(x: f64) -> Self {
        Location::new(vec![x])
    }

    pub fn d2(x: f64, y: f64) -> Self {
        Location::new(vec![x, y])
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Exact bit-pattern key, used to detect coincident locations.
    pub(crate) fn bit_key(&self) -> Vec<u64> {
        self.coords.iter().map(|c| c.to_bits()).collect()
    }
}

impl From<Vec<f64>> for Location {
    fn from(coords: Vec<f64>) -> Self {
        Location::new(coords)
    }
}

/// Squared Euclidean distance.
#[inline]
pub fn squared_distance(a: &Location, b: &Location) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    a.coords
        .iter()
        .zip(&b.coords)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Euclidean distance.
#[inline]
pub fn distance(a: &Location, b: &Location) -> f64 {
    squared_distance(a, b).sqrt()
}

/// Axis-aligned box domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidDomain(format!(
                "lower/upper lengths {}/{}",
                lower.len(),
                upper.len()
            )));
        }
        for (l, u) in lower.iter().zip(&upper) {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(Error::InvalidDomain(format!("bounds [{l}, {u}]")));
            }
        }
        Ok(Domain { lower, upper })
    }

    /// The unit interval [0, 1].
    pub fn unit_interval() -> Self {
        Domain::new(vec![0.0], vec![1.0]).unwrap()
    }

    /// The square [0, side]^2.
    pub fn square(side: f64) -> Self {
        Domain::new(vec![0.0, 0.0], vec![side, side]).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    /// Product of side lengths.
    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.side(a)).product()
    }

    pub fn diameter(&self) -> f64 {
        (0..self.dim()).map(|a| self.side(a).powi(2)).sum::<f64>().sqrt()
    }

    pub fn contains(&self, u: &Location) -> bool {
        u.dim() == self.dim()
            && u.coords()
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(c, (l, u))| *l <= *c && *c <= *u)
    }
}

/// Placement rule for regular grids.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridStyle {
    /// Points at the midpoints of a `counts`-cell lattice; avoids domain
    /// corners and partition boundaries.
    CellCentered,
    /// Evenly spaced lattice including the domain corners; `counts` is the
    /// number of points per axis.
    EndpointInclusive,
}

fn check_grid_size(total: usize) -> Result<()> {
    if total > GRID_POINT_CAP {
        return Err(Error::SizeCap(format!(
            "grid of {total} points exceeds cap {GRID_POINT_CAP}"
        )));
    }
    Ok(())
}

/// Regular lattice of `prod(counts)` locations.
pub fn regular_grid(domain: &Domain, counts: &[usize], style: GridStyle) -> Result<Vec<Location>> {
    if counts.len() != domain.dim() || counts.iter().any(|&c| c == 0) {
        return Err(Error::InvalidArgument(format!("grid counts {counts:?}")));
    }
    if style == GridStyle::EndpointInclusive && counts.iter().any(|&c| c < 2) {
        return Err(Error::InvalidArgument(
            "endpoint-inclusive grid needs at least 2 points per axis".into(),
        ));
    }
    let total: usize = counts.iter().product();
    check_grid_size(total)?;
    let d = domain.dim();
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|a| {
            let side = domain.side(a);
            (0..counts[a])
                .map(|i| match style {
                    GridStyle::CellCentered => {
                        domain.lower[a] + side * (2 * i + 1) as f64 / (2 * counts[a]) as f64
                    }
                    GridStyle::EndpointInclusive => {
                        domain.lower[a] + side * i as f64 / (counts[a] - 1) as f64
                    }
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; d];
    loop {
        out.push(Location::new(
            (0..d).map(|a| axes[a][idx[a]]).collect(),
        ));
        // odometer increment, last axis fastest
        let mut a = d;
        loop {
            if a == 0 {
                return Ok(out);
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < counts[a] {
                break;
            }
            idx[a] = 0;
        }
    }
}

/// `r` i.i.d. uniform locations; identical stream, identical output.
pub fn uniform_locations(domain: &Domain, r: usize, stream: StreamId) -> Result<Vec<Location>> {
    if r == 0 {
        return Err(Error::InvalidArgument("need at least one location".into()));
    }
    let mut rng = stream.rng();
    let dists: Vec<Uniform<f64>> = (0..domain.dim())
        .map(|a| Uniform::new(domain.lower[a], domain.upper[a]).expect("valid bounds"))
        .collect();
    Ok((0..r)
        .map(|_| Location::new(dists.iter().map(|d| d.sample(&mut rng)).collect()))
        .collect())
}

/// Nested dyadic grid schedule: level `n + 1` halves the per-axis spacing of
/// level `n` and contains it exactly (points are indexed on an integer
/// lattice, so shared coordinates are bitwise equal).
#[derive(Clone, Debug)]
pub struct GridSchedule {
    domain: Domain,
    base_intervals: Vec<usize>,
    level: usize,
}

impl GridSchedule {
    /// Base endpoint-inclusive grid with `base_intervals[a]` intervals
    /// (`base_intervals[a] + 1` points) per axis.
    pub fn new(domain: Domain, base_intervals: Vec<usize>) -> Result<Self> {
        if base_intervals.len() != domain.dim() || base_intervals.iter().any(|&k| k == 0) {
            return Err(Error::InvalidArgument(format!(
                "base intervals {base_intervals:?}"
            )));
        }
        let s = GridSchedule { domain, base_intervals, level: 0 };
        check_grid_size(s.len())?;
        Ok(s)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// Intervals per axis at the current level.
    pub fn intervals(&self, axis: usize) -> usize {
        self.base_intervals[axis] << self.level
    }

    /// Points per axis at the current level.
    pub fn points_per_axis(&self, axis: usize) -> usize {
        self.intervals(axis) + 1
    }

    /// Total point count at the current level.
    pub fn len(&self) -> usize {
        (0..self.domain.dim()).map(|a| self.points_per_axis(a)).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Next level of the schedule; new points sit at the dyadic midpoints.
    pub fn refine(&self) -> Result<GridSchedule> {
        let next = GridSchedule {
            domain: self.domain.clone(),
            base_intervals: self.base_intervals.clone(),
            level: self.level + 1,
        };
        check_grid_size(next.len())?;
        Ok(next)
    }

    fn coord(&self, axis: usize, index: usize) -> f64 {
        let m = self.intervals(axis);
        self.domain.lower[axis] + self.domain.side(axis) * index as f64 / m as f64
    }

    /// All locations of the current level, row-major.
    pub fn locations(&self) -> Vec<Location> {
        let d = self.domain.dim();
        let counts: Vec<usize> = (0..d).map(|a| self.points_per_axis(a)).collect();
        let mut out = Vec::with_capacity(self.len());
        let mut idx = vec![0usize; d];
        loop {
            out.push(Location::new((0..d).map(|a| self.coord(a, idx[a])).collect()));
            let mut a = d;
            loop {
                if a == 0 {
                    return out;
                }
                a -= 1;
                idx[a] += 1;
                if idx[a] < counts[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
    }

    /// Locations of the current level that were not present at any coarser
    /// level (points with at least one odd lattice index), row-major.
    pub fn new_locations(&self) -> Vec<Location> {
        if self.level == 0 {
            return self.locations();
        }
        let d = self.domain.dim();
        let counts: Vec<usize> = (0..d).map(|a| self.points_per_axis(a)).collect();
        let mut out = Vec::new();
        let mut idx = vec![0usize; d];
        loop {
            if idx.iter().any(|i| i % 2 == 1) {
                out.push(Location::new((0..d).map(|a| self.coord(a, idx[a])).collect()));
            }
            let mut a = d;
            loop {
                if a == 0 {
                    return out;
                }
                a -= 1;
                idx[a] += 1;
                if idx[a] < counts[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
    }
}

/// Partition of a box domain into half-open box cells.
///
/// Cells are `[a, b)` along every axis except against the domain's upper
/// face, where they are closed, so the cells cover the compact domain
/// exactly. A nonzero `offset` shifts all interior cut planes; cells clipped
/// by the domain boundary are then smaller than the interior ones.
#[derive(Clone, Debug)]
pub struct Partition {
    domain: Domain,
    /// Interior cut coordinates per axis, strictly increasing.
    cuts: Vec<Vec<f64>>,
    /// Cells per axis (`cuts[a].len() + 1`).
    cells_per_axis: Vec<usize>,
    offset: Vec<f64>,
    centroids: Vec<Location>,
}

impl Partition {
    /// Build a partition with `counts[a]` congruent cells per axis, shifted
    /// by `offset` (each |component| must be smaller than the cell side).
    pub fn new(domain: &Domain, counts: &[usize], offset: &[f64]) -> Result<Self> {
        let d = domain.dim();
        if counts.len() != d || counts.iter().any(|&c| c == 0) {
            return Err(Error::InvalidArgument(format!("partition counts {counts:?}")));
        }
        if offset.len() != d {
            return Err(Error::InvalidArgument("offset dimension mismatch".into()));
        }
        let mut cuts = Vec::with_capacity(d);
        for a in 0..d {
            let side = domain.side(a) / counts[a] as f64;
            if offset[a].abs() >= side {
                return Err(Error::InvalidArgument(format!(
                    "offset {} not smaller than cell side {side}",
                    offset[a]
                )));
            }
            let mut axis_cuts = Vec::new();
            // interior cut planes: lower + offset + j*side for all j with the
            // cut strictly inside the domain
            let start = domain.lower[a] + offset[a];
            let jmin = if offset[a] > 0.0 { 0 } else { 1 };
            for j in jmin..=counts[a] {
                let c = start + side * j as f64;
                if c > domain.lower[a] && c < domain.upper[a] {
                    axis_cuts.push(c);
                }
            }
            cuts.push(axis_cuts);
        }
        let cells_per_axis: Vec<usize> = cuts.iter().map(|c| c.len() + 1).collect();
        let total: usize = cells_per_axis.iter().product();
        check_grid_size(total)?;

        // centroid = midpoint of the cell box per axis
        let axis_mids: Vec<Vec<f64>> = (0..d)
            .map(|a| {
                let mut edges = Vec::with_capacity(cuts[a].len() + 2);
                edges.push(domain.lower[a]);
                edges.extend_from_slice(&cuts[a]);
                edges.push(domain.upper[a]);
                edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
            })
            .collect();
        let mut centroids = Vec::with_capacity(total);
        let mut idx = vec![0usize; d];
        'outer: loop {
            centroids.push(Location::new((0..d).map(|a| axis_mids[a][idx[a]]).collect()));
            let mut a = d;
            loop {
                if a == 0 {
                    break 'outer;
                }
                a -= 1;
                idx[a] += 1;
                if idx[a] < cells_per_axis[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
        Ok(Partition {
            domain: domain.clone(),
            cuts,
            cells_per_axis,
            offset: offset.to_vec(),
            centroids,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Total cell count.
    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn cells_per_axis(&self) -> &[usize] {
        &self.cells_per_axis
    }

    pub fn centroid(&self, cell: usize) -> &Location {
        &self.centroids[cell]
    }

    pub fn centroids(&self) -> &[Location] {
        &self.centroids
    }

    /// Interior cut coordinates along one axis.
    pub fn cuts(&self, axis: usize) -> &[f64] {
        &self.cuts[axis]
    }

    /// Cell index of `u` under the half-open rule: a point exactly on an
    /// interior cut belongs to the cell on the upper side.
    pub fn locate(&self, u: &Location) -> Result<usize> {
        if !self.domain.contains(u) {
            return Err(Error::OutsideDomain(format!("{:?}", u.coords())));
        }
        let d = self.domain.dim();
        let mut cell = 0usize;
        for a in 0..d {
            let x = u.coords()[a];
            let i = self.cuts[a].partition_point(|c| *c <= x);
            cell = cell * self.cells_per_axis[a] + i;
        }
        Ok(cell)
    }

    /// Bounds `[low, high)` of a cell along every axis (closed at the domain
    /// upper face).
    pub fn cell_bounds(&self, cell: usize) -> (Vec<f64>, Vec<f64>) {
        let d = self.domain.dim();
        let mut rem = cell;
        let mut lo = vec![0.0; d];
        let mut hi = vec![0.0; d];
        for a in (0..d).rev() {
            let i = rem % self.cells_per_axis[a];
            rem /= self.cells_per_axis[a];
            lo[a] = if i == 0 { self.domain.lower[a] } else { self.cuts[a][i - 1] };
            hi[a] = if i == self.cells_per_axis[a] - 1 {
                self.domain.upper[a]
            } else {
                self.cuts[a][i]
            };
        }
        (lo, hi)
    }
}

/// Candidate count below which the free-function queries use brute force.
pub const BRUTE_FORCE_LIMIT: usize = 512;

/// Immutable bucket-grid index over a fixed candidate set.
///
/// Queries return exactly the brute-force result: candidates are compared by
/// `(squared distance, index)` so ties always break toward the smaller index.
pub struct NeighborFinder {
    points: Vec<Location>,
    lower: Vec<f64>,
    inv_cell: Vec<f64>,
    cells: Vec<usize>,
    buckets: Vec<Vec<u32>>,
    cell_side: f64,
}

impl NeighborFinder {
    pub fn new(candidates: &[Location]) -> Self {
        let mut f = Self::sized_for(candidates, candidates.len());
        for c in candidates {
            f.insert(c.clone());
        }
        f
    }

    /// Empty index whose bucket grid covers the bounding box of `extent`
    /// and is sized for `hint` points; fill it with
    /// [`NeighborFinder::insert`]. Use this for incremental candidate sets:
    /// `extent` must cover every point that will ever be inserted.
    pub fn sized_for(extent: &[Location], hint: usize) -> Self {
        assert!(!extent.is_empty(), "empty extent");
        let d = extent[0].dim();
        let mut lower = vec![f64::INFINITY; d];
        let mut upper = vec![f64::NEG_INFINITY; d];
        for c in extent {
            for a in 0..d {
                lower[a] = lower[a].min(c.coords()[a]);
                upper[a] = upper[a].max(c.coords()[a]);
            }
        }
        // ~2 points per bucket on average
        let per_axis = ((hint.max(1) as f64 / 2.0).powf(1.0 / d as f64).ceil() as usize).max(1);
        let cells = vec![per_axis; d];
        let mut inv_cell = vec![0.0; d];
        let mut side: f64 = 0.0;
        for a in 0..d {
            let extent_a = (upper[a] - lower[a]).max(1e-12);
            // widen slightly so the max coordinate maps inside the last bucket
            let ext = extent_a * (1.0 + 1e-9) + 1e-300;
            inv_cell[a] = cells[a] as f64 / ext;
            side = side.max(ext / cells[a] as f64);
        }
        let total: usize = cells.iter().product();
        NeighborFinder {
            points: Vec::with_capacity(hint),
            lower,
            inv_cell,
            cells,
            buckets: vec![Vec::new(); total],
            cell_side: side,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn bucket_coords(&self, u: &Location) -> Vec<isize> {
        (0..self.lower.len())
            .map(|a| {
                let i = ((u.coords()[a] - self.lower[a]) * self.inv_cell[a]).floor() as isize;
                i.clamp(0, self.cells[a] as isize - 1)
            })
            .collect()
    }

    fn bucket_index(&self, bc: &[isize]) -> usize {
        let mut idx = 0usize;
        for (a, &c) in bc.iter().enumerate() {
            idx = idx * self.cells[a] + c as usize;
        }
        idx
    }

    /// Append a candidate; its index is the insertion order.
    pub fn insert(&mut self, loc: Location) {
        let bc = self.bucket_coords(&loc);
        let bi = self.bucket_index(&bc);
        self.buckets[bi].push(self.points.len() as u32);
        self.points.push(loc);
    }

    pub fn point(&self, index: usize) -> &Location {
        &self.points[index]
    }

    /// Indices of the `min(m, len)` nearest candidates, sorted by
    /// `(distance, index)`.
    pub fn nearest(&self, query: &Location, m: usize) -> Vec<usize> {
        let n = self.points.len();
        let m = m.min(n);
        if m == 0 {
            return Vec::new();
        }
        // best-so-far kept sorted by (d2, index); worst at the back
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(m + 1);
        let qc = self.bucket_coords(query);
        let d = self.lower.len();
        let mut ring = 0isize;
        loop {
            let mut visited_any = false;
            // all buckets at Chebyshev distance `ring` from the query bucket
            let mut stack = vec![(0usize, Vec::<isize>::with_capacity(d), false)];
            while let Some((axis, partial, at_ring)) = stack.pop() {
                if axis == d {
                    if at_ring {
                        visited_any = true;
                        let bi = self.bucket_index(&partial);
                        for &pi in &self.buckets[bi] {
                            let pi = pi as usize;
                            let d2 = squared_distance(query, &self.points[pi]);
                            let cand = (d2, pi);
                            if best.len() < m {
                                let pos = best.partition_point(|x| *x < cand);
                                best.insert(pos, cand);
                            } else if cand < *best.last().unwrap() {
                                let pos = best.partition_point(|x| *x < cand);
                                best.insert(pos, cand);
                                best.pop();
                            }
                        }
                    }
                    continue;
                }
                for delta in -ring..=ring {
                    let c = qc[axis] + delta;
                    if c < 0 || c >= self.cells[axis] as isize {
                        continue;
                    }
                    let mut next = partial.clone();
                    next.push(c);
                    stack.push((axis + 1, next, at_ring || delta.abs() == ring));
                }
            }
            // smallest possible distance from the query to any bucket in the
            // next ring (conservative: ring boundary in Chebyshev metric)
            let next_min = ring as f64 * self.cell_side;
            let have_enough = best.len() == m;
            if have_enough && next_min * next_min > best.last().unwrap().0 {
                break;
            }
            if !visited_any && have_enough {
                break;
            }
            if ring as usize > self.cells.iter().copied().max().unwrap_or(1) + 1 {
                break;
            }
            ring += 1;
        }
        best.into_iter().map(|(_, i)| i).collect()
    }

    /// Indices of all candidates with distance strictly below `radius`,
    /// sorted by index.
    pub fn within_radius(&self, query: &Location, radius: f64) -> Vec<usize> {
        assert!(radius > 0.0, "radius must be positive");
        let d = self.lower.len();
        let r2 = radius * radius;
        let lo: Vec<isize> = (0..d)
            .map(|a| {
                (((query.coords()[a] - radius) - self.lower[a]) * self.inv_cell[a]).floor() as isize
            })
            .map(|v| v.max(0))
            .collect();
        let hi: Vec<isize> = (0..d)
            .map(|a| {
                let v = (((query.coords()[a] + radius) - self.lower[a]) * self.inv_cell[a]).floor()
                    as isize;
                v.min(self.cells[a] as isize - 1)
            })
            .collect();
        if (0..d).any(|a| lo[a] > hi[a]) {
            return Vec::new();
        }
        let mut out = Vec::new();
        let mut bc = lo.clone();
        'outer: loop {
            let bi = self.bucket_index(&bc);
            for &pi in &self.buckets[bi] {
                let pi = pi as usize;
                if squared_distance(query, &self.points[pi]) < r2 {
                    out.push(pi);
                }
            }
            let mut a = d;
            loop {
                if a == 0 {
                    break 'outer;
                }
                a -= 1;
                bc[a] += 1;
                if bc[a] <= hi[a] {
                    break;
                }
                bc[a] = lo[a];
            }
        }
        out.sort_unstable();
        out
    }
}

fn brute_nearest(query: &Location, candidates: &[Location], m: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| (squared_distance(query, c), i))
        .collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    all.truncate(m.min(candidates.len()));
    all.into_iter().map(|(_, i)| i).collect()
}

/// Indices of the `min(m, |candidates|)` nearest candidates, ties broken by
/// smaller index, sorted by `(distance, index)`.
pub fn nearest_neighbors(query: &Location, candidates: &[Location], m: usize) -> Vec<usize> {
    assert!(!candidates.is_empty(), "empty candidate set");
    if candidates.len() <= BRUTE_FORCE_LIMIT {
        brute_nearest(query, candidates, m)
    } else {
        NeighborFinder::new(candidates).nearest(query, m)
    }
}

/// Indices of all candidates with `distance < radius`, sorted by index.
pub fn radius_neighbors(query: &Location, candidates: &[Location], radius: f64) -> Vec<usize> {
    assert!(!candidates.is_empty(), "empty candidate set");
    assert!(radius > 0.0, "radius must be positive");
    if candidates.len() <= BRUTE_FORCE_LIMIT {
        let r2 = radius * radius;
        candidates
            .iter()
            .enumerate()
            .filter(|(_, c)| squared_distance(query, c) < r2)
            .map(|(i, _)| i)
            .collect()
    } else {
        NeighborFinder::new(candidates).within_radius(query, radius)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn volume_of_boxes() {
        let d = Domain::square(10.0);
        assert_eq!(d.volume(), 100.0);
        assert_eq!(Domain::unit_interval().volume(), 1.0);
        let d = Domain::new(vec![0.0, 0.0], vec![10.0, 5.0]).unwrap();
        assert_eq!(d.volume(), 50.0);
    }

    #[test]
    fn invalid_domain_rejected() {
        assert!(Domain::new(vec![0.0], vec![0.0]).is_err());
        assert!(Domain::new(vec![1.0], vec![0.0]).is_err());
        assert!(Domain::new(vec![], vec![]).is_err());
    }

    #[test]
    fn cell_centered_grid_matches_hand_values() {
        let d = Domain::square(10.0);
        let g = regular_grid(&d, &[25, 25], GridStyle::CellCentered).unwrap();
        assert_eq!(g.len(), 625);
        assert_eq!(g[0].coords(), &[0.2, 0.2]);
        let g = regular_grid(&d, &[400, 400], GridStyle::CellCentered).unwrap();
        assert_eq!(g.len(), 160_000);
    }

    #[test]
    fn endpoint_grid_includes_corners() {
        let d = Domain::unit_interval();
        let g = regular_grid(&d, &[2], GridStyle::EndpointInclusive).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].coords(), &[0.0]);
        assert_eq!(g[1].coords(), &[1.0]);
    }

    #[test]
    fn schedule_refines_by_dyadic_midpoints() {
        let s = GridSchedule::new(Domain::unit_interval(), vec![1]).unwrap();
        let pts: Vec<f64> = s.locations().iter().map(|l| l.coords()[0]).collect();
        assert_eq!(pts, vec![0.0, 1.0]);
        let s1 = s.refine().unwrap();
        let pts: Vec<f64> = s1.locations().iter().map(|l| l.coords()[0]).collect();
        assert_eq!(pts, vec![0.0, 0.5, 1.0]);
        let s2 = s1.refine().unwrap();
        let pts: Vec<f64> = s2.locations().iter().map(|l| l.coords()[0]).collect();
        assert_eq!(pts, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn schedule_counts_follow_construction() {
        // |D_n| = (2^n k0 + 1)^d
        let mut s = GridSchedule::new(Domain::square(1.0), vec![3, 3]).unwrap();
        for n in 0..4 {
            let per_axis = (3usize << n) + 1;
            assert_eq!(s.len(), per_axis * per_axis);
            assert_eq!(s.locations().len(), s.len());
            s = s.refine().unwrap();
        }
    }

    #[test]
    fn schedule_nesting_is_exact() {
        let s = GridSchedule::new(Domain::new(vec![0.3], vec![7.7]).unwrap(), vec![5]).unwrap();
        let s1 = s.refine().unwrap();
        let coarse: Vec<u64> = s.locations().iter().map(|l| l.coords()[0].to_bits()).collect();
        let fine: std::collections::HashSet<u64> =
            s1.locations().iter().map(|l| l.coords()[0].to_bits()).collect();
        for c in coarse {
            assert!(fine.contains(&c), "coarse point missing at finer level");
        }
        // new_locations is exactly the complement
        assert_eq!(s1.new_locations().len(), s1.len() - s.len());
    }

    #[test]
    fn uniform_locations_are_reproducible_and_centered() {
        let d = Domain::square(10.0);
        let a = uniform_locations(&d, 1000, StreamId::root(7).child(1)).unwrap();
        let b = uniform_locations(&d, 1000, StreamId::root(7).child(1)).unwrap();
        assert_eq!(a, b);
        assert!(uniform_locations(&d, 0, StreamId::root(7)).is_err());

        let big = uniform_locations(&d, 100_000, StreamId::root(11)).unwrap();
        for a in 0..2 {
            let mean: f64 =
                big.iter().map(|l| l.coords()[a]).sum::<f64>() / big.len() as f64;
            assert!((mean - 5.0).abs() < 0.05, "axis {a} mean {mean}");
        }
    }

    #[test]
    fn nearest_basic_and_ties() {
        let cands = vec![Location::d1(1.0), Location::d1(2.0), Location::d1(3.0)];
        assert_eq!(nearest_neighbors(&Location::d1(0.0), &cands, 2), vec![0, 1]);
        assert_eq!(nearest_neighbors(&Location::d1(0.0), &cands, 10), vec![0, 1, 2]);
        // tie between -1 and +1 breaks toward the lower index
        let cands = vec![Location::d1(-1.0), Location::d1(1.0)];
        assert_eq!(nearest_neighbors(&Location::d1(0.0), &cands, 1), vec![0]);
    }

    #[test]
    fn radius_query_matches_examples() {
        let cands = vec![Location::d1(1.0), Location::d1(2.0), Location::d1(3.0)];
        assert_eq!(radius_neighbors(&Location::d1(0.0), &cands, 2.5), vec![0, 1]);
        assert_eq!(radius_neighbors(&Location::d1(0.0), &cands, 0.5), Vec::<usize>::new());
        assert_eq!(radius_neighbors(&Location::d1(0.0), &cands, 100.0), vec![0, 1, 2]);
    }

    #[test]
    fn index_matches_brute_force() {
        let mut stream = StreamId::root(99);
        let d = Domain::square(1.0);
        for trial in 0..4 {
            stream = stream.child(trial);
            let cands = uniform_locations(&d, 700, stream.child(0)).unwrap();
            let finder = NeighborFinder::new(&cands);
            let queries = uniform_locations(&d, 50, stream.child(1)).unwrap();
            for q in &queries {
                assert_eq!(finder.nearest(q, 12), brute_nearest(q, &cands, 12));
                let r = 0.17;
                let brute: Vec<usize> = cands
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| squared_distance(q, c) < r * r)
                    .map(|(i, _)| i)
                    .collect();
                assert_eq!(finder.within_radius(q, r), brute);
            }
        }
    }

    #[test]
    fn partition_hand_values() {
        let d = Domain::square(10.0);
        let p = Partition::new(&d, &[16, 16], &[0.0, 0.0]).unwrap();
        assert_eq!(p.len(), 256);
        assert_eq!(p.centroid(0).coords(), &[0.3125, 0.3125]);
        let (lo, hi) = p.cell_bounds(0);
        assert_eq!(lo, vec![0.0, 0.0]);
        assert_eq!(hi, vec![0.625, 0.625]);
    }

    #[test]
    fn shifted_partition_clips_at_boundary() {
        let d = Domain::square(10.0);
        let p = Partition::new(&d, &[16, 16], &[0.3125, 0.3125]).unwrap();
        // one extra cell per axis from the clipped strips
        assert_eq!(p.cells_per_axis(), &[17, 17]);
        let (lo, hi) = p.cell_bounds(0);
        assert_eq!(lo, vec![0.0, 0.0]);
        assert_eq!(hi, vec![0.3125, 0.3125]);
        // interior cells congruent
        let mid = p.locate(&Location::d2(5.0, 5.0)).unwrap();
        let (lo, hi) = p.cell_bounds(mid);
        assert!((hi[0] - lo[0] - 0.625).abs() < 1e-12);
        assert!((hi[1] - lo[1] - 0.625).abs() < 1e-12);
    }

    #[test]
    fn locate_follows_half_open_rule() {
        let d = Domain::square(10.0);
        let p = Partition::new(&d, &[16, 16], &[0.0, 0.0]).unwrap();
        // exactly on an interior boundary -> upper cell
        let c = p.locate(&Location::d2(0.625, 0.0)).unwrap();
        let (lo, _) = p.cell_bounds(c);
        assert_eq!(lo[0], 0.625);
        // domain upper corner -> last cell
        assert_eq!(p.locate(&Location::d2(10.0, 10.0)).unwrap(), p.len() - 1);
        // outside -> error
        assert!(p.locate(&Location::d2(10.0001, 0.0)).is_err());
    }

    #[test]
    fn locate_centroid_is_identity() {
        let d = Domain::square(10.0);
        for off in [[0.0, 0.0], [0.3125, 0.3125], [-0.2, 0.1]] {
            let p = Partition::new(&d, &[16, 16], &off).unwrap();
            for cell in 0..p.len() {
                assert_eq!(p.locate(p.centroid(cell)).unwrap(), cell);
            }
        }
    }

    #[test]
    fn partition_covers_grid_exactly() {
        let d = Domain::square(10.0);
        let p = Partition::new(&d, &[16, 16], &[0.0, 0.0]).unwrap();
        let grid = regular_grid(&d, &[100, 100], GridStyle::CellCentered).unwrap();
        let mut counts = vec![0usize; p.len()];
        for g in &grid {
            counts[p.locate(g).unwrap()] += 1;
        }
        let total: usize = counts.iter().sum();
        assert_eq!(total, grid.len());
        assert!(counts.iter().all(|&c| c > 0));
    }

    proptest! {
        #[test]
        fn nearest_invariant_under_candidate_permutation(seed in 0u64..1000) {
            let d = Domain::square(1.0);
            let cands = uniform_locations(&d, 60, StreamId::root(seed)).unwrap();
            let q = Location::d2(0.5, 0.5);
            let base = nearest_neighbors(&q, &cands, 7);
            // reverse the candidate order; mapped indices must agree
            let rev: Vec<Location> = cands.iter().rev().cloned().collect();
            let got = nearest_neighbors(&q, &rev, 7);
            let mapped: Vec<usize> = got.iter().map(|i| cands.len() - 1 - i).collect();
            let mut base_set = base.clone();
            base_set.sort_unstable();
            let mut mapped_set = mapped.clone();
            mapped_set.sort_unstable();
            prop_assert_eq!(base_set, mapped_set);
        }

        #[test]
        fn every_point_lands_in_exactly_one_cell(seed in 0u64..1000) {
            let d = Domain::square(10.0);
            let p = Partition::new(&d, &[5, 7], &[0.3, -0.4]).unwrap();
            let pts = uniform_locations(&d, 100, StreamId::root(seed)).unwrap();
            for u in &pts {
                let c = p.locate(u).unwrap();
                let (lo, hi) = p.cell_bounds(c);
                for a in 0..2 {
                    let x = u.coords()[a];
                    prop_assert!(lo[a] <= x);
                    let closed_above = hi[a] == d.upper()[a];
                    if closed_above {
                        prop_assert!(x <= hi[a]);
                    } else {
                        prop_assert!(x < hi[a]);
                    }
                }
            }
        }
    }
}
