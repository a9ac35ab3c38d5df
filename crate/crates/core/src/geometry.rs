//! Executable geometry: epsilon-nets, packing/covering bounds, restricted
//! Voronoi partitions and the anisotropic discretization grid.
//!
//! Distances are ambient Euclidean throughout. All constructions are
//! deterministic: the greedy net starts from the first candidate and every
//! tie is broken by the lowest index.

use serde::Serialize;
use thiserror::Error;

use crate::manifold::{ManifoldDescriptor, Point};
use crate::math::{unit_ball_volume, Structure};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("epsilon = {epsilon} must be smaller than reach/2 = {limit} for this manifold")]
    EpsilonExceedsReach { epsilon: f64, limit: f64 },
    #[error("candidate sample too coarse: spacing {spacing:.3e} exceeds epsilon/4 = {limit:.3e}")]
    CandidatesTooCoarse { spacing: f64, limit: f64 },
    #[error("sample too coarse for Voronoi assignment: spacing {spacing:.3e} exceeds epsilon/8 = {limit:.3e}")]
    SampleTooCoarse { spacing: f64, limit: f64 },
    #[error("the epsilon-net is empty")]
    EmptyNet,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Manifold(#[from] crate::manifold::ManifoldError),
    #[error("discretization grid would hold {0} points (cap {1})")]
    GridTooLarge(usize, usize),
}

/// A finite point set on a manifold with spacing metadata.
#[derive(Debug, Clone, Serialize)]
pub struct GridSample {
    #[serde(skip)]
    pub points: Vec<Point>,
    pub spacing: f64,
}

impl GridSample {
    /// Dense quasi-uniform sample of a manifold with its worst-case
    /// nearest-neighbor spacing.
    pub fn from_manifold(m: &ManifoldDescriptor, resolution: usize) -> Result<Self, GeometryError> {
        Ok(Self {
            points: m.sample_points(resolution)?,
            spacing: m.sample_spacing(resolution),
        })
    }
}

/// An epsilon-cover that is simultaneously an epsilon-packing.
#[derive(Debug, Clone)]
pub struct EpsilonNet {
    pub manifold: ManifoldDescriptor,
    pub epsilon: f64,
    pub points: Vec<Point>,
    /// Indices of the net points within the candidate sample.
    pub candidate_indices: Vec<usize>,
}

/// Certification of the two net invariants against a dense reference
/// sample.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NetCertificate {
    pub covering_ok: bool,
    pub packing_ok: bool,
    pub max_candidate_distance: f64,
    pub min_pairwise_distance: f64,
    pub candidates: usize,
}

/// Greedy farthest-point epsilon-net over a dense candidate sample.
pub fn build_epsilon_net(
    m: &ManifoldDescriptor,
    epsilon: f64,
    candidate_resolution: usize,
) -> Result<EpsilonNet, GeometryError> {
    if epsilon <= 0.0 || !epsilon.is_finite() {
        return Err(GeometryError::InvalidParameter(format!(
            "epsilon {epsilon}"
        )));
    }
    let limit = m.reach() / 2.0;
    if epsilon >= limit {
        return Err(GeometryError::EpsilonExceedsReach { epsilon, limit });
    }
    let spacing = m.sample_spacing(candidate_resolution);
    if spacing > epsilon / 4.0 {
        return Err(GeometryError::CandidatesTooCoarse {
            spacing,
            limit: epsilon / 4.0,
        });
    }
    let candidates = m.sample_points(candidate_resolution)?;
    let mut dist: Vec<f64> = vec![f64::INFINITY; candidates.len()];
    let mut chosen: Vec<usize> = Vec::new();
    let mut next = 0usize; // deterministic start
    loop {
        chosen.push(next);
        let p = &candidates[next];
        for (d, q) in dist.iter_mut().zip(&candidates) {
            let dd = (q - p).norm();
            if dd < *d {
                *d = dd;
            }
        }
        // farthest remaining candidate, lowest index on ties
        let (mut best_i, mut best_d) = (usize::MAX, epsilon);
        for (i, &d) in dist.iter().enumerate() {
            if d > best_d {
                best_d = d;
                best_i = i;
            }
        }
        if best_i == usize::MAX {
            break;
        }
        next = best_i;
    }
    Ok(EpsilonNet {
        manifold: m.clone(),
        epsilon,
        points: chosen.iter().map(|&i| candidates[i].clone()).collect(),
        candidate_indices: chosen,
    })
}

impl EpsilonNet {
    /// Literal check of the covering and packing definitions against a
    /// dense candidate sample.
    pub fn certify(&self, candidate_resolution: usize) -> Result<NetCertificate, GeometryError> {
        let candidates = self.manifold.sample_points(candidate_resolution)?;
        let mut max_cand = 0.0f64;
        for c in &candidates {
            let d = self
                .points
                .iter()
                .map(|p| (c - p).norm())
                .fold(f64::INFINITY, f64::min);
            max_cand = max_cand.max(d);
        }
        let mut min_pair = f64::INFINITY;
        for i in 0..self.points.len() {
            for j in (i + 1)..self.points.len() {
                min_pair = min_pair.min((&self.points[i] - &self.points[j]).norm());
            }
        }
        Ok(NetCertificate {
            covering_ok: max_cand <= self.epsilon,
            packing_ok: self.points.len() < 2 || min_pair > self.epsilon,
            max_candidate_distance: max_cand,
            min_pairwise_distance: min_pair,
            candidates: candidates.len(),
        })
    }
}

/// Upper bound on the size of any epsilon-separated subset of `M`
/// (epsilon-packing number): points with pairwise distance > epsilon carry
/// disjoint (epsilon/2)-balls, each of manifold volume at least
/// `cos^r(theta) (eps/2)^r B_r` with `theta = arcsin(eps/(4 reach))`, so
///
/// `P_eps <= H_r(M) / (cos^r(theta) (eps/2)^r B_r)`.
///
/// The radius entering the ball-volume factor is the separation half
/// `eps/2`; with the full `eps` the bound would fall below the minimal
/// size of any eps-cover and could not dominate net cardinalities.
pub fn packing_bound(m: &ManifoldDescriptor, epsilon: f64) -> Result<f64, GeometryError> {
    let limit = m.reach() / 2.0;
    if epsilon.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) || epsilon >= limit {
        return Err(GeometryError::EpsilonExceedsReach { epsilon, limit });
    }
    let r = m.intrinsic_dim();
    let half = epsilon / 2.0;
    let theta = if m.reach().is_finite() {
        (half / (2.0 * m.reach())).asin()
    } else {
        0.0
    };
    Ok(m.volume() / (theta.cos().powi(r as i32) * half.powi(r as i32) * unit_ball_volume(r)))
}

/// Nearest-seed partition of a dense sample, restricted to the manifold.
#[derive(Debug, Clone)]
pub struct VoronoiPartition {
    pub seeds: Vec<Point>,
    pub epsilon: f64,
    /// Per sample point: index of its seed.
    pub assignment: Vec<usize>,
    /// Per sample point: distance to its seed.
    pub distance: Vec<f64>,
}

pub fn restricted_voronoi(
    net: &EpsilonNet,
    sample: &[Point],
) -> Result<VoronoiPartition, GeometryError> {
    if net.points.is_empty() {
        return Err(GeometryError::EmptyNet);
    }
    let mut assignment = Vec::with_capacity(sample.len());
    let mut distance = Vec::with_capacity(sample.len());
    for p in sample {
        let mut best = (0usize, f64::INFINITY);
        for (i, s) in net.points.iter().enumerate() {
            let d = (p - s).norm();
            if d < best.1 {
                best = (i, d);
            }
        }
        assignment.push(best.0);
        distance.push(best.1);
    }
    Ok(VoronoiPartition {
        seeds: net.points.clone(),
        epsilon: net.epsilon,
        assignment,
        distance,
    })
}

impl VoronoiPartition {
    pub fn seed_count(&self) -> usize {
        self.seeds.len()
    }

    /// Sandwich property per cell: every sample point within eps/2 of seed
    /// i is assigned to i, and no point assigned to i is farther than eps.
    pub fn sandwich_ok(&self, sample: &[Point]) -> bool {
        for (k, p) in sample.iter().enumerate() {
            let a = self.assignment[k];
            if self.distance[k] > self.epsilon {
                return false;
            }
            for (i, s) in self.seeds.iter().enumerate() {
                if (p - s).norm() < self.epsilon / 2.0 && a != i {
                    return false;
                }
            }
        }
        true
    }

    pub fn cell_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.seed_count()];
        for &a in &self.assignment {
            sizes[a] += 1;
        }
        sizes
    }

    /// Whether every cell's sample points form one connected component in
    /// the sample adjacency graph (points closer than `adjacency_radius`).
    pub fn cells_connected(&self, sample: &[Point], adjacency_radius: f64) -> bool {
        for cell in 0..self.seed_count() {
            let members: Vec<usize> = (0..sample.len())
                .filter(|&i| self.assignment[i] == cell)
                .collect();
            if members.len() <= 1 {
                continue;
            }
            // BFS over the adjacency graph restricted to the cell
            let mut seen = vec![false; members.len()];
            let mut stack = vec![0usize];
            seen[0] = true;
            let mut count = 1usize;
            while let Some(i) = stack.pop() {
                for j in 0..members.len() {
                    if !seen[j]
                        && (&sample[members[i]] - &sample[members[j]]).norm() <= adjacency_radius
                    {
                        seen[j] = true;
                        count += 1;
                        stack.push(j);
                    }
                }
            }
            if count != members.len() {
                return false;
            }
        }
        true
    }
}

const GRID_POINT_CAP: usize = 1_000_000;

/// The anisotropic discretization grid: factor-1 spacing
/// `h * gamma * theta^{-2/alpha_1}`, factor-2 spacing
/// `gamma * theta^{-2/alpha_2}`.
#[derive(Debug, Clone)]
pub struct DiscretizationGrid {
    pub structure: Structure,
    pub h: f64,
    pub gamma: f64,
    pub theta: f64,
    pub factor_points: Vec<Vec<Point>>,
    pub spacings: Vec<f64>,
    pub single_point_fallback: Vec<bool>,
    pub points: Vec<Point>,
}

impl DiscretizationGrid {
    pub fn factor_counts(&self) -> Vec<usize> {
        self.factor_points.iter().map(|g| g.len()).collect()
    }
}

pub fn build_discretization_grid(
    m: &ManifoldDescriptor,
    s: &Structure,
    h: f64,
    gamma: f64,
    theta: f64,
) -> Result<DiscretizationGrid, GeometryError> {
    if !(h > 0.0 && h <= 1.0) {
        return Err(GeometryError::InvalidParameter(format!(
            "h = {h} not in (0, 1]"
        )));
    }
    if gamma <= 0.0 || theta <= 0.0 {
        return Err(GeometryError::InvalidParameter(format!(
            "gamma = {gamma}, theta = {theta} must be positive"
        )));
    }
    let factors: Vec<&ManifoldDescriptor> = match m {
        ManifoldDescriptor::Product { left, right } => vec![left, right],
        other => vec![other],
    };
    if factors.len() != s.block_count() {
        return Err(GeometryError::InvalidParameter(format!(
            "manifold has {} factors but the structure has {} blocks",
            factors.len(),
            s.block_count()
        )));
    }
    for (i, f) in factors.iter().enumerate() {
        if f.ambient_dim() != s.block_sizes()[i] || f.intrinsic_dim() != s.manifold_dims()[i] {
            return Err(GeometryError::InvalidParameter(format!(
                "factor {i} is {}-dim in R^{} but block {i} declares r={} e={}",
                f.intrinsic_dim(),
                f.ambient_dim(),
                s.manifold_dims()[i],
                s.block_sizes()[i]
            )));
        }
    }
    let mut factor_points = Vec::new();
    let mut spacings = Vec::new();
    let mut fallback = Vec::new();
    for (i, f) in factors.iter().enumerate() {
        let alpha = s.exponents()[i];
        let scale = if i == 0 { h * gamma } else { gamma };
        let spacing = scale * theta.powf(-2.0 / alpha);
        let (pts, actual, fell) = f.grid_at_spacing(spacing)?;
        factor_points.push(pts);
        spacings.push(actual);
        fallback.push(fell);
    }
    let total: usize = factor_points.iter().map(|g| g.len()).product();
    if total > GRID_POINT_CAP {
        return Err(GeometryError::GridTooLarge(total, GRID_POINT_CAP));
    }
    let points = crate::manifold::product_points(&factor_points);
    Ok(DiscretizationGrid {
        structure: s.clone(),
        h,
        gamma,
        theta,
        factor_points,
        spacings,
        single_point_fallback: fallback,
        points,
    })
}
