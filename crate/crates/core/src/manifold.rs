//! Parametrized compact submanifolds with reach, tangent frames and
//! Hausdorff-measure quadrature.
//!
//! Only closed-form families are supported: circles, 2-spheres, flat tori,
//! interval products, and binary products of those. Reach is stored
//! analytically (circle/sphere of radius rho have reach rho); products
//! concatenate ambient coordinates and block tangent frames.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Point = DVector<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManifoldError {
    #[error("invalid manifold parameter: {0}")]
    InvalidParameter(String),
    #[error("point is not on the manifold (distance {dist:.3e} exceeds tolerance {tol:.1e})")]
    PointOffManifold { dist: f64, tol: f64 },
    #[error("point has ambient dimension {got}, manifold lives in R^{expected}")]
    AmbientDimMismatch { expected: usize, got: usize },
    #[error("sphere grids support p in {{2, 3}}, got p = {0}")]
    UnsupportedSphereDim(usize),
    #[error("resolution {0} is too small (need >= {1})")]
    ResolutionTooSmall(usize, usize),
}

const ON_MANIFOLD_TOL: f64 = 1e-8;

/// Closed-form compact manifold.
///
/// `Sphere` is the round 2-sphere in R^3; use `Circle` for S^1. A flat
/// torus with side lengths `L_i` is embedded in R^{2d} as a product of
/// circles of radius `L_i / 2pi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManifoldDescriptor {
    Circle {
        radius: f64,
    },
    Sphere {
        radius: f64,
    },
    FlatTorus {
        lengths: Vec<f64>,
    },
    IntervalProduct {
        bounds: Vec<(f64, f64)>,
    },
    Product {
        left: Box<ManifoldDescriptor>,
        right: Box<ManifoldDescriptor>,
    },
}

/// Orthonormal basis of a tangent space, stored column-wise.
#[derive(Debug, Clone)]
pub struct TangentFrame {
    pub base_point: Point,
    pub columns: DMatrix<f64>,
}

impl TangentFrame {
    /// Max deviation of `columns^T columns` from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.columns.transpose() * &self.columns;
        let r = g.nrows();
        let mut worst: f64 = 0.0;
        for i in 0..r {
            for j in 0..r {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - want).abs());
            }
        }
        worst
    }
}

impl ManifoldDescriptor {
    pub fn circle(radius: f64) -> Result<Self, ManifoldError> {
        if radius <= 0.0 {
            return Err(ManifoldError::InvalidParameter(format!(
                "circle radius {radius}"
            )));
        }
        Ok(Self::Circle { radius })
    }

    pub fn sphere(radius: f64) -> Result<Self, ManifoldError> {
        if radius <= 0.0 {
            return Err(ManifoldError::InvalidParameter(format!(
                "sphere radius {radius}"
            )));
        }
        Ok(Self::Sphere { radius })
    }

    pub fn flat_torus(lengths: Vec<f64>) -> Result<Self, ManifoldError> {
        if lengths.is_empty() || lengths.iter().any(|&l| l <= 0.0) {
            return Err(ManifoldError::InvalidParameter(
                "torus lengths must be positive".into(),
            ));
        }
        Ok(Self::FlatTorus { lengths })
    }

    pub fn interval_product(bounds: Vec<(f64, f64)>) -> Result<Self, ManifoldError> {
        if bounds.is_empty() || bounds.iter().any(|&(a, b)| b <= a) {
            return Err(ManifoldError::InvalidParameter(
                "interval bounds must satisfy a < b".into(),
            ));
        }
        Ok(Self::IntervalProduct { bounds })
    }

    pub fn product(left: ManifoldDescriptor, right: ManifoldDescriptor) -> Self {
        Self::Product {
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Unit sphere S^{p-1} as a descriptor (p = 2 or 3).
    pub fn unit_sphere_of_dim(p: usize) -> Result<Self, ManifoldError> {
        match p {
            2 => Self::circle(1.0),
            3 => Self::sphere(1.0),
            _ => Err(ManifoldError::UnsupportedSphereDim(p)),
        }
    }

    pub fn intrinsic_dim(&self) -> usize {
        match self {
            Self::Circle { .. } => 1,
            Self::Sphere { .. } => 2,
            Self::FlatTorus { lengths } => lengths.len(),
            Self::IntervalProduct { bounds } => bounds.len(),
            Self::Product { left, right } => left.intrinsic_dim() + right.intrinsic_dim(),
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            Self::Circle { .. } => 2,
            Self::Sphere { .. } => 3,
            Self::FlatTorus { lengths } => 2 * lengths.len(),
            Self::IntervalProduct { bounds } => bounds.len(),
            Self::Product { left, right } => left.ambient_dim() + right.ambient_dim(),
        }
    }

    /// Reach; interval products are convex, hence have infinite reach.
    pub fn reach(&self) -> f64 {
        match self {
            Self::Circle { radius } | Self::Sphere { radius } => *radius,
            Self::FlatTorus { lengths } => {
                lengths.iter().cloned().fold(f64::INFINITY, f64::min) / std::f64::consts::TAU
            }
            Self::IntervalProduct { .. } => f64::INFINITY,
            Self::Product { left, right } => left.reach().min(right.reach()),
        }
    }

    /// Intrinsic volume (r-dimensional Hausdorff measure), in closed form.
    pub fn volume(&self) -> f64 {
        match self {
            Self::Circle { radius } => std::f64::consts::TAU * radius,
            Self::Sphere { radius } => 4.0 * std::f64::consts::PI * radius * radius,
            Self::FlatTorus { lengths } => lengths.iter().product(),
            Self::IntervalProduct { bounds } => bounds.iter().map(|&(a, b)| b - a).product(),
            Self::Product { left, right } => left.volume() * right.volume(),
        }
    }

    /// Diameter of the factor in ambient distance (used by grid builders).
    pub fn ambient_diameter(&self) -> f64 {
        match self {
            Self::Circle { radius } | Self::Sphere { radius } => 2.0 * radius,
            Self::FlatTorus { lengths } => {
                let s: f64 = lengths
                    .iter()
                    .map(|l| (2.0 * l / std::f64::consts::TAU).powi(2))
                    .sum();
                s.sqrt()
            }
            Self::IntervalProduct { bounds } => bounds
                .iter()
                .map(|&(a, b)| (b - a).powi(2))
                .sum::<f64>()
                .sqrt(),
            Self::Product { left, right } => {
                (left.ambient_diameter().powi(2) + right.ambient_diameter().powi(2)).sqrt()
            }
        }
    }

    pub fn contains(&self, p: &Point, tol: f64) -> bool {
        self.off_manifold_distance(p)
            .map(|d| d <= tol)
            .unwrap_or(false)
    }

    /// Rough distance from the parametrized surface; exact for the built-in
    /// kinds.
    pub fn off_manifold_distance(&self, p: &Point) -> Result<f64, ManifoldError> {
        if p.len() != self.ambient_dim() {
            return Err(ManifoldError::AmbientDimMismatch {
                expected: self.ambient_dim(),
                got: p.len(),
            });
        }
        Ok(match self {
            Self::Circle { radius } => (p.norm() - radius).abs(),
            Self::Sphere { radius } => (p.norm() - radius).abs(),
            Self::FlatTorus { lengths } => {
                let mut worst: f64 = 0.0;
                for (i, l) in lengths.iter().enumerate() {
                    let r = l / std::f64::consts::TAU;
                    let nrm = (p[2 * i].powi(2) + p[2 * i + 1].powi(2)).sqrt();
                    worst = worst.max((nrm - r).abs());
                }
                worst
            }
            Self::IntervalProduct { bounds } => {
                let mut worst: f64 = 0.0;
                for (i, &(a, b)) in bounds.iter().enumerate() {
                    let d = if p[i] < a {
                        a - p[i]
                    } else if p[i] > b {
                        p[i] - b
                    } else {
                        0.0
                    };
                    worst = worst.max(d);
                }
                worst
            }
            Self::Product { left, right } => {
                let nl = left.ambient_dim();
                let pl = Point::from_iterator(nl, p.iter().take(nl).cloned());
                let pr = Point::from_iterator(p.len() - nl, p.iter().skip(nl).cloned());
                left.off_manifold_distance(&pl)?
                    .max(right.off_manifold_distance(&pr)?)
            }
        })
    }

    /// Orthonormal tangent frame at `t`, deterministic in `(self, t)`.
    ///
    /// Frames are continuous along the built-in parametrizations except at
    /// the sphere poles, where a fixed axis-aligned frame is used.
    pub fn tangent_frame(&self, t: &Point) -> Result<TangentFrame, ManifoldError> {
        let dist = self.off_manifold_distance(t)?;
        if dist > ON_MANIFOLD_TOL {
            return Err(ManifoldError::PointOffManifold {
                dist,
                tol: ON_MANIFOLD_TOL,
            });
        }
        let cols = self.frame_columns(t);
        Ok(TangentFrame {
            base_point: t.clone(),
            columns: cols,
        })
    }

    fn frame_columns(&self, t: &Point) -> DMatrix<f64> {
        match self {
            Self::Circle { .. } => {
                let nrm = t.norm();
                DMatrix::from_column_slice(2, 1, &[-t[1] / nrm, t[0] / nrm])
            }
            Self::Sphere { radius } => {
                let rho = *radius;
                let (x, y, z) = (t[0], t[1], t[2]);
                let sin_phi = (x * x + y * y).sqrt() / rho;
                if sin_phi < 1e-12 {
                    // pole: tangent plane is horizontal
                    return DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
                }
                let cos_phi = z / rho;
                let (cos_th, sin_th) = (x / (rho * sin_phi), y / (rho * sin_phi));
                DMatrix::from_column_slice(
                    3,
                    2,
                    &[
                        -sin_th,
                        cos_th,
                        0.0, // e_theta
                        cos_phi * cos_th,
                        cos_phi * sin_th,
                        -sin_phi, // e_phi
                    ],
                )
            }
            Self::FlatTorus { lengths } => {
                let d = lengths.len();
                let mut m = DMatrix::zeros(2 * d, d);
                for i in 0..d {
                    let nrm = (t[2 * i].powi(2) + t[2 * i + 1].powi(2)).sqrt();
                    m[(2 * i, i)] = -t[2 * i + 1] / nrm;
                    m[(2 * i + 1, i)] = t[2 * i] / nrm;
                }
                m
            }
            Self::IntervalProduct { bounds } => DMatrix::identity(bounds.len(), bounds.len()),
            Self::Product { left, right } => {
                let nl = left.ambient_dim();
                let rl = left.intrinsic_dim();
                let pl = Point::from_iterator(nl, t.iter().take(nl).cloned());
                let pr = Point::from_iterator(t.len() - nl, t.iter().skip(nl).cloned());
                let fl = left.frame_columns(&pl);
                let fr = right.frame_columns(&pr);
                let mut m = DMatrix::zeros(self.ambient_dim(), self.intrinsic_dim());
                m.view_mut((0, 0), (nl, rl)).copy_from(&fl);
                m.view_mut((nl, rl), (fr.nrows(), fr.ncols()))
                    .copy_from(&fr);
                m
            }
        }
    }

    /// Quadrature rule for the r-dimensional Hausdorff measure: tensorized
    /// trapezoid over the parameter domain with the metric Jacobian folded
    /// into the weights.
    pub fn quadrature(&self, resolution: usize) -> Result<(Vec<Point>, Vec<f64>), ManifoldError> {
        if resolution < 8 {
            return Err(ManifoldError::ResolutionTooSmall(resolution, 8));
        }
        Ok(match self {
            Self::Circle { radius } => {
                let n = resolution;
                let w = std::f64::consts::TAU * radius / n as f64;
                let mut pts = Vec::with_capacity(n);
                for i in 0..n {
                    let th = std::f64::consts::TAU * i as f64 / n as f64;
                    pts.push(Point::from_vec(vec![radius * th.cos(), radius * th.sin()]));
                }
                (pts, vec![w; n])
            }
            Self::Sphere { radius } => {
                // latitude trapezoid x periodic longitude midpoints
                let n_phi = resolution;
                let n_th = 2 * resolution;
                let d_phi = std::f64::consts::PI / n_phi as f64;
                let d_th = std::f64::consts::TAU / n_th as f64;
                let mut pts = Vec::new();
                let mut wts = Vec::new();
                for j in 0..=n_phi {
                    let phi = j as f64 * d_phi;
                    let w_phi = if j == 0 || j == n_phi { 0.5 } else { 1.0 };
                    let (sp, cp) = (phi.sin(), phi.cos());
                    for i in 0..n_th {
                        let th = i as f64 * d_th;
                        pts.push(Point::from_vec(vec![
                            radius * sp * th.cos(),
                            radius * sp * th.sin(),
                            radius * cp,
                        ]));
                        wts.push(radius * radius * sp * w_phi * d_phi * d_th);
                    }
                }
                (pts, wts)
            }
            Self::FlatTorus { lengths } => {
                let factors: Vec<ManifoldDescriptor> = lengths
                    .iter()
                    .map(|l| ManifoldDescriptor::Circle {
                        radius: l / std::f64::consts::TAU,
                    })
                    .collect();
                tensor_quadrature(&factors, resolution)?
            }
            Self::IntervalProduct { bounds } => {
                let mut pts = vec![Point::zeros(0)];
                let mut wts = vec![1.0];
                for &(a, b) in bounds {
                    let n = resolution;
                    let h = (b - a) / n as f64;
                    let mut new_pts = Vec::with_capacity(pts.len() * (n + 1));
                    let mut new_wts = Vec::with_capacity(pts.len() * (n + 1));
                    for (p, w) in pts.iter().zip(&wts) {
                        for i in 0..=n {
                            let x = a + i as f64 * h;
                            let wi = if i == 0 || i == n { 0.5 } else { 1.0 } * h;
                            let mut v = p.iter().cloned().collect::<Vec<_>>();
                            v.push(x);
                            new_pts.push(Point::from_vec(v));
                            new_wts.push(w * wi);
                        }
                    }
                    pts = new_pts;
                    wts = new_wts;
                }
                (pts, wts)
            }
            Self::Product { left, right } => {
                tensor_quadrature(&[(**left).clone(), (**right).clone()], resolution)?
            }
        })
    }

    /// Dense quasi-uniform sample (the quadrature nodes).
    pub fn sample_points(&self, resolution: usize) -> Result<Vec<Point>, ManifoldError> {
        Ok(self.quadrature(resolution)?.0)
    }

    /// Worst-case nearest-neighbor spacing of `sample_points(resolution)`,
    /// in closed form per kind.
    pub fn sample_spacing(&self, resolution: usize) -> f64 {
        match self {
            Self::Circle { radius } => std::f64::consts::TAU * radius / resolution as f64,
            Self::Sphere { radius } => std::f64::consts::PI * radius / resolution as f64,
            Self::FlatTorus { lengths } => {
                lengths.iter().cloned().fold(0.0f64, f64::max) / resolution as f64
            }
            Self::IntervalProduct { bounds } => bounds
                .iter()
                .map(|&(a, b)| (b - a) / resolution as f64)
                .fold(0.0f64, f64::max),
            Self::Product { left, right } => left
                .sample_spacing(resolution)
                .max(right.sample_spacing(resolution)),
        }
    }

    /// Points stepped along the parametrization at (approximately) the
    /// requested arc-length spacing. Returns `(points, actual_spacing,
    /// fell_back_to_single_point)`.
    pub fn grid_at_spacing(&self, spacing: f64) -> Result<(Vec<Point>, f64, bool), ManifoldError> {
        if spacing <= 0.0 || !spacing.is_finite() {
            return Err(ManifoldError::InvalidParameter(format!(
                "grid spacing {spacing}"
            )));
        }
        Ok(match self {
            Self::Circle { radius } => {
                let len = std::f64::consts::TAU * radius;
                if spacing > self.ambient_diameter() {
                    (vec![Point::from_vec(vec![*radius, 0.0])], len, true)
                } else {
                    let n = (len / spacing).round().max(1.0) as usize;
                    let pts = (0..n)
                        .map(|i| {
                            let th = std::f64::consts::TAU * i as f64 / n as f64;
                            Point::from_vec(vec![radius * th.cos(), radius * th.sin()])
                        })
                        .collect();
                    (pts, len / n as f64, false)
                }
            }
            Self::Sphere { radius } => {
                if spacing > self.ambient_diameter() {
                    (
                        vec![Point::from_vec(vec![0.0, 0.0, *radius])],
                        2.0 * radius,
                        true,
                    )
                } else {
                    // latitude rows at the requested spacing, row point
                    // counts scaled by sin(phi)
                    let n_phi = ((std::f64::consts::PI * radius / spacing).round() as usize).max(2);
                    let mut pts = Vec::new();
                    for j in 0..=n_phi {
                        let phi = std::f64::consts::PI * j as f64 / n_phi as f64;
                        let circ = std::f64::consts::TAU * radius * phi.sin();
                        let n_th = ((circ / spacing).round() as usize).max(1);
                        for i in 0..n_th {
                            let th = std::f64::consts::TAU * i as f64 / n_th as f64;
                            pts.push(Point::from_vec(vec![
                                radius * phi.sin() * th.cos(),
                                radius * phi.sin() * th.sin(),
                                radius * phi.cos(),
                            ]));
                        }
                    }
                    (pts, std::f64::consts::PI * radius / n_phi as f64, false)
                }
            }
            Self::FlatTorus { lengths } => {
                let factors: Vec<ManifoldDescriptor> = lengths
                    .iter()
                    .map(|l| ManifoldDescriptor::Circle {
                        radius: l / std::f64::consts::TAU,
                    })
                    .collect();
                let mut grids = Vec::new();
                let mut actual: f64 = 0.0;
                let mut fell = false;
                for f in &factors {
                    let (g, a, fb) = f.grid_at_spacing(spacing)?;
                    actual = actual.max(a);
                    fell |= fb;
                    grids.push(g);
                }
                (product_points(&grids), actual, fell)
            }
            Self::IntervalProduct { bounds } => {
                let mut grids = Vec::new();
                let mut actual: f64 = 0.0;
                let mut fell = false;
                for &(a, b) in bounds {
                    let len = b - a;
                    if spacing > len {
                        grids.push(vec![Point::from_vec(vec![(a + b) / 2.0])]);
                        actual = actual.max(len);
                        fell = true;
                    } else {
                        let n = (len / spacing).round().max(1.0) as usize;
                        grids.push(
                            (0..=n)
                                .map(|i| Point::from_vec(vec![a + len * i as f64 / n as f64]))
                                .collect(),
                        );
                        actual = actual.max(len / n as f64);
                    }
                }
                (product_points(&grids), actual, fell)
            }
            Self::Product { left, right } => {
                let (gl, al, fl) = left.grid_at_spacing(spacing)?;
                let (gr, ar, fr) = right.grid_at_spacing(spacing)?;
                (product_points(&[gl, gr]), al.max(ar), fl || fr)
            }
        })
    }
}

/// Concatenate factor points into product points (row-major over factors).
pub fn product_points(factor_grids: &[Vec<Point>]) -> Vec<Point> {
    let mut acc: Vec<Vec<f64>> = vec![Vec::new()];
    for grid in factor_grids {
        let mut next = Vec::with_capacity(acc.len() * grid.len());
        for prefix in &acc {
            for p in grid {
                let mut v = prefix.clone();
                v.extend(p.iter());
                next.push(v);
            }
        }
        acc = next;
    }
    acc.into_iter().map(Point::from_vec).collect()
}

fn tensor_quadrature(
    factors: &[ManifoldDescriptor],
    resolution: usize,
) -> Result<(Vec<Point>, Vec<f64>), ManifoldError> {
    let mut pts: Vec<Vec<f64>> = vec![Vec::new()];
    let mut wts: Vec<f64> = vec![1.0];
    for f in factors {
        let (fp, fw) = f.quadrature(resolution)?;
        let mut np = Vec::with_capacity(pts.len() * fp.len());
        let mut nw = Vec::with_capacity(pts.len() * fp.len());
        for (prefix, w) in pts.iter().zip(&wts) {
            for (p, wf) in fp.iter().zip(&fw) {
                let mut v = prefix.clone();
                v.extend(p.iter());
                np.push(v);
                nw.push(w * wf);
            }
        }
        pts = np;
        wts = nw;
    }
    Ok((pts.into_iter().map(Point::from_vec).collect(), wts))
}

/// Quadrature approximation of the Hausdorff integral of `f` over `m`.
pub fn hausdorff_integral<F: Fn(&Point) -> f64>(
    m: &ManifoldDescriptor,
    f: F,
    resolution: usize,
) -> Result<f64, ManifoldError> {
    let (pts, wts) = m.quadrature(resolution)?;
    Ok(pts.iter().zip(&wts).map(|(p, w)| f(p) * w).sum())
}

/// Quasi-uniform grid on the unit sphere S^{p-1}: uniform angles for p = 2,
/// Fibonacci lattice for p = 3.
pub fn sphere_grid(p: usize, resolution: usize) -> Result<Vec<Point>, ManifoldError> {
    if resolution == 0 {
        return Err(ManifoldError::ResolutionTooSmall(0, 1));
    }
    match p {
        1 => Ok(vec![
            Point::from_vec(vec![1.0]),
            Point::from_vec(vec![-1.0]),
        ]),
        2 => Ok((0..resolution)
            .map(|i| {
                let th = std::f64::consts::TAU * i as f64 / resolution as f64;
                Point::from_vec(vec![th.cos(), th.sin()])
            })
            .collect()),
        3 => {
            let golden = (1.0 + 5.0f64.sqrt()) / 2.0;
            Ok((0..resolution)
                .map(|i| {
                    let z = 1.0 - (2.0 * i as f64 + 1.0) / resolution as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let th = std::f64::consts::TAU * i as f64 / golden;
                    let mut v = Point::from_vec(vec![r * th.cos(), r * th.sin(), z]);
                    v /= v.norm();
                    v
                })
                .collect())
        }
        _ => Err(ManifoldError::UnsupportedSphereDim(p)),
    }
}

/// Surface area of the unit sphere S^{p-1}.
pub fn sphere_area(p: usize) -> f64 {
    // A_{p-1} = p * B_p with B_p the unit p-ball volume
    p as f64 * crate::math::unit_ball_volume(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn circle_tangent_at_angle_zero() {
        let m = ManifoldDescriptor::circle(1.0).unwrap();
        let f = m.tangent_frame(&Point::from_vec(vec![1.0, 0.0])).unwrap();
        assert!((f.columns[(0, 0)].abs() - 0.0).abs() < 1e-12);
        assert!((f.columns[(1, 0)].abs() - 1.0).abs() < 1e-12);
        assert!(f.orthonormality_defect() < 1e-10);
    }

    #[test]
    fn sphere_frame_at_north_pole() {
        let m = ManifoldDescriptor::sphere(1.0).unwrap();
        let f = m
            .tangent_frame(&Point::from_vec(vec![0.0, 0.0, 1.0]))
            .unwrap();
        assert!(f.orthonormality_defect() < 1e-10);
        for c in 0..2 {
            assert!(f.columns[(2, c)].abs() < 1e-12);
        }
    }

    #[test]
    fn product_frame_is_block_diagonal() {
        let m = ManifoldDescriptor::product(
            ManifoldDescriptor::circle(1.0).unwrap(),
            ManifoldDescriptor::circle(2.0).unwrap(),
        );
        let p = Point::from_vec(vec![1.0, 0.0, 0.0, 2.0]);
        let f = m.tangent_frame(&p).unwrap();
        assert!(f.orthonormality_defect() < 1e-10);
        assert!(f.columns[(2, 0)].abs() < 1e-12 && f.columns[(3, 0)].abs() < 1e-12);
        assert!(f.columns[(0, 1)].abs() < 1e-12 && f.columns[(1, 1)].abs() < 1e-12);
    }

    #[test]
    fn off_manifold_point_is_rejected() {
        let m = ManifoldDescriptor::circle(1.0).unwrap();
        let e = m.tangent_frame(&Point::from_vec(vec![1.1, 0.0]));
        assert!(matches!(e, Err(ManifoldError::PointOffManifold { .. })));
    }

    #[test]
    fn circle_circumference() {
        let m = ManifoldDescriptor::circle(1.0).unwrap();
        let v = hausdorff_integral(&m, |_| 1.0, 1024).unwrap();
        assert!(close(v, std::f64::consts::TAU, 1e-6));
    }

    #[test]
    fn sphere_area_quadrature() {
        let m = ManifoldDescriptor::sphere(1.0).unwrap();
        let v = hausdorff_integral(&m, |_| 1.0, 64).unwrap();
        assert!(close(v, 4.0 * std::f64::consts::PI, 1e-3));
        let v512 = hausdorff_integral(&m, |_| 1.0, 512).unwrap();
        assert!(close(v512, 4.0 * std::f64::consts::PI, 1e-3 * 0.1));
    }

    #[test]
    fn cosine_squared_integral_on_radius_two_circle() {
        let m = ManifoldDescriptor::circle(2.0).unwrap();
        let v = hausdorff_integral(&m, |p| (p[0] / 2.0).powi(2), 512).unwrap();
        assert!(close(v, std::f64::consts::TAU, 1e-9));
    }

    #[test]
    fn product_volume_fubini() {
        let m = ManifoldDescriptor::product(
            ManifoldDescriptor::circle(1.0).unwrap(),
            ManifoldDescriptor::circle(2.0).unwrap(),
        );
        let v = hausdorff_integral(&m, |_| 1.0, 64).unwrap();
        let expect = std::f64::consts::TAU * std::f64::consts::TAU * 2.0;
        assert!((v - expect).abs() < 0.005 * expect);
    }

    #[test]
    fn volumes_match_quadrature_within_point_one_percent() {
        for m in [
            ManifoldDescriptor::circle(1.5).unwrap(),
            ManifoldDescriptor::sphere(1.0).unwrap(),
            ManifoldDescriptor::flat_torus(vec![1.0, 2.0]).unwrap(),
        ] {
            let v = hausdorff_integral(&m, |_| 1.0, 512).unwrap();
            assert!(
                (v - m.volume()).abs() < 1e-3 * m.volume(),
                "{m:?}: {v} vs {}",
                m.volume()
            );
        }
    }

    #[test]
    fn sphere_grid_p2_uniform_angles() {
        let g = sphere_grid(2, 4).unwrap();
        assert_eq!(g.len(), 4);
        let expect = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)];
        for (p, (x, y)) in g.iter().zip(expect) {
            assert!((p[0] - x).abs() < 1e-12 && (p[1] - y).abs() < 1e-12);
        }
    }

    #[test]
    fn sphere_grid_p3_unit_norm_and_coverage() {
        let g = sphere_grid(3, 100).unwrap();
        assert_eq!(g.len(), 100);
        for p in &g {
            assert!((p.norm() - 1.0).abs() < 1e-12);
        }
        // brute-force max nearest-neighbor gap
        let mut worst: f64 = 0.0;
        for (i, p) in g.iter().enumerate() {
            let mut best = f64::INFINITY;
            for (j, q) in g.iter().enumerate() {
                if i != j {
                    best = best.min((p - q).norm());
                }
            }
            worst = worst.max(best);
        }
        assert!(worst < 0.5, "max NN gap {worst}");
    }

    #[test]
    fn sphere_grid_unsupported_dim() {
        assert!(matches!(
            sphere_grid(4, 10),
            Err(ManifoldError::UnsupportedSphereDim(4))
        ));
    }

    #[test]
    fn frames_vary_continuously_along_circle() {
        let m = ManifoldDescriptor::circle(1.0).unwrap();
        let pts = m.sample_points(256).unwrap();
        for w in pts.windows(2) {
            let f0 = m.tangent_frame(&w[0]).unwrap();
            let f1 = m.tangent_frame(&w[1]).unwrap();
            assert!((&f1.columns - &f0.columns).norm() < 0.1);
        }
    }

    #[test]
    fn grid_at_spacing_counts() {
        let m = ManifoldDescriptor::circle(1.0).unwrap();
        let (pts, actual, fell) = m.grid_at_spacing(0.1).unwrap();
        assert_eq!(pts.len(), 63);
        assert!(!fell);
        assert!((actual - std::f64::consts::TAU / 63.0).abs() < 1e-12);
        let (pts1, _, fell1) = m.grid_at_spacing(10.0).unwrap();
        assert_eq!(pts1.len(), 1);
        assert!(fell1);
    }

    #[test]
    fn unit_sphere_areas() {
        assert!((sphere_area(2) - std::f64::consts::TAU).abs() < 1e-12);
        assert!((sphere_area(3) - 4.0 * std::f64::consts::PI).abs() < 1e-12);
        assert!((sphere_area(1) - 2.0).abs() < 1e-12);
    }
}
