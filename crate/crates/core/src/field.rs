//! Locally stationary covariance kernels and exact Gaussian field
//! simulation on finite grids.
//!
//! The canonical kernel family is `r(t,s) = exp(-|D((t+s)/2) (t-s)|_{E,alpha})`
//! with a block-diagonal matrix field `D`; for constant `D` and
//! `alpha_i` in `(0,2]` this is a valid stationary kernel (powered
//! exponential per block). Rescaling by `h` enters only through the point
//! geometry: the difference vector has its first block divided by `h`
//! before the kernel sees it, while `D` is evaluated at the unrescaled
//! midpoint.
//!
//! Sampling is exact: dense Cholesky when possible, with a `1e-10` jitter
//! retry, then a symmetric-eigendecomposition fallback that clips negative
//! eigenvalues at zero and reports the clipped mass. Grids are capped at
//! 4096 points. Replication `i` of a run with seed `s` draws from ChaCha12
//! stream `i` of seed `s`, so results are independent of thread count.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::sync::Arc;
use thiserror::Error;

use crate::manifold::Point;
use crate::math::{structure_module, Structure};
use crate::rng::replication_rng;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid kernel ({family}): covariance matrix has smallest eigenvalue {lambda_min:.3e} < -1e-8")]
    InvalidKernel { family: String, lambda_min: f64 },
    #[error("matrix factorization failed after the eigen fallback")]
    FactorizationFailed,
    #[error("grid has {got} points, dense factorization is capped at {cap}")]
    GridTooLarge { got: usize, cap: usize },
    #[error(
        "materialized sample of {values} values exceeds the cap {cap}; use the streaming driver"
    )]
    SampleTooLarge { values: usize, cap: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("cross-covariance dominance violated for component {component}: lambda_min(A^ii) = {diag:.4} <= {offdiag:.4}")]
    DominanceViolated {
        component: usize,
        diag: f64,
        offdiag: f64,
    },
    #[error(transparent)]
    Math(#[from] crate::math::MathError),
}

/// Dense factorization cap (points per grid).
pub const MAX_DENSE_POINTS: usize = 4096;
/// Cap on materialized sample values (`n_reps * n_points`).
pub const MAX_SAMPLE_VALUES: usize = 1 << 24;
const JITTER: f64 = 1e-10;
const EIGEN_FLOOR: f64 = -1e-8;

/// Evaluator for position-dependent block matrices.
pub type DFieldFn = dyn Fn(&Point) -> Vec<DMatrix<f64>> + Send + Sync;

/// Block-diagonal matrix field `t -> D_t`.
#[derive(Clone)]
pub enum DField {
    /// `D_{i,t} = c_i I` per block, constant in `t`.
    ScalarPerBlock(Vec<f64>),
    /// Constant per-block matrices.
    MatrixPerBlock(Vec<DMatrix<f64>>),
    /// Arbitrary continuous field, evaluated at ambient points.
    Function(Arc<DFieldFn>),
}

impl std::fmt::Debug for DField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::ScalarPerBlock(c) => write!(f, "ScalarPerBlock({c:?})"),
            Self::MatrixPerBlock(m) => write!(f, "MatrixPerBlock({} blocks)", m.len()),
            Self::Function(_) => write!(f, "Function"),
        }
    }
}

impl DField {
    /// Per-block matrices at `t` (sizes `e_i x e_i`).
    pub fn blocks_at(&self, s: &Structure, t: &Point) -> Vec<DMatrix<f64>> {
        match self {
            Self::ScalarPerBlock(c) => s
                .block_sizes()
                .iter()
                .zip(c)
                .map(|(&e, &ci)| DMatrix::identity(e, e) * ci)
                .collect(),
            Self::MatrixPerBlock(m) => m.clone(),
            Self::Function(f) => f(t),
        }
    }
}

#[derive(Debug, Clone)]
enum KernelKind {
    PoweredExponential,
    /// `r((s1,v1),(s2,v2)) = r_base(s1,s2) * <v1,v2>` on `L x S^{p-1}`.
    ChiLift {
        base: Box<CovarianceModel>,
        p: usize,
    },
    /// Example-(ii)-style vector cross-covariances, lifted to `L x S^{p-1}`.
    CrossCov {
        a: Vec<Vec<DMatrix<f64>>>,
        p: usize,
    },
}

/// A locally stationary covariance kernel with its block-diagonal matrix
/// field.
#[derive(Debug, Clone)]
pub struct CovarianceModel {
    structure: Structure,
    d_field: DField,
    kind: KernelKind,
    rescale_h: Option<f64>,
}

impl CovarianceModel {
    /// `r(t,s) = exp(-|D((t+s)/2)(t-s)|_{E,alpha})`.
    pub fn powered_exponential(structure: Structure, d_field: DField) -> Result<Self, FieldError> {
        if let DField::ScalarPerBlock(c) = &d_field {
            if c.len() != structure.block_count() {
                return Err(FieldError::DimensionMismatch(format!(
                    "{} scalars for {} blocks",
                    c.len(),
                    structure.block_count()
                )));
            }
            if c.iter().any(|&x| x <= 0.0) {
                return Err(FieldError::InvalidParameter(
                    "D scalars must be positive".into(),
                ));
            }
        }
        Ok(Self {
            structure,
            d_field,
            kind: KernelKind::PoweredExponential,
            rescale_h: None,
        })
    }

    /// Lift of `p` i.i.d. copies of a base scalar field to `L x S^{p-1}`.
    ///
    /// The lifted structure is `E = {n, p}`, `alpha = {alpha, 2}`,
    /// `D = diag(B, I/sqrt(2))`.
    pub fn chi_lift(base: CovarianceModel, p: usize) -> Result<Self, FieldError> {
        if p < 1 {
            return Err(FieldError::InvalidParameter("chi lift needs p >= 1".into()));
        }
        if base.structure.block_count() != 1 {
            return Err(FieldError::InvalidParameter(
                "chi lift expects a single-block base field".into(),
            ));
        }
        let n = base.structure.ambient_dim();
        let m = base.structure.manifold_dim();
        let alpha = base.structure.exponents()[0];
        let structure = Structure::new(vec![n, p], vec![alpha, 2.0], vec![m, p - 1])?;
        let base_scalar = match &base.d_field {
            DField::ScalarPerBlock(c) => c[0],
            _ => 1.0,
        };
        let d_field = DField::ScalarPerBlock(vec![base_scalar, 1.0 / 2.0f64.sqrt()]);
        Ok(Self {
            structure,
            d_field,
            kind: KernelKind::ChiLift {
                base: Box::new(base),
                p,
            },
            rescale_h: None,
        })
    }

    /// Vector field with cross-covariances
    /// `Cov(X_i(s1), X_j(s2)) = delta_ij exp(-u^T A^ii u) - (1-delta_ij) u^T A^ij u exp(-u^T u)`
    /// (u = s1 - s2), lifted to `L x S^{p-1}`. Requires the eigenvalue
    /// dominance condition `lambda_min(A^ii) > sum_{j != i} |lambda_min(A^ij)|`.
    pub fn cross_covariance(
        base_structure: Structure,
        a: Vec<Vec<DMatrix<f64>>>,
    ) -> Result<Self, FieldError> {
        let p = a.len();
        if p == 0 || a.iter().any(|row| row.len() != p) {
            return Err(FieldError::InvalidParameter(
                "A must be a p x p matrix family".into(),
            ));
        }
        let n = base_structure.ambient_dim();
        for row in &a {
            for m in row {
                if m.nrows() != n || m.ncols() != n {
                    return Err(FieldError::DimensionMismatch(format!(
                        "A blocks must be {n} x {n}"
                    )));
                }
            }
        }
        for (i, row) in a.iter().enumerate() {
            let diag = smallest_eigenvalue(&row[i]);
            let offdiag: f64 = row
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, m)| smallest_eigenvalue(m).abs())
                .sum();
            if diag <= offdiag {
                return Err(FieldError::DominanceViolated {
                    component: i,
                    diag,
                    offdiag,
                });
            }
        }
        let m = base_structure.manifold_dim();
        let alpha = base_structure.exponents()[0];
        let structure = Structure::new(vec![n, p], vec![alpha, 2.0], vec![m, p - 1])?;
        let d_field = DField::ScalarPerBlock(vec![1.0, 1.0 / 2.0f64.sqrt()]);
        Ok(Self {
            structure,
            d_field,
            kind: KernelKind::CrossCov { a, p },
            rescale_h: None,
        })
    }

    /// Set the rescaling: the first block of every difference vector is
    /// divided by `h` before the kernel is evaluated. On a chi lift the
    /// first block is the base manifold, so the rescale propagates to the
    /// base field while the sphere block stays untouched.
    pub fn with_rescale(mut self, h: f64) -> Result<Self, FieldError> {
        if !(h > 0.0 && h <= 1.0) {
            return Err(FieldError::InvalidParameter(format!(
                "rescale h = {h} not in (0,1]"
            )));
        }
        self.rescale_h = Some(h);
        if let KernelKind::ChiLift { base, .. } = &mut self.kind {
            base.rescale_h = Some(h);
        }
        Ok(self)
    }

    pub fn structure(&self) -> &Structure {
        &self.structure
    }

    pub fn d_field(&self) -> &DField {
        &self.d_field
    }

    pub fn rescale_h(&self) -> Option<f64> {
        self.rescale_h
    }

    pub fn family_name(&self) -> &'static str {
        match self.kind {
            KernelKind::PoweredExponential => "powered_exponential",
            KernelKind::ChiLift { .. } => "chi_lift",
            KernelKind::CrossCov { .. } => "custom_crosscov",
        }
    }

    fn rescaled_difference(&self, a: &Point, b: &Point) -> DVector<f64> {
        let mut u = a - b;
        if let Some(h) = self.rescale_h {
            for idx in self.structure.block_range(0) {
                u[idx] /= h;
            }
        }
        u
    }

    /// Correlation between the field at `a` and at `b`.
    pub fn correlation(&self, a: &Point, b: &Point) -> f64 {
        match &self.kind {
            KernelKind::PoweredExponential => {
                let u = self.rescaled_difference(a, b);
                let mid = (a + b) / 2.0;
                let blocks = self.d_field.blocks_at(&self.structure, &mid);
                let mut module = 0.0;
                for (i, d) in blocks.iter().enumerate() {
                    let range = self.structure.block_range(i);
                    let ub =
                        DVector::from_iterator(range.len(), u.as_slice()[range].iter().cloned());
                    let du = d * ub;
                    module += du.norm().powf(self.structure.exponents()[i]);
                }
                (-module).exp()
            }
            KernelKind::ChiLift { base, p } => {
                let ns = base.structure.ambient_dim();
                let (s1, v1) = split_point(a, ns, *p);
                let (s2, v2) = split_point(b, ns, *p);
                base.correlation(&s1, &s2) * v1.dot(&v2)
            }
            KernelKind::CrossCov { a: mats, p } => {
                let n = self.structure.block_sizes()[0];
                let (s1, v1) = split_point(a, n, *p);
                let (s2, v2) = split_point(b, n, *p);
                let mut u = &s1 - &s2;
                if let Some(h) = self.rescale_h {
                    u /= h;
                }
                let damp = (-u.dot(&u)).exp();
                let mut r = 0.0;
                for i in 0..*p {
                    for j in 0..*p {
                        let cij = if i == j {
                            (-(mats[i][i].clone() * &u).dot(&u)).exp()
                        } else {
                            -(mats[i][j].clone() * &u).dot(&u) * damp
                        };
                        r += cij * v1[i] * v2[j];
                    }
                }
                r
            }
        }
    }

    /// Structure module `|D_t u|_{E,alpha}` with `D` evaluated at `t`.
    pub fn local_module(&self, t: &Point, u: &DVector<f64>) -> Result<f64, FieldError> {
        let blocks = self.d_field.blocks_at(&self.structure, t);
        let mut parts = Vec::with_capacity(self.structure.ambient_dim());
        for (i, d) in blocks.iter().enumerate() {
            let range = self.structure.block_range(i);
            let ub = DVector::from_iterator(range.len(), u.as_slice()[range].iter().cloned());
            let du = d * ub;
            parts.extend(du.iter().cloned());
        }
        Ok(structure_module(&parts, &self.structure)?)
    }
}

fn split_point(t: &Point, n: usize, p: usize) -> (Point, Point) {
    debug_assert_eq!(t.len(), n + p);
    (
        Point::from_iterator(n, t.iter().take(n).cloned()),
        Point::from_iterator(p, t.iter().skip(n).cloned()),
    )
}

fn smallest_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) / 2.0;
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Covariance matrix of the model on a point list: symmetric, unit
/// diagonal.
pub fn covariance_matrix(
    model: &CovarianceModel,
    points: &[Point],
) -> Result<DMatrix<f64>, FieldError> {
    if points.len() > MAX_DENSE_POINTS {
        return Err(FieldError::GridTooLarge {
            got: points.len(),
            cap: MAX_DENSE_POINTS,
        });
    }
    let n = points.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = 1.0;
        for j in (i + 1)..n {
            let r = model.correlation(&points[i], &points[j]);
            if !r.is_finite() || r.abs() > 1.0 + 1e-10 {
                return Err(FieldError::InvalidKernel {
                    family: model.family_name().into(),
                    lambda_min: r,
                });
            }
            m[(i, j)] = r;
            m[(j, i)] = r;
        }
    }
    Ok(m)
}

/// Square-root factor of a covariance matrix.
pub struct Factorization {
    kind: FactorKind,
    pub jitter: f64,
    pub clip_mass: f64,
    dim: usize,
    noise_dim: usize,
}

enum FactorKind {
    Cholesky(DMatrix<f64>),
    Eigen(DMatrix<f64>),
}

impl Factorization {
    /// Cholesky with jitter retry, then symmetric-eigen with negative
    /// eigenvalues clipped at zero. Refuses matrices whose smallest
    /// eigenvalue is below `-1e-8`.
    pub fn new(matrix: DMatrix<f64>, family: &str) -> Result<Self, FieldError> {
        let dim = matrix.nrows();
        if dim > MAX_DENSE_POINTS {
            return Err(FieldError::GridTooLarge {
                got: dim,
                cap: MAX_DENSE_POINTS,
            });
        }
        if let Some(chol) = Cholesky::new(matrix.clone()) {
            return Ok(Self {
                kind: FactorKind::Cholesky(chol.unpack()),
                jitter: 0.0,
                clip_mass: 0.0,
                dim,
                noise_dim: dim,
            });
        }
        let jittered = &matrix + DMatrix::identity(dim, dim) * JITTER;
        if let Some(chol) = Cholesky::new(jittered) {
            return Ok(Self {
                kind: FactorKind::Cholesky(chol.unpack()),
                jitter: JITTER,
                clip_mass: 0.0,
                dim,
                noise_dim: dim,
            });
        }
        let eig = SymmetricEigen::new(matrix);
        let lambda_min = eig
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if lambda_min < EIGEN_FLOOR {
            return Err(FieldError::InvalidKernel {
                family: family.into(),
                lambda_min,
            });
        }
        let total: f64 = eig.eigenvalues.iter().map(|l| l.abs()).sum();
        let clipped: f64 = eig
            .eigenvalues
            .iter()
            .filter(|&&l| l < 0.0)
            .map(|l| -l)
            .sum();
        // numerical-rank truncation: modes below dim * lambda_max * eps are
        // round-off, not signal
        let lambda_max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        let cutoff = dim as f64 * lambda_max * f64::EPSILON;
        let kept: Vec<usize> = (0..dim).filter(|&j| eig.eigenvalues[j] > cutoff).collect();
        let mut basis = DMatrix::zeros(dim, kept.len());
        for (col, &j) in kept.iter().enumerate() {
            let s = eig.eigenvalues[j].sqrt();
            for i in 0..dim {
                basis[(i, col)] = eig.eigenvectors[(i, j)] * s;
            }
        }
        Ok(Self {
            noise_dim: basis.ncols(),
            kind: FactorKind::Eigen(basis),
            jitter: 0.0,
            clip_mass: if total > 0.0 { clipped / total } else { 0.0 },
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of standard normals consumed per replication (the rank of
    /// the retained factor).
    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    /// `out = F z` for a fresh standard normal `z` drawn from `rng`.
    pub fn sample_into(&self, rng: &mut impl Rng, z: &mut DVector<f64>, out: &mut DVector<f64>) {
        debug_assert_eq!(z.len(), self.noise_dim);
        debug_assert_eq!(out.len(), self.dim);
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        if self.noise_dim == 0 {
            out.fill(0.0);
            return;
        }
        let m = match &self.kind {
            FactorKind::Cholesky(l) => l,
            FactorKind::Eigen(b) => b,
        };
        out.gemv(1.0, m, z, 0.0);
    }
}

/// Map every replication through `f` in parallel, collecting results in
/// replication order (thread-count invariant).
pub fn sample_replications<T, F>(fact: &Factorization, n_reps: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &DVector<f64>) -> T + Sync,
{
    let n = fact.dim();
    (0..n_reps)
        .into_par_iter()
        .map_init(
            || (DVector::zeros(fact.noise_dim()), DVector::zeros(n)),
            |(z, out), rep| {
                let mut rng = replication_rng(seed, rep as u64);
                fact.sample_into(&mut rng, z, out);
                f(rep, out)
            },
        )
        .collect()
}

/// Multi-component variant: component `j` of replication `i` uses stream
/// `i * p + j`.
pub fn sample_vector_replications<T, F>(
    fact: &Factorization,
    p: usize,
    n_reps: usize,
    seed: u64,
    f: F,
) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &[DVector<f64>]) -> T + Sync,
{
    let n = fact.dim();
    (0..n_reps)
        .into_par_iter()
        .map_init(
            || (DVector::zeros(fact.noise_dim()), vec![DVector::zeros(n); p]),
            |(z, comps), rep| {
                for (j, comp) in comps.iter_mut().enumerate() {
                    let mut rng = replication_rng(seed, (rep * p + j) as u64);
                    fact.sample_into(&mut rng, z, comp);
                }
                f(rep, comps)
            },
        )
        .collect()
}

/// A materialized set of field draws, replication-major.
#[derive(Debug, Clone)]
pub struct FieldSample {
    pub points: Vec<Point>,
    pub n_reps: usize,
    pub n_points: usize,
    pub seed: u64,
    pub jitter: f64,
    pub clip_mass: f64,
    values: Vec<f64>,
}

impl FieldSample {
    pub fn value(&self, rep: usize, point: usize) -> f64 {
        self.values[rep * self.n_points + point]
    }

    /// Export as CSV rows `rep,point_index,value`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "rep,point_index,value")?;
        for rep in 0..self.n_reps {
            for point in 0..self.n_points {
                writeln!(w, "{},{},{}", rep, point, self.value(rep, point))?;
            }
        }
        Ok(())
    }

    pub fn replication(&self, rep: usize) -> &[f64] {
        &self.values[rep * self.n_points..(rep + 1) * self.n_points]
    }

    pub fn empirical_mean(&self, point: usize) -> f64 {
        (0..self.n_reps).map(|r| self.value(r, point)).sum::<f64>() / self.n_reps as f64
    }

    pub fn empirical_covariance(&self, i: usize, j: usize) -> f64 {
        let (mi, mj) = (self.empirical_mean(i), self.empirical_mean(j));
        (0..self.n_reps)
            .map(|r| (self.value(r, i) - mi) * (self.value(r, j) - mj))
            .sum::<f64>()
            / (self.n_reps - 1) as f64
    }
}

/// Draw `n_reps` exact replications of the centered field on `points`.
pub fn sample_field(
    model: &CovarianceModel,
    points: &[Point],
    n_reps: usize,
    seed: u64,
) -> Result<FieldSample, FieldError> {
    if n_reps == 0 {
        return Err(FieldError::InvalidParameter("n_reps must be >= 1".into()));
    }
    let total = n_reps * points.len();
    if total > MAX_SAMPLE_VALUES {
        return Err(FieldError::SampleTooLarge {
            values: total,
            cap: MAX_SAMPLE_VALUES,
        });
    }
    let cov = covariance_matrix(model, points)?;
    let fact = Factorization::new(cov, model.family_name())?;
    let rows = sample_replications(&fact, n_reps, seed, |_, x| x.as_slice().to_vec());
    let mut values = Vec::with_capacity(total);
    for row in rows {
        values.extend(row);
    }
    Ok(FieldSample {
        points: points.to_vec(),
        n_reps,
        n_points: points.len(),
        seed,
        jitter: fact.jitter,
        clip_mass: fact.clip_mass,
        values,
    })
}

/// `p` independent copies of the base field on a shared grid.
#[derive(Debug, Clone)]
pub struct VectorFieldSample {
    pub components: Vec<FieldSample>,
}

pub fn sample_vector_field(
    model: &CovarianceModel,
    points: &[Point],
    p: usize,
    n_reps: usize,
    seed: u64,
) -> Result<VectorFieldSample, FieldError> {
    if p == 0 {
        return Err(FieldError::InvalidParameter("p must be >= 1".into()));
    }
    let total = n_reps * points.len() * p;
    if total > MAX_SAMPLE_VALUES {
        return Err(FieldError::SampleTooLarge {
            values: total,
            cap: MAX_SAMPLE_VALUES,
        });
    }
    let cov = covariance_matrix(model, points)?;
    let fact = Factorization::new(cov, model.family_name())?;
    let rows = sample_vector_replications(&fact, p, n_reps, seed, |_, comps| {
        comps
            .iter()
            .map(|c| c.as_slice().to_vec())
            .collect::<Vec<_>>()
    });
    let mut per_component: Vec<Vec<f64>> = vec![Vec::with_capacity(n_reps * points.len()); p];
    for rep in rows {
        for (j, comp) in rep.into_iter().enumerate() {
            per_component[j].extend(comp);
        }
    }
    Ok(VectorFieldSample {
        components: per_component
            .into_iter()
            .map(|values| FieldSample {
                points: points.to_vec(),
                n_reps,
                n_points: points.len(),
                seed,
                jitter: fact.jitter,
                clip_mass: fact.clip_mass,
                values,
            })
            .collect(),
    })
}

/// Per-replication suprema of the chi field and of its spherical lift:
/// `(max_s ||X(s)||, max_{s,v} sum_i X_i(s) v_i)`.
pub fn chi_lift_supremum(
    sample: &VectorFieldSample,
    sphere_pts: &[Point],
) -> Result<Vec<(f64, f64)>, FieldError> {
    let p = sample.components.len();
    if p == 0 {
        return Err(FieldError::InvalidParameter("empty vector sample".into()));
    }
    if sphere_pts.is_empty() || sphere_pts[0].len() != p {
        return Err(FieldError::DimensionMismatch(format!(
            "sphere points must live in R^{p}"
        )));
    }
    let n_reps = sample.components[0].n_reps;
    let n_pts = sample.components[0].n_points;
    let mut out = Vec::with_capacity(n_reps);
    let mut x = vec![0.0f64; p];
    for rep in 0..n_reps {
        let mut sup_norm = f64::NEG_INFINITY;
        let mut sup_lift = f64::NEG_INFINITY;
        for k in 0..n_pts {
            for (j, xj) in x.iter_mut().enumerate() {
                *xj = sample.components[j].value(rep, k);
            }
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            sup_norm = sup_norm.max(norm);
            for v in sphere_pts {
                let dot: f64 = x.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
                sup_lift = sup_lift.max(dot);
            }
        }
        out.push((sup_norm, sup_lift));
    }
    Ok(out)
}

/// Dependence table `x -> Q(x)`: the max |correlation| over sampled point
/// pairs whose block-1 separation (in rescaled coordinates) exceeds `x`,
/// maximized over the `h` grid.
#[derive(Debug, Clone)]
pub struct DependenceTable {
    pub xs: Vec<f64>,
    pub q: Vec<f64>,
    /// Q(min x) < 1 - 1e-6, the eta < 1 check.
    pub eta_ok: bool,
}

pub fn dependence_diagnostic(
    model: &CovarianceModel,
    m: &crate::manifold::ManifoldDescriptor,
    x_values: &[f64],
    sample_resolution: usize,
    h_list: &[f64],
) -> Result<DependenceTable, FieldError> {
    if x_values.is_empty() || x_values.iter().any(|&x| x <= 0.0) {
        return Err(FieldError::InvalidParameter(
            "x values must be positive".into(),
        ));
    }
    let pts = m
        .sample_points(sample_resolution)
        .map_err(|e| FieldError::InvalidParameter(e.to_string()))?;
    let block1 = model.structure().block_range(0);
    let mut xs = x_values.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut q = vec![0.0f64; xs.len()];
    for &h in h_list {
        let rescaled = model.clone().with_rescale(h)?;
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                let r = rescaled.correlation(&pts[i], &pts[j]).abs();
                let mut sep = 0.0;
                for idx in block1.clone() {
                    sep += ((pts[i][idx] - pts[j][idx]) / h).powi(2);
                }
                let sep = sep.sqrt();
                for (k, &x) in xs.iter().enumerate() {
                    if sep > x && r > q[k] {
                        q[k] = r;
                    }
                }
            }
        }
    }
    let eta_ok = q.first().map(|&v| v < 1.0 - 1e-6).unwrap_or(true);
    Ok(DependenceTable { xs, q, eta_ok })
}

impl DependenceTable {
    /// Check `Q(x) (log x)^{2 sum r_i/alpha_i} <= (log x)^{-beta}` at the
    /// sampled x > 1.
    pub fn berman_check(&self, s: &Structure, beta: f64) -> Vec<(f64, bool)> {
        let q2 = 2.0 * s.tail_exponent_sum();
        self.xs
            .iter()
            .zip(&self.q)
            .map(|(&x, &qv)| {
                if x <= 1.0 {
                    (x, true)
                } else {
                    let lhs = qv * x.ln().powf(q2);
                    let rhs = x.ln().powf(-beta);
                    (x, lhs <= rhs)
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{sphere_grid, ManifoldDescriptor as M};

    fn circle_model(c: f64, alpha: f64) -> CovarianceModel {
        CovarianceModel::powered_exponential(
            Structure::single(2, alpha, 1).unwrap(),
            DField::ScalarPerBlock(vec![c]),
        )
        .unwrap()
    }

    #[test]
    fn covariance_matrix_on_three_circle_points() {
        let m = M::circle(1.0).unwrap();
        let model = circle_model(1.0, 1.0);
        let pts = m.sample_points(8).unwrap()[..3].to_vec();
        let cov = covariance_matrix(&model, &pts).unwrap();
        for i in 0..3 {
            assert_eq!(cov[(i, i)], 1.0);
            for j in 0..3 {
                assert!((cov[(i, j)] - cov[(j, i)]).abs() < 1e-15);
                assert!(cov[(i, j)] <= 1.0 && cov[(i, j)] > 0.0);
            }
        }
        let eig = SymmetricEigen::new(cov);
        assert!(eig.eigenvalues.iter().all(|&l| l > -1e-12));
    }

    #[test]
    fn single_point_matrix_is_one() {
        let model = circle_model(1.0, 1.0);
        let pts = vec![Point::from_vec(vec![1.0, 0.0])];
        let cov = covariance_matrix(&model, &pts).unwrap();
        assert_eq!(cov.nrows(), 1);
        assert_eq!(cov[(0, 0)], 1.0);
    }

    #[test]
    fn chi_lift_kernel_at_coincident_base_points() {
        let base = circle_model(1.0, 2.0);
        let lift = CovarianceModel::chi_lift(base, 2).unwrap();
        let s = [1.0, 0.0];
        let v1 = [1.0, 0.0];
        let v2 = [0.6, 0.8];
        let a = Point::from_vec(vec![s[0], s[1], v1[0], v1[1]]);
        let b = Point::from_vec(vec![s[0], s[1], v2[0], v2[1]]);
        let r = lift.correlation(&a, &b);
        assert!((r - 0.6).abs() < 1e-14);
        // 1 - 0.5||v1-v2||^2 for unit vectors equals the dot product
        let half = 1.0 - 0.5 * ((v1[0] - v2[0]).powi(2) + (v1[1] - v2[1]).powi(2));
        assert!((r - half).abs() < 1e-14);
    }

    #[test]
    fn chi_lift_rescale_reaches_the_base_block() {
        let base = circle_model(1.0, 2.0);
        let lift = CovarianceModel::chi_lift(base.clone(), 2)
            .unwrap()
            .with_rescale(0.5)
            .unwrap();
        let s1 = Point::from_vec(vec![1.0, 0.0]);
        let s2 = Point::from_vec(vec![0.9950041652780258, 0.09983341664682815]);
        let v = Point::from_vec(vec![1.0, 0.0]);
        let a = Point::from_vec(s1.iter().chain(v.iter()).cloned().collect());
        let b = Point::from_vec(s2.iter().chain(v.iter()).cloned().collect());
        let want = base.with_rescale(0.5).unwrap().correlation(&s1, &s2);
        assert_eq!(lift.correlation(&a, &b), want);
        assert!(want < circle_model(1.0, 2.0).correlation(&s1, &s2));
    }

    #[test]
    fn chi_lift_factorizes_exactly() {
        let base = circle_model(0.7, 1.5);
        let lift = CovarianceModel::chi_lift(base.clone(), 3).unwrap();
        let s1 = Point::from_vec(vec![1.0, 0.0]);
        let s2 = Point::from_vec(vec![0.0, 1.0]);
        let v1 = Point::from_vec(vec![1.0, 0.0, 0.0]);
        let v2 = Point::from_vec(vec![0.0, 0.6, 0.8]);
        let a = Point::from_vec(s1.iter().chain(v1.iter()).cloned().collect());
        let b = Point::from_vec(s2.iter().chain(v2.iter()).cloned().collect());
        assert_eq!(
            lift.correlation(&a, &b),
            base.correlation(&s1, &s2) * v1.dot(&v2)
        );
    }

    #[test]
    fn local_stationarity_ratio() {
        let m = M::circle(1.0).unwrap();
        for alpha in [0.8, 1.0, 1.5, 2.0] {
            let model = circle_model(0.9, alpha);
            let base_pts = m.sample_points(20).unwrap();
            for (scale, lo, hi) in [(1e-2, 0.8, 1.2), (1e-3, 0.95, 1.05)] {
                for t in &base_pts {
                    let th = t[1].atan2(t[0]);
                    let t2 = Point::from_vec(vec![(th + scale).cos(), (th + scale).sin()]);
                    let u = &t2 - t;
                    let module = model.local_module(t, &u).unwrap();
                    let ratio = (1.0 - model.correlation(t, &t2)) / module;
                    assert!(
                        ratio >= lo && ratio <= hi,
                        "alpha {alpha} scale {scale}: ratio {ratio}"
                    );
                }
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_and_consistent() {
        let m = M::circle(1.0).unwrap();
        let model = circle_model(1.0, 1.0);
        let pts = m.sample_points(16).unwrap();
        let a = sample_field(&model, &pts, 32, 99).unwrap();
        let b = sample_field(&model, &pts, 32, 99).unwrap();
        for rep in 0..32 {
            for k in 0..pts.len() {
                assert_eq!(a.value(rep, k).to_bits(), b.value(rep, k).to_bits());
            }
        }
    }

    #[test]
    fn two_point_grid_empirical_correlation() {
        // choose two circle points and verify empirical corr ~ model corr
        let model = circle_model(1.0, 1.0);
        let pts = vec![
            Point::from_vec(vec![1.0, 0.0]),
            Point::from_vec(vec![(0.7f64).cos(), (0.7f64).sin()]),
        ];
        let want = model.correlation(&pts[0], &pts[1]);
        let s = sample_field(&model, &pts, 10_000, 4).unwrap();
        let got = s.empirical_covariance(0, 1)
            / (s.empirical_covariance(0, 0) * s.empirical_covariance(1, 1)).sqrt();
        assert!((got - want).abs() < 0.03, "corr {got} vs {want}");
        for k in 0..2 {
            let v = s.empirical_covariance(k, k);
            assert!((v - 1.0).abs() < 0.05, "variance {v}");
        }
    }

    #[test]
    fn empirical_covariance_matches_model_within_five_se() {
        let m = M::circle(1.0).unwrap();
        let model = circle_model(0.8, 2.0);
        let pts = m.sample_points(8).unwrap();
        let reps = 6000;
        let s = sample_field(&model, &pts, reps, 11).unwrap();
        for i in 0..pts.len() {
            for j in i..pts.len() {
                let want = if i == j {
                    1.0
                } else {
                    model.correlation(&pts[i], &pts[j])
                };
                let got = s.empirical_covariance(i, j);
                // se of a sample covariance of unit-variance gaussians
                let se = ((1.0 + want * want) / reps as f64).sqrt();
                assert!(
                    (got - want).abs() <= 5.0 * se,
                    "cov({i},{j}): {got} vs {want} (se {se})"
                );
            }
        }
    }

    #[test]
    fn chi_lift_supremum_p1_equals_abs_max() {
        let model = circle_model(1.0, 2.0);
        let pts = M::circle(1.0).unwrap().sample_points(32).unwrap();
        let sample = sample_vector_field(&model, &pts, 1, 64, 5).unwrap();
        let sup = chi_lift_supremum(&sample, &sphere_grid(1, 1).unwrap()).unwrap();
        for (rep, &(a, b)) in sup.iter().enumerate() {
            let direct = (0..pts.len())
                .map(|k| sample.components[0].value(rep, k).abs())
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((a - direct).abs() < 1e-14);
            assert!((b - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn chi_lift_supremum_quantization_bound() {
        let model = circle_model(1.0, 2.0);
        let pts = M::circle(1.0).unwrap().sample_points(24).unwrap();
        let sample = sample_vector_field(&model, &pts, 2, 100, 6).unwrap();
        let grid = sphere_grid(2, 512).unwrap();
        let sup = chi_lift_supremum(&sample, &grid).unwrap();
        let slack = 1.0 - (std::f64::consts::PI / 512.0).cos();
        for &(a, b) in &sup {
            assert!(b <= a + 1e-12);
            assert!(a - b <= a.abs() * slack + 1e-12, "a {a} b {b}");
        }
    }

    #[test]
    fn single_point_vector_norm() {
        let model = circle_model(1.0, 2.0);
        let pts = vec![Point::from_vec(vec![1.0, 0.0])];
        let mut sample = sample_vector_field(&model, &pts, 2, 1, 3).unwrap();
        sample.components[0].values = vec![3.0];
        sample.components[1].values = vec![4.0];
        let sup = chi_lift_supremum(&sample, &sphere_grid(2, 64).unwrap()).unwrap();
        assert!((sup[0].0 - 5.0).abs() < 1e-12);
    }

    #[test]
    fn dependence_diagnostic_exponential_bound() {
        let m = M::circle(1.0).unwrap();
        let model = circle_model(1.0, 1.0);
        let table = dependence_diagnostic(&model, &m, &[1.0, 2.0, 4.0], 128, &[0.5, 0.2]).unwrap();
        assert!(table.eta_ok);
        for (k, &x) in table.xs.iter().enumerate() {
            assert!(table.q[k] <= (-x).exp() + 1e-12, "Q({x}) = {}", table.q[k]);
            if k > 0 {
                assert!(table.q[k] <= table.q[k - 1] + 1e-15);
            }
        }
        let checks = table.berman_check(model.structure(), 1.0);
        assert!(checks.iter().all(|&(_, ok)| ok));
    }

    #[test]
    fn cross_covariance_dominance_guard() {
        let s = Structure::single(2, 2.0, 1).unwrap();
        let a_good = vec![
            vec![DMatrix::identity(2, 2) * 1.0, DMatrix::identity(2, 2) * 0.2],
            vec![DMatrix::identity(2, 2) * 0.2, DMatrix::identity(2, 2) * 1.0],
        ];
        assert!(CovarianceModel::cross_covariance(s.clone(), a_good).is_ok());
        let a_bad = vec![
            vec![DMatrix::identity(2, 2) * 0.1, DMatrix::identity(2, 2) * 0.5],
            vec![DMatrix::identity(2, 2) * 0.5, DMatrix::identity(2, 2) * 0.1],
        ];
        assert!(matches!(
            CovarianceModel::cross_covariance(s, a_bad),
            Err(FieldError::DominanceViolated { .. })
        ));
    }

    #[test]
    fn grid_cap_is_enforced() {
        let model = circle_model(1.0, 1.0);
        let pts: Vec<Point> = (0..MAX_DENSE_POINTS + 1)
            .map(|i| {
                let th = i as f64 * 1e-4;
                Point::from_vec(vec![th.cos(), th.sin()])
            })
            .collect();
        assert!(matches!(
            covariance_matrix(&model, &pts),
            Err(FieldError::GridTooLarge { .. })
        ));
    }
}
