//! Scalar and matrix primitives shared by all modules: structure modules,
//! Mills ratio, minor norms and Gumbel quantiles.

use itertools::Itertools;
use nalgebra::{DMatrix, RealField};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MathError {
    #[error("vector has length {got} but the structure spans {expected} coordinates")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("structure is invalid: {0}")]
    InvalidStructure(String),
    #[error("mills_psi requires u > 0, got {0}")]
    NonpositiveArgument(f64),
    #[error("gumbel_quantile requires alpha in (0,1), got {0}")]
    QuantileOutOfRange(f64),
    #[error("minor norm needs an n x m matrix with n >= m >= 1, got {rows} x {cols}")]
    BadMinorShape { rows: usize, cols: usize },
    #[error("minor enumeration capped at C(n,m) <= {cap}, got C({n},{m}) = {count}")]
    EnumerationTooLarge {
        n: usize,
        m: usize,
        count: usize,
        cap: usize,
    },
}

/// Cap on the number of enumerated minors; the Gram route is canonical and
/// has no such limit.
pub const MINOR_ENUMERATION_CAP: usize = 200;

/// A partition of the coordinates of R^n into `k` contiguous blocks of
/// sizes `e_i`, each carrying an exponent `alpha_i` in `(0, 2]` and a
/// manifold dimension `r_i <= e_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Structure {
    block_sizes: Vec<usize>,
    exponents: Vec<f64>,
    manifold_dims: Vec<usize>,
}

impl Structure {
    pub fn new(
        block_sizes: Vec<usize>,
        exponents: Vec<f64>,
        manifold_dims: Vec<usize>,
    ) -> Result<Self, MathError> {
        if block_sizes.is_empty() {
            return Err(MathError::InvalidStructure(
                "needs at least one block".into(),
            ));
        }
        if block_sizes.len() != exponents.len() || block_sizes.len() != manifold_dims.len() {
            return Err(MathError::InvalidStructure(format!(
                "block_sizes ({}), exponents ({}) and manifold_dims ({}) must have equal length",
                block_sizes.len(),
                exponents.len(),
                manifold_dims.len()
            )));
        }
        if let Some(&e) = block_sizes.iter().find(|&&e| e == 0) {
            return Err(MathError::InvalidStructure(format!(
                "block size {e} must be positive"
            )));
        }
        if let Some(&a) = exponents.iter().find(|&&a| !(a > 0.0 && a <= 2.0)) {
            return Err(MathError::InvalidStructure(format!(
                "exponent {a} violates alpha_i in (0, 2]"
            )));
        }
        for (i, (&r, &e)) in manifold_dims.iter().zip(&block_sizes).enumerate() {
            if r > e {
                return Err(MathError::InvalidStructure(format!(
                    "manifold dim r_{i} = {r} exceeds block size e_{i} = {e}"
                )));
            }
        }
        Ok(Self {
            block_sizes,
            exponents,
            manifold_dims,
        })
    }

    /// Structure with a single block covering R^n.
    pub fn single(n: usize, alpha: f64, manifold_dim: usize) -> Result<Self, MathError> {
        Self::new(vec![n], vec![alpha], vec![manifold_dim])
    }

    pub fn block_count(&self) -> usize {
        self.block_sizes.len()
    }

    /// Total ambient dimension n = sum of e_i.
    pub fn ambient_dim(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    /// Total manifold dimension r = sum of r_i.
    pub fn manifold_dim(&self) -> usize {
        self.manifold_dims.iter().sum()
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    pub fn exponents(&self) -> &[f64] {
        &self.exponents
    }

    pub fn manifold_dims(&self) -> &[usize] {
        &self.manifold_dims
    }

    /// Coordinate range of block `i`.
    pub fn block_range(&self, i: usize) -> std::ops::Range<usize> {
        let start: usize = self.block_sizes[..i].iter().sum();
        start..start + self.block_sizes[i]
    }

    /// Sum of r_i / alpha_i, the polynomial order of the excursion formulas.
    pub fn tail_exponent_sum(&self) -> f64 {
        self.manifold_dims
            .iter()
            .zip(&self.exponents)
            .map(|(&r, &a)| r as f64 / a)
            .sum()
    }
}

/// Structure module `|t|_{E,alpha} = sum_i ||t_(i)||^{alpha_i}`.
pub fn structure_module<T: Real>(t: &[T], s: &Structure) -> Result<T, MathError> {
    if t.len() != s.ambient_dim() {
        return Err(MathError::DimensionMismatch {
            expected: s.ambient_dim(),
            got: t.len(),
        });
    }
    let mut total = T::zero();
    for i in 0..s.block_count() {
        let range = s.block_range(i);
        let sq = t[range].iter().fold(T::zero(), |acc, &x| acc + x * x);
        let alpha = T::from_f64(s.exponents[i]).expect("exponent fits in scalar");
        total = total + sq.sqrt().powf(alpha);
    }
    Ok(total)
}

/// Mills-type factor `Psi(u) = phi(u) / u` with `phi` the standard normal
/// density.
pub fn mills_psi<T: Real>(u: T) -> Result<T, MathError> {
    if u <= T::zero() {
        return Err(MathError::NonpositiveArgument(
            u.to_f64().unwrap_or(f64::NAN),
        ));
    }
    Ok(std_normal_pdf(u) / u)
}

/// Standard normal density.
pub fn std_normal_pdf<T: Real>(u: T) -> T {
    let two_pi = T::from_f64(std::f64::consts::TAU).expect("tau");
    (-(u * u) / T::from_f64(2.0).unwrap()).exp() / two_pi.sqrt()
}

/// Upper tail of the standard normal, via erfc on f64.
pub fn std_normal_sf(u: f64) -> f64 {
    0.5 * erfc(u / std::f64::consts::SQRT_2)
}

/// Standard normal CDF.
pub fn std_normal_cdf(u: f64) -> f64 {
    1.0 - std_normal_sf(u)
}

/// Complementary error function: Maclaurin series for |x| <= 2, Laplace
/// continued fraction beyond. Relative accuracy ~1e-12 over the range used
/// here (|x| <= 12).
fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x <= 2.0 {
        1.0 - erf_series(x)
    } else {
        erfc_continued_fraction(x)
    }
}

fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    for k in 1..200 {
        term *= -x2 / k as f64;
        let add = term / (2 * k + 1) as f64;
        sum += add;
        if add.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    2.0 / std::f64::consts::PI.sqrt() * sum
}

fn erfc_continued_fraction(x: f64) -> f64 {
    // erfc(x) = e^{-x^2}/sqrt(pi) * 1/(x + 1/2/(x + 1/(x + 3/2/(x + ...))))
    let mut f = 0.0;
    for k in (1..=120).rev() {
        f = (k as f64 / 2.0) / (x + f);
    }
    (-x * x).exp() / std::f64::consts::PI.sqrt() / (x + f)
}

/// Gumbel quantile: the z with `exp(-exp(-z)) = 1 - alpha`.
pub fn gumbel_quantile<T: Real>(alpha: T) -> Result<T, MathError> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(MathError::QuantileOutOfRange(
            alpha.to_f64().unwrap_or(f64::NAN),
        ));
    }
    Ok(-(-(T::one() - alpha).ln()).ln())
}

/// Minor norm `||G||_m` of an n x m matrix via the Gram route
/// `sqrt(det(G^T G))`; the order m is the column count.
pub fn minor_norm<T: RealField + Copy>(g: &DMatrix<T>) -> Result<T, MathError> {
    let (n, m) = (g.nrows(), g.ncols());
    if m == 0 || n < m {
        return Err(MathError::BadMinorShape { rows: n, cols: m });
    }
    let gram = g.transpose() * g;
    let det = gram.determinant();
    Ok(det.max(T::zero()).sqrt())
}

/// Minor norm by brute-force enumeration of all m x m minors; the
/// independent test oracle for the Gram route. Exponential in m, hence the
/// cap.
pub fn minor_norm_enumerated<T: RealField + Copy>(g: &DMatrix<T>) -> Result<T, MathError> {
    let (n, m) = (g.nrows(), g.ncols());
    if m == 0 || n < m {
        return Err(MathError::BadMinorShape { rows: n, cols: m });
    }
    let count = binomial(n, m);
    if count > MINOR_ENUMERATION_CAP {
        return Err(MathError::EnumerationTooLarge {
            n,
            m,
            count,
            cap: MINOR_ENUMERATION_CAP,
        });
    }
    let mut sum = T::zero();
    for rows in (0..n).combinations(m) {
        let sub = DMatrix::from_fn(m, m, |i, j| g[(rows[i], j)]);
        let d = sub.determinant();
        sum += d * d;
    }
    Ok(sum.sqrt())
}

fn binomial(n: usize, m: usize) -> usize {
    let m = m.min(n - m);
    let mut acc: usize = 1;
    for i in 0..m {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Volume of the unit r-ball.
pub fn unit_ball_volume(r: usize) -> f64 {
    match r {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * std::f64::consts::PI / r as f64 * unit_ball_volume(r - 2),
    }
}
