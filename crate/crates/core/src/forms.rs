//! Exterior algebra over `R^n` for small `n`.
//!
//! Forms are stored densely over strictly increasing multi-indices in
//! lexicographic order, so a `k`-form on `R^n` carries `C(n, k)` coefficients.
//! Internally a multi-index is a bit mask; the lexicographic rank of each mask
//! is tabulated once per `(n, k)`.
//!
//! The coefficient type is generic so that sign-sensitive identities can be
//! checked in exact rational arithmetic as well as in `f64`.

use std::fmt::Debug;
use std::ops::Neg;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use num_traits::Num;
use thiserror::Error;

/// Largest ambient dimension supported by the basis tables.
pub const MAX_DIM: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("degree {degree} out of range for dimension {dim}")]
    DegreeOutOfRange { dim: usize, degree: usize },
    #[error("dimension {0} exceeds the supported maximum of {MAX_DIM}")]
    DimensionTooLarge(usize),
    #[error("linear map has shape {rows}x{cols}, expected {expected_rows} rows")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        expected_rows: usize,
    },
    #[error("expected {expected} coefficients, got {got}")]
    CoefficientCount { expected: usize, got: usize },
    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { dim: usize, index: usize },
    #[error("metric is not symmetric")]
    NotSymmetric,
    #[error("metric is not positive definite")]
    NotPositiveDefinite,
}

/// Coefficient types usable in forms.
pub trait Scalar: Clone + PartialEq + Debug + Num + Neg<Output = Self> + Send + Sync + 'static {}

impl<T> Scalar for T where T: Clone + PartialEq + Debug + Num + Neg<Output = T> + Send + Sync + 'static {}

pub(crate) struct Basis {
    pub masks: Vec<u32>,
    rank: Vec<u32>,
}

impl Basis {
    pub fn rank(&self, mask: u32) -> usize {
        self.rank[mask as usize] as usize
    }
}

fn build_basis(n: usize, k: usize) -> Basis {
    let mut tuples: Vec<(Vec<usize>, u32)> = (0u32..(1u32 << n))
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (mask_to_indices(m), m))
        .collect();
    tuples.sort();
    let mut rank = vec![u32::MAX; 1 << n];
    let masks: Vec<u32> = tuples.iter().map(|(_, m)| *m).collect();
    for (i, m) in masks.iter().enumerate() {
        rank[*m as usize] = i as u32;
    }
    Basis { masks, rank }
}

pub(crate) fn basis(n: usize, k: usize) -> &'static Basis {
    static TABLES: OnceLock<Vec<Vec<Basis>>> = OnceLock::new();
    let tables = TABLES.get_or_init(|| {
        (0..=MAX_DIM)
            .map(|n| (0..=n).map(|k| build_basis(n, k)).collect())
            .collect()
    });
    &tables[n][k]
}

pub(crate) fn mask_to_indices(mask: u32) -> Vec<usize> {
    (0..32).filter(|i| mask & (1 << i) != 0).collect()
}

/// Sign of `e^a ∧ e^b` relative to `e^{a|b}` for disjoint masks.
pub(crate) fn merge_sign(a: u32, b: u32) -> bool {
    // odd number of inversions => negative
    let mut inv = 0u32;
    let mut rest = b;
    while rest != 0 {
        let j = rest.trailing_zeros();
        inv += (a >> (j + 1)).count_ones();
        rest &= rest - 1;
    }
    inv % 2 == 1
}

/// Binomial coefficient for small arguments.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Strictly increasing `k`-tuples of `{0..n-1}` in lexicographic order.
pub fn basis_indices(n: usize, k: usize) -> Vec<Vec<usize>> {
    basis(n, k).masks.iter().map(|&m| mask_to_indices(m)).collect()
}

/// Sorts `indices` and returns the parity of the sorting permutation
/// (`None` if an index repeats).
pub fn sort_with_sign(indices: &[usize]) -> Option<(Vec<usize>, bool)> {
    let mut v = indices.to_vec();
    let mut odd = false;
    for i in 1..v.len() {
        let mut j = i;
        while j > 0 && v[j - 1] > v[j] {
            v.swap(j - 1, j);
            odd = !odd;
            j -= 1;
        }
    }
    if v.windows(2).any(|w| w[0] == w[1]) {
        return None;
    }
    Some((v, odd))
}

/// Determinant by permutation expansion; intended for the small minors that
/// appear in pullbacks (size at most [`MAX_DIM`]).
pub fn small_det<T: Scalar>(m: &[Vec<T>]) -> T {
    let k = m.len();
    match k {
        0 => T::one(),
        1 => m[0][0].clone(),
        2 => m[0][0].clone() * m[1][1].clone() - m[0][1].clone() * m[1][0].clone(),
        _ => {
            // Laplace expansion along the first row.
            let mut acc = T::zero();
            for col in 0..k {
                if m[0][col] == T::zero() {
                    continue;
                }
                let minor: Vec<Vec<T>> = m[1..]
                    .iter()
                    .map(|row| {
                        row.iter()
                            .enumerate()
                            .filter(|(c, _)| *c != col)
                            .map(|(_, x)| x.clone())
                            .collect()
                    })
                    .collect();
                let term = m[0][col].clone() * small_det(&minor);
                acc = if col % 2 == 0 { acc + term } else { acc - term };
            }
            acc
        }
    }
}

/// A constant-coefficient exterior `k`-form on `R^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct AlternatingForm<T = f64> {
    dim: usize,
    degree: usize,
    coeffs: Vec<T>,
}

impl<T: Scalar> AlternatingForm<T> {
    pub fn zero(dim: usize, degree: usize) -> Result<Self, FormError> {
        check_shape(dim, degree)?;
        Ok(Self {
            dim,
            degree,
            coeffs: vec![T::zero(); binomial(dim, degree)],
        })
    }

    pub fn from_coeffs(dim: usize, degree: usize, coeffs: Vec<T>) -> Result<Self, FormError> {
        check_shape(dim, degree)?;
        let expected = binomial(dim, degree);
        if coeffs.len() != expected {
            return Err(FormError::CoefficientCount {
                expected,
                got: coeffs.len(),
            });
        }
        Ok(Self { dim, degree, coeffs })
    }

    /// The constant function `c`.
    pub fn scalar(dim: usize, c: T) -> Result<Self, FormError> {
        Self::from_coeffs(dim, 0, vec![c])
    }

    /// `dx^i`.
    pub fn covector(dim: usize, i: usize) -> Result<Self, FormError> {
        Self::monomial(dim, &[i], T::one())
    }

    /// `c · dx^{i_0} ∧ … ∧ dx^{i_{k-1}}` for indices in any order; repeated
    /// indices give the zero form.
    pub fn monomial(dim: usize, indices: &[usize], c: T) -> Result<Self, FormError> {
        let mut form = Self::zero(dim, indices.len())?;
        form.add_term(indices, c)?;
        Ok(form)
    }

    /// Builds a form from a list of `(indices, coefficient)` terms.
    pub fn from_terms(dim: usize, degree: usize, terms: &[(&[usize], T)]) -> Result<Self, FormError> {
        let mut form = Self::zero(dim, degree)?;
        for (idx, c) in terms {
            if idx.len() != degree {
                return Err(FormError::DegreeOutOfRange { dim, degree: idx.len() });
            }
            form.add_term(idx, c.clone())?;
        }
        Ok(form)
    }

    fn add_term(&mut self, indices: &[usize], c: T) -> Result<(), FormError> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.dim) {
            return Err(FormError::IndexOutOfRange { dim: self.dim, index: bad });
        }
        if let Some((sorted, odd)) = sort_with_sign(indices) {
            let mask = sorted.iter().fold(0u32, |m, &i| m | (1 << i));
            let r = basis(self.dim, self.degree).rank(mask);
            let c = if odd { -c } else { c };
            self.coeffs[r] = self.coeffs[r].clone() + c;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    /// Coefficient of `dx^{indices}`; indices may be in any order.
    pub fn coeff(&self, indices: &[usize]) -> T {
        if indices.len() != self.degree || indices.iter().any(|&i| i >= self.dim) {
            return T::zero();
        }
        match sort_with_sign(indices) {
            None => T::zero(),
            Some((sorted, odd)) => {
                let mask = sorted.iter().fold(0u32, |m, &i| m | (1 << i));
                let c = self.coeffs[basis(self.dim, self.degree).rank(mask)].clone();
                if odd {
                    -c
                } else {
                    c
                }
            }
        }
    }

    /// Nonzero terms as `(increasing indices, coefficient)`.
    pub fn terms(&self) -> Vec<(Vec<usize>, T)> {
        let b = basis(self.dim, self.degree);
        self.coeffs
            .iter()
            .zip(&b.masks)
            .filter(|(c, _)| **c != T::zero())
            .map(|(c, &m)| (mask_to_indices(m), c.clone()))
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == T::zero())
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            dim: self.dim,
            degree: self.degree,
            coeffs: self.coeffs.iter().map(|c| c.clone() * s.clone()).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, FormError> {
        self.check_same(other)?;
        Ok(Self {
            dim: self.dim,
            degree: self.degree,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a.clone() + b.clone())
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, FormError> {
        self.add(&other.scale(-T::one()))
    }

    fn check_same(&self, other: &Self) -> Result<(), FormError> {
        if self.dim != other.dim {
            return Err(FormError::DimensionMismatch { left: self.dim, right: other.dim });
        }
        if self.degree != other.degree {
            return Err(FormError::DegreeOutOfRange { dim: self.dim, degree: other.degree });
        }
        Ok(())
    }

    /// Exterior product. A degree sum above the dimension gives the zero
    /// form of that (empty) degree, represented with no coefficients.
    pub fn wedge(&self, other: &Self) -> Result<Self, FormError> {
        if self.dim != other.dim {
            return Err(FormError::DimensionMismatch { left: self.dim, right: other.dim });
        }
        let n = self.dim;
        let deg = self.degree + other.degree;
        if deg > n {
            return Ok(Self { dim: n, degree: deg, coeffs: Vec::new() });
        }
        let mut out = vec![T::zero(); binomial(n, deg)];
        let (ba, bb, bo) = (basis(n, self.degree), basis(n, other.degree), basis(n, deg));
        for (ca, &ma) in self.coeffs.iter().zip(&ba.masks) {
            if *ca == T::zero() {
                continue;
            }
            for (cb, &mb) in other.coeffs.iter().zip(&bb.masks) {
                if *cb == T::zero() || ma & mb != 0 {
                    continue;
                }
                let r = bo.rank(ma | mb);
                let t = ca.clone() * cb.clone();
                out[r] = if merge_sign(ma, mb) {
                    out[r].clone() - t
                } else {
                    out[r].clone() + t
                };
            }
        }
        Ok(Self { dim: n, degree: deg, coeffs: out })
    }

    /// Contraction `ι_v a`, inserting `v` in the first slot. The contraction
    /// of a 0-form is the zero 0-form.
    pub fn interior(&self, v: &[T]) -> Result<Self, FormError> {
        if v.len() != self.dim {
            return Err(FormError::DimensionMismatch { left: self.dim, right: v.len() });
        }
        if self.degree == 0 {
            return Self::zero(self.dim, 0);
        }
        let n = self.dim;
        let mut out = vec![T::zero(); binomial(n, self.degree - 1)];
        let (bi, bo) = (basis(n, self.degree), basis(n, self.degree - 1));
        for (c, &m) in self.coeffs.iter().zip(&bi.masks) {
            if *c == T::zero() {
                continue;
            }
            for (pos, i) in mask_to_indices(m).into_iter().enumerate() {
                if v[i] == T::zero() {
                    continue;
                }
                let r = bo.rank(m & !(1 << i));
                let t = c.clone() * v[i].clone();
                out[r] = if pos % 2 == 1 {
                    out[r].clone() - t
                } else {
                    out[r].clone() + t
                };
            }
        }
        Ok(Self { dim: n, degree: self.degree - 1, coeffs: out })
    }

    /// Evaluates the form on `degree` vectors.
    pub fn eval(&self, vectors: &[&[T]]) -> Result<T, FormError> {
        if vectors.len() != self.degree {
            return Err(FormError::DegreeOutOfRange { dim: self.dim, degree: vectors.len() });
        }
        for v in vectors {
            if v.len() != self.dim {
                return Err(FormError::DimensionMismatch { left: self.dim, right: v.len() });
            }
        }
        let b = basis(self.dim, self.degree);
        let mut acc = T::zero();
        for (c, &m) in self.coeffs.iter().zip(&b.masks) {
            if *c == T::zero() {
                continue;
            }
            let rows = mask_to_indices(m);
            let minor: Vec<Vec<T>> = rows
                .iter()
                .map(|&i| vectors.iter().map(|v| v[i].clone()).collect())
                .collect();
            acc = acc + c.clone() * small_det(&minor);
        }
        Ok(acc)
    }

    /// Pullback along the linear map `A: R^m -> R^n`, given as an `n x m`
    /// matrix whose columns are the images of the source basis vectors.
    pub fn pullback(&self, a: &DMatrix<T>) -> Result<Self, FormError> {
        if a.nrows() != self.dim {
            return Err(FormError::ShapeMismatch {
                rows: a.nrows(),
                cols: a.ncols(),
                expected_rows: self.dim,
            });
        }
        let m = a.ncols();
        check_shape(m, self.degree.min(m))?;
        if self.degree > m {
            return Ok(Self { dim: m, degree: self.degree, coeffs: Vec::new() });
        }
        let (bi, bo) = (basis(self.dim, self.degree), basis(m, self.degree));
        let mut out = vec![T::zero(); bo.masks.len()];
        for (c, &mi) in self.coeffs.iter().zip(&bi.masks) {
            if *c == T::zero() {
                continue;
            }
            let rows = mask_to_indices(mi);
            for (slot, &mj) in bo.masks.iter().enumerate() {
                let cols = mask_to_indices(mj);
                let minor: Vec<Vec<T>> = rows
                    .iter()
                    .map(|&r| cols.iter().map(|&cc| a[(r, cc)].clone()).collect())
                    .collect();
                out[slot] = out[slot].clone() + c.clone() * small_det(&minor);
            }
        }
        Ok(Self { dim: m, degree: self.degree, coeffs: out })
    }
}

impl AlternatingForm<f64> {
    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Euclidean coefficient norm (orthonormal basis `dx^I`).
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Inner product induced by `g` on `Λ^k`.
    pub fn inner(&self, other: &Self, g: &Metric) -> Result<f64, FormError> {
        self.check_same(other)?;
        if g.dim() != self.dim {
            return Err(FormError::DimensionMismatch { left: self.dim, right: g.dim() });
        }
        let raised = raise(self, &g.inverse());
        Ok(raised.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum())
    }

    /// Hodge star with respect to `g`, with `orientation = ±1` relative to
    /// `dx^0 ∧ … ∧ dx^{n-1}`. Characterised by `a ∧ ⋆b = ⟨a, b⟩_g vol_g`.
    pub fn hodge(&self, g: &Metric, orientation: i8) -> Result<Self, FormError> {
        let n = self.dim;
        if g.dim() != n {
            return Err(FormError::DimensionMismatch { left: n, right: g.dim() });
        }
        let raised = raise(self, &g.inverse());
        let scale = g.det().sqrt() * if orientation < 0 { -1.0 } else { 1.0 };
        let full = (1u32 << n) - 1;
        let (bi, bo) = (basis(n, self.degree), basis(n, n - self.degree));
        let mut out = vec![0.0; bo.masks.len()];
        for (c, &m) in raised.iter().zip(&bi.masks) {
            if *c == 0.0 {
                continue;
            }
            let comp = full & !m;
            let s = if merge_sign(m, comp) { -1.0 } else { 1.0 };
            out[bo.rank(comp)] += s * scale * c;
        }
        Ok(Self { dim: n, degree: n - self.degree, coeffs: out })
    }
}

/// Components of `a` with all indices raised by `g^{-1}`.
fn raise(a: &AlternatingForm<f64>, ginv: &DMatrix<f64>) -> Vec<f64> {
    let b = basis(a.dim, a.degree);
    let idx: Vec<Vec<usize>> = b.masks.iter().map(|&m| mask_to_indices(m)).collect();
    let mut out = vec![0.0; idx.len()];
    for (i, rows) in idx.iter().enumerate() {
        let mut acc = 0.0;
        for (j, cols) in idx.iter().enumerate() {
            let c = a.coeffs[j];
            if c == 0.0 {
                continue;
            }
            let minor: Vec<Vec<f64>> = rows
                .iter()
                .map(|&r| cols.iter().map(|&cc| ginv[(r, cc)]).collect())
                .collect();
            acc += c * small_det(&minor);
        }
        out[i] = acc;
    }
    out
}

fn check_shape(dim: usize, degree: usize) -> Result<(), FormError> {
    if dim > MAX_DIM {
        return Err(FormError::DimensionTooLarge(dim));
    }
    if degree > dim {
        return Err(FormError::DegreeOutOfRange { dim, degree });
    }
    Ok(())
}

/// A positive-definite inner product on `R^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Metric {
    g: DMatrix<f64>,
}

impl Metric {
    pub fn new(g: DMatrix<f64>) -> Result<Self, FormError> {
        if !g.is_square() {
            return Err(FormError::ShapeMismatch {
                rows: g.nrows(),
                cols: g.ncols(),
                expected_rows: g.ncols(),
            });
        }
        let scale = g.amax().max(f64::MIN_POSITIVE);
        if (&g - g.transpose()).amax() > 1e-12 * scale {
            return Err(FormError::NotSymmetric);
        }
        let sym = (&g + g.transpose()) * 0.5;
        // leading principal minors > 0  <=>  Cholesky succeeds
        if sym.clone().cholesky().is_none() {
            return Err(FormError::NotPositiveDefinite);
        }
        Ok(Self { g: sym })
    }

    pub fn euclidean(n: usize) -> Self {
        Self { g: DMatrix::identity(n, n) }
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn det(&self) -> f64 {
        self.g.determinant()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.g
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .expect("metric validated positive definite")
    }

    pub fn dot(&self, u: &[f64], v: &[f64]) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += u[i] * self.g[(i, j)] * v[j];
            }
        }
        acc
    }

    /// `Aᵀ g A` for `A: R^m -> R^n`.
    pub fn pullback(&self, a: &DMatrix<f64>) -> Result<Self, FormError> {
        if a.nrows() != self.dim() {
            return Err(FormError::ShapeMismatch {
                rows: a.nrows(),
                cols: a.ncols(),
                expected_rows: self.dim(),
            });
        }
        Self::new(a.transpose() * &self.g * a)
    }
}

/// The coordinate volume form `dx^0 ∧ … ∧ dx^{n-1}` scaled by `c`.
pub fn volume_form<T: Scalar>(dim: usize, c: T) -> AlternatingForm<T> {
    AlternatingForm::from_coeffs(dim, dim, vec![c]).expect("top degree has one coefficient")
}
