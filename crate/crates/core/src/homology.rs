//! Integer simplicial (co)homology.
//!
//! A chain complex is first shrunk by sparse elimination of unit entries
//! (each step removes a pair of cells `a ∈ C_{k+1}`, `b ∈ C_k` with
//! `⟨∂a, b⟩ = ±1` and is a chain homotopy equivalence). The small remainder
//! goes through a dense Smith normal form over arbitrary-precision integers.
//! Every elimination step is logged so that cycles and cocycles of the
//! reduced complex can be carried back to the original cells.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::mesh::SimplicialComplex;
use crate::rational::QMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum HomologyError {
    #[error("boundary maps do not compose to zero in degree {0}")]
    NotAComplex(usize),
    #[error("boundary matrix in degree {degree} has shape {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    Shape { degree: usize, rows: usize, cols: usize, expected_rows: usize, expected_cols: usize },
    #[error("integer overflow during sparse elimination")]
    Overflow,
    #[error("degree {0} is out of range")]
    Degree(usize),
    #[error("complex is not closed")]
    NotClosed,
    #[error("complex is not consistently oriented")]
    NotOriented,
    #[error("expected a {expected}-dimensional complex, found {found}")]
    WrongDimension { expected: usize, found: usize },
    #[error("infinite family; holonomy constraints required (b1 = {b1})")]
    InfiniteFamily { b1: usize },
}

/// Dense integer matrix, row major.
#[derive(Clone, PartialEq, Eq)]
pub struct IntMatrix {
    rows: usize,
    cols: usize,
    data: Vec<BigInt>,
}

impl fmt::Debug for IntMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "IntMatrix {}x{}", self.rows, self.cols)?;
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|c| self[(r, c)].to_string()).collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl std::ops::Index<(usize, usize)> for IntMatrix {
    type Output = BigInt;
    fn index(&self, (r, c): (usize, usize)) -> &BigInt {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for IntMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut BigInt {
        &mut self.data[r * self.cols + c]
    }
}

impl IntMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![BigInt::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = BigInt::one();
        }
        m
    }

    pub fn from_i64(rows: usize, cols: usize, entries: &[i64]) -> Self {
        assert_eq!(entries.len(), rows * cols);
        Self { rows, cols, data: entries.iter().map(|&x| BigInt::from(x)).collect() }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "shape mismatch in product");
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = &self[(r, k)];
                if a.is_zero() {
                    continue;
                }
                for c in 0..other.cols {
                    let b = &other[(k, c)];
                    if !b.is_zero() {
                        out[(r, c)] += a * b;
                    }
                }
            }
        }
        out
    }

    pub fn row(&self, r: usize) -> Vec<BigInt> {
        self.data[r * self.cols..(r + 1) * self.cols].to_vec()
    }

    pub fn column(&self, c: usize) -> Vec<BigInt> {
        (0..self.rows).map(|r| self[(r, c)].clone()).collect()
    }

    /// Exact determinant by fraction-free (Bareiss) elimination.
    pub fn det(&self) -> BigInt {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        if n == 0 {
            return BigInt::one();
        }
        let mut m = self.clone();
        let mut sign = BigInt::one();
        let mut prev = BigInt::one();
        for k in 0..n - 1 {
            if m[(k, k)].is_zero() {
                let Some(p) = (k + 1..n).find(|&r| !m[(r, k)].is_zero()) else { return BigInt::zero() };
                m.swap_rows(k, p);
                sign = -sign;
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    let v = (&m[(i, j)] * &m[(k, k)] - &m[(i, k)] * &m[(k, j)]) / &prev;
                    m[(i, j)] = v;
                }
            }
            prev = m[(k, k)].clone();
        }
        sign * &m[(n - 1, n - 1)]
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a != b {
            for c in 0..self.cols {
                self.data.swap(a * self.cols + c, b * self.cols + c);
            }
        }
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        if a != b {
            for r in 0..self.rows {
                self.data.swap(r * self.cols + a, r * self.cols + b);
            }
        }
    }

    /// `row[dst] += q·row[src]`.
    fn add_row(&mut self, dst: usize, src: usize, q: &BigInt) {
        for c in 0..self.cols {
            let v = &self[(src, c)] * q;
            if !v.is_zero() {
                self[(dst, c)] += v;
            }
        }
    }

    /// `col[dst] += q·col[src]`.
    fn add_col(&mut self, dst: usize, src: usize, q: &BigInt) {
        for r in 0..self.rows {
            let v = &self[(r, src)] * q;
            if !v.is_zero() {
                self[(r, dst)] += v;
            }
        }
    }

    fn negate_row(&mut self, r: usize) {
        for c in 0..self.cols {
            let v = -&self[(r, c)];
            self[(r, c)] = v;
        }
    }

    fn negate_col(&mut self, c: usize) {
        for r in 0..self.rows {
            let v = -&self[(r, c)];
            self[(r, c)] = v;
        }
    }

    pub fn to_rational(&self) -> QMatrix {
        QMatrix::from_fn(self.rows, self.cols, |r, c| num_rational::BigRational::from_integer(self[(r, c)].clone()))
    }
}

/// `U·M·V = D` with `U`, `V` unimodular and `D` diagonal, `d_1 | d_2 | …`.
#[derive(Clone, Debug)]
pub struct SnfResult {
    pub u: IntMatrix,
    pub v: IntMatrix,
    pub u_inv: IntMatrix,
    pub v_inv: IntMatrix,
    pub d: IntMatrix,
    /// Nonzero diagonal entries, all positive.
    pub factors: Vec<BigInt>,
}

impl SnfResult {
    pub fn rank(&self) -> usize {
        self.factors.len()
    }
}

struct SnfState {
    m: IntMatrix,
    u: IntMatrix,
    u_inv: IntMatrix,
    v: IntMatrix,
    v_inv: IntMatrix,
}

impl SnfState {
    fn swap_rows(&mut self, a: usize, b: usize) {
        self.m.swap_rows(a, b);
        self.u.swap_rows(a, b);
        self.u_inv.swap_cols(a, b);
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        self.m.swap_cols(a, b);
        self.v.swap_cols(a, b);
        self.v_inv.swap_rows(a, b);
    }

    fn add_row(&mut self, dst: usize, src: usize, q: &BigInt) {
        self.m.add_row(dst, src, q);
        self.u.add_row(dst, src, q);
        self.u_inv.add_col(src, dst, &-q);
    }

    fn add_col(&mut self, dst: usize, src: usize, q: &BigInt) {
        self.m.add_col(dst, src, q);
        self.v.add_col(dst, src, q);
        self.v_inv.add_row(src, dst, &-q);
    }

    fn negate_row(&mut self, r: usize) {
        self.m.negate_row(r);
        self.u.negate_row(r);
        self.u_inv.negate_col(r);
    }

    /// Smallest nonzero absolute value in the block `[t.., t..]`.
    fn min_entry(&self, t: usize) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize, BigInt)> = None;
        for r in t..self.m.rows {
            for c in t..self.m.cols {
                let a = self.m[(r, c)].abs();
                if !a.is_zero() && best.as_ref().map_or(true, |b| a < b.2) {
                    best = Some((r, c, a));
                }
            }
        }
        best.map(|(r, c, _)| (r, c))
    }
}

/// Smith normal form with the smallest-absolute-value pivot rule.
pub fn smith_normal_form(m: &IntMatrix) -> SnfResult {
    let (rows, cols) = (m.rows, m.cols);
    let mut s = SnfState {
        m: m.clone(),
        u: IntMatrix::identity(rows),
        u_inv: IntMatrix::identity(rows),
        v: IntMatrix::identity(cols),
        v_inv: IntMatrix::identity(cols),
    };
    let mut t = 0;
    while t < rows.min(cols) {
        let Some((r, c)) = s.min_entry(t) else { break };
        s.swap_rows(t, r);
        s.swap_cols(t, c);
        loop {
            let p = s.m[(t, t)].clone();
            let mut clean = true;
            for i in t + 1..rows {
                if !s.m[(i, t)].is_zero() {
                    let q = -(&s.m[(i, t)] / &p);
                    s.add_row(i, t, &q);
                    clean &= s.m[(i, t)].is_zero();
                }
            }
            for j in t + 1..cols {
                if !s.m[(t, j)].is_zero() {
                    let q = -(&s.m[(t, j)] / &p);
                    s.add_col(j, t, &q);
                    clean &= s.m[(t, j)].is_zero();
                }
            }
            if !clean {
                // a smaller remainder sits in row or column t: make it the pivot
                let (mut br, mut bc, mut best) = (t, t, p.abs());
                for i in t + 1..rows {
                    let a = s.m[(i, t)].abs();
                    if !a.is_zero() && a < best {
                        (br, bc, best) = (i, t, a);
                    }
                }
                for j in t + 1..cols {
                    let a = s.m[(t, j)].abs();
                    if !a.is_zero() && a < best {
                        (br, bc, best) = (t, j, a);
                    }
                }
                s.swap_rows(t, br);
                s.swap_cols(t, bc);
                continue;
            }
            let bad = (t + 1..rows)
                .flat_map(|i| (t + 1..cols).map(move |j| (i, j)))
                .find(|&(i, j)| !s.m[(i, j)].is_multiple_of(&p));
            match bad {
                Some((i, _)) => s.add_row(t, i, &BigInt::one()),
                None => break,
            }
        }
        if s.m[(t, t)].is_negative() {
            s.negate_row(t);
        }
        t += 1;
    }
    let factors = (0..rows.min(cols)).map(|i| s.m[(i, i)].clone()).take_while(|x| !x.is_zero()).collect();
    SnfResult { u: s.u, v: s.v, u_inv: s.u_inv, v_inv: s.v_inv, d: s.m, factors }
}

/// Sparse integer matrix stored by columns.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseColumns {
    pub rows: usize,
    pub columns: Vec<Vec<(usize, i64)>>,
}

impl SparseColumns {
    pub fn from_dense(m: &IntMatrix) -> Self {
        let columns = (0..m.cols)
            .map(|c| {
                (0..m.rows)
                    .filter(|&r| !m[(r, c)].is_zero())
                    .map(|r| (r, m[(r, c)].to_i64().expect("entry fits in i64")))
                    .collect()
            })
            .collect();
        Self { rows: m.rows, columns }
    }
}

/// `∂_k: C_k → C_{k-1}` for `k = 1..=top`.
#[derive(Clone, Debug)]
pub struct ChainComplex {
    dims: Vec<usize>,
    boundaries: Vec<SparseColumns>,
}

impl ChainComplex {
    /// `boundaries[k-1]` is `∂_k`. Rejects shapes that do not chain and any
    /// `∂_{k-1}∂_k ≠ 0`.
    pub fn new(dims: Vec<usize>, boundaries: Vec<SparseColumns>) -> Result<Self, HomologyError> {
        if boundaries.len() + 1 != dims.len() {
            return Err(HomologyError::Degree(boundaries.len()));
        }
        for (i, b) in boundaries.iter().enumerate() {
            let k = i + 1;
            if b.rows != dims[k - 1] || b.columns.len() != dims[k] {
                return Err(HomologyError::Shape {
                    degree: k,
                    rows: b.rows,
                    cols: b.columns.len(),
                    expected_rows: dims[k - 1],
                    expected_cols: dims[k],
                });
            }
        }
        for k in 2..dims.len() {
            let (lo, hi) = (&boundaries[k - 2], &boundaries[k - 1]);
            for col in &hi.columns {
                let mut acc: BTreeMap<usize, i128> = BTreeMap::new();
                for &(mid, a) in col {
                    for &(r, b) in &lo.columns[mid] {
                        *acc.entry(r).or_default() += a as i128 * b as i128;
                    }
                }
                if acc.values().any(|&v| v != 0) {
                    return Err(HomologyError::NotAComplex(k));
                }
            }
        }
        Ok(Self { dims, boundaries })
    }

    /// Simplicial chains with the sorted faces of `c` as bases.
    pub fn from_simplicial(c: &SimplicialComplex) -> Self {
        let dims: Vec<usize> = (0..=c.dim()).map(|k| c.faces(k).len()).collect();
        let boundaries = (1..=c.dim())
            .map(|k| {
                let columns = c
                    .faces(k)
                    .iter()
                    .map(|f| {
                        let mut col: Vec<(usize, i64)> = (0..f.len())
                            .map(|drop| {
                                let face: Vec<usize> =
                                    f.iter().enumerate().filter(|&(j, _)| j != drop).map(|(_, &v)| v).collect();
                                (c.face_index(&face).unwrap(), if drop % 2 == 0 { 1 } else { -1 })
                            })
                            .collect();
                        col.sort_unstable();
                        col
                    })
                    .collect();
                SparseColumns { rows: dims[k - 1], columns }
            })
            .collect();
        Self::new(dims, boundaries).expect("simplicial boundary squares to zero")
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn top(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn boundary(&self, k: usize) -> Option<&SparseColumns> {
        if k == 0 {
            None
        } else {
            self.boundaries.get(k - 1)
        }
    }

    pub fn reduce(&self) -> Result<ReducedComplex, HomologyError> {
        ReducedComplex::new(self)
    }
}

#[derive(Clone, Debug)]
struct Step {
    /// `a ∈ C_{k+1}` was paired with `b ∈ C_k`.
    k: usize,
    a: usize,
    b: usize,
    c: i64,
    /// `∂a` at elimination time, without the `b` entry.
    da: Vec<(usize, i64)>,
    /// `⟨∂y, b⟩` for the other cells `y ∈ C_{k+1}` at elimination time.
    row_b: Vec<(usize, i64)>,
}

/// A chain complex after sparse unit elimination, with dense boundaries on
/// the surviving cells and the log needed to transport (co)cycles.
#[derive(Clone, Debug)]
pub struct ReducedComplex {
    original_dims: Vec<usize>,
    cells: Vec<Vec<usize>>,
    dense: Vec<IntMatrix>,
    log: Vec<Step>,
}

type Column = BTreeMap<usize, i64>;

impl ReducedComplex {
    fn new(cx: &ChainComplex) -> Result<Self, HomologyError> {
        let top = cx.top();
        // cols[k][cell] = ∂cell, rows[k][cell] = cofaces of cell
        let mut cols: Vec<BTreeMap<usize, Column>> = vec![BTreeMap::new(); top + 1];
        let mut rows: Vec<BTreeMap<usize, BTreeSet<usize>>> = vec![BTreeMap::new(); top + 1];
        for k in 0..=top {
            for cell in 0..cx.dims[k] {
                cols[k].insert(cell, Column::new());
                rows[k].insert(cell, BTreeSet::new());
            }
        }
        for k in 1..=top {
            for (cell, col) in cx.boundaries[k - 1].columns.iter().enumerate() {
                for &(r, v) in col {
                    if v != 0 {
                        cols[k].get_mut(&cell).unwrap().insert(r, v);
                        rows[k - 1].get_mut(&r).unwrap().insert(cell);
                    }
                }
            }
        }
        let mut log = Vec::new();
        loop {
            let mut progress = false;
            for k in (0..top).rev() {
                let candidates: Vec<usize> = cols[k + 1].keys().copied().collect();
                for a in candidates {
                    let Some(col) = cols[k + 1].get(&a) else { continue };
                    let pick = col
                        .iter()
                        .filter(|(_, v)| v.abs() == 1)
                        .min_by_key(|(b, _)| (rows[k][b].len(), **b))
                        .map(|(&b, &c)| (b, c));
                    if let Some((b, c)) = pick {
                        log.push(eliminate(&mut cols, &mut rows, k, a, b, c)?);
                        progress = true;
                    }
                }
            }
            if !progress {
                break;
            }
        }
        let cells: Vec<Vec<usize>> = cols.iter().map(|m| m.keys().copied().collect()).collect();
        let mut dense = vec![IntMatrix::zeros(0, cells[0].len())];
        for k in 1..=top {
            let mut m = IntMatrix::zeros(cells[k - 1].len(), cells[k].len());
            for (j, cell) in cells[k].iter().enumerate() {
                for (r, &v) in &cols[k][cell] {
                    let i = cells[k - 1].binary_search(r).unwrap();
                    m[(i, j)] = BigInt::from(v);
                }
            }
            dense.push(m);
        }
        Ok(Self { original_dims: cx.dims.clone(), cells, dense, log })
    }

    /// Surviving cells per degree.
    pub fn cell_counts(&self) -> Vec<usize> {
        self.cells.iter().map(Vec::len).collect()
    }

    fn top(&self) -> usize {
        self.cells.len() - 1
    }

    fn dense_boundary(&self, k: usize) -> IntMatrix {
        if k == 0 {
            IntMatrix::zeros(0, self.cells[0].len())
        } else if k > self.top() {
            IntMatrix::zeros(self.cells[self.top()].len(), 0)
        } else {
            self.dense[k].clone()
        }
    }

    pub fn homology(&self, k: usize) -> Result<Homology, HomologyError> {
        if k > self.top() {
            return Err(HomologyError::Degree(k));
        }
        let out = smith_normal_form(&self.dense_boundary(k));
        let inc = smith_normal_form(&self.dense_boundary(k + 1));
        let betti = self.cells[k].len() - out.rank() - inc.rank();
        let torsion = inc.factors.into_iter().filter(|d| !d.is_one()).collect();
        Ok(Homology { betti, torsion })
    }

    /// Integral cocycles dual to integral cycles that generate `H_k / torsion`.
    pub fn cohomology_basis(&self, k: usize) -> Result<CohomologyBasis, HomologyError> {
        if k > self.top() {
            return Err(HomologyError::Degree(k));
        }
        let n = self.cells[k].len();
        let out = smith_normal_form(&self.dense_boundary(k));
        let inc_m = self.dense_boundary(k + 1);
        let rk = out.rank();
        // kernel of ∂_k: trailing columns of V
        let kernel: Vec<Vec<BigInt>> = (rk..n).map(|c| out.v.column(c)).collect();
        // boundaries in kernel coordinates: trailing rows of V^{-1} ∂_{k+1}
        let coords = out.v_inv.mul(&inc_m);
        let mut m = IntMatrix::zeros(n - rk, inc_m.cols);
        for i in 0..n - rk {
            for j in 0..inc_m.cols {
                m[(i, j)] = coords[(rk + i, j)].clone();
            }
        }
        let snf_b = smith_normal_form(&m);
        let s = snf_b.rank();
        let cycles: Vec<Vec<BigInt>> = (s..n - rk)
            .map(|j| {
                let w = snf_b.u_inv.column(j);
                (0..n).map(|r| (0..kernel.len()).map(|q| &kernel[q][r] * &w[q]).sum()).collect()
            })
            .collect();
        let b = cycles.len();
        // cocycles: rows r.. of U from the SNF of ∂_{k+1}
        let inc = smith_normal_form(&inc_m);
        let r = inc.rank();
        let phi: Vec<Vec<BigInt>> = (r..n).map(|i| inc.u.row(i)).collect();
        let mut e = IntMatrix::zeros(phi.len(), b);
        for (i, p) in phi.iter().enumerate() {
            for (j, z) in cycles.iter().enumerate() {
                e[(i, j)] = dot(p, z);
            }
        }
        let snf_e = smith_normal_form(&e);
        assert!(snf_e.factors.len() == b && snf_e.factors.iter().all(One::is_one), "evaluation is onto Z^b");
        let pphi: Vec<Vec<BigInt>> = (0..b)
            .map(|i| (0..n).map(|c| (0..phi.len()).map(|q| &snf_e.u[(i, q)] * &phi[q][c]).sum()).collect())
            .collect();
        let cocycles: Vec<Vec<BigInt>> = (0..b)
            .map(|i| (0..n).map(|c| (0..b).map(|q| &snf_e.v[(i, q)] * &pphi[q][c]).sum()).collect())
            .collect();
        Ok(CohomologyBasis {
            degree: k,
            cocycles: cocycles.iter().map(|v| self.pull_back_cochain(k, v)).collect(),
            cycles: cycles.iter().map(|v| self.lift_chain(k, v)).collect(),
        })
    }

    /// Carry a cochain on the surviving `k`-cells to all original `k`-cells.
    pub fn pull_back_cochain(&self, k: usize, reduced: &[BigInt]) -> Vec<BigInt> {
        let mut full = vec![BigInt::zero(); self.original_dims[k]];
        for (cell, v) in self.cells[k].iter().zip(reduced) {
            full[*cell] = v.clone();
        }
        for step in self.log.iter().rev().filter(|s| s.k == k) {
            let acc: BigInt = step.da.iter().map(|&(d, v)| &full[d] * v).sum();
            full[step.b] = -acc * step.c;
        }
        full
    }

    /// Carry a chain on the surviving `k`-cells to the original complex.
    pub fn lift_chain(&self, k: usize, reduced: &[BigInt]) -> Vec<BigInt> {
        let mut full = vec![BigInt::zero(); self.original_dims[k]];
        for (cell, v) in self.cells[k].iter().zip(reduced) {
            full[*cell] = v.clone();
        }
        for step in self.log.iter().rev().filter(|s| s.k + 1 == k) {
            let acc: BigInt = step.row_b.iter().map(|&(y, beta)| &full[y] * beta).sum();
            full[step.a] = -acc * step.c;
        }
        full
    }
}

fn eliminate(
    cols: &mut [BTreeMap<usize, Column>],
    rows: &mut [BTreeMap<usize, BTreeSet<usize>>],
    k: usize,
    a: usize,
    b: usize,
    c: i64,
) -> Result<Step, HomologyError> {
    let da = cols[k + 1][&a].clone();
    let others: Vec<usize> = rows[k][&b].iter().copied().filter(|&y| y != a).collect();
    let mut row_b = Vec::with_capacity(others.len());
    for y in others {
        let beta = cols[k + 1][&y][&b];
        row_b.push((y, beta));
        let f = beta * c; // c = ±1, so β/c = β·c
        let col = cols[k + 1].get_mut(&y).unwrap();
        for (&x, &v) in &da {
            let old = col.get(&x).copied().unwrap_or(0);
            let new = v.checked_mul(f).and_then(|fv| old.checked_sub(fv)).ok_or(HomologyError::Overflow)?;
            let coface = rows[k].get_mut(&x).unwrap();
            if new == 0 {
                col.remove(&x);
                coface.remove(&y);
            } else {
                col.insert(x, new);
                coface.insert(y);
            }
        }
    }
    for x in da.keys() {
        rows[k].get_mut(x).unwrap().remove(&a);
    }
    if let Some(cofaces) = rows[k + 1].remove(&a) {
        for z in cofaces {
            cols[k + 2].get_mut(&z).unwrap().remove(&a);
        }
    }
    cols[k + 1].remove(&a);
    let db = cols[k].remove(&b).unwrap();
    if k > 0 {
        for x in db.keys() {
            rows[k - 1].get_mut(x).unwrap().remove(&b);
        }
    }
    rows[k].remove(&b);
    Ok(Step { k, a, b, c, da: da.into_iter().filter(|&(x, _)| x != b).collect(), row_b })
}

fn dot(a: &[BigInt], b: &[BigInt]) -> BigInt {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Homology {
    pub betti: usize,
    /// Invariant factors greater than one.
    pub torsion: Vec<BigInt>,
}

impl Homology {
    pub fn torsion_order(&self) -> BigInt {
        self.torsion.iter().product()
    }
}

/// Integral cocycles `φ_i` and cycles `z_j` with `φ_i(z_j) = δ_ij`; the
/// classes of the `φ_i` form a basis of `H^k(·, Z)` modulo torsion.
#[derive(Clone, Debug)]
pub struct CohomologyBasis {
    pub degree: usize,
    pub cocycles: Vec<Vec<BigInt>>,
    pub cycles: Vec<Vec<BigInt>>,
}

impl CohomologyBasis {
    pub fn rank(&self) -> usize {
        self.cocycles.len()
    }

    /// Coordinates of the class of a cocycle in this basis.
    pub fn coordinates(&self, cocycle: &[BigInt]) -> Vec<BigInt> {
        self.cycles.iter().map(|z| dot(cocycle, z)).collect()
    }
}

pub fn homology_groups(c: &ChainComplex, k: usize) -> Result<Homology, HomologyError> {
    c.reduce()?.homology(k)
}

pub fn simplicial_homology(c: &SimplicialComplex, k: usize) -> Result<Homology, HomologyError> {
    homology_groups(&ChainComplex::from_simplicial(c), k)
}

/// Number of flat U(1) bundles counted by `#H_1(L, Z)`; only finite for
/// rational homology spheres.
pub fn asd_bundle_count(l: &SimplicialComplex) -> Result<BigInt, HomologyError> {
    if l.dim() != 3 {
        return Err(HomologyError::WrongDimension { expected: 3, found: l.dim() });
    }
    let h1 = simplicial_homology(l, 1)?;
    if h1.betti > 0 {
        return Err(HomologyError::InfiniteFamily { b1: h1.betti });
    }
    Ok(h1.torsion_order())
}

fn check_closed_oriented(c: &SimplicialComplex) -> Result<(), HomologyError> {
    if !c.is_closed() {
        return Err(HomologyError::NotClosed);
    }
    if !c.orientation_issues().is_empty() {
        return Err(HomologyError::NotOriented);
    }
    Ok(())
}

/// `⟨φ ∪ ψ, [c]⟩` with the Alexander–Whitney product on sorted simplices.
/// Cochains are indexed by [`SimplicialComplex::faces`].
pub fn cup_evaluate(c: &SimplicialComplex, p: usize, phi: &[BigInt], psi: &[BigInt]) -> BigInt {
    let mut total = BigInt::zero();
    for (i, s) in c.simplices().iter().enumerate() {
        let sorted = crate::mesh::sorted_with_parity(s).0;
        let front = c.face_index(&sorted[..=p]).unwrap();
        let back = c.face_index(&sorted[p..]).unwrap();
        let term = &phi[front] * &psi[back];
        if c.simplex_sign(i) > 0 {
            total += term;
        } else {
            total -= term;
        }
    }
    total
}

/// Matrix of `H^2 × H^1 → Z`, `(α, β) ↦ ⟨α ∪ β, [L]⟩`, rows indexed by the
/// `H^2` basis.
#[derive(Clone, Debug)]
pub struct CupPairing {
    pub matrix: IntMatrix,
    pub h1: CohomologyBasis,
    pub h2: CohomologyBasis,
}

pub fn cup_pairing(l: &SimplicialComplex) -> Result<CupPairing, HomologyError> {
    if l.dim() != 3 {
        return Err(HomologyError::WrongDimension { expected: 3, found: l.dim() });
    }
    check_closed_oriented(l)?;
    let red = ChainComplex::from_simplicial(l).reduce()?;
    let h1 = red.cohomology_basis(1)?;
    let h2 = red.cohomology_basis(2)?;
    let mut matrix = IntMatrix::zeros(h2.rank(), h1.rank());
    for (i, a) in h2.cocycles.iter().enumerate() {
        for (j, b) in h1.cocycles.iter().enumerate() {
            matrix[(i, j)] = cup_evaluate(l, 2, a, b);
        }
    }
    Ok(CupPairing { matrix, h1, h2 })
}

#[derive(Clone, Debug)]
pub struct IntersectionForm {
    pub matrix: IntMatrix,
    pub bplus: usize,
    pub bminus: usize,
}

pub fn intersection_bplus(c: &SimplicialComplex) -> Result<IntersectionForm, HomologyError> {
    if c.dim() != 4 {
        return Err(HomologyError::WrongDimension { expected: 4, found: c.dim() });
    }
    check_closed_oriented(c)?;
    let h2 = ChainComplex::from_simplicial(c).reduce()?.cohomology_basis(2)?;
    let n = h2.rank();
    let mut matrix = IntMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            matrix[(i, j)] = cup_evaluate(c, 2, &h2.cocycles[i], &h2.cocycles[j]);
        }
    }
    let (bplus, bminus, _) = matrix.to_rational().inertia();
    Ok(IntersectionForm { matrix, bplus, bminus })
}
