//! Symplectic linear algebra on `H²(L) ⊕ H¹(L)` for a 3-manifold `L`
//! bounding a compact 4-manifold `C`, and the restriction images from `C`.
//!
//! All arithmetic is over `Q`. Cohomology classes are written in the integral
//! cocycle bases of [`crate::homology::CohomologyBasis`], whose coordinates
//! are read off by evaluating on the dual cycles.

use std::collections::BTreeSet;
use std::path::Path;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use thiserror::Error;

use crate::homology::{cup_pairing, ChainComplex, CohomologyBasis, HomologyError, SparseColumns};
use crate::mesh::{load_complex, sorted_with_parity, MeshError, SimplicialComplex};
use crate::rational::QMatrix;

#[derive(Debug, Error)]
pub enum LagrError {
    #[error(transparent)]
    Homology(#[from] HomologyError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("L is not the boundary of C: {0}")]
    NotBoundary(String),
    #[error("simplex {0:?} of L is oriented against the boundary orientation of C")]
    OrientationMismatch(Vec<usize>),
    #[error("{0}")]
    Shape(String),
}

/// `V = R^m ⊕ R^m` with `ω = [[0, M], [−Mᵀ, 0]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymplecticSpace {
    m: usize,
    pairing: QMatrix,
}

impl SymplecticSpace {
    /// From the square cup-product matrix `M` (rows `H²`, columns `H¹`).
    pub fn from_cup(m: &QMatrix) -> Result<Self, LagrError> {
        if m.nrows() != m.ncols() {
            return Err(LagrError::Shape(format!("cup matrix is {}x{}", m.nrows(), m.ncols())));
        }
        let n = m.nrows();
        if n > 0 && m.det().is_zero() {
            return Err(LagrError::Shape("cup pairing is degenerate".into()));
        }
        let mt = m.transpose().neg();
        let pairing = QMatrix::from_fn(2 * n, 2 * n, |r, c| match (r < n, c < n) {
            (true, false) => m[(r, c - n)].clone(),
            (false, true) => mt[(r - n, c)].clone(),
            _ => BigRational::zero(),
        });
        Ok(Self { m: n, pairing })
    }

    pub fn half_dim(&self) -> usize {
        self.m
    }

    pub fn pairing(&self) -> &QMatrix {
        &self.pairing
    }

    /// The same form after the change of basis `x = P y`: `Pᵀ ω P`.
    pub fn transformed(&self, p: &QMatrix) -> Self {
        Self { m: self.m, pairing: p.transpose().mul(&self.pairing).mul(p) }
    }
}

/// Whether the column span of `w` is isotropic and of dimension `m`.
pub fn is_lagrangian(w: &QMatrix, s: &SymplecticSpace) -> bool {
    if w.nrows() != 2 * s.m {
        return false;
    }
    w.transpose().mul(&s.pairing).mul(w).is_zero() && w.rank() == s.m
}

/// Source of `α`: the whole restriction image, or the restriction of a
/// prescribed subspace of `H²(C)` (columns in the `H²(C)` basis).
#[derive(Clone, Debug, PartialEq)]
pub enum AlphaMode {
    FullImage,
    Subspace(QMatrix),
}

/// One group of the long exact sequence of the pair with the ranks of the
/// maps into and out of it.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactnessNode {
    pub label: String,
    pub dim: usize,
    pub rank_in: usize,
    pub rank_out: usize,
    pub composite_zero: bool,
}

impl ExactnessNode {
    pub fn is_exact(&self) -> bool {
        self.composite_zero && self.rank_in + self.rank_out == self.dim
    }
}

#[derive(Clone, Debug)]
pub struct BoundaryData {
    /// `H²(C) → H²(L)` (or its restriction to the chosen subspace).
    pub alpha: QMatrix,
    /// `H¹(C) → H¹(L)`.
    pub beta: QMatrix,
    pub space: SymplecticSpace,
    pub nodes: Vec<ExactnessNode>,
}

impl BoundaryData {
    /// Columns spanning `Im α ⊕ Im β` in `H²(L) ⊕ H¹(L)`.
    pub fn image_span(&self) -> QMatrix {
        let m = self.space.m;
        let (a, b) = (self.alpha.ncols(), self.beta.ncols());
        QMatrix::from_fn(2 * m, a + b, |r, c| match (r < m, c < a) {
            (true, true) => self.alpha[(r, c)].clone(),
            (false, false) => self.beta[(r - m, c - a)].clone(),
            _ => BigRational::zero(),
        })
    }

    pub fn is_lagrangian(&self) -> bool {
        is_lagrangian(&self.image_span(), &self.space)
    }

    pub fn sequence_is_exact(&self) -> bool {
        self.nodes.iter().all(ExactnessNode::is_exact)
    }
}

/// How the faces of `L` sit in `C`: per degree, the index of the image face
/// and the orientation sign.
struct Embedding {
    images: Vec<Vec<(usize, i64)>>,
    /// Per degree, the `C`-faces outside `L`, ascending.
    relative: Vec<Vec<usize>>,
}

impl Embedding {
    fn new(c: &SimplicialComplex, l: &SimplicialComplex, map: &[usize]) -> Result<Self, LagrError> {
        if map.len() != l.n_vertices() {
            return Err(LagrError::NotBoundary(format!("map has {} entries for {} vertices", map.len(), l.n_vertices())));
        }
        if map.iter().collect::<BTreeSet<_>>().len() != map.len() || map.iter().any(|&v| v >= c.n_vertices()) {
            return Err(LagrError::NotBoundary("vertex map is not injective into C".into()));
        }
        let mut images = Vec::new();
        for k in 0..=l.dim() {
            let mut out = Vec::new();
            for f in l.faces(k) {
                let img: Vec<usize> = f.iter().map(|&v| map[v]).collect();
                let (sorted, odd) = sorted_with_parity(&img);
                let idx = c
                    .face_index(&sorted)
                    .ok_or_else(|| LagrError::NotBoundary(format!("face {f:?} of L has no image in C")))?;
                out.push((idx, if odd { -1 } else { 1 }));
            }
            images.push(out);
        }
        let relative = (0..=c.dim())
            .map(|k| {
                let used: BTreeSet<usize> = images.get(k).map(|v| v.iter().map(|p| p.0).collect()).unwrap_or_default();
                (0..c.faces(k).len()).filter(|i| !used.contains(i)).collect()
            })
            .collect();
        Ok(Self { images, relative })
    }
}

fn check_boundary(c: &SimplicialComplex, l: &SimplicialComplex, map: &[usize]) -> Result<(), LagrError> {
    if l.dim() + 1 != c.dim() {
        return Err(LagrError::NotBoundary(format!("dimensions {} and {}", c.dim(), l.dim())));
    }
    let facets: std::collections::BTreeMap<Vec<usize>, bool> =
        c.boundary_facets().into_iter().map(|f| sorted_with_parity(&f)).collect();
    if facets.len() != l.simplices().len() {
        return Err(LagrError::NotBoundary(format!("∂C has {} facets, L has {}", facets.len(), l.simplices().len())));
    }
    for s in l.simplices() {
        let img: Vec<usize> = s.iter().map(|&v| map[v]).collect();
        let (sorted, odd) = sorted_with_parity(&img);
        match facets.get(&sorted) {
            None => return Err(LagrError::NotBoundary(format!("simplex {s:?} of L is not a boundary facet"))),
            Some(&b) if b != odd => return Err(LagrError::OrientationMismatch(s.clone())),
            _ => {}
        }
    }
    Ok(())
}

/// Chains of `C` modulo chains of `L`.
fn relative_complex(c: &SimplicialComplex, emb: &Embedding) -> Result<ChainComplex, HomologyError> {
    let full = ChainComplex::from_simplicial(c);
    let dims: Vec<usize> = emb.relative.iter().map(Vec::len).collect();
    let boundaries = (1..=c.dim())
        .map(|k| {
            let rows = &emb.relative[k - 1];
            let b = full.boundary(k).expect("boundary exists");
            let columns = emb.relative[k]
                .iter()
                .map(|&col| {
                    b.columns[col].iter().filter_map(|&(r, v)| rows.binary_search(&r).ok().map(|i| (i, v))).collect()
                })
                .collect();
            SparseColumns { rows: rows.len(), columns }
        })
        .collect();
    ChainComplex::new(dims, boundaries)
}

fn to_q(v: &[BigInt]) -> Vec<BigRational> {
    v.iter().map(|x| BigRational::from_integer(x.clone())).collect()
}

/// Matrix whose columns are the basis coordinates of the images.
fn coordinate_matrix(target: &CohomologyBasis, images: &[Vec<BigInt>]) -> QMatrix {
    let cols: Vec<Vec<BigRational>> = images.iter().map(|v| to_q(&target.coordinates(v))).collect();
    QMatrix::from_fn(target.rank(), images.len(), |r, c| cols[c][r].clone())
}

/// `(δψ)(σ) = Σ_i (−1)^i ψ(σ \ v_i)` on sorted faces of `c`.
fn coboundary(c: &SimplicialComplex, k: usize, psi: &[BigInt]) -> Vec<BigInt> {
    c.faces(k + 1)
        .iter()
        .map(|f| {
            (0..f.len())
                .map(|drop| {
                    let face: Vec<usize> = f.iter().enumerate().filter(|&(j, _)| j != drop).map(|(_, &v)| v).collect();
                    let v = &psi[c.face_index(&face).unwrap()];
                    if drop % 2 == 0 {
                        v.clone()
                    } else {
                        -v
                    }
                })
                .sum()
        })
        .collect()
}

/// Restriction maps, exactness of the long exact sequence of `(C, L)`, and
/// the symplectic space of `L`.
pub fn boundary_data(
    c: &SimplicialComplex,
    l: &SimplicialComplex,
    map: &[usize],
    mode: &AlphaMode,
) -> Result<BoundaryData, LagrError> {
    let emb = Embedding::new(c, l, map)?;
    check_boundary(c, l, map)?;
    let n = c.dim();
    let hc: Vec<CohomologyBasis> = {
        let red = ChainComplex::from_simplicial(c).reduce()?;
        (0..=n).map(|k| red.cohomology_basis(k)).collect::<Result<_, _>>()?
    };
    let hl: Vec<CohomologyBasis> = {
        let red = ChainComplex::from_simplicial(l).reduce()?;
        (0..n).map(|k| red.cohomology_basis(k)).collect::<Result<_, _>>()?
    };
    let hr: Vec<CohomologyBasis> = {
        let red = relative_complex(c, &emb)?.reduce()?;
        (0..=n).map(|k| red.cohomology_basis(k)).collect::<Result<_, _>>()?
    };

    let restrict = |k: usize, psi: &[BigInt]| -> Vec<BigInt> {
        emb.images[k].iter().map(|&(i, s)| &psi[i] * s).collect()
    };
    let extend_rel = |k: usize, psi: &[BigInt]| -> Vec<BigInt> {
        let mut full = vec![BigInt::zero(); c.faces(k).len()];
        for (&i, v) in emb.relative[k].iter().zip(psi) {
            full[i] = v.clone();
        }
        full
    };
    let connecting = |k: usize, phi: &[BigInt]| -> Vec<BigInt> {
        let mut full = vec![BigInt::zero(); c.faces(k).len()];
        for (&(i, s), v) in emb.images[k].iter().zip(phi) {
            full[i] = v * s;
        }
        let d = coboundary(c, k, &full);
        emb.relative[k + 1].iter().map(|&i| d[i].clone()).collect()
    };

    // j_k: H^k(C,L) → H^k(C), r_k: H^k(C) → H^k(L), δ_k: H^k(L) → H^{k+1}(C,L)
    let j: Vec<QMatrix> =
        (0..=n).map(|k| coordinate_matrix(&hc[k], &hr[k].cocycles.iter().map(|p| extend_rel(k, p)).collect::<Vec<_>>())).collect();
    let r: Vec<QMatrix> =
        (0..n).map(|k| coordinate_matrix(&hl[k], &hc[k].cocycles.iter().map(|p| restrict(k, p)).collect::<Vec<_>>())).collect();
    let d: Vec<QMatrix> = (0..n)
        .map(|k| coordinate_matrix(&hr[k + 1], &hl[k].cocycles.iter().map(|p| connecting(k, p)).collect::<Vec<_>>()))
        .collect();

    let mut nodes = Vec::new();
    let node = |label: String, dim: usize, fin: Option<&QMatrix>, fout: Option<&QMatrix>| {
        let rank_in = fin.map_or(0, QMatrix::rank);
        let rank_out = fout.map_or(0, QMatrix::rank);
        let composite_zero = match (fin, fout) {
            (Some(a), Some(b)) => b.mul(a).is_zero(),
            _ => true,
        };
        ExactnessNode { label, dim, rank_in, rank_out, composite_zero }
    };
    for k in 0..=n {
        let din = if k == 0 { None } else { Some(&d[k - 1]) };
        nodes.push(node(format!("H^{k}(C,L)"), hr[k].rank(), din, Some(&j[k])));
        nodes.push(node(format!("H^{k}(C)"), hc[k].rank(), Some(&j[k]), r.get(k)));
        if k < n {
            nodes.push(node(format!("H^{k}(L)"), hl[k].rank(), Some(&r[k]), Some(&d[k])));
        }
    }

    if n != 4 {
        return Err(LagrError::Shape(format!("expected a 4-dimensional C, found dimension {n}")));
    }
    let cp = cup_pairing(l)?;
    let space = SymplecticSpace::from_cup(&cp.matrix.to_rational())?;
    let r2 = coordinate_matrix(&cp.h2, &hc[2].cocycles.iter().map(|p| restrict(2, p)).collect::<Vec<_>>());
    let beta = coordinate_matrix(&cp.h1, &hc[1].cocycles.iter().map(|p| restrict(1, p)).collect::<Vec<_>>());
    let alpha = match mode {
        AlphaMode::FullImage => r2,
        AlphaMode::Subspace(s) => {
            if s.nrows() != hc[2].rank() {
                return Err(LagrError::Shape(format!("subspace has {} rows, H²(C) has rank {}", s.nrows(), hc[2].rank())));
            }
            r2.mul(s)
        }
    };
    Ok(BoundaryData { alpha, beta, space, nodes })
}

/// Parse `b vertex_in_L vertex_in_C` lines into a vertex map for `L`.
pub fn parse_bmap(text: &str, n_l: usize) -> Result<Vec<usize>, LagrError> {
    let mut map: Vec<Option<usize>> = vec![None; n_l];
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let perr = |msg: &str| LagrError::Parse { line, msg: msg.to_string() };
        let t: Vec<&str> = content.split_whitespace().collect();
        if t.len() != 3 || t[0] != "b" {
            return Err(perr("expected `b vertex_in_L vertex_in_C`"));
        }
        let vl: usize = t[1].parse().map_err(|_| perr("bad vertex id"))?;
        let vc: usize = t[2].parse().map_err(|_| perr("bad vertex id"))?;
        let slot = map.get_mut(vl).ok_or_else(|| perr("vertex of L out of range"))?;
        if slot.replace(vc).is_some() {
            return Err(perr("vertex of L mapped twice"));
        }
    }
    map.into_iter()
        .enumerate()
        .map(|(v, m)| m.ok_or(LagrError::Parse { line: 0, msg: format!("vertex {v} of L is not mapped") }))
        .collect()
}

pub fn format_bmap(map: &[usize]) -> String {
    map.iter().enumerate().map(|(l, c)| format!("b {l} {c}\n")).collect()
}

/// Load `(C, L, map)` from two mesh files and a boundary map file.
pub fn load_pair(
    c_path: impl AsRef<Path>,
    l_path: impl AsRef<Path>,
    bmap_path: impl AsRef<Path>,
) -> Result<(SimplicialComplex, SimplicialComplex, Vec<usize>), LagrError> {
    let c = load_complex(c_path)?;
    let l = load_complex(l_path)?;
    let map = parse_bmap(&std::fs::read_to_string(bmap_path)?, l.n_vertices())?;
    Ok((c, l, map))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(rows: usize, cols: usize, v: &[i64]) -> QMatrix {
        QMatrix::from_i64(rows, cols, v)
    }

    #[test]
    fn coordinate_lagrangians() {
        let s = SymplecticSpace::from_cup(&q(2, 2, &[1, 0, 0, 1])).unwrap();
        let first = q(4, 2, &[1, 0, 0, 1, 0, 0, 0, 0]);
        assert!(is_lagrangian(&first, &s));
        assert!(!is_lagrangian(&QMatrix::identity(4), &s));
        // isotropic but too small
        assert!(!is_lagrangian(&q(4, 1, &[1, 0, 0, 0]), &s));
        // half-dimensional but not isotropic
        assert!(!is_lagrangian(&q(4, 2, &[1, 0, 0, 0, 0, 0, 1, 0]), &s));
    }

    #[test]
    fn degenerate_cup_matrix_is_rejected() {
        assert!(SymplecticSpace::from_cup(&q(2, 2, &[1, 1, 1, 1])).is_err());
        assert_eq!(SymplecticSpace::from_cup(&QMatrix::zeros(0, 0)).unwrap().half_dim(), 0);
    }

    #[test]
    fn bmap_round_trip_and_errors() {
        let map = vec![3, 0, 7];
        assert_eq!(parse_bmap(&format_bmap(&map), 3).unwrap(), map);
        assert!(matches!(parse_bmap("b 0 1\nb 0 2\n", 1), Err(LagrError::Parse { line: 2, .. })));
        assert!(matches!(parse_bmap("b 0 1\n", 2), Err(LagrError::Parse { .. })));
    }
}
