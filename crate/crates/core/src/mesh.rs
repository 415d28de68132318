//! Simplicial 3- and 4-complexes immersed in the flat torus `T^7 = (R/2πZ)^7`.
//!
//! Simplices are affine in the universal cover. Each simplex is lifted from
//! its first vertex: that vertex sits at its stored position plus `2π·w` for
//! the simplex's winding vector `w`, and every other vertex is placed at the
//! minimal image of its position relative to the first. Integrals of
//! constant-coefficient forms over such simplices are exact.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::path::Path;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::forms::{AlternatingForm, FormError, Metric};
use crate::g2::G2Structure;

pub const TAU: f64 = std::f64::consts::TAU;
pub const AMBIENT_DIM: usize = 7;

pub type Point = [f64; AMBIENT_DIM];

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid mesh: {}", join_issues(.0))]
    Invalid(Vec<MeshIssue>),
    #[error("mesh has no vertex positions")]
    MissingPositions,
    #[error("mesh has no theta-level labels")]
    MissingLevels,
    #[error("expected a {expected}-dimensional mesh, found dimension {found}")]
    WrongDimension { expected: usize, found: usize },
    #[error("complex is not orientable")]
    NotOrientable,
    #[error(transparent)]
    Form(#[from] FormError),
}

/// One reason a complex or immersion failed validation.
#[derive(Clone, Debug, PartialEq)]
pub enum MeshIssue {
    WrongArity { simplex: usize, found: usize },
    VertexOutOfRange { simplex: usize, vertex: usize },
    RepeatedVertex { simplex: usize },
    DuplicateSimplex { first: usize, second: usize },
    OverSharedFacet { facet: Vec<usize>, count: usize },
    OrientationMismatch { facet: Vec<usize>, simplices: (usize, usize) },
    Degenerate { simplex: usize, gram: f64 },
    LevelCount { expected: usize, found: usize },
}

impl fmt::Display for MeshIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::WrongArity { simplex, found } => write!(f, "simplex {simplex} has {found} vertices"),
            Self::VertexOutOfRange { simplex, vertex } => {
                write!(f, "simplex {simplex} references missing vertex {vertex}")
            }
            Self::RepeatedVertex { simplex } => write!(f, "simplex {simplex} repeats a vertex"),
            Self::DuplicateSimplex { first, second } => {
                write!(f, "simplices {first} and {second} have the same vertex set")
            }
            Self::OverSharedFacet { facet, count } => {
                write!(f, "facet {facet:?} is shared by {count} simplices")
            }
            Self::OrientationMismatch { facet, simplices } => write!(
                f,
                "orientation mismatch across facet {facet:?} (simplices {} and {})",
                simplices.0, simplices.1
            ),
            Self::Degenerate { simplex, gram } => {
                write!(f, "simplex {simplex} is degenerate (gram determinant {gram:e})")
            }
            Self::LevelCount { expected, found } => {
                write!(f, "{found} theta labels for {expected} vertices")
            }
        }
    }
}

fn join_issues(issues: &[MeshIssue]) -> String {
    issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; ")
}

/// Sorted copy of `s` and the parity of the sorting permutation (`true` = odd).
pub fn sorted_with_parity(s: &[usize]) -> (Vec<usize>, bool) {
    let mut v = s.to_vec();
    let mut odd = false;
    for i in 1..v.len() {
        let mut j = i;
        while j > 0 && v[j - 1] > v[j] {
            v.swap(j - 1, j);
            odd = !odd;
            j -= 1;
        }
    }
    (v, odd)
}

#[derive(Clone, Debug, Default)]
struct Skeleton {
    faces: Vec<Vec<Vec<usize>>>,
    index: Vec<HashMap<Vec<usize>, usize>>,
}

/// Pure combinatorics: oriented top simplices over vertices `0..n_vertices`.
#[derive(Clone, Debug)]
pub struct SimplicialComplex {
    dim: usize,
    n_vertices: usize,
    simplices: Vec<Vec<usize>>,
    skeleton: OnceLock<Skeleton>,
}

impl PartialEq for SimplicialComplex {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.n_vertices == other.n_vertices && self.simplices == other.simplices
    }
}

impl SimplicialComplex {
    /// Checks arity, vertex ranges, repeated vertices, duplicate simplices and
    /// facet multiplicity. Orientation is checked separately.
    pub fn new(dim: usize, n_vertices: usize, simplices: Vec<Vec<usize>>) -> Result<Self, MeshError> {
        let mut issues = Vec::new();
        let mut seen: HashMap<Vec<usize>, usize> = HashMap::new();
        for (i, s) in simplices.iter().enumerate() {
            if s.len() != dim + 1 {
                issues.push(MeshIssue::WrongArity { simplex: i, found: s.len() });
                continue;
            }
            if let Some(&v) = s.iter().find(|&&v| v >= n_vertices) {
                issues.push(MeshIssue::VertexOutOfRange { simplex: i, vertex: v });
                continue;
            }
            let (sorted, _) = sorted_with_parity(s);
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                issues.push(MeshIssue::RepeatedVertex { simplex: i });
                continue;
            }
            if let Some(&first) = seen.get(&sorted) {
                issues.push(MeshIssue::DuplicateSimplex { first, second: i });
            } else {
                seen.insert(sorted, i);
            }
        }
        if !issues.is_empty() {
            return Err(MeshError::Invalid(issues));
        }
        let c = Self { dim, n_vertices, simplices, skeleton: OnceLock::new() };
        let over: Vec<MeshIssue> = c
            .facet_incidence()
            .into_iter()
            .filter(|(_, inc)| inc.len() > 2)
            .map(|(facet, inc)| MeshIssue::OverSharedFacet { facet, count: inc.len() })
            .collect();
        if !over.is_empty() {
            return Err(MeshError::Invalid(over));
        }
        Ok(c)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn simplices(&self) -> &[Vec<usize>] {
        &self.simplices
    }

    /// `+1` if simplex `i` is positively ordered relative to its sorted vertex list.
    pub fn simplex_sign(&self, i: usize) -> i64 {
        if sorted_with_parity(&self.simplices[i]).1 {
            -1
        } else {
            1
        }
    }

    /// Sorted facets with the incident simplices and the sign of the induced
    /// boundary orientation relative to the sorted facet.
    pub fn facet_incidence(&self) -> BTreeMap<Vec<usize>, Vec<(usize, i64)>> {
        let mut map: BTreeMap<Vec<usize>, Vec<(usize, i64)>> = BTreeMap::new();
        for (i, s) in self.simplices.iter().enumerate() {
            for drop in 0..s.len() {
                let facet: Vec<usize> = s.iter().enumerate().filter(|&(j, _)| j != drop).map(|(_, &v)| v).collect();
                let (sorted, odd) = sorted_with_parity(&facet);
                let sign = if (drop % 2 == 1) ^ odd { -1 } else { 1 };
                map.entry(sorted).or_default().push((i, sign));
            }
        }
        map
    }

    pub fn orientation_issues(&self) -> Vec<MeshIssue> {
        self.facet_incidence()
            .into_iter()
            .filter_map(|(facet, inc)| match inc.as_slice() {
                [(a, sa), (b, sb)] if sa == sb => {
                    Some(MeshIssue::OrientationMismatch { facet, simplices: (*a, *b) })
                }
                _ => None,
            })
            .collect()
    }

    /// Facets that belong to exactly one simplex, with induced orientation.
    pub fn boundary_facets(&self) -> Vec<Vec<usize>> {
        self.facet_incidence()
            .into_iter()
            .filter(|(_, inc)| inc.len() == 1)
            .map(|(mut facet, inc)| {
                if inc[0].1 < 0 {
                    facet.swap(0, 1);
                }
                facet
            })
            .collect()
    }

    pub fn is_closed(&self) -> bool {
        self.facet_incidence().values().all(|inc| inc.len() == 2)
    }

    /// Flip simplices so that shared facets receive opposite orientations.
    /// Each connected component keeps the orientation of its first simplex.
    pub fn oriented(&self) -> Result<Self, MeshError> {
        let inc = self.facet_incidence();
        let mut neighbours: Vec<Vec<(usize, bool)>> = vec![Vec::new(); self.simplices.len()];
        for list in inc.values() {
            if let [(a, sa), (b, sb)] = list.as_slice() {
                // same induced sign means exactly one of the two must flip
                let must_differ = sa == sb;
                neighbours[*a].push((*b, must_differ));
                neighbours[*b].push((*a, must_differ));
            }
        }
        let mut flip: Vec<Option<bool>> = vec![None; self.simplices.len()];
        for start in 0..self.simplices.len() {
            if flip[start].is_some() {
                continue;
            }
            flip[start] = Some(false);
            let mut stack = vec![start];
            while let Some(s) = stack.pop() {
                let fs = flip[s].unwrap();
                for &(t, differ) in &neighbours[s] {
                    let want = fs ^ differ;
                    match flip[t] {
                        None => {
                            flip[t] = Some(want);
                            stack.push(t);
                        }
                        Some(ft) if ft != want => return Err(MeshError::NotOrientable),
                        _ => {}
                    }
                }
            }
        }
        let simplices = self
            .simplices
            .iter()
            .zip(&flip)
            .map(|(s, f)| {
                let mut s = s.clone();
                if f.unwrap() {
                    s.swap(0, 1);
                }
                s
            })
            .collect();
        Ok(Self { simplices, skeleton: OnceLock::new(), ..self.clone() })
    }

    fn skeleton(&self) -> &Skeleton {
        self.skeleton.get_or_init(|| {
            let mut faces: Vec<Vec<Vec<usize>>> = vec![Vec::new(); self.dim + 1];
            let mut sets: Vec<std::collections::BTreeSet<Vec<usize>>> = vec![Default::default(); self.dim + 1];
            for s in &self.simplices {
                let (sorted, _) = sorted_with_parity(s);
                let n = sorted.len();
                for mask in 1u32..(1 << n) {
                    let face: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| sorted[i]).collect();
                    sets[face.len() - 1].insert(face);
                }
            }
            let mut index = Vec::with_capacity(self.dim + 1);
            for (k, set) in sets.into_iter().enumerate() {
                faces[k] = set.into_iter().collect();
                index.push(faces[k].iter().enumerate().map(|(i, f)| (f.clone(), i)).collect());
            }
            Skeleton { faces, index }
        })
    }

    /// All `k`-faces as sorted vertex lists in lexicographic order.
    /// Isolated vertices not used by any simplex are omitted.
    pub fn faces(&self, k: usize) -> &[Vec<usize>] {
        &self.skeleton().faces[k]
    }

    /// Index of a sorted `k`-face in [`Self::faces`].
    pub fn face_index(&self, face: &[usize]) -> Option<usize> {
        self.skeleton().index.get(face.len().wrapping_sub(1))?.get(face).copied()
    }

    pub fn euler_characteristic(&self) -> i64 {
        (0..=self.dim).map(|k| if k % 2 == 0 { 1 } else { -1 } * self.faces(k).len() as i64).sum()
    }
}

/// Parsed contents of a mesh file before validation of the immersion.
#[derive(Clone, Debug)]
pub struct MeshFile {
    pub complex: SimplicialComplex,
    pub positions: Option<Vec<Point>>,
    pub windings: Vec<[i64; AMBIENT_DIM]>,
    pub levels: Option<Vec<usize>>,
}

pub fn parse_mesh(text: &str) -> Result<MeshFile, MeshError> {
    let perr = |line: usize, msg: &str| MeshError::Parse { line, msg: msg.to_string() };
    let mut header: Option<(usize, usize, usize)> = None;
    let mut positions: Vec<Option<Point>> = Vec::new();
    let mut simplices = Vec::new();
    let mut windings = Vec::new();
    let mut labels: Vec<(usize, usize)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut it = content.split_whitespace();
        let tag = it.next().unwrap();
        let rest: Vec<&str> = it.collect();
        let ints = |r: &[&str]| -> Result<Vec<i64>, MeshError> {
            r.iter().map(|t| t.parse::<i64>().map_err(|_| perr(line, &format!("bad integer {t:?}")))).collect()
        };
        match tag {
            "dim" => {
                let v = ints(&rest)?;
                if v.len() != 3 || v.iter().any(|&x| x < 0) || header.is_some() {
                    return Err(perr(line, "header must be `dim k nverts nsimp` and appear once"));
                }
                header = Some((v[0] as usize, v[1] as usize, v[2] as usize));
            }
            _ if header.is_none() => return Err(perr(line, "missing header")),
            "v" => {
                if rest.is_empty() {
                    positions.push(None);
                } else if rest.len() == AMBIENT_DIM {
                    let mut p: Point = [0.0; AMBIENT_DIM];
                    for (x, t) in p.iter_mut().zip(&rest) {
                        *x = t.parse().map_err(|_| perr(line, &format!("bad coordinate {t:?}")))?;
                        if !x.is_finite() {
                            return Err(perr(line, "non-finite coordinate"));
                        }
                    }
                    positions.push(Some(p));
                } else {
                    return Err(perr(line, "vertex needs 0 or 7 coordinates"));
                }
            }
            "s" => {
                let k = header.unwrap().0;
                let v = ints(&rest)?;
                let w = match v.len() {
                    n if n == k + 1 => [0; AMBIENT_DIM],
                    n if n == k + 1 + AMBIENT_DIM => v[k + 1..].try_into().unwrap(),
                    _ => return Err(perr(line, &format!("simplex needs {} ids and optional 7 windings", k + 1))),
                };
                if v[..=k].iter().any(|&x| x < 0) {
                    return Err(perr(line, "negative vertex id"));
                }
                simplices.push(v[..=k].iter().map(|&x| x as usize).collect());
                windings.push(w);
            }
            "t" => {
                let v = ints(&rest)?;
                if v.len() != 2 || v.iter().any(|&x| x < 0) {
                    return Err(perr(line, "label needs `t vertex level`"));
                }
                labels.push((v[0] as usize, v[1] as usize));
            }
            other => return Err(perr(line, &format!("unknown record {other:?}"))),
        }
    }
    let (k, nv, ns) = header.ok_or_else(|| perr(0, "empty file"))?;
    if positions.len() != nv || simplices.len() != ns {
        return Err(perr(
            0,
            &format!("header announces {nv} vertices and {ns} simplices, found {} and {}", positions.len(), simplices.len()),
        ));
    }
    let positions = match positions.iter().filter(|p| p.is_some()).count() {
        0 => None,
        n if n == nv => Some(positions.into_iter().map(Option::unwrap).collect()),
        _ => return Err(perr(0, "either all or no vertices carry coordinates")),
    };
    let levels = if labels.is_empty() {
        None
    } else {
        let mut lv = vec![usize::MAX; nv];
        for (v, l) in labels {
            if v >= nv {
                return Err(perr(0, &format!("label for missing vertex {v}")));
            }
            lv[v] = l;
        }
        if lv.contains(&usize::MAX) {
            return Err(MeshError::Invalid(vec![MeshIssue::LevelCount {
                expected: nv,
                found: lv.iter().filter(|&&l| l != usize::MAX).count(),
            }]));
        }
        Some(lv)
    };
    let complex = SimplicialComplex::new(k, nv, simplices)?;
    Ok(MeshFile { complex, positions, windings, levels })
}

fn read(path: &Path) -> Result<String, MeshError> {
    std::fs::read_to_string(path).map_err(|source| MeshError::Io { path: path.display().to_string(), source })
}

/// Parse a complex, ignoring any coordinates. Orientation is not required.
pub fn load_complex(path: impl AsRef<Path>) -> Result<SimplicialComplex, MeshError> {
    Ok(parse_mesh(&read(path.as_ref())?)?.complex)
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<ImmersedMesh, MeshError> {
    ImmersedMesh::from_file(parse_mesh(&read(path.as_ref())?)?)
}

pub fn format_mesh(
    complex: &SimplicialComplex,
    positions: Option<&[Point]>,
    windings: Option<&[[i64; AMBIENT_DIM]]>,
    levels: Option<&[usize]>,
    comment: &str,
) -> String {
    let mut out = String::new();
    for line in comment.lines() {
        let _ = writeln!(out, "# {line}");
    }
    let _ = writeln!(out, "dim {} {} {}", complex.dim(), complex.n_vertices(), complex.simplices().len());
    for v in 0..complex.n_vertices() {
        match positions {
            Some(p) => {
                let coords: Vec<String> = p[v].iter().map(|x| format!("{x:.17e}")).collect();
                let _ = writeln!(out, "v {}", coords.join(" "));
            }
            None => out.push_str("v\n"),
        }
    }
    for (i, s) in complex.simplices().iter().enumerate() {
        let ids: Vec<String> = s.iter().map(|v| v.to_string()).collect();
        let _ = write!(out, "s {}", ids.join(" "));
        if let Some(w) = windings.map(|w| w[i]).filter(|w| w.iter().any(|&x| x != 0)) {
            for x in w {
                let _ = write!(out, " {x}");
            }
        }
        out.push('\n');
    }
    if let Some(levels) = levels {
        for (v, l) in levels.iter().enumerate() {
            let _ = writeln!(out, "t {v} {l}");
        }
    }
    out
}

/// Representative of `x` in `(-π, π]`.
pub fn wrap_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r > std::f64::consts::PI {
        r - TAU
    } else {
        r
    }
}

/// A validated immersion of an oriented complex into `T^7`.
#[derive(Clone, Debug)]
pub struct ImmersedMesh {
    complex: SimplicialComplex,
    positions: Vec<Point>,
    windings: Vec<[i64; AMBIENT_DIM]>,
    levels: Option<Vec<usize>>,
}

impl ImmersedMesh {
    pub fn new(
        complex: SimplicialComplex,
        positions: Vec<Point>,
        windings: Option<Vec<[i64; AMBIENT_DIM]>>,
        levels: Option<Vec<usize>>,
    ) -> Result<Self, MeshError> {
        let mut issues = complex.orientation_issues();
        if positions.len() != complex.n_vertices() {
            return Err(MeshError::MissingPositions);
        }
        if let Some(l) = &levels {
            if l.len() != complex.n_vertices() {
                issues.push(MeshIssue::LevelCount { expected: complex.n_vertices(), found: l.len() });
            }
        }
        let windings = windings.unwrap_or_else(|| vec![[0; AMBIENT_DIM]; complex.simplices().len()]);
        let m = Self { complex, positions, windings, levels };
        issues.extend(m.degeneracy_issues());
        if issues.is_empty() {
            Ok(m)
        } else {
            Err(MeshError::Invalid(issues))
        }
    }

    pub fn from_file(file: MeshFile) -> Result<Self, MeshError> {
        let positions = file.positions.ok_or(MeshError::MissingPositions)?;
        Self::new(file.complex, positions, Some(file.windings), file.levels)
    }

    fn degeneracy_issues(&self) -> Vec<MeshIssue> {
        let k = self.dim();
        (0..self.n_simplices())
            .filter_map(|s| {
                let j = self.differential(s);
                let gram = (j.transpose() * &j).determinant();
                let scale = j.column_iter().map(|c| c.norm_squared()).fold(0.0, f64::max).powi(k as i32);
                (!(gram > 1e-12 * scale)).then_some(MeshIssue::Degenerate { simplex: s, gram })
            })
            .collect()
    }

    pub fn complex(&self) -> &SimplicialComplex {
        &self.complex
    }

    pub fn dim(&self) -> usize {
        self.complex.dim()
    }

    pub fn n_simplices(&self) -> usize {
        self.complex.simplices().len()
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn windings(&self) -> &[[i64; AMBIENT_DIM]] {
        &self.windings
    }

    pub fn levels(&self) -> Option<&[usize]> {
        self.levels.as_deref()
    }

    /// Same combinatorics with new vertex positions; degeneracy is rechecked.
    pub fn with_positions(&self, positions: Vec<Point>) -> Result<Self, MeshError> {
        let m = Self { positions, ..self.clone() };
        let issues = m.degeneracy_issues();
        if issues.is_empty() {
            Ok(m)
        } else {
            Err(MeshError::Invalid(issues))
        }
    }

    /// Positions displaced by `disp`, without any validation.
    pub fn displaced_unchecked(&self, disp: &[Point]) -> Self {
        let positions = self
            .positions
            .iter()
            .zip(disp)
            .map(|(p, d)| std::array::from_fn(|i| p[i] + d[i]))
            .collect();
        Self { positions, ..self.clone() }
    }

    pub fn translated(&self, v: &Point) -> Self {
        self.displaced_unchecked(&vec![*v; self.positions.len()])
    }

    pub fn to_file_string(&self, comment: &str) -> String {
        format_mesh(&self.complex, Some(&self.positions), Some(&self.windings), self.levels.as_deref(), comment)
    }

    /// Vertex coordinates of simplex `s` in the universal cover `R^7`.
    pub fn lifted(&self, s: usize) -> Vec<Point> {
        let simplex = &self.complex.simplices()[s];
        let w = self.windings[s];
        let p0 = self.positions[simplex[0]];
        let anchor: Point = std::array::from_fn(|i| p0[i] + TAU * w[i] as f64);
        simplex
            .iter()
            .map(|&v| std::array::from_fn(|i| anchor[i] + wrap_angle(self.positions[v][i] - p0[i])))
            .collect()
    }

    /// `7 × k` matrix whose columns are the edge vectors `p_a − p_0`; the
    /// differential of the affine map from reference coordinates.
    pub fn differential(&self, s: usize) -> DMatrix<f64> {
        let p = self.lifted(s);
        let k = self.dim();
        DMatrix::from_fn(AMBIENT_DIM, k, |r, c| p[c + 1][r] - p[0][r])
    }

    pub fn differentials(&self) -> Vec<DMatrix<f64>> {
        (0..self.n_simplices()).into_par_iter().map(|s| self.differential(s)).collect()
    }

    pub fn simplex_volume(&self, s: usize, g: &Metric) -> f64 {
        simplex_volume(&self.differential(s), g)
    }

    pub fn volume(&self, g: &Metric) -> f64 {
        let v: Vec<f64> = (0..self.n_simplices()).into_par_iter().map(|s| self.simplex_volume(s, g)).collect();
        v.iter().sum()
    }
}

pub(crate) fn factorial(k: usize) -> f64 {
    (1..=k).map(|x| x as f64).product()
}

/// Riemannian volume of the affine simplex with differential `j`.
pub fn simplex_volume(j: &DMatrix<f64>, g: &Metric) -> f64 {
    let gram = j.transpose() * g.matrix() * j;
    gram.determinant().max(0.0).sqrt() / factorial(j.ncols())
}

/// Pullback of a constant form to every simplex, in reference coordinates.
pub fn immersion_pullback(m: &ImmersedMesh, a: &AlternatingForm) -> Result<Vec<AlternatingForm>, MeshError> {
    if a.dim() != AMBIENT_DIM {
        return Err(FormError::DimensionMismatch { left: a.dim(), right: AMBIENT_DIM }.into());
    }
    // degree above k pulls back to the zero form with no coefficients
    (0..m.n_simplices())
        .into_par_iter()
        .map(|s| Ok(a.pullback(&m.differential(s))?))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Residuals {
    /// `(Σ ‖(f*Ω)_σ‖² vol_σ)^{1/2}` on 4-meshes.
    pub coassoc: Option<f64>,
    /// `(Σ ‖(f*χ)_σ‖² vol_σ)^{1/2}` on 3-meshes.
    pub assoc: Option<f64>,
    pub volume: f64,
    /// `volume − ∫ f*Θ` (4-meshes) or `volume − ∫ f*Ω` (3-meshes).
    pub calibration_defect: f64,
    /// Largest pointwise norm of the residual form over simplices.
    pub max_pointwise: f64,
}

/// Pointwise `‖f*Ω‖²` on one 4-simplex, with the pullback metric.
pub(crate) fn coassoc_density(j: &DMatrix<f64>, s: &G2Structure) -> Result<f64, FormError> {
    let gpull = s.metric.pullback(j)?;
    let p = s.omega.pullback(j)?;
    p.inner(&p, &gpull)
}

/// Pointwise `‖f*χ‖²` on one 3-simplex: `|χ(J_1, J_2, J_3)|²_g / det G`.
pub(crate) fn assoc_density(j: &DMatrix<f64>, s: &G2Structure) -> f64 {
    let cols: Vec<Vec<f64>> = j.column_iter().map(|c| c.iter().copied().collect()).collect();
    let v = s.chi_apply(&cols[0], &cols[1], &cols[2]);
    let gram = j.transpose() * s.metric.matrix() * j;
    s.metric.dot(&v, &v) / gram.determinant()
}

pub fn calibration_residuals(m: &ImmersedMesh, s: &G2Structure) -> Result<Residuals, MeshError> {
    let k = m.dim();
    if k != 3 && k != 4 {
        return Err(MeshError::WrongDimension { expected: 4, found: k });
    }
    let calibrator = if k == 4 { &s.theta } else { &s.omega };
    let per: Vec<Result<(f64, f64, f64), MeshError>> = (0..m.n_simplices())
        .into_par_iter()
        .map(|i| {
            let j = m.differential(i);
            let vol = simplex_volume(&j, &s.metric);
            let density = if k == 4 { coassoc_density(&j, s)? } else { assoc_density(&j, s) };
            let cal = calibrator.pullback(&j)?.coeffs()[0] / factorial(k);
            Ok((vol, density, cal))
        })
        .collect();
    let (mut volume, mut sq, mut cal, mut worst) = (0.0, 0.0, 0.0, 0.0f64);
    for r in per {
        let (v, d, c) = r?;
        volume += v;
        sq += d * v;
        cal += c;
        worst = worst.max(d.max(0.0).sqrt());
    }
    let residual = sq.max(0.0).sqrt();
    Ok(Residuals {
        coassoc: (k == 4).then_some(residual),
        assoc: (k == 3).then_some(residual),
        volume,
        calibration_defect: volume - cal,
        max_pointwise: worst,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SliceReport {
    pub vol_c: f64,
    /// `∫ Vol(C_θ) dθ` over the circle, θ measured in ambient arc length.
    pub slice_integral: f64,
    /// Volume of the fiber made of all-same-level 3-faces, per level.
    pub level_volumes: Vec<f64>,
    pub is_product: bool,
}

/// Both sides of `Vol(C) ≥ ∫ Vol(C_θ) dθ` for a 4-mesh fibred over the
/// circle in direction `x^0`.
///
/// The slice integral is evaluated exactly by the coarea formula: on each
/// affine simplex `∫ vol(σ ∩ {θ = t}) dt = vol(σ)·|∇_σ θ|`, where `θ` is
/// `x^0` rescaled to unit ambient gradient. Since the tangential gradient is
/// never longer than the ambient one, the inequality holds simplex by
/// simplex, with equality exactly when `∇θ` is tangent.
pub fn slice_volume_check(m: &ImmersedMesh, g: &Metric, tol: f64) -> Result<SliceReport, MeshError> {
    if m.dim() != 4 {
        return Err(MeshError::WrongDimension { expected: 4, found: m.dim() });
    }
    let levels = m.levels().ok_or(MeshError::MissingLevels)?;
    let axis = crate::g2::PRODUCT_AXIS;
    let unit = g.inverse()[(axis, axis)].sqrt();
    let per: Vec<(f64, f64)> = (0..m.n_simplices())
        .into_par_iter()
        .map(|i| {
            let j = m.differential(i);
            let gram = j.transpose() * g.matrix() * &j;
            let vol = gram.determinant().max(0.0).sqrt() / 24.0;
            let c = j.row(axis).transpose();
            let grad_sq = gram.cholesky().map(|ch| (c.transpose() * ch.solve(&c))[(0, 0)]).unwrap_or(0.0);
            (vol, vol * grad_sq.max(0.0).sqrt() / unit)
        })
        .collect();
    let vol_c: f64 = per.iter().map(|p| p.0).sum();
    let slice_integral: f64 = per.iter().map(|p| p.1).sum();

    let n_levels = levels.iter().max().map_or(0, |l| l + 1);
    let mut level_volumes = vec![0.0; n_levels];
    // each fiber face is shared by two simplices on a closed mesh
    let share = if m.complex().is_closed() { 0.5 } else { 1.0 };
    for (i, s) in m.complex().simplices().iter().enumerate() {
        for drop in 0..5 {
            let face: Vec<usize> = s.iter().enumerate().filter(|&(j, _)| j != drop).map(|(_, &v)| v).collect();
            let l = levels[face[0]];
            if face.iter().all(|&v| levels[v] == l) {
                let p = m.lifted(i);
                let q: Vec<&Point> = (0..5).filter(|&j| j != drop).map(|j| &p[j]).collect();
                let jf = DMatrix::from_fn(AMBIENT_DIM, 3, |r, c| q[c + 1][r] - q[0][r]);
                level_volumes[l] += share * simplex_volume(&jf, g);
            }
        }
    }
    let is_product = vol_c - slice_integral <= tol * vol_c.max(1.0);
    Ok(SliceReport { vol_c, slice_integral, level_volumes, is_product })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::{coordinate_torus, ORIGIN};
    use crate::g2::G2Structure;

    const TRIANGLE_PAIR: &str = "# two triangles\ndim 2 4 2\nv\nv\nv\nv\ns 0 1 2\ns 2 1 3\n";

    #[test]
    fn parses_topology_only_file() {
        let f = parse_mesh(TRIANGLE_PAIR).unwrap();
        assert!(f.positions.is_none());
        assert!(f.complex.orientation_issues().is_empty());
        assert_eq!(f.complex.boundary_facets().len(), 4);
    }

    #[test]
    fn flipped_simplex_names_the_facet() {
        let bad = TRIANGLE_PAIR.replace("s 2 1 3", "s 1 2 3");
        let issues = parse_mesh(&bad).unwrap().complex.orientation_issues();
        assert_eq!(
            issues,
            vec![MeshIssue::OrientationMismatch { facet: vec![1, 2], simplices: (0, 1) }]
        );
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_mesh("dim 2 1 0\nv 1 2\n").unwrap_err();
        assert!(matches!(err, MeshError::Parse { line: 2, .. }), "{err}");
        assert!(matches!(parse_mesh("v\n"), Err(MeshError::Parse { line: 1, .. })));
        assert!(matches!(parse_mesh("dim 2 2 0\nv\n"), Err(MeshError::Parse { line: 0, .. })));
    }

    #[test]
    fn file_round_trip() {
        let m = coordinate_torus(&[4, 5, 6], 3, &ORIGIN);
        let back = ImmersedMesh::from_file(parse_mesh(&m.to_file_string("roundtrip")).unwrap()).unwrap();
        assert_eq!(back.complex(), m.complex());
        assert_eq!(back.positions(), m.positions());
        assert_eq!(back.levels(), m.levels());
    }

    #[test]
    fn degenerate_simplex_is_reported() {
        let m = coordinate_torus(&[1, 2, 3], 3, &ORIGIN);
        let mut p = m.positions().to_vec();
        let s = &m.complex().simplices()[0];
        p[s[1]] = p[s[0]];
        match m.with_positions(p) {
            Err(MeshError::Invalid(issues)) => {
                assert!(issues.iter().any(|i| matches!(i, MeshIssue::Degenerate { simplex: 0, .. })))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn winding_offsets_do_not_change_differentials() {
        let m = coordinate_torus(&[1, 2, 3], 3, &ORIGIN);
        let mut w = m.windings().to_vec();
        w[0] = [1, -2, 0, 0, 3, 0, 0];
        let shifted = ImmersedMesh::new(m.complex().clone(), m.positions().to_vec(), Some(w), None).unwrap();
        assert!((shifted.differential(0) - m.differential(0)).amax() < 1e-14);
        assert_eq!(shifted.lifted(0)[0][1], m.lifted(0)[0][1] - 2.0 * TAU);
    }

    #[test]
    fn coordinate_tori_residuals() {
        let s = G2Structure::standard();
        let c = calibration_residuals(&coordinate_torus(&[0, 1, 2, 3], 3, &ORIGIN), &s).unwrap();
        assert_eq!(c.coassoc, Some(0.0));
        assert_eq!(c.calibration_defect, 0.0);
        assert!((c.volume - TAU.powi(4)).abs() < 1e-9);
        let a = calibration_residuals(&coordinate_torus(&[4, 5, 6], 3, &ORIGIN), &s).unwrap();
        assert_eq!(a.assoc, Some(0.0));
        assert!(a.calibration_defect.abs() < 1e-12 * a.volume);
    }

    #[test]
    fn top_degree_pullback_to_lower_dimension_is_empty() {
        let m = coordinate_torus(&[0, 1, 2, 3], 3, &ORIGIN);
        let vol = crate::forms::volume_form(7, 1.0);
        assert!(immersion_pullback(&m, &vol).unwrap().iter().all(|f| f.is_zero()));
    }

    #[test]
    fn slice_needs_labels() {
        let m = coordinate_torus(&[0, 1, 2, 3], 3, &ORIGIN);
        let unlabeled = ImmersedMesh::new(m.complex().clone(), m.positions().to_vec(), None, None).unwrap();
        assert!(matches!(
            slice_volume_check(&unlabeled, &Metric::euclidean(7), 1e-12),
            Err(MeshError::MissingLevels)
        ));
    }
}
