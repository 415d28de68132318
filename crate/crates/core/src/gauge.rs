//! U(1) lattice gauge fields as real angles.
//!
//! On a simplicial mesh a connection assigns an angle to each edge, stored on
//! the sorted edge `a < b` and negated on reversal. Curvature lives on sorted
//! triangles `a < b < c`, traversed `a → b → c`, as a principal value in
//! `(-π, π]` plus an integer winding, so `raw = principal + 2π·winding`.
//!
//! The cubical 7-torus lattice carries the connection for the DT functional;
//! see [`Lattice7`].

use std::sync::OnceLock;

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::forms::{basis_indices, AlternatingForm, FormError};
use crate::g2::G2Structure;
use crate::mesh::{sorted_with_parity, wrap_angle, ImmersedMesh, SimplicialComplex, AMBIENT_DIM, TAU};

#[derive(Debug, Error)]
pub enum GaugeError {
    #[error("edge {0}-{1} is not in the mesh")]
    UnknownEdge(usize, usize),
    #[error("edge {0}-{1} is listed twice")]
    DuplicateEdge(usize, usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("path is not closed")]
    OpenPath,
    #[error("expected {expected} values, found {found}")]
    Length { expected: usize, found: usize },
    #[error("expected a {expected}-dimensional mesh, found {found}")]
    WrongDimension { expected: usize, found: usize },
    #[error("degenerate pullback metric on simplex {0}")]
    Degenerate(usize),
    #[error(transparent)]
    Form(#[from] FormError),
}

/// Angles on the sorted edges of a complex, in the order of `faces(1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeConnection {
    angles: Vec<f64>,
}

impl LatticeConnection {
    pub fn zero(c: &SimplicialComplex) -> Self {
        Self { angles: vec![0.0; c.faces(1).len()] }
    }

    pub fn from_angles(c: &SimplicialComplex, angles: Vec<f64>) -> Result<Self, GaugeError> {
        let expected = c.faces(1).len();
        if angles.len() != expected {
            return Err(GaugeError::Length { expected, found: angles.len() });
        }
        Ok(Self { angles })
    }

    pub(crate) fn from_raw(angles: Vec<f64>) -> Self {
        Self { angles }
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    /// Angle along `tail → head`.
    pub fn angle(&self, c: &SimplicialComplex, tail: usize, head: usize) -> Result<f64, GaugeError> {
        let (lo, hi) = if tail < head { (tail, head) } else { (head, tail) };
        let i = c.face_index(&[lo, hi]).ok_or(GaugeError::UnknownEdge(tail, head))?;
        Ok(if tail < head { self.angles[i] } else { -self.angles[i] })
    }

    /// `angle ↦ angle + φ(head) − φ(tail)`.
    pub fn gauge_transform(&self, c: &SimplicialComplex, phi: &[f64]) -> Self {
        let angles = c.faces(1).iter().zip(&self.angles).map(|(e, a)| a + phi[e[1]] - phi[e[0]]).collect();
        Self { angles }
    }

    pub fn add(&self, other: &Self, scale: f64) -> Self {
        Self { angles: self.angles.iter().zip(&other.angles).map(|(a, b)| a + scale * b).collect() }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { angles: self.angles.iter().map(|a| a * s).collect() }
    }

    /// Text form: one `e v_tail v_head angle` line per edge.
    pub fn to_file_string(&self, c: &SimplicialComplex) -> String {
        let mut out = String::new();
        for (e, a) in c.faces(1).iter().zip(&self.angles) {
            out.push_str(&format!("e {} {} {:.17e}\n", e[0], e[1], a));
        }
        out
    }

    /// Parse `e v_tail v_head angle` lines; edges not listed get angle 0.
    pub fn parse(text: &str, c: &SimplicialComplex) -> Result<Self, GaugeError> {
        let mut angles = vec![0.0; c.faces(1).len()];
        let mut seen = vec![false; angles.len()];
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let t: Vec<&str> = content.split_whitespace().collect();
            let perr = |msg: &str| GaugeError::Parse { line, msg: msg.to_string() };
            if t.len() != 4 || t[0] != "e" {
                return Err(perr("expected `e v_tail v_head angle`"));
            }
            let tail: usize = t[1].parse().map_err(|_| perr("bad vertex id"))?;
            let head: usize = t[2].parse().map_err(|_| perr("bad vertex id"))?;
            let a: f64 = t[3].parse().map_err(|_| perr("bad angle"))?;
            if !a.is_finite() {
                return Err(perr("non-finite angle"));
            }
            let (lo, hi) = if tail < head { (tail, head) } else { (head, tail) };
            let i = c.face_index(&[lo, hi]).ok_or(GaugeError::UnknownEdge(tail, head))?;
            if seen[i] {
                return Err(GaugeError::DuplicateEdge(tail, head));
            }
            seen[i] = true;
            angles[i] = if tail < head { a } else { -a };
        }
        Ok(Self { angles })
    }
}

/// Curvature on sorted triangles.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureField {
    pub principal: Vec<f64>,
    pub winding: Vec<i64>,
}

impl CurvatureField {
    /// Chern number `(1/2π) Σ F` over a closed oriented surface given as
    /// `(triangle index, ±1)`; exact because the raw circulations telescope.
    pub fn chern_number(&self, cycle: &[(usize, i64)]) -> i64 {
        -cycle.iter().map(|&(t, s)| s * self.winding[t]).sum::<i64>()
    }

    pub fn flux(&self, cycle: &[(usize, i64)]) -> f64 {
        cycle.iter().map(|&(t, s)| s as f64 * self.principal[t]).sum()
    }
}

pub fn curvature(c: &SimplicialComplex, conn: &LatticeConnection) -> CurvatureField {
    let edge = |a: usize, b: usize| conn.angles[c.face_index(&[a, b]).unwrap()];
    let (principal, winding) = c
        .faces(2)
        .iter()
        .map(|t| {
            let raw = edge(t[0], t[1]) + edge(t[1], t[2]) - edge(t[0], t[2]);
            let p = wrap_angle(raw);
            (p, ((raw - p) / TAU).round() as i64)
        })
        .unzip();
    CurvatureField { principal, winding }
}

/// Holonomy along a closed vertex path `v_0, v_1, …, v_0`, in `(-π, π]`.
pub fn holonomy(c: &SimplicialComplex, conn: &LatticeConnection, path: &[usize]) -> Result<f64, GaugeError> {
    if path.len() < 2 || path.first() != path.last() {
        return Err(GaugeError::OpenPath);
    }
    let mut total = 0.0;
    for w in path.windows(2) {
        total += conn.angle(c, w[0], w[1])?;
    }
    Ok(wrap_angle(total))
}

/// Pseudo-inverse of the map from a constant 2-form on the reference
/// `k`-simplex to its integrals over the faces `p < q < r` (local indices).
fn reconstruction(k: usize) -> &'static DMatrix<f64> {
    static TABLES: OnceLock<Vec<DMatrix<f64>>> = OnceLock::new();
    &TABLES.get_or_init(|| {
        (0..=5)
            .map(|k| {
                if k < 2 {
                    return DMatrix::zeros(0, 0);
                }
                let faces = basis_indices(k + 1, 3);
                let pairs = basis_indices(k, 2);
                let e = |i: usize| -> Vec<f64> { (0..k).map(|j| if i > 0 && j == i - 1 { 1.0 } else { 0.0 }).collect() };
                let m = DMatrix::from_fn(faces.len(), pairs.len(), |r, c| {
                    let f = &faces[r];
                    let u: Vec<f64> = e(f[1]).iter().zip(e(f[0])).map(|(a, b)| a - b).collect();
                    let v: Vec<f64> = e(f[2]).iter().zip(e(f[0])).map(|(a, b)| a - b).collect();
                    let (a, b) = (pairs[c][0], pairs[c][1]);
                    0.5 * (u[a] * v[b] - u[b] * v[a])
                });
                (m.transpose() * &m).try_inverse().expect("face map is injective") * m.transpose()
            })
            .collect()
    })[k]
}

/// Oriented face values of simplex `s`, local faces `p < q < r` in order.
pub(crate) fn local_face_values(c: &SimplicialComplex, f: &[f64], s: usize) -> Vec<f64> {
    let simplex = &c.simplices()[s];
    basis_indices(simplex.len(), 3)
        .iter()
        .map(|loc| {
            let global: Vec<usize> = loc.iter().map(|&i| simplex[i]).collect();
            let (sorted, odd) = sorted_with_parity(&global);
            let v = f[c.face_index(&sorted).unwrap()];
            if odd {
                -v
            } else {
                v
            }
        })
        .collect()
}

/// Least-squares constant 2-form on simplex `s` (reference coordinates) from
/// per-face values indexed like `faces(2)`.
pub fn simplex_two_form(c: &SimplicialComplex, f: &[f64], s: usize) -> AlternatingForm {
    let k = c.dim();
    let vals = DMatrix::from_vec(basis_indices(k + 1, 3).len(), 1, local_face_values(c, f, s));
    let coeffs = reconstruction(k) * vals;
    AlternatingForm::from_coeffs(k, 2, coeffs.iter().copied().collect()).unwrap()
}

/// The reconstruction operator itself: rows are 2-form coefficients, columns
/// are local faces.
pub(crate) fn reconstruction_matrix(k: usize) -> &'static DMatrix<f64> {
    reconstruction(k)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdSplit {
    pub fplus_norm: f64,
    pub fminus_norm: f64,
    /// `(‖F‖², ‖F⁺‖², ‖F⁻‖²)` integrated over each simplex.
    pub per_simplex: Vec<[f64; 3]>,
}

/// Split the reconstructed curvature into self-dual and anti-self-dual parts
/// with the Hodge star of the pullback metric on each 4-simplex.
pub fn sd_split(f: &CurvatureField, m: &ImmersedMesh, s: &G2Structure) -> Result<SdSplit, GaugeError> {
    if m.dim() != 4 {
        return Err(GaugeError::WrongDimension { expected: 4, found: m.dim() });
    }
    let c = m.complex();
    let per_simplex: Vec<Result<[f64; 3], GaugeError>> = (0..m.n_simplices())
        .into_par_iter()
        .map(|i| {
            let j = m.differential(i);
            let g = s.metric.pullback(&j).map_err(|_| GaugeError::Degenerate(i))?;
            let vol = g.det().sqrt() / 24.0;
            let form = simplex_two_form(c, &f.principal, i);
            let star = form.hodge(&g, 1)?;
            let plus = form.add(&star)?.scale(0.5);
            let minus = form.sub(&star)?.scale(0.5);
            Ok([form.inner(&form, &g)? * vol, plus.inner(&plus, &g)? * vol, minus.inner(&minus, &g)? * vol])
        })
        .collect();
    let per_simplex = per_simplex.into_iter().collect::<Result<Vec<_>, _>>()?;
    let plus: f64 = per_simplex.iter().map(|p| p[1]).sum();
    let minus: f64 = per_simplex.iter().map(|p| p[2]).sum();
    Ok(SdSplit { fplus_norm: plus.max(0.0).sqrt(), fminus_norm: minus.max(0.0).sqrt(), per_simplex })
}

/// Connection on an immersed mesh whose curvature is the constant form
/// `Σ m/(2π) dx^μ ∧ dx^ν` over the listed `(μ, ν, m)`, `μ ≠ ν`.
///
/// Built from the Landau potential `y^μ dy^ν` on the universal cover, with
/// the transition `y ↦ y + 2πw` absorbed at edge heads so that circulations
/// agree with the flux modulo `2π`.
pub fn constant_flux_connection(m: &ImmersedMesh, flux: &[(usize, usize, i64)]) -> LatticeConnection {
    let c = m.complex();
    let canon: Vec<[f64; AMBIENT_DIM]> =
        m.positions().iter().map(|p| std::array::from_fn(|i| p[i].rem_euclid(TAU))).collect();
    let angles = c
        .faces(1)
        .iter()
        .map(|e| {
            let (p, h) = (canon[e[0]], canon[e[1]]);
            let delta: [f64; AMBIENT_DIM] = std::array::from_fn(|i| wrap_angle(h[i] - p[i]));
            let w: [f64; AMBIENT_DIM] = std::array::from_fn(|i| ((p[i] + delta[i] - h[i]) / TAU).round());
            flux.iter()
                .map(|&(mu, nu, q)| {
                    let coef = q as f64 / TAU;
                    coef * ((p[mu] + 0.5 * delta[mu]) * delta[nu] - TAU * w[mu] * h[nu])
                })
                .sum()
        })
        .collect();
    LatticeConnection { angles }
}

/// Cubical lattice `Z_n^7` with spacing `2π/n` discretising `T^7`; links
/// carry angles along `x → x + e_μ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Lattice7 {
    n: usize,
    links: Vec<f64>,
}

pub const LATTICE_DIM: usize = 7;

impl Lattice7 {
    pub fn zero(n: usize) -> Self {
        assert!(n >= 2, "lattice needs at least two sites per direction");
        Self { n, links: vec![0.0; n.pow(LATTICE_DIM as u32) * LATTICE_DIM] }
    }

    pub fn from_links(n: usize, links: Vec<f64>) -> Result<Self, GaugeError> {
        let expected = n.pow(LATTICE_DIM as u32) * LATTICE_DIM;
        if links.len() != expected {
            return Err(GaugeError::Length { expected, found: links.len() });
        }
        Ok(Self { n, links })
    }

    /// Uniform flux `2π m / n²` per plaquette in each listed plane `(μ, ν)`.
    pub fn with_flux(n: usize, flux: &[(usize, usize, i64)]) -> Self {
        let mut l = Self::zero(n);
        for site in 0..l.n_sites() {
            let x = l.coords(site);
            for &(mu, nu, m) in flux {
                let f = TAU * m as f64 / (n * n) as f64;
                l.links[site * LATTICE_DIM + nu] += f * x[mu] as f64;
                if x[mu] == n - 1 {
                    l.links[site * LATTICE_DIM + mu] -= f * (n * x[nu]) as f64;
                }
            }
        }
        l
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        TAU / self.n as f64
    }

    pub fn n_sites(&self) -> usize {
        self.n.pow(LATTICE_DIM as u32)
    }

    pub fn links(&self) -> &[f64] {
        &self.links
    }

    pub fn coords(&self, site: usize) -> [usize; LATTICE_DIM] {
        std::array::from_fn(|i| site / self.n.pow(i as u32) % self.n)
    }

    pub fn shift(&self, site: usize, dir: usize) -> usize {
        let stride = self.n.pow(dir as u32);
        if (site / stride) % self.n == self.n - 1 {
            site + stride - self.n * stride
        } else {
            site + stride
        }
    }

    pub fn link(&self, site: usize, dir: usize) -> f64 {
        self.links[site * LATTICE_DIM + dir]
    }

    pub fn add(&self, other: &Self, scale: f64) -> Self {
        Self { n: self.n, links: self.links.iter().zip(&other.links).map(|(a, b)| a + scale * b).collect() }
    }

    pub fn gauge_transform(&self, phi: &[f64]) -> Self {
        let mut out = self.clone();
        for site in 0..self.n_sites() {
            for mu in 0..LATTICE_DIM {
                out.links[site * LATTICE_DIM + mu] += phi[self.shift(site, mu)] - phi[site];
            }
        }
        out
    }

    /// Plaquette angle `F_μν(x)`, principal value, for `μ < ν`, ordered
    /// like `basis_indices(7, 2)`.
    pub fn plaquettes(&self, site: usize) -> [f64; 21] {
        let mut out = [0.0; 21];
        for (p, mn) in basis_indices(LATTICE_DIM, 2).iter().enumerate() {
            let (mu, nu) = (mn[0], mn[1]);
            let raw = self.link(site, mu) + self.link(self.shift(site, mu), nu)
                - self.link(self.shift(site, nu), mu)
                - self.link(site, nu);
            out[p] = wrap_angle(raw);
        }
        out
    }

    /// Curvature 2-form at a site, `F_μν / a²`.
    pub fn curvature_form(&self, site: usize) -> AlternatingForm {
        let a2 = self.spacing().powi(2);
        AlternatingForm::from_coeffs(LATTICE_DIM, 2, self.plaquettes(site).iter().map(|f| f / a2).collect()).unwrap()
    }
}

/// `(∫ |F ∧ Θ|² dvol)^{1/2}` on the cubical lattice, with the metric of `s`.
pub fn dt_residual(c: &Lattice7, s: &G2Structure) -> Result<f64, GaugeError> {
    let cell = c.spacing().powi(LATTICE_DIM as i32) * s.metric.det().sqrt();
    let per: Vec<Result<f64, GaugeError>> = (0..c.n_sites())
        .into_par_iter()
        .map(|site| {
            let w = c.curvature_form(site).wedge(&s.theta)?;
            Ok(w.inner(&w, &s.metric)? * cell)
        })
        .collect();
    let mut total = 0.0;
    for p in per {
        total += p?;
    }
    Ok(total.sqrt())
}

/// Matrix of `Λ²R⁷ → Λ⁶R⁷`, `a ↦ a ∧ Θ`, columns indexed by 2-form basis.
pub fn wedge_theta_matrix(s: &G2Structure) -> DMatrix<f64> {
    let pairs = basis_indices(7, 2);
    let mut m = DMatrix::zeros(7, pairs.len());
    for (j, p) in pairs.iter().enumerate() {
        let w = AlternatingForm::monomial(7, p, 1.0).unwrap().wedge(&s.theta).unwrap();
        for (i, c) in w.coeffs().iter().enumerate() {
            m[(i, j)] = *c;
        }
    }
    m
}

/// Numerical rank of a matrix by SVD, relative tolerance `1e-10`.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.max();
    sv.iter().filter(|&&x| x > 1e-10 * top.max(1.0)).count()
}

/// Orthonormal basis (Euclidean coefficients) of the kernel of `· ∧ Θ`.
pub fn dt_kernel_basis(s: &G2Structure) -> Vec<AlternatingForm> {
    let m = wedge_theta_matrix(s);
    // kernel of m = eigenvectors of mᵀm with zero eigenvalue
    let eig = (m.transpose() * &m).symmetric_eigen();
    let top = eig.eigenvalues.amax().max(1.0);
    (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i].abs() < 1e-10 * top)
        .map(|i| AlternatingForm::from_coeffs(7, 2, eig.eigenvectors.column(i).iter().copied().collect()).unwrap())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::{coordinate_torus, kuhn_torus, ORIGIN};

    #[test]
    fn zero_connection_is_flat() {
        let c = kuhn_torus(2, 3);
        let f = curvature(&c, &LatticeConnection::zero(&c));
        assert!(f.principal.iter().all(|&x| x == 0.0) && f.winding.iter().all(|&w| w == 0));
        let e = c.faces(1)[0].clone();
        let t = c.faces(2).iter().find(|t| t[0] == e[0] && t[1] == e[1]).unwrap().clone();
        assert_eq!(holonomy(&c, &LatticeConnection::zero(&c), &[t[0], t[1], t[2], t[0]]).unwrap(), 0.0);
    }

    #[test]
    fn reconstruction_is_exact_for_constant_forms() {
        let m = coordinate_torus(&[0, 1, 2, 3], 3, &ORIGIN);
        let conn = constant_flux_connection(&m, &[(0, 1, 1), (2, 3, -1)]);
        let f = curvature(m.complex(), &conn);
        let expected = AlternatingForm::from_terms(7, 2, &[(&[0, 1], 1.0 / TAU), (&[2, 3], -1.0 / TAU)]).unwrap();
        for s in 0..m.n_simplices() {
            let local = simplex_two_form(m.complex(), &f.principal, s);
            let want = expected.pullback(&m.differential(s)).unwrap();
            assert!(local.sub(&want).unwrap().max_abs() < 1e-12, "simplex {s}");
        }
    }

    #[test]
    fn open_paths_are_rejected() {
        let c = kuhn_torus(2, 3);
        assert!(matches!(holonomy(&c, &LatticeConnection::zero(&c), &[0, 1]), Err(GaugeError::OpenPath)));
    }

    #[test]
    fn connection_file_round_trip() {
        let c = kuhn_torus(2, 3);
        let conn = LatticeConnection::from_angles(&c, (0..c.faces(1).len()).map(|i| 0.1 * i as f64).collect()).unwrap();
        assert_eq!(LatticeConnection::parse(&conn.to_file_string(&c), &c).unwrap(), conn);
        let reversed = "e 1 0 0.5\n";
        let p = LatticeConnection::parse(reversed, &c).unwrap();
        assert_eq!(p.angle(&c, 0, 1).unwrap(), -0.5);
        assert!(matches!(LatticeConnection::parse("e 0 1 1\ne 1 0 2\n", &c), Err(GaugeError::DuplicateEdge(1, 0))));
    }

    #[test]
    fn lattice_shift_wraps() {
        let l = Lattice7::zero(3);
        let site = 2; // x0 = 2
        assert_eq!(l.shift(site, 0), 0);
        assert_eq!(l.coords(l.shift(0, 3))[3], 1);
    }

    #[test]
    fn wedge_with_theta_has_rank_seven() {
        let s = G2Structure::standard();
        assert_eq!(numerical_rank(&wedge_theta_matrix(&s)), 7);
        assert_eq!(dt_kernel_basis(&s).len(), 14);
    }
}
