//! The configuration space of maps plus connections at mesh scale.
//!
//! A [`Configuration`] is an immersed 4- (or 3-) mesh together with a U(1)
//! connection on its edges. Tangent vectors carry a displacement per vertex
//! and a perturbation per sorted edge. On each simplex the displacement is
//! averaged to the barycenter, the curvature is the least-squares constant
//! 2-form of [`crate::gauge::simplex_two_form`], and an edge perturbation
//! enters through the simplex mean of its Whitney 1-form,
//! `(1/(k+1)) (dλ_j − dλ_i)`. With these choices the discrete one-form
//! `Φ₀` is exactly closed while the curvature stays on its principal branch.

use nalgebra::{DMatrix, Matrix4, Vector4};
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::forms::{basis_indices, sort_with_sign, AlternatingForm, FormError};
use crate::g2::G2Structure;
use crate::gauge::{curvature, reconstruction_matrix, GaugeError, Lattice7, LatticeConnection, LATTICE_DIM};
use crate::homology::{ChainComplex, HomologyError};
use crate::mesh::{wrap_angle, ImmersedMesh, MeshError, Point, SimplicialComplex, AMBIENT_DIM};

#[derive(Debug, Error)]
pub enum CycleError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Gauge(#[from] GaugeError),
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Homology(#[from] HomologyError),
    #[error("expected a {expected}-dimensional mesh, found {found}")]
    WrongDimension { expected: usize, found: usize },
    #[error("shape mismatch: {0}")]
    Mismatch(String),
    #[error("finite-difference step {0} is below 1e-8")]
    StepTooSmall(f64),
    #[error("path step {index} moves a vertex by {displacement}, more than a tenth of the mesh scale {scale}")]
    PathTooCoarse { index: usize, displacement: f64, scale: f64 },
    #[error("degenerate pullback metric on simplex {0}")]
    Degenerate(usize),
}

#[derive(Clone, Debug)]
pub struct Configuration {
    pub mesh: ImmersedMesh,
    pub connection: LatticeConnection,
}

impl Configuration {
    pub fn new(mesh: ImmersedMesh, connection: LatticeConnection) -> Result<Self, CycleError> {
        let edges = mesh.complex().faces(1).len();
        if connection.len() != edges {
            return Err(CycleError::Mismatch(format!("connection has {} angles for {edges} edges", connection.len())));
        }
        Ok(Self { mesh, connection })
    }

    /// The mesh with the trivial connection.
    pub fn flat(mesh: ImmersedMesh) -> Self {
        let connection = LatticeConnection::zero(mesh.complex());
        Self { mesh, connection }
    }

    pub fn complex(&self) -> &SimplicialComplex {
        self.mesh.complex()
    }

    /// `self + h·t`, without re-validating the immersion.
    pub fn displaced(&self, t: &TangentVector, h: f64) -> Self {
        let disp: Vec<Point> = t.v.iter().map(|d| std::array::from_fn(|i| h * d[i])).collect();
        Self { mesh: self.mesh.displaced_unchecked(&disp), connection: self.connection.add(&t.as_connection(), h) }
    }

    /// `other − self` as a tangent vector (positions compared per vertex,
    /// angles per edge).
    pub fn difference(&self, other: &Self) -> TangentVector {
        let v = self
            .mesh
            .positions()
            .iter()
            .zip(other.mesh.positions())
            .map(|(p, q)| std::array::from_fn(|i| q[i] - p[i]))
            .collect();
        let b = self.connection.angles().iter().zip(other.connection.angles()).map(|(a, c)| c - a).collect();
        TangentVector { v, b }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    pub v: Vec<Point>,
    pub b: Vec<f64>,
}

impl TangentVector {
    pub fn zero(c: &Configuration) -> Self {
        Self { v: vec![[0.0; AMBIENT_DIM]; c.complex().n_vertices()], b: vec![0.0; c.connection.len()] }
    }

    /// Independent uniform entries in `[-amp_v, amp_v]` and `[-amp_b, amp_b]`.
    pub fn random(c: &Configuration, rng: &mut impl Rng, amp_v: f64, amp_b: f64) -> Self {
        let draw = |rng: &mut dyn rand::RngCore, a: f64| if a > 0.0 { rng.gen_range(-a..=a) } else { 0.0 };
        let v = (0..c.complex().n_vertices()).map(|_| std::array::from_fn(|_| draw(rng, amp_v))).collect();
        let b = (0..c.connection.len()).map(|_| draw(rng, amp_b)).collect();
        Self { v, b }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            v: self.v.iter().map(|d| std::array::from_fn(|i| s * d[i])).collect(),
            b: self.b.iter().map(|x| s * x).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            v: self.v.iter().zip(&other.v).map(|(a, b)| std::array::from_fn(|i| a[i] + b[i])).collect(),
            b: self.b.iter().zip(&other.b).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        let v: f64 = self.v.iter().flat_map(|d| d.iter()).map(|x| x * x).sum();
        let b: f64 = self.b.iter().map(|x| x * x).sum();
        (v + b).sqrt()
    }

    /// Drop the displacement components tangent to the mesh's mean plane.
    pub fn normal_part(&self, m: &ImmersedMesh) -> Self {
        let frame = tangent_frame(m);
        let v = self
            .v
            .iter()
            .map(|d| {
                let dv = nalgebra::DVector::from_column_slice(d);
                let n = &dv - &frame * (frame.transpose() * &dv);
                std::array::from_fn(|i| n[i])
            })
            .collect();
        Self { v, b: self.b.clone() }
    }

    fn as_connection(&self) -> LatticeConnection {
        LatticeConnection::from_raw(self.b.clone())
    }

    fn check(&self, c: &Configuration) -> Result<(), CycleError> {
        if self.v.len() != c.complex().n_vertices() || self.b.len() != c.connection.len() {
            return Err(CycleError::Mismatch("tangent vector does not fit the configuration".into()));
        }
        Ok(())
    }
}

/// Orthonormal basis (columns) of the dominant `k`-plane of the mesh: top
/// eigenvectors of `Σ_σ J_σ J_σᵀ`.
pub fn tangent_frame(m: &ImmersedMesh) -> DMatrix<f64> {
    let mut acc = DMatrix::<f64>::zeros(AMBIENT_DIM, AMBIENT_DIM);
    for j in m.differentials() {
        acc += &j * j.transpose();
    }
    let eig = acc.symmetric_eigen();
    let mut order: Vec<usize> = (0..AMBIENT_DIM).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    DMatrix::from_fn(AMBIENT_DIM, m.dim(), |r, c| eig.eigenvectors[(r, order[c])])
}

/// Per-simplex incidence: local faces `p < q < r` and local edges `i < j`
/// mapped to sorted global indices with orientation signs.
struct LocalTables {
    faces: Vec<Vec<(usize, f64)>>,
    edges: Vec<Vec<(usize, f64)>>,
}

impl LocalTables {
    fn new(c: &SimplicialComplex) -> Self {
        let k = c.dim();
        let lookup = |simplex: &[usize], loc: &[usize]| {
            let global: Vec<usize> = loc.iter().map(|&i| simplex[i]).collect();
            let (sorted, odd) = crate::mesh::sorted_with_parity(&global);
            (c.face_index(&sorted).expect("face of a simplex"), if odd { -1.0 } else { 1.0 })
        };
        let local_faces = basis_indices(k + 1, 3);
        let local_edges = basis_indices(k + 1, 2);
        let faces = c.simplices().iter().map(|s| local_faces.iter().map(|l| lookup(s, l)).collect()).collect();
        let edges = c.simplices().iter().map(|s| local_edges.iter().map(|l| lookup(s, l)).collect()).collect();
        Self { faces, edges }
    }

    /// Reference-coordinate curvature coefficients on simplex `s`.
    fn two_form(&self, s: usize, principal: &[f64], k: usize) -> Vec<f64> {
        let vals = DMatrix::from_iterator(self.faces[s].len(), 1, self.faces[s].iter().map(|&(t, sg)| sg * principal[t]));
        (reconstruction_matrix(k) * vals).iter().copied().collect()
    }

    /// Simplex mean of the Whitney 1-form of `b`, in reference coordinates.
    fn whitney_mean(&self, s: usize, b: &[f64], k: usize) -> Vec<f64> {
        let mut out = vec![0.0; k];
        let dlambda = |i: usize, out: &mut [f64], c: f64| {
            if i == 0 {
                out.iter_mut().for_each(|x| *x -= c);
            } else {
                out[i - 1] += c;
            }
        };
        for (l, loc) in basis_indices(k + 1, 2).iter().enumerate() {
            let (e, sg) = self.edges[s][l];
            let c = sg * b[e] / (k + 1) as f64;
            dlambda(loc[1], &mut out, c);
            dlambda(loc[0], &mut out, -c);
        }
        out
    }
}

fn barycenter(simplex: &[usize], v: &[Point]) -> [f64; AMBIENT_DIM] {
    let n = simplex.len() as f64;
    std::array::from_fn(|i| simplex.iter().map(|&p| v[p][i]).sum::<f64>() / n)
}

fn column(j: &DMatrix<f64>, c: usize) -> Vec<f64> {
    j.column(c).iter().copied().collect()
}

/// `Φ₀(v, B) = Σ_σ [ −∫ f*(ι_v̄ Ω) ∧ F + ∫ f*Ω ∧ B̄ ]`.
///
/// The minus sign makes the form closed with `F = dA` and `B` a variation
/// of `A`.
pub fn eval_phi0(c: &Configuration, t: &TangentVector, s: &G2Structure) -> Result<f64, CycleError> {
    if c.mesh.dim() != 4 {
        return Err(CycleError::WrongDimension { expected: 4, found: c.mesh.dim() });
    }
    t.check(c)?;
    let tables = LocalTables::new(c.complex());
    let f = curvature(c.complex(), &c.connection);
    let per: Vec<Result<f64, CycleError>> = (0..c.mesh.n_simplices())
        .into_par_iter()
        .map(|i| {
            let j = c.mesh.differential(i);
            let vbar = barycenter(&c.complex().simplices()[i], &t.v);
            let iv = s.omega.interior(&vbar)?.pullback(&j)?;
            let fs = AlternatingForm::from_coeffs(4, 2, tables.two_form(i, &f.principal, 4))?;
            let bs = AlternatingForm::from_coeffs(4, 1, tables.whitney_mean(i, &t.b, 4))?;
            let om = s.omega.pullback(&j)?;
            let top = om.wedge(&bs)?.coeffs()[0] - iv.wedge(&fs)?.coeffs()[0];
            Ok(top / 24.0)
        })
        .collect();
    per.into_iter().sum()
}

/// `Φ_A(v, B) = Σ_σ [ ∫ F ∧ B̄ + ⟨∫ f*χ, v̄⟩ ]` on a 3-mesh.
pub fn eval_phi_a(c: &Configuration, t: &TangentVector, s: &G2Structure) -> Result<f64, CycleError> {
    if c.mesh.dim() != 3 {
        return Err(CycleError::WrongDimension { expected: 3, found: c.mesh.dim() });
    }
    t.check(c)?;
    let tables = LocalTables::new(c.complex());
    let f = curvature(c.complex(), &c.connection);
    let per: Vec<Result<f64, CycleError>> = (0..c.mesh.n_simplices())
        .into_par_iter()
        .map(|i| {
            let j = c.mesh.differential(i);
            let vbar = barycenter(&c.complex().simplices()[i], &t.v);
            let fs = AlternatingForm::from_coeffs(3, 2, tables.two_form(i, &f.principal, 3))?;
            let bs = AlternatingForm::from_coeffs(3, 1, tables.whitney_mean(i, &t.b, 3))?;
            let chi = s.chi_apply(&column(&j, 0), &column(&j, 1), &column(&j, 2));
            Ok((fs.wedge(&bs)?.coeffs()[0] + s.metric.dot(&chi, &vbar)) / 6.0)
        })
        .collect();
    per.into_iter().sum()
}

/// `Φ_DT(B) = ∫ F ∧ B ∧ Θ` on the cubical lattice, with the symmetrized
/// cubical cup product `½(F∪B + B∪F)` and `Θ` as a constant 4-cochain.
pub fn eval_phi_dt(l: &Lattice7, b: &[f64], s: &G2Structure) -> Result<f64, CycleError> {
    if b.len() != l.links().len() {
        return Err(CycleError::Mismatch(format!("{} link values for {} links", b.len(), l.links().len())));
    }
    let pairs = basis_indices(LATTICE_DIM, 2);
    let pair_index = |a: usize, c: usize| pairs.iter().position(|p| p[0] == a && p[1] == c).unwrap();
    // (μ, ν, ρ, weight ε(I, Iᶜ) Θ_{Iᶜ})
    let triples: Vec<([usize; 3], f64)> = basis_indices(LATTICE_DIM, 3)
        .into_iter()
        .filter_map(|i| {
            let comp: Vec<usize> = (0..LATTICE_DIM).filter(|x| !i.contains(x)).collect();
            let all: Vec<usize> = i.iter().chain(&comp).copied().collect();
            let (_, odd) = sort_with_sign(&all)?;
            let w = s.theta.coeff(&comp) * if odd { -1.0 } else { 1.0 };
            (w != 0.0).then_some(([i[0], i[1], i[2]], w))
        })
        .collect();
    let bl = |site: usize, dir: usize| b[site * LATTICE_DIM + dir];
    let cell = l.spacing().powi(4) * s.metric.det().sqrt();
    let total: f64 = (0..l.n_sites())
        .into_par_iter()
        .map(|x| {
            let fx = l.plaquettes(x);
            let mut acc = 0.0;
            for &([m, n, r], w) in &triples {
                let (fmn, fmr, fnr) = (fx[pair_index(m, n)], fx[pair_index(m, r)], fx[pair_index(n, r)]);
                let sh = |site: usize, a: usize, c: usize| l.shift(l.shift(site, a), c);
                let f_cup_b = fmn * bl(sh(x, m, n), r) - fmr * bl(sh(x, m, r), n) + fnr * bl(sh(x, n, r), m);
                let fy = |site: usize, a: usize, c: usize| l.plaquettes(site)[pair_index(a, c)];
                let b_cup_f = bl(x, m) * fy(l.shift(x, m), n, r) - bl(x, n) * fy(l.shift(x, n), m, r)
                    + bl(x, r) * fy(l.shift(x, r), m, n);
                acc += w * 0.5 * (f_cup_b + b_cup_f);
            }
            acc
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    Ok(total * cell)
}

/// A one-form on a space of configurations, for the closedness check.
pub trait ConfigurationOneForm {
    type Point;
    type Tangent;
    fn eval(&self, p: &Self::Point, t: &Self::Tangent) -> Result<f64, CycleError>;
    fn shift(&self, p: &Self::Point, t: &Self::Tangent, h: f64) -> Self::Point;
}

pub struct Phi0<'a>(pub &'a G2Structure);
pub struct PhiA<'a>(pub &'a G2Structure);
pub struct PhiDt<'a>(pub &'a G2Structure);

impl ConfigurationOneForm for Phi0<'_> {
    type Point = Configuration;
    type Tangent = TangentVector;
    fn eval(&self, p: &Configuration, t: &TangentVector) -> Result<f64, CycleError> {
        eval_phi0(p, t, self.0)
    }
    fn shift(&self, p: &Configuration, t: &TangentVector, h: f64) -> Configuration {
        p.displaced(t, h)
    }
}

impl ConfigurationOneForm for PhiA<'_> {
    type Point = Configuration;
    type Tangent = TangentVector;
    fn eval(&self, p: &Configuration, t: &TangentVector) -> Result<f64, CycleError> {
        eval_phi_a(p, t, self.0)
    }
    fn shift(&self, p: &Configuration, t: &TangentVector, h: f64) -> Configuration {
        p.displaced(t, h)
    }
}

impl ConfigurationOneForm for PhiDt<'_> {
    type Point = Lattice7;
    type Tangent = Vec<f64>;
    fn eval(&self, p: &Lattice7, t: &Vec<f64>) -> Result<f64, CycleError> {
        eval_phi_dt(p, t, self.0)
    }
    fn shift(&self, p: &Lattice7, t: &Vec<f64>, h: f64) -> Lattice7 {
        let moved = p.links().iter().zip(t).map(|(a, b)| a + h * b).collect();
        Lattice7::from_links(p.n(), moved).expect("same shape")
    }
}

/// Central-difference exterior derivative `dΦ(d1, d2)` at `base`.
pub fn closedness_check<F: ConfigurationOneForm>(
    form: &F,
    base: &F::Point,
    d1: &F::Tangent,
    d2: &F::Tangent,
    h: f64,
) -> Result<f64, CycleError> {
    if !(h >= 1e-8) {
        return Err(CycleError::StepTooSmall(h));
    }
    let along = |a: &F::Tangent, b: &F::Tangent| -> Result<f64, CycleError> {
        let plus = form.eval(&form.shift(base, a, h), b)?;
        let minus = form.eval(&form.shift(base, a, -h), b)?;
        Ok((plus - minus) / (2.0 * h))
    };
    Ok(along(d1, d2)? - along(d2, d1)?)
}

fn mean_edge_length(m: &ImmersedMesh) -> f64 {
    let (mut total, mut count) = (0.0, 0usize);
    for s in 0..m.n_simplices() {
        let p = m.lifted(s);
        for a in 1..p.len() {
            total += (0..AMBIENT_DIM).map(|i| (p[a][i] - p[0][i]).powi(2)).sum::<f64>().sqrt();
            count += 1;
        }
    }
    total / count.max(1) as f64
}

/// Trapezoid-rule line integral of `Φ₀` along a path of configurations.
pub fn psi0(path: &[Configuration], s: &G2Structure) -> Result<f64, CycleError> {
    let Some(first) = path.first() else { return Ok(0.0) };
    let scale = mean_edge_length(&first.mesh);
    let mut total = 0.0;
    for (index, w) in path.windows(2).enumerate() {
        let d = w[0].difference(&w[1]);
        let displacement = d.v.iter().map(|x| x.iter().map(|y| y * y).sum::<f64>().sqrt()).fold(0.0, f64::max);
        if displacement > scale / 10.0 {
            return Err(CycleError::PathTooCoarse { index, displacement, scale });
        }
        total += 0.5 * (eval_phi0(&w[0], &d, s)? + eval_phi0(&w[1], &d, s)?);
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// flow

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Energy {
    /// `coassoc² + ‖F⁺‖²`.
    pub r: f64,
    pub coassoc: f64,
    pub fplus_norm: f64,
}

/// Per-simplex energy and, optionally, its gradient with respect to the
/// differential `J` (7×4) and the curvature coefficients (6).
struct SimplexEnergy {
    e1: f64,
    e2: f64,
    grad_j: Option<DMatrix<f64>>,
    grad_f: [f64; 6],
}

// pairs a<b of {0,1,2,3} in basis order
const PAIRS4: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

fn simplex_energy(j: &DMatrix<f64>, f: &[f64], s: &G2Structure, grad: bool) -> Option<SimplexEnergy> {
    let g = s.metric.matrix();
    let gj = g * j;
    let gm = j.transpose() * &gj;
    let gm = Matrix4::from_fn(|r, c| gm[(r, c)]);
    let d = gm.determinant();
    if !(d > 0.0) {
        return None;
    }
    let h = gm.try_inverse()?;
    let sd = d.sqrt();
    let cols: Vec<Vec<f64>> = (0..4).map(|c| column(j, c)).collect();
    // co[p]_μ = Ω(e_μ, J_a, J_b) for the p-th pair
    let co: Vec<[f64; 7]> = PAIRS4
        .iter()
        .map(|&(a, b)| {
            let x = s.xi_apply(&cols[a], &cols[b]);
            std::array::from_fn(|m| (0..7).map(|n| g[(m, n)] * x[n]).sum())
        })
        .collect();
    let pidx = |a: usize, b: usize| PAIRS4.iter().position(|&p| p == (a, b)).unwrap();
    // ω_{ĵ} for omitted j, as the triple of the remaining indices
    let triples: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];
    let omega: [f64; 4] = std::array::from_fn(|jj| {
        let [a, b, c] = triples[jj];
        (0..7).map(|m| co[pidx(b, c)][m] * cols[a][m]).sum()
    });
    let w = Vector4::from_fn(|jj, _| if jj % 2 == 0 { omega[jj] } else { -omega[jj] });
    let gw = gm * w;
    let q = w.dot(&gw);
    let e1 = q / (24.0 * sd);

    let mut fm = Matrix4::zeros();
    for (p, &(a, b)) in PAIRS4.iter().enumerate() {
        fm[(a, b)] = f[p];
        fm[(b, a)] = -f[p];
    }
    let hfh = h * fm * h;
    let nf = 0.5 * fm.component_mul(&hfh).sum();
    let ff = 2.0 * (f[0] * f[5] - f[1] * f[4] + f[2] * f[3]);
    let e2 = (nf * sd + ff) / 48.0;

    let mut grad_f = [0.0; 6];
    let dff = [2.0 * f[5], -2.0 * f[4], 2.0 * f[3], 2.0 * f[2], -2.0 * f[1], 2.0 * f[0]];
    for (p, &(a, b)) in PAIRS4.iter().enumerate() {
        grad_f[p] = (2.0 * sd * hfh[(a, b)] + dff[p]) / 48.0;
    }
    if !grad {
        return Some(SimplexEnergy { e1, e2, grad_j: None, grad_f });
    }
    let s1 = (w * w.transpose() - 0.5 * q * h) / (24.0 * sd);
    let s2 = (h * fm * h * fm * h + 0.5 * nf * h) * (sd / 48.0);
    let smat = s1 + s2;
    let smat = DMatrix::from_fn(4, 4, |r, c| smat[(r, c)]);
    let mut gjm = 2.0 * gj * smat;
    for (jj, [a, b, c]) in triples.iter().copied().enumerate() {
        let sign = if jj % 2 == 0 { 1.0 } else { -1.0 };
        let kappa = sign * 2.0 * gw[jj] / (24.0 * sd);
        for m in 0..7 {
            gjm[(m, a)] += kappa * co[pidx(b, c)][m];
            gjm[(m, b)] -= kappa * co[pidx(a, c)][m];
            gjm[(m, c)] += kappa * co[pidx(a, b)][m];
        }
    }
    Some(SimplexEnergy { e1, e2, grad_j: Some(gjm), grad_f })
}

struct Assembly {
    energy: Energy,
    grad: Option<TangentVector>,
    vertex_mass: Vec<f64>,
    edge_mass: Vec<f64>,
}

fn assemble(c: &Configuration, s: &G2Structure, tables: &LocalTables, grad: bool) -> Result<Assembly, CycleError> {
    if c.mesh.dim() != 4 {
        return Err(CycleError::WrongDimension { expected: 4, found: c.mesh.dim() });
    }
    let cx = c.complex();
    let f = curvature(cx, &c.connection);
    let rmat = reconstruction_matrix(4);
    let per: Vec<Result<(SimplexEnergy, f64), CycleError>> = (0..c.mesh.n_simplices())
        .into_par_iter()
        .map(|i| {
            let j = c.mesh.differential(i);
            let coeffs = tables.two_form(i, &f.principal, 4);
            let e = simplex_energy(&j, &coeffs, s, grad).ok_or(CycleError::Degenerate(i))?;
            let vol = s.metric.pullback(&j).map(|g| g.det().sqrt() / 24.0).unwrap_or(0.0);
            Ok((e, vol))
        })
        .collect();
    let nv = cx.n_vertices();
    let mut gv = vec![[0.0; AMBIENT_DIM]; nv];
    let mut gface = vec![0.0; cx.faces(2).len()];
    let mut vmass = vec![0.0; nv];
    let mut emass = vec![0.0; cx.faces(1).len()];
    let (mut e1, mut e2) = (0.0, 0.0);
    for (i, r) in per.into_iter().enumerate() {
        let (e, vol) = r?;
        e1 += e.e1;
        e2 += e.e2;
        let simplex = &cx.simplices()[i];
        for &v in simplex {
            vmass[v] += vol / 5.0;
        }
        for &(edge, _) in &tables.edges[i] {
            emass[edge] += vol / 10.0;
        }
        if let Some(gj) = e.grad_j {
            for a in 1..=4 {
                for m in 0..AMBIENT_DIM {
                    gv[simplex[a]][m] += gj[(m, a - 1)];
                    gv[simplex[0]][m] -= gj[(m, a - 1)];
                }
            }
            for (l, &(t, sg)) in tables.faces[i].iter().enumerate() {
                let dv: f64 = (0..6).map(|p| e.grad_f[p] * rmat[(p, l)]).sum();
                gface[t] += sg * dv;
            }
        }
    }
    let grad = grad.then(|| {
        let mut gb = vec![0.0; cx.faces(1).len()];
        for (t, tri) in cx.faces(2).iter().enumerate() {
            let idx = |a: usize, b: usize| cx.face_index(&[a, b]).unwrap();
            gb[idx(tri[0], tri[1])] += gface[t];
            gb[idx(tri[1], tri[2])] += gface[t];
            gb[idx(tri[0], tri[2])] -= gface[t];
        }
        TangentVector { v: gv, b: gb }
    });
    let energy = Energy { r: e1 + e2, coassoc: e1.max(0.0).sqrt(), fplus_norm: e2.max(0.0).sqrt() };
    Ok(Assembly { energy, grad, vertex_mass: vmass, edge_mass: emass })
}

pub fn flow_energy(c: &Configuration, s: &G2Structure) -> Result<Energy, CycleError> {
    Ok(assemble(c, s, &LocalTables::new(c.complex()), false)?.energy)
}

/// `R` and its gradient with respect to vertex positions and edge angles.
pub fn energy_gradient(c: &Configuration, s: &G2Structure) -> Result<(Energy, TangentVector), CycleError> {
    let a = assemble(c, s, &LocalTables::new(c.complex()), true)?;
    Ok((a.energy, a.grad.expect("requested")))
}

/// Integral 1-cycles and their dual cocycles, for reading and resetting
/// holonomies.
#[derive(Clone, Debug)]
pub struct HolonomyFrame {
    cycles: Vec<Vec<f64>>,
    cocycles: Vec<Vec<f64>>,
}

impl HolonomyFrame {
    pub fn new(c: &SimplicialComplex) -> Result<Self, CycleError> {
        use num_traits::ToPrimitive;
        let basis = ChainComplex::from_simplicial(c).reduce()?.cohomology_basis(1)?;
        let conv = |v: &Vec<num_bigint::BigInt>| -> Vec<f64> { v.iter().map(|x| x.to_f64().unwrap()).collect() };
        Ok(Self { cycles: basis.cycles.iter().map(conv).collect(), cocycles: basis.cocycles.iter().map(conv).collect() })
    }

    pub fn rank(&self) -> usize {
        self.cycles.len()
    }

    /// Raw holonomies (not reduced mod 2π) around the basis cycles.
    pub fn holonomies(&self, conn: &LatticeConnection) -> Vec<f64> {
        self.cycles.iter().map(|z| z.iter().zip(conn.angles()).map(|(a, b)| a * b).sum()).collect()
    }

    /// Shift by closed cocycles so the raw holonomies equal `target`;
    /// curvature is unchanged.
    pub fn pin(&self, conn: &LatticeConnection, target: &[f64]) -> LatticeConnection {
        let mut angles = conn.angles().to_vec();
        for ((h, t), phi) in self.holonomies(conn).iter().zip(target).zip(&self.cocycles) {
            for (a, p) in angles.iter_mut().zip(phi) {
                *a -= (h - t) * p;
            }
        }
        LatticeConnection::from_raw(angles)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowOptions {
    pub dt: f64,
    pub max_steps: usize,
    pub tol: f64,
    /// Hold the holonomies around a basis of `H_1` fixed along the flow.
    pub pin_holonomy: bool,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { dt: 0.1, max_steps: 10_000, tol: 1e-8, pin_holonomy: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub r: f64,
    pub coassoc: f64,
    pub fplus_norm: f64,
    pub dt: f64,
}

#[derive(Clone, Debug)]
pub struct FlowResult {
    pub trace: Vec<TraceRow>,
    pub final_config: Configuration,
    pub converged: bool,
    /// The step size collapsed below `1e-12` before convergence.
    pub diverged: bool,
}

impl FlowResult {
    pub fn final_r(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |t| t.r)
    }

    pub fn trace_csv(&self) -> String {
        let mut out = String::from("step,R,coassoc,Fplus_norm,dt\n");
        for t in &self.trace {
            out.push_str(&format!("{},{:.12e},{:.12e},{:.12e},{:.6e}\n", t.step, t.r, t.coassoc, t.fplus_norm, t.dt));
        }
        out
    }
}

/// Steepest descent on `R = coassoc² + ‖F⁺‖²` with lumped masses: vertex
/// velocities `−∇_p R / m_p` and edge velocities `−∇_A R / m_e`, where the
/// masses are a fifth and a tenth of the incident simplex volumes. A step
/// that increases `R` is halved and retried; an accepted step grows the next
/// one by 1.2.
pub fn flow_run(c0: &Configuration, s: &G2Structure, opts: &FlowOptions) -> Result<FlowResult, CycleError> {
    let tables = LocalTables::new(c0.complex());
    let frame = if opts.pin_holonomy { Some(HolonomyFrame::new(c0.complex())?) } else { None };
    let target = frame.as_ref().map(|f| f.holonomies(&c0.connection));
    let mut current = c0.clone();
    let mut a = assemble(&current, s, &tables, true)?;
    let mut dt = opts.dt;
    let row = |step: usize, e: &Energy, dt: f64| TraceRow { step, r: e.r, coassoc: e.coassoc, fplus_norm: e.fplus_norm, dt };
    let mut trace = vec![row(0, &a.energy, dt)];
    let mut step = 0;
    while a.energy.r >= opts.tol && step < opts.max_steps {
        let g = a.grad.as_ref().expect("gradient requested");
        let velocity = TangentVector {
            v: g.v.iter().zip(&a.vertex_mass).map(|(d, m)| std::array::from_fn(|i| -d[i] / m)).collect(),
            b: g.b.iter().zip(&a.edge_mass).map(|(d, m)| -d / m).collect(),
        };
        let next = loop {
            let mut trial = current.displaced(&velocity, dt);
            if let (Some(f), Some(t)) = (&frame, &target) {
                trial.connection = f.pin(&trial.connection, t);
            }
            match assemble(&trial, s, &tables, true) {
                Ok(b) if b.energy.r <= a.energy.r => break Some((trial, b)),
                _ => {
                    dt *= 0.5;
                    if dt < 1e-12 {
                        break None;
                    }
                }
            }
        };
        let Some((trial, b)) = next else {
            return Ok(FlowResult { trace, final_config: current, converged: false, diverged: true });
        };
        step += 1;
        trace.push(row(step, &b.energy, dt));
        current = trial;
        a = b;
        dt *= 1.2;
    }
    let converged = a.energy.r < opts.tol;
    Ok(FlowResult { trace, final_config: current, converged, diverged: false })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Basin {
    /// Seed index whose endpoint represents the class.
    pub representative: usize,
    pub members: Vec<usize>,
}

impl Basin {
    pub fn multiplicity(&self) -> usize {
        self.members.len()
    }
}

#[derive(Clone, Debug)]
pub struct CountReport {
    pub basins: Vec<Basin>,
    pub not_converged: Vec<usize>,
    pub results: Vec<FlowResult>,
}

/// Whether two endpoints agree modulo torus translations and gauge: same
/// complex, same mean tangent plane, normal positions equal after aligning
/// centres of mass, and equal holonomies (all within `tol`).
pub fn same_class(a: &Configuration, b: &Configuration, tol: f64) -> Result<bool, CycleError> {
    if a.complex().simplices() != b.complex().simplices() || a.complex().n_vertices() != b.complex().n_vertices() {
        return Ok(false);
    }
    let (fa, fb) = (tangent_frame(&a.mesh), tangent_frame(&b.mesh));
    let pa = &fa * fa.transpose();
    let pb = &fb * fb.transpose();
    if (&pa - &pb).amax() > tol {
        return Ok(false);
    }
    let normal = DMatrix::<f64>::identity(AMBIENT_DIM, AMBIENT_DIM) - pa;
    let diffs: Vec<nalgebra::DVector<f64>> = a
        .mesh
        .positions()
        .iter()
        .zip(b.mesh.positions())
        .map(|(p, q)| &normal * nalgebra::DVector::from_fn(AMBIENT_DIM, |i, _| wrap_angle(q[i] - p[i])))
        .collect();
    let mean = diffs.iter().fold(nalgebra::DVector::zeros(AMBIENT_DIM), |acc, d| acc + d) / diffs.len() as f64;
    if diffs.iter().any(|d| (d - &mean).amax() > tol) {
        return Ok(false);
    }
    let frame = HolonomyFrame::new(a.complex())?;
    let (ha, hb) = (frame.holonomies(&a.connection), frame.holonomies(&b.connection));
    Ok(ha.iter().zip(&hb).all(|(x, y)| wrap_angle(x - y).abs() <= tol))
}

/// Run the flow from every seed (concurrently) and cluster the converged
/// endpoints; multiplicities are unsigned.
pub fn count_hslag(
    seeds: &[Configuration],
    s: &G2Structure,
    opts: &FlowOptions,
    cluster_tol: f64,
) -> Result<CountReport, CycleError> {
    let results: Vec<Result<FlowResult, CycleError>> = seeds.par_iter().map(|c| flow_run(c, s, opts)).collect();
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut basins: Vec<Basin> = Vec::new();
    let mut not_converged = Vec::new();
    for (i, r) in results.iter().enumerate() {
        if !r.converged {
            not_converged.push(i);
            continue;
        }
        let mut placed = false;
        for basin in basins.iter_mut() {
            if same_class(&results[basin.representative].final_config, &r.final_config, cluster_tol)? {
                basin.members.push(i);
                placed = true;
                break;
            }
        }
        if !placed {
            basins.push(Basin { representative: i, members: vec![i] });
        }
    }
    Ok(CountReport { basins, not_converged, results })
}
