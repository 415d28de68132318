//! G2 structures on `R^7`.
//!
//! Frame convention: `e^0..e^3 = dx^0..dx^3` and `f^j = dx^{3+j}`, with
//! `dx^0 ∧ … ∧ dx^6` positively oriented.

use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::forms::{basis_indices, AlternatingForm, FormError, Metric};

#[derive(Debug, Error)]
pub enum G2Error {
    #[error("3-form is not positive: {0}")]
    NotPositive(String),
    #[error("expected a 3-form on R^7, got degree {degree} on R^{dim}")]
    WrongShape { dim: usize, degree: usize },
    #[error("Calabi-Yau data invalid: {0}")]
    InvalidCalabiYau(String),
    #[error(transparent)]
    Form(#[from] FormError),
}

fn e(i: usize) -> AlternatingForm {
    AlternatingForm::covector(7, i).expect("index < 7")
}

fn f(j: usize) -> AlternatingForm {
    AlternatingForm::covector(7, 3 + j).expect("index < 7")
}

fn w(a: &AlternatingForm, b: &AlternatingForm) -> AlternatingForm {
    a.wedge(b).expect("same dimension")
}

/// `Ω = f¹f²f³ − f¹(e¹e⁰ + e²e³) − f²(e²e⁰ + e³e¹) − f³(e³e⁰ + e¹e²)`.
pub fn standard_omega() -> AlternatingForm {
    let mut omega = w(&w(&f(1), &f(2)), &f(3));
    let groups = [(1, [(1, 0), (2, 3)]), (2, [(2, 0), (3, 1)]), (3, [(3, 0), (1, 2)])];
    for (j, pairs) in groups {
        let inner = w(&e(pairs[0].0), &e(pairs[0].1))
            .add(&w(&e(pairs[1].0), &e(pairs[1].1)))
            .expect("same shape");
        omega = omega.sub(&w(&f(j), &inner)).expect("same shape");
    }
    omega
}

/// The symmetric form `B_ij` with `ι_i φ ∧ ι_j φ ∧ φ = B_ij dx^0…6`, before
/// the sign normalisation.
fn raw_bilinear(phi: &AlternatingForm) -> DMatrix<f64> {
    let contractions: Vec<AlternatingForm> = (0..7)
        .map(|i| {
            let mut v = [0.0; 7];
            v[i] = 1.0;
            phi.interior(&v).expect("dimension checked")
        })
        .collect();
    let mut b = DMatrix::zeros(7, 7);
    for i in 0..7 {
        for j in i..7 {
            let top = contractions[i]
                .wedge(&contractions[j])
                .and_then(|x| x.wedge(phi))
                .expect("dimension checked");
            b[(i, j)] = top.coeffs()[0];
            b[(j, i)] = top.coeffs()[0];
        }
    }
    b
}

struct Calibration {
    /// Sign making `B(standard Ω)` positive definite.
    sign: f64,
    /// Constant `c` in `g = c · det(B)^{-1/9} B`.
    scale: f64,
}

fn signed_ninth_root(x: f64) -> f64 {
    x.signum() * x.abs().powf(1.0 / 9.0)
}

fn calibration() -> &'static Calibration {
    static CAL: OnceLock<Calibration> = OnceLock::new();
    CAL.get_or_init(|| {
        let raw = raw_bilinear(&standard_omega());
        let sign = raw[(0, 0)].signum();
        let b = raw * sign;
        let scale = signed_ninth_root(b.determinant()) / b[(0, 0)];
        Calibration { sign, scale }
    })
}

/// The positivity bilinear form, normalised so the standard `Ω` gives a
/// positive-definite matrix.
pub fn positivity_form(phi: &AlternatingForm) -> Result<DMatrix<f64>, G2Error> {
    check_three_form(phi)?;
    Ok(raw_bilinear(phi) * calibration().sign)
}

fn check_three_form(phi: &AlternatingForm) -> Result<(), G2Error> {
    if phi.dim() != 7 || phi.degree() != 3 {
        return Err(G2Error::WrongShape { dim: phi.dim(), degree: phi.degree() });
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct PositivityReport {
    pub positive: bool,
    /// `+1` if `B` is positive definite, `-1` if negative definite, `0` otherwise.
    pub orientation: i8,
    /// Eigenvalues of `B` in ascending order.
    pub eigenvalues: Vec<f64>,
    pub threshold: f64,
    pub diagnostic: String,
}

/// Definiteness test of `B(u, v) = ι_u φ ∧ ι_v φ ∧ φ`.
///
/// Forms in the `GL(7)` orbit of the standard one have definite `B`;
/// orientation-reversing maps flip its sign, which is reported in
/// `orientation`.
pub fn is_positive(phi: &AlternatingForm) -> PositivityReport {
    let b = match positivity_form(phi) {
        Ok(b) => b,
        Err(err) => {
            return PositivityReport {
                positive: false,
                orientation: 0,
                eigenvalues: Vec::new(),
                threshold: 0.0,
                diagnostic: err.to_string(),
            }
        }
    };
    let mut eig: Vec<f64> = SymmetricEigen::new(b.clone()).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| a.total_cmp(b));
    let threshold = 1e-10 * b.amax();
    let orientation = if b.amax() == 0.0 {
        0
    } else if eig.iter().all(|&x| x > threshold) {
        1
    } else if eig.iter().all(|&x| x < -threshold) {
        -1
    } else {
        0
    };
    let diagnostic = if orientation != 0 {
        "definite".to_string()
    } else if b.amax() == 0.0 {
        "B vanishes identically".to_string()
    } else {
        let pos = eig.iter().filter(|&&x| x > threshold).count();
        let neg = eig.iter().filter(|&&x| x < -threshold).count();
        format!("B indefinite or degenerate: {pos} positive, {neg} negative, {} near zero", 7 - pos - neg)
    };
    PositivityReport {
        positive: orientation != 0,
        orientation,
        eigenvalues: eig,
        threshold,
        diagnostic,
    }
}

/// Metric induced by a positive 3-form, `g = c · det(B)^{-1/9} · B`, with
/// `c` fixed so that the standard form induces the identity. Also returns
/// the induced orientation sign.
pub fn induced_metric(phi: &AlternatingForm) -> Result<(Metric, i8), G2Error> {
    let report = is_positive(phi);
    if !report.positive {
        return Err(G2Error::NotPositive(report.diagnostic));
    }
    let b = positivity_form(phi)?;
    let g = &b * (calibration().scale / signed_ninth_root(b.determinant()));
    Ok((Metric::new(g)?, report.orientation))
}

/// A positive 3-form together with everything it determines.
#[derive(Clone, Debug)]
pub struct G2Structure {
    pub omega: AlternatingForm,
    pub metric: Metric,
    pub orientation: i8,
    /// Riemannian volume form of `metric` with the induced orientation.
    pub vol: AlternatingForm,
    /// `Θ = ⋆Ω`.
    pub theta: AlternatingForm,
    /// `xi[(c, p)]`: component `c` of `ξ(e_a, e_b)` for the `p`-th pair `a < b`.
    pub xi: DMatrix<f64>,
    /// `chi[(c, t)]`: component `c` of `χ(e_a, e_b, e_d)` for the `t`-th triple.
    pub chi: DMatrix<f64>,
}

impl G2Structure {
    pub fn new(omega: AlternatingForm) -> Result<Self, G2Error> {
        let (metric, orientation) = induced_metric(&omega)?;
        let vol = crate::forms::volume_form(7, f64::from(orientation) * metric.det().sqrt());
        let theta = omega.hodge(&metric, orientation)?;
        let (xi, chi) = cross_products(&omega, &theta, &metric);
        Ok(Self { omega, metric, orientation, vol, theta, xi, chi })
    }

    pub fn standard() -> Self {
        Self::new(standard_omega()).expect("standard form is positive")
    }

    /// `ξ(u, v)` with `⟨ξ(u, v), w⟩ = Ω(u, v, w)`.
    pub fn xi_apply(&self, u: &[f64], v: &[f64]) -> [f64; 7] {
        let mut out = [0.0; 7];
        for (p, idx) in basis_indices(7, 2).iter().enumerate() {
            let coef = u[idx[0]] * v[idx[1]] - u[idx[1]] * v[idx[0]];
            if coef == 0.0 {
                continue;
            }
            for (c, o) in out.iter_mut().enumerate() {
                *o += coef * self.xi[(c, p)];
            }
        }
        out
    }

    /// `χ(x, y, z)` with `⟨w, χ(x, y, z)⟩ = Θ(w, x, y, z)`.
    pub fn chi_apply(&self, x: &[f64], y: &[f64], z: &[f64]) -> [f64; 7] {
        let mut out = [0.0; 7];
        for (t, idx) in basis_indices(7, 3).iter().enumerate() {
            let minor = vec![
                vec![x[idx[0]], y[idx[0]], z[idx[0]]],
                vec![x[idx[1]], y[idx[1]], z[idx[1]]],
                vec![x[idx[2]], y[idx[2]], z[idx[2]]],
            ];
            let coef = crate::forms::small_det(&minor);
            if coef == 0.0 {
                continue;
            }
            for (c, o) in out.iter_mut().enumerate() {
                *o += coef * self.chi[(c, t)];
            }
        }
        out
    }
}

/// Tables for `ξ` and `χ`: raise the last slot of `Ω` and the first slot of
/// `Θ` with the inverse metric.
pub fn cross_products(
    omega: &AlternatingForm,
    theta: &AlternatingForm,
    metric: &Metric,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let ginv = metric.inverse();
    let pairs = basis_indices(7, 2);
    let triples = basis_indices(7, 3);
    let mut xi = DMatrix::zeros(7, pairs.len());
    for (p, ab) in pairs.iter().enumerate() {
        let lowered: Vec<f64> = (0..7).map(|w| omega.coeff(&[ab[0], ab[1], w])).collect();
        for c in 0..7 {
            xi[(c, p)] = (0..7).map(|w| ginv[(c, w)] * lowered[w]).sum();
        }
    }
    let mut chi = DMatrix::zeros(7, triples.len());
    for (t, abd) in triples.iter().enumerate() {
        let lowered: Vec<f64> = (0..7).map(|w| theta.coeff(&[w, abd[0], abd[1], abd[2]])).collect();
        for c in 0..7 {
            chi[(c, t)] = (0..7).map(|w| ginv[(c, w)] * lowered[w]).sum();
        }
    }
    (xi, chi)
}

/// Constant Kähler and holomorphic volume forms on `R^6`.
#[derive(Clone, Debug)]
pub struct CalabiYauData {
    pub kahler: AlternatingForm,
    pub holo_re: AlternatingForm,
    pub holo_im: AlternatingForm,
}

impl CalabiYauData {
    /// Flat data on `R^6` with coordinates `(e¹, e², e³, f¹, f², f³)`:
    /// `z^k = f^k + i e^k`, `Ω_X = dz¹ ∧ dz² ∧ dz³`, `ω_X = Σ e^k ∧ f^k`.
    pub fn standard_flat() -> Self {
        let ek = |k: usize| AlternatingForm::covector(6, k - 1).expect("k in 1..=3");
        let fk = |k: usize| AlternatingForm::covector(6, k + 2).expect("k in 1..=3");
        let mut kahler = AlternatingForm::zero(6, 2).expect("valid");
        for k in 1..=3 {
            kahler = kahler.add(&ek(k).wedge(&fk(k)).expect("same dim")).expect("same shape");
        }
        // (re, im) products of (f^k + i e^k)
        let mut re = AlternatingForm::scalar(6, 1.0).expect("valid");
        let mut im = AlternatingForm::zero(6, 0).expect("valid");
        for k in 1..=3 {
            let (a, b) = (fk(k), ek(k));
            let new_re = re.wedge(&a).unwrap().sub(&im.wedge(&b).unwrap()).unwrap();
            let new_im = re.wedge(&b).unwrap().add(&im.wedge(&a).unwrap()).unwrap();
            re = new_re;
            im = new_im;
        }
        Self { kahler, holo_re: re, holo_im: im }
    }

    pub fn with_kahler_scale(&self, t: f64) -> Self {
        Self { kahler: self.kahler.scale(t), ..self.clone() }
    }

    fn check_shapes(&self) -> Result<(), G2Error> {
        let shapes = [(&self.kahler, 2), (&self.holo_re, 3), (&self.holo_im, 3)];
        for (form, deg) in shapes {
            if form.dim() != 6 || form.degree() != deg {
                return Err(G2Error::InvalidCalabiYau(format!(
                    "expected a {deg}-form on R^6, got degree {} on R^{}",
                    form.degree(),
                    form.dim()
                )));
            }
        }
        Ok(())
    }

    /// Checks `ω³ ≠ 0` and `ω ∧ Ω_X = 0`.
    pub fn validate(&self) -> Result<(), G2Error> {
        self.check_shapes()?;
        let cube = self.kahler.wedge(&self.kahler)?.wedge(&self.kahler)?;
        if cube.max_abs() == 0.0 {
            return Err(G2Error::InvalidCalabiYau("Kähler form is degenerate".into()));
        }
        let scale = self.kahler.max_abs() * self.holo_re.max_abs().max(self.holo_im.max_abs());
        let mixed = self
            .kahler
            .wedge(&self.holo_re)?
            .max_abs()
            .max(self.kahler.wedge(&self.holo_im)?.max_abs());
        if mixed > 1e-12 * scale.max(1.0) {
            return Err(G2Error::InvalidCalabiYau("ω ∧ Ω_X does not vanish".into()));
        }
        Ok(())
    }
}

/// Which model the extra factor represents; the 3-form is the same.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProductMode {
    Circle,
    Cylinder,
}

#[derive(Clone, Debug)]
pub struct ProductForm {
    pub form: AlternatingForm,
    pub mode: ProductMode,
    pub positivity: PositivityReport,
}

/// Index of the extra `θ` (or `t`) coordinate; `R^6` occupies `x^1..x^6`.
pub const PRODUCT_AXIS: usize = 0;

/// Embeds a `R^6` form into `R^7` via `y^k ↦ x^{k+1}`.
pub fn lift_to_seven(form: &AlternatingForm) -> Result<AlternatingForm, FormError> {
    let proj = DMatrix::from_fn(6, 7, |r, c| if c == r + 1 { 1.0 } else { 0.0 });
    form.pullback(&proj)
}

/// `Re Ω_X + ω_X ∧ dθ` on `R^7` with `dθ = dx^0`. Only the degrees of the
/// inputs are enforced; a non-positive result (for instance from a
/// degenerate `ω_X`) is returned with its positivity report.
pub fn product_form(cy: &CalabiYauData, mode: ProductMode) -> Result<ProductForm, G2Error> {
    cy.check_shapes()?;
    let dtheta = AlternatingForm::covector(7, PRODUCT_AXIS)?;
    let form = lift_to_seven(&cy.holo_re)?.add(&lift_to_seven(&cy.kahler)?.wedge(&dtheta)?)?;
    let positivity = is_positive(&form);
    Ok(ProductForm { form, mode, positivity })
}

/// One identity of a `G2Structure` with its worst deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct StructureCheck {
    pub name: &'static str,
    pub deviation: f64,
}

/// The defining identities of `s`, evaluated on basis tuples:
/// positivity, `Ω ∧ Θ = 7 vol`, `⟨ξ(u,v), w⟩ = Ω(u,v,w)`,
/// `⟨w, χ(x,y,z)⟩ = Θ(w,x,y,z)` and `|ξ(u,v)|² = |u ∧ v|²`.
pub fn structure_checks(s: &G2Structure) -> Vec<StructureCheck> {
    let unit = |i: usize| {
        let mut v = [0.0; 7];
        v[i] = 1.0;
        v
    };
    let positive = is_positive(&s.omega);
    let top = s.omega.wedge(&s.theta).map(|w| w.coeffs()[0]).unwrap_or(f64::NAN);
    let (mut xi_def, mut xi_norm, mut chi_def) = (0.0f64, 0.0f64, 0.0f64);
    for u in 0..7 {
        for v in 0..7 {
            let x = s.xi_apply(&unit(u), &unit(v));
            for w in 0..7 {
                xi_def = xi_def.max((s.metric.dot(&x, &unit(w)) - s.omega.coeff(&[u, v, w])).abs());
            }
            let g = s.metric.matrix();
            let wedge_sq = g[(u, u)] * g[(v, v)] - g[(u, v)] * g[(u, v)];
            xi_norm = xi_norm.max((s.metric.dot(&x, &x) - wedge_sq).abs());
        }
    }
    for idx in basis_indices(7, 3) {
        let c = s.chi_apply(&unit(idx[0]), &unit(idx[1]), &unit(idx[2]));
        for w in 0..7 {
            chi_def = chi_def.max((s.metric.dot(&unit(w), &c) - s.theta.coeff(&[w, idx[0], idx[1], idx[2]])).abs());
        }
    }
    vec![
        StructureCheck { name: "positive", deviation: if positive.positive { 0.0 } else { 1.0 } },
        StructureCheck { name: "omega_wedge_theta", deviation: (top - 7.0 * s.vol.coeffs()[0]).abs() },
        StructureCheck { name: "xi_defining", deviation: xi_def },
        StructureCheck { name: "xi_norm", deviation: xi_norm },
        StructureCheck { name: "chi_defining", deviation: chi_def },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_omega_has_seven_unit_terms() {
        let omega = standard_omega();
        let terms = omega.terms();
        assert_eq!(terms.len(), 7);
        assert!(terms.iter().all(|(_, c)| c.abs() == 1.0));
        assert_eq!(omega.coeff(&[4, 5, 6]), 1.0);
        assert_eq!(omega.coeff(&[0, 1, 4]), 1.0);
    }

    #[test]
    fn standard_structure_is_euclidean() {
        let s = G2Structure::standard();
        assert_eq!(s.orientation, 1);
        let err = (s.metric.matrix() - DMatrix::<f64>::identity(7, 7)).amax();
        assert!(err < 1e-12, "metric error {err}");
    }

    #[test]
    fn structure_checks_hold_for_the_standard_form() {
        for c in structure_checks(&G2Structure::standard()) {
            assert!(c.deviation <= 1e-12, "{}: {}", c.name, c.deviation);
        }
    }

    #[test]
    fn zero_and_degenerate_forms_are_not_positive() {
        assert!(!is_positive(&AlternatingForm::zero(7, 3).unwrap()).positive);
        let single = AlternatingForm::monomial(7, &[4, 5, 6], 1.0).unwrap();
        let r = is_positive(&single);
        assert!(!r.positive);
        assert_ne!(r.diagnostic, "definite");
        assert!(induced_metric(&single).is_err());
    }

    #[test]
    fn wrong_shape_is_reported() {
        let r = is_positive(&AlternatingForm::zero(7, 2).unwrap());
        assert!(!r.positive);
        assert!(r.diagnostic.contains("3-form"));
    }

    #[test]
    fn xi_basis_case() {
        let s = G2Structure::standard();
        let mut u = [0.0; 7];
        let mut v = [0.0; 7];
        u[4] = 1.0;
        v[5] = 1.0;
        let x = s.xi_apply(&u, &v);
        let mut expected = [0.0; 7];
        expected[6] = 1.0;
        assert_eq!(x, expected);
    }

    #[test]
    fn kahler_scaling_stays_positive_and_zero_kahler_fails() {
        let cy = CalabiYauData::standard_flat();
        for t in [0.5, 1.0, 2.0] {
            let p = product_form(&cy.with_kahler_scale(t), ProductMode::Circle).unwrap();
            assert!(p.positivity.positive, "t = {t}");
        }
        let flat = cy.with_kahler_scale(0.0);
        assert!(flat.validate().is_err());
        let p = product_form(&flat, ProductMode::Cylinder).unwrap();
        assert!(!p.positivity.positive);
        assert_eq!(p.mode, ProductMode::Cylinder);
    }
}
