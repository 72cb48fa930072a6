//! Pointwise contact geometry on the catalog models: contact forms, Reeb
//! fields, the two decompositions and contact Hamiltonian vector fields.
//!
//! A one-form is handled through its coefficient covector `a` and the
//! antisymmetric matrix `W` of its exterior derivative. With that encoding
//! the interior product is `(X⌟dλ)_j = −(W X)_j`, so every pointwise solve
//! below is a least-squares problem on the stacked matrix `[W; aᵀ]`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fields::{Fd, Grid, OneForm, ScalarField, VectorField};
use crate::linalg::{dot, factorial, max_abs, pfaffian, HouseholderQr};

const TAU: f64 = 2.0 * PI;

/// Numerical tolerances shared by every operation on a model.
#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    /// Residual bound for solves with exact (catalog) coefficients.
    pub lin: f64,
    /// Residual bound once finite differences enter `dλ`.
    pub lin_scaled: f64,
    pub conf: f64,
    pub newton: f64,
    pub gram: f64,
    pub degeneracy: f64,
    pub density_floor: f64,
    /// Smallest accepted reciprocal condition number of the maxent Hessian.
    pub cond: f64,
    pub inv: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            lin: 1e-8,
            lin_scaled: 1e-6,
            conf: 1e-5,
            newton: 1e-10,
            gram: 1e-10,
            degeneracy: 1e-12,
            density_floor: 1e-300,
            cond: 1e-13,
            inv: 1e-6,
        }
    }
}

/// An explicit periodic box carrying a catalog contact form `λ₀`.
pub struct ContactModel {
    name: String,
    n: usize,
    periods: Vec<f64>,
    axis_names: Vec<String>,
    base: OneForm,
    orientation_sign: f64,
    pub fd: Fd,
    pub tol: Tolerances,
}

impl fmt::Debug for ContactModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ContactModel")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("periods", &self.periods)
            .field("orientation_sign", &self.orientation_sign)
            .finish()
    }
}

impl ContactModel {
    /// Looks up a catalog model. `n` is only meaningful for `torus_2n1`.
    pub fn catalog(name: &str, n: usize) -> Result<Self> {
        match name {
            "torus3" => Ok(Self::torus3()),
            "torus_2n1" => Self::torus_2n1(n),
            _ => Err(Error::UnknownModel(name.to_string())),
        }
    }

    /// `λ₀ = cos(2πz) dx + sin(2πz) dy` on the unit 3-torus.
    pub fn torus3() -> Self {
        Self::build("torus3", 1, &["x", "y", "z"], torus3_form())
    }

    /// Tori of dimension `2n+1`. For `n = 1` this is the 3-torus model; for
    /// `n = 2` the 3-torus form is extended over a 2-torus factor `(s, t)`:
    /// `λ₀ + P ds − Q dt` with `P = cos 2πy + 3 cos 2πx cos 2πz`,
    /// `Q = sin 2πx + 3 sin 2πy sin 2πz`.
    pub fn torus_2n1(n: usize) -> Result<Self> {
        match n {
            1 => Ok(Self::build("torus_2n1", 1, &["x", "y", "z"], torus3_form())),
            2 => Ok(Self::build("torus_2n1", 2, &["x", "y", "z", "s", "t"], torus5_form())),
            _ => Err(Error::UnknownModel(format!("torus_2n1 with n = {n} (available: n = 1, 2)"))),
        }
    }

    fn build(name: &str, n: usize, axes: &[&str], base: OneForm) -> Self {
        let d = 2 * n + 1;
        let periods = vec![1.0; d];
        let fd = Fd::new(periods.clone());
        let origin = vec![0.0; d];
        let raw = raw_density(&base.eval(&origin), &base.exterior_derivative(&origin, &fd).unwrap(), n);
        ContactModel {
            name: name.to_string(),
            n,
            periods,
            axis_names: axes.iter().map(|s| s.to_string()).collect(),
            base,
            orientation_sign: raw.signum(),
            fd,
            tol: Tolerances::default(),
        }
    }

    pub fn with_fd_steps(mut self, step: f64, bracket_step: f64) -> Self {
        self.fd = self.fd.with_steps(step, bracket_step);
        self
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        2 * self.n + 1
    }

    pub fn periods(&self) -> &[f64] {
        &self.periods
    }

    pub fn axis_names(&self) -> &[String] {
        &self.axis_names
    }

    pub fn orientation_sign(&self) -> f64 {
        self.orientation_sign
    }

    pub fn base_form(&self) -> &OneForm {
        &self.base
    }

    /// `dλ₀` at `x` as an antisymmetric matrix.
    pub fn base_dform(&self, x: &[f64]) -> DMatrix<f64> {
        self.base.exterior_derivative(x, &self.fd).expect("catalog forms carry analytic Jacobians")
    }

    /// Maps a point into `[0, period)` on every axis.
    pub fn canonicalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.periods).map(|(v, p)| wrap(*v, *p)).collect()
    }

    /// Flat periodic distance.
    pub fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter()
            .zip(y)
            .zip(&self.periods)
            .map(|((a, b), p)| {
                let d = wrap(a - b, *p);
                let d = d.min(p - d);
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn grid(&self, resolution: usize) -> Result<Grid> {
        Grid::uniform(resolution, &self.periods)
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "point {x:?} has {} coordinates, model {} needs {}",
                x.len(),
                self.name,
                self.dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(format!("point {x:?}")));
        }
        Ok(())
    }
}

pub(crate) fn wrap(v: f64, p: f64) -> f64 {
    let r = v.rem_euclid(p);
    if r >= p {
        0.0
    } else {
        r
    }
}

fn torus3_form() -> OneForm {
    OneForm::new("cos(2πz)dx + sin(2πz)dy", |x| vec![(TAU * x[2]).cos(), (TAU * x[2]).sin(), 0.0]).with_jac(|x| {
        let mut j = DMatrix::zeros(3, 3);
        j[(0, 2)] = -TAU * (TAU * x[2]).sin();
        j[(1, 2)] = TAU * (TAU * x[2]).cos();
        j
    })
}

fn torus5_form() -> OneForm {
    OneForm::new("cos(2πz)dx + sin(2πz)dy + P ds − Q dt", |x| {
        let (cx, sx) = ((TAU * x[0]).cos(), (TAU * x[0]).sin());
        let (cy, sy) = ((TAU * x[1]).cos(), (TAU * x[1]).sin());
        let (cz, sz) = ((TAU * x[2]).cos(), (TAU * x[2]).sin());
        vec![cz, sz, 0.0, cy + 3.0 * cx * cz, -(sx + 3.0 * sy * sz)]
    })
    .with_jac(|x| {
        let (cx, sx) = ((TAU * x[0]).cos(), (TAU * x[0]).sin());
        let (cy, sy) = ((TAU * x[1]).cos(), (TAU * x[1]).sin());
        let (cz, sz) = ((TAU * x[2]).cos(), (TAU * x[2]).sin());
        let mut j = DMatrix::zeros(5, 5);
        j[(0, 2)] = -TAU * sz;
        j[(1, 2)] = TAU * cz;
        j[(3, 0)] = -3.0 * TAU * sx * cz;
        j[(3, 1)] = -TAU * sy;
        j[(3, 2)] = -3.0 * TAU * cx * sz;
        j[(4, 0)] = -TAU * cx;
        j[(4, 1)] = -3.0 * TAU * cy * sz;
        j[(4, 2)] = -3.0 * TAU * sy * cz;
        j
    })
}

/// Coordinate coefficient of `λ ∧ (dλ)ⁿ` before orientation correction:
/// `n!` times the Pfaffian of the bordered matrix `[[0, aᵀ], [−a, W]]`.
pub fn raw_density(a: &[f64], w: &DMatrix<f64>, n: usize) -> f64 {
    let d = a.len();
    let b = DMatrix::from_fn(d + 1, d + 1, |i, j| match (i, j) {
        (0, 0) => 0.0,
        (0, j) => a[j - 1],
        (i, 0) => -a[i - 1],
        (i, j) => w[(i - 1, j - 1)],
    });
    factorial(n) * pfaffian(&b)
}

#[derive(Clone, Debug)]
pub enum Representation {
    /// `λ = f·λ₀` with `f > 0` (small phase space).
    Scale(ScalarField),
    /// Arbitrary coefficients (big phase space).
    General(OneForm),
}

/// A contact form on a catalog model.
#[derive(Clone, Debug)]
pub struct ContactForm {
    model: Arc<ContactModel>,
    repr: Representation,
    // Constant multiples of λ₀: no finite differences enter dλ.
    exact: bool,
}

impl ContactForm {
    pub fn base(model: &Arc<ContactModel>) -> Self {
        let f = ScalarField::constant(1.0, model.dim());
        ContactForm { model: model.clone(), repr: Representation::Scale(f), exact: true }
    }

    /// `f·λ₀`. Positivity is checked by [`ContactForm::validate`].
    pub fn scaled(model: &Arc<ContactModel>, f: ScalarField) -> Self {
        ContactForm { model: model.clone(), repr: Representation::Scale(f), exact: false }
    }

    pub fn general(model: &Arc<ContactModel>, coefficients: OneForm) -> Self {
        ContactForm { model: model.clone(), repr: Representation::General(coefficients), exact: false }
    }

    pub fn model(&self) -> &Arc<ContactModel> {
        &self.model
    }

    pub fn representation(&self) -> &Representation {
        &self.repr
    }

    pub fn is_scale(&self) -> bool {
        matches!(self.repr, Representation::Scale(_))
    }

    pub fn n(&self) -> usize {
        self.model.n
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn fd(&self) -> &Fd {
        &self.model.fd
    }

    pub fn lin_tol(&self) -> f64 {
        if self.exact {
            self.model.tol.lin
        } else {
            self.model.tol.lin_scaled
        }
    }

    /// `c·λ` for a constant `c > 0`.
    pub fn times(&self, c: f64) -> Self {
        let repr = match &self.repr {
            Representation::Scale(f) => {
                let (g, label) = (f.clone(), format!("{c}*({})", f.label()));
                let gg = f.clone();
                let dim = self.dim();
                let fd = self.model.fd.clone();
                let mut s = ScalarField::new(label, move |x| c * g.eval(x));
                if f.has_grad() {
                    s = s.with_grad(move |x| {
                        gg.grad(x, &fd).unwrap_or_else(|_| vec![f64::NAN; dim]).iter().map(|v| c * v).collect()
                    });
                }
                Representation::Scale(s)
            }
            Representation::General(a) => {
                let (a1, a2, fd) = (a.clone(), a.clone(), self.model.fd.clone());
                Representation::General(
                    OneForm::new(format!("{c}*({})", a.label()), move |x| a1.eval(x).iter().map(|v| c * v).collect())
                        .with_jac(move |x| a2.jac(x, &fd).map(|j| j * c).unwrap_or_else(|_| nan_matrix(x.len()))),
                )
            }
        };
        ContactForm { model: self.model.clone(), repr, exact: self.exact }
    }

    /// The coefficient covector of `λ` at `x` (no canonicalization).
    pub fn coefficients(&self, x: &[f64]) -> Vec<f64> {
        match &self.repr {
            Representation::Scale(f) => {
                let s = f.eval(x);
                self.model.base.eval(x).into_iter().map(|v| s * v).collect()
            }
            Representation::General(a) => a.eval(x),
        }
    }

    /// Coefficients and `dλ` at `x`.
    pub fn jet(&self, x: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let fd = &self.model.fd;
        match &self.repr {
            Representation::Scale(f) => {
                let a0 = self.model.base.eval(x);
                let w0 = self.model.base_dform(x);
                let s = f.eval(x);
                let df = f.grad(x, fd)?;
                let d = a0.len();
                let w = DMatrix::from_fn(d, d, |i, j| s * w0[(i, j)] + df[i] * a0[j] - df[j] * a0[i]);
                Ok((a0.into_iter().map(|v| s * v).collect(), w))
            }
            Representation::General(a) => Ok((a.eval(x), a.exterior_derivative(x, fd)?)),
        }
    }

    /// Jacobian of the coefficient covector, `J_ij = ∂_j a_i`.
    pub fn coefficient_jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let fd = &self.model.fd;
        match &self.repr {
            Representation::Scale(f) => {
                let a0 = self.model.base.eval(x);
                let j0 = self.model.base.jac(x, fd)?;
                let s = f.eval(x);
                let df = f.grad(x, fd)?;
                let d = a0.len();
                Ok(DMatrix::from_fn(d, d, |i, j| s * j0[(i, j)] + a0[i] * df[j]))
            }
            Representation::General(a) => a.jac(x, fd),
        }
    }

    /// The form as a coefficient one-form (big phase space view).
    pub fn as_one_form(&self) -> OneForm {
        match &self.repr {
            Representation::General(a) => a.clone(),
            Representation::Scale(_) => {
                let (l1, l2) = (self.clone(), self.clone());
                OneForm::new(format!("λ[{}]", self.label()), move |x| l1.coefficients(x))
                    .with_jac(move |x| l2.coefficient_jacobian(x).unwrap_or_else(|_| nan_matrix(x.len())))
            }
        }
    }

    pub fn label(&self) -> String {
        match &self.repr {
            Representation::Scale(f) => format!("({})·λ₀", f.label()),
            Representation::General(a) => a.label().to_string(),
        }
    }

    /// `λ + t·α` as a general form.
    pub fn plus(&self, alpha: &OneForm, t: f64) -> Self {
        let lam = self.as_one_form();
        let (l1, l2, a1, a2, fd) = (lam.clone(), lam, alpha.clone(), alpha.clone(), self.model.fd.clone());
        let form = OneForm::new(format!("{} + {t}·({})", self.label(), alpha.label()), move |x| {
            l1.eval(x).iter().zip(a1.eval(x)).map(|(u, v)| u + t * v).collect()
        })
        .with_jac(move |x| match (l2.jac(x, &fd), a2.jac(x, &fd)) {
            (Ok(j), Ok(k)) => j + k * t,
            _ => nan_matrix(x.len()),
        });
        ContactForm::general(&self.model, form)
    }

    /// `u·λ` for a positive function `u`, keeping the representation kind.
    pub fn rescaled(&self, u: &ScalarField) -> Self {
        let fd = self.model.fd.clone();
        match &self.repr {
            Representation::Scale(c) => {
                let (c1, c2, u1, u2) = (c.clone(), c.clone(), u.clone(), u.clone());
                let prod =
                    ScalarField::new(format!("{}·({})", u.label(), c.label()), move |x| u1.eval(x) * c1.eval(x))
                        .with_grad(move |x| {
                            let (uv, cv) = (u2.eval(x), c2.eval(x));
                            let gu = u2.grad(x, &fd).unwrap_or_else(|_| vec![f64::NAN; x.len()]);
                            let gc = c2.grad(x, &fd).unwrap_or_else(|_| vec![f64::NAN; x.len()]);
                            gu.iter().zip(&gc).map(|(a, b)| a * cv + uv * b).collect()
                        });
                ContactForm::scaled(&self.model, prod)
            }
            Representation::General(a) => {
                let (a1, a2, u1, u2) = (a.clone(), a.clone(), u.clone(), u.clone());
                let form = OneForm::new(format!("{}·({})", u.label(), a.label()), move |x| {
                    let s = u1.eval(x);
                    a1.eval(x).into_iter().map(|v| s * v).collect()
                })
                .with_jac(move |x| {
                    let (s, av) = (u2.eval(x), a2.eval(x));
                    let du = u2.grad(x, &fd).unwrap_or_else(|_| vec![f64::NAN; x.len()]);
                    match a2.jac(x, &fd) {
                        Ok(j) => DMatrix::from_fn(x.len(), x.len(), |i, k| s * j[(i, k)] + av[i] * du[k]),
                        Err(_) => nan_matrix(x.len()),
                    }
                });
                ContactForm::general(&self.model, form)
            }
        }
    }

    /// Pullback by the translation `x ↦ x + shift`.
    pub fn translated(&self, shift: &[f64]) -> Self {
        let lam = self.as_one_form();
        ContactForm::general(&self.model, shifted(&lam, shift.to_vec(), &self.model.fd))
    }

    /// Signed coordinate density of `μ_λ = λ ∧ (dλ)ⁿ`, orientation-corrected.
    pub fn density(&self, x: &[f64]) -> Result<f64> {
        let (a, w) = self.jet(x)?;
        Ok(self.model.orientation_sign * raw_density(&a, &w, self.model.n))
    }

    /// The density as a scalar field (derivatives by finite differences).
    pub fn density_field(&self) -> ScalarField {
        let lam = self.clone();
        ScalarField::new(format!("μ[{}]", self.label()), move |x| lam.density(x).unwrap_or(f64::NAN))
    }

    /// Checks the representation invariants on every node of `grid`.
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let tol = self.model.tol.degeneracy;
        let bad = grid.tabulate(|x| {
            if let Representation::Scale(f) = &self.repr {
                let v = f.eval(x);
                if !(v > 0.0) {
                    return Ok(Some(Error::InvalidInput(format!("scale field {v} is not positive at {x:?}"))));
                }
            }
            let rho = self.density(x)?;
            if !(rho.abs() > tol) {
                return Ok(Some(Error::Degenerate { at: x.to_vec(), density: rho.abs() }));
            }
            Ok(None)
        })?;
        match bad.into_iter().flatten().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// Assembles the pointwise frame used by all solves at `x`.
    pub fn frame(&self, x: &[f64]) -> Result<Frame> {
        self.model.check_point(x)?;
        let x = self.model.canonicalize(x);
        let (a, w) = self.jet(&x)?;
        Frame::new(x, a, w, self.lin_tol())
    }
}

fn nan_matrix(d: usize) -> DMatrix<f64> {
    DMatrix::from_element(d, d, f64::NAN)
}

fn shifted(form: &OneForm, shift: Vec<f64>, fd: &Fd) -> OneForm {
    let (f1, f2, s1, s2, fd) = (form.clone(), form.clone(), shift.clone(), shift, fd.clone());
    let add = |x: &[f64], s: &[f64]| x.iter().zip(s).map(|(a, b)| a + b).collect::<Vec<_>>();
    OneForm::new(format!("T*({})", form.label()), move |x| f1.eval(&add(x, &s1)))
        .with_jac(move |x| f2.jac(&add(x, &s2), &fd).unwrap_or_else(|_| nan_matrix(x.len())))
}

/// Coefficients, `dλ` and the factored stacked system `[W; aᵀ]` at a point.
#[derive(Debug, Clone)]
pub struct Frame {
    pub x: Vec<f64>,
    pub a: Vec<f64>,
    pub w: DMatrix<f64>,
    pub reeb: Vec<f64>,
    pub reeb_residual: f64,
    qr: HouseholderQr,
    lin_tol: f64,
}

impl Frame {
    fn new(x: Vec<f64>, a: Vec<f64>, w: DMatrix<f64>, lin_tol: f64) -> Result<Self> {
        let d = a.len();
        if a.iter().chain(w.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(format!("contact form coefficients at {x:?}")));
        }
        let mut m = Vec::with_capacity((d + 1) * d);
        for i in 0..d {
            for j in 0..d {
                m.push(w[(i, j)]);
            }
        }
        m.extend_from_slice(&a);
        let qr = HouseholderQr::new(m, d + 1, d);
        let rank = qr.rank(1e-10);
        if rank < d {
            return Err(Error::SingularForm { at: x, rank, dim: d });
        }
        let mut frame = Frame { x, a, w, reeb: Vec::new(), reeb_residual: 0.0, qr, lin_tol };
        let mut rhs = vec![0.0; d + 1];
        rhs[d] = 1.0;
        let (r, res) = frame.solve_checked(&rhs)?;
        frame.reeb = r;
        frame.reeb_residual = res;
        Ok(frame)
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// Max-norm residual of `[W; aᵀ] v = rhs`.
    pub fn residual(&self, v: &[f64], rhs: &[f64]) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            let r: f64 = (0..d).map(|j| self.w[(i, j)] * v[j]).sum::<f64>() - rhs[i];
            worst = worst.max(r.abs());
        }
        worst.max((dot(&self.a, v) - rhs[d]).abs())
    }

    /// Solves the stacked system and enforces the residual tolerance.
    pub fn solve_checked(&self, rhs: &[f64]) -> Result<(Vec<f64>, f64)> {
        let v = self.qr.solve(rhs);
        let res = self.residual(&v, rhs);
        let scale = 1.0f64.max(max_abs(rhs));
        if !(res <= self.lin_tol * scale) {
            return Err(Error::Residual { at: self.x.clone(), residual: res, tol: self.lin_tol * scale });
        }
        Ok((v, res))
    }

    /// `λ(X)`.
    pub fn eval_form(&self, v: &[f64]) -> f64 {
        dot(&self.a, v)
    }

    /// Covector `X⌟dλ`.
    pub fn interior(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d).map(|j| -(0..d).map(|i| self.w[(j, i)] * v[i]).sum::<f64>()).collect()
    }

    /// Contact Hamiltonian vector of a function with value `h` and
    /// differential `dh` at this point, together with the solve residual.
    pub fn hamiltonian(&self, h: f64, dh: &[f64]) -> Result<(Vec<f64>, f64)> {
        let d = self.dim();
        let rh = dot(dh, &self.reeb);
        let mut rhs: Vec<f64> = (0..d).map(|i| -(dh[i] - rh * self.a[i])).collect();
        rhs.push(-h);
        self.solve_checked(&rhs)
    }
}

/// Splitting of a tangent vector along `ξ ⊕ ⟨R_λ⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentDecomposition {
    pub xi_part: Vec<f64>,
    pub reeb_coeff: f64,
}

/// Splitting `α = h·λ + Y⌟dλ` with `Y` tangent to `ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct OneFormDecomposition {
    pub h: f64,
    pub y_pi: Vec<f64>,
}

pub fn reeb_field(lam: &ContactForm, x: &[f64]) -> Result<Vec<f64>> {
    Ok(lam.frame(x)?.reeb)
}

/// Reeb vector and the max-norm residual of its defining equations.
pub fn reeb_field_with_residual(lam: &ContactForm, x: &[f64]) -> Result<(Vec<f64>, f64)> {
    let f = lam.frame(x)?;
    Ok((f.reeb, f.reeb_residual))
}

pub fn decompose_vector(lam: &ContactForm, x: &[f64], v: &[f64]) -> Result<TangentDecomposition> {
    let f = lam.frame(x)?;
    check_len(v, f.dim())?;
    let c = f.eval_form(v);
    let xi_part: Vec<f64> = v.iter().zip(&f.reeb).map(|(vi, ri)| vi - c * ri).collect();
    let defect = f.eval_form(&xi_part).abs();
    if defect > f.lin_tol {
        return Err(Error::Residual { at: f.x, residual: defect, tol: f.lin_tol });
    }
    Ok(TangentDecomposition { xi_part, reeb_coeff: c })
}

pub fn decompose_oneform(lam: &ContactForm, x: &[f64], alpha: &[f64]) -> Result<OneFormDecomposition> {
    let f = lam.frame(x)?;
    check_len(alpha, f.dim())?;
    Ok(decompose_in_frame(&f, alpha)?.0)
}

pub(crate) fn decompose_in_frame(f: &Frame, alpha: &[f64]) -> Result<(OneFormDecomposition, f64)> {
    let d = f.dim();
    let h = dot(alpha, &f.reeb);
    let mut rhs: Vec<f64> = (0..d).map(|i| -(alpha[i] - h * f.a[i])).collect();
    rhs.push(0.0);
    let (y, res) = f.solve_checked(&rhs)?;
    Ok((OneFormDecomposition { h, y_pi: y }, res))
}

/// `X_H` at `x`: `λ(X) = −H`, `X⌟dλ = dH − R[H]·λ`.
pub fn contact_hamiltonian_field(lam: &ContactForm, hf: &ScalarField, x: &[f64]) -> Result<Vec<f64>> {
    Ok(contact_hamiltonian_field_with_residual(lam, hf, x)?.0)
}

pub fn contact_hamiltonian_field_with_residual(
    lam: &ContactForm,
    hf: &ScalarField,
    x: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let f = lam.frame(x)?;
    let dh = hf.grad(&f.x, lam.fd())?;
    f.hamiltonian(hf.eval(&f.x), &dh)
}

/// `R_λ[H](x)`.
pub fn reeb_derivative(lam: &ContactForm, hf: &ScalarField, x: &[f64]) -> Result<f64> {
    let f = lam.frame(x)?;
    let dh = hf.grad(&f.x, lam.fd())?;
    Ok(dot(&dh, &f.reeb))
}

/// `X_H` as a vector field (failed solves evaluate to NaN).
pub fn hamiltonian_vector_field(lam: &ContactForm, hf: &ScalarField) -> VectorField {
    let (l, h) = (lam.clone(), hf.clone());
    VectorField::new(format!("X[{}]", hf.label()), move |x| {
        contact_hamiltonian_field(&l, &h, x).unwrap_or_else(|_| vec![f64::NAN; x.len()])
    })
}

pub fn reeb_vector_field(lam: &ContactForm) -> VectorField {
    let l = lam.clone();
    VectorField::new(format!("R[{}]", lam.label()), move |x| {
        reeb_field(&l, x).unwrap_or_else(|_| vec![f64::NAN; x.len()])
    })
}

fn check_len(v: &[f64], d: usize) -> Result<()> {
    if v.len() != d {
        return Err(Error::InvalidInput(format!("expected {d} components, got {}", v.len())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn torus() -> Arc<ContactModel> {
        Arc::new(ContactModel::torus3())
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(u, v)| (u - v).abs() < tol)
    }

    #[test]
    fn torus3_orientation_is_flipped() {
        let m = torus();
        assert_eq!(m.orientation_sign(), -1.0);
        let lam = ContactForm::base(&m);
        let raw = raw_density(&lam.coefficients(&[0.0; 3]), &m.base_dform(&[0.0; 3]), 1);
        assert!((raw + TAU).abs() < 1e-14);
        assert!((lam.density(&[0.1, 0.2, 0.37]).unwrap() - TAU).abs() < 1e-12);
    }

    #[test]
    fn reeb_examples() {
        let lam = ContactForm::base(&torus());
        let r = reeb_field(&lam, &[0.0, 0.0, 0.0]).unwrap();
        assert!(close(&r, &[1.0, 0.0, 0.0], 1e-14));
        let r = reeb_field(&lam, &[0.3, 0.7, 0.25]).unwrap();
        assert!(close(&r, &[0.0, 1.0, 0.0], 1e-14));
    }

    #[test]
    fn reeb_residual_on_catalog_grid() {
        for model in [ContactModel::torus3(), ContactModel::torus_2n1(2).unwrap()] {
            let m = Arc::new(model);
            let lam = ContactForm::base(&m);
            let g = m.grid(if m.n() == 1 { 16 } else { 6 }).unwrap();
            for x in g.nodes() {
                let f = lam.frame(&x).unwrap();
                assert!((f.eval_form(&f.reeb) - 1.0).abs() < 1e-10);
                assert!(max_abs(&f.interior(&f.reeb)) < 1e-10);
            }
        }
    }

    #[test]
    fn torus5_form_is_contact() {
        let m = Arc::new(ContactModel::torus_2n1(2).unwrap());
        let lam = ContactForm::base(&m);
        lam.validate(&m.grid(8).unwrap()).unwrap();
        assert_eq!(m.orientation_sign(), -1.0);
        // Independent of the trailing (s, t) coordinates.
        let a = lam.density(&[0.1, 0.2, 0.3, 0.0, 0.0]).unwrap();
        let b = lam.density(&[0.1, 0.2, 0.3, 0.6, 0.9]).unwrap();
        assert!(a > 0.0 && (a - b).abs() < 1e-12 * a);
    }

    #[test]
    fn unknown_models_are_rejected() {
        assert!(matches!(ContactModel::catalog("sphere", 1), Err(Error::UnknownModel(_))));
        assert!(matches!(ContactModel::catalog("torus_2n1", 3), Err(Error::UnknownModel(_))));
        assert_eq!(ContactModel::catalog("torus_2n1", 1).unwrap().dim(), 3);
    }

    #[test]
    fn decompose_vector_examples() {
        let lam = ContactForm::base(&torus());
        let x = [0.0, 0.0, 0.0];
        let d = decompose_vector(&lam, &x, &[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(d.reeb_coeff, 0.0);
        assert!(close(&d.xi_part, &[0.0, 0.0, 1.0], 1e-15));
        let r = reeb_field(&lam, &[0.2, 0.1, 0.4]).unwrap();
        let d = decompose_vector(&lam, &[0.2, 0.1, 0.4], &r).unwrap();
        assert!((d.reeb_coeff - 1.0).abs() < 1e-14 && max_abs(&d.xi_part) < 1e-14);
        let d = decompose_vector(&lam, &x, &[0.0; 3]).unwrap();
        assert_eq!(d, TangentDecomposition { xi_part: vec![0.0; 3], reeb_coeff: 0.0 });
    }

    #[test]
    fn decompose_oneform_examples() {
        let lam = ContactForm::base(&torus());
        let x = [0.0, 0.0, 0.0];
        let d = decompose_oneform(&lam, &x, &[0.0, 1.0, 0.0]).unwrap();
        assert!(d.h.abs() < 1e-15);
        assert!(close(&d.y_pi, &[0.0, 0.0, 1.0 / TAU], 1e-15));
        let p = [0.3, 0.6, 0.11];
        let d = decompose_oneform(&lam, &p, &lam.coefficients(&p)).unwrap();
        assert!((d.h - 1.0).abs() < 1e-14 && max_abs(&d.y_pi) < 1e-14);
        let d = decompose_oneform(&lam, &p, &[0.0; 3]).unwrap();
        assert_eq!(d.h, 0.0);
        assert!(max_abs(&d.y_pi) == 0.0);
    }

    #[test]
    fn decompositions_reassemble() {
        let lam = ContactForm::base(&torus());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen::<f64>()).collect();
            let v: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = lam.frame(&x).unwrap();
            let d = decompose_vector(&lam, &x, &v).unwrap();
            let back: Vec<f64> = (0..3).map(|i| d.xi_part[i] + d.reeb_coeff * f.reeb[i]).collect();
            assert!(close(&back, &v, 1e-10));
            let o = decompose_oneform(&lam, &x, &v).unwrap();
            let inner = f.interior(&o.y_pi);
            let back: Vec<f64> = (0..3).map(|i| o.h * f.a[i] + inner[i]).collect();
            assert!(close(&back, &v, 1e-9));
            assert!(f.eval_form(&o.y_pi).abs() < 1e-10);
        }
    }

    #[test]
    fn hamiltonian_of_constants() {
        let lam = ContactForm::base(&torus());
        for c in [0.0, 1.0, -2.5] {
            let h = ScalarField::constant(c, 3);
            for x in [[0.0, 0.0, 0.0], [0.4, 0.1, 0.77]] {
                let v = contact_hamiltonian_field(&lam, &h, &x).unwrap();
                let r = reeb_field(&lam, &x).unwrap();
                let expect: Vec<f64> = r.iter().map(|ri| -c * ri).collect();
                assert!(close(&v, &expect, 1e-10));
            }
        }
    }

    #[test]
    fn hamiltonian_residual_on_samples() {
        let lam = ContactForm::base(&torus());
        let h = samples::cos2pi(0, 1.0);
        for k in 0..10 {
            let x = [0.1 * k as f64, 0.05 * k as f64, 0.093 * k as f64];
            let (v, res) = contact_hamiltonian_field_with_residual(&lam, &h, &x).unwrap();
            assert!(res < 1e-10);
            let f = lam.frame(&x).unwrap();
            assert!((f.eval_form(&v) + h.eval(&x)).abs() < 1e-12);
            // X = X^π − H·R
            let d = decompose_vector(&lam, &x, &v).unwrap();
            assert!((d.reeb_coeff + h.eval(&x)).abs() < 1e-12);
        }
    }

    #[test]
    fn scaled_forms_solve_within_tolerance() {
        let m = torus();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let f = samples::positive_field(&mut rng, 3, 0.4).without_grad();
            let lam = ContactForm::scaled(&m, f.clone());
            for _ in 0..20 {
                let x: Vec<f64> = (0..3).map(|_| rng.gen::<f64>()).collect();
                let (r, res) = reeb_field_with_residual(&lam, &x).unwrap();
                assert!(res < 1e-7);
                assert!((lam.frame(&x).unwrap().eval_form(&r) - 1.0).abs() < 1e-7);
                let rho = lam.density(&x).unwrap();
                let rho0 = ContactForm::base(&m).density(&x).unwrap();
                assert!((rho / rho0 - f.eval(&x).powi(2)).abs() < 1e-8 * rho / rho0);
            }
        }
    }

    #[test]
    fn coordinates_are_canonicalized() {
        let m = torus();
        assert_eq!(m.canonicalize(&[-0.25, 1.5, 3.0]), vec![0.75, 0.5, 0.0]);
        assert_eq!(m.canonicalize(&[-1e-18, 0.0, 0.0])[0], 0.0);
        let lam = ContactForm::base(&m);
        let a = reeb_field(&lam, &[1.3, -0.7, 2.25]).unwrap();
        let b = reeb_field(&lam, &[0.3, 0.3, 0.25]).unwrap();
        assert!(close(&a, &b, 1e-15));
        assert!((m.distance(&[0.05, 0.0, 0.0], &[0.95, 0.0, 0.0]) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn degenerate_general_form_is_singular() {
        let m = torus();
        let flat = OneForm::new("dx", |_| vec![1.0, 0.0, 0.0]).with_jac(|_| DMatrix::zeros(3, 3));
        let lam = ContactForm::general(&m, flat);
        assert!(matches!(lam.frame(&[0.1, 0.1, 0.1]), Err(Error::SingularForm { .. })));
        assert!(matches!(lam.validate(&m.grid(4).unwrap()), Err(Error::Degenerate { .. })));
    }

    #[test]
    fn wrong_dimension_is_invalid_input() {
        let lam = ContactForm::base(&torus());
        assert!(matches!(reeb_field(&lam, &[0.0, 0.0]), Err(Error::InvalidInput(_))));
    }
}
