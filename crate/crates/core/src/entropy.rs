//! Contact volumes, masses, relative entropy between contact forms, the first
//! variation of the volume and the two Hessian evaluators.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{
    bracket_field, divergence, integrate_values, lie_bracket, Grid, ObservableSystem, OneForm, ScalarField, VectorField,
};
use crate::flows::Diffeomorphism;
use crate::geometry::{decompose_oneform, raw_density, reeb_vector_field, ContactForm, Representation};
use crate::linalg::dot;

/// Tabulated `μ_λ` densities, rejecting degenerate nodes.
pub fn density_values(lam: &ContactForm, grid: &Grid) -> Result<Vec<f64>> {
    let tol = lam.model().tol.degeneracy;
    grid.tabulate(|x| {
        let rho = lam.density(x)?;
        if !rho.is_finite() {
            return Err(Error::NonFiniteValue(format!("volume density at {x:?}")));
        }
        if !(rho > tol) {
            return Err(Error::Degenerate { at: x.to_vec(), density: rho });
        }
        Ok(rho)
    })
}

/// `V(λ) = ∫ μ_λ`.
pub fn mass(lam: &ContactForm, grid: &Grid) -> Result<f64> {
    integrate_values(grid, &density_values(lam, grid)?)
}

/// `c·λ` with `V(cλ) = 1`; returns the form and `c`.
pub fn normalize(lam: &ContactForm, grid: &Grid) -> Result<(ContactForm, f64)> {
    let v = mass(lam, grid)?;
    if !(v > 0.0) {
        return Err(Error::NonPositiveMass(v));
    }
    let c = v.powf(-1.0 / (lam.n() + 1) as f64);
    if c == 1.0 {
        return Ok((lam.clone(), 1.0));
    }
    Ok((lam.times(c), c))
}

/// `∫ log(ρ₁/ρ₀) ρ₁` on tabulated densities.
pub fn relative_entropy_of_densities(rho1: &[f64], rho0: &[f64], grid: &Grid, floor: f64) -> Result<f64> {
    let mut vals = Vec::with_capacity(rho1.len());
    for (k, (r1, r0)) in rho1.iter().zip(rho0).enumerate() {
        if !(*r0 >= floor) {
            return Err(Error::NonFiniteValue(format!(
                "reference density {r0:e} below floor {floor:e} at {:?}",
                grid.node(k)
            )));
        }
        vals.push(if *r1 == *r0 { 0.0 } else { (r1 / r0).ln() * r1 });
    }
    integrate_values(grid, &vals)
}

/// `𝒮(λ₁|λ₀) = ∫ log(dμ_{λ₁}/dμ_{λ₀}) dμ_{λ₁}`.
pub fn relative_entropy(lam1: &ContactForm, lam0: &ContactForm, grid: &Grid) -> Result<f64> {
    same_model(lam1, lam0)?;
    let rho1 = density_values(lam1, grid)?;
    let rho0 = density_values(lam0, grid)?;
    relative_entropy_of_densities(&rho1, &rho0, grid, lam0.model().tol.density_floor)
}

fn same_model(a: &ContactForm, b: &ContactForm) -> Result<()> {
    if a.model().name() != b.model().name() || a.dim() != b.dim() {
        return Err(Error::InvalidInput("contact forms live on different models".into()));
    }
    Ok(())
}

/// Density of `ψ*λ` at `x`, from the pulled-back covector `Dψᵀ a(ψx)` and
/// `d(ψ*λ) = Dψᵀ dλ(ψx) Dψ`.
pub fn pullback_density(lam: &ContactForm, psi: &dyn Diffeomorphism, x: &[f64]) -> Result<f64> {
    let model = lam.model();
    let y = model.canonicalize(&psi.lift(x)?);
    let jac = psi.jacobian(x)?;
    let (a, w) = lam.jet(&y)?;
    let d = a.len();
    let b: Vec<f64> = (0..d).map(|j| (0..d).map(|i| jac[(i, j)] * a[i]).sum()).collect();
    let wp = jac.transpose() * w * &jac;
    Ok(model.orientation_sign() * raw_density(&b, &wp, lam.n()))
}

/// `𝓗_λ(ψ) = 𝒮(ψ*λ | λ)`.
pub fn entropy_of_map(lam: &ContactForm, psi: &dyn Diffeomorphism, grid: &Grid) -> Result<f64> {
    let rho1 = grid.tabulate(|x| {
        let r = pullback_density(lam, psi, x)?;
        if !r.is_finite() || r <= 0.0 {
            return Err(Error::NonFiniteValue(format!("pulled-back density {r} at {x:?}")));
        }
        Ok(r)
    })?;
    let rho0 = density_values(lam, grid)?;
    relative_entropy_of_densities(&rho1, &rho0, grid, lam.model().tol.density_floor)
}

/// A variation `α = h·λ + Y⌟dλ` with `Y` tangent to `ξ`; `y_pi = None`
/// stands for `Y = 0`.
#[derive(Clone, Debug)]
pub struct Variation {
    pub h: ScalarField,
    pub y_pi: Option<VectorField>,
}

impl Variation {
    pub fn vertical(h: ScalarField) -> Self {
        Variation { h, y_pi: None }
    }

    pub fn new(h: ScalarField, y_pi: VectorField) -> Self {
        Variation { h, y_pi: Some(y_pi) }
    }

    /// Projects an arbitrary vector field onto `ξ`: `V − λ(V)R_λ`.
    pub fn project_to_xi(lam: &ContactForm, v: &VectorField) -> VectorField {
        let (l, v) = (lam.clone(), v.clone());
        VectorField::new(format!("π({})", v.label()), move |x| {
            let f = match l.frame(x) {
                Ok(f) => f,
                Err(_) => return vec![f64::NAN; x.len()],
            };
            let vx = v.eval(x);
            let c = f.eval_form(&vx);
            vx.iter().zip(&f.reeb).map(|(a, r)| a - c * r).collect()
        })
    }

    /// Splits a one-form pointwise into `(h, Y^π)`.
    pub fn from_one_form(lam: &ContactForm, alpha: &OneForm) -> Self {
        let (l1, l2, a1, a2) = (lam.clone(), lam.clone(), alpha.clone(), alpha.clone());
        let h = ScalarField::new(format!("h[{}]", alpha.label()), move |x| {
            decompose_oneform(&l1, x, &a1.eval(x)).map(|d| d.h).unwrap_or(f64::NAN)
        });
        let y = VectorField::new(format!("Y[{}]", alpha.label()), move |x| {
            decompose_oneform(&l2, x, &a2.eval(x)).map(|d| d.y_pi).unwrap_or_else(|_| vec![f64::NAN; x.len()])
        });
        Variation { h, y_pi: Some(y) }
    }

    /// The one-form `h·λ + Y⌟dλ = h a − W Y`.
    pub fn one_form(&self, lam: &ContactForm) -> OneForm {
        let (l, h, y) = (lam.clone(), self.h.clone(), self.y_pi.clone());
        let label = format!("{}·λ + {}⌟dλ", self.h.label(), y.as_ref().map_or("0", |v| v.label()));
        OneForm::new(label, move |x| {
            let d = x.len();
            let (a, w) = match l.jet(x) {
                Ok(j) => j,
                Err(_) => return vec![f64::NAN; d],
            };
            let hv = h.eval(x);
            let mut out: Vec<f64> = a.iter().map(|ai| hv * ai).collect();
            if let Some(y) = &y {
                let yv = y.eval(x);
                for i in 0..d {
                    out[i] -= (0..d).map(|j| w[(i, j)] * yv[j]).sum::<f64>();
                }
            }
            out
        })
    }
}

/// `(n+1)h_α(x) + (∇·Y^π_α)(x)`: the density of `δ_α μ_λ` against `μ_λ`.
pub fn first_variation_volume(lam: &ContactForm, var: &Variation, x: &[f64]) -> Result<f64> {
    let x = lam.model().canonicalize(x);
    let np1 = (lam.n() + 1) as f64;
    let div = match &var.y_pi {
        Some(y) => divergence(y, &lam.density_field(), &x, lam.fd())?,
        None => 0.0,
    };
    Ok(np1 * var.h.eval(&x) + div)
}

// ((n+1)(2n+1) + n(n+1)·log(ρ/ρ₀))·h₁h₂·ρ
fn small_integrand(n: usize, rho: f64, rho0: f64, h1: f64, h2: f64) -> f64 {
    let (n, np1) = (n as f64, (n + 1) as f64);
    let ell = (rho / rho0).ln();
    (np1 * (2.0 * n + 1.0) + n * np1 * ell) * (h1 * h2) * rho
}

/// Hessian of `𝒮_{λ₀}` at `λ = f·λ₀` along vertical variations `h₁λ, h₂λ`.
pub fn hessian_small(
    lam0: &ContactForm,
    lam: &ContactForm,
    h1: &ScalarField,
    h2: &ScalarField,
    grid: &Grid,
) -> Result<f64> {
    if !matches!(lam.representation(), Representation::Scale(_)) {
        return Err(Error::RepresentationMismatch("hessian_small needs a scale-field form f·λ₀".into()));
    }
    same_model(lam, lam0)?;
    let n = lam.n();
    let vals = grid.tabulate(|x| {
        let rho = lam.density(x)?;
        let rho0 = lam0.density(x)?;
        Ok(small_integrand(n, rho, rho0, h1.eval(x), h2.eval(x)))
    })?;
    integrate_values(grid, &vals)
}

/// Formula value of the big-phase-space Hessian with its diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HessianReport {
    pub value: f64,
    pub fd_reference: f64,
    pub abs_err: f64,
    pub rel_err: f64,
    pub symmetry_defect: f64,
}

/// The seven-line Hessian formula for general variations.
pub fn hessian_big_value(
    lam0: &ContactForm,
    lam: &ContactForm,
    a1: &Variation,
    a2: &Variation,
    grid: &Grid,
) -> Result<f64> {
    same_model(lam, lam0)?;
    let n = lam.n();
    let np1 = (n + 1) as f64;
    let fd = lam.fd().clone();
    let rho_f = lam.density_field();
    let rho0_f = lam0.density_field();
    let vertical = a1.y_pi.is_none() && a2.y_pi.is_none();
    let zero = VectorField::constant(vec![0.0; lam.dim()]);
    let y1 = a1.y_pi.clone().unwrap_or_else(|| zero.clone());
    let y2 = a2.y_pi.clone().unwrap_or_else(|| zero.clone());

    // g = 1 + log(ρ/ρ₀) and X_g^π = X_g + g·R.
    let (r1, r2) = (rho_f.clone(), rho0_f.clone());
    let g = ScalarField::new("g", move |x| 1.0 + (r1.eval(x) / r2.eval(x)).ln());
    let (l, gg) = (lam.clone(), g.clone());
    let xg_pi = VectorField::new("X_g^π", move |x| {
        let frame = match l.frame(x) {
            Ok(f) => f,
            Err(_) => return vec![f64::NAN; x.len()],
        };
        let gx = gg.eval(&frame.x);
        let dg = match gg.grad(&frame.x, l.fd()) {
            Ok(d) => d,
            Err(_) => return vec![f64::NAN; x.len()],
        };
        match frame.hamiltonian(gx, &dg) {
            Ok((v, _)) => v.iter().zip(&frame.reeb).map(|(vi, ri)| vi + gx * ri).collect(),
            Err(_) => vec![f64::NAN; x.len()],
        }
    });
    let reeb = reeb_vector_field(lam);
    let b1x = bracket_field(&y1, &xg_pi, &fd);
    let b2x = bracket_field(&y2, &xg_pi, &fd);
    let b2r = bracket_field(&y2, &reeb, &fd);

    let vals = grid.tabulate(|x| {
        let rho = lam.density(x)?;
        let rho0 = lam0.density(x)?;
        let (h1, h2) = (a1.h.eval(x), a2.h.eval(x));
        let small = small_integrand(n, rho, rho0, h1, h2);
        let d1 = match &a1.y_pi {
            Some(y) => divergence(y, &rho_f, x, &fd)?,
            None => 0.0,
        };
        let d2 = match &a2.y_pi {
            Some(y) => divergence(y, &rho_f, x, &fd)?,
            None => 0.0,
        };
        // Line 1 + line 2: k₁k₂ + n(n+1)(1 + log f)h₁h₂, with the purely
        // vertical part shared with the small-phase-space kernel.
        let lines12 = small + (np1 * (h1 * d2 + h2 * d1) + d1 * d2) * rho;
        if vertical {
            return Ok(lines12);
        }
        let (a, w) = lam.jet(x)?;
        let form2 = |u: &[f64], v: &[f64]| -> f64 {
            let d = u.len();
            (0..d).map(|i| (0..d).map(|j| u[i] * w[(i, j)] * v[j]).sum::<f64>()).sum()
        };
        let (y1v, y2v) = (y1.eval(x), y2.eval(x));
        let gx = g.eval(x);
        let dg = g.grad(x, &fd)?;
        let dh1 = a1.h.grad(x, &fd)?;
        let dh2 = a2.h.grad(x, &fd)?;
        let line3 = -np1 * gx * (dot(&y2v, &dh1) + dot(&y1v, &dh2));
        let line4 = -(n as f64) * (h1 * dot(&y2v, &dg) + h2 * dot(&y1v, &dg));
        let z1 = lie_bracket(&y1, &xg_pi, x, &fd)?;
        let z2 = lie_bracket(&y2, &xg_pi, x, &fd)?;
        let line5 = form2(&y2v, &z1) + 2.0 * form2(&y1v, &z2);
        let line6 = dot(&a, &lie_bracket(&y2, &b1x, x, &fd)?) + dot(&a, &lie_bracket(&y1, &b2x, x, &fd)?);
        let line7 = -np1 * gx * dot(&a, &lie_bracket(&y1, &b2r, x, &fd)?);
        let rest = (line3 + line4 + line5 + line6 + line7) * rho;
        if !rest.is_finite() {
            return Err(Error::NonFiniteValue(format!("Hessian integrand at {x:?}")));
        }
        Ok(lines12 + rest)
    })?;
    integrate_values(grid, &vals)
}

/// `∂²/∂s∂t 𝒮_{λ₀}(λ + sα₁ + tα₂)` at 0 by central second differences.
pub fn hessian_fd_reference(
    lam0: &ContactForm,
    lam: &ContactForm,
    a1: &Variation,
    a2: &Variation,
    grid: &Grid,
    step: f64,
) -> Result<f64> {
    let (al1, al2) = (a1.one_form(lam), a2.one_form(lam));
    let s = |u: f64, v: f64| -> Result<f64> { relative_entropy(&lam.plus(&al1, u).plus(&al2, v), lam0, grid) };
    let (pp, pm, mp, mm) = (s(step, step)?, s(step, -step)?, s(-step, step)?, s(-step, -step)?);
    Ok((pp - pm - mp + mm) / (4.0 * step * step))
}

/// Formula value, finite-difference reference and symmetry defect.
pub fn hessian_big(
    lam0: &ContactForm,
    lam: &ContactForm,
    a1: &Variation,
    a2: &Variation,
    grid: &Grid,
    fd_step: f64,
) -> Result<HessianReport> {
    let value = hessian_big_value(lam0, lam, a1, a2, grid)?;
    let swapped = hessian_big_value(lam0, lam, a2, a1, grid)?;
    let fd_reference = hessian_fd_reference(lam0, lam, a1, a2, grid, fd_step)?;
    let abs_err = (value - fd_reference).abs();
    let rel_err = if fd_reference != 0.0 { abs_err / fd_reference.abs() } else { abs_err };
    Ok(HessianReport { value, fd_reference, abs_err, rel_err, symmetry_defect: (value - swapped).abs() })
}

/// Gram matrix of an observable system in `L²(μ_λ)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GramReport {
    pub labels: Vec<String>,
    pub gram: Vec<Vec<f64>>,
    pub min_eigenvalue: f64,
    pub pass: bool,
    pub error: Option<String>,
}

pub fn check_observables(lam: &ContactForm, sys: &ObservableSystem, include_constant: bool, grid: &Grid) -> GramReport {
    let mut fields: Vec<ScalarField> = Vec::new();
    if include_constant {
        fields.push(ScalarField::constant(1.0, lam.dim()));
    }
    fields.extend(sys.observables().iter().cloned());
    let labels = fields.iter().map(|f| f.label().to_string()).collect();
    match gram_matrix(lam, &fields, grid) {
        Ok(g) => {
            let m = g.len();
            let mat = DMatrix::from_fn(m, m, |i, j| g[i][j]);
            let min = SymmetricEigen::new(mat).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            let tol = lam.model().tol.gram;
            GramReport { labels, gram: g, min_eigenvalue: min, pass: min > tol, error: None }
        }
        Err(e) => {
            GramReport { labels, gram: Vec::new(), min_eigenvalue: f64::NAN, pass: false, error: Some(e.to_string()) }
        }
    }
}

fn gram_matrix(lam: &ContactForm, fields: &[ScalarField], grid: &Grid) -> Result<Vec<Vec<f64>>> {
    let rho = density_values(lam, grid)?;
    let tab: Vec<Vec<f64>> = fields.iter().map(|f| grid.tabulate(|x| Ok(f.eval(x)))).collect::<Result<_>>()?;
    let m = fields.len();
    let mut g = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in i..m {
            let vals: Vec<f64> = (0..rho.len()).map(|k| tab[i][k] * tab[j][k] * rho[k]).collect();
            let v = integrate_values(grid, &vals)?;
            g[i][j] = v;
            g[j][i] = v;
        }
    }
    Ok(g)
}
