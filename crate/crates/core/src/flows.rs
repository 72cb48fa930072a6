//! Contact Hamiltonian flows, conformal factors of contactomorphisms and the
//! cocycle identities of the conformal exponent.
//!
//! Maps act on the covering space of the box: [`Diffeomorphism::lift`]
//! never wraps coordinates, so Jacobians and compositions stay smooth.
//! Points are canonicalized only when reported.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::ScalarField;
use crate::geometry::{ContactForm, Frame};
use crate::linalg::dot;

/// A smooth self-map of the box, given on the covering space.
pub trait Diffeomorphism: Send + Sync {
    fn dim(&self) -> usize;

    /// Image of `x` without wrapping into the box.
    fn lift(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// `Dψ_x`; central differences of [`Diffeomorphism::lift`] by default.
    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        central_jacobian(|p| self.lift(p), x, 1e-5)
    }

    fn label(&self) -> String;
}

/// Second-order central-difference Jacobian of a map with absolute step `h`.
pub fn central_jacobian(f: impl Fn(&[f64]) -> Result<Vec<f64>>, x: &[f64], h: f64) -> Result<DMatrix<f64>> {
    let d = x.len();
    let mut m = DMatrix::zeros(d, d);
    let mut p = x.to_vec();
    for j in 0..d {
        p[j] = x[j] + h;
        let fp = f(&p)?;
        p[j] = x[j] - h;
        let fm = f(&p)?;
        p[j] = x[j];
        for i in 0..d {
            m[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(m)
}

#[derive(Debug, Clone)]
pub struct Identity {
    pub dim: usize,
}

impl Diffeomorphism for Identity {
    fn dim(&self) -> usize {
        self.dim
    }
    fn lift(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(x.to_vec())
    }
    fn jacobian(&self, _x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(DMatrix::identity(self.dim, self.dim))
    }
    fn label(&self) -> String {
        "id".into()
    }
}

/// `x ↦ x + shift`.
#[derive(Debug, Clone)]
pub struct Translation {
    pub shift: Vec<f64>,
}

impl Diffeomorphism for Translation {
    fn dim(&self) -> usize {
        self.shift.len()
    }
    fn lift(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(x.iter().zip(&self.shift).map(|(a, b)| a + b).collect())
    }
    fn jacobian(&self, _x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(DMatrix::identity(self.dim(), self.dim()))
    }
    fn label(&self) -> String {
        format!("translate{:?}", self.shift)
    }
}

/// `outer ∘ inner`.
#[derive(Clone)]
pub struct Composition {
    pub outer: Arc<dyn Diffeomorphism>,
    pub inner: Arc<dyn Diffeomorphism>,
}

impl Diffeomorphism for Composition {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn lift(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.outer.lift(&self.inner.lift(x)?)
    }
    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let y = self.inner.lift(x)?;
        Ok(self.outer.jacobian(&y)? * self.inner.jacobian(x)?)
    }
    fn label(&self) -> String {
        format!("({})∘({})", self.outer.label(), self.inner.label())
    }
}

/// `φ^N`.
#[derive(Clone)]
pub struct Power {
    pub base: Arc<dyn Diffeomorphism>,
    pub n: usize,
}

impl Diffeomorphism for Power {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn lift(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = x.to_vec();
        for _ in 0..self.n {
            y = self.base.lift(&y)?;
        }
        Ok(y)
    }
    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let mut m = DMatrix::identity(d, d);
        let mut y = x.to_vec();
        for _ in 0..self.n {
            m = self.base.jacobian(&y)? * m;
            y = self.base.lift(&y)?;
        }
        Ok(m)
    }
    fn label(&self) -> String {
        format!("({})^{}", self.base.label(), self.n)
    }
}

/// How a [`FlowMap`] differentiates itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianMode {
    /// RK4 on the tangent map alongside the trajectory, with `DX_H` from
    /// fourth-order central differences.
    Variational,
    /// Central differences of the flow map with step `1e-5`.
    FiniteDifference,
}

/// Time-`t` map of the contact Hamiltonian flow of `H`, by constant-step RK4.
#[derive(Clone)]
pub struct FlowMap {
    lam: ContactForm,
    h: ScalarField,
    t: f64,
    dt: f64,
    steps: usize,
    pub jacobian_mode: JacobianMode,
}

impl fmt::Debug for FlowMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FlowMap")
            .field("H", &self.h.label())
            .field("t", &self.t)
            .field("dt", &self.dt)
            .field("steps", &self.steps)
            .finish()
    }
}

/// Samples of the conformal exponent along one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialTrace {
    pub times: Vec<f64>,
    pub g_values: Vec<f64>,
    /// Canonicalized positions at each recorded time.
    pub points: Vec<Vec<f64>>,
    pub endpoint_x: Vec<f64>,
}

impl FlowMap {
    /// `dt > 0` is the step size; negative `t` flows backwards.
    pub fn new(lam: &ContactForm, h: ScalarField, t: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !t.is_finite() {
            return Err(Error::InvalidInput(format!("flow needs dt > 0 and finite t (t = {t}, dt = {dt})")));
        }
        let steps = (t.abs() / dt).round();
        if (steps * dt - t.abs()).abs() > 1e-9 * t.abs().max(1.0) {
            return Err(Error::InvalidInput(format!("t = {t} is not a whole number of steps dt = {dt}")));
        }
        Ok(FlowMap { lam: lam.clone(), h, t, dt, steps: steps as usize, jacobian_mode: JacobianMode::Variational })
    }

    /// The Reeb flow: `X_{−1} = R_λ`.
    pub fn reeb(lam: &ContactForm, t: f64, dt: f64) -> Result<Self> {
        FlowMap::new(lam, ScalarField::constant(-1.0, lam.dim()), t, dt)
    }

    pub fn with_dt_max(self, dt_max: f64) -> Result<Self> {
        if self.dt > dt_max {
            return Err(Error::InvalidInput(format!("dt = {} exceeds integ.dt_max = {dt_max}", self.dt)));
        }
        Ok(self)
    }

    pub fn with_jacobian_mode(mut self, mode: JacobianMode) -> Self {
        self.jacobian_mode = mode;
        self
    }

    pub fn form(&self) -> &ContactForm {
        &self.lam
    }

    pub fn hamiltonian(&self) -> &ScalarField {
        &self.h
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn signed_dt(&self) -> f64 {
        if self.t < 0.0 {
            -self.dt
        } else {
            self.dt
        }
    }

    /// `(X_H(x), −R_λ[H](x))`.
    fn rhs(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let frame = self.lam.frame(x)?;
        self.rhs_in(&frame)
    }

    fn rhs_in(&self, frame: &Frame) -> Result<(Vec<f64>, f64)> {
        let dh = self.h.grad(&frame.x, self.lam.fd())?;
        let (v, _) = frame.hamiltonian(self.h.eval(&frame.x), &dh)?;
        Ok((v, -dot(&dh, &frame.reeb)))
    }

    fn rhs_jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let d = x.len();
        let j = self.lam.fd().jacobian(|p| self.rhs(p).map(|r| r.0).unwrap_or_else(|_| vec![f64::NAN; d]), x)?;
        if j.iter().any(|v| !v.is_finite()) {
            return Err(Error::StepTooLarge { at: x.to_vec() });
        }
        Ok(j)
    }

    fn stage(&self, x: &[f64], first: bool) -> Result<(Vec<f64>, f64)> {
        match self.rhs(x) {
            Ok(r) => Ok(r),
            Err(e @ (Error::SingularForm { .. } | Error::Residual { .. } | Error::NonFiniteValue(_))) => {
                if first {
                    Err(e)
                } else {
                    Err(Error::StepTooLarge { at: x.to_vec() })
                }
            }
            Err(e) => Err(e),
        }
    }

    fn step(&self, x: &[f64], h: f64) -> Result<(Vec<f64>, f64)> {
        let (k1, l1) = self.stage(x, true)?;
        let x2 = axpy(x, h / 2.0, &k1);
        let (k2, l2) = self.stage(&x2, false)?;
        let x3 = axpy(x, h / 2.0, &k2);
        let (k3, l3) = self.stage(&x3, false)?;
        let x4 = axpy(x, h, &k3);
        let (k4, l4) = self.stage(&x4, false)?;
        let y = (0..x.len()).map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect();
        Ok((y, h / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4)))
    }

    /// Lifted endpoint and integrated potential `g = ∫ −R_λ[H]`.
    pub fn advance(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.lam.model().check_point(x)?;
        let h = self.signed_dt();
        let mut y = x.to_vec();
        let mut g = 0.0;
        for _ in 0..self.steps {
            let (ny, dg) = self.step(&y, h)?;
            y = ny;
            g += dg;
        }
        Ok((y, g))
    }

    /// As [`FlowMap::advance`], also propagating the tangent map.
    pub fn advance_with_tangent(&self, x: &[f64]) -> Result<(Vec<f64>, f64, DMatrix<f64>)> {
        self.lam.model().check_point(x)?;
        let h = self.signed_dt();
        let d = x.len();
        let mut y = x.to_vec();
        let mut g = 0.0;
        let mut m = DMatrix::identity(d, d);
        for _ in 0..self.steps {
            let (k1, l1) = self.stage(&y, true)?;
            let j1 = self.rhs_jacobian(&y)? * &m;
            let y2 = axpy(&y, h / 2.0, &k1);
            let (k2, l2) = self.stage(&y2, false)?;
            let j2 = self.rhs_jacobian(&y2)? * (&m + &j1 * (h / 2.0));
            let y3 = axpy(&y, h / 2.0, &k2);
            let (k3, l3) = self.stage(&y3, false)?;
            let j3 = self.rhs_jacobian(&y3)? * (&m + &j2 * (h / 2.0));
            let y4 = axpy(&y, h, &k3);
            let (k4, l4) = self.stage(&y4, false)?;
            let j4 = self.rhs_jacobian(&y4)? * (&m + &j3 * h);
            for i in 0..d {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            g += h / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
            m += (j1 + j2 * 2.0 + j3 * 2.0 + j4) * (h / 6.0);
        }
        Ok((y, g, m))
    }

    /// Integrated conformal exponent `g_{(ψ;λ)}(x)`.
    pub fn integrated_potential(&self, x: &[f64]) -> Result<f64> {
        Ok(self.advance(x)?.1)
    }
}

fn axpy(x: &[f64], a: f64, v: &[f64]) -> Vec<f64> {
    x.iter().zip(v).map(|(xi, vi)| xi + a * vi).collect()
}

impl Diffeomorphism for FlowMap {
    fn dim(&self) -> usize {
        self.lam.dim()
    }
    fn lift(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.advance(x)?.0)
    }
    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        match self.jacobian_mode {
            JacobianMode::Variational => Ok(self.advance_with_tangent(x)?.2),
            JacobianMode::FiniteDifference => central_jacobian(|p| self.lift(p), x, 1e-5),
        }
    }
    fn label(&self) -> String {
        format!("flow[{}; t={}, dt={}]", self.h.label(), self.t, self.dt)
    }
}

/// Integrates the flow of `fm` from `x`, recording every step.
pub fn flow_point(fm: &FlowMap, x: &[f64]) -> Result<(Vec<f64>, PotentialTrace)> {
    let model = fm.lam.model();
    model.check_point(x)?;
    let h = fm.signed_dt();
    let mut y = x.to_vec();
    let mut g = 0.0;
    let mut trace = PotentialTrace {
        times: vec![0.0],
        g_values: vec![0.0],
        points: vec![model.canonicalize(x)],
        endpoint_x: Vec::new(),
    };
    for k in 0..fm.steps {
        let (ny, dg) = fm.step(&y, h)?;
        y = ny;
        g += dg;
        trace.times.push((k + 1) as f64 * h);
        trace.g_values.push(g);
        trace.points.push(model.canonicalize(&y));
    }
    let end = model.canonicalize(&y);
    trace.endpoint_x = end.clone();
    Ok((end, trace))
}

/// Conformal factor of a map at a point, with the contact-structure defect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConformalFactor {
    pub f: f64,
    /// Largest `|(ψ*λ − fλ)(v)|` over a unit basis `v` of `ξ_x`, relative to `|ψ*λ|`.
    pub defect: f64,
}

/// `f(x) = λ_{ψ(x)}(Dψ_x R_λ(x))`, checking that `ψ*λ − fλ` vanishes on `ξ_x`.
pub fn conformal_factor_pullback(lam: &ContactForm, psi: &dyn Diffeomorphism, x: &[f64]) -> Result<ConformalFactor> {
    let cf = conformal_factor_unchecked(lam, psi, x)?;
    let tol = lam.model().tol.conf;
    if !(cf.defect <= tol) {
        return Err(Error::NotContactomorphism { defect: cf.defect, tol });
    }
    Ok(cf)
}

fn conformal_factor_unchecked(lam: &ContactForm, psi: &dyn Diffeomorphism, x: &[f64]) -> Result<ConformalFactor> {
    let model = lam.model();
    model.check_point(x)?;
    let x = model.canonicalize(x);
    let frame = lam.frame(&x)?;
    let y = psi.lift(&x)?;
    let jac = psi.jacobian(&x)?;
    let ay = lam.coefficients(&model.canonicalize(&y));
    let d = x.len();
    // Pulled-back covector b = Dψᵀ a(ψx).
    let b: Vec<f64> = (0..d).map(|j| (0..d).map(|i| jac[(i, j)] * ay[i]).sum()).collect();
    // λ_x(R) is 1 up to rounding; dividing by it makes the identity exact.
    let f = dot(&b, &frame.reeb) / frame.eval_form(&frame.reeb);
    let norm_b = dot(&b, &b).sqrt();
    let mut defect: f64 = 0.0;
    for i in 0..d {
        let mut v: Vec<f64> = frame.reeb.iter().map(|r| -frame.a[i] * r).collect();
        v[i] += 1.0;
        let nv = dot(&v, &v).sqrt();
        if nv < 1e-8 {
            continue;
        }
        let e: f64 = (0..d).map(|k| (b[k] - f * frame.a[k]) * v[k]).sum::<f64>() / nv;
        defect = defect.max(e.abs());
    }
    if !f.is_finite() {
        return Err(Error::NonFiniteValue(format!("conformal factor at {x:?}")));
    }
    Ok(ConformalFactor { f, defect: defect / norm_b.max(f64::MIN_POSITIVE) })
}

/// `g_{(ψ;λ)}(x) = log f(x)`.
pub fn conformal_exponent(lam: &ContactForm, psi: &dyn Diffeomorphism, x: &[f64]) -> Result<f64> {
    let cf = conformal_factor_pullback(lam, psi, x)?;
    if !(cf.f > 0.0) {
        return Err(Error::NotContactomorphism { defect: f64::INFINITY, tol: lam.model().tol.conf });
    }
    Ok(cf.f.ln())
}

/// Results of the cocycle, iteration and growth checks on a sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CocycleReport {
    pub samples: usize,
    /// `max |g_{ψφ} − g_ψ∘φ − g_φ|`.
    pub composition_defect: f64,
    /// For `N = 1..=N_max`: `max |g_{φ^N} − Σ_{k<N} g_φ∘φ^k|`.
    pub iteration_defects: Vec<f64>,
    /// `sup |g_φ|` over the samples and their visited orbit points.
    pub g_sup: f64,
    /// For `N = 1..=N_max`: `(1/N) max |g_{φ^N}|` over the samples.
    pub growth: Vec<f64>,
    pub growth_bound_holds: bool,
}

/// Checks `g_{ψφ} = g_ψ∘φ + g_φ`, its `N`-fold iterate for powers of `φ`,
/// and the growth bound `(1/N)‖g_{φ^N}‖ ≤ ‖g_φ‖`.
pub fn cocycle_check(
    lam: &ContactForm,
    psi: Arc<dyn Diffeomorphism>,
    phi: Arc<dyn Diffeomorphism>,
    sample: &[Vec<f64>],
    n_max: usize,
) -> Result<CocycleReport> {
    let model = lam.model();
    let comp = Composition { outer: psi.clone(), inner: phi.clone() };
    let per_point: Vec<(f64, Vec<f64>, f64, Vec<f64>)> = sample
        .par_iter()
        .map(|x| -> Result<(f64, Vec<f64>, f64, Vec<f64>)> {
            let x = model.canonicalize(x);
            let g_comp = conformal_exponent(lam, &comp, &x)?;
            let y = phi.lift(&x)?;
            let g_phi = conformal_exponent(lam, phi.as_ref(), &x)?;
            let g_psi = conformal_exponent(lam, psi.as_ref(), &model.canonicalize(&y))?;
            let comp_defect = (g_comp - g_psi - g_phi).abs();
            let mut iter_defects = Vec::with_capacity(n_max);
            let mut growth = Vec::with_capacity(n_max);
            let mut birkhoff = 0.0;
            let mut sup = 0.0f64;
            let mut orbit = x.clone();
            for n in 1..=n_max {
                let gk = conformal_exponent(lam, phi.as_ref(), &model.canonicalize(&orbit))?;
                sup = sup.max(gk.abs());
                birkhoff += gk;
                orbit = phi.lift(&orbit)?;
                let pw = Power { base: phi.clone(), n };
                let g_n = conformal_exponent(lam, &pw, &x)?;
                iter_defects.push((g_n - birkhoff).abs());
                growth.push(g_n.abs() / n as f64);
            }
            Ok((comp_defect, iter_defects, sup, growth))
        })
        .collect::<Result<_>>()?;
    let mut report = CocycleReport {
        samples: sample.len(),
        composition_defect: 0.0,
        iteration_defects: vec![0.0; n_max],
        g_sup: 0.0,
        growth: vec![0.0; n_max],
        growth_bound_holds: true,
    };
    for (c, iters, sup, growth) in per_point {
        report.composition_defect = report.composition_defect.max(c);
        report.g_sup = report.g_sup.max(sup);
        for k in 0..n_max {
            report.iteration_defects[k] = report.iteration_defects[k].max(iters[k]);
            report.growth[k] = report.growth[k].max(growth[k]);
        }
    }
    report.growth_bound_holds = report.growth.iter().all(|g| *g <= report.g_sup + 1e-6);
    Ok(report)
}

/// `−(n+1)·R_λ[H](x)`, the density of `𝓛_{X_H} μ_λ` relative to `μ_λ`.
pub fn dissipation_rate(lam: &ContactForm, h: &ScalarField, x: &[f64]) -> Result<f64> {
    let rh = crate::geometry::reeb_derivative(lam, h, x)?;
    Ok(-((lam.n() + 1) as f64) * rh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::divergence;
    use crate::geometry::{hamiltonian_vector_field, reeb_field, ContactModel};
    use crate::samples;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn base() -> ContactForm {
        ContactForm::base(&Arc::new(ContactModel::torus3()))
    }

    fn cos2pix() -> ScalarField {
        samples::cos2pi(0, 1.0)
    }

    #[test]
    fn zero_time_flow_is_trivial() {
        let fm = FlowMap::new(&base(), cos2pix(), 0.0, 1e-3).unwrap();
        let (end, trace) = flow_point(&fm, &[0.2, 0.3, 0.4]).unwrap();
        assert_eq!(end, vec![0.2, 0.3, 0.4]);
        assert_eq!(trace.g_values, vec![0.0]);
        assert_eq!(trace.times, vec![0.0]);
    }

    #[test]
    fn unit_hamiltonian_reverses_reeb_flow() {
        let lam = base();
        let one = ScalarField::constant(1.0, 3);
        let fm = FlowMap::new(&lam, one, 0.5, 1e-2).unwrap();
        let x = [0.1, 0.2, 0.125];
        let (y, g) = fm.advance(&x).unwrap();
        let r = reeb_field(&lam, &x).unwrap();
        for i in 0..3 {
            assert!((y[i] - (x[i] - 0.5 * r[i])).abs() < 1e-12);
        }
        assert_eq!(g, 0.0);
    }

    #[test]
    fn step_count_must_be_whole() {
        assert!(matches!(FlowMap::new(&base(), cos2pix(), 1.0, 0.3), Err(Error::InvalidInput(_))));
        assert!(matches!(FlowMap::new(&base(), cos2pix(), 1.0, 0.0), Err(Error::InvalidInput(_))));
        assert!(FlowMap::new(&base(), cos2pix(), 1.0, 0.25).unwrap().with_dt_max(0.1).is_err());
    }

    #[test]
    fn backward_flow_inverts_forward_flow() {
        let lam = base();
        let fwd = FlowMap::new(&lam, cos2pix(), 0.5, 1e-3).unwrap();
        let bwd = FlowMap::new(&lam, cos2pix(), -0.5, 1e-3).unwrap();
        let x = [0.3, 0.1, 0.7];
        let (y, g) = fwd.advance(&x).unwrap();
        let (z, g2) = bwd.advance(&y).unwrap();
        for i in 0..3 {
            assert!((z[i] - x[i]).abs() < 1e-10);
        }
        assert!((g + g2).abs() < 1e-10);
    }

    #[test]
    fn rk4_self_convergence() {
        let lam = base();
        let x = [0.3, 0.1, 0.7];
        let a = FlowMap::new(&lam, cos2pix(), 1.0, 1e-3).unwrap().advance(&x).unwrap().0;
        let b = FlowMap::new(&lam, cos2pix(), 1.0, 5e-4).unwrap().advance(&x).unwrap().0;
        let gap = a.iter().zip(&b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-10, "{gap}");
    }

    #[test]
    fn identity_and_reeb_maps_are_strict() {
        let lam = base();
        let id = Identity { dim: 3 };
        let cf = conformal_factor_pullback(&lam, &id, &[0.3, 0.2, 0.9]).unwrap();
        assert_eq!(cf, ConformalFactor { f: 1.0, defect: 0.0 });
        let reeb = FlowMap::reeb(&lam, 0.37, 1e-2).unwrap();
        for x in [[0.0, 0.0, 0.0], [0.3, 0.6, 0.15], [0.9, 0.2, 0.55]] {
            let cf = conformal_factor_pullback(&lam, &reeb, &x).unwrap();
            assert!((cf.f - 1.0).abs() < 1e-7);
            let fd =
                conformal_factor_pullback(&lam, &reeb.clone().with_jacobian_mode(JacobianMode::FiniteDifference), &x)
                    .unwrap();
            assert!((fd.f - 1.0).abs() < 1e-7);
        }
    }

    #[test]
    fn non_contact_map_is_rejected() {
        let lam = base();
        let stretch = Stretch;
        assert!(matches!(
            conformal_factor_pullback(&lam, &stretch, &[0.1, 0.2, 0.3]),
            Err(Error::NotContactomorphism { .. })
        ));
    }

    struct Stretch;
    impl Diffeomorphism for Stretch {
        fn dim(&self) -> usize {
            3
        }
        fn lift(&self, x: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![2.0 * x[0], x[1], x[2]])
        }
        fn label(&self) -> String {
            "stretch".into()
        }
    }

    #[test]
    fn pullback_and_integral_agree() {
        let lam = base();
        let fm = FlowMap::new(&lam, cos2pix(), 1.0, 1e-2).unwrap();
        for x in [[0.1, 0.2, 0.3], [0.77, 0.4, 0.05]] {
            let g = fm.integrated_potential(&x).unwrap();
            let lf = conformal_exponent(&lam, &fm, &x).unwrap();
            assert!((g - lf).abs() < 1e-4, "{g} vs {lf}");
        }
    }

    #[test]
    fn dissipation_examples() {
        let lam = base();
        assert_eq!(dissipation_rate(&lam, &ScalarField::constant(3.0, 3), &[0.1, 0.2, 0.3]).unwrap(), 0.0);
        assert!(dissipation_rate(&lam, &cos2pix(), &[0.0, 0.0, 0.0]).unwrap().abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = samples::random_field(&mut rng, 3, 1.0);
        let rho = lam.density_field();
        let xh = hamiltonian_vector_field(&lam, &h);
        for _ in 0..10 {
            let x = samples::random_point(&mut rng, &[1.0; 3]);
            let a = dissipation_rate(&lam, &h, &x).unwrap();
            let b = divergence(&xh, &rho, &x, lam.fd()).unwrap();
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn identity_cocycle_is_exact() {
        let lam = base();
        let id: Arc<dyn Diffeomorphism> = Arc::new(Identity { dim: 3 });
        let pts = vec![vec![0.1, 0.2, 0.3], vec![0.5, 0.5, 0.5]];
        let r = cocycle_check(&lam, id.clone(), id, &pts, 3).unwrap();
        assert_eq!(r.composition_defect, 0.0);
        assert!(r.iteration_defects.iter().all(|d| *d == 0.0));
        assert!(r.growth_bound_holds);
    }

    #[test]
    fn composition_and_power_lifts() {
        let t: Arc<dyn Diffeomorphism> = Arc::new(Translation { shift: vec![0.3, 0.0, 0.1] });
        let p = Power { base: t.clone(), n: 4 };
        let y = p.lift(&[0.0, 0.0, 0.0]).unwrap();
        assert!((y[0] - 1.2).abs() < 1e-15 && (y[2] - 0.4).abs() < 1e-15);
        let c = Composition { outer: t.clone(), inner: t };
        assert_eq!(c.jacobian(&[0.0; 3]).unwrap(), DMatrix::identity(3, 3));
    }
}
