//! Coordinate fields on a periodic box, numerical derivatives and the
//! periodic-trapezoid quadrature used for every integral over the model.
//!
//! Fields are closures rather than grid arrays; a [`Grid`] only appears when
//! something is integrated. Jacobians follow the convention
//! `jac[(i, j)] = ∂_j F_i`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::pairwise_sum;

type ScalarFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type VecFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type MatFn = dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync;

/// Finite-difference settings. Steps are relative to the box period of
/// each axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Fd {
    /// Second-order central step for gradients of scalar fields.
    pub step: f64,
    /// Fourth-order central step for Jacobians and brackets.
    pub bracket_step: f64,
    pub enabled: bool,
    periods: Vec<f64>,
}

impl Fd {
    pub fn new(periods: Vec<f64>) -> Self {
        Fd { step: 1e-5, bracket_step: 1e-4, enabled: true, periods }
    }

    pub fn with_steps(mut self, step: f64, bracket_step: f64) -> Self {
        self.step = step;
        self.bracket_step = bracket_step;
        self
    }

    pub fn disabled(mut self) -> Self {
        self.enabled = false;
        self
    }

    pub fn dim(&self) -> usize {
        self.periods.len()
    }

    pub fn periods(&self) -> &[f64] {
        &self.periods
    }

    fn require(&self, what: &str) -> Result<()> {
        if self.enabled {
            Ok(())
        } else {
            Err(Error::DerivativeFailure(format!("{what}: no analytic derivative and finite differencing is disabled")))
        }
    }

    /// Second-order central gradient.
    pub fn gradient(&self, f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Result<Vec<f64>> {
        self.require("gradient")?;
        let mut p = x.to_vec();
        let mut g = vec![0.0; x.len()];
        for i in 0..x.len() {
            let h = self.step * self.periods[i];
            p[i] = x[i] + h;
            let fp = f(&p);
            p[i] = x[i] - h;
            let fm = f(&p);
            p[i] = x[i];
            g[i] = (fp - fm) / (2.0 * h);
        }
        Ok(g)
    }

    /// Fourth-order central gradient with the bracket step.
    pub fn gradient4(&self, f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Result<Vec<f64>> {
        self.require("gradient")?;
        let mut p = x.to_vec();
        let mut g = vec![0.0; x.len()];
        for i in 0..x.len() {
            let h = self.bracket_step * self.periods[i];
            let mut at = |s: f64| {
                p[i] = x[i] + s * h;
                let v = f(&p);
                p[i] = x[i];
                v
            };
            let (f2, f1, m1, m2) = (at(2.0), at(1.0), at(-1.0), at(-2.0));
            g[i] = (-f2 + 8.0 * f1 - 8.0 * m1 + m2) / (12.0 * h);
        }
        Ok(g)
    }

    /// Fourth-order central Jacobian of a vector-valued map.
    pub fn jacobian(&self, f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64]) -> Result<DMatrix<f64>> {
        self.require("jacobian")?;
        let d = x.len();
        let mut p = x.to_vec();
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
        for j in 0..d {
            let h = self.bracket_step * self.periods[j];
            let mut at = |s: f64| {
                p[j] = x[j] + s * h;
                let v = f(&p);
                p[j] = x[j];
                v
            };
            let (f2, f1, m1, m2) = (at(2.0), at(1.0), at(-1.0), at(-2.0));
            cols.push((0..f1.len()).map(|i| (-f2[i] + 8.0 * f1[i] - 8.0 * m1[i] + m2[i]) / (12.0 * h)).collect());
        }
        let rows = cols.first().map_or(0, Vec::len);
        Ok(DMatrix::from_fn(rows, d, |i, j| cols[j][i]))
    }
}

/// A scalar function on the box with an optional analytic gradient.
#[derive(Clone)]
pub struct ScalarField {
    eval: Arc<ScalarFn>,
    grad: Option<Arc<VecFn>>,
    label: String,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField").field("label", &self.label).field("analytic_grad", &self.grad.is_some()).finish()
    }
}

impl ScalarField {
    pub fn new(label: impl Into<String>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField { eval: Arc::new(f), grad: None, label: label.into() }
    }

    pub fn with_grad(mut self, g: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.grad = Some(Arc::new(g));
        self
    }

    pub fn constant(c: f64, dim: usize) -> Self {
        ScalarField::new(format!("{c}"), move |_| c).with_grad(move |_| vec![0.0; dim])
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn has_grad(&self) -> bool {
        self.grad.is_some()
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    pub fn grad(&self, x: &[f64], fd: &Fd) -> Result<Vec<f64>> {
        match &self.grad {
            Some(g) => Ok(g(x)),
            None => fd.gradient(|p| (self.eval)(p), x),
        }
    }

    /// Drops the analytic gradient so that derivatives go through `Fd`.
    pub fn without_grad(&self) -> Self {
        ScalarField { eval: self.eval.clone(), grad: None, label: self.label.clone() }
    }

    /// Largest relative mismatch between the analytic gradient and central
    /// differences over `samples`; `None` if there is no analytic gradient.
    pub fn gradient_consistency(&self, samples: &[Vec<f64>], fd: &Fd) -> Option<f64> {
        let g = self.grad.as_ref()?;
        let mut worst: f64 = 0.0;
        for x in samples {
            let a = g(x);
            let n = fd.gradient(|p| (self.eval)(p), x).ok()?;
            let scale = a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for (ai, ni) in a.iter().zip(&n) {
                worst = worst.max((ai - ni).abs() / scale);
            }
        }
        Some(worst)
    }
}

/// A vector field in box coordinates with an optional analytic Jacobian.
#[derive(Clone)]
pub struct VectorField {
    eval: Arc<VecFn>,
    jac: Option<Arc<MatFn>>,
    label: String,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorField").field("label", &self.label).field("analytic_jac", &self.jac.is_some()).finish()
    }
}

impl VectorField {
    pub fn new(label: impl Into<String>, f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        VectorField { eval: Arc::new(f), jac: None, label: label.into() }
    }

    pub fn with_jac(mut self, j: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.jac = Some(Arc::new(j));
        self
    }

    pub fn constant(v: Vec<f64>) -> Self {
        let d = v.len();
        let label = format!("{v:?}");
        VectorField::new(label, move |_| v.clone()).with_jac(move |_| DMatrix::zeros(d, d))
    }

    /// Builds a field from its components.
    pub fn from_components(parts: Vec<ScalarField>) -> Self {
        let label = parts.iter().map(|p| p.label().to_string()).collect::<Vec<_>>().join(", ");
        let all_grad = parts.iter().all(ScalarField::has_grad);
        let evals = parts.clone();
        let field = VectorField::new(format!("({label})"), move |x| evals.iter().map(|p| p.eval(x)).collect());
        if all_grad {
            let d = parts.len();
            field.with_jac(move |x| {
                let rows: Vec<Vec<f64>> = parts.iter().map(|p| (p.grad.as_ref().unwrap())(x)).collect();
                DMatrix::from_fn(d, rows[0].len(), |i, j| rows[i][j])
            })
        } else {
            field
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn has_jac(&self) -> bool {
        self.jac.is_some()
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        (self.eval)(x)
    }

    pub fn jac(&self, x: &[f64], fd: &Fd) -> Result<DMatrix<f64>> {
        match &self.jac {
            Some(j) => Ok(j(x)),
            None => fd.jacobian(|p| (self.eval)(p), x),
        }
    }

    pub fn without_jac(&self) -> Self {
        VectorField { eval: self.eval.clone(), jac: None, label: self.label.clone() }
    }

    /// Largest mismatch between the analytic and the finite-difference
    /// Jacobian, relative to the largest analytic entry.
    pub fn jacobian_consistency(&self, samples: &[Vec<f64>], fd: &Fd) -> Option<f64> {
        let j = self.jac.as_ref()?;
        let mut worst: f64 = 0.0;
        for x in samples {
            let a = j(x);
            let n = fd.jacobian(|p| (self.eval)(p), x).ok()?;
            let scale = a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            worst = worst.max((a - n).abs().max() / scale);
        }
        Some(worst)
    }
}

/// A one-form given by its coefficient covector in box coordinates.
#[derive(Clone, Debug)]
pub struct OneForm(VectorField);

impl OneForm {
    pub fn new(label: impl Into<String>, f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        OneForm(VectorField::new(label, f))
    }

    pub fn with_jac(self, j: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        OneForm(self.0.with_jac(j))
    }

    pub fn from_components(parts: Vec<ScalarField>) -> Self {
        OneForm(VectorField::from_components(parts))
    }

    pub fn label(&self) -> &str {
        self.0.label()
    }

    pub fn has_jac(&self) -> bool {
        self.0.has_jac()
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.0.eval(x)
    }

    pub fn jac(&self, x: &[f64], fd: &Fd) -> Result<DMatrix<f64>> {
        self.0.jac(x, fd)
    }

    /// Coefficients of `dα` as an antisymmetric matrix `W`,
    /// `dα = Σ_{i<j} W_ij dx^i ∧ dx^j`, `W_ij = ∂_i α_j − ∂_j α_i`.
    pub fn exterior_derivative(&self, x: &[f64], fd: &Fd) -> Result<DMatrix<f64>> {
        let j = self.jac(x, fd)?;
        Ok(j.transpose() - j)
    }

    pub fn as_vector_field(&self) -> &VectorField {
        &self.0
    }
}

/// Uniform periodic tensor grid with equal weights (periodic trapezoid).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    resolution: Vec<usize>,
    periods: Vec<f64>,
}

impl Grid {
    pub fn new(resolution: Vec<usize>, periods: Vec<f64>) -> Result<Self> {
        if resolution.len() != periods.len() || resolution.is_empty() {
            return Err(Error::InvalidInput("grid resolution and periods differ in length".into()));
        }
        if resolution.contains(&0) || periods.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::InvalidInput("grid resolution and periods must be positive".into()));
        }
        Ok(Grid { resolution, periods })
    }

    pub fn uniform(res: usize, periods: &[f64]) -> Result<Self> {
        Grid::new(vec![res; periods.len()], periods.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.periods.len()
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn periods(&self) -> &[f64] {
        &self.periods
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn weight(&self) -> f64 {
        self.periods.iter().zip(&self.resolution).map(|(p, r)| p / *r as f64).product()
    }

    pub fn volume(&self) -> f64 {
        self.periods.iter().product()
    }

    /// Node `k` in row-major order, last axis fastest.
    pub fn node(&self, mut k: usize) -> Vec<f64> {
        let d = self.dim();
        let mut x = vec![0.0; d];
        for axis in (0..d).rev() {
            let r = self.resolution[axis];
            x[axis] = (k % r) as f64 * self.periods[axis] / r as f64;
            k /= r;
        }
        x
    }

    pub fn nodes(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(move |k| self.node(k))
    }

    /// Evaluates `f` at every node in parallel; output order is node order.
    pub fn tabulate<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&[f64]) -> Result<T> + Sync + Send,
    {
        (0..self.len()).into_par_iter().map(|k| f(&self.node(k))).collect()
    }
}

/// Sum of tabulated node values times the cell weight.
pub fn integrate_values(grid: &Grid, values: &[f64]) -> Result<f64> {
    if let Some(k) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue(format!("integrand at node {:?}", grid.node(k))));
    }
    Ok(pairwise_sum(values) * grid.weight())
}

pub fn integrate(grid: &Grid, density: impl Fn(&[f64]) -> f64 + Sync + Send) -> Result<f64> {
    let values = grid.tabulate(|x| Ok(density(x)))?;
    integrate_values(grid, &values)
}

pub fn try_integrate(grid: &Grid, density: impl Fn(&[f64]) -> Result<f64> + Sync + Send) -> Result<f64> {
    let values = grid.tabulate(density)?;
    integrate_values(grid, &values)
}

/// A local observable system `{F_1, …, F_N}`.
#[derive(Clone, Debug)]
pub struct ObservableSystem {
    observables: Vec<ScalarField>,
}

impl ObservableSystem {
    pub fn new(observables: Vec<ScalarField>) -> Result<Self> {
        if observables.is_empty() {
            return Err(Error::InvalidInput("an observable system needs at least one observable".into()));
        }
        Ok(ObservableSystem { observables })
    }

    pub fn len(&self) -> usize {
        self.observables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observables.is_empty()
    }

    pub fn observables(&self) -> &[ScalarField] {
        &self.observables
    }

    pub fn labels(&self) -> Vec<String> {
        self.observables.iter().map(|f| f.label().to_string()).collect()
    }
}

/// `[X, Y] = (DY)X − (DX)Y` at `x`.
pub fn lie_bracket(x_field: &VectorField, y_field: &VectorField, x: &[f64], fd: &Fd) -> Result<Vec<f64>> {
    let xv = x_field.eval(x);
    let yv = y_field.eval(x);
    let dx = x_field.jac(x, fd)?;
    let dy = y_field.jac(x, fd)?;
    let d = xv.len();
    Ok((0..d).map(|i| (0..d).map(|j| dy[(i, j)] * xv[j] - dx[(i, j)] * yv[j]).sum()).collect())
}

/// The bracket `[X, Y]` as a field of its own (derivatives by `Fd`).
pub fn bracket_field(x_field: &VectorField, y_field: &VectorField, fd: &Fd) -> VectorField {
    let (xf, yf, fd) = (x_field.clone(), y_field.clone(), fd.clone());
    let label = format!("[{}, {}]", x_field.label(), y_field.label());
    VectorField::new(label, move |p| lie_bracket(&xf, &yf, p, &fd).unwrap_or_else(|_| vec![f64::NAN; p.len()]))
}

/// Divergence with respect to the measure with coordinate density `rho`:
/// `(1/ρ) Σ_i ∂_i(ρ Y^i)`.
pub fn divergence(y_field: &VectorField, rho: &ScalarField, x: &[f64], fd: &Fd) -> Result<f64> {
    let r = rho.eval(x);
    if !(r > 0.0) {
        return Err(Error::InvalidInput(format!("density {r} is not positive at {x:?}")));
    }
    let jac = y_field.jac(x, fd)?;
    let grad = rho.grad(x, fd)?;
    let y = y_field.eval(x);
    let trace: f64 = (0..y.len()).map(|i| jac[(i, i)]).sum();
    let transport: f64 = grad.iter().zip(&y).map(|(g, v)| g * v).sum();
    Ok(trace + transport / r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn unit_fd() -> Fd {
        Fd::new(vec![1.0; 3])
    }

    #[test]
    fn constant_density_integrates_to_volume() {
        let g = Grid::uniform(64, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(integrate(&g, |_| 1.0).unwrap(), 1.0);
        assert_eq!(g.weight() * g.len() as f64, 1.0);
        assert_eq!(g.len(), 64 * 64 * 64);
    }

    #[test]
    fn periodic_trig_integrates_to_zero() {
        let g = Grid::uniform(64, &[1.0, 1.0, 1.0]).unwrap();
        let v = integrate(&g, |x| (2.0 * PI * x[0]).cos()).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn non_finite_integrand_is_rejected() {
        let g = Grid::uniform(4, &[1.0, 1.0, 1.0]).unwrap();
        let err = integrate(&g, |x| if x[0] > 0.5 { f64::NAN } else { 1.0 }).unwrap_err();
        assert!(matches!(err, Error::NonFiniteValue(_)));
    }

    #[test]
    fn integration_is_linear() {
        let g = Grid::uniform(16, &[1.0, 1.0, 1.0]).unwrap();
        let f = |x: &[f64]| (2.0 * PI * x[0]).sin().exp() + x[1];
        let h = |x: &[f64]| (2.0 * PI * (x[1] + x[2])).cos() * 3.0;
        let (a, b) = (0.7, -2.3);
        let lhs = integrate(&g, |x| a * f(x) + b * h(x)).unwrap();
        let rhs = a * integrate(&g, f).unwrap() + b * integrate(&g, h).unwrap();
        let bound = 1e-12 * (a.abs() * 4.0 + b.abs() * 3.0);
        assert!((lhs - rhs).abs() < bound);
    }

    #[test]
    fn bracket_of_constant_fields_vanishes() {
        let x = VectorField::constant(vec![1.0, 0.0, 0.0]);
        let y = VectorField::constant(vec![0.0, 1.0, 0.0]);
        let b = lie_bracket(&x, &y, &[0.3, 0.2, 0.1], &unit_fd()).unwrap();
        assert_eq!(b, vec![0.0; 3]);
    }

    #[test]
    fn bracket_of_rotating_field_matches_hand_computation() {
        let x = VectorField::constant(vec![0.0, 0.0, 1.0]);
        let y = VectorField::new("rot", |p| vec![(2.0 * PI * p[2]).cos(), (2.0 * PI * p[2]).sin(), 0.0]);
        for z in [0.0, 0.13, 0.5, 0.77] {
            let p = [0.2, 0.4, z];
            let b = lie_bracket(&x, &y, &p, &unit_fd()).unwrap();
            let expect = [-2.0 * PI * (2.0 * PI * z).sin(), 2.0 * PI * (2.0 * PI * z).cos(), 0.0];
            for i in 0..3 {
                assert!((b[i] - expect[i]).abs() < 1e-9, "{b:?} vs {expect:?}");
            }
        }
    }

    #[test]
    fn self_bracket_vanishes() {
        let y = VectorField::new("w", |p| vec![(2.0 * PI * p[1]).sin(), p[0].cos(), (2.0 * PI * p[0]).cos()]);
        let b = lie_bracket(&y, &y, &[0.1, 0.7, 0.3], &unit_fd()).unwrap();
        assert!(b.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn divergence_examples() {
        let fd = unit_fd();
        let one = ScalarField::constant(1.0, 3);
        let c = VectorField::constant(vec![0.3, -1.0, 2.0]);
        assert_eq!(divergence(&c, &one, &[0.1, 0.2, 0.3], &fd).unwrap(), 0.0);
        let y = VectorField::new("sinx", |p| vec![(2.0 * PI * p[0]).sin(), 0.0, 0.0]);
        for xv in [0.0, 0.1, 0.35] {
            let d = divergence(&y, &one, &[xv, 0.5, 0.5], &fd).unwrap();
            assert!((d - 2.0 * PI * (2.0 * PI * xv).cos()).abs() < 1e-9);
        }
    }

    #[test]
    fn divergence_integrates_to_zero() {
        let fd = unit_fd();
        let rho = ScalarField::new("rho", |p| 2.0 + (2.0 * PI * (p[0] + p[2])).sin());
        let y = VectorField::new("y", |p| {
            vec![(2.0 * PI * p[1]).cos(), (2.0 * PI * p[0]).sin() * (2.0 * PI * p[2]).cos(), (2.0 * PI * p[2]).sin()]
        });
        let g = Grid::uniform(24, &[1.0, 1.0, 1.0]).unwrap();
        let v = try_integrate(&g, |x| Ok(divergence(&y, &rho, x, &fd)? * rho.eval(x))).unwrap();
        assert!(v.abs() < 1e-8, "{v}");
    }

    #[test]
    fn disabled_fd_reports_derivative_failure() {
        let fd = unit_fd().disabled();
        let f = ScalarField::new("f", |p| p[0]);
        assert!(matches!(f.grad(&[0.0; 3], &fd), Err(Error::DerivativeFailure(_))));
        let analytic = f.clone().with_grad(|_| vec![1.0, 0.0, 0.0]);
        assert_eq!(analytic.grad(&[0.0; 3], &fd).unwrap(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn analytic_gradient_consistency() {
        let f = ScalarField::new("f", |p| (2.0 * PI * p[0]).sin() * (2.0 * PI * p[1]).cos()).with_grad(|p| {
            vec![
                2.0 * PI * (2.0 * PI * p[0]).cos() * (2.0 * PI * p[1]).cos(),
                -2.0 * PI * (2.0 * PI * p[0]).sin() * (2.0 * PI * p[1]).sin(),
                0.0,
            ]
        });
        let samples: Vec<Vec<f64>> = (0..10).map(|k| vec![0.1 * k as f64, 0.07 * k as f64, 0.3]).collect();
        assert!(f.gradient_consistency(&samples, &unit_fd()).unwrap() < 1e-5);
    }

    #[test]
    fn doubling_resolution_is_stable() {
        let f = |x: &[f64]| ((2.0 * PI * x[0]).cos() + (2.0 * PI * x[1]).sin() * 0.5).exp();
        let g48 = Grid::uniform(48, &[1.0, 1.0, 1.0]).unwrap();
        let g96 = Grid::new(vec![96, 96, 4], vec![1.0, 1.0, 1.0]).unwrap();
        let a = integrate(&g48, f).unwrap();
        let b = integrate(&g96, f).unwrap();
        assert!((a - b).abs() < 1e-8);
    }
}
