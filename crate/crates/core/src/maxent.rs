//! Maximum relative entropy under moment constraints: the exponential family
//! `ρ_p = exp(−w(p) + Σ p_i F_i)` over a normalized `μ_{λ₀}`, its dual Newton
//! solver, and the Legendrian check along paths in multiplier space.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::entropy::{check_observables, density_values, mass};
use crate::error::{Error, Result};
use crate::fields::{Grid, ObservableSystem, ScalarField};
use crate::geometry::ContactForm;
use crate::linalg::pairwise_sum;

const MAX_NEWTON: usize = 200;
const MAX_HALVINGS: usize = 60;
const EXP_RANGE: f64 = 700.0;

/// Exponential-family fitting problem over a normalized contact form.
#[derive(Clone, Debug)]
pub struct MaxEntProblem {
    lam0: ContactForm,
    observables: Vec<ScalarField>,
    grid: Grid,
    pub targets: Option<Vec<f64>>,
    // Node values F_i(x_k), row per observable.
    table: Vec<Vec<f64>>,
    // ρ₀(x_k) times the cell weight.
    base_weights: Vec<f64>,
    pub p_step_max: f64,
}

/// `w(p)`, `q(p) = ∇w` and `Cov(p) = ∇²w`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogPartition {
    pub w: f64,
    pub q: Vec<f64>,
    pub covariance: DMatrix<f64>,
}

/// One equilibrium state of the observable system.
#[derive(Clone, Debug)]
pub struct MaxEntSolution {
    pub p: Vec<f64>,
    pub w: f64,
    pub q: Vec<f64>,
    pub entropy: f64,
    pub covariance: DMatrix<f64>,
    pub iterations: usize,
    /// Dual objective `w(p) − ⟨p, q*⟩` at each accepted iterate.
    pub objective_history: Vec<f64>,
    /// `exp(−w + Σ p_i F_i)`, the density against `μ_{λ₀}`.
    pub density: ScalarField,
    /// `f·λ₀` with `f^{n+1}` equal to the density.
    pub equilibrium_form: ContactForm,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxEntSummary {
    pub p: Vec<f64>,
    pub w: f64,
    pub q: Vec<f64>,
    pub entropy: f64,
    pub covariance: Vec<Vec<f64>>,
    pub iterations: usize,
}

impl MaxEntSolution {
    pub fn summary(&self) -> MaxEntSummary {
        let n = self.covariance.nrows();
        MaxEntSummary {
            p: self.p.clone(),
            w: self.w,
            q: self.q.clone(),
            entropy: self.entropy,
            covariance: (0..n).map(|i| (0..n).map(|j| self.covariance[(i, j)]).collect()).collect(),
            iterations: self.iterations,
        }
    }

    pub fn point(&self) -> EquilibriumPoint {
        EquilibriumPoint { q: self.q.clone(), p: self.p.clone(), z: self.entropy }
    }
}

/// A point `(q, p, z)` of the one-jet space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumPoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub z: f64,
}

/// Per-segment defect of `dz − Σ p_i dq_i` along a sampled path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LegendrianReport {
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    /// Segments on which `Δp·Δq < 0` (a branch change along the path).
    pub non_monotone_segments: Vec<usize>,
}

impl MaxEntProblem {
    /// Tabulates the observables; `lam0` must have unit mass and
    /// `{1, F_1, …, F_N}` must pass the Gram check.
    pub fn new(lam0: &ContactForm, sys: &ObservableSystem, grid: &Grid) -> Result<Self> {
        let report = check_observables(lam0, sys, true, grid);
        if !report.pass {
            return Err(Error::InvalidInput(format!(
                "observables {{1, {}}} are numerically dependent (min Gram eigenvalue {:e})",
                sys.labels().join(", "),
                report.min_eigenvalue
            )));
        }
        Self::build(lam0, sys.observables().to_vec(), grid)
    }

    /// The problem with no non-constant observable.
    pub fn volume_only(lam0: &ContactForm, grid: &Grid) -> Result<Self> {
        Self::build(lam0, Vec::new(), grid)
    }

    fn build(lam0: &ContactForm, observables: Vec<ScalarField>, grid: &Grid) -> Result<Self> {
        let v = mass(lam0, grid)?;
        if (v - 1.0).abs() >= 1e-10 {
            return Err(Error::InvalidInput(format!("reference form must be normalized, V = {v}")));
        }
        let weight = grid.weight();
        let base_weights: Vec<f64> = density_values(lam0, grid)?.into_iter().map(|r| r * weight).collect();
        let table = observables
            .iter()
            .map(|f| {
                let vals = grid.tabulate(|x| Ok(f.eval(x)))?;
                if vals.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteValue(format!("observable {}", f.label())));
                }
                Ok(vals)
            })
            .collect::<Result<_>>()?;
        Ok(MaxEntProblem {
            lam0: lam0.clone(),
            observables,
            grid: grid.clone(),
            targets: None,
            table,
            base_weights,
            p_step_max: 0.5,
        })
    }

    pub fn with_targets(mut self, q: Vec<f64>) -> Self {
        self.targets = Some(q);
        self
    }

    pub fn len(&self) -> usize {
        self.observables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observables.is_empty()
    }

    pub fn reference(&self) -> &ContactForm {
        &self.lam0
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn check_p(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.len() {
            return Err(Error::InvalidInput(format!("expected {} multipliers, got {}", self.len(), p.len())));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(format!("multipliers {p:?}")));
        }
        Ok(())
    }

    fn exponents(&self, p: &[f64]) -> Vec<f64> {
        (0..self.base_weights.len())
            .into_par_iter()
            .map(|k| p.iter().zip(&self.table).map(|(pi, row)| pi * row[k]).sum())
            .collect()
    }

    // Returns the max shift and the unnormalized shifted weights.
    fn shifted_weights(&self, p: &[f64]) -> Result<(f64, Vec<f64>)> {
        let e = self.exponents(p);
        let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
        for v in &e {
            hi = hi.max(*v);
            lo = lo.min(*v);
        }
        if !hi.is_finite() || !lo.is_finite() {
            return Err(Error::NonFiniteValue(format!("exponent Σ p_i F_i at p = {p:?}")));
        }
        if hi - lo > EXP_RANGE {
            return Err(Error::Overflow(format!("exponent range {:e} at p = {p:?} exceeds {EXP_RANGE}", hi - lo)));
        }
        let u = e.par_iter().zip(&self.base_weights).map(|(v, b)| (v - hi).exp() * b).collect();
        Ok((hi, u))
    }

    fn moments(&self, u: &[f64], z: f64) -> (Vec<f64>, DMatrix<f64>) {
        let n = self.len();
        let q: Vec<f64> = (0..n)
            .map(|i| pairwise_sum(&u.iter().zip(&self.table[i]).map(|(a, f)| a * f).collect::<Vec<_>>()) / z)
            .collect();
        let mut cov = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let terms: Vec<f64> =
                    (0..u.len()).map(|k| u[k] * (self.table[i][k] - q[i]) * (self.table[j][k] - q[j])).collect();
                let c = pairwise_sum(&terms) / z;
                cov[(i, j)] = c;
                cov[(j, i)] = c;
            }
        }
        (q, cov)
    }

    /// `w(p) = log ∫ exp(Σ p_i F_i) dμ_{λ₀}` with its first two derivatives.
    pub fn log_partition(&self, p: &[f64]) -> Result<LogPartition> {
        self.check_p(p)?;
        let (shift, u) = self.shifted_weights(p)?;
        let z = pairwise_sum(&u);
        let w = shift + z.ln();
        if !w.is_finite() {
            return Err(Error::NonFiniteValue(format!("log-partition at p = {p:?}")));
        }
        let (q, covariance) = self.moments(&u, z);
        Ok(LogPartition { w, q, covariance })
    }

    /// `∫ (−w + Σ p_i F_i) e^{−w + Σ p_i F_i} dμ_{λ₀}`.
    pub fn entropy_at(&self, p: &[f64], w: f64) -> Result<f64> {
        self.check_p(p)?;
        let e = self.exponents(p);
        let vals: Vec<f64> = e.iter().zip(&self.base_weights).map(|(v, b)| (v - w) * (v - w).exp() * b).collect();
        let s = pairwise_sum(&vals);
        if !s.is_finite() {
            return Err(Error::NonFiniteValue(format!("entropy at p = {p:?}")));
        }
        Ok(s)
    }

    fn check_targets(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.len() {
            return Err(Error::InvalidInput(format!("expected {} targets, got {}", self.len(), q.len())));
        }
        for (i, (qi, row)) in q.iter().zip(&self.table).enumerate() {
            let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !(*qi > lo && *qi < hi) {
                return Err(Error::NotAttainable(format!(
                    "target q_{} = {qi} lies outside the range ({lo}, {hi}) of {}",
                    i + 1,
                    self.observables[i].label()
                )));
            }
        }
        Ok(())
    }

    /// Solves for the stored targets.
    pub fn solve(&self) -> Result<MaxEntSolution> {
        let q = self.targets.clone().ok_or_else(|| Error::InvalidInput("no targets given".into()))?;
        self.solve_for(&q)
    }

    /// Damped Newton on `w(p) − ⟨p, q*⟩`.
    pub fn solve_for(&self, targets: &[f64]) -> Result<MaxEntSolution> {
        self.check_targets(targets)?;
        let tol = self.lam0.model().tol.clone();
        let n = self.len();
        let objective = |lp: &LogPartition, p: &[f64]| lp.w - dot(p, targets);
        let mut p = vec![0.0; n];
        let mut lp = self.log_partition(&p)?;
        let mut obj = objective(&lp, &p);
        let mut history = vec![obj];
        let mut iterations = 0;
        loop {
            let r: Vec<f64> = lp.q.iter().zip(targets).map(|(a, b)| a - b).collect();
            if r.iter().all(|v| v.abs() < tol.newton) {
                break;
            }
            if iterations == MAX_NEWTON {
                return Err(Error::NotAttainable(format!("Newton did not converge in {MAX_NEWTON} iterations")));
            }
            iterations += 1;
            let step = newton_step(&lp.covariance, &r, tol.cond)?;
            let slack = 8.0 * f64::EPSILON * (lp.w.abs() + dot(&p, targets).abs() + 1.0);
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..=MAX_HALVINGS {
                let trial: Vec<f64> = p.iter().zip(&step).map(|(a, s)| a + t * s).collect();
                if let Ok(tl) = self.log_partition(&trial) {
                    let o = objective(&tl, &trial);
                    if o <= obj + slack {
                        accepted = Some((trial, tl, o));
                        break;
                    }
                }
                t *= 0.5;
            }
            match accepted {
                Some((np, nl, o)) => {
                    p = np;
                    lp = nl;
                    obj = o.min(obj);
                    history.push(o);
                }
                None => {
                    return Err(Error::NotAttainable(format!(
                        "no descent after {MAX_HALVINGS} step halvings at p = {p:?}"
                    )))
                }
            }
        }
        self.finish(p, lp.w, lp.q, lp.covariance, iterations, history)
    }

    fn finish(
        &self,
        p: Vec<f64>,
        w: f64,
        q: Vec<f64>,
        covariance: DMatrix<f64>,
        iterations: usize,
        objective_history: Vec<f64>,
    ) -> Result<MaxEntSolution> {
        let entropy = self.entropy_at(&p, w)?;
        let density = self.density_field(&p, w);
        let equilibrium_form = self.equilibrium_form(&p, w);
        Ok(MaxEntSolution { p, w, q, entropy, covariance, iterations, objective_history, density, equilibrium_form })
    }

    fn density_field(&self, p: &[f64], w: f64) -> ScalarField {
        let (obs, pc) = (self.observables.clone(), p.to_vec());
        ScalarField::new("ρ_p", move |x| (-w + pc.iter().zip(&obs).map(|(pi, f)| pi * f.eval(x)).sum::<f64>()).exp())
    }

    fn equilibrium_form(&self, p: &[f64], w: f64) -> ContactForm {
        let np1 = (self.lam0.n() + 1) as f64;
        let (o1, o2, p1, p2) = (self.observables.clone(), self.observables.clone(), p.to_vec(), p.to_vec());
        let fd = self.lam0.fd().clone();
        let dim = self.lam0.dim();
        let exponent = move |x: &[f64], obs: &[ScalarField], pc: &[f64]| {
            (-w + pc.iter().zip(obs).map(|(pi, f)| pi * f.eval(x)).sum::<f64>()) / np1
        };
        let e2 = exponent;
        let f =
            ScalarField::new("exp((−w + Σ p_i F_i)/(n+1))", move |x| exponent(x, &o1, &p1).exp()).with_grad(move |x| {
                let s = e2(x, &o2, &p2).exp() / np1;
                let mut g = vec![0.0; dim];
                for (pi, fi) in p2.iter().zip(&o2) {
                    let gi = fi.grad(x, &fd).unwrap_or_else(|_| vec![f64::NAN; dim]);
                    for k in 0..dim {
                        g[k] += s * pi * gi[k];
                    }
                }
                g
            });
        self.lam0.rescaled(&f)
    }

    /// `(q(p), p, z(p))` along `path` with the Legendrian defect per segment.
    pub fn sweep(&self, path: &[Vec<f64>]) -> Result<(Vec<EquilibriumPoint>, LegendrianReport)> {
        for w in path.windows(2) {
            let d = w[0].iter().zip(&w[1]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if d > self.p_step_max {
                return Err(Error::InvalidInput(format!("path step {d} exceeds the step bound {}", self.p_step_max)));
            }
        }
        let points: Vec<EquilibriumPoint> = path
            .iter()
            .map(|p| {
                let lp = self.log_partition(p)?;
                Ok(EquilibriumPoint { q: lp.q, p: p.clone(), z: self.entropy_at(p, lp.w)? })
            })
            .collect::<Result<_>>()?;
        let mut residuals = Vec::with_capacity(points.len().saturating_sub(1));
        let mut non_monotone = Vec::new();
        for (k, s) in points.windows(2).enumerate() {
            let (a, b) = (&s[0], &s[1]);
            let mut r = b.z - a.z;
            let mut pq = 0.0;
            for i in 0..a.p.len() {
                let dq = b.q[i] - a.q[i];
                r -= 0.5 * (a.p[i] + b.p[i]) * dq;
                pq += (b.p[i] - a.p[i]) * dq;
            }
            if pq < 0.0 {
                non_monotone.push(k);
            }
            residuals.push(r.abs());
        }
        let max_residual = residuals.iter().cloned().fold(0.0, f64::max);
        Ok((points, LegendrianReport { residuals, max_residual, non_monotone_segments: non_monotone }))
    }

    /// Newton on `Φ(θ) = ∫ e^{θ₀ + Σ p_i F_i} dμ_{λ₀} − θ₀ − ⟨p, q*⟩`, where
    /// `θ₀` multiplies the volume constraint. At the optimum `θ₀ = −w`.
    pub fn equilibrium_with_volume(&self, targets: &[f64]) -> Result<MaxEntSolution> {
        if !self.is_empty() {
            self.check_targets(targets)?;
        } else if !targets.is_empty() {
            return Err(Error::InvalidInput("targets given without observables".into()));
        }
        let tol = self.lam0.model().tol.clone();
        let n = self.len();
        let g_targets: Vec<f64> = std::iter::once(1.0).chain(targets.iter().cloned()).collect();
        // Returns Φ, ∇Φ, ∇²Φ at θ.
        let eval = |theta: &[f64]| -> Result<(f64, Vec<f64>, DMatrix<f64>)> {
            let p = &theta[1..];
            let (shift, u) = self.shifted_weights(p)?;
            let scale = (theta[0] + shift).exp();
            if !scale.is_finite() {
                return Err(Error::Overflow(format!("e^(θ₀ + max) at θ = {theta:?}")));
            }
            let row = |i: usize| -> Vec<f64> {
                if i == 0 {
                    vec![1.0; u.len()]
                } else {
                    self.table[i - 1].clone()
                }
            };
            let rows: Vec<Vec<f64>> = (0..=n).map(row).collect();
            let m1: Vec<f64> = (0..=n)
                .map(|i| scale * pairwise_sum(&u.iter().zip(&rows[i]).map(|(a, f)| a * f).collect::<Vec<_>>()))
                .collect();
            let mut hess = DMatrix::zeros(n + 1, n + 1);
            for i in 0..=n {
                for j in i..=n {
                    let terms: Vec<f64> = (0..u.len()).map(|k| u[k] * rows[i][k] * rows[j][k]).collect();
                    let v = scale * pairwise_sum(&terms);
                    hess[(i, j)] = v;
                    hess[(j, i)] = v;
                }
            }
            let phi = m1[0] - dot(theta, &g_targets);
            let grad = m1.iter().zip(&g_targets).map(|(a, b)| a - b).collect();
            Ok((phi, grad, hess))
        };
        let mut theta = vec![0.0; n + 1];
        let (mut phi, mut grad, mut hess) = eval(&theta)?;
        let mut history = vec![phi];
        let mut iterations = 0;
        while !grad.iter().all(|v: &f64| v.abs() < tol.newton) {
            if iterations == MAX_NEWTON {
                return Err(Error::NotAttainable(format!("Newton did not converge in {MAX_NEWTON} iterations")));
            }
            iterations += 1;
            let step = newton_step(&hess, &grad, tol.cond)?;
            let slack = 8.0 * f64::EPSILON * (phi.abs() + 1.0);
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..=MAX_HALVINGS {
                let trial: Vec<f64> = theta.iter().zip(&step).map(|(a, s)| a + t * s).collect();
                if let Ok(r) = eval(&trial) {
                    if r.0 <= phi + slack {
                        accepted = Some((trial, r));
                        break;
                    }
                }
                t *= 0.5;
            }
            let Some((nt, (np, ng, nh))) = accepted else {
                return Err(Error::NotAttainable(format!("no descent after {MAX_HALVINGS} halvings")));
            };
            theta = nt;
            phi = np;
            grad = ng;
            hess = nh;
            history.push(phi);
        }
        let w = -theta[0];
        let p = theta[1..].to_vec();
        let q: Vec<f64> = grad[1..].iter().zip(targets).map(|(g, t)| g + t).collect();
        // Covariance from the unnormalized moments (total mass is 1 here).
        let mut cov = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                cov[(i, j)] = hess[(i + 1, j + 1)] - q[i] * q[j];
            }
        }
        self.finish(p, w, q, cov, iterations, history)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// −H⁻¹ r by Cholesky, refusing Hessians whose reciprocal condition number
// falls below `cond_tol`.
fn newton_step(h: &DMatrix<f64>, r: &[f64], cond_tol: f64) -> Result<Vec<f64>> {
    let eig = SymmetricEigen::new(h.clone()).eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(l, u), v| (l.min(*v), u.max(v.abs())));
    if !(lo > cond_tol * hi) || !(hi > 0.0) {
        return Err(Error::NotAttainable(format!("Hessian ill-conditioned (eigenvalues in [{lo:e}, {hi:e}])")));
    }
    let chol = h.clone().cholesky().ok_or_else(|| Error::NotAttainable("Hessian is not positive definite".into()))?;
    let s = chol.solve(&DVector::from_column_slice(r));
    Ok(s.iter().map(|v| -v).collect())
}
