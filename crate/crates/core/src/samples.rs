//! Seeded random smooth periodic fields with analytic derivatives, used by
//! the test batteries and the self-test.

use std::f64::consts::PI;

use rand::Rng;

use crate::fields::{OneForm, ScalarField, VectorField};

const TAU: f64 = 2.0 * PI;

/// `c·cos(2π x_axis)` with its gradient.
pub fn cos2pi(axis: usize, c: f64) -> ScalarField {
    ScalarField::new(format!("{c}*cos2pi[{axis}]"), move |x| c * (TAU * x[axis]).cos()).with_grad(move |x| {
        let mut g = vec![0.0; x.len()];
        g[axis] = -c * TAU * (TAU * x[axis]).sin();
        g
    })
}

/// `c·sin(2π x_axis)` with its gradient.
pub fn sin2pi(axis: usize, c: f64) -> ScalarField {
    ScalarField::new(format!("{c}*sin2pi[{axis}]"), move |x| c * (TAU * x[axis]).sin()).with_grad(move |x| {
        let mut g = vec![0.0; x.len()];
        g[axis] = c * TAU * (TAU * x[axis]).cos();
        g
    })
}

/// A finite Fourier sum `Σ c_j cos(2π k_j·x + φ_j)` with integer wave vectors.
#[derive(Debug, Clone)]
pub struct TrigSum {
    pub terms: Vec<(f64, Vec<f64>, f64)>,
}

impl TrigSum {
    pub fn random(rng: &mut impl Rng, dim: usize, amplitude: f64, nterms: usize) -> Self {
        let terms = (0..nterms)
            .map(|_| {
                let mut k: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1i32..=1) as f64).collect();
                if k.iter().all(|v| *v == 0.0) {
                    k[rng.gen_range(0..dim)] = 1.0;
                }
                let c = amplitude * rng.gen_range(-1.0..1.0) / nterms as f64;
                (c, k, rng.gen_range(0.0..TAU))
            })
            .collect();
        TrigSum { terms }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(c, k, p)| c * (TAU * dot(k, x) + p).cos()).sum()
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        for (c, k, p) in &self.terms {
            let s = -c * TAU * (TAU * dot(k, x) + p).sin();
            for (gi, ki) in g.iter_mut().zip(k) {
                *gi += s * ki;
            }
        }
        g
    }

    pub fn sup_bound(&self) -> f64 {
        self.terms.iter().map(|(c, _, _)| c.abs()).sum()
    }

    pub fn field(&self, label: &str) -> ScalarField {
        let (a, b) = (self.clone(), self.clone());
        ScalarField::new(label, move |x| a.eval(x)).with_grad(move |x| b.grad(x))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// A random smooth function with analytic gradient.
pub fn random_field(rng: &mut impl Rng, dim: usize, amplitude: f64) -> ScalarField {
    TrigSum::random(rng, dim, amplitude, 4).field("trig")
}

/// `exp(T)` for a random trigonometric sum `T` of size at most `amplitude`.
pub fn positive_field(rng: &mut impl Rng, dim: usize, amplitude: f64) -> ScalarField {
    let t = TrigSum::random(rng, dim, amplitude, 4);
    let (a, b) = (t.clone(), t);
    ScalarField::new("exp(trig)", move |x| a.eval(x).exp()).with_grad(move |x| {
        let e = b.eval(x).exp();
        b.grad(x).into_iter().map(|g| g * e).collect()
    })
}

fn random_components(rng: &mut impl Rng, dim: usize, amplitude: f64) -> Vec<TrigSum> {
    (0..dim).map(|_| TrigSum::random(rng, dim, amplitude, 3)).collect()
}

/// A random smooth vector field with analytic Jacobian.
pub fn random_vector_field(rng: &mut impl Rng, dim: usize, amplitude: f64) -> VectorField {
    let comps = random_components(rng, dim, amplitude);
    let parts = comps.iter().map(|c| c.field("trig")).collect();
    VectorField::from_components(parts)
}

/// A random smooth one-form with analytic Jacobian.
pub fn random_one_form(rng: &mut impl Rng, dim: usize, amplitude: f64) -> OneForm {
    let comps = random_components(rng, dim, amplitude);
    OneForm::from_components(comps.iter().map(|c| c.field("trig")).collect())
}

/// A uniformly random point in the box.
pub fn random_point(rng: &mut impl Rng, periods: &[f64]) -> Vec<f64> {
    periods.iter().map(|p| rng.gen_range(0.0..*p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Fd;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn analytic_derivatives_match_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fd = Fd::new(vec![1.0; 3]);
        let pts: Vec<Vec<f64>> = (0..20).map(|_| random_point(&mut rng, &[1.0; 3])).collect();
        for _ in 0..5 {
            assert!(random_field(&mut rng, 3, 1.0).gradient_consistency(&pts, &fd).unwrap() < 1e-5);
            assert!(positive_field(&mut rng, 3, 0.5).gradient_consistency(&pts, &fd).unwrap() < 1e-5);
            let v = random_vector_field(&mut rng, 3, 1.0);
            assert!(v.jacobian_consistency(&pts, &fd).unwrap() < 1e-8);
        }
        assert!(cos2pi(1, 2.0).gradient_consistency(&pts, &fd).unwrap() < 1e-5);
        assert!(sin2pi(2, 0.5).gradient_consistency(&pts, &fd).unwrap() < 1e-5);
    }

    #[test]
    fn positive_fields_are_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = positive_field(&mut rng, 3, 0.5);
        for _ in 0..200 {
            let x = random_point(&mut rng, &[1.0; 3]);
            assert!(f.eval(&x) > 0.0);
        }
    }
}
