//! Thermodynamic formalism for contact pairs: Birkhoff sums of the conformal
//! exponent, greedy `(N, ε)`-separated sets in the Bowen metric, partition
//! functions, finite-`N` pressure data and Gibbs-ratio diagnostics.
//!
//! Every number produced here is finite-`N` lower-bound data. Separated sets
//! are greedy maximal subsets of a candidate list in its given order, so the
//! partition function is a lower bound of the supremum over all sets.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{Grid, ScalarField};
use crate::flows::{conformal_exponent, conformal_factor_pullback, Diffeomorphism, FlowMap};
use crate::geometry::ContactForm;
use crate::linalg::pairwise_sum;

type Potential = Arc<dyn Fn(&[f64]) -> Result<f64> + Send + Sync>;

/// A contactomorphism `ψ` together with the form `λ` and `g_{(ψ;λ)}`.
#[derive(Clone)]
pub struct ContactPair {
    psi: Arc<dyn Diffeomorphism>,
    lam: ContactForm,
    g: Potential,
}

impl fmt::Debug for ContactPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ContactPair").field("psi", &self.psi.label()).field("lam", &self.lam.label()).finish()
    }
}

/// Deterministic points spread over the box (a Kronecker sequence).
pub fn validation_sample(periods: &[f64], count: usize) -> Vec<Vec<f64>> {
    const ALPHA: [f64; 7] = [
        0.618_033_988_749_894_9,
        0.414_213_562_373_095_1,
        0.732_050_807_568_877_2,
        0.236_067_977_499_789_7,
        0.645_751_311_064_590_6,
        0.316_624_790_355_399_9,
        0.605_551_275_463_989_3,
    ];
    (0..count)
        .map(|k| {
            periods
                .iter()
                .enumerate()
                .map(|(i, p)| p * ((k as f64 + 0.5) * ALPHA[i % ALPHA.len()] + 0.1 * i as f64).fract())
                .collect()
        })
        .collect()
}

impl ContactPair {
    /// `g` from the pullback route. Fails unless `ψ` is a contactomorphism of
    /// `ξ = ker λ` on a validation sample.
    pub fn new(lam: &ContactForm, psi: Arc<dyn Diffeomorphism>) -> Result<Self> {
        let (l, p) = (lam.clone(), psi.clone());
        let g: Potential = Arc::new(move |x| conformal_exponent(&l, p.as_ref(), x));
        let pair = ContactPair { psi, lam: lam.clone(), g };
        pair.validate()?;
        Ok(pair)
    }

    /// For a flow map, `g` is the integrated potential along each trajectory.
    pub fn from_flow(fm: FlowMap) -> Result<Self> {
        let lam = fm.form().clone();
        let f2 = fm.clone();
        let g: Potential = Arc::new(move |x| f2.integrated_potential(x));
        let pair = ContactPair { psi: Arc::new(fm), lam, g };
        pair.validate()?;
        Ok(pair)
    }

    fn validate(&self) -> Result<()> {
        let model = self.lam.model();
        for x in validation_sample(model.periods(), 4) {
            conformal_factor_pullback(&self.lam, self.psi.as_ref(), &x)?;
            let g = (self.g)(&x)?;
            if !g.is_finite() {
                return Err(Error::NonFiniteValue(format!("potential at {x:?}")));
            }
        }
        Ok(())
    }

    pub fn form(&self) -> &ContactForm {
        &self.lam
    }

    pub fn map(&self) -> &Arc<dyn Diffeomorphism> {
        &self.psi
    }

    /// `g_{(ψ;λ)}(x)`.
    pub fn potential(&self, x: &[f64]) -> Result<f64> {
        (self.g)(&self.lam.model().canonicalize(x))
    }

    /// `ψ(x)` wrapped into the box.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.lam.model().canonicalize(&self.psi.lift(x)?))
    }

    /// `x, ψx, …, ψᴺx`, wrapped.
    pub fn orbit(&self, x: &[f64], n: usize) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(n + 1);
        out.push(self.lam.model().canonicalize(x));
        for k in 0..n {
            let y = self.apply(&out[k])?;
            out.push(y);
        }
        Ok(out)
    }

    fn n_plus_1(&self) -> f64 {
        (self.lam.n() + 1) as f64
    }
}

/// `S_N g(x) = Σ_{k=1}^{N} g(ψ^{k−1} x)`.
pub fn birkhoff_sum(pair: &ContactPair, n: usize, x: &[f64]) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("Birkhoff sums need N ≥ 1".into()));
    }
    let orbit = pair.orbit(x, n - 1)?;
    let g: Vec<f64> = orbit.iter().map(|y| pair.potential(y)).collect::<Result<_>>()?;
    Ok(g.iter().sum())
}

/// Orbits `ψᵏx`, `0 ≤ k ≤ n_max`, of a candidate list, stored flat.
pub struct OrbitTable {
    pair: ContactPair,
    candidates: Vec<Vec<f64>>,
    n_max: usize,
    dim: usize,
    points: Vec<f64>,
}

impl OrbitTable {
    pub fn new(pair: &ContactPair, candidates: Vec<Vec<f64>>, n_max: usize) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::InvalidInput("empty candidate list".into()));
        }
        let dim = pair.lam.dim();
        let orbits: Vec<Vec<Vec<f64>>> = candidates.par_iter().map(|x| pair.orbit(x, n_max)).collect::<Result<_>>()?;
        let points = orbits.into_iter().flatten().flatten().collect();
        Ok(OrbitTable { pair: pair.clone(), candidates, n_max, dim, points })
    }

    /// Orbits of every grid node.
    pub fn on_grid(pair: &ContactPair, grid: &Grid, n_max: usize) -> Result<Self> {
        Self::new(pair, grid.nodes().collect(), n_max)
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn candidate(&self, i: usize) -> &[f64] {
        &self.candidates[i]
    }

    fn at(&self, i: usize, k: usize) -> &[f64] {
        let s = (i * (self.n_max + 1) + k) * self.dim;
        &self.points[s..s + self.dim]
    }

    fn check_n(&self, n: usize) -> Result<()> {
        if n > self.n_max {
            return Err(Error::InvalidInput(format!("N = {n} exceeds the tabulated orbit length {}", self.n_max)));
        }
        Ok(())
    }

    /// `d_{(ψ,N)}(x_i, x_j) = max_{0≤k≤N} d(ψᵏx_i, ψᵏx_j)`.
    pub fn bowen_distance(&self, i: usize, j: usize, n: usize) -> f64 {
        let model = self.pair.lam.model();
        (0..=n).map(|k| model.distance(self.at(i, k), self.at(j, k))).fold(0.0, f64::max)
    }

    fn bowen_exceeds(&self, i: usize, j: usize, n: usize, eps: f64) -> bool {
        let model = self.pair.lam.model();
        (0..=n).any(|k| model.distance(self.at(i, k), self.at(j, k)) > eps)
    }

    /// Greedy maximal `(N, ε)`-separated subset, as candidate indices.
    pub fn separated(&self, n: usize, eps: f64) -> Result<Vec<usize>> {
        self.check_n(n)?;
        if !(eps > 0.0) {
            return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
        }
        let periods = self.pair.lam.model().periods().to_vec();
        // d_{(ψ,N)} ≥ d at k = 0, so only accepted points in neighbouring
        // cells of side ≥ ε can be within ε.
        let cells: Vec<i64> = periods.iter().map(|p| ((p / eps).floor() as i64).max(1)).collect();
        let cell_of = |x: &[f64]| -> Vec<i64> {
            x.iter()
                .zip(&periods)
                .zip(&cells)
                .map(|((v, p), m)| (((v / p) * *m as f64).floor() as i64).clamp(0, m - 1))
                .collect()
        };
        let offsets = neighbour_offsets(&cells);
        let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        let mut accepted = Vec::new();
        for i in 0..self.len() {
            let c = cell_of(self.at(i, 0));
            let mut ok = true;
            'search: for off in &offsets {
                let key: Vec<i64> = c.iter().zip(off).zip(&cells).map(|((a, o), m)| (a + o).rem_euclid(*m)).collect();
                if let Some(members) = buckets.get(&key) {
                    for &j in members {
                        if !self.bowen_exceeds(i, j, n, eps) {
                            ok = false;
                            break 'search;
                        }
                    }
                }
            }
            if ok {
                buckets.entry(c).or_default().push(i);
                accepted.push(i);
            }
        }
        Ok(accepted)
    }

    /// `Σ_{k=1}^{N} g(ψ^{k−1} x_i)` from the stored orbit.
    pub fn birkhoff(&self, i: usize, n: usize) -> Result<f64> {
        self.check_n(n)?;
        let g: Vec<f64> = (0..n).map(|k| self.pair.potential(self.at(i, k))).collect::<Result<_>>()?;
        Ok(g.iter().sum())
    }

    /// `Z_N(β, ε)` over the greedy set as `(shift, sum, |E|)` with
    /// `Z = e^shift · sum`; at `β = 0` the shift is 0 and the sum is `|E|`.
    fn shifted_partition(&self, n: usize, eps: f64, beta: f64) -> Result<(f64, f64, usize)> {
        let set = self.separated(n, eps)?;
        let c = -beta * self.pair.n_plus_1();
        let expo: Vec<f64> = if beta == 0.0 {
            vec![0.0; set.len()]
        } else {
            set.par_iter().map(|&i| Ok(c * self.birkhoff(i, n)?)).collect::<Result<_>>()?
        };
        let m = expo.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return Err(Error::NonFiniteValue("Birkhoff sums".into()));
        }
        let s: Vec<f64> = expo.iter().map(|e| (e - m).exp()).collect();
        Ok((m, pairwise_sum(&s), set.len()))
    }

    /// `log Z_N(β, ε)` over the greedy set, with the set size.
    pub fn log_partition(&self, n: usize, eps: f64, beta: f64) -> Result<(f64, usize)> {
        let (m, s, k) = self.shifted_partition(n, eps, beta)?;
        Ok((m + s.ln(), k))
    }

    /// `Z_N(β, ε)`, `log Z_N` and `|E|`.
    pub fn partition(&self, n: usize, eps: f64, beta: f64) -> Result<(f64, f64, usize)> {
        let (m, s, k) = self.shifted_partition(n, eps, beta)?;
        let z = m.exp() * s;
        if !z.is_finite() {
            return Err(Error::Overflow(format!("Z_{n} overflows (log Z = {})", m + s.ln())));
        }
        Ok((z, m + s.ln(), k))
    }
}

fn neighbour_offsets(cells: &[i64]) -> Vec<Vec<i64>> {
    let mut out: Vec<Vec<i64>> = vec![vec![]];
    for m in cells {
        // With fewer than three cells the wrapped neighbours repeat.
        let range: Vec<i64> = match m {
            1 => vec![0],
            2 => vec![0, 1],
            _ => vec![-1, 0, 1],
        };
        out = out
            .into_iter()
            .flat_map(|o| {
                range.iter().map(move |r| {
                    let mut v = o.clone();
                    v.push(*r);
                    v
                })
            })
            .collect();
    }
    out
}

/// Greedy maximal `(N, ε)`-separated subset of `candidates`.
pub fn separated_set(pair: &ContactPair, n: usize, eps: f64, candidates: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let table = OrbitTable::new(pair, candidates.to_vec(), n)?;
    Ok(table.separated(n, eps)?.into_iter().map(|i| table.candidate(i).to_vec()).collect())
}

/// `Z_N(β, ε) = Σ_{x∈E} exp(−β(n+1) S_N g(x))` over the greedy set `E`.
pub fn partition_function(pair: &ContactPair, n: usize, eps: f64, beta: f64, candidates: &[Vec<f64>]) -> Result<f64> {
    let table = OrbitTable::new(pair, candidates.to_vec(), n)?;
    Ok(table.partition(n, eps, beta)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PressureRow {
    pub n: usize,
    pub set_size: usize,
    pub z: f64,
    pub log_z: f64,
    pub rate: f64,
}

/// `(1/N) log Z_N(β, ε)` along an increasing list of `N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PressureEstimate {
    pub beta: f64,
    pub eps: f64,
    pub per_n: Vec<PressureRow>,
    /// The rate at the largest `N`.
    pub extrapolated: f64,
    /// Whether the rates are nonincreasing in `N`.
    pub monotone: bool,
}

pub fn pressure_estimate(
    pair: &ContactPair,
    beta: f64,
    eps: f64,
    n_list: &[usize],
    candidates: &[Vec<f64>],
) -> Result<PressureEstimate> {
    let n_max = check_n_list(n_list)?;
    let table = OrbitTable::new(pair, candidates.to_vec(), n_max)?;
    pressure_from_table(&table, beta, eps, n_list)
}

fn check_n_list(n_list: &[usize]) -> Result<usize> {
    if n_list.is_empty() || n_list[0] == 0 || n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(format!("N list must be positive and strictly increasing, got {n_list:?}")));
    }
    Ok(*n_list.last().unwrap())
}

/// [`pressure_estimate`] on precomputed orbits.
pub fn pressure_from_table(table: &OrbitTable, beta: f64, eps: f64, n_list: &[usize]) -> Result<PressureEstimate> {
    check_n_list(n_list)?;
    let per_n: Vec<PressureRow> = n_list
        .iter()
        .map(|&n| {
            let (z, log_z, set_size) = table.partition(n, eps, beta)?;
            Ok(PressureRow { n, set_size, z, log_z, rate: log_z / n as f64 })
        })
        .collect::<Result<_>>()?;
    let monotone = per_n.windows(2).all(|w| w[1].rate <= w[0].rate);
    Ok(PressureEstimate { beta, eps, extrapolated: per_n.last().unwrap().rate, per_n, monotone })
}

fn test_battery(dim: usize) -> Vec<ScalarField> {
    let mut out = Vec::new();
    for i in 0..dim {
        out.push(crate::samples::cos2pi(i, 1.0));
        out.push(crate::samples::sin2pi(i, 1.0));
    }
    for i in 0..dim {
        for j in i + 1..dim {
            out.push(ScalarField::new(format!("cos2pi[{i}+{j}]"), move |x: &[f64]| {
                (2.0 * std::f64::consts::PI * (x[i] + x[j])).cos()
            }));
        }
    }
    out
}

/// Largest `|∫ φ∘ψ dν − ∫ φ dν|` over a fixed trigonometric battery.
pub fn invariance_defect(pair: &ContactPair, nu_density: &ScalarField, grid: &Grid) -> Result<f64> {
    let w = grid.weight();
    let rows: Vec<(f64, Vec<f64>)> = grid.tabulate(|x| Ok((nu_density.eval(x), pair.apply(x)?)))?;
    let battery = test_battery(grid.dim());
    let mut worst: f64 = 0.0;
    for phi in &battery {
        let diff: Vec<f64> =
            grid.nodes().zip(&rows).map(|(x, (nu, y))| (phi.eval(y) - phi.eval(&x)) * nu * w).collect();
        worst = worst.max(pairwise_sum(&diff).abs());
    }
    Ok(worst)
}

/// `h_ν − β(n+1) ∫ g dν`, one supporting line of the pressure.
pub fn variational_bound(
    pair: &ContactPair,
    nu_density: &ScalarField,
    h_nu: f64,
    beta: f64,
    grid: &Grid,
) -> Result<f64> {
    let tol = pair.lam.model().tol.inv;
    let total = crate::fields::integrate(grid, |x| nu_density.eval(x))?;
    if (total - 1.0).abs() > tol {
        return Err(Error::InvalidInput(format!("ν has total mass {total}, expected 1")));
    }
    let defect = invariance_defect(pair, nu_density, grid)?;
    if !(defect < tol) {
        return Err(Error::NotInvariant { defect, tol });
    }
    if beta == 0.0 {
        return Ok(h_nu);
    }
    let mean_g = crate::fields::try_integrate(grid, |x| Ok(pair.potential(x)? * nu_density.eval(x)))?;
    Ok(h_nu - beta * pair.n_plus_1() * mean_g)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GibbsSample {
    pub center: Vec<f64>,
    pub n: usize,
    pub nodes: usize,
    pub ball_mass: f64,
    pub ratio: f64,
}

/// Empirical Gibbs constants over sampled Bowen balls.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GibbsReport {
    pub beta: f64,
    pub eps: f64,
    pub p: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub samples: Vec<GibbsSample>,
}

/// `μ(B_{(N,ε)}(x)) / exp(−β(n+1) S_N g(x) − N P)` for every center and `N`,
/// with ball masses by quadrature over the grid nodes inside each ball.
#[allow(clippy::too_many_arguments)]
pub fn gibbs_diagnostic(
    pair: &ContactPair,
    mu_density: &ScalarField,
    beta: f64,
    p: f64,
    eps: f64,
    n_list: &[usize],
    centers: &[Vec<f64>],
    grid: &Grid,
) -> Result<GibbsReport> {
    let n_max = check_n_list(n_list)?;
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
    }
    let nodes = OrbitTable::on_grid(pair, grid, n_max)?;
    let w = grid.weight();
    let mu: Vec<f64> = grid.tabulate(|x| Ok(mu_density.eval(x) * w))?;
    let centers_table = OrbitTable::new(pair, centers.to_vec(), n_max)?;
    let model = pair.lam.model();
    let np1 = pair.n_plus_1();
    let jobs: Vec<(usize, usize)> = (0..centers.len()).flat_map(|c| n_list.iter().map(move |&n| (c, n))).collect();
    let samples: Vec<GibbsSample> = jobs
        .par_iter()
        .map(|&(c, n)| {
            let inside: Vec<f64> = (0..nodes.len())
                .filter(|&i| (0..=n).all(|k| model.distance(nodes.at(i, k), centers_table.at(c, k)) <= eps))
                .map(|i| mu[i])
                .collect();
            if inside.is_empty() {
                return Err(Error::EmptyBall { center: centers[c].clone(), n });
            }
            let ball_mass = pairwise_sum(&inside);
            let s = if beta == 0.0 { 0.0 } else { centers_table.birkhoff(c, n)? };
            let ratio = ball_mass / (-beta * np1 * s - n as f64 * p).exp();
            Ok(GibbsSample { center: centers[c].clone(), n, nodes: inside.len(), ball_mass, ratio })
        })
        .collect::<Result<_>>()?;
    let ratio_min = samples.iter().map(|s| s.ratio).fold(f64::INFINITY, f64::min);
    let ratio_max = samples.iter().map(|s| s.ratio).fold(f64::NEG_INFINITY, f64::max);
    Ok(GibbsReport { beta, eps, p, ratio_min, ratio_max, samples })
}

/// Defect of `g_{(ψ;uλ)} = log u∘ψ − log u + g_{(ψ;λ)}` on a sample.
pub fn coboundary_defect(pair: &ContactPair, u: &ScalarField, sample: &[Vec<f64>]) -> Result<f64> {
    let lam2 = pair.lam.rescaled(u);
    let model = pair.lam.model();
    let defects: Vec<f64> = sample
        .par_iter()
        .map(|x| {
            let x = model.canonicalize(x);
            let g2 = conformal_exponent(&lam2, pair.psi.as_ref(), &x)?;
            let y = pair.apply(&x)?;
            let expected = u.eval(&y).ln() - u.eval(&x).ln() + pair.potential(&x)?;
            Ok((g2 - expected).abs())
        })
        .collect::<Result<_>>()?;
    Ok(defects.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::{Identity, Power, Translation};
    use crate::geometry::ContactModel;
    use crate::samples;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn base() -> ContactForm {
        ContactForm::base(&Arc::new(ContactModel::torus3()))
    }

    fn identity_pair() -> ContactPair {
        ContactPair::new(&base(), Arc::new(Identity { dim: 3 })).unwrap()
    }

    fn reeb_pair() -> ContactPair {
        ContactPair::from_flow(FlowMap::reeb(&base(), 1.0, 0.25).unwrap()).unwrap()
    }

    fn grid_points(res: usize) -> Vec<Vec<f64>> {
        Grid::uniform(res, &[1.0; 3]).unwrap().nodes().collect()
    }

    // Plain greedy loop against every accepted point.
    fn brute_force(pair: &ContactPair, n: usize, eps: f64, cands: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let model = pair.form().model().clone();
        let orbits: Vec<Vec<Vec<f64>>> = cands.iter().map(|x| pair.orbit(x, n).unwrap()).collect();
        let mut keep: Vec<usize> = Vec::new();
        for i in 0..cands.len() {
            let far = keep
                .iter()
                .all(|&j| (0..=n).map(|k| model.distance(&orbits[i][k], &orbits[j][k])).fold(0.0, f64::max) > eps);
            if far {
                keep.push(i);
            }
        }
        keep.into_iter().map(|i| cands[i].clone()).collect()
    }

    #[test]
    fn birkhoff_examples() {
        let id = identity_pair();
        assert_eq!(birkhoff_sum(&id, 1, &[0.1, 0.2, 0.3]).unwrap(), 0.0);
        let reeb = reeb_pair();
        for n in [1, 4, 8] {
            assert!(birkhoff_sum(&reeb, n, &[0.3, 0.7, 0.2]).unwrap().abs() < n as f64 * 1e-7);
        }
        let lam = base();
        let fm = FlowMap::new(&lam, samples::cos2pi(0, 1.0), 1.0, 1e-2).unwrap();
        let pair = ContactPair::from_flow(fm.clone()).unwrap();
        let x = [0.13, 0.4, 0.71];
        assert_eq!(birkhoff_sum(&pair, 1, &x).unwrap(), pair.potential(&x).unwrap());
        let base_map: Arc<dyn Diffeomorphism> = Arc::new(fm);
        for n in [2, 3] {
            let s = birkhoff_sum(&pair, n, &x).unwrap();
            let g = conformal_exponent(&lam, &Power { base: base_map.clone(), n }, &x).unwrap();
            assert!((s - g).abs() < n as f64 * 1e-3, "{s} vs {g}");
        }
    }

    #[test]
    fn identity_separated_sets() {
        let id = identity_pair();
        let cands = grid_points(16);
        assert_eq!(separated_set(&id, 1, 2.0, &cands).unwrap().len(), 1);
        let e = separated_set(&id, 1, 0.49, &cands).unwrap();
        assert_eq!(e, brute_force(&id, 1, 0.49, &cands));
        assert_eq!(e.len(), 8);
    }

    #[test]
    fn greedy_matches_brute_force_and_is_separated() {
        let pair = reeb_pair();
        let cands = grid_points(8);
        for (n, eps) in [(1, 0.3), (3, 0.2), (4, 0.15)] {
            let table = OrbitTable::new(&pair, cands.clone(), n).unwrap();
            let idx = table.separated(n, eps).unwrap();
            for a in 0..idx.len() {
                for b in a + 1..idx.len() {
                    assert!(table.bowen_distance(idx[a], idx[b], n) > eps);
                }
            }
            let pts: Vec<Vec<f64>> = idx.iter().map(|&i| cands[i].clone()).collect();
            assert_eq!(pts, brute_force(&pair, n, eps, &cands));
        }
    }

    #[test]
    fn set_sizes_grow_with_n_and_shrink_with_eps() {
        let pair = reeb_pair();
        let table = OrbitTable::new(&pair, grid_points(8), 6).unwrap();
        let sizes: Vec<usize> = (1..=6).map(|n| table.separated(n, 0.2).unwrap().len()).collect();
        assert!(sizes.windows(2).all(|w| w[1] >= w[0]), "{sizes:?}");
        let z: Vec<f64> = [0.1, 0.2, 0.3].iter().map(|e| table.log_partition(3, *e, 0.7).unwrap().0).collect();
        assert!(z[0] >= z[1] && z[1] >= z[2]);
    }

    #[test]
    fn partition_function_examples() {
        let pair = reeb_pair();
        let cands = grid_points(8);
        let table = OrbitTable::new(&pair, cands.clone(), 4).unwrap();
        let k = table.separated(4, 0.2).unwrap().len() as f64;
        assert_eq!(partition_function(&pair, 4, 0.2, 0.0, &cands).unwrap(), k);
        let z = partition_function(&pair, 4, 0.2, 1.3, &cands).unwrap();
        assert!((z - k).abs() < k * 4.0 * 1e-6, "{z} vs {k}");
    }

    #[test]
    fn log_partition_is_convex_in_beta() {
        let lam = base();
        let pair = ContactPair::from_flow(FlowMap::new(&lam, samples::cos2pi(0, 1.0), 1.0, 1e-2).unwrap()).unwrap();
        let table = OrbitTable::new(&pair, grid_points(6), 2).unwrap();
        let l: Vec<f64> = [-1.0, 0.0, 1.0].iter().map(|b| table.log_partition(2, 0.2, *b).unwrap().0).collect();
        assert!(l[1] <= 0.5 * (l[0] + l[2]) + 1e-10);
    }

    #[test]
    fn identity_pressure_counts_only() {
        let id = identity_pair();
        let est = pressure_estimate(&id, 0.0, 0.3, &[1, 2, 4], &grid_points(8)).unwrap();
        let k = est.per_n[0].set_size as f64;
        for row in &est.per_n {
            assert_eq!(row.z, k);
            assert!((row.rate - k.ln() / row.n as f64).abs() < 1e-15);
        }
        assert!(est.monotone);
        assert!(pressure_estimate(&id, 0.0, 0.3, &[2, 1], &grid_points(4)).is_err());
    }

    #[test]
    fn variational_bound_examples() {
        let pair = reeb_pair();
        let grid = Grid::uniform(16, &[1.0; 3]).unwrap();
        let lam = pair.form().clone();
        let v = crate::entropy::mass(&lam, &grid).unwrap();
        let nu = {
            let l = lam.clone();
            ScalarField::new("μ/V", move |x| l.density(x).unwrap() / v)
        };
        for beta in [-1.0, 0.0, 2.0] {
            assert!(variational_bound(&pair, &nu, 0.0, beta, &grid).unwrap().abs() < 1e-12);
        }
        assert_eq!(variational_bound(&pair, &nu, 0.7, 0.0, &grid).unwrap(), 0.7);
        let lump = ScalarField::new("lump", |x: &[f64]| 1.0 + 0.5 * (2.0 * std::f64::consts::PI * x[0]).cos());
        assert!(matches!(variational_bound(&pair, &lump, 0.0, 1.0, &grid), Err(Error::NotInvariant { .. })));
    }

    #[test]
    fn gibbs_identity_is_homogeneous() {
        let id = identity_pair();
        let grid = Grid::uniform(16, &[1.0; 3]).unwrap();
        let uniform = ScalarField::constant(1.0, 3);
        let centers = validation_sample(&[1.0; 3], 5);
        let rep = gibbs_diagnostic(&id, &uniform, 1.0, 0.0, 0.2, &[1, 2], &centers, &grid).unwrap();
        assert!(rep.ratio_min <= rep.ratio_max);
        assert!(rep.ratio_max / rep.ratio_min < 1.5, "{rep:?}");
        let snapped: Vec<Vec<f64>> = vec![vec![0.0; 3], vec![0.25, 0.5, 0.75]];
        let rep = gibbs_diagnostic(&id, &uniform, 1.0, 0.0, 0.2, &[1], &snapped, &grid).unwrap();
        assert_eq!(rep.ratio_min, rep.ratio_max);
        assert!(matches!(
            gibbs_diagnostic(&id, &uniform, 0.0, 0.0, 0.01, &[1], &[vec![0.03, 0.03, 0.03]], &grid),
            Err(Error::EmptyBall { .. })
        ));
    }

    #[test]
    fn gibbs_ignores_potential_at_zero_beta() {
        let lam = base();
        let pair = ContactPair::from_flow(FlowMap::new(&lam, samples::cos2pi(0, 1.0), 0.5, 1e-2).unwrap()).unwrap();
        let grid = Grid::uniform(16, &[1.0; 3]).unwrap();
        let uniform = ScalarField::constant(1.0, 3);
        let centers = validation_sample(&[1.0; 3], 3);
        let a = gibbs_diagnostic(&pair, &uniform, 0.0, 0.0, 0.25, &[1], &centers, &grid).unwrap();
        for s in &a.samples {
            assert_eq!(s.ratio, s.ball_mass);
        }
    }

    #[test]
    fn coboundary_relation() {
        let lam = base();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = samples::positive_field(&mut rng, 3, 0.5);
        let pair = ContactPair::new(&lam, Arc::new(Translation { shift: vec![0.3, 0.6, 0.0] })).unwrap();
        let pts = validation_sample(&[1.0; 3], 6);
        assert!(coboundary_defect(&pair, &u, &pts).unwrap() < 1e-8);
        let flow = ContactPair::from_flow(FlowMap::new(&lam, samples::cos2pi(0, 1.0), 0.5, 1e-2).unwrap()).unwrap();
        assert!(coboundary_defect(&flow, &u, &pts[..3]).unwrap() < 1e-4);
    }
}
