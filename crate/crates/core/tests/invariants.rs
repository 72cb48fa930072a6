use std::f64::consts::TAU;
use std::sync::Arc;

use contact_thermo::entropy::{mass, normalize, relative_entropy};
use contact_thermo::fields::ObservableSystem;
use contact_thermo::flows::{conformal_exponent, FlowMap, Identity};
use contact_thermo::geometry::{reeb_field_with_residual, ContactForm, ContactModel};
use contact_thermo::maxent::MaxEntProblem;
use contact_thermo::pressure::{ContactPair, OrbitTable};
use contact_thermo::samples;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn torus() -> Arc<ContactModel> {
    Arc::new(ContactModel::torus3())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn mass_is_quadratic_in_constant_scale(c in 0.1f64..5.0) {
        let m = torus();
        let g = m.grid(16).unwrap();
        let v = mass(&ContactForm::base(&m).times(c), &g).unwrap();
        prop_assert!((v - c * c * TAU).abs() < 1e-10 * c * c);
    }

    #[test]
    fn equal_mass_entropy_is_nonnegative(seed in any::<u64>(), amp in 0.05f64..0.9) {
        let m = torus();
        let g = m.grid(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, _) = normalize(&ContactForm::scaled(&m, samples::positive_field(&mut rng, 3, amp)), &g).unwrap();
        let (b, _) = normalize(&ContactForm::scaled(&m, samples::positive_field(&mut rng, 3, amp)), &g).unwrap();
        prop_assert!(relative_entropy(&a, &b, &g).unwrap() >= -1e-10);
    }

    #[test]
    fn reeb_field_solves_its_equations(seed in any::<u64>(), x in prop::array::uniform3(0.0f64..1.0)) {
        let m = torus();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lam = ContactForm::scaled(&m, samples::positive_field(&mut rng, 3, 0.6));
        let (r, res) = reeb_field_with_residual(&lam, &x).unwrap();
        prop_assert!(res < 1e-6);
        let a = lam.coefficients(&x);
        let pairing: f64 = a.iter().zip(&r).map(|(u, v)| u * v).sum();
        prop_assert!((pairing - 1.0).abs() < 1e-6);
    }

    #[test]
    fn identity_has_zero_exponent(x in prop::array::uniform3(0.0f64..1.0)) {
        let m = torus();
        let lam = ContactForm::base(&m);
        prop_assert_eq!(conformal_exponent(&lam, &Identity { dim: 3 }, &x).unwrap(), 0.0);
    }

    #[test]
    fn maxent_inverts_moment_map(p in prop::array::uniform2(-2.0f64..2.0)) {
        let m = torus();
        let g = m.grid(32).unwrap();
        let (lam0, _) = normalize(&ContactForm::base(&m), &g).unwrap();
        let sys = ObservableSystem::new(vec![samples::cos2pi(0, 1.0), samples::sin2pi(1, 1.0)]).unwrap();
        let prob = MaxEntProblem::new(&lam0, &sys, &g).unwrap();
        let q = prob.log_partition(&p).unwrap().q;
        let sol = prob.solve_for(&q).unwrap();
        for (got, want) in sol.p.iter().zip(&p) {
            prop_assert!((got - want).abs() < 1e-8);
        }
        prop_assert!(sol.entropy >= -1e-12);
    }

    #[test]
    fn separated_sets_are_separated_and_maximal(eps in 0.15f64..0.45, n in 1usize..3) {
        let m = torus();
        let lam = ContactForm::base(&m);
        let fm = FlowMap::new(&lam, samples::cos2pi(0, 1.0), 0.1, 1e-2).unwrap();
        let pair = ContactPair::from_flow(fm).unwrap();
        let table = OrbitTable::on_grid(&pair, &m.grid(6).unwrap(), n).unwrap();
        let set = table.separated(n, eps).unwrap();
        for (a, &i) in set.iter().enumerate() {
            for &j in &set[a + 1..] {
                prop_assert!(table.bowen_distance(i, j, n) > eps);
            }
        }
        for c in 0..table.len() {
            prop_assert!(set.iter().any(|&i| table.bowen_distance(i, c, n) <= eps));
        }
    }
}
