use num_complex::Complex64;
use num_rational::BigRational;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spnf::bounds::random_gevrey_state;
use spnf::dynamics::{mass, momentum, Nlsp, Scheme};
use spnf::gauss::{ratio, GaussRat};
use spnf::gevrey::{sqrt_gap, FourierState, GevreyParams};
use spnf::modespace::{enumerate, enumerate_resonant, Family, ModeIndex, MultiIndex, DEFAULT_BUDGET};
use spnf::polyham::{action_bracket, build_l2, build_l4, random_real_polynomial, PolynomialHamiltonian};
use spnf::rathom::{omega, omega_coeffs, random_rational};
use spnf::resonance_sampler::{BallSampler, MeasureConfig, MeasureSamples, ThetaSet};

fn entries() -> impl Strategy<Value = Vec<ModeIndex>> {
    prop::collection::vec((any::<bool>(), -5i64..=5), 1..8).prop_map(|v| {
        v.into_iter()
            .map(|(p, a)| ModeIndex::new(if p { 1 } else { -1 }, a))
            .collect()
    })
}

fn params() -> impl Strategy<Value = GevreyParams> {
    (0.1f64..2.0, 0.1f64..0.9).prop_map(|(s, t)| GevreyParams::new(s, t).unwrap())
}

fn state() -> impl Strategy<Value = (u64, GevreyParams)> {
    (any::<u64>(), params())
}

fn draw(seed: u64, m: u64, p: GevreyParams) -> FourierState {
    random_gevrey_state(&mut ChaCha8Rng::seed_from_u64(seed), m, p)
}

fn pool(k: usize, m: u64) -> Vec<MultiIndex> {
    enumerate(k, m, Family::ZeroMomentum, DEFAULT_BUDGET).unwrap()
}

fn poly(seed: u64, k: usize, m: u64, n: usize) -> PolynomialHamiltonian {
    random_real_polynomial(&mut ChaCha8Rng::seed_from_u64(seed), &pool(k, m), n)
}

fn gauss_small() -> impl Strategy<Value = GaussRat> {
    (-6i64..=6, 1i64..=5, -6i64..=6, 1i64..=5).prop_map(|(a, b, c, d)| GaussRat::new(ratio(a, b), ratio(c, d)))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn canonicalize_is_idempotent(e in entries()) {
        let k = MultiIndex::raw(e).canonicalize();
        prop_assert!(k.is_canonical());
        prop_assert_eq!(k.canonicalize(), k);
    }

    #[test]
    fn classification_is_nested(e in entries()) {
        let c = MultiIndex::new(e).classify();
        prop_assert!(!c.in_r || c.in_m);
        prop_assert!(!c.in_m || c.in_z);
        prop_assert!(!c.integrable || c.in_z);
        prop_assert_eq!(c.in_n, c.in_r && !c.integrable);
    }

    #[test]
    fn classification_commutes_with_conjugation(e in entries()) {
        let k = MultiIndex::new(e);
        prop_assert_eq!(k.classify(), k.conjugate().classify());
    }

    #[test]
    fn projection_contracts_norm((seed, p) in state(), l in 0u64..8) {
        let z = draw(seed, 6, p);
        prop_assert!(z.project(l).norm_sigma() <= z.norm_sigma());
    }

    #[test]
    fn sqrt_gap_is_half_holder(x in 0.0f64..1e6, y in 0.0f64..1e6) {
        prop_assert!(sqrt_gap(x, y) <= (x - y).abs().sqrt() * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn weighted_actions_embed_in_distance((s1, p) in state(), s2 in any::<u64>()) {
        let z = draw(s1, 5, p);
        let w = draw(s2, 5, p);
        let d = z.action_distance(&w);
        prop_assert!(z.weighted_action_l1(&w) <= d * d * (1.0 + 1e-12));
    }

    #[test]
    fn bracket_is_antisymmetric_and_bilinear(s in any::<u64>(), k1 in 2usize..4, k2 in 2usize..4, c in gauss_small()) {
        let p = poly(s, k1, 3, 4);
        let q = poly(s.wrapping_add(1), k2, 3, 4);
        let r = poly(s.wrapping_add(2), k2, 3, 4);
        prop_assert!(p.poisson(&q).add(&q.poisson(&p)).is_zero());
        let lhs = p.poisson(&q.add(&r.scale(&c)));
        let rhs = p.poisson(&q).add(&p.poisson(&r).scale(&c));
        prop_assert!(lhs.sub(&rhs).is_zero());
    }

    #[test]
    fn bracket_preserves_momentum_and_reality(s in any::<u64>(), k1 in 2usize..4, k2 in 2usize..4) {
        let p = poly(s, k1, 3, 5);
        let q = poly(s.wrapping_add(7), k2, 3, 5);
        prop_assert!(p.is_real() && q.is_real());
        let b = p.poisson(&q);
        prop_assert!(b.has_zero_momentum());
        prop_assert!(b.is_real());
    }

    #[test]
    fn exact_and_float_evaluation_agree(s in any::<u64>(), z in prop::collection::vec(gauss_small(), 7)) {
        let p = poly(s, 2, 3, 6);
        let exact = p.evaluate_exact(&z, 3).to_c64();
        let fz = FourierState::from_vec(3, z.iter().map(GaussRat::to_c64).collect(), GevreyParams::default());
        let float = p.evaluate(&fz);
        let scale = 1.0 + p.terms().values().map(|c| c.abs_f64()).sum::<f64>() * 1296.0;
        prop_assert!((exact - float).norm() <= 1e-12 * scale, "{exact} vs {float}");
    }

    #[test]
    fn rational_bracket_stats(s in any::<u64>(), q in 2usize..4, d1 in 0usize..2, d2 in 0usize..2) {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let a = random_rational(&mut rng, 3, q, d1, 2);
        let b = random_rational(&mut rng, 3, 2, d2, 2);
        let (sa, sb, sc) = (a.stats(), b.stats(), a.rat_poisson(&b).stats());
        prop_assert!(sc.m <= sa.m + sb.m);
        prop_assert!(sc.n <= sa.n + sb.n + 1);
        prop_assert!(sc.h <= sa.h.max(sb.h));
    }

    #[test]
    fn omega_is_linear_in_actions(
        idx in 0usize..1000,
        x in prop::collection::vec((-20i64..20, 1i64..9), 9),
        y in prop::collection::vec((-20i64..20, 1i64..9), 9),
        lam in (-5i64..5, 1i64..5),
    ) {
        let keys = enumerate_resonant(3, 4, true).unwrap();
        let j = &keys[idx % keys.len()];
        let f = omega_coeffs(j, 4);
        let xs: Vec<BigRational> = x.iter().map(|&(a, b)| ratio(a, b)).collect();
        let ys: Vec<BigRational> = y.iter().map(|&(a, b)| ratio(a, b)).collect();
        let l = ratio(lam.0, lam.1);
        let comb: Vec<BigRational> = xs.iter().zip(&ys).map(|(a, b)| a + &l * b).collect();
        prop_assert_eq!(f.eval_exact(&comb), f.eval_exact(&xs) + &l * f.eval_exact(&ys));
        prop_assert_eq!(omega_coeffs(&j.conjugate(), 4).eval_exact(&xs), -f.eval_exact(&xs));
    }

    #[test]
    fn omega_direct_matches_coefficients(idx in 0usize..1000, (seed, p) in state()) {
        let keys = enumerate_resonant(3, 5, true).unwrap();
        let j = &keys[idx % keys.len()];
        let z = draw(seed, 5, p);
        let a = omega(j, &z, 5);
        let b = omega_coeffs(j, 5).eval(&z);
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn actions_commute_with_integrable_part((seed, p) in state(), ell in -4i64..=4) {
        let h = build_l2(4).add(&build_l4(4));
        let z = draw(seed, 4, p);
        let c = h.compile(4);
        let b = action_bracket(&c, z.as_slice(), ell);
        let scale = z.norm_sigma().powi(4) + z.norm_sigma().powi(2);
        prop_assert!(b.norm() <= 1e-12 * (1.0 + scale));
    }

    #[test]
    fn theta_is_quadratically_scale_consistent((seed, p) in state(), lam in 0.1f64..10.0) {
        let th = ThetaSet::new(1, 4, 1e-6, DEFAULT_BUDGET).unwrap();
        let z = draw(seed, 4, p);
        let a = th.min_abs_omega(&z);
        let b = th.min_abs_omega(&z.scaled(lam));
        prop_assert!((b - lam * lam * a).abs() <= 1e-10 * (lam * lam * a).max(1e-300));
    }

    #[test]
    fn measure_fraction_is_monotone_in_delta(seed in any::<u64>(), d1 in 1e-8f64..1e-3, d2 in 1e-8f64..1e-3) {
        let cfg = MeasureConfig {
            m: 4,
            l: 4,
            r: 4,
            delta: d1,
            eps: 0.1,
            n: 64,
            seed,
            params: GevreyParams::default(),
            sampler: BallSampler::Dirichlet,
        };
        let s = MeasureSamples::draw(&cfg).unwrap();
        let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
        prop_assert!(s.fraction(lo) >= s.fraction(hi));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn flow_conserves_mass_and_momentum(seed in any::<u64>(), amp in 0.01f64..0.3) {
        let mut z = draw(seed, 6, GevreyParams::default()).into_vec();
        let n0 = mass(&z).max(1e-300);
        let s = amp / n0.sqrt();
        z.iter_mut().for_each(|c| *c *= s);
        let (m0, p0) = (mass(&z), momentum(&z));
        let scale: f64 = z.iter().enumerate().map(|(i, c)| (i as f64 - 6.0).abs() * c.norm_sqr()).sum();
        let sys = Nlsp::new(6);
        for _ in 0..200 {
            sys.step(&mut z, 1e-3, Scheme::Yoshida4);
        }
        prop_assert!(z.iter().all(|c: &Complex64| c.is_finite()));
        prop_assert!((mass(&z) - m0).abs() <= 1e-10 * m0);
        prop_assert!((momentum(&z) - p0).abs() <= 1e-10 * scale.max(1e-300));
    }
}

#[test]
fn resonant_sets_are_closed_under_conjugation() {
    for (k, m) in [(2, 6), (3, 4)] {
        for ni in [false, true] {
            let keys = enumerate_resonant(k, m, ni).unwrap();
            let set: std::collections::BTreeSet<_> = keys.iter().cloned().collect();
            for j in &keys {
                assert!(set.contains(&j.conjugate()), "{j}");
            }
        }
    }
}
