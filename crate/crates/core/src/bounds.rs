//! Randomized checks of the multilinear, bracket and frequency estimates.
//!
//! Every check records the relative margin `1 − lhs/rhs` (negative means
//! violated) in a [`LemmaReport`].

use num_complex::Complex64;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::gevrey::{FourierState, GevreyParams};
use crate::modespace::{enumerate, enumerate_resonant, Family, LemmaReport, MultiIndex, DEFAULT_BUDGET};
use crate::polyham::{random_real_polynomial, verify_high_mode_estimates, HighModeCheck};
use crate::rathom::{omega, omega_coeffs, random_rational};

/// Relative slack for floating-point round-off in the right-hand sides.
const SLACK: f64 = 1e-12;

fn margin(lhs: f64, rhs: f64) -> f64 {
    if rhs > 0.0 {
        1.0 - lhs / (rhs * (1.0 + SLACK))
    } else if lhs == 0.0 {
        0.0
    } else {
        -1.0
    }
}

/// Complex coefficients decaying like `e^{−σ|a|^θ}` times a random overall scale.
pub fn random_gevrey_state<R: Rng>(rng: &mut R, m: u64, params: GevreyParams) -> FourierState {
    let scale = 10f64.powf(rng.gen_range(-2.0..0.5));
    let mut z = FourierState::zeros(m, params);
    for a in -(m as i64)..=m as i64 {
        let s = scale / params.weight(a);
        z.set(a, Complex64::new(rng.gen_range(-s..s), rng.gen_range(-s..s)));
    }
    z
}

fn pools(orders: &[usize], m: u64) -> Result<Vec<Vec<MultiIndex>>> {
    orders
        .iter()
        .map(|&k| enumerate(k, m, Family::ZeroMomentum, DEFAULT_BUDGET))
        .collect()
}

/// `‖X_P(z)‖_σ ≤ 2m ‖P‖ ‖z‖_σ^{2m−1}` for random `P` of degree `2m`, `m ∈ {2, 3}`.
pub fn check_vector_field(trials: usize, seed: u64) -> Result<LemmaReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let big_m = 4;
    let pool = pools(&[2, 3], big_m)?;
    let mut rep = LemmaReport::new("vector-field", format!("m in {{2,3}}, M = {big_m}"));
    for _ in 0..trials {
        let k = rng.gen_range(0..2);
        let m = (k + 2) as i32;
        let n = rng.gen_range(1..12);
        let p = random_real_polynomial(&mut rng, &pool[k], n);
        let theta = rng.gen_range(0.1..0.9);
        let params = GevreyParams::new(rng.gen_range(0.1..2.0), theta)?;
        let z = random_gevrey_state(&mut rng, big_m, params);
        let lhs = p.vector_field(&z).norm_sigma();
        let rhs = 2.0 * m as f64 * p.linfty_norm() * z.norm_sigma().powi(2 * m - 1);
        rep.record(margin(lhs, rhs), || format!("m={m}: {lhs:e} > {rhs:e}"));
    }
    Ok(rep)
}

/// `‖{P, P′}‖ ≤ 4mm′ ‖P‖ ‖P′‖` on random pairs of degrees `2m, 2m′ ∈ {4, 6}`.
pub fn check_poisson_bracket(trials: usize, seed: u64) -> Result<LemmaReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let big_m = 3;
    let pool = pools(&[2, 3], big_m)?;
    let mut rep = LemmaReport::new("bracket-norm", format!("m, m' in {{2,3}}, M = {big_m}"));
    for _ in 0..trials {
        let (k, k2) = (rng.gen_range(0..2), rng.gen_range(0..2));
        let (n, n2) = (rng.gen_range(1..8), rng.gen_range(1..8));
        let p = random_real_polynomial(&mut rng, &pool[k], n);
        let q = random_real_polynomial(&mut rng, &pool[k2], n2);
        let lhs = p.poisson(&q).linfty_norm();
        let rhs = 4.0 * ((k + 2) * (k2 + 2)) as f64 * p.linfty_norm() * q.linfty_norm();
        rep.record(margin(lhs, rhs), || {
            format!("m={}, m'={}: {lhs:e} > {rhs:e}", k + 2, k2 + 2)
        });
    }
    Ok(rep)
}

/// Norm and `(𝔪, 𝔫, 𝔥)` inequalities for brackets of random rational Hamiltonians.
pub fn check_rational_bracket(trials: usize, seed: u64) -> Result<LemmaReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = 3;
    let mut rep = LemmaReport::new(
        "rational-bracket",
        format!("q in {{2,3}}, up to 1 denominator, M = {m}"),
    );
    for _ in 0..trials {
        let (order, d, n) = (rng.gen_range(2..4), rng.gen_range(0..2), rng.gen_range(1..4));
        let q = random_rational(&mut rng, m, order, d, n);
        let (d2, n2) = (rng.gen_range(0..2), rng.gen_range(1..4));
        let q2 = random_rational(&mut rng, m, 2, d2, n2);
        let b = q.rat_poisson(&q2);
        let (s, s2, sb) = (q.stats(), q2.stats(), b.stats());
        let stats_ok = sb.m <= s.m + s2.m && sb.n <= s.n + s2.n + 1 && sb.h <= s.h.max(s2.h);
        let lhs = b.rat_norm();
        let rhs = 4.0 * (s.m * s2.m) as f64 * (1 + s.h + s2.h) as f64 * q.rat_norm() * q2.rat_norm();
        let mg = margin(lhs, rhs);
        rep.record_exact(stats_ok && mg >= 0.0, mg, || {
            format!("stats {s:?},{s2:?} -> {sb:?}; norm {lhs:e} vs {rhs:e}")
        });
    }
    Ok(rep)
}

fn random_key<R: Rng>(rng: &mut R, keys: &[MultiIndex]) -> MultiIndex {
    keys[rng.gen_range(0..keys.len())].clone()
}

/// `|ω_𝒋(z) − ω_𝒋(z′)| ≤ #𝒋 Σ_a |I_a(z) − I_a(z′)|`.
pub fn check_omega_lipschitz(trials: usize, seed: u64) -> Result<LemmaReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let big_m = 4;
    let mut keys = enumerate_resonant(2, big_m, false)?;
    keys.extend(enumerate_resonant(3, big_m, false)?);
    let mut rep = LemmaReport::new("frequency-lipschitz", format!("#j in {{4,6}}, M = {big_m}"));
    let p = GevreyParams::default();
    for _ in 0..trials {
        let j = random_key(&mut rng, &keys);
        let z = random_gevrey_state(&mut rng, big_m, p);
        let w = random_gevrey_state(&mut rng, big_m, p);
        let lhs = (omega(&j, &z, big_m) - omega(&j, &w, big_m)).abs();
        let m = big_m as i64;
        let rhs = j.len() as f64 * (-m..=m).map(|a| (z.action(a) - w.action(a)).abs()).sum::<f64>();
        rep.record(margin(lhs, rhs), || format!("{j}: {lhs:e} > {rhs:e}"));
    }
    Ok(rep)
}

/// `|∂ω_𝒋/∂I_a| ≤ #𝒋` for every `a`, in exact arithmetic.
pub fn check_omega_partials(trials: usize, seed: u64) -> Result<LemmaReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let big_m = 8;
    let mut keys = enumerate_resonant(2, big_m, false)?;
    keys.extend(enumerate_resonant(3, big_m, false)?);
    let mut rep = LemmaReport::new("frequency-partials", format!("#j in {{4,6}}, mu1 <= {big_m}"));
    for _ in 0..trials {
        let j = random_key(&mut rng, &keys);
        let fv = omega_coeffs(&j, 3 * big_m);
        let lim = BigRational::from_integer((j.len() as i64).into());
        let max = fv.max_abs_coeff();
        let ok = max <= lim;
        let mg = 1.0 - fv.to_f64().iter().fold(0.0f64, |a, c| a.max(c.abs())) / j.len() as f64;
        rep.record_exact(ok, mg, || format!("{j}: max coefficient {max}"));
    }
    Ok(rep)
}

fn absorb(into: &mut LemmaReport, from: LemmaReport) {
    into.checked += from.checked;
    into.min_margin = into.min_margin.min(from.min_margin);
    into.violations.extend(
        from.violations
            .into_iter()
            .take(100usize.saturating_sub(into.violations.len())),
    );
}

/// High-mode estimates (per-mode, tail, and truncation mismatch) for random
/// resonant `K` of degree 4 or 6 on `|a| ≤ 8`, with `N = 1`, `r = 1`.
pub fn check_high_modes(trials: usize, seed: u64) -> Result<Vec<LemmaReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let big_m = 8;
    let pool = [
        enumerate_resonant(2, big_m, false)?,
        enumerate_resonant(3, big_m, false)?,
    ];
    let chk = HighModeCheck { n: 1, r: 1 };
    let range = format!("#j in {{4,6}}, |a| <= {big_m}, N = 1, r = 1");
    let mut out = vec![
        LemmaReport::new("high-mode-action", range.clone()),
        LemmaReport::new("high-mode-tail", range.clone()),
        LemmaReport::new("truncation-mismatch", range),
    ];
    for _ in 0..trials {
        let (deg, n) = (rng.gen_range(0..2), rng.gen_range(1..10));
        let k = random_real_polynomial(&mut rng, &pool[deg], n);
        let params = GevreyParams::new(rng.gen_range(0.2..1.5), rng.gen_range(0.2..0.8))?;
        let z = random_gevrey_state(&mut rng, big_m, params);
        for (acc, rep) in out.iter_mut().zip(verify_high_mode_estimates(&k, &z, chk)?) {
            absorb(acc, rep);
        }
    }
    Ok(out)
}

/// Every randomized check with `trials` draws each.
pub fn run_bound_suite(trials: usize, seed: u64) -> Result<Vec<LemmaReport>> {
    let mut out = vec![
        check_vector_field(trials, seed)?,
        check_poisson_bracket(trials, seed.wrapping_add(1))?,
        check_rational_bracket(trials, seed.wrapping_add(2))?,
        check_omega_lipschitz(trials, seed.wrapping_add(3))?,
        check_omega_partials(trials, seed.wrapping_add(4))?,
    ];
    out.extend(check_high_modes(trials, seed.wrapping_add(5))?);
    Ok(out)
}
