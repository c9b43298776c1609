//! Exact sparse polynomial Hamiltonians of class `ℋ_m`.
//!
//! A polynomial is stored as a map from canonical multi-index to the total
//! coefficient of the monomial `z_𝒋`, i.e. the sum of the symmetric
//! coefficients over the permutation orbit of `𝒋`. The symmetric coefficient
//! entering `‖P‖_{ℓ∞}` is the stored value divided by the orbit size.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Compiled;
use crate::gauss::{format_ratio, parse_ratio, ratio, GaussRat};
use crate::gevrey::{FourierState, GevreyParams};
use crate::modespace::{LemmaReport, ModeIndex, MultiIndex};
use crate::ode::{self, OdeOptions};

/// Sparse polynomial with exact Gaussian-rational coefficients.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PolynomialHamiltonian {
    terms: BTreeMap<MultiIndex, GaussRat>,
}

impl PolynomialHamiltonian {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `c · z_𝒋` (the key is canonicalized; zero results are dropped).
    pub fn add_term(&mut self, key: MultiIndex, c: &GaussRat) {
        if c.is_zero() {
            return;
        }
        let key = if key.is_canonical() { key } else { key.canonicalize() };
        match self.terms.entry(key) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c.clone());
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn from_terms<I: IntoIterator<Item = (MultiIndex, GaussRat)>>(it: I) -> Self {
        let mut p = Self::new();
        for (k, c) in it {
            p.add_term(k, &c);
        }
        p
    }

    pub fn terms(&self) -> &BTreeMap<MultiIndex, GaussRat> {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Stored (orbit-summed) coefficient of `z_𝒋`.
    pub fn coefficient(&self, key: &MultiIndex) -> GaussRat {
        self.terms.get(&key.canonicalize()).cloned().unwrap_or_default()
    }

    /// Symmetric coefficient `P_𝒋` (stored value over orbit size).
    pub fn symmetric_coefficient(&self, key: &MultiIndex) -> GaussRat {
        let k = key.canonicalize();
        let c = self.coefficient(&k);
        c.div_rat(&BigRational::from_integer(k.orbit_size().into()))
    }

    /// Largest `|a|` among the stored keys.
    pub fn mode_bound(&self) -> u64 {
        self.terms.keys().map(|k| k.max_abs_mode()).max().unwrap_or(0)
    }

    /// Distinct degrees `#𝒋` present, ascending.
    pub fn degrees(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.terms.keys().map(|k| k.len()).collect();
        d.sort_unstable();
        d.dedup();
        d
    }

    /// Homogeneous part of degree `deg`.
    pub fn component(&self, deg: usize) -> Self {
        self.filter(|k| k.len() == deg)
    }

    pub fn filter<F: Fn(&MultiIndex) -> bool>(&self, keep: F) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .filter(|(k, _)| keep(k))
                .map(|(k, c)| (k.clone(), c.clone()))
                .collect(),
        }
    }

    #[must_use]
    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (k, c) in &other.terms {
            out.add_term(k.clone(), c);
        }
        out
    }

    #[must_use]
    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (k, c) in &other.terms {
            out.add_term(k.clone(), &-c);
        }
        out
    }

    #[must_use]
    pub fn scale(&self, s: &GaussRat) -> Self {
        Self::from_terms(self.terms.iter().map(|(k, c)| (k.clone(), c * s)))
    }

    /// Reality condition: `coeff(𝒋̄) = conj(coeff(𝒋))` for every key.
    pub fn is_real(&self) -> bool {
        self.terms
            .iter()
            .all(|(k, c)| self.coefficient(&k.conjugate()) == c.conj())
    }

    /// All keys have zero charge and zero momentum.
    pub fn has_zero_momentum(&self) -> bool {
        self.terms.keys().all(|k| k.classify().in_m)
    }

    /// All keys lie in `ℛ`.
    pub fn is_resonant(&self) -> bool {
        self.terms.keys().all(|k| k.classify().in_r)
    }

    /// All keys are integrable (the polynomial depends on actions only).
    pub fn is_integrable(&self) -> bool {
        self.terms.keys().all(|k| k.is_integrable())
    }

    /// Exact `‖P‖²_{ℓ∞}` (sup of squared symmetric-coefficient moduli).
    pub fn linfty_norm_sqr(&self) -> BigRational {
        let mut best = BigRational::zero();
        for (k, c) in &self.terms {
            let o = BigRational::from_integer(k.orbit_size().into());
            let v = c.norm_sqr() / (&o * &o);
            if v > best {
                best = v;
            }
        }
        best
    }

    /// `‖P‖_{ℓ∞}`; a modulus of a Gaussian rational, hence returned as `f64`.
    pub fn linfty_norm(&self) -> f64 {
        self.linfty_norm_sqr().to_f64().unwrap_or(f64::INFINITY).sqrt()
    }

    /// `P` restricted to keys with all `|a| ≤ M`.
    pub fn restrict(&self, m: u64) -> Self {
        self.filter(|k| k.max_abs_mode() <= m)
    }

    /// `(P^{(≤M)}, P^{(>M)})`, split by `μ₁(𝒋) > M`.
    pub fn high_mode_split(&self, m: u64) -> (Self, Self) {
        (self.filter(|k| k.mu1() <= m), self.filter(|k| k.mu1() > m))
    }

    /// Numeric form on `⟦−M, M⟧`; `M` must cover every stored mode.
    pub fn compile(&self, m: u64) -> Compiled {
        assert!(self.mode_bound() <= m, "compile bound {m} below polynomial modes");
        let mut c = Compiled::new(m);
        for (k, v) in &self.terms {
            c.add_term(v.to_c64(), &k.plus_modes(), &k.minus_modes(), &[]);
        }
        c
    }

    fn compile_for(&self, z: &FourierState) -> (Compiled, Vec<Complex64>) {
        let m = z.mode_bound().max(self.mode_bound());
        (self.compile(m), z.resize(m).into_vec())
    }

    /// `P(z)` in floating point.
    pub fn evaluate(&self, z: &FourierState) -> Complex64 {
        let (c, v) = self.compile_for(z);
        c.value(&v).expect("polynomials have no denominators")
    }

    /// `P(z)` exactly, for a state with Gaussian-rational amplitudes `z[a + M]`.
    pub fn evaluate_exact(&self, z: &[GaussRat], m: u64) -> GaussRat {
        let get = |a: i64| -> GaussRat {
            if a.unsigned_abs() > m {
                GaussRat::zero()
            } else {
                z[(a + m as i64) as usize].clone()
            }
        };
        let mut acc = GaussRat::zero();
        for (k, c) in &self.terms {
            let mut t = c.clone();
            for j in k.entries() {
                let v = get(j.a);
                t = if j.delta == 1 { &t * &v } else { &t * &v.conj() };
            }
            acc += &t;
        }
        acc
    }

    /// `X_P(z)` with `(X_P)_a = i ∂P/∂z̄_a`, on `⟦−M', M'⟧`, `M' = max(M, modes of P)`.
    pub fn vector_field(&self, z: &FourierState) -> FourierState {
        let (c, v) = self.compile_for(z);
        let m = c.mode_bound();
        FourierState::from_vec(m, c.vector_field(&v).expect("no denominators"), z.params)
    }

    /// Exact Poisson bracket `{P, Q} = i Σ_j δ(j) ∂_{z_j}P ∂_{z_{j̄}}Q`.
    #[must_use]
    pub fn poisson(&self, other: &Self) -> Self {
        let mut index: HashMap<ModeIndex, Vec<(&MultiIndex, &GaussRat, usize)>> = HashMap::new();
        for (k, c) in &other.terms {
            for (j, cnt) in k.distinct() {
                index.entry(j).or_default().push((k, c, cnt));
            }
        }
        let left: Vec<(&MultiIndex, &GaussRat)> = self.terms.iter().collect();
        let acc = left
            .par_chunks(16)
            .map(|chunk| {
                let mut acc: HashMap<MultiIndex, GaussRat> = HashMap::new();
                for &(k, p) in chunk {
                    for (j, cj) in k.distinct() {
                        let Some(list) = index.get(&j.conjugate()) else {
                            continue;
                        };
                        let rest = k.remove_one(j).expect("entry present");
                        let sign = j.delta as i64 * (cj as i64);
                        for &(k2, q, cjb) in list {
                            let key = rest.merge(&k2.remove_one(j.conjugate()).expect("present"));
                            let coef = (p * q).scale_int(sign * cjb as i64).mul_i();
                            match acc.get_mut(&key) {
                                Some(v) => *v += &coef,
                                None => {
                                    acc.insert(key, coef);
                                }
                            }
                        }
                    }
                }
                acc
            })
            .reduce(HashMap::new, merge_maps);
        Self {
            terms: acc.into_iter().filter(|(_, c)| !c.is_zero()).collect(),
        }
    }

    /// Writes one JSON object per line: `{key, re, im}`.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for (k, c) in &self.terms {
            let line = TermJson {
                key: k.clone(),
                re: format_ratio(&c.re),
                im: format_ratio(&c.im),
            };
            serde_json::to_writer(&mut w, &line)?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut p = Self::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let t: TermJson = serde_json::from_str(&line)?;
            p.add_term(t.key, &GaussRat::new(parse_ratio(&t.re)?, parse_ratio(&t.im)?));
        }
        Ok(p)
    }
}

pub(crate) fn merge_maps<K: std::hash::Hash + Eq>(
    mut a: HashMap<K, GaussRat>,
    b: HashMap<K, GaussRat>,
) -> HashMap<K, GaussRat> {
    if a.len() < b.len() {
        return merge_maps(b, a);
    }
    for (k, v) in b {
        match a.get_mut(&k) {
            Some(x) => *x += &v,
            None => {
                a.insert(k, v);
            }
        }
    }
    a
}

#[derive(Serialize, Deserialize)]
struct TermJson {
    key: MultiIndex,
    re: String,
    im: String,
}

/// `L₂ = Σ_{|a|≤M} a² |z_a|²`.
pub fn build_l2(m: u64) -> PolynomialHamiltonian {
    let m = m as i64;
    PolynomialHamiltonian::from_terms(
        (-m..=m)
            .filter(|&a| a != 0)
            .map(|a| (MultiIndex::from_signed(&[a], &[a]), GaussRat::from_int(a * a))),
    )
}

/// `P₄ = Σ_{a₁+a₂=b₁+b₂, a₁≠b₁} z_{a₁} z_{a₂} z̄_{b₁} z̄_{b₂} / (2(a₁−b₁)²)` on `|a| ≤ M`.
pub fn build_p4(m: u64) -> PolynomialHamiltonian {
    let m = m as i64;
    let mut p = PolynomialHamiltonian::new();
    for a1 in -m..=m {
        for a2 in -m..=m {
            for b1 in -m..=m {
                let b2 = a1 + a2 - b1;
                if b2.abs() > m || a1 == b1 {
                    continue;
                }
                let d = a1 - b1;
                p.add_term(
                    MultiIndex::from_signed(&[a1, a2], &[b1, b2]),
                    &GaussRat::real(ratio(1, 2 * d * d)),
                );
            }
        }
    }
    p
}

/// `L₄ = Σ_{a₁≠a₂} |z_{a₁}|² |z_{a₂}|² / (2(a₁−a₂)²)` on `|a| ≤ M`.
pub fn build_l4(m: u64) -> PolynomialHamiltonian {
    let m = m as i64;
    let mut p = PolynomialHamiltonian::new();
    for a1 in -m..=m {
        for a2 in -m..=m {
            if a1 == a2 {
                continue;
            }
            let d = a1 - a2;
            p.add_term(
                MultiIndex::from_signed(&[a1, a2], &[a1, a2]),
                &GaussRat::real(ratio(1, 2 * d * d)),
            );
        }
    }
    p
}

/// Random small Gaussian rational `p/q + i p'/q'`.
pub fn random_gauss<R: Rng>(rng: &mut R) -> GaussRat {
    let mut r = || ratio(rng.gen_range(-9..=9), rng.gen_range(1..=9));
    GaussRat::new(r(), r())
}

/// Random real polynomial of degree `2m` with about `n_terms` keys drawn from `pool`.
pub fn random_real_polynomial<R: Rng>(rng: &mut R, pool: &[MultiIndex], n_terms: usize) -> PolynomialHamiltonian {
    let mut p = PolynomialHamiltonian::new();
    if pool.is_empty() {
        return p;
    }
    for _ in 0..n_terms {
        let k = &pool[rng.gen_range(0..pool.len())];
        let c = random_gauss(rng);
        p.add_term(k.clone(), &c);
        p.add_term(k.conjugate(), &c.conj());
    }
    p
}

/// Displacement `Φ_S^t(z) − z` of the Hamiltonian flow of a compiled field.
///
/// Integrating the displacement rather than the state keeps its relative
/// accuracy when it is many orders of magnitude smaller than `z`.
pub fn flow_displacement(
    field: &Compiled,
    z: &[Complex64],
    t: f64,
    rtol: f64,
    mut on_step: impl FnMut(f64, &[Complex64]) -> Result<()>,
) -> Result<Vec<Complex64>> {
    let n = z.len();
    let x0 = field.vector_field(z)?;
    let scale = x0.iter().map(|c| c.norm()).fold(0.0, f64::max) * t.abs();
    let opts = OdeOptions {
        rtol,
        atol: (rtol * scale).max(1e-300),
        ..Default::default()
    };
    let mut pos = vec![Complex64::new(0.0, 0.0); n];
    let rhs = |_t: f64, d: &[Complex64], out: &mut [Complex64]| -> Result<()> {
        for i in 0..n {
            pos[i] = z[i] + d[i];
        }
        out.copy_from_slice(&field.vector_field(&pos)?);
        Ok(())
    };
    let zero = vec![Complex64::new(0.0, 0.0); n];
    ode::integrate(rhs, &zero, 0.0, t, &opts, |s, d| {
        let p: Vec<Complex64> = z.iter().zip(d).map(|(a, b)| a + b).collect();
        on_step(s, &p)
    })
}

/// Radius `ε₁ = ¼ (4m‖S‖)^{−1/(2(m−1))}` of the local flow lemma (`m ≥ 2`).
pub fn flow_radius(s: &PolynomialHamiltonian) -> f64 {
    let m = s.degrees().into_iter().max().unwrap_or(4) / 2;
    let m = m.max(2) as f64;
    0.25 * (4.0 * m * s.linfty_norm()).powf(-1.0 / (2.0 * (m - 1.0)))
}

/// `Φ_S^t(z)` for the flow of `ż = X_S(z)`, local tolerance `1e−12`.
pub fn flow_integrate(s: &PolynomialHamiltonian, z: &FourierState, t: f64) -> Result<FourierState> {
    let (c, v) = s.compile_for(z);
    let d = flow_displacement(&c, &v, t, 1e-12, |_, _| Ok(()))?;
    let out: Vec<Complex64> = v.iter().zip(&d).map(|(a, b)| a + b).collect();
    Ok(FourierState::from_vec(c.mode_bound(), out, z.params))
}

/// `{I_ℓ, K}(z)` numerically: `i (z̄_ℓ ∂K/∂z̄_ℓ − z_ℓ ∂K/∂z_ℓ)`.
pub fn action_bracket(k: &Compiled, z: &[Complex64], ell: i64) -> Complex64 {
    let jet = k.jet(z, true).expect("no denominators");
    let s = (ell + k.mode_bound() as i64) as usize;
    Complex64::new(0.0, 1.0) * (z[s].conj() * jet.d_conj[s] - z[s] * jet.d_z[s])
}

/// Parameters for [`verify_high_mode_estimates`].
#[derive(Clone, Copy, Debug)]
pub struct HighModeCheck {
    /// `N ≥ 1` in `M = 6rN²`.
    pub n: u64,
    /// Normal-form order `r` in `M = 6rN²`.
    pub r: u64,
}

/// Checks the high-mode decay estimates for a resonant homogeneous `K` at `z`.
///
/// Returns reports for the per-mode estimate, the tail sum over `|ℓ| ≥ mN²`
/// and the mismatch bound on `Π_M X_{K^{(>M)}}` with `M = 6rN²`.
pub fn verify_high_mode_estimates(
    k: &PolynomialHamiltonian,
    z: &FourierState,
    chk: HighModeCheck,
) -> Result<Vec<LemmaReport>> {
    if !k.is_resonant() {
        return Err(Error::NotResonant("high-mode estimates need ℛ support".into()));
    }
    let degs = k.degrees();
    if degs.len() > 1 {
        return Err(Error::InvalidParameter("K must be homogeneous".into()));
    }
    let m = (degs.first().copied().unwrap_or(2) / 2) as f64;
    let GevreyParams { sigma, theta } = z.params;
    let (c, v) = k.compile_for(z);
    let zz = FourierState::from_vec(c.mode_bound(), v.clone(), z.params);
    let norm = zz.norm_sigma();
    let kn = k.linfty_norm();
    let mm = c.mode_bound() as i64;

    let mut ik = LemmaReport::new("high-mode-action", format!("|l| <= {mm}"));
    let mut tail = 0.0;
    let n_thr = m * (chk.n * chk.n) as f64;
    for ell in -mm..=mm {
        let br = action_bracket(&c, &v, ell).norm();
        let w = zz.params.weight(ell);
        let lhs = w * w * br;
        let decay = (-sigma * (1.0 - theta) * ((ell.unsigned_abs() as f64) / m).powf(theta / 2.0)).exp();
        let rhs = 2.0 * decay * kn * w * zz.action(ell).sqrt() * norm.powf(2.0 * m - 1.0);
        ik.record(rhs * (1.0 + 1e-9) - lhs, || {
            format!("l={ell}: lhs={lhs:e}, rhs={rhs:e}")
        });
        if ell.unsigned_abs() as f64 >= n_thr {
            tail += w * br.sqrt();
        }
    }
    let mut ikn = LemmaReport::new("high-mode-tail", format!("N = {}", chk.n));
    let rhs =
        2f64.sqrt() * kn.sqrt() * (-0.5 * sigma * (1.0 - theta) * (chk.n as f64).powf(theta)).exp() * norm.powf(m);
    ikn.record(rhs * (1.0 + 1e-9) - tail, || format!("tail={tail:e}, rhs={rhs:e}"));

    let big_m = 6 * chk.r * chk.n * chk.n;
    let (_, high) = k.high_mode_split(big_m);
    let mut mis = LemmaReport::new("truncation-mismatch", format!("M = 6rN^2 = {big_m}"));
    {
        let lhs = if high.is_zero() {
            0.0
        } else {
            let xf = high.compile(c.mode_bound()).vector_field(&v)?;
            FourierState::from_vec(c.mode_bound(), xf, z.params)
                .project(big_m)
                .norm_sigma()
        };
        let rhs = 2.0 * m * high.linfty_norm() * (-sigma * (chk.n as f64).powf(theta)).exp() * norm.powf(2.0 * m - 1.0);
        mis.record(rhs * (1.0 + 1e-9) - lhs, || format!("lhs={lhs:e}, rhs={rhs:e}"));
    }
    Ok(vec![ik, ikn, mis])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modespace::{enumerate, Family, DEFAULT_BUDGET};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state(m: u64, vals: &[(i64, Complex64)]) -> FourierState {
        let mut z = FourierState::zeros(m, GevreyParams::default());
        for &(a, c) in vals {
            z.set(a, c);
        }
        z
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_state(rng: &mut ChaCha8Rng, m: u64, scale: f64) -> FourierState {
        let v = (0..2 * m + 1)
            .map(|_| c(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale)))
            .collect();
        FourierState::from_vec(m, v, GevreyParams::default())
    }

    /// Symmetric coefficient of `P₄` by brute force over ordered 4-tuples
    /// `(j₁..j₄) ∈ (U₂×ℤ)⁴`, independent of the canonical storage.
    fn p4_symmetric_oracle(m: i64) -> HashMap<Vec<(i8, i64)>, f64> {
        // Non-symmetric coefficient: tuple (a1,a2,b1,b2) with signs (+,+,−,−).
        let mut total: HashMap<Vec<(i8, i64)>, f64> = HashMap::new();
        for a1 in -m..=m {
            for a2 in -m..=m {
                for b1 in -m..=m {
                    let b2 = a1 + a2 - b1;
                    if b2.abs() > m || a1 == b1 {
                        continue;
                    }
                    let mut key = vec![(1i8, a1), (1, a2), (-1, b1), (-1, b2)];
                    key.sort_by_key(|&(d, a)| (a, d));
                    *total.entry(key).or_insert(0.0) += 1.0 / (2.0 * ((a1 - b1) * (a1 - b1)) as f64);
                }
            }
        }
        // Orbit size by counting distinct permutations explicitly.
        let perms: Vec<[usize; 4]> = (0..24)
            .map(|mut n| {
                let mut pool = vec![0, 1, 2, 3];
                let mut p = [0; 4];
                for (k, slot) in p.iter_mut().enumerate() {
                    let f = [6, 2, 1, 1][k];
                    *slot = pool.remove(n / f);
                    n %= f;
                }
                p
            })
            .collect();
        total
            .into_iter()
            .map(|(k, v)| {
                let mut seen = std::collections::HashSet::new();
                for p in &perms {
                    seen.insert(p.iter().map(|&i| k[i]).collect::<Vec<_>>());
                }
                (k, v / seen.len() as f64)
            })
            .collect()
    }

    #[test]
    fn p4_tuple_coefficient() {
        // (a1,a2,b1,b2) = (1,0,0,1) and (0,1,1,0) both map to |z0|²|z1|².
        let p4 = build_p4(3);
        let k = MultiIndex::from_signed(&[1, 0], &[0, 1]);
        assert_eq!(p4.coefficient(&k), GaussRat::from_int(1));
        let single = state(3, &[(1, c(0.7, 0.2))]);
        assert_eq!(p4.evaluate(&single), c(0.0, 0.0));
    }

    #[test]
    fn energy_of_two_mode_state() {
        let z = state(2, &[(0, c(1.0, 0.0)), (1, c(1.0, 0.0))]);
        let h = build_l2(2).add(&build_p4(2));
        assert!((h.evaluate(&z) - c(2.0, 0.0)).norm() < 1e-15);
        assert_eq!(build_l2(3).evaluate(&state(3, &[(2, c(1.0, 0.0))])), c(4.0, 0.0));
    }

    #[test]
    fn p4_norm_matches_brute_force_symmetrization() {
        for m in 2..=4 {
            let oracle = p4_symmetric_oracle(m);
            let sup = oracle.values().fold(0.0f64, |a, &b| a.max(b.abs()));
            let p4 = build_p4(m as u64);
            assert!((p4.linfty_norm() - sup).abs() < 1e-15);
            assert!((sup - 1.0 / 12.0).abs() < 1e-15);
            for (k, v) in &oracle {
                let key = MultiIndex::from_pairs(k);
                assert!((p4.symmetric_coefficient(&key).to_c64().re - v).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn builders_are_real_and_resonance_classes_are_right() {
        let p4 = build_p4(4);
        assert!(p4.is_real() && p4.has_zero_momentum());
        assert!(build_l4(4).is_integrable() && build_l2(4).is_integrable());
        assert_eq!(p4.filter(|k| k.classify().in_r), build_l4(4));
    }

    #[test]
    fn evaluation_is_real_and_matches_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pool = enumerate(3, 3, Family::ZeroMomentum, DEFAULT_BUDGET).unwrap();
        let p = random_real_polynomial(&mut rng, &pool, 40);
        for _ in 0..20 {
            let z = random_state(&mut rng, 3, 1.0);
            let v = p.evaluate(&z);
            assert!(v.im.abs() <= 1e-12 * v.norm().max(1.0));
            // Rational test state.
            let q: Vec<GaussRat> = z
                .as_slice()
                .iter()
                .map(|c| {
                    let r = |x: f64| ratio((x * 64.0).round() as i64, 64);
                    GaussRat::new(r(c.re), r(c.im))
                })
                .collect();
            let zq = FourierState::from_vec(3, q.iter().map(|g| g.to_c64()).collect(), z.params);
            let exact = p.evaluate_exact(&q, 3).to_c64();
            assert!((p.evaluate(&zq) - exact).norm() <= 1e-13 * exact.norm().max(1.0));
        }
    }

    #[test]
    fn l2_bracket_is_minus_i_delta() {
        let pool = enumerate(2, 3, Family::ZeroMomentum, DEFAULT_BUDGET).unwrap();
        let l2 = build_l2(3);
        for k in pool.iter().take(200) {
            let p = PolynomialHamiltonian::from_terms([(k.clone(), GaussRat::from_int(1))]);
            let b = l2.poisson(&p);
            let expect = GaussRat::i().scale_int(-k.super_momentum());
            assert_eq!(b.coefficient(k), expect);
            assert!(b.len() <= 1);
        }
    }

    #[test]
    fn bracket_matches_numeric_derivatives() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pool4 = enumerate(2, 3, Family::ZeroMomentum, DEFAULT_BUDGET).unwrap();
        let pool6 = enumerate(3, 3, Family::ZeroMomentum, DEFAULT_BUDGET).unwrap();
        for _ in 0..10 {
            let p = random_real_polynomial(&mut rng, &pool4, 8);
            let q = random_real_polynomial(&mut rng, &pool6, 8);
            let b = p.poisson(&q);
            assert!(b.is_real() && b.has_zero_momentum());
            assert!(p.poisson(&p).is_zero());
            assert_eq!(b, q.poisson(&p).scale(&GaussRat::from_int(-1)));
            let (cp, cq, cb) = (p.compile(3), q.compile(3), b.compile(3));
            for _ in 0..10 {
                let z = random_state(&mut rng, 3, 0.5);
                let v = z.as_slice();
                let num = crate::eval::bracket_from_jets(&cp.jet(v, true).unwrap(), &cq.jet(v, true).unwrap());
                let sym = cb.value(v).unwrap();
                assert!((num - sym).norm() <= 1e-9 * num.norm().max(1e-12));
            }
        }
    }

    #[test]
    fn vector_field_of_l2_and_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = random_state(&mut rng, 4, 0.1);
        let x = build_l2(4).vector_field(&z);
        for a in -4..=4i64 {
            assert!((x.get(a) - c(0.0, (a * a) as f64) * z.get(a)).norm() < 1e-15);
        }
        let p4 = build_p4(4);
        let xp = p4.vector_field(&z);
        assert!(xp.norm_sigma() <= 4.0 * p4.linfty_norm() * z.norm_sigma().powi(3));
    }

    #[test]
    fn l2_flow_is_rotation_and_flows_invert() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = random_state(&mut rng, 3, 0.05);
        let y = flow_integrate(&build_l2(3), &z, 0.7).unwrap();
        for a in -3..=3i64 {
            let e = z.get(a) * c(0.0, (a * a) as f64 * 0.7).exp();
            assert!((y.get(a) - e).norm() < 1e-11);
        }
        let pool = enumerate(2, 3, Family::ZeroMomentum, DEFAULT_BUDGET).unwrap();
        let s = random_real_polynomial(&mut rng, &pool, 10);
        let fw = flow_integrate(&s, &z, 1.0).unwrap();
        let back = flow_integrate(&s, &fw, -1.0).unwrap();
        assert!(back.sub(&z).norm_sigma() < 1e-9 * z.norm_sigma());
        assert_eq!(flow_integrate(&s, &z, 0.0).unwrap(), z);
    }

    #[test]
    fn jsonl_round_trip() {
        let p4 = build_p4(2);
        let mut buf = Vec::new();
        p4.write_jsonl(&mut buf).unwrap();
        assert_eq!(PolynomialHamiltonian::read_jsonl(&buf[..]).unwrap(), p4);
    }

    #[test]
    fn high_mode_split_of_l4_is_all_low() {
        let (lo, hi) = build_l4(3).high_mode_split(3);
        assert!(hi.is_zero() && lo == build_l4(3));
        let z = state(3, &[(1, c(0.1, 0.0)), (2, c(0.0, 0.1))]);
        let c4 = build_l4(3).compile(3);
        for ell in -3..=3 {
            assert_eq!(action_bracket(&c4, z.as_slice(), ell), c(0.0, 0.0));
        }
    }
}
