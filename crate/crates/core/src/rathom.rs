//! Rational-fraction Hamiltonians `ℋ_q^M`.
//!
//! A term is `c · z_𝒋 · Π_α i/ω_{𝐡_α}(z)`, where each `ω_𝐡` is the modulated
//! frequency, a linear form in the actions `I_a`, `|a| ≤ M`. Numerators are
//! stored orbit-summed as in [`crate::polyham`]; denominator lists are kept
//! literally as sorted lists of canonical multi-indices.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Compiled;
use crate::gauss::{format_ratio, parse_ratio, ratio, GaussRat};
use crate::gevrey::FourierState;
use crate::modespace::{enumerate_nonintegrable_upto, enumerate_resonant, ModeIndex, MultiIndex};
use crate::polyham::{flow_displacement, merge_maps, random_gauss, PolynomialHamiltonian};

/// `∂ω_𝒋/∂I_a = Σ_β δ_β 𝟙_{a≠a_β}/(a−a_β)²`, exact.
fn omega_weight(j: &MultiIndex, a: i64) -> BigRational {
    let mut acc = BigRational::zero();
    for e in j.entries() {
        if e.a != a {
            let d = a - e.a;
            acc += ratio(e.delta as i64, d * d);
        }
    }
    acc
}

/// The frequency `ω_𝒋^M` as dense exact coefficients over `⟦−M, M⟧`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrequencyVector {
    m: u64,
    coeffs: Vec<BigRational>,
}

impl FrequencyVector {
    pub fn mode_bound(&self) -> u64 {
        self.m
    }

    /// Coefficient of `I_a` (zero outside `⟦−M, M⟧`).
    pub fn coeff(&self, a: i64) -> BigRational {
        if a.unsigned_abs() > self.m {
            BigRational::zero()
        } else {
            self.coeffs[(a + self.m as i64) as usize].clone()
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c.to_f64().unwrap_or(0.0)).collect()
    }

    pub fn max_abs_coeff(&self) -> BigRational {
        self.coeffs.iter().map(|c| c.abs()).max().unwrap_or_default()
    }

    /// `Σ_a c_a I_a` for exact actions indexed by `a + M`.
    pub fn eval_exact(&self, actions: &[BigRational]) -> BigRational {
        self.coeffs.iter().zip(actions).map(|(c, i)| c * i).sum()
    }

    pub fn eval(&self, z: &FourierState) -> f64 {
        let m = self.m as i64;
        (-m..=m)
            .map(|a| self.coeffs[(a + m) as usize].to_f64().unwrap_or(0.0) * z.action(a))
            .sum()
    }
}

pub fn omega_coeffs(j: &MultiIndex, m: u64) -> FrequencyVector {
    let mi = m as i64;
    FrequencyVector {
        m,
        coeffs: (-mi..=mi).map(|a| omega_weight(j, a)).collect(),
    }
}

/// `ω_𝒋^M(z)` by direct summation over `β` and `a ≠ a_β`, `|a| ≤ M`.
pub fn omega(j: &MultiIndex, z: &FourierState, m: u64) -> f64 {
    let mi = m as i64;
    j.entries()
        .iter()
        .map(|e| {
            let s: f64 = (-mi..=mi)
                .filter(|&a| a != e.a)
                .map(|a| z.action(a) / ((a - e.a) * (a - e.a)) as f64)
                .sum();
            e.delta as f64 * s
        })
        .sum()
}

/// `⟨𝒌, w_𝐡⟩ = Σ_{β∈𝒌} δ_β ∂ω_𝐡/∂I_{a_β}`, i.e. `{ω_𝐡, z_𝒌} = −i⟨𝒌, w_𝐡⟩ z_𝒌`.
pub fn pairing(k: &MultiIndex, h: &MultiIndex) -> BigRational {
    let mut acc = BigRational::zero();
    for e in k.entries() {
        let w = omega_weight(h, e.a);
        if e.delta == 1 {
            acc += w;
        } else {
            acc -= w;
        }
    }
    acc
}

/// Frequencies of a finite family of `𝒩` keys, deduplicated up to sign.
#[derive(Clone, Debug)]
pub struct NonResonanceSet {
    m: u64,
    keys: Vec<MultiIndex>,
    rows: Vec<Vec<f64>>,
}

impl NonResonanceSet {
    /// Builds the set over `keys`, with frequencies on `⟦−M, M⟧`.
    pub fn from_keys<'a, I: IntoIterator<Item = &'a MultiIndex>>(keys: I, m: u64) -> Self {
        let mut seen: HashSet<Vec<BigRational>> = HashSet::new();
        let mut out = Self {
            m,
            keys: Vec::new(),
            rows: Vec::new(),
        };
        for k in keys {
            let fv = omega_coeffs(k, m);
            let neg: Vec<BigRational> = fv.coeffs.iter().map(|c| -c).collect();
            if seen.contains(&neg) || !seen.insert(fv.coeffs.clone()) {
                continue;
            }
            out.rows.push(fv.to_f64());
            out.keys.push(k.clone());
        }
        out
    }

    /// `𝒩^{r,M}`: non-integrable resonant keys with `#𝒋 ≤ r`, `μ₁ ≤ M`.
    pub fn enumerate(r: usize, m: u64, budget: u128) -> Result<Self> {
        let keys = enumerate_nonintegrable_upto(r, m, budget)?;
        Ok(Self::from_keys(&keys, m))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn keys(&self) -> &[MultiIndex] {
        &self.keys
    }

    /// `min |ω_𝒋(z)|` and the minimizing key; `None` for an empty set.
    pub fn min_abs_omega(&self, z: &FourierState) -> Option<(f64, &MultiIndex)> {
        let act: Vec<f64> = (-(self.m as i64)..=self.m as i64).map(|a| z.action(a)).collect();
        self.rows
            .iter()
            .zip(&self.keys)
            .map(|(w, k)| (w.iter().zip(&act).map(|(x, y)| x * y).sum::<f64>().abs(), k))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }

    /// `min |ω| > threshold`; vacuously true on an empty set.
    pub fn exceeds(&self, z: &FourierState, threshold: f64) -> bool {
        self.min_abs_omega(z).is_none_or(|(v, _)| v > threshold)
    }
}

/// `z ∈ 𝔘_γ^{r,M}`: `min_{𝒩^{r,M}} |ω_𝒋^M(z)| > γ‖z‖_σ²`.
pub fn membership_u(z: &FourierState, gamma: f64, r: usize, m: u64, budget: u128) -> Result<bool> {
    let set = NonResonanceSet::enumerate(r, m, budget)?;
    let n = z.norm_sigma();
    Ok(set.exceeds(&z.resize(m), gamma * n * n))
}

/// `z ∈ 𝒱_δ^{r,L}`: `min_{𝒩^{r,L}} |ω_𝒋^L(z)| > δ`.
pub fn membership_v(z: &FourierState, delta: f64, r: usize, l: u64, budget: u128) -> Result<bool> {
    let set = NonResonanceSet::enumerate(r, l, budget)?;
    Ok(set.exceeds(&z.resize(l), delta))
}

/// Key of a rational term: numerator and sorted denominator list.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RatKey {
    pub num: MultiIndex,
    pub den: Vec<MultiIndex>,
}

impl RatKey {
    pub fn new(num: MultiIndex, mut den: Vec<MultiIndex>) -> Self {
        for h in den.iter_mut() {
            if !h.is_canonical() {
                *h = h.canonicalize();
            }
        }
        den.sort();
        Self {
            num: num.canonicalize(),
            den,
        }
    }

    pub fn conjugate(&self) -> Self {
        Self::new(self.num.conjugate(), self.den.iter().map(|h| h.conjugate()).collect())
    }

    /// `q` with `2q = #𝒋 − 2#𝐡`.
    pub fn order(&self) -> i64 {
        (self.num.len() as i64 - 2 * self.den.len() as i64) / 2
    }
}

/// Complexity statistics `(𝔪, 𝔫, 𝔥)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatStats {
    /// Half the largest numerator length.
    pub m: usize,
    /// Largest number of denominators.
    pub n: usize,
    /// Largest denominator key length.
    pub h: usize,
}

/// Element of `ℋ^M`, a finite sum of rational terms.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RationalHamiltonian {
    m: u64,
    terms: BTreeMap<RatKey, GaussRat>,
}

impl RationalHamiltonian {
    pub fn new(m: u64) -> Self {
        Self {
            m,
            terms: BTreeMap::new(),
        }
    }

    pub fn from_polynomial(p: &PolynomialHamiltonian, m: u64) -> Self {
        let mut out = Self::new(m);
        for (k, c) in p.terms() {
            out.add_term(RatKey::new(k.clone(), Vec::new()), c);
        }
        out
    }

    pub fn mode_bound(&self) -> u64 {
        self.m
    }

    pub fn terms(&self) -> &BTreeMap<RatKey, GaussRat> {
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

    pub fn coefficient(&self, key: &RatKey) -> GaussRat {
        self.terms.get(key).cloned().unwrap_or_default()
    }

    /// Adds `c` to the term at `key`; panics if a mode exceeds `M`.
    pub fn add_term(&mut self, key: RatKey, c: &GaussRat) {
        if c.is_zero() {
            return;
        }
        assert!(
            key.num.mu1() <= self.m && key.den.iter().all(|h| h.mu1() <= self.m),
            "term beyond mode bound {}",
            self.m
        );
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

    pub fn stats(&self) -> RatStats {
        let mut s = RatStats::default();
        for k in self.terms.keys() {
            s.m = s.m.max(k.num.len() / 2);
            s.n = s.n.max(k.den.len());
            s.h = s.h.max(k.den.iter().map(|h| h.len()).max().unwrap_or(0));
        }
        s
    }

    /// Distinct orders `q` present, ascending.
    pub fn orders(&self) -> Vec<i64> {
        let mut v: Vec<i64> = self.terms.keys().map(|k| k.order()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn filter<F: Fn(&RatKey) -> bool>(&self, keep: F) -> Self {
        Self {
            m: self.m,
            terms: self
                .terms
                .iter()
                .filter(|(k, _)| keep(k))
                .map(|(k, c)| (k.clone(), c.clone()))
                .collect(),
        }
    }

    /// Terms of order `q`.
    pub fn component(&self, q: i64) -> Self {
        self.filter(|k| k.order() == q)
    }

    /// Polynomial part (no denominators), if every term is polynomial.
    pub fn to_polynomial(&self) -> Option<PolynomialHamiltonian> {
        if self.terms.keys().any(|k| !k.den.is_empty()) {
            return None;
        }
        Some(PolynomialHamiltonian::from_terms(
            self.terms.iter().map(|(k, c)| (k.num.clone(), c.clone())),
        ))
    }

    #[must_use]
    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.m, other.m, "mode bounds differ");
        let mut out = self.clone();
        for (k, c) in &other.terms {
            out.add_term(k.clone(), c);
        }
        out
    }

    #[must_use]
    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(&GaussRat::from_int(-1)))
    }

    #[must_use]
    pub fn scale(&self, s: &GaussRat) -> Self {
        let mut out = Self::new(self.m);
        for (k, c) in &self.terms {
            out.add_term(k.clone(), &(c * s));
        }
        out
    }

    pub fn is_real(&self) -> bool {
        self.terms
            .iter()
            .all(|(k, c)| self.coefficient(&k.conjugate()) == c.conj())
    }

    /// All numerators in `ℛ` and all denominators in `𝒩`.
    pub fn is_well_formed(&self) -> bool {
        self.terms
            .keys()
            .all(|k| k.num.classify().in_r && k.den.iter().all(|h| h.classify().in_n))
    }

    /// `‖Q‖_{ℓ∞_Γ} = Σ_m sup_{𝒋∈ℛ_m} Σ_𝐡 |Q_{𝒋,𝐡}|` with symmetric numerator coefficients.
    pub fn rat_norm(&self) -> f64 {
        let mut per_num: BTreeMap<&MultiIndex, f64> = BTreeMap::new();
        for (k, c) in &self.terms {
            let v = c.abs_f64() / k.num.orbit_size() as f64;
            *per_num.entry(&k.num).or_insert(0.0) += v;
        }
        let mut sup_by_len: BTreeMap<usize, f64> = BTreeMap::new();
        for (k, v) in per_num {
            let e = sup_by_len.entry(k.len()).or_insert(0.0);
            *e = e.max(v);
        }
        sup_by_len.values().sum()
    }

    /// Numeric form on `⟦−M', M'⟧`, `M' ≥ M`; frequencies only see `|a| ≤ M`.
    pub fn compile(&self, bound: u64) -> Compiled {
        assert!(bound >= self.m);
        let mut c = Compiled::new(bound);
        let mut den_idx: HashMap<&MultiIndex, usize> = HashMap::new();
        let pad = (bound - self.m) as usize;
        for (k, v) in &self.terms {
            let dens: Vec<usize> = k
                .den
                .iter()
                .map(|h| {
                    *den_idx.entry(h).or_insert_with(|| {
                        let mut w = vec![0.0; pad];
                        w.extend(omega_coeffs(h, self.m).to_f64());
                        w.extend(std::iter::repeat_n(0.0, pad));
                        c.add_denominator(w, h.to_string())
                    })
                })
                .collect();
            c.add_term(v.to_c64(), &k.num.plus_modes(), &k.num.minus_modes(), &dens);
        }
        c
    }

    fn compile_for(&self, z: &FourierState) -> (Compiled, Vec<Complex64>) {
        let b = z.mode_bound().max(self.m);
        (self.compile(b), z.resize(b).into_vec())
    }

    /// `Q(z)`; fails if some denominator vanishes at `z`.
    pub fn rat_evaluate(&self, z: &FourierState) -> Result<Complex64> {
        let (c, v) = self.compile_for(z);
        c.value(&v)
    }

    /// `min_𝐡 |ω_𝐡(z)| / ‖z‖_σ²` over the denominators present.
    pub fn denominator_margin(&self, z: &FourierState) -> Option<f64> {
        let (c, v) = self.compile_for(z);
        let n = z.norm_sigma();
        c.min_abs_omega(&v).map(|w| w / (n * n))
    }

    /// `X_Q(z)`; requires `z ∈ 𝔘_γ` for the denominators of `Q`.
    pub fn rat_vector_field(&self, z: &FourierState, gamma: f64) -> Result<FourierState> {
        if let Some(margin) = self.denominator_margin(z) {
            if margin <= gamma {
                return Err(Error::ResonanceCrossing {
                    t: 0.0,
                    detail: format!("margin {margin:e} <= gamma {gamma:e}"),
                });
            }
        }
        let (c, v) = self.compile_for(z);
        Ok(FourierState::from_vec(c.mode_bound(), c.vector_field(&v)?, z.params))
    }

    /// Exact bracket `{Q, Q′}` (numerator contraction plus both denominator parts).
    #[must_use]
    pub fn rat_poisson(&self, other: &Self) -> Self {
        assert_eq!(self.m, other.m, "mode bounds differ");
        let mut index: HashMap<ModeIndex, Vec<(&RatKey, &GaussRat, usize)>> = HashMap::new();
        for (k, c) in &other.terms {
            for (j, cnt) in k.num.distinct() {
                index.entry(j).or_default().push((k, c, cnt));
            }
        }
        let right: Vec<(&RatKey, &GaussRat)> = other.terms.iter().collect();
        let left: Vec<(&RatKey, &GaussRat)> = self.terms.iter().collect();
        let acc = left
            .par_chunks(8)
            .map(|chunk| {
                let mut acc: HashMap<RatKey, GaussRat> = HashMap::new();
                let mut push = |key: RatKey, coef: GaussRat| match acc.get_mut(&key) {
                    Some(v) => *v += &coef,
                    None => {
                        acc.insert(key, coef);
                    }
                };
                for &(k, p) in chunk {
                    // Numerator contraction.
                    for (j, cj) in k.num.distinct() {
                        let Some(list) = index.get(&j.conjugate()) else {
                            continue;
                        };
                        let rest = k.num.remove_one(j).expect("entry present");
                        let sign = j.delta as i64 * cj as i64;
                        for &(k2, q, cjb) in list {
                            let num = rest.merge(&k2.num.remove_one(j.conjugate()).expect("present"));
                            let den = k.den.iter().chain(&k2.den).cloned().collect();
                            push(RatKey::new(num, den), (p * q).scale_int(sign * cjb as i64).mul_i());
                        }
                    }
                    // Derivatives through the denominators.
                    for &(k2, q) in &right {
                        if k.den.is_empty() && k2.den.is_empty() {
                            continue;
                        }
                        let pq = p * q;
                        let num = k.num.merge(&k2.num);
                        let base: Vec<MultiIndex> = k.den.iter().chain(&k2.den).cloned().collect();
                        let mut visit = |h: &MultiIndex, s: BigRational| {
                            if s.is_zero() {
                                return;
                            }
                            let mut den = base.clone();
                            den.push(h.clone());
                            push(RatKey::new(num.clone(), den), pq.scale(&s));
                        };
                        for h in &k2.den {
                            visit(h, -pairing(&k.num, h));
                        }
                        for h in &k.den {
                            visit(h, pairing(&k2.num, h));
                        }
                    }
                }
                acc
            })
            .reduce(HashMap::new, merge_maps);
        let mut out = Self::new(self.m);
        out.terms = acc.into_iter().filter(|(_, c)| !c.is_zero()).collect();
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for (k, c) in &self.terms {
            let line = RatTermJson {
                key: k.num.clone(),
                den: k.den.clone(),
                re: format_ratio(&c.re),
                im: format_ratio(&c.im),
            };
            serde_json::to_writer(&mut w, &line)?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R, m: u64) -> Result<Self> {
        let mut q = Self::new(m);
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let t: RatTermJson = serde_json::from_str(&line)?;
            let key = RatKey::new(t.key, t.den);
            if key.num.mu1() > m || key.den.iter().any(|h| h.mu1() > m) {
                return Err(Error::Parse(format!("term beyond mode bound {m}")));
            }
            q.add_term(key, &GaussRat::new(parse_ratio(&t.re)?, parse_ratio(&t.im)?));
        }
        Ok(q)
    }
}

#[derive(Serialize, Deserialize)]
struct RatTermJson {
    key: MultiIndex,
    #[serde(default)]
    den: Vec<MultiIndex>,
    re: String,
    im: String,
}

/// Radius `ε₂` of the rational local flow for `S` of order `q ≥ 2`.
pub fn rat_flow_radius(s: &RationalHamiltonian, gamma: f64) -> f64 {
    let st = s.stats();
    let q = s.orders().into_iter().max().unwrap_or(2).max(2) as f64;
    let k = 4.0 * (st.m.max(1) as f64) * (1.0 + st.h as f64) * s.rat_norm().max(f64::MIN_POSITIVE)
        / gamma.powi(st.n as i32 + 1);
    0.25 * k.powf(-1.0 / (2.0 * (q - 1.0)))
}

/// `Φ_S^t(z)`, aborting if the trajectory leaves `𝔘_{γ/2}` for the
/// denominators of `S`.
pub fn rat_flow(s: &RationalHamiltonian, z: &FourierState, t: f64, gamma: f64) -> Result<FourierState> {
    let (c, v) = s.compile_for(z);
    let params = z.params;
    let check = |tt: f64, y: &[Complex64]| -> Result<()> {
        let n = crate::gevrey::FourierState::from_vec(c.mode_bound(), y.to_vec(), params).norm_sigma();
        if let Some(w) = c.min_abs_omega(y) {
            if w <= 0.5 * gamma * n * n {
                return Err(Error::ResonanceCrossing {
                    t: tt,
                    detail: format!("min |omega| = {w:e} <= gamma/2 |z|^2 = {:e}", 0.5 * gamma * n * n),
                });
            }
        }
        Ok(())
    };
    check(0.0, &v)?;
    let d = flow_displacement(&c, &v, t, 1e-12, check)?;
    let out = v.iter().zip(&d).map(|(a, b)| a + b).collect();
    Ok(FourierState::from_vec(c.mode_bound(), out, params))
}

/// Random real rational Hamiltonian of order `q` with `n_den` denominators per term.
pub fn random_rational<R: Rng>(rng: &mut R, m: u64, q: usize, n_den: usize, n_terms: usize) -> RationalHamiltonian {
    let nums = enumerate_resonant(q + n_den, m, false).expect("small enumeration");
    let dens = enumerate_resonant(3, m, true).expect("small enumeration");
    let mut out = RationalHamiltonian::new(m);
    for _ in 0..n_terms {
        let num = nums[rng.gen_range(0..nums.len())].clone();
        let den: Vec<MultiIndex> = (0..n_den).map(|_| dens[rng.gen_range(0..dens.len())].clone()).collect();
        let key = RatKey::new(num, den);
        let c = random_gauss(rng);
        out.add_term(key.conjugate(), &c.conj());
        out.add_term(key, &c);
    }
    out
}
