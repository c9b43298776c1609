//! Resonant Birkhoff normal form of `L₂ + P₄` on `⟦−M, M⟧`.
//!
//! Step `𝔯 = 1, …, r−1` removes the non-resonant part of `K_{2(𝔯+1)}` with a
//! generator `S_𝔯 ∈ ℋ_{𝔯+1}` solving `{L₂, S} + K = K_res`, then conjugates
//! every term by the time-one flow of `S_𝔯` through the truncated Lie series.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss::GaussRat;
use crate::gevrey::FourierState;
use crate::polyham::{build_l2, build_p4, flow_displacement, PolynomialHamiltonian};

/// Truncation of the Lie series.
#[derive(Clone, Copy, Debug)]
pub struct NfOptions {
    /// Extra half-degrees kept symbolically above `2r`.
    pub cap: usize,
    /// Abort when a single homogeneous term exceeds this many monomials.
    pub budget_terms: usize,
}

impl Default for NfOptions {
    fn default() -> Self {
        Self {
            cap: 1,
            budget_terms: 2_000_000,
        }
    }
}

/// First Lie-series term not computed, with its a-priori norm bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DroppedMass {
    pub step: usize,
    /// Half-degree (resonant) or order (rational) of the source term.
    pub source: usize,
    /// Number of brackets `k_n* + 1`.
    pub brackets: usize,
    /// Half-degree or order of the dropped piece.
    pub target: usize,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NfStatus {
    Complete,
    BudgetExceeded { step: usize, terms: usize, budget: usize },
}

/// Largest `k` with `k·step + n ≤ max`.
pub fn truncation_index(step: usize, n: usize, max: usize) -> usize {
    if n > max {
        0
    } else {
        (max - n) / step
    }
}

/// Splits `K` into its `ℛ` part and the generator `S_𝒋 = −i K_𝒋/Δ_𝒋` off `ℛ`.
///
/// With `{L₂, z_𝒋} = −iΔ_𝒋 z_𝒋` this gives `{L₂, S} + K = K_res` exactly.
pub fn solve_homological(k: &PolynomialHamiltonian) -> (PolynomialHamiltonian, PolynomialHamiltonian) {
    let mut res = PolynomialHamiltonian::new();
    let mut s = PolynomialHamiltonian::new();
    for (key, c) in k.terms() {
        let delta = key.super_momentum();
        if delta == 0 {
            res.add_term(key.clone(), c);
        } else {
            s.add_term(
                key.clone(),
                &c.mul_i().scale_int(-1).div_rat(&crate::gauss::ratio(delta, 1)),
            );
        }
    }
    (res, s)
}

/// `K′_m = Σ_{k·step + n = m} (1/k!) ad_S^k(K_n)` for `m ≤ max`, with `ad_S K = {K, S}`.
///
/// `terms` is keyed by half-degree and may include `L₂` at key 1. The first
/// omitted bracket of every chain is reported with its norm bound.
pub fn lie_transform(
    terms: &BTreeMap<usize, PolynomialHamiltonian>,
    s: &PolynomialHamiltonian,
    step: usize,
    max: usize,
) -> (BTreeMap<usize, PolynomialHamiltonian>, Vec<DroppedMass>) {
    let mut out: BTreeMap<usize, PolynomialHamiltonian> = BTreeMap::new();
    let mut dropped = Vec::new();
    let ms = step + 1;
    let s_norm = s.linfty_norm();
    for (&n, kn) in terms {
        let acc = out.entry(n).or_default();
        *acc = acc.add(kn);
        if s.is_zero() {
            continue;
        }
        let kstar = truncation_index(step, n, max);
        let mut cur = kn.clone();
        for k in 1..=kstar {
            cur = cur.poisson(s).scale(&GaussRat::real(crate::gauss::ratio(1, k as i64)));
            let e = out.entry(n + k * step).or_default();
            *e = e.add(&cur);
        }
        let cur_m = n + kstar * step;
        dropped.push(DroppedMass {
            step,
            source: n,
            brackets: kstar + 1,
            target: cur_m + step,
            bound: 4.0 * (cur_m * ms) as f64 * s_norm * cur.linfty_norm() / (kstar + 1) as f64,
        });
    }
    out.retain(|_, p| !p.is_zero());
    (out, dropped)
}

/// `(‖K‖ / m^{2(m−2)})^{1/(2m−3)}`, the smallest `𝖢` with `‖K_{2m}‖ ≤ 𝖢^{2m−3} m^{2(m−2)}`.
pub fn resonant_shape_constant(m: usize, norm: f64) -> f64 {
    let mf = m as f64;
    (norm / mf.powf(2.0 * (mf - 2.0))).powf(1.0 / (2.0 * mf - 3.0))
}

/// Output of [`resonant_normal_form`].
#[derive(Clone, Debug)]
pub struct ResonantNFResult {
    pub r: usize,
    pub m: u64,
    pub cap: usize,
    /// `K_{2m}` keyed by `m = 2..=r`.
    pub terms: BTreeMap<usize, PolynomialHamiltonian>,
    /// Exact Taylor terms of the remainder, keyed by `m = r+1..=r+cap`.
    pub remainder: BTreeMap<usize, PolynomialHamiltonian>,
    /// `S_𝔯` at index `𝔯 − 1`.
    pub generators: Vec<PolynomialHamiltonian>,
    pub dropped: Vec<DroppedMass>,
    /// Whether `{L₂, S} + K = K_res` held exactly at each step.
    pub homological_exact: Vec<bool>,
    pub status: NfStatus,
}

#[derive(Serialize, Deserialize)]
struct ResonantManifest {
    kind: String,
    r: usize,
    #[serde(rename = "M")]
    m: u64,
    cap: usize,
    norms: BTreeMap<String, f64>,
    minimal_c: f64,
    status: NfStatus,
    homological_exact: Vec<bool>,
    dropped: Vec<DroppedMass>,
    files: Vec<String>,
}

/// Runs steps `𝔯 = 1..r−1` on `L₂ + P₄` restricted to `⟦−M, M⟧`.
pub fn resonant_normal_form(m: u64, r: usize, opts: NfOptions) -> Result<ResonantNFResult> {
    if r < 2 || m < 1 {
        return Err(Error::InvalidParameter(format!(
            "need r >= 2 and M >= 1, got r={r}, M={m}"
        )));
    }
    let max = r + opts.cap;
    let l2 = build_l2(m);
    let mut terms: BTreeMap<usize, PolynomialHamiltonian> = BTreeMap::new();
    terms.insert(1, l2.clone());
    terms.insert(2, build_p4(m));
    let mut out = ResonantNFResult {
        r,
        m,
        cap: opts.cap,
        terms: BTreeMap::new(),
        remainder: BTreeMap::new(),
        generators: Vec::new(),
        dropped: Vec::new(),
        homological_exact: Vec::new(),
        status: NfStatus::Complete,
    };
    for step in 1..r {
        let target = terms.get(&(step + 1)).cloned().unwrap_or_default();
        let (res, s) = solve_homological(&target);
        out.homological_exact.push(l2.poisson(&s).add(&target) == res);
        let (next, dropped) = lie_transform(&terms, &s, step, max);
        out.dropped.extend(dropped);
        out.generators.push(s);
        terms = next;
        terms.insert(step + 1, res);
        if let Some(big) = terms.values().map(|p| p.len()).max().filter(|&n| n > opts.budget_terms) {
            out.status = NfStatus::BudgetExceeded {
                step,
                terms: big,
                budget: opts.budget_terms,
            };
            break;
        }
    }
    terms.remove(&1);
    for (deg, p) in terms {
        if deg <= r {
            out.terms.insert(deg, p);
        } else {
            out.remainder.insert(deg, p);
        }
    }
    Ok(out)
}

impl ResonantNFResult {
    /// `L₂ + Σ_{m=2}^r K_{2m}`.
    pub fn hamiltonian(&self) -> PolynomialHamiltonian {
        self.terms.values().fold(build_l2(self.m), |acc, p| acc.add(p))
    }

    pub fn norms(&self) -> BTreeMap<usize, f64> {
        self.terms.iter().map(|(&m, p)| (m, p.linfty_norm())).collect()
    }

    /// Smallest `𝖢` fitting every `‖K_{2m}‖` to the shape `𝖢^{2m−3} m^{2(m−2)}`.
    pub fn minimal_c(&self) -> f64 {
        self.norms()
            .into_iter()
            .map(|(m, n)| resonant_shape_constant(m, n))
            .fold(0.0, f64::max)
    }

    /// `φ(z) − z` for `φ = Φ_{S₁}^1 ∘ ⋯ ∘ Φ_{S_{r−1}}^1`.
    pub fn transform_displacement(&self, z: &FourierState) -> Result<Vec<Complex64>> {
        let zm = z.resize(self.m);
        let mut y = zm.as_slice().to_vec();
        let mut total = vec![Complex64::new(0.0, 0.0); y.len()];
        for s in self.generators.iter().rev() {
            if s.is_zero() {
                continue;
            }
            let d = flow_displacement(&s.compile(self.m), &y, 1.0, 1e-12, |_, _| Ok(()))?;
            for i in 0..y.len() {
                y[i] += d[i];
                total[i] += d[i];
            }
        }
        Ok(total)
    }

    pub fn transform(&self, z: &FourierState) -> Result<FourierState> {
        let zm = z.resize(self.m);
        let d = self.transform_displacement(&zm)?;
        let v = zm.as_slice().iter().zip(&d).map(|(a, b)| a + b).collect();
        Ok(FourierState::from_vec(self.m, v, z.params))
    }

    /// `|(L₂+P₄)(φ(z)) − (L₂ + Σ K_{2m})(z)|`, with the `L₂` part taken from the displacement.
    pub fn conjugation_defect(&self, z: &FourierState) -> Result<f64> {
        let zm = z.resize(self.m);
        let d = self.transform_displacement(&zm)?;
        let y: Vec<Complex64> = zm.as_slice().iter().zip(&d).map(|(a, b)| a + b).collect();
        let mi = self.m as i64;
        let dl2: f64 = (-mi..=mi)
            .zip(zm.as_slice().iter().zip(&y))
            .zip(&d)
            .map(|((a, (z0, y0)), di)| (a * a) as f64 * (di * (y0 + z0).conj()).re)
            .sum();
        let p4 = build_p4(self.m).compile(self.m).value(&y)?;
        let mut rest = PolynomialHamiltonian::new();
        for p in self.terms.values() {
            rest = rest.add(p);
        }
        let k = rest.compile(self.m).value(zm.as_slice())?;
        Ok((Complex64::new(dl2, 0.0) + p4 - k).norm())
    }

    /// Writes `K{2m}.jsonl`, `S{𝔯}.jsonl`, `R{2m}.jsonl` and `manifest.json`.
    pub fn save(&self, dir: &Path) -> Result<Vec<String>> {
        fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        let mut put = |name: String, p: &PolynomialHamiltonian| -> Result<()> {
            p.write_jsonl(BufWriter::new(File::create(dir.join(&name))?))?;
            files.push(name);
            Ok(())
        };
        for (m, p) in &self.terms {
            put(format!("K{}.jsonl", 2 * m), p)?;
        }
        for (i, s) in self.generators.iter().enumerate() {
            put(format!("S{}.jsonl", i + 1), s)?;
        }
        for (m, p) in &self.remainder {
            put(format!("R{}.jsonl", 2 * m), p)?;
        }
        let manifest = ResonantManifest {
            kind: "resonant".into(),
            r: self.r,
            m: self.m,
            cap: self.cap,
            norms: self
                .norms()
                .into_iter()
                .map(|(m, n)| (format!("K{}", 2 * m), n))
                .collect(),
            minimal_c: self.minimal_c(),
            status: self.status.clone(),
            homological_exact: self.homological_exact.clone(),
            dropped: self.dropped.clone(),
            files: files.clone(),
        };
        serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("manifest.json"))?), &manifest)?;
        files.push("manifest.json".into());
        Ok(files)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let man: ResonantManifest = serde_json::from_reader(BufReader::new(File::open(dir.join("manifest.json"))?))?;
        if man.kind != "resonant" {
            return Err(Error::Parse(format!("manifest kind {} is not resonant", man.kind)));
        }
        let read = |name: &str| -> Result<PolynomialHamiltonian> {
            PolynomialHamiltonian::read_jsonl(BufReader::new(File::open(dir.join(name))?))
        };
        let mut out = ResonantNFResult {
            r: man.r,
            m: man.m,
            cap: man.cap,
            terms: BTreeMap::new(),
            remainder: BTreeMap::new(),
            generators: Vec::new(),
            dropped: man.dropped,
            homological_exact: man.homological_exact,
            status: man.status,
        };
        for f in &man.files {
            let num = |prefix: &str| f.strip_prefix(prefix)?.strip_suffix(".jsonl")?.parse::<usize>().ok();
            if let Some(d) = num("K") {
                out.terms.insert(d / 2, read(f)?);
            } else if let Some(i) = num("S") {
                if out.generators.len() < i {
                    out.generators.resize(i, PolynomialHamiltonian::new());
                }
                out.generators[i - 1] = read(f)?;
            } else if let Some(d) = num("R") {
                out.remainder.insert(d / 2, read(f)?);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modespace::{enumerate, Family, DEFAULT_BUDGET};
    use crate::polyham::{build_l4, random_real_polynomial};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn p4_normalizes_to_l4() {
        let (res, s) = solve_homological(&build_p4(4));
        assert_eq!(res, build_l4(4));
        assert_eq!(build_l2(4).poisson(&s).add(&build_p4(4)), res);
        assert!(res.linfty_norm() <= build_p4(4).linfty_norm());
        assert!(s.linfty_norm() <= build_p4(4).linfty_norm());
        let (res, s) = solve_homological(&build_l4(3));
        assert!(s.is_zero() && res == build_l4(3));
    }

    #[test]
    fn random_homological_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let pool = enumerate(3, 3, Family::ZeroMomentum, DEFAULT_BUDGET).unwrap();
        let k = random_real_polynomial(&mut rng, &pool, 50);
        let (res, s) = solve_homological(&k);
        assert_eq!(build_l2(3).poisson(&s).add(&k), res);
        assert!(res.is_resonant() && s.is_real() && res.is_real());
        assert!(s.terms().keys().all(|key| !key.classify().in_r));
    }

    #[test]
    fn zero_generator_is_identity_and_low_orders_are_kept() {
        let mut terms = BTreeMap::new();
        terms.insert(1, build_l2(2));
        terms.insert(2, build_p4(2));
        let (out, dropped) = lie_transform(&terms, &PolynomialHamiltonian::new(), 1, 3);
        assert_eq!(out, terms);
        assert!(dropped.is_empty());
        let (_, s) = solve_homological(&build_p4(2));
        let (out, _) = lie_transform(&terms, &s, 1, 3);
        assert_eq!(out[&1], build_l2(2));
        for (m, p) in &out {
            assert!(p.degrees().iter().all(|&d| d == 2 * m));
        }
    }

    #[test]
    fn order_two_gives_l4_and_order_three_is_resonant() {
        let nf = resonant_normal_form(
            4,
            2,
            NfOptions {
                cap: 0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(nf.terms[&2], build_l4(4));
        assert_eq!(nf.generators.len(), 1);
        let nf3 = resonant_normal_form(3, 3, NfOptions::default()).unwrap();
        assert!(nf3.homological_exact.iter().all(|&b| b));
        assert!(nf3.terms[&3].is_resonant() && nf3.terms[&3].is_real());
        assert!(nf3.remainder.contains_key(&4));
        assert!(nf3.minimal_c() > 0.0);
    }

    #[test]
    fn actions_commute_with_quartic_normal_form() {
        let h = build_l2(4).add(&build_l4(4));
        for a in -4..=4i64 {
            let ia = PolynomialHamiltonian::from_terms([(
                crate::modespace::MultiIndex::from_signed(&[a], &[a]),
                GaussRat::from_int(1),
            )]);
            assert!(ia.poisson(&h).is_zero());
        }
    }

    #[test]
    fn save_and_load_round_trip() {
        let nf = resonant_normal_form(2, 3, NfOptions::default()).unwrap();
        let dir = std::env::temp_dir().join(format!("spnf-res-{}", std::process::id()));
        nf.save(&dir).unwrap();
        let back = ResonantNFResult::load(&dir).unwrap();
        assert_eq!(back.terms, nf.terms);
        assert_eq!(back.generators, nf.generators);
        assert_eq!(back.remainder, nf.remainder);
        fs::remove_dir_all(&dir).unwrap();
    }
}
