//! Rational normal form: removal of the non-integrable resonant terms
//! against `L₄` with rational generators.
//!
//! Step `𝔯 = 1, …, r−2` splits `L_{2(𝔯+2)}` into its integrable part and
//! its `𝒩` part, and conjugates by the flow of `𝒮_𝔯` with
//! `{L₄, 𝒮_𝔯} + L_{2(𝔯+2)} = L^♯_{2(𝔯+2)}`. The brackets `ad^k_𝒮(L₄)` are
//! never formed symbolically: by the homological equation they are folded
//! into the chain of `L_{2(𝔯+2)}` with weights `1/(k+1)` and `k/(k+1)`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::bracket_from_jets;
use crate::gauss::{ratio, GaussRat};
use crate::gevrey::FourierState;
use crate::polyham::{build_l2, build_l4, flow_displacement, PolynomialHamiltonian};
use crate::rathom::{omega_coeffs, RatKey, RatStats, RationalHamiltonian};
use crate::resonant_nf::{truncation_index, DroppedMass, NfOptions, NfStatus, ResonantNFResult};

/// Splits `L` into `L_int` and `𝒮` with `𝒮_{𝒋,(𝐡,𝒋)} = −L_{𝒋,𝐡}` for `𝒋 ∈ 𝒩`.
///
/// Since `{L₄, z_𝒋} = −iω_𝒋 z_𝒋` and `L₄` commutes with every denominator,
/// `{L₄, 𝒮} = −L_𝒩` and hence `{L₄, 𝒮} + L = L_int`.
pub fn solve_rational_homological(l: &RationalHamiltonian) -> Result<(RationalHamiltonian, RationalHamiltonian)> {
    let m = l.mode_bound();
    let mut int = RationalHamiltonian::new(m);
    let mut s = RationalHamiltonian::new(m);
    for (k, c) in l.terms() {
        let cls = k.num.classify();
        if !cls.in_r {
            return Err(Error::NotResonant(format!("numerator {} is not resonant", k.num)));
        }
        if cls.integrable {
            int.add_term(k.clone(), c);
            continue;
        }
        if omega_coeffs(&k.num, m).max_abs_coeff() == num_rational::BigRational::from_integer(0.into()) {
            return Err(Error::VanishingDenominator(format!(
                "omega of {} vanishes identically for |a| <= {m}",
                k.num
            )));
        }
        let mut den = k.den.clone();
        den.push(k.num.clone());
        s.add_term(RatKey::new(k.num.clone(), den), &c.scale_int(-1));
    }
    Ok((int, s))
}

/// `|{L₄, 𝒮}(z) + L(z) − L_int(z)|` relative to the size of the bracket terms.
pub fn homological_residual(
    l: &RationalHamiltonian,
    l_int: &RationalHamiltonian,
    s: &RationalHamiltonian,
    z: &FourierState,
) -> Result<f64> {
    let m = l.mode_bound().max(z.mode_bound());
    let v = z.resize(m).into_vec();
    let f = build_l4(l.mode_bound()).compile(m).jet(&v, true)?;
    let g = s.compile(m).jet(&v, true)?;
    let br = bracket_from_jets(&f, &g);
    let lv = l.compile(m).value(&v)?;
    let li = l_int.compile(m).value(&v)?;
    let scale: f64 = (0..v.len())
        .map(|a| (f.d_z[a] * g.d_conj[a]).norm() + (f.d_conj[a] * g.d_z[a]).norm())
        .sum::<f64>()
        + lv.norm()
        + li.norm();
    Ok((br + lv - li).norm() / scale.max(f64::MIN_POSITIVE))
}

fn bracket_bound(p: &RationalHamiltonian, s: &RationalHamiltonian) -> f64 {
    let (a, b) = (p.stats(), s.stats());
    4.0 * (a.m * b.m) as f64 * (1 + a.h + b.h) as f64 * p.rat_norm() * s.rat_norm()
}

/// `(1/k!) ad_𝒮^k(P)` for `k = 1..=kmax`, each scaled as it is produced.
fn chain(p: &RationalHamiltonian, s: &RationalHamiltonian, kmax: usize) -> Vec<RationalHamiltonian> {
    let mut out = Vec::with_capacity(kmax);
    let mut cur = p.clone();
    for k in 1..=kmax {
        cur = cur.rat_poisson(s).scale(&GaussRat::real(ratio(1, k as i64)));
        out.push(cur.clone());
    }
    out
}

/// One rational Lie transform. `terms` maps order `q ≥ 3` to `L_{2q}`;
/// `target` is `L_{2(step+2)}` and `int` its integrable part.
fn rational_lie_transform(
    terms: &BTreeMap<usize, RationalHamiltonian>,
    int: &RationalHamiltonian,
    s: &RationalHamiltonian,
    step: usize,
    max: usize,
) -> (BTreeMap<usize, RationalHamiltonian>, Vec<DroppedMass>) {
    let m = s.mode_bound();
    let q0 = step + 2;
    let mut out: BTreeMap<usize, RationalHamiltonian> = BTreeMap::new();
    let mut dropped = Vec::new();
    let mut put = |q: usize, p: &RationalHamiltonian| {
        let e = out.entry(q).or_insert_with(|| RationalHamiltonian::new(m));
        *e = e.add(p);
    };
    for (&p, lp) in terms {
        let kstar = truncation_index(step, p, max);
        let last = if p == q0 {
            put(q0, int);
            // (1/k!) ad^k [ L_int + (k/(k+1)) L_𝒩 ] collects ad^k L and ad^{k+1} L₄ / (k+1).
            let n = lp.sub(int);
            let ci = chain(int, s, kstar);
            let cn = chain(&n, s, kstar);
            for k in 1..=kstar {
                let w = GaussRat::real(ratio(k as i64, k as i64 + 1));
                put(p + k * step, &ci[k - 1].add(&cn[k - 1].scale(&w)));
            }
            if kstar == 0 {
                lp.clone()
            } else {
                ci[kstar - 1].add(&cn[kstar - 1])
            }
        } else {
            put(p, lp);
            let c = chain(lp, s, kstar);
            for (k, t) in c.iter().enumerate() {
                put(p + (k + 1) * step, t);
            }
            c.last().cloned().unwrap_or_else(|| lp.clone())
        };
        dropped.push(DroppedMass {
            step,
            source: p,
            brackets: kstar + 1,
            target: p + (kstar + 1) * step,
            bound: bracket_bound(&last, s) / (kstar + 1) as f64,
        });
    }
    out.retain(|_, p| !p.is_zero());
    (out, dropped)
}

/// `(‖L‖ / (q^{2(q−2)} min(q,𝔯)^{4(q−3)}))^{1/(4q−9)}`.
pub fn rational_shape_constant(q: usize, step: usize, norm: f64) -> f64 {
    let qf = q as f64;
    let mn = q.min(step).max(1) as f64;
    (norm / (qf.powf(2.0 * (qf - 2.0)) * mn.powf(4.0 * (qf - 3.0)))).powf(1.0 / (4.0 * qf - 9.0))
}

/// One row of the per-step statistics table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub step: usize,
    pub q: usize,
    pub norm: f64,
    #[serde(flatten)]
    pub stats: RatStats,
}

/// Output of [`rational_normal_form`].
#[derive(Clone, Debug)]
pub struct RationalNFResult {
    pub r: usize,
    pub m: u64,
    pub gamma: f64,
    pub cap: usize,
    /// `L_{2q}` keyed by `q = 3..=r`.
    pub terms: BTreeMap<usize, RationalHamiltonian>,
    /// Exact Taylor terms of `Υ`, keyed by `q = r+1..=r+cap`.
    pub remainder: BTreeMap<usize, RationalHamiltonian>,
    /// `𝒮_𝔯` at index `𝔯 − 1`.
    pub generators: Vec<RationalHamiltonian>,
    pub dropped: Vec<DroppedMass>,
    pub stats: Vec<StatsRow>,
    /// `𝔪 ≤ 3q−6`, `𝔫 ≤ 2q−6`, `𝔥 ≤ 6𝔯` for every produced term.
    pub stats_within_budget: bool,
    pub status: NfStatus,
}

/// Runs steps `𝔯 = 1..r−2` on `L₂ + L₄ + Σ_{m=3}^r K_{2m}` from `res`.
pub fn rational_normal_form(res: &ResonantNFResult, r: usize, gamma: f64, opts: NfOptions) -> Result<RationalNFResult> {
    if r < 3 || r > res.r {
        return Err(Error::InvalidParameter(format!(
            "rational order r={r} needs 3 <= r <= {} (resonant order)",
            res.r
        )));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!("gamma={gamma} must lie in (0,1)")));
    }
    let m = res.m;
    let max = r + opts.cap;
    let mut terms: BTreeMap<usize, RationalHamiltonian> = res
        .terms
        .iter()
        .filter(|(&q, _)| (3..=r).contains(&q))
        .map(|(&q, p)| (q, RationalHamiltonian::from_polynomial(p, m)))
        .collect();
    let mut out = RationalNFResult {
        r,
        m,
        gamma,
        cap: opts.cap,
        terms: BTreeMap::new(),
        remainder: BTreeMap::new(),
        generators: Vec::new(),
        dropped: Vec::new(),
        stats: Vec::new(),
        stats_within_budget: true,
        status: NfStatus::Complete,
    };
    for step in 1..=r - 2 {
        let q0 = step + 2;
        let target = terms.get(&q0).cloned().unwrap_or_else(|| RationalHamiltonian::new(m));
        let (int, s) = solve_rational_homological(&target)?;
        let (next, dropped) = rational_lie_transform(&terms, &int, &s, step, max);
        out.dropped.extend(dropped);
        out.stats.push(StatsRow {
            step,
            q: q0 - 1,
            norm: s.rat_norm(),
            stats: s.stats(),
        });
        out.generators.push(s);
        terms = next;
        for (&q, p) in &terms {
            let st = p.stats();
            out.stats.push(StatsRow {
                step,
                q,
                norm: p.rat_norm(),
                stats: st,
            });
            if q <= r && (st.m > 3 * q - 6 || st.n > 2 * q - 6 || st.h > 6 * step) {
                out.stats_within_budget = false;
            }
        }
        if let Some(big) = terms.values().map(|p| p.len()).max().filter(|&n| n > opts.budget_terms) {
            out.status = NfStatus::BudgetExceeded {
                step,
                terms: big,
                budget: opts.budget_terms,
            };
            break;
        }
    }
    for (q, p) in terms {
        if q <= r {
            out.terms.insert(q, p);
        } else {
            out.remainder.insert(q, p);
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct RationalManifest {
    kind: String,
    r: usize,
    #[serde(rename = "M")]
    m: u64,
    gamma: f64,
    cap: usize,
    norms: BTreeMap<String, f64>,
    minimal_c: f64,
    stats_within_budget: bool,
    status: NfStatus,
    dropped: Vec<DroppedMass>,
    files: Vec<String>,
}

impl RationalNFResult {
    /// `L₂ + L₄ + Σ_{q=3}^r L_{2q}`.
    pub fn hamiltonian(&self) -> RationalHamiltonian {
        let base = RationalHamiltonian::from_polynomial(&build_l2(self.m).add(&build_l4(self.m)), self.m);
        self.terms.values().fold(base, |acc, p| acc.add(p))
    }

    /// Every `L_{2q}` has integrable numerators only.
    pub fn is_integrable(&self) -> bool {
        self.terms
            .values()
            .all(|p| p.terms().keys().all(|k| k.num.is_integrable()))
    }

    pub fn norms(&self) -> BTreeMap<usize, f64> {
        self.terms.iter().map(|(&q, p)| (q, p.rat_norm())).collect()
    }

    /// Smallest `𝖢` fitting `‖L_{2q}‖ ≤ 𝖢^{4q−9} q^{2(q−2)} min(q,𝔯)^{4(q−3)}` at `𝔯 = r−1`.
    pub fn minimal_c(&self) -> f64 {
        self.norms()
            .into_iter()
            .map(|(q, n)| rational_shape_constant(q, self.r - 1, n))
            .fold(0.0, f64::max)
    }

    /// `φ(z) − z` for `φ = Φ_{𝒮₁}^1 ∘ ⋯ ∘ Φ_{𝒮_{r−2}}^1`, aborting outside `𝔘_{γ/2}`.
    pub fn transform_displacement(&self, z: &FourierState) -> Result<Vec<Complex64>> {
        let zm = z.resize(self.m);
        let mut y = zm.as_slice().to_vec();
        let mut total = vec![Complex64::new(0.0, 0.0); y.len()];
        let params = z.params;
        let m = self.m;
        for s in self.generators.iter().rev() {
            if s.is_zero() {
                continue;
            }
            let c = s.compile(m);
            let gamma = self.gamma;
            let guard = |t: f64, p: &[Complex64]| -> Result<()> {
                let n = FourierState::from_vec(m, p.to_vec(), params).norm_sigma();
                match c.min_abs_omega(p) {
                    Some(w) if w <= 0.5 * gamma * n * n => Err(Error::ResonanceCrossing {
                        t,
                        detail: format!("min |omega| = {w:e} at norm {n:e}"),
                    }),
                    _ => Ok(()),
                }
            };
            guard(0.0, &y)?;
            let d = flow_displacement(&c, &y, 1.0, 1e-12, guard)?;
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

    /// `|H^{(2r)}(φ(z)) − (L₂ + L₄ + Σ L_{2q})(z)|` for the resonant
    /// truncation `H^{(2r)} = L₂ + Σ_{m=2}^r K_{2m}` of `res`.
    pub fn conjugation_defect(&self, res: &ResonantNFResult, z: &FourierState) -> Result<f64> {
        let zm = z.resize(self.m);
        let d = self.transform_displacement(&zm)?;
        let y: Vec<Complex64> = zm.as_slice().iter().zip(&d).map(|(a, b)| a + b).collect();
        let mi = self.m as i64;
        let dl2: f64 = (-mi..=mi)
            .zip(zm.as_slice().iter().zip(&y))
            .zip(&d)
            .map(|((a, (z0, y0)), di)| (a * a) as f64 * (di * (y0 + z0).conj()).re)
            .sum();
        let mut h = PolynomialHamiltonian::new();
        for (_, p) in res.terms.range(2..=self.r) {
            h = h.add(p);
        }
        let hv = h.compile(self.m).value(&y)?;
        let mut l = RationalHamiltonian::from_polynomial(&build_l4(self.m), self.m);
        for p in self.terms.values() {
            l = l.add(p);
        }
        let lv = l.compile(self.m).value(zm.as_slice())?;
        Ok((Complex64::new(dl2, 0.0) + hv - lv).norm())
    }

    pub fn write_stats_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "step,q,norm,m,n,h")?;
        for s in &self.stats {
            writeln!(
                w,
                "{},{},{:e},{},{},{}",
                s.step, s.q, s.norm, s.stats.m, s.stats.n, s.stats.h
            )?;
        }
        Ok(())
    }

    /// Writes `L{2q}.jsonl`, `S{𝔯}.jsonl`, `U{2q}.jsonl`, `stats.csv` and `manifest.json`.
    pub fn save(&self, dir: &Path) -> Result<Vec<String>> {
        fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        let mut put = |name: String, p: &RationalHamiltonian| -> Result<()> {
            p.write_jsonl(BufWriter::new(File::create(dir.join(&name))?))?;
            files.push(name);
            Ok(())
        };
        for (q, p) in &self.terms {
            put(format!("L{}.jsonl", 2 * q), p)?;
        }
        for (i, s) in self.generators.iter().enumerate() {
            put(format!("S{}.jsonl", i + 1), s)?;
        }
        for (q, p) in &self.remainder {
            put(format!("U{}.jsonl", 2 * q), p)?;
        }
        self.write_stats_csv(BufWriter::new(File::create(dir.join("stats.csv"))?))?;
        files.push("stats.csv".into());
        let manifest = RationalManifest {
            kind: "rational".into(),
            r: self.r,
            m: self.m,
            gamma: self.gamma,
            cap: self.cap,
            norms: self
                .norms()
                .into_iter()
                .map(|(q, n)| (format!("L{}", 2 * q), n))
                .collect(),
            minimal_c: self.minimal_c(),
            stats_within_budget: self.stats_within_budget,
            status: self.status.clone(),
            dropped: self.dropped.clone(),
            files: files.clone(),
        };
        serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("manifest.json"))?), &manifest)?;
        files.push("manifest.json".into());
        Ok(files)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let man: RationalManifest = serde_json::from_reader(BufReader::new(File::open(dir.join("manifest.json"))?))?;
        if man.kind != "rational" {
            return Err(Error::Parse(format!("manifest kind {} is not rational", man.kind)));
        }
        let m = man.m;
        let read = |name: &str| -> Result<RationalHamiltonian> {
            RationalHamiltonian::read_jsonl(BufReader::new(File::open(dir.join(name))?), m)
        };
        let mut out = RationalNFResult {
            r: man.r,
            m,
            gamma: man.gamma,
            cap: man.cap,
            terms: BTreeMap::new(),
            remainder: BTreeMap::new(),
            generators: Vec::new(),
            dropped: man.dropped,
            stats: Vec::new(),
            stats_within_budget: man.stats_within_budget,
            status: man.status,
        };
        for f in &man.files {
            let num = |prefix: &str| f.strip_prefix(prefix)?.strip_suffix(".jsonl")?.parse::<usize>().ok();
            if let Some(d) = num("L") {
                out.terms.insert(d / 2, read(f)?);
            } else if let Some(i) = num("S") {
                if out.generators.len() < i {
                    out.generators.resize(i, RationalHamiltonian::new(m));
                }
                out.generators[i - 1] = read(f)?;
            } else if let Some(d) = num("U") {
                out.remainder.insert(d / 2, read(f)?);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gevrey::GevreyParams;
    use crate::modespace::MultiIndex;
    use crate::resonant_nf::resonant_normal_form;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(rng: &mut ChaCha8Rng, m: u64, scale: f64) -> FourierState {
        let v = (0..2 * m + 1)
            .map(|_| Complex64::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale)))
            .collect();
        FourierState::from_vec(m, v, GevreyParams::default())
    }

    #[test]
    fn integrable_input_has_no_generator() {
        let l = RationalHamiltonian::from_polynomial(&build_l4(3), 3);
        let (int, s) = solve_rational_homological(&l).unwrap();
        assert!(s.is_zero());
        assert_eq!(int, l);
    }

    #[test]
    fn single_resonant_term_is_removed_pointwise() {
        let num = MultiIndex::from_signed(&[-3, 1, 2], &[-2, -1, 3]);
        let mut l = RationalHamiltonian::new(3);
        let c = GaussRat::new(ratio(3, 7), ratio(-2, 5));
        l.add_term(RatKey::new(num.clone(), vec![]), &c);
        l.add_term(RatKey::new(num.conjugate(), vec![]), &c.conj());
        let (int, s) = solve_rational_homological(&l).unwrap();
        assert!(int.is_zero());
        assert!(s.rat_norm() <= l.rat_norm() && int.rat_norm() <= l.rat_norm());
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let z = random_state(&mut rng, 3, 1.0);
            assert!(homological_residual(&l, &int, &s, &z).unwrap() < 1e-9);
        }
    }

    #[test]
    fn order_three_rational_form_is_integrable() {
        let res = resonant_normal_form(3, 3, NfOptions::default()).unwrap();
        let rat = rational_normal_form(&res, 3, 1e-3, NfOptions::default()).unwrap();
        assert!(rat.is_integrable() && rat.stats_within_budget);
        assert_eq!(rat.generators.len(), 1);
        assert!(rat.generators[0].terms().keys().all(|k| k.num.classify().in_n));
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let z = random_state(&mut rng, 3, 1.0);
        let l6 = RationalHamiltonian::from_polynomial(&res.terms[&3], 3);
        let r = homological_residual(&l6, &rat.terms[&3], &rat.generators[0], &z).unwrap();
        assert!(r < 1e-9);
    }

    #[test]
    fn save_and_load_round_trip() {
        let res = resonant_normal_form(2, 3, NfOptions::default()).unwrap();
        let rat = rational_normal_form(&res, 3, 1e-3, NfOptions::default()).unwrap();
        let dir = std::env::temp_dir().join(format!("spnf-rat-{}", std::process::id()));
        rat.save(&dir).unwrap();
        let back = RationalNFResult::load(&dir).unwrap();
        assert_eq!(back.terms, rat.terms);
        assert_eq!(back.generators, rat.generators);
        fs::remove_dir_all(&dir).unwrap();
    }
}
