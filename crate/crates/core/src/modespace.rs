//! Signed Fourier modes, multi-indices and their resonance classes.
//!
//! A mode index `j = (δ, a)` stands for `z_a` when `δ = +1` and for `z̄_a`
//! when `δ = −1`. A multi-index is a tuple of mode indices and labels the
//! monomial `z_𝒋 = Π z_{j_β}`. The canonical form sorts entries by `a`
//! ascending, with `δ = −1` before `δ = +1`.
//!
//! Besides the combinatorics, this module hosts the exhaustive finite-range
//! checks of the integer inequalities used by the normal-form estimates.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default cap on enumeration work (number of half multisets or outputs).
pub const DEFAULT_BUDGET: u128 = 20_000_000;

/// A signed mode `(δ, a)` with `δ ∈ {−1, +1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ModeIndex {
    pub delta: i8,
    pub a: i64,
}

impl ModeIndex {
    /// Panics if `delta` is not `±1`.
    pub fn new(delta: i8, a: i64) -> Self {
        assert!(delta == 1 || delta == -1, "delta must be ±1, got {delta}");
        Self { delta, a }
    }

    pub fn plus(a: i64) -> Self {
        Self { delta: 1, a }
    }

    pub fn minus(a: i64) -> Self {
        Self { delta: -1, a }
    }

    #[must_use]
    pub fn conjugate(self) -> Self {
        Self {
            delta: -self.delta,
            a: self.a,
        }
    }

    /// `|j| = |a|`.
    pub fn abs(self) -> u64 {
        self.a.unsigned_abs()
    }

    /// `⟨j⟩ = max(1, |a|)`.
    pub fn weight(self) -> u64 {
        self.abs().max(1)
    }
}

impl Ord for ModeIndex {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.a, self.delta).cmp(&(other.a, other.delta))
    }
}

impl PartialOrd for ModeIndex {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for ModeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.delta, self.a)
    }
}

impl Serialize for ModeIndex {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        (self.delta, self.a).serialize(s)
    }
}

impl<'de> Deserialize<'de> for ModeIndex {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let (delta, a) = <(i8, i64)>::deserialize(d)?;
        if delta != 1 && delta != -1 {
            return Err(serde::de::Error::custom(format!("delta must be ±1, got {delta}")));
        }
        Ok(Self { delta, a })
    }
}

/// A tuple of signed modes.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<ModeIndex>);

/// Membership flags for the nested sets `𝒵 ⊃ ℳ ⊃ ℛ ⊃ Int` and `𝒩 = ℛ \ Int`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ResonanceClass {
    pub in_z: bool,
    pub in_m: bool,
    pub in_r: bool,
    pub integrable: bool,
    pub in_n: bool,
}

impl MultiIndex {
    /// Wraps entries without reordering.
    pub fn raw(entries: Vec<ModeIndex>) -> Self {
        Self(entries)
    }

    /// Builds the canonical representative.
    pub fn new(mut entries: Vec<ModeIndex>) -> Self {
        entries.sort();
        Self(entries)
    }

    /// Canonical multi-index from `(δ, a)` pairs.
    pub fn from_pairs(pairs: &[(i8, i64)]) -> Self {
        Self::new(pairs.iter().map(|&(d, a)| ModeIndex::new(d, a)).collect())
    }

    /// Canonical multi-index with `plus` entries `(+1, a)` and `minus` entries `(−1, b)`.
    pub fn from_signed(plus: &[i64], minus: &[i64]) -> Self {
        let mut v: Vec<ModeIndex> = plus.iter().map(|&a| ModeIndex::plus(a)).collect();
        v.extend(minus.iter().map(|&b| ModeIndex::minus(b)));
        Self::new(v)
    }

    pub fn entries(&self) -> &[ModeIndex] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[must_use]
    pub fn canonicalize(&self) -> Self {
        Self::new(self.0.clone())
    }

    pub fn is_canonical(&self) -> bool {
        self.0.windows(2).all(|w| w[0] <= w[1])
    }

    /// `𝒋̄`, canonical.
    #[must_use]
    pub fn conjugate(&self) -> Self {
        Self::new(self.0.iter().map(|j| j.conjugate()).collect())
    }

    /// `Σ δ_β a_β`.
    pub fn momentum(&self) -> i64 {
        self.0.iter().map(|j| j.delta as i64 * j.a).sum()
    }

    /// `Δ_𝒋 = Σ δ_β a_β²`.
    pub fn super_momentum(&self) -> i64 {
        self.0.iter().map(|j| j.delta as i64 * j.a * j.a).sum()
    }

    /// `Σ δ_β`.
    pub fn charge(&self) -> i64 {
        self.0.iter().map(|j| j.delta as i64).sum()
    }

    /// Number of occurrences of `j`.
    pub fn count(&self, j: ModeIndex) -> usize {
        self.0.iter().filter(|&&x| x == j).count()
    }

    /// Equal numbers of `(+1, a)` and `(−1, a)`.
    pub fn is_balanced_at(&self, a: i64) -> bool {
        self.count(ModeIndex::plus(a)) == self.count(ModeIndex::minus(a))
    }

    /// `μ_i(𝒋)`: the `i`-th largest `⟨j_β⟩`, `1 ≤ i ≤ #𝒋`.
    pub fn mu(&self, i: usize) -> Result<u64> {
        if i == 0 || i > self.len() {
            return Err(Error::InvalidParameter(format!(
                "mu index {i} out of range 1..={}",
                self.len()
            )));
        }
        let mut w: Vec<u64> = self.0.iter().map(|j| j.weight()).collect();
        w.sort_unstable_by(|a, b| b.cmp(a));
        Ok(w[i - 1])
    }

    /// `μ₁(𝒋)`, or 0 for the empty index.
    pub fn mu1(&self) -> u64 {
        self.0.iter().map(|j| j.weight()).max().unwrap_or(0)
    }

    /// Largest `|a|` among the entries.
    pub fn max_abs_mode(&self) -> u64 {
        self.0.iter().map(|j| j.abs()).max().unwrap_or(0)
    }

    /// Integrable: every `a` has as many `δ = +1` as `δ = −1` entries.
    pub fn is_integrable(&self) -> bool {
        let mut bal: HashMap<i64, i64> = HashMap::new();
        for j in &self.0 {
            *bal.entry(j.a).or_insert(0) += j.delta as i64;
        }
        bal.values().all(|&v| v == 0)
    }

    pub fn classify(&self) -> ResonanceClass {
        let in_z = self.charge() == 0;
        let in_m = in_z && self.momentum() == 0;
        let in_r = in_m && self.super_momentum() == 0;
        let integrable = self.is_integrable();
        ResonanceClass {
            in_z,
            in_m,
            in_r,
            integrable,
            in_n: in_r && !integrable,
        }
    }

    /// Removes one occurrence of `j`; `None` if absent. Keeps canonical order.
    pub fn remove_one(&self, j: ModeIndex) -> Option<Self> {
        let pos = self.0.iter().position(|&x| x == j)?;
        let mut v = self.0.clone();
        v.remove(pos);
        Some(Self(v))
    }

    /// Multiset union of two canonical indices (canonical result).
    #[must_use]
    pub fn merge(&self, other: &Self) -> Self {
        let (a, b) = (&self.0, &other.0);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut k) = (0, 0);
        while i < a.len() && k < b.len() {
            if a[i] <= b[k] {
                out.push(a[i]);
                i += 1;
            } else {
                out.push(b[k]);
                k += 1;
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[k..]);
        Self(out)
    }

    /// Distinct entries with multiplicities, in canonical order.
    pub fn distinct(&self) -> Vec<(ModeIndex, usize)> {
        let mut out: Vec<(ModeIndex, usize)> = Vec::new();
        for &j in &self.0 {
            match out.last_mut() {
                Some((k, c)) if *k == j => *c += 1,
                _ => out.push((j, 1)),
            }
        }
        out
    }

    /// Number of distinct orderings of the tuple, `(#𝒋)! / Π mult!`.
    pub fn orbit_size(&self) -> u128 {
        let mut n: u128 = 1;
        let mut seen = 0u128;
        for (_, c) in self.distinct() {
            for k in 1..=c as u128 {
                seen += 1;
                n = n * seen / k;
            }
        }
        n
    }

    /// Modes `a` of the `δ = +1` entries, sorted.
    pub fn plus_modes(&self) -> Vec<i64> {
        self.0.iter().filter(|j| j.delta == 1).map(|j| j.a).collect()
    }

    /// Modes `b` of the `δ = −1` entries, sorted.
    pub fn minus_modes(&self) -> Vec<i64> {
        self.0.iter().filter(|j| j.delta == -1).map(|j| j.a).collect()
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (k, j) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{j}")?;
        }
        write!(f, "]")
    }
}

/// Which multi-indices to enumerate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    /// `ℳ_m`: zero charge and zero momentum.
    ZeroMomentum,
    /// `ℛ_m`: additionally zero super-momentum.
    Resonant,
    /// `𝒩 ∩ ℛ_m`: resonant but not integrable.
    NonIntegrable,
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n.saturating_sub(k));
    let mut r: u128 = 1;
    for i in 0..k {
        r = r.saturating_mul(n - i) / (i + 1);
    }
    r
}

/// All nondecreasing `m`-tuples of modes in `⟦−M, M⟧`.
fn multisets(m: usize, big_m: i64) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let mut cur = vec![-big_m; m];
    if m == 0 {
        return vec![Vec::new()];
    }
    loop {
        out.push(cur.clone());
        let mut k = m;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            if cur[k] < big_m {
                let v = cur[k] + 1;
                for x in &mut cur[k..] {
                    *x = v;
                }
                break;
            }
        }
    }
}

/// Enumerates canonical `𝒋` with `#𝒋 = 2m` and all `|a| ≤ M` in the given family.
///
/// Meet-in-the-middle: the `m` positive and `m` negative entries are
/// multisets grouped by `(Σa, Σa²)` (or `Σa` for `ℳ_m`); every pair within a
/// group is a member. The output is sorted.
pub fn enumerate(m: usize, big_m: u64, family: Family, budget: u128) -> Result<Vec<MultiIndex>> {
    if m == 0 {
        return Err(Error::InvalidParameter("order m must be ≥ 1".into()));
    }
    let big_m = big_m as i64;
    let width = (2 * big_m + 1) as u128;
    let halves = binomial(width + m as u128 - 1, m as u128);
    if halves > budget {
        return Err(Error::Budget {
            what: format!("enumeration of order {m} on |a| ≤ {big_m}"),
            needed: halves,
            budget,
        });
    }
    let sets = multisets(m, big_m);
    let mut groups: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (k, s) in sets.iter().enumerate() {
        let sum: i64 = s.iter().sum();
        let sq: i64 = match family {
            Family::ZeroMomentum => 0,
            _ => s.iter().map(|a| a * a).sum(),
        };
        groups.entry((sum, sq)).or_default().push(k);
    }
    let total: u128 = groups.values().map(|g| (g.len() * g.len()) as u128).sum();
    if total > budget {
        return Err(Error::Budget {
            what: format!("output of order {m} on |a| ≤ {big_m}"),
            needed: total,
            budget,
        });
    }
    let mut out = Vec::new();
    for g in groups.values() {
        for &p in g {
            for &q in g {
                if family == Family::NonIntegrable && sets[p] == sets[q] {
                    continue;
                }
                out.push(MultiIndex::from_signed(&sets[p], &sets[q]));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// `ℛ_m` (or `𝒩 ∩ ℛ_m` when `non_integrable`) with `μ₁ ≤ M`.
pub fn enumerate_resonant(m: usize, big_m: u64, non_integrable: bool) -> Result<Vec<MultiIndex>> {
    let fam = if non_integrable {
        Family::NonIntegrable
    } else {
        Family::Resonant
    };
    enumerate(m, big_m, fam, DEFAULT_BUDGET)
}

/// `𝒩^{r,M}`: non-integrable resonant indices with `#𝒋 ≤ r` and `μ₁ ≤ M`.
pub fn enumerate_nonintegrable_upto(r: usize, big_m: u64, budget: u128) -> Result<Vec<MultiIndex>> {
    let mut out = Vec::new();
    // Every element of 𝒩 has length at least 6.
    for m in 3..=r / 2 {
        out.extend(enumerate(m, big_m, Family::NonIntegrable, budget)?);
    }
    Ok(out)
}

/// Outcome of a finite-range certification.
#[derive(Clone, Debug, Serialize)]
pub struct LemmaReport {
    pub lemma: String,
    pub range: String,
    pub checked: u64,
    pub violations: Vec<String>,
    pub min_margin: f64,
}

impl LemmaReport {
    pub fn new(lemma: &str, range: String) -> Self {
        Self {
            lemma: lemma.to_string(),
            range,
            checked: 0,
            violations: Vec::new(),
            min_margin: f64::INFINITY,
        }
    }

    /// Records one check with its margin (negative means violated).
    pub fn record(&mut self, margin: f64, describe: impl FnOnce() -> String) {
        self.checked += 1;
        if margin < self.min_margin {
            self.min_margin = margin;
        }
        if margin < 0.0 && self.violations.len() < 100 {
            self.violations.push(describe());
        }
    }

    /// Records a violation found by an exact (non-margin) test.
    pub fn record_exact(&mut self, ok: bool, margin: f64, describe: impl FnOnce() -> String) {
        self.checked += 1;
        if margin < self.min_margin {
            self.min_margin = margin;
        }
        if !ok && self.violations.len() < 100 {
            self.violations.push(describe());
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// For every `𝒋 ∈ ℛ_m` (`m ≤ m_max`, `μ₁ ≤ M`) and `|ℓ| ≤ ℓ_max`: either
/// `𝒋` is balanced at `ℓ` (so `{I_ℓ, z_𝒋} = 0`) or `m μ₃(𝒋)² ≥ ⟨ℓ⟩`.
pub fn check_mu3_bound(m_max: usize, big_m: u64, ell_max: u64) -> Result<LemmaReport> {
    let mut rep = LemmaReport::new("mu3-bound", format!("m<={m_max}, M<={big_m}, |l|<={ell_max}"));
    for m in 1..=m_max {
        for j in enumerate_resonant(m, big_m, false)? {
            for ell in -(ell_max as i64)..=ell_max as i64 {
                if j.is_balanced_at(ell) {
                    continue;
                }
                let wl = ell.unsigned_abs().max(1);
                let ok = j.len() >= 3 && {
                    let mu3 = j.mu(3)?;
                    (m as u64) * mu3 * mu3 >= wl
                };
                let margin = if j.len() >= 3 {
                    j.mu(3)? as f64 - (wl as f64 / m as f64).sqrt()
                } else {
                    -1.0
                };
                rep.record_exact(ok, margin, || format!("j={j}, l={ell}"));
            }
        }
    }
    Ok(rep)
}

/// Grids for the scalar inequalities and the exponential-decay bound.
#[derive(Clone, Debug)]
pub struct AppendixGrid {
    pub elog_bases: Vec<f64>,
    pub elog_x: Vec<f64>,
    pub mnelog_mn_max: u32,
    pub mnelog_x: Vec<f64>,
    pub sigmax_thetas: Vec<f64>,
    pub sigmax_x: Vec<f64>,
    pub expdecay_m_max: usize,
    pub expdecay_n_max: u64,
    pub expdecay_thetas: Vec<f64>,
    pub expdecay_mu1_max: u64,
}

impl Default for AppendixGrid {
    fn default() -> Self {
        let lin = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
            (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
        };
        let mut mnelog_x: Vec<f64> = (1..=60).map(|k| 1.0 + 1e-6 * 1.3f64.powi(k)).collect();
        mnelog_x.extend((1..=400).map(|k| 10f64.powf(k as f64 / 100.0)));
        Self {
            elog_bases: vec![1.001, 1.01, 1.1, 1.5, 2.0, std::f64::consts::E, 3.0, 5.0, 10.0, 100.0],
            elog_x: lin(-20.0, 20.0, 801),
            mnelog_mn_max: 6,
            mnelog_x,
            sigmax_thetas: vec![0.05, 0.1, 0.3, 0.5, 0.7, 0.9, 0.95],
            sigmax_x: lin(0.0, 1000.0, 4001),
            expdecay_m_max: 2,
            expdecay_n_max: 4,
            expdecay_thetas: vec![0.3, 0.5, 0.7],
            expdecay_mu1_max: 12,
        }
    }
}

/// `f(x) = a^x / log a − e x`.
pub fn elog(a: f64, x: f64) -> f64 {
    a.powf(x) / a.ln() - std::f64::consts::E * x
}

/// `f(x) = (n/e)^n (log x)^{−n} − m^n x^{−m}` for `x > 1`.
pub fn mnelog(m: u32, n: u32, x: f64) -> f64 {
    let (mf, nf) = (m as f64, n as f64);
    (nf / std::f64::consts::E).powf(nf) * x.ln().powf(-nf) - mf.powf(nf) * x.powf(-mf)
}

/// `f(x) = 1 + θx − (1+x)^θ`.
pub fn sigmax(theta: f64, x: f64) -> f64 {
    1.0 + theta * x - (1.0 + x).powf(theta)
}

/// Smallest `Σ_{β≥2}|j_β|^θ − (Σ_{β≥2}|j_β|)^θ` over `𝒋 ∈ ℳ_m` with
/// `μ₃ > N`, `μ₁ ≤ mu1_max`, and every choice of the removed entry `j₁`.
/// Returns `+∞` when no index qualifies.
pub fn expdecay_infimum(m: usize, n: u64, theta: f64, mu1_max: u64) -> Result<f64> {
    let mut best = f64::INFINITY;
    if 2 * m < 3 {
        return Ok(best);
    }
    for j in enumerate(m, mu1_max, Family::ZeroMomentum, DEFAULT_BUDGET)? {
        if j.mu(3)? <= n {
            continue;
        }
        let abs: Vec<f64> = j.entries().iter().map(|e| e.abs() as f64).collect();
        for skip in 0..abs.len() {
            let rest = abs.iter().enumerate().filter(|(k, _)| *k != skip).map(|(_, v)| *v);
            let s_theta: f64 = rest.clone().map(|v| v.powf(theta)).sum();
            let s: f64 = rest.sum();
            best = best.min(s_theta - s.powf(theta));
        }
    }
    Ok(best)
}

/// Checks `elog`, `mnelog`, `sigmax` and the exponential-decay bound on `grid`.
pub fn verify_appendix_inequalities(grid: &AppendixGrid) -> Result<Vec<LemmaReport>> {
    let tol = 1e-12;
    let mut elog_rep = LemmaReport::new("elog", format!("a in {:?}, x in [-20,20]", grid.elog_bases));
    for &a in &grid.elog_bases {
        let mut xs = grid.elog_x.clone();
        xs.push(1.0 / a.ln());
        for x in xs {
            let scale = 1.0f64.max(a.powf(x) / a.ln());
            let v = elog(a, x);
            elog_rep.record(v / scale + tol, || format!("a={a}, x={x}, f={v:e}"));
        }
    }

    let mut mn_rep = LemmaReport::new("mnelog", format!("m,n in 1..={}, x in (1, 1e4]", grid.mnelog_mn_max));
    for m in 1..=grid.mnelog_mn_max {
        for n in 1..=grid.mnelog_mn_max {
            for &x in &grid.mnelog_x {
                let v = mnelog(m, n, x);
                let (nf, mf) = (n as f64, m as f64);
                let scale = (nf / std::f64::consts::E).powf(nf) * x.ln().powf(-nf);
                let margin = if scale.is_finite() && scale > 0.0 {
                    v / scale + tol
                } else {
                    // Compare in log space when the terms under/overflow.
                    (nf * (nf / std::f64::consts::E).ln() - nf * x.ln().ln()) - (nf * mf.ln() - mf * x.ln()) + tol
                };
                mn_rep.record(margin, || format!("m={m}, n={n}, x={x}, f={v:e}"));
            }
        }
    }

    let mut sg_rep = LemmaReport::new("sigmax", format!("theta in {:?}, x in [0,1000]", grid.sigmax_thetas));
    for &th in &grid.sigmax_thetas {
        for &x in &grid.sigmax_x {
            let v = sigmax(th, x);
            sg_rep.record(v / (1.0 + th * x) + tol, || format!("theta={th}, x={x}, f={v:e}"));
        }
    }

    let mut ed_rep = LemmaReport::new(
        "expdecay",
        format!(
            "m<={}, N<={}, theta in {:?}, mu1<={}",
            grid.expdecay_m_max, grid.expdecay_n_max, grid.expdecay_thetas, grid.expdecay_mu1_max
        ),
    );
    for m in 1..=grid.expdecay_m_max {
        for n in 1..=grid.expdecay_n_max {
            for &th in &grid.expdecay_thetas {
                let inf = expdecay_infimum(m, n, th, grid.expdecay_mu1_max)?;
                if inf.is_infinite() {
                    continue;
                }
                let rhs = (1.0 - th) * (n as f64).powf(th);
                ed_rep.record(inf - rhs + tol, || {
                    format!("m={m}, N={n}, theta={th}: inf={inf}, bound={rhs}")
                });
            }
        }
    }
    Ok(vec![elog_rep, mn_rep, sg_rep, ed_rep])
}
