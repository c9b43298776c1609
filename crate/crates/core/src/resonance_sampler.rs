//! Asymptotic parameter choices, the set `Θ_ε` of good initial data,
//! Monte-Carlo measure and probability estimates, and the lower bound on
//! modulated-frequency derivatives.

use std::f64::consts::PI;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gevrey::{FourierState, GevreyParams};
use crate::modespace::{enumerate, Family, LemmaReport, MultiIndex, DEFAULT_BUDGET};
use crate::rathom::NonResonanceSet;

/// Samples per RNG stream; results do not depend on the worker count.
const CHUNK: usize = 512;

/// Parameters as functions of `ε`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub eps: f64,
    pub log_inv_eps: f64,
    pub sigma: f64,
    pub theta: f64,
    /// Normal form order.
    pub r: u64,
    /// Truncation `M_ε = (log ε⁻¹)^{1+4/θ}`.
    pub m: f64,
    /// `N_ε = (log ε⁻¹)^{2/θ}`.
    pub n: f64,
    /// `L_ε = 6 r_ε N_ε²`.
    pub l: f64,
    pub gamma: f64,
    pub delta: f64,
    /// Exponent of the stability time.
    pub t_exponent: f64,
    /// `T_ε = ε^{−t_exponent}`.
    pub t: f64,
}

impl ParamSet {
    /// Threshold `10 δ_ε` defining `Θ_ε`.
    pub fn theta_threshold(&self) -> f64 {
        10.0 * self.delta
    }
}

/// Evaluates every parameter at `0 < ε < e⁻¹`.
pub fn compute_parameters(eps: f64, params: GevreyParams) -> Result<ParamSet> {
    if !(eps > 0.0 && eps < (-1.0f64).exp()) {
        return Err(Error::InvalidParameter(format!("eps must lie in (0, 1/e), got {eps}")));
    }
    parameters_from_log((1.0 / eps).ln(), params)
}

/// Same as [`compute_parameters`] from `log ε⁻¹ > 1`, so that `ε` below the
/// floating-point range can be used; `ε`, `γ`, `δ` may then underflow to 0.
pub fn parameters_from_log(log_inv_eps: f64, params: GevreyParams) -> Result<ParamSet> {
    let log = log_inv_eps;
    if !(log > 1.0 && log.is_finite()) {
        return Err(Error::InvalidParameter(format!("log(1/eps) must exceed 1, got {log}")));
    }
    let (sigma, theta) = (params.sigma, params.theta);
    let eps = (-log).exp();
    let ratio = log / log.ln();
    let c = sigma.min(1.0) * theta * (1.0 - theta);
    let r = (c / 500.0 * ratio).floor() as u64;
    let n = log.powf(2.0 / theta);
    let gamma = (-0.5 * log).exp();
    let t_exponent = c / 1500.0 * ratio;
    Ok(ParamSet {
        eps,
        log_inv_eps: log,
        sigma,
        theta,
        r,
        m: log.powf(1.0 + 4.0 / theta),
        n,
        l: 6.0 * r as f64 * n * n,
        gamma,
        delta: (-2.5 * log).exp(),
        t_exponent,
        t: (t_exponent * log).exp(),
    })
}

/// `Θ = Π_L⁻¹ 𝔙_{10δ}^{6r,L}` for explicit `(r, L, δ)`.
#[derive(Clone, Debug)]
pub struct ThetaSet {
    set: NonResonanceSet,
    l: u64,
    threshold: f64,
}

impl ThetaSet {
    pub fn new(r: usize, l: u64, delta: f64, budget: u128) -> Result<Self> {
        Ok(Self {
            set: NonResonanceSet::enumerate(6 * r, l, budget)?,
            l,
            threshold: 10.0 * delta,
        })
    }

    /// `min_𝒋 |ω_𝒋^L(Π_L z)|`, `+∞` when `𝒩^{6r,L}` is empty.
    pub fn min_abs_omega(&self, z: &FourierState) -> f64 {
        self.set
            .min_abs_omega(&z.resize(self.l))
            .map_or(f64::INFINITY, |(v, _)| v)
    }

    pub fn contains(&self, z: &FourierState) -> bool {
        self.min_abs_omega(z) > self.threshold
    }

    pub fn num_keys(&self) -> usize {
        self.set.len()
    }
}

/// `z ∈ Θ` with threshold `10δ` over `𝒩^{6r,L}`.
pub fn theta_membership(z: &FourierState, r: usize, l: u64, delta: f64, budget: u128) -> Result<bool> {
    Ok(ThetaSet::new(r, l, delta, budget)?.contains(z))
}

/// How to draw uniform points of the weighted `ℓ¹` ball.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BallSampler {
    /// Rejection from the bounding box; aborts below the acceptance floor.
    Rejection { floor: f64 },
    /// Exact: weighted moduli are Dirichlet(2,…,2; 1), phases uniform.
    Dirichlet,
}

#[derive(Clone, Debug)]
pub struct BallSample {
    pub states: Vec<FourierState>,
    pub proposals: u64,
    pub acceptance_rate: f64,
}

fn stream(seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rng
}

fn chunks(n: usize) -> Vec<(usize, usize)> {
    (0..n.div_ceil(CHUNK)).map(|k| (k, CHUNK.min(n - k * CHUNK))).collect()
}

fn dirichlet_point(rng: &mut ChaCha8Rng, m: u64, eps: f64, params: GevreyParams) -> FourierState {
    let g2 = Gamma::new(2.0, 1.0).expect("valid shape");
    let mut z = FourierState::zeros(m, params);
    let g: Vec<f64> = z.modes().map(|_| g2.sample(rng)).collect();
    let slack: f64 = Exp1.sample(rng);
    let total: f64 = g.iter().sum::<f64>() + slack;
    for (a, ga) in (-(m as i64)..=m as i64).zip(g) {
        let phase = rng.gen_range(0.0..2.0 * PI);
        let modulus = eps * ga / total / (2.0 * params.weight(a));
        z.set(a, Complex64::from_polar(modulus, phase));
    }
    z
}

fn box_point(rng: &mut ChaCha8Rng, m: u64, eps: f64, params: GevreyParams) -> FourierState {
    let mut z = FourierState::zeros(m, params);
    for a in -(m as i64)..=m as i64 {
        let h = eps / (2.0 * params.weight(a));
        z.set(a, Complex64::new(rng.gen_range(-h..h), rng.gen_range(-h..h)));
    }
    z
}

/// `n` i.i.d. uniform samples of `{‖z‖_σ ≤ ε}` on `⟦−M, M⟧`.
pub fn sample_ball(
    m: u64,
    eps: f64,
    params: GevreyParams,
    n: usize,
    seed: u64,
    sampler: BallSampler,
) -> Result<BallSample> {
    if n == 0 || eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "need n >= 1 and eps > 0, got n={n}, eps={eps}"
        )));
    }
    match sampler {
        BallSampler::Dirichlet => {
            let states = chunks(n)
                .into_par_iter()
                .flat_map_iter(|(k, len)| {
                    let mut rng = stream(seed, k);
                    (0..len)
                        .map(move |_| dirichlet_point(&mut rng, m, eps, params))
                        .collect::<Vec<_>>()
                })
                .collect();
            Ok(BallSample {
                states,
                proposals: n as u64,
                acceptance_rate: 1.0,
            })
        }
        BallSampler::Rejection { floor } => {
            // Checked after this many proposals per stream.
            const WARMUP: u64 = 10_000;
            let parts: Vec<Result<(Vec<FourierState>, u64)>> = chunks(n)
                .into_par_iter()
                .map(|(k, len)| {
                    let mut rng = stream(seed, k);
                    let mut out = Vec::with_capacity(len);
                    let mut tried = 0u64;
                    while out.len() < len {
                        let z = box_point(&mut rng, m, eps, params);
                        tried += 1;
                        if z.norm_sigma() <= eps {
                            out.push(z);
                        }
                        if tried >= WARMUP && (out.len() as f64) < floor * tried as f64 {
                            return Err(Error::LowAcceptance {
                                rate: out.len() as f64 / tried as f64,
                                floor,
                            });
                        }
                    }
                    Ok((out, tried))
                })
                .collect();
            let mut states = Vec::with_capacity(n);
            let mut proposals = 0;
            for p in parts {
                let (s, t) = p?;
                states.extend(s);
                proposals += t;
            }
            Ok(BallSample {
                states,
                proposals,
                acceptance_rate: n as f64 / proposals as f64,
            })
        }
    }
}

/// 95% Wilson score interval for `pass` successes out of `n`.
pub fn wilson_interval(pass: u64, n: u64) -> (f64, f64) {
    let z = 1.959_963_984_540_054;
    let nf = n as f64;
    let p = pass as f64 / nf;
    let d = 1.0 + z * z / nf;
    let centre = (p + z * z / (2.0 * nf)) / d;
    let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / d;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Monte-Carlo result, serialized as `{config, n, pass, fraction, ci_low, ci_high, seed}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub config: serde_json::Value,
    pub n: u64,
    pub pass: u64,
    pub fraction: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub seed: u64,
}

impl MonteCarloReport {
    fn new(config: serde_json::Value, n: u64, pass: u64, seed: u64) -> Self {
        let (ci_low, ci_high) = wilson_interval(pass, n);
        Self {
            config,
            n,
            pass,
            fraction: pass as f64 / n as f64,
            ci_low,
            ci_high,
            seed,
        }
    }
}

/// Largest `δ` covered by the measure estimate for the given `κ`:
/// `κ ε² (64M²)⁻¹ (9r)^{−2r} L^{−3r} e^{−3σr}`.
pub fn measure_delta_bound(kappa: f64, eps: f64, m: u64, r: usize, l: u64, sigma: f64) -> f64 {
    let r = r as f64;
    let log = kappa.ln() + 2.0 * eps.ln()
        - (64.0 * (m * m) as f64).ln()
        - 2.0 * r * (9.0 * r).ln()
        - 3.0 * r * (l as f64).ln()
        - 3.0 * sigma * r;
    log.exp()
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MeasureConfig {
    #[serde(rename = "M")]
    pub m: u64,
    #[serde(rename = "L")]
    pub l: u64,
    /// Largest `#𝒋`.
    pub r: usize,
    pub delta: f64,
    pub eps: f64,
    pub n: usize,
    pub seed: u64,
    pub params: GevreyParams,
    pub sampler: BallSampler,
}

/// `min_{𝒩^{r,L}} |ω^L|` on each sample of the ball; fractions for any `δ`
/// are read off the same sample set.
#[derive(Clone, Debug)]
pub struct MeasureSamples {
    pub min_omega: Vec<f64>,
    pub acceptance_rate: f64,
}

impl MeasureSamples {
    pub fn draw(cfg: &MeasureConfig) -> Result<Self> {
        if cfg.l > cfg.m {
            return Err(Error::InvalidParameter(format!(
                "need L <= M, got L={}, M={}",
                cfg.l, cfg.m
            )));
        }
        let set = NonResonanceSet::enumerate(cfg.r, cfg.l, DEFAULT_BUDGET)?;
        let ball = sample_ball(cfg.m, cfg.eps, cfg.params, cfg.n, cfg.seed, cfg.sampler)?;
        let min_omega = ball
            .states
            .par_iter()
            .map(|z| set.min_abs_omega(&z.resize(cfg.l)).map_or(f64::INFINITY, |(v, _)| v))
            .collect();
        Ok(Self {
            min_omega,
            acceptance_rate: ball.acceptance_rate,
        })
    }

    /// Number of samples in `𝔙_δ`.
    pub fn passing(&self, delta: f64) -> u64 {
        self.min_omega.iter().filter(|&&v| v > delta).count() as u64
    }

    pub fn fraction(&self, delta: f64) -> f64 {
        self.passing(delta) as f64 / self.min_omega.len() as f64
    }
}

/// Estimates `meas(𝔙_δ^{r,L} ∩ 𝔹_M(0,ε)) / meas(𝔹_M(0,ε))`.
pub fn measure_fraction(cfg: &MeasureConfig) -> Result<MonteCarloReport> {
    let s = MeasureSamples::draw(cfg)?;
    Ok(MonteCarloReport::new(
        serde_json::to_value(cfg)?,
        cfg.n as u64,
        s.passing(cfg.delta),
        cfg.seed,
    ))
}

/// `Y_a` uniform in `(0, ⟨a⟩⁻² e^{−σ|a|^θ})` for `|a| ≤ a_max`.
pub fn random_gevrey_data_with<R: Rng>(params: GevreyParams, a_max: u64, rng: &mut R) -> FourierState {
    let mut y = FourierState::zeros(a_max, params);
    for a in -(a_max as i64)..=a_max as i64 {
        let br = a.unsigned_abs().max(1) as f64;
        let top = 1.0 / (br * br * params.weight(a));
        y.set(a, Complex64::new(rng.gen::<f64>() * top, 0.0));
    }
    y
}

pub fn random_gevrey_data(params: GevreyParams, a_max: u64, seed: u64) -> FourierState {
    random_gevrey_data_with(params, a_max, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// `Y / ‖Y‖_σ` with an independent uniform phase on every mode.
pub fn random_phased_data(params: GevreyParams, a_max: u64, seed: u64) -> FourierState {
    let y = normalize(&random_gevrey_data(params, a_max, seed));
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut z = y.clone();
    for a in -(a_max as i64)..=a_max as i64 {
        z.set(
            a,
            y.get(a) * Complex64::from_polar(1.0, rng.gen_range(0.0..std::f64::consts::TAU)),
        );
    }
    z
}

/// `Z⁰ = Y / ‖Y‖_σ`.
pub fn normalize(y: &FourierState) -> FourierState {
    y.scaled(1.0 / y.norm_sigma())
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ProbaConfig {
    pub eps0: f64,
    pub n: usize,
    pub a_max: u64,
    /// `Θ_ε` uses `𝒩^{6r,L}`.
    pub r: usize,
    #[serde(rename = "L")]
    pub l: u64,
    /// Constant `γ`; `None` uses `γ_ε = ε^{1/2}`.
    pub gamma: Option<f64>,
    /// Number of points `ε₀ 2^{−k}` of the grid.
    pub grid: usize,
    pub seed: u64,
    pub params: GevreyParams,
}

impl ProbaConfig {
    /// Target `1 − ε₀^{1/12}`.
    pub fn target(&self) -> f64 {
        1.0 - self.eps0.powf(1.0 / 12.0)
    }
}

/// Fraction of `Z⁰` with `εZ⁰ ∈ Θ_ε` for every `ε` of the grid.
pub fn proba_experiment(cfg: &ProbaConfig) -> Result<MonteCarloReport> {
    if cfg.eps0.is_nan() || cfg.eps0 <= 0.0 || cfg.n == 0 || cfg.grid == 0 {
        return Err(Error::InvalidParameter("need eps0 > 0, n >= 1, grid >= 1".into()));
    }
    let set = NonResonanceSet::enumerate(6 * cfg.r, cfg.l, DEFAULT_BUDGET)?;
    let grid: Vec<f64> = (0..cfg.grid).map(|k| cfg.eps0 * 0.5f64.powi(k as i32)).collect();
    let pass: u64 = chunks(cfg.n)
        .into_par_iter()
        .map(|(k, len)| {
            let mut rng = stream(cfg.seed, k);
            (0..len)
                .filter(|_| {
                    let z0 = normalize(&random_gevrey_data_with(cfg.params, cfg.a_max, &mut rng));
                    grid.iter().all(|&eps| {
                        let gamma = cfg.gamma.unwrap_or_else(|| eps.sqrt());
                        let delta = eps * eps * gamma;
                        let z = z0.scaled(eps).resize(cfg.l);
                        set.min_abs_omega(&z).is_none_or(|(v, _)| v > 10.0 * delta)
                    })
                })
                .count() as u64
        })
        .sum();
    Ok(MonteCarloReport::new(
        serde_json::to_value(cfg)?,
        cfg.n as u64,
        pass,
        cfg.seed,
    ))
}

/// Witness for the modulated-frequency lower bound.
#[derive(Clone, Debug, PartialEq)]
pub struct AStar {
    pub a_star: i64,
    /// `|Σ_α δ_α / (a* − a_α)²|`.
    pub value: BigRational,
    /// `((6m)^{4m} Π ⟨a_α⟩²)⁻¹`.
    pub bound: BigRational,
}

impl AStar {
    pub fn passes(&self) -> bool {
        self.value >= self.bound
    }
}

/// Scans `a* ∈ (−3m, 3m)` off the support of `𝒋` for the largest
/// `|Σ δ_α/(a*−a_α)²|`, in exact arithmetic.
pub fn find_astar(j: &MultiIndex) -> Result<AStar> {
    if j.is_integrable() {
        return Err(Error::InvalidParameter(format!("{j} is integrable")));
    }
    let m = (j.len() / 2) as i64;
    let mut den = BigInt::from(6 * m).pow(4 * m as u32);
    for e in j.entries() {
        let br = BigInt::from(e.a.unsigned_abs().max(1));
        den *= &br * &br;
    }
    let bound = BigRational::new(BigInt::one(), den);
    let mut best: Option<(i64, BigRational)> = None;
    for a in (-3 * m + 1)..(3 * m) {
        if j.entries().iter().any(|e| e.a == a) {
            continue;
        }
        let mut s = BigRational::zero();
        for e in j.entries() {
            let d = a - e.a;
            s += BigRational::new(BigInt::from(e.delta), BigInt::from(d * d));
        }
        let s = s.abs();
        if best.as_ref().is_none_or(|(_, b)| s > *b) {
            best = Some((a, s));
        }
    }
    let (a_star, value) = best.unwrap_or((0, BigRational::zero()));
    Ok(AStar { a_star, value, bound })
}

/// Runs [`find_astar`] on every `𝒋 ∈ 𝒩` with `#𝒋 ≤ 2 m_max`, `μ₁ ≤ mu1_max`.
pub fn certify_mod_freq(m_max: usize, mu1_max: u64) -> Result<LemmaReport> {
    let mut rep = LemmaReport::new("mod-freq", format!("m <= {m_max}, mu1 <= {mu1_max}"));
    for m in 3..=m_max {
        for j in enumerate(m, mu1_max, Family::NonIntegrable, DEFAULT_BUDGET)? {
            let w = find_astar(&j)?;
            let ok = w.passes();
            let margin = if w.value.is_zero() {
                -1.0
            } else {
                ratio_log10(&w.value) - ratio_log10(&w.bound)
            };
            rep.record_exact(ok, margin, || format!("{j}: best a* = {}, value {}", w.a_star, w.value));
        }
    }
    Ok(rep)
}

fn ratio_log10(x: &BigRational) -> f64 {
    let bits = |b: &BigInt| b.bits() as f64;
    let shift = |b: &BigInt| {
        let e = (bits(b) - 60.0).max(0.0) as usize;
        let top: BigInt = b >> e;
        top.to_string().parse::<f64>().unwrap_or(f64::MAX).log10() + e as f64 * 2f64.log10()
    };
    shift(x.numer()) - shift(x.denom())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> GevreyParams {
        GevreyParams::default()
    }

    #[test]
    fn parameters_at_practical_eps() {
        let ps = compute_parameters(1e-3, p()).unwrap();
        assert_eq!(ps.r, 0);
        assert_eq!(ps.l, 0.0);
        let log = 1e3f64.ln();
        assert!((ps.m - log.powi(9)).abs() < 1e-6 * ps.m);
        assert!((ps.m - 3.6e7).abs() < 0.05e7);
        assert!((ps.delta - ps.eps.powf(2.5)).abs() < 1e-20);
        assert!(compute_parameters(0.5, p()).is_err());
        assert!(compute_parameters((-1.0f64).exp(), p()).is_err());
        assert!(compute_parameters(0.0, p()).is_err());
    }

    #[test]
    fn order_vanishes_at_theta_limits() {
        for th in [1e-9, 1.0 - 1e-9] {
            let ps = compute_parameters(1e-300, GevreyParams::new(1.0, th).unwrap()).unwrap();
            assert_eq!(ps.r, 0);
        }
    }

    #[test]
    fn empty_family_is_vacuous() {
        let z = FourierState::zeros(3, p());
        assert!(theta_membership(&z, 0, 4, 1.0, DEFAULT_BUDGET).unwrap());
        assert!(ThetaSet::new(1, 4, 0.0, DEFAULT_BUDGET).unwrap().num_keys() > 0);
    }

    #[test]
    fn membership_ignores_high_modes_and_angles() {
        let z = normalize(&random_gevrey_data(p(), 6, 3)).scaled(0.1);
        let th = ThetaSet::new(1, 4, 1e-7, DEFAULT_BUDGET).unwrap();
        let v = th.min_abs_omega(&z);
        let mut w = z.resize(9);
        w.set(8, Complex64::new(0.3, -0.2));
        w.set(-9, Complex64::new(1.0, 0.0));
        assert_eq!(th.min_abs_omega(&w), v);
        let mut rot = z.clone();
        for a in -6..=6i64 {
            rot.set(a, z.get(a) * Complex64::from_polar(1.0, 0.4 * a as f64 + 1.0));
        }
        assert!((th.min_abs_omega(&rot) - v).abs() <= 1e-15 * v.max(1e-300));
    }

    #[test]
    fn ball_samples_lie_in_ball_and_are_centred() {
        let s = sample_ball(2, 0.3, p(), 4000, 5, BallSampler::Dirichlet).unwrap();
        assert!(s.states.iter().all(|z| z.norm_sigma() <= 0.3 + 1e-15));
        for a in -2..=2i64 {
            let mean: Complex64 = s.states.iter().map(|z| z.get(a)).sum::<Complex64>() / 4000.0;
            let scale = 0.3 / (2.0 * p().weight(a));
            assert!(mean.norm() < 0.05 * scale);
        }
    }

    #[test]
    fn rejection_on_one_mode_accepts_quarter_pi() {
        let n = 100_000;
        let s = sample_ball(0, 1.0, p(), n, 9, BallSampler::Rejection { floor: 1e-3 }).unwrap();
        let q = PI / 4.0;
        let sd = (q * (1.0 - q) / s.proposals as f64).sqrt();
        assert!((s.acceptance_rate - q).abs() < 3.0 * sd);
        assert!(s.states.iter().all(|z| z.norm_sigma() <= 1.0));
    }

    #[test]
    fn rejection_aborts_below_floor() {
        let e = sample_ball(4, 1.0, p(), 10, 1, BallSampler::Rejection { floor: 1e-3 });
        assert!(matches!(e, Err(Error::LowAcceptance { .. })));
    }

    #[test]
    fn dirichlet_matches_rejection_in_distribution() {
        // Mean of ‖z‖_σ/ε: the radial profile of a 2n-dimensional ℓ¹-type ball gives 2n/(2n+1).
        let n = 20_000;
        let a = sample_ball(1, 1.0, p(), n, 2, BallSampler::Dirichlet).unwrap();
        let b = sample_ball(1, 1.0, p(), n, 3, BallSampler::Rejection { floor: 1e-4 }).unwrap();
        let mean = |s: &BallSample| s.states.iter().map(|z| z.norm_sigma()).sum::<f64>() / n as f64;
        assert!((mean(&a) - 6.0 / 7.0).abs() < 0.005);
        assert!((mean(&b) - 6.0 / 7.0).abs() < 0.005);
    }

    #[test]
    fn wilson_brackets_the_estimate() {
        let (lo, hi) = wilson_interval(90, 100);
        assert!(lo < 0.9 && hi > 0.9 && lo > 0.82 && hi < 0.95);
        assert_eq!(wilson_interval(0, 10).0, 0.0);
        assert!(wilson_interval(10, 10).1 >= 1.0 - 1e-12);
    }

    #[test]
    fn measure_extremes() {
        let cfg = MeasureConfig {
            m: 4,
            l: 4,
            r: 6,
            delta: 0.0,
            eps: 1.0,
            n: 500,
            seed: 1,
            params: p(),
            sampler: BallSampler::Dirichlet,
        };
        assert_eq!(measure_fraction(&cfg).unwrap().pass, 500);
        let big = MeasureConfig { delta: 1e3, ..cfg };
        assert_eq!(measure_fraction(&big).unwrap().pass, 0);
    }

    #[test]
    fn gevrey_data_norms() {
        for seed in 0..200 {
            let y = random_gevrey_data(p(), 30, seed);
            assert!(y.norm_sigma() < 10.0);
            assert!((normalize(&y).norm_sigma() - 1.0).abs() < 1e-14);
            assert!(y.as_slice().iter().all(|c| c.im == 0.0 && c.re >= 0.0));
        }
    }

    #[test]
    fn astar_examples() {
        let j = MultiIndex::from_signed(&[1, 5, 6], &[2, 3, 7]);
        let w = find_astar(&j).unwrap();
        assert!(w.a_star > -9 && w.a_star < 9 && w.passes());
        let int = MultiIndex::from_signed(&[1, 2, 3], &[1, 2, 3]);
        assert!(find_astar(&int).is_err());
    }

    #[test]
    fn mod_freq_small_range() {
        let rep = certify_mod_freq(3, 5).unwrap();
        assert!(rep.checked > 0 && rep.passed(), "{:?}", rep.violations);
    }
}
