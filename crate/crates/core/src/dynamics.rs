//! Galerkin truncation of the Schrödinger–Poisson equation on `⟦−M, M⟧`:
//! `ż_a = i a² z_a + i (W z)_a`, `Ŵ_k = ρ_k / k²`, `ρ = (|z|²)^`.

use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gevrey::{compensated_sum, FourierState, GevreyParams};
use crate::polyham::{build_l2, build_p4};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Time-stepping scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Linear half step, nonlinear step, linear half step.
    Strang,
    /// Fourth-order triple-jump composition of Strang steps.
    Yoshida4,
}

/// Spectral evaluator of the truncated vector field.
pub struct Nlsp {
    m: u64,
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    nonlinear: bool,
}

impl Nlsp {
    pub fn new(m: u64) -> Self {
        let n = (4 * m as usize + 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        Self {
            m,
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            nonlinear: true,
        }
    }

    /// Same model with the Poisson coupling switched off.
    pub fn linear(m: u64) -> Self {
        Self {
            nonlinear: false,
            ..Self::new(m)
        }
    }

    pub fn mode_bound(&self) -> u64 {
        self.m
    }

    fn slot(&self, k: i64) -> usize {
        k.rem_euclid(self.n as i64) as usize
    }

    fn to_grid(&self, coeffs: impl Iterator<Item = (i64, Complex64)>) -> Vec<Complex64> {
        let mut buf = vec![ZERO; self.n];
        for (k, c) in coeffs {
            buf[self.slot(k)] = c;
        }
        self.inv.process(&mut buf);
        buf
    }

    fn grid_to_modes(&self, mut buf: Vec<Complex64>) -> Vec<Complex64> {
        self.fwd.process(&mut buf);
        let s = 1.0 / self.n as f64;
        buf.iter_mut().for_each(|c| *c *= s);
        buf
    }

    /// `Ŵ_k` for `|k| ≤ 2M`, indexed by `k + 2M`, and the grid values of `z`.
    fn potential(&self, z: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let m = self.m as i64;
        let u = self.to_grid((-m..=m).zip(z.iter().copied()));
        let rho = self.grid_to_modes(u.iter().map(|c| Complex64::new(c.norm_sqr(), 0.0)).collect());
        let w = (-2 * m..=2 * m)
            .map(|k| {
                if k == 0 {
                    ZERO
                } else {
                    rho[self.slot(k)] / (k * k) as f64
                }
            })
            .collect();
        (w, u)
    }

    /// `Ŵ_k = ρ_k / k²`, `Ŵ₀ = 0`, for `|k| ≤ 2M`.
    pub fn compute_w(&self, z: &[Complex64]) -> Vec<Complex64> {
        self.potential(z).0
    }

    /// `i (W z)_a` for `|a| ≤ M`.
    pub fn nonlinear_field(&self, z: &[Complex64], out: &mut [Complex64]) {
        if !self.nonlinear {
            out.iter_mut().for_each(|c| *c = ZERO);
            return;
        }
        let m = self.m as i64;
        let (w, u) = self.potential(z);
        let mut wg = self.to_grid((-2 * m..=2 * m).zip(w));
        for (x, y) in wg.iter_mut().zip(&u) {
            *x *= y;
        }
        let c = self.grid_to_modes(wg);
        for (o, a) in out.iter_mut().zip(-m..=m) {
            *o = I * c[self.slot(a)];
        }
    }

    /// `L₂ + ½ Σ_{k≠0} |ρ_k|²/k²`.
    pub fn energy(&self, z: &[Complex64]) -> f64 {
        let m = self.m as i64;
        let l2 = compensated_sum((-m..=m).zip(z).map(|(a, c)| (a * a) as f64 * c.norm_sqr()));
        if !self.nonlinear {
            return l2;
        }
        let (w, _) = self.potential(z);
        let p4 = compensated_sum(
            (-2 * m..=2 * m)
                .zip(&w)
                .map(|(k, wk)| 0.5 * (k * k) as f64 * wk.norm_sqr()),
        );
        l2 + p4
    }

    fn linear_step(&self, z: &mut [Complex64], dt: f64) {
        let m = self.m as i64;
        for (c, a) in z.iter_mut().zip(-m..=m) {
            *c *= Complex64::from_polar(1.0, (a * a) as f64 * dt);
        }
    }

    fn nonlinear_step(&self, z: &mut [Complex64], dt: f64) {
        if !self.nonlinear {
            return;
        }
        let n = z.len();
        let mut k1 = vec![ZERO; n];
        let mut k2 = vec![ZERO; n];
        let mut k3 = vec![ZERO; n];
        let mut k4 = vec![ZERO; n];
        let mut tmp = vec![ZERO; n];
        self.nonlinear_field(z, &mut k1);
        for i in 0..n {
            tmp[i] = z[i] + k1[i] * (0.5 * dt);
        }
        self.nonlinear_field(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = z[i] + k2[i] * (0.5 * dt);
        }
        self.nonlinear_field(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = z[i] + k3[i] * dt;
        }
        self.nonlinear_field(&tmp, &mut k4);
        for i in 0..n {
            z[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (dt / 6.0);
        }
    }

    fn strang(&self, z: &mut [Complex64], dt: f64) {
        self.linear_step(z, 0.5 * dt);
        self.nonlinear_step(z, dt);
        self.linear_step(z, 0.5 * dt);
    }

    /// One step of size `dt` (negative `dt` integrates backwards).
    pub fn step(&self, z: &mut [Complex64], dt: f64, scheme: Scheme) {
        match scheme {
            Scheme::Strang => self.strang(z, dt),
            Scheme::Yoshida4 => {
                let c = 2f64.powf(1.0 / 3.0);
                let w1 = 1.0 / (2.0 - c);
                let w0 = -c / (2.0 - c);
                self.strang(z, w1 * dt);
                self.strang(z, w0 * dt);
                self.strang(z, w1 * dt);
            }
        }
    }
}

/// `Ŵ` of a state, returned on `⟦−2M, 2M⟧`.
pub fn compute_w(z: &FourierState) -> FourierState {
    let nl = Nlsp::new(z.mode_bound());
    FourierState::from_vec(2 * z.mode_bound(), nl.compute_w(z.as_slice()), z.params)
}

/// One Strang step of the full model.
pub fn step(z: &FourierState, dt: f64) -> FourierState {
    let nl = Nlsp::new(z.mode_bound());
    let mut v = z.as_slice().to_vec();
    nl.step(&mut v, dt, Scheme::Strang);
    FourierState::from_vec(z.mode_bound(), v, z.params)
}

/// `H = L₂ + P₄` through the polynomial representation.
pub fn energy(z: &FourierState) -> f64 {
    build_l2(z.mode_bound()).add(&build_p4(z.mode_bound())).evaluate(z).re
}

/// `Σ_a I_a`.
pub fn mass(z: &[Complex64]) -> f64 {
    compensated_sum(z.iter().map(|c| c.norm_sqr()))
}

/// `Σ_a a I_a` for amplitudes on `⟦−M, M⟧`.
pub fn momentum(z: &[Complex64]) -> f64 {
    let m = (z.len() / 2) as i64;
    compensated_sum((-m..=m).zip(z).map(|(a, c)| a as f64 * c.norm_sqr()))
}

/// Simulation settings.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(rename = "M")]
    pub m: u64,
    pub dt: f64,
    pub t_final: f64,
    pub params: GevreyParams,
    pub scheme: Scheme,
    /// Record every this many steps (the final time is always recorded).
    pub output_every: usize,
    /// Abort when `‖z‖_σ` exceeds this multiple of its initial value.
    pub blowup_factor: f64,
}

impl SimConfig {
    pub fn new(m: u64, dt: f64, t_final: f64, params: GevreyParams) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be > 0, got {dt}")));
        }
        if !(t_final >= 0.0 && t_final.is_finite()) {
            return Err(Error::InvalidParameter(format!("T must be >= 0, got {t_final}")));
        }
        Ok(Self {
            m,
            dt,
            t_final,
            params,
            scheme: Scheme::Yoshida4,
            output_every: 100,
            blowup_factor: 1e3,
        })
    }
}

/// Observables at one output time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub norm_sigma: f64,
    pub energy: f64,
    pub mass: f64,
    pub momentum: f64,
    pub action_distance: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub final_state: FourierState,
    /// Supremum over every step, not only recorded ones.
    pub sup_norm: f64,
    pub max_action_distance: f64,
}

impl Trajectory {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,norm_sigma,energy,mass,momentum,action_distance")?;
        for s in &self.samples {
            writeln!(
                w,
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                s.t, s.norm_sigma, s.energy, s.mass, s.momentum, s.action_distance
            )?;
        }
        Ok(())
    }

    /// Largest `|Q(t) − Q(0)| / |Q(0)|` over the samples for `Q` picked by `f`.
    pub fn relative_drift(&self, f: impl Fn(&Sample) -> f64) -> f64 {
        let q0 = f(&self.samples[0]);
        self.samples
            .iter()
            .map(|s| (f(s) - q0).abs() / q0.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }
}

/// Integrates the model from `z0` with the given settings.
pub fn simulate(model: &Nlsp, z0: &FourierState, cfg: &SimConfig) -> Result<Trajectory> {
    let z0 = z0.resize(model.mode_bound());
    let mut z = z0.as_slice().to_vec();
    let params = cfg.params;
    let n0 = z0.norm_sigma();
    let steps = (cfg.t_final / cfg.dt).round() as usize;
    let observe = |t: f64, z: &[Complex64]| -> Sample {
        let s = FourierState::from_vec(model.mode_bound(), z.to_vec(), params);
        Sample {
            t,
            norm_sigma: s.norm_sigma(),
            energy: model.energy(z),
            mass: mass(z),
            momentum: momentum(z),
            action_distance: s.action_distance(&z0),
        }
    };
    let first = observe(0.0, &z);
    let mut sup_norm = first.norm_sigma;
    let mut max_ad = 0.0f64;
    let mut samples = vec![first];
    for i in 1..=steps {
        model.step(&mut z, cfg.dt, cfg.scheme);
        let t = i as f64 * cfg.dt;
        let s = FourierState::from_vec(model.mode_bound(), z.clone(), params);
        let n = s.norm_sigma();
        if !n.is_finite() || n > cfg.blowup_factor * n0.max(f64::MIN_POSITIVE) {
            return Err(Error::Instability { t });
        }
        sup_norm = sup_norm.max(n);
        max_ad = max_ad.max(s.action_distance(&z0));
        if i % cfg.output_every.max(1) == 0 || i == steps {
            samples.push(observe(t, &z));
        }
    }
    Ok(Trajectory {
        samples,
        final_state: FourierState::from_vec(model.mode_bound(), z, params),
        sup_norm,
        max_action_distance: max_ad,
    })
}

/// Stability verdicts of one run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdicts {
    pub eps: f64,
    pub sup_norm: f64,
    pub max_action_distance: f64,
    /// `sup_t ‖z(t)‖_σ ≤ 2ε`.
    pub norm_ok: bool,
    /// `sup_t` action distance `≤ ε^{3/2}`.
    pub actions_ok: bool,
}

/// Runs from `z0` (taken to have `‖z0‖_σ = ε`) and checks both verdicts.
pub fn run_experiment(z0: &FourierState, cfg: &SimConfig) -> Result<(Trajectory, Verdicts)> {
    let model = Nlsp::new(cfg.m);
    let eps = z0.norm_sigma();
    let traj = simulate(&model, z0, cfg)?;
    let v = Verdicts {
        eps,
        sup_norm: traj.sup_norm,
        max_action_distance: traj.max_action_distance,
        norm_ok: traj.sup_norm <= 2.0 * eps,
        actions_ok: traj.max_action_distance <= eps.powf(1.5),
    };
    Ok((traj, v))
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_state(rng: &mut ChaCha8Rng, m: u64, scale: f64) -> FourierState {
        let v = (0..2 * m + 1)
            .map(|_| Complex64::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale)))
            .collect();
        FourierState::from_vec(m, v, GevreyParams::default())
    }

    /// `ρ_k = Σ_a z_a z̄_{a−k}` by direct summation.
    fn rho_direct(z: &FourierState, k: i64) -> Complex64 {
        z.modes().map(|a| z.get(a) * z.get(a - k).conj()).sum()
    }

    #[test]
    fn potential_examples() {
        let mut z = FourierState::zeros(3, GevreyParams::default());
        z.set(0, Complex64::new(0.7, 0.1));
        assert!(compute_w(&z).as_slice().iter().all(|c| c.norm() < 1e-15));
        let mut z = FourierState::zeros(3, GevreyParams::default());
        z.set(1, Complex64::new(1.0, 0.0));
        assert!(compute_w(&z).as_slice().iter().all(|c| c.norm() < 1e-15));
        let mut z = FourierState::zeros(3, GevreyParams::default());
        z.set(0, Complex64::new(1.0, 0.0));
        z.set(1, Complex64::new(1.0, 0.0));
        let w = compute_w(&z);
        assert!((w.get(1) - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        assert!((w.get(-1) - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        assert!(w.get(2).norm() < 1e-15 && w.get(0).norm() < 1e-15);
    }

    #[test]
    fn potential_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let z = random_state(&mut rng, 5, 1.0);
        let w = compute_w(&z);
        for k in -10..=10i64 {
            let e = if k == 0 {
                Complex64::new(0.0, 0.0)
            } else {
                rho_direct(&z, k) / (k * k) as f64
            };
            assert!((w.get(k) - e).norm() < 1e-13);
        }
        // Nonlinear field against Σ_k Ŵ_k z_{a−k}.
        let nl = Nlsp::new(5);
        let mut out = vec![ZERO; 11];
        nl.nonlinear_field(z.as_slice(), &mut out);
        for a in -5..=5i64 {
            let e: Complex64 = (-10..=10).map(|k| w.get(k) * z.get(a - k)).sum::<Complex64>() * I;
            assert!((out[(a + 5) as usize] - e).norm() < 1e-13);
        }
    }

    #[test]
    fn nonlinear_field_is_the_hamiltonian_field() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let z = random_state(&mut rng, 4, 0.5);
        let x = build_p4(4).vector_field(&z);
        let nl = Nlsp::new(4);
        let mut out = vec![ZERO; 9];
        nl.nonlinear_field(z.as_slice(), &mut out);
        for a in -4..=4i64 {
            assert!((x.get(a) - out[(a + 4) as usize]).norm() < 1e-13);
        }
    }

    #[test]
    fn energy_matches_polynomial_and_quadrature() {
        let mut z = FourierState::zeros(2, GevreyParams::default());
        z.set(0, Complex64::new(1.0, 0.0));
        z.set(1, Complex64::new(1.0, 0.0));
        assert!((energy(&z) - 2.0).abs() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let z = random_state(&mut rng, 4, 0.5);
        let nl = Nlsp::new(4);
        assert!((nl.energy(z.as_slice()) - energy(&z)).abs() < 1e-13);
        // (1/2π)∫ |∂ₓu|² + ½ W|u|² on a dense grid with W from direct convolution.
        let g = 512;
        let mut acc = 0.0;
        for j in 0..g {
            let x = 2.0 * PI * j as f64 / g as f64;
            let e = |a: i64| Complex64::from_polar(1.0, a as f64 * x);
            let du: Complex64 = z.modes().map(|a| I * a as f64 * z.get(a) * e(a)).sum();
            let u: Complex64 = z.modes().map(|a| z.get(a) * e(a)).sum();
            let w: Complex64 = (-8..=8i64)
                .filter(|&k| k != 0)
                .map(|k| rho_direct(&z, k) / (k * k) as f64 * e(k))
                .sum();
            acc += du.norm_sqr() + 0.5 * w.re * u.norm_sqr();
        }
        assert!((acc / g as f64 - energy(&z)).abs() < 1e-10);
    }

    #[test]
    fn single_mode_rotates_exactly() {
        let mut z = FourierState::zeros(4, GevreyParams::default());
        z.set(3, Complex64::new(0.2, 0.1));
        let y = step(&z, 0.3);
        assert!((y.get(3) - z.get(3) * Complex64::from_polar(1.0, 9.0 * 0.3)).norm() < 1e-15);
    }

    #[test]
    fn linear_model_keeps_actions() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let z = random_state(&mut rng, 6, 0.1);
        let cfg = SimConfig::new(6, 0.01, 5.0, GevreyParams::default()).unwrap();
        let t = simulate(&Nlsp::linear(6), &z, &cfg).unwrap();
        assert!(t.max_action_distance < 1e-5);
        for a in -6..=6 {
            assert!((t.final_state.action(a) - z.action(a)).abs() < 1e-12 * z.action(a));
        }
    }

    #[test]
    fn short_run_conserves_and_reverses() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let z = random_state(&mut rng, 6, 0.05);
        let nl = Nlsp::new(6);
        let mut v = z.as_slice().to_vec();
        let e0 = nl.energy(&v);
        let (m0, p0) = (mass(&v), momentum(&v));
        for _ in 0..500 {
            nl.step(&mut v, 1e-3, Scheme::Yoshida4);
        }
        assert!((nl.energy(&v) - e0).abs() < 1e-9 * e0.abs());
        assert!((mass(&v) - m0).abs() < 1e-12 * m0 && (momentum(&v) - p0).abs() < 1e-12 * m0);
        for _ in 0..500 {
            nl.step(&mut v, -1e-3, Scheme::Yoshida4);
        }
        let back = FourierState::from_vec(6, v, z.params);
        assert!(back.sub(&z).norm_sigma() < 1e-12 * z.norm_sigma());
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [0.1, 0.2, 0.4];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(2.5)).collect();
        assert!((loglog_slope(&xs, &ys) - 2.5).abs() < 1e-12);
    }
}
