//! Gevrey-weighted sequence space on the truncated mode set `⟦−M, M⟧`.

use std::io::{BufRead, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weight parameters `σ > 0`, `0 < θ < 1` of `e^{σ|a|^θ}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GevreyParams {
    pub sigma: f64,
    pub theta: f64,
}

impl GevreyParams {
    pub fn new(sigma: f64, theta: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be > 0, got {sigma}")));
        }
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::InvalidParameter(format!("theta must lie in (0,1), got {theta}")));
        }
        Ok(Self { sigma, theta })
    }

    /// `e^{σ|a|^θ}`.
    pub fn weight(&self, a: i64) -> f64 {
        (self.sigma * (a.unsigned_abs() as f64).powf(self.theta)).exp()
    }
}

impl Default for GevreyParams {
    fn default() -> Self {
        Self { sigma: 1.0, theta: 0.5 }
    }
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in it {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

/// Amplitudes `z_a`, `|a| ≤ M`, stored at index `a + M`.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierState {
    m: u64,
    z: Vec<Complex64>,
    pub params: GevreyParams,
}

impl FourierState {
    pub fn zeros(m: u64, params: GevreyParams) -> Self {
        Self {
            m,
            z: vec![Complex64::new(0.0, 0.0); 2 * m as usize + 1],
            params,
        }
    }

    /// Panics unless `z.len() == 2M + 1`.
    pub fn from_vec(m: u64, z: Vec<Complex64>, params: GevreyParams) -> Self {
        assert_eq!(z.len(), 2 * m as usize + 1, "amplitude vector length must be 2M+1");
        Self { m, z, params }
    }

    pub fn mode_bound(&self) -> u64 {
        self.m
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.z
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.z
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.z
    }

    /// Modes `−M..=M`.
    pub fn modes(&self) -> impl Iterator<Item = i64> {
        let m = self.m as i64;
        -m..=m
    }

    /// `z_a`, zero outside `⟦−M, M⟧`.
    pub fn get(&self, a: i64) -> Complex64 {
        if a.unsigned_abs() > self.m {
            Complex64::new(0.0, 0.0)
        } else {
            self.z[(a + self.m as i64) as usize]
        }
    }

    /// Panics if `|a| > M`.
    pub fn set(&mut self, a: i64, v: Complex64) {
        assert!(a.unsigned_abs() <= self.m, "mode {a} outside ⟦−{0},{0}⟧", self.m);
        self.z[(a + self.m as i64) as usize] = v;
    }

    /// `‖z‖_σ = 2 Σ_a e^{σ|a|^θ} |z_a|`.
    pub fn norm_sigma(&self) -> f64 {
        2.0 * compensated_sum(self.modes().map(|a| self.params.weight(a) * self.get(a).norm()))
    }

    /// `Π_L z`: zero the modes with `|a| > L` (mode bound unchanged).
    #[must_use]
    pub fn project(&self, l: u64) -> Self {
        let mut out = self.clone();
        for a in self.modes() {
            if a.unsigned_abs() > l {
                out.set(a, Complex64::new(0.0, 0.0));
            }
        }
        out
    }

    /// Same amplitudes on `⟦−M', M'⟧`, padding with zeros or truncating.
    #[must_use]
    pub fn resize(&self, new_m: u64) -> Self {
        let mut out = Self::zeros(new_m, self.params);
        for a in out.modes().collect::<Vec<_>>() {
            out.set(a, self.get(a));
        }
        out
    }

    /// `I_a = |z_a|²`, indexed like the amplitudes.
    pub fn actions(&self) -> Vec<f64> {
        self.z.iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn action(&self, a: i64) -> f64 {
        self.get(a).norm_sqr()
    }

    /// `Σ_a e^{σ|a|^θ} |I_a(z) − I_a(z′)|^{1/2}` over the union of supports.
    pub fn action_distance(&self, other: &Self) -> f64 {
        let m = self.m.max(other.m) as i64;
        compensated_sum((-m..=m).map(|a| self.params.weight(a) * (self.action(a) - other.action(a)).abs().sqrt()))
    }

    /// `Σ_a e^{2σ|a|^θ} |I_a(z) − I_a(z′)|`.
    pub fn weighted_action_l1(&self, other: &Self) -> f64 {
        let m = self.m.max(other.m) as i64;
        compensated_sum((-m..=m).map(|a| {
            let w = self.params.weight(a);
            w * w * (self.action(a) - other.action(a)).abs()
        }))
    }

    #[must_use]
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.z.iter_mut().for_each(|c| *c *= s);
        out
    }

    /// Elementwise `self − other` on the larger mode set.
    #[must_use]
    pub fn sub(&self, other: &Self) -> Self {
        let m = self.m.max(other.m);
        let mut out = Self::zeros(m, self.params);
        for a in out.modes().collect::<Vec<_>>() {
            out.set(a, self.get(a) - other.get(a));
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(StateJson {
            m: self.m,
            sigma: self.params.sigma,
            theta: self.params.theta,
            re: self.z.iter().map(|c| c.re).collect(),
            im: self.z.iter().map(|c| c.im).collect(),
        })
        .expect("state serializes")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let s: StateJson = serde_json::from_value(v.clone())?;
        let n = 2 * s.m as usize + 1;
        if s.re.len() != n || s.im.len() != n {
            return Err(Error::Parse(format!("expected {n} amplitudes for M = {}", s.m)));
        }
        let params = GevreyParams::new(s.sigma, s.theta)?;
        let z = s.re.iter().zip(&s.im).map(|(&r, &i)| Complex64::new(r, i)).collect();
        Ok(Self::from_vec(s.m, z, params))
    }

    /// CSV rows `a,re,im` with a header line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "a,re,im")?;
        for a in self.modes() {
            let c = self.get(a);
            writeln!(w, "{a},{},{}", c.re, c.im)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R, params: GevreyParams) -> Result<Self> {
        let mut rows = Vec::new();
        for (k, line) in r.lines().enumerate() {
            let line = line?;
            if k == 0 || line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 {
                return Err(Error::Parse(format!("line {}: expected 3 fields", k + 1)));
            }
            let p = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Parse(e.to_string()));
            let a = f[0].trim().parse::<i64>().map_err(|e| Error::Parse(e.to_string()))?;
            rows.push((a, Complex64::new(p(f[1])?, p(f[2])?)));
        }
        let m = rows.iter().map(|(a, _)| a.unsigned_abs()).max().unwrap_or(0);
        let mut s = Self::zeros(m, params);
        for (a, c) in rows {
            s.set(a, c);
        }
        Ok(s)
    }
}

#[derive(Serialize, Deserialize)]
struct StateJson {
    #[serde(rename = "M")]
    m: u64,
    sigma: f64,
    theta: f64,
    re: Vec<f64>,
    im: Vec<f64>,
}

/// `|√x − √y|`, which never exceeds `|x − y|^{1/2}` for `x, y ≥ 0`.
pub fn sqrt_gap(x: f64, y: f64) -> f64 {
    (x.sqrt() - y.sqrt()).abs()
}
