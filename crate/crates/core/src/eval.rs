//! Floating-point evaluation of exact Hamiltonians.
//!
//! A [`Compiled`] Hamiltonian is a list of terms
//! `c · Π z_{a⁺} Π z̄_{a⁻} · Π_α (i / ω_{h_α}(z))`, where every `ω_h` is a
//! linear form in the actions. Polynomials are the case with no denominators.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
struct Term {
    coeff: Complex64,
    plus: Vec<usize>,
    minus: Vec<usize>,
    dens: Vec<usize>,
}

/// Numeric form of an exact Hamiltonian on `⟦−M, M⟧`.
#[derive(Clone, Debug)]
pub struct Compiled {
    m: u64,
    terms: Vec<Term>,
    dens: Vec<Vec<f64>>,
    den_labels: Vec<String>,
}

/// Values and first derivatives at one state.
pub struct Jet {
    pub value: Complex64,
    /// `∂/∂z̄_a`, indexed by `a + M`.
    pub d_conj: Vec<Complex64>,
    /// `∂/∂z_a`, indexed by `a + M`.
    pub d_z: Vec<Complex64>,
}

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

impl Compiled {
    pub fn new(m: u64) -> Self {
        Self {
            m,
            terms: Vec::new(),
            dens: Vec::new(),
            den_labels: Vec::new(),
        }
    }

    pub fn mode_bound(&self) -> u64 {
        self.m
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    fn slot(&self, a: i64) -> usize {
        assert!(a.unsigned_abs() <= self.m, "mode {a} beyond compiled bound {}", self.m);
        (a + self.m as i64) as usize
    }

    /// Registers a denominator `ω = Σ_a w_a I_a` (dense over `⟦−M, M⟧`).
    pub fn add_denominator(&mut self, w: Vec<f64>, label: String) -> usize {
        assert_eq!(w.len(), 2 * self.m as usize + 1);
        self.dens.push(w);
        self.den_labels.push(label);
        self.dens.len() - 1
    }

    /// Adds `coeff · Π z_{plus} Π z̄_{minus} · Π_α i/ω_{dens[α]}`.
    pub fn add_term(&mut self, coeff: Complex64, plus: &[i64], minus: &[i64], dens: &[usize]) {
        let plus = plus.iter().map(|&a| self.slot(a)).collect();
        let minus = minus.iter().map(|&a| self.slot(a)).collect();
        self.terms.push(Term {
            coeff,
            plus,
            minus,
            dens: dens.to_vec(),
        });
    }

    fn omegas(&self, z: &[Complex64]) -> Result<Vec<f64>> {
        let act: Vec<f64> = z.iter().map(|c| c.norm_sqr()).collect();
        self.dens
            .iter()
            .zip(&self.den_labels)
            .map(|(w, lab)| {
                let om: f64 = w.iter().zip(&act).map(|(x, y)| x * y).sum();
                if om == 0.0 {
                    Err(Error::VanishingDenominator(lab.clone()))
                } else {
                    Ok(om)
                }
            })
            .collect()
    }

    /// Smallest `|ω_h(z)|` over the registered denominators.
    pub fn min_abs_omega(&self, z: &[Complex64]) -> Option<f64> {
        let act: Vec<f64> = z.iter().map(|c| c.norm_sqr()).collect();
        self.dens
            .iter()
            .map(|w| w.iter().zip(&act).map(|(x, y)| x * y).sum::<f64>().abs())
            .min_by(|a, b| a.total_cmp(b))
    }

    pub fn value(&self, z: &[Complex64]) -> Result<Complex64> {
        Ok(self.jet(z, false)?.value)
    }

    /// Value and derivatives; `with_derivatives = false` skips the latter.
    pub fn jet(&self, z: &[Complex64], with_derivatives: bool) -> Result<Jet> {
        let n = 2 * self.m as usize + 1;
        assert_eq!(z.len(), n, "state has wrong length for compiled bound");
        let om = self.omegas(z)?;
        let inv: Vec<Complex64> = om.iter().map(|&o| I / o).collect();
        let mut value = ZERO;
        let mut d_conj = vec![ZERO; if with_derivatives { n } else { 0 }];
        let mut d_z = vec![ZERO; if with_derivatives { n } else { 0 }];
        let mut force = vec![ZERO; self.dens.len()];
        let mut factors: Vec<Complex64> = Vec::with_capacity(16);
        let mut prefix: Vec<Complex64> = Vec::with_capacity(17);
        for t in &self.terms {
            factors.clear();
            factors.extend(t.plus.iter().map(|&s| z[s]));
            factors.extend(t.minus.iter().map(|&s| z[s].conj()));
            let mut g = t.coeff;
            for &d in &t.dens {
                g *= inv[d];
            }
            let mono: Complex64 = factors.iter().product();
            value += g * mono;
            if !with_derivatives {
                continue;
            }
            prefix.clear();
            prefix.push(Complex64::new(1.0, 0.0));
            for f in &factors {
                let last = *prefix.last().unwrap();
                prefix.push(last * f);
            }
            let mut suffix = Complex64::new(1.0, 0.0);
            let np = t.plus.len();
            for k in (0..factors.len()).rev() {
                let partial = g * prefix[k] * suffix;
                if k < np {
                    d_z[t.plus[k]] += partial;
                } else {
                    d_conj[t.minus[k - np]] += partial;
                }
                suffix *= factors[k];
            }
            for &d in &t.dens {
                // ∂(i/ω)/∂I_a · (ω/i) = −w_a/ω.
                force[d] -= g * mono / om[d];
            }
        }
        if with_derivatives && !self.dens.is_empty() {
            for (k, zk) in z.iter().enumerate() {
                let di: Complex64 = self.dens.iter().zip(&force).map(|(w, f)| f * w[k]).sum();
                d_conj[k] += di * zk;
                d_z[k] += di * zk.conj();
            }
        }
        Ok(Jet { value, d_conj, d_z })
    }

    /// Hamiltonian vector field `(X_H)_a = i ∂H/∂z̄_a`.
    pub fn vector_field(&self, z: &[Complex64]) -> Result<Vec<Complex64>> {
        let jet = self.jet(z, true)?;
        Ok(jet.d_conj.into_iter().map(|c| I * c).collect())
    }
}

/// `{F, G}(z) = i Σ_a (∂_{z_a}F ∂_{z̄_a}G − ∂_{z̄_a}F ∂_{z_a}G)` from two jets.
pub fn bracket_from_jets(f: &Jet, g: &Jet) -> Complex64 {
    let s: Complex64 = f
        .d_z
        .iter()
        .zip(&g.d_conj)
        .zip(f.d_conj.iter().zip(&g.d_z))
        .map(|((fz, gc), (fc, gz))| fz * gc - fc * gz)
        .sum();
    I * s
}
