//! Adaptive Dormand–Prince 5(4) integrator on complex state vectors.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Tolerances and limits for [`integrate`].
#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Initial step magnitude; `0` picks `|t1 − t0| / 16`.
    pub h_init: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-15,
            max_steps: 1_000_000,
            h_init: 0.0,
        }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `y' = f(t, y)` from `t0` to `t1`.
///
/// `f` writes the derivative into its output slice. `on_step` is called
/// after every accepted step with the new time and state and may abort.
pub fn integrate<F, G>(
    mut f: F,
    y0: &[Complex64],
    t0: f64,
    t1: f64,
    opts: &OdeOptions,
    mut on_step: G,
) -> Result<Vec<Complex64>>
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]) -> Result<()>,
    G: FnMut(f64, &[Complex64]) -> Result<()>,
{
    let n = y0.len();
    let mut y = y0.to_vec();
    if t1 == t0 || n == 0 {
        return Ok(y);
    }
    let dir = (t1 - t0).signum();
    let span = (t1 - t0).abs();
    let mut h = if opts.h_init > 0.0 {
        opts.h_init.min(span)
    } else {
        span / 16.0
    };
    let mut t = t0;
    let zero = Complex64::new(0.0, 0.0);
    let mut k = vec![vec![zero; n]; 7];
    let mut tmp = vec![zero; n];
    f(t, &y, &mut k[0])?;
    let mut steps = 0usize;
    while (t1 - t) * dir > 0.0 {
        if steps >= opts.max_steps {
            return Err(Error::StepCollapse { t, h });
        }
        steps += 1;
        let remaining = (t1 - t).abs();
        let last = h >= remaining;
        let hs = if last { remaining } else { h } * dir;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for (r, a) in A[s][..s].iter().enumerate() {
                    if *a != 0.0 {
                        acc += k[r][i] * (hs * a);
                    }
                }
                tmp[i] = acc;
            }
            f(t + C[s] * hs, &tmp, &mut k[s])?;
        }
        // Stage 7 is evaluated at the 5th-order solution, stored in `tmp`.
        let mut err = 0.0f64;
        for i in 0..n {
            let mut e = zero;
            for (r, ec) in E.iter().enumerate() {
                if *ec != 0.0 {
                    e += k[r][i] * (hs * ec);
                }
            }
            let sc = opts.atol + opts.rtol * y[i].norm().max(tmp[i].norm());
            err = err.max(e.norm() / sc);
        }
        if !err.is_finite() {
            return Err(Error::Instability { t });
        }
        if err <= 1.0 {
            t = if last { t1 } else { t + hs };
            y.copy_from_slice(&tmp);
            k.swap(0, 6);
            on_step(t, &y)?;
        }
        let fac = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h = hs.abs() * fac;
        if h < 1e-14 * span.max(t.abs()) {
            return Err(Error::StepCollapse { t, h });
        }
    }
    Ok(y)
}
