//! Embedded Dormand-Prince 5(4) integrator for complex state vectors.

use crate::error::{Error, Result};
use crate::hilbert::C64;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// fifth-order weights minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

#[derive(Clone, Copy, Debug)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            max_steps: 20_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Reusable integrator with preallocated stage buffers.
pub struct Dopri5 {
    tol: Tolerances,
    k: [Vec<C64>; 7],
    tmp: Vec<C64>,
    y_new: Vec<C64>,
    pub stats: StepStats,
}

impl Dopri5 {
    pub fn new(tol: Tolerances, n: usize) -> Self {
        let z = vec![C64::new(0.0, 0.0); n];
        Self {
            tol,
            k: std::array::from_fn(|_| z.clone()),
            tmp: z.clone(),
            y_new: z,
            stats: StepStats::default(),
        }
    }

    fn scaled_norm(&self, err: impl Iterator<Item = (f64, f64, f64)>) -> f64 {
        let mut acc = 0.0;
        let mut n = 0usize;
        for (e, a, b) in err {
            let sc = self.tol.atol + self.tol.rtol * a.max(b);
            acc += (e / sc).powi(2);
            n += 1;
        }
        (acc / n.max(1) as f64).sqrt()
    }

    fn initial_step<F>(&mut self, f: &mut F, t: f64, y: &[C64], span: f64, max_step: f64) -> f64
    where
        F: FnMut(f64, &[C64], &mut [C64]),
    {
        f(t, y, &mut self.k[0]);
        self.stats.evaluations += 1;
        let d0 = self.scaled_norm(y.iter().map(|z| (z.norm(), z.norm(), z.norm())));
        let d1 = self.scaled_norm(self.k[0].iter().zip(y).map(|(d, z)| (d.norm(), z.norm(), z.norm())));
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(span).min(max_step);
        for ((t, &yi), &ki) in self.tmp.iter_mut().zip(y).zip(&self.k[0]) {
            *t = yi + ki * h0;
        }
        f(t + h0, &self.tmp, &mut self.k[1]);
        self.stats.evaluations += 1;
        let d2 = self.scaled_norm(
            self.k[1]
                .iter()
                .zip(&self.k[0])
                .zip(y)
                .map(|((a, b), z)| ((a - b).norm() / h0, z.norm(), z.norm())),
        );
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(span).min(max_step)
    }

    /// Advance `y` from `t0` to exactly `t1`, never taking a step longer
    /// than `max_step`.
    pub fn integrate<F>(&mut self, mut f: F, t0: f64, t1: f64, y: &mut [C64], max_step: f64) -> Result<()>
    where
        F: FnMut(f64, &[C64], &mut [C64]),
    {
        let n = y.len();
        if t1 <= t0 {
            return Ok(());
        }
        let mut t = t0;
        let mut h = self.initial_step(&mut f, t0, y, t1 - t0, max_step);
        f(t, y, &mut self.k[0]);
        self.stats.evaluations += 1;
        let mut steps = 0usize;
        loop {
            if steps >= self.tol.max_steps {
                return Err(Error::TooManySteps { t, steps });
            }
            steps += 1;
            let last = t + h >= t1 || (t1 - (t + h)) < 1e-12 * t1.abs().max(1.0);
            if last {
                h = t1 - t;
            }
            let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
            let tmp = &mut self.tmp;
            for i in 0..n {
                tmp[i] = y[i] + k1[i] * (h * A21);
            }
            f(t + C2 * h, tmp, k2);
            for i in 0..n {
                tmp[i] = y[i] + (k1[i] * A31 + k2[i] * A32) * h;
            }
            f(t + C3 * h, tmp, k3);
            for i in 0..n {
                tmp[i] = y[i] + (k1[i] * A41 + k2[i] * A42 + k3[i] * A43) * h;
            }
            f(t + C4 * h, tmp, k4);
            for i in 0..n {
                tmp[i] = y[i] + (k1[i] * A51 + k2[i] * A52 + k3[i] * A53 + k4[i] * A54) * h;
            }
            f(t + C5 * h, tmp, k5);
            for i in 0..n {
                tmp[i] = y[i]
                    + (k1[i] * A61 + k2[i] * A62 + k3[i] * A63 + k4[i] * A64 + k5[i] * A65) * h;
            }
            f(t + h, tmp, k6);
            let y_new = &mut self.y_new;
            for i in 0..n {
                y_new[i] = y[i]
                    + (k1[i] * A71 + k3[i] * A73 + k4[i] * A74 + k5[i] * A75 + k6[i] * A76) * h;
            }
            f(t + h, y_new, k7);
            self.stats.evaluations += 6;

            let mut acc = 0.0;
            for i in 0..n {
                let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
                let sc = self.tol.atol + self.tol.rtol * y[i].norm().max(y_new[i].norm());
                acc += e.norm_sqr() / (sc * sc);
            }
            let err = (acc / n.max(1) as f64).sqrt();
            if !err.is_finite() {
                return Err(Error::StepSize { t, h });
            }

            if err <= 1.0 {
                self.stats.accepted += 1;
                t = if last { t1 } else { t + h };
                y.copy_from_slice(y_new);
                std::mem::swap(k1, k7);
                if last {
                    return Ok(());
                }
                let factor = if err == 0.0 {
                    MAX_FACTOR
                } else {
                    (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
                };
                h = (h * factor).min(max_step);
            } else {
                self.stats.rejected += 1;
                let factor = (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, 1.0);
                h *= factor;
            }
            if h < 1e-13 * t.abs().max(1.0) {
                return Err(Error::StepSize { t, h });
            }
        }
    }
}
