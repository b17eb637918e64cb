//! Adaptive Dormand–Prince 5(4) integrator for complex linear systems, with
//! fourth-order dense output to land on arbitrary output times.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rel: 1e-8,
            abs: 1e-10,
        }
    }
}

/// Step statistics of one integration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

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

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const MAX_STEPS: usize = 5_000_000;

type State = Vec<Complex64>;

fn axpy(out: &mut [Complex64], y: &[Complex64], h: f64, terms: &[(f64, &[Complex64])]) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (a, k) in terms {
            acc += k[i] * *a;
        }
        *o = y[i] + acc * h;
    }
}

/// Integrates `dy/dt = f(t, y)` from `t_out[0]` and returns the state at
/// every entry of `t_out` (which must be increasing).
pub fn integrate<F>(
    mut f: F,
    y0: &[Complex64],
    t_out: &[f64],
    tol: Tolerances,
) -> Result<(Vec<State>, Stats)>
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
{
    if !(tol.rel > 0.0 && tol.abs > 0.0) {
        return Err(Error::InvalidArgument("tolerances must be > 0".into()));
    }
    crate::trace::check_grid(t_out)?;
    let n = y0.len();
    let mut stats = Stats::default();
    let mut out = Vec::with_capacity(t_out.len());
    out.push(y0.to_vec());
    if t_out.len() == 1 {
        return Ok((out, stats));
    }

    let t_end = *t_out.last().unwrap();
    let mut t = t_out[0];
    let mut y = y0.to_vec();
    let mut k: [State; 7] = std::array::from_fn(|_| vec![Complex64::new(0.0, 0.0); n]);
    let mut stage = vec![Complex64::new(0.0, 0.0); n];
    let mut y_new = vec![Complex64::new(0.0, 0.0); n];
    let mut rcont: [State; 5] = std::array::from_fn(|_| vec![Complex64::new(0.0, 0.0); n]);

    f(t, &y, &mut k[0]);
    stats.evaluations += 1;
    let mut h = initial_step(&mut f, t, &y, &k[0], tol, &mut stats).min(t_end - t);
    let mut next_out = 1;
    let mut last_reject = false;

    while next_out < t_out.len() {
        if stats.accepted + stats.rejected >= MAX_STEPS {
            return Err(Error::IntegrationFailure {
                t_reached: t,
                reason: "step budget exhausted".into(),
            });
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::IntegrationFailure {
                t_reached: t,
                reason: format!("step size collapsed to {h:e}"),
            });
        }
        if t + h > t_end {
            h = t_end - t;
        }

        let [k1, k2, k3, k4, k5, k6, k7] = &mut k;
        axpy(&mut stage, &y, h, &[(A21, k1)]);
        f(t + C2 * h, &stage, k2);
        axpy(&mut stage, &y, h, &[(A31, k1), (A32, k2)]);
        f(t + C3 * h, &stage, k3);
        axpy(&mut stage, &y, h, &[(A41, k1), (A42, k2), (A43, k3)]);
        f(t + C4 * h, &stage, k4);
        axpy(
            &mut stage,
            &y,
            h,
            &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)],
        );
        f(t + C5 * h, &stage, k5);
        axpy(
            &mut stage,
            &y,
            h,
            &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)],
        );
        f(t + h, &stage, k6);
        axpy(
            &mut y_new,
            &y,
            h,
            &[(A71, k1), (A73, k3), (A74, k4), (A75, k5), (A76, k6)],
        );
        f(t + h, &y_new, k7);
        stats.evaluations += 6;

        let mut err_sq = 0.0;
        for i in 0..n {
            let e =
                (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
            let scale = tol.abs + tol.rel * y[i].norm().max(y_new[i].norm());
            err_sq += (e.norm() / scale).powi(2);
        }
        let err = (err_sq / n.max(1) as f64).sqrt();

        if err <= 1.0 {
            for i in 0..n {
                let dy = y_new[i] - y[i];
                let bspl = k1[i] * h - dy;
                rcont[0][i] = y[i];
                rcont[1][i] = dy;
                rcont[2][i] = bspl;
                rcont[3][i] = dy - k7[i] * h - bspl;
                rcont[4][i] =
                    (k1[i] * D1 + k3[i] * D3 + k4[i] * D4 + k5[i] * D5 + k6[i] * D6 + k7[i] * D7)
                        * h;
            }
            let t_old = t;
            t += h;
            stats.accepted += 1;
            while next_out < t_out.len() && t_out[next_out] <= t + 1e-12 * t.abs().max(1.0) {
                let target = t_out[next_out];
                if (target - t).abs() <= 1e-12 * t.abs().max(1.0) {
                    out.push(y_new.clone());
                } else {
                    out.push(dense(&rcont, (target - t_old) / h));
                }
                next_out += 1;
            }
            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6);

            let mut fac = if err == 0.0 {
                10.0
            } else {
                SAFETY * err.powf(-0.2)
            };
            fac = fac.clamp(0.2, 10.0);
            if last_reject {
                fac = fac.min(1.0);
            }
            last_reject = false;
            h *= fac;
        } else {
            stats.rejected += 1;
            last_reject = true;
            let fac = if err.is_finite() {
                (SAFETY * err.powf(-0.2)).max(0.2)
            } else {
                0.2
            };
            h *= fac;
        }
    }
    Ok((out, stats))
}

fn dense(rcont: &[State; 5], theta: f64) -> State {
    let theta1 = 1.0 - theta;
    (0..rcont[0].len())
        .map(|i| {
            rcont[0][i]
                + (rcont[1][i]
                    + (rcont[2][i] + (rcont[3][i] + rcont[4][i] * theta1) * theta) * theta1)
                    * theta
        })
        .collect()
}

/// Starting step from the local scale of `y` and `f(t, y)`.
fn initial_step<F>(
    f: &mut F,
    t: f64,
    y: &[Complex64],
    f0: &[Complex64],
    tol: Tolerances,
    stats: &mut Stats,
) -> f64
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
{
    let n = y.len().max(1) as f64;
    let scale: Vec<f64> = y.iter().map(|v| tol.abs + tol.rel * v.norm()).collect();
    let norm = |v: &[Complex64]| {
        (v.iter()
            .zip(&scale)
            .map(|(x, s)| (x.norm() / s).powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
    };
    let d0 = norm(y);
    let d1 = norm(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let y1: Vec<Complex64> = y.iter().zip(f0).map(|(a, b)| a + b * h0).collect();
    let mut f1 = vec![Complex64::new(0.0, 0.0); y.len()];
    f(t + h0, &y1, &mut f1);
    stats.evaluations += 1;
    let diff: Vec<Complex64> = f1.iter().zip(f0).map(|(a, b)| (a - b) / h0).collect();
    let d2 = norm(&diff);
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_and_rotation() {
        let lambda = Complex64::new(-0.7, 3.0);
        let t_out: Vec<f64> = (0..=40).map(|k| 0.1 * k as f64).collect();
        let (ys, stats) = integrate(
            |_, y, dy| dy[0] = lambda * y[0],
            &[Complex64::new(1.0, 0.0)],
            &t_out,
            Tolerances::default(),
        )
        .unwrap();
        assert!(stats.accepted > 0);
        for (t, y) in t_out.iter().zip(&ys) {
            let exact = (lambda * t).exp();
            assert!((y[0] - exact).norm() < 1e-7, "t={t}");
        }
    }

    #[test]
    fn dense_output_is_accurate_between_steps() {
        // Harmonic oscillator y'' = −y written as a complex first-order pair.
        let t_out: Vec<f64> = (0..=500).map(|k| 0.0137 * k as f64).collect();
        let (ys, stats) = integrate(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            &[Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
            &t_out,
            Tolerances::default(),
        )
        .unwrap();
        // Far fewer steps than output points, so most outputs are interpolated.
        assert!(stats.accepted < t_out.len());
        for (t, y) in t_out.iter().zip(&ys) {
            assert!((y[0].re - t.cos()).abs() < 1e-7);
        }
    }

    #[test]
    fn tighter_tolerance_reduces_error() {
        let t_out = [0.0, 5.0];
        let err = |rel: f64| {
            let (ys, _) = integrate(
                |t, y, dy| dy[0] = y[0] * Complex64::new(0.0, t.cos()),
                &[Complex64::new(1.0, 0.0)],
                &t_out,
                Tolerances {
                    rel,
                    abs: rel * 1e-2,
                },
            )
            .unwrap();
            (ys[1][0] - Complex64::new(0.0, 5.0_f64.sin()).exp()).norm()
        };
        assert!(err(1e-10) < err(1e-5));
        assert!(err(1e-10) < 1e-8);
    }

    #[test]
    fn blow_up_reports_failure() {
        let r = integrate(
            |_, y, dy| dy[0] = y[0] * y[0],
            &[Complex64::new(1.0, 0.0)],
            &[0.0, 2.0],
            Tolerances::default(),
        );
        match r {
            Err(Error::IntegrationFailure { t_reached, .. }) => assert!(t_reached < 1.0 + 1e-6),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let f = |_: f64, y: &[Complex64], dy: &mut [Complex64]| dy[0] = y[0];
        let y0 = [Complex64::new(1.0, 0.0)];
        assert!(integrate(
            f,
            &y0,
            &[0.0, 1.0],
            Tolerances {
                rel: 0.0,
                abs: 1e-9
            }
        )
        .is_err());
        assert!(integrate(f, &y0, &[1.0, 0.5], Tolerances::default()).is_err());
    }
}
