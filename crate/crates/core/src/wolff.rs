//! Wolff's periodic-exponential p-harmonic functions.
//!
//! A profile `a` solving `a'' + V(a, a') a = 0` is integrated once with a
//! fixed-step RK4 scheme, its period is read off the winding of the orbit
//! `(a, a')` around the origin, and the test function
//!
//! ```text
//! u0(x) = exp(tau (x.rho - t)) a(tau x.rho_perp)
//! ```
//!
//! is evaluated by cubic Hermite interpolation of the stored samples.

use std::f64::consts::TAU;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

/// Orbit radius (squared) below this fraction of the initial one is treated as collapse.
const COLLAPSE_FRACTION: f64 = 1e-10;

/// Largest argument accepted by `exp` before overflowing `f64`.
const MAX_EXPONENT: f64 = 709.0;

pub const DEFAULT_STEP: f64 = 1e-3;

pub fn validate_exponent(p: f64) -> Result<()> {
    if p.is_finite() && p > 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "exponent p must satisfy 1 < p < inf, got {p}"
        )))
    }
}

/// `V(a, a') = ((2p-3) a'^2 + (p-1) a^2) / ((p-1) a'^2 + a^2)`.
pub fn potential(a: f64, a_prime: f64, p: f64) -> Result<f64> {
    if a == 0.0 && a_prime == 0.0 {
        return Err(Error::Degenerate(
            "V(a, a') is undefined at a = a' = 0".into(),
        ));
    }
    Ok(potential_unchecked(a, a_prime, p))
}

#[inline]
fn potential_unchecked(a: f64, a_prime: f64, p: f64) -> f64 {
    let ap2 = a_prime * a_prime;
    let a2 = a * a;
    ((2.0 * p - 3.0) * ap2 + (p - 1.0) * a2) / ((p - 1.0) * ap2 + a2)
}

#[inline]
fn rhs(y: [f64; 2], p: f64) -> [f64; 2] {
    [y[1], -potential_unchecked(y[0], y[1], p) * y[0]]
}

/// Angular velocity of the orbit, `d/ds atan2(a', a)`. Strictly negative: the
/// orbit turns clockwise at a rate that only depends on the angle.
#[inline]
fn angular_velocity(angle: f64, p: f64) -> f64 {
    let (s, c) = angle.sin_cos();
    -(p - 1.0) / ((p - 1.0) * s * s + c * c)
}

/// Sampled periodic solution of the Wolff ODE.
#[derive(Debug, Clone)]
pub struct WolffProfile {
    p: f64,
    a0: f64,
    b0: f64,
    step: f64,
    samples: Vec<[f64; 2]>,
    period: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileSummary {
    pub p: f64,
    pub a0: f64,
    pub b0: f64,
    pub step: f64,
    pub samples: usize,
    pub period: f64,
    pub orbit_min: f64,
    pub orbit_max: f64,
    pub mean: f64,
    pub closure_error: f64,
    pub ode_residual: f64,
}

/// Integrates `a'' + V(a, a') a = 0` from `(a0, b0)` over `[0, span]` with
/// classical RK4 and detects the period.
pub fn integrate_profile(p: f64, a0: f64, b0: f64, step: f64, span: f64) -> Result<WolffProfile> {
    validate_exponent(p)?;
    if !(a0.is_finite() && b0.is_finite()) || (a0 == 0.0 && b0 == 0.0) {
        return Err(Error::InvalidInput(format!(
            "initial conditions must be finite and not both zero, got ({a0}, {b0})"
        )));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidInput(format!("step must be positive, got {step}")));
    }
    if !(span.is_finite() && span >= 2.0 * step) {
        return Err(Error::InvalidInput(format!(
            "span must cover several steps, got {span}"
        )));
    }

    let n = (span / step).ceil() as usize;
    let r0 = a0 * a0 + b0 * b0;
    let mut samples = Vec::with_capacity(n + 1);
    let mut y = [a0, b0];
    samples.push(y);
    for i in 0..n {
        let k1 = rhs(y, p);
        let k2 = rhs([y[0] + 0.5 * step * k1[0], y[1] + 0.5 * step * k1[1]], p);
        let k3 = rhs([y[0] + 0.5 * step * k2[0], y[1] + 0.5 * step * k2[1]], p);
        let k4 = rhs([y[0] + step * k3[0], y[1] + step * k3[1]], p);
        y = [
            y[0] + step / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            y[1] + step / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ];
        let r = y[0] * y[0] + y[1] * y[1];
        if !r.is_finite() || r < COLLAPSE_FRACTION * r0 {
            return Err(Error::OrbitCollapse {
                s: (i + 1) as f64 * step,
                radius_sq: r,
            });
        }
        samples.push(y);
    }

    let mut profile = WolffProfile {
        p,
        a0,
        b0,
        step,
        samples,
        period: f64::NAN,
    };
    profile.period = detect_period(&profile)?;
    Ok(profile)
}

/// Smallest `s > 0` at which the orbit `(a, a')` completes one clockwise
/// revolution, i.e. returns to `(a0, b0)`.
///
/// The unwrapped winding angle is tracked sample by sample; the crossing of
/// `-2 pi` is refined by cubic Hermite interpolation of the angle, using its
/// exact derivative.
pub fn detect_period(profile: &WolffProfile) -> Result<f64> {
    let p = profile.p;
    let h = profile.step;
    let angle_of = |y: &[f64; 2]| y[1].atan2(y[0]);

    let start = angle_of(&profile.samples[0]);
    let target = start - TAU;
    let mut prev = start;
    for (i, pair) in profile.samples.windows(2).enumerate() {
        let raw = angle_of(&pair[1]);
        // the orbit turns clockwise by much less than pi per step
        let mut delta = raw - prev.rem_euclid(TAU);
        if delta > std::f64::consts::PI {
            delta -= TAU;
        } else if delta < -std::f64::consts::PI {
            delta += TAU;
        }
        let next = prev + delta;
        if next <= target {
            let m0 = angular_velocity(prev, p) * h;
            let m1 = angular_velocity(next, p) * h;
            let frac = hermite_root(prev - target, next - target, m0, m1);
            return Ok((i as f64 + frac) * h);
        }
        prev = next;
    }
    Err(Error::NoReturn {
        span: h * (profile.samples.len() - 1) as f64,
    })
}

/// Root in `[0, 1]` of the cubic Hermite interpolant with end values `f0 > 0 >= f1`
/// and scaled end slopes `m0`, `m1`.
fn hermite_root(f0: f64, f1: f64, m0: f64, m1: f64) -> f64 {
    let eval = |t: f64| hermite(f0, m0, f1, m1, t);
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if eval(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[inline]
fn hermite(y0: f64, m0: f64, y1: f64, m1: f64, t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * m0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * m1
}

/// `int_0^t` of the Hermite basis, unit interval.
#[inline]
fn hermite_integral(y0: f64, m0: f64, y1: f64, m1: f64, t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    (0.5 * t4 - t3 + t) * y0
        + (0.25 * t4 - 2.0 / 3.0 * t3 + 0.5 * t2) * m0
        + (-0.5 * t4 + t3) * y1
        + (0.25 * t4 - t3 / 3.0) * m1
}

impl WolffProfile {
    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn initial(&self) -> (f64, f64) {
        (self.a0, self.b0)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn samples(&self) -> &[[f64; 2]] {
        &self.samples
    }

    pub fn span(&self) -> f64 {
        self.step * (self.samples.len() - 1) as f64
    }

    fn second_derivative(&self, y: [f64; 2]) -> f64 {
        -potential_unchecked(y[0], y[1], self.p) * y[0]
    }

    /// `(a(s), a'(s))` for any real `s`, using periodic extension.
    pub fn eval(&self, s: f64) -> (f64, f64) {
        let reduced = s.rem_euclid(self.period);
        self.eval_local(reduced)
    }

    fn eval_local(&self, s: f64) -> (f64, f64) {
        let h = self.step;
        let last = self.samples.len() - 2;
        let i = ((s / h).floor() as usize).min(last);
        let t = s / h - i as f64;
        let y0 = self.samples[i];
        let y1 = self.samples[i + 1];
        let d0 = self.second_derivative(y0);
        let d1 = self.second_derivative(y1);
        let a = hermite(y0[0], h * y0[1], y1[0], h * y1[1], t);
        let a_prime = hermite(y0[1], h * d0, y1[1], h * d1, t);
        (a, a_prime)
    }

    /// Smallest and largest `a^2 + a'^2` over the samples of one period.
    pub fn orbit_bounds(&self) -> (f64, f64) {
        let n = self.period_samples();
        self.samples[..=n]
            .iter()
            .map(|y| y[0] * y[0] + y[1] * y[1])
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), r| (lo.min(r), hi.max(r)))
    }

    /// Index of the last sample at or before one period.
    fn period_samples(&self) -> usize {
        ((self.period / self.step).floor() as usize).min(self.samples.len() - 2)
    }

    /// `int_0^period a(s) ds` by piecewise Hermite quadrature.
    pub fn period_integral(&self) -> f64 {
        let h = self.step;
        let n = self.period_samples();
        let mut total = 0.0;
        for i in 0..n {
            let (y0, y1) = (self.samples[i], self.samples[i + 1]);
            total += h * hermite_integral(y0[0], h * y0[1], y1[0], h * y1[1], 1.0);
        }
        let frac = self.period / h - n as f64;
        if frac > 0.0 {
            let (y0, y1) = (self.samples[n], self.samples[n + 1]);
            total += h * hermite_integral(y0[0], h * y0[1], y1[0], h * y1[1], frac);
        }
        total
    }

    /// Distance in the phase plane between the state at `0` and at one period.
    pub fn closure_error(&self) -> f64 {
        let (a, ap) = self.eval_local(self.period);
        (a - self.a0).hypot(ap - self.b0)
    }

    /// Largest `|a'' + V(a, a') a|` over interior samples, with `a''` taken from
    /// a fourth-order central difference of the stored `a'`.
    pub fn ode_residual(&self) -> f64 {
        let h = self.step;
        let s = &self.samples;
        if s.len() < 5 {
            return 0.0;
        }
        (2..s.len() - 2)
            .map(|i| {
                let a2 = (-s[i + 2][1] + 8.0 * s[i + 1][1] - 8.0 * s[i - 1][1] + s[i - 2][1])
                    / (12.0 * h);
                (a2 - self.second_derivative(s[i])).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn summary(&self) -> ProfileSummary {
        let (orbit_min, orbit_max) = self.orbit_bounds();
        ProfileSummary {
            p: self.p,
            a0: self.a0,
            b0: self.b0,
            step: self.step,
            samples: self.samples.len(),
            period: self.period,
            orbit_min,
            orbit_max,
            mean: self.period_integral() / self.period,
            closure_error: self.closure_error(),
            ode_residual: self.ode_residual(),
        }
    }

    /// CSV table `s,a,a_prime` of the stored samples.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "s,a,a_prime")?;
        for (i, y) in self.samples.iter().enumerate() {
            writeln!(out, "{},{},{}", i as f64 * self.step, y[0], y[1])?;
        }
        Ok(())
    }
}

/// Default span: a little over two periods for any `p`.
pub fn default_span(p: f64) -> f64 {
    2.5 * std::f64::consts::PI * p / (p - 1.0)
}

/// Integrates the default profile `(a0, b0) = (1, 0)` with the default step.
pub fn default_profile(p: f64) -> Result<WolffProfile> {
    validate_exponent(p)?;
    integrate_profile(p, 1.0, 0.0, DEFAULT_STEP, default_span(p))
}

/// Orthonormal pair `(rho, rho_perp)`; `rho_perp` is `rho` turned counterclockwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DirectionFrame {
    pub rho: [f64; 2],
    pub rho_perp: [f64; 2],
}

impl DirectionFrame {
    pub fn new(rho: [f64; 2]) -> Result<Self> {
        let norm = rho[0].hypot(rho[1]);
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidInput(format!("direction {rho:?} is not normalisable")));
        }
        let rho = [rho[0] / norm, rho[1] / norm];
        Ok(DirectionFrame {
            rho,
            rho_perp: [-rho[1], rho[0]],
        })
    }

    pub fn from_angle(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        DirectionFrame {
            rho: [c, s],
            rho_perp: [-s, c],
        }
    }
}

/// Parameters of `u0(x) = exp(tau (x.rho - t)) a(tau x.rho_perp)`.
#[derive(Debug, Clone, Copy)]
pub struct TestFunctionParams<'a> {
    pub frame: DirectionFrame,
    pub tau: f64,
    pub t: f64,
    pub profile: &'a WolffProfile,
}

impl<'a> TestFunctionParams<'a> {
    pub fn new(frame: DirectionFrame, tau: f64, t: f64, profile: &'a WolffProfile) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidInput(format!("tau must be positive, got {tau}")));
        }
        if !t.is_finite() {
            return Err(Error::InvalidInput(format!("offset t must be finite, got {t}")));
        }
        Ok(TestFunctionParams {
            frame,
            tau,
            t,
            profile,
        })
    }

    pub fn p(&self) -> f64 {
        self.profile.p
    }

    /// Value and gradient of `u0` at `x`.
    pub fn eval(&self, x: [f64; 2]) -> Result<(f64, [f64; 2])> {
        let DirectionFrame { rho, rho_perp } = self.frame;
        let exponent = self.tau * (x[0] * rho[0] + x[1] * rho[1] - self.t);
        if !(exponent <= MAX_EXPONENT) {
            return Err(Error::Overflow { exponent });
        }
        let growth = exponent.exp();
        let (a, ap) = self
            .profile
            .eval(self.tau * (x[0] * rho_perp[0] + x[1] * rho_perp[1]));
        let scale = self.tau * growth;
        Ok((
            growth * a,
            [
                scale * (rho[0] * a + rho_perp[0] * ap),
                scale * (rho[1] * a + rho_perp[1] * ap),
            ],
        ))
    }

    pub fn value(&self, x: [f64; 2]) -> Result<f64> {
        self.eval(x).map(|(v, _)| v)
    }
}

/// Axis-aligned box `[min[0], max[0]] x [min[1], max[1]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Window {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        Window { min, max }
    }

    pub fn unit() -> Self {
        Window::new([0.0, 0.0], [1.0, 1.0])
    }
}

/// Largest `|div(|grad u|^{p-2} grad u)|` over the grid points of `window`, for
/// the test function `u0` of `params`.
///
/// The flux is evaluated at cell midpoints `x +- h/2 e_k` from the exact
/// gradient and differenced centrally, a second-order discretisation.
pub fn pharmonic_residual(params: &TestFunctionParams<'_>, spacing: f64, window: Window) -> Result<f64> {
    let ratio = params.tau * spacing;
    if ratio > 0.2 {
        return Err(Error::Resolution {
            what: "tau * grid_spacing",
            value: ratio,
            limit: 0.2,
        });
    }
    flux_divergence_residual(|x| params.eval(x).map(|(_, g)| g), params.p(), spacing, window)
}

/// Same discretisation as [`pharmonic_residual`] for an arbitrary gradient field.
pub fn flux_divergence_residual<G>(gradient: G, p: f64, spacing: f64, window: Window) -> Result<f64>
where
    G: Fn([f64; 2]) -> Result<[f64; 2]>,
{
    validate_exponent(p)?;
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(Error::InvalidInput(format!("grid spacing must be positive, got {spacing}")));
    }
    let flux = |x: [f64; 2]| -> Result<[f64; 2]> {
        let g = gradient(x)?;
        let norm = g[0].hypot(g[1]);
        if norm == 0.0 {
            return Ok([0.0, 0.0]);
        }
        let w = norm.powf(p - 2.0);
        Ok([w * g[0], w * g[1]])
    };
    let h = spacing;
    let nx = ((window.max[0] - window.min[0]) / h).round() as usize;
    let ny = ((window.max[1] - window.min[1]) / h).round() as usize;
    let mut worst = 0.0_f64;
    for j in 0..=ny {
        for i in 0..=nx {
            let x = [window.min[0] + i as f64 * h, window.min[1] + j as f64 * h];
            let east = flux([x[0] + 0.5 * h, x[1]])?[0];
            let west = flux([x[0] - 0.5 * h, x[1]])?[0];
            let north = flux([x[0], x[1] + 0.5 * h])?[1];
            let south = flux([x[0], x[1] - 0.5 * h])?[1];
            let div = (east - west + north - south) / h;
            worst = worst.max(div.abs());
        }
    }
    Ok(worst)
}
