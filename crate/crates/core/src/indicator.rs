//! Indicator function, tau-sweeps, support estimates and hull reconstruction.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{halfspace_intersection, HullResult, Point, Shape, SupportEstimate};
use crate::mesh::{assign_conductivity, generate_mesh, ConductivityField, Mesh};
use crate::solver::{ForwardSolver, SolveReport, SolverOptions};
use crate::wolff::{default_profile, validate_exponent, DirectionFrame, TestFunctionParams, WolffProfile};

/// Largest admissible `tau * h_max`.
pub const MAX_TAU_H: f64 = 0.2;
/// Samples below this multiple of the propagated pairing error are noise.
pub const DEFAULT_NOISE_FACTOR: f64 = 10.0;
/// Usable samples needed for a support estimate.
pub const MIN_USABLE: usize = 4;
const MIN_FIT: usize = 3;

pub fn default_taus() -> Vec<f64> {
    vec![4.0, 6.0, 8.0, 10.0, 12.0, 14.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IndicatorSample {
    pub rho: Point,
    pub tau: f64,
    pub t: f64,
    /// `tau^(2-p) (pairing_sigma - pairing_background)`
    pub value: f64,
    pub pairing_sigma: f64,
    pub pairing_background: f64,
    /// Propagated solver error of `value`.
    pub error: f64,
}

impl IndicatorSample {
    pub fn from_pairings(rho: Point, tau: f64, t: f64, p: f64, sigma: &SolveReport, background: &SolveReport) -> Self {
        let scale = tau.powf(2.0 - p);
        IndicatorSample {
            rho,
            tau,
            t,
            value: scale * (sigma.energy - background.energy),
            pairing_sigma: sigma.energy,
            pairing_background: background.energy,
            error: scale * (sigma.energy_error + background.energy_error),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Positive,
    Negative,
    Indeterminate,
}

impl Sign {
    pub fn as_i8(self) -> i8 {
        match self {
            Sign::Positive => 1,
            Sign::Negative => -1,
            Sign::Indeterminate => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub rho: Point,
    pub t: f64,
    pub p: f64,
    pub samples: Vec<IndicatorSample>,
    /// Least-squares `d log|I| / d tau` over the fitted samples, 0 if none.
    pub slope: f64,
    pub intercept: f64,
    /// RMS residual of the linear fit.
    pub fit_residual: f64,
    /// Number of samples above the noise floor.
    pub usable: usize,
    /// Number of samples in the fit.
    pub fitted: usize,
    pub sign: Sign,
}

impl SweepResult {
    /// Classifies and fits `samples`, which must have strictly increasing `tau`.
    pub fn from_samples(rho: Point, t: f64, p: f64, samples: Vec<IndicatorSample>, noise_factor: f64) -> Result<Self> {
        if samples.windows(2).any(|w| !(w[1].tau > w[0].tau)) {
            return Err(Error::InvalidInput("tau values must be strictly increasing".into()));
        }
        let usable: Vec<IndicatorSample> = samples
            .iter()
            .filter(|s| s.value != 0.0 && s.value.is_finite() && s.value.abs() > noise_factor * s.error)
            .copied()
            .collect();
        let sign = if usable.is_empty() {
            Sign::Indeterminate
        } else if usable.iter().all(|s| s.value > 0.0) {
            Sign::Positive
        } else if usable.iter().all(|s| s.value < 0.0) {
            Sign::Negative
        } else {
            Sign::Indeterminate
        };
        let fitted = if usable.len() < 2 {
            0
        } else {
            usable.len().div_ceil(2).max(MIN_FIT).min(usable.len())
        };
        let points: Vec<(f64, f64)> = usable[usable.len() - fitted..]
            .iter()
            .map(|s| (s.tau, s.value.abs().ln()))
            .collect();
        let (slope, intercept, fit_residual) = if fitted >= 2 { linear_fit(&points) } else { (0.0, 0.0, 0.0) };
        Ok(SweepResult {
            rho,
            t,
            p,
            samples,
            slope,
            intercept,
            fit_residual,
            usable: usable.len(),
            fitted,
            sign,
        })
    }

    /// Rows `rho_x,rho_y,tau,t,indicator,pairing_sigma,pairing_background`.
    pub fn write_csv_rows<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for s in &self.samples {
            writeln!(
                out,
                "{},{},{},{},{:e},{:e},{:e}",
                s.rho[0], s.rho[1], s.tau, s.t, s.value, s.pairing_sigma, s.pairing_background
            )?;
        }
        Ok(())
    }
}

pub const SWEEP_CSV_HEADER: &str = "rho_x,rho_y,tau,t,indicator,pairing_sigma,pairing_background";

/// Unweighted least squares `y = a x + b`; returns `(a, b, rms residual)`.
fn linear_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let a = sxy / sxx;
    let b = my - a * mx;
    let rss: f64 = points.iter().map(|p| (p.1 - a * p.0 - b).powi(2)).sum();
    (a, b, (rss / n).sqrt())
}

/// `h = t + slope / p`.
pub fn estimate_support(sweep: &SweepResult) -> Result<SupportEstimate> {
    if sweep.usable < MIN_USABLE {
        return Err(Error::InsufficientData {
            usable: sweep.usable,
            required: MIN_USABLE,
        });
    }
    Ok(SupportEstimate {
        rho: sweep.rho,
        h_hat: sweep.t + sweep.slope / sweep.p,
        slope_fit_residual: sweep.fit_residual,
    })
}

/// Indicator on a given mesh and conductivity.
#[allow(clippy::too_many_arguments)]
pub fn indicator(
    mesh: &Mesh,
    sigma: &ConductivityField,
    profile: &WolffProfile,
    rho: Point,
    tau: f64,
    t: f64,
    p: f64,
    options: &SolverOptions,
) -> Result<IndicatorSample> {
    check_resolution(mesh, tau)?;
    if (profile.p() - p).abs() > 0.0 {
        return Err(Error::InvalidInput(format!(
            "profile was built for p = {}, not {p}",
            profile.p()
        )));
    }
    let solver = ForwardSolver::new(mesh)?;
    let background = ConductivityField::background(mesh);
    let frame = DirectionFrame::new(rho)?;
    sample_on(mesh, &solver, sigma, &background, profile, frame, tau, t, options)
}

fn check_resolution(mesh: &Mesh, tau: f64) -> Result<()> {
    let value = tau * mesh.h_max();
    if value > MAX_TAU_H * (1.0 + 1e-12) {
        return Err(Error::Resolution {
            what: "tau * h_max",
            value,
            limit: MAX_TAU_H,
        });
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn sample_on(
    mesh: &Mesh,
    solver: &ForwardSolver,
    sigma: &ConductivityField,
    background: &ConductivityField,
    profile: &WolffProfile,
    frame: DirectionFrame,
    tau: f64,
    t: f64,
    options: &SolverOptions,
) -> Result<IndicatorSample> {
    let p = profile.p();
    let params = TestFunctionParams::new(frame, tau, t, profile)?;
    let u0 = mesh.interpolate(|x| params.value(x))?;
    let trace: Vec<f64> = mesh.boundary_nodes().iter().map(|&i| u0[i]).collect();
    let (_, bg) = solver.dn_pairing(mesh, background, &trace, p, options, Some(&u0))?;
    let sg = if sigma.values() == background.values() {
        bg
    } else {
        solver.dn_pairing(mesh, sigma, &trace, p, options, Some(&u0))?.1
    };
    Ok(IndicatorSample::from_pairings(frame.rho, tau, t, p, &sg, &bg))
}

/// Everything a sweep needs apart from the direction and offset.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub domain: Shape,
    pub inclusion: Shape,
    pub contrast: f64,
    pub p: f64,
    pub taus: Vec<f64>,
    pub max_vertices: usize,
    /// Target `tau * h_max` for the generated meshes.
    pub mesh_ratio: f64,
    pub solver: SolverOptions,
    pub noise_factor: f64,
}

impl Problem {
    pub fn new(domain: Shape, inclusion: Shape, contrast: f64, p: f64) -> Self {
        Problem {
            domain,
            inclusion,
            contrast,
            p,
            taus: default_taus(),
            max_vertices: crate::mesh::DEFAULT_MAX_VERTICES,
            mesh_ratio: MAX_TAU_H,
            solver: SolverOptions::default(),
            noise_factor: DEFAULT_NOISE_FACTOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_exponent(self.p)?;
        if self.domain.is_empty() {
            return Err(Error::InvalidInput("domain must not be empty".into()));
        }
        if self.taus.is_empty() || self.taus.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::InvalidInput("taus must be positive".into()));
        }
        if self.taus.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("taus must be strictly increasing".into()));
        }
        if !(self.mesh_ratio > 0.0 && self.mesh_ratio <= MAX_TAU_H) {
            return Err(Error::InvalidInput(format!(
                "mesh_ratio must lie in (0, {MAX_TAU_H}], got {}",
                self.mesh_ratio
            )));
        }
        if !(self.noise_factor >= 0.0 && self.noise_factor.is_finite()) {
            return Err(Error::InvalidInput("noise_factor must be non-negative".into()));
        }
        if !self.contrast.is_finite() || 1.0 + self.contrast <= crate::mesh::MIN_CONDUCTIVITY {
            return Err(Error::Positivity(format!(
                "contrast {} makes the inclusion conductivity non-positive",
                self.contrast
            )));
        }
        Ok(())
    }
}

/// Mesh, solver and conductivities for one `tau`.
pub struct Level {
    pub tau: f64,
    pub mesh: Mesh,
    pub sigma: ConductivityField,
    pub background: ConductivityField,
    solver: ForwardSolver,
}

impl Level {
    /// Meshes `problem.domain` finely enough that `tau * h_max <= mesh_ratio`.
    pub fn build(problem: &Problem, tau: f64) -> Result<Level> {
        let mut target = problem.mesh_ratio / tau;
        let mesh = loop {
            let mesh = generate_mesh(&problem.domain, target, problem.max_vertices)?;
            if tau * mesh.h_max() <= problem.mesh_ratio * (1.0 + 1e-12) {
                break mesh;
            }
            target *= 0.999 * problem.mesh_ratio / (tau * mesh.h_max());
        };
        let sigma = assign_conductivity(&mesh, &problem.inclusion, problem.contrast)?;
        let background = ConductivityField::background(&mesh);
        let solver = ForwardSolver::new(&mesh)?;
        Ok(Level {
            tau,
            mesh,
            sigma,
            background,
            solver,
        })
    }
}

/// Precomputed levels for repeated sweeps of one problem.
pub struct Sweeper {
    problem: Problem,
    profile: WolffProfile,
    levels: Vec<Level>,
}

impl Sweeper {
    pub fn new(problem: Problem) -> Result<Self> {
        problem.validate()?;
        let profile = default_profile(problem.p)?;
        let levels = problem
            .taus
            .par_iter()
            .map(|&tau| Level::build(&problem, tau))
            .collect::<Result<Vec<_>>>()?;
        for level in &levels {
            log::info!(
                "tau {}: {} vertices, h_max {:.4}",
                level.tau,
                level.mesh.num_vertices(),
                level.mesh.h_max()
            );
        }
        Ok(Sweeper {
            problem,
            profile,
            levels,
        })
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn profile(&self) -> &WolffProfile {
        &self.profile
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn sample(&self, level: usize, rho: Point, t: f64) -> Result<IndicatorSample> {
        let l = &self.levels[level];
        let frame = DirectionFrame::new(rho)?;
        sample_on(
            &l.mesh,
            &l.solver,
            &l.sigma,
            &l.background,
            &self.profile,
            frame,
            l.tau,
            t,
            &self.problem.solver,
        )
    }

    fn assemble(&self, rho: Point, t: f64, samples: Vec<IndicatorSample>) -> Result<SweepResult> {
        SweepResult::from_samples(rho, t, self.problem.p, samples, self.problem.noise_factor)
    }

    pub fn sweep(&self, rho: Point, t: f64) -> Result<SweepResult> {
        let rho = DirectionFrame::new(rho)?.rho;
        let samples = (0..self.levels.len())
            .into_par_iter()
            .map(|k| self.sample(k, rho, t))
            .collect::<Result<Vec<_>>>()?;
        self.assemble(rho, t, samples)
    }

    /// Sweeps along `directions` with `t = h_Omega(rho)` and intersects the
    /// resulting half-planes.
    pub fn reconstruct(&self, directions: &[Point]) -> Result<Reconstruction> {
        let frames = directions
            .iter()
            .map(|&d| DirectionFrame::new(d))
            .collect::<Result<Vec<_>>>()?;
        let nl = self.levels.len();
        let tasks: Vec<(usize, usize)> = (0..frames.len()).flat_map(|d| (0..nl).map(move |k| (d, k))).collect();
        let results: Vec<Result<IndicatorSample>> = tasks
            .par_iter()
            .map(|&(d, k)| {
                let rho = frames[d].rho;
                self.sample(k, rho, self.problem.domain.support(rho))
            })
            .collect();
        let mut results = results.into_iter();
        let mut directions_out = Vec::with_capacity(frames.len());
        let mut sweeps = Vec::with_capacity(frames.len());
        for frame in &frames {
            let rho = frame.rho;
            let t = self.problem.domain.support(rho);
            let samples = results.by_ref().take(nl).collect::<Result<Vec<_>>>()?;
            let sweep = self.assemble(rho, t, samples)?;
            let outcome = match estimate_support(&sweep) {
                Ok(est) => DirectionOutcome {
                    rho,
                    t,
                    estimate: Some(est),
                    failure: None,
                    sign: sweep.sign,
                },
                Err(e) => {
                    log::warn!("direction ({:.4}, {:.4}): {e}", rho[0], rho[1]);
                    DirectionOutcome {
                        rho,
                        t,
                        estimate: None,
                        failure: Some(e.to_string()),
                        sign: sweep.sign,
                    }
                }
            };
            directions_out.push(outcome);
            sweeps.push(sweep);
        }
        let estimates: Vec<SupportEstimate> = directions_out.iter().filter_map(|d| d.estimate).collect();
        if estimates.is_empty() && sweeps.iter().all(|s| s.usable == 0) {
            return Ok(Reconstruction {
                detected: false,
                directions: directions_out,
                hull: None,
                sweeps,
            });
        }
        if estimates.len() < 3 {
            return Err(Error::Reconstruction {
                succeeded: estimates.len(),
            });
        }
        let hull = halfspace_intersection(&estimates)?;
        Ok(Reconstruction {
            detected: true,
            directions: directions_out,
            hull: Some(hull),
            sweeps,
        })
    }
}

/// `n` unit vectors at angles `2 pi k / n`.
pub fn uniform_directions(n: usize) -> Vec<Point> {
    (0..n)
        .map(|k| DirectionFrame::from_angle(std::f64::consts::TAU * k as f64 / n as f64).rho)
        .collect()
}

/// Sweep of one direction at offset `t` over `problem.taus`.
pub fn sweep(problem: &Problem, rho: Point, t: f64) -> Result<SweepResult> {
    Sweeper::new(problem.clone())?.sweep(rho, t)
}

/// Full reconstruction over `directions` uniformly spaced directions.
pub fn reconstruct_hull(problem: &Problem, directions: usize) -> Result<Reconstruction> {
    if directions < 8 {
        return Err(Error::InvalidInput(format!("need at least 8 directions, got {directions}")));
    }
    Sweeper::new(problem.clone())?.reconstruct(&uniform_directions(directions))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionOutcome {
    pub rho: Point,
    pub t: f64,
    pub estimate: Option<SupportEstimate>,
    pub failure: Option<String>,
    pub sign: Sign,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reconstruction {
    /// False when every sweep sits below the noise floor.
    pub detected: bool,
    pub directions: Vec<DirectionOutcome>,
    pub hull: Option<HullResult>,
    #[serde(skip)]
    pub sweeps: Vec<SweepResult>,
}

impl Reconstruction {
    pub fn summary_line(&self) -> String {
        match &self.hull {
            Some(h) if self.detected => format!(
                "inclusion detected: hull with {} vertices from {} of {} directions",
                h.vertices.len(),
                h.directions_used.len(),
                self.directions.len()
            ),
            _ => "no inclusion detected".to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(t: f64, f: impl Fn(f64) -> f64) -> Vec<IndicatorSample> {
        default_taus()
            .into_iter()
            .map(|tau| IndicatorSample {
                rho: [1.0, 0.0],
                tau,
                t,
                value: f(tau),
                pairing_sigma: 0.0,
                pairing_background: 0.0,
                error: 0.0,
            })
            .collect()
    }

    #[test]
    fn exact_exponential_recovers_support() {
        let p = 3.0;
        let s = synthetic(0.0, |tau| (p * tau * 0.5).exp());
        let sweep = SweepResult::from_samples([1.0, 0.0], 0.0, p, s, 10.0).unwrap();
        let est = estimate_support(&sweep).unwrap();
        assert!((est.h_hat - 0.5).abs() < 1e-12);
        assert!(est.slope_fit_residual < 1e-10);
        assert_eq!(sweep.sign, Sign::Positive);
    }

    #[test]
    fn polynomial_prefactor_bias_shrinks() {
        let p = 2.5;
        let f = |tau: f64| tau * tau * (p * tau * 0.3).exp();
        let mut errors = Vec::new();
        for scale in [1.0, 4.0, 16.0] {
            let samples: Vec<IndicatorSample> = default_taus()
                .into_iter()
                .map(|tau| IndicatorSample {
                    rho: [0.0, 1.0],
                    tau: tau * scale,
                    t: 0.0,
                    value: -f(tau * scale),
                    pairing_sigma: 0.0,
                    pairing_background: 0.0,
                    error: 0.0,
                })
                .collect();
            let sweep = SweepResult::from_samples([0.0, 1.0], 0.0, p, samples, 10.0).unwrap();
            assert_eq!(sweep.sign, Sign::Negative);
            let est = estimate_support(&sweep).unwrap();
            errors.push((est.h_hat - 0.3).abs());
            // exact bias of the three-point fit is 2 ln(tau) slope / p
            let tau_mid = 12.0 * scale;
            assert!((est.h_hat - 0.3) < 2.0 / (p * tau_mid) * 1.2);
        }
        assert!(errors[2] < errors[1] && errors[1] < errors[0]);
    }

    #[test]
    fn noise_floor_excludes_samples() {
        let mut s = synthetic(0.0, |tau| (-tau).exp());
        for x in &mut s {
            x.error = 1e-4;
        }
        let sweep = SweepResult::from_samples([1.0, 0.0], 0.0, 2.0, s, 10.0).unwrap();
        // e^-8 = 3.4e-4 is below 10 * 1e-4
        assert_eq!(sweep.usable, 2);
        assert_eq!(sweep.sign, Sign::Positive);
        assert!(matches!(estimate_support(&sweep), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn mixed_signs_are_indeterminate() {
        let s = synthetic(0.0, |tau| if tau < 9.0 { 1.0 } else { -1.0 });
        let sweep = SweepResult::from_samples([1.0, 0.0], 0.0, 2.0, s, 10.0).unwrap();
        assert_eq!(sweep.sign, Sign::Indeterminate);
    }

    #[test]
    fn unordered_taus_rejected() {
        let mut s = synthetic(0.0, |_| 1.0);
        s.swap(0, 1);
        assert!(SweepResult::from_samples([1.0, 0.0], 0.0, 2.0, s, 10.0).is_err());
    }

    #[test]
    fn empty_inclusion_gives_zero() {
        let omega = Shape::unit_square();
        let mesh = generate_mesh(&omega, 0.05, 10_000).unwrap();
        let sigma = ConductivityField::background(&mesh);
        let profile = default_profile(3.0).unwrap();
        let opts = SolverOptions::default();
        let s = indicator(&mesh, &sigma, &profile, [0.6, 0.8], 2.0, 1.4, 3.0, &opts).unwrap();
        assert_eq!(s.value, 0.0);
        assert!(s.pairing_sigma > 0.0);
        assert!(matches!(
            indicator(&mesh, &sigma, &profile, [1.0, 0.0], 10.0, 1.0, 3.0, &opts),
            Err(Error::Resolution { .. })
        ));
    }

    #[test]
    fn indicator_sign_follows_contrast() {
        let omega = Shape::unit_square();
        let mesh = generate_mesh(&omega, 0.05, 10_000).unwrap();
        let d = Shape::disk([0.6, 0.5], 0.2).unwrap();
        let profile = default_profile(2.0).unwrap();
        let opts = SolverOptions::default();
        for (contrast, positive) in [(1.0, true), (-0.5, false)] {
            let sigma = assign_conductivity(&mesh, &d, contrast).unwrap();
            let s = indicator(&mesh, &sigma, &profile, [1.0, 0.0], 2.0, 1.0, 2.0, &opts).unwrap();
            assert_eq!(s.value > 0.0, positive);
            assert!(s.value.abs() > 100.0 * s.error);
        }
    }
}
