//! Two-sided monotonicity bound for the DN pairing under a change of conductivity.
//!
//! For `u0` minimizing the `sigma0` energy,
//! `(p-1) int sigma0 / sigma1^(1/(p-1)) (sigma1^(1/(p-1)) - sigma0^(1/(p-1))) |grad u0|^p`
//! `<= ((Lambda_sigma1 - Lambda_sigma0) f, f) <= int (sigma1 - sigma0) |grad u0|^p`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Point, Shape};
use crate::mesh::{assign_conductivity, generate_mesh, ConductivityField, Mesh};
use crate::solver::{ForwardSolver, SolverOptions};
use crate::wolff::{default_profile, DirectionFrame, TestFunctionParams, WolffProfile};

/// Multiple of the propagated energy error allowed as slack.
pub const TOLERANCE_FACTOR: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub lower: f64,
    pub middle: f64,
    pub upper: f64,
    pub p: f64,
    pub verdict: Verdict,
    /// `middle - lower`
    pub slack_lower: f64,
    /// `upper - middle`
    pub slack_upper: f64,
    pub tol: f64,
}

impl MonotonicityReport {
    /// Chain ordering within `tol`.
    pub fn ordered_within(&self, tol: f64) -> bool {
        self.slack_lower >= -tol && self.slack_upper >= -tol
    }
}

/// Solves both problems and assembles the chain.
pub fn check_monotonicity(
    mesh: &Mesh,
    sigma0: &ConductivityField,
    sigma1: &ConductivityField,
    boundary_values: &[f64],
    p: f64,
    options: &SolverOptions,
) -> Result<MonotonicityReport> {
    if sigma0.values().len() != mesh.num_triangles() || sigma1.values().len() != mesh.num_triangles() {
        return Err(Error::InvalidInput("conductivities do not match the mesh".into()));
    }
    let solver = ForwardSolver::new(mesh)?;
    let (u0, r0) = solver.solve(mesh, sigma0, boundary_values, p, options, None)?;
    let r1 = if sigma0.values() == sigma1.values() {
        r0
    } else {
        solver.solve(mesh, sigma1, boundary_values, p, options, Some(u0.values()))?.1
    };
    let q = 1.0 / (p - 1.0);
    let mut lower = 0.0;
    let mut upper = 0.0;
    for (t, (&s0, &s1)) in sigma0.values().iter().zip(sigma1.values()).enumerate() {
        if s0 == s1 {
            continue;
        }
        let g = mesh.triangle_gradient(t, u0.values());
        let w = mesh.area(t) * (g[0] * g[0] + g[1] * g[1]).powf(0.5 * p);
        lower += w * (p - 1.0) * s0 / s1.powf(q) * (s1.powf(q) - s0.powf(q));
        upper += w * (s1 - s0);
    }
    let middle = r1.energy - r0.energy;
    let tol = TOLERANCE_FACTOR * (r0.energy_error + r1.energy_error);
    let slack_lower = middle - lower;
    let slack_upper = upper - middle;
    let verdict = if slack_lower >= -tol && slack_upper >= -tol {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(MonotonicityReport {
        lower,
        middle,
        upper,
        p,
        verdict,
        slack_lower,
        slack_upper,
        tol,
    })
}

/// Boundary data of a randomized case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BoundaryData {
    Affine { slope: Point, offset: f64 },
    Wolff { angle: f64, tau: f64, t: f64 },
}

impl BoundaryData {
    fn trace(&self, mesh: &Mesh, profile: &WolffProfile) -> Result<Vec<f64>> {
        let nodes = mesh.boundary_nodes().iter().map(|&i| mesh.vertices()[i]);
        match *self {
            BoundaryData::Affine { slope, offset } => Ok(nodes.map(|x| slope[0] * x[0] + slope[1] * x[1] + offset).collect()),
            BoundaryData::Wolff { angle, tau, t } => {
                let params = TestFunctionParams::new(DirectionFrame::from_angle(angle), tau, t, profile)?;
                nodes.map(|x| params.value(x)).collect()
            }
        }
    }
}

/// One line of the suite output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseRecord {
    pub seed: u64,
    pub case: usize,
    pub inclusion: Option<(Point, f64)>,
    pub contrast: f64,
    pub boundary: BoundaryData,
    #[serde(flatten)]
    pub report: MonotonicityReport,
}

/// Settings of the randomized suite on the unit square.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub exponents: Vec<f64>,
    pub cases: usize,
    pub seed: u64,
    pub mesh_h: f64,
    pub contrast_range: (f64, f64),
    pub solver: SolverOptions,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            exponents: vec![1.3, 1.5, 2.0, 3.0, 5.0],
            cases: 50,
            seed: 0,
            mesh_h: 0.05,
            contrast_range: (-0.9, 4.0),
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
struct CaseSpec {
    center: Point,
    radius: f64,
    contrast: f64,
    boundary: BoundaryData,
}

fn draw_case(rng: &mut ChaCha8Rng, contrast_range: (f64, f64)) -> CaseSpec {
    let radius = rng.random_range(0.05..0.25);
    let center = [
        rng.random_range(radius + 0.02..1.0 - radius - 0.02),
        rng.random_range(radius + 0.02..1.0 - radius - 0.02),
    ];
    let contrast = rng.random_range(contrast_range.0..contrast_range.1);
    let boundary = if rng.random_bool(0.5) {
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let tau = rng.random_range(1.0..4.0);
        let rho = DirectionFrame::from_angle(angle).rho;
        // keep u0 <= 1 on the unit square
        let t = rho[0].max(0.0) + rho[1].max(0.0);
        BoundaryData::Wolff { angle, tau, t }
    } else {
        BoundaryData::Affine {
            slope: [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
            offset: rng.random_range(-1.0..1.0),
        }
    };
    CaseSpec {
        center,
        radius,
        contrast,
        boundary,
    }
}

/// Smoke case with `sigma1 = sigma0` first, then `cases` random cases per exponent.
/// Records are ordered by exponent, then case index.
pub fn run_suite(config: &SuiteConfig) -> Result<Vec<CaseRecord>> {
    if config.cases == 0 && config.exponents.is_empty() {
        return Ok(Vec::new());
    }
    let (lo, hi) = config.contrast_range;
    if !(lo < hi && 1.0 + lo > crate::mesh::MIN_CONDUCTIVITY && hi.is_finite()) {
        return Err(Error::Positivity(format!(
            "contrast range [{lo}, {hi}] must be increasing with 1 + lower bound positive"
        )));
    }
    let mesh = generate_mesh(&Shape::unit_square(), config.mesh_h, crate::mesh::DEFAULT_MAX_VERTICES)?;
    let background = ConductivityField::background(&mesh);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut jobs = Vec::new();
    for &p in &config.exponents {
        for case in 0..config.cases {
            jobs.push((p, case, draw_case(&mut rng, config.contrast_range)));
        }
    }
    let profiles = config
        .exponents
        .iter()
        .map(|&p| default_profile(p))
        .collect::<Result<Vec<_>>>()?;
    let profile_for = |p: f64| &profiles[config.exponents.iter().position(|&q| q == p).expect("known exponent")];
    let mut records = Vec::with_capacity(jobs.len() + 1);
    if let Some(&p) = config.exponents.first() {
        let boundary = BoundaryData::Affine {
            slope: [1.0, 0.5],
            offset: 0.0,
        };
        let f = boundary.trace(&mesh, profile_for(p))?;
        let report = check_monotonicity(&mesh, &background, &background, &f, p, &config.solver)?;
        records.push(CaseRecord {
            seed: config.seed,
            case: 0,
            inclusion: None,
            contrast: 0.0,
            boundary,
            report,
        });
    }
    let results: Vec<Result<CaseRecord>> = jobs
        .par_iter()
        .map(|(p, case, spec)| {
            let disk = Shape::disk(spec.center, spec.radius)?;
            let sigma1 = assign_conductivity(&mesh, &disk, spec.contrast)?;
            let f = spec.boundary.trace(&mesh, profile_for(*p))?;
            let report = check_monotonicity(&mesh, &background, &sigma1, &f, *p, &config.solver)?;
            Ok(CaseRecord {
                seed: config.seed,
                case: case + 1,
                inclusion: Some((spec.center, spec.radius)),
                contrast: spec.contrast,
                boundary: spec.boundary,
                report,
            })
        })
        .collect();
    for r in results {
        records.push(r?);
    }
    Ok(records)
}

/// One JSON document per line.
pub fn write_json_lines<W: Write>(records: &[CaseRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
