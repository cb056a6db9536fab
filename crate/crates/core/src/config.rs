//! JSON run configuration shared by all subcommands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Shape;
use crate::indicator::{Problem, MAX_TAU_H, MIN_USABLE};
use crate::mesh::MIN_CONDUCTIVITY;
use crate::monotonicity::SuiteConfig;
use crate::solver::SolverOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub p: f64,
    pub domain: Shape,
    pub inclusion: Shape,
    pub contrast: f64,
    pub directions: usize,
    pub taus: Vec<f64>,
    pub max_vertices: usize,
    pub tol: f64,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Worker threads; 0 means all available cores.
    pub workers: usize,
    pub mesh_ratio: f64,
    pub noise_factor: f64,
    pub a0: f64,
    pub b0: f64,
    pub ode_step: f64,
    pub span: Option<f64>,
    /// Direction of the single-direction commands, in radians.
    pub direction_angle: f64,
    /// Offset of the single-direction commands; defaults to `h_Omega(rho)`.
    pub t: Option<f64>,
    pub tau: f64,
    pub mesh_h: f64,
    pub cases: usize,
    pub exponents: Vec<f64>,
    pub contrast_min: f64,
    pub contrast_max: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            p: 3.0,
            domain: Shape::disk([0.15, 0.1], 0.5).expect("valid disk"),
            inclusion: Shape::disk([0.2, 0.1], 0.3).expect("valid disk"),
            contrast: 1.0,
            directions: 16,
            taus: crate::indicator::default_taus(),
            max_vertices: crate::mesh::DEFAULT_MAX_VERTICES,
            tol: 1e-9,
            out_dir: PathBuf::from("out"),
            seed: 0,
            workers: 0,
            mesh_ratio: MAX_TAU_H,
            noise_factor: crate::indicator::DEFAULT_NOISE_FACTOR,
            a0: 1.0,
            b0: 0.0,
            ode_step: crate::wolff::DEFAULT_STEP,
            span: None,
            direction_angle: 0.0,
            t: None,
            tau: 4.0,
            mesh_h: 0.05,
            cases: 50,
            exponents: vec![1.3, 1.5, 2.0, 3.0, 5.0],
            contrast_min: -0.9,
            contrast_max: 4.0,
        }
    }
}

fn field(name: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("field `{name}`: {msg}"))
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(field(name, format!("must be positive and finite, got {v}")))
    }
}

fn exponent(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 1.0 {
        Ok(())
    } else {
        Err(field(name, format!("exponent must lie in (1, inf), got {v}")))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<RunConfig> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("malformed config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks every field; the message names the offending one.
    pub fn validate(&self) -> Result<()> {
        exponent("p", self.p)?;
        if self.domain.is_empty() {
            return Err(field("domain", "must not be empty"));
        }
        let meshable = match &self.domain {
            Shape::Disk { .. } => true,
            Shape::Polygon(poly) => poly.as_rectangle().is_some(),
            Shape::Union(_) => false,
        };
        if !meshable {
            return Err(field("domain", "must be a disk or an axis-aligned rectangle"));
        }
        if !self.inclusion.is_empty() {
            // a set lies in a convex domain iff its support function stays below the domain's
            let inside = (0..1024).all(|k| {
                let theta = std::f64::consts::TAU * k as f64 / 1024.0;
                let rho = [theta.cos(), theta.sin()];
                self.inclusion.support(rho) < self.domain.support(rho)
            });
            if !inside {
                return Err(field("inclusion", "must lie strictly inside the domain"));
            }
        }
        if !self.contrast.is_finite() || 1.0 + self.contrast <= MIN_CONDUCTIVITY {
            return Err(Error::Positivity(format!(
                "field `contrast`: inclusion conductivity 1 + {} must exceed {MIN_CONDUCTIVITY}",
                self.contrast
            )));
        }
        if self.directions < 8 {
            return Err(field("directions", format!("need at least 8, got {}", self.directions)));
        }
        if self.taus.len() < MIN_USABLE {
            return Err(field("taus", format!("need at least {MIN_USABLE} values")));
        }
        for &t in &self.taus {
            positive("taus", t)?;
        }
        if self.taus.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(field("taus", "must be strictly increasing"));
        }
        if self.max_vertices < 4 {
            return Err(field("max_vertices", format!("must be at least 4, got {}", self.max_vertices)));
        }
        positive("tol", self.tol)?;
        if self.out_dir.as_os_str().is_empty() {
            return Err(field("out_dir", "must not be empty"));
        }
        if !(self.mesh_ratio > 0.0 && self.mesh_ratio <= MAX_TAU_H) {
            return Err(field("mesh_ratio", format!("must lie in (0, {MAX_TAU_H}], got {}", self.mesh_ratio)));
        }
        if !(self.noise_factor.is_finite() && self.noise_factor >= 0.0) {
            return Err(field("noise_factor", format!("must be non-negative, got {}", self.noise_factor)));
        }
        if !(self.a0.is_finite() && self.b0.is_finite()) || (self.a0 == 0.0 && self.b0 == 0.0) {
            return Err(field("a0", "initial data (a0, b0) must be finite and not both zero"));
        }
        if !(self.ode_step > 0.0 && self.ode_step <= 0.1) {
            return Err(field("ode_step", format!("must lie in (0, 0.1], got {}", self.ode_step)));
        }
        if let Some(span) = self.span {
            positive("span", span)?;
        }
        if !self.direction_angle.is_finite() {
            return Err(field("direction_angle", "must be finite"));
        }
        if let Some(t) = self.t {
            if !t.is_finite() {
                return Err(field("t", "must be finite"));
            }
        }
        positive("tau", self.tau)?;
        positive("mesh_h", self.mesh_h)?;
        for &q in &self.exponents {
            exponent("exponents", q)?;
        }
        if !(self.contrast_min < self.contrast_max && self.contrast_max.is_finite()) {
            return Err(field("contrast_max", "must exceed contrast_min"));
        }
        if !(1.0 + self.contrast_min > MIN_CONDUCTIVITY) {
            return Err(Error::Positivity(format!(
                "field `contrast_min`: 1 + {} must exceed {MIN_CONDUCTIVITY}",
                self.contrast_min
            )));
        }
        Ok(())
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions::with_tol(self.tol)
    }

    pub fn problem(&self) -> Problem {
        Problem {
            domain: self.domain.clone(),
            inclusion: self.inclusion.clone(),
            contrast: self.contrast,
            p: self.p,
            taus: self.taus.clone(),
            max_vertices: self.max_vertices,
            mesh_ratio: self.mesh_ratio,
            solver: self.solver_options(),
            noise_factor: self.noise_factor,
        }
    }

    pub fn suite(&self) -> SuiteConfig {
        SuiteConfig {
            exponents: self.exponents.clone(),
            cases: self.cases,
            seed: self.seed,
            mesh_h: self.mesh_h,
            contrast_range: (self.contrast_min, self.contrast_max),
            solver: self.solver_options(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_round_trips() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let back = RunConfig::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let c = RunConfig::from_json(r#"{"p": 2.5, "inclusion": {"kind": "empty"}}"#).unwrap();
        assert_eq!(c.p, 2.5);
        assert!(c.inclusion.is_empty());
        assert_eq!(c.directions, 16);
    }

    #[test]
    fn each_bad_field_is_named() {
        let cases = [
            (r#"{"p": 1.0}"#, "`p`"),
            (r#"{"contrast": -2}"#, "`contrast`"),
            (r#"{"directions": 4}"#, "`directions`"),
            (r#"{"taus": [4, 3, 5, 6]}"#, "`taus`"),
            (r#"{"taus": [4, 5]}"#, "`taus`"),
            (r#"{"tol": 0}"#, "`tol`"),
            (r#"{"max_vertices": 1}"#, "`max_vertices`"),
            (r#"{"mesh_ratio": 0.5}"#, "`mesh_ratio`"),
            (r#"{"noise_factor": -1}"#, "`noise_factor`"),
            (r#"{"ode_step": 1}"#, "`ode_step`"),
            (r#"{"span": -1}"#, "`span`"),
            (r#"{"tau": 0}"#, "`tau`"),
            (r#"{"mesh_h": -0.1}"#, "`mesh_h`"),
            (r#"{"exponents": [2, 0.5]}"#, "`exponents`"),
            (r#"{"contrast_min": 5}"#, "`contrast_max`"),
            (r#"{"contrast_min": -1, "contrast_max": 2}"#, "`contrast_min`"),
            (r#"{"a0": 0, "b0": 0}"#, "`a0`"),
            (r#"{"out_dir": ""}"#, "`out_dir`"),
            (r#"{"inclusion": {"kind": "disk", "center": [0.9, 0.1], "radius": 0.3}}"#, "`inclusion`"),
            (r#"{"domain": {"kind": "polygon", "vertices": [[0,0],[1,0],[0,1]]}}"#, "`domain`"),
        ];
        for (json, name) in cases {
            let err = RunConfig::from_json(json).unwrap_err();
            assert!(err.is_config(), "{json}: {err}");
            assert!(err.to_string().contains(name), "{json}: {err}");
        }
    }

    #[test]
    fn malformed_documents_rejected() {
        for bad in ["{", r#"{"unknown_key": 1}"#, r#"{"p": "three"}"#, r#"{"inclusion": {"kind": "blob"}}"#] {
            assert!(RunConfig::from_json(bad).unwrap_err().is_config());
        }
    }
}
