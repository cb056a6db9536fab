//! P1 finite-element solver for the weighted p-Laplace Dirichlet problem.
//!
//! The solution minimizes the regularized energy
//! `sum_T area(T) sigma_T (|grad v|_T^2 + eps^2)^(p/2)` over the interior
//! nodal values, by damped Newton iteration under an eps-continuation.

use std::io::Write;

use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMat};
use faer::linalg::solvers::Solve;
use faer::{MatMut, Side};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh::{ConductivityField, Mesh};
use crate::wolff::validate_exponent;

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
const NONE: usize = usize::MAX;
/// Local index pairs `(k, l)` with `k <= l` of a triangle.
const PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

/// Nodal values of a P1 function.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteField {
    values: Vec<f64>,
}

impl DiscreteField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("nodal value {i} is not finite")));
        }
        Ok(DiscreteField { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Trace on `mesh.boundary_nodes()`, in that order.
    pub fn boundary_trace(&self, mesh: &Mesh) -> Vec<f64> {
        mesh.boundary_nodes().iter().map(|&i| self.values[i]).collect()
    }

    pub fn min_max(&self) -> (f64, f64) {
        min_max(&self.values)
    }

    /// `x,y,value` per vertex.
    pub fn write_csv<W: Write>(&self, mesh: &Mesh, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,y,value")?;
        for (v, u) in mesh.vertices().iter().zip(&self.values) {
            writeln!(out, "{},{},{}", v[0], v[1], u)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveReport {
    /// Unregularized energy of the returned field.
    pub energy: f64,
    /// Max-norm of the energy gradient over interior nodes.
    pub optimality_residual: f64,
    /// Newton iterations over all continuation stages.
    pub iterations: usize,
    pub epsilon_final: f64,
    /// Estimated distance of `energy` from the exact discrete minimum.
    pub energy_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Required max-norm of the interior energy gradient.
    pub tol: f64,
    /// Newton iterations allowed per continuation stage.
    pub max_iterations: usize,
    pub eps_start: f64,
    pub eps_final: f64,
    /// Residual target of the intermediate stages, as a multiple of `tol`.
    pub stage_factor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-9,
            max_iterations: 100,
            eps_start: 1e-1,
            eps_final: 1e-8,
            stage_factor: 1e3,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolverOptions {
            tol,
            ..SolverOptions::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::InvalidInput(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("max_iterations must be positive".into()));
        }
        if !(self.eps_final > 0.0 && self.eps_start >= self.eps_final && self.eps_start.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "eps schedule {} -> {} is invalid",
                self.eps_start, self.eps_final
            )));
        }
        Ok(())
    }

    /// Regularization levels for exponent `p`; the quadratic case needs none.
    pub fn schedule(&self, p: f64) -> Vec<f64> {
        if p == 2.0 {
            return vec![0.0];
        }
        let mut out = vec![self.eps_start];
        let mut eps = self.eps_start;
        while eps > self.eps_final * (1.0 + 1e-9) {
            eps = (eps / 10.0).max(self.eps_final);
            out.push(eps);
        }
        out
    }
}

/// `sum_T area(T) sigma_T (|grad v|_T^2 + eps^2)^(p/2)`.
pub fn dirichlet_energy(mesh: &Mesh, sigma: &ConductivityField, v: &[f64], p: f64, eps: f64) -> f64 {
    let half_p = 0.5 * p;
    let eps2 = eps * eps;
    let mut total = 0.0;
    for (t, &s) in sigma.values().iter().enumerate() {
        let g = mesh.triangle_gradient(t, v);
        let q = g[0] * g[0] + g[1] * g[1] + eps2;
        if q > 0.0 {
            total += mesh.area(t) * s * q.powf(half_p);
        }
    }
    total
}

/// Newton solver bound to one mesh: the reduced sparsity pattern and its
/// symbolic Cholesky factorization are computed once and reused.
pub struct ForwardSolver {
    num_vertices: usize,
    num_triangles: usize,
    /// Reduced index of each vertex, `NONE` on the boundary.
    reduced: Vec<usize>,
    interior: Vec<usize>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    /// Position in the lower-triangular value array of each pair in `PAIRS`.
    positions: Vec<[usize; 6]>,
    symbolic: Option<SymbolicLlt<usize>>,
}

struct Assembly {
    energy: f64,
    gradient: Vec<f64>,
    hessian: Vec<f64>,
}

impl ForwardSolver {
    pub fn new(mesh: &Mesh) -> Result<Self> {
        let nv = mesh.num_vertices();
        let mut reduced = vec![NONE; nv];
        let mut interior = Vec::new();
        for i in 0..nv {
            if !mesh.is_boundary(i) {
                reduced[i] = interior.len();
                interior.push(i);
            }
        }
        let n = interior.len();
        let mut columns: Vec<Vec<usize>> = (0..n).map(|j| vec![j]).collect();
        for tri in mesh.triangles() {
            let r = tri.map(|i| reduced[i]);
            for &(k, l) in &PAIRS[3..] {
                if r[k] != NONE && r[l] != NONE {
                    let (lo, hi) = (r[k].min(r[l]), r[k].max(r[l]));
                    columns[lo].push(hi);
                }
            }
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for col in &mut columns {
            col.sort_unstable();
            col.dedup();
            row_idx.extend_from_slice(col);
            col_ptr.push(row_idx.len());
        }
        let locate = |row: usize, col: usize| -> usize {
            let slice = &row_idx[col_ptr[col]..col_ptr[col + 1]];
            col_ptr[col] + slice.binary_search(&row).expect("entry is in the pattern")
        };
        let positions = mesh
            .triangles()
            .iter()
            .map(|tri| {
                let r = tri.map(|i| reduced[i]);
                PAIRS.map(|(k, l)| {
                    if r[k] == NONE || r[l] == NONE {
                        NONE
                    } else {
                        locate(r[k].max(r[l]), r[k].min(r[l]))
                    }
                })
            })
            .collect();
        let symbolic = if n == 0 {
            None
        } else {
            let pattern = SymbolicSparseColMat::new_checked(n, n, col_ptr.clone(), None, row_idx.clone());
            Some(
                SymbolicLlt::try_new(pattern.as_ref(), Side::Lower)
                    .map_err(|e| Error::Linear(format!("symbolic factorization: {e:?}")))?,
            )
        };
        Ok(ForwardSolver {
            num_vertices: nv,
            num_triangles: mesh.num_triangles(),
            reduced,
            interior,
            col_ptr,
            row_idx,
            positions,
            symbolic,
        })
    }

    fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if mesh.num_vertices() != self.num_vertices || mesh.num_triangles() != self.num_triangles {
            return Err(Error::InvalidInput("solver was built for a different mesh".into()));
        }
        Ok(())
    }

    pub fn num_unknowns(&self) -> usize {
        self.interior.len()
    }

    /// Field with the given boundary trace and `fill` at interior nodes.
    fn with_boundary(&self, mesh: &Mesh, boundary_values: &[f64], fill: impl Fn(usize) -> f64) -> Result<Vec<f64>> {
        let nodes = mesh.boundary_nodes();
        if boundary_values.len() != nodes.len() {
            return Err(Error::InvalidInput(format!(
                "{} boundary values for {} boundary nodes",
                boundary_values.len(),
                nodes.len()
            )));
        }
        if boundary_values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("boundary values must be finite".into()));
        }
        let mut u: Vec<f64> = (0..mesh.num_vertices()).map(&fill).collect();
        for (&i, &v) in nodes.iter().zip(boundary_values) {
            u[i] = v;
        }
        Ok(u)
    }

    fn assemble(&self, mesh: &Mesh, sigma: &[f64], u: &[f64], p: f64, eps: f64, hessian: bool) -> Assembly {
        let n = self.interior.len();
        let mut gradient = vec![0.0; n];
        let mut values = if hessian { vec![0.0; self.row_idx.len()] } else { Vec::new() };
        let mut energy = 0.0;
        let eps2 = eps * eps;
        let quadratic = p == 2.0;
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let b = mesh.basis(t);
            let g = mesh.triangle_gradient(t, u);
            let q = g[0] * g[0] + g[1] * g[1] + eps2;
            let w = mesh.area(t) * sigma[t];
            let (value, d1, d2) = if quadratic {
                (q, 2.0, 0.0)
            } else if q > 0.0 {
                let v = q.powf(0.5 * p);
                (v, p * v / q, p * (p - 2.0) * v / (q * q))
            } else {
                (0.0, 0.0, 0.0)
            };
            energy += w * value;
            let gb = [0, 1, 2].map(|k| g[0] * b[k][0] + g[1] * b[k][1]);
            for k in 0..3 {
                let r = self.reduced[tri[k]];
                if r != NONE {
                    gradient[r] += w * d1 * gb[k];
                }
            }
            if hessian {
                for (slot, &(k, l)) in PAIRS.iter().enumerate() {
                    let pos = self.positions[t][slot];
                    if pos != NONE {
                        let bb = b[k][0] * b[l][0] + b[k][1] * b[l][1];
                        values[pos] += w * (d1 * bb + d2 * gb[k] * gb[l]);
                    }
                }
            }
        }
        Assembly {
            energy,
            gradient,
            hessian: values,
        }
    }

    fn energy_only(&self, mesh: &Mesh, sigma: &[f64], u: &[f64], p: f64, eps: f64) -> f64 {
        let half_p = 0.5 * p;
        let eps2 = eps * eps;
        let mut total = 0.0;
        for (t, &s) in sigma.iter().enumerate() {
            let g = mesh.triangle_gradient(t, u);
            let q = g[0] * g[0] + g[1] * g[1] + eps2;
            if q > 0.0 {
                total += mesh.area(t) * s * if p == 2.0 { q } else { q.powf(half_p) };
            }
        }
        total
    }

    /// Solves `H x = rhs` in place; `None` if `H` is not numerically SPD.
    fn newton_direction(&self, hessian: &[f64], rhs: &mut [f64]) -> Result<Option<()>> {
        let n = rhs.len();
        let symbolic = self.symbolic.as_ref().expect("called with unknowns");
        let pattern =
            faer::sparse::SymbolicSparseColMatRef::new_checked(n, n, &self.col_ptr, None, &self.row_idx);
        let mat = SparseColMatRef::new(pattern, hessian);
        match Llt::try_new_with_symbolic(symbolic.clone(), mat, Side::Lower) {
            Ok(llt) => {
                llt.solve_in_place(MatMut::from_column_major_slice_mut(rhs, n, 1));
                if rhs.iter().all(|v| v.is_finite()) {
                    Ok(Some(()))
                } else {
                    Ok(None)
                }
            }
            Err(_) => Ok(None),
        }
    }

    /// Minimizes the energy with the given trace, starting from `initial`
    /// (or from the `p = 2` extension of the trace).
    pub fn solve(
        &self,
        mesh: &Mesh,
        sigma: &ConductivityField,
        boundary_values: &[f64],
        p: f64,
        options: &SolverOptions,
        initial: Option<&[f64]>,
    ) -> Result<(DiscreteField, SolveReport)> {
        validate_exponent(p)?;
        options.validate()?;
        self.check_mesh(mesh)?;
        if sigma.values().len() != mesh.num_triangles() {
            return Err(Error::InvalidInput(format!(
                "conductivity has {} values for {} triangles",
                sigma.values().len(),
                mesh.num_triangles()
            )));
        }
        let mut u = match initial {
            Some(init) => {
                if init.len() != mesh.num_vertices() || init.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidInput("initial guess has the wrong size or non-finite values".into()));
                }
                self.with_boundary(mesh, boundary_values, |i| init[i])?
            }
            None => {
                let mean = boundary_values.iter().sum::<f64>() / boundary_values.len().max(1) as f64;
                self.with_boundary(mesh, boundary_values, |_| mean)?
            }
        };
        let s = sigma.values();
        let mut iterations = 0;
        if self.interior.is_empty() {
            let energy = self.energy_only(mesh, s, &u, p, 0.0);
            let report = SolveReport {
                energy,
                optimality_residual: 0.0,
                iterations,
                epsilon_final: 0.0,
                energy_error: 0.0,
            };
            return Ok((DiscreteField { values: u }, report));
        }
        if initial.is_none() && p != 2.0 {
            let (_, it) = self.minimize(mesh, s, &mut u, 2.0, 0.0, options.tol, options.max_iterations, false)?;
            iterations += it;
        }
        let schedule = options.schedule(p);
        let last = schedule.len() - 1;
        let mut outcome = (0.0, 0.0);
        for (stage, &eps) in schedule.iter().enumerate() {
            let final_stage = stage == last;
            let target = if final_stage { options.tol } else { options.tol * options.stage_factor };
            let (res, it) = self.minimize(mesh, s, &mut u, p, eps, target, options.max_iterations, final_stage)?;
            iterations += it;
            outcome = (res, eps);
        }
        let (residual, eps) = outcome;
        let decrement = self.newton_decrement(mesh, s, &u, p, eps)?;
        let energy = self.energy_only(mesh, s, &u, p, 0.0);
        let roundoff = f64::EPSILON * energy.abs() * (mesh.num_triangles() as f64).sqrt();
        let report = SolveReport {
            energy,
            optimality_residual: residual,
            iterations,
            epsilon_final: eps,
            energy_error: 0.5 * decrement + roundoff,
        };
        Ok((DiscreteField { values: u }, report))
    }

    /// `g^T H^{-1} g` at `u`.
    fn newton_decrement(&self, mesh: &Mesh, sigma: &[f64], u: &[f64], p: f64, eps: f64) -> Result<f64> {
        let a = self.assemble(mesh, sigma, u, p, eps, true);
        let mut d = a.gradient.clone();
        match self.newton_direction(&a.hessian, &mut d)? {
            Some(()) => Ok(a.gradient.iter().zip(&d).map(|(g, d)| g * d).sum::<f64>().abs()),
            None => Err(Error::Linear("Hessian is not positive definite at the solution".into())),
        }
    }

    /// Damped Newton at fixed `eps`. Returns the final residual and the
    /// iteration count; failing to reach `target` is an error only if `strict`.
    #[allow(clippy::too_many_arguments)]
    fn minimize(
        &self,
        mesh: &Mesh,
        sigma: &[f64],
        u: &mut Vec<f64>,
        p: f64,
        eps: f64,
        target: f64,
        max_iterations: usize,
        strict: bool,
    ) -> Result<(f64, usize)> {
        let mut a = self.assemble(mesh, sigma, u, p, eps, true);
        let mut residual = max_abs(&a.gradient);
        let mut trial = u.clone();
        for iteration in 0..max_iterations {
            if residual <= target {
                return Ok((residual, iteration));
            }
            let mut d: Vec<f64> = a.gradient.iter().map(|g| -g).collect();
            let newton = self.newton_direction(&a.hessian, &mut d)?.is_some();
            let mut slope: f64 = a.gradient.iter().zip(&d).map(|(g, d)| g * d).sum();
            if !newton || !(slope < 0.0) {
                log::debug!("steepest descent fallback at iteration {iteration} (eps {eps:e})");
                for (di, gi) in d.iter_mut().zip(&a.gradient) {
                    *di = -gi;
                }
                slope = -a.gradient.iter().map(|g| g * g).sum::<f64>();
            }
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..MAX_HALVINGS {
                trial.copy_from_slice(u);
                for (&node, di) in self.interior.iter().zip(&d) {
                    trial[node] += alpha * di;
                }
                let e = self.energy_only(mesh, sigma, &trial, p, eps);
                if e <= a.energy + ARMIJO * alpha * slope {
                    accepted = Some(self.assemble(mesh, sigma, &trial, p, eps, true));
                    break;
                }
                // near the minimum the energy change drowns in roundoff;
                // accept any step that keeps the energy flat and shrinks the gradient
                if e <= a.energy + 10.0 * f64::EPSILON * a.energy.abs() {
                    let next = self.assemble(mesh, sigma, &trial, p, eps, true);
                    if max_abs(&next.gradient) < residual {
                        accepted = Some(next);
                        break;
                    }
                }
                alpha *= 0.5;
            }
            let Some(next) = accepted else {
                if !strict {
                    return Ok((residual, iteration));
                }
                return Err(Error::LineSearch { iteration, slope });
            };
            debug_assert!(next.energy <= a.energy + 10.0 * f64::EPSILON * a.energy.abs());
            std::mem::swap(u, &mut trial);
            a = next;
            residual = max_abs(&a.gradient);
        }
        if residual <= target || !strict {
            Ok((residual, max_iterations))
        } else {
            Err(Error::NonConvergence {
                iterations: max_iterations,
                residual,
                eps,
            })
        }
    }

    /// `(Lambda_sigma f, f)`: the unregularized energy of the minimizer.
    pub fn dn_pairing(
        &self,
        mesh: &Mesh,
        sigma: &ConductivityField,
        boundary_values: &[f64],
        p: f64,
        options: &SolverOptions,
        initial: Option<&[f64]>,
    ) -> Result<(f64, SolveReport)> {
        let (_, report) = self.solve(mesh, sigma, boundary_values, p, options, initial)?;
        Ok((report.energy, report))
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Minimizer of the energy with the given trace on `mesh.boundary_nodes()`.
pub fn solve_forward(
    mesh: &Mesh,
    sigma: &ConductivityField,
    boundary_values: &[f64],
    p: f64,
    tol: f64,
) -> Result<(DiscreteField, SolveReport)> {
    ForwardSolver::new(mesh)?.solve(mesh, sigma, boundary_values, p, &SolverOptions::with_tol(tol), None)
}

pub fn dn_pairing(mesh: &Mesh, sigma: &ConductivityField, boundary_values: &[f64], p: f64, tol: f64) -> Result<f64> {
    let (_, report) = solve_forward(mesh, sigma, boundary_values, p, tol)?;
    Ok(report.energy)
}
