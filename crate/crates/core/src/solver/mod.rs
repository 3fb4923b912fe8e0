//! Sparse nonlinear least squares over pose and line variables.
//!
//! A [`Problem`] holds variable blocks and residual blocks. Each residual
//! block pairs a [`Factor`] (residual plus Jacobians) with an information
//! matrix and an optional robust kernel. [`solve`] runs Gauss-Newton or
//! Levenberg-Marquardt on the free variables.

pub mod linear;

use log::trace;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, PSD_SLACK};
use linear::{dense_solve, Skyline};

pub type VarId = usize;

/// Manifold behaviour of a variable block after an additive update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    /// `(x, y, θ)` with θ wrapped.
    Pose,
    /// `(ρ, α)` kept in the canonical ρ ≥ 0 chart.
    Line,
    Euclidean(usize),
}

impl VarKind {
    pub fn dim(self) -> usize {
        match self {
            VarKind::Pose => 3,
            VarKind::Line => 2,
            VarKind::Euclidean(n) => n,
        }
    }

    fn normalize(self, v: &mut [f64]) {
        match self {
            VarKind::Pose => v[2] = wrap_angle(v[2]),
            VarKind::Line => {
                if v[0] < 0.0 {
                    v[0] = -v[0];
                    v[1] += std::f64::consts::PI;
                }
                v[1] = wrap_angle(v[1]);
            }
            VarKind::Euclidean(_) => {}
        }
    }
}

/// Residual function over an ordered list of variable blocks.
pub trait Factor: Send + Sync {
    fn dim(&self) -> usize;

    /// Residual and one `dim × var_dim` Jacobian per variable.
    fn linearize(&self, values: &[&[f64]]) -> (DVector<f64>, Vec<DMatrix<f64>>);

    fn residual(&self, values: &[&[f64]]) -> DVector<f64> {
        self.linearize(values).0
    }
}

/// Dynamic covariance scaling: `s = min(1, 2φ / (φ + χ²))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dcs {
    pub phi: f64,
}

impl Dcs {
    pub fn scale(&self, chi2: f64) -> f64 {
        (2.0 * self.phi / (self.phi + chi2)).min(1.0)
    }

    /// Robust cost whose derivative in `χ²` is `s²`: `χ²` up to `φ`, then
    /// `3φ − 4φ² / (φ + χ²)`. Bounded by `3φ`.
    pub fn cost(&self, chi2: f64) -> f64 {
        if chi2 <= self.phi {
            chi2
        } else {
            3.0 * self.phi - 4.0 * self.phi * self.phi / (self.phi + chi2)
        }
    }
}

#[derive(Debug, Clone)]
struct Variable {
    kind: VarKind,
    value: Vec<f64>,
    fixed: bool,
}

struct ResidualBlock {
    factor: Box<dyn Factor>,
    vars: Vec<VarId>,
    information: DMatrix<f64>,
    robust: Option<Dcs>,
}

#[derive(Default)]
pub struct Problem {
    variables: Vec<Variable>,
    blocks: Vec<ResidualBlock>,
}

impl Problem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_variable(&mut self, kind: VarKind, value: &[f64], fixed: bool) -> VarId {
        assert_eq!(value.len(), kind.dim(), "value length does not match kind");
        let mut value = value.to_vec();
        kind.normalize(&mut value);
        self.variables.push(Variable { kind, value, fixed });
        self.variables.len() - 1
    }

    /// Adds a residual block; the information matrix must be symmetric PSD
    /// and sized to the factor.
    pub fn add_residual(
        &mut self,
        factor: Box<dyn Factor>,
        vars: &[VarId],
        information: DMatrix<f64>,
        robust: Option<Dcs>,
    ) -> Result<usize> {
        let d = factor.dim();
        if information.nrows() != d || information.ncols() != d {
            return Err(Error::Precondition(format!(
                "information is {}x{}, factor has dimension {d}",
                information.nrows(),
                information.ncols()
            )));
        }
        if let Some(&bad) = vars.iter().find(|&&v| v >= self.variables.len()) {
            return Err(Error::UnknownVertex(bad as u64));
        }
        let sym = (&information + information.transpose()) * 0.5;
        let min_eig = sym.clone().symmetric_eigenvalues().min();
        if min_eig < -PSD_SLACK {
            return Err(Error::NotPsd {
                min_eigenvalue: min_eig,
            });
        }
        self.blocks.push(ResidualBlock {
            factor,
            vars: vars.to_vec(),
            information: sym,
            robust,
        });
        Ok(self.blocks.len() - 1)
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn num_residuals(&self) -> usize {
        self.blocks.len()
    }

    pub fn value(&self, id: VarId) -> &[f64] {
        &self.variables[id].value
    }

    pub fn set_value(&mut self, id: VarId, value: &[f64]) {
        let var = &mut self.variables[id];
        var.value.copy_from_slice(value);
        var.kind.normalize(&mut var.value);
    }

    pub fn is_fixed(&self, id: VarId) -> bool {
        self.variables[id].fixed
    }

    pub fn set_fixed(&mut self, id: VarId, fixed: bool) {
        self.variables[id].fixed = fixed;
    }

    fn block_values(&self, block: &ResidualBlock) -> Vec<&[f64]> {
        block.vars.iter().map(|&v| self.variables[v].value.as_slice()).collect()
    }

    /// Unweighted `eᵀΩe` of one residual block.
    pub fn residual_chi2(&self, index: usize) -> f64 {
        let block = &self.blocks[index];
        let e = block.factor.residual(&self.block_values(block));
        e.dot(&(&block.information * &e))
    }

    /// Robust weight `s` of a block at the current estimate (1 without a kernel).
    pub fn robust_scale(&self, index: usize) -> f64 {
        let block = &self.blocks[index];
        match block.robust {
            Some(k) => k.scale(self.residual_chi2(index)),
            None => 1.0,
        }
    }

    /// Objective with robust costs applied to kernel-carrying blocks.
    pub fn chi2(&self) -> f64 {
        (0..self.blocks.len())
            .map(|i| {
                let c = self.residual_chi2(i);
                match self.blocks[i].robust {
                    Some(k) => k.cost(c),
                    None => c,
                }
            })
            .sum()
    }

    /// Offsets of free variables in the reduced state vector.
    fn free_layout(&self) -> (Vec<Option<usize>>, usize) {
        let mut offsets = Vec::with_capacity(self.variables.len());
        let mut n = 0;
        for v in &self.variables {
            if v.fixed {
                offsets.push(None);
            } else {
                offsets.push(Some(n));
                n += v.kind.dim();
            }
        }
        (offsets, n)
    }

    fn envelope(&self, offsets: &[Option<usize>], n: usize) -> Vec<usize> {
        let mut first: Vec<usize> = (0..n).collect();
        for block in &self.blocks {
            let free: Vec<(usize, usize)> = block
                .vars
                .iter()
                .filter_map(|&v| offsets[v].map(|o| (o, self.variables[v].kind.dim())))
                .collect();
            let Some(lo) = free.iter().map(|&(o, _)| o).min() else {
                continue;
            };
            for &(o, d) in &free {
                for f in &mut first[o..o + d] {
                    *f = (*f).min(lo);
                }
            }
        }
        first
    }

    /// Assembles `H = Σ JᵀWJ` (lower envelope) and `g = Σ JᵀWe` over free variables.
    fn assemble(&self, offsets: &[Option<usize>], first: Vec<usize>) -> (Skyline, DVector<f64>) {
        let n = first.len();
        let mut h = Skyline::new(first);
        let mut g = DVector::zeros(n);
        for block in &self.blocks {
            if block.vars.iter().all(|&v| offsets[v].is_none()) {
                continue;
            }
            let (e, jacs) = block.factor.linearize(&self.block_values(block));
            let mut w = block.information.clone();
            if let Some(k) = block.robust {
                let chi2 = e.dot(&(&block.information * &e));
                w *= k.scale(chi2).powi(2);
            }
            let we = &w * &e;
            let wj: Vec<DMatrix<f64>> = jacs.iter().map(|j| &w * j).collect();
            for (a, &va) in block.vars.iter().enumerate() {
                let Some(oa) = offsets[va] else { continue };
                let ga = jacs[a].transpose() * &we;
                for i in 0..ga.len() {
                    g[oa + i] += ga[i];
                }
                for (b, &vb) in block.vars.iter().enumerate() {
                    let Some(ob) = offsets[vb] else { continue };
                    if ob > oa {
                        continue;
                    }
                    let hab = jacs[a].transpose() * &wj[b];
                    for r in 0..hab.nrows() {
                        for c in 0..hab.ncols() {
                            if ob + c <= oa + r {
                                h.add(oa + r, ob + c, hab[(r, c)]);
                            }
                        }
                    }
                }
            }
        }
        (h, g)
    }

    /// Dense normal equations `(H, g)` over the free variables.
    pub fn normal_equations(&self) -> (DMatrix<f64>, DVector<f64>) {
        let (offsets, n) = self.free_layout();
        let first = vec![0; n];
        let (h, g) = self.assemble(&offsets, first);
        (h.to_dense(), g)
    }

    fn apply_step(&mut self, offsets: &[Option<usize>], step: &DVector<f64>) {
        for (var, off) in self.variables.iter_mut().zip(offsets) {
            if let Some(o) = off {
                for (i, v) in var.value.iter_mut().enumerate() {
                    *v += step[o + i];
                }
                var.kind.normalize(&mut var.value);
            }
        }
    }

    fn snapshot_values(&self) -> Vec<Vec<f64>> {
        self.variables.iter().map(|v| v.value.clone()).collect()
    }

    fn restore_values(&mut self, values: Vec<Vec<f64>>) {
        for (var, v) in self.variables.iter_mut().zip(values) {
            var.value = v;
        }
    }

    fn state_norm(&self, offsets: &[Option<usize>]) -> f64 {
        self.variables
            .iter()
            .zip(offsets)
            .filter(|(_, o)| o.is_some())
            .flat_map(|(v, _)| v.value.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    GaussNewton,
    LevenbergMarquardt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearSolver {
    /// Envelope Cholesky with variables in insertion order.
    Sparse,
    /// Dense Cholesky; intended for small problems and cross-checks.
    Dense,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub method: Method,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub step_tolerance: f64,
    pub initial_lambda: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub linear_solver: LinearSolver,
}

impl SolverOptions {
    pub fn levenberg_marquardt(max_iterations: usize) -> Self {
        SolverOptions {
            method: Method::LevenbergMarquardt,
            max_iterations,
            ..Default::default()
        }
    }

    pub fn gauss_newton(max_iterations: usize) -> Self {
        SolverOptions {
            method: Method::GaussNewton,
            max_iterations,
            ..Default::default()
        }
    }
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            method: Method::LevenbergMarquardt,
            max_iterations: 5,
            gradient_tolerance: 1e-9,
            step_tolerance: 1e-9,
            initial_lambda: 1e-4,
            lambda_up: 2.0,
            lambda_down: 3.0,
            linear_solver: LinearSolver::Sparse,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    StepTolerance,
    IterationLimit,
    /// Gauss-Newton produced a step that did not lower the objective.
    NoImprovement,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveReport {
    pub iterations: usize,
    pub initial_chi2: f64,
    pub final_chi2: f64,
    pub termination: Termination,
}

const MAX_LAMBDA: f64 = 1e12;

fn solve_normal(mut h: Skyline, g: &DVector<f64>, damping: Option<f64>, kind: LinearSolver) -> Option<DVector<f64>> {
    if let Some(lambda) = damping {
        for r in 0..h.dim() {
            let d = h.diagonal(r);
            h.add_diagonal(r, lambda * d.max(1e-9));
        }
    }
    let rhs = -g;
    match kind {
        LinearSolver::Sparse => h.factorize().then(|| h.solve(&rhs)),
        LinearSolver::Dense => dense_solve(&h.to_dense(), &rhs),
    }
}

/// Minimizes the problem objective in place.
///
/// On a linear-algebra failure the variables are left at their values from
/// before the call.
pub fn solve(problem: &mut Problem, options: &SolverOptions) -> Result<SolveReport> {
    let (offsets, n) = problem.free_layout();
    if n == 0 {
        return Err(Error::Precondition("problem has no free variables".into()));
    }
    if problem.blocks.is_empty() {
        return Err(Error::Precondition("problem has no residuals".into()));
    }
    let first = problem.envelope(&offsets, n);
    let start = problem.snapshot_values();
    let initial_chi2 = problem.chi2();
    let mut chi2 = initial_chi2;
    let mut lambda = options.initial_lambda;
    let mut iterations = 0;
    let mut termination = Termination::IterationLimit;

    while iterations < options.max_iterations {
        let (h, g) = problem.assemble(&offsets, first.clone());
        if g.amax() <= options.gradient_tolerance {
            termination = Termination::GradientTolerance;
            break;
        }
        iterations += 1;
        match options.method {
            Method::GaussNewton => {
                let Some(step) = solve_normal(h, &g, None, options.linear_solver) else {
                    problem.restore_values(start);
                    return Err(Error::Solver("normal equations are not positive definite".into()));
                };
                let before = problem.snapshot_values();
                problem.apply_step(&offsets, &step);
                let new_chi2 = problem.chi2();
                trace!("GN iteration {iterations}: chi2 {chi2:.6e} -> {new_chi2:.6e}");
                if new_chi2 > chi2 {
                    problem.restore_values(before);
                    termination = Termination::NoImprovement;
                    break;
                }
                chi2 = new_chi2;
                if step.norm() <= options.step_tolerance * (problem.state_norm(&offsets) + options.step_tolerance) {
                    termination = Termination::StepTolerance;
                    break;
                }
            }
            Method::LevenbergMarquardt => {
                let mut accepted = None;
                while lambda <= MAX_LAMBDA {
                    let Some(step) = solve_normal(h.clone(), &g, Some(lambda), options.linear_solver) else {
                        lambda *= options.lambda_up;
                        continue;
                    };
                    let before = problem.snapshot_values();
                    problem.apply_step(&offsets, &step);
                    let new_chi2 = problem.chi2();
                    if new_chi2 <= chi2 {
                        lambda = (lambda / options.lambda_down).max(1e-12);
                        accepted = Some((step, new_chi2));
                        break;
                    }
                    problem.restore_values(before);
                    lambda *= options.lambda_up;
                }
                let Some((step, new_chi2)) = accepted else {
                    termination = Termination::StepTolerance;
                    break;
                };
                trace!("LM iteration {iterations}: chi2 {chi2:.6e} -> {new_chi2:.6e}, lambda {lambda:.1e}");
                chi2 = new_chi2;
                if step.norm() <= options.step_tolerance * (problem.state_norm(&offsets) + options.step_tolerance) {
                    termination = Termination::StepTolerance;
                    break;
                }
            }
        }
    }
    if termination == Termination::IterationLimit && iterations < options.max_iterations {
        termination = Termination::GradientTolerance;
    }
    Ok(SolveReport {
        iterations,
        initial_chi2,
        final_chi2: chi2,
        termination,
    })
}
