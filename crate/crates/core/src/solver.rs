//! Damped least-squares solver for windowed-polynomial residual systems.
//!
//! A [`ResidualSystem`] encodes equations of the form
//!
//! ```text
//! r_j(v) = sum_i c_i * v_{start_j + i}^{e_i} - target_j
//! ```
//!
//! where positions past the variable count are padding and contribute a
//! constant zero (they are dropped from residuals and Jacobian alike).
//! Systems may be underdetermined (one template, low overlap), roughly
//! square, or overdetermined (stacked templates); all three are handled by
//! the same Levenberg-Marquardt iteration with Marquardt-style
//! `diag(J^T J)` damping, which keeps the damped normal matrix well
//! conditioned despite the wildly different column scales produced by
//! exponents 1..=m.
//!
//! [`solve_lm`] walks a list of initial guesses in order and returns as soon
//! as one converges to an infinity-norm residual at or below the configured
//! tolerance; if none does, it reports the best solution seen with
//! `success = false`.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transform::{output_dimension, PolyParams, ProtectedTemplate};

/// One polynomial window equation; `coefficients` and `exponents` are
/// aligned, and variable `start_index + i` carries term `i`. Indices at or
/// beyond the system's variable count are padded positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowEquation {
    pub start_index: usize,
    pub coefficients: Vec<i64>,
    pub exponents: Vec<u32>,
    pub target: f64,
}

impl WindowEquation {
    /// Active terms: `(variable index, coefficient, exponent)` for positions
    /// inside the variable range.
    fn active_terms<'a>(&'a self, n_vars: usize) -> impl Iterator<Item = (usize, f64, i32)> + 'a {
        self.coefficients
            .iter()
            .zip(&self.exponents)
            .enumerate()
            .filter_map(move |(i, (&c, &e))| {
                let idx = self.start_index + i;
                (idx < n_vars).then_some((idx, c as f64, e as i32))
            })
    }

    /// Number of non-padded terms.
    pub fn active_len(&self, n_vars: usize) -> usize {
        self.active_terms(n_vars).count()
    }
}

/// A polynomial residual system `r(v) = 0` in `n_vars` unknowns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSystem {
    n_vars: usize,
    equations: Vec<WindowEquation>,
}

impl ResidualSystem {
    pub fn new(n_vars: usize, equations: Vec<WindowEquation>) -> Result<Self> {
        if n_vars == 0 {
            return Err(Error::Domain("system needs at least one variable".into()));
        }
        if equations.is_empty() {
            return Err(Error::Domain("system needs at least one equation".into()));
        }
        for (j, eq) in equations.iter().enumerate() {
            if eq.coefficients.is_empty() || eq.coefficients.len() != eq.exponents.len() {
                return Err(Error::Domain(format!(
                    "equation {j}: coefficient/exponent lists must be non-empty and aligned"
                )));
            }
            if eq.exponents.contains(&0) {
                return Err(Error::Domain(format!(
                    "equation {j}: exponents must be >= 1"
                )));
            }
            if eq.start_index >= n_vars {
                return Err(Error::Domain(format!(
                    "equation {j}: start index {} references no variable < {n_vars}",
                    eq.start_index
                )));
            }
        }
        Ok(Self { n_vars, equations })
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn equations(&self) -> &[WindowEquation] {
        &self.equations
    }

    pub fn len(&self) -> usize {
        self.equations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.equations.is_empty()
    }
}

/// Stacks the window equations of one or more templates (aligned with the
/// parameter sets that produced them) into a single system over the
/// `n`-dimensional source embedding.
pub fn build_inversion_system(
    templates: &[ProtectedTemplate],
    params: &[PolyParams],
    n: usize,
) -> Result<ResidualSystem> {
    if templates.is_empty() || templates.len() != params.len() {
        return Err(Error::Domain(format!(
            "need equally many templates and parameter sets, got {} and {}",
            templates.len(),
            params.len()
        )));
    }
    let mut equations = Vec::new();
    for (t, p) in templates.iter().zip(params) {
        p.validate()?;
        if t.source_dim != n {
            return Err(Error::Domain(format!(
                "template source dimension {} does not match system dimension {n}",
                t.source_dim
            )));
        }
        if t.overlap != p.overlap {
            return Err(Error::Domain(format!(
                "template overlap {} differs from parameter overlap {}",
                t.overlap, p.overlap
            )));
        }
        let k = output_dimension(n, p.m, p.overlap)?;
        if t.values.len() != k {
            return Err(Error::Domain(format!(
                "template has {} values, expected {k} for overlap {}",
                t.values.len(),
                p.overlap
            )));
        }
        let stride = p.stride();
        for (j, &target) in t.values.iter().enumerate() {
            equations.push(WindowEquation {
                start_index: j * stride,
                coefficients: p.coefficients.clone(),
                exponents: p.exponents.clone(),
                target,
            });
        }
    }
    ResidualSystem::new(n, equations)
}

/// Residual vector `r(v)`.
pub fn evaluate_residuals(sys: &ResidualSystem, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != sys.n_vars {
        return Err(Error::Domain(format!(
            "point has {} entries, system has {} variables",
            v.len(),
            sys.n_vars
        )));
    }
    Ok(sys
        .equations
        .iter()
        .map(|eq| {
            eq.active_terms(sys.n_vars)
                .map(|(idx, c, e)| c * v[idx].powi(e))
                .sum::<f64>()
                - eq.target
        })
        .collect())
}

/// Dense Jacobian of `r` at `v`: entry `(j, idx) = c_i * e_i * v_idx^(e_i-1)`
/// for each active term, zero elsewhere.
pub fn evaluate_jacobian(sys: &ResidualSystem, v: &[f64]) -> Result<DMatrix<f64>> {
    if v.len() != sys.n_vars {
        return Err(Error::Domain(format!(
            "point has {} entries, system has {} variables",
            v.len(),
            sys.n_vars
        )));
    }
    let mut jac = DMatrix::zeros(sys.equations.len(), sys.n_vars);
    for (j, eq) in sys.equations.iter().enumerate() {
        for (idx, c, e) in eq.active_terms(sys.n_vars) {
            jac[(j, idx)] += c * e as f64 * v[idx].powi(e - 1);
        }
    }
    Ok(jac)
}

/// Solver knobs. Defaults match the tolerances used throughout the attack
/// experiments.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Infinity-norm residual bound accepted as a solution.
    pub residual_tolerance: f64,
    /// Iteration budget per initial guess.
    pub max_iterations: usize,
    pub lambda_init: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    /// Step-norm floor below which a guess is considered stalled.
    pub step_tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            residual_tolerance: 1.490_12e-8,
            max_iterations: 200,
            lambda_init: 1e-3,
            lambda_up: 10.0,
            lambda_down: 10.0,
            step_tolerance: 1e-12,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let all_positive = self.residual_tolerance > 0.0
            && self.max_iterations > 0
            && self.lambda_init > 0.0
            && self.lambda_up > 1.0
            && self.lambda_down > 1.0
            && self.step_tolerance > 0.0;
        if !all_positive {
            return Err(Error::Config(
                "solver configuration values must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Solver outcome. `success` holds exactly when `residual_norm` (infinity
/// norm) is at or below the configured tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    pub success: bool,
    pub solution: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub guesses_consumed: usize,
}

const LAMBDA_MAX: f64 = 1e12;
const LAMBDA_MIN: f64 = 1e-15;

struct GuessRun {
    v: DVector<f64>,
    residual_inf: f64,
    iterations: usize,
    success: bool,
    /// Squared 2-norm cost after each accepted step; strictly decreasing.
    accepted_costs: Vec<f64>,
}

// non-finite entries force an infinite norm so they can never satisfy the
// success tolerance (f64::max alone would silently drop NaN)
fn inf_norm(r: &DVector<f64>) -> f64 {
    r.iter().fold(0.0, |acc, x| {
        if x.is_finite() {
            acc.max(x.abs())
        } else {
            f64::INFINITY
        }
    })
}

fn residual_vector(sys: &ResidualSystem, v: &DVector<f64>) -> DVector<f64> {
    let mut r = DVector::zeros(sys.equations.len());
    for (j, eq) in sys.equations.iter().enumerate() {
        let mut acc = -eq.target;
        for (idx, c, e) in eq.active_terms(sys.n_vars) {
            acc += c * v[idx].powi(e);
        }
        r[j] = acc;
    }
    r
}

/// Accumulates `J^T J` and `J^T r` directly from the sparse equation terms;
/// every row touches at most `m` variables, so this costs `O(eqs * m^2)`
/// instead of a dense `O(eqs * n^2)` product.
fn normal_equations(
    sys: &ResidualSystem,
    v: &DVector<f64>,
    r: &DVector<f64>,
) -> (DMatrix<f64>, DVector<f64>) {
    let n = sys.n_vars;
    let mut jtj = DMatrix::zeros(n, n);
    let mut jtr = DVector::zeros(n);
    let mut row: Vec<(usize, f64)> = Vec::new();
    for (j, eq) in sys.equations.iter().enumerate() {
        row.clear();
        for (idx, c, e) in eq.active_terms(n) {
            row.push((idx, c * e as f64 * v[idx].powi(e - 1)));
        }
        for &(xi, dx) in &row {
            jtr[xi] += dx * r[j];
            for &(yi, dy) in &row {
                jtj[(xi, yi)] += dx * dy;
            }
        }
    }
    (jtj, jtr)
}

fn lm_single_guess(sys: &ResidualSystem, guess: &[f64], cfg: &SolverConfig) -> GuessRun {
    let mut v = DVector::from_column_slice(guess);
    let mut r = residual_vector(sys, &v);
    let mut cost = r.norm_squared();
    let mut run = GuessRun {
        residual_inf: inf_norm(&r),
        v: v.clone(),
        iterations: 0,
        success: false,
        accepted_costs: Vec::new(),
    };
    if run.residual_inf <= cfg.residual_tolerance {
        run.success = true;
        return run;
    }

    let mut lambda = cfg.lambda_init;
    'outer: while run.iterations < cfg.max_iterations {
        let (jtj, jtr) = normal_equations(sys, &v, &r);
        // damping scale per column; unity where a column is locally flat
        let damp: Vec<f64> = (0..sys.n_vars)
            .map(|i| if jtj[(i, i)] > 0.0 { jtj[(i, i)] } else { 1.0 })
            .collect();
        loop {
            if run.iterations >= cfg.max_iterations {
                break 'outer;
            }
            run.iterations += 1;
            let mut damped = jtj.clone();
            for (i, &d) in damp.iter().enumerate() {
                damped[(i, i)] += lambda * d;
            }
            let step = match Cholesky::new(damped) {
                Some(chol) => chol.solve(&(-&jtr)),
                None => {
                    lambda *= cfg.lambda_up;
                    if lambda > LAMBDA_MAX {
                        break 'outer;
                    }
                    continue;
                }
            };
            let v_new = &v + &step;
            let r_new = residual_vector(sys, &v_new);
            let cost_new = r_new.norm_squared();
            if cost_new.is_finite() && cost_new < cost {
                v = v_new;
                r = r_new;
                cost = cost_new;
                lambda = (lambda / cfg.lambda_down).max(LAMBDA_MIN);
                run.accepted_costs.push(cost);
                run.v = v.clone();
                run.residual_inf = inf_norm(&r);
                if run.residual_inf <= cfg.residual_tolerance {
                    run.success = true;
                    return run;
                }
                if step.norm() <= cfg.step_tolerance {
                    break 'outer;
                }
                break; // recompute the Jacobian at the new point
            }
            lambda *= cfg.lambda_up;
            if lambda > LAMBDA_MAX {
                break 'outer; // guess abandoned, not an error
            }
        }
    }
    run
}

/// Runs the damped least-squares iteration from each guess in order,
/// returning at the first guess that reaches the residual tolerance. With
/// no convergent guess, the lowest-residual solution seen is returned with
/// `success = false`.
pub fn solve_lm(
    sys: &ResidualSystem,
    initial_guesses: &[Vec<f64>],
    cfg: &SolverConfig,
) -> Result<SolverResult> {
    cfg.validate()?;
    if initial_guesses.is_empty() {
        return Err(Error::Config(
            "at least one initial guess is required".into(),
        ));
    }
    for g in initial_guesses {
        if g.len() != sys.n_vars {
            return Err(Error::Domain(format!(
                "guess has {} entries, system has {} variables",
                g.len(),
                sys.n_vars
            )));
        }
    }

    let mut total_iterations = 0;
    let mut best: Option<(f64, DVector<f64>)> = None;
    for (gi, guess) in initial_guesses.iter().enumerate() {
        let run = lm_single_guess(sys, guess, cfg);
        total_iterations += run.iterations;
        let better = best.as_ref().is_none_or(|(b, _)| run.residual_inf < *b);
        if better {
            best = Some((run.residual_inf, run.v.clone()));
        }
        if run.success {
            return Ok(SolverResult {
                success: true,
                solution: run.v.as_slice().to_vec(),
                residual_norm: run.residual_inf,
                iterations: total_iterations,
                guesses_consumed: gi + 1,
            });
        }
    }
    let (residual_norm, v) = best.expect("at least one guess was run");
    Ok(SolverResult {
        success: false,
        solution: v.as_slice().to_vec(),
        residual_norm,
        iterations: total_iterations,
        guesses_consumed: initial_guesses.len(),
    })
}
