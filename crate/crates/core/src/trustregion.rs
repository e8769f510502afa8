//! Trust-region minimization with a dogleg subproblem solver.
//!
//! Each iteration fits the quadratic model
//! `m(s) = J(θ) + gᵀs + ½ sᵀHs` around the current iterate, takes the dogleg
//! step inside the ball `‖s‖ ≤ Δ`, and compares actual against predicted
//! reduction through `ρ = (J(θ) − J(θ + s)) / (m(0) − m(s))`:
//!
//! * `ρ < 0.25` shrinks the radius to `0.25·Δ`,
//! * `ρ > 0.75` on a boundary step expands it to `min(2Δ, Δ_max)`,
//! * anything else keeps it.
//!
//! The step is accepted when `ρ` exceeds the acceptance threshold. Setting
//! that threshold to `-inf` accepts every step whose trial point evaluates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::scalar::{dot, norm, Real};

/// Relative tolerance on `‖s‖ = Δ` for the boundary test of the expand rule.
pub const BOUNDARY_RTOL: f64 = 1e-9;

/// Objective value with its gradient and a (symmetric PSD) Hessian surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation<T> {
    pub value: T,
    pub gradient: Vec<T>,
    pub hessian: Matrix<T>,
}

impl<T: Real> Evaluation<T> {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.gradient.iter().all(|g| g.is_finite()) && self.hessian.is_finite()
    }
}

/// Something the solver can evaluate at a parameter vector.
pub trait Objective<T> {
    type Error: std::fmt::Display;

    fn evaluate(&self, params: &[T]) -> Result<Evaluation<T>, Self::Error>;
}

impl<T, E, F> Objective<T> for F
where
    F: Fn(&[T]) -> Result<Evaluation<T>, E>,
    E: std::fmt::Display,
{
    type Error = E;

    fn evaluate(&self, params: &[T]) -> Result<Evaluation<T>, E> {
        self(params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct TrustRegionConfig<T> {
    pub initial_radius: T,
    /// Defaults to `100 × initial_radius` when absent.
    pub max_radius: Option<T>,
    pub tolerance: T,
    pub shrink_threshold: T,
    pub expand_threshold: T,
    pub shrink_factor: T,
    pub expand_factor: T,
    pub acceptance_threshold: T,
    pub max_iterations: usize,
    /// Consecutive accepted steps with relative decrease below
    /// `stagnation_tolerance` before stopping.
    pub stagnation_window: usize,
    pub stagnation_tolerance: T,
}

impl<T: Real> Default for TrustRegionConfig<T> {
    fn default() -> Self {
        Self {
            initial_radius: T::lit(0.1),
            max_radius: None,
            tolerance: T::lit(1e-6),
            shrink_threshold: T::lit(0.25),
            expand_threshold: T::lit(0.75),
            shrink_factor: T::lit(0.25),
            expand_factor: T::lit(2.0),
            acceptance_threshold: T::zero(),
            max_iterations: 500,
            stagnation_window: 5,
            stagnation_tolerance: T::lit(1e-14),
        }
    }
}

impl<T: Real> TrustRegionConfig<T> {
    pub fn with_radius(initial_radius: T, tolerance: T) -> Self {
        Self {
            initial_radius,
            tolerance,
            ..Self::default()
        }
    }

    /// Effective `Δ_max`.
    pub fn max_radius(&self) -> T {
        self.max_radius
            .unwrap_or(T::lit(100.0) * self.initial_radius)
    }

    /// Accept every evaluable trial step, as in the unguarded iteration.
    pub fn always_accept(mut self) -> Self {
        self.acceptance_threshold = T::neg_infinity();
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        let zero = T::zero();
        let one = T::one();
        let max_radius = self.max_radius();
        if !(self.initial_radius > zero && self.initial_radius.is_finite()) {
            return Err(format!("initial_radius must be positive, got {}", self.initial_radius));
        }
        if !(self.initial_radius <= max_radius) {
            return Err(format!(
                "initial_radius {} exceeds max_radius {}",
                self.initial_radius, max_radius
            ));
        }
        if !(self.tolerance > zero) {
            return Err(format!("tolerance must be positive, got {}", self.tolerance));
        }
        if !(zero < self.shrink_threshold
            && self.shrink_threshold < self.expand_threshold
            && self.expand_threshold < one)
        {
            return Err("thresholds must satisfy 0 < shrink < expand < 1".into());
        }
        if !(zero < self.shrink_factor && self.shrink_factor < one) {
            return Err("shrink_factor must lie in (0, 1)".into());
        }
        if !(self.expand_factor > one) {
            return Err("expand_factor must exceed 1".into());
        }
        let acc = self.acceptance_threshold;
        if !(acc == T::neg_infinity() || (acc >= zero && acc < self.shrink_threshold)) {
            return Err("acceptance_threshold must be -inf or lie in [0, shrink_threshold)".into());
        }
        if self.max_iterations == 0 {
            return Err("max_iterations must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    RadiusBelowTolerance,
    MaxIterations,
    ObjectiveStagnation,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Termination::RadiusBelowTolerance => "radius_below_tolerance",
            Termination::MaxIterations => "max_iterations",
            Termination::ObjectiveStagnation => "objective_stagnation",
        })
    }
}

/// Snapshot after each iteration. Entry 0 describes the starting point.
///
/// `radius` is the radius the iteration ran with; the radius handed to the
/// next iteration is the next entry's `radius`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustRegionState<T> {
    pub iteration: usize,
    pub iterate: Vec<T>,
    pub objective_value: T,
    pub gradient_norm: T,
    pub radius: T,
    /// `None` at the start and whenever the ratio is undefined (failed trial
    /// evaluation or no predicted decrease), both of which count as `-inf`.
    pub last_ratio: Option<T>,
    pub step_norm: T,
    pub predicted_reduction: T,
    pub actual_reduction: Option<T>,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport<T> {
    pub final_params: Vec<T>,
    pub final_objective: T,
    pub final_gradient: Vec<T>,
    pub iterations: usize,
    pub termination: Termination,
    pub trace: Vec<TrustRegionState<T>>,
}

#[derive(Debug, Error, PartialEq)]
pub enum SubproblemError {
    #[error("gradient or Hessian has non-finite entries")]
    NonFinite,
    #[error("gradient length {gradient} does not match {rows}x{cols} Hessian")]
    Shape { gradient: usize, rows: usize, cols: usize },
    #[error("trust-region radius must be positive")]
    NonPositiveRadius,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("objective failed at the starting point: {0}")]
    StartFailed(String),
    #[error("objective returned non-finite values at the starting point")]
    NonFiniteStart,
    #[error(transparent)]
    InvalidModel(#[from] SubproblemError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemStep<T> {
    pub step: Vec<T>,
    pub predicted_reduction: T,
}

/// `m(0) − m(s) = −(gᵀs + ½ sᵀHs)`.
pub fn predicted_reduction<T: Real>(gradient: &[T], hessian: &Matrix<T>, step: &[T]) -> T {
    -(dot(gradient, step) + T::lit(0.5) * hessian.quadratic_form(step))
}

/// Solves `H s = −g`, adding Levenberg damping when `H` is singular.
fn newton_step<T: Real>(gradient: &[T], hessian: &Matrix<T>) -> Vec<T> {
    let neg_g: Vec<T> = gradient.iter().map(|&g| -g).collect();
    if let Some(s) = hessian.cholesky_solve(&neg_g) {
        return s;
    }
    let p = gradient.len();
    let mut lambda = T::lit(1e-10) * hessian.trace() / T::from_count(p);
    if !(lambda > T::zero()) {
        lambda = T::lit(1e-10);
    }
    loop {
        let mut damped = hessian.clone();
        for i in 0..p {
            damped[(i, i)] += lambda;
        }
        if let Some(s) = damped.cholesky_solve(&neg_g) {
            return s;
        }
        lambda *= T::lit(10.0);
    }
}

/// Dogleg solution of `min m(s)` subject to `‖s‖ ≤ radius`.
pub fn solve_subproblem<T: Real>(
    gradient: &[T],
    hessian: &Matrix<T>,
    radius: T,
) -> Result<SubproblemStep<T>, SubproblemError> {
    let p = gradient.len();
    if hessian.rows() != p || hessian.cols() != p {
        return Err(SubproblemError::Shape {
            gradient: p,
            rows: hessian.rows(),
            cols: hessian.cols(),
        });
    }
    if !gradient.iter().all(|g| g.is_finite()) || !hessian.is_finite() {
        return Err(SubproblemError::NonFinite);
    }
    if !(radius > T::zero()) {
        return Err(SubproblemError::NonPositiveRadius);
    }
    let g_norm = norm(gradient);
    if g_norm == T::zero() {
        return Ok(SubproblemStep {
            step: vec![T::zero(); p],
            predicted_reduction: T::zero(),
        });
    }

    let steepest_to_boundary = || -> Vec<T> {
        gradient.iter().map(|&g| -radius * g / g_norm).collect()
    };

    let full = newton_step(gradient, hessian);
    let step = if norm(&full) <= radius {
        full
    } else {
        let curvature = hessian.quadratic_form(gradient);
        if !(curvature > T::zero()) {
            steepest_to_boundary()
        } else {
            let cauchy: Vec<T> = gradient
                .iter()
                .map(|&g| -(g_norm * g_norm / curvature) * g)
                .collect();
            if norm(&cauchy) >= radius {
                steepest_to_boundary()
            } else {
                // ‖c + τ d‖ = Δ for τ in [0, 1], d = full − cauchy.
                let d: Vec<T> = full.iter().zip(&cauchy).map(|(&f, &c)| f - c).collect();
                let a = dot(&d, &d);
                let b = T::lit(2.0) * dot(&cauchy, &d);
                let c = dot(&cauchy, &cauchy) - radius * radius;
                let disc = (b * b - T::lit(4.0) * a * c).max(T::zero()).sqrt();
                // c < 0, so the positive root is well conditioned in this form.
                let tau = if b >= T::zero() {
                    (T::lit(-2.0) * c) / (b + disc)
                } else {
                    (disc - b) / (T::lit(2.0) * a)
                };
                let tau = tau.max(T::zero()).min(T::one());
                cauchy.iter().zip(&d).map(|(&c, &d)| c + tau * d).collect()
            }
        }
    };

    let step = clamp_to_radius(step, radius);
    let predicted = predicted_reduction(gradient, hessian, &step);
    Ok(SubproblemStep {
        step,
        predicted_reduction: predicted,
    })
}

fn clamp_to_radius<T: Real>(mut step: Vec<T>, radius: T) -> Vec<T> {
    let len = norm(&step);
    if len > radius {
        let scale = radius / len;
        step.iter_mut().for_each(|s| *s *= scale);
    }
    step
}

/// Next radius from the agreement ratio; `None` stands for an undefined
/// ratio and shrinks like any poor agreement.
pub fn update_radius<T: Real>(
    config: &TrustRegionConfig<T>,
    radius: T,
    ratio: Option<T>,
    step_norm: T,
) -> T {
    let Some(rho) = ratio else {
        return radius * config.shrink_factor;
    };
    if rho < config.shrink_threshold {
        radius * config.shrink_factor
    } else if rho > config.expand_threshold
        && (step_norm - radius).abs() <= T::lit(BOUNDARY_RTOL) * radius
    {
        (config.expand_factor * radius).min(config.max_radius())
    } else {
        radius
    }
}

/// Runs the trust-region iteration from `start`.
pub fn minimize<T: Real, O: Objective<T>>(
    objective: &O,
    start: &[T],
    config: &TrustRegionConfig<T>,
) -> Result<SolveReport<T>, SolveError> {
    config.validate().map_err(SolveError::InvalidConfig)?;
    let mut current = objective
        .evaluate(start)
        .map_err(|e| SolveError::StartFailed(e.to_string()))?;
    if !current.is_finite() {
        return Err(SolveError::NonFiniteStart);
    }

    let mut theta = start.to_vec();
    let mut radius = config.initial_radius;
    let mut iteration = 0;
    let mut stagnant = 0;
    let mut trace = vec![TrustRegionState {
        iteration: 0,
        iterate: theta.clone(),
        objective_value: current.value,
        gradient_norm: norm(&current.gradient),
        radius,
        last_ratio: None,
        step_norm: T::zero(),
        predicted_reduction: T::zero(),
        actual_reduction: None,
        accepted: true,
    }];

    let termination = loop {
        if !(radius > config.tolerance) {
            break Termination::RadiusBelowTolerance;
        }
        if iteration >= config.max_iterations {
            break Termination::MaxIterations;
        }
        iteration += 1;

        let sub = solve_subproblem(&current.gradient, &current.hessian, radius)?;
        let step_norm = norm(&sub.step);
        let predicted = sub.predicted_reduction;

        let mut trial = None;
        let mut actual = None;
        let mut ratio = None;
        if predicted > T::zero() {
            let candidate: Vec<T> = theta.iter().zip(&sub.step).map(|(&t, &s)| t + s).collect();
            if let Ok(eval) = objective.evaluate(&candidate) {
                if eval.is_finite() {
                    let reduction = current.value - eval.value;
                    actual = Some(reduction);
                    ratio = Some(reduction / predicted);
                    trial = Some((candidate, eval));
                }
            }
        }

        let accepted = match ratio {
            Some(rho) => rho > config.acceptance_threshold,
            None => false,
        };
        let ran_with = radius;
        radius = update_radius(config, radius, ratio, step_norm);

        let mut stop = false;
        if accepted {
            let (candidate, eval) = trial.expect("accepted steps have a trial point");
            let previous = current.value;
            theta = candidate;
            current = eval;
            let scale = previous.abs().max(T::min_positive_value());
            if (previous - current.value) / scale < config.stagnation_tolerance {
                stagnant += 1;
            } else {
                stagnant = 0;
            }
            stop = stagnant >= config.stagnation_window;
        }

        trace.push(TrustRegionState {
            iteration,
            iterate: theta.clone(),
            objective_value: current.value,
            gradient_norm: norm(&current.gradient),
            radius: ran_with,
            last_ratio: ratio,
            step_norm,
            predicted_reduction: predicted,
            actual_reduction: actual,
            accepted,
        });

        if stop {
            break Termination::ObjectiveStagnation;
        }
    };

    Ok(SolveReport {
        final_params: theta,
        final_objective: current.value,
        final_gradient: current.gradient,
        iterations: iteration,
        termination,
        trace,
    })
}
