//! Weighted least-squares misfit between a model trajectory and measurements.
//!
//! `J(θ) = Σ_ij ((η_ij − x_i(t_j; θ)) / σ_ij)²`, with gradient `2Jᵀr` and
//! Gauss-Newton Hessian `2JᵀJ` built from a forward-difference residual
//! Jacobian.

use thiserror::Error;

use crate::dynamics::{DynamicsError, ModelSpec};
use crate::integrator::{grid_len, integrate, IntegrateError, Trajectory};
use crate::linalg::Matrix;
use crate::noise::MeasurementSet;
use crate::scalar::Real;
use crate::trustregion::{Evaluation, Objective};

/// Relative (and absolute floor) perturbation for the finite-difference Jacobian.
pub const JACOBIAN_STEP: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error(transparent)]
    Dimension(#[from] DynamicsError),
    #[error("integration failed: {0}")]
    Integration(#[from] IntegrateError),
    #[error("measurement grid does not match the integration grid: {0}")]
    GridMismatch(String),
}

/// Binds the misfit to a model, its data and the fixed initial condition.
#[derive(Debug, Clone)]
pub struct ObjectiveContext<T> {
    model: ModelSpec<T>,
    measurements: MeasurementSet<T>,
    initial_state: Vec<T>,
    integration_step: T,
}

/// Everything computed at one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEval<T> {
    pub value: T,
    /// Weighted residuals, row-major by time then component.
    pub residuals: Vec<T>,
    /// `∂r/∂θ`, one row per residual.
    pub jacobian: Matrix<T>,
    pub gradient: Vec<T>,
    pub gauss_newton_hessian: Matrix<T>,
}

impl<T: Real> ObjectiveContext<T> {
    pub fn new(
        model: ModelSpec<T>,
        measurements: MeasurementSet<T>,
        initial_state: Vec<T>,
        integration_step: T,
    ) -> Result<Self, ObjectiveError> {
        model.check_state(&initial_state)?;
        if measurements.state_dim() != model.state_dim {
            return Err(ObjectiveError::GridMismatch(format!(
                "measurements have {} components, model `{}` has {}",
                measurements.state_dim(),
                model.name,
                model.state_dim
            )));
        }
        let times = measurements.times();
        if times.len() < 2 {
            return Err(ObjectiveError::GridMismatch("need at least two samples".into()));
        }
        let (t0, t1) = (times[0], times[times.len() - 1]);
        let k = grid_len(t0, t1, integration_step);
        if k != times.len() {
            return Err(ObjectiveError::GridMismatch(format!(
                "{} samples but the grid has {k} points",
                times.len()
            )));
        }
        let tol = T::lit(1e-9) * (T::one() + t1.abs().max(t0.abs()));
        for (j, &t) in times.iter().enumerate() {
            let expect = t0 + T::from_count(j) * integration_step;
            if (t - expect).abs() > tol {
                return Err(ObjectiveError::GridMismatch(format!(
                    "sample {j} at t = {t}, grid expects {expect}"
                )));
            }
        }
        Ok(Self {
            model,
            measurements,
            initial_state,
            integration_step,
        })
    }

    pub fn model(&self) -> &ModelSpec<T> {
        &self.model
    }

    pub fn measurements(&self) -> &MeasurementSet<T> {
        &self.measurements
    }

    pub fn initial_state(&self) -> &[T] {
        &self.initial_state
    }

    pub fn integration_step(&self) -> T {
        self.integration_step
    }

    pub fn residual_count(&self) -> usize {
        self.measurements.len() * self.model.state_dim
    }

    /// Model trajectory under `params` on the measurement grid.
    pub fn simulate(&self, params: &[T]) -> Result<Trajectory<T>, ObjectiveError> {
        self.model.check_params(params)?;
        let times = self.measurements.times();
        Ok(integrate(
            &self.model,
            params,
            &self.initial_state,
            times[0],
            times[times.len() - 1],
            self.integration_step,
        )?)
    }

    fn residuals_of(&self, traj: &Trajectory<T>) -> Vec<T> {
        let obs = self.measurements.observations();
        let w = self.measurements.weights();
        traj.states()
            .iter()
            .enumerate()
            .flat_map(|(j, x)| {
                x.iter()
                    .enumerate()
                    .map(move |(i, &xi)| (obs[j][i] - xi) / w[j][i])
            })
            .collect()
    }

    pub fn residuals(&self, params: &[T]) -> Result<Vec<T>, ObjectiveError> {
        Ok(self.residuals_of(&self.simulate(params)?))
    }

    /// `J(θ)` alone, one integration.
    pub fn value(&self, params: &[T]) -> Result<T, ObjectiveError> {
        Ok(self.residuals(params)?.iter().map(|&r| r * r).sum())
    }

    /// Value, residuals, Jacobian, gradient and Gauss-Newton Hessian.
    pub fn evaluate(&self, params: &[T]) -> Result<ObjectiveEval<T>, ObjectiveError> {
        let residuals = self.residuals(params)?;
        let m = residuals.len();
        let p = params.len();
        let mut jacobian = Matrix::zeros(m, p);
        let floor = T::lit(JACOBIAN_STEP);
        for c in 0..p {
            let h = floor.max(floor * params[c].abs());
            let mut shifted = params.to_vec();
            shifted[c] += h;
            // Use the representable increment so the quotient is consistent.
            let h = shifted[c] - params[c];
            let perturbed = self.residuals(&shifted)?;
            for (row, (&rp, &r0)) in perturbed.iter().zip(&residuals).enumerate() {
                jacobian[(row, c)] = (rp - r0) / h;
            }
        }
        let two = T::lit(2.0);
        let value = residuals.iter().map(|&r| r * r).sum();
        let gradient = jacobian.tr_mul_vec(&residuals).iter().map(|&g| two * g).collect();
        let gauss_newton_hessian = jacobian.gram().scaled(two);
        Ok(ObjectiveEval {
            value,
            residuals,
            jacobian,
            gradient,
            gauss_newton_hessian,
        })
    }
}

impl<T: Real> From<ObjectiveEval<T>> for Evaluation<T> {
    fn from(e: ObjectiveEval<T>) -> Self {
        Evaluation {
            value: e.value,
            gradient: e.gradient,
            hessian: e.gauss_newton_hessian,
        }
    }
}

impl<T: Real> Objective<T> for ObjectiveContext<T> {
    type Error = ObjectiveError;

    fn evaluate(&self, params: &[T]) -> Result<Evaluation<T>, ObjectiveError> {
        ObjectiveContext::evaluate(self, params).map(Into::into)
    }
}

/// Root mean squared difference over all `k·n` entries of two trajectories
/// on the same grid.
pub fn rmse<T: Real>(predicted: &Trajectory<T>, truth: &Trajectory<T>) -> Result<T, ObjectiveError> {
    if predicted.len() != truth.len() || predicted.state_dim() != truth.state_dim() {
        return Err(ObjectiveError::GridMismatch(format!(
            "{}x{} vs {}x{}",
            predicted.len(),
            predicted.state_dim(),
            truth.len(),
            truth.state_dim()
        )));
    }
    let tol = T::lit(1e-9);
    if let Some(j) = predicted
        .times()
        .iter()
        .zip(truth.times())
        .position(|(a, b)| (*a - *b).abs() > tol * (T::one() + b.abs()))
    {
        return Err(ObjectiveError::GridMismatch(format!("times differ at sample {j}")));
    }
    let sq: T = predicted
        .states()
        .iter()
        .flatten()
        .zip(truth.states().iter().flatten())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    Ok((sq / T::from_count(predicted.len() * predicted.state_dim())).sqrt())
}
