//! Benchmark dynamical systems and the model registry.
//!
//! Every model is autonomous; the time argument is carried through the
//! right-hand-side signature so that integrators stay model-agnostic.

use thiserror::Error;

use crate::scalar::Real;

/// Right-hand side `dx/dt = F(x, t, θ)`, written into `out`.
pub type RhsFn<T> = fn(state: &[T], time: T, params: &[T], out: &mut [T]);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("{what} has length {got}, model `{model}` expects {expected}")]
    DimensionMismatch {
        model: String,
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

/// A named dynamical system together with its reference configuration.
#[derive(Debug, Clone)]
pub struct ModelSpec<T> {
    pub name: &'static str,
    pub state_dim: usize,
    pub param_dim: usize,
    pub param_names: Vec<&'static str>,
    pub rhs: RhsFn<T>,
    pub true_params: Vec<T>,
    pub default_initial_state: Vec<T>,
    pub default_time_span: (T, T),
    pub default_step: T,
}

impl<T: Real> ModelSpec<T> {
    /// Builds an ad hoc model, used for test systems outside the registry.
    /// Time span defaults to `[0, 1]` with step `0.01`.
    pub fn custom(
        name: &'static str,
        rhs: RhsFn<T>,
        true_params: Vec<T>,
        initial_state: Vec<T>,
    ) -> Self {
        Self {
            name,
            state_dim: initial_state.len(),
            param_dim: true_params.len(),
            param_names: vec!["p"; true_params.len()],
            rhs,
            true_params,
            default_initial_state: initial_state,
            default_time_span: (T::zero(), T::one()),
            default_step: T::lit(0.01),
        }
    }

    pub fn check_state(&self, state: &[T]) -> Result<(), DynamicsError> {
        self.check("state", self.state_dim, state.len())
    }

    pub fn check_params(&self, params: &[T]) -> Result<(), DynamicsError> {
        self.check("params", self.param_dim, params.len())
    }

    fn check(&self, what: &'static str, expected: usize, got: usize) -> Result<(), DynamicsError> {
        if expected == got {
            Ok(())
        } else {
            Err(DynamicsError::DimensionMismatch {
                model: self.name.to_string(),
                what,
                expected,
                got,
            })
        }
    }

    /// Evaluates `F(state, time, params)`.
    pub fn eval_rhs(&self, state: &[T], time: T, params: &[T]) -> Result<Vec<T>, DynamicsError> {
        self.check_state(state)?;
        self.check_params(params)?;
        let mut out = vec![T::zero(); self.state_dim];
        (self.rhs)(state, time, params, &mut out);
        Ok(out)
    }
}

pub const LINEAR_OSCILLATOR_2D: &str = "linear_oscillator_2d";
pub const CUBIC_OSCILLATOR_2D: &str = "cubic_oscillator_2d";
pub const LINEAR_3D: &str = "linear_3d";
pub const VAN_DER_POL: &str = "van_der_pol";
pub const LORENZ: &str = "lorenz";

pub const MODEL_NAMES: [&str; 5] = [
    LINEAR_OSCILLATOR_2D,
    CUBIC_OSCILLATOR_2D,
    LINEAR_3D,
    VAN_DER_POL,
    LORENZ,
];

/// dx/dt = a x + b y, dy/dt = c x + d y
pub fn linear_oscillator_rhs<T: Real>(x: &[T], _t: T, p: &[T], out: &mut [T]) {
    out[0] = p[0] * x[0] + p[1] * x[1];
    out[1] = p[2] * x[0] + p[3] * x[1];
}

/// dx/dt = a x³ + b y³, dy/dt = c x³ + d y³
pub fn cubic_oscillator_rhs<T: Real>(x: &[T], _t: T, p: &[T], out: &mut [T]) {
    let x3 = x[0] * x[0] * x[0];
    let y3 = x[1] * x[1] * x[1];
    out[0] = p[0] * x3 + p[1] * y3;
    out[1] = p[2] * x3 + p[3] * y3;
}

/// Planar rotation-decay block in (x, y) plus a decoupled decay in z.
pub fn linear_3d_rhs<T: Real>(x: &[T], _t: T, p: &[T], out: &mut [T]) {
    out[0] = p[0] * x[0] + p[1] * x[1];
    out[1] = p[2] * x[0] + p[3] * x[1];
    out[2] = p[4] * x[2];
}

/// First-order form of `x'' - μ(1 - x²)x' + x = 0`.
pub fn van_der_pol_rhs<T: Real>(x: &[T], _t: T, p: &[T], out: &mut [T]) {
    out[0] = x[1];
    out[1] = p[0] * (T::one() - x[0] * x[0]) * x[1] - x[0];
}

/// Params are (σ, ρ, β).
pub fn lorenz_rhs<T: Real>(x: &[T], _t: T, p: &[T], out: &mut [T]) {
    out[0] = p[0] * (x[1] - x[0]);
    out[1] = x[0] * (p[1] - x[2]) - x[1];
    out[2] = x[0] * x[1] - p[2] * x[2];
}

fn benchmark<T: Real>(
    name: &'static str,
    rhs: RhsFn<T>,
    param_names: &[&'static str],
    true_params: &[f64],
    initial_state: &[f64],
) -> ModelSpec<T> {
    ModelSpec {
        name,
        state_dim: initial_state.len(),
        param_dim: true_params.len(),
        param_names: param_names.to_vec(),
        rhs,
        true_params: true_params.iter().map(|&v| T::lit(v)).collect(),
        default_initial_state: initial_state.iter().map(|&v| T::lit(v)).collect(),
        default_time_span: (T::zero(), T::lit(25.0)),
        default_step: T::lit(0.01),
    }
}

/// The five benchmark systems, in a fixed order.
pub fn registry<T: Real>() -> Vec<ModelSpec<T>> {
    vec![
        benchmark(
            LINEAR_OSCILLATOR_2D,
            linear_oscillator_rhs::<T>,
            &["a", "b", "c", "d"],
            &[-0.1, 2.0, -2.0, -0.1],
            &[2.0, 0.0],
        ),
        benchmark(
            CUBIC_OSCILLATOR_2D,
            cubic_oscillator_rhs::<T>,
            &["a", "b", "c", "d"],
            &[-0.1, 2.0, -2.0, -0.1],
            &[2.0, 0.0],
        ),
        benchmark(
            LINEAR_3D,
            linear_3d_rhs::<T>,
            &["p1", "p2", "p3", "p4", "p5"],
            &[-0.1, -2.0, 2.0, -0.1, -0.3],
            &[0.0, 2.0, 1.0],
        ),
        benchmark(VAN_DER_POL, van_der_pol_rhs::<T>, &["mu"], &[1.5], &[1.0, 0.0]),
        benchmark(
            LORENZ,
            lorenz_rhs::<T>,
            &["sigma", "rho", "beta"],
            &[10.0, 28.0, 8.0 / 3.0],
            &[-8.0, 7.0, 27.0],
        ),
    ]
}

/// Looks up a registered model by its stable identifier.
pub fn find_model<T: Real>(name: &str) -> Result<ModelSpec<T>, DynamicsError> {
    registry()
        .into_iter()
        .find(|m| m.name == name)
        .ok_or_else(|| DynamicsError::UnknownModel(name.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model(name: &str) -> ModelSpec<f64> {
        find_model(name).unwrap()
    }

    #[test]
    fn registry_has_the_five_systems() {
        let reg = registry::<f64>();
        let names: Vec<_> = reg.iter().map(|m| m.name).collect();
        assert_eq!(names, MODEL_NAMES);
        for m in &reg {
            assert_eq!(m.true_params.len(), m.param_dim);
            assert_eq!(m.param_names.len(), m.param_dim);
            assert_eq!(m.default_initial_state.len(), m.state_dim);
            assert_eq!(m.default_time_span, (0.0, 25.0));
            assert_eq!(m.default_step, 0.01);
        }
    }

    #[test]
    fn reference_configurations() {
        let lin = model(LINEAR_OSCILLATOR_2D);
        assert_eq!(lin.true_params, vec![-0.1, 2.0, -2.0, -0.1]);
        assert_eq!(lin.default_initial_state, vec![2.0, 0.0]);

        let lorenz = model(LORENZ);
        assert_eq!(lorenz.true_params, vec![10.0, 28.0, 8.0 / 3.0]);
        assert_eq!(lorenz.default_initial_state, vec![-8.0, 7.0, 27.0]);

        let vdp = model(VAN_DER_POL);
        assert_eq!(vdp.true_params, vec![1.5]);
        assert_eq!(vdp.default_initial_state, vec![1.0, 0.0]);
        assert_eq!(vdp.default_step, 0.01);

        let l3 = model(LINEAR_3D);
        assert_eq!(l3.true_params, vec![-0.1, -2.0, 2.0, -0.1, -0.3]);
        assert_eq!(l3.default_initial_state, vec![0.0, 2.0, 1.0]);

        let cubic = model(CUBIC_OSCILLATOR_2D);
        assert_eq!(cubic.true_params, vec![-0.1, 2.0, -2.0, -0.1]);
    }

    #[test]
    fn unknown_model_is_an_error() {
        assert_eq!(
            find_model::<f64>("duffing").unwrap_err(),
            DynamicsError::UnknownModel("duffing".into())
        );
    }

    #[test]
    fn hand_evaluated_right_hand_sides() {
        let lorenz = model(LORENZ);
        let p = [10.0, 28.0, 8.0 / 3.0];
        assert_eq!(lorenz.eval_rhs(&[0.0; 3], 0.0, &p).unwrap(), vec![0.0; 3]);
        assert_eq!(
            lorenz.eval_rhs(&[1.0; 3], 0.0, &p).unwrap(),
            vec![0.0, 26.0, 1.0 - 8.0 / 3.0]
        );

        let vdp = model(VAN_DER_POL);
        assert_eq!(vdp.eval_rhs(&[1.0, 0.0], 0.0, &[1.5]).unwrap(), vec![0.0, -1.0]);

        let cubic = model(CUBIC_OSCILLATOR_2D);
        assert_eq!(
            cubic.eval_rhs(&[0.0, 0.0], 0.0, &[3.0, -1.0, 7.0, 0.5]).unwrap(),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn dimension_mismatch() {
        let lorenz = model(LORENZ);
        let err = lorenz.eval_rhs(&[1.0, 2.0], 0.0, &[10.0, 28.0, 2.0]).unwrap_err();
        assert!(matches!(
            err,
            DynamicsError::DimensionMismatch { what: "state", expected: 3, got: 2, .. }
        ));
        let err = lorenz.eval_rhs(&[1.0, 2.0, 3.0], 0.0, &[10.0]).unwrap_err();
        assert!(matches!(
            err,
            DynamicsError::DimensionMismatch { what: "params", expected: 3, got: 1, .. }
        ));
    }

    #[test]
    fn single_precision_registry() {
        let vdp = find_model::<f32>(VAN_DER_POL).unwrap();
        assert_eq!(vdp.eval_rhs(&[1.0, 0.0], 0.0, &[1.5]).unwrap(), vec![0.0f32, -1.0]);
    }

    #[test]
    fn lorenz_jacobian_trace_is_constant() {
        let lorenz = model(LORENZ);
        let p = [10.0, 28.0, 8.0 / 3.0];
        let expected = -(p[0] + 1.0 + p[2]);
        let h = 1e-6;
        for x in [[1.0, 1.0, 1.0], [-8.0, 7.0, 27.0], [15.0, -3.0, 40.0], [0.0, 0.0, 0.0]] {
            let mut trace = 0.0;
            for i in 0..3 {
                let mut up = x;
                let mut dn = x;
                up[i] += h;
                dn[i] -= h;
                let fu = lorenz.eval_rhs(&up, 0.0, &p).unwrap();
                let fd = lorenz.eval_rhs(&dn, 0.0, &p).unwrap();
                trace += (fu[i] - fd[i]) / (2.0 * h);
            }
            assert!((trace - expected).abs() < 1e-6, "trace {trace} at {x:?}");
        }
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
    }

    proptest! {
        #[test]
        fn linear_models_are_homogeneous(
            alpha in -5.0f64..5.0,
            x in prop::collection::vec(-10.0f64..10.0, 3),
        ) {
            for name in [LINEAR_OSCILLATOR_2D, LINEAR_3D] {
                let m = model(name);
                let s = &x[..m.state_dim];
                let scaled: Vec<f64> = s.iter().map(|v| alpha * v).collect();
                let f = m.eval_rhs(s, 0.0, &m.true_params).unwrap();
                let fs = m.eval_rhs(&scaled, 0.0, &m.true_params).unwrap();
                let expect: Vec<f64> = f.iter().map(|v| alpha * v).collect();
                prop_assert!(close(&fs, &expect, 1e-14));
            }
        }

        #[test]
        fn cubic_model_is_cubic_homogeneous(
            alpha in -3.0f64..3.0,
            x in prop::collection::vec(-4.0f64..4.0, 2),
        ) {
            let m = model(CUBIC_OSCILLATOR_2D);
            let scaled: Vec<f64> = x.iter().map(|v| alpha * v).collect();
            let f = m.eval_rhs(&x, 0.0, &m.true_params).unwrap();
            let fs = m.eval_rhs(&scaled, 0.0, &m.true_params).unwrap();
            let expect: Vec<f64> = f.iter().map(|v| alpha.powi(3) * v).collect();
            prop_assert!(close(&fs, &expect, 1e-13));
        }

        #[test]
        fn van_der_pol_without_damping_is_harmonic(x1 in -5.0f64..5.0, x2 in -5.0f64..5.0) {
            let m = model(VAN_DER_POL);
            prop_assert_eq!(m.eval_rhs(&[x1, x2], 0.0, &[0.0]).unwrap(), vec![x2, -x1]);
        }

        #[test]
        fn rhs_is_deterministic(x in prop::collection::vec(-20.0f64..20.0, 3), t in 0.0f64..25.0) {
            for m in registry::<f64>() {
                let s = &x[..m.state_dim];
                let a = m.eval_rhs(s, t, &m.true_params).unwrap();
                let b = m.eval_rhs(s, t, &m.true_params).unwrap();
                prop_assert_eq!(a.len(), m.state_dim);
                prop_assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                                b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            }
        }
    }
}
