//! Fixed-step classic Runge-Kutta integration on a uniform time grid.

use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::dynamics::{DynamicsError, ModelSpec};
use crate::scalar::Real;

/// Any state component beyond this magnitude counts as divergence.
pub const DIVERGENCE_BOUND: f64 = 1e8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrateError {
    #[error(transparent)]
    Dimension(#[from] DynamicsError),
    #[error("step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("time span [{t0}, {t1}] must be increasing and cover at least one step")]
    InvalidSpan { t0: f64, t1: f64 },
    #[error("integration diverged at grid index {index} (t = {time})")]
    Diverged { index: usize, time: f64 },
}

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("trajectory needs at least two samples, got {0}")]
    TooShort(usize),
    #[error("{times} time samples but {states} state rows")]
    LengthMismatch { times: usize, states: usize },
    #[error("state row {row} has {got} components, expected {expected}")]
    RaggedRow { row: usize, expected: usize, got: usize },
    #[error("times are not strictly increasing at row {0}")]
    NotIncreasing(usize),
    #[error("malformed CSV at line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Sampled solution `(t_j, x(t_j))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    times: Vec<T>,
    states: Vec<Vec<T>>,
    model_name: String,
}

impl<T: Real> Trajectory<T> {
    pub fn new(
        times: Vec<T>,
        states: Vec<Vec<T>>,
        model_name: impl Into<String>,
    ) -> Result<Self, TrajectoryError> {
        if times.len() != states.len() {
            return Err(TrajectoryError::LengthMismatch {
                times: times.len(),
                states: states.len(),
            });
        }
        if times.len() < 2 {
            return Err(TrajectoryError::TooShort(times.len()));
        }
        let n = states[0].len();
        for (row, s) in states.iter().enumerate() {
            if s.len() != n {
                return Err(TrajectoryError::RaggedRow {
                    row,
                    expected: n,
                    got: s.len(),
                });
            }
        }
        if let Some(j) = (1..times.len()).find(|&j| !(times[j] > times[j - 1])) {
            return Err(TrajectoryError::NotIncreasing(j));
        }
        Ok(Self {
            times,
            states,
            model_name: model_name.into(),
        })
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn states(&self) -> &[Vec<T>] {
        &self.states
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn initial_state(&self) -> &[T] {
        &self.states[0]
    }

    /// Grid spacing, taken from the first interval.
    pub fn step(&self) -> T {
        self.times[1] - self.times[0]
    }

    /// True when consecutive spacings agree with the first to within `tol`.
    pub fn is_uniform(&self, tol: T) -> bool {
        let h = self.step();
        self.times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= tol)
    }

    /// Values of one state component over the grid.
    pub fn component(&self, i: usize) -> Vec<T> {
        self.states.iter().map(|s| s[i]).collect()
    }

    /// Writes `t,x1,...,xn` CSV with 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        write_grid_csv(out, "x", &self.times, &self.states)
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }

    /// Reads a `t,<prefix>1,...` CSV as written by [`Trajectory::write_csv`].
    pub fn read_csv<R: BufRead>(input: R, model_name: impl Into<String>) -> Result<Self, TrajectoryError> {
        let (times, states) = read_grid_csv(input)?;
        Self::new(times, states, model_name)
    }
}

pub(crate) fn write_grid_csv<T: Real, W: Write>(
    out: W,
    prefix: &str,
    times: &[T],
    rows: &[Vec<T>],
) -> io::Result<()> {
    let mut out = io::BufWriter::new(out);
    let n = rows.first().map_or(0, Vec::len);
    write!(out, "t")?;
    for i in 1..=n {
        write!(out, ",{prefix}{i}")?;
    }
    writeln!(out)?;
    for (t, row) in times.iter().zip(rows) {
        write!(out, "{t:.16e}")?;
        for v in row {
            write!(out, ",{v:.16e}")?;
        }
        writeln!(out)?;
    }
    out.flush()
}

pub(crate) fn read_grid_csv<T: Real, R: BufRead>(
    input: R,
) -> Result<(Vec<T>, Vec<Vec<T>>), TrajectoryError> {
    let mut lines = input.lines();
    let header = lines.next().ok_or(TrajectoryError::Csv {
        line: 1,
        reason: "missing header".into(),
    })??;
    let columns: Vec<&str> = header.trim().split(',').collect();
    if columns.first() != Some(&"t") || columns.len() < 2 {
        return Err(TrajectoryError::Csv {
            line: 1,
            reason: format!("unexpected header `{header}`"),
        });
    }
    let width = columns.len();
    let mut times = Vec::new();
    let mut states = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 2;
        let values = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map(T::lit)
                    .map_err(|e| TrajectoryError::Csv {
                        line: lineno,
                        reason: format!("`{f}`: {e}"),
                    })
            })
            .collect::<Result<Vec<T>, _>>()?;
        if values.len() != width {
            return Err(TrajectoryError::Csv {
                line: lineno,
                reason: format!("expected {width} fields, found {}", values.len()),
            });
        }
        times.push(values[0]);
        states.push(values[1..].to_vec());
    }
    Ok((times, states))
}

/// Number of grid points `floor((t1 - t0) / step) + 1`, tolerant of the
/// representation error in decimal steps such as 0.01.
pub fn grid_len<T: Real>(t0: T, t1: T, step: T) -> usize {
    let ratio = ((t1 - t0) / step).as_f64();
    (ratio + 1e-9).floor() as usize + 1
}

/// Integrates `model` under `params` with classic RK4 on the grid
/// `t_j = t0 + j·step`, `j = 0..k-1`.
pub fn integrate<T: Real>(
    model: &ModelSpec<T>,
    params: &[T],
    initial_state: &[T],
    t0: T,
    t1: T,
    step: T,
) -> Result<Trajectory<T>, IntegrateError> {
    model.check_params(params)?;
    model.check_state(initial_state)?;
    if !(step > T::zero()) || !step.is_finite() {
        return Err(IntegrateError::InvalidStep(step.as_f64()));
    }
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(IntegrateError::InvalidSpan {
            t0: t0.as_f64(),
            t1: t1.as_f64(),
        });
    }
    let k = grid_len(t0, t1, step);
    if k < 2 {
        return Err(IntegrateError::InvalidSpan {
            t0: t0.as_f64(),
            t1: t1.as_f64(),
        });
    }

    let n = model.state_dim;
    let bound = T::lit(DIVERGENCE_BOUND);
    let half = T::lit(0.5);
    let sixth = T::one() / T::lit(6.0);
    let rhs = model.rhs;

    let mut times = Vec::with_capacity(k);
    let mut states = Vec::with_capacity(k);
    let mut x = initial_state.to_vec();
    let mut k1 = vec![T::zero(); n];
    let mut k2 = vec![T::zero(); n];
    let mut k3 = vec![T::zero(); n];
    let mut k4 = vec![T::zero(); n];
    let mut tmp = vec![T::zero(); n];

    let healthy = |s: &[T]| s.iter().all(|v| v.is_finite() && v.abs() <= bound);
    if !healthy(&x) {
        return Err(IntegrateError::Diverged {
            index: 0,
            time: t0.as_f64(),
        });
    }
    times.push(t0);
    states.push(x.clone());

    for j in 1..k {
        let t = t0 + T::from_count(j - 1) * step;
        rhs(&x, t, params, &mut k1);
        for i in 0..n {
            tmp[i] = x[i] + half * step * k1[i];
        }
        rhs(&tmp, t + half * step, params, &mut k2);
        for i in 0..n {
            tmp[i] = x[i] + half * step * k2[i];
        }
        rhs(&tmp, t + half * step, params, &mut k3);
        for i in 0..n {
            tmp[i] = x[i] + step * k3[i];
        }
        rhs(&tmp, t + step, params, &mut k4);
        for i in 0..n {
            x[i] += step * sixth * (k1[i] + T::lit(2.0) * (k2[i] + k3[i]) + k4[i]);
        }
        let tj = t0 + T::from_count(j) * step;
        if !healthy(&x) {
            return Err(IntegrateError::Diverged {
                index: j,
                time: tj.as_f64(),
            });
        }
        times.push(tj);
        states.push(x.clone());
    }

    Ok(Trajectory {
        times,
        states,
        model_name: model.name.to_string(),
    })
}
