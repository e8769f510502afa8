//! Additive observation noise: white Gaussian and pink (1/f) sequences, and
//! the measurement sets built by corrupting a clean trajectory.

use std::io::{self, BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::{read_grid_csv, write_grid_csv, Trajectory, TrajectoryError};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    WhiteGaussian,
    Pink,
}

impl NoiseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseKind::WhiteGaussian => "white_gaussian",
            NoiseKind::Pink => "pink",
        }
    }

    pub(crate) fn tag(self) -> u64 {
        match self {
            NoiseKind::WhiteGaussian => 1,
            NoiseKind::Pink => 2,
        }
    }
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "white" | "white_gaussian" | "gaussian" => Ok(NoiseKind::WhiteGaussian),
            "pink" => Ok(NoiseKind::Pink),
            other => Err(format!("unknown noise kind `{other}` (expected white or pink)")),
        }
    }
}

/// Noise family, absolute standard deviation, and seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub level: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, level: f64, seed: u64) -> Result<Self, NoiseError> {
        if !(level >= 0.0) || !level.is_finite() {
            return Err(NoiseError::InvalidLevel(level));
        }
        Ok(Self { kind, level, seed })
    }

    pub fn white(level: f64, seed: u64) -> Result<Self, NoiseError> {
        Self::new(NoiseKind::WhiteGaussian, level, seed)
    }

    pub fn pink(level: f64, seed: u64) -> Result<Self, NoiseError> {
        Self::new(NoiseKind::Pink, level, seed)
    }

    /// A sequence of the configured kind.
    pub fn sequence<T: Real>(&self, count: usize) -> Vec<T> {
        match self.kind {
            NoiseKind::WhiteGaussian => white_sequence(self.level, self.seed, count),
            NoiseKind::Pink => pink_sequence(self.level, self.seed, count),
        }
    }

    /// Settings for an individual stream, e.g. one state component.
    pub fn substream(&self, index: u64) -> Self {
        Self {
            seed: mix_seed(self.seed, &[0x5eed_c0de, index]),
            ..*self
        }
    }
}

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("noise level must be finite and non-negative, got {0}")]
    InvalidLevel(f64),
    #[error("measurement weights must be strictly positive (row {row}, column {col})")]
    NonPositiveWeight { row: usize, col: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error("metadata: {0}")]
    Metadata(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed by folding each word into the base through the
/// SplitMix64 finalizer: `s ← splitmix64(rotl(s, 23) ⊕ splitmix64(word))`,
/// starting from `s = splitmix64(base)`. The rotation keeps the fold from
/// being symmetric in its arguments.
pub fn mix_seed(base: u64, words: &[u64]) -> u64 {
    words.iter().fold(splitmix64(base), |s, &w| {
        splitmix64(s.rotate_left(23) ^ splitmix64(w))
    })
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// I.i.d. zero-mean Gaussian samples with standard deviation `level`.
pub fn white_sequence<T: Real>(level: f64, seed: u64, count: usize) -> Vec<T> {
    if level == 0.0 {
        return vec![T::zero(); count];
    }
    let mut rng = rng(seed);
    (0..count)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            T::lit(level * z)
        })
        .collect()
}

/// Zero-mean 1/f noise with population standard deviation exactly `level`.
///
/// A unit white Gaussian series is transformed to the frequency domain, each
/// bin is scaled by `1/sqrt(f)` (power `1/f`), the DC bin is dropped, and the
/// inverse transform is rescaled to the requested deviation.
pub fn pink_sequence<T: Real>(level: f64, seed: u64, count: usize) -> Vec<T> {
    if level == 0.0 || count < 2 {
        return vec![T::zero(); count];
    }
    let mut rng = rng(seed);
    let mut spectrum: Vec<Complex<f64>> = (0..count)
        .map(|_| Complex::new(StandardNormal.sample(&mut rng), 0.0))
        .collect();

    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(count).process(&mut spectrum);
    spectrum[0] = Complex::new(0.0, 0.0);
    for (k, bin) in spectrum.iter_mut().enumerate().skip(1) {
        let f = k.min(count - k) as f64;
        *bin /= f.sqrt();
    }
    planner.plan_fft_inverse(count).process(&mut spectrum);

    let raw: Vec<f64> = spectrum.iter().map(|c| c.re).collect();
    let n = count as f64;
    let mean = raw.iter().sum::<f64>() / n;
    let std = (raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if std == 0.0 {
        return vec![T::zero(); count];
    }
    let scale = level / std;
    raw.iter().map(|v| T::lit((v - mean) * scale)).collect()
}

/// Noisy observations `η_ij` with weights `σ_ij` on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet<T> {
    times: Vec<T>,
    observations: Vec<Vec<T>>,
    weights: Vec<Vec<T>>,
    model_name: String,
    noise: NoiseSpec,
}

/// Sidecar record written next to a measurement CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementMetadata {
    pub model: String,
    pub noise_kind: NoiseKind,
    pub level: f64,
    pub seed: u64,
}

impl<T: Real> MeasurementSet<T> {
    /// Builds a measurement set with unit weights.
    pub fn new(
        times: Vec<T>,
        observations: Vec<Vec<T>>,
        model_name: impl Into<String>,
        noise: NoiseSpec,
    ) -> Result<Self, NoiseError> {
        let weights = observations
            .iter()
            .map(|row| vec![T::one(); row.len()])
            .collect();
        Self::with_weights(times, observations, weights, model_name, noise)
    }

    pub fn with_weights(
        times: Vec<T>,
        observations: Vec<Vec<T>>,
        weights: Vec<Vec<T>>,
        model_name: impl Into<String>,
        noise: NoiseSpec,
    ) -> Result<Self, NoiseError> {
        if times.len() != observations.len() || times.len() != weights.len() {
            return Err(NoiseError::Shape(format!(
                "{} times, {} observation rows, {} weight rows",
                times.len(),
                observations.len(),
                weights.len()
            )));
        }
        let n = observations.first().map_or(0, Vec::len);
        for (row, (obs, w)) in observations.iter().zip(&weights).enumerate() {
            if obs.len() != n || w.len() != n {
                return Err(NoiseError::Shape(format!("row {row} is ragged")));
            }
            if let Some(col) = w.iter().position(|&v| !(v > T::zero())) {
                return Err(NoiseError::NonPositiveWeight { row, col });
            }
        }
        Ok(Self {
            times,
            observations,
            weights,
            model_name: model_name.into(),
            noise,
        })
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn observations(&self) -> &[Vec<T>] {
        &self.observations
    }

    pub fn weights(&self) -> &[Vec<T>] {
        &self.weights
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.observations.first().map_or(0, Vec::len)
    }

    /// Replaces every weight with `weight`.
    pub fn with_uniform_weight(mut self, weight: T) -> Result<Self, NoiseError> {
        if !(weight > T::zero()) {
            return Err(NoiseError::NonPositiveWeight { row: 0, col: 0 });
        }
        for row in &mut self.weights {
            row.iter_mut().for_each(|w| *w = weight);
        }
        Ok(self)
    }

    /// The first `len` samples.
    pub fn prefix(&self, len: usize) -> Self {
        let len = len.min(self.len());
        Self {
            times: self.times[..len].to_vec(),
            observations: self.observations[..len].to_vec(),
            weights: self.weights[..len].to_vec(),
            model_name: self.model_name.clone(),
            noise: self.noise,
        }
    }

    /// Observations viewed as a trajectory on the same grid.
    pub fn as_trajectory(&self) -> Result<Trajectory<T>, TrajectoryError> {
        Trajectory::new(
            self.times.clone(),
            self.observations.clone(),
            self.model_name.clone(),
        )
    }

    pub fn metadata(&self) -> MeasurementMetadata {
        MeasurementMetadata {
            model: self.model_name.clone(),
            noise_kind: self.noise.kind,
            level: self.noise.level,
            seed: self.noise.seed,
        }
    }

    /// Writes the `t,y1,...,yn` table.
    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        write_grid_csv(out, "y", &self.times, &self.observations)
    }

    pub fn write_metadata<W: Write>(&self, out: W) -> Result<(), NoiseError> {
        serde_json::to_writer_pretty(out, &self.metadata())?;
        Ok(())
    }

    /// Reads a table and its sidecar back; weights are restored as ones.
    pub fn read<R: BufRead, M: io::Read>(csv: R, metadata: M) -> Result<Self, NoiseError> {
        let meta: MeasurementMetadata = serde_json::from_reader(metadata)?;
        let (times, observations) = read_grid_csv(csv)?;
        let noise = NoiseSpec::new(meta.noise_kind, meta.level, meta.seed)?;
        Self::new(times, observations, meta.model, noise)
    }
}

/// Adds independent noise streams to every state component of `trajectory`.
pub fn corrupt<T: Real>(trajectory: &Trajectory<T>, spec: &NoiseSpec) -> MeasurementSet<T> {
    let k = trajectory.len();
    let n = trajectory.state_dim();
    let streams: Vec<Vec<T>> = (0..n)
        .map(|i| spec.substream(i as u64).sequence(k))
        .collect();
    let observations = trajectory
        .states()
        .iter()
        .enumerate()
        .map(|(j, s)| s.iter().zip(&streams).map(|(&x, e)| x + e[j]).collect())
        .collect();
    MeasurementSet {
        times: trajectory.times().to_vec(),
        observations,
        weights: vec![vec![T::one(); n]; k],
        model_name: trajectory.model_name().to_string(),
        noise: *spec,
    }
}
