//! Uniform linear array (ULA) signal model.
//!
//! Snapshots follow `X = A·S + N`: `A` stacks one steering vector per source,
//! `S` holds the source waveforms and `N` is circular complex white Gaussian
//! noise. Element `m` of the steering vector for angle `θ` is
//! `exp(j·2π·p_m·g(θ)/λ)` where `p_m` is the element position (`m·d` for a
//! uniform array) and `g` is `sin` or `cos` depending on the angle convention.

use std::f64::consts::{FRAC_PI_2, PI};

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{DoaError, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Sample rate used by the sinusoid source model, as a multiple of the carrier.
pub const SINUSOID_OVERSAMPLING: f64 = 10.0;

const ANGLE_SLACK: f64 = 1e-12;

/// Which trigonometric function maps the arrival angle to the inter-element
/// phase progression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AngleConvention {
    /// `τ(θ) = d·cos(θ)/λ`. Angles `θ` and `-θ` produce the same response.
    Cos,
    /// `τ(θ) = d·sin(θ)/λ`, angle measured from broadside.
    #[default]
    Sin,
}

impl AngleConvention {
    #[inline]
    pub fn apply(self, angle: f64) -> f64 {
        match self {
            AngleConvention::Cos => angle.cos(),
            AngleConvention::Sin => angle.sin(),
        }
    }
}

/// Physical description of the receiving array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub num_antennas: usize,
    /// Element spacing `d` in meters.
    pub element_spacing: f64,
    /// Carrier frequency in Hz.
    pub carrier_freq: f64,
    /// Overrides the wavelength derived from the carrier, in meters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelength: Option<f64>,
    /// Number of time samples per snapshot matrix.
    pub snapshot_len: usize,
    #[serde(default)]
    pub angle_convention: AngleConvention,
}

impl ArrayConfig {
    pub fn new(
        num_antennas: usize,
        element_spacing: f64,
        carrier_freq: f64,
        snapshot_len: usize,
    ) -> Self {
        ArrayConfig {
            num_antennas,
            element_spacing,
            carrier_freq,
            wavelength: None,
            snapshot_len,
            angle_convention: AngleConvention::Sin,
        }
    }

    /// Array with elements spaced half a carrier wavelength apart.
    pub fn half_wavelength(num_antennas: usize, carrier_freq: f64, snapshot_len: usize) -> Self {
        let spacing = 0.5 * SPEED_OF_LIGHT / carrier_freq;
        Self::new(num_antennas, spacing, carrier_freq, snapshot_len)
    }

    pub fn with_convention(mut self, convention: AngleConvention) -> Self {
        self.angle_convention = convention;
        self
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
            .unwrap_or(SPEED_OF_LIGHT / self.carrier_freq)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_antennas < 2 {
            return Err(DoaError::Config(format!(
                "at least 2 antennas required, got {}",
                self.num_antennas
            )));
        }
        if !(self.element_spacing > 0.0 && self.element_spacing.is_finite()) {
            return Err(DoaError::Config(format!(
                "element spacing must be positive, got {}",
                self.element_spacing
            )));
        }
        if self.snapshot_len == 0 {
            return Err(DoaError::Config("snapshot length must be at least 1".into()));
        }
        let lambda = self.wavelength();
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(DoaError::Config(format!(
                "wavelength must be positive, got {lambda}"
            )));
        }
        Ok(())
    }

    /// Nominal element positions `m·d`.
    pub fn nominal_positions(&self) -> Vec<f64> {
        (0..self.num_antennas)
            .map(|m| m as f64 * self.element_spacing)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    /// Independent circular complex Gaussian symbols per source and sample.
    #[default]
    ComplexGaussian,
    /// Real carrier tone `sqrt(2P)·sin(2π·f_c·t + φ)` with a random phase per source.
    /// All sources share the frequency and are therefore fully coherent.
    Sinusoid,
}

/// Sources impinging on the array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceScene {
    /// Arrival angles in radians, each within `[-π/2, π/2]`.
    pub angles: Vec<f64>,
    /// Per-source power `P_c` in watts.
    pub source_power: f64,
    /// Per-source power over per-antenna noise variance, in dB. `+∞` disables noise.
    pub snr_db: f64,
    #[serde(default)]
    pub signal_kind: SignalKind,
}

impl SourceScene {
    pub fn new(angles: Vec<f64>, snr_db: f64) -> Self {
        SourceScene {
            angles,
            source_power: 1.0,
            snr_db,
            signal_kind: SignalKind::ComplexGaussian,
        }
    }

    pub fn from_degrees(angles_deg: &[f64], snr_db: f64) -> Self {
        Self::new(angles_deg.iter().map(|a| a.to_radians()).collect(), snr_db)
    }

    pub fn with_signal_kind(mut self, kind: SignalKind) -> Self {
        self.signal_kind = kind;
        self
    }

    /// Noise variance `δ² = P_c·10^(−snr/10)`.
    pub fn noise_variance(&self) -> f64 {
        if self.snr_db == f64::INFINITY {
            0.0
        } else {
            self.source_power * 10f64.powf(-self.snr_db / 10.0)
        }
    }

    pub fn validate_for(&self, config: &ArrayConfig) -> Result<()> {
        if self.angles.is_empty() {
            return Err(DoaError::Config("scene has no sources".into()));
        }
        if self.angles.len() >= config.num_antennas {
            return Err(DoaError::Config(format!(
                "{} sources need more than {} antennas",
                self.angles.len(),
                config.num_antennas
            )));
        }
        for &angle in &self.angles {
            check_angle(angle)?;
        }
        if !(self.source_power > 0.0 && self.source_power.is_finite()) {
            return Err(DoaError::Config(format!(
                "source power must be positive, got {}",
                self.source_power
            )));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(DoaError::Config(format!("invalid snr {}", self.snr_db)));
        }
        Ok(())
    }
}

/// Per-element position offsets for a nonuniform array: `p_m = m·d + ε_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacingPerturbation {
    /// Offset of each element in meters.
    pub epsilon: Vec<f64>,
}

impl SpacingPerturbation {
    pub fn zero(num_antennas: usize) -> Self {
        SpacingPerturbation {
            epsilon: vec![0.0; num_antennas],
        }
    }

    /// Draws every `ε_m` uniformly from `(-f·d, f·d)`.
    pub fn uniform(config: &ArrayConfig, max_fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..0.5).contains(&max_fraction) {
            return Err(DoaError::Config(format!(
                "perturbation fraction must lie in [0, 0.5), got {max_fraction}"
            )));
        }
        let bound = max_fraction * config.element_spacing;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let epsilon = if bound == 0.0 {
            vec![0.0; config.num_antennas]
        } else {
            let dist = Uniform::new(-bound, bound)
                .map_err(|e| DoaError::Config(format!("perturbation range: {e}")))?;
            (0..config.num_antennas).map(|_| dist.sample(&mut rng)).collect()
        };
        Ok(SpacingPerturbation { epsilon })
    }

    /// Perturbed element positions, checked to be strictly increasing.
    pub fn positions(&self, config: &ArrayConfig) -> Result<Vec<f64>> {
        if self.epsilon.len() != config.num_antennas {
            return Err(DoaError::Shape(format!(
                "perturbation has {} entries for {} antennas",
                self.epsilon.len(),
                config.num_antennas
            )));
        }
        let positions: Vec<f64> = config
            .nominal_positions()
            .iter()
            .zip(&self.epsilon)
            .map(|(p, e)| p + e)
            .collect();
        if positions.windows(2).any(|w| w[1] <= w[0]) {
            return Err(DoaError::Config(
                "perturbed element positions are not strictly increasing".into(),
            ));
        }
        Ok(positions)
    }
}

/// Complex received data, one row per antenna and one column per time sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    pub data: Array2<Complex64>,
    pub config: ArrayConfig,
    pub scene: SourceScene,
}

impl SnapshotMatrix {
    pub fn num_antennas(&self) -> usize {
        self.data.nrows()
    }

    pub fn snapshot_len(&self) -> usize {
        self.data.ncols()
    }
}

pub(crate) fn check_angle(angle: f64) -> Result<()> {
    if !(angle.abs() <= FRAC_PI_2 + ANGLE_SLACK) {
        return Err(DoaError::Domain(format!(
            "angle {angle} rad outside [-π/2, π/2]"
        )));
    }
    Ok(())
}

/// Array response for a plane wave from `angle` (radians).
///
/// With `positions` the phase of element `m` uses the given position instead of `m·d`.
pub fn steering_vector(
    config: &ArrayConfig,
    angle: f64,
    positions: Option<&[f64]>,
) -> Result<Vec<Complex64>> {
    check_angle(angle)?;
    let mut out = vec![Complex64::new(0.0, 0.0); config.num_antennas];
    match positions {
        Some(p) => {
            if p.len() != config.num_antennas {
                return Err(DoaError::Shape(format!(
                    "{} positions for {} antennas",
                    p.len(),
                    config.num_antennas
                )));
            }
            fill_steering(config, angle, p, &mut out);
        }
        None => fill_steering(config, angle, &config.nominal_positions(), &mut out),
    }
    Ok(out)
}

/// Writes the steering vector for `angle` into `out` without range checks.
pub(crate) fn fill_steering(
    config: &ArrayConfig,
    angle: f64,
    positions: &[f64],
    out: &mut [Complex64],
) {
    let wavenumber = 2.0 * PI * config.angle_convention.apply(angle) / config.wavelength();
    for (o, &p) in out.iter_mut().zip(positions) {
        *o = Complex64::cis(wavenumber * p);
    }
}

/// Simulates one snapshot matrix. Deterministic for a given `seed`.
pub fn synthesize(
    config: &ArrayConfig,
    scene: &SourceScene,
    perturbation: Option<&SpacingPerturbation>,
    seed: u64,
) -> Result<SnapshotMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    synthesize_with_rng(config, scene, perturbation, &mut rng)
}

/// As [`synthesize`], drawing randomness from a caller-owned generator.
pub fn synthesize_with_rng<R: Rng + ?Sized>(
    config: &ArrayConfig,
    scene: &SourceScene,
    perturbation: Option<&SpacingPerturbation>,
    rng: &mut R,
) -> Result<SnapshotMatrix> {
    config.validate()?;
    scene.validate_for(config)?;

    let m = config.num_antennas;
    let l = config.snapshot_len;
    let positions = match perturbation {
        Some(p) => p.positions(config)?,
        None => config.nominal_positions(),
    };

    let steering: Vec<Vec<Complex64>> = scene
        .angles
        .iter()
        .map(|&angle| {
            let mut a = vec![Complex64::new(0.0, 0.0); m];
            fill_steering(config, angle, &positions, &mut a);
            a
        })
        .collect();

    let sources = source_waveforms(config, scene, rng);

    let mut data = Array2::<Complex64>::zeros((m, l));
    for (a, s) in steering.iter().zip(&sources) {
        for (row, &gain) in a.iter().enumerate() {
            let mut out = data.row_mut(row);
            for (x, &sample) in out.iter_mut().zip(s) {
                *x += gain * sample;
            }
        }
    }

    let noise_var = scene.noise_variance();
    if noise_var > 0.0 {
        let scale = (noise_var / 2.0).sqrt();
        for x in data.iter_mut() {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            *x += Complex64::new(scale * re, scale * im);
        }
    }

    Ok(SnapshotMatrix {
        data,
        config: config.clone(),
        scene: scene.clone(),
    })
}

fn source_waveforms<R: Rng + ?Sized>(
    config: &ArrayConfig,
    scene: &SourceScene,
    rng: &mut R,
) -> Vec<Vec<Complex64>> {
    let l = config.snapshot_len;
    let power = scene.source_power;
    match scene.signal_kind {
        SignalKind::ComplexGaussian => {
            let scale = (power / 2.0).sqrt();
            scene
                .angles
                .iter()
                .map(|_| {
                    (0..l)
                        .map(|_| {
                            let re: f64 = StandardNormal.sample(rng);
                            let im: f64 = StandardNormal.sample(rng);
                            Complex64::new(scale * re, scale * im)
                        })
                        .collect()
                })
                .collect()
        }
        SignalKind::Sinusoid => {
            let amplitude = (2.0 * power).sqrt();
            let step = 2.0 * PI / SINUSOID_OVERSAMPLING;
            scene
                .angles
                .iter()
                .map(|_| {
                    let phase: f64 = rng.random_range(0.0..2.0 * PI);
                    (0..l)
                        .map(|t| Complex64::new(amplitude * (step * t as f64 + phase).sin(), 0.0))
                        .collect()
                })
                .collect()
        }
    }
}
