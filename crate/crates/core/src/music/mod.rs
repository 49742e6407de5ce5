//! MUSIC (MUltiple SIgnal Classification) angle estimation.
//!
//! The sample covariance is eigendecomposed; the eigenvectors of the `M−K`
//! smallest eigenvalues span the noise subspace `U_n`, and the pseudo-spectrum
//! `p(θ) = 1/‖U_nᴴ·a(θ)‖²` peaks where a steering vector is orthogonal to it.
//! Peaks are the strict interior local maxima of `p` on a uniform grid.

mod eigen;

use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use eigen::{eig_hermitian, EigenDecomposition, JACOBI_TOLERANCE, MAX_SWEEPS};

use crate::array_signal::{fill_steering, ArrayConfig, SnapshotMatrix};
use crate::error::{DoaError, Result};
use crate::features::covariance;

/// Pseudo-spectrum sampled on a uniform angle grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumCurve {
    /// Grid angles in degrees, strictly increasing.
    pub grid_deg: Vec<f64>,
    pub values: Vec<f64>,
}

impl SpectrumCurve {
    /// Two-column CSV: `angle_deg,p`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "angle_deg,p")?;
        for (a, p) in self.grid_deg.iter().zip(&self.values) {
            writeln!(out, "{a},{p}")?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Angles picked from a spectrum. `merged` is set when fewer than `k` local
/// maxima existed and the result was padded from the largest grid values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakPick {
    pub angles_deg: Vec<f64>,
    pub merged: bool,
}

/// Grid `-90°, -90°+res, …` up to `90°`.
pub fn angle_grid(resolution_deg: f64) -> Result<Vec<f64>> {
    if !(resolution_deg > 0.0 && resolution_deg.is_finite()) {
        return Err(DoaError::Config(format!(
            "grid resolution must be positive, got {resolution_deg}"
        )));
    }
    let steps = (180.0 / resolution_deg + 1e-9).floor() as usize;
    Ok((0..=steps)
        .map(|i| (i as f64 * resolution_deg - 90.0).min(90.0))
        .collect())
}

/// Precomputed steering vectors for a fixed array and grid. Reusable across
/// many covariance matrices.
#[derive(Debug, Clone)]
pub struct MusicEstimator {
    config: ArrayConfig,
    grid_deg: Vec<f64>,
    /// Row `g` is the steering vector for `grid_deg[g]`.
    steering: Array2<Complex64>,
}

impl MusicEstimator {
    pub fn new(config: &ArrayConfig, resolution_deg: f64) -> Result<Self> {
        config.validate()?;
        let grid_deg = angle_grid(resolution_deg)?;
        let m = config.num_antennas;
        let positions = config.nominal_positions();
        let mut steering = Array2::<Complex64>::zeros((grid_deg.len(), m));
        for (g, &deg) in grid_deg.iter().enumerate() {
            let row = steering.row_mut(g).into_slice().expect("standard layout");
            fill_steering(config, deg.to_radians(), &positions, row);
        }
        Ok(MusicEstimator {
            config: config.clone(),
            grid_deg,
            steering,
        })
    }

    pub fn config(&self) -> &ArrayConfig {
        &self.config
    }

    pub fn grid_deg(&self) -> &[f64] {
        &self.grid_deg
    }

    /// Noise-subspace eigenvectors, one per column.
    fn noise_subspace(&self, r: &Array2<Complex64>, num_sources: usize) -> Result<Array2<Complex64>> {
        let m = self.config.num_antennas;
        if r.dim() != (m, m) {
            return Err(DoaError::Shape(format!(
                "covariance is {:?}, array has {m} antennas",
                r.dim()
            )));
        }
        if num_sources == 0 || num_sources >= m {
            return Err(DoaError::Config(format!(
                "MUSIC needs 1 <= sources < antennas, got {num_sources} with {m} antennas"
            )));
        }
        let eig = eig_hermitian(r)?;
        Ok(eig.vectors.slice(ndarray::s![.., num_sources..]).to_owned())
    }

    pub fn pseudo_spectrum(&self, r: &Array2<Complex64>, num_sources: usize) -> Result<SpectrumCurve> {
        let un = self.noise_subspace(r, num_sources)?;
        let m = self.config.num_antennas;
        let noise_dim = un.ncols();
        // Conjugated transpose of U_n, row-major for the inner loop.
        let mut unh = vec![Complex64::new(0.0, 0.0); noise_dim * m];
        for k in 0..noise_dim {
            for i in 0..m {
                unh[k * m + i] = un[[i, k]].conj();
            }
        }
        let values = self
            .steering
            .rows()
            .into_iter()
            .map(|a| {
                let mut denom = 0.0;
                for k in 0..noise_dim {
                    let row = &unh[k * m..(k + 1) * m];
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (u, x) in row.iter().zip(a.iter()) {
                        acc += u * x;
                    }
                    denom += acc.norm_sqr();
                }
                1.0 / denom.max(f64::MIN_POSITIVE)
            })
            .collect();
        Ok(SpectrumCurve {
            grid_deg: self.grid_deg.clone(),
            values,
        })
    }

    pub fn estimate_covariance(&self, r: &Array2<Complex64>, num_sources: usize) -> Result<PeakPick> {
        let curve = self.pseudo_spectrum(r, num_sources)?;
        pick_peaks(&curve, num_sources)
    }

    pub fn estimate(&self, x: &SnapshotMatrix, num_sources: usize) -> Result<PeakPick> {
        self.estimate_covariance(&covariance(x), num_sources)
    }
}

/// MUSIC pseudo-spectrum of covariance `r` on a `resolution_deg` grid.
pub fn pseudo_spectrum(
    r: &Array2<Complex64>,
    num_sources: usize,
    config: &ArrayConfig,
    resolution_deg: f64,
) -> Result<SpectrumCurve> {
    MusicEstimator::new(config, resolution_deg)?.pseudo_spectrum(r, num_sources)
}

/// Picks the `k` largest strict interior local maxima, returned in ascending angle order.
///
/// Ties between equal values go to the smaller angle. When fewer than `k`
/// maxima exist the remaining slots take the largest unselected grid values
/// and the result is flagged `merged`.
pub fn pick_peaks(curve: &SpectrumCurve, k: usize) -> Result<PeakPick> {
    let n = curve.values.len();
    if n == 0 || curve.grid_deg.len() != n {
        return Err(DoaError::Domain("empty or malformed spectrum".into()));
    }
    if k == 0 {
        return Err(DoaError::Domain("must request at least one peak".into()));
    }
    let p = &curve.values;
    let by_value_desc = |a: &usize, b: &usize| p[*b].total_cmp(&p[*a]).then(a.cmp(b));

    let mut maxima: Vec<usize> = (1..n.saturating_sub(1))
        .filter(|&i| p[i] > p[i - 1] && p[i] > p[i + 1])
        .collect();
    maxima.sort_by(by_value_desc);
    maxima.truncate(k);

    let merged = maxima.len() < k;
    if merged {
        let mut rest: Vec<usize> = (0..n).filter(|i| !maxima.contains(i)).collect();
        rest.sort_by(by_value_desc);
        maxima.extend(rest.into_iter().take(k - maxima.len()));
    }
    let mut angles_deg: Vec<f64> = maxima.iter().map(|&i| curve.grid_deg[i]).collect();
    angles_deg.sort_by(f64::total_cmp);
    Ok(PeakPick { angles_deg, merged })
}

/// Full MUSIC pipeline on a snapshot matrix.
pub fn music_estimate(
    x: &SnapshotMatrix,
    num_sources: usize,
    config: &ArrayConfig,
    resolution_deg: f64,
) -> Result<PeakPick> {
    MusicEstimator::new(config, resolution_deg)?.estimate(x, num_sources)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_signal::{synthesize, SourceScene};

    fn curve(values: &[f64]) -> SpectrumCurve {
        SpectrumCurve {
            grid_deg: (0..values.len()).map(|i| i as f64).collect(),
            values: values.to_vec(),
        }
    }

    #[test]
    fn picks_largest_local_maximum() {
        let c = curve(&[1.0, 3.0, 2.0, 5.0, 4.0]);
        assert_eq!(
            pick_peaks(&c, 1).unwrap(),
            PeakPick { angles_deg: vec![3.0], merged: false }
        );
        assert_eq!(
            pick_peaks(&c, 2).unwrap(),
            PeakPick { angles_deg: vec![1.0, 3.0], merged: false }
        );
    }

    #[test]
    fn monotone_curve_falls_back_to_endpoint() {
        let c = curve(&[1.0, 2.0, 3.0, 4.0]);
        let pick = pick_peaks(&c, 1).unwrap();
        assert!(pick.merged);
        assert_eq!(pick.angles_deg, vec![3.0]);
    }

    #[test]
    fn shortfall_pads_with_next_largest_values() {
        let c = curve(&[0.0, 1.0, 5.0, 4.0, 0.5]);
        let pick = pick_peaks(&c, 2).unwrap();
        assert!(pick.merged);
        assert_eq!(pick.angles_deg, vec![2.0, 3.0]);
    }

    #[test]
    fn equal_peaks_prefer_smaller_angle() {
        let c = curve(&[0.0, 2.0, 0.0, 2.0, 0.0]);
        assert_eq!(pick_peaks(&c, 1).unwrap().angles_deg, vec![1.0]);
    }

    #[test]
    fn empty_curve_is_domain_error() {
        let c = curve(&[]);
        assert!(matches!(pick_peaks(&c, 1), Err(DoaError::Domain(_))));
    }

    #[test]
    fn grid_sizes() {
        assert_eq!(angle_grid(0.01).unwrap().len(), 18001);
        assert_eq!(angle_grid(1.0).unwrap().len(), 181);
        let g = angle_grid(0.01).unwrap();
        assert_eq!(g[0], -90.0);
        assert!((g[18000] - 90.0).abs() < 1e-9);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert!(angle_grid(0.0).is_err());
    }

    #[test]
    fn single_noiseless_source_peak() {
        let cfg = ArrayConfig::half_wavelength(6, 1e6, 200);
        let x = synthesize(&cfg, &SourceScene::from_degrees(&[30.0], f64::INFINITY), None, 1).unwrap();
        let curve = pseudo_spectrum(&covariance(&x), 1, &cfg, 0.1).unwrap();
        let (imax, _) = curve
            .values
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
        assert!((curve.grid_deg[imax] - 30.0).abs() <= 0.1 + 1e-9);
        assert!(curve.values.iter().all(|v| v.is_finite() && *v > 0.0));
    }

    #[test]
    fn noise_only_spectrum_is_flat() {
        let cfg = ArrayConfig::half_wavelength(6, 1e6, 20_000);
        // Noise-only data: a negligible source buried 200 dB below the noise.
        let mut scene = SourceScene::from_degrees(&[0.0], -200.0);
        scene.source_power = 1.0;
        let x = synthesize(&cfg, &scene, None, 12).unwrap();
        let curve = pseudo_spectrum(&covariance(&x), 1, &cfg, 0.1).unwrap();
        let max = curve.values.iter().cloned().fold(f64::MIN, f64::max);
        let min = curve.values.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max / min < 10.0, "ratio {}", max / min);
    }

    #[test]
    fn too_many_sources_is_config_error() {
        let cfg = ArrayConfig::half_wavelength(4, 1e6, 10);
        let r = Array2::<Complex64>::eye(4);
        assert!(matches!(pseudo_spectrum(&r, 4, &cfg, 1.0), Err(DoaError::Config(_))));
    }

    #[test]
    fn two_sources_high_snr() {
        let cfg = ArrayConfig::half_wavelength(6, 1e6, 4000);
        let x = synthesize(&cfg, &SourceScene::from_degrees(&[-20.0, 40.0], 20.0), None, 3).unwrap();
        let fine = music_estimate(&x, 2, &cfg, 0.01).unwrap();
        assert!(!fine.merged);
        assert!((fine.angles_deg[0] + 20.0).abs() < 0.5);
        assert!((fine.angles_deg[1] - 40.0).abs() < 0.5);
        let coarse = music_estimate(&x, 2, &cfg, 0.02).unwrap();
        for (a, b) in fine.angles_deg.iter().zip(&coarse.angles_deg) {
            assert!((a - b).abs() <= 0.02 + 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn covariance_scaling_keeps_peaks() {
        let cfg = ArrayConfig::half_wavelength(6, 1e6, 1000);
        let x = synthesize(&cfg, &SourceScene::from_degrees(&[-5.0, 25.0], 10.0), None, 4).unwrap();
        let r = covariance(&x);
        let est = MusicEstimator::new(&cfg, 0.05).unwrap();
        let base = est.estimate_covariance(&r, 2).unwrap();
        for c in [0.25, 3.7, 1e3] {
            let scaled = r.mapv(|z| z * c);
            assert_eq!(est.estimate_covariance(&scaled, 2).unwrap(), base);
        }
    }
}
