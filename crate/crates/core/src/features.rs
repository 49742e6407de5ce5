//! Covariance features and labeled datasets for the neural estimators.
//!
//! Feature layout (version [`FEATURE_LAYOUT_VERSION`]): the upper triangle of
//! the sample covariance including the diagonal is walked row by row, giving
//! `M(M+1)/2` complex entries. The feature vector holds their real parts
//! followed by their imaginary parts, `M(M+1)` values in total.

use std::f64::consts::FRAC_PI_2;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array_signal::{
    synthesize_with_rng, ArrayConfig, SignalKind, SnapshotMatrix, SourceScene,
    SpacingPerturbation,
};
use crate::error::{DoaError, Result};

pub const FEATURE_LAYOUT_VERSION: u32 = 1;

/// Standard deviations below this are treated as degenerate and replaced by 1.
pub const MIN_FEATURE_STD: f64 = 1e-12;

/// Real-valued network input derived from a covariance matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Deref for FeatureVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Length of the feature vector for `num_antennas` elements.
pub fn feature_len(num_antennas: usize) -> usize {
    num_antennas * (num_antennas + 1)
}

/// Sample covariance `(1/L)·X·Xᴴ`, exactly Hermitian.
pub fn covariance(x: &SnapshotMatrix) -> Array2<Complex64> {
    covariance_of(&x.data)
}

pub fn covariance_of(data: &Array2<Complex64>) -> Array2<Complex64> {
    let (m, l) = data.dim();
    let mut r = Array2::<Complex64>::zeros((m, m));
    let scale = 1.0 / l.max(1) as f64;
    for i in 0..m {
        let row_i = data.row(i);
        for j in i..m {
            let row_j = data.row(j);
            let mut acc = Complex64::new(0.0, 0.0);
            for (a, b) in row_i.iter().zip(row_j.iter()) {
                acc += a * b.conj();
            }
            acc *= scale;
            if i == j {
                r[[i, i]] = Complex64::new(acc.re, 0.0);
            } else {
                r[[i, j]] = acc;
                r[[j, i]] = acc.conj();
            }
        }
    }
    r
}

/// Flattens the upper triangle of `r` into the documented feature layout.
pub fn extract_features(r: &Array2<Complex64>) -> Result<FeatureVector> {
    let (m, n) = r.dim();
    if m != n {
        return Err(DoaError::Shape(format!(
            "covariance must be square, got {m}x{n}"
        )));
    }
    let half = m * (m + 1) / 2;
    let mut values = vec![0.0; 2 * half];
    let mut k = 0;
    for i in 0..m {
        for j in i..m {
            values[k] = r[[i, j]].re;
            values[half + k] = r[[i, j]].im;
            k += 1;
        }
    }
    Ok(FeatureVector(values))
}

/// Rebuilds the Hermitian covariance from an un-normalized feature vector.
pub fn covariance_from_features(features: &[f64], num_antennas: usize) -> Result<Array2<Complex64>> {
    if features.len() != feature_len(num_antennas) {
        return Err(DoaError::Shape(format!(
            "{} features cannot describe a {num_antennas}-antenna covariance",
            features.len()
        )));
    }
    let half = features.len() / 2;
    let mut r = Array2::<Complex64>::zeros((num_antennas, num_antennas));
    let mut k = 0;
    for i in 0..num_antennas {
        for j in i..num_antennas {
            let z = Complex64::new(features[k], features[half + k]);
            r[[i, j]] = z;
            r[[j, i]] = z.conj();
            k += 1;
        }
    }
    for i in 0..num_antennas {
        r[[i, i]].im = 0.0;
    }
    Ok(r)
}

/// Per-feature z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Mean and population standard deviation of each column.
    pub fn fit<V: AsRef<[f64]>>(rows: &[V]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| DoaError::Domain("cannot fit statistics to no samples".into()))?;
        let dim = first.as_ref().len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(DoaError::Shape(format!(
                    "row of length {} in {dim}-feature data",
                    row.len()
                )));
            }
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for row in rows {
            for ((s, v), m) in var.iter_mut().zip(row.as_ref()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd < MIN_FEATURE_STD {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(NormStats { mean, std })
    }

    /// Statistics that leave inputs unchanged.
    pub fn identity(dim: usize) -> Self {
        NormStats {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.mean.len() || self.std.len() != self.mean.len() {
            return Err(DoaError::Shape(format!(
                "{} features against {}-entry statistics",
                values.len(),
                self.mean.len()
            )));
        }
        Ok(values
            .iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| {
                let s = if *s < MIN_FEATURE_STD { 1.0 } else { *s };
                (v - m) / s
            })
            .collect())
    }
}

/// `(v − mean)/std` per feature.
pub fn normalize(features: &FeatureVector, stats: &NormStats) -> Result<FeatureVector> {
    stats.apply(features).map(FeatureVector)
}

/// How source angles are drawn for each sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AngleSampler {
    /// Every angle i.i.d. uniform on `[-90°, 90°]`.
    #[default]
    Uniform,
    /// Two sources with separation uniform on `[0, max_separation_deg)`, placed
    /// uniformly within `[-90°, 90°]`.
    ClosePair { max_separation_deg: f64 },
}

impl AngleSampler {
    fn draw<R: Rng + ?Sized>(&self, num_sources: usize, rng: &mut R) -> Result<Vec<f64>> {
        match *self {
            AngleSampler::Uniform => Ok((0..num_sources)
                .map(|_| rng.random_range(-FRAC_PI_2..=FRAC_PI_2))
                .collect()),
            AngleSampler::ClosePair { max_separation_deg } => {
                if num_sources != 2 {
                    return Err(DoaError::Config(format!(
                        "close-pair sampling needs 2 sources, got {num_sources}"
                    )));
                }
                if !(max_separation_deg > 0.0 && max_separation_deg < 180.0) {
                    return Err(DoaError::Config(format!(
                        "close-pair separation must lie in (0, 180), got {max_separation_deg}"
                    )));
                }
                let sep = rng.random_range(0.0..max_separation_deg);
                let first = rng.random_range(-90.0..=(90.0 - sep));
                Ok(vec![first.to_radians(), (first + sep).to_radians()])
            }
        }
    }
}

/// One labeled example: raw (un-normalized) features and sorted angles in degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: FeatureVector,
    pub labels_deg: Vec<f64>,
}

fn is_default_sampler(s: &AngleSampler) -> bool {
    *s == AngleSampler::Uniform
}

/// Sidecar metadata stored next to a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub layout_version: u32,
    pub config: ArrayConfig,
    pub num_sources: usize,
    #[serde(with = "crate::serde_snr")]
    pub snr_db: f64,
    pub source_power: f64,
    pub signal_kind: SignalKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<SpacingPerturbation>,
    #[serde(default, skip_serializing_if = "is_default_sampler")]
    pub angle_sampler: AngleSampler,
    pub seed: u64,
    /// Normalization statistics of this dataset's features.
    pub stats: NormStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub meta: DatasetMeta,
}

/// Everything needed to regenerate a dataset bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub config: ArrayConfig,
    pub num_samples: usize,
    pub num_sources: usize,
    pub snr_db: f64,
    pub source_power: f64,
    pub signal_kind: SignalKind,
    pub perturbation: Option<SpacingPerturbation>,
    pub angle_sampler: AngleSampler,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn new(config: ArrayConfig, num_samples: usize, num_sources: usize, snr_db: f64, seed: u64) -> Self {
        DatasetSpec {
            config,
            num_samples,
            num_sources,
            snr_db,
            source_power: 1.0,
            signal_kind: SignalKind::ComplexGaussian,
            perturbation: None,
            angle_sampler: AngleSampler::Uniform,
            seed,
        }
    }

    pub fn with_perturbation(mut self, perturbation: Option<SpacingPerturbation>) -> Self {
        self.perturbation = perturbation;
        self
    }

    pub fn with_sampler(mut self, sampler: AngleSampler) -> Self {
        self.angle_sampler = sampler;
        self
    }

    /// Generates the dataset. Sample `i` draws from ChaCha stream `i` of the
    /// spec seed, so the result is independent of thread scheduling.
    pub fn generate(&self) -> Result<Dataset> {
        self.config.validate()?;
        if self.num_samples == 0 {
            return Err(DoaError::Config("dataset needs at least one sample".into()));
        }
        if self.num_sources == 0 || self.num_sources >= self.config.num_antennas {
            return Err(DoaError::Config(format!(
                "{} sources with {} antennas",
                self.num_sources, self.config.num_antennas
            )));
        }
        if let Some(p) = &self.perturbation {
            p.positions(&self.config)?;
        }
        let samples = (0..self.num_samples)
            .into_par_iter()
            .map(|i| self.sample(i))
            .collect::<Result<Vec<_>>>()?;
        let stats = NormStats::fit(&samples.iter().map(|s| s.features.as_slice()).collect::<Vec<_>>())?;
        Ok(Dataset {
            samples,
            meta: DatasetMeta {
                layout_version: FEATURE_LAYOUT_VERSION,
                config: self.config.clone(),
                num_sources: self.num_sources,
                snr_db: self.snr_db,
                source_power: self.source_power,
                signal_kind: self.signal_kind,
                perturbation: self.perturbation.clone(),
                angle_sampler: self.angle_sampler,
                seed: self.seed,
                stats,
            },
        })
    }

    fn sample(&self, index: usize) -> Result<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        let angles = self.angle_sampler.draw(self.num_sources, &mut rng)?;
        let scene = SourceScene {
            angles: angles.clone(),
            source_power: self.source_power,
            snr_db: self.snr_db,
            signal_kind: self.signal_kind,
        };
        let x = synthesize_with_rng(&self.config, &scene, self.perturbation.as_ref(), &mut rng)?;
        let features = extract_features(&covariance(&x))?;
        let mut labels_deg: Vec<f64> = angles.iter().map(|a| a.to_degrees()).collect();
        labels_deg.sort_by(f64::total_cmp);
        Ok(Sample { features, labels_deg })
    }
}

/// Uniform-angle dataset with default source settings.
pub fn generate_dataset(
    config: &ArrayConfig,
    num_samples: usize,
    num_sources: usize,
    snr_db: f64,
    seed: u64,
) -> Result<Dataset> {
    DatasetSpec::new(config.clone(), num_samples, num_sources, snr_db, seed).generate()
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.features.len())
    }

    pub fn label_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.labels_deg.len())
    }

    pub fn features(&self) -> Vec<&[f64]> {
        self.samples.iter().map(|s| s.features.as_slice()).collect()
    }

    pub fn labels(&self) -> Vec<&[f64]> {
        self.samples.iter().map(|s| s.labels_deg.as_slice()).collect()
    }

    /// Checks the shape invariants and returns `(feature_dim, label_dim)`.
    pub fn validate(&self) -> Result<(usize, usize)> {
        let (d, k) = (self.feature_dim(), self.label_dim());
        if self.samples.is_empty() {
            return Err(DoaError::Config("dataset is empty".into()));
        }
        for (i, s) in self.samples.iter().enumerate() {
            if s.features.len() != d || s.labels_deg.len() != k {
                return Err(DoaError::Shape(format!("sample {i} has inconsistent dimensions")));
            }
            if s.features.iter().chain(&s.labels_deg).any(|v| !v.is_finite()) {
                return Err(DoaError::Numeric(format!("sample {i} has non-finite values")));
            }
        }
        Ok((d, k))
    }

    /// Subset by index, keeping metadata and refitting statistics.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let samples: Vec<Sample> = indices.iter().map(|&i| self.samples[i].clone()).collect();
        let stats = NormStats::fit(&samples.iter().map(|s| s.features.as_slice()).collect::<Vec<_>>())?;
        Ok(Dataset {
            samples,
            meta: DatasetMeta {
                stats,
                ..self.meta.clone()
            },
        })
    }

    /// Path of the JSON sidecar belonging to a dataset CSV.
    pub fn sidecar_path(csv_path: &Path) -> PathBuf {
        csv_path.with_extension("json")
    }

    /// Writes `<path>` (CSV) and its JSON sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        let (d, k) = self.validate()?;
        let mut writer = csv::Writer::from_path(path)?;
        let header: Vec<String> = (0..d)
            .map(|i| format!("f{i}"))
            .chain((0..k).map(|i| format!("theta{i}")))
            .collect();
        writer.write_record(&header)?;
        for s in &self.samples {
            let row: Vec<String> = s
                .features
                .iter()
                .chain(&s.labels_deg)
                .map(|v| v.to_string())
                .collect();
            writer.write_record(&row)?;
        }
        writer.flush()?;
        let mut meta = BufWriter::new(File::create(Self::sidecar_path(path))?);
        serde_json::to_writer_pretty(&mut meta, &self.meta)?;
        meta.write_all(b"\n")?;
        meta.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Dataset> {
        let meta: DatasetMeta = serde_json::from_reader(BufReader::new(
            File::open(Self::sidecar_path(path))?,
        ))?;
        if meta.layout_version != FEATURE_LAYOUT_VERSION {
            return Err(DoaError::Config(format!(
                "unsupported feature layout version {}",
                meta.layout_version
            )));
        }
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        let d = headers.iter().filter(|h| h.starts_with('f')).count();
        let k = headers.iter().filter(|h| h.starts_with("theta")).count();
        if d + k != headers.len() || d != feature_len(meta.config.num_antennas) {
            return Err(DoaError::Shape(format!(
                "dataset header has {d} features and {k} labels for {} antennas",
                meta.config.num_antennas
            )));
        }
        let mut samples = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            let values = record
                .iter()
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| DoaError::Config(format!("row {}: {e}", row + 1)))?;
            if values.len() != d + k {
                return Err(DoaError::Shape(format!("row {} has {} fields", row + 1, values.len())));
            }
            samples.push(Sample {
                features: FeatureVector(values[..d].to_vec()),
                labels_deg: values[d..].to_vec(),
            });
        }
        let dataset = Dataset { samples, meta };
        dataset.validate()?;
        Ok(dataset)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_signal::synthesize;
    use crate::music::eig_hermitian;

    fn snapshot(data: Array2<Complex64>) -> SnapshotMatrix {
        let m = data.nrows();
        let l = data.ncols();
        SnapshotMatrix {
            data,
            config: ArrayConfig::half_wavelength(m, 1e6, l),
            scene: SourceScene::from_degrees(&[0.0], 0.0),
        }
    }

    #[test]
    fn constant_data_covariance() {
        let x = snapshot(Array2::from_elem((2, 4), Complex64::new(1.0, 0.0)));
        let r = covariance(&x);
        assert!(r.iter().all(|&z| z == Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn covariance_is_exactly_hermitian() {
        let cfg = ArrayConfig::half_wavelength(5, 1e6, 37);
        let scene = SourceScene::from_degrees(&[-12.0, 50.0], 3.0);
        let x = synthesize(&cfg, &scene, None, 8).unwrap();
        let r = covariance(&x);
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(r[[i, j]], r[[j, i]].conj());
            }
        }
    }

    #[test]
    fn noiseless_single_source_covariance_is_rank_one() {
        let cfg = ArrayConfig::half_wavelength(6, 1e6, 500);
        let scene = SourceScene::from_degrees(&[33.0], f64::INFINITY);
        let x = synthesize(&cfg, &scene, None, 4).unwrap();
        let eig = eig_hermitian(&covariance(&x)).unwrap();
        assert!(eig.values[1] < 1e-8 * eig.values[0], "{:?}", eig.values);
    }

    #[test]
    fn feature_lengths() {
        let cfg = ArrayConfig::half_wavelength(6, 1e6, 20);
        let x = synthesize(&cfg, &SourceScene::from_degrees(&[0.0], 10.0), None, 1).unwrap();
        assert_eq!(extract_features(&covariance(&x)).unwrap().len(), 42);
        for m in 2..=16 {
            let r = Array2::<Complex64>::eye(m);
            assert_eq!(extract_features(&r).unwrap().len(), m * (m + 1));
            assert_eq!(feature_len(m), m * (m + 1));
        }
    }

    #[test]
    fn identity_features_and_placement() {
        let r = Array2::<Complex64>::eye(2);
        assert_eq!(extract_features(&r).unwrap().0, vec![1.0, 0.0, 1.0, 0.0, 0.0, 0.0]);

        let mut r = Array2::<Complex64>::eye(2);
        r[[0, 1]] = Complex64::new(3.0, 4.0);
        r[[1, 0]] = Complex64::new(3.0, -4.0);
        let f = extract_features(&r).unwrap();
        // (0,1) is the second upper-triangle entry.
        assert_eq!(f[1], 3.0);
        assert_eq!(f[3 + 1], 4.0);
    }

    #[test]
    fn non_square_is_shape_error() {
        let r = Array2::<Complex64>::zeros((2, 3));
        assert!(matches!(extract_features(&r), Err(DoaError::Shape(_))));
    }

    #[test]
    fn features_round_trip_to_covariance() {
        let cfg = ArrayConfig::half_wavelength(4, 1e6, 50);
        let x = synthesize(&cfg, &SourceScene::from_degrees(&[10.0, -3.0], 5.0), None, 2).unwrap();
        let r = covariance(&x);
        let back = covariance_from_features(&extract_features(&r).unwrap(), 4).unwrap();
        assert_eq!(r, back);
    }

    #[test]
    fn normalize_examples() {
        let stats = NormStats {
            mean: vec![1.0, 0.0],
            std: vec![3.0, 2.0],
        };
        let v = normalize(&FeatureVector(vec![1.0, 4.0]), &stats).unwrap();
        assert_eq!(v.0, vec![0.0, 2.0]);
        assert!(matches!(
            normalize(&FeatureVector(vec![1.0]), &stats),
            Err(DoaError::Shape(_))
        ));
    }

    #[test]
    fn degenerate_std_is_replaced() {
        let rows = vec![vec![1.0, 2.0], vec![1.0, 4.0]];
        let stats = NormStats::fit(&rows).unwrap();
        assert_eq!(stats.std[0], 1.0);
        assert_eq!(stats.std[1], 1.0);
        assert_eq!(stats.mean, vec![1.0, 3.0]);
    }

    #[test]
    fn normalized_training_features_are_standardized() {
        let cfg = ArrayConfig::half_wavelength(4, 1e6, 200);
        let ds = generate_dataset(&cfg, 300, 2, 20.0, 11).unwrap();
        let normed: Vec<Vec<f64>> = ds
            .samples
            .iter()
            .map(|s| ds.meta.stats.apply(&s.features).unwrap())
            .collect();
        let n = normed.len() as f64;
        for j in 0..ds.feature_dim() {
            let mean = normed.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = normed.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            if ds.meta.stats.std[j] == 1.0 && var < 1e-20 {
                // degenerate column (imaginary part of a diagonal entry)
                continue;
            }
            assert!(mean.abs() < 1e-10, "feature {j} mean {mean}");
            assert!((var.sqrt() - 1.0).abs() < 1e-6, "feature {j} std {}", var.sqrt());
        }
    }

    #[test]
    fn dataset_shape_and_determinism() {
        let cfg = ArrayConfig::half_wavelength(6, 1e6, 100);
        let a = generate_dataset(&cfg, 400, 2, 20.0, 5).unwrap();
        assert_eq!(a.len(), 400);
        assert_eq!(a.label_dim(), 2);
        assert!(a.samples.iter().all(|s| s.labels_deg[0] <= s.labels_deg[1]));
        let b = generate_dataset(&cfg, 400, 2, 20.0, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn labels_are_uniform() {
        // Kolmogorov–Smirnov distance of pooled labels to Uniform(-90°, 90°).
        let cfg = ArrayConfig::half_wavelength(3, 1e6, 4);
        let ds = generate_dataset(&cfg, 10_000, 1, 20.0, 21).unwrap();
        let mut labels: Vec<f64> = ds.samples.iter().map(|s| s.labels_deg[0]).collect();
        labels.sort_by(f64::total_cmp);
        let n = labels.len() as f64;
        let ks = labels
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = (x + 90.0) / 180.0;
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.02, "KS distance {ks}");
    }

    #[test]
    fn close_pair_sampler_respects_separation() {
        let cfg = ArrayConfig::half_wavelength(6, 1e6, 10);
        let ds = DatasetSpec::new(cfg, 200, 2, 20.0, 3)
            .with_sampler(AngleSampler::ClosePair { max_separation_deg: 2.0 })
            .generate()
            .unwrap();
        for s in &ds.samples {
            let sep = s.labels_deg[1] - s.labels_deg[0];
            assert!((0.0..2.0 + 1e-9).contains(&sep));
            assert!(s.labels_deg[0] >= -90.0 && s.labels_deg[1] <= 90.0 + 1e-9);
        }
    }

    #[test]
    fn save_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.csv");
        let cfg = ArrayConfig::half_wavelength(3, 1e6, 30);
        let ds = generate_dataset(&cfg, 25, 2, 10.0, 1).unwrap();
        ds.save(&path).unwrap();
        let header = std::fs::read_to_string(&path).unwrap();
        assert!(header.starts_with("f0,f1,f2,f3,f4,f5,f6,f7,f8,f9,f10,f11,theta0,theta1\n"));
        let back = Dataset::load(&path).unwrap();
        assert_eq!(back, ds);
    }
}
