use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::RbfParams;
use crate::error::{DoaError, Result};

pub const KMEANS_ITERATIONS: usize = 50;

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// RBF centers by k-means with seeded farthest-point initialization.
///
/// The width of unit `u` is `1/(mean distance from c_u to its members + 1e-6)`.
/// Empty clusters are reseeded from a random sample.
pub fn fit_rbf_centers<V: AsRef<[f64]>>(data: &[V], num_units: usize, seed: u64) -> Result<RbfParams> {
    let n = data.len();
    if num_units == 0 || num_units > n {
        return Err(DoaError::Config(format!(
            "{num_units} RBF units for {n} training samples"
        )));
    }
    let dim = data[0].as_ref().len();
    if data.iter().any(|r| r.as_ref().len() != dim) {
        return Err(DoaError::Shape("ragged RBF training data".into()));
    }
    let row = |i: usize| data[i].as_ref();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Farthest-point initialization.
    let mut chosen = vec![rng.random_range(0..n)];
    let mut nearest: Vec<f64> = (0..n).map(|i| dist_sq(row(i), row(chosen[0]))).collect();
    while chosen.len() < num_units {
        let mut best = 0;
        let mut best_d = f64::NEG_INFINITY;
        for (i, &d) in nearest.iter().enumerate() {
            if d > best_d && !chosen.contains(&i) {
                best = i;
                best_d = d;
            }
        }
        chosen.push(best);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(dist_sq(row(i), row(best)));
        }
    }
    let mut centers: Vec<Vec<f64>> = chosen.iter().map(|&i| row(i).to_vec()).collect();

    let mut assignment = vec![usize::MAX; n];
    for _ in 0..KMEANS_ITERATIONS {
        let mut changed = false;
        for i in 0..n {
            let a = nearest_center(&centers, row(i));
            if a != assignment[i] {
                assignment[i] = a;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; dim]; num_units];
        let mut counts = vec![0usize; num_units];
        for i in 0..n {
            counts[assignment[i]] += 1;
            for (s, v) in sums[assignment[i]].iter_mut().zip(row(i)) {
                *s += v;
            }
        }
        let mut reseeded = false;
        for u in 0..num_units {
            if counts[u] == 0 {
                centers[u] = row(rng.random_range(0..n)).to_vec();
                reseeded = true;
            } else {
                let c = counts[u] as f64;
                centers[u] = sums[u].iter().map(|s| s / c).collect();
            }
        }
        if !changed && !reseeded {
            break;
        }
    }
    for i in 0..n {
        assignment[i] = nearest_center(&centers, row(i));
    }

    let mut total = vec![0.0; num_units];
    let mut counts = vec![0usize; num_units];
    for i in 0..n {
        let u = assignment[i];
        total[u] += dist_sq(row(i), &centers[u]).sqrt();
        counts[u] += 1;
    }
    let widths = (0..num_units)
        .map(|u| {
            let mean = if counts[u] == 0 { 0.0 } else { total[u] / counts[u] as f64 };
            1.0 / (mean + 1e-6)
        })
        .collect();
    Ok(RbfParams {
        num_units,
        fan_in: dim,
        centers: centers.into_iter().flatten().collect(),
        widths,
    })
}

fn nearest_center(centers: &[Vec<f64>], x: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (u, c) in centers.iter().enumerate() {
        let d = dist_sq(c, x);
        if d < best_d {
            best = u;
            best_d = d;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn separates_two_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let mut data = Vec::new();
        for i in 0..100 {
            let offset = if i % 2 == 0 { -5.0 } else { 5.0 };
            data.push(vec![offset + noise.sample(&mut rng), offset + noise.sample(&mut rng)]);
        }
        let p = fit_rbf_centers(&data, 2, 3).unwrap();
        let mut signs: Vec<f64> = (0..2).map(|u| p.center(u)[0].signum()).collect();
        signs.sort_by(f64::total_cmp);
        assert_eq!(signs, vec![-1.0, 1.0]);
        for u in 0..2 {
            let c = p.center(u);
            assert!((c[0].abs() - 5.0).abs() < 0.2 && (c[1].abs() - 5.0).abs() < 0.2);
            assert!(p.widths[u] > 1.0);
        }
    }

    #[test]
    fn one_unit_per_sample_reproduces_samples() {
        let data = vec![vec![0.0, 1.0], vec![3.0, -1.0], vec![-2.0, 2.0], vec![5.0, 5.0]];
        let p = fit_rbf_centers(&data, 4, 11).unwrap();
        let mut centers: Vec<Vec<f64>> = (0..4).map(|u| p.center(u).to_vec()).collect();
        let mut expected = data.clone();
        centers.sort_by(|a, b| a[0].total_cmp(&b[0]));
        expected.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(centers, expected);
    }

    #[test]
    fn seeded_fit_is_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        assert_eq!(fit_rbf_centers(&data, 10, 4).unwrap(), fit_rbf_centers(&data, 10, 4).unwrap());
        assert!(fit_rbf_centers(&data, 201, 4).is_err());
    }
}
