//! Sample-quality metrics on point clouds: k-NN manifold precision/recall
//! and the energy distance with a permutation test, the desk-scale stand-in
//! for feature-space fidelity scores.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

const RADIUS_FLOOR: f64 = 1e-12;

fn row_dist(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
    let mut acc = 0.0;
    for c in 0..a.ncols() {
        let d = a[(i, c)] - b[(j, c)];
        acc += d * d;
    }
    acc.sqrt()
}

/// Distance from each point of `set` to its k-th nearest neighbor within
/// `set` (self excluded). Zero radii from duplicate points are floored.
fn kth_nn_radii(set: &DMatrix<f64>, k: usize) -> Vec<f64> {
    let n = set.nrows();
    let mut radii = Vec::with_capacity(n);
    let mut dists = Vec::with_capacity(n - 1);
    let mut degenerate = false;
    for i in 0..n {
        dists.clear();
        for j in 0..n {
            if j != i {
                dists.push(row_dist(set, i, set, j));
            }
        }
        let (_, kth, _) = dists.select_nth_unstable_by(k - 1, |a, b| {
            a.partial_cmp(b).expect("finite distances")
        });
        let mut r = *kth;
        if r < RADIUS_FLOOR {
            degenerate = true;
            r = RADIUS_FLOOR;
        }
        radii.push(r);
    }
    if degenerate {
        log::warn!("duplicate points produced a zero k-NN radius; flooring at {RADIUS_FLOOR}");
    }
    radii
}

/// Fraction of `eval` points lying inside the union of k-NN balls around
/// `reference` points.
fn manifold_coverage(reference: &DMatrix<f64>, radii: &[f64], eval: &DMatrix<f64>) -> f64 {
    let mut hits = 0usize;
    for e in 0..eval.nrows() {
        for r in 0..reference.nrows() {
            if row_dist(eval, e, reference, r) <= radii[r] {
                hits += 1;
                break;
            }
        }
    }
    hits as f64 / eval.nrows() as f64
}

/// Manifold precision/recall with k-NN balls: precision is the fraction of
/// eval points covered by the reference manifold, recall the converse.
pub fn knn_precision_recall(
    reference: &DMatrix<f64>,
    eval: &DMatrix<f64>,
    k: usize,
) -> Result<(f64, f64)> {
    if k < 1 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    if reference.nrows() <= k || eval.nrows() <= k {
        return Err(Error::InvalidArgument(format!(
            "need more than k = {k} points per set (got {} and {})",
            reference.nrows(),
            eval.nrows()
        )));
    }
    if reference.ncols() != eval.ncols() {
        return Err(Error::DimensionMismatch {
            expected: reference.ncols(),
            got: eval.ncols(),
        });
    }
    let ref_radii = kth_nn_radii(reference, k);
    let eval_radii = kth_nn_radii(eval, k);
    let precision = manifold_coverage(reference, &ref_radii, eval);
    let recall = manifold_coverage(eval, &eval_radii, reference);
    Ok((precision, recall))
}

/// Energy distance 2 E|X-Y| - E|X-X'| - E|Y-Y'| between two point clouds.
pub fn energy_distance(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    if x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x.ncols(),
            got: y.ncols(),
        });
    }
    if x.nrows() == 0 || y.nrows() == 0 {
        return Err(Error::InvalidArgument("energy distance needs nonempty sets".into()));
    }
    let (n, m) = (x.nrows(), y.nrows());
    let mut cross = 0.0;
    for i in 0..n {
        for j in 0..m {
            cross += row_dist(x, i, y, j);
        }
    }
    let mut within_x = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            within_x += row_dist(x, i, x, j);
        }
    }
    let mut within_y = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            within_y += row_dist(y, i, y, j);
        }
    }
    Ok(2.0 * cross / (n * m) as f64
        - 2.0 * within_x / (n * n) as f64
        - 2.0 * within_y / (m * m) as f64)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnergyTest {
    pub statistic: f64,
    /// Permutation p-value with the add-one correction.
    pub p_value: f64,
    pub permutations: usize,
}

/// Two-sample permutation test on the energy statistic. The pooled distance
/// matrix is computed once; each permutation reuses it.
pub fn energy_permutation_test(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    n_permutations: usize,
    seed: u64,
) -> Result<EnergyTest> {
    if x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x.ncols(),
            got: y.ncols(),
        });
    }
    let (n, m) = (x.nrows(), y.nrows());
    if n < 2 || m < 2 {
        return Err(Error::InvalidArgument("permutation test needs >= 2 points per set".into()));
    }
    let total = n + m;
    // pooled distance matrix, row-major upper storage in a flat vec
    let mut pooled = DMatrix::zeros(total, x.ncols());
    pooled.view_mut((0, 0), (n, x.ncols())).copy_from(x);
    pooled.view_mut((n, 0), (m, x.ncols())).copy_from(y);
    let mut dist = vec![0.0f64; total * total];
    let mut grand_half = 0.0;
    for i in 0..total {
        for j in (i + 1)..total {
            let d = row_dist(&pooled, i, &pooled, j);
            dist[i * total + j] = d;
            dist[j * total + i] = d;
            grand_half += d;
        }
    }
    let stat_for = |idx: &[usize]| -> f64 {
        // idx: pooled indices assigned to the X group (length n)
        let mut in_x = vec![false; total];
        for &i in idx {
            in_x[i] = true;
        }
        let mut s_x = 0.0;
        for (a, &ia) in idx.iter().enumerate() {
            let row = &dist[ia * total..(ia + 1) * total];
            for &ib in &idx[(a + 1)..] {
                s_x += row[ib];
            }
        }
        let mut s_y = 0.0;
        for i in 0..total {
            if in_x[i] {
                continue;
            }
            let row = &dist[i * total..(i + 1) * total];
            for j in (i + 1)..total {
                if !in_x[j] {
                    s_y += row[j];
                }
            }
        }
        let s_cross = grand_half - s_x - s_y;
        2.0 * s_cross / (n * m) as f64 - 2.0 * s_x / (n * n) as f64 - 2.0 * s_y / (m * m) as f64
    };
    let observed = stat_for(&(0..n).collect::<Vec<_>>());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..total).collect();
    let mut exceed = 0usize;
    for _ in 0..n_permutations {
        indices.shuffle(&mut rng);
        if stat_for(&indices[..n]) >= observed {
            exceed += 1;
        }
    }
    Ok(EnergyTest {
        statistic: observed,
        p_value: (1 + exceed) as f64 / (n_permutations + 1) as f64,
        permutations: n_permutations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::GaussianMixture;
    use nalgebra::DVector;
    use rand::SeedableRng;

    #[test]
    fn identical_sets_have_perfect_precision_recall() {
        let g = GaussianMixture::standard(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = g.sample(200, &mut rng);
        let (p, r) = knn_precision_recall(&s, &s.clone(), 3).unwrap();
        assert_eq!(p, 1.0);
        assert_eq!(r, 1.0);
    }

    #[test]
    fn distant_sets_have_zero_precision_recall() {
        let g = GaussianMixture::standard(2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = g.sample(100, &mut rng);
        let mut b = g.sample(100, &mut rng);
        for i in 0..b.nrows() {
            b[(i, 0)] += 1e6;
        }
        let (p, r) = knn_precision_recall(&a, &b, 3).unwrap();
        assert_eq!(p, 0.0);
        assert_eq!(r, 0.0);
    }

    /// naive double-loop implementation with no shortcuts, used as an oracle
    fn brute_force_pr(reference: &DMatrix<f64>, eval: &DMatrix<f64>, k: usize) -> (f64, f64) {
        let radii = |set: &DMatrix<f64>| -> Vec<f64> {
            (0..set.nrows())
                .map(|i| {
                    let mut d: Vec<f64> = (0..set.nrows())
                        .filter(|&j| j != i)
                        .map(|j| row_dist(set, i, set, j))
                        .collect();
                    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    d[k - 1].max(RADIUS_FLOOR)
                })
                .collect()
        };
        let rr = radii(reference);
        let re = radii(eval);
        let cover = |set: &DMatrix<f64>, rad: &[f64], pts: &DMatrix<f64>| -> f64 {
            let mut hits = 0;
            for e in 0..pts.nrows() {
                let mut inside = false;
                for s in 0..set.nrows() {
                    if row_dist(pts, e, set, s) <= rad[s] {
                        inside = true;
                    }
                }
                if inside {
                    hits += 1;
                }
            }
            hits as f64 / pts.nrows() as f64
        };
        (cover(reference, &rr, eval), cover(eval, &re, reference))
    }

    #[test]
    fn matches_brute_force_oracle_on_shifted_gaussians() {
        let a = GaussianMixture::standard(2);
        let b = GaussianMixture::isotropic(DVector::from_column_slice(&[3.0, 0.0]), 1.0)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xa = a.sample(400, &mut rng);
        let xb = b.sample(400, &mut rng);
        let (p, r) = knn_precision_recall(&xa, &xb, 3).unwrap();
        let (bp, br) = brute_force_pr(&xa, &xb, 3);
        assert_eq!(p, bp);
        assert_eq!(r, br);
        assert!(p > 0.0 && p < 1.0, "shifted clouds should partially overlap: {p}");
    }

    #[test]
    fn precision_recall_invariant_under_permutation() {
        let g = GaussianMixture::standard(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = g.sample(128, &mut rng);
        let b = g.sample(96, &mut rng);
        let (p1, r1) = knn_precision_recall(&a, &b, 3).unwrap();
        // reverse both row orders
        let arev = DMatrix::from_fn(a.nrows(), 2, |i, j| a[(a.nrows() - 1 - i, j)]);
        let brev = DMatrix::from_fn(b.nrows(), 2, |i, j| b[(b.nrows() - 1 - i, j)]);
        let (p2, r2) = knn_precision_recall(&arev, &brev, 3).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(r1, r2);
    }

    #[test]
    fn sets_smaller_than_k_are_rejected() {
        let g = GaussianMixture::standard(1);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = g.sample(3, &mut rng);
        let b = g.sample(10, &mut rng);
        assert!(knn_precision_recall(&a, &b, 3).is_err());
    }

    #[test]
    fn energy_distance_is_zero_for_identical_and_positive_for_shifted() {
        let g = GaussianMixture::standard(2);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = g.sample(300, &mut rng);
        let same = energy_distance(&a, &a.clone()).unwrap();
        assert!(same.abs() < 1e-12);
        let mut b = a.clone();
        for i in 0..b.nrows() {
            b[(i, 0)] += 2.0;
        }
        assert!(energy_distance(&a, &b).unwrap() > 0.5);
    }

    #[test]
    fn permutation_test_accepts_same_distribution_and_rejects_shifted() {
        let g = GaussianMixture::standard(2);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = g.sample(300, &mut rng);
        let b = g.sample(300, &mut rng);
        let ok = energy_permutation_test(&a, &b, 199, 11).unwrap();
        assert!(ok.p_value > 0.05, "p {}", ok.p_value);
        let shifted = GaussianMixture::isotropic(DVector::from_column_slice(&[1.0, 0.0]), 1.0)
            .unwrap()
            .sample(300, &mut rng);
        let bad = energy_permutation_test(&a, &shifted, 199, 11).unwrap();
        assert!(bad.p_value < 0.01, "p {}", bad.p_value);
    }
}
