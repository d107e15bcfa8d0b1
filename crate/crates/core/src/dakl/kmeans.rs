//! k-means++ seeding followed by Lloyd iterations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Cluster centres in feature space plus the mean target of each cluster.
#[derive(Clone, Debug, PartialEq)]
pub struct CentroidSet {
    pub centers: Mat,
    pub targets: Mat,
    /// Cluster index of every input row.
    pub assignment: Vec<usize>,
}

impl CentroidSet {
    /// Uses every sample as its own centroid.
    pub fn from_samples(features: &Mat, targets: &Mat) -> Result<Self> {
        if features.rows != targets.rows {
            return Err(Error::Shape(format!(
                "{} feature rows but {} target rows",
                features.rows, targets.rows
            )));
        }
        Ok(CentroidSet {
            centers: features.clone(),
            targets: targets.clone(),
            assignment: (0..features.rows).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.centers.rows
    }

    pub fn is_empty(&self) -> bool {
        self.centers.rows == 0
    }

    /// Sum of squared distances of every row to its centre.
    pub fn distortion(&self, features: &Mat) -> f64 {
        (0..features.rows)
            .map(|i| sq_dist(features.row(i), self.centers.row(self.assignment[i])))
            .sum()
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centre per row, lowest index on ties.
fn assign(features: &Mat, centers: &Mat) -> Vec<(usize, f64)> {
    (0..features.rows)
        .into_par_iter()
        .map(|i| {
            let x = features.row(i);
            let mut best = (0, f64::INFINITY);
            for c in 0..centers.rows {
                let d = sq_dist(x, centers.row(c));
                if d < best.1 {
                    best = (c, d);
                }
            }
            best
        })
        .collect()
}

fn plus_plus_init(features: &Mat, r: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = features.rows;
    let mut chosen = vec![rng.random_range(0..n)];
    let mut dist: Vec<f64> = (0..n)
        .map(|i| sq_dist(features.row(i), features.row(chosen[0])))
        .collect();
    while chosen.len() < r {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut pick = None;
            for (i, &d) in dist.iter().enumerate() {
                if d > 0.0 {
                    pick = Some(i);
                    if target < d {
                        break;
                    }
                    target -= d;
                }
            }
            pick.expect("positive total implies a positive distance")
        } else {
            // All remaining points coincide with chosen centres.
            (0..n).find(|i| !chosen.contains(i)).expect("r <= n")
        };
        chosen.push(next);
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(sq_dist(features.row(i), features.row(next)));
        }
    }
    chosen
}

fn means(rows: &Mat, assignment: &[usize], k: usize) -> (Mat, Vec<usize>) {
    let mut sums = Mat::zeros(k, rows.cols);
    let mut counts = vec![0usize; k];
    for (i, &c) in assignment.iter().enumerate() {
        counts[c] += 1;
        for (s, v) in sums.row_mut(c).iter_mut().zip(rows.row(i)) {
            *s += v;
        }
    }
    for (c, &cnt) in counts.iter().enumerate() {
        if cnt > 0 {
            for s in sums.row_mut(c) {
                *s /= cnt as f64;
            }
        }
    }
    (sums, counts)
}

/// Clusters `features` into `r` groups. Cluster targets are the mean of the
/// member rows of `targets`.
pub fn kmeans(features: &Mat, targets: &Mat, r: usize, max_iters: usize, seed: u64) -> Result<CentroidSet> {
    let n = features.rows;
    if features.rows != targets.rows {
        return Err(Error::Shape(format!(
            "{} feature rows but {} target rows",
            features.rows, targets.rows
        )));
    }
    if r == 0 {
        return Err(Error::Invalid("number of centroids must be >= 1".into()));
    }
    if r > n {
        return Err(Error::Invalid(format!(
            "cannot extract {r} centroids from {n} samples"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds = plus_plus_init(features, r, &mut rng);
    let mut centers = Mat::zeros(r, features.cols);
    for (c, &i) in seeds.iter().enumerate() {
        centers.row_mut(c).copy_from_slice(features.row(i));
    }

    let mut assignment: Vec<usize> = assign(features, &centers).into_iter().map(|(c, _)| c).collect();
    for _ in 0..max_iters.max(1) {
        let (mut next, counts) = means(features, &assignment, r);
        // Re-seed empty clusters with the points farthest from their centres.
        let empty: Vec<usize> = (0..r).filter(|&c| counts[c] == 0).collect();
        if !empty.is_empty() {
            let mut far: Vec<(usize, f64)> = (0..n)
                .map(|i| (i, sq_dist(features.row(i), next.row(assignment[i]))))
                .collect();
            far.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            for (c, (i, _)) in empty.into_iter().zip(far) {
                next.row_mut(c).copy_from_slice(features.row(i));
            }
        }
        centers = next;
        let updated: Vec<usize> = assign(features, &centers).into_iter().map(|(c, _)| c).collect();
        let converged = updated == assignment;
        assignment = updated;
        if converged {
            break;
        }
    }
    let (final_centers, counts) = means(features, &assignment, r);
    for c in 0..r {
        if counts[c] > 0 {
            centers.row_mut(c).copy_from_slice(final_centers.row(c));
        }
    }
    let (center_targets, _) = means(targets, &assignment, r);
    Ok(CentroidSet {
        centers,
        targets: center_targets,
        assignment,
    })
}
