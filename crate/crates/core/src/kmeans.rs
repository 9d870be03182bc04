//! Lloyd's k-means with two seeding strategies.
//!
//! [`kmeans`] is the randomized k-means++ variant used to split observations
//! into states. [`kmeans_maximin`] is fully deterministic (farthest-point
//! seeding) and is used on variable profiles, so that relabelling the
//! variables relabels the result identically.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RESTARTS: usize = 10;
const MAX_LLOYD: usize = 300;

fn sq_dist(points: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>, c: usize) -> f64 {
    let mut acc = 0.0;
    for d in 0..points.ncols() {
        let t = points[(i, d)] - centers[(c, d)];
        acc += t * t;
    }
    acc
}

fn nearest(points: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centers.nrows() {
        let d = sq_dist(points, i, centers, c);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Lloyd iterations from the given centers. Returns labels and inertia.
fn lloyd(points: &DMatrix<f64>, mut centers: DMatrix<f64>) -> (Vec<usize>, f64) {
    let n = points.nrows();
    let m = centers.nrows();
    let dim = points.ncols();
    let mut labels = vec![usize::MAX; n];
    for _ in 0..MAX_LLOYD {
        let mut changed = false;
        let mut dists = vec![0.0; n];
        for i in 0..n {
            let (c, d) = nearest(points, i, &centers);
            dists[i] = d;
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        // Repair empty clusters with the point farthest from its center.
        let mut counts = vec![0usize; m];
        for &l in &labels {
            counts[l] += 1;
        }
        for c in 0..m {
            if counts[c] == 0 {
                let far = (0..n)
                    .filter(|&i| counts[labels[i]] > 1)
                    .fold(None, |best: Option<usize>, i| match best {
                        Some(b) if dists[b] >= dists[i] => Some(b),
                        _ => Some(i),
                    });
                if let Some(i) = far {
                    counts[labels[i]] -= 1;
                    labels[i] = c;
                    counts[c] = 1;
                    dists[i] = 0.0;
                    changed = true;
                }
            }
        }
        let mut sums = DMatrix::<f64>::zeros(m, dim);
        for i in 0..n {
            for d in 0..dim {
                sums[(labels[i], d)] += points[(i, d)];
            }
        }
        for c in 0..m {
            if counts[c] > 0 {
                for d in 0..dim {
                    centers[(c, d)] = sums[(c, d)] / counts[c] as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = (0..n).map(|i| sq_dist(points, i, &centers, labels[i])).sum();
    (labels, inertia)
}

fn plus_plus_centers(points: &DMatrix<f64>, m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = points.nrows();
    let mut chosen = Vec::with_capacity(m);
    chosen.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(points, i, &points.rows(chosen[0], 1).into_owned(), 0))
        .collect();
    while chosen.len() < m {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            if d2[pick] == 0.0 {
                pick = (0..n).rev().find(|&i| d2[i] > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        let row = points.rows(next, 1).into_owned();
        for i in 0..n {
            d2[i] = d2[i].min(sq_dist(points, i, &row, 0));
        }
    }
    points.select_rows(chosen.iter())
}

/// k-means++ seeding, Lloyd iterations, best of 10 restarts by inertia.
///
/// Deterministic given `seed`. Requires `n ≥ m ≥ 1`; `m` is clamped into
/// that range otherwise.
pub fn kmeans(points: &DMatrix<f64>, m: usize, seed: u64) -> Vec<usize> {
    let n = points.nrows();
    let m = m.clamp(1, n.max(1));
    if m == 1 || n == 0 {
        return vec![0; n];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<usize>, f64)> = None;
    for _ in 0..RESTARTS {
        let centers = plus_plus_centers(points, m, &mut rng);
        let (labels, inertia) = lloyd(points, centers);
        if best.as_ref().map_or(true, |b| inertia < b.1) {
            best = Some((labels, inertia));
        }
    }
    best.unwrap().0
}

/// Farthest-point seeding (first center: the row of largest norm), then Lloyd.
pub fn kmeans_maximin(points: &DMatrix<f64>, m: usize) -> Vec<usize> {
    let n = points.nrows();
    let m = m.clamp(1, n.max(1));
    if m == 1 || n == 0 {
        return vec![0; n];
    }
    let norms: Vec<f64> = (0..n).map(|i| points.row(i).norm_squared()).collect();
    let first = (0..n).fold(0, |b, i| if norms[i] > norms[b] { i } else { b });
    let mut chosen = vec![first];
    let first_row = points.rows(first, 1).into_owned();
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points, i, &first_row, 0)).collect();
    while chosen.len() < m {
        let next = (0..n).fold(None, |best: Option<usize>, i| {
            if chosen.contains(&i) {
                return best;
            }
            match best {
                Some(b) if d2[b] >= d2[i] => Some(b),
                _ => Some(i),
            }
        });
        let next = next.unwrap();
        chosen.push(next);
        let row = points.rows(next, 1).into_owned();
        for i in 0..n {
            d2[i] = d2[i].min(sq_dist(points, i, &row, 0));
        }
    }
    lloyd(points, points.select_rows(chosen.iter())).0
}
