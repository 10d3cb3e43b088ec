use rand::Rng;

use crate::util::Prng;

pub const MAX_ITERS: usize = 100;
pub const TOL: f64 = 1e-6;

/// Result of clustering: per-point assignment and the member index chosen
/// as each cluster's representative (the medoid under squared Euclidean
/// distance to the final centroid).
#[derive(Debug, Clone)]
pub struct KmeansOutcome {
    pub assignment: Vec<usize>,
    pub medoids: Vec<usize>,
    pub objective: f64,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Weighted index draw proportional to `weights`; all-zero weights fall
/// back to a uniform draw over indices not yet used as seeds.
fn weighted_pick(rng: &mut Prng, weights: &[f64], used: &[bool]) -> usize {
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        let mut u = rng.gen::<f64>() * total;
        for (i, w) in weights.iter().enumerate() {
            u -= w;
            if u <= 0.0 {
                return i;
            }
        }
        return weights.len() - 1;
    }
    let free: Vec<usize> = (0..weights.len()).filter(|i| !used[*i]).collect();
    free[rng.gen_range(0..free.len())]
}

/// Lloyd's algorithm with k-means++ seeding, seeded and fully
/// deterministic. `points` must contain at least `k` entries. Empty
/// clusters are repaired by moving in the first point (in input order)
/// from a cluster that can spare one, so every cluster ends non-empty
/// and medoids are distinct.
pub fn kmeans(points: &[Vec<f64>], k: usize, rng: &mut Prng) -> KmeansOutcome {
    assert!(k > 0 && points.len() >= k, "need at least k points");
    let n = points.len();

    // k-means++ seeding
    let mut used = vec![false; n];
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = rng.gen_range(0..n);
    used[first] = true;
    centroids.push(points[first].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    for _ in 1..k {
        let pick = weighted_pick(rng, &d2, &used);
        used[pick] = true;
        centroids.push(points[pick].clone());
        let c = centroids.last().unwrap();
        for (i, p) in points.iter().enumerate() {
            let d = dist2(p, c);
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }

    let dim = points[0].len();
    let mut assignment = vec![0usize; n];
    for _ in 0..MAX_ITERS {
        for (i, p) in points.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (j, c) in centroids.iter().enumerate() {
                let d = dist2(p, c);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            assignment[i] = best;
        }

        let mut counts = vec![0usize; k];
        for &a in &assignment {
            counts[a] += 1;
        }
        for j in 0..k {
            while counts[j] == 0 {
                let donor = assignment
                    .iter()
                    .position(|&a| counts[a] > 1)
                    .expect("n >= k guarantees a donor");
                counts[assignment[donor]] -= 1;
                assignment[donor] = j;
                counts[j] += 1;
            }
        }

        let mut next = vec![vec![0.0f64; dim]; k];
        for (p, &a) in points.iter().zip(&assignment) {
            for (acc, x) in next[a].iter_mut().zip(p) {
                *acc += x;
            }
        }
        for (c, &cnt) in next.iter_mut().zip(&counts) {
            for x in c.iter_mut() {
                *x /= cnt as f64;
            }
        }

        let moved = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| dist2(a, b).sqrt())
            .fold(0.0f64, f64::max);
        centroids = next;
        if moved < TOL {
            break;
        }
    }

    // final assignment against the converged centroids
    for (i, p) in points.iter().enumerate() {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (j, c) in centroids.iter().enumerate() {
            let d = dist2(p, c);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        assignment[i] = best;
    }
    let mut counts = vec![0usize; k];
    for &a in &assignment {
        counts[a] += 1;
    }
    for j in 0..k {
        while counts[j] == 0 {
            let donor = assignment
                .iter()
                .position(|&a| counts[a] > 1)
                .expect("n >= k guarantees a donor");
            counts[assignment[donor]] -= 1;
            assignment[donor] = j;
            counts[j] += 1;
        }
    }

    // medoid per cluster: member nearest its centroid, first index on ties
    let mut medoids = vec![usize::MAX; k];
    let mut best_d = vec![f64::INFINITY; k];
    for (i, p) in points.iter().enumerate() {
        let j = assignment[i];
        let d = dist2(p, &centroids[j]);
        if d < best_d[j] {
            best_d[j] = d;
            medoids[j] = i;
        }
    }
    let objective: f64 = points
        .iter()
        .zip(&assignment)
        .map(|(p, &a)| dist2(p, &centroids[a]))
        .sum();
    KmeansOutcome { assignment, medoids, objective }
}
