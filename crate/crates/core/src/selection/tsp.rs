//! Ordering of measurement poses: nearest-neighbour construction followed by
//! 2-opt on open tours, batch by batch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::Configuration;

/// `d(a, b) = maxᵢ |aᵢ − bᵢ| · wᵢ`; with `wᵢ = 1/v_maxᵢ` this is the travel
/// time of a synchronized point-to-point motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointMetric {
    pub weights: Vec<f64>,
}

impl JointMetric {
    pub fn from_velocity_limits(v_max: &[f64]) -> Self {
        Self {
            weights: v_max.iter().map(|v| 1.0 / v).collect(),
        }
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.weights)
            .fold(0.0, |m, ((x, y), w)| f64::max(m, (x - y).abs() * w))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseBatch {
    pub configurations: Vec<Configuration>,
    /// Index of each visited configuration in the input list.
    pub order: Vec<usize>,
    pub tour_cost: f64,
}

/// Cost of visiting `configs` in the given order (open path).
pub fn tour_cost(configs: &[Configuration], metric: &JointMetric) -> f64 {
    configs
        .windows(2)
        .map(|w| metric.distance(&w[0], &w[1]))
        .sum()
}

fn nearest_neighbour(dist: &[Vec<f64>]) -> Vec<usize> {
    let n = dist.len();
    let mut visited = vec![false; n];
    let mut tour = Vec::with_capacity(n);
    let mut cur = 0;
    visited[0] = true;
    tour.push(0);
    for _ in 1..n {
        let next = (0..n)
            .filter(|&j| !visited[j])
            .min_by(|&a, &b| dist[cur][a].total_cmp(&dist[cur][b]))
            .expect("unvisited node remains");
        visited[next] = true;
        tour.push(next);
        cur = next;
    }
    tour
}

/// Best improvement of any single 2-opt move on the open path `tour`
/// (negative when an improving move exists).
///
/// The open path is treated as a cycle through a virtual node at zero
/// distance from every pose, so moves that reverse a prefix or a suffix are
/// included.
pub fn two_opt_improvement(tour: &[usize], dist: &[Vec<f64>]) -> f64 {
    let cyc = with_virtual(tour);
    let mut best = 0.0;
    scan_moves(&cyc, dist, |delta, _, _| {
        if delta < best {
            best = delta;
        }
        false
    });
    best
}

const VIRTUAL: usize = usize::MAX;

fn with_virtual(tour: &[usize]) -> Vec<usize> {
    std::iter::once(VIRTUAL).chain(tour.iter().copied()).collect()
}

fn d(dist: &[Vec<f64>], a: usize, b: usize) -> f64 {
    if a == VIRTUAL || b == VIRTUAL {
        0.0
    } else {
        dist[a][b]
    }
}

/// Calls `f(delta, i, j)` for every move replacing edges (i, i+1), (j, j+1)
/// with (i, j), (i+1, j+1). Stops early when `f` returns true.
fn scan_moves(cyc: &[usize], dist: &[Vec<f64>], mut f: impl FnMut(f64, usize, usize) -> bool) {
    let m = cyc.len();
    for i in 0..m.saturating_sub(2) {
        for j in i + 2..m {
            if i == 0 && j == m - 1 {
                continue;
            }
            let (a, b, c, e) = (cyc[i], cyc[i + 1], cyc[j], cyc[(j + 1) % m]);
            let delta = d(dist, a, c) + d(dist, b, e) - d(dist, a, b) - d(dist, c, e);
            if f(delta, i, j) {
                return;
            }
        }
    }
}

fn two_opt(tour: Vec<usize>, dist: &[Vec<f64>]) -> Vec<usize> {
    let mut cyc = with_virtual(&tour);
    loop {
        let mut mv = None;
        scan_moves(&cyc, dist, |delta, i, j| {
            if delta < -1e-12 {
                mv = Some((i, j));
                true
            } else {
                false
            }
        });
        match mv {
            Some((i, j)) => cyc[i + 1..=j].reverse(),
            None => break,
        }
    }
    cyc.into_iter().skip(1).collect()
}

/// Splits `configs` into consecutive batches of at most `batch_size` and
/// orders each batch into a short open tour.
pub fn order_poses(configs: &[Configuration], batch_size: usize, metric: &JointMetric) -> Result<Vec<PoseBatch>> {
    if batch_size < 2 {
        return Err(Error::InvalidInput("batch size must be at least 2".into()));
    }
    let mut out = Vec::new();
    for (b, batch) in configs.chunks(batch_size).enumerate() {
        let dist: Vec<Vec<f64>> = batch
            .iter()
            .map(|a| batch.iter().map(|c| metric.distance(a, c)).collect())
            .collect();
        let tour = two_opt(nearest_neighbour(&dist), &dist);
        let configurations: Vec<Configuration> = tour.iter().map(|&k| batch[k].clone()).collect();
        out.push(PoseBatch {
            tour_cost: tour_cost(&configurations, metric),
            order: tour.iter().map(|&k| b * batch_size + k).collect(),
            configurations,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metric(n: usize) -> JointMetric {
        JointMetric {
            weights: vec![1.0; n],
        }
    }

    #[test]
    fn batches_split_by_size() {
        let configs: Vec<Configuration> = (0..250).map(|i| Configuration(vec![i as f64, 0.0])).collect();
        let sizes: Vec<usize> = order_poses(&configs, 100, &metric(2))
            .unwrap()
            .iter()
            .map(|b| b.configurations.len())
            .collect();
        assert_eq!(sizes, vec![100, 100, 50]);
    }

    #[test]
    fn sorted_collinear_input_is_kept_optimal() {
        let configs: Vec<Configuration> = (0..30).map(|i| Configuration(vec![0.1 * i as f64, 0.5])).collect();
        let before = tour_cost(&configs, &metric(2));
        let batches = order_poses(&configs, 100, &metric(2)).unwrap();
        assert!((batches[0].tour_cost - before).abs() < 1e-12);
    }

    #[test]
    fn tiny_batches_are_valid() {
        let configs: Vec<Configuration> = vec![Configuration(vec![0.0]), Configuration(vec![1.0]), Configuration(vec![0.5])];
        let b = order_poses(&configs, 2, &metric(1)).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b[1].order, vec![2]);
        assert!(order_poses(&configs, 1, &metric(1)).is_err());
    }
}
