//! Seeded Manhattan-world pose graphs with exact ground truth.
//!
//! The robot walks unit steps on an integer grid inside a square, turning by
//! ±90° at random. A loop closure links a pose to an earlier visit of the same
//! cell. Measurements are ground truth perturbed by Gaussian tangent noise.
//! The stored information is more conservative than the sampled noise, in the
//! way the common Manhattan benchmark file is.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix3, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::graph::{Edge, Graph2, Provenance};
use crate::lie::{LieGroup, Se2};

pub const MANHATTAN_POSES: usize = 3500;
pub const MANHATTAN_LOOPS: usize = 2099;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManhattanConfig {
    pub poses: usize,
    pub loops: usize,
    /// Grid cells span `[-half_width, half_width]` on both axes.
    pub half_width: i64,
    pub turn_probability: f64,
    /// Standard deviations of the sampled noise.
    pub sigma_translation: f64,
    pub sigma_rotation: f64,
    /// Diagonal of the stored information matrix (x, y, θ).
    pub information: [f64; 3],
    /// Smallest index gap of a loop closure.
    pub min_loop_gap: usize,
    pub seed: u64,
}

impl Default for ManhattanConfig {
    fn default() -> Self {
        Self {
            poses: MANHATTAN_POSES,
            loops: MANHATTAN_LOOPS,
            half_width: 10,
            turn_probability: 0.25,
            sigma_translation: 0.03,
            sigma_rotation: 0.01,
            information: [44.7214, 44.7214, 30.9017],
            min_loop_gap: 10,
            seed: 3500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    /// Noisy graph; vertices hold the dead-reckoned initial guess.
    pub graph: Graph2,
    pub truth: Vec<Se2>,
}

const STEPS: [(i64, i64); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

fn walk(cfg: &ManhattanConfig, rng: &mut ChaCha8Rng) -> Vec<(i64, i64, usize)> {
    let inside = |x: i64, y: i64| x.abs() <= cfg.half_width && y.abs() <= cfg.half_width;
    let mut cells = Vec::with_capacity(cfg.poses);
    let (mut x, mut y, mut h) = (0i64, 0i64, 0usize);
    cells.push((x, y, h));
    while cells.len() < cfg.poses {
        let mut heading = h;
        if rng.gen_bool(cfg.turn_probability) {
            heading = if rng.gen_bool(0.5) { (h + 1) % 4 } else { (h + 3) % 4 };
        }
        let ok = |d: usize| inside(x + STEPS[d].0, y + STEPS[d].1);
        if !ok(heading) {
            let options: Vec<usize> = [h, (h + 1) % 4, (h + 3) % 4].into_iter().filter(|&d| ok(d)).collect();
            heading = options.choose(rng).copied().unwrap_or((h + 2) % 4);
        }
        h = heading;
        x += STEPS[h].0;
        y += STEPS[h].1;
        cells.push((x, y, h));
    }
    cells
}

/// Builds the dataset, or `None` when the walk revisits too few cells for the
/// requested loop count.
pub fn manhattan(cfg: &ManhattanConfig) -> Option<SyntheticDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let cells = walk(cfg, &mut rng);
    let truth: Vec<Se2> = cells.iter().map(|&(x, y, h)| Se2::new(x as f64, y as f64, h as f64 * FRAC_PI_2)).collect();

    let mut visits: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut candidates = Vec::new();
    for (j, &(x, y, _)) in cells.iter().enumerate() {
        let earlier = visits.entry((x, y)).or_default();
        let eligible: Vec<usize> = earlier.iter().copied().filter(|&i| j - i >= cfg.min_loop_gap).collect();
        if let Some(&i) = eligible.choose(&mut rng) {
            candidates.push((i, j));
        }
        earlier.push(j);
    }
    if candidates.len() < cfg.loops {
        return None;
    }
    let mut keep: Vec<usize> = rand::seq::index::sample(&mut rng, candidates.len(), cfg.loops).into_vec();
    keep.sort_unstable();
    let mut loops_at: HashMap<usize, usize> = HashMap::new();
    for k in keep {
        loops_at.insert(candidates[k].1, candidates[k].0);
    }

    let info = Matrix3::from_diagonal(&Vector3::from(cfg.information));
    let nt = Normal::new(0.0, cfg.sigma_translation).expect("finite sigma");
    let nr = Normal::new(0.0, cfg.sigma_rotation).expect("finite sigma");
    let noisy = |z: Se2, rng: &mut ChaCha8Rng| z.retract(&Vector3::new(nt.sample(rng), nt.sample(rng), nr.sample(rng)));

    let mut graph = Graph2::with_vertices(vec![Se2::identity(); cfg.poses]);
    for j in 1..cfg.poses {
        let z = noisy(truth[j - 1].between(&truth[j]), &mut rng);
        graph.add_odometry(Edge::new(j - 1, j, z, info).expect("diagonal information")).expect("vertices exist");
        if let Some(&i) = loops_at.get(&j) {
            let z = noisy(truth[i].between(&truth[j]), &mut rng);
            graph.add_loop(Edge::new(i, j, z, info).expect("diagonal information"), Provenance::Inlier).expect("vertices exist");
        }
    }
    let initial = graph.dead_reckoning().expect("odometry chain is complete");
    graph.set_vertices(initial);
    Some(SyntheticDataset { graph, truth })
}
