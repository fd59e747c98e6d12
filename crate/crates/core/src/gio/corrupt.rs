//! Seeded injection of false loop closures on top of the existing loops.

use std::collections::HashSet;

use nalgebra::{UnitQuaternion, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::IoError;
use crate::graph::{AnyGraph, Edge, PoseGraph, Provenance};
use crate::lie::{LieGroup, Se2, Se3};

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionSpec {
    /// Outlier counts as percentages of the inlier loop count, ascending.
    pub ratios: Vec<f64>,
    pub seed: u64,
    /// Each ratio's outliers contain those of every lower ratio.
    pub nested: bool,
    /// Side of the translation box; defaults to half the bounding-box diagonal
    /// of the graph's vertices.
    pub translation_extent: Option<f64>,
    pub min_index_separation: usize,
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        Self {
            ratios: vec![10.0, 20.0, 30.0, 40.0, 50.0],
            seed: 0,
            nested: true,
            translation_extent: None,
            min_index_separation: 10,
        }
    }
}

/// Poses that can be drawn as random relative measurements.
pub trait RandomPose<const D: usize>: LieGroup<D> {
    /// Translation uniform in `[-extent/2, extent/2]` per axis, rotation uniform.
    fn random<R: Rng>(rng: &mut R, extent: f64) -> Self;
}

impl RandomPose<3> for Se2 {
    fn random<R: Rng>(rng: &mut R, extent: f64) -> Self {
        let h = 0.5 * extent;
        Se2::new(rng.gen_range(-h..=h), rng.gen_range(-h..=h), rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
    }
}

impl RandomPose<6> for Se3 {
    fn random<R: Rng>(rng: &mut R, extent: f64) -> Self {
        let h = 0.5 * extent;
        let t = Vector3::new(rng.gen_range(-h..=h), rng.gen_range(-h..=h), rng.gen_range(-h..=h));
        // uniform unit quaternion from three uniform variates
        let (u1, u2, u3): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
        let tau = std::f64::consts::TAU;
        let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
        let q = nalgebra::Quaternion::new(b * (tau * u3).cos(), a * (tau * u2).sin(), a * (tau * u2).cos(), b * (tau * u3).sin());
        Se3::new(t, UnitQuaternion::from_quaternion(q))
    }
}

/// Generator for run `run_index` of a Monte-Carlo sweep seeded with `seed`.
pub fn run_rng(seed: u64, run_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run_index);
    rng
}

/// Number of outliers injected at `ratio` percent of `inliers`.
pub fn outlier_count(ratio: f64, inliers: usize) -> usize {
    (ratio / 100.0 * inliers as f64).round() as usize
}

/// Diagonal of the axis-aligned box around the vertex positions.
pub fn bounding_box_diagonal<P: LieGroup<D>, const D: usize>(poses: &[P]) -> f64 {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in poses {
        let t = p.translation3();
        lo = lo.inf(&t);
        hi = hi.sup(&t);
    }
    if poses.is_empty() {
        0.0
    } else {
        (hi - lo).norm()
    }
}

/// One corrupted copy of `graph` per ratio in `spec.ratios`, fully determined
/// by `(spec.seed, run_index)`.
pub fn inject_outliers<P: RandomPose<D>, const D: usize>(
    graph: &PoseGraph<P, D>,
    spec: &CorruptionSpec,
    run_index: u64,
) -> Result<Vec<PoseGraph<P, D>>, IoError> {
    if spec.ratios.windows(2).any(|w| w[1] < w[0]) || spec.ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(IoError::InvalidSpec("ratios must be finite, non-negative and ascending".into()));
    }
    let n = graph.num_vertices();
    if n < 2 {
        return Err(IoError::InsufficientVertices(n));
    }
    let inliers = graph.loops().iter().filter(|l| l.provenance != Provenance::InjectedOutlier).count();
    let counts: Vec<usize> = spec.ratios.iter().map(|r| outlier_count(*r, inliers)).collect();
    let sep = spec.min_index_separation.max(2);
    let available = if n > sep { (n - sep) * (n - sep + 1) / 2 } else { 0 };
    let taken = graph.loop_pairs();
    let largest = counts.iter().copied().max().unwrap_or(0);
    if largest > available.saturating_sub(taken.len()) {
        return Err(IoError::InsufficientVertices(n));
    }
    let extent = spec.translation_extent.unwrap_or_else(|| 0.5 * bounding_box_diagonal(graph.vertices())).max(1e-6);
    let mut rng = run_rng(spec.seed, run_index);

    let informations: Vec<_> = if graph.loops().is_empty() {
        graph.odometry().iter().map(|e| *e.information()).collect()
    } else {
        graph.loops().iter().map(|l| *l.edge.information()).collect()
    };
    if informations.is_empty() && largest > 0 {
        return Err(IoError::InvalidSpec("graph has no edge to copy an information matrix from".into()));
    }
    let draw = |rng: &mut ChaCha8Rng, count: usize, used: &mut HashSet<(usize, usize)>| -> Vec<Edge<P, D>> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            if i.abs_diff(j) < sep || !used.insert((i.min(j), i.max(j))) {
                continue;
            }
            let z = P::random(rng, extent);
            let info = *informations.choose(rng).expect("graph has edges");
            out.push(Edge::new(i, j, z, info).expect("information copied from a valid edge"));
        }
        out
    };

    let mut graphs = Vec::with_capacity(counts.len());
    if spec.nested {
        let mut used = taken.clone();
        let pool = draw(&mut rng, largest, &mut used);
        for &c in &counts {
            graphs.push(with_outliers(graph, &pool[..c]));
        }
    } else {
        for &c in &counts {
            let mut used = taken.clone();
            let edges = draw(&mut rng, c, &mut used);
            graphs.push(with_outliers(graph, &edges));
        }
    }
    Ok(graphs)
}

fn with_outliers<P: LieGroup<D>, const D: usize>(graph: &PoseGraph<P, D>, edges: &[Edge<P, D>]) -> PoseGraph<P, D> {
    let mut g = graph.clone();
    for e in edges {
        g.add_loop(e.clone(), Provenance::InjectedOutlier).expect("endpoints were drawn from the graph");
    }
    g
}

pub fn inject_outliers_any(graph: &AnyGraph, spec: &CorruptionSpec, run_index: u64) -> Result<Vec<AnyGraph>, IoError> {
    Ok(match graph {
        AnyGraph::Se2(g) => inject_outliers(g, spec, run_index)?.into_iter().map(AnyGraph::Se2).collect(),
        AnyGraph::Se3(g) => inject_outliers(g, spec, run_index)?.into_iter().map(AnyGraph::Se3).collect(),
    })
}
