//! g2o round trips, Umeyama recovery and trajectory-metric invariances.

use std::path::PathBuf;

use aeros_core::eval::{ate, rte, umeyama_align};
use aeros_core::gio::{inject_outliers_any, manhattan, parse_g2o, write_any, CorruptionSpec, ManhattanConfig};
use aeros_core::lie::Tangent;
use aeros_core::{AnyGraph, LieGroup, PoseGraph, Provenance, Se3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Verdict;

/// Largest pose or information difference between two graphs with the same
/// structure, or `None` when the structure differs.
fn graph_gap<P: LieGroup<D>, const D: usize>(a: &PoseGraph<P, D>, b: &PoseGraph<P, D>) -> Option<f64> {
    let pose = |x: &P, y: &P| x.between(y).log().amax();
    let info = |x: &aeros_core::Edge<P, D>, y: &aeros_core::Edge<P, D>| (x.information() - y.information()).amax() / x.information().amax().max(1.0);
    if a.num_vertices() != b.num_vertices() || a.odometry().len() != b.odometry().len() || a.loops().len() != b.loops().len() {
        return None;
    }
    let mut gap = 0f64;
    for (x, y) in a.vertices().iter().zip(b.vertices()) {
        gap = gap.max(pose(x, y));
    }
    for (x, y) in a.odometry().iter().zip(b.odometry()) {
        if (x.from, x.to) != (y.from, y.to) {
            return None;
        }
        gap = gap.max(pose(&x.measurement, &y.measurement)).max(info(x, y));
    }
    for (x, y) in a.loops().iter().zip(b.loops()) {
        // g2o records injected outliers only; inlier and unknown loops read back alike.
        let outlier = |p: Provenance| p == Provenance::InjectedOutlier;
        if (x.edge.from, x.edge.to, outlier(x.provenance)) != (y.edge.from, y.edge.to, outlier(y.provenance)) {
            return None;
        }
        gap = gap.max(pose(&x.edge.measurement, &y.edge.measurement)).max(info(&x.edge, &y.edge));
    }
    Some(gap)
}

fn any_gap(a: &AnyGraph, b: &AnyGraph) -> Option<f64> {
    match (a, b) {
        (AnyGraph::Se2(a), AnyGraph::Se2(b)) => graph_gap(a, b),
        (AnyGraph::Se3(a), AnyGraph::Se3(b)) => graph_gap(a, b),
        _ => None,
    }
}

fn round_trip(name: &str, original: &AnyGraph, v: &mut Verdict) {
    let text = write_any(original);
    let back = match parse_g2o(&text) {
        Ok(g) => g,
        Err(e) => {
            v.check(false, format!("{name}: written file does not parse: {e}"));
            return;
        }
    };
    match any_gap(original, &back) {
        Some(gap) => {
            v.check(gap <= 1e-9, format!("{name}: round trip changes values by {gap:.2e}"));
            v.note(format!("{name}: {} vertices, {} loops, round-trip gap {gap:.1e}", original.num_vertices(), original.num_loops()));
        }
        None => {
            v.check(false, format!("{name}: round trip changes the graph structure"));
        }
    }
}

fn random_pose(rng: &mut ChaCha8Rng, extent: f64) -> Se3 {
    let t = Tangent::<6>::from_fn(|k, _| if k < 3 { rng.gen_range(-extent..extent) } else { rng.gen_range(-3.0..3.0) });
    Se3::exp(&t)
}

/// A random walk with steps of 1 to 3 m.
fn random_trajectory(rng: &mut ChaCha8Rng, len: usize) -> Vec<Se3> {
    let mut out = vec![Se3::identity()];
    for _ in 1..len {
        let step = Tangent::<6>::new(rng.gen_range(1.0..3.0), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2), rng.gen_range(-0.4..0.4));
        out.push(out.last().unwrap().retract(&step));
    }
    out
}

fn perturb(rng: &mut ChaCha8Rng, t: &[Se3]) -> Vec<Se3> {
    t.iter().map(|p| p.retract(&Tangent::<6>::from_fn(|_, _| rng.gen_range(-0.3..0.3)))).collect()
}

pub fn parser_and_eval() -> Verdict {
    let mut v = Verdict::new();

    let m = manhattan(&ManhattanConfig::default()).expect("default Manhattan graph");
    let graph = AnyGraph::Se2(m.graph);
    round_trip("Manhattan3500", &graph, &mut v);
    match inject_outliers_any(&graph, &CorruptionSpec { ratios: vec![20.0], ..CorruptionSpec::default() }, 0) {
        Ok(g) => round_trip("Manhattan3500 with 20% outliers", &g[0], &mut v),
        Err(e) => {
            v.check(false, format!("corruption failed: {e}"));
        }
    }
    let sphere_path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/sphere2500.g2o");
    match std::fs::read_to_string(&sphere_path).map_err(|e| e.to_string()).and_then(|t| parse_g2o(&t).map_err(|e| e.to_string())) {
        Ok(sphere) => {
            v.check(matches!(sphere, AnyGraph::Se3(_)), "Sphere2500 parses as a 3D graph");
            round_trip("Sphere2500", &sphere, &mut v);
        }
        Err(e) => {
            v.check(false, format!("cannot read {}: {e}", sphere_path.display()));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst_align = 0f64;
    let mut worst_invariance = 0f64;
    for _ in 0..100 {
        let reference = random_trajectory(&mut rng, 60);
        let t = random_pose(&mut rng, 100.0);
        let moved: Vec<Se3> = reference.iter().map(|p| t.compose(p)).collect();
        match umeyama_align(&moved, &reference) {
            Ok(a) => {
                let recovered = a.as_pose().compose(&t);
                worst_align = worst_align.max(recovered.log().amax());
            }
            Err(e) => {
                v.check(false, format!("Umeyama failed: {e}"));
            }
        }

        let estimate = perturb(&mut rng, &reference);
        let u = random_pose(&mut rng, 100.0);
        let moved_estimate: Vec<Se3> = estimate.iter().map(|p| u.compose(p)).collect();
        let lengths = [10.0, 50.0];
        let (a0, _) = ate(&estimate, &reference, true).unwrap();
        let (a1, _) = ate(&moved_estimate, &reference, true).unwrap();
        let (self_ate, _) = ate(&reference, &reference, true).unwrap();
        let r0 = rte(&estimate, &reference, &lengths).unwrap();
        let r1 = rte(&moved_estimate, &reference, &lengths).unwrap();
        let self_rte = rte(&reference, &reference, &lengths).unwrap();
        let mut gap = (a0 - a1).abs().max(self_ate);
        for ((x, y), z) in r0.iter().zip(&r1).zip(&self_rte) {
            gap = gap.max((x.mean - y.mean).abs()).max((x.rmse - y.rmse).abs()).max(z.rmse);
            v.check(x.count == y.count && x.count > 0, "RTE segments are found");
        }
        worst_invariance = worst_invariance.max(gap);
    }
    v.check(worst_align <= 1e-9, format!("Umeyama recovers rigid transforms only to {worst_align:.2e}"));
    v.check(worst_invariance <= 1e-9, format!("ATE/RTE invariance holds only to {worst_invariance:.2e}"));
    v.details.dedup();
    v.note(format!("100 random transforms: alignment error {worst_align:.1e}; metric invariance gap {worst_invariance:.1e}"));
    v
}
