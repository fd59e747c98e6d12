//! Fixtures shared by the benches.

use aeros_core::gio::{inject_outliers_any, manhattan, CorruptionSpec, ManhattanConfig};
use aeros_core::{AnyGraph, Graph2};

/// Synthetic Manhattan graph of `poses` vertices with 20% injected outliers.
pub fn corrupted_manhattan(poses: usize) -> Graph2 {
    let cfg = ManhattanConfig { poses, loops: poses / 5, half_width: ((poses as f64).sqrt() / 4.0).ceil() as i64, ..ManhattanConfig::default() };
    let d = manhattan(&cfg).expect("synthetic graph");
    let spec = CorruptionSpec { ratios: vec![20.0], ..CorruptionSpec::default() };
    match inject_outliers_any(&AnyGraph::Se2(d.graph), &spec, 0).expect("corruption").remove(0) {
        AnyGraph::Se2(g) => g,
        AnyGraph::Se3(_) => unreachable!("2D input"),
    }
}
