//! Pose-graph data model.

use nalgebra::SMatrix;

use crate::error::GraphError;
use crate::lie::{LieGroup, Se2, Se3, Tangent};
use crate::robust::RobustConfig;

pub type VertexId = usize;
pub type Information<const D: usize> = SMatrix<f64, D, D>;

/// Origin of a loop closure, carried for scoring only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Inlier,
    InjectedOutlier,
    Unknown,
}

/// Relative-pose factor `z ≈ between(x_from, x_to)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge<P, const D: usize> {
    pub from: VertexId,
    pub to: VertexId,
    pub measurement: P,
    information: Information<D>,
    /// Upper-triangular `L` with `LᵀL = information`.
    sqrt_information: Information<D>,
}

impl<P: LieGroup<D>, const D: usize> Edge<P, D> {
    /// Fails unless the information matrix is symmetric to 1e-9 and positive-definite.
    pub fn new(from: VertexId, to: VertexId, measurement: P, information: Information<D>) -> Result<Self, GraphError> {
        let bad = || GraphError::InvalidInformationMatrix { from, to };
        let scale = information.amax().max(1.0);
        if information.iter().any(|v| !v.is_finite()) || (information - information.transpose()).amax() > 1e-9 * scale {
            return Err(bad());
        }
        let sym = (information + information.transpose()) * 0.5;
        let chol = sym.cholesky().ok_or_else(bad)?;
        let sqrt_information = chol.l().transpose();
        Ok(Self { from, to, measurement, information: sym, sqrt_information })
    }

    pub fn information(&self) -> &Information<D> {
        &self.information
    }

    pub fn sqrt_information(&self) -> &Information<D> {
        &self.sqrt_information
    }

    /// Unwhitened error `log(z⁻¹ · x_from⁻¹ · x_to)`.
    pub fn error(&self, xi: &P, xj: &P) -> Tangent<D> {
        self.measurement.between(&xi.between(xj)).log()
    }

    /// Whitened residual `L · error`.
    pub fn whitened_residual(&self, xi: &P, xj: &P) -> Tangent<D> {
        self.sqrt_information * self.error(xi, xj)
    }

    pub fn chi2(&self, xi: &P, xj: &P) -> f64 {
        self.whitened_residual(xi, xj).norm_squared()
    }

    /// Whitened residual and its Jacobians with respect to right perturbations
    /// of `x_from` and `x_to`.
    pub fn linearize(&self, xi: &P, xj: &P) -> (Tangent<D>, SMatrix<f64, D, D>, SMatrix<f64, D, D>) {
        let e = self.error(xi, xj);
        let jr_inv = P::right_jacobian_inv(&e);
        let jj = self.sqrt_information * jr_inv;
        let ji = -(jj * xj.between(xi).adjoint());
        (self.sqrt_information * e, ji, jj)
    }

    /// The same constraint seen from the other endpoint.
    pub fn reversed(&self) -> Self {
        let ad_inv = self.measurement.inverse().adjoint();
        let info = ad_inv.transpose() * self.information * ad_inv;
        let info = (info + info.transpose()) * 0.5;
        Edge::new(self.to, self.from, self.measurement.inverse(), info).expect("congruent transform preserves SPD")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopEdge<P, const D: usize> {
    pub edge: Edge<P, D>,
    pub provenance: Provenance,
}

/// Position of an edge in the original insertion order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeRef {
    Odometry(usize),
    Loop(usize),
}

/// Vertices `0..N` with their stored estimates, odometry and loop edges.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseGraph<P, const D: usize> {
    vertices: Vec<P>,
    odometry: Vec<Edge<P, D>>,
    loops: Vec<LoopEdge<P, D>>,
    order: Vec<EdgeRef>,
}

pub type Graph2 = PoseGraph<Se2, 3>;
pub type Graph3 = PoseGraph<Se3, 6>;

impl<P: LieGroup<D>, const D: usize> Default for PoseGraph<P, D> {
    fn default() -> Self {
        Self { vertices: Vec::new(), odometry: Vec::new(), loops: Vec::new(), order: Vec::new() }
    }
}

impl<P: LieGroup<D>, const D: usize> PoseGraph<P, D> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_vertices(vertices: Vec<P>) -> Self {
        Self { vertices, ..Self::default() }
    }

    pub fn add_vertex(&mut self, pose: P) -> VertexId {
        self.vertices.push(pose);
        self.vertices.len() - 1
    }

    fn check_endpoints(&self, edge: &Edge<P, D>) -> Result<(), GraphError> {
        for v in [edge.from, edge.to] {
            if v >= self.vertices.len() {
                return Err(GraphError::MissingVertex { from: edge.from, to: edge.to, missing: v });
            }
        }
        Ok(())
    }

    pub fn add_odometry(&mut self, edge: Edge<P, D>) -> Result<(), GraphError> {
        self.check_endpoints(&edge)?;
        self.order.push(EdgeRef::Odometry(self.odometry.len()));
        self.odometry.push(edge);
        Ok(())
    }

    pub fn add_loop(&mut self, edge: Edge<P, D>, provenance: Provenance) -> Result<(), GraphError> {
        self.check_endpoints(&edge)?;
        if edge.from == edge.to {
            return Err(GraphError::SelfLoop(edge.from));
        }
        self.order.push(EdgeRef::Loop(self.loops.len()));
        self.loops.push(LoopEdge { edge, provenance });
        Ok(())
    }

    pub fn vertices(&self) -> &[P] {
        &self.vertices
    }

    pub fn set_vertices(&mut self, vertices: Vec<P>) {
        assert_eq!(vertices.len(), self.vertices.len());
        self.vertices = vertices;
    }

    pub fn odometry(&self) -> &[Edge<P, D>] {
        &self.odometry
    }

    pub fn loops(&self) -> &[LoopEdge<P, D>] {
        &self.loops
    }

    pub fn loops_mut(&mut self) -> &mut [LoopEdge<P, D>] {
        &mut self.loops
    }

    /// Edges in insertion (file) order.
    pub fn edge_order(&self) -> &[EdgeRef] {
        &self.order
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.order.len()
    }

    pub fn edge(&self, r: EdgeRef) -> &Edge<P, D> {
        match r {
            EdgeRef::Odometry(k) => &self.odometry[k],
            EdgeRef::Loop(k) => &self.loops[k].edge,
        }
    }

    /// Poses chained from vertex 0 through the odometry edges.
    pub fn dead_reckoning(&self) -> Result<Vec<P>, GraphError> {
        let n = self.vertices.len();
        let mut step: Vec<Option<P>> = vec![None; n.saturating_sub(1)];
        for e in &self.odometry {
            if e.to == e.from + 1 && step[e.from].is_none() {
                step[e.from] = Some(e.measurement);
            } else if e.from == e.to + 1 && step[e.to].is_none() {
                step[e.to] = Some(e.measurement.inverse());
            }
        }
        let mut poses = Vec::with_capacity(n);
        if n == 0 {
            return Ok(poses);
        }
        poses.push(P::identity());
        for (k, s) in step.iter().enumerate() {
            let s = s.ok_or(GraphError::Disconnected(k + 1))?;
            let next = poses[k].compose(&s);
            poses.push(next);
        }
        Ok(poses)
    }

    /// Sum of χ² over all edges at `poses` (the L2 objective in χ² units).
    pub fn total_chi2(&self, poses: &[P]) -> f64 {
        let odo: f64 = self.odometry.iter().map(|e| e.chi2(&poses[e.from], &poses[e.to])).sum();
        let lc: f64 = self.loops.iter().map(|l| l.edge.chi2(&poses[l.edge.from], &poses[l.edge.to])).sum();
        odo + lc
    }

    /// Copy containing only the edges among the first `count` in insertion
    /// order, and only the vertices they reach from the chain.
    pub fn prefix(&self, count: usize) -> Self {
        let mut g = Self::default();
        let refs = &self.order[..count.min(self.order.len())];
        let max_v = refs.iter().map(|r| { let e = self.edge(*r); e.from.max(e.to) }).max().map_or(1, |m| m + 1);
        g.vertices = self.vertices[..max_v.min(self.vertices.len())].to_vec();
        for r in refs {
            match *r {
                EdgeRef::Odometry(k) => g.add_odometry(self.odometry[k].clone()).expect("prefix endpoints exist"),
                EdgeRef::Loop(k) => {
                    let l = &self.loops[k];
                    g.add_loop(l.edge.clone(), l.provenance).expect("prefix endpoints exist")
                }
            }
        }
        g
    }

    /// The same graph with edges in arrival order: stably sorted by their
    /// newest endpoint. Also returns, for each loop of the result, its index
    /// in `self.loops()`.
    pub fn arrival_order(&self) -> (Self, Vec<usize>) {
        let mut refs = self.order.clone();
        refs.sort_by_key(|r| {
            let e = self.edge(*r);
            e.from.max(e.to)
        });
        let mut g = Self { vertices: self.vertices.clone(), ..Self::default() };
        let mut loop_index = Vec::with_capacity(self.loops.len());
        for r in refs {
            match r {
                EdgeRef::Odometry(k) => g.add_odometry(self.odometry[k].clone()).expect("same vertices"),
                EdgeRef::Loop(k) => {
                    let l = &self.loops[k];
                    g.add_loop(l.edge.clone(), l.provenance).expect("same vertices");
                    loop_index.push(k);
                }
            }
        }
        (g, loop_index)
    }

    /// Set of unordered loop endpoint pairs.
    pub fn loop_pairs(&self) -> std::collections::HashSet<(VertexId, VertexId)> {
        self.loops.iter().map(|l| (l.edge.from.min(l.edge.to), l.edge.from.max(l.edge.to))).collect()
    }
}

/// A graph of either dimension, as read from a file.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyGraph {
    Se2(Graph2),
    Se3(Graph3),
}

impl AnyGraph {
    pub fn num_vertices(&self) -> usize {
        match self {
            AnyGraph::Se2(g) => g.num_vertices(),
            AnyGraph::Se3(g) => g.num_vertices(),
        }
    }

    pub fn num_loops(&self) -> usize {
        match self {
            AnyGraph::Se2(g) => g.loops().len(),
            AnyGraph::Se3(g) => g.loops().len(),
        }
    }

    pub fn dof(&self) -> usize {
        match self {
            AnyGraph::Se2(_) => 3,
            AnyGraph::Se3(_) => 6,
        }
    }
}

/// Layout of the latent variables a strategy appends after the poses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Latents {
    None,
    /// One switch per loop, in loop order.
    Switches(usize),
    /// The single shared shape parameter.
    Alpha,
}

impl Latents {
    pub fn count(&self) -> usize {
        match *self {
            Latents::None => 0,
            Latents::Switches(n) => n,
            Latents::Alpha => 1,
        }
    }
}

/// Variable accounting for a graph under a robust strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentedProblem {
    pub num_poses: usize,
    pub dof: usize,
    pub latents: Latents,
}

impl AugmentedProblem {
    pub fn pose_dim(&self) -> usize {
        self.num_poses * self.dof
    }

    pub fn total_dim(&self) -> usize {
        self.pose_dim() + self.latents.count()
    }

    pub fn extra_variables(&self) -> usize {
        self.latents.count()
    }
}

pub fn attach_latents<P: LieGroup<D>, const D: usize>(graph: &PoseGraph<P, D>, config: &RobustConfig) -> AugmentedProblem {
    let latents = match config {
        RobustConfig::Sc(_) => Latents::Switches(graph.loops().len()),
        RobustConfig::Aeros(_) => Latents::Alpha,
        _ => Latents::None,
    };
    AugmentedProblem { num_poses: graph.num_vertices(), dof: D, latents }
}
