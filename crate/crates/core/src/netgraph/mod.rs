//! Random sector directed graphs.
//!
//! Each node carries a sector `(orientation, scan angle, range, position)`.
//! Node `i` links to node `j` iff `j` lies in the sector of `i`: within range
//! (inclusive) and within `±scan_angle/2` of the orientation (inclusive).

mod paths;
mod scan;
mod text;

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, Point2, Rotation2, Vector2};
use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::{Error, Result};

pub use paths::{all_pairs_shortest_paths, hop_counts, shortest_path_distances};
pub use scan::SectorIndex;
pub use text::node_table_text;

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(TAU);
    if a > PI {
        a -= TAU;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeSector {
    pub position: Point2<f64>,
    /// Sector axis, normalized to `[0, 2π)`.
    pub orientation: f64,
    /// Full opening angle in `(0, 2π]`.
    pub scan_angle: f64,
    pub range: f64,
}

impl NodeSector {
    pub fn new(position: Point2<f64>, orientation: f64, scan_angle: f64, range: f64) -> Result<Self> {
        if !(scan_angle > 0.0 && scan_angle <= TAU) {
            return Err(Error::domain("scan_angle", format!("{scan_angle} outside (0, 2pi]")));
        }
        if !(range >= 0.0 && range.is_finite()) {
            return Err(Error::domain("range", format!("{range} must be >= 0")));
        }
        if !orientation.is_finite() || !position.x.is_finite() || !position.y.is_finite() {
            return Err(Error::domain("sector", "orientation and position must be finite"));
        }
        Ok(NodeSector { position, orientation: orientation.rem_euclid(TAU), scan_angle, range })
    }

    /// Whether a displacement from this node's position falls in the sector.
    pub fn covers_offset(&self, offset: Vector2<f64>) -> bool {
        let dist2 = offset.norm_squared();
        if dist2 == 0.0 || dist2 > self.range * self.range {
            return false;
        }
        let bearing = offset.y.atan2(offset.x);
        wrap_angle(bearing - self.orientation).abs() <= self.scan_angle / 2.0
    }
}

/// Sector membership of `point` in plane geometry. A node never contains
/// its own position.
pub fn in_sector(sector: &NodeSector, point: &Point2<f64>) -> bool {
    sector.covers_offset(point - sector.position)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BorderMode {
    /// Square deployment area with hard edges.
    Bounded,
    /// Square with opposite edges identified (minimum-image distances).
    Torus,
}

impl BorderMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BorderMode::Bounded => "bounded",
            BorderMode::Torus => "torus",
        }
    }
}

impl std::str::FromStr for BorderMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bounded" => Ok(BorderMode::Bounded),
            "torus" => Ok(BorderMode::Torus),
            other => Err(Error::domain("border_mode", format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlacementLaw {
    /// Exactly `nodes` i.i.d. uniform positions.
    FixedCount,
    /// Node count drawn from Poisson with mean `nodes`.
    Poisson,
}

/// Parameters of one random deployment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deployment {
    pub nodes: usize,
    pub area_side: f64,
    pub scan_angle: f64,
    pub range: f64,
    pub border: BorderMode,
    pub placement: PlacementLaw,
}

impl Deployment {
    pub fn new(nodes: usize, area_side: f64, scan_angle: f64, range: f64) -> Self {
        Deployment {
            nodes,
            area_side,
            scan_angle,
            range,
            border: BorderMode::Bounded,
            placement: PlacementLaw::FixedCount,
        }
    }

    pub fn with_border(mut self, border: BorderMode) -> Self {
        self.border = border;
        self
    }

    pub fn with_placement(mut self, placement: PlacementLaw) -> Self {
        self.placement = placement;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.placement == PlacementLaw::FixedCount && self.nodes == 0 {
            return Err(Error::domain("nodes", "need at least one node"));
        }
        if !(self.area_side > 0.0 && self.area_side.is_finite()) {
            return Err(Error::domain("area_side", format!("{} must be positive", self.area_side)));
        }
        if !(self.scan_angle > 0.0 && self.scan_angle <= TAU) {
            return Err(Error::domain("scan_angle", format!("{} outside (0, 2pi]", self.scan_angle)));
        }
        if !(self.range >= 0.0 && self.range.is_finite()) {
            return Err(Error::domain("range", format!("{} must be >= 0", self.range)));
        }
        Ok(())
    }

    /// Draws node sectors: count (if Poisson), then per node x, y, orientation.
    pub fn sample_sectors<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<NodeSector>> {
        self.validate()?;
        let count = match self.placement {
            PlacementLaw::FixedCount => self.nodes,
            PlacementLaw::Poisson => {
                if self.nodes == 0 {
                    0
                } else {
                    Poisson::new(self.nodes as f64).expect("positive mean").sample(rng) as usize
                }
            }
        };
        Ok((0..count)
            .map(|_| {
                let x = rng.random::<f64>() * self.area_side;
                let y = rng.random::<f64>() * self.area_side;
                let orientation = rng.random::<f64>() * TAU;
                NodeSector { position: Point2::new(x, y), orientation, scan_angle: self.scan_angle, range: self.range }
            })
            .collect())
    }
}

/// Generates a random sector directed graph.
pub fn deploy<R: Rng + ?Sized>(deployment: &Deployment, rng: &mut R) -> Result<DirectedSectorGraph> {
    let sectors = deployment.sample_sectors(rng)?;
    Ok(DirectedSectorGraph::from_sectors(sectors, deployment.area_side, deployment.border))
}

/// Node sectors plus the derived dense adjacency. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectedSectorGraph {
    nodes: Vec<NodeSector>,
    /// Row-major `M×M`; entry `(i, j)` is the link `i → j`.
    adjacency: Vec<bool>,
    area_side: f64,
    border: BorderMode,
}

impl DirectedSectorGraph {
    pub fn from_sectors(nodes: Vec<NodeSector>, area_side: f64, border: BorderMode) -> Self {
        let m = nodes.len();
        let mut graph = DirectedSectorGraph { nodes, adjacency: vec![false; m * m], area_side, border };
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    graph.adjacency[i * m + j] = graph.nodes[i].covers_offset(graph.offset(i, j));
                }
            }
        }
        graph
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[NodeSector] {
        &self.nodes
    }

    pub fn area_side(&self) -> f64 {
        self.area_side
    }

    pub fn border(&self) -> BorderMode {
        self.border
    }

    /// Displacement from node `i` to node `j`, minimum-image on the torus.
    pub fn offset(&self, i: usize, j: usize) -> Vector2<f64> {
        displacement(&self.nodes[i].position, &self.nodes[j].position, self.area_side, self.border)
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.offset(i, j).norm()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.len() + j]
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i < self.len() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { index: i, len: self.len() })
        }
    }

    pub fn descendants(&self, i: usize) -> Result<Vec<usize>> {
        self.check_index(i)?;
        Ok((0..self.len()).filter(|&j| self.has_edge(i, j)).collect())
    }

    pub fn antecedents(&self, i: usize) -> Result<Vec<usize>> {
        self.check_index(i)?;
        Ok((0..self.len()).filter(|&j| self.has_edge(j, i)).collect())
    }

    pub fn out_degrees(&self) -> Vec<usize> {
        let m = self.len();
        (0..m).map(|i| (0..m).filter(|&j| self.has_edge(i, j)).count()).collect()
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        let m = self.len();
        (0..m).map(|j| (0..m).filter(|&i| self.has_edge(i, j)).count()).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().filter(|&&e| e).count()
    }

    /// Degree-based k-connectivity: every node has at least `k` descendants
    /// and at least `k` antecedents. An empty graph is not connected.
    pub fn is_k_connected(&self, k: usize) -> bool {
        if self.is_empty() {
            return false;
        }
        let out = self.out_degrees();
        let inn = self.in_degrees();
        out.iter().zip(&inn).all(|(&o, &a)| o >= k && a >= k)
    }

    pub fn adjacency_matrix(&self) -> DMatrix<bool> {
        let m = self.len();
        DMatrix::from_fn(m, m, |i, j| self.has_edge(i, j))
    }

    /// `M×2` true coordinates.
    pub fn positions(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), 2, |i, c| self.nodes[i].position[c])
    }

    /// Pairwise true distances (border-aware).
    pub fn distance_matrix(&self) -> DMatrix<f64> {
        let m = self.len();
        DMatrix::from_fn(m, m, |i, j| if i == j { 0.0 } else { self.distance(i, j) })
    }

    /// The same network after a rigid motion: positions rotated by `angle`
    /// about the origin and shifted, orientations rotated with them. The
    /// adjacency is carried over unchanged. Only meaningful for bounded graphs.
    pub fn rigidly_moved(&self, angle: f64, shift: Vector2<f64>) -> Self {
        let rot = Rotation2::new(angle);
        let nodes = self
            .nodes
            .iter()
            .map(|n| NodeSector {
                position: rot * n.position + shift,
                orientation: (n.orientation + angle).rem_euclid(TAU),
                ..*n
            })
            .collect();
        DirectedSectorGraph { nodes, adjacency: self.adjacency.clone(), area_side: self.area_side, border: self.border }
    }

    pub(crate) fn from_parts(nodes: Vec<NodeSector>, adjacency: Vec<bool>, area_side: f64, border: BorderMode) -> Self {
        DirectedSectorGraph { nodes, adjacency, area_side, border }
    }
}

pub(crate) fn displacement(from: &Point2<f64>, to: &Point2<f64>, side: f64, border: BorderMode) -> Vector2<f64> {
    let mut d = to - from;
    if border == BorderMode::Torus {
        d.x -= side * (d.x / side).round();
        d.y -= side * (d.y / side).round();
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn sector(x: f64, y: f64, orientation: f64, phi: f64, r: f64) -> NodeSector {
        NodeSector::new(Point2::new(x, y), orientation, phi, r).unwrap()
    }

    #[test]
    fn boundary_is_inclusive() {
        let s = sector(0.0, 0.0, 0.0, PI / 2.0, 5.0);
        assert!(in_sector(&s, &Point2::new(5.0, 0.0)));
        assert!(!in_sector(&s, &Point2::new(5.000001, 0.0)));
        let edge = Rotation2::new(PI / 4.0) * Point2::new(1.0, 0.0);
        assert!(in_sector(&sector(0.0, 0.0, 0.0, PI / 2.0 + 1e-12, 5.0), &edge));
    }

    #[test]
    fn behind_the_node_is_outside() {
        let s = sector(1.0, 1.0, 0.3, PI / 2.0, 10.0);
        let behind = Point2::new(1.0 - 2.0 * 0.3f64.cos(), 1.0 - 2.0 * 0.3f64.sin());
        assert!(!in_sector(&s, &behind));
        assert!(!in_sector(&s, &s.position));
    }

    #[test]
    fn orientation_seam() {
        // axis just below 2π, point just above angle 0
        let s = sector(0.0, 0.0, TAU - 0.05, 0.2, 3.0);
        assert!(in_sector(&s, &Point2::new(1.0, 0.04)));
        assert!(!in_sector(&s, &Point2::new(1.0, 0.2)));
        assert!((s.orientation - (TAU - 0.05)).abs() < 1e-15);
        assert_eq!(sector(0.0, 0.0, -0.5, 1.0, 1.0).orientation, TAU - 0.5);
    }

    #[test]
    fn invalid_sectors_rejected() {
        assert!(NodeSector::new(Point2::origin(), 0.0, 0.0, 1.0).is_err());
        assert!(NodeSector::new(Point2::origin(), 0.0, 7.0, 1.0).is_err());
        assert!(NodeSector::new(Point2::origin(), 0.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn single_node_has_no_links() {
        let g = deploy(&Deployment::new(1, 10.0, PI, 5.0), &mut rng::stream(1, &[])).unwrap();
        assert_eq!(g.len(), 1);
        assert!(!g.has_edge(0, 0));
        assert!(!g.is_k_connected(1));
    }

    #[test]
    fn full_disk_is_symmetric() {
        let g = deploy(&Deployment::new(60, 100.0, TAU, 25.0), &mut rng::stream(2, &[])).unwrap();
        for i in 0..g.len() {
            for j in 0..g.len() {
                assert_eq!(g.has_edge(i, j), g.has_edge(j, i));
            }
            assert_eq!(g.descendants(i).unwrap(), g.antecedents(i).unwrap());
        }
    }

    #[test]
    fn same_seed_same_graph() {
        let d = Deployment::new(40, 50.0, 1.0, 12.0);
        let a = deploy(&d, &mut rng::stream(9, &[4])).unwrap();
        let b = deploy(&d, &mut rng::stream(9, &[4])).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        assert_eq!(a, b);
    }

    #[test]
    fn two_facing_nodes_are_one_connected() {
        let a = sector(0.0, 0.0, 0.0, 0.5, 3.0);
        let b = sector(2.0, 0.0, PI, 0.5, 3.0);
        let g = DirectedSectorGraph::from_sectors(vec![a, b], 10.0, BorderMode::Bounded);
        assert!(g.is_k_connected(1));
        assert!(!g.is_k_connected(2));
    }

    #[test]
    fn isolated_node_breaks_connectivity() {
        let a = sector(0.0, 0.0, 0.0, 0.5, 3.0);
        let b = sector(2.0, 0.0, PI, 0.5, 3.0);
        let c = sector(8.0, 8.0, 0.0, 0.5, 3.0);
        let g = DirectedSectorGraph::from_sectors(vec![a, b, c], 10.0, BorderMode::Bounded);
        assert!((1..4).all(|k| !g.is_k_connected(k)));
    }

    #[test]
    fn out_of_range_index() {
        let g = deploy(&Deployment::new(3, 10.0, PI, 5.0), &mut rng::stream(1, &[])).unwrap();
        assert_eq!(g.descendants(3), Err(Error::IndexOutOfRange { index: 3, len: 3 }));
        assert!(g.antecedents(7).is_err());
    }

    #[test]
    fn torus_wraps_links_across_edges() {
        let a = sector(0.5, 5.0, PI, 0.5, 2.0);
        let b = sector(9.5, 5.0, 0.0, 0.5, 2.0);
        let torus = DirectedSectorGraph::from_sectors(vec![a, b], 10.0, BorderMode::Torus);
        assert!(torus.has_edge(0, 1) && torus.has_edge(1, 0));
        assert!((torus.distance(0, 1) - 1.0).abs() < 1e-12);
        let bounded = DirectedSectorGraph::from_sectors(vec![a, b], 10.0, BorderMode::Bounded);
        assert_eq!(bounded.edge_count(), 0);
    }

    #[test]
    fn poisson_placement_varies_count() {
        let d = Deployment::new(50, 10.0, PI, 1.0).with_placement(PlacementLaw::Poisson);
        let counts: Vec<usize> = (0..20).map(|t| deploy(&d, &mut rng::stream(5, &[t])).unwrap().len()).collect();
        assert!(counts.iter().any(|&c| c != 50));
        let mean = counts.iter().sum::<usize>() as f64 / 20.0;
        assert!((mean - 50.0).abs() < 10.0);
    }
}
