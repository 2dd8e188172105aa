//! Mesh data model, generators, and validation.
//!
//! Meshes are flat node/cell lists. Cells are simple counter-clockwise
//! polygons with any vertex count >= 3; quadtree hanging nodes are ordinary
//! vertices, so no constraint equations exist anywhere downstream. A mesh is
//! immutable once built and safe to share across threads.

pub mod quadtree;
pub mod structured;
pub mod voronoi;

pub use quadtree::{build_quadtree_mesh, RefineFeature};
pub use structured::build_structured_quad_mesh;
pub use voronoi::{build_voronoi_polygon_mesh, voronoi_mesh_from_seeds};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub fn new(x: f64, y: f64) -> Self {
        Point2D { x, y }
    }

    pub fn distance(&self, other: &Point2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Node {
    pub id: usize,
    pub position: Point2D,
}

#[derive(Clone, Debug)]
pub struct PolygonCell {
    pub id: usize,
    /// Counter-clockwise node indices, no repeats, >= 3 entries.
    pub vertex_ids: Vec<usize>,
    pub material_id: usize,
}

/// Axis-aligned rectangle, `x0 < x1` and `y0 < y1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        if !(x0.is_finite() && y0.is_finite() && x1.is_finite() && y1.is_finite())
            || x1 <= x0
            || y1 <= y0
        {
            return Err(Error::EmptyDomain);
        }
        Ok(Rect { x0, y0, x1, y1 })
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn contains(&self, p: Point2D) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }
}

/// Boundary edge key: unordered node pair, stored (min, max).
pub type EdgeKey = (usize, usize);

pub fn edge_key(a: usize, b: usize) -> EdgeKey {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Mesh {
    pub nodes: Vec<Node>,
    pub cells: Vec<PolygonCell>,
    /// Tags for boundary edges ("left", "right", "top", "bottom", ...).
    pub edge_tags: BTreeMap<EdgeKey, String>,
}

impl Mesh {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn position(&self, node_id: usize) -> Point2D {
        self.nodes[node_id].position
    }

    /// Vertex positions of a cell in boundary order.
    pub fn cell_polygon(&self, cell: &PolygonCell) -> Vec<Point2D> {
        cell.vertex_ids.iter().map(|&v| self.position(v)).collect()
    }

    /// Edges that belong to exactly one cell, in deterministic order.
    pub fn boundary_edges(&self) -> Vec<(EdgeKey, usize)> {
        let mut count: BTreeMap<EdgeKey, (usize, usize)> = BTreeMap::new();
        for cell in &self.cells {
            for (a, b) in polygon_edges(&cell.vertex_ids) {
                let e = count.entry(edge_key(a, b)).or_insert((0, cell.id));
                e.0 += 1;
                e.1 = cell.id;
            }
        }
        count
            .into_iter()
            .filter(|(_, (n, _))| *n == 1)
            .map(|(k, (_, cell_id))| (k, cell_id))
            .collect()
    }

    pub fn bounding_box(&self) -> Option<Rect> {
        let first = self.nodes.first()?.position;
        let mut r = (first.x, first.y, first.x, first.y);
        for n in &self.nodes {
            r.0 = r.0.min(n.position.x);
            r.1 = r.1.min(n.position.y);
            r.2 = r.2.max(n.position.x);
            r.3 = r.3.max(n.position.y);
        }
        Rect::new(r.0, r.1, r.2, r.3).ok()
    }

    /// Node ids on tagged boundary edges matching `tag`.
    pub fn nodes_with_tag(&self, tag: &str) -> Vec<usize> {
        let mut ids: Vec<usize> = self
            .edge_tags
            .iter()
            .filter(|(_, t)| t.as_str() == tag)
            .flat_map(|((a, b), _)| [*a, *b])
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Tagged boundary edges matching `tag`.
    pub fn edges_with_tag(&self, tag: &str) -> Vec<EdgeKey> {
        self.edge_tags
            .iter()
            .filter(|(_, t)| t.as_str() == tag)
            .map(|(k, _)| *k)
            .collect()
    }
}

/// Consecutive vertex pairs of a closed polygon.
pub fn polygon_edges(vertex_ids: &[usize]) -> impl Iterator<Item = (usize, usize)> + '_ {
    let n = vertex_ids.len();
    (0..n).map(move |i| (vertex_ids[i], vertex_ids[(i + 1) % n]))
}

/// Shoelace signed area; positive for counter-clockwise polygons.
pub fn signed_area(pts: &[Point2D]) -> f64 {
    let n = pts.len();
    let mut acc = 0.0;
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    0.5 * acc
}

/// Area centroid of a simple polygon.
pub fn polygon_centroid(pts: &[Point2D]) -> Point2D {
    let n = pts.len();
    let mut a2 = 0.0;
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..n {
        let p = pts[i];
        let q = pts[(i + 1) % n];
        let cross = p.x * q.y - q.x * p.y;
        a2 += cross;
        cx += (p.x + q.x) * cross;
        cy += (p.y + q.y) * cross;
    }
    Point2D::new(cx / (3.0 * a2), cy / (3.0 * a2))
}

/// Twice the signed area of triangle (a, b, c).
pub fn cross2(a: Point2D, b: Point2D, c: Point2D) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingCenter {
    pub cell_id: usize,
    pub position: Point2D,
}

/// Scaling center of a cell: its centroid, checked for star-visibility of
/// the whole boundary. Every valid cell admits its centroid here; cells
/// that do not are rejected rather than searched for another interior point.
pub fn compute_scaling_center(cell: &PolygonCell, mesh: &Mesh) -> Result<ScalingCenter> {
    let pts = mesh.cell_polygon(cell);
    let center = polygon_centroid(&pts);
    let n = pts.len();
    for i in 0..n {
        // Triangle (center, v_i, v_{i+1}) must keep positive orientation.
        if cross2(center, pts[i], pts[(i + 1) % n]) <= 0.0 {
            return Err(Error::NotStarConvex { cell_id: cell.id });
        }
    }
    Ok(ScalingCenter {
        cell_id: cell.id,
        position: center,
    })
}

#[derive(Clone, Debug)]
pub enum Violation {
    NodeIdNotDense { index: usize, id: usize },
    NonFiniteNode { node_id: usize },
    DanglingVertex { cell_id: usize, vertex_id: usize },
    TooFewVertices { cell_id: usize, count: usize },
    RepeatedVertex { cell_id: usize, vertex_id: usize },
    NotCounterClockwise { cell_id: usize, signed_area: f64 },
    SelfIntersecting { cell_id: usize },
    NotStarConvex { cell_id: usize },
    TagOnNonBoundaryEdge { edge: EdgeKey, tag: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NodeIdNotDense { index, id } => {
                write!(f, "node at index {index} has id {id}; ids must be dense")
            }
            Violation::NonFiniteNode { node_id } => {
                write!(f, "node {node_id} has non-finite coordinates")
            }
            Violation::DanglingVertex { cell_id, vertex_id } => {
                write!(f, "cell {cell_id} references missing node {vertex_id}")
            }
            Violation::TooFewVertices { cell_id, count } => {
                write!(f, "cell {cell_id} has {count} vertices; need >= 3")
            }
            Violation::RepeatedVertex { cell_id, vertex_id } => {
                write!(f, "cell {cell_id} repeats vertex {vertex_id}")
            }
            Violation::NotCounterClockwise {
                cell_id,
                signed_area,
            } => write!(
                f,
                "cell {cell_id} not counter-clockwise (signed area {signed_area:.6e})"
            ),
            Violation::SelfIntersecting { cell_id } => {
                write!(f, "cell {cell_id} is self-intersecting")
            }
            Violation::NotStarConvex { cell_id } => {
                write!(f, "cell {cell_id} not star-convex from centroid")
            }
            Violation::TagOnNonBoundaryEdge { edge, tag } => write!(
                f,
                "tag \"{tag}\" on edge ({}, {}) which is not a boundary edge",
                edge.0, edge.1
            ),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidMesh {
                report: self.to_string(),
            })
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "mesh valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every mesh/type invariant and reports all findings; an empty
/// report means the mesh is valid.
pub fn validate_mesh(mesh: &Mesh) -> ValidationReport {
    let mut violations = Vec::new();

    for (index, node) in mesh.nodes.iter().enumerate() {
        if node.id != index {
            violations.push(Violation::NodeIdNotDense { index, id: node.id });
        }
        if !node.position.x.is_finite() || !node.position.y.is_finite() {
            violations.push(Violation::NonFiniteNode { node_id: node.id });
        }
    }

    for cell in &mesh.cells {
        if cell.vertex_ids.len() < 3 {
            violations.push(Violation::TooFewVertices {
                cell_id: cell.id,
                count: cell.vertex_ids.len(),
            });
            continue;
        }
        let mut dangling = false;
        for &v in &cell.vertex_ids {
            if v >= mesh.nodes.len() {
                violations.push(Violation::DanglingVertex {
                    cell_id: cell.id,
                    vertex_id: v,
                });
                dangling = true;
            }
        }
        if dangling {
            continue;
        }
        let mut sorted = cell.vertex_ids.clone();
        sorted.sort_unstable();
        let mut repeated = false;
        for w in sorted.windows(2) {
            if w[0] == w[1] {
                violations.push(Violation::RepeatedVertex {
                    cell_id: cell.id,
                    vertex_id: w[0],
                });
                repeated = true;
            }
        }
        if repeated {
            continue;
        }
        let pts = mesh.cell_polygon(cell);
        let area = signed_area(&pts);
        if area <= 0.0 {
            violations.push(Violation::NotCounterClockwise {
                cell_id: cell.id,
                signed_area: area,
            });
            continue;
        }
        if polygon_self_intersects(&pts) {
            violations.push(Violation::SelfIntersecting { cell_id: cell.id });
            continue;
        }
        if compute_scaling_center(cell, mesh).is_err() {
            violations.push(Violation::NotStarConvex { cell_id: cell.id });
        }
    }

    let boundary: std::collections::BTreeSet<EdgeKey> =
        mesh.boundary_edges().into_iter().map(|(k, _)| k).collect();
    for (edge, tag) in &mesh.edge_tags {
        if !boundary.contains(edge) {
            violations.push(Violation::TagOnNonBoundaryEdge {
                edge: *edge,
                tag: tag.clone(),
            });
        }
    }

    ValidationReport { violations }
}

/// True when two non-adjacent edges of the polygon properly intersect or a
/// vertex lies in the interior of a non-adjacent edge.
fn polygon_self_intersects(pts: &[Point2D]) -> bool {
    let n = pts.len();
    for i in 0..n {
        let (a1, a2) = (pts[i], pts[(i + 1) % n]);
        for j in (i + 1)..n {
            // Skip edges sharing a vertex.
            if j == i || (j + 1) % n == i || (i + 1) % n == j {
                continue;
            }
            let (b1, b2) = (pts[j], pts[(j + 1) % n]);
            if segments_intersect(a1, a2, b1, b2) {
                return true;
            }
        }
    }
    false
}

fn segments_intersect(a1: Point2D, a2: Point2D, b1: Point2D, b2: Point2D) -> bool {
    let d1 = cross2(b1, b2, a1);
    let d2 = cross2(b1, b2, a2);
    let d3 = cross2(a1, a2, b1);
    let d4 = cross2(a1, a2, b2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |d: f64, p: Point2D, q: Point2D, r: Point2D| {
        d == 0.0
            && r.x >= p.x.min(q.x)
            && r.x <= p.x.max(q.x)
            && r.y >= p.y.min(q.y)
            && r.y <= p.y.max(q.y)
    };
    on(d1, b1, b2, a1) || on(d2, b1, b2, a2) || on(d3, a1, a2, b1) || on(d4, a1, a2, b2)
}

/// Tags every boundary edge lying on a side of `rect` with
/// "left"/"right"/"top"/"bottom"; other boundary edges get "boundary".
/// Tolerance is relative to the rectangle diagonal.
pub fn tag_boundary_edges(mesh: &mut Mesh, rect: Rect) {
    let tol = 1e-9 * rect.diagonal();
    let mut tags = BTreeMap::new();
    for (edge, _) in mesh.boundary_edges() {
        let a = mesh.position(edge.0);
        let b = mesh.position(edge.1);
        let tag = if (a.x - rect.x0).abs() <= tol && (b.x - rect.x0).abs() <= tol {
            "left"
        } else if (a.x - rect.x1).abs() <= tol && (b.x - rect.x1).abs() <= tol {
            "right"
        } else if (a.y - rect.y0).abs() <= tol && (b.y - rect.y0).abs() <= tol {
            "bottom"
        } else if (a.y - rect.y1).abs() <= tol && (b.y - rect.y1).abs() <= tol {
            "top"
        } else {
            "boundary"
        };
        tags.insert(edge, tag.to_string());
    }
    mesh.edge_tags = tags;
}
