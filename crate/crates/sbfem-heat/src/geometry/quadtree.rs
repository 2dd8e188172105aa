//! Quadtree meshes with hanging nodes emitted as ordinary polygon vertices.
//!
//! Leaves are addressed as (depth, ix, iy) on a virtual 2^depth grid. All
//! node coordinates are derived from one integer lattice at 2^max_depth
//! resolution, so coincident corners of neighboring leaves weld exactly.

use std::collections::{BTreeSet, HashMap, VecDeque};

use super::{tag_boundary_edges, Mesh, Node, Point2D, PolygonCell, Rect};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub enum RefineFeature {
    Point(Point2D),
    Circle { center: Point2D, radius: f64 },
}

impl RefineFeature {
    /// True when the feature touches the closed rectangle.
    fn intersects(&self, r: &Rect) -> bool {
        match *self {
            RefineFeature::Point(p) => r.contains(p),
            RefineFeature::Circle { center, radius } => {
                let cx = center.x.clamp(r.x0, r.x1);
                let cy = center.y.clamp(r.y0, r.y1);
                center.distance(&Point2D::new(cx, cy)) <= radius
            }
        }
    }
}

type LeafKey = (u32, u32, u32);

/// Builds a 2:1-balanced quadtree mesh of `domain`. Leaves touching any
/// `refine_near` feature are refined to `max_depth`; everything is at least
/// `min_depth` deep. Hanging nodes appear as ordinary vertices, so leaves
/// are 4- to 8-gons. Boundary edges are tagged by rectangle side.
pub fn build_quadtree_mesh(
    domain: Rect,
    refine_near: &[RefineFeature],
    max_depth: u32,
    min_depth: u32,
) -> Result<Mesh> {
    if max_depth < min_depth || max_depth > 12 {
        return Err(Error::config(format!(
            "quadtree depths must satisfy 0 <= min_depth <= max_depth <= 12, got {min_depth}..{max_depth}"
        )));
    }

    let mut leaves: BTreeSet<LeafKey> = BTreeSet::new();
    let mut work: VecDeque<LeafKey> = VecDeque::new();
    work.push_back((0, 0, 0));
    while let Some(key) = work.pop_front() {
        let (d, ix, iy) = key;
        let hit = d < max_depth
            && refine_near
                .iter()
                .any(|f| f.intersects(&leaf_rect(domain, key)));
        if d < min_depth || hit {
            for (cx, cy) in children(ix, iy) {
                work.push_back((d + 1, cx, cy));
            }
        } else {
            leaves.insert(key);
        }
    }

    balance(&mut leaves);

    // Assign node ids lattice-first in leaf order; shared corners weld by key.
    let scale = 1u32 << max_depth;
    let mut node_ids: HashMap<(u32, u32), usize> = HashMap::new();
    let mut nodes: Vec<Node> = Vec::new();
    let mut intern = |gx: u32, gy: u32, nodes: &mut Vec<Node>| -> usize {
        *node_ids.entry((gx, gy)).or_insert_with(|| {
            let id = nodes.len();
            nodes.push(Node {
                id,
                position: lattice_point(domain, scale, gx, gy),
            });
            id
        })
    };
    for &(d, ix, iy) in &leaves {
        let s = 1u32 << (max_depth - d);
        for (gx, gy) in corner_loop(ix, iy, s) {
            intern(gx, gy, &mut nodes);
        }
    }

    // Second pass: vertex lists, inserting the (unique, by 2:1 balance)
    // mid-side node wherever a finer neighbor created one.
    let mut cells = Vec::with_capacity(leaves.len());
    for &(d, ix, iy) in &leaves {
        let s = 1u32 << (max_depth - d);
        let loop_of_corners: Vec<(u32, u32)> = corner_loop(ix, iy, s).collect();
        let mut vertex_ids = Vec::with_capacity(8);
        for i in 0..4 {
            let a = loop_of_corners[i];
            let b = loop_of_corners[(i + 1) % 4];
            vertex_ids.push(node_ids[&a]);
            if s >= 2 {
                let mid = ((a.0 + b.0) / 2, (a.1 + b.1) / 2);
                if let Some(&m) = node_ids.get(&mid) {
                    vertex_ids.push(m);
                }
            }
        }
        cells.push(PolygonCell {
            id: cells.len(),
            vertex_ids,
            material_id: 0,
        });
    }

    let mut mesh = Mesh {
        nodes,
        cells,
        edge_tags: Default::default(),
    };
    tag_boundary_edges(&mut mesh, domain);
    Ok(mesh)
}

fn children(ix: u32, iy: u32) -> [(u32, u32); 4] {
    [
        (2 * ix, 2 * iy),
        (2 * ix + 1, 2 * iy),
        (2 * ix, 2 * iy + 1),
        (2 * ix + 1, 2 * iy + 1),
    ]
}

fn leaf_rect(domain: Rect, (d, ix, iy): LeafKey) -> Rect {
    let n = (1u64 << d) as f64;
    let w = domain.width() / n;
    let h = domain.height() / n;
    Rect {
        x0: domain.x0 + w * ix as f64,
        y0: domain.y0 + h * iy as f64,
        x1: domain.x0 + w * (ix + 1) as f64,
        y1: domain.y0 + h * (iy + 1) as f64,
    }
}

fn lattice_point(domain: Rect, scale: u32, gx: u32, gy: u32) -> Point2D {
    Point2D::new(
        domain.x0 + domain.width() * (gx as f64 / scale as f64),
        domain.y0 + domain.height() * (gy as f64 / scale as f64),
    )
}

/// SW, SE, NE, NW lattice corners of a leaf whose cell size is `s` lattice
/// units (counter-clockwise).
fn corner_loop(ix: u32, iy: u32, s: u32) -> impl Iterator<Item = (u32, u32)> {
    let (x0, y0) = (ix * s, iy * s);
    [
        (x0, y0),
        (x0 + s, y0),
        (x0 + s, y0 + s),
        (x0, y0 + s),
    ]
    .into_iter()
}

/// Splits leaves until every pair of edge-adjacent leaves differs by at most
/// one level.
fn balance(leaves: &mut BTreeSet<LeafKey>) {
    let mut work: VecDeque<LeafKey> = leaves.iter().copied().collect();
    while let Some(key) = work.pop_front() {
        if !leaves.contains(&key) {
            continue; // split away meanwhile
        }
        let (d, ix, iy) = key;
        if d < 2 {
            continue;
        }
        let side = 1i64 << d;
        for (dx, dy) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
            let nx = ix as i64 + dx;
            let ny = iy as i64 + dy;
            if nx < 0 || ny < 0 || nx >= side || ny >= side {
                continue;
            }
            // Coarsest leaf covering the neighbor region, found by walking up.
            let found = (0..=d).rev().find_map(|dn| {
                let k = (dn, (nx as u32) >> (d - dn), (ny as u32) >> (d - dn));
                leaves.contains(&k).then_some(k)
            });
            if let Some(neighbor @ (dn, cx, cy)) = found {
                if dn + 1 < d {
                    leaves.remove(&neighbor);
                    for (ccx, ccy) in children(cx, cy) {
                        let child = (dn + 1, ccx, ccy);
                        leaves.insert(child);
                        work.push_back(child);
                    }
                    // Re-examine this leaf: the split neighbor may still be
                    // too coarse on another side after one split.
                    work.push_back(key);
                }
            }
        }
    }
}
