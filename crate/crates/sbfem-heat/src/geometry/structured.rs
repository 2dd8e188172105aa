//! Structured axis-aligned quadrilateral meshes.

use std::collections::BTreeMap;

use super::{edge_key, Mesh, Node, Point2D, PolygonCell};
use crate::error::{Error, Result};

/// Builds an nx-by-ny grid of square cells covering `width` x `height`.
/// Both dimensions must be integer multiples of `h` (within 1e-9 of the
/// ratio). Nodes are row-major bottom-up; boundary edges are tagged
/// "left"/"right"/"top"/"bottom".
pub fn build_structured_quad_mesh(width: f64, height: f64, h: f64) -> Result<Mesh> {
    if !(width > 0.0 && height > 0.0 && h > 0.0) {
        return Err(Error::EmptyDomain);
    }
    let nx = divisions("width", width, h)?;
    let ny = divisions("height", height, h)?;

    let dx = width / nx as f64;
    let dy = height / ny as f64;
    let node_id = |i: usize, j: usize| j * (nx + 1) + i;

    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push(Node {
                id: node_id(i, j),
                position: Point2D::new(i as f64 * dx, j as f64 * dy),
            });
        }
    }

    let mut cells = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            cells.push(PolygonCell {
                id: j * nx + i,
                vertex_ids: vec![
                    node_id(i, j),
                    node_id(i + 1, j),
                    node_id(i + 1, j + 1),
                    node_id(i, j + 1),
                ],
                material_id: 0,
            });
        }
    }

    let mut edge_tags = BTreeMap::new();
    for i in 0..nx {
        edge_tags.insert(edge_key(node_id(i, 0), node_id(i + 1, 0)), "bottom".into());
        edge_tags.insert(edge_key(node_id(i, ny), node_id(i + 1, ny)), "top".into());
    }
    for j in 0..ny {
        edge_tags.insert(edge_key(node_id(0, j), node_id(0, j + 1)), "left".into());
        edge_tags.insert(edge_key(node_id(nx, j), node_id(nx, j + 1)), "right".into());
    }

    Ok(Mesh {
        nodes,
        cells,
        edge_tags,
    })
}

fn divisions(axis: &'static str, length: f64, h: f64) -> Result<usize> {
    let ratio = length / h;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 {
        return Err(Error::NonDivisible { axis, length, h });
    }
    Ok(n as usize)
}
