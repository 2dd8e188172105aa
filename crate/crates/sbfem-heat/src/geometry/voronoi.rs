//! Bounded Voronoi meshes via half-plane clipping, with Lloyd relaxation.
//!
//! Conformity strategy: every final vertex is one of (a) a rectangle corner,
//! (b) a bisector-side intersection, or (c) a circumcenter of three seeds.
//! Vertices carry that construction as a canonical key (seed indices sorted),
//! and their coordinates are recomputed from the key alone, so the two cells
//! sharing a Voronoi edge produce bit-identical endpoint coordinates and the
//! mesh welds exactly. Clip predicates use one canonical bisector orientation
//! per seed pair for the same reason: both cells make identical keep/drop
//! decisions, so no cracks or overlaps can form.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{
    polygon_centroid, tag_boundary_edges, Mesh, Node, Point2D, PolygonCell, Rect,
};
use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Hash)]
enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
enum VertexKey {
    /// Rectangle corner, counter-clockwise from (x0, y0).
    Corner(u8),
    /// Bisector of seeds (i, j), i < j, cut with a rectangle side.
    SideCut(Side, usize, usize),
    /// Circumcenter of seeds (i, j, k), i < j < k.
    Circum(usize, usize, usize),
}

/// Line containing a polygon edge during clipping.
#[derive(Clone, Copy, Debug)]
enum Carrier {
    Side(Side),
    /// Bisector of the cell's seed and one other; stored (min, max).
    Bisector(usize, usize),
}

/// Position recomputed canonically from a [`VertexKey`] at creation, so the
/// same vertex gets identical bits in every cell that produces it.
#[derive(Clone, Copy, Debug)]
struct ClipVertex {
    pos: Point2D,
    /// Carrier of the edge leaving this vertex.
    out_carrier: Carrier,
}

/// Builds the Voronoi diagram of `n_seeds` uniform random seeds clipped to
/// `domain`, after `lloyd_iterations` centroid relaxations. Deterministic for
/// a fixed `rng_seed`.
pub fn build_voronoi_polygon_mesh(
    domain: Rect,
    n_seeds: usize,
    lloyd_iterations: usize,
    rng_seed: u64,
) -> Result<Mesh> {
    if n_seeds == 0 {
        return Err(Error::config("voronoi mesh needs n_seeds >= 1"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(rng_seed);
    let seeds: Vec<Point2D> = (0..n_seeds)
        .map(|_| {
            Point2D::new(
                domain.x0 + rng.gen::<f64>() * domain.width(),
                domain.y0 + rng.gen::<f64>() * domain.height(),
            )
        })
        .collect();
    voronoi_mesh_from_seeds(domain, seeds, lloyd_iterations)
}

/// Same as [`build_voronoi_polygon_mesh`] but with caller-provided seeds.
pub fn voronoi_mesh_from_seeds(
    domain: Rect,
    mut seeds: Vec<Point2D>,
    lloyd_iterations: usize,
) -> Result<Mesh> {
    let mut grid = SeedGrid::new(&seeds, domain);
    check_seed_separation(&seeds, &grid, domain)?;
    for _ in 0..lloyd_iterations {
        let mut next = Vec::with_capacity(seeds.len());
        for i in 0..seeds.len() {
            let poly = clip_cell(i, &seeds, &grid, domain)?;
            let pts: Vec<Point2D> = poly.iter().map(|v| v.pos).collect();
            next.push(polygon_centroid(&pts));
        }
        seeds = next;
        grid = SeedGrid::new(&seeds, domain);
        check_seed_separation(&seeds, &grid, domain)?;
    }

    let mut node_ids: HashMap<(u64, u64), usize> = HashMap::new();
    let mut nodes: Vec<Node> = Vec::new();
    let mut cells: Vec<PolygonCell> = Vec::new();
    for i in 0..seeds.len() {
        let poly = clip_cell(i, &seeds, &grid, domain)?;
        let mut vertex_ids: Vec<usize> = Vec::with_capacity(poly.len());
        for v in &poly {
            let bits = (v.pos.x.to_bits(), v.pos.y.to_bits());
            let id = *node_ids.entry(bits).or_insert_with(|| {
                let id = nodes.len();
                nodes.push(Node {
                    id,
                    position: v.pos,
                });
                id
            });
            // Welding can collapse near-degenerate vertices; drop repeats.
            if vertex_ids.last() != Some(&id) {
                vertex_ids.push(id);
            }
        }
        while vertex_ids.len() > 1 && vertex_ids.first() == vertex_ids.last() {
            vertex_ids.pop();
        }
        if vertex_ids.len() < 3 {
            return Err(Error::DegenerateSeeds { indices: vec![i] });
        }
        cells.push(PolygonCell {
            id: i,
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

/// Uniform bucket grid over the seeds, sized for about one seed per bucket.
/// Cuts candidate gathering for clipping and separation checks from all-pairs
/// to a neighborhood sweep.
struct SeedGrid {
    rect: Rect,
    nx: usize,
    ny: usize,
    step: f64,
    buckets: Vec<Vec<usize>>,
}

impl SeedGrid {
    fn new(seeds: &[Point2D], rect: Rect) -> Self {
        let n = seeds.len().max(1);
        let target = (rect.width() * rect.height() / n as f64).sqrt();
        let step = target.max(1e-12 * rect.diagonal());
        let nx = ((rect.width() / step).ceil() as usize).max(1);
        let ny = ((rect.height() / step).ceil() as usize).max(1);
        let mut grid = SeedGrid {
            rect,
            nx,
            ny,
            step,
            buckets: vec![Vec::new(); nx * ny],
        };
        for (i, s) in seeds.iter().enumerate() {
            let (bx, by) = grid.bucket_of(*s);
            grid.buckets[by * nx + bx].push(i);
        }
        grid
    }

    fn bucket_of(&self, p: Point2D) -> (usize, usize) {
        let bx = ((p.x - self.rect.x0) / self.step).floor() as isize;
        let by = ((p.y - self.rect.y0) / self.step).floor() as isize;
        (
            bx.clamp(0, self.nx as isize - 1) as usize,
            by.clamp(0, self.ny as isize - 1) as usize,
        )
    }

    /// Seeds other than `skip` with distance to `p` in (lo, hi], sorted by
    /// (distance, index). The annulus bounds make repeated sweeps with growing
    /// radii visit every seed exactly once.
    fn annulus(
        &self,
        p: Point2D,
        lo: f64,
        hi: f64,
        skip: usize,
        seeds: &[Point2D],
        out: &mut Vec<(f64, usize)>,
    ) {
        out.clear();
        let bx0 = (((p.x - hi - self.rect.x0) / self.step).floor() as isize).max(0) as usize;
        let by0 = (((p.y - hi - self.rect.y0) / self.step).floor() as isize).max(0) as usize;
        let bx1 = ((((p.x + hi - self.rect.x0) / self.step).floor() as isize).max(0) as usize)
            .min(self.nx - 1);
        let by1 = ((((p.y + hi - self.rect.y0) / self.step).floor() as isize).max(0) as usize)
            .min(self.ny - 1);
        for by in by0..=by1 {
            for bx in bx0..=bx1 {
                for &j in &self.buckets[by * self.nx + bx] {
                    if j == skip {
                        continue;
                    }
                    let d = p.distance(&seeds[j]);
                    if d > lo && d <= hi {
                        out.push((d, j));
                    }
                }
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    }
}

fn check_seed_separation(seeds: &[Point2D], grid: &SeedGrid, domain: Rect) -> Result<()> {
    let tol = 1e-12 * domain.diagonal();
    let mut clashing = Vec::new();
    let mut near = Vec::new();
    for i in 0..seeds.len() {
        // tol is far below the bucket size, so one annulus sweep suffices.
        // lo = -1 keeps exactly-coincident seeds (d = 0) in the sweep.
        grid.annulus(seeds[i], -1.0, tol, i, seeds, &mut near);
        for &(d, j) in &near {
            if d < tol && j > i {
                clashing.push(i);
                clashing.push(j);
            }
        }
    }
    if clashing.is_empty() {
        Ok(())
    } else {
        clashing.sort_unstable();
        clashing.dedup();
        Err(Error::DegenerateSeeds { indices: clashing })
    }
}

/// Voronoi cell of seed `i` clipped to the rectangle: successive half-plane
/// clips against bisectors with other seeds, nearest first, stopping once the
/// next seed is too far to cut the current polygon (security radius). Seeds
/// are brought in through expanding grid annuli, so the sweep never touches
/// the far side of a large seed set.
fn clip_cell(
    i: usize,
    seeds: &[Point2D],
    grid: &SeedGrid,
    rect: Rect,
) -> Result<Vec<ClipVertex>> {
    let sides = [Side::Bottom, Side::Right, Side::Top, Side::Left];
    let mut poly: Vec<ClipVertex> = (0..4)
        .map(|c| ClipVertex {
            pos: key_position(VertexKey::Corner(c as u8), seeds, rect),
            out_carrier: Carrier::Side(sides[c]),
        })
        .collect();

    let si = seeds[i];
    let mut lo = -1.0_f64;
    let mut hi = 4.0 * grid.step;
    let mut ring = Vec::new();
    loop {
        grid.annulus(si, lo, hi, i, seeds, &mut ring);
        for &(d, j) in &ring {
            let rmax = poly
                .iter()
                .map(|v| si.distance(&v.pos))
                .fold(0.0_f64, f64::max);
            if d > 2.0 * rmax {
                return Ok(poly); // no seed at this distance or beyond can cut
            }
            poly = clip_halfplane(&poly, i, j, seeds, rect);
            if poly.len() < 3 {
                return Err(Error::DegenerateSeeds { indices: vec![i, j] });
            }
        }
        let rmax = poly
            .iter()
            .map(|v| si.distance(&v.pos))
            .fold(0.0_f64, f64::max);
        if hi >= 2.0 * rmax || lo > rect.diagonal() {
            return Ok(poly);
        }
        lo = hi;
        hi *= 2.0;
    }
}

/// Keeps the part of `poly` on seed `i`'s side of the (i, j) bisector.
/// The signed predicate is evaluated in one canonical orientation per
/// unordered pair so both adjacent cells agree bitwise on every decision;
/// points exactly on the bisector belong to both cells.
fn clip_halfplane(
    poly: &[ClipVertex],
    i: usize,
    j: usize,
    seeds: &[Point2D],
    rect: Rect,
) -> Vec<ClipVertex> {
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    let (sa, sb) = (seeds[a], seeds[b]);
    let mid = Point2D::new(0.5 * (sa.x + sb.x), 0.5 * (sa.y + sb.y));
    let dir = (sb.x - sa.x, sb.y - sa.y);
    let f = |p: Point2D| (p.x - mid.x) * dir.0 + (p.y - mid.y) * dir.1;
    // Cell `a` keeps f <= 0, cell `b` keeps f >= 0.
    let keep = |v: f64| if i == a { v <= 0.0 } else { v >= 0.0 };

    let n = poly.len();
    let mut out = Vec::with_capacity(n + 2);
    for e in 0..n {
        let va = poly[e];
        let vb = poly[(e + 1) % n];
        let a_in = keep(f(va.pos));
        let b_in = keep(f(vb.pos));
        if a_in {
            out.push(va);
        }
        if a_in != b_in {
            let key = crossing_key(va.out_carrier, i, j);
            out.push(ClipVertex {
                pos: key_position(key, seeds, rect),
                out_carrier: if a_in {
                    Carrier::Bisector(a, b)
                } else {
                    va.out_carrier
                },
            });
        }
    }
    out
}

/// Key of the intersection between an edge's carrier line and bisector (i, j).
fn crossing_key(carrier: Carrier, i: usize, j: usize) -> VertexKey {
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    match carrier {
        Carrier::Side(s) => VertexKey::SideCut(s, a, b),
        Carrier::Bisector(p, q) => {
            // Both bisectors involve the cell's seed i; the third seed is the
            // other endpoint of the carrier pair.
            let other = if p == i { q } else { p };
            let mut t = [i, other, j];
            t.sort_unstable();
            VertexKey::Circum(t[0], t[1], t[2])
        }
    }
}

/// Canonical coordinates for a vertex key. Deterministic in the key alone,
/// which is what makes shared vertices weld bit-exactly.
fn key_position(key: VertexKey, seeds: &[Point2D], rect: Rect) -> Point2D {
    match key {
        VertexKey::Corner(c) => match c {
            0 => Point2D::new(rect.x0, rect.y0),
            1 => Point2D::new(rect.x1, rect.y0),
            2 => Point2D::new(rect.x1, rect.y1),
            _ => Point2D::new(rect.x0, rect.y1),
        },
        VertexKey::SideCut(side, a, b) => {
            let (sa, sb) = (seeds[a], seeds[b]);
            let mid = Point2D::new(0.5 * (sa.x + sb.x), 0.5 * (sa.y + sb.y));
            let dir = (sb.x - sa.x, sb.y - sa.y);
            match side {
                Side::Left => Point2D::new(rect.x0, mid.y - (rect.x0 - mid.x) * dir.0 / dir.1),
                Side::Right => Point2D::new(rect.x1, mid.y - (rect.x1 - mid.x) * dir.0 / dir.1),
                Side::Bottom => Point2D::new(mid.x - (rect.y0 - mid.y) * dir.1 / dir.0, rect.y0),
                Side::Top => Point2D::new(mid.x - (rect.y1 - mid.y) * dir.1 / dir.0, rect.y1),
            }
        }
        VertexKey::Circum(a, b, c) => circumcenter(seeds[a], seeds[b], seeds[c]),
    }
}

fn circumcenter(a: Point2D, b: Point2D, c: Point2D) -> Point2D {
    let d = 2.0 * (a.x * (b.y - c.y) + b.x * (c.y - a.y) + c.x * (a.y - b.y));
    let (na, nb, nc) = (
        a.x * a.x + a.y * a.y,
        b.x * b.x + b.y * b.y,
        c.x * c.x + c.y * c.y,
    );
    Point2D::new(
        (na * (b.y - c.y) + nb * (c.y - a.y) + nc * (a.y - b.y)) / d,
        (na * (c.x - b.x) + nb * (a.x - c.x) + nc * (b.x - a.x)) / d,
    )
}
