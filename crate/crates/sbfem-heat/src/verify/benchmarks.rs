//! Built-in benchmark problems shared by the CLI `verify` subcommand and the
//! acceptance tests: a steady sine-heated plate with a separable reference
//! solution, and a transient decaying product-sine plate.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;

use super::{
    analytic_steady_plate, analytic_transient_plate, relative_error, relative_l2,
    run_convergence_study, study_from_records, AnalyticField, ConvergenceRecord,
    ConvergenceStudy, FieldSampler,
};
use crate::element::{compute_all_elements, ElementData, Material};
use crate::error::{Error, Result};
use crate::geometry::{
    build_quadtree_mesh, build_structured_quad_mesh, build_voronoi_polygon_mesh, Mesh, Point2D,
    Rect, RefineFeature,
};
use crate::solver::{run_transient, solve_steady, BoundaryCondition, TransientConfig};

pub const PLATE_WIDTH: f64 = 10.0;
pub const PLATE_HEIGHT: f64 = 5.0;
/// Refinement ladder for the steady benchmark.
pub const STEADY_MESH_SIZES: [f64; 4] = [1.0, 0.5, 0.25, 0.125];
/// Lloyd relaxation count used whenever a benchmark builds a Voronoi mesh.
pub const VORONOI_LLOYD_ITERATIONS: usize = 100;

/// Grid divisions per side for the transient refinement ladder.
pub const TRANSIENT_DIVISIONS: [usize; 3] = [4, 8, 16];
/// Divisions of the probe-history mesh (cell size close to 0.125, and the
/// domain center falls strictly inside a cell, exercising the semi-analytic
/// interior evaluation).
pub const TRANSIENT_PROBE_DIVISIONS: usize = 25;
pub const TRANSIENT_DT: f64 = 1e-3;
pub const TRANSIENT_T_END: f64 = 2.0;
pub const TRANSIENT_EVAL_TIMES: [f64; 4] = [0.5, 1.0, 1.5, 2.0];

/// Quadtree depths for the locally refined steady comparison.
pub const QUADTREE_MIN_DEPTH: u32 = 3;
pub const QUADTREE_MAX_DEPTH: u32 = 5;

/// Acceptance band for fitted convergence slopes: second order plus or minus
/// ten percent.
pub const RATE_BAND: (f64, f64) = (1.8, 2.2);

/// True when a fitted slope sits inside [`RATE_BAND`].
pub fn rate_in_band(slope: f64) -> bool {
    (RATE_BAND.0..=RATE_BAND.1).contains(&slope)
}

const BENCH_GAUSS_ORDER: usize = 2;

fn unit_material() -> Material {
    Material::new(1.0, 1.0, 1.0).expect("unit material is valid")
}

fn plate_rect() -> Rect {
    Rect::new(0.0, 0.0, PLATE_WIDTH, PLATE_HEIGHT).expect("static rectangle is valid")
}

/// Reference solution of the steady benchmark.
pub fn steady_plate_field() -> AnalyticField {
    analytic_steady_plate(PLATE_WIDTH, PLATE_HEIGHT)
}

/// T = 100 sin(pi x / width) along the top edge, zero on the other three.
pub fn steady_plate_bcs() -> BTreeMap<String, BoundaryCondition> {
    let mut bcs = BTreeMap::new();
    bcs.insert(
        "top".to_string(),
        BoundaryCondition::Dirichlet(Arc::new(|x, _y, _t| {
            100.0 * (PI * x / PLATE_WIDTH).sin()
        })),
    );
    for side in ["bottom", "left", "right"] {
        bcs.insert(side.to_string(), BoundaryCondition::dirichlet_const(0.0));
    }
    bcs
}

pub struct SteadyPlateRun {
    pub mesh: Mesh,
    pub elements: Vec<ElementData>,
    pub nodal: DVector<f64>,
}

impl SteadyPlateRun {
    pub fn dof(&self) -> usize {
        self.mesh.node_count()
    }

    /// Relative L2 error against the separable reference solution.
    pub fn error(&self) -> Result<f64> {
        relative_error(&self.elements, &self.nodal, &steady_plate_field(), 0.0)
    }
}

/// Solves the steady benchmark on any mesh of the plate rectangle (its
/// boundary edges must carry the standard side tags).
pub fn solve_steady_plate(mesh: Mesh) -> Result<SteadyPlateRun> {
    let elements = compute_all_elements(&mesh, &[unit_material()], BENCH_GAUSS_ORDER)?;
    let nodal = solve_steady(&mesh, &elements, &steady_plate_bcs())?;
    Ok(SteadyPlateRun {
        mesh,
        elements,
        nodal,
    })
}

pub fn steady_plate_quad_mesh(h: f64) -> Result<Mesh> {
    build_structured_quad_mesh(PLATE_WIDTH, PLATE_HEIGHT, h)
}

/// Seed count whose centroidal Voronoi cells have mean diameter h, using
/// h = sqrt(domain area / cell count).
pub fn voronoi_seed_count(h: f64) -> usize {
    ((PLATE_WIDTH * PLATE_HEIGHT / (h * h)).round() as usize).max(1)
}

pub fn steady_plate_voronoi_mesh(h: f64, rng_seed: u64) -> Result<Mesh> {
    build_voronoi_polygon_mesh(
        plate_rect(),
        voronoi_seed_count(h),
        VORONOI_LLOYD_ITERATIONS,
        rng_seed,
    )
}

/// Quadtree of the plate refined toward the heated top edge, so depth
/// transitions (hanging nodes) are guaranteed for max_depth > min_depth.
pub fn steady_plate_quadtree_mesh(min_depth: u32, max_depth: u32) -> Result<Mesh> {
    let features: Vec<RefineFeature> = (0..=32)
        .map(|i| {
            RefineFeature::Point(Point2D::new(
                i as f64 * PLATE_WIDTH / 32.0,
                PLATE_HEIGHT,
            ))
        })
        .collect();
    build_quadtree_mesh(plate_rect(), &features, max_depth, min_depth)
}

/// Convergence study of the steady benchmark on structured quads.
pub fn steady_plate_quad_study(hs: &[f64]) -> Result<ConvergenceStudy> {
    run_convergence_study(hs, |h| {
        let run = solve_steady_plate(steady_plate_quad_mesh(h)?)?;
        Ok((run.dof(), run.error()?))
    })
}

/// Convergence study of the steady benchmark on centroidal Voronoi meshes
/// with matched mean cell diameters.
pub fn steady_plate_voronoi_study(hs: &[f64], rng_seed: u64) -> Result<ConvergenceStudy> {
    run_convergence_study(hs, |h| {
        let run = solve_steady_plate(steady_plate_voronoi_mesh(h, rng_seed)?)?;
        Ok((run.dof(), run.error()?))
    })
}

/// Relative L2 distance between the quadtree solution and a fine structured
/// solution of the same steady problem, integrated over the quadtree mesh
/// with the fine field evaluated by point sampling.
pub fn quadtree_vs_fine_difference(
    min_depth: u32,
    max_depth: u32,
    fine_h: f64,
) -> Result<f64> {
    let coarse = solve_steady_plate(steady_plate_quadtree_mesh(min_depth, max_depth)?)?;
    let fine = solve_steady_plate(steady_plate_quad_mesh(fine_h)?)?;
    let sampler = FieldSampler::new(&fine.elements);
    relative_l2(&coarse.elements, &coarse.nodal, &|x, y| {
        sampler
            .sample(&fine.nodal, Point2D::new(x, y))
            .unwrap_or(f64::NAN)
    })
}

pub struct TransientPlateRun {
    pub mesh: Mesh,
    pub elements: Vec<ElementData>,
    /// (time, full nodal state) for every kept step, starting at t = 0.
    pub history: Vec<(f64, DVector<f64>)>,
    pub dt: f64,
}

impl TransientPlateRun {
    pub fn dof(&self) -> usize {
        self.mesh.node_count()
    }

    /// Kept state whose time is within dt/2 of `t`.
    pub fn state_at(&self, t: f64) -> Result<(f64, &DVector<f64>)> {
        self.history
            .iter()
            .find(|(tk, _)| (tk - t).abs() <= 0.5 * self.dt)
            .map(|(tk, v)| (*tk, v))
            .ok_or_else(|| {
                Error::config(format!("no stored step within dt/2 of t = {t}"))
            })
    }

    /// Relative errors against the decaying product-sine solution at the
    /// requested times (each must match a kept step).
    pub fn errors_at(&self, times: &[f64]) -> Result<Vec<(f64, f64)>> {
        let field = analytic_transient_plate();
        times
            .iter()
            .map(|&t| {
                let (tk, nodal) = self.state_at(t)?;
                Ok((tk, relative_error(&self.elements, nodal, &field, tk)?))
            })
            .collect()
    }

    /// Semi-analytic probe history at `p` over every kept step.
    pub fn probe_history(&self, p: Point2D) -> Result<Vec<(f64, f64)>> {
        let sampler = FieldSampler::new(&self.elements);
        self.history
            .iter()
            .map(|(t, nodal)| Ok((*t, sampler.sample(nodal, p)?)))
            .collect()
    }
}

/// Solves the transient benchmark (pi-by-pi plate, zero Dirichlet walls,
/// k = rho c = 1, initial 10 sin x sin y) on a divisions-by-divisions grid.
pub fn solve_transient_plate(
    divisions: usize,
    dt: f64,
    t_end: f64,
    output_every: usize,
) -> Result<TransientPlateRun> {
    if divisions == 0 {
        return Err(Error::config("transient benchmark needs divisions >= 1"));
    }
    let mesh = build_structured_quad_mesh(PI, PI, PI / divisions as f64)?;
    let elements = compute_all_elements(&mesh, &[unit_material()], BENCH_GAUSS_ORDER)?;
    let mut bcs = BTreeMap::new();
    for side in ["top", "bottom", "left", "right"] {
        bcs.insert(side.to_string(), BoundaryCondition::dirichlet_const(0.0));
    }
    let history = run_transient(
        &mesh,
        &elements,
        &bcs,
        TransientConfig {
            dt,
            t_end,
            output_every,
        },
        &|x, y| 10.0 * x.sin() * y.sin(),
    )?;
    Ok(TransientPlateRun {
        mesh,
        elements,
        history,
        dt,
    })
}

/// One convergence study per evaluation time; each mesh in `divisions` is
/// solved once and shared across the times.
pub fn transient_plate_study(
    divisions: &[usize],
    dt: f64,
    t_end: f64,
    times: &[f64],
) -> Result<Vec<(f64, ConvergenceStudy)>> {
    if divisions.len() < 3 {
        return Err(Error::config(format!(
            "convergence study needs at least 3 mesh sizes, got {}",
            divisions.len()
        )));
    }
    struct Row {
        h: f64,
        dof: usize,
        wall: f64,
        errors: Vec<(f64, f64)>,
    }
    let mut rows = Vec::with_capacity(divisions.len());
    for &div in divisions {
        let t0 = Instant::now();
        let run = solve_transient_plate(div, dt, t_end, keep_every_for(dt, times))?;
        let errors = run.errors_at(times)?;
        rows.push(Row {
            h: PI / div as f64,
            dof: run.dof(),
            wall: t0.elapsed().as_secs_f64(),
            errors,
        });
    }
    Ok(times
        .iter()
        .enumerate()
        .map(|(ti, &t)| {
            let records = rows
                .iter()
                .map(|r| ConvergenceRecord {
                    h: r.h,
                    dof: r.dof,
                    error: r.errors[ti].1,
                    rate_local: None,
                    wall_seconds: r.wall,
                })
                .collect();
            (t, study_from_records(records))
        })
        .collect())
}

/// Coarsest output stride that still lands a kept step on every requested
/// time.
fn keep_every_for(dt: f64, times: &[f64]) -> usize {
    let mut stride = 0; // gcd identity
    for &t in times {
        let steps = (t / dt).round().max(1.0) as usize;
        stride = gcd(stride, steps);
    }
    stride.max(1)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}
