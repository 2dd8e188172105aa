//! Closed-form reference fields, the relative L2 temperature error, point
//! sampling of solved fields, and convergence-study automation.

pub mod benchmarks;

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;

use crate::element::ElementData;
use crate::error::{Error, Result};
use crate::geometry::Point2D;

/// Closed-form reference temperature field T(x, y, t).
#[derive(Clone)]
pub struct AnalyticField {
    pub description: String,
    eval: Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for AnalyticField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnalyticField")
            .field("description", &self.description)
            .finish_non_exhaustive()
    }
}

impl AnalyticField {
    pub fn new(
        description: impl Into<String>,
        eval: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        AnalyticField {
            description: description.into(),
            eval: Arc::new(eval),
        }
    }

    pub fn at(&self, x: f64, y: f64, t: f64) -> f64 {
        (self.eval)(x, y, t)
    }
}

/// Steady solution on an a-by-b plate with T = 100 sin(pi x / a) on the top
/// side and zero on the others: 100 / sinh(pi b / a) * sin(pi x / a)
/// * sinh(pi y / a).
pub fn analytic_steady_plate(a: f64, b: f64) -> AnalyticField {
    assert!(
        a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite(),
        "plate dimensions must be positive"
    );
    let scale = 100.0 / (PI * b / a).sinh();
    AnalyticField::new(
        format!("steady sine-heated {a} x {b} plate"),
        move |x, y, _t| scale * (PI * x / a).sin() * (PI * y / a).sinh(),
    )
}

/// Decaying product-sine solution 10 e^{-2t} sin(x) sin(y) on the pi-by-pi
/// square with zero boundary temperature; exact for k = rho c = 1 with
/// initial state 10 sin(x) sin(y).
pub fn analytic_transient_plate() -> AnalyticField {
    AnalyticField::new("decaying product-sine plate", |x, y, t| {
        10.0 * (-2.0 * t).exp() * x.sin() * y.sin()
    })
}

/// Midpoint rule on the unit triangle: degree-2 exact with equal weights.
const TRI_POINTS: [(f64, f64); 3] = [(0.5, 0.0), (0.5, 0.5), (0.0, 0.5)];
const TRI_WEIGHT: f64 = 1.0 / 3.0;

/// Relative L2 distance sqrt(int (Th - T)^2 dA / int T^2 dA) between the
/// solved field Th and `reference`. Each cell is fanned into triangles at its
/// scaling center; Th is evaluated semi-analytically at the quadrature
/// points, `reference` exactly.
pub fn relative_l2(
    elements: &[ElementData],
    nodal: &DVector<f64>,
    reference: &dyn Fn(f64, f64) -> f64,
) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for el in elements {
        let local = gather_local(el, nodal)?;
        let n = el.n();
        let o = el.center;
        for e in 0..n {
            let v1 = el.polygon[e];
            let v2 = el.polygon[(e + 1) % n];
            let area =
                0.5 * ((v1.x - o.x) * (v2.y - o.y) - (v2.x - o.x) * (v1.y - o.y)).abs();
            for &(l1, l2) in &TRI_POINTS {
                let xi = l1 + l2;
                let eta = (l2 - l1) / (l1 + l2);
                let px = o.x + l1 * (v1.x - o.x) + l2 * (v2.x - o.x);
                let py = o.y + l1 * (v1.y - o.y) + l2 * (v2.y - o.y);
                let th = el.interior_temperature(&local, xi, eta, e)?;
                let te = reference(px, py);
                num += area * TRI_WEIGHT * (th - te) * (th - te);
                den += area * TRI_WEIGHT * te * te;
            }
        }
    }
    if !(num.is_finite() && den.is_finite()) {
        return Err(Error::config(
            "relative L2 error integrand is not finite on this mesh",
        ));
    }
    if den <= 0.0 {
        return Err(Error::config(
            "reference field has zero L2 norm on this mesh; relative error undefined",
        ));
    }
    Ok((num / den).sqrt())
}

/// [`relative_l2`] against an [`AnalyticField`] frozen at time `t`.
pub fn relative_error(
    elements: &[ElementData],
    nodal: &DVector<f64>,
    field: &AnalyticField,
    t: f64,
) -> Result<f64> {
    relative_l2(elements, nodal, &|x, y| field.at(x, y, t))
}

fn gather_local(el: &ElementData, nodal: &DVector<f64>) -> Result<DVector<f64>> {
    let ids = &el.matrices.node_ids;
    for &id in ids {
        if id >= nodal.len() {
            return Err(Error::config(format!(
                "nodal vector has {} entries but cell {} references node {id}",
                nodal.len(),
                el.cell_id
            )));
        }
    }
    Ok(DVector::from_iterator(
        ids.len(),
        ids.iter().map(|&id| nodal[id]),
    ))
}

/// Point-evaluator for a solved field: bins element bounding boxes on a
/// uniform grid so arbitrary-point queries (probes, cross-mesh comparisons)
/// avoid scanning every cell.
pub struct FieldSampler<'a> {
    elements: &'a [ElementData],
    x0: f64,
    y0: f64,
    step: f64,
    nx: usize,
    ny: usize,
    bins: Vec<Vec<usize>>,
}

impl<'a> FieldSampler<'a> {
    pub fn new(elements: &'a [ElementData]) -> Self {
        let mut x0 = f64::INFINITY;
        let mut y0 = f64::INFINITY;
        let mut x1 = f64::NEG_INFINITY;
        let mut y1 = f64::NEG_INFINITY;
        let mut total_area = 0.0;
        for el in elements {
            for p in &el.polygon {
                x0 = x0.min(p.x);
                y0 = y0.min(p.y);
                x1 = x1.max(p.x);
                y1 = y1.max(p.y);
            }
            total_area += el.area.abs();
        }
        if elements.is_empty() {
            return FieldSampler {
                elements,
                x0: 0.0,
                y0: 0.0,
                step: 1.0,
                nx: 1,
                ny: 1,
                bins: vec![Vec::new()],
            };
        }
        let n = elements.len();
        let diag = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt().max(1e-300);
        let step = (total_area / n as f64).sqrt().max(1e-12 * diag);
        let nx = (((x1 - x0) / step).ceil() as usize).max(1);
        let ny = (((y1 - y0) / step).ceil() as usize).max(1);
        let mut bins = vec![Vec::new(); nx * ny];
        let pad = 1e-9 * diag;
        for (i, el) in elements.iter().enumerate() {
            let (mut bx0, mut by0) = (f64::INFINITY, f64::INFINITY);
            let (mut bx1, mut by1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for p in &el.polygon {
                bx0 = bx0.min(p.x);
                by0 = by0.min(p.y);
                bx1 = bx1.max(p.x);
                by1 = by1.max(p.y);
            }
            let ix0 = bin_index(bx0 - pad, x0, step, nx);
            let ix1 = bin_index(bx1 + pad, x0, step, nx);
            let iy0 = bin_index(by0 - pad, y0, step, ny);
            let iy1 = bin_index(by1 + pad, y0, step, ny);
            for iy in iy0..=iy1 {
                for ix in ix0..=ix1 {
                    bins[iy * nx + ix].push(i);
                }
            }
        }
        FieldSampler {
            elements,
            x0,
            y0,
            step,
            nx,
            ny,
            bins,
        }
    }

    /// Temperature of the nodal field at `p`; errors if `p` lies in no cell.
    pub fn sample(&self, nodal: &DVector<f64>, p: Point2D) -> Result<f64> {
        let ix = bin_index(p.x, self.x0, self.step, self.nx);
        let iy = bin_index(p.y, self.y0, self.step, self.ny);
        for &ei in &self.bins[iy * self.nx + ix] {
            let el = &self.elements[ei];
            if let Some((xi, eta, edge)) = el.locate(p) {
                let local = gather_local(el, nodal)?;
                return el.interior_temperature(&local, xi, eta, edge);
            }
        }
        Err(Error::config(format!(
            "probe point ({}, {}) lies outside the mesh",
            p.x, p.y
        )))
    }
}

fn bin_index(v: f64, origin: f64, step: f64, count: usize) -> usize {
    let i = ((v - origin) / step).floor() as isize;
    i.clamp(0, count as isize - 1) as usize
}

/// Errors at or below this are treated as numerically exact: they are
/// excluded from rate fits and produce no local rate.
pub const ERROR_FLOOR: f64 = 1e-12;

/// Rate fits with R^2 below this are flagged as unresolved.
pub const RATE_FIT_MIN_R2: f64 = 0.98;

#[derive(Clone, Debug)]
pub struct ConvergenceRecord {
    pub h: f64,
    pub dof: usize,
    pub error: f64,
    /// Rate between this record and the previous one.
    pub rate_local: Option<f64>,
    pub wall_seconds: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct RateFit {
    pub slope: f64,
    pub r_squared: f64,
}

impl RateFit {
    pub fn is_well_resolved(&self) -> bool {
        self.r_squared >= RATE_FIT_MIN_R2
    }
}

#[derive(Clone, Debug)]
pub struct ConvergenceStudy {
    pub records: Vec<ConvergenceRecord>,
    /// None when fewer than two points sit above [`ERROR_FLOOR`].
    pub fit: Option<RateFit>,
}

/// Least-squares slope of log error vs log h over `(h, error)` points.
/// Points at or below [`ERROR_FLOOR`] are dropped; needs two usable points.
pub fn fit_rate(points: &[(f64, f64)]) -> Option<RateFit> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(h, e)| h > 0.0 && e > ERROR_FLOOR)
        .map(|&(h, e)| (h.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in &pts {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy <= 0.0 {
        1.0
    } else {
        (sxy * sxy) / (sxx * syy)
    };
    Some(RateFit { slope, r_squared })
}

/// Fills in local rates between consecutive records and fits the global
/// slope.
pub fn study_from_records(mut records: Vec<ConvergenceRecord>) -> ConvergenceStudy {
    for i in 1..records.len() {
        let (h0, e0) = (records[i - 1].h, records[i - 1].error);
        let (h1, e1) = (records[i].h, records[i].error);
        records[i].rate_local = if e0 > ERROR_FLOOR && e1 > ERROR_FLOOR && h0 != h1 {
            Some((e0 / e1).ln() / (h0 / h1).ln())
        } else {
            None
        };
    }
    let points: Vec<(f64, f64)> = records.iter().map(|r| (r.h, r.error)).collect();
    ConvergenceStudy {
        records,
        fit: fit_rate(&points),
    }
}

/// Runs `case` once per mesh size; `case` returns (DOF count, relative
/// error). Each run is timed. Failures are annotated with the mesh size.
pub fn run_convergence_study(
    hs: &[f64],
    mut case: impl FnMut(f64) -> Result<(usize, f64)>,
) -> Result<ConvergenceStudy> {
    if hs.len() < 3 {
        return Err(Error::config(format!(
            "convergence study needs at least 3 mesh sizes, got {}",
            hs.len()
        )));
    }
    let mut records = Vec::with_capacity(hs.len());
    for &h in hs {
        let t0 = Instant::now();
        let (dof, error) = case(h).map_err(|e| annotate_h(e, h))?;
        records.push(ConvergenceRecord {
            h,
            dof,
            error,
            rate_local: None,
            wall_seconds: t0.elapsed().as_secs_f64(),
        });
    }
    Ok(study_from_records(records))
}

/// Prefixes the failing mesh size while preserving the numerical-vs-usage
/// exit class of the original error.
fn annotate_h(e: Error, h: f64) -> Error {
    let message = format!("mesh size h = {h}: {e}");
    if e.exit_code() == 1 {
        Error::Singular { detail: message }
    } else {
        Error::config(message)
    }
}

/// One CSV row per record: h, dof, error, rate_local (blank when undefined),
/// wall_seconds.
pub fn write_convergence_csv(path: &Path, study: &ConvergenceStudy) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_path(path)
        .map_err(|e| Error::config(format!("cannot write {}: {e}", path.display())))?;
    (|| -> csv::Result<()> {
        w.write_record(["h", "dof", "error", "rate_local", "wall_seconds"])?;
        for r in &study.records {
            w.write_record([
                format!("{:.16e}", r.h),
                r.dof.to_string(),
                format!("{:.16e}", r.error),
                r.rate_local.map(|v| format!("{v:.6}")).unwrap_or_default(),
                format!("{:.6}", r.wall_seconds),
            ])?;
        }
        w.flush().map_err(csv::Error::from)
    })()
    .map_err(|e| Error::config(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}
