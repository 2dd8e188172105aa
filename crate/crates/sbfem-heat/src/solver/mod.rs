//! Global assembly, boundary conditions, and the steady / backward-Euler
//! transient solvers.
//!
//! Dirichlet constraints are handled by partition elimination: the free
//! block is factored (sparse Cholesky up to [`DIRECT_LIMIT`] unknowns,
//! Jacobi-preconditioned CG beyond), constrained columns move to the right
//! hand side. Transient runs factor the iteration matrix once and reuse it
//! for every step, since the time step and the constrained set are fixed
//! for the whole run; only boundary values and loads are re-evaluated.

mod linear;

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DVector;
use nalgebra_sparse::{coo::CooMatrix, csc::CscMatrix};

use crate::element::ElementData;
use crate::error::{Error, Result};
use crate::geometry::Mesh;
use linear::LinearSolver;

/// Unknowns above which the direct factorization yields to iterative CG.
pub const DIRECT_LIMIT: usize = 200_000;

/// Relative residual accepted from a linear solve.
const RESIDUAL_TOL: f64 = 1e-10;

/// Scalar field of (x, y, t), used for boundary values and loads.
pub type FieldFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum BoundaryCondition {
    /// Prescribed temperature on the edge's nodes.
    Dirichlet(FieldFn),
    /// Prescribed outward normal flux; positive flux removes heat.
    Flux(FieldFn),
    /// Robin exchange q_n = h (T - t_inf).
    Convection { h_coeff: f64, t_inf: f64 },
}

impl BoundaryCondition {
    pub fn dirichlet_const(v: f64) -> Self {
        BoundaryCondition::Dirichlet(Arc::new(move |_, _, _| v))
    }

    pub fn flux_const(v: f64) -> Self {
        BoundaryCondition::Flux(Arc::new(move |_, _, _| v))
    }
}

impl std::fmt::Debug for BoundaryCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundaryCondition::Dirichlet(_) => write!(f, "Dirichlet(<field>)"),
            BoundaryCondition::Flux(_) => write!(f, "Flux(<field>)"),
            BoundaryCondition::Convection { h_coeff, t_inf } => f
                .debug_struct("Convection")
                .field("h_coeff", h_coeff)
                .field("t_inf", t_inf)
                .finish(),
        }
    }
}

/// Assembled conduction and capacity matrices in triplet form. Duplicate
/// entries sum on conversion to CSC.
pub struct GlobalSystem {
    pub n_nodes: usize,
    pub k: CooMatrix<f64>,
    pub m: CooMatrix<f64>,
}

pub fn assemble_global(mesh: &Mesh, elements: &[ElementData]) -> Result<GlobalSystem> {
    let n = mesh.node_count();
    let mut k = CooMatrix::new(n, n);
    let mut m = CooMatrix::new(n, n);
    for el in elements {
        let ids = &el.matrices.node_ids;
        for (il, &gi) in ids.iter().enumerate() {
            if gi >= n {
                return Err(Error::config(format!(
                    "element {} references node {gi} outside mesh ({n} nodes)",
                    el.cell_id
                )));
            }
            for (jl, &gj) in ids.iter().enumerate() {
                k.push(gi, gj, el.matrices.k[(il, jl)]);
                let mv = el.matrices.m[(il, jl)];
                if mv != 0.0 {
                    m.push(gi, gj, mv);
                }
            }
        }
    }
    Ok(GlobalSystem { n_nodes: n, k, m })
}

/// Boundary data resolved against a mesh: per-node Dirichlet claims, flux
/// edges, and the convection augmentation (stiffness triplets plus the
/// constant ambient load).
struct BoundaryOps {
    /// node -> every Dirichlet field claiming it (corner nodes may carry
    /// claims from two tags; they must agree at evaluation time).
    dirichlet: BTreeMap<usize, Vec<FieldFn>>,
    /// (node a, node b, field) per flux edge.
    flux_edges: Vec<(usize, usize, FieldFn)>,
    conv: CooMatrix<f64>,
    conv_load: DVector<f64>,
    has_convection: bool,
}

fn resolve_boundary(mesh: &Mesh, bcs: &BTreeMap<String, BoundaryCondition>) -> Result<BoundaryOps> {
    let n = mesh.node_count();
    let mut ops = BoundaryOps {
        dirichlet: BTreeMap::new(),
        flux_edges: Vec::new(),
        conv: CooMatrix::new(n, n),
        conv_load: DVector::zeros(n),
        has_convection: false,
    };
    for tag in bcs.keys() {
        if !mesh.edge_tags.values().any(|t| t == tag) {
            return Err(Error::config(format!(
                "boundary condition references tag '{tag}' but no mesh edge carries it"
            )));
        }
    }
    for (&(a, b), tag) in &mesh.edge_tags {
        let Some(bc) = bcs.get(tag) else { continue };
        let pa = mesh.position(a);
        let pb = mesh.position(b);
        let len = pa.distance(&pb);
        match bc {
            BoundaryCondition::Dirichlet(f) => {
                ops.dirichlet.entry(a).or_default().push(f.clone());
                ops.dirichlet.entry(b).or_default().push(f.clone());
            }
            BoundaryCondition::Flux(f) => {
                ops.flux_edges.push((a, b, f.clone()));
            }
            BoundaryCondition::Convection { h_coeff, t_inf } => {
                let h = *h_coeff;
                ops.has_convection = true;
                ops.conv.push(a, a, 2.0 * h * len / 6.0);
                ops.conv.push(b, b, 2.0 * h * len / 6.0);
                ops.conv.push(a, b, h * len / 6.0);
                ops.conv.push(b, a, h * len / 6.0);
                ops.conv_load[a] += h * t_inf * len / 2.0;
                ops.conv_load[b] += h * t_inf * len / 2.0;
            }
        }
    }
    Ok(ops)
}

impl BoundaryOps {
    /// Dirichlet values at time `t`. Errors when two tags claim a node with
    /// disagreeing values.
    fn dirichlet_values(&self, mesh: &Mesh, t: f64) -> Result<Vec<(usize, f64)>> {
        let mut out = Vec::with_capacity(self.dirichlet.len());
        for (&node, claims) in &self.dirichlet {
            let p = mesh.position(node);
            let v0 = claims[0](p.x, p.y, t);
            for f in &claims[1..] {
                let v = f(p.x, p.y, t);
                if (v - v0).abs() > 1e-9 * v0.abs().max(1.0) {
                    return Err(Error::config(format!(
                        "conflicting Dirichlet values at node {node} ({:.6}, {:.6}): \
                         {v0} vs {v} at t={t}",
                        p.x, p.y
                    )));
                }
            }
            out.push((node, v0));
        }
        Ok(out)
    }

    /// Consistent nodal loads at time `t`: flux edges (2-point Gauss along
    /// the edge) plus the constant convection ambient term.
    fn load_vector(&self, mesh: &Mesh, t: f64) -> DVector<f64> {
        let mut f = self.conv_load.clone();
        let (pts, wts) = crate::linalg::gauss_legendre(2);
        for (a, b, q) in &self.flux_edges {
            let pa = mesh.position(*a);
            let pb = mesh.position(*b);
            let half_len = 0.5 * pa.distance(&pb);
            for (&eta, &w) in pts.iter().zip(&wts) {
                let n1 = 0.5 * (1.0 - eta);
                let n2 = 0.5 * (1.0 + eta);
                let x = n1 * pa.x + n2 * pb.x;
                let y = n1 * pa.y + n2 * pb.y;
                let qv = q(x, y, t);
                f[*a] -= qv * n1 * half_len * w;
                f[*b] -= qv * n2 * half_len * w;
            }
        }
        f
    }
}

/// Free/constrained node partition with both-way index maps.
struct Partition {
    free: Vec<usize>,
    constrained: Vec<usize>,
    /// node -> slot in `free` (None when constrained).
    free_pos: Vec<Option<usize>>,
    /// node -> slot in `constrained`.
    cons_pos: Vec<Option<usize>>,
}

impl Partition {
    fn new(n: usize, constrained_nodes: impl Iterator<Item = usize>) -> Self {
        let mut is_cons = vec![false; n];
        for c in constrained_nodes {
            is_cons[c] = true;
        }
        let mut part = Partition {
            free: Vec::new(),
            constrained: Vec::new(),
            free_pos: vec![None; n],
            cons_pos: vec![None; n],
        };
        for (node, &cons) in is_cons.iter().enumerate() {
            if cons {
                part.cons_pos[node] = Some(part.constrained.len());
                part.constrained.push(node);
            } else {
                part.free_pos[node] = Some(part.free.len());
                part.free.push(node);
            }
        }
        part
    }

    /// Splits triplets of a square matrix into (free x free, free x
    /// constrained) blocks.
    fn split<'a>(
        &self,
        triplets: impl Iterator<Item = (usize, usize, &'a f64)>,
    ) -> (CooMatrix<f64>, CooMatrix<f64>) {
        let nf = self.free.len();
        let nc = self.constrained.len();
        let mut ff = CooMatrix::new(nf, nf);
        let mut fc = CooMatrix::new(nf, nc.max(1));
        for (r, c, &v) in triplets {
            let Some(fr) = self.free_pos[r] else { continue };
            match (self.free_pos[c], self.cons_pos[c]) {
                (Some(fcid), _) => ff.push(fr, fcid, v),
                (None, Some(cc)) => fc.push(fr, cc, v),
                _ => unreachable!(),
            }
        }
        (ff, fc)
    }

    fn gather(&self, full: &DVector<f64>, nodes: &[usize]) -> DVector<f64> {
        DVector::from_iterator(nodes.len(), nodes.iter().map(|&i| full[i]))
    }
}

fn csc_matvec(a: &CscMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    let mut y = DVector::zeros(a.nrows());
    for (r, c, v) in a.triplet_iter() {
        y[r] += v * x[c];
    }
    y
}

fn check_residual(
    a: &CscMatrix<f64>,
    x: &DVector<f64>,
    b: &DVector<f64>,
    step: &str,
) -> Result<()> {
    let r = (csc_matvec(a, x) - b).norm();
    let rel = r / b.norm().max(1e-30);
    if rel > RESIDUAL_TOL && r > RESIDUAL_TOL {
        return Err(Error::SolveFailure {
            step: step.to_string(),
            residual: rel,
        });
    }
    Ok(())
}

/// Steady conduction: K T = F with Dirichlet elimination. Time-dependent
/// boundary expressions are evaluated at t = 0.
pub fn solve_steady(
    mesh: &Mesh,
    elements: &[ElementData],
    bcs: &BTreeMap<String, BoundaryCondition>,
) -> Result<DVector<f64>> {
    let system = assemble_global(mesh, elements)?;
    let ops = resolve_boundary(mesh, bcs)?;
    if ops.dirichlet.is_empty() && !ops.has_convection {
        return Err(Error::Singular {
            detail: "steady problem has no Dirichlet or convection boundary; \
                     temperature is determined only up to a constant"
                .into(),
        });
    }

    let n = system.n_nodes;
    let part = Partition::new(n, ops.dirichlet.keys().copied());
    let cons_values = ops.dirichlet_values(mesh, 0.0)?;
    let mut t_full = DVector::zeros(n);
    for &(node, v) in &cons_values {
        t_full[node] = v;
    }

    let load = ops.load_vector(mesh, 0.0);
    let k_triplets = system.k.triplet_iter().chain(ops.conv.triplet_iter());
    let (kff, kfc) = part.split(k_triplets);
    let kff = CscMatrix::from(&kff);
    let kfc = CscMatrix::from(&kfc);

    if part.free.is_empty() {
        return Ok(t_full);
    }

    let tc = part.gather(&t_full, &part.constrained);
    let b = part.gather(&load, &part.free) - csc_matvec(&kfc, &tc);
    let solver = LinearSolver::new(kff.clone())?;
    let x = solver.solve(&b)?;
    check_residual(&kff, &x, &b, "steady")?;

    for (slot, &node) in part.free.iter().enumerate() {
        t_full[node] = x[slot];
    }
    Ok(t_full)
}

#[derive(Clone, Copy, Debug)]
pub struct TransientConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Keep every k-th step in the returned history (the final step is
    /// always kept).
    pub output_every: usize,
}

impl TransientConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::config(format!(
                "t_end must be positive, got {}",
                self.t_end
            )));
        }
        if self.output_every == 0 {
            return Err(Error::config("output_every must be >= 1"));
        }
        Ok(())
    }

    pub fn step_count(&self) -> usize {
        // Guard against counting an extra step when t_end/dt sits a few
        // ulps above an integer.
        ((self.t_end / self.dt) - 1e-9).ceil().max(1.0) as usize
    }
}

/// Backward-Euler history: (time, full nodal temperature) per kept step,
/// starting with the initial state at t = 0.
pub fn run_transient(
    mesh: &Mesh,
    elements: &[ElementData],
    bcs: &BTreeMap<String, BoundaryCondition>,
    config: TransientConfig,
    initial: &dyn Fn(f64, f64) -> f64,
) -> Result<Vec<(f64, DVector<f64>)>> {
    config.validate()?;
    let system = assemble_global(mesh, elements)?;
    let ops = resolve_boundary(mesh, bcs)?;
    let n = system.n_nodes;
    let dt = config.dt;

    if system.m.triplet_iter().next().is_none() {
        return Err(Error::config(
            "transient run requires density * specific_heat > 0 in every material",
        ));
    }

    let part = Partition::new(n, ops.dirichlet.keys().copied());
    let (kff, kfc) = {
        let k_triplets = system.k.triplet_iter().chain(ops.conv.triplet_iter());
        let (ff, fc) = part.split(k_triplets);
        (CscMatrix::from(&ff), CscMatrix::from(&fc))
    };
    let (mff, mfc) = {
        let (ff, fc) = part.split(system.m.triplet_iter());
        (CscMatrix::from(&ff), CscMatrix::from(&fc))
    };

    // Iteration matrix A = K_ff + M_ff / dt, factored once for all steps.
    let nf = part.free.len();
    let mut a_coo = CooMatrix::new(nf, nf);
    for (r, c, &v) in kff.triplet_iter() {
        a_coo.push(r, c, v);
    }
    for (r, c, &v) in mff.triplet_iter() {
        a_coo.push(r, c, v / dt);
    }
    let a = CscMatrix::from(&a_coo);
    let solver = if nf > 0 { Some(LinearSolver::new(a.clone())?) } else { None };

    let mut t_full = DVector::from_iterator(
        n,
        (0..n).map(|i| {
            let p = mesh.position(i);
            initial(p.x, p.y)
        }),
    );
    let mut tc_prev = part.gather(&t_full, &part.constrained);

    let steps = config.step_count();
    let mut history = Vec::with_capacity(steps / config.output_every + 2);
    history.push((0.0, t_full.clone()));

    for k in 1..=steps {
        let time = k as f64 * dt;
        let tc_values = ops.dirichlet_values(mesh, time)?;
        let mut tc = DVector::zeros(part.constrained.len());
        for &(node, v) in &tc_values {
            tc[part.cons_pos[node].expect("constrained node")] = v;
        }

        if let Some(solver) = &solver {
            let load = ops.load_vector(mesh, time);
            let tf_prev = part.gather(&t_full, &part.free);
            // (M_ff/dt + K_ff) T_f = F_f + M_ff T_f^prev / dt
            //   - M_fc (T_c - T_c^prev)/dt - K_fc T_c
            let mut b = part.gather(&load, &part.free);
            b += csc_matvec(&mff, &tf_prev) / dt;
            let dtc = (&tc - &tc_prev) / dt;
            b -= csc_matvec(&mfc, &dtc);
            b -= csc_matvec(&kfc, &tc);

            let x = solver.solve(&b)?;
            check_residual(&a, &x, &b, &format!("transient step {k}"))?;
            for (slot, &node) in part.free.iter().enumerate() {
                t_full[node] = x[slot];
            }
        }
        for &(node, v) in &tc_values {
            t_full[node] = v;
        }
        tc_prev = tc;

        if k % config.output_every == 0 || k == steps {
            history.push((time, t_full.clone()));
        }
    }
    Ok(history)
}
