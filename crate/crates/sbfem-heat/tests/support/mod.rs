//! Shared fixtures for the integration suites.
//!
//! The reference solvers here recompute the element matrices without touching
//! the library's eigendecomposition path: the stiffness comes from integrating
//! a matrix Riccati flow to its steady state, the mass from a Lyapunov
//! equation solved by Kronecker vectorization, and both start from a
//! coefficient assembly written independently of `element::coefficient_matrices`.
//! The invariant checkers at the bottom are reused by the property and
//! acceptance suites.
#![allow(dead_code)] // each integration binary links only part of this module

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use sbfem_heat::element::{
    build_hamiltonian, coefficient_matrices, compute_all_elements, ElementData, Material,
};
use sbfem_heat::geometry::{signed_area, Mesh, Node, Point2D, PolygonCell};
use sbfem_heat::linalg::eigen_decompose;
use sbfem_heat::solver::{run_transient, solve_steady, BoundaryCondition, TransientConfig};

/// Largest allowed relative mismatch between an eigenvalue and the mirror
/// image of its partner across zero.
pub const SPECTRUM_SYMMETRY_TOL: f64 = 1e-7;
/// Row sums of the conduction matrix must vanish to this fraction of its norm.
pub const ROW_SUM_TOL: f64 = 1e-8;
/// Eigenvalues below this fraction of the largest count as the kernel.
pub const KERNEL_TOL: f64 = 1e-8;
/// Relative tolerance on the total capacity `1^T M 1 = rho c A`.
pub const MASS_TOTAL_TOL: f64 = 1e-8;
/// Nodal tolerance for reproducing an affine steady field.
pub const PATCH_TOL: f64 = 1e-9;
/// Relative Frobenius tolerance between library matrices and the reference
/// solvers in this module.
pub const ORACLE_REL_TOL: f64 = 1e-7;

pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

// ---------------------------------------------------------------------------
// Polygon fixtures
// ---------------------------------------------------------------------------

pub fn regular_polygon(sides: usize, radius: f64) -> Vec<(f64, f64)> {
    let step = std::f64::consts::TAU / sides as f64;
    (0..sides)
        .map(|i| {
            let theta = step * i as f64;
            (radius * theta.cos(), radius * theta.sin())
        })
        .collect()
}

/// Random star-shaped polygon: jittered angles and radii around a circle,
/// then rotated, scaled, and translated. The jitter bounds keep the centroid
/// well inside, so the shapes stay valid cells.
pub fn perturbed_polygon(sides: usize, rng: &mut impl Rng) -> Vec<(f64, f64)> {
    let step = std::f64::consts::TAU / sides as f64;
    let rot: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let scale: f64 = rng.gen_range(0.3..3.0);
    let cx: f64 = rng.gen_range(-10.0..10.0);
    let cy: f64 = rng.gen_range(-10.0..10.0);
    (0..sides)
        .map(|i| {
            let theta = rot + step * (i as f64 + rng.gen_range(-0.25..0.25));
            let r = scale * rng.gen_range(0.6..1.4);
            (cx + r * theta.cos(), cy + r * theta.sin())
        })
        .collect()
}

/// Single-cell mesh over one counter-clockwise polygon. No boundary tags.
pub fn mesh_from_polygon(points: &[(f64, f64)]) -> Mesh {
    let nodes = points
        .iter()
        .enumerate()
        .map(|(id, &(x, y))| Node {
            id,
            position: Point2D::new(x, y),
        })
        .collect();
    let cells = vec![PolygonCell {
        id: 0,
        vertex_ids: (0..points.len()).collect(),
        material_id: 0,
    }];
    Mesh {
        nodes,
        cells,
        edge_tags: BTreeMap::new(),
    }
}

// ---------------------------------------------------------------------------
// Reference coefficient assembly
// ---------------------------------------------------------------------------

/// Boundary coefficient matrices (E0, E1, E2, M0) assembled with plain loops.
///
/// Each edge of the polygon is a two-node line element scaled toward the
/// centroid. With coordinates shifted so the centroid is the origin, the
/// edge Jacobian `x y' - y x'` is constant and the two-point Gauss rule is
/// exact for every integrand below.
pub fn reference_coefficients(
    points: &[(f64, f64)],
    conductivity: f64,
    rho_c: f64,
) -> [DMatrix<f64>; 4] {
    let n = points.len();
    assert!(n >= 3, "polygon needs at least 3 vertices");

    // Area centroid by the shoelace formula.
    let mut twice_area = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..n {
        let (x1, y1) = points[i];
        let (x2, y2) = points[(i + 1) % n];
        let w = x1 * y2 - x2 * y1;
        twice_area += w;
        cx += (x1 + x2) * w;
        cy += (y1 + y2) * w;
    }
    assert!(twice_area > 0.0, "polygon must be counter-clockwise");
    let cx = cx / (3.0 * twice_area);
    let cy = cy / (3.0 * twice_area);

    let mut e0 = DMatrix::zeros(n, n);
    let mut e1 = DMatrix::zeros(n, n);
    let mut e2 = DMatrix::zeros(n, n);
    let mut m0 = DMatrix::zeros(n, n);

    let g = 1.0 / 3.0_f64.sqrt();
    let gauss = [(-g, 1.0), (g, 1.0)];

    for e in 0..n {
        let ids = [e, (e + 1) % n];
        let (x1, y1) = (points[ids[0]].0 - cx, points[ids[0]].1 - cy);
        let (x2, y2) = (points[ids[1]].0 - cx, points[ids[1]].1 - cy);
        let dx = (x2 - x1) / 2.0;
        let dy = (y2 - y1) / 2.0;
        let jac = (x1 * y2 - x2 * y1) / 2.0;
        assert!(jac > 0.0, "edge {e} is degenerate or wrongly oriented");

        for (eta, w) in gauss {
            let shp = [0.5 * (1.0 - eta), 0.5 * (1.0 + eta)];
            let der = [-0.5, 0.5];
            let xb = shp[0] * x1 + shp[1] * x2;
            let yb = shp[0] * y1 + shp[1] * y2;
            // Gradient factors for the radial and circumferential directions.
            let b1 = [dy / jac, -dx / jac];
            let b2 = [-yb / jac, xb / jac];
            let b11 = b1[0] * b1[0] + b1[1] * b1[1];
            let b21 = b2[0] * b1[0] + b2[1] * b1[1];
            let b22 = b2[0] * b2[0] + b2[1] * b2[1];

            for r in 0..2 {
                for c in 0..2 {
                    let (gi, gj) = (ids[r], ids[c]);
                    e0[(gi, gj)] += w * conductivity * b11 * shp[r] * shp[c] * jac;
                    e1[(gi, gj)] += w * conductivity * b21 * der[r] * shp[c] * jac;
                    e2[(gi, gj)] += w * conductivity * b22 * der[r] * der[c] * jac;
                    m0[(gi, gj)] += w * rho_c * shp[r] * shp[c] * jac;
                }
            }
        }
    }

    [e0, e1, e2, m0]
}

// ---------------------------------------------------------------------------
// Reference stiffness: steady state of the matrix Riccati flow
// ---------------------------------------------------------------------------

/// Steady-state stiffness from the algebraic Riccati equation
/// `(K - E1) E0^{-1} (K - E1)^T = E2`, found by integrating the flow
/// `dK/ds = E2 - (K - E1) E0^{-1} (K - E1)^T` from `K(0) = E2` with a
/// classic fourth-order Runge-Kutta scheme.
///
/// The starting point matters: `E2` shares the constant-mode kernel of the
/// physical solution and lies in its basin, so the flow relaxes onto the
/// branch whose radial modes decay toward the scaling center. Convergence is
/// exponential with rate twice the smallest positive decay exponent.
pub fn riccati_stiffness(e0: &DMatrix<f64>, e1: &DMatrix<f64>, e2: &DMatrix<f64>) -> DMatrix<f64> {
    let e0_inv = e0
        .clone()
        .try_inverse()
        .expect("E0 must be invertible for the Riccati flow");
    let rate = |k: &DMatrix<f64>| {
        let d = k - e1;
        e2 - &d * &e0_inv * d.transpose()
    };

    let h = 1e-3;
    let mut k = e2.clone();
    let max_steps = 100_000;
    for step in 0..max_steps {
        let k1 = rate(&k);
        let k2 = rate(&(&k + &k1 * (h / 2.0)));
        let k3 = rate(&(&k + &k2 * (h / 2.0)));
        let k4 = rate(&(&k + &k3 * h));
        k += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        // The flow preserves symmetry exactly; re-symmetrize to stop
        // round-off drift from accumulating over many steps.
        k = (&k + k.transpose()) * 0.5;

        if step % 100 == 99 && rate(&k).norm() <= 1e-13 * k.norm().max(1.0) {
            return k;
        }
    }
    panic!("Riccati flow did not reach a steady state within {max_steps} steps");
}

// ---------------------------------------------------------------------------
// Reference mass: Lyapunov equation by Kronecker vectorization
// ---------------------------------------------------------------------------

/// Mass matrix from the Lyapunov equation `A M + M A^T = -M0` with
/// `A = (E1 - K) E0^{-1} - I`, solved densely as
/// `(I (x) A + A (x) I) vec(M) = -vec(M0)`.
///
/// The eigenvalues of `A` are `-(1 + lambda_i)` for decay exponents
/// `lambda_i >= 0`, so every pairwise sum is at most -2 and the Kronecker
/// system is nonsingular.
pub fn lyapunov_mass(
    e0: &DMatrix<f64>,
    e1: &DMatrix<f64>,
    m0: &DMatrix<f64>,
    k: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = e0.nrows();
    let e0_inv = e0
        .clone()
        .try_inverse()
        .expect("E0 must be invertible for the Lyapunov solve");
    let a = (e1 - k) * &e0_inv - DMatrix::<f64>::identity(n, n);
    let eye = DMatrix::<f64>::identity(n, n);

    let system = eye.kronecker(&a) + a.kronecker(&eye);
    let rhs = DVector::from_iterator(n * n, m0.iter().map(|&v| -v));
    let vec_m = system
        .lu()
        .solve(&rhs)
        .expect("Kronecker system must be nonsingular");
    DMatrix::from_column_slice(n, n, vec_m.as_slice())
}

// ---------------------------------------------------------------------------
// Invariant checkers
// ---------------------------------------------------------------------------

/// Every eigenvalue of the radial evolution matrix must have a partner at
/// its mirror image across zero.
pub fn check_spectrum_symmetry(zp: &DMatrix<f64>) -> Result<(), String> {
    let ed = eigen_decompose(zp).map_err(|e| e.to_string())?;
    let vals: Vec<(f64, f64)> = ed.re.iter().zip(&ed.im).map(|(&r, &i)| (r, i)).collect();
    let scale = vals
        .iter()
        .map(|&(r, i)| r.hypot(i))
        .fold(0.0_f64, f64::max)
        .max(1e-300);

    let mut used = vec![false; vals.len()];
    for i in 0..vals.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let target = (-vals[i].0, -vals[i].1);
        let mut best: Option<(usize, f64)> = None;
        for (j, &(re, im)) in vals.iter().enumerate() {
            if used[j] {
                continue;
            }
            let d = (re - target.0).hypot(im - target.1);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        match best {
            Some((j, d)) if d <= SPECTRUM_SYMMETRY_TOL * scale => used[j] = true,
            _ => {
                // A leftover eigenvalue may only stand alone at zero, where
                // it is its own mirror image.
                if vals[i].0.hypot(vals[i].1) > SPECTRUM_SYMMETRY_TOL * scale {
                    return Err(format!(
                        "eigenvalue ({:.6e}, {:.6e}) has no mirrored partner (scale {scale:.3e})",
                        vals[i].0, vals[i].1
                    ));
                }
            }
        }
    }
    Ok(())
}

/// The conduction matrix must be symmetric positive semidefinite with row
/// sums zero and exactly the constant mode in its kernel.
pub fn check_stiffness(k: &DMatrix<f64>) -> Result<(), String> {
    let n = k.nrows();
    let scale = k.norm();
    if !scale.is_finite() || scale == 0.0 {
        return Err(format!("stiffness norm is {scale}"));
    }

    let asym = (k - k.transpose()).norm();
    if asym > 1e-12 * scale {
        return Err(format!("stiffness asymmetry {asym:.3e} exceeds 1e-12 of norm {scale:.3e}"));
    }

    let ones = DVector::from_element(n, 1.0);
    let row_sum = (k * &ones).amax();
    if row_sum > ROW_SUM_TOL * scale {
        return Err(format!(
            "constant mode leaks through the stiffness: |K 1| = {row_sum:.3e}, norm {scale:.3e}"
        ));
    }

    let eigs = k.clone().symmetric_eigen().eigenvalues;
    let max = eigs.max();
    // Negated form so a NaN spectrum fails the check.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(max > 0.0) {
        return Err(format!("stiffness has no positive spectrum (max {max:.3e})"));
    }
    let min = eigs.min();
    if min < -KERNEL_TOL * max {
        return Err(format!("stiffness has a negative eigenvalue {min:.3e} (max {max:.3e})"));
    }
    let kernel = eigs.iter().filter(|&&l| l.abs() <= KERNEL_TOL * max).count();
    if kernel != 1 {
        return Err(format!("stiffness kernel dimension is {kernel}, want 1"));
    }
    Ok(())
}

/// The capacity matrix must be symmetric positive definite and integrate the
/// constant mode to `rho c A`.
pub fn check_mass(m: &DMatrix<f64>, rho_c: f64, area: f64) -> Result<(), String> {
    let n = m.nrows();
    let asym = (m - m.transpose()).norm();
    if asym > 1e-12 * m.norm().max(1e-300) {
        return Err(format!("mass asymmetry {asym:.3e}"));
    }

    let eigs = m.clone().symmetric_eigen().eigenvalues;
    let min = eigs.min();
    // Negated form so a NaN spectrum fails the check.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(min > 0.0) {
        return Err(format!("mass matrix is not positive definite (min eigenvalue {min:.3e})"));
    }

    let ones = DVector::from_element(n, 1.0);
    let total = ones.dot(&(m * &ones));
    let want = rho_c * area;
    if (total - want).abs() > MASS_TOTAL_TOL * want {
        return Err(format!(
            "total capacity {total:.12e} differs from rho c A = {want:.12e}"
        ));
    }
    Ok(())
}

/// Runs every per-cell invariant on one computed element.
pub fn check_cell(el: &ElementData, mesh: &Mesh) -> Result<(), String> {
    let cell = mesh
        .cells
        .iter()
        .find(|c| c.id == el.cell_id)
        .ok_or_else(|| format!("cell {} missing from mesh", el.cell_id))?;
    let cm = coefficient_matrices(cell, el.center, mesh, &el.material, 2)
        .map_err(|e| e.to_string())?;
    let zp = build_hamiltonian(&cm).map_err(|e| e.to_string())?;
    check_spectrum_symmetry(&zp).map_err(|e| format!("cell {}: {e}", el.cell_id))?;
    check_stiffness(&el.matrices.k).map_err(|e| format!("cell {}: {e}", el.cell_id))?;

    let area = signed_area(&el.polygon).abs();
    let rho_c = el.material.density * el.material.specific_heat;
    check_mass(&el.matrices.m, rho_c, area).map_err(|e| format!("cell {}: {e}", el.cell_id))?;
    Ok(())
}

/// Computes all elements of a mesh and runs the per-cell invariants on each.
pub fn check_all_cells(mesh: &Mesh, material: Material) -> Result<Vec<ElementData>, String> {
    let elements = compute_all_elements(mesh, &[material], 2).map_err(|e| e.to_string())?;
    for el in &elements {
        check_cell(el, mesh)?;
    }
    Ok(elements)
}

/// An affine temperature field prescribed on the whole boundary must be
/// reproduced exactly at every node, interior nodes included.
pub fn check_patch(mesh: &Mesh, material: Material, coeffs: (f64, f64, f64)) -> Result<(), String> {
    let (a, b, c) = coeffs;
    let tags: BTreeSet<String> = mesh.edge_tags.values().cloned().collect();
    if tags.is_empty() {
        return Err("mesh has no tagged boundary edges".into());
    }

    let mut bcs = BTreeMap::new();
    for tag in tags {
        bcs.insert(
            tag,
            BoundaryCondition::Dirichlet(Arc::new(move |x, y, _t| a + b * x + c * y)),
        );
    }

    let elements = compute_all_elements(mesh, &[material], 2).map_err(|e| e.to_string())?;
    let solution = solve_steady(mesh, &elements, &bcs).map_err(|e| e.to_string())?;

    let field = |p: Point2D| a + b * p.x + c * p.y;
    let scale = 1.0
        + mesh
            .nodes
            .iter()
            .map(|n| field(n.position).abs())
            .fold(0.0_f64, f64::max);
    for node in &mesh.nodes {
        let want = field(node.position);
        let got = solution[node.id];
        if (got - want).abs() > PATCH_TOL * scale {
            return Err(format!(
                "node {} at ({:.6}, {:.6}): solved {got:.15e}, affine field {want:.15e}",
                node.id, node.position.x, node.position.y
            ));
        }
    }
    Ok(())
}

/// Capacity-weighted energy `T^T M T`, accumulated element by element so the
/// sparse global matrix is never formed.
pub fn field_energy(elements: &[ElementData], nodal: &DVector<f64>) -> f64 {
    elements
        .iter()
        .map(|el| {
            let ids = &el.matrices.node_ids;
            let local = DVector::from_iterator(ids.len(), ids.iter().map(|&i| nodal[i]));
            local.dot(&(&el.matrices.m * &local))
        })
        .sum()
}

/// With homogeneous Dirichlet walls the implicit time stepper must not create
/// energy: `T^T M T` is nonincreasing step over step.
pub fn check_dissipation(
    mesh: &Mesh,
    material: Material,
    dt: f64,
    steps: usize,
    amps: (f64, f64),
) -> Result<(), String> {
    let bb = mesh.bounding_box().ok_or("mesh has no nodes")?;
    let tags: BTreeSet<String> = mesh.edge_tags.values().cloned().collect();
    if tags.is_empty() {
        return Err("mesh has no tagged boundary edges".into());
    }

    let mut bcs = BTreeMap::new();
    for tag in tags {
        bcs.insert(tag, BoundaryCondition::dirichlet_const(0.0));
    }

    let (x0, y0, w, h) = (bb.x0, bb.y0, bb.width(), bb.height());
    let (a1, a2) = amps;
    let initial = move |x: f64, y: f64| {
        let u = (x - x0) / w * std::f64::consts::PI;
        let v = (y - y0) / h * std::f64::consts::PI;
        a1 * u.sin() * v.sin() + a2 * (2.0 * u).sin() * v.sin()
    };

    let elements = compute_all_elements(mesh, &[material], 2).map_err(|e| e.to_string())?;
    let config = TransientConfig {
        dt,
        t_end: dt * steps as f64,
        output_every: 1,
    };
    let history =
        run_transient(mesh, &elements, &bcs, config, &initial).map_err(|e| e.to_string())?;

    let energies: Vec<f64> = history
        .iter()
        .map(|(_, t)| field_energy(&elements, t))
        .collect();
    if energies[0] <= 0.0 {
        return Err(format!("initial energy {} is not positive", energies[0]));
    }
    for (i, pair) in energies.windows(2).enumerate() {
        if pair[1] > pair[0] + 1e-10 * energies[0] {
            return Err(format!(
                "energy grew from {:.15e} to {:.15e} at step {}",
                pair[0],
                pair[1],
                i + 1
            ));
        }
    }
    Ok(())
}
