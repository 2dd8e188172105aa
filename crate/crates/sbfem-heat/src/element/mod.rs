//! Semi-analytical polygon element kernel.
//!
//! Each polygon cell is one subdomain: its boundary is meshed with 2-node
//! line elements, the radial direction toward the scaling center is solved
//! analytically through the eigenstructure of a Hamiltonian matrix built
//! from the boundary coefficient matrices E0, E1, E2. The steady stiffness
//! is K = psi21 psi11^-1 over the decaying (bounded at the center) modal
//! family; the mass matrix comes from a Lyapunov solve in that modal basis.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, Vector2, Vector4};

use crate::error::{Error, Result};
use crate::geometry::{
    compute_scaling_center, signed_area, Mesh, Point2D, PolygonCell,
};
use crate::linalg::{eigen_decompose, gauss_legendre};

/// Isotropic material: conductivity k, volumetric heat capacity rho*c.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Material {
    pub conductivity: f64,
    pub density: f64,
    pub specific_heat: f64,
}

impl Material {
    pub fn new(conductivity: f64, density: f64, specific_heat: f64) -> Result<Self> {
        let rc = density * specific_heat;
        if !(conductivity > 0.0 && conductivity.is_finite() && rc.is_finite() && rc >= 0.0) {
            return Err(Error::config(format!(
                "material needs conductivity > 0 and density*specific_heat >= 0, \
                 got k={conductivity}, rho*c={rc}"
            )));
        }
        Ok(Material {
            conductivity,
            density,
            specific_heat,
        })
    }

    pub fn rho_c(&self) -> f64 {
        self.density * self.specific_heat
    }
}

/// One boundary edge in scaling-center-local coordinates.
#[derive(Clone, Copy, Debug)]
pub struct EdgeGeometry {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl EdgeGeometry {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let e = EdgeGeometry { x1, y1, x2, y2 };
        if e.length() <= 1e-14 {
            return Err(Error::DegenerateEdge {
                cell_id: usize::MAX,
                detail: format!("edge length {:.3e}", e.length()),
            });
        }
        // The triangle (center, node1, node2) must be positively oriented;
        // its area is the constant boundary Jacobian of a straight edge.
        if e.jacobian_constant() <= 1e-14 {
            return Err(Error::DegenerateEdge {
                cell_id: usize::MAX,
                detail: format!(
                    "non-positive boundary Jacobian {:.3e}",
                    e.jacobian_constant()
                ),
            });
        }
        Ok(e)
    }

    pub fn length(&self) -> f64 {
        (self.x2 - self.x1).hypot(self.y2 - self.y1)
    }

    /// (x1*y2 - x2*y1)/2: the signed area of (center, node1, node2).
    fn jacobian_constant(&self) -> f64 {
        0.5 * (self.x1 * self.y2 - self.x2 * self.y1)
    }
}

/// Linear shape functions on [-1, 1]: values (N1, N2) and derivatives.
pub fn shape_functions(eta: f64) -> ([f64; 2], [f64; 2]) {
    debug_assert!(eta.abs() <= 1.0 + 1e-12);
    ([(1.0 - eta) / 2.0, (1.0 + eta) / 2.0], [-0.5, 0.5])
}

/// Boundary Jacobian |J_b| = x_b y_b,eta - y_b x_b,eta at `eta`. Constant
/// along a straight edge, but evaluated pointwise to match the definition.
pub fn boundary_jacobian(edge: &EdgeGeometry, eta: f64) -> Result<f64> {
    let (n, dn) = shape_functions(eta);
    let xb = n[0] * edge.x1 + n[1] * edge.x2;
    let yb = n[0] * edge.y1 + n[1] * edge.y2;
    let xb_eta = dn[0] * edge.x1 + dn[1] * edge.x2;
    let yb_eta = dn[0] * edge.y1 + dn[1] * edge.y2;
    let j = xb * yb_eta - yb * xb_eta;
    if j <= 1e-14 {
        return Err(Error::DegenerateEdge {
            cell_id: usize::MAX,
            detail: format!("boundary Jacobian {j:.3e} at eta={eta}"),
        });
    }
    Ok(j)
}

/// Scalar-field gradient maps: the operator splits as
/// grad = b1 d/dxi + (1/xi) b2 d/deta with
/// b1 = [y_b,eta, -x_b,eta]/|J_b|, b2 = [-y_b, x_b]/|J_b|.
pub fn b_vectors(edge: &EdgeGeometry, eta: f64) -> Result<(Vector2<f64>, Vector2<f64>)> {
    let (n, dn) = shape_functions(eta);
    let xb = n[0] * edge.x1 + n[1] * edge.x2;
    let yb = n[0] * edge.y1 + n[1] * edge.y2;
    let xb_eta = dn[0] * edge.x1 + dn[1] * edge.x2;
    let yb_eta = dn[0] * edge.y1 + dn[1] * edge.y2;
    let j = boundary_jacobian(edge, eta)?;
    Ok((
        Vector2::new(yb_eta / j, -xb_eta / j),
        Vector2::new(-yb / j, xb / j),
    ))
}

/// Per-edge 2x2 integrand blocks of the four coefficient matrices.
pub fn edge_coefficient_blocks(
    edge: &EdgeGeometry,
    material: &Material,
    gauss_order: usize,
) -> Result<[Matrix2<f64>; 4]> {
    let k = material.conductivity;
    let rc = material.rho_c();
    let (pts, wts) = gauss_legendre(gauss_order);
    let mut e0 = Matrix2::zeros();
    let mut e1 = Matrix2::zeros();
    let mut e2 = Matrix2::zeros();
    let mut m0 = Matrix2::zeros();
    for (&eta, &wg) in pts.iter().zip(&wts) {
        let (n, dn) = shape_functions(eta);
        let j = boundary_jacobian(edge, eta)?;
        let (b1, b2) = b_vectors(edge, eta)?;
        // B1 = b1 [N1 N2], B2 = b2 [N1' N2']; blocks are Bi^T k Bj |J| w.
        let nb1 = nalgebra::Matrix2::from_fn(|r, c| b1[r] * n[c]);
        let nb2 = nalgebra::Matrix2::from_fn(|r, c| b2[r] * dn[c]);
        e0 += nb1.transpose() * nb1 * (k * j * wg);
        e1 += nb2.transpose() * nb1 * (k * j * wg);
        e2 += nb2.transpose() * nb2 * (k * j * wg);
        m0 += nalgebra::Matrix2::from_fn(|r, c| n[r] * n[c]) * (rc * j * wg);
    }
    Ok([e0, e1, e2, m0])
}

/// Boundary coefficient matrices of one polygon subdomain. E0 is SPD, E2 is
/// PSD with E2*ones = 0, M0 scales with rho*c (zero matrix when rho*c = 0).
#[derive(Clone, Debug)]
pub struct CoefficientMatrices {
    pub e0: DMatrix<f64>,
    pub e1: DMatrix<f64>,
    pub e2: DMatrix<f64>,
    pub m0: DMatrix<f64>,
}

pub fn coefficient_matrices(
    cell: &PolygonCell,
    center: Point2D,
    mesh: &Mesh,
    material: &Material,
    gauss_order: usize,
) -> Result<CoefficientMatrices> {
    if gauss_order < 2 {
        return Err(Error::config("gauss_order must be >= 2"));
    }
    let n = cell.vertex_ids.len();
    let pts = mesh.cell_polygon(cell);
    let mut e0 = DMatrix::zeros(n, n);
    let mut e1 = DMatrix::zeros(n, n);
    let mut e2 = DMatrix::zeros(n, n);
    let mut m0 = DMatrix::zeros(n, n);
    for e in 0..n {
        let a = pts[e];
        let b = pts[(e + 1) % n];
        let edge = EdgeGeometry::new(a.x - center.x, a.y - center.y, b.x - center.x, b.y - center.y)?;
        let blocks = edge_coefficient_blocks(&edge, material, gauss_order)?;
        let idx = [e, (e + 1) % n];
        for (mat, block) in [&mut e0, &mut e1, &mut e2, &mut m0].into_iter().zip(&blocks) {
            for r in 0..2 {
                for c in 0..2 {
                    mat[(idx[r], idx[c])] += block[(r, c)];
                }
            }
        }
    }
    if e0.clone().cholesky().is_none() {
        return Err(Error::DegenerateEdge {
            cell_id: cell.id,
            detail: "E0 not positive definite (inverted geometry)".into(),
        });
    }
    Ok(CoefficientMatrices { e0, e1, e2, m0 })
}

/// The 2n x 2n Hamiltonian whose eigenstructure carries the radial solution:
/// Zp = [[-E0^-1 E1^T, E0^-1], [E2 - E1 E0^-1 E1^T, E1 E0^-1]].
pub fn build_hamiltonian(cm: &CoefficientMatrices) -> Result<DMatrix<f64>> {
    let n = cm.e0.nrows();
    let cond = condition_estimate(&cm.e0);
    if cond > 1e12 {
        return Err(Error::IllConditioned {
            cell_id: usize::MAX,
            what: "E0",
            cond,
        });
    }
    let e0_inv = cm.e0.clone().try_inverse().ok_or(Error::IllConditioned {
        cell_id: usize::MAX,
        what: "E0",
        cond: f64::INFINITY,
    })?;
    let mut zp = DMatrix::zeros(2 * n, 2 * n);
    let tl = -&e0_inv * cm.e1.transpose();
    let bl = &cm.e2 - &cm.e1 * &e0_inv * cm.e1.transpose();
    let br = &cm.e1 * &e0_inv;
    zp.view_mut((0, 0), (n, n)).copy_from(&tl);
    zp.view_mut((0, n), (n, n)).copy_from(&e0_inv);
    zp.view_mut((n, 0), (n, n)).copy_from(&bl);
    zp.view_mut((n, n), (n, n)).copy_from(&br);
    Ok(zp)
}

fn condition_estimate(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Radial behavior of one modal block. `lambda` values are the non-negative
/// decay exponents: the radial factor of a mode is xi^lambda (constant mode
/// has lambda = 0), so every selected mode stays bounded at the center.
#[derive(Clone, Copy, Debug)]
pub enum ModeKind {
    Real { lambda: f64 },
    /// Conjugate pair lambda = re +/- i*im occupying two real columns.
    ComplexPair { re: f64, im: f64 },
}

#[derive(Clone, Copy, Debug)]
pub struct Mode {
    /// First column of this block in psi11/psi21.
    pub col: usize,
    pub kind: ModeKind,
}

/// Bounded-domain modal family: temperature block psi11, flux block psi21,
/// realified block structure, and a condition estimate of psi11.
#[derive(Clone, Debug)]
pub struct EigenSplit {
    pub psi11: DMatrix<f64>,
    pub psi21: DMatrix<f64>,
    pub modes: Vec<Mode>,
    pub cond_psi11: f64,
}

impl EigenSplit {
    /// Selected eigenvalues in the decaying-exponent sign convention
    /// (re <= 0), one entry per column.
    pub fn lambdas(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for mode in &self.modes {
            match mode.kind {
                ModeKind::Real { lambda } => out.push((-lambda, 0.0)),
                ModeKind::ComplexPair { re, im } => {
                    out.push((-re, im));
                    out.push((-re, -im));
                }
            }
        }
        out
    }
}

/// Relative half-width of the zero eigenvalue cluster. The zero eigenvalue
/// of Zp is a defective pair whose numerical split can reach the square
/// root of machine epsilon times the spectral scale, so the window is much
/// wider than that split yet far below the smallest physical exponent.
const ZERO_WINDOW_REL: f64 = 1e-6;

/// Splits the spectrum of Zp into the bounded-domain modal family.
///
/// The nonzero spectrum comes in +/- pairs; the n-1 modes whose radial
/// factor decays toward the center are taken from the eigenvectors of the
/// positive-real-part half, and the constant mode (temperature block
/// proportional to ones, zero flux block) is appended analytically rather
/// than extracted from the defective zero cluster. Conjugate pairs are
/// realified into (real, imaginary) column pairs so everything downstream
/// stays in real arithmetic.
pub fn eigen_split(zp: &DMatrix<f64>) -> Result<EigenSplit> {
    let n2 = zp.nrows();
    let n = n2 / 2;
    let ed = eigen_decompose(zp)?;

    let zp_scale = zp.norm();
    let residual = ed.max_residual(zp);
    // Negated form so a NaN residual fails the gate.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(residual <= 1e-7 * zp_scale.max(1e-300)) {
        return Err(Error::EigenFailure {
            cell_id: usize::MAX,
            detail: format!("eigenpair residual {residual:.3e} vs scale {zp_scale:.3e}"),
        });
    }

    let moduli: Vec<f64> = (0..n2).map(|k| ed.re[k].hypot(ed.im[k])).collect();
    let max_mod = moduli.iter().copied().fold(0.0_f64, f64::max);
    let window = ZERO_WINDOW_REL * max_mod;

    let mut psi11 = DMatrix::zeros(n, n);
    let mut psi21 = DMatrix::zeros(n, n);
    let mut modes = Vec::new();
    let mut col = 0usize;
    let mut zero_cluster = 0usize;

    let mut k = 0;
    while k < n2 {
        if ed.im[k] == 0.0 {
            if moduli[k] <= window {
                zero_cluster += 1;
            } else if ed.re[k] > window {
                if col >= n {
                    return Err(selection_error(&ed, n));
                }
                let v = ed.vectors.column(k);
                let norm = v.norm();
                psi11.column_mut(col).copy_from(&(v.rows(0, n) / norm));
                psi21.column_mut(col).copy_from(&(v.rows(n, n) / norm));
                modes.push(Mode {
                    col,
                    kind: ModeKind::Real { lambda: ed.re[k] },
                });
                col += 1;
            }
            k += 1;
        } else {
            // Conjugate pair occupies columns k (real part) and k+1 (imag).
            if moduli[k] <= window {
                zero_cluster += 2;
            } else if ed.re[k] > window {
                if col + 1 >= n {
                    return Err(selection_error(&ed, n));
                }
                let vr = ed.vectors.column(k);
                let vi = ed.vectors.column(k + 1);
                let norm = (vr.norm_squared() + vi.norm_squared()).sqrt();
                psi11.column_mut(col).copy_from(&(vr.rows(0, n) / norm));
                psi21.column_mut(col).copy_from(&(vr.rows(n, n) / norm));
                psi11
                    .column_mut(col + 1)
                    .copy_from(&(vi.rows(0, n) / norm));
                psi21
                    .column_mut(col + 1)
                    .copy_from(&(vi.rows(n, n) / norm));
                modes.push(Mode {
                    col,
                    kind: ModeKind::ComplexPair {
                        re: ed.re[k],
                        im: ed.im[k].abs(),
                    },
                });
                col += 2;
            }
            k += 2;
        }
    }

    if col != n - 1 || zero_cluster != 2 {
        return Err(selection_error(&ed, n));
    }

    // Analytic constant mode: uniform temperature carries no flux.
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    for r in 0..n {
        psi11[(r, n - 1)] = inv_sqrt_n;
        psi21[(r, n - 1)] = 0.0;
    }
    modes.push(Mode {
        col: n - 1,
        kind: ModeKind::Real { lambda: 0.0 },
    });

    let cond_psi11 = condition_estimate(&psi11);
    if cond_psi11 > 1e10 {
        return Err(Error::IllConditioned {
            cell_id: usize::MAX,
            what: "psi11",
            cond: cond_psi11,
        });
    }

    Ok(EigenSplit {
        psi11,
        psi21,
        modes,
        cond_psi11,
    })
}

fn selection_error(ed: &crate::linalg::EigenDecomposition, n: usize) -> Error {
    let eigs: Vec<String> = ed
        .re
        .iter()
        .zip(&ed.im)
        .map(|(r, i)| format!("{r:.3e}{i:+.3e}i"))
        .collect();
    Error::EigenFailure {
        cell_id: usize::MAX,
        detail: format!(
            "expected {} decaying modes plus a double zero, got spectrum [{}]",
            n - 1,
            eigs.join(", ")
        ),
    }
}

/// Steady stiffness K = psi21 psi11^-1, symmetrized after an asymmetry gate.
pub fn steady_stiffness(es: &EigenSplit) -> Result<DMatrix<f64>> {
    let lu = es.psi11.transpose().lu();
    let kt = lu
        .solve(&es.psi21.transpose())
        .ok_or_else(|| Error::Singular {
            detail: "psi11 singular in stiffness solve".into(),
        })?;
    let k = kt.transpose();
    let asym = (&k - k.transpose()).norm();
    let scale = k.norm().max(1e-300);
    if asym > 1e-6 * scale {
        return Err(Error::EigenFailure {
            cell_id: usize::MAX,
            detail: format!("stiffness asymmetry {:.3e} relative", asym / scale),
        });
    }
    Ok(0.5 * (&k + k.transpose()))
}

/// Mass matrix from the modal Lyapunov equation
/// (I + Lb) m + m (I + Lb)^T = psi11^T M0 psi11, M = psi11^-T m psi11^-1,
/// solved block-entrywise (denominators 2 + lb_i + lb_j never vanish since
/// all decay exponents are non-negative).
pub fn mass_matrix(es: &EigenSplit, m0: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = es.psi11.nrows();
    if m0.norm() == 0.0 {
        return Ok(DMatrix::zeros(n, n)); // steady-only material (rho*c = 0)
    }
    let rhs = es.psi11.transpose() * m0 * &es.psi11;
    let mut m = DMatrix::zeros(n, n);

    for bi in &es.modes {
        for bj in &es.modes {
            match (bi.kind, bj.kind) {
                (ModeKind::Real { lambda: li }, ModeKind::Real { lambda: lj }) => {
                    let den = 2.0 + li + lj;
                    if den.abs() < 1e-12 {
                        return Err(resonant(den));
                    }
                    m[(bi.col, bj.col)] = rhs[(bi.col, bj.col)] / den;
                }
                (ModeKind::Real { lambda: li }, ModeKind::ComplexPair { re, im }) => {
                    // Row slice u solves u * [(2+li+re) I + [[0,-im],[im,0]]] = r.
                    let a2 = Matrix2::new(2.0 + li + re, -im, im, 2.0 + li + re);
                    let r = Vector2::new(rhs[(bi.col, bj.col)], rhs[(bi.col, bj.col + 1)]);
                    let u = solve2(a2.transpose(), r)?;
                    m[(bi.col, bj.col)] = u[0];
                    m[(bi.col, bj.col + 1)] = u[1];
                }
                (ModeKind::ComplexPair { re, im }, ModeKind::Real { lambda: lj }) => {
                    let c2 = Matrix2::new(2.0 + lj + re, im, -im, 2.0 + lj + re);
                    let r = Vector2::new(rhs[(bi.col, bj.col)], rhs[(bi.col + 1, bj.col)]);
                    let v = solve2(c2, r)?;
                    m[(bi.col, bj.col)] = v[0];
                    m[(bi.col + 1, bj.col)] = v[1];
                }
                (
                    ModeKind::ComplexPair { re: ai, im: bi_im },
                    ModeKind::ComplexPair { re: aj, im: bj_im },
                ) => {
                    // 2x2 block X solves (I+Bi) X + X (I+Bj)^T = R,
                    // vectorized column-major into a 4x4 system.
                    let ibi = Matrix2::new(1.0 + ai, bi_im, -bi_im, 1.0 + ai);
                    let ibj = Matrix2::new(1.0 + aj, bj_im, -bj_im, 1.0 + aj);
                    let mut a4 = Matrix4::zeros();
                    // kron(I2, I+Bi) + kron(I+Bj, I2)
                    for p in 0..2 {
                        for q in 0..2 {
                            for r in 0..2 {
                                for c in 0..2 {
                                    let row = p * 2 + r;
                                    let colx = q * 2 + c;
                                    let mut val = 0.0;
                                    if p == q {
                                        val += ibi[(r, c)];
                                    }
                                    if r == c {
                                        val += ibj[(p, q)];
                                    }
                                    a4[(row, colx)] += val;
                                }
                            }
                        }
                    }
                    let rvec = Vector4::new(
                        rhs[(bi.col, bj.col)],
                        rhs[(bi.col + 1, bj.col)],
                        rhs[(bi.col, bj.col + 1)],
                        rhs[(bi.col + 1, bj.col + 1)],
                    );
                    let x = a4.lu().solve(&rvec).ok_or_else(|| resonant(0.0))?;
                    m[(bi.col, bj.col)] = x[0];
                    m[(bi.col + 1, bj.col)] = x[1];
                    m[(bi.col, bj.col + 1)] = x[2];
                    m[(bi.col + 1, bj.col + 1)] = x[3];
                }
            }
        }
    }

    // M = psi11^-T m psi11^-1 via two transposed solves.
    let lu = es.psi11.transpose().lu();
    let x = lu.solve(&m).ok_or_else(|| Error::Singular {
        detail: "psi11 singular in mass solve".into(),
    })?;
    let mt = lu.solve(&x.transpose()).ok_or_else(|| Error::Singular {
        detail: "psi11 singular in mass solve".into(),
    })?;
    let mass = mt.transpose();

    let asym = (&mass - mass.transpose()).norm();
    let scale = mass.norm().max(1e-300);
    if asym > 1e-6 * scale {
        return Err(Error::EigenFailure {
            cell_id: usize::MAX,
            detail: format!("mass asymmetry {:.3e} relative", asym / scale),
        });
    }
    let mass = 0.5 * (&mass + mass.transpose());
    let min_eig = mass
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .min();
    if min_eig <= 0.0 {
        return Err(Error::EigenFailure {
            cell_id: usize::MAX,
            detail: format!("mass matrix not positive definite (min eig {min_eig:.3e})"),
        });
    }
    Ok(mass)
}

fn resonant(den: f64) -> Error {
    Error::EigenFailure {
        cell_id: usize::MAX,
        detail: format!("resonant Lyapunov denominator {den:.3e}"),
    }
}

fn solve2(a: Matrix2<f64>, r: Vector2<f64>) -> Result<Vector2<f64>> {
    let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
    if det.abs() < 1e-12 {
        return Err(resonant(det));
    }
    Ok(Vector2::new(
        (r[0] * a[(1, 1)] - r[1] * a[(0, 1)]) / det,
        (r[1] * a[(0, 0)] - r[0] * a[(1, 0)]) / det,
    ))
}

/// Per-element steady stiffness and mass with the global node map.
#[derive(Clone, Debug)]
pub struct ElementMatrices {
    pub k: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub node_ids: Vec<usize>,
}

/// Everything needed to assemble and to evaluate the semi-analytic interior
/// field of one cell.
#[derive(Clone, Debug)]
pub struct ElementData {
    pub cell_id: usize,
    pub matrices: ElementMatrices,
    pub split: EigenSplit,
    pub center: Point2D,
    /// Vertex positions in cell order; edge e runs polygon[e] ->
    /// polygon[(e+1) % n].
    pub polygon: Vec<Point2D>,
    pub material: Material,
    pub area: f64,
}

/// Full pipeline for one cell: scaling center, coefficient matrices,
/// Hamiltonian, eigen-split, stiffness, mass. Errors carry the cell id.
pub fn element_matrices(
    cell: &PolygonCell,
    mesh: &Mesh,
    material: &Material,
    gauss_order: usize,
) -> Result<ElementData> {
    let build = || -> Result<ElementData> {
        let center = compute_scaling_center(cell, mesh)?;
        let cm = coefficient_matrices(cell, center.position, mesh, material, gauss_order)?;
        let zp = build_hamiltonian(&cm)?;
        let split = eigen_split(&zp)?;
        let k = steady_stiffness(&split)?;
        let m = mass_matrix(&split, &cm.m0)?;
        let polygon = mesh.cell_polygon(cell);
        let area = signed_area(&polygon);
        Ok(ElementData {
            cell_id: cell.id,
            matrices: ElementMatrices {
                k,
                m,
                node_ids: cell.vertex_ids.clone(),
            },
            split,
            center: center.position,
            polygon,
            material: *material,
            area,
        })
    };
    build().map_err(|e| tag_cell(e, cell.id))
}

/// Builds every cell's element data in parallel. `cell.material_id` indexes
/// into `materials`.
pub fn compute_all_elements(
    mesh: &Mesh,
    materials: &[Material],
    gauss_order: usize,
) -> Result<Vec<ElementData>> {
    use rayon::prelude::*;
    mesh.cells
        .par_iter()
        .map(|cell| {
            let mat = materials.get(cell.material_id).ok_or_else(|| {
                Error::config(format!(
                    "cell {} references material {} but only {} are defined",
                    cell.id,
                    cell.material_id,
                    materials.len()
                ))
            })?;
            element_matrices(cell, mesh, mat, gauss_order)
        })
        .collect()
}

fn tag_cell(err: Error, cell_id: usize) -> Error {
    match err {
        Error::DegenerateEdge { detail, .. } => Error::DegenerateEdge { cell_id, detail },
        Error::IllConditioned { what, cond, .. } => Error::IllConditioned {
            cell_id,
            what,
            cond,
        },
        Error::EigenFailure { detail, .. } => Error::EigenFailure { cell_id, detail },
        other => other,
    }
}

impl ElementData {
    pub fn n(&self) -> usize {
        self.polygon.len()
    }

    /// Semi-analytic temperature at scaled-boundary coordinates (xi, eta) on
    /// `edge`: the modal expansion psi11 diag(xi^lambda) psi11^-1 T
    /// interpolated along the edge. xi=1 reproduces the boundary
    /// interpolation; at xi=0 only the constant mode survives.
    pub fn interior_temperature(
        &self,
        nodal_t: &DVector<f64>,
        xi: f64,
        eta: f64,
        edge: usize,
    ) -> Result<f64> {
        if !(0.0..=1.0).contains(&xi) {
            return Err(Error::config(format!("xi = {xi} outside [0, 1]")));
        }
        let n = self.n();
        let c = self
            .split
            .psi11
            .clone()
            .lu()
            .solve(nodal_t)
            .ok_or_else(|| Error::Singular {
                detail: "psi11 singular in interior evaluation".into(),
            })?;
        let scaled = self.scale_modal(&c, xi);
        let u = &self.split.psi11 * scaled;
        let (nn, _) = shape_functions(eta);
        Ok(nn[0] * u[edge] + nn[1] * u[(edge + 1) % n])
    }

    /// Applies diag(xi^Lambda) blockwise to modal coefficients.
    fn scale_modal(&self, c: &DVector<f64>, xi: f64) -> DVector<f64> {
        let mut out = c.clone();
        for mode in &self.split.modes {
            match mode.kind {
                ModeKind::Real { lambda } => {
                    out[mode.col] *= xi.powf(lambda);
                }
                ModeKind::ComplexPair { re, im } => {
                    // xi^(re +/- i im) realified: radial decay xi^re times a
                    // rotation by im*ln(xi) in the block plane.
                    let (f, cs, sn) = if xi <= 0.0 {
                        (0.0, 1.0, 0.0)
                    } else {
                        let ang = im * xi.ln();
                        (xi.powf(re), ang.cos(), ang.sin())
                    };
                    let (a, b) = (c[mode.col], c[mode.col + 1]);
                    out[mode.col] = f * (cs * a + sn * b);
                    out[mode.col + 1] = f * (-sn * a + cs * b);
                }
            }
        }
        out
    }

    /// Maps a physical point to (xi, eta, edge) if it lies in this cell.
    pub fn locate(&self, p: Point2D) -> Option<(f64, f64, usize)> {
        let n = self.n();
        let tol = 1e-9;
        let rx = p.x - self.center.x;
        let ry = p.y - self.center.y;
        for e in 0..n {
            let a = self.polygon[e];
            let b = self.polygon[(e + 1) % n];
            let ux = a.x - self.center.x;
            let uy = a.y - self.center.y;
            let wx = b.x - self.center.x;
            let wy = b.y - self.center.y;
            let det = ux * wy - wx * uy; // positive by star-convexity
            let alpha = (rx * wy - wx * ry) / det;
            let beta = (ux * ry - rx * uy) / det;
            if alpha >= -tol && beta >= -tol && alpha + beta <= 1.0 + tol {
                let xi = (alpha + beta).clamp(0.0, 1.0);
                let eta = if xi > 1e-300 {
                    ((beta - alpha) / (alpha + beta)).clamp(-1.0, 1.0)
                } else {
                    0.0
                };
                return Some((xi, eta, e));
            }
        }
        None
    }

    /// Interior temperature at a physical point, if the point is inside.
    pub fn temperature_at(&self, p: Point2D, nodal_t: &DVector<f64>) -> Option<f64> {
        let (xi, eta, edge) = self.locate(p)?;
        self.interior_temperature(nodal_t, xi, eta, edge).ok()
    }
}
