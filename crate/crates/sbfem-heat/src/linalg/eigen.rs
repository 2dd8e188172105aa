//! General real eigendecomposition with eigenvectors.
//!
//! Classic dense pipeline: Parlett-Reinsch diagonal balancing, Householder
//! reduction to upper Hessenberg form, Francis implicit double-shift QR to
//! real Schur form, then back-substitution for the eigenvectors of the
//! quasi-triangular matrix (the EISPACK hqr2 lineage). Complex conjugate
//! pairs are returned as (real, imaginary) column pairs so the caller can
//! stay in real arithmetic.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const EPS: f64 = f64::EPSILON;

#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    /// Eigenvalue real parts, conjugate pairs adjacent (positive imag first).
    pub re: Vec<f64>,
    /// Eigenvalue imaginary parts.
    pub im: Vec<f64>,
    /// Eigenvector matrix. Column k is the eigenvector for a real
    /// eigenvalue; for a conjugate pair at (k, k+1) the eigenvectors are
    /// col_k +/- i col_{k+1}.
    pub vectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    /// Max over eigenpairs of ||A v - lambda v|| / ||v||, complex pairs
    /// evaluated in complex arithmetic. Diagnostic for tests and gates.
    pub fn max_residual(&self, a: &DMatrix<f64>) -> f64 {
        let n = self.len();
        let mut worst = 0.0_f64;
        let mut k = 0;
        while k < n {
            if self.im[k] == 0.0 {
                let v = self.vectors.column(k);
                let av = a * v;
                let r = (&av - self.re[k] * v).norm() / v.norm().max(1e-300);
                worst = worst.max(r);
                k += 1;
            } else {
                let vr = self.vectors.column(k).into_owned();
                let vi = self.vectors.column(k + 1).into_owned();
                let (lr, li) = (self.re[k], self.im[k]);
                // A(vr + i vi) - (lr + i li)(vr + i vi), split into parts.
                let rr = a * &vr - lr * &vr + li * &vi;
                let ri = a * &vi - lr * &vi - li * &vr;
                let vn = (vr.norm_squared() + vi.norm_squared()).sqrt().max(1e-300);
                let r = (rr.norm_squared() + ri.norm_squared()).sqrt() / vn;
                worst = worst.max(r);
                k += 2;
            }
        }
        worst
    }
}

/// Eigenvalues and eigenvectors of a general real square matrix.
/// Fails only if the QR iteration exceeds its sweep budget.
pub fn eigen_decompose(a: &DMatrix<f64>) -> Result<EigenDecomposition> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix must be square");
    if n == 0 {
        return Ok(EigenDecomposition {
            re: vec![],
            im: vec![],
            vectors: DMatrix::zeros(0, 0),
        });
    }

    let mut h = a.clone();
    let scale = balance(&mut h);
    let mut v = DMatrix::<f64>::identity(n, n);
    orthes(&mut h, &mut v);
    let (re, im) = hqr2(&mut h, &mut v)?;

    // Undo balancing on the eigenvector rows.
    for i in 0..n {
        for j in 0..n {
            v[(i, j)] *= scale[i];
        }
    }
    Ok(EigenDecomposition { re, im, vectors: v })
}

/// Parlett-Reinsch balancing (scaling only, radix 2): equalizes row and
/// column 1-norms by a diagonal similarity. Returns the diagonal.
fn balance(h: &mut DMatrix<f64>) -> Vec<f64> {
    let n = h.nrows();
    let mut scale = vec![1.0; n];
    let radix: f64 = 2.0;
    let radix2 = radix * radix;
    loop {
        let mut converged = true;
        for i in 0..n {
            let mut c: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| h[(j, i)].abs())
                .sum();
            let r: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| h[(i, j)].abs())
                .sum();
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / radix;
            while c < g {
                f *= radix;
                c *= radix2;
            }
            g = r * radix;
            while c >= g {
                f /= radix;
                c /= radix2;
            }
            if (c + r) / f < 0.95 * s {
                converged = false;
                scale[i] *= f;
                for j in 0..n {
                    h[(i, j)] /= f;
                }
                for j in 0..n {
                    h[(j, i)] *= f;
                }
            }
        }
        if converged {
            return scale;
        }
    }
}

/// Householder reduction to upper Hessenberg form, accumulating the
/// orthogonal transform into `v`.
fn orthes(h: &mut DMatrix<f64>, v: &mut DMatrix<f64>) {
    let n = h.nrows();
    if n < 3 {
        return;
    }
    let (low, high) = (0usize, n - 1);
    let mut ort = vec![0.0; n];

    for m in (low + 1)..high {
        let scale: f64 = (m..=high).map(|i| h[(i, m - 1)].abs()).sum();
        if scale == 0.0 {
            continue;
        }
        let mut hh = 0.0;
        for i in (m..=high).rev() {
            ort[i] = h[(i, m - 1)] / scale;
            hh += ort[i] * ort[i];
        }
        let mut g = hh.sqrt();
        if ort[m] > 0.0 {
            g = -g;
        }
        hh -= ort[m] * g;
        ort[m] -= g;

        // Apply I - (u u^T / h) on both sides.
        for j in m..n {
            let mut f = 0.0;
            for i in (m..=high).rev() {
                f += ort[i] * h[(i, j)];
            }
            f /= hh;
            for i in m..=high {
                h[(i, j)] -= f * ort[i];
            }
        }
        for i in 0..=high {
            let mut f = 0.0;
            for j in (m..=high).rev() {
                f += ort[j] * h[(i, j)];
            }
            f /= hh;
            for j in m..=high {
                h[(i, j)] -= f * ort[j];
            }
        }
        ort[m] *= scale;
        h[(m, m - 1)] = scale * g;
    }

    for m in ((low + 1)..high).rev() {
        if h[(m, m - 1)] == 0.0 {
            continue;
        }
        for i in (m + 1)..=high {
            ort[i] = h[(i, m - 1)];
        }
        for j in m..=high {
            let mut g = 0.0;
            for i in m..=high {
                g += ort[i] * v[(i, j)];
            }
            // Double division avoids possible underflow.
            g = (g / ort[m]) / h[(m, m - 1)];
            for i in m..=high {
                v[(i, j)] += g * ort[i];
            }
        }
    }
}

fn cdiv(xr: f64, xi: f64, yr: f64, yi: f64) -> (f64, f64) {
    if yr.abs() > yi.abs() {
        let r = yi / yr;
        let d = yr + r * yi;
        ((xr + r * xi) / d, (xi - r * xr) / d)
    } else {
        let r = yr / yi;
        let d = yi + r * yr;
        ((r * xr + xi) / d, (r * xi - xr) / d)
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix, followed by
/// eigenvector back-substitution. `h` is destroyed; `v` accumulates the
/// transformations and finishes as the eigenvector matrix.
#[allow(clippy::needless_range_loop)]
fn hqr2(h: &mut DMatrix<f64>, v: &mut DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let nn = h.nrows();
    let mut d = vec![0.0_f64; nn];
    let mut e = vec![0.0_f64; nn];
    let (low, high) = (0usize, nn - 1);

    let mut norm: f64 = 0.0;
    for i in 0..nn {
        for j in i.saturating_sub(1)..nn {
            norm += h[(i, j)].abs();
        }
    }
    if norm == 0.0 {
        return Ok((d, e)); // zero matrix: vectors stay identity
    }

    let mut n = high as isize;
    let mut exshift = 0.0;
    let mut iter = 0;
    let mut total_sweeps = 0usize;
    let sweep_budget = 40 * nn.max(8);

    let (mut p, mut q): (f64, f64);
    let (mut r, mut s, mut z) = (0.0f64, 0.0f64, 0.0f64);
    let (mut x, mut y, mut w);

    while n >= low as isize {
        let un = n as usize;
        // Look for a single small subdiagonal element.
        let mut l = un;
        while l > low {
            s = h[(l - 1, l - 1)].abs() + h[(l, l)].abs();
            if s == 0.0 {
                s = norm;
            }
            if h[(l, l - 1)].abs() < EPS * s {
                break;
            }
            l -= 1;
        }

        if l == un {
            // One root found.
            h[(un, un)] += exshift;
            d[un] = h[(un, un)];
            e[un] = 0.0;
            n -= 1;
            iter = 0;
        } else if l == un - 1 {
            // Two roots found.
            w = h[(un, un - 1)] * h[(un - 1, un)];
            p = (h[(un - 1, un - 1)] - h[(un, un)]) / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            h[(un, un)] += exshift;
            h[(un - 1, un - 1)] += exshift;
            x = h[(un, un)];
            if q >= 0.0 {
                // Real pair.
                z = if p >= 0.0 { p + z } else { p - z };
                d[un - 1] = x + z;
                d[un] = d[un - 1];
                if z != 0.0 {
                    d[un] = x - w / z;
                }
                e[un - 1] = 0.0;
                e[un] = 0.0;
                x = h[(un, un - 1)];
                s = x.abs() + z.abs();
                p = x / s;
                q = z / s;
                r = (p * p + q * q).sqrt();
                p /= r;
                q /= r;
                for j in (un - 1)..nn {
                    z = h[(un - 1, j)];
                    h[(un - 1, j)] = q * z + p * h[(un, j)];
                    h[(un, j)] = q * h[(un, j)] - p * z;
                }
                for i in 0..=un {
                    z = h[(i, un - 1)];
                    h[(i, un - 1)] = q * z + p * h[(i, un)];
                    h[(i, un)] = q * h[(i, un)] - p * z;
                }
                for i in low..=high {
                    z = v[(i, un - 1)];
                    v[(i, un - 1)] = q * z + p * v[(i, un)];
                    v[(i, un)] = q * v[(i, un)] - p * z;
                }
            } else {
                // Complex pair.
                d[un - 1] = x + p;
                d[un] = x + p;
                e[un - 1] = z;
                e[un] = -z;
            }
            n -= 2;
            iter = 0;
        } else {
            // No convergence yet; perform one QR sweep.
            x = h[(un, un)];
            y = h[(un - 1, un - 1)];
            w = h[(un, un - 1)] * h[(un - 1, un)];

            if iter == 10 || iter == 20 {
                // Exceptional shift.
                exshift += x;
                for i in low..=un {
                    h[(i, i)] -= x;
                }
                s = h[(un, un - 1)].abs() + h[(un - 1, un - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            iter += 1;
            total_sweeps += 1;
            if total_sweeps > sweep_budget {
                return Err(Error::EigenFailure {
                    cell_id: usize::MAX,
                    detail: format!("QR iteration exceeded {sweep_budget} sweeps"),
                });
            }

            // Look for two consecutive small subdiagonal elements.
            let mut m = un - 2;
            loop {
                z = h[(m, m)];
                r = x - z;
                s = y - z;
                p = (r * s - w) / h[(m + 1, m)] + h[(m, m + 1)];
                q = h[(m + 1, m + 1)] - z - r - s;
                r = h[(m + 2, m + 1)];
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                if h[(m, m - 1)].abs() * (q.abs() + r.abs())
                    < EPS
                        * (p.abs()
                            * (h[(m - 1, m - 1)].abs() + z.abs() + h[(m + 1, m + 1)].abs()))
                {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=un {
                h[(i, i - 2)] = 0.0;
                if i > m + 2 {
                    h[(i, i - 3)] = 0.0;
                }
            }

            // Double QR step on rows l..=n, columns m..=n.
            for k in m..un {
                let notlast = k != un - 1;
                if k != m {
                    p = h[(k, k - 1)];
                    q = h[(k + 1, k - 1)];
                    r = if notlast { h[(k + 2, k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s == 0.0 {
                    continue;
                }
                if k != m {
                    h[(k, k - 1)] = -s * x;
                } else if l != m {
                    h[(k, k - 1)] = -h[(k, k - 1)];
                }
                p += s;
                x = p / s;
                y = q / s;
                z = r / s;
                q /= p;
                r /= p;

                for j in k..nn {
                    p = h[(k, j)] + q * h[(k + 1, j)];
                    if notlast {
                        p += r * h[(k + 2, j)];
                        h[(k + 2, j)] -= p * z;
                    }
                    h[(k, j)] -= p * x;
                    h[(k + 1, j)] -= p * y;
                }
                for i in 0..=un.min(k + 3) {
                    p = x * h[(i, k)] + y * h[(i, k + 1)];
                    if notlast {
                        p += z * h[(i, k + 2)];
                        h[(i, k + 2)] -= p * r;
                    }
                    h[(i, k)] -= p;
                    h[(i, k + 1)] -= p * q;
                }
                for i in low..=high {
                    p = x * v[(i, k)] + y * v[(i, k + 1)];
                    if notlast {
                        p += z * v[(i, k + 2)];
                        v[(i, k + 2)] -= p * r;
                    }
                    v[(i, k)] -= p;
                    v[(i, k + 1)] -= p * q;
                }
            }
        }
    }

    // Back-substitution: eigenvectors of the quasi-triangular form.
    for ni in (0..nn).rev() {
        p = d[ni];
        q = e[ni];
        if q == 0.0 {
            // Real eigenvector.
            let mut l = ni;
            h[(ni, ni)] = 1.0;
            if ni == 0 {
                continue;
            }
            for i in (0..ni).rev() {
                w = h[(i, i)] - p;
                r = 0.0;
                for j in l..=ni {
                    r += h[(i, j)] * h[(j, ni)];
                }
                if e[i] < 0.0 {
                    z = w;
                    s = r;
                } else {
                    l = i;
                    if e[i] == 0.0 {
                        h[(i, ni)] = if w != 0.0 { -r / w } else { -r / (EPS * norm) };
                    } else {
                        // Solve the real 2x2 block row pair.
                        x = h[(i, i + 1)];
                        y = h[(i + 1, i)];
                        let qq = (d[i] - p) * (d[i] - p) + e[i] * e[i];
                        let t = (x * s - z * r) / qq;
                        h[(i, ni)] = t;
                        h[(i + 1, ni)] = if x.abs() > z.abs() {
                            (-r - w * t) / x
                        } else {
                            (-s - y * t) / z
                        };
                    }
                    // Overflow control.
                    let t = h[(i, ni)].abs();
                    if (EPS * t) * t > 1.0 {
                        for j in i..=ni {
                            h[(j, ni)] /= t;
                        }
                    }
                }
            }
        } else if q < 0.0 {
            // Complex eigenvector pair, stored in columns ni-1 and ni.
            let mut l = ni - 1;
            if h[(ni, ni - 1)].abs() > h[(ni - 1, ni)].abs() {
                h[(ni - 1, ni - 1)] = q / h[(ni, ni - 1)];
                h[(ni - 1, ni)] = -(h[(ni, ni)] - p) / h[(ni, ni - 1)];
            } else {
                let (cr, ci) = cdiv(0.0, -h[(ni - 1, ni)], h[(ni - 1, ni - 1)] - p, q);
                h[(ni - 1, ni - 1)] = cr;
                h[(ni - 1, ni)] = ci;
            }
            h[(ni, ni - 1)] = 0.0;
            h[(ni, ni)] = 1.0;
            if ni < 2 {
                continue;
            }
            for i in (0..=(ni - 2)).rev() {
                let mut ra = 0.0;
                let mut sa = 0.0;
                for j in l..=ni {
                    ra += h[(i, j)] * h[(j, ni - 1)];
                    sa += h[(i, j)] * h[(j, ni)];
                }
                w = h[(i, i)] - p;
                if e[i] < 0.0 {
                    z = w;
                    r = ra;
                    s = sa;
                } else {
                    l = i;
                    if e[i] == 0.0 {
                        let (cr, ci) = cdiv(-ra, -sa, w, q);
                        h[(i, ni - 1)] = cr;
                        h[(i, ni)] = ci;
                    } else {
                        x = h[(i, i + 1)];
                        y = h[(i + 1, i)];
                        let mut vr = (d[i] - p) * (d[i] - p) + e[i] * e[i] - q * q;
                        let vi = (d[i] - p) * 2.0 * q;
                        if vr == 0.0 && vi == 0.0 {
                            vr = EPS
                                * norm
                                * (w.abs() + q.abs() + x.abs() + y.abs() + z.abs());
                        }
                        let (cr, ci) = cdiv(
                            x * r - z * ra + q * sa,
                            x * s - z * sa - q * ra,
                            vr,
                            vi,
                        );
                        h[(i, ni - 1)] = cr;
                        h[(i, ni)] = ci;
                        if x.abs() > z.abs() + q.abs() {
                            h[(i + 1, ni - 1)] =
                                (-ra - w * h[(i, ni - 1)] + q * h[(i, ni)]) / x;
                            h[(i + 1, ni)] = (-sa - w * h[(i, ni)] - q * h[(i, ni - 1)]) / x;
                        } else {
                            let (cr, ci) =
                                cdiv(-r - y * h[(i, ni - 1)], -s - y * h[(i, ni)], z, q);
                            h[(i + 1, ni - 1)] = cr;
                            h[(i + 1, ni)] = ci;
                        }
                    }
                    // Overflow control.
                    let t = h[(i, ni - 1)].abs().max(h[(i, ni)].abs());
                    if (EPS * t) * t > 1.0 {
                        for j in i..=ni {
                            h[(j, ni - 1)] /= t;
                            h[(j, ni)] /= t;
                        }
                    }
                }
            }
        }
    }

    // Multiply back: columns of v become eigenvectors of the balanced matrix.
    for j in (low..nn).rev() {
        for i in low..=high {
            let mut zz = 0.0;
            for k in low..=j.min(high) {
                zz += v[(i, k)] * h[(k, j)];
            }
            v[(i, j)] = zz;
        }
    }

    Ok((d, e))
}
