//! Finite-volume stencils on the MAC layout.
//!
//! `grad` maps cells to interior faces, `div` maps faces to cells, and
//! `div(grad(.))` is the homogeneous-Neumann Laplacian. The vector Laplacian
//! uses antisymmetric ghosts for the wall-parallel component so that the
//! tangential velocity vanishes on the wall.

use crate::grid::{GridSpec, ScalarField, VectorField};

/// Face gradient of a cell field; boundary-normal faces stay zero.
pub fn grad(p: &ScalarField) -> VectorField {
    let g = *p.grid();
    let (hx, hy) = (g.hx(), g.hy());
    let mut w = VectorField::zeros(&g);
    {
        let u = w.u_mut();
        for j in 0..g.ny() {
            for i in 1..g.nx() {
                u[g.u_idx(i, j)] = (p.get(i, j) - p.get(i - 1, j)) / hx;
            }
        }
    }
    let v = w.v_mut();
    for j in 1..g.ny() {
        for i in 0..g.nx() {
            v[g.v_idx(i, j)] = (p.get(i, j) - p.get(i, j - 1)) / hy;
        }
    }
    w
}

/// Cell divergence of a face field.
pub fn div(w: &VectorField) -> ScalarField {
    let g = *w.grid();
    let (hx, hy) = (g.hx(), g.hy());
    let mut out = ScalarField::zeros(&g);
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            let d = (w.u_at(i + 1, j) - w.u_at(i, j)) / hx + (w.v_at(i, j + 1) - w.v_at(i, j)) / hy;
            out.set(i, j, d);
        }
    }
    out
}

/// Homogeneous-Neumann 5-point Laplacian.
pub fn laplacian(p: &ScalarField) -> ScalarField {
    div(&grad(p))
}

/// `div(m grad p)` with face weights `m` (same layout as a velocity field).
pub fn weighted_laplacian(p: &ScalarField, m: &VectorField) -> ScalarField {
    let mut flux = grad(p);
    for (f, w) in flux.u_mut().iter_mut().zip(m.u()) {
        *f *= w;
    }
    for (f, w) in flux.v_mut().iter_mut().zip(m.v()) {
        *f *= w;
    }
    div(&flux)
}

/// Arithmetic average of the two cells adjacent to each interior face.
pub fn face_average(p: &ScalarField) -> VectorField {
    let g = *p.grid();
    let mut w = VectorField::zeros(&g);
    {
        let u = w.u_mut();
        for j in 0..g.ny() {
            for i in 1..g.nx() {
                u[g.u_idx(i, j)] = 0.5 * (p.get(i, j) + p.get(i - 1, j));
            }
        }
    }
    let v = w.v_mut();
    for j in 1..g.ny() {
        for i in 0..g.nx() {
            v[g.v_idx(i, j)] = 0.5 * (p.get(i, j) + p.get(i, j - 1));
        }
    }
    w
}

/// Conservative central flux divergence `div(w q)` with face values of `q`
/// from `face_average`.
pub fn flux_divergence(w: &VectorField, q: &ScalarField) -> ScalarField {
    let mut flux = face_average(q);
    for (f, a) in flux.u_mut().iter_mut().zip(w.u()) {
        *f *= a;
    }
    for (f, a) in flux.v_mut().iter_mut().zip(w.v()) {
        *f *= a;
    }
    div(&flux)
}

/// Vector Laplacian with no-slip walls.
pub fn vector_laplacian(w: &VectorField) -> VectorField {
    let g = *w.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let (ihx2, ihy2) = (1.0 / (g.hx() * g.hx()), 1.0 / (g.hy() * g.hy()));
    let mut out = VectorField::zeros(&g);
    {
        let o = out.u_mut();
        for j in 0..ny {
            for i in 1..nx {
                let c = w.u_at(i, j);
                let dn = if j == 0 { -c } else { w.u_at(i, j - 1) };
                let up = if j == ny - 1 { -c } else { w.u_at(i, j + 1) };
                o[g.u_idx(i, j)] = (w.u_at(i + 1, j) - 2.0 * c + w.u_at(i - 1, j)) * ihx2 + (up - 2.0 * c + dn) * ihy2;
            }
        }
    }
    let o = out.v_mut();
    for j in 1..ny {
        for i in 0..nx {
            let c = w.v_at(i, j);
            let lf = if i == 0 { -c } else { w.v_at(i - 1, j) };
            let rt = if i == nx - 1 { -c } else { w.v_at(i + 1, j) };
            o[g.v_idx(i, j)] = (rt - 2.0 * c + lf) * ihx2 + (w.v_at(i, j + 1) - 2.0 * c + w.v_at(i, j - 1)) * ihy2;
        }
    }
    out
}

/// Face-centered capillary force `mu grad(phi)` with `mu` averaged to faces.
///
/// By the discrete product rule this equals `grad(mu phi) - avg(phi) grad(mu)`,
/// so after projection it coincides with `-phi grad(mu)`.
pub fn capillary_force(mu: &ScalarField, phi: &ScalarField) -> VectorField {
    let mut f = grad(phi);
    let m = face_average(mu);
    for (a, b) in f.u_mut().iter_mut().zip(m.u()) {
        *a *= b;
    }
    for (a, b) in f.v_mut().iter_mut().zip(m.v()) {
        *a *= b;
    }
    f
}

/// Interpolates a face field to cell centers (component averages).
pub fn to_centers(w: &VectorField) -> (ScalarField, ScalarField) {
    let g = *w.grid();
    let mut cu = ScalarField::zeros(&g);
    let mut cv = ScalarField::zeros(&g);
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            cu.set(i, j, 0.5 * (w.u_at(i, j) + w.u_at(i + 1, j)));
            cv.set(i, j, 0.5 * (w.v_at(i, j) + w.v_at(i, j + 1)));
        }
    }
    (cu, cv)
}

/// `2 * sum nu |D w|^2` with the symmetric gradient assembled on the MAC grid:
/// normal strains at cell centers, shear strain at cell corners.
pub fn strain_dissipation(w: &VectorField, nu_cell: &ScalarField) -> f64 {
    let g = *w.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let (hx, hy) = (g.hx(), g.hy());
    let mut s = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            let exx = (w.u_at(i + 1, j) - w.u_at(i, j)) / hx;
            let eyy = (w.v_at(i, j + 1) - w.v_at(i, j)) / hy;
            s += 2.0 * nu_cell.get(i, j) * (exx * exx + eyy * eyy);
        }
    }
    // corners (i, j) at x = i hx, y = j hy
    for j in 0..=ny {
        for i in 0..=nx {
            let du_dy = if i == 0 || i == nx {
                0.0
            } else if j == 0 {
                2.0 * w.u_at(i, 0) / hy
            } else if j == ny {
                -2.0 * w.u_at(i, ny - 1) / hy
            } else {
                (w.u_at(i, j) - w.u_at(i, j - 1)) / hy
            };
            let dv_dx = if j == 0 || j == ny {
                0.0
            } else if i == 0 {
                2.0 * w.v_at(0, j) / hx
            } else if i == nx {
                -2.0 * w.v_at(nx - 1, j) / hx
            } else {
                (w.v_at(i, j) - w.v_at(i - 1, j)) / hx
            };
            let shear = du_dy + dv_dx;
            let nu = corner_average(nu_cell, i, j);
            // wall corners carry half (edge) or quarter (domain corner) weight
            let wx = if i == 0 || i == nx { 0.5 } else { 1.0 };
            let wy = if j == 0 || j == ny { 0.5 } else { 1.0 };
            s += wx * wy * nu * shear * shear;
        }
    }
    s * g.cell_area()
}

/// Divergence of `2 nu D w` on faces, the variable-viscosity stress term.
pub fn stress_divergence(w: &VectorField, nu_cell: &ScalarField) -> VectorField {
    let g = *w.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let (hx, hy) = (g.hx(), g.hy());
    let mut txx = ScalarField::zeros(&g);
    let mut tyy = ScalarField::zeros(&g);
    for j in 0..ny {
        for i in 0..nx {
            let nu = nu_cell.get(i, j);
            txx.set(i, j, 2.0 * nu * (w.u_at(i + 1, j) - w.u_at(i, j)) / hx);
            tyy.set(i, j, 2.0 * nu * (w.v_at(i, j + 1) - w.v_at(i, j)) / hy);
        }
    }
    let mut txy = vec![0.0; (nx + 1) * (ny + 1)];
    let cidx = |i: usize, j: usize| j * (nx + 1) + i;
    for j in 0..=ny {
        for i in 0..=nx {
            let du_dy = if i == 0 || i == nx {
                0.0
            } else if j == 0 {
                2.0 * w.u_at(i, 0) / hy
            } else if j == ny {
                -2.0 * w.u_at(i, ny - 1) / hy
            } else {
                (w.u_at(i, j) - w.u_at(i, j - 1)) / hy
            };
            let dv_dx = if j == 0 || j == ny {
                0.0
            } else if i == 0 {
                2.0 * w.v_at(0, j) / hx
            } else if i == nx {
                -2.0 * w.v_at(nx - 1, j) / hx
            } else {
                (w.v_at(i, j) - w.v_at(i - 1, j)) / hx
            };
            txy[cidx(i, j)] = corner_average(nu_cell, i, j) * (du_dy + dv_dx);
        }
    }
    let mut out = VectorField::zeros(&g);
    {
        let o = out.u_mut();
        for j in 0..ny {
            for i in 1..nx {
                o[g.u_idx(i, j)] = (txx.get(i, j) - txx.get(i - 1, j)) / hx + (txy[cidx(i, j + 1)] - txy[cidx(i, j)]) / hy;
            }
        }
    }
    let o = out.v_mut();
    for j in 1..ny {
        for i in 0..nx {
            o[g.v_idx(i, j)] = (tyy.get(i, j) - tyy.get(i, j - 1)) / hy + (txy[cidx(i + 1, j)] - txy[cidx(i, j)]) / hx;
        }
    }
    out
}

/// Discrete curl `(d psi/dy, -d psi/dx)` of a node streamfunction given as
/// `(nx+1) x (ny+1)` row-major values. Divergence-free to round-off, and
/// no-slip when `psi` vanishes on the boundary nodes.
pub fn curl_nodes(g: &GridSpec, psi: &[f64]) -> VectorField {
    let (nx, ny) = (g.nx(), g.ny());
    assert_eq!(psi.len(), (nx + 1) * (ny + 1), "node array has the wrong length");
    let n = |i: usize, j: usize| psi[j * (nx + 1) + i];
    let mut w = VectorField::zeros(g);
    {
        let u = w.u_mut();
        for j in 0..ny {
            for i in 1..nx {
                u[g.u_idx(i, j)] = (n(i, j + 1) - n(i, j)) / g.hy();
            }
        }
    }
    let v = w.v_mut();
    for j in 1..ny {
        for i in 0..nx {
            v[g.v_idx(i, j)] = -(n(i + 1, j) - n(i, j)) / g.hx();
        }
    }
    w
}

/// `curl_nodes` of `psi(x, y)` sampled at the grid nodes.
pub fn curl_of(g: &GridSpec, psi: impl Fn(f64, f64) -> f64) -> VectorField {
    let (nx, ny) = (g.nx(), g.ny());
    let mut nodes = vec![0.0; (nx + 1) * (ny + 1)];
    for j in 0..=ny {
        for i in 0..=nx {
            nodes[j * (nx + 1) + i] = psi(i as f64 * g.hx(), j as f64 * g.hy());
        }
    }
    curl_nodes(g, &nodes)
}

fn corner_average(f: &ScalarField, i: usize, j: usize) -> f64 {
    let g = f.grid();
    let mut s = 0.0;
    let mut n = 0.0;
    for (ci, cj) in [(i.wrapping_sub(1), j.wrapping_sub(1)), (i, j.wrapping_sub(1)), (i.wrapping_sub(1), j), (i, j)] {
        if ci < g.nx() && cj < g.ny() {
            s += f.get(ci, cj);
            n += 1.0;
        }
    }
    s / n
}

/// Interior face stencil entries of the centered convective derivative
/// `(a . grad) w`, as `(target, source, coefficient)` over the concatenated
/// face index `[u faces..., v faces...]`.
///
/// Sharing one enumeration between `apply` and its transpose is what makes
/// the skew-symmetrized trilinear form vanish exactly on the diagonal.
fn for_each_advection_entry(a: &VectorField, mut emit: impl FnMut(usize, usize, f64)) {
    let g = *a.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let (hx, hy) = (g.hx(), g.hy());
    let off = g.u_len();
    // x-momentum rows at interior x-faces
    for j in 0..ny {
        for i in 1..nx {
            let t = g.u_idx(i, j);
            let ua = a.u_at(i, j);
            let va = 0.25 * (a.v_at(i - 1, j) + a.v_at(i, j) + a.v_at(i - 1, j + 1) + a.v_at(i, j + 1));
            let cx = ua / (2.0 * hx);
            if i + 1 < nx {
                emit(t, g.u_idx(i + 1, j), cx);
            }
            if i > 1 {
                emit(t, g.u_idx(i - 1, j), -cx);
            }
            let cy = va / (2.0 * hy);
            if j + 1 < ny {
                emit(t, g.u_idx(i, j + 1), cy);
            } else {
                emit(t, t, -cy);
            }
            if j > 0 {
                emit(t, g.u_idx(i, j - 1), -cy);
            } else {
                emit(t, t, cy);
            }
        }
    }
    // y-momentum rows at interior y-faces
    for j in 1..ny {
        for i in 0..nx {
            let t = off + g.v_idx(i, j);
            let va = a.v_at(i, j);
            let ua = 0.25 * (a.u_at(i, j - 1) + a.u_at(i + 1, j - 1) + a.u_at(i, j) + a.u_at(i + 1, j));
            let cy = va / (2.0 * hy);
            if j + 1 < ny {
                emit(t, off + g.v_idx(i, j + 1), cy);
            }
            if j > 1 {
                emit(t, off + g.v_idx(i, j - 1), -cy);
            }
            let cx = ua / (2.0 * hx);
            if i + 1 < nx {
                emit(t, off + g.v_idx(i + 1, j), cx);
            } else {
                emit(t, t, -cx);
            }
            if i > 0 {
                emit(t, off + g.v_idx(i - 1, j), -cx);
            } else {
                emit(t, t, cx);
            }
        }
    }
}

fn split(g: &GridSpec, w: &VectorField) -> Vec<f64> {
    let mut x = Vec::with_capacity(g.u_len() + g.v_len());
    x.extend_from_slice(w.u());
    x.extend_from_slice(w.v());
    x
}

fn join(g: &GridSpec, x: &[f64]) -> VectorField {
    let mut w = VectorField::zeros(g);
    let nu = g.u_len();
    w.u_mut().copy_from_slice(&x[..nu]);
    w.v_mut().copy_from_slice(&x[nu..]);
    w
}

/// `(a . grad) w` on faces.
pub fn advect(a: &VectorField, w: &VectorField) -> VectorField {
    let g = *a.grid();
    let x = split(&g, w);
    let mut y = vec![0.0; x.len()];
    for_each_advection_entry(a, |t, s, c| y[t] += c * x[s]);
    join(&g, &y)
}

/// Transpose of `advect(a, .)`.
pub fn advect_transpose(a: &VectorField, w: &VectorField) -> VectorField {
    let g = *a.grid();
    let x = split(&g, w);
    let mut y = vec![0.0; x.len()];
    for_each_advection_entry(a, |t, s, c| y[s] += c * x[t]);
    join(&g, &y)
}

/// Skew-symmetric convective term `N(a) = (A(a) a - A(a)^T a) / 2`, so that
/// `(N(a), w) = b~(a, a, w)`.
pub fn skew_advection(a: &VectorField) -> VectorField {
    let mut n = advect(a, a);
    let t = advect_transpose(a, a);
    for (x, y) in n.u_mut().iter_mut().zip(t.u()) {
        *x = 0.5 * (*x - y);
    }
    for (x, y) in n.v_mut().iter_mut().zip(t.v()) {
        *x = 0.5 * (*x - y);
    }
    n
}
