//! Fast diagonalization of the constant-coefficient operators.
//!
//! The Neumann Laplacian on cell centers is diagonal in the DCT-II basis.
//! For the no-slip vector Laplacian, each velocity component is diagonal in
//! a DST-I basis along its own direction (Dirichlet nodes on the walls) and a
//! DST-II basis across it (antisymmetric ghost cells).

use std::f64::consts::PI;
use std::sync::Arc;

use rustdct::{Dst1, DctPlanner, TransformType2And3};

use crate::grid::{GridSpec, ScalarField, VectorField};

#[derive(Clone)]
enum Kind {
    /// DCT-II forward, DCT-III inverse.
    Cosine(Arc<dyn TransformType2And3<f64>>),
    /// DST-II forward, DST-III inverse.
    Sine(Arc<dyn TransformType2And3<f64>>),
    /// DST-I, its own inverse up to scaling.
    SineNodes(Arc<dyn Dst1<f64>>),
}

/// A 1D real transform together with the eigenvalues of the matching
/// negative second-difference operator.
#[derive(Clone)]
struct Axis {
    kind: Kind,
    len: usize,
    eig: Vec<f64>,
    inv_scale: f64,
}

impl Axis {
    fn cosine(planner: &mut DctPlanner<f64>, n: usize, h: f64) -> Self {
        let eig = (0..n).map(|k| (2.0 - 2.0 * (PI * k as f64 / n as f64).cos()) / (h * h)).collect();
        Self {
            kind: Kind::Cosine(planner.plan_dct2(n)),
            len: n,
            eig,
            inv_scale: 2.0 / n as f64,
        }
    }

    fn sine_cells(planner: &mut DctPlanner<f64>, n: usize, h: f64) -> Self {
        let eig = (1..=n).map(|k| (2.0 - 2.0 * (PI * k as f64 / n as f64).cos()) / (h * h)).collect();
        Self {
            kind: Kind::Sine(planner.plan_dst2(n)),
            len: n,
            eig,
            inv_scale: 2.0 / n as f64,
        }
    }

    /// `n` cells, `n - 1` interior nodes.
    fn sine_nodes(planner: &mut DctPlanner<f64>, n: usize, h: f64) -> Self {
        let eig = (1..n).map(|k| (2.0 - 2.0 * (PI * k as f64 / n as f64).cos()) / (h * h)).collect();
        Self {
            kind: Kind::SineNodes(planner.plan_dst1(n - 1)),
            len: n - 1,
            eig,
            inv_scale: 2.0 / n as f64,
        }
    }

    fn forward(&self, buf: &mut [f64]) {
        match &self.kind {
            Kind::Cosine(t) => t.process_dct2(buf),
            Kind::Sine(t) => t.process_dst2(buf),
            Kind::SineNodes(t) => t.process_dst1(buf),
        }
    }

    fn inverse(&self, buf: &mut [f64]) {
        match &self.kind {
            Kind::Cosine(t) => t.process_dct3(buf),
            Kind::Sine(t) => t.process_dst3(buf),
            Kind::SineNodes(t) => t.process_dst1(buf),
        }
        buf.iter_mut().for_each(|x| *x *= self.inv_scale);
    }
}

/// Dense `nx x ny` block (x fastest) diagonalized by a pair of axes.
#[derive(Clone)]
struct Separable {
    x: Axis,
    y: Axis,
}

impl Separable {
    fn transform(&self, data: &mut [f64], inverse: bool) {
        let (nx, ny) = (self.x.len, self.y.len);
        for row in data.chunks_exact_mut(nx) {
            if inverse {
                self.x.inverse(row)
            } else {
                self.x.forward(row)
            }
        }
        let mut col = vec![0.0; ny];
        for i in 0..nx {
            for j in 0..ny {
                col[j] = data[j * nx + i];
            }
            if inverse {
                self.y.inverse(&mut col)
            } else {
                self.y.forward(&mut col)
            }
            for j in 0..ny {
                data[j * nx + i] = col[j];
            }
        }
    }

    /// Solves `(alpha + beta * L) x = b` in place, where `L` is the
    /// positive operator with eigenvalues `ex + ey`. A zero total
    /// eigenvalue is mapped to zero (the Neumann null space).
    fn solve(&self, data: &mut [f64], alpha: f64, beta: f64) {
        self.transform(data, false);
        let nx = self.x.len;
        for (k, d) in data.iter_mut().enumerate() {
            let lam = alpha + beta * (self.x.eig[k % nx] + self.y.eig[k / nx]);
            *d = if lam == 0.0 { 0.0 } else { *d / lam };
        }
        self.transform(data, true);
    }
}

/// Inverse of `alpha - beta * Delta_N` on cell-centered fields.
#[derive(Clone)]
pub struct NeumannSolver {
    grid: GridSpec,
    op: Separable,
}

impl NeumannSolver {
    pub fn new(grid: &GridSpec) -> Self {
        let mut planner = DctPlanner::new();
        Self {
            grid: *grid,
            op: Separable {
                x: Axis::cosine(&mut planner, grid.nx(), grid.hx()),
                y: Axis::cosine(&mut planner, grid.ny(), grid.hy()),
            },
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Solves `(alpha - beta Delta) x = f`. With `alpha = 0` the constant
    /// mode of `f` is discarded and the zero-mean solution returned.
    pub fn solve(&self, f: &ScalarField, alpha: f64, beta: f64) -> ScalarField {
        let mut data = f.values().to_vec();
        self.op.solve(&mut data, alpha, beta);
        let mut out = ScalarField::zeros(&self.grid);
        out.values_mut().copy_from_slice(&data);
        out
    }

    /// Smallest nonzero eigenvalue of `-Delta_N`.
    pub fn first_nonzero_eigenvalue(&self) -> f64 {
        self.op.x.eig[1].min(self.op.y.eig[1])
    }
}

/// Inverse of `alpha - beta * Delta` for no-slip velocity fields.
#[derive(Clone)]
pub struct VectorHelmholtzSolver {
    grid: GridSpec,
    u_op: Separable,
    v_op: Separable,
}

impl VectorHelmholtzSolver {
    pub fn new(grid: &GridSpec) -> Self {
        let mut planner = DctPlanner::new();
        let (nx, ny, hx, hy) = (grid.nx(), grid.ny(), grid.hx(), grid.hy());
        Self {
            grid: *grid,
            u_op: Separable {
                x: Axis::sine_nodes(&mut planner, nx, hx),
                y: Axis::sine_cells(&mut planner, ny, hy),
            },
            v_op: Separable {
                x: Axis::sine_cells(&mut planner, nx, hx),
                y: Axis::sine_nodes(&mut planner, ny, hy),
            },
        }
    }

    pub fn solve(&self, f: &VectorField, alpha: f64, beta: f64) -> VectorField {
        let g = &self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let mut out = VectorField::zeros(g);

        // x-velocity: interior faces i = 1..nx-1
        let mut data = vec![0.0; (nx - 1) * ny];
        for j in 0..ny {
            for i in 1..nx {
                data[j * (nx - 1) + i - 1] = f.u_at(i, j);
            }
        }
        self.u_op.solve(&mut data, alpha, beta);
        {
            let u = out.u_mut();
            for j in 0..ny {
                for i in 1..nx {
                    u[g.u_idx(i, j)] = data[j * (nx - 1) + i - 1];
                }
            }
        }

        // y-velocity: interior faces j = 1..ny-1
        let mut data = vec![0.0; nx * (ny - 1)];
        for j in 1..ny {
            for i in 0..nx {
                data[(j - 1) * nx + i] = f.v_at(i, j);
            }
        }
        self.v_op.solve(&mut data, alpha, beta);
        let v = out.v_mut();
        for j in 1..ny {
            for i in 0..nx {
                v[g.v_idx(i, j)] = data[(j - 1) * nx + i];
            }
        }
        out
    }
}
