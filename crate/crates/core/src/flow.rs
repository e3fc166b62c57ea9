//! Stokes flow on the periodic unit cell (staggered grid) and prescribed test velocities.

use sprs::{CsMat, TriMat};

use crate::error::{Error, Result};
use crate::fvcore::{cell_velocity, conjugate_gradient, linear, FaceField, Operator};
use crate::geometry::{favre_average, Axis, UnitCellMesh};

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSolution {
    /// Face-normal velocity.
    pub velocity: FaceField,
    pub cell_velocity: Vec<[f64; 2]>,
    /// Favre-averaged speed.
    pub mean_speed: f64,
    pub force_direction: [f64; 2],
}

impl FlowSolution {
    pub fn from_faces(mesh: &UnitCellMesh, velocity: FaceField, force_direction: [f64; 2]) -> Self {
        let cell_velocity = cell_velocity(mesh, &velocity);
        let speed: Vec<f64> = cell_velocity
            .iter()
            .map(|v| (v[0] * v[0] + v[1] * v[1]).sqrt())
            .collect();
        let mean_speed = favre_average(mesh, &speed);
        Self {
            velocity,
            cell_velocity,
            mean_speed,
            force_direction,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSettings {
    /// Relative residual of the pressure iteration.
    pub tolerance: f64,
    pub max_outer: usize,
    /// Relative residual of the inner momentum and projection solves.
    pub inner_tolerance: f64,
    pub max_inner: usize,
}

impl Default for FlowSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_outer: 2000,
            inner_tolerance: 1e-13,
            max_inner: 100_000,
        }
    }
}

/// Test velocities.
pub enum PrescribedVelocity<'a> {
    Zero,
    Uniform([f64; 2]),
    /// Velocity derived from a stream function `psi(x, y)`: `u = dpsi/dy`, `v = -dpsi/dx`.
    StreamFunction(&'a dyn Fn(f64, f64) -> f64),
}

pub fn prescribe_velocity(mesh: &UnitCellMesh, kind: PrescribedVelocity) -> Result<FlowSolution> {
    let mut field = FaceField::zeros(mesh);
    let h = mesh.h;
    let dir = match kind {
        PrescribedVelocity::Zero => [0.0, 0.0],
        PrescribedVelocity::Uniform(d) => {
            if mesh.faces.iter().any(|f| !f.open) || !mesh.gamma_faces.is_empty() {
                return Err(Error::InvalidInput(
                    "uniform velocity violates no-slip on a mesh with solids".into(),
                ));
            }
            field.x.iter_mut().for_each(|v| *v = d[0]);
            field.y.iter_mut().for_each(|v| *v = d[1]);
            d
        }
        PrescribedVelocity::StreamFunction(psi) => {
            for f in &mesh.faces {
                let [x, y] = f.center;
                let v = match f.axis {
                    Axis::X => (psi(x, y + 0.5 * h) - psi(x, y - 0.5 * h)) / h,
                    Axis::Y => -(psi(x + 0.5 * h, y) - psi(x - 0.5 * h, y)) / h,
                };
                field.set(f.axis, f.slot, if f.open { v } else { 0.0 });
            }
            for b in &mesh.boundary_faces {
                let [x, y] = b.center;
                field.x[b.slot] = if b.open {
                    (psi(x, y + 0.5 * h) - psi(x, y - 0.5 * h)) / h
                } else {
                    0.0
                };
            }
            [1.0, 0.0]
        }
    };
    Ok(FlowSolution::from_faces(mesh, field, dir))
}

/// Scales the velocity so the Favre-averaged speed is one.
pub fn rescale_to_peclet(flow: &FlowSolution, mesh: &UnitCellMesh) -> Result<FlowSolution> {
    if !(flow.mean_speed > 0.0) {
        return Err(Error::ZeroFlow);
    }
    let s = 1.0 / flow.mean_speed;
    let mut out = FlowSolution::from_faces(mesh, flow.velocity.scaled(s), flow.force_direction);
    // Remove the last rounding so repeated rescaling is idempotent.
    if (out.mean_speed - 1.0).abs() < 1e-12 {
        out.mean_speed = 1.0;
    }
    Ok(out)
}

struct Staggered {
    /// Mesh face index of each velocity unknown.
    face_of: Vec<usize>,
    momentum: CsMat<f64>,
    /// Divergence: fluid cell unknowns by velocity unknowns, scaled by 1/h.
    div: CsMat<f64>,
    div_t: CsMat<f64>,
}

fn staggered_operators(mesh: &UnitCellMesh) -> Staggered {
    let h = mesh.h;
    let ih2 = 1.0 / (h * h);
    let nx = mesh.nx;
    let ny = mesh.ny;
    let nfx = mesh.nfx();
    let mut x_slot = vec![usize::MAX; nfx * ny];
    let mut y_slot = vec![usize::MAX; nx * ny];
    let mut face_of = Vec::new();
    let mut unknown = vec![usize::MAX; mesh.faces.len()];
    for (k, f) in mesh.faces.iter().enumerate() {
        match f.axis {
            Axis::X => x_slot[f.slot] = k,
            Axis::Y => y_slot[f.slot] = k,
        }
        if f.open {
            unknown[k] = face_of.len();
            face_of.push(k);
        }
    }
    let n = face_of.len();
    let mut tri = TriMat::with_capacity((n, n), 5 * n);
    let wrap = |a: isize, m: usize| a.rem_euclid(m as isize) as usize;
    for (u, &k) in face_of.iter().enumerate() {
        let f = &mesh.faces[k];
        let (i, j) = match f.axis {
            Axis::X => ((f.slot % nfx) as isize, (f.slot / nfx) as isize),
            Axis::Y => ((f.slot % nx) as isize, (f.slot / nx) as isize),
        };
        let lookup = |di: isize, dj: isize| -> usize {
            match f.axis {
                Axis::X => x_slot[wrap(i + di, nx) + nfx * wrap(j + dj, ny)],
                Axis::Y => y_slot[wrap(i + di, nx) + nx * wrap(j + dj, ny)],
            }
        };
        let (along, across): ([(isize, isize); 2], [(isize, isize); 2]) = match f.axis {
            Axis::X => ([(-1, 0), (1, 0)], [(0, -1), (0, 1)]),
            Axis::Y => ([(0, -1), (0, 1)], [(-1, 0), (1, 0)]),
        };
        let mut diag = 0.0;
        for (di, dj) in along {
            let nb = lookup(di, dj);
            diag += ih2;
            if mesh.faces[nb].open {
                tri.add_triplet(u, unknown[nb], -ih2);
            }
        }
        for (di, dj) in across {
            let nb = lookup(di, dj);
            if mesh.faces[nb].open {
                diag += ih2;
                tri.add_triplet(u, unknown[nb], -ih2);
            } else {
                // No-slip wall half a spacing away.
                diag += 2.0 * ih2;
            }
        }
        tri.add_triplet(u, u, diag);
    }
    let momentum = tri.to_csr();

    let m = mesh.n_dofs();
    let mut dt = TriMat::with_capacity((m, n), 2 * n);
    for (u, &k) in face_of.iter().enumerate() {
        let f = &mesh.faces[k];
        dt.add_triplet(mesh.dof_of_cell[f.lo], u, 1.0 / h);
        dt.add_triplet(mesh.dof_of_cell[f.hi], u, -1.0 / h);
    }
    let div: CsMat<f64> = dt.to_csr();
    let div_t = div.transpose_view().to_csr();
    Staggered {
        face_of,
        momentum,
        div,
        div_t,
    }
}

fn matvec(a: &CsMat<f64>, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; a.rows()];
    a.apply(x, &mut y);
    y
}

fn remove_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Graph Laplacian `div div^T` on fluid cells.
struct PressureLaplacian<'a> {
    div: &'a CsMat<f64>,
    div_t: &'a CsMat<f64>,
}

impl Operator for PressureLaplacian<'_> {
    fn dim(&self) -> usize {
        self.div.rows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let g = matvec(self.div_t, x);
        self.div.apply(&g, y);
    }

    fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.div.rows()];
        for (r, row) in self.div.outer_iterator().enumerate() {
            d[r] = row.iter().map(|(_, v)| v * v).sum();
        }
        d
    }
}

/// Steady Stokes flow driven by a unit body force along `force_direction`.
pub fn solve_stokes(
    mesh: &UnitCellMesh,
    force_direction: [f64; 2],
    settings: &FlowSettings,
) -> Result<FlowSolution> {
    if !mesh.periodic_x {
        return Err(Error::InvalidInput(
            "Stokes solve expects a periodic unit cell".into(),
        ));
    }
    let ops = staggered_operators(mesh);
    let n = ops.face_of.len();
    let force: Vec<f64> = ops
        .face_of
        .iter()
        .map(|&k| match mesh.faces[k].axis {
            Axis::X => force_direction[0],
            Axis::Y => force_direction[1],
        })
        .collect();

    let solve_momentum = |rhs: &[f64], guess: &mut Vec<f64>| -> Result<()> {
        conjugate_gradient(
            &ops.momentum,
            rhs,
            guess,
            settings.inner_tolerance,
            settings.max_inner,
        )?;
        Ok(())
    };

    // Pressure Schur complement S = D A^-1 D^T, solved by CG on mean-free pressures.
    let mut u0 = vec![0.0; n];
    solve_momentum(&force, &mut u0)?;
    let mut b = matvec(&ops.div, &u0);
    b.iter_mut().for_each(|v| *v = -*v);
    remove_mean(&mut b);
    let m = b.len();
    let mut p = vec![0.0; m];
    let mut r = b.clone();
    let mut d = r.clone();
    let bnorm = linear::norm(&b);
    let mut history = Vec::new();
    let mut rr = linear::dot(&r, &r);
    let mut work = vec![0.0; n];
    if bnorm > 0.0 {
        for _ in 0..settings.max_outer {
            let res = rr.sqrt() / bnorm;
            history.push(res);
            if res <= settings.tolerance {
                break;
            }
            let g = matvec(&ops.div_t, &d);
            solve_momentum(&g, &mut work)?;
            let mut sd = matvec(&ops.div, &work);
            remove_mean(&mut sd);
            let dsd = linear::dot(&d, &sd);
            if dsd <= 0.0 {
                break;
            }
            let alpha = rr / dsd;
            for k in 0..m {
                p[k] += alpha * d[k];
                r[k] -= alpha * sd[k];
            }
            let rr_new = linear::dot(&r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            for k in 0..m {
                d[k] = r[k] + beta * d[k];
            }
        }
        let last = *history.last().unwrap_or(&0.0);
        if last > settings.tolerance.max(1e-8) {
            return Err(Error::FlowNotConverged { history });
        }
    }

    let mut rhs = matvec(&ops.div_t, &p);
    for k in 0..n {
        rhs[k] += force[k];
    }
    let mut u = u0;
    solve_momentum(&rhs, &mut u)?;

    // Exact projection onto discretely divergence-free fields.
    let mut du = matvec(&ops.div, &u);
    remove_mean(&mut du);
    let lap = PressureLaplacian {
        div: &ops.div,
        div_t: &ops.div_t,
    };
    let mut phi = vec![0.0; m];
    conjugate_gradient(
        &lap,
        &du,
        &mut phi,
        settings.inner_tolerance,
        settings.max_inner,
    )?;
    let corr = matvec(&ops.div_t, &phi);
    for k in 0..n {
        u[k] -= corr[k];
    }

    let mut field = FaceField::zeros(mesh);
    for (idx, &k) in ops.face_of.iter().enumerate() {
        let f = &mesh.faces[k];
        field.set(f.axis, f.slot, u[idx]);
    }
    Ok(FlowSolution::from_faces(mesh, field, force_direction))
}

/// Repeats a unit-cell face velocity over a chain built from the same geometry.
pub fn tile_velocity(
    unit: &UnitCellMesh,
    velocity: &FaceField,
    chain: &UnitCellMesh,
) -> Result<FaceField> {
    if unit.resolution != chain.resolution || unit.spec.kind != chain.spec.kind {
        return Err(Error::InvalidInput(
            "chain and unit cell differ in geometry or resolution".into(),
        ));
    }
    let res = unit.resolution;
    let mut out = FaceField::zeros(chain);
    let nfx = chain.nfx();
    for j in 0..chain.ny {
        for i in 0..nfx {
            out.x[i + nfx * j] = velocity.x[(i % res) + res * j];
        }
        for i in 0..chain.nx {
            out.y[i + chain.nx * j] = velocity.y[(i % res) + res * j];
        }
    }
    Ok(out)
}
