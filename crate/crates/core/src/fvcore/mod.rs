//! Finite-volume advection-diffusion operators with Robin interface terms.
//!
//! Unknowns live on fluid cells (see [`UnitCellMesh::cell_of_dof`]). Scalar
//! fields passed around the crate are per grid cell with zeros on solid cells;
//! linear systems and Krylov vectors are per unknown.

pub mod linear;

use sprs::{CsMat, TriMat};

use crate::error::{Error, Result};
use crate::geometry::{Axis, End, Face, UnitCellMesh};
pub use linear::{bicgstab, conjugate_gradient, KrylovReport, Operator, RankOneUpdated};

/// Face-normal velocity on every face slot, positive along +x / +y.
///
/// The volumetric flux through a face is the stored value times the grid spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl FaceField {
    pub fn zeros(mesh: &UnitCellMesh) -> Self {
        Self {
            x: vec![0.0; mesh.nfx() * mesh.ny],
            y: vec![0.0; mesh.nx * mesh.ny],
        }
    }

    pub fn get(&self, axis: Axis, slot: usize) -> f64 {
        match axis {
            Axis::X => self.x[slot],
            Axis::Y => self.y[slot],
        }
    }

    pub fn at(&self, face: &Face) -> f64 {
        self.get(face.axis, face.slot)
    }

    pub fn set(&mut self, axis: Axis, slot: usize, v: f64) {
        match axis {
            Axis::X => self.x[slot] = v,
            Axis::Y => self.y[slot] = v,
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            x: self.x.iter().map(|v| v * s).collect(),
            y: self.y.iter().map(|v| v * s).collect(),
        }
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, other: &FaceField, s: f64) -> Self {
        Self {
            x: self
                .x
                .iter()
                .zip(&other.x)
                .map(|(a, b)| a + s * b)
                .collect(),
            y: self
                .y
                .iter()
                .zip(&other.y)
                .map(|(a, b)| a + s * b)
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.x
            .iter()
            .chain(&self.y)
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AdvectionScheme {
    #[default]
    Upwind,
    /// Central differencing applied as a deferred correction on top of upwind.
    CentralDeferred,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Relative residual target.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub scheme: AdvectionScheme,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            max_iterations: 50_000,
            scheme: AdvectionScheme::Upwind,
        }
    }
}

/// Coefficients of `div(Pe v u - D grad u) + shift u + extra u` with interface terms.
#[derive(Debug, Clone, Copy, Default)]
pub struct AdrTerms<'a> {
    pub velocity: Option<&'a FaceField>,
    pub peclet: f64,
    /// Per-cell diffusivity, 1 when absent.
    pub diffusivity: Option<&'a [f64]>,
    pub damkohler: f64,
    /// Per-interface-face source `g` of the Robin condition `grad u . n = Da (g - u)`.
    pub robin_source: Option<&'a [f64]>,
    /// Per-interface-face normal velocity carried out through the interface.
    pub gamma_velocity: Option<&'a [f64]>,
    pub shift: f64,
    /// Per-cell volumetric coefficient (per unit volume).
    pub extra: Option<&'a [f64]>,
    /// Dirichlet value at the inlet of chain meshes.
    pub inlet_value: f64,
    pub scheme: AdvectionScheme,
}

#[derive(Debug, Clone)]
pub struct LinearSystem {
    /// One row per fluid cell.
    pub matrix: CsMat<f64>,
    pub rhs: Vec<f64>,
    /// Notes on boundary terms folded into the system and any warnings.
    pub description: Vec<String>,
    pub scheme: AdvectionScheme,
    /// Advective couplings `(lo, hi, flux lo->hi)` in unknown indices, for deferred correction.
    advective: Vec<(usize, usize, f64)>,
}

impl LinearSystem {
    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    /// Central-minus-upwind flux correction evaluated at `u`.
    fn deferred_correction(&self, u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for &(a, b, f) in &self.advective {
            let up = if f >= 0.0 { u[a] } else { u[b] };
            let c = f * (0.5 * (u[a] + u[b]) - up);
            out[a] += c;
            out[b] -= c;
        }
    }

    /// Applies the operator, including the central correction when selected.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; u.len()];
        self.matrix.apply(u, &mut y);
        if self.scheme == AdvectionScheme::CentralDeferred {
            let mut c = vec![0.0; u.len()];
            self.deferred_correction(u, &mut c);
            for (a, b) in y.iter_mut().zip(c) {
                *a += b;
            }
        }
        y
    }
}

fn face_flux_sum(mesh: &UnitCellMesh, field: &FaceField) -> Vec<f64> {
    let mut div = vec![0.0; mesh.n_cells()];
    let h = mesh.h;
    for f in mesh.open_faces() {
        let q = field.at(f) * h;
        div[f.lo] += q;
        div[f.hi] -= q;
    }
    for b in mesh.boundary_faces.iter().filter(|b| b.open) {
        let q = field.x[b.slot] * h;
        match b.end {
            End::Inlet => div[b.cell] -= q,
            End::Outlet => div[b.cell] += q,
        }
    }
    div
}

/// Net volumetric outflow of each cell through open faces.
pub fn divergence(mesh: &UnitCellMesh, field: &FaceField) -> Vec<f64> {
    face_flux_sum(mesh, field)
}

/// Net outflow including an interface normal velocity per interface face.
pub fn divergence_with_gamma(
    mesh: &UnitCellMesh,
    field: &FaceField,
    gamma_velocity: &[f64],
) -> Vec<f64> {
    let mut div = face_flux_sum(mesh, field);
    for (g, &v) in mesh.gamma_faces.iter().zip(gamma_velocity) {
        div[g.owner] += v * g.length;
    }
    div
}

/// Largest cell divergence scaled by the mean absolute open-face flux.
pub fn scaled_max_divergence(mesh: &UnitCellMesh, field: &FaceField) -> f64 {
    let div = divergence(mesh, field);
    let mut total = 0.0;
    let mut n = 0usize;
    for f in mesh.open_faces() {
        total += field.at(f).abs() * mesh.h;
        n += 1;
    }
    let scale = if n > 0 { total / n as f64 } else { 0.0 };
    let m = div.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    if scale > 0.0 {
        m / scale
    } else {
        m
    }
}

/// Cell-centred gradient: central differences, one-sided next to blocked faces.
pub fn gradient(mesh: &UnitCellMesh, f: &[f64]) -> Vec<[f64; 2]> {
    let n = mesh.n_cells();
    let mut lo_nb: Vec<[Option<usize>; 2]> = vec![[None, None]; n];
    let mut hi_nb: Vec<[Option<usize>; 2]> = vec![[None, None]; n];
    for face in mesh.open_faces() {
        let d = match face.axis {
            Axis::X => 0,
            Axis::Y => 1,
        };
        hi_nb[face.lo][d] = Some(face.hi);
        lo_nb[face.hi][d] = Some(face.lo);
    }
    let h = mesh.h;
    let mut g = vec![[0.0; 2]; n];
    for &c in &mesh.cell_of_dof {
        for d in 0..2 {
            g[c][d] = match (lo_nb[c][d], hi_nb[c][d]) {
                (Some(a), Some(b)) => (f[b] - f[a]) / (2.0 * h),
                (None, Some(b)) => (f[b] - f[c]) / h,
                (Some(a), None) => (f[c] - f[a]) / h,
                (None, None) => 0.0,
            };
        }
    }
    g
}

/// Arithmetic face interpolation; faces with one fluid neighbour take its value.
pub fn interpolate_to_faces(mesh: &UnitCellMesh, f: &[f64]) -> FaceField {
    let mut out = FaceField::zeros(mesh);
    for face in &mesh.faces {
        let v = match (mesh.is_fluid[face.lo], mesh.is_fluid[face.hi]) {
            (true, true) => 0.5 * (f[face.lo] + f[face.hi]),
            (true, false) => f[face.lo],
            (false, true) => f[face.hi],
            (false, false) => 0.0,
        };
        out.set(face.axis, face.slot, v);
    }
    for b in &mesh.boundary_faces {
        if b.open {
            out.x[b.slot] = f[b.cell];
        }
    }
    out
}

/// Cell-centred velocity reconstructed from the two faces in each direction.
pub fn cell_velocity(mesh: &UnitCellMesh, field: &FaceField) -> Vec<[f64; 2]> {
    let mut v = vec![[0.0; 2]; mesh.n_cells()];
    for face in &mesh.faces {
        let d = match face.axis {
            Axis::X => 0,
            Axis::Y => 1,
        };
        let q = if face.open { 0.5 * field.at(face) } else { 0.0 };
        v[face.lo][d] += q;
        v[face.hi][d] += q;
    }
    for b in mesh.boundary_faces.iter().filter(|b| b.open) {
        v[b.cell][0] += 0.5 * field.x[b.slot];
    }
    for (c, vc) in v.iter_mut().enumerate() {
        if !mesh.is_fluid[c] {
            *vc = [0.0, 0.0];
        }
    }
    v
}

pub fn assemble_adr(mesh: &UnitCellMesh, t: &AdrTerms) -> Result<LinearSystem> {
    let n = mesh.n_dofs();
    let dof = &mesh.dof_of_cell;
    let h = mesh.h;
    let mut tri = TriMat::with_capacity((n, n), 7 * n);
    let mut rhs = vec![0.0; n];
    let mut description = Vec::new();
    let mut advective = Vec::new();

    if let Some(d) = t.diffusivity {
        for &c in &mesh.cell_of_dof {
            if !(d[c] > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "non-positive diffusivity {} in cell {c}",
                    d[c]
                )));
            }
        }
    }
    let diff = |c: usize| t.diffusivity.map_or(1.0, |d| d[c]);

    for face in mesh.open_faces() {
        let (a, b) = (dof[face.lo], dof[face.hi]);
        let k = 0.5 * (diff(face.lo) + diff(face.hi));
        tri.add_triplet(a, a, k);
        tri.add_triplet(a, b, -k);
        tri.add_triplet(b, b, k);
        tri.add_triplet(b, a, -k);
        if let Some(vel) = t.velocity {
            let f = t.peclet * vel.at(face) * h;
            if f > 0.0 {
                tri.add_triplet(a, a, f);
                tri.add_triplet(b, a, -f);
            } else if f < 0.0 {
                tri.add_triplet(a, b, f);
                tri.add_triplet(b, b, -f);
            }
            if f != 0.0 {
                advective.push((a, b, f));
            }
        }
    }

    for bf in mesh.boundary_faces.iter().filter(|b| b.open) {
        let a = dof[bf.cell];
        let f = t.velocity.map_or(0.0, |v| t.peclet * v.x[bf.slot] * h);
        match bf.end {
            End::Inlet => {
                let k = 2.0 * diff(bf.cell);
                tri.add_triplet(a, a, k);
                rhs[a] += k * t.inlet_value;
                if f > 0.0 {
                    rhs[a] += f * t.inlet_value;
                } else {
                    tri.add_triplet(a, a, -f);
                }
            }
            End::Outlet => {
                if f != 0.0 {
                    tri.add_triplet(a, a, f);
                }
            }
        }
    }
    if !mesh.boundary_faces.is_empty() {
        description.push(format!(
            "inlet Dirichlet value {}, outlet zero gradient",
            t.inlet_value
        ));
    }

    if t.damkohler != 0.0 || t.gamma_velocity.is_some() {
        for (k, g) in mesh.gamma_faces.iter().enumerate() {
            let a = dof[g.owner];
            let mut coeff = t.damkohler * g.length;
            if let Some(gv) = t.gamma_velocity {
                coeff += t.peclet * gv[k] * g.length;
            }
            tri.add_triplet(a, a, coeff);
            if let Some(src) = t.robin_source {
                rhs[a] += t.damkohler * src[k] * g.length;
            }
        }
        description.push(format!(
            "Robin interface term Da = {} on {} segments",
            t.damkohler,
            mesh.gamma_faces.len()
        ));
    }

    if t.shift != 0.0 || t.extra.is_some() {
        for &c in &mesh.cell_of_dof {
            let mut s = t.shift;
            if let Some(e) = t.extra {
                s += e[c];
            }
            if s != 0.0 {
                tri.add_triplet(dof[c], dof[c], s * mesh.volume[c]);
            }
        }
    }

    if let Some(vel) = t.velocity {
        if t.peclet != 0.0 {
            let div = scaled_max_divergence(mesh, vel);
            if div > 1e-6 {
                description.push(format!(
                    "warning: velocity not conservative (scaled divergence {div:e})"
                ));
            }
        }
    }

    Ok(LinearSystem {
        matrix: tri.to_csr(),
        rhs,
        description,
        scheme: t.scheme,
        advective,
    })
}

/// Solves the system from an initial guess, both per unknown.
pub fn solve_linear(
    system: &LinearSystem,
    guess: &[f64],
    settings: &SolverSettings,
) -> Result<Vec<f64>> {
    solve_with_rhs(system, &system.rhs, guess, settings)
}

/// Solves the system's matrix against another right-hand side.
pub fn solve_with_rhs(
    system: &LinearSystem,
    rhs: &[f64],
    guess: &[f64],
    settings: &SolverSettings,
) -> Result<Vec<f64>> {
    let mut x = guess.to_vec();
    bicgstab(
        &system.matrix,
        rhs,
        &mut x,
        settings.tolerance,
        settings.max_iterations,
    )?;
    if system.scheme == AdvectionScheme::Upwind || system.advective.is_empty() {
        return Ok(x);
    }
    let n = x.len();
    let mut corr = vec![0.0; n];
    let mut b = vec![0.0; n];
    for _ in 0..500 {
        system.deferred_correction(&x, &mut corr);
        for k in 0..n {
            b[k] = rhs[k] - corr[k];
        }
        let mut next = x.clone();
        bicgstab(
            &system.matrix,
            &b,
            &mut next,
            settings.tolerance,
            settings.max_iterations,
        )?;
        let change = next
            .iter()
            .zip(&x)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        let scale = next
            .iter()
            .fold(0.0, |m: f64, v| m.max(v.abs()))
            .max(1e-300);
        x = next;
        if change <= settings.tolerance * scale * 10.0 {
            return Ok(x);
        }
    }
    let r = system.apply(&x);
    let res = r
        .iter()
        .zip(rhs)
        .map(|(p, q)| (p - q).powi(2))
        .sum::<f64>()
        .sqrt()
        / linear::norm(rhs).max(1e-300);
    Err(Error::LinearSolver {
        iterations: 500,
        residual: res,
    })
}
