//! Drift velocity, corrector, effective parameters, potential drift and the
//! auxiliary problem for inhomogeneous interface sources.

use crate::error::{Error, Result};
use crate::fvcore::{
    assemble_adr, cell_velocity, divergence, solve_linear, solve_with_rhs, AdrTerms, FaceField,
    SolverSettings,
};
use crate::geometry::{boundary_integral, favre_average, Axis, UnitCellMesh};
use crate::spectral::{AitkenState, SpectralProblem, SpectralSolution};

/// Face-normal drift velocity plus its outward normal component on each interface segment.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftField {
    pub faces: FaceField,
    pub gamma: Vec<f64>,
}

impl DriftField {
    pub fn zeros(mesh: &UnitCellMesh) -> Self {
        Self {
            faces: FaceField::zeros(mesh),
            gamma: vec![0.0; mesh.gamma_faces.len()],
        }
    }
}

/// A body generating an inverse-distance potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialBody {
    pub center: [f64; 2],
    /// Reference length added to the surface distance; the disk radius for grains.
    pub reference_length: f64,
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    pub bodies: Vec<PotentialBody>,
    /// Global strength multiplying every body.
    pub strength: f64,
    /// Potential-to-advection ratio used by the transport operator.
    pub mu: f64,
    /// Nearest periodic image of each body instead of the body as placed.
    pub minimum_image: bool,
}

impl PotentialSpec {
    /// One unit-strength body per grain of the mesh.
    pub fn from_grains(mesh: &UnitCellMesh, strength: f64, mu: f64) -> Self {
        let bodies = mesh
            .disks
            .iter()
            .map(|d| PotentialBody {
                center: d.center,
                reference_length: d.radius,
                strength: 1.0,
            })
            .collect();
        Self {
            bodies,
            strength,
            mu,
            minimum_image: true,
        }
    }

    fn validate(&self) -> Result<()> {
        for b in &self.bodies {
            if !(b.reference_length > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "reference length {} must be positive",
                    b.reference_length
                )));
            }
        }
        Ok(())
    }
}

/// Nearest periodic images of a separation with their weights. A body exactly half a
/// period away has two nearest images; each gets half the weight.
fn nearest_images(d: f64, period: Option<f64>) -> ([f64; 2], [f64; 2]) {
    match period {
        Some(p) => {
            let m = d - p * (d / p).round();
            if (m.abs() - 0.5 * p).abs() <= 1e-12 * p {
                ([0.5 * p, -0.5 * p], [0.5, 0.5])
            } else {
                ([m, m], [1.0, 0.0])
            }
        }
        None => ([d, d], [1.0, 0.0]),
    }
}

/// Potential drift at a point. A positive strength pulls toward the bodies.
pub fn potential_drift_at(mesh: &UnitCellMesh, pot: &PotentialSpec, p: [f64; 2]) -> [f64; 2] {
    let px = if mesh.periodic_x && pot.minimum_image {
        Some(mesh.length_x())
    } else {
        None
    };
    let py = if pot.minimum_image { Some(1.0) } else { None };
    let mut v = [0.0; 2];
    for b in &pot.bodies {
        let (xs, wx) = nearest_images(p[0] - b.center[0], px);
        let (ys, wy) = nearest_images(p[1] - b.center[1], py);
        for (dx, wx) in xs.into_iter().zip(wx) {
            for (dy, wy) in ys.into_iter().zip(wy) {
                let w = wx * wy;
                let d = (dx * dx + dy * dy).sqrt();
                if w == 0.0 || d < 1e-12 {
                    continue;
                }
                // Surface distance plus reference length is the centre distance.
                let mag = w * pot.strength * b.strength / (d * d);
                v[0] -= mag * dx / d;
                v[1] -= mag * dy / d;
            }
        }
    }
    v
}

/// Potential drift sampled at face centres and interface midpoints; blocked faces carry zero.
pub fn smoluchowski_velocity(mesh: &UnitCellMesh, pot: &PotentialSpec) -> Result<DriftField> {
    pot.validate()?;
    let mut out = DriftField::zeros(mesh);
    if pot.strength == 0.0 {
        return Ok(out);
    }
    for f in mesh.open_faces() {
        let v = potential_drift_at(mesh, pot, f.center);
        let comp = match f.axis {
            Axis::X => v[0],
            Axis::Y => v[1],
        };
        out.faces.set(f.axis, f.slot, comp);
    }
    for b in mesh.boundary_faces.iter().filter(|b| b.open) {
        out.faces.x[b.slot] = potential_drift_at(mesh, pot, b.center)[0];
    }
    for (k, g) in mesh.gamma_faces.iter().enumerate() {
        let v = potential_drift_at(mesh, pot, g.midpoint);
        out.gamma[k] = v[0] * g.normal[0] + v[1] * g.normal[1];
    }
    Ok(out)
}

/// Face values of `w* = Pe beta w - phi_adj grad phi + phi grad phi_adj`.
///
/// Built from the discrete operator so that the field is exactly divergence free
/// whenever the eigenpair is converged: the flux across face (a, b) is
/// `A_ab phi_adj_a phi_b - A_ba phi_a phi_adj_b`. Interfaces carry no flux.
pub fn drift_flux_star(problem: &SpectralProblem, sol: &SpectralSolution) -> FaceField {
    let mesh = problem.mesh;
    let h = mesh.h;
    let w = problem.transport_velocity();
    let central = problem.options.linear.scheme == crate::fvcore::AdvectionScheme::CentralDeferred;
    let (phi, adj) = (&sol.phi, &sol.phi_adj);
    let mut out = FaceField::zeros(mesh);
    for f in mesh.open_faces() {
        let (a, b) = (f.lo, f.hi);
        let q = problem.peclet * w.at(f) * h;
        let (a_ab, a_ba) = if central {
            (-1.0 + 0.5 * q, -1.0 - 0.5 * q)
        } else if q >= 0.0 {
            (-1.0, -1.0 - q)
        } else {
            (-1.0 + q, -1.0)
        };
        let g = a_ab * adj[a] * phi[b] - a_ba * phi[a] * adj[b];
        out.set(f.axis, f.slot, g / h);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveVelocity {
    /// Favre average of `w*`.
    pub advective: [f64; 2],
    /// `W*/Pe`, zero at `Pe = 0`.
    pub velocity: [f64; 2],
}

pub fn effective_velocity(
    mesh: &UnitCellMesh,
    wstar: &FaceField,
    peclet: f64,
) -> EffectiveVelocity {
    let cv = cell_velocity(mesh, wstar);
    let mut adv = [0.0; 2];
    for (d, a) in adv.iter_mut().enumerate() {
        let comp: Vec<f64> = cv.iter().map(|v| v[d]).collect();
        *a = favre_average(mesh, &comp);
    }
    let velocity = if peclet > 0.0 {
        [adv[0] / peclet, adv[1] / peclet]
    } else {
        [0.0, 0.0]
    };
    EffectiveVelocity {
        advective: adv,
        velocity,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectorSettings {
    /// Mass shift of the fixed-point iteration.
    pub shift: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub aitken: bool,
    /// Relative imbalance of the forcing that is tolerated.
    pub solvability_tolerance: f64,
    pub linear: SolverSettings,
}

impl Default for CorrectorSettings {
    fn default() -> Self {
        Self {
            shift: 1.0,
            tolerance: 1e-11,
            max_iterations: 2000,
            aitken: true,
            solvability_tolerance: 1e-6,
            linear: SolverSettings::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CorrectorSolution {
    /// Per-cell components, zero on solid cells.
    pub chi: [Vec<f64>; 2],
    /// `<phi chi_k>` after the final gauge step.
    pub gauge: [f64; 2],
    pub iterations: [usize; 2],
}

fn face_beta(beta: &[f64], lo: usize, hi: usize) -> f64 {
    0.5 * (beta[lo] + beta[hi])
}

/// Solves `-div[beta (grad chi_k + e_k)] + w*.(grad chi_k + e_k) = beta W*_k` with zero
/// total flux on the interface, gauged by `<phi chi_k> = 0`.
pub fn solve_corrector(
    mesh: &UnitCellMesh,
    phi: &[f64],
    beta: &[f64],
    wstar: &FaceField,
    wmean: [f64; 2],
    settings: &CorrectorSettings,
) -> Result<CorrectorSolution> {
    let div = divergence(mesh, wstar);
    let extra: Vec<f64> = (0..mesh.n_cells())
        .map(|c| {
            if mesh.is_fluid[c] {
                -div[c] / mesh.volume[c]
            } else {
                0.0
            }
        })
        .collect();
    let system = assemble_adr(
        mesh,
        &AdrTerms {
            velocity: Some(wstar),
            peclet: 1.0,
            diffusivity: Some(beta),
            shift: settings.shift,
            extra: Some(&extra),
            scheme: settings.linear.scheme,
            ..Default::default()
        },
    )?;
    let h = mesh.h;
    let mass = mesh.to_dofs(&mesh.volume);
    let wc = cell_velocity(mesh, wstar);
    let phi_d = mesh.to_dofs(phi);
    let n = mesh.n_dofs();

    let mut chi: [Vec<f64>; 2] = [vec![0.0; mesh.n_cells()], vec![0.0; mesh.n_cells()]];
    let mut gauge = [0.0; 2];
    let mut iterations = [0; 2];
    for k in 0..2 {
        let mut rhs = vec![0.0; n];
        for f in mesh.open_faces() {
            let along = match f.axis {
                Axis::X => k == 0,
                Axis::Y => k == 1,
            };
            if along {
                let q = face_beta(beta, f.lo, f.hi) * h;
                rhs[mesh.dof_of_cell[f.lo]] += q;
                rhs[mesh.dof_of_cell[f.hi]] -= q;
            }
        }
        let mut scale = 2.0 * rhs.iter().map(|v| v.abs()).sum::<f64>();
        for (d, &c) in mesh.cell_of_dof.iter().enumerate() {
            rhs[d] += (beta[c] * wmean[k] - wc[c][k]) * mesh.volume[c];
            scale += ((beta[c] * wmean[k]).abs() + wc[c][k].abs()) * mesh.volume[c];
        }
        let imbalance: f64 = rhs.iter().sum();
        if scale > 0.0 && imbalance.abs() > settings.solvability_tolerance * scale {
            return Err(Error::Solvability(format!(
                "corrector component {k}: forcing imbalance {imbalance:e} against scale {scale:e}"
            )));
        }

        let gauge_of = |x: &[f64]| {
            x.iter()
                .zip(&phi_d)
                .zip(&mass)
                .map(|((x, p), m)| x * p * m)
                .sum::<f64>()
                / mesh.fluid_area
        };
        let mut x = vec![0.0; n];
        let mut acc = AitkenState::with_weights(x.clone(), mass.clone());
        let mut converged = false;
        let mut it = 0;
        while it < settings.max_iterations {
            it += 1;
            let b: Vec<f64> = rhs
                .iter()
                .zip(&x)
                .zip(&mass)
                .map(|((r, x), m)| r + settings.shift * m * x)
                .collect();
            let mut y = solve_with_rhs(&system, &b, &x, &settings.linear)?;
            let g = gauge_of(&y);
            y.iter_mut().for_each(|v| *v -= g);
            let change = y
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let size = y.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
            if change <= settings.tolerance * size.max(h) {
                x = y;
                converged = true;
                break;
            }
            x = if settings.aitken { acc.next(&y) } else { y };
            let g = gauge_of(&x);
            x.iter_mut().for_each(|v| *v -= g);
            acc.current.clone_from(&x);
        }
        if !converged {
            return Err(Error::CorrectorNotConverged(format!(
                "component {k} after {it} iterations"
            )));
        }
        gauge[k] = gauge_of(&x);
        iterations[k] = it;
        chi[k] = mesh.to_cells(&x);
    }
    Ok(CorrectorSolution {
        chi,
        gauge,
        iterations,
    })
}

/// `<beta (I + grad chi)(I + grad chi)^T>` from face differences, normalised by the fluid area.
pub fn effective_dispersion(
    mesh: &UnitCellMesh,
    beta: &[f64],
    chi: &[Vec<f64>; 2],
) -> Result<[[f64; 2]; 2]> {
    let d = dispersion_energy(mesh, beta, chi);
    let det = d[0][0] * d[1][1] - d[0][1] * d[1][0];
    if !(d[0][0] > 0.0 && det > 0.0) {
        return Err(Error::NotPositiveDefinite(d));
    }
    Ok(d)
}

fn dispersion_energy(mesh: &UnitCellMesh, beta: &[f64], chi: &[Vec<f64>; 2]) -> [[f64; 2]; 2] {
    let h = mesh.h;
    let mut d = [[0.0; 2]; 2];
    for f in mesh.open_faces() {
        let dir = match f.axis {
            Axis::X => 0,
            Axis::Y => 1,
        };
        let b = face_beta(beta, f.lo, f.hi);
        let mut g = [0.0; 2];
        for (k, gk) in g.iter_mut().enumerate() {
            *gk = if k == dir { 1.0 } else { 0.0 } + (chi[k][f.hi] - chi[k][f.lo]) / h;
        }
        for k in 0..2 {
            for l in 0..2 {
                d[k][l] += b * g[k] * g[l] * h * h;
            }
        }
    }
    for row in d.iter_mut() {
        for v in row.iter_mut() {
            *v /= mesh.fluid_area;
        }
    }
    d[0][1] = 0.5 * (d[0][1] + d[1][0]);
    d[1][0] = d[0][1];
    d
}

/// Unsymmetric flux form `<beta (delta_kl + d_l chi_k)> + <chi_l (beta W*_k - w*_k)>`, with the
/// first term summed over faces normal to `l` like the energy form.
pub fn dispersion_flux_form(
    mesh: &UnitCellMesh,
    beta: &[f64],
    chi: &[Vec<f64>; 2],
    wstar: &FaceField,
    wmean: [f64; 2],
) -> [[f64; 2]; 2] {
    let h = mesh.h;
    let mut d = [[0.0; 2]; 2];
    for f in mesh.open_faces() {
        let l = match f.axis {
            Axis::X => 0,
            Axis::Y => 1,
        };
        let b = face_beta(beta, f.lo, f.hi);
        for (k, row) in d.iter_mut().enumerate() {
            let delta = if k == l { 1.0 } else { 0.0 };
            row[l] += b * (delta + (chi[k][f.hi] - chi[k][f.lo]) / h) * h * h / mesh.fluid_area;
        }
    }
    let wc = cell_velocity(mesh, wstar);
    for (k, row) in d.iter_mut().enumerate() {
        for (l, v) in row.iter_mut().enumerate() {
            let f: Vec<f64> = (0..mesh.n_cells())
                .map(|c| chi[l][c] * (beta[c] * wmean[k] - wc[c][k]))
                .collect();
            *v += favre_average(mesh, &f);
        }
    }
    d
}

/// Largest entry of `sym(flux form) - energy form`, relative to the largest energy entry.
pub fn dispersion_mismatch(flux: &[[f64; 2]; 2], energy: &[[f64; 2]; 2]) -> f64 {
    let mut m: f64 = 0.0;
    let mut s: f64 = 0.0;
    for k in 0..2 {
        for l in 0..2 {
            let sym = 0.5 * (flux[k][l] + flux[l][k]);
            m = m.max((sym - energy[k][l]).abs());
            s = s.max(energy[k][l].abs());
        }
    }
    m / s.max(1e-300)
}

#[derive(Debug, Clone)]
pub struct AuxiliarySolution {
    pub psi: Vec<f64>,
    pub average: f64,
}

/// Solves the transport problem with Robin source `Da (g - psi)` on the interface.
pub fn solve_auxiliary(
    mesh: &UnitCellMesh,
    velocity: &FaceField,
    peclet: f64,
    damkohler: f64,
    source: &[f64],
    settings: &SolverSettings,
) -> Result<AuxiliarySolution> {
    if source.len() != mesh.gamma_faces.len() {
        return Err(Error::InvalidInput(format!(
            "interface source has {} values for {} segments",
            source.len(),
            mesh.gamma_faces.len()
        )));
    }
    let zero = AuxiliarySolution {
        psi: vec![0.0; mesh.n_cells()],
        average: 0.0,
    };
    if source.iter().all(|g| *g == 0.0) || mesh.gamma_faces.is_empty() {
        return Ok(zero);
    }
    if damkohler == 0.0 {
        return Err(Error::IllPosedAuxiliary);
    }
    let system = assemble_adr(
        mesh,
        &AdrTerms {
            velocity: Some(velocity),
            peclet,
            damkohler,
            robin_source: Some(source),
            scheme: settings.scheme,
            ..Default::default()
        },
    )?;
    let rhs: f64 = mesh
        .gamma_faces
        .iter()
        .zip(source)
        .map(|(g, s)| s * g.length)
        .sum();
    // Start from the interface mean of g, which is the exact answer for uniform g.
    let guess = vec![rhs / mesh.gamma_measure(); mesh.n_dofs()];
    let psi = mesh.to_cells(&solve_linear(&system, &guess, settings)?);
    let lhs = boundary_integral(mesh, &psi);
    let scale = rhs
        .abs()
        .max(mesh.gamma_measure() * source.iter().fold(0.0, |m: f64, v| m.max(v.abs())));
    // Conservative discretisation: the identity holds to the linear residual, amplified by the
    // conditioning of the Robin-dominated rows.
    let allowed =
        10.0 * settings.tolerance * (1.0 + damkohler) * (1.0 + peclet) * mesh.n_dofs() as f64;
    if (lhs - rhs).abs() > allowed * scale {
        return Err(Error::Solvability(format!(
            "interface integrals {lhs} and {rhs} differ"
        )));
    }
    let average = favre_average(mesh, &psi);
    Ok(AuxiliarySolution { psi, average })
}

/// Largest cell divergence of `w*` relative to the mean gross face flux, taken as
/// `|w*| h` plus the face value of `beta`. At Pe = 0 `w*` is round-off and its own
/// magnitude is no scale at all.
pub fn drift_divergence(mesh: &UnitCellMesh, wstar: &FaceField, beta: &[f64]) -> f64 {
    let div = divergence(mesh, wstar);
    let (mut total, mut n) = (0.0, 0usize);
    for f in mesh.open_faces() {
        total += wstar.at(f).abs() * mesh.h + 0.5 * (beta[f.lo] + beta[f.hi]);
        n += 1;
    }
    let m = div.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    if n > 0 && total > 0.0 {
        m * n as f64 / total
    } else {
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Diagnostics {
    pub lambda_adjoint: f64,
    pub lambda_error: f64,
    /// Largest scaled cell divergence of `w*`.
    pub drift_divergence: f64,
    /// `lambda eps <phi> - Da integral_Gamma phi`, relative to the last term (absolute when it vanishes).
    pub identity_residual: f64,
    pub dispersion_mismatch: f64,
    pub gauge: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveParameters {
    pub peclet: f64,
    pub damkohler: f64,
    pub mu: f64,
    pub porosity: f64,
    pub lambda: f64,
    /// `V*`, in units of the mean speed.
    pub velocity: [f64; 2],
    /// `W* = Pe V*`.
    pub advective: [f64; 2],
    pub dispersion: [[f64; 2]; 2],
    pub source_average: f64,
    pub iterations: usize,
    pub corrector_iterations: [usize; 2],
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Default)]
pub struct CellOptions {
    pub spectral: crate::spectral::SpectralOptions,
    pub corrector: CorrectorSettings,
    /// Interface source values for the auxiliary problem; none means a homogeneous interface.
    pub interface_source: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct CellSolution {
    pub parameters: EffectiveParameters,
    pub spectral: SpectralSolution,
    pub wstar: FaceField,
    pub corrector: CorrectorSolution,
    pub drift: Option<DriftField>,
    pub auxiliary: Option<AuxiliarySolution>,
}

/// Flow-to-coefficients chain on one cell: eigenpair, drift, corrector, dispersion and source.
pub fn solve_cell(
    mesh: &UnitCellMesh,
    velocity: &FaceField,
    peclet: f64,
    damkohler: f64,
    potential: Option<&PotentialSpec>,
    options: &CellOptions,
) -> Result<CellSolution> {
    let drift = match potential {
        Some(p) => Some(smoluchowski_velocity(mesh, p)?),
        None => None,
    };
    let mu = potential.map_or(0.0, |p| p.mu);
    let mut problem = match &drift {
        Some(d) => SpectralProblem::colloid(mesh, velocity, d, peclet, damkohler, mu),
        None => SpectralProblem::solute(mesh, velocity, peclet, damkohler),
    };
    problem.options = options.spectral;
    let spectral = crate::spectral::solve_eigenpairs(&problem)?;
    let wstar = drift_flux_star(&problem, &spectral);
    let ev = effective_velocity(mesh, &wstar, peclet);
    let corrector = solve_corrector(
        mesh,
        &spectral.phi,
        &spectral.beta,
        &wstar,
        ev.advective,
        &options.corrector,
    )?;
    let dispersion = effective_dispersion(mesh, &spectral.beta, &corrector.chi)?;
    let flux = dispersion_flux_form(mesh, &spectral.beta, &corrector.chi, &wstar, ev.advective);

    let auxiliary = match &options.interface_source {
        Some(g) => {
            let w = problem.transport_velocity();
            Some(solve_auxiliary(
                mesh,
                &w,
                peclet,
                damkohler,
                g,
                &options.spectral.linear,
            )?)
        }
        None => None,
    };

    let sink = damkohler * boundary_integral(mesh, &spectral.phi);
    let identity = spectral.lambda * mesh.porosity * favre_average(mesh, &spectral.phi) - sink;
    let identity_residual = if sink.abs() > 0.0 {
        identity / sink
    } else {
        identity
    };
    let last = spectral.history.last().copied();
    let parameters = EffectiveParameters {
        peclet,
        damkohler,
        mu,
        porosity: mesh.porosity,
        lambda: spectral.lambda,
        velocity: ev.velocity,
        advective: ev.advective,
        dispersion,
        source_average: auxiliary.as_ref().map_or(0.0, |a| a.average),
        iterations: spectral.iterations,
        corrector_iterations: corrector.iterations,
        diagnostics: Diagnostics {
            lambda_adjoint: spectral.lambda_adj,
            lambda_error: last.map_or(0.0, |r| r.lambda_error),
            drift_divergence: drift_divergence(mesh, &wstar, &spectral.beta),
            identity_residual,
            dispersion_mismatch: dispersion_mismatch(&flux, &dispersion),
            gauge: corrector.gauge,
        },
    };
    Ok(CellSolution {
        parameters,
        spectral,
        wstar,
        corrector,
        drift,
        auxiliary,
    })
}
