//! Principal direct and adjoint eigenpairs by a segregated inverse power method.

pub mod aitken;

use crate::closure::DriftField;
use crate::error::{Error, Result};
use crate::fvcore::{
    assemble_adr, divergence_with_gamma, solve_with_rhs, AdrTerms, FaceField, LinearSystem,
    SolverSettings,
};
use crate::geometry::{favre_average, UnitCellMesh};
pub use aitken::{aitken_accelerate, AitkenState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AdjointKind {
    #[default]
    Solute,
    Colloid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RayleighUpdate {
    Explicit,
    #[default]
    Implicit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralOptions {
    pub rayleigh: RayleighUpdate,
    pub aitken: bool,
    pub tol_phi: f64,
    pub tol_lambda: f64,
    pub max_outer: usize,
    /// Shift used when the operator has no reactive sink.
    pub zero_da_shift: f64,
    /// Value of the constant initial guess for both eigenfunctions.
    pub initial_value: f64,
    pub linear: SolverSettings,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            rayleigh: RayleighUpdate::Implicit,
            aitken: true,
            tol_phi: 1e-10,
            tol_lambda: 1e-10,
            max_outer: 2000,
            zero_da_shift: 1.0,
            initial_value: 1.0,
            linear: SolverSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SpectralProblem<'a> {
    pub mesh: &'a UnitCellMesh,
    /// Unit-mean face velocity.
    pub velocity: &'a FaceField,
    pub peclet: f64,
    pub damkohler: f64,
    pub kind: AdjointKind,
    /// Potential drift and its strength ratio (colloid kind).
    pub drift: Option<&'a DriftField>,
    pub mu: f64,
    pub options: SpectralOptions,
}

impl<'a> SpectralProblem<'a> {
    pub fn solute(
        mesh: &'a UnitCellMesh,
        velocity: &'a FaceField,
        peclet: f64,
        damkohler: f64,
    ) -> Self {
        Self {
            mesh,
            velocity,
            peclet,
            damkohler,
            kind: AdjointKind::Solute,
            drift: None,
            mu: 0.0,
            options: SpectralOptions::default(),
        }
    }

    pub fn colloid(
        mesh: &'a UnitCellMesh,
        velocity: &'a FaceField,
        drift: &'a DriftField,
        peclet: f64,
        damkohler: f64,
        mu: f64,
    ) -> Self {
        Self {
            kind: AdjointKind::Colloid,
            drift: Some(drift),
            mu,
            ..Self::solute(mesh, velocity, peclet, damkohler)
        }
    }

    /// Shift applied to make the iteration matrix nonsingular.
    pub fn shift(&self) -> f64 {
        if self.damkohler == 0.0 || self.mesh.gamma_faces.is_empty() {
            self.options.zero_da_shift
        } else {
            0.0
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.peclet >= 0.0) || !(self.damkohler >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "Pe = {}, Da = {} must be non-negative",
                self.peclet, self.damkohler
            )));
        }
        if !(self.options.initial_value > 0.0) {
            return Err(Error::InvalidInput("initial guess must be positive".into()));
        }
        if self.kind == AdjointKind::Colloid && self.drift.is_none() {
            return Err(Error::InvalidInput(
                "colloid adjoint requires a potential drift".into(),
            ));
        }
        Ok(())
    }

    /// Transport velocity of the direct problem, `v + mu v_drift`.
    pub fn transport_velocity(&self) -> FaceField {
        match (self.kind, self.drift) {
            (AdjointKind::Colloid, Some(d)) if self.mu != 0.0 => {
                self.velocity.add_scaled(&d.faces, self.mu)
            }
            _ => self.velocity.clone(),
        }
    }
}

pub fn build_direct_operator(problem: &SpectralProblem) -> Result<LinearSystem> {
    problem.validate()?;
    let w = problem.transport_velocity();
    assemble_adr(
        problem.mesh,
        &AdrTerms {
            velocity: Some(&w),
            peclet: problem.peclet,
            damkohler: problem.damkohler,
            shift: problem.shift(),
            scheme: problem.options.linear.scheme,
            ..Default::default()
        },
    )
}

/// Adjoint operator: reversed transport velocity; the colloid kind adds the
/// drift divergence as a volumetric term and carries the drift through the interface.
pub fn build_adjoint_operator(problem: &SpectralProblem) -> Result<LinearSystem> {
    problem.validate()?;
    let mesh = problem.mesh;
    let w = problem.transport_velocity().scaled(-1.0);
    let mut extra = None;
    let mut gamma_velocity = None;
    if let (AdjointKind::Colloid, Some(d)) = (problem.kind, problem.drift) {
        if problem.mu != 0.0 {
            let div = divergence_with_gamma(mesh, &d.faces, &d.gamma);
            let e: Vec<f64> = (0..mesh.n_cells())
                .map(|c| {
                    if mesh.is_fluid[c] {
                        problem.peclet * problem.mu * div[c] / mesh.volume[c]
                    } else {
                        0.0
                    }
                })
                .collect();
            extra = Some(e);
            gamma_velocity = Some(
                d.gamma
                    .iter()
                    .map(|g| -problem.mu * g)
                    .collect::<Vec<f64>>(),
            );
        }
    }
    assemble_adr(
        mesh,
        &AdrTerms {
            velocity: Some(&w),
            peclet: problem.peclet,
            damkohler: problem.damkohler,
            shift: problem.shift(),
            extra: extra.as_deref(),
            gamma_velocity: gamma_velocity.as_deref(),
            scheme: problem.options.linear.scheme,
            ..Default::default()
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRecord {
    pub iteration: usize,
    pub res_phi: f64,
    pub res_adj: f64,
    pub lambda: f64,
    pub lambda_adj: f64,
    pub lambda_error: f64,
}

#[derive(Debug, Clone)]
pub struct SpectralSolution {
    /// Per-cell fields, zero on solid cells.
    pub phi: Vec<f64>,
    pub phi_adj: Vec<f64>,
    pub beta: Vec<f64>,
    pub lambda: f64,
    pub lambda_adj: f64,
    pub iterations: usize,
    pub history: Vec<ConvergenceRecord>,
    pub shift: f64,
}

fn favre_dofs(mesh: &UnitCellMesh, mass: &[f64], u: &[f64]) -> f64 {
    u.iter().zip(mass).map(|(a, m)| a * m).sum::<f64>() / mesh.fluid_area
}

fn weighted_dot(mass: &[f64], a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).zip(mass).map(|((x, y), m)| x * y * m).sum()
}

fn relative_change(new: &[f64], old: &[f64]) -> f64 {
    new.iter()
        .zip(old)
        .map(|(n, o)| (n.abs() - o.abs()).abs() / o.abs().max(1e-30))
        .fold(0.0, f64::max)
}

struct Branch<'s> {
    system: &'s LinearSystem,
    x: Vec<f64>,
    mu: f64,
    aitken: AitkenState,
}

impl Branch<'_> {
    /// One inverse-iteration step; returns (normalised image, updated eigenvalue).
    fn step(
        &self,
        mesh: &UnitCellMesh,
        mass: &[f64],
        opts: &SpectralOptions,
    ) -> Result<(Vec<f64>, f64)> {
        let rhs: Vec<f64> = self
            .x
            .iter()
            .zip(mass)
            .map(|(x, m)| self.mu * m * x)
            .collect();
        let u = solve_with_rhs(self.system, &rhs, &self.x, &opts.linear)?;
        let mu_new = match opts.rayleigh {
            RayleighUpdate::Implicit => {
                let au = self.system.apply(&u);
                u.iter().zip(&au).map(|(a, b)| a * b).sum::<f64>() / weighted_dot(mass, &u, &u)
            }
            RayleighUpdate::Explicit => {
                self.mu * weighted_dot(mass, &self.x, &u) / weighted_dot(mass, &u, &u)
            }
        };
        let avg = favre_dofs(mesh, mass, &u);
        Ok((u.iter().map(|v| v / avg).collect(), mu_new))
    }

    fn advance(&mut self, image: Vec<f64>, use_aitken: bool) {
        if !use_aitken {
            self.x = image;
            return;
        }
        let next = self.aitken.next(&image);
        if next.iter().all(|v| *v > 0.0 && v.is_finite()) {
            self.x = next;
        } else {
            self.aitken.reset(image.clone());
            self.x = image;
        }
    }
}

pub fn solve_eigenpairs(problem: &SpectralProblem) -> Result<SpectralSolution> {
    let mesh = problem.mesh;
    let opts = problem.options;
    let direct = build_direct_operator(problem)?;
    let adjoint = build_adjoint_operator(problem)?;
    let mass = mesh.to_dofs(&mesh.volume);
    let n = mesh.n_dofs();
    let sigma = problem.shift();
    let mu0 = problem.damkohler * mesh.gamma_measure() / mesh.fluid_area + sigma;

    let ones = vec![opts.initial_value; n];
    let mut dir = Branch {
        system: &direct,
        x: ones.clone(),
        mu: mu0,
        aitken: AitkenState::with_weights(ones.clone(), mass.clone()),
    };
    let mut adj = Branch {
        system: &adjoint,
        x: ones.clone(),
        mu: mu0,
        aitken: AitkenState::with_weights(ones, mass.clone()),
    };

    let mut history = Vec::new();
    let mut converged = false;
    let mut last = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    for it in 1..=opts.max_outer {
        let (u, mu_u) = dir.step(mesh, &mass, &opts)?;
        let (v, mu_v) = adj.step(mesh, &mass, &opts)?;
        let res_phi = relative_change(&u, &dir.x);
        let res_adj = relative_change(&v, &adj.x);
        let lambda_error = (mu_v - mu_u).abs() / mu_u.abs().max(1e-300);
        history.push(ConvergenceRecord {
            iteration: it,
            res_phi,
            res_adj,
            lambda: mu_u - sigma,
            lambda_adj: mu_v - sigma,
            lambda_error,
        });
        last = (res_phi, res_adj, lambda_error);
        dir.mu = mu_u;
        adj.mu = mu_v;
        if res_phi <= opts.tol_phi && res_adj <= opts.tol_phi && lambda_error <= opts.tol_lambda {
            dir.x = u;
            adj.x = v;
            converged = true;
            break;
        }
        dir.advance(u, opts.aitken);
        adj.advance(v, opts.aitken);
    }
    if !converged {
        return Err(Error::SpectralNotConverged {
            iterations: history.len(),
            res_phi: last.0,
            res_adj: last.1,
            lambda_error: last.2,
        });
    }

    let lambda = dir.mu - sigma;
    let lambda_adj = adj.mu - sigma;
    if lambda < -opts.tol_lambda * dir.mu.abs().max(1.0) {
        return Err(Error::NonPrincipal(lambda));
    }
    if dir.x.iter().chain(&adj.x).any(|v| !(*v > 0.0)) {
        return Err(Error::NonPrincipal(lambda));
    }
    let phi = mesh.to_cells(&dir.x);
    let mut phi_adj = mesh.to_cells(&adj.x);
    let pp: Vec<f64> = phi.iter().zip(&phi_adj).map(|(a, b)| a * b).collect();
    let norm = favre_average(mesh, &pp);
    phi_adj.iter_mut().for_each(|v| *v /= norm);
    let beta: Vec<f64> = phi.iter().zip(&phi_adj).map(|(a, b)| a * b).collect();
    Ok(SpectralSolution {
        phi,
        phi_adj,
        beta,
        lambda,
        lambda_adj,
        iterations: history.len(),
        history,
        shift: sigma,
    })
}
