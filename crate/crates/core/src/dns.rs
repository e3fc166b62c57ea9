//! Resolved steady transport over a chain of cells, cell averaging and profile comparison.
//!
//! Cells are numbered from 1 in the public helpers that take a cell number
//! (`reference_cell`, the comparison window), matching how chains are usually
//! described; vectors are indexed from 0, so cell `k` lives at index `k - 1`.

use crate::error::{Error, Result};
use crate::fvcore::{assemble_adr, solve_linear, AdrTerms, FaceField, SolverSettings};
use crate::geometry::UnitCellMesh;
use crate::macroscale::{solve_macro_profile, MacroProblem};

pub const DEFAULT_CHAIN_CELLS: usize = 26;
pub const REFERENCE_CELL: usize = 10;
/// Cells excluded at the outlet end of the comparison window.
pub const OUTLET_MARGIN: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DnsCase {
    pub peclet: f64,
    pub damkohler: f64,
    pub inlet: f64,
}

impl DnsCase {
    pub fn new(peclet: f64, damkohler: f64) -> Self {
        Self {
            peclet,
            damkohler,
            inlet: 1.0,
        }
    }
}

/// Steady solution with Dirichlet inlet, zero-gradient outlet, periodic sides and
/// Robin interfaces. `velocity` is the unit-mean transport velocity on the chain.
pub fn solve_porescale(
    chain: &UnitCellMesh,
    velocity: &FaceField,
    case: &DnsCase,
    settings: &SolverSettings,
) -> Result<Vec<f64>> {
    if chain.periodic_x {
        return Err(Error::InvalidInput(
            "pore-scale solve needs a chain mesh with inlet and outlet".into(),
        ));
    }
    let system = assemble_adr(
        chain,
        &AdrTerms {
            velocity: Some(velocity),
            peclet: case.peclet,
            damkohler: case.damkohler,
            inlet_value: case.inlet,
            scheme: settings.scheme,
            ..Default::default()
        },
    )?;
    let guess = vec![case.inlet; chain.n_dofs()];
    Ok(chain.to_cells(&solve_linear(&system, &guess, settings)?))
}

/// Favre average over each unit cell of the chain, in flow order.
pub fn cell_averages(field: &[f64], chain: &UnitCellMesh) -> Vec<f64> {
    let mut num = vec![0.0; chain.n_tiles];
    let mut den = vec![0.0; chain.n_tiles];
    for &c in &chain.cell_of_dof {
        let t = chain.tile_of_cell(c);
        num[t] += field[c] * chain.volume[c];
        den[t] += chain.volume[c];
    }
    num.iter().zip(&den).map(|(n, d)| n / d).collect()
}

/// Divides every value by the value of cell `reference_cell` (numbered from 1).
pub fn rescale_profile(values: &[f64], reference_cell: usize) -> Result<Vec<f64>> {
    if reference_cell == 0 || reference_cell + 2 > values.len() {
        return Err(Error::InvalidInput(format!(
            "profile of {} cells too short for reference cell {reference_cell}",
            values.len()
        )));
    }
    let r = values[reference_cell - 1];
    if !(r > 1e-300) {
        return Err(Error::FullyConsumed(r));
    }
    Ok(values.iter().map(|v| v / r).collect())
}

/// Inclusive cell numbers (from 1) of the developed region.
pub fn developed_window(n_cells: usize) -> (usize, usize) {
    (REFERENCE_CELL, n_cells.saturating_sub(OUTLET_MARGIN))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileError {
    pub max_relative: f64,
    pub mean_relative: f64,
}

/// Relative error of `candidate` against `reference` over cells `first..=last` (numbered from 1).
pub fn compare_profiles(
    reference: &[f64],
    candidate: &[f64],
    first: usize,
    last: usize,
) -> Result<ProfileError> {
    if first == 0 || first > last || last > reference.len() || last > candidate.len() {
        return Err(Error::InvalidInput(format!(
            "invalid comparison window {first}..={last}"
        )));
    }
    let errs: Vec<f64> = (first - 1..last)
        .map(|i| (candidate[i] - reference[i]).abs() / reference[i].abs().max(1e-300))
        .collect();
    let max_relative = errs.iter().fold(0.0, |m: f64, e| m.max(*e));
    let mean_relative = errs.iter().sum::<f64>() / errs.len() as f64;
    Ok(ProfileError {
        max_relative,
        mean_relative,
    })
}

/// Macro profile sampled at cell midpoints of an `n_cells` chain.
pub fn macro_cell_profile(problem: &MacroProblem, n_cells: usize) -> Result<Vec<f64>> {
    let x: Vec<f64> = (0..n_cells).map(|k| k as f64 + 0.5).collect();
    Ok(solve_macro_profile(problem, &x)?.c)
}

/// Least-squares slope of `ln(values)` over cells `first..=last` (numbered from 1), with the
/// largest deviation of the data from the fitted line.
pub fn log_slope(values: &[f64], first: usize, last: usize) -> Result<(f64, f64)> {
    if first == 0 || first >= last || last > values.len() {
        return Err(Error::InvalidInput(format!(
            "invalid window {first}..={last}"
        )));
    }
    let pts: Vec<(f64, f64)> = (first..=last)
        .map(|k| (k as f64, values[k - 1].ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let dev = pts
        .iter()
        .map(|p| (p.1 - (my + slope * (p.0 - mx))).abs())
        .fold(0.0, f64::max);
    Ok((slope, dev))
}
