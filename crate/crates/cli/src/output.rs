//! CSV rows, legacy VTK dumps and the run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use porous_upscale::closure::EffectiveParameters;
use porous_upscale::geometry::UnitCellMesh;
use porous_upscale::spectral::ConvergenceRecord;
use serde::Serialize;

pub const RESULT_COLUMNS: [&str; 13] = [
    "Pe",
    "Da",
    "mu",
    "porosity",
    "lambda",
    "Vx",
    "Vy",
    "Dxx",
    "Dxy",
    "Dyy",
    "psi_avg",
    "iterations",
    "diagnostics",
];

/// One line of `results.csv`; missing stages leave cells empty.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub peclet: f64,
    pub damkohler: f64,
    pub mu: f64,
    pub porosity: f64,
    pub lambda: Option<f64>,
    pub velocity: Option<[f64; 2]>,
    pub dispersion: Option<[[f64; 2]; 2]>,
    pub source_average: Option<f64>,
    pub iterations: Option<usize>,
    pub diagnostics: String,
}

fn num(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:e}"))
}

impl ResultRow {
    pub fn key(&self) -> String {
        format!(
            "{:e}|{:e}|{:e}|{:e}",
            self.porosity, self.peclet, self.damkohler, self.mu
        )
    }

    pub fn from_parameters(p: &EffectiveParameters, porosity: f64) -> Self {
        let d = &p.diagnostics;
        Self {
            peclet: p.peclet,
            damkohler: p.damkohler,
            mu: p.mu,
            porosity,
            lambda: Some(p.lambda),
            velocity: Some(p.velocity),
            dispersion: Some(p.dispersion),
            source_average: Some(p.source_average),
            iterations: Some(p.iterations),
            diagnostics: format!(
                "lambda_adj={:e};lambda_error={:e};divergence={:e};identity={:e};flux_form_mismatch={:e};gauge={:e}/{:e};corrector_iterations={}/{}",
                d.lambda_adjoint,
                d.lambda_error,
                d.drift_divergence,
                d.identity_residual,
                d.dispersion_mismatch,
                d.gauge[0],
                d.gauge[1],
                p.corrector_iterations[0],
                p.corrector_iterations[1]
            ),
        }
    }

    pub fn record(&self) -> Vec<String> {
        vec![
            format!("{:e}", self.peclet),
            format!("{:e}", self.damkohler),
            format!("{:e}", self.mu),
            format!("{:e}", self.porosity),
            num(self.lambda),
            num(self.velocity.map(|v| v[0])),
            num(self.velocity.map(|v| v[1])),
            num(self.dispersion.map(|d| d[0][0])),
            num(self.dispersion.map(|d| d[0][1])),
            num(self.dispersion.map(|d| d[1][1])),
            num(self.source_average),
            self.iterations.map_or_else(String::new, |i| i.to_string()),
            self.diagnostics.clone(),
        ]
    }

    pub fn parse(rec: &csv::StringRecord) -> Result<Self> {
        let get = |i: usize| rec.get(i).unwrap_or("");
        let opt = |i: usize| -> Result<Option<f64>> {
            let s = get(i);
            if s.is_empty() {
                Ok(None)
            } else {
                Ok(Some(
                    s.parse::<f64>()
                        .with_context(|| format!("bad number {s:?}"))?,
                ))
            }
        };
        let req = |i: usize| -> Result<f64> { opt(i)?.context("missing required column") };
        let vel = match (opt(5)?, opt(6)?) {
            (Some(a), Some(b)) => Some([a, b]),
            _ => None,
        };
        let disp = match (opt(7)?, opt(8)?, opt(9)?) {
            (Some(a), Some(b), Some(c)) => Some([[a, b], [b, c]]),
            _ => None,
        };
        Ok(Self {
            peclet: req(0)?,
            damkohler: req(1)?,
            mu: req(2)?,
            porosity: req(3)?,
            lambda: opt(4)?,
            velocity: vel,
            dispersion: disp,
            source_average: opt(10)?,
            iterations: if get(11).is_empty() {
                None
            } else {
                Some(get(11).parse()?)
            },
            diagnostics: get(12).to_string(),
        })
    }
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(RESULT_COLUMNS)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    r.records().map(|rec| ResultRow::parse(&rec?)).collect()
}

/// Convergence histories, one block per grid point.
pub fn write_convergence(path: &Path, histories: &[(usize, &[ConvergenceRecord])]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "point",
        "iteration",
        "res_phi",
        "res_adj",
        "lambda",
        "lambda_adj",
        "lambda_error",
    ])?;
    for (point, hist) in histories {
        for h in hist.iter() {
            w.write_record([
                point.to_string(),
                h.iteration.to_string(),
                format!("{:e}", h.res_phi),
                format!("{:e}", h.res_adj),
                format!("{:e}", h.lambda),
                format!("{:e}", h.lambda_adj),
                format!("{:e}", h.lambda_error),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes columns of equal length under the given headers.
pub fn write_columns(path: &Path, headers: &[&str], columns: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(headers)?;
    let n = columns.first().map_or(0, |c| c.len());
    for i in 0..n {
        w.write_record(columns.iter().map(|c| c[i].as_str()))?;
    }
    w.flush()?;
    Ok(())
}

/// Cell data for a legacy VTK structured-points file.
#[derive(Default)]
pub struct VtkFields<'a> {
    pub scalars: Vec<(&'a str, &'a [f64])>,
    pub vectors: Vec<(&'a str, &'a [[f64; 2]])>,
}

pub fn write_vtk(path: &Path, title: &str, mesh: &UnitCellMesh, fields: &VtkFields) -> Result<()> {
    let n = mesh.n_cells();
    let mut s = String::new();
    writeln!(s, "# vtk DataFile Version 3.0")?;
    writeln!(s, "{title}")?;
    writeln!(s, "ASCII")?;
    writeln!(s, "DATASET STRUCTURED_POINTS")?;
    writeln!(s, "DIMENSIONS {} {} 1", mesh.nx + 1, mesh.ny + 1)?;
    writeln!(s, "ORIGIN 0 0 0")?;
    writeln!(s, "SPACING {:e} {:e} 1", mesh.h, mesh.h)?;
    writeln!(s, "CELL_DATA {n}")?;
    for (name, data) in &fields.scalars {
        writeln!(s, "SCALARS {name} double 1")?;
        writeln!(s, "LOOKUP_TABLE default")?;
        for v in data.iter() {
            writeln!(s, "{v:e}")?;
        }
    }
    for (name, data) in &fields.vectors {
        writeln!(s, "VECTORS {name} double")?;
        for v in data.iter() {
            writeln!(s, "{:e} {:e} 0", v[0], v[1])?;
        }
    }
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub name: String,
    pub command: String,
    pub config_hash: String,
    pub version: String,
    pub stages: Vec<String>,
    pub points: usize,
    pub failures: usize,
    pub outputs: Vec<String>,
    pub mesh: BTreeMap<String, String>,
}

pub fn write_manifest(dir: &Path, manifest: &Manifest, config_toml: &str) -> Result<()> {
    fs::write(dir.join("manifest.toml"), toml::to_string(manifest)?)?;
    fs::write(dir.join("config.toml"), config_toml)?;
    Ok(())
}
