//! Stage execution for single runs and parameter sweeps.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context, Result};
use porous_upscale::closure::{
    smoluchowski_velocity, solve_cell, CellOptions, CellSolution, EffectiveParameters,
};
use porous_upscale::dns::{
    cell_averages, compare_profiles, developed_window, log_slope, macro_cell_profile,
    rescale_profile, solve_porescale, DnsCase, ProfileError, REFERENCE_CELL,
};
use porous_upscale::flow::{rescale_to_peclet, solve_stokes, tile_velocity, FlowSolution};
use porous_upscale::geometry::{build_chain_mesh, build_unit_cell, UnitCellMesh};
use porous_upscale::macroscale::MacroProblem;
use porous_upscale::spectral::{solve_eigenpairs, ConvergenceRecord, SpectralProblem};
use rayon::prelude::*;

use crate::config::{GridPoint, RunConfig, Stage};
use crate::output::{
    read_results, write_columns, write_convergence, write_manifest, write_results, write_vtk,
    Manifest, ResultRow, VtkFields,
};

const FORCE_DIRECTION: [f64; 2] = [1.0, 0.0];

/// Mesh and unit-mean flow shared by every grid point with the same porosity.
pub struct CellSetup {
    pub mesh: UnitCellMesh,
    pub flow: Option<FlowSolution>,
}

pub fn prepare_cell(
    cfg: &RunConfig,
    porosity: Option<f64>,
    resolution: usize,
) -> Result<CellSetup> {
    let spec = cfg.geometry_spec(porosity, resolution)?;
    let mesh = build_unit_cell(&spec).context("stage mesh")?;
    let flow = if cfg.stages.contains(&Stage::Flow) {
        let raw =
            solve_stokes(&mesh, FORCE_DIRECTION, &cfg.flow_settings()).context("stage flow")?;
        Some(rescale_to_peclet(&raw, &mesh).context("stage flow")?)
    } else {
        None
    };
    Ok(CellSetup { mesh, flow })
}

#[derive(Debug, Clone)]
pub struct DnsReport {
    pub averages: Vec<f64>,
    pub rescaled: Vec<f64>,
    pub macro_rescaled: Vec<f64>,
    pub error: ProfileError,
    pub dns_slope: f64,
    pub macro_root: f64,
}

pub struct PointOutcome {
    pub point: GridPoint,
    pub row: ResultRow,
    pub history: Vec<ConvergenceRecord>,
    pub cell: Option<CellSolution>,
    pub dns: Option<DnsReport>,
}

fn cell_options(cfg: &RunConfig, mesh: &UnitCellMesh, damkohler: f64) -> CellOptions {
    CellOptions {
        spectral: cfg.spectral_options(),
        corrector: cfg.corrector_settings(),
        // No reaction, no interface exchange: the source problem has no solution.
        interface_source: if damkohler > 0.0 {
            cfg.interface_source(mesh, FORCE_DIRECTION)
        } else {
            None
        },
    }
}

fn porosity_of(point: &GridPoint, mesh: &UnitCellMesh) -> f64 {
    point.porosity.unwrap_or(mesh.porosity)
}

/// Runs the configured stages after the flow for one grid point.
pub fn run_point(cfg: &RunConfig, setup: &CellSetup, point: GridPoint) -> Result<PointOutcome> {
    let mesh = &setup.mesh;
    let por = porosity_of(&point, mesh);
    let mut row = ResultRow {
        peclet: point.peclet,
        damkohler: point.damkohler,
        mu: point.mu,
        porosity: por,
        lambda: None,
        velocity: None,
        dispersion: None,
        source_average: None,
        iterations: None,
        diagnostics: String::new(),
    };
    let mut outcome = PointOutcome {
        point,
        row: row.clone(),
        history: Vec::new(),
        cell: None,
        dns: None,
    };
    let Some(flow) = &setup.flow else {
        return Ok(outcome);
    };
    let potential = cfg.potential_spec(mesh, point.mu);

    if cfg.stages.contains(&Stage::Spectral) && !cfg.stages.contains(&Stage::Closure) {
        let drift = match &potential {
            Some(p) => Some(smoluchowski_velocity(mesh, p).context("stage spectral")?),
            None => None,
        };
        let mut problem = match &drift {
            Some(d) => SpectralProblem::colloid(
                mesh,
                &flow.velocity,
                d,
                point.peclet,
                point.damkohler,
                point.mu,
            ),
            None => SpectralProblem::solute(mesh, &flow.velocity, point.peclet, point.damkohler),
        };
        problem.options = cfg.spectral_options();
        let sol = solve_eigenpairs(&problem).context("stage spectral")?;
        row.lambda = Some(sol.lambda);
        row.iterations = Some(sol.iterations);
        row.diagnostics = format!("lambda_adj={:e}", sol.lambda_adj);
        outcome.history = sol.history;
        outcome.row = row;
        return Ok(outcome);
    }

    if !cfg.stages.contains(&Stage::Closure) {
        return Ok(outcome);
    }
    let cell = solve_cell(
        mesh,
        &flow.velocity,
        point.peclet,
        point.damkohler,
        potential.as_ref(),
        &cell_options(cfg, mesh, point.damkohler),
    )
    .context("stage closure")?;
    outcome.row = ResultRow::from_parameters(&cell.parameters, por);
    if point.damkohler == 0.0 && cfg.interface_source(mesh, FORCE_DIRECTION).is_some() {
        outcome.row.source_average = None;
        outcome.row.diagnostics.push_str(";psi=skipped at Da=0");
    }
    outcome.history = cell.spectral.history.clone();

    if cfg.stages.contains(&Stage::Dns) {
        // A fully consumed chain is a property of the case, not a failed run.
        match run_dns(cfg, point, &cell.parameters) {
            Ok(d) => outcome.dns = Some(d),
            Err(e) => outcome.row.diagnostics.push_str(&format!(";dns={e:#}")),
        }
    }
    outcome.cell = Some(cell);
    Ok(outcome)
}

pub fn macro_problem(cfg: &RunConfig, p: &EffectiveParameters) -> MacroProblem {
    MacroProblem {
        advective: p.advective[0],
        dispersion: p.dispersion[0][0],
        lambda: p.lambda.max(0.0),
        source: p.source_average,
        length: cfg.dns.cells as f64,
        inlet: 1.0,
    }
}

/// Resolved chain solve compared against the macro profile of the effective parameters.
pub fn run_dns(
    cfg: &RunConfig,
    point: GridPoint,
    params: &EffectiveParameters,
) -> Result<DnsReport> {
    if cfg.colloid() {
        return Err(anyhow!(
            "the resolved chain solve covers the solute case only; disable the potential"
        ));
    }
    let res = cfg.dns.resolution.unwrap_or(cfg.geometry.resolution);
    let spec = cfg.geometry_spec(point.porosity, res)?;
    let unit = build_unit_cell(&spec)?;
    let flow = rescale_to_peclet(
        &solve_stokes(&unit, FORCE_DIRECTION, &cfg.flow_settings())?,
        &unit,
    )?;
    let n = cfg.dns.cells;
    let chain = build_chain_mesh(&spec, n)?;
    let velocity = tile_velocity(&unit, &flow.velocity, &chain)?;
    let c = solve_porescale(
        &chain,
        &velocity,
        &DnsCase::new(point.peclet, point.damkohler),
        &cfg.linear_settings(),
    )?;
    let averages = cell_averages(&c, &chain);
    let (first, last) = developed_window(n);
    if first > last {
        bail!("{n} cells leave no developed window");
    }
    // Values below the solver's relative accuracy carry no profile information.
    let floor = 100.0 * cfg.linear_settings().tolerance;
    if let Some(v) = averages[first - 1..last]
        .iter()
        .copied()
        .find(|v| !(*v > floor))
    {
        return Err(porous_upscale::Error::FullyConsumed(v).into());
    }
    let mp = macro_problem(cfg, params);
    let m = macro_cell_profile(&mp, n)?;
    let rescaled = rescale_profile(&averages, REFERENCE_CELL)?;
    let macro_rescaled = rescale_profile(&m, REFERENCE_CELL)?;
    let error = compare_profiles(&rescaled, &macro_rescaled, first, last)?;
    let (dns_slope, _) = log_slope(&averages, first, last)?;
    Ok(DnsReport {
        averages,
        rescaled,
        macro_rescaled,
        error,
        dns_slope,
        macro_root: mp.roots().1,
    })
}

fn write_point_files(
    cfg: &RunConfig,
    dir: &Path,
    setup: &CellSetup,
    out: &PointOutcome,
) -> Result<Vec<String>> {
    let mut files = Vec::new();
    let idx = out.point.index;
    if let (Some(cell), true) = (&out.cell, cfg.output.fields) {
        let mesh = &setup.mesh;
        let s = &cell.spectral;
        let w = porous_upscale::fvcore::cell_velocity(mesh, &cell.wstar);
        let v = setup
            .flow
            .as_ref()
            .map(|f| f.cell_velocity.clone())
            .unwrap_or_default();
        let mut fields = VtkFields::default();
        fields.scalars.push(("phi", &s.phi));
        fields.scalars.push(("phi_adjoint", &s.phi_adj));
        fields.scalars.push(("beta", &s.beta));
        fields.scalars.push(("chi_x", &cell.corrector.chi[0]));
        fields.scalars.push(("chi_y", &cell.corrector.chi[1]));
        if let Some(a) = &cell.auxiliary {
            fields.scalars.push(("psi", &a.psi));
        }
        fields.vectors.push(("velocity", &v));
        fields.vectors.push(("drift_star", &w));
        let name = format!("fields_{idx:04}.vtk");
        write_vtk(
            &dir.join(&name),
            &format!("cell fields, point {idx}"),
            mesh,
            &fields,
        )?;
        files.push(name);
    }
    if let (Some(cell), true) = (&out.cell, cfg.stages.contains(&Stage::Macro)) {
        let mp = macro_problem(cfg, &cell.parameters);
        let n = cfg.dns.cells;
        let x: Vec<f64> = (0..=10 * n).map(|k| k as f64 / 10.0).collect();
        let prof = porous_upscale::macroscale::solve_macro_profile(&mp, &x)?;
        let name = format!("macro_profile_{idx:04}.csv");
        write_columns(
            &dir.join(&name),
            &["x", "c"],
            &[
                prof.x.iter().map(|v| format!("{v:e}")).collect(),
                prof.c.iter().map(|v| format!("{v:e}")).collect(),
            ],
        )?;
        files.push(name);
    }
    if let Some(d) = &out.dns {
        let name = format!("dns_profile_{idx:04}.csv");
        let n = d.averages.len();
        write_columns(
            &dir.join(&name),
            &["cell", "average", "rescaled", "macro_rescaled"],
            &[
                (1..=n).map(|k| k.to_string()).collect(),
                d.averages.iter().map(|v| format!("{v:e}")).collect(),
                d.rescaled.iter().map(|v| format!("{v:e}")).collect(),
                d.macro_rescaled.iter().map(|v| format!("{v:e}")).collect(),
            ],
        )?;
        files.push(name);
    }
    Ok(files)
}

fn mesh_summary(mesh: &UnitCellMesh) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    m.insert("resolution".into(), mesh.resolution.to_string());
    m.insert("porosity".into(), format!("{:e}", mesh.porosity));
    m.insert(
        "interface_length".into(),
        format!("{:e}", mesh.gamma_measure()),
    );
    m.insert("fluid_cells".into(), mesh.n_dofs().to_string());
    m
}

fn write_mesh_files(dir: &Path, tag: usize, setup: &CellSetup) -> Result<Vec<String>> {
    let mesh = &setup.mesh;
    let fluid: Vec<f64> = mesh
        .is_fluid
        .iter()
        .map(|&f| if f { 1.0 } else { 0.0 })
        .collect();
    let mut fields = VtkFields::default();
    fields
        .scalars
        .push(("fluid_fraction", &mesh.fluid_fraction));
    fields.scalars.push(("volume", &mesh.volume));
    fields.scalars.push(("fluid", &fluid));
    let v;
    if let Some(f) = &setup.flow {
        v = f.cell_velocity.clone();
        fields.vectors.push(("velocity", &v));
    }
    let name = format!("cell_{tag:02}.vtk");
    write_vtk(&dir.join(&name), "unit cell", mesh, &fields)?;
    Ok(vec![name])
}

pub struct RunSummary {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<(usize, String)>,
    pub dns: Vec<(usize, DnsReport)>,
}

fn resolution(cfg: &RunConfig) -> usize {
    cfg.geometry.resolution
}

/// Sequential pipeline over the grid with field dumps. Errors abort the run.
pub fn run_pipeline(cfg: &RunConfig, dir: &Path, command: &str) -> Result<RunSummary> {
    fs::create_dir_all(dir)?;
    let mut outputs = Vec::new();
    let mut rows = Vec::new();
    let mut histories = Vec::new();
    let mut dns = Vec::new();
    let mut mesh_info = BTreeMap::new();
    let grid = cfg.grid();
    for (tag, por) in cfg.porosities().into_iter().enumerate() {
        let setup = prepare_cell(cfg, por, resolution(cfg))?;
        if cfg.output.fields {
            outputs.extend(write_mesh_files(dir, tag, &setup)?);
        }
        if tag == 0 {
            mesh_info = mesh_summary(&setup.mesh);
        }
        if cfg.stages.len() <= 2 {
            continue;
        }
        for point in grid.iter().filter(|p| p.porosity == por) {
            let out = run_point(cfg, &setup, *point)
                .with_context(|| format!("grid point {}", point.index))?;
            outputs.extend(write_point_files(cfg, dir, &setup, &out)?);
            rows.push(out.row.clone());
            histories.push((point.index, out.history));
            if let Some(d) = out.dns {
                dns.push((point.index, d));
            }
        }
    }
    if !rows.is_empty() {
        write_results(&dir.join("results.csv"), &rows)?;
        let h: Vec<(usize, &[ConvergenceRecord])> =
            histories.iter().map(|(i, h)| (*i, h.as_slice())).collect();
        write_convergence(&dir.join("convergence.csv"), &h)?;
        outputs.push("results.csv".into());
        outputs.push("convergence.csv".into());
    }
    if !dns.is_empty() {
        write_dns_report(&dir.join("dns_report.csv"), &dns)?;
        outputs.push("dns_report.csv".into());
    }
    finish(cfg, dir, command, grid.len(), 0, outputs, mesh_info)?;
    Ok(RunSummary {
        rows,
        failures: Vec::new(),
        dns,
    })
}

fn write_dns_report(path: &Path, dns: &[(usize, DnsReport)]) -> Result<()> {
    write_columns(
        path,
        &[
            "point",
            "max_relative_error",
            "mean_relative_error",
            "dns_log_slope",
            "macro_decay_root",
        ],
        &[
            dns.iter().map(|(i, _)| i.to_string()).collect(),
            dns.iter()
                .map(|(_, d)| format!("{:e}", d.error.max_relative))
                .collect(),
            dns.iter()
                .map(|(_, d)| format!("{:e}", d.error.mean_relative))
                .collect(),
            dns.iter()
                .map(|(_, d)| format!("{:e}", d.dns_slope))
                .collect(),
            dns.iter()
                .map(|(_, d)| format!("{:e}", d.macro_root))
                .collect(),
        ],
    )
}

fn finish(
    cfg: &RunConfig,
    dir: &Path,
    command: &str,
    points: usize,
    failures: usize,
    mut outputs: Vec<String>,
    mesh: BTreeMap<String, String>,
) -> Result<()> {
    outputs.sort();
    outputs.dedup();
    let manifest = Manifest {
        name: cfg.name.clone(),
        command: command.into(),
        config_hash: cfg.hash()?,
        version: env!("CARGO_PKG_VERSION").into(),
        stages: cfg
            .stages
            .iter()
            .map(|s| format!("{s:?}").to_lowercase())
            .collect(),
        points,
        failures,
        outputs,
        mesh,
    };
    write_manifest(dir, &manifest, &cfg.to_toml()?)
}

/// Parallel, resumable sweep. Rows already in `results.csv` are kept; failed points are
/// recorded in `failures.csv` and retried on the next run.
pub fn run_sweep(cfg: &RunConfig, dir: &Path, workers: usize) -> Result<RunSummary> {
    fs::create_dir_all(dir)?;
    let results_path = dir.join("results.csv");
    let existing: Vec<ResultRow> = if results_path.exists() {
        read_results(&results_path)?
    } else {
        Vec::new()
    };
    let grid = cfg.grid();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()?;

    let porosities = cfg.porosities();
    let setups: Vec<Result<CellSetup>> = pool.install(|| {
        porosities
            .par_iter()
            .map(|p| prepare_cell(cfg, *p, resolution(cfg)))
            .collect()
    });
    let mut setup_of = Vec::new();
    for (p, s) in porosities.iter().zip(setups) {
        setup_of.push((*p, s));
    }

    let done: HashSet<String> = existing.iter().map(|r| r.key()).collect();
    let state = Mutex::new((existing, Vec::<(usize, String)>::new()));
    let key_of = |p: &GridPoint, mesh: &UnitCellMesh| {
        ResultRow {
            peclet: p.peclet,
            damkohler: p.damkohler,
            mu: p.mu,
            porosity: porosity_of(p, mesh),
            lambda: None,
            velocity: None,
            dispersion: None,
            source_average: None,
            iterations: None,
            diagnostics: String::new(),
        }
        .key()
    };
    let order = |rows: &mut Vec<ResultRow>| {
        let rank: BTreeMap<String, usize> = grid
            .iter()
            .filter_map(|p| {
                let (_, s) = setup_of.iter().find(|(q, _)| *q == p.porosity)?;
                s.as_ref().ok().map(|s| (key_of(p, &s.mesh), p.index))
            })
            .collect();
        rows.sort_by_key(|r| rank.get(&r.key()).copied().unwrap_or(usize::MAX));
    };

    pool.install(|| {
        grid.par_iter().for_each(|point| {
            let (_, setup) = setup_of
                .iter()
                .find(|(q, _)| *q == point.porosity)
                .expect("setup per porosity");
            let result = match setup {
                Ok(setup) => {
                    if done.contains(&key_of(point, &setup.mesh)) {
                        return;
                    }
                    run_point(cfg, setup, *point).map(|o| o.row)
                }
                Err(e) => Err(anyhow!("{e:#}")),
            };
            let mut st = state.lock().expect("sweep state");
            match result {
                Ok(row) => {
                    st.0.push(row);
                    order(&mut st.0);
                    // Persist after every point so an interrupted sweep can resume.
                    if let Err(e) = write_results(&results_path, &st.0) {
                        st.1.push((point.index, format!("writing results: {e:#}")));
                    }
                }
                Err(e) => st.1.push((point.index, format!("{e:#}"))),
            }
        });
    });

    let (mut rows, mut failures) = state.into_inner().expect("sweep state");
    order(&mut rows);
    failures.sort();
    write_results(&results_path, &rows)?;
    write_columns(
        &dir.join("failures.csv"),
        &["point", "error"],
        &[
            failures.iter().map(|(i, _)| i.to_string()).collect(),
            failures.iter().map(|(_, e)| e.clone()).collect(),
        ],
    )?;
    let mesh_info = setup_of
        .first()
        .and_then(|(_, s)| s.as_ref().ok())
        .map(|s| mesh_summary(&s.mesh))
        .unwrap_or_default();
    finish(
        cfg,
        dir,
        "sweep",
        grid.len(),
        failures.len(),
        vec!["results.csv".into(), "failures.csv".into()],
        mesh_info,
    )?;
    Ok(RunSummary {
        rows,
        failures,
        dns: Vec::new(),
    })
}
