use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use porous_upscale::closure::{
    drift_flux_star, effective_dispersion, potential_drift_at, smoluchowski_velocity,
    solve_auxiliary, solve_cell, solve_corrector, CellOptions, CorrectorSettings, PotentialBody,
    PotentialSpec,
};
use porous_upscale::error::Error;
use porous_upscale::flow::{
    prescribe_velocity, rescale_to_peclet, solve_stokes, FlowSettings, PrescribedVelocity,
};
use porous_upscale::fvcore::{scaled_max_divergence, FaceField, SolverSettings};
use porous_upscale::geometry::{
    boundary_integral, build_unit_cell, favre_average, Axis, GeometryKind, GeometrySpec,
    UnitCellMesh,
};
use porous_upscale::spectral::{solve_eigenpairs, SpectralProblem};
use proptest::prelude::*;

fn cell_with_flow(spec: GeometrySpec) -> (UnitCellMesh, FaceField) {
    let mesh = build_unit_cell(&spec).unwrap();
    let flow = solve_stokes(&mesh, [1.0, 0.0], &FlowSettings::default()).unwrap();
    let v = rescale_to_peclet(&flow, &mesh).unwrap().velocity;
    (mesh, v)
}

fn single_disk(porosity: f64, res: usize) -> GeometrySpec {
    let r = ((1.0 - porosity) / std::f64::consts::PI).sqrt();
    GeometrySpec::new(GeometryKind::SingleDisk { radius: r }, res)
}

/// Non-reactive diffusion corrector by a dense direct solve of the graph Laplacian on
/// open faces, with one unknown pinned and the mean removed afterwards.
fn standard_corrector(mesh: &UnitCellMesh) -> [Vec<f64>; 2] {
    let n = mesh.n_dofs();
    let mut lap = DMatrix::<f64>::zeros(n, n);
    let mut rhs = [DVector::<f64>::zeros(n), DVector::<f64>::zeros(n)];
    for f in mesh.faces.iter().filter(|f| f.open) {
        let (a, b) = (mesh.dof_of_cell[f.lo], mesh.dof_of_cell[f.hi]);
        lap[(a, a)] += 1.0;
        lap[(b, b)] += 1.0;
        lap[(a, b)] -= 1.0;
        lap[(b, a)] -= 1.0;
        // Unit gradient along the face normal through a face of length h.
        let k = if f.axis == Axis::X { 0 } else { 1 };
        rhs[k][a] += mesh.h;
        rhs[k][b] -= mesh.h;
    }
    for j in 0..n {
        lap[(0, j)] = 0.0;
    }
    lap[(0, 0)] = 1.0;
    let lu = lap.lu();
    let out: Vec<Vec<f64>> = rhs
        .into_iter()
        .map(|mut r| {
            r[0] = 0.0;
            let x = lu.solve(&r).unwrap();
            let cells = mesh.to_cells(x.as_slice());
            let m = favre_average(mesh, &cells);
            mesh.constant_field(1.0)
                .iter()
                .zip(&cells)
                .map(|(one, c)| c - m * one)
                .collect()
        })
        .collect();
    [out[0].clone(), out[1].clone()]
}

#[test]
fn corrector_matches_standard_solver_without_flow_or_reaction() {
    let (mesh, v) = cell_with_flow(single_disk(0.9, 32));
    let sol = solve_cell(&mesh, &v, 0.0, 0.0, None, &CellOptions::default()).unwrap();
    let oracle = standard_corrector(&mesh);
    for k in 0..2 {
        let d = sol.corrector.chi[k]
            .iter()
            .zip(&oracle[k])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(d <= 1e-8, "component {k}: {d}");
    }
    assert!(sol.wstar.max_abs() < 1e-12);
}

#[test]
fn dilute_disk_dispersion_near_maxwell_estimate() {
    // Superficial (porosity-weighted) value against the dilute estimate (1 - f)/(1 + f).
    let (mesh, v) = cell_with_flow(single_disk(0.9, 64));
    let p = solve_cell(&mesh, &v, 0.0, 0.0, None, &CellOptions::default())
        .unwrap()
        .parameters;
    let maxwell = 0.9 / 1.1;
    assert!(
        (p.porosity * p.dispersion[0][0] / maxwell - 1.0).abs() < 0.05,
        "{:?}",
        p.dispersion
    );
    assert!((p.dispersion[0][0] - p.dispersion[1][1]).abs() < 1e-8);
    assert!(p.lambda.abs() < 1e-10);
}

#[test]
fn full_cell_gives_identity_dispersion() {
    let mesh = build_unit_cell(&GeometrySpec::new(GeometryKind::Full, 12)).unwrap();
    let v = prescribe_velocity(&mesh, PrescribedVelocity::Uniform([0.8, -0.6]))
        .unwrap()
        .velocity;
    for pe in [0.0, 7.0] {
        let sol = solve_cell(&mesh, &v, pe, 0.0, None, &CellOptions::default()).unwrap();
        let p = sol.parameters;
        assert!(p.lambda.abs() < 1e-12);
        assert!(
            (p.dispersion[0][0] - 1.0).abs() < 1e-10 && (p.dispersion[1][1] - 1.0).abs() < 1e-10
        );
        assert!(p.dispersion[0][1].abs() < 1e-10);
        assert!(sol.corrector.chi.iter().flatten().all(|c| c.abs() < 1e-10));
        if pe > 0.0 {
            assert!((p.velocity[0] - 0.8).abs() < 1e-12 && (p.velocity[1] + 0.6).abs() < 1e-12);
            // w* = Pe v face by face
            for (a, b) in sol.wstar.x.iter().zip(&v.x) {
                assert!((a - pe * b).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn poiseuille_channel_has_unit_effective_velocity() {
    let (mesh, v) = cell_with_flow(GeometrySpec::new(
        GeometryKind::Channel {
            wall_fraction: 0.125,
        },
        32,
    ));
    let p = solve_cell(&mesh, &v, 5.0, 0.0, None, &CellOptions::default())
        .unwrap()
        .parameters;
    assert!((p.velocity[0] - 1.0).abs() < 1e-10, "{:?}", p.velocity);
    // Taylor dispersion enhances the streamwise component only.
    assert!(p.dispersion[0][0] > 1.0);
}

#[test]
fn reactive_fcc_closure_invariants() {
    let (mesh, v) = cell_with_flow(GeometrySpec::fcc_with_porosity(0.7, 32));
    for (pe, da) in [(1.0, 1.0), (10.0, 100.0), (100.0, 962.0)] {
        let sol = solve_cell(&mesh, &v, pe, da, None, &CellOptions::default()).unwrap();
        let p = sol.parameters;
        assert!(scaled_max_divergence(&mesh, &sol.wstar) <= 1e-6);
        for g in sol.corrector.gauge {
            assert!(g.abs() <= 1e-10);
        }
        for k in 0..2 {
            let pc: Vec<f64> = sol
                .spectral
                .phi
                .iter()
                .zip(&sol.corrector.chi[k])
                .map(|(a, b)| a * b)
                .collect();
            assert!(favre_average(&mesh, &pc).abs() <= 1e-10);
        }
        let d = p.dispersion;
        assert_eq!(d[0][1], d[1][0]);
        assert!(d[0][0] > 0.0 && d[0][0] * d[1][1] - d[0][1] * d[0][1] > 0.0);
        // Mirror symmetry of the cell about the flow axis.
        assert!(d[0][1].abs() <= 1e-8 * d[0][0], "{d:?}");
        assert!(p.velocity[1].abs() <= 1e-8, "{:?}", p.velocity);
        assert!(p.diagnostics.identity_residual.abs() < 1e-9);
        assert!(p.diagnostics.dispersion_mismatch.is_finite());
    }
}

#[test]
fn zero_peclet_drift_vanishes() {
    let (mesh, v) = cell_with_flow(GeometrySpec::fcc_with_porosity(0.6, 24));
    let p = SpectralProblem::solute(&mesh, &v, 0.0, 50.0);
    let s = solve_eigenpairs(&p).unwrap();
    let w = drift_flux_star(&p, &s);
    assert!(w.max_abs() < 1e-8, "{}", w.max_abs());
}

#[test]
fn colloid_with_zero_mu_reproduces_solute() {
    let (mesh, v) = cell_with_flow(GeometrySpec::fcc_with_porosity(0.7, 24));
    let pot = PotentialSpec::from_grains(&mesh, 1.0, 0.0);
    let a = solve_cell(&mesh, &v, 10.0, 5.0, None, &CellOptions::default())
        .unwrap()
        .parameters;
    let b = solve_cell(&mesh, &v, 10.0, 5.0, Some(&pot), &CellOptions::default())
        .unwrap()
        .parameters;
    assert!((a.lambda - b.lambda).abs() <= 1e-10 * a.lambda);
    for k in 0..2 {
        assert!((a.velocity[k] - b.velocity[k]).abs() <= 1e-10);
        for l in 0..2 {
            assert!((a.dispersion[k][l] - b.dispersion[k][l]).abs() <= 1e-10);
        }
    }
}

#[test]
fn colloid_drift_is_divergence_free() {
    let (mesh, v) = cell_with_flow(GeometrySpec::fcc_with_porosity(0.5, 32));
    for mu in [-4.0, -1.0, 1.0, 4.0] {
        let pot = PotentialSpec::from_grains(&mesh, 1.0, mu);
        let sol = solve_cell(&mesh, &v, 1.0, 0.0, Some(&pot), &CellOptions::default()).unwrap();
        assert!(
            sol.parameters.diagnostics.drift_divergence <= 1e-6,
            "mu {mu}"
        );
        assert!(sol.parameters.dispersion[0][0] > 0.0);
    }
}

#[test]
fn single_disk_potential_drift_is_analytic() {
    let mesh = build_unit_cell(&GeometrySpec::new(
        GeometryKind::SingleDisk { radius: 0.2 },
        32,
    ))
    .unwrap();
    let pot = PotentialSpec {
        bodies: vec![PotentialBody {
            center: [0.5, 0.5],
            reference_length: 0.2,
            strength: 1.0,
        }],
        strength: 2.0,
        mu: 1.0,
        minimum_image: false,
    };
    let drift = smoluchowski_velocity(&mesh, &pot).unwrap();
    // Lambda = s / (r + R) with r the distance to the surface: -grad Lambda has magnitude s / (r + R)^2 toward the centre.
    for f in mesh.faces.iter().filter(|f| f.open) {
        let (dx, dy) = (f.center[0] - 0.5, f.center[1] - 0.5);
        let d = (dx * dx + dy * dy).sqrt();
        let mag = 2.0 / (d * d);
        let exact = match f.axis {
            Axis::X => -mag * dx / d,
            Axis::Y => -mag * dy / d,
        };
        let got = drift.faces.at(f);
        assert!((got - exact).abs() <= 1e-13 * mag, "{got} vs {exact}");
    }
    // Attractive: the normal component into the grain is positive everywhere on the interface.
    assert!(drift.gamma.iter().all(|g| *g > 0.0));
    for (g, gf) in drift.gamma.iter().zip(&mesh.gamma_faces) {
        assert!(
            (g - 2.0 / 0.04).abs() < 0.2 * 50.0,
            "{g} at {:?}",
            gf.midpoint
        );
    }
    let off = PotentialSpec {
        strength: 0.0,
        ..pot.clone()
    };
    let z = smoluchowski_velocity(&mesh, &off).unwrap();
    assert!(z.faces.max_abs() == 0.0 && z.gamma.iter().all(|g| *g == 0.0));
    let bad = PotentialSpec {
        bodies: vec![PotentialBody {
            center: [0.5, 0.5],
            reference_length: 0.0,
            strength: 1.0,
        }],
        ..pot
    };
    assert!(smoluchowski_velocity(&mesh, &bad).is_err());
}

#[test]
fn minimum_image_makes_drift_periodic() {
    let mesh = build_unit_cell(&GeometrySpec::fcc_with_porosity(0.7, 16)).unwrap();
    let pot = PotentialSpec::from_grains(&mesh, 1.0, 1.0);
    for y in [0.1, 0.37, 0.8] {
        let a = potential_drift_at(&mesh, &pot, [0.0, y]);
        let b = potential_drift_at(&mesh, &pot, [1.0, y]);
        assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
    }
}

fn upstream_half(mesh: &UnitCellMesh) -> Vec<f64> {
    mesh.gamma_faces
        .iter()
        .map(|g| if g.normal[0] > 0.0 { 1.0 } else { 0.0 })
        .collect()
}

#[test]
fn auxiliary_problem_cases() {
    let (mesh, v) = cell_with_flow(GeometrySpec::new(
        GeometryKind::SingleDisk { radius: 0.25 },
        32,
    ));
    let s = SolverSettings::default();
    let n = mesh.gamma_faces.len();

    let z = solve_auxiliary(&mesh, &v, 10.0, 10.0, &vec![0.0; n], &s).unwrap();
    assert!(z.psi.iter().all(|p| *p == 0.0) && z.average == 0.0);

    let one = solve_auxiliary(&mesh, &v, 0.0, 3.0, &vec![1.0; n], &s).unwrap();
    for &c in &mesh.cell_of_dof {
        assert!((one.psi[c] - 1.0).abs() < 1e-10);
    }
    assert!((one.average - 1.0).abs() < 1e-10);

    for (pe, da, g) in [
        (10.0, 10.0, upstream_half(&mesh)),
        (1.0, 0.5, (0..n).map(|k| (k % 3) as f64).collect()),
    ] {
        let a = solve_auxiliary(&mesh, &v, pe, da, &g, &s).unwrap();
        let lhs = boundary_integral(&mesh, &a.psi);
        let rhs: f64 = mesh
            .gamma_faces
            .iter()
            .zip(&g)
            .map(|(f, g)| f.length * g)
            .sum();
        assert!(
            (lhs - rhs).abs() <= 10.0 * s.tolerance * rhs.abs() * 1e3,
            "{lhs} vs {rhs}"
        );
        assert!(a.psi.iter().all(|p| *p >= -1e-12));
    }

    assert!(matches!(
        solve_auxiliary(&mesh, &v, 1.0, 0.0, &vec![1.0; n], &s),
        Err(Error::IllPosedAuxiliary)
    ));
    assert!(solve_auxiliary(&mesh, &v, 1.0, 1.0, &[1.0], &s).is_err());
}

#[test]
fn corrector_rejects_unbalanced_forcing() {
    let (mesh, v) = cell_with_flow(GeometrySpec::fcc_with_porosity(0.7, 16));
    let p = SpectralProblem::solute(&mesh, &v, 10.0, 10.0);
    let s = solve_eigenpairs(&p).unwrap();
    let w = drift_flux_star(&p, &s);
    let err = solve_corrector(
        &mesh,
        &s.phi,
        &s.beta,
        &w,
        [1e3, 0.0],
        &CorrectorSettings::default(),
    );
    assert!(matches!(err, Err(Error::Solvability(_))));
}

#[test]
fn corrector_aitken_agrees_with_plain_iteration() {
    let (mesh, v) = cell_with_flow(GeometrySpec::fcc_with_porosity(0.7, 16));
    let a = solve_cell(&mesh, &v, 20.0, 50.0, None, &CellOptions::default()).unwrap();
    let mut opts = CellOptions::default();
    opts.corrector.aitken = false;
    let b = solve_cell(&mesh, &v, 20.0, 50.0, None, &opts).unwrap();
    for k in 0..2 {
        let d = a.corrector.chi[k]
            .iter()
            .zip(&b.corrector.chi[k])
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(d < 1e-8);
        assert!(a.corrector.iterations[k] <= b.corrector.iterations[k]);
    }
}

fn reference_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data/corrector_fcc07_pe100_da962_res32.csv")
}

// Regression of the corrector on the porosity 0.7, Pe = 100, Da = 962 cell.
// Set UPDATE_REFERENCE=1 to rewrite the stored field.
#[test]
fn corrector_regression_against_stored_field() {
    let (mesh, v) = cell_with_flow(GeometrySpec::fcc_with_porosity(0.7, 32));
    let sol = solve_cell(&mesh, &v, 100.0, 962.0, None, &CellOptions::default()).unwrap();
    let chi = &sol.corrector.chi;
    if std::env::var("UPDATE_REFERENCE").is_ok() {
        let mut s = String::from("cell,chi_x,chi_y\n");
        for c in 0..mesh.n_cells() {
            s.push_str(&format!("{c},{:e},{:e}\n", chi[0][c], chi[1][c]));
        }
        std::fs::create_dir_all(reference_path().parent().unwrap()).unwrap();
        std::fs::write(reference_path(), s).unwrap();
    }
    let text = std::fs::read_to_string(reference_path()).expect("stored corrector reference");
    let scale = chi[0]
        .iter()
        .chain(&chi[1])
        .fold(0.0, |m: f64, v| m.max(v.abs()));
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let c: usize = f[0].parse().unwrap();
        let x: f64 = f[1].parse().unwrap();
        let y: f64 = f[2].parse().unwrap();
        assert!(
            (chi[0][c] - x).abs() <= 1e-8 * scale && (chi[1][c] - y).abs() <= 1e-8 * scale,
            "cell {c}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn dispersion_is_symmetric_positive_definite(pe in 0.0f64..30.0, da in 0.0f64..100.0, por in 0.5f64..0.9) {
        let (mesh, v) = cell_with_flow(GeometrySpec::fcc_with_porosity(por, 16));
        let sol = solve_cell(&mesh, &v, pe, da, None, &CellOptions::default()).unwrap();
        let d = effective_dispersion(&mesh, &sol.spectral.beta, &sol.corrector.chi).unwrap();
        prop_assert_eq!(d[0][1], d[1][0]);
        prop_assert!(d[0][0] > 0.0 && d[1][1] > 0.0 && d[0][0] * d[1][1] > d[0][1] * d[0][1]);
        prop_assert!(sol.parameters.diagnostics.drift_divergence <= 1e-6);
        prop_assert!(sol.corrector.gauge.iter().all(|g| g.abs() <= 1e-10));
    }
}
