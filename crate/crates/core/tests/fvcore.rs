use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::OnceLock;

use porous_upscale::flow::{
    prescribe_velocity, rescale_to_peclet, solve_stokes, FlowSettings, PrescribedVelocity,
};
use porous_upscale::fvcore::{
    assemble_adr, bicgstab, divergence, interpolate_to_faces, solve_with_rhs, AdrTerms,
    AdvectionScheme, FaceField, LinearSystem, SolverSettings,
};
use porous_upscale::geometry::{build_unit_cell, GeometryKind, GeometrySpec, UnitCellMesh};
use proptest::prelude::*;

fn fcc_case() -> &'static (UnitCellMesh, FaceField) {
    static CASE: OnceLock<(UnitCellMesh, FaceField)> = OnceLock::new();
    CASE.get_or_init(|| {
        let mesh = build_unit_cell(&GeometrySpec::fcc_with_porosity(0.7, 16)).unwrap();
        let flow = solve_stokes(&mesh, [1.0, 0.0], &FlowSettings::default()).unwrap();
        let v = rescale_to_peclet(&flow, &mesh).unwrap().velocity;
        (mesh, v)
    })
}

fn entries(sys: &LinearSystem) -> HashMap<(usize, usize), f64> {
    let mut m = HashMap::new();
    for (v, (r, c)) in sys.matrix.iter() {
        *m.entry((r, c)).or_insert(0.0) += *v;
    }
    m
}

#[test]
fn pure_diffusion_has_constant_null_vector() {
    let (mesh, _) = fcc_case();
    let sys = assemble_adr(mesh, &AdrTerms::default()).unwrap();
    let ones = vec![1.0; mesh.n_dofs()];
    let r = sys.apply(&ones);
    assert!(r.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn reversed_velocity_gives_transpose() {
    let (mesh, v) = fcc_case();
    let neg = v.scaled(-1.0);
    for da in [0.0, 3.0] {
        let fwd = entries(
            &assemble_adr(
                mesh,
                &AdrTerms {
                    velocity: Some(v),
                    peclet: 7.0,
                    damkohler: da,
                    ..Default::default()
                },
            )
            .unwrap(),
        );
        let bwd = entries(
            &assemble_adr(
                mesh,
                &AdrTerms {
                    velocity: Some(&neg),
                    peclet: 7.0,
                    damkohler: da,
                    ..Default::default()
                },
            )
            .unwrap(),
        );
        let mut keys: Vec<_> = fwd.keys().chain(bwd.keys()).copied().collect();
        keys.sort_unstable();
        keys.dedup();
        for (r, c) in keys {
            let a = fwd.get(&(c, r)).copied().unwrap_or(0.0);
            let b = bwd.get(&(r, c)).copied().unwrap_or(0.0);
            assert!((a - b).abs() < 1e-12, "entry ({r},{c}): {a} vs {b}");
        }
    }
}

#[test]
fn upwind_matrix_is_m_matrix() {
    let (mesh, v) = fcc_case();
    let sys = assemble_adr(
        mesh,
        &AdrTerms {
            velocity: Some(v),
            peclet: 50.0,
            damkohler: 10.0,
            ..Default::default()
        },
    )
    .unwrap();
    for (val, (r, c)) in sys.matrix.iter() {
        if r == c {
            assert!(*val > 0.0);
        } else {
            assert!(*val <= 0.0);
        }
    }
}

/// Error of `-lap u + pe * a . grad u + u = f` on the full periodic cell with
/// `u = sin(2 pi x) cos(2 pi y)`.
fn manufactured_error(res: usize, pe: f64, scheme: AdvectionScheme) -> f64 {
    let mesh = build_unit_cell(&GeometrySpec::new(GeometryKind::Full, res)).unwrap();
    let a = [0.6, 0.8];
    let vel = prescribe_velocity(&mesh, PrescribedVelocity::Uniform(a))
        .unwrap()
        .velocity;
    let k = 2.0 * PI;
    let exact = |x: f64, y: f64| (k * x).sin() * (k * y).cos();
    let source = |x: f64, y: f64| {
        let ux = k * (k * x).cos() * (k * y).cos();
        let uy = -k * (k * x).sin() * (k * y).sin();
        (2.0 * k * k + 1.0) * exact(x, y) + pe * (a[0] * ux + a[1] * uy)
    };
    let sys = assemble_adr(
        &mesh,
        &AdrTerms {
            velocity: Some(&vel),
            peclet: pe,
            shift: 1.0,
            scheme,
            ..Default::default()
        },
    )
    .unwrap();
    // Cell averages of the source via 3-point Gauss in each direction.
    let g = [
        (-(0.6f64).sqrt(), 5.0 / 9.0),
        (0.0, 8.0 / 9.0),
        ((0.6f64).sqrt(), 5.0 / 9.0),
    ];
    let h = mesh.h;
    let rhs: Vec<f64> = mesh
        .cell_of_dof
        .iter()
        .map(|&c| {
            let [xc, yc] = mesh.cell_center(c);
            let mut s = 0.0;
            for (gx, wx) in g {
                for (gy, wy) in g {
                    s += wx * wy * source(xc + 0.5 * h * gx, yc + 0.5 * h * gy);
                }
            }
            s * 0.25 * mesh.volume[c]
        })
        .collect();
    let settings = SolverSettings {
        tolerance: 1e-13,
        scheme,
        ..Default::default()
    };
    let u = solve_with_rhs(&sys, &rhs, &vec![0.0; mesh.n_dofs()], &settings).unwrap();
    mesh.cell_of_dof
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let [x, y] = mesh.cell_center(c);
            (u[k] - exact(x, y)).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn manufactured_diffusion_is_second_order() {
    let e1 = manufactured_error(16, 0.0, AdvectionScheme::Upwind);
    let e2 = manufactured_error(32, 0.0, AdvectionScheme::Upwind);
    let e3 = manufactured_error(64, 0.0, AdvectionScheme::Upwind);
    assert!(
        (e1 / e2).log2() > 1.9 && (e2 / e3).log2() > 1.9,
        "{e1} {e2} {e3}"
    );
}

#[test]
fn manufactured_upwind_is_first_order() {
    let e1 = manufactured_error(32, 5.0, AdvectionScheme::Upwind);
    let e2 = manufactured_error(64, 5.0, AdvectionScheme::Upwind);
    let e3 = manufactured_error(128, 5.0, AdvectionScheme::Upwind);
    assert!((e2 / e3).log2() > 0.9, "{e1} {e2} {e3}");
}

#[test]
fn manufactured_central_is_second_order() {
    let e1 = manufactured_error(16, 5.0, AdvectionScheme::CentralDeferred);
    let e2 = manufactured_error(32, 5.0, AdvectionScheme::CentralDeferred);
    let e3 = manufactured_error(64, 5.0, AdvectionScheme::CentralDeferred);
    assert!((e2 / e3).log2() > 1.8, "{e1} {e2} {e3}");
}

#[test]
fn robin_source_balances_reaction() {
    // With g = 1 on every interface segment the constant 1 solves the Robin problem.
    let (mesh, v) = fcc_case();
    let g = vec![1.0; mesh.gamma_faces.len()];
    let sys = assemble_adr(
        mesh,
        &AdrTerms {
            velocity: Some(v),
            peclet: 3.0,
            damkohler: 4.0,
            robin_source: Some(&g),
            ..Default::default()
        },
    )
    .unwrap();
    let r = sys.apply(&vec![1.0; mesh.n_dofs()]);
    for (a, b) in r.iter().zip(&sys.rhs) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn face_interpolation_of_constant() {
    let (mesh, _) = fcc_case();
    let f = interpolate_to_faces(mesh, &mesh.constant_field(2.5));
    for face in &mesh.faces {
        if mesh.is_fluid[face.lo] || mesh.is_fluid[face.hi] {
            assert_eq!(f.at(face), 2.5);
        }
    }
}

#[test]
fn bicgstab_solves_nonsymmetric_system() {
    let (mesh, v) = fcc_case();
    let sys = assemble_adr(
        mesh,
        &AdrTerms {
            velocity: Some(v),
            peclet: 20.0,
            damkohler: 1.0,
            ..Default::default()
        },
    )
    .unwrap();
    let x_true: Vec<f64> = (0..mesh.n_dofs())
        .map(|k| 1.0 + (k as f64 * 0.37).sin())
        .collect();
    let b = sys.apply(&x_true);
    let mut x = vec![0.0; b.len()];
    bicgstab(&sys.matrix, &b, &mut x, 1e-13, 10_000).unwrap();
    let err = x
        .iter()
        .zip(&x_true)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-9, "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn conservative_without_reaction(
        seed in proptest::collection::vec(-1.0f64..1.0, 64),
        pe in 0.0f64..100.0,
        central in any::<bool>(),
    ) {
        let (mesh, v) = fcc_case();
        let scheme = if central { AdvectionScheme::CentralDeferred } else { AdvectionScheme::Upwind };
        let sys = assemble_adr(mesh, &AdrTerms { velocity: Some(v), peclet: pe, scheme, ..Default::default() }).unwrap();
        let u: Vec<f64> = (0..mesh.n_dofs()).map(|k| seed[k % seed.len()] + 0.01 * k as f64).collect();
        let total: f64 = sys.apply(&u).iter().sum();
        let scale: f64 = u.iter().map(|x| x.abs()).sum::<f64>() * (1.0 + pe);
        prop_assert!(total.abs() < 1e-12 * scale);
    }

    #[test]
    fn stream_function_velocity_is_solenoidal(amp in 0.1f64..3.0, phase in 0.0f64..6.28) {
        let mesh = build_unit_cell(&GeometrySpec::new(GeometryKind::Full, 16)).unwrap();
        let psi = move |x: f64, y: f64| amp * (2.0 * PI * x + phase).sin() * (2.0 * PI * y).cos();
        let flow = prescribe_velocity(&mesh, PrescribedVelocity::StreamFunction(&psi)).unwrap();
        let div = divergence(&mesh, &flow.velocity);
        prop_assert!(div.iter().all(|d| d.abs() < 1e-8));
    }
}
