use porous_upscale::flow::{
    prescribe_velocity, rescale_to_peclet, solve_stokes, tile_velocity, FlowSettings,
    PrescribedVelocity,
};
use porous_upscale::fvcore::{divergence, scaled_max_divergence};
use porous_upscale::geometry::{
    build_chain_mesh, build_unit_cell, favre_average, Axis, GeometryKind, GeometrySpec,
    UnitCellMesh,
};

fn stokes(mesh: &UnitCellMesh, dir: [f64; 2]) -> porous_upscale::flow::FlowSolution {
    solve_stokes(mesh, dir, &FlowSettings::default()).unwrap()
}

#[test]
fn channel_flux_matches_poiseuille() {
    let res = 64;
    let wall = 8.0 / res as f64;
    let mesh = build_unit_cell(&GeometrySpec::new(
        GeometryKind::Channel {
            wall_fraction: wall,
        },
        res,
    ))
    .unwrap();
    let flow = stokes(&mesh, [1.0, 0.0]);
    let gap = 1.0 - 2.0 * wall;
    // Unit force and viscosity: flux per unit depth is gap^3 / 12.
    let analytic = gap.powi(3) / 12.0;
    let nfx = mesh.nfx();
    for i in [0, 17, 40] {
        let flux: f64 = (0..mesh.ny)
            .map(|j| flow.velocity.x[i + nfx * j] * mesh.h)
            .sum();
        assert!(
            (flux / analytic - 1.0).abs() < 0.01,
            "column {i}: {flux} vs {analytic}"
        );
    }
    // Parabolic profile normalised by its peak.
    let peak = analytic * 1.5 / gap;
    for j in 0..mesh.ny {
        let y = (j as f64 + 0.5) * mesh.h;
        let u = flow.velocity.x[5 + nfx * j];
        let exact = if y > wall && y < 1.0 - wall {
            4.0 * peak * (y - wall) * (1.0 - wall - y) / (gap * gap)
        } else {
            0.0
        };
        assert!((u - exact).abs() < 0.02 * peak, "row {j}: {u} vs {exact}");
    }
    assert!(flow.velocity.y.iter().all(|v| v.abs() < 1e-10));
}

#[test]
fn fcc_flow_is_solenoidal_and_no_slip() {
    let mesh = build_unit_cell(&GeometrySpec::fcc_with_porosity(0.7, 32)).unwrap();
    let flow = stokes(&mesh, [1.0, 0.0]);
    assert!(scaled_max_divergence(&mesh, &flow.velocity) < 1e-8);
    for f in &mesh.faces {
        if !f.open {
            assert_eq!(flow.velocity.at(f), 0.0);
        }
    }
    assert!(flow
        .velocity
        .x
        .iter()
        .chain(&flow.velocity.y)
        .all(|v| v.is_finite()));
}

#[test]
fn fcc_flow_is_mirror_symmetric() {
    let res = 32;
    let mesh = build_unit_cell(&GeometrySpec::fcc_with_porosity(0.7, res)).unwrap();
    let v = stokes(&mesh, [1.0, 0.0]).velocity;
    let scale = v.max_abs();
    let nfx = mesh.nfx();
    for j in 0..res {
        let jm = res - 1 - j;
        for i in 0..nfx {
            assert!((v.x[i + nfx * j] - v.x[i + nfx * jm]).abs() < 1e-8 * scale);
        }
    }
    // Reflection in y flips the sign of the y-velocity; y faces sit at j (south side of cell j).
    for j in 0..res {
        let jm = (res - j) % res;
        for i in 0..res {
            assert!((v.y[i + res * j] + v.y[i + res * jm]).abs() < 1e-8 * scale);
        }
    }
}

#[test]
fn fcc_flow_has_fourfold_symmetry() {
    let res = 32;
    let mesh = build_unit_cell(&GeometrySpec::fcc_with_porosity(0.6, res)).unwrap();
    let vx = stokes(&mesh, [1.0, 0.0]).velocity;
    let vy = stokes(&mesh, [0.0, 1.0]).velocity;
    let scale = vx.max_abs();
    let nfx = mesh.nfx();
    // Transpose x <-> y maps x-face (i, j) onto y-face (j, i).
    for j in 0..res {
        for i in 0..res {
            assert!((vx.x[i + nfx * j] - vy.y[j + res * i]).abs() < 1e-8 * scale);
            assert!((vx.y[i + res * j] - vy.x[j + nfx * i]).abs() < 1e-8 * scale);
        }
    }
}

#[test]
fn stokes_is_linear_in_force() {
    let mesh = build_unit_cell(&GeometrySpec::fcc_with_porosity(0.8, 24)).unwrap();
    let a = stokes(&mesh, [1.0, 0.0]).velocity;
    let b = stokes(&mesh, [2.0, 0.0]).velocity;
    let scale = a.max_abs();
    for (p, q) in a.x.iter().chain(&a.y).zip(b.x.iter().chain(&b.y)) {
        assert!((2.0 * p - q).abs() < 1e-8 * scale);
    }
}

#[test]
fn rescale_gives_unit_mean_speed() {
    let mesh = build_unit_cell(&GeometrySpec::fcc_with_porosity(0.9, 24)).unwrap();
    let flow = stokes(&mesh, [1.0, 0.0]);
    let once = rescale_to_peclet(&flow, &mesh).unwrap();
    assert!((once.mean_speed - 1.0).abs() < 1e-12);
    let speed: Vec<f64> = once
        .cell_velocity
        .iter()
        .map(|v| (v[0] * v[0] + v[1] * v[1]).sqrt())
        .collect();
    assert!((favre_average(&mesh, &speed) - 1.0).abs() < 1e-12);
    let twice = rescale_to_peclet(&once, &mesh).unwrap();
    assert_eq!(once.velocity, twice.velocity);

    let full = build_unit_cell(&GeometrySpec::new(GeometryKind::Full, 8)).unwrap();
    let u = prescribe_velocity(&full, PrescribedVelocity::Uniform([3.0, 0.0])).unwrap();
    let r = rescale_to_peclet(&u, &full).unwrap();
    assert!(r.velocity.x.iter().all(|v| (v - 1.0).abs() < 1e-14));
}

#[test]
fn zero_flow_cannot_be_rescaled() {
    let mesh = build_unit_cell(&GeometrySpec::new(GeometryKind::Full, 8)).unwrap();
    let z = prescribe_velocity(&mesh, PrescribedVelocity::Zero).unwrap();
    assert!(rescale_to_peclet(&z, &mesh).is_err());
}

#[test]
fn uniform_velocity_rejected_with_solids() {
    let mesh = build_unit_cell(&GeometrySpec::fcc_with_porosity(0.9, 16)).unwrap();
    assert!(prescribe_velocity(&mesh, PrescribedVelocity::Uniform([1.0, 0.0])).is_err());
}

#[test]
fn tiled_velocity_is_solenoidal_on_chain() {
    let spec = GeometrySpec::fcc_with_porosity(0.8, 16);
    let unit = build_unit_cell(&spec).unwrap();
    let chain = build_chain_mesh(&spec, 4).unwrap();
    let v = rescale_to_peclet(&stokes(&unit, [1.0, 0.0]), &unit)
        .unwrap()
        .velocity;
    let t = tile_velocity(&unit, &v, &chain).unwrap();
    let div = divergence(&chain, &t);
    let scale = t.max_abs() * chain.h;
    assert!(div.iter().all(|d| d.abs() < 1e-8 * scale));
    for f in chain.faces.iter().filter(|f| f.axis == Axis::X && !f.open) {
        assert_eq!(t.at(f), 0.0);
    }
}
