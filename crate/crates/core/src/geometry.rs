//! Periodic unit-cell and chain meshes with embedded circular and slab solids.
//!
//! Fluid fractions and interface segments are computed from exact circle/slab
//! intersections. Cells with fluid fraction below one half are treated as solid
//! for the flux stencil; their fluid volume is folded into a neighbouring fluid
//! cell so that volume integrals still see the exact porosity.

use std::collections::VecDeque;
use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};

/// A circular solid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disk {
    pub center: [f64; 2],
    pub radius: f64,
}

/// Shape of the solid phase inside one unit cell.
#[derive(Debug, Clone, PartialEq)]
pub enum GeometryKind {
    Full,
    /// Two slabs at the bottom and top of the cell, each occupying `wall_fraction` of the height.
    Channel {
        wall_fraction: f64,
    },
    /// One disk at the cell centre.
    SingleDisk {
        radius: f64,
    },
    /// Centre disk plus quarter disks at the four corners.
    Fcc {
        radius: f64,
    },
    MultiDisk(Vec<Disk>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometrySpec {
    pub kind: GeometryKind,
    /// Grid cells per cell length.
    pub resolution: usize,
}

impl GeometrySpec {
    pub fn new(kind: GeometryKind, resolution: usize) -> Self {
        Self { kind, resolution }
    }

    /// FCC cell whose disk radius gives the requested porosity.
    pub fn fcc_with_porosity(porosity: f64, resolution: usize) -> Self {
        Self::new(
            GeometryKind::Fcc {
                radius: fcc_radius(porosity),
            },
            resolution,
        )
    }

    /// Analytic porosity of the unit cell (ignores discretisation).
    pub fn analytic_porosity(&self) -> f64 {
        match &self.kind {
            GeometryKind::Full => 1.0,
            GeometryKind::Channel { wall_fraction } => 1.0 - 2.0 * wall_fraction,
            GeometryKind::SingleDisk { radius } => 1.0 - PI * radius * radius,
            GeometryKind::Fcc { radius } => 1.0 - 2.0 * PI * radius * radius,
            GeometryKind::MultiDisk(d) => {
                1.0 - d.iter().map(|d| PI * d.radius * d.radius).sum::<f64>()
            }
        }
    }
}

/// Radius of the FCC disks for a given porosity, from `porosity = 1 - 2 pi r^2`.
pub fn fcc_radius(porosity: f64) -> f64 {
    ((1.0 - porosity) / (2.0 * PI)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Interior face between two grid cells; `lo` is on the negative side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face {
    pub lo: usize,
    pub hi: usize,
    pub axis: Axis,
    /// Index into the matching component of a [`FaceField`].
    pub slot: usize,
    /// Both neighbours are fluid.
    pub open: bool,
    /// Crosses the periodic seam.
    pub wraps: bool,
    pub center: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum End {
    Inlet,
    Outlet,
}

/// x-end face of a chain mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFace {
    pub cell: usize,
    pub slot: usize,
    pub end: End,
    pub open: bool,
    pub center: [f64; 2],
}

/// Piece of the fluid-solid interface owned by a fluid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaFace {
    pub owner: usize,
    /// Unit normal pointing from fluid into solid.
    pub normal: [f64; 2],
    pub length: f64,
    pub midpoint: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    West,
    East,
    South,
    North,
}

/// One side of a cell lying on the outer boundary of the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExternalFace {
    pub cell: usize,
    pub side: Side,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Body {
    Disk(Disk),
    /// Horizontal slab `y0 <= y <= y1`; `normal_y` is the fluid-to-solid normal of its interface.
    Slab {
        y0: f64,
        y1: f64,
        interface: f64,
        normal_y: f64,
    },
}

#[derive(Debug, Clone)]
pub struct UnitCellMesh {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub resolution: usize,
    pub n_tiles: usize,
    pub periodic_x: bool,
    pub spec: GeometrySpec,
    /// Exact geometric fluid fraction per grid cell.
    pub fluid_fraction: Vec<f64>,
    pub is_fluid: Vec<bool>,
    /// Control volume per cell (zero on solid cells), including folded-in cut volume.
    pub volume: Vec<f64>,
    pub faces: Vec<Face>,
    pub boundary_faces: Vec<BoundaryFace>,
    pub gamma_faces: Vec<GammaFace>,
    pub periodic_pairs: Vec<(ExternalFace, ExternalFace)>,
    pub porosity: f64,
    /// Sum of `volume`, equal to porosity times domain area.
    pub fluid_area: f64,
    /// Unknown index of each cell, `usize::MAX` on solid cells.
    pub dof_of_cell: Vec<usize>,
    pub cell_of_dof: Vec<usize>,
    pub disks: Vec<Disk>,
}

impl UnitCellMesh {
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn n_dofs(&self) -> usize {
        self.cell_of_dof.len()
    }

    /// Number of x-face slots per row.
    pub fn nfx(&self) -> usize {
        if self.periodic_x {
            self.nx
        } else {
            self.nx + 1
        }
    }

    pub fn length_x(&self) -> f64 {
        self.nx as f64 * self.h
    }

    pub fn area(&self) -> f64 {
        self.length_x()
    }

    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    pub fn cell_ij(&self, c: usize) -> (usize, usize) {
        (c % self.nx, c / self.nx)
    }

    pub fn cell_center(&self, c: usize) -> [f64; 2] {
        let (i, j) = self.cell_ij(c);
        [(i as f64 + 0.5) * self.h, (j as f64 + 0.5) * self.h]
    }

    /// Unit-cell tile that contains cell `c` (chain meshes).
    pub fn tile_of_cell(&self, c: usize) -> usize {
        self.cell_ij(c).0 / self.resolution
    }

    pub fn gamma_measure(&self) -> f64 {
        self.gamma_faces.iter().map(|g| g.length).sum()
    }

    /// Open interior faces.
    pub fn open_faces(&self) -> impl Iterator<Item = &Face> {
        self.faces.iter().filter(|f| f.open)
    }

    /// Compress a per-cell field to per-dof storage.
    pub fn to_dofs(&self, f: &[f64]) -> Vec<f64> {
        self.cell_of_dof.iter().map(|&c| f[c]).collect()
    }

    /// Expand per-dof storage to a per-cell field with zeros on solid cells.
    pub fn to_cells(&self, u: &[f64]) -> Vec<f64> {
        let mut f = vec![0.0; self.n_cells()];
        for (k, &c) in self.cell_of_dof.iter().enumerate() {
            f[c] = u[k];
        }
        f
    }

    /// Cell field filled with `value` on fluid cells and zero elsewhere.
    pub fn constant_field(&self, value: f64) -> Vec<f64> {
        self.is_fluid
            .iter()
            .map(|&s| if s { value } else { 0.0 })
            .collect()
    }
}

/// Favre average `(1/eps) * integral over the fluid of f`, normalised by the fluid area.
pub fn favre_average(mesh: &UnitCellMesh, f: &[f64]) -> f64 {
    let mut s = 0.0;
    for &c in &mesh.cell_of_dof {
        s += f[c] * mesh.volume[c];
    }
    s / mesh.fluid_area
}

/// Sum over interface segments of the owner-cell value times segment length.
pub fn boundary_integral(mesh: &UnitCellMesh, f: &[f64]) -> f64 {
    mesh.gamma_faces.iter().map(|g| f[g.owner] * g.length).sum()
}

pub fn build_unit_cell(spec: &GeometrySpec) -> Result<UnitCellMesh> {
    build(spec, 1, true)
}

pub fn build_chain_mesh(spec: &GeometrySpec, n_cells: usize) -> Result<UnitCellMesh> {
    if n_cells == 0 {
        return Err(Error::InvalidGeometry(
            "chain needs at least one cell".into(),
        ));
    }
    build(spec, n_cells, false)
}

fn validate(spec: &GeometrySpec) -> Result<()> {
    if spec.resolution < 8 {
        return Err(Error::InvalidGeometry(format!(
            "resolution {} below 8",
            spec.resolution
        )));
    }
    let bad = |r: f64| !(r > 0.0 && r.is_finite());
    match &spec.kind {
        GeometryKind::Full => {}
        GeometryKind::Channel { wall_fraction } => {
            if !(*wall_fraction > 0.0 && *wall_fraction < 0.5) {
                return Err(Error::InvalidGeometry(format!(
                    "wall fraction {wall_fraction} outside (0, 0.5)"
                )));
            }
        }
        GeometryKind::SingleDisk { radius } | GeometryKind::Fcc { radius } => {
            if bad(*radius) {
                return Err(Error::InvalidGeometry(format!("radius {radius}")));
            }
        }
        GeometryKind::MultiDisk(d) => {
            if d.is_empty() {
                return Err(Error::InvalidGeometry("multi_disk without disks".into()));
            }
            for disk in d {
                if bad(disk.radius) {
                    return Err(Error::InvalidGeometry(format!("radius {}", disk.radius)));
                }
            }
        }
    }
    Ok(())
}

fn bodies(spec: &GeometrySpec, n_tiles: usize, periodic_x: bool) -> Vec<Body> {
    let mut out = Vec::new();
    match &spec.kind {
        GeometryKind::Full => {}
        GeometryKind::Channel { wall_fraction: w } => {
            out.push(Body::Slab {
                y0: 0.0,
                y1: *w,
                interface: *w,
                normal_y: -1.0,
            });
            out.push(Body::Slab {
                y0: 1.0 - w,
                y1: 1.0,
                interface: 1.0 - w,
                normal_y: 1.0,
            });
        }
        GeometryKind::SingleDisk { radius } => {
            for k in 0..n_tiles {
                out.push(Body::Disk(Disk {
                    center: [k as f64 + 0.5, 0.5],
                    radius: *radius,
                }));
            }
        }
        GeometryKind::Fcc { radius } => {
            for k in 0..n_tiles {
                out.push(Body::Disk(Disk {
                    center: [k as f64 + 0.5, 0.5],
                    radius: *radius,
                }));
            }
            let corners = if periodic_x { n_tiles } else { n_tiles + 1 };
            for k in 0..corners {
                out.push(Body::Disk(Disk {
                    center: [k as f64, 0.0],
                    radius: *radius,
                }));
            }
        }
        GeometryKind::MultiDisk(list) => {
            for k in 0..n_tiles {
                for d in list {
                    let cx = d.center[0].rem_euclid(1.0) + k as f64;
                    let cy = d.center[1].rem_euclid(1.0);
                    out.push(Body::Disk(Disk {
                        center: [cx, cy],
                        radius: d.radius,
                    }));
                }
            }
        }
    }
    out
}

fn image_shifts(lx: f64, periodic_x: bool) -> Vec<[f64; 2]> {
    let xs: Vec<f64> = if periodic_x {
        vec![-lx, 0.0, lx]
    } else {
        vec![0.0]
    };
    let mut out = Vec::new();
    for &sx in &xs {
        for sy in [-1.0, 0.0, 1.0] {
            out.push([sx, sy]);
        }
    }
    out
}

fn check_overlaps(disks: &[Disk], lx: f64, periodic_x: bool) -> Result<()> {
    let shifts = image_shifts(lx, periodic_x);
    for (a, da) in disks.iter().enumerate() {
        for (b, db) in disks.iter().enumerate().skip(a) {
            for s in &shifts {
                if a == b && s[0] == 0.0 && s[1] == 0.0 {
                    continue;
                }
                let dx = db.center[0] + s[0] - da.center[0];
                let dy = db.center[1] + s[1] - da.center[1];
                if (dx * dx + dy * dy).sqrt() <= da.radius + db.radius {
                    return Err(Error::SolidOverlap(format!(
                        "disks at {:?} and {:?} touch or overlap",
                        da.center, db.center
                    )));
                }
            }
        }
    }
    Ok(())
}

fn build(spec: &GeometrySpec, n_tiles: usize, periodic_x: bool) -> Result<UnitCellMesh> {
    validate(spec)?;
    let res = spec.resolution;
    let nx = res * n_tiles;
    let ny = res;
    let h = 1.0 / res as f64;
    let lx = n_tiles as f64;
    let bodies = bodies(spec, n_tiles, periodic_x);
    let disks: Vec<Disk> = bodies
        .iter()
        .filter_map(|b| {
            if let Body::Disk(d) = b {
                Some(*d)
            } else {
                None
            }
        })
        .collect();
    check_overlaps(&disks, lx, periodic_x)?;

    let ncell = nx * ny;
    let mut solid_area = vec![0.0; ncell];
    let mut arcs: Vec<(usize, GammaFace)> = Vec::new();
    let shifts = image_shifts(lx, periodic_x);

    for body in &bodies {
        match *body {
            Body::Disk(d) => {
                for s in &shifts {
                    let c = [d.center[0] + s[0], d.center[1] + s[1]];
                    let r = d.radius;
                    if c[0] + r <= 0.0 || c[0] - r >= lx || c[1] + r <= 0.0 || c[1] - r >= 1.0 {
                        continue;
                    }
                    let i0 = (((c[0] - r) / h).floor().max(0.0)) as usize;
                    let i1 = (((c[0] + r) / h).floor() as isize).min(nx as isize - 1) as usize;
                    let j0 = (((c[1] - r) / h).floor().max(0.0)) as usize;
                    let j1 = (((c[1] + r) / h).floor() as isize).min(ny as isize - 1) as usize;
                    for j in j0..=j1 {
                        for i in i0..=i1 {
                            let rect = [
                                i as f64 * h,
                                (i + 1) as f64 * h,
                                j as f64 * h,
                                (j + 1) as f64 * h,
                            ];
                            let cell = i + nx * j;
                            solid_area[cell] += disk_rect_area(c, r, rect);
                            for (len, ang) in arc_pieces(c, r, rect) {
                                let (sn, cs) = ang.sin_cos();
                                arcs.push((
                                    cell,
                                    GammaFace {
                                        owner: cell,
                                        normal: [-cs, -sn],
                                        length: len,
                                        midpoint: [c[0] + r * cs, c[1] + r * sn],
                                    },
                                ));
                            }
                        }
                    }
                }
            }
            Body::Slab {
                y0,
                y1,
                interface,
                normal_y,
            } => {
                for j in 0..ny {
                    let lo = (j as f64 * h).max(y0);
                    let hi = ((j + 1) as f64 * h).min(y1);
                    if hi > lo {
                        for i in 0..nx {
                            solid_area[i + nx * j] += (hi - lo) * h;
                        }
                    }
                }
                for i in 0..nx {
                    // Cell on the fluid side of the interface line.
                    let yf = interface - normal_y * 1e-9 * h;
                    let j = ((yf / h).floor() as isize).clamp(0, ny as isize - 1) as usize;
                    arcs.push((
                        i + nx * j,
                        GammaFace {
                            owner: i + nx * j,
                            normal: [0.0, normal_y],
                            length: h,
                            midpoint: [(i as f64 + 0.5) * h, interface],
                        },
                    ));
                }
            }
        }
    }

    let h2 = h * h;
    // Snap round-off from summing image contributions.
    let fluid_fraction: Vec<f64> = solid_area
        .iter()
        .map(|a| {
            let f = (1.0 - a / h2).clamp(0.0, 1.0);
            if f < 1e-12 {
                0.0
            } else if f > 1.0 - 1e-12 {
                1.0
            } else {
                f
            }
        })
        .collect();
    let is_fluid: Vec<bool> = fluid_fraction.iter().map(|&f| f >= 0.5).collect();
    if !is_fluid.iter().any(|&s| s) {
        return Err(Error::InvalidGeometry("no fluid cells".into()));
    }

    const NEIGHBOURS: [(isize, isize); 8] = [
        (1, 0),
        (-1, 0),
        (0, 1),
        (0, -1),
        (1, 1),
        (1, -1),
        (-1, 1),
        (-1, -1),
    ];
    let step = |c: usize, di: isize, dj: isize| -> Option<usize> {
        let (i, j) = ((c % nx) as isize, (c / nx) as isize);
        let mut ni = i + di;
        let nj = (j + dj).rem_euclid(ny as isize);
        if periodic_x {
            ni = ni.rem_euclid(nx as isize);
        } else if ni < 0 || ni >= nx as isize {
            return None;
        }
        Some(ni as usize + nx * nj as usize)
    };

    // Interface ownership: move segments out of solid-classified cells along -n.
    let mut gamma_faces = Vec::with_capacity(arcs.len());
    for (cell, mut g) in arcs {
        if is_fluid[cell] {
            gamma_faces.push(g);
            continue;
        }
        let back = [-g.normal[0], -g.normal[1]];
        let mut cand: Vec<((isize, isize), f64)> = NEIGHBOURS
            .iter()
            .copied()
            .map(|(di, dj)| {
                let len = ((di * di + dj * dj) as f64).sqrt();
                ((di, dj), (di as f64 * back[0] + dj as f64 * back[1]) / len)
            })
            .collect();
        cand.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let owner = cand
            .iter()
            .filter_map(|&((di, dj), _)| step(cell, di, dj))
            .find(|&n| is_fluid[n]);
        match owner {
            Some(o) => {
                g.owner = o;
                gamma_faces.push(g);
            }
            None => {
                return Err(Error::InvalidGeometry(format!(
                    "interface segment at {:?} has no fluid owner",
                    g.midpoint
                )))
            }
        }
    }

    // Fold cut volume of solid-classified cells into the best fluid neighbour.
    let mut volume: Vec<f64> = (0..ncell)
        .map(|c| {
            if is_fluid[c] {
                fluid_fraction[c] * h2
            } else {
                0.0
            }
        })
        .collect();
    for c in 0..ncell {
        if is_fluid[c] || fluid_fraction[c] <= 0.0 {
            continue;
        }
        let pick = |offs: &[(isize, isize)]| -> Option<usize> {
            let mut best: Option<usize> = None;
            for &(di, dj) in offs {
                if let Some(n) = step(c, di, dj) {
                    if is_fluid[n] && best.map_or(true, |b| fluid_fraction[n] > fluid_fraction[b]) {
                        best = Some(n);
                    }
                }
            }
            best
        };
        let target = pick(&[(1, 0), (-1, 0), (0, 1), (0, -1)])
            .or_else(|| pick(&[(1, 1), (1, -1), (-1, 1), (-1, -1)]));
        match target {
            Some(t) => volume[t] += fluid_fraction[c] * h2,
            None => {
                return Err(Error::InvalidGeometry(format!(
                    "cut cell {c} (fraction {}) has no fluid neighbour",
                    fluid_fraction[c]
                )))
            }
        }
    }

    // Faces.
    let nfx = if periodic_x { nx } else { nx + 1 };
    let mut faces = Vec::new();
    let mut boundary_faces = Vec::new();
    for j in 0..ny {
        for i in 0..nfx {
            let slot = i + nfx * j;
            let center = [i as f64 * h, (j as f64 + 0.5) * h];
            if !periodic_x && (i == 0 || i == nx) {
                let (cell, end) = if i == 0 {
                    (nx * j, End::Inlet)
                } else {
                    (nx - 1 + nx * j, End::Outlet)
                };
                boundary_faces.push(BoundaryFace {
                    cell,
                    slot,
                    end,
                    open: is_fluid[cell],
                    center,
                });
                continue;
            }
            let lo = (i + nx - 1) % nx + nx * j;
            let hi = i + nx * j;
            faces.push(Face {
                lo,
                hi,
                axis: Axis::X,
                slot,
                open: is_fluid[lo] && is_fluid[hi],
                wraps: i == 0,
                center,
            });
        }
    }
    for j in 0..ny {
        for i in 0..nx {
            let lo = i + nx * ((j + ny - 1) % ny);
            let hi = i + nx * j;
            faces.push(Face {
                lo,
                hi,
                axis: Axis::Y,
                slot: i + nx * j,
                open: is_fluid[lo] && is_fluid[hi],
                wraps: j == 0,
                center: [(i as f64 + 0.5) * h, j as f64 * h],
            });
        }
    }

    let mut periodic_pairs = Vec::new();
    if periodic_x {
        for j in 0..ny {
            periodic_pairs.push((
                ExternalFace {
                    cell: nx * j,
                    side: Side::West,
                },
                ExternalFace {
                    cell: nx - 1 + nx * j,
                    side: Side::East,
                },
            ));
        }
    }
    for i in 0..nx {
        periodic_pairs.push((
            ExternalFace {
                cell: i,
                side: Side::South,
            },
            ExternalFace {
                cell: i + nx * (ny - 1),
                side: Side::North,
            },
        ));
    }

    let mut dof_of_cell = vec![usize::MAX; ncell];
    let mut cell_of_dof = Vec::new();
    for c in 0..ncell {
        if is_fluid[c] {
            dof_of_cell[c] = cell_of_dof.len();
            cell_of_dof.push(c);
        }
    }

    // Connectivity through open faces.
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); ncell];
    for f in faces.iter().filter(|f| f.open) {
        adj[f.lo].push(f.hi);
        adj[f.hi].push(f.lo);
    }
    let mut comp = vec![usize::MAX; ncell];
    let mut components = 0;
    for &start in &cell_of_dof {
        if comp[start] != usize::MAX {
            continue;
        }
        let mut queue = VecDeque::from([start]);
        comp[start] = components;
        while let Some(c) = queue.pop_front() {
            for &n in &adj[c] {
                if comp[n] == usize::MAX {
                    comp[n] = components;
                    queue.push_back(n);
                }
            }
        }
        components += 1;
    }
    if components > 1 {
        return Err(Error::FluidNotConnected { components });
    }

    let porosity = fluid_fraction.iter().sum::<f64>() * h2 / lx;
    let fluid_area = volume.iter().sum::<f64>();

    Ok(UnitCellMesh {
        nx,
        ny,
        h,
        resolution: res,
        n_tiles,
        periodic_x,
        spec: spec.clone(),
        fluid_fraction,
        is_fluid,
        volume,
        faces,
        boundary_faces,
        gamma_faces,
        periodic_pairs,
        porosity,
        fluid_area,
        dof_of_cell,
        cell_of_dof,
        disks,
    })
}

/// Antiderivative of `sqrt(r^2 - u^2)`.
fn semicircle_prim(u: f64, r: f64) -> f64 {
    let u = u.clamp(-r, r);
    0.5 * (u * (r * r - u * u).max(0.0).sqrt() + r * r * (u / r).clamp(-1.0, 1.0).asin())
}

/// Area of the origin-centred disk of radius `r` with `u <= x` and `v <= y`.
fn lower_left_area(x: f64, y: f64, r: f64) -> f64 {
    if x <= -r || y <= -r {
        return 0.0;
    }
    let x = x.min(r);
    let p = |u: f64| semicircle_prim(u, r);
    if y >= r {
        return 2.0 * (p(x) - p(-r));
    }
    let a = (r * r - y * y).sqrt();
    let full = |lo: f64, hi: f64| {
        let hi = hi.min(x);
        if hi <= lo {
            0.0
        } else {
            2.0 * (p(hi) - p(lo))
        }
    };
    let capped = |lo: f64, hi: f64| {
        let hi = hi.min(x);
        if hi <= lo {
            0.0
        } else {
            y * (hi - lo) + p(hi) - p(lo)
        }
    };
    if y >= 0.0 {
        full(-r, -a) + capped(-a, a) + full(a, r)
    } else {
        capped(-a, a)
    }
}

/// Exact area of disk `(c, r)` intersected with `[x0, x1] x [y0, y1]`.
pub(crate) fn disk_rect_area(c: [f64; 2], r: f64, rect: [f64; 4]) -> f64 {
    let x0 = rect[0] - c[0];
    let x1 = rect[1] - c[0];
    let y0 = rect[2] - c[1];
    let y1 = rect[3] - c[1];
    let a = lower_left_area(x1, y1, r) - lower_left_area(x0, y1, r) - lower_left_area(x1, y0, r)
        + lower_left_area(x0, y0, r);
    a.max(0.0)
}

/// Arcs of the circle `(c, r)` inside the half-open rectangle, as (length, mid-angle).
pub(crate) fn arc_pieces(c: [f64; 2], r: f64, rect: [f64; 4]) -> Vec<(f64, f64)> {
    let mut ang = vec![0.0, TAU];
    for xl in [rect[0], rect[1]] {
        let t = (xl - c[0]) / r;
        if t.abs() < 1.0 {
            let a = t.acos();
            ang.push(a);
            ang.push(TAU - a);
        }
    }
    for yl in [rect[2], rect[3]] {
        let t = (yl - c[1]) / r;
        if t.abs() < 1.0 {
            let a = t.asin();
            ang.push(a.rem_euclid(TAU));
            ang.push((PI - a).rem_euclid(TAU));
        }
    }
    ang.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ang.dedup();
    let inside = |t: f64| {
        let x = c[0] + r * t.cos();
        let y = c[1] + r * t.sin();
        x >= rect[0] && x < rect[1] && y >= rect[2] && y < rect[3]
    };
    let mut pieces: Vec<(f64, f64, f64)> = Vec::new();
    for w in ang.windows(2) {
        if w[1] - w[0] <= 0.0 {
            continue;
        }
        if inside(0.5 * (w[0] + w[1])) {
            pieces.push((w[0], w[1], 0.0));
        }
    }
    // Join a piece ending at 2pi with one starting at 0.
    if pieces.len() >= 2 && pieces[0].0 == 0.0 && pieces[pieces.len() - 1].1 == TAU {
        let last = pieces.pop().unwrap();
        pieces[0].0 = last.0 - TAU;
    }
    pieces
        .into_iter()
        .map(|(a, b, _)| (r * (b - a), (0.5 * (a + b)).rem_euclid(TAU)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_rect_area_full_and_quarter() {
        let r = 0.3;
        let a = disk_rect_area([0.5, 0.5], r, [0.0, 1.0, 0.0, 1.0]);
        assert!((a - PI * r * r).abs() < 1e-14);
        let q = disk_rect_area([0.0, 0.0], r, [0.0, 1.0, 0.0, 1.0]);
        assert!((q - 0.25 * PI * r * r).abs() < 1e-14);
        let half = disk_rect_area([0.5, 0.5], r, [0.0, 0.5, 0.0, 1.0]);
        assert!((half - 0.5 * PI * r * r).abs() < 1e-14);
    }

    #[test]
    fn disk_rect_area_matches_quadrature() {
        let c = [0.31, 0.47];
        let r = 0.2;
        let rect = [0.25, 0.4, 0.55, 0.7];
        let n = 2000;
        let mut acc = 0.0;
        for a in 0..n {
            for b in 0..n {
                let x = rect[0] + (a as f64 + 0.5) * (rect[1] - rect[0]) / n as f64;
                let y = rect[2] + (b as f64 + 0.5) * (rect[3] - rect[2]) / n as f64;
                if (x - c[0]).powi(2) + (y - c[1]).powi(2) <= r * r {
                    acc += 1.0;
                }
            }
        }
        let quad = acc / (n * n) as f64 * (rect[1] - rect[0]) * (rect[3] - rect[2]);
        assert!((disk_rect_area(c, r, rect) - quad).abs() < 1e-5);
    }

    #[test]
    fn arcs_cover_circle() {
        let c = [0.53, 0.41];
        let r = 0.27;
        let n = 7;
        let h = 1.0 / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let rect = [
                    i as f64 * h,
                    (i + 1) as f64 * h,
                    j as f64 * h,
                    (j + 1) as f64 * h,
                ];
                total += arc_pieces(c, r, rect).iter().map(|p| p.0).sum::<f64>();
            }
        }
        assert!((total - TAU * r).abs() < 1e-12);
    }
}
