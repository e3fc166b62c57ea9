//! Run configuration read from TOML.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use porous_upscale::closure::{CorrectorSettings, PotentialSpec};
use porous_upscale::flow::FlowSettings;
use porous_upscale::fvcore::{AdvectionScheme, SolverSettings};
use porous_upscale::geometry::{fcc_radius, Disk, GeometryKind, GeometrySpec, UnitCellMesh};
use porous_upscale::spectral::{RayleighUpdate, SpectralOptions};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Mesh,
    Flow,
    Spectral,
    Closure,
    Macro,
    Dns,
}

impl Stage {
    pub const ORDER: [Stage; 6] = [
        Stage::Mesh,
        Stage::Flow,
        Stage::Spectral,
        Stage::Closure,
        Stage::Macro,
        Stage::Dns,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Full,
    Channel,
    SingleDisk,
    #[default]
    Fcc,
    MultiDisk,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskConfig {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub kind: ShapeKind,
    pub resolution: usize,
    /// Disk radius for `single_disk` and `fcc`; ignored when porosities are swept.
    pub radius: Option<f64>,
    pub wall_fraction: Option<f64>,
    pub disks: Vec<DiskConfig>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            kind: ShapeKind::Fcc,
            resolution: 64,
            radius: None,
            wall_fraction: None,
            disks: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParameterGrid {
    pub peclet: Vec<f64>,
    pub damkohler: Vec<f64>,
    pub mu: Vec<f64>,
    /// Target porosities for `fcc` and `single_disk`; empty uses the configured radius.
    pub porosity: Vec<f64>,
}

impl Default for ParameterGrid {
    fn default() -> Self {
        Self {
            peclet: vec![0.0],
            damkohler: vec![0.0],
            mu: vec![0.0],
            porosity: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PotentialConfig {
    /// Colloid transport with a potential drift even where `mu = 0`.
    pub enabled: bool,
    pub strength: f64,
    pub minimum_image: bool,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            strength: 1.0,
            minimum_image: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SchemeConfig {
    #[default]
    Upwind,
    Central,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub scheme: SchemeConfig,
    pub linear_tolerance: f64,
    pub linear_max_iterations: usize,
    pub implicit_rayleigh: bool,
    pub aitken: bool,
    pub tol_phi: f64,
    pub tol_lambda: f64,
    pub max_outer: usize,
    pub corrector_shift: f64,
    pub corrector_tolerance: f64,
    pub corrector_max_iterations: usize,
    pub flow_tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SpectralOptions::default();
        let c = CorrectorSettings::default();
        let l = SolverSettings::default();
        Self {
            scheme: SchemeConfig::Upwind,
            linear_tolerance: l.tolerance,
            linear_max_iterations: l.max_iterations,
            implicit_rayleigh: true,
            aitken: true,
            tol_phi: s.tol_phi,
            tol_lambda: s.tol_lambda,
            max_outer: s.max_outer,
            corrector_shift: c.shift,
            corrector_tolerance: c.tolerance,
            corrector_max_iterations: c.max_iterations,
            flow_tolerance: FlowSettings::default().tolerance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SourcePattern {
    #[default]
    None,
    Uniform,
    /// Source on interface segments facing the incoming flow.
    UpstreamHalf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceConfig {
    pub pattern: SourcePattern,
    pub value: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            pattern: SourcePattern::None,
            value: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DnsConfig {
    pub cells: usize,
    /// Resolution per cell; defaults to the geometry resolution.
    pub resolution: Option<usize>,
}

impl Default for DnsConfig {
    fn default() -> Self {
        Self {
            cells: porous_upscale::dns::DEFAULT_CHAIN_CELLS,
            resolution: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write legacy VTK field dumps.
    pub fields: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            fields: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub name: String,
    pub stages: Vec<Stage>,
    pub workers: usize,
    pub geometry: GeometryConfig,
    pub parameters: ParameterGrid,
    pub potential: PotentialConfig,
    pub solver: SolverConfig,
    pub source: SourceConfig,
    pub dns: DnsConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            name: "run".into(),
            stages: vec![Stage::Mesh, Stage::Flow, Stage::Spectral, Stage::Closure],
            workers: 1,
            geometry: GeometryConfig::default(),
            parameters: ParameterGrid::default(),
            potential: PotentialConfig::default(),
            solver: SolverConfig::default(),
            source: SourceConfig::default(),
            dns: DnsConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

/// One point of the parameter grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    pub porosity: Option<f64>,
    pub peclet: f64,
    pub damkohler: f64,
    pub mu: f64,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).context("parsing run configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// SHA-256 of the canonical serialisation.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.parameters;
        if p.peclet.is_empty() || p.damkohler.is_empty() || p.mu.is_empty() {
            bail!("parameter lists must be nonempty");
        }
        if p.peclet
            .iter()
            .chain(&p.damkohler)
            .any(|v| !(*v >= 0.0) || !v.is_finite())
        {
            bail!("Pe and Da must be finite and non-negative");
        }
        if p.mu.iter().any(|v| !v.is_finite()) {
            bail!("mu must be finite");
        }
        if p.porosity.iter().any(|v| !(*v > 0.0 && *v <= 1.0)) {
            bail!("porosities must lie in (0, 1]");
        }
        if !p.porosity.is_empty()
            && !matches!(self.geometry.kind, ShapeKind::Fcc | ShapeKind::SingleDisk)
        {
            bail!("porosity sweeps need an fcc or single_disk geometry");
        }
        if self.stages.is_empty() {
            bail!("no stages selected");
        }
        for (s, expected) in self.stages.iter().zip(Stage::ORDER) {
            if *s != expected {
                bail!("stages must be a prefix of {:?}", Stage::ORDER);
            }
        }
        if self.stages.len() > Stage::ORDER.len() {
            bail!("too many stages");
        }
        if self.geometry.resolution < 4 {
            bail!("resolution must be at least 4");
        }
        if self.dns.cells < 16 && self.stages.contains(&Stage::Dns) {
            bail!("the DNS chain needs at least 16 cells for a developed window");
        }
        if self.workers == 0 {
            bail!("workers must be positive");
        }
        Ok(())
    }

    pub fn colloid(&self) -> bool {
        self.potential.enabled || self.parameters.mu.iter().any(|m| *m != 0.0)
    }

    pub fn porosities(&self) -> Vec<Option<f64>> {
        if self.parameters.porosity.is_empty() {
            vec![None]
        } else {
            self.parameters.porosity.iter().map(|p| Some(*p)).collect()
        }
    }

    /// Grid in row-major order: porosity, Pe, Da, mu.
    pub fn grid(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for por in self.porosities() {
            for &pe in &self.parameters.peclet {
                for &da in &self.parameters.damkohler {
                    for &mu in &self.parameters.mu {
                        out.push(GridPoint {
                            index: out.len(),
                            porosity: por,
                            peclet: pe,
                            damkohler: da,
                            mu,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn geometry_spec(&self, porosity: Option<f64>, resolution: usize) -> Result<GeometrySpec> {
        let g = &self.geometry;
        let kind = match g.kind {
            ShapeKind::Full => GeometryKind::Full,
            ShapeKind::Channel => GeometryKind::Channel {
                wall_fraction: g
                    .wall_fraction
                    .context("channel geometry needs wall_fraction")?,
            },
            ShapeKind::SingleDisk => GeometryKind::SingleDisk {
                radius: match porosity {
                    Some(p) => ((1.0 - p) / std::f64::consts::PI).sqrt(),
                    None => g
                        .radius
                        .context("single_disk needs radius or a porosity list")?,
                },
            },
            ShapeKind::Fcc => GeometryKind::Fcc {
                radius: match porosity {
                    Some(p) => fcc_radius(p),
                    None => g.radius.context("fcc needs radius or a porosity list")?,
                },
            },
            ShapeKind::MultiDisk => GeometryKind::MultiDisk(
                g.disks
                    .iter()
                    .map(|d| Disk {
                        center: d.center,
                        radius: d.radius,
                    })
                    .collect(),
            ),
        };
        Ok(GeometrySpec::new(kind, resolution))
    }

    pub fn spectral_options(&self) -> SpectralOptions {
        let s = &self.solver;
        SpectralOptions {
            rayleigh: if s.implicit_rayleigh {
                RayleighUpdate::Implicit
            } else {
                RayleighUpdate::Explicit
            },
            aitken: s.aitken,
            tol_phi: s.tol_phi,
            tol_lambda: s.tol_lambda,
            max_outer: s.max_outer,
            linear: self.linear_settings(),
            ..SpectralOptions::default()
        }
    }

    pub fn linear_settings(&self) -> SolverSettings {
        let s = &self.solver;
        SolverSettings {
            tolerance: s.linear_tolerance,
            max_iterations: s.linear_max_iterations,
            scheme: match s.scheme {
                SchemeConfig::Upwind => AdvectionScheme::Upwind,
                SchemeConfig::Central => AdvectionScheme::CentralDeferred,
            },
        }
    }

    pub fn corrector_settings(&self) -> CorrectorSettings {
        let s = &self.solver;
        CorrectorSettings {
            shift: s.corrector_shift,
            tolerance: s.corrector_tolerance,
            max_iterations: s.corrector_max_iterations,
            aitken: s.aitken,
            linear: self.linear_settings(),
            ..CorrectorSettings::default()
        }
    }

    pub fn flow_settings(&self) -> FlowSettings {
        FlowSettings {
            tolerance: self.solver.flow_tolerance,
            ..FlowSettings::default()
        }
    }

    pub fn potential_spec(&self, mesh: &UnitCellMesh, mu: f64) -> Option<PotentialSpec> {
        if !self.colloid() {
            return None;
        }
        let mut p = PotentialSpec::from_grains(mesh, self.potential.strength, mu);
        p.minimum_image = self.potential.minimum_image;
        Some(p)
    }

    /// Interface source values per segment, or none for a homogeneous interface.
    pub fn interface_source(
        &self,
        mesh: &UnitCellMesh,
        flow_direction: [f64; 2],
    ) -> Option<Vec<f64>> {
        let v = self.source.value;
        match self.source.pattern {
            SourcePattern::None => None,
            SourcePattern::Uniform => Some(vec![v; mesh.gamma_faces.len()]),
            SourcePattern::UpstreamHalf => Some(
                mesh.gamma_faces
                    .iter()
                    .map(|g| {
                        // The normal points into the solid, so upstream faces see the flow along it.
                        let along =
                            g.normal[0] * flow_direction[0] + g.normal[1] * flow_direction[1];
                        if along > 0.0 {
                            v
                        } else {
                            0.0
                        }
                    })
                    .collect(),
            ),
        }
    }
}
