//! Run configuration and initial conditions for droplet and bubble scenarios.
//!
//! A configuration is a TOML document. All quantities are SI.
//!
//! ```toml
//! [grid]
//! nx = 40
//! ny = 40
//! lx = 20e-9                 # m
//! ly = 20e-9
//!
//! [mixture]
//! components = ["CH4", "nC10"]
//! components_file = "../data/components.toml"   # optional, relative to this file
//! temperature = 320.0                           # K
//! binary_interaction = [[0.0, 0.0], [0.0, 0.0]]     # k_ij, optional
//! influence_interaction = [[0.0, 0.5], [0.5, 0.0]]  # beta_ij, optional
//! diffusion = [1e-6, 1e-6]                      # m^2/s, optional override
//!
//! [solver]
//! dt = 1e-6                  # s
//! n_steps = 45
//! nonlinear_tol = 1e-3
//! max_nonlinear_iters = 5
//! linear_tol = 1e-9
//! lambda = 1.0
//!
//! [fluid]
//! shear_viscosity = 0.01     # Pa s
//! bulk_viscosity = 0.01      # Pa s
//!
//! [scenario]
//! kind = "square_droplet"    # square_droplet | ellipse_bubble | two_bubbles | custom
//! n_gas = [7133.9, 26.5]     # mol/m^3
//! n_liquid = [3513.2, 3814.6]
//! smoothing_cells = 2.0
//! # inside = "liquid", center = [x, y], half_width = 5e-9,
//! # semi_axes = [a, b], radius = r, centers = [[x, y], ...]
//! # custom kind: [[scenario.regions]] shape = "rectangle" | "ellipse"
//!
//! [output]
//! dir = "out/example1"
//! snapshot_every = 5         # 0: initial and final state only
//! format = "csv"             # csv | vtk | both
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::eos::{ComponentDatabase, MixtureSpec};
use crate::error::{Error, Result};
use crate::grid::{CellField, GridSpec};
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;
use crate::stepper::{Model, SimState, SolverConfig};

/// Component table shipped with the crate.
pub const BUILTIN_COMPONENTS: &str = include_str!("../../../data/components.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub grid: GridSection,
    pub mixture: MixtureSection,
    pub solver: SolverSection,
    pub fluid: FluidSection,
    pub scenario: InitialSection,
    #[serde(default)]
    pub output: OutputSection,
    /// Directory that relative paths in the file are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSection {
    pub components: Vec<String>,
    #[serde(default)]
    pub components_file: Option<PathBuf>,
    pub temperature: f64,
    #[serde(default)]
    pub binary_interaction: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub influence_interaction: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub diffusion: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub dt: f64,
    pub n_steps: usize,
    #[serde(default = "defaults::nonlinear_tol")]
    pub nonlinear_tol: f64,
    #[serde(default = "defaults::max_nonlinear_iters")]
    pub max_nonlinear_iters: usize,
    #[serde(default = "defaults::linear_tol")]
    pub linear_tol: f64,
    #[serde(default = "defaults::lambda")]
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidSection {
    pub shear_viscosity: f64,
    pub bulk_viscosity: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    SquareDroplet,
    EllipseBubble,
    TwoBubbles,
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Gas,
    Liquid,
}

/// A region filled with the inside phase. Lengths in m.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Region {
    Rectangle { center: [f64; 2], half_widths: [f64; 2] },
    Ellipse { center: [f64; 2], semi_axes: [f64; 2] },
}

impl Region {
    fn is_empty(&self) -> bool {
        let [a, b] = match self {
            Region::Rectangle { half_widths, .. } => *half_widths,
            Region::Ellipse { semi_axes, .. } => *semi_axes,
        };
        a <= 0.0 || b <= 0.0
    }

    fn bounds(&self) -> [f64; 4] {
        let (c, h) = match self {
            Region::Rectangle { center, half_widths } => (center, half_widths),
            Region::Ellipse { center, semi_axes } => (center, semi_axes),
        };
        [c[0] - h[0], c[0] + h[0], c[1] - h[1], c[1] + h[1]]
    }

    /// Approximate signed distance, negative inside.
    pub fn signed_distance(&self, x: f64, y: f64) -> f64 {
        match self {
            Region::Rectangle { center, half_widths } => {
                let dx = (x - center[0]).abs() - half_widths[0];
                let dy = (y - center[1]).abs() - half_widths[1];
                if dx > 0.0 && dy > 0.0 {
                    dx.hypot(dy)
                } else {
                    dx.max(dy)
                }
            }
            Region::Ellipse { center, semi_axes } => {
                let [a, b] = *semi_axes;
                let (dx, dy) = (x - center[0], y - center[1]);
                let q = ((dx / a).powi(2) + (dy / b).powi(2)).sqrt();
                let g = ((dx / (a * a)).powi(2) + (dy / (b * b)).powi(2)).sqrt();
                if q < 1e-12 || g == 0.0 {
                    -a.min(b)
                } else {
                    (q - 1.0) * q / g
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub kind: ScenarioKind,
    pub n_gas: Vec<f64>,
    pub n_liquid: Vec<f64>,
    /// Phase filling the regions; gas for bubbles and liquid for droplets by default.
    #[serde(default)]
    pub inside: Option<Phase>,
    #[serde(default = "defaults::smoothing_cells")]
    pub smoothing_cells: f64,
    #[serde(default)]
    pub center: Option<[f64; 2]>,
    #[serde(default)]
    pub half_width: Option<f64>,
    #[serde(default)]
    pub semi_axes: Option<[f64; 2]>,
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub centers: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub regions: Option<Vec<Region>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Vtk,
    Both,
}

impl OutputFormat {
    pub fn csv(self) -> bool {
        matches!(self, OutputFormat::Csv | OutputFormat::Both)
    }

    pub fn vtk(self) -> bool {
        matches!(self, OutputFormat::Vtk | OutputFormat::Both)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "defaults::output_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub snapshot_every: usize,
    #[serde(default = "defaults::format")]
    pub format: OutputFormat,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: defaults::output_dir(),
            snapshot_every: 0,
            format: defaults::format(),
        }
    }
}

mod defaults {
    use super::OutputFormat;
    use std::path::PathBuf;

    pub fn nonlinear_tol() -> f64 {
        1e-3
    }
    pub fn max_nonlinear_iters() -> usize {
        5
    }
    pub fn linear_tol() -> f64 {
        1e-9
    }
    pub fn lambda() -> f64 {
        1.0
    }
    pub fn smoothing_cells() -> f64 {
        2.0
    }
    pub fn output_dir() -> PathBuf {
        PathBuf::from("out")
    }
    pub fn format() -> OutputFormat {
        OutputFormat::Csv
    }
}

fn matrix<S: Scalar>(rows: &Option<Vec<Vec<f64>>>, m: usize, what: &str) -> Result<DenseMatrix<S>> {
    match rows {
        None => Ok(DenseMatrix::zeros(m)),
        Some(rows) => {
            if rows.len() != m || rows.iter().any(|r| r.len() != m) {
                return Err(Error::Config(format!("{what} must be {m}x{m}")));
            }
            let cast: Vec<Vec<S>> = rows.iter().map(|r| r.iter().map(|&v| S::lit(v)).collect()).collect();
            DenseMatrix::from_rows(&cast)
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        Ok(cfg)
    }

    /// Reads a configuration file; relative paths inside resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, base).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output.dir)
    }

    pub fn num_components(&self) -> usize {
        self.mixture.components.len()
    }

    pub fn grid<S: Scalar>(&self) -> Result<GridSpec<S>> {
        let g = &self.grid;
        GridSpec::new(g.nx, g.ny, S::lit(g.lx), S::lit(g.ly))
    }

    pub fn solver<S: Scalar>(&self) -> Result<SolverConfig<S>> {
        let s = &self.solver;
        let cfg = SolverConfig {
            dt: S::lit(s.dt),
            n_steps: s.n_steps,
            nonlinear_tol: S::lit(s.nonlinear_tol),
            max_nonlinear_iters: s.max_nonlinear_iters,
            linear_tol: S::lit(s.linear_tol),
            lambda: S::lit(s.lambda),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The mixture, with the splitting weight taken from the solver section.
    pub fn mixture<S: Scalar>(&self) -> Result<MixtureSpec<S>> {
        let mix = &self.mixture;
        let db = match &mix.components_file {
            Some(p) => ComponentDatabase::load(self.resolve(p))?,
            None => ComponentDatabase::from_toml_str(BUILTIN_COMPONENTS)?,
        };
        let mut comps = db.select(&mix.components)?;
        let m = comps.len();
        if let Some(d) = &mix.diffusion {
            if d.len() != m {
                return Err(Error::Config(format!("diffusion must have {m} entries")));
            }
            for (c, &v) in comps.iter_mut().zip(d) {
                c.diffusion_coefficient = v;
            }
        }
        MixtureSpec::new(
            comps.iter().map(|c| c.cast()).collect(),
            matrix(&mix.binary_interaction, m, "binary_interaction")?,
            matrix(&mix.influence_interaction, m, "influence_interaction")?,
            S::lit(self.solver.lambda),
            S::lit(mix.temperature),
        )
    }

    pub fn model<S: Scalar>(&self) -> Result<Model<S>> {
        Model::new(
            self.grid()?,
            &self.mixture()?,
            S::lit(self.fluid.shear_viscosity),
            S::lit(self.fluid.bulk_viscosity),
        )
    }

    pub fn inside_phase(&self) -> Phase {
        self.scenario.inside.unwrap_or(match self.scenario.kind {
            ScenarioKind::SquareDroplet | ScenarioKind::Custom => Phase::Liquid,
            ScenarioKind::EllipseBubble | ScenarioKind::TwoBubbles => Phase::Gas,
        })
    }

    /// Regions of the inside phase, with defaults for unset geometry.
    pub fn regions(&self) -> Result<Vec<Region>> {
        let s = &self.scenario;
        let center = s.center.unwrap_or([0.5 * self.grid.lx, 0.5 * self.grid.ly]);
        let regions = match s.kind {
            ScenarioKind::SquareDroplet => {
                let h = s.half_width.unwrap_or(5e-9);
                vec![Region::Rectangle {
                    center,
                    half_widths: [h, h],
                }]
            }
            ScenarioKind::EllipseBubble => vec![Region::Ellipse {
                center,
                semi_axes: s.semi_axes.unwrap_or([6e-9, 3.5e-9]),
            }],
            ScenarioKind::TwoBubbles => {
                let r = s.radius.unwrap_or(3.5e-9);
                let centers = s.centers.clone().unwrap_or(vec![[6.5e-9, 10e-9], [13.5e-9, 10e-9]]);
                centers
                    .into_iter()
                    .map(|c| Region::Ellipse {
                        center: c,
                        semi_axes: [r, r],
                    })
                    .collect()
            }
            ScenarioKind::Custom => s
                .regions
                .clone()
                .ok_or_else(|| Error::Config("custom scenario needs regions".into()))?,
        };
        let tol = 1e-12 * self.grid.lx.max(self.grid.ly);
        for r in regions.iter().filter(|r| !r.is_empty()) {
            let [x0, x1, y0, y1] = r.bounds();
            if x0 < -tol || y0 < -tol || x1 > self.grid.lx + tol || y1 > self.grid.ly + tol {
                return Err(Error::Config(format!("region {r:?} exceeds the domain")));
            }
        }
        Ok(regions.into_iter().filter(|r| !r.is_empty()).collect())
    }

    /// Inside-phase volume fraction of each cell: a tanh profile across the region
    /// boundary of width `smoothing_cells` cells, or a sharp indicator at width 0.
    pub fn indicator(&self) -> Result<Vec<f64>> {
        let regions = self.regions()?;
        let grid = self.grid::<f64>()?;
        let w = self.scenario.smoothing_cells;
        if !(w >= 0.0) || !w.is_finite() {
            return Err(Error::Config("smoothing_cells must be >= 0".into()));
        }
        let width = w * grid.hx().min(grid.hy());
        let mut out = Vec::with_capacity(grid.num_cells());
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                let (x, y) = grid.cell_center(i, j);
                let d = regions
                    .iter()
                    .map(|r| r.signed_distance(x, y))
                    .fold(f64::INFINITY, f64::min);
                out.push(if width > 0.0 {
                    0.5 * (1.0 - (d / width).tanh())
                } else if d < 0.0 {
                    1.0
                } else {
                    0.0
                });
            }
        }
        Ok(out)
    }

    /// Quiescent initial state with the inside phase in the regions and the other
    /// phase elsewhere.
    pub fn build_initial_state<S: Scalar>(&self) -> Result<SimState<S>> {
        let m = self.num_components();
        let s = &self.scenario;
        if s.n_gas.len() != m || s.n_liquid.len() != m {
            return Err(Error::Config(format!("phase compositions must have {m} entries")));
        }
        let (inner, outer) = match self.inside_phase() {
            Phase::Gas => (&s.n_gas, &s.n_liquid),
            Phase::Liquid => (&s.n_liquid, &s.n_gas),
        };
        let grid = self.grid::<S>()?;
        let phi = self.indicator()?;
        let n = (0..m)
            .map(|c| {
                let values = phi
                    .iter()
                    .map(|&w| {
                        S::lit(if w == 0.0 {
                            outer[c]
                        } else if w == 1.0 {
                            inner[c]
                        } else {
                            w * inner[c] + (1.0 - w) * outer[c]
                        })
                    })
                    .collect();
                grid.cell_field_from_vec(values)
            })
            .collect::<Result<Vec<CellField<S>>>>()?;
        Ok(SimState::at_rest(&grid, n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const EXAMPLE: &str = r#"
[grid]
nx = 40
ny = 40
lx = 20e-9
ly = 20e-9

[mixture]
components = ["CH4", "nC10"]
temperature = 320.0
influence_interaction = [[0.0, 0.5], [0.5, 0.0]]
diffusion = [1e-6, 1e-6]

[solver]
dt = 1e-6
n_steps = 45

[fluid]
shear_viscosity = 0.01
bulk_viscosity = 0.01

[scenario]
kind = "square_droplet"
n_gas = [7133.9, 26.5]
n_liquid = [3513.2, 3814.6]
smoothing_cells = 0.0
"#;

    fn example() -> ScenarioConfig {
        ScenarioConfig::from_toml_str(EXAMPLE, "").unwrap()
    }

    #[test]
    fn sharp_square_droplet() {
        let cfg = example();
        let state = cfg.build_initial_state::<f64>().unwrap();
        let grid = cfg.grid::<f64>().unwrap();
        // half-width 5 nm on 0.5 nm cells: cells 10..30 are inside
        for j in 0..40 {
            for i in 0..40 {
                let k = grid.cell(i, j);
                let inside = (10..30).contains(&i) && (10..30).contains(&j);
                let expect = if inside { [3513.2, 3814.6] } else { [7133.9, 26.5] };
                assert_eq!(state.n[0].values()[k], expect[0]);
                assert_eq!(state.n[1].values()[k], expect[1]);
            }
        }
        assert_eq!(state.u.max_abs(), 0.0);
    }

    #[test]
    fn ellipse_bubble_is_gas_inside() {
        let mut cfg = example();
        cfg.scenario.kind = ScenarioKind::EllipseBubble;
        let state = cfg.build_initial_state::<f64>().unwrap();
        let grid = cfg.grid::<f64>().unwrap();
        assert_eq!(state.n[0].values()[grid.cell(20, 20)], 7133.9);
        assert_eq!(state.n[0].values()[grid.cell(0, 0)], 3513.2);
        // 6 nm semi-axis along x, 3.5 nm along y
        assert_eq!(state.n[0].values()[grid.cell(31, 20)], 7133.9);
        assert_eq!(state.n[0].values()[grid.cell(20, 27)], 3513.2);
    }

    #[test]
    fn zero_size_region_gives_uniform_exterior() {
        let mut cfg = example();
        cfg.scenario.half_width = Some(0.0);
        cfg.scenario.smoothing_cells = 2.0;
        let state = cfg.build_initial_state::<f64>().unwrap();
        assert!(state.n[0].values().iter().all(|&v| v == 7133.9));
        assert!(state.n[1].values().iter().all(|&v| v == 26.5));
    }

    #[test]
    fn region_outside_domain_is_rejected() {
        let mut cfg = example();
        cfg.scenario.half_width = Some(11e-9);
        assert!(matches!(cfg.build_initial_state::<f64>(), Err(Error::Config(_))));
    }

    #[test]
    fn smoothing_stays_between_phases() {
        let mut cfg = example();
        cfg.scenario.smoothing_cells = 2.0;
        let state = cfg.build_initial_state::<f64>().unwrap();
        let (lo, hi) = (state.n[0].min(), state.n[0].max());
        assert!(lo >= 3513.2 - 1e-9 && hi <= 7133.9 + 1e-9);
        assert!(state.n[0].values().iter().any(|&v| v > 3600.0 && v < 7000.0));
    }

    #[test]
    fn two_bubbles_are_symmetric() {
        let mut cfg = example();
        cfg.scenario.kind = ScenarioKind::TwoBubbles;
        cfg.scenario.smoothing_cells = 2.0;
        let state = cfg.build_initial_state::<f64>().unwrap();
        let grid = cfg.grid::<f64>().unwrap();
        for j in 0..40 {
            for i in 0..40 {
                let a = state.n[0].values()[grid.cell(i, j)];
                let b = state.n[0].values()[grid.cell(39 - i, j)];
                assert!((a - b).abs() <= 1e-9 * a);
            }
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = EXAMPLE.replace("[fluid]", "[fluid]\nviscosity = 1.0");
        assert!(ScenarioConfig::from_toml_str(&text, "").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = example();
        let back = ScenarioConfig::from_toml_str(&cfg.to_toml_string().unwrap(), "").unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn model_rejects_low_bulk_viscosity() {
        let mut cfg = example();
        cfg.fluid.bulk_viscosity = 0.005;
        assert!(cfg.model::<f64>().is_err());
    }
}
