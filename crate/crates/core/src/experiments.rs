//! Named experiments: a JSON configuration drives phantom rendering, the
//! forward problem (optionally on a finer grid), data perturbations and
//! Landweber or averaged time reversal reconstructions, and writes logs,
//! images and a manifest.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::atr::{atr_iterate, AtrOperator, AveragingSpec, EllipticSolveSpec, ReversalMode, TimeReversal};
use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::fields::io::save_pgm;
use crate::fields::{
    cutoff_frame, interior_cutoff, make_speed, relative_error, render_gaussians, render_shepp_logan, resample_trace,
    Blob, BoundaryTrace, Extent, GammaMask, GridSpec, ScalarField, Side, SideSpan, SpeedModel,
};
use crate::landweber::{iterate, IterationLog, LandweberConfig, LinearOperator, Outcome};
use crate::measurement::{
    add_noise, add_side_swap_perturbation, FilterSpec, Measurement, MeasurementConfig, TimeWindow,
};
use crate::wave::{AdjointScheme, Record, WaveSolver};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub nx: usize,
    pub t_final: f64,
    #[serde(default)]
    pub extent: Extent,
    /// Speed bound used for the time step; defaults to the largest nodal speed.
    #[serde(default)]
    pub c_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PhantomConfig {
    SheppLogan {
        #[serde(default = "default_supersample")]
        supersample: usize,
    },
    Gaussians {
        blobs: Vec<Blob>,
    },
}

fn default_supersample() -> usize {
    4
}

impl PhantomConfig {
    pub fn render(&self, grid: &GridSpec) -> Result<ScalarField> {
        match self {
            PhantomConfig::SheppLogan { supersample } => render_shepp_logan(grid, *supersample),
            PhantomConfig::Gaussians { blobs } => render_gaussians(grid, blobs),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GammaConfig {
    Full,
    /// Bottom and left sides plus `fraction` of each adjacent side.
    BottomLeftPlus {
        fraction: f64,
    },
    Spans {
        spans: Vec<SideSpan>,
    },
}

impl GammaConfig {
    pub fn build(&self, grid: &GridSpec) -> Result<GammaMask> {
        match self {
            GammaConfig::Full => Ok(GammaMask::full(grid)),
            GammaConfig::BottomLeftPlus { fraction } => {
                if !(0.0..=1.0).contains(fraction) {
                    return Err(invalid(format!("Gamma fraction must lie in [0, 1], got {fraction}")));
                }
                GammaMask::bottom_left_plus(grid, *fraction)
            }
            GammaConfig::Spans { spans } => GammaMask::from_spans(grid, spans),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Landweber,
    Atr,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub sigma: f64,
    /// Defaults to the experiment seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideSwapConfig {
    pub src: Side,
    pub dst: Side,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinerGridConfig {
    /// Spatial refinement factor.
    pub space: f64,
    /// Temporal refinement factor.
    pub time: f64,
    /// Refuse fine grids with more nodes than this.
    #[serde(default = "default_max_nodes")]
    pub max_nodes: usize,
}

fn default_max_nodes() -> usize {
    4_000_000
}

/// Partial-data handling of the time reversal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartialReversal {
    /// Dirichlet on Gamma, Neumann elsewhere.
    #[default]
    Zaremba,
    /// Data extended by zero and imposed on the whole boundary.
    ZeroExtension,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtrConfig {
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_t0")]
    pub t0_fraction: f64,
    #[serde(default = "default_taper")]
    pub taper: f64,
    #[serde(default)]
    pub partial: PartialReversal,
    #[serde(default)]
    pub elliptic: EllipticSolveSpec,
}

fn default_levels() -> usize {
    32
}

fn default_t0() -> f64 {
    0.1
}

fn default_taper() -> f64 {
    0.1
}

impl Default for AtrConfig {
    fn default() -> Self {
        AtrConfig {
            levels: default_levels(),
            t0_fraction: default_t0(),
            taper: default_taper(),
            partial: PartialReversal::default(),
            elliptic: EllipticSolveSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub id: String,
    pub grid: GridConfig,
    pub speed: SpeedModel,
    pub phantom: PhantomConfig,
    pub gamma: GammaConfig,
    /// Margin of the interior cutoff applied inside the operator; `None`
    /// reconstructs on the whole box.
    #[serde(default)]
    pub interior_margin: Option<f64>,
    /// Margin of the square on which errors are measured.
    #[serde(default = "default_error_margin")]
    pub error_margin: f64,
    #[serde(default)]
    pub time_window: TimeWindow,
    #[serde(default)]
    pub adjoint: AdjointScheme,
    pub method: Method,
    /// Landweber step sizes; ignored by the time reversal method.
    #[serde(default)]
    pub gammas: Vec<f64>,
    pub steps: usize,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    #[serde(default)]
    pub side_swap: Option<SideSwapConfig>,
    #[serde(default)]
    pub filter: Option<FilterSpec>,
    #[serde(default)]
    pub finer_grid: Option<FinerGridConfig>,
    #[serde(default)]
    pub atr: AtrConfig,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "yes")]
    pub images: bool,
}

fn default_error_margin() -> f64 {
    0.03
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn yes() -> bool {
    true
}

const BUILTINS: &[(&str, &str)] = &[
    ("stable-full", include_str!("../configs/stable-full.json")),
    ("stable-noise", include_str!("../configs/stable-noise.json")),
    ("stable-side-swap", include_str!("../configs/stable-side-swap.json")),
    ("stable-atr", include_str!("../configs/stable-atr.json")),
    ("unstable-partial", include_str!("../configs/unstable-partial.json")),
    ("unstable-partial-nocut", include_str!("../configs/unstable-partial-nocut.json")),
    ("unstable-atr", include_str!("../configs/unstable-atr.json")),
    ("unstable-noise", include_str!("../configs/unstable-noise.json")),
    ("unstable-noise-filtered", include_str!("../configs/unstable-noise-filtered.json")),
    ("square-jump", include_str!("../configs/square-jump.json")),
    ("finer-grid-sl", include_str!("../configs/finer-grid-sl.json")),
    ("finer-grid-gauss", include_str!("../configs/finer-grid-gauss.json")),
];

/// Names of the checked-in experiment configurations.
pub fn builtin_names() -> Vec<&'static str> {
    BUILTINS.iter().map(|(n, _)| *n).collect()
}

pub fn builtin(name: &str) -> Result<ExperimentConfig> {
    let text = BUILTINS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| invalid(format!("unknown builtin experiment '{name}'")))?;
    ExperimentConfig::from_json(text)
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| invalid(format!("config: {e}")))?;
        Ok(cfg)
    }

    /// A builtin name or a path to a JSON file.
    pub fn load(spec: &str) -> Result<Self> {
        if let Ok(cfg) = builtin(spec) {
            return Ok(cfg);
        }
        let text = fs::read_to_string(spec)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Check every parameter; builds the grid, speed and masks but runs no
    /// solver.
    pub fn validate(&self) -> Result<Setup> {
        if self.id.trim().is_empty() {
            return Err(invalid("experiment id is empty"));
        }
        if self.steps == 0 {
            return Err(invalid("steps must be at least 1"));
        }
        match self.method {
            Method::Landweber => {
                if self.gammas.is_empty() {
                    return Err(invalid("Landweber needs at least one step size"));
                }
                for &g in &self.gammas {
                    LandweberConfig::new(g, self.steps).validate()?;
                }
            }
            Method::Atr => {
                self.atr.elliptic.validate()?;
            }
        }
        if let Some(n) = &self.noise {
            if !(n.sigma >= 0.0) || !n.sigma.is_finite() {
                return Err(invalid(format!("noise sigma must be non-negative, got {}", n.sigma)));
            }
        }
        if let Some(s) = &self.side_swap {
            if s.src == s.dst {
                return Err(invalid("side swap needs distinct sides"));
            }
        }
        if let Some(f) = &self.filter {
            f.validate()?;
        }
        if let Some(fg) = &self.finer_grid {
            if !(fg.space >= 1.0 && fg.time >= 1.0) {
                return Err(invalid("refinement factors must be at least 1"));
            }
        }
        if !(0.0..0.5).contains(&self.error_margin) {
            return Err(invalid("error margin must lie in [0, 0.5)"));
        }
        let setup = Setup::new(self)?;
        if self.method == Method::Atr && cutoff_frame(&setup.grid, self.error_margin) == 0 {
            return Err(invalid(format!(
                "time reversal needs an interior square away from the boundary; margin {} is below one cell at nx = {}",
                self.error_margin, setup.grid.nx
            )));
        }
        Ok(setup)
    }
}

/// Grid, speed and masks resolved from a configuration.
#[derive(Debug, Clone)]
pub struct Setup {
    pub grid: GridSpec,
    pub c: ScalarField,
    pub c_max: f64,
    pub gamma: GammaMask,
    pub chi: ScalarField,
    pub omega: ScalarField,
    pub time_weight: Vec<f64>,
}

/// Grid whose time step matches the largest nodal speed (or `c_max` when
/// given) together with the speed sampled on it.
pub fn resolve_grid(gc: &GridConfig, speed: &SpeedModel) -> Result<(GridSpec, ScalarField, f64)> {
    let probe = GridSpec::new(gc.nx, gc.extent, gc.t_final, 1.0)?;
    let c_probe = make_speed(&probe, speed)?;
    let c_max = match gc.c_max {
        Some(c) => c,
        None => c_probe.max(),
    };
    let grid = GridSpec::new(gc.nx, gc.extent, gc.t_final, c_max)?;
    let c = c_probe.with_grid(grid)?;
    grid.check_cfl(c.max())?;
    Ok((grid, c, c_max))
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let (grid, c, c_max) = resolve_grid(&cfg.grid, &cfg.speed)?;
        let gamma = cfg.gamma.build(&grid)?;
        let chi = match cfg.interior_margin {
            Some(m) => interior_cutoff(&grid, m)?,
            None => ScalarField::constant(grid, 1.0),
        };
        let omega = interior_cutoff(&grid, cfg.error_margin)?;
        let time_weight = cfg.time_window.weights(&grid)?;
        Ok(Setup { grid, c, c_max, gamma, chi, omega, time_weight })
    }

    pub fn measurement_config(&self, cfg: &ExperimentConfig) -> MeasurementConfig {
        MeasurementConfig {
            gamma: self.gamma.clone(),
            interior_chi: self.chi.clone(),
            time_weight: self.time_weight.clone(),
            data_filter: cfg.filter,
            adjoint: cfg.adjoint,
        }
    }
}

/// Render the phantom on a grid refined by the given factors, solve there
/// and resample the boundary trace onto `grid`.
pub fn finer_grid_forward(
    grid: &GridSpec,
    speed: &SpeedModel,
    phantom: &PhantomConfig,
    c_max: f64,
    fine: &FinerGridConfig,
) -> Result<BoundaryTrace> {
    if !(fine.space >= 1.0 && fine.time >= 1.0) {
        return Err(invalid("refinement factors must be at least 1"));
    }
    let cells = ((grid.nx - 1) as f64 * fine.space).round() as usize;
    let nx = cells + 1;
    if nx.saturating_mul(nx) > fine.max_nodes {
        return Err(Error::ResourceLimit(format!("fine grid {nx}x{nx} exceeds {} nodes", fine.max_nodes)));
    }
    let fine_grid = if cells == grid.nx - 1 && fine.time == 1.0 {
        *grid
    } else {
        let probe = GridSpec::new(nx, grid.extent, grid.final_time(), c_max)?;
        let dt = (grid.dt / fine.time).min(probe.dt);
        GridSpec::with_time_step(nx, grid.extent, grid.final_time(), dt)?
    };
    let c = make_speed(&fine_grid, speed)?;
    let f = phantom.render(&fine_grid)?;
    let trace = WaveSolver::new(fine_grid, &c)?.forward(&f, Record::TRACE)?.trace;
    resample_trace(&trace, grid)
}

/// One reconstruction of an experiment.
#[derive(Debug, Clone)]
pub struct Cell {
    pub label: String,
    pub gamma: Option<f64>,
    pub log: IterationLog,
    pub outcome: Outcome,
    pub solution: ScalarField,
}

impl Cell {
    pub fn final_error(&self) -> Option<f64> {
        self.log.last().and_then(|e| e.rel_error)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub path: String,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub label: String,
    pub gamma: Option<f64>,
    pub final_error: Option<f64>,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub version: String,
    pub parallel: bool,
    pub grid: GridSpec,
    pub c_max: f64,
    pub data_min: f64,
    pub data_max: f64,
    pub cells: Vec<CellSummary>,
    pub images: Vec<ImageRecord>,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub manifest: Manifest,
    pub setup: Setup,
    pub truth: ScalarField,
    pub data: BoundaryTrace,
    pub cells: Vec<Cell>,
}

impl Report {
    pub fn cell(&self, gamma: f64) -> Option<&Cell> {
        self.cells.iter().find(|c| c.gamma == Some(gamma))
    }

    /// Whether every reconstruction diverged.
    pub fn all_diverged(&self) -> bool {
        !self.cells.is_empty() && self.cells.iter().all(|c| matches!(c.outcome, Outcome::Diverged { .. }))
    }
}

/// Measured (possibly perturbed) data for an experiment.
pub fn synthesize_data(cfg: &ExperimentConfig, setup: &Setup, truth: &ScalarField) -> Result<BoundaryTrace> {
    let raw = match &cfg.finer_grid {
        Some(fine) => finer_grid_forward(&setup.grid, &cfg.speed, &cfg.phantom, setup.c_max, fine)?,
        None => WaveSolver::new(setup.grid, &setup.c)?.forward(truth, Record::TRACE)?.trace,
    };
    let mut data = raw.restricted(&setup.gamma)?;
    if let Some(s) = &cfg.side_swap {
        data = add_side_swap_perturbation(&data, s.src, s.dst)?;
    }
    if let Some(n) = &cfg.noise {
        data = add_noise(&data, n.sigma, n.seed.unwrap_or(cfg.seed))?;
    }
    Ok(data)
}

fn gamma_label(g: f64) -> String {
    format!("landweber_g{g}")
}

/// Run an experiment without touching the file system.
pub fn compute(cfg: &ExperimentConfig) -> Result<Report> {
    let setup = cfg.validate()?;
    let truth = cfg.phantom.render(&setup.grid)?;
    let data = synthesize_data(cfg, &setup, &truth)?;
    let truth_cut = truth.mul(&setup.omega)?;
    let m = Measurement::new(setup.grid, setup.c.clone(), setup.measurement_config(cfg))?;
    let omega = setup.omega.clone();
    let cells: Vec<Cell> = match cfg.method {
        Method::Landweber => {
            let measured = m.weight_data(&data)?;
            let err = {
                let norm = m.model_norm(truth_cut.values());
                let omega = omega.values().to_vec();
                let t = truth_cut.values().to_vec();
                let m = &m;
                move |x: &[f64]| {
                    let d: Vec<f64> = x.iter().zip(&omega).zip(&t).map(|((a, w), b)| a * w - b).collect();
                    m.model_norm(&d) / norm
                }
            };
            let results = exec::map_slice(&cfg.gammas, |&g| {
                let run = iterate(&m, measured.values(), &LandweberConfig::new(g, cfg.steps), Some(&err))?;
                Ok(Cell {
                    label: gamma_label(g),
                    gamma: Some(g),
                    log: run.log,
                    outcome: run.outcome,
                    solution: ScalarField::from_values(setup.grid, run.solution)?,
                })
            });
            results.into_iter().collect::<Result<Vec<_>>>()?
        }
        Method::Atr => {
            let mode = if setup.gamma.is_full() {
                ReversalMode::Full
            } else {
                match cfg.atr.partial {
                    PartialReversal::Zaremba => ReversalMode::Partial(setup.gamma.clone()),
                    PartialReversal::ZeroExtension => ReversalMode::Full,
                }
            };
            let tr = TimeReversal::new(setup.grid, &setup.c, mode, cfg.atr.elliptic)?;
            let avg = AveragingSpec::tapered(&setup.grid, cfg.atr.levels, cfg.atr.t0_fraction, cfg.atr.taper)?;
            let op = AtrOperator { measurement: &m, reversal: &tr, averaging: &avg, omega0: &omega };
            let run = atr_iterate(&op, &data, cfg.steps, Some(&truth_cut))?;
            vec![Cell {
                label: "atr".into(),
                gamma: None,
                log: run.log,
                outcome: run.outcome,
                solution: ScalarField::from_values(setup.grid, run.solution)?,
            }]
        }
    };
    let manifest = Manifest {
        config: cfg.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        parallel: exec::is_parallel(),
        grid: setup.grid,
        c_max: setup.c_max,
        data_min: data.min(),
        data_max: data.max(),
        cells: cells
            .iter()
            .map(|c| CellSummary {
                label: c.label.clone(),
                gamma: c.gamma,
                final_error: c.final_error(),
                outcome: c.outcome,
            })
            .collect(),
        images: Vec::new(),
    };
    Ok(Report { manifest, setup, truth, data, cells })
}

/// `gamma,step,log10_rel_error,status`; a diverged run ends with an `inf`
/// row marked `diverged`.
pub fn write_sweep_csv<W: std::io::Write>(cells: &[Cell], mut w: W) -> Result<()> {
    writeln!(w, "gamma,step,log10_rel_error,status")?;
    for c in cells {
        let g = c.gamma.map(|g| g.to_string()).unwrap_or_default();
        for e in &c.log.entries {
            if let Some(err) = e.rel_error {
                writeln!(w, "{g},{},{:.6},ok", e.step, err.log10())?;
            }
        }
        if let Outcome::Diverged { step, .. } = c.outcome {
            writeln!(w, "{g},{step},inf,diverged")?;
        }
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

/// Write logs, the sweep table, images and `manifest.json` under the
/// configured output directory.
pub fn write_artifacts(report: &mut Report) -> Result<()> {
    let out = report.manifest.config.output.clone();
    fs::create_dir_all(&out)?;
    for c in &report.cells {
        c.log.write_csv(create(&out.join(format!("{}.csv", c.label)))?)?;
    }
    if report.manifest.config.method == Method::Landweber {
        write_sweep_csv(&report.cells, create(&out.join("sweep.csv"))?)?;
    }
    let mut images = Vec::new();
    if report.manifest.config.images {
        let mut save = |name: String, f: &ScalarField| -> Result<()> {
            let (min, max) = save_pgm(f, &out.join(&name))?;
            images.push(ImageRecord { path: name, min, max });
            Ok(())
        };
        save("phantom.pgm".into(), &report.truth)?;
        for c in &report.cells {
            if c.solution.is_finite() {
                save(format!("{}.pgm", c.label), &c.solution)?;
            }
        }
    }
    report.manifest.images = images;
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&report.manifest)?)?;
    Ok(())
}

/// Compute and write an experiment.
pub fn run(cfg: &ExperimentConfig) -> Result<Report> {
    let mut report = compute(cfg)?;
    write_artifacts(&mut report)?;
    Ok(report)
}

/// Landweber sweep over the given step sizes on the experiment's data.
pub fn sweep_gamma(cfg: &ExperimentConfig, gammas: &[f64]) -> Result<Vec<Cell>> {
    let mut c = cfg.clone();
    c.method = Method::Landweber;
    c.gammas = gammas.to_vec();
    Ok(compute(&c)?.cells)
}

/// Read a manifest back into the configuration that produced it.
pub fn config_from_manifest(text: &str) -> Result<ExperimentConfig> {
    let m: Manifest = serde_json::from_str(text).map_err(|e| invalid(format!("manifest: {e}")))?;
    Ok(m.config)
}

/// Process exit status for an error: 2 configuration, 3 solver, 4 I/O.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_)
        | Error::Cfl { .. }
        | Error::GridMismatch(_)
        | Error::Json(_)
        | Error::ResourceLimit(_) => 2,
        Error::NonFinite { .. } | Error::Diverged { .. } | Error::NoConvergence { .. } | Error::Decomposition(_) => 3,
        Error::Io(_) => 4,
    }
}

/// Weighted relative error of `x` on the error square of an experiment.
pub fn error_on_omega(setup: &Setup, x: &ScalarField, truth: &ScalarField) -> Result<f64> {
    relative_error(&x.mul(&setup.omega)?, &truth.mul(&setup.omega)?, &setup.c)
}
