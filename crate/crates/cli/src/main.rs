#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mwt_core::experiments::{self, ExperimentConfig, Method};
use mwt_core::fields::io::{save_pgm, write_field_csv, write_trace_binary, write_trace_csv};
use mwt_core::landweber::{g_n_curve, g_n_max};
use mwt_core::measurement::Measurement;
use mwt_core::spectral::{self, OperatorKind};
use mwt_core::{Error, Result};

#[derive(Parser)]
#[command(name = "mwt", version, about = "Multiwave tomography experiments in a reflecting cavity")]
struct Cli {
    /// RNG seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for data-parallel kernels.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Builtin experiment name or path to a JSON config.
    #[arg(long, short, default_value = "stable-full")]
    config: String,
    /// Grid nodes per axis.
    #[arg(long)]
    nx: Option<usize>,
    /// Final time.
    #[arg(long)]
    t_final: Option<f64>,
    /// Iteration count.
    #[arg(long)]
    steps: Option<usize>,
    /// Comma-separated Landweber step sizes.
    #[arg(long, value_delimiter = ',')]
    gammas: Option<Vec<f64>>,
}

#[derive(Subcommand)]
enum Command {
    /// List the builtin experiments.
    List,
    /// Render the configured phantom and speed.
    Phantom(ConfigArgs),
    /// Forward-solve and write the boundary trace.
    Forward(ConfigArgs),
    /// Reconstruct with the configured method.
    Reconstruct {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// landweber or atr.
        #[arg(long)]
        method: Option<String>,
    },
    /// Landweber error table over step sizes.
    SweepGamma(ConfigArgs),
    /// Assemble the normal operator on a small grid and analyze its spectrum.
    Spectrum {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Also decompose the wave-adjoint normal operator (non-symmetric path).
        #[arg(long)]
        wave_adjoint: bool,
        /// Eigenvectors to write as images.
        #[arg(long, value_delimiter = ',', default_value = "0,1")]
        images: Vec<usize>,
    },
    /// Tabulate g_N on [0, sqrt(2/gamma)].
    GnCurve {
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, short, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 512)]
        samples: usize,
    },
    /// Run an experiment end to end.
    Run {
        /// Builtin experiment name or path to a JSON config.
        config: String,
    },
}

fn load(cli: &Cli, a: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    apply_overrides(cli, &mut cfg);
    if let Some(nx) = a.nx {
        cfg.grid.nx = nx;
    }
    if let Some(t) = a.t_final {
        cfg.grid.t_final = t;
    }
    if let Some(s) = a.steps {
        cfg.steps = s;
    }
    if let Some(g) = &a.gammas {
        cfg.gammas = g.clone();
    }
    Ok(cfg)
}

fn apply_overrides(cli: &Cli, cfg: &mut ExperimentConfig) {
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output = o.clone();
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn phantom(cfg: &ExperimentConfig) -> Result<()> {
    let setup = cfg.validate()?;
    let f = cfg.phantom.render(&setup.grid)?;
    fs::create_dir_all(&cfg.output)?;
    write_field_csv(&f, create(&cfg.output.join("phantom.csv"))?)?;
    let (lo, hi) = save_pgm(&f, &cfg.output.join("phantom.pgm"))?;
    let (clo, chi) = save_pgm(&setup.c, &cfg.output.join("speed.pgm"))?;
    println!("phantom range [{lo}, {hi}], speed range [{clo}, {chi}] -> {}", cfg.output.display());
    Ok(())
}

fn forward(cfg: &ExperimentConfig) -> Result<()> {
    let setup = cfg.validate()?;
    let truth = cfg.phantom.render(&setup.grid)?;
    let data = experiments::synthesize_data(cfg, &setup, &truth)?;
    fs::create_dir_all(&cfg.output)?;
    write_trace_csv(&data, create(&cfg.output.join("trace.csv"))?)?;
    write_trace_binary(&data, create(&cfg.output.join("trace.bin"))?)?;
    println!(
        "trace {} levels x {} nodes, range [{:.4}, {:.4}] -> {}",
        data.levels(),
        data.perimeter_len(),
        data.min(),
        data.max(),
        cfg.output.display()
    );
    Ok(())
}

fn reconstruct(cfg: &ExperimentConfig) -> Result<bool> {
    let report = experiments::run(cfg)?;
    for c in &report.cells {
        match c.final_error() {
            Some(e) => println!(
                "{}: error {:.4} after {} steps ({:?})",
                c.label,
                e,
                c.log.last().map_or(0, |l| l.step),
                c.outcome
            ),
            None => println!("{}: {:?}", c.label, c.outcome),
        }
    }
    println!("artifacts in {}", cfg.output.display());
    Ok(report.all_diverged())
}

fn sweep(cfg: &ExperimentConfig) -> Result<bool> {
    let cells = experiments::sweep_gamma(cfg, &cfg.gammas)?;
    fs::create_dir_all(&cfg.output)?;
    experiments::write_sweep_csv(&cells, create(&cfg.output.join("sweep.csv"))?)?;
    for c in &cells {
        println!("gamma {}: {:?} {:?}", c.gamma.unwrap_or(f64::NAN), c.final_error(), c.outcome);
    }
    Ok(!cells.is_empty() && cells.iter().all(|c| matches!(c.outcome, mwt_core::landweber::Outcome::Diverged { .. })))
}

fn spectrum(cfg: &ExperimentConfig, wave_adjoint: bool, images: &[usize]) -> Result<()> {
    let setup = cfg.validate()?;
    let m = Measurement::new(setup.grid, setup.c.clone(), setup.measurement_config(cfg))?;
    let mask = if cfg.interior_margin.is_some() { setup.chi.clone() } else { setup.omega.clone() };
    let a = spectral::assemble_measurement(&m, &mask, OperatorKind::NormalViaTranspose)?;
    let report = spectral::eigendecompose(&a)?;
    let truth = cfg.phantom.render(&setup.grid)?;
    let mut summary = spectral::summarize(&report, &a.basis, Some(&truth))?;
    summary.asymmetry = Some(spectral::asymmetry(&a.matrix));
    fs::create_dir_all(&cfg.output)?;
    report.write_eigenvalues_csv(create(&cfg.output.join("eigenvalues.csv"))?)?;
    let power = spectral::power_spectrum(&truth, &a.basis, &report)?;
    spectral::write_power_spectrum_csv(&report, &power, create(&cfg.output.join("power_spectrum.csv"))?)?;
    if let Some(q) = &report.eigenvectors {
        for &j in images.iter().filter(|&&j| j < q.ncols()) {
            let col: Vec<f64> = q.column(j).iter().copied().collect();
            save_pgm(&a.basis.embed(&col)?, &cfg.output.join(format!("eigenvector_{j}.pgm")))?;
        }
    }
    if wave_adjoint {
        let w = spectral::assemble_measurement(&m, &mask, OperatorKind::NormalViaWaveAdjoint)?;
        let rw = spectral::eigendecompose(&w)?;
        rw.write_eigenvalues_csv(create(&cfg.output.join("eigenvalues_wave_adjoint.csv"))?)?;
        summary.max_imag_ratio = Some(rw.max_imag_ratio());
    }
    let text = serde_json::to_string_pretty(&summary)?;
    fs::write(cfg.output.join("spectrum.json"), &text)?;
    println!("{text}");
    Ok(())
}

fn gn_curve(gamma: f64, n: usize, samples: usize, out: &Path) -> Result<()> {
    if !(gamma > 0.0) || samples < 2 {
        return Err(Error::InvalidArgument("gn-curve needs gamma > 0 and at least 2 samples".into()));
    }
    let top = (2.0 / gamma).sqrt();
    let lambdas: Vec<f64> = (0..samples).map(|i| top * i as f64 / (samples - 1) as f64).collect();
    let values = g_n_curve(gamma, n, &lambdas);
    fs::create_dir_all(out)?;
    let mut w = create(&out.join(format!("gn_{n}.csv")))?;
    writeln!(w, "lambda,g")?;
    for (l, g) in lambdas.iter().zip(&values) {
        writeln!(w, "{l:e},{g:e}")?;
    }
    let (arg, max) = g_n_max(gamma, n)?;
    println!("max g_{n} = {max:.6} at lambda = {arg:.6}");
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::List => {
            for name in experiments::builtin_names() {
                println!("{name}");
            }
            Ok(false)
        }
        Command::Phantom(a) => phantom(&load(cli, a)?).map(|_| false),
        Command::Forward(a) => forward(&load(cli, a)?).map(|_| false),
        Command::Reconstruct { cfg, method } => {
            let mut c = load(cli, cfg)?;
            if let Some(m) = method {
                c.method = match m.as_str() {
                    "landweber" => Method::Landweber,
                    "atr" => Method::Atr,
                    other => return Err(Error::InvalidArgument(format!("unknown method '{other}'"))),
                };
            }
            reconstruct(&c)
        }
        Command::SweepGamma(a) => sweep(&load(cli, a)?),
        Command::Spectrum { cfg, wave_adjoint, images } => {
            let mut a = cfg.clone();
            a.nx = a.nx.or(Some(41));
            spectrum(&load(cli, &a)?, *wave_adjoint, images).map(|_| false)
        }
        Command::GnCurve { gamma, n, samples } => {
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            gn_curve(*gamma, *n, *samples, &out).map(|_| false)
        }
        Command::Run { config } => {
            let mut c = ExperimentConfig::load(config)?;
            apply_overrides(cli, &mut c);
            reconstruct(&c)
        }
    }
}

#[cfg(feature = "parallel")]
fn set_threads(n: Option<usize>) {
    if let Some(n) = n {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

#[cfg(not(feature = "parallel"))]
fn set_threads(_: Option<usize>) {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    set_threads(cli.threads);
    match dispatch(&cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("error: every reconstruction diverged");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(experiments::exit_code(&e) as u8)
        }
    }
}
