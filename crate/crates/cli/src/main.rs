use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bures_gpca::dataset::GaussianDataset;
use bures_gpca::error::GpcaError;
use bures_gpca::experiments::{
    circle_parameters, gen_circle, gen_grid, gen_random_spectral, run_comparison, run_distortion_curve,
    run_random_trials, timed, Comparison, ComparisonConfig, DistortionConfig, ExperimentReport, RandomTrialsConfig,
    SpectralRanges,
};
use bures_gpca::io::{load_dataset, projections_to_csv, report_to_json, rows_to_csv};
use bures_gpca::plot::{cone_plot_svg, Curve};
use bures_gpca::solver::SolverConfig;
use bures_gpca::univariate::{crosscheck_with_solver, fit_1d_gpca, grid_search_line, Gaussian1D};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

const EXIT_VALIDATION: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

/// Geodesic PCA of Gaussian covariances under the Bures-Wasserstein metric,
/// compared against tangent PCA.
#[derive(Parser)]
#[command(name = "bures-gpca", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Clone)]
struct Common {
    /// Seed for restarts and random datasets.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Safety margin of the admissible time interval.
    #[arg(long, global = true, default_value_t = bures_gpca::geodesic::DEFAULT_EPSILON)]
    epsilon: f64,
    /// Solver restarts; the best is kept.
    #[arg(long, global = true, default_value_t = 5)]
    restarts: usize,
    /// Outer iteration cap per restart.
    #[arg(long, global = true, default_value_t = SolverConfig::default().outer_max_iters)]
    max_iters: usize,
    /// Number of GPCA components.
    #[arg(long, global = true, default_value_t = 2)]
    components: usize,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Also render cone coordinates and components as SVG (d = 2 only).
    #[arg(long, global = true)]
    plot: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Diagonal covariances diag(a², b²) on a regular grid.
    Grid {
        #[arg(long, value_parser = parse_range, default_value = "1,3")]
        a2_range: (f64, f64),
        #[arg(long, value_parser = parse_range, default_value = "1,2")]
        b2_range: (f64, f64),
        #[arg(long, default_value_t = 5)]
        na: usize,
        #[arg(long, default_value_t = 5)]
        nb: usize,
    },
    /// Rotations of diag(a², b²) on an open circle.
    Circle {
        /// Anisotropy |a − b| / (a + b), with a + b = 2.
        #[arg(long, default_value_t = 0.8, conflicts_with_all = ["a", "b"])]
        ratio: f64,
        #[arg(long, requires = "b")]
        a: Option<f64>,
        #[arg(long, requires = "a")]
        b: Option<f64>,
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long, default_value_t = 0.05)]
        opening: f64,
    },
    /// First-component improvement over TPCA on random spectral datasets.
    RandomTrials {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, value_parser = parse_range, default_value = "0.5,2")]
        a_range: (f64, f64),
        #[arg(long, value_parser = parse_range, default_value = "0.5,2")]
        b_range: (f64, f64),
        #[arg(long, value_parser = parse_range, default_value = "0,3.141592653589793")]
        theta_range: (f64, f64),
    },
    /// First-component improvement over TPCA as a function of anisotropy.
    DistortionCurve {
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.4,0.6,0.8")]
        ratios: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        trials_per_ratio: usize,
        #[arg(long, default_value_t = 0.05)]
        opening: f64,
    },
    /// Fit a user dataset (`.json`, or `.csv` with a `dim=d` header).
    Fit { dataset: PathBuf },
    /// Closed-form 1-D Gaussian PCA checked against a grid search and the
    /// general solver.
    #[command(name = "oracle-1d")]
    Oracle1d {
        /// JSON list of {"m": .., "sigma": ..}; a random cloud when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Size of the random cloud.
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long, default_value_t = 10_000)]
        angles: usize,
        #[arg(long, default_value_t = 1_000)]
        offsets: usize,
    },
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected lo,hi")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
    if lo.is_nan() || hi.is_nan() || lo > hi {
        return Err(format!("empty range {lo},{hi}"));
    }
    Ok((lo, hi))
}

/// What a subcommand produced.
struct Output {
    report: ExperimentReport,
    csv: String,
    converged: bool,
}

impl Common {
    fn solver(&self) -> SolverConfig {
        SolverConfig {
            epsilon: self.epsilon,
            restarts: self.restarts,
            outer_max_iters: self.max_iters,
            seed: self.seed,
            ..SolverConfig::default()
        }
    }

    fn comparison(&self) -> ComparisonConfig {
        ComparisonConfig {
            solver: self.solver(),
            components: self.components,
        }
    }
}

#[derive(Serialize)]
struct Echo<'a, G: Serialize> {
    seed: u64,
    dataset: G,
    comparison: &'a ComparisonConfig,
}

fn compare<G: Serialize>(id: &str, dataset: &GaussianDataset, generator: G, common: &Common) -> Result<Output> {
    let config = common.comparison();
    config.solver.validate()?;
    let (result, secs) = timed(|| run_comparison(dataset, &config));
    let result = result?;
    if let Some(path) = &common.plot {
        write(path, &plot(dataset, &result)?)?;
    }
    let echo = Echo {
        seed: common.seed,
        dataset: generator,
        comparison: &config,
    };
    Ok(Output {
        report: ExperimentReport::new(id, &echo, &result, secs)?,
        csv: projections_to_csv(&result.projections)?,
        converged: result.converged,
    })
}

fn plot(dataset: &GaussianDataset, c: &Comparison) -> Result<String> {
    let mut curves = vec![Curve::spanning(
        "TPCA 1",
        &c.tpca_component.segment,
        &c.tpca_component.projection_times,
    )];
    for comp in &c.gpca_components {
        curves.push(Curve::spanning(
            format!("GPCA {}", comp.order),
            &comp.segment,
            &comp.projection_times,
        ));
    }
    Ok(cone_plot_svg(dataset, &curves, Some(&c.tpca.barycenter))?)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct OracleResult {
    gaussians: Vec<Gaussian1D>,
    fit: bures_gpca::univariate::Fit1D,
    grid_cost: f64,
    grid_resolution: f64,
    grid_agrees: bool,
    crosscheck: bures_gpca::univariate::Crosscheck,
}

#[derive(Serialize)]
struct OracleRow {
    index: usize,
    m: f64,
    sigma: f64,
    time: f64,
    fitted_m: f64,
    fitted_sigma: f64,
}

fn oracle(common: &Common, input: Option<&Path>, n: usize, angles: usize, offsets: usize) -> Result<Output> {
    let gaussians: Vec<Gaussian1D> = match input {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).map_err(|e| GpcaError::Parse {
                line: e.line(),
                field: e.column(),
                message: e.to_string(),
            })?
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
            (0..n)
                .map(|_| Gaussian1D::new(rng.random_range(-2.0..2.0), rng.random_range(0.2..2.5)))
                .collect::<bures_gpca::error::Result<_>>()?
        }
    };
    let (result, secs) = timed(|| -> Result<OracleResult> {
        let fit = fit_1d_gpca(&gaussians)?;
        let grid = grid_search_line(&gaussians, angles, offsets)?;
        let centered: Vec<Gaussian1D> = gaussians
            .iter()
            .map(|g| Gaussian1D::new(0.0, g.std()))
            .collect::<bures_gpca::error::Result<_>>()?;
        let crosscheck = crosscheck_with_solver(&centered, &common.solver())?;
        Ok(OracleResult {
            grid_agrees: grid.cost >= fit.cost - 1e-9 && grid.cost - fit.cost <= grid.resolution,
            grid_cost: grid.cost,
            grid_resolution: grid.resolution,
            gaussians: gaussians.clone(),
            fit,
            crosscheck,
        })
    });
    let result = result?;
    let rows: Vec<OracleRow> = gaussians
        .iter()
        .zip(&result.fit.times)
        .enumerate()
        .map(|(index, (g, &t))| OracleRow {
            index,
            m: g.mean(),
            sigma: g.std(),
            time: t,
            fitted_m: result.fit.center.mean() + t * result.fit.direction[0],
            fitted_sigma: result.fit.center.std() + t * result.fit.direction[1],
        })
        .collect();
    #[derive(Serialize)]
    struct OracleEcho<'a> {
        seed: u64,
        input: Option<&'a Path>,
        n: usize,
        angles: usize,
        offsets: usize,
        solver: SolverConfig,
    }
    let echo = OracleEcho {
        seed: common.seed,
        input,
        n: gaussians.len(),
        angles,
        offsets,
        solver: common.solver(),
    };
    Ok(Output {
        converged: result.crosscheck.solver_converged,
        report: ExperimentReport::new("oracle-1d", &echo, &result, secs)?,
        csv: rows_to_csv(&rows)?,
    })
}

fn run(cli: &Cli) -> Result<bool> {
    let common = &cli.common;
    if common.plot.is_some()
        && matches!(
            cli.command,
            Command::RandomTrials { .. } | Command::DistortionCurve { .. } | Command::Oracle1d { .. }
        )
    {
        bail!(GpcaError::InvalidArgument(
            "--plot applies to grid, circle and fit".into()
        ));
    }
    let output = match &cli.command {
        Command::Grid {
            a2_range,
            b2_range,
            na,
            nb,
        } => {
            #[derive(Serialize)]
            struct GridEcho {
                a2_range: (f64, f64),
                b2_range: (f64, f64),
                na: usize,
                nb: usize,
            }
            let ds = gen_grid(*a2_range, *b2_range, *na, *nb)?;
            let echo = GridEcho {
                a2_range: *a2_range,
                b2_range: *b2_range,
                na: *na,
                nb: *nb,
            };
            compare("grid", &ds, echo, common)?
        }
        Command::Circle {
            ratio,
            a,
            b,
            n,
            opening,
        } => {
            #[derive(Serialize)]
            struct CircleEcho {
                a: f64,
                b: f64,
                ratio: f64,
                n: usize,
                opening: f64,
            }
            let (a, b) = match (a, b) {
                (Some(a), Some(b)) => (*a, *b),
                _ => circle_parameters(*ratio)?,
            };
            let ds = gen_circle(a, b, *n, *opening)?;
            let echo = CircleEcho {
                a,
                b,
                ratio: (a - b).abs() / (a + b),
                n: *n,
                opening: *opening,
            };
            compare("circle", &ds, echo, common)?
        }
        Command::Fit { dataset } => {
            #[derive(Serialize)]
            struct FitEcho<'a> {
                path: &'a Path,
                dim: usize,
                n: usize,
            }
            let ds = load_dataset(dataset)?;
            let echo = FitEcho {
                path: dataset,
                dim: ds.dim(),
                n: ds.len(),
            };
            compare("fit", &ds, echo, common)?
        }
        Command::RandomTrials {
            trials,
            n,
            a_range,
            b_range,
            theta_range,
        } => {
            let config = RandomTrialsConfig {
                trials: *trials,
                n: *n,
                ranges: SpectralRanges {
                    a: *a_range,
                    b: *b_range,
                    theta: *theta_range,
                },
                solver: common.solver(),
            };
            config.solver.validate()?;
            // fail fast on bad ranges before spawning the trials
            gen_random_spectral(2, &config.ranges, common.seed)?;
            let (summary, secs) = timed(|| run_random_trials(&config));
            let summary = summary?;
            Output {
                converged: summary.rows.iter().all(|r| r.converged),
                csv: rows_to_csv(&summary.rows)?,
                report: ExperimentReport::new("random-trials", &config, &summary, secs)?,
            }
        }
        Command::DistortionCurve {
            ratios,
            n,
            trials_per_ratio,
            opening,
        } => {
            let config = DistortionConfig {
                ratios: ratios.clone(),
                n: *n,
                trials_per_ratio: *trials_per_ratio,
                opening: *opening,
                solver: common.solver(),
            };
            config.solver.validate()?;
            let (rows, secs) = timed(|| run_distortion_curve(&config));
            let rows = rows?;
            Output {
                converged: rows.iter().all(|r| r.converged),
                csv: rows_to_csv(&rows)?,
                report: ExperimentReport::new("distortion-curve", &config, &rows, secs)?,
            }
        }
        Command::Oracle1d {
            input,
            n,
            angles,
            offsets,
        } => oracle(common, input.as_deref(), *n, *angles, *offsets)?,
    };
    let text = match common.format {
        Format::Json => report_to_json(&output.report),
        Format::Csv => output.csv,
    };
    match &common.out {
        Some(path) => write(path, &text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(output.converged)
}

/// Bad inputs and unusable paths are the caller's to fix; numerical failures
/// are internal.
fn is_validation(e: &anyhow::Error) -> bool {
    e.chain().any(|cause| {
        matches!(
            cause.downcast_ref::<GpcaError>(),
            Some(
                GpcaError::NotSymmetric { .. }
                    | GpcaError::NotPositiveDefinite { .. }
                    | GpcaError::Singular { .. }
                    | GpcaError::DimensionMismatch { .. }
                    | GpcaError::UnsupportedDimension(_)
                    | GpcaError::InvalidDataset(_)
                    | GpcaError::InvalidArgument(_)
                    | GpcaError::NoRemainingDirections { .. }
                    | GpcaError::Parse { .. }
                    | GpcaError::InvalidMatrix { .. }
                    | GpcaError::Io(_)
            )
        ) || cause.downcast_ref::<std::io::Error>().is_some()
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("warning: solver did not converge; results are written and flagged");
            ExitCode::from(EXIT_NOT_CONVERGED)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_validation(&e) {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
