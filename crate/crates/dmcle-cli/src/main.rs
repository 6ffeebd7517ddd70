//! Command-line front end: fit / cpp / select-xi / simulate.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error,
//! 4 non-convergence (the result is still written, flagged).

use clap::{Args, Parser, Subcommand};
use dmcle::estimator::{cpp_profile, fit_dmcle, fit_uniform_mcle, select_xi, FitOptions, FitResult};
use dmcle::models::{
    fit_gev_lmoments, frechet_transform, grand_mean, hetero_design, log_chol_from_sigma,
    mean_pairwise_correlation, pairwise_design, sigma_from_log_chol, smith_design,
    smith_moment_start, GevMargin, RNG_ALGORITHM,
};
use dmcle::simharness::{
    maxbias_to_csv, run_maxbias_curves, run_table1, run_table2, tables_to_csv, write_metadata_json,
    MaxBiasConfig, Table1Config, Table2Config,
};
use dmcle::variance::{clic, sandwich_variance, VarianceMethod};
use dmcle::{CompositeDesign, Error, ObsMatrix, StationCoords};
use serde_json::json;
use std::path::PathBuf;
use std::str::FromStr;

const EXIT_OK: i32 = 0;
const EXIT_CONFIG: i32 = 2;
const EXIT_DATA: i32 = 3;
const EXIT_NONCONV: i32 = 4;

const DEFAULT_GRID_END: f64 = std::f64::consts::LN_2; // -log(1/2)

#[derive(Parser)]
#[command(
    name = "dmcle",
    version,
    about = "Discriminative composite likelihood estimation",
    subcommand_negates_reqs = true
)]
struct Cli {
    /// Print the table of defaults and exit.
    #[arg(long)]
    show_defaults: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the D-McLE at a single xi and write a JSON result.
    Fit(FitArgs),
    /// Emit compatibility-profile weight trajectories over a xi grid (CSV).
    Cpp(CppArgs),
    /// Select xi by the stability stopping rule (JSON).
    SelectXi(SelectArgs),
    /// Run seeded Monte Carlo studies (CSV tables + JSON sidecar).
    #[command(subcommand)]
    Simulate(SimCmd),
}

#[derive(Args)]
struct ModelInput {
    /// Headered CSV, columns = variables/stations, rows = observations.
    #[arg(long)]
    input: PathBuf,
    /// Model family.
    #[arg(long, value_parser = ["equicorr", "hetero-location", "smith"])]
    model: String,
    /// Station coordinates CSV (station,x,y); required for --model smith.
    #[arg(long)]
    coords: Option<PathBuf>,
    /// GEV margin parameters CSV (station,mu,gamma,zeta); smith only.
    /// Fitted by L-moments per column when absent.
    #[arg(long)]
    margins: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: ModelInput,
    /// Divergence from uniform weights, in [0, log m).
    #[arg(long, default_value_t = 0.0)]
    xi: f64,
    /// Variance method for the sandwich.
    #[arg(long, default_value = "plugin")]
    variance: String,
    /// Output JSON path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CppArgs {
    #[command(flatten)]
    data: ModelInput,
    /// Grid as start:step:end (defaults to 0:0.05:0.6931).
    #[arg(long)]
    xi_grid: Option<String>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    data: ModelInput,
    #[arg(long)]
    xi_grid: Option<String>,
    /// Stability threshold; defaults to 5% of the xi=0 estimate norm.
    #[arg(long)]
    tau: Option<f64>,
    /// Output JSON path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SimCmd {
    /// Equicorrelated-normal correlation study (bias^2 and var x 100).
    Table1 {
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = 2000)]
        reps: usize,
        /// Full-scale replication count (overrides --reps with 10000).
        #[arg(long)]
        full_scale: bool,
        #[arg(long, default_value_t = 20240)]
        seed: u64,
        #[arg(long)]
        xi_grid: Option<String>,
        #[arg(long)]
        no_mle: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Heterogeneous-variance location study (bias^2 and var x 1000).
    Table2 {
        #[arg(long, default_value_t = 2)]
        mstar: usize,
        #[arg(long, default_value_t = 1.0)]
        shift: f64,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 2000)]
        reps: usize,
        #[arg(long)]
        full_scale: bool,
        #[arg(long, default_value_t = 20240)]
        seed: u64,
        #[arg(long)]
        xi_grid: Option<String>,
        #[arg(long)]
        no_mle: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Worst-case bias curves over a delta grid.
    Maxbias {
        #[arg(long, default_value_t = 10)]
        m: usize,
        /// Incompatible-model counts (repeatable).
        #[arg(long = "mstar", num_args = 1.., value_delimiter = ',', default_values_t = vec![0, 1, 2, 3, 4])]
        mstar: Vec<usize>,
        /// Tilting constants (repeatable).
        #[arg(long = "alpha1", num_args = 1.., value_delimiter = ',', default_values_t = vec![0.0, 1.0, 2.0, 3.0, 4.0])]
        alpha1: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        h1: f64,
        #[arg(long, default_value_t = 6.0)]
        delta_max: f64,
        #[arg(long, default_value_t = 0.05)]
        delta_step: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = Cli::parse();
    if cli.show_defaults {
        print_defaults();
        return EXIT_OK;
    }
    let Some(command) = cli.command else {
        eprintln!("error: a subcommand is required (fit | cpp | select-xi | simulate); see --help");
        return EXIT_CONFIG;
    };
    if let Ok(threads) = std::env::var("DMCLE_THREADS") {
        match threads.parse::<usize>() {
            Ok(t) if t >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
            }
            _ => {
                eprintln!("error: DMCLE_THREADS must be a positive integer, got '{threads}'");
                return EXIT_CONFIG;
            }
        }
    }
    let result = match command {
        Command::Fit(args) => cmd_fit(args),
        Command::Cpp(args) => cmd_cpp(args),
        Command::SelectXi(args) => cmd_select_xi(args),
        Command::Simulate(sim) => cmd_simulate(sim),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Data(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_) => EXIT_DATA,
        Error::Validation(_)
        | Error::InfeasibleDivergence { .. }
        | Error::DegenerateTilt { .. }
        | Error::UnreachableDivergence { .. }
        | Error::Domain(_)
        | Error::RankDeficient { .. }
        | Error::UnusableMargin(_)
        | Error::Config(_) => EXIT_CONFIG,
        Error::Selection(_) => EXIT_NONCONV,
    }
}

fn print_defaults() {
    let opts = FitOptions::default();
    println!("dmcle defaults");
    println!("  outer weight tolerance        {:e}", opts.weight_tol);
    println!("  outer iteration cap           {}", opts.max_outer);
    println!("  inner score tolerance         {:e}", opts.score_tol);
    println!("  inner iteration cap           {}", opts.max_inner);
    println!("  step halvings per Newton step {}", opts.max_halvings);
    println!("  tilt solver |KL - xi| <=      1e-10");
    println!("  xi grid                       0:0.05:{DEFAULT_GRID_END} (select-xi, cpp)");
    println!("  tau                           0.05 * ||theta_hat(xi=0)||");
    println!("  variance method               plugin (alternative: jackknife)");
    println!("  simulate replications         2000 (desk scale; --full-scale = 10000)");
    println!("  simulate seed                 20240");
    println!("  rng                           {RNG_ALGORITHM}");
    println!("  threads                       DMCLE_THREADS env var (default: all cores)");
    println!("  exit codes                    0 ok, 2 config, 3 data, 4 non-convergence");
}

fn parse_grid(spec: &Option<String>) -> Result<Vec<f64>, Error> {
    let (start, step, end) = match spec {
        None => (0.0, 0.05, DEFAULT_GRID_END),
        Some(s) => {
            let parts: Vec<&str> = s.split(':').collect();
            if parts.len() != 3 {
                return Err(Error::Config(format!(
                    "--xi-grid expects start:step:end, got '{s}'"
                )));
            }
            let nums: Result<Vec<f64>, _> = parts.iter().map(|p| f64::from_str(p)).collect();
            let nums =
                nums.map_err(|_| Error::Config(format!("--xi-grid has non-numeric parts: '{s}'")))?;
            (nums[0], nums[1], nums[2])
        }
    };
    if !(step > 0.0) || end < start {
        return Err(Error::Config(format!(
            "--xi-grid must have positive step and end >= start, got {start}:{step}:{end}"
        )));
    }
    let mut grid = Vec::new();
    let mut x = start;
    while x <= end + 1e-12 {
        grid.push(x);
        x = start + step * (grid.len() as f64);
    }
    if let Some(&last) = grid.last() {
        if end - last > 1e-9 {
            grid.push(end);
        }
    }
    Ok(grid)
}

/// Builds the design, the start value, and a config-echo fragment.
fn build_design(
    input: &ModelInput,
) -> Result<(CompositeDesign, Vec<f64>, serde_json::Value), Error> {
    let data = ObsMatrix::read_csv(&input.input)?;
    match input.model.as_str() {
        "equicorr" => {
            let design = pairwise_design(&data)?;
            let start = vec![mean_pairwise_correlation(&data)];
            let echo = json!({
                "model": "equicorr",
                "input": input.input.display().to_string(),
                "n": data.n(),
                "d": data.d(),
            });
            Ok((design, start, echo))
        }
        "hetero-location" => {
            let design = hetero_design(&data)?;
            let start = vec![grand_mean(&data)];
            let echo = json!({
                "model": "hetero-location",
                "input": input.input.display().to_string(),
                "n": data.n(),
                "d": data.d(),
            });
            Ok((design, start, echo))
        }
        "smith" => {
            let coords_path = input.coords.as_ref().ok_or_else(|| {
                Error::Config("--model smith requires --coords".to_string())
            })?;
            let coords = StationCoords::read_csv(coords_path)?.aligned_to(data.names())?;
            let margins: Vec<GevMargin> = match &input.margins {
                Some(path) => dmcle::data::read_margins_csv(path, data.names())?,
                None => data
                    .names()
                    .iter()
                    .enumerate()
                    .map(|(j, _)| fit_gev_lmoments(&data.column(j)))
                    .collect::<Result<_, _>>()?,
            };
            let mut cols = Vec::with_capacity(data.d());
            let mut boundary_total = 0usize;
            for j in 0..data.d() {
                let t = frechet_transform(&data.column(j), &margins[j])?;
                boundary_total += t.boundary_count;
                cols.push(t.z);
            }
            if boundary_total > 0 {
                eprintln!(
                    "warning: {boundary_total} observation(s) fell on the GEV support boundary and were floored"
                );
            }
            let frechet = ObsMatrix::from_columns(data.names().to_vec(), &cols)?;
            let design = smith_design(&frechet, &coords)?;
            let start = log_chol_from_sigma(&smith_moment_start(&frechet, &coords))
                .unwrap_or([0.0, 0.0, 0.0])
                .to_vec();
            let echo = json!({
                "model": "smith",
                "input": input.input.display().to_string(),
                "coords": coords_path.display().to_string(),
                "margins": input.margins.as_ref().map(|p| p.display().to_string()),
                "margin_estimates": margins.iter().zip(data.names()).map(|(m, name)| json!({
                    "station": name, "mu": m.mu, "gamma": m.gamma, "zeta": m.zeta
                })).collect::<Vec<_>>(),
                "boundary_observations": boundary_total,
                "n": data.n(),
                "d": data.d(),
            });
            Ok((design, start, echo))
        }
        other => Err(Error::Config(format!("unknown model '{other}'"))),
    }
}

fn fit_to_json(
    design: &CompositeDesign,
    fit: &FitResult,
    config_echo: serde_json::Value,
) -> serde_json::Value {
    json!({
        "config": config_echo,
        "theta_hat": fit.theta_hat,
        "xi": fit.xi,
        "alpha1": fit.alpha1,
        "weights": design
            .labels()
            .iter()
            .zip(fit.weights.iter())
            .map(|(l, w)| json!({"unit": l, "weight": w}))
            .collect::<Vec<_>>(),
        "converged": fit.converged,
        "outer_iterations": fit.outer_iterations,
        "se": fit.se,
        "h": fit.h_rows(),
        "k": fit.k_rows(),
        "clic": fit.clic,
        "trace_summary": {
            "iterations": fit.trace.len(),
            "final_composite_loglik": fit.trace.last().map(|t| t.composite_loglik),
        },
    })
}

fn write_json(out: &Option<PathBuf>, value: &serde_json::Value) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_fit(args: FitArgs) -> Result<i32, Error> {
    let method = VarianceMethod::from_str(&args.variance)?;
    let (design, moment_start, mut echo) = build_design(&args.data)?;
    echo["xi"] = json!(args.xi);
    echo["variance"] = json!(args.variance);
    let opts = FitOptions::default();
    // Initialization: the uniform-weight McLE solved from the moment start.
    let warm = fit_uniform_mcle(&design, &moment_start, &opts)?;
    let start = if warm.converged {
        warm.theta_hat
    } else {
        moment_start
    };
    let mut fit = fit_dmcle(&design, args.xi, &start, &opts)?;
    if fit.converged {
        let var = sandwich_variance(&design, &fit, method)?;
        fit.set_variance(var.h, var.k, var.se);
        fit.clic = Some(clic(&design, &fit)?);
        if args.data.model == "smith" {
            echo["sigma_hat"] = json!(sigma_from_log_chol(&fit.theta_hat));
        }
        write_json(&args.out, &fit_to_json(&design, &fit, echo))?;
        Ok(EXIT_OK)
    } else {
        // Result still written, flagged.
        write_json(&args.out, &fit_to_json(&design, &fit, echo))?;
        eprintln!("error: fit did not converge (result written with converged=false)");
        Ok(EXIT_NONCONV)
    }
}

fn cmd_cpp(args: CppArgs) -> Result<i32, Error> {
    let grid = parse_grid(&args.xi_grid)?;
    let (design, start, mut echo) = build_design(&args.data)?;
    let t0 = std::time::Instant::now();
    let prof = cpp_profile(&design, &grid, &start, &FitOptions::default())?;
    let mut csv = String::from("xi,");
    csv.push_str(&prof.labels.join(","));
    csv.push('\n');
    for (i, &xi) in prof.grid.iter().enumerate() {
        csv.push_str(&xi.to_string());
        for w in &prof.weights[i] {
            csv.push(',');
            csv.push_str(&w.to_string());
        }
        csv.push('\n');
    }
    std::fs::write(&args.out, &csv)?;
    echo["xi_grid"] = json!(grid);
    write_metadata_json(
        &args.out.with_extension("meta.json"),
        echo,
        0,
        t0.elapsed().as_secs_f64(),
    )?;
    if prof.converged.iter().any(|c| !c) {
        eprintln!("error: some grid points did not converge");
        return Ok(EXIT_NONCONV);
    }
    Ok(EXIT_OK)
}

fn cmd_select_xi(args: SelectArgs) -> Result<i32, Error> {
    let grid = parse_grid(&args.xi_grid)?;
    let (design, start, mut echo) = build_design(&args.data)?;
    echo["xi_grid"] = json!(grid);
    echo["tau"] = json!(args.tau);
    let sel = select_xi(&design, &grid, args.tau, &start, &FitOptions::default())?;
    let value = json!({
        "config": echo,
        "grid": sel.grid,
        "estimates": sel.estimates,
        "chosen_xi": sel.chosen_xi,
        "selected": sel.selected,
        "tau": sel.tau,
    });
    write_json(&args.out, &value)?;
    Ok(EXIT_OK)
}

fn cmd_simulate(sim: SimCmd) -> Result<i32, Error> {
    let t0 = std::time::Instant::now();
    match sim {
        SimCmd::Table1 {
            eps,
            n,
            reps,
            full_scale,
            seed,
            xi_grid,
            no_mle,
            out,
        } => {
            let cfg = Table1Config {
                eps,
                n,
                replications: if full_scale { 10_000 } else { reps },
                xi_grid: match &xi_grid {
                    Some(_) => parse_grid(&xi_grid)?,
                    None => (0..=10).map(|i| i as f64 / 10.0).collect(),
                },
                seed,
                include_mle: !no_mle,
                ..Table1Config::default()
            };
            let table = run_table1(&cfg)?;
            std::fs::write(&out, tables_to_csv(&[table]))?;
            write_metadata_json(
                &out.with_extension("meta.json"),
                serde_json::to_value(&cfg)?,
                seed,
                t0.elapsed().as_secs_f64(),
            )?;
        }
        SimCmd::Table2 {
            mstar,
            shift,
            n,
            reps,
            full_scale,
            seed,
            xi_grid,
            no_mle,
            out,
        } => {
            let cfg = Table2Config {
                m_star: mstar,
                shift,
                n,
                replications: if full_scale { 10_000 } else { reps },
                xi_grid: match &xi_grid {
                    Some(_) => parse_grid(&xi_grid)?,
                    None => (0..=7).map(|i| i as f64 / 10.0).collect(),
                },
                seed,
                include_mle: !no_mle,
                ..Table2Config::default()
            };
            let table = run_table2(&cfg)?;
            std::fs::write(&out, tables_to_csv(&[table]))?;
            write_metadata_json(
                &out.with_extension("meta.json"),
                serde_json::to_value(&cfg)?,
                seed,
                t0.elapsed().as_secs_f64(),
            )?;
        }
        SimCmd::Maxbias {
            m,
            mstar,
            alpha1,
            h1,
            delta_max,
            delta_step,
            out,
        } => {
            if !(delta_step > 0.0 && delta_max > 0.0) {
                return Err(Error::Config(
                    "--delta-max and --delta-step must be positive".to_string(),
                ));
            }
            let steps = (delta_max / delta_step).round() as usize;
            let cfg = MaxBiasConfig {
                m,
                m_star_list: mstar,
                alpha1_list: alpha1,
                h1,
                delta_grid: (0..=steps).map(|i| i as f64 * delta_step).collect(),
                ..MaxBiasConfig::default()
            };
            let rows = run_maxbias_curves(&cfg)?;
            std::fs::write(&out, maxbias_to_csv(&rows))?;
            write_metadata_json(
                &out.with_extension("meta.json"),
                serde_json::to_value(&cfg)?,
                0,
                t0.elapsed().as_secs_f64(),
            )?;
        }
    }
    Ok(EXIT_OK)
}
