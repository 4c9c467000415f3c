use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use kinetic_qsd::fleming_viot::conditioned_states;
use kinetic_qsd::histogram::PhaseHistogram;
use kinetic_qsd::integrator::{run_batch, survival_curve};
use kinetic_qsd::io::{emit_csv, emit_json, finite_value, write_file, RunStamp};
use kinetic_qsd::spectral::{richardson, solve_grid, NodeKind};
use kinetic_qsd::verify::{all_passed, qsd_pool};
use kinetic_qsd::{
    exit_law, fv_evolve, load_config, run_suite, BoundaryClass, Error, ParticleEnsemble, PhasePoint, QsdSampler, Result,
    RunConfig, Suite,
};

#[derive(Parser)]
#[command(name = "kqsd", version, about = "Absorbed kinetic Langevin dynamics and its quasi-stationary law")]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, env = "KQSD_THREADS", global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed of the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SimulateOutput {
    Records,
    Survival,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ExitStart {
    Fv,
    Spectral,
}

#[derive(Subcommand)]
enum Command {
    /// Independent trajectories from one start point until absorption or t_max.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Start position, comma separated; the centre of the domain by default.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        q: Option<Vec<f64>>,
        /// Start momentum, comma separated; zero by default.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        p: Option<Vec<f64>>,
        #[arg(long, value_enum, default_value_t = SimulateOutput::Records)]
        output: SimulateOutput,
    },
    /// Fleming-Viot particle system: snapshot histogram and branching rate.
    Fv {
        #[command(flatten)]
        common: Common,
    },
    /// Principal eigenpair of the discretised generator.
    Spectral {
        #[command(flatten)]
        common: Common,
        /// Also run the Richardson study over `spectral.levels` grids.
        #[arg(long)]
        richardson: bool,
    },
    /// Exit time, side and momentum from a quasi-stationary start.
    ExitLaw {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, value_enum, default_value_t = ExitStart::Fv)]
        start: ExitStart,
    },
    /// Numerical checks; prints a JSON array of reports, exit code 1 on any failure.
    Verify {
        #[arg(long, default_value = "all")]
        suite: Suite,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Conditioned law at time t from a point start, as a histogram.
    Conditioned {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        q: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        p: Option<Vec<f64>>,
    },
}

fn load(path: &Path, seed: Option<u64>) -> Result<RunConfig> {
    let mut config = load_config(path)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

fn output(out: Option<&Path>, body: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    match out {
        Some(path) => write_file(path, body),
        None => {
            let mut buf = Vec::new();
            body(&mut buf)?;
            std::io::stdout()
                .write_all(&buf)
                .map_err(|source| Error::Io { path: "<stdout>".into(), source })
        }
    }
}

fn start_point(config: &RunConfig, q: Option<Vec<f64>>, p: Option<Vec<f64>>) -> Result<PhasePoint> {
    let domain = config.position_domain()?;
    let d = domain.dim();
    let (lo, hi) = domain.bounding_box();
    let q = q.unwrap_or_else(|| (0..d).map(|i| 0.5 * (lo[i] + hi[i])).collect());
    let p = p.unwrap_or_else(|| vec![0.0; d]);
    let x = PhasePoint::new(&q, &p)?;
    if !domain.contains(x.q()) {
        return Err(Error::Domain(format!("start position {q:?} is outside the domain")));
    }
    Ok(x)
}

fn class_code(c: BoundaryClass) -> f64 {
    match c {
        BoundaryClass::Interior => 0.0,
        BoundaryClass::GammaPlus => 1.0,
        BoundaryClass::GammaZero => 2.0,
        BoundaryClass::GammaMinus => 3.0,
    }
}

fn coordinate_columns(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("q{i}")).chain((1..=d).map(|i| format!("p{i}"))).collect()
}

fn histogram_rows(h: &PhaseHistogram) -> Vec<Vec<f64>> {
    let area = h.h_q() * h.h_p();
    (0..h.masses.len())
        .map(|b| {
            let (q0, q1, p0, p1) = h.bin_edges(b);
            vec![q0, q1, p0, p1, h.masses[b], h.masses[b] / area]
        })
        .collect()
}

const HISTOGRAM_COLUMNS: [&str; 6] = ["q_lo", "q_hi", "p_lo", "p_hi", "mass", "density"];

fn interval_of(config: &RunConfig, what: &str) -> Result<(f64, f64)> {
    config
        .position_domain()?
        .as_interval()
        .ok_or_else(|| Error::Unsupported(format!("{what} needs a one-dimensional interval domain")))
}

#[derive(Serialize)]
struct FvSummary {
    particles: usize,
    time: f64,
    branching_rate: f64,
    branching_rate_half_width: f64,
    histogram: PhaseHistogram,
}

#[derive(Serialize)]
struct ExitSummary {
    exits: usize,
    censored: usize,
    mean_exit_time: f64,
    right_fraction: f64,
    histogram: kinetic_qsd::fleming_viot::ExitHistogram,
}

fn simulate(common: Common, samples: usize, q: Option<Vec<f64>>, p: Option<Vec<f64>>, output_kind: SimulateOutput) -> Result<()> {
    let config = load(&common.config, common.seed)?;
    let x0 = start_point(&config, q, p)?;
    let prop = kinetic_qsd::Propagator::new(&config.trajectory()?, &config.params()?, &config.position_domain()?)?;
    let records = run_batch(|_| Ok(x0), samples, &prop, config.seed)?;
    let stamp = RunStamp::of(&config);
    match (output_kind, common.format) {
        (SimulateOutput::Records, Format::Csv) => {
            let mut columns = vec!["trajectory".to_string(), "absorbed".into(), "exit_time".into()];
            columns.extend(coordinate_columns(x0.dim()));
            columns.push("class".into());
            let columns: Vec<&str> = columns.iter().map(String::as_str).collect();
            let rows: Vec<Vec<f64>> = records
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let mut row = vec![i as f64, f64::from(u8::from(r.absorbed)), r.exit_time];
                    row.extend_from_slice(r.exit_point.q());
                    row.extend_from_slice(r.exit_point.p());
                    row.push(class_code(r.exit_class));
                    row
                })
                .collect();
            output(common.out.as_deref(), |w| emit_csv(w, &stamp, &columns, &rows))
        }
        (SimulateOutput::Records, Format::Json) => Err(Error::Unsupported("per-trajectory records are CSV only".into())),
        (SimulateOutput::Survival, format) => {
            let n = 200;
            let times: Vec<f64> = (0..=n).map(|k| config.integrator.t_max * k as f64 / n as f64).collect();
            let curve = survival_curve(&records, &times);
            match format {
                Format::Csv => {
                    let rows: Vec<Vec<f64>> = curve.iter().map(|c| vec![c.0, c.1, c.2]).collect();
                    output(common.out.as_deref(), |w| emit_csv(w, &stamp, &["t", "survival", "std_error"], &rows))
                }
                Format::Json => output(common.out.as_deref(), |w| emit_json(w, &config, &curve)),
            }
        }
    }
}

fn fv(common: Common) -> Result<()> {
    let config = load(&common.config, common.seed)?;
    let (a, b) = interval_of(&config, "the fv histogram")?;
    let domain = config.position_domain()?;
    let params = config.params()?;
    let traj = config.trajectory()?;
    let start = QsdSampler::Uniform { domain: domain.clone(), p_max: params.sigma };
    let mut ens = ParticleEnsemble::from_sampler(&start, config.fv.particles, &domain, config.seed)?;
    fv_evolve(&mut ens, config.fv.burnin + config.fv.horizon, &traj, &params, &domain)?;
    let (rate, half) = ens.branching_rate(config.fv.burnin, config.fv.batches)?;
    let h = PhaseHistogram::from_points(&ens.particles, (a, b), config.p_max()?, config.fv.q_bins, config.fv.p_bins)?;
    match common.format {
        Format::Csv => {
            let stamp = RunStamp::of(&config);
            output(common.out.as_deref(), |w| emit_csv(w, &stamp, &HISTOGRAM_COLUMNS, &histogram_rows(&h)))?;
            eprintln!("branching rate {rate} +- {half}");
            Ok(())
        }
        Format::Json => {
            let summary = FvSummary { particles: ens.len(), time: ens.time, branching_rate: rate, branching_rate_half_width: half, histogram: h };
            output(common.out.as_deref(), |w| emit_json(w, &config, &summary))
        }
    }
}

fn spectral(common: Common, with_richardson: bool) -> Result<()> {
    let config = load(&common.config, common.seed)?;
    let params = config.params()?;
    let grid = config.main_grid()?;
    let (a, _, pair) = solve_grid(&grid, &params)?;
    match common.format {
        Format::Csv => {
            let rows: Vec<Vec<f64>> = (0..grid.len())
                .map(|k| {
                    let (i, j) = grid.coords(k);
                    let free = f64::from(u8::from(a.kinds[k] == NodeKind::Free));
                    vec![grid.q(i), grid.p(j), pair.phi_vec[k], pair.psi_vec[k], free]
                })
                .collect();
            let stamp = RunStamp::of(&config);
            output(common.out.as_deref(), |w| emit_csv(w, &stamp, &["q", "p", "phi", "psi", "phi_free"], &rows))?;
            eprintln!("lambda0 {} (adjoint {})", pair.lambda0, pair.lambda0_adjoint);
            Ok(())
        }
        Format::Json => {
            let s = &config.spectral;
            let study = if with_richardson {
                let base = config.grid(s.n_q >> (s.levels - 1), s.n_p >> (s.levels - 1))?;
                Some(richardson(&base, &params, s.levels)?)
            } else {
                None
            };
            let summary = serde_json::json!({
                "n_q": grid.n_q,
                "n_p": grid.n_p,
                "p_max": grid.p_max,
                "lambda0": pair.lambda0,
                "lambda0_adjoint": pair.lambda0_adjoint,
                "residual_phi": pair.residual_phi,
                "residual_psi": pair.residual_psi,
                "richardson": study.map(|st| serde_json::json!({ "levels": st.levels, "extrapolated": st.extrapolated, "best": st.best() })).unwrap_or_else(|| serde_json::json!({})),
            });
            output(common.out.as_deref(), |w| emit_json(w, &config, &summary))
        }
    }
}

fn exit(common: Common, samples: usize, start: ExitStart) -> Result<()> {
    let config = load(&common.config, common.seed)?;
    let domain = config.position_domain()?;
    let params = config.params()?;
    let traj = config.trajectory()?;
    let sampler = match start {
        ExitStart::Fv => qsd_pool(&config, config.seed, 20)?.sampler(),
        ExitStart::Spectral => {
            let grid = config.main_grid()?;
            let (_, _, pair) = solve_grid(&grid, &params)?;
            QsdSampler::from_grid(&grid, &pair.psi_vec)?
        }
    };
    let p_cut = config.p_max()?;
    let law = exit_law(&sampler, samples, &traj, &params, &domain, config.seed.wrapping_add(1), p_cut, config.verify.exit_p_bins)?;
    match common.format {
        Format::Csv => {
            let mut columns = vec!["exit_time".to_string(), "side".into(), "normal_momentum".into()];
            columns.extend(coordinate_columns(domain.dim()));
            let columns: Vec<&str> = columns.iter().map(String::as_str).collect();
            let rows: Vec<Vec<f64>> = (0..law.exit_times.len())
                .map(|k| {
                    let mut row = vec![law.exit_times[k], law.sides[k] as f64, law.normal_momenta[k]];
                    row.extend_from_slice(law.points[k].q());
                    row.extend_from_slice(law.points[k].p());
                    row
                })
                .collect();
            let stamp = RunStamp::of(&config);
            output(common.out.as_deref(), |w| emit_csv(w, &stamp, &columns, &rows))
        }
        Format::Json => {
            let exits = law.exit_times.len();
            if exits == 0 {
                return Err(Error::Starvation { survivors: 0, samples, time: traj.t_max });
            }
            let summary = ExitSummary {
                exits,
                censored: law.censored,
                mean_exit_time: law.exit_times.iter().sum::<f64>() / exits as f64,
                right_fraction: law.sides.iter().filter(|&&s| s == 1).count() as f64 / exits as f64,
                histogram: law.histogram,
            };
            output(common.out.as_deref(), |w| emit_json(w, &config, &summary))
        }
    }
}

fn conditioned(common: Common, t: f64, samples: usize, q: Option<Vec<f64>>, p: Option<Vec<f64>>) -> Result<()> {
    let config = load(&common.config, common.seed)?;
    let (a, b) = interval_of(&config, "the conditioned histogram")?;
    let x0 = start_point(&config, q, p)?;
    let states = conditioned_states(
        &QsdSampler::Point(x0),
        t,
        samples,
        &config.trajectory()?,
        &config.params()?,
        &config.position_domain()?,
        config.seed,
    )?;
    let h = PhaseHistogram::from_points(&states, (a, b), config.p_max()?, config.fv.q_bins, config.fv.p_bins)?;
    match common.format {
        Format::Csv => {
            let stamp = RunStamp::of(&config);
            output(common.out.as_deref(), |w| emit_csv(w, &stamp, &HISTOGRAM_COLUMNS, &histogram_rows(&h)))
        }
        Format::Json => output(common.out.as_deref(), |w| emit_json(w, &config, &h)),
    }
}

/// Returns whether every check passed.
fn verify(suite: Suite, config: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<bool> {
    let config = load(config, seed)?;
    let reports = run_suite(&config, suite)?;
    for r in &reports {
        eprintln!("{:<22} {:?} ({:.1} s)", r.name, r.status, r.elapsed_s);
        for name in r.failures() {
            eprintln!("    failed: {name}");
        }
    }
    let doc = finite_value(&reports, "reports")?;
    output(out, |w| {
        serde_json::to_writer_pretty(&mut *w, &doc).map_err(|e| Error::Mismatch(e.to_string()))?;
        w.push(b'\n');
        Ok(())
    })?;
    Ok(all_passed(&reports))
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Unsupported(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate { common, samples, q, p, output } => simulate(common, samples, q, p, output)?,
        Command::Fv { common } => fv(common)?,
        Command::Spectral { common, richardson } => spectral(common, richardson)?,
        Command::ExitLaw { common, samples, start } => exit(common, samples, start)?,
        Command::Conditioned { common, t, samples, q, p } => conditioned(common, t, samples, q, p)?,
        Command::Verify { suite, config, seed, out } => return verify(suite, &config, seed, out.as_deref()),
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
