use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use oldroyd::config::RunConfig;
use oldroyd::experiments::{
    default_suite_grid, inequality_suite, refinement_study, run_ensemble, sort_cutoffs, MIN_TRIALS,
};
use oldroyd::monitor::write_csv;
use oldroyd::noise::NoiseSampler;
use oldroyd::Error;

const EXIT_INVARIANT: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "oldroyd", version, about = "Stochastic viscoelastic flow simulator")]
struct Cli {
    /// Worker threads for ensemble and refinement runs (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Override the master seed from the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trajectory and write its energy history and stopping event.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo survival estimate for the energy stopping time.
    Ensemble {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        runs: usize,
        /// Comma-separated survival times.
        #[arg(long, value_delimiter = ',', required = true)]
        deltas: Vec<f64>,
        /// Override the energy threshold N from the config.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Common-noise runs at several cutoffs.
    Refine {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', required = true)]
        cutoffs: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        paths: usize,
    },
    /// Randomized checks of the spectral identities and inequalities.
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = MIN_TRIALS)]
        trials: usize,
        /// Optional directory for the JSON report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Lib(Error),
    Io(std::io::Error),
    Invariant(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

fn load(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seeds.master = seed;
    }
    Ok(cfg)
}

fn out_dir(path: &Path) -> Result<(), Failure> {
    fs::create_dir_all(path)?;
    Ok(())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Failure> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_records(path: &Path, records: &[oldroyd::monitor::EnergyRecord], provenance: &str) -> Result<(), Failure> {
    let mut w = BufWriter::new(File::create(path)?);
    write_csv(&mut w, records, provenance)?;
    w.flush()?;
    Ok(())
}

fn simulate(common: &Common) -> Result<(), Failure> {
    let cfg = load(common)?;
    let sim = cfg.simulation()?;
    out_dir(&common.out)?;
    let initial = cfg.initial_state(sim.grid(), 0);
    let tr = sim.simulate(initial, NoiseSampler::for_run(cfg.seeds.master, 0))?;
    write_records(&common.out.join("energy.csv"), &tr.records, sim.provenance())?;
    write_json(&common.out.join("stop.json"), &tr.event)?;
    if let Some(path) = &tr.noise_path {
        path.save(&common.out.join("noise.path"))?;
    }
    println!(
        "{:?} at t = {} after {} steps, E_N = {:e}",
        tr.event.kind, tr.event.t_stop, tr.steps_taken, tr.event.e_n
    );
    Ok(())
}

fn ensemble(common: &Common, runs: usize, deltas: &[f64], threshold: Option<f64>) -> Result<(), Failure> {
    let mut cfg = load(common)?;
    if let Some(n) = threshold {
        cfg.monitor.threshold = n;
        cfg.validate()?;
    }
    let sim = cfg.simulation()?;
    let grid = sim.grid().clone();
    let init = |run: u64| cfg.initial_state(&grid, run);
    let ens = run_ensemble(&sim, &init, runs, deltas, cfg.seeds.master, true)?;
    out_dir(&common.out)?;
    let runs_dir = common.out.join("runs");
    out_dir(&runs_dir)?;
    // Written sequentially after the parallel phase.
    for (i, rec) in ens.records.iter().enumerate() {
        let prov = format!("{}\nrun={i}", sim.provenance());
        write_records(&runs_dir.join(format!("run_{i:05}.csv")), rec, &prov)?;
    }
    write_json(&common.out.join("ensemble.json"), &ens.result)?;
    let r = &ens.result;
    for i in 0..r.deltas.len() {
        println!(
            "delta = {:<10} P(rho_N > delta) = {:.4}  [{:.4}, {:.4}]",
            r.deltas[i], r.survival[i], r.wilson_lo[i], r.wilson_hi[i]
        );
    }
    println!("threshold stops: {}, divergences: {}", r.threshold_stops, r.divergences);
    if !r.survival_nonincreasing() {
        return Err(Failure::Invariant("survival estimate increases in delta".into()));
    }
    Ok(())
}

fn refine(common: &Common, cutoffs: &[f64], paths: usize) -> Result<(), Failure> {
    let cfg = load(common)?;
    let (cutoffs, reordered) = sort_cutoffs(cutoffs);
    if reordered {
        eprintln!("warning: cutoffs reordered to {cutoffs:?}");
    }
    let sims = cutoffs
        .iter()
        .map(|&n| cfg.simulation_on(&cfg.grid_for_cutoff(n)?))
        .collect::<oldroyd::Result<Vec<_>>>()?;
    let init = |g: &std::sync::Arc<oldroyd::spectral::SpectralGrid>| cfg.initial_state(g, 0);
    let r = refinement_study(&sims, &init, paths, cfg.seeds.master)?;
    out_dir(&common.out)?;
    write_json(&common.out.join("refinement.json"), &r)?;
    for (i, m) in r.mean_sup_v.iter().enumerate() {
        println!(
            "n = {:>5} m = {:>5}  E sup|v_n - v_m| = {:.4e} (sem {:.2e})  E sup|tau_n - tau_m| = {:.4e}",
            r.cutoffs[i],
            r.cutoffs[i + 1],
            m,
            r.sem_sup_v[i],
            r.mean_sup_tau[i]
        );
    }
    println!("ratios {:?}, decay rate {:.3}, window {}", r.ratios, r.decay_rate, r.common_window);
    if r.paths.iter().flat_map(|p| &p.pairs).any(|d| !(d.sup_v_l2 >= 0.0 && d.sup_tau_l2 >= 0.0)) {
        return Err(Failure::Invariant("negative or undefined difference".into()));
    }
    Ok(())
}

fn verify(seed: u64, trials: usize, out: Option<&Path>) -> Result<(), Failure> {
    let report = inequality_suite(&default_suite_grid(), seed, trials)?;
    for c in &report.exact {
        println!("{:<48} worst {:.3e} tol {:.0e}  {}", c.name, c.worst, c.tol, if c.passed { "ok" } else { "FAIL" });
    }
    for c in &report.fitted {
        println!(
            "{:<48} ratio in [{:.4}, {:.4}] spread {:.4}  {}",
            c.name,
            c.min_ratio,
            c.max_ratio,
            c.scaling_spread,
            if c.passed { "ok" } else { "FAIL" }
        );
    }
    if let Some(dir) = out {
        out_dir(dir)?;
        write_json(&dir.join("verify.json"), &report)?;
    }
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Invariant(format!("failed checks: {}", report.failures().join(", "))))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Lib(Error::Config("--threads must be at least 1".into())));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Lib(Error::Config(e.to_string())))?;
    }
    match &cli.command {
        Command::Simulate { common } => simulate(common),
        Command::Ensemble { common, runs, deltas, threshold } => ensemble(common, *runs, deltas, *threshold),
        Command::Refine { common, cutoffs, paths } => refine(common, cutoffs, *paths),
        Command::Verify { seed, trials, out } => verify(*seed, *trials, out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Io(_) | Error::Format { .. } => EXIT_IO,
                e if e.is_config() => EXIT_CONFIG,
                _ => EXIT_INVARIANT,
            })
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_IO)
        }
        Err(Failure::Invariant(msg)) => {
            eprintln!("invariant violated: {msg}");
            ExitCode::from(EXIT_INVARIANT)
        }
    }
}
