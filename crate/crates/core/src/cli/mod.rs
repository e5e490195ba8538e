//! Command-line front end. Every command is deterministic given its
//! arguments and seed, whatever the thread count.

mod args;

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde::Serialize;
use thiserror::Error;

pub use args::{
    CiArgs, Cli, Command, EstimateArgs, HeatmapArgs, ModelArgs, SimulateArgs, SizeArgs, Suite, TuneArgs, TuneKnobs,
    ValidateArgs,
};

use crate::estimate::{
    conditional_mc, conditional_mc_budget, mise_ratio_experiment, read_counts_csv, write_counts_csv, EstimateError,
    ExperimentConfig, IseTarget, McRun, PmfMeta, RunOptions,
};
use crate::infer::{traces, upper_confidence_bound, CiReport, InferError};
use crate::model::{builtin, parse_model, ReactionNetwork};
use crate::optimize::{build_lattice, tune, Objective, OptimizeError, PilotEnsemble, TuneConfig, TuneResult};
use crate::simulate::{Domain, FamilyStream, SeedSpec, SimulationError, Simulator};
use crate::validate::{self, CriterionReport};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Model(String),
    #[error("{0}")]
    Runtime(String),
    #[error("{0} check(s) failed")]
    Validation(usize),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Model(_) => 3,
            CliError::Runtime(_) => 4,
            CliError::Validation(_) => 5,
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Runtime(format!("I/O error: {e}"))
    }
}

impl From<SimulationError> for CliError {
    fn from(e: SimulationError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<EstimateError> for CliError {
    fn from(e: EstimateError) -> Self {
        match e {
            EstimateError::InvalidParameter(msg) => CliError::Usage(msg),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<OptimizeError> for CliError {
    fn from(e: OptimizeError) -> Self {
        match e {
            OptimizeError::PilotTooSmall(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<InferError> for CliError {
    fn from(e: InferError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// Parses arguments, runs the command and maps errors to exit codes.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(4);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Tune(a) => cmd_tune(&a),
        Command::Estimate(a) => cmd_estimate(&a),
        Command::Heatmap(a) => cmd_heatmap(&a),
        Command::Ci(a) => cmd_ci(&a),
        Command::Validate(a) => cmd_validate(&a),
    }
}

/// Resolves `builtin:NAME` or reads and parses a model file.
pub fn load_model(spec: &str) -> Result<ReactionNetwork, CliError> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return builtin(name).ok_or_else(|| CliError::Model(format!("unknown builtin model `{name}`")));
    }
    let text = fs::read_to_string(spec).map_err(|e| CliError::Model(format!("cannot read model `{spec}`: {e}")))?;
    parse_model(&text).map_err(|e| CliError::Model(format!("{spec}: {e}")))
}

struct Loaded {
    network: ReactionNetwork,
    seed: SeedSpec,
    opts: RunOptions,
    /// Species names of the estimated coordinates.
    names: Vec<String>,
}

fn load(a: &ModelArgs) -> Result<Loaded, CliError> {
    let network = load_model(&a.model)?;
    let dims = match &a.marginal {
        None => None,
        Some(names) => Some(
            names
                .iter()
                .map(|s| {
                    network
                        .species_index(s)
                        .ok_or_else(|| CliError::Usage(format!("unknown species `{s}` in --marginal")))
                })
                .collect::<Result<Vec<_>, _>>()?,
        ),
    };
    let names = match &dims {
        None => network.species().to_vec(),
        Some(d) => d.iter().map(|&i| network.species()[i].clone()).collect(),
    };
    let opts = RunOptions {
        marginal_dims: dims,
        max_jumps: a.max_jumps,
        ..RunOptions::default()
    };
    Ok(Loaded {
        network,
        seed: SeedSpec::new(a.seed),
        opts,
        names,
    })
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create `{}`: {e}", dir.display())))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::Runtime(format!("cannot write `{}`: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(io::Error::other)?;
        writeln!(w)
    })
}

/// Sidecar written next to every output: enough to rerun the command.
#[derive(Serialize)]
struct Meta<'a, C: Serialize, R: Serialize> {
    command: &'static str,
    version: &'static str,
    model_hash: String,
    config: &'a C,
    #[serde(flatten)]
    result: R,
}

fn meta<'a, C: Serialize, R: Serialize>(
    command: &'static str,
    network: &ReactionNetwork,
    config: &'a C,
    result: R,
) -> Meta<'a, C, R> {
    Meta {
        command,
        version: env!("CARGO_PKG_VERSION"),
        model_hash: network.content_hash(),
        config,
        result,
    }
}

fn run_sized(l: &Loaded, size: &SizeArgs, m: u32, h: f64) -> Result<McRun, CliError> {
    let run = match (size.n, size.budget) {
        (Some(n), None) => conditional_mc(&l.network, n, m, h, l.seed, &l.opts)?,
        (None, Some(b)) => conditional_mc_budget(&l.network, b, m, h, l.seed, &l.opts)?,
        _ => return Err(CliError::Usage("exactly one of --n and --budget is required".into())),
    };
    Ok(run)
}

#[derive(Serialize)]
struct PmfResult {
    pmf: PmfMeta,
    events: u64,
}

fn write_pmf(dir: &Path, command: &'static str, l: &Loaded, run: &McRun, config: &impl Serialize) -> Result<(), CliError> {
    write_file(&dir.join("pmf.csv"), |w| run.pmf.write_csv(w, &l.names))?;
    let result = PmfResult {
        pmf: run.pmf.meta(&l.network.content_hash()),
        events: run.events,
    };
    write_json(&dir.join("pmf.meta.json"), &meta(command, &l.network, config, result))
}

fn cmd_simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let l = load(&a.model)?;
    let run = run_sized(&l, &a.size, 1, 0.0)?;
    create_dir(&a.out)?;
    write_pmf(&a.out, "simulate", &l, &run, a)?;
    if let Some(k) = a.dump_paths {
        let dir = a.out.join("paths");
        create_dir(&dir)?;
        let t = l.network.horizon();
        let mut sim = Simulator::new(&l.network).with_max_jumps(l.opts.max_jumps);
        for i in 0..k.min(run.pmf.n()) {
            let mut rng = FamilyStream::new(l.seed, l.opts.domain, i).trunk();
            let path = sim.simulate_path(l.network.initial_state(), 0.0, t, &mut rng)?;
            write_file(&dir.join(format!("path_{i}.csv")), |w| path.write_csv(w, l.network.species()))?;
        }
    }
    eprintln!("simulate: {} paths, {} events, {} states", run.pmf.n(), run.events, run.pmf.len());
    Ok(())
}

fn tune_config(knobs: &TuneKnobs, opts: &RunOptions) -> TuneConfig {
    TuneConfig {
        coeff_bound: knobs.coeff_bound,
        marginal_rows: opts.marginal_dims.clone(),
        ..TuneConfig::default()
    }
}

fn run_tuner(l: &Loaded, knobs: &TuneKnobs) -> Result<(PilotEnsemble, TuneResult), CliError> {
    let cfg = tune_config(knobs, &l.opts);
    let pilot = PilotEnsemble::simulate(&l.network, knobs.pilot, l.seed, l.opts.max_jumps)?;
    let lattice = build_lattice(&l.network, &cfg)?;
    let result = tune(&pilot, &lattice, &cfg);
    Ok((pilot, result))
}

#[derive(Serialize)]
struct TuneOutput<'a> {
    #[serde(flatten)]
    tune: &'a TuneResult,
    predicted_gain: f64,
}

#[derive(Serialize)]
struct TimedTuneOutput<'a> {
    #[serde(flatten)]
    inner: TuneOutput<'a>,
    wall_seconds: f64,
}

fn cmd_tune(a: &TuneArgs) -> Result<(), CliError> {
    let l = load(&a.model)?;
    let start = Instant::now();
    let (_, result) = run_tuner(&l, &a.knobs)?;
    let out = TimedTuneOutput {
        inner: TuneOutput {
            tune: &result,
            predicted_gain: result.predicted_gain(),
        },
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    let doc = meta("tune", &l.network, a, out);
    serde_json::to_writer_pretty(io::stdout().lock(), &doc).map_err(io::Error::other)?;
    println!();
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        write_json(&dir.join("tune.json"), &doc)?;
    }
    Ok(())
}

/// Confidence bound, or the reason none is available.
fn ci_or_warning(run: &McRun, h: f64, alpha: f64) -> Result<Option<CiReport>, CliError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::Usage(format!("--alpha must lie in (0, 1), got {alpha}")));
    }
    let t = match traces(&run.counts) {
        Ok(t) => t,
        Err(InferError::TooFewFamilies(_)) | Err(InferError::Degenerate) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    match upper_confidence_bound(&t, h, alpha) {
        Ok(ci) => Ok(Some(ci)),
        Err(InferError::Degenerate) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn cmd_estimate(a: &EstimateArgs) -> Result<(), CliError> {
    let l = load(&a.model)?;
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(CliError::Usage(format!("--alpha must lie in (0, 1), got {}", a.alpha)));
    }
    create_dir(&a.out)?;
    let (m, h) = match (a.m, a.h) {
        (Some(m), Some(h)) => (m, h),
        _ => {
            let (_, result) = run_tuner(&l, &a.knobs)?;
            let out = TuneOutput {
                tune: &result,
                predicted_gain: result.predicted_gain(),
            };
            write_json(&a.out.join("tune.json"), &meta("tune", &l.network, a, out))?;
            eprintln!(
                "estimate: tuned m = {}, h = {} (predicted gain {:.3})",
                result.m_star,
                result.h_star,
                result.predicted_gain()
            );
            (result.m_star, result.h_star)
        }
    };
    let run = run_sized(&l, &a.size, m, h)?;
    write_pmf(&a.out, "estimate", &l, &run, a)?;
    write_file(&a.out.join("counts.csv"), |w| write_counts_csv(w, &run.counts, &l.names))?;
    match ci_or_warning(&run, h, a.alpha)? {
        Some(ci) => {
            write_json(&a.out.join("ci.json"), &meta("estimate", &l.network, a, &ci))?;
            eprintln!(
                "estimate: n = {}, m = {m}, h = {h}, {} events; ISE <= {:.6e} at level {}",
                run.pmf.n(),
                run.events,
                ci.bound,
                1.0 - a.alpha
            );
        }
        None => eprintln!(
            "estimate: n = {}, {} events; no confidence bound (fewer than 2 families or zero covariance)",
            run.pmf.n(),
            run.events
        ),
    }
    Ok(())
}

#[derive(Serialize)]
struct HeatmapResult {
    budget: f64,
    reference: String,
    classical_mise: f64,
    classical_se: f64,
    tuned_m: u32,
    tuned_h: f64,
    best_m: u32,
    best_h: f64,
}

fn cmd_heatmap(a: &HeatmapArgs) -> Result<(), CliError> {
    let l = load(&a.model)?;
    if a.m_grid.is_empty() || a.h_grid.is_empty() {
        return Err(CliError::Usage("--m-grid and --h-grid must be non-empty".into()));
    }
    if a.replicates < 2 {
        return Err(CliError::Usage("--replicates must be at least 2".into()));
    }
    let (pilot, tuned) = run_tuner(&l, &a.knobs)?;
    let budget = a.budget.unwrap_or(a.n_classical * pilot.mean_integral(0.0, l.network.horizon()));
    let grid: Vec<(u32, f64)> = a.m_grid.iter().flat_map(|&m| a.h_grid.iter().map(move |&h| (m, h))).collect();
    let exact = match (a.model.model.strip_prefix("builtin:"), &l.opts.marginal_dims) {
        (Some(name), None) => validate::exact_reference(name),
        _ => None,
    };
    let (target, reference) = match exact {
        Some(p) => (IseTarget::new(p, false), "closed form".to_string()),
        None => {
            let opts = RunOptions {
                domain: Domain::Reference,
                keep_counts: false,
                ..l.opts.clone()
            };
            let r = conditional_mc_budget(
                &l.network,
                a.reference_factor * budget,
                tuned.m_star,
                tuned.h_star,
                l.seed,
                &opts,
            )?;
            let desc = format!(
                "conditional run with m = {}, h = {}, {} families, {} events",
                tuned.m_star,
                tuned.h_star,
                r.pmf.n(),
                r.events
            );
            (IseTarget::new(r.pmf.to_pmf(), true), desc)
        }
    };
    let cfg = ExperimentConfig {
        budget,
        grid,
        replicates: a.replicates,
        opts: l.opts.clone(),
    };
    let table = mise_ratio_experiment(&l.network, &cfg, &target, l.seed)?;
    let cfg_t = tune_config(&a.knobs, &l.opts);
    let lattice = build_lattice(&l.network, &cfg_t)?;
    let obj = Objective::new(&pilot, &lattice);
    create_dir(&a.out)?;
    write_file(&a.out.join("heatmap.csv"), |w| {
        writeln!(w, "m,h,mise,se,mise_ratio,fhat_ratio")?;
        for c in &table.cells {
            let fr = obj.fhat_classical() / obj.fhat(f64::from(c.m), c.h);
            writeln!(w, "{},{},{},{},{},{}", c.m, c.h, c.cmc.mise, c.cmc.se, c.ratio, fr)?;
        }
        Ok(())
    })?;
    let best = table.best().expect("non-empty grid");
    let result = HeatmapResult {
        budget,
        reference,
        classical_mise: table.classical.mise,
        classical_se: table.classical.se,
        tuned_m: tuned.m_star,
        tuned_h: tuned.h_star,
        best_m: best.m,
        best_h: best.h,
    };
    write_json(&a.out.join("heatmap.meta.json"), &meta("heatmap", &l.network, a, result))?;
    eprintln!(
        "heatmap: best empirical cell (m, h) = ({}, {}) with ratio {:.3}; tuner chose ({}, {})",
        best.m, best.h, best.ratio, tuned.m_star, tuned.h_star
    );
    Ok(())
}

fn cmd_ci(a: &CiArgs) -> Result<(), CliError> {
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(CliError::Usage(format!("--alpha must lie in (0, 1), got {}", a.alpha)));
    }
    let file = File::open(&a.counts)
        .map_err(|e| CliError::Runtime(format!("cannot read `{}`: {e}", a.counts.display())))?;
    let (_, counts) = read_counts_csv(BufReader::new(file))
        .map_err(|e| CliError::Runtime(format!("{}: {e}", a.counts.display())))?;
    let ci = upper_confidence_bound(&traces(&counts)?, a.h, a.alpha)?;
    match &a.out {
        Some(path) => write_json(path, &ci)?,
        None => {
            serde_json::to_writer_pretty(io::stdout().lock(), &ci).map_err(io::Error::other)?;
            println!();
        }
    }
    Ok(())
}

/// Criteria run by each suite.
fn suite_checks(suite: Suite, seed: SeedSpec, model: &str) -> Result<Vec<Box<dyn Fn() -> CriterionReport>>, CliError> {
    let c = |id: u8| -> Box<dyn Fn() -> CriterionReport> { Box::new(move || validate::criterion(id, seed)) };
    Ok(match suite {
        Suite::Quick => vec![Box::new(validate::oracle_consistency), c(4), c(8)],
        Suite::Oracle => vec![Box::new(validate::oracle_consistency), c(1)],
        Suite::Mise => vec![c(2)],
        Suite::Skellam => vec![c(3)],
        Suite::Traces => vec![c(4)],
        Suite::Clt => {
            let name = model.strip_prefix("builtin:").unwrap_or(model).to_string();
            if validate::exact_reference(&name).is_none() {
                return Err(CliError::Usage(format!(
                    "the clt suite needs a model with a closed-form pmf (builtin:birth or builtin:birth-death), got `{model}`"
                )));
            }
            vec![Box::new(move || validate::coverage(&name, seed, validate::CoverageConfig::default()))]
        }
        Suite::Efficiency => vec![c(6)],
        Suite::Tuner => vec![c(7)],
        Suite::Events => vec![c(8)],
        Suite::Determinism => vec![c(9)],
        Suite::All => {
            let mut v: Vec<Box<dyn Fn() -> CriterionReport>> = vec![Box::new(validate::oracle_consistency)];
            v.extend((1..=9).map(c));
            v
        }
    })
}

fn cmd_validate(a: &ValidateArgs) -> Result<(), CliError> {
    let checks = suite_checks(a.suite, SeedSpec::new(a.seed), &a.model)?;
    let mut failed = 0;
    for check in checks {
        let report = check();
        println!("{report}");
        if !report.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        return Err(CliError::Validation(failed));
    }
    Ok(())
}
