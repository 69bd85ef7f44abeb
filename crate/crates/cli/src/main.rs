mod args;
mod bundle;
mod output;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Parser;
use log::info;
use lmdi_core::data::{load_csv, Dataset, Task};
use lmdi_core::eval::{
    cluster_protocol, correlation_protocol, counterfactual_protocol, selection_protocol, signal_benchmark,
    stability_protocol, EvalReport, ProtocolConfig,
};
use lmdi_core::forest::fit_forest;
use lmdi_core::importance::compute_lfi;
use lmdi_core::synth::{CorrelationSpec, SynthSpec};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use args::{BenchArgs, Command, DataArgs, ModelArgs, RunArgs};
use output::Outputs;

#[derive(Parser)]
#[command(name = "lmdi", version, about = "Local feature importance for random forests")]
struct Cli {
    /// Worker threads (default: all available cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

/// Written as `config.json` next to every run's outputs.
#[derive(Serialize, Deserialize)]
struct Echo {
    version: String,
    threads: usize,
    invocation: Command,
    #[serde(default)]
    resolved: Value,
    #[serde(default)]
    timings_secs: BTreeMap<String, f64>,
}

#[derive(Default)]
struct Phases(BTreeMap<String, f64>);

impl Phases {
    fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f()?;
        *self.0.entry(phase.to_string()).or_insert(0.0) += start.elapsed().as_secs_f64();
        Ok(out)
    }
}

fn load(d: &DataArgs) -> Result<Dataset> {
    load_csv(&d.data, &d.target, d.task.into()).with_context(|| format!("cannot load {}", d.data.display()))
}

fn protocol_config(bench: &BenchArgs, run: &RunArgs, model: &ModelArgs, task: Task) -> ProtocolConfig {
    ProtocolConfig {
        methods: bench.method.clone(),
        replicates: bench.replicates,
        seed: run.seed,
        train_fraction: bench.train_fraction,
        forest: Some(model.forest(task)),
        glm: model.glm(run.seed),
    }
}

fn save_report(report: &EvalReport, out: &mut Outputs) -> Result<()> {
    let csv = out.path("report.csv");
    let json = out.path("report.json");
    report.save(csv, json)?;
    Ok(())
}

/// Runs one benchmark protocol and returns the resolved settings for the echo.
fn bench(
    out: &mut Outputs,
    phases: &mut Phases,
    cfg: ProtocolConfig,
    extra: Value,
    f: impl FnOnce(&ProtocolConfig) -> lmdi_core::Result<EvalReport>,
) -> Result<Value> {
    let report = phases.time("protocol", || Ok(f(&cfg)?))?;
    save_report(&report, out)?;
    phases.0.extend(report.timings.iter().map(|(k, v)| (format!("protocol:{k}"), *v)));
    Ok(json!({ "protocol": cfg, "seeds": report.seeds, "setup": extra }))
}

fn execute(cmd: &Command, out: &mut Outputs, phases: &mut Phases) -> Result<Value> {
    match cmd {
        Command::Fit(a) => {
            let ds = phases.time("load", || load(&a.data))?;
            let params = a.model.forest(ds.task());
            let forest = phases.time("fit_forest", || Ok(fit_forest(&ds, &params, a.run.seed)?))?;
            phases.time("write_bundle", || bundle::save(&forest, ds.feature_names(), out))?;
            info!("saved {} trees", forest.n_trees());
            Ok(json!({ "forest": params, "seed": a.run.seed, "task": ds.task(), "n": ds.n_rows(), "p": ds.n_features() }))
        }
        Command::Explain(a) => {
            let (forest, manifest) = phases.time("load_bundle", || bundle::load(&a.model))?;
            let ds = phases.time("load", || Ok(load_csv(&a.data, &a.target, manifest.task)?))?;
            if ds.feature_names() != manifest.feature_names.as_slice() {
                bail!("columns of {} do not match the bundle's features", a.data.display());
            }
            let train = match &a.train {
                Some(path) => load_csv(path, &a.target, manifest.task)?,
                None => ds.clone(),
            };
            if train.feature_names() != manifest.feature_names.as_slice() || train.n_rows() != manifest.n {
                bail!("training data must be the {} x {} table the bundle was fitted on", manifest.n, manifest.p);
            }
            let glm = a.model_args.glm(a.run.seed);
            let lfi = phases.time("explain", || Ok(compute_lfi(a.method, &forest, &train, ds.features().view(), &glm)?))?;
            lfi.write_csv(out.path("lfi.csv"), ds.feature_names())?;
            lfi.write_sidecar(out.path("lfi.json"))?;
            Ok(json!({ "method": a.method, "model_seed": manifest.seed, "glm": glm, "n": ds.n_rows() }))
        }
        Command::BenchSynthetic(a) => {
            let task: Task = a.task.into();
            let covariates = match &a.data {
                Some(path) => Some(load_csv(path, &a.target, Task::Regression)?),
                None => None,
            };
            let mut spec = SynthSpec::new(a.dgp, task, a.n, a.run.seed);
            spec.pve = a.pve;
            spec.flip_pct = a.flip_pct;
            let p = covariates.as_ref().map_or(a.p, Dataset::n_features);
            let cfg = protocol_config(&a.bench, &a.run, &a.model, task);
            let extra = json!({ "spec": spec, "p": p });
            bench(out, phases, cfg, extra, |c| signal_benchmark(&spec, p, covariates.as_ref(), c))
        }
        Command::BenchCorrelation(a) => {
            let spec = CorrelationSpec {
                n: a.n,
                p: a.p,
                block: a.block,
                n_signal: a.n_signal,
                rho: a.rho,
                pve: a.pve,
                seed: a.run.seed,
            };
            let cfg = protocol_config(&a.bench, &a.run, &a.model, Task::Regression);
            let extra = json!({ "spec": spec });
            bench(out, phases, cfg, extra, |c| correlation_protocol(&spec, c))
        }
        Command::BenchSelect(a) => {
            let ds = phases.time("load", || load(&a.data))?;
            let cfg = protocol_config(&a.bench, &a.run, &a.model, ds.task());
            let extra = json!({ "keep_pct": a.keep_pct });
            bench(out, phases, cfg, extra, |c| selection_protocol(&ds, &a.keep_pct, c))
        }
        Command::Stability(a) => {
            let ds = phases.time("load", || load(&a.data))?;
            let cfg = protocol_config(&a.bench, &a.run, &a.model, ds.task());
            let extra = json!({ "keep_pct": a.keep_pct, "n_fits": a.n_fits });
            bench(out, phases, cfg, extra, |c| stability_protocol(&ds, a.keep_pct, a.n_fits, c))
        }
        Command::Counterfactual(a) => {
            let ds = match &a.data {
                Some(path) => Some(load_csv(path, &a.target, Task::BinaryClassification)?),
                None => None,
            };
            let cfg = protocol_config(&a.bench, &a.run, &a.model, Task::BinaryClassification);
            let extra = json!({ "noise_sd": a.noise_sd, "standardize": a.standardize, "simulated": ds.is_none() });
            bench(out, phases, cfg, extra, |c| counterfactual_protocol(ds.as_ref(), a.noise_sd, a.standardize, c))
        }
        Command::Cluster(a) => {
            let ds = phases.time("load", || load(&a.data))?;
            let cfg = protocol_config(&a.bench, &a.run, &a.model, ds.task());
            let extra = json!({ "k_clusters": a.k_clusters });
            bench(out, phases, cfg, extra, |c| cluster_protocol(&ds, a.k_clusters, c))
        }
        Command::Rerun(_) => unreachable!("resolved before execution"),
    }
}

fn run(mut cmd: Command, threads: usize) -> Result<()> {
    let dir = match cmd.run_args_mut() {
        Some(r) => r.out.clone(),
        None => bail!("nothing to run"),
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    let mut out = Outputs::create(&dir)?;
    let mut phases = Phases::default();
    let result = pool.install(|| execute(&cmd, &mut out, &mut phases)).and_then(|resolved| {
        let echo = Echo {
            version: env!("CARGO_PKG_VERSION").to_string(),
            threads,
            invocation: cmd,
            resolved,
            timings_secs: phases.0,
        };
        out.write_json("config.json", &echo)
    });
    if result.is_err() {
        out.discard();
    }
    result
}

fn read_echo(path: &Path) -> Result<Echo> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file)).with_context(|| format!("{} is not a config echo", path.display()))
}

fn real_main(cli: Cli) -> Result<()> {
    let default_threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let (mut cmd, threads) = match cli.command {
        Command::Rerun(r) => {
            let echo = read_echo(&r.config)?;
            let mut cmd = echo.invocation;
            if let (Some(dir), Some(run)) = (r.out, cmd.run_args_mut()) {
                run.out = dir;
            }
            (cmd, cli.threads.unwrap_or(echo.threads))
        }
        other => (other, cli.threads.unwrap_or(default_threads)),
    };
    if threads == 0 {
        bail!("--threads must be at least 1");
    }
    if let Some(r) = cmd.run_args_mut() {
        info!("writing to {}", r.out.display());
    }
    run(cmd, threads)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match real_main(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
