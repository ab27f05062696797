//! `flexagg`: generate fleets, run scenarios and compare selection methods.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use flexagg::der::{fleet_totals, generate_fleet};
use flexagg::harness::{self, output, RunOptions, ScenarioConfig};
use flexagg::selection::SelectionMethod;

#[derive(Parser, Debug)]
#[command(name = "flexagg", version, about = "DER flexibility aggregation simulator")]
struct Cli {
    /// More progress output on stderr (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the fleet of one seed and write fleet.csv.
    GenFleet {
        #[command(flatten)]
        common: Common,
    },
    /// Run one method over all seeds and write the metric CSVs.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Run several methods on the same market and write a comparison table.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated methods, e.g. `crps,simple,all`.
        #[arg(long, value_delimiter = ',', default_value = "simple,crps,dqn-r1,dqn-r2,all,singleton")]
        methods: Vec<String>,
    },
    /// Check a config file against the scenario matrix and parameter ranges.
    ValidateConfig {
        #[command(flatten)]
        common: Common,
    },
    /// Run and write the metric CSVs plus the per-cycle log cycles.csv.
    Export {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Scenario config (TOML). Without it the scenario preset is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "FLEXAGG_OUT", default_value = "results")]
    out: PathBuf,
    /// Comma-separated master seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    cycles: Option<usize>,
    #[arg(long)]
    method: Option<String>,
    /// Scenario 1-4; also sets its accuracy mode and Grid payment.
    #[arg(long)]
    scenario: Option<u8>,
    /// Config override `key=value`, dotted keys for tables. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

impl Common {
    fn load(&self) -> flexagg::Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::load(path, &self.overrides)?,
            None => {
                let base = ScenarioConfig::scenario(self.scenario.unwrap_or(1), SelectionMethod::CrpsThreshold)?;
                ScenarioConfig::from_toml_with_overrides(&base.to_toml(), &self.overrides)?
            }
        };
        if let Some(id) = self.scenario {
            let (mode, payment) = harness::scenario_matrix(id).ok_or_else(|| {
                flexagg::Error::invalid_field("scenario_id", format!("{id} is not one of 1, 2, 3, 4"))
            })?;
            cfg.scenario_id = id;
            cfg.accuracy_mode = mode;
            cfg.grid_payment = payment;
        }
        if let Some(seeds) = &self.seeds {
            cfg.seeds = seeds.clone();
        }
        if let Some(c) = self.cycles {
            cfg.cycles = c;
        }
        if let Some(m) = &self.method {
            cfg.method = m.parse()?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn options(&self, keep_cycles: bool) -> RunOptions {
        RunOptions {
            jobs: self.jobs,
            keep_cycles,
            ..RunOptions::default()
        }
    }
}

fn report_written(paths: &[PathBuf]) {
    for p in paths {
        log::info!("wrote {}", p.display());
    }
}

fn gen_fleet(common: &Common) -> anyhow::Result<()> {
    let cfg = common.load()?;
    let seed = cfg.seeds[0];
    let fleet = generate_fleet(&cfg.fleet, seed)?;
    let totals = fleet_totals(&fleet);
    log::info!(
        "seed {seed}: {} LFEs, renewable peak {:.1} kW, consumption peak {:.1} kW, storage {:.1} kWh BESS + {:.1} kWh EV",
        fleet.len(),
        totals.renewable_peak_kw,
        totals.consumption_peak_kw,
        totals.bess_kwh,
        totals.ev_kwh
    );
    let path = common.out.join(output::FLEET_CSV);
    let header = format!(
        "# flexagg schema={} config_sha256={} seed={seed} units=energy:kWh,power:kW",
        output::SCHEMA_VERSION,
        cfg.hash()
    );
    output::write_fleet(&path, &fleet, &header)?;
    report_written(&[path]);
    Ok(())
}

fn run(common: &Common, export: bool) -> anyhow::Result<()> {
    let cfg = common.load()?;
    log::info!(
        "scenario {} method {} over {} cycles x {} seeds",
        cfg.scenario_id,
        cfg.method,
        cfg.cycles,
        cfg.seeds.len()
    );
    let exp = harness::run_experiment(&cfg, &common.options(export))?;
    let exps = [exp];
    let mut paths = output::write_metrics(&common.out, &exps)?;
    if export {
        paths.push(output::write_cycles(&common.out, &exps)?);
    }
    std::fs::write(common.out.join("config.toml"), cfg.to_toml()).context("writing config.toml")?;
    log::info!(
        "aggregator {:.2} EUR/MWh, {:.2} MWh sold in total (seed mean)",
        exps[0].aggregate.aggregator_eur_per_mwh,
        exps[0].aggregate.total_mwh
    );
    report_written(&paths);
    Ok(())
}

fn compare(common: &Common, methods: &[String]) -> anyhow::Result<()> {
    let base = common.load()?;
    let cfgs = methods
        .iter()
        .map(|m| {
            let cfg = ScenarioConfig {
                method: m.trim().parse()?,
                ..base.clone()
            };
            cfg.validate()?;
            Ok(cfg)
        })
        .collect::<flexagg::Result<Vec<_>>>()?;
    let cmp = harness::compare_methods(&cfgs, &common.options(false))?;
    let mut paths = output::write_metrics(&common.out, &cmp.experiments)?;
    paths.push(output::write_comparison(&common.out, &cmp)?);
    report_written(&paths);
    Ok(())
}

fn validate(common: &Common) -> anyhow::Result<()> {
    let cfg = common.load()?;
    log::info!(
        "config ok: scenario {}, method {}, {} cycles, {} seeds, sha256 {}",
        cfg.scenario_id,
        cfg.method,
        cfg.cycles,
        cfg.seeds.len(),
        cfg.hash()
    );
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<flexagg::Error>() {
        Some(e) if e.is_config() => 1,
        _ => 2,
    }
}

fn ensure_out(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();

    let result = match &cli.command {
        Command::GenFleet { common } => ensure_out(&common.out).and_then(|_| gen_fleet(common)),
        Command::Run { common } => ensure_out(&common.out).and_then(|_| run(common, false)),
        Command::Export { common } => ensure_out(&common.out).and_then(|_| run(common, true)),
        Command::Compare { common, methods } => ensure_out(&common.out).and_then(|_| compare(common, methods)),
        Command::ValidateConfig { common } => validate(common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
