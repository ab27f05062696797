use std::collections::BTreeMap;

use rayon::prelude::*;

use super::config::ScenarioConfig;
use super::metrics::{MethodAggregate, RunMetrics};
use crate::der::generate_fleet;
use crate::market::{SimSetup, Simulation, TradingCycle};
use crate::pricing::scheme_by_name;
use crate::selection::{MechanismSpec, Registry, SelectionMethod};
use crate::{Error, LfeId, Result};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; 0 lets rayon decide.
    pub jobs: usize,
    /// Keep every TradingCycle of every run.
    pub keep_cycles: bool,
    pub registry: Registry,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub cycles: Option<Vec<TradingCycle>>,
}

/// All seeds of one config.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ScenarioConfig,
    pub runs: Vec<RunOutput>,
    pub aggregate: MethodAggregate,
}

/// Builds the market for one seed of `cfg`, ready to run.
pub fn build_simulation(cfg: &ScenarioConfig, seed: u64, registry: &Registry) -> Result<Simulation> {
    let fleet = generate_fleet(&cfg.fleet, seed)?;
    let ids: Vec<LfeId> = fleet.keys().copied().collect();
    let mechanism = registry.build(
        cfg.method.name(),
        &MechanismSpec {
            lfe_ids: &ids,
            params: &cfg.selection,
            dqn: &cfg.dqn,
            reward_norm: cfg.reward_norm,
            horizon: cfg.cycles,
            seed,
        },
    )?;
    let scheme = scheme_by_name(cfg.method.pricing_scheme(), &cfg.pricing)?;
    let setup = SimSetup {
        fleet,
        initial_sigmas: cfg.sigmas(),
        accuracy_mode: cfg.accuracy_mode,
        error_params: cfg.forecast.clone(),
        grid_payment: cfg.grid_payment,
        pricing: cfg.pricing.clone(),
        prices: cfg.prices.clone(),
        window: cfg.selection.window,
        day_variability: cfg.market.day_variability,
        seed,
    };
    Simulation::new(setup, mechanism, scheme)
}

pub fn run_single(cfg: &ScenarioConfig, seed: u64, opts: &RunOptions) -> Result<RunOutput> {
    let mut sim = build_simulation(cfg, seed, &opts.registry)?;
    sim.run(cfg.cycles)?;
    let metrics = RunMetrics::from_cycles(cfg.scenario_id, cfg.method, seed, &cfg.sigmas(), sim.cycles());
    log::info!(
        "scenario {} {} seed {seed}: {} cycles, aggregator {:.2} EUR/MWh",
        cfg.scenario_id,
        cfg.method,
        cfg.cycles,
        metrics.aggregator_eur_per_mwh()
    );
    Ok(RunOutput {
        metrics,
        cycles: opts.keep_cycles.then(|| sim.into_cycles()),
    })
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} workers: {e}")))
}

/// Runs every seed of every config on a worker pool. Results come back in
/// input order, seeds in config order.
pub fn run_many(cfgs: &[ScenarioConfig], opts: &RunOptions) -> Result<Vec<Experiment>> {
    for cfg in cfgs {
        cfg.validate()?;
    }
    let tasks: Vec<(usize, u64)> = cfgs
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.seeds.iter().map(move |s| (i, *s)))
        .collect();
    let outputs: Vec<RunOutput> = pool(opts.jobs)?.install(|| {
        tasks
            .par_iter()
            .map(|(i, seed)| run_single(&cfgs[*i], *seed, opts))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut outputs = outputs.into_iter();
    Ok(cfgs
        .iter()
        .map(|cfg| {
            let runs: Vec<RunOutput> = outputs.by_ref().take(cfg.seeds.len()).collect();
            let refs: Vec<&RunMetrics> = runs.iter().map(|r| &r.metrics).collect();
            Experiment {
                aggregate: MethodAggregate::from_runs(cfg.scenario_id, cfg.method, &refs),
                config: cfg.clone(),
                runs,
            }
        })
        .collect())
}

pub fn run_experiment(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<Experiment> {
    Ok(run_many(std::slice::from_ref(cfg), opts)?.remove(0))
}

/// Per-LFE side-by-side of several methods run on the same market.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub experiments: Vec<Experiment>,
    pub rows: Vec<ComparisonRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub lfe_id: LfeId,
    /// Seed-mean €/MWh per experiment, in experiment order.
    pub eur_per_mwh: Vec<f64>,
    pub mwh_total: Vec<f64>,
    /// Index of the best-paying experiment (first on ties).
    pub best: usize,
}

impl Comparison {
    pub fn columns(&self) -> Vec<(u8, SelectionMethod)> {
        self.experiments
            .iter()
            .map(|e| (e.config.scenario_id, e.config.method))
            .collect()
    }

    /// Plain-text table, one row per LFE plus the Aggregator.
    pub fn render(&self) -> String {
        let mut out = String::from("lfe");
        for (s, m) in self.columns() {
            out.push_str(&format!("\ts{s}:{m}"));
        }
        out.push_str("\tbest\n");
        for row in &self.rows {
            out.push_str(&row.lfe_id.to_string());
            for v in &row.eur_per_mwh {
                out.push_str(&format!("\t{v:.2}"));
            }
            out.push_str(&format!("\t{}\n", self.experiments[row.best].config.method));
        }
        out.push_str("aggregator");
        for e in &self.experiments {
            out.push_str(&format!("\t{:.2}", e.aggregate.aggregator_eur_per_mwh));
        }
        out.push_str("\t-\n");
        out
    }
}

/// Fields that must agree for a comparison to be fair.
fn check_comparable(a: &ScenarioConfig, b: &ScenarioConfig) -> Result<()> {
    let mismatch = |field: &str| {
        Err(Error::invalid_field(
            field,
            "differs between compared configs; only method and payment settings may vary",
        ))
    };
    if a.seeds != b.seeds {
        return mismatch("seeds");
    }
    if a.fleet != b.fleet {
        return mismatch("fleet");
    }
    if a.cycles != b.cycles {
        return mismatch("cycles");
    }
    if a.accuracy_mode != b.accuracy_mode {
        return mismatch("accuracy_mode");
    }
    if a.forecast != b.forecast {
        return mismatch("forecast");
    }
    if a.sigmas() != b.sigmas() {
        return mismatch("initial_sigmas");
    }
    if a.prices != b.prices {
        return mismatch("prices");
    }
    if a.market != b.market {
        return mismatch("market");
    }
    Ok(())
}

pub fn compare_methods(cfgs: &[ScenarioConfig], opts: &RunOptions) -> Result<Comparison> {
    let first = cfgs
        .first()
        .ok_or_else(|| Error::Config("nothing to compare".into()))?;
    for c in &cfgs[1..] {
        check_comparable(first, c)?;
    }
    let experiments = run_many(cfgs, opts)?;
    let n_lfes = experiments[0].aggregate.lfes.len();
    let rows = (0..n_lfes)
        .map(|i| {
            let eur: Vec<f64> = experiments.iter().map(|e| e.aggregate.lfes[i].eur_per_mwh).collect();
            let mwh: Vec<f64> = experiments.iter().map(|e| e.aggregate.lfes[i].mwh_total).collect();
            let best = crate::rl::argmax(&eur);
            ComparisonRow {
                lfe_id: experiments[0].aggregate.lfes[i].lfe_id,
                eur_per_mwh: eur,
                mwh_total: mwh,
                best,
            }
        })
        .collect();
    Ok(Comparison { experiments, rows })
}

/// Seed-mean €/MWh by LFE for each experiment, keyed by method.
pub fn eur_per_mwh_table(experiments: &[Experiment]) -> BTreeMap<SelectionMethod, Vec<f64>> {
    experiments
        .iter()
        .map(|e| (e.config.method, e.aggregate.lfes.iter().map(|l| l.eur_per_mwh).collect()))
        .collect()
}
