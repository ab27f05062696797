use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::runner::Experiment;
use crate::der::Fleet;
use crate::pricing::LOG_FLOOR_MWH;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub const PER_LFE_CSV: &str = "metrics_per_lfe.csv";
pub const AGGREGATOR_CSV: &str = "metrics_aggregator.csv";
pub const MASKS_CSV: &str = "selection_masks.csv";
pub const REWARD_CSV: &str = "reward_curve.csv";
pub const CYCLES_CSV: &str = "cycles.csv";
pub const FLEET_CSV: &str = "fleet.csv";

fn joined<T: ToString + PartialEq>(values: impl Iterator<Item = T>) -> String {
    let mut uniq: Vec<T> = Vec::new();
    for v in values {
        if !uniq.contains(&v) {
            uniq.push(v);
        }
    }
    uniq.iter().map(T::to_string).collect::<Vec<_>>().join("|")
}

/// SHA-256 identifying a set of experiments: the config hash itself for
/// one, otherwise the hash of the concatenated config hashes.
pub fn combined_hash(experiments: &[&Experiment]) -> String {
    if let [one] = experiments {
        return one.config.hash();
    }
    let mut h = Sha256::new();
    for e in experiments {
        h.update(e.config.hash().as_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// The comment line that opens every CSV.
pub fn header_comment(experiments: &[&Experiment]) -> String {
    format!(
        "# flexagg schema={SCHEMA_VERSION} config_sha256={} alpha={} beta={} log_floor_mwh={LOG_FLOOR_MWH} units=energy:MWh,money:EUR,price:EUR/MWh",
        combined_hash(experiments),
        joined(experiments.iter().map(|e| e.config.pricing.alpha)),
        joined(experiments.iter().map(|e| e.config.pricing.beta)),
    )
}

fn writer(path: &Path, header: &str) -> Result<csv::Writer<BufWriter<File>>> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{header}")?;
    Ok(csv::Writer::from_writer(out))
}

fn finish(w: csv::Writer<BufWriter<File>>) -> Result<()> {
    w.into_inner()
        .map_err(|e| Error::Io(e.into_error()))?
        .flush()?;
    Ok(())
}

/// Experiments in (scenario, method) order, each with runs in seed order.
fn ordered(experiments: &[Experiment]) -> Vec<&Experiment> {
    let mut v: Vec<&Experiment> = experiments.iter().collect();
    v.sort_by_key(|e| (e.config.scenario_id, e.config.method));
    v
}

fn mask_string(selected: &std::collections::BTreeSet<crate::LfeId>) -> String {
    selected.iter().map(|id| id.to_string()).collect::<Vec<_>>().join(";")
}

/// Writes the four metric files into `dir`, creating it if needed.
pub fn write_metrics(dir: &Path, experiments: &[Experiment]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let exps = ordered(experiments);
    let header = header_comment(&exps);

    let per_lfe = dir.join(PER_LFE_CSV);
    let mut w = writer(&per_lfe, &header)?;
    w.write_record([
        "scenario", "method", "lfe_id", "seed", "initial_sigma", "mwh_total", "mwh_via_aggregator", "mwh_direct",
        "eur_total", "eur_per_mwh", "eur_per_mwh_std", "selection_rate", "aggregator_share",
    ])?;
    for e in &exps {
        let mut runs: Vec<_> = e.runs.iter().map(|r| &r.metrics).collect();
        runs.sort_by_key(|r| r.seed);
        for (i, agg) in e.aggregate.lfes.iter().enumerate() {
            for r in &runs {
                let l = &r.lfes[i];
                w.write_record([
                    e.config.scenario_id.to_string(),
                    e.config.method.to_string(),
                    l.lfe_id.0.to_string(),
                    r.seed.to_string(),
                    l.initial_sigma.to_string(),
                    l.mwh_total.to_string(),
                    l.mwh_via_aggregator.to_string(),
                    l.mwh_direct.to_string(),
                    l.eur_total().to_string(),
                    l.eur_per_mwh().to_string(),
                    String::new(),
                    l.selection_rate().to_string(),
                    l.aggregator_share().to_string(),
                ])?;
            }
            w.write_record([
                e.config.scenario_id.to_string(),
                e.config.method.to_string(),
                agg.lfe_id.0.to_string(),
                "mean".into(),
                runs[0].lfes[i].initial_sigma.to_string(),
                agg.mwh_total.to_string(),
                String::new(),
                String::new(),
                String::new(),
                agg.eur_per_mwh.to_string(),
                agg.eur_per_mwh_std.to_string(),
                agg.selection_rate.to_string(),
                agg.aggregator_share.to_string(),
            ])?;
        }
    }
    finish(w)?;

    let aggregator = dir.join(AGGREGATOR_CSV);
    let mut w = writer(&aggregator, &header)?;
    w.write_record([
        "scenario", "method", "seed", "cycles", "aggregator_mwh", "aggregator_eur", "aggregator_eur_per_mwh",
        "aggregator_eur_per_mwh_std", "aggregator_retained_eur", "total_mwh", "grid_outflow_eur", "mean_reward",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for e in &exps {
        let mut runs: Vec<_> = e.runs.iter().map(|r| &r.metrics).collect();
        runs.sort_by_key(|r| r.seed);
        for r in &runs {
            w.write_record([
                e.config.scenario_id.to_string(),
                e.config.method.to_string(),
                r.seed.to_string(),
                r.cycles.to_string(),
                r.aggregator_mwh.to_string(),
                r.aggregator_eur.to_string(),
                r.aggregator_eur_per_mwh().to_string(),
                String::new(),
                r.aggregator_retained.to_string(),
                r.total_mwh().to_string(),
                r.grid_outflow_eur.to_string(),
                opt(r.mean_reward()),
            ])?;
        }
        let a = &e.aggregate;
        w.write_record([
            e.config.scenario_id.to_string(),
            e.config.method.to_string(),
            "mean".into(),
            e.config.cycles.to_string(),
            a.aggregator_mwh.to_string(),
            String::new(),
            a.aggregator_eur_per_mwh.to_string(),
            a.aggregator_eur_per_mwh_std.to_string(),
            String::new(),
            a.total_mwh.to_string(),
            String::new(),
            opt(a.mean_reward),
        ])?;
    }
    finish(w)?;

    let masks = dir.join(MASKS_CSV);
    let mut w = writer(&masks, &header)?;
    w.write_record(["scenario", "method", "seed", "cycle", "selected_count", "selected"])?;
    for e in &exps {
        let mut runs: Vec<_> = e.runs.iter().map(|r| &r.metrics).collect();
        runs.sort_by_key(|r| r.seed);
        for r in &runs {
            for (cycle, t) in r.trace.iter().enumerate() {
                w.write_record([
                    e.config.scenario_id.to_string(),
                    e.config.method.to_string(),
                    r.seed.to_string(),
                    cycle.to_string(),
                    t.selected.len().to_string(),
                    mask_string(&t.selected),
                ])?;
            }
        }
    }
    finish(w)?;

    let rewards = dir.join(REWARD_CSV);
    let mut w = writer(&rewards, &header)?;
    w.write_record(["scenario", "method", "seed", "cycle", "reward", "v_grid_agg_eur"])?;
    for e in &exps {
        let mut runs: Vec<_> = e.runs.iter().map(|r| &r.metrics).collect();
        runs.sort_by_key(|r| r.seed);
        for r in &runs {
            for (cycle, t) in r.trace.iter().enumerate() {
                if let Some(reward) = t.reward {
                    w.write_record([
                        e.config.scenario_id.to_string(),
                        e.config.method.to_string(),
                        r.seed.to_string(),
                        cycle.to_string(),
                        reward.to_string(),
                        t.v_grid_agg.to_string(),
                    ])?;
                }
            }
        }
    }
    finish(w)?;

    Ok(vec![per_lfe, aggregator, masks, rewards])
}

/// Long-format per-cycle, per-LFE log. Needs runs made with `keep_cycles`.
pub fn write_cycles(dir: &Path, experiments: &[Experiment]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let exps = ordered(experiments);
    let path = dir.join(CYCLES_CSV);
    let mut w = writer(&path, &header_comment(&exps))?;
    w.write_record([
        "scenario", "method", "seed", "cycle", "lfe_id", "channel", "predicted_mwh", "delivered_mwh", "eur_received",
        "reported_sigma", "simple_score", "crps_norm", "window_simple", "window_crps",
    ])?;
    for e in &exps {
        let mut runs: Vec<_> = e.runs.iter().collect();
        runs.sort_by_key(|r| r.metrics.seed);
        for r in runs {
            let cycles = r
                .cycles
                .as_ref()
                .ok_or_else(|| Error::Config("cycle log requested but cycles were not kept".into()))?;
            for c in cycles {
                for (id, f) in &c.forecasts {
                    let s = &c.scores[id];
                    w.write_record([
                        e.config.scenario_id.to_string(),
                        e.config.method.to_string(),
                        r.metrics.seed.to_string(),
                        c.day_index.to_string(),
                        id.0.to_string(),
                        if c.is_selected(*id) { "aggregator" } else { "direct" }.to_string(),
                        (f.total() / 1000.0).to_string(),
                        c.ledger.delivered_mwh[id].to_string(),
                        c.ledger.received(*id).to_string(),
                        f.reported_sigma.to_string(),
                        s.simple_score.to_string(),
                        s.crps_norm.to_string(),
                        s.window_avg_simple.to_string(),
                        s.window_avg_crps.to_string(),
                    ])?;
                }
            }
        }
    }
    finish(w)?;
    Ok(path)
}

/// One row per asset.
pub fn write_fleet(path: &Path, fleet: &Fleet, header: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = writer(path, header)?;
    w.write_record([
        "lfe_id", "asset_id", "kind", "capacity_kwh", "charge_rate_kw", "soc_kwh", "reserve_floor_kwh", "peak_kw",
        "recharge_start", "recharge_len",
    ])?;
    for (id, assets) in fleet {
        for a in assets {
            w.write_record([
                id.0.to_string(),
                a.id.to_string(),
                a.kind.to_string(),
                a.capacity_kwh.to_string(),
                a.charge_rate_kw.to_string(),
                a.soc_kwh.to_string(),
                a.reserve_floor_kwh.to_string(),
                a.peak_kw().to_string(),
                a.recharge.start.to_string(),
                a.recharge.len.to_string(),
            ])?;
        }
    }
    finish(w)
}

pub const COMPARISON_CSV: &str = "comparison.csv";

/// Per-LFE seed-mean €/MWh by method, with the best method per row.
pub fn write_comparison(dir: &Path, cmp: &super::runner::Comparison) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let exps: Vec<&Experiment> = cmp.experiments.iter().collect();
    let path = dir.join(COMPARISON_CSV);
    let mut w = writer(&path, &header_comment(&exps))?;
    let mut head = vec!["lfe_id".to_string()];
    for (s, m) in cmp.columns() {
        head.push(format!("s{s}_{m}_eur_per_mwh"));
    }
    for (s, m) in cmp.columns() {
        head.push(format!("s{s}_{m}_mwh"));
    }
    head.push("best".into());
    w.write_record(&head)?;
    for row in &cmp.rows {
        let mut rec = vec![row.lfe_id.0.to_string()];
        rec.extend(row.eur_per_mwh.iter().map(f64::to_string));
        rec.extend(row.mwh_total.iter().map(f64::to_string));
        rec.push(cmp.experiments[row.best].config.method.to_string());
        w.write_record(&rec)?;
    }
    let mut rec = vec!["aggregator".to_string()];
    rec.extend(cmp.experiments.iter().map(|e| e.aggregate.aggregator_eur_per_mwh.to_string()));
    rec.extend(cmp.experiments.iter().map(|e| e.aggregate.aggregator_mwh.to_string()));
    rec.push(String::new());
    w.write_record(&rec)?;
    finish(w)?;
    Ok(path)
}
