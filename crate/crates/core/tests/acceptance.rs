//! Acceptance criteria 1-10, one line each. Exits non-zero if any fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use flexagg::der::DerAsset;
use flexagg::forecast::{AccuracyMode, ErrorParams};
use flexagg::harness::{output, run_experiment, run_many, Experiment, RunOptions, ScenarioConfig};
use flexagg::market::{PriceParams, SimSetup, Simulation};
use flexagg::pricing::{grid_payment_accuracy, grid_payment_simple, scheme_by_name, split_accuracy, GridPayment, PricingParams};
use flexagg::rl::{DqnConfig, RewardNorm};
use flexagg::scoring::crps_raw;
use flexagg::selection::{DqnSelector, SelectionMethod};
use flexagg::LfeId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use SelectionMethod::{AllLfes, CrpsThreshold, DqnR1, DqnR2, SimpleThreshold};

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(n: usize, out: Outcome, elapsed: Duration, limit: Option<Duration>) -> bool {
    let in_time = limit.is_none_or(|l| elapsed <= l);
    let pass = out.pass && in_time;
    let limit = limit.map(|l| format!(" (limit {}s)", l.as_secs())).unwrap_or_default();
    println!(
        "criterion {n}: {} {} [{:.1}s{limit}]",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64()
    );
    pass
}

fn timed(f: impl FnOnce() -> Outcome) -> (Outcome, Duration) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed())
}

fn c1_scoring() -> Outcome {
    let at_zero = crps_raw(0.0, 1.0).unwrap();
    let mut pass = (at_zero + 0.233_694).abs() <= 1e-6;
    let mut worst = f64::INFINITY;
    for (i, sigma) in [0.1, 0.3, 0.6].into_iter().enumerate() {
        for gap in common::properness_gaps(sigma, 100_000, 100 + i as u64) {
            pass &= gap.significant();
            worst = worst.min(gap.mean / gap.std_err);
        }
    }
    Outcome {
        pass,
        detail: format!("crps_raw(0,1)={at_zero:.7}, weakest properness gap {worst:.1} SE (need > 3)"),
    }
}

fn c2_budget_balance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let params = PricingParams::default();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=50);
        let c: BTreeMap<LfeId, (f64, f64)> = (0..n)
            .map(|i| (LfeId::from_index(i), (rng.random_range(0.01..20.0), rng.random_range(-1.0..=1.0))))
            .collect();
        let v = rng.random_range(0.0..1e5);
        let s = split_accuracy(v, &c, &params);
        worst = worst.max((s.paid_out() - v).abs() / v.max(f64::MIN_POSITIVE));
    }
    Outcome {
        pass: worst <= 1e-9,
        detail: format!("worst relative imbalance {worst:.2e} over 1000 instances"),
    }
}

fn c3_bell() -> Outcome {
    let params = PricingParams::default();
    let flex = std::f64::consts::E;
    let pay = |e: f64| grid_payment_accuracy(flex, e, 1.0, &params);
    let peak = pay(0.0);
    let tail = (pay(1.0) - peak / 2.6).abs().max((pay(-1.0) - peak / 2.6).abs());
    let mut odd: f64 = 0.0;
    let mut peaked = true;
    for i in 0..=200 {
        let e = -1.0 + i as f64 * 0.01;
        odd = odd.max((pay(e) - pay(-e)).abs());
        peaked &= pay(e) <= peak;
    }
    Outcome {
        pass: tail <= 1e-9 && odd <= 1e-9 && peaked,
        detail: format!("|P(±1) - peak/2.6| = {tail:.1e}, max |P(e) - P(-e)| = {odd:.1e} over 201 e"),
    }
}

fn desk(scenario: u8, method: SelectionMethod) -> ScenarioConfig {
    ScenarioConfig::scenario(scenario, method).unwrap()
}

fn find(exps: &[Experiment], scenario: u8, method: SelectionMethod) -> &Experiment {
    exps.iter()
        .find(|e| e.config.scenario_id == scenario && e.config.method == method)
        .expect("swept")
}

fn c4_ordering(exps: &[Experiment]) -> Outcome {
    let agg = |m| find(exps, 1, m).aggregate.aggregator_eur_per_mwh;
    let (crps, simple, all) = (agg(CrpsThreshold), agg(SimpleThreshold), agg(AllLfes));
    Outcome {
        pass: crps >= 1.15 * all && simple >= 1.15 * all,
        detail: format!(
            "aggregator EUR/MWh crps {crps:.1} ({:.2}x), simple {simple:.1} ({:.2}x), all {all:.1}; need >= 1.15x",
            crps / all,
            simple / all
        ),
    }
}

fn c5_rates(exps: &[Experiment]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for m in [CrpsThreshold, SimpleThreshold] {
        let rates: Vec<f64> = find(exps, 1, m).aggregate.lfes.iter().map(|l| l.selection_rate).collect();
        let top = rates[..4].iter().copied().fold(f64::INFINITY, f64::min);
        let bottom = rates[8..].iter().copied().fold(0.0, f64::max);
        pass &= top > 0.8 && bottom < 0.1;
        parts.push(format!("{m}: top-4 min {top:.2}, bottom-4 max {bottom:.2}"));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

const FIVE: [SelectionMethod; 5] = [SimpleThreshold, CrpsThreshold, DqnR1, DqnR2, AllLfes];

fn c6_ranking(exps: &[Experiment]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for scenario in [3, 4] {
        let per_lfe = |m| -> Vec<f64> { find(exps, scenario, m).aggregate.lfes.iter().map(|l| l.eur_per_mwh).collect() };
        let table: Vec<Vec<f64>> = FIVE.iter().map(|m| per_lfe(*m)).collect();
        let crps = &table[1];
        let wins = (0..crps.len())
            .filter(|i| table.iter().all(|col| col[*i] <= crps[*i]))
            .count();
        let all = &table[4];
        let margin = crps.iter().zip(all).map(|(c, a)| c - a).sum::<f64>() / crps.len() as f64;
        // Margins are expressed on a 120 EUR/MWh base price.
        let margin = margin * 120.0 / find(exps, scenario, CrpsThreshold).config.prices.base;
        pass &= wins >= 9 && margin >= 15.0;
        parts.push(format!("s{scenario}: crps best for {wins}/12, all trails by {margin:.1}"));
    }
    Outcome {
        pass,
        detail: format!("{} (need >= 9 and >= 15)", parts.join("; ")),
    }
}

fn members(e: &Experiment) -> BTreeSet<LfeId> {
    e.aggregate
        .lfes
        .iter()
        .filter(|l| l.selection_rate > 0.5)
        .map(|l| l.lfe_id)
        .collect()
}

fn c7_adaptation(exps: &[Experiment]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for m in [SimpleThreshold, CrpsThreshold] {
        let spread = find(exps, 2, m)
            .aggregate
            .lfes
            .iter()
            .filter(|l| l.aggregator_share >= 0.05)
            .count();
        pass &= spread >= 9;
        parts.push(format!("{m} s2 spread {spread}/12"));
    }
    for m in [DqnR1, DqnR2] {
        let (s1, s2) = (members(find(exps, 1, m)), members(find(exps, 2, m)));
        let changed = s1.symmetric_difference(&s2).count();
        pass &= (changed as f64) < 0.3 * 12.0;
        parts.push(format!("{m} set change {changed}/12"));
    }
    Outcome {
        pass,
        detail: format!("{} (need spread >= 9, change < 30%)", parts.join("; ")),
    }
}

const C8_CYCLES: usize = 400;
const C8_Z: f64 = 50_000.0;

/// Mean reward over the last quarter of a 4-LFE run.
fn c8_reward(seed: u64, epsilon: Option<f64>) -> f64 {
    let fleet: BTreeMap<LfeId, Vec<DerAsset>> = (1..=4)
        .map(|i| (LfeId(i), vec![DerAsset::generator(i as u32, [2000.0; 24])]))
        .collect();
    let order: Vec<LfeId> = fleet.keys().copied().collect();
    let mut cfg = DqnConfig::default();
    if let Some(e) = epsilon {
        cfg.epsilon_start = e;
        cfg.epsilon_end = e;
    }
    let mech = DqnSelector::new(DqnR1, &order, &cfg, RewardNorm::Fixed(C8_Z), C8_CYCLES, seed).unwrap();
    let setup = SimSetup {
        fleet,
        initial_sigmas: vec![0.05, 0.1, 0.8, 0.9],
        accuracy_mode: AccuracyMode::Static,
        error_params: ErrorParams::default(),
        grid_payment: GridPayment::Crps,
        pricing: PricingParams::default(),
        prices: PriceParams::default(),
        window: 3,
        day_variability: 0.0,
        seed,
    };
    let scheme = scheme_by_name("crps", &setup.pricing).unwrap();
    let mut sim = Simulation::new(setup, Box::new(mech), scheme).unwrap();
    sim.run(C8_CYCLES).unwrap();
    let tail = &sim.cycles()[C8_CYCLES * 3 / 4..];
    tail.iter().map(|c| c.reward.unwrap()).sum::<f64>() / tail.len() as f64
}

fn c8_dqn() -> Outcome {
    let q = common::rl::bandit_q();
    let grad = common::rl::worst_gradient_error();
    let seeded = common::rl::dropout_is_seeded();
    let seeds = 1..=5u64;
    let trained = seeds.clone().map(|s| c8_reward(s, None)).sum::<f64>() / 5.0;
    let random = seeds.map(|s| c8_reward(s, Some(1.0))).sum::<f64>() / 5.0;
    let ratio = trained / random;
    Outcome {
        pass: (q - 0.7).abs() < 1e-3 && grad < 1e-4 && seeded && ratio >= 1.2,
        detail: format!(
            "bandit Q {q:.5}, gradient rel err {grad:.1e}, seeded dropout {seeded}, trained/random reward {trained:.3}/{random:.3} = {ratio:.2}x (need >= 1.2)"
        ),
    }
}

fn c9_determinism() -> Outcome {
    let cfg = ScenarioConfig {
        seeds: vec![1, 2, 3],
        cycles: 30,
        ..desk(2, CrpsThreshold)
    };
    let opts = RunOptions {
        keep_cycles: true,
        ..RunOptions::default()
    };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let exps = [run_experiment(&cfg, &opts).unwrap()];
        output::write_metrics(d.path(), &exps).unwrap();
        output::write_cycles(d.path(), &exps).unwrap();
    }
    let names = [
        output::PER_LFE_CSV,
        output::AGGREGATOR_CSV,
        output::MASKS_CSV,
        output::REWARD_CSV,
        output::CYCLES_CSV,
    ];
    let differing: Vec<&str> = names
        .iter()
        .copied()
        .filter(|n| std::fs::read(dirs[0].path().join(n)).unwrap() != std::fs::read(dirs[1].path().join(n)).unwrap())
        .collect();
    Outcome {
        pass: differing.is_empty(),
        detail: format!("{} CSVs compared, differing: {differing:?}", names.len()),
    }
}

fn c10_simple_payment() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut jump: f64 = 0.0;
    let mut violations = 0;
    for _ in 0..10_000 {
        let pred = rng.random_range(0.0..50.0);
        let (d1, d2) = (rng.random_range(0.0..60.0), rng.random_range(0.0..60.0));
        let (p, pc) = (rng.random_range(0.0..300.0), rng.random_range(0.0..300.0));
        let h = 1e-9;
        let at = grid_payment_simple(pred, pred, p, pc);
        let below = grid_payment_simple(pred, pred - h, p, pc);
        let above = grid_payment_simple(pred, pred + h, p, pc);
        jump = jump.max((at - below).abs().max((above - at).abs()) / (h * p.max(pc).max(1.0)));
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        if grid_payment_simple(pred, lo, p, pc) > grid_payment_simple(pred, hi, p, pc) + 1e-9 {
            violations += 1;
        }
    }
    Outcome {
        pass: jump <= 1.0 + 1e-3 && violations == 0,
        detail: format!("max slope at the kink {jump:.3} x price (Lipschitz bound 1), {violations} monotonicity violations in 1e4 tuples"),
    }
}

fn main() {
    let mut ok = true;
    let (o, t) = timed(c1_scoring);
    ok &= report(1, o, t, Some(Duration::from_secs(30)));
    let (o, t) = timed(c2_budget_balance);
    ok &= report(2, o, t, Some(Duration::from_secs(5)));
    let (o, t) = timed(c3_bell);
    ok &= report(3, o, t, None);

    let t = Instant::now();
    let s1_cfgs: Vec<ScenarioConfig> = [CrpsThreshold, SimpleThreshold, AllLfes].map(|m| desk(1, m)).to_vec();
    let mut exps = run_many(&s1_cfgs, &RunOptions::default()).unwrap();
    let c4_time = t.elapsed();
    let t = Instant::now();
    let mut rest = vec![desk(1, DqnR1), desk(1, DqnR2)];
    for m in [SimpleThreshold, CrpsThreshold, DqnR1, DqnR2] {
        rest.push(desk(2, m));
    }
    for s in [3, 4] {
        rest.extend(FIVE.map(|m| desk(s, m)));
    }
    exps.extend(run_many(&rest, &RunOptions::default()).unwrap());
    let sweep_time = t.elapsed();
    eprintln!("desk sweep: scenario-1 thresholds {:.1}s, remaining methods {:.1}s", c4_time.as_secs_f64(), sweep_time.as_secs_f64());

    ok &= report(4, c4_ordering(&exps), c4_time, Some(Duration::from_secs(120)));
    ok &= report(5, c5_rates(&exps), c4_time, None);
    ok &= report(6, c6_ranking(&exps), sweep_time, None);
    ok &= report(7, c7_adaptation(&exps), sweep_time, None);
    let (o, t) = timed(c8_dqn);
    ok &= report(8, o, t, Some(Duration::from_secs(300)));
    let (o, t) = timed(c9_determinism);
    ok &= report(9, o, t, None);
    let (o, t) = timed(c10_simple_payment);
    ok &= report(10, o, t, None);
    if !ok {
        std::process::exit(1);
    }
}
