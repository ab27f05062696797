//! DER asset models and the flexibility each asset, LFE and Aggregator offers.
//!
//! All power values are kW averaged over an hourly slot, so a slot's value
//! doubles as its energy in kWh.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::seeds::{rng_for, Stream};
use crate::{DayProfile, Error, LfeId, Result, SLOTS_PER_DAY};

/// Share of its current load an interruptible user can shed on request.
pub const INTERRUPTIBLE_SHARE: f64 = 0.10;

/// Default EV reserve as a fraction of battery capacity.
pub const EV_RESERVE_FRACTION: f64 = 0.30;

// Nominal asset sizes used to turn fleet totals into asset counts.
const GENERATOR_NOMINAL_KW: f64 = 200.0;
const LOAD_NOMINAL_KW: f64 = 100.0;
const BESS_NOMINAL_KWH: f64 = 100.0;
const EV_NOMINAL_KWH: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DerKind {
    Bess,
    Ev,
    InterruptibleLoad,
    Generator,
}

impl DerKind {
    pub const ALL: [DerKind; 4] = [
        DerKind::Bess,
        DerKind::Ev,
        DerKind::InterruptibleLoad,
        DerKind::Generator,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DerKind::Bess => "bess",
            DerKind::Ev => "ev",
            DerKind::InterruptibleLoad => "interruptible_load",
            DerKind::Generator => "generator",
        }
    }

    fn is_storage(self) -> bool {
        matches!(self, DerKind::Bess | DerKind::Ev)
    }
}

impl fmt::Display for DerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bess" => Ok(DerKind::Bess),
            "ev" => Ok(DerKind::Ev),
            "interruptible_load" | "load" => Ok(DerKind::InterruptibleLoad),
            "generator" | "solar" => Ok(DerKind::Generator),
            other => Err(Error::Config(format!("unknown DER kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Discharge, curtail or generate towards the Grid.
    Offer,
    /// Charge or increase consumption.
    Absorb,
}

/// A contiguous block of hours during which a storage asset recharges
/// instead of offering flexibility. Wraps around midnight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RechargeWindow {
    pub start: u8,
    pub len: u8,
}

impl RechargeWindow {
    pub const NONE: RechargeWindow = RechargeWindow { start: 0, len: 0 };

    pub fn contains(&self, slot: usize) -> bool {
        let offset = (slot + SLOTS_PER_DAY - self.start as usize) % SLOTS_PER_DAY;
        offset < self.len as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerAsset {
    pub id: u32,
    pub kind: DerKind,
    /// Battery capacity in kWh (storage only).
    pub capacity_kwh: f64,
    /// Symmetric charge/discharge rate in kW (storage only).
    pub charge_rate_kw: f64,
    /// State of charge in kWh (storage only).
    pub soc_kwh: f64,
    /// Energy an EV must keep for travel (EV only).
    pub reserve_floor_kwh: f64,
    /// Hour-of-day load or generation curve in kW (loads and generators).
    pub profile_kw: DayProfile,
    /// Daily recharge schedule (storage only).
    pub recharge: RechargeWindow,
}

impl DerAsset {
    pub fn bess(id: u32, capacity_kwh: f64, charge_rate_kw: f64, soc_kwh: f64) -> Self {
        DerAsset {
            id,
            kind: DerKind::Bess,
            capacity_kwh,
            charge_rate_kw,
            soc_kwh,
            reserve_floor_kwh: 0.0,
            profile_kw: [0.0; SLOTS_PER_DAY],
            recharge: RechargeWindow::NONE,
        }
    }

    pub fn ev(id: u32, capacity_kwh: f64, charge_rate_kw: f64, soc_kwh: f64) -> Self {
        DerAsset {
            reserve_floor_kwh: EV_RESERVE_FRACTION * capacity_kwh,
            kind: DerKind::Ev,
            ..DerAsset::bess(id, capacity_kwh, charge_rate_kw, soc_kwh)
        }
    }

    pub fn interruptible_load(id: u32, profile_kw: DayProfile) -> Self {
        DerAsset {
            id,
            kind: DerKind::InterruptibleLoad,
            capacity_kwh: 0.0,
            charge_rate_kw: 0.0,
            soc_kwh: 0.0,
            reserve_floor_kwh: 0.0,
            profile_kw,
            recharge: RechargeWindow::NONE,
        }
    }

    pub fn generator(id: u32, profile_kw: DayProfile) -> Self {
        DerAsset {
            kind: DerKind::Generator,
            ..DerAsset::interruptible_load(id, profile_kw)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Domain(format!("asset {}: {what}", self.id)));
        if self.kind.is_storage() {
            if !(self.capacity_kwh >= 0.0 && self.charge_rate_kw >= 0.0) {
                return bad("capacity and charge rate must be non-negative");
            }
            if !(0.0..=self.capacity_kwh).contains(&self.soc_kwh) {
                return bad("state of charge outside [0, capacity]");
            }
            if self.reserve_floor_kwh < 0.0 || self.reserve_floor_kwh > self.capacity_kwh {
                return bad("reserve floor outside [0, capacity]");
            }
        } else if self.profile_kw.iter().any(|v| !(*v >= 0.0)) {
            return bad("profile values must be non-negative");
        }
        Ok(())
    }

    /// Energy the asset could still discharge.
    fn dischargeable_kwh(&self) -> f64 {
        let floor = match self.kind {
            DerKind::Ev => self.reserve_floor_kwh,
            _ => 0.0,
        };
        (self.soc_kwh - floor).max(0.0)
    }

    /// Total generation (generators) or consumption (loads) at peak hour.
    pub fn peak_kw(&self) -> f64 {
        self.profile_kw.iter().copied().fold(0.0, f64::max)
    }

    /// Plays one slot of the asset's daily routine: storage either recharges
    /// (offering nothing) or delivers its Offer flexibility and loses that
    /// much charge. `scale` multiplies load and generation curves.
    pub fn step_slot(&mut self, slot: usize, scale: f64) -> Result<f64> {
        if self.kind.is_storage() && self.recharge.contains(slot) {
            let headroom = self.capacity_kwh - self.soc_kwh;
            self.soc_kwh += self.charge_rate_kw.min(headroom).max(0.0);
            return Ok(0.0);
        }
        let flex = asset_flexibility(self, slot, Direction::Offer)?;
        match self.kind {
            DerKind::Bess | DerKind::Ev => {
                self.soc_kwh = (self.soc_kwh - flex).clamp(0.0, self.capacity_kwh);
                Ok(flex)
            }
            DerKind::InterruptibleLoad | DerKind::Generator => Ok(flex * scale),
        }
    }
}

/// Flexibility one asset can provide in `slot`, in kW.
pub fn asset_flexibility(asset: &DerAsset, slot: usize, direction: Direction) -> Result<f64> {
    if slot >= SLOTS_PER_DAY {
        return Err(Error::Domain(format!("slot {slot} outside [0, 24)")));
    }
    let flex = match asset.kind {
        DerKind::Bess | DerKind::Ev => match direction {
            Direction::Offer => asset.charge_rate_kw.min(asset.dischargeable_kwh()),
            Direction::Absorb => asset
                .charge_rate_kw
                .min(asset.capacity_kwh - asset.soc_kwh),
        },
        DerKind::InterruptibleLoad => INTERRUPTIBLE_SHARE * asset.profile_kw[slot],
        DerKind::Generator => asset.profile_kw[slot],
    };
    Ok(flex.max(0.0))
}

/// Sum over an LFE's assets.
pub fn lfe_flexibility(assets: &[DerAsset], slot: usize, direction: Direction) -> Result<f64> {
    if assets.is_empty() {
        return Err(Error::Domain("LFE has no assets".into()));
    }
    assets
        .iter()
        .map(|a| asset_flexibility(a, slot, direction))
        .sum()
}

/// Total flexibility of the selected LFEs. Empty selection offers nothing.
pub fn aggregator_flexibility<I>(selected: I) -> f64
where
    I: IntoIterator<Item = f64>,
{
    selected.into_iter().sum()
}

/// Fleet totals, in MWh per hourly slot at peak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetSpec {
    pub lfe_count: usize,
    pub renewable_peak: f64,
    pub consumption_peak: f64,
    pub storage_total: f64,
    pub bess_share: f64,
}

impl Default for FleetSpec {
    fn default() -> Self {
        FleetSpec {
            lfe_count: 12,
            renewable_peak: 13.0,
            consumption_peak: 14.0,
            storage_total: 7.5,
            bess_share: 2.5,
        }
    }
}

impl FleetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.lfe_count == 0 {
            return Err(Error::invalid_field("fleet.lfe_count", "must be at least 1"));
        }
        for (name, v) in [
            ("fleet.renewable_peak", self.renewable_peak),
            ("fleet.consumption_peak", self.consumption_peak),
            ("fleet.storage_total", self.storage_total),
            ("fleet.bess_share", self.bess_share),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid_field(name, "must be finite and non-negative"));
            }
        }
        if self.bess_share > self.storage_total {
            return Err(Error::invalid_field(
                "fleet.bess_share",
                "exceeds fleet.storage_total",
            ));
        }
        Ok(())
    }
}

/// Per-kind totals of a generated fleet, in kWh per slot / kWh.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FleetTotals {
    pub renewable_peak_kw: f64,
    pub consumption_peak_kw: f64,
    pub bess_kwh: f64,
    pub ev_kwh: f64,
}

pub type Fleet = BTreeMap<LfeId, Vec<DerAsset>>;

pub fn fleet_totals(fleet: &Fleet) -> FleetTotals {
    let mut gen = [0.0; SLOTS_PER_DAY];
    let mut load = [0.0; SLOTS_PER_DAY];
    let mut totals = FleetTotals::default();
    for asset in fleet.values().flatten() {
        match asset.kind {
            DerKind::Generator => add_profile(&mut gen, &asset.profile_kw, 1.0),
            DerKind::InterruptibleLoad => add_profile(&mut load, &asset.profile_kw, 1.0),
            DerKind::Bess => totals.bess_kwh += asset.capacity_kwh,
            DerKind::Ev => totals.ev_kwh += asset.capacity_kwh,
        }
    }
    totals.renewable_peak_kw = gen.iter().copied().fold(0.0, f64::max);
    totals.consumption_peak_kw = load.iter().copied().fold(0.0, f64::max);
    totals
}

fn add_profile(acc: &mut DayProfile, profile: &DayProfile, scale: f64) {
    for (a, p) in acc.iter_mut().zip(profile) {
        *a += p * scale;
    }
}

fn solar_shape(slot: usize, center: f64, half_width: f64) -> f64 {
    let x = (slot as f64 + 0.5 - center) / half_width;
    if x.abs() >= 1.0 {
        0.0
    } else {
        (std::f64::consts::FRAC_PI_2 * x).cos().powi(2)
    }
}

fn household_shape(slot: usize, shift: f64) -> f64 {
    let bump = |c: f64, w: f64| {
        let mut d = (slot as f64 - c - shift).abs() % 24.0;
        d = d.min(24.0 - d);
        (-0.5 * (d / w).powi(2)).exp()
    };
    0.35 + 0.35 * bump(8.0, 1.5) + 0.65 * bump(19.0, 2.0)
}

/// Splits `total` over `count` assets around equal shares with ±50% spread.
fn sized_shares<R: Rng>(rng: &mut R, count: usize, total: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..count).map(|_| rng.random_range(0.5..1.5)).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|r| total * r / sum).collect()
}

fn rescale_profiles(assets: &mut [DerAsset], target_peak_kw: f64) {
    let mut sum = [0.0; SLOTS_PER_DAY];
    for a in assets.iter() {
        add_profile(&mut sum, &a.profile_kw, 1.0);
    }
    let peak = sum.iter().copied().fold(0.0, f64::max);
    if peak > 0.0 {
        let k = target_peak_kw / peak;
        for a in assets.iter_mut() {
            a.profile_kw.iter_mut().for_each(|v| *v *= k);
        }
    }
}

fn storage_assets<R: Rng>(
    rng: &mut R,
    next_id: &mut u32,
    kind: DerKind,
    total_kwh: f64,
    nominal_kwh: f64,
) -> Vec<DerAsset> {
    let count = (total_kwh / nominal_kwh).round() as usize;
    if count == 0 {
        return Vec::new();
    }
    sized_shares(rng, count, total_kwh)
        .into_iter()
        .map(|capacity| {
            let id = *next_id;
            *next_id += 1;
            let (rate, mut asset) = match kind {
                DerKind::Bess => {
                    let rate = capacity * rng.random_range(0.25..0.5);
                    (rate, DerAsset::bess(id, capacity, rate, 0.0))
                }
                _ => {
                    let rate = rng.random_range(3.7..11.0_f64).min(capacity);
                    (rate, DerAsset::ev(id, capacity, rate, 0.0))
                }
            };
            asset.soc_kwh = capacity * rng.random_range(0.5..1.0);
            let len = ((capacity / rate).ceil() as u8 + 1).min(SLOTS_PER_DAY as u8 - 1);
            asset.recharge = RechargeWindow {
                start: rng.random_range(0..SLOTS_PER_DAY as u8),
                len,
            };
            asset
        })
        .collect()
}

/// Builds the asset population described by `spec` and deals it randomly
/// into `spec.lfe_count` heterogeneous LFEs.
pub fn generate_fleet(spec: &FleetSpec, seed: u64) -> Result<Fleet> {
    spec.validate()?;
    let mut rng = rng_for(seed, Stream::Fleet, 0);
    let mut next_id = 0u32;

    let gen_count = (spec.renewable_peak * 1000.0 / GENERATOR_NOMINAL_KW).round() as usize;
    let mut generators: Vec<DerAsset> = sized_shares(&mut rng, gen_count, 1.0)
        .into_iter()
        .map(|size| {
            let center = 12.5 + rng.random_range(-0.75..0.75);
            let half_width = 7.0 + rng.random_range(-1.0..1.0);
            let mut profile = [0.0; SLOTS_PER_DAY];
            for (slot, v) in profile.iter_mut().enumerate() {
                *v = size * solar_shape(slot, center, half_width);
            }
            next_id += 1;
            DerAsset::generator(next_id - 1, profile)
        })
        .collect();
    rescale_profiles(&mut generators, spec.renewable_peak * 1000.0);

    let load_count = (spec.consumption_peak * 1000.0 / LOAD_NOMINAL_KW).round() as usize;
    let jitter = Normal::new(1.0, 0.05).expect("valid normal");
    let mut loads: Vec<DerAsset> = sized_shares(&mut rng, load_count, 1.0)
        .into_iter()
        .map(|size| {
            let shift = rng.random_range(-1.0..1.0);
            let mut profile = [0.0; SLOTS_PER_DAY];
            for (slot, v) in profile.iter_mut().enumerate() {
                let j: f64 = jitter.sample(&mut rng);
                *v = size * household_shape(slot, shift) * j.max(0.0);
            }
            next_id += 1;
            DerAsset::interruptible_load(next_id - 1, profile)
        })
        .collect();
    rescale_profiles(&mut loads, spec.consumption_peak * 1000.0);

    let bess = storage_assets(
        &mut rng,
        &mut next_id,
        DerKind::Bess,
        spec.bess_share * 1000.0,
        BESS_NOMINAL_KWH,
    );
    let evs = storage_assets(
        &mut rng,
        &mut next_id,
        DerKind::Ev,
        (spec.storage_total - spec.bess_share) * 1000.0,
        EV_NOMINAL_KWH,
    );

    let mut by_kind: Vec<Vec<DerAsset>> = vec![bess, evs, loads, generators];
    for pool in by_kind.iter_mut() {
        pool.shuffle(&mut rng);
    }
    let total: usize = by_kind.iter().map(Vec::len).sum();
    if spec.lfe_count > total {
        return Err(Error::Config(format!(
            "fleet has {total} assets, cannot form {} non-empty LFEs",
            spec.lfe_count
        )));
    }

    // Seed every LFE with assets of two different kinds when the pools allow,
    // then scatter the rest uniformly.
    let mut lfes: Vec<Vec<DerAsset>> = vec![Vec::new(); spec.lfe_count];
    let kinds_available = by_kind.iter().filter(|p| !p.is_empty()).count();
    for (i, lfe) in lfes.iter_mut().enumerate() {
        let wanted = kinds_available.min(2);
        let mut taken = 0;
        for k in 0..by_kind.len() {
            if taken == wanted {
                break;
            }
            let n_pools = by_kind.len();
            let pool = &mut by_kind[(i + k) % n_pools];
            if let Some(asset) = pool.pop() {
                lfe.push(asset);
                taken += 1;
            }
        }
    }
    // Pools may run dry above; fill any still-empty LFE from what is left.
    let mut rest: Vec<DerAsset> = by_kind.into_iter().flatten().collect();
    rest.shuffle(&mut rng);
    for lfe in lfes.iter_mut().filter(|l| l.is_empty()) {
        lfe.push(rest.pop().expect("asset count checked above"));
    }
    for asset in rest {
        let i = rng.random_range(0..spec.lfe_count);
        lfes[i].push(asset);
    }
    for lfe in lfes.iter_mut() {
        lfe.sort_by_key(|a| a.id);
    }

    Ok(lfes
        .into_iter()
        .enumerate()
        .map(|(i, assets)| (LfeId::from_index(i), assets))
        .collect())
}
