//! Domain types for multi-station charging instances.
//!
//! Slots and request ids are 1-based, as are station indices in the
//! instance file. Energies are kWh and rates are kWh per slot.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use crate::error::ModelError;

/// Absolute tolerance (kWh) for every comparison against a cap or a demand.
pub const EPS: f64 = 1e-9;

/// Version tag written into every instance file.
pub const INSTANCE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargingRequest {
    pub id: usize,
    /// 1-based station index.
    pub station: usize,
    pub demand: f64,
    /// Last slot (inclusive) in which the EV may charge.
    pub deadline: usize,
    pub max_rate: f64,
    pub value: f64,
}

impl ChargingRequest {
    /// Revenue per kWh, the greedy's priority key.
    pub fn marginal_value(&self) -> Result<f64, ModelError> {
        marginal_value(self)
    }

    fn station_index(&self) -> usize {
        self.station - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub cap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub version: u32,
    pub horizon: usize,
    pub global_cap: f64,
    pub slackness: f64,
    pub stations: Vec<Station>,
    pub requests: Vec<ChargingRequest>,
    /// Generator seed, kept for provenance when the instance was sampled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Instance {
    pub fn new(
        horizon: usize,
        stations: Vec<f64>,
        global_cap: f64,
        slackness: f64,
        requests: Vec<ChargingRequest>,
    ) -> Self {
        Self {
            version: INSTANCE_FORMAT_VERSION,
            horizon,
            global_cap,
            slackness,
            stations: stations.into_iter().map(|cap| Station { cap }).collect(),
            requests,
            seed: None,
        }
    }

    pub fn station_count(&self) -> usize {
        self.stations.len()
    }

    /// Local cap of a 1-based station.
    pub fn station_cap(&self, station: usize) -> f64 {
        self.stations[station - 1].cap
    }

    pub fn total_local_cap(&self) -> f64 {
        self.stations.iter().map(|s| s.cap).sum()
    }

    pub fn total_value(&self) -> f64 {
        self.requests.iter().map(|r| r.value).sum()
    }

    /// K_j per station: the largest rate cap among the station's requests,
    /// or `None` for a station nobody is assigned to.
    pub fn station_max_rates(&self) -> Vec<Option<f64>> {
        let mut out: Vec<Option<f64>> = vec![None; self.stations.len()];
        for r in &self.requests {
            let Some(slot) = r.station.checked_sub(1).and_then(|j| out.get_mut(j)) else {
                continue;
            };
            *slot = Some(slot.map_or(r.max_rate, |k| k.max(r.max_rate)));
        }
        out
    }

    /// Maps request id to its position in `requests`.
    pub fn id_index(&self) -> HashMap<usize, usize> {
        self.requests
            .iter()
            .enumerate()
            .map(|(pos, r)| (r.id, pos))
            .collect()
    }

    pub fn request(&self, id: usize) -> Option<&ChargingRequest> {
        self.requests.iter().find(|r| r.id == id)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let inst: Instance = serde_json::from_str(text)?;
        if inst.version != INSTANCE_FORMAT_VERSION {
            return Err(ModelError::UnsupportedVersion(inst.version));
        }
        Ok(inst)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }
}

/// One broken instance invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyHorizon,
    NoStations,
    NonPositiveStationCap {
        station: usize,
        cap: f64,
    },
    NonPositiveGlobalCap {
        cap: f64,
    },
    SlacknessBelowOne {
        slackness: f64,
    },
    DuplicateRequestId {
        id: usize,
    },
    InvalidStation {
        id: usize,
        station: usize,
    },
    NonPositiveDemand {
        id: usize,
        demand: f64,
    },
    NonPositiveRate {
        id: usize,
        max_rate: f64,
    },
    NonPositiveValue {
        id: usize,
        value: f64,
    },
    DeadlineOutOfRange {
        id: usize,
        deadline: usize,
    },
    InfeasibleProfile {
        id: usize,
        demand: f64,
        limit: f64,
    },
    /// K_j ≥ C_j: schedules stay valid but the approximation bound is infinite.
    RateReachesStationCap {
        station: usize,
        max_rate: f64,
        cap: f64,
    },
}

impl Violation {
    /// Flags do not make an instance unusable; everything else does.
    pub fn is_flag(&self) -> bool {
        matches!(self, Violation::RateReachesStationCap { .. })
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            EmptyHorizon => write!(f, "horizon must contain at least one slot"),
            NoStations => write!(f, "instance has no stations"),
            NonPositiveStationCap { station, cap } => {
                write!(f, "station {station}: local cap {cap} must be positive")
            }
            NonPositiveGlobalCap { cap } => write!(f, "global cap {cap} must be positive"),
            SlacknessBelowOne { slackness } => write!(f, "slackness {slackness} must be >= 1"),
            DuplicateRequestId { id } => write!(f, "request {id}: duplicate id"),
            InvalidStation { id, station } => {
                write!(f, "request {id}: invalid station {station}")
            }
            NonPositiveDemand { id, demand } => {
                write!(f, "request {id}: demand {demand} must be positive")
            }
            NonPositiveRate { id, max_rate } => {
                write!(f, "request {id}: max rate {max_rate} must be positive")
            }
            NonPositiveValue { id, value } => {
                write!(f, "request {id}: value {value} must be positive")
            }
            DeadlineOutOfRange { id, deadline } => {
                write!(f, "request {id}: deadline {deadline} outside the horizon")
            }
            InfeasibleProfile { id, demand, limit } => write!(
                f,
                "request {id}: demand {demand} exceeds max_rate*deadline/slackness = {limit}"
            ),
            RateReachesStationCap {
                station,
                max_rate,
                cap,
            } => write!(
                f,
                "station {station}: max rate {max_rate} reaches local cap {cap} (bound infinite)"
            ),
        }
    }
}

/// Checks every instance and request invariant. The report is empty iff the
/// instance is well formed; see [`Violation::is_flag`] for soft findings.
pub fn validate_instance(instance: &Instance) -> Vec<Violation> {
    let mut out = Vec::new();
    if instance.horizon == 0 {
        out.push(Violation::EmptyHorizon);
    }
    if instance.stations.is_empty() {
        out.push(Violation::NoStations);
    }
    for (j, st) in instance.stations.iter().enumerate() {
        if !(st.cap > 0.0) {
            out.push(Violation::NonPositiveStationCap {
                station: j + 1,
                cap: st.cap,
            });
        }
    }
    if !(instance.global_cap > 0.0) {
        out.push(Violation::NonPositiveGlobalCap {
            cap: instance.global_cap,
        });
    }
    if !(instance.slackness >= 1.0) {
        out.push(Violation::SlacknessBelowOne {
            slackness: instance.slackness,
        });
    }

    let mut seen = BTreeSet::new();
    for r in &instance.requests {
        if !seen.insert(r.id) {
            out.push(Violation::DuplicateRequestId { id: r.id });
        }
        if r.station == 0 || r.station > instance.stations.len() {
            out.push(Violation::InvalidStation {
                id: r.id,
                station: r.station,
            });
        }
        if !(r.demand > 0.0) {
            out.push(Violation::NonPositiveDemand {
                id: r.id,
                demand: r.demand,
            });
        }
        if !(r.max_rate > 0.0) {
            out.push(Violation::NonPositiveRate {
                id: r.id,
                max_rate: r.max_rate,
            });
        }
        if !(r.value > 0.0) {
            out.push(Violation::NonPositiveValue {
                id: r.id,
                value: r.value,
            });
        }
        if r.deadline == 0 || r.deadline > instance.horizon {
            out.push(Violation::DeadlineOutOfRange {
                id: r.id,
                deadline: r.deadline,
            });
        }
        if instance.slackness > 0.0 {
            let limit = r.max_rate * r.deadline as f64 / instance.slackness;
            if r.demand > limit + EPS {
                out.push(Violation::InfeasibleProfile {
                    id: r.id,
                    demand: r.demand,
                    limit,
                });
            }
        }
    }

    for (j, k) in instance.station_max_rates().into_iter().enumerate() {
        if let Some(k) = k {
            let cap = instance.stations[j].cap;
            if k >= cap {
                out.push(Violation::RateReachesStationCap {
                    station: j + 1,
                    max_rate: k,
                    cap,
                });
            }
        }
    }
    out
}

/// Like [`validate_instance`] but fails on the first hard violation.
pub fn ensure_valid(instance: &Instance) -> Result<(), ModelError> {
    let hard: Vec<Violation> = validate_instance(instance)
        .into_iter()
        .filter(|v| !v.is_flag())
        .collect();
    if hard.is_empty() {
        Ok(())
    } else {
        Err(ModelError::InvalidInstance(hard))
    }
}

pub fn marginal_value(request: &ChargingRequest) -> Result<f64, ModelError> {
    if request.demand == 0.0 {
        return Err(ModelError::UndefinedRatio { id: request.id });
    }
    Ok(request.value / request.demand)
}

/// Worst-case ratio between the optimum and the scheduler's revenue:
/// `1 + Σ_j C_j/(C_j − K_j) · s/(s − 1)` over populated stations.
pub fn approximation_bound(instance: &Instance) -> Result<f64, ModelError> {
    let s = instance.slackness;
    if s <= 1.0 {
        return Err(ModelError::UnboundedRatio(format!(
            "slackness {s} leaves s/(s-1) undefined"
        )));
    }
    let slack_term = s / (s - 1.0);
    let mut sum = 0.0;
    for (j, k) in instance.station_max_rates().into_iter().enumerate() {
        let Some(k) = k else { continue };
        let cap = instance.stations[j].cap;
        if k >= cap {
            return Err(ModelError::UnboundedRatio(format!(
                "station {}: max rate {k} reaches local cap {cap}",
                j + 1
            )));
        }
        sum += cap / (cap - k) * slack_term;
    }
    Ok(1.0 + sum)
}

/// Sorted processing order: non-increasing marginal value, ties by smaller id.
/// Returns positions into `instance.requests`.
pub fn marginal_order(requests: &[ChargingRequest]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..requests.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (&requests[a], &requests[b]);
        let (ma, mb) = (ra.value / ra.demand, rb.value / rb.demand);
        mb.total_cmp(&ma).then(ra.id.cmp(&rb.id))
    });
    order
}

/// Per-EV per-slot energy allocation plus the selected set.
///
/// Profiles are stored only for EVs that received energy; each profile has
/// one entry per slot of the horizon (index 0 is slot 1).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Schedule {
    pub horizon: usize,
    pub allocation: BTreeMap<usize, Vec<f64>>,
    pub selected: BTreeSet<usize>,
}

impl Schedule {
    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            allocation: BTreeMap::new(),
            selected: BTreeSet::new(),
        }
    }

    /// y_i(t); zero when unallocated or out of range.
    pub fn energy(&self, id: usize, slot: usize) -> f64 {
        if slot == 0 {
            return 0.0;
        }
        self.allocation
            .get(&id)
            .and_then(|p| p.get(slot - 1))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn add_energy(&mut self, id: usize, slot: usize, amount: f64) {
        let horizon = self.horizon;
        let profile = self
            .allocation
            .entry(id)
            .or_insert_with(|| vec![0.0; horizon]);
        profile[slot - 1] += amount;
    }

    pub fn profile(&self, id: usize) -> Option<&[f64]> {
        self.allocation.get(&id).map(Vec::as_slice)
    }

    /// Drops an EV's allocation and selection, returning the old profile.
    pub fn remove(&mut self, id: usize) -> Option<Vec<f64>> {
        self.selected.remove(&id);
        self.allocation.remove(&id)
    }

    pub fn delivered(&self, id: usize) -> f64 {
        self.allocation.get(&id).map_or(0.0, |p| p.iter().sum())
    }

    pub fn is_selected(&self, id: usize) -> bool {
        self.selected.contains(&id)
    }

    /// Σ_i y_i(t) for every slot.
    pub fn slot_totals(&self) -> Vec<f64> {
        let mut totals = vec![0.0; self.horizon];
        for p in self.allocation.values() {
            for (acc, y) in totals.iter_mut().zip(p) {
                *acc += y;
            }
        }
        totals
    }

    /// Per-station per-slot totals, indexed `[station - 1][slot - 1]`.
    /// Allocations for ids absent from the instance are ignored.
    pub fn station_slot_totals(&self, instance: &Instance) -> Vec<Vec<f64>> {
        let mut totals = vec![vec![0.0; self.horizon]; instance.stations.len()];
        let index = instance.id_index();
        for (id, p) in &self.allocation {
            let Some(&pos) = index.get(id) else { continue };
            let st = instance.requests[pos].station_index();
            let Some(row) = totals.get_mut(st) else {
                continue;
            };
            for (acc, y) in row.iter_mut().zip(p) {
                *acc += y;
            }
        }
        totals
    }

    pub fn revenue(&self, instance: &Instance) -> f64 {
        instance
            .requests
            .iter()
            .filter(|r| self.selected.contains(&r.id))
            .map(|r| r.value)
            .sum()
    }
}

/// Dual point (α, β, γ, π) with its objective value Λ.
///
/// `alpha` is aligned with `instance.requests`; `beta` and `gamma` have one
/// entry per slot. `pi` is sparse: absent entries are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualCertificate {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub pi: BTreeMap<(usize, usize), f64>,
    pub dual_objective: f64,
}

impl DualCertificate {
    pub fn zero(instance: &Instance) -> Self {
        Self {
            alpha: vec![0.0; instance.requests.len()],
            beta: vec![0.0; instance.horizon],
            gamma: vec![0.0; instance.horizon],
            pi: BTreeMap::new(),
            dual_objective: 0.0,
        }
    }

    /// Λ = Σ_i D_i α_i + Σ_t (Σ_j C_j) β(t) + Σ_t C_total γ(t).
    pub fn objective(&self, instance: &Instance) -> f64 {
        let alpha_part: f64 = instance
            .requests
            .iter()
            .zip(&self.alpha)
            .map(|(r, a)| r.demand * a)
            .sum();
        let beta_part = instance.total_local_cap() * self.beta.iter().sum::<f64>();
        let gamma_part = instance.global_cap * self.gamma.iter().sum::<f64>();
        alpha_part + beta_part + gamma_part
    }

    pub fn refresh_objective(&mut self, instance: &Instance) {
        self.dual_objective = self.objective(instance);
    }

    pub fn pi(&self, request_id: usize, slot: usize) -> f64 {
        self.pi.get(&(request_id, slot)).copied().unwrap_or(0.0)
    }

    /// All entries non-negative and the stored objective matches the fields
    /// to relative tolerance 1e-9.
    pub fn is_consistent(&self, instance: &Instance) -> bool {
        let non_negative = self
            .alpha
            .iter()
            .chain(&self.beta)
            .chain(&self.gamma)
            .chain(self.pi.values())
            .all(|&x| x >= 0.0);
        let recomputed = self.objective(instance);
        let scale = recomputed.abs().max(self.dual_objective.abs()).max(1.0);
        non_negative && (recomputed - self.dual_objective).abs() <= 1e-9 * scale
    }
}
