//! Two-phase primal-dual greedy for multi-station charging.
//!
//! Phase 1 walks the requests by non-increasing marginal value, admits every
//! EV whose demand still fits before its deadline, and spreads the admitted
//! energy over the emptiest slots first (valley filling, later slot wins a
//! tie). A rejected EV prices its congested interval through β. Phase 2
//! revisits the rejected EVs and swaps out cheaper co-located EVs when that
//! frees enough room and strictly raises revenue.
//!
//! Every capacity read goes through [`SchedulerState::effective_remaining`],
//! the smaller of the station's and the microgrid's headroom, so the output
//! respects the global cap as well as the local ones.

use serde::Serialize;
use std::collections::HashMap;
use std::fmt;

use crate::error::ScheduleError;
use crate::model::{
    ensure_valid, marginal_order, ChargingRequest, DualCertificate, Instance, Schedule, EPS,
};

/// How SmartAllocate orders the slots of `[1, d_i]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotRanking {
    /// Most remaining capacity first, later slot on ties.
    ValleyFill,
    /// Latest slot first, capacity ignored.
    RightToLeft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineConfig {
    pub ranking: SlotRanking,
    /// Read the global cap alongside the local one.
    pub global_aware: bool,
    /// Experimental: re-rank after every increment (water filling) instead of
    /// a single ranked pass over the slots.
    pub rerank: bool,
    pub reconsider: bool,
    pub engine: Engine,
}

impl EngineConfig {
    pub fn scs() -> Self {
        Self {
            ranking: SlotRanking::ValleyFill,
            global_aware: true,
            rerank: false,
            reconsider: true,
            engine: Engine::Scs,
        }
    }

    pub fn greedy_rtl(reconsider: bool) -> Self {
        Self {
            ranking: SlotRanking::RightToLeft,
            global_aware: false,
            rerank: false,
            reconsider,
            engine: Engine::GreedyRtl,
        }
    }
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self::scs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Engine {
    #[serde(rename = "scs")]
    Scs,
    #[serde(rename = "greedy-rtl")]
    GreedyRtl,
}

impl Engine {
    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Scs => "scs",
            Engine::GreedyRtl => "greedy-rtl",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "scs" => Ok(Engine::Scs),
            "greedy-rtl" => Ok(Engine::GreedyRtl),
            other => Err(format!(
                "unknown engine '{other}' (expected scs or greedy-rtl)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Allocated,
    Rejected,
    Covered,
    Swapped,
}

/// One line of the run trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub engine: Engine,
    pub phase: u8,
    pub request_id: usize,
    pub decision: Decision,
    pub slots_touched: Vec<usize>,
    pub revenue_so_far: f64,
    /// EVs evicted by a swap.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub removed: Vec<usize>,
    /// Δ from ReConsider: capacity available to the EV before any eviction.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

/// Renders a trace as line-delimited JSON.
pub fn trace_to_jsonl(trace: &[TraceRecord]) -> String {
    let mut out = String::new();
    for rec in trace {
        out.push_str(&serde_json::to_string(rec).expect("trace record serializes"));
        out.push('\n');
    }
    out
}

/// Φ_i(t), recorded by β-cover for the bound analysis only. Rows are
/// aligned with `instance.requests`, columns are slots.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargeTable {
    pub values: Vec<Vec<f64>>,
}

impl ChargeTable {
    fn new(requests: usize, horizon: usize) -> Self {
        Self {
            values: vec![vec![0.0; horizon]; requests],
        }
    }

    pub fn total_for(&self, position: usize) -> f64 {
        self.values[position].iter().sum()
    }
}

/// Result of a swap performed by [`SchedulerState::reconsider`].
#[derive(Debug, Clone, PartialEq)]
pub struct Swap {
    pub removed: Vec<usize>,
    pub slots: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub schedule: Schedule,
    pub certificate: DualCertificate,
    pub charges: ChargeTable,
    pub trace: Vec<TraceRecord>,
    pub phase1_revenue: f64,
}

impl RunOutcome {
    pub fn revenue(&self, instance: &Instance) -> f64 {
        self.schedule.revenue(instance)
    }
}

/// Mutable state of one run. Confined to a single thread; runs on distinct
/// instances are independent.
#[derive(Debug, Clone)]
pub struct SchedulerState<'a> {
    instance: &'a Instance,
    config: EngineConfig,
    index: HashMap<usize, usize>,
    /// W(t, j), indexed `[station - 1][slot - 1]`.
    local_load: Vec<Vec<f64>>,
    global_load: Vec<f64>,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    phi: ChargeTable,
    /// K_j, zero for an empty station.
    station_rate: Vec<f64>,
    schedule: Schedule,
    revenue: f64,
    trace: Vec<TraceRecord>,
}

impl<'a> SchedulerState<'a> {
    pub fn new(instance: &'a Instance, config: EngineConfig) -> Self {
        let horizon = instance.horizon;
        Self {
            instance,
            config,
            index: instance.id_index(),
            local_load: vec![vec![0.0; horizon]; instance.stations.len()],
            global_load: vec![0.0; horizon],
            beta: vec![0.0; horizon],
            alpha: vec![0.0; instance.requests.len()],
            phi: ChargeTable::new(instance.requests.len(), horizon),
            station_rate: instance
                .station_max_rates()
                .into_iter()
                .map(|k| k.unwrap_or(0.0))
                .collect(),
            schedule: Schedule::new(horizon),
            revenue: 0.0,
            trace: Vec::new(),
        }
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn charges(&self) -> &ChargeTable {
        &self.phi
    }

    pub fn revenue(&self) -> f64 {
        self.revenue
    }

    pub fn local_load(&self, slot: usize, station: usize) -> f64 {
        self.local_load[station - 1][slot - 1]
    }

    pub fn global_load(&self, slot: usize) -> f64 {
        self.global_load[slot - 1]
    }

    fn position(&self, id: usize) -> usize {
        *self
            .index
            .get(&id)
            .unwrap_or_else(|| panic!("request {id} is not part of the instance"))
    }

    /// Capacity still available to station `station` in `slot`: the smaller
    /// of its local headroom and (when global-aware) the microgrid's headroom.
    pub fn effective_remaining(&self, slot: usize, station: usize) -> f64 {
        let local = self.instance.station_cap(station) - self.local_load(slot, station);
        let rem = if self.config.global_aware {
            local.min(self.instance.global_cap - self.global_load(slot))
        } else {
            local
        };
        rem.max(0.0)
    }

    /// Whether the EV's demand still fits in `[1, d_i]` under its rate cap.
    pub fn feasibility_check(&self, id: usize) -> bool {
        let r = &self.instance.requests[self.position(id)];
        self.capacity_before_deadline(id) >= r.demand - EPS
    }

    /// Σ_{t ≤ d_i} min(remaining(t), k_i).
    fn capacity_before_deadline(&self, id: usize) -> f64 {
        let r = &self.instance.requests[self.position(id)];
        (1..=r.deadline)
            .map(|t| self.effective_remaining(t, r.station).min(r.max_rate))
            .sum()
    }

    fn rank_slots(&self, station: usize, slots: &mut [usize]) {
        match self.config.ranking {
            SlotRanking::RightToLeft => slots.sort_by(|a, b| b.cmp(a)),
            SlotRanking::ValleyFill => {
                // Capacities are compared on a 1e-9 grid so float noise
                // cannot split a tie that the right-to-left rule should break.
                let key = |t: usize| (self.effective_remaining(t, station) / EPS).round() as i64;
                slots.sort_by(|&a, &b| key(b).cmp(&key(a)).then(b.cmp(&a)));
            }
        }
    }

    /// Places exactly D_i over `[1, d_i]` in rank order and sets α_i.
    /// Returns the slots that received energy.
    pub fn smart_allocate(&mut self, id: usize) -> Result<Vec<usize>, ScheduleError> {
        let pos = self.position(id);
        let r = self.instance.requests[pos].clone();
        let remaining = if self.config.rerank {
            self.level_fill(&r)
        } else {
            self.ranked_fill(&r)
        };
        if remaining > EPS {
            self.release(id, false);
            return Err(ScheduleError::Contract(format!(
                "request {id}: {remaining} kWh left unplaced after a passing feasibility check"
            )));
        }
        self.schedule.selected.insert(id);
        self.alpha[pos] = r.value / r.demand;
        self.revenue += r.value;
        let touched = self
            .schedule
            .profile(id)
            .map(|p| (1..=p.len()).filter(|&t| p[t - 1] > 0.0).collect())
            .unwrap_or_default();
        Ok(touched)
    }

    fn place(&mut self, r: &ChargingRequest, slot: usize, amount: f64) {
        self.schedule.add_energy(r.id, slot, amount);
        self.local_load[r.station - 1][slot - 1] += amount;
        self.global_load[slot - 1] += amount;
    }

    /// Single ranked pass; each slot takes min(k_i, remaining capacity,
    /// remaining demand). Returns the demand left over.
    fn ranked_fill(&mut self, r: &ChargingRequest) -> f64 {
        let mut order: Vec<usize> = (1..=r.deadline).collect();
        self.rank_slots(r.station, &mut order);
        let mut remaining = r.demand;
        for t in order {
            if remaining <= EPS {
                break;
            }
            let amount = r
                .max_rate
                .min(self.effective_remaining(t, r.station))
                .min(remaining);
            if amount > 0.0 {
                self.place(r, t, amount);
                remaining -= amount;
            }
        }
        remaining
    }

    /// Water filling: repeatedly raises the group of slots with the most
    /// remaining capacity until it meets the next level, a rate cap, or the
    /// demand is met. Returns the demand left over.
    fn level_fill(&mut self, r: &ChargingRequest) -> f64 {
        let mut remaining = r.demand;
        while remaining > EPS {
            let open: Vec<(usize, f64)> = (1..=r.deadline)
                .map(|t| (t, self.effective_remaining(t, r.station)))
                .filter(|&(t, rem)| rem.min(r.max_rate - self.schedule.energy(r.id, t)) > EPS)
                .collect();
            let Some(top) = open.iter().map(|&(_, rem)| rem).reduce(f64::max) else {
                break;
            };
            let (group, rest): (Vec<_>, Vec<_>) =
                open.into_iter().partition(|&(_, rem)| top - rem <= EPS);
            let next = rest.iter().map(|&(_, rem)| rem).fold(0.0, f64::max);
            let headroom = group
                .iter()
                .map(|&(t, _)| r.max_rate - self.schedule.energy(r.id, t))
                .fold(f64::INFINITY, f64::min);
            let step = headroom.min(top - next).min(remaining / group.len() as f64);
            for &(t, rem) in &group {
                let amount = step.min(rem);
                self.place(r, t, amount);
                remaining -= amount;
            }
        }
        remaining
    }

    /// Undoes an EV's allocation: loads, selection and revenue. α_i is
    /// cleared unless `keep_alpha`; an evicted EV keeps it so the
    /// certificate still covers that EV's dual constraints.
    fn release(&mut self, id: usize, keep_alpha: bool) {
        let pos = self.position(id);
        let r = &self.instance.requests[pos];
        let was_selected = self.schedule.is_selected(id);
        if let Some(profile) = self.schedule.remove(id) {
            for (t, y) in profile.iter().enumerate() {
                self.local_load[r.station - 1][t] -= y;
                self.global_load[t] -= y;
            }
        }
        if was_selected {
            self.revenue -= r.value;
        }
        if !keep_alpha {
            self.alpha[pos] = 0.0;
        }
    }

    /// Prices a rejected EV's congested interval: β(t) = v_i/D_i on
    /// `[t_cov, R(d_i)]`, where R(d_i) extends past the deadline across slots
    /// whose remaining capacity is below K_{P(i)}. Also records Φ for the
    /// bound analysis. Returns R(d_i).
    pub fn beta_cover(&mut self, id: usize) -> usize {
        let pos = self.position(id);
        let r = self.instance.requests[pos].clone();
        let horizon = self.instance.horizon;
        let k_station = self.station_rate[r.station - 1];
        let ratio = r.value / r.demand;

        let t_cov = self
            .beta
            .iter()
            .position(|&b| b == 0.0)
            .map_or(horizon + 1, |t| t + 1);
        let mut reach = r.deadline;
        while reach < horizon && self.effective_remaining(reach + 1, r.station) + EPS < k_station {
            reach += 1;
        }
        for t in t_cov..=reach {
            self.beta[t - 1] = ratio;
        }

        let cap = self.instance.station_cap(r.station);
        let s = self.instance.slackness;
        if s > 1.0 && cap > r.max_rate {
            let factor = cap / (cap - r.max_rate) * s / (s - 1.0) * ratio;
            for t in 1..=reach {
                for &other in &self.schedule.selected {
                    let y = self.schedule.energy(other, t);
                    let other_pos = self.index[&other];
                    let slot = &mut self.phi.values[other_pos][t - 1];
                    if y > 0.0 && *slot == 0.0 {
                        *slot = factor * y;
                    }
                }
            }
        }
        reach
    }

    /// Tries to admit a rejected EV by evicting cheaper EVs of the same
    /// station that precede it in `order`. Returns the swap when one happens.
    pub fn reconsider(
        &mut self,
        id: usize,
        order: &[usize],
    ) -> Result<Option<Swap>, ScheduleError> {
        let pos = self.position(id);
        let r = self.instance.requests[pos].clone();
        let rank = order
            .iter()
            .position(|&p| p == pos)
            .ok_or_else(|| ScheduleError::Precondition(format!("request {id} not in order")))?;

        let mut v_inc = r.value;
        let mut delta_t: Vec<f64> = (1..=r.deadline)
            .map(|t| self.effective_remaining(t, r.station).min(r.max_rate))
            .collect();
        let mut evict = Vec::new();
        for &other_pos in order[..rank].iter().rev() {
            let other = &self.instance.requests[other_pos];
            if other.station != r.station
                || !self.schedule.is_selected(other.id)
                || v_inc - other.value <= 0.0
            {
                continue;
            }
            evict.push(other.id);
            v_inc -= other.value;
            for (t, d) in delta_t.iter_mut().enumerate() {
                *d = r.max_rate.min(*d + self.schedule.energy(other.id, t + 1));
            }
        }

        if delta_t.iter().sum::<f64>() < r.demand - EPS {
            return Ok(None);
        }
        for &victim in &evict {
            self.release(victim, true);
        }
        let slots = self.smart_allocate(id)?;
        Ok(Some(Swap {
            removed: evict,
            slots,
        }))
    }

    fn record(&mut self, phase: u8, id: usize, decision: Decision, slots: Vec<usize>) {
        self.trace.push(TraceRecord {
            engine: self.config.engine,
            phase,
            request_id: id,
            decision,
            slots_touched: slots,
            revenue_so_far: self.revenue,
            removed: Vec::new(),
            delta: None,
        });
    }

    fn certificate(&self) -> DualCertificate {
        let mut cert = DualCertificate::zero(self.instance);
        cert.alpha = self.alpha.clone();
        cert.beta = self.beta.clone();
        cert.refresh_objective(self.instance);
        cert
    }

    fn into_outcome(self, phase1_revenue: f64) -> RunOutcome {
        let certificate = self.certificate();
        RunOutcome {
            schedule: self.schedule,
            certificate,
            charges: self.phi,
            trace: self.trace,
            phase1_revenue,
        }
    }
}

/// Runs the two-phase greedy with an explicit engine configuration.
pub fn run_with(instance: &Instance, config: EngineConfig) -> Result<RunOutcome, ScheduleError> {
    ensure_valid(instance)?;
    let order = marginal_order(&instance.requests);
    let mut state = SchedulerState::new(instance, config);

    for &pos in &order {
        let r = &instance.requests[pos];
        if state.feasibility_check(r.id) {
            let slots = state.smart_allocate(r.id)?;
            state.record(1, r.id, Decision::Allocated, slots);
        } else if state.beta[r.deadline - 1] == 0.0 {
            let reach = state.beta_cover(r.id);
            state.record(1, r.id, Decision::Covered, (1..=reach).collect());
        } else {
            state.record(1, r.id, Decision::Rejected, Vec::new());
        }
    }
    let phase1_revenue = state.revenue;

    if config.reconsider {
        for &pos in &order {
            let id = instance.requests[pos].id;
            if state.schedule.is_selected(id) {
                continue;
            }
            let delta = state.capacity_before_deadline(id);
            let decision = match state.reconsider(id, &order)? {
                Some(swap) => {
                    state.record(2, id, Decision::Swapped, swap.slots);
                    state.trace.last_mut().expect("just recorded").removed = swap.removed;
                    Decision::Swapped
                }
                None => {
                    state.record(2, id, Decision::Rejected, Vec::new());
                    Decision::Rejected
                }
            };
            debug_assert!(matches!(decision, Decision::Swapped | Decision::Rejected));
            state.trace.last_mut().expect("just recorded").delta = Some(delta);
        }
    }

    Ok(state.into_outcome(phase1_revenue))
}

/// The smart charging scheduler: valley-filling, global-cap aware, with
/// exchange-based reconsideration.
pub fn run_scs(instance: &Instance) -> Result<RunOutcome, ScheduleError> {
    run_with(instance, EngineConfig::scs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ChargingRequest;

    fn ev(
        id: usize,
        station: usize,
        demand: f64,
        deadline: usize,
        k: f64,
        v: f64,
    ) -> ChargingRequest {
        ChargingRequest {
            id,
            station,
            demand,
            deadline,
            max_rate: k,
            value: v,
        }
    }

    /// Pre-loads station 1 so that its remaining capacity equals `remaining`.
    fn preload(state: &mut SchedulerState, remaining: &[f64]) {
        for (t, rem) in remaining.iter().enumerate() {
            let used = state.instance.station_cap(1) - rem;
            state.local_load[0][t] += used;
            state.global_load[t] += used;
        }
    }

    #[test]
    fn effective_remaining_takes_the_tighter_cap() {
        let inst = Instance::new(1, vec![125.0, 500.0], 500.0, 1.0, vec![]);
        let mut st = SchedulerState::new(&inst, EngineConfig::scs());
        assert_eq!(st.effective_remaining(1, 1), 125.0);
        st.local_load[0][0] = 25.0;
        st.local_load[1][0] = 465.0;
        st.global_load[0] = 490.0;
        assert_eq!(st.effective_remaining(1, 1), 10.0);
        st.local_load[0][0] = 125.0;
        st.global_load[0] = 125.0;
        assert_eq!(st.effective_remaining(1, 1), 0.0);
    }

    #[test]
    fn feasibility_boundary() {
        let inst = Instance::new(
            2,
            vec![5.0],
            5.0,
            1.0,
            vec![ev(1, 1, 6.0, 2, 3.0, 1.0), ev(2, 1, 6.5, 2, 3.0, 1.0)],
        );
        let st = SchedulerState::new(&inst, EngineConfig::scs());
        assert!(st.feasibility_check(1));
        assert!(!st.feasibility_check(2));
    }

    #[test]
    fn feasibility_with_partial_load() {
        let inst = Instance::new(2, vec![5.0], 5.0, 1.0, vec![ev(1, 1, 4.0, 2, 3.0, 1.0)]);
        let mut st = SchedulerState::new(&inst, EngineConfig::scs());
        preload(&mut st, &[1.0, 5.0]);
        assert!(st.feasibility_check(1));
        assert!((st.capacity_before_deadline(1) - 4.0).abs() < 1e-12);
    }

    fn allocate_with(remaining: &[f64], cap: f64, request: ChargingRequest) -> Vec<f64> {
        let id = request.id;
        let inst = Instance::new(remaining.len(), vec![cap], cap, 1.0, vec![request]);
        let mut st = SchedulerState::new(&inst, EngineConfig::scs());
        preload(&mut st, remaining);
        st.smart_allocate(id).unwrap();
        st.schedule().profile(id).unwrap().to_vec()
    }

    #[test]
    fn smart_allocate_fills_valleys_then_right_to_left() {
        assert_eq!(
            allocate_with(&[10.0, 7.0, 10.0], 10.0, ev(1, 1, 8.0, 3, 4.0, 1.0)),
            vec![4.0, 0.0, 4.0]
        );
        assert_eq!(
            allocate_with(&[1.0, 5.0], 5.0, ev(1, 1, 5.0, 2, 4.0, 1.0)),
            vec![1.0, 4.0]
        );
        assert_eq!(
            allocate_with(&[3.0, 3.0], 3.0, ev(1, 1, 3.0, 2, 3.0, 1.0)),
            vec![0.0, 3.0]
        );
    }

    #[test]
    fn smart_allocate_sets_alpha() {
        let inst = Instance::new(2, vec![5.0], 5.0, 1.0, vec![ev(7, 1, 4.0, 2, 3.0, 6.0)]);
        let mut st = SchedulerState::new(&inst, EngineConfig::scs());
        st.smart_allocate(7).unwrap();
        assert_eq!(st.alpha(), &[1.5]);
        assert!(st.schedule().is_selected(7));
        assert!((st.schedule().delivered(7) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn smart_allocate_reports_contract_violation_and_rolls_back() {
        let inst = Instance::new(2, vec![5.0], 5.0, 1.0, vec![ev(1, 1, 6.0, 2, 3.0, 1.0)]);
        let mut st = SchedulerState::new(&inst, EngineConfig::scs());
        preload(&mut st, &[1.0, 1.0]);
        assert!(matches!(
            st.smart_allocate(1),
            Err(ScheduleError::Contract(_))
        ));
        assert_eq!(st.local_load(1, 1), 4.0);
        assert!(st.schedule().allocation.is_empty());
    }

    #[test]
    fn rerank_variant_levels_the_load() {
        // Remaining [6, 5], k = 3, D = 4. One ranked pass gives [3, 1];
        // water filling lifts slot 1 to the level of slot 2, then both evenly.
        let r = ev(1, 1, 4.0, 2, 3.0, 1.0);
        let inst = Instance::new(2, vec![6.0], 6.0, 1.0, vec![r]);
        for (rerank, expected) in [(false, [3.0, 1.0]), (true, [2.5, 1.5])] {
            let mut cfg = EngineConfig::scs();
            cfg.rerank = rerank;
            let mut st = SchedulerState::new(&inst, cfg);
            preload(&mut st, &[6.0, 5.0]);
            st.smart_allocate(1).unwrap();
            let got = st.schedule().profile(1).unwrap();
            assert!((got[0] - expected[0]).abs() < 1e-12 && (got[1] - expected[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn rerank_variant_respects_rate_cap() {
        let r = ev(1, 1, 5.0, 3, 2.0, 1.0);
        let inst = Instance::new(3, vec![10.0], 10.0, 1.0, vec![r]);
        let mut cfg = EngineConfig::scs();
        cfg.rerank = true;
        let mut st = SchedulerState::new(&inst, cfg);
        preload(&mut st, &[10.0, 2.0, 9.0]);
        st.smart_allocate(1).unwrap();
        let got = st.schedule().profile(1).unwrap();
        assert!(got.iter().all(|&y| y <= 2.0 + EPS));
        assert!((got.iter().sum::<f64>() - 5.0).abs() < 1e-9);
    }

    #[test]
    fn beta_cover_from_empty_prefix() {
        let inst = Instance::new(4, vec![10.0], 10.0, 1.0, vec![ev(1, 1, 2.0, 2, 2.0, 4.0)]);
        let mut st = SchedulerState::new(&inst, EngineConfig::scs());
        let reach = st.beta_cover(1);
        assert_eq!(reach, 2);
        assert_eq!(st.beta(), &[2.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn beta_cover_extends_an_existing_prefix() {
        let inst = Instance::new(5, vec![10.0], 10.0, 1.0, vec![ev(1, 1, 1.0, 3, 1.0, 2.0)]);
        let mut st = SchedulerState::new(&inst, EngineConfig::scs());
        st.beta[0] = 3.0;
        st.beta[1] = 3.0;
        st.beta_cover(1);
        assert_eq!(st.beta(), &[3.0, 3.0, 2.0, 0.0, 0.0]);
        for t in 1..=3 {
            assert!(st.alpha()[0] + st.beta()[t - 1] >= 2.0);
        }
    }

    #[test]
    fn beta_cover_reaches_across_saturated_slots() {
        let inst = Instance::new(4, vec![10.0], 10.0, 1.0, vec![ev(1, 1, 1.0, 1, 5.0, 1.0)]);
        let mut st = SchedulerState::new(&inst, EngineConfig::scs());
        // Slots 2 and 3 have less than K = 5 left, slot 4 has plenty.
        preload(&mut st, &[0.0, 4.0, 1.0, 10.0]);
        assert_eq!(st.beta_cover(1), 3);
        assert_eq!(st.beta(), &[1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn beta_cover_records_charges_for_selected_evs() {
        // EV 1 holds [4, 0, 4]; EV 2 (v/D = 1, k = 5, C = 10, s = 2) is rejected.
        let inst = Instance::new(
            3,
            vec![10.0],
            10.0,
            2.0,
            vec![ev(1, 1, 8.0, 3, 4.0, 8.0), ev(2, 1, 3.0, 3, 5.0, 3.0)],
        );
        let mut st = SchedulerState::new(&inst, EngineConfig::scs());
        preload(&mut st, &[10.0, 7.0, 10.0]);
        st.smart_allocate(1).unwrap();
        assert_eq!(st.schedule().profile(1).unwrap(), &[4.0, 0.0, 4.0]);
        let reach = st.beta_cover(2);
        assert_eq!(reach, 3);
        assert_eq!(st.charges().values[0], vec![16.0, 0.0, 16.0]);
        // A second cover leaves already-charged slots alone.
        st.beta_cover(2);
        assert_eq!(st.charges().values[0], vec![16.0, 0.0, 16.0]);
    }

    fn pathology() -> Instance {
        Instance::new(
            1,
            vec![10.0],
            10.0,
            1.0,
            vec![ev(1, 1, 1.0, 1, 1.0, 2.0), ev(2, 1, 10.0, 1, 10.0, 10.0)],
        )
    }

    #[test]
    fn reconsider_swaps_out_the_cheap_ev() {
        let inst = pathology();
        let out = run_scs(&inst).unwrap();
        assert_eq!(out.phase1_revenue, 2.0);
        assert_eq!(out.revenue(&inst), 10.0);
        assert_eq!(
            out.schedule.selected.iter().copied().collect::<Vec<_>>(),
            vec![2]
        );
        let swap = out
            .trace
            .iter()
            .find(|r| r.decision == Decision::Swapped)
            .unwrap();
        assert_eq!(swap.request_id, 2);
        assert_eq!(swap.removed, vec![1]);
        assert_eq!(swap.phase, 2);
        // The evicted EV keeps α = v/D in the certificate.
        assert_eq!(out.certificate.alpha, vec![2.0, 1.0]);
        assert!(crate::metrics::verify_dual_feasibility(&inst, &out.certificate).is_empty());
    }

    #[test]
    fn reconsider_without_co_located_evs_is_a_no_op() {
        let inst = Instance::new(
            1,
            vec![10.0, 10.0],
            10.0,
            1.0,
            vec![ev(1, 1, 10.0, 1, 10.0, 20.0), ev(2, 2, 5.0, 1, 5.0, 9.0)],
        );
        let order = marginal_order(&inst.requests);
        let mut st = SchedulerState::new(&inst, EngineConfig::scs());
        st.smart_allocate(1).unwrap();
        assert!(!st.feasibility_check(2));
        let before = st.schedule().clone();
        assert_eq!(st.reconsider(2, &order).unwrap(), None);
        assert_eq!(st.schedule(), &before);
    }

    #[test]
    fn reconsider_requires_strict_value_gain() {
        // EV 1 has the higher marginal value and the same total value.
        let inst = Instance::new(
            1,
            vec![10.0],
            10.0,
            1.0,
            vec![ev(1, 1, 5.0, 1, 5.0, 10.0), ev(2, 1, 10.0, 1, 10.0, 10.0)],
        );
        let order = marginal_order(&inst.requests);
        let mut st = SchedulerState::new(&inst, EngineConfig::scs());
        st.smart_allocate(1).unwrap();
        assert_eq!(st.reconsider(2, &order).unwrap(), None);
        assert!(st.schedule().is_selected(1));
    }

    #[test]
    fn empty_instance_gives_empty_outcome() {
        let inst = Instance::new(3, vec![1.0], 1.0, 1.5, vec![]);
        let out = run_scs(&inst).unwrap();
        assert!(out.schedule.allocation.is_empty());
        assert!(out.schedule.selected.is_empty());
        assert_eq!(out.certificate.dual_objective, 0.0);
        assert!(out.trace.is_empty());
    }

    #[test]
    fn invalid_instance_is_refused() {
        let inst = Instance::new(2, vec![5.0], 5.0, 1.5, vec![ev(1, 1, 2.0, 2, 1.0, 1.0)]);
        assert!(matches!(run_scs(&inst), Err(ScheduleError::Model(_))));
    }

    #[test]
    fn global_cap_is_respected_across_stations() {
        // Each station could take 4 per slot but the microgrid only 5.
        let inst = Instance::new(
            1,
            vec![4.0, 4.0],
            5.0,
            1.0,
            vec![ev(1, 1, 3.0, 1, 3.0, 6.0), ev(2, 2, 3.0, 1, 3.0, 3.0)],
        );
        let out = run_scs(&inst).unwrap();
        assert_eq!(
            out.schedule.selected.iter().copied().collect::<Vec<_>>(),
            vec![1]
        );
        assert!(out.schedule.slot_totals()[0] <= 5.0 + EPS);
    }

    #[test]
    fn trace_serializes_as_json_lines() {
        let inst = pathology();
        let out = run_scs(&inst).unwrap();
        let text = trace_to_jsonl(&out.trace);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), out.trace.len());
        let first: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(first["decision"], "allocated");
        assert_eq!(first["engine"], "scs");
        assert_eq!(first["request_id"], 1);
        for key in ["phase", "slots_touched", "revenue_so_far"] {
            assert!(first.get(key).is_some());
        }
    }
}
