//! Exact ground truth for small instances.
//!
//! A fixed selection is schedulable iff the flow network
//! `source → EV (D_i) → (station, slot) (k_i) → slot (C_j) → sink (C_total)`
//! saturates every source edge. Capacities are f64 values, i.e. dyadic
//! rationals, so they are scaled by a common power of two into exact
//! integers and the flow is computed without rounding.

use std::collections::{BTreeSet, VecDeque};

use crate::error::OracleError;
use crate::model::{Instance, Schedule, EPS};

/// Default cap on the request count for subset enumeration.
pub const DEFAULT_ENUMERATION_LIMIT: usize = 16;

/// Largest power-of-two scale used; finer values are rounded to this grid.
const MAX_SCALE_BITS: u32 = 80;

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    cap: i128,
    rev: usize,
}

/// Dinic max-flow over integer capacities.
#[derive(Debug, Clone)]
pub struct FlowGraph {
    adj: Vec<Vec<Edge>>,
    level: Vec<i32>,
    next: Vec<usize>,
}

impl FlowGraph {
    pub fn new(nodes: usize) -> Self {
        Self {
            adj: vec![Vec::new(); nodes],
            level: vec![0; nodes],
            next: vec![0; nodes],
        }
    }

    /// Adds a directed edge and returns its handle `(from, index)`.
    pub fn add_edge(&mut self, from: usize, to: usize, cap: i128) -> (usize, usize) {
        let fwd = self.adj[from].len();
        let back = self.adj[to].len() + usize::from(from == to);
        self.adj[from].push(Edge { to, cap, rev: back });
        self.adj[to].push(Edge {
            to: from,
            cap: 0,
            rev: fwd,
        });
        (from, fwd)
    }

    /// Flow pushed through an edge so far (the residual of its twin).
    pub fn flow_on(&self, (from, idx): (usize, usize)) -> i128 {
        let e = &self.adj[from][idx];
        self.adj[e.to][e.rev].cap
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.iter_mut().for_each(|l| *l = -1);
        self.level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for e in &self.adj[u] {
                if e.cap > 0 && self.level[e.to] < 0 {
                    self.level[e.to] = self.level[u] + 1;
                    queue.push_back(e.to);
                }
            }
        }
        self.level[t] >= 0
    }

    fn dfs(&mut self, u: usize, t: usize, pushed: i128) -> i128 {
        if u == t {
            return pushed;
        }
        while self.next[u] < self.adj[u].len() {
            let i = self.next[u];
            let (to, cap) = (self.adj[u][i].to, self.adj[u][i].cap);
            if cap > 0 && self.level[to] == self.level[u] + 1 {
                let got = self.dfs(to, t, pushed.min(cap));
                if got > 0 {
                    self.adj[u][i].cap -= got;
                    let rev = self.adj[u][i].rev;
                    self.adj[to][rev].cap += got;
                    return got;
                }
            }
            self.next[u] += 1;
        }
        0
    }

    pub fn max_flow(&mut self, s: usize, t: usize) -> i128 {
        let mut total = 0;
        while self.bfs(s, t) {
            self.next.iter_mut().for_each(|n| *n = 0);
            loop {
                let f = self.dfs(s, t, i128::MAX);
                if f == 0 {
                    break;
                }
                total += f;
            }
        }
        total
    }
}

/// Number of binary fraction digits needed to write `x` exactly.
fn fraction_bits(x: f64) -> u32 {
    let mut v = x.abs();
    let mut bits = 0;
    while v.fract() != 0.0 && bits < MAX_SCALE_BITS {
        v *= 2.0;
        bits += 1;
    }
    bits
}

/// Common power-of-two scale turning a set of reals into integers.
#[derive(Debug, Clone, Copy)]
struct Scale {
    factor: f64,
}

impl Scale {
    fn for_values(values: impl IntoIterator<Item = f64>) -> Self {
        let bits = values.into_iter().map(fraction_bits).max().unwrap_or(0);
        Self {
            factor: (2.0f64).powi(bits as i32),
        }
    }

    fn units(&self, x: f64) -> i128 {
        (x * self.factor).round() as i128
    }

    fn value(&self, units: i128) -> f64 {
        units as f64 / self.factor
    }
}

/// The flow network for one selection, with the edges needed to read back
/// a schedule.
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    graph: FlowGraph,
    source: usize,
    sink: usize,
    scale: Scale,
    demand_units: i128,
    /// Total unmet demand still accepted, matching the checker's tolerance.
    shortfall_units: i128,
    /// (request id, slot, edge handle) for every EV→(station, slot) edge.
    assignment_edges: Vec<(usize, usize, (usize, usize))>,
}

impl FlowNetwork {
    /// Builds the network for `subset` (request positions). `peak` lowers the
    /// slot→sink capacity below C_total when given.
    ///
    /// Every capacity is raised by `slack`, and the same total shortfall of
    /// demand is accepted.
    fn build(instance: &Instance, subset: &[usize], peak: Option<f64>, slack: f64) -> Self {
        let t_len = instance.horizon;
        let m = instance.stations.len();
        let sink_cap = peak.map_or(instance.global_cap, |p| p.min(instance.global_cap)) + slack;
        let scale = Scale::for_values(
            subset
                .iter()
                .flat_map(|&p| {
                    [
                        instance.requests[p].demand,
                        instance.requests[p].max_rate + slack,
                    ]
                })
                .chain(instance.stations.iter().map(|s| s.cap + slack))
                .chain([sink_cap, slack]),
        );

        // Layout: source, EVs, (station, slot) pairs, slots, sink.
        let source = 0;
        let ev_base = 1;
        let pair_base = ev_base + subset.len();
        let slot_base = pair_base + m * t_len;
        let sink = slot_base + t_len;
        let mut graph = FlowGraph::new(sink + 1);
        let pair = |j: usize, t: usize| pair_base + (j - 1) * t_len + (t - 1);

        let mut demand_units = 0;
        let mut assignment_edges = Vec::new();
        for (k, &p) in subset.iter().enumerate() {
            let r = &instance.requests[p];
            let d = scale.units(r.demand);
            demand_units += d;
            graph.add_edge(source, ev_base + k, d);
            let rate = scale.units(r.max_rate + slack);
            for t in 1..=r.deadline.min(t_len) {
                let h = graph.add_edge(ev_base + k, pair(r.station, t), rate);
                assignment_edges.push((r.id, t, h));
            }
        }
        for j in 1..=m {
            let cap = scale.units(instance.station_cap(j) + slack);
            for t in 1..=t_len {
                graph.add_edge(pair(j, t), slot_base + t - 1, cap);
            }
        }
        let sink_units = scale.units(sink_cap);
        for t in 1..=t_len {
            graph.add_edge(slot_base + t - 1, sink, sink_units);
        }
        Self {
            graph,
            source,
            sink,
            scale,
            demand_units,
            shortfall_units: scale.units(slack),
            assignment_edges,
        }
    }

    /// Runs the flow; returns the witness schedule when every demand is met.
    fn solve(mut self, instance: &Instance, subset: &[usize]) -> Option<Schedule> {
        let flow = self.graph.max_flow(self.source, self.sink);
        debug_assert!(flow <= self.demand_units);
        if flow < self.demand_units - self.shortfall_units {
            return None;
        }
        let mut schedule = Schedule::new(instance.horizon);
        for &p in subset {
            schedule.selected.insert(instance.requests[p].id);
        }
        for &(id, t, h) in &self.assignment_edges {
            let units = self.graph.flow_on(h);
            if units > 0 {
                schedule.add_energy(id, t, self.scale.value(units));
            }
        }
        Some(schedule)
    }
}

fn positions_of(instance: &Instance, subset: &BTreeSet<usize>) -> Result<Vec<usize>, OracleError> {
    let index = instance.id_index();
    subset
        .iter()
        .map(|id| {
            index
                .get(id)
                .copied()
                .ok_or(OracleError::UnknownRequest(*id))
        })
        .collect()
}

/// Exact flow first; if that falls short, retry with half the primal
/// checker's tolerance as slack so selections the checker would accept (e.g.
/// demands 0.8 + 0.2 summing one ulp above a cap of 1) are not rejected. The
/// other half absorbs rounding when the witness is read back.
fn feasible_positions(
    instance: &Instance,
    subset: &[usize],
    peak: Option<f64>,
) -> Option<Schedule> {
    FlowNetwork::build(instance, subset, peak, 0.0)
        .solve(instance, subset)
        .or_else(|| FlowNetwork::build(instance, subset, peak, 0.5 * EPS).solve(instance, subset))
}

/// Outcome of a fixed-selection feasibility test.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowFeasibility {
    pub feasible: bool,
    pub witness: Option<Schedule>,
}

/// Whether exactly `subset` (request ids) can be charged in full, with a
/// witness schedule when it can.
pub fn max_flow_feasible(
    instance: &Instance,
    subset: &BTreeSet<usize>,
) -> Result<FlowFeasibility, OracleError> {
    let positions = positions_of(instance, subset)?;
    let witness = feasible_positions(instance, &positions, None);
    Ok(FlowFeasibility {
        feasible: witness.is_some(),
        witness,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub revenue: f64,
    /// Request ids of one optimal selection (lexicographically smallest).
    pub subset: BTreeSet<usize>,
}

fn check_size(instance: &Instance, limit: usize) -> Result<(), OracleError> {
    let n = instance.requests.len();
    if n > limit {
        return Err(OracleError::TooLarge { n, limit });
    }
    Ok(())
}

fn revenue_tol(best: f64) -> f64 {
    1e-9 * best.abs().max(1.0)
}

/// Incumbent keeper shared by both enumeration orders.
#[derive(Debug, Default)]
struct Incumbent {
    best: Option<(f64, Vec<usize>)>,
}

impl Incumbent {
    /// `ids` must be sorted ascending.
    fn offer(&mut self, revenue: f64, ids: Vec<usize>) {
        let better = match &self.best {
            None => true,
            Some((b, b_ids)) => {
                let tol = revenue_tol(*b);
                revenue > b + tol || ((revenue - b).abs() <= tol && ids < *b_ids)
            }
        };
        if better {
            self.best = Some((revenue, ids));
        }
    }

    fn value(&self) -> Option<f64> {
        self.best.as_ref().map(|(v, _)| *v)
    }

    fn finish(self) -> OptResult {
        let (revenue, ids) = self.best.unwrap_or((0.0, Vec::new()));
        OptResult {
            revenue,
            subset: ids.into_iter().collect(),
        }
    }
}

fn subset_revenue(instance: &Instance, positions: &[usize]) -> (f64, Vec<usize>) {
    let mut ids: Vec<usize> = positions.iter().map(|&p| instance.requests[p].id).collect();
    ids.sort_unstable();
    let mut by_id: Vec<(usize, f64)> = positions
        .iter()
        .map(|&p| (instance.requests[p].id, instance.requests[p].value))
        .collect();
    by_id.sort_by_key(|&(id, _)| id);
    (by_id.iter().map(|&(_, v)| v).sum(), ids)
}

/// Depth-first branch and bound over subsets. Items are visited by
/// non-increasing value; a branch is cut when its value cannot reach
/// `floor(incumbent)` or when the partial selection is already infeasible
/// (supersets of an infeasible selection stay infeasible).
struct Search<'a> {
    instance: &'a Instance,
    items: Vec<usize>,
    suffix: Vec<f64>,
}

impl<'a> Search<'a> {
    fn new(instance: &'a Instance) -> Self {
        let mut items: Vec<usize> = (0..instance.requests.len()).collect();
        items.sort_by(|&a, &b| {
            let (ra, rb) = (&instance.requests[a], &instance.requests[b]);
            rb.value.total_cmp(&ra.value).then(ra.id.cmp(&rb.id))
        });
        let mut suffix = vec![0.0; items.len() + 1];
        for k in (0..items.len()).rev() {
            suffix[k] = suffix[k + 1] + instance.requests[items[k]].value;
        }
        Self {
            instance,
            items,
            suffix,
        }
    }

    /// Visits every feasible subset whose value can reach `floor()`.
    fn walk(
        &self,
        depth: usize,
        chosen: &mut Vec<usize>,
        value: f64,
        floor: &mut dyn FnMut() -> Option<f64>,
        visit: &mut dyn FnMut(&[usize]),
    ) {
        if let Some(f) = floor() {
            if value + self.suffix[depth] < f - revenue_tol(f) {
                return;
            }
        }
        if depth == self.items.len() {
            visit(chosen);
            return;
        }
        let p = self.items[depth];
        chosen.push(p);
        if feasible_positions(self.instance, chosen, None).is_some() {
            let v = value + self.instance.requests[p].value;
            self.walk(depth + 1, chosen, v, floor, visit);
        }
        chosen.pop();
        self.walk(depth + 1, chosen, value, floor, visit);
    }
}

/// Exact integral optimum by pruned subset enumeration.
pub fn brute_force_opt(instance: &Instance, limit: usize) -> Result<OptResult, OracleError> {
    check_size(instance, limit)?;
    let search = Search::new(instance);
    let inc = std::cell::RefCell::new(Incumbent::default());
    search.walk(
        0,
        &mut Vec::new(),
        0.0,
        &mut || inc.borrow().value(),
        &mut |chosen| {
            let (rev, ids) = subset_revenue(instance, chosen);
            inc.borrow_mut().offer(rev, ids);
        },
    );
    Ok(inc.into_inner().finish())
}

/// Same optimum as [`brute_force_opt`] by scanning every bitmask with no
/// pruning. Kept as an independent cross-check.
pub fn brute_force_opt_exhaustive(
    instance: &Instance,
    limit: usize,
) -> Result<OptResult, OracleError> {
    check_size(instance, limit)?;
    let n = instance.requests.len();
    let mut inc = Incumbent::default();
    for mask in 0u64..(1u64 << n) {
        let positions: Vec<usize> = (0..n).filter(|b| mask >> b & 1 == 1).collect();
        if feasible_positions(instance, &positions, None).is_some() {
            let (rev, ids) = subset_revenue(instance, &positions);
            inc.offer(rev, ids);
        }
    }
    Ok(inc.finish())
}

/// Every feasible selection whose revenue equals the optimum (within 1e-9
/// relative), as sorted id sets.
pub fn optimal_subsets(
    instance: &Instance,
    limit: usize,
) -> Result<(f64, Vec<BTreeSet<usize>>), OracleError> {
    let opt = brute_force_opt(instance, limit)?.revenue;
    let search = Search::new(instance);
    let mut found = Vec::new();
    search.walk(0, &mut Vec::new(), 0.0, &mut || Some(opt), &mut |chosen| {
        let (rev, ids) = subset_revenue(instance, chosen);
        if rev >= opt - revenue_tol(opt) {
            found.push(ids.into_iter().collect());
        }
    });
    found.sort();
    Ok((opt, found))
}

/// Smallest achievable global peak for a feasible selection, by bisection on
/// the slot→sink capacity to within `1e-6 · C_total`. `None` if the
/// selection is infeasible even at C_total.
pub fn min_peak_for_subset(
    instance: &Instance,
    subset: &BTreeSet<usize>,
) -> Result<Option<f64>, OracleError> {
    let positions = positions_of(instance, subset)?;
    if feasible_positions(instance, &positions, None).is_none() {
        return Ok(None);
    }
    if positions.is_empty() {
        return Ok(Some(0.0));
    }
    let precision = 1e-6 * instance.global_cap;
    // Any schedule needs at least the average load per slot.
    let total: f64 = positions.iter().map(|&p| instance.requests[p].demand).sum();
    let mut lo = total / instance.horizon as f64 - precision;
    let mut hi = instance.global_cap;
    while hi - lo > precision {
        let mid = 0.5 * (lo + hi);
        if feasible_positions(instance, &positions, Some(mid)).is_some() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// Pseudo-optimal peak: the lowest global peak reachable by any
/// revenue-optimal selection.
pub fn min_peak_among_optimal(instance: &Instance, limit: usize) -> Result<f64, OracleError> {
    let (_, subsets) = optimal_subsets(instance, limit)?;
    let mut best = f64::INFINITY;
    for s in &subsets {
        if let Some(p) = min_peak_for_subset(instance, s)? {
            best = best.min(p);
        }
    }
    Ok(if best.is_finite() { best } else { 0.0 })
}
