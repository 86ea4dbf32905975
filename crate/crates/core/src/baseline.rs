//! GreedyRTL comparison engine.
//!
//! Each station is scheduled on its own with local capacity only: the same
//! marginal-value greedy and exchange phase as SCS, but energy is placed
//! right to left with no regard for how loaded a slot already is. The
//! microgrid cap is only guaranteed through Σ_j C_j ≤ C_total.

use crate::error::ScheduleError;
use crate::metrics::{compute_metrics, MetricsReport};
use crate::model::{ensure_valid, Instance, Schedule, EPS};
use crate::scheduler::{run_with, EngineConfig, TraceRecord};

#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub schedule: Schedule,
    pub metrics: MetricsReport,
    pub trace: Vec<TraceRecord>,
    pub phase1_revenue: f64,
}

/// The single-station sub-instance holding station `station`'s requests.
pub fn station_subinstance(instance: &Instance, station: usize) -> Instance {
    let cap = instance.station_cap(station);
    let requests = instance
        .requests
        .iter()
        .filter(|r| r.station == station)
        .map(|r| {
            let mut r = r.clone();
            r.station = 1;
            r
        })
        .collect();
    Instance::new(
        instance.horizon,
        vec![cap],
        cap,
        instance.slackness,
        requests,
    )
}

pub fn run_greedy_rtl(
    instance: &Instance,
    reconsider: bool,
) -> Result<BaselineOutcome, ScheduleError> {
    ensure_valid(instance)?;
    let local_total = instance.total_local_cap();
    if local_total > instance.global_cap + EPS {
        return Err(ScheduleError::Precondition(format!(
            "greedy-rtl needs the local caps to sum to at most the global cap \
             ({local_total} > {})",
            instance.global_cap
        )));
    }

    let config = EngineConfig::greedy_rtl(reconsider);
    let mut schedule = Schedule::new(instance.horizon);
    let mut trace = Vec::new();
    let mut phase1_revenue = 0.0;
    for station in 1..=instance.stations.len() {
        let sub = station_subinstance(instance, station);
        let out = run_with(&sub, config)?;
        schedule
            .selected
            .extend(out.schedule.selected.iter().copied());
        schedule.allocation.extend(out.schedule.allocation);
        phase1_revenue += out.phase1_revenue;
        trace.extend(out.trace);
    }
    let metrics = compute_metrics(instance, &schedule);
    Ok(BaselineOutcome {
        schedule,
        metrics,
        trace,
        phase1_revenue,
    })
}
