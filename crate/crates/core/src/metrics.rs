//! KPIs and certificate checks for an (instance, schedule, certificate) triple.

use serde::Serialize;
use std::fmt;

use crate::error::MetricsError;
use crate::model::{approximation_bound, DualCertificate, Instance, Schedule, EPS};
use crate::scheduler::ChargeTable;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub revenue: f64,
    /// Revenue over the value of every submitted EV, feasible or not.
    pub normalized_revenue: f64,
    pub utilization: f64,
    pub acceptance_rate: f64,
    pub actual_peak: f64,
    pub per_station_peaks: Vec<f64>,
}

pub fn compute_metrics(instance: &Instance, schedule: &Schedule) -> MetricsReport {
    let mut revenue = 0.0;
    let mut energy = 0.0;
    let mut accepted = 0usize;
    // Iterate in id order so the sums do not depend on request order.
    let mut selected: Vec<_> = instance
        .requests
        .iter()
        .filter(|r| schedule.is_selected(r.id))
        .collect();
    selected.sort_by_key(|r| r.id);
    for r in selected {
        revenue += r.value;
        energy += r.demand;
        accepted += 1;
    }
    let mut all_values: Vec<(usize, f64)> =
        instance.requests.iter().map(|r| (r.id, r.value)).collect();
    all_values.sort_by_key(|&(id, _)| id);
    let total_value: f64 = all_values.iter().map(|&(_, v)| v).sum();
    let n = instance.requests.len();
    let capacity = instance.horizon as f64 * instance.global_cap;

    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
    let peak_of = |row: &[f64]| row.iter().copied().fold(0.0, f64::max);

    MetricsReport {
        revenue,
        normalized_revenue: ratio(revenue, total_value),
        utilization: ratio(energy, capacity),
        acceptance_rate: ratio(accepted as f64, n as f64),
        actual_peak: peak_of(&schedule.slot_totals()),
        per_station_peaks: schedule
            .station_slot_totals(instance)
            .iter()
            .map(|row| peak_of(row))
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimalConstraint {
    UnknownRequest,
    NonNegative,
    AfterDeadline,
    RateCap,
    AllOrNothing,
    LocalCap,
    GlobalCap,
}

/// Where a violation sits: a request/slot pair, a station/slot pair, or a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Location {
    Request { id: usize },
    RequestSlot { id: usize, slot: usize },
    StationSlot { station: usize, slot: usize },
    Slot { slot: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrimalViolation {
    pub constraint: PrimalConstraint,
    pub at: Location,
    /// Signed amount by which the constraint is exceeded (positive = broken).
    pub slack: f64,
}

impl fmt::Display for PrimalViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?} at {:?} off by {}",
            self.constraint, self.at, self.slack
        )
    }
}

/// Checks every schedule invariant at tolerance 1e-9. Empty means feasible.
pub fn verify_primal_feasibility(instance: &Instance, schedule: &Schedule) -> Vec<PrimalViolation> {
    let mut out = Vec::new();
    let index = instance.id_index();
    let mut push = |constraint, at, slack| {
        out.push(PrimalViolation {
            constraint,
            at,
            slack,
        })
    };

    for (&id, profile) in &schedule.allocation {
        let Some(&pos) = index.get(&id) else {
            push(
                PrimalConstraint::UnknownRequest,
                Location::Request { id },
                0.0,
            );
            continue;
        };
        let r = &instance.requests[pos];
        for (t0, &y) in profile.iter().enumerate() {
            let slot = t0 + 1;
            if y < -EPS {
                push(
                    PrimalConstraint::NonNegative,
                    Location::RequestSlot { id, slot },
                    -y,
                );
            }
            if slot > r.deadline && y > EPS {
                push(
                    PrimalConstraint::AfterDeadline,
                    Location::RequestSlot { id, slot },
                    y,
                );
            }
            if y > r.max_rate + EPS {
                push(
                    PrimalConstraint::RateCap,
                    Location::RequestSlot { id, slot },
                    y - r.max_rate,
                );
            }
        }
    }
    for &id in &schedule.selected {
        if !index.contains_key(&id) {
            push(
                PrimalConstraint::UnknownRequest,
                Location::Request { id },
                0.0,
            );
        }
    }
    for r in &instance.requests {
        let delivered = schedule.delivered(r.id);
        let target = if schedule.is_selected(r.id) {
            r.demand
        } else {
            0.0
        };
        if (delivered - target).abs() > EPS {
            push(
                PrimalConstraint::AllOrNothing,
                Location::Request { id: r.id },
                delivered - target,
            );
        }
    }

    for (j, row) in schedule.station_slot_totals(instance).iter().enumerate() {
        let cap = instance.stations[j].cap;
        for (t0, &load) in row.iter().enumerate() {
            if load > cap + EPS {
                push(
                    PrimalConstraint::LocalCap,
                    Location::StationSlot {
                        station: j + 1,
                        slot: t0 + 1,
                    },
                    load - cap,
                );
            }
        }
    }
    for (t0, &load) in schedule.slot_totals().iter().enumerate() {
        if load > instance.global_cap + EPS {
            push(
                PrimalConstraint::GlobalCap,
                Location::Slot { slot: t0 + 1 },
                load - instance.global_cap,
            );
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualViolation {
    pub request_id: usize,
    pub slot: usize,
    /// Left-hand side minus v_i/D_i (negative = uncovered).
    pub slack: f64,
}

/// Checks α_i + β(t) + γ(t) + π_i(t) − (k_i/D_i)·Σ_{t'≤d_i} π_i(t') ≥ v_i/D_i
/// for every request and every slot up to its deadline.
pub fn verify_dual_feasibility(instance: &Instance, cert: &DualCertificate) -> Vec<DualViolation> {
    let mut out = Vec::new();
    let at = |v: &[f64], t: usize| v.get(t - 1).copied().unwrap_or(0.0);
    for (pos, r) in instance.requests.iter().enumerate() {
        let alpha = cert.alpha.get(pos).copied().unwrap_or(0.0);
        let pi_sum: f64 = (1..=r.deadline).map(|t| cert.pi(r.id, t)).sum();
        let target = r.value / r.demand;
        for t in 1..=r.deadline {
            let lhs = alpha + at(&cert.beta, t) + at(&cert.gamma, t) + cert.pi(r.id, t)
                - r.max_rate / r.demand * pi_sum;
            if lhs < target - EPS {
                out.push(DualViolation {
                    request_id: r.id,
                    slot: t,
                    slack: lhs - target,
                });
            }
        }
    }
    out
}

/// Per-station comparison of the β cost against the recorded charges Φ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationCharge {
    pub station: usize,
    pub beta_cost: f64,
    pub charged: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub dual_objective: f64,
    pub alpha: f64,
    pub revenue: f64,
    pub scaled_revenue: f64,
    /// Λ ≤ α · revenue.
    pub bound_holds: bool,
    /// Present when charges were supplied.
    pub station_charges: Option<Vec<StationCharge>>,
    pub opt_revenue: Option<f64>,
    /// Λ ≥ OPT, present when OPT was supplied.
    pub weak_duality_holds: Option<bool>,
    pub ratio_to_opt: Option<f64>,
}

impl BoundReport {
    /// True when every check that could be evaluated passed, not counting
    /// the per-station charge comparison.
    pub fn passes(&self) -> bool {
        self.bound_holds && self.weak_duality_holds.unwrap_or(true)
    }

    pub fn charges_hold(&self) -> Option<bool> {
        self.station_charges
            .as_ref()
            .map(|rows| rows.iter().all(|row| row.holds))
    }
}

pub fn verify_bound(
    instance: &Instance,
    schedule: &Schedule,
    cert: &DualCertificate,
    charges: Option<&ChargeTable>,
    opt: Option<f64>,
) -> Result<BoundReport, MetricsError> {
    if instance.slackness <= 1.0 {
        return Err(MetricsError::BoundUndefined(format!(
            "slackness {} must exceed 1",
            instance.slackness
        )));
    }
    let alpha =
        approximation_bound(instance).map_err(|e| MetricsError::BoundUndefined(e.to_string()))?;
    let lambda = cert.objective(instance);
    let revenue = schedule.revenue(instance);
    let scaled_revenue = alpha * revenue;
    let tol = EPS * lambda.abs().max(scaled_revenue.abs()).max(1.0);

    let station_charges = charges.map(|table| {
        let beta_sum: f64 = cert.beta.iter().sum();
        (1..=instance.stations.len())
            .map(|station| {
                let beta_cost = instance.station_cap(station) * beta_sum;
                let charged: f64 = instance
                    .requests
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| r.station == station && schedule.is_selected(r.id))
                    .map(|(pos, r)| table.values[pos][..r.deadline].iter().sum::<f64>())
                    .sum();
                StationCharge {
                    station,
                    beta_cost,
                    charged,
                    holds: beta_cost <= charged + tol,
                }
            })
            .collect()
    });

    let weak_duality_holds = opt.map(|o| lambda + tol >= o);
    let ratio_to_opt = opt.map(|o| if o > 0.0 { revenue / o } else { 1.0 });

    Ok(BoundReport {
        dual_objective: lambda,
        alpha,
        revenue,
        scaled_revenue,
        bound_holds: lambda <= scaled_revenue + tol,
        station_charges,
        opt_revenue: opt,
        weak_duality_holds,
        ratio_to_opt,
    })
}

/// One flat CSV row of run results.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub instance_id: String,
    pub engine: String,
    pub report: MetricsReport,
    pub alpha_bound: Option<f64>,
    pub dual_objective: Option<f64>,
    pub opt_revenue: Option<f64>,
    pub ratio_to_opt: Option<f64>,
}

impl MetricsRow {
    /// Column names for an instance with `stations` stations.
    pub fn header(stations: usize) -> Vec<String> {
        let mut cols: Vec<String> = [
            "instance_id",
            "engine",
            "revenue",
            "normalized_revenue",
            "utilization",
            "acceptance_rate",
            "actual_peak",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        cols.extend((1..=stations).map(|j| format!("peak_station_{j}")));
        cols.extend(
            [
                "alpha_bound",
                "dual_objective",
                "opt_revenue",
                "ratio_to_opt",
            ]
            .iter()
            .map(|s| s.to_string()),
        );
        cols
    }

    pub fn fields(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let r = &self.report;
        let mut out = vec![
            self.instance_id.clone(),
            self.engine.clone(),
            r.revenue.to_string(),
            r.normalized_revenue.to_string(),
            r.utilization.to_string(),
            r.acceptance_rate.to_string(),
            r.actual_peak.to_string(),
        ];
        out.extend(r.per_station_peaks.iter().map(|p| p.to_string()));
        out.extend([
            opt(self.alpha_bound),
            opt(self.dual_objective),
            opt(self.opt_revenue),
            opt(self.ratio_to_opt),
        ]);
        out
    }

    /// Header plus this row as CSV text.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(Self::header(self.report.per_station_peaks.len()))
            .expect("in-memory write");
        w.write_record(self.fields()).expect("in-memory write");
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}
