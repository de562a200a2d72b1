//! Two spokes, one hub.
//!
//! Each spoke emits mail for the other spoke as a Poisson process with rate
//! `lambda_per_hour`. Mail routed via the hub joins a single FIFO queue served
//! by one server with exponential service times (rate `mu_per_hour`), so the
//! hub is an M/M/1 station with arrival rate `2 * lambda` and is stable only
//! while `2 * lambda < mu`. After service (or immediately, for direct routing)
//! the item travels `route_distance / speed` hours and is delivered. Delivery
//! capacity is unlimited.

use std::collections::VecDeque;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EngineError, EventQueue, RngStream, SimTime};
use crate::KM_PER_MILE;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid config: {field} {reason}")]
    ConfigInvalid { field: &'static str, reason: String },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Spoke {
    Alpha,
    Beta,
}

impl Spoke {
    pub fn opposite(self) -> Spoke {
        match self {
            Spoke::Alpha => Spoke::Beta,
            Spoke::Beta => Spoke::Alpha,
        }
    }

    fn stream_id(self) -> u64 {
        match self {
            Spoke::Alpha => 0,
            Spoke::Beta => 1,
        }
    }
}

impl fmt::Display for Spoke {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Spoke::Alpha => "Alpha",
            Spoke::Beta => "Beta",
        })
    }
}

const SERVICE_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RoutePolicy {
    ViaHub,
    Direct,
    /// Direct when `d_s <= cutoff_km`, otherwise via the hub.
    Threshold {
        cutoff_km: f64,
    },
}

impl RoutePolicy {
    pub fn uses_hub(&self, d_s_km: f64) -> bool {
        match *self {
            RoutePolicy::ViaHub => true,
            RoutePolicy::Direct => false,
            RoutePolicy::Threshold { cutoff_km } => d_s_km > cutoff_km,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RoutePolicy::ViaHub => "via_hub",
            RoutePolicy::Direct => "direct",
            RoutePolicy::Threshold { .. } => "threshold",
        }
    }

    /// Parses `via_hub`, `direct`, or `threshold` (the latter needs a cutoff).
    pub fn parse(name: &str, cutoff_km: Option<f64>) -> Result<Self, ModelError> {
        match name {
            "via_hub" => Ok(RoutePolicy::ViaHub),
            "direct" => Ok(RoutePolicy::Direct),
            "threshold" => match cutoff_km {
                Some(cutoff_km) => Ok(RoutePolicy::Threshold { cutoff_km }),
                None => Err(invalid("threshold_km", "is required for the threshold policy")),
            },
            other => Err(invalid(
                "policy",
                format!("must be via_hub, direct or threshold, got {other:?}"),
            )),
        }
    }
}

impl fmt::Display for RoutePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Kilometres travelled by one item under `policy`.
pub fn route_distance(policy: &RoutePolicy, d_s_km: f64, d_h_km: f64) -> f64 {
    if policy.uses_hub(d_s_km) {
        2.0 * d_h_km + d_s_km
    } else {
        d_s_km
    }
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ModelError {
    ModelError::ConfigInvalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub d_s_km: f64,
    pub d_h_km: f64,
    pub speed_kmh: f64,
    /// Per spoke.
    pub lambda_per_hour: f64,
    pub mu_per_hour: f64,
    pub sim_time_hours: f64,
    pub seed: u64,
    pub policy: RoutePolicy,
}

/// 30 mph.
pub const DEFAULT_SPEED_KMH: f64 = 30.0 * KM_PER_MILE;

impl Default for NetworkConfig {
    /// The 5 mi spoke / 50 mi hub geometry.
    fn default() -> Self {
        NetworkConfig {
            d_s_km: 5.0 * KM_PER_MILE,
            d_h_km: 50.0 * KM_PER_MILE,
            speed_kmh: DEFAULT_SPEED_KMH,
            lambda_per_hour: 4.0,
            mu_per_hour: 10.0,
            sim_time_hours: 1000.0,
            seed: 1,
            policy: RoutePolicy::ViaHub,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        fn non_negative(field: &'static str, v: f64) -> Result<(), ModelError> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(invalid(field, format!("must be a finite value >= 0, got {v}")))
            }
        }
        fn positive(field: &'static str, v: f64) -> Result<(), ModelError> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(field, format!("must be a finite value > 0, got {v}")))
            }
        }
        non_negative("d_s_km", self.d_s_km)?;
        non_negative("d_h_km", self.d_h_km)?;
        positive("speed_kmh", self.speed_kmh)?;
        non_negative("lambda_per_hour", self.lambda_per_hour)?;
        positive("mu_per_hour", self.mu_per_hour)?;
        positive("sim_time_hours", self.sim_time_hours)?;
        if let RoutePolicy::Threshold { cutoff_km } = self.policy {
            positive("threshold_km", cutoff_km)?;
        }
        Ok(())
    }

    pub fn route_km(&self) -> f64 {
        route_distance(&self.policy, self.d_s_km, self.d_h_km)
    }

    pub fn travel_hours(&self) -> f64 {
        self.route_km() / self.speed_kmh
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MailItem {
    pub id: u64,
    pub origin: Option<Spoke>,
    pub destination: Option<Spoke>,
    pub created_at: Option<SimTime>,
    pub queued_at: Option<SimTime>,
    pub service_start_at: Option<SimTime>,
    pub service_end_at: Option<SimTime>,
    pub delivered_at: Option<SimTime>,
}

impl MailItem {
    fn new(id: u64, origin: Spoke, created_at: SimTime) -> Self {
        MailItem {
            id,
            origin: Some(origin),
            destination: Some(origin.opposite()),
            created_at: Some(created_at),
            ..Default::default()
        }
    }

    pub fn transit_hours(&self) -> Option<f64> {
        Some(self.delivered_at?.hours() - self.created_at?.hours())
    }

    pub fn queue_wait_hours(&self) -> Option<f64> {
        Some(self.service_start_at?.hours() - self.queued_at?.hours())
    }

    /// Populated timestamps in lifecycle order.
    pub fn timestamps(&self) -> Vec<SimTime> {
        [
            self.created_at,
            self.queued_at,
            self.service_start_at,
            self.service_end_at,
            self.delivered_at,
        ]
        .into_iter()
        .flatten()
        .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub generated: u64,
    pub delivered: u64,
    /// Mean over delivered items; 0 when nothing was delivered.
    pub avg_transit_hours: f64,
    pub max_queue_len: usize,
    /// Time-average number waiting for service (excludes the item in service).
    pub time_avg_queue_len: f64,
    pub hub_utilization: f64,
    /// delivered / generated, 1.0 when nothing was generated.
    pub success_rate: f64,
    /// Items whose hub service started before the horizon.
    pub served: u64,
    /// Mean queue wait over `served` items; 0 when none.
    pub avg_queue_wait_hours: f64,
}

/// Model-level event tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelEvent {
    ArrivalAtSpoke(Spoke),
    HubServiceComplete(u64),
    DeliveryComplete(u64),
}

impl fmt::Display for ModelEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelEvent::ArrivalAtSpoke(s) => write!(f, "ArrivalAtSpoke({s})"),
            ModelEvent::HubServiceComplete(id) => write!(f, "HubServiceComplete({id})"),
            ModelEvent::DeliveryComplete(id) => write!(f, "DeliveryComplete({id})"),
        }
    }
}

/// Where every generated item currently is. Reported after each event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Occupancy {
    pub generated: u64,
    pub waiting: u64,
    pub in_service: u64,
    pub in_transit: u64,
    pub delivered: u64,
}

impl Occupancy {
    pub fn is_conserved(&self) -> bool {
        self.generated == self.waiting + self.in_service + self.in_transit + self.delivered
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub metrics: RunMetrics,
    pub items: Vec<MailItem>,
    /// Event trace lines, present when requested.
    pub trace: Option<Vec<String>>,
    /// Order in which items entered hub service.
    pub service_order: Vec<u64>,
    /// Order in which items joined the hub queue.
    pub arrival_order: Vec<u64>,
}

struct Hub {
    queue: VecDeque<u64>,
    in_service: Option<u64>,
    busy_since: f64,
    busy_hours: f64,
    queue_area: f64,
    last_change: f64,
    max_queue_len: usize,
}

impl Hub {
    fn new() -> Self {
        Hub {
            queue: VecDeque::new(),
            in_service: None,
            busy_since: 0.0,
            busy_hours: 0.0,
            queue_area: 0.0,
            last_change: 0.0,
            max_queue_len: 0,
        }
    }

    fn accumulate(&mut self, now: f64) {
        self.queue_area += self.queue.len() as f64 * (now - self.last_change);
        self.last_change = now;
    }
}

struct State<'a> {
    config: &'a NetworkConfig,
    arrivals: [RngStream; 2],
    service: RngStream,
    items: Vec<MailItem>,
    hub: Hub,
    in_transit: u64,
    delivered: u64,
    service_order: Vec<u64>,
    arrival_order: Vec<u64>,
}

impl State<'_> {
    fn occupancy(&self) -> Occupancy {
        Occupancy {
            generated: self.items.len() as u64,
            waiting: self.hub.queue.len() as u64,
            in_service: u64::from(self.hub.in_service.is_some()),
            in_transit: self.in_transit,
            delivered: self.delivered,
        }
    }

    fn start_service(&mut self, q: &mut EventQueue<ModelEvent>) -> Result<(), EngineError> {
        if self.hub.in_service.is_some() {
            return Ok(());
        }
        let now = q.now();
        self.hub.accumulate(now.hours());
        let Some(id) = self.hub.queue.pop_front() else {
            return Ok(());
        };
        self.hub.in_service = Some(id);
        self.hub.busy_since = now.hours();
        self.items[id as usize].service_start_at = Some(now);
        self.service_order.push(id);
        let hold = self.service.sample_exponential(self.config.mu_per_hour)?;
        q.schedule_in(hold, ModelEvent::HubServiceComplete(id))?;
        Ok(())
    }

    fn dispatch(&mut self, q: &mut EventQueue<ModelEvent>, event: ModelEvent) -> Result<(), EngineError> {
        let now = q.now();
        match event {
            ModelEvent::ArrivalAtSpoke(spoke) => {
                let id = self.items.len() as u64;
                let mut item = MailItem::new(id, spoke, now);
                if self.config.policy.uses_hub(self.config.d_s_km) {
                    item.queued_at = Some(now);
                    self.items.push(item);
                    self.hub.accumulate(now.hours());
                    self.hub.queue.push_back(id);
                    self.hub.max_queue_len = self.hub.max_queue_len.max(self.hub.queue.len());
                    self.arrival_order.push(id);
                    self.start_service(q)?;
                } else {
                    self.items.push(item);
                    self.in_transit += 1;
                    q.schedule_in(self.config.travel_hours(), ModelEvent::DeliveryComplete(id))?;
                }
                self.schedule_arrival(q, spoke)?;
            }
            ModelEvent::HubServiceComplete(id) => {
                self.items[id as usize].service_end_at = Some(now);
                self.hub.busy_hours += now.hours() - self.hub.busy_since;
                self.hub.in_service = None;
                self.in_transit += 1;
                q.schedule_in(self.config.travel_hours(), ModelEvent::DeliveryComplete(id))?;
                self.start_service(q)?;
            }
            ModelEvent::DeliveryComplete(id) => {
                self.items[id as usize].delivered_at = Some(now);
                self.in_transit -= 1;
                self.delivered += 1;
            }
        }
        Ok(())
    }

    fn schedule_arrival(&mut self, q: &mut EventQueue<ModelEvent>, spoke: Spoke) -> Result<(), EngineError> {
        if self.config.lambda_per_hour <= 0.0 {
            return Ok(());
        }
        let gap = self.arrivals[spoke.stream_id() as usize].sample_exponential(self.config.lambda_per_hour)?;
        let at = q.now().after(gap)?;
        if at.hours() <= self.config.sim_time_hours {
            q.schedule(at, ModelEvent::ArrivalAtSpoke(spoke))?;
        }
        Ok(())
    }
}

/// Runs one scenario to its horizon.
pub fn run_scenario(config: &NetworkConfig) -> Result<ScenarioOutput, ModelError> {
    run_scenario_with(config, false, |_| {})
}

/// Like [`run_scenario`], also recording the event trace.
pub fn run_scenario_traced(config: &NetworkConfig) -> Result<ScenarioOutput, ModelError> {
    run_scenario_with(config, true, |_| {})
}

/// Runs a scenario, calling `observe` after every dispatched event.
pub fn run_scenario_with<F>(config: &NetworkConfig, trace: bool, mut observe: F) -> Result<ScenarioOutput, ModelError>
where
    F: FnMut(&Occupancy),
{
    config.validate()?;
    let mut queue = EventQueue::new();
    if trace {
        queue = queue.with_trace();
    }
    let mut state = State {
        config,
        arrivals: [
            RngStream::new(config.seed, Spoke::Alpha.stream_id()),
            RngStream::new(config.seed, Spoke::Beta.stream_id()),
        ],
        service: RngStream::new(config.seed, SERVICE_STREAM),
        items: Vec::new(),
        hub: Hub::new(),
        in_transit: 0,
        delivered: 0,
        service_order: Vec::new(),
        arrival_order: Vec::new(),
    };
    state.schedule_arrival(&mut queue, Spoke::Alpha)?;
    state.schedule_arrival(&mut queue, Spoke::Beta)?;

    let horizon = SimTime::new(config.sim_time_hours)?;
    queue.run_until(horizon, |q, event| {
        state.dispatch(q, event.payload)?;
        observe(&state.occupancy());
        Ok(())
    })?;

    let end = config.sim_time_hours;
    state.hub.accumulate(end);
    if state.hub.in_service.is_some() {
        state.hub.busy_hours += end - state.hub.busy_since;
    }

    let metrics = summarize(&state, end);
    Ok(ScenarioOutput {
        metrics,
        items: state.items,
        trace: queue.take_trace(),
        service_order: state.service_order,
        arrival_order: state.arrival_order,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> (u64, f64) {
    let (n, sum) = values.fold((0u64, 0.0), |(n, s), v| (n + 1, s + v));
    (n, if n == 0 { 0.0 } else { sum / n as f64 })
}

fn summarize(state: &State<'_>, end: f64) -> RunMetrics {
    let generated = state.items.len() as u64;
    let (delivered, avg_transit_hours) = mean(state.items.iter().filter_map(MailItem::transit_hours));
    let (served, avg_queue_wait_hours) = mean(state.items.iter().filter_map(MailItem::queue_wait_hours));
    RunMetrics {
        generated,
        delivered,
        avg_transit_hours,
        max_queue_len: state.hub.max_queue_len,
        time_avg_queue_len: state.hub.queue_area / end,
        hub_utilization: (state.hub.busy_hours / end).clamp(0.0, 1.0),
        success_rate: if generated == 0 {
            1.0
        } else {
            delivered as f64 / generated as f64
        },
        served,
        avg_queue_wait_hours,
    }
}

pub const MAIL_CSV_HEADER: &str =
    "id,origin,destination,created_at,queued_at,service_start_at,service_end_at,delivered_at";

/// Writes the mail lifecycle CSV; absent timestamps are empty fields.
pub fn write_mail_csv<W: Write>(out: W, items: &[MailItem]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MAIL_CSV_HEADER.split(','))?;
    let opt = |t: Option<SimTime>| t.map(|t| t.to_string()).unwrap_or_default();
    let spoke = |s: Option<Spoke>| s.map(|s| s.to_string()).unwrap_or_default();
    for item in items {
        w.write_record([
            item.id.to_string(),
            spoke(item.origin),
            spoke(item.destination),
            opt(item.created_at),
            opt(item.queued_at),
            opt(item.service_start_at),
            opt(item.service_end_at),
            opt(item.delivered_at),
        ])?;
    }
    w.flush()
}
