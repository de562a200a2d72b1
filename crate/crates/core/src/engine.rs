//! Deterministic discrete-event kernel.
//!
//! Events are ordered by `(at, seq)`: earliest time first, and among events
//! scheduled for the same instant, the one scheduled first runs first. The
//! clock is measured in hours.
//!
//! Randomness comes from [`RngStream`], a ChaCha8 generator keyed by a 64-bit
//! seed and a stream id. ChaCha8 output is specified bit-for-bit, so the same
//! `(seed, stream)` pair yields the same samples on every platform, and giving
//! each simulated process its own stream id keeps the processes' draws
//! independent of each other.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt;

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("cannot schedule an event at t={at} before the current clock t={now}")]
    SchedulingInPast { at: f64, now: f64 },
    #[error("rate must be positive, got {0}")]
    NonPositiveRate(f64),
    #[error("invalid simulation time {0}")]
    InvalidTime(f64),
}

/// A point on the simulation clock, in hours. Always finite and non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    pub fn new(hours: f64) -> Result<Self, EngineError> {
        if hours.is_finite() && hours >= 0.0 {
            Ok(SimTime(hours))
        } else {
            Err(EngineError::InvalidTime(hours))
        }
    }

    pub fn hours(self) -> f64 {
        self.0
    }

    /// Advances by a non-negative, finite delta.
    pub fn after(self, delta_hours: f64) -> Result<Self, EngineError> {
        SimTime::new(self.0 + delta_hours)
    }
}

impl Eq for SimTime {}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl PartialOrd for SimTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event<P> {
    pub at: SimTime,
    pub seq: u64,
    pub payload: P,
}

struct Entry<P>(Event<P>);

impl<P> Entry<P> {
    fn key(&self) -> (SimTime, u64) {
        (self.0.at, self.0.seq)
    }
}

impl<P> PartialEq for Entry<P> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl<P> Eq for Entry<P> {}

impl<P> PartialOrd for Entry<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Entry<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

/// Pending events plus the simulation clock.
pub struct EventQueue<P> {
    heap: BinaryHeap<Reverse<Entry<P>>>,
    now: SimTime,
    next_seq: u64,
    trace: Option<Vec<String>>,
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> EventQueue<P> {
    pub fn new() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            now: SimTime::ZERO,
            next_seq: 0,
            trace: None,
        }
    }

    /// Records one `time\tseq\tpayload` line per dispatched event.
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|Reverse(e)| e.0.at)
    }

    pub fn schedule(&mut self, at: SimTime, payload: P) -> Result<Event<P>, EngineError>
    where
        P: Clone,
    {
        if at < self.now {
            return Err(EngineError::SchedulingInPast {
                at: at.hours(),
                now: self.now.hours(),
            });
        }
        let event = Event {
            at,
            seq: self.next_seq,
            payload,
        };
        self.next_seq += 1;
        self.heap.push(Reverse(Entry(event.clone())));
        Ok(event)
    }

    /// Schedules `delay_hours` after the current clock.
    pub fn schedule_in(&mut self, delay_hours: f64, payload: P) -> Result<Event<P>, EngineError>
    where
        P: Clone,
    {
        let at = self.now.after(delay_hours)?;
        self.schedule(at, payload)
    }

    /// Removes the next event and advances the clock to its time.
    pub fn pop(&mut self) -> Option<Event<P>> {
        let Reverse(Entry(event)) = self.heap.pop()?;
        self.now = event.at;
        Some(event)
    }

    /// Takes the recorded trace, leaving tracing enabled with an empty buffer.
    pub fn take_trace(&mut self) -> Option<Vec<String>> {
        self.trace.as_mut().map(std::mem::take)
    }
}

impl<P: fmt::Display> EventQueue<P> {
    /// Dispatches every event with `at <= horizon` in `(at, seq)` order,
    /// including events the handler schedules along the way. The clock ends at
    /// `horizon`; events past it stay queued. Returns the number dispatched.
    pub fn run_until<F>(&mut self, horizon: SimTime, mut handler: F) -> Result<u64, EngineError>
    where
        F: FnMut(&mut EventQueue<P>, Event<P>) -> Result<(), EngineError>,
    {
        if horizon < self.now {
            return Err(EngineError::SchedulingInPast {
                at: horizon.hours(),
                now: self.now.hours(),
            });
        }
        let mut steps = 0;
        while self.peek_time().is_some_and(|t| t <= horizon) {
            let event = self.pop().expect("peeked event exists");
            if let Some(trace) = self.trace.as_mut() {
                trace.push(format!("{}\t{}\t{}", event.at, event.seq, event.payload));
            }
            handler(self, event)?;
            steps += 1;
        }
        self.now = horizon;
        Ok(steps)
    }
}

/// Seeded ChaCha8 stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub const ALGORITHM: &'static str = "ChaCha8 (rand_chacha), seed_from_u64 + set_stream";

    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform sample on the open interval (0, 1).
    pub fn uniform_open(&mut self) -> f64 {
        self.rng.sample(Open01)
    }

    /// Exponential delta with the given rate (per hour). Always > 0.
    pub fn sample_exponential(&mut self, rate: f64) -> Result<f64, EngineError> {
        check_rate(rate)?;
        let u = self.uniform_open();
        exponential_from_uniform(u, rate)
    }
}

fn check_rate(rate: f64) -> Result<(), EngineError> {
    if rate > 0.0 && rate.is_finite() {
        Ok(())
    } else {
        Err(EngineError::NonPositiveRate(rate))
    }
}

/// Inverse-CDF transform `-ln(u)/rate` for `u` in (0, 1].
pub fn exponential_from_uniform(u: f64, rate: f64) -> Result<f64, EngineError> {
    check_rate(rate)?;
    Ok(-u.ln() / rate)
}
