//! Replicated scenario runs over a `(policy, d_s, d_h)` grid.
//!
//! Every run gets its seed from [`derive_seed`], so a cell's result depends
//! only on the spec and its coordinates, never on which worker ran it or in
//! what order.

use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{run_scenario, ModelError, NetworkConfig, RoutePolicy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweepError {
    #[error("invalid sweep: {0}")]
    InvalidSpec(String),
    #[error("cell policy={policy} d_s={d_s_km} km d_h={d_h_km} km: {source}")]
    Cell {
        policy: String,
        d_s_km: f64,
        d_h_km: f64,
        source: ModelError,
    },
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Default replication count per cell.
pub const DEFAULT_REPLICATIONS: u32 = 16;

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: NetworkConfig,
    pub d_s_km: Vec<f64>,
    pub d_h_km: Vec<f64>,
    pub replications: u32,
    pub master_seed: u64,
    pub policies: Vec<RoutePolicy>,
}

// Field widths used to pack a cell coordinate into one u64.
const DS_BITS: u32 = 16;
const DH_BITS: u32 = 16;
const POLICY_BITS: u32 = 8;
const REP_BITS: u32 = 24;

impl SweepSpec {
    pub fn validate(&self) -> Result<(), SweepError> {
        let bad = |msg: String| Err(SweepError::InvalidSpec(msg));
        if self.replications == 0 {
            return bad("replications must be >= 1".into());
        }
        if self.d_s_km.is_empty() || self.d_h_km.is_empty() || self.policies.is_empty() {
            return bad("d_s_km, d_h_km and policies must be non-empty".into());
        }
        for (axis, values) in [("d_s_km", &self.d_s_km), ("d_h_km", &self.d_h_km)] {
            if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return bad(format!("{axis} values must be >= 0, got {v}"));
            }
        }
        let fits = |len: usize, bits: u32| (len as u64) <= (1u64 << bits);
        if !fits(self.d_s_km.len(), DS_BITS)
            || !fits(self.d_h_km.len(), DH_BITS)
            || !fits(self.policies.len(), POLICY_BITS)
            || !fits(self.replications as usize, REP_BITS)
        {
            return bad("grid too large for seed derivation".into());
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.policies.len() * self.d_s_km.len() * self.d_h_km.len()
    }
}

/// Coordinates of one run inside a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RunIndex {
    pub d_s: usize,
    pub d_h: usize,
    pub policy: usize,
    pub replication: u32,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one run: `splitmix64(master ^ packed(index))`.
///
/// The index packs into disjoint bit fields (16 d_s, 16 d_h, 8 policy,
/// 24 replication), and both the xor with a fixed master and the SplitMix64
/// finalizer are bijections on u64, so distinct indices within a sweep never
/// share a seed.
pub fn derive_seed(master: u64, index: RunIndex) -> u64 {
    debug_assert!((index.d_s as u64) < (1 << DS_BITS));
    debug_assert!((index.d_h as u64) < (1 << DH_BITS));
    debug_assert!((index.policy as u64) < (1 << POLICY_BITS));
    debug_assert!(u64::from(index.replication) < (1 << REP_BITS));
    let packed = (index.d_s as u64)
        | (index.d_h as u64) << DS_BITS
        | (index.policy as u64) << (DS_BITS + DH_BITS)
        | u64::from(index.replication) << (DS_BITS + DH_BITS + POLICY_BITS);
    splitmix64(master ^ packed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single replication.
    pub std: f64,
}

impl Stat {
    fn of(values: &[f64]) -> Stat {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Stat { mean, std }
    }

    pub fn std_error(&self, n: u32) -> f64 {
        self.std / f64::from(n).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub policy: RoutePolicy,
    pub d_s_km: f64,
    pub d_h_km: f64,
    pub replications: u32,
    pub transit_hours: Stat,
    pub queue_len: Stat,
    pub utilization: Stat,
    pub success_rate: Stat,
}

impl CellResult {
    /// True when spread could not be estimated.
    pub fn single_replication(&self) -> bool {
        self.replications == 1
    }
}

struct Cell {
    policy: usize,
    d_s: usize,
    d_h: usize,
}

fn run_cell(spec: &SweepSpec, cell: &Cell) -> Result<CellResult, SweepError> {
    let policy = spec.policies[cell.policy];
    let d_s_km = spec.d_s_km[cell.d_s];
    let d_h_km = spec.d_h_km[cell.d_h];
    let mut transit = Vec::with_capacity(spec.replications as usize);
    let mut queue = Vec::with_capacity(spec.replications as usize);
    let mut util = Vec::with_capacity(spec.replications as usize);
    let mut success = Vec::with_capacity(spec.replications as usize);
    for replication in 0..spec.replications {
        let seed = derive_seed(
            spec.master_seed,
            RunIndex {
                d_s: cell.d_s,
                d_h: cell.d_h,
                policy: cell.policy,
                replication,
            },
        );
        let config = NetworkConfig {
            d_s_km,
            d_h_km,
            seed,
            policy,
            ..spec.base.clone()
        };
        let out = run_scenario(&config).map_err(|source| SweepError::Cell {
            policy: policy.to_string(),
            d_s_km,
            d_h_km,
            source,
        })?;
        transit.push(out.metrics.avg_transit_hours);
        queue.push(out.metrics.time_avg_queue_len);
        util.push(out.metrics.hub_utilization);
        success.push(out.metrics.success_rate);
    }
    Ok(CellResult {
        policy,
        d_s_km,
        d_h_km,
        replications: spec.replications,
        transit_hours: Stat::of(&transit),
        queue_len: Stat::of(&queue),
        utilization: Stat::of(&util),
        success_rate: Stat::of(&success),
    })
}

fn cells(spec: &SweepSpec) -> Vec<Cell> {
    let mut out = Vec::with_capacity(spec.cell_count());
    for policy in 0..spec.policies.len() {
        for d_s in 0..spec.d_s_km.len() {
            for d_h in 0..spec.d_h_km.len() {
                out.push(Cell { policy, d_s, d_h });
            }
        }
    }
    out
}

/// Runs the sweep on the current thread. Results are ordered by
/// `(policy, d_s, d_h)` index.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<CellResult>, SweepError> {
    spec.validate()?;
    cells(spec).iter().map(|c| run_cell(spec, c)).collect()
}

/// Runs the sweep on a pool of `workers` threads. Output is identical to
/// [`run_sweep`].
pub fn run_sweep_parallel(spec: &SweepSpec, workers: usize) -> Result<Vec<CellResult>, SweepError> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| SweepError::Pool(e.to_string()))?;
    let cells = cells(spec);
    pool.install(|| cells.par_iter().map(|c| run_cell(spec, c)).collect())
}

pub const SWEEP_CSV_HEADER: &str = "policy,d_s_km,d_h_km,reps,transit_mean_h,transit_std_h,queue_mean,queue_std,util_mean,util_std,success_mean,success_std";

pub fn write_sweep_csv<W: Write>(out: W, results: &[CellResult]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_CSV_HEADER.split(','))?;
    for r in results {
        w.write_record([
            r.policy.to_string(),
            r.d_s_km.to_string(),
            r.d_h_km.to_string(),
            r.replications.to_string(),
            r.transit_hours.mean.to_string(),
            r.transit_hours.std.to_string(),
            r.queue_len.mean.to_string(),
            r.queue_len.std.to_string(),
            r.utilization.mean.to_string(),
            r.utilization.std.to_string(),
            r.success_rate.mean.to_string(),
            r.success_rate.std.to_string(),
        ])?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::model::run_scenario;
    use crate::KM_PER_MILE;

    fn spec() -> SweepSpec {
        SweepSpec {
            base: NetworkConfig {
                sim_time_hours: 100.0,
                ..NetworkConfig::default()
            },
            d_s_km: vec![5.0 * KM_PER_MILE],
            d_h_km: vec![50.0 * KM_PER_MILE],
            replications: 1,
            master_seed: 9,
            policies: vec![RoutePolicy::ViaHub],
        }
    }

    #[test]
    fn derive_seed_is_deterministic() {
        let idx = RunIndex {
            d_s: 3,
            d_h: 1,
            policy: 1,
            replication: 2,
        };
        assert_eq!(derive_seed(77, idx), derive_seed(77, idx));
    }

    #[test]
    fn derive_seed_is_collision_free_over_a_sweep() {
        let mut seen = HashSet::new();
        let mut all = Vec::new();
        for d_s in 0..4 {
            for d_h in 0..4 {
                for policy in 0..2 {
                    for replication in 0..3 {
                        let idx = RunIndex {
                            d_s,
                            d_h,
                            policy,
                            replication,
                        };
                        assert!(seen.insert(derive_seed(1234, idx)));
                        all.push(idx);
                    }
                }
            }
        }
        assert_eq!(seen.len(), 96);
        for idx in all {
            assert_ne!(derive_seed(1234, idx), derive_seed(1235, idx));
        }
    }

    #[test]
    fn degenerate_sweep_equals_single_run() {
        let s = spec();
        let results = run_sweep(&s).unwrap();
        assert_eq!(results.len(), 1);
        let r = &results[0];
        assert!(r.single_replication());
        assert_eq!(r.transit_hours.std, 0.0);
        let seed = derive_seed(
            s.master_seed,
            RunIndex {
                d_s: 0,
                d_h: 0,
                policy: 0,
                replication: 0,
            },
        );
        let single = run_scenario(&NetworkConfig { seed, ..s.base.clone() }).unwrap();
        assert_eq!(r.transit_hours.mean, single.metrics.avg_transit_hours);
        assert_eq!(r.queue_len.mean, single.metrics.time_avg_queue_len);
        assert_eq!(r.utilization.mean, single.metrics.hub_utilization);
        assert_eq!(r.success_rate.mean, single.metrics.success_rate);
    }

    #[test]
    fn via_hub_gap_exceeds_pure_travel_gap() {
        let s = SweepSpec {
            replications: 4,
            policies: vec![RoutePolicy::ViaHub, RoutePolicy::Direct],
            ..spec()
        };
        let results = run_sweep(&s).unwrap();
        let gap_floor = 100.0 * KM_PER_MILE / s.base.speed_kmh;
        assert!(results[0].transit_hours.mean - results[1].transit_hours.mean >= gap_floor);
    }

    #[test]
    fn replicated_means_agree_with_single_run() {
        let one = run_sweep(&spec()).unwrap().remove(0);
        let many = run_sweep(&SweepSpec {
            replications: 32,
            ..spec()
        })
        .unwrap()
        .remove(0);
        let se = many.transit_hours.std_error(32);
        assert!((one.transit_hours.mean - many.transit_hours.mean).abs() <= 3.0 * many.transit_hours.std);
        assert!(se > 0.0);
    }

    #[test]
    fn parallel_equals_serial() {
        let s = SweepSpec {
            d_s_km: vec![2.0, 8.0],
            d_h_km: vec![10.0, 40.0, 80.0],
            replications: 3,
            policies: vec![RoutePolicy::ViaHub, RoutePolicy::Direct],
            ..spec()
        };
        let serial = run_sweep(&s).unwrap();
        assert_eq!(serial.len(), 12);
        assert_eq!(serial, run_sweep_parallel(&s, 1).unwrap());
        assert_eq!(serial, run_sweep_parallel(&s, 8).unwrap());
        let csv = |r: &[CellResult]| {
            let mut buf = Vec::new();
            write_sweep_csv(&mut buf, r).unwrap();
            buf
        };
        assert_eq!(csv(&serial), csv(&run_sweep_parallel(&s, 4).unwrap()));
    }

    #[test]
    fn queue_grows_with_load() {
        let mu = 10.0;
        let mut last: Option<Stat> = None;
        for frac in [0.1, 0.25, 0.4, 0.45] {
            let s = SweepSpec {
                base: NetworkConfig {
                    lambda_per_hour: frac * mu,
                    mu_per_hour: mu,
                    sim_time_hours: 500.0,
                    ..NetworkConfig::default()
                },
                replications: 8,
                ..spec()
            };
            let q = run_sweep(&s).unwrap()[0].queue_len;
            if let Some(prev) = last {
                assert!(q.mean + q.std_error(8) >= prev.mean, "{prev:?} -> {q:?}");
            }
            last = Some(q);
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(run_sweep(&SweepSpec {
            replications: 0,
            ..spec()
        })
        .is_err());
        assert!(run_sweep(&SweepSpec {
            d_s_km: vec![-1.0],
            ..spec()
        })
        .is_err());
        let err = run_sweep(&SweepSpec {
            base: NetworkConfig {
                speed_kmh: -3.0,
                ..spec().base
            },
            ..spec()
        })
        .unwrap_err();
        assert!(err.to_string().contains("d_s=8.04672"), "{err}");
    }
}
