use approx::assert_relative_eq;
use hubspoke_core::model::{run_scenario, run_scenario_traced, write_mail_csv, NetworkConfig, RoutePolicy};
use hubspoke_core::sweep::{run_sweep, run_sweep_parallel, write_sweep_csv, SweepSpec};

fn mail_csv(config: &NetworkConfig) -> Vec<u8> {
    let out = run_scenario(config).unwrap();
    let mut buf = Vec::new();
    write_mail_csv(&mut buf, &out.items).unwrap();
    buf
}

fn small_spec() -> SweepSpec {
    SweepSpec {
        base: NetworkConfig {
            sim_time_hours: 150.0,
            ..NetworkConfig::default()
        },
        d_s_km: vec![2.0, 8.0, 20.0],
        d_h_km: vec![10.0, 80.0],
        replications: 3,
        master_seed: 77,
        policies: vec![
            RoutePolicy::ViaHub,
            RoutePolicy::Direct,
            RoutePolicy::Threshold { cutoff_km: 10.0 },
        ],
    }
}

#[test]
fn same_seed_same_bytes() {
    let config = NetworkConfig {
        sim_time_hours: 300.0,
        seed: 42,
        ..NetworkConfig::default()
    };
    assert_eq!(mail_csv(&config), mail_csv(&config));
    assert_eq!(
        run_scenario_traced(&config).unwrap().trace,
        run_scenario_traced(&config).unwrap().trace
    );
    let other = NetworkConfig { seed: 43, ..config };
    assert_ne!(mail_csv(&config), mail_csv(&other));
}

#[test]
fn sweep_bytes_do_not_depend_on_workers() {
    let spec = small_spec();
    let render = |cells: &[hubspoke_core::sweep::CellResult]| {
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, cells).unwrap();
        buf
    };
    let serial = render(&run_sweep(&spec).unwrap());
    for workers in [1, 2, 8] {
        assert_eq!(render(&run_sweep_parallel(&spec, workers).unwrap()), serial);
    }
}

#[test]
fn direct_route_skips_the_hub() {
    let config = NetworkConfig {
        policy: RoutePolicy::Direct,
        sim_time_hours: 200.0,
        ..NetworkConfig::default()
    };
    let out = run_scenario(&config).unwrap();
    assert_eq!(out.metrics.hub_utilization, 0.0);
    assert_eq!(out.metrics.max_queue_len, 0);
    let expected = config.d_s_km / config.speed_kmh;
    assert_relative_eq!(out.metrics.avg_transit_hours, expected, max_relative = 1e-12);
}
