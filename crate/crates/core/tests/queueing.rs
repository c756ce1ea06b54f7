use evplan_core::congestion::{waiting_time, DemandConfig};
use evplan_oracles::{evenly_spaced_hour, simulate_fcfs};
use proptest::prelude::*;

fn max_wait(arrivals: usize, ports: u32, service: f64) -> f64 {
    simulate_fcfs(&evenly_spaced_hour(arrivals), ports as usize, service)
        .into_iter()
        .fold(0.0, f64::max)
}

#[test]
fn no_queue_below_capacity() {
    let cfg = DemandConfig::default();
    for ports in 1..=4u32 {
        let capacity = (60.0 / cfg.service_min) as usize * ports as usize;
        for arrivals in 0..=capacity {
            assert_eq!(waiting_time(arrivals as f64, ports, &cfg), 0.0);
            assert_eq!(max_wait(arrivals, ports, cfg.service_min), 0.0);
        }
    }
}

proptest! {
    /// An hour of evenly spaced arrivals: the last customer waits about as long as
    /// the fluid model predicts, within one service time.
    #[test]
    fn fluid_wait_tracks_simulated_backlog(arrivals in 1usize..40, ports in 1u32..5) {
        let cfg = DemandConfig { wait_cap_min: f64::INFINITY, ..Default::default() };
        let fluid = waiting_time(arrivals as f64, ports, &cfg);
        let simulated = max_wait(arrivals, ports, cfg.service_min);
        prop_assert!((fluid - simulated).abs() <= cfg.service_min + 1e-9, "fluid {} sim {}", fluid, simulated);
        prop_assert_eq!(fluid == 0.0, simulated == 0.0);
    }

    #[test]
    fn both_models_order_stations_alike(a in 1usize..40, b in 1usize..40, ports in 1u32..4) {
        let cfg = DemandConfig { wait_cap_min: f64::INFINITY, ..Default::default() };
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(waiting_time(lo as f64, ports, &cfg) <= waiting_time(hi as f64, ports, &cfg));
        prop_assert!(max_wait(lo, ports, cfg.service_min) <= max_wait(hi, ports, cfg.service_min) + 1e-9);
        prop_assert!(max_wait(hi, ports + 1, cfg.service_min) <= max_wait(hi, ports, cfg.service_min) + 1e-9);
    }
}
