use proptest::prelude::*;

use vine_core::dynamics::{
    blocked_force_report, blocked_tendon_force, net_force, net_torque, simulate_blocked_force, BlockedForceConfig,
    ForceBreakdown, TipInertia,
};
use vine_core::Vec3;

fn vec3() -> impl Strategy<Value = Vec3> {
    (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn breakdown() -> impl Strategy<Value = ForceBreakdown> {
    (vec3(), vec3(), vec3(), vec3(), vec3()).prop_map(|(gravity, tendon, environment, propulsion, tau_e)| {
        ForceBreakdown {
            gravity,
            tendon,
            environment,
            propulsion,
            tau_e,
            ..Default::default()
        }
    })
}

fn add(a: &ForceBreakdown, b: &ForceBreakdown) -> ForceBreakdown {
    ForceBreakdown {
        gravity: a.gravity + b.gravity,
        tendon: a.tendon + b.tendon,
        environment: a.environment + b.environment,
        propulsion: a.propulsion + b.propulsion,
        tau_e: a.tau_e + b.tau_e,
        ..Default::default()
    }
}

proptest! {
    #[test]
    fn balance_is_linear_in_loads(a in breakdown(), b in breakdown()) {
        let inertia = TipInertia::default();
        let sum = add(&a, &b);
        prop_assert!((net_force(&sum) - net_force(&a) - net_force(&b)).norm() < 1e-9);
        let torque = net_torque(&sum, &inertia) - net_torque(&a, &inertia) - net_torque(&b, &inertia);
        prop_assert!(torque.norm() < 1e-9);
    }

    #[test]
    fn blocked_force_scales_with_torque(tau in 0.0..0.05f64, k in 0.1..10.0f64) {
        let r_m = 1.75e-3;
        let f = blocked_tendon_force(tau, r_m).unwrap();
        let fk = blocked_tendon_force(k * tau, r_m).unwrap();
        prop_assert!((fk - k * f).abs() < 1e-9);
        prop_assert!((f * r_m - tau).abs() < 1e-15);
    }
}

#[test]
fn zero_torque_gives_flat_trace() {
    let cfg = BlockedForceConfig {
        tau_m: 0.0,
        ..Default::default()
    };
    let trace = simulate_blocked_force(&cfg).unwrap();
    assert!(!trace.is_empty());
    assert!(trace.iter().all(|s| s.compensated.norm() == 0.0));
    let report = blocked_force_report(&trace, cfg.r_m);
    assert_eq!(report.peak_total, 0.0);
    assert_eq!(report.back_solved_tau, 0.0);
}
