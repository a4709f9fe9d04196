use proptest::prelude::*;

use symbiot_core::canonical;
use symbiot_core::fmcw::{classify, peak_bin, simulate_scan, Classification, Defect, MaterialProfile, ScanOptions, SweepConfig};
use symbiot_core::sim::grid::path_cost;
use symbiot_core::sim::{plan_path, Cell, DriveCommand, GridMap, PlatformSim, SimConfig};
use symbiot_core::twin::parse_command;

fn material() -> impl Strategy<Value = MaterialProfile> {
    prop_oneof![
        Just(MaterialProfile::aluminum()),
        Just(MaterialProfile::clean_steel()),
        Just(MaterialProfile::corroded_steel()),
        Just(MaterialProfile::concrete()),
    ]
}

fn defect() -> impl Strategy<Value = Defect> {
    prop_oneof![
        Just(Defect::None),
        Just(Defect::Corrosion),
        Just(Defect::Delamination),
        (1.0..28.0f64, -0.8..2.0f64).prop_map(|(onset_s, delta)| Defect::WaterIngress { onset_s, delta }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn peak_bin_is_nearest_range_bin(d in 2.0..60.0f64, m in material(), seed in any::<u64>()) {
        let sweep = SweepConfig::default();
        let trace = simulate_scan(&m, d, &sweep, ScanOptions { seed, noise_sigma: 0.0, start_s: 0.0 }).unwrap();
        let expected = (d / sweep.bin_width_cm).round() as usize;
        prop_assert_eq!(peak_bin(&trace).unwrap().0, expected);
        prop_assert_eq!(trace.chirps.len(), sweep.chirps());
    }

    #[test]
    fn trace_against_itself_is_healthy(m in material(), def in defect(), seed in any::<u64>()) {
        let sweep = SweepConfig::default();
        let trace = simulate_scan(&m.with_defect(def), 10.0, &sweep, ScanOptions { seed, noise_sigma: 1.0, start_s: 0.0 }).unwrap();
        let r = classify(&trace, &trace).unwrap();
        prop_assert_eq!(r.class, Classification::Healthy);
        prop_assert!((r.contrast - 1.0).abs() < 1e-12);
    }

    #[test]
    fn classification_is_scale_invariant(m in material(), def in defect(), k in 0.01..100.0f64, seed in any::<u64>()) {
        let sweep = SweepConfig::default();
        let opts = ScanOptions { seed, noise_sigma: 1.0, start_s: 0.0 };
        let trace = simulate_scan(&m.clone().with_defect(def), 10.0, &sweep, opts).unwrap();
        let base = simulate_scan(&m, 10.0, &sweep, ScanOptions { seed: seed ^ 1, ..opts }).unwrap();
        let scale = |t: &symbiot_core::fmcw::ScanTrace| {
            let mut t = t.clone();
            for c in &mut t.chirps { for v in c.iter_mut() { *v *= k; } }
            t
        };
        let a = classify(&trace, &base).unwrap();
        let b = classify(&scale(&trace), &scale(&base)).unwrap();
        prop_assert_eq!(a.class, b.class);
        prop_assert!((a.contrast - b.contrast).abs() <= 1e-9 * a.contrast.abs().max(1.0));
    }

    #[test]
    fn soc_never_increases_and_temps_stay_bounded(cmds in prop::collection::vec(0u8..3, 1..300), seed in any::<u64>()) {
        let mut map = GridMap::empty(30, 30, 1.0);
        map.base = Cell(1, 1);
        let config = SimConfig::default();
        let mut sim = PlatformSim::new(map, config, seed);
        sim.set_goal(Cell(28, 28)).unwrap();
        let mut last = sim.state().soc;
        let hottest = config.ambient_c + config.thermal_gain_c * config.load_per_mps * config.speed_mps;
        for c in cmds {
            let cmd = match c { 0 => DriveCommand::Drive, 1 => DriveCommand::Idle, _ => DriveCommand::ScanPose };
            let out = sim.step(100, cmd).unwrap();
            let s = sim.state();
            prop_assert!(s.soc <= last);
            prop_assert!(s.soc >= 0.0);
            last = s.soc;
            for t in s.motor_temps {
                prop_assert!(t >= config.ambient_c - 1e-9 && t <= hottest + 1e-9);
            }
            prop_assert!(out.frame.readings["compute.cpu"] >= 0.0 && out.frame.readings["compute.cpu"] <= 100.0);
        }
    }

    #[test]
    fn planned_paths_are_legal(obstacles in prop::collection::btree_set((0i32..15, 0i32..15), 0..60), inflation in 0i32..2) {
        let mut map = GridMap::empty(15, 15, 1.0);
        map.occupied = obstacles.into_iter().map(|(x, y)| Cell(x, y)).collect();
        let (from, to) = (Cell(0, 0), Cell(14, 14));
        map.occupied.remove(&from);
        map.occupied.remove(&to);
        let grid = map.inflated(inflation);
        if let Ok(p) = plan_path(&map, from, to, inflation) {
            prop_assert_eq!(p.cells.first(), Some(&from));
            prop_assert_eq!(p.cells.last(), Some(&to));
            prop_assert!((p.cost - path_cost(&p.cells)).abs() < 1e-9);
            for w in p.cells.windows(2) {
                let (dx, dy) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
                prop_assert!(dx.abs() <= 1 && dy.abs() <= 1 && (dx, dy) != (0, 0));
                prop_assert!(grid.is_free(w[1]));
            }
        }
    }

    #[test]
    fn canonical_rounding_is_idempotent(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        let once = canonical::round_sig(x);
        prop_assert_eq!(canonical::round_sig(once), once);
        let v = serde_json::json!({"b": x, "a": [x, 1]});
        let line = canonical::to_line(&v);
        let back: serde_json::Value = serde_json::from_str(&line).unwrap();
        prop_assert_eq!(canonical::to_line(&back), line);
    }

    #[test]
    fn command_parser_never_panics(s in ".{0,80}") {
        let _ = parse_command(&s);
    }
}
