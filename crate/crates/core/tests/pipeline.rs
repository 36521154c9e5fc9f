use proptest::prelude::*;

use push_recovery::scanner::CellResult;
use push_recovery::{
    benchmark, compare_costs, run_simulation, scan_grid, trace_states, Approach, ComState,
    GridSpec, PushEvent, RecoveryPlanner, Scenario, WalkingParams,
};

fn close(a: WalkingParams, b: WalkingParams) -> bool {
    (a.remaining - b.remaining).abs() <= 1e-6
        && (a.next_duration - b.next_duration).abs() <= 1e-6
        && (a.placement - b.placement).abs() <= 1e-6
}

fn small_grid() -> GridSpec {
    GridSpec { x_lo: -0.1, x_hi: 0.1, x_step: 0.05, v_lo: -0.5, v_hi: 0.5, v_step: 0.25 }
}

#[test]
fn parallel_scan_matches_serial() {
    let pl = RecoveryPlanner::default();
    let strip = |r: &CellResult| r.outcome().map(|o| (o.params, o.cost));
    let a = scan_grid(&small_grid(), &pl, &Approach::ALL, 0.6, 1).unwrap();
    let b = scan_grid(&small_grid(), &pl, &Approach::ALL, 0.6, 4).unwrap();
    assert_eq!(a.cells.len(), 25);
    for (x, y) in a.cells.iter().zip(&b.cells) {
        assert_eq!((x.ix, x.iv, x.state), (y.ix, y.iv, y.state));
        assert_eq!(strip(&x.holistic), strip(&y.holistic));
        assert_eq!(strip(&x.sequential), strip(&y.sequential));
    }
}

#[test]
fn single_approach_scan_leaves_the_other_empty() {
    let pl = RecoveryPlanner::default();
    let scan = scan_grid(&small_grid(), &pl, &[Approach::Sequential], 0.6, 1).unwrap();
    assert!(scan.cells.iter().all(|c| c.holistic == CellResult::Skipped));
    assert!(compare_costs(&scan.cells, 1e-6).diffs.is_empty());
}

#[test]
fn simulation_is_deterministic() {
    let mut sc = Scenario::nominal(Approach::Sequential);
    sc.pushes = vec![PushEvent { t_start: 1.0, duration: 0.2, accel: -2.0 }];
    sc.t_end = 4.0;
    let a = run_simulation(&sc).unwrap();
    let b = run_simulation(&sc).unwrap();
    assert_eq!(a.samples.len(), b.samples.len());
    for (x, y) in a.samples.iter().zip(&b.samples) {
        assert_eq!((x.t, x.x_world, x.xd, x.foot_world, x.cmd), (y.t, y.x_world, y.xd, y.foot_world, y.cmd));
    }
    assert_eq!(a.step_events, b.step_events);
}

#[test]
fn trace_states_replay_the_controller_inputs() {
    let mut sc = Scenario::nominal(Approach::Sequential);
    sc.t_end = 2.0;
    let traj = run_simulation(&sc).unwrap();
    let states = trace_states(&traj, 0.0, 2.0);
    assert_eq!(states.len(), traj.samples.len());
    let pl = sc.planner().unwrap();
    for (s, sample) in states.iter().zip(&traj.samples) {
        let out = pl.sequential(s.state, s.t_elap).unwrap();
        assert!(close(out.params, sample.cmd), "{:?} vs {:?}", out.params, sample.cmd);
    }
    let report = benchmark(&states[..5], &pl, 1).unwrap();
    assert_eq!(report.holistic.samples, 5);
}

#[test]
fn large_pushes_end_in_a_fall() {
    let mut sc = Scenario::nominal(Approach::Sequential);
    sc.pushes = vec![PushEvent { t_start: 0.5, duration: 1.0, accel: -30.0 }];
    let traj = run_simulation(&sc).unwrap();
    assert!(traj.fell);
    let t = traj.fall_time.unwrap();
    assert!(t > 0.5 && t < sc.t_end);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solves_are_feasible(x in -0.4..0.4f64, v in -2.0..2.0f64, t_elap in 0.0..1.0f64) {
        let pl = RecoveryPlanner::default();
        let b = pl.bounds();
        let (lo, hi) = b.remaining_range(t_elap);
        for approach in Approach::ALL {
            let o = pl.solve(approach, ComState::new(x, v), t_elap).unwrap();
            prop_assert!(o.params.remaining >= lo && o.params.remaining <= hi);
            prop_assert!(o.params.next_duration >= b.t_min() && o.params.next_duration <= b.t_max());
            prop_assert!(o.params.placement.abs() <= b.l_max());
        }
    }

    #[test]
    fn world_frame_matches_local_state(accel in -3.0..3.0f64) {
        let mut sc = Scenario::nominal(Approach::Sequential);
        sc.t_end = 2.5;
        sc.pushes = vec![PushEvent { t_start: 0.7, duration: 0.3, accel }];
        let traj = run_simulation(&sc).unwrap();
        for w in traj.samples.windows(2) {
            prop_assert!(w[1].t > w[0].t);
        }
        let pl = sc.planner().unwrap();
        let states = trace_states(&traj, 0.0, sc.t_end);
        for (s, sample) in states.iter().zip(&traj.samples) {
            prop_assert!((sample.x_world - sample.foot_world - s.state.x).abs() <= 1e-12);
            prop_assert!(close(pl.sequential(s.state, s.t_elap).unwrap().params, sample.cmd));
        }
    }
}
