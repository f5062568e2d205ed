use hjrt::*;
use std::sync::Arc;
use std::time::Instant;

fn main() {
    let pg = Arc::new(Grid::new(
        vec![-5.0, -10.0, 0.0], vec![20.0, 10.0, std::f64::consts::TAU],
        vec![101, 101, 101], vec![false, false, true]).unwrap());
    let p0 = builtin_pursuit(0.0);
    let t0 = Instant::now();
    let (r0, m0) = run_algorithm1(&p0, &pg, &[0.5, 1.0, 1.5, 2.0], None, DEFAULT_CFL).unwrap();
    println!("101^3 lambda=0 improved: {} steps {:.0}s", r0.steps_taken, t0.elapsed().as_secs_f64());
    let t0 = Instant::now();
    let snaps: Vec<f64> = [0.5, 1.0, 1.5, 2.0].iter().map(|t| 2.0 - t).collect();
    let c0 = solve_classical(&p0, &pg,
        &SolveConfig::new(SolveMode::Classical, 2.0).with_snapshots(snaps)).unwrap();
    println!("101^3 classical: {:.0}s", t0.elapsed().as_secs_f64());
    for (k, &t) in [0.5, 1.0, 1.5, 2.0].iter().enumerate() {
        let slice = if t == 2.0 { &c0.final_slice } else {
            c0.snapshots.iter().find(|s| (s.time - (2.0 - t)).abs() < 1e-9).unwrap()
        };
        let cm = sublevel(slice, 0.0, MaskSource::Classical);
        println!("J={t}: e = {:.5} (imp {} cls {})",
            jaccard_error(&m0[k], &cm).unwrap(), m0[k].count(), cm.count());
    }
    let t0 = Instant::now();
    let p1 = builtin_pursuit(0.1);
    let (r1, m1) = run_algorithm1(&p1, &pg, &[0.5, 1.0, 1.5, 2.0], None, DEFAULT_CFL).unwrap();
    println!("101^3 lambda=0.1: {:.0}s nested={}", t0.elapsed().as_secs_f64(), nesting_check(&m1));
    for k in 0..4 {
        println!("J={}: subset within 1 cell: {}", m1[k].level,
            subset_within_band(&m1[k], &m0[k], 1).unwrap());
    }
    let dt = hjrt::solver::cfl_time_step(&p1, &pg, DEFAULT_CFL).unwrap() * 0.5;
    let report = verify_crt(&r1.final_slice, &p1, 2.0, 200, 2024, 0.1, dt, r1.final_slice.horizon);
    println!("verify: fraction={:.3} overshoot={:.4}", report.success_fraction, report.worst_overshoot);
}
