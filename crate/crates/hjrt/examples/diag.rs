use hjrt::*;
use std::sync::Arc;
use std::time::Instant;

fn grid2d(n: usize) -> Arc<Grid> {
    Arc::new(Grid::new(vec![-2.0, -2.0], vec![2.0, 2.0], vec![n, n], vec![false, false]).unwrap())
}

fn main() {
    let scn = builtin_linear2d();
    println!("== C1: analytic convergence (T=1.2) ==");
    let mut e51 = 0.0;
    let mut e251 = 0.0;
    for n in [51usize, 101, 151, 201, 251] {
        let grid = grid2d(n);
        let r = solve_improved(&scn, &grid, &SolveConfig::new(SolveMode::Improved, 1.2)).unwrap();
        let mask = sublevel(&r.final_slice, 1.0, MaskSource::Improved);
        let oracle = rasterize_analytic(&grid, analytic_rt_linear2d);
        let e = jaccard_error(&mask, &oracle).unwrap();
        if n == 51 { e51 = e; }
        if n == 251 { e251 = e; }
        println!("N={n:3}  e_vol={e:.5}");
    }
    println!("factor 51->251: {:.2}", e51 / e251);

    println!("== C2 + C3 ==");
    let grid = grid2d(251);
    let imp = solve_improved(&scn, &grid, &SolveConfig::new(SolveMode::Improved, 1.2)).unwrap();
    let horizons = [0.25, 0.5, 0.75, 1.0];
    let snaps: Vec<f64> = horizons.iter().map(|t| 1.0 - t).collect();
    let cls = solve_classical(&scn, &grid,
        &SolveConfig::new(SolveMode::Classical, 1.0).with_snapshots(snaps)).unwrap();
    for &t in &horizons {
        let slice = if t == 1.0 { &cls.final_slice } else {
            cls.snapshots.iter().find(|s| (s.time - (1.0 - t)).abs() < 1e-9).unwrap()
        };
        let c = sublevel(slice, 0.0, MaskSource::Classical);
        let i = sublevel(&imp.final_slice, t, MaskSource::Improved);
        println!("T={t}: e_vs_classical = {:.5}", jaccard_error(&i, &c).unwrap());
    }

    println!("== C4: horizon independence ==");
    let imp2 = solve_improved(&scn, &grid, &SolveConfig::new(SolveMode::Improved, 2.0)).unwrap();
    let a = sublevel(&imp.final_slice, 1.0, MaskSource::Improved);
    let b = sublevel(&imp2.final_slice, 1.0, MaskSource::Improved);
    println!("symdiff={} literal-band={} erode-band={}",
        a.symmetric_difference(&b).unwrap().len(),
        symdiff_within_boundary_band(&a, &b, 1).unwrap(),
        equal_within_band(&a, &b, 1).unwrap());

    println!("== C5 spot: nonneg + time monotonicity (N=101, snapshots) ==");
    let g101 = grid2d(101);
    let r = solve_improved(&scn, &g101,
        &SolveConfig::new(SolveMode::Improved, 1.2).with_snapshots(vec![0.3, 0.6, 0.9])).unwrap();
    let mut ok_nonneg = true;
    for s in r.snapshots.iter().chain([&r.final_slice]) {
        for &v in s.values() { if v < 0.0 { ok_nonneg = false; } }
    }
    let mut ok_mono = true;
    let mut chain: Vec<&ValueField> = vec![&r.final_slice];
    chain.extend(r.snapshots.iter());
    for pair in chain.windows(2) {
        for (e, l) in pair[0].values().iter().zip(pair[1].values()) {
            if *e < *l - 1e-12 { ok_mono = false; }
        }
    }
    println!("nonneg={ok_nonneg} time_monotone={ok_mono}");

    println!("== C6: dpp slopes ==");
    let mut pts = vec![];
    for n in [51usize, 101, 201] {
        let grid = grid2d(n);
        let gap = 4.0 / (n - 1) as f64;
        let cfg = SolveConfig::new(SolveMode::Improved, 1.2).with_snapshots(vec![0.4, 0.4 + gap]);
        let r = solve_improved(&scn, &grid, &cfg).unwrap();
        let res = dpp_residual(&scn, &r.snapshots[0], &r.snapshots[1], gap).unwrap();
        println!("N={n:3} mean={:.3e} max={:.3e}", res.interior_mean, res.interior_max);
        pts.push(((1.0 / (n - 1) as f64).ln(), res.interior_mean.ln()));
    }
    let slope = (pts[2].1 - pts[0].1) / (pts[2].0 - pts[0].0);
    println!("order (log-log endpoint slope) = {slope:.2}");

    println!("== C7 reduced: pursuit 51^3 ==");
    let pg = Arc::new(Grid::new(
        vec![-5.0, -10.0, 0.0], vec![20.0, 10.0, std::f64::consts::TAU],
        vec![51, 51, 51], vec![false, false, true]).unwrap());
    let t0 = Instant::now();
    let p0 = builtin_pursuit(0.0);
    let (r0, m0) = run_algorithm1(&p0, &pg, &[0.5, 1.0, 1.5, 2.0], None, DEFAULT_CFL).unwrap();
    println!("lambda=0 improved: {} steps {:.1}s horizon={}", r0.steps_taken, t0.elapsed().as_secs_f64(), r0.final_slice.horizon);
    let t0 = Instant::now();
    let snaps: Vec<f64> = [0.5, 1.0, 1.5, 2.0].iter().map(|t| 2.0 - t).collect();
    let c0 = solve_classical(&p0, &pg,
        &SolveConfig::new(SolveMode::Classical, 2.0).with_snapshots(snaps)).unwrap();
    println!("classical: {} steps {:.1}s", c0.steps_taken, t0.elapsed().as_secs_f64());
    for (k, &t) in [0.5, 1.0, 1.5, 2.0].iter().enumerate() {
        let slice = if t == 2.0 { &c0.final_slice } else {
            c0.snapshots.iter().find(|s| (s.time - (2.0 - t)).abs() < 1e-9).unwrap()
        };
        let cm = sublevel(slice, 0.0, MaskSource::Classical);
        println!("J={t}: e_vs_classical = {:.5} (imp {} cls {})",
            jaccard_error(&m0[k], &cm).unwrap(), m0[k].count(), cm.count());
    }
    let t0 = Instant::now();
    let p1 = builtin_pursuit(0.1);
    let (_r1, m1) = run_algorithm1(&p1, &pg, &[0.5, 1.0, 1.5, 2.0], None, DEFAULT_CFL).unwrap();
    println!("lambda=0.1 improved: {:.1}s", t0.elapsed().as_secs_f64());
    println!("lambda=0.1 nested: {}", nesting_check(&m1));
    for k in 0..4 {
        println!("J={}: lam.1 subset-of lam0 within 1 cell: {}",
            m1[k].level, subset_within_band(&m1[k], &m0[k], 1).unwrap());
    }

    println!("== C8: rollouts on lambda=0.1 field ==");
    let f1 = _r1.final_slice;
    let dt = hjrt::solver::cfl_time_step(&p1, &pg, DEFAULT_CFL).unwrap() * 0.5;
    let t0 = Instant::now();
    let report = verify_crt(&f1, &p1, 2.0, 200, 2024, 0.1, dt, f1.horizon);
    println!("samples={} fraction={:.3} worst_overshoot={:.4} ({:.1}s, dt={dt:.4})",
        report.samples, report.success_fraction, report.worst_overshoot, t0.elapsed().as_secs_f64());
}
