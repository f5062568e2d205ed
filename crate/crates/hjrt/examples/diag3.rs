use hjrt::*;
use std::sync::Arc;

fn main() {
    let scn = builtin_linear2d();
    let grid = Arc::new(Grid::new(vec![-2.0,-2.0], vec![2.0,2.0], vec![251,251], vec![false,false]).unwrap());
    let oracle = rasterize_analytic(&grid, analytic_rt_linear2d);
    let cls = solve_classical(&scn, &grid, &SolveConfig::new(SolveMode::Classical, 1.0)).unwrap();
    let mc = sublevel(&cls.final_slice, 0.0, MaskSource::Classical);
    println!("classical vs analytic: {:.5}", jaccard_error(&mc, &oracle).unwrap());
    for tbar in [1.2, 1.5, 2.0] {
        let imp = solve_improved(&scn, &grid, &SolveConfig::new(SolveMode::Improved, tbar)).unwrap();
        let mi = sublevel(&imp.final_slice, 1.0, MaskSource::Improved);
        println!("tbar={tbar}: vs analytic {:.5}  vs classical {:.5}",
            jaccard_error(&mi, &oracle).unwrap(), jaccard_error(&mi, &mc).unwrap());
    }
    // pursuit stability recheck
    let pg = Arc::new(Grid::new(
        vec![-5.0, -10.0, 0.0], vec![20.0, 10.0, std::f64::consts::TAU],
        vec![51, 51, 51], vec![false, false, true]).unwrap());
    let p0 = builtin_pursuit(0.0);
    let r0 = solve_improved(&p0, &pg, &SolveConfig::new(SolveMode::Improved, 2.2)).unwrap();
    let min = r0.final_slice.values().iter().cloned().fold(f64::INFINITY, f64::min);
    println!("pursuit 51^3 min = {min:.3e}");
}
