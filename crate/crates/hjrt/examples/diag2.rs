use hjrt::*;
use std::sync::Arc;

fn main() {
    let pg = Arc::new(Grid::new(
        vec![-5.0, -10.0, 0.0], vec![20.0, 10.0, std::f64::consts::TAU],
        vec![51, 51, 51], vec![false, false, true]).unwrap());
    let p0 = builtin_pursuit(0.0);
    let cfg = SolveConfig::new(SolveMode::Improved, 2.2);
    let r0 = solve_improved(&p0, &pg, &cfg).unwrap();
    let f = &r0.final_slice;
    let (mut min, mut argmin) = (f64::INFINITY, 0usize);
    for (i, &v) in f.values().iter().enumerate() {
        if v < min { min = v; argmin = i; }
    }
    let neg = f.values().iter().filter(|&&v| v < -1e-9).count();
    let mut idx = [0usize; 3];
    pg.unflatten(argmin, &mut idx);
    let s = pg.node_to_state(&idx).unwrap();
    println!("min={min:.3e} at idx={idx:?} state=({:.2},{:.2},{:.2}) negs={neg}", s[0], s[1], s[2]);
    let m = sublevel(f, 0.5, MaskSource::Improved);
    println!("J=0.5 count {}", m.count());
}
