//! Trajectory rollouts against the solved value field.
//!
//! This is the semantic cross-check of tube membership: synthesize Player-I
//! feedback from the stored field, simulate the ORIGINAL (unmasked) game
//! against an adversarial Player II, and test reach-before-cost directly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{State, ValueField};
use crate::hamiltonian::optimize_controls;
use crate::scenario::{random_control, Control, Scenario};
use crate::sets::{sublevel, MaskSource};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RolloutError {
    #[error("state lies outside the computational domain")]
    OutOfDomain,
}

/// One simulated trajectory of the original game.
#[derive(Debug, Clone)]
pub struct RolloutRecord {
    pub initial_state: State,
    /// Sample times, starting at 0.
    pub times: Vec<f64>,
    /// Trajectory samples aligned with `times`.
    pub states: Vec<State>,
    /// Running cost integral aligned with `times`; nondecreasing.
    pub accumulated_cost: Vec<f64>,
    pub captured: bool,
    /// Present iff `captured`.
    pub capture_time: Option<f64>,
}

impl RolloutRecord {
    pub fn final_cost(&self) -> f64 {
        *self.accumulated_cost.last().unwrap_or(&0.0)
    }
}

/// Player-II behavior during a rollout.
#[derive(Debug, Clone)]
pub enum Adversary {
    /// The saddle argmax synthesized from the field (the hardest opponent
    /// this grid can express).
    Optimal,
    /// Uniform draws from the control box, reseeded per rollout.
    Random { seed: u64 },
    /// A fixed control held for the whole rollout.
    Constant(Vec<f64>),
}

/// Saddle controls at `s`, from central differences of the interpolated field.
///
/// Inside the target set the dynamics are frozen and any admissible pair
/// works; the box midpoints are returned.
pub fn synthesize_controls(
    field: &ValueField,
    scn: &Scenario,
    s: &[f64],
) -> Result<(Control, Control), RolloutError> {
    let grid = field.grid();
    if !grid.contains(s) {
        return Err(RolloutError::OutOfDomain);
    }
    if scn.in_target(s) {
        return Ok((scn.control_a.midpoint(), scn.control_b.midpoint()));
    }
    let mut p = State::new();
    for d in 0..grid.dim() {
        let h = grid.spacing()[d];
        let mut hi = State::from_iter(s.iter().copied());
        let mut lo = hi.clone();
        hi[d] += h;
        lo[d] -= h;
        p.push((field.sample(&hi) - field.sample(&lo)) / (2.0 * h));
    }
    let smp = optimize_controls(scn, s, &p);
    Ok((smp.argmin_a, smp.argmax_b))
}

/// Forward-Euler rollout of the unmasked game from `s0`.
///
/// Player I follows the field-synthesized feedback; Player II follows the
/// adversary tag. The rollout stops at first target contact, at `t_max`, or
/// on domain exit (recorded as not captured). Cost accrues through the
/// unmasked running cost.
pub fn simulate(
    field: &ValueField,
    scn: &Scenario,
    s0: &[f64],
    dt: f64,
    t_max: f64,
    adversary: &Adversary,
) -> RolloutRecord {
    assert!(dt > 0.0, "rollout time step must be positive");
    let grid = field.grid();
    let mut rng = match adversary {
        Adversary::Random { seed } => Some(ChaCha8Rng::seed_from_u64(*seed)),
        _ => None,
    };
    let mut s: State = s0.iter().copied().collect();
    let mut t = 0.0;
    let mut cost = 0.0;
    let mut record = RolloutRecord {
        initial_state: s.clone(),
        times: vec![0.0],
        states: vec![s.clone()],
        accumulated_cost: vec![0.0],
        captured: false,
        capture_time: None,
    };
    loop {
        if scn.in_target(&s) {
            record.captured = true;
            record.capture_time = Some(t);
            return record;
        }
        if t >= t_max || !grid.contains(&s) {
            return record;
        }
        let (a, b_opt) = match synthesize_controls(field, scn, &s) {
            Ok(pair) => pair,
            Err(RolloutError::OutOfDomain) => return record,
        };
        let b: Control = match adversary {
            Adversary::Optimal => b_opt,
            Adversary::Random { .. } => random_control(&scn.control_b, rng.as_mut().unwrap()),
            Adversary::Constant(fixed) => fixed.iter().copied().collect(),
        };
        let step = dt.min(t_max - t);
        cost += (scn.running_cost)(&s, &a, &b) * step;
        let f = (scn.dynamics)(&s, &a, &b);
        for d in 0..scn.state_dim {
            s[d] += f[d] * step;
            if grid.periodic()[d] {
                let lo = grid.bounds_lo()[d];
                let span = grid.bounds_hi()[d] - lo;
                s[d] = lo + (s[d] - lo).rem_euclid(span);
            }
        }
        t += step;
        record.times.push(t);
        record.states.push(s.clone());
        record.accumulated_cost.push(cost);
    }
}

/// Statistical report of `verify_crt`.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub level: f64,
    pub samples: usize,
    pub captured_within_cost: usize,
    /// Fraction of samples captured with cost within tolerance; 0 when the
    /// eligible sample set is empty.
    pub success_fraction: f64,
    /// Largest relative cost overrun among captured samples.
    pub worst_overshoot: f64,
    pub cost_tolerance: f64,
}

/// Monte-Carlo check of reach-before-cost over the sublevel mask `{W ≤ level}`.
///
/// Start nodes are drawn uniformly from the mask eroded by two cells, so the
/// O(Δx) boundary smear of the first-order scheme is not mistaken for a
/// semantic failure. Each rollout derives its own seed from `(seed, sample)`,
/// so the report is independent of execution order.
pub fn verify_crt(
    field: &ValueField,
    scn: &Scenario,
    level: f64,
    n_samples: usize,
    seed: u64,
    cost_tolerance: f64,
    dt: f64,
    t_max: f64,
) -> VerifyReport {
    assert!(n_samples >= 1);
    let mask = sublevel(field, level, MaskSource::Improved);
    let eligible: Vec<usize> = mask
        .erode(2)
        .member()
        .iter()
        .enumerate()
        .filter_map(|(i, &m)| m.then_some(i))
        .collect();
    if eligible.is_empty() {
        return VerifyReport {
            level,
            samples: 0,
            captured_within_cost: 0,
            success_fraction: 0.0,
            worst_overshoot: 0.0,
            cost_tolerance,
        };
    }
    let grid = field.grid();
    let budget = level * (1.0 + cost_tolerance);
    let outcomes: Vec<(bool, f64)> = (0..n_samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(
                seed.wrapping_add((k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            );
            let flat = eligible[rng.gen_range(0..eligible.len())];
            let mut idx = vec![0usize; grid.dim()];
            grid.unflatten(flat, &mut idx);
            let s0 = grid.state_unchecked(&idx);
            let rec = simulate(field, scn, &s0, dt, t_max, &Adversary::Optimal);
            if !rec.captured {
                return (false, 0.0);
            }
            let cost = rec.final_cost();
            let overshoot = if cost <= level {
                0.0
            } else if level > 0.0 {
                (cost - level) / level
            } else {
                f64::INFINITY
            };
            (cost <= budget, overshoot)
        })
        .collect();
    let captured_within_cost = outcomes.iter().filter(|(ok, _)| *ok).count();
    let worst_overshoot = outcomes.iter().map(|&(_, o)| o).fold(0.0, f64::max);
    VerifyReport {
        level,
        samples: n_samples,
        captured_within_cost,
        success_fraction: captured_within_cost as f64 / n_samples as f64,
        worst_overshoot,
        cost_tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::scenario::builtin_linear2d;
    use crate::solver::{solve_improved, SolveConfig, SolveMode};
    use std::sync::Arc;

    fn solved_linear2d(n: usize, horizon: f64) -> (Scenario, ValueField) {
        let scn = builtin_linear2d();
        let grid = Arc::new(
            Grid::new(vec![-2.0, -2.0], vec![2.0, 2.0], vec![n, n], vec![false, false]).unwrap(),
        );
        let cfg = SolveConfig::new(SolveMode::Improved, horizon);
        let r = solve_improved(&scn, &grid, &cfg).unwrap();
        (scn, r.final_slice)
    }

    #[test]
    fn start_inside_target_captures_immediately() {
        let (scn, field) = solved_linear2d(31, 0.5);
        let rec = simulate(&field, &scn, &[0.3, 0.1], 0.01, 0.5, &Adversary::Optimal);
        assert!(rec.captured);
        assert_eq!(rec.capture_time, Some(0.0));
        assert_eq!(rec.final_cost(), 0.0);
    }

    #[test]
    fn synthesized_controls_inside_target_are_midpoints() {
        let (scn, field) = solved_linear2d(31, 0.5);
        let (a, b) = synthesize_controls(&field, &scn, &[0.0, 0.0]).unwrap();
        assert_eq!(a.as_slice(), &[0.0]);
        assert_eq!(b.as_slice(), &[0.0]);
        assert_eq!(
            synthesize_controls(&field, &scn, &[5.0, 0.0]),
            Err(RolloutError::OutOfDomain)
        );
    }

    #[test]
    fn feedback_descends_toward_the_band() {
        // Directly above the target band with x ≥ 0 the costate points up
        // (+y), so the minimizing player drives ẏ = -x + a down with a = -1.
        let (scn, field) = solved_linear2d(81, 1.2);
        let (a, _) = synthesize_controls(&field, &scn, &[0.5, 0.8]).unwrap();
        assert_eq!(a.as_slice(), &[-1.0]);
    }

    #[test]
    fn accumulated_cost_is_nondecreasing() {
        let (scn, field) = solved_linear2d(41, 1.0);
        for adversary in [
            Adversary::Optimal,
            Adversary::Random { seed: 11 },
            Adversary::Constant(vec![0.7]),
        ] {
            let rec = simulate(&field, &scn, &[-1.2, 1.0], 0.01, 1.0, &adversary);
            for pair in rec.accumulated_cost.windows(2) {
                assert!(pair[1] >= pair[0]);
            }
            assert_eq!(rec.captured, rec.capture_time.is_some());
        }
    }

    #[test]
    fn outside_the_tube_survives_the_horizon() {
        // (0, 1.9) lies outside the analytic horizon-1 tube, so the optimal
        // adversary keeps it out of the band for at least one second.
        let (scn, field) = solved_linear2d(81, 1.2);
        assert!(field.sample(&[0.0, 1.9]) > 1.0);
        let rec = simulate(&field, &scn, &[0.0, 1.9], 0.005, 1.0, &Adversary::Optimal);
        assert!(!rec.captured);
    }

    #[test]
    fn fixed_adversary_is_no_harder_than_optimal() {
        let (scn, field) = solved_linear2d(61, 1.2);
        let dt = 0.01;
        let mut captured_opt = 0;
        let mut captured_fixed = 0;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..60 {
            let s0 = [rng.gen_range(-1.5..1.5), rng.gen_range(-1.8..1.8)];
            let opt = simulate(&field, &scn, &s0, dt, 1.0, &Adversary::Optimal);
            let fixed = simulate(&field, &scn, &s0, dt, 1.0, &Adversary::Constant(vec![0.4]));
            captured_opt += opt.captured as usize;
            captured_fixed += fixed.captured as usize;
        }
        assert!(captured_fixed >= captured_opt);
    }

    #[test]
    fn verify_level_zero_samples_only_the_target() {
        let (scn, field) = solved_linear2d(41, 0.8);
        let report = verify_crt(&field, &scn, 0.0, 50, 3, 0.1, 0.01, 0.8);
        assert_eq!(report.samples, 50);
        assert_eq!(report.success_fraction, 1.0);
        assert_eq!(report.worst_overshoot, 0.0);
    }

    #[test]
    fn verify_reports_empty_eligible_set() {
        // A level far below the smallest positive value leaves only the
        // target band; eroding a 3-node-wide band by 2 cells empties it.
        let (scn, field) = solved_linear2d(11, 0.4);
        let report = verify_crt(&field, &scn, 1e-9, 10, 3, 0.1, 0.01, 0.4);
        assert_eq!(report.samples, 0);
    }

    #[test]
    fn verify_is_deterministic_for_a_seed() {
        let (scn, field) = solved_linear2d(41, 1.0);
        let a = verify_crt(&field, &scn, 0.8, 40, 17, 0.1, 0.01, 1.0);
        let b = verify_crt(&field, &scn, 0.8, 40, 17, 0.1, 0.01, 1.0);
        assert_eq!(a.captured_within_cost, b.captured_within_cost);
        assert_eq!(a.worst_overshoot, b.worst_overshoot);
    }
}
