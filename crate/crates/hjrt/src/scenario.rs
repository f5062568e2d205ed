//! Problem definition: dynamics, control sets, running cost, target set.
//!
//! A [`Scenario`] bundles the two-player game `ṡ = f(s, a, b)` with box
//! control sets for both players, a running cost `c(s, a, b)` bounded below
//! by a positive `gamma`, and an implicit target function `l` whose
//! nonpositive set is the target `K`. The target-masked variants
//! [`Scenario::masked_dynamics`] and [`Scenario::masked_cost`] freeze
//! trajectories and stop cost accrual on contact with `K`; they are what the
//! solver actually marches.

use std::sync::Arc;

use arrayvec::ArrayVec;
use thiserror::Error;

use crate::grid::{state_from, Grid, State, MAX_DIM};

/// A control vector on the stack.
pub type Control = ArrayVec<f64, MAX_DIM>;

pub type DynamicsFn = dyn Fn(&[f64], &[f64], &[f64]) -> State + Send + Sync;
pub type CostFn = dyn Fn(&[f64], &[f64], &[f64]) -> f64 + Send + Sync;
pub type TargetFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("running cost has nonpositive lower bound {0}; a positive floor is required")]
    NonpositiveCostFloor(f64),
    #[error("control box channel {0} has lo > hi")]
    BadControlBox(usize),
    #[error("non-finite dynamics at a sampled point")]
    NonFiniteDynamics,
}

/// Axis-aligned box of admissible controls for one player.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlBox {
    lo: Control,
    hi: Control,
}

impl ControlBox {
    pub fn new(lo: &[f64], hi: &[f64]) -> Result<Self, ScenarioError> {
        assert_eq!(lo.len(), hi.len());
        for k in 0..lo.len() {
            if lo[k] > hi[k] {
                return Err(ScenarioError::BadControlBox(k));
            }
        }
        Ok(ControlBox {
            lo: lo.iter().copied().collect(),
            hi: hi.iter().copied().collect(),
        })
    }

    /// The symmetric interval `[-m, m]` in every channel.
    pub fn symmetric(m: f64, channels: usize) -> Self {
        ControlBox {
            lo: (0..channels).map(|_| -m).collect(),
            hi: (0..channels).map(|_| m).collect(),
        }
    }

    pub fn channels(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn midpoint(&self) -> Control {
        self.lo
            .iter()
            .zip(self.hi.iter())
            .map(|(l, h)| 0.5 * (l + h))
            .collect()
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.len() == self.channels()
            && u.iter()
                .enumerate()
                .all(|(k, &v)| v >= self.lo[k] && v <= self.hi[k])
    }

    /// Evenly spaced sample lattice along one channel.
    pub fn channel_lattice(&self, k: usize, points: usize) -> Vec<f64> {
        let (lo, hi) = (self.lo[k], self.hi[k]);
        if lo == hi || points <= 1 {
            return vec![lo];
        }
        (0..points)
            .map(|i| lo + (i as f64 * (hi - lo)) / (points - 1) as f64)
            .collect()
    }
}

/// How the inner two-player optimization may be solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlStructure {
    /// The objective `c + p·f` decomposes across control channels, each
    /// channel's term is quadratic or affine in that channel alone, and the
    /// dynamics are affine in the controls. Both built-in scenarios qualify;
    /// the optimizer then uses exact per-channel closed forms.
    AffineQuadratic,
    /// No structure assumed: exhaustive search over an evenly spaced control
    /// lattice with `lattice` points per channel.
    Generic { lattice: usize },
}

impl ControlStructure {
    pub const DEFAULT_LATTICE: usize = 9;

    pub fn generic() -> Self {
        ControlStructure::Generic { lattice: Self::DEFAULT_LATTICE }
    }
}

/// Full statement of one reachability problem.
#[derive(Clone)]
pub struct Scenario {
    pub state_dim: usize,
    pub dynamics: Arc<DynamicsFn>,
    pub running_cost: Arc<CostFn>,
    pub target_l: Arc<TargetFn>,
    pub control_a: ControlBox,
    pub control_b: ControlBox,
    pub control_structure: ControlStructure,
    /// Cached positive lower bound of the running cost over domain × 𝒜 × ℬ,
    /// when known in closed form. `compute_gamma` fills the gap otherwise.
    pub gamma: Option<f64>,
}

impl std::fmt::Debug for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scenario")
            .field("state_dim", &self.state_dim)
            .field("control_a", &self.control_a)
            .field("control_b", &self.control_b)
            .field("control_structure", &self.control_structure)
            .field("gamma", &self.gamma)
            .finish()
    }
}

impl Scenario {
    /// True when `s` lies in the target set `K = {l ≤ 0}`.
    #[inline]
    pub fn in_target(&self, s: &[f64]) -> bool {
        (self.target_l)(s) <= 0.0
    }

    /// Dynamics masked to zero inside the target set.
    pub fn masked_dynamics(&self, s: &[f64], a: &[f64], b: &[f64]) -> State {
        if self.in_target(s) {
            (0..self.state_dim).map(|_| 0.0).collect()
        } else {
            (self.dynamics)(s, a, b)
        }
    }

    /// Running cost masked to zero inside the target set.
    pub fn masked_cost(&self, s: &[f64], a: &[f64], b: &[f64]) -> f64 {
        if self.in_target(s) {
            0.0
        } else {
            (self.running_cost)(s, a, b)
        }
    }

    /// Per-dimension bound on |f| sampled over grid nodes and control
    /// corners. Also verifies the dynamics stay finite on those samples.
    pub fn sampled_dynamics_bound(
        &self,
        grid: &Grid,
        samples: usize,
        seed: u64,
    ) -> Result<State, ScenarioError> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut bound: State = (0..self.state_dim).map(|_| 0.0).collect();
        let mut idx = vec![0usize; grid.dim()];
        for _ in 0..samples {
            for (d, i) in idx.iter_mut().enumerate() {
                *i = rng.gen_range(0..grid.counts()[d]);
            }
            let s = grid.state_unchecked(&idx);
            let a = random_control(&self.control_a, &mut rng);
            let b = random_control(&self.control_b, &mut rng);
            let f = (self.dynamics)(&s, &a, &b);
            for d in 0..self.state_dim {
                if !f[d].is_finite() {
                    return Err(ScenarioError::NonFiniteDynamics);
                }
                bound[d] = bound[d].max(f[d].abs());
            }
        }
        Ok(bound)
    }
}

pub(crate) fn random_control<R: rand::Rng>(bx: &ControlBox, rng: &mut R) -> Control {
    (0..bx.channels())
        .map(|k| {
            if bx.lo()[k] == bx.hi()[k] {
                bx.lo()[k]
            } else {
                rng.gen_range(bx.lo()[k]..=bx.hi()[k])
            }
        })
        .collect()
}

/// Number of control-lattice points per channel used when minimizing the
/// running cost of a generic scenario.
const GAMMA_LATTICE: usize = 17;
/// Safety deflation applied to the sampled minimum of a generic scenario.
const GAMMA_DEFLATION: f64 = 0.99;

/// Positive lower bound of the running cost over the grid × control boxes.
///
/// Uses the scenario's cached closed-form bound when present. Otherwise, for
/// channel-separable quadratic costs each control channel is minimized in
/// closed form at every node; generic costs fall back to a dense control
/// lattice whose sampled minimum is conservatively deflated.
pub fn compute_gamma(scn: &Scenario, grid: &Grid) -> Result<f64, ScenarioError> {
    if let Some(g) = scn.gamma {
        if g > 0.0 {
            return Ok(g);
        }
        return Err(ScenarioError::NonpositiveCostFloor(g));
    }
    let mut best = f64::INFINITY;
    let mut idx = vec![0usize; grid.dim()];
    match scn.control_structure {
        ControlStructure::AffineQuadratic => loop {
            let s = grid.state_unchecked(&idx);
            best = best.min(separable_cost_min(scn, &s));
            if !grid.next_index(&mut idx) {
                break;
            }
        },
        ControlStructure::Generic { .. } => {
            loop {
                let s = grid.state_unchecked(&idx);
                best = best.min(lattice_cost_min(scn, &s, GAMMA_LATTICE));
                if !grid.next_index(&mut idx) {
                    break;
                }
            }
            best *= GAMMA_DEFLATION;
        }
    }
    if best > 0.0 {
        Ok(best)
    } else {
        Err(ScenarioError::NonpositiveCostFloor(best))
    }
}

/// Exact minimum of a channel-separable quadratic cost at one state.
fn separable_cost_min(scn: &Scenario, s: &[f64]) -> f64 {
    let cost = |a: &[f64], b: &[f64]| (scn.running_cost)(s, a, b);
    let a_mid = scn.control_a.midpoint();
    let b_mid = scn.control_b.midpoint();
    let mut total = cost(&a_mid, &b_mid);
    let mut probe_a = a_mid.clone();
    for k in 0..scn.control_a.channels() {
        let (lo, hi) = (scn.control_a.lo()[k], scn.control_a.hi()[k]);
        let base = a_mid[k];
        let g = |u: f64, probe: &mut Control| {
            probe[k] = u;
            let y = cost(probe, &b_mid);
            probe[k] = base;
            y
        };
        total += channel_min_delta(lo, hi, base, |u| g(u, &mut probe_a));
    }
    let mut probe_b = b_mid.clone();
    for k in 0..scn.control_b.channels() {
        let (lo, hi) = (scn.control_b.lo()[k], scn.control_b.hi()[k]);
        let base = b_mid[k];
        let g = |u: f64, probe: &mut Control| {
            probe[k] = u;
            let y = cost(&a_mid, probe);
            probe[k] = base;
            y
        };
        total += channel_min_delta(lo, hi, base, |u| g(u, &mut probe_b));
    }
    total
}

/// Minimum of `g(u) - g(mid)` over `[lo, hi]` for a quadratic channel `g`.
fn channel_min_delta(lo: f64, hi: f64, mid: f64, mut g: impl FnMut(f64) -> f64) -> f64 {
    if lo == hi {
        return 0.0;
    }
    let h = 0.5 * (hi - lo);
    let y_lo = g(lo);
    let y_mid = g(mid);
    let y_hi = g(hi);
    let (q, l) = crate::hamiltonian::fit_channel_quadratic(y_lo, y_mid, y_hi, h);
    let delta = crate::hamiltonian::minimize_channel(q, l, h, scale(y_lo, y_mid, y_hi));
    q * delta * delta + l * delta
}

fn scale(a: f64, b: f64, c: f64) -> f64 {
    a.abs().max(b.abs()).max(c.abs()).max(1.0)
}

fn lattice_cost_min(scn: &Scenario, s: &[f64], points: usize) -> f64 {
    let mut best = f64::INFINITY;
    let mut a_scratch = scn.control_a.midpoint();
    let mut b_scratch = scn.control_b.midpoint();
    lattice_walk(&scn.control_a, points, &mut a_scratch, &mut |a| {
        lattice_walk(&scn.control_b, points, &mut b_scratch, &mut |b| {
            let v = (scn.running_cost)(s, a, b);
            if v < best {
                best = v;
            }
        });
    });
    best
}

/// Visit every point of the per-channel lattice, channels nested in order.
pub(crate) fn lattice_walk(
    bx: &ControlBox,
    points: usize,
    scratch: &mut Control,
    visit: &mut impl FnMut(&Control),
) {
    fn rec(
        bx: &ControlBox,
        points: usize,
        k: usize,
        scratch: &mut Control,
        visit: &mut impl FnMut(&Control),
    ) {
        if k == bx.channels() {
            visit(scratch);
            return;
        }
        for u in bx.channel_lattice(k, points) {
            scratch[k] = u;
            rec(bx, points, k + 1, scratch, visit);
        }
    }
    rec(bx, points, 0, scratch, visit)
}

/// Two-state linear game: `ẋ = b`, `ẏ = -x + a`, both controls in `[-1, 1]`,
/// target band `|y| ≤ 0.5`, unit running cost.
pub fn builtin_linear2d() -> Scenario {
    Scenario {
        state_dim: 2,
        dynamics: Arc::new(|s, a, b| state_from(&[b[0], -s[0] + a[0]])),
        running_cost: Arc::new(|_s, _a, _b| 1.0),
        target_l: Arc::new(|s| s[1].abs() - 0.5),
        control_a: ControlBox::symmetric(1.0, 1),
        control_b: ControlBox::symmetric(1.0, 1),
        control_structure: ControlStructure::AffineQuadratic,
        gamma: Some(1.0),
    }
}

/// Closed-form membership test for the reachable tube of the 2-D linear game
/// at horizon 1: the target band plus two wedges and two parabolic caps.
pub fn analytic_rt_linear2d(s: &[f64]) -> bool {
    let (x, y) = (s[0], s[1]);
    if y.abs() <= 0.5 {
        return true;
    }
    if y >= 0.0 && y <= x + 1.0 {
        return true;
    }
    if y <= 0.0 && y >= x - 1.0 {
        return true;
    }
    if (-1.0..=0.0).contains(&x) && y >= 0.0 && y <= 0.5 * x * x + x + 1.0 {
        return true;
    }
    if (0.0..=1.0).contains(&x) && y <= 0.0 && y >= -0.5 * x * x + x - 1.0 {
        return true;
    }
    false
}

/// Pursuit-evasion game in pursuer-relative coordinates with the standard
/// parameters (speed 5, capture radius 5).
pub fn builtin_pursuit(lambda: f64) -> Scenario {
    builtin_pursuit_params(lambda, 5.0, 5.0)
}

/// Pursuit-evasion game with explicit vehicle speed and capture radius.
///
/// State `(x, y, θ)` is the evader position and heading relative to the
/// pursuer; both angular-rate controls live in `[-1, 1]`. The running cost is
/// `1 + λ(x² + y² + a² + b²)`; the third state dimension is meant to live on
/// a periodic grid over `[0, 2π)`.
pub fn builtin_pursuit_params(lambda: f64, speed: f64, capture_radius: f64) -> Scenario {
    assert!(lambda >= 0.0, "lambda must be nonnegative");
    let r2 = capture_radius * capture_radius;
    Scenario {
        state_dim: 3,
        dynamics: Arc::new(move |s, a, b| {
            let (x, y, th) = (s[0], s[1], s[2]);
            state_from(&[
                -speed + speed * th.cos() + a[0] * y,
                speed * th.sin() - a[0] * x,
                b[0] - a[0],
            ])
        }),
        running_cost: Arc::new(move |s, a, b| {
            1.0 + lambda * (s[0] * s[0] + s[1] * s[1] + a[0] * a[0] + b[0] * b[0])
        }),
        target_l: Arc::new(move |s| s[0] * s[0] + s[1] * s[1] - r2),
        control_a: ControlBox::symmetric(1.0, 1),
        control_b: ControlBox::symmetric(1.0, 1),
        control_structure: ControlStructure::AffineQuadratic,
        // 1 + λ(x²+y²+a²+b²) ≥ 1 with equality at the origin and zero controls.
        gamma: Some(1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid2d(n: usize) -> Grid {
        Grid::new(vec![-2.0, -2.0], vec![2.0, 2.0], vec![n, n], vec![false, false]).unwrap()
    }

    #[test]
    fn linear2d_matches_stated_system() {
        let scn = builtin_linear2d();
        assert!(((scn.target_l)(&[0.0, 0.5])).abs() < 1e-15);
        assert!(((scn.target_l)(&[3.0, 0.0]) + 0.5).abs() < 1e-15);
        let f = (scn.dynamics)(&[0.0, 0.0], &[-1.0], &[1.0]);
        assert_eq!(f.as_slice(), &[1.0, -1.0]);
    }

    #[test]
    fn masked_dynamics_freezes_inside_target() {
        let scn = builtin_linear2d();
        assert_eq!(scn.masked_dynamics(&[0.0, 0.0], &[1.0], &[1.0]).as_slice(), &[0.0, 0.0]);
        let f = scn.masked_dynamics(&[1.0, 1.0], &[1.0], &[1.0]);
        assert_eq!(f.as_slice(), &[1.0, 0.0]);
        let p = builtin_pursuit(0.0);
        let f = p.masked_dynamics(&[10.0, 0.0, 0.0], &[0.0], &[0.0]);
        assert!(f.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn masked_cost_examples() {
        let scn = builtin_linear2d();
        assert_eq!(scn.masked_cost(&[0.0, 0.2], &[0.0], &[0.0]), 0.0);
        assert_eq!(scn.masked_cost(&[1.0, 1.0], &[0.0], &[0.0]), 1.0);
        let p = builtin_pursuit(0.1);
        let c = p.masked_cost(&[10.0, 0.0, 0.0], &[1.0], &[1.0]);
        assert!((c - 11.2).abs() < 1e-12);
    }

    #[test]
    fn pursuit_dynamics_and_target() {
        let scn = builtin_pursuit(0.0);
        // On the capture circle: 3² + 4² = 5².
        assert!(((scn.target_l)(&[3.0, 4.0, 1.0])).abs() < 1e-12);
        let f = (scn.dynamics)(&[0.0, 0.0, std::f64::consts::PI], &[1.0], &[0.0]);
        assert!((f[0] + 10.0).abs() < 1e-12);
        assert!(f[1].abs() < 1e-12);
        assert!((f[2] + 1.0).abs() < 1e-12);
        // λ = 0 degenerates the cost to the constant 1.
        assert_eq!((scn.running_cost)(&[7.0, -3.0, 2.0], &[0.3], &[-0.9]), 1.0);
    }

    #[test]
    fn gamma_of_builtins_is_one() {
        let grid = grid2d(21);
        assert_eq!(compute_gamma(&builtin_linear2d(), &grid).unwrap(), 1.0);
        let pg = Grid::new(
            vec![-5.0, -10.0, 0.0],
            vec![20.0, 10.0, std::f64::consts::TAU],
            vec![11, 11, 11],
            vec![false, false, true],
        )
        .unwrap();
        assert_eq!(compute_gamma(&builtin_pursuit(0.1), &pg).unwrap(), 1.0);
    }

    #[test]
    fn gamma_quadratic_cost_minimized_at_origin() {
        // Same cost shape as the pursuit game but without the cached bound,
        // exercising the closed-form per-channel minimization.
        let mut scn = builtin_pursuit(0.1);
        scn.gamma = None;
        let pg = Grid::new(
            vec![-5.0, -10.0, 0.0],
            vec![20.0, 10.0, std::f64::consts::TAU],
            vec![11, 11, 11],
            vec![false, false, true],
        )
        .unwrap();
        // The node set contains the origin in (x, y); controls minimize at 0.
        let g = compute_gamma(&scn, &pg).unwrap();
        assert!((g - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_constant_cost_is_exact() {
        let mut scn = builtin_linear2d();
        scn.running_cost = Arc::new(|_, _, _| 2.0);
        scn.gamma = None;
        assert_eq!(compute_gamma(&scn, &grid2d(11)).unwrap(), 2.0);
    }

    #[test]
    fn gamma_rejects_nonpositive_cost() {
        let mut scn = builtin_linear2d();
        scn.running_cost = Arc::new(|s, _, _| s[0]);
        scn.gamma = None;
        assert!(matches!(
            compute_gamma(&scn, &grid2d(11)),
            Err(ScenarioError::NonpositiveCostFloor(_))
        ));
    }

    #[test]
    fn gamma_generic_sampling_is_deflated_lower_bound() {
        let mut scn = builtin_linear2d();
        scn.running_cost = Arc::new(|s, a, b| 1.0 + 0.5 * (s[0].abs() + a[0].abs() + b[0].abs()));
        scn.gamma = None;
        scn.control_structure = ControlStructure::generic();
        let g = compute_gamma(&scn, &grid2d(11)).unwrap();
        assert!(g <= 1.0 && g >= 0.98);
    }

    #[test]
    fn gamma_is_certified_lower_bound_on_samples() {
        use rand::{Rng, SeedableRng};
        let scn = builtin_pursuit(0.1);
        let grid = Grid::new(
            vec![-5.0, -10.0, 0.0],
            vec![20.0, 10.0, std::f64::consts::TAU],
            vec![9, 9, 9],
            vec![false, false, true],
        )
        .unwrap();
        let gamma = compute_gamma(&scn, &grid).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let mut idx = [0usize; 3];
        for _ in 0..10_000 {
            for (d, i) in idx.iter_mut().enumerate() {
                *i = rng.gen_range(0..grid.counts()[d]);
            }
            let s = grid.state_unchecked(&idx);
            let a = random_control(&scn.control_a, &mut rng);
            let b = random_control(&scn.control_b, &mut rng);
            assert!((scn.running_cost)(&s, &a, &b) >= gamma);
        }
    }

    #[test]
    fn analytic_tube_membership() {
        assert!(analytic_rt_linear2d(&[0.0, 0.4]));
        assert!(analytic_rt_linear2d(&[-0.5, 0.625]));
        assert!(!analytic_rt_linear2d(&[-2.0, 1.5]));
        // Wedge and reflected wedge.
        assert!(analytic_rt_linear2d(&[1.5, 2.0]));
        assert!(analytic_rt_linear2d(&[-1.5, -2.0]));
        assert!(!analytic_rt_linear2d(&[-1.5, 2.0]));
    }

    #[test]
    fn sampled_dynamics_bound_is_finite_and_positive() {
        let scn = builtin_linear2d();
        let b = scn.sampled_dynamics_bound(&grid2d(21), 1000, 7).unwrap();
        assert!(b[0] > 0.0 && b[0] <= 1.0);
        assert!(b[1] > 0.0 && b[1] <= 3.0);
    }
}
