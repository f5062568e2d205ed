//! Inner two-player optimization `min_a max_b { ĉ + p·f̂ }` and its monotone
//! Lax-Friedrichs numerical counterpart.
//!
//! For channel-separable affine-quadratic scenarios the saddle point is exact:
//! each control channel contributes a one-dimensional quadratic (or affine)
//! term, minimized or maximized in closed form over its interval. The
//! quadratic coefficients are recovered from three probes of the objective
//! per channel, so the scenario stays a black box. Generic scenarios fall
//! back to exhaustive search over a control lattice.
//!
//! The dissipation bounds `α_i` are per-node bounds on `|∂H/∂p_i|`, taken as
//! the maximum of `|f̂_i|` over the control-box corners (affine dynamics) or
//! the control lattice (generic).

use arrayvec::ArrayVec;

use crate::grid::{State, MAX_DIM};
use crate::scenario::{lattice_walk, Control, ControlStructure, Scenario};

/// Relative curvature below which a probed channel is treated as affine.
const CURVATURE_TOL: f64 = 1e-9;

/// Result of one saddle-point evaluation.
#[derive(Debug, Clone)]
pub struct HamiltonianSample {
    /// `min_a max_b { ĉ(s,a,b) + p·f̂(s,a,b) }`.
    pub value: f64,
    /// Player-I control attaining the outer minimum.
    pub argmin_a: Control,
    /// Player-II control attaining the inner maximum.
    pub argmax_b: Control,
    /// Per-dimension dissipation bounds `α_i ≥ max |∂H/∂p_i|`.
    pub alpha: State,
}

/// Which objective the saddle search optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ObjectiveKind {
    /// `ĉ + p·f̂`: running-cost game on target-masked dynamics.
    MaskedCostFlow,
    /// `p·f`: raw flow only, no running cost (classical level-set core).
    RawFlow,
}

/// Fit `y(δ) = q δ² + l δ + c` through samples at `δ = -h, 0, +h`.
#[inline]
pub(crate) fn fit_channel_quadratic(y_lo: f64, y_mid: f64, y_hi: f64, h: f64) -> (f64, f64) {
    let q = (y_lo + y_hi - 2.0 * y_mid) / (2.0 * h * h);
    let l = (y_hi - y_lo) / (2.0 * h);
    (q, l)
}

/// Zero out curvature that is negligible against the probe magnitudes, so
/// exactly-affine channels take the endpoint branch.
#[inline]
pub(crate) fn threshold_curvature(q: f64, h: f64, scale: f64) -> f64 {
    if q.abs() * h * h <= CURVATURE_TOL * scale {
        0.0
    } else {
        q
    }
}

/// Argmin offset and attained value of `q δ² + l δ` over `δ ∈ [-h, h]`.
/// Ties between endpoints break toward the smaller control value.
#[inline]
pub(crate) fn channel_contribution_min(q: f64, l: f64, h: f64) -> (f64, f64) {
    if h == 0.0 {
        return (0.0, 0.0);
    }
    if q > 0.0 {
        let d = (-l / (2.0 * q)).clamp(-h, h);
        return (d, q * d * d + l * d);
    }
    // Affine or concave: minimum at an endpoint.
    let g_lo = q * h * h - l * h;
    let g_hi = q * h * h + l * h;
    if g_lo <= g_hi {
        (-h, g_lo)
    } else {
        (h, g_hi)
    }
}

/// Argmax offset and attained value of `q δ² + l δ` over `δ ∈ [-h, h]`.
#[inline]
pub(crate) fn channel_contribution_max(q: f64, l: f64, h: f64) -> (f64, f64) {
    if h == 0.0 {
        return (0.0, 0.0);
    }
    if q < 0.0 {
        let d = (-l / (2.0 * q)).clamp(-h, h);
        return (d, q * d * d + l * d);
    }
    let g_lo = q * h * h - l * h;
    let g_hi = q * h * h + l * h;
    if g_lo >= g_hi {
        (-h, g_lo)
    } else {
        (h, g_hi)
    }
}

/// Argmin offset of a quadratic channel given raw (unthresholded) curvature.
#[inline]
pub(crate) fn minimize_channel(q: f64, l: f64, h: f64, scale: f64) -> f64 {
    channel_contribution_min(threshold_curvature(q, h, scale), l, h).0
}

/// One control channel of the separable objective, linearized about the
/// channel midpoint: cost part `q δ² + l_cost δ`, flow part `δ (p·f_slope)`.
#[derive(Debug, Clone)]
pub(crate) struct ChannelCoeffs {
    pub q: f64,
    pub l_cost: f64,
    pub f_slope: State,
    pub mid: f64,
    pub half: f64,
}

/// Probed coefficients of the separable objective at one state.
#[derive(Debug, Clone)]
pub(crate) struct SaddleCoeffs {
    /// Node inside the target set under the masked objective: everything is
    /// zero and the saddle is trivial.
    pub frozen: bool,
    pub f_mid: State,
    pub c_mid: f64,
    pub a: ArrayVec<ChannelCoeffs, MAX_DIM>,
    pub b: ArrayVec<ChannelCoeffs, MAX_DIM>,
    pub alpha: State,
}

impl SaddleCoeffs {
    pub(crate) fn extract(scn: &Scenario, s: &[f64], kind: ObjectiveKind) -> SaddleCoeffs {
        let dim = scn.state_dim;
        let zeros = || -> State { (0..dim).map(|_| 0.0).collect() };
        if kind == ObjectiveKind::MaskedCostFlow && scn.in_target(s) {
            return SaddleCoeffs {
                frozen: true,
                f_mid: zeros(),
                c_mid: 0.0,
                a: ArrayVec::new(),
                b: ArrayVec::new(),
                alpha: zeros(),
            };
        }
        let a_mid = scn.control_a.midpoint();
        let b_mid = scn.control_b.midpoint();
        let f_mid = (scn.dynamics)(s, &a_mid, &b_mid);
        let with_cost = kind == ObjectiveKind::MaskedCostFlow;
        let c_mid = if with_cost {
            (scn.running_cost)(s, &a_mid, &b_mid)
        } else {
            0.0
        };

        let probe = |is_a: bool, k: usize| -> ChannelCoeffs {
            let bx = if is_a { &scn.control_a } else { &scn.control_b };
            let (lo, hi) = (bx.lo()[k], bx.hi()[k]);
            let mid = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo);
            if half == 0.0 {
                return ChannelCoeffs { q: 0.0, l_cost: 0.0, f_slope: zeros(), mid, half };
            }
            let mut a = a_mid.clone();
            let mut b = b_mid.clone();
            let set = |a: &mut Control, b: &mut Control, u: f64| {
                if is_a {
                    a[k] = u;
                } else {
                    b[k] = u;
                }
            };
            set(&mut a, &mut b, hi);
            let f_hi = (scn.dynamics)(s, &a, &b);
            let f_slope: State = (0..dim).map(|d| (f_hi[d] - f_mid[d]) / half).collect();
            let (q, l_cost) = if with_cost {
                let y_hi = (scn.running_cost)(s, &a, &b);
                set(&mut a, &mut b, lo);
                let y_lo = (scn.running_cost)(s, &a, &b);
                let (q, l) = fit_channel_quadratic(y_lo, c_mid, y_hi, half);
                let scale = y_lo.abs().max(c_mid.abs()).max(y_hi.abs()).max(1.0);
                (threshold_curvature(q, half, scale), l)
            } else {
                (0.0, 0.0)
            };
            ChannelCoeffs { q, l_cost, f_slope, mid, half }
        };

        let a: ArrayVec<ChannelCoeffs, MAX_DIM> =
            (0..scn.control_a.channels()).map(|k| probe(true, k)).collect();
        let b: ArrayVec<ChannelCoeffs, MAX_DIM> =
            (0..scn.control_b.channels()).map(|k| probe(false, k)).collect();

        // Dissipation bound: |f| is maximized at a corner of the joint
        // control box because the dynamics are affine in the controls.
        let mut alpha = zeros();
        let active: Vec<&ChannelCoeffs> =
            a.iter().chain(b.iter()).filter(|c| c.half > 0.0).collect();
        for corner in 0u32..(1u32 << active.len()) {
            for d in 0..dim {
                let mut fd = f_mid[d];
                for (j, ch) in active.iter().enumerate() {
                    let sign = if corner >> j & 1 == 1 { 1.0 } else { -1.0 };
                    fd += sign * ch.half * ch.f_slope[d];
                }
                alpha[d] = alpha[d].max(fd.abs());
            }
        }
        SaddleCoeffs { frozen: false, f_mid, c_mid, a, b, alpha }
    }

    /// Closed-form saddle of the separable objective at costate `p`.
    pub(crate) fn saddle(&self, p: &[f64]) -> HamiltonianSample {
        if self.frozen {
            return HamiltonianSample {
                value: 0.0,
                argmin_a: self.a.iter().map(|c| c.mid).collect(),
                argmax_b: self.b.iter().map(|c| c.mid).collect(),
                alpha: self.alpha.clone(),
            };
        }
        let mut value = self.c_mid + dot(p, &self.f_mid);
        let mut argmin_a = Control::new();
        for ch in &self.a {
            let l = ch.l_cost + dot(p, &ch.f_slope);
            let (d, contrib) = channel_contribution_min(ch.q, l, ch.half);
            value += contrib;
            argmin_a.push(ch.mid + d);
        }
        let mut argmax_b = Control::new();
        for ch in &self.b {
            let l = ch.l_cost + dot(p, &ch.f_slope);
            let (d, contrib) = channel_contribution_max(ch.q, l, ch.half);
            value += contrib;
            argmax_b.push(ch.mid + d);
        }
        HamiltonianSample { value, argmin_a, argmax_b, alpha: self.alpha.clone() }
    }
}

#[inline]
fn dot(p: &[f64], f: &[f64]) -> f64 {
    p.iter().zip(f).map(|(a, b)| a * b).sum()
}

/// Exhaustive saddle search over an evenly spaced control lattice.
///
/// Lattices are visited in ascending channel order with strict-improvement
/// updates, so ties break toward the smaller control value.
pub(crate) fn lattice_saddle(
    scn: &Scenario,
    s: &[f64],
    p: &[f64],
    points: usize,
    kind: ObjectiveKind,
) -> HamiltonianSample {
    let dim = scn.state_dim;
    let zeros = || -> State { (0..dim).map(|_| 0.0).collect() };
    if kind == ObjectiveKind::MaskedCostFlow && scn.in_target(s) {
        return HamiltonianSample {
            value: 0.0,
            argmin_a: scn.control_a.midpoint(),
            argmax_b: scn.control_b.midpoint(),
            alpha: zeros(),
        };
    }
    let with_cost = kind == ObjectiveKind::MaskedCostFlow;
    let mut alpha = zeros();
    let mut best_outer = f64::INFINITY;
    let mut argmin_a = scn.control_a.midpoint();
    let mut argmax_b = scn.control_b.midpoint();
    let mut a_scratch = scn.control_a.midpoint();
    let mut b_scratch = scn.control_b.midpoint();
    lattice_walk(&scn.control_a, points, &mut a_scratch, &mut |a| {
        let mut best_inner = f64::NEG_INFINITY;
        let mut inner_b = scn.control_b.midpoint();
        lattice_walk(&scn.control_b, points, &mut b_scratch, &mut |b| {
            let f = (scn.dynamics)(s, a, b);
            for d in 0..dim {
                alpha[d] = alpha[d].max(f[d].abs());
            }
            let mut v = dot(p, &f);
            if with_cost {
                v += (scn.running_cost)(s, a, b);
            }
            if v > best_inner {
                best_inner = v;
                inner_b = b.clone();
            }
        });
        if best_inner < best_outer {
            best_outer = best_inner;
            argmin_a = a.clone();
            argmax_b = inner_b;
        }
    });
    HamiltonianSample { value: best_outer, argmin_a, argmax_b, alpha }
}

/// Saddle value, optimizing controls, and dissipation bounds of
/// `min_a max_b { ĉ(s,a,b) + p·f̂(s,a,b) }` at one state and costate.
pub fn optimize_controls(scn: &Scenario, s: &[f64], p: &[f64]) -> HamiltonianSample {
    debug_assert_eq!(p.len(), scn.state_dim);
    match scn.control_structure {
        ControlStructure::AffineQuadratic => {
            SaddleCoeffs::extract(scn, s, ObjectiveKind::MaskedCostFlow).saddle(p)
        }
        ControlStructure::Generic { lattice } => {
            lattice_saddle(scn, s, p, lattice, ObjectiveKind::MaskedCostFlow)
        }
    }
}

/// Lax-Friedrichs numerical Hamiltonian
/// `H((p⁻+p⁺)/2) - Σ_i α_i (p⁺_i - p⁻_i)/2`.
///
/// Consistent with `optimize_controls` when both one-sided costates agree.
/// The dissipation is oriented for forward time marching; the backward
/// solver obtains its upwind rate by swapping the two arguments.
pub fn numerical_hamiltonian(scn: &Scenario, s: &[f64], p_minus: &[f64], p_plus: &[f64]) -> f64 {
    let p_bar: State = p_minus
        .iter()
        .zip(p_plus)
        .map(|(m, p)| 0.5 * (m + p))
        .collect();
    let sample = optimize_controls(scn, s, &p_bar);
    let mut diss = 0.0;
    for d in 0..scn.state_dim {
        diss += sample.alpha[d] * (p_plus[d] - p_minus[d]);
    }
    sample.value - 0.5 * diss
}
