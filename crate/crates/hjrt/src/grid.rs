//! Cartesian discretization of the computational domain and nodal scalar fields.
//!
//! A [`Grid`] is a rectangular box `[lo_0, hi_0] × ... × [lo_{d-1}, hi_{d-1}]`
//! discretized into a lattice of nodes, stored row-major with the last
//! dimension fastest. Non-periodic dimensions are node-centered and include
//! both endpoints (spacing `(hi-lo)/(n-1)`); periodic dimensions use cell-style
//! spacing `(hi-lo)/n` so the first node and the wrap point are not duplicated.
//!
//! A [`ValueField`] stores one `f64` per node: a single time slice of the
//! value function the solver marches, together with its time label and the
//! horizon the backward solve started from.

use std::sync::Arc;

use arrayvec::ArrayVec;
use thiserror::Error;

/// Maximum supported number of state dimensions.
pub const MAX_DIM: usize = 4;

/// A state vector (or any per-dimension quantity) on the stack.
pub type State = ArrayVec<f64, MAX_DIM>;

/// Build a [`State`] from a slice.
pub fn state_from(xs: &[f64]) -> State {
    xs.iter().copied().collect()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("dimension count {0} not in 1..={MAX_DIM}")]
    BadDimension(usize),
    #[error("bounds_lo[{0}] must be strictly below bounds_hi[{0}]")]
    BadBounds(usize),
    #[error("counts[{0}] = {1} but stencils need at least 3 nodes")]
    BadCounts(usize, usize),
    #[error("per-dimension vectors have mismatched lengths")]
    LengthMismatch,
    #[error("index {index} out of range for dimension {dim} (count {count})")]
    IndexOutOfRange { dim: usize, index: usize, count: usize },
    #[error("field has {got} values but the grid has {want} nodes")]
    FieldLength { got: usize, want: usize },
    #[error("non-finite value at node {0}")]
    NonFinite(usize),
}

/// Immutable description of the computational lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    bounds_lo: Vec<f64>,
    bounds_hi: Vec<f64>,
    counts: Vec<usize>,
    periodic: Vec<bool>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
    num_nodes: usize,
}

impl Grid {
    pub fn new(
        bounds_lo: Vec<f64>,
        bounds_hi: Vec<f64>,
        counts: Vec<usize>,
        periodic: Vec<bool>,
    ) -> Result<Self, GridError> {
        let dim = bounds_lo.len();
        if dim == 0 || dim > MAX_DIM {
            return Err(GridError::BadDimension(dim));
        }
        if bounds_hi.len() != dim || counts.len() != dim || periodic.len() != dim {
            return Err(GridError::LengthMismatch);
        }
        for d in 0..dim {
            if !(bounds_lo[d] < bounds_hi[d])
                || !bounds_lo[d].is_finite()
                || !bounds_hi[d].is_finite()
            {
                return Err(GridError::BadBounds(d));
            }
            if counts[d] < 3 {
                return Err(GridError::BadCounts(d, counts[d]));
            }
        }
        let spacing: Vec<f64> = (0..dim)
            .map(|d| {
                let span = bounds_hi[d] - bounds_lo[d];
                if periodic[d] {
                    span / counts[d] as f64
                } else {
                    span / (counts[d] - 1) as f64
                }
            })
            .collect();
        // Row-major, last dimension fastest.
        let mut strides = vec![1usize; dim];
        for d in (0..dim.saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * counts[d + 1];
        }
        let num_nodes = counts.iter().product();
        Ok(Grid {
            bounds_lo,
            bounds_hi,
            counts,
            periodic,
            spacing,
            strides,
            num_nodes,
        })
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn bounds_lo(&self) -> &[f64] {
        &self.bounds_lo
    }

    pub fn bounds_hi(&self) -> &[f64] {
        &self.bounds_hi
    }

    pub fn periodic(&self) -> &[bool] {
        &self.periodic
    }

    /// Node spacing per dimension.
    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// State-space coordinate of one node along dimension `d`.
    ///
    /// The last node of a non-periodic dimension returns `bounds_hi[d]`
    /// exactly; interior nodes use `lo + (i * span) / divisor`, which keeps
    /// symmetric midpoints exact.
    #[inline]
    pub fn coord(&self, d: usize, i: usize) -> f64 {
        let n = self.counts[d];
        if !self.periodic[d] && i == n - 1 {
            return self.bounds_hi[d];
        }
        let span = self.bounds_hi[d] - self.bounds_lo[d];
        let divisor = if self.periodic[d] { n } else { n - 1 } as f64;
        self.bounds_lo[d] + (i as f64 * span) / divisor
    }

    /// State-space coordinates of the node at `index`.
    pub fn node_to_state(&self, index: &[usize]) -> Result<State, GridError> {
        if index.len() != self.dim() {
            return Err(GridError::LengthMismatch);
        }
        for (d, &i) in index.iter().enumerate() {
            if i >= self.counts[d] {
                return Err(GridError::IndexOutOfRange {
                    dim: d,
                    index: i,
                    count: self.counts[d],
                });
            }
        }
        Ok(self.state_unchecked(index))
    }

    #[inline]
    pub(crate) fn state_unchecked(&self, index: &[usize]) -> State {
        (0..self.dim()).map(|d| self.coord(d, index[d])).collect()
    }

    /// Flat storage offset of a multi-index.
    #[inline]
    pub fn flat(&self, index: &[usize]) -> usize {
        index
            .iter()
            .zip(&self.strides)
            .map(|(&i, &s)| i * s)
            .sum()
    }

    /// Decode a flat offset into `out`.
    #[inline]
    pub fn unflatten(&self, mut flat: usize, out: &mut [usize]) {
        for d in 0..self.dim() {
            out[d] = flat / self.strides[d];
            flat %= self.strides[d];
        }
    }

    /// Advance a multi-index in flat (last-dimension-fastest) order.
    /// Returns false once the index wraps past the end.
    #[inline]
    pub fn next_index(&self, index: &mut [usize]) -> bool {
        for d in (0..self.dim()).rev() {
            index[d] += 1;
            if index[d] < self.counts[d] {
                return true;
            }
            index[d] = 0;
        }
        false
    }

    /// Flat offset of the neighbor one node over in dimension `d`.
    ///
    /// Periodic dimensions wrap. Non-periodic dimensions return `None` past
    /// the edge; callers supply the extrapolated ghost there.
    #[inline]
    pub fn neighbor(&self, flat: usize, index: &[usize], d: usize, step: isize) -> Option<usize> {
        let i = index[d] as isize + step;
        let n = self.counts[d] as isize;
        if i >= 0 && i < n {
            return Some((flat as isize + step * self.strides[d] as isize) as usize);
        }
        if self.periodic[d] {
            let wrapped = i.rem_euclid(n);
            let delta = wrapped - index[d] as isize;
            return Some((flat as isize + delta * self.strides[d] as isize) as usize);
        }
        None
    }

    /// True when `s` lies inside the closed box on every non-periodic dimension.
    pub fn contains(&self, s: &[f64]) -> bool {
        s.iter().enumerate().all(|(d, &x)| {
            self.periodic[d] || (x >= self.bounds_lo[d] && x <= self.bounds_hi[d])
        })
    }
}

/// One stored time slice of the value function.
#[derive(Debug, Clone)]
pub struct ValueField {
    grid: Arc<Grid>,
    values: Vec<f64>,
    /// Time coordinate of this slice (seconds).
    pub time: f64,
    /// Terminal time the backward solve started from.
    pub horizon: f64,
}

impl ValueField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>, time: f64, horizon: f64) -> Result<Self, GridError> {
        if values.len() != grid.num_nodes() {
            return Err(GridError::FieldLength {
                got: values.len(),
                want: grid.num_nodes(),
            });
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite(bad));
        }
        Ok(ValueField { grid, values, time, horizon })
    }

    pub fn constant(grid: Arc<Grid>, value: f64, time: f64, horizon: f64) -> Self {
        let n = grid.num_nodes();
        ValueField { grid, values: vec![value; n], time, horizon }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// One-sided difference quotients `(D⁻, D⁺)` per dimension at a node.
    ///
    /// At a non-periodic edge the missing neighbor is the linear-extrapolation
    /// ghost `2 v[edge] - v[edge-1]`, which makes the missing one-sided
    /// difference equal the available one. Periodic dimensions wrap.
    pub fn gradient_upwind(&self, index: &[usize]) -> (State, State) {
        let flat = self.grid.flat(index);
        let mut minus = State::new();
        let mut plus = State::new();
        for d in 0..self.grid.dim() {
            let (m, p) = self.one_sided(flat, index, d);
            minus.push(m);
            plus.push(p);
        }
        (minus, plus)
    }

    #[inline]
    pub(crate) fn one_sided(&self, flat: usize, index: &[usize], d: usize) -> (f64, f64) {
        let dx = self.grid.spacing[d];
        let v = self.values[flat];
        let left = self.grid.neighbor(flat, index, d, -1);
        let right = self.grid.neighbor(flat, index, d, 1);
        match (left, right) {
            (Some(l), Some(r)) => ((v - self.values[l]) / dx, (self.values[r] - v) / dx),
            (None, Some(r)) => {
                // ghost = 2v - v[right] ⇒ backward difference equals forward.
                let fwd = (self.values[r] - v) / dx;
                (fwd, fwd)
            }
            (Some(l), None) => {
                let bwd = (v - self.values[l]) / dx;
                (bwd, bwd)
            }
            (None, None) => unreachable!("counts >= 3 guarantees a neighbor"),
        }
    }

    /// Multilinear interpolation of the field at a state-space point.
    ///
    /// Periodic dimensions wrap; non-periodic coordinates are clamped to the
    /// domain before interpolating.
    pub fn sample(&self, s: &[f64]) -> f64 {
        let grid = &*self.grid;
        let dim = grid.dim();
        let mut base = [0usize; MAX_DIM];
        let mut frac = [0.0f64; MAX_DIM];
        let mut wraps = [false; MAX_DIM];
        for d in 0..dim {
            let n = grid.counts[d];
            let u = (s[d] - grid.bounds_lo[d]) / grid.spacing[d];
            if grid.periodic[d] {
                let u = u.rem_euclid(n as f64);
                let b = u.floor() as usize % n;
                base[d] = b;
                frac[d] = u - u.floor();
                wraps[d] = true;
            } else {
                let u = u.clamp(0.0, (n - 1) as f64);
                let b = (u.floor() as usize).min(n - 2);
                base[d] = b;
                frac[d] = u - b as f64;
            }
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << dim) {
            let mut w = 1.0;
            let mut flat = 0usize;
            for d in 0..dim {
                let hi_side = corner >> d & 1 == 1;
                w *= if hi_side { frac[d] } else { 1.0 - frac[d] };
                let mut i = base[d] + hi_side as usize;
                if wraps[d] && i == grid.counts[d] {
                    i = 0;
                }
                flat += i * grid.strides[d];
            }
            if w != 0.0 {
                acc += w * self.values[flat];
            }
        }
        acc
    }
}
