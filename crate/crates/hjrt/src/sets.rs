//! Sublevel-set extraction, the Jaccard set metric, and mask morphology.
//!
//! All set accuracy claims reduce to operations on [`LevelMask`]: a boolean
//! per grid node. Volume is node counting; no sub-cell reconstruction.

use std::sync::Arc;

use thiserror::Error;

use crate::grid::{Grid, ValueField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SetsError {
    #[error("masks live on different grids")]
    GridMismatch,
}

/// Where a mask came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskSource {
    Improved,
    Classical,
    Analytic,
}

impl std::fmt::Display for MaskSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MaskSource::Improved => "improved",
            MaskSource::Classical => "classical",
            MaskSource::Analytic => "analytic",
        })
    }
}

impl std::str::FromStr for MaskSource {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "improved" => Ok(MaskSource::Improved),
            "classical" => Ok(MaskSource::Classical),
            "analytic" => Ok(MaskSource::Analytic),
            other => Err(format!("unknown mask source `{other}`")),
        }
    }
}

/// Boolean per-node membership of a sublevel set.
#[derive(Debug, Clone)]
pub struct LevelMask {
    grid: Arc<Grid>,
    member: Vec<bool>,
    /// The threshold the mask was cut at (cost or seconds).
    pub level: f64,
    pub source: MaskSource,
}

impl LevelMask {
    pub fn new(grid: Arc<Grid>, member: Vec<bool>, level: f64, source: MaskSource) -> Self {
        assert_eq!(member.len(), grid.num_nodes());
        LevelMask { grid, member, level, source }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn member(&self) -> &[bool] {
        &self.member
    }

    /// Number of member nodes (the counting-measure volume).
    pub fn count(&self) -> usize {
        self.member.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.member.iter().any(|&m| m)
    }

    pub fn same_grid(&self, other: &LevelMask) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn is_subset(&self, other: &LevelMask) -> Result<bool, SetsError> {
        if !self.same_grid(other) {
            return Err(SetsError::GridMismatch);
        }
        Ok(self
            .member
            .iter()
            .zip(&other.member)
            .all(|(&a, &b)| !a || b))
    }

    /// Peel `cells` layers off the mask: a node survives when every node
    /// within Chebyshev radius `cells` is a member. Periodic dimensions wrap;
    /// beyond a non-periodic edge counts as member, so touching the domain
    /// boundary alone does not erode.
    pub fn erode(&self, cells: usize) -> LevelMask {
        self.morph(cells, true)
    }

    /// Grow the mask by `cells` layers (Chebyshev ball).
    pub fn dilate(&self, cells: usize) -> LevelMask {
        self.morph(cells, false)
    }

    fn morph(&self, cells: usize, erode: bool) -> LevelMask {
        let grid = &*self.grid;
        let dim = grid.dim();
        let r = cells as isize;
        let mut out = vec![false; self.member.len()];
        let mut idx = vec![0usize; dim];
        let mut offset = vec![-r; dim];
        for (flat, slot) in out.iter_mut().enumerate() {
            grid.unflatten(flat, &mut idx);
            // Erosion: all neighbors member. Dilation: any neighbor member.
            let mut acc = erode;
            offset.iter_mut().for_each(|o| *o = -r);
            'offsets: loop {
                let mut neighbor = 0usize;
                let mut in_domain = true;
                for d in 0..dim {
                    let mut i = idx[d] as isize + offset[d];
                    let n = grid.counts()[d] as isize;
                    if grid.periodic()[d] {
                        i = i.rem_euclid(n);
                    } else if i < 0 || i >= n {
                        in_domain = false;
                        break;
                    }
                    neighbor += i as usize * stride(grid, d);
                }
                if in_domain {
                    let m = self.member[neighbor];
                    if erode && !m {
                        acc = false;
                        break 'offsets;
                    }
                    if !erode && m {
                        acc = true;
                        break 'offsets;
                    }
                }
                // Advance the offset block.
                let mut d = dim;
                loop {
                    if d == 0 {
                        break 'offsets;
                    }
                    d -= 1;
                    offset[d] += 1;
                    if offset[d] <= r {
                        break;
                    }
                    offset[d] = -r;
                }
            }
            *slot = acc;
        }
        LevelMask::new(self.grid.clone(), out, self.level, self.source)
    }

    /// Nodes adjacent (by face) to a node of opposite membership — both
    /// sides of every interface.
    pub fn boundary(&self) -> LevelMask {
        let grid = &*self.grid;
        let dim = grid.dim();
        let mut out = vec![false; self.member.len()];
        let mut idx = vec![0usize; dim];
        for (flat, slot) in out.iter_mut().enumerate() {
            grid.unflatten(flat, &mut idx);
            let me = self.member[flat];
            'scan: for d in 0..dim {
                for step in [-1isize, 1] {
                    if let Some(nb) = grid.neighbor(flat, &idx, d, step) {
                        if self.member[nb] != me {
                            *slot = true;
                            break 'scan;
                        }
                    }
                }
            }
        }
        LevelMask::new(self.grid.clone(), out, self.level, self.source)
    }

    /// Nodes where the two masks disagree.
    pub fn symmetric_difference(&self, other: &LevelMask) -> Result<Vec<usize>, SetsError> {
        if !self.same_grid(other) {
            return Err(SetsError::GridMismatch);
        }
        Ok(self
            .member
            .iter()
            .zip(&other.member)
            .enumerate()
            .filter_map(|(i, (&a, &b))| (a != b).then_some(i))
            .collect())
    }
}

#[inline]
fn stride(grid: &Grid, d: usize) -> usize {
    grid.counts()[d + 1..].iter().product()
}

/// Extract the mask `{values ≤ level}` from a field slice.
pub fn sublevel(field: &ValueField, level: f64, source: MaskSource) -> LevelMask {
    assert!(level.is_finite(), "sublevel threshold must be finite");
    let member = field.values().iter().map(|&v| v <= level).collect();
    LevelMask::new(field.grid().clone(), member, level, source)
}

/// Jaccard relative volume error `1 - |X∩Y| / |X∪Y|`; 0 when both are empty.
pub fn jaccard_error(x: &LevelMask, y: &LevelMask) -> Result<f64, SetsError> {
    if !x.same_grid(y) {
        return Err(SetsError::GridMismatch);
    }
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&a, &b) in x.member.iter().zip(&y.member) {
        inter += (a && b) as usize;
        union += (a || b) as usize;
    }
    if union == 0 {
        return Ok(0.0);
    }
    Ok(1.0 - inter as f64 / union as f64)
}

/// Evaluate a membership predicate at every grid node.
pub fn rasterize_analytic(grid: &Arc<Grid>, predicate: impl Fn(&[f64]) -> bool) -> LevelMask {
    let mut member = Vec::with_capacity(grid.num_nodes());
    let mut idx = vec![0usize; grid.dim()];
    loop {
        member.push(predicate(&grid.state_unchecked(&idx)));
        if !grid.next_index(&mut idx) {
            break;
        }
    }
    LevelMask::new(grid.clone(), member, 0.0, MaskSource::Analytic)
}

/// True when masks sorted by ascending level are pairwise nested.
pub fn nesting_check(masks: &[LevelMask]) -> bool {
    masks
        .windows(2)
        .all(|pair| pair[0].is_subset(&pair[1]).unwrap_or(false))
}

/// `inner ⊆ outer` after peeling `cells` layers off `inner`: subsets up to a
/// boundary band.
pub fn subset_within_band(inner: &LevelMask, outer: &LevelMask, cells: usize) -> Result<bool, SetsError> {
    inner.erode(cells).is_subset(outer)
}

/// The two masks agree except within `cells` of their boundaries.
pub fn equal_within_band(a: &LevelMask, b: &LevelMask, cells: usize) -> Result<bool, SetsError> {
    Ok(subset_within_band(a, b, cells)? && subset_within_band(b, a, cells)?)
}

/// Every disagreeing node lies inside the dilation of the masks' combined
/// boundary: `symdiff(a, b) ⊆ dilate_cells(boundary(a) ∪ boundary(b))`.
pub fn symdiff_within_boundary_band(
    a: &LevelMask,
    b: &LevelMask,
    cells: usize,
) -> Result<bool, SetsError> {
    let diff = a.symmetric_difference(b)?;
    let ba = a.boundary();
    let bb = b.boundary();
    let both: Vec<bool> = ba
        .member()
        .iter()
        .zip(bb.member())
        .map(|(&x, &y)| x || y)
        .collect();
    let band = LevelMask::new(a.grid().clone(), both, 0.0, a.source).dilate(cells);
    Ok(diff.iter().all(|&i| band.member()[i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::scenario::analytic_rt_linear2d;
    use proptest::prelude::*;

    fn grid2d(n: usize) -> Arc<Grid> {
        Arc::new(
            Grid::new(vec![-2.0, -2.0], vec![2.0, 2.0], vec![n, n], vec![false, false]).unwrap(),
        )
    }

    fn mask_from(grid: &Arc<Grid>, bits: &[bool], level: f64) -> LevelMask {
        LevelMask::new(grid.clone(), bits.to_vec(), level, MaskSource::Analytic)
    }

    #[test]
    fn sublevel_thresholds_inclusively() {
        let grid = Arc::new(Grid::new(vec![0.0], vec![1.0], vec![5], vec![false]).unwrap());
        let f = ValueField::new(grid.clone(), vec![0.0, 0.5, 1.0, 1.5, 2.0], 0.0, 1.0).unwrap();
        let m = sublevel(&f, 1.0, MaskSource::Improved);
        assert_eq!(m.member(), &[true, true, true, false, false]);
        assert_eq!(m.count(), 3);
        let all = sublevel(&f, 10.0, MaskSource::Improved);
        assert_eq!(all.count(), 5);
    }

    #[test]
    fn jaccard_identities() {
        let grid = grid2d(3);
        let x = mask_from(&grid, &[true, true, false, false, false, false, false, false, false], 0.0);
        let y = mask_from(&grid, &[false, false, true, true, false, false, false, false, false], 0.0);
        assert_eq!(jaccard_error(&x, &x).unwrap(), 0.0);
        assert_eq!(jaccard_error(&x, &y).unwrap(), 1.0);
        let empty = mask_from(&grid, &[false; 9], 0.0);
        assert_eq!(jaccard_error(&empty, &empty).unwrap(), 0.0);
    }

    #[test]
    fn jaccard_half_overlap() {
        // |X| = |Y| = 2k, |X∩Y| = k ⇒ error = 1 - k / 3k = 2/3.
        let grid = grid2d(3);
        let x = mask_from(&grid, &[true, true, true, true, false, false, false, false, false], 0.0);
        let y = mask_from(&grid, &[false, false, true, true, true, true, false, false, false], 0.0);
        assert!((jaccard_error(&x, &y).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn jaccard_rejects_grid_mismatch() {
        let a = mask_from(&grid2d(3), &[false; 9], 0.0);
        let b = mask_from(&grid2d(4), &[false; 16], 0.0);
        assert_eq!(jaccard_error(&a, &b), Err(SetsError::GridMismatch));
    }

    #[test]
    fn rasterize_small_grid_examples() {
        let grid = grid2d(3);
        let m = rasterize_analytic(&grid, analytic_rt_linear2d);
        // Node (1,1) is the origin, inside the target band.
        assert!(m.member()[grid.flat(&[1, 1])]);
        assert!(!m.member()[grid.flat(&[0, 2])]); // (-2, 2)
        assert!(!m.member()[grid.flat(&[2, 0])]); // (2, -2)
        let empty = rasterize_analytic(&grid, |_| false);
        assert!(empty.is_empty());
    }

    #[test]
    fn rasterized_target_band_is_horizontal() {
        let grid = grid2d(41);
        let m = rasterize_analytic(&grid, |s| s[1].abs() <= 0.5);
        let mut idx = [0usize; 2];
        for flat in 0..grid.num_nodes() {
            grid.unflatten(flat, &mut idx);
            let s = grid.node_to_state(&idx).unwrap();
            assert_eq!(m.member()[flat], s[1].abs() <= 0.5);
        }
    }

    #[test]
    fn nesting_detects_flips() {
        let grid = Arc::new(Grid::new(vec![0.0], vec![1.0], vec![5], vec![false]).unwrap());
        let masks = vec![
            mask_from(&grid, &[false, false, true, false, false], 0.25),
            mask_from(&grid, &[false, true, true, true, false], 0.5),
            mask_from(&grid, &[true, true, true, true, true], 0.75),
        ];
        assert!(nesting_check(&masks));
        let mut broken = masks.clone();
        broken[1] = mask_from(&grid, &[false, true, false, true, false], 0.5);
        assert!(!nesting_check(&broken));
    }

    #[test]
    fn erosion_respects_bands_and_domain_edges() {
        let grid = Arc::new(Grid::new(vec![0.0], vec![1.0], vec![7], vec![false]).unwrap());
        // Members 0..=4; boundary with non-members at 5.
        let m = mask_from(&grid, &[true, true, true, true, true, false, false], 0.0);
        let e = m.erode(1);
        // Node 0 keeps membership (domain edge is not a mask boundary);
        // node 4 erodes (neighbor 5 is out).
        assert_eq!(e.member(), &[true, true, true, true, false, false, false]);
        assert!(subset_within_band(&m, &e, 1).unwrap());
        assert!(equal_within_band(&m, &e, 1).unwrap());
        // A two-cell shift is not within a one-cell band.
        let shifted = mask_from(&grid, &[true, true, true, false, false, false, false], 0.0);
        assert!(!equal_within_band(&m, &shifted, 1).unwrap());
    }

    #[test]
    fn erosion_wraps_periodic_dimensions() {
        let grid = Arc::new(Grid::new(vec![0.0], vec![1.0], vec![6], vec![true]).unwrap());
        let m = mask_from(&grid, &[true, false, false, false, true, true], 0.0);
        let e = m.erode(1);
        // Node 5's neighbors are 4 and 0 (wrap), all members: survives.
        assert_eq!(e.member(), &[false, false, false, false, false, true]);
    }

    proptest! {
        /// Sublevel extraction is monotone in the level.
        #[test]
        fn sublevel_monotone(values in proptest::collection::vec(-5.0f64..5.0, 25),
                             l1 in -5.0f64..5.0, l2 in -5.0f64..5.0) {
            let grid = grid2d(5);
            let f = ValueField::new(grid, values, 0.0, 1.0).unwrap();
            let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
            let small = sublevel(&f, lo, MaskSource::Improved);
            let big = sublevel(&f, hi, MaskSource::Improved);
            prop_assert!(small.is_subset(&big).unwrap());
        }

        /// Jaccard error is symmetric and vanishes exactly on equal masks.
        #[test]
        fn jaccard_symmetry(bits_a in proptest::collection::vec(proptest::bool::ANY, 25),
                            bits_b in proptest::collection::vec(proptest::bool::ANY, 25)) {
            let grid = grid2d(5);
            let a = mask_from(&grid, &bits_a, 0.0);
            let b = mask_from(&grid, &bits_b, 0.0);
            let ab = jaccard_error(&a, &b).unwrap();
            let ba = jaccard_error(&b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(ab == 0.0, bits_a == bits_b);
        }
    }
}
