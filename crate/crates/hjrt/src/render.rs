//! 2-D contour-slice rendering to SVG.
//!
//! Marching squares on a planar slice of a field (or the 0.5 level of a
//! mask's indicator), drawn in domain coordinates with axes and tick labels.
//! Rendering is a pure reader: it never touches the numeric artifacts.

use thiserror::Error;

use crate::grid::{Grid, ValueField};
use crate::sets::LevelMask;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("after fixing axes, {0} free dimensions remain; need exactly 2")]
    WrongFreeDims(usize),
    #[error("fixed axis {0} out of range")]
    BadAxis(usize),
}

pub enum RenderInput<'a> {
    Field(&'a ValueField),
    Mask(&'a LevelMask),
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 520.0;
const MARGIN: f64 = 52.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Render contour polylines of a 2-D slice at the given levels.
///
/// `fixed_axes` assigns a state coordinate to every dimension that should be
/// sliced away (nearest grid plane); exactly two dimensions must remain free.
/// Masks ignore `levels` and draw their membership boundary.
pub fn render_slice(
    input: &RenderInput,
    fixed_axes: &[(usize, f64)],
    levels: &[f64],
) -> Result<String, RenderError> {
    let grid: &Grid = match input {
        RenderInput::Field(f) => f.grid(),
        RenderInput::Mask(m) => m.grid(),
    };
    for &(d, _) in fixed_axes {
        if d >= grid.dim() {
            return Err(RenderError::BadAxis(d));
        }
    }
    let free: Vec<usize> = (0..grid.dim())
        .filter(|d| !fixed_axes.iter().any(|(fd, _)| fd == d))
        .collect();
    if free.len() != 2 {
        return Err(RenderError::WrongFreeDims(free.len()));
    }
    let (dx, dy) = (free[0], free[1]);
    let (nx, ny) = (grid.counts()[dx], grid.counts()[dy]);

    // Pull the slice values into a dense nx × ny panel.
    let mut idx = vec![0usize; grid.dim()];
    for &(d, coord) in fixed_axes {
        idx[d] = nearest_plane(grid, d, coord);
    }
    let mut panel = vec![0.0f64; nx * ny];
    for i in 0..nx {
        for j in 0..ny {
            idx[dx] = i;
            idx[dy] = j;
            let flat = grid.flat(&idx);
            panel[i * ny + j] = match input {
                RenderInput::Field(f) => f.values()[flat],
                RenderInput::Mask(m) => m.member()[flat] as u8 as f64,
            };
        }
    }
    let cut_levels: Vec<f64> = match input {
        RenderInput::Field(_) => levels.to_vec(),
        RenderInput::Mask(_) => vec![0.5],
    };

    let (lo_x, hi_x) = (grid.bounds_lo()[dx], grid.bounds_hi()[dx]);
    let (lo_y, hi_y) = (grid.bounds_lo()[dy], grid.bounds_hi()[dy]);
    let to_px = |x: f64, y: f64| -> (f64, f64) {
        let px = MARGIN + (x - lo_x) / (hi_x - lo_x) * (WIDTH - 2.0 * MARGIN);
        let py = HEIGHT - MARGIN - (y - lo_y) / (hi_y - lo_y) * (HEIGHT - 2.0 * MARGIN);
        (px, py)
    };
    let coord = |d: usize, i: usize| grid.coord(d, i);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    ));
    // Ticks and labels.
    for k in 0..=4 {
        let fx = lo_x + (hi_x - lo_x) * k as f64 / 4.0;
        let fy = lo_y + (hi_y - lo_y) * k as f64 / 4.0;
        let (px, _) = to_px(fx, lo_y);
        let (_, py) = to_px(lo_x, fy);
        svg.push_str(&format!(
            "<line x1=\"{px}\" y1=\"{}\" x2=\"{px}\" y2=\"{}\" stroke=\"black\"/>\n",
            HEIGHT - MARGIN,
            HEIGHT - MARGIN + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{px}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{fx:.3}</text>\n",
            HEIGHT - MARGIN + 18.0
        ));
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{py}\" x2=\"{MARGIN}\" y2=\"{py}\" stroke=\"black\"/>\n",
            MARGIN - 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{fy:.3}</text>\n",
            MARGIN - 8.0,
            py + 4.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">s{dx}</text>\n",
        WIDTH / 2.0,
        HEIGHT - 10.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">s{dy}</text>\n",
        HEIGHT / 2.0,
        HEIGHT / 2.0
    ));

    for (li, &level) in cut_levels.iter().enumerate() {
        let segments = marching_squares(&panel, nx, ny, level, &|i| coord(dx, i), &|j| {
            coord(dy, j)
        });
        if segments.is_empty() {
            continue;
        }
        let color = PALETTE[li % PALETTE.len()];
        let mut path = String::new();
        for ((x1, y1), (x2, y2)) in &segments {
            let (px1, py1) = to_px(*x1, *y1);
            let (px2, py2) = to_px(*x2, *y2);
            path.push_str(&format!("M{px1:.2} {py1:.2}L{px2:.2} {py2:.2}"));
        }
        svg.push_str(&format!(
            "<path d=\"{path}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{color}\">level {level}</text>\n",
            WIDTH - MARGIN + 4.0,
            MARGIN + 14.0 * li as f64
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn nearest_plane(grid: &Grid, d: usize, coord: f64) -> usize {
    let n = grid.counts()[d];
    let u = (coord - grid.bounds_lo()[d]) / grid.spacing()[d];
    if grid.periodic()[d] {
        (u.round() as i64).rem_euclid(n as i64) as usize
    } else {
        (u.round().max(0.0) as usize).min(n - 1)
    }
}

type Segment = ((f64, f64), (f64, f64));

/// Contour segments of `panel ≤ level` interfaces, in domain coordinates.
/// Ambiguous saddle cells split by the cell-center average.
fn marching_squares(
    panel: &[f64],
    nx: usize,
    ny: usize,
    level: f64,
    x_of: &dyn Fn(usize) -> f64,
    y_of: &dyn Fn(usize) -> f64,
) -> Vec<Segment> {
    let v = |i: usize, j: usize| panel[i * ny + j];
    let mut segments = Vec::new();
    for i in 0..nx - 1 {
        for j in 0..ny - 1 {
            let corners = [v(i, j), v(i + 1, j), v(i + 1, j + 1), v(i, j + 1)];
            let inside: Vec<bool> = corners.iter().map(|&c| c <= level).collect();
            let code = inside
                .iter()
                .enumerate()
                .fold(0usize, |acc, (k, &b)| acc | ((b as usize) << k));
            if code == 0 || code == 15 {
                continue;
            }
            // Edge order: bottom (0-1), right (1-2), top (2-3), left (3-0),
            // where corner k sits at offsets [(0,0), (1,0), (1,1), (0,1)].
            let cross = |a: usize, b: usize| -> (f64, f64) {
                let (va, vb) = (corners[a], corners[b]);
                let t = if (vb - va).abs() < f64::EPSILON {
                    0.5
                } else {
                    ((level - va) / (vb - va)).clamp(0.0, 1.0)
                };
                let offs = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
                let (ax, ay) = offs[a];
                let (bx, by) = offs[b];
                let fi = ax + (bx - ax) * t;
                let fj = ay + (by - ay) * t;
                // Map fractional cell offsets to domain coordinates.
                let x = x_of(i) + (x_of(i + 1) - x_of(i)) * fi;
                let y = y_of(j) + (y_of(j + 1) - y_of(j)) * fj;
                (x, y)
            };
            let e_bottom = || cross(0, 1);
            let e_right = || cross(1, 2);
            let e_top = || cross(2, 3);
            let e_left = || cross(3, 0);
            match code {
                1 | 14 => segments.push((e_left(), e_bottom())),
                2 | 13 => segments.push((e_bottom(), e_right())),
                3 | 12 => segments.push((e_left(), e_right())),
                4 | 11 => segments.push((e_right(), e_top())),
                6 | 9 => segments.push((e_bottom(), e_top())),
                7 | 8 => segments.push((e_left(), e_top())),
                5 | 10 => {
                    let center = 0.25 * corners.iter().sum::<f64>();
                    let center_inside = center <= level;
                    // Connect the two pairs consistently with the center.
                    if (code == 5) == center_inside {
                        segments.push((e_left(), e_top()));
                        segments.push((e_bottom(), e_right()));
                    } else {
                        segments.push((e_left(), e_bottom()));
                        segments.push((e_right(), e_top()));
                    }
                }
                _ => unreachable!(),
            }
        }
    }
    segments
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ValueField;
    use crate::sets::rasterize_analytic;
    use std::sync::Arc;

    fn grid2d(n: usize) -> Arc<Grid> {
        Arc::new(
            Grid::new(vec![-2.0, -2.0], vec![2.0, 2.0], vec![n, n], vec![false, false]).unwrap(),
        )
    }

    #[test]
    fn constant_field_renders_axes_but_no_contours() {
        let grid = grid2d(11);
        let f = ValueField::constant(grid, 0.0, 0.0, 1.0);
        let svg = render_slice(&RenderInput::Field(&f), &[], &[5.0]).unwrap();
        assert!(svg.contains("<svg"));
        assert!(svg.contains("<rect"));
        assert!(!svg.contains("<path"));
    }

    #[test]
    fn radial_field_produces_contours_at_each_level() {
        let grid = grid2d(41);
        let mut vals = Vec::new();
        let mut idx = [0usize; 2];
        loop {
            let s = grid.node_to_state(&idx).unwrap();
            vals.push((s[0] * s[0] + s[1] * s[1]).sqrt());
            if !grid.next_index(&mut idx) {
                break;
            }
        }
        let f = ValueField::new(grid, vals, 0.0, 1.0).unwrap();
        let svg = render_slice(&RenderInput::Field(&f), &[], &[0.5, 1.0, 1.5]).unwrap();
        assert_eq!(svg.matches("<path").count(), 3);
        assert!(svg.contains("level 0.5"));
    }

    #[test]
    fn target_band_mask_renders_two_horizontal_lines() {
        let grid = grid2d(41);
        let dy = grid.spacing()[1];
        let mask = rasterize_analytic(&grid, |s| s[1].abs() <= 0.5);
        let svg = render_slice(&RenderInput::Mask(&mask), &[], &[]).unwrap();
        assert_eq!(svg.matches("<path").count(), 1);
        // All contour y-coordinates sit within one spacing of y = ±0.5.
        let d = svg.split("d=\"").nth(1).unwrap().split('"').next().unwrap();
        let to_y = |py: f64| {
            // Invert the pixel map for the y axis.
            let frac = (HEIGHT - MARGIN - py) / (HEIGHT - 2.0 * MARGIN);
            -2.0 + 4.0 * frac
        };
        let mut checked = 0;
        for part in d.split(['M', 'L']).filter(|p| !p.is_empty()) {
            let y_px: f64 = part.split_whitespace().nth(1).unwrap().parse().unwrap();
            let y = to_y(y_px);
            assert!(
                (y.abs() - 0.5).abs() <= dy,
                "contour point y = {y} is not near the band edges"
            );
            checked += 1;
        }
        assert!(checked > 0);
    }

    #[test]
    fn three_dimensional_fields_need_a_fixed_axis() {
        let grid = Arc::new(
            Grid::new(
                vec![0.0, 0.0, 0.0],
                vec![1.0, 1.0, 1.0],
                vec![5, 5, 5],
                vec![false, false, true],
            )
            .unwrap(),
        );
        let f = ValueField::constant(grid, 0.0, 0.0, 1.0);
        assert!(matches!(
            render_slice(&RenderInput::Field(&f), &[], &[0.5]),
            Err(RenderError::WrongFreeDims(3))
        ));
        assert!(render_slice(&RenderInput::Field(&f), &[(2, 0.3)], &[0.5]).is_ok());
        assert!(matches!(
            render_slice(&RenderInput::Field(&f), &[(7, 0.3)], &[0.5]),
            Err(RenderError::BadAxis(7))
        ));
    }
}
