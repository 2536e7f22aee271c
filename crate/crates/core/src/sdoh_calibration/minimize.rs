//! Bounded scalar minimization: exhaustive grid scan followed by
//! golden-section refinement around the best grid point.

use rayon::prelude::*;

const INV_PHI: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, PartialEq)]
pub struct GridGoldenResult {
    pub x: f64,
    pub value: f64,
    /// Every grid point and its objective, in increasing `x`.
    pub curve: Vec<(f64, f64)>,
    pub grid_argmin: usize,
}

/// Minimizes `f` over `[lo, hi]`.
///
/// The grid has `round((hi - lo) / step)` intervals; grid points are
/// evaluated in parallel but each evaluation is independent, so the result
/// does not depend on scheduling. The refinement brackets the grid minimum
/// by its two neighbours and shrinks until narrower than `tol`. The returned
/// value is never worse than the best grid value.
pub fn grid_then_golden<F>(f: F, lo: f64, hi: f64, step: f64, tol: f64) -> GridGoldenResult
where
    F: Fn(f64) -> f64 + Sync,
{
    assert!(hi > lo && step > 0.0 && tol > 0.0, "invalid search interval");
    let intervals = ((hi - lo) / step).round().max(1.0) as usize;
    let grid_x = |i: usize| {
        if i == intervals {
            hi
        } else {
            lo + (hi - lo) * (i as f64 / intervals as f64)
        }
    };
    let curve: Vec<(f64, f64)> = (0..=intervals)
        .into_par_iter()
        .map(|i| {
            let x = grid_x(i);
            (x, f(x))
        })
        .collect();

    let grid_argmin = curve
        .iter()
        .enumerate()
        .fold(0, |best, (i, &(_, v))| if v < curve[best].1 { i } else { best });

    let mut a = grid_x(grid_argmin.saturating_sub(1));
    let mut b = grid_x((grid_argmin + 1).min(intervals));
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a) > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    let fmid = f(mid);

    let (mut x, mut value) = curve[grid_argmin];
    for (cx, cv) in [(c, fc), (d, fd), (mid, fmid)] {
        if cv < value {
            x = cx;
            value = cv;
        }
    }
    GridGoldenResult { x, value, curve, grid_argmin }
}
