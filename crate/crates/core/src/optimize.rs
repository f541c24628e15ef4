//! Derivative-free one- and two-dimensional minimizers.

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for a minimum of `f` on `[lo, hi]`, stopping once
/// the bracket is narrower than `tol`. Returns `(x, f(x))`.
pub fn golden_section(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct NelderMeadResult {
    pub x: [f64; 2],
    pub value: f64,
    pub converged: bool,
}

/// Nelder-Mead on two parameters with standard coefficients. Stops when the
/// spread of simplex values falls below `rel_tol` relative to the best value
/// (or absolutely below `rel_tol * 1e-12`).
pub fn nelder_mead_2d(
    mut f: impl FnMut([f64; 2]) -> f64,
    start: [f64; 2],
    scale: [f64; 2],
    rel_tol: f64,
    max_iter: usize,
) -> NelderMeadResult {
    let mut pts = [
        start,
        [start[0] + scale[0], start[1]],
        [start[0], start[1] + scale[1]],
    ];
    let mut vals = pts.map(&mut f);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        let (b, m, w) = (idx[0], idx[1], idx[2]);
        let spread = vals[w] - vals[b];
        if spread <= rel_tol * vals[b].abs() || spread <= rel_tol * 1e-12 {
            converged = true;
            break;
        }
        let c = [(pts[b][0] + pts[m][0]) / 2.0, (pts[b][1] + pts[m][1]) / 2.0];
        let along = |t: f64| [c[0] + t * (pts[w][0] - c[0]), c[1] + t * (pts[w][1] - c[1])];
        let r = along(-1.0);
        let fr = f(r);
        if fr < vals[b] {
            let e = along(-2.0);
            let fe = f(e);
            if fe < fr {
                pts[w] = e;
                vals[w] = fe;
            } else {
                pts[w] = r;
                vals[w] = fr;
            }
        } else if fr < vals[m] {
            pts[w] = r;
            vals[w] = fr;
        } else {
            let (k, fk) = if fr < vals[w] {
                let k = along(-0.5);
                (k, f(k))
            } else {
                let k = along(0.5);
                (k, f(k))
            };
            if fk < vals[w].min(fr) {
                pts[w] = k;
                vals[w] = fk;
            } else {
                for i in [m, w] {
                    pts[i] = [
                        pts[b][0] + 0.5 * (pts[i][0] - pts[b][0]),
                        pts[b][1] + 0.5 * (pts[i][1] - pts[b][1]),
                    ];
                    vals[i] = f(pts[i]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    NelderMeadResult {
        x: pts[best],
        value: vals[best],
        converged,
    }
}

/// Indices of strict interior local minima of `v`.
pub fn local_minima(v: &[f64]) -> Vec<usize> {
    (1..v.len().saturating_sub(1))
        .filter(|&i| v[i] < v[i - 1] && v[i] < v[i + 1])
        .collect()
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}
