//! Real roots of a polynomial on a bounded interval.
//!
//! The interval is walked on a uniform grid. A Lipschitz bound on the
//! Taylor expansion at the current grid point lets the walk jump over
//! stretches where the polynomial provably keeps its sign, so a fine grid
//! stays cheap. Sign changes are refined by bisection with a final Newton
//! step; touching roots are found as local minima of |g| that reach zero.

/// Evaluates `Σ c_k t^k` (ascending coefficients) by Horner's rule.
pub fn eval(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
}

/// Ascending coefficients of the derivative.
pub fn derivative(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &c)| k as f64 * c)
        .collect()
}

/// Coefficients of `p(t + shift)` in powers of the offset.
pub fn taylor_shift(coeffs: &[f64], shift: f64) -> Vec<f64> {
    let mut out = coeffs.to_vec();
    let n = out.len();
    for i in 0..n {
        for j in (i..n.saturating_sub(1)).rev() {
            out[j] += shift * out[j + 1];
        }
    }
    out
}

/// Product of two ascending-coefficient polynomials.
pub fn multiply(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootSearch {
    pub horizon: f64,
    /// Grid step as a fraction of the horizon.
    pub grid_fraction: f64,
    /// Acceptance tolerance relative to `max(1, |g(0)|)`.
    pub tol: f64,
}

impl RootSearch {
    pub fn new(horizon: f64, tol: f64) -> Self {
        Self { horizon, grid_fraction: 1e-3, tol }
    }
}

/// All roots in `[0, horizon]`, ascending; touching roots reported once.
pub fn real_roots(coeffs: &[f64], search: &RootSearch) -> Vec<f64> {
    let mut roots = Vec::new();
    scan(coeffs, search, |r| {
        roots.push(r);
        true
    });
    roots
}

/// Smallest root in `[0, horizon]`.
pub fn first_root(coeffs: &[f64], search: &RootSearch) -> Option<f64> {
    let mut found = None;
    scan(coeffs, search, |r| {
        found = Some(r);
        false
    });
    found
}

/// Walks the grid, calling `on_root` for each root in order until it
/// returns `false`.
fn scan(coeffs: &[f64], search: &RootSearch, mut on_root: impl FnMut(f64) -> bool) {
    let horizon = search.horizon;
    let steps = (1.0 / search.grid_fraction).round().max(1.0) as usize;
    let h = horizon / steps as f64;
    let scale = eval(coeffs, 0.0).abs().max(1.0);
    let accept = search.tol * scale;
    let deriv = derivative(coeffs);
    let grid = |k: usize| if k == steps { horizon } else { k as f64 * h };

    let mut last_root = f64::NEG_INFINITY;
    let mut emit = |r: f64, on_root: &mut dyn FnMut(f64) -> bool| -> bool {
        if r - last_root <= 4.0 * f64::EPSILON * horizon.max(1.0) {
            return true;
        }
        last_root = r;
        on_root(r)
    };

    let mut k = 0usize;
    let mut t = 0.0;
    let mut g = eval(coeffs, t);
    let mut dg = eval(&deriv, t);
    if g == 0.0 && !emit(0.0, &mut on_root) {
        return;
    }
    while k < steps {
        let jump = safe_jump(coeffs, t, g.abs(), horizon - t);
        let skip = ((jump / h).floor() as usize).clamp(1, steps - k);
        let next_k = k + skip;
        let next_t = grid(next_k);
        let next_g = eval(coeffs, next_t);
        let next_dg = eval(&deriv, next_t);

        if skip == 1 && g != 0.0 {
            let s = g.signum();
            if next_g == 0.0 {
                if !emit(next_t, &mut on_root) {
                    return;
                }
            } else if s != next_g.signum() {
                let r = refine_crossing(coeffs, &deriv, t, next_t, g);
                if !emit(r, &mut on_root) {
                    return;
                }
            } else if (s * dg < 0.0 && s * next_dg >= 0.0) || (s * dg <= 0.0 && s * next_dg > 0.0) {
                // |g| has a local minimum in [t, next_t]
                if let Some(r) = refine_touch(coeffs, &deriv, t, next_t, accept) {
                    if !emit(r, &mut on_root) {
                        return;
                    }
                }
            }
        }
        k = next_k;
        t = next_t;
        g = next_g;
        dg = next_dg;
    }
}

/// Offset `d ≤ max` over which |g| stays above |g(t)|/2, from
/// `|g(t)| / (2 sup|g'|)` with the supremum bounded on the Taylor
/// expansion at `t`. Near-touching minima therefore always fall inside
/// single-step stretches of the walk.
fn safe_jump(coeffs: &[f64], t: f64, gabs: f64, max: f64) -> f64 {
    if gabs == 0.0 || max <= 0.0 {
        return 0.0;
    }
    let shifted = taylor_shift(coeffs, t);
    let bound = |d: f64| -> f64 {
        shifted
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| k as f64 * c.abs() * d.powi(k as i32 - 1))
            .sum()
    };
    let mut d = max;
    for _ in 0..3 {
        let m = bound(d);
        if m == 0.0 {
            return max;
        }
        let candidate = 0.5 * gabs / m;
        if candidate >= d {
            return d;
        }
        d = candidate;
    }
    // bound taken on the larger bracket, still valid on the smaller one
    d
}

fn refine_crossing(coeffs: &[f64], deriv: &[f64], mut lo: f64, mut hi: f64, g_lo: f64) -> f64 {
    let lo_sign = g_lo.signum();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = eval(coeffs, mid);
        if gm == 0.0 {
            return mid;
        }
        if gm.signum() == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let r = 0.5 * (lo + hi);
    newton_polish(coeffs, deriv, r, lo, hi)
}

fn newton_polish(coeffs: &[f64], deriv: &[f64], r: f64, lo: f64, hi: f64) -> f64 {
    let g = eval(coeffs, r);
    let d = eval(deriv, r);
    if d == 0.0 || !d.is_finite() {
        return r;
    }
    let n = r - g / d;
    if n >= lo && n <= hi && eval(coeffs, n).abs() < g.abs() {
        n
    } else {
        r
    }
}

/// Locates the extremum of g in `(lo, hi)` by bisection on g' and accepts
/// it as a double root when |g| there is within `accept`.
fn refine_touch(coeffs: &[f64], deriv: &[f64], mut lo: f64, mut hi: f64, accept: f64) -> Option<f64> {
    let d_lo = eval(deriv, lo).signum();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let dm = eval(deriv, mid);
        if dm == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if dm.signum() == d_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let r = 0.5 * (lo + hi);
    (eval(coeffs, r).abs() <= accept).then_some(r)
}
