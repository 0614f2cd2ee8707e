//! Adaptive Simpson quadrature.

const MAX_DEPTH: u32 = 50;

/// Integrates `f` over `[a, b]` to absolute tolerance `tol` with adaptive
/// Simpson refinement and Richardson correction.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    refine(&f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    // below roundoff the tolerance can never be met; stop refining there
    let roundoff = 64.0 * f64::EPSILON * (left.abs() + right.abs());
    if depth == 0 || delta.abs() <= 15.0 * tol || delta.abs() <= roundoff {
        return left + right + delta / 15.0;
    }
    refine(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + refine(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Integrates `f` over `[0, 1]` when `f` may have integrable power-law
/// singularities at either endpoint.
///
/// `f` is called as `f(p, 1 - p)` with both arguments accurate, so it can be
/// evaluated near `p = 1` without cancellation. Each half is mapped through
/// `p = u²` (resp. `1 - p = v²`), which turns `p^{-1/2}`-type singularities
/// into bounded integrands.
pub fn integrate_unit_interval<F: Fn(f64, f64) -> f64>(f: F, tol: f64) -> f64 {
    let half = std::f64::consts::FRAC_1_SQRT_2;
    let floor = f64::MIN_POSITIVE.sqrt();
    let lower = |u: f64| {
        let u = u.max(floor);
        let p = u * u;
        2.0 * u * f(p, 1.0 - p)
    };
    let upper = |v: f64| {
        let v = v.max(floor);
        let q = v * v;
        2.0 * v * f(1.0 - q, q)
    };
    adaptive_simpson(lower, 0.0, half, 0.5 * tol) + adaptive_simpson(upper, 0.0, half, 0.5 * tol)
}
