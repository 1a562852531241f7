//! Quadrature, root finding and small regression helpers shared by the
//! damping calculus, the cut-off family and the experiment fitters.

use crate::error::{Error, Result};

/// Recursion depth cap for [`adaptive_simpson`].
pub const MAX_DEPTH: u32 = 60;

#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: f64,
    /// Sum of the local Richardson error estimates.
    pub error: f64,
    pub evals: usize,
    /// True when at least one panel hit the depth cap before meeting its tolerance.
    pub depth_capped: bool,
}

struct Panel {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
}

/// Adaptive Simpson quadrature with local Richardson correction.
///
/// `abs_tol` is an absolute tolerance for the whole interval; it is halved on
/// every bisection. The recursion stops at [`MAX_DEPTH`].
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> Quadrature {
    if a == b {
        return Quadrature { value: 0.0, error: 0.0, evals: 0, depth_capped: false };
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut acc = Quadrature { value: 0.0, error: 0.0, evals: 3, depth_capped: false };
    recurse(&f, Panel { a, b, fa, fm, fb, whole }, abs_tol.max(f64::MIN_POSITIVE), MAX_DEPTH, &mut acc);
    acc
}

fn recurse<F: Fn(f64) -> f64>(f: &F, p: Panel, tol: f64, depth: u32, acc: &mut Quadrature) {
    let m = 0.5 * (p.a + p.b);
    let lm = 0.5 * (p.a + m);
    let rm = 0.5 * (m + p.b);
    let flm = f(lm);
    let frm = f(rm);
    acc.evals += 2;
    let left = (m - p.a) / 6.0 * (p.fa + 4.0 * flm + p.fm);
    let right = (p.b - m) / 6.0 * (p.fm + 4.0 * frm + p.fb);
    let delta = left + right - p.whole;
    let converged = delta.abs() <= 15.0 * tol;
    // a panel that can no longer be split in floating point is accepted as is
    let unsplittable = !(lm > p.a && m > lm && rm > m && p.b > rm);
    if converged || depth == 0 || unsplittable {
        if !converged {
            acc.depth_capped = true;
        }
        acc.value += left + right + delta / 15.0;
        acc.error += delta.abs() / 15.0;
        return;
    }
    recurse(f, Panel { a: p.a, b: m, fa: p.fa, fm: flm, fb: p.fm, whole: left }, 0.5 * tol, depth - 1, acc);
    recurse(f, Panel { a: m, b: p.b, fa: p.fm, fm: frm, fb: p.fb, whole: right }, 0.5 * tol, depth - 1, acc);
}

/// Adaptive Simpson over consecutive panels `breaks[i]..breaks[i+1]`, with the
/// absolute tolerance shared in proportion to panel count.
pub fn simpson_panels<F: Fn(f64) -> f64>(f: F, breaks: &[f64], abs_tol: f64) -> Quadrature {
    let n = breaks.len().saturating_sub(1).max(1) as f64;
    let mut total = Quadrature { value: 0.0, error: 0.0, evals: 0, depth_capped: false };
    for w in breaks.windows(2) {
        let q = adaptive_simpson(&f, w[0], w[1], abs_tol / n);
        total.value += q.value;
        total.error += q.error;
        total.evals += q.evals;
        total.depth_capped |= q.depth_capped;
    }
    total
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            // three-term recurrence for P_n and its derivative
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Fixed Gauss–Legendre rule applied on `[a, b]`.
pub fn gauss_legendre_on<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    rule.0.iter().zip(&rule.1).map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

/// Trapezoid rule for uniformly spaced samples.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (0.5 * (values[0] + values[n - 1]) + values[1..n - 1].iter().sum::<f64>()),
    }
}

/// Trapezoid rule on arbitrary abscissae.
pub fn trapezoid_xy(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Running trapezoid integral from the first sample; `out[0] = 0`.
pub fn cumulative_trapezoid(values: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            acc += 0.5 * h * (values[i - 1] + v);
        }
        out.push(acc);
    }
    out
}

/// Bisection on a bracket `[lo, hi]` where `g(lo) < 0 <= g(hi)`.
pub fn bisect<G: Fn(f64) -> f64>(g: G, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Solve `g(t) = target` for an increasing `g` on `t >= 0` by doubling a
/// bracket from `t = 1` and bisecting. Fails once the bracket passes `guard`.
pub fn invert_increasing<G: Fn(f64) -> f64>(g: G, target: f64, guard: f64) -> Result<f64> {
    if g(0.0) >= target {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while g(hi) < target {
        hi *= 2.0;
        if hi > guard || !hi.is_finite() {
            return Err(Error::NonConvergence { target, guard });
        }
    }
    let lo = if hi > 1.0 { 0.5 * hi } else { 0.0 };
    Ok(bisect(|t| g(t) - target, lo, hi, 200))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InsufficientData(format!("line fit needs at least 2 points, got {}", x.len().min(y.len()))));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|xi| (xi - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(xi, yi)| (xi - mx) * (yi - my)).sum();
    let syy: f64 = y.iter().map(|yi| (yi - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("line fit abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(xi, yi)| (yi - slope * xi - intercept).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    Ok(LineFit { slope, intercept, r_squared })
}

/// Four-point Lagrange interpolation of samples `values[i] = φ(x0 + i·h)` at `x`.
/// With `even`, indices below zero mirror about `x0` (radial grids). Returns
/// `None` outside the sampled range.
pub fn cubic_interp(values: &[f64], x0: f64, h: f64, x: f64, even: bool) -> Option<f64> {
    let n = values.len() as isize;
    let pos = (x - x0) / h;
    if n < 4 || pos < if even { -(n as f64 - 1.0) } else { 0.0 } || pos > (n - 1) as f64 {
        return None;
    }
    let base = (pos.floor() as isize - 1).clamp(if even { -n + 1 } else { 0 }, n - 4);
    let get = |i: isize| values[i.unsigned_abs()];
    let mut acc = 0.0;
    for j in 0..4 {
        let xj = (base + j) as f64;
        let mut w = 1.0;
        for m in 0..4 {
            if m != j {
                let xm = (base + m) as f64;
                w *= (pos - xm) / (xj - xm);
            }
        }
        acc += w * get(base + j);
    }
    Some(acc)
}

/// `n` log-spaced points on `[a, b]`, `a > 0`.
pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..n).map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// `n` geometrically spaced values from `first` to `last` inclusive.
pub fn geometric(first: f64, last: f64, n: usize) -> Vec<f64> {
    logspace(first, last, n)
}

/// Surface area of the unit sphere in R^N (2 for N = 1).
pub fn sphere_area(n: usize) -> f64 {
    let half = n as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(half) / gamma(half)
}

/// Gamma function for the half-integer and integer arguments used by sphere areas.
fn gamma(x: f64) -> f64 {
    // x is a positive multiple of 1/2
    let twice = (2.0 * x).round() as i64;
    if twice % 2 == 0 {
        (1..(twice / 2)).map(|k| k as f64).product()
    } else {
        // Γ(k + 1/2) = (2k)! / (4^k k!) √π
        let mut g = std::f64::consts::PI.sqrt();
        let mut y = 0.5;
        while y < x - 0.25 {
            g *= y;
            y += 1.0;
        }
        g
    }
}
