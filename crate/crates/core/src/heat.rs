//! The semilinear heat problem `u_t - Δu = |u|^p`, `u(0) = εf ≥ 0`: the
//! super-solution `U = h(t)^{-1/(p-1)} e^{tΔ}(εf)` with
//! `h(t) = 1 - (p-1)∫₀ᵗ ‖e^{sΔ}εf‖_∞^{p-1} ds`, and a direct solver.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::profile::Profile;
use crate::quad;
use crate::wave::{radial_laplacian, LifespanRecord, Termination};

/// Kernel cut: `e^{-z²/4t}` is dropped beyond `|z| = KERNEL_CUT·√t`.
const KERNEL_CUT: f64 = 12.0;
/// Below this time the integrand of `h` is integrated in `t` directly.
const T_START: f64 = 1e-4;
/// Log-time panel width for the `h` table.
const PANEL: f64 = 0.1;
/// Beyond `T_TAIL` the semigroup sup is replaced by its large-time form.
const T_TAIL: f64 = 1e8;

fn rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: std::sync::OnceLock<(Vec<f64>, Vec<f64>)> = std::sync::OnceLock::new();
    RULE.get_or_init(|| quad::gauss_legendre(16))
}

/// `(x_min, x_max)` outside of which `f` is negligible.
fn support_interval(f: &Profile) -> (f64, f64) {
    match f {
        Profile::Mixture(terms) => {
            let cut = (1e16f64).ln().sqrt();
            let lo = terms.iter().map(|m| m.center - m.width * cut).fold(f64::INFINITY, f64::min);
            let hi = terms.iter().map(|m| m.center + m.width * cut).fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        }
        _ => {
            let r = f.support_radius();
            (-r, r)
        }
    }
}

/// Gauss–Legendre panels of width at most `width` over `[a, b]`.
fn panels(g: impl Fn(f64) -> f64, a: f64, b: f64, width: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = ((b - a) / width).ceil().max(1.0) as usize;
    let step = (b - a) / n as f64;
    (0..n).map(|j| quad::gauss_legendre_on(&g, a + j as f64 * step, a + (j + 1) as f64 * step, rule())).sum()
}

/// `(e^{tΔ}εf)(x)` for `N = 1`, or at the origin `x = 0` for radial `N ≥ 2`.
pub fn heat_semigroup_at(f: &Profile, eps: f64, t: f64, n_dim: usize, x: f64) -> f64 {
    if t <= 0.0 {
        return eps * f.eval(x);
    }
    let root = t.sqrt();
    let width = root.min(0.25);
    if n_dim == 1 {
        let (lo, hi) = support_interval(f);
        let a = lo.max(x - KERNEL_CUT * root);
        let b = hi.min(x + KERNEL_CUT * root);
        let kernel = |z: f64| (-(x - z).powi(2) / (4.0 * t)).exp() * f.eval(z);
        eps * (4.0 * PI * t).powf(-0.5) * panels(kernel, a, b, width)
    } else {
        let b = f.support_radius().min(KERNEL_CUT * root);
        let dim = n_dim as i32;
        let kernel = |r: f64| (-r * r / (4.0 * t)).exp() * f.eval(r) * r.powi(dim - 1);
        eps * (4.0 * PI * t).powf(-0.5 * n_dim as f64) * quad::sphere_area(n_dim) * panels(kernel, 0.0, b, width)
    }
}

/// Whether the sup of `e^{tΔ}f` sits at the origin for every `t`.
fn peaks_at_origin(f: &Profile) -> bool {
    match f {
        Profile::Mixture(terms) => terms.iter().all(|m| m.center == 0.0 && m.amplitude >= 0.0),
        _ => true,
    }
}

/// `‖e^{tΔ}εf‖_∞` by kernel quadrature. Radial data in `N ≥ 2` are assumed
/// radially nonincreasing, so the sup is the value at the origin.
pub fn heat_semigroup_sup(f: &Profile, eps: f64, t: f64, n_dim: usize) -> f64 {
    if f.is_zero() {
        return 0.0;
    }
    if n_dim >= 2 || peaks_at_origin(f) {
        return heat_semigroup_at(f, eps, t, n_dim, 0.0).abs();
    }
    let val = |x: f64| heat_semigroup_at(f, eps, t, 1, x).abs();
    let (lo, hi) = support_interval(f);
    let n = 64;
    let step = (hi - lo) / n as f64;
    let (mut best_i, mut best) = (0, f64::NEG_INFINITY);
    for i in 0..=n {
        let v = val(lo + i as f64 * step);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    // golden-section refinement on the bracketing cells
    let (mut a, mut b) = (lo + (best_i as f64 - 1.0) * step, lo + (best_i as f64 + 1.0) * step);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (val(c), val(d));
    while b - a > 1e-9 * (1.0 + b.abs()) {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = val(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = val(d);
        }
    }
    best.max(fc).max(fd)
}

/// `min{ε‖f‖_∞, (4π)^{-N/2} t^{-N/2} ε‖f‖₁}`.
pub fn heat_min_bound(f: &Profile, eps: f64, t: f64, n_dim: usize) -> f64 {
    let sup = eps * sup_of(f);
    if t <= 0.0 {
        return sup;
    }
    let l1 = eps * l1_norm(f, n_dim);
    sup.min((4.0 * PI * t).powf(-0.5 * n_dim as f64) * l1)
}

fn sup_of(f: &Profile) -> f64 {
    let (lo, hi) = support_interval(f);
    let n = 4000;
    (0..=n).map(|i| f.eval(lo + (hi - lo) * i as f64 / n as f64).abs()).fold(0.0, f64::max)
}

fn l1_norm(f: &Profile, n_dim: usize) -> f64 {
    match f {
        Profile::Mixture(terms) if n_dim == 1 => {
            terms.iter().map(|m| m.amplitude.abs() * m.width * PI.sqrt()).sum()
        }
        _ if n_dim == 1 => f.line_integral().abs(),
        _ => f.integral(n_dim).abs(),
    }
}

/// The function `h` tabulated in log time, and `log t_ε`.
#[derive(Debug, Clone)]
pub struct HeatLowerBound {
    pub p: f64,
    pub n_dim: usize,
    pub eps: f64,
    f: Profile,
    /// Panel edges in `τ = log t`, starting at `log T_START`.
    taus: Vec<f64>,
    /// `∫₀^{e^{τ_j}} sup^{p-1}` at the panel edges.
    cum: Vec<f64>,
    /// `(ε‖f‖₁)^{p-1}(4π)^{-N(p-1)/2}`: the tail integrand is `a·t^{-q}`.
    tail_coeff: f64,
    tail_power: f64,
    /// `log t_ε`; `+∞` when `h` stays positive.
    pub log_t_eps: f64,
}

impl HeatLowerBound {
    fn integrand(&self, t: f64) -> f64 {
        heat_semigroup_sup(&self.f, self.eps, t, self.n_dim).powf(self.p - 1.0)
    }

    /// `∫₀ᵗ ‖e^{sΔ}εf‖_∞^{p-1} ds`.
    pub fn integral(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t <= T_START {
            return quad::gauss_legendre_on(|s| self.integrand(s), 0.0, t, rule());
        }
        let tau = t.ln();
        let last = *self.taus.last().unwrap_or(&T_START.ln());
        if tau >= last {
            return self.cum[self.cum.len() - 1] + self.tail(last.exp(), t);
        }
        let j = ((tau - self.taus[0]) / PANEL).floor() as usize;
        let j = j.min(self.taus.len() - 2);
        let g = |x: f64| {
            let s = x.exp();
            self.integrand(s) * s
        };
        self.cum[j] + quad::gauss_legendre_on(g, self.taus[j], tau, rule())
    }

    fn tail(&self, t1: f64, t: f64) -> f64 {
        let (a, q) = (self.tail_coeff, self.tail_power);
        if (q - 1.0).abs() < 1e-12 {
            a * (t / t1).ln()
        } else {
            a * (t.powf(1.0 - q) - t1.powf(1.0 - q)) / (1.0 - q)
        }
    }

    /// `h(t) = 1 - (p-1)∫₀ᵗ ‖e^{sΔ}εf‖_∞^{p-1} ds`.
    pub fn h(&self, t: f64) -> f64 {
        1.0 - (self.p - 1.0) * self.integral(t)
    }

    /// `h'(t) = -(p-1)‖e^{tΔ}εf‖_∞^{p-1}`.
    pub fn h_prime(&self, t: f64) -> f64 {
        -(self.p - 1.0) * self.integrand(t)
    }

    pub fn t_eps(&self) -> f64 {
        self.log_t_eps.exp()
    }
}

/// Tabulate `h` and locate `t_ε = sup{t : h(t) > 0}` (returned as a log).
pub fn compute_h_and_teps(f: &Profile, eps: f64, p: f64, n_dim: usize) -> Result<HeatLowerBound> {
    if !(p > 1.0) {
        return Err(Error::Parameter(format!("p must exceed 1, got {p}")));
    }
    if !(eps > 0.0) || n_dim == 0 {
        return Err(Error::Parameter(format!("need eps > 0 and N ≥ 1, got eps = {eps}, N = {n_dim}")));
    }
    let q = 0.5 * n_dim as f64 * (p - 1.0);
    let tail_coeff = (eps * l1_norm(f, n_dim)).powf(p - 1.0) * (4.0 * PI).powf(-q);
    let mut hb = HeatLowerBound {
        p,
        n_dim,
        eps,
        f: f.clone(),
        taus: vec![T_START.ln()],
        cum: vec![0.0],
        tail_coeff,
        tail_power: q,
        log_t_eps: f64::INFINITY,
    };
    let target = 1.0 / (p - 1.0);
    let head = quad::gauss_legendre_on(|s| hb.integrand(s), 0.0, T_START, rule());
    hb.cum[0] = head;
    if head >= target {
        let t = quad::bisect(|t| hb.integral(t) - target, 0.0, T_START, 200);
        hb.log_t_eps = t.ln();
        return Ok(hb);
    }
    let tau_end = T_TAIL.ln();
    let g = |x: f64, hb: &HeatLowerBound| {
        let s = x.exp();
        hb.integrand(s) * s
    };
    let mut tau = hb.taus[0];
    while tau < tau_end {
        let next = (tau + PANEL).min(tau_end);
        let piece = quad::gauss_legendre_on(|x| g(x, &hb), tau, next, rule());
        let total = hb.cum[hb.cum.len() - 1] + piece;
        hb.taus.push(next);
        hb.cum.push(total);
        if total >= target {
            let base = hb.cum[hb.cum.len() - 2];
            let root = quad::bisect(
                |x| base + quad::gauss_legendre_on(|y| g(y, &hb), tau, x, rule()) - target,
                tau,
                next,
                200,
            );
            hb.log_t_eps = root;
            return Ok(hb);
        }
        tau = next;
    }
    let rest = target - hb.cum[hb.cum.len() - 1];
    let t1 = T_TAIL;
    hb.log_t_eps = if (q - 1.0).abs() < 1e-12 {
        t1.ln() + rest / tail_coeff
    } else if q < 1.0 {
        ((1.0 - q) * rest / tail_coeff + t1.powf(1.0 - q)).ln() / (1.0 - q)
    } else {
        let left = t1.powf(1.0 - q) / (q - 1.0) * tail_coeff;
        if left <= rest {
            f64::INFINITY
        } else {
            (t1.powf(1.0 - q) - (q - 1.0) * rest / tail_coeff).ln() / (1.0 - q)
        }
    };
    Ok(hb)
}

#[derive(Debug, Clone)]
pub struct HeatConfig {
    pub p: f64,
    pub n_dim: usize,
    pub eps: f64,
    pub f: Profile,
    pub l: f64,
    pub h: f64,
    pub u_max: f64,
    pub dt_min: f64,
    pub t_max: f64,
}

impl HeatConfig {
    /// Gaussian data of width 1, `h = 0.1`, `U_max = 1e6`, and a domain that
    /// fits the diffusive spread up to `t_max`.
    pub fn new(p: f64, n_dim: usize, eps: f64, t_max: f64) -> Self {
        let f = Profile::Gaussian { width: 1.0 };
        let l = f.support_radius() + 2.0 * KERNEL_CUT * (t_max.max(1.0)).sqrt().min(1e4);
        HeatConfig { p, n_dim, eps, f, l, h: 0.1, u_max: 1e6, dt_min: 1e-14, t_max }
    }

    fn validate(&self) -> Result<()> {
        if !(self.p > 1.0 && self.eps >= 0.0 && self.h > 0.0 && self.l > 4.0 * self.h && self.t_max > 0.0) {
            return Err(Error::Parameter(format!("invalid heat configuration {self:?}")));
        }
        if !self.f.is_radial() {
            return Err(Error::Parameter("the heat solver runs on radial grids".into()));
        }
        Ok(())
    }
}

/// Explicit RK4 for `u_t = Δu + |u|^p` with `dt ≤ 0.2h²`, shrunk near blowup.
pub fn heat_solve_until_blowup(cfg: &HeatConfig) -> Result<LifespanRecord> {
    cfg.validate()?;
    let m = (cfg.l / cfg.h).round() as usize;
    let h = cfg.l / m as f64;
    let n = cfg.n_dim;
    let p = cfg.p;
    let mut u: Vec<f64> = (0..=m).map(|i| cfg.eps * cfg.f.eval(i as f64 * h)).collect();
    u[m] = 0.0;
    let rhs = |u: &[f64]| -> Vec<f64> {
        let mut out = radial_laplacian(u, n, h);
        for (o, x) in out.iter_mut().zip(u) {
            *o += x.abs().powf(p);
        }
        out[m] = 0.0;
        out
    };
    let rk4 = |u: &[f64], dt: f64| -> Vec<f64> {
        let axpy = |a: &[f64], k: &[f64], c: f64| a.iter().zip(k).map(|(x, y)| x + c * y).collect::<Vec<_>>();
        let k1 = rhs(u);
        let k2 = rhs(&axpy(u, &k1, 0.5 * dt));
        let k3 = rhs(&axpy(u, &k2, 0.5 * dt));
        let k4 = rhs(&axpy(u, &k3, dt));
        (0..u.len()).map(|i| u[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
    };
    let sup = |u: &[f64]| u.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let base = 0.2 * h * h;
    let mut t = 0.0;
    let mut steps = 0u64;
    let record = |t_num: f64, reason: Termination, peak: f64, steps: u64| LifespanRecord {
        label: "heat".into(),
        n_dim: n,
        p,
        params: "-".into(),
        eps: cfg.eps,
        t_num,
        b_of_t: t_num,
        reason,
        peak_norm: peak,
        steps,
    };
    loop {
        if t >= cfg.t_max {
            return Ok(record(cfg.t_max, Termination::Horizon, sup(&u), steps));
        }
        let m_now = sup(&u);
        let mut dt = base;
        if m_now > 0.0 {
            dt = dt.min(0.05 * m_now.powf(1.0 - p));
        }
        dt = dt.min(cfg.t_max - t);
        let next = loop {
            let next = rk4(&u, dt);
            if next.iter().all(|x| x.is_finite()) {
                break Some(next);
            }
            dt *= 0.5;
            if dt < cfg.dt_min {
                break None;
            }
        };
        let Some(next) = next else {
            return Ok(record(t, Termination::StepCollapse, m_now, steps));
        };
        let peak = sup(&next);
        if peak >= cfg.u_max {
            let half = rk4(&u, 0.5 * dt);
            let half_peak = sup(&half);
            let (t_num, peak_norm) =
                if half_peak.is_finite() && half_peak >= cfg.u_max { (t + 0.5 * dt, half_peak) } else { (t + dt, peak) };
            return Ok(record(t_num, Termination::Threshold, peak_norm, steps + 1));
        }
        u = next;
        t += dt;
        if (cfg.t_max - t).abs() <= 1e-12 * cfg.t_max {
            t = cfg.t_max;
        }
        steps += 1;
        if u[m - 3].abs() > 1e-10 * peak.max(1e-300) && u[m - 3].abs() > 1e-300 {
            return Err(Error::DomainTooSmall { radius: (m - 3) as f64 * h, edge: cfg.l, t });
        }
    }
}

/// `min over samples of (∂_t - Δ)U - U^p` for `U = h^{-1/(p-1)} e^{tΔ}εf`,
/// using `(∂_t - Δ)e^{tΔ}f = 0` and `h' = -(p-1)‖e^{tΔ}εf‖_∞^{p-1}`.
/// Samples are `(x, t)` pairs with `t < t_ε` (`N = 1`).
pub fn supersolution_residual(bound: &HeatLowerBound, samples: &[(f64, f64)]) -> Result<f64> {
    let p = bound.p;
    let mut worst = f64::INFINITY;
    let mut cache: Option<(f64, f64, f64)> = None;
    for &(x, t) in samples {
        if !(t.ln() < bound.log_t_eps) && t > 0.0 {
            return Err(Error::Domain(format!("sample time {t} is not below t_eps = {}", bound.t_eps())));
        }
        let (sup, h) = match cache {
            Some((ct, s, h)) if ct == t => (s, h),
            _ => {
                let s = heat_semigroup_sup(&bound.f, bound.eps, t, bound.n_dim);
                let h = bound.h(t);
                cache = Some((t, s, h));
                (s, h)
            }
        };
        if !(h > 0.0) {
            return Err(Error::Domain(format!("h({t}) = {h} is not positive")));
        }
        let e = heat_semigroup_at(&bound.f, bound.eps, t, bound.n_dim, x);
        let scale = h.powf(-p / (p - 1.0));
        let resid = scale * (sup.powf(p - 1.0) * e - e.abs().powf(p));
        worst = worst.min(resid);
    }
    Ok(worst)
}
