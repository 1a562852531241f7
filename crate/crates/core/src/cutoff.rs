//! Rescaled cut-off family `ψ_R = η(s_R)^{2p'}`, `ψ_R* = η*(s_R)^{2p'}` with
//! `s_R = (1 + |x|² + ∫₀ᵗΦ)/R`, the derivative-bound constants, the implicit
//! radius bound and the test-function functional on solution snapshots.
//!
//! Time enters only through `q = ∫₀ᵗ Φ`, tabulated in log time
//! `u = log(1+t)` so that log-tower families, whose `t_R` overflows for
//! moderate `R`, are still sampled.

use crate::damping::{DampingCalculus, PhiSample};
use crate::error::{Error, Result};
use crate::quad;
use crate::wave::Snapshot;

/// Ratios above this signal a profile or formula defect.
pub const RATIO_LIMIT: f64 = 1e6;
const PANEL: f64 = 0.25;
const MAX_LOG_TIME: f64 = 4000.0;

/// Smoothstep `η` with `(η, η', η'')`.
pub fn eta(s: f64) -> (f64, f64, f64) {
    if s <= 0.5 {
        (1.0, 0.0, 0.0)
    } else if s >= 1.0 {
        (0.0, 0.0, 0.0)
    } else {
        let t = 2.0 * s - 1.0;
        let t2 = t * t;
        let v = 1.0 - t2 * t * (10.0 - 15.0 * t + 6.0 * t2);
        let d = -2.0 * 30.0 * t2 * (1.0 - 2.0 * t + t2);
        let dd = -4.0 * 60.0 * t * (1.0 - 3.0 * t + 2.0 * t2);
        (v, d, dd)
    }
}

/// `η*`: zero below `1/2`, `η` above.
pub fn eta_star(s: f64) -> f64 {
    if s < 0.5 {
        0.0
    } else {
        eta(s).0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffValue {
    pub psi: f64,
    pub psi_star: f64,
    pub dt_psi: f64,
    pub lap_psi: f64,
    pub dtt_psi: f64,
}

/// Chain rule for `η(s)^k` given the derivatives of `s`.
fn chain(k: f64, s: f64, st: f64, stt: f64, grad2: f64, lap_s: f64) -> CutoffValue {
    let (e, d, dd) = eta(s);
    let es = eta_star(s);
    if e == 0.0 {
        return CutoffValue { psi: 0.0, psi_star: 0.0, dt_psi: 0.0, lap_psi: 0.0, dtt_psi: 0.0 };
    }
    let e_k1 = e.powf(k - 1.0);
    let e_k2 = e.powf(k - 2.0);
    let second = |g: f64| k * ((k - 1.0) * e_k2 * d * d * g + e_k1 * dd * g);
    CutoffValue {
        psi: e.powf(k),
        psi_star: es.powf(k),
        dt_psi: k * e_k1 * d * st,
        lap_psi: second(grad2) + k * e_k1 * d * lap_s,
        dtt_psi: second(st * st) + k * e_k1 * d * stt,
    }
}

/// Cumulative `q(u) = ∫₀^{t(u)} Φ` on panels of width `PANEL` in `u = log(1+t)`.
#[derive(Debug, Clone)]
struct PhiTable {
    cum: Vec<f64>,
    rate: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CutoffFamily {
    r_scale: f64,
    p: f64,
    n_dim: usize,
    calc: DampingCalculus,
    table: PhiTable,
    rule: (Vec<f64>, Vec<f64>),
}

impl CutoffFamily {
    pub fn new(calc: &DampingCalculus, r_scale: f64, p: f64, n_dim: usize) -> Result<Self> {
        if !(r_scale > 0.0 && r_scale.is_finite()) {
            return Err(Error::Parameter(format!("R must be positive, got {r_scale}")));
        }
        if !(p > 1.0) || n_dim == 0 {
            return Err(Error::Parameter(format!("need p > 1 and N >= 1, got p = {p}, N = {n_dim}")));
        }
        // validates that Φ exists
        calc.phi(0.0)?;
        let rule = quad::gauss_legendre(16);
        let mut fam = CutoffFamily {
            r_scale,
            p,
            n_dim,
            calc: calc.clone(),
            table: PhiTable { cum: vec![0.0], rate: vec![calc.phi_log_time(0.0)?.phi_x] },
            rule,
        };
        // one panel past q = R so that t_R is bracketed
        while *fam.table.cum.last().unwrap() < r_scale {
            let k = fam.table.cum.len() - 1;
            let u0 = k as f64 * PANEL;
            if u0 >= MAX_LOG_TIME {
                return Err(Error::Domain(format!(
                    "{}: ∫Φ stays below R = {r_scale} up to log(1+t) = {MAX_LOG_TIME}",
                    calc.spec()
                )));
            }
            let inc = fam.panel_integral(u0, u0 + PANEL)?;
            fam.table.cum.push(fam.table.cum[k] + inc);
            fam.table.rate.push(fam.calc.phi_log_time(u0 + PANEL)?.phi_x);
        }
        Ok(fam)
    }

    pub fn r_scale(&self) -> f64 {
        self.r_scale
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn n_dim(&self) -> usize {
        self.n_dim
    }

    pub fn calculus(&self) -> &DampingCalculus {
        &self.calc
    }

    /// `k = 2p'`
    pub fn exponent(&self) -> f64 {
        2.0 * self.p / (self.p - 1.0)
    }

    fn panel_integral(&self, a: f64, b: f64) -> Result<f64> {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.rule.0.iter().zip(&self.rule.1) {
            acc += w * self.calc.phi_log_time(mid + half * x)?.phi_x;
        }
        Ok(acc * half)
    }

    fn u_max(&self) -> f64 {
        (self.table.cum.len() - 1) as f64 * PANEL
    }

    /// `∫₀ᵗ Φ` at log time `u`; `None` past the tabulated range (where `q > R`).
    pub fn iphi_log(&self, u: f64) -> Result<Option<f64>> {
        if !(u >= 0.0) {
            return Err(Error::Domain(format!("time must be nonnegative, got log time {u}")));
        }
        if u >= self.u_max() {
            return Ok(None);
        }
        let k = (u / PANEL).floor() as usize;
        let a = k as f64 * PANEL;
        Ok(Some(self.table.cum[k] + if u > a { self.panel_integral(a, u)? } else { 0.0 }))
    }

    /// `∫₀ᵗ Φ(σ) dσ`; `None` once it exceeds `R` by more than a panel.
    pub fn iphi(&self, t: f64) -> Result<Option<f64>> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("time must be nonnegative, got {t}")));
        }
        self.iphi_log(t.ln_1p())
    }

    /// Log time where `∫₀ᵗ Φ = q`, by bisection on the exact antiderivative.
    pub fn log_time_of(&self, q: f64) -> Result<f64> {
        let cum = &self.table.cum;
        if !(q >= 0.0) || q > *cum.last().unwrap() {
            return Err(Error::Domain(format!("∫Φ = {q} outside the tabulated range")));
        }
        let k = cum.partition_point(|&c| c <= q).saturating_sub(1);
        let (mut lo, mut hi) = (k as f64 * PANEL, (k + 1) as f64 * PANEL);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.iphi_log(mid)?.unwrap_or(f64::INFINITY) < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Fast approximate inverse of `q(u)` by cubic Hermite interpolation of the
    /// table; used only to place sample points.
    fn approx_log_time_of(&self, q: f64) -> f64 {
        let cum = &self.table.cum;
        let k = cum.partition_point(|&c| c <= q).saturating_sub(1).min(cum.len() - 2);
        let (q0, q1) = (cum[k], cum[k + 1]);
        let (m0, m1) = (self.table.rate[k] * PANEL, self.table.rate[k + 1] * PANEL);
        let hermite = |x: f64| {
            let x2 = x * x;
            let x3 = x2 * x;
            (2.0 * x3 - 3.0 * x2 + 1.0) * q0 + (x3 - 2.0 * x2 + x) * m0 + (-2.0 * x3 + 3.0 * x2) * q1 + (x3 - x2) * m1
        };
        let x = quad::bisect(|x| hermite(x) - q, 0.0, 1.0, 60);
        (k as f64 + x) * PANEL
    }

    /// `t_R` with `1 + ∫₀^{t_R} Φ = R`.
    pub fn eval_t_r(&self) -> Result<f64> {
        if !(self.r_scale > 1.0) {
            return Err(Error::Domain(format!("t_R needs R > 1, got {}", self.r_scale)));
        }
        let u = self.log_time_of(self.r_scale - 1.0)?;
        Ok(u.exp_m1())
    }

    /// Values at `(|x|, q)` with `Φ`, `Φ'` supplied.
    pub fn eval_at_q(&self, x_norm: f64, q: f64, phi: f64, phi_prime: f64) -> CutoffValue {
        let r = self.r_scale;
        let s = (1.0 + x_norm * x_norm + q) / r;
        chain(self.exponent(), s, phi / r, phi_prime / r, 4.0 * x_norm * x_norm / (r * r), 2.0 * self.n_dim as f64 / r)
    }

    /// `(ψ, ψ*, ∂tψ, Δψ, ∂t²ψ)` at `(|x|, t)`.
    pub fn eval_cutoff(&self, x_norm: f64, t: f64) -> Result<CutoffValue> {
        let Some(q) = self.iphi(t)? else {
            return Ok(CutoffValue { psi: 0.0, psi_star: 0.0, dt_psi: 0.0, lap_psi: 0.0, dtt_psi: 0.0 });
        };
        let (phi, dphi) = self.calc.phi(t)?;
        Ok(self.eval_at_q(x_norm, q, phi, dphi))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub n_q: usize,
    pub n_r: usize,
    pub n_random: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { n_q: 400, n_r: 400, n_random: 10_000 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CutoffConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// `sup Φ²/R` over sampled `P(R)`.
    pub phi_sq_over_r: f64,
    /// `sup |Φ'|` over sampled times in `[0, t_R]`.
    pub phi_prime_sup: f64,
    /// `sup bΦ` over sampled times in `[0, t_R]`.
    pub b_phi_sup: f64,
    pub samples: usize,
}

/// Radical inverse in base `b` (Halton sequence).
fn halton(mut i: usize, b: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= b as f64;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}

/// Smallest constants with
/// `|∂tψ| ≤ C₁R⁻¹Φψ*^{1/p}`, `|Δψ| ≤ C₂R⁻¹ψ*^{1/p}`, `|∂t²ψ| ≤ C₃R⁻¹ψ*^{1/p}`
/// over a sample of `P(R)` in `(q, |x|²)` coordinates.
pub fn verify_cutoff_bounds(fam: &CutoffFamily, grid: GridSpec) -> Result<CutoffConstants> {
    if !crate::damping::analytic_not_overdamping(&fam.calc.family()) {
        return Err(Error::Domain(format!("{}: 1/b is integrable", fam.calc.spec())));
    }
    let r = fam.r_scale;
    if !(r > 1.0) {
        return Err(Error::Domain(format!("P(R) is empty for R = {r}")));
    }
    let qmax = r - 1.0;
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(grid.n_q * grid.n_r + grid.n_random);
    for i in 0..grid.n_q {
        let q = qmax * i as f64 / (grid.n_q - 1).max(1) as f64;
        // |x|² range where ψ* > 0: s ∈ [1/2, 1]
        let lo = (0.5 * r - 1.0 - q).max(0.0);
        let hi = qmax - q;
        for j in 0..grid.n_r {
            let x2 = lo + (hi - lo) * j as f64 / (grid.n_r - 1).max(1) as f64;
            points.push((q, x2));
        }
    }
    for i in 1..=grid.n_random {
        let q = qmax * halton(i, 2);
        let x2 = (qmax - q) * halton(i, 3);
        points.push((q, x2));
    }

    // Φ per distinct q, from the placed log time
    let mut cache: std::collections::HashMap<u64, PhiSample> = std::collections::HashMap::new();
    let mut consts = CutoffConstants {
        c1: 0.0,
        c2: 0.0,
        c3: 0.0,
        phi_sq_over_r: 0.0,
        phi_prime_sup: 0.0,
        b_phi_sup: 0.0,
        samples: 0,
    };
    let p = fam.p;
    for &(q, x2) in &points {
        let key = q.to_bits();
        let ph = match cache.get(&key) {
            Some(ph) => *ph,
            None => {
                let u = fam.approx_log_time_of(q);
                let ph = fam.calc.phi_log_time(u)?;
                consts.phi_prime_sup = consts.phi_prime_sup.max(ph.phi_prime.abs());
                // bΦ = 1 + Φ'
                consts.b_phi_sup = consts.b_phi_sup.max(1.0 + ph.phi_prime);
                consts.phi_sq_over_r = consts.phi_sq_over_r.max(ph.phi * ph.phi / r);
                cache.insert(key, ph);
                ph
            }
        };
        let v = fam.eval_at_q(x2.sqrt(), q, ph.phi, ph.phi_prime);
        let weight = v.psi_star.powf(1.0 / p);
        if weight == 0.0 {
            continue;
        }
        consts.samples += 1;
        // ∂tψ is linear in Φ; past the underflow of Φ the ratio is taken at unit Φ
        let ratio1 = if ph.phi > 1e-200 {
            v.dt_psi.abs() * r / (ph.phi * weight)
        } else {
            fam.eval_at_q(x2.sqrt(), q, 1.0, ph.phi_prime).dt_psi.abs() * r / weight
        };
        let ratio2 = v.lap_psi.abs() * r / weight;
        let ratio3 = v.dtt_psi.abs() * r / weight;
        for (which, ratio) in [("C1", ratio1), ("C2", ratio2), ("C3", ratio3)] {
            if !(ratio <= RATIO_LIMIT) {
                return Err(Error::UnboundedRatio { which, ratio, limit: RATIO_LIMIT });
            }
        }
        consts.c1 = consts.c1.max(ratio1);
        consts.c2 = consts.c2.max(ratio2);
        consts.c3 = consts.c3.max(ratio3);
    }
    Ok(consts)
}

/// Upper bound on the blowup radius for
/// `δ + ∬wψ_R ≤ C₀R^{-θ/p'}(∬wψ_R*)^{1/p}`.
///
/// Integrating the extremal inequality `(δ + log2·Y)^p ≤ C₀^p R^{1-θ(p-1)} Y'`
/// gives a division by `log 2`.
pub fn key_upper_bound(delta: f64, c0: f64, r1: f64, theta: f64, p: f64) -> Result<f64> {
    if !(p > 1.0 && delta > 0.0 && c0 > 0.0 && r1 > 0.0 && theta >= 0.0) {
        return Err(Error::Parameter(format!(
            "need p > 1, δ, C0, R1 > 0, θ >= 0 (got δ={delta}, C0={c0}, R1={r1}, θ={theta}, p={p})"
        )));
    }
    let ln2 = std::f64::consts::LN_2;
    let a = c0.powf(p) * delta.powf(-(p - 1.0)) / ln2;
    let log_bound = if theta > 0.0 {
        let e = (p - 1.0) * theta;
        // (R1^e + θ a)^{1/e} in log form
        (r1.powf(e) + theta * a).ln() / e
    } else {
        r1.ln() + a / (p - 1.0)
    };
    Ok(log_bound.exp())
}

#[derive(Debug, Clone, Copy)]
pub struct KeyLemmaCheck {
    pub bound: f64,
    pub radius: f64,
    pub verdict: bool,
}

/// Blowup radius of `Y' = C₀^{-p} R^{θ(p-1)-1} (δ + log2·Y)^p`, `Y(R₁) = 0`.
///
/// With `ρ = log R` and `L = log(δ + log2·Y)` the blowup is at `L → ∞`, so the
/// ODE is integrated for `ρ(L)`, `dρ/dL = e^{-(p-1)L - θ(p-1)ρ} C₀^p / log 2`,
/// by adaptive RK4 until the remaining increment is below `e^{-40}`.
pub fn key_lemma_ode_radius(delta: f64, c0: f64, r1: f64, theta: f64, p: f64) -> Result<f64> {
    let ln2 = std::f64::consts::LN_2;
    let e = theta * (p - 1.0);
    let k = c0.powf(p) / ln2;
    let rhs = |l: f64, rho: f64| k * (-(p - 1.0) * l - e * rho).exp();
    let rk4 = |l: f64, rho: f64, h: f64| {
        let k1 = rhs(l, rho);
        let k2 = rhs(l + 0.5 * h, rho + 0.5 * h * k1);
        let k3 = rhs(l + 0.5 * h, rho + 0.5 * h * k2);
        let k4 = rhs(l + h, rho + h * k3);
        rho + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    };
    let l_start = delta.ln();
    let l_end = l_start + 40.0 / (p - 1.0);
    let mut l = l_start;
    let mut rho = r1.ln();
    let mut h: f64 = 1e-3;
    let tol = 1e-12;
    while l < l_end {
        h = h.min(l_end - l);
        let full = rk4(l, rho, h);
        let mid = rk4(l, rho, 0.5 * h);
        let two = rk4(l + 0.5 * h, mid, 0.5 * h);
        let err = (two - full).abs() / 15.0;
        let scale = tol * (1.0 + two.abs());
        if err.is_finite() && err <= scale {
            l += h;
            rho = two;
            h *= if err == 0.0 { 2.0 } else { (0.9 * (scale / err).powf(0.2)).clamp(0.2, 2.0) };
        } else {
            h *= 0.25;
        }
        if h < 1e-14 {
            return Err(Error::Integration(format!("key-lemma ODE step collapsed at log R = {rho}")));
        }
    }
    Ok(rho.exp())
}

/// Integrates the extremal ODE and checks its blowup radius against
/// [`key_upper_bound`] with a 1% allowance.
pub fn check_key_lemma_ode(delta: f64, c0: f64, r1: f64, theta: f64, p: f64) -> Result<KeyLemmaCheck> {
    let bound = key_upper_bound(delta, c0, r1, theta, p)?;
    let radius = key_lemma_ode_radius(delta, c0, r1, theta, p)?;
    Ok(KeyLemmaCheck { bound, radius, verdict: radius <= 1.01 * bound })
}

#[derive(Debug, Clone, Copy)]
pub struct FunctionalValue {
    pub lhs: f64,
    pub rhs: f64,
    pub c0: f64,
    pub c4: f64,
    pub c5: f64,
    pub weighted: f64,
    pub weighted_star: f64,
}

/// Both sides of
/// `c₀ε + ∬|u|^pΦψ_R ≤ C₅ R^{-(1/(p-1)-N/2)/p'} (∬|u|^pΦψ_R*)^{1/p}`
/// with `C₅ = C₄|S^{N-1}|^{1/p'}`, `C₄ = 2C₁‖Φ'‖ + C₃ + C₂ + B₂C₁`.
pub fn evaluate_blowup_functional(
    snapshots: &[Snapshot],
    fam: &CutoffFamily,
    consts: &CutoffConstants,
    eps: f64,
    f_integral: f64,
    g_integral: f64,
) -> Result<FunctionalValue> {
    let t_r = fam.eval_t_r()?;
    let last = snapshots.last().ok_or_else(|| Error::Coverage { needed: t_r, available: 0.0 })?;
    if last.t < t_r {
        return Err(Error::Coverage { needed: t_r, available: last.t });
    }
    let p = fam.p;
    let n = fam.n_dim;
    let mut times = Vec::new();
    let mut dens = Vec::new();
    let mut dens_star = Vec::new();
    for snap in snapshots {
        if snap.n_dim != n {
            return Err(Error::Parameter(format!("snapshot dimension {} differs from {n}", snap.n_dim)));
        }
        let (phi, dphi) = fam.calc.phi(snap.t)?;
        let q = fam.iphi(snap.t)?;
        let mut a = vec![0.0; snap.u.len()];
        let mut b = vec![0.0; snap.u.len()];
        if let Some(q) = q {
            for (i, u) in snap.u.iter().enumerate() {
                let v = fam.eval_at_q(snap.r(i), q, phi, dphi);
                let up = u.abs().powf(p) * phi;
                a[i] = up * v.psi;
                b[i] = up * v.psi_star;
            }
        }
        times.push(snap.t);
        dens.push(crate::wave::radial_integral(&a, n, snap.h));
        dens_star.push(crate::wave::radial_integral(&b, n, snap.h));
        if snap.t >= t_r {
            break;
        }
    }
    let weighted = quad::trapezoid_xy(&times, &dens);
    let weighted_star = quad::trapezoid_xy(&times, &dens_star);
    let b0 = fam.calc.b0();
    let c0 = 0.5 * (f_integral + b0 * g_integral);
    let c4 = 2.0 * consts.c1 * consts.phi_prime_sup + consts.c3 + consts.c2 + consts.b_phi_sup * consts.c1;
    let p_conj = p / (p - 1.0);
    let c5 = c4 * quad::sphere_area(n).powf(1.0 / p_conj);
    let power = -(1.0 / (p - 1.0) - n as f64 / 2.0) / p_conj;
    Ok(FunctionalValue {
        lhs: c0 * eps + weighted,
        rhs: c5 * fam.r_scale.powf(power) * weighted_star.powf(1.0 / p),
        c0,
        c4,
        c5,
        weighted,
        weighted_star,
    })
}
