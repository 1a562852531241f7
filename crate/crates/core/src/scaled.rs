//! Scaling variables `y = x/√(B+1)`, `s = log(B+1)` and the first-order system
//!
//! ```text
//! v_s - y/2·∇v - N/2 v = w
//! ε_s (w_s - y/2·∇w - (N/2+1) w) + w = Δv + d w + K |v|^p
//! ```
//!
//! with `ε_s = e^{-s}/b²`, `d = b'/b²`, `K = e^{(N/2)(1+2/N-p)s}`, all at `t(s)`.
//! For `N = 1` the grid is the full line `[-Y, Y]`; for `N ≥ 2` it is radial.

use std::f64::consts::PI;

use crate::damping::{DampingCalculus, DampingSpec};
use crate::error::{Error, Result};
use crate::profile::Profile;
use crate::quad;
use crate::wave::{radial_integral, radial_laplacian, LifespanRecord, Snapshot, Termination};

/// Nonlinear step control in the scaled frame.
pub const NONLINEAR_STEP: f64 = 0.05;
/// Edge level, relative to the peak, at which the y-domain is too small.
pub const EDGE_REL_TOL: f64 = 1e-8;
/// Tail mass (relative) above which the α-decomposition warns.
pub const LEAK_TOL: f64 = 1e-8;

/// Energy weights `C₀ … C₄`.
pub const ENERGY_WEIGHTS: [f64; 5] = [100.0, 10.0, 1.0, 1.0, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct ScaledState {
    pub s: f64,
    pub n_dim: usize,
    pub k: f64,
    /// First grid point: `-Y` for `N = 1`, `0` otherwise.
    pub y0: f64,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
}

impl ScaledState {
    /// Zero fields on the standard grid for `n_dim` with half-width `y_max`.
    pub fn zeros(n_dim: usize, y_max: f64, k: f64, s: f64) -> Result<Self> {
        if n_dim == 0 || !(y_max > 0.0) || !(k > 0.0) || k * 4.0 > y_max {
            return Err(Error::Parameter(format!("bad scaled grid: N={n_dim}, Y={y_max}, k={k}")));
        }
        let m = (y_max / k).round() as usize;
        let k = y_max / m as f64;
        let (y0, len) = if n_dim == 1 { (-y_max, 2 * m + 1) } else { (0.0, m + 1) };
        Ok(ScaledState { s, n_dim, k, y0, v: vec![0.0; len], w: vec![0.0; len] })
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn y(&self, i: usize) -> f64 {
        self.y0 + i as f64 * self.k
    }

    pub fn y_max(&self) -> f64 {
        self.y(self.len() - 1)
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.y(i)).collect()
    }

    pub fn full_line(&self) -> bool {
        self.n_dim == 1
    }

    /// `∫_{ℝ^N} φ dy` for a field on this grid.
    pub fn integral(&self, field: &[f64]) -> f64 {
        if self.full_line() {
            quad::trapezoid(field, self.k)
        } else {
            radial_integral(field, self.n_dim, self.k)
        }
    }

    /// `∫ (1+|y|²)^m φ² dy`.
    fn weighted_sq(&self, field: &[f64], m: i32) -> f64 {
        let sq: Vec<f64> = field.iter().enumerate().map(|(i, x)| (1.0 + self.y(i).powi(2)).powi(m) * x * x).collect();
        self.integral(&sq)
    }

    /// Centred first derivative (one-sided at the ends, zero at a radial origin).
    fn derivative(&self, field: &[f64]) -> Vec<f64> {
        let n = field.len();
        let k = self.k;
        let mut out = vec![0.0; n];
        for i in 1..n - 1 {
            out[i] = (field[i + 1] - field[i - 1]) / (2.0 * k);
        }
        out[0] = if self.full_line() { (field[1] - field[0]) / k } else { 0.0 };
        out[n - 1] = (field[n - 1] - field[n - 2]) / k;
        out
    }

    /// `‖φ‖²_{H^{1,1}}`.
    pub fn h11_sq(&self, field: &[f64]) -> f64 {
        self.weighted_sq(field, 1) + self.weighted_sq(&self.derivative(field), 1)
    }

    /// `‖φ‖²_{H^{0,1}}`.
    pub fn h01_sq(&self, field: &[f64]) -> f64 {
        self.weighted_sq(field, 1)
    }

    pub fn sup_v(&self) -> f64 {
        self.v.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    fn check_finite(&self) -> Result<()> {
        if self.v.iter().chain(&self.w).all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::Domain(format!("non-finite scaled field at s = {}", self.s)))
        }
    }
}

fn laplacian(st: &ScaledState, field: &[f64]) -> Vec<f64> {
    if st.full_line() {
        let n = field.len();
        let k2 = st.k * st.k;
        let mut out = vec![0.0; n];
        for i in 1..n - 1 {
            out[i] = (field[i + 1] - 2.0 * field[i] + field[i - 1]) / k2;
        }
        out
    } else {
        radial_laplacian(field, st.n_dim, st.k)
    }
}

/// `y/2·∇φ + N/2·φ = ½∇·(yφ)` in flux form with first-order upwind face
/// values taken from the outer cell, so that `Σφ` is conserved.
fn transport(st: &ScaledState, field: &[f64]) -> Vec<f64> {
    let n = field.len();
    let k = st.k;
    let mut out = vec![0.0; n];
    if st.full_line() {
        for i in 1..n - 1 {
            let y = st.y(i);
            let right = y + 0.5 * k;
            let left = y - 0.5 * k;
            let fr = right * if right > 0.0 { field[i + 1] } else { field[i] };
            let fl = left * if left > 0.0 { field[i] } else { field[i - 1] };
            out[i] = 0.5 * (fr - fl) / k;
        }
    } else {
        let dim = st.n_dim as i32;
        out[0] = 0.5 * st.n_dim as f64 * field[1];
        for i in 1..n - 1 {
            let r = i as f64 * k;
            let right = (r + 0.5 * k).powi(dim) * field[i + 1];
            let left = (r - 0.5 * k).powi(dim) * field[i];
            out[i] = 0.5 * (right - left) / (r.powi(dim - 1) * k);
        }
    }
    out
}

/// `K(s) = e^{(N/2)(1+2/N-p)s}`.
pub fn nonlinear_factor(p: f64, n_dim: usize, s: f64) -> f64 {
    let n = n_dim as f64;
    (0.5 * n * (1.0 + 2.0 / n - p) * s).exp()
}

/// Largest stable step for the linear part at scaled time `s`.
pub fn linear_step_limit(st: &ScaledState, calc: &DampingCalculus) -> Result<f64> {
    let c = calc.scaled_coefficients(st.s)?;
    let lambda = 4.0 * st.n_dim.max(1) as f64 / (st.k * st.k);
    let a = 1.0 - c.drift;
    let wave = (a + (a * a + 4.0 * c.stiff * lambda).sqrt()) / lambda;
    let advect = 2.0 * st.k / st.y_max().abs().max(st.y0.abs());
    Ok(0.8 / (1.0 / wave + 1.0 / advect + 0.5 * st.n_dim as f64 + 1.0))
}

/// Step size from the nonlinear term: `c/λ` with `λ = 2X/(1 + √(1 + 4ε_s X))`
/// the growth rate of `v_s = w`, `ε_s w_s = -w + Xv`, where `X = K‖v‖^{p-1}`.
pub fn nonlinear_step_limit(st: &ScaledState, calc: &DampingCalculus, p: f64) -> Result<f64> {
    let c = calc.scaled_coefficients(st.s)?;
    let x = nonlinear_factor(p, st.n_dim, st.s) * st.sup_v().powf(p - 1.0);
    if !(x > 0.0) {
        return Ok(f64::INFINITY);
    }
    let rate = 2.0 * x / (1.0 + (1.0 + 4.0 * c.stiff * x).sqrt());
    Ok(NONLINEAR_STEP / rate)
}

/// One step of size `ds`: `w` semi-implicit in its relaxation term, then `v`
/// explicit with the new `w`. `p = None` switches the nonlinearity off.
pub fn step_scaled(st: &ScaledState, calc: &DampingCalculus, p: Option<f64>, ds: f64) -> Result<ScaledState> {
    if !(ds > 0.0) {
        return Err(Error::Parameter(format!("scaled step must be positive, got {ds}")));
    }
    let c = calc.scaled_coefficients(st.s)?;
    let lap = laplacian(st, &st.v);
    let tw = transport(st, &st.w);
    let tv = transport(st, &st.v);
    let kf = p.map(|p| nonlinear_factor(p, st.n_dim, st.s));
    let a = 1.0 - c.drift;
    let last = st.len() - 1;
    let first = if st.full_line() { 1 } else { 0 };
    let mut next = ScaledState { s: st.s + ds, v: vec![0.0; st.len()], w: vec![0.0; st.len()], ..st.clone() };
    for i in first..last {
        let mut rhs = lap[i] + c.stiff * (tw[i] + st.w[i]);
        if let (Some(p), Some(kf)) = (p, kf) {
            rhs += kf * st.v[i].abs().powf(p);
        }
        let denom = c.stiff + ds * a;
        let w1 = if c.stiff == 0.0 { rhs / a } else { (c.stiff * st.w[i] + ds * rhs) / denom };
        next.w[i] = w1;
        next.v[i] = st.v[i] + ds * (tv[i] + w1);
    }
    Ok(next)
}

/// Cubic resampling of an even radial profile `φ(|x|)` on `[0, L]`.
fn sample_radial(values: &[f64], h: f64, x: f64) -> Result<f64> {
    let r = x.abs();
    quad::cubic_interp(values, 0.0, h, r, true).ok_or(Error::Resampling {
        needed: r,
        available: h * (values.len() - 1) as f64,
    })
}

/// Direct-frame snapshot to scaled variables on a grid of spacing `k` and
/// half-width `y_max`.
pub fn to_scaled(snap: &Snapshot, calc: &DampingCalculus, y_max: f64, k: f64) -> Result<ScaledState> {
    let big_b = calc.big_b(snap.t)?;
    let scale = big_b + 1.0;
    let root = scale.sqrt();
    let n = snap.n_dim as f64;
    let b = calc.b(snap.t);
    let mut st = ScaledState::zeros(snap.n_dim, y_max, k, scale.ln())?;
    let fv = scale.powf(0.5 * n);
    let fw = b * scale.powf(0.5 * n + 1.0);
    for i in 0..st.len() {
        let x = st.y(i) * root;
        st.v[i] = fv * sample_radial(&snap.u, snap.h, x)?;
        st.w[i] = fw * sample_radial(&snap.v, snap.h, x)?;
    }
    Ok(st)
}

/// Inverse of [`to_scaled`] onto the radial grid `r_i = i·h`, `r ≤ l`.
pub fn from_scaled(st: &ScaledState, calc: &DampingCalculus, h: f64, l: f64) -> Result<Snapshot> {
    let coeff = calc.scaled_coefficients(st.s)?;
    if !coeff.t.is_finite() {
        return Err(Error::Domain(format!("t(s) overflows at s = {}", st.s)));
    }
    let t = coeff.t;
    let scale = st.s.exp();
    let root = scale.sqrt();
    let n = st.n_dim as f64;
    let b = calc.b(t);
    let m = (l / h).round() as usize;
    let h = l / m as f64;
    let fv = scale.powf(-0.5 * n);
    let fw = scale.powf(-0.5 * n - 1.0) / b;
    let (origin, even) = if st.full_line() { (st.y0, false) } else { (0.0, true) };
    let mut u = vec![0.0; m + 1];
    let mut ut = vec![0.0; m + 1];
    for i in 0..=m {
        let y = i as f64 * h / root;
        let miss = || Error::Resampling { needed: y, available: st.y_max() };
        u[i] = fv * quad::cubic_interp(&st.v, origin, st.k, y, even).ok_or_else(miss)?;
        ut[i] = fw * quad::cubic_interp(&st.w, origin, st.k, y, even).ok_or_else(miss)?;
    }
    Ok(Snapshot { t, h, n_dim: st.n_dim, u, v: ut })
}

#[derive(Debug, Clone)]
pub struct ScaledConfig {
    pub damping: DampingSpec,
    pub p: f64,
    pub n_dim: usize,
    pub eps: f64,
    pub f: Profile,
    pub g: Profile,
    /// Half-width `Y` of the y-domain.
    pub y_max: f64,
    pub k: f64,
    /// Upper bound on the scaled step.
    pub ds_max: f64,
    pub ds_min: f64,
    pub u_max: f64,
    pub s_max: f64,
    pub report_cadence: Option<f64>,
    pub linear: bool,
}

impl ScaledConfig {
    /// Gaussian `f` of width 1, `g = 0`, `Y = 12`, `k = 0.0125`, `U_max = 1e6`, `s_max = 10`.
    pub fn new(damping: DampingSpec, p: f64, n_dim: usize, eps: f64) -> Self {
        ScaledConfig {
            damping,
            p,
            n_dim,
            eps,
            f: Profile::Gaussian { width: 1.0 },
            g: Profile::Zero,
            y_max: 12.0,
            k: 0.0125,
            ds_max: 1e-2,
            ds_min: 1e-14,
            u_max: 1e6,
            s_max: 10.0,
            report_cadence: None,
            linear: false,
        }
    }

    /// Set `s_max` from a horizon in the original time.
    pub fn with_time_horizon(mut self, t_max: f64) -> Result<Self> {
        let calc = DampingCalculus::new(self.damping.clone());
        self.s_max = calc.big_b(t_max)?.ln_1p();
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0) {
            return Err(Error::Parameter(format!("p must exceed 1, got {}", self.p)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Parameter(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.ds_max > 0.0 && self.ds_min > 0.0 && self.u_max > 0.0 && self.s_max > 0.0) {
            return Err(Error::Parameter("ds_max, ds_min, U_max and s_max must be positive".into()));
        }
        if self.n_dim >= 2 && !(self.f.is_radial() && self.g.is_radial()) {
            return Err(Error::Parameter("radial grids need radial data".into()));
        }
        if self.f.support_radius().max(self.g.support_radius()) > self.y_max {
            return Err(Error::Parameter(format!("data does not fit in Y = {}", self.y_max)));
        }
        Ok(())
    }

    /// Initial state: `v = εf`, `w = b(0)εg`.
    pub fn initial_state(&self, calc: &DampingCalculus) -> Result<ScaledState> {
        let mut st = ScaledState::zeros(self.n_dim, self.y_max, self.k, 0.0)?;
        let b0 = calc.b(0.0);
        let last = st.len() - 1;
        for i in 0..last {
            let y = st.y(i);
            st.v[i] = self.eps * self.f.eval(y);
            st.w[i] = b0 * self.eps * self.g.eval(y);
        }
        if st.full_line() {
            st.v[0] = 0.0;
            st.w[0] = 0.0;
        }
        Ok(st)
    }
}

pub struct ScaledSolver {
    cfg: ScaledConfig,
    calc: DampingCalculus,
    state: ScaledState,
    steps: u64,
}

impl ScaledSolver {
    pub fn new(cfg: ScaledConfig) -> Result<Self> {
        cfg.validate()?;
        let calc = DampingCalculus::new(cfg.damping.clone());
        let state = cfg.initial_state(&calc)?;
        Ok(ScaledSolver { cfg, calc, state, steps: 0 })
    }

    pub fn state(&self) -> &ScaledState {
        &self.state
    }

    pub fn calculus(&self) -> &DampingCalculus {
        &self.calc
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    fn power(&self) -> Option<f64> {
        (!self.cfg.linear).then_some(self.cfg.p)
    }

    /// `‖u‖_∞ = e^{-Ns/2}‖v‖_∞`.
    pub fn u_sup(st: &ScaledState) -> f64 {
        (-0.5 * st.n_dim as f64 * st.s).exp() * st.sup_v()
    }

    fn policy_ds(&self) -> Result<f64> {
        let mut ds = self.cfg.ds_max.min(linear_step_limit(&self.state, &self.calc)?);
        if !self.cfg.linear {
            ds = ds.min(nonlinear_step_limit(&self.state, &self.calc, self.cfg.p)?);
        }
        Ok(ds)
    }

    /// A finite trial step of at most `ds`, halving on failure; `None` on collapse.
    fn trial(&self, mut ds: f64) -> Result<Option<(ScaledState, f64)>> {
        loop {
            let next = step_scaled(&self.state, &self.calc, self.power(), ds)?;
            if next.check_finite().is_ok() {
                return Ok(Some((next, ds)));
            }
            ds *= 0.5;
            if ds < self.cfg.ds_min {
                return Ok(None);
            }
        }
    }

    fn check_edge(&self) -> Result<()> {
        let st = &self.state;
        let n = st.len();
        let peak = st.sup_v();
        let mut edge = st.v[n - 3].abs();
        if st.full_line() {
            edge = edge.max(st.v[2].abs());
        }
        if peak > 0.0 && edge > EDGE_REL_TOL * peak {
            return Err(Error::DomainTooSmall { radius: st.y(n - 3).abs(), edge: st.y_max(), t: st.s });
        }
        Ok(())
    }

    /// March to exactly `s_target`.
    pub fn advance_to(&mut self, s_target: f64) -> Result<()> {
        while self.state.s < s_target {
            let remaining = s_target - self.state.s;
            let ds = self.policy_ds()?.min(remaining);
            let Some((mut next, used)) = self.trial(ds)? else {
                return Err(Error::Integration(format!("scaled step collapsed at s = {}", self.state.s)));
            };
            if (used - remaining).abs() <= 1e-12 * s_target.max(1.0) {
                next.s = s_target;
            }
            self.state = next;
            self.steps += 1;
            self.check_edge()?;
        }
        Ok(())
    }
}

/// March until `‖u‖_∞ ≥ U_max`, step collapse, or `s_max`; `T_num = t(s)`.
pub fn solve_scaled_until_blowup(cfg: &ScaledConfig) -> Result<(LifespanRecord, Vec<ScaledState>)> {
    let mut solver = ScaledSolver::new(cfg.clone())?;
    let mut reports = Vec::new();
    let mut next_report = 0.0;
    let record = |s: f64, reason: Termination, peak: f64, steps: u64, calc: &DampingCalculus| -> Result<LifespanRecord> {
        let c = calc.scaled_coefficients(s)?;
        Ok(LifespanRecord {
            label: cfg.damping.label.clone(),
            n_dim: cfg.n_dim,
            p: cfg.p,
            params: cfg.damping.params_string(),
            eps: cfg.eps,
            t_num: c.t,
            b_of_t: s.exp_m1(),
            reason,
            peak_norm: peak,
            steps,
        })
    };
    loop {
        let s = solver.state.s;
        if let Some(cadence) = cfg.report_cadence {
            if s >= next_report - 1e-12 {
                reports.push(solver.state.clone());
                while next_report <= s + 1e-12 {
                    next_report += cadence;
                }
            }
        }
        if s >= cfg.s_max {
            let peak = ScaledSolver::u_sup(&solver.state);
            return Ok((record(cfg.s_max, Termination::Horizon, peak, solver.steps, &solver.calc)?, reports));
        }
        let mut ds = solver.policy_ds()?.min(cfg.s_max - s);
        if cfg.report_cadence.is_some() {
            ds = ds.min((next_report - s).max(cfg.ds_min));
        }
        let Some((next, used)) = solver.trial(ds)? else {
            let peak = ScaledSolver::u_sup(&solver.state);
            return Ok((record(s, Termination::StepCollapse, peak, solver.steps, &solver.calc)?, reports));
        };
        let peak = ScaledSolver::u_sup(&next);
        if peak >= cfg.u_max {
            // one bisection level: does the half step already cross?
            let half = step_scaled(&solver.state, &solver.calc, solver.power(), 0.5 * used)?;
            let half_peak = ScaledSolver::u_sup(&half);
            let steps = solver.steps + 1;
            let (s_num, peak_norm) = if half.check_finite().is_ok() && half_peak >= cfg.u_max {
                (half.s, half_peak)
            } else {
                (next.s, peak)
            };
            return Ok((record(s_num, Termination::Threshold, peak_norm, steps, &solver.calc)?, reports));
        }
        solver.state = next;
        if (solver.state.s - cfg.s_max).abs() <= 1e-12 * cfg.s_max {
            solver.state.s = cfg.s_max;
        }
        if let Some(cadence) = cfg.report_cadence {
            if (solver.state.s - next_report).abs() <= 1e-9 * cadence {
                solver.state.s = next_report;
            }
        }
        solver.steps += 1;
        solver.check_edge()?;
    }
}

/// `φ₀ = (4π)^{-N/2} e^{-|y|²/4}`.
pub fn phi0(y: f64, n_dim: usize) -> f64 {
    (4.0 * PI).powf(-0.5 * n_dim as f64) * (-0.25 * y * y).exp()
}

/// `ψ₀ = Δφ₀ = (|y|²/4 - N/2) φ₀`.
pub fn psi0(y: f64, n_dim: usize) -> f64 {
    (0.25 * y * y - 0.5 * n_dim as f64) * phi0(y, n_dim)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub alpha: f64,
    pub dalpha_ds: f64,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
}

/// `α = ∫v`, `α' = ∫w`, `f = v - αφ₀`, `g = w - α'φ₀ - αψ₀`.
pub fn decompose_alpha(st: &ScaledState) -> Decomposition {
    let n = st.n_dim;
    let alpha = st.integral(&st.v);
    let dalpha_ds = st.integral(&st.w);
    let f: Vec<f64> = (0..st.len()).map(|i| st.v[i] - alpha * phi0(st.y(i), n)).collect();
    let g: Vec<f64> =
        (0..st.len()).map(|i| st.w[i] - dalpha_ds * phi0(st.y(i), n) - alpha * psi0(st.y(i), n)).collect();
    let tail = tail_mass(st, &st.v).max(tail_mass(st, &st.w));
    if tail > LEAK_TOL {
        log::warn!("scaled fields leak at the boundary: relative tail mass {tail:e} at s = {}", st.s);
    }
    Decomposition { alpha, dalpha_ds, f, g }
}

/// Mass of `|φ|` within the outer 10% of the domain, relative to the total.
fn tail_mass(st: &ScaledState, field: &[f64]) -> f64 {
    let abs: Vec<f64> = field.iter().map(|x| x.abs()).collect();
    let total = st.integral(&abs);
    if total == 0.0 {
        return 0.0;
    }
    let cut = 0.9 * st.y_max();
    let outer: Vec<f64> = abs.iter().enumerate().map(|(i, x)| if st.y(i).abs() >= cut { *x } else { 0.0 }).collect();
    st.integral(&outer) / total
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub s: f64,
    pub e: [f64; 6],
    pub alpha: f64,
    pub dalpha_ds: f64,
    pub m: f64,
    pub mean_f: f64,
    pub mean_g: f64,
    pub identity_residual: f64,
    /// `‖f‖²_{H^{1,1}} + ε_s‖g‖²_{H^{0,1}} + α² + ε_s α'²`.
    pub bracket: f64,
}

impl EnergyReport {
    pub const CSV_HEADER: &'static str = "s,E0,E1,E2,E3,E4,E5,alpha,dalpha,M,mean_f,mean_g,residual";

    pub fn to_csv_row(&self) -> String {
        let mut cols = vec![format!("{:.16e}", self.s)];
        cols.extend(self.e.iter().map(|x| format!("{x:.16e}")));
        for x in [self.alpha, self.dalpha_ds, self.m, self.mean_f, self.mean_g, self.identity_residual] {
            cols.push(format!("{x:.16e}"));
        }
        cols.join(",")
    }
}

/// CSV text for an energy series.
pub fn write_energy_csv(reports: &[EnergyReport]) -> String {
    let mut out = String::from(EnergyReport::CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

/// `½(a² + ε b²) + c·a'… ` style integrands share this shape:
/// `∫ weight·[½(p_y² + ε q²) + λ p² + 2λ ε p q] dy`.
fn quadratic_form(st: &ScaledState, weight: &dyn Fn(f64) -> f64, py: &[f64], p: &[f64], q: &[f64], eps_s: f64, lam: f64) -> f64 {
    let vals: Vec<f64> = (0..st.len())
        .map(|i| {
            let w = weight(st.y(i));
            w * (0.5 * (py[i] * py[i] + eps_s * q[i] * q[i]) + lam * p[i] * p[i] + 2.0 * lam * eps_s * p[i] * q[i])
        })
        .collect();
    st.integral(&vals)
}

/// Energies `E₀ … E₅` (`N = 1`) along a series of states, with the running
/// supremum `M` from the first state and a discrete energy-identity residual.
pub fn compute_energies_1d(series: &[ScaledState], calc: &DampingCalculus, p: f64) -> Result<Vec<EnergyReport>> {
    let mut out: Vec<EnergyReport> = Vec::with_capacity(series.len());
    let mut m_sup = 0.0f64;
    for st in series {
        if st.n_dim != 1 {
            return Err(Error::Parameter("energies are implemented for N = 1 only".into()));
        }
        let c = calc.scaled_coefficients(st.s)?;
        let eps_s = c.stiff;
        let d = decompose_alpha(st);
        let mean_f = st.integral(&d.f);
        let mean_g = st.integral(&d.g);
        let norm_f = st.integral(&d.f.iter().map(|x| x.abs()).collect::<Vec<_>>());
        let norm_g = st.integral(&d.g.iter().map(|x| x.abs()).collect::<Vec<_>>());
        let scale = norm_f + norm_g + d.alpha.abs() + d.dalpha_ds.abs();
        if mean_f.abs() > 1e-6 * scale.max(f64::MIN_POSITIVE) || mean_g.abs() > 1e-6 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::MeanZero(format!("∫f = {mean_f:e}, ∫g = {mean_g:e} at s = {}", st.s)));
        }
        let big_f = quad::cumulative_trapezoid(&d.f, st.k);
        let big_g = quad::cumulative_trapezoid(&d.g, st.k);
        let fy = st.derivative(&d.f);
        let one = |_: f64| 1.0;
        let ysq = |y: f64| y * y;
        let e0 = quadratic_form(st, &one, &d.f, &big_f, &big_g, eps_s, 0.5);
        let e1 = quadratic_form(st, &one, &fy, &d.f, &d.g, eps_s, 1.0);
        let e2 = quadratic_form(st, &ysq, &fy, &d.f, &d.g, eps_s, 0.5);
        let e3 = 0.5 * eps_s * d.dalpha_ds.powi(2) + (-0.5 * st.s).exp() * d.alpha.powi(2);
        let e4 = 0.5 * d.alpha.powi(2) + eps_s * d.alpha * d.dalpha_ds;
        let parts = [e0, e1, e2, e3, e4];
        let e5: f64 = parts.iter().zip(ENERGY_WEIGHTS).map(|(e, w)| e * w).sum();
        m_sup = m_sup.max(st.h11_sq(&st.v) + eps_s * st.h01_sq(&st.w));
        let bracket = st.h11_sq(&d.f) + eps_s * st.h01_sq(&d.g) + d.alpha.powi(2) + eps_s * d.dalpha_ds.powi(2);
        out.push(EnergyReport {
            s: st.s,
            e: [e0, e1, e2, e3, e4, e5],
            alpha: d.alpha,
            dalpha_ds: d.dalpha_ds,
            m: m_sup,
            mean_f,
            mean_g,
            identity_residual: 0.0,
            bracket,
        });
    }
    fill_identity_residual(&mut out, series, p);
    Ok(out)
}

/// `|dE₅/ds + ½Σ_{j≤3} C_j E_j + L₅ - R₅|` with `L₅ ≈ ‖f‖²_{H^{1,1}} + ‖g‖²_{H^{0,1}} + α'²`
/// and `R₅ ≈ e^{(3-p)s}E₅^p + e^{(3-p)s/2}E₅^{(p+1)/2}`.
fn fill_identity_residual(reports: &mut [EnergyReport], series: &[ScaledState], p: f64) {
    let n = reports.len();
    if n < 2 {
        return;
    }
    let e5: Vec<f64> = reports.iter().map(|r| r.e[5]).collect();
    let s: Vec<f64> = reports.iter().map(|r| r.s).collect();
    for i in 0..n {
        let (a, b) = if i == 0 { (0, 1) } else if i == n - 1 { (n - 2, n - 1) } else { (i - 1, i + 1) };
        let de5 = (e5[b] - e5[a]) / (s[b] - s[a]);
        let r = &reports[i];
        let damp: f64 = (0..4).map(|j| ENERGY_WEIGHTS[j] * r.e[j]).sum::<f64>() * 0.5;
        let st = &series[i];
        let d = decompose_alpha(st);
        let l5 = st.h11_sq(&d.f) + st.h01_sq(&d.g) + d.dalpha_ds.powi(2);
        let e = r.e[5].max(0.0);
        let r5 = ((3.0 - p) * r.s).exp() * e.powf(p) + (0.5 * (3.0 - p) * r.s).exp() * e.powf(0.5 * (p + 1.0));
        reports[i].identity_residual = (de5 + damp + l5 - r5).abs();
    }
}

/// Residual of `ε_s α'' = ε_s α' - α' + d α' + K∫|v|^p` at interior reports,
/// normalised by the largest term; `α'` is taken from `∫w`.
pub fn check_alpha_ode(series: &[ScaledState], calc: &DampingCalculus, p: Option<f64>) -> Result<Vec<f64>> {
    if series.len() < 3 {
        return Err(Error::InsufficientData(format!("{} reports; need at least 3", series.len())));
    }
    let dalpha: Vec<f64> = series.iter().map(|st| st.integral(&st.w)).collect();
    let mut out = Vec::with_capacity(series.len() - 2);
    for i in 1..series.len() - 1 {
        let st = &series[i];
        let (sa, sb) = (series[i - 1].s, series[i + 1].s);
        let d2 = (dalpha[i + 1] - dalpha[i - 1]) / (sb - sa);
        let c = calc.scaled_coefficients(st.s)?;
        let forcing = match p {
            Some(p) => nonlinear_factor(p, st.n_dim, st.s) * st.integral(&st.v.iter().map(|x| x.abs().powf(p)).collect::<Vec<_>>()),
            None => 0.0,
        };
        let terms = [c.stiff * d2, c.stiff * dalpha[i], dalpha[i], c.drift * dalpha[i], forcing];
        let resid = terms[0] - terms[1] + terms[2] - terms[3] - terms[4];
        let scale = terms.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        out.push(if scale == 0.0 { 0.0 } else { resid.abs() / scale });
    }
    Ok(out)
}

/// Relative `L²(dy)` distance between two states on the same grid.
pub fn relative_l2(a: &ScaledState, b: &ScaledState) -> Result<f64> {
    if a.len() != b.len() || a.n_dim != b.n_dim || (a.k - b.k).abs() > 1e-15 * a.k {
        return Err(Error::Parameter("states live on different grids".into()));
    }
    let diff: Vec<f64> = a.v.iter().zip(&b.v).map(|(x, y)| (x - y).powi(2)).collect();
    let base: Vec<f64> = b.v.iter().map(|x| x * x).collect();
    Ok((a.integral(&diff) / b.integral(&base)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameComparison {
    pub s: f64,
    pub t: f64,
    pub rel_l2: f64,
}

/// Evolve the same data directly and in the scaled frame to `s`, map the
/// direct solution with [`to_scaled`], and compare `v` in relative `L²`.
pub fn compare_frames(cfg: &ScaledConfig, h: f64, s: f64) -> Result<(FrameComparison, Vec<ScaledState>)> {
    if cfg.n_dim != 1 {
        return Err(Error::Parameter("frame comparison runs on N = 1".into()));
    }
    let calc = DampingCalculus::new(cfg.damping.clone());
    let t = calc.scaled_coefficients(s)?.t;
    let mut direct = crate::wave::SolveConfig::new(cfg.damping.clone(), cfg.p, 1, cfg.eps);
    direct.f = cfg.f.clone();
    direct.g = cfg.g.clone();
    direct.h = h;
    direct.linear = cfg.linear;
    direct = direct.with_horizon(t);
    direct.l = direct.l.max(cfg.y_max * (0.5 * s).exp() + 1.0);
    let mut solver = crate::wave::WaveSolver::new(direct)?;
    solver.advance_to(t)?;
    let mapped = to_scaled(&solver.snapshot(), &calc, cfg.y_max, cfg.k)?;

    let mut run = cfg.clone();
    run.s_max = s;
    run.report_cadence = Some(s / 20.0);
    let (_, reports) = solve_scaled_until_blowup(&run)?;
    let native = reports
        .last()
        .filter(|r| (r.s - s).abs() <= 1e-9 * s.max(1.0))
        .ok_or_else(|| Error::Integration(format!("scaled run stopped before s = {s}")))?;
    let rel_l2 = relative_l2(&mapped, native)?;
    Ok((FrameComparison { s, t, rel_l2 }, reports))
}
