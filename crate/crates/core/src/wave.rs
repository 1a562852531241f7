//! Radial method-of-lines solver for `u_tt - Δu + b(t) u_t = |u|^p`.
//!
//! The grid is `r_i = i·h`, `i = 0..=M`, with `r_M = L` held at zero and a
//! mirror ghost at `r = 0`. For `N = 1` the grid is the half line of even data
//! on `ℝ`. Time stepping is leapfrog with the damping averaged over
//! `u^{n±1}`, so the damping term never limits the step.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::damping::{DampingCalculus, DampingSpec};
use crate::error::{Error, Result};
use crate::profile::Profile;
use crate::quad;

/// Edge level at which the solution counts as having reached the boundary.
pub const EDGE_TOL: f64 = 1e-10;
/// Nonlinear step control: `dt ≤ NONLINEAR_STEP · ‖u‖^{-(p-1)/2}`.
pub const NONLINEAR_STEP: f64 = 0.02;

/// Discrete `Δ = ∂_rr + (N-1)/r ∂_r` on a uniform radial grid; the first entry
/// uses the symmetric limit `2N(u₁-u₀)/h²`, the last a quadratic extrapolation.
pub fn radial_laplacian(field: &[f64], n_dim: usize, h: f64) -> Vec<f64> {
    let mut out = vec![0.0; field.len()];
    radial_laplacian_into(field, n_dim, h, &mut out);
    out
}

fn radial_laplacian_into(u: &[f64], n_dim: usize, h: f64, out: &mut [f64]) {
    let m = u.len();
    if m < 3 {
        out.iter_mut().for_each(|o| *o = 0.0);
        return;
    }
    let h2 = h * h;
    let nm1 = (n_dim - 1) as f64;
    out[0] = 2.0 * n_dim as f64 * (u[1] - u[0]) / h2;
    for i in 1..m - 1 {
        let r = i as f64 * h;
        out[i] = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / h2 + nm1 / r * (u[i + 1] - u[i - 1]) / (2.0 * h);
    }
    let i = m - 1;
    let ghost = 3.0 * u[i] - 3.0 * u[i - 1] + u[i - 2];
    let r = i as f64 * h;
    out[i] = (ghost - 2.0 * u[i] + u[i - 1]) / h2 + nm1 / r * (ghost - u[i - 1]) / (2.0 * h);
}

/// `∫_{ℝ^N} φ dx` for a radial grid function (trapezoid in `r`).
pub fn radial_integral(field: &[f64], n_dim: usize, h: f64) -> f64 {
    let w: Vec<f64> = field.iter().enumerate().map(|(i, v)| v * (i as f64 * h).powi(n_dim as i32 - 1)).collect();
    quad::sphere_area(n_dim) * quad::trapezoid(&w, h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Threshold,
    StepCollapse,
    Horizon,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Threshold => "threshold",
            Termination::StepCollapse => "step_collapse",
            Termination::Horizon => "horizon",
        })
    }
}

impl std::str::FromStr for Termination {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "threshold" => Ok(Termination::Threshold),
            "step_collapse" => Ok(Termination::StepCollapse),
            "horizon" => Ok(Termination::Horizon),
            other => Err(Error::Parse(format!("unknown termination reason `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifespanRecord {
    pub label: String,
    pub n_dim: usize,
    pub p: f64,
    pub params: String,
    pub eps: f64,
    /// Physical time; `+∞` when the scaled solver's `t(s)` overflows.
    pub t_num: f64,
    pub b_of_t: f64,
    pub reason: Termination,
    pub peak_norm: f64,
    pub steps: u64,
}

impl LifespanRecord {
    pub const CSV_HEADER: &'static str = "label,N,p,beta_or_params,eps,T_num,B_of_T,reason,peak_norm,steps";

    pub fn blew_up(&self) -> bool {
        self.reason == Termination::Threshold
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{:.16e},{},{:.16e},{:.16e},{:.16e},{},{:.16e},{}",
            self.label, self.n_dim, self.p, self.params, self.eps, self.t_num, self.b_of_t, self.reason, self.peak_norm, self.steps
        )
    }

    pub fn from_csv_row(line: &str) -> Result<Self> {
        let cols: Vec<&str> = line.trim().split(',').collect();
        if cols.len() != 10 {
            return Err(Error::Parse(format!("expected 10 columns, got {}: `{line}`", cols.len())));
        }
        let num = |i: usize| -> Result<f64> {
            cols[i].trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number `{}` in column {i}", cols[i])))
        };
        Ok(LifespanRecord {
            label: cols[0].to_string(),
            n_dim: cols[1].trim().parse().map_err(|_| Error::Parse(format!("bad dimension `{}`", cols[1])))?,
            p: num(2)?,
            params: cols[3].to_string(),
            eps: num(4)?,
            t_num: num(5)?,
            b_of_t: num(6)?,
            reason: cols[7].trim().parse()?,
            peak_norm: num(8)?,
            steps: cols[9].trim().parse().map_err(|_| Error::Parse(format!("bad step count `{}`", cols[9])))?,
        })
    }
}

/// Read records from CSV text with a header row.
pub fn read_records(text: &str) -> Result<Vec<LifespanRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .skip_while(|l| l.starts_with("label,"))
        .map(LifespanRecord::from_csv_row)
        .collect()
}

pub fn write_records(records: &[LifespanRecord]) -> String {
    let mut out = String::from(LifespanRecord::CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

/// Grid fields at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub h: f64,
    pub n_dim: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl Snapshot {
    pub fn r(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    pub fn sup_norm(&self) -> f64 {
        self.u.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# t={:.16e} h={:.16e} N={}", self.t, self.h, self.n_dim)?;
        for (i, (u, v)) in self.u.iter().zip(&self.v).enumerate() {
            writeln!(out, "{:.16e} {:.16e} {:.16e}", self.r(i), u, v)?;
        }
        Ok(())
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(f)
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty snapshot".into()))??;
        let mut t = None;
        let mut h = None;
        let mut n_dim = None;
        for tok in header.trim_start_matches('#').split_whitespace() {
            match tok.split_once('=') {
                Some(("t", v)) => t = v.parse().ok(),
                Some(("h", v)) => h = v.parse().ok(),
                Some(("N", v)) => n_dim = v.parse().ok(),
                _ => {}
            }
        }
        let (t, h, n_dim) = match (t, h, n_dim) {
            (Some(t), Some(h), Some(n)) => (t, h, n),
            _ => return Err(Error::Parse(format!("bad snapshot header `{header}`"))),
        };
        let mut u = Vec::new();
        let mut v = Vec::new();
        for line in lines {
            let line = line?;
            let cols: Vec<f64> = line
                .split_whitespace()
                .map(|c| c.parse::<f64>().map_err(|_| Error::Parse(format!("bad snapshot row `{line}`"))))
                .collect::<Result<_>>()?;
            if cols.len() != 3 {
                return Err(Error::Parse(format!("snapshot rows need 3 columns: `{line}`")));
            }
            u.push(cols[1]);
            v.push(cols[2]);
        }
        Ok(Snapshot { t, h, n_dim, u, v })
    }
}

#[derive(Debug, Clone)]
pub struct SolveConfig {
    pub damping: DampingSpec,
    pub p: f64,
    pub n_dim: usize,
    pub eps: f64,
    pub f: Profile,
    pub g: Profile,
    /// Outer radius `L`.
    pub l: f64,
    pub h: f64,
    pub cfl: f64,
    pub u_max: f64,
    pub dt_min: f64,
    pub t_max: f64,
    pub snapshot_cadence: Option<f64>,
    /// Drop `|u|^p` (linear damped wave).
    pub linear: bool,
}

impl SolveConfig {
    /// Defaults: Gaussian `f` of width 1, `g = 0`, `h = 0.05`, `cfl = 0.5`,
    /// `U_max = 1e6`, `T_max = 100` and `L` sized for causality.
    pub fn new(damping: DampingSpec, p: f64, n_dim: usize, eps: f64) -> Self {
        let f = Profile::Gaussian { width: 1.0 };
        let t_max = 100.0;
        SolveConfig {
            damping,
            p,
            n_dim,
            eps,
            l: f.support_radius() + t_max + 1.0,
            f,
            g: Profile::Zero,
            h: 0.05,
            cfl: 0.5,
            u_max: 1e6,
            dt_min: 1e-12,
            t_max,
            snapshot_cadence: None,
            linear: false,
        }
    }

    /// Set `T_max` and grow `L` to `support + T_max + 1`.
    pub fn with_horizon(mut self, t_max: f64) -> Self {
        self.t_max = t_max;
        self.l = self.f.support_radius().max(self.g.support_radius()) + t_max + 1.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0) {
            return Err(Error::Parameter(format!("p must exceed 1, got {}", self.p)));
        }
        if self.n_dim == 0 {
            return Err(Error::Parameter("dimension must be at least 1".into()));
        }
        if !(self.cfl > 0.0 && self.cfl <= 0.9) {
            return Err(Error::Parameter(format!("cfl must lie in (0, 0.9], got {}", self.cfl)));
        }
        if !(self.h > 0.0 && self.l > 4.0 * self.h) {
            return Err(Error::Parameter(format!("need 0 < 4h < L, got h = {}, L = {}", self.h, self.l)));
        }
        if !(self.u_max > 0.0 && self.dt_min > 0.0 && self.t_max > 0.0) {
            return Err(Error::Parameter("U_max, dt_min and T_max must be positive".into()));
        }
        if !self.f.is_radial() || !self.g.is_radial() {
            return Err(Error::Parameter("wave solver data must be radial".into()));
        }
        Ok(())
    }

    /// `∫f + B₀∫g`, which must be positive for the blowup statements to apply.
    pub fn sign_condition(&self, calc: &DampingCalculus) -> f64 {
        let gi = if self.g.is_zero() { 0.0 } else { calc.b0() * self.g.integral(self.n_dim) };
        self.f.integral(self.n_dim) + gi
    }
}

/// Right-hand side `S(r, t)` added to the equation (manufactured solutions).
pub type Source<'a> = &'a (dyn Fn(f64, f64) -> f64 + Sync);

pub struct WaveSolver<'a> {
    cfg: SolveConfig,
    calc: DampingCalculus,
    source: Option<Source<'a>>,
    h: f64,
    t: f64,
    dt: f64,
    u: Vec<f64>,
    u_prev: Vec<f64>,
    lap: Vec<f64>,
    scratch: Vec<f64>,
    steps: u64,
}

impl<'a> WaveSolver<'a> {
    pub fn new(cfg: SolveConfig) -> Result<Self> {
        Self::build(cfg, None)
    }

    pub fn with_source(cfg: SolveConfig, source: Source<'a>) -> Result<Self> {
        Self::build(cfg, Some(source))
    }

    fn build(cfg: SolveConfig, source: Option<Source<'a>>) -> Result<Self> {
        cfg.validate()?;
        let calc = DampingCalculus::new(cfg.damping.clone());
        let m = (cfg.l / cfg.h).round() as usize;
        let h = cfg.l / m as f64;
        let grid: Vec<f64> = (0..=m).map(|i| i as f64 * h).collect();
        let mut u: Vec<f64> = grid.iter().map(|&r| cfg.eps * cfg.f.eval(r)).collect();
        u[m] = 0.0;
        let v0: Vec<f64> = grid.iter().map(|&r| cfg.eps * cfg.g.eval(r)).collect();
        let dt = cfg.cfl * h;
        let mut solver = WaveSolver {
            calc,
            source,
            h,
            t: 0.0,
            dt,
            u_prev: vec![0.0; m + 1],
            lap: vec![0.0; m + 1],
            scratch: vec![0.0; m + 1],
            u,
            steps: 0,
            cfg,
        };
        solver.install_history(&v0, dt);
        Ok(solver)
    }

    pub fn config(&self) -> &SolveConfig {
        &self.cfg
    }

    pub fn calculus(&self) -> &DampingCalculus {
        &self.calc
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn sup_norm(&self) -> f64 {
        self.u.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `A = Δu + |u|^p + S` at the current level, into `self.lap`.
    fn accel(&mut self) {
        radial_laplacian_into(&self.u, self.cfg.n_dim, self.h, &mut self.lap);
        let p = self.cfg.p;
        let linear = self.cfg.linear;
        for (i, a) in self.lap.iter_mut().enumerate() {
            if !linear {
                *a += self.u[i].abs().powf(p);
            }
            if let Some(src) = self.source {
                *a += src(i as f64 * self.h, self.t);
            }
        }
    }

    /// Velocity at the current level implied by the two-step history.
    pub fn velocity(&mut self) -> Vec<f64> {
        self.accel();
        let theta = self.calc.b(self.t) * self.dt / 2.0;
        let dt = self.dt;
        self.u
            .iter()
            .zip(&self.u_prev)
            .zip(&self.lap)
            .map(|((u, up), a)| ((u - up) / dt + 0.5 * dt * a) / (1.0 + theta))
            .collect()
    }

    /// Rebuild `u_prev` so that the next step of size `dt` is a second-order
    /// Taylor step from `(u, v)`.
    fn install_history(&mut self, v: &[f64], dt: f64) {
        self.accel();
        let b = self.calc.b(self.t);
        let theta = b * dt / 2.0;
        for i in 0..self.u.len() {
            self.u_prev[i] = self.u[i] - (1.0 + theta) * dt * v[i] + 0.5 * dt * dt * self.lap[i];
        }
        self.dt = dt;
    }

    /// Change the step size, keeping the current `(u, u_t)`.
    pub fn set_dt(&mut self, dt: f64) {
        if dt != self.dt {
            let v = self.velocity();
            self.install_history(&v, dt);
        }
    }

    pub fn snapshot(&mut self) -> Snapshot {
        let v = self.velocity();
        Snapshot { t: self.t, h: self.h, n_dim: self.cfg.n_dim, u: self.u.clone(), v }
    }

    /// Candidate `u^{n+1}` into `self.scratch`; false if it is not finite.
    fn trial_step(&mut self) -> bool {
        self.accel();
        let theta = self.calc.b(self.t) * self.dt / 2.0;
        let dt2 = self.dt * self.dt;
        let last = self.u.len() - 1;
        let mut finite = true;
        for i in 0..last {
            let next = (2.0 * self.u[i] - (1.0 - theta) * self.u_prev[i] + dt2 * self.lap[i]) / (1.0 + theta);
            finite &= next.is_finite();
            self.scratch[i] = next;
        }
        self.scratch[last] = 0.0;
        finite
    }

    fn commit(&mut self) {
        std::mem::swap(&mut self.u_prev, &mut self.u);
        std::mem::swap(&mut self.u, &mut self.scratch);
        self.t += self.dt;
        self.steps += 1;
    }

    /// One step of the current size. Non-finite updates are retried at half
    /// the step down to `dt_min`; returns false on collapse.
    pub fn step(&mut self) -> Result<bool> {
        loop {
            if self.trial_step() {
                self.commit();
                return self.check_edge().map(|_| true);
            }
            let half = 0.5 * self.dt;
            if half < self.cfg.dt_min {
                return Ok(false);
            }
            self.set_dt(half);
        }
    }

    fn check_edge(&self) -> Result<()> {
        let m = self.u.len();
        let edge = self.u[m - 3].abs();
        if edge > EDGE_TOL {
            return Err(Error::DomainTooSmall { radius: (m - 3) as f64 * self.h, edge: self.cfg.l, t: self.t });
        }
        Ok(())
    }

    /// Step size the policy wants now: the wave CFL step, shrunk near blowup.
    fn policy_dt(&self) -> f64 {
        let base = self.cfg.cfl * self.h;
        if self.cfg.linear {
            return base;
        }
        let m = self.sup_norm();
        if m <= 0.0 {
            return base;
        }
        base.min(NONLINEAR_STEP * m.powf(-(self.cfg.p - 1.0) / 2.0))
    }

    /// March to exactly `t_target` (the last step is shortened).
    pub fn advance_to(&mut self, t_target: f64) -> Result<()> {
        while self.t < t_target {
            let want = self.policy_dt();
            if want < self.dt / 1.5 {
                self.set_dt(want);
            }
            let remaining = t_target - self.t;
            if remaining < self.dt * (1.0 + 1e-9) {
                self.set_dt(remaining);
            }
            if !self.step()? {
                return Err(Error::Integration(format!("step collapsed at t = {}", self.t)));
            }
            if remaining < self.dt * (1.0 + 1e-9) || (t_target - self.t).abs() <= 1e-12 * t_target.max(1.0) {
                self.t = t_target;
                break;
            }
        }
        Ok(())
    }
}

/// March until `‖u‖_∞ ≥ U_max`, step collapse, or `T_max`.
pub fn solve_until_blowup(cfg: &SolveConfig) -> Result<(LifespanRecord, Vec<Snapshot>)> {
    let mut solver = WaveSolver::new(cfg.clone())?;
    let calc = solver.calculus().clone();
    let mut snaps = Vec::new();
    let mut next_snap = 0.0;
    let record = |t: f64, reason: Termination, peak: f64, steps: u64| -> Result<LifespanRecord> {
        Ok(LifespanRecord {
            label: cfg.damping.label.clone(),
            n_dim: cfg.n_dim,
            p: cfg.p,
            params: cfg.damping.params_string(),
            eps: cfg.eps,
            t_num: t,
            b_of_t: calc.big_b(t)?,
            reason,
            peak_norm: peak,
            steps,
        })
    };
    loop {
        if let Some(cadence) = cfg.snapshot_cadence {
            if solver.t() >= next_snap {
                snaps.push(solver.snapshot());
                next_snap += cadence;
                while next_snap <= solver.t() {
                    next_snap += cadence;
                }
            }
        }
        if solver.t() >= cfg.t_max {
            let peak = solver.sup_norm();
            return Ok((record(cfg.t_max, Termination::Horizon, peak, solver.steps())?, snaps));
        }
        let want = solver.policy_dt();
        if want < solver.dt() / 1.5 {
            solver.set_dt(want);
        }
        let remaining = cfg.t_max - solver.t();
        if remaining < solver.dt() {
            solver.set_dt(remaining);
        }
        let t0 = solver.t();
        if !solver.trial_step() {
            let half = 0.5 * solver.dt();
            if half < cfg.dt_min {
                let peak = solver.sup_norm();
                return Ok((record(t0, Termination::StepCollapse, peak, solver.steps())?, snaps));
            }
            solver.set_dt(half);
            continue;
        }
        let peak = solver.scratch.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if peak >= cfg.u_max {
            // one bisection level: does the half step already cross?
            let dt = solver.dt();
            solver.set_dt(0.5 * dt);
            let half_ok = solver.trial_step();
            let half_peak = solver.scratch.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let steps = solver.steps() + 1;
            let (t_num, peak_norm) =
                if half_ok && half_peak >= cfg.u_max { (t0 + 0.5 * dt, half_peak) } else { (t0 + dt, peak) };
            return Ok((record(t_num, Termination::Threshold, peak_norm, steps)?, snaps));
        }
        solver.commit();
        if remaining <= solver.dt() * (1.0 + 1e-12) {
            solver.t = cfg.t_max;
        }
        solver.check_edge()?;
    }
}

/// `½∫(u_t² + u_r²) dx` for a snapshot.
pub fn linear_energy(s: &Snapshot) -> f64 {
    let h = s.h;
    let m = s.u.len();
    let mut dens = vec![0.0; m];
    for i in 0..m {
        let ur = if i == 0 {
            0.0
        } else if i + 1 < m {
            (s.u[i + 1] - s.u[i - 1]) / (2.0 * h)
        } else {
            (s.u[i] - s.u[i - 1]) / h
        };
        dens[i] = 0.5 * (s.v[i] * s.v[i] + ur * ur);
    }
    radial_integral(&dens, s.n_dim, h)
}

#[derive(Debug, Clone, Copy)]
pub struct ConvergenceReport {
    pub hs: [f64; 3],
    pub errors: [f64; 3],
    pub order: f64,
}

/// Observed `L²` order against `u = e^{-t} e^{-r²}` with the matching
/// forcing, at `t = 1` for `h, h/2, h/4` (`dt = cfl·h`).
pub fn convergence_order(cfg: &SolveConfig, h0: f64) -> Result<ConvergenceReport> {
    let calc = DampingCalculus::new(cfg.damping.clone());
    let n = cfg.n_dim as f64;
    let p = cfg.p;
    let linear = cfg.linear;
    let exact = |r: f64, t: f64| (-t - r * r).exp();
    let source = move |r: f64, t: f64| {
        let u = exact(r, t);
        let forcing = u * (1.0 - calc.b(t)) - (4.0 * r * r - 2.0 * n) * u;
        if linear {
            forcing
        } else {
            forcing - u.abs().powf(p)
        }
    };
    let t_end = 1.0;
    let mut hs = [0.0; 3];
    let mut errors = [0.0; 3];
    for level in 0..3 {
        let h = h0 / f64::powi(2.0, level as i32);
        let mut c = cfg.clone();
        c.eps = 1.0;
        c.f = Profile::Gaussian { width: 1.0 };
        c.g = Profile::Zero;
        c.l = 8.0;
        c.h = h;
        c.u_max = f64::INFINITY;
        c.t_max = t_end;
        let mut solver = WaveSolver::with_source(c, &source)?;
        // u_t(0) = -e^{-r²}
        let v0: Vec<f64> = (0..solver.u.len()).map(|i| -exact(i as f64 * solver.h, 0.0)).collect();
        let dt = solver.dt;
        solver.install_history(&v0, dt);
        solver.advance_to(t_end)?;
        let diff: Vec<f64> = solver
            .u
            .iter()
            .enumerate()
            .map(|(i, u)| (u - exact(i as f64 * solver.h, t_end)).powi(2))
            .collect();
        hs[level] = solver.h;
        errors[level] = radial_integral(&diff, cfg.n_dim, solver.h).sqrt();
    }
    let order = if errors.iter().all(|&e| e == 0.0) {
        f64::INFINITY
    } else {
        let lx: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
        let ly: Vec<f64> = errors.iter().map(|e| e.max(1e-300).ln()).collect();
        quad::linear_fit(&lx, &ly)?.slope
    };
    Ok(ConvergenceReport { hs, errors, order })
}
