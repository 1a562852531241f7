//! Damping-coefficient calculus.
//!
//! A [`DampingSpec`] names one of the built-in coefficient families `b(t)`.
//! [`DampingCalculus`] evaluates everything the rest of the crate needs from
//! it: `b` and `b'` in closed form, the B-time `B(t) = ∫₀ᵗ 1/b` and its
//! inverse, the weight `Φ(t) = ∫ₜ^∞ exp(-∫ₜˢ b) ds` (with `B₀ = Φ(0)`), and
//! the coefficients of the self-similar frame as functions of scaled time.

use std::fmt;

use crate::error::{Error, Result};
use crate::quad;

pub const DEFAULT_QUAD_TOL: f64 = 1e-10;
pub const DEFAULT_TRUNC_EXPONENT: f64 = 40.0;
pub const DEFAULT_HORIZON: f64 = 1e4;
/// Largest time the bracketing inverse of `B` will try.
pub const OVERFLOW_GUARD: f64 = 1e300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    /// `b(t) = (1+t)^(-β)`
    PowerLaw { beta: f64 },
    /// `b(t) = μ/(1+t)`
    ScaleInvariant { mu: f64 },
    /// `b(t) = ∏_{k=1}^n ℓ_k(t)`, `ℓ₁ = 1+t`, `ℓ_{k+1} = 1 + log ℓ_k`
    LogTower { n: u32 },
    /// `b(t) = c`
    Constant { c: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DampingSpec {
    pub family: Family,
    pub label: String,
}

impl DampingSpec {
    pub fn new(family: Family) -> Result<Self> {
        match family {
            Family::PowerLaw { beta } if !beta.is_finite() => {
                return Err(Error::Parameter(format!("power-law exponent must be finite, got {beta}")))
            }
            Family::ScaleInvariant { mu } if !(mu > 0.0 && mu.is_finite()) => {
                return Err(Error::Parameter(format!("scale-invariant damping needs mu > 0, got {mu}")))
            }
            Family::LogTower { n } if n == 0 => {
                return Err(Error::Parameter("log tower depth must be at least 1".into()))
            }
            Family::Constant { c } if !(c > 0.0 && c.is_finite()) => {
                return Err(Error::Parameter(format!("constant damping needs c > 0, got {c}")))
            }
            _ => {}
        }
        let label = match family {
            Family::PowerLaw { beta } => format!("power(beta={beta})"),
            Family::ScaleInvariant { mu } => format!("scale-invariant(mu={mu})"),
            Family::LogTower { n } => format!("log-tower(n={n})"),
            Family::Constant { c } => format!("constant(c={c})"),
        };
        Ok(DampingSpec { family, label })
    }

    pub fn power_law(beta: f64) -> Result<Self> {
        Self::new(Family::PowerLaw { beta })
    }

    pub fn scale_invariant(mu: f64) -> Result<Self> {
        Self::new(Family::ScaleInvariant { mu })
    }

    pub fn log_tower(n: u32) -> Result<Self> {
        Self::new(Family::LogTower { n })
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::new(Family::Constant { c })
    }

    /// Parse a family name plus a `k=v,...` parameter list, e.g.
    /// `("power", "beta=0.5")` or `("log-tower", "n=2")`.
    pub fn parse(name: &str, params: &str) -> Result<Self> {
        let mut kv = std::collections::BTreeMap::new();
        for item in params.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got `{item}`")))?;
            let v: f64 = v.trim().parse().map_err(|_| Error::Parse(format!("bad number in `{item}`")))?;
            kv.insert(k.trim().to_ascii_lowercase(), v);
        }
        let get = |key: &str, default: Option<f64>| -> Result<f64> {
            kv.get(key).copied().or(default).ok_or_else(|| Error::Parse(format!("family `{name}` needs `{key}=`")))
        };
        match name.trim().to_ascii_lowercase().as_str() {
            "power" | "power-law" | "powerlaw" => Self::power_law(get("beta", None)?),
            "scale-invariant" | "scaleinvariant" | "scale" => Self::scale_invariant(get("mu", None)?),
            "log-tower" | "logtower" | "tower" => {
                let n = get("n", Some(1.0))?;
                if n.fract() != 0.0 || n < 1.0 {
                    return Err(Error::Parse(format!("log tower depth must be a positive integer, got {n}")));
                }
                Self::log_tower(n as u32)
            }
            "constant" | "const" => Self::constant(get("c", Some(1.0))?),
            other => Err(Error::Parse(format!("unknown damping family `{other}`"))),
        }
    }

    /// Family name as accepted by [`DampingSpec::parse`].
    pub fn family_name(&self) -> &'static str {
        match self.family {
            Family::PowerLaw { .. } => "power",
            Family::ScaleInvariant { .. } => "scale-invariant",
            Family::LogTower { .. } => "log-tower",
            Family::Constant { .. } => "constant",
        }
    }

    /// Rebuild a spec from a CSV `label` (name, optionally followed by
    /// `(params)`) and its parameter column.
    pub fn from_record(label: &str, params: &str) -> Result<Self> {
        let name = label.split('(').next().unwrap_or(label);
        Self::parse(name, params)
    }

    /// Parameters as a `k=v` string for CSV output.
    pub fn params_string(&self) -> String {
        match self.family {
            Family::PowerLaw { beta } => format!("beta={beta}"),
            Family::ScaleInvariant { mu } => format!("mu={mu}"),
            Family::LogTower { n } => format!("n={n}"),
            Family::Constant { c } => format!("c={c}"),
        }
    }

    /// The five reference families exercised by the test suites.
    pub fn builtin() -> Vec<DampingSpec> {
        vec![
            Self::constant(1.0).unwrap(),
            Self::power_law(0.5).unwrap(),
            Self::power_law(-0.5).unwrap(),
            Self::log_tower(1).unwrap(),
            Self::log_tower(2).unwrap(),
        ]
    }
}

impl fmt::Display for DampingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

/// Log time above which log towers use the asymptotic form of Φ.
const LOG_ASYMPTOTIC: f64 = 13.815510557964274;

#[derive(Debug, Clone, Copy)]
pub struct PhiSample {
    /// `Φ(t)·(1+t)`
    pub phi_x: f64,
    pub phi: f64,
    pub phi_prime: f64,
}

/// Coefficients of the self-similar frame at scaled time `s = log(B(t)+1)`.
#[derive(Debug, Clone, Copy)]
pub struct ScaledCoefficients {
    /// `e^{-s} / b(t(s))²`
    pub stiff: f64,
    /// `b'(t(s)) / b(t(s))²`
    pub drift: f64,
    /// `t(s)`; `+∞` once it leaves the floating-point range.
    pub t: f64,
}

#[derive(Debug, Clone)]
pub struct DampingCalculus {
    spec: DampingSpec,
    quad_tol: f64,
    trunc_exponent: f64,
    b0: f64,
}

impl DampingCalculus {
    pub fn new(spec: DampingSpec) -> Self {
        Self::with_tolerances(spec, DEFAULT_QUAD_TOL, DEFAULT_TRUNC_EXPONENT)
    }

    pub fn with_tolerances(spec: DampingSpec, quad_tol: f64, trunc_exponent: f64) -> Self {
        let mut calc = DampingCalculus { spec, quad_tol, trunc_exponent, b0: f64::INFINITY };
        if analytic_b0(&calc.spec.family) < 1.0 {
            calc.b0 = calc.phi_value(0.0);
        }
        calc
    }

    pub fn spec(&self) -> &DampingSpec {
        &self.spec
    }

    pub fn family(&self) -> Family {
        self.spec.family
    }

    pub fn quad_tol(&self) -> f64 {
        self.quad_tol
    }

    pub fn trunc_exponent(&self) -> f64 {
        self.trunc_exponent
    }

    /// `(b(t), b'(t))` in closed form.
    pub fn coefficient(&self, t: f64) -> Result<(f64, f64)> {
        check_time(t)?;
        Ok((self.b(t), self.b_prime(t)))
    }

    pub fn b(&self, t: f64) -> f64 {
        match self.spec.family {
            Family::PowerLaw { beta } => (-beta * t.ln_1p()).exp(),
            Family::ScaleInvariant { mu } => mu / (1.0 + t),
            Family::LogTower { n } => tower(n, t).iter().take(n as usize).product(),
            Family::Constant { c } => c,
        }
    }

    pub fn b_prime(&self, t: f64) -> f64 {
        match self.spec.family {
            Family::PowerLaw { beta } => -beta * (-(beta + 1.0) * t.ln_1p()).exp(),
            Family::ScaleInvariant { mu } => -mu / ((1.0 + t) * (1.0 + t)),
            Family::LogTower { n } => {
                // ℓ'_k / ℓ_k = 1 / ∏_{j≤k} ℓ_j
                let ell = tower(n, t);
                let mut prefix = 1.0;
                let mut sum = 0.0;
                for l in ell.iter().take(n as usize) {
                    prefix *= l;
                    sum += 1.0 / prefix;
                }
                prefix * sum
            }
            Family::Constant { .. } => 0.0,
        }
    }

    /// `B(t) = ∫₀ᵗ dσ / b(σ)`.
    pub fn big_b(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.big_b_unchecked(t))
    }

    fn big_b_unchecked(&self, t: f64) -> f64 {
        match self.spec.family {
            Family::PowerLaw { beta } => {
                let k = 1.0 + beta;
                if k == 0.0 {
                    t.ln_1p()
                } else {
                    (k * t.ln_1p()).exp_m1() / k
                }
            }
            Family::ScaleInvariant { mu } => (t + 0.5 * t * t) / mu,
            Family::LogTower { n } => tower(n, t)[n as usize] - 1.0,
            Family::Constant { c } => t / c,
        }
    }

    /// `B⁻¹(s)`: closed form for log towers, safeguarded Newton on a doubled
    /// bracket otherwise.
    pub fn invert_b(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(Error::Domain(format!("B-time must be nonnegative, got {s}")));
        }
        if s == 0.0 {
            return Ok(0.0);
        }
        if let Family::LogTower { n } = self.spec.family {
            // m_k = ℓ_k - 1 with m_{n+1} = s and m_k = expm1(m_{k+1})
            let mut m = s;
            for _ in 0..n {
                m = m.exp_m1();
            }
            return if m.is_finite() && m <= OVERFLOW_GUARD {
                Ok(m)
            } else {
                Err(Error::NonConvergence { target: s, guard: OVERFLOW_GUARD })
            };
        }
        let mut lo = 0.0;
        let mut hi = 1.0;
        while self.big_b_unchecked(hi) < s {
            lo = hi;
            hi *= 2.0;
            if hi > OVERFLOW_GUARD {
                return Err(Error::NonConvergence { target: s, guard: OVERFLOW_GUARD });
            }
        }
        let mut t = hi;
        for _ in 0..200 {
            let resid = self.big_b_unchecked(t) - s;
            if resid.abs() <= 4.0 * f64::EPSILON * (1.0 + s) {
                break;
            }
            if resid < 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            // B' = 1/b
            let newton = t - resid * self.b(t);
            t = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo <= f64::EPSILON * hi {
                break;
            }
        }
        Ok(t)
    }

    /// `∫ₜ^{t+r} b(σ) dσ`, evaluated without cancellation for small `r`.
    pub fn damping_integral(&self, t: f64, r: f64) -> f64 {
        let x = 1.0 + t;
        match self.spec.family {
            Family::PowerLaw { beta } => {
                let k = 1.0 - beta;
                let lr = (r / x).ln_1p();
                if k == 0.0 {
                    lr
                } else {
                    (k * x.ln()).exp() * (k * lr).exp_m1() / k
                }
            }
            Family::ScaleInvariant { mu } => mu * (r / x).ln_1p(),
            Family::LogTower { n: 1 } => r * x + 0.5 * r * r,
            Family::LogTower { n: 2 } => {
                // antiderivative of x(1 + log x) is x²/4 + (x²/2) log x
                let y = x + r;
                r * (2.0 * x + r) * (0.25 + 0.5 * y.ln()) + 0.5 * x * x * (r / x).ln_1p()
            }
            Family::LogTower { .. } => {
                let rule = gl_rule();
                if r < 1e-3 * x {
                    return quad::gauss_legendre_on(|s| self.b(s), t, t + r, rule);
                }
                // Gauss–Legendre panels of width ≤ 1/4 in log(1+σ), where b is nearly polynomial
                let (u0, u1) = (x.ln(), (x + r).ln());
                let panels = ((u1 - u0) / 0.25).ceil().max(1.0) as usize;
                let du = (u1 - u0) / panels as f64;
                (0..panels)
                    .map(|i| {
                        let a = u0 + du * i as f64;
                        quad::gauss_legendre_on(|u| self.b(u.exp_m1()) * u.exp(), a, a + du, rule)
                    })
                    .sum()
            }
            Family::Constant { c } => c * r,
        }
    }

    /// `Φ(t)` by truncated quadrature of `∫₀^∞ exp(-∫ₜ^{t+r} b) dr`.
    fn phi_value(&self, t: f64) -> f64 {
        let bt = self.b(t);
        let trunc = self.trunc_exponent;
        let integral = |r: f64| self.damping_integral(t, r);

        // truncation point r* where the exponent reaches `trunc`
        let mut hi = trunc / bt;
        let mut lo = 0.0;
        while integral(hi) < trunc {
            lo = hi;
            hi *= 2.0;
            if !hi.is_finite() {
                log::warn!("{}: Φ({t}) integrand does not decay; exponent never reaches {trunc}", self.spec);
                return f64::INFINITY;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if integral(mid) < trunc {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let r_star = hi;

        // geometric panels resolve the initial decay scale 1/b(t)
        let mut breaks = vec![0.0];
        let mut edge = (0.25 / bt).min(r_star);
        while edge < r_star {
            breaks.push(edge);
            edge *= 2.0;
        }
        breaks.push(r_star);
        let tol = 1e-3 * self.quad_tol / bt;
        let q = quad::simpson_panels(|r| (-integral(r)).exp(), &breaks, tol);

        // tail ∫_{r*}^∞ = e^{-trunc} Φ(t + r*) with Φ ≈ 1/(b + b'/b)
        let te = t + r_star;
        let (be, dbe) = (self.b(te), self.b_prime(te));
        let denom = be + dbe / be;
        let tail = if denom > 0.0 { (-trunc).exp() / denom } else { f64::INFINITY };
        let value = q.value + (-integral(r_star)).exp() / (-trunc).exp() * tail;
        if !(tail <= self.quad_tol * value) {
            log::warn!(
                "{}: Φ({t}) truncation tail {tail:e} exceeds tolerance relative to {value:e}",
                self.spec
            );
        }
        value
    }

    /// `(Φ(t), Φ'(t))` with `Φ' = bΦ - 1` taken from the defining ODE.
    pub fn phi(&self, t: f64) -> Result<(f64, f64)> {
        check_time(t)?;
        if !(analytic_b0(&self.spec.family) < 1.0) {
            return Err(Error::Domain(format!(
                "{}: limsup |b'|/b² >= 1, so Φ is not defined",
                self.spec
            )));
        }
        let phi = if t == 0.0 { self.b0 } else { self.phi_value(t) };
        Ok((phi, self.b(t) * phi - 1.0))
    }

    /// Φ sampled in log time `u = log(1+t)`. Log towers switch to the expansion
    /// `Φ = 1/(b + b'/b)` once `t > 10⁶`, which keeps the sample finite after
    /// `t` itself overflows.
    pub fn phi_log_time(&self, u: f64) -> Result<PhiSample> {
        if !(u >= 0.0) {
            return Err(Error::Domain(format!("log time must be nonnegative, got {u}")));
        }
        if let Family::LogTower { n } = self.spec.family {
            if u > LOG_ASYMPTOTIC {
                // log ℓ₁ = u, log ℓ_{k+1} = log1p(log ℓ_k)
                let mut logs = Vec::with_capacity(n as usize);
                let mut l = u;
                for _ in 0..n {
                    logs.push(l);
                    l = l.ln_1p();
                }
                let log_b: f64 = logs.iter().sum();
                let mut prefix = 0.0;
                let mut d = 0.0;
                for lk in &logs {
                    prefix += lk;
                    d += (-prefix - log_b).exp();
                }
                let phi_x = (u - log_b).exp() / (1.0 + d);
                return Ok(PhiSample { phi_x, phi: phi_x * (-u).exp(), phi_prime: -d / (1.0 + d) });
            }
        }
        let t = u.exp_m1();
        if !t.is_finite() {
            return Err(Error::Domain(format!("{}: log time {u} overflows", self.spec)));
        }
        let (phi, phi_prime) = self.phi(t)?;
        Ok(PhiSample { phi_x: phi * (1.0 + t), phi, phi_prime })
    }

    /// `B₀ = ∫₀^∞ exp(-∫₀ˢ b) ds`, cached at construction (`+∞` when the
    /// coefficient violates `limsup |b'|/b² < 1`).
    pub fn b0(&self) -> f64 {
        self.b0
    }

    /// `e^{-s}/b²`, `b'/b²` and `t` at scaled time `s`, computed in log space so
    /// that towers whose `t(s)` overflows still give finite coefficients.
    pub fn scaled_coefficients(&self, s: f64) -> Result<ScaledCoefficients> {
        if !(s >= 0.0) {
            return Err(Error::Domain(format!("scaled time must be nonnegative, got {s}")));
        }
        let sigma = s.exp_m1();
        let out = match self.spec.family {
            Family::Constant { c } => {
                ScaledCoefficients { stiff: (-s).exp() / (c * c), drift: 0.0, t: c * sigma }
            }
            Family::PowerLaw { beta } => {
                let k = 1.0 + beta;
                let log1t = if k == 0.0 {
                    sigma
                } else {
                    let arg = k * sigma;
                    if arg <= -1.0 {
                        return Err(Error::Domain(format!(
                            "{}: B-time {sigma} exceeds sup B = {}",
                            self.spec,
                            -1.0 / k
                        )));
                    }
                    arg.ln_1p() / k
                };
                ScaledCoefficients {
                    stiff: (-s + 2.0 * beta * log1t).exp(),
                    drift: -beta * ((beta - 1.0) * log1t).exp(),
                    t: log1t.exp_m1(),
                }
            }
            Family::ScaleInvariant { mu } => {
                let log1t = 0.5 * (2.0 * mu * sigma).ln_1p();
                ScaledCoefficients {
                    stiff: (-s - 2.0 * mu.ln() + 2.0 * log1t).exp(),
                    drift: -1.0 / mu,
                    t: log1t.exp_m1(),
                }
            }
            Family::LogTower { n } => {
                // m[k] = ℓ_{k+1} - 1 for k = 0..=n, and log ℓ_k = m_{k+1}
                let n = n as usize;
                let mut m = vec![0.0; n + 1];
                m[n] = sigma;
                for k in (0..n).rev() {
                    m[k] = m[k + 1].exp_m1();
                }
                let log_b: f64 = m[1..=n].iter().sum();
                if !log_b.is_finite() {
                    ScaledCoefficients { stiff: 0.0, drift: 0.0, t: f64::INFINITY }
                } else {
                    let mut prefix = 0.0;
                    let mut drift = 0.0;
                    for mk in &m[1..=n] {
                        prefix += mk;
                        drift += (-prefix - log_b).exp();
                    }
                    ScaledCoefficients { stiff: (-s - 2.0 * log_b).exp(), drift, t: m[0] }
                }
            }
        };
        Ok(out)
    }
}

fn gl_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: std::sync::OnceLock<(Vec<f64>, Vec<f64>)> = std::sync::OnceLock::new();
    RULE.get_or_init(|| quad::gauss_legendre(16))
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("time must be finite and nonnegative, got {t}")))
    }
}

/// `[ℓ₁(t), …, ℓ_{n+1}(t)]`, evaluated through `m_k = ℓ_k - 1` for accuracy near 0.
fn tower(n: u32, t: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n as usize + 1);
    let mut m = t;
    for _ in 0..=n {
        out.push(1.0 + m);
        m = m.ln_1p();
    }
    out
}

/// `limsup |b'|/b²` per family.
pub fn analytic_b0(family: &Family) -> f64 {
    match *family {
        Family::PowerLaw { beta } if beta < 1.0 => 0.0,
        Family::PowerLaw { beta } if beta == 1.0 => 1.0,
        Family::PowerLaw { .. } => f64::INFINITY,
        Family::ScaleInvariant { mu } => 1.0 / mu,
        Family::LogTower { .. } | Family::Constant { .. } => 0.0,
    }
}

/// Whether `1/b ∉ L¹(0,∞)`.
pub fn analytic_not_overdamping(family: &Family) -> bool {
    match *family {
        Family::PowerLaw { beta } => beta >= -1.0,
        _ => true,
    }
}

#[derive(Debug, Clone)]
pub struct AssumptionReport {
    pub label: String,
    pub horizon: f64,
    pub b_positive: bool,
    pub b0_analytic: f64,
    pub b0_estimate: f64,
    pub b0_ok: bool,
    pub not_overdamping: bool,
    pub gamma_estimate: Option<f64>,
    pub big_b0: f64,
    pub big_b_at_horizon: f64,
    pub limit_2_4: f64,
    pub limit_5_3: f64,
    pub notes: Vec<String>,
}

impl AssumptionReport {
    /// Positivity, `b₀ < 1`, and `1/b ∉ L¹` all hold.
    pub fn supports_blowup(&self) -> bool {
        self.b_positive && self.b0_ok && self.not_overdamping
    }
}

impl fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let gamma = self.gamma_estimate.map_or_else(|| "absent".to_string(), |g| format!("{g:.17e}"));
        let rows: Vec<(&str, String)> = vec![
            ("family", self.label.clone()),
            ("horizon", format!("{:.17e}", self.horizon)),
            ("b_positive", self.b_positive.to_string()),
            ("b0_analytic", format!("{:.17e}", self.b0_analytic)),
            ("b0_estimate", format!("{:.17e}", self.b0_estimate)),
            ("b0_ok", self.b0_ok.to_string()),
            ("not_overdamping", self.not_overdamping.to_string()),
            ("gamma_estimate", gamma),
            ("B0", format!("{:.17e}", self.big_b0)),
            ("B_at_horizon", format!("{:.17e}", self.big_b_at_horizon)),
            ("limit_2_4", format!("{:.17e}", self.limit_2_4)),
            ("limit_5_3", format!("{:.17e}", self.limit_5_3)),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        for (k, v) in rows {
            writeln!(f, "{k:>width$}: {v}")?;
        }
        for note in &self.notes {
            writeln!(f, "{:>width$}: {note}", "note")?;
        }
        Ok(())
    }
}

/// Decide the standing hypotheses for a family analytically and attach
/// sampled evidence from `[horizon/2, horizon]`.
pub fn check_assumptions(spec: &DampingSpec, horizon: f64) -> Result<AssumptionReport> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Parameter(format!("horizon must be positive, got {horizon}")));
    }
    let calc = DampingCalculus::new(spec.clone());
    let ratio = |t: f64| calc.b_prime(t).abs() / calc.b(t).powi(2);

    let window = quad::logspace((0.5 * horizon).max(f64::MIN_POSITIVE), horizon, 64);
    let b0_estimate = window.iter().map(|&t| ratio(t)).fold(0.0, f64::max);
    let b0_analytic = analytic_b0(&spec.family);
    let b0_ok = b0_analytic < 1.0;
    let slack = 1e-9;
    if (b0_ok && b0_estimate >= 1.0 + slack) || (!b0_ok && b0_estimate < 1.0 - slack) {
        return Err(Error::Inconsistent(format!(
            "{spec}: analytic b0 = {b0_analytic} but sampled max |b'|/b² on [{}, {horizon}] is {b0_estimate}",
            0.5 * horizon
        )));
    }

    let sample = quad::logspace(1e-3, horizon.max(2e-3), 96);
    let b_positive = sample.iter().chain(std::iter::once(&0.0)).all(|&t| calc.b(t) > 0.0);
    if !b_positive {
        return Err(Error::Inconsistent(format!("{spec}: sampled b(t) <= 0")));
    }

    let fit_t: Vec<f64> = quad::logspace(1.0, horizon.max(10.0), 48);
    let ratios: Vec<f64> = fit_t.iter().map(|&t| ratio(t)).collect();
    let gamma_estimate = if ratios.iter().all(|&r| r < 1e-14) {
        None
    } else {
        let xs: Vec<f64> = fit_t.iter().map(|t| t.ln_1p()).collect();
        let ys: Vec<f64> = ratios.iter().map(|r| r.max(1e-300).ln()).collect();
        let fit = quad::linear_fit(&xs, &ys)?;
        (-fit.slope > 1e-3).then_some(-fit.slope)
    };

    let b_h = calc.b(horizon);
    let big_b_at_horizon = calc.big_b(horizon)?;
    let limit_2_4 = (-b_h.ln() - calc.damping_integral(0.0, horizon)).exp();
    let limit_5_3 = 1.0 / (b_h * b_h * (big_b_at_horizon + 1.0));

    let mut notes = Vec::new();
    if let Family::PowerLaw { beta } = spec.family {
        if beta < 0.0 {
            notes.push(format!(
                "|b'|/b² = |beta|(1+t)^(beta-1) stored with |beta| = {}; signed form would be negative",
                beta.abs()
            ));
        }
    }
    let not_overdamping = analytic_not_overdamping(&spec.family);
    if !not_overdamping {
        notes.push(format!("1/b is integrable: B(t) stays below {}", big_b_at_horizon));
    }

    Ok(AssumptionReport {
        label: spec.label.clone(),
        horizon,
        b_positive,
        b0_analytic,
        b0_estimate,
        b0_ok,
        not_overdamping,
        gamma_estimate,
        big_b0: calc.b0(),
        big_b_at_horizon,
        limit_2_4,
        limit_5_3,
        notes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Subcritical,
    Critical,
    Supercritical,
}

/// Classify `p` against the Fujita exponent `1 + 2/N`.
pub fn regime(p: f64, n: usize) -> Regime {
    let fujita = 1.0 + 2.0 / n as f64;
    if (p - fujita).abs() <= 1e-12 * fujita {
        Regime::Critical
    } else if p < fujita {
        Regime::Subcritical
    } else {
        Regime::Supercritical
    }
}

/// `(1/(p-1) - N/2)^{-1}`, the subcritical B-time exponent.
pub fn subcritical_exponent(p: f64, n: usize) -> f64 {
    1.0 / (1.0 / (p - 1.0) - n as f64 / 2.0)
}

#[derive(Debug, Clone, Copy)]
pub struct LifespanBound {
    pub regime: Regime,
    /// Upper bound on `B(T)`.
    pub b_bound: f64,
    /// `B⁻¹(b_bound)`.
    pub time: f64,
    /// True when the value left the floating-point range and was clamped to `+∞`.
    pub saturated: bool,
}

/// Evaluate the B-time lifespan law for constant `c` and map it back to
/// physical time.
pub fn predicted_lifespan(calc: &DampingCalculus, p: f64, n: usize, eps: f64, c: f64) -> Result<LifespanBound> {
    if !(p > 1.0) {
        return Err(Error::Parameter(format!("nonlinearity exponent must exceed 1, got {p}")));
    }
    if !(c > 0.0 && eps > 0.0) || n == 0 {
        return Err(Error::Parameter(format!("need C > 0, eps > 0, N >= 1 (got {c}, {eps}, {n})")));
    }
    let regime = regime(p, n);
    let b_bound = match regime {
        Regime::Subcritical => (c.ln() - subcritical_exponent(p, n) * eps.ln()).exp(),
        Regime::Critical => (c * (-(p - 1.0) * eps.ln()).exp()).exp(),
        Regime::Supercritical => {
            return Ok(LifespanBound { regime, b_bound: f64::INFINITY, time: f64::INFINITY, saturated: false })
        }
    };
    if !b_bound.is_finite() {
        return Ok(LifespanBound { regime, b_bound, time: f64::INFINITY, saturated: true });
    }
    match calc.invert_b(b_bound) {
        Ok(time) => Ok(LifespanBound { regime, b_bound, time, saturated: false }),
        Err(Error::NonConvergence { .. }) => {
            Ok(LifespanBound { regime, b_bound, time: f64::INFINITY, saturated: true })
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn calc(spec: DampingSpec) -> DampingCalculus {
        DampingCalculus::new(spec)
    }

    #[test]
    fn coefficient_examples() {
        assert_eq!(calc(DampingSpec::constant(1.0).unwrap()).coefficient(7.0).unwrap(), (1.0, 0.0));
        let (b, db) = calc(DampingSpec::power_law(-1.0).unwrap()).coefficient(1.0).unwrap();
        assert!((b - 2.0).abs() < 1e-15 && (db - 1.0).abs() < 1e-15);
        let (b, db) = calc(DampingSpec::log_tower(2).unwrap()).coefficient(0.0).unwrap();
        assert_eq!((b, db), (1.0, 2.0));
        assert!(calc(DampingSpec::constant(1.0).unwrap()).coefficient(-1.0).is_err());
    }

    #[test]
    fn log_tower_derivative_matches_finite_difference() {
        for n in 1..=4 {
            let c = calc(DampingSpec::log_tower(n).unwrap());
            for &t in &[0.3, 2.0, 50.0] {
                let h = 1e-5 * (1.0 + t);
                let fd = (c.b(t + h) - c.b(t - h)) / (2.0 * h);
                assert!((fd - c.b_prime(t)).abs() < 1e-7 * (1.0 + c.b_prime(t).abs()), "n={n} t={t}");
            }
        }
    }

    #[test]
    fn big_b_examples() {
        assert_eq!(calc(DampingSpec::constant(1.0).unwrap()).big_b(5.0).unwrap(), 5.0);
        let b = calc(DampingSpec::log_tower(1).unwrap()).big_b(E - 1.0).unwrap();
        assert!((b - 1.0).abs() < 1e-15);
        let si = calc(DampingSpec::scale_invariant(2.0).unwrap());
        assert!((si.big_b(2.0).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn invert_b_examples() {
        assert!((calc(DampingSpec::constant(1.0).unwrap()).invert_b(3.0).unwrap() - 3.0).abs() < 1e-12);
        let lt = calc(DampingSpec::log_tower(1).unwrap());
        assert!((lt.invert_b(2.0).unwrap() - (E * E - 1.0)).abs() < 1e-12);
        let pl = calc(DampingSpec::power_law(0.5).unwrap());
        let s = pl.big_b(4.0).unwrap();
        assert!((pl.invert_b(s).unwrap() - 4.0).abs() < 1e-8);
        assert!(pl.invert_b(-1.0).is_err());
    }

    #[test]
    fn overdamped_inverse_hits_guard() {
        let c = calc(DampingSpec::power_law(-2.0).unwrap());
        // sup B = 1
        match c.invert_b(1.5) {
            Err(Error::NonConvergence { guard, .. }) => assert_eq!(guard, OVERFLOW_GUARD),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn b0_and_phi_for_constant() {
        let c = calc(DampingSpec::constant(1.0).unwrap());
        assert!((c.b0() - 1.0).abs() < 1e-12);
        let (phi, dphi) = c.phi(3.0).unwrap();
        assert!((phi - 1.0).abs() < 1e-12 && dphi.abs() < 1e-12);
    }

    #[test]
    fn scale_invariant_phi_is_linear() {
        // Φ(t) = (1+t)/(μ-1) for b = μ/(1+t)
        let c = calc(DampingSpec::scale_invariant(2.0).unwrap());
        assert!((c.b0() - 1.0).abs() < 1e-9);
        for &t in &[0.5, 10.0, 300.0] {
            let (phi, _) = c.phi(t).unwrap();
            assert!((phi - (1.0 + t)).abs() < 1e-9 * (1.0 + t), "t={t} phi={phi}");
        }
    }

    #[test]
    fn phi_undefined_without_b0_bound() {
        let c = calc(DampingSpec::power_law(1.5).unwrap());
        assert!(c.b0().is_infinite());
        assert!(c.phi(1.0).is_err());
    }

    #[test]
    fn scaled_coefficients_match_direct_evaluation() {
        for spec in DampingSpec::builtin().into_iter().chain([DampingSpec::scale_invariant(2.0).unwrap()]) {
            let c = calc(spec.clone());
            for &s in &[0.0, 0.3, 1.0, 1.5] {
                let sc = c.scaled_coefficients(s).unwrap();
                let t = c.invert_b(s.exp_m1()).unwrap();
                let (b, db) = c.coefficient(t).unwrap();
                assert!((sc.t - t).abs() < 1e-9 * (1.0 + t), "{spec} s={s}");
                assert!((sc.stiff - (-s).exp() / (b * b)).abs() < 1e-9 * sc.stiff.max(1e-300), "{spec} s={s}");
                assert!((sc.drift - db / (b * b)).abs() < 1e-9 * (1.0 + sc.drift.abs()), "{spec} s={s}");
            }
        }
    }

    #[test]
    fn scaled_coefficients_survive_overflow() {
        let c = calc(DampingSpec::log_tower(1).unwrap());
        let sc = c.scaled_coefficients(7.0).unwrap();
        assert!(sc.t.is_infinite());
        assert_eq!(sc.stiff, 0.0);
        assert!(sc.drift >= 0.0 && sc.drift < 1e-300);
    }

    #[test]
    fn assumption_examples() {
        let r = check_assumptions(&DampingSpec::power_law(0.5).unwrap(), DEFAULT_HORIZON).unwrap();
        assert!(r.b0_ok && r.not_overdamping && r.b0_estimate < 0.01);
        assert!((r.gamma_estimate.unwrap() - 0.5).abs() < 1e-6);

        let r = check_assumptions(&DampingSpec::scale_invariant(2.0).unwrap(), DEFAULT_HORIZON).unwrap();
        assert!((r.b0_estimate - 0.5).abs() < 1e-12 && r.b0_ok);
        assert!(r.gamma_estimate.is_none());

        let r = check_assumptions(&DampingSpec::constant(1.0).unwrap(), DEFAULT_HORIZON).unwrap();
        assert_eq!(r.b0_estimate, 0.0);
        assert!((r.big_b0 - 1.0).abs() < 1e-12);
        assert!(r.limit_2_4 < 1e-300);
        assert!(r.gamma_estimate.is_none());

        let r = check_assumptions(&DampingSpec::power_law(-2.0).unwrap(), DEFAULT_HORIZON).unwrap();
        assert!(!r.not_overdamping && !r.supports_blowup());

        let r = check_assumptions(&DampingSpec::power_law(1.2).unwrap(), DEFAULT_HORIZON).unwrap();
        assert!(!r.b0_ok);
        assert!(check_assumptions(&DampingSpec::constant(1.0).unwrap(), 0.0).is_err());
    }

    #[test]
    fn report_prints_aligned_lines() {
        let r = check_assumptions(&DampingSpec::log_tower(1).unwrap(), 100.0).unwrap();
        let text = r.to_string();
        assert!(text.lines().all(|l| l.contains(": ")));
        assert!(text.contains("gamma_estimate: "));
    }

    #[test]
    fn predicted_lifespan_examples() {
        let eps: f64 = 0.1;
        let c = calc(DampingSpec::constant(1.0).unwrap());
        let lb = predicted_lifespan(&c, 2.0, 1, eps, 3.0).unwrap();
        assert!((lb.time - 3.0 * eps.powi(-2)).abs() < 1e-9 * lb.time);

        let lt = calc(DampingSpec::log_tower(1).unwrap());
        let lb = predicted_lifespan(&lt, 2.0, 1, 0.5, 1.0).unwrap();
        assert!((lb.time - (4.0f64.exp() - 1.0)).abs() < 1e-9 * lb.time);

        // critical tower exp(exp(exp(C ε^{-(p-1)}))) saturates
        let lt2 = calc(DampingSpec::log_tower(2).unwrap());
        let lb = predicted_lifespan(&lt2, 3.0, 1, 0.5, 1.0).unwrap();
        assert_eq!(lb.regime, Regime::Critical);
        assert!(lb.saturated && lb.time.is_infinite());
        // a mild critical case stays finite: B = exp(C ε^{-2}) with C ε^{-2} = 0.25
        let lb = predicted_lifespan(&lt2, 3.0, 1, 2.0, 1.0).unwrap();
        let expect = (0.25f64.exp()).exp_m1().exp_m1();
        assert!((lb.time - expect).abs() < 1e-12 * expect);

        let lb = predicted_lifespan(&c, 4.0, 1, 0.01, 1.0).unwrap();
        assert_eq!(lb.regime, Regime::Supercritical);
        assert!(lb.time.is_infinite() && !lb.saturated);
        assert!(predicted_lifespan(&c, 1.0, 1, 0.1, 1.0).is_err());
    }

    #[test]
    fn damping_integral_matches_quadrature() {
        let specs = DampingSpec::builtin().into_iter().chain([
            DampingSpec::scale_invariant(2.0).unwrap(),
            DampingSpec::log_tower(3).unwrap(),
            DampingSpec::power_law(1.0).unwrap(),
        ]);
        for spec in specs {
            let c = calc(spec.clone());
            for &(t, r) in &[(0.0, 1e-6), (0.0, 3.0), (5.0, 0.1), (100.0, 250.0)] {
                let oracle = quad::adaptive_simpson(|s| c.b(s), t, t + r, 1e-13 * r * c.b(t).max(c.b(t + r))).value;
                let got = c.damping_integral(t, r);
                assert!((got - oracle).abs() < 1e-11 * oracle.max(1.0), "{spec} t={t} r={r}: {got} vs {oracle}");
            }
        }
    }

    #[test]
    fn phi_satisfies_its_ode_by_finite_differences() {
        for spec in DampingSpec::builtin() {
            let c = calc(spec.clone());
            for t in quad::logspace(1e-2, 1e3, 12) {
                let h = 1e-4 * (1.0 + t);
                let fd = (c.phi(t + h).unwrap().0 - c.phi(t - h).unwrap().0) / (2.0 * h);
                let (phi, _) = c.phi(t).unwrap();
                let resid = fd - c.b(t) * phi + 1.0;
                assert!(resid.abs() < 1e-8, "{spec} t={t}: residual {resid:e}");
            }
        }
    }

    #[test]
    fn log_time_expansion_joins_direct_quadrature() {
        for n in [1, 2] {
            let c = calc(DampingSpec::log_tower(n).unwrap());
            let below = c.phi_log_time(LOG_ASYMPTOTIC * (1.0 - 1e-12)).unwrap();
            let above = c.phi_log_time(LOG_ASYMPTOTIC * (1.0 + 1e-12)).unwrap();
            assert!((below.phi_x - above.phi_x).abs() < 1e-9 * below.phi_x, "n={n}");
            assert!((below.phi_prime - above.phi_prime).abs() < 1e-9);
            let far = c.phi_log_time(5000.0).unwrap();
            assert!(far.phi == 0.0 && far.phi_x > 0.0 && far.phi_prime <= 0.0);
        }
    }

    #[test]
    fn parse_families() {
        assert_eq!(DampingSpec::parse("power", "beta=0.5").unwrap().family, Family::PowerLaw { beta: 0.5 });
        assert_eq!(DampingSpec::parse("log-tower", "n=3").unwrap().family, Family::LogTower { n: 3 });
        assert_eq!(DampingSpec::parse("constant", "").unwrap().family, Family::Constant { c: 1.0 });
        assert!(DampingSpec::parse("scale-invariant", "mu=-1").is_err());
        assert!(DampingSpec::parse("log-tower", "n=1.5").is_err());
        assert!(DampingSpec::parse("mystery", "").is_err());
    }
}
