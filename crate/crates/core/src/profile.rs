//! Initial-data profiles `f`, `g` for the solvers.

use crate::error::{Error, Result};
use crate::quad;

#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Zero,
    /// `exp(-r²/w²)`
    Gaussian { width: f64 },
    /// `exp(1 - 1/(1 - (r/a)²))` on `r < a`, zero outside.
    Bump { radius: f64 },
    /// `Σ aᵢ exp(-(x-cᵢ)²/wᵢ²)`; one-dimensional, not radial unless every centre is 0.
    Mixture(Vec<MixtureTerm>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureTerm {
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
}

impl Profile {
    pub fn gaussian(width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::Parameter(format!("gaussian width must be positive, got {width}")));
        }
        Ok(Profile::Gaussian { width })
    }

    pub fn bump(radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Parameter(format!("bump radius must be positive, got {radius}")));
        }
        Ok(Profile::Bump { radius })
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::Zero => 0.0,
            Profile::Gaussian { width } => (-(x / width).powi(2)).exp(),
            Profile::Bump { radius } => {
                let z = (x / radius).powi(2);
                if z < 1.0 {
                    (1.0 - 1.0 / (1.0 - z)).exp()
                } else {
                    0.0
                }
            }
            Profile::Mixture(terms) => terms
                .iter()
                .map(|m| m.amplitude * (-((x - m.center) / m.width).powi(2)).exp())
                .sum(),
        }
    }

    /// Radius beyond which the profile is below `1e-16` of its peak scale.
    pub fn support_radius(&self) -> f64 {
        let cut = (1e16f64).ln().sqrt();
        match self {
            Profile::Zero => 0.0,
            Profile::Gaussian { width } => width * cut,
            Profile::Bump { radius } => *radius,
            Profile::Mixture(terms) => {
                terms.iter().map(|m| m.center.abs() + m.width * cut).fold(0.0, f64::max)
            }
        }
    }

    pub fn is_radial(&self) -> bool {
        match self {
            Profile::Mixture(terms) => terms.iter().all(|m| m.center == 0.0),
            _ => true,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Profile::Zero)
    }

    pub fn sample(&self, grid: &[f64]) -> Vec<f64> {
        grid.iter().map(|&x| self.eval(x)).collect()
    }

    /// `∫_{ℝ^N} f dx` for a radial profile, by quadrature in `r`.
    pub fn integral(&self, n_dim: usize) -> f64 {
        let support = self.support_radius();
        if support == 0.0 {
            return 0.0;
        }
        let area = quad::sphere_area(n_dim);
        let breaks = quad::logspace(1e-3 * support, support, 24);
        let mut pts = vec![0.0];
        pts.extend(breaks);
        let tol = 1e-13 * support.powi(n_dim as i32);
        area * quad::simpson_panels(|r| self.eval(r) * r.powi(n_dim as i32 - 1), &pts, tol).value
    }

    /// `∫_ℝ f dx` over the full line (mixtures need not be even).
    pub fn line_integral(&self) -> f64 {
        match self {
            Profile::Mixture(terms) => {
                terms.iter().map(|m| m.amplitude * m.width * std::f64::consts::PI.sqrt()).sum()
            }
            _ => self.integral(1),
        }
    }
}
