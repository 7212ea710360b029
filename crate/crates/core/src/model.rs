//! Scalar constitutive functions: the quartic double well, the regularized
//! mobility, the two restriction functions and their normalization constants.
//!
//! Both restriction functions are built from `psi(u) = (u^2 (1-u)^2)^p = |u(1-u)|^(2p)`.
//! With `a = alpha * epsilon` and `c` the normalization coefficient,
//!
//! ```text
//! G(u) = sqrt(c^2 psi(u) + a^2)          (diffusion restriction)
//! g(u) = 1 / sqrt(c^2 psi(u) + a^2)      (energy restriction)
//! ```

use statrs::function::gamma;

use crate::error::{Error, Result};

/// Well height and mobility scale of the quartic free energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialParams {
    pub omega: f64,
    pub mu: f64,
}

impl Default for PotentialParams {
    fn default() -> Self {
        PotentialParams {
            omega: 72.0,
            mu: 36.0,
        }
    }
}

/// Parameters shared by the mobility regularization and both restriction functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestrictionParams {
    /// Degeneracy exponent.
    pub p: f64,
    /// Regularization strength; the regularization floor is `alpha * epsilon`.
    pub alpha: f64,
    pub epsilon: f64,
    /// `eta` for the diffusion restriction, `gamma` for the energy restriction.
    pub coefficient: f64,
}

impl RestrictionParams {
    pub fn new(p: f64, alpha: f64, epsilon: f64, coefficient: f64) -> Result<Self> {
        if !(p >= 0.0 && p.is_finite()) {
            return Err(Error::Domain(format!("exponent p = {p} must be finite and >= 0")));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::Domain(format!("alpha = {alpha} must be finite and >= 0")));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Domain(format!("epsilon = {epsilon} must be > 0")));
        }
        if !(coefficient > 0.0 && coefficient.is_finite()) {
            return Err(Error::Domain(format!(
                "normalization coefficient = {coefficient} must be > 0"
            )));
        }
        Ok(RestrictionParams {
            p,
            alpha,
            epsilon,
            coefficient,
        })
    }

    #[inline]
    fn floor(&self) -> f64 {
        self.alpha * self.epsilon
    }
}

#[inline]
pub fn double_well(u: f64, pot: &PotentialParams) -> f64 {
    let s = u * (1.0 - u);
    0.25 * pot.omega * s * s
}

#[inline]
pub fn double_well_d1(u: f64, pot: &PotentialParams) -> f64 {
    0.5 * pot.omega * u * (1.0 - u) * (1.0 - 2.0 * u)
}

#[inline]
pub fn double_well_d2(u: f64, pot: &PotentialParams) -> f64 {
    0.5 * pot.omega * (1.0 - 6.0 * u + 6.0 * u * u)
}

/// `M(u) = mu u^2 (1-u)^2 + alpha * epsilon`.
#[inline]
pub fn mobility(u: f64, pot: &PotentialParams, params: &RestrictionParams) -> f64 {
    let s = u * (1.0 - u);
    pot.mu * s * s + params.floor()
}

/// `psi(u) = |u (1-u)|^(2p)`, with `0^0 = 1` so that `p = 0` gives a constant.
#[inline]
fn psi(s: f64, p: f64) -> f64 {
    if p == 0.0 {
        1.0
    } else {
        s.abs().powf(2.0 * p)
    }
}

/// First derivative of `psi` with respect to `u`.
fn psi_d1(u: f64, p: f64) -> Result<f64> {
    if p == 0.0 {
        return Ok(0.0);
    }
    let s = u * (1.0 - u);
    let ds = 1.0 - 2.0 * u;
    if s == 0.0 {
        return if p >= 0.5 {
            Ok(0.0)
        } else {
            Err(Error::Singular(format!(
                "d/du |u(1-u)|^(2p) is unbounded at u = {u} for p = {p} < 1/2"
            )))
        };
    }
    // 2p |s|^(2p-2) s s'
    Ok(2.0 * p * s.abs().powf(2.0 * p - 2.0) * s * ds)
}

/// Second derivative of `psi` with respect to `u`.
fn psi_d2(u: f64, p: f64) -> Result<f64> {
    if p == 0.0 {
        return Ok(0.0);
    }
    let s = u * (1.0 - u);
    let ds = 1.0 - 2.0 * u;
    if s == 0.0 {
        return if p > 1.0 {
            Ok(0.0)
        } else if p == 1.0 {
            Ok(2.0 * ds * ds)
        } else {
            Err(Error::Singular(format!(
                "d2/du2 |u(1-u)|^(2p) is unbounded at u = {u} for p = {p} < 1"
            )))
        };
    }
    // 2p |s|^(2p-2) [ (2p-1) s'^2 + s s'' ],  s'' = -2
    Ok(2.0 * p * s.abs().powf(2.0 * p - 2.0) * ((2.0 * p - 1.0) * ds * ds - 2.0 * s))
}

/// Diffusion restriction `G(u) = sqrt(eta^2 psi(u) + (alpha eps)^2)`.
#[inline]
pub fn diffusion_restriction(u: f64, params: &RestrictionParams) -> f64 {
    let c = params.coefficient;
    let a = params.floor();
    (c * c * psi(u * (1.0 - u), params.p) + a * a).sqrt()
}

fn energy_denominator(u: f64, params: &RestrictionParams) -> Result<f64> {
    let c = params.coefficient;
    let a = params.floor();
    let d = c * c * psi(u * (1.0 - u), params.p) + a * a;
    if d > 0.0 {
        Ok(d)
    } else {
        Err(Error::Singular(format!(
            "energy restriction is unbounded at u = {u} (p = {}, alpha = 0)",
            params.p
        )))
    }
}

/// Energy restriction `g(u) = 1 / sqrt(gamma^2 psi(u) + (alpha eps)^2)`.
pub fn energy_restriction(u: f64, params: &RestrictionParams) -> Result<f64> {
    Ok(1.0 / energy_denominator(u, params)?.sqrt())
}

/// `g'(u) = -(gamma^2 / 2) psi'(u) D^(-3/2)`, the exact derivative of
/// [`energy_restriction`] for every `alpha`.
pub fn energy_restriction_d1(u: f64, params: &RestrictionParams) -> Result<f64> {
    let d = energy_denominator(u, params)?;
    let c2 = params.coefficient * params.coefficient;
    let dpsi = psi_d1(u, params.p)?;
    Ok(-0.5 * c2 * dpsi / (d * d.sqrt()))
}

/// `g''(u) = (3/4) gamma^4 psi'^2 D^(-5/2) - (1/2) gamma^2 psi'' D^(-3/2)`.
pub fn energy_restriction_d2(u: f64, params: &RestrictionParams) -> Result<f64> {
    let d = energy_denominator(u, params)?;
    let c2 = params.coefficient * params.coefficient;
    let dpsi = psi_d1(u, params.p)?;
    let ddpsi = psi_d2(u, params.p)?;
    let d32 = d * d.sqrt();
    Ok(0.75 * c2 * c2 * dpsi * dpsi / (d32 * d) - 0.5 * c2 * ddpsi / d32)
}

/// Gamma function; exact at small positive integers, where the Lanczos
/// approximation is off by an ulp or two.
fn gamma(x: f64) -> f64 {
    if x.fract() == 0.0 && (1.0..=23.0).contains(&x) {
        (2..x as u32).fold(1.0, |acc, k| acc * k as f64)
    } else {
        gamma::gamma(x)
    }
}

/// Diffusion normalization `eta*(p) = Gamma(2 + 2p) / Gamma(1 + p)^2`.
pub fn eta_star(p: f64) -> Result<f64> {
    if !(p >= 0.0 && p.is_finite()) {
        return Err(Error::Domain(format!("eta*(p) requires p >= 0, got {p}")));
    }
    let g = gamma(1.0 + p);
    let value = gamma(2.0 + 2.0 * p) / (g * g);
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain(format!("eta*(p) overflows at p = {p}")))
    }
}

/// Energy normalization `gamma*(p) = 6 Gamma(2 - p)^2 / Gamma(4 - 2p)`, `0 <= p < 2`.
pub fn gamma_star(p: f64) -> Result<f64> {
    if !(0.0..2.0).contains(&p) {
        return Err(Error::Domain(format!(
            "gamma*(p) requires 0 <= p < 2, got {p}"
        )));
    }
    let g = gamma(2.0 - p);
    Ok(6.0 * g * g / gamma(4.0 - 2.0 * p))
}

/// Equilibrium interface profile `(1 - tanh(3 r / eps)) / 2`.
///
/// `r` is a signed distance, negative inside the shape, so `u -> 1` inside.
#[inline]
pub fn tanh_profile(r: f64, epsilon: f64) -> f64 {
    0.5 * (1.0 - (3.0 * r / epsilon).tanh())
}
