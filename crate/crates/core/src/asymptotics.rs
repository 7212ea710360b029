//! Quadrature checks of the unit integrals behind the sharp-interface limit.
//!
//! Everything is expressed through the leading-order inner profile
//! `U0(z) = (1 + tanh 3z) / 2` in the stretched normal variable `z`. The
//! products `U0 (1 - U0) = sech^2(3z) / 4` and `dU0/dz = 6 U0 (1 - U0)` are
//! evaluated directly from `sech` so the tails keep full relative precision.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{eta_star, gamma_star};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureRule {
    /// Composite 16-point Gauss-Legendre panels of equal width.
    GaussLegendre16,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Integration runs over `[-z_max, z_max]`.
    pub z_max: f64,
    /// Total node count, rounded up to whole panels.
    pub n: usize,
    pub rule: QuadratureRule,
}

pub const MIN_Z_MAX: f64 = 10.0;
pub const MIN_NODES: usize = 1000;

impl Default for QuadratureSpec {
    /// `z_max = 40` keeps the slowest tail (the energy integral near `p = 2`)
    /// below `1e-10`.
    fn default() -> Self {
        QuadratureSpec {
            z_max: 40.0,
            n: 4096,
            rule: QuadratureRule::GaussLegendre16,
        }
    }
}

impl QuadratureSpec {
    pub fn with_z_max(self, z_max: f64) -> Self {
        QuadratureSpec { z_max, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.z_max >= MIN_Z_MAX && self.z_max.is_finite()) {
            return Err(Error::validation("z_max", format!("must be >= {MIN_Z_MAX}, got {}", self.z_max)));
        }
        if self.n < MIN_NODES {
            return Err(Error::validation("n", format!("must be >= {MIN_NODES}, got {}", self.n)));
        }
        Ok(())
    }

    fn panels(&self) -> usize {
        self.n.div_ceil(16)
    }

    /// Composite quadrature of `f` over `[a, b]` with this spec's panel count
    /// (16-point Gauss-Legendre per panel).
    pub fn integrate_on<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        let rule = GaussLegendre::new(NonZeroUsize::new(16).expect("nonzero"));
        let panels = self.panels();
        let width = (b - a) / panels as f64;
        (0..panels)
            .map(|k| {
                let lo = a + k as f64 * width;
                rule.integrate(lo, lo + width, &f)
            })
            .sum()
    }

    /// Quadrature over `[-z_max, z_max]`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.integrate_on(-self.z_max, self.z_max, f)
    }
}

/// Leading-order inner profile `U0(z) = (1 + tanh 3z) / 2`.
pub fn inner_profile(z: f64) -> f64 {
    0.5 * (1.0 + (3.0 * z).tanh())
}

/// `U0 (1 - U0) = sech^2(3z) / 4`, accurate in the tails.
pub fn profile_product(z: f64) -> f64 {
    let s = 1.0 / (3.0 * z).cosh();
    0.25 * s * s
}

/// `dU0/dz = 6 U0 (1 - U0)`.
pub fn inner_profile_dz(z: f64) -> f64 {
    6.0 * profile_product(z)
}

/// `d^2U0/dz^2 = 6 (1 - 2 U0) dU0/dz`.
pub fn inner_profile_dzz(z: f64) -> f64 {
    -6.0 * (3.0 * z).tanh() * inner_profile_dz(z)
}

/// `int 36 U0^2 (1 - U0)^2 dz`, equal to `int (dU0/dz)^2 dz`.
pub fn kinetic_integral(spec: &QuadratureSpec) -> Result<f64> {
    spec.validate()?;
    Ok(spec.integrate(|z| {
        let s = profile_product(z);
        36.0 * s * s
    }))
}

/// `int dU0/dz dz`.
pub fn profile_integral(spec: &QuadratureSpec) -> Result<f64> {
    spec.validate()?;
    Ok(spec.integrate(inner_profile_dz))
}

/// `int g0(U0) (dU0/dz)^2 dz` with `g0 = 1 / (gamma*(p) (U0 (1 - U0))^p)`.
pub fn energy_normalization_integral(p: f64, spec: &QuadratureSpec) -> Result<f64> {
    spec.validate()?;
    let gamma = gamma_star(p)?;
    Ok(spec.integrate(|z| {
        let s = profile_product(z);
        if s == 0.0 {
            return 0.0;
        }
        36.0 * s.powf(2.0 - p) / gamma
    }))
}

/// `int G0(U0) dU0/dz dz` with `G0 = eta*(p) (U0 (1 - U0))^p`.
pub fn diffusion_normalization_integral(p: f64, spec: &QuadratureSpec) -> Result<f64> {
    spec.validate()?;
    if !(p >= 0.0 && p.is_finite()) {
        return Err(Error::Domain(format!("p must be >= 0, got {p}")));
    }
    let eta = eta_star(p)?;
    Ok(spec.integrate(|z| {
        let s = profile_product(z);
        eta * s.powf(p) * 6.0 * s
    }))
}

pub const KINETIC_TOLERANCE: f64 = 1e-8;
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

fn check(name: &str, value: f64, tolerance: f64) -> Result<f64> {
    let deviation = (value - 1.0).abs();
    if deviation <= tolerance {
        Ok(value)
    } else {
        Err(Error::Tolerance {
            name: name.to_string(),
            deviation,
            tolerance,
        })
    }
}

pub fn verify_kinetic_integral(spec: &QuadratureSpec) -> Result<f64> {
    check("kinetic integral", kinetic_integral(spec)?, KINETIC_TOLERANCE)
}

pub fn verify_profile_integral(spec: &QuadratureSpec) -> Result<f64> {
    check("profile integral", profile_integral(spec)?, KINETIC_TOLERANCE)
}

pub fn verify_energy_normalization(p: f64, spec: &QuadratureSpec) -> Result<f64> {
    check(
        &format!("energy normalization (p = {p})"),
        energy_normalization_integral(p, spec)?,
        NORMALIZATION_TOLERANCE,
    )
}

pub fn verify_diffusion_normalization(p: f64, spec: &QuadratureSpec) -> Result<f64> {
    check(
        &format!("diffusion normalization (p = {p})"),
        diffusion_normalization_integral(p, spec)?,
        NORMALIZATION_TOLERANCE,
    )
}

/// `(int h(U0) dU0/dz dz, int_0^1 h(v) dv)`; the two agree by substitution.
pub fn substitution_pair<H: Fn(f64) -> f64>(h: H, spec: &QuadratureSpec) -> Result<(f64, f64)> {
    spec.validate()?;
    let z_side = spec.integrate(|z| h(inner_profile(z)) * inner_profile_dz(z));
    let v_side = spec.integrate_on(0.0, 1.0, &h);
    Ok((z_side, v_side))
}

pub const DEFAULT_ENERGY_P: [f64; 5] = [0.0, 0.5, 1.0, 1.5, 1.9];
pub const DEFAULT_DIFFUSION_P: [f64; 7] = [0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0];

/// One row of the verification table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegralReport {
    pub name: &'static str,
    pub p: Option<f64>,
    pub value: f64,
    pub deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Evaluates every unit integral; failures are reported in the rows rather
/// than returned as errors. Invalid `p` values are errors.
pub fn verification_table(
    energy_p: &[f64],
    diffusion_p: &[f64],
    spec: &QuadratureSpec,
) -> Result<Vec<IntegralReport>> {
    let row = |name: &'static str, p: Option<f64>, value: f64, tolerance: f64| {
        let deviation = (value - 1.0).abs();
        IntegralReport {
            name,
            p,
            value,
            deviation,
            tolerance,
            passed: deviation <= tolerance,
        }
    };
    let mut rows = vec![
        row("kinetic", None, kinetic_integral(spec)?, KINETIC_TOLERANCE),
        row("profile", None, profile_integral(spec)?, KINETIC_TOLERANCE),
    ];
    for &p in energy_p {
        rows.push(row(
            "energy_normalization",
            Some(p),
            energy_normalization_integral(p, spec)?,
            NORMALIZATION_TOLERANCE,
        ));
    }
    for &p in diffusion_p {
        rows.push(row(
            "diffusion_normalization",
            Some(p),
            diffusion_normalization_integral(p, spec)?,
            NORMALIZATION_TOLERANCE,
        ));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{double_well, double_well_d1, PotentialParams};
    use proptest::prelude::*;

    #[test]
    fn composite_rule_is_exact_for_polynomials() {
        let spec = QuadratureSpec::default();
        // 16 points per panel integrate degree 31 exactly
        let q = spec.integrate_on(-1.0, 3.0, |x| x.powi(31) - 4.0 * x.powi(7));
        let exact = (3f64.powi(32) - 1.0) / 32.0 - 0.5 * (3f64.powi(8) - 1.0);
        assert!((q / exact - 1.0).abs() < 1e-13, "{q} vs {exact}");
        assert!((spec.integrate(|_| 1.0) - 2.0 * spec.z_max).abs() < 1e-11);
    }

    #[test]
    fn profile_values() {
        assert_eq!(inner_profile(0.0), 0.5);
        assert!((inner_profile(20.0) - 1.0).abs() < 1e-15);
        assert!(inner_profile(-20.0) < 1e-15);
        assert!((profile_product(0.7) - inner_profile(0.7) * (1.0 - inner_profile(0.7))).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn profile_solves_the_inner_equations(z in -10.0f64..10.0) {
            let pot = PotentialParams::default();
            let (u, du, ddu) = (inner_profile(z), inner_profile_dz(z), inner_profile_dzz(z));
            // equipartition f(U0) = (U0')^2 / 2 and f'(U0) = U0''
            prop_assert!((double_well(u, &pot) - 0.5 * du * du).abs() <= 1e-12);
            prop_assert!((double_well_d1(u, &pot) - ddu).abs() <= 1e-12);
            // derivatives against central differences
            let h = 1e-5;
            let fd = (inner_profile(z + h) - inner_profile(z - h)) / (2.0 * h);
            prop_assert!((fd - du).abs() < 1e-8);
        }
    }

    #[test]
    fn unit_integrals() {
        let spec = QuadratureSpec::default();
        assert!((verify_kinetic_integral(&spec).unwrap() - 1.0).abs() <= 1e-8);
        assert!((verify_profile_integral(&spec).unwrap() - 1.0).abs() <= 1e-8);
        let half = spec.with_z_max(10.0);
        assert!((kinetic_integral(&half).unwrap() - 1.0).abs() <= 1e-6);
        // z_max = 5 is below the spec floor, so integrate directly
        let five = QuadratureSpec { z_max: 5.0, ..spec }.integrate(|z| 36.0 * profile_product(z).powi(2));
        assert!((five - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn energy_normalization_grid() {
        let spec = QuadratureSpec::default();
        for p in DEFAULT_ENERGY_P {
            let v = verify_energy_normalization(p, &spec).unwrap();
            assert!((v - 1.0).abs() <= 1e-6, "p = {p}: {v}");
        }
        assert!((energy_normalization_integral(0.0, &spec).unwrap() - 1.0).abs() <= 1e-8);
        assert!((energy_normalization_integral(1.0, &spec).unwrap() - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn diffusion_normalization_grid() {
        let spec = QuadratureSpec::default();
        for p in DEFAULT_DIFFUSION_P {
            let v = verify_diffusion_normalization(p, &spec).unwrap();
            assert!((v - 1.0).abs() <= 1e-6, "p = {p}: {v}");
        }
        assert!((diffusion_normalization_integral(0.0, &spec).unwrap() - 1.0).abs() <= 1e-8);
    }

    /// `2 (36 / gamma) int_{z}^inf (sech^2(3t)/4)^{2-p} dt`, leading order.
    fn energy_tail(p: f64, z: f64) -> f64 {
        let q = 2.0 - p;
        let gamma = gamma_star(p).unwrap();
        // sech^2(3t)/4 ~ exp(-6t) for large t
        2.0 * 36.0 / gamma * (-6.0 * q * z).exp() / (6.0 * q)
    }

    #[test]
    fn truncation_error_near_p_two_is_the_analytic_tail() {
        // at z_max = 20 the p = 1.9 energy integral misses a tail of ~6e-6
        let spec = QuadratureSpec::default().with_z_max(20.0);
        let v = energy_normalization_integral(1.9, &spec).unwrap();
        let tail = energy_tail(1.9, 20.0);
        assert!(tail > 1e-6);
        assert!(((1.0 - v) / tail - 1.0).abs() < 1e-3, "{} vs {tail}", 1.0 - v);
        assert!(matches!(verify_energy_normalization(1.9, &spec), Err(Error::Tolerance { .. })));
    }

    #[test]
    fn tail_robustness() {
        let base = QuadratureSpec::default();
        for z_max in [10.0, 20.0, 30.0] {
            let spec = QuadratureSpec { n: 4096, ..base.with_z_max(z_max) };
            let d = |a: f64, b: f64| (a - b).abs();
            assert!(d(kinetic_integral(&spec).unwrap(), kinetic_integral(&base).unwrap()) <= 1e-10);
            assert!(d(profile_integral(&spec).unwrap(), profile_integral(&base).unwrap()) <= 1e-10);
            for p in DEFAULT_DIFFUSION_P {
                let (a, b) = (
                    diffusion_normalization_integral(p, &spec).unwrap(),
                    diffusion_normalization_integral(p, &base).unwrap(),
                );
                assert!(d(a, b) <= 1e-10, "p = {p}, z_max = {z_max}");
            }
            // the energy tail decays like exp(-6 (2 - p) z): robust wherever that is below 1e-10
            for p in DEFAULT_ENERGY_P {
                let (a, b) = (
                    energy_normalization_integral(p, &spec).unwrap(),
                    energy_normalization_integral(p, &base).unwrap(),
                );
                if energy_tail(p, z_max) < 1e-11 {
                    assert!(d(a, b) <= 1e-10, "p = {p}, z_max = {z_max}");
                } else {
                    assert!((d(a, b) / energy_tail(p, z_max) - 1.0).abs() < 1e-2, "p = {p}, z_max = {z_max}");
                }
            }
        }
    }

    #[test]
    fn substitution_identity() {
        let spec = QuadratureSpec::default();
        let hs: [fn(f64) -> f64; 3] = [|v| (3.0 * v).cos() + v * v, |v| (v * (1.0 - v)).sqrt(), |v| v.powi(5)];
        for h in hs {
            let (z, v) = substitution_pair(h, &spec).unwrap();
            assert!((z - v).abs() <= 1e-6, "{z} vs {v}");
        }
    }

    #[test]
    fn table_reports_every_row() {
        let rows = verification_table(&DEFAULT_ENERGY_P, &DEFAULT_DIFFUSION_P, &QuadratureSpec::default()).unwrap();
        assert_eq!(rows.len(), 2 + 5 + 7);
        assert!(rows.iter().all(|r| r.passed));
        let bad = verification_table(&[1.9], &[], &QuadratureSpec::default().with_z_max(10.0)).unwrap();
        assert!(!bad[2].passed);
        assert!(verification_table(&[2.5], &[], &QuadratureSpec::default()).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(QuadratureSpec::default().with_z_max(5.0).validate().is_err());
        assert!(QuadratureSpec { n: 100, ..QuadratureSpec::default() }.validate().is_err());
    }
}
