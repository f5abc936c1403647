//! The Marčenko–Pastur limiting law: density, moments of test functions,
//! and the closed-form Stieltjes transforms m(z), m̲(z) with derivatives.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lss_test::TestFunction;
use crate::quadrature::adaptive_gk;

/// Absolute tolerance of the adaptive quadrature behind [`mp_integral`].
pub const QUAD_ABS_TOL: f64 = 1e-12;
/// Relative tolerance of the adaptive quadrature behind [`mp_integral`].
pub const QUAD_REL_TOL: f64 = 1e-10;

/// The M-P law F_c for aspect ratio c = p/n.
///
/// The absolutely continuous part lives on [a, b] with
/// a = (1-sqrt(c))^2, b = (1+sqrt(c))^2; for c > 1 a point mass of
/// 1 - 1/c sits at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpModel {
    pub c: f64,
    pub a: f64,
    pub b: f64,
    pub point_mass_at_zero: f64,
}

impl MpModel {
    pub fn new(c: f64) -> Self {
        assert!(c > 0.0 && c.is_finite(), "aspect ratio must be positive");
        let s = c.sqrt();
        Self {
            c,
            a: (1.0 - s) * (1.0 - s),
            b: (1.0 + s) * (1.0 + s),
            point_mass_at_zero: if c > 1.0 { 1.0 - 1.0 / c } else { 0.0 },
        }
    }
}

/// Value of the pair (m(z), m̲(z)) and their z-derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StieltjesPair {
    pub z: Complex64,
    pub m: Complex64,
    pub m_under: Complex64,
    pub m_prime: Complex64,
    pub m_under_prime: Complex64,
}

/// Density of the absolutely continuous part of F_c.
///
/// Returns 0 outside (a, b); the point mass at the origin is not included.
pub fn mp_density(model: &MpModel, x: f64) -> f64 {
    if x <= model.a || x >= model.b || x <= 0.0 {
        return 0.0;
    }
    ((model.b - x) * (x - model.a)).sqrt() / (2.0 * std::f64::consts::PI * x * model.c)
}

/// ∫ f dF_c, including the contribution of the point mass at zero.
///
/// The bulk integral uses the substitution x = ((a+b) + (b-a) sin θ)/2,
/// which absorbs the square-root edge factors into cos²θ, and adaptive
/// Gauss–Kronrod refinement on the resulting smooth integrand.
pub fn mp_integral(model: &MpModel, f: &TestFunction) -> Result<f64> {
    if model.point_mass_at_zero > 0.0 && !f.finite_at_zero() {
        return Err(Error::UndefinedAtAtom { c: model.c });
    }
    // c = 1 puts the lower edge at the origin; log is excluded there too.
    if model.a <= 0.0 && !f.finite_at_zero() {
        return Err(Error::UndefinedAtAtom { c: model.c });
    }
    let half_width = 0.5 * (model.b - model.a);
    let mid = 0.5 * (model.a + model.b);
    let scale = half_width * half_width / (2.0 * std::f64::consts::PI * model.c);
    let at_origin = model.a == 0.0;
    let b = model.b;
    let integrand = move |theta: f64| {
        let s = theta.sin();
        let x = mid + half_width * s;
        if at_origin {
            // cos²θ / x simplifies to 2(1-sinθ)/b when a = 0.
            f.eval(x) * 2.0 * (1.0 - s) / b
        } else {
            let cos = theta.cos();
            f.eval(x) * cos * cos / x
        }
    };
    let bulk = scale
        * adaptive_gk(
            &integrand,
            -std::f64::consts::FRAC_PI_2,
            std::f64::consts::FRAC_PI_2,
            QUAD_ABS_TOL,
            QUAD_REL_TOL,
        )?;
    Ok(bulk + model.point_mass_at_zero * f.eval(0.0))
}

/// Raw value of the pair at `z`, without the domain checks of [`stieltjes`].
///
/// `z` must lie off [a, b] and off the origin. For Im z != 0 the branch is
/// fixed by Im(m)·Im(z) > 0; on the real axis the branch is the continuous
/// limit from the upper half plane.
pub(crate) fn stieltjes_eval(c: f64, z: Complex64) -> StieltjesPair {
    // m solves c z m² + (z + c - 1) m + 1 = 0.
    let quad_b = z + (c - 1.0);
    let disc = quad_b * quad_b - 4.0 * c * z;
    let m = if z.im == 0.0 {
        // Real z off the support: disc > 0 and both roots are real.
        let sqrt_disc = Complex64::new(disc.re.max(0.0).sqrt(), 0.0);
        let edge_b = (1.0 + c.sqrt()).powi(2);
        if z.re > edge_b {
            (-quad_b + sqrt_disc) / (2.0 * c * z)
        } else {
            (-quad_b - sqrt_disc) / (2.0 * c * z)
        }
    } else {
        let sqrt_disc = disc.sqrt();
        // Numerically stable pairing: avoid cancellation in -b ± sqrt.
        let s = if (quad_b.conj() * sqrt_disc).re >= 0.0 { 1.0 } else { -1.0 };
        let q = -0.5 * (quad_b + s * sqrt_disc);
        let r1 = q / (c * z);
        let r2 = 1.0 / q;
        if (r1.im * z.im) > (r2.im * z.im) {
            r1
        } else {
            r2
        }
    };
    let m_prime = -(c * m * m + m) / (2.0 * c * z * m + z + (c - 1.0));
    let m_under = -(1.0 - c) / z + c * m;
    let m_under_prime = (1.0 - c) / (z * z) + c * m_prime;
    StieltjesPair { z, m, m_under, m_prime, m_under_prime }
}

/// Evaluates the Stieltjes pair of F_c at `z`, selecting the Herglotz branch.
pub fn stieltjes(model: &MpModel, z: Complex64) -> Result<StieltjesPair> {
    let dist = dist_to_segment(z, model.a, model.b);
    if z.im == 0.0 && z.re > model.a && z.re < model.b {
        return Err(Error::BranchAmbiguous);
    }
    if dist < 1e-12 {
        return Err(Error::OnSupport { re: z.re, im: z.im, dist });
    }
    if z.norm() < 1e-12 {
        return Err(Error::OnSupport { re: z.re, im: z.im, dist: z.norm() });
    }
    Ok(stieltjes_eval(model.c, z))
}

fn dist_to_segment(z: Complex64, a: f64, b: f64) -> f64 {
    let x = z.re.clamp(a, b);
    (z - Complex64::new(x, 0.0)).norm()
}
