//! Low-level quadrature rules: Gauss–Legendre nodes and an adaptive
//! Gauss–Kronrod (G7, K15) integrator for real intervals.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use crate::error::{Error, Result};

/// Nodes and weights of an n-point Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Computes the rule by Newton iteration on the Legendre polynomial.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "rule order must be positive");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Chebyshev-based initial guess for the i-th root.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                // Evaluate P_n(x) and P_n'(x) by the three-term recurrence.
                let mut p0 = 1.0;
                let mut p1 = x;
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }
}

fn rule_cache() -> &'static RwLock<HashMap<usize, Arc<GaussLegendre>>> {
    static CACHE: OnceLock<RwLock<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Returns a cached n-point Gauss–Legendre rule.
pub fn gauss_legendre(n: usize) -> Arc<GaussLegendre> {
    if let Some(rule) = rule_cache().read().unwrap().get(&n) {
        return Arc::clone(rule);
    }
    let rule = Arc::new(GaussLegendre::new(n));
    rule_cache().write().unwrap().insert(n, Arc::clone(&rule));
    rule
}

// Kronrod 15-point extension of the 7-point Gauss rule (positive abscissae).
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One G7/K15 panel: returns (kronrod_estimate, |kronrod - gauss|).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let fsum = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * fsum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * fsum;
        }
    }
    (kronrod * half, (kronrod - gauss).abs() * half)
}

/// Adaptive Gauss–Kronrod integration of `f` over [a, b].
///
/// Bisection continues until every panel satisfies its share of the
/// absolute/relative tolerance budget. Depth is capped; exceeding it
/// reports `NonConvergent`.
pub fn adaptive_gk<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    const MAX_DEPTH: u32 = 48;
    let (whole, _) = gk15(f, a, b);
    let scale = whole.abs().max(1.0);
    let mut total = 0.0;
    let mut stack = vec![(a, b, 0u32)];
    while let Some((lo, hi, depth)) = stack.pop() {
        let (est, err) = gk15(f, lo, hi);
        // Proportional tolerance budget, floored at machine precision of
        // the whole integral so sub-noise panels stop subdividing.
        let budget = (abs_tol.max(rel_tol * scale) * (hi - lo) / (b - a))
            .max(f64::EPSILON * scale);
        if err <= budget || err <= f64::EPSILON * est.abs() {
            total += est;
        } else if depth >= MAX_DEPTH {
            return Err(Error::NonConvergent { last: err, tol: budget });
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        // An n-point rule is exact for degree 2n-1.
        let rule = gauss_legendre(5);
        let value: f64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&x, &w)| w * x.powi(8))
            .sum();
        assert_abs_diff_eq!(value, 2.0 / 9.0, epsilon = 1e-14);
    }

    #[test]
    fn gauss_legendre_weights_sum_to_two() {
        for n in [1, 2, 3, 7, 64, 256] {
            let rule = gauss_legendre(n);
            let sum: f64 = rule.weights.iter().sum();
            assert_abs_diff_eq!(sum, 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn adaptive_gk_matches_known_integrals() {
        let value = adaptive_gk(&|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-13, 1e-12).unwrap();
        assert_abs_diff_eq!(value, 2.0, epsilon = 1e-12);

        // Square-root endpoint behavior, the shape mp integrals produce.
        let value = adaptive_gk(&|x: f64| x.sqrt(), 0.0, 1.0, 1e-13, 1e-12).unwrap();
        assert_abs_diff_eq!(value, 2.0 / 3.0, epsilon = 1e-10);
    }
}
