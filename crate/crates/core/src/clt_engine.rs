//! Numerical evaluation of the asymptotic mean and covariance of the
//! centered linear spectral statistic by contour integration.
//!
//! All kernels are expressed through the Stieltjes pair (m, m̲) and its
//! derivatives, supplied either in closed form from the limiting law or as
//! plug-in resolvent traces of an observed spectrum. Contours are positively
//! oriented rectangles around the support; double integrals use two strictly
//! nested rectangles so the `z1 = z2` diagonal is never sampled.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lss_test::TestFunction;
use crate::matrix_core::{correlation_matrix, CorrelationSpectrum, DataMatrix};
use crate::mp_law::{stieltjes_eval, MpModel, StieltjesPair};
use crate::quadrature::gauss_legendre;

const TWO_PI_I: Complex64 = Complex64::new(0.0, 2.0 * std::f64::consts::PI);
const SINGULARITY_GUARD: f64 = 1e12;
/// Hard cap of refinement doublings before giving up.
const MAX_REFINEMENTS: usize = 5;

/// A positively oriented rectangle with corners x_l ± i v0 and x_r ± i v0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourSpec {
    pub x_l: f64,
    pub x_r: f64,
    pub v0: f64,
    pub nodes_per_side: usize,
    pub refinement_tolerance: f64,
}

/// The default rectangle for aspect ratio `c`: one unit beyond the upper
/// edge, halfway inside the spectral gap on the left (or -0.5 when the
/// support reaches the origin), height one.
pub fn default_contour(c: f64) -> ContourSpec {
    let upper = (1.0 + c.sqrt()).powi(2);
    let x_l = if c >= 1.0 { -0.5 } else { (1.0 - c.sqrt()).powi(2) / 2.0 };
    ContourSpec {
        x_l,
        x_r: upper + 1.0,
        v0: 1.0,
        nodes_per_side: 256,
        refinement_tolerance: 1e-9,
    }
}

/// The nested companion of [`default_contour`], used as the second contour
/// of double integrals: height halved, each abscissa pulled 10% of its
/// margin toward the support, so the rectangle stays strictly inside the
/// default one while still enclosing [a, b] (and the origin when c >= 1).
pub fn inner_contour(c: f64) -> ContourSpec {
    let outer = default_contour(c);
    let upper = (1.0 + c.sqrt()).powi(2);
    // Leftmost point that must stay enclosed: the lower edge, or the atom.
    let left_anchor = if c >= 1.0 { 0.0 } else { (1.0 - c.sqrt()).powi(2) };
    ContourSpec {
        x_l: outer.x_l + 0.1 * (left_anchor - outer.x_l),
        x_r: outer.x_r - 0.1 * (outer.x_r - upper),
        v0: outer.v0 / 2.0,
        ..outer
    }
}

impl ContourSpec {
    /// Checks the rectangle encloses the support of F_c (and the origin
    /// when the law has an atom there) without touching it.
    fn validate_for(&self, c: f64) -> Result<()> {
        let upper = (1.0 + c.sqrt()).powi(2);
        let lower = (1.0 - c.sqrt()).powi(2);
        let ok = self.v0 > 0.0
            && self.nodes_per_side >= 2
            && self.x_r > upper
            && if c >= 1.0 { self.x_l < 0.0 } else { self.x_l > 0.0 && self.x_l < lower };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!(
                "contour [{}, {}] x ±{} does not properly enclose the support for c = {}",
                self.x_l, self.x_r, self.v0, c
            )))
        }
    }

    fn strictly_inside(&self, outer: &ContourSpec) -> bool {
        self.x_l > outer.x_l && self.x_r < outer.x_r && self.v0 < outer.v0
    }

    /// Gauss–Legendre nodes and complex weights along the rectangle,
    /// `n_per_side` points on each of the four sides.
    fn nodes(&self, n_per_side: usize) -> Vec<(Complex64, Complex64)> {
        let bl = Complex64::new(self.x_l, -self.v0);
        let br = Complex64::new(self.x_r, -self.v0);
        let tr = Complex64::new(self.x_r, self.v0);
        let tl = Complex64::new(self.x_l, self.v0);
        let rule = gauss_legendre(n_per_side);
        let mut out = Vec::with_capacity(4 * n_per_side);
        for (start, end) in [(bl, br), (br, tr), (tr, tl), (tl, bl)] {
            let half = 0.5 * (end - start);
            let mid = 0.5 * (start + end);
            for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
                out.push((mid + half * x, half * w));
            }
        }
        out
    }
}

/// Which case of the central limit theorem applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseKind {
    Real,
    Complex,
}

/// Population constants entering the asymptotic moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentParams {
    pub c: f64,
    pub kappa: f64,
    pub psi: Complex64,
    pub case: CaseKind,
}

impl MomentParams {
    pub fn new(c: f64, kappa: f64, psi: Complex64, case: CaseKind) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::InvalidSpec(format!("aspect ratio must be positive, got {c}")));
        }
        if kappa < 1.0 {
            return Err(Error::InvalidSpec(format!("kappa must be >= 1, got {kappa}")));
        }
        if psi.norm() > 1.0 + 1e-12 {
            return Err(Error::InvalidSpec(format!("|psi| must be <= 1, got {}", psi.norm())));
        }
        if case == CaseKind::Real && (psi - Complex64::new(1.0, 0.0)).norm() > 1e-12 {
            return Err(Error::InvalidSpec("the real case forces psi = 1".into()));
        }
        Ok(Self { c, kappa, psi, case })
    }

    /// Real-case parameters for Gaussian-like data.
    pub fn real(c: f64, kappa: f64) -> Result<Self> {
        Self::new(c, kappa, Complex64::new(1.0, 0.0), CaseKind::Real)
    }
}

/// Plug-in resolvent evaluator bound to an observed spectrum.
///
/// m(z) is estimated by (1/p) tr(B_n - z I)⁻¹; the companion transform and
/// both derivatives follow from the exact spectral relations between B_n
/// and B̲_n, so no second decomposition is needed.
#[derive(Debug, Clone)]
pub struct PlugInSource {
    eigenvalues: Vec<f64>,
    p: usize,
    n: usize,
}

impl PlugInSource {
    pub fn from_spectrum(spectrum: &CorrelationSpectrum) -> Self {
        let p = spectrum.eigenvalues.len();
        let n = (p as f64 / spectrum.c_n).round() as usize;
        Self { eigenvalues: spectrum.eigenvalues.clone(), p, n }
    }

    pub fn c_n(&self) -> f64 {
        self.p as f64 / self.n as f64
    }

    fn eval(&self, z: Complex64) -> StieltjesPair {
        let mut m = Complex64::new(0.0, 0.0);
        let mut m_prime = Complex64::new(0.0, 0.0);
        for &lambda in &self.eigenvalues {
            let r = 1.0 / (Complex64::new(lambda, 0.0) - z);
            m += r;
            m_prime += r * r;
        }
        m /= self.p as f64;
        m_prime /= self.p as f64;
        let c = self.c_n();
        StieltjesPair {
            z,
            m,
            m_under: -(1.0 - c) / z + c * m,
            m_prime,
            m_under_prime: (1.0 - c) / (z * z) + c * m_prime,
        }
    }
}

/// Where the Stieltjes pair entering the kernels comes from.
#[derive(Debug, Clone)]
pub enum StieltjesSource {
    ClosedForm(MpModel),
    PlugIn(PlugInSource),
}

impl StieltjesSource {
    pub fn closed_form(c: f64) -> Self {
        Self::ClosedForm(MpModel::new(c))
    }

    pub fn plug_in(spectrum: &CorrelationSpectrum) -> Self {
        Self::PlugIn(PlugInSource::from_spectrum(spectrum))
    }

    pub fn c(&self) -> f64 {
        match self {
            Self::ClosedForm(model) => model.c,
            Self::PlugIn(source) => source.c_n(),
        }
    }

    pub fn kind(&self) -> MomentSourceKind {
        match self {
            Self::ClosedForm(_) => MomentSourceKind::ClosedForm,
            Self::PlugIn(_) => MomentSourceKind::PlugIn,
        }
    }

    fn eval(&self, z: Complex64) -> StieltjesPair {
        match self {
            Self::ClosedForm(model) => stieltjes_eval(model.c, z),
            Self::PlugIn(source) => source.eval(z),
        }
    }
}

/// Tag recording which source produced a set of moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MomentSourceKind {
    ClosedForm,
    PlugIn,
}

/// Asymptotic mean and variance of one statistic, with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltMoments {
    pub mean: f64,
    pub variance: f64,
    pub params: MomentParams,
    pub source: MomentSourceKind,
    pub contour: ContourSpec,
    pub mean_imag_residue: f64,
    pub variance_imag_residue: f64,
}

/// One quadrature node with everything the kernels consume.
struct NodeEval {
    z: Complex64,
    w: Complex64,
    f: Complex64,
    s: StieltjesPair,
}

fn eval_nodes(
    f: &TestFunction,
    source: &StieltjesSource,
    spec: &ContourSpec,
    n_per_side: usize,
) -> Vec<NodeEval> {
    spec.nodes(n_per_side)
        .into_iter()
        .map(|(z, w)| NodeEval { z, w, f: f.eval_complex(z), s: source.eval(z) })
        .collect()
}

fn guard(value: Complex64, z: Complex64) -> Result<Complex64> {
    if !value.re.is_finite() || !value.im.is_finite() || value.norm() > SINGULARITY_GUARD {
        Err(Error::SingularityNearContour { re: z.re, im: z.im, mag: value.norm() })
    } else {
        Ok(value)
    }
}

fn max_delta(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Doubles nodes per side until the aggregate vector stabilizes.
fn refine_contour<F>(spec: &ContourSpec, mut compute: F) -> Result<Vec<Complex64>>
where
    F: FnMut(usize) -> Result<Vec<Complex64>>,
{
    let mut n = spec.nodes_per_side;
    let mut prev = compute(n)?;
    for _ in 0..MAX_REFINEMENTS {
        n *= 2;
        let next = compute(n)?;
        let delta = max_delta(&prev, &next);
        if delta < spec.refinement_tolerance {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::NonConvergent { last: max_delta(&prev, &compute(n * 2)?), tol: spec.refinement_tolerance })
}

/// −(1/2πi) ∮ f(z) m(z) dz: the Cauchy-integral route to ∫ f dF.
pub fn contour_lss_identity(
    f: &TestFunction,
    source: &StieltjesSource,
    contour: &ContourSpec,
) -> Result<f64> {
    contour.validate_for(source.c())?;
    let values = refine_contour(contour, |n| {
        let mut total = Complex64::new(0.0, 0.0);
        for node in eval_nodes(f, source, contour, n) {
            total += node.w * guard(node.f * node.s.m, node.z)?;
        }
        Ok(vec![-total / TWO_PI_I])
    })?;
    Ok(values[0].re)
}

/// Shared per-node subexpressions of the Theorem kernels.
struct KernelCtx {
    c: f64,
    m: Complex64,
    mu: Complex64,
    mp: Complex64,
    mup: Complex64,
    z: Complex64,
    /// z(1 + m̲) + 1 - c
    t1: Complex64,
    /// z(1 + m̲) - c
    t2: Complex64,
    /// (z(1 + m̲) - c)² - c
    t3: Complex64,
    /// 1 + c m
    one_cm: Complex64,
}

impl KernelCtx {
    fn new(c: f64, node: &NodeEval) -> Self {
        let s = &node.s;
        let w = node.z * (1.0 + s.m_under);
        let t2 = w - c;
        Self {
            c,
            m: s.m,
            mu: s.m_under,
            mp: s.m_prime,
            mup: s.m_under_prime,
            z: node.z,
            t1: w + (1.0 - c),
            t2,
            t3: t2 * t2 - c,
            one_cm: 1.0 + c * s.m,
        }
    }

    /// Kernel of the (κ-1) mean term.
    fn mean_k1(&self) -> Complex64 {
        self.c * self.mu * self.t1 / (self.t3 * self.t2)
    }

    /// Kernel of the (κ-|ψ|²-2) mean term.
    fn mean_k2(&self) -> Complex64 {
        self.c * self.z * self.mu * self.m * self.m * (1.0 + self.mu) * self.t1
            / (self.t3 * self.one_cm)
    }

    /// Kernel of the m̲'/m̲ mean term.
    fn mean_k3(&self) -> Complex64 {
        self.c * self.mup * self.t1 / (self.mu * self.t2 * self.t3)
    }

    /// Kernel of the mixed (1 + zm̲ - zmm̲ - z²mm̲²) mean term.
    fn mean_k4(&self) -> Complex64 {
        let mixed = 1.0 + self.z * self.mu
            - self.z * self.m * self.mu
            - self.z * self.z * self.m * self.mu * self.mu;
        self.c * mixed * (1.0 + self.mu) * self.t1 / (self.z * self.one_cm * self.t3)
    }

    /// Kernel of the (c m/z - c z m m̲') mean term.
    fn mean_k5(&self) -> Complex64 {
        self.c * self.m / self.z - self.c * self.z * self.m * self.mup
    }

    /// Factor of the separable V covariance kernel.
    fn v_factor(&self) -> Complex64 {
        self.m * self.mu + self.z * self.m * self.mup + self.z * self.mp * self.mu
    }

    /// Factor of the separable (κ-1) covariance kernel.
    fn under_factor(&self) -> Complex64 {
        let one_mu = 1.0 + self.mu;
        self.mup / (one_mu * one_mu)
    }

    /// Integrand of the complex-case mean correction at modulus-squared `psi2`.
    fn mean_complex_kernel(&self, psi2: f64) -> Complex64 {
        let m2 = self.m * self.m;
        let g1 = self.z * self.mup / ((1.0 + self.mu) * self.t2)
            - self.c * psi2 * m2 / (self.one_cm * (self.one_cm * self.one_cm - self.c * psi2 * m2));
        let g2 = -self.c * (1.0 + self.mu) * self.t1 / (self.z * self.mu * self.t3);
        g1 * g2
    }
}

/// The κ-independent pieces of the asymptotic mean:
/// mean = a0 + (κ-1) a1 + (κ-|ψ|²-2) a2 in the real case.
fn mean_terms(
    f: &TestFunction,
    source: &StieltjesSource,
    contour: &ContourSpec,
) -> Result<[Complex64; 3]> {
    let c = source.c();
    let values = refine_contour(contour, |n| {
        let mut i1 = Complex64::new(0.0, 0.0);
        let mut i2 = Complex64::new(0.0, 0.0);
        let mut i0 = Complex64::new(0.0, 0.0);
        for node in eval_nodes(f, source, contour, n) {
            let ctx = KernelCtx::new(c, &node);
            i1 += node.w * guard(node.f * ctx.mean_k1(), node.z)?;
            i2 += node.w * guard(node.f * ctx.mean_k2(), node.z)?;
            let rest = -ctx.mean_k3() + ctx.mean_k4() + ctx.mean_k5();
            i0 += node.w * guard(node.f * rest, node.z)?;
        }
        Ok(vec![i0 / TWO_PI_I, i1 / TWO_PI_I, -i2 / TWO_PI_I])
    })?;
    Ok([values[0], values[1], values[2]])
}

fn mean_complex_correction(
    f: &TestFunction,
    source: &StieltjesSource,
    contour: &ContourSpec,
    psi: Complex64,
) -> Result<Complex64> {
    let c = source.c();
    let psi2 = psi.norm_sqr();
    let values = refine_contour(contour, |n| {
        let mut total = Complex64::new(0.0, 0.0);
        for node in eval_nodes(f, source, contour, n) {
            let ctx = KernelCtx::new(c, &node);
            total += node.w * guard(node.f * ctx.mean_complex_kernel(psi2), node.z)?;
        }
        Ok(vec![-total / TWO_PI_I])
    })?;
    Ok(values[0])
}

/// The κ-independent pieces of the asymptotic covariance:
/// cov = c0 + (κ-1) c1 + (κ-|ψ|²-2) c2 in the real case.
fn cov_terms(
    f_j: &TestFunction,
    f_r: &TestFunction,
    source: &StieltjesSource,
    outer: &ContourSpec,
    inner: &ContourSpec,
) -> Result<[Complex64; 3]> {
    let c = source.c();
    let four_pi_sq = 4.0 * std::f64::consts::PI * std::f64::consts::PI;
    let mut n_outer = outer.nodes_per_side;
    let mut n_inner = inner.nodes_per_side;
    let mut prev: Option<Vec<Complex64>> = None;
    for _ in 0..=MAX_REFINEMENTS {
        let nodes1 = eval_nodes(f_j, source, outer, n_outer);
        let nodes2 = eval_nodes(f_r, source, inner, n_inner);
        let ctx1: Vec<KernelCtx> = nodes1.iter().map(|nd| KernelCtx::new(c, nd)).collect();
        let ctx2: Vec<KernelCtx> = nodes2.iter().map(|nd| KernelCtx::new(c, nd)).collect();

        // Separable kernels reduce to products of single-contour sums.
        let mut v1 = Complex64::new(0.0, 0.0);
        let mut u1 = Complex64::new(0.0, 0.0);
        for (node, ctx) in nodes1.iter().zip(&ctx1) {
            v1 += node.w * guard(node.f * ctx.v_factor(), node.z)?;
            u1 += node.w * guard(node.f * ctx.under_factor(), node.z)?;
        }
        let mut v2 = Complex64::new(0.0, 0.0);
        let mut u2 = Complex64::new(0.0, 0.0);
        for (node, ctx) in nodes2.iter().zip(&ctx2) {
            v2 += node.w * guard(node.f * ctx.v_factor(), node.z)?;
            u2 += node.w * guard(node.f * ctx.under_factor(), node.z)?;
        }

        // The m'(z1) m'(z2) kernel couples the contours.
        let mut coupled = Complex64::new(0.0, 0.0);
        for (n1, c1x) in nodes1.iter().zip(&ctx1) {
            let wf1 = n1.w * n1.f * c1x.mp;
            for (n2, c2x) in nodes2.iter().zip(&ctx2) {
                let denom = 1.0 + c * (c1x.m + c2x.m) + c * (c - 1.0) * c1x.m * c2x.m;
                coupled += wf1 * n2.w * n2.f * c2x.mp / (denom * denom);
            }
        }
        guard(coupled, Complex64::new(0.0, 0.0))?;

        let c0 = -(c / (2.0 * std::f64::consts::PI * std::f64::consts::PI)) * coupled;
        let c1 = (c / four_pi_sq) * u1 * u2;
        let c2 = -(c / four_pi_sq) * v1 * v2;
        let next = vec![c0, c1, c2];
        if let Some(prev_vals) = &prev {
            if max_delta(prev_vals, &next) < outer.refinement_tolerance {
                return Ok([next[0], next[1], next[2]]);
            }
        }
        prev = Some(next);
        n_outer *= 2;
        n_inner *= 2;
    }
    Err(Error::NonConvergent { last: f64::NAN, tol: outer.refinement_tolerance })
}

/// The two extra covariance terms of the complex case.
fn cov_complex_correction(
    f_j: &TestFunction,
    f_r: &TestFunction,
    source: &StieltjesSource,
    outer: &ContourSpec,
    inner: &ContourSpec,
    psi: Complex64,
) -> Result<Complex64> {
    let c = source.c();
    let psi2 = psi.norm_sqr();
    let four_pi_sq = 4.0 * std::f64::consts::PI * std::f64::consts::PI;
    let mut n_outer = outer.nodes_per_side;
    let mut n_inner = inner.nodes_per_side;
    let mut prev: Option<Vec<Complex64>> = None;
    for _ in 0..=MAX_REFINEMENTS {
        let nodes1 = eval_nodes(f_j, source, outer, n_outer);
        let nodes2 = eval_nodes(f_r, source, inner, n_inner);
        let mut first = Complex64::new(0.0, 0.0);
        let mut second = Complex64::new(0.0, 0.0);
        for n1 in &nodes1 {
            let wf1 = n1.w * n1.f * n1.s.m_prime;
            let m1 = n1.s.m;
            for n2 in &nodes2 {
                let m2 = n2.s.m;
                let wf = wf1 * n2.w * n2.f * n2.s.m_prime;
                let r = 1.0 + c * (m1 + m2) + c * (c - 1.0) * m1 * m2;
                first += wf / (r * r);
                let s = (1.0 + c * m1) * (1.0 + c * m2) - c * psi2 * m1 * m2;
                second += wf / (s * s);
            }
        }
        let total = (c / four_pi_sq) * first - (c * psi2 / four_pi_sq) * second;
        let next = vec![total];
        if let Some(prev_vals) = &prev {
            if max_delta(prev_vals, &next) < outer.refinement_tolerance {
                return Ok(next[0]);
            }
        }
        prev = Some(next);
        n_outer *= 2;
        n_inner *= 2;
    }
    Err(Error::NonConvergent { last: f64::NAN, tol: outer.refinement_tolerance })
}

/// κ-independent contour integrals for one test function, reusable across
/// replicates that share (c, f) but differ in the estimated κ.
#[derive(Debug, Clone, Copy)]
pub struct MomentBasis {
    pub a0: Complex64,
    pub a1: Complex64,
    pub a2: Complex64,
    pub c0: Complex64,
    pub c1: Complex64,
    pub c2: Complex64,
}

impl MomentBasis {
    /// Computes all six integrals with `outer` for single integrals and
    /// (`outer`, `inner`) for double ones.
    pub fn compute(
        f: &TestFunction,
        source: &StieltjesSource,
        outer: &ContourSpec,
        inner: &ContourSpec,
    ) -> Result<Self> {
        outer.validate_for(source.c())?;
        inner.validate_for(source.c())?;
        if !inner.strictly_inside(outer) && !outer.strictly_inside(inner) {
            return Err(Error::ContoursIntersect);
        }
        let [a0, a1, a2] = mean_terms(f, source, outer)?;
        let [c0, c1, c2] = cov_terms(f, f, source, outer, inner)?;
        Ok(Self { a0, a1, a2, c0, c1, c2 })
    }

    /// Real-case mean at the given κ; returns (value, imaginary residue).
    pub fn mean_real(&self, kappa: f64) -> (f64, f64) {
        let total = self.a0 + (kappa - 1.0) * self.a1 + (kappa - 3.0) * self.a2;
        (total.re, total.im.abs())
    }

    /// Real-case variance at the given κ; returns (value, imaginary residue).
    pub fn variance_real(&self, kappa: f64) -> (f64, f64) {
        let total = self.c0 + (kappa - 1.0) * self.c1 + (kappa - 3.0) * self.c2;
        (total.re, total.im.abs())
    }

    /// Assembles full moments with provenance for a report.
    pub fn moments(
        &self,
        params: MomentParams,
        source: MomentSourceKind,
        contour: ContourSpec,
    ) -> CltMoments {
        let (mean, mean_res) = self.mean_real(params.kappa);
        let (variance, var_res) = self.variance_real(params.kappa);
        CltMoments {
            mean,
            variance,
            params,
            source,
            contour,
            mean_imag_residue: mean_res,
            variance_imag_residue: var_res,
        }
    }
}

/// Asymptotic mean of X_f per the central limit theorem.
pub fn asymptotic_mean(
    f: &TestFunction,
    source: &StieltjesSource,
    params: &MomentParams,
    contour: &ContourSpec,
) -> Result<f64> {
    contour.validate_for(source.c())?;
    let [a0, a1, a2] = mean_terms(f, source, contour)?;
    let psi2 = params.psi.norm_sqr();
    let mut total = a0 + (params.kappa - 1.0) * a1 + (params.kappa - psi2 - 2.0) * a2;
    if params.case == CaseKind::Complex {
        total += mean_complex_correction(f, source, contour, params.psi)?;
    }
    Ok(total.re)
}

/// Asymptotic covariance of (X_{f_j}, X_{f_r}) per the central limit theorem.
pub fn asymptotic_covariance(
    f_j: &TestFunction,
    f_r: &TestFunction,
    source: &StieltjesSource,
    params: &MomentParams,
    outer: &ContourSpec,
    inner: &ContourSpec,
) -> Result<f64> {
    outer.validate_for(source.c())?;
    inner.validate_for(source.c())?;
    if !inner.strictly_inside(outer) && !outer.strictly_inside(inner) {
        return Err(Error::ContoursIntersect);
    }
    let [c0, c1, c2] = cov_terms(f_j, f_r, source, outer, inner)?;
    let psi2 = params.psi.norm_sqr();
    let mut total = c0 + (params.kappa - 1.0) * c1 + (params.kappa - psi2 - 2.0) * c2;
    if params.case == CaseKind::Complex {
        total += cov_complex_correction(f_j, f_r, source, outer, inner, params.psi)?;
    }
    Ok(total.re)
}

/// Plug-in estimate of (κ, ψ) from real data: the averaged normalized
/// fourth moment of the centered rows, clamped below at 1; ψ = 1.
pub fn estimate_kappa_psi(data: &DataMatrix) -> Result<MomentParams> {
    let (p, n) = (data.p(), data.n());
    if n < 4 {
        return Err(Error::DimensionTooSmall { p, n });
    }
    let mut total = 0.0;
    for i in 0..p {
        let row = data.values().row(i);
        let mean = row.sum() / n as f64;
        let mut m2 = 0.0;
        let mut m4 = 0.0;
        for &x in row.iter() {
            let d = x - mean;
            let d2 = d * d;
            m2 += d2;
            m4 += d2 * d2;
        }
        m2 /= n as f64;
        m4 /= n as f64;
        if m2 <= 0.0 {
            return Err(Error::ConstantRow(i));
        }
        total += m4 / (m2 * m2);
    }
    let kappa = (total / p as f64).max(1.0);
    MomentParams::real(data.aspect_ratio(), kappa)
}

/// Convenience: plug-in source straight from data.
pub fn plug_in_from_data(data: &DataMatrix) -> Result<StieltjesSource> {
    Ok(StieltjesSource::plug_in(&correlation_matrix(data)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn default_contour_matches_the_construction_rule() {
        let c1 = default_contour(1.0);
        assert_eq!((c1.x_l, c1.x_r, c1.v0), (-0.5, 5.0, 1.0));
        let c2 = default_contour(0.25);
        assert_abs_diff_eq!(c2.x_l, 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(c2.x_r, 3.25, epsilon = 1e-15);
        let c3 = default_contour(4.0);
        assert_eq!((c3.x_l, c3.x_r), (-0.5, 10.0));
    }

    #[test]
    fn inner_contour_is_strictly_nested_and_encloses_the_atom() {
        for c in [0.2, 0.5, 1.0, 2.0, 4.0] {
            let outer = default_contour(c);
            let inner = inner_contour(c);
            assert!(inner.strictly_inside(&outer), "c = {c}");
            let lower = (1.0 - c.sqrt()).powi(2);
            if c >= 1.0 {
                assert!(inner.x_l < 0.0, "atom excluded at c = {c}");
            } else {
                assert!(inner.x_l < lower);
            }
            assert!(inner.x_r > (1.0 + c.sqrt()).powi(2));
        }
    }

    #[test]
    fn identity_total_mass_is_one() {
        for c in [0.25, 1.0, 2.0] {
            let source = StieltjesSource::closed_form(c);
            let value =
                contour_lss_identity(&TestFunction::constant(1.0), &source, &default_contour(c))
                    .unwrap();
            assert_abs_diff_eq!(value, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn identity_matches_mp_integral_for_square() {
        let source = StieltjesSource::closed_form(0.4);
        let value =
            contour_lss_identity(&TestFunction::Square, &source, &default_contour(0.4)).unwrap();
        assert_abs_diff_eq!(value, 1.4, epsilon = 1e-8);
    }

    #[test]
    fn plug_in_identity_recovers_the_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let data = DataMatrix::new(DMatrix::from_fn(40, 90, |_, _| {
            StandardNormal.sample(&mut rng)
        }))
        .unwrap();
        let spectrum = correlation_matrix(&data).unwrap();
        let source = StieltjesSource::plug_in(&spectrum);
        let contour = default_contour(spectrum.c_n);
        let value = contour_lss_identity(&TestFunction::Polynomial(vec![0.0, 1.0]), &source, &contour)
            .unwrap();
        assert_abs_diff_eq!(value, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn mean_of_constant_statistic_is_zero() {
        let source = StieltjesSource::closed_form(0.5);
        let params = MomentParams::real(0.5, 3.0).unwrap();
        let mean = asymptotic_mean(
            &TestFunction::constant(2.5),
            &source,
            &params,
            &default_contour(0.5),
        )
        .unwrap();
        assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-8);
    }

    #[test]
    fn variance_of_constant_statistic_is_zero() {
        let source = StieltjesSource::closed_form(0.5);
        let params = MomentParams::real(0.5, 3.0).unwrap();
        let var = asymptotic_covariance(
            &TestFunction::constant(1.0),
            &TestFunction::constant(1.0),
            &source,
            &params,
            &default_contour(0.5),
            &inner_contour(0.5),
        )
        .unwrap();
        assert_abs_diff_eq!(var, 0.0, epsilon = 1e-8);
    }

    #[test]
    fn covariance_is_symmetric_in_its_arguments() {
        let source = StieltjesSource::closed_form(0.5);
        let params = MomentParams::real(0.5, 2.2).unwrap();
        let outer = default_contour(0.5);
        let inner = inner_contour(0.5);
        let fj = TestFunction::Square;
        let fr = TestFunction::Polynomial(vec![0.0, 0.0, 0.0, 1.0]);
        let ab = asymptotic_covariance(&fj, &fr, &source, &params, &outer, &inner).unwrap();
        let ba = asymptotic_covariance(&fr, &fj, &source, &params, &outer, &inner).unwrap();
        assert_abs_diff_eq!(ab, ba, epsilon = 1e-8);
    }

    #[test]
    fn intersecting_contours_are_rejected() {
        let source = StieltjesSource::closed_form(0.5);
        let params = MomentParams::real(0.5, 3.0).unwrap();
        let contour = default_contour(0.5);
        let result = asymptotic_covariance(
            &TestFunction::Square,
            &TestFunction::Square,
            &source,
            &params,
            &contour,
            &contour,
        );
        assert!(matches!(result, Err(Error::ContoursIntersect)));
    }

    #[test]
    fn contour_independence_of_the_mean() {
        let source = StieltjesSource::closed_form(0.5);
        let params = MomentParams::real(0.5, 3.0).unwrap();
        let base = default_contour(0.5);
        let wide = ContourSpec { v0: 2.0, x_r: base.x_r + 0.5, ..base };
        let f = TestFunction::SchottPoly;
        let m1 = asymptotic_mean(&f, &source, &params, &base).unwrap();
        let m2 = asymptotic_mean(&f, &source, &params, &wide).unwrap();
        let rel = (m1 - m2).abs() / m1.abs().max(1e-12);
        assert!(rel < 1e-6, "relative contour drift {rel}");
    }

    #[test]
    fn complex_case_with_unit_psi_collapses_towards_real_case() {
        // For |psi| = 1 the extra covariance terms cancel: the added
        // m'm'/R² integral is offset exactly by the psi-term at psi = 1
        // only when the S and R denominators coincide, which happens for
        // c(c-1) = -c, i.e. never; so just check the correction is finite
        // and the real part assembles.
        let source = StieltjesSource::closed_form(0.5);
        let params =
            MomentParams::new(0.5, 3.0, Complex64::new(1.0, 0.0), CaseKind::Complex).unwrap();
        let mean = asymptotic_mean(&TestFunction::Square, &source, &params, &default_contour(0.5))
            .unwrap();
        assert!(mean.is_finite());
        let var = asymptotic_covariance(
            &TestFunction::Square,
            &TestFunction::Square,
            &source,
            &params,
            &default_contour(0.5),
            &inner_contour(0.5),
        )
        .unwrap();
        assert!(var.is_finite());
    }

    #[test]
    fn kappa_estimate_near_three_for_gaussian_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = DataMatrix::new(DMatrix::from_fn(200, 2000, |_, _| {
            StandardNormal.sample(&mut rng)
        }))
        .unwrap();
        let params = estimate_kappa_psi(&data).unwrap();
        assert!(params.kappa > 2.85 && params.kappa < 3.15, "kappa {}", params.kappa);
        assert_eq!(params.case, CaseKind::Real);
    }

    #[test]
    fn kappa_estimate_for_rademacher_rows_hits_the_clamp_region() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let data = DataMatrix::new(DMatrix::from_fn(100, 1000, |_, _| {
            if rand::Rng::random::<bool>(&mut rng) {
                1.0
            } else {
                -1.0
            }
        }))
        .unwrap();
        let params = estimate_kappa_psi(&data).unwrap();
        assert!(params.kappa >= 1.0 && params.kappa < 1.1, "kappa {}", params.kappa);
    }

    #[test]
    fn kappa_estimate_requires_enough_samples() {
        let data = DataMatrix::from_rows(vec![vec![1.0, 2.0, 3.0], vec![0.0, 1.0, -1.0]]).unwrap();
        assert!(matches!(
            estimate_kappa_psi(&data),
            Err(Error::DimensionTooSmall { .. })
        ));
    }
}
