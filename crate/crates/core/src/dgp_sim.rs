//! Data-generating processes for the size/power experiments and a seeded,
//! deterministic Monte Carlo harness.
//!
//! Randomness: every replicate owns a `ChaCha8` stream whose 64-bit seed is
//! derived from (base seed, cell index, replicate index) through two rounds
//! of the splitmix64 mixer, so reports are identical regardless of thread
//! count or execution order.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clt_engine::{default_contour, estimate_kappa_psi, inner_contour, MomentBasis, StieltjesSource};
use crate::error::{Error, Result};
use crate::lss_test::{transform_for, TestFunction, TestKind};
use crate::matrix_core::{correlation_gram, correlation_matrix, DataMatrix};
use crate::mp_law::{mp_integral, MpModel};

/// The data-generating processes of the simulation study.
///
/// `d` parameters are shares in (0, 1]: the fraction of rows (or time
/// points) that receive their own independent draw, the rest sharing one
/// common draw. Power grows with the heterogeneous share.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DgpKind {
    /// Independent rows: first floor(p/2) standard normal, rest Gamma(1,1)
    /// standardized to mean 0, variance 1.
    IndepHalfGamma,
    /// x_i = (I + u vᵀ/√n) z_i with u, v fresh standard normal vectors.
    DependentRankOne,
    /// x_i = (I + d eᵀ + e dᵀ) z_i with d = (d_value, 0, …, 0)ᵀ.
    DependentSpike { d: f64 },
    /// Factor model with one common loading (loading-test null).
    FactorCommonLoading { r: usize },
    /// Factor model, floor(d·p) rows with individual loadings, the rest
    /// sharing one (loading-test alternative).
    FactorHeteroLoading { r: usize, d_share: f64 },
    /// Factor model with a time-constant factor (factor-test null).
    FactorConstantFactor { r: usize },
    /// Factor model, floor(d·n) time points with individual factors, the
    /// rest sharing one (factor-test alternative).
    FactorHeteroFactor { r: usize, d_share: f64 },
    /// X_it = α + t/n + ε_it with one common α (characteristic-test null).
    AlphaCommon,
    /// floor(d·p) rows with individual α_i, the rest sharing one.
    AlphaHetero { d_share: f64 },
}

impl DgpKind {
    /// The d parameter of the cell, when the process has one.
    pub fn d(&self) -> Option<f64> {
        match *self {
            DgpKind::DependentSpike { d } => Some(d),
            DgpKind::FactorHeteroLoading { d_share, .. }
            | DgpKind::FactorHeteroFactor { d_share, .. }
            | DgpKind::AlphaHetero { d_share } => Some(d_share),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        let share_ok = |d: f64| d > 0.0 && d <= 1.0;
        let ok = match *self {
            DgpKind::DependentSpike { d } => d > 0.0,
            DgpKind::FactorHeteroLoading { r, d_share } | DgpKind::FactorHeteroFactor { r, d_share } => {
                r >= 1 && share_ok(d_share)
            }
            DgpKind::FactorCommonLoading { r } | DgpKind::FactorConstantFactor { r } => r >= 1,
            DgpKind::AlphaHetero { d_share } => share_ok(d_share),
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("{self:?}")))
        }
    }
}

/// A fully seeded generation request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub kind: DgpKind,
    pub p: usize,
    pub n: usize,
    pub seed: u64,
}

/// One round of the splitmix64 mixer.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Seed of replicate `rep` in cell `cell`: two chained splitmix64 rounds.
pub fn replicate_seed(base: u64, cell: u64, rep: u64) -> u64 {
    let s = splitmix64(base ^ cell.wrapping_mul(0x9E3779B97F4A7C15));
    splitmix64(s ^ rep.wrapping_mul(0xBF58476D1CE4E5B9))
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Entries of z: first floor(p/2) rows standard normal, rest Gamma(1,1)
/// shifted by its mean so every entry has mean 0 and variance 1.
fn half_gamma_matrix(rng: &mut ChaCha8Rng, p: usize, n: usize) -> DMatrix<f64> {
    let gamma = Gamma::new(1.0, 1.0).expect("valid shape/scale");
    let normals = p / 2;
    let mut z = DMatrix::zeros(p, n);
    for i in 0..p {
        for j in 0..n {
            z[(i, j)] = if i < normals {
                StandardNormal.sample(rng)
            } else {
                gamma.sample(rng) - 1.0
            };
        }
    }
    z
}

fn apply_rank_one(rng: &mut ChaCha8Rng, z: &mut DMatrix<f64>) {
    let (p, n) = (z.nrows(), z.ncols());
    let u: Vec<f64> = (0..p).map(|_| StandardNormal.sample(rng)).collect();
    let v: Vec<f64> = (0..p).map(|_| StandardNormal.sample(rng)).collect();
    let scale = 1.0 / (n as f64).sqrt();
    for t in 0..n {
        let dot: f64 = (0..p).map(|i| v[i] * z[(i, t)]).sum();
        for i in 0..p {
            z[(i, t)] += scale * u[i] * dot;
        }
    }
}

fn apply_spike(d: f64, z: &mut DMatrix<f64>) {
    let (p, n) = (z.nrows(), z.ncols());
    for t in 0..n {
        let col_sum: f64 = (0..p).map(|i| z[(i, t)]).sum();
        let z0 = z[(0, t)];
        for i in 0..p {
            z[(i, t)] += d * z0;
        }
        z[(0, t)] += d * col_sum;
    }
}

/// AR(1) factors F_t = a F_{t-1} + η_t with a = 0.2, F_0 = 0; column t
/// holds F_{t+1}.
fn ar1_factors(rng: &mut ChaCha8Rng, r: usize, n: usize) -> DMatrix<f64> {
    let a = 0.2;
    let mut factors = DMatrix::zeros(r, n);
    let mut prev = vec![0.0; r];
    for t in 0..n {
        for k in 0..r {
            let innovation: f64 = StandardNormal.sample(rng);
            let value = a * prev[k] + innovation;
            factors[(k, t)] = value;
            prev[k] = value;
        }
    }
    factors
}

/// X_it = λ_iᵀ F_t + ε_it; also returns ε for the algebraic-identity tests.
fn loading_model(
    rng: &mut ChaCha8Rng,
    p: usize,
    n: usize,
    r: usize,
    hetero_rows: usize,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let factors = ar1_factors(rng, r, n);
    let mut loadings = DMatrix::zeros(p, r);
    for i in 0..hetero_rows {
        for k in 0..r {
            loadings[(i, k)] = StandardNormal.sample(rng);
        }
    }
    let common: Vec<f64> = (0..r).map(|_| StandardNormal.sample(rng)).collect();
    for i in hetero_rows..p {
        for k in 0..r {
            loadings[(i, k)] = common[k];
        }
    }
    let eps = normal_matrix(rng, p, n);
    let x = &loadings * &factors + &eps;
    (x, eps)
}

/// X_it = λ_iᵀ F_t + ε_it with fresh loadings and factors that are constant
/// in t except for the first `hetero_cols` time points.
fn factor_model(rng: &mut ChaCha8Rng, p: usize, n: usize, r: usize, hetero_cols: usize) -> DMatrix<f64> {
    let loadings = normal_matrix(rng, p, r);
    let mut factors = DMatrix::zeros(r, n);
    for t in 0..hetero_cols {
        for k in 0..r {
            factors[(k, t)] = StandardNormal.sample(rng);
        }
    }
    let common: Vec<f64> = (0..r).map(|_| StandardNormal.sample(rng)).collect();
    for t in hetero_cols..n {
        for k in 0..r {
            factors[(k, t)] = common[k];
        }
    }
    let eps = normal_matrix(rng, p, n);
    &loadings * &factors + &eps
}

/// X_it = α_i + t/n + ε_it with the first `hetero_rows` α_i drawn freshly.
fn alpha_model(rng: &mut ChaCha8Rng, p: usize, n: usize, hetero_rows: usize) -> DMatrix<f64> {
    let mut alphas = vec![0.0; p];
    for alpha in alphas.iter_mut().take(hetero_rows) {
        *alpha = StandardNormal.sample(rng);
    }
    let common: f64 = StandardNormal.sample(rng);
    for alpha in alphas.iter_mut().skip(hetero_rows) {
        *alpha = common;
    }
    let mut x = normal_matrix(rng, p, n);
    for i in 0..p {
        for t in 0..n {
            x[(i, t)] += alphas[i] + (t + 1) as f64 / n as f64;
        }
    }
    x
}

/// Generates one replicate of the requested process.
pub fn generate(spec: &DgpSpec) -> Result<DataMatrix> {
    spec.kind.validate()?;
    if spec.p < 2 || spec.n < 2 {
        return Err(Error::DimensionTooSmall { p: spec.p, n: spec.n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (p, n) = (spec.p, spec.n);
    let values = match spec.kind {
        DgpKind::IndepHalfGamma => half_gamma_matrix(&mut rng, p, n),
        DgpKind::DependentRankOne => {
            let mut z = half_gamma_matrix(&mut rng, p, n);
            apply_rank_one(&mut rng, &mut z);
            z
        }
        DgpKind::DependentSpike { d } => {
            let mut z = half_gamma_matrix(&mut rng, p, n);
            apply_spike(d, &mut z);
            z
        }
        DgpKind::FactorCommonLoading { r } => loading_model(&mut rng, p, n, r, 0).0,
        DgpKind::FactorHeteroLoading { r, d_share } => {
            loading_model(&mut rng, p, n, r, (d_share * p as f64).floor() as usize).0
        }
        DgpKind::FactorConstantFactor { r } => factor_model(&mut rng, p, n, r, 0),
        DgpKind::FactorHeteroFactor { r, d_share } => {
            factor_model(&mut rng, p, n, r, (d_share * n as f64).floor() as usize)
        }
        DgpKind::AlphaCommon => alpha_model(&mut rng, p, n, 0),
        DgpKind::AlphaHetero { d_share } => {
            alpha_model(&mut rng, p, n, (d_share * p as f64).floor() as usize)
        }
    };
    DataMatrix::new(values)
}

/// Rejection frequency of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub kind: DgpKind,
    pub p: usize,
    pub n: usize,
    pub rejections: usize,
    pub k: usize,
    pub rate: f64,
}

impl CellResult {
    pub fn standard_error(&self) -> f64 {
        (self.rate * (1.0 - self.rate) / self.k as f64).sqrt()
    }
}

/// The outcome of a full size/power experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub test: TestKind,
    pub f: TestFunction,
    pub alpha: f64,
    pub k: usize,
    pub base_seed: u64,
    /// RNG family and seed-derivation rule, for reproducibility notes.
    pub generator: String,
    pub cells: Vec<CellResult>,
}

impl SimulationReport {
    /// Renders the grid the way the tables are usually laid out: rows of n
    /// with columns of c = p/n, or rows of (n, p) with columns of d when
    /// the process carries a d parameter.
    pub fn to_csv(&self) -> String {
        let by_d = self.cells.iter().any(|cell| cell.kind.d().is_some());
        let mut keys: Vec<String> = Vec::new();
        let mut rows: Vec<String> = Vec::new();
        for cell in &self.cells {
            let key = Self::column_key(cell, by_d);
            if !keys.contains(&key) {
                keys.push(key);
            }
            let row = Self::row_key(cell, by_d);
            if !rows.contains(&row) {
                rows.push(row);
            }
        }
        let mut out = String::new();
        out.push_str(if by_d { "(n;p)\\d" } else { "n\\c" });
        for key in &keys {
            out.push(',');
            out.push_str(key);
        }
        out.push('\n');
        for row in &rows {
            out.push_str(row);
            for key in &keys {
                out.push(',');
                let hit = self.cells.iter().find(|cell| {
                    Self::row_key(cell, by_d) == *row && Self::column_key(cell, by_d) == *key
                });
                if let Some(cell) = hit {
                    out.push_str(&format!("{:.4}", cell.rate));
                }
            }
            out.push('\n');
        }
        out
    }

    fn column_key(cell: &CellResult, by_d: bool) -> String {
        if by_d {
            format!("{:.2}", cell.kind.d().unwrap_or(f64::NAN))
        } else {
            format!("{:.2}", cell.p as f64 / cell.n as f64)
        }
    }

    fn row_key(cell: &CellResult, by_d: bool) -> String {
        if by_d {
            format!("({};{})", cell.n, cell.p)
        } else {
            format!("{}", cell.n)
        }
    }
}

/// Runs K seeded replications of `test` on every grid cell and records the
/// rejection frequencies. Replicates run in parallel; counts are merged by
/// index so the report does not depend on scheduling.
pub fn run_experiment(
    grid: &[DgpSpec],
    test: TestKind,
    f: &TestFunction,
    k: usize,
    alpha: f64,
) -> Result<SimulationReport> {
    if k < 1 {
        return Err(Error::InvalidSpec("replication count must be >= 1".into()));
    }
    let mut cells = Vec::with_capacity(grid.len());
    for (cell_idx, spec) in grid.iter().enumerate() {
        let rejections = run_cell(spec, cell_idx as u64, test, f, k, alpha)?;
        cells.push(CellResult {
            kind: spec.kind,
            p: spec.p,
            n: spec.n,
            rejections,
            k,
            rate: rejections as f64 / k as f64,
        });
    }
    Ok(SimulationReport {
        test,
        f: f.clone(),
        alpha,
        k,
        base_seed: grid.first().map_or(0, |s| s.seed),
        generator: "ChaCha8 seeded by chained splitmix64 over (base, cell, replicate)".into(),
        cells,
    })
}

fn run_cell(
    spec: &DgpSpec,
    cell_idx: u64,
    test: TestKind,
    f: &TestFunction,
    k: usize,
    alpha: f64,
) -> Result<usize> {
    // Dimensions of the matrix the pipeline actually tests.
    let (pt, nt) = match test {
        TestKind::Factors => (spec.n, spec.p),
        _ => (spec.p, spec.n),
    };
    let c_t = pt as f64 / nt as f64;
    if !f.admissible_for(c_t) {
        return Err(Error::UndefinedAtAtom { c: c_t });
    }
    let centering = mp_integral(&MpModel::new(c_t), f)?;
    let source = StieltjesSource::closed_form(c_t);
    let basis = MomentBasis::compute(f, &source, &default_contour(c_t), &inner_contour(c_t))?;
    let threshold = z_critical(alpha);

    let flags: Vec<Result<bool>> = (0..k)
        .into_par_iter()
        .map(|rep| {
            let seed = replicate_seed(spec.seed, cell_idx, rep as u64);
            let data = generate(&DgpSpec { seed, ..*spec })?;
            let transformed = transform_for(test, &data)?;
            let statistic = fast_statistic(&transformed, f, centering)?;
            let params = estimate_kappa_psi(&transformed)?;
            let (mean, _) = basis.mean_real(params.kappa);
            let (variance, _) = basis.variance_real(params.kappa);
            if !(variance > 0.0) {
                return Err(Error::DegenerateVariance(variance));
            }
            let z = (statistic - mean) / variance.sqrt();
            Ok(z.abs() > threshold)
        })
        .collect();
    let mut rejections = 0;
    for flag in flags {
        if flag? {
            rejections += 1;
        }
    }
    Ok(rejections)
}

/// Σ_j f(λ_j) - p·centering, using the Frobenius-norm route for f = x²
/// (Σλ² = tr B² = ||B||_F², no eigendecomposition needed).
fn fast_statistic(data: &DataMatrix, f: &TestFunction, centering: f64) -> Result<f64> {
    let p = data.p() as f64;
    match f {
        TestFunction::Square => {
            let gram = correlation_gram(data)?;
            let frob: f64 = gram.iter().map(|v| v * v).sum();
            Ok(frob - p * centering)
        }
        _ => {
            let spectrum = correlation_matrix(data)?;
            let sum: f64 = spectrum.eigenvalues.iter().map(|&l| f.eval(l)).sum();
            Ok(sum - p * centering)
        }
    }
}

fn z_critical(alpha: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(1.0 - alpha / 2.0)
}
