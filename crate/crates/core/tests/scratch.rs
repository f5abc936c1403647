use corrspec_core::*;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

#[test]
#[ignore]
fn probe_clt_moments_against_monte_carlo() {
    let c = 0.5;
    let p = 200usize;
    let n = 400usize;
    let reps = 4000usize;
    let f = TestFunction::Square;
    let source = StieltjesSource::closed_form(c);
    let params = MomentParams::real(c, 3.0).unwrap();
    let outer = default_contour(c);
    let inner = inner_contour(c);
    let mean = asymptotic_mean(&f, &source, &params, &outer).unwrap();
    let var = asymptotic_covariance(&f, &f, &source, &params, &outer, &inner).unwrap();
    println!("asymptotic mean = {mean}, variance = {var}");

    let centering = mp_integral(&MpModel::new(c), &f).unwrap();
    let stats: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(777 + r as u64);
            let values = DMatrix::from_fn(p, n, |_, _| StandardNormal.sample(&mut rng));
            let data = DataMatrix::new(values).unwrap();
            let gram = correlation_gram(&data).unwrap();
            let frob: f64 = gram.iter().map(|v| v * v).sum();
            frob - p as f64 * centering
        })
        .collect();
    let mc_mean = stats.iter().sum::<f64>() / reps as f64;
    let mc_var =
        stats.iter().map(|s| (s - mc_mean) * (s - mc_mean)).sum::<f64>() / (reps - 1) as f64;
    println!("monte carlo mean = {mc_mean}, variance = {mc_var}");
    println!("se(mean) = {}", (mc_var / reps as f64).sqrt());
}
