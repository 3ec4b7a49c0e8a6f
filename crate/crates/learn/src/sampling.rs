use rand::Rng;
use rand_distr::Exp1;

/// Uniform draws on the probability simplex (flat Dirichlet) from
/// normalized exponential variates.
pub fn sample_simplex<R: Rng + ?Sized>(regions: usize, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            let e: Vec<f64> = (0..regions).map(|_| rng.sample::<f64, _>(Exp1)).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|v| v / s).collect()
        })
        .collect()
}

/// Time-to-go samples uniform on `[0, horizon * itr / num_epoch]`.
pub fn curriculum_times<R: Rng + ?Sized>(
    horizon: f64,
    itr: usize,
    num_epoch: usize,
    count: usize,
    rng: &mut R,
) -> Vec<f64> {
    let upper = horizon * itr.min(num_epoch) as f64 / num_epoch.max(1) as f64;
    (0..count)
        .map(|_| if upper > 0.0 { rng.random_range(0.0..=upper) } else { 0.0 })
        .collect()
}
