//! Central finite-difference gradient verification.

/// Result of probing one parameter.
#[derive(Debug, Clone, Copy)]
pub struct GradProbe {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

/// Compare analytic gradients against central differences at the given
/// parameter indices. `loss_fn` evaluates the scalar loss from a flat
/// parameter vector; it must be deterministic.
pub fn check_gradients(
    mut loss_fn: impl FnMut(&[f64]) -> f64,
    params: &[f64],
    analytic: &[f64],
    indices: &[usize],
    eps: f64,
) -> Vec<GradProbe> {
    assert_eq!(params.len(), analytic.len());
    let mut work = params.to_vec();
    let mut out = Vec::with_capacity(indices.len());
    for &i in indices {
        let orig = work[i];
        work[i] = orig + eps;
        let plus = loss_fn(&work);
        work[i] = orig - eps;
        let minus = loss_fn(&work);
        work[i] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic[i];
        let denom = a.abs().max(numeric.abs()).max(1e-6);
        let rel_err = (a - numeric).abs() / denom;
        out.push(GradProbe {
            index: i,
            analytic: a,
            numeric,
            rel_err,
        });
    }
    out
}

/// Deterministic spread of probe indices across the parameter vector,
/// skipping nothing: useful when sampling a few of many parameters.
pub fn spread_indices(len: usize, count: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut all: Vec<usize> = (0..len).collect();
    all.shuffle(&mut rng);
    all.truncate(count.min(len));
    all.sort_unstable();
    all
}
