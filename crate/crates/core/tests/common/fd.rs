//! Randomized toy instances and a central-difference checker.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use recmia::dlmia::{Batch, DlMiaConfig, DlMiaState, FrozenNoise, Noise};
use recmia::nn::{DenseMatrix, Parameterized};

pub const STEP: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

pub fn toy_config() -> DlMiaConfig {
    DlMiaConfig { d_inv: 2, m: 3, decoder_hidden: vec![5, 4, 3], attack_hidden: vec![6, 4], ..DlMiaConfig::default() }
}

pub struct Toy {
    pub state: DlMiaState,
    pub batch: Batch,
    pub noise: FrozenNoise,
    pub bce_coef: Vec<f64>,
    pub elbo_coef: Vec<f64>,
}

pub fn toy(seed: u64) -> Toy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n_s, n_t, dim) = (5, 4, 3);
    let mut gauss = |r: usize| DenseMatrix::from_vec(r, dim, (0..r * dim).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap();
    let xs = gauss(n_s);
    let xt = gauss(n_t);
    let labels = (0..n_s).map(|i| (i % 2) as u8).collect();
    let batch = Batch::new(&xs, labels, &xt).unwrap();
    let mut state = DlMiaState::init(toy_config(), dim, &mut rng).unwrap();
    // Nonzero biases so no path sits at a symmetric point.
    for p in state.decoder.as_mut().unwrap().params_mut().into_iter().chain(state.attack.params_mut()) {
        p.iter_mut().for_each(|v| *v += rng.random_range(-0.2..0.2));
    }
    let kappa = state.encoder.as_ref().unwrap().forward(&batch.x, Noise::Deterministic).unwrap().kappa;
    let noise = FrozenNoise::draw(&mut rng, &kappa, 2, 3).unwrap();
    let bce_coef = (0..n_s).map(|_| rng.random_range(0.1..1.0)).collect();
    let elbo_coef = (0..n_s + n_t).map(|_| rng.random_range(0.1..1.0)).collect();
    Toy { state, batch, noise, bce_coef, elbo_coef }
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / (a.abs() + n.abs()).max(1e-7)
}

/// Compares `analytic` against central differences of `loss` over every
/// scalar reachable through `params`.
pub fn check<S: Clone>(
    what: &str,
    base: &S,
    params: impl Fn(&mut S) -> Vec<&mut [f64]>,
    analytic: Vec<Vec<f64>>,
    loss: impl Fn(&S) -> f64,
) -> usize {
    let mut probe = base.clone();
    let shapes: Vec<usize> = params(&mut probe).iter().map(|p| p.len()).collect();
    assert_eq!(shapes, analytic.iter().map(Vec::len).collect::<Vec<_>>(), "{what}: layout");
    let mut checked = 0;
    for (t, &len) in shapes.iter().enumerate() {
        for k in 0..len {
            let mut plus = base.clone();
            params(&mut plus)[t][k] += STEP;
            let mut minus = base.clone();
            params(&mut minus)[t][k] -= STEP;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * STEP);
            let a = analytic[t][k];
            assert!(rel_err(a, numeric) < TOL, "{what} tensor {t} index {k}: analytic {a} numeric {numeric}");
            checked += 1;
        }
    }
    checked
}

pub fn owned(p: Vec<&[f64]>) -> Vec<Vec<f64>> {
    p.into_iter().map(<[f64]>::to_vec).collect()
}

/// Largest relative error of `analytic` against central differences of `loss`.
pub fn worst_rel_err<S: Clone>(
    base: &S,
    params: impl Fn(&mut S) -> Vec<&mut [f64]>,
    analytic: &[Vec<f64>],
    loss: impl Fn(&S) -> f64,
) -> f64 {
    let mut worst = 0.0f64;
    for (t, grad) in analytic.iter().enumerate() {
        for (k, &a) in grad.iter().enumerate() {
            let mut plus = base.clone();
            params(&mut plus)[t][k] += STEP;
            let mut minus = base.clone();
            params(&mut minus)[t][k] -= STEP;
            worst = worst.max(rel_err(a, (loss(&plus) - loss(&minus)) / (2.0 * STEP)));
        }
    }
    worst
}
