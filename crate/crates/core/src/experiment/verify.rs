//! Oracle-backed self checks behind `verify`.
//!
//! Each check compares a library routine against an independent oracle: a
//! plain power series for the Bessel function, spherical quadrature and Monte
//! Carlo for the KL terms, the Bessel ratio for the sampler, central
//! differences for every gradient path, the quadratic pairwise AUC, and a
//! rescan of the split invariants.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{generate_synthetic, make_splits, verify_bundle, SplitFractions, SyntheticSpec};
use crate::dlmia::{objective, reweighted_loss, Batch, DlMiaConfig, DlMiaState, EstimationProblem, FrozenNoise, Noise};
use crate::nn::{DenseMatrix, Parameterized};
use crate::numerics::{auc_from, bessel_i, kl_gaussian, kl_vmf, sample_vmf, sample_vmf_canonical, GaussianPosterior, VmfPosterior};

/// Deliberate defects for testing that the suite notices them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Faults {
    /// Negates every KL value under test.
    pub kl_sign_flip: bool,
}

impl Faults {
    fn kl(&self, v: f64) -> f64 {
        if self.kl_sign_flip {
            -v
        } else {
            v
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed error against its tolerance.
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(5).max(5);
        let mut out = format!("{:<width$}  {:<6}  {:>7}  detail\n", "check", "result", "seconds");
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            writeln!(out, "{:<width$}  {:<6}  {:>7.2}  {}", c.name, status, c.seconds, c.detail).unwrap();
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        writeln!(out, "{} checks, {} failed", self.checks.len(), failed).unwrap();
        out
    }
}

type Outcome = Result<String, String>;

/// Runs every check; never stops early.
pub fn verify_suite(faults: Faults) -> VerifyReport {
    let checks: Vec<(&'static str, Box<dyn Fn() -> Outcome>)> = vec![
        ("bessel_i vs power series", Box::new(check_bessel)),
        ("kl_gaussian vs Monte Carlo", Box::new(move || check_kl_gaussian(faults))),
        ("kl_vmf vs quadrature (m=3)", Box::new(move || check_kl_vmf_quadrature(faults))),
        ("kl_vmf vs Monte Carlo (m=8)", Box::new(move || check_kl_vmf_mc(faults))),
        ("vmf sampler mean resultant length", Box::new(check_sampler)),
        ("gradients vs finite differences", Box::new(check_gradients)),
        ("score gradients vs finite differences", Box::new(check_score_gradients)),
        ("auc vs pairwise oracle", Box::new(check_auc)),
        ("split invariants", Box::new(check_splits)),
    ];
    let checks = checks
        .into_iter()
        .map(|(name, f)| {
            let start = Instant::now();
            // A panicking routine is a failed check, not a crashed suite.
            let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f))
                .unwrap_or_else(|_| Err("panicked".to_string()));
            let (passed, detail) = match outcome {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            Check { name, passed, detail, seconds: start.elapsed().as_secs_f64() }
        })
        .collect();
    VerifyReport { checks }
}

fn within(what: &str, err: f64, tol: f64) -> Outcome {
    let msg = format!("{what} {err:.2e} (tol {tol:.0e})");
    if err < tol {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn series_i(nu: f64, x: f64) -> f64 {
    // Γ(ν+1) by recurrence for integer and half-integer orders.
    let (mut g, mut a) = if nu.fract() == 0.0 { (1.0, 1.0) } else { (PI.sqrt(), 0.5) };
    while a <= nu + 1e-9 {
        g *= a;
        a += 1.0;
    }
    let q = 0.25 * x * x;
    let mut term = (0.5 * x).powf(nu) / g;
    let mut sum = term;
    let mut k = 0.0;
    while term >= 1e-18 * sum {
        k += 1.0;
        term *= q / (k * (k + nu));
        sum += term;
    }
    sum
}

fn check_bessel() -> Outcome {
    let mut worst = 0.0f64;
    for nu in [0.0, 0.5, 1.0, 1.5, 2.5, 4.0, 7.5, 15.0] {
        for x in [1e-3, 0.3, 1.0, 4.0, 9.5, 20.0, 35.0, 50.0] {
            let want = series_i(nu, x);
            let got = bessel_i(nu, x).map_err(|e| e.to_string())?;
            worst = worst.max(((got - want) / want).abs());
        }
    }
    within("max rel err", worst, 1e-10)
}

fn check_kl_gaussian(faults: Faults) -> Outcome {
    let mu = [0.3, -0.7, 1.1];
    let log_var = [2f64.ln(), 0.5f64.ln(), 0.0];
    let post = GaussianPosterior::new(mu.to_vec(), log_var.to_vec()).map_err(|e| e.to_string())?;
    let exact = faults.kl(kl_gaussian(&post).value);
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let n = 400_000;
    let mut total = 0.0;
    for _ in 0..n {
        for k in 0..3 {
            let sd = (0.5 * log_var[k]).exp();
            let e: f64 = StandardNormal.sample(&mut rng);
            let z = mu[k] + sd * e;
            total += -0.5 * e * e - sd.ln() + 0.5 * z * z;
        }
    }
    within("abs err", (total / n as f64 - exact).abs(), 5e-3)
}

fn check_kl_vmf_quadrature(faults: Faults) -> Outcome {
    let mut worst = 0.0f64;
    for kappa in [0.3, 1.0, 4.0, 12.0] {
        let kl = faults.kl(kl_vmf(kappa, 3).map_err(|e| e.to_string())?.0);
        // 2π ∫₋₁¹ q(t) ln(4π q(t)) dt with q = κ e^{κt} / (4π sinh κ), by Simpson.
        let c = kappa / (4.0 * PI * kappa.sinh());
        let f = |t: f64| {
            let q = c * (kappa * t).exp();
            2.0 * PI * q * (4.0 * PI * q).ln()
        };
        let n = 20_000;
        let h = 2.0 / n as f64;
        let inner: f64 = (1..n).map(|i| f(-1.0 + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
        let quad = (f(-1.0) + f(1.0) + inner) * h / 3.0;
        worst = worst.max((kl - quad).abs());
    }
    within("max abs err", worst, 1e-6)
}

fn check_kl_vmf_mc(faults: Faults) -> Outcome {
    let (kappa, m) = (10.0, 8usize);
    let kl = faults.kl(kl_vmf(kappa, m).map_err(|e| e.to_string())?.0);
    let half = m as f64 / 2.0;
    let log_c = (half - 1.0) * kappa.ln() - half * (2.0 * PI).ln() - series_i(half - 1.0, kappa).ln();
    // Surface area of S⁷ is 2π⁴/3! = π⁴/3.
    let log_area = (PI.powi(4) / 3.0).ln();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let n = 400_000;
    let mut total = 0.0;
    for _ in 0..n {
        let z = sample_vmf_canonical(kappa, m, &mut rng).map_err(|e| e.to_string())?;
        total += log_c + kappa * z[0] + log_area;
    }
    within("abs err", (total / n as f64 - kl).abs(), 5e-3)
}

fn check_sampler() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut worst = 0.0f64;
    for m in [3usize, 8, 32] {
        for kappa in [0.5, 5.0, 50.0] {
            let mut mu: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = mu.iter().map(|v| v * v).sum::<f64>().sqrt();
            mu.iter_mut().for_each(|v| *v /= norm);
            let post = VmfPosterior::new(mu, kappa).map_err(|e| e.to_string())?;
            let n = 100_000;
            let mut mean = vec![0.0; m];
            for _ in 0..n {
                let x = sample_vmf(&post, &mut rng).map_err(|e| e.to_string())?;
                mean.iter_mut().zip(&x).for_each(|(a, b)| *a += b / n as f64);
            }
            let r = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
            let want = series_i(m as f64 / 2.0, kappa) / series_i(m as f64 / 2.0 - 1.0, kappa);
            worst = worst.max((r - want).abs());
        }
    }
    within("max |R - A_m(kappa)|", worst, 0.01)
}

const FD_STEP: f64 = 1e-5;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / (a.abs() + n.abs()).max(1e-7)
}

/// Worst relative error of `analytic` against central differences of `loss`.
fn fd_worst<S: Clone>(base: &S, params: impl Fn(&mut S) -> Vec<&mut [f64]>, analytic: &[&[f64]], loss: impl Fn(&S) -> f64) -> f64 {
    let mut worst = 0.0f64;
    for (t, grad) in analytic.iter().enumerate() {
        for (k, &a) in grad.iter().enumerate() {
            let mut plus = base.clone();
            params(&mut plus)[t][k] += FD_STEP;
            let mut minus = base.clone();
            params(&mut minus)[t][k] -= FD_STEP;
            worst = worst.max(rel_err(a, (loss(&plus) - loss(&minus)) / (2.0 * FD_STEP)));
        }
    }
    worst
}

fn check_gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let (n_s, n_t, dim) = (5, 4, 3);
    let mat = |r: usize, rng: &mut ChaCha8Rng| DenseMatrix::from_vec(r, dim, (0..r * dim).map(|_| rng.random_range(-1.5..1.5)).collect());
    let xs = mat(n_s, &mut rng).map_err(|e| e.to_string())?;
    let xt = mat(n_t, &mut rng).map_err(|e| e.to_string())?;
    let batch = Batch::new(&xs, (0..n_s).map(|i| (i % 2) as u8).collect(), &xt).map_err(|e| e.to_string())?;
    let cfg = DlMiaConfig { d_inv: 2, m: 3, decoder_hidden: vec![5, 4], attack_hidden: vec![6, 4], ..DlMiaConfig::default() };
    let mut state = DlMiaState::init(cfg, dim, &mut rng).map_err(|e| e.to_string())?;
    for p in state.decoder.as_mut().expect("disentangled").params_mut().into_iter().chain(state.attack.params_mut()) {
        p.iter_mut().for_each(|v| *v += rng.random_range(-0.2..0.2));
    }
    state.scores = (0..batch.len()).map(|_| rng.random_range(0.5..1.5)).collect();
    state.score_map.coef = [rng.random_range(0.7..1.3), rng.random_range(-0.2..0.2)];
    let kappa = state.encoder.as_ref().expect("disentangled").forward(&batch.x, Noise::Deterministic).map_err(|e| e.to_string())?.kappa;
    let noise = FrozenNoise::draw(&mut rng, &kappa, 2, 3).map_err(|e| e.to_string())?;
    let bce: Vec<f64> = (0..n_s).map(|_| rng.random_range(0.1..1.0)).collect();
    let elbo: Vec<f64> = (0..n_s + n_t).map(|_| rng.random_range(0.1..1.0)).collect();

    let obj = |s: &DlMiaState| objective(s, &batch, &bce, &elbo, Noise::Frozen(&noise)).expect("objective").0.total;
    let (_, g) = objective(&state, &batch, &bce, &elbo, Noise::Frozen(&noise)).map_err(|e| e.to_string())?;
    let rew = |s: &DlMiaState| reweighted_loss(s, &batch, Noise::Frozen(&noise)).expect("reweighted").0.total;
    let (_, gr) = reweighted_loss(&state, &batch, Noise::Frozen(&noise)).map_err(|e| e.to_string())?;

    fn enc(s: &mut DlMiaState) -> Vec<&mut [f64]> {
        s.encoder.as_mut().expect("encoder").params_mut()
    }
    fn dec(s: &mut DlMiaState) -> Vec<&mut [f64]> {
        s.decoder.as_mut().expect("decoder").params_mut()
    }
    let worst = [
        fd_worst(&state, |s| s.attack.params_mut(), &g.attack.params(), obj),
        fd_worst(&state, dec, &g.decoder.as_ref().expect("decoder").params(), obj),
        fd_worst(&state, enc, &g.encoder.as_ref().expect("encoder").params(), obj),
        fd_worst(&state, |s| s.score_map.params_mut(), &gr.score_map.params(), rew),
        fd_worst(&state, enc, &gr.encoder.as_ref().expect("encoder").params(), rew),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    within("max rel err (attack, decoder, encoder, score map)", worst, 1e-4)
}

fn check_score_gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let n = 12;
    let problem = EstimationProblem {
        delta_dis: (0..n).map(|_| rng.random_range(0.05..2.0)).collect(),
        delta_rew: (0..n).map(|_| rng.random_range(0.05..2.0)).collect(),
        n_shadow: 5,
    };
    let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let (_, grad) = problem.loss_and_grad(&scores).map_err(|e| e.to_string())?;
    let worst = fd_worst(&scores, |s| vec![s.as_mut_slice()], &[&grad], |s| problem.loss_and_grad(s).expect("shape").0);
    within("max rel err", worst, 1e-4)
}

fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut twice, mut pairs) = (0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li == 1 && lj == 0 {
                pairs += 1;
                twice += match scores[i].partial_cmp(&scores[j]).expect("finite") {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                };
            }
        }
    }
    twice as f64 / (2 * pairs) as f64
}

fn check_auc() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let mut done = 0;
    while done < 200 {
        let n = rng.random_range(2..100);
        let levels = rng.random_range(1..10);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 * 0.5).collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        if !labels.contains(&0) || !labels.contains(&1) {
            continue;
        }
        let got = auc_from(&scores, &labels).map_err(|e| e.to_string())?;
        let want = pairwise_auc(&scores, &labels);
        if got != want {
            return Err(format!("instance {done}: {got} vs {want}"));
        }
        done += 1;
    }
    Ok("200 instances with ties, exact".into())
}

fn check_splits() -> Outcome {
    for seed in 0..3 {
        let ds = generate_synthetic(&SyntheticSpec::new(300, 60, 4, 0.1, seed)).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bundle = make_splits(&ds, SplitFractions::default(), &mut rng).map_err(|e| e.to_string())?;
        verify_bundle(&bundle).map_err(|e| format!("seed {seed}: {e}"))?;
    }
    Ok("3 synthetic bundles".into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_matches_closed_form_half_order() {
        // I_{1/2}(x) = sqrt(2/(πx)) sinh x.
        for x in [0.1, 1.0, 7.0] {
            let want = (2.0 / (PI * x)).sqrt() * x.sinh();
            assert!((series_i(0.5, x) / want - 1.0).abs() < 1e-13);
        }
    }
}
