//! Special functions, KL terms and samplers against independent oracles:
//! a plain power series, spherical quadrature and Monte Carlo.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use recmia::numerics::*;

mod common;
use common::oracles::*;

#[test]
fn bessel_matches_power_series() {
    let orders = [0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 3.5, 4.0, 7.5, 15.0, 15.5];
    let xs = [1e-3, 0.1, 0.5, 1.0, 2.5, 5.0, 10.0, 17.3, 25.0, 33.3, 42.0, 50.0];
    for &nu in &orders {
        for &x in &xs {
            let want = series_i(nu, x);
            let got = bessel_i(nu, x).unwrap();
            assert!(((got - want) / want).abs() < 1e-10, "I_{nu}({x}): {got} vs {want}");
            let lg = log_bessel_i(nu, x).unwrap();
            assert!((lg - want.ln()).abs() < 1e-10 * want.ln().abs().max(1.0), "log I_{nu}({x})");
        }
    }
}

#[test]
fn bessel_large_argument_branch_stays_accurate() {
    for &nu in &[0.5, 1.0, 3.0, 15.0] {
        for &x in &[60.0, 120.0, 300.0] {
            let want = series_i(nu, x);
            let got = bessel_i(nu, x).unwrap();
            assert!(((got - want) / want).abs() < 1e-8, "I_{nu}({x}): {got} vs {want}");
        }
    }
}

#[test]
fn gaussian_kl_matches_monte_carlo() {
    let mu = [0.3, -0.7];
    let log_var = [2f64.ln(), 0.5f64.ln()];
    let exact = kl_gaussian(&GaussianPosterior::new(mu.to_vec(), log_var.to_vec()).unwrap()).value;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 1_000_000;
    let mut total = 0.0;
    for _ in 0..n {
        let mut lq = 0.0;
        let mut lp = 0.0;
        for k in 0..2 {
            let sd = (0.5 * log_var[k]).exp();
            let e: f64 = StandardNormal.sample(&mut rng);
            let z = mu[k] + sd * e;
            lq += -0.5 * e * e - sd.ln();
            lp += -0.5 * z * z;
        }
        total += lq - lp;
    }
    let mc = total / n as f64;
    assert!((mc - exact).abs() < 5e-3, "mc {mc} exact {exact}");
}

#[test]
fn vmf_kl_matches_quadrature_on_the_two_sphere() {
    for &kappa in &[1.0, 0.3, 4.0] {
        let (kl, _) = kl_vmf(kappa, 3).unwrap();
        let q = vmf_kl_quadrature_s2(kappa);
        assert!((kl - q).abs() < 1e-6, "kappa {kappa}: {kl} vs {q}");
    }
}

#[test]
fn vmf_kl_matches_monte_carlo_in_eight_dimensions() {
    let (kappa, m) = (10.0, 8);
    let (kl, _) = kl_vmf(kappa, m).unwrap();
    let half = m as f64 / 2.0;
    let log_c = (half - 1.0) * kappa.ln() - half * (2.0 * std::f64::consts::PI).ln() - series_i(half - 1.0, kappa).ln();
    // |S⁷| = 2π⁴ / Γ(4).
    let log_area = (2.0 * std::f64::consts::PI.powi(4) / 6.0).ln();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 1_000_000;
    let mut total = 0.0;
    for _ in 0..n {
        let z = sample_vmf_canonical(kappa, m, &mut rng).unwrap();
        total += log_c + kappa * z[0] + log_area;
    }
    let mc = total / n as f64;
    assert!((mc - kl).abs() < 5e-3, "mc {mc} closed form {kl}");
}

#[test]
fn vmf_kl_vanishes_at_zero_concentration_and_grows() {
    assert_eq!(kl_vmf(0.0, 5).unwrap().0, 0.0);
    assert_eq!(kl_vmf(KAPPA_ZERO / 2.0, 5).unwrap().0, 0.0);
    let mut last = 0.0;
    for k in 1..40 {
        let (v, g) = kl_vmf(k as f64 * 0.7, 16).unwrap();
        assert!(v > last && g > 0.0);
        last = v;
    }
}

#[test]
fn vmf_kl_gradient_matches_finite_differences() {
    for &m in &[3usize, 8, 32] {
        for &kappa in &[0.05, 0.7, 3.0, 20.0, 80.0] {
            let (_, g) = kl_vmf(kappa, m).unwrap();
            let h = 1e-5 * kappa.max(1.0);
            let fd = (kl_vmf(kappa + h, m).unwrap().0 - kl_vmf(kappa - h, m).unwrap().0) / (2.0 * h);
            assert!((g - fd).abs() / (g.abs() + fd.abs()).max(1e-9) < 1e-6, "m {m} kappa {kappa}: {g} vs {fd}");
        }
    }
}

#[test]
fn sampler_mean_resultant_length_matches_bessel_ratio() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for &m in &[3usize, 5, 8, 32] {
        for &kappa in &[0.5, 2.0, 10.0, 50.0, 200.0] {
            let mut mu: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = mu.iter().map(|v| v * v).sum::<f64>().sqrt();
            mu.iter_mut().for_each(|v| *v /= norm);
            let post = VmfPosterior::new(mu, kappa).unwrap();
            let n = 100_000;
            let mut mean = vec![0.0; m];
            for _ in 0..n {
                let x = sample_vmf(&post, &mut rng).unwrap();
                assert!((x.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-9);
                mean.iter_mut().zip(&x).for_each(|(a, b)| *a += b / n as f64);
            }
            let r = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
            let half = m as f64 / 2.0;
            let want = series_i(half, kappa) / series_i(half - 1.0, kappa);
            assert!((r - want).abs() < 0.01, "m {m} kappa {kappa}: {r} vs {want}");
            let along: f64 = mean.iter().zip(&post.mu).map(|(a, b)| a * b).sum();
            assert!((along - r).abs() < 0.01);
        }
    }
}

#[test]
fn log_gamma_matches_factorials() {
    let mut f = 1.0f64;
    for n in 1..60u32 {
        f *= n as f64;
        let lg = log_gamma(n as f64 + 1.0).unwrap();
        assert!((lg - f.ln()).abs() < 1e-12 * f.ln().max(1.0), "n {n}");
    }
    assert!((log_gamma(0.5).unwrap() - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
}

#[test]
fn auc_equals_pairwise_oracle_with_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut done = 0;
    while done < 200 {
        let n = rng.random_range(2..120);
        let levels = rng.random_range(1..12);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 * 0.25).collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        if !labels.contains(&0) || !labels.contains(&1) {
            assert!(auc_from(&scores, &labels).is_err());
            continue;
        }
        assert_eq!(auc_from(&scores, &labels).unwrap(), pairwise_auc(&scores, &labels));
        done += 1;
    }
}
