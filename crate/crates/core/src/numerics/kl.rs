//! Closed-form KL divergences of the two posterior families against their
//! priors, with analytic gradients.

use super::special::{log_bessel_i, log_gamma};
use super::{GaussianPosterior, NumericsError};

/// Below this concentration the vMF KL is reported as its analytic limit, 0.
pub const KAPPA_ZERO: f64 = 1e-8;

/// KL value with gradients with respect to the posterior parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKl {
    pub value: f64,
    pub grad_mu: Vec<f64>,
    pub grad_log_var: Vec<f64>,
}

/// `KL(N(mu, diag(exp(log_var))) || N(0, I))`.
///
/// `log_var` is the log of the per-dimension *variance*.
pub fn kl_gaussian(post: &GaussianPosterior) -> GaussianKl {
    let d = post.mu.len();
    let mut value = 0.0;
    let mut grad_mu = Vec::with_capacity(d);
    let mut grad_log_var = Vec::with_capacity(d);
    for (&mu, &lv) in post.mu.iter().zip(&post.log_var) {
        let var = lv.exp();
        value += -lv + var + mu * mu - 1.0;
        grad_mu.push(mu);
        grad_log_var.push(0.5 * (var - 1.0));
    }
    GaussianKl { value: 0.5 * value, grad_mu, grad_log_var }
}

/// `KL(vMF(mu, kappa) || Uniform(S^{m-1}))` and its derivative in `kappa`.
///
/// Independent of the mean direction. The derivative uses
/// `d/dκ ln I_v(κ) = A_m(κ) + v/κ` and `A_m' = 1 − A_m² − (m−1)/κ·A_m`,
/// which collapse to `dKL/dκ = κ − κ·A_m² − (m−1)·A_m`.
pub fn kl_vmf(kappa: f64, m: usize) -> Result<(f64, f64), NumericsError> {
    if m < 3 {
        return Err(NumericsError::Domain(format!("vMF dimension must be >= 3, got {m}")));
    }
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(NumericsError::Domain(format!("kappa must be finite and >= 0, got {kappa}")));
    }
    if kappa < KAPPA_ZERO {
        return Ok((0.0, 0.0));
    }
    let half_m = m as f64 / 2.0;
    let order = half_m - 1.0;
    let log_i_order = log_bessel_i(order, kappa)?;
    let log_i_next = log_bessel_i(half_m, kappa)?;
    let ratio = (log_i_next - log_i_order).exp();
    let pi = std::f64::consts::PI;
    let value = kappa * ratio + order * kappa.ln()
        - half_m * (2.0 * pi).ln()
        - log_i_order
        + half_m * pi.ln()
        + std::f64::consts::LN_2
        - log_gamma(half_m)?;
    let grad = kappa - kappa * ratio * ratio - (m as f64 - 1.0) * ratio;
    Ok((value.max(0.0), grad))
}

/// Mean resultant length `A_m(κ) = I_{m/2}(κ) / I_{m/2−1}(κ)` of vMF on `S^{m-1}`.
pub fn mean_resultant_length(kappa: f64, m: usize) -> Result<f64, NumericsError> {
    if kappa == 0.0 {
        return Ok(0.0);
    }
    let half_m = m as f64 / 2.0;
    Ok((log_bessel_i(half_m, kappa)? - log_bessel_i(half_m - 1.0, kappa)?).exp())
}

/// Log of the vMF normalizer `C_m(κ) = κ^{m/2−1} / ((2π)^{m/2} I_{m/2−1}(κ))`
/// with respect to the surface measure on `S^{m-1}`.
pub fn log_vmf_normalizer(kappa: f64, m: usize) -> Result<f64, NumericsError> {
    let half_m = m as f64 / 2.0;
    if kappa < KAPPA_ZERO {
        // uniform density: 1 / surface area
        return Ok(log_gamma(half_m)? - std::f64::consts::LN_2 - half_m * std::f64::consts::PI.ln());
    }
    Ok((half_m - 1.0) * kappa.ln()
        - half_m * (2.0 * std::f64::consts::PI).ln()
        - log_bessel_i(half_m - 1.0, kappa)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn post(mu: &[f64], lv: &[f64]) -> GaussianPosterior {
        GaussianPosterior::new(mu.to_vec(), lv.to_vec()).unwrap()
    }

    #[test]
    fn gaussian_prior_has_zero_kl() {
        for d in 1..5 {
            let kl = kl_gaussian(&post(&vec![0.0; d], &vec![0.0; d]));
            assert_eq!(kl.value, 0.0);
        }
        assert!((kl_gaussian(&post(&[1.0], &[0.0])).value - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gaussian_gradient_matches_central_differences() {
        let mu = [0.3, -0.7, 1.2];
        let lv = [2f64.ln(), 0.5f64.ln(), -0.4];
        let kl = kl_gaussian(&post(&mu, &lv));
        let h = 1e-5;
        for i in 0..3 {
            let (mut up, mut dn) = (mu, mu);
            up[i] += h;
            dn[i] -= h;
            let fd = (kl_gaussian(&post(&up, &lv)).value - kl_gaussian(&post(&dn, &lv)).value) / (2.0 * h);
            assert!((fd - kl.grad_mu[i]).abs() / fd.abs().max(1e-12) < 1e-5);
            let (mut up, mut dn) = (lv, lv);
            up[i] += h;
            dn[i] -= h;
            let fd = (kl_gaussian(&post(&mu, &up)).value - kl_gaussian(&post(&mu, &dn)).value) / (2.0 * h);
            assert!((fd - kl.grad_log_var[i]).abs() / fd.abs().max(1e-12) < 1e-5);
        }
    }

    #[test]
    fn vmf_kl_zero_concentration() {
        for m in [3, 8, 32] {
            assert_eq!(kl_vmf(0.0, m).unwrap().0, 0.0);
            assert!(kl_vmf(1e-8, m).unwrap().0 < 1e-6);
        }
        assert!(kl_vmf(1.0, 2).is_err());
    }

    #[test]
    fn vmf_kl_monotone_grid() {
        for m in [3, 8, 16, 64] {
            let mut prev = -1.0;
            for kappa in [0.0, 0.1, 1.0, 10.0, 100.0] {
                let (v, _) = kl_vmf(kappa, m).unwrap();
                assert!(v >= 0.0 && v >= prev, "m={m} κ={kappa}: {v} < {prev}");
                prev = v;
            }
        }
    }

    #[test]
    fn vmf_kl_derivative_matches_finite_difference() {
        for m in [3, 8, 32, 64] {
            for kappa in [0.05f64, 0.7, 5.0, 40.0, 120.0] {
                let h = 1e-5 * kappa.max(1.0);
                let (_, g) = kl_vmf(kappa, m).unwrap();
                let fd = (kl_vmf(kappa + h, m).unwrap().0 - kl_vmf(kappa - h, m).unwrap().0) / (2.0 * h);
                assert!((g - fd).abs() <= 1e-5 * fd.abs().max(1e-3), "m={m} κ={kappa}: {g} vs {fd}");
            }
        }
    }

    #[test]
    fn vmf_kl_m3_closed_form() {
        // For m = 3: C_3 = κ / (4π sinh κ), A_3 = coth κ − 1/κ.
        for kappa in [0.5f64, 1.0, 3.0, 20.0] {
            let coth: f64 = 1.0 / kappa.tanh();
            let a3 = coth - 1.0 / kappa;
            let want = kappa * a3 + (kappa / (4.0 * std::f64::consts::PI * kappa.sinh())).ln()
                + (4.0 * std::f64::consts::PI).ln();
            let (got, _) = kl_vmf(kappa, 3).unwrap();
            assert!((got - want).abs() < 1e-10, "κ={kappa}: {got} vs {want}");
        }
    }
}
