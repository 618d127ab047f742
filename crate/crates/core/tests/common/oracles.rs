//! Independent oracles shared by the numerics and acceptance tests.

/// `Γ(ν + 1)` for integer and half-integer `ν ≥ −½` by exact recurrence.
pub fn gamma_plus_one(nu: f64) -> f64 {
    let mut g = if nu.fract() == 0.0 { 1.0 } else { std::f64::consts::PI.sqrt() };
    let mut a = if nu.fract() == 0.0 { 1.0 } else { 0.5 };
    while a <= nu + 1e-9 {
        g *= a;
        a += 1.0;
    }
    g
}

/// `Σₖ (x/2)^{2k+ν} / (k! Γ(k+ν+1))`, all terms positive.
pub fn series_i(nu: f64, x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = (0.5 * x).powf(nu) / gamma_plus_one(nu);
    let mut sum = term;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= q / (k * (k + nu));
        sum += term;
        if term < 1e-18 * sum {
            return sum;
        }
    }
}

/// `∫_{S²} q ln(q/p)` for `q = vMF(e₃, κ)` reduced to `2π ∫₋₁¹ q(t) ln(4π q(t)) dt`.
pub fn vmf_kl_quadrature_s2(kappa: f64) -> f64 {
    let c = kappa / (4.0 * std::f64::consts::PI * kappa.sinh());
    let f = |t: f64| {
        let q = c * (kappa * t).exp();
        2.0 * std::f64::consts::PI * q * (4.0 * std::f64::consts::PI * q).ln()
    };
    let n = 20_000;
    let h = 2.0 / n as f64;
    let mut s = f(-1.0) + f(1.0);
    for i in 1..n {
        s += f(-1.0 + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

pub fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut twice, mut p, mut n) = (0u64, 0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        if li == 1 {
            p += 1;
        } else {
            n += 1;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if li == 1 && lj == 0 {
                twice += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                };
            }
        }
    }
    twice as f64 / (2 * p * n) as f64
}
