use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use recmia::dlmia::*;
use recmia::nn::{DenseMatrix, Parameterized};
use recmia::numerics::auc_from;

fn small_config() -> DlMiaConfig {
    DlMiaConfig { d_inv: 4, m: 4, decoder_hidden: vec![16, 16, 16], ..DlMiaConfig::default() }
}

/// Members centred at `+shift·1`, non-members at `−shift·1`, members first.
fn blobs(rng: &mut ChaCha8Rng, n: usize, dim: usize, shift: f64) -> (DenseMatrix, Vec<u8>) {
    let labels: Vec<u8> = (0..n).map(|i| u8::from(i < n / 2)).collect();
    let mut data = Vec::with_capacity(n * dim);
    for &y in &labels {
        let c = if y == 1 { shift } else { -shift };
        data.extend((0..dim).map(|_| c + 0.3 * Distribution::<f64>::sample(&StandardNormal, rng)));
    }
    (DenseMatrix::from_vec(n, dim, data).unwrap(), labels)
}

fn separable(seed: u64) -> (Batch, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (xs, ys) = blobs(&mut rng, 60, 6, 1.0);
    let (xt, yt) = blobs(&mut rng, 40, 6, 0.8);
    (Batch::new(&xs, ys, &xt).unwrap(), yt)
}

fn shadow_auc(state: &DlMiaState, batch: &Batch) -> f64 {
    auc_from(&state.predict(&batch.shadow_rows()).unwrap(), &batch.labels).unwrap()
}

#[test]
fn deterministic_encoding_is_a_pure_function() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let state = DlMiaState::init(small_config(), 5, &mut rng).unwrap();
    let diff = [0.3, -0.2, 1.1, 0.0, -0.7];
    let a = encode(&state, &diff, Noise::Deterministic).unwrap();
    let b = encode(&state, &diff, Noise::Deterministic).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.f_inv.len(), 4);
    assert_eq!(a.f_spe.len(), 4);
}

#[test]
fn sampled_specific_feature_is_unit_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let state = DlMiaState::init(small_config(), 5, &mut rng).unwrap();
    for _ in 0..200 {
        let diff: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut noise_rng = ChaCha8Rng::seed_from_u64(rng.random());
        let e = encode(&state, &diff, Noise::Sampled(&mut noise_rng)).unwrap();
        let norm = e.f_spe.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9, "norm {norm}");
        assert!(e.kl_inv >= 0.0 && e.kl_spe >= 0.0);
    }
}

#[test]
fn zero_concentration_has_zero_specific_kl() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut state = DlMiaState::init(small_config(), 5, &mut rng).unwrap();
    let enc = state.encoder.as_mut().unwrap();
    let m = enc.m();
    // κ = softplus(−1000) underflows to zero.
    (0..5).for_each(|r| enc.vmf.weight.set(r, m, 0.0));
    enc.vmf.bias[m] = -1000.0;
    let e = encode(&state, &[1.0, 2.0, 3.0, 4.0, 5.0], Noise::Deterministic).unwrap();
    assert_eq!(e.kl_spe, 0.0);
}

#[test]
fn encode_rejects_non_finite_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let state = DlMiaState::init(small_config(), 3, &mut rng).unwrap();
    assert!(encode(&state, &[1.0, f64::NAN, 0.0], Noise::Deterministic).is_err());
    let biased = DlMiaState::init(DlMiaConfig::biased(), 3, &mut rng).unwrap();
    assert!(encode(&biased, &[1.0, 0.0, 0.0], Noise::Deterministic).is_err());
}

/// Encoder with zero weights, zero mean, unit variance and vanishing κ;
/// decoder with zero weights whose output is its last bias.
fn flat_state(dim: usize, out_bias: &[f64]) -> DlMiaState {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut state = DlMiaState::init(small_config(), dim, &mut rng).unwrap();
    let enc = state.encoder.as_mut().unwrap();
    enc.gaussian.params_mut().into_iter().for_each(|p| p.fill(0.0));
    enc.vmf.weight.as_mut_slice().fill(0.0);
    let m = enc.m();
    enc.vmf.bias.fill(0.0);
    enc.vmf.bias[0] = 1.0;
    enc.vmf.bias[m] = -1000.0;
    let dec = state.decoder.as_mut().unwrap();
    dec.params_mut().into_iter().for_each(|p| p.fill(0.0));
    dec.layers.last_mut().unwrap().bias.copy_from_slice(out_bias);
    state
}

#[test]
fn perfect_reconstruction_with_zero_kl_has_zero_elbo_loss() {
    let diff = [0.4, -1.2, 2.5];
    let state = flat_state(3, &diff);
    let x = DenseMatrix::from_vec(1, 3, diff.to_vec()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (terms, _) = elbo_loss(&state, &x, Noise::Sampled(&mut rng)).unwrap();
    assert!(terms.total.abs() < 1e-12, "{}", terms.total);
}

#[test]
fn doubling_the_input_quadruples_reconstruction() {
    let state = flat_state(3, &[0.0; 3]);
    let x = DenseMatrix::from_vec(1, 3, vec![0.4, -1.2, 2.5]).unwrap();
    let (one, _) = elbo_loss(&state, &x, Noise::Deterministic).unwrap();
    let mut x2 = x.clone();
    x2.scale(2.0);
    let (two, _) = elbo_loss(&state, &x2, Noise::Deterministic).unwrap();
    let recon = 0.5 * (0.16 + 1.44 + 6.25);
    assert!((one.total - recon).abs() < 1e-12);
    assert!((two.total - 4.0 * recon).abs() < 1e-12);
}

#[test]
fn elbo_estimator_standard_error_is_small() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = DlMiaConfig { d_inv: 2, m: 3, decoder_hidden: vec![8, 8, 8], ..DlMiaConfig::default() };
    let state = DlMiaState::init(cfg, 3, &mut rng).unwrap();
    let x = DenseMatrix::from_vec(1, 3, vec![0.5, -0.3, 0.8]).unwrap();
    let n = 10_000;
    let draws: Vec<f64> = (0..n).map(|_| elbo_loss(&state, &x, Noise::Sampled(&mut rng)).unwrap().0.total).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    assert!(se < 0.01 * mean.abs(), "se {se} mean {mean}");
}

#[test]
fn truth_score_examples() {
    assert_eq!(truth_score([0.7, 0.3], [0.7, 0.3], 1), 1.0);
    // δ(0.25) = 2·δ(0.5) for label 1.
    let p = truth_score([0.5, 0.5], [0.25, 0.75], 1);
    assert!((p - 2.0).abs() < 1e-12, "{p}");
    let capped = truth_score([1.0, 0.0], [0.5, 0.5], 1);
    assert!(capped.is_finite() && capped > 1.0);
    assert_eq!(capped, std::f64::consts::LN_2 / TRUTH_DENOMINATOR_FLOOR);
}

#[test]
fn estimation_loss_examples() {
    let single = EstimationProblem { delta_dis: vec![0.5], delta_rew: vec![0.25], n_shadow: 1 };
    let (loss, _) = single.loss_and_grad(&[1.0]).unwrap();
    assert!((loss - 0.0625).abs() < 1e-15);

    let problem = EstimationProblem { delta_dis: vec![0.5, 2.0, 0.1, 0.4], delta_rew: vec![0.3, 0.7, 0.9, 0.2], n_shadow: 2 };
    let exact: Vec<f64> = problem.delta_rew.iter().zip(&problem.delta_dis).map(|(r, d)| r / d).collect();
    let (loss, grad) = problem.loss_and_grad(&exact).unwrap();
    assert!(loss.abs() < 1e-24);
    assert!(grad.iter().all(|g| g.abs() < 1e-12));
    assert!(problem.loss_and_grad(&[1.0]).is_err());
}

#[test]
fn newton_steps_shrink_the_residual_and_respect_the_clamp() {
    let problem = EstimationProblem { delta_dis: vec![0.5, 2.0, 0.1, 1e-9], delta_rew: vec![0.3, 0.7, 5000.0, 0.2], n_shadow: 2 };
    let mut scores = vec![1.0; 4];
    let mut last = problem.mean_residual(&scores);
    for _ in 0..10 {
        problem.newton_step(&mut scores, 0.3, (1e-3, 1e3)).unwrap();
        let r = problem.mean_residual(&scores);
        assert!(r <= last);
        last = r;
        assert!(scores.iter().all(|p| (1e-3..=1e3).contains(p)));
    }
}

#[test]
fn unit_weights_reduce_to_the_pretraining_objective() {
    let (batch, _) = separable(8);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut state = DlMiaState::init(small_config(), 6, &mut rng).unwrap();
    let kappa = state.encoder.as_ref().unwrap().forward(&batch.x, Noise::Deterministic).unwrap().kappa;
    let noise = FrozenNoise::draw(&mut rng, &kappa, 4, 4).unwrap();
    state.scores = vec![1.0; batch.len()];
    let (pre, g_pre) = pretrain_loss(&state, &batch, Noise::Frozen(&noise)).unwrap();
    let (rew, g_rew) = reweighted_loss(&state, &batch, Noise::Frozen(&noise)).unwrap();
    assert_eq!(pre.total, rew.total);
    assert_eq!(g_pre.attack, g_rew.attack);
    assert_eq!(g_pre.encoder, g_rew.encoder);
    assert_eq!(g_pre.decoder, g_rew.decoder);
}

#[test]
fn zero_weight_sample_contributes_nothing() {
    let (batch, _) = separable(9);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut state = DlMiaState::init(small_config(), 6, &mut rng).unwrap();
    state.scores = (0..batch.len()).map(|_| rng.random_range(0.9..1.1)).collect();
    state.score_map.coef = [1.0, -0.5];
    // Rows 3 (shadow) and 70 (target) get weight max(0, 1e-3 − 0.5) = 0.
    for &j in &[3usize, 70] {
        state.scores[j] = 1e-3;
    }
    let kappa = state.encoder.as_ref().unwrap().forward(&batch.x, Noise::Deterministic).unwrap().kappa;
    let noise = FrozenNoise::draw(&mut rng, &kappa, 4, 4).unwrap();
    let (a, ga) = reweighted_loss(&state, &batch, Noise::Frozen(&noise)).unwrap();
    let mut moved = batch.clone();
    for &j in &[3usize, 70] {
        moved.x.row_mut(j).iter_mut().for_each(|v| *v = 50.0 - *v);
    }
    moved.labels[3] ^= 1;
    let (b, gb) = reweighted_loss(&state, &moved, Noise::Frozen(&noise)).unwrap();
    assert!((a.total - b.total).abs() < 1e-12 * a.total.abs().max(1.0));
    for (x, y) in ga.attack.params().iter().zip(gb.attack.params()) {
        x.iter().zip(y).for_each(|(p, q)| assert!((p - q).abs() < 1e-12));
    }
    for (x, y) in ga.encoder.unwrap().params().iter().zip(gb.encoder.unwrap().params()) {
        x.iter().zip(y).for_each(|(p, q)| assert!((p - q).abs() < 1e-12));
    }
}

#[test]
fn untrained_zero_attack_is_uninformative() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut state = DlMiaState::init(small_config(), 6, &mut rng).unwrap();
    state.attack.params_mut().into_iter().for_each(|p| p.fill(0.0));
    let (batch, _) = separable(10);
    assert!(state.predict(&batch.x).unwrap().iter().all(|&p| p == 0.5));
    let probs = state.attack.predict(&state.features(&batch.x, Noise::Deterministic).unwrap()).unwrap();
    for i in 0..probs.rows() {
        assert!((probs.get(i, 0) + probs.get(i, 1) - 1.0).abs() < 1e-9);
    }
}

#[test]
fn pretraining_separates_the_planted_fixture() {
    let (batch, _) = separable(11);
    let mut init = ChaCha8Rng::seed_from_u64(11);
    let mut noise = ChaCha8Rng::seed_from_u64(12);
    let state = DlMiaState::init(small_config(), 6, &mut init).unwrap();
    let mut trainer = Trainer::new(state, &mut noise, None).unwrap();
    trainer.pretrain(&batch, 200).unwrap();
    let auc = shadow_auc(&trainer.state, &batch);
    assert!(auc > 0.95, "{auc}");
    // Every 20-epoch window reaches a loss at least as low as the previous one.
    let total: Vec<f64> = trainer.metrics.iter().map(|m| m.loss_bce + m.loss_elbo).collect();
    let windows: Vec<f64> = total.chunks(20).map(|w| w.iter().copied().fold(f64::INFINITY, f64::min)).collect();
    for pair in windows.windows(2) {
        assert!(pair[1] <= pair[0] + 1e-6, "{windows:?}");
    }
}

#[test]
fn zero_epochs_leave_the_state_unchanged() {
    let (batch, _) = separable(13);
    let mut init = ChaCha8Rng::seed_from_u64(13);
    let mut noise = ChaCha8Rng::seed_from_u64(14);
    let state = DlMiaState::init(small_config(), 6, &mut init).unwrap();
    let before = state.clone();
    let mut trainer = Trainer::new(state, &mut noise, None).unwrap();
    trainer.pretrain(&batch, 0).unwrap();
    let out = trainer.alternate(&batch, 0, 10).unwrap();
    assert!(out.estimation.is_empty());
    assert_eq!(trainer.into_state(), before);
}

fn full_run(seed: u64, cfg: DlMiaConfig) -> (AttackRun, Vec<u8>) {
    let (batch, yt) = separable(seed);
    let run = train_attack(
        cfg,
        &batch,
        Some(yt.clone()),
        &mut ChaCha8Rng::seed_from_u64(seed + 100),
        &mut ChaCha8Rng::seed_from_u64(seed + 200),
    )
    .unwrap();
    (run, yt)
}

#[test]
fn runs_are_deterministic() {
    let (a, _) = full_run(15, small_config());
    let (b, _) = full_run(15, small_config());
    assert_eq!(a.state, b.state);
    assert_eq!(a.final_probs, b.final_probs);
    assert_eq!(a.state.scores, b.state.scores);
}

#[test]
fn alternating_training_keeps_invariants_on_the_fixture() {
    let mut pre = 0.0;
    let mut full = 0.0;
    for seed in 0..5 {
        let (run, yt) = full_run(20 + seed, small_config());
        pre += auc_from(&run.pretrain_probs, &yt).unwrap();
        full += auc_from(&run.final_probs, &yt).unwrap();
        assert!(run.metrics.iter().all(|m| m.loss_bce.is_finite() && m.loss_elbo.is_finite() && m.loss_est.is_finite()));
        assert!(run.state.scores.iter().all(|p| (1e-3..=1e3).contains(p)));
        assert!(run.state.weights().iter().all(|&w| w >= 0.0));
        assert_eq!(run.estimation.len(), 10);
        for e in &run.estimation {
            assert!(e.residual_end < e.residual_start, "{e:?}");
        }
        assert!(shadow_auc(&run.state, &separable(20 + seed).0) > 0.95);
    }
    assert!(full >= pre, "full {full} pretrain {pre}");
}

#[test]
fn checkpoints_round_trip() {
    let (run, _) = full_run(30, small_config());
    let bytes = run.state.to_checkpoint().to_bytes().unwrap();
    let ckpt = recmia::nn::Checkpoint::from_bytes(&bytes).unwrap();
    let mut fresh = DlMiaState::init(small_config(), 6, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    fresh.load_checkpoint(&ckpt).unwrap();
    assert_eq!(fresh, run.state);
}
