use rand_distr::{Distribution, StandardNormal};
use spreadcast_core::deepar::*;
use spreadcast_core::rng::rng_from_seed;

fn ar1(seed: u64, n: usize, phi: f64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    let mut y = vec![0.0f64; n];
    for t in 1..n {
        let e: f64 = StandardNormal.sample(&mut rng);
        y[t] = phi * y[t - 1] + e;
    }
    y
}

fn worst_relative_error(net: &DeepArNetwork, w: &[Window]) -> f64 {
    let (_, g) = net.loss_and_gradient(w);
    let p = net.flatten();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for k in 0..p.len() {
        let mut plus = net.clone();
        let mut pp = p.clone();
        pp[k] += h;
        plus.assign_flat(&pp).unwrap();
        let mut minus = net.clone();
        pp[k] -= 2.0 * h;
        minus.assign_flat(&pp).unwrap();
        let fd = (plus.loss(w).unwrap() - minus.loss(w).unwrap()) / (2.0 * h);
        worst = worst.max((g[k] - fd).abs() / g[k].abs().max(fd.abs()).max(1e-6));
    }
    worst
}

#[test]
fn bptt_gradient_matches_finite_differences() {
    let mut rng = rng_from_seed(1);
    for lik in [Likelihood::Gaussian, Likelihood::StudentT] {
        for steps in [3usize, 5] {
            let net = DeepArNetwork::init(lik, 3, 2, 4, &mut rng);
            let inputs: Vec<f64> = (0..3 * steps).map(|i| ((i * 7 % 11) as f64 - 5.0) / 4.0).collect();
            let targets: Vec<f64> = [0.3, -0.2, 1.1, 0.5, -0.7][..steps].to_vec();
            let w = [Window { inputs, targets }];
            let err = worst_relative_error(&net, &w);
            assert!(err < 1e-4, "{lik:?} T={steps}: {err:e}");
        }
    }
}

#[test]
fn two_layers_equal_chained_cells() {
    let mut rng = rng_from_seed(9);
    let net = DeepArNetwork::init(Likelihood::Gaussian, 2, 2, 5, &mut rng);
    let inputs: Vec<Vec<f64>> = (0..6).map(|t| vec![(t as f64).sin(), 0.1 * t as f64]).collect();
    let got = net.forward_sequence(&inputs).unwrap();
    let mut s0 = LstmState::zeros(5);
    let mut s1 = LstmState::zeros(5);
    for (t, x) in inputs.iter().enumerate() {
        s0 = lstm_cell_step(x, &s0, &net.layers[0]).unwrap();
        s1 = lstm_cell_step(&s0.output, &s1, &net.layers[1]).unwrap();
        let raw: Vec<f64> = (0..2)
            .map(|k| net.head.bias[k] + (0..5).map(|j| net.head.weight[k * 5 + j] * s1.output[j]).sum::<f64>())
            .collect();
        let want = DistParams::from_raw(Likelihood::Gaussian, &raw);
        assert!((got[t].mu - want.mu).abs() < 1e-12);
        assert!((got[t].sigma - want.sigma).abs() < 1e-12);
    }
}

#[test]
fn zero_network_is_constant_in_time() {
    let net = DeepArNetwork::zeros(Likelihood::Gaussian, 1, 2, 3);
    let inputs: Vec<Vec<f64>> = (0..8).map(|t| vec![t as f64 * 3.0 - 7.0]).collect();
    let out = net.forward_sequence(&inputs).unwrap();
    assert!(out.iter().all(|d| *d == out[0]));
}

fn small_config() -> NetworkConfig {
    NetworkConfig {
        hidden_size: 8,
        context_length: 10,
        epochs: 200,
        dropout: 0.0,
        ..Default::default()
    }
}

#[test]
fn constant_series_collapses_scale() {
    let y = vec![2.5; 120];
    let m = train(&y, &[], &small_config()).unwrap();
    let tail = &m.loss_trace[10..];
    assert!(tail.windows(2).all(|w| w[1] <= w[0]), "training loss rose after epoch 10");
    let d = m.predict_next(&y, &[], &[]).unwrap();
    assert!((d.mu - 2.5).abs() < 0.05, "mu {}", d.mu);
    assert!(d.sigma < 0.1, "sigma {}", d.sigma);
}

#[test]
fn training_is_deterministic() {
    let y = ar1(3, 150, 0.5);
    let cfg = NetworkConfig {
        epochs: 30,
        ..small_config()
    };
    let a = train(&y, &[], &cfg).unwrap();
    let b = train(&y, &[], &cfg).unwrap();
    assert_eq!(a.network.flatten(), b.network.flatten());
    assert_eq!(a.loss_trace, b.loss_trace);
}

#[test]
fn ar1_held_out_nll_near_truth() {
    let y = ar1(2, 1300, 0.8);
    let cfg = NetworkConfig {
        hidden_size: 16,
        ..Default::default()
    };
    let m = train(&y[..800], &[], &cfg).unwrap();
    let nll = m.evaluate_nll(&y, &[], 800).unwrap();
    let truth = 0.5 * (2.0 * std::f64::consts::PI).ln() + 0.5;
    assert!((nll - truth).abs() < 0.1 * truth, "held-out NLL {nll} vs {truth}");
}

#[test]
fn informative_covariate_lowers_nll() {
    let mut rng = rng_from_seed(5);
    let n = 500;
    let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let y: Vec<f64> = z
        .iter()
        .map(|v| {
            let e: f64 = StandardNormal.sample(&mut rng);
            v + 0.3 * e
        })
        .collect();
    let cov: Vec<Vec<f64>> = z.iter().map(|v| vec![*v]).collect();
    let cfg = NetworkConfig {
        epochs: 300,
        ..small_config()
    };
    let with = train(&y[..400], &cov[..400], &cfg).unwrap();
    let without = train(&y[..400], &[], &cfg).unwrap();
    let a = with.evaluate_nll(&y, &cov, 400).unwrap();
    let b = without.evaluate_nll(&y, &[], 400).unwrap();
    assert!(a < b, "covariate model {a} vs {b}");
}

#[test]
fn standard_normal_sample_quantiles() {
    let d = ForecastDistribution::sample(DistParams::gaussian(0.0, 1.0), 100_000, 11);
    let q = d.quantiles(&[0.5, 0.9]);
    assert!(q[0].abs() < 0.02);
    assert!((q[1] - 1.2816).abs() < 0.03);
}

#[test]
fn forecast_quantiles_are_monotone() {
    let y = ar1(4, 80, 0.5);
    let cfg = NetworkConfig {
        epochs: 20,
        ..small_config()
    };
    let m = train(&y, &[], &cfg).unwrap();
    let f = forecast_one_step(&m, &y, &[], &[], 200, 1).unwrap();
    let q = f.quantiles(&[0.1, 0.3, 0.5, 0.7, 0.9]);
    assert!(q.windows(2).all(|w| w[0] <= w[1]));
}
