use hbdl::conjugate::ConjugateToy;
use hbdl::data::gen_xsinx;
use hbdl::metrics::r2;
use hbdl::optimizer::train_variational;
use hbdl::predictive::predict;
use hbdl::random::seeded;
use hbdl::{Activation, LrSchedule, NetworkSpec, PriorSpec, Tensor, TrainConfig};

#[test]
fn mean_field_training_recovers_the_exact_posterior() {
    let toy = ConjugateToy::generate(20, 0.5, -1.0, 1.0, 4.0, 11).unwrap();
    let config = TrainConfig {
        epochs: 4000,
        batch_size: toy.len(),
        samples: 1,
        schedule: LrSchedule {
            base: 0.02,
            factor: 0.5,
            interval: 800,
        },
        tau_eps: toy.tau,
        ..TrainConfig::default()
    };
    let (vs, trace) = train_variational(&toy.spec(), &toy.dataset(), &config, &toy.prior(), &mut seeded(5)).unwrap();
    assert_eq!(trace.len(), 4000);
    let sigma = vs.sigma();
    for (i, m) in toy.posterior().iter().enumerate() {
        let mu = vs.mu().data()[i];
        let s = sigma.data()[i];
        assert!((mu - m.mean).abs() < 0.25 * m.std, "mean {i}: {mu} vs {}", m.mean);
        assert!((s / m.std - 1.0).abs() < 0.1, "std {i}: {s} vs {}", m.std);
    }
}

#[test]
fn small_network_fits_the_sine_curve() {
    let data = gen_xsinx(200, 0.1, -3.0, 3.0, 8).unwrap();
    let spec = NetworkSpec::tanh_hidden(vec![1, 20, 1], Activation::Identity).unwrap();
    let prior: PriorSpec = "gaussian(0,1)".parse().unwrap();
    let config = TrainConfig {
        epochs: 1500,
        batch_size: 50,
        schedule: LrSchedule {
            base: 0.02,
            factor: 0.5,
            interval: 500,
        },
        tau_eps: 100.0,
        ..TrainConfig::default()
    };
    let mut rng = seeded(2);
    let (vs, _) = train_variational(&spec, &data, &config, &prior, &mut rng).unwrap();

    let grid: Vec<f64> = (0..101).map(|i| -3.0 + 0.06 * i as f64).collect();
    let truth: Vec<f64> = grid.iter().map(|x| x * x.sin()).collect();
    let x = Tensor::new(vec![grid.len(), 1], grid).unwrap();
    let summary = predict(&spec, &vs, &x, 100, &[0.9], &mut rng).unwrap();
    assert!(r2(&truth, summary.mean.data()).unwrap() > 0.95);
    assert!(summary.variance_diagonal().data().iter().all(|&v| v >= 0.01));
}
