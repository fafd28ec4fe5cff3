use chrono::NaiveDate;
use proptest::prelude::*;
use vaeconf_core::{
    fit, init_model, kl_divergence, Activation, Dataset, Observation, VaeConfig,
};

fn config() -> impl Strategy<Value = VaeConfig> {
    (
        1usize..8,
        prop::collection::vec(1usize..12, 0..3),
        1usize..5,
        prop::collection::vec(1usize..12, 0..3),
        prop::bool::ANY,
        any::<u64>(),
    )
        .prop_map(|(input, enc, latent, dec, softplus, seed)| VaeConfig {
            encoder_hidden: enc,
            latent_dim: latent,
            decoder_hidden: dec,
            activation: if softplus { Activation::Softplus } else { Activation::Tanh },
            seed,
            ..VaeConfig::new(input)
        })
}

/// 200 rows with a noiseless linear target in roughly unit-scaled features.
fn linear_rows() -> Dataset {
    let date = NaiveDate::from_ymd_opt(2015, 6, 1).unwrap();
    let obs = (0..200)
        .map(|i| {
            let a = ((i * 37) % 200) as f64 / 100.0 - 1.0;
            let b = ((i * 11) % 200) as f64 / 100.0 - 1.0;
            Observation {
                id: format!("r{i}"),
                lat: 45.0,
                lon: 11.0,
                date,
                features: vec![a, b],
                target: Some(10.0 + 3.0 * a - 2.0 * b),
            }
        })
        .collect();
    Dataset::new(vec!["a".into(), "b".into()], obs).unwrap()
}

proptest! {
    #[test]
    fn kl_is_non_negative(pairs in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 1..16)) {
        let (mu, logvar): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        prop_assert!(kl_divergence(&mu, &logvar).unwrap() >= 0.0);
    }

    #[test]
    fn shapes_chain_through_every_layer(cfg in config(), x in prop::collection::vec(-3.0..3.0f64, 8)) {
        let model = init_model(&cfg).unwrap();
        let x = &x[..cfg.input_dim];
        let (mu, logvar) = model.encode(x).unwrap();
        prop_assert_eq!(mu.len(), cfg.latent_dim);
        prop_assert_eq!(logvar.len(), cfg.latent_dim);
        let y = model.decode(&mu).unwrap();
        prop_assert!(y.is_finite());
        prop_assert_eq!(model.predict(x).unwrap().to_bits(), y.to_bits());
        let shapes = cfg.layer_shapes();
        let params: usize = shapes.iter().map(|(i, o)| i * o + o).sum();
        prop_assert_eq!(model.param_count(), params);
    }
}

#[test]
fn fit_is_deterministic() {
    let data = linear_rows();
    let cfg = VaeConfig {
        encoder_hidden: vec![8],
        latent_dim: 2,
        decoder_hidden: vec![8],
        epochs: 5,
        batch_size: 32,
        ..VaeConfig::new(2)
    };
    let (a, ha) = fit(init_model(&cfg).unwrap(), &data, &cfg).unwrap();
    let (b, hb) = fit(init_model(&cfg).unwrap(), &data, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ha, hb);
}

#[test]
fn loss_falls_on_linear_target() {
    let data = linear_rows();
    let cfg = VaeConfig {
        encoder_hidden: vec![16],
        latent_dim: 2,
        decoder_hidden: vec![16],
        epochs: 60,
        batch_size: 20,
        learning_rate: 1e-2,
        ..VaeConfig::new(2)
    };
    let (_, history) = fit(init_model(&cfg).unwrap(), &data, &cfg).unwrap();
    let first = history.total[0];
    let last = *history.total.last().unwrap();
    assert!(last < 0.1 * first, "loss {first} -> {last}");
}
