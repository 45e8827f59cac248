#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robeta::model::{LinkKind, ModelSpec, Theta};

pub fn ais() -> ModelSpec {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/ais.csv");
    robeta::io::load_csv(path, "BFP", &["LBM"], &[], None).unwrap()
}

/// `n` copies of an intercept-only row; the responses are irrelevant for
/// the expected-value computations that use it.
pub fn intercept_only(n: usize) -> ModelSpec {
    let y = (0..n)
        .map(|i| (i as f64 + 1.0) / (n as f64 + 1.0))
        .collect();
    ModelSpec::new(
        y,
        DMatrix::from_element(n, 1, 1.0),
        DMatrix::from_element(n, 1, 1.0),
        LinkKind::Logit,
        LinkKind::Log,
    )
    .unwrap()
}

pub fn theta_at(mu: f64, phi: f64) -> Theta {
    Theta::new(vec![(mu / (1.0 - mu)).ln()], vec![phi.ln()])
}

/// A small random model with two mean and two precision columns whose
/// link-level shapes all exceed 1.5, so every transformed density below is
/// bounded.
pub fn random_model(rng: &mut ChaCha8Rng, n: usize) -> (ModelSpec, Theta) {
    loop {
        let x = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { rng.random::<f64>() });
        let z = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { rng.random::<f64>() });
        let theta = Theta::new(
            vec![rng.random_range(-0.8..0.8), rng.random_range(-1.0..1.0)],
            vec![rng.random_range(2.5..4.0), rng.random_range(-0.5..0.5)],
        );
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
        let spec = ModelSpec::new(y, x, z, LinkKind::Logit, LinkKind::Log).unwrap();
        let ll = robeta::model::predict_link_level(&spec, &theta).unwrap();
        let ok = ll
            .mu
            .iter()
            .zip(&ll.phi)
            .all(|(m, p)| m * p > 1.5 && (1.0 - m) * p > 1.5);
        if ok {
            return (spec, theta);
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn sup(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}
