#[path = "common/sampling.rs"]
mod sampling;

use adgan_core::batching::{gaussian_fuse, NoiseSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn samplers_hold_their_contracts_over_1000_draws() {
    let v = sampling::check_samplers(1000);
    assert_eq!(v.total(), 0, "{v:?}");
}

#[test]
fn fused_noise_magnitude_matches_half_normal_mean() {
    let sigma = 0.5;
    let spec = NoiseSpec::new(1, 0.0, sigma).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let draws = 100_000;
    let mut total = 0.0;
    for _ in 0..draws {
        let out = gaussian_fuse(&[0.0], &spec, &mut rng).unwrap();
        total += out[0].abs();
    }
    let expected = sigma * (2.0 / std::f64::consts::PI).sqrt();
    let mean = total / draws as f64;
    assert!((mean - expected).abs() < 0.05 * expected, "{mean} vs {expected}");
}

proptest! {
    #[test]
    fn fuse_touches_exactly_c_positions(seed in any::<u64>(), c in 0usize..=20, sigma in 0.001f64..1.0) {
        let v: Vec<f64> = (0..20).map(|i| i as f64 * 0.05).collect();
        let out = gaussian_fuse(&v, &NoiseSpec::new(c, 0.0, sigma).unwrap(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(v.iter().zip(&out).filter(|(a, b)| a != b).count(), c);
    }
}
