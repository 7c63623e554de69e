mod common;

use adgan_core::adgan::{loss_g_dalign, AlignBatch, Architecture, ParameterSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn loss_gradients_match_central_differences() {
    for seed in 0..20 {
        let e = common::check_losses(seed);
        assert!(e.d_with_penalty < 1e-3, "seed {seed}: L_D {}", e.d_with_penalty);
        assert!(
            e.d_without_penalty < 1e-4,
            "seed {seed}: L_D no penalty {}",
            e.d_without_penalty
        );
        assert!(e.g_align < 1e-4, "seed {seed}: L_G {}", e.g_align);
    }
}

#[test]
fn critic_head_gets_exact_zero_from_alignment_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let p = ParameterSet::init(Architecture::default(), &mut rng).unwrap();
    let u = common::random_matrix(6, 20, 0.0, 1.0, &mut rng);
    let s = common::random_matrix(6, 52, 0.0, 1.0, &mut rng);
    let labels = [0, 1, 2, 3, 0, 1];
    let batch = AlignBatch {
        u_unpaired: &u,
        labels_unpaired: &labels,
        u_paired: &u,
        s_paired: &s,
        labels_paired: &labels,
    };
    let (_, g) = loss_g_dalign(&p, &batch).unwrap();
    let full = g.select(&p.critic_ids(), &p.store);
    assert!(full.iter().all(|m| m.data().iter().all(|&v| v == 0.0)));
}
