use adgan_core::batching::{build_pool, class_counts, sample_batch_b, BatchASampler, SamplingStrategy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random labels with every class present, 4 to 60 members.
pub fn random_labels(rng: &mut impl Rng) -> Vec<usize> {
    let n = rng.random_range(4..=60);
    let mut labels: Vec<usize> = (0..4).collect();
    labels.extend((4..n).map(|_| rng.random_range(0..4)));
    labels
}

/// Violations of the sampler contracts over `trials` seeded draws.
#[derive(Debug, Default)]
pub struct SamplerViolations {
    pub oversample_unbalanced: usize,
    pub undersample_over_cap: usize,
    pub batch_b_unequal: usize,
    pub batch_b_bad_weight: usize,
}

impl SamplerViolations {
    pub fn total(&self) -> usize {
        self.oversample_unbalanced + self.undersample_over_cap + self.batch_b_unequal + self.batch_b_bad_weight
    }
}

pub fn check_samplers(trials: u64) -> SamplerViolations {
    let mut v = SamplerViolations::default();
    for seed in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels = random_labels(&mut rng);
        let counts = class_counts(&labels);
        let (max, min) = (*counts.iter().max().unwrap(), *counts.iter().min().unwrap());

        // A full oversampled epoch streamed through the sampler in batches.
        let size = rng.random_range(1..=16);
        let mut sampler = BatchASampler::new(&labels, SamplingStrategy::Oversample, size).unwrap();
        let epoch = 4 * max;
        let mut stream = Vec::new();
        while stream.len() < epoch {
            stream.extend(sampler.next_batch(&mut rng).unwrap());
        }
        let seen: Vec<usize> = stream[..epoch].iter().map(|&i| labels[i]).collect();
        if class_counts(&seen) != [max; 4] {
            v.oversample_unbalanced += 1;
        }

        let pool = build_pool(&labels, SamplingStrategy::Undersample, &mut rng).unwrap();
        let pc = class_counts(&pool.iter().map(|&i| labels[i]).collect::<Vec<_>>());
        if pc.iter().any(|&c| c > min) {
            v.undersample_over_cap += 1;
        }

        let unpaired = random_labels(&mut rng);
        let b = sample_batch_b(&labels, &unpaired, rng.random_range(4..=96), &mut rng).unwrap();
        let mut bc = [0usize; 4];
        for &i in &b.paired {
            bc[labels[i]] += 1;
        }
        for &i in &b.unpaired {
            bc[unpaired[i]] += 1;
        }
        if bc != [b.per_class; 4] {
            v.batch_b_unequal += 1;
        }
        let w = b.weight();
        if !(w.is_finite() && w > 0.0) {
            v.batch_b_bad_weight += 1;
        }
    }
    v
}
