//! Toeplitz hashing against a dense matrix-vector product.

use ctxrand::bounds::DEFAULT_EPSILON_H;
use ctxrand::extractor::{self, ToeplitzSpec};
use ctxrand::{BitStream, Execution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_bits(rng: &mut ChaCha8Rng, n: usize) -> BitStream {
    (0..n).map(|_| rng.gen::<bool>()).collect()
}

fn dense(input: &BitStream, spec: &ToeplitzSpec) -> BitStream {
    (0..spec.n_out)
        .map(|i| (0..spec.n_in).fold(false, |acc, j| acc ^ (spec.entry(i, j) & input.get(j))))
        .collect()
}

#[test]
fn random_cases_match_dense_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..100 {
        let n_in = rng.gen_range(1..=10_000);
        let n_out = rng.gen_range(0..=n_in.min(5_000));
        let input = random_bits(&mut rng, n_in);
        let seed = random_bits(&mut rng, (n_in + n_out).saturating_sub(1));
        let spec = ToeplitzSpec::new(n_in, n_out, seed).unwrap();
        let want = dense(&input, &spec);
        for exec in [Execution::Sequential, Execution::Parallel] {
            assert_eq!(extractor::extract(&input, &spec, exec).unwrap(), want, "case {case}");
        }
    }
}

#[test]
fn plan_at_experimental_rate() {
    let n_rounds = 1.29421072e8;
    let plan = extractor::plan(2 * n_rounds as usize, n_rounds * 6.2e-3, DEFAULT_EPSILON_H).unwrap();
    assert!((8.0e5..=8.1e5).contains(&(plan.n_out as f64)), "{}", plan.n_out);
    assert_eq!(plan.seed_bits, plan.n_in + plan.n_out - 1);
}

#[test]
fn structured_inputs() {
    let n_in = 9_000;
    let n_out = 4_500;
    let spec = ToeplitzSpec::new(n_in, n_out, extractor::fixture_seed(b"structured", n_in + n_out - 1)).unwrap();
    let zeros = BitStream::zeros(n_in);
    assert_eq!(
        extractor::extract(&zeros, &spec, Execution::Parallel).unwrap(),
        BitStream::zeros(n_out)
    );
    let ones: BitStream = (0..n_in).map(|_| true).collect();
    assert_eq!(
        extractor::extract(&ones, &spec, Execution::Parallel).unwrap(),
        dense(&ones, &spec)
    );
}
