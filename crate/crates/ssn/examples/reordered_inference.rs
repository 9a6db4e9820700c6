//! The reordered inference computation: identical scores to the
//! pool-then-multiply path, at a cost that barely depends on how many
//! proposals share the video.
//!
//! ```bash
//! cargo run --release -p ssn --example reordered_inference
//! ```

use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use ssn::inference::{compute_snippet_responses, score_proposals, score_proposals_naive};
use ssn::intervals::TemporalInterval;
use ssn::model::ModelParams;
use ssn::stpp::PyramidConfig;
use ssn::SnippetSequence;

fn random_proposals(rng: &mut ChaCha8Rng, n: usize, t: f64) -> Vec<TemporalInterval> {
    (0..n)
        .map(|_| {
            let s = rng.random_range(0.0..t * 0.8);
            let d = rng.random_range(3.0..(t - s));
            TemporalInterval::new(s, s + d).unwrap()
        })
        .collect()
}

fn main() {
    let (t, d, k) = (500usize, 64usize, 10usize);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let features: Vec<f64> = (0..t * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let seq = SnippetSequence::new(features, t, d).unwrap();
    let mut params = ModelParams::zeros(k, d, PyramidConfig::default(), 1.0).unwrap();
    let flat: Vec<f64> = params
        .flat_params()
        .iter()
        .map(|_| rng.random_range(-0.2..0.2))
        .collect();
    params.set_flat_params(&flat).unwrap();

    // agreement with the pool-then-multiply path
    let proposals = random_proposals(&mut rng, 50, t as f64);
    let responses = compute_snippet_responses(&seq, &params).unwrap();
    let fast = score_proposals(&responses, &proposals, &params, "demo").unwrap();
    let slow = score_proposals_naive(&seq, &proposals, &params, "demo").unwrap();
    let max_diff = fast
        .iter()
        .zip(&slow)
        .map(|(a, b)| (a.score - b.score).abs())
        .fold(0.0, f64::max);
    println!("max |score difference| over 50 proposals: {max_diff:.2e}");

    // the per-snippet responses are computed once; pooling them per
    // proposal costs a few subtractions per region
    for n in [10usize, 100, 1000] {
        let proposals = random_proposals(&mut rng, n, t as f64);
        let start = Instant::now();
        let responses = compute_snippet_responses(&seq, &params).unwrap();
        let _ = score_proposals(&responses, &proposals, &params, "demo").unwrap();
        let reordered = start.elapsed();
        let start = Instant::now();
        let _ = score_proposals_naive(&seq, &proposals, &params, "demo").unwrap();
        let naive = start.elapsed();
        println!(
            "{n:>5} proposals: reordered {reordered:>9.2?}   pool-then-multiply {naive:>9.2?}"
        );
    }
}
