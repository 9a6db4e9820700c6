//! Structured temporal pyramid pooling: proposal augmentation, the region
//! layout, and dense pooling versus the 9-snippet sparse approximation.
//!
//! ```bash
//! cargo run -p ssn --example pyramid_features
//! ```

use ssn::intervals::{augment, TemporalInterval};
use ssn::stpp::{
    region_layout, sampling_segments, snapped_region_layout, sparse_sample_center, stpp_features,
    PyramidConfig,
};
use ssn::SnippetSequence;

fn main() {
    let video_len = 100usize;
    let proposal = TemporalInterval::new(40.0, 60.0).unwrap();
    let ap = augment(&proposal, video_len as f64).unwrap();
    println!(
        "proposal [{}, {}) augmented to [{}, {})",
        proposal.start(),
        proposal.end(),
        ap.span().start(),
        ap.span().end()
    );

    let cfg = PyramidConfig::default(); // (1,2)-1, average pooling
    println!("\ndense region layout:");
    for r in region_layout(&cfg, &ap) {
        println!("  {:?} [{:>5.1}, {:>5.1})", r.stage, r.start, r.end);
    }
    println!("sampling segments (2/5/2 over the stages):");
    for (a, b) in sampling_segments(&ap) {
        print!(" [{a:.0},{b:.0})");
    }
    println!("\nsnapped layout used when pooling over sampled snippets:");
    for r in snapped_region_layout(&cfg, &ap) {
        println!("  {:?} [{:>5.1}, {:>5.1})", r.stage, r.start, r.end);
    }

    // a 1-D ramp makes the pyramid structure visible in the pooled values
    let ramp: Vec<f64> = (0..video_len).map(|t| t as f64 / 10.0).collect();
    let seq = SnippetSequence::new(ramp, video_len, 1).unwrap();
    let dense = stpp_features(&seq, &ap, &cfg, None);
    let subset = sparse_sample_center(&ap, video_len);
    let sparse = stpp_features(&seq, &ap, &cfg, Some(&subset));
    println!("\n          {:>22} {:>22}", "dense", "sparse (center)");
    println!("starting  {:>22.3?} {:>22.3?}", dense.f_s, sparse.f_s);
    println!("course    {:>22.3?} {:>22.3?}", dense.f_c, sparse.f_c);
    println!("ending    {:>22.3?} {:>22.3?}", dense.f_e, sparse.f_e);
    println!(
        "\nglobal feature dimension: {} (= (2 + sum of level parts) x D)",
        dense.global().len()
    );
}
