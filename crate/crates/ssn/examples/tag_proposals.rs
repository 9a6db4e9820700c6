//! Temporal actionness grouping, step by step: flooding the complemented
//! signal at one water level, growing a group from a seed basin, and the
//! full grid-union pipeline.
//!
//! ```bash
//! cargo run -p ssn --example tag_proposals
//! ```

use ssn::tag::{flood_basins, generate_proposals, group_from_seed, ActionnessSequence};

fn main() {
    // a long action with an internal dip, a short burst, and noise
    let mut scores = vec![0.05; 80];
    scores[10..32].fill(0.9);
    scores[18..21].fill(0.55); // dip inside the instance
    scores[50..56].fill(0.8);
    scores[70] = 0.3;
    let actionness = ActionnessSequence::new(scores).unwrap();

    for gamma in [0.2, 0.5, 0.98] {
        let basins = flood_basins(&actionness, gamma);
        let pretty: Vec<String> = basins
            .iter()
            .map(|b| format!("[{}, {})", b.start, b.end))
            .collect();
        println!("water level {gamma:.2}: basins {}", pretty.join(" "));
    }

    // at level 0.2 the dip splits the long action into two basins; a seed
    // at the first basin absorbs the second because the flooded fraction
    // of the grown span stays high
    let basins = flood_basins(&actionness, 0.2);
    let group = group_from_seed(&basins, 0, 0.7);
    println!(
        "group from seed 0 at tau 0.70: [{}, {})",
        group.start(),
        group.end()
    );

    let proposals = generate_proposals(&actionness, 0.05).unwrap();
    println!("\n{} proposals after grid union + NMS:", proposals.len());
    for (interval, score) in proposals.iter().take(8) {
        println!(
            "  [{:>4.1}, {:>4.1})  mean actionness {score:.3}",
            interval.start(),
            interval.end()
        );
    }
}
