//! Hides one rule exactly and prints the per-node plan.

use rulehide::evaluation::verify_hidden;
use rulehide::{fixtures, hide, HideOptions, HidingRequest};

fn main() {
    let ds = fixtures::single_hiding();
    let request = HidingRequest::parse(fixtures::SINGLE_REQUEST, ds.schema()).unwrap();
    let result = hide(&ds, &[request], &HideOptions::default()).unwrap();

    for node in &result.plan.nodes {
        println!(
            "{:>4} {:>10} -> {:>10}  {}  add {} (local {})",
            node.node.to_string(),
            node.original.to_string(),
            node.post_swap.to_string(),
            node.equation,
            node.cumulative,
            node.local
        );
    }
    println!("added {} instances, dataset now {}", result.added(), result.sanitized.len());
    println!("also hidden: {:?}", result.plan.side_effects);
    println!("hidden: {:?}", verify_hidden(&result));
}
