//! Compares how the two completion strategies fill in synthetic rows.

use rulehide::evaluation::ratio_report;
use rulehide::{evaluate, fixtures, hide, CompletionStrategy, HideOptions, HidingRequest};

fn main() {
    let ds = fixtures::single_hiding();
    let request = HidingRequest::parse(fixtures::SINGLE_REQUEST, ds.schema()).unwrap();
    for strategy in [CompletionStrategy::TwoLevelHoldback, CompletionStrategy::EvenSplit] {
        let options = HideOptions { strategy, ..HideOptions::default() };
        let result = hide(&ds, std::slice::from_ref(&request), &options).unwrap();
        let report = evaluate(&result);
        println!("{strategy:?}");
        println!("  retrained tree: {} nodes", result.retrained_tree.len());
        println!("  similarity {:.3}, agreement {:.3}", report.syntactic_similarity, report.semantic_agreement);
        for node in ratio_report(&result) {
            println!("  {} gain change {:+.4}", node.node, node.gain_delta);
        }
        for warning in &result.plan.warnings {
            println!("  warning: {warning:?}");
        }
    }
}
