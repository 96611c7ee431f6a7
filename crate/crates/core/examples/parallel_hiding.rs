//! Hides two rules that share ancestors in one pass.

use rulehide::evaluation::verify_hidden;
use rulehide::hiding::build_skeleton;
use rulehide::{fixtures, hide, induce, HideOptions, HidingRequest, InductionConfig};

fn main() {
    let ds = fixtures::parallel_hiding();
    let requests: Vec<_> =
        fixtures::PARALLEL_REQUESTS.iter().map(|r| HidingRequest::parse(r, ds.schema()).unwrap()).collect();

    let tree = induce(&ds, &InductionConfig::default()).unwrap();
    let skeleton = build_skeleton(&tree, &requests).unwrap();
    for (id, node) in &skeleton.nodes {
        let mark = if node.is_intersection() { " (shared)" } else { "" };
        println!("{id}: swap {:+}p {:+}n{mark}", node.delta.dp, node.delta.dn);
    }

    let result = hide(&ds, &requests, &HideOptions::default()).unwrap();
    for node in &result.plan.nodes {
        println!("{}: {} add {}", node.node, node.equation, node.cumulative);
    }
    for warning in &result.plan.warnings {
        println!("warning: {warning:?}");
    }
    println!("added {}, hidden {:?}", result.added(), verify_hidden(&result));
}
