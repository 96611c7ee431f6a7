//! Lets the root ratio move by a small shift and compares the cost with
//! the exact plan.

use rulehide::{fixtures, hide, HideOptions, HidingRequest, RelaxBudget};

fn main() {
    let ds = fixtures::single_hiding();
    let request = HidingRequest::parse(fixtures::SINGLE_REQUEST, ds.schema()).unwrap();
    for shift in 0..=3 {
        let options = HideOptions { relax: RelaxBudget::root(shift), ..HideOptions::default() };
        let result = hide(&ds, std::slice::from_ref(&request), &options).unwrap();
        let root = &result.plan.nodes[0];
        let ratio = result
            .plan
            .relaxations
            .first()
            .map_or_else(|| format!("{} (exact)", root.target), |r| format!("{} -> {}", r.old, r.new));
        println!("shift <= {shift}: root {ratio}, {}, added {}", root.equation, result.added());
    }
}
