//! Full evaluation report for a sanitization run.

use rulehide::{evaluate, fixtures, hide, HideOptions, HidingRequest, RelaxBudget};

fn main() {
    let ds = fixtures::single_hiding();
    let request = HidingRequest::parse(fixtures::SINGLE_REQUEST, ds.schema()).unwrap();
    let options = HideOptions { relax: RelaxBudget::root(1), ..HideOptions::default() };
    let result = hide(&ds, &[request], &options).unwrap();
    let report = evaluate(&result);
    print!("{report}");
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
}
