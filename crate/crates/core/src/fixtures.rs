//! Small reference datasets bundled with the crate.
//!
//! `single_hiding` induces a five-level chain whose deepest positive
//! leaf (9 instances) sits next to a single negative. `parallel_hiding`
//! induces two chains that meet at the root's right child; hiding one
//! leaf at the end of each exercises the intersection logic.

use crate::dataset::Dataset;

pub const SINGLE_HIDING_CSV: &str = include_str!("../fixtures/single_hiding.csv");
pub const PARALLEL_HIDING_CSV: &str = include_str!("../fixtures/parallel_hiding.csv");

pub const SINGLE_REQUEST: &str = "a_n4=1,a_n3=1,a_n2=1,a_n1=1,a_n0=1";
pub const PARALLEL_REQUESTS: [&str; 2] = [
    "a_n4=1,a_n3=1,a_n2=1,a_n1=1,a_n0=1",
    "a_n4=1,a_n3=0,a_n2b=1,a_n1b=1,a_n0b=1",
];

pub fn single_hiding() -> Dataset {
    Dataset::load_csv(SINGLE_HIDING_CSV.as_bytes()).expect("bundled fixture parses")
}

pub fn parallel_hiding() -> Dataset {
    Dataset::load_csv(PARALLEL_HIDING_CSV.as_bytes()).expect("bundled fixture parses")
}
