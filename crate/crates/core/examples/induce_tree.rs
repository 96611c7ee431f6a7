//! Induces a tree from a CSV file and lists its rules.
//!
//! ```text
//! cargo run --example induce_tree -- data.csv
//! ```

use rulehide::{fixtures, induce, Dataset, InductionConfig};

fn main() {
    let ds = match std::env::args().nth(1) {
        Some(path) => Dataset::load_csv(std::fs::File::open(path).expect("readable file")).expect("valid CSV"),
        None => fixtures::single_hiding(),
    };
    let tree = induce(&ds, &InductionConfig::default()).unwrap();
    println!("{} instances, {} nodes", ds.len(), tree.len());
    for node in tree.nodes() {
        let depth = tree.ancestors(node.id).unwrap().len();
        let label = match node.attribute() {
            Some(a) => format!("split on {}", ds.schema().names()[a]),
            None => format!("leaf -> {}", node.stats.majority().token()),
        };
        println!("{:indent$}{} {} {}", "", node.id, node.stats, label, indent = depth * 2);
    }
    for rule in tree.extract_rules() {
        println!("{}", rule.render(ds.schema()));
    }
}
