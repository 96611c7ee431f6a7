//! End-to-end runs on the bundled fixtures.

use serde_json::{json, Value};

use rulehide::evaluation::{ratio_report, verify_hidden};
use rulehide::hiding::{HidingPlan, PlanWarning};
use rulehide::tree::TreeError;
use rulehide::{
    evaluate, fixtures, hide, induce, serial_hide, CompletionStrategy, Dataset, HideOptions, HidingError,
    HidingRequest, InductionConfig, Label, NodeId, NodeStats, Provenance, Ratio, RelaxBudget,
};

fn requests(ds: &Dataset, rules: &[&str]) -> Vec<HidingRequest> {
    rules.iter().map(|r| HidingRequest::parse(r, ds.schema()).unwrap()).collect()
}

fn single(relax: RelaxBudget, strategy: CompletionStrategy) -> rulehide::SanitizationResult {
    let ds = fixtures::single_hiding();
    let options = HideOptions { relax, strategy, ..HideOptions::default() };
    hide(&ds, &requests(&ds, &[fixtures::SINGLE_REQUEST]), &options).unwrap()
}

#[test]
fn exact_single_hiding_doubles_the_dataset() {
    let result = single(RelaxBudget::none(), CompletionStrategy::default());
    assert_eq!(result.sanitized.len(), 2000);
    let counts = result.sanitized.provenance_counts();
    assert_eq!((counts.original, counts.swapped, counts.synthetic), (991, 9, 1000));
    assert!(result.sanitized.is_fully_specified());
    assert!(result.plan.warnings.is_empty(), "{:?}", result.plan.warnings);
    assert_eq!(result.plan.side_effects, ["a_n4=1,a_n3=1,a_n2=1,a_n1=1,a_n0=0"]);
    assert_eq!(verify_hidden(&result), [true]);
}

#[test]
fn relaxed_root_adds_fewer_instances() {
    let exact = single(RelaxBudget::none(), CompletionStrategy::default());
    let relaxed = single(RelaxBudget::root(1), CompletionStrategy::default());
    assert_eq!(relaxed.sanitized.len(), 1700);
    assert!(relaxed.added() < exact.added());
    let record = &relaxed.plan.relaxations[0];
    assert_eq!((record.node, record.shift), (NodeId(0), 1));
    assert_eq!(record.new, Ratio::new(540, 460).unwrap());
    assert!(!relaxed.plan.is_exact());
    // non-root nodes keep their exact ratios
    for node in ratio_report(&relaxed).iter().filter(|n| n.node != NodeId(0)) {
        assert!(node.exact, "{node:?}");
    }
    assert_eq!(verify_hidden(&relaxed), [true]);
}

#[test]
fn plan_json_shape() {
    let result = single(RelaxBudget::none(), CompletionStrategy::default());
    let v = serde_json::to_value(&result.plan).unwrap();
    let root = &v["nodes"][0];
    assert_eq!(root["equation"], json!({"a": 459, "b": 541, "c": 9000}));
    assert_eq!(root["cumulative"], json!({"x": 550, "y": 450}));
    assert_eq!(root["post_swap"], json!({"p": 532, "n": 468}));
    assert_eq!(v["requests"][0]["collapsed_class"], "n");
    assert_eq!(v["requests"][0]["swapped"].as_array().unwrap().len(), 9);
    assert_eq!(v["total_added"], 1000);
    let back: HidingPlan = serde_json::from_value(v).unwrap();
    assert_eq!(back, result.plan);
}

#[test]
fn ratios_are_restored_at_every_skeleton_node() {
    let result = single(RelaxBudget::none(), CompletionStrategy::default());
    let report = ratio_report(&result);
    assert_eq!(report.len(), 4);
    for node in &report {
        assert!(node.exact && node.ratio_deviation == 0.0 && node.entropy_delta == 0.0, "{node:?}");
    }
    let lowest = report.iter().find(|n| n.node == NodeId(6)).unwrap();
    assert_eq!(lowest.achieved, NodeStats::new(116, 74));
}

#[test]
fn both_strategies_hide_the_rule() {
    for strategy in [CompletionStrategy::TwoLevelHoldback, CompletionStrategy::EvenSplit] {
        let result = single(RelaxBudget::none(), strategy);
        assert_eq!(verify_hidden(&result), [true], "{strategy:?}");
        assert!(result.sanitized.is_fully_specified());
        assert_eq!(result.retrained_tree.root().attribute(), Some(0));
    }
}

#[test]
fn synthetic_rows_respect_their_fixed_paths() {
    let result = single(RelaxBudget::none(), CompletionStrategy::default());
    let plan = &result.plan;
    let synthetic: Vec<_> =
        result.sanitized.instances().iter().filter(|i| i.provenance == Provenance::Synthetic).collect();
    for node in &plan.nodes {
        let inside = synthetic.iter().filter(|i| i.matches(&node.path)).count() as u64;
        assert_eq!(inside, node.cumulative.total(), "node {}", node.node);
    }
}

#[test]
fn parallel_hiding_run() {
    let ds = fixtures::parallel_hiding();
    let result = hide(&ds, &requests(&ds, &fixtures::PARALLEL_REQUESTS), &HideOptions::default()).unwrap();
    assert_eq!(result.added(), 1000);
    assert_eq!(verify_hidden(&result), [true, true]);
    // nodes off the disturbed children keep their ratios
    let disturbed: Vec<NodeId> = result
        .plan
        .warnings
        .iter()
        .filter_map(|w| match w {
            PlanWarning::RatioDisturbed { node: NodeId(6), child } => Some(*child),
            _ => None,
        })
        .collect();
    assert!(!disturbed.is_empty());
    for node in ratio_report(&result) {
        assert!(node.exact || disturbed.contains(&node.node), "{node:?}");
    }
    assert!(evaluate(&result).all_hidden());
}

#[test]
fn serial_order_fails_once_the_second_rule_is_gone() {
    let ds = fixtures::parallel_hiding();
    let err = serial_hide(&ds, &requests(&ds, &fixtures::PARALLEL_REQUESTS), &HideOptions::default()).unwrap_err();
    assert!(matches!(err, HidingError::Tree(TreeError::RuleNotFound(_))), "{err}");

    let one = serial_hide(&ds, &requests(&ds, &fixtures::PARALLEL_REQUESTS[..1]), &HideOptions::default()).unwrap();
    assert_eq!(one.steps.len(), 1);
    assert_eq!(one.sanitized().unwrap().len(), ds.len() + one.total_added() as usize);
}

#[test]
fn evaluation_report_on_single_fixture() {
    let result = single(RelaxBudget::none(), CompletionStrategy::default());
    let report = evaluate(&result);
    assert!(report.all_hidden() && report.all_exact());
    assert_eq!(report.total_added, 1000);
    assert!(report.syntactic_similarity > 0.0 && report.syntactic_similarity < 1.0);
    assert!(report.semantic_agreement > 0.9 && report.semantic_agreement < 1.0);
    let v: Value = serde_json::to_value(&report).unwrap();
    assert_eq!(v["side_effects"][0]["hidden"], true);
    let text = report.to_string();
    assert!(text.contains("total added"), "{text}");
}

#[test]
fn request_errors() {
    let ds = fixtures::single_hiding();
    let tree = induce(&ds, &InductionConfig::default()).unwrap();
    let internal = requests(&ds, &["a_n4=1,a_n3=1"]);
    let err = hide(&ds, &internal, &HideOptions::default()).unwrap_err();
    assert!(matches!(err, HidingError::InternalNode(_)), "{err}");
    let absent = requests(&ds, &["a_n4=0,a_n3=1"]);
    let err = hide(&ds, &absent, &HideOptions::default()).unwrap_err();
    assert!(matches!(err, HidingError::Tree(TreeError::RuleNotFound(_)) | HidingError::NotCollapsible { .. }), "{err}");
    assert!(tree.extract_rules().len() > 1);
}

#[test]
fn collapsed_region_takes_the_collapsed_class() {
    let result = single(RelaxBudget::none(), CompletionStrategy::default());
    let request = &result.plan.requests[0];
    let collapsed = request.collapsed.unwrap();
    let path = result.original_tree.path(collapsed).unwrap();
    let region = result.sanitized.class_counts(|i| i.matches(&path));
    assert_eq!(request.collapsed_class, Some(Label::N));
    assert_eq!(region.p, 0);
}
