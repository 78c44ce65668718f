use deepo_core::harness::acceptance::{run_acceptance, CRITERIA};

#[test]
fn acceptance_battery() {
    let report = run_acceptance();
    println!("{}", report.table());
    assert_eq!(report.criteria.len(), CRITERIA.len());
    let failed: Vec<String> = report
        .criteria
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{} {}", c.id, c.name))
        .collect();
    assert!(failed.is_empty(), "failed criteria: {}", failed.join(", "));
}
