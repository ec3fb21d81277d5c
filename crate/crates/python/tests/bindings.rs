const EXAMPLE1: &str = r#"{"n_agents": 4, "objective": {"v": [4, 3, 1, 1]},
 "rows": [{"coeffs": {"x0": 4, "x1": 2.5, "x2": 2.5, "x3": 2.5}, "rel": "<=", "rhs": 6}]}"#;

#[test]
fn solve_and_partition() {
    let (z, x) = fairip::solve_json(EXAMPLE1).unwrap();
    assert_eq!(z, 4.0);
    assert_eq!(x.len(), 4);
    let (yes, no, maybe) = fairip::partition_json(EXAMPLE1, 0.0).unwrap();
    assert!(yes.is_empty() && no.is_empty());
    assert_eq!(maybe, vec![0, 1, 2, 3]);
}

#[test]
fn rule_report_json() {
    let text = fairip::rule_json(EXAMPLE1, "uniform", 0.0, 0, 10, 100).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["rule"], "uniform");
    assert_eq!(v["lottery"].as_array().unwrap().len(), 3);
    assert!(fairip::rule_json(EXAMPLE1, "borda", 0.0, 0, 10, 100).is_err());
}

#[test]
fn generators_and_enumeration() {
    let ke = fairip::kidney_json(8, 3).unwrap();
    let (pool, complete) = fairip::enumerate_json(&ke, 0.0, 1000).unwrap();
    assert!(complete && !pool.is_empty());
    let tt = fairip::tardiness_json(3, 0.2, 1).unwrap();
    assert!(fairip::solve_json(&tt).unwrap().0 <= 0.0);
}
