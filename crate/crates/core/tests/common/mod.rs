#![allow(dead_code)]

use std::time::{Duration, Instant};

use reclink::corpus::{Chain, Record};

pub fn record(id: &str, topic: &str, hours: f64, text: &str) -> Record {
    Record {
        record_id: id.to_string(),
        topic_id: topic.to_string(),
        document_id: format!("{topic}-doc"),
        timestamp: 1_600_000_000 + (hours * 3600.0).round() as i64,
        text: text.to_string(),
        fl_code: None,
        attributes: Default::default(),
    }
}

pub fn chain(id: &str, members: &[&str]) -> Chain {
    Chain::new(id, members.iter().map(|m| m.to_string()).collect())
}

/// Runs one acceptance criterion, prints a single PASS/FAIL line with its
/// runtime and fails the test on any recorded failure or a blown budget.
pub fn criterion<F>(name: &str, budget: Duration, body: F)
where
    F: FnOnce(&mut Vec<String>),
{
    let start = Instant::now();
    let mut failures = Vec::new();
    body(&mut failures);
    let elapsed = start.elapsed();
    if elapsed > budget {
        failures.push(format!("runtime {elapsed:.2?} exceeds budget {budget:?}"));
    }
    let verdict = if failures.is_empty() { "PASS" } else { "FAIL" };
    println!("[{verdict}] {name} ({:.2}s, budget {}s)", elapsed.as_secs_f64(), budget.as_secs());
    for f in &failures {
        println!("    - {f}");
    }
    assert!(failures.is_empty(), "{name}: {failures:#?}");
}

/// Pushes a failure unless `got` is within `tol` of `want`.
pub fn expect_close(failures: &mut Vec<String>, what: &str, got: f64, want: f64, tol: f64) {
    if !((got - want).abs() <= tol) {
        failures.push(format!("{what}: got {got}, want {want} (±{tol})"));
    }
}
