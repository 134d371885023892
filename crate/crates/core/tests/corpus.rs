use sizeright_core::backend::Backend;
use sizeright_core::policy::{EventKind, Policy};
use sizeright_core::scenario::{corpus, matrix, run, ExpectStatus, Outcome, RunConfig};

fn report(name: &str, backend: Backend, policy: Policy) -> sizeright_core::scenario::RunReport {
    let s = corpus::get(name).unwrap();
    run(&s, &RunConfig::new(backend, policy)).unwrap()
}

#[test]
fn five_scenarios_with_unique_names() {
    let all = corpus::corpus();
    assert_eq!(all.len(), 5);
    let mut names: Vec<_> = all.iter().map(|s| s.name.clone()).collect();
    names.dedup();
    assert_eq!(names.len(), 5);
}

#[test]
fn every_cell_matches_its_declared_outcome() {
    let rows = matrix(&corpus::corpus(), &Backend::ALL, &Policy::ALL, &RunConfig::new(Backend::Null, Policy::Abort));
    assert_eq!(rows.len(), 5 * 3 * 4);
    for row in &rows {
        let r = row.report.as_ref().unwrap();
        assert!(row.expected.is_some(), "{} {:?} {:?} undeclared", row.scenario, row.backend, row.policy);
        let failed: Vec<_> = r.expectations.iter().filter(|e| e.status == ExpectStatus::Failed).collect();
        assert!(row.held(), "{} {:?} {:?}: got {} expected {:?}, failed {:?}", row.scenario, row.backend, row.policy, r.outcome, row.expected, failed);
    }
}

#[test]
fn context_policy_mitigates_four_of_five() {
    for backend in [Backend::BoundsTable, Backend::ShadowRedzone] {
        let mitigated = corpus::corpus()
            .iter()
            .filter(|s| run(s, &RunConfig::new(backend, Policy::ContextAware)).unwrap().outcome == Outcome::MitigatedContinued)
            .count();
        assert_eq!(mitigated, 4);
    }
}

#[test]
fn graphicsmagick_aborts_at_user_store() {
    for backend in [Backend::BoundsTable, Backend::ShadowRedzone] {
        let r = report("graphicsmagick-strncpy", backend, Policy::ContextAware);
        assert_eq!(r.outcome, Outcome::AbortedDetected);
        let cause = r.abort_cause().unwrap();
        assert_eq!(cause.site, "user");
        assert_eq!(cause.kind, EventKind::OobWrite);
        // the interceptor clamped first
        assert_eq!(r.count(EventKind::Clamp), 1);
    }
}

#[test]
fn lightftp_second_request_is_served() {
    let r = report("lightftp-strcat", Backend::ShadowRedzone, Policy::ContextAware);
    assert_eq!(r.outcome, Outcome::MitigatedContinued);
    assert!(r.expectations.iter().all(|e| e.status == ExpectStatus::Passed));
    assert!(r.count(EventKind::Truncation) >= 1);
}

#[test]
fn null_backend_spills() {
    for s in corpus::corpus() {
        for p in Policy::ALL {
            let r = run(&s, &RunConfig::new(Backend::Null, p)).unwrap();
            assert!(r.spilled_bytes > 0, "{}", s.name);
        }
    }
}
