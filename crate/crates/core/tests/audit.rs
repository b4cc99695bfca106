use osgood_lab::audit::{assumption_audit, AuditConfig};
use osgood_lab::drift::DriftSpec;

fn failing(r: &osgood_lab::audit::AuditReport) -> Vec<String> {
    r.entries.iter().filter(|e| !e.pass).map(|e| format!("{} ({})", e.check, e.detail)).collect()
}

#[test]
fn iterated_log_families_pass() {
    for n in [2, 3, 4] {
        let r = assumption_audit(&DriftSpec::iterated_log(n).unwrap(), 1.2, &AuditConfig::default());
        assert!(r.all_pass(), "n={n}: {:?}", failing(&r));
        for f in &r.nu_fit {
            assert!(f.nu.unwrap() < 0.2, "n={n}: {:?}", f);
        }
    }
}

#[test]
fn linear_test_passes() {
    let r = assumption_audit(&DriftSpec::linear(1.0).unwrap(), 1.2, &AuditConfig::default());
    assert!(r.all_pass(), "{:?}", failing(&r));
    assert_eq!(r.entry("polynomial_growth").unwrap().detail.contains("p = 1"), true);
}

#[test]
fn power_test_fails_osgood_only_where_expected() {
    for delta in [0.5, 1.0] {
        let r = assumption_audit(&DriftSpec::power(delta).unwrap(), 1.2, &AuditConfig::default());
        let o = r.entry("osgood").unwrap();
        assert!(!o.pass);
        assert!(o.witness.is_some());
        if delta == 1.0 {
            assert!(o.value < 1.0);
        }
        assert!(!r.entry("lip_over_log").unwrap().pass);
        for e in &r.entries {
            if !e.pass {
                assert!(e.witness.is_some(), "{} lacks a witness", e.check);
            }
        }
    }
}

#[test]
fn report_serializes_as_records() {
    let r = assumption_audit(&DriftSpec::ulog(), 1.2, &AuditConfig::default());
    let v = serde_json::to_value(&r.entries).unwrap();
    let rec = &v.as_array().unwrap()[0];
    for k in ["check", "pass", "witness", "value"] {
        assert!(rec.get(k).is_some());
    }
}
