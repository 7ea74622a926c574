mod common;

use serde_json::{json, Value};
use synthpop::faux::Effect;
use synthpop::{
    audit_document, disclosure_audit, fit_chain, generate_faux, Error, FitData, GatePolicy, ModelPack,
    RngContract,
};

fn fixture_pack(n: usize, policy: GatePolicy) -> synthpop::Result<(ModelPack, u64)> {
    let spec = common::spec(
        n,
        vec![
            common::binary("flag", vec![Effect::constant(-0.5), Effect::slope("age", 0.02, 40.0)]),
            common::age_line(1.0),
        ],
    );
    let table = generate_faux(&spec, &RngContract::new(4)).unwrap();
    let mut chain = spec.chain();
    chain.gate_policy = policy;
    fit_chain(FitData::Table(&table), &chain).map(|p| (p, n as u64))
}

#[test]
fn round_trip_is_byte_stable() {
    let (pack, _) = fixture_pack(3_000, GatePolicy::KeepFlagged).unwrap();
    let bytes = pack.to_bytes().unwrap();
    let back = ModelPack::from_bytes(&bytes).unwrap();
    assert_eq!(back, pack);
    assert_eq!(back.to_bytes().unwrap(), bytes);
    assert_eq!(back.sha256().unwrap(), pack.sha256().unwrap());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.synthpack.json");
    pack.save(&path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
    assert_eq!(ModelPack::load(&path).unwrap(), pack);
}

#[test]
fn fitted_pack_contains_no_records() {
    let (pack, n) = fixture_pack(3_000, GatePolicy::KeepFlagged).unwrap();
    let report = audit_document(&pack.to_bytes().unwrap());
    assert!(report.passed, "{:?}", report.violations);
    assert_eq!(report.flagged_strata, pack.seed_strata.flagged());
    assert!(report.flagged_strata > 0);
    assert_eq!(pack.seed_strata.total(), n);
    let text = String::from_utf8(pack.to_bytes().unwrap()).unwrap();
    assert!(!text.contains("\"rows\": [[") && !text.contains("records"));
}

fn corrupt(pack: &ModelPack, edit: impl FnOnce(&mut Value)) -> Vec<u8> {
    let mut v: Value = serde_json::from_slice(&pack.to_bytes().unwrap()).unwrap();
    edit(&mut v);
    serde_json::to_vec_pretty(&v).unwrap()
}

#[test]
fn audit_catches_embedded_records() {
    let (pack, _) = fixture_pack(3_000, GatePolicy::KeepFlagged).unwrap();
    let records = json!([
        {"age": 41, "gender": "female", "region": "R02", "y": 23.1},
        {"age": 17, "gender": "male", "region": "R01", "y": 18.4},
    ]);
    let cases = [
        corrupt(&pack, |v| v["records"] = records.clone()),
        corrupt(&pack, |v| v["equations"][1]["strata"][0]["training_rows"] = records.clone()),
        corrupt(&pack, |v| v["seed_strata"]["rows"][0]["person_id"] = json!("123456789")),
    ];
    for bytes in &cases {
        let report = audit_document(bytes);
        assert!(!report.passed);
        assert!(report.violations.iter().any(|v| v.rule == "record_payload"), "{report:?}");
    }
    let garbled = audit_document(b"{\"version\": 1, ");
    assert!(!garbled.passed && garbled.violations[0].rule == "format");
}

#[test]
fn fail_policy_aborts_export() {
    match fixture_pack(2_000, GatePolicy::Fail) {
        Err(Error::Gate { count, min, .. }) => assert!(count < min && min == 10),
        other => panic!("expected a gate failure, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn merge_policy_keeps_totals() {
    let (pack, n) = fixture_pack(20_000, GatePolicy::MergeAdjacentAge).unwrap();
    let strata = &pack.seed_strata;
    assert!(strata.rows.iter().all(|r| r.count >= 10));
    assert_eq!(strata.total(), n);
    assert!(strata.rows.iter().any(|r| r.age_to > r.age_from));
    assert!(disclosure_audit(&pack).passed);
}

#[test]
fn flags_are_checked_against_counts() {
    let (mut pack, _) = fixture_pack(3_000, GatePolicy::KeepFlagged).unwrap();
    let row = pack.seed_strata.rows.iter_mut().find(|r| r.flagged).unwrap();
    row.flagged = false;
    let report = disclosure_audit(&pack);
    assert!(!report.passed && report.violations.iter().any(|v| v.rule == "gate"));
}
