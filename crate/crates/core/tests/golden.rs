use std::path::PathBuf;

use lgt_core::adversaries::{gen_alternating, gen_comb, gen_star, instance_to_json, load_instance, save_instance};
use lgt_core::harness::{report, run, InstanceSource, ReportFormat, RunConfig};
use lgt_core::verify::{check_potential_inequality, potential_tolerance};
use lgt_core::{LgtError, PolicyKind};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

#[test]
fn fixtures_match_generators() {
    let cases = [
        ("star_3_5.json", gen_star(3, 5).unwrap()),
        ("comb_2_10.json", gen_comb(2, 10).unwrap()),
        ("alternating_8.json", gen_alternating(8).unwrap()),
    ];
    for (file, generated) in cases {
        let loaded = load_instance(fixture(file)).unwrap();
        assert_eq!(loaded, generated, "{file}");
        let bytes = std::fs::read_to_string(fixture(file)).unwrap();
        assert_eq!(bytes, instance_to_json(&generated), "{file}");
    }
}

#[test]
fn fixtures_stay_within_potential() {
    for file in ["star_3_5.json", "comb_2_10.json", "alternating_8.json"] {
        let inst = load_instance(fixture(file)).unwrap();
        let tr = run(InstanceSource::Offline(&inst), &RunConfig::new(PolicyKind::Entropic)).unwrap();
        assert!(check_potential_inequality(&tr).unwrap() >= -potential_tolerance(&tr), "{file}");
    }
}

#[test]
fn serialized_replay_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let generated = gen_comb(5, 80).unwrap();
    let path = dir.path().join("comb.json");
    save_instance(&generated, &path).unwrap();
    let loaded = load_instance(&path).unwrap();
    let cfg = RunConfig::new(PolicyKind::Entropic);
    let a = run(InstanceSource::Offline(&generated), &cfg).unwrap();
    let b = run(InstanceSource::Offline(&loaded), &cfg).unwrap();
    assert_eq!(a, b);

    let (pa, pb) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    report(&[a], ReportFormat::Csv, &pa).unwrap();
    report(&[b], ReportFormat::Csv, &pb).unwrap();
    assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap());
}

#[test]
fn malformed_files_are_located() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"name":"x","width":3,"seed":null,"layers":[[[1,0],[2,0]],[[3,1],[4,9]]]}"#,
    )
    .unwrap();
    match load_instance(&path) {
        Err(LgtError::InvalidInstance { layer: 2, entry: 1, field: "parent", .. }) => {}
        other => panic!("unexpected {other:?}"),
    }
    std::fs::write(&path, "{\"name\": \"x\",\n \"width\": }").unwrap();
    assert!(matches!(load_instance(&path), Err(LgtError::Parse { line: 2, .. })));
    assert!(matches!(load_instance(dir.path().join("missing.json")), Err(LgtError::Io(_))));
    std::fs::write(&path, r#"{"name":"x","width":1,"seed":null,"layers":[[[1,0],[2,0]]]}"#).unwrap();
    assert!(matches!(load_instance(&path), Err(LgtError::InvalidInstance { field: "width", .. })));
}
