//! Runs the JSON-stat conformance fixtures under `fixtures/jsonstat`.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use barometer_core::cube::DimensionRole;
use barometer_core::jsonstat::parse_jsonstat;
use serde::Deserialize;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/jsonstat")
}

#[derive(Deserialize)]
struct ExpectedDimension {
    id: String,
    categories: Vec<String>,
    labels: Option<Vec<String>>,
    role: Option<DimensionRole>,
}

#[derive(Deserialize)]
struct Expected {
    dimensions: Vec<ExpectedDimension>,
    values: Vec<Option<f64>>,
    unit: Option<String>,
    updated_at: Option<chrono::DateTime<chrono::Utc>>,
}

#[test]
fn valid_fixtures_parse_to_expected_cubes() {
    let dir = root().join("valid");
    let mut checked = 0;
    let mut names: Vec<_> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    names.sort();
    for path in names {
        let name = path.file_name().unwrap().to_str().unwrap().to_owned();
        if name.ends_with(".expected.json") {
            continue;
        }
        let cube = parse_jsonstat(&fs::read_to_string(&path).unwrap())
            .unwrap_or_else(|e| panic!("{name}: {e}"));
        let expected: Expected = serde_json::from_str(
            &fs::read_to_string(path.with_extension("expected.json")).unwrap(),
        )
        .unwrap();

        assert_eq!(cube.dimensions().len(), expected.dimensions.len(), "{name}");
        for (got, want) in cube.dimensions().iter().zip(&expected.dimensions) {
            assert_eq!(got.id(), want.id, "{name}");
            let ids: Vec<&str> = got.categories().iter().map(|c| c.id.as_str()).collect();
            assert_eq!(ids, want.categories, "{name}");
            if let Some(labels) = &want.labels {
                let got_labels: Vec<&str> =
                    got.categories().iter().map(|c| c.label.as_str()).collect();
                assert_eq!(&got_labels, labels, "{name}");
            }
            assert_eq!(got.role(), want.role, "{name}: role of {}", want.id);
        }
        assert_eq!(cube.values(), expected.values.as_slice(), "{name}");
        assert_eq!(cube.unit(), expected.unit.as_deref(), "{name}");
        assert_eq!(cube.updated_at(), expected.updated_at, "{name}");
        checked += 1;
    }
    assert!(checked >= 10, "only {checked} valid fixtures");
}

#[test]
fn malformed_fixtures_name_the_offending_member() {
    let dir = root().join("malformed");
    let expected: BTreeMap<String, String> =
        serde_json::from_str(&fs::read_to_string(dir.join("expected_paths.json")).unwrap())
            .unwrap();
    assert!(expected.len() >= 5);
    for (file, path) in &expected {
        let err = parse_jsonstat(&fs::read_to_string(dir.join(file)).unwrap()).unwrap_err();
        assert_eq!(&err.path, path, "{file}: {err}");
    }
}
