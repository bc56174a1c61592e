mod common;

use std::sync::Arc;

use axum::http::StatusCode;
use common::{harness, harness_with, Breaking, Client, ADMIN_TOKEN};
use serde_json::{json, Value};

#[tokio::test]
async fn groups_follow_the_catalog() {
    let h = harness(false);
    let client = Client::new(&h.platform);
    let first = client.get("/api/groups").await;
    assert_eq!(first.status, StatusCode::OK);
    assert!(first.header("content-type").starts_with("application/json"));
    let groups = first.json();
    let ids: Vec<&str> = groups
        .as_array()
        .unwrap()
        .iter()
        .map(|g| g["id"].as_str().unwrap())
        .collect();
    assert_eq!(
        ids,
        ["goals", "premises", "industries", "growth", "expectations"]
    );
    let population = &groups[0]["categories"][0];
    assert_eq!(population["id"], "population");
    let numbers: Vec<u64> = population["variables"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["number"].as_u64().unwrap())
        .collect();
    assert_eq!(numbers, [1, 25]);
    assert_eq!(client.get("/api/groups").await.body, first.body);
}

#[tokio::test]
async fn statistic_payload_and_provenance() {
    let h = harness(true);
    let client = Client::new(&h.platform);
    let r = client.get("/api/statistic/25").await;
    assert_eq!(r.status, StatusCode::OK);
    let body = r.json();
    assert_eq!(body["chart"]["kind"], "stacked_percent_column");
    assert_eq!(body["route"], "/statistic/25");
    assert_eq!(body["provenance"], json!({"population_by_age": 1}));
    assert_eq!(body["chart"]["provenance"], body["provenance"]);
    assert_eq!(
        body["related"],
        json!([{"number": 1, "title": "Total inhabitants"}])
    );
    assert_eq!(body["alternative_kinds"][0], "stacked_percent_column");
    assert_eq!(
        body["chart"]["x_ids"],
        json!(["ringerike", "hadeland", "kongsberg", "midt_buskerud"])
    );

    assert_eq!(
        client.get("/api/statistic/999999").await.status,
        StatusCode::NOT_FOUND
    );
    assert_eq!(
        client.get("/api/statistic/abc").await.status,
        StatusCode::NOT_FOUND
    );
}

#[tokio::test]
async fn provenance_names_every_loaded_source() {
    let h = harness(true);
    let client = Client::new(&h.platform);
    let v1 = client.get("/api/statistic/56").await.json();
    assert_eq!(
        v1["provenance"],
        json!({"housing_capacity": 1, "political_projection": 1, "ssb_projection": 1})
    );
}

#[tokio::test]
async fn missing_snapshot_is_503_with_source() {
    let h = harness(false);
    let client = Client::new(&h.platform);
    let r = client.get("/api/statistic/25").await;
    assert_eq!(r.status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(r.json()["error"]["source_id"], "population_by_age");
}

#[tokio::test]
async fn chart_kinds_and_filters() {
    let h = harness(true);
    let client = Client::new(&h.platform);

    let bad = client.get("/api/statistic/25/chart?kind=line").await;
    assert_eq!(bad.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(bad.json()["error"]["alternative_kinds"]
        .as_array()
        .unwrap()
        .contains(&json!("pie")));
    assert_eq!(
        client
            .get("/api/statistic/25/chart?kind=radar")
            .await
            .status,
        StatusCode::UNPROCESSABLE_ENTITY
    );
    assert_eq!(
        client.get("/api/statistic/25/chart?x=nope").await.status,
        StatusCode::UNPROCESSABLE_ENTITY
    );
    assert_eq!(
        client
            .get("/api/statistic/25/chart?filter=nope:x")
            .await
            .status,
        StatusCode::UNPROCESSABLE_ENTITY
    );
    assert_eq!(
        client
            .get("/api/statistic/25/chart?filter=region")
            .await
            .status,
        StatusCode::UNPROCESSABLE_ENTITY
    );

    // Detail view behind a region click.
    let detail = client
        .get("/api/statistic/25/chart?filter=region:Ringerike")
        .await;
    assert_eq!(detail.status, StatusCode::OK);
    let spec = detail.json();
    assert_eq!(spec["kind"], "column");
    assert_eq!(spec["x_dimension"], "age");
    assert_eq!(spec["series"].as_array().unwrap().len(), 1);
    assert_eq!(
        spec["series"][0]["values"],
        json!([2480.0, 5100.0, 2100.0, 12620.0, 12300.0, 6000.0, 2400.0])
    );

    let pie = client
        .get("/api/statistic/25/chart?kind=pie&filter=region:ringerike")
        .await;
    assert_eq!(pie.status, StatusCode::OK);
    assert_eq!(pie.json()["kind"], "pie");

    let drill = client
        .get("/api/statistic/25/chart?kind=column_drilldown")
        .await
        .json();
    assert_eq!(
        drill["drilldown"]["hadeland"],
        json!({"target": 25, "filter": {"region": "hadeland"}})
    );

    let hidden = client.get("/api/statistic/25/chart?hidden=80%2B").await;
    assert_eq!(hidden.status, StatusCode::OK);
    let series = hidden.json()["series"].clone();
    let last = series.as_array().unwrap().last().unwrap();
    assert_eq!(last["visible"], false);
    assert_eq!(
        client
            .get("/api/statistic/25/chart?hidden=nobody")
            .await
            .status,
        StatusCode::UNPROCESSABLE_ENTITY
    );
}

#[tokio::test]
async fn exports_and_table() {
    let h = harness(true);
    let client = Client::new(&h.platform);
    let csv = client.get("/api/statistic/25/export?format=csv").await;
    assert_eq!(csv.status, StatusCode::OK);
    assert_eq!(csv.header("content-type"), "text/csv; charset=utf-8");
    assert_eq!(
        csv.header("content-disposition"),
        "attachment; filename=\"statistic-25.csv\""
    );
    assert_eq!(
        csv.body,
        std::fs::read(common::fixtures().join("golden/statistic-25.csv")).unwrap()
    );

    let svg = client.get("/api/statistic/25/export?format=svg").await;
    assert_eq!(svg.header("content-type"), "image/svg+xml");
    assert_eq!(
        svg.header("content-disposition"),
        "attachment; filename=\"statistic-25.svg\""
    );

    let xls = client.get("/api/statistic/25/export?format=xls").await;
    assert_eq!(xls.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(xls.json()["error"]["supported"], json!(["csv", "svg"]));

    let table = client.get("/api/statistic/25/table").await.json();
    assert_eq!(table["headers"][0], "region");
    assert_eq!(
        table["rows"][0][0],
        json!({"type": "label", "value": "Ringerike region"})
    );
    assert_eq!(
        table["rows"][0][1],
        json!({"type": "value", "value": 2480.0})
    );
}

#[tokio::test]
async fn indicators_over_a_window() {
    let h = harness(true);
    let client = Client::new(&h.platform);
    let r = client.get("/api/indicators?from=2008&to=2018").await;
    assert_eq!(r.status, StatusCode::OK);
    let rows = r.json()["indicators"].clone();
    let value = |name: &str| {
        rows.as_array()
            .unwrap()
            .iter()
            .find(|row| row["indicator"] == name)
            .unwrap()["value"]
            .as_f64()
            .unwrap()
    };
    assert_eq!(value("employment"), 145.0);
    assert_eq!(value("jobs"), -321.0);
    assert_eq!(
        client.get("/api/indicators?from=2008").await.status,
        StatusCode::UNPROCESSABLE_ENTITY
    );
    let out_of_range = client.get("/api/indicators?from=1990&to=2018").await.json();
    assert!(out_of_range["indicators"]
        .as_array()
        .unwrap()
        .iter()
        .all(|r| r["status"] == "error"));
}

#[tokio::test]
async fn admin_refresh_requires_token() {
    let h = harness(false);
    let client = Client::new(&h.platform);
    let none = client.post("/api/admin/refresh/jobs", None, None).await;
    assert_eq!(none.status, StatusCode::UNAUTHORIZED);
    assert_eq!(none.header("www-authenticate"), "Bearer");
    assert_eq!(
        client
            .post("/api/admin/refresh/jobs", Some("wrong"), None)
            .await
            .status,
        StatusCode::UNAUTHORIZED
    );
    assert_eq!(
        client
            .post("/api/admin/refresh/nope", Some(ADMIN_TOKEN), None)
            .await
            .status,
        StatusCode::NOT_FOUND
    );

    let first = client
        .post("/api/admin/refresh/jobs", Some(ADMIN_TOKEN), None)
        .await;
    assert_eq!(first.status, StatusCode::OK);
    assert_eq!(
        first.json(),
        json!({"source_id": "jobs", "outcome": "new_version", "version": 1})
    );
    let again = client
        .post("/api/admin/refresh/jobs", Some(ADMIN_TOKEN), None)
        .await
        .json();
    assert_eq!(again["outcome"], "unchanged");
    assert_eq!(
        client
            .post("/api/admin/reload-snapshots", None, None)
            .await
            .status,
        StatusCode::UNAUTHORIZED
    );
}

#[tokio::test]
async fn health_reports_failures_and_keeps_last_good() {
    let transport = Arc::new(Breaking::new(&[]));
    let h = harness_with(transport.clone());
    let client = Client::new(&h.platform);

    let fresh = client.get("/healthz").await;
    assert_eq!(fresh.status, StatusCode::OK);
    assert_eq!(fresh.json()["status"], "ok");
    assert_eq!(fresh.json()["sources_fetched"], 0);

    assert_eq!(
        client
            .post(
                "/api/admin/refresh/population_by_age",
                Some(ADMIN_TOKEN),
                None
            )
            .await
            .status,
        StatusCode::OK
    );
    transport
        .broken
        .lock()
        .unwrap()
        .push("population_by_age".into());
    let failed = client
        .post(
            "/api/admin/refresh/population_by_age",
            Some(ADMIN_TOKEN),
            None,
        )
        .await;
    assert_eq!(failed.status, StatusCode::BAD_GATEWAY);

    let health = client.get("/healthz").await.json();
    let row = health["sources"]
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["source_id"] == "population_by_age")
        .unwrap()
        .clone();
    assert_eq!(row["consecutive_failures"], 1);
    assert_eq!(row["latest_version"], 1);
    assert!(row["last_error"].as_str().unwrap().contains("500"));
    assert_eq!(health["sources_fetched"], 1);
    // the last good snapshot still serves
    assert_eq!(client.get("/api/statistic/25").await.status, StatusCode::OK);
}

#[tokio::test]
async fn ui_shell_routes() {
    let h = harness(false);
    let client = Client::new(&h.platform);
    let page = client.get("/statistic/25").await;
    assert_eq!(page.status, StatusCode::OK);
    assert!(page.header("content-type").starts_with("text/html"));
    assert!(page.text().contains(r#"data-variable="25""#));
    assert_eq!(
        client.get("/statistic/999999").await.status,
        StatusCode::NOT_FOUND
    );
    assert_eq!(client.get("/").await.status, StatusCode::OK);
    assert_eq!(
        client.get("/assets/app.js").await.status,
        StatusCode::NOT_FOUND
    );
    assert_eq!(client.get("/nowhere").await.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn concurrent_reads_agree() {
    let h = harness(true);
    let client = Arc::new(Client::new(&h.platform));
    let tasks: Vec<_> = (0..32)
        .map(|i| {
            let client = Arc::clone(&client);
            tokio::spawn(async move {
                let uri = if i % 2 == 0 {
                    "/api/statistic/25"
                } else {
                    "/api/statistic/25/export?format=svg"
                };
                (i % 2, client.get(uri).await.body)
            })
        })
        .collect();
    let mut bodies: [Option<Vec<u8>>; 2] = [None, None];
    for t in tasks {
        let (kind, body) = t.await.unwrap();
        match &bodies[kind] {
            Some(b) => assert_eq!(b, &body),
            None => bodies[kind] = Some(body),
        }
    }
}

fn submission(i: usize, region: &str, outlook: &str) -> Value {
    json!({
        "org_number": format!("98{i:07}"),
        "business_name": format!("Secret Firm {i} AS"),
        "contact_email": format!("owner{i}@example.test"),
        "industry": "retail",
        "region": region,
        "answers": {"outlook": outlook, "hiring": "increase", "employees": 4 + i}
    })
}

#[tokio::test]
async fn survey_intake_never_leaks_identifiers() {
    let h = harness(true);
    let client = Client::new(&h.platform);
    let mut seeded = Vec::new();

    // six in ringerike, two in hadeland: hadeland stays below k = 5
    for i in 0..8 {
        let region = if i < 6 { "ringerike" } else { "hadeland" };
        let body = submission(i, region, ["better", "same", "worse"][i % 3]);
        for f in ["org_number", "business_name", "contact_email"] {
            seeded.push(body[f].as_str().unwrap().to_owned());
        }
        let r = client
            .post("/api/survey/responses", None, Some(&body.to_string()))
            .await;
        assert_eq!(r.status, StatusCode::ACCEPTED, "{}", r.text());
        assert!(r.json()["receipt"].as_str().unwrap().len() >= 32);
    }

    let missing_region = client
        .post(
            "/api/survey/responses",
            None,
            Some(r#"{"org_number":"981234567"}"#),
        )
        .await;
    assert_eq!(missing_region.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(missing_region.json()["error"]["path"], "region");
    let bad_identifier = client
        .post(
            "/api/survey/responses",
            None,
            Some(r#"{"org_number":981234567,"region":"ringerike"}"#),
        )
        .await;
    assert_eq!(bad_identifier.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(bad_identifier.json()["error"]["path"], "identifier");
    assert_eq!(
        client
            .post("/api/survey/responses", None, Some("{not json"))
            .await
            .status,
        StatusCode::UNPROCESSABLE_ENTITY
    );

    // nothing is published until the privacy pipeline runs
    let before = client.get("/api/statistic/57").await;
    assert_eq!(before.status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(
        client
            .post("/api/admin/survey/republish", None, None)
            .await
            .status,
        StatusCode::UNAUTHORIZED
    );
    let published = client
        .post("/api/admin/survey/republish", Some(ADMIN_TOKEN), None)
        .await;
    assert_eq!(published.status, StatusCode::OK, "{}", published.text());

    let stat = client.get("/api/statistic/57").await;
    assert_eq!(stat.status, StatusCode::OK, "{}", stat.text());
    let chart = stat.json()["chart"].clone();
    let regions: Vec<&str> = chart["x_ids"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(regions, ["hadeland", "ringerike"]);
    for series in chart["series"].as_array().unwrap() {
        assert_eq!(series["values"][0], Value::Null, "hadeland is suppressed");
        assert!(series["values"][1].is_number());
    }
    client.get("/api/statistic/57/export?format=csv").await;
    client.get("/api/statistic/57/export?format=svg").await;
    client.get("/api/statistic/57/table").await;
    client.get("/api/groups").await;
    client.get("/healthz").await;

    // the identified partition holds the raw submissions
    let raw = std::fs::read_to_string(h.dir.path().join("identified/responses.jsonl")).unwrap();
    assert_eq!(raw.lines().count(), 8);
    assert!(raw.contains("Secret Firm 0 AS"));
    client.assert_no_identifiers(&seeded);
}
