//! Disclosure-control properties over generated response sets.

use std::num::NonZeroU32;

use barometer_core::privacy::{
    aggregate_survey, dedup_latest, publish, publish_survey, suppress, AggregationPlan, Deidentify,
    GroupBy, Measure, PseudonymKey, Statistic, SurveyResponse, SurveySchema,
};
use chrono::DateTime;
use proptest::prelude::*;
use serde_json::json;

const REGIONS: [&str; 3] = ["ringerike", "hole", "jevnaker"];
const OUTLOOK: [&str; 3] = ["better", "same", "worse"];
const HIRING: [&str; 3] = ["increase", "unchanged", "decrease"];

fn schema() -> SurveySchema {
    SurveySchema::expectations(REGIONS.iter().map(|r| r.to_string()).collect())
}

/// Generated respondent; identifiers carry a recognizable token.
#[derive(Debug, Clone)]
struct Respondent {
    org: u32,
    region: usize,
    outlook: Option<usize>,
    hiring: Option<usize>,
    employees: Option<u16>,
}

fn respondent() -> impl Strategy<Value = Respondent> {
    (
        0u32..40,
        0usize..3,
        prop::option::of(0usize..3),
        prop::option::of(0usize..3),
        prop::option::of(0u16..500),
    )
        .prop_map(|(org, region, outlook, hiring, employees)| Respondent {
            org,
            region,
            outlook,
            hiring,
            employees,
        })
}

fn org_token(org: u32) -> String {
    format!("9{:08}", 10_000_000 + org * 7919)
}

fn submit(i: usize, r: &Respondent) -> SurveyResponse {
    let mut answers = serde_json::Map::new();
    if let Some(o) = r.outlook {
        answers.insert("outlook".into(), json!(OUTLOOK[o]));
    }
    if let Some(h) = r.hiring {
        answers.insert("hiring".into(), json!(HIRING[h]));
    }
    if let Some(e) = r.employees {
        answers.insert("employees".into(), json!(e));
    }
    let body = json!({
        "org_number": org_token(r.org),
        "business_name": format!("Firm{}Secret AS", r.org),
        "contact_email": format!("owner{}@firm.example", r.org),
        "region": REGIONS[r.region],
        "answers": answers,
    });
    schema()
        .validate_submission(
            &body,
            format!("resp-{i:05}"),
            DateTime::from_timestamp(1_600_000_000 + i as i64, 0).unwrap(),
        )
        .unwrap()
}

fn plan(choice: usize) -> AggregationPlan {
    let group_by = match choice {
        0 => vec![GroupBy::Region],
        1 => vec![GroupBy::Question("outlook".into())],
        _ => vec![GroupBy::Region, GroupBy::Question("hiring".into())],
    };
    AggregationPlan {
        group_by,
        measures: vec![
            Measure {
                question: "employees".into(),
                statistic: Statistic::Mean,
            },
            Measure {
                question: "outlook".into(),
                statistic: Statistic::Share {
                    choice: "better".into(),
                },
            },
        ],
    }
}

proptest! {
    #[test]
    fn published_cells_respect_k_and_leak_nothing(
        people in prop::collection::vec(respondent(), 0..80),
        k in 1u32..8,
        plan_choice in 0usize..3,
    ) {
        let responses: Vec<SurveyResponse> = people.iter().enumerate().map(|(i, r)| submit(i, r)).collect();
        let key = PseudonymKey::new(*b"property-test-key");
        let k = NonZeroU32::new(k).unwrap();
        let cube = publish_survey(&responses, &plan(plan_choice), &schema(), k, &key).unwrap();

        let bytes = serde_json::to_string(&cube).unwrap();
        for r in &responses {
            for id in r.identifier_values(&schema()) {
                prop_assert!(!bytes.contains(id), "identifier {id} leaked");
            }
        }
        for name in ["org_number", "business_name", "contact_email", "response_id", "Secret", "@firm"] {
            prop_assert!(!bytes.contains(name));
        }
        // measure dimension is last; its first category is the respondent count
        let m = *cube.shape().last().unwrap();
        for chunk in cube.values().chunks(m) {
            match chunk[0] {
                Some(count) => prop_assert!(count >= f64::from(k.get())),
                None => prop_assert!(chunk.iter().all(Option::is_none)),
            }
        }
    }

    #[test]
    fn counts_never_exceed_responses(people in prop::collection::vec(respondent(), 0..80), k in 1u32..8, plan_choice in 0usize..3) {
        let s = schema();
        let key = PseudonymKey::new(*b"k");
        let responses: Vec<SurveyResponse> = people.iter().enumerate().map(|(i, r)| submit(i, r)).collect();
        let stripped = dedup_latest(responses.iter().map(|r| r.deidentify(&s, &key)).collect());
        let table = aggregate_survey(&stripped, &plan(plan_choice), &s).unwrap();
        let kept = suppress(&table, NonZeroU32::new(k).unwrap());
        let total: u64 = kept.cells.iter().filter_map(|c| c.count).sum();
        prop_assert!(total <= stripped.len() as u64);
        if k == 1 {
            prop_assert_eq!(total, stripped.len() as u64);
        }
        for c in &kept.cells {
            prop_assert!(c.suppressed || c.count.unwrap() >= u64::from(k));
        }
        prop_assert!(publish(&kept, &s).is_ok());
    }

    #[test]
    fn deidentify_is_idempotent(people in prop::collection::vec(respondent(), 1..10)) {
        let s = schema();
        let key = PseudonymKey::new(*b"k");
        for (i, p) in people.iter().enumerate() {
            let once = submit(i, p).deidentify(&s, &key);
            prop_assert_eq!(once.deidentify(&s, &key), once);
        }
    }
}
