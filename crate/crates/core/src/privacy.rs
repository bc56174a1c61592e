//! Survey responses to publishable aggregates: schema-driven identifier
//! stripping, group-by aggregation, and minimum-count cell suppression.
//!
//! Only primary suppression is applied. Group totals are never published
//! next to their cells, so no complementary suppression is attempted.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::num::NonZeroU32;

use chrono::{DateTime, Utc};
use hmac::{Hmac, Mac};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::Sha256;

use crate::cube::{Category, DataCube, Dimension, DimensionRole};

/// Minimum respondents per published cell unless configured otherwise.
pub const DEFAULT_K: NonZeroU32 = match NonZeroU32::new(5) {
    Some(k) => k,
    None => unreachable!(),
};

/// Category used for members that left a group-by question unanswered.
pub const UNANSWERED: &str = "unanswered";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldClass {
    /// Directly identifies a respondent; never leaves the identified partition.
    Identifier,
    Attribute,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub class: FieldClass,
    #[serde(default)]
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuestionKind {
    Categorical { choices: Vec<String> },
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionSpec {
    pub id: String,
    pub label: String,
    #[serde(flatten)]
    pub kind: QuestionKind,
}

/// Submission schema. Identifier fields are flagged here, and stripping
/// follows the flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveySchema {
    pub fields: Vec<FieldSpec>,
    /// Field whose value keys the dedup pseudonym; falls back to the response id.
    pub dedup_field: Option<String>,
    pub regions: Vec<String>,
    pub questions: Vec<QuestionSpec>,
}

impl SurveySchema {
    /// Schema of the regional expectations survey.
    pub fn expectations(regions: Vec<String>) -> Self {
        let field = |name: &str, class, required| FieldSpec {
            name: name.into(),
            class,
            required,
        };
        let categorical = |id: &str, label: &str, choices: &[&str]| QuestionSpec {
            id: id.into(),
            label: label.into(),
            kind: QuestionKind::Categorical {
                choices: choices.iter().map(|c| (*c).to_owned()).collect(),
            },
        };
        Self {
            fields: vec![
                field("org_number", FieldClass::Identifier, true),
                field("business_name", FieldClass::Identifier, false),
                field("contact_email", FieldClass::Identifier, false),
                field("industry", FieldClass::Attribute, false),
            ],
            dedup_field: Some("org_number".into()),
            regions,
            questions: vec![
                categorical(
                    "outlook",
                    "Expected market outlook next 12 months",
                    &["better", "same", "worse"],
                ),
                categorical(
                    "hiring",
                    "Expected change in staff",
                    &["increase", "unchanged", "decrease"],
                ),
                categorical("investment_plans", "Planned investments", &["yes", "no"]),
                QuestionSpec {
                    id: "employees".into(),
                    label: "Number of employees".into(),
                    kind: QuestionKind::Numeric,
                },
                QuestionSpec {
                    id: "revenue_change_pct".into(),
                    label: "Expected revenue change (%)".into(),
                    kind: QuestionKind::Numeric,
                },
            ],
        }
    }

    pub fn identifier_fields(&self) -> impl Iterator<Item = &str> {
        self.fields
            .iter()
            .filter(|f| f.class == FieldClass::Identifier)
            .map(|f| f.name.as_str())
    }

    fn is_identifier(&self, name: &str) -> bool {
        self.identifier_fields().any(|f| f == name) || name == "response_id"
    }

    pub fn question(&self, id: &str) -> Option<&QuestionSpec> {
        self.questions.iter().find(|q| q.id == id)
    }

    /// Validate a submission body (`{"region": .., "answers": {..}, <fields>..}`).
    pub fn validate_submission(
        &self,
        body: &Value,
        response_id: String,
        received_at: DateTime<Utc>,
    ) -> Result<SurveyResponse, SchemaError> {
        let err = |path: &str, reason: &str| SchemaError {
            path: path.to_owned(),
            reason: reason.to_owned(),
        };
        let obj = body
            .as_object()
            .ok_or_else(|| err("$", "must be an object"))?;
        for key in obj.keys() {
            let known =
                key == "region" || key == "answers" || self.fields.iter().any(|f| &f.name == key);
            if !known {
                return Err(err(key, "unknown field"));
            }
        }
        let region = obj
            .get("region")
            .ok_or_else(|| err("region", "missing"))?
            .as_str()
            .ok_or_else(|| err("region", "must be a string"))?;
        if !self.regions.iter().any(|r| r == region) {
            return Err(err("region", "unknown region"));
        }
        let mut fields = BTreeMap::new();
        for spec in &self.fields {
            match obj.get(&spec.name) {
                None | Some(Value::Null) if spec.required => {
                    return Err(err(&spec.name, "missing"))
                }
                None | Some(Value::Null) => {}
                Some(Value::String(s)) if s.is_empty() && spec.required => {
                    return Err(err(&spec.name, "must not be empty"))
                }
                Some(Value::String(s)) => {
                    fields.insert(spec.name.clone(), s.clone());
                }
                Some(_) => return Err(err(&spec.name, "must be a string")),
            }
        }
        let mut answers = BTreeMap::new();
        if let Some(a) = obj.get("answers") {
            let a = a
                .as_object()
                .ok_or_else(|| err("answers", "must be an object"))?;
            for (qid, v) in a {
                let path = format!("answers.{qid}");
                let q = self
                    .question(qid)
                    .ok_or_else(|| err(&path, "unknown question"))?;
                let answer = match (&q.kind, v) {
                    (QuestionKind::Categorical { choices }, Value::String(s)) => {
                        if !choices.contains(s) {
                            return Err(err(&path, "not one of the allowed choices"));
                        }
                        Answer::Choice(s.clone())
                    }
                    (QuestionKind::Numeric, Value::Number(n)) => {
                        let x = n
                            .as_f64()
                            .filter(|x| x.is_finite())
                            .ok_or_else(|| err(&path, "not finite"))?;
                        Answer::Number(x)
                    }
                    (QuestionKind::Categorical { .. }, _) => {
                        return Err(err(&path, "must be a string choice"))
                    }
                    (QuestionKind::Numeric, _) => return Err(err(&path, "must be a number")),
                };
                answers.insert(qid.clone(), answer);
            }
        }
        Ok(SurveyResponse {
            response_id,
            region: region.to_owned(),
            received_at,
            fields,
            answers,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{path}: {reason}")]
pub struct SchemaError {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Answer {
    Choice(String),
    Number(f64),
}

/// A survey submission as received, identifiers included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub response_id: String,
    pub region: String,
    pub received_at: DateTime<Utc>,
    /// Top-level schema fields (identifier and attribute).
    pub fields: BTreeMap<String, String>,
    pub answers: BTreeMap<String, Answer>,
}

impl SurveyResponse {
    pub fn org_number(&self) -> Option<&str> {
        self.fields.get("org_number").map(String::as_str)
    }

    pub fn business_name(&self) -> Option<&str> {
        self.fields.get("business_name").map(String::as_str)
    }

    /// Every identifier value carried by this response.
    pub fn identifier_values<'a>(
        &'a self,
        schema: &'a SurveySchema,
    ) -> impl Iterator<Item = &'a str> + 'a {
        core::iter::once(self.response_id.as_str()).chain(
            self.fields
                .iter()
                .filter(|(k, _)| schema.is_identifier(k))
                .map(|(_, v)| v.as_str()),
        )
    }
}

/// A response with identifier fields removed and its id pseudonymized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeidentifiedResponse {
    pub pseudonym: String,
    pub region: String,
    pub received_at: DateTime<Utc>,
    pub fields: BTreeMap<String, String>,
    pub answers: BTreeMap<String, Answer>,
}

/// Secret salt for keyed pseudonyms.
#[derive(Clone)]
pub struct PseudonymKey(Vec<u8>);

impl PseudonymKey {
    pub fn new(secret: impl Into<Vec<u8>>) -> Self {
        Self(secret.into())
    }

    fn pseudonym(&self, field: &str, value: &str) -> String {
        let mut mac = Hmac::<Sha256>::new_from_slice(&self.0).expect("HMAC accepts any key length");
        mac.update(field.as_bytes());
        mac.update(&[0]);
        mac.update(value.as_bytes());
        hex::encode(mac.finalize().into_bytes())
    }
}

impl core::fmt::Debug for PseudonymKey {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str("PseudonymKey(..)")
    }
}

pub trait Deidentify {
    fn deidentify(&self, schema: &SurveySchema, key: &PseudonymKey) -> DeidentifiedResponse;
}

impl Deidentify for SurveyResponse {
    fn deidentify(&self, schema: &SurveySchema, key: &PseudonymKey) -> DeidentifiedResponse {
        let pseudonym = match schema
            .dedup_field
            .as_deref()
            .and_then(|f| self.fields.get(f).filter(|v| !v.is_empty()).map(|v| (f, v)))
        {
            Some((field, value)) => key.pseudonym(field, value),
            None => key.pseudonym("response_id", &self.response_id),
        };
        DeidentifiedResponse {
            pseudonym,
            region: self.region.clone(),
            received_at: self.received_at,
            fields: self
                .fields
                .iter()
                .filter(|(k, _)| !schema.is_identifier(k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
            answers: self.answers.clone(),
        }
    }
}

impl Deidentify for DeidentifiedResponse {
    fn deidentify(&self, schema: &SurveySchema, _key: &PseudonymKey) -> DeidentifiedResponse {
        let mut out = self.clone();
        out.fields.retain(|k, _| !schema.is_identifier(k));
        out
    }
}

/// Keep only the latest submission per pseudonym, ordered by pseudonym.
pub fn dedup_latest(responses: Vec<DeidentifiedResponse>) -> Vec<DeidentifiedResponse> {
    let mut latest: BTreeMap<String, DeidentifiedResponse> = BTreeMap::new();
    for r in responses {
        match latest.get(&r.pseudonym) {
            Some(prev) if prev.received_at > r.received_at => {}
            _ => {
                latest.insert(r.pseudonym.clone(), r);
            }
        }
    }
    latest.into_values().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "by", content = "id", rename_all = "snake_case")]
pub enum GroupBy {
    Region,
    Question(String),
}

impl GroupBy {
    pub fn name(&self) -> &str {
        match self {
            GroupBy::Region => "region",
            GroupBy::Question(q) => q,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "stat", rename_all = "snake_case")]
pub enum Statistic {
    /// Members who answered the question.
    Count,
    /// Mean of a numeric answer over members who answered.
    Mean,
    /// Percentage of answering members who picked `choice`.
    Share { choice: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Measure {
    pub question: String,
    #[serde(flatten)]
    pub statistic: Statistic,
}

impl Measure {
    pub fn label(&self) -> String {
        match &self.statistic {
            Statistic::Count => format!("count:{}", self.question),
            Statistic::Mean => format!("mean:{}", self.question),
            Statistic::Share { choice } => format!("share:{}={choice}", self.question),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregationPlan {
    pub group_by: Vec<GroupBy>,
    pub measures: Vec<Measure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateCell {
    pub key: Vec<String>,
    /// Respondents in the cell; withheld once suppressed.
    pub count: Option<u64>,
    /// One value per plan measure; empty once suppressed.
    pub measures: Vec<Option<f64>>,
    pub suppressed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateTable {
    pub group_by: Vec<GroupBy>,
    pub measures: Vec<Measure>,
    pub cells: Vec<AggregateCell>,
    /// Threshold applied by [`suppress`]; `None` until then.
    pub k_threshold: Option<NonZeroU32>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PrivacyError {
    #[error("plan must group by at least one dimension")]
    EmptyGroupBy,
    #[error("plan must compute at least one measure")]
    EmptyMeasures,
    #[error("unknown question `{0}`")]
    UnknownQuestion(String),
    #[error("cannot group by numeric question `{0}`")]
    NumericGroupBy(String),
    #[error("cannot group by `{0}` twice")]
    DuplicateGroupBy(String),
    #[error("measure `{0}` does not fit its question type")]
    MeasureMismatch(String),
    #[error("table has not been through suppression")]
    NotSuppressed,
    #[error("residual identifier `{0}` found in aggregate output")]
    ResidualIdentifier(String),
}

fn check_plan(plan: &AggregationPlan, schema: &SurveySchema) -> Result<(), PrivacyError> {
    if plan.group_by.is_empty() {
        return Err(PrivacyError::EmptyGroupBy);
    }
    if plan.measures.is_empty() {
        return Err(PrivacyError::EmptyMeasures);
    }
    let mut seen = BTreeSet::new();
    for g in &plan.group_by {
        if !seen.insert(g.name()) {
            return Err(PrivacyError::DuplicateGroupBy(g.name().to_owned()));
        }
        if let GroupBy::Question(q) = g {
            match schema.question(q).map(|q| &q.kind) {
                None => return Err(PrivacyError::UnknownQuestion(q.clone())),
                Some(QuestionKind::Numeric) => return Err(PrivacyError::NumericGroupBy(q.clone())),
                Some(QuestionKind::Categorical { .. }) => {}
            }
        }
    }
    for m in &plan.measures {
        let q = schema
            .question(&m.question)
            .ok_or_else(|| PrivacyError::UnknownQuestion(m.question.clone()))?;
        let fits = match (&m.statistic, &q.kind) {
            (Statistic::Count, _) => true,
            (Statistic::Mean, QuestionKind::Numeric) => true,
            (Statistic::Share { choice }, QuestionKind::Categorical { choices }) => {
                choices.contains(choice)
            }
            _ => false,
        };
        if !fits {
            return Err(PrivacyError::MeasureMismatch(m.label()));
        }
    }
    Ok(())
}

/// One cell per observed group-by key (in key order) with counts and
/// measures over its members. Nothing is suppressed yet.
pub fn aggregate_survey(
    responses: &[DeidentifiedResponse],
    plan: &AggregationPlan,
    schema: &SurveySchema,
) -> Result<AggregateTable, PrivacyError> {
    check_plan(plan, schema)?;
    let mut groups: BTreeMap<Vec<String>, Vec<&DeidentifiedResponse>> = BTreeMap::new();
    for r in responses {
        let key = plan
            .group_by
            .iter()
            .map(|g| match g {
                GroupBy::Region => r.region.clone(),
                GroupBy::Question(q) => match r.answers.get(q) {
                    Some(Answer::Choice(c)) => c.clone(),
                    _ => UNANSWERED.to_owned(),
                },
            })
            .collect();
        groups.entry(key).or_default().push(r);
    }
    let cells = groups
        .into_iter()
        .map(|(key, members)| AggregateCell {
            key,
            count: Some(members.len() as u64),
            measures: plan.measures.iter().map(|m| measure(m, &members)).collect(),
            suppressed: false,
        })
        .collect();
    Ok(AggregateTable {
        group_by: plan.group_by.clone(),
        measures: plan.measures.clone(),
        cells,
        k_threshold: None,
    })
}

fn measure(m: &Measure, members: &[&DeidentifiedResponse]) -> Option<f64> {
    let answers = members.iter().filter_map(|r| r.answers.get(&m.question));
    match &m.statistic {
        Statistic::Count => Some(answers.count() as f64),
        Statistic::Mean => {
            let (sum, n) = answers
                .filter_map(|a| match a {
                    Answer::Number(x) => Some(*x),
                    Answer::Choice(_) => None,
                })
                .fold((0.0, 0u64), |(s, n), x| (s + x, n + 1));
            (n > 0).then(|| sum / n as f64)
        }
        Statistic::Share { choice } => {
            let (hits, n) = answers.fold((0u64, 0u64), |(h, n), a| {
                (
                    h + u64::from(matches!(a, Answer::Choice(c) if c == choice)),
                    n + 1,
                )
            });
            (n > 0).then(|| hits as f64 / n as f64 * 100.0)
        }
    }
}

/// Withhold every cell with fewer than `k` respondents.
pub fn suppress(table: &AggregateTable, k: NonZeroU32) -> AggregateTable {
    let threshold = u64::from(k.get());
    let cells = table
        .cells
        .iter()
        .map(|c| {
            let below = c.suppressed || c.count.is_none_or(|n| n < threshold);
            if below {
                AggregateCell {
                    key: c.key.clone(),
                    count: None,
                    measures: Vec::new(),
                    suppressed: true,
                }
            } else {
                c.clone()
            }
        })
        .collect();
    AggregateTable {
        group_by: table.group_by.clone(),
        measures: table.measures.clone(),
        cells,
        k_threshold: Some(table.k_threshold.map_or(k, |prev| prev.max(k))),
    }
}

/// Label of the trailing measure dimension in published cubes.
pub const MEASURE_DIMENSION: &str = "measure";

/// Cube over the group-by dimensions plus a trailing `measure` dimension
/// (`count`, then one entry per plan measure). Suppressed and unobserved
/// combinations are missing.
pub fn publish(table: &AggregateTable, schema: &SurveySchema) -> Result<DataCube, PrivacyError> {
    let k = table.k_threshold.ok_or(PrivacyError::NotSuppressed)?;
    let identifier_names: BTreeSet<&str> = schema
        .identifier_fields()
        .chain(core::iter::once("response_id"))
        .collect();
    let residual = |s: &str| {
        identifier_names
            .contains(s)
            .then(|| PrivacyError::ResidualIdentifier(s.to_owned()))
    };
    for g in &table.group_by {
        if let Some(e) = residual(g.name()) {
            return Err(e);
        }
    }
    for m in &table.measures {
        if let Some(e) = residual(&m.question) {
            return Err(e);
        }
    }
    for c in &table.cells {
        for part in &c.key {
            if let Some(e) = residual(part) {
                return Err(e);
            }
        }
        if !c.suppressed && c.count.is_none_or(|n| n < u64::from(k.get())) {
            return Err(PrivacyError::NotSuppressed);
        }
    }

    let mut dimensions = Vec::with_capacity(table.group_by.len() + 1);
    for (i, g) in table.group_by.iter().enumerate() {
        let observed: BTreeSet<&str> = table.cells.iter().map(|c| c.key[i].as_str()).collect();
        let categories = if observed.is_empty() {
            vec![Category::new(UNANSWERED, UNANSWERED)]
        } else {
            observed.into_iter().map(|c| Category::new(c, c)).collect()
        };
        let dim = Dimension::new(g.name(), g.name(), categories).expect("distinct observed keys");
        let role = matches!(g, GroupBy::Region).then_some(DimensionRole::Geo);
        dimensions.push(dim.with_role(role));
    }
    let mut measure_cats = vec![Category::new("count", "respondents")];
    measure_cats.extend(table.measures.iter().map(|m| {
        let l = m.label();
        Category::new(l.clone(), l)
    }));
    let n_measures = measure_cats.len();
    dimensions.push(
        Dimension::new(MEASURE_DIMENSION, MEASURE_DIMENSION, measure_cats)
            .expect("measure labels are distinct")
            .with_role(Some(DimensionRole::Metric)),
    );

    let mut values = vec![None; dimensions.iter().map(Dimension::len).product()];
    for c in table.cells.iter().filter(|c| !c.suppressed) {
        let mut offset = 0;
        for (i, part) in c.key.iter().enumerate() {
            offset = offset * dimensions[i].len() + dimensions[i].position(part).expect("observed");
        }
        let base = offset * n_measures;
        values[base] = c.count.map(|n| n as f64);
        for (j, v) in c.measures.iter().enumerate() {
            values[base + 1 + j] = *v;
        }
    }
    DataCube::new(dimensions, values).map_err(|e| PrivacyError::ResidualIdentifier(e.to_string()))
}

/// Deidentify, dedup, aggregate, suppress and publish in one go, then scan
/// every text member of the result for identifier values of the input.
pub fn publish_survey(
    responses: &[SurveyResponse],
    plan: &AggregationPlan,
    schema: &SurveySchema,
    k: NonZeroU32,
    key: &PseudonymKey,
) -> Result<DataCube, PrivacyError> {
    let stripped = dedup_latest(
        responses
            .iter()
            .map(|r| r.deidentify(schema, key))
            .collect(),
    );
    let table = aggregate_survey(&stripped, plan, schema)?;
    let cube = publish(&suppress(&table, k), schema)?;

    let identifiers: BTreeSet<&str> = responses
        .iter()
        .flat_map(|r| r.identifier_values(schema))
        .filter(|v| !v.is_empty())
        .collect();
    let mut texts: Vec<&str> = Vec::new();
    for d in cube.dimensions() {
        texts.push(d.id());
        texts.push(d.label());
        for c in d.categories() {
            texts.push(&c.id);
            texts.push(&c.label);
        }
    }
    texts.extend(cube.unit());
    for t in texts {
        if let Some(hit) = identifiers.iter().find(|id| t.contains(**id)) {
            return Err(PrivacyError::ResidualIdentifier((*hit).to_owned()));
        }
    }
    Ok(cube)
}
