//! Recipes: declarative pipelines that turn stored snapshots into the cube
//! behind a variable, plus net-change growth indicators.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cube::{ArithOp, CubeError, DataCube, Dimension, DimensionRole};
use crate::ingest::SnapshotSource;

/// Snapshot version used per source.
pub type Provenance = BTreeMap<String, u32>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub id: String,
    pub members: Vec<String>,
}

/// One pipeline step. Every step except `Output` binds its result to `into`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum Step {
    Load {
        source: String,
        into: String,
    },
    Slice {
        from: String,
        keep: BTreeMap<String, Vec<String>>,
        into: String,
    },
    Aggregate {
        from: String,
        dimension: String,
        groups: Vec<Group>,
        into: String,
    },
    Combine {
        from: Vec<String>,
        dimension: Dimension,
        into: String,
    },
    Arith {
        left: String,
        right: String,
        op: ArithOp,
        into: String,
    },
    Output {
        from: String,
    },
}

impl Step {
    fn inputs(&self) -> Vec<&str> {
        match self {
            Step::Load { .. } => Vec::new(),
            Step::Slice { from, .. } | Step::Aggregate { from, .. } | Step::Output { from } => {
                alloc::vec![from.as_str()]
            }
            Step::Combine { from, .. } => from.iter().map(String::as_str).collect(),
            Step::Arith { left, right, .. } => alloc::vec![left.as_str(), right.as_str()],
        }
    }

    fn output(&self) -> Option<&str> {
        match self {
            Step::Load { into, .. }
            | Step::Slice { into, .. }
            | Step::Aggregate { into, .. }
            | Step::Combine { into, .. }
            | Step::Arith { into, .. } => Some(into),
            Step::Output { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recipe {
    pub id: String,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalErrorKind {
    #[error("recipe has no steps")]
    Empty,
    #[error("first step must load a source")]
    FirstNotLoad,
    #[error("binding `{0}` is used before it is produced")]
    UndefinedBinding(String),
    #[error("recipe needs exactly one output step, found {0}")]
    OutputCount(usize),
    #[error("output must be the last step")]
    OutputNotLast,
    #[error("combine needs at least one input")]
    EmptyCombine,
    #[error("no snapshot available for source `{0}`")]
    MissingSource(String),
    #[error(transparent)]
    Cube(#[from] CubeError),
}

/// Evaluation failure at a given step (0-based).
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("recipe `{recipe}` step {step}: {kind}")]
pub struct EvalError {
    pub recipe: String,
    pub step: usize,
    pub kind: EvalErrorKind,
}

impl EvalError {
    /// Source id when evaluation failed for lack of a snapshot.
    pub fn missing_source(&self) -> Option<&str> {
        match &self.kind {
            EvalErrorKind::MissingSource(s) => Some(s),
            _ => None,
        }
    }
}

impl Recipe {
    pub fn sources(&self) -> BTreeSet<&str> {
        self.steps
            .iter()
            .filter_map(|s| match s {
                Step::Load { source, .. } => Some(source.as_str()),
                _ => None,
            })
            .collect()
    }

    /// Structural checks: linear dataflow, first step loads, one final output.
    pub fn validate(&self) -> Result<(), EvalError> {
        let err = |step, kind| EvalError {
            recipe: self.id.clone(),
            step,
            kind,
        };
        match self.steps.first() {
            None => return Err(err(0, EvalErrorKind::Empty)),
            Some(Step::Load { .. }) => {}
            Some(_) => return Err(err(0, EvalErrorKind::FirstNotLoad)),
        }
        let outputs = self
            .steps
            .iter()
            .filter(|s| matches!(s, Step::Output { .. }))
            .count();
        if outputs != 1 {
            return Err(err(
                self.steps.len() - 1,
                EvalErrorKind::OutputCount(outputs),
            ));
        }
        let mut bound = BTreeSet::new();
        for (i, step) in self.steps.iter().enumerate() {
            if matches!(step, Step::Combine { from, .. } if from.is_empty()) {
                return Err(err(i, EvalErrorKind::EmptyCombine));
            }
            for input in step.inputs() {
                if !bound.contains(input) {
                    return Err(err(i, EvalErrorKind::UndefinedBinding(input.to_owned())));
                }
            }
            if let Some(out) = step.output() {
                bound.insert(out);
            } else if i + 1 != self.steps.len() {
                return Err(err(i, EvalErrorKind::OutputNotLast));
            }
        }
        Ok(())
    }
}

/// An evaluated cube and the snapshot versions it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluated {
    pub cube: DataCube,
    pub provenance: Provenance,
}

/// Evaluate against the latest snapshot of every loaded source.
pub fn evaluate<S: SnapshotSource + ?Sized>(
    recipe: &Recipe,
    store: &S,
) -> Result<Evaluated, EvalError> {
    run(recipe, store, None)
}

/// Evaluate against pinned snapshot versions; sources absent from `pins`
/// use their latest version.
pub fn evaluate_pinned<S: SnapshotSource + ?Sized>(
    recipe: &Recipe,
    store: &S,
    pins: &Provenance,
) -> Result<Evaluated, EvalError> {
    run(recipe, store, Some(pins))
}

fn run<S: SnapshotSource + ?Sized>(
    recipe: &Recipe,
    store: &S,
    pins: Option<&Provenance>,
) -> Result<Evaluated, EvalError> {
    recipe.validate()?;
    let mut bindings: BTreeMap<&str, DataCube> = BTreeMap::new();
    let mut provenance = Provenance::new();

    for (i, step) in recipe.steps.iter().enumerate() {
        let fail = |kind: EvalErrorKind| EvalError {
            recipe: recipe.id.clone(),
            step: i,
            kind,
        };
        // validate() guarantees every input is bound
        let get = |name: &str| &bindings[name];
        let produced = match step {
            Step::Load { source, .. } => {
                let snap = match pins.and_then(|p| p.get(source)) {
                    Some(&v) => store.version(source, v),
                    None => store.latest(source),
                }
                .ok_or_else(|| fail(EvalErrorKind::MissingSource(source.clone())))?;
                provenance.insert(source.clone(), snap.version);
                snap.cube.clone()
            }
            Step::Slice { from, keep, .. } => get(from).slice(keep).map_err(|e| fail(e.into()))?,
            Step::Aggregate {
                from,
                dimension,
                groups,
                ..
            } => {
                let grouping: Vec<(String, Vec<String>)> = groups
                    .iter()
                    .map(|g| (g.id.clone(), g.members.clone()))
                    .collect();
                get(from)
                    .aggregate(dimension, &grouping)
                    .map_err(|e| fail(e.into()))?
            }
            Step::Combine {
                from, dimension, ..
            } => {
                let cubes: Vec<DataCube> = from.iter().map(|b| get(b).clone()).collect();
                DataCube::combine(&cubes, dimension.clone()).map_err(|e| fail(e.into()))?
            }
            Step::Arith {
                left, right, op, ..
            } => get(left)
                .arith(get(right), *op)
                .map_err(|e| fail(e.into()))?,
            Step::Output { from } => {
                return Ok(Evaluated {
                    cube: get(from).clone(),
                    provenance,
                });
            }
        };
        let name = step.output().expect("non-output step binds a name");
        bindings.insert(name, produced);
    }
    unreachable!("validated recipe ends with an output step")
}

/// Inclusive pair of periods on a time dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: String,
    pub end: String,
}

impl Window {
    pub fn new(start: impl Into<String>, end: impl Into<String>) -> Self {
        Self {
            start: start.into(),
            end: end.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IndicatorError {
    #[error("cube has no single time dimension to measure change over")]
    NoTimeDimension,
    #[error("cube is not a single series; also varying: {0:?}")]
    NotASeries(Vec<String>),
    #[error("period `{0}` is not in the time dimension")]
    PeriodOutOfRange(String),
    #[error("value for period `{0}` is missing")]
    MissingValue(String),
    #[error("no windows requested")]
    NoWindows,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// `value(end) - value(start)` of a time series.
///
/// The time dimension is the one tagged with the time role, or else the
/// only dimension with more than one category. All other dimensions must
/// hold exactly one category.
pub fn net_change(series: &DataCube, window: &Window) -> Result<f64, IndicatorError> {
    let dims = series.dimensions();
    let tagged: Vec<usize> = (0..dims.len())
        .filter(|&i| dims[i].role() == Some(DimensionRole::Time))
        .collect();
    let axis = match tagged.as_slice() {
        [one] => *one,
        [] => {
            let varying: Vec<usize> = (0..dims.len()).filter(|&i| dims[i].len() > 1).collect();
            match (varying.as_slice(), dims.len()) {
                ([one], _) => *one,
                ([], 1) => 0,
                _ => return Err(IndicatorError::NoTimeDimension),
            }
        }
        _ => return Err(IndicatorError::NoTimeDimension),
    };
    let others: Vec<String> = dims
        .iter()
        .enumerate()
        .filter(|(i, d)| *i != axis && d.len() > 1)
        .map(|(_, d)| d.id().to_owned())
        .collect();
    if !others.is_empty() {
        return Err(IndicatorError::NotASeries(others));
    }
    let time = &dims[axis];
    let value_at = |period: &str| -> Result<f64, IndicatorError> {
        let p = time
            .position(period)
            .ok_or_else(|| IndicatorError::PeriodOutOfRange(period.to_owned()))?;
        let mut positions = alloc::vec![0; dims.len()];
        positions[axis] = p;
        series.values()[series.offset_of(&positions)]
            .ok_or_else(|| IndicatorError::MissingValue(period.to_owned()))
    };
    let start = value_at(&window.start)?;
    let end = value_at(&window.end)?;
    Ok(end - start)
}

/// The regional growth targets tracked by the barometer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Indicator {
    Population,
    ValueCreation,
    Employment,
    Jobs,
}

impl Indicator {
    pub const ALL: [Indicator; 4] = [
        Indicator::Population,
        Indicator::ValueCreation,
        Indicator::Employment,
        Indicator::Jobs,
    ];
}

/// How to obtain the time series behind an indicator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSpec {
    pub indicator: Indicator,
    pub recipe: Recipe,
    /// Catalog variable presenting this indicator, when there is one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variable: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum IndicatorValue {
    Scalar(f64),
    Cube(DataCube),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorResult {
    pub indicator: Indicator,
    pub variable: Option<u32>,
    pub value: IndicatorValue,
    pub window: Option<Window>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{indicator:?} over {}..{}: {error}", window.start, window.end)]
pub struct IndicatorFailure {
    pub indicator: Indicator,
    pub window: Window,
    pub error: IndicatorError,
}

/// Net change of every configured indicator over every window. A failing
/// indicator yields an error entry without stopping the others.
pub fn growth_indicators<S: SnapshotSource + ?Sized>(
    store: &S,
    specs: &[IndicatorSpec],
    windows: &[Window],
) -> Result<Vec<Result<IndicatorResult, IndicatorFailure>>, IndicatorError> {
    if windows.is_empty() {
        return Err(IndicatorError::NoWindows);
    }
    let mut out = Vec::with_capacity(specs.len() * windows.len());
    for spec in specs {
        let evaluated = evaluate(&spec.recipe, store);
        for window in windows {
            let result = evaluated
                .as_ref()
                .map_err(|e| IndicatorError::Eval(e.clone()))
                .and_then(|ev| {
                    net_change(&ev.cube, window).map(|v| IndicatorResult {
                        indicator: spec.indicator,
                        variable: spec.variable,
                        value: IndicatorValue::Scalar(v),
                        window: Some(window.clone()),
                        provenance: ev.provenance.clone(),
                    })
                })
                .map_err(|error| IndicatorFailure {
                    indicator: spec.indicator,
                    window: window.clone(),
                    error,
                });
            out.push(result);
        }
    }
    Ok(out)
}
