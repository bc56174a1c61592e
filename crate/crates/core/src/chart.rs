//! Renderer-independent chart specifications.
//!
//! A [`ChartSpec`] is pure data: categories, series with absolute and
//! plotted values, tooltips and drilldown routes. Colors and layout are left
//! to whoever renders it.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, VariableEntry};
use crate::cube::{CubeError, DataCube};
use crate::derive::Provenance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartKind {
    Line,
    Bar,
    Column,
    StackedColumn,
    StackedPercentColumn,
    ColumnDrilldown,
    Pie,
}

impl ChartKind {
    pub const ALL: [ChartKind; 7] = [
        ChartKind::Line,
        ChartKind::Bar,
        ChartKind::Column,
        ChartKind::StackedColumn,
        ChartKind::StackedPercentColumn,
        ChartKind::ColumnDrilldown,
        ChartKind::Pie,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ChartKind::Line => "line",
            ChartKind::Bar => "bar",
            ChartKind::Column => "column",
            ChartKind::StackedColumn => "stacked_column",
            ChartKind::StackedPercentColumn => "stacked_percent_column",
            ChartKind::ColumnDrilldown => "column_drilldown",
            ChartKind::Pie => "pie",
        }
    }

    /// Whether tooltips carry a percentage share.
    pub fn has_shares(self) -> bool {
        matches!(self, ChartKind::StackedPercentColumn | ChartKind::Pie)
    }
}

impl fmt::Display for ChartKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown chart kind `{0}`")]
pub struct UnknownChartKind(pub String);

impl FromStr for ChartKind {
    type Err = UnknownChartKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ChartKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| UnknownChartKind(s.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TooltipEntry {
    /// Share of the visible total, 0 to 100; only for percent stacks and pies.
    pub percent: Option<f64>,
    /// The underlying cube cell; `None` when the cell is missing.
    pub absolute: Option<f64>,
}

/// Navigation target: a variable shown with a fixed filter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route {
    pub target: u32,
    pub filter: BTreeMap<String, String>,
}

impl Route {
    /// Path under the public route scheme, e.g. `/statistic/25?filter=region:0605`.
    pub fn path(&self) -> String {
        let mut path = alloc::format!("/statistic/{}", self.target);
        if !self.filter.is_empty() {
            path.push_str("?filter=");
            let parts: Vec<String> = self
                .filter
                .iter()
                .map(|(d, c)| alloc::format!("{d}:{c}"))
                .collect();
            path.push_str(&parts.join(","));
        }
        path
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSeries {
    pub id: Option<String>,
    pub name: String,
    /// Absolute cube values aligned to the x categories.
    pub values: Vec<Option<f64>>,
    /// What a renderer draws: shares for percent stacks, values otherwise,
    /// all `None` while hidden.
    pub plotted: Vec<Option<f64>>,
    pub visible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub variable: u32,
    pub kind: ChartKind,
    pub title: String,
    pub x_dimension: String,
    pub x_label: String,
    pub x_ids: Vec<String>,
    pub x_categories: Vec<String>,
    pub series: Vec<ChartSeries>,
    /// Indexed `[series][x]`.
    pub tooltips: Vec<Vec<TooltipEntry>>,
    pub drilldown: Option<BTreeMap<String, Route>>,
    /// x positions of share-based charts whose visible total is not positive.
    pub degenerate_columns: Vec<usize>,
    pub unit: Option<String>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChartError {
    #[error("variable {variable} does not offer chart kind `{kind}`")]
    UnsupportedKind { variable: u32, kind: ChartKind },
    #[error(transparent)]
    Shape(#[from] CubeError),
    #[error("pie charts need exactly one series, got {0}")]
    PieNeedsSingleSeries(usize),
    #[error("variable {0} has no drilldown configured")]
    NoDrilldownConfig(u32),
    #[error(
        "drilldown of variable {variable} is keyed by `{expected}`, not x dimension `{actual}`"
    )]
    DrilldownDimension {
        variable: u32,
        expected: String,
        actual: String,
    },
    #[error("no series named `{0}`")]
    UnknownSeries(String),
    #[error("x category `{0}` has no drilldown")]
    NoDrilldown(String),
    #[error("drilldown target {0} is not a published variable")]
    TargetUnavailable(u32),
}

/// Default kind first, then the alternatives, without duplicates.
pub fn alternative_kinds(entry: &VariableEntry) -> Vec<ChartKind> {
    let mut out = vec![entry.default_chart];
    for k in &entry.alternative_charts {
        if !out.contains(k) {
            out.push(*k);
        }
    }
    out
}

pub fn build_chart(
    cube: &DataCube,
    entry: &VariableEntry,
    kind: ChartKind,
    x_dim: &str,
    series_dim: Option<&str>,
    provenance: &Provenance,
) -> Result<ChartSpec, ChartError> {
    if !alternative_kinds(entry).contains(&kind) {
        return Err(ChartError::UnsupportedKind {
            variable: entry.number,
            kind,
        });
    }
    let table = cube.to_series(x_dim, series_dim)?;
    if kind == ChartKind::Pie && table.series.len() != 1 {
        return Err(ChartError::PieNeedsSingleSeries(table.series.len()));
    }

    let drilldown = if kind == ChartKind::ColumnDrilldown {
        let cfg = entry
            .drilldown
            .as_ref()
            .ok_or(ChartError::NoDrilldownConfig(entry.number))?;
        if cfg.dimension != table.x_dimension {
            return Err(ChartError::DrilldownDimension {
                variable: entry.number,
                expected: cfg.dimension.clone(),
                actual: table.x_dimension.clone(),
            });
        }
        Some(
            table
                .x_categories
                .iter()
                .map(|c| {
                    let route = Route {
                        target: cfg.target,
                        filter: BTreeMap::from([(cfg.dimension.clone(), c.id.clone())]),
                    };
                    (c.id.clone(), route)
                })
                .collect(),
        )
    } else {
        None
    };

    let anonymous = table.series.len() == 1 && table.series[0].id.is_none();
    let series = table
        .series
        .into_iter()
        .map(|s| ChartSeries {
            id: s.id,
            name: if anonymous {
                entry.title.clone()
            } else {
                s.name
            },
            plotted: Vec::new(),
            values: s.values,
            visible: true,
        })
        .collect();

    let mut spec = ChartSpec {
        variable: entry.number,
        kind,
        title: entry.title.clone(),
        x_dimension: table.x_dimension,
        x_label: table.x_label,
        x_ids: table.x_categories.iter().map(|c| c.id.clone()).collect(),
        x_categories: table.x_categories.into_iter().map(|c| c.label).collect(),
        series,
        tooltips: Vec::new(),
        drilldown,
        degenerate_columns: Vec::new(),
        unit: cube.unit().map(str::to_owned),
        provenance: provenance.clone(),
    };
    recompute(&mut spec);
    Ok(spec)
}

/// Flip the visibility of the series with the given name (or id) and
/// recompute plotted values over the visible series.
pub fn toggle_series(spec: &ChartSpec, name: &str) -> Result<ChartSpec, ChartError> {
    let index = spec
        .series
        .iter()
        .position(|s| s.name == name)
        .or_else(|| {
            spec.series
                .iter()
                .position(|s| s.id.as_deref() == Some(name))
        })
        .ok_or_else(|| ChartError::UnknownSeries(name.to_owned()))?;
    let mut out = spec.clone();
    out.series[index].visible = !out.series[index].visible;
    recompute(&mut out);
    Ok(out)
}

/// Route behind a drilldown x category (matched by id, then by label).
/// The target must be a published variable.
pub fn drilldown_target(spec: &ChartSpec, x: &str, catalog: &Catalog) -> Result<Route, ChartError> {
    let id = if spec.x_ids.iter().any(|i| i == x) {
        x
    } else {
        spec.x_categories
            .iter()
            .position(|l| l == x)
            .map(|p| spec.x_ids[p].as_str())
            .unwrap_or(x)
    };
    let route = spec
        .drilldown
        .as_ref()
        .and_then(|d| d.get(id))
        .ok_or_else(|| ChartError::NoDrilldown(x.to_owned()))?;
    catalog
        .get_variable(route.target)
        .map_err(|_| ChartError::TargetUnavailable(route.target))?;
    Ok(route.clone())
}

fn recompute(spec: &mut ChartSpec) {
    let n = spec.x_ids.len();
    let mut shares: Vec<Vec<Option<f64>>> = spec.series.iter().map(|_| vec![None; n]).collect();
    spec.degenerate_columns.clear();

    match spec.kind {
        ChartKind::StackedPercentColumn => {
            #[allow(clippy::needless_range_loop)]
            for x in 0..n {
                // A missing visible cell leaves the whole column without shares.
                let Some(total) = spec
                    .series
                    .iter()
                    .filter(|s| s.visible)
                    .map(|s| s.values[x])
                    .sum::<Option<f64>>()
                else {
                    continue;
                };
                if total <= 0.0 {
                    spec.degenerate_columns.push(x);
                }
                for (si, s) in spec.series.iter().enumerate() {
                    if let (true, Some(v)) = (s.visible, s.values[x]) {
                        shares[si][x] = Some(if total > 0.0 { v / total * 100.0 } else { 0.0 });
                    }
                }
            }
        }
        ChartKind::Pie => {
            for (si, s) in spec.series.iter().enumerate() {
                if !s.visible {
                    continue;
                }
                let Some(total) = s.values.iter().copied().sum::<Option<f64>>() else {
                    continue;
                };
                if total <= 0.0 {
                    spec.degenerate_columns.extend(0..n);
                }
                for (share, value) in shares[si].iter_mut().zip(&s.values) {
                    *share = value.map(|v| if total > 0.0 { v / total * 100.0 } else { 0.0 });
                }
            }
        }
        _ => {}
    }

    let share_kind = spec.kind.has_shares();
    for (si, s) in spec.series.iter_mut().enumerate() {
        s.plotted = if !s.visible {
            vec![None; n]
        } else if share_kind {
            shares[si].clone()
        } else {
            s.values.clone()
        };
    }
    spec.tooltips = spec
        .series
        .iter()
        .enumerate()
        .map(|(si, s)| {
            (0..n)
                .map(|x| TooltipEntry {
                    percent: if share_kind { shares[si][x] } else { None },
                    absolute: s.values[x],
                })
                .collect()
        })
        .collect();
}
