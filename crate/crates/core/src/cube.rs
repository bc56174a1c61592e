//! Multidimensional statistical datasets and their algebra.
//!
//! A [`DataCube`] stores one cell per combination of categories, linearized
//! with the last dimension varying fastest. Missing cells are `None` and
//! poison every sum or difference they take part in.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// Errors raised by cube construction and the cube algebra.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CubeError {
    #[error("dimension id must not be empty")]
    EmptyDimensionId,
    #[error("dimension `{0}` has no categories")]
    EmptyDimension(String),
    #[error("dimension `{dimension}` lists category `{category}` more than once")]
    DuplicateCategory { dimension: String, category: String },
    #[error("dimension `{0}` appears more than once")]
    DuplicateDimension(String),
    #[error("cube expects {expected} values, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("value at offset {0} is not finite")]
    NonFiniteValue(usize),
    #[error("unknown dimension `{0}`")]
    UnknownDimension(String),
    #[error("dimension `{dimension}` has no category `{category}`")]
    UnknownCategory { dimension: String, category: String },
    #[error("address has {actual} entries but the cube has {expected} dimensions")]
    AddressArity { expected: usize, actual: usize },
    #[error("selection for dimension `{0}` is empty")]
    EmptySelection(String),
    #[error("category `{category}` of dimension `{dimension}` is assigned to more than one group")]
    DuplicateMembership { dimension: String, category: String },
    #[error("group `{group}` on dimension `{dimension}` has no members")]
    EmptyGroup { dimension: String, group: String },
    #[error("cube shapes differ at dimension {position}: `{left}` vs `{right}`")]
    ShapeMismatch {
        position: usize,
        left: String,
        right: String,
    },
    #[error("new dimension has {categories} categories for {cubes} cubes")]
    CombineArity { categories: usize, cubes: usize },
    #[error("series extraction needs at most an x and a series dimension; also varying: {0:?}")]
    RankTooHigh(Vec<String>),
    #[error("x and series dimension are both `{0}`")]
    SameDimension(String),
}

pub type Result<T, E = CubeError> = core::result::Result<T, E>;

/// Semantic tag for a dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DimensionRole {
    Time,
    Geo,
    Metric,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: String,
    pub label: String,
}

impl Category {
    pub fn new(id: impl Into<String>, label: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            label: label.into(),
        }
    }
}

/// One axis of a cube with its ordered, non-empty list of categories.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "DimensionRepr")]
pub struct Dimension {
    id: String,
    label: String,
    categories: Vec<Category>,
    #[serde(skip_serializing_if = "Option::is_none")]
    role: Option<DimensionRole>,
}

#[derive(Deserialize)]
struct DimensionRepr {
    id: String,
    label: String,
    categories: Vec<Category>,
    #[serde(default)]
    role: Option<DimensionRole>,
}

impl TryFrom<DimensionRepr> for Dimension {
    type Error = CubeError;

    fn try_from(r: DimensionRepr) -> Result<Self> {
        Dimension::new(r.id, r.label, r.categories).map(|d| d.with_role(r.role))
    }
}

impl Dimension {
    pub fn new(
        id: impl Into<String>,
        label: impl Into<String>,
        categories: Vec<Category>,
    ) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(CubeError::EmptyDimensionId);
        }
        if categories.is_empty() {
            return Err(CubeError::EmptyDimension(id));
        }
        let mut seen = BTreeSet::new();
        for c in &categories {
            if !seen.insert(c.id.as_str()) {
                return Err(CubeError::DuplicateCategory {
                    dimension: id,
                    category: c.id.clone(),
                });
            }
        }
        Ok(Self {
            id,
            label: label.into(),
            categories,
            role: None,
        })
    }

    /// Dimension whose category labels equal their ids.
    pub fn from_ids<I, S>(id: impl Into<String>, ids: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let id = id.into();
        let categories = ids
            .into_iter()
            .map(|c| {
                let c = c.into();
                Category::new(c.clone(), c)
            })
            .collect();
        Self::new(id.clone(), id, categories)
    }

    pub fn with_role(mut self, role: Option<DimensionRole>) -> Self {
        self.role = role;
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn role(&self) -> Option<DimensionRole> {
        self.role
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn position(&self, category: &str) -> Option<usize> {
        self.categories.iter().position(|c| c.id == category)
    }

    fn require_position(&self, category: &str) -> Result<usize> {
        self.position(category)
            .ok_or_else(|| CubeError::UnknownCategory {
                dimension: self.id.clone(),
                category: category.to_owned(),
            })
    }

    fn same_shape(&self, other: &Dimension) -> bool {
        self.id == other.id
            && self.categories.len() == other.categories.len()
            && self
                .categories
                .iter()
                .zip(&other.categories)
                .all(|(a, b)| a.id == b.id)
    }
}

/// One category id per dimension, in dimension order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellAddress(pub Vec<String>);

impl<S: Into<String>> FromIterator<S> for CellAddress {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self(iter.into_iter().map(Into::into).collect())
    }
}

/// Binary cell-wise operator for [`DataCube::arith`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArithOp {
    Add,
    Sub,
}

impl ArithOp {
    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            ArithOp::Add => a + b,
            ArithOp::Sub => a - b,
        }
    }
}

/// A multidimensional dataset.
///
/// Values are immutable once built; every operation returns a new cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CubeRepr")]
pub struct DataCube {
    dimensions: Vec<Dimension>,
    values: Vec<Option<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    unit: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    source_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    updated_at: Option<DateTime<Utc>>,
}

#[derive(Deserialize)]
struct CubeRepr {
    dimensions: Vec<Dimension>,
    values: Vec<Option<f64>>,
    #[serde(default)]
    unit: Option<String>,
    #[serde(default)]
    source_id: Option<String>,
    #[serde(default)]
    updated_at: Option<DateTime<Utc>>,
}

impl TryFrom<CubeRepr> for DataCube {
    type Error = CubeError;

    fn try_from(r: CubeRepr) -> Result<Self> {
        let mut cube = DataCube::new(r.dimensions, r.values)?;
        cube.unit = r.unit;
        cube.source_id = r.source_id;
        cube.updated_at = r.updated_at;
        Ok(cube)
    }
}

impl DataCube {
    pub fn new(dimensions: Vec<Dimension>, values: Vec<Option<f64>>) -> Result<Self> {
        let mut ids = BTreeSet::new();
        for d in &dimensions {
            if !ids.insert(d.id.as_str()) {
                return Err(CubeError::DuplicateDimension(d.id.clone()));
            }
        }
        let expected: usize = dimensions.iter().map(Dimension::len).product();
        if values.len() != expected {
            return Err(CubeError::LengthMismatch {
                expected,
                actual: values.len(),
            });
        }
        if let Some(offset) = values
            .iter()
            .position(|v| matches!(v, Some(x) if !x.is_finite()))
        {
            return Err(CubeError::NonFiniteValue(offset));
        }
        Ok(Self {
            dimensions,
            values,
            unit: None,
            source_id: None,
            updated_at: None,
        })
    }

    /// Cube without missing cells.
    pub fn from_dense(dimensions: Vec<Dimension>, values: Vec<f64>) -> Result<Self> {
        Self::new(dimensions, values.into_iter().map(Some).collect())
    }

    pub fn with_unit(mut self, unit: Option<String>) -> Self {
        self.unit = unit;
        self
    }

    pub fn with_source_id(mut self, source_id: Option<String>) -> Self {
        self.source_id = source_id;
        self
    }

    pub fn with_updated_at(mut self, updated_at: Option<DateTime<Utc>>) -> Self {
        self.updated_at = updated_at;
        self
    }

    pub fn dimensions(&self) -> &[Dimension] {
        &self.dimensions
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn unit(&self) -> Option<&str> {
        self.unit.as_deref()
    }

    pub fn source_id(&self) -> Option<&str> {
        self.source_id.as_deref()
    }

    pub fn updated_at(&self) -> Option<DateTime<Utc>> {
        self.updated_at
    }

    pub fn shape(&self) -> Vec<usize> {
        self.dimensions.iter().map(Dimension::len).collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dimension(&self, id: &str) -> Option<(usize, &Dimension)> {
        self.dimensions.iter().enumerate().find(|(_, d)| d.id == id)
    }

    fn require_dimension(&self, id: &str) -> Result<(usize, &Dimension)> {
        self.dimension(id)
            .ok_or_else(|| CubeError::UnknownDimension(id.to_owned()))
    }

    /// Offset of a cell given one category position per dimension.
    pub fn offset_of(&self, positions: &[usize]) -> usize {
        linear_offset(&self.shape(), positions)
    }

    /// Offset of the cell named by `address` (last dimension fastest).
    pub fn cell_index(&self, address: &CellAddress) -> Result<usize> {
        if address.0.len() != self.dimensions.len() {
            return Err(CubeError::AddressArity {
                expected: self.dimensions.len(),
                actual: address.0.len(),
            });
        }
        let mut offset = 0;
        for (dim, cat) in self.dimensions.iter().zip(&address.0) {
            offset = offset * dim.len() + dim.require_position(cat)?;
        }
        Ok(offset)
    }

    pub fn get(&self, address: &CellAddress) -> Result<Option<f64>> {
        Ok(self.values[self.cell_index(address)?])
    }

    /// Address of the cell stored at `offset`. Panics if out of range.
    pub fn address_of(&self, offset: usize) -> CellAddress {
        assert!(offset < self.values.len(), "offset out of range");
        let mut positions = vec![0; self.dimensions.len()];
        let mut rest = offset;
        for (i, d) in self.dimensions.iter().enumerate().rev() {
            positions[i] = rest % d.len();
            rest /= d.len();
        }
        CellAddress(
            self.dimensions
                .iter()
                .zip(positions)
                .map(|(d, p)| d.categories[p].id.clone())
                .collect(),
        )
    }

    /// Keep only the named categories of the named dimensions.
    ///
    /// Selected categories keep their original order; dimensions not named in
    /// `keep` pass through whole.
    pub fn slice(&self, keep: &BTreeMap<String, Vec<String>>) -> Result<DataCube> {
        let mut selected: Vec<Vec<usize>> = self
            .dimensions
            .iter()
            .map(|d| (0..d.len()).collect())
            .collect();
        for (dim_id, subset) in keep {
            let (i, dim) = self.require_dimension(dim_id)?;
            if subset.is_empty() {
                return Err(CubeError::EmptySelection(dim_id.clone()));
            }
            let mut positions = Vec::with_capacity(subset.len());
            for cat in subset {
                positions.push(dim.require_position(cat)?);
            }
            positions.sort_unstable();
            positions.dedup();
            selected[i] = positions;
        }

        let dimensions = self
            .dimensions
            .iter()
            .zip(&selected)
            .map(|(d, sel)| Dimension {
                id: d.id.clone(),
                label: d.label.clone(),
                categories: sel.iter().map(|&p| d.categories[p].clone()).collect(),
                role: d.role,
            })
            .collect::<Vec<_>>();

        let shape = self.shape();
        let out_shape: Vec<usize> = selected.iter().map(Vec::len).collect();
        let mut values = Vec::with_capacity(out_shape.iter().product());
        for_each_position(&out_shape, |pos| {
            let src: Vec<usize> = pos.iter().zip(&selected).map(|(&p, s)| s[p]).collect();
            values.push(self.values[linear_offset(&shape, &src)]);
        });
        Ok(self.derived(dimensions, values))
    }

    /// Replace dimension `dim` by grouped categories, summing member cells.
    ///
    /// Old categories outside every group are dropped. A group touching a
    /// missing cell yields a missing cell.
    pub fn aggregate(&self, dim: &str, grouping: &[(String, Vec<String>)]) -> Result<DataCube> {
        let (axis, dimension) = self.require_dimension(dim)?;
        let mut assigned = BTreeSet::new();
        let mut groups: Vec<Vec<usize>> = Vec::with_capacity(grouping.len());
        let mut new_ids = BTreeSet::new();
        for (group, members) in grouping {
            if !new_ids.insert(group.as_str()) {
                return Err(CubeError::DuplicateCategory {
                    dimension: dim.to_owned(),
                    category: group.clone(),
                });
            }
            if members.is_empty() {
                return Err(CubeError::EmptyGroup {
                    dimension: dim.to_owned(),
                    group: group.clone(),
                });
            }
            let mut positions = Vec::with_capacity(members.len());
            for m in members {
                let p = dimension.require_position(m)?;
                if !assigned.insert(p) {
                    return Err(CubeError::DuplicateMembership {
                        dimension: dim.to_owned(),
                        category: m.clone(),
                    });
                }
                positions.push(p);
            }
            groups.push(positions);
        }
        let new_dim = Dimension::new(
            dimension.id.clone(),
            dimension.label.clone(),
            grouping
                .iter()
                .map(|(g, _)| Category::new(g.clone(), g.clone()))
                .collect(),
        )?
        .with_role(dimension.role);

        let shape = self.shape();
        let mut out_shape = shape.clone();
        out_shape[axis] = groups.len();
        let mut values = Vec::with_capacity(out_shape.iter().product());
        let mut src = vec![0; shape.len()];
        for_each_position(&out_shape, |pos| {
            src.copy_from_slice(pos);
            let mut sum = Some(0.0);
            for &member in &groups[pos[axis]] {
                src[axis] = member;
                sum = match (sum, self.values[linear_offset(&shape, &src)]) {
                    (Some(acc), Some(v)) => Some(acc + v),
                    _ => None,
                };
            }
            values.push(sum);
        });

        let mut dimensions = self.dimensions.clone();
        dimensions[axis] = new_dim;
        Ok(self.derived(dimensions, values))
    }

    /// Stack equally shaped cubes along a new leading dimension.
    pub fn combine(cubes: &[DataCube], new_dim: Dimension) -> Result<DataCube> {
        if new_dim.len() != cubes.len() {
            return Err(CubeError::CombineArity {
                categories: new_dim.len(),
                cubes: cubes.len(),
            });
        }
        let first = &cubes[0];
        if first.dimension(&new_dim.id).is_some() {
            return Err(CubeError::DuplicateDimension(new_dim.id.clone()));
        }
        for other in &cubes[1..] {
            first.check_same_shape(other)?;
        }
        let mut dimensions = Vec::with_capacity(first.dimensions.len() + 1);
        dimensions.push(new_dim);
        dimensions.extend(first.dimensions.iter().cloned());
        let values = cubes
            .iter()
            .flat_map(|c| c.values.iter().copied())
            .collect();
        let unit = first
            .unit
            .clone()
            .filter(|u| cubes.iter().all(|c| c.unit.as_deref() == Some(u.as_str())));
        let updated_at = cubes.iter().filter_map(|c| c.updated_at).max();
        Ok(DataCube {
            dimensions,
            values,
            unit,
            source_id: None,
            updated_at,
        })
    }

    /// Cell-wise `self op other`.
    pub fn arith(&self, other: &DataCube, op: ArithOp) -> Result<DataCube> {
        self.check_same_shape(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| match (a, b) {
                (Some(a), Some(b)) => Some(op.apply(*a, *b)),
                _ => None,
            })
            .collect();
        let mut out = self.derived(self.dimensions.clone(), values);
        out.updated_at = self.updated_at.max(other.updated_at);
        if self.unit != other.unit {
            out.unit = None;
        }
        Ok(out)
    }

    /// Lay the cube out as series over the categories of `x_dim`.
    ///
    /// Dimensions other than `x_dim` and `series_dim` must already be
    /// reduced to a single category.
    pub fn to_series(&self, x_dim: &str, series_dim: Option<&str>) -> Result<SeriesTable> {
        let (x_axis, x) = self.require_dimension(x_dim)?;
        let series_axis = match series_dim {
            Some(s) if s == x_dim => return Err(CubeError::SameDimension(s.to_owned())),
            Some(s) => Some(self.require_dimension(s)?.0),
            None => None,
        };
        let varying: Vec<String> = self
            .dimensions
            .iter()
            .enumerate()
            .filter(|(i, d)| *i != x_axis && Some(*i) != series_axis && d.len() > 1)
            .map(|(_, d)| d.id.clone())
            .collect();
        if !varying.is_empty() {
            return Err(CubeError::RankTooHigh(varying));
        }

        let shape = self.shape();
        let mut pos = vec![0; shape.len()];
        let mut read_row = |series_pos: Option<usize>| -> Vec<Option<f64>> {
            (0..x.len())
                .map(|i| {
                    pos[x_axis] = i;
                    if let (Some(axis), Some(p)) = (series_axis, series_pos) {
                        pos[axis] = p;
                    }
                    self.values[linear_offset(&shape, &pos)]
                })
                .collect()
        };
        let series = match series_axis {
            Some(axis) => self.dimensions[axis]
                .categories
                .iter()
                .enumerate()
                .map(|(p, c)| Series {
                    id: Some(c.id.clone()),
                    name: c.label.clone(),
                    values: read_row(Some(p)),
                })
                .collect(),
            None => vec![Series {
                id: None,
                name: String::from("value"),
                values: read_row(None),
            }],
        };
        Ok(SeriesTable {
            x_dimension: x.id.clone(),
            x_label: x.label.clone(),
            x_categories: x.categories.clone(),
            series_dimension: series_dim.map(str::to_owned),
            series,
        })
    }

    fn check_same_shape(&self, other: &DataCube) -> Result<()> {
        let n = self.dimensions.len().max(other.dimensions.len());
        for position in 0..n {
            let (a, b) = (
                self.dimensions.get(position),
                other.dimensions.get(position),
            );
            let same = matches!((a, b), (Some(a), Some(b)) if a.same_shape(b));
            if !same {
                let name =
                    |d: Option<&Dimension>| d.map_or_else(|| "<none>".into(), |d| d.id.clone());
                return Err(CubeError::ShapeMismatch {
                    position,
                    left: name(a),
                    right: name(b),
                });
            }
        }
        Ok(())
    }

    fn derived(&self, dimensions: Vec<Dimension>, values: Vec<Option<f64>>) -> DataCube {
        DataCube {
            dimensions,
            values,
            unit: self.unit.clone(),
            source_id: self.source_id.clone(),
            updated_at: self.updated_at,
        }
    }
}

/// One named row of values over the x categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    /// Category id on the series dimension; `None` for the single anonymous series.
    pub id: Option<String>,
    pub name: String,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesTable {
    pub x_dimension: String,
    pub x_label: String,
    pub x_categories: Vec<Category>,
    pub series_dimension: Option<String>,
    pub series: Vec<Series>,
}

pub(crate) fn linear_offset(shape: &[usize], positions: &[usize]) -> usize {
    shape
        .iter()
        .zip(positions)
        .fold(0, |acc, (&n, &p)| acc * n + p)
}

/// Visit every position of `shape` in row-major order.
pub(crate) fn for_each_position(shape: &[usize], mut f: impl FnMut(&[usize])) {
    if shape.contains(&0) {
        return;
    }
    let mut pos = vec![0; shape.len()];
    loop {
        f(&pos);
        let mut axis = shape.len();
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            pos[axis] += 1;
            if pos[axis] < shape[axis] {
                break;
            }
            pos[axis] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn dim(id: &str, n: usize) -> Dimension {
        Dimension::from_ids(id, (0..n).map(|i| i.to_string())).unwrap()
    }

    fn keep(pairs: &[(&str, &[&str])]) -> BTreeMap<String, Vec<String>> {
        pairs
            .iter()
            .map(|(d, cs)| (d.to_string(), cs.iter().map(|c| c.to_string()).collect()))
            .collect()
    }

    #[test]
    fn cell_index_examples() {
        let c = DataCube::from_dense(vec![dim("a", 3)], vec![0.0; 3]).unwrap();
        assert_eq!(c.cell_index(&["2"].into_iter().collect()).unwrap(), 2);

        let c = DataCube::from_dense(vec![dim("a", 2), dim("b", 3)], vec![0.0; 6]).unwrap();
        // nested-loop enumeration
        let mut expected = 0;
        for i in 0..2 {
            for j in 0..3 {
                let addr: CellAddress = [i.to_string(), j.to_string()].into_iter().collect();
                assert_eq!(c.cell_index(&addr).unwrap(), expected);
                expected += 1;
            }
        }
        assert_eq!(c.cell_index(&["1", "0"].into_iter().collect()).unwrap(), 3);

        let c = DataCube::from_dense(vec![dim("a", 2), dim("b", 2), dim("c", 2)], vec![0.0; 8])
            .unwrap();
        assert_eq!(
            c.cell_index(&["1", "1", "1"].into_iter().collect())
                .unwrap(),
            7
        );
    }

    #[test]
    fn cell_index_unknown_category() {
        let c = DataCube::from_dense(vec![dim("region", 2)], vec![0.0; 2]).unwrap();
        let err = c.cell_index(&["Oslo"].into_iter().collect()).unwrap_err();
        assert_eq!(
            err,
            CubeError::UnknownCategory {
                dimension: "region".into(),
                category: "Oslo".into()
            }
        );
    }

    #[test]
    fn construction_invariants() {
        assert_eq!(
            DataCube::from_dense(vec![dim("a", 2), dim("b", 3)], vec![0.0; 5]).unwrap_err(),
            CubeError::LengthMismatch {
                expected: 6,
                actual: 5
            }
        );
        assert_eq!(
            DataCube::from_dense(vec![dim("a", 2)], vec![1.0, f64::NAN]).unwrap_err(),
            CubeError::NonFiniteValue(1)
        );
        assert!(matches!(
            Dimension::from_ids("a", ["x", "x"]),
            Err(CubeError::DuplicateCategory { .. })
        ));
        assert!(matches!(
            Dimension::from_ids("a", Vec::<String>::new()),
            Err(CubeError::EmptyDimension(_))
        ));
        assert_eq!(
            Dimension::from_ids("", ["x"]).unwrap_err(),
            CubeError::EmptyDimensionId
        );
        assert!(matches!(
            DataCube::from_dense(vec![dim("a", 1), dim("a", 1)], vec![0.0]),
            Err(CubeError::DuplicateDimension(_))
        ));
    }

    #[test]
    fn slice_keeps_original_order() {
        let regions = Dimension::from_ids("region", ["Ringerike", "Hole", "Jevnaker"]).unwrap();
        let c = DataCube::from_dense(
            vec![regions, dim("age", 5)],
            (0..15).map(f64::from).collect(),
        )
        .unwrap();
        let s = c.slice(&keep(&[("region", &["Ringerike"])])).unwrap();
        assert_eq!(s.shape(), vec![1, 5]);
        assert_eq!(s.values(), &c.values()[0..5]);

        let s = c
            .slice(&keep(&[("region", &["Jevnaker", "Ringerike"])]))
            .unwrap();
        let ids: Vec<_> = s.dimensions()[0]
            .categories()
            .iter()
            .map(|c| c.id.as_str())
            .collect();
        assert_eq!(ids, ["Ringerike", "Jevnaker"]);
        for off in 0..s.len() {
            let addr = s.address_of(off);
            assert_eq!(s.values()[off], c.get(&addr).unwrap());
        }
    }

    #[test]
    fn slice_identity_and_errors() {
        let c = DataCube::from_dense(
            vec![dim("a", 2), dim("b", 3)],
            (0..6).map(f64::from).collect(),
        )
        .unwrap();
        let all = keep(&[("a", &["0", "1"]), ("b", &["0", "1", "2"])]);
        assert_eq!(c.slice(&all).unwrap(), c);
        assert_eq!(
            c.slice(&keep(&[("b", &[])])).unwrap_err(),
            CubeError::EmptySelection("b".into())
        );
        assert!(matches!(
            c.slice(&keep(&[("z", &["0"])])),
            Err(CubeError::UnknownDimension(_))
        ));
        assert!(matches!(
            c.slice(&keep(&[("a", &["9"])])),
            Err(CubeError::UnknownCategory { .. })
        ));
    }

    #[test]
    fn aggregate_age_bands() {
        let c =
            DataCube::from_dense(vec![dim("age", 5)], vec![10.0, 20.0, 30.0, 40.0, 50.0]).unwrap();
        let g = c
            .aggregate(
                "age",
                &[
                    ("0-1".into(), vec!["0".into(), "1".into()]),
                    ("2-4".into(), vec!["2".into(), "3".into(), "4".into()]),
                ],
            )
            .unwrap();
        assert_eq!(g.values(), &[Some(30.0), Some(120.0)]);
        assert_eq!(g.dimensions()[0].categories()[1].id, "2-4");
    }

    #[test]
    fn aggregate_singletons_is_identity_on_values() {
        let c = DataCube::from_dense(
            vec![dim("a", 2), dim("b", 3)],
            (0..6).map(f64::from).collect(),
        )
        .unwrap();
        let grouping: Vec<_> = (0..3)
            .map(|i| (alloc::format!("g{i}"), vec![i.to_string()]))
            .collect();
        let g = c.aggregate("b", &grouping).unwrap();
        assert_eq!(g.values(), c.values());
        assert_eq!(g.shape(), c.shape());
    }

    #[test]
    fn aggregate_missing_poisons_group() {
        let c = DataCube::new(vec![dim("a", 3)], vec![Some(1.0), None, Some(2.0)]).unwrap();
        let g = c
            .aggregate(
                "a",
                &[
                    ("x".into(), vec!["0".into(), "1".into()]),
                    ("y".into(), vec!["2".into()]),
                ],
            )
            .unwrap();
        assert_eq!(g.values(), &[None, Some(2.0)]);
    }

    #[test]
    fn aggregate_rejects_duplicate_membership() {
        let c = DataCube::from_dense(vec![dim("a", 3)], vec![1.0, 2.0, 3.0]).unwrap();
        let err = c
            .aggregate(
                "a",
                &[
                    ("x".into(), vec!["0".into(), "1".into()]),
                    ("y".into(), vec!["1".into()]),
                ],
            )
            .unwrap_err();
        assert!(matches!(err, CubeError::DuplicateMembership { .. }));
        assert!(matches!(
            c.aggregate("a", &[("x".into(), vec!["7".into()])]),
            Err(CubeError::UnknownCategory { .. })
        ));
    }

    #[test]
    fn combine_and_slice_back() {
        let years = Dimension::from_ids("year", ["2020", "2025", "2030"]).unwrap();
        let region = Dimension::from_ids("region", ["Ringerike"]).unwrap();
        let cubes: Vec<_> = (0..3)
            .map(|k| {
                DataCube::from_dense(
                    vec![region.clone(), years.clone()],
                    (0..3).map(|i| f64::from(k * 10 + i)).collect(),
                )
                .unwrap()
            })
            .collect();
        let assumption =
            Dimension::from_ids("assumption", ["ssb", "political", "housing"]).unwrap();
        let combined = DataCube::combine(&cubes, assumption).unwrap();
        assert_eq!(combined.shape(), vec![3, 1, 3]);
        for (k, name) in ["ssb", "political", "housing"].iter().enumerate() {
            let s = combined.slice(&keep(&[("assumption", &[name])])).unwrap();
            assert_eq!(s.values(), cubes[k].values());
        }
    }

    #[test]
    fn combine_errors() {
        let a = DataCube::from_dense(
            vec![Dimension::from_ids("year", ["2020", "2021"]).unwrap()],
            vec![1.0, 2.0],
        )
        .unwrap();
        let b = DataCube::from_dense(
            vec![Dimension::from_ids("year", ["2021", "2022"]).unwrap()],
            vec![1.0, 2.0],
        )
        .unwrap();
        let err = DataCube::combine(
            &[a.clone(), b],
            Dimension::from_ids("k", ["x", "y"]).unwrap(),
        )
        .unwrap_err();
        assert!(matches!(err, CubeError::ShapeMismatch { position: 0, .. }));
        let err = DataCube::combine(
            std::slice::from_ref(&a),
            Dimension::from_ids("k", ["x", "y"]).unwrap(),
        )
        .unwrap_err();
        assert_eq!(
            err,
            CubeError::CombineArity {
                categories: 2,
                cubes: 1
            }
        );
        let single = DataCube::combine(
            std::slice::from_ref(&a),
            Dimension::from_ids("k", ["x"]).unwrap(),
        )
        .unwrap();
        assert_eq!(single.shape(), vec![1, 2]);
        assert_eq!(single.values(), a.values());
    }

    #[test]
    fn arith_balance_sign() {
        let y = Dimension::from_ids("year", ["2030"]).unwrap();
        let capacity = DataCube::from_dense(vec![y.clone()], vec![900.0]).unwrap();
        let projection = DataCube::from_dense(vec![y], vec![1000.0]).unwrap();
        let balance = capacity.arith(&projection, ArithOp::Sub).unwrap();
        assert_eq!(balance.values(), &[Some(-100.0)]);
        let zero = capacity.arith(&capacity, ArithOp::Sub).unwrap();
        assert_eq!(zero.values(), &[Some(0.0)]);
    }

    #[test]
    fn arith_missing_and_shape() {
        let a = DataCube::new(vec![dim("a", 2)], vec![Some(1.0), None]).unwrap();
        let b = DataCube::from_dense(vec![dim("a", 2)], vec![1.0, 1.0]).unwrap();
        assert_eq!(
            a.arith(&b, ArithOp::Add).unwrap().values(),
            &[Some(2.0), None]
        );
        let c = DataCube::from_dense(vec![dim("a", 3)], vec![1.0; 3]).unwrap();
        assert!(matches!(
            a.arith(&c, ArithOp::Sub),
            Err(CubeError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn to_series_shapes() {
        let c =
            DataCube::from_dense(vec![dim("year", 5)], (0..5).map(f64::from).collect()).unwrap();
        let t = c.to_series("year", None).unwrap();
        assert_eq!(t.series.len(), 1);
        assert_eq!(t.series[0].id, None);
        assert_eq!(t.series[0].values.len(), 5);

        let c = DataCube::from_dense(
            vec![dim("region", 3), dim("age", 4)],
            (0..12).map(f64::from).collect(),
        )
        .unwrap();
        let t = c.to_series("region", Some("age")).unwrap();
        assert_eq!(t.series.len(), 4);
        for (s, series) in t.series.iter().enumerate() {
            assert_eq!(series.values.len(), 3);
            for (i, v) in series.values.iter().enumerate() {
                let addr: CellAddress = [i.to_string(), s.to_string()].into_iter().collect();
                assert_eq!(*v, c.get(&addr).unwrap());
            }
        }

        let c = DataCube::from_dense(vec![dim("a", 2), dim("b", 2), dim("c", 2)], vec![0.0; 8])
            .unwrap();
        assert_eq!(
            c.to_series("a", Some("b")).unwrap_err(),
            CubeError::RankTooHigh(vec!["c".into()])
        );
        assert!(c.to_series("q", None).is_err());
    }

    #[test]
    fn serde_round_trip_validates() {
        let c = DataCube::new(
            vec![Dimension::from_ids("year", ["2018"])
                .unwrap()
                .with_role(Some(DimensionRole::Time))],
            vec![None],
        )
        .unwrap()
        .with_unit(Some("persons".into()));
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(
            text,
            r#"{"dimensions":[{"id":"year","label":"year","categories":[{"id":"2018","label":"2018"}],"role":"time"}],"values":[null],"unit":"persons"}"#
        );
        let back: DataCube = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        let bad = r#"{"dimensions":[{"id":"y","label":"y","categories":[{"id":"a","label":"a"}]}],"values":[1,2]}"#;
        assert!(serde_json::from_str::<DataCube>(bad).is_err());
    }
}
