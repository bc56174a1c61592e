//! The information architecture: five fixed groups, their categories, and
//! numbered statistic variables.
//!
//! Variable numbers are assigned in registration order and never reused.
//! Drafts are invisible through the public accessors.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chart::ChartKind;
use crate::derive::{IndicatorSpec, Recipe};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupId {
    Goals,
    Premises,
    Industries,
    Growth,
    Expectations,
}

impl GroupId {
    pub const ALL: [GroupId; 5] = [
        GroupId::Goals,
        GroupId::Premises,
        GroupId::Industries,
        GroupId::Growth,
        GroupId::Expectations,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GroupId::Goals => "goals",
            GroupId::Premises => "premises",
            GroupId::Industries => "industries",
            GroupId::Growth => "growth",
            GroupId::Expectations => "expectations",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            GroupId::Goals => "Goals",
            GroupId::Premises => "Premises for growth",
            GroupId::Industries => "Industries",
            GroupId::Growth => "Growth",
            GroupId::Expectations => "Expectations",
        }
    }
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GroupId {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GroupId::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| CatalogError::UnknownGroup(s.to_owned()))
    }
}

/// Categories every catalog must carry under the goals group.
pub const GOAL_CATEGORIES: [(&str, &str); 5] = [
    ("population", "Population"),
    ("value_creation", "Value Creation"),
    ("employment", "Employment"),
    ("jobs", "Jobs"),
    ("welfare", "Welfare"),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryNode {
    pub id: String,
    pub label: String,
    pub group: GroupId,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CategoryRef {
    pub group: GroupId,
    pub category: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelatedDocument {
    pub label: String,
    pub url: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    #[default]
    Published,
    Draft,
}

/// Which dimensions a chart lays out, and a fixed pre-slice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChartAxes {
    pub x: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series: Option<String>,
    /// Dimension id -> category id applied before charting.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub filter: BTreeMap<String, String>,
}

/// Detail view reached by clicking an x category of a drilldown chart.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrilldownConfig {
    pub target: u32,
    /// Dimension whose clicked category becomes the route filter.
    pub dimension: String,
    /// Chart kind and axes of the detail view.
    pub kind: ChartKind,
    pub axes: ChartAxes,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableEntry {
    pub number: u32,
    pub title: String,
    pub description: String,
    pub category: CategoryRef,
    #[serde(default)]
    pub related_documents: Vec<RelatedDocument>,
    #[serde(default)]
    pub related_variables: Vec<u32>,
    pub default_chart: ChartKind,
    #[serde(default)]
    pub alternative_charts: Vec<ChartKind>,
    pub recipe_id: String,
    #[serde(default)]
    pub visibility: Visibility,
    pub axes: ChartAxes,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drilldown: Option<DrilldownConfig>,
}

/// A variable awaiting its number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewVariable {
    pub title: String,
    pub description: String,
    pub category: CategoryRef,
    pub related_documents: Vec<RelatedDocument>,
    pub related_variables: Vec<u32>,
    pub default_chart: ChartKind,
    pub alternative_charts: Vec<ChartKind>,
    pub recipe_id: String,
    pub visibility: Visibility,
    pub axes: ChartAxes,
    pub drilldown: Option<DrilldownConfig>,
}

impl NewVariable {
    fn numbered(self, number: u32) -> VariableEntry {
        VariableEntry {
            number,
            title: self.title,
            description: self.description,
            category: self.category,
            related_documents: self.related_documents,
            related_variables: self.related_variables,
            default_chart: self.default_chart,
            alternative_charts: self.alternative_charts,
            recipe_id: self.recipe_id,
            visibility: self.visibility,
            axes: self.axes,
            drilldown: self.drilldown,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CatalogError {
    #[error("unknown group `{0}`")]
    UnknownGroup(String),
    #[error("unknown category `{}/{}`", .0.group, .0.category)]
    UnknownCategory(CategoryRef),
    #[error("category `{category}` appears twice in group `{group}`")]
    DuplicateCategory { group: GroupId, category: String },
    #[error("goals group lacks required category `{0}`")]
    MissingGoalCategory(String),
    #[error("variable {0} not found")]
    NotFound(u32),
    #[error("variable number {0} is used twice")]
    DuplicateNumber(u32),
    #[error("variable number {number} exceeds highest assigned {highest}")]
    NumberAboveHighest { number: u32, highest: u32 },
    #[error("variable number must be positive")]
    ZeroNumber,
    #[error("variable {variable}: chart kind `{kind}` listed twice")]
    DuplicateChartKind { variable: u32, kind: ChartKind },
    #[error("variable {variable} relates to unknown variable {target}")]
    DanglingRelation { variable: u32, target: u32 },
    #[error("variable {variable} drills down into unknown variable {target}")]
    DanglingDrilldown { variable: u32, target: u32 },
    #[error("variable {variable} uses unknown recipe `{recipe}`")]
    UnknownRecipe { variable: u32, recipe: String },
    #[error("recipe id `{0}` is defined twice")]
    DuplicateRecipe(String),
    #[error("variable numbers are exhausted")]
    Exhausted,
}

/// Stable, human-editable on-disk form of a catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogDocument {
    pub highest_assigned: u32,
    pub categories: Vec<CategoryNode>,
    #[serde(default)]
    pub recipes: Vec<Recipe>,
    #[serde(default)]
    pub indicators: Vec<IndicatorSpec>,
    pub variables: Vec<VariableEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NavVariable {
    pub number: u32,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NavCategory {
    pub id: String,
    pub label: String,
    pub variables: Vec<NavVariable>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NavGroup {
    pub id: GroupId,
    pub label: String,
    pub categories: Vec<NavCategory>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    categories: Vec<CategoryNode>,
    variables: BTreeMap<u32, VariableEntry>,
    highest_assigned: u32,
    recipes: BTreeMap<String, Recipe>,
    indicators: Vec<IndicatorSpec>,
}

/// The five goal categories; other groups are left to configuration.
pub fn goal_categories() -> Vec<CategoryNode> {
    GOAL_CATEGORIES
        .iter()
        .map(|(id, label)| CategoryNode {
            id: (*id).to_owned(),
            label: (*label).to_owned(),
            group: GroupId::Goals,
        })
        .collect()
}

impl Catalog {
    pub fn new(categories: Vec<CategoryNode>) -> Result<Self, CatalogError> {
        let mut seen = BTreeSet::new();
        for c in &categories {
            if !seen.insert((c.group, c.id.as_str())) {
                return Err(CatalogError::DuplicateCategory {
                    group: c.group,
                    category: c.id.clone(),
                });
            }
        }
        for (id, _) in GOAL_CATEGORIES {
            if !seen.contains(&(GroupId::Goals, id)) {
                return Err(CatalogError::MissingGoalCategory(id.to_owned()));
            }
        }
        Ok(Self {
            categories,
            variables: BTreeMap::new(),
            highest_assigned: 0,
            recipes: BTreeMap::new(),
            indicators: Vec::new(),
        })
    }

    pub fn from_document(doc: CatalogDocument) -> Result<Self, CatalogError> {
        let mut catalog = Catalog::new(doc.categories)?;
        for recipe in doc.recipes {
            catalog.add_recipe(recipe)?;
        }
        catalog.indicators = doc.indicators;
        catalog.highest_assigned = doc.highest_assigned;
        for entry in doc.variables {
            if entry.number == 0 {
                return Err(CatalogError::ZeroNumber);
            }
            if entry.number > doc.highest_assigned {
                return Err(CatalogError::NumberAboveHighest {
                    number: entry.number,
                    highest: doc.highest_assigned,
                });
            }
            catalog.check_entry(&entry)?;
            if catalog
                .variables
                .insert(entry.number, entry.clone())
                .is_some()
            {
                return Err(CatalogError::DuplicateNumber(entry.number));
            }
        }
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn to_document(&self) -> CatalogDocument {
        CatalogDocument {
            highest_assigned: self.highest_assigned,
            categories: self.categories.clone(),
            recipes: self.recipes.values().cloned().collect(),
            indicators: self.indicators.clone(),
            variables: self.variables.values().cloned().collect(),
        }
    }

    pub fn add_recipe(&mut self, recipe: Recipe) -> Result<(), CatalogError> {
        if self.recipes.contains_key(&recipe.id) {
            return Err(CatalogError::DuplicateRecipe(recipe.id));
        }
        self.recipes.insert(recipe.id.clone(), recipe);
        Ok(())
    }

    pub fn recipe(&self, id: &str) -> Option<&Recipe> {
        self.recipes.get(id)
    }

    pub fn indicators(&self) -> &[IndicatorSpec] {
        &self.indicators
    }

    pub fn set_indicators(&mut self, indicators: Vec<IndicatorSpec>) {
        self.indicators = indicators;
    }

    pub fn categories(&self) -> &[CategoryNode] {
        &self.categories
    }

    pub fn highest_assigned(&self) -> u32 {
        self.highest_assigned
    }

    fn has_category(&self, r: &CategoryRef) -> bool {
        self.categories
            .iter()
            .any(|c| c.group == r.group && c.id == r.category)
    }

    fn check_entry(&self, e: &VariableEntry) -> Result<(), CatalogError> {
        if !self.has_category(&e.category) {
            return Err(CatalogError::UnknownCategory(e.category.clone()));
        }
        let mut kinds = BTreeSet::from([e.default_chart]);
        for &k in &e.alternative_charts {
            if !kinds.insert(k) {
                return Err(CatalogError::DuplicateChartKind {
                    variable: e.number,
                    kind: k,
                });
            }
        }
        Ok(())
    }

    /// Assign the next number (highest ever assigned + 1) to `variable`.
    ///
    /// Related variables may point at numbers that do not exist yet; they
    /// are checked by [`Catalog::publish`] and [`Catalog::validate`].
    pub fn register_variable(&mut self, variable: NewVariable) -> Result<u32, CatalogError> {
        let number = self
            .highest_assigned
            .checked_add(1)
            .ok_or(CatalogError::Exhausted)?;
        let entry = variable.numbered(number);
        self.check_entry(&entry)?;
        self.variables.insert(number, entry);
        self.highest_assigned = number;
        Ok(number)
    }

    /// Remove a variable. Its number is retired, never handed out again.
    pub fn delete_variable(&mut self, number: u32) -> Result<VariableEntry, CatalogError> {
        self.variables
            .remove(&number)
            .ok_or(CatalogError::NotFound(number))
    }

    /// Check references of one variable and mark it published.
    pub fn publish(&mut self, number: u32) -> Result<(), CatalogError> {
        let entry = self
            .variables
            .get(&number)
            .ok_or(CatalogError::NotFound(number))?;
        self.check_references(entry)?;
        self.variables.get_mut(&number).expect("present").visibility = Visibility::Published;
        Ok(())
    }

    pub fn set_visibility(
        &mut self,
        number: u32,
        visibility: Visibility,
    ) -> Result<(), CatalogError> {
        match visibility {
            Visibility::Published => self.publish(number),
            Visibility::Draft => {
                self.variables
                    .get_mut(&number)
                    .ok_or(CatalogError::NotFound(number))?
                    .visibility = Visibility::Draft;
                Ok(())
            }
        }
    }

    fn check_references(&self, e: &VariableEntry) -> Result<(), CatalogError> {
        for &target in &e.related_variables {
            if !self.variables.contains_key(&target) {
                return Err(CatalogError::DanglingRelation {
                    variable: e.number,
                    target,
                });
            }
        }
        if let Some(d) = &e.drilldown {
            if !self.variables.contains_key(&d.target) {
                return Err(CatalogError::DanglingDrilldown {
                    variable: e.number,
                    target: d.target,
                });
            }
        }
        if !self.recipes.contains_key(&e.recipe_id) {
            return Err(CatalogError::UnknownRecipe {
                variable: e.number,
                recipe: e.recipe_id.clone(),
            });
        }
        Ok(())
    }

    /// Check every published variable's references.
    pub fn validate(&self) -> Result<(), CatalogError> {
        self.variables
            .values()
            .filter(|e| e.visibility == Visibility::Published)
            .try_for_each(|e| self.check_references(e))
    }

    /// Public lookup: drafts are reported as not found.
    pub fn get_variable(&self, number: u32) -> Result<&VariableEntry, CatalogError> {
        self.variables
            .get(&number)
            .filter(|e| e.visibility == Visibility::Published)
            .ok_or(CatalogError::NotFound(number))
    }

    /// Lookup including drafts.
    pub fn get_variable_admin(&self, number: u32) -> Result<&VariableEntry, CatalogError> {
        self.variables
            .get(&number)
            .ok_or(CatalogError::NotFound(number))
    }

    pub fn published(&self) -> impl Iterator<Item = &VariableEntry> {
        self.variables
            .values()
            .filter(|e| e.visibility == Visibility::Published)
    }

    /// Groups, then categories in configured order, then published variables
    /// in ascending number order. All five groups are always present.
    pub fn navigation_tree(&self) -> Vec<NavGroup> {
        GroupId::ALL
            .into_iter()
            .map(|group| NavGroup {
                id: group,
                label: group.label().to_owned(),
                categories: self
                    .categories
                    .iter()
                    .filter(|c| c.group == group)
                    .map(|c| NavCategory {
                        id: c.id.clone(),
                        label: c.label.clone(),
                        variables: self
                            .published()
                            .filter(|e| e.category.group == group && e.category.category == c.id)
                            .map(|e| NavVariable {
                                number: e.number,
                                title: e.title.clone(),
                            })
                            .collect(),
                    })
                    .collect(),
            })
            .collect()
    }

    /// Published related variables of a published variable.
    pub fn related(&self, number: u32) -> Result<Vec<NavVariable>, CatalogError> {
        let entry = self.get_variable(number)?;
        Ok(entry
            .related_variables
            .iter()
            .filter_map(|&n| self.get_variable(n).ok())
            .map(|e| NavVariable {
                number: e.number,
                title: e.title.clone(),
            })
            .collect())
    }
}
