//! Potential-outcomes bookkeeping for a two-period experiment.
//!
//! Every unit carries one compliance type for both periods. The type fixes
//! which treatment the unit receives under either assignment, and therefore
//! which potential outcome cells exist at all:
//!
//! ```text
//!              W(0) W(1)   x2 cells   y cells
//! nevertaker     0    0    x2(0)      y(0,0)
//! complier       0    1    x2(0..1)   y(0..1, 0..1)
//! alwaystaker    1    1    x2(1)      y(1,1)
//! ```
//!
//! Defiers (W(0)=1, W(1)=0) cannot be represented.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComplianceType {
    Nevertaker,
    Complier,
    Alwaystaker,
}

impl ComplianceType {
    /// Fixed order (nt, co, at) used for indexing and inverse-CDF sampling.
    pub const ALL: [ComplianceType; 3] = [
        ComplianceType::Nevertaker,
        ComplianceType::Complier,
        ComplianceType::Alwaystaker,
    ];

    pub fn index(self) -> usize {
        match self {
            ComplianceType::Nevertaker => 0,
            ComplianceType::Complier => 1,
            ComplianceType::Alwaystaker => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn short(self) -> &'static str {
        match self {
            ComplianceType::Nevertaker => "nt",
            ComplianceType::Complier => "co",
            ComplianceType::Alwaystaker => "at",
        }
    }

    pub fn is_alwaystaker(self) -> bool {
        self == ComplianceType::Alwaystaker
    }

    pub fn is_nevertaker(self) -> bool {
        self == ComplianceType::Nevertaker
    }
}

impl fmt::Display for ComplianceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ComplianceType::Nevertaker => "nevertaker",
            ComplianceType::Complier => "complier",
            ComplianceType::Alwaystaker => "alwaystaker",
        })
    }
}

/// Classify a unit from its pair of potential receipts `(W(0), W(1))`.
pub fn classify_compliance(w_at_z0: bool, w_at_z1: bool) -> Result<ComplianceType> {
    match (w_at_z0, w_at_z1) {
        (false, false) => Ok(ComplianceType::Nevertaker),
        (false, true) => Ok(ComplianceType::Complier),
        (true, true) => Ok(ComplianceType::Alwaystaker),
        (true, false) => Err(Error::MonotonicityViolation),
    }
}

/// Treatment received by a unit of type `c` when assigned `z`.
pub fn realized_treatment(c: ComplianceType, z: bool) -> bool {
    match c {
        ComplianceType::Nevertaker => false,
        ComplianceType::Alwaystaker => true,
        ComplianceType::Complier => z,
    }
}

/// Small set of compliance types, stored as a bitmask over (nt, co, at).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct TypeSet(u8);

impl TypeSet {
    pub fn empty() -> Self {
        TypeSet(0)
    }

    pub fn insert(&mut self, c: ComplianceType) {
        self.0 |= 1 << c.index();
    }

    pub fn contains(self, c: ComplianceType) -> bool {
        self.0 & (1 << c.index()) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = ComplianceType> {
        ComplianceType::ALL
            .into_iter()
            .filter(move |c| self.contains(*c))
    }
}

impl FromIterator<ComplianceType> for TypeSet {
    fn from_iter<I: IntoIterator<Item = ComplianceType>>(iter: I) -> Self {
        let mut set = TypeSet::empty();
        for c in iter {
            set.insert(c);
        }
        set
    }
}

/// Types that reproduce the observed receipts `w1`, `w2` under assignments
/// `z1`, `z2`. Empty means the record is corrupted.
pub fn consistent_types(z1: bool, w1: bool, z2: bool, w2: bool) -> TypeSet {
    ComplianceType::ALL
        .into_iter()
        .filter(|&c| realized_treatment(c, z1) == w1 && realized_treatment(c, z2) == w2)
        .collect()
}

/// One subject's observed record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedUnit {
    pub x1: Vec<f64>,
    pub z1: bool,
    pub w1: bool,
    pub x2: f64,
    pub z2: bool,
    pub w2: bool,
    pub y: f64,
}

impl ObservedUnit {
    pub fn consistent_types(&self) -> TypeSet {
        consistent_types(self.z1, self.w1, self.z2, self.w2)
    }

    pub(crate) fn validate(&self, row: usize, p: usize) -> Result<()> {
        if self.x1.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: self.x1.len(),
            });
        }
        if let Some(j) = self.x1.iter().position(|v| !v.is_finite()) {
            return Err(Error::Value {
                row,
                message: format!("x1_{j} is not finite"),
            });
        }
        if !self.x2.is_finite() {
            return Err(Error::Value {
                row,
                message: "x2 is not finite".into(),
            });
        }
        if !self.y.is_finite() {
            return Err(Error::Value {
                row,
                message: "y is not finite".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    covariate_dim: usize,
    units: Vec<ObservedUnit>,
}

impl Dataset {
    pub fn new(covariate_dim: usize, units: Vec<ObservedUnit>) -> Result<Self> {
        for (i, u) in units.iter().enumerate() {
            u.validate(i, covariate_dim)?;
        }
        Ok(Dataset {
            covariate_dim,
            units,
        })
    }

    pub fn covariate_dim(&self) -> usize {
        self.covariate_dim
    }

    pub fn units(&self) -> &[ObservedUnit] {
        &self.units
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// Index of the first unit whose receipts no compliance type can produce.
    pub fn first_inconsistent(&self) -> Option<usize> {
        self.units.iter().position(|u| u.consistent_types().is_empty())
    }

    /// Reorder units; `order[k]` is the source index of the new k-th unit.
    pub fn permuted(&self, order: &[usize]) -> Dataset {
        Dataset {
            covariate_dim: self.covariate_dim,
            units: order.iter().map(|&i| self.units[i].clone()).collect(),
        }
    }
}

/// A potential-outcome cell: a value, or explicitly undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(from = "Option<f64>", into = "Option<f64>")]
pub enum Cell {
    Defined(f64),
    #[default]
    Undefined,
}

impl Cell {
    pub fn value(self) -> Option<f64> {
        match self {
            Cell::Defined(v) => Some(v),
            Cell::Undefined => None,
        }
    }

    pub fn is_defined(self) -> bool {
        matches!(self, Cell::Defined(_))
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Undefined, Cell::Defined)
    }
}

impl From<Cell> for Option<f64> {
    fn from(c: Cell) -> Self {
        c.value()
    }
}

/// Does the type define x2 under first-period receipt `w1`?
pub fn x2_cell_defined(c: ComplianceType, w1: bool) -> bool {
    match c {
        ComplianceType::Complier => true,
        ComplianceType::Nevertaker => !w1,
        ComplianceType::Alwaystaker => w1,
    }
}

/// Does the type define y under receipts `(w1, w2)`?
pub fn y_cell_defined(c: ComplianceType, w1: bool, w2: bool) -> bool {
    match c {
        ComplianceType::Complier => true,
        ComplianceType::Nevertaker => !w1 && !w2,
        ComplianceType::Alwaystaker => w1 && w2,
    }
}

fn x2_slot(w1: bool) -> usize {
    w1 as usize
}

fn y_slot(w1: bool, w2: bool) -> usize {
    2 * (w1 as usize) + w2 as usize
}

/// A unit's full set of potential outcomes, `X2(w1)` and `Y(w1, w2)`.
///
/// Cells the unit's type leaves undefined stay [`Cell::Undefined`] unless
/// the table was built with [`PotentialTable::all_cells`], which the
/// simulator uses for sample-average diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialTable {
    compliance: ComplianceType,
    x2: [Cell; 2],
    y: [Cell; 4],
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    all_cells: bool,
}

impl PotentialTable {
    pub fn new(compliance: ComplianceType) -> Self {
        PotentialTable {
            compliance,
            x2: [Cell::Undefined; 2],
            y: [Cell::Undefined; 4],
            all_cells: false,
        }
    }

    /// A table that may hold values in cells the type does not define.
    pub fn all_cells(compliance: ComplianceType) -> Self {
        PotentialTable {
            all_cells: true,
            ..Self::new(compliance)
        }
    }

    pub fn compliance(&self) -> ComplianceType {
        self.compliance
    }

    pub fn is_all_cells(&self) -> bool {
        self.all_cells
    }

    pub fn x2_of(&self, w1: bool) -> Cell {
        self.x2[x2_slot(w1)]
    }

    pub fn y_of(&self, w1: bool, w2: bool) -> Cell {
        self.y[y_slot(w1, w2)]
    }

    pub fn set_x2(&mut self, w1: bool, value: f64) -> Result<()> {
        if !self.all_cells && !x2_cell_defined(self.compliance, w1) {
            return Err(Error::UndefinedCell {
                cell: format!("x2({})", w1 as u8),
                compliance: self.compliance,
            });
        }
        self.x2[x2_slot(w1)] = Cell::Defined(value);
        Ok(())
    }

    pub fn set_y(&mut self, w1: bool, w2: bool, value: f64) -> Result<()> {
        if !self.all_cells && !y_cell_defined(self.compliance, w1, w2) {
            return Err(Error::UndefinedCell {
                cell: format!("y({},{})", w1 as u8, w2 as u8),
                compliance: self.compliance,
            });
        }
        self.y[y_slot(w1, w2)] = Cell::Defined(value);
        Ok(())
    }

    /// `Y(a) - Y(b)` for receipt sequences `a`, `b`.
    pub fn contrast(&self, contrast: Contrast) -> Result<f64> {
        let ((a1, a2), (b1, b2)) = contrast.arms();
        let get = |w1, w2| {
            self.y_of(w1, w2).value().ok_or_else(|| Error::UndefinedCell {
                cell: format!("y({},{})", w1 as u8, w2 as u8),
                compliance: self.compliance,
            })
        };
        Ok(get(a1, a2)? - get(b1, b2)?)
    }

    /// Check the definedness pattern demanded by the compliance type.
    pub fn check_pattern(&self) -> Result<()> {
        let c = self.compliance;
        for w1 in [false, true] {
            let want = x2_cell_defined(c, w1);
            let have = self.x2_of(w1).is_defined();
            if want && !have || !self.all_cells && have && !want {
                return Err(Error::UndefinedCell {
                    cell: format!("x2({})", w1 as u8),
                    compliance: c,
                });
            }
            for w2 in [false, true] {
                let want = y_cell_defined(c, w1, w2);
                let have = self.y_of(w1, w2).is_defined();
                if want && !have || !self.all_cells && have && !want {
                    return Err(Error::UndefinedCell {
                        cell: format!("y({},{})", w1 as u8, w2 as u8),
                        compliance: c,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Pair of receipt sequences `((w1, w2), (w1', w2'))` compared by an estimand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "[[u8; 2]; 2]", into = "[[u8; 2]; 2]")]
pub struct Contrast {
    pub treated: (bool, bool),
    pub control: (bool, bool),
}

impl Contrast {
    pub const fn new(treated: (bool, bool), control: (bool, bool)) -> Self {
        Contrast { treated, control }
    }

    pub fn arms(self) -> ((bool, bool), (bool, bool)) {
        (self.treated, self.control)
    }
}

impl Default for Contrast {
    /// `(1,1)` versus `(0,0)`.
    fn default() -> Self {
        Contrast::new((true, true), (false, false))
    }
}

impl TryFrom<[[u8; 2]; 2]> for Contrast {
    type Error = String;

    fn try_from(v: [[u8; 2]; 2]) -> std::result::Result<Self, String> {
        let bit = |b: u8| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(format!("contrast entries must be 0 or 1, got {other}")),
        };
        Ok(Contrast::new(
            (bit(v[0][0])?, bit(v[0][1])?),
            (bit(v[1][0])?, bit(v[1][1])?),
        ))
    }
}

impl From<Contrast> for [[u8; 2]; 2] {
    fn from(c: Contrast) -> Self {
        [
            [c.treated.0 as u8, c.treated.1 as u8],
            [c.control.0 as u8, c.control.1 as u8],
        ]
    }
}

impl fmt::Display for Contrast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({},{}) vs ({},{})",
            self.treated.0 as u8, self.treated.1 as u8, self.control.0 as u8, self.control.1 as u8
        )
    }
}
