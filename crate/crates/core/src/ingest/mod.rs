//! Transaction logs, entity catalogs and product equivalence classes.
//!
//! Everything downstream works on interned integer ids: entities are
//! [`EntityId`]s resolved through an [`EntityCatalog`], product codes are
//! [`ProductId`]s resolved through a [`ProductTable`].

mod csv_io;
pub mod synth;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use csv_io::{
    parse_catalog, parse_rules, parse_transactions, read_transactions, write_catalog, write_rules,
    write_transactions, ParseOptions, RowError, ValidationReport,
};
pub use synth::{generate_synthetic_system, SynthSpec, SyntheticSystem};

/// Interned entity identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityId(pub u32);

impl EntityId {
    /// Virtual upstream symbol placed in front of the first node of every
    /// path, so that orders placed directly to a manufacturer (or to a node
    /// whose provenance is unknown) still have a two-step representation.
    pub const ORIGIN: EntityId = EntityId(u32::MAX);

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn is_origin(self) -> bool {
        self == Self::ORIGIN
    }
}

/// Interned product-code identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProductId(pub u32);

impl ProductId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Calendar day counted from 1970-01-01.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Day(pub i32);

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid epoch")
}

impl Day {
    pub fn from_ymd(year: i32, month: u32, day: u32) -> Option<Day> {
        NaiveDate::from_ymd_opt(year, month, day).map(Day::from_date)
    }

    pub fn from_date(date: NaiveDate) -> Day {
        Day((date - epoch()).num_days() as i32)
    }

    pub fn to_date(self) -> NaiveDate {
        epoch() + chrono::Duration::days(self.0 as i64)
    }

    /// Parses a strict `YYYY-MM-DD` date.
    pub fn parse_iso(s: &str) -> Option<Day> {
        let b = s.as_bytes();
        if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
            return None;
        }
        let num = |r: std::ops::Range<usize>| -> Option<u32> {
            let mut v = 0u32;
            for &c in &b[r] {
                if !c.is_ascii_digit() {
                    return None;
                }
                v = v * 10 + (c - b'0') as u32;
            }
            Some(v)
        };
        Day::from_ymd(num(0..4)? as i32, num(5..7)?, num(8..10)?)
    }

    pub fn year(self) -> i32 {
        use chrono::Datelike;
        self.to_date().year()
    }

    pub fn offset(self, days: i32) -> Day {
        Day(self.0 + days)
    }
}

impl fmt::Display for Day {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_date().format("%Y-%m-%d"))
    }
}

/// Role of an entity in the distribution system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    Manufacturer,
    Distributor,
    FinalBuyer,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Manufacturer => "manufacturer",
            Role::Distributor => "distributor",
            Role::FinalBuyer => "final-buyer",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        match s.trim() {
            "manufacturer" => Some(Role::Manufacturer),
            "distributor" => Some(Role::Distributor),
            "final-buyer" | "final_buyer" => Some(Role::FinalBuyer),
            _ => None,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("line {line}: malformed row: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: unknown entity `{entity}`")]
    UnknownEntity { line: u64, entity: String },
    #[error("line {line}: quantity must be a positive integer")]
    NonPositiveQuantity { line: u64 },
    #[error("line {line}: seller and buyer are the same entity `{entity}`")]
    SelfShipment { line: u64, entity: String },
    #[error("line {line}: date {date} outside the observation window")]
    OutOfWindow { line: u64, date: Day },
    #[error("line {line}: unknown role `{role}`")]
    UnknownRole { line: u64, role: String },
    #[error("entity `{0}` declared twice")]
    DuplicateEntity(String),
    #[error("product `{0}` has no substitution rule")]
    MissingRule(String),
    #[error("unexpected header: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Mapping from entity names to ids and roles.
#[derive(Debug, Clone, Default)]
pub struct EntityCatalog {
    names: Vec<String>,
    roles: Vec<Role>,
    index: HashMap<String, EntityId>,
}

impl EntityCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an entity, returning its id. Re-inserting an existing name with
    /// the same role is a no-op; with a different role it is an error.
    pub fn insert(&mut self, name: &str, role: Role) -> Result<EntityId, IngestError> {
        if let Some(&id) = self.index.get(name) {
            if self.roles[id.index()] == role {
                return Ok(id);
            }
            return Err(IngestError::DuplicateEntity(name.to_string()));
        }
        let id = EntityId(self.names.len() as u32);
        self.names.push(name.to_string());
        self.roles.push(role);
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<EntityId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: EntityId) -> &str {
        if id.is_origin() {
            "ORIGIN"
        } else {
            &self.names[id.index()]
        }
    }

    pub fn role(&self, id: EntityId) -> Role {
        self.roles[id.index()]
    }

    pub fn is_distributor(&self, id: EntityId) -> bool {
        !id.is_origin() && self.role(id) == Role::Distributor
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (EntityId, &str, Role)> + '_ {
        self.names
            .iter()
            .zip(&self.roles)
            .enumerate()
            .map(|(i, (n, r))| (EntityId(i as u32), n.as_str(), *r))
    }

    pub fn with_role(&self, role: Role) -> impl Iterator<Item = EntityId> + '_ {
        self.iter().filter(move |e| e.2 == role).map(|e| e.0)
    }
}

/// Interned product codes.
#[derive(Debug, Clone, Default)]
pub struct ProductTable {
    codes: Vec<String>,
    index: HashMap<String, ProductId>,
}

impl ProductTable {
    pub fn intern(&mut self, code: &str) -> ProductId {
        if let Some(&id) = self.index.get(code) {
            return id;
        }
        let id = ProductId(self.codes.len() as u32);
        self.codes.push(code.to_string());
        self.index.insert(code.to_string(), id);
        id
    }

    pub fn id(&self, code: &str) -> Option<ProductId> {
        self.index.get(code).copied()
    }

    pub fn code(&self, id: ProductId) -> &str {
        &self.codes[id.index()]
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ProductId, &str)> + '_ {
        self.codes
            .iter()
            .enumerate()
            .map(|(i, c)| (ProductId(i as u32), c.as_str()))
    }
}

/// One dated shipment of `quantity` unit packages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Transaction {
    pub date: Day,
    pub seller: EntityId,
    pub buyer: EntityId,
    pub product: ProductId,
    pub quantity: u64,
}

/// Date-ordered transactions together with the product table they refer to.
#[derive(Debug, Clone, Default)]
pub struct TransactionLog {
    pub products: ProductTable,
    pub transactions: Vec<Transaction>,
}

impl TransactionLog {
    pub fn len(&self) -> usize {
        self.transactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transactions.is_empty()
    }

    /// Stable sort by date; same-day transactions keep their input order.
    pub fn sort_by_date(&mut self) {
        self.transactions.sort_by_key(|t| t.date);
    }

    /// Transactions with `start <= date < end`.
    pub fn window(&self, start: Day, end: Day) -> TransactionLog {
        TransactionLog {
            products: self.products.clone(),
            transactions: self
                .transactions
                .iter()
                .filter(|t| t.date >= start && t.date < end)
                .copied()
                .collect(),
        }
    }

    /// Keeps only transactions of the given product codes.
    pub fn restrict_products(&self, codes: &BTreeSet<String>) -> TransactionLog {
        let keep: Vec<bool> = self
            .products
            .iter()
            .map(|(_, c)| codes.contains(c))
            .collect();
        TransactionLog {
            products: self.products.clone(),
            transactions: self
                .transactions
                .iter()
                .filter(|t| keep[t.product.index()])
                .copied()
                .collect(),
        }
    }

    pub fn years(&self) -> BTreeSet<i32> {
        self.transactions.iter().map(|t| t.date.year()).collect()
    }
}

/// Attributes that decide substitutability of a product code.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubstitutionRule {
    pub ingredient: String,
    pub form: String,
    pub strength: String,
}

/// Set of mutually substitutable product codes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EquivalenceClass {
    pub id: String,
    pub members: BTreeSet<String>,
}

/// Groups products by active ingredient. Form and strength are recorded in
/// the rules but deliberately not used: products of different strength or
/// dosage form with the same ingredient are treated as substitutes.
pub fn group_substitutables(
    products: &BTreeSet<String>,
    rules: &BTreeMap<String, SubstitutionRule>,
) -> Result<Vec<EquivalenceClass>, IngestError> {
    let mut classes: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
    for p in products {
        let rule = rules
            .get(p)
            .ok_or_else(|| IngestError::MissingRule(p.clone()))?;
        classes
            .entry(rule.ingredient.as_str())
            .or_default()
            .insert(p.clone());
    }
    Ok(classes
        .into_iter()
        .map(|(id, members)| EquivalenceClass {
            id: id.to_string(),
            members,
        })
        .collect())
}
