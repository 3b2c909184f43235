//! Shared domain types used by every agent: identifiers, network entities,
//! inventory records, policy parameters and the elementary inventory identities.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Simulation day index. Day 0 is the first simulated day.
pub type Day = u32;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }
    };
}

string_id!(
    /// Outlet (store) identifier.
    OutletId
);
string_id!(SkuId);
string_id!(SupplierId);
string_id!(VehicleId);

/// Parse failure for the prefixed sequential identifiers (`PO-17`, `PLAN-3`, ...).
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed identifier {0:?}")]
pub struct IdParseError(pub String);

macro_rules! seq_id {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub u64);

        impl $name {
            pub const PREFIX: &'static str = $prefix;
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}-{}", $prefix, self.0)
            }
        }

        impl FromStr for $name {
            type Err = IdParseError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                s.strip_prefix($prefix)
                    .and_then(|rest| rest.strip_prefix('-'))
                    .and_then(|n| n.parse::<u64>().ok())
                    .map($name)
                    .ok_or_else(|| IdParseError(s.to_string()))
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

seq_id!(
    /// Purchase order identifier, rendered `PO-<n>`.
    PoId,
    "PO"
);
seq_id!(
    /// Replenishment plan identifier, rendered `PLAN-<n>`.
    PlanId,
    "PLAN"
);
seq_id!(
    /// Exception alert identifier, rendered `AL-<n>`.
    AlertId,
    "AL"
);

/// Holder of an inventory record: the single distribution centre or an outlet.
///
/// Serialized as the string `"DC"` or the outlet id.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Holder {
    Dc,
    Outlet(OutletId),
}

impl Holder {
    pub const DC_TAG: &'static str = "DC";

    pub fn outlet(&self) -> Option<&OutletId> {
        match self {
            Holder::Dc => None,
            Holder::Outlet(o) => Some(o),
        }
    }

    pub fn is_dc(&self) -> bool {
        matches!(self, Holder::Dc)
    }
}

impl fmt::Display for Holder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Holder::Dc => f.write_str(Self::DC_TAG),
            Holder::Outlet(o) => f.write_str(o.as_str()),
        }
    }
}

impl From<&str> for Holder {
    fn from(s: &str) -> Self {
        if s == Self::DC_TAG {
            Holder::Dc
        } else {
            Holder::Outlet(OutletId::new(s))
        }
    }
}

impl Serialize for Holder {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Holder {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(Holder::from(s.as_str()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TempClass {
    Ambient,
    Chilled,
}

impl fmt::Display for TempClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TempClass::Ambient => f.write_str("ambient"),
            TempClass::Chilled => f.write_str("chilled"),
        }
    }
}

/// Currency in minor units (cents).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Money(pub i64);

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

/// Planar coordinates in kilometres.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Delivery window in minutes from midnight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub open: u32,
    pub close: u32,
}

impl TimeWindow {
    pub const ALL_DAY: TimeWindow = TimeWindow { open: 0, close: 1440 };

    pub fn is_valid(&self) -> bool {
        self.open < self.close && self.close <= 1440
    }

    pub fn contains(&self, minute: f64) -> bool {
        minute >= self.open as f64 && minute <= self.close as f64 + 1e-9
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sku {
    pub id: SkuId,
    pub name: String,
    pub category: String,
    pub case_pack: u32,
    /// Litres per unit.
    pub unit_volume: f64,
    pub temp_class: TempClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shelf_life_days: Option<u32>,
    pub target_cover_days: u32,
}

impl Sku {
    pub fn is_perishable(&self) -> bool {
        self.shelf_life_days.is_some()
    }
}

fn default_priority() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outlet {
    pub id: OutletId,
    pub name: String,
    pub location: Point,
    pub delivery_window: TimeWindow,
    /// Unloading time at the outlet, minutes.
    pub service_time: u32,
    #[serde(default = "default_priority")]
    pub priority_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Supplier {
    pub id: SupplierId,
    pub name: String,
    pub response_delay_days: u32,
    pub confirm_probability: f64,
    /// `[low, high]` fraction of the ordered quantity confirmed on a partial response.
    pub partial_fraction_range: [f64; 2],
    pub delivery_delay_days: u32,
    pub delay_probability: f64,
    /// Prior on-time fraction, used until interactions have been observed.
    pub reliability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub supplier_id: SupplierId,
    pub sku_id: SkuId,
    pub unit_price: Money,
    pub moq: u64,
    pub lead_time_days: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub qty: u64,
    /// Last day on which the batch can be sold; it is written off at the end of that day.
    pub expiry_day: Day,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InventoryRecord {
    pub holder: Holder,
    pub sku_id: SkuId,
    pub on_hand: u64,
    pub on_order: u64,
    pub committed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub batches: Vec<Batch>,
}

impl InventoryRecord {
    pub fn new(holder: Holder, sku_id: SkuId) -> Self {
        Self {
            holder,
            sku_id,
            on_hand: 0,
            on_order: 0,
            committed: 0,
            batches: Vec::new(),
        }
    }

    pub fn batch_total(&self) -> u64 {
        self.batches.iter().map(|b| b.qty).sum()
    }

    /// Insert a batch keeping FEFO order (ascending expiry), merging equal expiries.
    pub fn add_batch(&mut self, batch: Batch) {
        if batch.qty == 0 {
            return;
        }
        match self
            .batches
            .binary_search_by_key(&batch.expiry_day, |b| b.expiry_day)
        {
            Ok(i) => self.batches[i].qty += batch.qty,
            Err(i) => self.batches.insert(i, batch),
        }
    }

    /// Remove `qty` units from the batches in FEFO order and return what was taken.
    pub fn take_fefo(&mut self, mut qty: u64) -> Vec<Batch> {
        let mut taken = Vec::new();
        for b in self.batches.iter_mut() {
            if qty == 0 {
                break;
            }
            let n = b.qty.min(qty);
            if n > 0 {
                b.qty -= n;
                qty -= n;
                taken.push(Batch {
                    qty: n,
                    expiry_day: b.expiry_day,
                });
            }
        }
        self.batches.retain(|b| b.qty > 0);
        taken
    }
}

fn default_service_z() -> f64 {
    1.645
}
fn default_review_period() -> u32 {
    1
}
fn default_weights() -> SupplierWeights {
    SupplierWeights::default()
}
fn default_cv_flag() -> f64 {
    0.5
}
fn default_overstock() -> f64 {
    3.0
}
fn default_dispersion_flag() -> f64 {
    0.25
}
fn default_spike_k() -> f64 {
    3.0
}
fn default_max_followups() -> u32 {
    2
}
fn default_followup_window() -> u32 {
    2
}
fn default_chilled_minutes() -> u32 {
    240
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupplierWeights {
    pub price: f64,
    pub reliability: f64,
    pub lead: f64,
}

impl Default for SupplierWeights {
    fn default() -> Self {
        Self {
            price: 0.4,
            reliability: 0.4,
            lead: 0.2,
        }
    }
}

/// Tunable policy constants shared by the agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    #[serde(default = "default_service_z")]
    pub service_z: f64,
    #[serde(default = "default_review_period")]
    pub review_period_days: u32,
    #[serde(default = "default_weights")]
    pub supplier_weights: SupplierWeights,
    #[serde(default = "default_cv_flag")]
    pub cv_flag_threshold: f64,
    #[serde(default = "default_overstock")]
    pub overstock_multiple: f64,
    #[serde(default = "default_dispersion_flag")]
    pub dispersion_flag_threshold: f64,
    #[serde(default = "default_spike_k")]
    pub spike_k: f64,
    #[serde(default = "default_max_followups")]
    pub max_followups: u32,
    #[serde(default = "default_followup_window")]
    pub followup_window_days: u32,
    #[serde(default = "default_chilled_minutes")]
    pub max_chilled_route_minutes: u32,
}

impl Default for PolicyParams {
    fn default() -> Self {
        Self {
            service_z: default_service_z(),
            review_period_days: default_review_period(),
            supplier_weights: SupplierWeights::default(),
            cv_flag_threshold: default_cv_flag(),
            overstock_multiple: default_overstock(),
            dispersion_flag_threshold: default_dispersion_flag(),
            spike_k: default_spike_k(),
            max_followups: default_max_followups(),
            followup_window_days: default_followup_window(),
            max_chilled_route_minutes: default_chilled_minutes(),
        }
    }
}

impl PolicyParams {
    /// Returns the name of the first offending field, if any.
    pub fn check(&self) -> Result<(), (&'static str, String)> {
        let w = &self.supplier_weights;
        if !(self.service_z >= 0.0) {
            return Err(("policy.service_z", "must be >= 0".into()));
        }
        if self.review_period_days < 1 {
            return Err(("policy.review_period_days", "must be >= 1".into()));
        }
        if w.price < 0.0 || w.reliability < 0.0 || w.lead < 0.0 {
            return Err(("policy.supplier_weights", "weights must be nonnegative".into()));
        }
        if (w.price + w.reliability + w.lead - 1.0).abs() > 1e-9 {
            return Err(("policy.supplier_weights", "weights must sum to 1".into()));
        }
        if !(self.cv_flag_threshold > 0.0) {
            return Err(("policy.cv_flag_threshold", "must be > 0".into()));
        }
        if !(self.overstock_multiple > 1.0) {
            return Err(("policy.overstock_multiple", "must be > 1".into()));
        }
        if !(self.dispersion_flag_threshold > 0.0) {
            return Err(("policy.dispersion_flag_threshold", "must be > 0".into()));
        }
        if !(self.spike_k > 0.0) {
            return Err(("policy.spike_k", "must be > 0".into()));
        }
        if self.followup_window_days < 1 {
            return Err(("policy.followup_window_days", "must be >= 1".into()));
        }
        Ok(())
    }
}

/// On-hand plus on-order minus committed. Negative when commitments exceed supply.
pub fn inventory_position(rec: &InventoryRecord) -> i64 {
    rec.on_hand as i64 + rec.on_order as i64 - rec.committed as i64
}

/// Days the on-hand stock lasts at the given mean daily demand.
///
/// `+inf` when there is stock but no demand, `0` when both are zero.
pub fn days_of_cover(on_hand: u64, mean_per_day: f64) -> f64 {
    if mean_per_day <= 0.0 {
        if on_hand > 0 {
            f64::INFINITY
        } else {
            0.0
        }
    } else {
        on_hand as f64 / mean_per_day
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(on_hand: u64, on_order: u64, committed: u64) -> InventoryRecord {
        InventoryRecord {
            on_hand,
            on_order,
            committed,
            ..InventoryRecord::new(Holder::Dc, SkuId::new("A"))
        }
    }

    #[test]
    fn position_examples() {
        assert_eq!(inventory_position(&rec(20, 30, 10)), 40);
        assert_eq!(inventory_position(&rec(0, 0, 0)), 0);
        assert_eq!(inventory_position(&rec(5, 0, 12)), -7);
    }

    #[test]
    fn cover_examples() {
        assert_eq!(days_of_cover(30, 10.0), 3.0);
        assert_eq!(days_of_cover(0, 0.0), 0.0);
        assert!(days_of_cover(5, 0.0).is_infinite());
    }

    #[test]
    fn seq_ids_round_trip_through_strings() {
        let id: PoId = "PO-17".parse().unwrap();
        assert_eq!(id, PoId(17));
        assert_eq!(serde_json::to_string(&id).unwrap(), "\"PO-17\"");
        assert!("PLAN-3".parse::<PoId>().is_err());
        assert!("PO-".parse::<PoId>().is_err());
    }

    #[test]
    fn holder_serializes_as_plain_string() {
        assert_eq!(serde_json::to_string(&Holder::Dc).unwrap(), "\"DC\"");
        let h: Holder = serde_json::from_str("\"O01\"").unwrap();
        assert_eq!(h, Holder::Outlet(OutletId::new("O01")));
    }

    #[test]
    fn fefo_take_and_merge() {
        let mut r = rec(0, 0, 0);
        r.add_batch(Batch { qty: 4, expiry_day: 5 });
        r.add_batch(Batch { qty: 3, expiry_day: 2 });
        r.add_batch(Batch { qty: 1, expiry_day: 5 });
        assert_eq!(r.batches.len(), 2);
        let taken = r.take_fefo(5);
        assert_eq!(
            taken,
            vec![Batch { qty: 3, expiry_day: 2 }, Batch { qty: 2, expiry_day: 5 }]
        );
        assert_eq!(r.batch_total(), 3);
    }

    #[test]
    fn money_display() {
        assert_eq!(Money(12345).to_string(), "123.45");
        assert_eq!(Money(-5).to_string(), "-0.05");
    }

    #[test]
    fn default_policy_is_valid() {
        assert!(PolicyParams::default().check().is_ok());
        let mut p = PolicyParams::default();
        p.supplier_weights.lead = 0.3;
        assert_eq!(p.check().unwrap_err().0, "policy.supplier_weights");
    }

    proptest! {
        #[test]
        fn position_is_linear(a in (0u64..1_000_000, 0u64..1_000_000, 0u64..1_000_000),
                              b in (0u64..1_000_000, 0u64..1_000_000, 0u64..1_000_000)) {
            let sum = rec(a.0 + b.0, a.1 + b.1, a.2 + b.2);
            prop_assert_eq!(
                inventory_position(&rec(a.0, a.1, a.2)) + inventory_position(&rec(b.0, b.1, b.2)),
                inventory_position(&sum)
            );
        }
    }
}
