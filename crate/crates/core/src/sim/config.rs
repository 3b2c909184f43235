use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::domain::{
    CatalogEntry, Day, Outlet, OutletId, Point, PolicyParams, Sku, SkuId, Supplier, SupplierId,
    TempClass, VehicleId,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid config field `{field}`: {reason}")]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl ConfigError {
    fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: VehicleId,
    /// Litres.
    pub capacity: f64,
    pub temp_class: TempClass,
    /// km/h.
    pub speed: f64,
    #[serde(default = "yes")]
    pub available: bool,
}

fn yes() -> bool {
    true
}

/// A promotion window, inclusive on both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Promo {
    pub start_day: Day,
    pub end_day: Day,
    pub uplift: f64,
}

impl Promo {
    pub fn covers(&self, day: Day) -> bool {
        self.start_day <= day && day <= self.end_day
    }
}

/// Generative demand model for one (outlet, sku) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandParams {
    pub outlet: OutletId,
    pub sku: SkuId,
    /// Units/day before multipliers.
    pub base: f64,
    /// Indexed by `day % 7`.
    pub weekday_factors: [f64; 7],
    #[serde(default)]
    pub season_amplitude: f64,
    #[serde(default)]
    pub season_phase: f64,
    #[serde(default)]
    pub promo_calendar: Vec<Promo>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub spike_probability: f64,
    #[serde(default = "one")]
    pub spike_factor: f64,
}

fn one() -> f64 {
    1.0
}

/// Read-only calendar signals for one (outlet, sku) pair.
#[derive(Debug, Clone, Copy)]
pub struct DemandCalendar<'a> {
    pub promos: &'a [Promo],
    pub holidays: &'a [Day],
    pub holiday_factor: f64,
}

impl<'a> DemandCalendar<'a> {
    pub const EMPTY: DemandCalendar<'static> = DemandCalendar {
        promos: &[],
        holidays: &[],
        holiday_factor: 1.0,
    };

    /// Product of the uplifts of all promotions active on `day`.
    pub fn promo_uplift(&self, day: Day) -> f64 {
        self.promos
            .iter()
            .filter(|p| p.covers(day))
            .map(|p| p.uplift)
            .product()
    }

    pub fn is_holiday(&self, day: Day) -> bool {
        self.holidays.contains(&day)
    }

    pub fn holiday_multiplier(&self, day: Day) -> f64 {
        if self.is_holiday(day) {
            self.holiday_factor
        } else {
            1.0
        }
    }

    /// Days whose demand carries a calendar uplift and therefore is not baseline.
    pub fn is_uplifted(&self, day: Day) -> bool {
        self.promos.iter().any(|p| p.covers(day)) || (self.is_holiday(day) && self.holiday_factor != 1.0)
    }
}

/// Full description of a synthetic supermarket network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub seed: u64,
    #[serde(default)]
    pub dc_location: Point,
    pub outlets: Vec<Outlet>,
    pub skus: Vec<Sku>,
    pub suppliers: Vec<Supplier>,
    pub catalog: Vec<CatalogEntry>,
    pub fleet: Vec<Vehicle>,
    pub demand: Vec<DemandParams>,
    #[serde(default)]
    pub policy: PolicyParams,
    #[serde(default)]
    pub holidays: Vec<Day>,
    /// Demand multiplier applied on holidays.
    #[serde(default = "one")]
    pub holiday_factor: f64,
    /// Forecast horizon override; derived from lead times when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forecast_horizon: Option<u32>,
}

fn prob(field: String, p: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(ConfigError::new(field, format!("probability {p} outside [0,1]")))
    }
}

impl WorldConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::new("<document>", e.to_string()))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn calendar_for<'a>(&'a self, params: &'a DemandParams) -> DemandCalendar<'a> {
        DemandCalendar {
            promos: &params.promo_calendar,
            holidays: &self.holidays,
            holiday_factor: self.holiday_factor,
        }
    }

    /// Horizon used by the forecasting agent.
    pub fn horizon(&self) -> u32 {
        if let Some(h) = self.forecast_horizon {
            return h.max(1);
        }
        let max_lead = self.catalog.iter().map(|c| c.lead_time_days).max().unwrap_or(0);
        let max_cover = self.skus.iter().map(|s| s.target_cover_days).max().unwrap_or(0);
        // one extra day: a delivery is put away on its arrival day and usable the next
        (max_lead + 1 + self.policy.review_period_days)
            .max(max_cover + 1)
            .max(7)
    }

    /// Checks every field invariant and referential link. Names the first offending field.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.policy
            .check()
            .map_err(|(f, r)| ConfigError::new(f, r))?;

        let mut outlet_ids = BTreeSet::new();
        for (i, o) in self.outlets.iter().enumerate() {
            let f = |name: &str| format!("outlets[{i}].{name}");
            if o.id.as_str() == crate::domain::Holder::DC_TAG || o.id.as_str().is_empty() {
                return Err(ConfigError::new(f("id"), "reserved or empty id"));
            }
            if !outlet_ids.insert(o.id.clone()) {
                return Err(ConfigError::new(f("id"), format!("duplicate id {}", o.id)));
            }
            if !o.delivery_window.is_valid() {
                return Err(ConfigError::new(f("delivery_window"), "need 0 <= open < close <= 1440"));
            }
            if !(o.priority_weight >= 1.0) {
                return Err(ConfigError::new(f("priority_weight"), "must be >= 1"));
            }
            if !o.location.x.is_finite() || !o.location.y.is_finite() {
                return Err(ConfigError::new(f("location"), "coordinates must be finite"));
            }
        }
        if self.outlets.is_empty() {
            return Err(ConfigError::new("outlets", "at least one outlet required"));
        }

        let mut sku_ids = BTreeSet::new();
        for (i, s) in self.skus.iter().enumerate() {
            let f = |name: &str| format!("skus[{i}].{name}");
            if !sku_ids.insert(s.id.clone()) {
                return Err(ConfigError::new(f("id"), format!("duplicate id {}", s.id)));
            }
            if s.case_pack < 1 {
                return Err(ConfigError::new(f("case_pack"), "must be >= 1"));
            }
            if !(s.unit_volume > 0.0) {
                return Err(ConfigError::new(f("unit_volume"), "must be > 0"));
            }
            if s.shelf_life_days == Some(0) {
                return Err(ConfigError::new(f("shelf_life_days"), "must be >= 1 when present"));
            }
            if s.target_cover_days < 1 {
                return Err(ConfigError::new(f("target_cover_days"), "must be >= 1"));
            }
        }

        let mut supplier_ids = BTreeSet::new();
        for (i, s) in self.suppliers.iter().enumerate() {
            let f = |name: &str| format!("suppliers[{i}].{name}");
            if !supplier_ids.insert(s.id.clone()) {
                return Err(ConfigError::new(f("id"), format!("duplicate id {}", s.id)));
            }
            prob(f("confirm_probability"), s.confirm_probability)?;
            prob(f("delay_probability"), s.delay_probability)?;
            prob(f("reliability"), s.reliability)?;
            let [lo, hi] = s.partial_fraction_range;
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return Err(ConfigError::new(f("partial_fraction_range"), "need 0 <= low <= high <= 1"));
            }
        }

        let mut pairs = BTreeSet::new();
        for (i, c) in self.catalog.iter().enumerate() {
            let f = |name: &str| format!("catalog[{i}].{name}");
            if !supplier_ids.contains(&c.supplier_id) {
                return Err(ConfigError::new(f("supplier_id"), format!("unknown supplier {}", c.supplier_id)));
            }
            if !sku_ids.contains(&c.sku_id) {
                return Err(ConfigError::new(f("sku_id"), format!("unknown sku {}", c.sku_id)));
            }
            if !pairs.insert((c.supplier_id.clone(), c.sku_id.clone())) {
                return Err(ConfigError::new(f("sku_id"), "duplicate (supplier, sku) entry"));
            }
            if c.unit_price.0 <= 0 {
                return Err(ConfigError::new(f("unit_price"), "must be > 0"));
            }
            if c.moq < 1 {
                return Err(ConfigError::new(f("moq"), "must be >= 1"));
            }
            if c.lead_time_days < 1 {
                return Err(ConfigError::new(f("lead_time_days"), "must be >= 1"));
            }
        }

        let mut vehicle_ids = BTreeSet::new();
        for (i, v) in self.fleet.iter().enumerate() {
            let f = |name: &str| format!("fleet[{i}].{name}");
            if !vehicle_ids.insert(v.id.clone()) {
                return Err(ConfigError::new(f("id"), format!("duplicate id {}", v.id)));
            }
            if !(v.capacity > 0.0) {
                return Err(ConfigError::new(f("capacity"), "must be > 0"));
            }
            if !(v.speed > 0.0) {
                return Err(ConfigError::new(f("speed"), "must be > 0"));
            }
        }

        let mut demand_pairs: BTreeMap<(OutletId, SkuId), usize> = BTreeMap::new();
        for (i, d) in self.demand.iter().enumerate() {
            let f = |name: &str| format!("demand[{i}].{name}");
            if !outlet_ids.contains(&d.outlet) {
                return Err(ConfigError::new(f("outlet"), format!("unknown outlet {}", d.outlet)));
            }
            if !sku_ids.contains(&d.sku) {
                return Err(ConfigError::new(f("sku"), format!("unknown sku {}", d.sku)));
            }
            if demand_pairs.insert((d.outlet.clone(), d.sku.clone()), i).is_some() {
                return Err(ConfigError::new(f("sku"), "duplicate (outlet, sku) demand entry"));
            }
            if !(d.base > 0.0) {
                return Err(ConfigError::new(f("base"), "must be > 0"));
            }
            if d.weekday_factors.iter().any(|w| !(*w > 0.0)) {
                return Err(ConfigError::new(f("weekday_factors"), "all factors must be > 0"));
            }
            let avg = d.weekday_factors.iter().sum::<f64>() / 7.0;
            if (avg - 1.0).abs() > 1e-6 {
                return Err(ConfigError::new(f("weekday_factors"), format!("average {avg} is not 1")));
            }
            if !(0.0..1.0).contains(&d.season_amplitude) {
                return Err(ConfigError::new(f("season_amplitude"), "must lie in [0,1)"));
            }
            if !(d.noise_sigma >= 0.0) {
                return Err(ConfigError::new(f("noise_sigma"), "must be >= 0"));
            }
            prob(f("spike_probability"), d.spike_probability)?;
            if !(d.spike_factor >= 1.0) {
                return Err(ConfigError::new(f("spike_factor"), "must be >= 1"));
            }
            for (j, p) in d.promo_calendar.iter().enumerate() {
                if p.start_day > p.end_day || !(p.uplift >= 1.0) {
                    return Err(ConfigError::new(
                        format!("demand[{i}].promo_calendar[{j}]"),
                        "need start_day <= end_day and uplift >= 1",
                    ));
                }
            }
        }
        for o in &outlet_ids {
            for s in &sku_ids {
                if !demand_pairs.contains_key(&(o.clone(), s.clone())) {
                    return Err(ConfigError::new("demand", format!("missing entry for ({o}, {s})")));
                }
            }
        }
        if !(self.holiday_factor > 0.0) {
            return Err(ConfigError::new("holiday_factor", "must be > 0"));
        }
        Ok(())
    }

    pub fn supplier(&self, id: &SupplierId) -> Option<&Supplier> {
        self.suppliers.iter().find(|s| &s.id == id)
    }
}
