//! Deterministic, seeded supermarket world: demand, sales, supplier behaviour,
//! deliveries and expiry.

mod config;
mod scenario;
mod world;

pub use config::{ConfigError, DemandCalendar, DemandParams, Promo, Vehicle, WorldConfig};
pub use scenario::{generate_scenario, Profile, ScenarioSpec};
pub use world::{
    DayEvents, DayLine, ResponseKind, SalesSeries, ScheduledResponse, Shipment, ShipmentSource,
    SimError, SupplierResponse, SupplierStats, World, WorldState,
};
