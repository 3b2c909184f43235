use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::{ConfigError, DemandParams, WorldConfig};
use crate::domain::{
    Batch, CatalogEntry, Day, Holder, InventoryRecord, OutletId, PlanId, PoId, SkuId, SupplierId,
};
use crate::procurement::{PoState, PurchaseOrder};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("unknown purchase order {0}")]
    UnknownPo(PoId),
    #[error("purchase order {po} is {state:?}, expected Transmitted")]
    WrongState { po: PoId, state: PoState },
    #[error("unknown outlet {0}")]
    UnknownOutlet(OutletId),
    #[error("unknown sku {0}")]
    UnknownSku(SkuId),
    #[error("no catalog entry for supplier {supplier} and sku {sku}")]
    NoCatalogEntry { supplier: SupplierId, sku: SkuId },
}

/// Daily point-of-sale series for one (outlet, sku); `units[d]` is day `d`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SalesSeries {
    pub outlet: OutletId,
    pub sku: SkuId,
    pub units: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", content = "id", rename_all = "snake_case")]
pub enum ShipmentSource {
    PurchaseOrder(PoId),
    Plan(PlanId),
    /// Supplier deliveries already under way when the world starts.
    Opening,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shipment {
    pub source: ShipmentSource,
    pub holder: Holder,
    pub sku: SkuId,
    pub qty: u64,
    pub arrive_day: Day,
    /// Expiry-tagged content for perishable transfers out of the DC. Supplier
    /// deliveries leave this empty; their batch is stamped on arrival.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub batches: Vec<Batch>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledResponse {
    pub po_id: PoId,
    pub respond_day: Day,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SupplierStats {
    pub observed: u32,
    pub on_time: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ResponseKind {
    Confirmed,
    Partial { confirmed_qty: u64 },
    NoResponse,
    Rejected { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplierResponse {
    pub po_id: PoId,
    pub day: Day,
    #[serde(flatten)]
    pub kind: ResponseKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delivery_day: Option<Day>,
}

/// Per (holder, sku) movements of one simulated day. Only nonzero lines are kept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayLine {
    pub holder: Holder,
    pub sku: SkuId,
    pub sold: u64,
    pub lost_sales: u64,
    pub arrivals: u64,
    pub waste: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayEvents {
    pub day: Day,
    pub lines: Vec<DayLine>,
}

impl DayEvents {
    pub fn total_sold(&self) -> u64 {
        self.lines.iter().map(|l| l.sold).sum()
    }
    pub fn total_lost(&self) -> u64 {
        self.lines.iter().map(|l| l.lost_sales).sum()
    }
    pub fn total_waste(&self) -> u64 {
        self.lines.iter().map(|l| l.waste).sum()
    }
    pub fn stockout_lines(&self) -> u64 {
        self.lines.iter().filter(|l| l.lost_sales > 0).count() as u64
    }
}

/// Mutable part of the world. Serializes bit-for-bit identically for identical histories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub day: Day,
    /// DC records first, then one block per outlet; SKUs in id order within a block.
    pub inventories: Vec<InventoryRecord>,
    pub sales_history: Vec<SalesSeries>,
    pub in_transit: Vec<Shipment>,
    pub scheduled_responses: Vec<ScheduledResponse>,
    pub supplier_stats: BTreeMap<SupplierId, SupplierStats>,
    pub rng_state: ChaCha8Rng,
}

#[derive(Debug, Clone, Default)]
struct WorldIndex {
    outlet: HashMap<OutletId, usize>,
    sku: HashMap<SkuId, usize>,
    /// demand params position for pair `outlet * n_sku + sku`.
    demand: Vec<usize>,
    catalog: HashMap<(SupplierId, SkuId), usize>,
}

/// The simulated supermarket network: immutable configuration plus evolving state.
#[derive(Debug, Clone)]
pub struct World {
    config: WorldConfig,
    state: WorldState,
    index: WorldIndex,
}

/// Demand mean for one pair on `day` with no noise or spikes.
fn expected_demand(config: &WorldConfig, params: &DemandParams, day: Day) -> f64 {
    let cal = config.calendar_for(params);
    let season = 1.0 + params.season_amplitude * (2.0 * PI * day as f64 / 365.0 + params.season_phase).sin();
    params.base
        * params.weekday_factors[(day % 7) as usize]
        * season
        * cal.promo_uplift(day)
        * cal.holiday_multiplier(day)
}

impl World {
    /// Builds day-0 state. Outlets start with `target_cover_days × base` units. The DC starts
    /// warm: `review + 2` days of expected network demand on hand, and each of days
    /// `1..=max_lead + 1` already has that day's expected network demand in transit.
    /// Opening perishable stock is fresh, expiring on day `shelf_life - 1`.
    pub fn generate(config: WorldConfig) -> Result<World, ConfigError> {
        config.validate()?;
        let mut config = config;
        config.outlets.sort_by(|a, b| a.id.cmp(&b.id));
        config.skus.sort_by(|a, b| a.id.cmp(&b.id));
        config.suppliers.sort_by(|a, b| a.id.cmp(&b.id));
        config
            .catalog
            .sort_by(|a, b| (&a.sku_id, &a.supplier_id).cmp(&(&b.sku_id, &b.supplier_id)));
        config.fleet.sort_by(|a, b| a.id.cmp(&b.id));
        config
            .demand
            .sort_by(|a, b| (&a.outlet, &a.sku).cmp(&(&b.outlet, &b.sku)));

        let mut index = WorldIndex::default();
        for (i, o) in config.outlets.iter().enumerate() {
            index.outlet.insert(o.id.clone(), i);
        }
        for (i, s) in config.skus.iter().enumerate() {
            index.sku.insert(s.id.clone(), i);
        }
        for (i, c) in config.catalog.iter().enumerate() {
            index
                .catalog
                .insert((c.supplier_id.clone(), c.sku_id.clone()), i);
        }
        let n_sku = config.skus.len();
        index.demand = vec![0; config.outlets.len() * n_sku];
        for (i, d) in config.demand.iter().enumerate() {
            let o = index.outlet[&d.outlet];
            let s = index.sku[&d.sku];
            index.demand[o * n_sku + s] = i;
        }

        let review = config.policy.review_period_days;
        let mut inventories = Vec::with_capacity((config.outlets.len() + 1) * n_sku);
        let mut in_transit = Vec::new();
        for (si, sku) in config.skus.iter().enumerate() {
            let max_lead = config
                .catalog
                .iter()
                .filter(|c| c.sku_id == sku.id)
                .map(|c| c.lead_time_days)
                .max()
                .unwrap_or(0);
            let network = |day: Day| -> u64 {
                (0..config.outlets.len())
                    .map(|oi| expected_demand(&config, &config.demand[index.demand[oi * n_sku + si]], day).round() as u64)
                    .sum()
            };
            let mut rec = InventoryRecord::new(Holder::Dc, sku.id.clone());
            rec.on_hand = (0..review + 2).map(|d| network(d as Day)).sum();
            Self::stock_batches(&mut rec, sku.shelf_life_days);
            for arrive_day in 1..=(max_lead + 1) as Day {
                let qty = network(arrive_day);
                if qty == 0 {
                    continue;
                }
                rec.on_order += qty;
                in_transit.push(Shipment {
                    source: ShipmentSource::Opening,
                    holder: Holder::Dc,
                    sku: sku.id.clone(),
                    qty,
                    arrive_day,
                    batches: Vec::new(),
                });
            }
            inventories.push(rec);
        }
        let mut sales_history = Vec::new();
        for (oi, outlet) in config.outlets.iter().enumerate() {
            for (si, sku) in config.skus.iter().enumerate() {
                let params = &config.demand[index.demand[oi * n_sku + si]];
                let mut rec = InventoryRecord::new(Holder::Outlet(outlet.id.clone()), sku.id.clone());
                rec.on_hand = (sku.target_cover_days as f64 * params.base).round() as u64;
                Self::stock_batches(&mut rec, sku.shelf_life_days);
                inventories.push(rec);
                sales_history.push(SalesSeries {
                    outlet: outlet.id.clone(),
                    sku: sku.id.clone(),
                    units: Vec::new(),
                });
            }
        }
        let supplier_stats = config
            .suppliers
            .iter()
            .map(|s| (s.id.clone(), SupplierStats::default()))
            .collect();
        let state = WorldState {
            day: 0,
            inventories,
            sales_history,
            in_transit,
            scheduled_responses: Vec::new(),
            supplier_stats,
            rng_state: ChaCha8Rng::seed_from_u64(config.seed),
        };
        Ok(World {
            config,
            state,
            index,
        })
    }

    fn stock_batches(rec: &mut InventoryRecord, shelf_life: Option<u32>) {
        if let (Some(life), true) = (shelf_life, rec.on_hand > 0) {
            rec.add_batch(Batch {
                qty: rec.on_hand,
                expiry_day: life.saturating_sub(1) as Day,
            });
        }
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn day(&self) -> Day {
        self.state.day
    }

    pub fn serialize_state(&self) -> String {
        serde_json::to_string(&self.state).expect("world state serializes")
    }

    fn n_sku(&self) -> usize {
        self.config.skus.len()
    }

    pub fn outlet_index(&self, id: &OutletId) -> Option<usize> {
        self.index.outlet.get(id).copied()
    }

    pub fn sku_index(&self, id: &SkuId) -> Option<usize> {
        self.index.sku.get(id).copied()
    }

    fn record_index(&self, holder: &Holder, sku: &SkuId) -> Option<usize> {
        let s = self.sku_index(sku)?;
        let h = match holder {
            Holder::Dc => 0,
            Holder::Outlet(o) => self.outlet_index(o)? + 1,
        };
        Some(h * self.n_sku() + s)
    }

    pub fn record(&self, holder: &Holder, sku: &SkuId) -> Option<&InventoryRecord> {
        self.record_index(holder, sku).map(|i| &self.state.inventories[i])
    }

    fn record_mut(&mut self, holder: &Holder, sku: &SkuId) -> Option<&mut InventoryRecord> {
        self.record_index(holder, sku)
            .map(move |i| &mut self.state.inventories[i])
    }

    pub fn demand_params(&self, outlet: &OutletId, sku: &SkuId) -> Option<&DemandParams> {
        let o = self.outlet_index(outlet)?;
        let s = self.sku_index(sku)?;
        Some(&self.config.demand[self.index.demand[o * self.n_sku() + s]])
    }

    pub fn sales(&self, outlet: &OutletId, sku: &SkuId) -> Option<&SalesSeries> {
        let o = self.outlet_index(outlet)?;
        let s = self.sku_index(sku)?;
        Some(&self.state.sales_history[o * self.n_sku() + s])
    }

    pub fn catalog_entry(&self, supplier: &SupplierId, sku: &SkuId) -> Option<&CatalogEntry> {
        self.index
            .catalog
            .get(&(supplier.clone(), sku.clone()))
            .map(|&i| &self.config.catalog[i])
    }

    pub fn catalog_for<'a>(&'a self, sku: &'a SkuId) -> impl Iterator<Item = &'a CatalogEntry> + 'a {
        self.config.catalog.iter().filter(move |c| &c.sku_id == sku)
    }

    /// Observed on-time fraction, or the configured prior before any observation.
    pub fn supplier_reliability(&self, id: &SupplierId) -> f64 {
        match self.state.supplier_stats.get(id) {
            Some(st) if st.observed > 0 => st.on_time as f64 / st.observed as f64,
            _ => self.config.supplier(id).map(|s| s.reliability).unwrap_or(0.0),
        }
    }

    pub fn record_supplier_outcome(&mut self, id: &SupplierId, on_time: bool) {
        let st = self.state.supplier_stats.entry(id.clone()).or_default();
        st.observed += 1;
        st.on_time += u32::from(on_time);
    }

    /// Confirmed deliveries still travelling to `holder`, as `(arrive_day, qty)`.
    pub fn scheduled_arrivals(&self, holder: &Holder, sku: &SkuId) -> Vec<(Day, u64)> {
        self.state
            .in_transit
            .iter()
            .filter(|s| &s.holder == holder && &s.sku == sku)
            .map(|s| (s.arrive_day, s.qty))
            .collect()
    }

    /// Demand multiplier of the generative model before noise and spikes.
    pub fn deterministic_demand(&self, params: &DemandParams, day: Day) -> f64 {
        expected_demand(&self.config, params, day)
    }

    /// Draws today's demand for one pair. Always consumes exactly two draws
    /// (noise, spike) so the stream position depends only on iteration order.
    pub fn realize_demand(&mut self, outlet: &OutletId, sku: &SkuId) -> Result<u64, SimError> {
        let params = self
            .demand_params(outlet, sku)
            .ok_or_else(|| {
                if self.outlet_index(outlet).is_none() {
                    SimError::UnknownOutlet(outlet.clone())
                } else {
                    SimError::UnknownSku(sku.clone())
                }
            })?
            .clone();
        Ok(self.draw_demand(&params))
    }

    fn draw_demand(&mut self, params: &DemandParams) -> u64 {
        let mean = self.deterministic_demand(params, self.state.day);
        let z: f64 = self.state.rng_state.sample(StandardNormal);
        let u: f64 = self.state.rng_state.random();
        let spike = if u < params.spike_probability {
            params.spike_factor
        } else {
            1.0
        };
        let d = mean * (params.noise_sigma * z).exp() * spike;
        d.round().max(0.0) as u64
    }

    /// Advances one day: arrivals, sales (lost sales recorded, not backordered), expiry.
    pub fn step_day(&mut self) -> DayEvents {
        let day = self.state.day;
        let n_sku = self.n_sku();
        let mut lines: BTreeMap<usize, DayLine> = BTreeMap::new();
        let line = |lines: &mut BTreeMap<usize, DayLine>, idx: usize, rec: &InventoryRecord| {
            lines.entry(idx).or_insert_with(|| DayLine {
                holder: rec.holder.clone(),
                sku: rec.sku_id.clone(),
                sold: 0,
                lost_sales: 0,
                arrivals: 0,
                waste: 0,
            });
        };

        // (1) arrivals
        let (due, pending): (Vec<_>, Vec<_>) = std::mem::take(&mut self.state.in_transit)
            .into_iter()
            .partition(|s| s.arrive_day <= day);
        self.state.in_transit = pending;
        for ship in due {
            let idx = self
                .record_index(&ship.holder, &ship.sku)
                .expect("shipment targets a known record");
            let shelf = self.config.skus[idx % n_sku].shelf_life_days;
            let rec = &mut self.state.inventories[idx];
            rec.on_hand += ship.qty;
            rec.on_order = rec.on_order.saturating_sub(ship.qty);
            if let Some(life) = shelf {
                if ship.batches.is_empty() {
                    rec.add_batch(Batch {
                        qty: ship.qty,
                        expiry_day: day + life - 1,
                    });
                } else {
                    for b in ship.batches {
                        rec.add_batch(b);
                    }
                }
            }
            line(&mut lines, idx, rec);
            lines.get_mut(&idx).unwrap().arrivals += ship.qty;
        }

        // (2) sales, fixed (outlet, sku) order
        for o in 0..self.config.outlets.len() {
            for s in 0..n_sku {
                let params = self.config.demand[self.index.demand[o * n_sku + s]].clone();
                let demand = self.draw_demand(&params);
                let idx = (o + 1) * n_sku + s;
                let perishable = self.config.skus[s].is_perishable();
                let rec = &mut self.state.inventories[idx];
                let sold = demand.min(rec.on_hand);
                rec.on_hand -= sold;
                if perishable {
                    rec.take_fefo(sold);
                }
                self.state.sales_history[o * n_sku + s].units.push(sold);
                if demand > 0 {
                    line(&mut lines, idx, rec);
                    let l = lines.get_mut(&idx).unwrap();
                    l.sold += sold;
                    l.lost_sales += demand - sold;
                }
            }
        }

        // (3) expiry
        for idx in 0..self.state.inventories.len() {
            let rec = &mut self.state.inventories[idx];
            let waste: u64 = rec
                .batches
                .iter()
                .filter(|b| b.expiry_day <= day)
                .map(|b| b.qty)
                .sum();
            if waste > 0 {
                rec.batches.retain(|b| b.expiry_day > day);
                rec.on_hand -= waste;
                line(&mut lines, idx, rec);
                lines.get_mut(&idx).unwrap().waste += waste;
            }
        }

        // (4) advance
        self.state.day += 1;
        DayEvents {
            day,
            lines: lines.into_values().collect(),
        }
    }

    /// Registers a transmitted PO; the supplier answers after its response delay.
    pub fn schedule_response(&mut self, po: &PurchaseOrder) -> Result<Day, SimError> {
        let supplier = self
            .config
            .supplier(&po.supplier_id)
            .ok_or(SimError::UnknownPo(po.id))?;
        let respond_day = self.state.day + supplier.response_delay_days;
        self.state.scheduled_responses.push(ScheduledResponse {
            po_id: po.id,
            respond_day,
        });
        Ok(respond_day)
    }

    pub fn has_scheduled_response(&self, po: PoId) -> bool {
        self.state.scheduled_responses.iter().any(|r| r.po_id == po)
    }

    /// Drops a pending supplier answer; returns whether one was scheduled.
    pub fn cancel_response(&mut self, po: PoId) -> bool {
        let before = self.state.scheduled_responses.len();
        self.state.scheduled_responses.retain(|r| r.po_id != po);
        before != self.state.scheduled_responses.len()
    }

    /// POs whose supplier answer is due today, in id order.
    pub fn due_responses(&self) -> Vec<PoId> {
        let mut due: Vec<PoId> = self
            .state
            .scheduled_responses
            .iter()
            .filter(|r| r.respond_day <= self.state.day)
            .map(|r| r.po_id)
            .collect();
        due.sort();
        due.dedup();
        due
    }

    /// Draws the supplier's answer to a transmitted PO. Consumes exactly three draws:
    /// confirmation, partial fraction, delivery delay.
    pub fn supplier_respond(&mut self, po: &PurchaseOrder) -> Result<SupplierResponse, SimError> {
        let pos = self
            .state
            .scheduled_responses
            .iter()
            .position(|r| r.po_id == po.id)
            .ok_or(SimError::UnknownPo(po.id))?;
        if po.state != PoState::Transmitted {
            return Err(SimError::WrongState {
                po: po.id,
                state: po.state,
            });
        }
        let supplier = self
            .config
            .supplier(&po.supplier_id)
            .ok_or(SimError::UnknownPo(po.id))?
            .clone();
        let lead = self
            .catalog_entry(&po.supplier_id, &po.sku)
            .ok_or_else(|| SimError::NoCatalogEntry {
                supplier: po.supplier_id.clone(),
                sku: po.sku.clone(),
            })?
            .lead_time_days;
        self.state.scheduled_responses.remove(pos);

        let rng = &mut self.state.rng_state;
        let u_confirm: f64 = rng.random();
        let u_partial: f64 = rng.random();
        let u_delay: f64 = rng.random();

        let [lo, hi] = supplier.partial_fraction_range;
        let kind = if u_confirm < supplier.confirm_probability {
            ResponseKind::Confirmed
        } else {
            let frac = lo + (hi - lo) * u_partial;
            let confirmed = (po.qty as f64 * frac).round() as u64;
            if confirmed == 0 {
                ResponseKind::NoResponse
            } else if confirmed >= po.qty {
                ResponseKind::Confirmed
            } else {
                ResponseKind::Partial {
                    confirmed_qty: confirmed,
                }
            }
        };
        let delivery_day = match kind {
            ResponseKind::NoResponse | ResponseKind::Rejected { .. } => None,
            _ => {
                let mut d = po.order_day + lead;
                if u_delay < supplier.delay_probability {
                    d += supplier.delivery_delay_days;
                }
                Some(d.max(self.state.day + 1))
            }
        };
        Ok(SupplierResponse {
            po_id: po.id,
            day: self.state.day,
            kind,
            delivery_day,
        })
    }

    /// Books a confirmed supplier delivery into the DC pipeline.
    pub fn schedule_delivery(&mut self, po: PoId, sku: &SkuId, qty: u64, arrive_day: Day) {
        if qty == 0 {
            return;
        }
        if let Some(rec) = self.record_mut(&Holder::Dc, sku) {
            rec.on_order += qty;
        }
        self.state.in_transit.push(Shipment {
            source: ShipmentSource::PurchaseOrder(po),
            holder: Holder::Dc,
            sku: sku.clone(),
            qty,
            arrive_day,
            batches: Vec::new(),
        });
    }

    /// DC stock not yet reserved by a pending plan.
    pub fn dc_available(&self, sku: &SkuId) -> u64 {
        self.record(&Holder::Dc, sku)
            .map(|r| r.on_hand.saturating_sub(r.committed))
            .unwrap_or(0)
    }

    pub fn commit_dc(&mut self, sku: &SkuId, qty: u64) {
        if let Some(rec) = self.record_mut(&Holder::Dc, sku) {
            rec.committed += qty;
        }
    }

    pub fn release_dc(&mut self, sku: &SkuId, qty: u64) {
        if let Some(rec) = self.record_mut(&Holder::Dc, sku) {
            rec.committed = rec.committed.saturating_sub(qty);
        }
    }

    /// Moves committed DC stock onto trucks bound for outlets. Returns what was actually
    /// shipped per line (less than requested only if stock was written off meanwhile).
    pub fn dispatch(
        &mut self,
        plan: PlanId,
        loads: &[(OutletId, SkuId, u64)],
        arrive_day: Day,
    ) -> Vec<(OutletId, SkuId, u64)> {
        let mut shipped = Vec::new();
        for (outlet, sku, qty) in loads {
            let perishable = self
                .sku_index(sku)
                .map(|i| self.config.skus[i].is_perishable())
                .unwrap_or(false);
            let Some(dc) = self.record_mut(&Holder::Dc, sku) else {
                continue;
            };
            let n = (*qty).min(dc.on_hand);
            dc.committed = dc.committed.saturating_sub(*qty);
            dc.on_hand -= n;
            let batches = if perishable { dc.take_fefo(n) } else { Vec::new() };
            if n == 0 {
                continue;
            }
            let holder = Holder::Outlet(outlet.clone());
            if let Some(rec) = self.record_mut(&holder, sku) {
                rec.on_order += n;
            }
            self.state.in_transit.push(Shipment {
                source: ShipmentSource::Plan(plan),
                holder,
                sku: sku.clone(),
                qty: n,
                arrive_day,
                batches,
            });
            shipped.push((outlet.clone(), sku.clone(), n));
        }
        shipped
    }
}
