use replen_core::domain::Holder;
use replen_core::forecast::forecast;
use replen_core::sim::{generate_scenario, ScenarioSpec, World};

#[test]
fn noiseless_world_is_forecast_exactly_after_four_weeks() {
    let mut cfg = generate_scenario(&ScenarioSpec::new(2, 3, 12));
    cfg.holidays.clear();
    for s in &mut cfg.skus {
        s.shelf_life_days = None;
        s.target_cover_days = 500;
    }
    for d in &mut cfg.demand {
        d.noise_sigma = 0.0;
        d.season_amplitude = 0.0;
        d.spike_probability = 0.0;
        d.promo_calendar.clear();
    }
    let mut world = World::generate(cfg).unwrap();
    let days = 70;
    for _ in 0..days {
        world.step_day();
    }
    let cfg = world.config().clone();
    let mut checked = 0;
    for series in &world.state().sales_history {
        let params = world.demand_params(&series.outlet, &series.sku).unwrap();
        let calendar = cfg.calendar_for(params);
        for t in 29..days {
            let f = forecast(&series.units, &calendar, Holder::Outlet(series.outlet.clone()), series.sku.clone(), t, 7);
            for i in 0..7u32 {
                let day = (t + i) as usize;
                if day < series.units.len() {
                    assert_eq!(f.mean[i as usize], series.units[day] as f64, "{}/{} day {day}", series.outlet, series.sku);
                    checked += 1;
                }
            }
            assert_eq!(f.sigma_daily, 0.0);
        }
    }
    assert!(checked > 1000);
}
