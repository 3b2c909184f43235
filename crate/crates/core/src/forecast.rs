//! Demand forecasting agent: weekday-seasonal naive baseline with calendar uplifts.
//!
//! For each future day the baseline is the mean of the same-weekday sales in the
//! trailing four weeks. Days that carried a promotion or holiday uplift are dropped
//! from the window rather than de-uplifted. The scheduled uplift of the target day
//! is then applied on top. With fewer than two same-weekday samples the trailing
//! window mean is used instead, and `basis_note` says which rule fired.

use serde::{Deserialize, Serialize};

use crate::domain::{Day, Holder, SkuId};
use crate::serde_util::lenient_f64;
use crate::sim::DemandCalendar;

pub const WINDOW_DAYS: u32 = 28;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSeries {
    pub holder: Holder,
    pub sku: SkuId,
    pub start_day: Day,
    pub horizon: u32,
    /// Units/day for `start_day + i`.
    pub mean: Vec<f64>,
    pub sigma_daily: f64,
    #[serde(with = "lenient_f64")]
    pub cv: f64,
    pub basis_note: String,
}

impl ForecastSeries {
    pub fn zero(holder: Holder, sku: SkuId, start_day: Day, horizon: u32, note: &str) -> Self {
        Self {
            holder,
            sku,
            start_day,
            horizon,
            mean: vec![0.0; horizon as usize],
            sigma_daily: 0.0,
            cv: f64::INFINITY,
            basis_note: note.to_string(),
        }
    }

    /// Mean for an absolute day, zero outside the horizon.
    pub fn mean_on(&self, day: Day) -> f64 {
        day.checked_sub(self.start_day)
            .and_then(|i| self.mean.get(i as usize))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn sum_first(&self, days: u32) -> f64 {
        self.mean.iter().take(days as usize).sum()
    }

    pub fn average(&self) -> f64 {
        if self.mean.is_empty() {
            0.0
        } else {
            self.mean.iter().sum::<f64>() / self.mean.len() as f64
        }
    }

    /// Average mean over the first `days` horizon days (or the full horizon if shorter).
    pub fn average_first(&self, days: u32) -> f64 {
        let n = (days as usize).min(self.mean.len());
        if n == 0 {
            0.0
        } else {
            self.mean[..n].iter().sum::<f64>() / n as f64
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sum_sq_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum()
}

/// Sample standard deviation (n − 1). Zero for fewer than two samples.
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        0.0
    } else {
        (sum_sq_dev(xs) / (xs.len() - 1) as f64).sqrt()
    }
}

/// Pooled standard deviation over groups: `sqrt(Σ SS_g / Σ (n_g − 1))`.
/// `None` when no group has two or more samples.
pub fn pooled_sd(groups: &[Vec<f64>]) -> Option<f64> {
    let (ss, df) = groups
        .iter()
        .filter(|g| g.len() >= 2)
        .fold((0.0, 0usize), |(ss, df), g| (ss + sum_sq_dev(g), df + g.len() - 1));
    (df > 0).then(|| (ss / df as f64).sqrt())
}

/// Forecast `horizon` days starting at `today` from the daily sales series
/// (`history[d]` = units sold on day `d`; only days before `today` are read).
pub fn forecast(
    history: &[u64],
    calendar: &DemandCalendar<'_>,
    holder: Holder,
    sku: SkuId,
    today: Day,
    horizon: u32,
) -> ForecastSeries {
    let horizon = horizon.max(1);
    let end = (today as usize).min(history.len());
    let start = end.saturating_sub(WINDOW_DAYS as usize);
    if end == start {
        return ForecastSeries::zero(holder, sku, today, horizon, "no data");
    }

    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); 7];
    let mut excluded = 0;
    for d in start..end {
        if calendar.is_uplifted(d as Day) {
            excluded += 1;
            continue;
        }
        groups[d % 7].push(history[d] as f64);
    }
    let mut clean: Vec<f64> = groups.iter().flatten().copied().collect();
    let contaminated = clean.is_empty();
    if contaminated {
        // every window day was uplifted; fall back to the raw window
        for d in start..end {
            groups[d % 7].push(history[d] as f64);
        }
        clean = history[start..end].iter().map(|&u| u as f64).collect();
    }
    let window_mean = mean(&clean);

    let mut weekday_days = 0;
    let mut fallback_days = 0;
    let mut uplift_notes = Vec::new();
    let means: Vec<f64> = (0..horizon)
        .map(|i| {
            let day = today + i;
            let g = &groups[(day % 7) as usize];
            let base = if g.len() >= 2 {
                weekday_days += 1;
                mean(g)
            } else {
                fallback_days += 1;
                window_mean
            };
            let promo = calendar.promo_uplift(day);
            let holiday = calendar.holiday_multiplier(day);
            if promo != 1.0 {
                uplift_notes.push(format!("promo x{promo} on day {day}"));
            }
            if holiday != 1.0 {
                uplift_notes.push(format!("holiday x{holiday} on day {day}"));
            }
            (base * promo * holiday).max(0.0)
        })
        .collect();

    let sigma = pooled_sd(&groups).unwrap_or_else(|| sample_sd(&clean));
    let avg = mean(&means);
    let cv = if avg > 0.0 {
        sigma / avg
    } else if sigma > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };

    let mut note = if fallback_days == 0 {
        format!("same-weekday mean over trailing {WINDOW_DAYS} days")
    } else if weekday_days == 0 {
        format!("fallback: trailing window mean ({} days)", clean.len())
    } else {
        format!("same-weekday mean for {weekday_days} days, trailing window mean for {fallback_days} days")
    };
    if excluded > 0 && !contaminated {
        note.push_str(&format!("; {excluded} uplifted days excluded"));
    }
    if contaminated {
        note.push_str("; window fully uplifted, raw sales used");
    }
    if !uplift_notes.is_empty() {
        note.push_str("; ");
        note.push_str(&uplift_notes.join(", "));
    }

    ForecastSeries {
        holder,
        sku,
        start_day: today,
        horizon,
        mean: means,
        sigma_daily: sigma,
        cv,
        basis_note: note,
    }
}

/// Sum of independent per-outlet forecasts: means add, variances add.
pub fn aggregate(holder: Holder, sku: SkuId, parts: &[&ForecastSeries]) -> ForecastSeries {
    let Some(first) = parts.first() else {
        return ForecastSeries::zero(holder, sku, 0, 1, "no data");
    };
    let horizon = parts.iter().map(|p| p.horizon).min().unwrap_or(first.horizon);
    let mean: Vec<f64> = (0..horizon as usize)
        .map(|i| parts.iter().map(|p| p.mean[i]).sum())
        .collect();
    let sigma = parts.iter().map(|p| p.sigma_daily.powi(2)).sum::<f64>().sqrt();
    let avg = mean.iter().sum::<f64>() / mean.len() as f64;
    let no_data = parts.iter().all(|p| p.basis_note == "no data");
    let cv = if no_data {
        f64::INFINITY
    } else if avg > 0.0 {
        sigma / avg
    } else if sigma > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    ForecastSeries {
        holder,
        sku,
        start_day: first.start_day,
        horizon,
        mean,
        sigma_daily: sigma,
        cv,
        basis_note: if no_data {
            "no data".to_string()
        } else {
            format!("sum of {} outlet forecasts", parts.len())
        },
    }
}
