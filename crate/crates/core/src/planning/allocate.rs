//! Integer apportionment of scarce DC stock across outlet needs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{OutletId, SkuId};

/// One `(outlet, sku) -> units` cell. Used for needs, allocations and route loads.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AllocationLine {
    pub outlet: OutletId,
    pub sku: SkuId,
    pub qty: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    /// Positive allocations sorted by (outlet, sku).
    pub lines: Vec<AllocationLine>,
    pub unallocated: BTreeMap<SkuId, u64>,
}

impl Allocation {
    pub fn qty(&self, outlet: &OutletId, sku: &SkuId) -> u64 {
        self.lines
            .iter()
            .find(|l| &l.outlet == outlet && &l.sku == sku)
            .map(|l| l.qty)
            .unwrap_or(0)
    }

    pub fn total_for(&self, sku: &SkuId) -> u64 {
        self.lines.iter().filter(|l| &l.sku == sku).map(|l| l.qty).sum()
    }
}

const WEIGHT_SCALE: f64 = 1e6;

fn weight_units(w: f64) -> u128 {
    (w.max(0.0) * WEIGHT_SCALE).round() as u128
}

/// Splits `available` over `(outlet, need, weight)` rows. Returns one quantity per row.
///
/// Rows whose weighted share reaches their need are capped and the rest is re-shared
/// among the others; the final integer split uses floors plus largest remainders,
/// ties to the lower outlet id.
pub fn apportion(available: u64, rows: &[(OutletId, u64, f64)]) -> Vec<u64> {
    let total_need: u64 = rows.iter().map(|r| r.1).sum();
    if total_need <= available {
        return rows.iter().map(|r| r.1).collect();
    }
    let mut out = vec![0u64; rows.len()];
    let mut active: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].1 > 0).collect();
    let mut remaining = available as u128;
    loop {
        let wn: Vec<u128> = active.iter().map(|&i| weight_units(rows[i].2) * rows[i].1 as u128).collect();
        let total: u128 = wn.iter().sum();
        if total == 0 {
            // every remaining row has zero weight: share by need alone
            if active.iter().all(|&i| weight_units(rows[i].2) == 0) && !active.is_empty() {
                let fallback: Vec<(OutletId, u64, f64)> = active.iter().map(|&i| (rows[i].0.clone(), rows[i].1, 1.0)).collect();
                for (k, q) in apportion(remaining as u64, &fallback).into_iter().enumerate() {
                    out[active[k]] = q;
                }
            }
            return out;
        }
        // cap rows whose exact quota reaches their need: remaining * wn / total >= need
        let capped: Vec<usize> = active
            .iter()
            .zip(&wn)
            .filter(|(&i, &w)| remaining * w >= rows[i].1 as u128 * total)
            .map(|(&i, _)| i)
            .collect();
        if capped.is_empty() {
            let mut shares: Vec<(usize, u128, u128)> = active
                .iter()
                .zip(&wn)
                .map(|(&i, &w)| (i, remaining * w / total, remaining * w % total))
                .collect();
            let floors: u128 = shares.iter().map(|s| s.1).sum();
            let mut left = remaining - floors;
            shares.sort_by(|a, b| b.2.cmp(&a.2).then_with(|| rows[a.0].0.cmp(&rows[b.0].0)));
            for s in shares.iter_mut() {
                if left == 0 {
                    break;
                }
                s.1 += 1;
                left -= 1;
            }
            for (i, q, _) in shares {
                out[i] = q as u64;
            }
            return out;
        }
        for i in capped {
            out[i] = rows[i].1;
            remaining -= rows[i].1 as u128;
            active.retain(|&a| a != i);
        }
        if active.is_empty() {
            return out;
        }
    }
}

/// Allocates available stock per sku across outlet needs.
pub fn allocate(available: &BTreeMap<SkuId, u64>, needs: &[AllocationLine], weights: &BTreeMap<OutletId, f64>) -> Allocation {
    let mut by_sku: BTreeMap<&SkuId, Vec<&AllocationLine>> = BTreeMap::new();
    for n in needs {
        by_sku.entry(&n.sku).or_default().push(n);
    }
    let mut result = Allocation::default();
    for (sku, avail) in available {
        let mut rows: Vec<&AllocationLine> = by_sku.remove(sku).unwrap_or_default();
        rows.sort_by(|a, b| a.outlet.cmp(&b.outlet));
        let input: Vec<(OutletId, u64, f64)> = rows
            .iter()
            .map(|r| (r.outlet.clone(), r.qty, weights.get(&r.outlet).copied().unwrap_or(1.0)))
            .collect();
        let shares = apportion(*avail, &input);
        let given: u64 = shares.iter().sum();
        for (row, q) in rows.iter().zip(shares) {
            if q > 0 {
                result.lines.push(AllocationLine {
                    outlet: row.outlet.clone(),
                    sku: (*sku).clone(),
                    qty: q,
                });
            }
        }
        result.unallocated.insert((*sku).clone(), avail - given);
    }
    result.lines.sort();
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<OutletId> {
        (0..n).map(|i| OutletId::new(format!("O{i:02}"))).collect()
    }

    #[test]
    fn worked_example() {
        let rows: Vec<_> = ids(3).into_iter().zip([5, 4, 3]).map(|(o, n)| (o, n, 1.0)).collect();
        assert_eq!(apportion(10, &rows), vec![4, 3, 3]);
    }

    #[test]
    fn abundance_gives_needs_and_surplus() {
        let o = ids(2);
        let needs = vec![
            AllocationLine { outlet: o[0].clone(), sku: "A".into(), qty: 3 },
            AllocationLine { outlet: o[1].clone(), sku: "A".into(), qty: 4 },
        ];
        let a = allocate(&BTreeMap::from([(SkuId::new("A"), 10)]), &needs, &BTreeMap::new());
        assert_eq!(a.qty(&o[0], &"A".into()), 3);
        assert_eq!(a.qty(&o[1], &"A".into()), 4);
        assert_eq!(a.unallocated[&SkuId::new("A")], 3);
    }

    #[test]
    fn heavy_weight_is_capped_at_need() {
        let o = ids(2);
        let rows = vec![(o[0].clone(), 2, 10.0), (o[1].clone(), 10, 1.0)];
        // raw share of the first row would be 10 * 20/30 = 6.7 > need 2
        assert_eq!(apportion(10, &rows), vec![2, 8]);
    }

    /// Independent apportionment in exact rationals, written without the integer tricks.
    fn rational_oracle(available: u64, rows: &[(OutletId, u64, f64)]) -> Vec<u64> {
        let need: u64 = rows.iter().map(|r| r.1).sum();
        if need <= available {
            return rows.iter().map(|r| r.1).collect();
        }
        let w: Vec<Ratio<i128>> = rows.iter().map(|r| Ratio::new((r.2 * 1e6).round() as i128, 1)).collect();
        let mut fixed: Vec<Option<u64>> = vec![None; rows.len()];
        loop {
            let left = Ratio::from_integer(available as i128)
                - fixed.iter().flatten().map(|q| Ratio::from_integer(*q as i128)).sum::<Ratio<i128>>();
            let denom: Ratio<i128> = (0..rows.len())
                .filter(|&i| fixed[i].is_none())
                .map(|i| w[i] * Ratio::from_integer(rows[i].1 as i128))
                .sum();
            let quota = |i: usize| left * w[i] * Ratio::from_integer(rows[i].1 as i128) / denom;
            let mut changed = false;
            for i in 0..rows.len() {
                if fixed[i].is_none() && quota(i) >= Ratio::from_integer(rows[i].1 as i128) {
                    fixed[i] = Some(rows[i].1);
                    changed = true;
                }
            }
            if changed {
                continue;
            }
            let free: Vec<usize> = (0..rows.len()).filter(|&i| fixed[i].is_none()).collect();
            let mut q: Vec<u64> = free.iter().map(|&i| quota(i).floor().to_integer() as u64).collect();
            let mut rem: Vec<(Ratio<i128>, &OutletId, usize)> =
                free.iter().enumerate().map(|(k, &i)| (quota(i) - quota(i).floor(), &rows[i].0, k)).collect();
            rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(b.1)));
            let mut extra = left.to_integer() as u64 - q.iter().sum::<u64>();
            for (_, _, k) in rem {
                if extra == 0 {
                    break;
                }
                q[k] += 1;
                extra -= 1;
            }
            for (k, &i) in free.iter().enumerate() {
                fixed[i] = Some(q[k]);
            }
            return fixed.into_iter().map(|x| x.unwrap()).collect();
        }
    }

    proptest! {
        #[test]
        fn matches_rational_oracle(
            needs in proptest::collection::vec((0u64..40, 1u32..4), 1..8),
            frac in 0.0f64..1.0,
        ) {
            let o = ids(needs.len());
            let rows: Vec<_> = o.iter().zip(&needs).map(|(id, (n, w))| (id.clone(), *n, *w as f64 * 0.5 + 0.5)).collect();
            let total: u64 = needs.iter().map(|n| n.0).sum();
            let available = (total as f64 * frac).floor() as u64;
            let got = apportion(available, &rows);
            prop_assert_eq!(&got, &rational_oracle(available, &rows));
            prop_assert_eq!(got.iter().sum::<u64>(), available.min(total));
            for (g, r) in got.iter().zip(&rows) {
                prop_assert!(*g <= r.1);
            }
        }
    }
}
