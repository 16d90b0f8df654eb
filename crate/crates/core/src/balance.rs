//! Static heterogeneous block assignment.
//!
//! Balancing currency is whole blocks: fast units receive several blocks,
//! slow units one, until the maximum of `count / speed` over all units is
//! minimized. Blocks are uniform, so the greedy assignment below (always give
//! the next block to the unit whose normalized load would stay smallest,
//! ties broken by unit index) picks the smallest attainable completion slots
//! and is exact for this job shape; an exhaustive search backs it as a test
//! oracle.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::registry::Selector;

#[derive(Debug, Error)]
pub enum BalanceError {
    #[error("no speed weight configured for hardware selector '{0}'")]
    MissingWeight(String),
    #[error("speed weight for '{0}' must be positive, got {1}")]
    NonPositiveWeight(String, f64),
    #[error("{blocks} blocks cannot feed {units} units (need at least one block per unit)")]
    TooFewBlocks { blocks: usize, units: usize },
}

/// One compute unit (simulated process) with its hardware selector.
#[derive(Copy, Clone, Debug)]
pub struct Unit {
    pub rank: usize,
    pub hs: Selector,
}

/// Relative speed per hardware selector (blocks per unit time).
pub type UnitWeights = BTreeMap<Selector, f64>;

/// Number of blocks assigned to each unit, minimizing the maximum normalized
/// load `count / speed`. Deterministic: ties go to the lower rank.
pub fn assign_block_counts(
    blocks: usize,
    units: &[Unit],
    weights: &UnitWeights,
) -> Result<Vec<usize>, BalanceError> {
    if blocks < units.len() {
        return Err(BalanceError::TooFewBlocks {
            blocks,
            units: units.len(),
        });
    }
    let mut speed = Vec::with_capacity(units.len());
    for u in units {
        let w = weights
            .get(&u.hs)
            .copied()
            .ok_or_else(|| BalanceError::MissingWeight(u.hs.name()))?;
        if !(w > 0.0) {
            return Err(BalanceError::NonPositiveWeight(u.hs.name(), w));
        }
        speed.push(w);
    }
    // Every unit simulates at least one block; the rest go greedily to the
    // unit whose normalized load stays smallest.
    let mut counts = vec![1usize; units.len()];
    for _ in 0..blocks - units.len() {
        let mut best = 0usize;
        let mut best_load = f64::INFINITY;
        for (k, &s) in speed.iter().enumerate() {
            let load = (counts[k] + 1) as f64 / s;
            if load < best_load {
                best_load = load;
                best = k;
            }
        }
        counts[best] += 1;
    }
    Ok(counts)
}

/// Maximum normalized load of an assignment.
pub fn objective(counts: &[usize], speeds: &[f64]) -> f64 {
    counts
        .iter()
        .zip(speeds)
        .map(|(&c, &s)| c as f64 / s)
        .fold(0.0, f64::max)
}

/// Exhaustive minimum over all count compositions; test oracle only.
pub fn brute_force_optimum(blocks: usize, speeds: &[f64]) -> f64 {
    fn rec(remaining: usize, speeds: &[f64], unit: usize, counts: &mut Vec<usize>, best: &mut f64) {
        if unit == speeds.len() - 1 {
            counts[unit] = remaining;
            if counts.iter().all(|&c| c >= 1) {
                let obj = objective(counts, speeds);
                if obj < *best {
                    *best = obj;
                }
            }
            return;
        }
        for c in 1..=remaining.saturating_sub(speeds.len() - unit - 1) {
            counts[unit] = c;
            rec(remaining - c, speeds, unit + 1, counts, best);
        }
    }
    let mut counts = vec![0usize; speeds.len()];
    let mut best = f64::INFINITY;
    rec(blocks, speeds, 0, &mut counts, &mut best);
    best
}

/// Derive speed weights from measured per-block step times (total step time
/// of a block including staging overhead). `speed = 1 / median(time)`,
/// normalized so the slowest hardware has weight 1.
pub fn calibrate_weights(measurements: &BTreeMap<Selector, Vec<f64>>) -> UnitWeights {
    let mut medians = BTreeMap::new();
    for (hs, samples) in measurements {
        if samples.is_empty() {
            continue;
        }
        let mut s = samples.clone();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let m = if s.len() % 2 == 1 {
            s[s.len() / 2]
        } else {
            0.5 * (s[s.len() / 2 - 1] + s[s.len() / 2])
        };
        medians.insert(*hs, m);
    }
    let slowest = medians.values().fold(0.0f64, |a, &b| a.max(b));
    medians
        .into_iter()
        .map(|(hs, m)| (hs, if m > 0.0 { slowest / m } else { 1.0 }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::splitmix64;

    #[test]
    fn homogeneous_units_get_one_block_each() {
        let cpu = Selector::intern("cpu");
        let us: Vec<Unit> = (0..8).map(|rank| Unit { rank, hs: cpu }).collect();
        let mut w = UnitWeights::new();
        w.insert(cpu, 1.0);
        let counts = assign_block_counts(8, &us, &w).unwrap();
        assert_eq!(counts, vec![1; 8]);
    }

    #[test]
    fn two_fast_six_slow_reproduces_22_to_1() {
        // Two units at speed 22 and six at speed 1 sharing 50 blocks balance
        // at 22 blocks per fast unit and 1 per slow unit.
        let fast = Selector::intern("staged");
        let slow = Selector::intern("cpu");
        let mut us = Vec::new();
        for rank in 0..2 {
            us.push(Unit { rank, hs: fast });
        }
        for rank in 2..8 {
            us.push(Unit { rank, hs: slow });
        }
        let mut w = UnitWeights::new();
        w.insert(fast, 22.0);
        w.insert(slow, 1.0);
        let counts = assign_block_counts(50, &us, &w).unwrap();
        assert_eq!(counts, vec![22, 22, 1, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn missing_weight_is_a_configuration_error() {
        let cpu = Selector::intern("cpu");
        let odd = Selector::intern("fpga");
        let us = vec![Unit { rank: 0, hs: cpu }, Unit { rank: 1, hs: odd }];
        let mut w = UnitWeights::new();
        w.insert(cpu, 1.0);
        assert!(matches!(
            assign_block_counts(4, &us, &w),
            Err(BalanceError::MissingWeight(name)) if name == "fpga"
        ));
        w.insert(odd, 0.0);
        assert!(assign_block_counts(4, &us, &w).is_err());
    }

    #[test]
    fn every_block_assigned_exactly_once() {
        let cpu = Selector::intern("cpu");
        let gpu = Selector::intern("staged");
        let mut w = UnitWeights::new();
        w.insert(cpu, 1.0);
        w.insert(gpu, 3.5);
        for seed in 0..50u64 {
            let n_units = 1 + (splitmix64(seed) % 4) as usize;
            let us: Vec<Unit> = (0..n_units)
                .map(|rank| Unit {
                    rank,
                    hs: if splitmix64(seed ^ rank as u64) % 2 == 0 { cpu } else { gpu },
                })
                .collect();
            let blocks = n_units + (splitmix64(seed ^ 0xbeef) % 10) as usize;
            let counts = assign_block_counts(blocks, &us, &w).unwrap();
            assert_eq!(counts.iter().sum::<usize>(), blocks);
            assert!(counts.iter().all(|&c| c >= 1));
        }
    }

    #[test]
    fn greedy_matches_brute_force_on_small_instances() {
        let hs: Vec<Selector> = ["a", "b", "c", "d"]
            .iter()
            .map(|n| Selector::intern(n))
            .collect();
        for seed in 0..60u64 {
            let n_units = 2 + (splitmix64(seed) % 3) as usize;
            let blocks = n_units + (splitmix64(seed ^ 1) % 9) as usize;
            let mut us = Vec::new();
            let mut w = UnitWeights::new();
            let mut speeds = Vec::new();
            for rank in 0..n_units {
                let s = 1.0 + (splitmix64(seed ^ (rank as u64) << 8) % 21) as f64;
                us.push(Unit { rank, hs: hs[rank] });
                w.insert(hs[rank], s);
                speeds.push(s);
            }
            let counts = assign_block_counts(blocks, &us, &w).unwrap();
            let greedy = objective(&counts, &speeds);
            let opt = brute_force_optimum(blocks, &speeds);
            assert!(
                greedy <= opt * (4.0 / 3.0) + 1e-12,
                "greedy {greedy} vs optimum {opt}"
            );
        }
    }

    #[test]
    fn speeding_up_a_unit_never_raises_the_objective() {
        let hs: Vec<Selector> = ["a", "b", "c"].iter().map(|n| Selector::intern(n)).collect();
        for seed in 0..40u64 {
            let blocks = 3 + (splitmix64(seed) % 9) as usize;
            let mut speeds = vec![
                1.0 + (splitmix64(seed ^ 2) % 8) as f64,
                1.0 + (splitmix64(seed ^ 3) % 8) as f64,
                1.0 + (splitmix64(seed ^ 4) % 8) as f64,
            ];
            let us: Vec<Unit> = (0..3).map(|rank| Unit { rank, hs: hs[rank] }).collect();
            let mk = |speeds: &[f64]| {
                let mut w = UnitWeights::new();
                for (k, &s) in speeds.iter().enumerate() {
                    w.insert(hs[k], s);
                }
                w
            };
            let before = objective(
                &assign_block_counts(blocks, &us, &mk(&speeds)).unwrap(),
                &speeds,
            );
            speeds[(seed % 3) as usize] *= 2.0;
            let after = objective(
                &assign_block_counts(blocks, &us, &mk(&speeds)).unwrap(),
                &speeds,
            );
            assert!(after <= before + 1e-12, "seed {seed}: {before} -> {after}");
        }
    }

    #[test]
    fn calibration_recovers_time_ratios() {
        let fast = Selector::intern("staged");
        let slow = Selector::intern("cpu");
        let mut m = BTreeMap::new();
        m.insert(fast, vec![1.0e-3, 1.1e-3, 0.9e-3]);
        m.insert(slow, vec![22e-3, 22e-3]);
        let w = calibrate_weights(&m);
        assert!((w[&slow] - 1.0).abs() < 1e-12);
        assert!((w[&fast] - 22.0).abs() < 1e-9);

        let mut eq = BTreeMap::new();
        eq.insert(fast, vec![5.0e-3]);
        eq.insert(slow, vec![5.0e-3]);
        let w = calibrate_weights(&eq);
        assert_eq!(w[&fast], 1.0);
        assert_eq!(w[&slow], 1.0);
    }
}
