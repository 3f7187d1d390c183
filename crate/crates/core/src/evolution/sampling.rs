use std::sync::Arc;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{CoincidenceTable, OutcomeDistribution, OutcomeLayout};

/// Probabilities below this are sampled as exactly zero.
pub const CLAMP: f64 = 1e-15;

/// One simulated run: which detector clicked and which probes were found
/// triggered, with the slot at which each triggered probe fired.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run: u64,
    pub detector: usize,
    pub bits: usize,
    /// `(probe index, slot)` for each triggered probe.
    pub timestamps: Vec<(usize, usize)>,
    pub layout: Arc<OutcomeLayout>,
}

impl RunRecord {
    pub fn detector_name(&self) -> &str {
        &self.layout.detectors[self.detector]
    }

    pub fn bit_string(&self) -> String {
        self.layout.bit_string(self.bits)
    }
}

/// Inverse-CDF sampler over the clamped outcome cells.
///
/// Run `r` of seed `s` always consumes the 64-bit word at position `2r` of
/// the ChaCha8 stream keyed by `s`, so any partition of run indices over
/// workers reproduces the serial result exactly.
#[derive(Debug, Clone)]
pub struct Sampler {
    layout: Arc<OutcomeLayout>,
    cumulative: Vec<f64>,
    seed: u64,
}

impl Sampler {
    pub fn new(dist: &OutcomeDistribution, seed: u64) -> Self {
        let mut acc = 0.0;
        let cumulative = dist
            .cells()
            .iter()
            .map(|&p| {
                acc += if p < CLAMP { 0.0 } else { p };
                acc
            })
            .collect();
        Self {
            layout: Arc::clone(dist.layout()),
            cumulative,
            seed,
        }
    }

    fn rng_at(&self, run: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_word_pos(2 * run as u128);
        rng
    }

    fn cell(&self, word: u64) -> usize {
        let total = *self.cumulative.last().unwrap_or(&0.0);
        let u = (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64) * total;
        let idx = self.cumulative.partition_point(|&c| c <= u);
        if idx < self.cumulative.len() {
            idx
        } else {
            // u landed on the top edge through rounding; take the last nonzero cell
            let mut last = self.cumulative.len() - 1;
            while last > 0 && self.cumulative[last] == self.cumulative[last - 1] {
                last -= 1;
            }
            last
        }
    }

    /// Cell indices of runs `start..end`.
    pub fn cells(&self, start: u64, end: u64) -> impl Iterator<Item = usize> + '_ {
        let mut rng = self.rng_at(start);
        (start..end).map(move |_| self.cell(rng.next_u64()))
    }

    pub fn record(&self, run: u64, cell: usize) -> RunRecord {
        let nb = self.layout.n_bitstrings();
        let (detector, bits) = (cell / nb, cell % nb);
        let timestamps = (0..self.layout.probes.len())
            .filter(|k| bits >> k & 1 == 1)
            .map(|k| (k, self.layout.probe_slots[k]))
            .collect();
        RunRecord {
            run,
            detector,
            bits,
            timestamps,
            layout: Arc::clone(&self.layout),
        }
    }
}

/// `n` independent runs drawn from the exact distribution.
pub fn sample_runs(dist: &OutcomeDistribution, n: u64, seed: u64) -> Vec<RunRecord> {
    let sampler = Sampler::new(dist, seed);
    sampler
        .cells(0, n)
        .enumerate()
        .map(|(r, cell)| sampler.record(r as u64, cell))
        .collect()
}

/// Coincidence counts of `n` runs, split into `workers` contiguous blocks of
/// run indices. The table does not depend on `workers`.
pub fn sample_table(
    dist: &OutcomeDistribution,
    n: u64,
    seed: u64,
    workers: usize,
) -> CoincidenceTable {
    let sampler = Sampler::new(dist, seed);
    let workers = workers.max(1) as u64;
    let block = n.div_ceil(workers).max(1);
    let count_block = |w: u64| {
        let (start, end) = ((w * block).min(n), ((w + 1) * block).min(n));
        let mut table = CoincidenceTable::empty(Arc::clone(dist.layout()));
        for cell in sampler.cells(start, end) {
            table.add_cell(cell, 1);
        }
        table
    };
    let merge =
        |a: CoincidenceTable, b: CoincidenceTable| a.merge(&b).expect("blocks share one layout");
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers as usize)
        .build();
    let empty = || CoincidenceTable::empty(Arc::clone(dist.layout()));
    match pool {
        Ok(pool) => pool.install(|| {
            (0..workers)
                .into_par_iter()
                .map(count_block)
                .reduce(empty, merge)
        }),
        Err(_) => (0..workers).map(count_block).fold(empty(), merge),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{joint_outcome_distribution, Experiment};
    use crate::interferometer::default_nested_mzi;

    fn default_dist() -> OutcomeDistribution {
        let exp = Experiment::without_probes(default_nested_mzi());
        joint_outcome_distribution(&exp.evolve()).unwrap()
    }

    #[test]
    fn zero_runs() {
        assert!(sample_runs(&default_dist(), 0, 7).is_empty());
        assert_eq!(sample_table(&default_dist(), 0, 7, 4).total(), 0);
    }

    #[test]
    fn same_seed_same_records() {
        let d = default_dist();
        assert_eq!(sample_runs(&d, 500, 9), sample_runs(&d, 500, 9));
        assert_ne!(sample_runs(&d, 500, 9), sample_runs(&d, 500, 10));
    }

    #[test]
    fn block_split_matches_serial() {
        let d = default_dist();
        let serial = sample_table(&d, 10_001, 3, 1);
        for w in [2, 3, 8, 64] {
            assert_eq!(sample_table(&d, 10_001, 3, w), serial);
        }
        let from_records =
            crate::evolution::aggregate_coincidences(d.layout(), &sample_runs(&d, 10_001, 3))
                .unwrap();
        assert_eq!(from_records, serial);
    }
}
