//! Daily discharge panels, multivariate declustering into flood events,
//! empirical Pareto transforms and madogram extremal coefficients.

use std::ops::Range;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// N days × m stations of daily discharge; `NaN` marks a missing value.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyPanel {
    station_ids: Vec<String>,
    dates: Vec<NaiveDate>,
    /// Season-block label per day (typically the year).
    blocks: Vec<i32>,
    /// Row-major: `values[day][station]`.
    values: Vec<Vec<f64>>,
}

impl DailyPanel {
    pub fn new(station_ids: Vec<String>, dates: Vec<NaiveDate>, blocks: Vec<i32>, values: Vec<Vec<f64>>) -> Result<Self> {
        let n = dates.len();
        if blocks.len() != n || values.len() != n {
            return Err(Error::input("panel dates, blocks and rows differ in length"));
        }
        let m = station_ids.len();
        if values.iter().any(|r| r.len() != m) {
            return Err(Error::input("panel row length does not match the station count"));
        }
        if dates.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::input("panel dates must be strictly increasing"));
        }
        let mut seen = Vec::new();
        for (i, b) in blocks.iter().enumerate() {
            if i == 0 || blocks[i - 1] != *b {
                if seen.contains(b) {
                    return Err(Error::input(format!("season block {b} is not contiguous")));
                }
                seen.push(*b);
            }
        }
        if values.iter().flatten().any(|v| v.is_infinite()) {
            return Err(Error::input("panel contains infinite discharges"));
        }
        Ok(Self {
            station_ids,
            dates,
            blocks,
            values,
        })
    }

    pub fn station_ids(&self) -> &[String] {
        &self.station_ids
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn blocks(&self) -> &[i32] {
        &self.blocks
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn n_stations(&self) -> usize {
        self.station_ids.len()
    }

    pub fn value(&self, day: usize, station: usize) -> f64 {
        self.values[day][station]
    }

    pub fn column(&self, station: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[station]).collect()
    }

    /// Maximal runs of consecutive dates within one block.
    pub fn block_ranges(&self) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.n_days() {
            let split = i == self.n_days()
                || self.blocks[i] != self.blocks[i - 1]
                || (self.dates[i] - self.dates[i - 1]).num_days() != 1;
            if split {
                out.push(start..i);
                start = i;
            }
        }
        if self.n_days() == 0 {
            out.clear();
        }
        out
    }

    pub fn n_blocks(&self) -> usize {
        let mut b = self.blocks.clone();
        b.dedup();
        b.len()
    }

    /// Per-block maximum of every station (`NaN` when all missing).
    pub fn block_maxima(&self) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = Vec::new();
        for (i, row) in self.values.iter().enumerate() {
            if i == 0 || self.blocks[i] != self.blocks[i - 1] {
                out.push(vec![f64::NAN; self.n_stations()]);
            }
            let cur = out.last_mut().expect("pushed above");
            for (c, v) in cur.iter_mut().zip(row) {
                if !v.is_nan() && (c.is_nan() || *v > *c) {
                    *c = *v;
                }
            }
        }
        out
    }
}

/// One declustered event: the window and the per-station maxima in it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub block: i32,
    /// Day index of the first day of the window.
    pub start: usize,
    pub len: usize,
    /// Day index the window was centred on.
    pub center: usize,
    pub start_date: NaiveDate,
    /// Raw maxima per station; `NaN` when a station is missing throughout.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSet {
    pub station_ids: Vec<String>,
    pub events: Vec<Event>,
    /// Number of season blocks (years) the events come from.
    pub n_blocks: usize,
}

impl EventSet {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Mean number of events per block (per year).
    pub fn events_per_block(&self) -> f64 {
        self.events.len() as f64 / self.n_blocks.max(1) as f64
    }

    /// Raw values as an n × m matrix.
    pub fn raw(&self) -> Vec<Vec<f64>> {
        self.events.iter().map(|e| e.values.clone()).collect()
    }
}

/// Multivariate declustering into nonoverlapping windows of at most `p`
/// days.
///
/// Every value is replaced by its within-series rank (scaled by the number
/// of observed values). Days are visited by decreasing maximum scaled rank
/// across series, ties in random order; a visited day that still lies in a
/// run of at least `p` undeleted days of its block becomes the centre of a
/// window, which is clipped to that run. The event is the per-series
/// maximum over the window, and the window is deleted.
pub fn decluster(panel: &DailyPanel, p: usize, seed: u64) -> Result<EventSet> {
    if p == 0 {
        return Err(Error::input("window length must be at least one day"));
    }
    let n = panel.n_days();
    let m = panel.n_stations();
    let ranges = panel.block_ranges();
    if let Some(r) = ranges.iter().find(|r| r.len() < p) {
        return Err(Error::input(format!(
            "season block starting {} has {} days, fewer than the window length {p}",
            panel.dates[r.start],
            r.len()
        )));
    }
    let mut score = vec![f64::NEG_INFINITY; n];
    for j in 0..m {
        let col = panel.column(j);
        let obs: Vec<usize> = (0..n).filter(|&i| !col[i].is_nan()).collect();
        if obs.is_empty() {
            return Err(Error::input(format!("station '{}' has no observations", panel.station_ids[j])));
        }
        let vals: Vec<f64> = obs.iter().map(|&i| col[i]).collect();
        let ranks = stats::average_ranks(&vals);
        let scale = obs.len() as f64 + 1.0;
        for (&i, r) in obs.iter().zip(ranks) {
            score[i] = score[i].max(r / scale);
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    // Stable sort keeps the random order within ties.
    order.sort_by(|a, b| score[*b].total_cmp(&score[*a]));

    let mut block_of = vec![0usize; n];
    for (k, r) in ranges.iter().enumerate() {
        for i in r.clone() {
            block_of[i] = k;
        }
    }
    let mut deleted = vec![false; n];
    let half_lo = (p - 1) / 2;
    let half_hi = p / 2;
    let mut events = Vec::new();
    for d in order {
        if deleted[d] {
            continue;
        }
        let r = &ranges[block_of[d]];
        let mut lo = d;
        while lo > r.start && !deleted[lo - 1] {
            lo -= 1;
        }
        let mut hi = d + 1;
        while hi < r.end && !deleted[hi] {
            hi += 1;
        }
        if hi - lo < p {
            continue;
        }
        let start = d.saturating_sub(half_lo).max(lo);
        let end = (d + half_hi + 1).min(hi);
        let mut values = vec![f64::NAN; m];
        for i in start..end {
            deleted[i] = true;
            for (j, v) in values.iter_mut().enumerate() {
                let x = panel.values[i][j];
                if !x.is_nan() && (v.is_nan() || x > *v) {
                    *v = x;
                }
            }
        }
        events.push(Event {
            block: panel.blocks[d],
            start,
            len: end - start,
            center: d,
            start_date: panel.dates[start],
            values,
        });
    }
    events.sort_by_key(|e| e.start);
    Ok(EventSet {
        station_ids: panel.station_ids.clone(),
        events,
        n_blocks: panel.n_blocks(),
    })
}

/// Empirical standard-Pareto transform per station:
/// X = 1/(1 − R/(n + 1)) with average ranks R among observed values.
/// Missing entries stay `NaN`.
pub fn to_pareto(raw: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = raw.len();
    let m = raw.first().map_or(0, |r| r.len());
    if raw.iter().any(|r| r.len() != m) {
        return Err(Error::input("event rows differ in length"));
    }
    let mut out = vec![vec![f64::NAN; m]; n];
    for j in 0..m {
        let obs: Vec<usize> = (0..n).filter(|&i| !raw[i][j].is_nan()).collect();
        if obs.len() < 2 {
            return Err(Error::input(format!("station column {j} has fewer than two observed events")));
        }
        let vals: Vec<f64> = obs.iter().map(|&i| raw[i][j]).collect();
        let ranks = stats::average_ranks(&vals);
        let k = obs.len() as f64;
        for (&i, r) in obs.iter().zip(ranks) {
            out[i][j] = (k + 1.0) / (k + 1.0 - r);
        }
    }
    Ok(out)
}

/// Default minimum number of complete pairs for [`madogram_theta`].
pub const MADOGRAM_MIN_PAIRS: usize = 20;

/// F-madogram extremal coefficient θ̂ = (1 + 2ν̂)/(1 − 2ν̂), clipped to
/// [1, 2], from paired observations (missing pairs dropped).
pub fn madogram_theta(a: &[f64], b: &[f64], min_pairs: usize) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::input("madogram series differ in length"));
    }
    let pairs: Vec<(f64, f64)> = a
        .iter()
        .zip(b)
        .filter(|(x, y)| !x.is_nan() && !y.is_nan())
        .map(|(x, y)| (*x, *y))
        .collect();
    if pairs.len() < min_pairs.max(2) {
        return Err(Error::estimation(format!(
            "{} complete pairs, at least {} needed for the madogram",
            pairs.len(),
            min_pairs.max(2)
        )));
    }
    let k = pairs.len() as f64;
    let ra = stats::average_ranks(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
    let rb = stats::average_ranks(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
    let nu = ra.iter().zip(&rb).map(|(x, y)| 0.5 * (x - y).abs() / k).sum::<f64>() / k;
    if nu >= 0.5 {
        return Ok(2.0);
    }
    Ok(((1.0 + 2.0 * nu) / (1.0 - 2.0 * nu)).clamp(1.0, 2.0))
}

/// Pairwise madogram estimates over the columns of `series` (rows are
/// observations); the diagonal is 1 and failed pairs are `NaN`.
pub fn madogram_matrix(series: &[Vec<f64>], min_pairs: usize) -> Vec<Vec<f64>> {
    let m = series.first().map_or(0, |r| r.len());
    let cols: Vec<Vec<f64>> = (0..m).map(|j| series.iter().map(|r| r[j]).collect()).collect();
    let mut out = vec![vec![1.0; m]; m];
    for i in 0..m {
        for j in 0..i {
            let v = madogram_theta(&cols[i], &cols[j], min_pairs).unwrap_or(f64::NAN);
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}
