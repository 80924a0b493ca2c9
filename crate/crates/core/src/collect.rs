//! Observation plumbing shared by the ensemble simulator and the mean-field
//! tick process. Collectors receive every transaction and (for ensemble runs)
//! every book snapshot; replica collectors are merged in replica order, so
//! pooled results never depend on scheduling.

use crate::error::Result;
use crate::estimators::Histogram;
use crate::model::{EnsembleState, SpreadLaw, TickSeries};

/// One transaction, as seen by collectors. `parties` is (buyer, seller) for
/// ensemble runs and `None` for the mean-field process.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TickEvent {
    pub tick: u64,
    pub t: f64,
    pub p: f64,
    pub dp: f64,
    pub parties: Option<(u32, u32)>,
}

pub trait Collector: Send {
    fn on_tick(&mut self, ev: &TickEvent);
    fn on_snapshot(&mut self, _state: &EnsembleState) {}
    fn merge(&mut self, other: Self) -> Result<()>;
}

/// Records the full tick series plus per-replica wait times (wait times are
/// computed before merging, so replica boundaries never corrupt them).
#[derive(Clone, Debug, Default)]
pub struct SeriesCollector {
    pub series: TickSeries,
    pub waits: Vec<f64>,
    last_t: f64,
}

impl SeriesCollector {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Collector for SeriesCollector {
    fn on_tick(&mut self, ev: &TickEvent) {
        match ev.parties {
            Some((b, s)) => self.series.push_trade(ev.tick, ev.t, ev.p, ev.dp, b, s),
            None => self.series.push(ev.tick, ev.t, ev.p, ev.dp),
        }
        self.waits.push(ev.t - self.last_t);
        self.last_t = ev.t;
    }

    fn merge(&mut self, other: Self) -> Result<()> {
        self.series.append(other.series);
        self.waits.extend_from_slice(&other.waits);
        Ok(())
    }
}

/// Pools center-of-mass-relative ask and bid quotes over snapshots.
#[derive(Clone, Debug)]
pub struct BookCollector {
    pub ask: Histogram,
    pub bid: Histogram,
    pub snapshots: u64,
}

impl BookCollector {
    /// Bins of width scale/32 spanning [-4, 4] mean spreads, wide enough that
    /// out-of-range mass is negligible for both spread laws.
    pub fn for_law(law: &SpreadLaw) -> Result<Self> {
        let half = 4.0 * law.mean_spread();
        let width = law.scale() / 32.0;
        Ok(BookCollector {
            ask: Histogram::from_width(-half, half, width)?,
            bid: Histogram::from_width(-half, half, width)?,
            snapshots: 0,
        })
    }

    pub fn with_range(lo: f64, hi: f64, width: f64) -> Result<Self> {
        Ok(BookCollector {
            ask: Histogram::from_width(lo, hi, width)?,
            bid: Histogram::from_width(lo, hi, width)?,
            snapshots: 0,
        })
    }
}

impl Collector for BookCollector {
    fn on_tick(&mut self, _ev: &TickEvent) {}

    fn on_snapshot(&mut self, state: &EnsembleState) {
        for i in 0..state.n() {
            self.ask.add(state.ask(i) - state.z_cm);
            self.bid.add(state.bid(i) - state.z_cm);
        }
        self.snapshots += 1;
    }

    fn merge(&mut self, other: Self) -> Result<()> {
        self.ask.merge(&other.ask)?;
        self.bid.merge(&other.bid)?;
        self.snapshots += other.snapshots;
        Ok(())
    }
}

/// Discards everything (useful for timing and starvation probes).
#[derive(Clone, Copy, Debug, Default)]
pub struct NullCollector;

impl Collector for NullCollector {
    fn on_tick(&mut self, _ev: &TickEvent) {}
    fn merge(&mut self, _other: Self) -> Result<()> {
        Ok(())
    }
}

impl<A: Collector, B: Collector> Collector for (A, B) {
    fn on_tick(&mut self, ev: &TickEvent) {
        self.0.on_tick(ev);
        self.1.on_tick(ev);
    }

    fn on_snapshot(&mut self, state: &EnsembleState) {
        self.0.on_snapshot(state);
        self.1.on_snapshot(state);
    }

    fn merge(&mut self, other: Self) -> Result<()> {
        self.0.merge(other.0)?;
        self.1.merge(other.1)
    }
}
