//! Event-driven ensemble simulator.
//!
//! Between transactions every mid-quote follows the same drift (a saturating
//! function of the last price increment) plus independent noise. Whenever a
//! bid reaches an ask the pair trades: the buyer requotes down by half their
//! spread, the seller up by half theirs, and the transacted price is the
//! midpoint of the crossed quotes. Settlement repeats greedily (deepest
//! overlap first) until no quotes cross.

use crate::collect::{Collector, TickEvent};
use crate::error::{Error, Result};
use crate::model::{sample_spreads, EnsembleState, SimConfig};
use crate::rng::stream;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Crossed pair: `buyer`'s bid is at or above `seller`'s ask.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrossEvent {
    pub buyer: u32,
    pub seller: u32,
    pub overlap: f64,
}

/// Run health counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunDiag {
    pub steps: u64,
    /// Queued crossings invalidated by an earlier settlement in the same pass.
    pub stale_events: u64,
    /// Transactions sharing one integration step (zero wait time) beyond the
    /// first of each step.
    pub coalesced_ticks: u64,
    /// Sum over replicas of 1/(2 sigma^2 sum_i 1/L_i^2), the collision-rate
    /// prediction evaluated on each replica's frozen spreads. Divided by the
    /// replica count this gives the disorder-aware expected mean wait; the
    /// realized avg(1/L^2) has heavy (alpha = 2) tails under the Gamma law,
    /// so single replicas scatter far from the ensemble tau*.
    pub quenched_wait_sum: f64,
}

impl RunDiag {
    fn absorb(&mut self, other: &RunDiag) {
        self.steps += other.steps;
        self.stale_events += other.stale_events;
        self.coalesced_ticks += other.coalesced_ticks;
        self.quenched_wait_sum += other.quenched_wait_sum;
    }
}

/// Place mid-quotes uniformly over one maximal spread and settle any
/// placement-induced crossings so the clock starts on a quiescent book.
pub fn place<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> EnsembleState {
    let spread = sample_spreads(&cfg.law, cfg.n, rng);
    let l_max = spread.iter().cloned().fold(0.0f64, f64::max);
    let z: Vec<f64> = (0..cfg.n).map(|_| (rng.random::<f64>() - 0.5) * l_max).collect();
    let mut state = EnsembleState {
        z,
        spread,
        z_cm: 0.0,
        p: 0.0,
        dp: 0.0,
        t: 0.0,
        tick: 0,
    };
    state.reanchor_cm();
    let ev = detect_crossings(&state);
    if !ev.is_empty() {
        settle(&mut state, ev);
    }
    state.reanchor_cm();
    state.p = state.z_cm;
    state.dp = 0.0;
    state.t = 0.0;
    state.tick = 0;
    state
}

/// One diffusion step of length `dt`: shared drift c tanh(dp/dp_star) dt plus
/// independent noise sigma sqrt(dt) per trader. The transaction clock (p, dp,
/// tick) is untouched.
pub fn advance<R: Rng + ?Sized>(state: &mut EnsembleState, cfg: &SimConfig, dt: f64, rng: &mut R) {
    let drift = trend_drift(cfg, state.dp) * dt;
    let sd = cfg.sigma * dt.sqrt();
    let mut sum_g = 0.0;
    for zi in state.z.iter_mut() {
        let g: f64 = rng.sample(StandardNormal);
        sum_g += g;
        *zi += drift + sd * g;
    }
    state.z_cm += drift + sd * sum_g / state.n() as f64;
    state.t += dt;
}

/// `advance` with caller-supplied standard normals (for step-size and
/// equivalence tests).
pub fn advance_with_noise(state: &mut EnsembleState, cfg: &SimConfig, dt: f64, noise: &[f64]) {
    assert_eq!(noise.len(), state.n());
    let drift = trend_drift(cfg, state.dp) * dt;
    let sd = cfg.sigma * dt.sqrt();
    let mut sum_g = 0.0;
    for (zi, &g) in state.z.iter_mut().zip(noise) {
        sum_g += g;
        *zi += drift + sd * g;
    }
    state.z_cm += drift + sd * sum_g / state.n() as f64;
    state.t += dt;
}

fn trend_drift(cfg: &SimConfig, dp: f64) -> f64 {
    if cfg.c == 0.0 {
        0.0
    } else {
        cfg.c * (dp / cfg.dp_star).tanh()
    }
}

/// All crossed ordered pairs, deepest overlap first (ties broken by buyer
/// then seller index).
///
/// A cheap exact prefilter keeps the step O(n): a pair can only cross if the
/// buyer's bid reaches the global minimum ask and the seller's ask reaches
/// the global maximum bid, so only those candidates enter the pair scan. On
/// heavily crossed states this degrades toward the full quadratic scan, which
/// is also the correctness reference.
pub fn detect_crossings(state: &EnsembleState) -> Vec<CrossEvent> {
    let n = state.n();
    let (mut max_bid, mut min_ask) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..n {
        max_bid = max_bid.max(state.bid(i));
        min_ask = min_ask.min(state.ask(i));
    }
    if max_bid < min_ask {
        return Vec::new();
    }
    let buyers: Vec<u32> =
        (0..n).filter(|&i| state.bid(i) >= min_ask).map(|i| i as u32).collect();
    let sellers: Vec<u32> =
        (0..n).filter(|&j| state.ask(j) <= max_bid).map(|j| j as u32).collect();
    let mut out = Vec::new();
    for &i in &buyers {
        let b = state.bid(i as usize);
        for &j in &sellers {
            if i == j {
                continue;
            }
            let overlap = b - state.ask(j as usize);
            if overlap >= 0.0 {
                out.push(CrossEvent { buyer: i, seller: j, overlap });
            }
        }
    }
    sort_events(&mut out);
    out
}

fn sort_events(events: &mut [CrossEvent]) {
    events.sort_by(|a, b| {
        b.overlap
            .total_cmp(&a.overlap)
            .then(a.buyer.cmp(&b.buyer))
            .then(a.seller.cmp(&b.seller))
    });
}

/// Reference all-pairs detector (used by the fuzz equivalence tests).
pub fn detect_crossings_brute(state: &EnsembleState) -> Vec<CrossEvent> {
    let n = state.n();
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let overlap = state.bid(i) - state.ask(j);
            if overlap >= 0.0 {
                out.push(CrossEvent { buyer: i as u32, seller: j as u32, overlap });
            }
        }
    }
    sort_events(&mut out);
    out
}

/// Settle a crossed book: repeatedly apply the deepest live crossing, requote
/// the pair away from each other, and chase any crossings the requotes open,
/// until the book is quiescent. Queued events invalidated by earlier
/// settlements are dropped silently (counted in the returned diagnostics).
///
/// Each settlement moves the buyer down and the seller up by half their own
/// spreads, so the center of mass shifts by (L_seller - L_buyer)/(2n); the
/// transacted price is the midpoint of the crossed bid and ask, which under
/// diffusion overshoot generally differs from both parties' mids.
pub fn settle(state: &mut EnsembleState, events: Vec<CrossEvent>) -> (Vec<TickEvent>, u64) {
    let n = state.n();
    let mut queue = events;
    let mut rows = Vec::new();
    let mut stale = 0u64;
    loop {
        // revalidate against the current book
        let before = queue.len();
        queue.retain_mut(|e| {
            let ov = state.bid(e.buyer as usize) - state.ask(e.seller as usize);
            e.overlap = ov;
            ov >= 0.0
        });
        stale += (before - queue.len()) as u64;
        if queue.is_empty() {
            break;
        }
        let mut best_at = 0;
        for (k, e) in queue.iter().enumerate().skip(1) {
            let b = &queue[best_at];
            let ord = e
                .overlap
                .total_cmp(&b.overlap)
                .then(b.buyer.cmp(&e.buyer))
                .then(b.seller.cmp(&e.seller));
            if ord == std::cmp::Ordering::Greater {
                best_at = k;
            }
        }
        let best = queue.swap_remove(best_at);
        let (i, j) = (best.buyer as usize, best.seller as usize);
        let p_new = 0.5 * (state.bid(i) + state.ask(j));
        state.z[i] -= 0.5 * state.spread[i];
        state.z[j] += 0.5 * state.spread[j];
        state.z_cm += (state.spread[j] - state.spread[i]) / (2.0 * n as f64);
        state.dp = p_new - state.p;
        state.p = p_new;
        state.tick += 1;
        rows.push(TickEvent {
            tick: state.tick,
            t: state.t,
            p: state.p,
            dp: state.dp,
            parties: Some((best.buyer, best.seller)),
        });
        // requotes may cross quotes that were clear before
        for &x in &[i, j] {
            let (bx, ax) = (state.bid(x), state.ask(x));
            for k in 0..n {
                if k == x {
                    continue;
                }
                if bx >= state.ask(k)
                    && !queue.iter().any(|e| e.buyer as usize == x && e.seller as usize == k)
                {
                    queue.push(CrossEvent {
                        buyer: x as u32,
                        seller: k as u32,
                        overlap: bx - state.ask(k),
                    });
                }
                if state.bid(k) >= ax
                    && !queue.iter().any(|e| e.buyer as usize == k && e.seller as usize == x)
                {
                    queue.push(CrossEvent {
                        buyer: k as u32,
                        seller: x as u32,
                        overlap: state.bid(k) - ax,
                    });
                }
            }
        }
    }
    (rows, stale)
}

const REANCHOR_EVERY: u64 = 4096;

/// Run one replica to its tick budget, feeding the collector.
pub fn run_replica<C: Collector>(
    cfg: &SimConfig,
    replica: u64,
    collector: &mut C,
) -> Result<RunDiag> {
    cfg.validate()?;
    let mut rng = stream(cfg.seed, "micro", replica);
    let mut state = place(cfg, &mut rng);
    let dt = cfg.step_dt();
    let mut diag = RunDiag::default();
    let inv_sq: f64 = state.spread.iter().map(|l| 1.0 / (l * l)).sum();
    diag.quenched_wait_sum = 1.0 / (2.0 * cfg.sigma * cfg.sigma * inv_sq);

    // warm-up: full dynamics, transactions uncounted, then clocks reset
    let warm_until = cfg.warmup_time();
    while state.t < warm_until {
        advance(&mut state, cfg, dt, &mut rng);
        diag.steps += 1;
        if diag.steps % REANCHOR_EVERY == 0 {
            state.reanchor_cm();
        }
        let ev = detect_crossings(&state);
        if !ev.is_empty() {
            settle(&mut state, ev);
        }
    }
    state.t = 0.0;
    state.tick = 0;

    let budget = cfg.starvation_budget();
    let snap_dt = cfg.snapshot_dt();
    let mut next_snap = snap_dt;
    let mut steps_since_tick = 0u64;
    while state.tick < cfg.ticks {
        advance(&mut state, cfg, dt, &mut rng);
        diag.steps += 1;
        if diag.steps % REANCHOR_EVERY == 0 {
            state.reanchor_cm();
        }
        let ev = detect_crossings(&state);
        if ev.is_empty() {
            steps_since_tick += 1;
            if steps_since_tick > budget {
                return Err(Error::Starved { steps: steps_since_tick, t: state.t });
            }
        } else {
            steps_since_tick = 0;
            let (rows, stale) = settle(&mut state, ev);
            diag.stale_events += stale;
            diag.coalesced_ticks += rows.len() as u64 - 1;
            for row in &rows {
                collector.on_tick(row);
            }
        }
        while state.t >= next_snap {
            collector.on_snapshot(&state);
            next_snap += snap_dt;
        }
    }
    Ok(diag)
}

/// Run `cfg.replicas` independent replicas (in parallel when worker threads
/// are available) and merge their collectors in replica order. Identical
/// output for any worker count.
pub fn run_ensemble<C, F>(cfg: &SimConfig, make: F) -> Result<(C, RunDiag)>
where
    C: Collector,
    F: Fn() -> C + Sync,
{
    cfg.validate()?;
    let results: Vec<Result<(C, RunDiag)>> = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut c = make();
            let diag = run_replica(cfg, r, &mut c)?;
            Ok((c, diag))
        })
        .collect();
    let mut merged: Option<C> = None;
    let mut diag = RunDiag::default();
    for res in results {
        let (c, d) = res?;
        diag.absorb(&d);
        match merged.as_mut() {
            None => merged = Some(c),
            Some(m) => m.merge(c)?,
        }
    }
    Ok((merged.expect("replicas >= 1 validated"), diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collect::{NullCollector, SeriesCollector};
    use crate::model::SpreadLaw;

    fn static_state(z: Vec<f64>, spread: Vec<f64>) -> EnsembleState {
        let mut s = EnsembleState {
            z,
            spread,
            z_cm: 0.0,
            p: 0.0,
            dp: 0.0,
            t: 1.0,
            tick: 0,
        };
        s.reanchor_cm();
        s
    }

    #[test]
    fn detects_single_overlap() {
        let s = static_state(vec![1.05, -1.0], vec![2.0, 2.0]);
        let ev = detect_crossings(&s);
        assert_eq!(ev.len(), 1);
        assert_eq!((ev[0].buyer, ev[0].seller), (0, 1));
        assert!((ev[0].overlap - 0.05).abs() < 1e-12);
        // pitch below the crossing threshold: quiescent
        let q = static_state(vec![0.0, 1.9], vec![2.0, 2.0]);
        assert!(detect_crossings(&q).is_empty());
    }

    #[test]
    fn settle_symmetric_pair_keeps_center() {
        let mut s = static_state(vec![1.0, -1.0], vec![2.0, 2.0]);
        let cm0 = s.z_cm;
        let ev = detect_crossings(&s);
        let (rows, stale) = settle(&mut s, ev);
        assert_eq!(rows.len(), 1);
        assert_eq!(stale, 0);
        assert_eq!(rows[0].p, 0.0);
        assert_eq!(s.z, vec![0.0, 0.0]);
        // equal spreads: center of mass bitwise unchanged
        assert_eq!(s.z_cm, cm0);
        assert_eq!(s.tick, 1);
        assert_eq!(rows[0].t, 1.0);
    }

    #[test]
    fn settle_asymmetric_pair_moves_center() {
        let mut s = static_state(vec![3.0, 0.0], vec![2.0, 4.0]);
        let ev = detect_crossings(&s);
        assert_eq!(ev.len(), 1);
        let (rows, _) = settle(&mut s, ev);
        assert_eq!(rows[0].p, 2.0);
        assert_eq!(s.z, vec![2.0, 2.0]);
        // jump (L_seller - L_buyer)/(2n) = (4 - 2)/4 = 1/2
        assert!((s.z_cm - 2.0).abs() < 1e-15);
        assert!((s.z_cm - s.mean_z()).abs() < 1e-15);
    }

    #[test]
    fn settle_leaves_no_crossing_and_counts_stale() {
        let mut rng = stream(21, "settle-fuzz", 0);
        for _ in 0..1000 {
            let n = 2 + (rng.random::<u64>() % 7) as usize;
            let z: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let spread: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..3.0)).collect();
            let mut s = static_state(z, spread);
            let ev = detect_crossings(&s);
            let (rows, _) = settle(&mut s, ev);
            assert!(detect_crossings(&s).is_empty(), "book still crossed after settle");
            // ticks numbered consecutively
            for (k, r) in rows.iter().enumerate() {
                assert_eq!(r.tick, k as u64 + 1);
            }
            assert!((s.z_cm - s.mean_z()).abs() < 1e-12);
        }
    }

    #[test]
    fn prefiltered_detection_equals_brute_force() {
        let mut rng = stream(22, "detect-fuzz", 0);
        for case in 0..10_000 {
            let n = if case % 50 == 0 { 128 } else { 2 + (rng.random::<u64>() % 7) as usize };
            let z: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
            let spread: Vec<f64> = (0..n)
                .map(|_| {
                    if rng.random::<bool>() {
                        1.0
                    } else {
                        rng.random_range(0.1..5.0)
                    }
                })
                .collect();
            let s = static_state(z, spread);
            let fast = detect_crossings(&s);
            let brute = detect_crossings_brute(&s);
            assert_eq!(fast, brute, "case {case} n {n}");
        }
    }

    #[test]
    fn place_settles_initial_crossings() {
        let cfg = SimConfig::new(64, SpreadLaw::gamma(1.0), 10).with_seed(5);
        let mut rng = stream(cfg.seed, "place-test", 0);
        for _ in 0..50 {
            let s = place(&cfg, &mut rng);
            assert!(detect_crossings(&s).is_empty());
            assert_eq!(s.tick, 0);
            assert_eq!(s.t, 0.0);
            assert_eq!(s.dp, 0.0);
            assert!((s.p - s.mean_z()).abs() < 1e-12);
        }
    }

    #[test]
    fn run_is_deterministic_and_merge_order_is_replica_order() {
        let cfg =
            SimConfig::new(16, SpreadLaw::gamma(1.0), 200).with_seed(42).with_replicas(3);
        let (a, diag_a) = run_ensemble(&cfg, SeriesCollector::new).unwrap();
        let (b, diag_b) = run_ensemble(&cfg, SeriesCollector::new).unwrap();
        assert_eq!(a.series, b.series);
        assert_eq!(diag_a, diag_b);
        // hand-rolled sequential merge gives the same pooled series
        let mut manual = SeriesCollector::new();
        for r in 0..3 {
            let mut c = SeriesCollector::new();
            run_replica(&cfg, r, &mut c).unwrap();
            manual.merge(c).unwrap();
        }
        assert_eq!(manual.series, a.series);
    }

    #[test]
    fn center_of_mass_tracks_mean_through_a_run() {
        let cfg = SimConfig::new(50, SpreadLaw::gamma(1.0), 2000).with_seed(7);
        let mut rng = stream(cfg.seed, "micro", 0);
        let mut state = place(&cfg, &mut rng);
        let dt = cfg.step_dt();
        let mut steps = 0u64;
        while state.tick < cfg.ticks {
            advance(&mut state, &cfg, dt, &mut rng);
            steps += 1;
            if steps % REANCHOR_EVERY == 0 {
                state.reanchor_cm();
            }
            let ev = detect_crossings(&state);
            if !ev.is_empty() {
                settle(&mut state, ev);
            }
        }
        assert!(
            (state.z_cm - state.mean_z()).abs() < 1e-9,
            "cm drift {:e}",
            (state.z_cm - state.mean_z()).abs()
        );
    }

    #[test]
    fn point_mass_settlement_is_exactly_center_preserving() {
        let cfg = SimConfig::new(32, SpreadLaw::point(1.0), 500).with_seed(3);
        let mut rng = stream(cfg.seed, "micro", 0);
        let mut state = place(&cfg, &mut rng);
        let dt = cfg.step_dt();
        let mut settled = 0;
        while settled < 200 {
            advance(&mut state, &cfg, dt, &mut rng);
            let ev = detect_crossings(&state);
            if !ev.is_empty() {
                let cm = state.z_cm;
                let (rows, _) = settle(&mut state, ev);
                settled += rows.len();
                assert_eq!(state.z_cm, cm, "equal spreads must not move the center");
            }
        }
    }

    #[test]
    fn starved_run_reports_starvation() {
        let mut cfg = SimConfig::new(2, SpreadLaw::point(1.0), 1);
        cfg.sigma = 1e-9; // quotes barely move, placed a spread apart
        cfg.warmup = Some(0.0);
        cfg.max_steps_per_tick = 500;
        cfg.dt = Some(1e-4);
        let mut c = NullCollector;
        match run_replica(&cfg, 0, &mut c) {
            Err(Error::Starved { steps, .. }) => assert!(steps > 500),
            other => panic!("expected starvation, got {other:?}"),
        }
    }

    #[test]
    fn two_trader_wait_tail_is_exponential() {
        // For two traders the wait is a first-passage time: its body is not
        // exponential, but successive e-folds of the tail must agree.
        let cfg = SimConfig::new(2, SpreadLaw::point(1.0), 30_000).with_seed(11);
        let mut col = SeriesCollector::new();
        run_replica(&cfg, 0, &mut col).unwrap();
        let waits = &col.waits;
        let mean = waits.iter().sum::<f64>() / waits.len() as f64;
        let surv = |x: f64| waits.iter().filter(|&&w| w > x).count() as f64;
        let r1 = surv(2.0 * mean) / surv(mean);
        let r2 = surv(3.0 * mean) / surv(2.0 * mean);
        assert!(r1 > 0.15 && r1 < 0.5, "r1 = {r1}");
        assert!((r1 - r2).abs() < 0.06, "r1 = {r1} vs r2 = {r2}");
    }

    #[test]
    fn coalesced_settlements_share_the_clock() {
        // three stacked quotes settle as two transactions at equal t
        let mut s = static_state(vec![2.0, 0.0, -2.0], vec![2.0, 2.0, 2.0]);
        let ev = detect_crossings(&s);
        let (rows, _) = settle(&mut s, ev);
        assert!(rows.len() >= 2);
        assert!(rows.windows(2).all(|w| w[0].t == w[1].t));
    }
}
