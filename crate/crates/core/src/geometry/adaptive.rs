//! Adaptive temporal partitioning of the inverse flow map.
//!
//! The current sub-map is refit on a growing window of grid times, warm
//! started from the previous fit. After each refit the minimum Jacobian
//! determinant is taken over the monitor grid at every time in the window.
//! Once it drops to `delta` or below, the last fit that stayed above the
//! threshold is kept for the window that ended one grid time earlier, and a
//! fresh sub-map starts there. A window of a single grid step that already
//! violates the threshold means the grid is too coarse for the flow.

use crate::error::{Error, Result};

/// A sub-map whose orientation can be monitored.
pub trait MonitoredMap: Clone {
    fn min_jacobian_det(&self, t: f64) -> Result<f64>;
}

/// One frozen interval of the partition.
#[derive(Debug, Clone)]
pub struct Interval<M> {
    pub map: M,
    pub t_start: f64,
    pub t_end: f64,
    pub fit_loss: f64,
    pub min_det: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepEvent {
    Extended { t: f64, min_det: f64, loss: f64 },
    Split { at: f64, rejected_t: f64, min_det: f64 },
}

#[derive(Debug, Clone)]
pub struct Partition<M> {
    pub intervals: Vec<Interval<M>>,
    pub events: Vec<StepEvent>,
}

/// Runs the adaptive time-stepping loop over `times` (increasing, starting
/// at the first interval start).
///
/// `init(t_start)` creates a fresh sub-map; `fit(map, window)` refits it in
/// place on the window of time indices (first entry is the start) and
/// returns the fit loss.
pub fn adaptive_time_stepping<M, I, F>(times: &[f64], delta: f64, mut init: I, mut fit: F) -> Result<Partition<M>>
where
    M: MonitoredMap,
    I: FnMut(f64) -> Result<M>,
    F: FnMut(&mut M, &[usize]) -> Result<f64>,
{
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument("delta must be positive".into()));
    }
    if times.len() < 2 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("time grid must have at least two increasing entries".into()));
    }
    let mut intervals = Vec::new();
    let mut events = Vec::new();
    let mut start = 0;
    let mut map = init(times[start])?;
    let mut last_good: Option<Interval<M>> = None;
    let mut i = start;
    while i + 1 < times.len() {
        i += 1;
        let window: Vec<usize> = (start..=i).collect();
        let loss = fit(&mut map, &window)?;
        let mut min_det = f64::INFINITY;
        for &j in &window {
            min_det = min_det.min(map.min_jacobian_det(times[j])?);
        }
        if min_det > delta {
            events.push(StepEvent::Extended { t: times[i], min_det, loss });
            last_good =
                Some(Interval { map: map.clone(), t_start: times[start], t_end: times[i], fit_loss: loss, min_det });
            continue;
        }
        let Some(good) = last_good.take() else {
            return Err(Error::GridTooCoarse { t: times[i], min_det });
        };
        events.push(StepEvent::Split { at: good.t_end, rejected_t: times[i], min_det });
        intervals.push(good);
        start = i - 1;
        map = init(times[start])?;
        i = start;
    }
    intervals.push(last_good.expect("loop ends after an accepted extension"));
    Ok(Partition { intervals, events })
}
