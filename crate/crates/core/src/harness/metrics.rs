use serde::{Deserialize, Serialize};

use super::closed_loop::ClosedLoopResult;
use super::scenario::{Event, EventKind};
use crate::bounds::InputBox;

/// Tracking after one reference or disturbance step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventMetrics {
    pub sample: usize,
    pub kind: EventKind,
    pub label: String,
    /// Samples from the step until `|e|` enters the band for good (up to the
    /// next step); `None` if it never does.
    pub settling_samples: Option<usize>,
    /// Mean `|e|` over the last 10% of the interval before the next step, K.
    pub steady_offset: f64,
    pub peak_error: f64,
}

/// Mean `|e|` over the last 10% of one setpoint hold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentOffset {
    pub setpoint: f64,
    pub start: usize,
    pub end: usize,
    pub offset: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub controller: String,
    pub samples: usize,
    pub settling_band: f64,
    pub segments: Vec<SegmentOffset>,
    pub events: Vec<EventMetrics>,
    /// Largest distance of a requested input from the box.
    pub max_violation: f64,
    /// Largest distance of an applied input from the box.
    pub max_applied_violation: f64,
    pub total_squared_increment: f64,
    pub model_fit: Option<f64>,
    pub solver_failures: usize,
    pub aborted: Option<String>,
    pub wall_time: f64,
    pub max_step_time: f64,
}

impl RunMetrics {
    /// Largest settling time over all events, `None` if any never settles.
    pub fn worst_settling(&self) -> Option<usize> {
        self.events.iter().map(|e| e.settling_samples).try_fold(0, |acc, s| s.map(|s| acc.max(s)))
    }

    pub fn event(&self, kind: EventKind, nth: usize) -> Option<&EventMetrics> {
        self.events.iter().filter(|e| e.kind == kind).nth(nth)
    }
}

fn tail_mean(err: &[f64]) -> f64 {
    if err.is_empty() {
        return f64::NAN;
    }
    let n = (err.len() / 10).max(1);
    err[err.len() - n..].iter().sum::<f64>() / n as f64
}

fn settling(err: &[f64], band: f64) -> Option<usize> {
    // index of the first sample after the last one outside the band
    match err.iter().rposition(|e| *e >= band) {
        None => Some(0),
        Some(i) if i + 1 < err.len() => Some(i + 1),
        Some(_) => None,
    }
}

pub fn run_metrics(result: &ClosedLoopResult, input_box: &InputBox, band: f64, model_fit: Option<f64>) -> RunMetrics {
    let rows = &result.rows;
    let err: Vec<f64> = rows.iter().map(|r| (r.y - r.setpoint).abs()).collect();
    let n = rows.len();

    let mut segments = Vec::new();
    let mut start = 0;
    for k in 1..=n {
        if k == n || rows[k].setpoint != rows[start].setpoint {
            segments.push(SegmentOffset {
                setpoint: rows[start].setpoint,
                start,
                end: k,
                offset: tail_mean(&err[start..k]),
            });
            start = k;
        }
    }

    let starts: Vec<usize> = result.events.iter().map(|e| e.sample).collect();
    let events = result
        .events
        .iter()
        .filter(|e: &&Event| e.sample < n)
        .map(|e| {
            let end = starts.iter().copied().filter(|s| *s > e.sample).min().unwrap_or(n).min(n);
            let span = &err[e.sample..end];
            EventMetrics {
                sample: e.sample,
                kind: e.kind,
                label: e.label.clone(),
                settling_samples: settling(span, band),
                steady_offset: tail_mean(span),
                peak_error: span.iter().copied().fold(0.0, f64::max),
            }
        })
        .collect();

    let max_violation = rows.iter().map(|r| input_box.violation(&[r.u_requested])).fold(0.0, f64::max);
    let max_applied_violation = rows.iter().map(|r| input_box.violation(&[r.u])).fold(0.0, f64::max);
    let total_squared_increment = rows.windows(2).map(|w| (w[1].u - w[0].u).powi(2)).sum();
    RunMetrics {
        controller: result.controller.name().into(),
        samples: n,
        settling_band: band,
        segments,
        events,
        max_violation,
        max_applied_violation,
        total_squared_increment,
        model_fit,
        solver_failures: rows.iter().filter(|r| !r.converged).count(),
        aborted: result.aborted.clone(),
        wall_time: result.wall_time,
        max_step_time: result.max_step_time,
    }
}
