//! Deterministic simulator of streaming perception pipelines.
//!
//! Slices arrive at the acquisition interval. Each slice walks the stage
//! list in order; consecutive stages sharing a `parallel_group` tag start
//! together and the slice proceeds at their max finish. A stage marked
//! `depends_on_previous_slice` cannot start before the same stage finished
//! on the previous slice — the sequential bottleneck of past-aware
//! pipelines. Past-free stages have unlimited workers, so slices never
//! queue on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::DetRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub latency_ms: f64,
    #[serde(default)]
    pub depends_on_previous_slice: bool,
    #[serde(default)]
    pub parallel_group: Option<String>,
}

impl Stage {
    pub fn new(name: impl Into<String>, latency_ms: f64) -> Self {
        Stage { name: name.into(), latency_ms, depends_on_previous_slice: false, parallel_group: None }
    }

    pub fn past_dependent(mut self) -> Self {
        self.depends_on_previous_slice = true;
        self
    }

    pub fn in_group(mut self, group: impl Into<String>) -> Self {
        self.parallel_group = Some(group.into());
        self
    }
}

/// Optional uniform latency jitter, added per stage execution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterSpec {
    pub max_ms: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineModel {
    pub name: String,
    pub stages: Vec<Stage>,
    /// Acquisition time of one slice, ms.
    pub slice_interval_ms: f64,
    pub n_slices: u32,
    #[serde(default)]
    pub jitter: Option<JitterSpec>,
    /// Maximum number of slices in flight at once; absent models an
    /// accelerator with unlimited occupancy.
    #[serde(default)]
    pub worker_cap: Option<u32>,
}

impl PipelineModel {
    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::config(format!("model {} has no stages", self.name)));
        }
        if self.slice_interval_ms <= 0.0 {
            return Err(Error::config("slice interval must be positive".to_string()));
        }
        if self.n_slices == 0 {
            return Err(Error::config("n_slices must be >= 1".to_string()));
        }
        if let Some(bad) = self.stages.iter().find(|s| s.latency_ms < 0.0) {
            return Err(Error::config(format!("stage {} has negative latency", bad.name)));
        }
        if let Some(j) = &self.jitter {
            if j.max_ms < 0.0 {
                return Err(Error::config("jitter bound must be non-negative".to_string()));
            }
        }
        if self.worker_cap == Some(0) {
            return Err(Error::config("worker cap must be >= 1".to_string()));
        }
        // A group tag re-appearing after a different block would make the
        // stage order cyclic with respect to the block schedule.
        let mut seen: Vec<&str> = Vec::new();
        let mut prev: Option<&str> = None;
        for s in &self.stages {
            let tag = s.parallel_group.as_deref();
            if let Some(t) = tag {
                if prev != Some(t) && seen.contains(&t) {
                    return Err(Error::config(format!(
                        "parallel group '{t}' re-appears after other stages; groups must be contiguous"
                    )));
                }
                if !seen.contains(&t) {
                    seen.push(t);
                }
            }
            prev = tag;
        }
        Ok(())
    }

    pub fn is_past_dependent(&self) -> bool {
        self.stages.iter().any(|s| s.depends_on_previous_slice)
    }

    /// The streaming model of this crate's pipeline: both encoders run in
    /// parallel and nothing depends on past slices. Totals 15.8 ms of
    /// processing behind a 6.25 ms acquisition interval (20 Hz LiDAR, 8
    /// slices per rotation).
    pub fn bundled_parallel() -> Self {
        PipelineModel {
            name: "parallel".to_string(),
            stages: vec![
                Stage::new("point_encode", 6.0).in_group("encoders"),
                Stage::new("image_fetch", 9.0).in_group("encoders"),
                Stage::new("fuse_detect", 6.8),
            ],
            slice_interval_ms: 6.25,
            n_slices: 8,
            jitter: None,
            worker_cap: None,
        }
    }

    /// A past-aware baseline: one monolithic stage whose input includes the
    /// previous slice's features, tuned so an unloaded frame takes
    /// 1000/37 ms end to end.
    pub fn bundled_sequential() -> Self {
        PipelineModel {
            name: "sequential".to_string(),
            stages: vec![Stage::new("process_with_memory", 1000.0 / 37.0 - 6.25).past_dependent()],
            slice_interval_ms: 6.25,
            n_slices: 8,
            jitter: None,
            worker_cap: None,
        }
    }

    pub fn bundled(name: &str) -> Option<Self> {
        match name {
            "parallel" => Some(Self::bundled_parallel()),
            "sequential" => Some(Self::bundled_sequential()),
            _ => None,
        }
    }
}

/// Execution record of one stage on one slice.
#[derive(Debug, Clone, PartialEq)]
pub struct StageEvent {
    pub stage: usize,
    pub start_ms: f64,
    pub finish_ms: f64,
}

/// Timeline of one slice.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceTrace {
    pub slice: u32,
    pub arrival_ms: f64,
    pub stages: Vec<StageEvent>,
    /// Total stall time waiting on past-slice dependencies.
    pub wait_ms: f64,
    /// Acquisition interval plus time from arrival to last finish.
    pub end_to_end_ms: f64,
}

impl SliceTrace {
    pub fn finish_ms(&self) -> f64 {
        self.stages.last().map(|s| s.finish_ms).unwrap_or(self.arrival_ms)
    }
}

/// Aggregate figures of one simulated model.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSummary {
    pub model: String,
    /// Per-frame rate: inverse end-to-end latency of an unloaded slice
    /// (slice 0), the "runs at N Hz" framing.
    pub throughput_hz: f64,
    /// Inverse mean inter-completion time over the last rotation: the
    /// sustained completion rate with unlimited workers.
    pub completion_rate_hz: f64,
    pub mean_e2e_ms: f64,
    pub max_e2e_ms: f64,
    pub mean_wait_ms: f64,
    /// Least-squares slope of wait time against slice index.
    pub wait_growth_ms_per_slice: f64,
}

/// Full event timeline plus the aggregate summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub model: String,
    pub stage_names: Vec<String>,
    pub slices: Vec<SliceTrace>,
    pub summary: SimSummary,
}

fn least_squares_slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    if ys.len() < 2 {
        return 0.0;
    }
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &y) in ys.iter().enumerate() {
        let dx = i as f64 - mean_x;
        num += dx * (y - mean_y);
        den += dx * dx;
    }
    num / den
}

/// Contiguous stage blocks: stages sharing a group tag run concurrently.
fn blocks(stages: &[Stage]) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (i, s) in stages.iter().enumerate() {
        let joins_previous = match (&s.parallel_group, out.last()) {
            (Some(tag), Some(last)) => stages[last[0]].parallel_group.as_deref() == Some(tag),
            _ => false,
        };
        if joins_previous {
            out.last_mut().unwrap().push(i);
        } else {
            out.push(vec![i]);
        }
    }
    out
}

/// Runs the model for `n_rotations` full sweeps.
pub fn simulate(model: &PipelineModel, n_rotations: u32) -> Result<SimTrace> {
    model.validate()?;
    if n_rotations == 0 {
        return Err(Error::config("n_rotations must be >= 1".to_string()));
    }
    let n_total = (model.n_slices * n_rotations) as usize;
    let blocks = blocks(&model.stages);
    let mut jitter_rng = model.jitter.map(|j| DetRng::substream(j.seed, "sim-jitter"));

    let mut prev_finish: Vec<f64> = vec![f64::NEG_INFINITY; model.stages.len()];
    let mut workers: Vec<f64> = vec![f64::NEG_INFINITY; model.worker_cap.unwrap_or(0) as usize];
    let mut slices: Vec<SliceTrace> = Vec::with_capacity(n_total);
    for k in 0..n_total {
        let arrival = k as f64 * model.slice_interval_ms;
        let mut events: Vec<StageEvent> = vec![
            StageEvent { stage: 0, start_ms: 0.0, finish_ms: 0.0 };
            model.stages.len()
        ];
        // With a worker cap, the slice waits for the earliest free slot.
        let worker = workers
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(idx, &free)| (idx, free));
        let mut ready = arrival;
        let mut wait = 0.0;
        if let Some((_, free)) = worker {
            if free > ready {
                wait += free - ready;
                ready = free;
            }
        }
        for block in &blocks {
            let mut start = ready;
            for &si in block {
                if model.stages[si].depends_on_previous_slice && prev_finish[si] > start {
                    start = prev_finish[si];
                }
            }
            wait += start - ready;
            let mut block_finish = start;
            for &si in block {
                let jitter = match (&mut jitter_rng, model.jitter) {
                    (Some(rng), Some(j)) => rng.uniform(0.0, j.max_ms),
                    _ => 0.0,
                };
                let latency = model.stages[si].latency_ms + jitter;
                let finish = start + latency;
                events[si] = StageEvent { stage: si, start_ms: start, finish_ms: finish };
                block_finish = block_finish.max(finish);
            }
            ready = block_finish;
        }
        for (si, ev) in events.iter().enumerate() {
            prev_finish[si] = ev.finish_ms;
        }
        if let Some((idx, _)) = worker {
            workers[idx] = ready;
        }
        slices.push(SliceTrace {
            slice: k as u32,
            arrival_ms: arrival,
            stages: events,
            wait_ms: wait,
            end_to_end_ms: model.slice_interval_ms + (ready - arrival),
        });
    }

    let e2e: Vec<f64> = slices.iter().map(|s| s.end_to_end_ms).collect();
    let waits: Vec<f64> = slices.iter().map(|s| s.wait_ms).collect();
    let last_rotation = &slices[n_total - model.n_slices.min(n_total as u32) as usize..];
    let completion_rate_hz = if last_rotation.len() >= 2 {
        let first = last_rotation.first().unwrap().finish_ms();
        let last = last_rotation.last().unwrap().finish_ms();
        let span = last - first;
        if span > 0.0 {
            1000.0 * (last_rotation.len() - 1) as f64 / span
        } else {
            f64::INFINITY
        }
    } else {
        1000.0 / e2e[0]
    };
    let summary = SimSummary {
        model: model.name.clone(),
        throughput_hz: 1000.0 / e2e[0],
        completion_rate_hz,
        mean_e2e_ms: e2e.iter().sum::<f64>() / e2e.len() as f64,
        max_e2e_ms: e2e.iter().cloned().fold(f64::MIN, f64::max),
        mean_wait_ms: waits.iter().sum::<f64>() / waits.len() as f64,
        wait_growth_ms_per_slice: least_squares_slope(&waits),
    };
    Ok(SimTrace {
        model: model.name.clone(),
        stage_names: model.stages.iter().map(|s| s.name.clone()).collect(),
        slices,
        summary,
    })
}

/// Simulates every model and returns one summary row each.
pub fn compare_pipelines(models: &[PipelineModel], n_rotations: u32) -> Result<Vec<SimSummary>> {
    if models.len() < 2 {
        return Err(Error::config("comparison needs at least two models".to_string()));
    }
    models.iter().map(|m| Ok(simulate(m, n_rotations)?.summary)).collect()
}

/// Maximum per-slice processing time that still meets `target_hz`.
///
/// Past-free pipelines only pay acquisition: `1000/target - interval`.
/// Past-dependent pipelines must additionally keep service below the
/// acquisition interval for the queue to stay bounded.
pub fn latency_budget(model: &PipelineModel, target_hz: f64) -> Result<f64> {
    if target_hz <= 0.0 {
        return Err(Error::config("target rate must be positive".to_string()));
    }
    let unloaded = 1000.0 / target_hz - model.slice_interval_ms;
    Ok(if model.is_past_dependent() {
        unloaded.min(model.slice_interval_ms)
    } else {
        unloaded
    })
}
