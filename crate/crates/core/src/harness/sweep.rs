use std::time::Instant;

use rayon::prelude::*;

use crate::baselines::{run_baseline, BaselineKind};
use crate::channel::{build_network, NetworkLayout};
use crate::harness::SimConfig;
use crate::rng::{splitmix64, stream};
use crate::{ChannelSet, Error, Result};

/// Outcome flag of one row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowStatus {
    Converged,
    NotConverged,
    /// The scheme returned an error; the numeric fields are placeholders.
    Error,
}

impl RowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RowStatus::Converged => "true",
            RowStatus::NotConverged => "false",
            RowStatus::Error => "error",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "true" => Some(RowStatus::Converged),
            "false" => Some(RowStatus::NotConverged),
            "error" => Some(RowStatus::Error),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub scheme: String,
    pub p_max_dbm: f64,
    pub trial: usize,
    pub seed: u64,
    /// Weighted sum rate in bits/s/Hz; NaN on error rows.
    pub throughput: f64,
    pub iterations: usize,
    pub status: RowStatus,
    pub violations: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub rows: Vec<Row>,
}

impl SweepResult {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn failures(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| r.status == RowStatus::Error)
            .count()
    }
}

/// Seed of trial `t`. It does not depend on the scheme or the power point,
/// so every scheme and every `p_max` sees the same channel realization.
pub fn trial_seed(base: u64, trial: usize) -> u64 {
    base ^ splitmix64(trial as u64)
}

fn draw_channels(config: &SimConfig, seed: u64) -> Result<ChannelSet> {
    let mut rng = stream(seed, 1);
    let layout = NetworkLayout::with_random_users(
        config.ap_position,
        config.rhs_positions.clone(),
        config.ue_region,
        config.kappa,
        config.dims.k,
        &mut rng,
    )?;
    build_network(
        &layout,
        &config.path_loss,
        config.dims,
        config.noise_dbm,
        &mut rng,
    )
}

fn run_one(
    config: &SimConfig,
    channels: &Result<ChannelSet>,
    scheme: BaselineKind,
    p_max_dbm: f64,
    trial: usize,
    seed: u64,
) -> Row {
    let start = Instant::now();
    let outcome = match channels {
        Ok(ch) => run_baseline(
            scheme,
            ch,
            &config.catalog,
            &config.ao_config(p_max_dbm, seed),
        ),
        Err(e) => Err(Error::Domain(format!("network draw failed: {e}"))),
    };
    let wall_ms = if config.record_timing {
        start.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    };
    let mut row = Row {
        scheme: scheme.to_string(),
        p_max_dbm,
        trial,
        seed,
        throughput: f64::NAN,
        iterations: 0,
        status: RowStatus::Error,
        violations: 0,
        wall_ms,
    };
    match outcome {
        Ok(sol) => {
            row.throughput = sol.objective;
            row.iterations = sol.iterations();
            row.violations = sol.violations();
            row.status = if sol.converged {
                RowStatus::Converged
            } else {
                RowStatus::NotConverged
            };
        }
        Err(e) => log::warn!("{scheme} at {p_max_dbm} dBm, trial {trial}: {e}"),
    }
    row
}

/// Runs every `(scheme, p_max, trial)` combination. Trials run in parallel;
/// rows come back ordered by scheme (config order), power point, then trial.
/// Per-row failures are recorded, not propagated.
pub fn run_sweep(config: &SimConfig) -> Result<SweepResult> {
    let per_trial: Vec<Vec<Row>> = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = trial_seed(config.seed, trial);
            let channels = draw_channels(config, seed);
            let mut rows = Vec::with_capacity(config.schemes.len() * config.p_max_dbm.len());
            for &scheme in &config.schemes {
                for &p in &config.p_max_dbm {
                    rows.push(run_one(config, &channels, scheme, p, trial, seed));
                }
            }
            rows
        })
        .collect();

    let n_p = config.p_max_dbm.len();
    let mut rows = Vec::with_capacity(config.trials * config.schemes.len() * n_p);
    for si in 0..config.schemes.len() {
        for pi in 0..n_p {
            rows.extend(per_trial.iter().map(|t| t[si * n_p + pi].clone()));
        }
    }
    Ok(SweepResult { rows })
}
