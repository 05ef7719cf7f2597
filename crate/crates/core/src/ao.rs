//! Outer alternating optimization of the weighted sum rate.
//!
//! Each iteration refreshes the Lagrangian-dual auxiliaries `chi = gamma`,
//! then updates in turn the shape mask, the AP precoder and the surface
//! phases. A block update is committed only when it does not lower the
//! weighted sum rate, so the recorded trace is monotone even where a block
//! optimizes a surrogate (shape gain, distance-scaled passive ratio,
//! penalized floors) rather than the rate itself.

use crate::active::{bisect_mu, update_tau_aligned};
use crate::baselines::quantize_phases;
use crate::passive::{
    assemble_quadratic, d_sums, min_power_floors, solve_unit_modulus_qp, stack_v, update_epsilon,
    QpOptions,
};
use crate::rng::{stream, ChaCha8Rng};
use crate::shapes::{link_amplitudes, select_shape, select_shape_per_rhs};
use crate::{
    ChannelSet, Complex64, Coupling, EffectiveChannels, Error, PhaseConfig, Precoder, Result,
    ShapeCatalog, ShapeMask,
};

/// Solver settings for one alternating-optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct AoConfig {
    /// Total transmit power budget (W).
    pub p_max: f64,
    /// Minimum received power per link (W); `0` disables the floors.
    pub p_thr: f64,
    /// Rate weights, one per user.
    pub weights: Vec<f64>,
    pub eta: f64,
    pub tol_outer: f64,
    pub max_outer: usize,
    pub coupling: Coupling,
    /// Select a mask independently for every surface.
    pub per_rhs_masks: bool,
    pub qp: QpOptions,
    /// Seed for the random initial phases.
    pub seed: u64,
    /// Restrict phases to a `2^bits` grid after every passive update.
    pub quantize_bits: Option<u32>,
}

impl AoConfig {
    pub fn new(p_max: f64, weights: Vec<f64>) -> Self {
        Self {
            p_max,
            p_thr: 0.0,
            weights,
            eta: 1.0,
            tol_outer: 1e-4,
            max_outer: 100,
            coupling: Coupling::PerUser,
            per_rhs_masks: false,
            qp: QpOptions::default(),
            seed: 0,
            quantize_bits: None,
        }
    }

    fn validate(&self, channels: &ChannelSet) -> Result<()> {
        if !(self.p_max > 0.0 && self.p_max.is_finite()) {
            return Err(Error::domain("p_max must be positive and finite"));
        }
        if !(self.p_thr >= 0.0) {
            return Err(Error::domain("p_thr must be non-negative"));
        }
        if self.weights.len() != channels.num_users() {
            return Err(Error::dim(format!(
                "{} weights for {} users",
                self.weights.len(),
                channels.num_users()
            )));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::domain("weights must be non-negative"));
        }
        if self.max_outer == 0 {
            return Err(Error::domain("max_outer must be at least 1"));
        }
        if self.quantize_bits == Some(0) {
            return Err(Error::domain("quantization needs at least one bit"));
        }
        Ok(())
    }
}

/// Fractional-transform auxiliaries at the last iteration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AuxState {
    pub chi: Vec<f64>,
    pub tau: Vec<Complex64>,
    pub epsilon: Vec<Complex64>,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AoSolution {
    /// Catalog index used on each surface (all equal unless per-surface
    /// selection is on).
    pub mask_indices: Vec<usize>,
    pub precoder: Precoder,
    pub phases: PhaseConfig,
    pub gammas: Vec<f64>,
    /// Per-user `log2(1 + gamma_k)`.
    pub rates: Vec<f64>,
    /// Weighted sum rate at the returned point.
    pub objective: f64,
    pub initial_objective: f64,
    /// Weighted sum rate after each outer iteration.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    /// `[s][k]` received power minus `p_thr`; negative entries violate.
    pub feasibility: Vec<Vec<f64>>,
    pub mu: f64,
    pub aux: AuxState,
    /// Interference-aware SINR, reported for diagnostics only.
    pub sinr_diagnostic: Vec<f64>,
    /// Block updates discarded because they lowered the rate.
    pub rejected_steps: usize,
}

impl AoSolution {
    pub fn iterations(&self) -> usize {
        self.objective_trace.len()
    }

    pub fn mask_index(&self) -> usize {
        self.mask_indices[0]
    }

    pub fn violations(&self) -> usize {
        self.feasibility
            .iter()
            .flatten()
            .filter(|&&m| m < 0.0)
            .count()
    }
}

fn received(
    channels: &ChannelSet,
    masks: &[ShapeMask],
    phases: &PhaseConfig,
    precoder: &Precoder,
) -> Result<Vec<Complex64>> {
    let eff = EffectiveChannels::from_channels(channels, masks, phases)?;
    if precoder.n_tr() != eff.n_tr() || precoder.num_users() != eff.len() {
        return Err(Error::dim("precoder does not match the channel set"));
    }
    Ok(eff.signals(&precoder.w))
}

/// `gamma_k = |sum_s g_{s,k}^H (A o Phi_s^H) H_s w_k|^2 / sigma^2`.
pub fn snr(
    k: usize,
    channels: &ChannelSet,
    masks: &[ShapeMask],
    phases: &PhaseConfig,
    precoder: &Precoder,
) -> Result<f64> {
    let all = snrs(channels, masks, phases, precoder)?;
    all.get(k)
        .copied()
        .ok_or_else(|| Error::dim(format!("user {k} out of range")))
}

pub fn snrs(
    channels: &ChannelSet,
    masks: &[ShapeMask],
    phases: &PhaseConfig,
    precoder: &Precoder,
) -> Result<Vec<f64>> {
    Ok(received(channels, masks, phases, precoder)?
        .iter()
        .map(|x| x.norm_sqr() / channels.noise_power)
        .collect())
}

/// SINR with the inter-user term of the received signal made explicit.
pub fn sinr_diagnostic(
    channels: &ChannelSet,
    masks: &[ShapeMask],
    phases: &PhaseConfig,
    precoder: &Precoder,
) -> Result<Vec<f64>> {
    let eff = EffectiveChannels::from_channels(channels, masks, phases)?;
    Ok((0..eff.len())
        .map(|k| {
            let b = eff.b(k);
            let mut signal = 0.0;
            let mut interference = 0.0;
            for j in 0..precoder.num_users() {
                let p = b.dotc(&precoder.w.column(j)).norm_sqr();
                if j == k {
                    signal = p;
                } else {
                    interference += p;
                }
            }
            signal / (interference + channels.noise_power)
        })
        .collect())
}

pub fn rates(gammas: &[f64]) -> Vec<f64> {
    gammas.iter().map(|g| (1.0 + g).log2()).collect()
}

/// `sum_k w_k log2(1 + gamma_k)`.
pub fn weighted_sum_rate(gammas: &[f64], weights: &[f64]) -> f64 {
    gammas
        .iter()
        .zip(weights)
        .map(|(g, w)| w * (1.0 + g).log2())
        .sum()
}

/// Optimal dual auxiliary: `chi_k = gamma_k`.
pub fn update_chi(gammas: &[f64]) -> Vec<f64> {
    gammas.to_vec()
}

/// `(1/ln 2) sum_k [w_k ln(1 + chi_k) - w_k chi_k + w_k (1 + chi_k) gamma_k / (1 + gamma_k)]`.
pub fn p2_objective(chi: &[f64], gammas: &[f64], weights: &[f64]) -> f64 {
    chi.iter()
        .zip(gammas)
        .zip(weights)
        .map(|((&c, &g), &w)| w * c.ln_1p() - w * c + w * (1.0 + c) * g / (1.0 + g))
        .sum::<f64>()
        / std::f64::consts::LN_2
}

/// Per-link margins `|g_{s,k}^H (A o Phi_s^H) H_s w_k|^2 - p_thr`, `[s][k]`.
pub fn check_min_power(
    channels: &ChannelSet,
    masks: &[ShapeMask],
    phases: &PhaseConfig,
    precoder: &Precoder,
    p_thr: f64,
) -> Result<Vec<Vec<f64>>> {
    Ok(link_amplitudes(channels, masks, phases, precoder)?
        .iter()
        .map(|row| row.iter().map(|a| a.norm_sqr() - p_thr).collect())
        .collect())
}

struct Point {
    indices: Vec<usize>,
    masks: Vec<ShapeMask>,
    phases: PhaseConfig,
    precoder: Precoder,
    gammas: Vec<f64>,
    objective: f64,
}

/// Loop bookkeeping carried into the solution.
struct Progress {
    trace: Vec<f64>,
    converged: bool,
    mu: f64,
    aux: AuxState,
    rejected: usize,
}

struct Run<'a> {
    channels: &'a ChannelSet,
    catalog: &'a ShapeCatalog,
    cfg: &'a AoConfig,
    inv_sigma: f64,
}

impl Run<'_> {
    fn evaluate(
        &self,
        indices: Vec<usize>,
        phases: PhaseConfig,
        precoder: Precoder,
    ) -> Result<Point> {
        let masks = self.catalog.assignment(&indices);
        let gammas = snrs(self.channels, &masks, &phases, &precoder)?;
        let objective = weighted_sum_rate(&gammas, &self.cfg.weights);
        Ok(Point {
            indices,
            masks,
            phases,
            precoder,
            gammas,
            objective,
        })
    }

    fn uniform(&self, i: usize) -> Vec<usize> {
        vec![i; self.channels.num_rhs()]
    }

    /// Random phases; the catalog member whose equal-power matched filter
    /// gives the highest rate.
    fn initial(&self) -> Result<Point> {
        let mut rng: ChaCha8Rng = stream(self.cfg.seed, 0x5EED_0001);
        let mut phases = PhaseConfig::random(
            self.channels.num_rhs(),
            self.channels.m_elems,
            self.cfg.eta,
            &mut rng,
        );
        if let Some(bits) = self.cfg.quantize_bits {
            phases = quantize_phases(&phases, bits)?;
        }
        let mut best: Option<Point> = None;
        for i in 0..self.catalog.len() {
            let indices = self.uniform(i);
            let masks = self.catalog.assignment(&indices);
            let eff = EffectiveChannels::from_channels(self.channels, &masks, &phases)?;
            let w = Precoder::matched_filter(&eff, self.cfg.p_max);
            let p = self.evaluate(indices, phases.clone(), w)?;
            if best.as_ref().is_none_or(|b| p.objective > b.objective) {
                best = Some(p);
            }
        }
        Ok(best.expect("catalog is non-empty"))
    }

    fn shape_step(&self, cur: &Point) -> Result<Point> {
        let indices = if self.cfg.per_rhs_masks {
            select_shape_per_rhs(self.catalog, self.channels, &cur.phases, &cur.precoder)?
        } else {
            let (i, _) = select_shape(self.catalog, self.channels, &cur.phases, &cur.precoder)?;
            self.uniform(i)
        };
        self.evaluate(indices, cur.phases.clone(), cur.precoder.clone())
    }

    fn active_step(&self, cur: &Point, chi: &[f64], aux: &mut AuxState) -> Result<(Point, f64)> {
        let eff = EffectiveChannels::from_channels(self.channels, &cur.masks, &cur.phases)?
            .scaled(self.inv_sigma);
        let signals = eff.signals(&cur.precoder.w);
        aux.tau = update_tau_aligned(chi, &signals, &self.cfg.weights);
        let (mu, w) = bisect_mu(
            &aux.tau,
            chi,
            &self.cfg.weights,
            &eff,
            self.cfg.p_max,
            self.cfg.coupling,
        )?;
        Ok((
            self.evaluate(cur.indices.clone(), cur.phases.clone(), w)?,
            mu,
        ))
    }

    fn passive_step(&self, cur: &Point, chi: &[f64], aux: &mut AuxState) -> Result<Point> {
        let v = stack_v(self.channels, &cur.masks, &cur.precoder, self.cfg.eta)?;
        let ds = d_sums(self.channels);
        let theta = cur.phases.stacked();
        aux.epsilon = update_epsilon(
            &theta,
            &v,
            &ds,
            chi,
            &self.cfg.weights,
            self.channels.noise_power,
        );
        let form = assemble_quadratic(&aux.epsilon, chi, &self.cfg.weights, &v)?;
        let floors = min_power_floors(self.channels, &v, self.cfg.p_thr);
        let out = solve_unit_modulus_qp(&form, &cur.phases, &floors, &self.cfg.qp)?;
        let phases = match self.cfg.quantize_bits {
            Some(bits) => quantize_phases(&out.phases, bits)?,
            None => out.phases,
        };
        self.evaluate(cur.indices.clone(), phases, cur.precoder.clone())
    }

    fn finish(&self, cur: Point, init: f64, log: Progress) -> Result<AoSolution> {
        let feasibility = check_min_power(
            self.channels,
            &cur.masks,
            &cur.phases,
            &cur.precoder,
            self.cfg.p_thr,
        )?;
        let sinr = sinr_diagnostic(self.channels, &cur.masks, &cur.phases, &cur.precoder)?;
        Ok(AoSolution {
            mask_indices: cur.indices,
            rates: rates(&cur.gammas),
            gammas: cur.gammas,
            objective: cur.objective,
            initial_objective: init,
            objective_trace: log.trace,
            converged: log.converged,
            feasibility,
            mu: log.mu,
            aux: log.aux,
            sinr_diagnostic: sinr,
            rejected_steps: log.rejected,
            precoder: cur.precoder,
            phases: cur.phases,
        })
    }
}

/// Runs the alternating optimization to convergence or the iteration cap.
pub fn solve(
    channels: &ChannelSet,
    catalog: &ShapeCatalog,
    config: &AoConfig,
) -> Result<AoSolution> {
    channels.validate()?;
    config.validate(channels)?;
    if catalog.grid().len() != channels.m_elems {
        return Err(Error::dim(format!(
            "catalog grid has {} elements, surfaces have {}",
            catalog.grid().len(),
            channels.m_elems
        )));
    }
    let run = Run {
        channels,
        catalog,
        cfg: config,
        inv_sigma: 1.0 / channels.noise_power.sqrt(),
    };

    let mut cur = run.initial()?;
    let initial_objective = cur.objective;
    let mut trace = Vec::new();
    let mut aux = AuxState::default();
    let mut mu = 0.0;
    let mut rejected = 0;
    let mut converged = false;

    let mut commit = |cur: &mut Point, cand: Point| -> bool {
        if cand.objective >= cur.objective {
            *cur = cand;
            true
        } else {
            rejected += 1;
            false
        }
    };

    for it in 0..config.max_outer {
        let chi = update_chi(&cur.gammas);
        aux.chi = chi.clone();
        aux.iteration = it + 1;

        if catalog.len() > 1 {
            let cand = run.shape_step(&cur)?;
            commit(&mut cur, cand);
        }
        let (cand, cand_mu) = run.active_step(&cur, &chi, &mut aux)?;
        if commit(&mut cur, cand) {
            mu = cand_mu;
        }
        let cand = run.passive_step(&cur, &chi, &mut aux)?;
        commit(&mut cur, cand);

        let prev = trace.last().copied().unwrap_or(initial_objective);
        trace.push(cur.objective);
        if (cur.objective - prev).abs() <= config.tol_outer * cur.objective.abs() {
            converged = true;
            break;
        }
    }

    if config.quantize_bits.is_some() {
        // One precoder re-optimization on the final quantized phases.
        let chi = update_chi(&cur.gammas);
        let (cand, cand_mu) = run.active_step(&cur, &chi, &mut aux)?;
        if commit(&mut cur, cand) {
            mu = cand_mu;
        }
    }

    let log = Progress {
        trace,
        converged,
        mu,
        aux,
        rejected,
    };
    run.finish(cur, initial_objective, log)
}

/// Weighted sum rate of a given operating point, with the precoder set to
/// the equal-power matched filter. Used for initialization and as an
/// independent reference in tests.
pub fn matched_filter_rate(
    channels: &ChannelSet,
    masks: &[ShapeMask],
    phases: &PhaseConfig,
    p_max: f64,
    weights: &[f64],
) -> Result<f64> {
    let eff = EffectiveChannels::from_channels(channels, masks, phases)?;
    let w = Precoder::matched_filter(&eff, p_max);
    Ok(weighted_sum_rate(
        &snrs(channels, masks, phases, &w)?,
        weights,
    ))
}
