//! Comparison schemes: alternating optimization on a fixed shape, the same
//! with `b`-bit quantized phases, and zero-forcing precoding over random
//! phases.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use crate::ao::{
    check_min_power, rates, sinr_diagnostic, snrs, solve, weighted_sum_rate, AuxState,
};
use crate::rng::stream;
use crate::{
    AoConfig, AoSolution, CMatrix, ChannelSet, Complex64, EffectiveChannels, Error, PhaseConfig,
    Precoder, Result, ShapeCatalog,
};

/// A scheme selectable from the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    /// Full optimization with shape adaptation over the whole catalog.
    Adaptive,
    FixedShape {
        mask_index: usize,
    },
    Quantized {
        bits: u32,
        mask_index: usize,
    },
    ZfRandom {
        mask_index: usize,
    },
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let suffix = |i: usize| {
            if i == 0 {
                String::new()
            } else {
                format!("@{i}")
            }
        };
        match *self {
            BaselineKind::Adaptive => write!(f, "adaptive"),
            BaselineKind::FixedShape { mask_index } => write!(f, "fixed{}", suffix(mask_index)),
            BaselineKind::Quantized { bits, mask_index } => {
                write!(f, "quantized-{bits}bit{}", suffix(mask_index))
            }
            BaselineKind::ZfRandom { mask_index } => write!(f, "zf_random{}", suffix(mask_index)),
        }
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    /// `adaptive`, `fixed[@i]`, `quantized-<b>bit[@i]`, `zf_random[@i]`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::domain(format!("unknown scheme '{s}'"));
        let (name, idx) = match s.split_once('@') {
            Some((n, i)) => (n, i.parse::<usize>().map_err(|_| bad())?),
            None => (s, 0),
        };
        match name {
            "adaptive" if !s.contains('@') => Ok(BaselineKind::Adaptive),
            "fixed" => Ok(BaselineKind::FixedShape { mask_index: idx }),
            "zf_random" => Ok(BaselineKind::ZfRandom { mask_index: idx }),
            _ => {
                let bits = name
                    .strip_prefix("quantized-")
                    .and_then(|r| r.strip_suffix("bit"))
                    .and_then(|b| b.parse::<u32>().ok())
                    .filter(|&b| (1..=30).contains(&b))
                    .ok_or_else(bad)?;
                Ok(BaselineKind::Quantized {
                    bits,
                    mask_index: idx,
                })
            }
        }
    }
}

impl BaselineKind {
    pub fn mask_index(&self) -> Option<usize> {
        match *self {
            BaselineKind::Adaptive => None,
            BaselineKind::FixedShape { mask_index }
            | BaselineKind::Quantized { mask_index, .. }
            | BaselineKind::ZfRandom { mask_index } => Some(mask_index),
        }
    }
}

/// Grid index of the nearest point of `{2 pi t / 2^bits}`; ties go to the
/// smaller angle.
fn grid_index(phase: f64, bits: u32) -> u64 {
    let levels = 1u64 << bits;
    let t = phase.rem_euclid(TAU) / (TAU / levels as f64);
    let lo = t.floor();
    let idx = if t - lo > 0.5 {
        lo as u64 + 1
    } else {
        lo as u64
    };
    idx % levels
}

/// Nearest grid angle in `[0, 2 pi)`.
pub fn quantize_angle(phase: f64, bits: u32) -> f64 {
    grid_index(phase, bits) as f64 * TAU / (1u64 << bits) as f64
}

pub fn quantize_phases(phases: &PhaseConfig, bits: u32) -> Result<PhaseConfig> {
    if bits == 0 || bits > 30 {
        return Err(Error::domain(format!("bits must be in 1..=30, got {bits}")));
    }
    let theta = phases
        .theta
        .iter()
        .map(|t| t.map(|z| Complex64::from_polar(1.0, quantize_angle(z.arg(), bits))))
        .collect();
    Ok(PhaseConfig {
        theta,
        eta: phases.eta,
    })
}

/// Zero-forcing precoder `W = B^H (B B^H)^{-1}` with unit-norm columns and
/// equal power `p_max / K` per user.
pub fn zf_precoder(eff: &EffectiveChannels, p_max: f64) -> Result<Precoder> {
    let (k, n) = (eff.len(), eff.n_tr());
    if k > n {
        return Err(Error::Singular(format!(
            "zero forcing needs K <= N_tr, got K={k} N_tr={n}"
        )));
    }
    if !(p_max > 0.0) {
        return Err(Error::domain("p_max must be positive"));
    }
    // Row scaling leaves the ZF directions unchanged and keeps the Gram
    // matrix well scaled.
    let norms: Vec<f64> = eff.iter().map(|b| b.norm()).collect();
    if norms.contains(&0.0) {
        return Err(Error::Singular("zero effective channel".into()));
    }
    let b = CMatrix::from_fn(k, n, |i, j| eff.b(i)[j].conj() / norms[i]);
    let sv = b.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if smin <= 1e-10 * smax {
        return Err(Error::Singular(format!(
            "stacked effective channels are rank deficient (sigma_min/sigma_max = {:e})",
            smin / smax
        )));
    }
    let gram = &b * b.adjoint();
    let inv = gram
        .try_inverse()
        .ok_or_else(|| Error::Singular("Gram matrix not invertible".into()))?;
    let mut w = b.adjoint() * inv;
    let per_user = (p_max / k as f64).sqrt();
    for mut col in w.column_iter_mut() {
        let nrm = col.norm();
        col *= Complex64::from(per_user / nrm);
    }
    Ok(Precoder::new(w, p_max))
}

/// Runs one comparison scheme on a channel realization.
pub fn run_baseline(
    kind: BaselineKind,
    channels: &ChannelSet,
    catalog: &ShapeCatalog,
    config: &AoConfig,
) -> Result<AoSolution> {
    match kind {
        BaselineKind::Adaptive => solve(channels, catalog, config),
        BaselineKind::FixedShape { mask_index } => {
            solve(channels, &catalog.single(mask_index)?, config)
        }
        BaselineKind::Quantized { bits, mask_index } => {
            let cfg = AoConfig {
                quantize_bits: Some(bits),
                ..config.clone()
            };
            solve(channels, &catalog.single(mask_index)?, &cfg)
        }
        BaselineKind::ZfRandom { mask_index } => zf_random(channels, catalog, config, mask_index),
    }
}

fn zf_random(
    channels: &ChannelSet,
    catalog: &ShapeCatalog,
    config: &AoConfig,
    mask_index: usize,
) -> Result<AoSolution> {
    channels.validate()?;
    let mask = catalog
        .get(mask_index)
        .ok_or_else(|| Error::domain(format!("mask index {mask_index} out of range")))?;
    if mask.len() != channels.m_elems {
        return Err(Error::dim("catalog grid does not match the surfaces"));
    }
    if config.weights.len() != channels.num_users() {
        return Err(Error::dim("one weight per user required"));
    }
    // Same stream as the optimizer's initial phases.
    let mut rng = stream(config.seed, 0x5EED_0001);
    let phases = PhaseConfig::random(channels.num_rhs(), channels.m_elems, config.eta, &mut rng);
    let masks = vec![mask.clone(); channels.num_rhs()];
    let eff = EffectiveChannels::from_channels(channels, &masks, &phases)?;
    let precoder = zf_precoder(&eff, config.p_max)?;
    let gammas = snrs(channels, &masks, &phases, &precoder)?;
    let objective = weighted_sum_rate(&gammas, &config.weights);
    Ok(AoSolution {
        mask_indices: vec![mask_index; channels.num_rhs()],
        feasibility: check_min_power(channels, &masks, &phases, &precoder, config.p_thr)?,
        sinr_diagnostic: sinr_diagnostic(channels, &masks, &phases, &precoder)?,
        rates: rates(&gammas),
        gammas,
        objective,
        initial_objective: objective,
        objective_trace: Vec::new(),
        converged: true,
        mu: 0.0,
        aux: AuxState::default(),
        rejected_steps: 0,
        precoder,
        phases,
    })
}
