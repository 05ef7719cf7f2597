//! AP precoder update: quadratic-transform auxiliaries `tau` and the
//! closed-form precoder with a bisected Lagrange multiplier for the total
//! power budget.
//!
//! All functions here work on whatever effective channels they are handed.
//! The alternating optimizer passes noise-normalized channels `b_k / sigma`,
//! for which `gamma_k = |b_k^H w_k|^2`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::shapes::surface_coefficients;
use crate::{CMatrix, CVector, ChannelSet, Complex64, Error, PhaseConfig, Result, ShapeMask};

/// AP beamforming matrix `W = [w_1 .. w_K]` (N_tr x K) and its power budget.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoder {
    pub w: CMatrix,
    pub p_max: f64,
}

impl Precoder {
    pub fn new(w: CMatrix, p_max: f64) -> Self {
        Self { w, p_max }
    }

    pub fn zeros(n_tr: usize, k: usize, p_max: f64) -> Self {
        Self::new(CMatrix::zeros(n_tr, k), p_max)
    }

    /// Columns `b_k / |b_k|`, each carrying `p_max / K`. Zero channels get
    /// zero columns.
    pub fn matched_filter(eff: &EffectiveChannels, p_max: f64) -> Self {
        let k = eff.len();
        let per_user = (p_max / k as f64).sqrt();
        let mut w = CMatrix::zeros(eff.n_tr(), k);
        for (j, b) in eff.b.iter().enumerate() {
            let n = b.norm();
            if n > 0.0 {
                w.set_column(j, &(b * Complex64::from(per_user / n)));
            }
        }
        Self::new(w, p_max)
    }

    pub fn num_users(&self) -> usize {
        self.w.ncols()
    }

    pub fn n_tr(&self) -> usize {
        self.w.nrows()
    }

    pub fn column(&self, k: usize) -> CVector {
        self.w.column(k).into_owned()
    }

    pub fn power(&self) -> f64 {
        transmit_power(&self.w)
    }

    /// `tr(W W^H) <= p_max (1 + rel_tol)`.
    pub fn within_budget(&self, rel_tol: f64) -> bool {
        self.power() <= self.p_max * (1.0 + rel_tol)
    }
}

/// `tr(W W^H) = sum_k |w_k|^2`.
pub fn transmit_power(w: &CMatrix) -> f64 {
    w.iter().map(|z| z.norm_sqr()).sum()
}

/// End-to-end channels `b_k` with `b_k^H = sum_s g_{s,k}^H (A o Phi_s^H) H_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannels {
    b: Vec<CVector>,
}

impl EffectiveChannels {
    pub fn new(b: Vec<CVector>) -> Result<Self> {
        let n = b
            .first()
            .map(|v| v.len())
            .ok_or_else(|| Error::dim("need at least one user"))?;
        if b.iter().any(|v| v.len() != n) {
            return Err(Error::dim("effective channels differ in length"));
        }
        Ok(Self { b })
    }

    pub fn from_channels(
        channels: &ChannelSet,
        masks: &[ShapeMask],
        phases: &PhaseConfig,
    ) -> Result<Self> {
        let coeffs = surface_coefficients(masks, phases)?;
        Self::from_coefficients(channels, &coeffs)
    }

    /// `b_k = sum_s H_s^H (conj(c_s) o g_{s,k})` for per-surface coefficients
    /// `c_s` (the diagonal of `A o Phi_s^H`).
    pub fn from_coefficients(channels: &ChannelSet, coeffs: &[CVector]) -> Result<Self> {
        if coeffs.len() != channels.num_rhs() || coeffs.iter().any(|c| c.len() != channels.m_elems)
        {
            return Err(Error::dim(
                "surface coefficients do not match the channel set",
            ));
        }
        let b = (0..channels.num_users())
            .map(|k| {
                let mut acc = CVector::zeros(channels.n_tr);
                for (s, h) in channels.h_ap_rhs.iter().enumerate() {
                    let t = coeffs[s].zip_map(&channels.g_rhs_ue[s][k], |c, g| c.conj() * g);
                    acc += h.ad_mul(&t);
                }
                acc
            })
            .collect();
        Ok(Self { b })
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    pub fn n_tr(&self) -> usize {
        self.b[0].len()
    }

    pub fn b(&self, k: usize) -> &CVector {
        &self.b[k]
    }

    pub fn iter(&self) -> impl Iterator<Item = &CVector> {
        self.b.iter()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            b: self.b.iter().map(|v| v * Complex64::from(c)).collect(),
        }
    }

    /// Left-multiplies every channel by `q`.
    pub fn rotated(&self, q: &CMatrix) -> Self {
        Self {
            b: self.b.iter().map(|v| q * v).collect(),
        }
    }

    /// K x N_tr matrix whose rows are `b_k^H`.
    pub fn stacked(&self) -> CMatrix {
        CMatrix::from_fn(self.len(), self.n_tr(), |k, n| self.b[k][n].conj())
    }

    /// `b_k^H w_k` for every user.
    pub fn signals(&self, w: &CMatrix) -> Vec<Complex64> {
        self.b
            .iter()
            .enumerate()
            .map(|(k, b)| b.dotc(&w.column(k)))
            .collect()
    }
}

/// How the precoder closed form couples users.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// `(mu I + |tau_k|^2 b_k b_k^H)^{-1} b_k`: the exact maximizer of the
    /// quadratic-transform objective with per-user SNR denominators.
    #[default]
    PerUser,
    /// `(mu I + sum_j |tau_j|^2 b_j b_j^H)^{-1} b_k`, the interference-aware
    /// form. Not an exact ascent step for the SNR objective.
    AllUsers,
}

fn sqrt_weight(weight: f64, chi: f64) -> f64 {
    (weight * (1.0 + chi)).sqrt()
}

/// `tau_k = sqrt(w_k (1 + chi_k)) sqrt(gamma_k) / (1 + gamma_k)`.
pub fn update_tau(chi: &[f64], gamma: &[f64], weights: &[f64]) -> Vec<Complex64> {
    assert_eq!(chi.len(), gamma.len());
    assert_eq!(chi.len(), weights.len());
    chi.iter()
        .zip(gamma)
        .zip(weights)
        .map(|((&c, &g), &w)| Complex64::from(sqrt_weight(w, c) * g.sqrt() / (1.0 + g)))
        .collect()
}

/// Complex form `tau_k = sqrt(w_k (1 + chi_k)) x_k / (1 + |x_k|^2)` for
/// normalized received amplitudes `x_k = b_k^H w_k`. Agrees with
/// [`update_tau`] when `x_k` is real and non-negative.
pub fn update_tau_aligned(chi: &[f64], signals: &[Complex64], weights: &[f64]) -> Vec<Complex64> {
    assert_eq!(chi.len(), signals.len());
    assert_eq!(chi.len(), weights.len());
    chi.iter()
        .zip(signals)
        .zip(weights)
        .map(|((&c, x), &w)| x * (sqrt_weight(w, c) / (1.0 + x.norm_sqr())))
        .collect()
}

/// Ratio objective `sum_k w_k (1 + chi_k) gamma_k / (1 + gamma_k)`.
pub fn p3_objective(chi: &[f64], gamma: &[f64], weights: &[f64]) -> f64 {
    chi.iter()
        .zip(gamma)
        .zip(weights)
        .map(|((&c, &g), &w)| w * (1.0 + c) * g / (1.0 + g))
        .sum()
}

/// Quadratic-transform objective
/// `sum_k 2 sqrt(w_k (1 + chi_k)) Re{tau_k^* x_k} - |tau_k|^2 (1 + |x_k|^2)`
/// with `x_k = b_k^H w_k` over normalized channels.
pub fn p4_objective(
    tau: &[Complex64],
    chi: &[f64],
    weights: &[f64],
    eff: &EffectiveChannels,
    w: &CMatrix,
) -> f64 {
    eff.signals(w)
        .iter()
        .enumerate()
        .map(|(k, x)| {
            2.0 * sqrt_weight(weights[k], chi[k]) * (tau[k].conj() * x).re
                - tau[k].norm_sqr() * (1.0 + x.norm_sqr())
        })
        .sum()
}

/// Same objective evaluated on a real `sqrt(gamma_k)` (phase-aligned form).
pub fn p4_objective_real(tau: &[Complex64], chi: &[f64], gamma: &[f64], weights: &[f64]) -> f64 {
    (0..tau.len())
        .map(|k| {
            2.0 * sqrt_weight(weights[k], chi[k]) * (tau[k].conj() * gamma[k].sqrt()).re
                - tau[k].norm_sqr() * (1.0 + gamma[k])
        })
        .sum()
}

fn check_lengths(
    tau: &[Complex64],
    chi: &[f64],
    weights: &[f64],
    eff: &EffectiveChannels,
) -> Result<()> {
    let k = eff.len();
    if tau.len() != k || chi.len() != k || weights.len() != k {
        return Err(Error::dim(format!(
            "tau/chi/weights lengths {}/{}/{} for {k} users",
            tau.len(),
            chi.len(),
            weights.len()
        )));
    }
    Ok(())
}

/// Closed-form precoder for a fixed multiplier `mu`:
/// `w_k = sqrt(w_k (1 + chi_k)) tau_k (mu I + R)^{-1} b_k`.
///
/// Users with `tau_k = 0` get a zero column. With [`Coupling::AllUsers`] and
/// no more active users than antennas, the N_tr x N_tr system is reduced to
/// a K x K one through `(mu I + B^H D B)^{-1} B^H = B^H (mu I + D B B^H)^{-1}`.
pub fn update_precoder(
    tau: &[Complex64],
    chi: &[f64],
    weights: &[f64],
    eff: &EffectiveChannels,
    mu: f64,
    coupling: Coupling,
) -> Result<CMatrix> {
    check_lengths(tau, chi, weights, eff)?;
    if !(mu >= 0.0) {
        return Err(Error::domain(format!("multiplier must be >= 0, got {mu}")));
    }
    let n = eff.n_tr();
    let mut w = CMatrix::zeros(n, eff.len());
    let active: Vec<usize> = (0..eff.len())
        .filter(|&k| tau[k].norm_sqr() > 0.0)
        .collect();
    if active.is_empty() {
        return Ok(w);
    }
    let coef = |k: usize| tau[k] * sqrt_weight(weights[k], chi[k]);

    match coupling {
        Coupling::PerUser => {
            for &k in &active {
                let b = eff.b(k);
                let denom = mu + tau[k].norm_sqr() * b.norm_squared();
                if denom <= 0.0 {
                    return Err(Error::Singular(format!(
                        "user {k} has a zero effective channel at mu = 0"
                    )));
                }
                w.set_column(k, &(b * (coef(k) / denom)));
            }
        }
        Coupling::AllUsers if active.len() <= n => {
            let a = active.len();
            // (mu I + D G) X = diag(coef), G_ij = b_i^H b_j, D = diag(|tau|^2).
            let sys = DMatrix::from_fn(a, a, |i, j| {
                let (ki, kj) = (active[i], active[j]);
                let g = eff.b(ki).dotc(eff.b(kj));
                let d = tau[ki].norm_sqr() * g;
                if i == j {
                    d + mu
                } else {
                    d
                }
            });
            let rhs = DMatrix::from_fn(a, a, |i, j| {
                if i == j {
                    coef(active[i])
                } else {
                    Complex64::from(0.0)
                }
            });
            let x = sys
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Singular("reduced precoder system at this mu".into()))?;
            for (j, &k) in active.iter().enumerate() {
                let mut col = CVector::zeros(n);
                for (i, &ki) in active.iter().enumerate() {
                    col += eff.b(ki) * x[(i, j)];
                }
                w.set_column(k, &col);
            }
        }
        Coupling::AllUsers => {
            let mut r = CMatrix::identity(n, n) * Complex64::from(mu);
            for &k in &active {
                let b = eff.b(k);
                r += b * b.adjoint() * Complex64::from(tau[k].norm_sqr());
            }
            let lu = r.lu();
            for &k in &active {
                let col = lu
                    .solve(eff.b(k))
                    .ok_or_else(|| Error::Singular("precoder system at this mu".into()))?;
                w.set_column(k, &(col * coef(k)));
            }
        }
    }
    Ok(w)
}

const BISECT_MAX_ITERS: usize = 200;
const BISECT_REL_TOL: f64 = 1e-6;

/// Finds the smallest `mu >= 0` whose precoder meets `tr(W W^H) <= p_max`.
///
/// Power is non-increasing in `mu`. When the budget binds, the returned
/// precoder lies on the feasible side with `(p_max - P) / p_max <= 1e-6`.
pub fn bisect_mu(
    tau: &[Complex64],
    chi: &[f64],
    weights: &[f64],
    eff: &EffectiveChannels,
    p_max: f64,
    coupling: Coupling,
) -> Result<(f64, Precoder)> {
    if !(p_max > 0.0) {
        return Err(Error::domain(format!(
            "p_max must be positive, got {p_max}"
        )));
    }
    check_lengths(tau, chi, weights, eff)?;
    if tau.iter().all(|t| t.norm_sqr() == 0.0) {
        return Ok((0.0, Precoder::zeros(eff.n_tr(), eff.len(), p_max)));
    }
    let solve = |mu: f64| update_precoder(tau, chi, weights, eff, mu, coupling);

    match solve(0.0) {
        Ok(w) if transmit_power(&w) <= p_max => return Ok((0.0, Precoder::new(w, p_max))),
        Ok(_) | Err(Error::Singular(_)) => {}
        Err(e) => return Err(e),
    }

    // Feasible upper end: power(hi) <= p_max < power(lo).
    let power = |mu: f64| solve(mu).map(|w| transmit_power(&w));
    let mut hi = 1.0;
    let mut lo;
    if power(hi)? > p_max {
        loop {
            lo = hi;
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(Error::Singular(
                    "no multiplier meets the power budget".into(),
                ));
            }
            if power(hi)? <= p_max {
                break;
            }
        }
    } else {
        loop {
            lo = hi * 0.5;
            if lo < f64::MIN_POSITIVE {
                // Power stays under budget as mu -> 0+: the limit is the answer.
                return Ok((0.0, Precoder::new(solve(hi)?, p_max)));
            }
            match power(lo) {
                Ok(p) if p <= p_max => hi = lo,
                Ok(_) | Err(Error::Singular(_)) => break,
                Err(e) => return Err(e),
            }
        }
    }

    let mut w_hi = solve(hi)?;
    for _ in 0..BISECT_MAX_ITERS {
        let slack = (p_max - transmit_power(&w_hi)) / p_max;
        if slack <= 0.1 * BISECT_REL_TOL || hi - lo <= 1e-15 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let w_mid = solve(mid)?;
        if transmit_power(&w_mid) > p_max {
            lo = mid;
        } else {
            hi = mid;
            w_hi = w_mid;
        }
    }
    Ok((hi, Precoder::new(w_hi, p_max)))
}
