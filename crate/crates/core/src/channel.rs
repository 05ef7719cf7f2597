//! Network geometry, log-distance path loss with log-normal shadowing, and
//! i.i.d. Rayleigh channel draws.
//!
//! The direct AP to UE link is blocked; every user is reached only through
//! the surfaces, so a realization consists of the AP to surface matrices
//! `H_s` (M x N_tr), the surface to user vectors `g_{s,k}` (length M) and the
//! distance factors `d_{s,k}` used by the passive-beamforming surrogate.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{CMatrix, CVector, Complex64, Error, Result};

pub type Point = [f64; 2];

/// Problem dimensions: surfaces, users, elements per surface, AP antennas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub s: usize,
    pub k: usize,
    pub m: usize,
    pub n_tr: usize,
}

impl Dims {
    pub fn new(s: usize, k: usize, m: usize, n_tr: usize) -> Result<Self> {
        if s == 0 || k == 0 || m == 0 || n_tr == 0 {
            return Err(Error::domain(format!(
                "all dimensions must be positive, got S={s} K={k} M={m} N_tr={n_tr}"
            )));
        }
        Ok(Self { s, k, m, n_tr })
    }
}

/// Disk in which users are dropped uniformly at random.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UeRegion {
    pub center: Point,
    pub radius: f64,
}

impl UeRegion {
    pub fn contains(&self, p: Point) -> bool {
        distance(self.center, p) <= self.radius * (1.0 + 1e-12)
    }

    /// Uniform draw over the disk area.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let r = self.radius * rng.random::<f64>().sqrt();
        let phi = std::f64::consts::TAU * rng.random::<f64>();
        [
            self.center[0] + r * phi.cos(),
            self.center[1] + r * phi.sin(),
        ]
    }
}

impl Default for UeRegion {
    fn default() -> Self {
        Self {
            center: [40.0, 0.0],
            radius: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkLayout {
    pub ap_position: Point,
    pub rhs_positions: Vec<Point>,
    pub ue_positions: Vec<Point>,
    pub ue_region: UeRegion,
    /// Exponent used by the distance factors `d_{s,k}`.
    pub path_loss_exponent: f64,
}

impl NetworkLayout {
    pub fn new(
        ap_position: Point,
        rhs_positions: Vec<Point>,
        ue_positions: Vec<Point>,
        ue_region: UeRegion,
        path_loss_exponent: f64,
    ) -> Result<Self> {
        let layout = Self {
            ap_position,
            rhs_positions,
            ue_positions,
            ue_region,
            path_loss_exponent,
        };
        layout.validate()?;
        Ok(layout)
    }

    /// Layout with `k` users dropped uniformly inside `ue_region`.
    pub fn with_random_users<R: Rng + ?Sized>(
        ap_position: Point,
        rhs_positions: Vec<Point>,
        ue_region: UeRegion,
        path_loss_exponent: f64,
        k: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let ue_positions = (0..k).map(|_| ue_region.sample(rng)).collect();
        Self::new(
            ap_position,
            rhs_positions,
            ue_positions,
            ue_region,
            path_loss_exponent,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.rhs_positions.is_empty() || self.ue_positions.is_empty() {
            return Err(Error::domain("layout needs at least one RHS and one UE"));
        }
        if !(self.ue_region.radius > 0.0 && self.ue_region.radius.is_finite()) {
            return Err(Error::domain("UE region radius must be positive"));
        }
        if !self.path_loss_exponent.is_finite() {
            return Err(Error::domain("path-loss exponent must be finite"));
        }
        let all = std::iter::once(&self.ap_position)
            .chain(&self.rhs_positions)
            .chain(&self.ue_positions)
            .chain(std::iter::once(&self.ue_region.center));
        for p in all {
            if !(p[0].is_finite() && p[1].is_finite()) {
                return Err(Error::domain(format!("non-finite position {p:?}")));
            }
        }
        Ok(())
    }
}

/// `count` surface positions evenly spaced on the circle of radius 20 m
/// centred at (20 m, 0 m). The circle passes through the AP at angle pi;
/// starting at `pi / (2 count)` keeps every position off it.
pub fn default_rhs_positions(count: usize) -> Vec<Point> {
    let (cx, cy, r) = (20.0, 0.0, 20.0);
    (0..count)
        .map(|i| {
            let a = std::f64::consts::PI * (0.5 + 2.0 * i as f64) / count as f64;
            [cx + r * a.cos(), cy + r * a.sin()]
        })
        .collect()
}

/// Log-distance path loss `rho_a + 10 rho_b log10(r) + delta` with
/// `delta ~ N(0, sigma_delta^2)` (all in dB).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossModel {
    pub rho_a: f64,
    pub rho_b: f64,
    pub sigma_delta: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        Self {
            rho_a: 61.4,
            rho_b: 2.0,
            sigma_delta: 5.8,
        }
    }
}

impl PathLossModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_delta >= 0.0) || !self.rho_a.is_finite() || !self.rho_b.is_finite() {
            return Err(Error::domain(
                "path-loss parameters must be finite with sigma_delta >= 0",
            ));
        }
        Ok(())
    }

    /// One shadowing draw in dB.
    pub fn shadowing<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.sigma_delta == 0.0 {
            return 0.0;
        }
        Normal::new(0.0, self.sigma_delta)
            .expect("validated sigma")
            .sample(rng)
    }
}

/// One realization of every channel in the network.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// `h_ap_rhs[s]` is the M x N_tr channel from the AP to surface `s`.
    pub h_ap_rhs: Vec<CMatrix>,
    /// `g_rhs_ue[s][k]` is the length-M channel from surface `s` to user `k`.
    pub g_rhs_ue: Vec<Vec<CVector>>,
    /// `d_factors[s][k] = sqrt(|a - q_s|^kappa |q_s - u_k|^kappa)`.
    pub d_factors: Vec<Vec<f64>>,
    /// Linear noise power (W).
    pub noise_power: f64,
    pub n_tr: usize,
    pub m_elems: usize,
}

impl ChannelSet {
    pub fn num_rhs(&self) -> usize {
        self.h_ap_rhs.len()
    }

    pub fn num_users(&self) -> usize {
        self.g_rhs_ue.first().map_or(0, Vec::len)
    }

    pub fn dims(&self) -> Dims {
        Dims {
            s: self.num_rhs(),
            k: self.num_users(),
            m: self.m_elems,
            n_tr: self.n_tr,
        }
    }

    /// Checks that every matrix and vector agrees with the stored dimensions.
    pub fn validate(&self) -> Result<()> {
        let (s, m, n) = (self.num_rhs(), self.m_elems, self.n_tr);
        if s == 0 || self.num_users() == 0 {
            return Err(Error::dim("channel set is empty"));
        }
        if self.g_rhs_ue.len() != s || self.d_factors.len() != s {
            return Err(Error::dim("per-RHS lists disagree in length"));
        }
        let k = self.num_users();
        for si in 0..s {
            if self.h_ap_rhs[si].shape() != (m, n) {
                return Err(Error::dim(format!(
                    "H[{si}] is {:?}, expected ({m}, {n})",
                    self.h_ap_rhs[si].shape()
                )));
            }
            if self.g_rhs_ue[si].len() != k || self.d_factors[si].len() != k {
                return Err(Error::dim(format!("RHS {si} has inconsistent user count")));
            }
            if self.g_rhs_ue[si].iter().any(|g| g.len() != m) {
                return Err(Error::dim(format!("g[{si}][*] length differs from M={m}")));
            }
            if self.d_factors[si].iter().any(|&d| !(d > 0.0)) {
                return Err(Error::domain("distance factors must be positive"));
            }
        }
        if !(self.noise_power > 0.0) {
            return Err(Error::domain("noise power must be positive"));
        }
        Ok(())
    }
}

pub fn dbm_to_watts(p_dbm: f64) -> f64 {
    10f64.powf((p_dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(p_w: f64) -> f64 {
    10.0 * p_w.log10() + 30.0
}

/// Path loss in dB at distance `r` meters for a given shadowing draw.
pub fn path_loss_db(r: f64, model: &PathLossModel, shadowing_db: f64) -> Result<f64> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::domain(format!("distance must be positive, got {r}")));
    }
    Ok(model.rho_a + 10.0 * model.rho_b * r.log10() + shadowing_db)
}

/// `rows x cols` matrix with i.i.d. `CN(0, 10^{-pl_db/10})` entries.
pub fn draw_channel_matrix<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    pl_db: f64,
    rng: &mut R,
) -> CMatrix {
    let std = (0.5 * 10f64.powf(-0.1 * pl_db)).sqrt();
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(std * re, std * im)
    })
}

pub fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// `sqrt(r1^kappa * r2^kappa)`.
pub fn distance_factor(r_ap_rhs: f64, r_rhs_ue: f64, kappa: f64) -> f64 {
    (r_ap_rhs.powf(kappa) * r_rhs_ue.powf(kappa)).sqrt()
}

/// Draws one network realization. Shadowing is drawn once per link.
///
/// Draw order is fixed (all `H_s` first, then `g_{s,k}` row by row), so a
/// seeded generator reproduces the set bit for bit.
pub fn build_network<R: Rng + ?Sized>(
    layout: &NetworkLayout,
    model: &PathLossModel,
    dims: Dims,
    noise_dbm: f64,
    rng: &mut R,
) -> Result<ChannelSet> {
    layout.validate()?;
    model.validate()?;
    if layout.rhs_positions.len() != dims.s || layout.ue_positions.len() != dims.k {
        return Err(Error::dim(format!(
            "layout has {} RHS / {} UE but dims ask for S={} K={}",
            layout.rhs_positions.len(),
            layout.ue_positions.len(),
            dims.s,
            dims.k
        )));
    }
    if dims.m == 0 || dims.n_tr == 0 {
        return Err(Error::domain("M and N_tr must be positive"));
    }
    if !noise_dbm.is_finite() {
        return Err(Error::domain("noise power must be finite"));
    }

    let ap = layout.ap_position;
    let kappa = layout.path_loss_exponent;

    let mut h_ap_rhs = Vec::with_capacity(dims.s);
    for (s, &q) in layout.rhs_positions.iter().enumerate() {
        let r = distance(ap, q);
        if r == 0.0 {
            return Err(Error::domain(format!("RHS {s} coincides with the AP")));
        }
        let pl = path_loss_db(r, model, model.shadowing(rng))?;
        h_ap_rhs.push(draw_channel_matrix(dims.m, dims.n_tr, pl, rng));
    }

    let mut g_rhs_ue = Vec::with_capacity(dims.s);
    let mut d_factors = Vec::with_capacity(dims.s);
    for (s, &q) in layout.rhs_positions.iter().enumerate() {
        let r_ap = distance(ap, q);
        let mut g_row = Vec::with_capacity(dims.k);
        let mut d_row = Vec::with_capacity(dims.k);
        for (k, &u) in layout.ue_positions.iter().enumerate() {
            let r = distance(q, u);
            if r == 0.0 {
                return Err(Error::domain(format!("RHS {s} coincides with UE {k}")));
            }
            let pl = path_loss_db(r, model, model.shadowing(rng))?;
            let g = draw_channel_matrix(dims.m, 1, pl, rng);
            g_row.push(g.column(0).into_owned());
            d_row.push(distance_factor(r_ap, r, kappa));
        }
        g_rhs_ue.push(g_row);
        d_factors.push(d_row);
    }

    Ok(ChannelSet {
        h_ap_rhs,
        g_rhs_ue,
        d_factors,
        noise_power: dbm_to_watts(noise_dbm),
        n_tr: dims.n_tr,
        m_elems: dims.m,
    })
}
