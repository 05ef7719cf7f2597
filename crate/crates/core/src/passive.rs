//! Surface phase optimization.
//!
//! With the mask and precoder fixed the received amplitude of user `k` is
//! linear in the stacked phase vector, `x_k = vec(Theta)^H vec(V_k)`. The
//! ratio objective over these amplitudes is handled with a quadratic
//! transform (auxiliaries `epsilon`), leaving a concave quadratic
//!
//! ```text
//! f(theta) = -theta^H Upsilon theta + 2 Re{theta^H z}
//! ```
//!
//! to maximize over the unit-modulus torus. The solver works directly on
//! the phase vector: projected gradient ascent with element-wise
//! renormalization, backtracking, and a ramped penalty for the per-link
//! minimum-power floors. Rank-one and PSD structure of `theta theta^H` hold
//! by construction.

use rand::Rng;

use crate::{CMatrix, CVector, ChannelSet, Complex64, Error, Precoder, Result, ShapeMask};

/// Unit-modulus phase vectors, one per surface, and the reflection
/// coefficient `eta`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseConfig {
    pub theta: Vec<CVector>,
    pub eta: f64,
}

/// Largest tolerated `||theta_m| - 1|`.
pub const UNIT_MODULUS_TOL: f64 = 1e-12;

impl PhaseConfig {
    pub fn new(theta: Vec<CVector>, eta: f64) -> Result<Self> {
        let cfg = Self { theta, eta };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_angles(angles: &[Vec<f64>], eta: f64) -> Result<Self> {
        Self::new(
            angles
                .iter()
                .map(|a| {
                    CVector::from_iterator(
                        a.len(),
                        a.iter().map(|&p| Complex64::from_polar(1.0, p)),
                    )
                })
                .collect(),
            eta,
        )
    }

    /// i.i.d. phases uniform on `[0, 2 pi)`.
    pub fn random<R: Rng + ?Sized>(s: usize, m: usize, eta: f64, rng: &mut R) -> Self {
        let theta = (0..s)
            .map(|_| {
                CVector::from_fn(m, |_, _| {
                    Complex64::from_polar(1.0, std::f64::consts::TAU * rng.random::<f64>())
                })
            })
            .collect();
        Self { theta, eta }
    }

    pub fn ones(s: usize, m: usize, eta: f64) -> Self {
        Self {
            theta: vec![CVector::from_element(m, Complex64::new(1.0, 0.0)); s],
            eta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::domain(format!(
                "eta must lie in (0, 1], got {}",
                self.eta
            )));
        }
        let m = self.theta.first().map_or(0, |t| t.len());
        if self.theta.is_empty() || m == 0 || self.theta.iter().any(|t| t.len() != m) {
            return Err(Error::dim(
                "phase vectors must be non-empty and equally long",
            ));
        }
        let err = self.max_modulus_error();
        if !(err <= UNIT_MODULUS_TOL) {
            return Err(Error::domain(format!(
                "phases deviate from unit modulus by {err:e}"
            )));
        }
        Ok(())
    }

    pub fn num_rhs(&self) -> usize {
        self.theta.len()
    }

    pub fn m(&self) -> usize {
        self.theta.first().map_or(0, |t| t.len())
    }

    pub fn max_modulus_error(&self) -> f64 {
        self.theta
            .iter()
            .flat_map(|t| t.iter())
            .map(|z| (z.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `vec([Theta_1 | ... | Theta_S])`.
    pub fn stacked(&self) -> CVector {
        let m = self.m();
        CVector::from_fn(self.num_rhs() * m, |i, _| self.theta[i / m][i % m])
    }

    pub fn from_stacked(v: &CVector, s: usize, eta: f64) -> Result<Self> {
        if s == 0 || !v.len().is_multiple_of(s) {
            return Err(Error::dim(format!(
                "cannot split {} entries over {s} surfaces",
                v.len()
            )));
        }
        let m = v.len() / s;
        Self::new((0..s).map(|i| v.rows(i * m, m).into_owned()).collect(), eta)
    }

    /// Phase angles in `[0, 2 pi)`.
    pub fn angles(&self) -> Vec<Vec<f64>> {
        self.theta
            .iter()
            .map(|t| {
                t.iter()
                    .map(|z| z.arg().rem_euclid(std::f64::consts::TAU))
                    .collect()
            })
            .collect()
    }
}

/// `v_{s,k} = sqrt(eta) diag(g_{s,k}^H) H_s w_k` restricted to the active
/// elements of `mask`.
pub fn build_v(
    channels: &ChannelSet,
    mask: &ShapeMask,
    precoder: &Precoder,
    eta: f64,
    s: usize,
    k: usize,
) -> Result<CVector> {
    if s >= channels.num_rhs() || k >= channels.num_users() || k >= precoder.num_users() {
        return Err(Error::dim(format!("link ({s}, {k}) out of range")));
    }
    if mask.len() != channels.m_elems || precoder.n_tr() != channels.n_tr {
        return Err(Error::dim(
            "mask or precoder does not match the channel set",
        ));
    }
    let hw = &channels.h_ap_rhs[s] * precoder.w.column(k);
    Ok(v_from_parts(&channels.g_rhs_ue[s][k], &hw, mask, eta))
}

fn v_from_parts(g: &CVector, hw: &CVector, mask: &ShapeMask, eta: f64) -> CVector {
    let amp = eta.sqrt();
    CVector::from_fn(g.len(), |m, _| {
        if mask.is_active(m) {
            g[m].conj() * hw[m] * amp
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Stacked `vec(V_k) = [v_{1,k}; ...; v_{S,k}]` for every user, one mask per
/// surface.
pub fn stack_v(
    channels: &ChannelSet,
    masks: &[ShapeMask],
    precoder: &Precoder,
    eta: f64,
) -> Result<Vec<CVector>> {
    let (s_count, m) = (channels.num_rhs(), channels.m_elems);
    if masks.len() != s_count || masks.iter().any(|mk| mk.len() != m) {
        return Err(Error::dim("one mask of M elements per surface required"));
    }
    if precoder.n_tr() != channels.n_tr || precoder.num_users() != channels.num_users() {
        return Err(Error::dim("precoder does not match the channel set"));
    }
    let hw: Vec<CMatrix> = channels.h_ap_rhs.iter().map(|h| h * &precoder.w).collect();
    Ok((0..channels.num_users())
        .map(|k| {
            let mut out = CVector::zeros(s_count * m);
            for s in 0..s_count {
                let v = v_from_parts(
                    &channels.g_rhs_ue[s][k],
                    &hw[s].column(k).into_owned(),
                    &masks[s],
                    eta,
                );
                out.rows_mut(s * m, m).copy_from(&v);
            }
            out
        })
        .collect())
}

/// `sum_s d_{s,k}` for every user.
pub fn d_sums(channels: &ChannelSet) -> Vec<f64> {
    (0..channels.num_users())
        .map(|k| channels.d_factors.iter().map(|row| row[k]).sum())
        .collect()
}

fn amplitudes(theta: &CVector, v_stacks: &[CVector]) -> Vec<Complex64> {
    v_stacks.iter().map(|v| theta.dotc(v)).collect()
}

fn surrogate_noise(noise_power: f64, d_sum: f64) -> f64 {
    noise_power * d_sum * d_sum
}

fn sqrt_weight(weight: f64, chi: f64) -> f64 {
    (weight * (1.0 + chi)).sqrt()
}

/// Ratio objective over the stacked phases:
/// `sum_k w_k (1 + chi_k) |x_k|^2 / (|x_k|^2 + sigma^2 |sum_s d_{s,k}|^2)`.
pub fn p5_objective(
    theta: &CVector,
    v_stacks: &[CVector],
    d_sums: &[f64],
    chi: &[f64],
    weights: &[f64],
    noise_power: f64,
) -> f64 {
    amplitudes(theta, v_stacks)
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let p = x.norm_sqr();
            weights[k] * (1.0 + chi[k]) * p / (p + surrogate_noise(noise_power, d_sums[k]))
        })
        .sum()
}

/// Quadratic-transform objective
/// `sum_k 2 a_k Re{eps_k^* x_k} - |eps_k|^2 (|x_k|^2 + sigma^2 |sum_s d_{s,k}|^2)`.
pub fn p6_objective(
    theta: &CVector,
    epsilon: &[Complex64],
    v_stacks: &[CVector],
    d_sums: &[f64],
    chi: &[f64],
    weights: &[f64],
    noise_power: f64,
) -> f64 {
    amplitudes(theta, v_stacks)
        .iter()
        .enumerate()
        .map(|(k, x)| {
            2.0 * sqrt_weight(weights[k], chi[k]) * (epsilon[k].conj() * x).re
                - epsilon[k].norm_sqr() * (x.norm_sqr() + surrogate_noise(noise_power, d_sums[k]))
        })
        .sum()
}

/// Optimal auxiliaries for fixed phases:
/// `eps_k = a_k x_k / (|x_k|^2 + sigma^2 |sum_s d_{s,k}|^2)`, `a_k = sqrt(w_k (1 + chi_k))`.
pub fn update_epsilon(
    theta: &CVector,
    v_stacks: &[CVector],
    d_sums: &[f64],
    chi: &[f64],
    weights: &[f64],
    noise_power: f64,
) -> Vec<Complex64> {
    amplitudes(theta, v_stacks)
        .iter()
        .enumerate()
        .map(|(k, x)| {
            x * (sqrt_weight(weights[k], chi[k])
                / (x.norm_sqr() + surrogate_noise(noise_power, d_sums[k])))
        })
        .collect()
}

/// Hermitian PSD matrix of the quadratic program, either dense or as a
/// non-negative combination of rank-one terms `sum_k c_k v_k v_k^H`.
#[derive(Debug, Clone, PartialEq)]
pub enum Upsilon {
    Dense(CMatrix),
    LowRank {
        weights: Vec<f64>,
        factors: Vec<CVector>,
    },
}

impl Upsilon {
    pub fn dim(&self) -> usize {
        match self {
            Upsilon::Dense(m) => m.nrows(),
            Upsilon::LowRank { factors, .. } => factors.first().map_or(0, |f| f.len()),
        }
    }

    pub fn apply(&self, x: &CVector) -> CVector {
        match self {
            Upsilon::Dense(m) => m * x,
            Upsilon::LowRank { weights, factors } => {
                let mut out = CVector::zeros(x.len());
                for (c, v) in weights.iter().zip(factors) {
                    out += v * (v.dotc(x) * *c);
                }
                out
            }
        }
    }

    /// `x^H Upsilon x` (real for Hermitian `Upsilon`).
    pub fn quad(&self, x: &CVector) -> f64 {
        match self {
            Upsilon::Dense(m) => x.dotc(&(m * x)).re,
            Upsilon::LowRank { weights, factors } => weights
                .iter()
                .zip(factors)
                .map(|(c, v)| c * v.dotc(x).norm_sqr())
                .sum(),
        }
    }

    pub fn to_dense(&self) -> CMatrix {
        match self {
            Upsilon::Dense(m) => m.clone(),
            Upsilon::LowRank { weights, factors } => {
                let n = self.dim();
                let mut out = CMatrix::zeros(n, n);
                for (c, v) in weights.iter().zip(factors) {
                    out += v * v.adjoint() * Complex64::from(*c);
                }
                out
            }
        }
    }

    /// Rejects matrices that are not Hermitian PSD within `1e-10` relative
    /// to their Frobenius norm.
    pub fn validate(&self) -> Result<()> {
        match self {
            Upsilon::LowRank { weights, factors } => {
                if weights.len() != factors.len() {
                    return Err(Error::dim("low-rank weights and factors differ in count"));
                }
                let n = self.dim();
                if factors.iter().any(|f| f.len() != n) {
                    return Err(Error::dim("low-rank factors differ in length"));
                }
                if let Some(c) = weights.iter().find(|c| !(**c >= 0.0)) {
                    return Err(Error::NotPsd(format!("negative rank-one weight {c}")));
                }
                Ok(())
            }
            Upsilon::Dense(m) => {
                if !m.is_square() {
                    return Err(Error::dim("Upsilon must be square"));
                }
                let scale = m.norm().max(f64::MIN_POSITIVE);
                let asym = (m - m.adjoint()).camax();
                if asym > 1e-10 * scale {
                    return Err(Error::NotPsd(format!("not Hermitian (asymmetry {asym:e})")));
                }
                let herm = (m + m.adjoint()) * Complex64::from(0.5);
                let min_eig = herm.symmetric_eigenvalues().min();
                if min_eig < -1e-10 * scale {
                    return Err(Error::NotPsd(format!("eigenvalue {min_eig:e}")));
                }
                Ok(())
            }
        }
    }

    /// Power-iteration estimate of the largest eigenvalue.
    pub fn lambda_max_estimate(&self) -> f64 {
        let n = self.dim();
        if n == 0 {
            return 0.0;
        }
        let mut x = CVector::from_fn(n, |i, _| {
            Complex64::new(1.0 + (i % 7) as f64 * 0.1, (i % 3) as f64 * 0.2)
        });
        x /= Complex64::from(x.norm());
        let mut lambda = 0.0;
        for _ in 0..60 {
            let y = self.apply(&x);
            let ny = y.norm();
            if ny == 0.0 {
                return 0.0;
            }
            lambda = x.dotc(&y).re;
            x = y / Complex64::from(ny);
        }
        lambda.max(self.quad(&x))
    }
}

/// `f(theta) = -theta^H Upsilon theta + 2 Re{theta^H z}`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub upsilon: Upsilon,
    pub z: CVector,
}

impl QuadraticForm {
    pub fn new(upsilon: Upsilon, z: CVector) -> Result<Self> {
        if upsilon.dim() != z.len()
            && !matches!(&upsilon, Upsilon::LowRank { factors, .. } if factors.is_empty())
        {
            return Err(Error::dim(format!(
                "Upsilon is {0}x{0} but z has {1} entries",
                upsilon.dim(),
                z.len()
            )));
        }
        Ok(Self { upsilon, z })
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    pub fn objective(&self, theta: &CVector) -> f64 {
        -self.upsilon.quad(theta) + 2.0 * theta.dotc(&self.z).re
    }

    /// Gradient in real coordinates packed as `df/dRe + j df/dIm`, which
    /// equals `2 (z - Upsilon theta)`.
    pub fn gradient(&self, theta: &CVector) -> CVector {
        (&self.z - self.upsilon.apply(theta)) * Complex64::from(2.0)
    }
}

/// `Upsilon = sum_k |eps_k|^2 vec(V_k) vec(V_k)^H` and
/// `z = sum_k eps_k^* sqrt(w_k (1 + chi_k)) vec(V_k)`.
pub fn assemble_quadratic(
    epsilon: &[Complex64],
    chi: &[f64],
    weights: &[f64],
    v_stacks: &[CVector],
) -> Result<QuadraticForm> {
    let k = v_stacks.len();
    if epsilon.len() != k || chi.len() != k || weights.len() != k || k == 0 {
        return Err(Error::dim("epsilon/chi/weights/V counts differ"));
    }
    let n = v_stacks[0].len();
    if v_stacks.iter().any(|v| v.len() != n) {
        return Err(Error::dim("stacked V vectors differ in length"));
    }
    let mut z = CVector::zeros(n);
    for j in 0..k {
        z += &v_stacks[j] * (epsilon[j].conj() * sqrt_weight(weights[j], chi[j]));
    }
    let upsilon = Upsilon::LowRank {
        weights: epsilon.iter().map(|e| e.norm_sqr()).collect(),
        factors: v_stacks.to_vec(),
    };
    QuadraticForm::new(upsilon, z)
}

/// Per-link floor `|Theta_s^H v_{s,k}|^2 / d_{s,k}^2 >= threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinPowerFloor {
    pub s: usize,
    pub k: usize,
    /// `v_{s,k}` (length M).
    pub v: CVector,
    pub d: f64,
    pub threshold: f64,
}

impl MinPowerFloor {
    fn power(&self, theta: &CVector, m: usize) -> (Complex64, f64) {
        let y = theta.rows(self.s * m, m).dotc(&self.v);
        (y, y.norm_sqr() / (self.d * self.d))
    }

    /// Scaled power minus threshold; negative means violated.
    pub fn margin(&self, theta: &CVector, m: usize) -> f64 {
        self.power(theta, m).1 - self.threshold
    }
}

/// Floors for every link, with `v_{s,k}` taken from `v_stacks`. Empty when
/// `threshold <= 0` since the constraint is then vacuous.
pub fn min_power_floors(
    channels: &ChannelSet,
    v_stacks: &[CVector],
    threshold: f64,
) -> Vec<MinPowerFloor> {
    if !(threshold > 0.0) {
        return Vec::new();
    }
    let m = channels.m_elems;
    let mut out = Vec::new();
    for s in 0..channels.num_rhs() {
        for (k, v) in v_stacks.iter().enumerate() {
            out.push(MinPowerFloor {
                s,
                k,
                v: v.rows(s * m, m).into_owned(),
                d: channels.d_factors[s][k],
                threshold,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpOptions {
    /// Inner iterations per penalty round.
    pub max_iters: usize,
    /// Stop a round when the relative objective change falls below this.
    pub tol: f64,
    /// Total rounds including the unpenalized round 0.
    pub penalty_rounds: usize,
    /// First non-zero penalty coefficient, relative to `|f(theta_init)|`.
    pub penalty_init: f64,
    pub max_backtracks: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-6,
            penalty_rounds: 5,
            penalty_init: 1e-2,
            max_backtracks: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpOutcome {
    pub phases: PhaseConfig,
    /// Unpenalized objective at the returned phases.
    pub objective: f64,
    pub initial_objective: f64,
    /// Inner iterations summed over rounds.
    pub iterations: usize,
    pub rounds: usize,
    /// One margin per floor, in floor order.
    pub floor_margins: Vec<f64>,
}

impl QpOutcome {
    pub fn violations(&self) -> usize {
        self.floor_margins.iter().filter(|&&m| m < 0.0).count()
    }
}

struct Penalized<'a> {
    form: &'a QuadraticForm,
    floors: &'a [MinPowerFloor],
    m: usize,
    rho: f64,
}

impl Penalized<'_> {
    fn hinge(&self, f: &MinPowerFloor, p: f64) -> f64 {
        (1.0 - p / f.threshold).max(0.0)
    }

    fn value(&self, theta: &CVector) -> f64 {
        let mut val = self.form.objective(theta);
        if self.rho > 0.0 {
            for f in self.floors {
                let h = self.hinge(f, f.power(theta, self.m).1);
                val -= self.rho * h * h;
            }
        }
        val
    }

    fn gradient(&self, theta: &CVector) -> CVector {
        let mut g = self.form.gradient(theta);
        if self.rho > 0.0 {
            for f in self.floors {
                let (y, p) = f.power(theta, self.m);
                let h = self.hinge(f, p);
                if h > 0.0 {
                    // d/dtheta of -rho h^2 with h = 1 - |y|^2 / (d^2 T).
                    let c = 4.0 * self.rho * h / (f.threshold * f.d * f.d);
                    let mut block = g.rows_mut(f.s * self.m, self.m);
                    block += &f.v * (y.conj() * c);
                }
            }
        }
        g
    }
}

fn project_step(theta: &CVector, grad: &CVector, step: f64) -> CVector {
    CVector::from_fn(theta.len(), |i, _| {
        let y = if step.is_infinite() {
            grad[i]
        } else {
            theta[i] + grad[i] * step
        };
        let n = y.norm();
        if n > 0.0 && n.is_finite() {
            y / n
        } else {
            theta[i]
        }
    })
}

/// One penalty round of monotone projected gradient ascent.
fn ascend(obj: &Penalized<'_>, start: CVector, step0: f64, opts: &QpOptions) -> (CVector, usize) {
    let mut theta = start;
    let mut value = obj.value(&theta);
    let mut iters = 0;
    for _ in 0..opts.max_iters {
        let grad = obj.gradient(&theta);
        let gmax = grad.camax();
        if gmax == 0.0 {
            break;
        }
        let mut step = step0;
        let mut next = None;
        for _ in 0..=opts.max_backtracks {
            let cand = project_step(&theta, &grad, step);
            let v = obj.value(&cand);
            if v >= value {
                next = Some((cand, v));
                break;
            }
            step = if step.is_infinite() {
                1.0 / gmax
            } else {
                0.5 * step
            };
        }
        let Some((cand, v)) = next else { break };
        iters += 1;
        let change = (v - value) / value.abs().max(f64::MIN_POSITIVE);
        theta = cand;
        value = v;
        if change < opts.tol {
            break;
        }
    }
    (theta, iters)
}

/// Maximizes `f` over unit-modulus phases starting from `theta_init`, with
/// the minimum-power floors enforced by a penalty whose coefficient grows
/// tenfold per round.
///
/// The returned objective is never below the starting one: if the
/// penalized rounds end lower, the unpenalized round-0 iterate is returned.
pub fn solve_unit_modulus_qp(
    form: &QuadraticForm,
    theta_init: &PhaseConfig,
    floors: &[MinPowerFloor],
    opts: &QpOptions,
) -> Result<QpOutcome> {
    theta_init.validate()?;
    form.upsilon.validate()?;
    let s = theta_init.num_rhs();
    let m = theta_init.m();
    if form.dim() != s * m {
        return Err(Error::dim(format!(
            "quadratic form has dimension {}, phases {}",
            form.dim(),
            s * m
        )));
    }
    if let Some(f) = floors
        .iter()
        .find(|f| f.s >= s || f.v.len() != m || !(f.d > 0.0))
    {
        return Err(Error::dim(format!(
            "invalid floor for link ({}, {})",
            f.s, f.k
        )));
    }

    let start = theta_init.stacked();
    let f0 = form.objective(&start);
    let lambda = form.upsilon.lambda_max_estimate();
    let step0 = if lambda > 0.0 {
        0.5 / lambda
    } else {
        f64::INFINITY
    };

    let margins = |theta: &CVector| {
        floors
            .iter()
            .map(|f| f.margin(theta, m))
            .collect::<Vec<_>>()
    };

    let mut obj = Penalized {
        form,
        floors,
        m,
        rho: 0.0,
    };
    let (round0, mut iterations) = ascend(&obj, start, step0, opts);
    let mut theta = round0.clone();
    let mut rounds = 1;
    let rho_base = opts.penalty_init
        * f0.abs()
            .max(form.objective(&round0).abs())
            .max(f64::MIN_POSITIVE);
    while rounds < opts.penalty_rounds.max(1) && margins(&theta).iter().any(|&g| g < 0.0) {
        obj.rho = rho_base * 10f64.powi(rounds as i32 - 1);
        // The hinge uses its own step scale; start from the unpenalized step.
        let (next, it) = ascend(&obj, theta, step0, opts);
        theta = next;
        iterations += it;
        rounds += 1;
    }
    if form.objective(&theta) < f0 {
        theta = round0;
    }

    let phases = PhaseConfig::from_stacked(&theta, s, theta_init.eta)?;
    Ok(QpOutcome {
        objective: form.objective(&theta),
        initial_objective: f0,
        iterations,
        rounds,
        floor_margins: margins(&theta),
        phases,
    })
}
