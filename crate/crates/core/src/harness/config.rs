//! Sweep configuration, read from a TOML document.
//!
//! ```toml
//! [dims]
//! s = 2
//! k = 3
//! m_x = 4
//! m_y = 16
//! n_tr = 8
//!
//! [power]
//! p_max_dbm = { start = 20, stop = 45, step = 5 }
//!
//! [[catalog]]
//! kind = "rectangle"
//! width = 4
//! height = 4
//!
//! [[catalog]]
//! kind = "strip_row"
//! len = 16
//!
//! [run]
//! schemes = ["adaptive", "fixed", "quantized-2bit", "zf_random"]
//! trials = 50
//! ```
//!
//! Every other field falls back to the reference system parameters:
//! noise -85 dBm, path loss 61.4 + 20 log10(r) with 5.8 dB shadowing, AP at
//! the origin, users in a 10 m disk around (40 m, 0 m), `p_thr` 20 dBm.

use serde::Deserialize;

use crate::baselines::BaselineKind;
use crate::channel::{default_rhs_positions, Point, UeRegion};
use crate::passive::QpOptions;
use crate::shapes::{make_mask, Grid};
use crate::{AoConfig, Coupling, Dims, Error, PathLossModel, Result, ShapeCatalog, ShapeKind};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    dims: RawDims,
    #[serde(default)]
    layout: RawLayout,
    #[serde(default)]
    path_loss: RawPathLoss,
    #[serde(default)]
    power: RawPower,
    catalog: Option<Vec<RawShape>>,
    #[serde(default)]
    run: RawRun,
    #[serde(default)]
    solver: RawSolver,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDims {
    s: usize,
    k: usize,
    m_x: usize,
    m_y: usize,
    n_tr: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayout {
    #[serde(default)]
    ap: Point,
    rhs: Option<Vec<Point>>,
    #[serde(default = "default_ue_center")]
    ue_center: Point,
    #[serde(default = "default_ue_radius")]
    ue_radius: f64,
    #[serde(default = "default_kappa")]
    kappa: f64,
}

fn default_ue_center() -> Point {
    UeRegion::default().center
}

fn default_ue_radius() -> f64 {
    UeRegion::default().radius
}

fn default_kappa() -> f64 {
    2.0
}

impl Default for RawLayout {
    fn default() -> Self {
        Self {
            ap: [0.0, 0.0],
            rhs: None,
            ue_center: default_ue_center(),
            ue_radius: default_ue_radius(),
            kappa: default_kappa(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPathLoss {
    #[serde(default = "default_rho_a")]
    rho_a: f64,
    #[serde(default = "default_rho_b")]
    rho_b: f64,
    #[serde(default = "default_sigma_delta")]
    sigma_delta: f64,
}

fn default_rho_a() -> f64 {
    PathLossModel::default().rho_a
}

fn default_rho_b() -> f64 {
    PathLossModel::default().rho_b
}

fn default_sigma_delta() -> f64 {
    PathLossModel::default().sigma_delta
}

impl Default for RawPathLoss {
    fn default() -> Self {
        let d = PathLossModel::default();
        Self {
            rho_a: d.rho_a,
            rho_b: d.rho_b,
            sigma_delta: d.sigma_delta,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawSweep {
    List(Vec<f64>),
    Single(f64),
    Range { start: f64, stop: f64, step: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPower {
    #[serde(default = "default_noise_dbm")]
    noise_dbm: f64,
    #[serde(default = "default_p_max")]
    p_max_dbm: RawSweep,
    #[serde(default = "default_p_thr")]
    p_thr_dbm: f64,
    #[serde(default = "default_true")]
    min_power: bool,
}

fn default_noise_dbm() -> f64 {
    -85.0
}

fn default_p_max() -> RawSweep {
    RawSweep::Single(30.0)
}

fn default_p_thr() -> f64 {
    20.0
}

fn default_true() -> bool {
    true
}

impl Default for RawPower {
    fn default() -> Self {
        Self {
            noise_dbm: default_noise_dbm(),
            p_max_dbm: default_p_max(),
            p_thr_dbm: default_p_thr(),
            min_power: true,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawShape {
    kind: String,
    width: Option<usize>,
    height: Option<usize>,
    len: Option<usize>,
    radius: Option<usize>,
    #[serde(default)]
    anchor: (usize, usize),
    label: Option<String>,
}

impl RawShape {
    fn shape_kind(&self) -> std::result::Result<ShapeKind, String> {
        let need = |v: Option<usize>, name: &str| {
            v.ok_or_else(|| format!("shape `{}` needs `{name}`", self.kind))
        };
        let (kind, used): (ShapeKind, &[&str]) = match self.kind.as_str() {
            "rectangle" => (
                ShapeKind::Rectangle {
                    width: need(self.width, "width")?,
                    height: need(self.height, "height")?,
                },
                &["width", "height"],
            ),
            "strip_row" => (
                ShapeKind::StripRow {
                    len: need(self.len, "len")?,
                },
                &["len"],
            ),
            "strip_col" => (
                ShapeKind::StripCol {
                    len: need(self.len, "len")?,
                },
                &["len"],
            ),
            "circle" => (
                ShapeKind::Circle {
                    radius: need(self.radius, "radius")?,
                },
                &["radius"],
            ),
            other => {
                return Err(format!(
                    "unknown shape kind '{other}' (rectangle, strip_row, strip_col, circle)"
                ))
            }
        };
        let given = [
            ("width", self.width),
            ("height", self.height),
            ("len", self.len),
            ("radius", self.radius),
        ];
        if let Some((name, _)) = given.iter().find(|(n, v)| v.is_some() && !used.contains(n)) {
            return Err(format!("shape `{}` does not take `{name}`", self.kind));
        }
        Ok(kind)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    #[serde(default = "default_schemes")]
    schemes: Vec<String>,
    #[serde(default = "default_trials")]
    trials: usize,
    #[serde(default)]
    seed: u64,
    weights: Option<Vec<f64>>,
    #[serde(default)]
    record_timing: bool,
}

fn default_schemes() -> Vec<String> {
    vec!["adaptive".into()]
}

fn default_trials() -> usize {
    1
}

impl Default for RawRun {
    fn default() -> Self {
        Self {
            schemes: default_schemes(),
            trials: default_trials(),
            seed: 0,
            weights: None,
            record_timing: false,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    #[serde(default = "default_tol_outer")]
    tol_outer: f64,
    #[serde(default = "default_max_outer")]
    max_outer: usize,
    #[serde(default = "default_tol_inner")]
    tol_inner: f64,
    #[serde(default = "default_max_inner")]
    max_inner: usize,
    #[serde(default = "default_penalty_rounds")]
    penalty_rounds: usize,
    #[serde(default = "default_penalty_init")]
    penalty_init: f64,
    #[serde(default)]
    active_coupling: Coupling,
    #[serde(default)]
    per_rhs_masks: bool,
    #[serde(default = "default_eta")]
    eta: f64,
}

fn default_tol_outer() -> f64 {
    1e-4
}

fn default_max_outer() -> usize {
    100
}

fn default_tol_inner() -> f64 {
    QpOptions::default().tol
}

fn default_max_inner() -> usize {
    QpOptions::default().max_iters
}

fn default_penalty_rounds() -> usize {
    QpOptions::default().penalty_rounds
}

fn default_penalty_init() -> f64 {
    QpOptions::default().penalty_init
}

fn default_eta() -> f64 {
    1.0
}

impl Default for RawSolver {
    fn default() -> Self {
        Self {
            tol_outer: default_tol_outer(),
            max_outer: default_max_outer(),
            tol_inner: default_tol_inner(),
            max_inner: default_max_inner(),
            penalty_rounds: default_penalty_rounds(),
            penalty_init: default_penalty_init(),
            active_coupling: Coupling::default(),
            per_rhs_masks: false,
            eta: default_eta(),
        }
    }
}

/// Solver knobs shared by every run of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub tol_outer: f64,
    pub max_outer: usize,
    pub qp: QpOptions,
    pub coupling: Coupling,
    pub per_rhs_masks: bool,
    pub eta: f64,
}

/// Validated sweep configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dims: Dims,
    pub grid: Grid,
    pub ap_position: Point,
    pub rhs_positions: Vec<Point>,
    pub ue_region: UeRegion,
    pub kappa: f64,
    pub path_loss: PathLossModel,
    pub noise_dbm: f64,
    pub p_max_dbm: Vec<f64>,
    /// `None` disables the minimum-power floors.
    pub p_thr_dbm: Option<f64>,
    pub weights: Vec<f64>,
    pub catalog: ShapeCatalog,
    pub schemes: Vec<BaselineKind>,
    pub trials: usize,
    pub seed: u64,
    pub record_timing: bool,
    pub solver: SolverSettings,
}

fn parse_schemes<S: AsRef<str>>(names: &[S], catalog_len: usize) -> Result<Vec<BaselineKind>> {
    let schemes = names
        .iter()
        .map(|s| s.as_ref().trim().parse::<BaselineKind>())
        .collect::<Result<Vec<_>>>()?;
    if schemes.is_empty() {
        return Err(Error::domain("at least one scheme required"));
    }
    for s in &schemes {
        if let Some(i) = s.mask_index().filter(|&i| i >= catalog_len) {
            return Err(Error::domain(format!(
                "{s} refers to mask {i}, catalog has {catalog_len}"
            )));
        }
    }
    Ok(schemes)
}

impl SimConfig {
    /// Replaces the scheme list, validating names against the catalog.
    pub fn set_schemes<S: AsRef<str>>(&mut self, names: &[S]) -> Result<()> {
        self.schemes = parse_schemes(names, self.catalog.len())?;
        Ok(())
    }

    /// Optimizer settings for one `(p_max, trial seed)` pair.
    pub fn ao_config(&self, p_max_dbm: f64, seed: u64) -> AoConfig {
        AoConfig {
            p_max: crate::channel::dbm_to_watts(p_max_dbm),
            p_thr: self.p_thr_dbm.map_or(0.0, crate::channel::dbm_to_watts),
            weights: self.weights.clone(),
            eta: self.solver.eta,
            tol_outer: self.solver.tol_outer,
            max_outer: self.solver.max_outer,
            coupling: self.solver.coupling,
            per_rhs_masks: self.solver.per_rhs_masks,
            qp: self.solver.qp,
            seed,
            quantize_bits: None,
        }
    }
}

/// 1-based line of a byte offset.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line where `key` is assigned or its table opens, or 1 if absent.
fn line_of_key(text: &str, key: &str) -> usize {
    text.lines()
        .position(|l| {
            let t = l.trim_start();
            t.strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
                || t.trim_start_matches('[').starts_with(key) && t.starts_with('[')
        })
        .map_or(1, |i| i + 1)
}

fn key_error(text: &str, key: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config {
        line: line_of_key(text, key),
        message: format!("`{key}`: {msg}"),
    }
}

fn expand_sweep(text: &str, sweep: RawSweep) -> Result<Vec<f64>> {
    let values = match sweep {
        RawSweep::Single(v) => vec![v],
        RawSweep::List(v) => v,
        RawSweep::Range { start, stop, step } => {
            if !(step > 0.0) || !(stop >= start) {
                return Err(key_error(
                    text,
                    "p_max_dbm",
                    "range needs step > 0 and stop >= start",
                ));
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
            (0..n).map(|i| start + step * i as f64).collect()
        }
    };
    if values.is_empty() {
        return Err(key_error(text, "p_max_dbm", "sweep list is empty"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(key_error(text, "p_max_dbm", "values must be finite"));
    }
    Ok(values)
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<SimConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config {
        line: e.span().map_or(1, |s| line_of(text, s.start)),
        message: e.message().trim().to_string(),
    })?;

    let d = &raw.dims;
    let m = d.m_x * d.m_y;
    let dims = Dims::new(d.s, d.k, m, d.n_tr).map_err(|e| key_error(text, "dims", e))?;
    let grid = Grid::new(d.m_x, d.m_y);

    let l = &raw.layout;
    let rhs_positions = match &l.rhs {
        Some(p) if p.len() != dims.s => {
            return Err(key_error(
                text,
                "rhs",
                format!("{} positions given for s = {}", p.len(), dims.s),
            ))
        }
        Some(p) => p.clone(),
        None => default_rhs_positions(dims.s),
    };
    if !(l.ue_radius > 0.0 && l.ue_radius.is_finite()) {
        return Err(key_error(text, "ue_radius", "must be positive"));
    }
    if !l.kappa.is_finite() {
        return Err(key_error(text, "kappa", "must be finite"));
    }
    let finite = |p: &Point| p[0].is_finite() && p[1].is_finite();
    if !finite(&l.ap) || !finite(&l.ue_center) || !rhs_positions.iter().all(finite) {
        return Err(key_error(text, "layout", "positions must be finite"));
    }

    let pl = PathLossModel {
        rho_a: raw.path_loss.rho_a,
        rho_b: raw.path_loss.rho_b,
        sigma_delta: raw.path_loss.sigma_delta,
    };
    pl.validate().map_err(|e| key_error(text, "path_loss", e))?;

    let pw = raw.power;
    for (key, v) in [("noise_dbm", pw.noise_dbm), ("p_thr_dbm", pw.p_thr_dbm)] {
        if !v.is_finite() {
            return Err(key_error(text, key, "must be finite"));
        }
    }
    let p_max_dbm = expand_sweep(text, pw.p_max_dbm)?;

    let catalog = match raw.catalog {
        None if grid == Grid::new(10, 60) => ShapeCatalog::default_catalog(),
        None => {
            return Err(key_error(
                text,
                "catalog",
                format!("required for a {}x{} grid", grid.rows, grid.cols),
            ))
        }
        Some(shapes) => {
            let masks = shapes
                .into_iter()
                .map(|s| {
                    let kind = s.shape_kind().map_err(Error::Domain)?;
                    let mask = make_mask(kind, s.anchor, grid)?;
                    Ok(match s.label {
                        Some(l) => mask.with_label(l),
                        None => mask,
                    })
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| key_error(text, "catalog", e))?;
            ShapeCatalog::new(masks).map_err(|e| key_error(text, "catalog", e))?
        }
    };

    let run = raw.run;
    let schemes =
        parse_schemes(&run.schemes, catalog.len()).map_err(|e| key_error(text, "schemes", e))?;
    if run.trials == 0 {
        return Err(key_error(text, "trials", "must be at least 1"));
    }
    let weights = run.weights.unwrap_or_else(|| vec![1.0; dims.k]);
    if weights.len() != dims.k || weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(key_error(
            text,
            "weights",
            format!("need {} non-negative values", dims.k),
        ));
    }

    let sv = raw.solver;
    if !(sv.tol_outer >= 0.0) || !(sv.tol_inner >= 0.0) {
        return Err(key_error(text, "solver", "tolerances must be non-negative"));
    }
    if sv.max_outer == 0 || sv.max_inner == 0 || sv.penalty_rounds == 0 {
        return Err(key_error(
            text,
            "solver",
            "iteration counts must be positive",
        ));
    }
    if !(sv.eta > 0.0 && sv.eta <= 1.0) {
        return Err(key_error(text, "eta", "must lie in (0, 1]"));
    }
    if !(sv.penalty_init > 0.0) {
        return Err(key_error(text, "penalty_init", "must be positive"));
    }

    Ok(SimConfig {
        dims,
        grid,
        ap_position: l.ap,
        rhs_positions,
        ue_region: UeRegion {
            center: l.ue_center,
            radius: l.ue_radius,
        },
        kappa: l.kappa,
        path_loss: pl,
        noise_dbm: pw.noise_dbm,
        p_max_dbm,
        p_thr_dbm: pw.min_power.then_some(pw.p_thr_dbm),
        weights,
        catalog,
        schemes,
        trials: run.trials,
        seed: run.seed,
        record_timing: run.record_timing,
        solver: SolverSettings {
            tol_outer: sv.tol_outer,
            max_outer: sv.max_outer,
            qp: QpOptions {
                max_iters: sv.max_inner,
                tol: sv.tol_inner,
                penalty_rounds: sv.penalty_rounds,
                penalty_init: sv.penalty_init,
                ..QpOptions::default()
            },
            coupling: sv.active_coupling,
            per_rhs_masks: sv.per_rhs_masks,
            eta: sv.eta,
        },
    })
}
