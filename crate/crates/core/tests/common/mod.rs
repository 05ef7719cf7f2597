#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use rhs_core::channel::{build_network, default_rhs_positions, UeRegion};
use rhs_core::shapes::{make_mask, Grid};
use rhs_core::{
    CMatrix, CVector, ChannelSet, Complex64, Dims, NetworkLayout, PathLossModel, ShapeCatalog,
    ShapeKind, ShapeMask,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cn<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn cvec<R: Rng>(n: usize, rng: &mut R) -> CVector {
    CVector::from_fn(n, |_, _| cn(rng))
}

pub fn cmat<R: Rng>(r: usize, c: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(r, c, |_, _| cn(rng))
}

/// Unit-variance Rayleigh channels with unit distance factors and noise.
pub fn unit_channels<R: Rng>(s: usize, k: usize, m: usize, n_tr: usize, rng: &mut R) -> ChannelSet {
    ChannelSet {
        h_ap_rhs: (0..s).map(|_| cmat(m, n_tr, rng)).collect(),
        g_rhs_ue: (0..s)
            .map(|_| (0..k).map(|_| cvec(m, rng)).collect())
            .collect(),
        d_factors: vec![vec![1.0; k]; s],
        noise_power: 1.0,
        n_tr,
        m_elems: m,
    }
}

/// Channels drawn from the reference geometry and path-loss model.
pub fn geometric_channels(dims: Dims, seed: u64) -> ChannelSet {
    let mut r = rng(seed);
    let layout = NetworkLayout::with_random_users(
        [0.0, 0.0],
        default_rhs_positions(dims.s),
        UeRegion::default(),
        2.0,
        dims.k,
        &mut r,
    )
    .unwrap();
    build_network(&layout, &PathLossModel::default(), dims, -85.0, &mut r).unwrap()
}

pub fn random_mask<R: Rng>(grid: Grid, rng: &mut R, label: &str) -> ShapeMask {
    let active = (0..grid.len()).map(|_| rng.random_bool(0.5)).collect();
    ShapeMask::from_active(grid, active, label).unwrap()
}

/// Two-member catalog: a `w x h` rectangle and a full-width row strip.
pub fn desk_catalog(grid: Grid, rect: (usize, usize)) -> ShapeCatalog {
    let (w, h) = rect;
    ShapeCatalog::new(vec![
        make_mask(
            ShapeKind::Rectangle {
                width: w,
                height: h,
            },
            (0, 0),
            grid,
        )
        .unwrap(),
        make_mask(ShapeKind::StripRow { len: grid.cols }, (0, 0), grid).unwrap(),
    ])
    .unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Sweep configuration at the desk scale used by the throughput comparison.
pub fn desk_sweep_toml(trials: usize, seed: u64) -> String {
    format!(
        r#"
[dims]
s = 2
k = 3
m_x = 4
m_y = 16
n_tr = 8

[power]
p_max_dbm = {{ start = 20, stop = 45, step = 5 }}

[[catalog]]
kind = "rectangle"
width = 4
height = 4

[[catalog]]
kind = "strip_row"
len = 16

[run]
schemes = ["adaptive", "fixed", "quantized-2bit", "zf_random"]
trials = {trials}
seed = {seed}
"#
    )
}
