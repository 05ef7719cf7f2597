//! Binary element-activation masks and exhaustive shape selection.
//!
//! A surface is a `rows x cols` grid of elements stored row-major. A mask
//! switches elements on or off; masked-off elements contribute nothing. The
//! shaping matrix `A` and the phase matrix `Phi_s^H` are both diagonal, so
//! `A o Phi_s^H` reduces to an element-wise product computed by
//! [`apply_mask`].

use serde::{Deserialize, Serialize};

use crate::{CVector, ChannelSet, Complex64, Error, PhaseConfig, Precoder, Result};

/// Element grid, `rows` (M_x) by `cols` (M_y).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
}

impl Grid {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Catalog shape primitives. Sizes are in elements; `width` runs along a row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeKind {
    Rectangle {
        width: usize,
        height: usize,
    },
    StripRow {
        len: usize,
    },
    StripCol {
        len: usize,
    },
    /// Disk of integer radius; occupies a `(2r+1) x (2r+1)` bounding box.
    Circle {
        radius: usize,
    },
}

impl ShapeKind {
    /// Bounding box as (rows, cols).
    fn extent(&self) -> (usize, usize) {
        match *self {
            ShapeKind::Rectangle { width, height } => (height, width),
            ShapeKind::StripRow { len } => (1, len),
            ShapeKind::StripCol { len } => (len, 1),
            ShapeKind::Circle { radius } => (2 * radius + 1, 2 * radius + 1),
        }
    }

    fn covers(&self, dr: usize, dc: usize) -> bool {
        match *self {
            ShapeKind::Circle { radius } => {
                let r = radius as i64;
                let (y, x) = (dr as i64 - r, dc as i64 - r);
                x * x + y * y <= r * r
            }
            _ => true,
        }
    }

    fn default_label(&self) -> String {
        match *self {
            ShapeKind::Rectangle { width, height } => format!("rect{width}x{height}"),
            ShapeKind::StripRow { len } => format!("row{len}"),
            ShapeKind::StripCol { len } => format!("col{len}"),
            ShapeKind::Circle { radius } => format!("circle{radius}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ShapeMask {
    grid: Grid,
    active: Vec<bool>,
    label: String,
}

impl ShapeMask {
    pub fn from_active(grid: Grid, active: Vec<bool>, label: impl Into<String>) -> Result<Self> {
        if active.len() != grid.len() {
            return Err(Error::dim(format!(
                "mask has {} entries for a {}x{} grid",
                active.len(),
                grid.rows,
                grid.cols
            )));
        }
        Ok(Self {
            grid,
            active,
            label: label.into(),
        })
    }

    /// Every element active.
    pub fn full(grid: Grid) -> Self {
        Self {
            grid,
            active: vec![true; grid.len()],
            label: "full".into(),
        }
    }

    pub fn empty(grid: Grid) -> Self {
        Self {
            grid,
            active: vec![false; grid.len()],
            label: "empty".into(),
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn count_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn is_active(&self, m: usize) -> bool {
        self.active[m]
    }
}

/// Rasterizes `kind` with its bounding box's top-left corner at `anchor`
/// (row, col).
pub fn make_mask(kind: ShapeKind, anchor: (usize, usize), grid: Grid) -> Result<ShapeMask> {
    let (h, w) = kind.extent();
    if h == 0 || w == 0 {
        return Err(Error::domain(format!("degenerate shape {kind:?}")));
    }
    let (r0, c0) = anchor;
    if r0 + h > grid.rows || c0 + w > grid.cols {
        return Err(Error::domain(format!(
            "{kind:?} at {anchor:?} does not fit a {}x{} grid",
            grid.rows, grid.cols
        )));
    }
    let mut active = vec![false; grid.len()];
    for dr in 0..h {
        for dc in 0..w {
            if kind.covers(dr, dc) {
                active[(r0 + dr) * grid.cols + c0 + dc] = true;
            }
        }
    }
    Ok(ShapeMask {
        grid,
        active,
        label: kind.default_label(),
    })
}

/// Ordered, non-empty set of masks over one grid with unique labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeCatalog {
    masks: Vec<ShapeMask>,
}

impl ShapeCatalog {
    pub fn new(masks: Vec<ShapeMask>) -> Result<Self> {
        let first = masks
            .first()
            .ok_or_else(|| Error::domain("shape catalog must not be empty"))?;
        let grid = first.grid;
        for (i, m) in masks.iter().enumerate() {
            if m.grid != grid {
                return Err(Error::dim(format!("mask {i} uses a different grid")));
            }
            if masks[..i].iter().any(|o| o.label == m.label) {
                return Err(Error::domain(format!("duplicate mask label '{}'", m.label)));
            }
        }
        Ok(Self { masks })
    }

    /// 10x6 rectangle and 60-element row strip on a 10x60 grid.
    pub fn default_catalog() -> Self {
        let grid = Grid::new(10, 60);
        Self::new(vec![
            make_mask(
                ShapeKind::Rectangle {
                    width: 10,
                    height: 6,
                },
                (0, 0),
                grid,
            )
            .unwrap(),
            make_mask(ShapeKind::StripRow { len: 60 }, (0, 0), grid).unwrap(),
        ])
        .unwrap()
    }

    pub fn grid(&self) -> Grid {
        self.masks[0].grid
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&ShapeMask> {
        self.masks.get(i)
    }

    pub fn masks(&self) -> &[ShapeMask] {
        &self.masks
    }

    /// Catalog holding only member `i`.
    pub fn single(&self, i: usize) -> Result<Self> {
        let m = self
            .get(i)
            .ok_or_else(|| Error::domain(format!("mask index {i} out of range")))?;
        Self::new(vec![m.clone()])
    }

    /// Per-surface masks for a per-surface index assignment.
    pub fn assignment(&self, indices: &[usize]) -> Vec<ShapeMask> {
        indices.iter().map(|&i| self.masks[i].clone()).collect()
    }
}

/// Diagonal of `A o Phi_s^H`: entry `m` is `active_m * conj(theta_m) * sqrt(eta)`.
pub fn apply_mask(mask: &ShapeMask, theta: &CVector, eta: f64) -> Result<CVector> {
    if mask.len() != theta.len() {
        return Err(Error::dim(format!(
            "mask has {} elements, phase vector {}",
            mask.len(),
            theta.len()
        )));
    }
    let amp = eta.sqrt();
    Ok(CVector::from_iterator(
        theta.len(),
        theta.iter().zip(&mask.active).map(|(t, &a)| {
            if a {
                t.conj() * amp
            } else {
                Complex64::new(0.0, 0.0)
            }
        }),
    ))
}

/// Surface reflection coefficients for every surface.
pub fn surface_coefficients(masks: &[ShapeMask], phases: &PhaseConfig) -> Result<Vec<CVector>> {
    if masks.len() != phases.num_rhs() {
        return Err(Error::dim(format!(
            "{} masks for {} surfaces",
            masks.len(),
            phases.num_rhs()
        )));
    }
    masks
        .iter()
        .zip(&phases.theta)
        .map(|(mask, th)| apply_mask(mask, th, phases.eta))
        .collect()
}

/// Per-link received amplitudes `g_{s,k}^H (A o Phi_s^H) H_s w_k`, indexed
/// `[s][k]`.
pub fn link_amplitudes(
    channels: &ChannelSet,
    masks: &[ShapeMask],
    phases: &PhaseConfig,
    precoder: &Precoder,
) -> Result<Vec<Vec<Complex64>>> {
    let coeffs = surface_coefficients(masks, phases)?;
    link_amplitudes_with(channels, &coeffs, precoder)
}

pub(crate) fn link_amplitudes_with(
    channels: &ChannelSet,
    coeffs: &[CVector],
    precoder: &Precoder,
) -> Result<Vec<Vec<Complex64>>> {
    let k_users = channels.num_users();
    if precoder.num_users() != k_users || precoder.n_tr() != channels.n_tr {
        return Err(Error::dim(format!(
            "precoder is {}x{}, channels need {}x{}",
            precoder.n_tr(),
            precoder.num_users(),
            channels.n_tr,
            k_users
        )));
    }
    if coeffs.len() != channels.num_rhs() || coeffs.iter().any(|c| c.len() != channels.m_elems) {
        return Err(Error::dim(
            "surface coefficients do not match the channel set",
        ));
    }
    let mut out = Vec::with_capacity(channels.num_rhs());
    for (s, h) in channels.h_ap_rhs.iter().enumerate() {
        // H_s W once per surface: M x K.
        let hw = h * &precoder.w;
        let row = (0..k_users)
            .map(|k| {
                let g = &channels.g_rhs_ue[s][k];
                g.iter()
                    .zip(coeffs[s].iter())
                    .zip(hw.column(k).iter())
                    .map(|((g, c), x)| g.conj() * c * x)
                    .sum()
            })
            .collect();
        out.push(row);
    }
    Ok(out)
}

/// Summed squared per-link gains that shape selection maximizes.
pub fn shape_gain(
    channels: &ChannelSet,
    masks: &[ShapeMask],
    phases: &PhaseConfig,
    precoder: &Precoder,
) -> Result<f64> {
    Ok(link_amplitudes(channels, masks, phases, precoder)?
        .iter()
        .flatten()
        .map(|a| a.norm_sqr())
        .sum())
}

/// Exhaustive selection of one mask shared by every surface. Ties go to the
/// lowest catalog index.
pub fn select_shape<'c>(
    catalog: &'c ShapeCatalog,
    channels: &ChannelSet,
    phases: &PhaseConfig,
    precoder: &Precoder,
) -> Result<(usize, &'c ShapeMask)> {
    let s = channels.num_rhs();
    let mut best: Option<(usize, f64)> = None;
    for (i, mask) in catalog.masks.iter().enumerate() {
        let gain = shape_gain(channels, &vec![mask.clone(); s], phases, precoder)?;
        if best.is_none_or(|(_, g)| gain > g) {
            best = Some((i, gain));
        }
    }
    let (i, _) = best.expect("catalog is non-empty");
    Ok((i, &catalog.masks[i]))
}

/// Per-surface variant: the objective separates over surfaces, so each
/// surface takes its own argmax.
pub fn select_shape_per_rhs(
    catalog: &ShapeCatalog,
    channels: &ChannelSet,
    phases: &PhaseConfig,
    precoder: &Precoder,
) -> Result<Vec<usize>> {
    let s_count = channels.num_rhs();
    // gains[i][s]
    let gains: Vec<Vec<f64>> = catalog
        .masks
        .iter()
        .map(|mask| {
            let amps = link_amplitudes(channels, &vec![mask.clone(); s_count], phases, precoder)?;
            Ok(amps
                .iter()
                .map(|row| row.iter().map(|a| a.norm_sqr()).sum())
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok((0..s_count)
        .map(|s| {
            let mut best = 0;
            for i in 1..gains.len() {
                if gains[i][s] > gains[best][s] {
                    best = i;
                }
            }
            best
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_shapes_have_sixty_elements() {
        let grid = Grid::new(10, 60);
        let rect = make_mask(
            ShapeKind::Rectangle {
                width: 10,
                height: 6,
            },
            (0, 0),
            grid,
        )
        .unwrap();
        assert_eq!(rect.count_active(), 60);
        let strip = make_mask(ShapeKind::StripRow { len: 60 }, (0, 0), grid).unwrap();
        assert_eq!(strip.count_active(), 60);
        // All ones in one row.
        assert!(strip.active()[..60].iter().all(|&a| a));
        assert_eq!(ShapeCatalog::default_catalog().len(), 2);
    }

    #[test]
    fn unit_rectangle_anywhere() {
        let grid = Grid::new(5, 7);
        for r in 0..5 {
            for c in 0..7 {
                let m = make_mask(
                    ShapeKind::Rectangle {
                        width: 1,
                        height: 1,
                    },
                    (r, c),
                    grid,
                )
                .unwrap();
                assert_eq!(m.count_active(), 1);
                assert!(m.is_active(r * 7 + c));
            }
        }
    }

    #[test]
    fn strip_column_and_circle() {
        let grid = Grid::new(6, 6);
        let col = make_mask(ShapeKind::StripCol { len: 6 }, (0, 2), grid).unwrap();
        assert_eq!(col.count_active(), 6);
        assert!((0..6).all(|r| col.is_active(r * 6 + 2)));
        let disk = make_mask(ShapeKind::Circle { radius: 1 }, (1, 1), grid).unwrap();
        // Plus-shaped: centre and four neighbours.
        assert_eq!(disk.count_active(), 5);
        assert!(disk.is_active(2 * 6 + 2));
        assert!(!disk.is_active(6 + 1));
        let big = make_mask(ShapeKind::Circle { radius: 2 }, (0, 0), Grid::new(5, 5)).unwrap();
        assert_eq!(big.count_active(), 13);
    }

    #[test]
    fn out_of_bounds_is_a_domain_error() {
        let grid = Grid::new(4, 4);
        assert!(matches!(
            make_mask(ShapeKind::StripRow { len: 5 }, (0, 0), grid),
            Err(Error::Domain(_))
        ));
        assert!(make_mask(
            ShapeKind::Rectangle {
                width: 2,
                height: 2
            },
            (3, 0),
            grid
        )
        .is_err());
        assert!(make_mask(ShapeKind::Circle { radius: 2 }, (0, 0), grid).is_err());
        assert!(make_mask(ShapeKind::StripCol { len: 0 }, (0, 0), grid).is_err());
    }

    #[test]
    fn catalog_validation() {
        let g = Grid::new(2, 2);
        assert!(ShapeCatalog::new(vec![]).is_err());
        assert!(ShapeCatalog::new(vec![ShapeMask::full(g), ShapeMask::full(g)]).is_err());
        assert!(
            ShapeCatalog::new(vec![ShapeMask::full(g), ShapeMask::full(Grid::new(1, 4))]).is_err()
        );
        let c = ShapeCatalog::new(vec![ShapeMask::full(g), ShapeMask::empty(g)]).unwrap();
        assert_eq!(c.single(1).unwrap().masks()[0].label(), "empty");
        assert!(c.single(2).is_err());
    }

    #[test]
    fn apply_mask_examples() {
        let g = Grid::new(1, 3);
        let theta = CVector::from_vec(vec![
            Complex64::from_polar(1.0, 0.3),
            Complex64::from_polar(1.0, -1.1),
            Complex64::from_polar(1.0, 2.0),
        ]);
        let full = apply_mask(&ShapeMask::full(g), &theta, 1.0).unwrap();
        assert!(full.iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));
        assert!(full.iter().zip(theta.iter()).all(|(a, t)| *a == t.conj()));
        let zero = apply_mask(&ShapeMask::empty(g), &theta, 1.0).unwrap();
        assert!(zero.iter().all(|z| z.norm() == 0.0));

        let one = ShapeMask::from_active(g, vec![false, true, false], "one").unwrap();
        let th = CVector::from_element(3, Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_2));
        let out = apply_mask(&one, &th, 1.0).unwrap();
        assert_eq!(out[0], Complex64::new(0.0, 0.0));
        assert!((out[1] - Complex64::new(0.0, -1.0)).norm() < 1e-15);

        assert!(matches!(
            apply_mask(&ShapeMask::full(Grid::new(2, 2)), &theta, 1.0),
            Err(Error::Dimension(_))
        ));
    }
}
