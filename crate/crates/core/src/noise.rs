//! Quasi-static charge dispersion as a frequency offset of each drive
//! relative to its transition, averaged over a product arcsine density.

use serde::Deserialize;

use crate::device::{mhz, DrivePulse};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChargeNoiseSpec {
    /// Largest offset `δω_max` per qubit (rad/s).
    pub max_shift: [f64; 2],
    pub grid_points: [usize; 2],
    pub enabled: bool,
}

impl Default for ChargeNoiseSpec {
    fn default() -> Self {
        Self::reference()
    }
}

impl ChargeNoiseSpec {
    /// ±0.9 MHz on qubit 1 and ±1.5 MHz on qubit 2, 11 × 11 cells.
    pub fn reference() -> Self {
        Self { max_shift: [mhz(0.9), mhz(1.5)], grid_points: [11, 11], enabled: true }
    }

    pub fn disabled() -> Self {
        Self { enabled: false, ..Self::reference() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_shift.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidArgument("charge-noise max shift must be finite and ≥ 0".into()));
        }
        if self.grid_points.contains(&0) {
            return Err(Error::InvalidArgument("charge-noise grid needs at least one point per axis".into()));
        }
        Ok(())
    }

    /// Non-fatal configuration problems.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.enabled {
            for q in 0..2 {
                if self.grid_points[q] < 3 && self.max_shift[q] > 0.0 {
                    w.push(format!("charge-noise grid for qubit {} has only {} point(s)", q + 1, self.grid_points[q]));
                }
            }
        }
        w
    }

    /// `(offsets, weight)` over the product grid; weights sum to one. A
    /// disabled spec yields the single zero-offset point.
    pub fn grid(&self) -> Result<Vec<([f64; 2], f64)>> {
        self.validate()?;
        if !self.enabled {
            return Ok(vec![([0.0, 0.0], 1.0)]);
        }
        let a = arcsine_cells(self.max_shift[0], self.grid_points[0]);
        let b = arcsine_cells(self.max_shift[1], self.grid_points[1]);
        Ok(a.iter().flat_map(|&(x, wx)| b.iter().map(move |&(y, wy)| ([x, y], wx * wy))).collect())
    }
}

/// Cell centers of `n` equal cells on `(−a, a)` with the exact arcsine mass
/// `(asin(x_hi/a) − asin(x_lo/a))/π` of each cell. `a = 0` collapses to a
/// single point.
pub fn arcsine_cells(a: f64, n: usize) -> Vec<(f64, f64)> {
    if a == 0.0 || n == 1 {
        return vec![(0.0, 1.0)];
    }
    let width = 2.0 * a / n as f64;
    (0..n)
        .map(|k| {
            let lo = -a + width * k as f64;
            let hi = lo + width;
            let mass = ((hi / a).clamp(-1.0, 1.0).asin() - (lo / a).clamp(-1.0, 1.0).asin()) / std::f64::consts::PI;
            (0.5 * (lo + hi), mass)
        })
        .collect()
}

/// Offsets each drive frequency by `δω_i`.
pub fn offset_drives(drives: &[DrivePulse; 2], offsets: [f64; 2]) -> [DrivePulse; 2] {
    let mut out = *drives;
    for (d, o) in out.iter_mut().zip(offsets) {
        d.drive_freq += o;
    }
    out
}

/// Plain-text form used by scenario files: shifts in MHz.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChargeNoiseConfig {
    #[serde(default = "default_enabled")]
    pub enabled: bool,
    #[serde(default = "default_shift")]
    pub max_shift_mhz: [f64; 2],
    #[serde(default = "default_points")]
    pub grid_points: [usize; 2],
}

fn default_enabled() -> bool {
    false
}

fn default_shift() -> [f64; 2] {
    [0.9, 1.5]
}

fn default_points() -> [usize; 2] {
    [11, 11]
}

impl Default for ChargeNoiseConfig {
    fn default() -> Self {
        Self { enabled: default_enabled(), max_shift_mhz: default_shift(), grid_points: default_points() }
    }
}

impl ChargeNoiseConfig {
    pub fn to_spec(&self) -> Result<ChargeNoiseSpec> {
        let spec = ChargeNoiseSpec { max_shift: self.max_shift_mhz.map(mhz), grid_points: self.grid_points, enabled: self.enabled };
        spec.validate()?;
        Ok(spec)
    }
}
