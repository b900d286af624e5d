//! Drive envelopes `η(t)` and pulse schedules.
//!
//! Flat-top envelopes rise and fall with truncated Gaussian edges. Each edge
//! spans `(duration − flat_length) / 2` and is shifted and rescaled so the
//! envelope reaches exactly zero at `t = 0` and `t = duration`:
//!
//! ```text
//! edge(x) = (exp(−x²/2σ²) − c) / (1 − c),   c = exp(−r²/2σ²)
//! ```
//!
//! where `x` is the distance from the flat region and `r` the edge length.
//! The default edge length is `2σ`.

use crate::device::DrivePulse;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnvelopeShape {
    Square,
    FlatTopGaussian { sigma: f64, flat_length: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeSpec {
    pub shape: EnvelopeShape,
    /// Peak value of η in rad/s.
    pub amplitude: f64,
    /// Total duration in s.
    pub duration: f64,
}

impl EnvelopeSpec {
    pub fn square(amplitude: f64, duration: f64) -> Result<Self> {
        Self { shape: EnvelopeShape::Square, amplitude, duration }.validated()
    }

    /// Flat top with Gaussian edges truncated at 2σ on either side.
    pub fn flat_top_gaussian(amplitude: f64, flat_length: f64, sigma: f64) -> Result<Self> {
        Self::flat_top_gaussian_with_duration(amplitude, flat_length, sigma, flat_length + 4.0 * sigma)
    }

    pub fn flat_top_gaussian_with_duration(
        amplitude: f64,
        flat_length: f64,
        sigma: f64,
        duration: f64,
    ) -> Result<Self> {
        Self { shape: EnvelopeShape::FlatTopGaussian { sigma, flat_length }, amplitude, duration }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.amplitude >= 0.0) || !self.amplitude.is_finite() {
            return Err(Error::InvalidArgument(format!("envelope amplitude {} must be ≥ 0", self.amplitude)));
        }
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::InvalidArgument(format!("envelope duration {} must be > 0", self.duration)));
        }
        if let EnvelopeShape::FlatTopGaussian { sigma, flat_length } = self.shape {
            if !(sigma >= 0.0) || !(flat_length >= 0.0) {
                return Err(Error::InvalidArgument("flat-top sigma and flat length must be ≥ 0".into()));
            }
            if flat_length > self.duration {
                return Err(Error::InvalidArgument(format!(
                    "flat length {flat_length} exceeds envelope duration {}",
                    self.duration
                )));
            }
        }
        Ok(self)
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    /// Time at which the envelope first reaches its full amplitude.
    pub fn rise_time(&self) -> f64 {
        match self.shape {
            EnvelopeShape::Square => 0.0,
            EnvelopeShape::FlatTopGaussian { flat_length, .. } => 0.5 * (self.duration - flat_length),
        }
    }

    /// Envelope value in rad/s; zero outside `[0, duration]`.
    pub fn value(&self, t: f64) -> f64 {
        if !(0.0..=self.duration).contains(&t) {
            return 0.0;
        }
        match self.shape {
            EnvelopeShape::Square => self.amplitude,
            EnvelopeShape::FlatTopGaussian { sigma, flat_length } => {
                let rise = self.rise_time();
                let x = if t < rise {
                    rise - t
                } else if t > rise + flat_length {
                    t - rise - flat_length
                } else {
                    return self.amplitude;
                };
                self.amplitude * edge_shape(x, rise, sigma)
            }
        }
    }

    /// `∫ η(t) dt` in rad.
    pub fn area(&self) -> f64 {
        match self.shape {
            EnvelopeShape::Square => self.amplitude * self.duration,
            EnvelopeShape::FlatTopGaussian { sigma, flat_length } => {
                let rise = self.rise_time();
                let edge = integrate(|x| edge_shape(x, rise, sigma), 0.0, rise);
                self.amplitude * (flat_length + 2.0 * edge)
            }
        }
    }

    /// Time intervals on which the envelope is constant (used by integrators
    /// to avoid stepping across kinks).
    pub fn breakpoints(&self) -> Vec<f64> {
        match self.shape {
            EnvelopeShape::Square => vec![0.0, self.duration],
            EnvelopeShape::FlatTopGaussian { flat_length, .. } => {
                let rise = self.rise_time();
                vec![0.0, rise, rise + flat_length, self.duration]
            }
        }
    }
}

fn edge_shape(x: f64, rise: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 || rise <= 0.0 || x >= rise {
        return 0.0;
    }
    let s2 = 2.0 * sigma * sigma;
    let c = (-rise * rise / s2).exp();
    ((-x * x / s2).exp() - c) / (1.0 - c)
}

/// Amplitude for which the envelope area equals `target_area`.
pub fn solve_amplitude_for_area(spec: &EnvelopeSpec, target_area: f64) -> Result<f64> {
    if !(target_area > 0.0) {
        return Err(Error::InvalidArgument(format!("target area {target_area} must be > 0")));
    }
    let unit = spec.with_amplitude(1.0).area();
    if !(unit > 0.0) {
        return Err(Error::InvalidArgument("envelope has zero area at unit amplitude".into()));
    }
    Ok(target_area / unit)
}

/// Composite Gauss–Legendre quadrature (32 panels × 8 nodes).
pub(crate) fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    const NODES: [f64; 4] = [
        0.183_434_642_495_649_8,
        0.525_532_409_916_329,
        0.796_666_477_413_626_7,
        0.960_289_856_497_536_3,
    ];
    const WEIGHTS: [f64; 4] = [
        0.362_683_783_378_362,
        0.313_706_645_877_887_3,
        0.222_381_034_453_374_5,
        0.101_228_536_290_376_3,
    ];
    if b <= a {
        return 0.0;
    }
    let panels = 32;
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let half = 0.5 * h;
        for (x, w) in NODES.iter().zip(WEIGHTS) {
            total += w * half * (f(mid - half * x) + f(mid + half * x));
        }
    }
    total
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledPulse {
    pub start: f64,
    pub pulse: DrivePulse,
}

/// Time-ordered drive pulses.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PulseSchedule {
    pulses: Vec<ScheduledPulse>,
    total_duration: f64,
}

impl PulseSchedule {
    pub fn new(total_duration: f64) -> Self {
        Self { pulses: Vec::new(), total_duration }
    }

    /// Two or more pulses starting together, e.g. the simultaneous two-tone block.
    pub fn simultaneous(pulses: impl IntoIterator<Item = DrivePulse>) -> Result<Self> {
        let mut schedule = Self::new(0.0);
        for p in pulses {
            let end = p.envelope.duration;
            schedule.total_duration = schedule.total_duration.max(end);
            schedule.push(0.0, p)?;
        }
        Ok(schedule)
    }

    pub fn push(&mut self, start: f64, pulse: DrivePulse) -> Result<()> {
        if start < 0.0 || start + pulse.envelope.duration > self.total_duration * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "pulse [{start:e}, {:e}] does not fit in a schedule of {:e} s",
                start + pulse.envelope.duration,
                self.total_duration
            )));
        }
        let at = self.pulses.partition_point(|p| p.start <= start);
        self.pulses.insert(at, ScheduledPulse { start, pulse });
        Ok(())
    }

    pub fn pulses(&self) -> &[ScheduledPulse] {
        &self.pulses
    }

    pub fn total_duration(&self) -> f64 {
        self.total_duration
    }

    /// Sorted, deduplicated times at which some envelope changes character.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut points: Vec<f64> = vec![0.0, self.total_duration];
        for p in &self.pulses {
            points.extend(p.pulse.envelope.breakpoints().into_iter().map(|b| b + p.start));
        }
        points.retain(|t| (0.0..=self.total_duration).contains(t));
        points.sort_by(f64::total_cmp);
        points.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * self.total_duration.max(1e-30));
        points
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const NS: f64 = 1e-9;

    fn reference_flat_top(amplitude: f64) -> EnvelopeSpec {
        EnvelopeSpec::flat_top_gaussian(amplitude, 206.0 * NS, 3.5 * NS).unwrap()
    }

    fn trapezoid(spec: &EnvelopeSpec, n: usize) -> f64 {
        let h = spec.duration / n as f64;
        let mut s = 0.5 * (spec.value(0.0) + spec.value(spec.duration));
        for k in 1..n {
            s += spec.value(k as f64 * h);
        }
        s * h
    }

    #[test]
    fn square_values_and_area() {
        let spec = EnvelopeSpec::square(3.0, 2.0).unwrap();
        assert_eq!(spec.value(1.0), 3.0);
        assert_eq!(spec.value(-0.1), 0.0);
        assert_eq!(spec.value(2.1), 0.0);
        assert_eq!(spec.area(), 6.0);
    }

    #[test]
    fn flat_top_center_and_continuity() {
        let spec = reference_flat_top(5.0);
        assert_eq!(spec.duration, 220.0 * NS);
        assert_eq!(spec.value(spec.duration / 2.0), 5.0);
        let rise = spec.rise_time();
        assert!((spec.value(rise) - 5.0).abs() < 1e-12);
        assert!((spec.value(rise - 1e-18) - 5.0).abs() < 1e-9);
        assert!(spec.value(0.0).abs() < 1e-12);
        assert!(spec.value(spec.duration).abs() < 1e-12);
    }

    #[test]
    fn flat_top_area_matches_dense_trapezoid() {
        let spec = reference_flat_top(1.0);
        let reference = trapezoid(&spec, 2_000_000);
        assert!(((spec.area() - reference) / reference).abs() < 1e-10);
    }

    #[test]
    fn flat_top_sigma_limit() {
        let spec = EnvelopeSpec::flat_top_gaussian(2.0, 206.0 * NS, 1e-16).unwrap();
        assert!((spec.area() - 2.0 * 206.0 * NS).abs() / (2.0 * 206.0 * NS) < 1e-6);
    }

    #[test]
    fn amplitude_for_area() {
        let square = EnvelopeSpec::square(0.0, 213.0 * NS).unwrap();
        let a = solve_amplitude_for_area(&square, PI).unwrap();
        assert!((a - PI / (213.0 * NS)).abs() / a < 1e-14);
        let a2 = solve_amplitude_for_area(&square, 2.0 * PI).unwrap();
        assert!((a2 - 2.0 * a).abs() / a < 1e-14);
        let flat = reference_flat_top(0.0);
        let af = solve_amplitude_for_area(&flat, PI).unwrap();
        assert!((flat.with_amplitude(af).area() - PI).abs() < 1e-10 * PI);
        assert!(solve_amplitude_for_area(&square, 0.0).is_err());
    }

    #[test]
    fn reference_shape_is_consistent_with_213ns_at_4p70_mhz() {
        // population oscillation at 4.70 MHz means a coupling of π·4.70 MHz
        let coupling = PI * 4.70e6;
        let flat = reference_flat_top(0.0);
        let a = solve_amplitude_for_area(&flat, PI).unwrap();
        assert!(((a - coupling) / coupling).abs() < 0.03);
        let effective_length = PI / a;
        assert!((effective_length - 213.0 * NS).abs() / (213.0 * NS) < 0.03);
    }

    #[test]
    fn invalid_specs() {
        assert!(EnvelopeSpec::square(-1.0, 1.0).is_err());
        assert!(EnvelopeSpec::square(1.0, 0.0).is_err());
        assert!(EnvelopeSpec::flat_top_gaussian_with_duration(1.0, 2.0, 0.1, 1.0).is_err());
    }
}
