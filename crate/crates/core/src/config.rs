//! Radar configuration, scene description and estimate containers.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{FracError, Result};
use crate::linalg::C64;

/// Propagation speed in m/s.
pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

/// Array and waveform constants of the radar front end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarConfig {
    /// Transmit array elements.
    pub p: usize,
    /// Receive array elements.
    pub qr: usize,
    /// Active transmitters per pulse.
    pub k: usize,
    /// Selectable carrier frequencies.
    pub m: usize,
    /// Pulses per frame.
    pub n: usize,
    /// Carrier start frequency, Hz.
    pub fc: f64,
    /// Frequency step, Hz.
    pub delta_f: f64,
    /// Pulse repetition interval, s.
    pub t0: f64,
    /// Receive element spacing, m.
    pub d_r: f64,
    /// Transmit element spacing, m.
    pub d_t: f64,
}

impl Default for RadarConfig {
    fn default() -> Self {
        Self::standard()
    }
}

impl RadarConfig {
    /// The reference simulation setup: 8 transmitters, 2 receivers, 4 of 4 frequencies
    /// active per pulse, 20 pulses at 77 GHz with a 2.5 MHz step and half-wavelength
    /// receive spacing.
    pub fn standard() -> Self {
        let fc = 77e9;
        let lambda = SPEED_OF_LIGHT / fc;
        Self { p: 8, qr: 2, k: 4, m: 4, n: 20, fc, delta_f: 2.5e6, t0: 30e-6, d_r: 0.5 * lambda, d_t: lambda }
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.fc
    }

    /// Number of virtual array elements `P·Qr`.
    pub fn virtual_elements(&self) -> usize {
        self.p * self.qr
    }

    /// Rows of the reference matrix, `N·M·P`.
    pub fn reference_rows(&self) -> usize {
        self.n * self.m * self.p
    }

    /// Rows of the snapshot matrix, `N·K`.
    pub fn snapshot_rows(&self) -> usize {
        self.n * self.k
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(FracError::InvalidConfig(msg));
        if self.k < 1 || self.k > self.m.min(self.p) {
            return bad(format!("1 <= K <= min(M, P) violated (K={}, M={}, P={})", self.k, self.m, self.p));
        }
        if self.n < 2 {
            return bad(format!("N >= 2 violated (N={})", self.n));
        }
        if self.qr < 1 {
            return bad("Qr >= 1 violated".into());
        }
        for (name, v) in
            [("fc", self.fc), ("delta_f", self.delta_f), ("t0", self.t0), ("d_r", self.d_r), ("d_t", self.d_t)]
        {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be finite and strictly positive (got {v})"));
            }
        }
        let expect = self.qr as f64 * self.d_r;
        if (self.d_t - expect).abs() > 1e-9 * expect {
            return bad(format!("virtual aperture condition d_t = Qr*d_r violated ({} != {})", self.d_t, expect));
        }
        Ok(())
    }

    /// Maximum unambiguous range `c/(2Δf)` and velocity `c/(4 fc T0)`.
    pub fn ambiguity_limits(&self) -> (f64, f64) {
        (SPEED_OF_LIGHT / (2.0 * self.delta_f), SPEED_OF_LIGHT / (4.0 * self.fc * self.t0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    /// Range, m.
    pub r: f64,
    /// Radial velocity, m/s.
    pub v: f64,
    /// Direction of arrival, rad.
    pub theta: f64,
    /// Complex reflection amplitude.
    pub beta: C64,
}

impl Target {
    pub fn new(r: f64, v: f64, theta: f64, beta: C64) -> Self {
        Self { r, v, theta, beta }
    }

    /// Convenience constructor taking the angle in degrees and a unit amplitude.
    pub fn deg(r: f64, v: f64, theta_deg: f64) -> Self {
        Self::new(r, v, theta_deg.to_radians(), C64::new(1.0, 0.0))
    }

    pub fn validate(&self, cfg: &RadarConfig) -> Result<()> {
        let (rmax, vmax) = cfg.ambiguity_limits();
        if !(self.r >= 0.0 && self.r < rmax) {
            return Err(FracError::InvalidScene(format!("range {} outside [0, {rmax})", self.r)));
        }
        if !(self.v.abs() < vmax) {
            return Err(FracError::InvalidScene(format!("velocity {} outside (-{vmax}, {vmax})", self.v)));
        }
        if !(self.theta.abs() < FRAC_PI_2) {
            return Err(FracError::InvalidScene(format!("angle {} outside (-pi/2, pi/2)", self.theta)));
        }
        if !(self.beta.re.is_finite() && self.beta.im.is_finite()) {
            return Err(FracError::InvalidScene("non-finite amplitude".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub targets: Vec<Target>,
    /// Noise variance per complex entry.
    pub sigma2: f64,
    pub seed: u64,
}

impl Scene {
    pub fn new(targets: Vec<Target>, sigma2: f64, seed: u64) -> Self {
        Self { targets, sigma2, seed }
    }

    /// The three reference targets at 15/30/45 m, -30/10/40 deg, 10/-20/20 m/s.
    pub fn standard_targets() -> Vec<Target> {
        vec![Target::deg(15.0, 10.0, -30.0), Target::deg(30.0, -20.0, 10.0), Target::deg(45.0, 20.0, 40.0)]
    }

    pub fn validate(&self, cfg: &RadarConfig) -> Result<()> {
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(FracError::InvalidScene(format!("sigma2 must be >= 0 (got {})", self.sigma2)));
        }
        let l = self.targets.len();
        let guard = cfg.m.min(cfg.n).min(cfg.virtual_elements());
        if l < 1 || l >= guard {
            return Err(FracError::InvalidScene(format!(
                "target count {l} must satisfy 1 <= L < min(M, N, P*Qr) = {guard}"
            )));
        }
        self.targets.iter().try_for_each(|t| t.validate(cfg))
    }
}

/// One estimated target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub r: f64,
    pub v: f64,
    pub theta: f64,
    pub beta: C64,
}

/// Estimated targets sorted by descending amplitude, plus the squared Frobenius misfit.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EstimateSet {
    pub estimates: Vec<Estimate>,
    pub residual: f64,
}

impl EstimateSet {
    pub fn new(mut estimates: Vec<Estimate>, residual: f64) -> Self {
        estimates.sort_by(|a, b| b.beta.norm().total_cmp(&a.beta.norm()));
        Self { estimates, residual }
    }

    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }
}
