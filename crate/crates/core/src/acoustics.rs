//! Closed-form room-acoustics calculators.
//!
//! These parameterize the synthetic room: the decay constant sets the
//! envelope of every synthesized impulse response, and the coherence
//! bandwidth fixes the frequency grid resolution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper sanity bound on T60; larger values are almost always a unit mix-up.
pub const MAX_T60: f64 = 30.0;

/// Bulk description of a reverberant room.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomParameters {
    /// Volume in cubic meters.
    pub volume: f64,
    /// Total boundary area in square meters.
    pub surface_area: f64,
    /// 60 dB reverberation time in seconds.
    pub t60: f64,
    /// Speed of sound in m/s.
    #[serde(default = "default_speed_of_sound")]
    pub speed_of_sound: f64,
    /// Scattering mean free path in meters.
    #[serde(default = "default_mean_free_path")]
    pub mean_free_path: f64,
}

fn default_speed_of_sound() -> f64 {
    343.0
}

fn default_mean_free_path() -> f64 {
    1.27
}

impl Default for RoomParameters {
    /// The furnished laboratory room: 44 m³, 78 m², T60 = 0.52 s.
    fn default() -> Self {
        RoomParameters {
            volume: 44.0,
            surface_area: 78.0,
            t60: 0.52,
            speed_of_sound: default_speed_of_sound(),
            mean_free_path: default_mean_free_path(),
        }
    }
}

impl RoomParameters {
    pub fn new(volume: f64, surface_area: f64, t60: f64) -> Result<Self> {
        let room = RoomParameters {
            volume,
            surface_area,
            t60,
            ..Default::default()
        };
        room.validate()?;
        Ok(room)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("volume", self.volume),
            ("surface_area", self.surface_area),
            ("t60", self.t60),
            ("speed_of_sound", self.speed_of_sound),
            ("mean_free_path", self.mean_free_path),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config(format!(
                    "room parameter {name} must be finite and > 0, got {value}"
                )));
            }
        }
        if self.t60 >= MAX_T60 {
            return Err(Error::Config(format!(
                "t60 = {} s exceeds the {MAX_T60} s sanity bound",
                self.t60
            )));
        }
        Ok(())
    }

    /// Schroeder frequency 2000·√(T60/V) in Hz.
    pub fn schroeder_frequency(&self) -> f64 {
        2000.0 * (self.t60 / self.volume).sqrt()
    }

    /// Exponential energy decay constant τ = T60 / ln(10⁶) in seconds.
    pub fn decay_time_constant(&self) -> f64 {
        self.t60 / 1.0e6_f64.ln()
    }

    /// Coherence bandwidth 1/(πτ) in Hz.
    pub fn coherence_bandwidth(&self) -> f64 {
        1.0 / (std::f64::consts::PI * self.decay_time_constant())
    }

    /// Number of room modes inside one coherence band at frequency `f`.
    pub fn modal_density(&self, f: f64) -> Result<f64> {
        if !(f >= 0.0) || !f.is_finite() {
            return Err(Error::Domain(format!(
                "modal density needs a finite f >= 0, got {f}"
            )));
        }
        let c = self.speed_of_sound;
        let pi = std::f64::consts::PI;
        let volume_term = 4.0 * pi * self.volume / c.powi(3) * f * f;
        let area_term = pi * self.surface_area / (2.0 * c * c) * f;
        Ok((volume_term + area_term) * self.coherence_bandwidth())
    }

    /// Mean time between two scattering events, ℓ/c, in seconds.
    pub fn mean_scattering_interval(&self) -> f64 {
        self.mean_free_path / self.speed_of_sound
    }
}

/// Snapshot of every derived quantity, as emitted by the `acoustics` report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcousticsReport {
    pub room: RoomParameters,
    pub schroeder_frequency_hz: f64,
    pub decay_time_constant_s: f64,
    pub coherence_bandwidth_hz: f64,
    pub mean_scattering_interval_s: f64,
    /// (frequency, modes per coherence band)
    pub modal_density: Vec<(f64, f64)>,
}

impl AcousticsReport {
    pub fn new(room: &RoomParameters, frequencies: &[f64]) -> Result<Self> {
        room.validate()?;
        let modal_density = frequencies
            .iter()
            .map(|&f| room.modal_density(f).map(|n| (f, n)))
            .collect::<Result<Vec<_>>>()?;
        Ok(AcousticsReport {
            room: *room,
            schroeder_frequency_hz: room.schroeder_frequency(),
            decay_time_constant_s: room.decay_time_constant(),
            coherence_bandwidth_hz: room.coherence_bandwidth(),
            mean_scattering_interval_s: room.mean_scattering_interval(),
            modal_density,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn room(t60: f64, volume: f64) -> RoomParameters {
        RoomParameters {
            t60,
            volume,
            ..Default::default()
        }
    }

    #[test]
    fn schroeder_examples() {
        assert!((RoomParameters::default().schroeder_frequency() - 217.0).abs() < 1.0);
        assert!((room(1.0, 100.0).schroeder_frequency() - 200.0).abs() < 1e-12);
        assert!((room(0.25, 100.0).schroeder_frequency() - 100.0).abs() < 1e-12);
    }

    #[test]
    fn decay_and_coherence_examples() {
        let paper = RoomParameters::default();
        assert!((paper.decay_time_constant() - 0.038).abs() < 5e-4);
        assert!((paper.coherence_bandwidth() - 8.4).abs() < 0.1);

        let unit = room(1.0e6_f64.ln(), 44.0);
        assert!((unit.decay_time_constant() - 1.0).abs() < 1e-15);
        assert!((room(1.0, 44.0).decay_time_constant() - 1.0 / 13.815_510_557_964_274).abs() < 1e-12);

        let one_hz = room(1.0e6_f64.ln() / std::f64::consts::PI, 44.0);
        assert!((one_hz.coherence_bandwidth() - 1.0).abs() < 1e-12);
        assert!((room(1.04, 44.0).coherence_bandwidth() - 4.2).abs() < 0.05);
    }

    #[test]
    fn modal_density_examples() {
        let paper = RoomParameters::default();
        let n1100 = paper.modal_density(1100.0).unwrap();
        let n1850 = paper.modal_density(1850.0).unwrap();
        assert!((n1100 / 149.0 - 1.0).abs() < 0.02, "{n1100}");
        assert!((n1850 / 410.0 - 1.0).abs() < 0.02, "{n1850}");
        assert_eq!(paper.modal_density(0.0).unwrap(), 0.0);
        assert!(matches!(paper.modal_density(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn scattering_interval_examples() {
        let paper = RoomParameters::default();
        assert!((paper.mean_scattering_interval() - 3.7e-3).abs() < 1e-4);
        let r = RoomParameters {
            mean_free_path: 343.0,
            ..paper
        };
        assert!((r.mean_scattering_interval() - 1.0).abs() < 1e-15);
        let r = RoomParameters {
            mean_free_path: 0.686,
            ..paper
        };
        assert!((r.mean_scattering_interval() - 2.0e-3).abs() < 1e-15);
    }

    #[test]
    fn invariants() {
        let a = room(0.52, 44.0);
        let b = room(0.52, 88.0);
        let ratio = a.schroeder_frequency() / b.schroeder_frequency();
        assert!((ratio - 2f64.sqrt()).abs() < 1e-12);
        assert!(
            (a.coherence_bandwidth() * a.decay_time_constant() * std::f64::consts::PI - 1.0).abs()
                < 1e-15
        );
        let mut last = 0.0;
        for i in 1..200 {
            let n = a.modal_density(i as f64 * 25.0).unwrap();
            assert!(n > last);
            last = n;
        }
    }

    #[test]
    fn validation() {
        assert!(RoomParameters::new(44.0, 78.0, 0.52).is_ok());
        assert!(RoomParameters::new(0.0, 78.0, 0.52).is_err());
        assert!(RoomParameters::new(44.0, -1.0, 0.52).is_err());
        assert!(RoomParameters::new(44.0, 78.0, 52.0).is_err());
        assert!(RoomParameters::new(44.0, 78.0, f64::NAN).is_err());
    }
}
