//! Seeded virtual reverberant room.
//!
//! Every source→receiver transfer function is a direct reverberant term plus
//! one re-radiated term per reconfigurable unit:
//!
//! ```text
//! H_ij(f, s) = D_ij(f) + √(ρ/K) · Σ_k u_ik(f) · r(s_k, f) · v_kj(f)
//! ```
//!
//! `D`, `u` and `v` are random transfer functions synthesized from
//! exponentially decaying white noise, and `r` is the unit reflection of a
//! binary two-state resonator. `ρ` sets the expected unit-mediated power
//! relative to the direct power.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use realfft::{RealFftPlanner, RealToComplex};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::acoustics::RoomParameters;
use crate::error::{Error, Result};
use crate::metrics::ChannelMatrix;
use crate::objective::ObjectiveSpec;
use crate::rng::{derive_seed, StreamRng};

/// Shortest impulse response accepted by the synthesizer, in decay constants.
pub const MIN_IR_DECAYS: f64 = 5.0;

/// Default impulse-response span, in decay constants.
pub const DEFAULT_IR_DECAYS: f64 = 8.0;

/// The frequency grid must resolve the coherence bandwidth at least this finely.
pub const BINS_PER_COHERENCE_BAND: f64 = 4.0;

/// Decay constant of each unit leg (source→unit, unit→receiver) relative to
/// the room's. Two legs at τ/2 cascade to a path with mean dwell time τ, so
/// the full channel keeps a frequency correlation width near 1/(πτ).
pub const UNIT_LEG_DECAY_FRACTION: f64 = 0.5;

/// Two-state resonator surrogate for one reconfigurable unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonatorModel {
    /// Resonance in the open state ("0"), Hz.
    pub f_open: f64,
    /// Resonance in the closed state ("1"), Hz.
    pub f_closed: f64,
    pub quality_factor: f64,
}

/// Q chosen by sweeping 1100–1850 Hz for the largest share of the band with
/// an open/closed phase difference inside 140°–170°. Pinned by
/// `tests::tuned_quality_factor`.
pub const DEFAULT_QUALITY_FACTOR: f64 = 2.7;

impl Default for ResonatorModel {
    fn default() -> Self {
        ResonatorModel {
            f_open: 990.0,
            f_closed: 1650.0,
            quality_factor: DEFAULT_QUALITY_FACTOR,
        }
    }
}

impl ResonatorModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_open > 0.0 && self.f_open < self.f_closed && self.f_closed.is_finite()) {
            return Err(Error::Config(format!(
                "resonator needs 0 < f_open < f_closed, got {} and {}",
                self.f_open, self.f_closed
            )));
        }
        if !(self.quality_factor > 0.0) || !self.quality_factor.is_finite() {
            return Err(Error::Config(format!(
                "quality factor must be positive, got {}",
                self.quality_factor
            )));
        }
        Ok(())
    }

    pub fn resonance(&self, closed: bool) -> f64 {
        if closed {
            self.f_closed
        } else {
            self.f_open
        }
    }

    /// Reflection phase relative to a rigid wall, in [0, 2π). Zero at DC.
    pub fn phase(&self, closed: bool, f: f64) -> f64 {
        let fr = self.resonance(closed);
        2.0 * (fr * f / self.quality_factor).atan2(fr * fr - f * f)
    }

    fn reflection_unchecked(&self, closed: bool, f: f64) -> Complex64 {
        Complex64::from_polar(1.0, self.phase(closed, f))
    }

    /// Wrapped open/closed phase difference in degrees, in [0, 180].
    pub fn phase_contrast_degrees(&self, f: f64) -> f64 {
        let d = (self.phase(false, f) - self.phase(true, f)).rem_euclid(std::f64::consts::TAU);
        d.min(std::f64::consts::TAU - d).to_degrees()
    }
}

/// Lossless unit reflection coefficient for `state` (`true` = closed).
pub fn resonator_reflection(model: &ResonatorModel, closed: bool, f: f64) -> Result<Complex64> {
    if !(f > 0.0) || !f.is_finite() {
        return Err(Error::Domain(format!("reflection needs f > 0, got {f}")));
    }
    Ok(model.reflection_unchecked(closed, f))
}

/// Binary states of the K units; `false` = open ("0"), `true` = closed ("1").
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ArmConfiguration {
    states: Vec<bool>,
}

impl ArmConfiguration {
    pub fn zeros(units: usize) -> Self {
        ArmConfiguration {
            states: vec![false; units],
        }
    }

    pub fn from_states(states: Vec<bool>) -> Self {
        ArmConfiguration { states }
    }

    /// Unit `k` takes bit `k` of `index`.
    pub fn from_index(units: usize, index: u64) -> Self {
        ArmConfiguration {
            states: (0..units).map(|k| (index >> k) & 1 == 1).collect(),
        }
    }

    /// Inverse of [`Self::from_index`]; only meaningful for `len() <= 64`.
    pub fn to_index(&self) -> u64 {
        self.states
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .fold(0u64, |acc, (k, _)| acc | (1u64 << k))
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn get(&self, k: usize) -> bool {
        self.states[k]
    }

    pub fn states(&self) -> &[bool] {
        &self.states
    }

    pub fn flip(&mut self, k: usize) {
        self.states[k] = !self.states[k];
    }

    pub fn flip_all(&mut self, units: &[usize]) {
        for &k in units {
            self.flip(k);
        }
    }

    pub fn count_closed(&self) -> usize {
        self.states.iter().filter(|&&s| s).count()
    }

    /// `"0"`/`"1"` per unit, unit 0 first.
    pub fn to_bit_string(&self) -> String {
        self.states.iter().map(|&s| if s { '1' } else { '0' }).collect()
    }

    pub fn from_bit_string(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Config(format!("invalid unit state {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(ArmConfiguration::from_states)
    }

    /// FNV-1a over the states; stable across runs and platforms.
    pub fn state_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &s in &self.states {
            h ^= s as u64 + 1;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        h
    }
}

impl Serialize for ArmConfiguration {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_bit_string())
    }
}

impl<'de> Deserialize<'de> for ArmConfiguration {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        ArmConfiguration::from_bit_string(&s).map_err(serde::de::Error::custom)
    }
}

/// Complex frequency response of a real impulse response on the grid
/// `f_n = n·sample_rate/length`. Only the non-negative half is stored; the
/// negative half is its conjugate mirror.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    spectrum: Vec<Complex64>,
    length: usize,
    sample_rate: f64,
}

impl TransferFunction {
    pub fn from_half_spectrum(spectrum: Vec<Complex64>, length: usize, sample_rate: f64) -> Result<Self> {
        if spectrum.len() != length / 2 + 1 {
            return Err(Error::Shape(format!(
                "half spectrum of a length-{length} response needs {} bins, got {}",
                length / 2 + 1,
                spectrum.len()
            )));
        }
        Ok(TransferFunction {
            spectrum,
            length,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.length
    }

    pub fn is_empty(&self) -> bool {
        self.length == 0
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn bin_spacing(&self) -> f64 {
        self.sample_rate / self.length as f64
    }

    pub fn half_spectrum(&self) -> &[Complex64] {
        &self.spectrum
    }

    pub fn at_bin(&self, bin: usize) -> Complex64 {
        self.spectrum[bin]
    }

    /// All `length` bins, negative frequencies conjugate-mirrored.
    pub fn full_spectrum(&self) -> Vec<Complex64> {
        let n = self.length;
        (0..n)
            .map(|k| {
                if k < self.spectrum.len() {
                    self.spectrum[k]
                } else {
                    self.spectrum[n - k].conj()
                }
            })
            .collect()
    }

    pub fn impulse_response(&self) -> Vec<f64> {
        inverse_real_fft(&self.spectrum, self.length)
    }
}

pub(crate) fn inverse_real_fft(half: &[Complex64], length: usize) -> Vec<f64> {
    let mut planner = RealFftPlanner::<f64>::new();
    let plan = planner.plan_fft_inverse(length);
    let mut input = half.to_vec();
    // The DC and Nyquist bins of a real sequence are real.
    input[0].im = 0.0;
    if length % 2 == 0 {
        input[length / 2].im = 0.0;
    }
    let mut out = plan.make_output_vec();
    plan.process(&mut input, &mut out)
        .expect("buffer sizes come from the plan");
    let scale = 1.0 / length as f64;
    out.iter_mut().for_each(|x| *x *= scale);
    out
}

pub(crate) fn forward_real_fft(samples: &[f64]) -> Vec<Complex64> {
    let mut planner = RealFftPlanner::<f64>::new();
    let plan = planner.plan_fft_forward(samples.len());
    let mut input = samples.to_vec();
    let mut out = plan.make_output_vec();
    plan.process(&mut input, &mut out)
        .expect("buffer sizes come from the plan");
    out
}

struct ImpulseSynth {
    plan: Arc<dyn RealToComplex<f64>>,
    envelope: Vec<f64>,
    length: usize,
    sample_rate: f64,
}

impl ImpulseSynth {
    fn new(tau: f64, sample_rate: f64, length: usize) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::Config(format!("decay constant must be positive, got {tau}")));
        }
        if !(sample_rate > 0.0) {
            return Err(Error::Config(format!("sample rate must be positive, got {sample_rate}")));
        }
        if (length as f64) < MIN_IR_DECAYS * tau * sample_rate {
            return Err(Error::Config(format!(
                "impulse response of {length} samples is shorter than {MIN_IR_DECAYS}τ = {} samples",
                (MIN_IR_DECAYS * tau * sample_rate).ceil()
            )));
        }
        // Amplitude envelope e^{-t/2τ}, normalized to unit energy so that
        // E|H(f)|² = 1 at every frequency.
        let mut envelope: Vec<f64> = (0..length)
            .map(|n| (-(n as f64) / (2.0 * tau * sample_rate)).exp())
            .collect();
        let energy: f64 = envelope.iter().map(|e| e * e).sum();
        let norm = energy.sqrt();
        envelope.iter_mut().for_each(|e| *e /= norm);
        let plan = RealFftPlanner::<f64>::new().plan_fft_forward(length);
        Ok(ImpulseSynth {
            plan,
            envelope,
            length,
            sample_rate,
        })
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> TransferFunction {
        let mut samples: Vec<f64> = self
            .envelope
            .iter()
            .map(|e| e * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut spectrum = self.plan.make_output_vec();
        self.plan
            .process(&mut samples, &mut spectrum)
            .expect("buffer sizes come from the plan");
        TransferFunction {
            spectrum,
            length: self.length,
            sample_rate: self.sample_rate,
        }
    }
}

/// Random transfer function: white Gaussian noise under an `e^{-t/2τ}`
/// amplitude envelope, Fourier transformed. Magnitudes across frequency are
/// Rayleigh and the frequency autocorrelation has full width `1/(πτ)`.
pub fn synthesize_impulse_response<R: Rng + ?Sized>(
    rng: &mut R,
    tau: f64,
    sample_rate: f64,
    ir_length: usize,
) -> Result<TransferFunction> {
    Ok(ImpulseSynth::new(tau, sample_rate, ir_length)?.draw(rng))
}

fn default_units() -> usize {
    200
}
fn default_ports() -> usize {
    2
}
fn default_sample_rate() -> f64 {
    16_000.0
}
fn default_coupling_ratio() -> f64 {
    1.0
}

/// Parameters of a virtual room; together with the seed they determine
/// every transfer function bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub room: RoomParameters,
    /// Number of reconfigurable units K.
    #[serde(default = "default_units")]
    pub units: usize,
    #[serde(default = "default_ports")]
    pub sources: usize,
    #[serde(default = "default_ports")]
    pub receivers: usize,
    #[serde(default = "default_sample_rate")]
    pub sample_rate: f64,
    /// Samples per impulse response; also the DFT length of the grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ir_length: Option<usize>,
    /// Expected unit-mediated power relative to the direct power (ρ).
    #[serde(default = "default_coupling_ratio")]
    pub coupling_ratio: f64,
    /// Measurement SNR in dB; `None` disables measurement noise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_snr_db: Option<f64>,
    #[serde(default)]
    pub resonator: ResonatorModel,
}

impl Default for RoomSpec {
    fn default() -> Self {
        RoomSpec {
            seed: 0,
            room: RoomParameters::default(),
            units: default_units(),
            sources: default_ports(),
            receivers: default_ports(),
            sample_rate: default_sample_rate(),
            ir_length: None,
            coupling_ratio: default_coupling_ratio(),
            noise_snr_db: None,
            resonator: ResonatorModel::default(),
        }
    }
}

impl RoomSpec {
    /// Smallest power of two covering both the default span of 8τ and the
    /// grid resolution of f_co/4.
    pub fn default_ir_length(&self) -> usize {
        let tau = self.room.decay_time_constant();
        let span = (DEFAULT_IR_DECAYS * tau * self.sample_rate).ceil() as usize;
        let resolve = (BINS_PER_COHERENCE_BAND * self.sample_rate / self.room.coherence_bandwidth()).ceil() as usize;
        span.max(resolve).next_power_of_two()
    }

    pub fn effective_ir_length(&self) -> usize {
        self.ir_length.unwrap_or_else(|| self.default_ir_length())
    }

    /// Every violated invariant, empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Err(e) = self.room.validate() {
            out.push(e.to_string());
        }
        if let Err(e) = self.resonator.validate() {
            out.push(e.to_string());
        }
        for (name, n) in [("units", self.units), ("sources", self.sources), ("receivers", self.receivers)] {
            if n == 0 {
                out.push(format!("{name} must be >= 1"));
            }
        }
        if !(self.sample_rate > 0.0) || !self.sample_rate.is_finite() {
            out.push(format!("sample_rate must be positive, got {}", self.sample_rate));
        }
        if !(self.coupling_ratio >= 0.0) || !self.coupling_ratio.is_finite() {
            out.push(format!("coupling_ratio must be >= 0, got {}", self.coupling_ratio));
        }
        if let Some(snr) = self.noise_snr_db {
            if !snr.is_finite() {
                out.push("noise_snr_db must be finite".into());
            }
        }
        if out.is_empty() {
            let tau = self.room.decay_time_constant();
            let length = self.effective_ir_length();
            if (length as f64) < MIN_IR_DECAYS * tau * self.sample_rate {
                out.push(format!("ir_length {length} is shorter than {MIN_IR_DECAYS}τ"));
            }
            let spacing = self.sample_rate / length as f64;
            let limit = self.room.coherence_bandwidth() / BINS_PER_COHERENCE_BAND;
            if spacing > limit {
                out.push(format!(
                    "bin spacing {spacing:.3} Hz exceeds f_co/{BINS_PER_COHERENCE_BAND} = {limit:.3} Hz"
                ));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("; ")))
        }
    }
}

/// Base matrix and per-unit flip deltas at one grid bin.
///
/// `H(s) = base + Σ_{k closed} delta_k`, where `base` is the all-open channel
/// and `delta_k = √(ρ/K)·u_k·(r(1) − r(0))·v_kᵀ`.
#[derive(Debug, Clone)]
pub struct FrequencySlice {
    pub bin: usize,
    pub frequency: f64,
    receivers: usize,
    sources: usize,
    base: Vec<Complex64>,
    deltas: Vec<Complex64>,
}

impl FrequencySlice {
    pub fn unit_delta(&self, k: usize) -> ChannelMatrix {
        let n = self.receivers * self.sources;
        let d = &self.deltas[k * n..(k + 1) * n];
        ChannelMatrix::new(DMatrix::from_row_slice(self.receivers, self.sources, d))
            .expect("finite entries")
            .with_frequency(self.frequency)
    }

    fn evaluate(&self, config: &ArmConfiguration) -> Vec<Complex64> {
        let n = self.receivers * self.sources;
        let mut acc = self.base.clone();
        for (k, _) in config.states().iter().enumerate().filter(|(_, &s)| s) {
            let d = &self.deltas[k * n..(k + 1) * n];
            acc.iter_mut().zip(d).for_each(|(a, b)| *a += b);
        }
        acc
    }
}

/// A materialized virtual room.
pub struct VirtualRoom {
    spec: RoomSpec,
    ir_length: usize,
    path_scale: f64,
    direct: Vec<TransferFunction>,
    incoming: Vec<TransferFunction>,
    outgoing: Vec<TransferFunction>,
    measurements: AtomicU64,
    noise_draws: AtomicU64,
    slices: Mutex<HashMap<usize, Arc<FrequencySlice>>>,
}

impl std::fmt::Debug for VirtualRoom {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VirtualRoom")
            .field("spec", &self.spec)
            .field("ir_length", &self.ir_length)
            .field("measurements", &self.measurement_count())
            .finish_non_exhaustive()
    }
}

const NOISE_STREAM_TAG: u64 = 0x6e6f_6973_655f_7273;

impl VirtualRoom {
    /// Draws all transfer banks from `spec.seed`: direct `D_ij` (row-major),
    /// then incoming `v_kj`, then outgoing `u_ik`.
    pub fn build(spec: &RoomSpec) -> Result<Self> {
        spec.validate()?;
        let ir_length = spec.effective_ir_length();
        let tau = spec.room.decay_time_constant();
        let fs = spec.sample_rate;
        let (nr, ns, k) = (spec.receivers, spec.sources, spec.units);

        let mut rng = StreamRng::seed_from_u64(spec.seed);
        let room_synth = ImpulseSynth::new(tau, fs, ir_length)?;
        let leg_synth = ImpulseSynth::new(tau * UNIT_LEG_DECAY_FRACTION, fs, ir_length)?;

        let direct = (0..nr * ns).map(|_| room_synth.draw(&mut rng)).collect();
        let incoming = (0..k * ns).map(|_| leg_synth.draw(&mut rng)).collect();
        let outgoing = (0..nr * k).map(|_| leg_synth.draw(&mut rng)).collect();

        Ok(VirtualRoom {
            spec: spec.clone(),
            ir_length,
            path_scale: (spec.coupling_ratio / k as f64).sqrt(),
            direct,
            incoming,
            outgoing,
            measurements: AtomicU64::new(0),
            noise_draws: AtomicU64::new(0),
            slices: Mutex::new(HashMap::new()),
        })
    }

    /// A room over caller-supplied banks, laid out as in [`Self::build`].
    /// Useful for fixtures with known transfer functions.
    pub fn from_banks(
        spec: &RoomSpec,
        direct: Vec<TransferFunction>,
        incoming: Vec<TransferFunction>,
        outgoing: Vec<TransferFunction>,
    ) -> Result<Self> {
        spec.validate()?;
        let ir_length = spec.effective_ir_length();
        let (nr, ns, k) = (spec.receivers, spec.sources, spec.units);
        if direct.len() != nr * ns || incoming.len() != k * ns || outgoing.len() != nr * k {
            return Err(Error::Shape(format!(
                "banks of {}/{}/{} transfer functions do not fit {nr} receivers, {ns} sources, {k} units",
                direct.len(),
                incoming.len(),
                outgoing.len()
            )));
        }
        for tf in direct.iter().chain(&incoming).chain(&outgoing) {
            if tf.len() != ir_length || tf.sample_rate() != spec.sample_rate {
                return Err(Error::Shape(format!(
                    "transfer function of length {} at {} Hz does not match the {ir_length}-point grid at {} Hz",
                    tf.len(),
                    tf.sample_rate(),
                    spec.sample_rate
                )));
            }
        }
        Ok(VirtualRoom {
            spec: spec.clone(),
            ir_length,
            path_scale: (spec.coupling_ratio / k as f64).sqrt(),
            direct,
            incoming,
            outgoing,
            measurements: AtomicU64::new(0),
            noise_draws: AtomicU64::new(0),
            slices: Mutex::new(HashMap::new()),
        })
    }

    pub fn spec(&self) -> &RoomSpec {
        &self.spec
    }

    pub fn units(&self) -> usize {
        self.spec.units
    }

    pub fn sources(&self) -> usize {
        self.spec.sources
    }

    pub fn receivers(&self) -> usize {
        self.spec.receivers
    }

    pub fn sample_rate(&self) -> f64 {
        self.spec.sample_rate
    }

    pub fn ir_length(&self) -> usize {
        self.ir_length
    }

    pub fn bin_count(&self) -> usize {
        self.ir_length / 2 + 1
    }

    pub fn bin_spacing(&self) -> f64 {
        self.spec.sample_rate / self.ir_length as f64
    }

    pub fn bin_frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_spacing()
    }

    /// √(ρ/K), the amplitude scale of each unit path.
    pub fn path_scale(&self) -> f64 {
        self.path_scale
    }

    /// Number of transfer functions held: `K·(Ns + Nr) + Nr·Ns`.
    pub fn transfer_count(&self) -> usize {
        self.direct.len() + self.incoming.len() + self.outgoing.len()
    }

    pub fn direct(&self, receiver: usize, source: usize) -> &TransferFunction {
        &self.direct[receiver * self.spec.sources + source]
    }

    /// Source `source` → unit `unit`.
    pub fn incoming(&self, unit: usize, source: usize) -> &TransferFunction {
        &self.incoming[unit * self.spec.sources + source]
    }

    /// Unit `unit` → receiver `receiver`.
    pub fn outgoing(&self, receiver: usize, unit: usize) -> &TransferFunction {
        &self.outgoing[receiver * self.spec.units + unit]
    }

    /// Nearest grid bin of `f`, which must lie in `(0, sample_rate/2)`.
    pub fn bin_for(&self, f: f64) -> Result<usize> {
        let nyquist = self.spec.sample_rate / 2.0;
        if !(f > 0.0 && f < nyquist) {
            return Err(Error::Domain(format!(
                "frequency {f} Hz outside (0, {nyquist}) Hz"
            )));
        }
        Ok(((f / self.bin_spacing()).round() as usize).min(self.bin_count() - 1))
    }

    fn check_config(&self, config: &ArmConfiguration) -> Result<()> {
        if config.len() != self.spec.units {
            return Err(Error::Config(format!(
                "configuration has {} units, room has {}",
                config.len(),
                self.spec.units
            )));
        }
        Ok(())
    }

    /// The cached base/delta decomposition at the bin nearest `f`.
    pub fn slice(&self, f: f64) -> Result<Arc<FrequencySlice>> {
        let bin = self.bin_for(f)?;
        let mut cache = self.slices.lock().expect("slice cache poisoned");
        if let Some(s) = cache.get(&bin) {
            return Ok(Arc::clone(s));
        }
        let slice = Arc::new(self.compute_slice(bin));
        cache.insert(bin, Arc::clone(&slice));
        Ok(slice)
    }

    fn compute_slice(&self, bin: usize) -> FrequencySlice {
        let (nr, ns, k) = (self.spec.receivers, self.spec.sources, self.spec.units);
        let f = self.bin_frequency(bin);
        let model = &self.spec.resonator;
        let r_open = model.reflection_unchecked(false, f);
        let r_swing = model.reflection_unchecked(true, f) - r_open;
        let mut base = vec![Complex64::new(0.0, 0.0); nr * ns];
        let mut deltas = vec![Complex64::new(0.0, 0.0); k * nr * ns];
        for i in 0..nr {
            for j in 0..ns {
                let mut unit_sum = Complex64::new(0.0, 0.0);
                for unit in 0..k {
                    let path = self.outgoing(i, unit).at_bin(bin) * self.incoming(unit, j).at_bin(bin) * self.path_scale;
                    unit_sum += path * r_open;
                    deltas[unit * nr * ns + i * ns + j] = path * r_swing;
                }
                base[i * ns + j] = self.direct(i, j).at_bin(bin) + unit_sum;
            }
        }
        FrequencySlice {
            bin,
            frequency: f,
            receivers: nr,
            sources: ns,
            base,
            deltas,
        }
    }

    /// Channel matrix for `config` at the grid bin nearest `f`, with
    /// measurement noise when the room has an SNR configured.
    pub fn channel_matrix_at(&self, config: &ArmConfiguration, f: f64) -> Result<ChannelMatrix> {
        self.check_config(config)?;
        let slice = self.slice(f)?;
        let mut entries = slice.evaluate(config);
        if let Some(snr_db) = self.spec.noise_snr_db {
            let draw = self.noise_draws.fetch_add(1, Ordering::Relaxed);
            let mut rng = StreamRng::seed_from_u64(derive_seed(self.spec.seed ^ NOISE_STREAM_TAG, draw));
            let power = (1.0 + self.spec.coupling_ratio) / 10f64.powf(snr_db / 10.0);
            let sd = (power / 2.0).sqrt();
            for z in entries.iter_mut() {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *z += Complex64::new(re * sd, im * sd);
            }
        }
        let m = DMatrix::from_row_slice(self.spec.receivers, self.spec.sources, &entries);
        Ok(ChannelMatrix::new(m)?.with_frequency(slice.frequency))
    }

    /// The noise-free channel, whatever the room's SNR setting.
    pub fn true_channel_at(&self, config: &ArmConfiguration, f: f64) -> Result<ChannelMatrix> {
        self.check_config(config)?;
        let slice = self.slice(f)?;
        let m = DMatrix::from_row_slice(self.spec.receivers, self.spec.sources, &slice.evaluate(config));
        Ok(ChannelMatrix::new(m)?.with_frequency(slice.frequency))
    }

    /// One measurement step: matrices at every frequency the objective
    /// needs. Increments the measurement counter once.
    pub fn measure(&self, config: &ArmConfiguration, objective: &ObjectiveSpec) -> Result<Vec<ChannelMatrix>> {
        self.measure_at(config, &objective.frequencies())
    }

    pub fn measure_at(&self, config: &ArmConfiguration, frequencies: &[f64]) -> Result<Vec<ChannelMatrix>> {
        let out = frequencies
            .iter()
            .map(|&f| self.channel_matrix_at(config, f))
            .collect::<Result<Vec<_>>>()?;
        self.measurements.fetch_add(1, Ordering::Relaxed);
        Ok(out)
    }

    pub fn measurement_count(&self) -> u64 {
        self.measurements.load(Ordering::Relaxed)
    }

    /// Noise-free half spectra `H_ij` for `config`, indexed `[i * Ns + j][bin]`.
    pub fn transfer_spectra(&self, config: &ArmConfiguration) -> Result<Vec<Vec<Complex64>>> {
        self.check_config(config)?;
        let bins = self.bin_count();
        let model = &self.spec.resonator;
        let reflections: [Vec<Complex64>; 2] = [false, true].map(|closed| {
            (0..bins)
                .map(|b| model.reflection_unchecked(closed, self.bin_frequency(b)))
                .collect()
        });
        let (nr, ns) = (self.spec.receivers, self.spec.sources);
        let mut out = Vec::with_capacity(nr * ns);
        let mut leg = vec![Complex64::new(0.0, 0.0); bins];
        for i in 0..nr {
            for j in 0..ns {
                let mut h = self.direct(i, j).half_spectrum().to_vec();
                for unit in 0..self.spec.units {
                    let r = &reflections[config.get(unit) as usize];
                    let u = self.outgoing(i, unit).half_spectrum();
                    let v = self.incoming(unit, j).half_spectrum();
                    for b in 0..bins {
                        leg[b] = u[b] * r[b] * v[b];
                    }
                    h.iter_mut().zip(&leg).for_each(|(a, l)| *a += l * self.path_scale);
                }
                out.push(h);
            }
        }
        Ok(out)
    }

    /// Effective impulse responses `h_ij(t)` for `config`, `[i * Ns + j]`.
    pub fn impulse_responses(&self, config: &ArmConfiguration) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .transfer_spectra(config)?
            .iter()
            .map(|h| inverse_real_fft(h, self.ir_length))
            .collect())
    }

    /// Little-endian dump of every transfer bank for reproducibility audits.
    ///
    /// Layout: magic `CSHB`, `u32` version, `u32` receivers, sources, units,
    /// ir_length, bins, then `f64` sample rate and path scale; followed by
    /// the direct, incoming and outgoing banks in build order, each bin as
    /// an `(re, im)` pair of `f64`.
    pub fn write_banks<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(BANK_MAGIC)?;
        for v in [
            BANK_VERSION,
            self.spec.receivers as u32,
            self.spec.sources as u32,
            self.spec.units as u32,
            self.ir_length as u32,
            self.bin_count() as u32,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.spec.sample_rate.to_le_bytes())?;
        w.write_all(&self.path_scale.to_le_bytes())?;
        for tf in self.direct.iter().chain(&self.incoming).chain(&self.outgoing) {
            for z in tf.half_spectrum() {
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// Normalized intensity correlation `|⟨H(f) H*(f + Δ)⟩|² / ⟨|H|²⟩²` for lags
/// `0..=max_lag` bins, averaged over the given spectra and over `bins`.
pub fn frequency_autocorrelation(spectra: &[&[Complex64]], bins: std::ops::Range<usize>, max_lag: usize) -> Vec<f64> {
    let mut power = 0.0;
    let mut count = 0usize;
    for s in spectra {
        for b in bins.clone() {
            power += s[b].norm_sqr();
            count += 1;
        }
    }
    let power = power / count.max(1) as f64;
    (0..=max_lag)
        .map(|lag| {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut n = 0usize;
            for s in spectra {
                for b in bins.clone() {
                    if b + lag < s.len() {
                        acc += s[b] * s[b + lag].conj();
                        n += 1;
                    }
                }
            }
            (acc / n.max(1) as f64).norm_sqr() / (power * power)
        })
        .collect()
}

/// Full width at half maximum of a correlation curve sampled at `spacing`,
/// by linear interpolation of the first crossing.
pub fn correlation_fwhm(acf: &[f64], spacing: f64) -> Option<f64> {
    let half = acf.first()? / 2.0;
    acf.windows(2).enumerate().find_map(|(k, w)| {
        (w[0] >= half && w[1] < half).then(|| 2.0 * spacing * (k as f64 + (w[0] - half) / (w[0] - w[1])))
    })
}

const BANK_MAGIC: &[u8; 4] = b"CSHB";
const BANK_VERSION: u32 = 1;

/// A transfer-bank dump read back from [`VirtualRoom::write_banks`].
#[derive(Debug, Clone, PartialEq)]
pub struct BankDump {
    pub receivers: usize,
    pub sources: usize,
    pub units: usize,
    pub ir_length: usize,
    pub sample_rate: f64,
    pub path_scale: f64,
    /// Direct, incoming and outgoing banks in build order.
    pub banks: Vec<Vec<Complex64>>,
}

impl BankDump {
    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != BANK_MAGIC {
            return Err(Error::Io("not a transfer-bank dump".into()));
        }
        let mut u32s = [0u32; 6];
        for v in u32s.iter_mut() {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            *v = u32::from_le_bytes(b);
        }
        let [version, nr, ns, k, len, bins] = u32s;
        if version != BANK_VERSION {
            return Err(Error::Io(format!("unsupported bank dump version {version}")));
        }
        let read_f64 = |r: &mut R| -> Result<f64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        };
        let sample_rate = read_f64(&mut r)?;
        let path_scale = read_f64(&mut r)?;
        let count = (nr * ns + k * (ns + nr)) as usize;
        let mut banks = Vec::with_capacity(count);
        for _ in 0..count {
            let mut bank = Vec::with_capacity(bins as usize);
            for _ in 0..bins {
                let re = read_f64(&mut r)?;
                let im = read_f64(&mut r)?;
                bank.push(Complex64::new(re, im));
            }
            banks.push(bank);
        }
        Ok(BankDump {
            receivers: nr as usize,
            sources: ns as usize,
            units: k as usize,
            ir_length: len as usize,
            sample_rate,
            path_scale,
            banks,
        })
    }
}
