//! Audio-level verification: beeps and melodies sent through a virtual room,
//! scored by band intensities and cross-correlation.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::metrics::ChannelMatrix;
use crate::room::{forward_real_fft, inverse_real_fft, ArmConfiguration, VirtualRoom};

/// Attack and release of each melody note.
pub const NOTE_RAMP_SECONDS: f64 = 0.010;
/// Half-width of the per-note band used for envelope cross-correlation.
pub const NOTE_BAND_HALF_WIDTH: f64 = 20.0;

/// The three notes of the tri-note pieces, Hz.
pub const NOTE_DO: f64 = 1318.0;
pub const NOTE_RE: f64 = 1480.0;
pub const NOTE_MI: f64 = 1661.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: f64,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(Error::Config(format!("sample rate must be positive, got {sample_rate}")));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("sample {i} is not finite")));
        }
        Ok(Waveform { samples, sample_rate })
    }

    pub fn silence(len: usize, sample_rate: f64) -> Result<Self> {
        Waveform::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn scaled(&self, gain: f64) -> Waveform {
        Waveform {
            samples: self.samples.iter().map(|x| x * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Sample-wise sum; lengths and rates must agree.
    pub fn add(&self, other: &Waveform) -> Result<Waveform> {
        check_compatible(self, other)?;
        Ok(Waveform {
            samples: self.samples.iter().zip(&other.samples).map(|(a, b)| a + b).collect(),
            sample_rate: self.sample_rate,
        })
    }

    /// 16-bit little-endian mono PCM; samples are clipped to [−1, 1].
    pub fn write_wav<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate.round() as u32,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(path, spec)?;
        for &x in &self.samples {
            w.write_sample((x.clamp(-1.0, 1.0) * i16::MAX as f64).round() as i16)?;
        }
        w.finalize()?;
        Ok(())
    }

    pub fn read_wav<P: AsRef<Path>>(path: P) -> Result<Self> {
        let mut r = hound::WavReader::open(path)?;
        let spec = r.spec();
        if spec.channels != 1 {
            return Err(Error::Io(format!("expected mono audio, got {} channels", spec.channels)));
        }
        let samples = match (spec.sample_format, spec.bits_per_sample) {
            (hound::SampleFormat::Int, 16) => r
                .samples::<i16>()
                .map(|s| s.map(|v| v as f64 / i16::MAX as f64))
                .collect::<std::result::Result<Vec<_>, _>>()?,
            (hound::SampleFormat::Float, 32) => r
                .samples::<f32>()
                .map(|s| s.map(|v| v as f64))
                .collect::<std::result::Result<Vec<_>, _>>()?,
            (fmt, bits) => return Err(Error::Io(format!("unsupported WAV encoding {fmt:?}/{bits}"))),
        };
        Waveform::new(samples, spec.sample_rate as f64)
    }
}

fn check_compatible(a: &Waveform, b: &Waveform) -> Result<()> {
    if a.sample_rate != b.sample_rate {
        return Err(Error::Config(format!(
            "sample rates differ: {} vs {} Hz; resample explicitly first",
            a.sample_rate, b.sample_rate
        )));
    }
    if a.len() != b.len() {
        return Err(Error::Shape(format!("waveform lengths differ: {} vs {}", a.len(), b.len())));
    }
    Ok(())
}

/// Common gain that brings the loudest of `waves` to `peak`; silence stays silent.
pub fn normalize_peak(waves: &[Waveform], peak: f64) -> Vec<Waveform> {
    let m = waves.iter().map(Waveform::peak).fold(0.0, f64::max);
    let g = if m > 0.0 { peak / m } else { 1.0 };
    waves.iter().map(|w| w.scaled(g)).collect()
}

/// `sin(2π f0 t)·exp(−(t − center)²/(2σ²))`.
pub fn gaussian_beep(f0: f64, center: f64, sigma: f64, sample_rate: f64, length: usize) -> Result<Waveform> {
    if !(f0 > 0.0 && f0 < sample_rate / 2.0) {
        return Err(Error::Domain(format!("beep at {f0} Hz is not below Nyquist {} Hz", sample_rate / 2.0)));
    }
    if !(sigma > 0.0) {
        return Err(Error::Config(format!("beep width must be positive, got {sigma}")));
    }
    let samples = (0..length)
        .map(|n| {
            let t = n as f64 / sample_rate;
            (2.0 * PI * f0 * t).sin() * (-(t - center).powi(2) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    Waveform::new(samples, sample_rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Note {
    pub frequency: f64,
    pub onset: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NoteSequence {
    pub notes: Vec<Note>,
}

impl NoteSequence {
    /// Notes played back to back from `beats` of `(frequency, length in beats)`.
    pub fn from_beats(beats: &[(f64, f64)], beat_seconds: f64) -> Self {
        let mut t = 0.0;
        let notes = beats
            .iter()
            .map(|&(frequency, b)| {
                let n = Note {
                    frequency,
                    onset: t,
                    duration: b * beat_seconds,
                };
                t += b * beat_seconds;
                n
            })
            .collect();
        NoteSequence { notes }
    }

    pub fn end(&self) -> f64 {
        self.notes.iter().map(|n| n.onset + n.duration).fold(0.0, f64::max)
    }

    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        let mut last = f64::NEG_INFINITY;
        for (i, n) in self.notes.iter().enumerate() {
            if !(n.frequency > 0.0 && n.frequency < sample_rate / 2.0) {
                return Err(Error::Domain(format!("note {i} at {} Hz is outside the band", n.frequency)));
            }
            if !(n.onset >= 0.0) || !(n.duration > 0.0) {
                return Err(Error::Config(format!("note {i} needs onset >= 0 and duration > 0")));
            }
            if n.onset < last {
                return Err(Error::Config(format!("note {i} starts before its predecessor")));
            }
            last = n.onset;
        }
        Ok(())
    }
}

/// "The C-D-E Song" on do/re/mi, 16 beats.
pub fn cde_song(beat_seconds: f64) -> NoteSequence {
    let (c, d, e) = (NOTE_DO, NOTE_RE, NOTE_MI);
    NoteSequence::from_beats(
        &[
            (c, 1.0),
            (d, 1.0),
            (e, 2.0),
            (c, 1.0),
            (d, 1.0),
            (e, 2.0),
            (e, 1.0),
            (d, 1.0),
            (c, 1.0),
            (d, 1.0),
            (e, 1.0),
            (e, 1.0),
            (e, 2.0),
        ],
        beat_seconds,
    )
}

/// "Hot Cross Buns" on mi/re/do, 16 beats.
pub fn hot_cross_buns(beat_seconds: f64) -> NoteSequence {
    let (c, d, e) = (NOTE_DO, NOTE_RE, NOTE_MI);
    let mut beats = vec![(e, 1.0), (d, 1.0), (c, 2.0), (e, 1.0), (d, 1.0), (c, 2.0)];
    beats.extend([(c, 0.5); 4]);
    beats.extend([(d, 0.5); 4]);
    beats.extend([(e, 1.0), (d, 1.0), (c, 2.0)]);
    NoteSequence::from_beats(&beats, beat_seconds)
}

/// Sum of tones, each under a half-cosine attack and release. Overlapping
/// notes add.
pub fn melody(notes: &NoteSequence, sample_rate: f64, length: usize) -> Result<Waveform> {
    notes.validate(sample_rate)?;
    let mut samples = vec![0.0; length];
    for n in &notes.notes {
        let ramp = NOTE_RAMP_SECONDS.min(n.duration / 2.0);
        let start = (n.onset * sample_rate).ceil() as usize;
        let stop = (((n.onset + n.duration) * sample_rate).ceil() as usize).min(length);
        for (k, s) in samples.iter_mut().enumerate().take(stop).skip(start) {
            let t = k as f64 / sample_rate - n.onset;
            let left = n.duration - t;
            let env = if t < ramp {
                0.5 * (1.0 - (PI * t / ramp).cos())
            } else if left < ramp {
                0.5 * (1.0 - (PI * left / ramp).cos())
            } else {
                1.0
            };
            *s += env * (2.0 * PI * n.frequency * t).sin();
        }
    }
    Waveform::new(samples, sample_rate)
}

fn linear_convolution(a: &[f64], b: &[f64], out_len: usize) -> Vec<f64> {
    let n = (a.len() + b.len()).max(2).next_power_of_two();
    let pad = |x: &[f64]| {
        let mut v = x.to_vec();
        v.resize(n, 0.0);
        v
    };
    let fa = forward_real_fft(&pad(a));
    let fb = forward_real_fft(&pad(b));
    let prod: Vec<Complex64> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    let mut y = inverse_real_fft(&prod, n);
    y.truncate(out_len);
    y
}

/// Receiver waveforms for `sources` played through the room in `config`:
/// each source is convolved with the effective impulse response of every
/// path and summed per receiver. Outputs keep the source length.
pub fn transmit(room: &VirtualRoom, config: &ArmConfiguration, sources: &[Waveform]) -> Result<Vec<Waveform>> {
    let (nr, ns) = (room.receivers(), room.sources());
    if sources.len() != ns {
        return Err(Error::Shape(format!("room has {ns} sources, got {} waveforms", sources.len())));
    }
    for s in sources {
        if s.sample_rate() != room.sample_rate() {
            return Err(Error::Config(format!(
                "source sampled at {} Hz but the room runs at {} Hz; resample explicitly first",
                s.sample_rate(),
                room.sample_rate()
            )));
        }
        check_compatible(s, &sources[0])?;
    }
    let len = sources[0].len();
    let irs = room.impulse_responses(config)?;
    (0..nr)
        .map(|i| {
            let mut acc = vec![0.0; len];
            for (j, s) in sources.iter().enumerate() {
                if s.samples().iter().all(|&x| x == 0.0) {
                    continue;
                }
                let y = linear_convolution(&irs[i * ns + j], s.samples(), len);
                acc.iter_mut().zip(&y).for_each(|(a, b)| *a += b);
            }
            Waveform::new(acc, room.sample_rate())
        })
        .collect()
}

/// One-sided spectral energy in `[f1, f2]`, from `P(f) = X(f)/fs`.
pub fn band_energy(w: &Waveform, f1: f64, f2: f64) -> Result<f64> {
    let fs = w.sample_rate();
    if !(f1 > 0.0 && f1 < f2 && f2 < fs / 2.0) {
        return Err(Error::Domain(format!("band [{f1}, {f2}] Hz must satisfy 0 < f1 < f2 < {}", fs / 2.0)));
    }
    let n = w.len();
    let df = fs / n as f64;
    let lo = (f1 / df).ceil() as usize;
    let hi = (f2 / df).floor() as usize;
    if n == 0 || lo > hi {
        return Err(Error::Domain(format!("band [{f1}, {f2}] Hz holds no DFT bin at {df} Hz spacing")));
    }
    let x = forward_real_fft(w.samples());
    Ok(x[lo..=hi].iter().map(|z| z.norm_sqr()).sum::<f64>() * 2.0 / (n as f64 * fs))
}

/// Spectrally averaged level `10·log₁₀(E/(f2 − f1))`; `−∞` for silence.
pub fn band_spl(w: &Waveform, f1: f64, f2: f64) -> Result<f64> {
    let e = band_energy(w, f1, f2)?;
    Ok(if e > 0.0 { 10.0 * (e / (f2 - f1)).log10() } else { f64::NEG_INFINITY })
}

fn xcorr_full(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = (a.len() + b.len()).max(2).next_power_of_two();
    let pad = |x: &[f64]| {
        let mut v = x.to_vec();
        v.resize(n, 0.0);
        v
    };
    let fa = forward_real_fft(&pad(a));
    let fb = forward_real_fft(&pad(b));
    let prod: Vec<Complex64> = fa.iter().zip(&fb).map(|(x, y)| x.conj() * y).collect();
    inverse_real_fft(&prod, n)
}

/// `max over lag |Σ a(t) b(t + lag)| / (‖a‖·‖b‖)`.
pub fn normalized_xcorr_peak(a: &Waveform, b: &Waveform) -> Result<f64> {
    multichannel_xcorr_peak(&[a.samples().to_vec()], &[b.samples().to_vec()])
}

/// Cross-correlation of channel sets at a common lag, normalized by the
/// total norms, so matching sets score 1.
pub fn multichannel_xcorr_peak(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape(format!("{} vs {} channels", a.len(), b.len())));
    }
    let na: f64 = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    if !(na > 0.0 && nb > 0.0) {
        return Err(Error::Domain("cross-correlation of a silent signal".into()));
    }
    let mut total: Vec<f64> = Vec::new();
    for (x, y) in a.iter().zip(b) {
        let c = xcorr_full(x, y);
        if total.len() < c.len() {
            total.resize(c.len(), 0.0);
        }
        total.iter_mut().zip(&c).for_each(|(t, v)| *t += v);
    }
    let peak = total.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    Ok((peak / (na * nb)).min(1.0))
}

/// Magnitude of the analytic signal of `w` band-passed to `f ± half_width`.
pub fn band_envelope(w: &Waveform, f: f64, half_width: f64) -> Vec<f64> {
    let n = w.len();
    if n == 0 {
        return Vec::new();
    }
    let df = w.sample_rate() / n as f64;
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex64> = w.samples().iter().map(|&x| Complex64::new(x, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, z) in buf.iter_mut().enumerate() {
        let fk = k as f64 * df;
        let keep = k > 0 && k < n.div_ceil(2) && (fk - f).abs() <= half_width;
        *z = if keep { *z * 2.0 } else { Complex64::new(0.0, 0.0) };
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|z| z.norm() / n as f64).collect()
}

/// Envelope cross-correlation over the note bands: per-note envelopes of
/// both signals are correlated at a shared lag.
pub fn note_xcorr_peak(a: &Waveform, b: &Waveform, notes: &[f64]) -> Result<f64> {
    check_compatible(a, b)?;
    let ea: Vec<Vec<f64>> = notes.iter().map(|&f| band_envelope(a, f, NOTE_BAND_HALF_WIDTH)).collect();
    let eb: Vec<Vec<f64>> = notes.iter().map(|&f| band_envelope(b, f, NOTE_BAND_HALF_WIDTH)).collect();
    multichannel_xcorr_peak(&ea, &eb)
}

mod db_serde {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Vec<f64>], s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<Option<f64>>> = v
            .iter()
            .map(|r| r.iter().map(|&x| if x.is_finite() { Some(x) } else { None }).collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Vec<f64>>, D::Error> {
        let rows: Vec<Vec<Option<f64>>> = Deserialize::deserialize(d)?;
        Ok(rows
            .into_iter()
            .map(|r| r.into_iter().map(|x| x.unwrap_or(f64::NEG_INFINITY)).collect())
            .collect())
    }
}

/// Band intensities of every source→receiver path, with the intended paths
/// marked. Silent paths read `−∞` dB (`null` in JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionReport {
    pub band: (f64, f64),
    /// `[receiver][source]`, dB.
    #[serde(with = "db_serde")]
    pub intensities_db: Vec<Vec<f64>>,
    /// `[receiver][source]`, true where the path is wanted.
    pub desired: Vec<Vec<bool>>,
    /// `[receiver][reference]` cross-correlation peaks, when references are given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xcorr_peaks: Option<Vec<Vec<f64>>>,
}

/// Desired-path mask from a target shape or preserve set, `[receiver][source]`.
pub fn desired_mask(nr: usize, ns: usize, preserve: &[(usize, usize)]) -> Vec<Vec<bool>> {
    let mut m = vec![vec![false; ns]; nr];
    for &(i, j) in preserve {
        if i < nr && j < ns {
            m[i][j] = true;
        }
    }
    m
}

/// Transmits each source alone and measures every receiver in `band`.
pub fn transmission_report(
    room: &VirtualRoom,
    config: &ArmConfiguration,
    sources: &[Waveform],
    band: (f64, f64),
    desired: Vec<Vec<bool>>,
) -> Result<TransmissionReport> {
    let (nr, ns) = (room.receivers(), room.sources());
    if desired.len() != nr || desired.iter().any(|r| r.len() != ns) {
        return Err(Error::Shape(format!("desired mask must be {nr}x{ns}")));
    }
    let silent = Waveform::silence(sources.first().map_or(0, Waveform::len), room.sample_rate())?;
    let mut intensities = vec![vec![f64::NEG_INFINITY; ns]; nr];
    for j in 0..ns {
        let solo: Vec<Waveform> = (0..ns).map(|k| if k == j { sources[k].clone() } else { silent.clone() }).collect();
        let rx = transmit(room, config, &solo)?;
        for i in 0..nr {
            intensities[i][j] = band_spl(&rx[i], band.0, band.1)?;
        }
    }
    Ok(TransmissionReport {
        band,
        intensities_db: intensities,
        desired,
        xcorr_peaks: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainReport {
    /// After minus before, `[receiver][source]`.
    #[serde(with = "db_serde")]
    pub deltas_db: Vec<Vec<f64>>,
    /// Paths silent on exactly one side, whose delta is unbounded.
    pub unbounded: Vec<(usize, usize)>,
    /// Mean dB change over desired paths.
    pub desired_gain_db: f64,
    /// Mean dB drop over unwanted paths.
    pub unwanted_suppression_db: f64,
}

pub fn intensity_gain_db(before: &TransmissionReport, after: &TransmissionReport) -> Result<GainReport> {
    let shape = |r: &TransmissionReport| (r.intensities_db.len(), r.intensities_db.first().map_or(0, Vec::len));
    if shape(before) != shape(after) || before.desired != after.desired {
        return Err(Error::Shape("reports cover different channel sets".into()));
    }
    let mut unbounded = Vec::new();
    let mut deltas = before.intensities_db.clone();
    let (mut want, mut unwant) = (Vec::new(), Vec::new());
    for (i, row) in deltas.iter_mut().enumerate() {
        for (j, d) in row.iter_mut().enumerate() {
            let (b, a) = (before.intensities_db[i][j], after.intensities_db[i][j]);
            *d = if b.is_finite() && a.is_finite() {
                a - b
            } else if b == a {
                0.0
            } else {
                unbounded.push((i, j));
                if a.is_finite() { f64::INFINITY } else { f64::NEG_INFINITY }
            };
            if before.desired[i][j] {
                want.push(*d);
            } else {
                unwant.push(-*d);
            }
        }
    }
    let avg = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    Ok(GainReport {
        deltas_db: deltas,
        unbounded,
        desired_gain_db: avg(&want),
        unwanted_suppression_db: avg(&unwant),
    })
}

/// Ensemble energy bookkeeping of channel matrices before and after optimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyRatios {
    /// Post/pre ratio of the summed desired-entry energy.
    pub desired_gain: f64,
    /// Undesired share of total energy before optimization.
    pub crosstalk_fraction_before: f64,
    pub crosstalk_fraction_after: f64,
}

pub fn energy_ratios(before: &[ChannelMatrix], after: &[ChannelMatrix], desired: &[Vec<bool>]) -> Result<EnergyRatios> {
    if before.len() != after.len() || before.is_empty() {
        return Err(Error::Shape("need matching, nonempty before/after sets".into()));
    }
    let split = |set: &[ChannelMatrix]| -> Result<(f64, f64)> {
        let (mut want, mut other) = (0.0, 0.0);
        for h in set {
            if h.nrows() != desired.len() || desired.iter().any(|r| r.len() != h.ncols()) {
                return Err(Error::Shape("mask does not fit the channel matrix".into()));
            }
            for (i, row) in desired.iter().enumerate() {
                for (j, &d) in row.iter().enumerate() {
                    let e = h.get(i, j).norm_sqr();
                    if d {
                        want += e;
                    } else {
                        other += e;
                    }
                }
            }
        }
        Ok((want, other))
    };
    let (wb, ob) = split(before)?;
    let (wa, oa) = split(after)?;
    if !(wb > 0.0) || !(wa + oa > 0.0) {
        return Err(Error::DegenerateMatrix("zero desired energy before optimization".into()));
    }
    Ok(EnergyRatios {
        desired_gain: wa / wb,
        crosstalk_fraction_before: ob / (wb + ob),
        crosstalk_fraction_after: oa / (wa + oa),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::room::{RoomSpec, TransferFunction};
    use rand::Rng;
    use rand_distr::StandardNormal;

    const FS: f64 = 16_000.0;

    fn fixture(gain11: f64) -> VirtualRoom {
        let spec = RoomSpec {
            units: 1,
            coupling_ratio: 0.0,
            ..Default::default()
        };
        let len = spec.effective_ir_length();
        let bins = len / 2 + 1;
        let flat = |g: f64| TransferFunction::from_half_spectrum(vec![Complex64::new(g, 0.0); bins], len, FS).unwrap();
        VirtualRoom::from_banks(
            &spec,
            vec![flat(gain11), flat(0.0), flat(0.0), flat(1.0)],
            vec![flat(0.0), flat(0.0)],
            vec![flat(0.0), flat(0.0)],
        )
        .unwrap()
    }

    fn noise(seed: u64, n: usize) -> Waveform {
        let mut rng = stream(seed, 0);
        Waveform::new((0..n).map(|_| rng.sample(StandardNormal)).collect(), FS).unwrap()
    }

    #[test]
    fn beep_shape() {
        let b = gaussian_beep(1300.0, 0.3, 0.05, FS, 16_000).unwrap();
        assert!(b.peak() <= 1.0);
        let k = (0.3 * FS) as usize;
        assert!((b.samples()[k] - (2.0 * PI * 1300.0 * 0.3).sin()).abs() < 1e-12);
        assert!(gaussian_beep(9000.0, 0.3, 0.05, FS, 100).is_err());
        // Two beeps 5σ apart overlap below −60 dB at the midpoint.
        let mid = (-(0.25f64).powi(2) / (2.0 * 0.05f64.powi(2))).exp();
        assert!(20.0 * mid.log10() < -60.0);
    }

    #[test]
    fn beep_spectral_peak() {
        let b = gaussian_beep(1300.0, 0.5, 0.05, FS, 16_000).unwrap();
        let x = forward_real_fft(b.samples());
        let k = (0..x.len()).max_by(|&i, &j| x[i].norm().total_cmp(&x[j].norm())).unwrap();
        assert!((k as f64 - 1300.0).abs() <= 1.0 / (2.0 * PI * 0.05));
    }

    #[test]
    fn melody_spectrum_has_three_peaks() {
        assert!(melody(&NoteSequence::default(), FS, 100).unwrap().samples().iter().all(|&x| x == 0.0));
        let m = melody(&cde_song(0.25), FS, 64_000).unwrap();
        let x = forward_real_fft(m.samples());
        let df = FS / 64_000.0;
        let peak = x.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let floor = peak * 0.01;
        for (k, z) in x.iter().enumerate() {
            if z.norm() > floor {
                let f = k as f64 * df;
                let near = [NOTE_DO, NOTE_RE, NOTE_MI].iter().any(|&n| (f - n).abs() < 60.0);
                assert!(near, "component at {f} Hz above -40 dB");
            }
        }
        assert!(cde_song(0.25).end() == 4.0 && hot_cross_buns(0.25).end() == 4.0);
    }

    #[test]
    fn single_note_envelope() {
        let seq = NoteSequence {
            notes: vec![Note {
                frequency: 1000.0,
                onset: 0.1,
                duration: 0.2,
            }],
        };
        let m = melody(&seq, FS, 8000).unwrap();
        assert_eq!(m.samples()[1000], 0.0);
        let k = 2400;
        let t = k as f64 / FS - 0.1;
        assert!((m.samples()[k] - (2.0 * PI * 1000.0 * t).sin()).abs() < 1e-12);
        assert!(m.samples()[4900..].iter().all(|&x| x == 0.0));
        let bad = NoteSequence {
            notes: vec![Note { onset: 0.5, ..seq.notes[0] }, seq.notes[0]],
        };
        assert!(melody(&bad, FS, 10).is_err());
    }

    #[test]
    fn identity_room_passes_sources_through() {
        let room = fixture(1.0);
        let s = [noise(1, 5000), noise(2, 5000)];
        let rx = transmit(&room, &ArmConfiguration::zeros(1), &s).unwrap();
        for (r, src) in rx.iter().zip(&s) {
            for (a, b) in r.samples().iter().zip(src.samples()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn doubled_path_adds_six_db() {
        let s = [gaussian_beep(1300.0, 0.4, 0.1, FS, 16_000).unwrap(), Waveform::silence(16_000, FS).unwrap()];
        let a = transmit(&fixture(1.0), &ArmConfiguration::zeros(1), &s).unwrap();
        let b = transmit(&fixture(2.0), &ArmConfiguration::zeros(1), &s).unwrap();
        let d = band_spl(&b[0], 1298.0, 1302.0).unwrap() - band_spl(&a[0], 1298.0, 1302.0).unwrap();
        assert!((d - 20.0 * 2f64.log10()).abs() < 1e-9);
        assert_eq!(band_spl(&a[1], 1298.0, 1302.0).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn transmit_refuses_mismatched_rates() {
        let room = fixture(1.0);
        let s = [Waveform::silence(100, 8000.0).unwrap(), Waveform::silence(100, 8000.0).unwrap()];
        assert!(matches!(transmit(&room, &ArmConfiguration::zeros(1), &s), Err(Error::Config(_))));
        assert!(transmit(&room, &ArmConfiguration::zeros(1), &s[..1]).is_err());
    }

    #[test]
    fn spl_scaling_and_white_noise() {
        let w = noise(3, 160_000);
        let a = band_spl(&w, 1000.0, 2000.0).unwrap();
        let b = band_spl(&w.scaled(10.0), 1000.0, 2000.0).unwrap();
        assert!((b - a - 20.0).abs() < 1e-9);
        let c = band_spl(&w, 2000.0, 3000.0).unwrap();
        assert!((a - c).abs() < 1.0);
        assert!(band_spl(&w, 2000.0, 1000.0).is_err());
        assert!(band_spl(&Waveform::silence(16, FS).unwrap(), 100.0, 200.0).is_err());
    }

    #[test]
    fn parseval_on_bin_centred_tone() {
        let n = 16_000;
        let w = Waveform::new((0..n).map(|k| (2.0 * PI * 1250.0 * k as f64 / FS).sin()).collect(), FS).unwrap();
        let spectral = band_energy(&w, 1200.0, 1300.0).unwrap();
        let temporal = w.energy() / FS;
        assert!((spectral / temporal - 1.0).abs() < 1e-9);
    }

    #[test]
    fn xcorr_properties() {
        let a = noise(4, 20_000);
        assert!((normalized_xcorr_peak(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        let b = noise(5, 20_000);
        assert!(normalized_xcorr_peak(&a, &b).unwrap() < 0.05);
        let silent = Waveform::silence(20_000, FS).unwrap();
        assert!(normalized_xcorr_peak(&a, &silent).is_err());
        let mut shifted = vec![0.0; 300];
        shifted.extend_from_slice(&a.samples()[..19_700]);
        let s = Waveform::new(shifted, FS).unwrap();
        assert!(normalized_xcorr_peak(&a, &s).unwrap() > 0.98);
    }

    #[test]
    fn note_envelopes_separate_pieces() {
        let a = melody(&cde_song(0.25), FS, 64_000).unwrap();
        let b = melody(&hot_cross_buns(0.25), FS, 64_000).unwrap();
        let notes = [NOTE_DO, NOTE_RE, NOTE_MI];
        assert!((note_xcorr_peak(&a, &a, &notes).unwrap() - 1.0).abs() < 1e-9);
        assert!(note_xcorr_peak(&a, &b, &notes).unwrap() < 0.8);
    }

    #[test]
    fn gain_report() {
        let r = TransmissionReport {
            band: (1.0, 2.0),
            intensities_db: vec![vec![0.0, -3.0], vec![f64::NEG_INFINITY, 1.0]],
            desired: desired_mask(2, 2, &[(0, 0), (1, 1)]),
            xcorr_peaks: None,
        };
        let same = intensity_gain_db(&r, &r).unwrap();
        assert!(same.deltas_db.iter().flatten().all(|&d| d == 0.0));
        let mut after = r.clone();
        after.intensities_db = vec![vec![2.0, -23.0], vec![-10.0, 3.0]];
        let g = intensity_gain_db(&r, &after).unwrap();
        assert_eq!(g.desired_gain_db, 2.0);
        assert_eq!(g.unbounded, vec![(1, 0)]);
        let json = serde_json::to_string(&r).unwrap();
        let back: TransmissionReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn energy_ratio_bookkeeping() {
        let before = [ChannelMatrix::from_real_rows(&[&[1.0, 1.0], &[1.0, 1.0]]).unwrap()];
        let after = [ChannelMatrix::from_real_rows(&[&[2.0, 0.1], &[0.0, 2.0]]).unwrap()];
        let e = energy_ratios(&before, &after, &desired_mask(2, 2, &[(0, 0), (1, 1)])).unwrap();
        assert!((e.desired_gain - 4.0).abs() < 1e-12);
        assert!((e.crosstalk_fraction_before - 0.5).abs() < 1e-12);
        assert!((e.crosstalk_fraction_after - 0.01 / 8.01).abs() < 1e-12);
    }
}
