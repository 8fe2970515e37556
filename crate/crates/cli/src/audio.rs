//! Audio verification: source programmes, pre/post transmission and replay.

use std::path::Path;

use chanshape::room::{ArmConfiguration, VirtualRoom};
use chanshape::signal::{
    cde_song, gaussian_beep, hot_cross_buns, intensity_gain_db, melody, normalize_peak, note_xcorr_peak,
    transmission_report, transmit, GainReport, TransmissionReport, Waveform, NOTE_DO, NOTE_MI, NOTE_RE,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::scenario::{AudioSignal, AudioSpec, ResolvedScenario};

/// Trailing silence after the last note, seconds.
const MELODY_TAIL: f64 = 0.5;
const WAV_PEAK: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandOutcome {
    pub frequency: f64,
    pub pre: TransmissionReport,
    pub post: TransmissionReport,
    pub gain: GainReport,
}

/// Receiver-to-piece envelope correlations, `[receiver][piece]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MelodyCorrelation {
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioOutcome {
    pub bands: Vec<BandOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xcorr: Option<MelodyCorrelation>,
}

/// One waveform per source.
pub fn source_waveforms(scn: &ResolvedScenario, audio: &AudioSpec) -> Result<Vec<Waveform>, CliError> {
    let fs = scn.room.sample_rate;
    let ns = scn.room.sources;
    match audio.signal {
        AudioSignal::Beeps => {
            let len = (audio.beep_duration(ns) * fs).ceil() as usize;
            let freqs = scn.objective().frequencies();
            audio
                .centers(ns)
                .iter()
                .map(|&c| {
                    let mut w = Waveform::silence(len, fs)?;
                    for &f in &freqs {
                        w = w.add(&gaussian_beep(f, c, audio.beep_sigma, fs, len)?)?;
                    }
                    Ok(w)
                })
                .collect()
        }
        AudioSignal::Melodies => {
            let pieces = [cde_song(audio.beat_seconds), hot_cross_buns(audio.beat_seconds)];
            let end = pieces.iter().map(|p| p.end()).fold(0.0, f64::max);
            let len = ((end + MELODY_TAIL) * fs).ceil() as usize;
            Ok(pieces.iter().map(|p| melody(p, fs, len)).collect::<Result<_, _>>()?)
        }
    }
}

pub fn outcome(
    scn: &ResolvedScenario,
    audio: &AudioSpec,
    room: &VirtualRoom,
    post: &ArmConfiguration,
) -> Result<AudioOutcome, CliError> {
    let sources = source_waveforms(scn, audio)?;
    let pre = ArmConfiguration::zeros(room.units());
    let mut bands = Vec::new();
    for (f, mask) in scn.desired_paths() {
        let band = (f - audio.band_half_width, f + audio.band_half_width);
        let a = transmission_report(room, &pre, &sources, band, mask.clone())?;
        let b = transmission_report(room, post, &sources, band, mask)?;
        let gain = intensity_gain_db(&a, &b)?;
        bands.push(BandOutcome {
            frequency: f,
            pre: a,
            post: b,
            gain,
        });
    }
    let xcorr = match audio.signal {
        AudioSignal::Melodies => Some(MelodyCorrelation {
            pre: melody_correlation(room, &pre, &sources)?,
            post: melody_correlation(room, post, &sources)?,
        }),
        AudioSignal::Beeps => None,
    };
    Ok(AudioOutcome { bands, xcorr })
}

fn melody_correlation(
    room: &VirtualRoom,
    config: &ArmConfiguration,
    sources: &[Waveform],
) -> Result<Vec<Vec<f64>>, CliError> {
    let rx = transmit(room, config, sources)?;
    let notes = [NOTE_DO, NOTE_RE, NOTE_MI];
    rx.iter()
        .map(|r| sources.iter().map(|s| Ok(note_xcorr_peak(r, s, &notes)?)).collect())
        .collect()
}

/// Writes sources and pre/post receiver signals as WAV files. Receivers share
/// one gain so pre and post levels stay comparable.
pub fn write_wavs(
    dir: &Path,
    room: &VirtualRoom,
    post: &ArmConfiguration,
    sources: &[Waveform],
) -> Result<Vec<String>, CliError> {
    std::fs::create_dir_all(dir)?;
    let pre = ArmConfiguration::zeros(room.units());
    let rx_pre = transmit(room, &pre, sources)?;
    let rx_post = transmit(room, post, sources)?;
    let mut written = Vec::new();
    let src_names: Vec<String> = (0..sources.len()).map(|j| format!("source{j}.wav")).collect();
    let mut rx_names = Vec::new();
    let mut rx_all = Vec::new();
    for (tag, set) in [("pre", rx_pre), ("post", rx_post)] {
        for (i, w) in set.into_iter().enumerate() {
            rx_names.push(format!("receiver{i}_{tag}.wav"));
            rx_all.push(w);
        }
    }
    for (names, waves) in [(src_names, normalize_peak(sources, WAV_PEAK)), (rx_names, normalize_peak(&rx_all, WAV_PEAK))] {
        for (name, w) in names.into_iter().zip(waves) {
            w.write_wav(dir.join(&name))?;
            written.push(name);
        }
    }
    Ok(written)
}
