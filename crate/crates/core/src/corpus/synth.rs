//! Synthetic multi-device corpus.
//!
//! Each synthetic device records the same kind of speech-like foreground (a
//! sum of amplitude-modulated band-limited tones, drawn from one shared
//! distribution) plus a device-specific background noise: seeded white noise
//! shaped by a per-device second-order IIR coloration filter at a per-device
//! gain. The filter resonance is what a classifier must learn; several
//! resonances sit inside the speech band so the raw (no noise extraction)
//! pipeline has a harder task than the noise pipeline.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::corpus::manifest::{Manifest, ManifestEntry, Role};
use crate::corpus::{wav, CorpusSpec};
use crate::error::Result;
use crate::seeding::{derive_seed, rng_from_seed};

/// Sample rate of every synthesized recording.
pub const SYNTH_SAMPLE_RATE: u32 = 16_000;

/// Shortest synthesized recording: six minutes.
const MIN_RECORDING_SAMPLES: usize = 360 * SYNTH_SAMPLE_RATE as usize;
/// Recordings vary up to one extra minute in length.
const LENGTH_JITTER_SAMPLES: u64 = 60 * SYNTH_SAMPLE_RATE as u64;

const SPEECH_TONES: usize = 32;
const SPEECH_BAND_LOW_HZ: f64 = 100.0;
const SPEECH_BAND_HIGH_HZ: f64 = 2_000.0;

/// Base RMS of the coloured device noise, in full-scale units. Kept well
/// below the speech level so the noise is a background trace, and small
/// enough that log-magnitude noise features stay in a numerically tame range.
const NOISE_BASE_RMS: f64 = 0.0005;

// Seed-path tags, one per random stream.
const TAG_SPEECH: u64 = 1;
const TAG_NOISE: u64 = 2;
const TAG_LENGTH: u64 = 3;

/// Second-order IIR section, direct form I.
#[derive(Debug, Clone)]
struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
    x1: f64,
    x2: f64,
    y1: f64,
    y2: f64,
}

impl Biquad {
    /// Conjugate pole pair at (`pole_hz`, `pole_radius`) and zero pair at
    /// (`zero_hz`, `zero_radius`).
    fn from_pole_zero(pole_hz: f64, pole_radius: f64, zero_hz: f64, zero_radius: f64) -> Self {
        let wp = 2.0 * PI * pole_hz / f64::from(SYNTH_SAMPLE_RATE);
        let wz = 2.0 * PI * zero_hz / f64::from(SYNTH_SAMPLE_RATE);
        Biquad {
            b0: 1.0,
            b1: -2.0 * zero_radius * wz.cos(),
            b2: zero_radius * zero_radius,
            a1: -2.0 * pole_radius * wp.cos(),
            a2: pole_radius * pole_radius,
            x1: 0.0,
            x2: 0.0,
            y1: 0.0,
            y2: 0.0,
        }
    }

    fn process(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.b1 * self.x1 + self.b2 * self.x2
            - self.a1 * self.y1
            - self.a2 * self.y2;
        self.x2 = self.x1;
        self.x1 = x;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }

    /// Magnitude response at one angular frequency.
    fn response_at(&self, omega: f64) -> f64 {
        let (c1, s1) = (omega.cos(), omega.sin());
        let (c2, s2) = ((2.0 * omega).cos(), (2.0 * omega).sin());
        let num_re = self.b0 + self.b1 * c1 + self.b2 * c2;
        let num_im = -(self.b1 * s1 + self.b2 * s2);
        let den_re = 1.0 + self.a1 * c1 + self.a2 * c2;
        let den_im = -(self.a1 * s1 + self.a2 * s2);
        ((num_re * num_re + num_im * num_im) / (den_re * den_re + den_im * den_im)).sqrt()
    }

    /// Median response over the upper half of the spectrum. Normalizing by
    /// a median keeps every device's off-resonance floor at the same level
    /// (the resonance bump itself is too narrow to move a median), so what
    /// separates devices is where the bump sits, not a loudness offset.
    fn floor_level(&self) -> f64 {
        let grid = 255;
        let mut responses: Vec<f64> = (0..grid)
            .map(|i| {
                let omega = std::f64::consts::PI * (0.5 + 0.5 * (i as f64 + 0.5) / grid as f64);
                self.response_at(omega)
            })
            .collect();
        responses.sort_by(|a, b| a.partial_cmp(b).expect("finite response"));
        responses[grid / 2]
    }
}

/// Coloration parameters of one synthetic device.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceColoration {
    pub pole_hz: f64,
    pub pole_radius: f64,
    pub zero_hz: f64,
    pub zero_radius: f64,
    pub noise_rms: f64,
}

/// Fractional part of `(k+1)` times an irrational constant; spreads device
/// parameters over their range without clustering at the ends.
fn spread(k: usize, irrational: f64) -> f64 {
    ((k as f64 + 1.0) * irrational).fract()
}

/// Deterministic per-device filter placement.
///
/// Every pole sits inside the speech band with a broad radius, so the bulk
/// of what separates one device from another is a wide spectral bump under
/// the foreground; the zero pair is shared, keeping the high band similar
/// across devices. Raw spectra therefore blur the distinction while
/// extracted noise keeps it.
pub fn device_coloration(device: usize) -> DeviceColoration {
    const PHI: f64 = 0.618_033_988_749_894_9;
    DeviceColoration {
        // Resonances sit above the speech band, where the wavelet residual
        // passes the noise through faithfully; inside the speech band the
        // soft threshold flattens everything to the leak level and a
        // coloration there would vanish from the features.
        pole_hz: 4_200.0 + 3_400.0 * spread(device, PHI),
        pole_radius: 0.88 + 0.08 * spread(device, PHI * PHI),
        zero_hz: 1_200.0,
        zero_radius: 0.5,
        noise_rms: NOISE_BASE_RMS * (0.9 + 0.2 * spread(device, 0.145_898_033_75)),
    }
}

/// Unit-magnitude complex oscillator advanced by one rotation per sample.
struct Oscillator {
    re: f64,
    im: f64,
    rot_re: f64,
    rot_im: f64,
}

impl Oscillator {
    fn new(freq_hz: f64, phase: f64) -> Self {
        let w = 2.0 * PI * freq_hz / f64::from(SYNTH_SAMPLE_RATE);
        Oscillator {
            re: phase.cos(),
            im: phase.sin(),
            rot_re: w.cos(),
            rot_im: w.sin(),
        }
    }

    #[inline]
    fn step(&mut self) -> f64 {
        let out = self.im;
        let re = self.re * self.rot_re - self.im * self.rot_im;
        let im = self.re * self.rot_im + self.im * self.rot_re;
        self.re = re;
        self.im = im;
        out
    }

    #[inline]
    fn renormalize(&mut self) {
        let mag = (self.re * self.re + self.im * self.im).sqrt();
        self.re /= mag;
        self.im /= mag;
    }
}

struct Tone {
    carrier: Oscillator,
    envelope: Oscillator,
    /// Raised-cosine attack/decay over the hold, so hops are click-free.
    window: Oscillator,
    amplitude: f64,
    depth: f64,
    hold_left: usize,
}

/// Speech-like foreground: the same generation process for every device,
/// with per-recording parameter draws. Each voice holds one tone for a
/// random fraction of a second under a raised-cosine attack/decay window,
/// then hops to a new frequency, the way spoken content keeps moving; no
/// single segment's spectrum repeats.
fn render_speech(seed: u64, n_samples: usize) -> Vec<f64> {
    let fs = f64::from(SYNTH_SAMPLE_RATE);
    let mut rng = rng_from_seed(seed);
    let new_tone = |rng: &mut rand_chacha::ChaCha8Rng| {
        let freq = rng.random_range(SPEECH_BAND_LOW_HZ..SPEECH_BAND_HIGH_HZ);
        let amplitude = rng.random_range(0.003..0.009);
        let phase = rng.random_range(0.0..2.0 * PI);
        let am_rate = rng.random_range(0.5..40.0);
        let am_phase = rng.random_range(0.0..2.0 * PI);
        let depth = rng.random_range(0.3..0.9);
        let hold_left = (rng.random_range(0.25..1.5) * fs) as usize;
        // One full cosine cycle over the hold: zero at both ends.
        let window_rate = fs / hold_left as f64;
        Tone {
            carrier: Oscillator::new(freq, phase),
            envelope: Oscillator::new(am_rate, am_phase),
            window: Oscillator::new(window_rate, -std::f64::consts::FRAC_PI_2),
            amplitude,
            depth,
            hold_left,
        }
    };
    let mut tones: Vec<Tone> = (0..SPEECH_TONES).map(|_| new_tone(&mut rng)).collect();

    let mut out = vec![0.0; n_samples];
    for (i, slot) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for tone in &mut tones {
            if tone.hold_left == 0 {
                *tone = new_tone(&mut rng);
            }
            tone.hold_left -= 1;
            let env = 1.0 - tone.depth * (0.5 + 0.5 * tone.envelope.step());
            let window = 0.5 + 0.5 * tone.window.step();
            acc += tone.amplitude * window * env * tone.carrier.step();
        }
        *slot = acc;
        if i % 65_536 == 65_535 {
            for tone in &mut tones {
                tone.carrier.renormalize();
                tone.envelope.renormalize();
                tone.window.renormalize();
            }
        }
    }
    out
}

/// Device background: seeded white noise through the device's coloration
/// filter, scaled to the device's noise RMS.
fn render_noise(seed: u64, device: usize, n_samples: usize) -> Vec<f64> {
    let col = device_coloration(device);
    let mut filter = Biquad::from_pole_zero(
        col.pole_hz,
        col.pole_radius,
        col.zero_hz,
        col.zero_radius,
    );
    let gain = col.noise_rms / filter.floor_level();
    let mut rng = rng_from_seed(seed);
    (0..n_samples)
        .map(|_| {
            let white: f64 = rng.sample(StandardNormal);
            gain * filter.process(white)
        })
        .collect()
}

fn render_recording(base_seed: u64, device: usize, rec: usize) -> Vec<f64> {
    let d = device as u64;
    let r = rec as u64;
    let len_seed = derive_seed(base_seed, &[TAG_LENGTH, d, r]);
    let n_samples = MIN_RECORDING_SAMPLES + (len_seed % LENGTH_JITTER_SAMPLES) as usize;

    let speech = render_speech(derive_seed(base_seed, &[TAG_SPEECH, d, r]), n_samples);
    let noise = render_noise(derive_seed(base_seed, &[TAG_NOISE, d, r]), device, n_samples);
    speech
        .into_iter()
        .zip(noise)
        .map(|(s, e)| s + e)
        .collect()
}

/// Synthesizes the corpus into `out_dir` and writes `manifest.tsv` there.
/// Fully deterministic: the same spec always produces byte-identical files.
pub fn synth_corpus(spec: &CorpusSpec, out_dir: &Path) -> Result<PathBuf> {
    spec.validate()?;
    std::fs::create_dir_all(out_dir)?;

    let recordings_per_device = spec.recordings_per_device_train + spec.recordings_per_device_test;
    let mut jobs = Vec::new();
    for device in 0..spec.device_count {
        for rec in 0..recordings_per_device {
            let role = if rec < spec.recordings_per_device_train {
                Role::Train
            } else {
                Role::Test
            };
            let name = format!("device{device:02}_rec{rec}_{role}.wav");
            jobs.push((device, rec, role, name));
        }
    }

    jobs.par_iter()
        .try_for_each(|(device, rec, _role, name)| -> Result<()> {
            let samples = render_recording(spec.seed, *device, *rec);
            wav::write_wav(&out_dir.join(name), &samples, SYNTH_SAMPLE_RATE)
        })?;

    let manifest = Manifest {
        entries: jobs
            .into_iter()
            .map(|(device, _rec, role, name)| ManifestEntry {
                relative_path: PathBuf::from(name),
                device_label: device as u16,
                role,
            })
            .collect(),
    };
    let manifest_path = out_dir.join("manifest.tsv");
    manifest.write(&manifest_path)?;
    Ok(manifest_path)
}
