//! Parametric FMCW range-bin model and contrast-based defect classification.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::canonical;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FmcwError {
    #[error("distance {distance_cm} cm is outside the {bins}-bin range")]
    OutOfRange { distance_cm: f64, bins: usize },
    #[error("trace has no chirps")]
    EmptyTrace,
    #[error("trace and baseline were acquired with different configurations")]
    ConfigMismatch,
    #[error("duplicate segment id {0}")]
    DuplicateSegment(String),
    #[error("invalid sweep: {0}")]
    InvalidSweep(&'static str),
    #[error("invalid material: {0}")]
    InvalidMaterial(&'static str),
    #[error("archive line {line}: {reason}")]
    Archive { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub f0_ghz: f64,
    pub f1_ghz: f64,
    pub chirp_ms: f64,
    pub bins: usize,
    pub bin_width_cm: f64,
    pub acquisition_s: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            f0_ghz: 24.0,
            f1_ghz: 25.5,
            chirp_ms: 300.0,
            bins: 64,
            bin_width_cm: 10.0 / 9.0,
            acquisition_s: 30.0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), FmcwError> {
        // written so that NaN fails every check
        let positive = |x: f64| x > 0.0;
        if !positive(self.f1_ghz - self.f0_ghz) {
            return Err(FmcwError::InvalidSweep("f1 must exceed f0"));
        }
        if self.bins < 16 {
            return Err(FmcwError::InvalidSweep("at least 16 bins required"));
        }
        if ![self.bin_width_cm, self.chirp_ms, self.acquisition_s].into_iter().all(positive) {
            return Err(FmcwError::InvalidSweep("widths and durations must be positive"));
        }
        Ok(())
    }

    pub fn chirps(&self) -> usize {
        ((self.acquisition_s * 1000.0 / self.chirp_ms).round() as usize).max(1)
    }

    pub fn bin_of(&self, distance_cm: f64) -> Result<usize, FmcwError> {
        let b = (distance_cm / self.bin_width_cm).round();
        if !distance_cm.is_finite() || distance_cm < 0.0 || b >= self.bins as f64 {
            return Err(FmcwError::OutOfRange {
                distance_cm,
                bins: self.bins,
            });
        }
        Ok(b as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Defect {
    None,
    Corrosion,
    /// Interior (type 4) delamination.
    Delamination,
    WaterIngress { onset_s: f64, delta: f64 },
}

impl Defect {
    /// Relative amplitude change applied to the peak return at time `t_s`.
    pub fn factor(&self, t_s: f64) -> f64 {
        match *self {
            Defect::None => 0.0,
            Defect::Corrosion => CORROSION_FACTOR,
            Defect::Delamination => DELAMINATION_FACTOR,
            Defect::WaterIngress { onset_s, delta } => {
                if t_s >= onset_s {
                    delta
                } else {
                    0.0
                }
            }
        }
    }
}

const CORROSION_FACTOR: f64 = -0.92;
const DELAMINATION_FACTOR: f64 = -0.7;
/// Sidelobe levels at one and two bins from the peak.
const SIDELOBES: [f64; 2] = [0.3, 0.1];
const NOISE_FLOOR: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialProfile {
    pub name: String,
    pub reflectivity: f64,
    pub defect: Defect,
}

impl MaterialProfile {
    pub fn new(name: &str, reflectivity: f64) -> Self {
        Self {
            name: name.into(),
            reflectivity,
            defect: Defect::None,
        }
    }

    pub fn with_defect(mut self, defect: Defect) -> Self {
        self.defect = defect;
        self
    }

    pub fn aluminum() -> Self {
        Self::new("aluminum", 2.0e5)
    }
    pub fn clean_steel() -> Self {
        Self::new("clean-steel", 1.2e5)
    }
    pub fn corroded_steel() -> Self {
        Self::new("corroded-steel", 1.0e4)
    }
    pub fn concrete() -> Self {
        Self::new("concrete", 8.0e3)
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "aluminum" => Some(Self::aluminum()),
            "clean-steel" => Some(Self::clean_steel()),
            "corroded-steel" => Some(Self::corroded_steel()),
            "concrete" => Some(Self::concrete()),
            _ => None,
        }
    }

    fn validate(&self) -> Result<(), FmcwError> {
        if !(self.reflectivity > 0.0 && self.reflectivity.is_finite()) {
            return Err(FmcwError::InvalidMaterial("reflectivity must be positive"));
        }
        if let Defect::WaterIngress { delta, .. } = self.defect {
            if !(delta > -1.0 && delta.is_finite()) {
                return Err(FmcwError::InvalidMaterial("delta must exceed -1"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanTrace {
    pub sweep: SweepConfig,
    pub target: String,
    pub timestamps_s: Vec<f64>,
    pub chirps: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScanOptions {
    pub seed: u64,
    pub noise_sigma: f64,
    /// Sim-time of the first chirp, seconds.
    pub start_s: f64,
}

pub fn simulate_scan(
    material: &MaterialProfile,
    distance_cm: f64,
    sweep: &SweepConfig,
    opts: ScanOptions,
) -> Result<ScanTrace, FmcwError> {
    sweep.validate()?;
    material.validate()?;
    let peak = sweep.bin_of(distance_cm)?;
    let noise = Normal::new(0.0, opts.noise_sigma.max(0.0)).expect("finite sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n = sweep.chirps();
    let mut timestamps_s = Vec::with_capacity(n);
    let mut chirps = Vec::with_capacity(n);
    for k in 0..n {
        let t = opts.start_s + k as f64 * sweep.chirp_ms / 1000.0;
        let amp = material.reflectivity * (1.0 + material.defect.factor(t));
        let mut row = vec![NOISE_FLOOR; sweep.bins];
        row[peak] = amp;
        for (i, level) in SIDELOBES.iter().enumerate() {
            let off = i + 1;
            for b in [peak.checked_sub(off), Some(peak + off)].into_iter().flatten() {
                if b < sweep.bins {
                    row[b] = (amp * level).max(NOISE_FLOOR);
                }
            }
        }
        if opts.noise_sigma > 0.0 {
            for v in &mut row {
                *v = (*v + noise.sample(&mut rng)).max(0.0);
            }
        }
        timestamps_s.push(t);
        chirps.push(row);
    }
    Ok(ScanTrace {
        sweep: *sweep,
        target: material.name.clone(),
        timestamps_s,
        chirps,
    })
}

fn mean_profile(trace: &ScanTrace) -> Result<Vec<f64>, FmcwError> {
    let first = trace.chirps.first().ok_or(FmcwError::EmptyTrace)?;
    let mut acc = vec![0.0; first.len()];
    for row in &trace.chirps {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    let n = trace.chirps.len() as f64;
    Ok(acc.into_iter().map(|a| a / n).collect())
}

/// Argmax of the chirp-averaged profile; ties go to the lower bin.
pub fn peak_bin(trace: &ScanTrace) -> Result<(usize, f64), FmcwError> {
    let mean = mean_profile(trace)?;
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &v) in mean.iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    Healthy,
    Corrosion,
    WaterIngress,
    Delamination,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Healthy => "healthy",
            Classification::Corrosion => "corrosion",
            Classification::WaterIngress => "water-ingress",
            Classification::Delamination => "delamination",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyResult {
    pub class: Classification,
    pub contrast: f64,
    /// Largest within-trace step as post/pre peak amplitude ratio.
    pub step: f64,
}

pub const CORROSION_CONTRAST: f64 = 10.0;
pub const DELAMINATION_CONTRAST: f64 = 2.0;
/// Step rule: the larger segment mean exceeds the smaller by at least half.
pub const STEP_FRACTION: f64 = 0.5;
const MIN_SEGMENT: usize = 5;

/// Largest mean-shift split of a series, as post/pre ratio.
fn largest_step(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 2 * MIN_SEGMENT {
        return 1.0;
    }
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in series {
        prefix.push(prefix.last().unwrap() + v);
    }
    let total = prefix[n];
    let mut best = 1.0;
    let mut best_mag = 1.0;
    for (k, &head) in prefix.iter().enumerate().take(n - MIN_SEGMENT + 1).skip(MIN_SEGMENT) {
        let pre = head / k as f64;
        let post = (total - head) / (n - k) as f64;
        let (lo, hi) = if pre < post { (pre, post) } else { (post, pre) };
        let mag = if lo > 0.0 { hi / lo } else if hi > 0.0 { f64::INFINITY } else { 1.0 };
        if mag > best_mag {
            best_mag = mag;
            best = if pre > 0.0 { post / pre } else { f64::INFINITY };
        }
    }
    best
}

fn step_magnitude(ratio: f64) -> f64 {
    if ratio >= 1.0 {
        ratio
    } else if ratio > 0.0 {
        1.0 / ratio
    } else {
        f64::INFINITY
    }
}

/// Compares a trace against a healthy baseline at the same geometry.
///
/// Rules in order: contrast ≥ 10 is corrosion; a within-trace step whose
/// larger side exceeds the smaller by ≥ 50 % (and that the baseline does not
/// share) is water ingress; 2 ≤ contrast < 10 is delamination.
pub fn classify(trace: &ScanTrace, baseline: &ScanTrace) -> Result<ClassifyResult, FmcwError> {
    if trace.sweep != baseline.sweep {
        return Err(FmcwError::ConfigMismatch);
    }
    let (tb, ta) = peak_bin(trace)?;
    let (bb, ba) = peak_bin(baseline)?;
    if tb.abs_diff(bb) > 1 {
        return Err(FmcwError::ConfigMismatch);
    }
    let contrast = if ta > 0.0 { ba / ta } else { f64::INFINITY };
    let series = |t: &ScanTrace, bin: usize| -> Vec<f64> { t.chirps.iter().map(|c| c[bin]).collect() };
    let step = largest_step(&series(trace, tb));
    let base_step = largest_step(&series(baseline, bb));
    let stepped = |r: f64| step_magnitude(r) >= 1.0 + STEP_FRACTION;

    let class = if contrast >= CORROSION_CONTRAST {
        Classification::Corrosion
    } else if stepped(step) && !stepped(base_step) {
        Classification::WaterIngress
    } else if contrast >= DELAMINATION_CONTRAST {
        Classification::Delamination
    } else {
        Classification::Healthy
    };
    Ok(ClassifyResult {
        class,
        contrast,
        step,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentStatus {
    Healthy,
    Defective,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AidSegment {
    pub id: String,
    pub status: SegmentStatus,
    pub class: Classification,
    pub contrast: f64,
    pub trace: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AidReport {
    pub asset: String,
    pub segments: Vec<AidSegment>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanEntry {
    pub segment: String,
    pub class: Classification,
    pub contrast: f64,
    pub trace: String,
}

impl ScanEntry {
    pub fn new(segment: &str, class: Classification, contrast: f64) -> Self {
        Self {
            segment: segment.into(),
            class,
            contrast,
            trace: String::new(),
        }
    }
}

pub fn aid_report(asset: &str, scans: &[ScanEntry]) -> Result<AidReport, FmcwError> {
    let mut seen = BTreeSet::new();
    let mut segments = Vec::with_capacity(scans.len());
    for s in scans {
        if !seen.insert(s.segment.as_str()) {
            return Err(FmcwError::DuplicateSegment(s.segment.clone()));
        }
        segments.push(AidSegment {
            id: s.segment.clone(),
            status: if s.class == Classification::Healthy {
                SegmentStatus::Healthy
            } else {
                SegmentStatus::Defective
            },
            class: s.class,
            contrast: s.contrast,
            trace: s.trace.clone(),
        });
    }
    Ok(AidReport {
        asset: asset.into(),
        segments,
    })
}

impl AidReport {
    /// (healthy, defective) counts.
    pub fn counts(&self) -> (usize, usize) {
        let d = self
            .segments
            .iter()
            .filter(|s| s.status == SegmentStatus::Defective)
            .count();
        (self.segments.len() - d, d)
    }

    pub fn to_json(&self) -> String {
        canonical::to_line(self)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArchiveLine {
    target: String,
    sweep: SweepConfig,
    t_s: f64,
    bins: Vec<f64>,
}

/// NDJSON archive, one chirp per line.
pub fn write_archive(trace: &ScanTrace) -> String {
    let mut out = String::new();
    for (t, row) in trace.timestamps_s.iter().zip(&trace.chirps) {
        out.push_str(&canonical::to_line(&ArchiveLine {
            target: trace.target.clone(),
            sweep: trace.sweep,
            t_s: *t,
            bins: row.clone(),
        }));
        out.push('\n');
    }
    out
}

pub fn read_archive(text: &str) -> Result<ScanTrace, FmcwError> {
    let mut trace: Option<ScanTrace> = None;
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let err = |reason: String| FmcwError::Archive { line: i + 1, reason };
        let l: ArchiveLine = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        if l.bins.len() != l.sweep.bins {
            return Err(err("bin count does not match sweep".into()));
        }
        let t = trace.get_or_insert_with(|| ScanTrace {
            sweep: l.sweep,
            target: l.target.clone(),
            timestamps_s: vec![],
            chirps: vec![],
        });
        if t.sweep != l.sweep || t.target != l.target {
            return Err(err("sweep or target changed mid-archive".into()));
        }
        t.timestamps_s.push(l.t_s);
        t.chirps.push(l.bins);
    }
    trace.ok_or(FmcwError::EmptyTrace)
}
