//! Synthetic chart rasters and the on-disk dataset container.
//!
//! The generator mirrors a 15-class chart-type inventory. Each sample is an
//! `H×W` grayscale raster rendered from a per-class archetype with seeded
//! jitter and additive Gaussian noise, quantized to `u8`. Some archetypes
//! are built from others (a scatter-line is a scatter plus a trend line, an
//! interval plot resembles a bar plot) so the class hierarchy is not trivial.

mod container;
mod render;

use std::fmt;
use std::io::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use container::{DATASET_MAGIC, DATASET_VERSION};

use crate::{rng, DenseMatrix};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("not a dataset file (bad magic)")]
    BadMagic,
    #[error("dataset format version {0} is not supported")]
    VersionUnsupported(u32),
    #[error("dataset file is truncated")]
    TruncatedFile,
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("dataset file has {0} trailing bytes")]
    TrailingBytes(usize),
    #[error("class name is not valid UTF-8")]
    InvalidName,
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("dataset io: {0}")]
    Io(#[from] std::io::Error),
}

/// The chart types, in inventory order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChartKind {
    Area,
    BarHorizontal,
    BarVertical,
    BoxVertical,
    Heatmap,
    IntervalHorizontal,
    IntervalVertical,
    Line,
    Manhattan,
    Map,
    Pie,
    Scatter,
    ScatterLine,
    Surface,
    Venn,
}

impl ChartKind {
    pub const ALL: [ChartKind; 15] = [
        ChartKind::Area,
        ChartKind::BarHorizontal,
        ChartKind::BarVertical,
        ChartKind::BoxVertical,
        ChartKind::Heatmap,
        ChartKind::IntervalHorizontal,
        ChartKind::IntervalVertical,
        ChartKind::Line,
        ChartKind::Manhattan,
        ChartKind::Map,
        ChartKind::Pie,
        ChartKind::Scatter,
        ChartKind::ScatterLine,
        ChartKind::Surface,
        ChartKind::Venn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ChartKind::Area => "Area",
            ChartKind::BarHorizontal => "Bar (horizontal)",
            ChartKind::BarVertical => "Bar (vertical)",
            ChartKind::BoxVertical => "Box (vertical)",
            ChartKind::Heatmap => "Heatmap",
            ChartKind::IntervalHorizontal => "Interval (horizontal)",
            ChartKind::IntervalVertical => "Interval (vertical)",
            ChartKind::Line => "Line",
            ChartKind::Manhattan => "Manhattan",
            ChartKind::Map => "Map",
            ChartKind::Pie => "Pie",
            ChartKind::Scatter => "Scatter",
            ChartKind::ScatterLine => "Scatter-line",
            ChartKind::Surface => "Surface",
            ChartKind::Venn => "Venn",
        }
    }

    /// Per-class frequencies of the reference corpus (train, test).
    pub fn reference_counts(self) -> (usize, usize) {
        match self {
            ChartKind::Area => (172, 136),
            ChartKind::BarHorizontal => (787, 425),
            ChartKind::BarVertical => (5_454, 3_183),
            ChartKind::BoxVertical => (763, 596),
            ChartKind::Heatmap => (197, 180),
            ChartKind::IntervalHorizontal => (156, 430),
            ChartKind::IntervalVertical => (489, 182),
            ChartKind::Line => (10_556, 2_776),
            ChartKind::Manhattan => (176, 80),
            ChartKind::Map => (533, 373),
            ChartKind::Pie => (242, 191),
            ChartKind::Scatter => (1_350, 949),
            ChartKind::ScatterLine => (1_818, 1_628),
            ChartKind::Surface => (155, 128),
            ChartKind::Venn => (75, 131),
        }
    }
}

impl fmt::Display for ChartKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceSplit {
    Train,
    Test,
}

/// How many samples to draw per class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleCounts {
    /// The same count for every class.
    PerClass(usize),
    /// `total` samples split in proportion to the reference corpus column,
    /// by largest remainder, at least two per class.
    Proportional { total: usize, split: ReferenceSplit },
}

impl SampleCounts {
    pub fn resolve(&self) -> Vec<usize> {
        match *self {
            SampleCounts::PerClass(n) => vec![n; ChartKind::ALL.len()],
            SampleCounts::Proportional { total, split } => {
                let reference: Vec<usize> = ChartKind::ALL
                    .iter()
                    .map(|k| match split {
                        ReferenceSplit::Train => k.reference_counts().0,
                        ReferenceSplit::Test => k.reference_counts().1,
                    })
                    .collect();
                let sum: usize = reference.iter().sum();
                let exact: Vec<f64> = reference
                    .iter()
                    .map(|&r| r as f64 * total as f64 / sum as f64)
                    .collect();
                let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
                let mut order: Vec<usize> = (0..counts.len()).collect();
                order.sort_by(|&a, &b| {
                    let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
                    rb.total_cmp(&ra).then(a.cmp(&b))
                });
                let assigned: usize = counts.iter().sum();
                for &i in order.iter().take(total.saturating_sub(assigned)) {
                    counts[i] += 1;
                }
                for c in &mut counts {
                    *c = (*c).max(2);
                }
                counts
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub counts: SampleCounts,
    pub height: usize,
    pub width: usize,
    /// Standard deviation of the additive pixel noise.
    pub noise: f64,
    /// Scale of the placement jitter of axes and chart bodies.
    pub jitter: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            counts: SampleCounts::PerClass(153),
            height: 32,
            width: 32,
            noise: 0.1,
            jitter: 0.25,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::InvalidConfig(m.into()));
        if self.height < 16 || self.width < 16 {
            return bad("raster must be at least 16x16");
        }
        if self.height > u16::MAX as usize || self.width > u16::MAX as usize {
            return bad("raster dimension exceeds u16");
        }
        if self.counts.resolve().contains(&0) {
            return bad("every class needs a positive count");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be a finite nonnegative number");
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return bad("jitter must be a finite nonnegative number");
        }
        Ok(())
    }
}

/// Labeled rasters. Pixels are stored quantized, one byte per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub height: usize,
    pub width: usize,
    pub class_names: Vec<String>,
    pub pixels: Vec<u8>,
    pub labels: Vec<usize>,
}

/// Dequantized features with labels, ready for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub features: DenseMatrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Samples {
    /// Same features with labels sent through `map` into `num_classes`
    /// targets.
    pub fn relabeled(&self, map: &[usize], num_classes: usize) -> Samples {
        Samples {
            features: self.features.clone(),
            labels: self.labels.iter().map(|&y| map[y]).collect(),
            num_classes,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn raster_len(&self) -> usize {
        self.height * self.width
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// The rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let n = self.raster_len();
        let mut pixels = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            pixels.extend_from_slice(&self.pixels[i * n..(i + 1) * n]);
        }
        Dataset {
            height: self.height,
            width: self.width,
            class_names: self.class_names.clone(),
            pixels,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Intensities `byte / 255` as an `N×(H·W)` matrix.
    pub fn features(&self) -> DenseMatrix {
        Array2::from_shape_vec(
            (self.len(), self.raster_len()),
            self.pixels.iter().map(|&p| f64::from(p) / 255.0).collect(),
        )
        .expect("pixel buffer matches shape")
    }

    pub fn samples(&self) -> Samples {
        Samples {
            features: self.features(),
            labels: self.labels.clone(),
            num_classes: self.num_classes(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Inspection manifest: `index,label,class_name` per sample.
    pub fn write_manifest(&self, path: &Path) -> Result<(), DataError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "index,label,class_name")?;
        for (i, &y) in self.labels.iter().enumerate() {
            writeln!(out, "{i},{y},\"{}\"", self.class_names[y])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub(crate) fn quantize(v: f64) -> u8 {
    (255.0 * v.clamp(0.0, 1.0)).round() as u8
}

/// Renders one raster, before quantization.
pub(crate) fn render_sample(kind: ChartKind, config: &GeneratorConfig, seed: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, "sample", 0);
    let mut canvas = render::Canvas::new(config.width, config.height);
    render::render(kind, &mut canvas, &mut rng, config.jitter);
    if config.noise > 0.0 {
        let normal = Normal::new(0.0, config.noise).expect("valid noise level");
        for p in &mut canvas.data {
            *p = (*p + normal.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }
    // a little global contrast variation
    let gain = rng.random_range(0.85..=1.0);
    canvas.data.iter_mut().for_each(|p| *p *= gain);
    canvas.data
}

fn sample_seed(config: &GeneratorConfig, class: usize, index: usize) -> u64 {
    rng::derive_seed(config.seed, "chart", ((class as u64) << 32) | index as u64)
}

/// Generates the dataset described by `config`. Samples are grouped by class
/// in inventory order; each sample draws from its own seeded stream.
pub fn generate(config: &GeneratorConfig) -> Result<Dataset, DataError> {
    config.validate()?;
    let counts = config.counts.resolve();
    let raster = config.height * config.width;
    let total: usize = counts.iter().sum();
    let mut pixels = Vec::with_capacity(total * raster);
    let mut labels = Vec::with_capacity(total);
    for (class, (&kind, &count)) in ChartKind::ALL.iter().zip(&counts).enumerate() {
        for i in 0..count {
            let img = render_sample(kind, config, sample_seed(config, class, i));
            pixels.extend(img.into_iter().map(quantize));
            labels.push(class);
        }
    }
    Ok(Dataset {
        height: config.height,
        width: config.width,
        class_names: ChartKind::ALL.iter().map(|k| k.name().to_string()).collect(),
        pixels,
        labels,
    })
}
