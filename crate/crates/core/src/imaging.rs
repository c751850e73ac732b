//! Time series to image transforms: recurrence plots, Gramian angular
//! summation/difference fields, and a raw raster snapshot, plus PGM/CSV export.
//!
//! Matrices are square and row-major. Row `i` and column `j` both index sample
//! `i`/`j` of the series in time order, so cell `(0, 0)` pairs the earliest
//! sample with itself. Exported files keep that order (top row = first sample).

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::traces::RssiRange;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ImageKind {
    Rp,
    RpBinary,
    Gasf,
    Gadf,
    Snapshot,
    Saliency,
    Raw,
}

impl fmt::Display for ImageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ImageKind::Rp => "rp",
            ImageKind::RpBinary => "rp-binary",
            ImageKind::Gasf => "gasf",
            ImageKind::Gadf => "gadf",
            ImageKind::Snapshot => "snapshot",
            ImageKind::Saliency => "saliency",
            ImageKind::Raw => "raw",
        })
    }
}

/// An N×N real-valued field.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageMatrix {
    pub size: usize,
    pub cells: Vec<f64>,
    pub kind: ImageKind,
}

impl ImageMatrix {
    pub fn zeros(size: usize, kind: ImageKind) -> Self {
        ImageMatrix {
            size,
            cells: vec![0.0; size * size],
            kind,
        }
    }

    fn from_fn(size: usize, kind: ImageKind, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut cells = Vec::with_capacity(size * size);
        for i in 0..size {
            for j in 0..size {
                cells.push(f(i, j));
            }
        }
        ImageMatrix { size, cells, kind }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.cells[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.cells[i * self.size..(i + 1) * self.size]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.cells
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Which transform to apply to a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransformKind {
    Rp,
    Gasf,
    Gadf,
    Snapshot,
}

impl TransformKind {
    pub fn apply(self, values: &[f64], range: RssiRange) -> Result<ImageMatrix> {
        match self {
            TransformKind::Rp => recurrence_plot(values, None, false),
            TransformKind::Gasf => gasf(values),
            TransformKind::Gadf => gadf(values),
            TransformKind::Snapshot => ts_snapshot(values, range),
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransformKind::Rp => "rp",
            TransformKind::Gasf => "gasf",
            TransformKind::Gadf => "gadf",
            TransformKind::Snapshot => "snapshot",
        })
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rp" => Ok(TransformKind::Rp),
            "gasf" => Ok(TransformKind::Gasf),
            "gadf" => Ok(TransformKind::Gadf),
            "snapshot" => Ok(TransformKind::Snapshot),
            other => Err(Error::param("imaging", format!("unknown transform `{other}`"))),
        }
    }
}

fn require_len(values: &[f64], min: usize) -> Result<()> {
    if values.len() < min {
        return Err(Error::param(
            "imaging",
            format!("series of length {} is shorter than {min}", values.len()),
        ));
    }
    Ok(())
}

/// Recurrence plot. Without `binarize` each cell is the distance
/// `|s_i - s_j|`; with it, the cell is 1 where the distance is at most
/// `epsilon` and 0 elsewhere.
pub fn recurrence_plot(values: &[f64], epsilon: Option<f64>, binarize: bool) -> Result<ImageMatrix> {
    require_len(values, 2)?;
    let n = values.len();
    if !binarize {
        return Ok(ImageMatrix::from_fn(n, ImageKind::Rp, |i, j| (values[i] - values[j]).abs()));
    }
    let eps = epsilon.ok_or_else(|| Error::param("imaging", "binarized recurrence plot needs epsilon"))?;
    Ok(ImageMatrix::from_fn(n, ImageKind::RpBinary, |i, j| {
        heaviside(eps - (values[i] - values[j]).abs())
    }))
}

fn heaviside(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Min-max rescaling onto [-1, 1]. A constant series maps to all zeros.
pub fn minmax_rescale(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        return vec![0.0; values.len()];
    }
    let span = hi - lo;
    values
        .iter()
        .map(|&v| (2.0 * (v - lo) / span - 1.0).clamp(-1.0, 1.0))
        .collect()
}

/// Polar encoding of a rescaled series: `angles[i] = arccos(scaled[i])`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarEncoding {
    pub scaled: Vec<f64>,
    pub angles: Vec<f64>,
}

impl PolarEncoding {
    pub fn new(values: &[f64]) -> Self {
        let scaled = minmax_rescale(values);
        let angles = scaled.iter().map(|x| x.acos()).collect();
        PolarEncoding { scaled, angles }
    }
}

/// `sin(phi)` for every angle of the encoding, as `sqrt(1 - x^2)`.
fn sines(scaled: &[f64]) -> Vec<f64> {
    scaled.iter().map(|x| (1.0 - x * x).max(0.0).sqrt()).collect()
}

/// Gramian angular summation field, `cos(phi_i + phi_j)`, evaluated as
/// `x_i x_j - sin(phi_i) sin(phi_j)` so that the diagonal is `2 x^2 - 1` to
/// rounding and exact inputs give exact cells.
pub fn gasf(values: &[f64]) -> Result<ImageMatrix> {
    require_len(values, 2)?;
    let x = minmax_rescale(values);
    let s = sines(&x);
    Ok(ImageMatrix::from_fn(values.len(), ImageKind::Gasf, |i, j| {
        (x[i] * x[j] - s[i] * s[j]).clamp(-1.0, 1.0)
    }))
}

/// Gramian angular difference field, `sin(phi_i - phi_j)`, evaluated as
/// `sin(phi_i) x_j - x_i sin(phi_j)`. The form is exactly antisymmetric.
pub fn gadf(values: &[f64]) -> Result<ImageMatrix> {
    require_len(values, 2)?;
    let x = minmax_rescale(values);
    let s = sines(&x);
    Ok(ImageMatrix::from_fn(values.len(), ImageKind::Gadf, |i, j| {
        (s[i] * x[j] - x[i] * s[j]).clamp(-1.0, 1.0)
    }))
}

/// Binary raster of the raw series: column `x` holds a single 1 at the row of
/// its value, quantized to the nearest of N levels over `range`. High values
/// sit at the top (row 0).
pub fn ts_snapshot(values: &[f64], range: RssiRange) -> Result<ImageMatrix> {
    require_len(values, 1)?;
    let n = values.len();
    let mut img = ImageMatrix::zeros(n, ImageKind::Snapshot);
    let span = range.ceil - range.floor;
    for (x, &v) in values.iter().enumerate() {
        let level = if n == 1 || span <= 0.0 {
            0
        } else {
            let t = (range.clamp(v) - range.floor) / span;
            (t * (n - 1) as f64).round() as usize
        };
        let row = n - 1 - level.min(n - 1);
        img.cells[row * n + x] = 1.0;
    }
    Ok(img)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Pgm,
    Csv,
}

impl ImageFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Pgm => "pgm",
            ImageFormat::Csv => "csv",
        }
    }
}

impl FromStr for ImageFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pgm" => Ok(ImageFormat::Pgm),
            "csv" => Ok(ImageFormat::Csv),
            other => Err(Error::param("imaging", format!("unknown image format `{other}`"))),
        }
    }
}

/// Encodes a matrix. PGM is binary P5 with cells mapped linearly from
/// `[min, max]` onto `[0, 255]` (a constant matrix renders black). CSV holds
/// every cell at full precision.
pub fn export_image(matrix: &ImageMatrix, format: ImageFormat) -> Vec<u8> {
    match format {
        ImageFormat::Pgm => to_pgm(matrix),
        ImageFormat::Csv => to_csv(matrix).into_bytes(),
    }
}

fn to_pgm(m: &ImageMatrix) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", m.size, m.size).into_bytes();
    let (lo, hi) = m.min_max();
    let span = hi - lo;
    out.extend(m.cells.iter().map(|&v| {
        if span > 0.0 && span.is_finite() {
            ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    }));
    out
}

fn to_csv(m: &ImageMatrix) -> String {
    let mut s = String::with_capacity(m.cells.len() * 8);
    for i in 0..m.size {
        for (j, v) in m.row(i).iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            let _ = write!(s, "{v}");
        }
        s.push('\n');
    }
    s
}

/// Reads a square matrix back from CSV.
pub fn import_csv(text: &str, kind: ImageKind) -> Result<ImageMatrix> {
    let mut cells = Vec::new();
    let mut rows = 0;
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        for field in line.split(',') {
            cells.push(field.trim().parse::<f64>().map_err(|_| Error::Parse {
                line: idx + 1,
                message: format!("bad cell `{field}`"),
            })?);
        }
        rows += 1;
    }
    if rows * rows != cells.len() {
        return Err(Error::param(
            "imaging",
            format!("{rows} rows with {} cells is not a square matrix", cells.len()),
        ));
    }
    Ok(ImageMatrix {
        size: rows,
        cells,
        kind,
    })
}

/// Decodes a P5 PGM written by [`export_image`] into raw 0..=255 cells.
pub fn import_pgm(bytes: &[u8]) -> Result<ImageMatrix> {
    let bad = |m: &str| Error::param("imaging", format!("pgm: {m}"));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header"))?);
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(bad("not P5"));
    }
    let w: usize = fields[1].parse().map_err(|_| bad("width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("height"))?;
    if w != h || bytes.len() < pos + w * h {
        return Err(bad("size"));
    }
    Ok(ImageMatrix {
        size: w,
        cells: bytes[pos..pos + w * h].iter().map(|&b| f64::from(b)).collect(),
        kind: ImageKind::Raw,
    })
}
