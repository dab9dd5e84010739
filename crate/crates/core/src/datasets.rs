//! Dataset loading, booleanization and splitting.
//!
//! CSV input: a header row, numeric feature columns, and a final column
//! named `label` holding class indices `0..M`. Comma-delimited, standard
//! double-quote quoting.
//!
//! Booleanization is a thermometer code: each feature gets `bits` thresholds
//! at the `i / (bits + 1)` quantiles (linear interpolation) of the training
//! rows, and bit `i` is set when the value exceeds threshold `i`.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::Pcg32;

/// One booleanized datapoint.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Sample {
    pub bits: Vec<bool>,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BooleanizedDataset {
    inputs: usize,
    classes: usize,
    samples: Vec<Sample>,
}

impl BooleanizedDataset {
    pub fn new(inputs: usize, classes: usize, samples: Vec<Sample>) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if s.bits.len() != inputs {
                return Err(Error::data(format!(
                    "row {i} has {} bits, expected {inputs}",
                    s.bits.len()
                )));
            }
            if s.label >= classes {
                return Err(Error::data(format!(
                    "row {i} label {} outside 0..{classes}",
                    s.label
                )));
            }
        }
        Ok(BooleanizedDataset {
            inputs,
            classes,
            samples,
        })
    }

    /// Digits per datapoint (L).
    pub fn inputs(&self) -> usize {
        self.inputs
    }

    /// Class count (M).
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// The four XOR datapoints, `L = 2`, `M = 2`.
pub fn xor_dataset() -> BooleanizedDataset {
    let samples = [(false, false, 0), (false, true, 1), (true, false, 1), (true, true, 0)]
        .into_iter()
        .map(|(a, b, y)| Sample {
            bits: vec![a, b],
            label: y,
        })
        .collect();
    BooleanizedDataset::new(2, 2, samples).expect("static dataset")
}

/// Numeric feature table with class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTable {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl RawTable {
    pub fn new(feature_names: Vec<String>, rows: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::data("row and label counts differ"));
        }
        let width = feature_names.len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != width {
                return Err(Error::data(format!("row {i} has {} features, expected {width}", r.len())));
            }
            if let Some(v) = r.iter().find(|v| !v.is_finite()) {
                return Err(Error::data(format!("row {i} has non-finite value {v}")));
            }
        }
        let classes = labels.iter().max().map_or(0, |&m| m + 1);
        Ok(RawTable {
            feature_names,
            rows,
            labels,
            classes,
        })
    }

    pub fn features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows at `indices`, keeping this table's class count.
    pub fn select(&self, indices: &[usize]) -> RawTable {
        RawTable {
            feature_names: self.feature_names.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }
}

pub fn read_csv<R: Read>(input: R) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.is_empty() || &headers[headers.len() - 1] != "label" {
        return Err(Error::data("last CSV column must be named `label`"));
    }
    let names: Vec<String> = headers.iter().take(headers.len() - 1).map(str::to_owned).collect();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let mut row = Vec::with_capacity(names.len());
        for field in rec.iter().take(rec.len().saturating_sub(1)) {
            row.push(
                field
                    .parse::<f64>()
                    .map_err(|_| Error::data(format!("line {line}: bad number {field:?}")))?,
            );
        }
        let label = rec
            .get(rec.len().wrapping_sub(1))
            .unwrap_or("")
            .parse::<usize>()
            .map_err(|_| Error::data(format!("line {line}: bad label")))?;
        rows.push(row);
        labels.push(label);
    }
    RawTable::new(names, rows, labels)
}

pub fn load_csv(path: &Path) -> Result<RawTable> {
    let file = File::open(path)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
    read_csv(file)
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Per-feature quantile thresholds.
#[derive(Clone, Debug, PartialEq)]
pub struct Booleanizer {
    bits_per_feature: usize,
    thresholds: Vec<Vec<f64>>,
}

impl Booleanizer {
    pub fn fit(table: &RawTable, bits_per_feature: usize) -> Result<Self> {
        if bits_per_feature == 0 {
            return Err(Error::config("bits per feature must be at least 1"));
        }
        if table.is_empty() {
            return Err(Error::data("cannot fit thresholds on an empty table"));
        }
        let thresholds = (0..table.features())
            .map(|f| {
                let mut col: Vec<f64> = table.rows.iter().map(|r| r[f]).collect();
                col.sort_by(f64::total_cmp);
                (1..=bits_per_feature)
                    .map(|i| quantile(&col, i as f64 / (bits_per_feature + 1) as f64))
                    .collect()
            })
            .collect();
        Ok(Booleanizer {
            bits_per_feature,
            thresholds,
        })
    }

    pub fn from_thresholds(thresholds: Vec<Vec<f64>>) -> Result<Self> {
        let bits = thresholds.first().map_or(0, Vec::len);
        if bits == 0 || thresholds.iter().any(|t| t.len() != bits) {
            return Err(Error::data("threshold rows must be nonempty and equally long"));
        }
        Ok(Booleanizer {
            bits_per_feature: bits,
            thresholds,
        })
    }

    pub fn bits_per_feature(&self) -> usize {
        self.bits_per_feature
    }

    pub fn thresholds(&self) -> &[Vec<f64>] {
        &self.thresholds
    }

    /// Output width L.
    pub fn inputs(&self) -> usize {
        self.thresholds.len() * self.bits_per_feature
    }

    /// Features whose thresholds all coincide; their bits carry no signal.
    pub fn constant_features(&self) -> Vec<usize> {
        self.thresholds
            .iter()
            .enumerate()
            .filter(|(_, t)| t.iter().all(|&v| v == t[0]))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn encode(&self, row: &[f64]) -> Vec<bool> {
        row.iter()
            .zip(&self.thresholds)
            .flat_map(|(&v, ts)| ts.iter().map(move |&t| v > t))
            .collect()
    }

    pub fn transform(&self, table: &RawTable) -> Result<BooleanizedDataset> {
        if table.features() != self.thresholds.len() {
            return Err(Error::data(format!(
                "table has {} features, thresholds cover {}",
                table.features(),
                self.thresholds.len()
            )));
        }
        let samples = table
            .rows
            .iter()
            .zip(&table.labels)
            .map(|(r, &label)| Sample {
                bits: self.encode(r),
                label,
            })
            .collect();
        BooleanizedDataset::new(self.inputs(), table.classes.max(1), samples)
    }
}

/// Fits thresholds on `table` and encodes it.
pub fn booleanize(table: &RawTable, bits_per_feature: usize) -> Result<BooleanizedDataset> {
    Booleanizer::fit(table, bits_per_feature)?.transform(table)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub shuffle_seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            shuffle_seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config(format!(
                "train fraction must be in (0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }

    /// Shuffled `(train, test)` index sets of sizes `floor(f * n)` and the rest.
    pub fn indices(&self, n: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        self.validate()?;
        if n < 2 {
            return Err(Error::data("need at least two datapoints to split"));
        }
        let mut order: Vec<usize> = (0..n).collect();
        Pcg32::from_seed(self.shuffle_seed).shuffle(&mut order);
        let cut = ((self.train_fraction * n as f64) + 1e-9).floor() as usize;
        let cut = cut.clamp(1, n - 1);
        let test = order.split_off(cut);
        Ok((order, test))
    }
}

/// Splits a booleanized dataset.
pub fn split(ds: &BooleanizedDataset, spec: &SplitSpec) -> Result<(BooleanizedDataset, BooleanizedDataset)> {
    let (tr, te) = spec.indices(ds.len())?;
    let pick = |ix: &[usize]| {
        BooleanizedDataset::new(
            ds.inputs,
            ds.classes,
            ix.iter().map(|&i| ds.samples[i].clone()).collect(),
        )
    };
    Ok((pick(&tr)?, pick(&te)?))
}

/// Train/test pair with thresholds fitted on the training rows only.
#[derive(Clone, Debug)]
pub struct PreparedSplit {
    pub train: BooleanizedDataset,
    pub test: BooleanizedDataset,
    pub booleanizer: Booleanizer,
}

pub fn split_and_booleanize(table: &RawTable, bits_per_feature: usize, spec: &SplitSpec) -> Result<PreparedSplit> {
    let (tr, te) = spec.indices(table.len())?;
    let train_raw = table.select(&tr);
    let test_raw = table.select(&te);
    let booleanizer = Booleanizer::fit(&train_raw, bits_per_feature)?;
    Ok(PreparedSplit {
        train: booleanizer.transform(&train_raw)?,
        test: booleanizer.transform(&test_raw)?,
        booleanizer,
    })
}

/// Pixel threshold for the MNIST loader.
pub const MNIST_PIXEL_THRESHOLD: u8 = 75;

fn read_be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::data("truncated IDX header"))
}

/// Decodes an IDX image/label file pair (uncompressed). A pixel becomes 1
/// when strictly above `threshold`.
pub fn read_idx(images: &[u8], labels: &[u8], threshold: u8) -> Result<BooleanizedDataset> {
    if read_be_u32(images, 0)? != 0x0000_0803 {
        return Err(Error::data("image file is not an IDX3 u8 array"));
    }
    if read_be_u32(labels, 0)? != 0x0000_0801 {
        return Err(Error::data("label file is not an IDX1 u8 array"));
    }
    let count = read_be_u32(images, 4)? as usize;
    let rows = read_be_u32(images, 8)? as usize;
    let cols = read_be_u32(images, 12)? as usize;
    if read_be_u32(labels, 4)? as usize != count {
        return Err(Error::data("image and label counts differ"));
    }
    let pixels = rows * cols;
    let body = &images[16..];
    let label_body = &labels[8..];
    if body.len() < count * pixels || label_body.len() < count {
        return Err(Error::data("truncated IDX body"));
    }
    let samples: Vec<Sample> = (0..count)
        .map(|i| Sample {
            bits: body[i * pixels..(i + 1) * pixels].iter().map(|&p| p > threshold).collect(),
            label: usize::from(label_body[i]),
        })
        .collect();
    let classes = samples.iter().map(|s| s.label + 1).max().unwrap_or(1);
    BooleanizedDataset::new(pixels, classes, samples)
}

pub fn load_mnist(images: &Path, labels: &Path) -> Result<BooleanizedDataset> {
    let img = std::fs::read(images)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", images.display())))?;
    let lab = std::fs::read(labels)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", labels.display())))?;
    read_idx(&img, &lab, MNIST_PIXEL_THRESHOLD)
}
