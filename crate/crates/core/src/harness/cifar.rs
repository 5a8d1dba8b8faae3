//! CIFAR-10 / CIFAR-100 binary batch files.
//!
//! CIFAR-10 records are 1 label byte followed by 3072 pixel bytes (1024 red,
//! 1024 green, 1024 blue, row-major 32×32). CIFAR-100 records carry a coarse
//! and a fine label byte before the pixels.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::tensor::RealTensor;

pub const PIXELS: usize = 3 * 32 * 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    C10,
    C100,
}

impl Variant {
    pub fn record_len(self) -> usize {
        match self {
            Variant::C10 => 1 + PIXELS,
            Variant::C100 => 2 + PIXELS,
        }
    }

    pub fn classes(self) -> usize {
        match self {
            Variant::C10 => 10,
            Variant::C100 => 100,
        }
    }

    pub fn train_files(self) -> Vec<&'static str> {
        match self {
            Variant::C10 => vec![
                "data_batch_1.bin",
                "data_batch_2.bin",
                "data_batch_3.bin",
                "data_batch_4.bin",
                "data_batch_5.bin",
            ],
            Variant::C100 => vec!["train.bin"],
        }
    }

    pub fn test_file(self) -> &'static str {
        match self {
            Variant::C10 => "test_batch.bin",
            Variant::C100 => "test.bin",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "c10" => Ok(Variant::C10),
            "c100" => Ok(Variant::C100),
            other => Err(Error::Config(format!("unknown dataset variant {other:?} (expected c10 or c100)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CifarRecord {
    /// CIFAR-10 label, or the CIFAR-100 fine label.
    pub label: u8,
    /// CIFAR-100 coarse label.
    pub coarse: Option<u8>,
    pub pixels: Vec<u8>,
}

pub fn parse_records(bytes: &[u8], variant: Variant) -> Result<Vec<CifarRecord>> {
    let len = variant.record_len();
    if bytes.is_empty() || bytes.len() % len != 0 {
        return Err(Error::Format(format!(
            "{} bytes is not a positive multiple of the {len}-byte record size",
            bytes.len()
        )));
    }
    bytes
        .chunks_exact(len)
        .enumerate()
        .map(|(i, r)| {
            let (coarse, label, pixels) = match variant {
                Variant::C10 => (None, r[0], &r[1..]),
                Variant::C100 => (Some(r[0]), r[1], &r[2..]),
            };
            if usize::from(label) >= variant.classes() {
                return Err(Error::Data(format!("record {i}: label {label} out of range")));
            }
            if coarse.is_some_and(|c| c >= 20) {
                return Err(Error::Data(format!("record {i}: coarse label {} out of range", coarse.unwrap_or(0))));
            }
            Ok(CifarRecord {
                label,
                coarse,
                pixels: pixels.to_vec(),
            })
        })
        .collect()
}

pub fn encode_records(records: &[CifarRecord], variant: Variant) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(records.len() * variant.record_len());
    for r in records {
        if r.pixels.len() != PIXELS {
            return Err(Error::Data(format!("record has {} pixels, expected {PIXELS}", r.pixels.len())));
        }
        if variant == Variant::C100 {
            out.push(r.coarse.unwrap_or(0));
        }
        out.push(r.label);
        out.extend_from_slice(&r.pixels);
    }
    Ok(out)
}

pub fn write_cifar(path: &Path, records: &[CifarRecord], variant: Variant) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_records(records, variant)?)?;
    Ok(())
}

pub fn records_to_dataset(records: &[CifarRecord], variant: Variant) -> Result<Dataset<f64>> {
    let mut data = Vec::with_capacity(records.len() * PIXELS);
    for r in records {
        data.extend(r.pixels.iter().map(|&p| f64::from(p) / 255.0));
    }
    let images = RealTensor::from_vec(&[records.len(), 3, 32, 32], data)?;
    Dataset::new(images, records.iter().map(|r| usize::from(r.label)).collect(), variant.classes())
}

/// Loads one batch file, images scaled to `[0, 1]`, in file order.
pub fn load_cifar(path: &Path, variant: Variant) -> Result<Dataset<f64>> {
    let bytes = fs::read(path)?;
    records_to_dataset(&parse_records(&bytes, variant)?, variant)
}

/// Loads the training and test splits from a directory holding the
/// standard batch file names.
pub fn load_cifar_dir(dir: &Path, variant: Variant) -> Result<(Dataset<f64>, Dataset<f64>)> {
    let mut records = Vec::new();
    for name in variant.train_files() {
        let bytes = fs::read(dir.join(name))?;
        records.extend(parse_records(&bytes, variant)?);
    }
    let train = records_to_dataset(&records, variant)?;
    let test = load_cifar(&dir.join(variant.test_file()), variant)?;
    Ok((train, test))
}

/// Resolves `explicit`, else `$OCTONET_DATA`, to a dataset root.
pub fn data_root(explicit: Option<&Path>) -> Option<PathBuf> {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(DATA_ENV).map(PathBuf::from))
}

pub const DATA_ENV: &str = "OCTONET_DATA";
