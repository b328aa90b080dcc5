//! Feature store formats and the synthetic dataset generator.
//!
//! Two on-disk formats are supported:
//!
//! * CSV with the header `vehicle_id,camera_id,condition,frame_index,roi,f0,...,f{D-1}`
//!   where `roi` is exactly `in` or `out`.
//! * A little-endian binary store (`.rfcs`): the magic `RFCS`, a `u16`
//!   version (1), a `u32` dimension and a `u64` record count, followed by the
//!   records. Each record is three length-prefixed (`u16`) UTF-8 strings
//!   (vehicle, camera, condition), a `u64` frame index, a `u8` ROI flag
//!   (0 inside, 1 outside) and `dim` `f64` values.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, DatasetError, FeatureRecord, RoiFlag};
use crate::rng::GaussianRng;

pub const MAGIC: [u8; 4] = *b"RFCS";
pub const VERSION: u16 = 1;
const FIXED_COLUMNS: [&str; 5] = ["vehicle_id", "camera_id", "condition", "frame_index", "roi"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at row {row}, column {column}: {message}")]
    ParseError {
        row: usize,
        column: usize,
        message: String,
    },
    #[error("invalid roi label {label:?} at row {row} (expected \"in\" or \"out\")")]
    InvalidRoiLabel { row: usize, label: String },
    #[error("bad magic {0:?}, expected \"RFCS\"")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("file truncated at byte {offset} while reading {what}")]
    TruncatedFile { offset: usize, what: &'static str },
    #[error("{0} unexpected trailing bytes after last record")]
    TrailingBytes(usize),
    #[error("string field at byte {offset} is not valid UTF-8")]
    InvalidUtf8 { offset: usize },
    #[error("string field {field:?} is {len} bytes, the binary format allows at most 65535")]
    FieldTooLong { field: String, len: usize },
    #[error("unrecognized file extension for {0:?} (expected .csv or .rfcs)")]
    UnknownFormat(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// On-disk format, chosen by file extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Binary,
}

impl Format {
    pub fn from_path(path: &Path) -> Result<Self, IngestError> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Ok(Format::Csv),
            Some("rfcs") => Ok(Format::Binary),
            _ => Err(IngestError::UnknownFormat(path.display().to_string())),
        }
    }
}

pub fn load(path: &Path) -> Result<Dataset, IngestError> {
    match Format::from_path(path)? {
        Format::Csv => load_csv(path),
        Format::Binary => load_binary(path),
    }
}

pub fn save(dataset: &Dataset, path: &Path) -> Result<(), IngestError> {
    match Format::from_path(path)? {
        Format::Csv => write_csv(dataset, path),
        Format::Binary => write_binary(dataset, path),
    }
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

pub fn load_csv(path: &Path) -> Result<Dataset, IngestError> {
    let text = fs::read_to_string(path)?;
    parse_csv(&text)
}

/// Parses CSV text. Rows and columns in errors are 1-based; row 1 is the header.
pub fn parse_csv(text: &str) -> Result<Dataset, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = reader.records();

    let header = match rows.next() {
        Some(row) => row.map_err(|e| csv_error(1, e))?,
        None => return Err(DatasetError::EmptyInput.into()),
    };
    for (i, expected) in FIXED_COLUMNS.iter().enumerate() {
        if header.get(i) != Some(*expected) {
            return Err(IngestError::ParseError {
                row: 1,
                column: i + 1,
                message: format!("expected header column {expected:?}"),
            });
        }
    }
    let dim = header.len() - FIXED_COLUMNS.len();
    for k in 0..dim {
        let column = FIXED_COLUMNS.len() + k;
        if header.get(column) != Some(format!("f{k}").as_str()) {
            return Err(IngestError::ParseError {
                row: 1,
                column: column + 1,
                message: format!("expected header column \"f{k}\""),
            });
        }
    }

    let mut records = Vec::new();
    for (i, row) in rows.enumerate() {
        let row_no = i + 2;
        let row = row.map_err(|e| csv_error(row_no, e))?;
        if row.len() != header.len() {
            return Err(IngestError::ParseError {
                row: row_no,
                column: row.len().min(header.len()) + 1,
                message: format!("expected {} fields, found {}", header.len(), row.len()),
            });
        }
        let frame_index = row[3].parse::<u64>().map_err(|e| IngestError::ParseError {
            row: row_no,
            column: 4,
            message: format!("frame_index: {e}"),
        })?;
        let roi = match &row[4] {
            "in" => RoiFlag::Inside,
            "out" => RoiFlag::Outside,
            other => {
                return Err(IngestError::InvalidRoiLabel {
                    row: row_no,
                    label: other.to_string(),
                })
            }
        };
        let feature = (0..dim)
            .map(|k| {
                let column = FIXED_COLUMNS.len() + k;
                row[column].parse::<f64>().map_err(|e| IngestError::ParseError {
                    row: row_no,
                    column: column + 1,
                    message: format!("f{k}: {e}"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        records.push(FeatureRecord {
            vehicle_id: row[0].to_string(),
            camera_id: row[1].to_string(),
            condition: row[2].to_string(),
            frame_index,
            roi,
            feature,
        });
    }
    Ok(Dataset::new(records)?)
}

fn csv_error(row: usize, err: csv::Error) -> IngestError {
    IngestError::ParseError {
        row,
        column: 1,
        message: err.to_string(),
    }
}

pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<(), IngestError> {
    fs::write(path, to_csv(dataset)?)?;
    Ok(())
}

/// Serializes a dataset to CSV. Floats use the shortest representation that
/// parses back to the same value.
pub fn to_csv(dataset: &Dataset) -> Result<String, IngestError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((0..dataset.dim()).map(|k| format!("f{k}")));
    writer.write_record(&header).map_err(csv_io)?;
    for record in dataset.records() {
        let mut row = vec![
            record.vehicle_id.clone(),
            record.camera_id.clone(),
            record.condition.clone(),
            record.frame_index.to_string(),
            match record.roi {
                RoiFlag::Inside => "in".to_string(),
                RoiFlag::Outside => "out".to_string(),
            },
        ];
        row.extend(record.feature.iter().map(|x| format!("{x:?}")));
        writer.write_record(&row).map_err(csv_io)?;
    }
    let bytes = writer.into_inner().map_err(|e| IngestError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits UTF-8 for UTF-8 input"))
}

fn csv_io(err: csv::Error) -> IngestError {
    IngestError::Io(std::io::Error::other(err))
}

// ---------------------------------------------------------------------------
// Binary
// ---------------------------------------------------------------------------

pub fn load_binary(path: &Path) -> Result<Dataset, IngestError> {
    decode_binary(&fs::read(path)?)
}

pub fn write_binary(dataset: &Dataset, path: &Path) -> Result<(), IngestError> {
    fs::write(path, encode_binary(dataset)?)?;
    Ok(())
}

pub fn encode_binary(dataset: &Dataset) -> Result<Vec<u8>, IngestError> {
    if dataset.is_empty() {
        return Err(DatasetError::EmptyInput.into());
    }
    let dim = u32::try_from(dataset.dim())
        .map_err(|_| IngestError::InvalidSpec("dimension exceeds u32".into()))?;
    let per_record = 2 * 3 + 8 + 1 + 8 * dataset.dim();
    let mut out = Vec::with_capacity(18 + dataset.len() * (per_record + 16));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    out.extend_from_slice(&(dataset.len() as u64).to_le_bytes());
    for record in dataset.records() {
        for field in [&record.vehicle_id, &record.camera_id, &record.condition] {
            let len = u16::try_from(field.len()).map_err(|_| IngestError::FieldTooLong {
                field: field.clone(),
                len: field.len(),
            })?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(field.as_bytes());
        }
        out.extend_from_slice(&record.frame_index.to_le_bytes());
        out.push(match record.roi {
            RoiFlag::Inside => 0,
            RoiFlag::Outside => 1,
        });
        for x in &record.feature {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], IngestError> {
        if self.bytes.len() - self.offset < n {
            return Err(IngestError::TruncatedFile {
                offset: self.bytes.len(),
                what,
            });
        }
        let slice = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(slice)
    }

    fn array<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N], IngestError> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }

    fn string(&mut self, what: &'static str) -> Result<String, IngestError> {
        let len = u16::from_le_bytes(self.array(what)?) as usize;
        let offset = self.offset;
        let bytes = self.take(len, what)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| IngestError::InvalidUtf8 { offset })
    }
}

pub fn decode_binary(bytes: &[u8]) -> Result<Dataset, IngestError> {
    let mut cur = Cursor { bytes, offset: 0 };
    let magic: [u8; 4] = cur.array("magic")?;
    if magic != MAGIC {
        return Err(IngestError::BadMagic(magic));
    }
    let version = u16::from_le_bytes(cur.array("version")?);
    if version != VERSION {
        return Err(IngestError::UnsupportedVersion(version));
    }
    let dim = u32::from_le_bytes(cur.array("dim")?) as usize;
    let count = u64::from_le_bytes(cur.array("record_count")?);
    if count == 0 {
        return Err(DatasetError::EmptyInput.into());
    }

    let mut records = Vec::new();
    for _ in 0..count {
        let vehicle_id = cur.string("vehicle_id")?;
        let camera_id = cur.string("camera_id")?;
        let condition = cur.string("condition")?;
        let frame_index = u64::from_le_bytes(cur.array("frame_index")?);
        let roi_offset = cur.offset;
        let roi = match cur.array::<1>("roi")?[0] {
            0 => RoiFlag::Inside,
            1 => RoiFlag::Outside,
            other => {
                return Err(IngestError::InvalidRoiLabel {
                    row: roi_offset,
                    label: other.to_string(),
                })
            }
        };
        let feature = cur
            .take(8 * dim, "feature")?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        records.push(FeatureRecord {
            vehicle_id,
            camera_id,
            condition,
            frame_index,
            roi,
            feature,
        });
    }
    if cur.offset != bytes.len() {
        return Err(IngestError::TrailingBytes(bytes.len() - cur.offset));
    }
    Ok(Dataset::new(records)?)
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Parameters of the Gaussian-prototype generator.
///
/// Every vehicle gets a prototype drawn uniformly on the unit sphere; each
/// crop is that prototype plus isotropic Gaussian noise whose scale depends
/// on whether the crop is inside or outside the ROI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_vehicles: usize,
    pub images_inside_per_vehicle: usize,
    pub images_outside_per_vehicle: usize,
    pub dim: usize,
    pub sigma_inside: f64,
    pub sigma_outside: f64,
    pub seed: u64,
    /// Crops of each ROI class are assigned to cameras `cam1..camN` round-robin.
    #[serde(default = "one")]
    pub n_cameras: usize,
}

fn one() -> usize {
    1
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), IngestError> {
        let positive = [
            ("n_vehicles", self.n_vehicles),
            ("images_inside_per_vehicle", self.images_inside_per_vehicle),
            ("images_outside_per_vehicle", self.images_outside_per_vehicle),
            ("dim", self.dim),
            ("n_cameras", self.n_cameras),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(IngestError::InvalidSpec(format!("{name} must be positive")));
            }
        }
        for (name, sigma) in [
            ("sigma_inside", self.sigma_inside),
            ("sigma_outside", self.sigma_outside),
        ] {
            if !(sigma.is_finite() && sigma >= 0.0) {
                return Err(IngestError::InvalidSpec(format!(
                    "{name} must be finite and non-negative, got {sigma}"
                )));
            }
        }
        Ok(())
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset, IngestError> {
    spec.validate()?;
    let mut rng = GaussianRng::new(spec.seed);
    let width = spec.n_vehicles.to_string().len();
    let per_vehicle = spec.images_inside_per_vehicle + spec.images_outside_per_vehicle;
    let mut records = Vec::with_capacity(spec.n_vehicles * per_vehicle);

    for v in 0..spec.n_vehicles {
        let prototype = unit_vector(&mut rng, spec.dim);
        let vehicle_id = format!("v{v:0width$}");
        let classes = [
            (RoiFlag::Inside, spec.images_inside_per_vehicle, spec.sigma_inside),
            (RoiFlag::Outside, spec.images_outside_per_vehicle, spec.sigma_outside),
        ];
        let mut frame_index = 0u64;
        for (roi, count, sigma) in classes {
            for k in 0..count {
                let feature = prototype.iter().map(|&p| rng.normal(p, sigma)).collect();
                records.push(FeatureRecord {
                    vehicle_id: vehicle_id.clone(),
                    camera_id: format!("cam{}", k % spec.n_cameras + 1),
                    condition: "synthetic".to_string(),
                    frame_index,
                    roi,
                    feature,
                });
                frame_index += 1;
            }
        }
    }
    Ok(Dataset::new(records)?)
}

fn unit_vector(rng: &mut GaussianRng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}
