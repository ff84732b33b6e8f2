use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{parse_contour, BoundarySide, CalibratedImageMeta, Contour, ImageSide, Kappa};
use crate::io::{parse_clinical_csv, parse_f64, read_csv_columns, read_text, ClinicalRow};
use crate::riskmodel::Features;

pub const CALIBRATION_FILE: &str = "calibration.csv";
pub const CLINICAL_FILE: &str = "clinical.csv";
pub const CONTOUR_DIR: &str = "contours";

/// One annotated image joined with its calibration and clinical data.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub meta: CalibratedImageMeta,
    pub li_path: PathBuf,
    pub ma_path: PathBuf,
    pub features: Features,
    pub label: Option<u8>,
    pub avail: bool,
}

impl ImageRecord {
    pub fn image_id(&self) -> &str {
        &self.meta.image_id
    }

    pub fn patient_id(&self) -> &str {
        &self.meta.patient_id
    }

    pub fn load_contours(&self) -> Result<(Contour, Contour)> {
        let read = |path: &Path, side| {
            parse_contour(&read_text(path)?, side).map_err(|e| match e {
                Error::MalformedLine { line, reason } => {
                    Error::format(path.display(), format!("line {line}: {reason}"))
                }
                other => other,
            })
        };
        Ok((read(&self.li_path, BoundarySide::Li)?, read(&self.ma_path, BoundarySide::Ma)?))
    }
}

/// Records sorted by image id; ids are unique.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetIndex {
    records: Vec<ImageRecord>,
}

impl DatasetIndex {
    pub fn new(mut records: Vec<ImageRecord>) -> Result<Self> {
        records.sort_by(|a, b| a.meta.image_id.cmp(&b.meta.image_id));
        if let Some(w) = records.windows(2).find(|w| w[0].meta.image_id == w[1].meta.image_id) {
            return Err(Error::invalid(format!("duplicate image id {}", w[0].meta.image_id)));
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn patient_ids(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.patient_id()).collect()
    }

    pub fn get(&self, image_id: &str) -> Option<&ImageRecord> {
        self.records
            .binary_search_by(|r| r.meta.image_id.as_str().cmp(image_id))
            .ok()
            .map(|i| &self.records[i])
    }

    /// Records whose patient is in `patients`, keeping id order.
    pub fn filter_patients(&self, patients: &BTreeSet<String>) -> DatasetIndex {
        DatasetIndex {
            records: self
                .records
                .iter()
                .filter(|r| patients.contains(r.patient_id()))
                .cloned()
                .collect(),
        }
    }
}

/// Splits `<patient>_L` / `_R` / `_left` / `_right` image ids into patient and side.
pub fn patient_and_side(image_id: &str) -> (String, Option<ImageSide>) {
    let lower = image_id.to_ascii_lowercase();
    for (suffix, side) in [
        ("_left", ImageSide::Left),
        ("_right", ImageSide::Right),
        ("_l", ImageSide::Left),
        ("_r", ImageSide::Right),
    ] {
        if lower.ends_with(suffix) && lower.len() > suffix.len() {
            return (image_id[..image_id.len() - suffix.len()].to_string(), Some(side));
        }
    }
    (image_id.to_string(), None)
}

struct CalibrationEntry {
    kappa: Kappa,
    patient_id: Option<String>,
    side: Option<ImageSide>,
    height: Option<usize>,
    width: Option<usize>,
}

fn read_calibration(path: &Path) -> Result<HashMap<String, CalibrationEntry>> {
    let origin = path.display().to_string();
    let table = read_csv_columns(
        &read_text(path)?,
        &origin,
        &["image_id", "kappa_mm_per_px"],
        &["patient_id", "side", "height", "width"],
    )?;
    let mut out = HashMap::new();
    for (row, &line) in table.rows.iter().zip(&table.lines) {
        let id = row[0].clone().ok_or_else(|| Error::MalformedLine {
            line,
            reason: "image_id is empty".into(),
        })?;
        let kappa_raw = row[1].as_deref().ok_or_else(|| Error::MalformedLine {
            line,
            reason: "kappa_mm_per_px is empty".into(),
        })?;
        let kappa = Kappa::new(parse_f64(kappa_raw, line, "kappa_mm_per_px")?)?;
        let side = match row[3].as_deref() {
            None => None,
            Some(s) => Some(ImageSide::parse(s).ok_or_else(|| Error::MalformedLine {
                line,
                reason: format!("unknown side {s:?}"),
            })?),
        };
        let dim = |cell: &Option<String>, what: &str| -> Result<Option<usize>> {
            cell.as_deref()
                .map(|c| match c.parse::<usize>() {
                    Ok(v) if v >= 1 => Ok(v),
                    _ => Err(Error::MalformedLine {
                        line,
                        reason: format!("{what} must be a positive integer"),
                    }),
                })
                .transpose()
        };
        let entry = CalibrationEntry {
            kappa,
            patient_id: row[2].clone(),
            side,
            height: dim(&row[4], "height")?,
            width: dim(&row[5], "width")?,
        };
        if out.insert(id.clone(), entry).is_some() {
            return Err(Error::format(&origin, format!("duplicate image id {id}")));
        }
    }
    Ok(out)
}

/// Contour file pairs found under `contours/`, keyed by image id.
fn scan_contours(dir: &Path) -> Result<BTreeMap<String, (Option<PathBuf>, Option<PathBuf>)>> {
    let mut found: BTreeMap<String, (Option<PathBuf>, Option<PathBuf>)> = BTreeMap::new();
    if !dir.is_dir() {
        return Ok(found);
    }
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(id) = name.strip_suffix("_LI.txt") {
            found.entry(id.to_string()).or_default().0 = Some(path.clone());
        } else if let Some(id) = name.strip_suffix("_MA.txt") {
            found.entry(id.to_string()).or_default().1 = Some(path.clone());
        }
    }
    Ok(found)
}

/// Reads a dataset laid out as `calibration.csv`, `clinical.csv` and
/// `contours/<image_id>_{LI,MA}.txt`. Image dimensions not given in the
/// calibration table default to `default_size`.
pub fn load_dataset_index(root: &Path, default_size: usize) -> Result<DatasetIndex> {
    let contours = scan_contours(&root.join(CONTOUR_DIR))?;
    if contours.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for (id, (li, ma)) in &contours {
        match (li, ma) {
            (None, _) => return Err(Error::MissingContour(id.clone(), "LI")),
            (_, None) => return Err(Error::MissingContour(id.clone(), "MA")),
            _ => {}
        }
    }
    let calibration = read_calibration(&root.join(CALIBRATION_FILE))?;
    let clinical: HashMap<String, ClinicalRow> = {
        let path = root.join(CLINICAL_FILE);
        let rows = parse_clinical_csv(&read_text(&path)?, &path.display().to_string())?;
        let mut map = HashMap::new();
        for r in rows {
            let id = r.patient_id.clone();
            if map.insert(id.clone(), r).is_some() {
                return Err(Error::format(path.display(), format!("duplicate patient {id}")));
            }
        }
        map
    };
    let mut records = Vec::with_capacity(contours.len());
    for (id, (li, ma)) in contours {
        let cal = calibration
            .get(&id)
            .ok_or_else(|| Error::MissingCalibration(id.clone()))?;
        let (derived_patient, derived_side) = patient_and_side(&id);
        let patient_id = cal.patient_id.clone().unwrap_or(derived_patient);
        let side = cal.side.or(derived_side).unwrap_or_else(|| {
            log::warn!("image {id}: side unknown, assuming left");
            ImageSide::Left
        });
        let row = clinical
            .get(&patient_id)
            .ok_or_else(|| Error::MissingClinical(patient_id.clone()))?;
        records.push(ImageRecord {
            meta: CalibratedImageMeta {
                image_id: id,
                kappa: cal.kappa,
                height: cal.height.unwrap_or(default_size),
                width: cal.width.unwrap_or(default_size),
                patient_id,
                side,
            },
            li_path: li.expect("checked above"),
            ma_path: ma.expect("checked above"),
            features: row.features,
            label: row.label,
            avail: row.avail,
        });
    }
    DatasetIndex::new(records)
}
