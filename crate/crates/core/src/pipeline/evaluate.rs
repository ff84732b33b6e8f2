use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::geometry::{boundaries_from_mask, rasterize_mask, thickness_profile, Contour, Kappa};
use crate::grid::WallMask;
use crate::io::{fmt6, Pgm};
use crate::metrics::{boundary_distance, cimt_error, dice, iou, BoundaryError};

use super::dataset::{DatasetIndex, ImageRecord};

/// Per-image segmentation scores. Boundary and CIMT fields are `None` when
/// the prediction has too few foreground columns to trace boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRow {
    pub image_id: String,
    pub dice: f64,
    pub iou: f64,
    pub li: Option<BoundaryError>,
    pub ma: Option<BoundaryError>,
    pub cimt_error_mm: Option<f64>,
}

impl EvaluationRow {
    /// Mean of the LI and MA symmetric boundary errors.
    pub fn boundary_mean_px(&self) -> Option<f64> {
        Some(0.5 * (self.li?.mean_symmetric_px + self.ma?.mean_symmetric_px))
    }

    pub fn hausdorff_px(&self) -> Option<f64> {
        Some(self.li?.hausdorff_px.max(self.ma?.hausdorff_px))
    }

    fn values(&self) -> [Option<f64>; 9] {
        [
            Some(self.dice),
            Some(self.iou),
            self.boundary_mean_px(),
            self.hausdorff_px(),
            self.cimt_error_mm,
            self.li.map(|b| b.mean_symmetric_px),
            self.li.map(|b| b.hausdorff_px),
            self.ma.map(|b| b.mean_symmetric_px),
            self.ma.map(|b| b.hausdorff_px),
        ]
    }
}

pub const EVALUATION_HEADER: &str = "image_id,dice,iou,boundary_mean_px,hausdorff_px,cimt_error_mm,\
li_boundary_mean_px,li_hausdorff_px,ma_boundary_mean_px,ma_hausdorff_px";

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub rows: Vec<EvaluationRow>,
}

impl EvaluationReport {
    /// Column means over rows where the value is defined; NaN if none are.
    pub fn means(&self) -> [f64; 9] {
        let mut out = [f64::NAN; 9];
        for (c, slot) in out.iter_mut().enumerate() {
            let vals: Vec<f64> = self.rows.iter().filter_map(|r| r.values()[c]).collect();
            if !vals.is_empty() {
                *slot = vals.iter().sum::<f64>() / vals.len() as f64;
            }
        }
        out
    }

    pub fn mean_dice(&self) -> f64 {
        self.means()[0]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(EVALUATION_HEADER);
        s.push('\n');
        let line = |id: &str, vals: &[f64]| {
            let cells: Vec<String> = vals.iter().map(|&v| fmt6(v)).collect();
            format!("{id},{}\n", cells.join(","))
        };
        for r in &self.rows {
            let vals: Vec<f64> = r.values().iter().map(|v| v.unwrap_or(f64::NAN)).collect();
            s.push_str(&line(&r.image_id, &vals));
        }
        s.push_str(&line("mean", &self.means()));
        s
    }
}

pub fn prediction_path(pred_dir: &Path, image_id: &str) -> PathBuf {
    pred_dir.join(format!("{image_id}.pgm"))
}

/// Compares one predicted mask with the annotation it should reproduce.
pub fn evaluate_pair(
    image_id: &str,
    li: &Contour,
    ma: &Contour,
    kappa: Kappa,
    predicted: &WallMask,
    resample_points: usize,
) -> Result<EvaluationRow> {
    let (h, w) = predicted.shape();
    let truth = rasterize_mask(li, ma, h, w).mask;
    let d = dice(predicted, &truth)?;
    let j = iou(predicted, &truth)?;
    let (mut li_err, mut ma_err, mut cimt) = (None, None, None);
    if let Some((pli, pma)) = boundaries_from_mask(predicted) {
        li_err = Some(boundary_distance(&pli, li, Some(kappa))?);
        ma_err = Some(boundary_distance(&pma, ma, Some(kappa))?);
        let gt = thickness_profile(li, ma, resample_points)?;
        let pred = thickness_profile(&pli, &pma, resample_points)?;
        cimt = Some(cimt_error(&pred, &gt, kappa));
    }
    Ok(EvaluationRow {
        image_id: image_id.to_string(),
        dice: d,
        iou: j,
        li: li_err,
        ma: ma_err,
        cimt_error_mm: cimt,
    })
}

fn evaluate_record(cfg: &RunConfig, rec: &ImageRecord, pred_dir: &Path) -> Result<EvaluationRow> {
    let path = prediction_path(pred_dir, rec.image_id());
    if !path.is_file() {
        return Err(Error::MissingPrediction(rec.image_id().to_string()));
    }
    let predicted = Pgm::read(&path)?.to_mask(cfg.seg_threshold);
    let expected = (rec.meta.height, rec.meta.width);
    if predicted.shape() != expected {
        return Err(Error::ShapeMismatch {
            expected,
            found: predicted.shape(),
        });
    }
    let (li, ma) = rec.load_contours()?;
    evaluate_pair(rec.image_id(), &li, &ma, rec.meta.kappa, &predicted, cfg.resample_points)
}

/// Scores every image of `index` against `<pred_dir>/<image_id>.pgm`.
/// Images are processed in parallel; rows and the reported error (the one for
/// the smallest image id) do not depend on scheduling.
pub fn run_evaluate(cfg: &RunConfig, index: &DatasetIndex, pred_dir: &Path) -> Result<EvaluationReport> {
    let results: Vec<Result<EvaluationRow>> = index
        .records()
        .par_iter()
        .map(|rec| evaluate_record(cfg, rec, pred_dir))
        .collect();
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(EvaluationReport { rows })
}
