use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::geometry::rasterize_mask;
use crate::grid::{Grid, ProbMap};
use crate::io::{fmt6, Pgm};
use crate::metrics::{dice, spearman};
use crate::riskmodel::{Features, TrainedRiskHead};
use crate::uncertainty::{mc_aggregate_map, summarize_scalar, UncertaintySummary};

use super::dataset::DatasetIndex;

#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: String,
    pub features: Features,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectUncertainty {
    pub id: String,
    pub summary: UncertaintySummary<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyReport {
    pub rows: Vec<SubjectUncertainty>,
}

impl UncertaintyReport {
    pub fn flagged_ids(&self) -> Vec<&str> {
        self.rows
            .iter()
            .filter(|r| r.summary.flagged)
            .map(|r| r.id.as_str())
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("subject_id,mean_risk,variance,flagged\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{}\n",
                r.id,
                fmt6(r.summary.mean),
                fmt6(r.summary.variance),
                u8::from(r.summary.flagged)
            ));
        }
        s
    }
}

/// FNV-1a, used to give every subject its own dropout seed independent of
/// which other subjects are in the batch.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn subject_seed(run_seed: u64, subject_id: &str) -> u64 {
    run_seed ^ fnv1a(subject_id.as_bytes())
}

/// K dropout-active passes per subject, aggregated into mean, variance and a
/// review flag. Rows are sorted by subject id.
pub fn run_uncertainty(cfg: &RunConfig, head: &TrainedRiskHead, subjects: &[Subject]) -> Result<UncertaintyReport> {
    if subjects.is_empty() {
        return Err(Error::EmptyInput("no subjects to score"));
    }
    if cfg.mc_samples == 0 {
        return Err(Error::invalid("mc_samples must be at least 1"));
    }
    let results: Vec<Result<SubjectUncertainty>> = subjects
        .par_iter()
        .map(|s| {
            let draws = head.mc_predict(&s.features, cfg.mc_samples, subject_seed(cfg.seed, &s.id))?;
            Ok(SubjectUncertainty {
                id: s.id.clone(),
                summary: summarize_scalar(&draws, cfg.review_tau)?,
            })
        })
        .collect();
    let mut rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(UncertaintyReport { rows })
}

/// Per-image map ensemble result: the pixel-wise summary plus the Dice of
/// the thresholded mean map against the annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct MapUncertaintyRow {
    pub image_id: String,
    pub samples: usize,
    pub summary: UncertaintySummary<Grid<f64>>,
    pub dice: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapUncertaintyReport {
    pub rows: Vec<MapUncertaintyRow>,
}

impl MapUncertaintyReport {
    /// Rank correlation between mean pixel variance and Dice; `None` when
    /// either column is constant or there are fewer than two images.
    pub fn variance_dice_correlation(&self) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().map(|r| r.summary.review_score()).collect();
        let d: Vec<f64> = self.rows.iter().map(|r| r.dice).collect();
        spearman(&v, &d)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("image_id,samples,mean_variance,dice,flagged\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.image_id,
                r.samples,
                fmt6(r.summary.review_score()),
                fmt6(r.dice),
                u8::from(r.summary.flagged)
            ));
        }
        let rho = self.variance_dice_correlation().unwrap_or(f64::NAN);
        s.push_str(&format!("spearman_variance_dice,,{},,\n", fmt6(rho)));
        s
    }
}

/// Sorted `.pgm` files in `<ensemble_dir>/<image_id>/`.
pub fn ensemble_files(ensemble_dir: &Path, image_id: &str) -> Result<Vec<PathBuf>> {
    let dir = ensemble_dir.join(image_id);
    if !dir.is_dir() {
        return Err(Error::MissingPrediction(image_id.to_string()));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(&dir, err)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::MissingPrediction(image_id.to_string()));
    }
    Ok(files)
}

fn read_prob_map(path: &Path) -> Result<ProbMap> {
    let pgm = Pgm::read(path)?;
    let max = pgm.maxval as f64;
    ProbMap::new(pgm.pixels.map(|&v| v as f64 / max))
}

/// Aggregates stochastic probability-map ensembles stored per image under
/// `ensemble_dir` and relates their spread to segmentation accuracy.
pub fn run_map_uncertainty(cfg: &RunConfig, index: &DatasetIndex, ensemble_dir: &Path) -> Result<MapUncertaintyReport> {
    let results: Vec<Result<MapUncertaintyRow>> = index
        .records()
        .par_iter()
        .map(|rec| {
            let maps = ensemble_files(ensemble_dir, rec.image_id())?
                .iter()
                .map(|p| read_prob_map(p))
                .collect::<Result<Vec<_>>>()?;
            let summary = mc_aggregate_map(&maps, cfg.review_tau)?;
            let (li, ma) = rec.load_contours()?;
            let (h, w) = summary.mean.shape();
            let truth = rasterize_mask(&li, &ma, h, w).mask;
            let predicted = summary.mean.map(|&p| p >= cfg.seg_threshold);
            Ok(MapUncertaintyRow {
                image_id: rec.image_id().to_string(),
                samples: maps.len(),
                dice: dice(&predicted, &truth)?,
                summary,
            })
        })
        .collect();
    Ok(MapUncertaintyReport {
        rows: results.into_iter().collect::<Result<Vec<_>>>()?,
    })
}
