use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use carotid::geometry::{rasterize_mask, ImageSide};
use carotid::grid::Grid;
use carotid::io::{write_mask, Pgm};
use carotid::pipeline::{
    load_dataset_index, patient_level_split, run_evaluate, run_map_uncertainty, run_uncertainty, split_patient_ids,
    SplitSpec, Subject,
};
use carotid::riskmodel::{DropoutMlp, FeatureScaler, TrainedRiskHead};
use carotid::{Error, RunConfig};

fn write(path: &Path, text: &str) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(path, text).unwrap();
}

/// Three images from two patients, 32x32, horizontal walls of differing width.
fn fixture(root: &Path) {
    write(
        &root.join("calibration.csv"),
        "image_id,kappa_mm_per_px,height,width\np1_L,0.06,32,32\np1_R,0.065,32,32\np2_L,0.07,32,32\n",
    );
    write(
        &root.join("clinical.csv"),
        "patient_id,age,sex,hypertension,diabetes,bmi,label\np1,61,M,1,0,27.5,1\np2,55,F,0,0,22.0,0\n",
    );
    for (id, top, bottom) in [("p1_L", 10.0, 14.0), ("p1_R", 11.0, 16.0), ("p2_L", 8.0, 11.0)] {
        write(&root.join(format!("contours/{id}_LI.txt")), &format!("4 {top}\n27 {top}\n"));
        write(&root.join(format!("contours/{id}_MA.txt")), &format!("4 {bottom}\n27 {bottom}\n"));
    }
}

#[test]
fn index_joins_calibration_and_clinical() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let idx = load_dataset_index(dir.path(), 384).unwrap();
    assert_eq!(idx.len(), 3);
    let r = idx.get("p1_R").unwrap();
    assert_eq!(r.meta.kappa.get(), 0.065);
    assert_eq!(r.patient_id(), "p1");
    assert_eq!(r.meta.side, ImageSide::Right);
    assert_eq!((r.meta.height, r.meta.width), (32, 32));
    assert_eq!(r.label, Some(1));
    assert_eq!(idx.get("p2_L").unwrap().features[1], 0.0);
    assert_eq!(idx.patient_ids().len(), 2);
}

#[test]
fn index_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_dataset_index(dir.path(), 32), Err(Error::EmptyDataset)));

    fixture(dir.path());
    fs::remove_file(dir.path().join("contours/p2_L_MA.txt")).unwrap();
    match load_dataset_index(dir.path(), 32) {
        Err(Error::MissingContour(id, which)) => assert_eq!((id.as_str(), which), ("p2_L", "MA")),
        other => panic!("{other:?}"),
    }

    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    write(&dir.path().join("contours/p3_L_LI.txt"), "0 1\n5 1\n");
    write(&dir.path().join("contours/p3_L_MA.txt"), "0 3\n5 3\n");
    assert!(matches!(load_dataset_index(dir.path(), 32), Err(Error::MissingCalibration(id)) if id == "p3_L"));
}

#[test]
fn split_integrity_over_many_seeds() {
    let ids: Vec<String> = (0..97).map(|i| format!("pt{i:03}")).collect();
    for seed in 0..100 {
        let spec = SplitSpec { seed, ..SplitSpec::default() };
        let parts = split_patient_ids(&ids, &spec).unwrap();
        let sets: Vec<BTreeSet<&String>> = parts.iter().map(|p| p.iter().collect()).collect();
        assert!(sets[0].is_disjoint(&sets[1]) && sets[0].is_disjoint(&sets[2]) && sets[1].is_disjoint(&sets[2]));
        assert_eq!(sets.iter().map(BTreeSet::len).sum::<usize>(), ids.len());
        for (part, ratio) in parts.iter().zip([0.70, 0.15, 0.15]) {
            assert!((part.len() as f64 - ratio * ids.len() as f64).abs() <= 1.0);
        }
    }
    let big: Vec<String> = (0..1088).map(|i| format!("q{i}")).collect();
    let parts = split_patient_ids(&big, &SplitSpec::default()).unwrap();
    assert_eq!(parts.each_ref().map(Vec::len), [761, 163, 164]);
}

#[test]
fn images_of_one_patient_share_a_partition() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    for i in 3..12 {
        let id = format!("p{i}_L");
        let cal = fs::read_to_string(dir.path().join("calibration.csv")).unwrap();
        write(&dir.path().join("calibration.csv"), &format!("{cal}{id},0.06,32,32\n"));
        let cli = fs::read_to_string(dir.path().join("clinical.csv")).unwrap();
        write(&dir.path().join("clinical.csv"), &format!("{cli}p{i},50,F,0,1,24,0\n"));
        write(&dir.path().join(format!("contours/{id}_LI.txt")), "2 5\n20 5\n");
        write(&dir.path().join(format!("contours/{id}_MA.txt")), "2 8\n20 8\n");
    }
    let idx = load_dataset_index(dir.path(), 32).unwrap();
    let split = patient_level_split(&idx, &SplitSpec::default()).unwrap();
    let holding_p1: Vec<&str> = split
        .partitions()
        .iter()
        .filter(|(_, part)| part.records().iter().any(|r| r.patient_id() == "p1"))
        .map(|(name, _)| *name)
        .collect();
    assert_eq!(holding_p1.len(), 1);
    let total: usize = split.partitions().iter().map(|(_, p)| p.len()).sum();
    assert_eq!(total, idx.len());
    assert_eq!(split.to_csv(), patient_level_split(&idx, &SplitSpec::default()).unwrap().to_csv());
}

#[test]
fn evaluating_rasterized_annotations_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let idx = load_dataset_index(dir.path(), 32).unwrap();
    let pred = dir.path().join("pred");
    for r in idx.records() {
        let (li, ma) = r.load_contours().unwrap();
        write_mask(&pred.join(format!("{}.pgm", r.image_id())), &rasterize_mask(&li, &ma, 32, 32).mask).unwrap();
    }
    let cfg = RunConfig::default();
    let report = run_evaluate(&cfg, &idx, &pred).unwrap();
    assert_eq!(report.rows.len(), 3);
    for row in &report.rows {
        assert_eq!(row.dice, 1.0);
        assert_eq!(row.iou, 1.0);
    }
    assert_eq!(report.mean_dice(), 1.0);
    assert_eq!(report.to_csv(), run_evaluate(&cfg, &idx, &pred).unwrap().to_csv());

    for r in idx.records() {
        write_mask(&pred.join(format!("{}.pgm", r.image_id())), &Grid::filled(32, 32, false)).unwrap();
    }
    let empty = run_evaluate(&cfg, &idx, &pred).unwrap();
    assert!(empty.rows.iter().all(|r| r.dice == 0.0 && r.cimt_error_mm.is_none()));

    fs::remove_file(pred.join("p1_R.pgm")).unwrap();
    assert!(matches!(run_evaluate(&cfg, &idx, &pred), Err(Error::MissingPrediction(id)) if id == "p1_R"));
    write_mask(&pred.join("p1_R.pgm"), &Grid::filled(16, 32, false)).unwrap();
    assert!(matches!(run_evaluate(&cfg, &idx, &pred), Err(Error::ShapeMismatch { .. })));
}

fn subjects() -> Vec<Subject> {
    (0..6)
        .map(|i| Subject {
            id: format!("s{i}"),
            features: [45.0 + 5.0 * i as f64, (i % 2) as f64, 1.0, 0.0, 21.0 + i as f64],
        })
        .collect()
}

#[test]
fn risk_uncertainty_is_deterministic_and_degenerates_cleanly() {
    let head = TrainedRiskHead {
        model: DropoutMlp::init(16, 0.3, 11).unwrap(),
        scaler: FeatureScaler::fit(&subjects().iter().map(|s| s.features).collect::<Vec<_>>()),
    };
    let cfg = RunConfig::default();
    let a = run_uncertainty(&cfg, &head, &subjects()).unwrap();
    assert_eq!(a, run_uncertainty(&cfg, &head, &subjects()).unwrap());
    assert!(a.rows.iter().all(|r| r.summary.variance > 0.0));

    let mut reversed = subjects();
    reversed.reverse();
    assert_eq!(a.to_csv(), run_uncertainty(&cfg, &head, &reversed).unwrap().to_csv());

    let single = RunConfig { mc_samples: 1, ..cfg.clone() };
    assert!(run_uncertainty(&single, &head, &subjects())
        .unwrap()
        .rows
        .iter()
        .all(|r| r.summary.variance == 0.0));

    let still = TrainedRiskHead {
        model: DropoutMlp::init(16, 0.0, 11).unwrap(),
        scaler: head.scaler.clone(),
    };
    let r = run_uncertainty(&cfg, &still, &subjects()).unwrap();
    for (row, s) in r.rows.iter().zip(subjects()) {
        assert_eq!(row.summary.variance, 0.0);
        assert_eq!(row.summary.mean, still.predict(&s.features).unwrap());
        assert!(!row.summary.flagged);
    }
}

#[test]
fn identical_map_ensembles_have_zero_variance() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let idx = load_dataset_index(dir.path(), 32).unwrap();
    let ens = dir.path().join("ens");
    for r in idx.records() {
        let (li, ma) = r.load_contours().unwrap();
        let mask = rasterize_mask(&li, &ma, 32, 32).mask;
        let pgm = Pgm {
            maxval: 255,
            pixels: mask.map(|&b| if b { 230 } else { 20 }),
        };
        for k in 0..4 {
            pgm.write(&ens.join(r.image_id()).join(format!("{k:03}.pgm"))).unwrap();
        }
    }
    let report = run_map_uncertainty(&RunConfig::default(), &idx, &ens).unwrap();
    assert_eq!(report.rows.len(), 3);
    for row in &report.rows {
        assert_eq!(row.samples, 4);
        assert_eq!(row.summary.review_score(), 0.0);
        assert_eq!(row.dice, 1.0);
        assert!(!row.summary.flagged);
    }
    assert!(report.variance_dice_correlation().is_none());
}
