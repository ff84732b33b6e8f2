use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use carotid::geometry::{
    parse_contour, rasterize_mask, thickness_profile, wall_descriptors, BoundarySide, Contour, Kappa, RasterWarning,
    WallDescriptors,
};
use carotid::hemodynamics::{biomarkers, quasi_steady_wss, womersley_wss, FluidParams, Rrt, VesselSpec, WssSeries};
use carotid::io::{fmt6, parse_waveform_csv, parse_wss_csv, read_clinical_csv, read_text, write_bytes, wss_to_csv};
use carotid::metrics::{classification_report, expected_calibration_error, roc_auc};
use carotid::pipeline::{
    load_dataset_index, patient_level_split, run_evaluate, run_map_uncertainty, run_uncertainty, DatasetIndex,
    ImageRecord, SplitSpec, Subject,
};
use carotid::riskmodel::{train_risk_head, TrainOptions, TrainedRiskHead, ValidationSet};
use carotid::{gradcheck, io, RunConfig};

use super::{
    CimtArgs, Cli, Command, ContourSource, EvaluateArgs, FlowModel, GradcheckArgs, HemoArgs, Partition, RasterizeArgs,
    SplitArgs, TrainRiskArgs, UncertaintyArgs,
};

struct Ctx {
    cfg: RunConfig,
    out_dir: PathBuf,
}

impl Ctx {
    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.out(name);
        write_bytes(&path, contents.as_bytes())?;
        Ok(path)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .context("building worker pool")?;
    let ctx = Ctx {
        cfg,
        out_dir: cli.out_dir,
    };
    pool.install(|| match cli.command {
        Command::Rasterize(a) => rasterize(&ctx, a),
        Command::Cimt(a) => cimt(&ctx, a),
        Command::Evaluate(a) => evaluate(&ctx, a),
        Command::Split(a) => split(&ctx, a),
        Command::TrainRisk(a) => train_risk(&ctx, a),
        Command::Uncertainty(a) => uncertainty(&ctx, a),
        Command::Hemo(a) => hemo(&ctx, a),
        Command::Gradcheck(a) => run_gradcheck(&ctx, a),
    })
}

fn read_contour(path: &Path, side: BoundarySide) -> Result<Contour> {
    parse_contour(&read_text(path)?, side).with_context(|| format!("parsing {}", path.display()))
}

fn single_pair(src: &ContourSource) -> Result<Option<(Contour, Contour)>> {
    match (&src.li, &src.ma) {
        (Some(li), Some(ma)) => Ok(Some((read_contour(li, BoundarySide::Li)?, read_contour(ma, BoundarySide::Ma)?))),
        _ => Ok(None),
    }
}

fn report_warnings(id: &str, warnings: &[RasterWarning]) {
    for w in warnings {
        match w {
            RasterWarning::ClippedPoints(n) => log::warn!("{id}: {n} contour points clipped to the image"),
            RasterWarning::ZeroArea => log::warn!("{id}: wall polygon has zero area, mask is empty"),
        }
    }
}

fn require_data(src: &ContourSource) -> Result<&Path> {
    match &src.data {
        Some(d) => Ok(d),
        None => bail!("either --data or both --li and --ma are required"),
    }
}

/// Runs `f` over every record in parallel and returns results in id order,
/// failing with the error of the first record (by id) that failed.
fn per_record<T: Send>(
    index: &DatasetIndex,
    f: impl Fn(&ImageRecord) -> carotid::Result<T> + Sync + Send,
) -> carotid::Result<Vec<T>> {
    let results: Vec<carotid::Result<T>> = index.records().par_iter().map(f).collect();
    results.into_iter().collect()
}

fn rasterize(ctx: &Ctx, a: RasterizeArgs) -> Result<()> {
    if let Some((li, ma)) = single_pair(&a.source)? {
        let h = a.height.unwrap_or(ctx.cfg.image_size);
        let w = a.width.unwrap_or(ctx.cfg.image_size);
        let r = rasterize_mask(&li, &ma, h, w);
        report_warnings("mask", &r.warnings);
        let path = ctx.out("mask.pgm");
        io::write_mask(&path, &r.mask)?;
        println!("{} foreground={}", path.display(), r.mask.count_foreground());
        return Ok(());
    }
    let index = load_dataset_index(require_data(&a.source)?, ctx.cfg.image_size)?;
    let masks = per_record(&index, |rec| {
        let (li, ma) = rec.load_contours()?;
        let r = rasterize_mask(&li, &ma, rec.meta.height, rec.meta.width);
        report_warnings(rec.image_id(), &r.warnings);
        io::write_mask(&ctx.out(&format!("masks/{}.pgm", rec.image_id())), &r.mask)?;
        Ok(r.mask.count_foreground())
    })?;
    println!("wrote {} masks to {}", masks.len(), ctx.out("masks").display());
    Ok(())
}

const CIMT_HEADER: &str = "image_id,cimt_mm,max_thickness_mm,thickness_std_mm,wall_area_ratio,boundary_smoothness_mm";

fn descriptor_row(id: &str, d: &WallDescriptors) -> String {
    format!(
        "{id},{},{},{},{},{}\n",
        fmt6(d.cimt_mm),
        fmt6(d.max_thickness_mm),
        fmt6(d.thickness_std_mm),
        fmt6(d.wall_area_ratio),
        fmt6(d.boundary_smoothness)
    )
}

fn describe(li: &Contour, ma: &Contour, kappa: Kappa, h: usize, w: usize, samples: usize) -> carotid::Result<WallDescriptors> {
    let profile = thickness_profile(li, ma, samples)?;
    let mask = rasterize_mask(li, ma, h, w).mask;
    Ok(wall_descriptors(&profile, kappa, &mask))
}

fn cimt(ctx: &Ctx, a: CimtArgs) -> Result<()> {
    let mut csv = format!("{CIMT_HEADER}\n");
    if let Some((li, ma)) = single_pair(&a.source)? {
        let kappa = Kappa::new(a.kappa.context("--kappa is required with --li/--ma")?)?;
        let h = a.height.unwrap_or(ctx.cfg.image_size);
        let w = a.width.unwrap_or(ctx.cfg.image_size);
        let d = describe(&li, &ma, kappa, h, w, ctx.cfg.resample_points)?;
        csv.push_str(&descriptor_row("input", &d));
    } else {
        let index = load_dataset_index(require_data(&a.source)?, ctx.cfg.image_size)?;
        let rows = per_record(&index, |rec| {
            let (li, ma) = rec.load_contours()?;
            let d = describe(&li, &ma, rec.meta.kappa, rec.meta.height, rec.meta.width, ctx.cfg.resample_points)?;
            Ok(descriptor_row(rec.image_id(), &d))
        })?;
        csv.extend(rows);
    }
    let path = ctx.write("cimt.csv", &csv)?;
    print!("{csv}");
    log::info!("wrote {}", path.display());
    Ok(())
}

fn split_spec(ratios: &str, seed: u64) -> Result<SplitSpec> {
    let r: Vec<f64> = ratios
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("bad --ratios {ratios:?}"))?;
    if r.len() != 3 {
        bail!("--ratios needs three comma-separated values");
    }
    Ok(SplitSpec::new(r[0], r[1], r[2], seed)?)
}

fn evaluate(ctx: &Ctx, a: EvaluateArgs) -> Result<()> {
    let full = load_dataset_index(&a.data, ctx.cfg.image_size)?;
    let index = match a.partition {
        Partition::All => full,
        p => {
            let s = patient_level_split(&full, &SplitSpec { seed: ctx.cfg.seed, ..SplitSpec::default() })?;
            match p {
                Partition::Train => s.train,
                Partition::Val => s.val,
                _ => s.test,
            }
        }
    };
    let report = run_evaluate(&ctx.cfg, &index, &a.pred_dir)?;
    let path = ctx.write("evaluation.csv", &report.to_csv())?;
    println!("images={} mean_dice={} -> {}", report.rows.len(), fmt6(report.mean_dice()), path.display());
    Ok(())
}

fn split(ctx: &Ctx, a: SplitArgs) -> Result<()> {
    let index = load_dataset_index(&a.data, ctx.cfg.image_size)?;
    let spec = split_spec(&a.ratios, ctx.cfg.seed)?;
    let s = patient_level_split(&index, &spec)?;
    let path = ctx.write("split.csv", &s.to_csv())?;
    for (name, part) in s.partitions() {
        println!("{name}: patients={} images={}", part.patient_ids().len(), part.len());
    }
    log::info!("wrote {}", path.display());
    Ok(())
}

fn labelled_rows(path: &Path) -> Result<(Vec<String>, Vec<[f64; 5]>, Vec<u8>, Vec<bool>)> {
    let rows = read_clinical_csv(path)?;
    let ids = rows.iter().map(|r| r.patient_id.clone()).collect();
    let x = rows.iter().map(|r| r.features).collect();
    let y = rows.iter().map(|r| r.label.unwrap_or(0)).collect();
    let avail = rows.iter().map(|r| r.avail).collect();
    Ok((ids, x, y, avail))
}

fn train_risk(ctx: &Ctx, a: TrainRiskArgs) -> Result<()> {
    let mut cfg = ctx.cfg.clone();
    if let Some(e) = a.epochs {
        cfg.total_epochs = e;
        cfg.warmup_epochs = cfg.warmup_epochs.min(e);
    }
    let (_, x, y, avail) = labelled_rows(&a.clinical)?;
    let val = match &a.val {
        Some(p) => {
            let (_, vx, vy, va) = labelled_rows(p)?;
            let keep: Vec<usize> = (0..vx.len()).filter(|&i| va[i]).collect();
            Some((keep.iter().map(|&i| vx[i]).collect::<Vec<_>>(), keep.iter().map(|&i| vy[i]).collect::<Vec<_>>()))
        }
        None => None,
    };
    let vs = val.as_ref().map(|(f, l)| ValidationSet { features: f, labels: l });
    let (head, history) = train_risk_head(&x, &y, &avail, &cfg, vs, TrainOptions::default())?;
    ctx.write("model.txt", &head.to_text())?;
    ctx.write("history.csv", &history.to_csv())?;

    let (eval_x, eval_y, scope) = match &val {
        Some((f, l)) => (f.clone(), l.clone(), "val"),
        None => {
            let keep: Vec<usize> = (0..x.len()).filter(|&i| avail[i]).collect();
            (keep.iter().map(|&i| x[i]).collect(), keep.iter().map(|&i| y[i]).collect(), "train")
        }
    };
    let scores = eval_x.iter().map(|r| head.predict(r)).collect::<carotid::Result<Vec<_>>>()?;
    let mut report = format!("scope={scope}\nsamples={}\n", scores.len());
    match roc_auc(&scores, &eval_y) {
        Ok(auc) => writeln!(report, "auc={}", fmt6(auc))?,
        Err(carotid::Error::OneClassOnly) => writeln!(report, "auc=nan")?,
        Err(e) => return Err(e.into()),
    }
    writeln!(report, "ece={}", fmt6(expected_calibration_error(&scores, &eval_y, cfg.ece_bins)?))?;
    report.push_str(&classification_report(&scores, &eval_y, cfg.seg_threshold)?.to_key_value());
    ctx.write("risk_report.txt", &report)?;
    print!("{report}");
    Ok(())
}

fn uncertainty(ctx: &Ctx, a: UncertaintyArgs) -> Result<()> {
    if let (Some(model), Some(clinical)) = (&a.model, &a.clinical) {
        let head = TrainedRiskHead::from_text(&read_text(model)?)
            .with_context(|| format!("loading {}", model.display()))?;
        let subjects: Vec<Subject> = read_clinical_csv(clinical)?
            .into_iter()
            .map(|r| Subject {
                id: r.patient_id,
                features: r.features,
            })
            .collect();
        let report = run_uncertainty(&ctx.cfg, &head, &subjects)?;
        ctx.write("uncertainty.csv", &report.to_csv())?;
        let flagged = report.flagged_ids();
        println!("subjects={} flagged={} [{}]", report.rows.len(), flagged.len(), flagged.join(" "));
        return Ok(());
    }
    let (Some(data), Some(ens)) = (&a.data, &a.ensembles) else {
        bail!("use either --model with --clinical, or --data with --ensembles");
    };
    let index = load_dataset_index(data, ctx.cfg.image_size)?;
    let report = run_map_uncertainty(&ctx.cfg, &index, ens)?;
    ctx.write("map_uncertainty.csv", &report.to_csv())?;
    per_record(&index, |rec| {
        let row = report
            .rows
            .iter()
            .find(|r| r.image_id == rec.image_id())
            .expect("one row per record");
        io::write_variance_map(&ctx.out(&format!("maps/{}_variance.pgm", rec.image_id())), &row.summary.variance)?;
        io::write_mean_map(&ctx.out(&format!("maps/{}_mean.pgm", rec.image_id())), &row.summary.mean)
    })?;
    let rho = report.variance_dice_correlation();
    println!(
        "images={} spearman_variance_dice={}",
        report.rows.len(),
        rho.map_or("nan".to_string(), fmt6)
    );
    Ok(())
}

fn hemo(ctx: &Ctx, a: HemoArgs) -> Result<()> {
    let series: WssSeries = if let Some(path) = &a.wss {
        parse_wss_csv(&read_text(path)?, &path.display().to_string())?
    } else {
        let path = a.waveform.as_ref().expect("clap enforces waveform or wss");
        let w = parse_waveform_csv(&read_text(path)?, &path.display().to_string())?;
        let v = VesselSpec::new(a.radius.expect("clap enforces radius"), 0.0)?;
        let f = FluidParams {
            rho: a.rho,
            mu: a.mu,
            ..FluidParams::default()
        };
        f.validate()?;
        match a.model {
            FlowModel::Womersley => womersley_wss(&w, &v, &f, a.harmonics)?,
            FlowModel::QuasiSteady => quasi_steady_wss(&w, &v, &f),
        }
    };
    let b = biomarkers(&series)?;
    let rrt = match b.rrt {
        Rrt::Finite(v) => fmt6(v),
        Rrt::Singular => "inf".to_string(),
    };
    let text = format!("tawss={}\nosi={}\nrrt={rrt}\n", fmt6(b.tawss), fmt6(b.osi));
    ctx.write("biomarkers.txt", &text)?;
    ctx.write("wss.csv", &wss_to_csv(&series))?;
    print!("{text}");
    Ok(())
}

fn run_gradcheck(ctx: &Ctx, a: GradcheckArgs) -> Result<()> {
    let checks = gradcheck::run_suite(ctx.cfg.seed, a.points, a.step)?;
    let csv = gradcheck::suite_to_csv(&checks, a.tolerance);
    ctx.write("gradcheck.csv", &csv)?;
    print!("{csv}");
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| !c.passed(a.tolerance))
        .map(|c| c.kernel)
        .collect();
    if !failed.is_empty() {
        return Err(carotid::Error::invalid(format!("gradient check failed for {}", failed.join(", "))).into());
    }
    Ok(())
}
