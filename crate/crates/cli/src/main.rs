use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "carotid", version, about = "Carotid wall analysis toolkit")]
struct Cli {
    /// key=value run configuration file; unspecified keys keep their defaults
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured random seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving all outputs
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads for per-image work (0 = all cores)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fill the wall polygon between LI and MA contours into a PGM mask
    Rasterize(RasterizeArgs),
    /// Thickness profile, CIMT and wall descriptors
    Cimt(CimtArgs),
    /// Score predicted masks against annotations
    Evaluate(EvaluateArgs),
    /// Patient-level train/validation/test split
    Split(SplitArgs),
    /// Train the clinical risk head
    TrainRisk(TrainRiskArgs),
    /// Monte Carlo dropout uncertainty for risk scores or map ensembles
    Uncertainty(UncertaintyArgs),
    /// Wall shear stress biomarkers from a flow waveform or WSS trace
    Hemo(HemoArgs),
    /// Verify analytic loss gradients against finite differences
    Gradcheck(GradcheckArgs),
}

/// Either a dataset root or a single LI/MA pair.
#[derive(Args, Debug)]
struct ContourSource {
    /// Dataset root with calibration.csv, clinical.csv and contours/
    #[arg(long, conflicts_with_all = ["li", "ma"])]
    data: Option<PathBuf>,
    /// LI contour file
    #[arg(long, requires = "ma")]
    li: Option<PathBuf>,
    /// MA contour file
    #[arg(long, requires = "li")]
    ma: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RasterizeArgs {
    #[command(flatten)]
    source: ContourSource,
    /// Mask height in pixels (single-pair mode; defaults to image_size)
    #[arg(long)]
    height: Option<usize>,
    /// Mask width in pixels (single-pair mode; defaults to image_size)
    #[arg(long)]
    width: Option<usize>,
}

#[derive(Args, Debug)]
struct CimtArgs {
    #[command(flatten)]
    source: ContourSource,
    /// Calibration factor in mm per pixel (single-pair mode)
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Partition {
    All,
    Train,
    Val,
    Test,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    /// Directory holding <image_id>.pgm predicted masks
    #[arg(long)]
    pred_dir: PathBuf,
    /// Restrict to one partition of the seeded patient-level split
    #[arg(long, value_enum, default_value = "all")]
    partition: Partition,
}

#[derive(Args, Debug)]
struct SplitArgs {
    #[arg(long)]
    data: PathBuf,
    /// train,val,test ratios
    #[arg(long, default_value = "0.70,0.15,0.15")]
    ratios: String,
}

#[derive(Args, Debug)]
struct TrainRiskArgs {
    /// Training table: patient_id,age,sex,hypertension,diabetes,bmi[,label,avail]
    #[arg(long)]
    clinical: PathBuf,
    /// Optional validation table in the same format
    #[arg(long)]
    val: Option<PathBuf>,
    /// Overrides total_epochs
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args, Debug)]
struct UncertaintyArgs {
    /// Trained model file (risk mode)
    #[arg(long, requires = "clinical", conflicts_with_all = ["data", "ensembles"])]
    model: Option<PathBuf>,
    /// Subjects to score (risk mode)
    #[arg(long)]
    clinical: Option<PathBuf>,
    /// Dataset root (map mode)
    #[arg(long, requires = "ensembles")]
    data: Option<PathBuf>,
    /// Directory of <image_id>/<k>.pgm probability maps (map mode)
    #[arg(long, requires = "data")]
    ensembles: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FlowModel {
    Womersley,
    QuasiSteady,
}

#[derive(Args, Debug)]
struct HemoArgs {
    /// Flow waveform CSV with columns t,q (SI units)
    #[arg(long, conflicts_with = "wss", required_unless_present = "wss", requires = "radius")]
    waveform: Option<PathBuf>,
    /// WSS CSV with columns t,tau_x[,tau_y[,tau_z]]
    #[arg(long)]
    wss: Option<PathBuf>,
    /// Vessel radius in metres
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long, value_enum, default_value = "womersley")]
    model: FlowModel,
    #[arg(long, default_value_t = 10)]
    harmonics: usize,
    /// Blood density, kg/m^3
    #[arg(long, default_value_t = 1060.0)]
    rho: f64,
    /// Newtonian viscosity, Pa s
    #[arg(long, default_value_t = 0.00345)]
    mu: f64,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = carotid::gradcheck::DEFAULT_POINTS)]
    points: usize,
    #[arg(long, default_value_t = carotid::gradcheck::DEFAULT_STEP)]
    step: f64,
    #[arg(long, default_value_t = carotid::gradcheck::DEFAULT_TOLERANCE)]
    tolerance: f64,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let io = err.chain().any(|e| {
        e.downcast_ref::<carotid::Error>().is_some_and(carotid::Error::is_io)
            || e.downcast_ref::<std::io::Error>().is_some()
    });
    if io {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
