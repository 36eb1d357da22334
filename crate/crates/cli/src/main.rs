use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use segcomm::color::convert_image;
use segcomm::experiment::{bench, ground_truth_files, load_dataset, sort_records, summarize, sweep_image, SweepGrid};
use segcomm::io::{load_image, load_labelmap, read_sweep_csv, render_overlay, save_image, save_labelmap, write_sweep_csv};
use segcomm::metrics::{aom, select_reference, AomParams};
use segcomm::pipeline::{extract_superpixels, segment_image, superpixel_segmentation, Config, Extractor, RadiusKind, ThresholdMode};
use segcomm::Error;

#[derive(Parser)]
#[command(name = "segcomm", version, about = "Super-pixel and community-detection image segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract super-pixels and write their label map.
    Superpixels {
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Boundary overlay PNG (default: <out>.png).
        #[arg(long)]
        overlay: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run the full pipeline.
    Segment {
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Boundary overlay PNG (default: <out>.png).
        #[arg(long)]
        overlay: Option<PathBuf>,
        /// JSON run statistics (default: <out>.json).
        #[arg(long)]
        stats: Option<PathBuf>,
        /// Merge trace, one "step a b Q" line per merge.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Graph edge list, one "i j weight" line per edge.
        #[arg(long)]
        edges: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Score a label map against the reference of a ground-truth directory.
    Evaluate {
        segmentation: PathBuf,
        gt_dir: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
    },
    /// Pick the ground-truth label map that agrees most with the others.
    SelectReference {
        gt_dir: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
    },
    /// Score every radius/threshold combination on a dataset.
    Sweep {
        /// Directory of PNG/JPEG images.
        #[arg(long)]
        images: PathBuf,
        /// Directory holding one sub-directory of label maps per image stem.
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Keep records already in <out> and only run missing cells.
        #[arg(long)]
        resume: bool,
        /// Comma-separated radii.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        radii: Vec<usize>,
        /// Summary JSON (per-radius mean, deviation and correlation).
        #[arg(long)]
        summary: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Stage timings for sutp and qsutp on one image.
    Bench {
        image: PathBuf,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// sutp, qsutp or slic.
    #[arg(long, default_value = "sutp")]
    extractor: String,
    /// Initial grid cell size in pixels.
    #[arg(long, default_value_t = 10)]
    s: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda1: f64,
    #[arg(long, default_value_t = 0.1)]
    lambda2: f64,
    #[arg(long, default_value_t = 10)]
    iters: usize,
    #[arg(long, default_value_t = 0.001)]
    stop_frac: f64,
    #[arg(long, default_value_t = 80)]
    max_cell: usize,
    #[arg(long, default_value_t = 25.0)]
    var_thresh: f64,
    /// SLIC super-pixel count (default: pixels / s^2).
    #[arg(long)]
    k: Option<usize>,
    /// SLIC compactness.
    #[arg(long, default_value_t = 10.0)]
    m: f64,
    #[arg(long, default_value_t = 4)]
    radius: usize,
    /// hops or centroid.
    #[arg(long, default_value = "hops")]
    radius_mode: String,
    /// "adaptive" or a fixed cutoff.
    #[arg(long, default_value = "adaptive")]
    threshold: String,
    #[arg(long, default_value_t = 0.5)]
    t0: f64,
    #[arg(long, default_value_t = 0.5)]
    dt: f64,
    #[arg(long, default_value_t = 40.0)]
    tmax: f64,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
}

impl ConfigArgs {
    fn to_config(&self) -> Result<Config, Error> {
        let extractor: Extractor = self.extractor.parse()?;
        let radius_kind = match self.radius_mode.as_str() {
            "hops" => RadiusKind::Hops,
            "centroid" => RadiusKind::Centroid,
            other => return Err(Error::InvalidParameter(format!("unknown radius mode {other:?}"))),
        };
        let defaults = Config::default();
        let (threshold_mode, t) = match self.threshold.as_str() {
            "adaptive" => (ThresholdMode::Adaptive, defaults.t),
            v => (
                ThresholdMode::Static,
                v.parse()
                    .map_err(|_| Error::InvalidParameter(format!("threshold must be a number or \"adaptive\", got {v:?}")))?,
            ),
        };
        let config = Config {
            extractor,
            s: self.s,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            max_iters: self.iters,
            stop_frac: self.stop_frac,
            max_cell: self.max_cell,
            var_thresh: self.var_thresh,
            k: self.k,
            m: self.m,
            radius: self.radius,
            radius_kind,
            threshold_mode,
            t,
            t0: self.t0,
            dt: self.dt,
            tmax: self.tmax,
            alpha: self.alpha,
        };
        config.validate()?;
        Ok(config)
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidParameter(_) => 1,
        Error::NotFound(_)
        | Error::Decode { .. }
        | Error::Parse { .. }
        | Error::Io(_)
        | Error::Csv(_)
        | Error::DimensionMismatch { .. }
        | Error::InvalidLabels(_)
        | Error::EmptyInput(_) => 2,
        _ => 3,
    }
}

fn create(path: &Path) -> Result<fs::File, Error> {
    Ok(fs::File::create(path)?)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Error> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value).map_err(std::io::Error::from)?;
    f.write_all(b"\n")?;
    Ok(())
}

fn print_json(value: &impl serde::Serialize) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value).map_err(std::io::Error::from)?;
    println!("{text}");
    Ok(())
}

fn labelmaps_in(dir: &Path) -> Result<(Vec<PathBuf>, Vec<segcomm::metrics::Segmentation>), Error> {
    let files = ground_truth_files(dir)?;
    if files.is_empty() {
        return Err(Error::EmptyInput("no label maps in ground-truth directory"));
    }
    let segs = files.iter().map(|p| load_labelmap(p)).collect::<Result<Vec<_>, _>>()?;
    Ok((files, segs))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Superpixels { image, out, overlay, config } => {
            let config = config.to_config()?;
            let img = load_image(&image)?;
            let (map, iterations) = extract_superpixels(&convert_image(&img), &config)?;
            let seg = superpixel_segmentation(&map)?;
            save_labelmap(&out, &seg)?;
            let overlay = overlay.unwrap_or_else(|| out.with_extension("png"));
            save_image(&overlay, &render_overlay(&img, &seg)?)?;
            println!("{} super-pixels after {} iterations", map.len(), iterations.len());
        }
        Command::Segment {
            image,
            out,
            overlay,
            stats,
            trace,
            edges,
            config,
        } => {
            let config = config.to_config()?;
            let img = load_image(&image)?;
            let result = segment_image(&img, &config)?;
            save_labelmap(&out, &result.segmentation)?;
            let overlay = overlay.unwrap_or_else(|| out.with_extension("png"));
            save_image(&overlay, &render_overlay(&img, &result.segmentation)?)?;
            let summary = result.stats(&config);
            write_json(&stats.unwrap_or_else(|| out.with_extension("json")), &summary)?;
            if let Some(path) = trace {
                let f = std::io::BufWriter::new(create(&path)?);
                match &result.trace {
                    Some(t) => t.write(f)?,
                    None => drop(f),
                }
            }
            if let Some(path) = edges {
                result.graph.write_edges(std::io::BufWriter::new(create(&path)?))?;
            }
            print_json(&summary)?;
        }
        Command::Evaluate {
            segmentation,
            gt_dir,
            alpha,
        } => {
            let p = AomParams::new(alpha)?;
            let seg = load_labelmap(&segmentation)?;
            let (files, gts) = labelmaps_in(&gt_dir)?;
            let r = select_reference(&gts, &p)?;
            let scores = gts.iter().map(|g| aom(&seg, g, &p)).collect::<Result<Vec<_>, _>>()?;
            print_json(&serde_json::json!({
                "reference": files[r],
                "I": scores[r],
                "per_ground_truth": files.iter().zip(&scores).map(|(f, s)| serde_json::json!({"file": f, "I": s})).collect::<Vec<_>>(),
            }))?;
        }
        Command::SelectReference { gt_dir, alpha } => {
            let p = AomParams::new(alpha)?;
            let (files, gts) = labelmaps_in(&gt_dir)?;
            let r = select_reference(&gts, &p)?;
            println!("{r} {}", files[r].display());
        }
        Command::Sweep {
            images,
            gt,
            out,
            resume,
            radii,
            summary,
            config,
        } => {
            let config = config.to_config()?;
            let grid = SweepGrid {
                radii,
                ..SweepGrid::default()
            };
            if grid.radii.is_empty() || grid.radii.contains(&0) {
                return Err(Error::InvalidParameter("radii must be positive".into()));
            }
            let mut records = if resume && out.exists() {
                read_sweep_csv(fs::File::open(&out)?)?
            } else {
                Vec::new()
            };
            let items = load_dataset(&images, &gt)?;
            for item in &items {
                let fresh = sweep_image(item, &config, &grid, &records)?;
                if fresh.is_empty() {
                    continue;
                }
                records.extend(fresh);
                sort_records(&mut records);
                // Rewrite after every image so an interrupted run can resume.
                let tmp = out.with_extension("csv.partial");
                write_sweep_csv(&records, create(&tmp)?)?;
                fs::rename(&tmp, &out)?;
                eprintln!("{}: done", item.id);
            }
            let stats = summarize(&records);
            if let Some(path) = summary {
                write_json(&path, &stats)?;
            }
            print_json(&stats)?;
        }
        Command::Bench { image, repeats, config } => {
            let config = config.to_config()?;
            let img = load_image(&image)?;
            let rows = bench(&img, &config, repeats)?;
            println!("{:<8} {:>12} {:>12} {:>10} {:>10} {:>10} {:>10}", "method", "superpixels", "communities", "SP", "GG", "FG", "total");
            for r in &rows {
                let name = match r.extractor {
                    Extractor::Sutp => "sutp",
                    Extractor::Qsutp => "qsutp",
                    Extractor::Slic => "slic",
                };
                let t = r.timings;
                println!(
                    "{name:<8} {:>12} {:>12} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
                    r.superpixels,
                    r.communities,
                    t.sp_s,
                    t.gg_s,
                    t.fg_s,
                    t.total()
                );
            }
        }
    }
    Ok(())
}

fn configure_threads() -> Result<(), Error> {
    let Ok(value) = std::env::var("SEGCOMM_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidParameter(format!("SEGCOMM_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Invariant(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match configure_threads().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
