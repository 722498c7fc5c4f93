//! Command-line front end: training, inference, benchmarking, model
//! inspection and synthetic data generation.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cross_cbam::checkpoint::Checkpoint;
use cross_cbam::config::RunConfig;
use cross_cbam::imgio;
use cross_cbam::metrics::argmax_predictions;
use cross_cbam::network::build_network;
use cross_cbam::profile::bench_latency;
use cross_cbam::tensor::Shape;
use cross_cbam::trainer;
use cross_cbam::{data, Error};

#[derive(Parser)]
#[command(name = "cross-cbam", about = "Real-time semantic segmentation toolkit", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct ConfigArgs {
    /// Config file of key=value lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Inline overrides, e.g. --set seed=3 --set variant=stdc2.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        cfg.apply_overrides(&self.set)?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Train on synthetic scenes and save a checkpoint.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Checkpoint output path (.xcbm).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-iteration training log as CSV.
        #[arg(long)]
        log_csv: Option<PathBuf>,
    },
    /// Segment one image with a trained checkpoint.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Input image (.png or .ppm), dims divisible by 32.
        #[arg(long)]
        image: PathBuf,
        /// Label-map output (.png or .pgm).
        #[arg(long)]
        out: PathBuf,
        /// Optional palette-colorized rendering (.png or .ppm).
        #[arg(long)]
        color: Option<PathBuf>,
    },
    /// Measure single-image forward latency.
    Bench {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 2)]
        warmup: usize,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Report parameter and compute counts.
    Count {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Finite-difference check of the end-to-end gradient (f64).
    Gradcheck {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 50)]
        samples: usize,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Validate a checkpoint: format, config echo and model compatibility.
    Verify {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Write synthetic scenes (image, labels, colorized labels) to a directory.
    GenData {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 8)]
        count: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Usage(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<(), Error> {
    let mut text = String::from(header);
    text.push('\n');
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    Ok(fs::write(path, text)?)
}

fn run(cmd: Cmd) -> Result<ExitCode, Error> {
    match cmd {
        Cmd::Train { cfg, out, log_csv } => {
            let cfg = cfg.load()?;
            let (model, report) = trainer::train::<f32>(&cfg, |line| println!("{line}"))?;
            if let Some(path) = log_csv {
                let rows: Vec<String> = report
                    .log
                    .iter()
                    .map(|e| format!("{},{},{},{}", e.iter, e.lr, e.loss, e.valid_pixels))
                    .collect();
                write_csv(&path, "iter,lr,loss,valid_pixels", &rows)?;
            }
            if let Some(path) = out {
                Checkpoint::from_params(cfg.to_canonical_string(), &model.params()).save(&path)?;
                println!("saved checkpoint to {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Infer {
            checkpoint,
            image,
            out,
            color,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let cfg = RunConfig::from_str_cfg(&ck.config)?;
            let model = build_network::<f32>(&cfg.network_config(), cfg.seed)?;
            ck.apply_to(&model.params())?;
            let img = imgio::load_image::<f32>(&image)?;
            let output = model.forward(&img, false)?;
            let pred = argmax_predictions(&output.logits);
            imgio::save_labels(&out, &pred)?;
            println!("wrote {}", out.display());
            if let Some(cpath) = color {
                imgio::save_color_labels(&cpath, &pred)?;
                println!("wrote {}", cpath.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Bench {
            cfg,
            warmup,
            reps,
            csv,
        } => {
            let cfg = cfg.load()?;
            let model = build_network::<f32>(&cfg.network_config(), cfg.seed)?;
            let input = data::generate_scene::<f32>(&trainer::scene_spec(&cfg), cfg.seed, 0)?.image;
            let shape = input.shape();
            let report = bench_latency(
                || {
                    model.forward(&input, false).expect("benchmark forward");
                },
                warmup,
                reps,
            )?;
            let prof = model.profile(shape)?;
            println!("input          {shape}");
            println!("params         {}", prof.params);
            println!("compute (MACs) {}", prof.total().total_macs());
            println!("compute (2x)   {}", prof.total().total_flops2x());
            println!("mean   {:.1} ms", report.mean * 1e3);
            println!("median {:.1} ms", report.median * 1e3);
            println!("p95    {:.1} ms", report.p95 * 1e3);
            println!("fps    {:.2}", report.fps);
            if let Some(path) = csv {
                let rows: Vec<String> = report
                    .samples
                    .iter()
                    .enumerate()
                    .map(|(i, s)| format!("{i},{s}"))
                    .collect();
                write_csv(&path, "rep,seconds", &rows)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Count { cfg, csv } => {
            let cfg = cfg.load()?;
            let model = build_network::<f32>(&cfg.network_config(), cfg.seed)?;
            let shape = Shape::new(1, 3, cfg.height, cfg.width);
            let prof = model.profile(shape)?;
            println!("variant             {}", cfg.variant_name());
            println!("input               {shape}");
            println!("parameters          {}", prof.params);
            println!("backbone MACs       {}", prof.backbone.macs);
            println!("decoder MACs        {}", prof.decoder.macs);
            println!("total (MACs conv.)  {}", prof.total().total_macs());
            println!("total (2x conv.)    {}", prof.total().total_flops2x());
            if let Some(path) = csv {
                let rows = vec![
                    format!("variant,{}", cfg.variant_name()),
                    format!("params,{}", prof.params),
                    format!("backbone_macs,{}", prof.backbone.macs),
                    format!("decoder_macs,{}", prof.decoder.macs),
                    format!("total_macs,{}", prof.total().total_macs()),
                    format!("total_flops_2x,{}", prof.total().total_flops2x()),
                ];
                write_csv(&path, "key,value", &rows)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Gradcheck {
            cfg,
            samples,
            eps,
            tol,
        } => {
            let cfg = cfg.load()?;
            let report = trainer::network_gradcheck(&cfg, samples, eps)?;
            println!(
                "checked {} coordinates, worst relative error {:.3e}",
                report.checked, report.worst_rel_err
            );
            if report.passed(tol) {
                println!("gradcheck PASS (tol {tol:.1e})");
                Ok(ExitCode::SUCCESS)
            } else {
                println!("gradcheck FAIL (tol {tol:.1e})");
                Ok(ExitCode::from(1))
            }
        }
        Cmd::Verify { checkpoint } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let cfg = RunConfig::from_str_cfg(&ck.config)?;
            let model = build_network::<f32>(&cfg.network_config(), cfg.seed)?;
            if let Err(e) = ck.apply_to(&model.params()) {
                println!("verify FAIL: {e}");
                return Ok(ExitCode::from(1));
            }
            for t in &ck.tensors {
                if let Some(v) = t.data.iter().find(|v| !v.is_finite()) {
                    println!("verify FAIL: non-finite value {v} in '{}'", t.name);
                    return Ok(ExitCode::from(1));
                }
            }
            println!(
                "verify OK: {} tensors, variant {}",
                ck.tensors.len(),
                cfg.variant_name()
            );
            Ok(ExitCode::SUCCESS)
        }
        Cmd::GenData { cfg, out_dir, count } => {
            let cfg = cfg.load()?;
            fs::create_dir_all(&out_dir)?;
            let spec = trainer::scene_spec(&cfg);
            for i in 0..count {
                let s = data::generate_scene::<f32>(&spec, cfg.seed, i)?;
                imgio::save_image(&out_dir.join(format!("scene_{i:04}.png")), &s.image)?;
                imgio::save_labels(&out_dir.join(format!("scene_{i:04}_labels.png")), &s.labels)?;
                imgio::save_color_labels(&out_dir.join(format!("scene_{i:04}_color.png")), &s.labels)?;
            }
            println!("wrote {count} scenes to {}", out_dir.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
