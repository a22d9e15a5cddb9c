use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use depthkit::geometry::Pose;
use depthkit::io::{self, PoseRecord};
use depthkit::lidar_depth::{lidar_pipeline, CompletionParams, SpreadWindow, Stages};
use depthkit::metrics::{colorize_depth, mean_abs_error, overlay_points};
use depthkit::stereo::{
    compute_disparity, disparity_to_depth, Algorithm, Directions, MatchParams, StereoConfig,
};
use depthkit::synth::{parse_scene, render_scene, sample_lidar};
use depthkit::wls::WlsParams;
use depthkit::{Error, Result};

#[derive(Parser)]
#[command(name = "depthkit", version, about = "Lidar and stereo depth maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Bm,
    Sgbm,
}

#[derive(Subcommand)]
enum Command {
    /// Project a global-frame point cloud into the camera and complete it to
    /// a dense depth map (16-bit, 1/256 m per unit).
    LidarDepth {
        /// `x y z` per line, global frame.
        #[arg(long)]
        cloud: PathBuf,
        /// Body pose in the global frame: `id tx ty tz qw qx qy qz`.
        #[arg(long)]
        body_pose: PathBuf,
        /// Camera pose in the body frame, same format.
        #[arg(long)]
        cam_pose: PathBuf,
        #[arg(long)]
        intrinsics: PathBuf,
        /// Completion window radius; ngrid=4 uses a 9x9 neighborhood.
        #[arg(long, default_value_t = 4)]
        ngrid: u32,
        /// Near pixels spread into a (2r+1)x(2r+1) window; 1 gives 3x3.
        #[arg(long, default_value_t = 1)]
        spread_radius: u32,
        /// Spread window side length, overriding --spread-radius. Even sizes
        /// have no center and cover offsets -(n/2-1)..=n/2, so 4 spreads
        /// into rows/columns -1..=2 around the pixel.
        #[arg(long)]
        spread_window: Option<u32>,
        /// Pixels nearer than this (meters) are spread before completion.
        #[arg(long, default_value_t = 15.0)]
        near_threshold: f64,
        #[arg(long)]
        out: PathBuf,
        /// Skip depth completion (output the sparse projection).
        #[arg(long)]
        no_completion: bool,
        /// Skip near-pixel spreading before completion.
        #[arg(long)]
        no_preserve: bool,
    },
    /// Disparity and depth from a rectified gray stereo pair.
    StereoDepth {
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
        #[arg(long)]
        intrinsics: PathBuf,
        /// Search range length, a multiple of 16.
        #[arg(long, default_value_t = 64)]
        num_disparities: u32,
        #[arg(long, default_value_t = 0)]
        min_disparity: i32,
        /// Odd matching block side.
        #[arg(long, default_value_t = 5)]
        block_size: u32,
        /// Penalty for a 1 px disparity change (8-bit SAD units); default 8*block^2.
        #[arg(long)]
        p1: Option<u32>,
        /// Penalty for larger jumps; default 32*block^2.
        #[arg(long)]
        p2: Option<u32>,
        #[arg(long, default_value_t = 10)]
        uniqueness_ratio: u32,
        /// SGBM aggregation paths: 1, 4 or 8.
        #[arg(long, default_value_t = 8)]
        directions: u32,
        #[arg(long, value_enum, default_value_t = Algo::Sgbm)]
        algo: Algo,
        /// Gaussian pre-smoothing sigma; 0 disables.
        #[arg(long, default_value_t = 1.0)]
        blur_sigma: f64,
        #[arg(long, default_value_t = 8000.0)]
        wls_lambda: f64,
        #[arg(long, default_value_t = 1.3)]
        wls_alpha: f64,
        #[arg(long)]
        no_wls: bool,
        /// Match without column padding, leaving the leftmost
        /// min+num disparity columns invalid.
        #[arg(long)]
        no_pad: bool,
        /// Disable parabolic sub-pixel refinement.
        #[arg(long)]
        no_subpixel: bool,
        /// Depth output (16-bit, 1/256 m per unit).
        #[arg(long)]
        out: PathBuf,
        /// Optional raw disparity output (16-bit, 1/16 px, i16 bit pattern).
        #[arg(long)]
        disparity_out: Option<PathBuf>,
    },
    /// Average per-pixel depth error of a prediction against ground truth.
    Compare {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Report path; `.json` writes JSON, anything else key/value text.
        #[arg(long)]
        report: PathBuf,
        /// Colorized prediction with ground-truth pixels painted red (PNG).
        #[arg(long)]
        overlay: Option<PathBuf>,
    },
    /// Render a synthetic scene: stereo pair, ground truth, lidar cloud and poses.
    Synth {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn read_scene(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::LidarDepth {
            cloud,
            body_pose,
            cam_pose,
            intrinsics,
            ngrid,
            spread_radius,
            spread_window,
            near_threshold,
            out,
            no_completion,
            no_preserve,
        } => {
            let points = io::load_point_cloud(&cloud)?;
            let body = io::load_pose(&body_pose)?;
            let cam = io::load_pose(&cam_pose)?;
            let intr = io::load_intrinsics(&intrinsics)?;
            let spread = match spread_window {
                Some(n) => SpreadWindow::size(n)?,
                None => SpreadWindow::radius(spread_radius),
            };
            let params = CompletionParams {
                ngrid,
                spread,
                near_threshold,
            };
            let stages = Stages {
                preserve: !no_preserve,
                complete: !no_completion,
            };
            let (map, stats) = lidar_pipeline(&points, &body.pose, &cam.pose, &intr, &params, stages)?;
            log::info!(
                "{} points projected, {} dropped, {} valid pixels",
                stats.projected,
                stats.dropped,
                map.valid_count()
            );
            io::write_depth(&out, &map)
        }
        Command::StereoDepth {
            left,
            right,
            intrinsics,
            num_disparities,
            min_disparity,
            block_size,
            p1,
            p2,
            uniqueness_ratio,
            directions,
            algo,
            blur_sigma,
            wls_lambda,
            wls_alpha,
            no_wls,
            no_pad,
            no_subpixel,
            out,
            disparity_out,
        } => {
            let l = io::read_gray(&left)?;
            let r = io::read_gray(&right)?;
            let intr = io::load_intrinsics(&intrinsics)?;
            if l.dims() != (intr.height, intr.width) {
                return Err(Error::DimensionMismatch {
                    expected: (intr.height, intr.width),
                    actual: l.dims(),
                });
            }
            let area = block_size * block_size;
            let config = StereoConfig {
                params: MatchParams {
                    min_disparity,
                    num_disparities,
                    block_size,
                    p1: p1.unwrap_or(8 * area),
                    p2: p2.unwrap_or(32 * area),
                    uniqueness_ratio,
                    directions: Directions::from_count(directions)?,
                    subpixel: !no_subpixel,
                },
                algorithm: match algo {
                    Algo::Bm => Algorithm::Bm,
                    Algo::Sgbm => Algorithm::Sgbm,
                },
                blur_sigma,
                pad: !no_pad,
                wls: (!no_wls).then_some(WlsParams {
                    lambda: wls_lambda,
                    alpha: wls_alpha,
                    ..WlsParams::default()
                }),
            };
            let disp = compute_disparity(&l, &r, &config)?;
            if let Some(path) = disparity_out {
                io::write_disparity(&path, &disp)?;
            }
            let depth = disparity_to_depth(&disp, &intr);
            log::info!("{} valid depth pixels", depth.valid_count());
            io::write_depth(&out, &depth)
        }
        Command::Compare {
            pred,
            gt,
            report,
            overlay,
        } => {
            let p = io::read_depth(&pred)?;
            let g = io::read_depth(&gt)?;
            let rep = mean_abs_error(&p, &g)?;
            let is_json = report
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("json"));
            let text = if is_json { rep.to_json() } else { rep.to_text() };
            std::fs::write(&report, text).map_err(|source| Error::Io {
                path: report.clone(),
                source,
            })?;
            println!("avg meter error per pixel: {} ({} pixels)", rep.mean_abs_error, rep.pixel_count);
            if let Some(path) = overlay {
                let (lo, hi) = p
                    .values()
                    .iter()
                    .flatten()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &d| (lo.min(d), hi.max(d)));
                let hi = if hi > lo { hi } else { lo + 1.0 };
                let base = colorize_depth(&p, lo, hi)?;
                io::write_rgb(&path, &overlay_points(&base, &g, [255, 0, 0])?)?;
            }
            Ok(())
        }
        Command::Synth { scene, out_dir } => {
            let file = parse_scene(&read_scene(&scene)?, &scene)?;
            let dir = io::ensure_dir(&out_dir)?;
            let rendered = render_scene(&file.spec, &file.intrinsics)?;
            let (body, cam) = file.poses;
            let cloud = sample_lidar(
                &file.spec,
                &file.intrinsics,
                &body,
                &cam,
                file.spec.lidar_points,
                file.spec.seed,
            )?;
            let record = |pose: Pose, id: &str| PoseRecord {
                frame_id: id.to_string(),
                pose,
            };
            io::write_gray(&dir.join("left.png"), &rendered.left)?;
            io::write_gray(&dir.join("right.png"), &rendered.right)?;
            io::write_depth(&dir.join("gt_depth.png"), &rendered.gt_depth)?;
            io::write_mask(
                &dir.join("occluded.png"),
                file.intrinsics.height,
                file.intrinsics.width,
                &rendered.occluded,
            )?;
            io::save_point_cloud(&dir.join("cloud.txt"), &cloud)?;
            io::save_pose(&dir.join("body_pose.txt"), &record(body, "body"))?;
            io::save_pose(&dir.join("camera_pose.txt"), &record(cam, "camera"))?;
            io::save_intrinsics(&dir.join("intrinsics.txt"), &file.intrinsics)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
