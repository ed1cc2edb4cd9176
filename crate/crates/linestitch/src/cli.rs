//! Command-line interface.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use linestitch_core::compositor::DEFAULT_CANVAS_CAP;
use linestitch_core::correspondence::ImageSize;
use linestitch_core::geometry::Point2;
use linestitch_core::moving_dlt::{DEFAULT_ETA, DEFAULT_SIGMA};
use linestitch_core::optimizer::EnergyWeights;
use linestitch_core::pipeline::{
    evaluate, stitch_pair, stitch_sequence, PairCorrespondences, PipelineConfig, WarpMode,
};
use linestitch_core::synth::{
    generate, perspective_homography, random_homography, render_pair, SceneSpec, Texture,
};
use serde::Serialize;

use crate::debug::write_debug;
use crate::error::{Error, Result};
use crate::format::{
    format_report, load_correspondences, load_scene, matrix_rows, save_correspondences, save_json,
    save_scene, ReportDoc,
};
use crate::imageio::{load_image, save_image};

#[derive(Debug, Parser)]
#[command(
    name = "linestitch",
    version,
    about = "Line-guided local warping image stitcher"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stitch a target image onto a reference image.
    Stitch(StitchArgs),
    /// Stitch a sequence of images into the frame of an anchor image.
    StitchSeq(SequenceArgs),
    /// Run the pipeline on a pair and print the metric report.
    Metrics(MetricsArgs),
    /// Generate a synthetic pair with ground truth.
    Synth(SynthArgs),
    /// Compare two configurations over a suite of synthetic scenes.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Global,
    Local,
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    #[arg(long, value_enum, default_value_t = Mode::Local)]
    pub mode: Mode,
    /// Mesh cells along the shorter side of the target image.
    #[arg(long, default_value_t = 40)]
    pub mesh_cells: usize,
    /// Moving-DLT Gaussian scale, in pixels.
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    pub sigma: f64,
    /// Moving-DLT weight floor.
    #[arg(long, default_value_t = DEFAULT_ETA)]
    pub eta: f64,
    /// Point alignment weight.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Prewarp (global alignment) weight.
    #[arg(long, default_value_t = 0.001)]
    pub beta: f64,
    /// Smoothness weight.
    #[arg(long, default_value_t = 0.01)]
    pub gamma: f64,
    /// Line correspondence weight.
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    /// Straightness weight.
    #[arg(long, default_value_t = 0.001)]
    pub rho: f64,
    /// Disable the global similarity constraint.
    #[arg(long, alias = "skip-similarity")]
    pub no_similarity: bool,
    /// Stop after the stage-one warp; no mesh refinement.
    #[arg(long)]
    pub skip_refine: bool,
    /// Ignore line correspondences during estimation and refinement.
    #[arg(long)]
    pub points_only: bool,
    #[arg(long, default_value_t = 1)]
    pub collinearity_iters: usize,
    /// RANSAC inlier threshold, in pixels.
    #[arg(long, default_value_t = 3.0)]
    pub ransac_threshold: f64,
    #[arg(long, default_value_t = 2000)]
    pub ransac_iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest canvas, in pixels.
    #[arg(long, default_value_t = DEFAULT_CANVAS_CAP)]
    pub canvas_cap: usize,
}

impl ConfigArgs {
    pub fn to_config(&self) -> Result<PipelineConfig> {
        if self.mesh_cells == 0 || self.collinearity_iters == 0 {
            return Err(Error::Usage(
                "--mesh-cells and --collinearity-iters must be positive".into(),
            ));
        }
        let base = PipelineConfig::default().with_seed(self.seed);
        let mut config = PipelineConfig {
            mode: match self.mode {
                Mode::Global => WarpMode::Global,
                Mode::Local => WarpMode::Local,
            },
            mesh_cells: self.mesh_cells,
            sigma: self.sigma,
            eta: self.eta,
            weights: EnergyWeights {
                alpha: self.alpha,
                beta: self.beta,
                gamma: self.gamma,
                delta: self.delta,
                rho: self.rho,
            },
            similarity: !self.no_similarity,
            refine: !self.skip_refine,
            use_lines: !self.points_only,
            collinearity_iters: self.collinearity_iters,
            canvas_cap: self.canvas_cap,
            ..base
        };
        config.ransac.threshold = self.ransac_threshold;
        config.ransac.max_iters = self.ransac_iters;
        Ok(config)
    }
}

#[derive(Debug, Args)]
pub struct PairArgs {
    /// Image warped onto the reference.
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    /// Correspondence file.
    #[arg(long)]
    pub corr: PathBuf,
}

#[derive(Debug, Args)]
pub struct StitchArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    /// Output PNG.
    #[arg(long)]
    pub out: PathBuf,
    /// Metric report JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Directory for intermediate artifacts.
    #[arg(long)]
    pub debug: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    /// Also write the report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct SequenceArgs {
    /// Input images, indexed from 0 in the order given.
    #[arg(long, num_args = 1.., required = true)]
    pub images: Vec<PathBuf>,
    /// `TARGET,REFERENCE,PATH`: correspondences from image TARGET to image
    /// REFERENCE. Repeat once per pair.
    #[arg(long = "pair", required = true)]
    pub pairs: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub anchor: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-pair error report JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// One plane under a jittered-corner homography.
    Single,
    /// Left and right halves under different homographies.
    TwoPlane,
    /// One plane under a strong perspective homography.
    Perspective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TextureArg {
    Sinusoid,
    Checkerboard,
}

#[derive(Debug, Clone, Args)]
pub struct SceneArgs {
    #[arg(long, value_enum, default_value_t = Preset::Single)]
    pub preset: Preset,
    #[arg(long, default_value_t = 400)]
    pub width: u32,
    #[arg(long, default_value_t = 300)]
    pub height: u32,
    /// Point matches per plane.
    #[arg(long, default_value_t = 100)]
    pub points: usize,
    /// Line matches per plane.
    #[arg(long, default_value_t = 20)]
    pub lines: usize,
    /// Gaussian noise on reference coordinates, in pixels.
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.0)]
    pub outliers: f64,
}

impl SceneArgs {
    pub fn spec(&self, seed: u64) -> Result<SceneSpec> {
        let size = ImageSize::new(self.width, self.height);
        let (w, h) = (self.width as f64, self.height as f64);
        let shift = Point2::new(-0.4 * w, 0.0);
        let mut spec = match self.preset {
            Preset::Single => {
                SceneSpec::single_plane(seed, size, random_homography(seed, size, shift, 0.05 * w)?)
            }
            Preset::TwoPlane => {
                let left = random_homography(seed, size, shift, 0.05 * w)?;
                let right = random_homography(seed.wrapping_add(1 << 32), size, shift, 0.05 * w)?;
                SceneSpec::two_plane(seed, size, left, right)
            }
            Preset::Perspective => {
                let anchor = Point2::new(0.7 * w, 0.5 * h);
                SceneSpec::single_plane(
                    seed,
                    size,
                    perspective_homography(seed, anchor, shift, 0.48 / w),
                )
            }
        };
        spec.n_points = self.points;
        spec.n_lines = self.lines;
        spec.noise_sigma = self.noise;
        spec.outlier_fraction = self.outliers;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene spec JSON; overrides the preset options.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[command(flatten)]
    pub scene_args: SceneArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = TextureArg::Sinusoid)]
    pub texture: TextureArg,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Ablation {
    /// Points-only estimation against the configured run.
    Lines,
    /// Stage-one warp only.
    Refine,
    /// Similarity constraint disabled.
    Similarity,
    /// Global homography instead of the local warp.
    Mode,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Number of scenes, seeded 0..N.
    #[arg(long, default_value_t = 5)]
    pub scenes: u64,
    #[command(flatten)]
    pub scene_args: SceneArgs,
    /// Configuration B is configuration A with this change.
    #[arg(long, value_enum, default_value_t = Ablation::Lines)]
    pub ablation: Ablation,
    /// Table as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Stitch(a) => stitch(a),
        Command::StitchSeq(a) => sequence(a),
        Command::Metrics(a) => metrics(a),
        Command::Synth(a) => synth(a),
        Command::Evaluate(a) => evaluate_cmd(a),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run_pair(
    pair: &PairArgs,
    config: &ConfigArgs,
) -> Result<linestitch_core::pipeline::StitchResult> {
    let config = config.to_config()?;
    let set = load_correspondences(&pair.corr)?;
    let target = load_image(&pair.target)?;
    let reference = load_image(&pair.reference)?;
    Ok(stitch_pair(&target, &reference, &set, &config)?)
}

fn stitch(a: StitchArgs) -> Result<()> {
    let result = run_pair(&a.pair, &a.config)?;
    save_image(&a.out, &result.image)?;
    if let Some(path) = &a.report {
        write_text(path, &format_report(&result.report))?;
    }
    if let Some(dir) = &a.debug {
        write_debug(dir, &result)?;
    }
    for note in &result.registration.notes {
        eprintln!("note: {note}");
    }
    Ok(())
}

fn metrics(a: MetricsArgs) -> Result<()> {
    let result = run_pair(&a.pair, &a.config)?;
    let text = format_report(&result.report);
    print!("{text}");
    if let Some(path) = &a.report {
        write_text(path, &text)?;
    }
    Ok(())
}

fn parse_pair(s: &str) -> Result<(usize, usize, PathBuf)> {
    let mut parts = s.splitn(3, ',');
    let bad = || Error::Usage(format!("--pair expects TARGET,REFERENCE,PATH, got {s:?}"));
    let t = parts
        .next()
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(bad)?;
    let r = parts
        .next()
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(bad)?;
    let path = parts.next().filter(|p| !p.is_empty()).ok_or_else(bad)?;
    Ok((t, r, PathBuf::from(path)))
}

#[derive(Serialize)]
struct PairRow {
    target: usize,
    reference: usize,
    err_p: f64,
    err_l: f64,
    err_mg: f64,
}

#[derive(Serialize)]
struct SequenceReport {
    canvas: [usize; 2],
    pairs: Vec<PairRow>,
}

fn sequence(a: SequenceArgs) -> Result<()> {
    let config = a.config.to_config()?;
    let images = a
        .images
        .iter()
        .map(|p| load_image(p))
        .collect::<Result<Vec<_>>>()?;
    let mut pairs = Vec::with_capacity(a.pairs.len());
    for s in &a.pairs {
        let (target, reference, path) = parse_pair(s)?;
        if target >= images.len() || reference >= images.len() {
            return Err(Error::Usage(format!(
                "--pair {s:?} names an image that was not given"
            )));
        }
        pairs.push(PairCorrespondences {
            target,
            reference,
            set: load_correspondences(&path)?,
        });
    }
    let result = stitch_sequence(&images, &pairs, a.anchor, &config)?;
    save_image(&a.out, &result.image)?;
    if let Some(path) = &a.report {
        let rows = pairs
            .iter()
            .zip(&result.pair_errors)
            .map(|(p, e)| PairRow {
                target: p.target,
                reference: p.reference,
                err_p: e.err_p,
                err_l: e.err_l,
                err_mg: e.err_mg,
            })
            .collect();
        save_json(
            path,
            &SequenceReport {
                canvas: [result.canvas.width, result.canvas.height],
                pairs: rows,
            },
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct GroundTruth {
    homographies: Vec<[[f64; 3]; 3]>,
    outliers: Vec<usize>,
    point_planes: Vec<usize>,
    line_planes: Vec<usize>,
}

fn texture(t: TextureArg) -> Texture {
    match t {
        TextureArg::Sinusoid => Texture::Sinusoid,
        TextureArg::Checkerboard => Texture::Checkerboard { period: 16.0 },
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = match &a.scene {
        Some(path) => load_scene(path)?,
        None => a.scene_args.spec(a.seed)?,
    };
    let scene = generate(&spec)?;
    let (target, reference) = render_pair(&spec, texture(a.texture))?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    save_scene(&a.out.join("scene.json"), &spec)?;
    save_correspondences(&a.out.join("corr.json"), &scene.set)?;
    save_image(&a.out.join("target.png"), &target)?;
    save_image(&a.out.join("reference.png"), &reference)?;
    save_json(
        &a.out.join("ground_truth.json"),
        &GroundTruth {
            homographies: scene.ground_truth.iter().map(matrix_rows).collect(),
            outliers: scene.outliers,
            point_planes: scene.point_planes,
            line_planes: scene.line_planes,
        },
    )
}

#[derive(Serialize)]
struct EvaluationDoc {
    scene: u64,
    config: char,
    #[serde(flatten)]
    report: ReportDoc,
    scale_distortion: f64,
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let config_a = a.config.to_config()?;
    let mut config_b = config_a.clone();
    match a.ablation {
        Ablation::Lines => config_b.use_lines = false,
        Ablation::Refine => config_b.refine = false,
        Ablation::Similarity => config_b.similarity = false,
        Ablation::Mode => config_b.mode = WarpMode::Global,
    }
    let mut scenes = Vec::with_capacity(a.scenes as usize);
    for seed in 0..a.scenes {
        let spec = a.scene_args.spec(seed)?;
        let set = generate(&spec)?.set;
        let (t, r) = render_pair(&spec, Texture::Sinusoid)?;
        scenes.push((t, r, set));
    }
    let rows = evaluate(&[config_a, config_b], &scenes)?;
    println!(
        "{:>5} {:>6} {:>10} {:>10} {:>10}",
        "scene", "config", "cor", "err_mg", "scale"
    );
    let mut docs = Vec::with_capacity(rows.len());
    for row in &rows {
        let name = if row.config == 0 { 'A' } else { 'B' };
        println!(
            "{:>5} {:>6} {:>10.5} {:>10.5} {:>10.5}",
            row.scene, name, row.report.cor, row.report.err_mg, row.scale_distortion
        );
        docs.push(EvaluationDoc {
            scene: row.scene as u64,
            config: name,
            report: ReportDoc::from(&row.report),
            scale_distortion: row.scale_distortion,
        });
    }
    if let Some(path) = &a.report {
        save_json(path, &docs)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(args).unwrap()
    }

    #[test]
    fn default_flags_give_default_config() {
        let cli = parse(&[
            "linestitch",
            "stitch",
            "--target",
            "a",
            "--reference",
            "b",
            "--corr",
            "c",
            "--out",
            "d",
        ]);
        let Command::Stitch(a) = cli.command else {
            panic!()
        };
        assert_eq!(a.config.to_config().unwrap(), PipelineConfig::default());
    }

    #[test]
    fn flags_reach_config() {
        let cli = parse(&[
            "linestitch",
            "metrics",
            "--target",
            "a",
            "--reference",
            "b",
            "--corr",
            "c",
            "--mode",
            "global",
            "--mesh-cells",
            "12",
            "--sigma",
            "4",
            "--eta",
            "0.1",
            "--alpha",
            "2",
            "--beta",
            "0.5",
            "--gamma",
            "0.2",
            "--delta",
            "3",
            "--rho",
            "0.01",
            "--skip-similarity",
            "--skip-refine",
            "--collinearity-iters",
            "3",
            "--ransac-threshold",
            "1.5",
            "--seed",
            "9",
        ]);
        let Command::Metrics(a) = cli.command else {
            panic!()
        };
        let c = a.config.to_config().unwrap();
        assert_eq!(c.mode, WarpMode::Global);
        assert_eq!((c.mesh_cells, c.sigma, c.eta), (12, 4.0, 0.1));
        assert_eq!(
            c.weights,
            EnergyWeights {
                alpha: 2.0,
                beta: 0.5,
                gamma: 0.2,
                delta: 3.0,
                rho: 0.01
            }
        );
        assert!(!c.similarity && !c.refine && c.use_lines);
        assert_eq!(
            (c.collinearity_iters, c.ransac.threshold, c.ransac.seed),
            (3, 1.5, 9)
        );
        assert_eq!(c, c.clone().with_seed(9));
    }

    #[test]
    fn pair_spec() {
        assert_eq!(
            parse_pair("1,0,a/b.json").unwrap(),
            (1, 0, PathBuf::from("a/b.json"))
        );
        assert_eq!(
            parse_pair("2, 1,x,y.json").unwrap(),
            (2, 1, PathBuf::from("x,y.json"))
        );
        assert!(parse_pair("1,0").is_err());
        assert!(parse_pair("a,0,x").is_err());
    }

    #[test]
    fn presets_validate() {
        let cli = parse(&["linestitch", "synth", "--out", "x"]);
        let Command::Synth(a) = cli.command else {
            panic!()
        };
        for preset in [Preset::Single, Preset::TwoPlane, Preset::Perspective] {
            let args = SceneArgs {
                preset,
                ..a.scene_args.clone()
            };
            for seed in 0..3 {
                args.spec(seed).unwrap();
            }
        }
    }
}
