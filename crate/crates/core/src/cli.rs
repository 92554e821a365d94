//! Command-line front end: `filter`, `channels`, `prepare` and `eval`.
//!
//! Exit codes: 0 success, 1 partial failure (some inputs skipped or
//! unmatched), 2 usage, configuration or input error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::channels::{ablation_channels_with, Ablation, ChannelConfig, VectorMode};
use crate::dataset::{prepare, write_dataset, AugmentRanges, LabeledImage, Manifest, PrepareConfig, Sample, PATCH_SIZE};
use crate::error::{Error, Result};
use crate::filter::{cascade_per_spacing, fuse_spacings, FilterConfig, DEFAULT_KAPPA, DEFAULT_LENGTH, DEFAULT_SPACINGS};
use crate::image::{load_image, load_mask, normalize_minmax, save_image, BinaryMask, ChannelPolicy};
use crate::metrics::evaluate_dataset_with;
use crate::par::Execution;
use crate::vector::{render_vector_field, theta_map_with};

const OVERLAY_STEP: usize = 6;
const RASTER_EXTENSIONS: [&str; 4] = ["png", "pgm", "ppm", "pnm"];

#[derive(Debug, Parser)]
#[command(name = "odos", version, about = "Curvilinear-structure enhancement and segmentation-input preparation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Key-value (TOML) file with defaults for any flag; explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Multi-spacing line amplitude of one image.
    Filter(FilterCmd),
    /// Network input planes of one image.
    Channels(ChannelsCmd),
    /// Augmented 128×128 patch dataset from `<dir>/images` and `<dir>/labels`.
    Prepare(PrepareCmd),
    /// Score predicted masks against ground truth.
    Eval(EvalCmd),
}

#[derive(Debug, Clone, Default, Args)]
pub struct FilterFlags {
    #[arg(long)]
    pub length: Option<usize>,
    /// Comma-separated, strictly increasing.
    #[arg(long, value_delimiter = ',')]
    pub spacings: Option<Vec<u32>>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long, value_enum)]
    pub channel_policy: Option<ChannelPolicy>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ChannelFlags {
    #[command(flatten)]
    pub filter: FilterFlags,
    #[arg(long, value_enum)]
    pub vector_mode: Option<VectorMode>,
    #[arg(long, value_enum)]
    pub ablation: Option<Ablation>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct FilterCmd {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub flags: FilterFlags,
    /// Also write each spacing's cascade as `<output>_s<S>.png`.
    #[arg(long)]
    pub dump_per_spacing: bool,
    /// Draw the reference-spacing orientation field over the input.
    #[arg(long, value_name = "PNG")]
    pub vector_overlay: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ChannelsCmd {
    pub input: Option<PathBuf>,
    /// `.odst` file, or a directory for one PNG per plane.
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub flags: ChannelFlags,
    /// Label stored with the ODST record; all-zero when absent.
    #[arg(long, value_name = "MASK")]
    pub label: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PrepareCmd {
    pub dataset: Option<PathBuf>,
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub flags: ChannelFlags,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub patches_per_image: Option<usize>,
    /// Augmented copies per image; the patches are split among them.
    #[arg(long)]
    pub augmentations: Option<usize>,
    /// Rotation drawn from ±DEG.
    #[arg(long, value_name = "DEG")]
    pub rotation: Option<f64>,
    #[arg(long)]
    pub shear: Option<f64>,
    /// Translation drawn from ±FRAC of the image size.
    #[arg(long, value_name = "FRAC")]
    pub shift: Option<f64>,
    #[arg(long)]
    pub zoom_min: Option<f64>,
    #[arg(long)]
    pub zoom_max: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvalCmd {
    pub pred: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    /// Field-of-view masks; scores count only pixels inside.
    #[arg(long, value_name = "DIR")]
    pub fov: Option<PathBuf>,
    /// Write per-image scores and their mean as CSV.
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
}

/// Every setting of a run. Config files use the same keys; the resolved
/// copy written next to the outputs can be fed back with `--config`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spacings: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub channel_policy: Option<ChannelPolicy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vector_mode: Option<VectorMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ablation: Option<Ablation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patches_per_image: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub augmentations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rotation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shear: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shift: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zoom_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zoom_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dump_per_spacing: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vector_overlay: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pred: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gt: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fov: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    /// Read a config file; relative paths in it are taken from its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in cfg.paths_mut() {
            if let Some(p) = p.as_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    fn paths_mut(&mut self) -> [&mut Option<PathBuf>; 9] {
        [
            &mut self.input,
            &mut self.output,
            &mut self.label,
            &mut self.vector_overlay,
            &mut self.dataset,
            &mut self.pred,
            &mut self.gt,
            &mut self.fov,
            &mut self.csv,
        ]
    }

    /// Values set in `top` replace those in `self`.
    pub fn overlay(self, top: RunConfig) -> RunConfig {
        RunConfig {
            length: top.length.or(self.length),
            spacings: top.spacings.or(self.spacings),
            kappa: top.kappa.or(self.kappa),
            channel_policy: top.channel_policy.or(self.channel_policy),
            vector_mode: top.vector_mode.or(self.vector_mode),
            ablation: top.ablation.or(self.ablation),
            seed: top.seed.or(self.seed),
            patches_per_image: top.patches_per_image.or(self.patches_per_image),
            augmentations: top.augmentations.or(self.augmentations),
            rotation: top.rotation.or(self.rotation),
            shear: top.shear.or(self.shear),
            shift: top.shift.or(self.shift),
            zoom_min: top.zoom_min.or(self.zoom_min),
            zoom_max: top.zoom_max.or(self.zoom_max),
            jobs: top.jobs.or(self.jobs),
            dump_per_spacing: top.dump_per_spacing.or(self.dump_per_spacing),
            input: top.input.or(self.input),
            output: top.output.or(self.output),
            label: top.label.or(self.label),
            vector_overlay: top.vector_overlay.or(self.vector_overlay),
            dataset: top.dataset.or(self.dataset),
            pred: top.pred.or(self.pred),
            gt: top.gt.or(self.gt),
            fov: top.fov.or(self.fov),
            csv: top.csv.or(self.csv),
        }
    }

    pub fn filter_config(&self) -> Result<FilterConfig> {
        FilterConfig::new(
            self.length.unwrap_or(DEFAULT_LENGTH),
            self.spacings.clone().unwrap_or_else(|| DEFAULT_SPACINGS.to_vec()),
            self.kappa.unwrap_or(DEFAULT_KAPPA),
        )
    }

    pub fn channel_config(&self) -> Result<ChannelConfig> {
        let cfg = ChannelConfig {
            filter: self.filter_config()?,
            vector_mode: self.vector_mode.unwrap_or_default(),
            channel_policy: self.channel_policy.unwrap_or_default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn prepare_config(&self) -> Result<PrepareConfig> {
        let d = PrepareConfig::default();
        let ranges = AugmentRanges {
            rotation: self.rotation.unwrap_or(d.ranges.rotation),
            shear: self.shear.unwrap_or(d.ranges.shear),
            shift: self.shift.unwrap_or(d.ranges.shift),
            zoom: (self.zoom_min.unwrap_or(d.ranges.zoom.0), self.zoom_max.unwrap_or(d.ranges.zoom.1)),
        };
        ranges.validate()?;
        let augmentations = self.augmentations.unwrap_or(d.augmentations_per_image);
        if augmentations == 0 {
            return Err(Error::InvalidParameter("augmentations must be ≥ 1".into()));
        }
        Ok(PrepareConfig {
            channels: self.channel_config()?,
            ablation: self.ablation.unwrap_or_default(),
            seed: self.seed.unwrap_or(d.seed),
            patches_per_image: self.patches_per_image.unwrap_or(d.patches_per_image),
            augmentations_per_image: augmentations,
            ranges,
        })
    }

    fn with_filter(mut self, f: &FilterConfig, policy: ChannelPolicy) -> Self {
        self.length = Some(f.length);
        self.spacings = Some(f.spacings.clone());
        self.kappa = Some(f.kappa);
        self.channel_policy = Some(policy);
        self
    }

    fn with_channels(self, c: &ChannelConfig, ablation: Ablation) -> Self {
        let mut s = self.with_filter(&c.filter, c.channel_policy);
        s.vector_mode = Some(c.vector_mode);
        s.ablation = Some(ablation);
        s
    }

    fn with_prepare(self, p: &PrepareConfig) -> Self {
        let mut s = self.with_channels(&p.channels, p.ablation);
        s.seed = Some(p.seed);
        s.patches_per_image = Some(p.patches_per_image);
        s.augmentations = Some(p.augmentations_per_image);
        s.rotation = Some(p.ranges.rotation);
        s.shear = Some(p.ranges.shear);
        s.shift = Some(p.ranges.shift);
        s.zoom_min = Some(p.ranges.zoom.0);
        s.zoom_max = Some(p.ranges.zoom.1);
        s
    }

    /// Paths made absolute so the file stays valid wherever it is read from.
    fn absolute(mut self) -> Self {
        for p in self.paths_mut() {
            if let Some(p) = p.as_mut() {
                if let Ok(abs) = std::path::absolute(&*p) {
                    *p = abs;
                }
            }
        }
        self
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }
}

impl FilterFlags {
    fn to_config(&self) -> RunConfig {
        RunConfig {
            length: self.length,
            spacings: self.spacings.clone(),
            kappa: self.kappa,
            channel_policy: self.channel_policy,
            ..Default::default()
        }
    }
}

impl ChannelFlags {
    fn to_config(&self) -> RunConfig {
        RunConfig {
            vector_mode: self.vector_mode,
            ablation: self.ablation,
            ..self.filter.to_config()
        }
    }
}

/// Run outcome short of a hard error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Complete,
    Partial,
}

fn exit_code(r: Result<Status>) -> u8 {
    match r {
        Ok(Status::Complete) => 0,
        Ok(Status::Partial) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

/// Parse `args` (program name first) and run; returns the exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(&cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                2
            } else {
                0
            }
        }
    }
}

pub fn execute(cli: &Cli) -> u8 {
    match &cli.command {
        Command::Filter(c) => cmd_filter(c, &cli.global),
        Command::Channels(c) => cmd_channels(c, &cli.global),
        Command::Prepare(c) => cmd_prepare(c, &cli.global),
        Command::Eval(c) => cmd_eval(c, &cli.global),
    }
}

fn merged(global: &GlobalArgs, flags: RunConfig) -> Result<RunConfig> {
    let base = match &global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let flags = RunConfig {
        jobs: global.jobs,
        ..flags
    };
    Ok(base.overlay(flags))
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a PathBuf> {
    p.as_ref()
        .ok_or_else(|| Error::Config(format!("no {what} given on the command line or in the config file")))
}

/// Run `f` with `jobs` workers. One worker means the sequential path.
fn with_jobs<R: Send>(jobs: Option<usize>, f: impl FnOnce(Execution) -> R + Send) -> Result<R> {
    if jobs == Some(0) {
        return Err(Error::InvalidParameter("--jobs must be ≥ 1".into()));
    }
    #[cfg(feature = "parallel")]
    {
        match jobs {
            None => Ok(f(Execution::default())),
            Some(1) => Ok(f(Execution::Sequential)),
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::InvalidParameter(format!("cannot start {n} workers: {e}")))?;
                Ok(pool.install(|| f(Execution::Parallel)))
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        Ok(f(Execution::Sequential))
    }
}

/// `dir/stem.ext` → `dir/stem<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

pub fn cmd_filter(cmd: &FilterCmd, global: &GlobalArgs) -> u8 {
    exit_code(filter_impl(cmd, global))
}

fn filter_impl(cmd: &FilterCmd, global: &GlobalArgs) -> Result<Status> {
    let cfg = merged(
        global,
        RunConfig {
            input: cmd.input.clone(),
            output: cmd.output.clone(),
            dump_per_spacing: cmd.dump_per_spacing.then_some(true),
            vector_overlay: cmd.vector_overlay.clone(),
            ..cmd.flags.to_config()
        },
    )?;
    let input = required(&cfg.input, "input image")?;
    let output = required(&cfg.output, "output path")?;
    let filter = cfg.filter_config()?;
    let policy = cfg.channel_policy.unwrap_or_default();
    let image = load_image(input, policy)?;

    let (per_spacing, theta) = with_jobs(cfg.jobs, |exec| -> Result<_> {
        let per = cascade_per_spacing(&image, &filter, exec)?;
        let theta = match &cfg.vector_overlay {
            Some(_) => Some(theta_map_with(&image, &filter, filter.reference_spacing(), exec)?),
            None => None,
        };
        Ok((per, theta))
    })??;

    ensure_parent(output)?;
    save_image(&fuse_spacings(&per_spacing), output)?;
    if cfg.dump_per_spacing == Some(true) {
        for (s, resp) in filter.spacings.iter().zip(&per_spacing) {
            save_image(&normalize_minmax(resp), sibling(output, &format!("_s{s}.png")))?;
        }
    }
    if let (Some(path), Some(theta)) = (&cfg.vector_overlay, &theta) {
        ensure_parent(path)?;
        render_vector_field(&image, theta, OVERLAY_STEP, path)?;
    }
    let resolved = cfg.clone().with_filter(&filter, policy).absolute();
    resolved.write(&sibling(output, ".run.toml"))?;
    Ok(Status::Complete)
}

pub fn cmd_channels(cmd: &ChannelsCmd, global: &GlobalArgs) -> u8 {
    exit_code(channels_impl(cmd, global))
}

fn is_odst(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("odst"))
}

fn channels_impl(cmd: &ChannelsCmd, global: &GlobalArgs) -> Result<Status> {
    let cfg = merged(
        global,
        RunConfig {
            input: cmd.input.clone(),
            output: cmd.output.clone(),
            label: cmd.label.clone(),
            ..cmd.flags.to_config()
        },
    )?;
    let input = required(&cfg.input, "input image")?;
    let output = required(&cfg.output, "output path")?;
    let channels = cfg.channel_config()?;
    let ablation = cfg.ablation.unwrap_or_default();
    let image = load_image(input, channels.channel_policy)?;
    let planes = with_jobs(cfg.jobs, |exec| ablation_channels_with(&image, &channels, ablation, exec))??;
    let resolved = cfg.clone().with_channels(&channels, ablation).absolute();

    if is_odst(output) {
        let label = match &cfg.label {
            Some(p) => load_mask(p)?,
            None => BinaryMask::from_fn(image.width(), image.height(), |_, _| false),
        };
        if (label.width(), label.height()) != (image.width(), image.height()) {
            return Err(Error::InvalidInput(format!(
                "label is {}x{} but image is {}x{}",
                label.width(),
                label.height(),
                image.width(),
                image.height()
            )));
        }
        ensure_parent(output)?;
        write_dataset(&[Sample { image: planes, label }], output)?;
        resolved.write(&sibling(output, ".run.toml"))?;
    } else {
        std::fs::create_dir_all(output).map_err(|e| Error::io(output, e))?;
        let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        for (k, plane) in planes.planes().iter().enumerate() {
            save_image(plane, output.join(format!("{stem}_c{k}.png")))?;
        }
        resolved.write(&output.join(format!("{stem}.run.toml")))?;
    }
    Ok(Status::Complete)
}

/// Raster files of `dir` sorted by stem.
fn list_rasters(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_raster = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| RASTER_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if is_raster && path.is_file() {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push((stem.to_string(), path));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Matched image/label pairs plus one message per skipped file.
fn load_pairs(dataset: &Path, policy: ChannelPolicy) -> Result<(Vec<LabeledImage>, Vec<String>)> {
    let images = list_rasters(&dataset.join("images"))?;
    let labels: std::collections::BTreeMap<String, PathBuf> = list_rasters(&dataset.join("labels"))?.into_iter().collect();
    let mut ok = Vec::new();
    let mut problems = Vec::new();
    for (stem, path) in &images {
        let Some(label_path) = labels.get(stem) else {
            problems.push(format!("{}: no label with stem '{stem}'", path.display()));
            continue;
        };
        let loaded = load_image(path, policy).and_then(|img| Ok((img, load_mask(label_path)?)));
        match loaded {
            Err(e) => problems.push(e.to_string()),
            Ok((image, label)) if (image.width(), image.height()) != (label.width(), label.height()) => {
                problems.push(format!("{}: image and label sizes differ", path.display()));
            }
            Ok((image, _)) if image.width() < PATCH_SIZE || image.height() < PATCH_SIZE => {
                problems.push(format!("{}: smaller than {PATCH_SIZE}x{PATCH_SIZE}", path.display()));
            }
            Ok((image, label)) => ok.push(LabeledImage {
                name: stem.clone(),
                image,
                label,
            }),
        }
    }
    let image_stems: std::collections::BTreeSet<&String> = images.iter().map(|(s, _)| s).collect();
    for (stem, path) in &labels {
        if !image_stems.contains(stem) {
            problems.push(format!("{}: no image with stem '{stem}'", path.display()));
        }
    }
    Ok((ok, problems))
}

pub fn cmd_prepare(cmd: &PrepareCmd, global: &GlobalArgs) -> u8 {
    exit_code(prepare_impl(cmd, global))
}

fn prepare_impl(cmd: &PrepareCmd, global: &GlobalArgs) -> Result<Status> {
    let cfg = merged(
        global,
        RunConfig {
            dataset: cmd.dataset.clone(),
            output: cmd.output.clone(),
            seed: cmd.seed,
            patches_per_image: cmd.patches_per_image,
            augmentations: cmd.augmentations,
            rotation: cmd.rotation,
            shear: cmd.shear,
            shift: cmd.shift,
            zoom_min: cmd.zoom_min,
            zoom_max: cmd.zoom_max,
            ..cmd.flags.to_config()
        },
    )?;
    let dataset = required(&cfg.dataset, "dataset directory")?;
    let output = required(&cfg.output, "output .odst path")?;
    let pcfg = cfg.prepare_config()?;

    let (images, problems) = load_pairs(dataset, pcfg.channels.channel_policy)?;
    for p in &problems {
        eprintln!("skipped: {p}");
    }
    if images.is_empty() {
        return Err(Error::InvalidInput(format!("no usable image/label pairs under {}", dataset.display())));
    }
    let records = with_jobs(cfg.jobs, |exec| prepare(&images, &pcfg, exec))??;

    ensure_parent(output)?;
    let (samples, provenance): (Vec<Sample>, Vec<_>) = records.into_iter().map(|r| (r.sample, r.provenance)).unzip();
    write_dataset(&samples, output)?;
    let resolved = cfg.clone().with_prepare(&pcfg).absolute();
    let manifest = Manifest {
        master_seed: pcfg.seed,
        sources: images.iter().map(|i| i.name.clone()).collect(),
        config: serde_json::to_value(&resolved).map_err(|e| Error::Format(e.to_string()))?,
        records: provenance,
    };
    manifest.write(sibling(output, ".manifest.json"))?;
    resolved.write(&sibling(output, ".run.toml"))?;
    Ok(if problems.is_empty() { Status::Complete } else { Status::Partial })
}

pub fn cmd_eval(cmd: &EvalCmd, global: &GlobalArgs) -> u8 {
    exit_code(eval_impl(cmd, global))
}

fn eval_impl(cmd: &EvalCmd, global: &GlobalArgs) -> Result<Status> {
    let cfg = merged(
        global,
        RunConfig {
            pred: cmd.pred.clone(),
            gt: cmd.gt.clone(),
            fov: cmd.fov.clone(),
            csv: cmd.csv.clone(),
            ..Default::default()
        },
    )?;
    let pred = required(&cfg.pred, "prediction directory")?;
    let gt = required(&cfg.gt, "ground-truth directory")?;
    let report = with_jobs(cfg.jobs, |exec| evaluate_dataset_with(pred, gt, cfg.fov.as_deref(), exec))??;

    print!("{}", report.to_table());
    for stem in &report.missing {
        eprintln!("unmatched: {stem}");
    }
    if let Some(csv) = &cfg.csv {
        ensure_parent(csv)?;
        std::fs::write(csv, report.to_csv()).map_err(|e| Error::io(csv, e))?;
        cfg.clone().absolute().write(&sibling(csv, ".run.toml"))?;
    }
    if report.rows.is_empty() {
        return Err(Error::InvalidInput("no prediction/ground-truth pairs found".into()));
    }
    Ok(if report.missing.is_empty() { Status::Complete } else { Status::Partial })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(matches!(RunConfig::parse("lenght = 7"), Err(Error::Config(_))));
        let c = RunConfig::parse("length = 5\nspacings = [1, 4]\nvector-mode = \"symbols\"").unwrap();
        assert_eq!(c.length, Some(5));
        assert_eq!(c.spacings, Some(vec![1, 4]));
        assert_eq!(c.vector_mode, Some(VectorMode::Symbols));
    }

    #[test]
    fn flags_override_config() {
        let file = RunConfig {
            length: Some(5),
            kappa: Some(0.3),
            ..Default::default()
        };
        let flags = RunConfig {
            kappa: Some(0.9),
            ..Default::default()
        };
        let m = file.overlay(flags);
        assert_eq!((m.length, m.kappa), (Some(5), Some(0.9)));
    }

    #[test]
    fn config_paths_relative_to_file() {
        let dir = tempfile::tempdir().unwrap();
        let sub = dir.path().join("cfg");
        std::fs::create_dir(&sub).unwrap();
        let p = sub.join("run.toml");
        std::fs::write(&p, "input = \"a.png\"\noutput = \"/abs/b.png\"\n").unwrap();
        let c = RunConfig::load(&p).unwrap();
        assert_eq!(c.input, Some(sub.join("a.png")));
        assert_eq!(c.output, Some(PathBuf::from("/abs/b.png")));
    }

    #[test]
    fn resolved_config_round_trips() {
        let pc = PrepareConfig::default();
        let c = RunConfig::default().with_prepare(&pc);
        let back = RunConfig::parse(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.prepare_config().unwrap(), pc);
    }

    #[test]
    fn invalid_values_rejected() {
        let c = RunConfig {
            spacings: Some(vec![2, 1]),
            ..Default::default()
        };
        assert!(c.filter_config().is_err());
        let c = RunConfig {
            zoom_min: Some(1.2),
            zoom_max: Some(1.0),
            ..Default::default()
        };
        assert!(c.prepare_config().is_err());
        assert!(with_jobs(Some(0), |_| ()).is_err());
    }

    #[test]
    fn sibling_names() {
        assert_eq!(sibling(Path::new("out/x.odst"), ".run.toml"), PathBuf::from("out/x.run.toml"));
        assert_eq!(sibling(Path::new("y.png"), "_s2.png"), PathBuf::from("y_s2.png"));
    }
}
