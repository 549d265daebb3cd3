use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use bridge_vae::dataset::{
    build_dataset, load_dataset, CanvasSize, DatasetOptions, Subtype, IMAGES_PER_SUBTYPE,
};
use bridge_vae::latent::{
    boundary_grid, centroids, decode_points, embed_images, histogram_dim, montage, morph,
    scatter_dims, subtype_pairs, write_scatter_csv, CentroidFile, EmbeddingTable,
    DEFAULT_HISTOGRAM_BINS, DEFAULT_MORPH_STEPS,
};
use bridge_vae::model::{
    train_with_progress, ArchitectureProfile, ModelCheckpoint, TrainConfig, TrainingMetadata, Vae,
    DEFAULT_KL_COEFFICIENT,
};
use bridge_vae::tensor::optim::RmsPropConfig;
use bridge_vae::Image;

use crate::service::{self, ServiceConfig, DEFAULT_MAX_BODY_BYTES};
use crate::{default_centroids_path, file_stem, parse_vector, plot, Model};

#[derive(Debug, Parser)]
#[command(
    name = "bridgevae",
    version,
    about = "Bridge-facade VAE: data, training, latent exploration, serving"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the labeled facade dataset as PNGs plus manifest.json.
    GenData(GenData),
    /// Train a model on a generated dataset and write a checkpoint.
    Train(Train),
    /// Encode every dataset image and write z_mean rows as CSV.
    Embed(Embed),
    /// Average embeddings per subtype into centroids.json.
    Centroids(Centroids),
    /// Decode the segment between two subtype centroids.
    Morph(Morph),
    /// Decode all sign corners at one magnitude into a montage sheet.
    SampleBoundary(SampleBoundary),
    /// Histogram of one latent dimension as CSV.
    Hist(Hist),
    /// Two-dimension projection of the embeddings as CSV.
    Scatter(Scatter),
    /// Tile PNG files into one sheet.
    ExportMontage(ExportMontage),
    /// Decode one latent vector to a PNG.
    Decode(Decode),
    /// Per-dimension histograms, a scatter CSV and quick-look PNGs.
    ExportArtifacts(ExportArtifacts),
    /// Run the HTTP inference service.
    Serve(Serve),
}

#[derive(Debug, Args)]
pub struct GenData {
    #[arg(long)]
    pub out: PathBuf,
    /// Selects the per-subtype subset; rendering itself is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Render at 256×64 instead of 512×128.
    #[arg(long)]
    pub desk: bool,
    /// Subtype names separated by commas; all eight by default.
    #[arg(long, value_delimiter = ',')]
    pub subtypes: Vec<Subtype>,
    /// Keep a seeded subset of this many images per subtype.
    #[arg(long)]
    pub per_subtype: Option<usize>,
}

#[derive(Debug, Args)]
pub struct Train {
    /// Dataset directory or manifest.json.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = DEFAULT_KL_COEFFICIENT)]
    pub kl_coefficient: f64,
    /// Seeds weight initialization, shuffling, dropout and latent noise.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Loss history CSV; defaults to `<out>.loss.csv`.
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Save the batch-norm moving averages as trained instead of
    /// recomputing them over the training set.
    #[arg(long)]
    pub keep_moving_statistics: bool,
}

#[derive(Debug, Args)]
pub struct Embed {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct Centroids {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Defaults to centroids.json beside the checkpoint.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Morph {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, required_unless_present = "all_pairs")]
    pub from: Option<Subtype>,
    #[arg(long, required_unless_present = "all_pairs")]
    pub to: Option<Subtype>,
    /// Morph every unordered pair of subtypes in the centroid table.
    #[arg(long, conflicts_with_all = ["from", "to"])]
    pub all_pairs: bool,
    #[arg(long, default_value_t = DEFAULT_MORPH_STEPS)]
    pub steps: usize,
    /// Defaults to centroids.json beside the checkpoint.
    #[arg(long)]
    pub centroids: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub border: usize,
}

#[derive(Debug, Args)]
pub struct SampleBoundary {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub magnitude: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub border: usize,
}

#[derive(Debug, Args)]
pub struct Hist {
    #[arg(long)]
    pub embeddings: PathBuf,
    /// 0-based latent dimension.
    #[arg(long)]
    pub dim: usize,
    #[arg(long, default_value_t = DEFAULT_HISTOGRAM_BINS)]
    pub bins: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct Scatter {
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Two distinct 0-based dimensions.
    #[arg(long, num_args = 2, value_names = ["I", "J"])]
    pub dims: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportMontage {
    #[arg(long, num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub rows: usize,
    #[arg(long)]
    pub cols: usize,
    #[arg(long, default_value_t = 1)]
    pub border: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct Decode {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Comma-separated coordinates, e.g. `--z=0,0,0,0,0,0,0,-1.5`.
    #[arg(long, allow_hyphen_values = true)]
    pub z: Latent,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArtifacts {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, num_args = 2, value_names = ["I", "J"], default_values_t = [1, 7])]
    pub scatter_dims: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_HISTOGRAM_BINS)]
    pub bins: usize,
}

#[derive(Debug, Args)]
pub struct Serve {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Defaults to centroids.json beside the checkpoint, if present.
    #[arg(long)]
    pub centroids: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MAX_BODY_BYTES)]
    pub max_body_bytes: usize,
}

/// A latent vector given as comma-separated coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Latent(pub Vec<f64>);

impl std::str::FromStr for Latent {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        parse_vector(s).map(Latent)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Embed(a) => embed(a),
        Command::Centroids(a) => centroid_table(a),
        Command::Morph(a) => morph_cmd(a),
        Command::SampleBoundary(a) => sample_boundary(a),
        Command::Hist(a) => hist(a),
        Command::Scatter(a) => scatter(a),
        Command::ExportMontage(a) => export_montage(a),
        Command::Decode(a) => decode(a),
        Command::ExportArtifacts(a) => export_artifacts(a),
        Command::Serve(a) => serve(a),
    }
}

fn gen_data(a: GenData) -> Result<()> {
    let options = DatasetOptions {
        canvas: if a.desk {
            CanvasSize::DESK
        } else {
            CanvasSize::FULL
        },
        subtypes: if a.subtypes.is_empty() {
            Subtype::ALL.to_vec()
        } else {
            a.subtypes
        },
        per_subtype: a.per_subtype,
    };
    let manifest = build_dataset(&a.out, a.seed, &options)?;
    let per = a.per_subtype.unwrap_or(IMAGES_PER_SUBTYPE);
    println!(
        "wrote {} images ({} subtypes × {per}) to {}",
        manifest.entries.len(),
        options.subtypes.len(),
        a.out.display()
    );
    Ok(())
}

fn profile_for(canvas: CanvasSize) -> Result<ArchitectureProfile> {
    let profile = ArchitectureProfile {
        image_height: canvas.height,
        image_width: canvas.width,
        ..ArchitectureProfile::full()
    };
    profile.validate()?;
    Ok(profile)
}

fn train(a: Train) -> Result<()> {
    let (manifest, data) = load_dataset(&a.data)?;
    let profile = profile_for(manifest.canvas)?;
    let config = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        optimizer: RmsPropConfig {
            learning_rate: a.lr,
            ..RmsPropConfig::default()
        },
        kl_coefficient: a.kl_coefficient,
        seed: a.seed,
        recalibrate_statistics: !a.keep_moving_statistics,
    };
    let mut vae = Vae::new(profile, a.seed)?;
    tracing::info!(images = data.len(), epochs = a.epochs, "training");
    let history = train_with_progress(&mut vae, &data.images, &config, |r| {
        tracing::info!(
            epoch = r.epoch,
            reconstruction = r.reconstruction_loss,
            kl = r.kl_loss,
            total = r.total_loss,
            "epoch done"
        );
    })?;
    let metadata = TrainingMetadata {
        init_seed: a.seed,
        train: Some(config),
        history: history.epochs.clone(),
    };
    let ckpt = ModelCheckpoint::from_model(&vae, metadata);
    ckpt.save(&a.out)?;
    let history_path = a.history.unwrap_or_else(|| suffixed(&a.out, ".loss.csv"));
    history.write_csv(&history_path)?;
    println!("checkpoint {} written to {}", ckpt.id(), a.out.display());
    Ok(())
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn embed_table(model: &Model, data: &Path) -> Result<EmbeddingTable> {
    let (_, data) = load_dataset(data)?;
    Ok(embed_images(
        &model.vae,
        &data.images,
        &data.labels,
        &model.checkpoint_id,
    )?)
}

fn embed(a: Embed) -> Result<()> {
    let model = Model::load(&a.ckpt)?;
    let table = embed_table(&model, &a.data)?;
    table.write_csv(&a.out)?;
    println!("{} embeddings written to {}", table.len(), a.out.display());
    Ok(())
}

fn centroid_table(a: Centroids) -> Result<()> {
    let ckpt = ModelCheckpoint::load(&a.ckpt)?;
    let table = EmbeddingTable::read_csv(&a.embeddings, &ckpt.id())?;
    if table.latent_dim != ckpt.profile.latent_dim {
        bail!(
            "embeddings have {} dimensions, checkpoint latent size is {}",
            table.latent_dim,
            ckpt.profile.latent_dim
        );
    }
    let c = centroids(&table, &table.labels())?;
    let file = CentroidFile::new(&table.checkpoint_id, &c)?;
    let out = a.out.unwrap_or_else(|| default_centroids_path(&a.ckpt));
    file.save(&out)?;
    println!("{} centroids written to {}", c.len(), out.display());
    Ok(())
}

fn load_centroids(path: &Path, model: &Model) -> Result<CentroidFile> {
    let file = CentroidFile::load(path)
        .with_context(|| format!("loading centroid table {}", path.display()))?;
    if file.checkpoint_id != model.checkpoint_id {
        bail!(
            "centroid table {} belongs to checkpoint {}, not {}",
            path.display(),
            file.checkpoint_id,
            model.checkpoint_id
        );
    }
    Ok(file)
}

fn morph_cmd(a: Morph) -> Result<()> {
    let model = Model::load(&a.ckpt)?;
    let path = a
        .centroids
        .clone()
        .unwrap_or_else(|| default_centroids_path(&a.ckpt));
    let table = load_centroids(&path, &model)?;
    let pairs = match (a.from, a.to) {
        (Some(from), Some(to)) => vec![(from, to)],
        _ => subtype_pairs()
            .into_iter()
            .filter(|(x, y)| table.get(*x).is_ok() && table.get(*y).is_ok())
            .collect(),
    };
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for (from, to) in pairs {
        let track = morph(&model.vae, table.get(from)?, table.get(to)?, a.steps)?;
        let stem = format!("morph_{}_{}", file_stem(from), file_stem(to));
        for (k, frame) in track.frames.iter().enumerate() {
            frame.save_png(a.out.join(format!("{stem}_{k}.png")))?;
        }
        let strip = montage(&track.frames, 1, track.frames.len(), a.border)?;
        strip.save_png(a.out.join(format!("{stem}.png")))?;
        println!("{stem}: {} frames", track.frames.len());
    }
    Ok(())
}

fn sample_boundary(a: SampleBoundary) -> Result<()> {
    let model = Model::load(&a.ckpt)?;
    let points = boundary_grid(a.magnitude, model.vae.latent_dim())?;
    let images = decode_points(&model.vae, &points)?;
    let side = (images.len() as f64).sqrt().ceil() as usize;
    let sheet = montage(&images, images.len().div_ceil(side), side, a.border)?;
    sheet.save_png(&a.out)?;
    println!(
        "{} decodes at magnitude {} written to {}",
        images.len(),
        a.magnitude,
        a.out.display()
    );
    Ok(())
}

fn hist(a: Hist) -> Result<()> {
    let table = EmbeddingTable::read_csv(&a.embeddings, "")?;
    histogram_dim(&table, a.dim, a.bins)?.write_csv(&a.out)?;
    Ok(())
}

fn scatter(a: Scatter) -> Result<()> {
    let table = EmbeddingTable::read_csv(&a.embeddings, "")?;
    let (i, j) = (a.dims[0], a.dims[1]);
    write_scatter_csv(&a.out, &scatter_dims(&table, i, j)?, i, j)?;
    Ok(())
}

fn export_montage(a: ExportMontage) -> Result<()> {
    let images = a
        .inputs
        .iter()
        .map(Image::load_png)
        .collect::<bridge_vae::Result<Vec<_>>>()?;
    montage(&images, a.rows, a.cols, a.border)?.save_png(&a.out)?;
    Ok(())
}

fn decode(a: Decode) -> Result<()> {
    let model = Model::load(&a.ckpt)?;
    let png = model.decode_png(&a.z.0)?;
    std::fs::write(&a.out, png).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

fn export_artifacts(a: ExportArtifacts) -> Result<()> {
    let model = Model::load(&a.ckpt)?;
    let table = embed_table(&model, &a.data)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    table.write_csv(a.out.join("embeddings.csv"))?;
    for dim in 0..table.latent_dim {
        let h = histogram_dim(&table, dim, a.bins)?;
        h.write_csv(a.out.join(format!("hist_dim{dim}.csv")))?;
        plot::histogram_image(&h).save_png(a.out.join(format!("hist_dim{dim}.png")))?;
    }
    let (i, j) = (a.scatter_dims[0], a.scatter_dims[1]);
    let points = scatter_dims(&table, i, j)?;
    write_scatter_csv(
        a.out.join(format!("scatter_dim{i}_dim{j}.csv")),
        &points,
        i,
        j,
    )?;
    plot::scatter_image(&points).save_png(a.out.join(format!("scatter_dim{i}_dim{j}.png")))?;
    println!(
        "artifacts for {} samples written to {}",
        table.len(),
        a.out.display()
    );
    Ok(())
}

fn serve(a: Serve) -> Result<()> {
    let centroids = match a.centroids {
        Some(p) => Some(p),
        None => Some(default_centroids_path(&a.ckpt)).filter(|p| p.exists()),
    };
    let config = ServiceConfig {
        checkpoint: a.ckpt,
        addr: a.addr,
        centroids,
        max_body_bytes: a.max_body_bytes,
    };
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting async runtime")?;
    runtime.block_on(service::serve(config))
}
