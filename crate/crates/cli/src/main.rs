use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use rastile::bench::{self, ScalingBench, TileSizeBench, MIB};
use rastile::cluster::ClusterConfig;
use rastile::ingest::{Engine, IngestOptions};
use rastile::metadata::{self, Dialect};
use rastile::query::{self, TileQuery};
use rastile::raster::{RasterBand, RasterImage, Tile, DEFAULT_TILE_SIZE};
use rastile::raster_file::{write_raster, write_synthetic};
use rastile::{GeoExtent, GeoPoint, DATA_DIR_ENV};

const DEFAULT_DATA_DIR: &str = "rastile-data";

/// Tile-pyramid raster store over a simulated cluster.
#[derive(Parser)]
#[command(name = "rastile", version, arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Slice an image into a tile pyramid and store it with its metadata.
    Ingest(IngestArgs),
    /// Retrieve tiles by bounding box or point.
    #[command(subcommand)]
    Query(QueryCommand),
    /// Work with source metadata documents.
    #[command(subcommand)]
    Meta(MetaCommand),
    /// Write a deterministic synthetic raster file.
    Gen {
        width: u32,
        height: u32,
        bands: u32,
        seed: u64,
        out: PathBuf,
    },
    /// Run a benchmark and emit CSV.
    Bench(BenchArgs),
}

#[derive(Args)]
struct DataDir {
    /// Data directory; RASTILE_DATA_DIR takes precedence.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
}

impl DataDir {
    fn resolve(&self) -> PathBuf {
        std::env::var_os(DATA_DIR_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .or_else(|| self.data_dir.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DialectArg {
    LandsatMtl,
    Zy3Kv,
}

impl From<DialectArg> for Dialect {
    fn from(d: DialectArg) -> Dialect {
        match d {
            DialectArg::LandsatMtl => Dialect::LandsatMtl,
            DialectArg::Zy3Kv => Dialect::Zy3Kv,
        }
    }
}

#[derive(Args)]
struct IngestArgs {
    raster: PathBuf,
    metadata: PathBuf,
    /// Metadata dialect; guessed from the document when omitted.
    #[arg(long, value_enum)]
    dialect: Option<DialectArg>,
    #[arg(long, default_value_t = DEFAULT_TILE_SIZE)]
    tile_size: u32,
    /// Pyramid levels; defaults to all levels down to one tile.
    #[arg(long)]
    levels: Option<u32>,
    /// Store every band in its own cell instead of one cell per address.
    #[arg(long)]
    unpacked: bool,
    /// Simulated node count of a new data directory.
    #[arg(long)]
    nodes: Option<usize>,
    /// Hilbert codes per placement bucket of a new data directory.
    #[arg(long)]
    bucket: Option<u64>,
    /// Tiles per flush group of a new data directory.
    #[arg(long)]
    period: Option<usize>,
    #[command(flatten)]
    dir: DataDir,
}

#[derive(Subcommand)]
enum QueryCommand {
    /// Tiles meeting a box; writes the cropped mosaic.
    Bbox {
        raster_id: u16,
        band: u32,
        level: u32,
        #[arg(allow_negative_numbers = true)]
        west: f64,
        #[arg(allow_negative_numbers = true)]
        south: f64,
        #[arg(allow_negative_numbers = true)]
        east: f64,
        #[arg(allow_negative_numbers = true)]
        north: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        dir: DataDir,
    },
    /// The tile containing a point; writes its valid pixels.
    Point {
        raster_id: u16,
        band: u32,
        level: u32,
        #[arg(allow_negative_numbers = true)]
        lon: f64,
        #[arg(allow_negative_numbers = true)]
        lat: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        dir: DataDir,
    },
}

#[derive(Subcommand)]
enum MetaCommand {
    /// Print the unified record of a source document as JSON.
    Normalize {
        file: PathBuf,
        #[arg(long, value_enum)]
        dialect: DialectArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    Tilesize,
    Scaling,
}

#[derive(Args)]
struct BenchArgs {
    experiment: Experiment,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    runs: usize,
    /// Data sizes in MiB, comma separated.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<u64>>,
    /// Tile sizes (tilesize) or node counts (scaling), comma separated.
    #[arg(long, value_delimiter = ',')]
    sweep: Option<Vec<u64>>,
    /// Scratch directory for the stores under test.
    #[arg(long)]
    work_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            eprintln!("error: {}", chain.join(": ").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(args) => ingest(args),
        Command::Query(q) => run_query(q),
        Command::Meta(MetaCommand::Normalize { file, dialect }) => {
            let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let record = metadata::normalize(&metadata::parse_source(&text, dialect.into())?)?;
            record.ensure_valid()?;
            println!("{}", record.to_json()?);
            Ok(())
        }
        Command::Gen { width, height, bands, seed, out } => {
            let header = write_synthetic(&out, width, height, bands, seed)?;
            println!("{} {}", out.display(), header.name);
            Ok(())
        }
        Command::Bench(args) => run_bench(args),
    }
}

fn ingest(args: IngestArgs) -> Result<()> {
    let root = args.dir.resolve();
    let requested = ClusterConfig {
        node_count: args.nodes.unwrap_or(ClusterConfig::default().node_count),
        bucket_size: args.bucket.unwrap_or(ClusterConfig::default().bucket_size),
        period_size: args.period.unwrap_or(ClusterConfig::default().period_size),
    };
    let engine = Engine::open_or_create(&root, requested)?;
    let actual = *engine.cluster().config();
    let clashes = [
        args.nodes.filter(|&n| n != actual.node_count).map(|_| "--nodes"),
        args.bucket.filter(|&b| b != actual.bucket_size).map(|_| "--bucket"),
        args.period.filter(|&p| p != actual.period_size).map(|_| "--period"),
    ];
    if let Some(flag) = clashes.into_iter().flatten().next() {
        bail!("{flag} differs from the existing data directory {} ({actual:?})", root.display());
    }

    let dialect = match args.dialect {
        Some(d) => d.into(),
        None => {
            let text = std::fs::read_to_string(&args.metadata)
                .with_context(|| format!("reading {}", args.metadata.display()))?;
            Dialect::sniff(&text).ok_or_else(|| anyhow!("cannot tell the dialect of {}; pass --dialect", args.metadata.display()))?
        }
    };
    let opts = IngestOptions { tile_size: args.tile_size, level_count: args.levels, packed: !args.unpacked };
    let out = engine.ingest_files(&args.raster, &args.metadata, dialect, opts)?;
    println!("{}", out.layout.raster_id);
    eprintln!(
        "stored {} as raster {}: {} cells over {} levels",
        out.layout.name, out.layout.raster_id, out.cells, out.layout.level_count
    );
    Ok(())
}

fn run_query(q: QueryCommand) -> Result<()> {
    match q {
        QueryCommand::Bbox { raster_id, band, level, west, south, east, north, out, dir } => {
            let engine = Engine::open(dir.resolve())?;
            let layout = engine.layout(raster_id)?;
            let q = TileQuery { raster_id, band, level, extent: GeoExtent { west, east, south, north } };
            let result = engine.query_bbox(&q)?;
            for t in &result.tiles {
                println!("{}", t.address);
            }
            let Some(window) = &result.window else {
                eprintln!("box does not meet raster {raster_id}");
                return Ok(());
            };
            let band_data = query::mosaic(&result)?;
            let path = out.unwrap_or_else(|| PathBuf::from(format!("mosaic-{raster_id}-{band}-{level}.rsr")));
            save(&path, band_data, layout.window_extent(window), &format!("mosaic-{raster_id}-{band}-{level}"))?;
            eprintln!(
                "{} tiles from {} ranges on {} nodes in {:.3} ms -> {}",
                result.tiles.len(),
                result.ranges_scanned,
                result.nodes_touched,
                result.elapsed.as_secs_f64() * 1e3,
                path.display()
            );
            Ok(())
        }
        QueryCommand::Point { raster_id, band, level, lon, lat, out, dir } => {
            let engine = Engine::open(dir.resolve())?;
            let layout = engine.layout(raster_id)?;
            let tile = engine.query_point(raster_id, band, level, GeoPoint { lon, lat })?;
            let a = tile.address;
            println!("{a}");
            let name = format!("tile-{raster_id}-{band}-{}-{}-{}", a.level, a.row, a.col);
            let path = out.unwrap_or_else(|| PathBuf::from(format!("{name}.rsr")));
            save(&path, valid_pixels(&tile)?, layout.tile_extent(a)?, &name)?;
            eprintln!("tile {a} -> {}", path.display());
            Ok(())
        }
    }
}

fn valid_pixels(tile: &Tile) -> Result<RasterBand> {
    let full = RasterBand::new(tile.tile_size, tile.tile_size, tile.pixels.clone())?;
    Ok(full.crop(0, 0, tile.valid_width, tile.valid_height)?)
}

fn save(path: &Path, band: RasterBand, extent: GeoExtent, name: &str) -> Result<()> {
    let image = RasterImage::new(vec![band], extent)?;
    write_raster(path, &image, name).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn run_bench(args: BenchArgs) -> Result<()> {
    let work = args.work_dir.unwrap_or_else(|| std::env::temp_dir().join(format!("rastile-bench-{}", std::process::id())));
    let sizes = args.sizes.map(|s| s.into_iter().map(|m| m * MIB).collect::<Vec<_>>());
    let sink: Box<dyn Write> = match &args.csv {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    };
    let result = match args.experiment {
        Experiment::Tilesize => {
            let mut cfg = TileSizeBench::new(&work);
            cfg.runs = args.runs;
            if let Some(s) = sizes {
                cfg.data_sizes_bytes = s;
            }
            if let Some(t) = args.sweep {
                cfg.tile_sizes = t.into_iter().map(u32::try_from).collect::<Result<_, _>>()?;
            }
            bench::bench_tile_size(&cfg).and_then(|records| bench::write_csv_tile_size(&records, sink))
        }
        Experiment::Scaling => {
            let mut cfg = ScalingBench::new(&work);
            cfg.runs = args.runs;
            if let Some(s) = sizes {
                cfg.scaling_size_bytes = s[0];
                cfg.data_sizes_bytes = s;
            }
            if let Some(n) = args.sweep {
                cfg.node_counts = n.into_iter().map(|v| v as usize).collect();
            }
            bench::bench_scaling(&cfg).and_then(|out| {
                for (n, skew) in &out.skews {
                    eprintln!("nodes {n}: tile skew {skew:.3}");
                }
                if !out.mismatches.is_empty() {
                    eprintln!("stores disagree on: {}", out.mismatches.join("; "));
                }
                bench::write_csv_scaling(&out.records, sink)
            })
        }
    };
    let _ = std::fs::remove_dir_all(&work);
    Ok(result?)
}
