//! `geohub`: centroids, regional clusters, elbow curves, centroid trends and
//! density grids from a TSV of geocoded publication records.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use geohub::pipeline::{self, ElbowParams, GridFormat, Selection};
use geohub::{
    corpus, BBox, CentroidRule, ClusterConfig, ColumnMapping, CurveStatistic, DistanceKernel, LengthUnit, Metric,
    RegionFilter, SelectMode, YearRange,
};

const THREADS_ENV: &str = "GEOHUB_THREADS";

#[derive(Parser, Debug)]
#[command(name = "geohub", version, about = "Geography of geocoded publication records")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Overall planar centroid with RMS and mean distance to it.
    Centroid(CommonArgs),
    /// Weighted k-means regions: centroid CSV plus GeoJSON of cities.
    Cluster {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long)]
        k: usize,
    },
    /// Dispersion for k = 1..=k-max and the selected k.
    Elbow {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long)]
        k_max: usize,
        #[arg(long, value_enum, default_value_t = ModeArg::Radius)]
        mode: ModeArg,
        /// Threshold in --units.
        #[arg(long)]
        threshold: f64,
        #[arg(long, value_enum, default_value_t = StatArg::Rms)]
        statistic: StatArg,
    },
    /// Per-year centroid and dispersion, plus drift statistics.
    Trend(CommonArgs),
    /// Raw and log10(1 + count) density grids.
    Density {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = geohub::raster::DEFAULT_ROWS)]
        rows: usize,
        #[arg(long, default_value_t = geohub::raster::DEFAULT_COLS)]
        cols: usize,
        /// Grid extent `lat_min,lat_max,lon_min,lon_max`; defaults to the region's extent.
        #[arg(long, value_parser = parse_bbox)]
        extent: Option<BBox>,
    },
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Tab-separated records with a header row
    #[arg(long)]
    input: PathBuf,
    /// Primary output file; companion files are written next to it
    #[arg(long)]
    output: PathBuf,
    /// lower48, mainland-china, all, or bbox:lat_min,lat_max,lon_min,lon_max
    #[arg(long, default_value = "all", value_parser = parse_region)]
    region: RegionFilter,
    /// Inclusive year window `first:last`.
    #[arg(long, value_parser = parse_years)]
    years: Option<YearRange>,
    #[arg(long, value_enum, default_value_t = UnitArg::Miles)]
    units: UnitArg,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long, default_value_t = ClusterConfig::DEFAULT_SEED)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = MetricArg::Vincenty)]
    metric: MetricArg,
    /// Use the great-circle distance where Vincenty does not converge.
    #[arg(long)]
    fallback: bool,
    /// Rename an input column, e.g. `--column paper_id=pmid`.
    #[arg(long = "column", value_parser = parse_column)]
    columns: Vec<(String, String)>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long, default_value_t = ClusterConfig::DEFAULT_RESTARTS)]
    restarts: usize,
    #[arg(long, default_value_t = ClusterConfig::DEFAULT_MAX_ITERATIONS)]
    max_iterations: usize,
    #[arg(long, value_enum, default_value_t = RuleArg::Planar)]
    centroid_rule: RuleArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum UnitArg {
    Miles,
    Km,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Geojson,
    Asciigrid,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MetricArg {
    Vincenty,
    GreatCircle,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Delta,
    Radius,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StatArg {
    Rms,
    Mean,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RuleArg {
    Planar,
    Spherical,
}

fn parse_bbox(s: &str) -> Result<BBox, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("'{p}': {e}")))
        .collect::<Result<_, _>>()?;
    if v.len() != 4 {
        return Err("expected lat_min,lat_max,lon_min,lon_max".into());
    }
    BBox::new(v[0], v[1], v[2], v[3]).map_err(|e| e.to_string())
}

fn parse_region(s: &str) -> Result<RegionFilter, String> {
    match s {
        "lower48" => Ok(RegionFilter::Lower48),
        "mainland-china" | "mainland_china" => Ok(RegionFilter::MainlandChina),
        "all" => Ok(RegionFilter::All),
        _ => match s.strip_prefix("bbox:") {
            Some(rest) => parse_bbox(rest).map(RegionFilter::BBox),
            None => Err(format!("unknown region '{s}'")),
        },
    }
}

fn parse_years(s: &str) -> Result<YearRange, String> {
    let (a, b) = s.split_once(':').ok_or("expected first:last")?;
    let a: i32 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: i32 = b.trim().parse().map_err(|e| format!("{e}"))?;
    YearRange::new(a, b).map_err(|e| e.to_string())
}

fn parse_column(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or("expected field=header")?;
    Ok((k.trim().to_owned(), v.trim().to_owned()))
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(String),
    Data(String),
}

impl From<geohub::Error> for Failure {
    fn from(e: geohub::Error) -> Self {
        use geohub::ClusterError;
        match e {
            geohub::Error::Cluster(ClusterError::InvalidConfig(_) | ClusterError::InvalidThreshold) => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Data(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl CommonArgs {
    fn units(&self) -> LengthUnit {
        match self.units {
            UnitArg::Miles => LengthUnit::Miles,
            UnitArg::Km => LengthUnit::Kilometers,
        }
    }

    fn kernel(&self) -> DistanceKernel {
        let metric = match self.metric {
            MetricArg::Vincenty => Metric::Vincenty,
            MetricArg::GreatCircle => Metric::GreatCircle,
        };
        DistanceKernel::new(metric).with_fallback(self.fallback)
    }

    fn mapping(&self) -> Result<ColumnMapping, Failure> {
        let mut m = ColumnMapping::default();
        for (field, header) in &self.columns {
            let slot = match field.as_str() {
                "paper_id" => &mut m.paper_id,
                "year" => &mut m.year,
                "city" => &mut m.city,
                "admin1" => &mut m.admin1,
                "country" => &mut m.country,
                "lat" => &mut m.lat,
                "lon" => &mut m.lon,
                other => return Err(Failure::Usage(format!("unknown column field '{other}'"))),
            };
            *slot = header.clone();
        }
        Ok(m)
    }

    fn selection(&self) -> Result<Selection, Failure> {
        Ok(Selection {
            mapping: self.mapping()?,
            region: self.region,
            years: self.years,
        })
    }

    fn format_or(&self, default: FormatArg, allowed: &[FormatArg]) -> Result<FormatArg, Failure> {
        let f = self.format.unwrap_or(default);
        if allowed.contains(&f) {
            Ok(f)
        } else {
            Err(Failure::Usage(format!("format {f:?} is not available for this subcommand")))
        }
    }

    fn open_input(&self) -> Result<fs::File, Failure> {
        fs::File::open(&self.input).map_err(|e| Failure::Data(format!("{}: {e}", self.input.display())))
    }
}

impl FitArgs {
    fn config(&self, k: usize, common: &CommonArgs) -> ClusterConfig {
        ClusterConfig::new(k)
            .with_restarts(self.restarts)
            .with_max_iterations(self.max_iterations)
            .with_seed(common.seed)
            .with_kernel(common.kernel())
            .with_centroid_rule(match self.centroid_rule {
                RuleArg::Planar => CentroidRule::PlanarMean,
                RuleArg::Spherical => CentroidRule::SphericalMean,
            })
    }
}

/// `out.csv` + `drift` + `csv` → `out.drift.csv`
fn sibling(path: &Path, tag: &str, ext: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = if tag.is_empty() { format!("{stem}.{ext}") } else { format!("{stem}.{tag}.{ext}") };
    path.with_file_name(name)
}

fn rejects_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".rejects.tsv");
    output.with_file_name(name)
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn write_rejects(output: &Path, rejects: &[corpus::Reject]) -> Result<(), Failure> {
    let mut buf = Vec::new();
    corpus::write_rejects(&mut buf, rejects)?;
    write(&rejects_path(output), &buf)
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Centroid(c) => {
            c.format_or(FormatArg::Csv, &[FormatArg::Csv])?;
            let table = pipeline::load_cities(c.open_input()?, &c.selection()?)?;
            write_rejects(&c.output, &table.report.rejects)?;
            let csv = pipeline::centroid_csv(&table, &c.kernel(), c.units(), c.seed)?;
            write(&c.output, &csv)
        }
        Command::Cluster { common: c, fit, k } => {
            let primary = c.format_or(FormatArg::Csv, &[FormatArg::Csv, FormatArg::Geojson])?;
            let table = pipeline::load_cities(c.open_input()?, &c.selection()?)?;
            write_rejects(&c.output, &table.report.rejects)?;
            let (csv, geojson) = pipeline::cluster_outputs(&table, &fit.config(k, &c), c.units())?;
            if primary == FormatArg::Csv {
                write(&c.output, &csv)?;
                write(&sibling(&c.output, "", "geojson"), &geojson)
            } else {
                write(&c.output, &geojson)?;
                write(&sibling(&c.output, "", "csv"), &csv)
            }
        }
        Command::Elbow {
            common: c,
            fit,
            k_max,
            mode,
            threshold,
            statistic,
        } => {
            c.format_or(FormatArg::Csv, &[FormatArg::Csv])?;
            if !threshold.is_finite() || threshold <= 0.0 {
                return Err(Failure::Usage("--threshold must be a positive number".into()));
            }
            let params = ElbowParams {
                k_max,
                mode: match mode {
                    ModeArg::Delta => SelectMode::Delta,
                    ModeArg::Radius => SelectMode::Radius,
                },
                threshold: c.units().to_distance(threshold),
                statistic: match statistic {
                    StatArg::Rms => CurveStatistic::Rms,
                    StatArg::Mean => CurveStatistic::Mean,
                },
            };
            let table = pipeline::load_cities(c.open_input()?, &c.selection()?)?;
            write_rejects(&c.output, &table.report.rejects)?;
            let csv = pipeline::elbow_csv(&table, &fit.config(1, &c), &params, c.units())?;
            write(&c.output, &csv)
        }
        Command::Trend(c) => {
            c.format_or(FormatArg::Csv, &[FormatArg::Csv])?;
            let years = c
                .years
                .unwrap_or(YearRange::new(corpus::MIN_YEAR, corpus::MAX_YEAR).expect("static range"));
            let (records, report) = pipeline::load_records(c.open_input()?, &c.selection()?)?;
            write_rejects(&c.output, &report.rejects)?;
            let (series_csv, drift_csv, series) =
                pipeline::trend_outputs(records, &report, c.region, years, &c.kernel(), c.units(), c.seed)?;
            if series.len() < 2 {
                eprintln!("geohub: {} year(s) with data; drift statistics need two", series.len());
            }
            write(&c.output, &series_csv)?;
            write(&sibling(&c.output, "drift", "csv"), &drift_csv)
        }
        Command::Density {
            common: c,
            rows,
            cols,
            extent,
        } => {
            let format = c.format_or(FormatArg::Asciigrid, &[FormatArg::Asciigrid, FormatArg::Csv])?;
            let (grid_format, ext) = match format {
                FormatArg::Csv => (GridFormat::Csv, "csv"),
                _ => (GridFormat::AsciiGrid, "asc"),
            };
            let table = pipeline::load_cities(c.open_input()?, &c.selection()?)?;
            write_rejects(&c.output, &table.report.rejects)?;
            let bbox = extent.unwrap_or_else(|| pipeline::default_extent(&c.region));
            let (counts, logs, grid) = pipeline::density_outputs(&table, bbox, rows, cols, grid_format, c.seed)?;
            if grid.overflow_cities > 0 {
                eprintln!(
                    "geohub: {} cities ({} records) fall outside the grid extent",
                    grid.overflow_cities, grid.overflow_weight
                );
            }
            write(&c.output, &counts)?;
            write(&sibling(&c.output, "log10", ext), &logs)
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("{THREADS_ENV} must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(e.to_string()))
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
    let result = configure_threads().and_then(|_| run(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("geohub: {msg}");
            eprintln!("usage: geohub <centroid|cluster|elbow|trend|density> --input <TSV> --output <PATH> [options]");
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("geohub: {msg}");
            ExitCode::from(2)
        }
    }
}
