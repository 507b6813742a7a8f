//! End-to-end runs: TSV in, serialized analysis out. The CLI is a thin
//! wrapper over these functions.

use std::io::Read;

use crate::clustering::{dispersion_curve, kmeans_fit, select_k, ClusterConfig, CurveStatistic, SelectMode};
use crate::corpus::{
    aggregate_cities, dedupe_paper_city, parse_records, BBox, CityAggregate, ColumnMapping, ParseReport,
    PublicationRecord, RegionFilter, YearRange,
};
use crate::geodesy::{mean_of, rms_of, planar_centroid, Distance, DistanceKernel, LengthUnit};
use crate::raster::{density_grid, log_display, write_ascii_grid, write_grid_csv, DensityGrid, GridValues};
use crate::report::{
    write_centroid_csv, write_cluster_geojson, write_curve_csv, write_drift_csv, write_trend_csv, CentroidRow, RunMeta,
};
use crate::temporal::{drift_stats, yearly_centroids, DriftReport, TrendSeries};
use crate::Error;

/// What to keep from the input stream.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Selection {
    pub mapping: ColumnMapping,
    pub region: RegionFilter,
    pub years: Option<YearRange>,
}

impl Selection {
    fn keeps(&self, r: &PublicationRecord) -> bool {
        self.region.accepts(r) && self.years.is_none_or(|y| y.contains(r.year()))
    }
}

/// Weighted cities plus the parse tally.
#[derive(Debug, Clone, PartialEq)]
pub struct CityTable {
    pub cities: Vec<CityAggregate>,
    pub report: ParseReport,
    /// Records surviving dedup, region and year window.
    pub kept: u64,
}

impl CityTable {
    pub fn meta(&self, seed: u64) -> RunMeta {
        RunMeta {
            seed,
            records: self.report.accepted,
            kept: self.kept,
            rejects: self.report.rejects.len() as u64,
        }
    }
}

/// Parse → dedupe → filter → aggregate, streaming.
pub fn load_cities<R: Read>(input: R, sel: &Selection) -> Result<CityTable, Error> {
    let mut reader = parse_records(input, &sel.mapping)?;
    let cities = aggregate_cities(dedupe_paper_city(reader.by_ref()).filter(|r| sel.keeps(r)), None)?;
    let report = reader.finish()?;
    let kept = cities.iter().map(|c| c.weight()).sum();
    Ok(CityTable { cities, report, kept })
}

/// Parse → dedupe → filter, keeping the individual records.
pub fn load_records<R: Read>(input: R, sel: &Selection) -> Result<(Vec<PublicationRecord>, ParseReport), Error> {
    let mut reader = parse_records(input, &sel.mapping)?;
    let records: Vec<_> = dedupe_paper_city(reader.by_ref()).filter(|r| sel.keeps(r)).collect();
    let report = reader.finish()?;
    Ok((records, report))
}

/// Overall centroid of the table with its RMS and mean distance.
pub fn centroid_row(table: &CityTable, kernel: &DistanceKernel) -> Result<CentroidRow, Error> {
    let weighted = || table.cities.iter().map(|c| (c.point(), c.weight() as f64));
    let point = planar_centroid(weighted())?;
    let mut dists = Vec::with_capacity(table.cities.len());
    for c in &table.cities {
        dists.push((kernel.distance(c.point(), point)?, c.weight() as f64));
    }
    Ok(CentroidRow {
        k: 1,
        cluster_id: 0,
        point,
        weight: table.kept,
        rms: rms_of(dists.iter().copied())?,
        mean: mean_of(dists.iter().copied())?,
    })
}

pub fn centroid_csv(table: &CityTable, kernel: &DistanceKernel, units: LengthUnit, seed: u64) -> Result<Vec<u8>, Error> {
    let row = centroid_row(table, kernel)?;
    let mut out = Vec::new();
    write_centroid_csv(&mut out, &[row], units, &table.meta(seed))?;
    Ok(out)
}

/// Centroid CSV and GeoJSON for one k-means fit.
pub fn cluster_outputs(table: &CityTable, cfg: &ClusterConfig, units: LengthUnit) -> Result<(Vec<u8>, Vec<u8>), Error> {
    let model = kmeans_fit(&table.cities, cfg)?;
    let meta = table.meta(cfg.seed);
    let mut csv = Vec::new();
    write_centroid_csv(&mut csv, &CentroidRow::from_model(&model), units, &meta)?;
    let mut geojson = Vec::new();
    write_cluster_geojson(&mut geojson, &model, units, &meta)?;
    Ok((csv, geojson))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElbowParams {
    pub k_max: usize,
    pub mode: SelectMode,
    pub threshold: Distance,
    pub statistic: CurveStatistic,
}

pub fn elbow_csv(table: &CityTable, cfg: &ClusterConfig, params: &ElbowParams, units: LengthUnit) -> Result<Vec<u8>, Error> {
    let curve = dispersion_curve(&table.cities, params.k_max, cfg)?;
    let selected = select_k(&curve, params.mode, params.threshold, params.statistic)?;
    let mut out = Vec::new();
    write_curve_csv(&mut out, &curve, selected, params.mode, params.threshold, units, &table.meta(cfg.seed))?;
    Ok(out)
}

/// Per-year series and drift. Drift is `None` with fewer than two years.
pub fn trend(
    records: Vec<PublicationRecord>,
    region: RegionFilter,
    years: YearRange,
    kernel: &DistanceKernel,
) -> Result<(TrendSeries, Option<DriftReport>), Error> {
    let series = yearly_centroids(records, region, years, kernel)?;
    let drift = if series.len() >= 2 { Some(drift_stats(&series)?) } else { None };
    Ok((series, drift))
}

pub fn trend_outputs(
    records: Vec<PublicationRecord>,
    report: &ParseReport,
    region: RegionFilter,
    years: YearRange,
    kernel: &DistanceKernel,
    units: LengthUnit,
    seed: u64,
) -> Result<(Vec<u8>, Vec<u8>, TrendSeries), Error> {
    let (series, drift) = trend(records, region, years, kernel)?;
    let meta = RunMeta {
        seed,
        records: report.accepted,
        kept: series.total_weight(),
        rejects: report.rejects.len() as u64,
    };
    let mut series_csv = Vec::new();
    write_trend_csv(&mut series_csv, &series, units, &meta)?;
    let mut drift_csv = Vec::new();
    write_drift_csv(&mut drift_csv, drift.as_ref(), &meta)?;
    Ok((series_csv, drift_csv, series))
}

/// Extent used for density grids when the user gives none.
pub fn default_extent(region: &RegionFilter) -> BBox {
    match region {
        RegionFilter::Lower48 => BBox {
            lat_min: 24.0,
            lat_max: 50.0,
            lon_min: -125.0,
            lon_max: -66.0,
        },
        RegionFilter::MainlandChina => BBox {
            lat_min: 18.0,
            lat_max: 54.0,
            lon_min: 73.0,
            lon_max: 135.0,
        },
        RegionFilter::BBox(b) => *b,
        RegionFilter::All => BBox {
            lat_min: -90.0,
            lat_max: 90.0,
            lon_min: -180.0,
            lon_max: 180.0,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridFormat {
    AsciiGrid,
    Csv,
}

/// Raw-count grid and its `log10(1 + c)` display grid, serialized.
pub fn density_outputs(
    table: &CityTable,
    bbox: BBox,
    n_rows: usize,
    n_cols: usize,
    format: GridFormat,
    seed: u64,
) -> Result<(Vec<u8>, Vec<u8>, DensityGrid), Error> {
    let grid = density_grid(&table.cities, bbox, n_rows, n_cols)?;
    let display = log_display(&grid);
    let mut counts = Vec::new();
    let mut logs = Vec::new();
    match format {
        GridFormat::AsciiGrid => {
            write_ascii_grid(&mut counts, &grid, GridValues::Counts(&grid.cells))?;
            write_ascii_grid(&mut logs, &grid, GridValues::Display(&display))?;
        }
        GridFormat::Csv => {
            use std::io::Write;
            let meta = table.meta(seed);
            write_grid_csv(&mut counts, &grid, GridValues::Counts(&grid.cells))?;
            writeln!(
                counts,
                "{},overflow_cities={},overflow_weight={}",
                meta.comment_line(),
                grid.overflow_cities,
                grid.overflow_weight
            )?;
            write_grid_csv(&mut logs, &grid, GridValues::Display(&display))?;
            writeln!(logs, "{}", meta.comment_line())?;
        }
    }
    Ok((counts, logs, grid))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TSV: &str = "paper_id\tyear\tcity\tadmin1\tcountry\tlat\tlon\n\
1\t1988\tBoston\tMA\tUS\t42.3601\t-71.0589\n\
1\t1988\tBoston\tMA\tUS\t42.3601\t-71.0589\n\
2\t1990\tChicago\tIL\tUS\t41.8781\t-87.6298\n\
3\t1990\tHonolulu\tHI\tUS\t21.3069\t-157.8583\n\
4\t2016\tLos Angeles\tCA\tUS\t34.0522\t-118.2437\n\
5\t2016\tBoston\tMA\tUS\t42.3601\t-71.0589\n\
6\t2016\tBoston\tMA\tUS\t91\t-71.0589\n";

    fn lower48() -> Selection {
        Selection {
            region: RegionFilter::Lower48,
            years: Some(YearRange::new(1988, 2016).unwrap()),
            ..Selection::default()
        }
    }

    #[test]
    fn load_applies_every_stage() {
        let t = load_cities(TSV.as_bytes(), &lower48()).unwrap();
        assert_eq!(t.report.accepted, 6);
        assert_eq!(t.report.rejects.len(), 1);
        assert_eq!(t.kept, 4);
        let keys: Vec<_> = t.cities.iter().map(|c| (c.city_key(), c.weight())).collect();
        assert_eq!(keys, vec![("Boston|MA|US", 2), ("Chicago|IL|US", 1), ("Los Angeles|CA|US", 1)]);
    }

    #[test]
    fn centroid_output() {
        let t = load_cities(TSV.as_bytes(), &lower48()).unwrap();
        let csv = String::from_utf8(centroid_csv(&t, &DistanceKernel::default(), LengthUnit::Miles, 42).unwrap()).unwrap();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("1,0,"));
        assert!(lines[1].contains(",4,") && lines[1].ends_with("miles"));
        assert!(lines[2].contains("records=6,kept=4,rejects=1"));
    }

    #[test]
    fn trend_skips_drift_with_one_year() {
        let sel = Selection {
            years: Some(YearRange::single(1990)),
            ..lower48()
        };
        let (recs, report) = load_records(TSV.as_bytes(), &sel).unwrap();
        let (series, drift, s) = trend_outputs(
            recs,
            &report,
            sel.region,
            sel.years.unwrap(),
            &DistanceKernel::default(),
            LengthUnit::Kilometers,
            1,
        )
        .unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(String::from_utf8(series).unwrap().lines().count(), 3);
        assert_eq!(String::from_utf8(drift).unwrap().lines().count(), 2);
    }

    #[test]
    fn density_conserves() {
        let t = load_cities(TSV.as_bytes(), &lower48()).unwrap();
        let (_, _, g) = density_outputs(&t, default_extent(&RegionFilter::Lower48), 20, 40, GridFormat::Csv, 1).unwrap();
        assert_eq!(g.total() + g.overflow_weight, t.kept);
    }
}
