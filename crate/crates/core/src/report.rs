//! Serializers for analysis results: CSV tables, GeoJSON cluster maps.
//!
//! Every CSV starts with a header row and ends with a `#` comment line
//! carrying the run metadata. Floats use Rust's shortest round-trip
//! formatting, so identical results give identical bytes.

use std::io::{self, Write};

use serde_json::{json, Value};

use crate::clustering::{ClusterModel, DispersionCurve, SelectMode};
use crate::geodesy::{Distance, GeoPoint, LengthUnit};
use crate::temporal::{DriftReport, TrendSeries};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const CENTROID_HEADER: [&str; 8] = ["k", "cluster_id", "lat", "lon", "weight", "rms", "mean", "units"];

/// Provenance recorded alongside every output.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RunMeta {
    pub seed: u64,
    /// Records accepted by the parser.
    pub records: u64,
    /// Records left after deduplication, region filter and year window.
    pub kept: u64,
    pub rejects: u64,
}

impl RunMeta {
    pub fn comment_line(&self) -> String {
        format!(
            "# seed={},version={},records={},kept={},rejects={}",
            self.seed, VERSION, self.records, self.kept, self.rejects
        )
    }
}

fn finish_csv<W: Write>(wtr: csv::Writer<W>, meta: &RunMeta, extra: &str) -> io::Result<()> {
    let mut inner = wtr.into_inner().map_err(|e| e.into_error())?;
    if extra.is_empty() {
        writeln!(inner, "{}", meta.comment_line())
    } else {
        writeln!(inner, "{},{}", meta.comment_line(), extra)
    }
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

/// One row of the centroid table.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidRow {
    pub k: usize,
    pub cluster_id: usize,
    pub point: GeoPoint,
    pub weight: u64,
    pub rms: Distance,
    pub mean: Distance,
}

impl CentroidRow {
    pub fn from_model(model: &ClusterModel) -> Vec<CentroidRow> {
        (0..model.k())
            .map(|j| CentroidRow {
                k: model.k(),
                cluster_id: j,
                point: model.centroids[j],
                weight: model.cluster_weight[j],
                rms: model.per_cluster_rms[j],
                mean: model.per_cluster_mean[j],
            })
            .collect()
    }
}

/// `k,cluster_id,lat,lon,weight,rms,mean,units`
pub fn write_centroid_csv<W: Write>(w: W, rows: &[CentroidRow], units: LengthUnit, meta: &RunMeta) -> io::Result<()> {
    let mut wtr = csv_writer(w);
    wtr.write_record(CENTROID_HEADER)?;
    for r in rows {
        wtr.write_record([
            r.k.to_string(),
            r.cluster_id.to_string(),
            r.point.lat().to_string(),
            r.point.lon().to_string(),
            r.weight.to_string(),
            r.rms.in_units(units).to_string(),
            r.mean.in_units(units).to_string(),
            units.label().to_string(),
        ])?;
    }
    finish_csv(wtr, meta, "")
}

/// FeatureCollection of centroid points followed by city points, each
/// city tagged with its cluster.
pub fn cluster_geojson(model: &ClusterModel, units: LengthUnit, meta: &RunMeta) -> Value {
    let mut features = Vec::with_capacity(model.k() + model.assignment.len());
    for j in 0..model.k() {
        let c = model.centroids[j];
        features.push(json!({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [c.lon(), c.lat()]},
            "properties": {
                "kind": "centroid",
                "cluster_id": j,
                "weight": model.cluster_weight[j],
                "rms": model.per_cluster_rms[j].in_units(units),
                "mean": model.per_cluster_mean[j].in_units(units),
                "units": units.label(),
            }
        }));
    }
    for a in &model.assignment {
        features.push(json!({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [a.point.lon(), a.point.lat()]},
            "properties": {
                "kind": "city",
                "city_key": a.city_key,
                "cluster_id": a.cluster,
                "weight": a.weight,
                "distance": a.distance.in_units(units),
                "units": units.label(),
            }
        }));
    }
    json!({
        "type": "FeatureCollection",
        "features": features,
        "properties": {
            "k": model.k(),
            "overall_rms": model.overall_rms.in_units(units),
            "overall_mean": model.overall_mean.in_units(units),
            "units": units.label(),
            "seed": meta.seed,
            "version": VERSION,
            "records": meta.records,
            "kept": meta.kept,
            "rejects": meta.rejects,
        }
    })
}

pub fn write_cluster_geojson<W: Write>(mut w: W, model: &ClusterModel, units: LengthUnit, meta: &RunMeta) -> io::Result<()> {
    serde_json::to_writer(&mut w, &cluster_geojson(model, units, meta))?;
    writeln!(w)
}

/// `k,rms,mean,units` per curve entry, then a `selected_k` row.
pub fn write_curve_csv<W: Write>(
    w: W,
    curve: &DispersionCurve,
    selected: Option<usize>,
    mode: SelectMode,
    threshold: Distance,
    units: LengthUnit,
    meta: &RunMeta,
) -> io::Result<()> {
    let mut wtr = csv_writer(w);
    wtr.write_record(["k", "rms", "mean", "units"])?;
    for e in curve.entries() {
        wtr.write_record([
            e.k.to_string(),
            e.overall_rms.in_units(units).to_string(),
            e.overall_mean.in_units(units).to_string(),
            units.label().to_string(),
        ])?;
    }
    let selected = selected.map_or_else(|| "none".to_string(), |k| k.to_string());
    wtr.write_record(["selected_k", selected.as_str(), "", units.label()])?;
    let mode = match mode {
        SelectMode::Delta => "delta",
        SelectMode::Radius => "radius",
    };
    finish_csv(wtr, meta, &format!("mode={mode},threshold={}", threshold.in_units(units)))
}

/// `year,lat,lon,rms,weight,units`
pub fn write_trend_csv<W: Write>(w: W, series: &TrendSeries, units: LengthUnit, meta: &RunMeta) -> io::Result<()> {
    let mut wtr = csv_writer(w);
    wtr.write_record(["year", "lat", "lon", "rms", "weight", "units"])?;
    for e in &series.entries {
        wtr.write_record([
            e.year.to_string(),
            e.centroid.lat().to_string(),
            e.centroid.lon().to_string(),
            e.overall_rms.in_units(units).to_string(),
            e.total_weight.to_string(),
            units.label().to_string(),
        ])?;
    }
    finish_csv(wtr, meta, &format!("region={}", series.region))
}

/// `delta_lat,delta_lon,lat_slope,lon_slope` in degrees and degrees/year.
/// A missing report (fewer than two years) leaves the table empty.
pub fn write_drift_csv<W: Write>(w: W, drift: Option<&DriftReport>, meta: &RunMeta) -> io::Result<()> {
    let mut wtr = csv_writer(w);
    wtr.write_record(["delta_lat", "delta_lon", "lat_slope", "lon_slope"])?;
    if let Some(d) = drift {
        wtr.write_record([
            d.delta_lat.to_string(),
            d.delta_lon.to_string(),
            d.lat_slope.to_string(),
            d.lon_slope.to_string(),
        ])?;
    }
    finish_csv(wtr, meta, "")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{kmeans_fit, ClusterConfig};
    use crate::corpus::CityAggregate;

    fn meta() -> RunMeta {
        RunMeta {
            seed: 42,
            records: 10,
            kept: 8,
            rejects: 2,
        }
    }

    #[test]
    fn centroid_csv_schema() {
        let rows = [CentroidRow {
            k: 1,
            cluster_id: 0,
            point: GeoPoint::new(38.7, -89.2).unwrap(),
            weight: 12,
            rms: Distance::from_miles(500.0),
            mean: Distance::from_miles(400.0),
        }];
        let mut out = Vec::new();
        write_centroid_csv(&mut out, &rows, LengthUnit::Miles, &meta()).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "k,cluster_id,lat,lon,weight,rms,mean,units");
        assert_eq!(lines[1], "1,0,38.7,-89.2,12,500,400,miles");
        assert_eq!(lines[2], format!("# seed=42,version={VERSION},records=10,kept=8,rejects=2"));
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn geojson_shape() {
        let cities: Vec<_> = [(40.0, -100.0), (41.0, -101.0), (30.0, -80.0)]
            .iter()
            .enumerate()
            .map(|(i, &(a, o))| CityAggregate::new(format!("c{i}|X|US"), GeoPoint::new(a, o).unwrap(), 1).unwrap())
            .collect();
        let m = kmeans_fit(&cities, &ClusterConfig::new(2).with_restarts(2)).unwrap();
        let v = cluster_geojson(&m, LengthUnit::Kilometers, &meta());
        assert_eq!(v["type"], "FeatureCollection");
        let feats = v["features"].as_array().unwrap();
        assert_eq!(feats.len(), 5);
        assert_eq!(feats[0]["properties"]["kind"], "centroid");
        assert_eq!(feats[4]["properties"]["kind"], "city");
        assert_eq!(feats[4]["geometry"]["coordinates"][0], -80.0);
        assert_eq!(feats[4]["properties"]["city_key"], "c2|X|US");
    }

    #[test]
    fn curve_csv_has_selected_row() {
        let curve = DispersionCurve::from_values(&[
            (Distance::from_miles(300.0), Distance::from_miles(250.0)),
            (Distance::from_miles(90.0), Distance::from_miles(70.0)),
        ])
        .unwrap();
        let mut out = Vec::new();
        write_curve_csv(&mut out, &curve, Some(2), SelectMode::Radius, Distance::from_miles(100.0), LengthUnit::Miles, &meta())
            .unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "k,rms,mean,units");
        assert_eq!(lines[1], "1,300,250,miles");
        assert_eq!(lines[3], "selected_k,2,,miles");
        assert!(lines[4].starts_with("# seed=42") && lines[4].ends_with("mode=radius,threshold=100"));
    }

    #[test]
    fn drift_csv_without_report() {
        let mut out = Vec::new();
        write_drift_csv(&mut out, None, &meta()).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("delta_lat,delta_lon,lat_slope,lon_slope\n# seed=42"));
    }
}
