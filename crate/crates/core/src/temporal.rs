//! Year-by-year centroids, drift of the centroid over time, and comparison
//! of two cluster models fitted on different periods.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::clustering::ClusterModel;
use crate::corpus::{aggregate_cities, CityAggregate, CorpusError, PublicationRecord, RegionFilter, YearRange};
use crate::geodesy::{planar_centroid, rms_dispersion, Distance, DistanceKernel, GeoPoint, GeodesyError};

#[derive(Debug, Error)]
pub enum TemporalError {
    #[error("drift needs at least two years, series has {0}")]
    TooFewYears(usize),
    #[error("cluster models have different k ({0} vs {1})")]
    KMismatch(usize, usize),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Geodesy(#[from] GeodesyError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendEntry {
    pub year: i32,
    pub centroid: GeoPoint,
    pub overall_rms: Distance,
    pub total_weight: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendSeries {
    pub entries: Vec<TrendEntry>,
    pub region: RegionFilter,
}

impl TrendSeries {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_weight(&self) -> u64 {
        self.entries.iter().map(|e| e.total_weight).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftReport {
    pub delta_lat: f64,
    pub delta_lon: f64,
    /// Degrees per year.
    pub lat_slope: f64,
    pub lon_slope: f64,
}

fn centroid_and_rms(cities: &[CityAggregate], kernel: &DistanceKernel) -> Result<(GeoPoint, Distance), GeodesyError> {
    let weighted = || cities.iter().map(|c| (c.point(), c.weight() as f64));
    let centroid = planar_centroid(weighted())?;
    let rms = rms_dispersion(weighted(), centroid, kernel)?;
    Ok((centroid, rms))
}

/// Centroid and RMS dispersion for each year in `years` that has at least
/// one record passing `filter`. Records are expected to be deduplicated
/// already.
pub fn yearly_centroids<I>(
    records: I,
    filter: RegionFilter,
    years: YearRange,
    kernel: &DistanceKernel,
) -> Result<TrendSeries, TemporalError>
where
    I: IntoIterator<Item = PublicationRecord>,
{
    let mut by_year: BTreeMap<i32, Vec<PublicationRecord>> = BTreeMap::new();
    for r in records {
        if years.contains(r.year()) && filter.accepts(&r) {
            by_year.entry(r.year()).or_default().push(r);
        }
    }
    let per_year: Vec<(i32, Vec<PublicationRecord>)> = by_year.into_iter().collect();
    let entries: Vec<Result<TrendEntry, TemporalError>> = per_year
        .into_par_iter()
        .map(|(year, recs)| {
            let cities = aggregate_cities(recs, Some(YearRange::single(year)))?;
            let total_weight = cities.iter().map(|c| c.weight()).sum();
            let (centroid, overall_rms) = centroid_and_rms(&cities, kernel)?;
            Ok(TrendEntry {
                year,
                centroid,
                overall_rms,
                total_weight,
            })
        })
        .collect();
    Ok(TrendSeries {
        entries: entries.into_iter().collect::<Result<_, _>>()?,
        region: filter,
    })
}

/// Ordinary least-squares slope of `ys` against `xs`.
fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - x_mean;
        sxy += dx * (y - y_mean);
        sxx += dx * dx;
    }
    sxy / sxx
}

pub fn drift_stats(series: &TrendSeries) -> Result<DriftReport, TemporalError> {
    let n = series.entries.len();
    if n < 2 {
        return Err(TemporalError::TooFewYears(n));
    }
    let first = &series.entries[0];
    let last = &series.entries[n - 1];
    let xs: Vec<f64> = series.entries.iter().map(|e| e.year as f64).collect();
    let lats: Vec<f64> = series.entries.iter().map(|e| e.centroid.lat()).collect();
    let lons: Vec<f64> = series.entries.iter().map(|e| e.centroid.lon()).collect();
    Ok(DriftReport {
        delta_lat: last.centroid.lat() - first.centroid.lat(),
        delta_lon: last.centroid.lon() - first.centroid.lon(),
        lat_slope: ols_slope(&xs, &lats),
        lon_slope: ols_slope(&xs, &lons),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentroidMatch {
    pub index_a: usize,
    pub index_b: usize,
    pub displacement: Distance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// Ordered by index in model A.
    pub matches: Vec<CentroidMatch>,
    pub max_displacement: Distance,
}

/// Argument order is canonicalized so the pairwise matrix is exactly
/// transposed when the models are swapped.
fn symmetric_distance(kernel: &DistanceKernel, p: GeoPoint, q: GeoPoint) -> Result<Distance, GeodesyError> {
    if (p.lat(), p.lon()) <= (q.lat(), q.lon()) {
        kernel.distance(p, q)
    } else {
        kernel.distance(q, p)
    }
}

/// Greedy matching of centroids: repeatedly pair the closest unmatched
/// centroids of the two models.
pub fn cluster_stability(
    model_a: &ClusterModel,
    model_b: &ClusterModel,
    kernel: &DistanceKernel,
) -> Result<StabilityReport, TemporalError> {
    let k = model_a.k();
    if k != model_b.k() {
        return Err(TemporalError::KMismatch(k, model_b.k()));
    }
    let mut pairs = Vec::with_capacity(k * k);
    for (i, &a) in model_a.centroids.iter().enumerate() {
        for (j, &b) in model_b.centroids.iter().enumerate() {
            pairs.push((symmetric_distance(kernel, a, b)?, i, j));
        }
    }
    pairs.sort_by(|x, y| x.0.meters().total_cmp(&y.0.meters()).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_a = vec![false; k];
    let mut used_b = vec![false; k];
    let mut matches = Vec::with_capacity(k);
    for (d, i, j) in pairs {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            matches.push(CentroidMatch {
                index_a: i,
                index_b: j,
                displacement: d,
            });
        }
    }
    matches.sort_by_key(|m| m.index_a);
    let max_displacement = matches
        .iter()
        .map(|m| m.displacement)
        .fold(Distance::ZERO, |a, b| if b > a { b } else { a });
    Ok(StabilityReport {
        matches,
        max_displacement,
    })
}
