//! Geographic analysis of geocoded publication records: planar centroids,
//! RMS dispersion on the WGS-84 ellipsoid, weighted geodesic k-means,
//! elbow-style selection of the number of regional hubs, year-by-year
//! centroid drift and density rasters.
//!
//! The usual flow is [`corpus`] (parse, dedupe, filter, aggregate) feeding
//! one of [`clustering`], [`temporal`] or [`raster`], with [`report`]
//! turning results into CSV, GeoJSON or ESRI ASCII grids. [`pipeline`]
//! strings those steps together the way the `geohub` binary does.

pub mod clustering;
pub mod corpus;
pub mod geodesy;
pub mod pipeline;
pub mod raster;
pub mod report;
pub mod temporal;

use thiserror::Error;

pub use clustering::{
    dispersion_curve, kmeans_fit, select_k, CentroidRule, ClusterConfig, ClusterError, ClusterModel, CurveStatistic,
    DispersionCurve, SelectMode,
};
pub use corpus::{
    aggregate_cities, dedupe_paper_city, filter_region, parse_records, BBox, CityAggregate, ColumnMapping, CorpusError,
    PublicationRecord, RegionFilter, YearRange,
};
pub use geodesy::{
    great_circle_distance, planar_centroid, rms_dispersion, vincenty_distance, Distance, DistanceKernel, Ellipsoid,
    GeoPoint, GeodesyError, LengthUnit, Metric,
};
pub use raster::{density_grid, log_display, DensityGrid, RasterError};
pub use temporal::{cluster_stability, drift_stats, yearly_centroids, DriftReport, TemporalError, TrendSeries};

/// Any failure along the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Geodesy(#[from] GeodesyError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Temporal(#[from] TemporalError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}
