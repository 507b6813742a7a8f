//! Weighted k-means over city aggregates with geodesic assignment distance,
//! restart selection, the k-vs-dispersion curve and the two threshold rules
//! for picking k.
//!
//! Assignment runs data-parallel over cities; every reduction afterwards is a
//! sequential pass in city order, so results do not depend on thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::CityAggregate;
use crate::geodesy::{
    mean_of, planar_centroid, rms_of, spherical_centroid, Distance, DistanceKernel, GeoPoint, GeodesyError,
};

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("no cities to cluster")]
    EmptyInput,
    #[error("k = {k} exceeds the {distinct} distinct city locations")]
    KTooLarge { k: usize, distinct: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid dispersion curve: {0}")]
    InvalidCurve(String),
    #[error("threshold must be positive")]
    InvalidThreshold,
    #[error(transparent)]
    Geodesy(#[from] GeodesyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CentroidRule {
    #[default]
    PlanarMean,
    SphericalMean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterConfig {
    pub k: usize,
    pub restarts: usize,
    pub max_iterations: usize,
    pub seed: u64,
    pub kernel: DistanceKernel,
    pub centroid_rule: CentroidRule,
}

impl ClusterConfig {
    pub const DEFAULT_RESTARTS: usize = 10;
    pub const DEFAULT_MAX_ITERATIONS: usize = 500;
    pub const DEFAULT_SEED: u64 = 42;

    pub fn new(k: usize) -> Self {
        Self {
            k,
            restarts: Self::DEFAULT_RESTARTS,
            max_iterations: Self::DEFAULT_MAX_ITERATIONS,
            seed: Self::DEFAULT_SEED,
            kernel: DistanceKernel::default(),
            centroid_rule: CentroidRule::default(),
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_kernel(mut self, kernel: DistanceKernel) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn with_centroid_rule(mut self, rule: CentroidRule) -> Self {
        self.centroid_rule = rule;
        self
    }

    fn validate(&self) -> Result<(), ClusterError> {
        if self.k == 0 {
            return Err(ClusterError::InvalidConfig("k must be at least 1".into()));
        }
        if self.restarts == 0 {
            return Err(ClusterError::InvalidConfig("restarts must be at least 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(ClusterError::InvalidConfig("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Where one city ended up.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub city_key: String,
    pub point: GeoPoint,
    pub weight: u64,
    pub cluster: usize,
    pub distance: Distance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub centroids: Vec<GeoPoint>,
    /// One entry per input city, in input order.
    pub assignment: Vec<Assignment>,
    pub cluster_weight: Vec<u64>,
    pub per_cluster_rms: Vec<Distance>,
    pub per_cluster_mean: Vec<Distance>,
    pub overall_rms: Distance,
    pub overall_mean: Distance,
    pub iterations_used: usize,
    pub restart_index_of_best: usize,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn cluster_of(&self, city_key: &str) -> Option<usize> {
        self.assignment.iter().find(|a| a.city_key == city_key).map(|a| a.cluster)
    }
}

/// Flat view of the cities used by the inner loops.
struct Points {
    points: Vec<GeoPoint>,
    weights: Vec<f64>,
}

impl Points {
    fn from_cities(cities: &[CityAggregate]) -> Self {
        Self {
            points: cities.iter().map(|c| c.point()).collect(),
            weights: cities.iter().map(|c| c.weight() as f64).collect(),
        }
    }

    fn len(&self) -> usize {
        self.points.len()
    }
}

/// Number of distinct geocodes; several city keys may share one.
pub fn distinct_locations(cities: &[CityAggregate]) -> usize {
    let mut keys: Vec<(u64, u64)> = cities
        .iter()
        .map(|c| (c.point().lat().to_bits(), c.point().lon().to_bits()))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

/// Index and distance of the nearest centroid; ties go to the lower index.
fn nearest(p: GeoPoint, centroids: &[GeoPoint], kernel: &DistanceKernel) -> Result<(usize, Distance), GeodesyError> {
    let mut best = (0, kernel.distance(p, centroids[0])?);
    for (j, &c) in centroids.iter().enumerate().skip(1) {
        let d = kernel.distance(p, c)?;
        if d < best.1 {
            best = (j, d);
        }
    }
    Ok(best)
}

const PAR_MIN_LEN: usize = 64;

fn assign_all(
    pts: &Points,
    centroids: &[GeoPoint],
    kernel: &DistanceKernel,
) -> Result<Vec<(usize, Distance)>, GeodesyError> {
    let results: Vec<Result<(usize, Distance), GeodesyError>> = pts
        .points
        .par_iter()
        .with_min_len(PAR_MIN_LEN)
        .map(|&p| nearest(p, centroids, kernel))
        .collect();
    // first error in city order, for reproducible reporting
    results.into_iter().collect()
}

fn objective(pts: &Points, assigned: &[(usize, Distance)]) -> Result<(Distance, Distance), GeodesyError> {
    let rms = rms_of(assigned.iter().zip(&pts.weights).map(|(a, &w)| (a.1, w)))?;
    let mean = mean_of(assigned.iter().zip(&pts.weights).map(|(a, &w)| (a.1, w)))?;
    Ok((rms, mean))
}

/// Draws an index with probability proportional to `mass`.
fn sample_index(rng: &mut ChaCha8Rng, mass: &[f64]) -> Option<usize> {
    let total: f64 = mass.iter().sum();
    if !total.is_finite() || total <= 0.0 {
        return None;
    }
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = None;
    for (i, &m) in mass.iter().enumerate() {
        if m > 0.0 {
            acc += m;
            last_positive = Some(i);
            if acc > target {
                return Some(i);
            }
        }
    }
    last_positive
}

/// Weighted k-means++ seeding: first centroid ∝ w, then ∝ w·D².
fn seed_plus_plus(
    pts: &Points,
    k: usize,
    rng: &mut ChaCha8Rng,
    kernel: &DistanceKernel,
) -> Result<Vec<GeoPoint>, GeodesyError> {
    let first = sample_index(rng, &pts.weights).unwrap_or(0);
    let mut centroids = vec![pts.points[first]];
    let mut nearest_d: Vec<f64> = pts
        .points
        .par_iter()
        .with_min_len(PAR_MIN_LEN)
        .map(|&p| kernel.distance(p, centroids[0]).map(|d| d.meters()))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_, _>>()?;
    while centroids.len() < k {
        let mass: Vec<f64> = nearest_d.iter().zip(&pts.weights).map(|(d, w)| w * d * d).collect();
        let idx = match sample_index(rng, &mass) {
            Some(i) => i,
            // every city sits on a centroid already
            None => match (0..pts.len()).find(|&i| !centroids.contains(&pts.points[i])) {
                Some(i) => i,
                None => break,
            },
        };
        let c = pts.points[idx];
        centroids.push(c);
        let fresh: Vec<f64> = pts
            .points
            .par_iter()
            .with_min_len(PAR_MIN_LEN)
            .map(|&p| kernel.distance(p, c).map(|d| d.meters()))
            .collect::<Vec<_>>()
            .into_iter()
            .collect::<Result<_, _>>()?;
        for (cur, new) in nearest_d.iter_mut().zip(fresh) {
            if new < *cur {
                *cur = new;
            }
        }
    }
    Ok(centroids)
}

fn update_centroid(
    pts: &Points,
    labels: &[(usize, Distance)],
    cluster: usize,
    rule: CentroidRule,
) -> Result<GeoPoint, GeodesyError> {
    let members = labels
        .iter()
        .enumerate()
        .filter(|(_, a)| a.0 == cluster)
        .map(|(i, _)| (pts.points[i], pts.weights[i]));
    match rule {
        CentroidRule::PlanarMean => planar_centroid(members),
        CentroidRule::SphericalMean => spherical_centroid(members),
    }
}

/// Moves the farthest city of a multi-member cluster into each empty one.
fn repair_empty(labels: &mut [(usize, Distance)], centroids: &mut [GeoPoint], pts: &Points) {
    let k = centroids.len();
    loop {
        let mut counts = vec![0usize; k];
        for a in labels.iter() {
            counts[a.0] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let donor = labels
            .iter()
            .enumerate()
            .filter(|(_, a)| counts[a.0] > 1)
            .fold(None::<(usize, Distance)>, |best, (i, a)| match best {
                Some((_, d)) if a.1 <= d => best,
                _ => Some((i, a.1)),
            });
        let Some((i, _)) = donor else {
            return;
        };
        centroids[empty] = pts.points[i];
        labels[i] = (empty, Distance::ZERO);
    }
}

struct RunOutcome {
    centroids: Vec<GeoPoint>,
    labels: Vec<(usize, Distance)>,
    rms: Distance,
    mean: Distance,
    iterations: usize,
}

/// Lloyd iterations from `init` until assignments stop changing or the cap
/// is reached, then a final nearest-centroid assignment.
fn lloyd(
    pts: &Points,
    init: Vec<GeoPoint>,
    cfg: &ClusterConfig,
) -> Result<RunOutcome, ClusterError> {
    let mut centroids = init;
    let mut previous: Option<Vec<usize>> = None;
    let mut iterations = 0;
    for it in 1..=cfg.max_iterations {
        iterations = it;
        let mut labels = assign_all(pts, &centroids, &cfg.kernel)?;
        repair_empty(&mut labels, &mut centroids, pts);
        let ids: Vec<usize> = labels.iter().map(|a| a.0).collect();
        if previous.as_ref() == Some(&ids) {
            break;
        }
        for (j, c) in centroids.iter_mut().enumerate() {
            *c = update_centroid(pts, &labels, j, cfg.centroid_rule)?;
        }
        previous = Some(ids);
    }
    let labels = finalize(pts, &mut centroids, &cfg.kernel)?;
    let (rms, mean) = objective(pts, &labels)?;
    Ok(RunOutcome {
        centroids,
        labels,
        rms,
        mean,
        iterations,
    })
}

/// Nearest assignment to fixed centroids. If a centroid attracts no city,
/// it is moved onto the city farthest from its nearest centroid and the
/// assignment is redone.
fn finalize(
    pts: &Points,
    centroids: &mut [GeoPoint],
    kernel: &DistanceKernel,
) -> Result<Vec<(usize, Distance)>, GeodesyError> {
    let k = centroids.len();
    let mut labels = assign_all(pts, centroids, kernel)?;
    for _ in 0..=k {
        let mut counts = vec![0usize; k];
        for a in &labels {
            counts[a.0] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            break;
        };
        let far = labels
            .iter()
            .enumerate()
            .fold((0, Distance::ZERO), |best, (i, a)| if a.1 > best.1 { (i, a.1) } else { best });
        if far.1 == Distance::ZERO {
            break;
        }
        centroids[empty] = pts.points[far.0];
        labels = assign_all(pts, centroids, kernel)?;
    }
    Ok(labels)
}

fn build_model(
    cities: &[CityAggregate],
    pts: &Points,
    run: RunOutcome,
    restart_index_of_best: usize,
) -> Result<ClusterModel, ClusterError> {
    let k = run.centroids.len();
    let mut cluster_weight = vec![0u64; k];
    let mut members: Vec<Vec<(Distance, f64)>> = vec![Vec::new(); k];
    let assignment = cities
        .iter()
        .zip(&run.labels)
        .zip(&pts.weights)
        .map(|((c, &(cluster, distance)), &w)| {
            cluster_weight[cluster] += c.weight();
            members[cluster].push((distance, w));
            Assignment {
                city_key: c.city_key().to_owned(),
                point: c.point(),
                weight: c.weight(),
                cluster,
                distance,
            }
        })
        .collect();
    let mut per_cluster_rms = Vec::with_capacity(k);
    let mut per_cluster_mean = Vec::with_capacity(k);
    for m in &members {
        if m.is_empty() {
            per_cluster_rms.push(Distance::ZERO);
            per_cluster_mean.push(Distance::ZERO);
        } else {
            per_cluster_rms.push(rms_of(m.iter().copied())?);
            per_cluster_mean.push(mean_of(m.iter().copied())?);
        }
    }
    Ok(ClusterModel {
        centroids: run.centroids,
        assignment,
        cluster_weight,
        per_cluster_rms,
        per_cluster_mean,
        overall_rms: run.rms,
        overall_mean: run.mean,
        iterations_used: run.iterations,
        restart_index_of_best,
    })
}

fn check_input(cities: &[CityAggregate], cfg: &ClusterConfig) -> Result<(), ClusterError> {
    cfg.validate()?;
    if cities.is_empty() {
        return Err(ClusterError::EmptyInput);
    }
    let distinct = distinct_locations(cities);
    if cfg.k > distinct {
        return Err(ClusterError::KTooLarge { k: cfg.k, distinct });
    }
    Ok(())
}

fn best_of_restarts(pts: &Points, cfg: &ClusterConfig) -> Result<(usize, RunOutcome), ClusterError> {
    let runs: Vec<Result<RunOutcome, ClusterError>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(r as u64));
            let init = seed_plus_plus(pts, cfg.k, &mut rng, &cfg.kernel)?;
            lloyd(pts, init, cfg)
        })
        .collect();
    let mut best: Option<(usize, RunOutcome)> = None;
    for (r, run) in runs.into_iter().enumerate() {
        let run = run?;
        if best.as_ref().is_none_or(|(_, b)| run.rms < b.rms) {
            best = Some((r, run));
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Weighted k-means with `cfg.restarts` independently seeded runs; the run
/// with the smallest weighted RMS distance wins (ties to the earlier run).
pub fn kmeans_fit(cities: &[CityAggregate], cfg: &ClusterConfig) -> Result<ClusterModel, ClusterError> {
    check_input(cities, cfg)?;
    let pts = Points::from_cities(cities);
    let (restart, run) = best_of_restarts(&pts, cfg)?;
    build_model(cities, &pts, run, restart)
}

/// Which candidate centroid set produced a curve entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveSource {
    Restarts,
    WarmStart,
    WarmStartRefined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveEntry {
    pub k: usize,
    pub overall_rms: Distance,
    pub overall_mean: Distance,
    pub centroids: Vec<GeoPoint>,
    pub source: CurveSource,
}

/// Dispersion as a function of k, for k = 1..=k_max.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionCurve {
    entries: Vec<CurveEntry>,
}

impl DispersionCurve {
    /// Validates contiguity from k = 1 and non-increasing RMS.
    pub fn new(entries: Vec<CurveEntry>) -> Result<Self, ClusterError> {
        if entries.is_empty() {
            return Err(ClusterError::InvalidCurve("no entries".into()));
        }
        for (i, e) in entries.iter().enumerate() {
            if e.k != i + 1 {
                return Err(ClusterError::InvalidCurve(format!("entry {i} has k = {}, expected {}", e.k, i + 1)));
            }
        }
        for w in entries.windows(2) {
            if w[1].overall_rms > w[0].overall_rms {
                return Err(ClusterError::InvalidCurve(format!("rms increases from k = {} to {}", w[0].k, w[1].k)));
            }
        }
        Ok(Self { entries })
    }

    /// Curve from bare (rms, mean) pairs, k counted from 1.
    pub fn from_values(values: &[(Distance, Distance)]) -> Result<Self, ClusterError> {
        Self::new(
            values
                .iter()
                .enumerate()
                .map(|(i, &(rms, mean))| CurveEntry {
                    k: i + 1,
                    overall_rms: rms,
                    overall_mean: mean,
                    centroids: Vec::new(),
                    source: CurveSource::Restarts,
                })
                .collect(),
        )
    }

    pub fn entries(&self) -> &[CurveEntry] {
        &self.entries
    }

    pub fn k_max(&self) -> usize {
        self.entries.len()
    }

    pub fn value(&self, k: usize, stat: CurveStatistic) -> Option<Distance> {
        let e = self.entries.get(k.checked_sub(1)?)?;
        Some(match stat {
            CurveStatistic::Rms => e.overall_rms,
            CurveStatistic::Mean => e.overall_mean,
        })
    }
}

/// For each k, evaluates the best restart fit, the previous best centroids
/// plus the city farthest from them, and that warm start refined by Lloyd
/// iterations; the candidate with the smallest RMS is reported. Because the
/// warm start is a superset of the previous set, RMS can only go down.
pub fn dispersion_curve(
    cities: &[CityAggregate],
    k_max: usize,
    cfg: &ClusterConfig,
) -> Result<DispersionCurve, ClusterError> {
    if k_max == 0 {
        return Err(ClusterError::InvalidConfig("k_max must be at least 1".into()));
    }
    check_input(cities, &cfg.clone().with_k(k_max))?;
    let pts = Points::from_cities(cities);
    let mut entries: Vec<CurveEntry> = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let kcfg = cfg.clone().with_k(k);
        let (_, fit) = best_of_restarts(&pts, &kcfg)?;
        let mut best = CurveEntry {
            k,
            overall_rms: fit.rms,
            overall_mean: fit.mean,
            centroids: fit.centroids,
            source: CurveSource::Restarts,
        };
        if let Some(prev) = entries.last() {
            let labels = assign_all(&pts, &prev.centroids, &kcfg.kernel)?;
            let far = labels
                .iter()
                .enumerate()
                .fold((0, Distance::ZERO), |b, (i, a)| if a.1 > b.1 { (i, a.1) } else { b });
            let mut warm = prev.centroids.clone();
            warm.push(pts.points[far.0]);

            let warm_labels = assign_all(&pts, &warm, &kcfg.kernel)?;
            let (rms, mean) = objective(&pts, &warm_labels)?;
            if rms < best.overall_rms {
                best = CurveEntry {
                    k,
                    overall_rms: rms,
                    overall_mean: mean,
                    centroids: warm.clone(),
                    source: CurveSource::WarmStart,
                };
            }
            let refined = lloyd(&pts, warm, &kcfg)?;
            if refined.rms < best.overall_rms {
                best = CurveEntry {
                    k,
                    overall_rms: refined.rms,
                    overall_mean: refined.mean,
                    centroids: refined.centroids,
                    source: CurveSource::WarmStartRefined,
                };
            }
        }
        entries.push(best);
    }
    DispersionCurve::new(entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectMode {
    /// Smallest k whose step to k + 1 improves by less than the threshold.
    Delta,
    /// Smallest k whose dispersion is below the threshold.
    Radius,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CurveStatistic {
    #[default]
    Rms,
    Mean,
}

pub fn select_k(
    curve: &DispersionCurve,
    mode: SelectMode,
    threshold: Distance,
    stat: CurveStatistic,
) -> Result<Option<usize>, ClusterError> {
    if threshold.meters().is_nan() || threshold.meters() <= 0.0 {
        return Err(ClusterError::InvalidThreshold);
    }
    let values: Vec<f64> = (1..=curve.k_max())
        .map(|k| curve.value(k, stat).expect("k in range").meters())
        .collect();
    let t = threshold.meters();
    Ok(match mode {
        SelectMode::Radius => values.iter().position(|&v| v < t).map(|i| i + 1),
        SelectMode::Delta => values.windows(2).position(|w| w[0] - w[1] < t).map(|i| i + 1),
    })
}
