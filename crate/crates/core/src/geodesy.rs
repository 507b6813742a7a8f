//! Distances on the WGS-84 ellipsoid and sphere, weighted centroids and the
//! RMS dispersion measure used throughout the crate.
//!
//! Everything here is pure: no allocation beyond what the caller hands in and
//! no shared state, so it can be called from any number of threads.

use std::fmt;

use thiserror::Error;

/// Meters in one international mile.
pub const METERS_PER_MILE: f64 = 1609.344;

/// Mean Earth radius (IUGG R1) used by the haversine metric.
pub const MEAN_EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Convergence threshold on the change of the auxiliary longitude, radians.
pub const VINCENTY_TOLERANCE: f64 = 1e-12;

/// Iteration cap for the inverse solution.
pub const VINCENTY_MAX_ITERATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeodesyError {
    #[error("latitude {0} outside [-90, 90]")]
    InvalidLatitude(f64),
    #[error("longitude {0} outside [-180, 180]")]
    InvalidLongitude(f64),
    #[error("invalid ellipsoid (a = {a}, f = {f})")]
    InvalidEllipsoid { a: f64, f: f64 },
    #[error("weight {0} is not a positive finite number")]
    InvalidWeight(f64),
    #[error("empty input")]
    EmptyInput,
    #[error("longitudes span {span:.3} degrees and straddle the antimeridian")]
    AntimeridianStraddle { span: f64 },
    #[error("Vincenty inverse did not converge between {p} and {q}")]
    NonConvergence { p: GeoPoint, q: GeoPoint },
}

/// A latitude/longitude pair in degrees.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeodesyError> {
        if !(-90.0..=90.0).contains(&lat) {
            return Err(GeodesyError::InvalidLatitude(lat));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(GeodesyError::InvalidLongitude(lon));
        }
        Ok(Self { lat, lon })
    }

    #[inline]
    pub fn lat(&self) -> f64 {
        self.lat
    }

    #[inline]
    pub fn lon(&self) -> f64 {
        self.lon
    }
}

impl fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lat, self.lon)
    }
}

/// Oblate spheroid described by its semi-major axis and flattening.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipsoid {
    a: f64,
    f: f64,
}

impl Ellipsoid {
    pub const WGS84: Ellipsoid = Ellipsoid {
        a: 6_378_137.0,
        f: 1.0 / 298.257_223_563,
    };

    pub fn new(semi_major_axis: f64, flattening: f64) -> Result<Self, GeodesyError> {
        let ok = semi_major_axis.is_finite()
            && semi_major_axis > 0.0
            && (0.0..1.0).contains(&flattening);
        if !ok {
            return Err(GeodesyError::InvalidEllipsoid {
                a: semi_major_axis,
                f: flattening,
            });
        }
        Ok(Self {
            a: semi_major_axis,
            f: flattening,
        })
    }

    pub fn semi_major_axis(&self) -> f64 {
        self.a
    }

    pub fn flattening(&self) -> f64 {
        self.f
    }

    pub fn semi_minor_axis(&self) -> f64 {
        self.a * (1.0 - self.f)
    }
}

impl Default for Ellipsoid {
    fn default() -> Self {
        Self::WGS84
    }
}

/// A nonnegative length. Stored in meters; miles and kilometers are views.
#[derive(Debug, Clone, Copy, Default, PartialEq, PartialOrd)]
pub struct Distance(f64);

impl Distance {
    pub const ZERO: Distance = Distance(0.0);

    /// Panics on negative or NaN input, which would mean a bug upstream.
    pub fn from_meters(meters: f64) -> Self {
        assert!(meters >= 0.0, "negative or NaN distance: {meters}");
        Self(meters)
    }

    pub fn from_kilometers(km: f64) -> Self {
        Self::from_meters(km * 1000.0)
    }

    pub fn from_miles(miles: f64) -> Self {
        Self::from_meters(miles * METERS_PER_MILE)
    }

    #[inline]
    pub fn meters(&self) -> f64 {
        self.0
    }

    pub fn kilometers(&self) -> f64 {
        self.0 / 1000.0
    }

    pub fn miles(&self) -> f64 {
        self.0 / METERS_PER_MILE
    }

    pub fn in_units(&self, units: LengthUnit) -> f64 {
        match units {
            LengthUnit::Meters => self.meters(),
            LengthUnit::Kilometers => self.kilometers(),
            LengthUnit::Miles => self.miles(),
        }
    }
}

/// Presentation unit for distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LengthUnit {
    Meters,
    Kilometers,
    Miles,
}

impl LengthUnit {
    pub fn label(&self) -> &'static str {
        match self {
            LengthUnit::Meters => "m",
            LengthUnit::Kilometers => "km",
            LengthUnit::Miles => "miles",
        }
    }

    pub fn to_distance(&self, value: f64) -> Distance {
        match self {
            LengthUnit::Meters => Distance::from_meters(value),
            LengthUnit::Kilometers => Distance::from_kilometers(value),
            LengthUnit::Miles => Distance::from_miles(value),
        }
    }
}

/// Inverse geodesic distance by Vincenty's iteration.
///
/// Fails with [`GeodesyError::NonConvergence`] when the auxiliary longitude
/// has not settled to within [`VINCENTY_TOLERANCE`] after
/// [`VINCENTY_MAX_ITERATIONS`] rounds, which happens for nearly antipodal
/// pairs.
#[allow(non_snake_case)]
pub fn vincenty_distance(p: GeoPoint, q: GeoPoint, e: &Ellipsoid) -> Result<Distance, GeodesyError> {
    if p == q {
        return Ok(Distance::ZERO);
    }
    let a = e.a;
    let f = e.f;
    let b = e.semi_minor_axis();

    let L = (q.lon - p.lon).to_radians();
    let U1 = ((1.0 - f) * p.lat.to_radians().tan()).atan();
    let U2 = ((1.0 - f) * q.lat.to_radians().tan()).atan();
    let (sinU1, cosU1) = U1.sin_cos();
    let (sinU2, cosU2) = U2.sin_cos();

    let mut lambda = L;
    let mut converged = false;
    let (mut sin_sigma, mut cos_sigma, mut sigma) = (0.0, 0.0, 0.0);
    let (mut cos_sq_alpha, mut cos_2sigma_m) = (0.0, 0.0);

    for _ in 0..VINCENTY_MAX_ITERATIONS {
        let (sin_lambda, cos_lambda) = lambda.sin_cos();
        let t1 = cosU2 * sin_lambda;
        let t2 = cosU1 * sinU2 - sinU1 * cosU2 * cos_lambda;
        sin_sigma = (t1 * t1 + t2 * t2).sqrt();
        if sin_sigma == 0.0 {
            // coincident on the auxiliary sphere
            return Ok(Distance::ZERO);
        }
        cos_sigma = sinU1 * sinU2 + cosU1 * cosU2 * cos_lambda;
        sigma = sin_sigma.atan2(cos_sigma);
        let sin_alpha = cosU1 * cosU2 * sin_lambda / sin_sigma;
        cos_sq_alpha = 1.0 - sin_alpha * sin_alpha;
        // equatorial line: cos²α = 0
        cos_2sigma_m = if cos_sq_alpha != 0.0 {
            cos_sigma - 2.0 * sinU1 * sinU2 / cos_sq_alpha
        } else {
            0.0
        };
        let C = f / 16.0 * cos_sq_alpha * (4.0 + f * (4.0 - 3.0 * cos_sq_alpha));
        let prev = lambda;
        lambda = L
            + (1.0 - C)
                * f
                * sin_alpha
                * (sigma
                    + C * sin_sigma
                        * (cos_2sigma_m + C * cos_sigma * (-1.0 + 2.0 * cos_2sigma_m * cos_2sigma_m)));
        if (lambda - prev).abs() < VINCENTY_TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(GeodesyError::NonConvergence { p, q });
    }

    let u_sq = cos_sq_alpha * (a * a - b * b) / (b * b);
    let A = 1.0 + u_sq / 16384.0 * (4096.0 + u_sq * (-768.0 + u_sq * (320.0 - 175.0 * u_sq)));
    let B = u_sq / 1024.0 * (256.0 + u_sq * (-128.0 + u_sq * (74.0 - 47.0 * u_sq)));
    let delta_sigma = B
        * sin_sigma
        * (cos_2sigma_m
            + B / 4.0
                * (cos_sigma * (-1.0 + 2.0 * cos_2sigma_m * cos_2sigma_m)
                    - B / 6.0
                        * cos_2sigma_m
                        * (-3.0 + 4.0 * sin_sigma * sin_sigma)
                        * (-3.0 + 4.0 * cos_2sigma_m * cos_2sigma_m)));
    let s = b * A * (sigma - delta_sigma);
    Ok(Distance::from_meters(s.max(0.0)))
}

/// Haversine arc length on a sphere of radius [`MEAN_EARTH_RADIUS_M`].
pub fn great_circle_distance(p: GeoPoint, q: GeoPoint) -> Distance {
    let phi1 = p.lat.to_radians();
    let phi2 = q.lat.to_radians();
    let dphi = phi2 - phi1;
    let dlambda = (q.lon - p.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    let c = 2.0 * h.sqrt().min(1.0).asin();
    Distance::from_meters(MEAN_EARTH_RADIUS_M * c)
}

/// A Vincenty result that may have been replaced by the great-circle value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measured {
    pub distance: Distance,
    pub fell_back: bool,
}

/// Vincenty distance, substituting the haversine arc when the iteration
/// fails to converge. The substitution is flagged in the result.
pub fn vincenty_with_fallback(p: GeoPoint, q: GeoPoint, e: &Ellipsoid) -> Measured {
    match vincenty_distance(p, q, e) {
        Ok(distance) => Measured {
            distance,
            fell_back: false,
        },
        Err(_) => Measured {
            distance: great_circle_distance(p, q),
            fell_back: true,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Vincenty,
    GreatCircle,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Vincenty => "vincenty",
            Metric::GreatCircle => "great_circle",
        }
    }
}

/// A configured distance function: which metric, on which ellipsoid, and
/// whether Vincenty failures degrade to the great-circle arc.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DistanceKernel {
    pub metric: Metric,
    pub ellipsoid: Ellipsoid,
    pub fallback: bool,
}

impl DistanceKernel {
    pub fn new(metric: Metric) -> Self {
        Self {
            metric,
            ..Self::default()
        }
    }

    pub fn with_fallback(mut self, fallback: bool) -> Self {
        self.fallback = fallback;
        self
    }

    #[inline]
    pub fn distance(&self, p: GeoPoint, q: GeoPoint) -> Result<Distance, GeodesyError> {
        match self.metric {
            Metric::GreatCircle => Ok(great_circle_distance(p, q)),
            Metric::Vincenty if self.fallback => Ok(vincenty_with_fallback(p, q, &self.ellipsoid).distance),
            Metric::Vincenty => vincenty_distance(p, q, &self.ellipsoid),
        }
    }
}

fn check_weight(w: f64) -> Result<(), GeodesyError> {
    if w.is_finite() && w > 0.0 {
        Ok(())
    } else {
        Err(GeodesyError::InvalidWeight(w))
    }
}

/// Weighted arithmetic mean of latitudes and, independently, longitudes.
///
/// Inputs whose longitudes span more than 180 degrees are rejected: the
/// plain mean is meaningless across the antimeridian.
pub fn planar_centroid<I>(points: I) -> Result<GeoPoint, GeodesyError>
where
    I: IntoIterator<Item = (GeoPoint, f64)>,
{
    let mut total = 0.0;
    let mut lat_acc = 0.0;
    let mut lon_acc = 0.0;
    let mut lon_min = f64::INFINITY;
    let mut lon_max = f64::NEG_INFINITY;
    for (p, w) in points {
        check_weight(w)?;
        total += w;
        lat_acc += w * p.lat;
        lon_acc += w * p.lon;
        lon_min = lon_min.min(p.lon);
        lon_max = lon_max.max(p.lon);
    }
    if total == 0.0 {
        return Err(GeodesyError::EmptyInput);
    }
    let span = lon_max - lon_min;
    if span > 180.0 {
        return Err(GeodesyError::AntimeridianStraddle { span });
    }
    let lat = (lat_acc / total).clamp(-90.0, 90.0);
    let lon = (lon_acc / total).clamp(lon_min, lon_max);
    GeoPoint::new(lat, lon)
}

/// Weighted mean of unit vectors, projected back to the sphere. Offered for
/// sensitivity checks against [`planar_centroid`].
pub fn spherical_centroid<I>(points: I) -> Result<GeoPoint, GeodesyError>
where
    I: IntoIterator<Item = (GeoPoint, f64)>,
{
    let (mut x, mut y, mut z) = (0.0, 0.0, 0.0);
    let mut last = None;
    for (p, w) in points {
        check_weight(w)?;
        let (sin_lat, cos_lat) = p.lat.to_radians().sin_cos();
        let (sin_lon, cos_lon) = p.lon.to_radians().sin_cos();
        x += w * cos_lat * cos_lon;
        y += w * cos_lat * sin_lon;
        z += w * sin_lat;
        last = Some(p);
    }
    let Some(last) = last else {
        return Err(GeodesyError::EmptyInput);
    };
    let horiz = x.hypot(y);
    if horiz == 0.0 && z == 0.0 {
        // perfectly balanced on the sphere; no preferred direction
        return Ok(last);
    }
    let lat = z.atan2(horiz).to_degrees().clamp(-90.0, 90.0);
    let lon = if horiz == 0.0 {
        0.0
    } else {
        y.atan2(x).to_degrees().clamp(-180.0, 180.0)
    };
    GeoPoint::new(lat, lon)
}

/// Weighted root-mean-square of already computed distances:
/// `sqrt(Σ wᵢ·rᵢ² / Σ wᵢ)`. Summation runs in input order.
pub fn rms_of<I>(distances: I) -> Result<Distance, GeodesyError>
where
    I: IntoIterator<Item = (Distance, f64)>,
{
    let mut total = 0.0;
    let mut acc = 0.0;
    for (d, w) in distances {
        check_weight(w)?;
        total += w;
        acc += w * d.0 * d.0;
    }
    if total == 0.0 {
        return Err(GeodesyError::EmptyInput);
    }
    Ok(Distance::from_meters((acc / total).sqrt()))
}

/// Weighted arithmetic mean of already computed distances.
pub fn mean_of<I>(distances: I) -> Result<Distance, GeodesyError>
where
    I: IntoIterator<Item = (Distance, f64)>,
{
    let mut total = 0.0;
    let mut acc = 0.0;
    for (d, w) in distances {
        check_weight(w)?;
        total += w;
        acc += w * d.0;
    }
    if total == 0.0 {
        return Err(GeodesyError::EmptyInput);
    }
    Ok(Distance::from_meters(acc / total))
}

/// RMS distance from weighted points to `center` under `kernel`.
pub fn rms_dispersion<I>(points: I, center: GeoPoint, kernel: &DistanceKernel) -> Result<Distance, GeodesyError>
where
    I: IntoIterator<Item = (GeoPoint, f64)>,
{
    let mut dists = Vec::new();
    for (p, w) in points {
        dists.push((kernel.distance(p, center)?, w));
    }
    rms_of(dists)
}
