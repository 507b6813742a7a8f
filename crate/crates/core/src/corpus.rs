//! Ingestion of geocoded publication records: TSV parsing with a reject
//! tally, per-paper city deduplication, study-region filters and the
//! weighted city table every analysis runs on.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{self, Read, Write};

use thiserror::Error;

use crate::geodesy::GeoPoint;

pub const MIN_YEAR: i32 = 1800;
pub const MAX_YEAR: i32 = 2100;

/// Geocodes under one city key may differ by at most this many degrees.
pub const GEOCODE_TOLERANCE_DEG: f64 = 1e-6;

/// US admin1 codes outside the contiguous states.
pub const NON_CONTIGUOUS_US: [&str; 8] = ["AK", "HI", "PR", "GU", "VI", "AS", "MP", "UM"];

/// China admin1 codes outside the mainland.
pub const NON_MAINLAND_CN: [&str; 3] = ["HK", "MO", "TW"];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("input format: {0}")]
    FatalFormat(String),
    #[error("I/O error reading records: {0}")]
    Io(#[from] io::Error),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("invalid bounding box: {0}")]
    InvalidBBox(String),
    #[error("invalid year range {0}..={1}")]
    InvalidYearRange(i32, i32),
    #[error("city {city_key} has conflicting geocodes {a} and {b}")]
    GeocodeConflict { city_key: String, a: GeoPoint, b: GeoPoint },
}

/// One geocoded (paper, city) affiliation row.
#[derive(Debug, Clone, PartialEq)]
pub struct PublicationRecord {
    paper_id: String,
    year: i32,
    city_key: String,
    admin1: String,
    country: String,
    point: GeoPoint,
}

impl PublicationRecord {
    pub fn new(
        paper_id: &str,
        year: i32,
        city: &str,
        admin1: &str,
        country: &str,
        point: GeoPoint,
    ) -> Result<Self, CorpusError> {
        if paper_id.is_empty() {
            return Err(CorpusError::InvalidRecord("empty paper_id".into()));
        }
        if !(MIN_YEAR..=MAX_YEAR).contains(&year) {
            return Err(CorpusError::InvalidRecord(format!(
                "year {year} outside {MIN_YEAR}..={MAX_YEAR}"
            )));
        }
        Ok(Self {
            paper_id: paper_id.to_owned(),
            year,
            city_key: format!("{city}|{admin1}|{country}"),
            admin1: admin1.to_owned(),
            country: country.to_owned(),
            point,
        })
    }

    pub fn paper_id(&self) -> &str {
        &self.paper_id
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    /// Canonical `city|admin1|country` key.
    pub fn city_key(&self) -> &str {
        &self.city_key
    }

    pub fn admin1(&self) -> &str {
        &self.admin1
    }

    pub fn country(&self) -> &str {
        &self.country
    }

    pub fn point(&self) -> GeoPoint {
        self.point
    }
}

/// A city with the number of distinct papers affiliated with it.
#[derive(Debug, Clone, PartialEq)]
pub struct CityAggregate {
    city_key: String,
    point: GeoPoint,
    weight: u64,
}

impl CityAggregate {
    pub fn new(city_key: impl Into<String>, point: GeoPoint, weight: u64) -> Result<Self, CorpusError> {
        let city_key = city_key.into();
        if weight == 0 {
            return Err(CorpusError::InvalidRecord(format!("city {city_key} has zero weight")));
        }
        Ok(Self { city_key, point, weight })
    }

    pub fn city_key(&self) -> &str {
        &self.city_key
    }

    pub fn point(&self) -> GeoPoint {
        self.point
    }

    pub fn weight(&self) -> u64 {
        self.weight
    }

    /// Same city with its weight multiplied by `factor`.
    pub fn scaled(&self, factor: u64) -> Self {
        assert!(factor > 0);
        Self {
            weight: self.weight * factor,
            ..self.clone()
        }
    }
}

/// Inclusive latitude/longitude box in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl BBox {
    pub fn new(lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64) -> Result<Self, CorpusError> {
        let finite = [lat_min, lat_max, lon_min, lon_max].iter().all(|v| v.is_finite());
        if !finite {
            return Err(CorpusError::InvalidBBox("non-finite bound".into()));
        }
        if lat_min > lat_max {
            return Err(CorpusError::InvalidBBox(format!("lat_min {lat_min} > lat_max {lat_max}")));
        }
        if lon_min > lon_max {
            return Err(CorpusError::InvalidBBox(format!("lon_min {lon_min} > lon_max {lon_max}")));
        }
        Ok(Self {
            lat_min,
            lat_max,
            lon_min,
            lon_max,
        })
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        (self.lat_min..=self.lat_max).contains(&p.lat()) && (self.lon_min..=self.lon_max).contains(&p.lon())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum RegionFilter {
    /// Contiguous US: country `US`, admin1 not in [`NON_CONTIGUOUS_US`].
    Lower48,
    /// Country `CN`, admin1 not in [`NON_MAINLAND_CN`].
    MainlandChina,
    BBox(BBox),
    #[default]
    All,
}

impl RegionFilter {
    pub fn accepts(&self, r: &PublicationRecord) -> bool {
        match self {
            RegionFilter::Lower48 => r.country == "US" && !NON_CONTIGUOUS_US.contains(&r.admin1.as_str()),
            RegionFilter::MainlandChina => r.country == "CN" && !NON_MAINLAND_CN.contains(&r.admin1.as_str()),
            RegionFilter::BBox(b) => b.contains(r.point),
            RegionFilter::All => true,
        }
    }
}

impl fmt::Display for RegionFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegionFilter::Lower48 => f.write_str("lower48"),
            RegionFilter::MainlandChina => f.write_str("mainland_china"),
            RegionFilter::BBox(b) => write!(f, "bbox:{},{},{},{}", b.lat_min, b.lat_max, b.lon_min, b.lon_max),
            RegionFilter::All => f.write_str("all"),
        }
    }
}

/// Inclusive year window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct YearRange {
    pub first: i32,
    pub last: i32,
}

impl YearRange {
    pub fn new(first: i32, last: i32) -> Result<Self, CorpusError> {
        if first > last {
            return Err(CorpusError::InvalidYearRange(first, last));
        }
        Ok(Self { first, last })
    }

    pub fn single(year: i32) -> Self {
        Self { first: year, last: year }
    }

    pub fn contains(&self, year: i32) -> bool {
        (self.first..=self.last).contains(&year)
    }
}

/// Header names of the seven required input columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMapping {
    pub paper_id: String,
    pub year: String,
    pub city: String,
    pub admin1: String,
    pub country: String,
    pub lat: String,
    pub lon: String,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            paper_id: "paper_id".into(),
            year: "year".into(),
            city: "city".into(),
            admin1: "admin1".into(),
            country: "country".into(),
            lat: "lat".into(),
            lon: "lon".into(),
        }
    }
}

/// A line that could not be turned into a record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    pub line_no: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Copy)]
struct ColumnIndex {
    paper_id: usize,
    year: usize,
    city: usize,
    admin1: usize,
    country: usize,
    lat: usize,
    lon: usize,
    width: usize,
}

/// Streaming TSV record reader. Malformed lines go to the reject tally; a
/// fatal I/O error ends iteration and is reported by [`RecordReader::finish`].
pub struct RecordReader<R: Read> {
    inner: csv::Reader<R>,
    columns: ColumnIndex,
    buf: csv::ByteRecord,
    accepted: u64,
    rejects: Vec<Reject>,
    fatal: Option<CorpusError>,
    done: bool,
}

/// Outcome of a completed parse.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseReport {
    pub accepted: u64,
    pub rejects: Vec<Reject>,
}

/// Opens a TSV stream whose first line is a header naming every column in
/// `mapping` (extra columns are ignored, order is free).
pub fn parse_records<R: Read>(input: R, mapping: &ColumnMapping) -> Result<RecordReader<R>, CorpusError> {
    let mut inner = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .flexible(true)
        .has_headers(true)
        .from_reader(input);
    let header = inner
        .byte_headers()
        .map_err(|e| CorpusError::FatalFormat(format!("cannot read header: {e}")))?
        .clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(CorpusError::FatalFormat("missing header row".into()));
    }
    let names: Vec<String> = header
        .iter()
        .map(|h| String::from_utf8_lossy(h).trim().to_owned())
        .collect();
    let find = |name: &str| -> Result<usize, CorpusError> {
        names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| CorpusError::FatalFormat(format!("header lacks required column '{name}'")))
    };
    let mut columns = ColumnIndex {
        paper_id: find(&mapping.paper_id)?,
        year: find(&mapping.year)?,
        city: find(&mapping.city)?,
        admin1: find(&mapping.admin1)?,
        country: find(&mapping.country)?,
        lat: find(&mapping.lat)?,
        lon: find(&mapping.lon)?,
        width: 0,
    };
    columns.width = [
        columns.paper_id,
        columns.year,
        columns.city,
        columns.admin1,
        columns.country,
        columns.lat,
        columns.lon,
    ]
    .into_iter()
    .max()
    .unwrap_or(0)
        + 1;
    Ok(RecordReader {
        inner,
        columns,
        buf: csv::ByteRecord::new(),
        accepted: 0,
        rejects: Vec::new(),
        fatal: None,
        done: false,
    })
}

fn field<'a>(rec: &'a csv::ByteRecord, idx: usize, name: &str) -> Result<&'a str, String> {
    let raw = rec.get(idx).ok_or_else(|| format!("missing field {name}"))?;
    std::str::from_utf8(raw)
        .map(str::trim)
        .map_err(|_| format!("field {name} is not valid UTF-8"))
}

fn decode(rec: &csv::ByteRecord, c: &ColumnIndex) -> Result<PublicationRecord, String> {
    if rec.len() < c.width {
        return Err(format!("expected at least {} fields, found {}", c.width, rec.len()));
    }
    let paper_id = field(rec, c.paper_id, "paper_id")?;
    let year_s = field(rec, c.year, "year")?;
    let year: i32 = year_s.parse().map_err(|_| format!("bad year '{year_s}'"))?;
    let city = field(rec, c.city, "city")?;
    let admin1 = field(rec, c.admin1, "admin1")?;
    let country = field(rec, c.country, "country")?;
    let lat_s = field(rec, c.lat, "lat")?;
    let lon_s = field(rec, c.lon, "lon")?;
    let lat: f64 = lat_s.parse().map_err(|_| format!("bad lat '{lat_s}'"))?;
    let lon: f64 = lon_s.parse().map_err(|_| format!("bad lon '{lon_s}'"))?;
    let point = GeoPoint::new(lat, lon).map_err(|e| e.to_string())?;
    PublicationRecord::new(paper_id, year, city, admin1, country, point).map_err(|e| e.to_string())
}

impl<R: Read> RecordReader<R> {
    pub fn rejects(&self) -> &[Reject] {
        &self.rejects
    }

    pub fn accepted(&self) -> u64 {
        self.accepted
    }

    /// Drains nothing; returns the tally or the fatal error that stopped the
    /// stream.
    pub fn finish(self) -> Result<ParseReport, CorpusError> {
        match self.fatal {
            Some(e) => Err(e),
            None => Ok(ParseReport {
                accepted: self.accepted,
                rejects: self.rejects,
            }),
        }
    }
}

impl<R: Read> Iterator for RecordReader<R> {
    type Item = PublicationRecord;

    fn next(&mut self) -> Option<PublicationRecord> {
        while !self.done {
            match self.inner.read_byte_record(&mut self.buf) {
                Ok(false) => self.done = true,
                Ok(true) => {
                    let line_no = self.buf.position().map_or(0, |p| p.line());
                    match decode(&self.buf, &self.columns) {
                        Ok(rec) => {
                            self.accepted += 1;
                            return Some(rec);
                        }
                        Err(reason) => self.rejects.push(Reject { line_no, reason }),
                    }
                }
                Err(e) => {
                    self.done = true;
                    self.fatal = Some(match e.into_kind() {
                        csv::ErrorKind::Io(io) => CorpusError::Io(io),
                        other => CorpusError::FatalFormat(format!("{other:?}")),
                    });
                }
            }
        }
        None
    }
}

/// Writes the reject tally as `line_no<TAB>reason` rows under a header.
pub fn write_rejects<W: Write>(mut w: W, rejects: &[Reject]) -> io::Result<()> {
    writeln!(w, "line_no\treason")?;
    for r in rejects {
        let reason: String = r
            .reason
            .chars()
            .map(|c| if c == '\t' || c == '\n' || c == '\r' { ' ' } else { c })
            .collect();
        writeln!(w, "{}\t{}", r.line_no, reason)?;
    }
    Ok(())
}

/// Keeps the first record of each (paper_id, city_key) pair.
pub struct Dedupe<I> {
    inner: I,
    city_ids: HashMap<String, u32>,
    seen: HashSet<(Box<str>, u32)>,
}

impl<I: Iterator<Item = PublicationRecord>> Iterator for Dedupe<I> {
    type Item = PublicationRecord;

    fn next(&mut self) -> Option<PublicationRecord> {
        for rec in self.inner.by_ref() {
            let next_id = self.city_ids.len() as u32;
            let city = match self.city_ids.get(rec.city_key()) {
                Some(&id) => id,
                None => {
                    self.city_ids.insert(rec.city_key().to_owned(), next_id);
                    next_id
                }
            };
            if self.seen.insert((rec.paper_id().into(), city)) {
                return Some(rec);
            }
        }
        None
    }
}

/// Collapses coauthor repeats: a paper counts once per city.
pub fn dedupe_paper_city<I>(records: I) -> Dedupe<I::IntoIter>
where
    I: IntoIterator<Item = PublicationRecord>,
{
    Dedupe {
        inner: records.into_iter(),
        city_ids: HashMap::new(),
        seen: HashSet::new(),
    }
}

pub fn filter_region<I>(records: I, filter: RegionFilter) -> impl Iterator<Item = PublicationRecord>
where
    I: IntoIterator<Item = PublicationRecord>,
{
    records.into_iter().filter(move |r| filter.accepts(r))
}

fn point_key(p: GeoPoint) -> (f64, f64) {
    (p.lat(), p.lon())
}

/// Counts records per city inside the optional year window.
///
/// Output is sorted by city key. When a key is seen with slightly different
/// geocodes (within [`GEOCODE_TOLERANCE_DEG`]) the lexicographically smallest
/// one is kept, so the result does not depend on input order.
pub fn aggregate_cities<I>(records: I, years: Option<YearRange>) -> Result<Vec<CityAggregate>, CorpusError>
where
    I: IntoIterator<Item = PublicationRecord>,
{
    let mut table: HashMap<String, (GeoPoint, u64)> = HashMap::new();
    for rec in records {
        if years.is_some_and(|y| !y.contains(rec.year)) {
            continue;
        }
        match table.get_mut(rec.city_key()) {
            Some((point, weight)) => {
                let dlat = (point.lat() - rec.point.lat()).abs();
                let dlon = (point.lon() - rec.point.lon()).abs();
                if dlat > GEOCODE_TOLERANCE_DEG || dlon > GEOCODE_TOLERANCE_DEG {
                    return Err(CorpusError::GeocodeConflict {
                        city_key: rec.city_key,
                        a: *point,
                        b: rec.point,
                    });
                }
                if point_key(rec.point) < point_key(*point) {
                    *point = rec.point;
                }
                *weight += 1;
            }
            None => {
                table.insert(rec.city_key, (rec.point, 1));
            }
        }
    }
    let mut out: Vec<CityAggregate> = table
        .into_iter()
        .map(|(city_key, (point, weight))| CityAggregate { city_key, point, weight })
        .collect();
    out.sort_by(|a, b| a.city_key.cmp(&b.city_key));
    Ok(out)
}

/// Sum of city weights.
pub fn total_weight(cities: &[CityAggregate]) -> u64 {
    cities.iter().map(|c| c.weight).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER: &str = "paper_id\tyear\tcity\tadmin1\tcountry\tlat\tlon\n";

    fn rec(paper: &str, year: i32, city: &str, admin1: &str, country: &str, lat: f64, lon: f64) -> PublicationRecord {
        PublicationRecord::new(paper, year, city, admin1, country, GeoPoint::new(lat, lon).unwrap()).unwrap()
    }

    fn boston(paper: &str) -> PublicationRecord {
        rec(paper, 1988, "Boston", "MA", "US", 42.3601, -71.0589)
    }

    #[test]
    fn parses_a_line() {
        let text = format!("{HEADER}123\t1988\tBoston\tMA\tUS\t42.3601\t-71.0589\n");
        let mut reader = parse_records(text.as_bytes(), &ColumnMapping::default()).unwrap();
        let r = reader.next().unwrap();
        assert_eq!(r.paper_id(), "123");
        assert_eq!(r.year(), 1988);
        assert_eq!(r.city_key(), "Boston|MA|US");
        assert_eq!(r.point(), GeoPoint::new(42.3601, -71.0589).unwrap());
        assert!(reader.next().is_none());
        let report = reader.finish().unwrap();
        assert_eq!(report.accepted, 1);
        assert!(report.rejects.is_empty());
    }

    #[test]
    fn out_of_range_latitude_is_rejected_with_line_number() {
        let text = format!(
            "{HEADER}1\t1990\tX\tMA\tUS\t91.2\t-71.0\n2\t1990\tBoston\tMA\tUS\t42.3601\t-71.0589\n3\tabc\tY\tMA\tUS\t1\t1\n4\t1990\tshort\n"
        );
        let mut reader = parse_records(text.as_bytes(), &ColumnMapping::default()).unwrap();
        let got: Vec<_> = reader.by_ref().collect();
        assert_eq!(got.len(), 1);
        let report = reader.finish().unwrap();
        assert_eq!(report.accepted, 1);
        let lines: Vec<u64> = report.rejects.iter().map(|r| r.line_no).collect();
        assert_eq!(lines, vec![2, 4, 5]);
        assert!(report.rejects[0].reason.contains("latitude"));
    }

    #[test]
    fn empty_body() {
        let mut reader = parse_records(HEADER.as_bytes(), &ColumnMapping::default()).unwrap();
        assert!(reader.next().is_none());
        let report = reader.finish().unwrap();
        assert_eq!(report.accepted, 0);
        assert!(report.rejects.is_empty());
    }

    #[test]
    fn missing_columns_is_fatal() {
        let err = parse_records("paper_id\tyear\tcity\n".as_bytes(), &ColumnMapping::default()).err();
        assert!(matches!(err, Some(CorpusError::FatalFormat(_))));
        let err = parse_records("".as_bytes(), &ColumnMapping::default()).err();
        assert!(matches!(err, Some(CorpusError::FatalFormat(_))));
    }

    #[test]
    fn column_mapping_and_order() {
        let mapping = ColumnMapping {
            paper_id: "pmid".into(),
            ..ColumnMapping::default()
        };
        let text = "lon\tlat\textra\tcountry\tadmin1\tcity\tyear\tpmid\n-71.0589\t42.3601\tz\tUS\tMA\tBoston\t2016\t77\n";
        let r: Vec<_> = parse_records(text.as_bytes(), &mapping).unwrap().collect();
        assert_eq!(r, vec![rec("77", 2016, "Boston", "MA", "US", 42.3601, -71.0589)]);
    }

    #[test]
    fn invalid_utf8_is_rejected() {
        let mut bytes = HEADER.as_bytes().to_vec();
        bytes.extend_from_slice(b"1\t1990\tB\xffston\tMA\tUS\t42\t-71\n");
        let mut reader = parse_records(bytes.as_slice(), &ColumnMapping::default()).unwrap();
        assert!(reader.next().is_none());
        assert_eq!(reader.finish().unwrap().rejects.len(), 1);
    }

    #[test]
    fn reject_report_format() {
        let mut out = Vec::new();
        write_rejects(
            &mut out,
            &[Reject {
                line_no: 7,
                reason: "bad\tthing".into(),
            }],
        )
        .unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "line_no\treason\n7\tbad thing\n");
    }

    #[test]
    fn dedupe_rules() {
        let same = dedupe_paper_city(vec![boston("1"), boston("1")]).count();
        assert_eq!(same, 1);
        let ny = rec("1", 1988, "New York", "NY", "US", 40.7, -74.0);
        assert_eq!(dedupe_paper_city(vec![boston("1"), ny]).count(), 2);
        assert_eq!(dedupe_paper_city(vec![boston("1"), boston("2")]).count(), 2);
    }

    #[test]
    fn dedupe_keeps_first() {
        let a = rec("1", 1990, "Boston", "MA", "US", 42.36, -71.06);
        let b = rec("1", 1991, "Boston", "MA", "US", 42.36, -71.06);
        let out: Vec<_> = dedupe_paper_city(vec![a.clone(), b]).collect();
        assert_eq!(out, vec![a]);
    }

    #[test]
    fn region_filters() {
        let honolulu = rec("1", 2000, "Honolulu", "HI", "US", 21.3, -157.8);
        let chicago = rec("1", 2000, "Chicago", "IL", "US", 41.88, -87.63);
        let hong_kong = rec("1", 2000, "Hong Kong", "HK", "CN", 22.3, 114.2);
        let wuhan = rec("1", 2000, "Wuhan", "HB", "CN", 30.6, 114.3);
        assert!(!RegionFilter::Lower48.accepts(&honolulu));
        assert!(RegionFilter::Lower48.accepts(&chicago));
        assert!(!RegionFilter::Lower48.accepts(&wuhan));
        assert!(!RegionFilter::MainlandChina.accepts(&hong_kong));
        assert!(RegionFilter::MainlandChina.accepts(&wuhan));
        assert!(RegionFilter::All.accepts(&hong_kong));

        let b = BBox::new(41.88, 50.0, -90.0, -87.63).unwrap();
        assert!(RegionFilter::BBox(b).accepts(&chicago), "edges are inclusive");
        assert!(!RegionFilter::BBox(b).accepts(&honolulu));
        assert!(matches!(BBox::new(10.0, 0.0, 0.0, 1.0), Err(CorpusError::InvalidBBox(_))));
        assert!(matches!(BBox::new(0.0, 1.0, 5.0, 1.0), Err(CorpusError::InvalidBBox(_))));
    }

    #[test]
    fn aggregate_counts_and_sorts() {
        let wuhan = rec("9", 1988, "Wuhan", "HB", "CN", 30.6, 114.3);
        let recs = vec![boston("1"), wuhan, boston("2"), boston("3")];
        let agg = aggregate_cities(recs, None).unwrap();
        assert_eq!(agg.len(), 2);
        assert_eq!((agg[0].city_key(), agg[0].weight()), ("Boston|MA|US", 3));
        assert_eq!((agg[1].city_key(), agg[1].weight()), ("Wuhan|HB|CN", 1));
    }

    #[test]
    fn aggregate_year_window() {
        let late = rec("5", 2016, "Wuhan", "HB", "CN", 30.6, 114.3);
        let agg = aggregate_cities(vec![boston("1"), late], Some(YearRange::single(1988))).unwrap();
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[0].city_key(), "Boston|MA|US");
    }

    #[test]
    fn aggregate_geocode_conflict() {
        let a = rec("1", 1990, "Boston", "MA", "US", 42.36, -71.06);
        let b = rec("2", 1990, "Boston", "MA", "US", 42.40, -71.00);
        assert!(matches!(
            aggregate_cities(vec![a, b], None),
            Err(CorpusError::GeocodeConflict { .. })
        ));
    }

    #[test]
    fn year_range_validation() {
        assert!(YearRange::new(2000, 1990).is_err());
        assert!(YearRange::new(1988, 2016).unwrap().contains(2016));
    }

    #[test]
    fn record_validation() {
        let p = GeoPoint::new(0.0, 0.0).unwrap();
        assert!(PublicationRecord::new("", 2000, "a", "b", "c", p).is_err());
        assert!(PublicationRecord::new("1", 1700, "a", "b", "c", p).is_err());
        assert!(CityAggregate::new("a", p, 0).is_err());
    }

    fn arb_records() -> impl Strategy<Value = Vec<PublicationRecord>> {
        let one = (0u8..6, 1988i32..1992, 0usize..5).prop_map(|(paper, year, city)| {
            let cities = [
                ("Boston", "MA", "US", 42.36, -71.06),
                ("Honolulu", "HI", "US", 21.3, -157.8),
                ("Chicago", "IL", "US", 41.88, -87.63),
                ("Wuhan", "HB", "CN", 30.6, 114.3),
                ("Hong Kong", "HK", "CN", 22.3, 114.2),
            ];
            let (c, a, k, lat, lon) = cities[city];
            rec(&paper.to_string(), year, c, a, k, lat, lon)
        });
        proptest::collection::vec(one, 0..40)
    }

    proptest! {
        #[test]
        fn dedupe_idempotent(recs in arb_records()) {
            let once: Vec<_> = dedupe_paper_city(recs).collect();
            let twice: Vec<_> = dedupe_paper_city(once.clone()).collect();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn filter_idempotent(recs in arb_records()) {
            for f in [RegionFilter::Lower48, RegionFilter::MainlandChina, RegionFilter::All] {
                let once: Vec<_> = filter_region(recs.clone(), f).collect();
                let twice: Vec<_> = filter_region(once.clone(), f).collect();
                prop_assert_eq!(once, twice);
            }
        }

        #[test]
        fn aggregation_conserves_weight_and_ignores_order(recs in arb_records(), y0 in 1988i32..1992) {
            let window = YearRange::new(y0, 1991).unwrap();
            let survivors: Vec<_> = filter_region(dedupe_paper_city(recs), RegionFilter::Lower48).collect();
            let expected = survivors.iter().filter(|r| window.contains(r.year())).count() as u64;
            let agg = aggregate_cities(survivors.clone(), Some(window)).unwrap();
            prop_assert_eq!(total_weight(&agg), expected);
            let mut reversed = survivors;
            reversed.reverse();
            prop_assert_eq!(aggregate_cities(reversed, Some(window)).unwrap(), agg);
        }
    }
}
