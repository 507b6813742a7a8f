use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_geohub");

const TSV: &str = "paper_id\tyear\tcity\tadmin1\tcountry\tlat\tlon
1\t1988\tBoston\tMA\tUS\t42.3601\t-71.0589
1\t1988\tBoston\tMA\tUS\t42.3601\t-71.0589
2\t1988\tNew York\tNY\tUS\t40.7128\t-74.0060
3\t1990\tChicago\tIL\tUS\t41.8781\t-87.6298
4\t1990\tHonolulu\tHI\tUS\t21.3069\t-157.8583
5\t1995\tLos Angeles\tCA\tUS\t34.0522\t-118.2437
6\t2000\tSan Francisco\tCA\tUS\t37.7749\t-122.4194
7\t2005\tHouston\tTX\tUS\t29.7604\t-95.3698
8\t2010\tSeattle\tWA\tUS\t47.6062\t-122.3321
9\t2016\tBaltimore\tMD\tUS\t39.2904\t-76.6122
10\t2016\tBoston\tMA\tUS\t42.3601\t-71.0589
11\t2016\tAtlanta\tGA\tUS\t91.0\t-84.3880
12\t2016\tWuhan\tHB\tCN\t30.5928\t114.3055
";

fn setup() -> (TempDir, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("us.tsv");
    fs::write(&input, TSV).unwrap();
    (dir, input)
}

fn geohub(args: &[&str], input: &Path, output: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--input")
        .arg(input)
        .arg("--output")
        .arg(output)
        .output()
        .unwrap()
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn centroid_writes_one_row_and_rejects() {
    let (dir, input) = setup();
    let out = dir.path().join("centroid.csv");
    let o = geohub(&["centroid", "--region", "lower48", "--years", "1988:2016"], &input, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = read(&out);
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "k,cluster_id,lat,lon,weight,rms,mean,units");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1,0,"));
    assert!(lines[1].contains(",9,"), "{}", lines[1]);
    assert!(lines[2].starts_with("# seed=42,version="));
    assert!(lines[2].ends_with("records=12,kept=9,rejects=1"));
    let rejects = read(&dir.path().join("centroid.csv.rejects.tsv"));
    assert!(rejects.starts_with("line_no\treason\n13\t"), "{rejects}");
}

#[test]
fn elbow_reports_selected_k() {
    let (dir, input) = setup();
    let out = dir.path().join("elbow.csv");
    let o = geohub(
        &[
            "elbow", "--region", "lower48", "--k-max", "5", "--mode", "radius", "--threshold", "100", "--units", "miles",
            "--restarts", "3",
        ],
        &input,
        &out,
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = read(&out);
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "k,rms,mean,units");
    assert_eq!(lines.len(), 1 + 5 + 2);
    assert!(lines[6].starts_with("selected_k,"));
    let rms: Vec<f64> = lines[1..6].iter().map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(rms.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn cluster_writes_csv_and_geojson() {
    let (dir, input) = setup();
    let out = dir.path().join("regions.csv");
    let o = geohub(&["cluster", "--region", "lower48", "--k", "3", "--units", "km"], &input, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&out);
    assert_eq!(csv.lines().count(), 1 + 3 + 1);
    assert!(csv.lines().nth(1).unwrap().ends_with(",km"));
    let geojson = read(&dir.path().join("regions.geojson"));
    assert!(geojson.contains("\"FeatureCollection\""));
    assert!(geojson.contains("\"city_key\":\"Seattle|WA|US\""));
}

#[test]
fn trend_writes_series_and_drift() {
    let (dir, input) = setup();
    let out = dir.path().join("trend.csv");
    let o = geohub(&["trend", "--region", "lower48", "--years", "1988:2016"], &input, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let series = read(&out);
    let years: Vec<_> = series.lines().skip(1).filter(|l| !l.starts_with('#')).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(years, vec!["1988", "1990", "1995", "2000", "2005", "2010", "2016"]);
    let drift = read(&dir.path().join("trend.drift.csv"));
    assert_eq!(drift.lines().next().unwrap(), "delta_lat,delta_lon,lat_slope,lon_slope");
    assert_eq!(drift.lines().count(), 3);
}

#[test]
fn density_writes_ascii_grids() {
    let (dir, input) = setup();
    let out = dir.path().join("density.asc");
    let o = geohub(&["density", "--region", "lower48", "--rows", "26", "--cols", "59"], &input, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let grid = read(&out);
    assert!(grid.starts_with("ncols 59\nnrows 26\nxllcorner -125\nyllcorner 24\ncellsize 1\nNODATA_value -1\n"));
    let total: u64 = grid.lines().skip(6).flat_map(|l| l.split(' ')).map(|v| v.parse::<u64>().unwrap()).sum();
    assert_eq!(total, 9);
    assert!(dir.path().join("density.log10.asc").exists());
}

#[test]
fn density_csv_format() {
    let (dir, input) = setup();
    let out = dir.path().join("density.csv");
    let o = geohub(&["density", "--region", "lower48", "--rows", "4", "--cols", "8", "--format", "csv"], &input, &out);
    assert_eq!(o.status.code(), Some(0));
    let text = read(&out);
    assert!(text.lines().next().unwrap().starts_with("lat,"));
    assert!(text.lines().last().unwrap().starts_with("# seed=42"));
    assert!(dir.path().join("density.log10.csv").exists());
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let o = Command::new(BIN).arg("frobnicate").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).to_lowercase().contains("usage"));
}

#[test]
fn bad_flags_are_usage_errors() {
    let (dir, input) = setup();
    let out = dir.path().join("x.csv");
    assert_eq!(geohub(&["centroid", "--region", "atlantis"], &input, &out).status.code(), Some(1));
    assert_eq!(geohub(&["centroid", "--format", "geojson"], &input, &out).status.code(), Some(1));
    assert_eq!(geohub(&["elbow", "--k-max", "3", "--threshold", "-5"], &input, &out).status.code(), Some(1));
}

#[test]
fn data_errors_exit_2() {
    let (dir, input) = setup();
    let out = dir.path().join("x.csv");
    // more clusters than cities
    assert_eq!(geohub(&["cluster", "--region", "lower48", "--k", "50"], &input, &out).status.code(), Some(2));
    let missing = dir.path().join("nope.tsv");
    assert_eq!(geohub(&["centroid"], &missing, &out).status.code(), Some(2));
    let bad = dir.path().join("bad.tsv");
    fs::write(&bad, "paper_id\tyear\n1\t2000\n").unwrap();
    assert_eq!(geohub(&["centroid"], &bad, &out).status.code(), Some(2));
}

#[test]
fn outputs_are_byte_identical_across_thread_counts() {
    let (dir, input) = setup();
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("c{threads}.csv"));
        let o = Command::new(BIN)
            .env("GEOHUB_THREADS", threads)
            .args(["cluster", "--region", "lower48", "--k", "4", "--seed", "7", "--input"])
            .arg(&input)
            .arg("--output")
            .arg(&out)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
        outputs.push((read(&out), read(&out.with_extension("geojson"))));
    }
    assert_eq!(outputs[0], outputs[1]);
}
