use std::path::Path;
use std::process::{Command, Output};

const ZY3: &str = "\
Satellite-ID: ZY3
Sensor-ID: NAD
TopLeftLatitude: 21.0
TopLeftLongitude: 10.0
TopRightLatitude: 21.0
TopRightLongitude: 11.0
BottomRightLatitude: 20.0
BottomRightLongitude: 11.0
BottomLeftLatitude: 20.0
BottomLeftLongitude: 10.0
CloudPercent: 3.5
";

fn rastile(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rastile"))
        .args(args)
        .current_dir(dir)
        .env_remove("RASTILE_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn gen_ingest_query_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("meta.txt"), ZY3).unwrap();

    let gen = rastile(d, &["gen", "512", "512", "4", "7", "img.rsr"]);
    assert!(gen.status.success(), "{}", stderr(&gen));
    assert_eq!(std::fs::metadata(d.join("img.rsr")).unwrap().len(), 320 + 4 * 512 * 512);

    let ingest = rastile(d, &["ingest", "img.rsr", "meta.txt", "--dialect", "zy3-kv"]);
    assert!(ingest.status.success(), "{}", stderr(&ingest));
    assert_eq!(stdout(&ingest).trim(), "1");

    let point = rastile(d, &["query", "point", "1", "0", "0", "10.5", "20.25", "--out", "t.rsr"]);
    assert!(point.status.success(), "{}", stderr(&point));
    assert_eq!(stdout(&point).trim(), "0/1/1");
    assert_eq!(std::fs::metadata(d.join("t.rsr")).unwrap().len(), 320 + 256 * 256);

    let bbox = rastile(d, &["query", "bbox", "1", "3", "0", "10.0", "20.0", "11.0", "21.0", "--out", "m.rsr"]);
    assert!(bbox.status.success(), "{}", stderr(&bbox));
    assert_eq!(stdout(&bbox).lines().count(), 4);
    // full-extent mosaic of band 3 is that band of the input
    let input = std::fs::read(d.join("img.rsr")).unwrap();
    let mosaic = std::fs::read(d.join("m.rsr")).unwrap();
    assert_eq!(mosaic[320..], input[320 + 3 * 512 * 512..]);

    let again = rastile(d, &["ingest", "img.rsr", "meta.txt"]);
    assert_eq!(again.status.code(), Some(1));
    assert!(stderr(&again).starts_with("error: conflict"));
    assert_eq!(stderr(&again).lines().count(), 1);
}

#[test]
fn data_dir_env_overrides_flag() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("meta.txt"), ZY3).unwrap();
    assert!(rastile(d, &["gen", "64", "64", "1", "1", "a.rsr"]).status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_rastile"))
        .args(["ingest", "a.rsr", "meta.txt", "--data-dir", "flagdir", "--tile-size", "128"])
        .current_dir(d)
        .env("RASTILE_DATA_DIR", d.join("envdir"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(d.join("envdir/cluster.json").exists());
    assert!(!d.join("flagdir").exists());
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let none = rastile(dir.path(), &[]);
    assert_eq!(none.status.code(), Some(2));
    assert!(stderr(&none).contains("Usage"));
    assert_eq!(rastile(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(rastile(dir.path(), &["gen", "1", "1", "1", "1", "x", "--bogus"]).status.code(), Some(2));
    assert_eq!(rastile(dir.path(), &["query", "point", "1", "0"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_nonzero_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let q = rastile(d, &["query", "point", "1", "0", "0", "10.5", "20.5", "--data-dir", "missing"]);
    assert_eq!(q.status.code(), Some(1));
    assert_eq!(stderr(&q).lines().count(), 1);

    std::fs::write(d.join("bad.txt"), "Satellite-ID: ZY3\n").unwrap();
    let m = rastile(d, &["meta", "normalize", "bad.txt", "--dialect", "zy3-kv"]);
    assert_eq!(m.status.code(), Some(1));
    assert!(stderr(&m).contains("sensor_id"), "{}", stderr(&m));

    assert_eq!(rastile(d, &["gen", "0", "4", "1", "1", "z.rsr"]).status.code(), Some(1));
}

#[test]
fn meta_normalize_prints_record() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("m.txt"), ZY3).unwrap();
    let out = rastile(dir.path(), &["meta", "normalize", "m.txt", "--dialect", "zy3-kv"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("\"satellite_id\": \"ZY3\""), "{text}");
    assert!(text.contains("\"cloud_percent\": 3.5"), "{text}");
}

#[test]
fn bench_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = rastile(d, &["bench", "tilesize", "--runs", "1", "--sizes", "1", "--sweep", "128,256", "--csv", "a.csv", "--work-dir", "w"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(d.join("a.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    assert!(!d.join("w").exists());

    let out = rastile(d, &["bench", "scaling", "--runs", "1", "--sizes", "1", "--sweep", "1,2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.starts_with("experiment,tile_size,data_size_bytes,node_count,store,metric,median_value_ms,runs"));
    assert_eq!(text.lines().count(), 1 + 2 * 2 + 4);
}
