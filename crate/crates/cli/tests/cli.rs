use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn dbdm<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    cli().args(args).output().expect("cannot launch dbdm")
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines().skip(1).filter(|l| !l.starts_with('#')).collect()
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dbdm"))
}

fn small_room(dir: &Path) -> (PathBuf, PathBuf) {
    let (scene, traj) = (dir.join("room.scene"), dir.join("room.traj"));
    let out = cli()
        .args(["gen-scene", "--seed", "4", "--size", "12", "12", "4", "--scene"])
        .arg(&scene)
        .arg("--trajectory")
        .arg(&traj)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (scene, traj)
}

fn gen_log(dir: &Path, scene: &Path, traj: &Path, name: &str, extra: &[&str]) -> (Output, PathBuf) {
    let log = dir.join(name);
    let out = cli()
        .arg("gen")
        .arg("--scene")
        .arg(scene)
        .arg("--trajectory")
        .arg(traj)
        .arg("-o")
        .arg(&log)
        .args(extra)
        .output()
        .unwrap();
    (out, log)
}

#[test]
fn csv_stable_columns_match_golden_file() {
    let out = dbdm(["run".as_ref(), data("tiny.log").as_os_str()]);
    assert!(out.status.success());
    let csv = stdout(&out);
    let stable: Vec<String> =
        csv.lines().filter(|l| !l.starts_with('#')).map(|l| l.split(',').take(9).collect::<Vec<_>>().join(",")).collect();
    let golden = fs::read_to_string(data("tiny_stable.csv")).unwrap();
    assert_eq!(stable, golden.lines().collect::<Vec<_>>());
    assert!(csv.starts_with(dbdm::UpdateReport::CSV_HEADER));
}

#[test]
fn ratio_footer_and_traversed_column_present() {
    let out = dbdm(["run".as_ref(), data("tiny.log").as_os_str()]);
    let csv = stdout(&out);
    let ratios = csv.lines().find(|l| l.starts_with("# traversed_ratio_vs_first,")).unwrap();
    assert_eq!(ratios.split(',').count(), 3);
    assert!(csv.lines().next().unwrap().split(',').any(|c| c == "traversed"));
}

#[test]
fn one_frame_log_gives_one_row() {
    let dir = TempDir::new().unwrap();
    let log = dir.path().join("one.log");
    fs::write(&log, "FRAME 0 0 0 0\n2.1 0.3 0.2\n0.4 -1.7 0.9\n").unwrap();
    let out = dbdm(["run".as_ref(), log.as_os_str()]);
    assert!(out.status.success());
    assert_eq!(data_rows(&stdout(&out)).len(), 1);
}

#[test]
fn both_mappers_accepted() {
    let dir = TempDir::new().unwrap();
    for mapper in ["dense", "boundary"] {
        let export = dir.path().join(format!("{mapper}.map"));
        let out = dbdm([
            "run".as_ref(),
            data("tiny.log").as_os_str(),
            "--mapper".as_ref(),
            mapper.as_ref(),
            "--export".as_ref(),
            export.as_os_str(),
        ]);
        assert!(out.status.success(), "{mapper}");
        assert_eq!(data_rows(&stdout(&out)).len(), 2);
        assert!(!fs::read_to_string(&export).unwrap().is_empty());
    }
    let out = dbdm(["run".as_ref(), data("tiny.log").as_os_str(), "--mapper".as_ref(), "octree".as_ref()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn per_point_rays_run_on_dense_mapper() {
    let out = dbdm(["run", data("tiny.log").to_str().unwrap(), "--mapper", "dense", "--rays", "point"]);
    assert!(out.status.success());
    let rows = data_rows(&stdout(&out)).into_iter().map(str::to_owned).collect::<Vec<_>>();
    assert_eq!(rows[0].split(',').nth(2), Some("5"));
}

#[test]
fn bad_input_fails_with_message() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("missing.log");
    let out = dbdm(["run".as_ref(), missing.as_os_str()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.log"));

    let garbled = dir.path().join("garbled.log");
    fs::write(&garbled, "FRAME 0 0 0 0\n1.0 2.0\n").unwrap();
    let out = dbdm(["run".as_ref(), garbled.as_os_str()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":2"));

    let empty = dir.path().join("empty.log");
    fs::write(&empty, "# nothing\n").unwrap();
    assert_eq!(dbdm(["compare".as_ref(), empty.as_os_str()]).status.code(), Some(2));
}

#[test]
fn compare_clean_and_corrupted() {
    let out = dbdm(["compare".as_ref(), data("tiny.log").as_os_str()]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("mismatches: 0"));

    let out = dbdm(["compare".as_ref(), data("tiny.log").as_os_str(), "--corrupt".as_ref()]);
    assert_eq!(out.status.code(), Some(1));
    let text = stdout(&out);
    assert!(!text.contains("mismatches: 0"));
    assert!(text.contains("expected occupied, got unknown: 1"), "{text}");
}

#[test]
fn gen_writes_one_frame_per_pose_deterministically() {
    let dir = TempDir::new().unwrap();
    let (scene, traj) = small_room(dir.path());
    let (out, a) = gen_log(dir.path(), &scene, &traj, "a.log", &["--n-azimuth", "64"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, b) = gen_log(dir.path(), &scene, &traj, "b.log", &["--n-azimuth", "64"]);
    let (a, b) = (fs::read(a).unwrap(), fs::read(b).unwrap());
    assert_eq!(a, b);
    let frames = String::from_utf8(a).unwrap().lines().filter(|l| l.starts_with("FRAME")).count();
    assert_eq!(frames, 10);
}

#[test]
fn gen_scene_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let (scene, traj) = small_room(dir.path());
    let first = (fs::read(&scene).unwrap(), fs::read(&traj).unwrap());
    small_room(dir.path());
    assert_eq!(first, (fs::read(&scene).unwrap(), fs::read(&traj).unwrap()));
}

#[test]
fn single_elevation_row_rejected() {
    let dir = TempDir::new().unwrap();
    let (scene, traj) = small_room(dir.path());
    let (out, log) = gen_log(dir.path(), &scene, &traj, "flat.log", &["--n-elevation", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!log.exists());
}

#[test]
fn bad_scene_reports_line() {
    let dir = TempDir::new().unwrap();
    let (_, traj) = small_room(dir.path());
    let scene = dir.path().join("bad.scene");
    fs::write(&scene, "BOX 0 0 0 1 1 1\nBOX 0 0 0 1 1\n").unwrap();
    let (out, _) = gen_log(dir.path(), &scene, &traj, "x.log", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.scene:2"));
}

#[test]
fn depth_pgm_written_for_last_scan() {
    let dir = TempDir::new().unwrap();
    let pgm = dir.path().join("depth.pgm");
    let out = dbdm(["run".as_ref(), data("tiny.log").as_os_str(), "--depth-pgm".as_ref(), pgm.as_os_str()]);
    assert!(out.status.success());
    let bytes = fs::read(&pgm).unwrap();
    assert!(bytes.starts_with(b"P5\n360 180\n"));
}
