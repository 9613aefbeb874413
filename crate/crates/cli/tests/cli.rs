use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use loadvine::ingest::{Provenance, SlotMatrix, SLOTS_PER_DAY};
use loadvine::model::HouseholdModel;
use loadvine::synthetic::TwoRegime;

const ALL_DAYS: &str = "1,2,3,4,5,6,7";
const ALL_MONTHS: &str = "1,2,3,4,5,6,7,8,9,10,11,12";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_loadvine"))
}

fn run(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    eprintln!("$ loadvine {}\n{}{}", args.join(" "), String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Synthetic days in the Ausgrid layout for customer 7, plus customer 8
/// with a handful of rows.
fn write_ausgrid_fixture(path: &Path, days: usize) {
    let m = TwoRegime::default().matrix(days, 11).unwrap();
    let mut text = String::from("Solar home electricity data\nCustomer,Consumption Category,date");
    for s in 1..=SLOTS_PER_DAY {
        text.push_str(&format!(",{:02}:{:02}", s / 2, (s % 2) * 30));
    }
    text.push('\n');
    for (d, row) in m.dates().iter().zip(m.rows()) {
        text.push_str(&format!("7,GC,{}", d.format("%-d-%b-%y")));
        for v in row {
            text.push_str(&format!(",{v}"));
        }
        text.push('\n');
    }
    for (d, row) in m.dates().iter().zip(m.rows()).take(5) {
        text.push_str(&format!("8,GC,{d}"));
        for v in row {
            text.push_str(&format!(",{}", v * 2.0));
        }
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

fn write_slots(path: &Path, days: usize, seed: u64) {
    let m = TwoRegime::default().matrix(days, seed).unwrap();
    let m = SlotMatrix::new(m.dates().to_vec(), m.rows().to_vec(), Provenance::default()).unwrap();
    m.write_csv(fs::File::create(path).unwrap()).unwrap();
}

/// One fitted model shared by the tests that only read it.
struct Fitted {
    _dir: tempfile::TempDir,
    slots: PathBuf,
    out: PathBuf,
}

fn fitted() -> &'static Fitted {
    static CELL: OnceLock<Fitted> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let slots = dir.path().join("slots.csv");
        write_slots(&slots, 120, 21);
        let out = dir.path().join("fit");
        let o = run(&["fit", "--slots", s(&slots), "--seed", "5", "--out-dir", s(&out)]);
        assert_eq!(code(&o), 0);
        Fitted { slots, out, _dir: dir }
    })
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect();
    (header, rows)
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
    assert_eq!(code(&run(&["fit", "--help"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    // seed is mandatory for simulate
    let o = run(&["simulate", "--model", s(&fitted().out.join("model.json")), "--out-dir", s(&out)]);
    assert_eq!(code(&o), 1);
    assert!(!out.exists());
    let o = run(&["fit", "--slots", "x.csv", "--bandwidth", "wide", "--out-dir", s(&out)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn missing_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["fit", "--slots", s(&dir.path().join("nope.csv")), "--out-dir", s(&dir.path().join("o"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn ingest_writes_slot_matrix_and_row_errors() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("raw.csv");
    write_ausgrid_fixture(&input, 30);
    let mut text = fs::read_to_string(&input).unwrap();
    text.push_str("7,GC,2-Mar-01,oops\n");
    fs::write(&input, text).unwrap();
    let out = dir.path().join("ing");
    let o = run(&[
        "ingest", "--input", s(&input), "--customer", "7", "--months", ALL_MONTHS, "--weekdays", ALL_DAYS, "--out-dir",
        s(&out),
    ]);
    assert_eq!(code(&o), 0);
    let m = SlotMatrix::read_csv(fs::File::open(out.join("slots.csv")).unwrap()).unwrap();
    assert_eq!(m.n_days(), 30);
    let expected = TwoRegime::default().matrix(30, 11).unwrap();
    assert_eq!(m.rows(), expected.rows());
    let (_, errs) = read_csv(&out.join("row_errors.csv"));
    assert_eq!(errs.len(), 1);
    assert!(!out.join(".loadvine.lock").exists());
}

#[test]
fn ingest_allowlist_writes_one_matrix_per_customer() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("raw.csv");
    write_ausgrid_fixture(&input, 20);
    let list = dir.path().join("ids.txt");
    fs::write(&list, "# households\n8\n7\n99\n").unwrap();
    let out = dir.path().join("ing");
    let o = run(&[
        "ingest", "--input", s(&input), "--allowlist", s(&list), "--months", ALL_MONTHS, "--weekdays", ALL_DAYS,
        "--out-dir", s(&out),
    ]);
    assert_eq!(code(&o), 0);
    let (_, rows) = read_csv(&out.join("households.csv"));
    let counts: Vec<(&str, &str)> = rows.iter().map(|r| (r[0].as_str(), r[1].as_str())).collect();
    assert_eq!(counts, vec![("7", "20"), ("8", "5"), ("99", "0")]);
    assert!(out.join("slots_7.csv").exists() && out.join("slots_8.csv").exists());
}

#[test]
fn empty_filter_fails_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("raw.csv");
    write_ausgrid_fixture(&input, 20);
    for cmd in ["ingest", "fit"] {
        let out = dir.path().join(cmd);
        // fixture days run from January; a December-only filter selects nothing
        let o = run(&[cmd, "--input", s(&input), "--customer", "7", "--months", "12", "--out-dir", s(&out)]);
        assert_eq!(code(&o), 2, "{cmd}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("no records match"));
        assert!(!out.exists(), "{cmd} created its output directory");
    }
}

#[test]
fn fit_writes_model_and_report() {
    let f = fitted();
    let model = HouseholdModel::load(&f.out.join("model.json")).unwrap();
    assert_eq!(model.clusters.k, 2);
    assert_eq!(model.metadata.seed, 5);

    let (header, rows) = read_csv(&f.out.join("segments.csv"));
    assert_eq!(header[..5], ["start_slot", "end_slot", "start_label", "end_label", "cluster"]);
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][0], "1");
    assert_eq!(rows[2][1], "48");
    assert_eq!(rows[2][3], "24:00");
    for w in rows.windows(2) {
        assert_eq!(num(&w[1][0]), num(&w[0][1]) + 1.0);
    }

    let (_, bw) = read_csv(&f.out.join("bandwidths.csv"));
    assert_eq!(bw.len(), SLOTS_PER_DAY);
    assert!(bw.iter().all(|r| num(&r[2]) > 0.0));

    let (_, edges) = read_csv(&f.out.join("vine_edges.csv"));
    let expected: usize = model.clusters.segments.iter().map(|g| g.len() * (g.len() - 1) / 2).sum();
    assert_eq!(edges.len(), expected);

    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(f.out.join("fit_report.json")).unwrap()).unwrap();
    let digest = loadvine::ingest::digest_hex(&fs::read(&f.slots).unwrap());
    assert_eq!(report["input_sha256"], digest.as_str());
    assert_eq!(report["library_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(report["config"]["fit"]["bandwidth"], "sheather_jones");
    assert_eq!(report["k"], 2);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let f = fitted();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "model = \"{}\"\nseed = 1\n\n[simulate]\nn = 3\nlevels = [0.1, 0.9]\n",
            f.out.join("model.json").display()
        ),
    )
    .unwrap();
    let out = dir.path().join("sim");
    let o = run(&["simulate", "--config", s(&cfg), "--n", "2", "--out-dir", s(&out)]);
    assert_eq!(code(&o), 0);
    let (header, rows) = read_csv(&out.join("profiles.csv"));
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r[1] == "1"));
    assert_eq!(header.len(), 3 + SLOTS_PER_DAY);
    let (bh, _) = read_csv(&out.join("bands.csv"));
    assert_eq!(bh[2..], ["q0.1", "q0.9"]);

    fs::write(&cfg, "sed = 1\n").unwrap();
    assert_eq!(code(&run(&["simulate", "--config", s(&cfg), "--out-dir", s(&out)])), 1);
}

#[test]
fn simulate_is_byte_identical_under_a_fixed_seed() {
    let f = fitted();
    let dir = tempfile::tempdir().unwrap();
    let model = f.out.join("model.json");
    let mut files = Vec::new();
    for (name, seed) in [("a", "9"), ("b", "9"), ("c", "10")] {
        let out = dir.path().join(name);
        let o = run(&["simulate", "--model", s(&model), "--n", "1", "--seed", seed, "--out-dir", s(&out)]);
        assert_eq!(code(&o), 0);
        files.push(fs::read(out.join("profiles.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
    assert_ne!(files[0], files[2]);
}

#[test]
fn truncated_profiles_stay_inside_the_band_file_envelope() {
    let f = fitted();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("band");
    let o = run(&[
        "simulate", "--model", s(&f.out.join("model.json")), "--n", "200", "--band", "0.01,0.99", "--seed", "3",
        "--out-dir", s(&out),
    ]);
    assert_eq!(code(&o), 0);
    let (bh, bands) = read_csv(&out.join("bands.csv"));
    let lo = bh.iter().position(|h| h == "q0.01").unwrap();
    let hi = bh.iter().position(|h| h == "q0.99").unwrap();
    let (_, rows) = read_csv(&out.join("profiles.csv"));
    for r in &rows {
        assert!(num(&r[2]) >= 1.0);
        for s in 0..SLOTS_PER_DAY {
            let v = num(&r[3 + s]);
            assert!(v >= num(&bands[s][lo]) && v <= num(&bands[s][hi]), "slot {} value {v}", s + 1);
        }
    }
}

#[test]
fn unreachable_band_reports_acceptance_rate() {
    let f = fitted();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("band");
    let o = run(&[
        "simulate", "--model", s(&f.out.join("model.json")), "--n", "2", "--band", "0.45,0.55", "--max-attempts", "5",
        "--seed", "3", "--out-dir", s(&out),
    ]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("acceptance rate"));
    assert!(!out.join("profiles.csv").exists());
}

#[test]
fn wrong_schema_version_is_rejected() {
    let f = fitted();
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(f.out.join("model.json")).unwrap();
    let old = dir.path().join("old.json");
    fs::write(&old, text.replacen("\"schema_version\": 1", "\"schema_version\": 0", 1)).unwrap();
    let o = run(&["simulate", "--model", s(&old), "--seed", "1", "--out-dir", s(&dir.path().join("o"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("refit"));
}

#[test]
fn locked_output_directory_is_refused() {
    let f = fitted();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join(".loadvine.lock"), "1").unwrap();
    let o = run(&["report", "--model", s(&f.out.join("model.json")), "--out-dir", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(!out.join("segments.csv").exists());
}

#[test]
fn report_exports_are_consistent() {
    let f = fitted();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rep");
    let o = run(&["report", "--model", s(&f.out.join("model.json")), "--out-dir", s(&out)]);
    assert_eq!(code(&o), 0);

    let (_, curve) = read_csv(&out.join("silhouette_curve.csv"));
    let ks: Vec<f64> = curve.iter().map(|r| num(&r[0])).collect();
    assert_eq!(ks, (2..=8).map(f64::from).collect::<Vec<_>>());

    let (_, dist) = read_csv(&out.join("distance_matrix.csv"));
    assert_eq!(dist.len(), SLOTS_PER_DAY);
    for i in 0..SLOTS_PER_DAY {
        assert_eq!(num(&dist[i][1 + i]), 0.0);
        for j in 0..SLOTS_PER_DAY {
            assert_eq!(dist[i][1 + j], dist[j][1 + i]);
        }
    }

    let (_, grid) = read_csv(&out.join("density_grid.csv"));
    for s in 1..=SLOTS_PER_DAY {
        let pts: Vec<(f64, f64)> = grid.iter().filter(|r| num(&r[0]) == s as f64).map(|r| (num(&r[1]), num(&r[3]))).collect();
        let mass: f64 = pts.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum();
        assert!((mass - 1.0).abs() < 1e-6, "slot {s}: {mass}");
    }

    let (_, sil) = read_csv(&out.join("silhouettes.csv"));
    assert_eq!(sil.len(), SLOTS_PER_DAY);
    assert!(sil.iter().all(|r| (-1.0..=1.0).contains(&num(&r[3]))));
    assert!(out.join("marginals.csv").exists() && out.join("vine_edges.csv").exists());
}

#[test]
fn validate_writes_pvalues_and_summary() {
    let f = fitted();
    let dir = tempfile::tempdir().unwrap();
    let real = dir.path().join("real.csv");
    write_slots(&real, 40, 77);
    let out = dir.path().join("val");
    let model = f.out.join("model.json");
    let args = [
        "validate", "--model", s(&model), "--slots", s(&real), "--permutations", "200",
        "--repetitions", "3", "--seed", "4", "--out-dir", s(&out),
    ];
    assert_eq!(code(&run(&args)), 0);
    let (_, p) = read_csv(&out.join("pvalues.csv"));
    assert_eq!(p.len(), 3);
    assert!(p.iter().all(|r| (0.0..=1.0).contains(&num(&r[4]))));
    let (h, summary) = read_csv(&out.join("validate_summary.csv"));
    assert_eq!(h[0], "n_real");
    assert_eq!(summary[0][0], "40");
    let first = fs::read(out.join("pvalues.csv")).unwrap();
    fs::remove_dir_all(&out).unwrap();
    assert_eq!(code(&run(&args)), 0);
    assert_eq!(fs::read(out.join("pvalues.csv")).unwrap(), first);
}
