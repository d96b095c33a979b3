use serde_json::Value;
use std::f64::consts::LN_2;
use std::path::Path;
use std::process::{Command, Output};

fn lab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lattes-lab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], out: &Path) {
    let o = lab(args, out);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn data_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines().filter(|l| !l.starts_with('#'))
}

#[test]
fn power_sample_has_every_row_and_unit_mass() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["sample", "--family", "power", "--d", "2", "--count", "100000", "--seed", "7"], dir.path());
    let csv = std::fs::read_to_string(dir.path().join("samples.csv")).unwrap();
    let mut lines = data_lines(&csv);
    assert_eq!(lines.next(), Some("re,im,chart,chain,step"));
    assert_eq!(lines.count(), 100_000);
    let summary = json(&dir.path().join("sample_summary.json"));
    assert_eq!(summary["mass"].as_f64(), Some(1.0));
    assert_eq!(summary["seed"].as_u64(), Some(7));
}

#[test]
fn lattes_sample_fills_the_chart() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["sample", "--family", "lattes", "--g2", "4", "--g3", "0", "--count", "20000"], dir.path());
    let csv = std::fs::read_to_string(dir.path().join("samples.csv")).unwrap();
    let mut hit = [[false; 8]; 8];
    let mut charts = [0usize; 2];
    for line in data_lines(&csv).skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let (re, im): (f64, f64) = (f[0].parse().unwrap(), f[1].parse().unwrap());
        let chart: usize = f[2].parse().unwrap();
        charts[chart] += 1;
        // chart coordinates have modulus at most 1, so stay inside the disk
        if chart == 0 && re.abs() < 0.7 && im.abs() < 0.7 {
            let cell = |x: f64| ((x + 0.7) / 0.175) as usize;
            hit[cell(im)][cell(re)] = true;
        }
    }
    assert!(hit.iter().flatten().all(|&h| h), "some cells of [-0.7, 0.7]^2 are empty");
    assert!(charts[0] > 2000 && charts[1] > 2000, "{charts:?}");
}

#[test]
fn unknown_family_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["sample", "--family", "mandelbrot", "--d", "2"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "usage");
    assert_eq!(err["exit_code"], 2);
}

#[test]
fn too_few_samples_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["lyapunov", "--family", "power", "--d", "2", "--count", "500"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "numerical");
}

#[test]
fn green_grid_of_the_square_map_sits_on_the_circle() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["green", "--family", "power", "--d", "2", "--window", "-1.5", "1.5", "--res", "256"], dir.path());
    let csv = std::fs::read_to_string(dir.path().join("green_grid.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("# window=-1.5,1.5,-1.5,1.5 resolution=256x256 map_hash=")));
    let rows: Vec<Vec<f64>> = data_lines(&csv)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 256);
    let h = 3.0 / 256.0;
    let mut annulus = 0.0;
    for (j, row) in rows.iter().enumerate() {
        assert_eq!(row.len(), 256);
        for (i, v) in row.iter().enumerate() {
            let (x, y) = (-1.5 + (i as f64 + 0.5) * h, -1.5 + (j as f64 + 0.5) * h);
            let r = x.hypot(y);
            if (0.95..=1.05).contains(&r) {
                annulus += v * h * h;
            }
        }
    }
    assert!(annulus >= 0.95, "annulus mass {annulus}");
}

#[test]
fn chebyshev_exponent_is_log_two() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["lyapunov", "--family", "chebyshev", "--d", "2"], dir.path());
    let r = json(&dir.path().join("lyapunov.json"));
    let (v, s) = (r["value"].as_f64().unwrap(), r["stderr"].as_f64().unwrap());
    assert!((v - LN_2).abs() <= 3.0 * s, "{v} +- {s}");
    assert_eq!(r["quantity"], "lyapunov");
    assert!(r["config_hash"].as_str().unwrap().len() == 64);
}

#[test]
fn lattes_ratio_series_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["lindiag", "--family", "lattes", "--g2", "4", "--g3", "0", "--nmax", "40"], dir.path());
    let r = json(&dir.path().join("lindiag.json"));
    let slope = r["ratio"]["slope"].as_f64().unwrap();
    assert!((-0.02..=0.02).contains(&slope), "slope {slope}");
    let series = std::fs::read_to_string(dir.path().join("lindiag_series.csv")).unwrap();
    assert!(data_lines(&series).next().unwrap().starts_with("family,rho,tau,nu,n,fraction,ci_half_width"));
}

#[test]
fn tiny_budget_report_is_inconclusive() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["report", "--family", "lattes", "--g2", "4", "--g3", "0", "--count", "2000"], dir.path());
    let r = json(&dir.path().join("report.json"));
    assert_eq!(r["verdict"], "INCONCLUSIVE");
    assert!(r["dimension"].is_null());
    assert!(!r["notes"].as_array().unwrap().is_empty());
}

#[test]
fn explicit_map_from_coefficient_file() {
    let dir = tempfile::tempdir().unwrap();
    let coeffs = dir.path().join("basilica.txt");
    std::fs::write(&coeffs, "# z^2 - 1\np -1 0\np 0 0\np 1 0\nq 1 0\nq 0 0\nq 0 0\n").unwrap();
    ok(
        &["lyapunov", "--family", "explicit", "--coeffs-file", coeffs.to_str().unwrap(), "--count", "20000"],
        dir.path(),
    );
    let r = json(&dir.path().join("lyapunov.json"));
    assert_eq!(r["config"]["map"]["family"], "explicit");
    assert!(r["value"].as_f64().unwrap() > 0.5 * LN_2);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[map]\nfamily = \"quadratic\"\nc = \"0.1\"\n\n[run]\ncount = 4000\nseed = 5\n").unwrap();
    ok(&["sample", "--config", cfg.to_str().unwrap(), "--seed", "6"], dir.path());
    let s = json(&dir.path().join("sample_summary.json"));
    assert_eq!(s["config"]["seed"], 6);
    assert_eq!(s["count"], 4000);
    assert_eq!(s["config"]["map"]["c"][0].as_f64(), Some(0.1));
}

#[test]
fn verify_accepts_fresh_output_and_rejects_edits() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["sample", "--family", "quadratic", "--c", "-0.5", "--count", "3000", "--threads", "2"], dir.path());
    let file = dir.path().join("samples.csv");
    let run = |extra: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_lattes-lab"))
            .arg("verify")
            .arg(&file)
            .args(extra)
            .output()
            .unwrap()
    };
    let o = run(&["--rerun", "--threads", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["rerun_identical"], true);

    let text = std::fs::read_to_string(&file).unwrap();
    std::fs::write(&file, text.replacen("\"seed\":1", "\"seed\":2", 1)).unwrap();
    assert_eq!(run(&[]).status.code(), Some(1));

    // a consistent stamp over edited data passes the hash but not the rerun
    let lines: Vec<&str> = text.lines().collect();
    let edited = lines[..lines.len() - 1].join("\n") + "\n0,0,0,0,0\n";
    std::fs::write(&file, edited).unwrap();
    assert!(run(&[]).status.success());
    assert_eq!(run(&["--rerun"]).status.code(), Some(1));
}
