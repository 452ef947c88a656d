use std::collections::HashMap;
use std::path::Path;
use std::process::{Command, Output};

use ehaoi::closed_form::{limits_beta_inf, moments_closed};
use ehaoi::{Discipline, EhMode, SystemParams};

const ANALYZE_HEADER: &str = "rho,beta,B,mu,discipline,eh_mode,k,solver_value,closed_value,rel_dev,branch";

fn ehaoi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ehaoi")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

type Record = HashMap<String, String>;

fn records(text: &str) -> Vec<Record> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    rdr.records()
        .map(|r| headers.iter().zip(r.unwrap().iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect())
        .collect()
}

fn num(r: &Record, key: &str) -> f64 {
    r[key].parse().unwrap_or_else(|_| panic!("{key} = {:?}", r[key]))
}

#[test]
fn analyze_grid_has_the_documented_columns() {
    let o = ehaoi(&["analyze", "--discipline", "np", "--rho", "0.5,1,2", "--beta", "1.5", "--battery", "3", "--mu", "1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().next().unwrap(), ANALYZE_HEADER);
    let rows = records(&text);
    assert_eq!(rows.len(), 6);
    for r in &rows {
        assert!(num(r, "rel_dev") <= 1e-9);
        assert_eq!(r["B"], "3");
        assert_eq!(r["branch"], "rho_neq_beta");
    }
}

#[test]
fn single_point_reproduces_the_spot_value() {
    let o = ehaoi(&["analyze", "--rho", "1", "--beta", "1", "--battery", "1", "--k", "1"]);
    let rows = records(&stdout(&o));
    assert_eq!(rows.len(), 1);
    assert!((num(&rows[0], "solver_value") - 3.0).abs() < 1e-12);
    assert!((num(&rows[0], "closed_value") - 3.0).abs() < 1e-12);
}

#[test]
fn pole_in_the_s_grid_is_flagged() {
    let o = ehaoi(&["analyze", "--k", "1", "--s-grid", "-1,0,1.5"]);
    assert!(o.status.success());
    let rows = records(&stdout(&o));
    let by_k: HashMap<_, _> = rows.iter().map(|r| (r["k"].clone(), r)).collect();
    assert!((num(by_k["mgf@-1"], "closed_value") - 7.0 / 48.0).abs() < 1e-12);
    assert_eq!(num(by_k["mgf@0"], "solver_value"), 1.0);
    assert_eq!(by_k["mgf@1.5"]["branch"], "diverged");
    assert_eq!(by_k["mgf@1.5"]["closed_value"], "");
}

#[test]
fn orders_beyond_the_closed_forms_are_solver_only() {
    let o = ehaoi(&["analyze", "--k", "3", "--eh", "any", "--battery", "4"]);
    let rows = records(&stdout(&o));
    assert_eq!(rows[0]["branch"], "solver_only");
    assert!(num(&rows[0], "solver_value") > 0.0);
}

#[test]
fn scenario_file_is_read_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    std::fs::write(&path, r#"{"rho": {"start": 0.5, "stop": 1.5, "step": 0.5}, "beta": 2, "discipline": ["ps", "pw"], "k": [1]}"#)
        .unwrap();
    let p = path.to_str().unwrap();
    let rows = records(&stdout(&ehaoi(&["analyze", "--scenario", p])));
    assert_eq!(rows.len(), 6);
    let rows = records(&stdout(&ehaoi(&["analyze", "--scenario", p, "--discipline", "np"])));
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r["discipline"] == "np" && r["beta"] == "2.0"));
}

#[test]
fn json_and_svg_outputs() {
    let o = ehaoi(&["analyze", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);
    assert_eq!(v[0]["B"], 1);
    let o = ehaoi(&["analyze", "--rho", "0.5:2:0.5", "--format", "svg"]);
    assert!(stdout(&o).starts_with("<svg"));
}

#[test]
fn usage_errors_exit_with_two() {
    for args in [
        vec!["analyze", "--rho", "-1"],
        vec!["analyze", "--discipline", "fifo"],
        vec!["analyze", "--battery", "0"],
        vec!["analyze", "--scenario", "/nonexistent.json"],
        vec!["simulate", "--k", "3"],
        vec!["simulate", "--horizon", "10", "--warmup", "20"],
        vec!["figures", "fig9"],
        vec!["bogus"],
    ] {
        assert_eq!(ehaoi(&args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn strict_mode_enforces_the_tolerance() {
    let grid = ["analyze", "--rho", "0.5,0.7,1.3", "--beta", "0.9,2.2", "--discipline", "all", "--eh", "all", "--battery", "1,2"];
    let ok = ehaoi(&[&grid[..], &["--strict"]].concat());
    assert_eq!(ok.status.code(), Some(0));
    let breach = ehaoi(&[&grid[..], &["--strict", "--tolerance", "0"]].concat());
    assert_eq!(breach.status.code(), Some(3));
    assert!(!breach.stdout.is_empty());
}

#[test]
fn simulate_brackets_the_mean_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let args = |out: &Path| {
        vec![
            "simulate".to_string(),
            "--k".into(),
            "1".into(),
            "--reps".into(),
            "10".into(),
            "--horizon".into(),
            "30000".into(),
            "--seed".into(),
            "5".into(),
            "--s-grid".into(),
            "-0.5".into(),
            "--out".into(),
            out.to_str().unwrap().into(),
        ]
    };
    let run = |out: &Path| Command::new(env!("CARGO_BIN_EXE_ehaoi")).args(args(out)).status().unwrap();
    assert!(run(&a).success());
    assert!(run(&b).success());
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ta, tb);

    let text = String::from_utf8(ta).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        format!("{ANALYZE_HEADER},sim_value,sim_stderr,ci_lo,ci_hi,horizon,reps,seed")
    );
    let rows = records(&text);
    assert_eq!(rows.len(), 2);
    assert!(num(&rows[0], "ci_lo") <= 3.0 && 3.0 <= num(&rows[0], "ci_hi"));
    assert_eq!(rows[0]["reps"], "10");
    assert_eq!(rows[0]["seed"], "5");
}

#[test]
fn simulate_reports_the_two_slot_anytime_waiting_closed_form() {
    let o = ehaoi(&[
        "simulate", "--discipline", "pw", "--eh", "any", "--battery", "2", "--rho", "0.8", "--beta", "1.7",
        "--horizon", "5000", "--reps", "2",
    ]);
    assert!(o.status.success());
    let p = SystemParams::from_utilization(0.8, 1.7, 1.0, 2).unwrap();
    for r in records(&stdout(&o)) {
        let k: usize = r["k"].parse().unwrap();
        let cf = moments_closed(&p, Discipline::LcfsPw, EhMode::Anytime, k).unwrap();
        assert_eq!(cf.source, "pw-any-b2/moments");
        assert!((num(&r, "closed_value") - cf.value).abs() <= 1e-12 * cf.value);
    }
}

#[test]
fn verify_quick_passes_and_skips_monte_carlo() {
    let o = ehaoi(&["verify", "--quick"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with('[')).count(), 10);
    assert!(text.lines().any(|l| l.starts_with("[SKIP]  8")));
    assert!(!text.contains("[FAIL]"));
}

fn figure(which: &str) -> Vec<Record> {
    let dir = tempfile::tempdir().unwrap();
    let o = ehaoi(&["figures", which, "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let listed = stdout(&o);
    assert!(listed.lines().any(|l| l.ends_with(".svg")));
    for path in listed.lines() {
        assert!(Path::new(path).exists());
    }
    records(&std::fs::read_to_string(dir.path().join(format!("{which}.csv"))).unwrap())
}

fn lookup(rows: &[Record], panel: &str, d: &str, rho: &str, curve: &str) -> f64 {
    let r = rows
        .iter()
        .find(|r| r["panel"] == panel && r["discipline"] == d && r["rho"] == rho && r["curve"] == curve)
        .unwrap();
    num(r, "value")
}

#[test]
fn fig8_ps_is_best_at_high_harvest_rate() {
    let rows = figure("fig8");
    for panel in ["c", "f"] {
        let rhos: Vec<String> = rows.iter().filter(|r| r["panel"] == panel).map(|r| r["rho"].clone()).collect();
        assert!(rows.iter().filter(|r| r["panel"] == panel).all(|r| r["beta"] == "50.0" && r["B"] == "2"));
        for rho in &rhos {
            for curve in ["closed_k1", "closed_k2"] {
                let ps = lookup(&rows, panel, "ps", rho, curve);
                assert!(ps <= lookup(&rows, panel, "np", rho, curve));
                assert!(ps <= lookup(&rows, panel, "pw", rho, curve));
            }
        }
    }
    assert!(rows.iter().any(|r| r["curve"] == "sigma"));
}

#[test]
fn fig6_battery_sweep_is_nonincreasing() {
    let rows = figure("fig6");
    let mut series: HashMap<(String, String, String), Vec<(usize, f64)>> = HashMap::new();
    for r in &rows {
        assert_eq!(r["beta"], "1.5");
        series
            .entry((r["panel"].clone(), r["rho"].clone(), r["curve"].clone()))
            .or_default()
            .push((r["B"].parse().unwrap(), num(r, "value")));
    }
    assert_eq!(series.len(), 3 * 50 * 2);
    for (key, mut pts) in series {
        pts.sort_by_key(|p| p.0);
        assert_eq!(pts.len(), 5);
        assert!(pts.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-12)), "{key:?}: {pts:?}");
    }
}

#[test]
fn fig7_waiting_limit_shrinks_with_battery_size() {
    let rows = figure("fig7");
    let mut series: HashMap<(String, String), Vec<(usize, f64)>> = HashMap::new();
    for r in rows.iter().filter(|r| r["panel"] == "c") {
        series.entry((r["rho"].clone(), r["curve"].clone())).or_default().push((r["B"].parse().unwrap(), num(r, "value")));
    }
    assert_eq!(series.len(), 12);
    for (key, mut pts) in series {
        pts.sort_by_key(|p| p.0);
        // With B = 1 no update can wait for a second packet, so that point is the NP queue.
        assert!(pts[1..].windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-12)), "{key:?}: {pts:?}");
        assert!(pts[9].1 < pts[1].1, "{key:?}");
    }
}

#[test]
fn fig5_high_harvest_rate_approaches_the_limit() {
    let rows = figure("fig5");
    let mut checked = 0;
    for r in rows.iter().filter(|r| r["beta"] == "50.0" && r["curve"].starts_with("closed")) {
        let k = if r["curve"] == "closed_k1" { 1 } else { 2 };
        let d: Discipline = r["discipline"].parse().unwrap();
        let m: EhMode = r["eh_mode"].parse().unwrap();
        let p = SystemParams::from_utilization(num(r, "rho"), 50.0, 1.0, r["B"].parse().unwrap()).unwrap();
        let limit = limits_beta_inf(&p, d, m, k).unwrap().value;
        let csv_limit = rows
            .iter()
            .find(|x| x["panel"] == r["panel"] && x["beta"] == "inf" && x["rho"] == r["rho"] && x["curve"] == format!("limit_k{k}"))
            .map(|x| num(x, "value"))
            .unwrap();
        assert!((limit - csv_limit).abs() <= 1e-12 * limit);
        assert!((num(r, "value") - limit).abs() <= 0.02 * limit);
        checked += 1;
    }
    assert_eq!(checked, 6 * 50 * 2);
}
