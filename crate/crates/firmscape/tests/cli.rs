use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_firmscape"));
    c.env_remove("FIRMSCAPE_OUT_DIR");
    c
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().arg("--out-dir").arg(out).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/two_blobs.json")
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn help_lists_every_subcommand() {
    let o = bin().arg("--help").output().unwrap();
    assert!(o.status.success());
    let text = stdout(&o);
    for sub in [
        "density",
        "lisa",
        "clusters",
        "dendrogram",
        "compare",
        "rca",
        "diversity",
        "regress",
        "adherence",
        "sample-points",
        "eval-detector",
        "robustness",
        "synth",
        "pipeline",
    ] {
        assert!(text.contains(sub), "missing {sub}");
    }
}

#[test]
fn missing_and_malformed_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = run(&["density", "--points", "/nonexistent/points.csv"], d);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let bad = write(d, "bad.csv", "x,y\n1,2\n3,oops\n");
    let o = run(&["density", "--points", bad.to_str().unwrap()], d);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(":3:"), "{}", stderr(&o));

    let pts = write(d, "p.csv", "x,y\n1,2\n");
    let o = run(&["density", "--points", pts.to_str().unwrap(), "--format", "shapefile"], d);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["density", "--points", pts.to_str().unwrap(), "--bandwidth", "-5"], d);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn constant_field_is_a_stage_failure() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut body = String::from("row,col,value\n");
    for r in 0..3 {
        for c in 0..3 {
            body.push_str(&format!("{r},{c},0.5\n"));
        }
    }
    let f = write(d, "flat.csv", &body);
    write(
        d,
        "flat.grid.json",
        r#"{"grid":{"origin":{"x":0,"y":0},"cell_size":200,"n_cols":3,"n_rows":3},"kind":"statistic"}"#,
    );
    let o = run(&["lisa", "--field", f.to_str().unwrap(), "--permutations", "99"], d);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("lisa"));
}

#[test]
fn out_dir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let counts = write(dir.path(), "counts.csv", "truth,predicted\n4,3\n0,1\n2,2\n0,0\n");
    let target = dir.path().join("from_env");
    let o = bin()
        .env("FIRMSCAPE_OUT_DIR", &target)
        .args(["eval-detector", "--counts", counts.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(target.join("detector_metrics.json")).unwrap()).unwrap();
    // C_f = mean(3/4, 2/2) and Err_0 = mean(1, 0)
    assert_eq!(m["c_f"].as_f64(), Some(0.875));
    assert_eq!(m["err_0"].as_f64(), Some(0.5));
}

#[test]
fn stepwise_commands_find_both_blobs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg: serde_json::Value = serde_json::from_str(&fs::read_to_string(config()).unwrap()).unwrap();
    let synth = write(d, "synth.json", &cfg["synthetic"].to_string());
    let data = d.join("data");
    let o = run(&["synth", "--config", synth.to_str().unwrap()], &data);
    assert!(o.status.success(), "{}", stderr(&o));

    let grid = data.join("grid.json");
    let visible = data.join("visible.csv");
    let o = run(
        &["density", "--points", visible.to_str().unwrap(), "--grid-spec", grid.to_str().unwrap(), "--name", "visible"],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let field = d.join("density_visible.csv");
    let o = run(&["lisa", "--field", field.to_str().unwrap(), "--seed", "3"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    let lisa = d.join("lisa.csv");
    let o = run(&["clusters", "--field", field.to_str().unwrap(), "--lisa", lisa.to_str().unwrap()], d);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 2, "{}", stdout(&o));

    let o = run(&["dendrogram", "--field", field.to_str().unwrap(), "--lisa", lisa.to_str().unwrap()], d);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(d.join("dendrogram_edges.csv").exists());

    let registered = data.join("registered_commercial.csv");
    let o = run(
        &[
            "density",
            "--points",
            registered.to_str().unwrap(),
            "--grid-spec",
            grid.to_str().unwrap(),
            "--name",
            "formal",
        ],
        d,
    );
    assert!(o.status.success());
    let clusters = d.join("clusters.json");
    let o = run(
        &[
            "compare",
            "--a",
            field.to_str().unwrap(),
            "--b",
            d.join("density_formal.csv").to_str().unwrap(),
            "--clusters",
            clusters.to_str().unwrap(),
        ],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(d.join("radial_delta.csv").exists());

    let firms = data.join("firms.csv");
    for sub in ["rca", "diversity"] {
        let o = run(&[sub, "--firms", firms.to_str().unwrap()], d);
        assert!(o.status.success(), "{sub}: {}", stderr(&o));
    }
    let zones = data.join("zones.json");
    let o = run(
        &[
            "adherence",
            "--points",
            visible.to_str().unwrap(),
            "--zones",
            zones.to_str().unwrap(),
            "--clusters",
            clusters.to_str().unwrap(),
        ],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("overall "));
}

#[test]
fn regress_table_and_sector_modes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let table = write(d, "xy.csv", "x,y,weight\n0,1,1\n1,3,2\n2,5,1\n3,7.5,4\n");
    let o = run(&["regress", "--data", table.to_str().unwrap()], d);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("regression.json")).unwrap()).unwrap();
    assert_eq!(r["weighted"], true);
    assert_eq!(r["n"], 4);

    let firms = write(
        d,
        "firms.csv",
        "zone_id,industry_code,count\nA,4711,5\nB,4711,1\nC,4711,3\nA,5611,1\nB,5611,4\nC,5611,2\n",
    );
    let values = write(d, "values.csv", "zone_id,mean\nA,0.3\nB,-0.2\nC,0.1\n");
    let o = run(&["regress", "--firms", firms.to_str().unwrap(), "--zone-values", values.to_str().unwrap()], d);
    assert!(o.status.success(), "{}", stderr(&o));
    let sectors = fs::read_to_string(d.join("sectors.csv")).unwrap();
    assert!(sectors.lines().count() >= 3, "{sectors}");

    let o = run(&["regress"], d);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sample_points_and_robustness() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let net =
        write(d, "net.json", r#"{"nodes":[{"id":0,"x":0,"y":0},{"id":1,"x":100,"y":0}],"edges":[{"from":0,"to":1}]}"#);
    let o = run(&["sample-points", "--network", net.to_str().unwrap()], d);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "points 6");

    let mut pts = String::from("x,y\n");
    for i in 0..2000 {
        pts.push_str(&format!("{},{}\n", (i * 37 % 1000) as f64 * 5.0, (i * 91 % 1000) as f64 * 5.0));
    }
    let p = write(d, "pts.csv", &pts);
    let o = run(&["robustness", "--points", p.to_str().unwrap(), "--keep", "0.5", "--regions", "50", "--seed", "2"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(&["robustness", "--points", p.to_str().unwrap(), "--keep", "1.5"], d);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn pipeline_without_zones_skips_zone_stages() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut pts = String::from("x,y\n");
    let mut reg = String::from("x,y,industry_code\n");
    for i in 0..600u32 {
        let a = f64::from(i) * 0.7;
        let r = 60.0 * f64::from(i % 25);
        pts.push_str(&format!("{},{}\n", 2000.0 + r * a.cos(), 2000.0 + r * a.sin()));
        reg.push_str(&format!("{},{},4711\n", 2000.0 + r * (a + 0.3).cos(), 2000.0 + r * (a + 0.3).sin()));
    }
    for i in 0..400u32 {
        pts.push_str(&format!("{},{}\n", f64::from(i * 53 % 4000), f64::from(i * 97 % 4000)));
    }
    write(d, "visible.csv", &pts);
    write(d, "registered.csv", &reg);
    let cfg = write(
        d,
        "cfg.json",
        r#"{"inputs":{"visible":{"path":"visible.csv"},"registered":{"path":"registered.csv"}},"params":{"permutations":199}}"#,
    );
    let out = d.join("out");
    let o = run(&["pipeline", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], d);
    assert!(o.status.success(), "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("econ") && err.contains("adherence"), "{err}");
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let stages = manifest["stages"].as_array().unwrap();
    let status = |n: &str| stages.iter().find(|s| s["name"] == n).map(|s| s["status"].as_str().unwrap().to_string());
    assert_eq!(status("density").as_deref(), Some("ok"));
    assert_eq!(status("econ").as_deref(), Some("skipped"));
    assert_eq!(status("adherence").as_deref(), Some("skipped"));
    assert!(out.join("delta.csv").exists());
    assert!(!out.join("rca.csv").exists());

    // an existing run is not overwritten without --force
    let o = run(&["pipeline", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], d);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["pipeline", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--force"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    let leftovers: Vec<_> = fs::read_dir(d)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().contains("partial"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn failed_pipeline_leaves_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "visible.csv", "x,y\n10,10\n10,10\n");
    let cfg = write(d, "cfg.json", r#"{"inputs":{"visible":{"path":"visible.csv"}},"params":{"permutations":99}}"#);
    let out = d.join("out");
    let o = run(&["pipeline", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], d);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(!out.exists());
    assert_eq!(fs::read_dir(d).unwrap().count(), 2);
}
