use std::path::Path;
use std::process::{Command, Output};

fn millmass(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_millmass"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

const SMALL_CONFIG: &str = r#"{
  "workpiece": {"box_mm": [20, 20, 10]},
  "resolution": {"voxel_mm": 0.1}
}"#;

#[test]
fn simulate_oracle_compare_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("c.json"), SMALL_CONFIG).unwrap();
    std::fs::write(d.join("p.nc"), "G0 X-8 Y10 Z12\nG0 Z9\nG1 X28 F600\nG0 Z12\n").unwrap();

    ok(&millmass(d, &["simulate", "--config", "c.json", "--path", "p.nc", "--out", "t.csv", "--removals", "r.csv"]));
    let table = std::fs::read_to_string(d.join("t.csv")).unwrap();
    assert!(table.lines().any(|l| l == "n,s_mm,x_mm,y_mm,z_mm,m_g,cx_mm,cy_mm,cz_mm,Vr_mm3,t_s"));
    assert!(table.lines().next().unwrap().starts_with("# millmass"));
    let removals = std::fs::read_to_string(d.join("r.csv")).unwrap();
    assert!(removals.starts_with("n,Vr_mm3,crx,cry,crz\n"));

    ok(&millmass(d, &["oracle", "--config", "c.json", "--path", "p.nc", "--out", "o.json"]));
    let o: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("o.json")).unwrap()).unwrap();
    for key in ["voxel_mm", "rho_g_mm3", "v_before_mm3", "dv_mm3", "dm_g", "c_before_mm", "c_after_mm", "per_step_dv_mm3"] {
        assert!(o.get(key).is_some(), "missing {key}");
    }

    let stdout = ok(&millmass(d, &["compare", "--model", "t.csv", "--oracle", "o.json", "--out", "rep.json"]));
    assert!(stdout.contains("dm [g]") && stdout.contains("dc [mm]"));
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("rep.json")).unwrap()).unwrap();
    // A 10 mm wide, 1 mm deep slot across a 20 mm blank.
    let e_dm = rep["e_dm"].as_f64().unwrap();
    assert!(e_dm < 0.02, "{rep}");
    assert!(rep["per_step"].as_array().unwrap().len() > 10);
}

#[test]
fn air_path_keeps_mass_constant() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("c.json"), SMALL_CONFIG).unwrap();
    std::fs::write(d.join("p.csv"), "x_mm,y_mm,z_mm\n-10,-10,15\n30,30,15\n").unwrap();
    ok(&millmass(d, &["simulate", "--config", "c.json", "--path", "p.csv", "--out", "t.csv"]));
    let table = std::fs::read_to_string(d.join("t.csv")).unwrap();
    let masses: Vec<&str> = table
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with('n'))
        .map(|l| l.split(',').nth(5).unwrap())
        .collect();
    assert!(masses.len() > 2);
    assert!(masses.iter().all(|m| *m == masses[0]), "{masses:?}");
}

#[test]
fn outputs_are_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("c.json"), SMALL_CONFIG).unwrap();
    std::fs::write(d.join("p.csv"), "x_mm,y_mm,z_mm\n-6,4,8.5\n14,12,8.5\n26,3,9\n").unwrap();
    let mut tables = Vec::new();
    for threads in ["1", "4"] {
        let out = Command::new(env!("CARGO_BIN_EXE_millmass"))
            .args(["simulate", "--config", "c.json", "--path", "p.csv", "--out", "t.csv"])
            .env("MILLMASS_THREADS", threads)
            .current_dir(d)
            .output()
            .unwrap();
        ok(&out);
        tables.push(std::fs::read(d.join("t.csv")).unwrap());
    }
    assert_eq!(tables[0], tables[1]);
}

#[test]
fn scenarios_write_loadable_paths() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for kind in ["slot", "steps", "pocket", "face"] {
        let file = format!("{kind}.csv");
        ok(&millmass(d, &["scenario", kind, "--out", &file]));
        let p = millmass::toolpath::load_path(&d.join(&file)).unwrap();
        assert!(p.len() >= 2, "{kind}");
    }
    ok(&millmass(d, &["scenario", "steps", "--tilt", "20", "--out", "t.csv", "--config-out", "t.json"]));
    let c = millmass::config::ScenarioConfig::load(&d.join("t.json")).unwrap();
    assert_eq!(c.workpiece.tilt_deg, 20.0);
    ok(&millmass(d, &["scenario", "pocket", "--stepover", "4", "--out", "p4.csv"]));
    let p4 = millmass::toolpath::load_path(&d.join("p4.csv")).unwrap();
    let p5 = millmass::toolpath::load_path(&d.join("pocket.csv")).unwrap();
    assert!(p4.len() > p5.len());
}

#[test]
fn errors_exit_nonzero_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("arc.nc"), "G0 X0 Y0 Z30\nG2 X10 Y0 I5 J0\n").unwrap();
    let out = millmass(d, &["simulate", "--path", "arc.nc", "--out", "t.csv"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    std::fs::write(d.join("bad.json"), r#"{"tool": {"diameter_mm": "ten"}}"#).unwrap();
    std::fs::write(d.join("p.csv"), "x_mm,y_mm,z_mm\n0,0,30\n").unwrap();
    let out = millmass(d, &["simulate", "--config", "bad.json", "--path", "p.csv", "--out", "t.csv"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("tool.diameter_mm"));

    std::fs::write(d.join("o.json"), r#"{"voxel_mm":0.1,"rho_g_mm3":0.00281,"v_before_mm3":1000,"dv_mm3":0,"dm_g":0,"c_before_mm":[0,0,0],"c_after_mm":[0,0,0],"per_step_dv_mm3":[]}"#).unwrap();
    ok(&millmass(d, &["simulate", "--path", "p.csv", "--out", "t.csv"]));
    let out = millmass(d, &["compare", "--model", "t.csv", "--oracle", "o.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("incompatible"));
}
