use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use g2kit_core::builders::{bundled_pair, coordinate_torus, kuhn_torus, rp3, ORIGIN};
use g2kit_core::gauge::constant_flux_connection;
use g2kit_core::lagr::format_bmap;
use g2kit_core::mesh::format_mesh;
use tempfile::TempDir;

fn g2kit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_g2kit")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn put(dir: &Path, name: &str, body: String) -> String {
    let p: PathBuf = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn coassoc(dir: &Path) -> String {
    put(dir, "c.mesh", coordinate_torus(&[0, 1, 2, 3], 3, &ORIGIN).to_file_string(""))
}

#[test]
fn verify_structure_passes() {
    let o = g2kit(&["verify-structure"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 5);
    assert!(out.lines().all(|l| l.ends_with("pass=true")));
}

#[test]
fn unknown_subcommand_prints_usage() {
    let o = g2kit(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn non_positive_tolerance_is_rejected() {
    assert_eq!(g2kit(&["verify-structure", "--tol", "0"]).status.code(), Some(2));
}

#[test]
fn malformed_mesh_is_a_parse_error() {
    let dir = TempDir::new().unwrap();
    let p = put(dir.path(), "bad.mesh", "dim 4 2 1\nv 0 0 0 0 0 0 0\ns 0 1\n".into());
    assert_eq!(g2kit(&["residuals", &p]).status.code(), Some(2));
    assert_eq!(g2kit(&["residuals", "/no/such/file.mesh"]).status.code(), Some(2));
}

#[test]
fn torsion_of_rp3() {
    let dir = TempDir::new().unwrap();
    let p = put(dir.path(), "rp3.mesh", format_mesh(&rp3(), None, None, None, ""));
    let o = g2kit(&["torsion", &p]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "H1 betti=0 torsion=2 asd_count=2\n");
}

#[test]
fn torsion_of_t3_signals_an_infinite_family() {
    let dir = TempDir::new().unwrap();
    let p = put(dir.path(), "t3.mesh", format_mesh(&kuhn_torus(3, 3), None, None, None, ""));
    let out = stdout(&g2kit(&["torsion", &p]));
    assert!(out.starts_with("H1 betti=3 torsion=1 asd_count=infinite\n"));
}

#[test]
fn residuals_of_the_coassociative_torus() {
    let dir = TempDir::new().unwrap();
    let o = g2kit(&["residuals", &coassoc(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("coassoc=0 defect=0\n"));
}

#[test]
fn residuals_fail_validation_off_the_calibrated_locus() {
    let dir = TempDir::new().unwrap();
    let slag = put(dir.path(), "slag.mesh", coordinate_torus(&[1, 2, 3], 3, &ORIGIN).to_file_string(""));
    assert_eq!(g2kit(&["residuals", &slag]).status.code(), Some(1));
    let m = coordinate_torus(&[0, 1, 2, 3], 3, &ORIGIN);
    let sd = put(dir.path(), "sd.conn", constant_flux_connection(&m, &[(0, 1, 1), (2, 3, 1)]).to_file_string(m.complex()));
    let o = g2kit(&["residuals", &coassoc(dir.path()), &sd]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("Fminus_norm=0"));
}

#[test]
fn lagrangian_pairs_and_a_bad_map() {
    let dir = TempDir::new().unwrap();
    let (c, l, map) = bundled_pair("s1d3_s1s2").unwrap();
    let cp = put(dir.path(), "c.mesh", format_mesh(&c, None, None, None, ""));
    let lp = put(dir.path(), "l.mesh", format_mesh(&l, None, None, None, ""));
    let bp = put(dir.path(), "b.bmap", format_bmap(&map));
    let o = g2kit(&["lagrangian", &cp, &lp, &bp]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("m=1 rank_alpha=0 rank_beta=1 isotropic=true lagrangian=true exact=true\n"));

    let mut shuffled = map.clone();
    shuffled.swap(0, 1);
    let bad = put(dir.path(), "bad.bmap", format_bmap(&shuffled));
    assert_eq!(g2kit(&["lagrangian", &cp, &lp, &bad]).status.code(), Some(1));
    let garbage = put(dir.path(), "garbage.bmap", "b 0\n".into());
    assert_eq!(g2kit(&["lagrangian", &cp, &lp, &garbage]).status.code(), Some(2));
}

#[test]
fn closedness_reports_are_reproducible() {
    let dir = TempDir::new().unwrap();
    let mesh = coassoc(dir.path());
    let (a, b) = (dir.path().join("a.txt"), dir.path().join("b.txt"));
    for out in [&a, &b] {
        let o = g2kit(&["closedness", &mesh, "--seed", "7", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert!(fs::read_to_string(&a).unwrap().starts_with("form=phi0 h=1e-3 "));
}

#[test]
fn flow_writes_a_trace() {
    let dir = TempDir::new().unwrap();
    let trace = dir.path().join("trace.csv");
    let o = g2kit(&["flow", &coassoc(dir.path()), "--out", trace.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("steps=0 R0=0 R=0 converged=true"));
    let csv = fs::read_to_string(trace).unwrap();
    assert_eq!(csv.lines().next(), Some("step,R,coassoc,Fplus_norm,dt"));
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn flow_that_runs_out_of_steps_fails_validation() {
    let dir = TempDir::new().unwrap();
    let m = coordinate_torus(&[0, 1, 2, 3], 3, &ORIGIN);
    let sd = put(dir.path(), "sd.conn", constant_flux_connection(&m, &[(0, 1, 1), (2, 3, 1)]).to_file_string(m.complex()));
    let o = g2kit(&["flow", &coassoc(dir.path()), &sd, "--max-steps", "2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("converged=false"));
}

#[test]
fn count_on_an_empty_directory() {
    let dir = TempDir::new().unwrap();
    let o = g2kit(&["count", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "seeds=0 basins=0 not_converged=0\n");
}

#[test]
fn count_merges_translates_of_one_torus() {
    let dir = TempDir::new().unwrap();
    let mut shifted = ORIGIN;
    shifted[5] = 0.3;
    put(dir.path(), "a.mesh", coordinate_torus(&[0, 1, 2, 3], 3, &ORIGIN).to_file_string(""));
    put(dir.path(), "b.mesh", coordinate_torus(&[0, 1, 2, 3], 3, &shifted).to_file_string(""));
    let o = Command::new(env!("CARGO_BIN_EXE_g2kit"))
        .args(["count", dir.path().to_str().unwrap()])
        .env("G2KIT_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("seeds=2 basins=1 not_converged=0\nbasin=0 multiplicity=2 representative=a members=a,b\n"));
}

#[test]
fn slice_report() {
    let dir = TempDir::new().unwrap();
    let o = g2kit(&["slice", &coassoc(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("margin=0 is_product=true"));
}
