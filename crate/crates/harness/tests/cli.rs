use std::fs;
use std::path::Path;
use std::process::Command;

use nlkg_harness::config::{parse_sweep_str, RunConfig};
use nlkg_harness::pipeline;
use nlkg_harness::sweep::run_sweep;
use proptest::prelude::*;

const BIN: &str = env!("CARGO_BIN_EXE_nlkg");

/// Single static soliton on a coarse grid: one bisection takes well under a
/// second.
const SMALL: &str = "n = 512\nlength = 40\nbetas = 0\ns0 = 10\nt0 = 4\n";

fn nlkg(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("NLKG_OUT_DIR")
        .output()
        .unwrap()
}

fn bytes(p: &Path) -> Vec<u8> {
    fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn read_csv(p: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = String::from_utf8(bytes(p)).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    let h = lines.next().unwrap().split(',').map(String::from).collect();
    (h, lines.map(|l| l.split(',').map(String::from).collect()).collect())
}

const SHOOT_FILES: &[&str] = &["records.csv", "aim.csv", "summary.csv", "U0.nlkg", "params.txt"];

#[test]
fn groundstate_prints_cubic_amplitude() {
    let d = tempfile::tempdir().unwrap();
    let out = nlkg(&["groundstate", "--n", "1024", "--out-dir", "o"], d.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let q0: f64 = text.lines().next().unwrap().trim_start_matches("Q(0) = ").parse().unwrap();
    assert!((q0 - 2f64.sqrt()).abs() < 1e-10);
    let s = nlkg::snapshot::load(d.path().join("o/groundstate.nlkg")).unwrap();
    assert_eq!(s.grid().n(), 1024);
    assert!(s.second.max_abs() == 0.0);
}

#[test]
fn spectrum_csv_has_closed_form_values() {
    let d = tempfile::tempdir().unwrap();
    let out = nlkg(&["spectrum", "--n", "1024", "--beta", "0.6", "--out-csv", "s.csv"], d.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, rows) = read_csv(&d.path().join("s.csv"));
    assert_eq!(h, ["name", "eigenvalue_or_constant", "residual"]);
    let val = |name: &str| -> f64 { rows.iter().find(|r| r[0] == name).unwrap()[1].parse().unwrap() };
    assert!((val("lambda0") - 3.0).abs() < 5e-3);
    // sqrt(3) / gamma(0.6) = sqrt(3) * 0.8
    assert!((val("growth_plus") - 3f64.sqrt() * 0.8).abs() < 1e-2);
    assert!((val("growth_minus") + 3f64.sqrt() * 0.8).abs() < 1e-2);
    assert!(val("mu0") > 0.0 && val("alpha0") > 0.0);
}

#[test]
fn evolve_tracks_a_travelling_soliton() {
    let d = tempfile::tempdir().unwrap();
    let args = [
        "evolve", "--n", "1024", "--betas", "0.6", "--t0", "0", "--t1", "2", "--reference", "true", "--out-csv", "e.csv",
        "--out-snapshots", "snaps",
    ];
    let out = nlkg(&args, d.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, rows) = read_csv(&d.path().join("e.csv"));
    assert_eq!(h, ["t", "energy", "momentum", "energy_norm", "dist_to_reference"]);
    assert_eq!(rows.len(), 41);
    let e0: f64 = rows[0][1].parse().unwrap();
    for r in &rows {
        let e: f64 = r[1].parse().unwrap();
        assert!((e - e0).abs() < 1e-6 * e0);
        assert!(r[4].parse::<f64>().unwrap() < 1e-3);
    }
    let (_, idx) = read_csv(&d.path().join("snaps/index.csv"));
    assert_eq!(idx.len(), 3);
    // The last snapshot modulates back to a soliton at 0.6 * 2.
    let m = nlkg(&["modulate", "--state", &format!("snaps/{}", idx[2][0]), "--t", "2", "--betas", "0.6", "--out-csv", "m.csv"], d.path());
    assert!(m.status.success(), "{}", String::from_utf8_lossy(&m.stderr));
    let (h, rows) = read_csv(&d.path().join("m.csv"));
    assert_eq!(h, ["t", "y_1", "v_norm", "a_plus_1", "a_minus_1", "a_zero_1", "status"]);
    assert!((rows[0][1].parse::<f64>().unwrap() - 1.2).abs() < 1e-3);
    assert_eq!(rows[0][6], "inside");
}

#[test]
fn config_errors_exit_with_usage_code() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("bad.cfg"), "n = 1000\nbetas = 0.5,0.5\ndt = 0\n").unwrap();
    let out = nlkg(&["shoot", "--config", "bad.cfg"], d.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    for needle in ["n = 1000", "distinct", "dt = 0"] {
        assert!(err.contains(needle), "{err}");
    }
    fs::write(d.path().join("typo.cfg"), "p = 3\nlamda = 1\n").unwrap();
    let out = nlkg(&["spectrum", "--config", "typo.cfg"], d.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("typo.cfg:2"));
    let out = nlkg(&["spectrum", "--n", "many"], d.path());
    assert!(String::from_utf8(out.stderr).unwrap().contains("--n"));
}

#[test]
fn flags_override_config_and_env_sets_out_dir() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("run.cfg"), format!("{SMALL}s0 = 30\n")).unwrap();
    let out = Command::new(BIN)
        .args(["shoot", "--config", "run.cfg", "--s0", "10"])
        .current_dir(d.path())
        .env("NLKG_OUT_DIR", "from_env")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let params = fs::read_to_string(d.path().join("from_env/params.txt")).unwrap();
    assert!(params.contains("s0 = 10.0\n"));
}

#[test]
fn shoot_is_bit_reproducible() {
    let d = tempfile::tempdir().unwrap();
    for o in ["a", "b"] {
        let mut args = vec!["shoot", "--out-dir", o];
        let small: Vec<String> = SMALL.lines().flat_map(|l| {
            let (k, v) = l.split_once(" = ").unwrap();
            [format!("--{k}"), v.to_string()]
        }).collect();
        args.extend(small.iter().map(String::as_str));
        let out = nlkg(&args, d.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in SHOOT_FILES {
        assert_eq!(bytes(&d.path().join("a").join(f)), bytes(&d.path().join("b").join(f)), "{f}");
    }
    let (h, rows) = read_csv(&d.path().join("a/records.csv"));
    assert_eq!(h, ["t", "v_norm", "a_plus", "a_minus", "a_zero", "lyapunov", "energy", "momentum", "status"]);
    assert!(rows.iter().all(|r| r[8] == "inside"));
    let u0 = nlkg::snapshot::load(d.path().join("a/U0.nlkg")).unwrap();
    assert_eq!(u0.grid().n(), 512);
}

#[test]
fn one_run_sweep_matches_direct_shoot() {
    let d = tempfile::tempdir().unwrap();
    let mut c = nlkg_harness::parse_config_str(SMALL).unwrap();
    c.out_dir = d.path().join("direct");
    let s = pipeline::shoot(&c).unwrap();
    assert!(s.converged);
    let spec = parse_sweep_str(&format!("{SMALL}axis.s0 = 10\n"), "sweep", &[]).unwrap();
    let rep = run_sweep(&spec, 1, &d.path().join("sweep")).unwrap();
    assert_eq!(rep.failures(), 0);
    for f in SHOOT_FILES {
        assert_eq!(bytes(&d.path().join("direct").join(f)), bytes(&d.path().join("sweep/run_000").join(f)), "{f}");
    }
}

#[test]
fn sweep_output_is_independent_of_worker_count() {
    let d = tempfile::tempdir().unwrap();
    let text = format!("{SMALL}axis.betas = -0.2; 0; 0.2\naxis.s0 = 9; 10; 11\n");
    let spec = parse_sweep_str(&text, "sweep", &[]).unwrap();
    let one = run_sweep(&spec, 1, &d.path().join("w1")).unwrap();
    let four = run_sweep(&spec, 4, &d.path().join("w4")).unwrap();
    assert_eq!(one.rows.len(), 9);
    assert_eq!(four.failures(), 0);
    let agg = |w: &str| bytes(&d.path().join(w).join("aggregate.csv"));
    assert_eq!(agg("w1"), agg("w4"));
    let (h, rows) = read_csv(&d.path().join("w1/aggregate.csv"));
    assert_eq!(h, ["run", "betas", "s0", "converged", "runs", "aim", "gamma0", "decay_exponent", "error"]);
    assert_eq!(rows.len(), 9);
    assert_eq!((rows[4][1].as_str(), rows[4][2].as_str()), ("0", "10"));
    for i in 0..9 {
        for f in SHOOT_FILES {
            let p = format!("run_{i:03}/{f}");
            assert_eq!(bytes(&d.path().join("w1").join(&p)), bytes(&d.path().join("w4").join(&p)), "{p}");
        }
    }
}

#[test]
fn invalid_points_are_reported_and_others_still_run() {
    let d = tempfile::tempdir().unwrap();
    // gamma0 = sqrt(3)/4 for a static soliton, so T0 = 1 leaves a tube
    // radius exp(-0.433) = 0.649 above eps0 = 0.5, while T0 = 2 gives 0.42.
    let cfg = format!("{SMALL}axis.t0 = 4; 1; 2; 12\n");
    fs::write(d.path().join("sweep.cfg"), cfg).unwrap();
    let out = nlkg(&["sweep", "--config", "sweep.cfg", "--out-dir", "sw", "--workers", "2"], d.path());
    assert_eq!(out.status.code(), Some(1));
    let (_, rows) = read_csv(&d.path().join("sw/aggregate.csv"));
    let text = fs::read_to_string(d.path().join("sw/aggregate.csv")).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0][2], "true");
    assert_eq!(rows[1][2], "false");
    assert!(text.contains("exceeds eps0"));
    assert_eq!(rows[2][2], "true");
    // T0 = 12 is past S0 = 10: rejected at parse time.
    assert!(text.lines().nth(4).unwrap().contains("must be below s0"));
    let (_, timings) = read_csv(&d.path().join("sw/timings.csv"));
    assert_eq!(timings.len(), 4);
    // The failing runs did not disturb their neighbour's artifacts.
    let mut c = nlkg_harness::parse_config_str(SMALL).unwrap();
    c.out_dir = d.path().join("direct");
    pipeline::shoot(&c).unwrap();
    for f in SHOOT_FILES {
        assert_eq!(bytes(&d.path().join("direct").join(f)), bytes(&d.path().join("sw/run_000").join(f)), "{f}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rendered_config_parses_back(
        p in 1.5f64..7.0,
        dt in 1e-4f64..0.1,
        k in 4u32..14,
        betas in proptest::collection::btree_set(-900i32..900, 1..5),
        s0 in 5.0f64..40.0,
        gap in 0.5f64..4.0,
        seed in any::<u64>(),
    ) {
        let mut c = RunConfig::default();
        c.p = p;
        c.dt = dt;
        c.n = 1 << k;
        c.betas = betas.iter().map(|&b| b as f64 / 1000.0).collect();
        c.shifts = c.betas.iter().map(|b| b * std::f64::consts::E).collect();
        c.s0 = s0;
        c.t0 = s0 - gap;
        c.seed = seed;
        let back = nlkg_harness::parse_config_str(&c.render()).unwrap();
        prop_assert_eq!(back, c);
    }

    #[test]
    fn velocity_order_never_matters(perm in Just(vec![0.4, -0.3, 0.1]).prop_shuffle()) {
        let text = format!("betas = {}\nshifts = {}",
            perm.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
            perm.iter().map(|b| (10.0 * b).to_string()).collect::<Vec<_>>().join(","));
        let c = nlkg_harness::parse_config_str(&text).unwrap();
        prop_assert_eq!(&c.betas, &vec![-0.3, 0.1, 0.4]);
        prop_assert_eq!(&c.shifts, &vec![-3.0, 1.0, 4.0]);
    }
}
