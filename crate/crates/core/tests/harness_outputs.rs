use std::fs;
use std::path::{Path, PathBuf};

use grainsim::harness::report::read_rows_csv;
use grainsim::harness::{run_experiment, ExperimentConfig, RunOptions, CHECKS};
use grainsim::ScalarField;

fn files(dir: &Path, out: &mut Vec<PathBuf>) {
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            files(&p, out);
        } else {
            out.push(p);
        }
    }
}

#[test]
fn outputs_carry_fingerprints_and_recomputable_verdicts() {
    let shipped = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/kjma.toml");
    let mut cfg = ExperimentConfig::load(&shipped).unwrap();
    cfg.realizations = 40;
    cfg.output.dump_realizations = 2;
    let exp = cfg.validate().unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let opts = RunOptions { out_dir: tmp.path().to_path_buf(), checks: None, negative_controls: true, threads: Some(2) };
    let summary = run_experiment(&exp, &opts).unwrap();

    assert_eq!(summary.checks.len(), CHECKS.len());
    let non_control_ok = summary.checks.iter().filter(|c| !c.negative_control).all(|c| c.status != "FAIL" && c.status != "ERROR");
    assert_eq!(summary.pass, non_control_ok);
    assert_eq!(summary.exit_code(), if summary.pass { 0 } else { 1 });

    let mut all = Vec::new();
    files(tmp.path(), &mut all);
    for f in &all {
        match f.extension().and_then(|e| e.to_str()) {
            Some("csv") => {
                let text = fs::read_to_string(f).unwrap();
                assert!(text.starts_with(&format!("# fingerprint: {}", exp.fingerprint)), "{}", f.display());
            }
            Some("json") | Some("svg") => assert!(fs::read_to_string(f).unwrap().contains(&exp.fingerprint), "{}", f.display()),
            Some("raw") => {
                ScalarField::load_raw(f).unwrap();
            }
            _ => {}
        }
    }

    for info in CHECKS {
        let path = tmp.path().join(format!("{}.csv", info.name));
        for row in read_rows_csv(&path).unwrap() {
            assert_eq!(row.evaluate(), row.pass, "{}: {}", info.name, row.label);
        }
    }
}
