//! Acceptance criteria C1-C10, one line each.
//!
//! C1-C9 run in-process. C10 drives the built binary: every verb twice on a
//! fixed config, the second time single-threaded, and compares the outputs
//! byte for byte.

use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use swimmer_cli::checks::{self, compare_trees, determinism_config};
use swimmer_cli::output::Manifest;

const SEED: u64 = 20240917;

fn swimmer(args: &[&str], config: &Path, out: &Path, threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_swimmer"));
    cmd.args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg("--quiet");
    if let Some(n) = threads {
        cmd.args(["--threads", n]);
    }
    cmd.output().expect("binary runs")
}

fn binary_determinism() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = tmp.path().join("run.toml");
    std::fs::write(&config, determinism_config().to_canonical()).map_err(|e| e.to_string())?;
    let verbs: [&[&str]; 5] = [
        &["height-function"],
        &["simulate"],
        &["optimize"],
        &["sweep", "--param", "compliance.g", "--values", "0,0.5,1", "--optimize"],
        &["selfcheck", "--only", "1,3,4,5"],
    ];
    let mut files = 0;
    for verb in verbs {
        let name = verb[0];
        let (a, b) = (tmp.path().join("a").join(name), tmp.path().join("b").join(name));
        let ra = swimmer(verb, &config, &a, None);
        let rb = swimmer(verb, &config, &b, Some("1"));
        if !ra.status.success() || !rb.status.success() {
            return Err(format!("{name} failed: {}", String::from_utf8_lossy(&ra.stderr)));
        }
        if ra.stdout != rb.stdout {
            return Err(format!("{name}: stdout differs"));
        }
        if name != "selfcheck" {
            files += compare_trees(&a, &b).map_err(|e| format!("{name}: {e}"))?;
            let m = Manifest::read(&a).map_err(|e| format!("{name}: {e}"))?;
            m.verify(&a).map_err(|e| format!("{name}: {e}"))?;
        }
    }
    Ok(format!(
        "5 verbs via the binary, {files} files byte-identical across thread counts"
    ))
}

fn main() {
    let mut failed = Vec::new();
    for id in checks::ids() {
        let report = if id == 10 {
            let start = Instant::now();
            let (passed, detail) = match binary_determinism() {
                Ok(d) => (true, d),
                Err(e) => (false, e),
            };
            checks::CheckReport {
                id,
                name: "determinism",
                passed,
                detail,
                seconds: start.elapsed().as_secs_f64(),
                budget: None,
            }
        } else {
            checks::run(id, SEED)
        };
        let budget = report.budget.map(|b| format!(" / {b:.0} s")).unwrap_or_default();
        println!("{}  [{:.1} s{budget}]", report.line(), report.seconds);
        if !report.passed {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", checks::ids().len());
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
