//! Acceptance gate for the command-line layer: the worked three-node
//! instance must solve, check, sweep, and certify with the documented
//! exit codes and values, and parse/export must round-trip. Prints one
//! PASS/FAIL line; run with `--nocapture` to see it when passing.

use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../networks/three_node.toml")
}

fn run(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_dissipnet"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).unwrap(),
    )
}

fn records(stdout: &str) -> Value {
    serde_json::from_str(stdout).unwrap()
}

struct Checks(Vec<String>);

impl Checks {
    fn expect(&mut self, ok: bool, what: &str) {
        if !ok {
            self.0.push(what.to_string());
        }
    }

    fn close(&mut self, got: f64, want: f64, what: &str) {
        self.expect(
            (got - want).abs() < 1e-7,
            &format!("{what}: got {got}, want {want}"),
        );
    }
}

#[test]
fn criterion_8_cli_end_to_end() {
    let file = fixture();
    let path = file.to_str().unwrap();
    let mut checks = Checks(Vec::new());

    // Solve at the upper corner: exit 0, the known state, the known cost.
    let (code, stdout) = run(&["solve", path, "--scenario", "upper", "--format", "records"]);
    checks.expect(code == 0, &format!("solve exit {code}, want 0"));
    let solve = records(&stdout);
    checks.expect(solve["schema"] == 1, "solve records carry schema 1");
    for (i, want) in [3.0, 2.0, 1.0].into_iter().enumerate() {
        let got = solve["state"]["pi"][i].as_f64().unwrap();
        checks.close(got, want, &format!("solve pi[{i}]"));
    }
    checks.close(solve["cost"].as_f64().unwrap(), 3.0, "solve cost");
    checks.expect(solve["feasible"] == true, "solve feasibility");

    // Check: exit 0, feasible, worst cost at the upper corner.
    let (code, stdout) = run(&["check", path, "--format", "records"]);
    checks.expect(code == 0, &format!("check exit {code}, want 0"));
    let check = records(&stdout);
    checks.expect(check["feasible"] == true, "check verdict");
    checks.close(check["worst_cost"].as_f64().unwrap(), 3.0, "check worst cost");

    // Sweep at resolution 11: 11 rows, the corner rows flagged, and the
    // feasibility conjunction equal to the check verdict.
    let (code, stdout) = run(&["sweep", path, "--resolution", "11", "--format", "records"]);
    checks.expect(code == 0, &format!("sweep exit {code}, want 0"));
    let sweep = records(&stdout);
    let rows = sweep["rows"].as_array().unwrap();
    checks.expect(rows.len() == 11, &format!("sweep rows {}, want 11", rows.len()));
    checks.expect(rows[0]["corner"] == "lower", "first sweep row flagged lower corner");
    checks.expect(rows[10]["corner"] == "upper", "last sweep row flagged upper corner");
    checks.expect(sweep["all_feasible"] == true, "sweep conjunction matches check");

    // The equality also holds on an infeasible variant: both sides flip.
    let text = std::fs::read_to_string(&file).unwrap();
    let tight_path = std::env::temp_dir().join(format!(
        "dissipnet-acceptance-{}.toml",
        std::process::id()
    ));
    std::fs::write(&tight_path, text.replace("pi_max = 4.0", "pi_max = 2.9")).unwrap();
    let tight = tight_path.to_str().unwrap();
    let (code, stdout) = run(&["check", tight, "--format", "records"]);
    checks.expect(code == 2, &format!("tightened check exit {code}, want 2"));
    let tight_check = records(&stdout);
    let (code, stdout) = run(&["sweep", tight, "--resolution", "11", "--format", "records"]);
    checks.expect(code == 2, &format!("tightened sweep exit {code}, want 2"));
    let tight_sweep = records(&stdout);
    checks.expect(
        tight_check["feasible"] == tight_sweep["all_feasible"],
        "check verdict equals sweep conjunction on the tightened file",
    );
    let _ = std::fs::remove_file(&tight_path);

    // Certify the internal node between the corner scenarios: a path of
    // length at least 1 ending at the node, edgewise flows dominated.
    let (code, stdout) = run(&["certify", path, "--node", "1", "--format", "records"]);
    checks.expect(code == 0, &format!("certify exit {code}, want 0"));
    let certify = records(&stdout);
    let path_nodes = certify["path"].as_array().unwrap();
    checks.expect(path_nodes.len() >= 2, "certificate path has at least one edge");
    checks.expect(path_nodes.last() == Some(&Value::from(1)), "certificate path ends at the node");
    checks.expect(certify["strict"] == true, "certificate is strict");
    let edges = certify["edges"].as_array().unwrap();
    let dominated = edges
        .iter()
        .all(|e| e["flow_star"].as_f64().unwrap() > e["flow"].as_f64().unwrap());
    checks.expect(dominated, "certificate edges carry dominated flows");

    // Round trip: export is idempotent and the re-parsed file solves to
    // the same state.
    let (code, first) = run(&["export", path]);
    checks.expect(code == 0, &format!("export exit {code}, want 0"));
    let export_path = std::env::temp_dir().join(format!(
        "dissipnet-acceptance-export-{}.toml",
        std::process::id()
    ));
    std::fs::write(&export_path, &first).unwrap();
    let exported = export_path.to_str().unwrap();
    let (_, second) = run(&["export", exported]);
    checks.expect(first == second, "export round-trips byte-identically");
    let (_, round_tripped) = run(&["solve", exported, "--format", "records"]);
    checks.expect(
        records(&round_tripped)["state"] == solve["state"],
        "round-tripped file solves to the identical state",
    );
    let _ = std::fs::remove_file(&export_path);

    // The remaining exit codes: 3 for numerical failure, 4 for usage.
    let (code, _) = run(&["solve", path, "--max-iter", "0"]);
    checks.expect(code == 3, &format!("exhausted solver exit {code}, want 3"));
    let (code, _) = run(&["solve", "/no/such/instance.toml"]);
    checks.expect(code == 4, &format!("missing file exit {code}, want 4"));

    let failures = checks.0;
    let pass = failures.is_empty();
    let detail = if pass {
        "solve/check/sweep/certify exit codes and values as documented, \
         check equals sweep conjunction on both verdicts, export round-trips"
            .to_string()
    } else {
        failures.join("; ")
    };
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("{tag} criterion 8: {detail}");
    assert!(pass, "criterion 8: {detail}");
}
