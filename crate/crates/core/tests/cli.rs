use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fastconsensus"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn body(csv: &str) -> &str {
    csv.split_once('\n').map(|(comment, rest)| {
        assert!(comment.starts_with("# "));
        rest
    })
    .unwrap()
}

fn all_finite(csv: &str, skip_cols: &[usize]) {
    for line in body(csv).lines().skip(1) {
        for (c, field) in line.split(',').enumerate() {
            if !skip_cols.contains(&c) && !field.is_empty() {
                let v: f64 = field.parse().unwrap_or_else(|_| panic!("`{field}` in `{line}`"));
                assert!(v.is_finite(), "{line}");
            }
        }
    }
}

#[test]
fn consensus_series_has_one_row_per_round() {
    let out = stdout(&run(&["consensus", "--graph", "line:n=50", "--protocol", "lazy-metropolis", "--rounds", "500"]));
    let lines: Vec<&str> = body(&out).lines().collect();
    assert_eq!(lines[0], "t,E,x_min,x_max");
    assert_eq!(lines.len(), 502);
    assert!(lines[501].starts_with("500,"));
    all_finite(&out, &[]);
    assert!(out.lines().next().unwrap().contains("eta=0.25"));
}

#[test]
fn consensus_reruns_are_byte_identical() {
    let args = ["consensus", "--graph", "random_connected:n=30,seed=7", "--protocol", "accelerated", "--values", "--seed", "11"];
    let a = stdout(&run(&args));
    let b = stdout(&run(&args));
    assert_eq!(a, b);
    assert!(a.lines().next().unwrap().contains("sigma="));
    let other = stdout(&run(&["consensus", "--graph", "random_connected:n=30,seed=7", "--protocol", "accelerated", "--values", "--seed", "12"]));
    assert_ne!(body(&a), body(&other));
}

#[test]
fn out_flag_and_matrix_dump() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.csv");
    let matrix = dir.path().join("w.csv");
    let status = run(&[
        "consensus", "--graph", "complete:n=4", "--protocol", "uniform-epsilon", "--epsilon", "0.25",
        "--rounds", "3", "--dump-matrix", matrix.to_str().unwrap(), "--out", out.to_str().unwrap(),
    ]);
    assert!(stdout(&status).is_empty());
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(body(&csv).lines().count(), 5);
    let rows: Vec<Vec<f64>> = std::fs::read_to_string(&matrix)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().flatten().all(|&v| v == 0.25));
}

#[test]
fn fuse_reports_per_node_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    std::fs::write(&path, "# y,var\n0.0,1.0\n3.0,2.0\n").unwrap();
    let out = stdout(&run(&["fuse", "--graph", "complete:n=2", "--measurements", path.to_str().unwrap(), "--rounds", "400"]));
    let lines: Vec<&str> = body(&out).lines().collect();
    assert_eq!(lines[0], "node,estimate,abs_error_vs_centralized");
    for line in &lines[1..] {
        let est: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!((est - 1.0).abs() < 1e-6);
    }
}

#[test]
fn optimize_median_row() {
    let out = stdout(&run(&["optimize", "--graph", "line:n=20", "--objective", "median", "--rounds-factor", "4"]));
    let lines: Vec<&str> = body(&out).lines().collect();
    assert!(lines[0].starts_with("n,graph,T,avg_deviation,disp,err"));
    assert!(lines[1].starts_with("20,line,80,"));
    assert!(out.lines().next().unwrap().contains("beta=0.025"));
    all_finite(&out, &[1, 6]);
}

fn write_model(dir: &Path, wrong_differs: bool) -> String {
    let wrong = if wrong_differs { "[0.3, 0.7]" } else { "[0.5, 0.5]" };
    let mut text = String::new();
    for _ in 0..4 {
        text.push_str(&format!("[[node]]\ntruth = [0.5, 0.5]\nlikelihoods = [[0.5, 0.5], {wrong}]\n\n"));
    }
    let path = dir.join(if wrong_differs { "model.toml" } else { "tied.toml" });
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn learn_emits_belief_series_and_refuses_ties() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path(), true);
    let args = ["learn", "--graph", "line:n=4", "--model", &model, "--scheme", "betu", "--rounds", "200", "--seed", "3"];
    let out = stdout(&run(&args));
    let lines: Vec<&str> = body(&out).lines().collect();
    assert_eq!(lines[0], "t,max_wrong_log_belief,mean_belief_1,mean_belief_2");
    assert_eq!(lines.len(), 202);
    all_finite(&out, &[]);
    assert_eq!(out, stdout(&run(&args)));

    let tied = write_model(dir.path(), false);
    let failed = run(&["learn", "--graph", "line:n=4", "--model", &tied]);
    assert!(!failed.status.success());
    assert!(String::from_utf8_lossy(&failed.stderr).starts_with("error[undefined]:"));
}

#[test]
fn edge_list_files_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.txt");
    std::fs::write(&path, "n 3\n1 2\n2 3\n2 1\n").unwrap();
    let spec = format!("file:{}", path.display());
    let out = run(&["consensus", "--graph", &spec, "--rounds", "5"]);
    assert_eq!(body(&stdout(&out)).lines().count(), 7);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn sweeps_produce_sorted_tables() {
    let out = stdout(&run(&["sweep", "median-sweep", "--sizes", "40,20"]));
    let keys: Vec<String> = body(&out)
        .lines()
        .skip(1)
        .map(|l| l.split(',').take(2).collect::<Vec<_>>().join(","))
        .collect();
    assert_eq!(keys, ["20,line", "40,line", "20,lollipop", "40,lollipop"]);

    let out = stdout(&run(&["sweep", "protocol-scaling", "--sizes", "10,20"]));
    let lines: Vec<&str> = body(&out).lines().collect();
    assert_eq!(lines[0], "n,protocol,time_to_eps,bound_rounds,rounds_run,status");
    assert_eq!(lines.len(), 7);
    assert!(lines[1..].iter().all(|l| l.ends_with(",ok")));
}

#[test]
fn failures_print_a_machine_readable_line() {
    for (args, code) in [
        (vec!["consensus", "--graph", "blob:n=4"], "config"),
        (vec!["consensus", "--graph", "lollipop:n=5"], "invalid-size"),
        (vec!["consensus", "--graph", "line:n=4", "--protocol", "accelerated", "--u-multiplier", "0.5"], "config"),
        (vec!["fuse", "--graph", "line:n=2", "--measurements", "/nonexistent/m.csv"], "io"),
        (vec!["sweep", "no-such-preset"], "config"),
    ] {
        let out = run(&args);
        assert!(!out.status.success(), "{args:?}");
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(stderr.starts_with(&format!("error[{code}]:")), "{args:?}: {stderr}");
        assert!(out.stdout.is_empty());
    }
}
