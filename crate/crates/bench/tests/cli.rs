use std::process::{Command, Output};

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_commkit-bench"))
        .args(args)
        .env_remove("ASSERT_LEVEL")
        .output()
        .expect("binary runs")
}

fn rows(out: &Output) -> Vec<Vec<String>> {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("benchmark,p,transport,strategy,input_size,seed,wall_time_seconds,messages_per_rank_max,bytes_total,checksum")
    );
    lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

/// All columns but the wall time.
fn stable(row: &[String]) -> Vec<String> {
    row.iter()
        .enumerate()
        .filter(|&(i, _)| i != 6)
        .map(|(_, c)| c.clone())
        .collect()
}

#[test]
fn sort_repetitions_share_a_checksum() {
    let out = bench(&[
        "sort", "--ranks", "4", "--n", "20000", "--seed", "1", "--reps", "3", "--verify",
    ]);
    let rows = rows(&out);
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert_eq!(r[0], "sort");
        assert_eq!(r[1], "4");
        assert_eq!(r[4], "80000");
        assert_eq!(r[9], rows[0][9]);
    }
}

#[test]
fn bfs_strategies_and_transports_agree() {
    let mut checksums = Vec::new();
    for strategy in ["direct", "sparse", "grid"] {
        for transport in ["inproc", "tcp"] {
            let out = bench(&[
                "bfs",
                "--ranks",
                "8",
                "--graph",
                "gnm",
                "--n",
                "4096",
                "--m",
                "32768",
                "--strategy",
                strategy,
                "--transport",
                transport,
                "--verify",
            ]);
            let rows = rows(&out);
            assert_eq!(rows[0][3], strategy);
            assert_eq!(rows[0][2], transport);
            checksums.push(rows[0][9].clone());
        }
    }
    assert!(
        checksums.iter().all(|c| c == &checksums[0]),
        "{checksums:?}"
    );
}

#[test]
fn every_graph_family_verifies() {
    for graph in ["ring", "grid2d", "gnm"] {
        let out = bench(&[
            "bfs",
            "--ranks",
            "3",
            "--graph",
            graph,
            "--n",
            "500",
            "--verify",
            "--strategy",
            "sparse",
        ]);
        assert_eq!(rows(&out).len(), 1, "{graph}");
    }
}

#[test]
fn empty_allgather_demo() {
    let out = bench(&["allgather-demo", "--ranks", "2", "--n", "0"]);
    let rows = rows(&out);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][4], "0");
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn csv_is_stable_on_inproc() {
    let args = [
        "allgather-demo",
        "--ranks",
        "3",
        "--n",
        "50",
        "--seed",
        "9",
        "--reps",
        "2",
    ];
    let a = rows(&bench(&args));
    let b = rows(&bench(&args));
    let a: Vec<_> = a.iter().map(|r| stable(r)).collect();
    let b: Vec<_> = b.iter().map(|r| stable(r)).collect();
    assert_eq!(a, b);
    assert_eq!(a[0], a[1]);
}

#[test]
fn transports_report_equal_counts() {
    let common = ["sort", "--ranks", "4", "--n", "1000", "--seed", "2"];
    let inproc = rows(&bench(&[&common[..], &["--transport", "inproc"]].concat()));
    let tcp = rows(&bench(&[&common[..], &["--transport", "tcp"]].concat()));
    let strip = |r: &[String]| {
        let mut s = stable(r);
        s.remove(2);
        s
    };
    assert_eq!(strip(&inproc[0]), strip(&tcp[0]));
}

#[test]
fn usage_errors_exit_with_two() {
    for args in [
        vec!["sort", "--transport", "carrier-pigeon"],
        vec!["sort", "--ranks", "0"],
        vec!["bfs", "--graph", "ring", "--n", "2"],
        vec!["bfs", "--graph", "gnm", "--n", "4", "--m", "7"],
        vec!["scan"],
        vec!["sort", "--assert", "paranoid"],
    ] {
        let out = bench(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(out.stdout.is_empty());
    }
}

#[test]
fn assert_level_defaults_from_environment() {
    let run = |level: &str| {
        Command::new(env!("CARGO_BIN_EXE_commkit-bench"))
            .args(["allgather-demo", "--ranks", "4", "--n", "3"])
            .env("ASSERT_LEVEL", level)
            .output()
            .unwrap()
    };
    let light = rows(&run("light"));
    let heavy = rows(&run("heavy"));
    assert_eq!(light[0][9], heavy[0][9]);
    assert_eq!(run("bogus").status.code(), Some(2));
    let explicit = bench(&[
        "allgather-demo",
        "--ranks",
        "4",
        "--n",
        "3",
        "--assert",
        "none",
    ]);
    assert_eq!(rows(&explicit)[0][9], light[0][9]);
}
