use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn cbn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cbn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Four skewed, dependent columns from a fixed recurrence.
fn write_dataset(dir: &Path, rows: usize) -> PathBuf {
    let path = dir.join("toy.csv");
    let mut text = String::from("a,b,c,d\n");
    let mut s: u64 = 12345;
    let mut next = || {
        s = s
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (s >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..rows {
        let a = next() * 4.0;
        let b = a * a + next();
        let c = (b + next()).ln();
        let d = next() * 10.0;
        text.push_str(&format!("{a},{b},{c},{d}\n"));
    }
    fs::write(&path, text).unwrap();
    path
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_and_usage_exit_codes() {
    assert_eq!(code(&cbn(&["--help"])), 0);
    assert_eq!(code(&cbn(&["fit", "--help"])), 0);
    assert_eq!(code(&cbn(&["fit", "--bogus"])), 1);
    assert_eq!(code(&cbn(&[])), 1);
}

#[test]
fn missing_or_bad_data_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.json");
    assert_eq!(
        code(&cbn(&[
            "fit",
            "--data",
            "/nonexistent.csv",
            "--out",
            p(&out)
        ])),
        2
    );
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "a,b\n1,2\n3,x\n").unwrap();
    assert_eq!(code(&cbn(&["fit", "--data", p(&bad), "--out", p(&out)])), 2);
    let flat = dir.path().join("flat.csv");
    fs::write(&flat, "a,b\n1,2\n1,3\n1,4\n").unwrap();
    let o = cbn(&["fit", "--data", p(&flat), "--out", p(&out)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("'a'"));
}

#[test]
fn tree_with_more_parents_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), 50);
    let out = dir.path().join("m.json");
    let o = cbn(&[
        "fit",
        "--data",
        p(&data),
        "--tree",
        "--max-parents",
        "2",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 1);
    let o = cbn(&[
        "fit",
        "--data",
        p(&data),
        "--missing-fraction",
        "1.5",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 1);
}

fn last_field(line: &str) -> f64 {
    line.rsplit(',').next().unwrap().parse().unwrap()
}

#[test]
fn eval_reproduces_benchmark_training_score() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), 120);
    let bench = dir.path().join("bench.csv");
    let o = cbn(&[
        "benchmark",
        "--data",
        p(&data),
        "--tree",
        "--missing-fraction",
        "0,0.2",
        "--splits",
        "2",
        "--seed",
        "7",
        "--out",
        p(&bench),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = fs::read_to_string(&bench).unwrap();
    let header: Vec<&str> = rows.lines().next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    for kind in ["cbn", "lgbn"] {
        for frac in ["0.2", "0"] {
            let row: Vec<&str> = rows
                .lines()
                .map(|l| l.split(',').collect::<Vec<_>>())
                .find(|f| {
                    f[col("model_kind")] == kind
                        && f[col("missing_fraction")].parse::<f64>().unwrap()
                            == frac.parse::<f64>().unwrap()
                        && f[col("split_index")] == "1"
                })
                .unwrap();
            let expected: f64 = row[col("train_score")].parse().unwrap();
            let model = dir.path().join(format!("{kind}-{frac}.json"));
            let common = [
                "--data",
                p(&data),
                "--tree",
                "--missing-fraction",
                frac,
                "--splits",
                "2",
                "--split",
                "1",
                "--seed",
                "7",
            ];
            let mut fit_args = vec!["fit", "--model", kind, "--out", p(&model)];
            fit_args.extend(common);
            let o = cbn(&fit_args);
            assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
            let fitted = last_field(stdout(&o).lines().nth(1).unwrap());
            assert!(
                (fitted - expected).abs() < 1e-9,
                "{kind} {frac}: fit {fitted} vs {expected}"
            );

            let o = cbn(&[
                "eval",
                "--model-file",
                p(&model),
                "--data",
                p(&data),
                "--missing-fraction",
                frac,
                "--splits",
                "2",
                "--split",
                "1",
                "--seed",
                "7",
                "--part",
                "train",
            ]);
            assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
            let evaluated = last_field(stdout(&o).lines().nth(1).unwrap());
            assert!(
                (evaluated - expected).abs() < 1e-9,
                "{kind} {frac}: eval {evaluated} vs {expected}"
            );
        }
    }
}

#[test]
fn benchmark_output_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), 80);
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = cbn(&[
            "benchmark",
            "--data",
            p(&data),
            "--tree",
            "--missing-fraction",
            "0,0.1",
            "--splits",
            "3",
            "--seed",
            "3",
            "--out",
            p(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        (
            fs::read(&out).unwrap(),
            fs::read(dir.path().join(name.replace(".csv", ".summary.csv"))).unwrap(),
        )
    };
    let a = run("a.csv");
    let b = run("b.csv");
    assert_eq!(a, b);
    assert_eq!(
        String::from_utf8(a.0).unwrap().lines().count(),
        1 + 2 * 2 * 3
    );
    assert!(dir.path().join("a.manifest.json").exists());
    assert!(dir.path().join("a.timing.csv").exists());
}

#[test]
fn sample_is_deterministic_and_shaped() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), 100);
    for kind in ["cbn", "lgbn"] {
        let model = dir.path().join(format!("{kind}.json"));
        assert_eq!(
            code(&cbn(&[
                "fit",
                "--data",
                p(&data),
                "--model",
                kind,
                "--max-parents",
                "2",
                "--out",
                p(&model)
            ])),
            0
        );
        let draw = |name: &str, seed: &str| {
            let out = dir.path().join(name);
            let o = cbn(&[
                "sample",
                "--model-file",
                p(&model),
                "--count",
                "25",
                "--seed",
                seed,
                "--out",
                p(&out),
            ]);
            assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
            fs::read_to_string(out).unwrap()
        };
        let a = draw("s1.csv", "4");
        assert_eq!(a, draw("s2.csv", "4"));
        assert_ne!(a, draw("s3.csv", "5"));
        assert_eq!(a.lines().count(), 26);
        assert_eq!(a.lines().next().unwrap(), "a,b,c,d");
    }
}

#[test]
fn broken_model_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), 40);
    let model = dir.path().join("bad.json");
    fs::write(&model, "{\"model_kind\": \"cbn\", \"version\": 1").unwrap();
    let o = cbn(&["eval", "--model-file", p(&model), "--data", p(&data)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn marginal_curves_cover_each_column_and_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), 200);
    let out = dir.path().join("curves.csv");
    assert_eq!(
        code(&cbn(&[
            "marginals",
            "--data",
            p(&data),
            "--points",
            "50",
            "--out",
            p(&out)
        ])),
        0
    );
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 1 + 4 * 3 * 50);
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let pdf: f64 = f[3].parse().unwrap();
        let cdf: f64 = f[4].parse().unwrap();
        assert!(pdf >= 0.0 && (0.0..=1.0).contains(&cdf));
    }
}

#[test]
fn crime_preparation_drops_identifiers_and_sparse_columns() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("communities.data");
    let mut text = String::new();
    for r in 0..6 {
        let fields: Vec<String> = (0..128)
            .map(|c| match c {
                0..=4 => {
                    if c == 3 {
                        format!("Town{r}")
                    } else {
                        r.to_string()
                    }
                }
                // mostly missing
                10 if r > 1 => "?".into(),
                // one native missing value stays as a masked cell
                20 if r == 0 => "?".into(),
                _ => format!("{:.2}", ((r * 31 + c * 17) % 97) as f64 / 97.0),
            })
            .collect();
        text.push_str(&fields.join(","));
        text.push('\n');
    }
    fs::write(&raw, text).unwrap();
    let out = dir.path().join("crime.csv");
    let o = cbn(&["prepare-crime", "--input", p(&raw), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert_eq!(
        csv.lines().next().unwrap().split(',').count(),
        128 - 5 - 1 - 1
    );
    let small = dir.path().join("crime30.csv");
    assert_eq!(
        code(&cbn(&[
            "prepare-crime",
            "--input",
            p(&raw),
            "--columns",
            "30",
            "--out",
            p(&small)
        ])),
        0
    );
    assert_eq!(
        fs::read_to_string(&small)
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .split(',')
            .count(),
        30
    );
}
