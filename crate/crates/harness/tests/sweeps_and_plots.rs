//! Sweeps (run directories, summaries, failure handling) and SVG charts.

use std::fs;
use std::path::{Path, PathBuf};

use smoothgnn_harness::metrics::{COLUMNS, SCHEMA_LINE};
use smoothgnn_harness::plot::{plot, PLOT_AREA};
use smoothgnn_harness::sweep::SUMMARY_COLUMNS;
use smoothgnn_harness::{sweep, train, RunConfig, SweepAxis};

fn base() -> RunConfig {
    RunConfig::parse("synthetic.num_graphs = 40\nhidden = 8\nlayers = 2\nepochs = 3\nnoise.rate = 0.2").unwrap()
}

fn values(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn summary_rows(path: &Path) -> Vec<csv::StringRecord> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), SUMMARY_COLUMNS);
    rdr.records().map(|r| r.unwrap()).collect()
}

#[test]
fn single_value_sweep_matches_a_plain_run() {
    let out = tempfile::tempdir().unwrap();
    let s = sweep(&base(), SweepAxis::Hidden, &values(&["8"]), out.path()).unwrap();
    let plain = tempfile::tempdir().unwrap();
    let result = train(&base(), plain.path()).unwrap();
    let run_dir = out.path().join("hidden_8");
    for file in ["metrics.csv", "noise.csv", "model.ckpt", "config.resolved"] {
        assert_eq!(
            fs::read(run_dir.join(file)).unwrap(),
            fs::read(plain.path().join(file)).unwrap(),
            "{file}"
        );
    }
    let rows = summary_rows(&s.summary_path);
    assert_eq!(rows.len(), 1);
    let last = result.records.last().unwrap();
    assert_eq!(&rows[0][3], "ok");
    assert_eq!(rows[0][5].parse::<f64>().unwrap(), last.test_acc.unwrap());
    assert_eq!(rows[0][6].parse::<f64>().unwrap(), last.dirichlet_energy);
    let peak = result.records.iter().filter_map(|r| r.noisy_acc_vs_assigned).fold(0.0, f64::max);
    assert_eq!(rows[0][7].parse::<f64>().unwrap(), peak);
}

#[test]
fn noise_rate_sweep_gives_one_directory_and_row_per_value() {
    let out = tempfile::tempdir().unwrap();
    let s = sweep(&base(), SweepAxis::NoiseRate, &values(&["0", "0.2", "0.4"]), out.path()).unwrap();
    assert_eq!(s.entries.len(), 3);
    for v in ["0", "0.2", "0.4"] {
        let dir = out.path().join(format!("noise_rate_{v}"));
        assert!(dir.join("metrics.csv").is_file(), "{}", dir.display());
        let cfg = RunConfig::parse(&fs::read_to_string(dir.join("config.resolved")).unwrap()).unwrap();
        assert_eq!(cfg.noise.rate, v.parse::<f64>().unwrap());
    }
    let rows = summary_rows(&s.summary_path);
    assert_eq!(rows.iter().map(|r| r[1].to_string()).collect::<Vec<_>>(), values(&["0", "0.2", "0.4"]));
    // no noisy samples at rate 0, so there is nothing to memorize
    assert_eq!(&rows[0][7], "");
}

#[test]
fn dataset_size_sweep_changes_the_number_of_graphs() {
    let out = tempfile::tempdir().unwrap();
    let s = sweep(&base(), SweepAxis::DatasetSize, &values(&["20", "60"]), out.path()).unwrap();
    let sizes: Vec<usize> = s
        .entries
        .iter()
        .map(|e| fs::read_to_string(e.run_dir.join("noise.csv")).unwrap().lines().count() - 1)
        .collect();
    assert_eq!(sizes, vec![20, 60]);
}

#[test]
fn a_failing_value_is_recorded_and_the_sweep_continues() {
    let out = tempfile::tempdir().unwrap();
    // a plain file where the first run directory should go makes that run fail
    fs::write(out.path().join("epochs_1"), "occupied").unwrap();
    let s = sweep(&base(), SweepAxis::Epochs, &values(&["1", "2"]), out.path()).unwrap();
    assert!(s.entries[0].outcome.is_err());
    assert!(s.entries[1].outcome.is_ok());
    let rows = summary_rows(&s.summary_path);
    assert!(rows[0][3].starts_with("failed"));
    assert_eq!(&rows[1][3], "ok");
    assert!(out.path().join("epochs_2/metrics.csv").is_file());
}

#[test]
fn invalid_sweep_values_are_rejected_up_front() {
    let out = tempfile::tempdir().unwrap();
    assert!(sweep(&base(), SweepAxis::NoiseRate, &values(&["0.1", "2"]), out.path()).is_err());
    assert!(!out.path().join("noise_rate_0.1").exists());
}

// ---------- plots ----------

fn polylines(svg: &str) -> Vec<Vec<(f64, f64)>> {
    svg.lines()
        .filter(|l| l.starts_with("<polyline"))
        .map(|l| {
            let start = l.find("points=\"").unwrap() + 8;
            let end = start + l[start..].find('"').unwrap();
            l[start..end]
                .split_whitespace()
                .map(|p| {
                    let (x, y) = p.split_once(',').unwrap();
                    (x.parse().unwrap(), y.parse().unwrap())
                })
                .collect()
        })
        .collect()
}

fn write_metrics(dir: &Path, rows: &[&str]) -> PathBuf {
    fs::create_dir_all(dir).unwrap();
    let mut text = format!("{SCHEMA_LINE}\n{}\n", COLUMNS.join(","));
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    fs::write(dir.join("metrics.csv"), text).unwrap();
    dir.to_path_buf()
}

#[test]
fn header_only_run_gives_empty_axes() {
    let tmp = tempfile::tempdir().unwrap();
    let run = write_metrics(&tmp.path().join("empty"), &[]);
    let files = plot(&[run.clone()], &run).unwrap();
    assert_eq!(files.len(), 4);
    for f in files {
        let svg = fs::read_to_string(&f).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(polylines(&svg).is_empty());
    }
}

#[test]
fn two_runs_overlay_with_a_legend() {
    let tmp = tempfile::tempdir().unwrap();
    let a = write_metrics(
        &tmp.path().join("run_a"),
        &["1,0.7,0.5,0.5,0.6,0.2,0.8,1.5,0", "2,0.6,0.6,0.55,0.7,0.3,0.7,2.5,0"],
    );
    let b = write_metrics(
        &tmp.path().join("run_b"),
        &["1,0.7,0.5,0.6,0.6,,,10,0", "2,0.5,0.7,0.65,0.8,,,40,0", "3,0.4,0.8,0.7,0.9,,,-1,0"],
    );
    let out = tmp.path().join("plots");
    plot(&[a, b], &out).unwrap();
    let energy = fs::read_to_string(out.join("energy.svg")).unwrap();
    assert_eq!(polylines(&energy).len(), 2);
    assert!(energy.contains(">run_a<") && energy.contains(">run_b<"));
    assert_eq!(polylines(&fs::read_to_string(out.join("energy_normalized.svg")).unwrap()).len(), 2);
    // train + test for each run
    assert_eq!(polylines(&fs::read_to_string(out.join("accuracy.svg")).unwrap()).len(), 4);
    // run_b has no noisy samples: only its clean series is drawn
    assert_eq!(polylines(&fs::read_to_string(out.join("clean_vs_noisy.svg")).unwrap()).len(), 4);
}

#[test]
fn every_plotted_point_lies_inside_the_plot_area() {
    let tmp = tempfile::tempdir().unwrap();
    let a = write_metrics(
        &tmp.path().join("a"),
        &["1,3,0.5,0.5,0.5,,,1e-6,0", "5,2,0.9,0.8,0.9,,,1234.5,0", "9,1,1,0.9,1,,,-3,0"],
    );
    let b = write_metrics(&tmp.path().join("b"), &["2,1,0.2,0.1,0.2,,,7,0"]);
    plot(&[a.clone(), b], &a).unwrap();
    let (left, top, right, bottom) = PLOT_AREA;
    for chart in ["accuracy.svg", "energy.svg", "energy_normalized.svg", "clean_vs_noisy.svg"] {
        let svg = fs::read_to_string(a.join(chart)).unwrap();
        let lines = polylines(&svg);
        assert!(!lines.is_empty(), "{chart}");
        for (x, y) in lines.into_iter().flatten() {
            assert!((left - 1e-9..=right + 1e-9).contains(&x), "{chart}: x {x}");
            assert!((top - 1e-9..=bottom + 1e-9).contains(&y), "{chart}: y {y}");
        }
    }
}

#[test]
fn malformed_rows_are_skipped() {
    let tmp = tempfile::tempdir().unwrap();
    let run = write_metrics(
        &tmp.path().join("messy"),
        &["1,0.7,0.5,0.5,0.6,,,1.5,0", "garbage", "2,0.6,oops,0.5,0.6,,,1.5,0", "3,0.5,0.6,0.6,0.7,,,2.5,0"],
    );
    plot(&[run.clone()], &run).unwrap();
    let energy = polylines(&fs::read_to_string(run.join("energy.svg")).unwrap());
    assert_eq!(energy.len(), 1);
    assert_eq!(energy[0].len(), 2);
}

#[test]
fn missing_metrics_file_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(plot(&[tmp.path().join("nothing")], tmp.path()).is_err());
}

#[test]
fn real_run_plots() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    train(&base(), &run).unwrap();
    plot(&[run.clone()], &run).unwrap();
    let acc = polylines(&fs::read_to_string(run.join("accuracy.svg")).unwrap());
    assert_eq!(acc.len(), 2);
    assert!(acc.iter().all(|l| l.len() == 3));
}
