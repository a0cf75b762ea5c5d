mod common;

use std::fs;
use std::path::Path;

use common::*;
use gpddf::cli::run_cli;
use gpddf::config::RunConfig;
use gpddf::error::Error;
use gpddf::fusion::{aggregate, local_summary, SupportSet, VehicleId};
use gpddf::gp::RegionId;
use gpddf::io::*;
use gpddf::sim::synthetic_field;
use proptest::prelude::*;
use tempfile::tempdir;

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn cli(args: &[&str]) -> i32 {
    run_cli(std::iter::once("gpddf").chain(args.iter().copied()))
}

#[test]
fn two_by_two_grid_is_fully_connected() {
    let dir = tempdir().unwrap();
    let path = write(dir.path(), "f.csv", "row,col,demand\n0,0,1\n0,1,2\n1,0,0\n1,1,5\n");
    let field = load_field(&path, None).unwrap();
    assert_eq!((field.rows, field.cols, field.len()), (2, 2, 4));
    for r in field.graph.regions() {
        assert_eq!(field.graph.neighbors(r.id).len(), 3);
    }
    assert_eq!(field.supply_dist, vec![0.25; 4]);
    assert_eq!(field.demand_dist, vec![0.125, 0.25, 0.0, 0.625]);
}

#[test]
fn unlisted_cells_are_not_on_the_graph() {
    let dir = tempdir().unwrap();
    let mut text = String::from(" row , col , demand \n");
    for r in 0..3 {
        for c in 0..3 {
            if (r, c) != (1, 1) {
                text.push_str(&format!("{r},{c},1\n"));
            }
        }
    }
    let field = load_field(&write(dir.path(), "f.csv", &text), None).unwrap();
    assert_eq!(field.len(), 8);
    assert!(!field.graph.contains(RegionId(4)));
    for r in field.graph.regions() {
        assert!(!field.graph.neighbors(r.id).contains(&RegionId(4)));
    }
    assert_eq!(field.graph.neighbors(RegionId(0)), &[RegionId(1), RegionId(3)]);
}

#[test]
fn explicit_dimensions_can_pad_the_grid() {
    let dir = tempdir().unwrap();
    let path = write(dir.path(), "f.csv", "row,col,demand\n0,0,1\n");
    let field = load_field(&path, Some((3, 4))).unwrap();
    assert_eq!((field.rows, field.cols, field.len()), (3, 4, 1));
    assert!(load_field(&path, Some((1, 0))).is_err());
}

#[test]
fn malformed_rows_report_their_line() {
    let dir = tempdir().unwrap();
    let bad_value = write(dir.path(), "a.csv", "row,col,demand\n0,0,1\n0,1,2\n0,2,lots\n");
    assert!(matches!(load_field(&bad_value, None), Err(Error::Parse { line: 4, .. })));
    let bad_index = write(dir.path(), "b.csv", "row,col,demand\n0,-1,1\n");
    assert!(matches!(load_field(&bad_index, None), Err(Error::Parse { line: 2, .. })));
    let bad_header = write(dir.path(), "c.csv", "r,c,demand\n0,0,1\n");
    assert!(matches!(load_field(&bad_header, None), Err(Error::Parse { line: 1, .. })));
    let negative = write(dir.path(), "d.csv", "row,col,demand\n0,0,-1\n");
    assert!(matches!(load_field(&negative, None), Err(Error::Invalid(_))));
    let twice = write(dir.path(), "e.csv", "row,col,demand\n0,0,1\n0,0,2\n");
    assert!(matches!(load_field(&twice, None), Err(Error::Invalid(_))));
}

#[test]
fn generated_demand_round_trips_exactly() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("demand.csv");
    assert_eq!(cli(&["gen-demand", "--seed", "5", "--out", out.to_str().unwrap()]), 0);
    let loaded = load_field(&out, None).unwrap();
    let generated = synthetic_field(&RunConfig { seed: 5, ..Default::default() }).unwrap();
    assert_eq!((loaded.rows, loaded.cols), (50, 100));
    assert_eq!(loaded.cells(), generated.cells());
    assert_eq!(loaded.graph.max_out_degree(), 8);
    assert_eq!(loaded.truth, generated.truth);
}

#[test]
fn simulate_is_reproducible_across_runs_and_thread_counts() {
    let dir = tempdir().unwrap();
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "4", "4"].iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        let code = cli(&[
            "simulate", "--grid", "8x8", "--vehicles", "3", "--users", "6", "--steps", "8", "--horizon", "2",
            "--support-size", "6", "--seed", "11", "--threads", threads, "--out", out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        outputs.push(fs::read(out.join("metrics.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[1], outputs[2]);
    let text = String::from_utf8(outputs[0].clone()).unwrap();
    assert_eq!(text.lines().next(), Some(METRICS_HEADER));
    assert_eq!(text.lines().count(), 9);

    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("run0/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["version"], "v0.1.0");
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["runs"].as_array().unwrap().len(), 1);
    assert_eq!(manifest["runs"][0]["unserved_users"], 6);
}

#[test]
fn scalability_sweep_writes_one_file_per_fleet_size() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("scal");
    let code = cli(&[
        "simulate", "--scalability", "--policy", "gpddf", "--grid", "6x6", "--users", "4", "--horizon", "1",
        "--support-size", "4", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    for (k, l) in gpddf::cli::SCALABILITY_GRID {
        let rows = read_metrics(&out.join(format!("metrics_k{k}_l{l}.csv"))).unwrap();
        assert_eq!(rows.len(), l);
    }
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["scalability_grid"], serde_json::json!([[10, 960], [20, 480], [30, 320]]));
}

#[test]
fn verify_passes_and_bad_usage_exits_with_two() {
    assert_eq!(cli(&["verify", "--instances", "10", "--seed", "3"]), 0);
    assert_eq!(cli(&["verify", "--instances", "0"]), 2);
    assert_eq!(cli(&["predict", "--grid", "4x4", "--data-size", "100"]), 2);
    assert_eq!(cli(&["simulate", "--grid", "4"]), 2);
    assert_eq!(cli(&["simulate", "--field", "/nonexistent/field.csv"]), 2);
    assert_eq!(cli(&["--version"]), 0);
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("o");
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"rows": 6, "cols": 7, "vehicles": 2, "users": 3, "steps": 3, "horizon": 1, "support_size": 4}"#,
    );
    assert_eq!(cli(&["simulate", "--config", cfg.to_str().unwrap(), "--steps", "5", "--out", out.to_str().unwrap()]), 0);
    assert_eq!(read_metrics(&out.join("metrics.csv")).unwrap().len(), 5);
    let typo = write(dir.path(), "typo.json", r#"{"vehicle": 2}"#);
    assert_eq!(cli(&["simulate", "--config", typo.to_str().unwrap()]), 2);
}

fn summary_instance(seed: u64, vehicles: usize) -> (SupportSet, Vec<(VehicleId, gpddf::fusion::LocalSummary)>) {
    let mut r = rng(seed);
    let h = hyp(&mut r);
    let support = SupportSet::new(regions(&mut r, 0, 1 + seed as usize % 6), &h).unwrap();
    let locals = (0..vehicles)
        .map(|k| {
            let d = dataset(&mut r, 100 * (k + 1), seed as usize % 7, &h);
            (VehicleId::from_index(k), local_summary(&d, &support, &h).unwrap())
        })
        .collect();
    (support, locals)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn summaries_survive_the_wire(seed in any::<u64>(), vehicles in 1usize..5) {
        let (support, locals) = summary_instance(seed, vehicles);
        for (_, s) in &locals {
            let bytes = encode_local(s);
            prop_assert_eq!(&decode_local(&bytes).unwrap(), s);
            prop_assert!(decode_local(&bytes[..bytes.len() - 1]).is_err());
            let mut longer = bytes.clone();
            longer.push(0);
            prop_assert!(decode_local(&longer).is_err());
        }
        let global = aggregate(&locals, &support).unwrap();
        let bytes = encode_global(&global);
        let back = decode_global(&bytes, &support).unwrap();
        prop_assert_eq!(&back.vec, &global.vec);
        prop_assert_eq!(&back.mat, &global.mat);
        prop_assert_eq!(&back.contributors, &global.contributors);
        prop_assert_eq!(back.weights(), global.weights());
        prop_assert!(decode_local(&bytes).is_err());
        for cut in [0, 4, 8, bytes.len() / 2] {
            prop_assert!(decode_global(&bytes[..cut], &support).is_err());
        }
    }
}
