use std::fs;

use bss_core::family::Target;
use bss_core::simulate::{build_core_covariance, simulate_gaussian_core, GridSpec, PathBundle, PathMeta, SIZE_CAP};
use bss_core::{GammaKernel, KernelSpec};
use bss_toolkit::io::{ingest_paths, read_matrix, sidecar_path, write_matrix, write_paths, MatrixHeader};
use bss_toolkit::ToolkitError;
use nalgebra::DMatrix;

fn simulated() -> PathBundle {
    let spec = KernelSpec::diagonal(&[GammaKernel::new(0.1, 1.0).unwrap(), GammaKernel::new(-0.2, 2.0).unwrap()]);
    let grid = GridSpec::new(1.0, 64, 0.0).unwrap();
    let cov = build_core_covariance(&spec, &grid, Target::Components, SIZE_CAP).unwrap();
    simulate_gaussian_core(&cov, 1, 7).unwrap().remove(0)
}

#[test]
fn path_round_trip_with_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("p.csv");
    let b = simulated();
    write_paths(&b, &file).unwrap();
    assert!(sidecar_path(&file).exists());
    let back = ingest_paths(&file).unwrap();
    assert_eq!(back.grid, b.grid);
    assert_eq!(back.labels, b.labels);
    assert_eq!(back.meta, b.meta);
    for (x, y) in back.levels().iter().zip(b.levels()) {
        assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
    }
}

#[test]
fn path_round_trip_without_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("p.csv");
    let b = simulated();
    write_paths(&b, &file).unwrap();
    fs::remove_file(sidecar_path(&file)).unwrap();
    let back = ingest_paths(&file).unwrap();
    assert_eq!(back.steps(), 64);
    assert!((back.grid.dt() - 1.0 / 64.0).abs() < 1e-15);
    assert_eq!(back.meta, PathMeta::ingested());
    for (x, y) in back.increments().iter().zip(b.increments()) {
        assert!((x - y).abs() < 1e-12);
    }
}

fn ingest_text(text: &str) -> Result<PathBundle, ToolkitError> {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("p.csv");
    fs::write(&file, text).unwrap();
    ingest_paths(&file)
}

#[test]
fn malformed_files_are_rejected() {
    assert!(matches!(ingest_text(""), Err(ToolkitError::Schema { row: 1, .. })));
    assert!(matches!(ingest_text("t,x\n0,0\n0.5,1\n1,2\n"), Err(ToolkitError::Schema { row: 1, column: 1, .. })));
    assert!(matches!(
        ingest_text("time,x\n0,0\n0.5,NaN\n1,2\n"),
        Err(ToolkitError::Schema { row: 3, column: 2, .. })
    ));
    assert!(matches!(
        ingest_text("time,x\n0,0\n0.5,abc\n1,2\n"),
        Err(ToolkitError::Schema { row: 3, column: 2, .. })
    ));
    assert!(matches!(ingest_text("time,x,y\n0,0,0\n0.5,1\n1,2,3\n"), Err(ToolkitError::Schema { row: 3, .. })));
    assert!(matches!(ingest_text("time,x\n0,0\n0.5,1\n0.5,2\n"), Err(ToolkitError::Schema { row: 4, .. })));
    assert!(matches!(ingest_text("time,x\n0,0\n0.5,1\n1.25,2\n"), Err(ToolkitError::NonUniformGrid { row: 4, .. })));
    assert!(matches!(ingest_text("time,x\n0,0\n"), Err(ToolkitError::Schema { .. })));
}

#[test]
fn plain_file_infers_the_grid() {
    let b = ingest_text("time,a,b\n0,0,0\n0.25,1,-1\n0.5,3,-2\n").unwrap();
    assert_eq!(b.p(), 2);
    assert_eq!(b.steps(), 2);
    assert!((b.grid.dt() - 0.25).abs() < 1e-15);
    assert_eq!(b.increment(2, 0), 2.0);
    assert_eq!(b.increment(2, 1), -1.0);
}

#[test]
fn matrix_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("m.csv");
    let m = DMatrix::from_row_slice(2, 3, &[1.0 / 3.0, -2.5e-17, 4.0, 0.1, 1e300, -7.0]);
    let header = MatrixHeader { name: "m".into(), rows: 2, cols: 3, row_labels: vec![], notes: serde_json::Value::Null };
    write_matrix(&file, &m, &header).unwrap();
    assert_eq!(read_matrix(&file).unwrap(), m);
}
