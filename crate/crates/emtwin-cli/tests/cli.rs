use std::path::Path;
use std::process::Command;

fn emtwin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_emtwin"))
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../emtwin/fixtures")
        .join(name)
        .to_str()
        .unwrap()
        .to_string()
}

#[test]
fn validate_reports_scene_totals() {
    let out = emtwin()
        .args(["scene", "validate", &fixture("shoebox.scene")])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("ok: 1 objects, 12 triangles, 0 wedges"), "{stdout}");
}

#[test]
fn validate_rejects_garbage() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.scene");
    std::fs::write(&bad, "scene v1\nobject\n").unwrap();
    let out = emtwin()
        .args(["scene", "validate", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.starts_with("error:"), "{stderr}");
}

#[test]
fn predict_writes_one_row_per_subcarrier() {
    let dir = tempfile::tempdir().unwrap();
    let twin_path = dir.path().join("twin.ckpt");
    let twin = emtwin::twin::TwinModel::new(&[1], 3.5e9, 11);
    twin.save(&twin_path).unwrap();

    let out_path = dir.path().join("channel.txt");
    let out = emtwin()
        .args([
            "predict",
            "--twin",
            twin_path.to_str().unwrap(),
            "--scene",
            &fixture("shoebox.scene"),
            "--rx",
            "1.5,1.0,1.2",
            "--subcarriers",
            "16",
            "--rays",
            "2000",
            "--out",
            out_path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let text = std::fs::read_to_string(&out_path).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 16);
    for row in rows {
        let parts: Vec<&str> = row.split_whitespace().collect();
        assert_eq!(parts.len(), 2);
        let re: f64 = parts[0].parse().unwrap();
        let im: f64 = parts[1].parse().unwrap();
        assert!(re.is_finite() && im.is_finite());
        assert!(re != 0.0 || im != 0.0);
    }
}
