//! Exit codes and the downscale/upscale path of the `iarn` binary.

use std::process::Command;

use iarn_core::io::{read_image, write_image};
use iarn_core::synthetic;

fn iarn(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_iarn")).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned())
}

#[test]
fn usage_and_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.ckpt");
    let img = dir.path().join("x.png");
    write_image(&img, &synthetic::image(20, 20, 1).unwrap()).unwrap();
    let out = dir.path().join("y.png");
    let (p, q, r) = (missing.to_str().unwrap(), img.to_str().unwrap(), out.to_str().unwrap());
    assert_eq!(iarn(&["frobnicate"]).0, 2);
    assert_eq!(iarn(&["downscale", "--ckpt", p, "--input", q, "--scale", "2", "--output", r]).0, 3);
    assert_eq!(iarn(&["downscale", "--ckpt", p, "--input", q, "--scale", "abc", "--output", r]).0, 2);
    assert_eq!(iarn(&["downscale", "--ckpt", p, "--input", q, "--scale", "9", "--output", r]).0, 2);
    assert_eq!(iarn(&["train", "--synthetic", "1", "--out", r, "--set", "bogus=1"]).0, 2);
}

#[test]
fn train_then_rescale() {
    let dir = tempfile::tempdir().unwrap();
    let path = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    let ckpt = path("m.ckpt");
    let sets = ["iterations=3", "num_blocks=1", "feature_width=4", "patch_size=32", "batch_size=1"];
    let mut args = vec!["train", "--synthetic", "2", "--progress", "0", "--out", &ckpt];
    for s in &sets {
        args.extend(["--set", s]);
    }
    assert_eq!(iarn(&args).0, 0);
    let (code, info) = iarn(&["info", "--ckpt", &ckpt]);
    assert_eq!(code, 0);
    assert!(info.contains("num_blocks = 1"), "{info}");

    write_image(dir.path().join("hr.png").as_path(), &synthetic::image(40, 30, 3).unwrap()).unwrap();
    let (hr, lr, up) = (path("hr.png"), path("lr.png"), path("up.png"));
    let rescale = |cmd: &str, input: &str, output: &str| {
        iarn(&[cmd, "--ckpt", &ckpt, "--input", input, "--scale", "2.5", "--output", output]).0
    };
    assert_eq!(rescale("downscale", &hr, &lr), 0);
    let low = read_image(dir.path().join("lr.png").as_path()).unwrap();
    assert_eq!((low.height(), low.width()), (16, 12));
    assert_eq!(rescale("upscale", &lr, &up), 0);
    let high = read_image(dir.path().join("up.png").as_path()).unwrap();
    assert_eq!((high.height(), high.width()), (40, 30));
}
