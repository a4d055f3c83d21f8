use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

const HEADER: &str = include_str!("../include/dnls.h");

const PROGRAM: &str = r#"
#include <stdio.h>
#include "dnls.h"

int main(void) {
    DnlsPotential *pot = NULL;
    DnlsField *f = NULL;
    DnlsTrajectory *traj = NULL;
    double n0 = 0.0, n1 = 0.0;
    size_t len = 0;
    if (dnls_potential_laplacian(2, &pot) != DNLS_STATUS_OK) return 10;
    if (dnls_field_gaussian(2, 4, 1.0, 3, &f) != DNLS_STATUS_OK) return 11;
    if (dnls_integrate(f, pot, DNLS_SCHEME_STRANG, 1e-2, 0.5, 10, 1.0, &traj) != DNLS_STATUS_OK) return 12;
    if (dnls_trajectory_len(traj, &len) != DNLS_STATUS_OK || len != 6) return 13;
    DnlsField *last = NULL;
    dnls_trajectory_snapshot(traj, len - 1, &last);
    dnls_particle_number(f, &n0);
    dnls_particle_number(last, &n1);
    if (dnls_integrate(f, pot, 9, 1e-2, 0.5, 10, 1.0, &traj) != DNLS_STATUS_INVALID_ARGUMENT) return 14;
    char msg[128];
    if (dnls_last_error(msg, sizeof msg) == 0) return 15;
    printf("%s %.12f %.12f\n", dnls_version(), n0, n1);
    dnls_field_free(last);
    dnls_trajectory_free(traj);
    dnls_field_free(f);
    dnls_potential_free(pot);
    return 0;
}
"#;

fn profile_dir() -> PathBuf {
    // tests live in <target>/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_declares_the_api() {
    assert!(HEADER.contains("#ifndef DNLS_H"));
    assert!(HEADER.contains("typedef struct DnlsField DnlsField;"));
    assert!(HEADER.contains("DNLS_STATUS_BLOW_UP = 3"));
    for f in [
        "dnls_potential_laplacian",
        "dnls_field_new",
        "dnls_field_copy_values",
        "dnls_integrate",
        "dnls_trajectory_snapshot",
        "dnls_growth_bound",
        "dnls_last_error",
    ] {
        assert!(HEADER.contains(&format!("{f}(")), "{f} missing");
    }
}

#[test]
fn c_program_links_against_static_library() {
    let lib = profile_dir().join("libdnls_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let work = Path::new(env!("CARGO_TARGET_TMPDIR")).join("c_smoke");
    fs::create_dir_all(&work).unwrap();
    let src = work.join("smoke.c");
    fs::write(&src, PROGRAM).unwrap();
    let bin = work.join("smoke");
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let cc = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&bin)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .output()
        .expect("C compiler available");
    assert!(
        cc.status.success(),
        "{}",
        String::from_utf8_lossy(&cc.stderr)
    );
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    let out = String::from_utf8(run.stdout).unwrap();
    let parts: Vec<&str> = out.split_whitespace().collect();
    assert_eq!(parts[0], env!("CARGO_PKG_VERSION"));
    let (n0, n1): (f64, f64) = (parts[1].parse().unwrap(), parts[2].parse().unwrap());
    assert!((n0 - n1).abs() < 1e-9 * n0, "{n0} {n1}");
}
