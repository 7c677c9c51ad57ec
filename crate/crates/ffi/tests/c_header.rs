//! Compiles and runs a C program against the generated header and the static
//! library when a C compiler is available.

use std::path::{Path, PathBuf};
use std::process::Command;

fn static_lib() -> Option<PathBuf> {
    // tests run from target/<profile>/deps
    let exe = std::env::current_exe().ok()?;
    let profile_dir = exe.parent()?.parent()?;
    let lib = profile_dir.join("libalgebroid_mech_ffi.a");
    lib.exists().then_some(lib)
}

#[test]
fn header_is_generated() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/algebroid_mech.h");
    let text = std::fs::read_to_string(header).unwrap();
    for name in [
        "am_chart_builtin",
        "am_integrate",
        "am_alpha_map",
        "am_last_error",
        "AM_STATUS_SINGULAR_HESSIAN",
        "typedef struct AmChart AmChart",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
}

#[test]
fn c_program_links_and_runs() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let Some(lib) = static_lib() else {
        eprintln!("static library not built; skipping link test");
        return;
    };
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let out = tempfile::tempdir().unwrap();
    let exe = out.path().join("smoke");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(dir.join("include"))
        .arg(dir.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let run = Command::new(&exe).output().unwrap();
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    assert_eq!(String::from_utf8_lossy(&run.stdout), "ok 1001 nodes\n");
}
