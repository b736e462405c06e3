use std::process::Command;

fn main() {
    println!("cargo:rerun-if-changed=../../.git/HEAD");
    println!("cargo:rerun-if-changed=../../.git/index");
    let out = Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output();
    if let Ok(out) = out {
        if out.status.success() {
            let s = String::from_utf8_lossy(&out.stdout).trim().to_string();
            println!("cargo:rustc-env=ANCHORED_GIT_DESCRIBE={s}");
        }
    }
}
