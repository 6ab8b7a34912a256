use std::process::Command;

fn main() {
    let describe = Command::new("git")
        .args(["describe", "--tags", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty());
    let version = env!("CARGO_PKG_VERSION");
    // Without tags, describe prints a bare abbreviated hash.
    let full = match describe {
        Some(d) if d.split('-').next().is_some_and(|h| h.chars().all(|c| c.is_ascii_hexdigit())) => {
            format!("v{version}-g{d}")
        }
        Some(d) => d,
        None => format!("v{version}"),
    };
    println!("cargo:rustc-env=LEADAE_VERSION={full}");
    println!("cargo:rerun-if-changed=../../.git/HEAD");
}
