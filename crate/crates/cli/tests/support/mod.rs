#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn wcox<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_wcox"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("run wcox")
}

/// Runs and asserts success, returning standard output.
pub fn ok<I, S>(args: I) -> String
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let out = wcox(args);
    assert!(
        out.status.success(),
        "wcox failed ({:?}): {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

pub fn p(path: &Path) -> String {
    path.display().to_string()
}

/// Header-keyed rows of a CSV string.
pub fn csv_rows(text: &str) -> Vec<std::collections::BTreeMap<String, String>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .expect("well-formed csv")
}

pub const WORKED: &str = "time,event,z\n1,1,1\n2,1,0\n3,1,0\n4,1,1\n";
