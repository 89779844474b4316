//! Command-line driver for the `udnpf` engine: TOML configuration, the
//! lambda/gamma sweep and its CSV/JSON output.

pub mod config;
pub mod output;
pub mod sweep;

/// Process exit code for a batch where `failed` of `total` items failed.
pub fn exit_code(failed: usize, total: usize) -> i32 {
    if failed == 0 {
        0
    } else if failed == total {
        1
    } else {
        2
    }
}
