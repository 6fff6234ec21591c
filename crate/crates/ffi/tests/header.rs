use std::path::Path;
use std::process::Command;

#[test]
fn header_declares_the_api_and_parses_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/pdo.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in [
        "pdo_grid_new",
        "pdo_symbol_from_json",
        "pdo_field_from_values",
        "pdo_solve",
        "pdo_verify_json",
        "pdo_last_error_message",
        "typedef struct PdoGrid PdoGrid;",
        "PDO_STATUS_NOT_ELLIPTIC = 4",
    ] {
        assert!(text.contains(sym), "{sym}");
    }
    // A missing C compiler is not a failure of the header.
    match Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"]).arg(&header).status() {
        Ok(status) => assert!(status.success()),
        Err(_) => eprintln!("cc not found, syntax check skipped"),
    }
}
