use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(std::env::var("CARGO_MANIFEST_DIR").expect("set by cargo"));
    let header = crate_dir.join("include").join("granular_kinetics.h");
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    // header generation failures must not break library builds; the
    // committed header stays in place
    match cbindgen::generate(&crate_dir) {
        Ok(bindings) => {
            std::fs::create_dir_all(header.parent().expect("include dir")).ok();
            bindings.write_to_file(&header);
        }
        Err(err) => println!("cargo:warning=header generation skipped: {err}"),
    }
}
