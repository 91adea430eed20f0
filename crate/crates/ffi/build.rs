use std::env;
use std::path::PathBuf;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let crate_dir = env::var("CARGO_MANIFEST_DIR")?;
    let out = PathBuf::from(&crate_dir).join("include").join("clearing.h");
    std::fs::create_dir_all(out.parent().expect("include dir"))?;
    let config = cbindgen::Config::from_file(PathBuf::from(&crate_dir).join("cbindgen.toml"))?;
    cbindgen::Builder::new().with_crate(&crate_dir).with_config(config).generate()?.write_to_file(&out);
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    Ok(())
}
