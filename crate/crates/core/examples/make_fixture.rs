//! Writes the two-region test fixture: the fixed image, the bump spec and the
//! distorted image (quantized to 8 bits).
//!
//! ```text
//! cargo run -p pirkit --example make_fixture -- <dir> [size]
//! ```

use std::path::PathBuf;

use pirkit::experiments::{fixture_bump_spec, make_bump_deformation, two_region_fixture};
use pirkit::io::{write_atomic, write_pgm};
use pirkit::warp_image;

fn main() -> pirkit::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| ".".into()));
    let size: usize = args.next().map_or(64, |s| s.parse().expect("size must be an integer"));

    let fixed = two_region_fixture(size);
    let spec = fixture_bump_spec(size);
    let moving = warp_image(&fixed, &make_bump_deformation(fixed.dims(), &spec)?)?;

    write_pgm(&fixed, dir.join(format!("two_region_{size}.pgm")))?;
    write_pgm(&moving, dir.join(format!("two_region_{size}_moving.pgm")))?;
    let mut json = serde_json::to_string_pretty(&spec)?;
    json.push('\n');
    write_atomic(&dir.join(format!("bump_{size}.json")), json.as_bytes())?;
    println!("wrote fixture of size {size} to {}", dir.display());
    Ok(())
}
