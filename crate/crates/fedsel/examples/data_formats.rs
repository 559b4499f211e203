//! The image file loaders, exercised on files built in a temp directory:
//! a tiny valid image/label pair (plain and gzipped), then the structured
//! errors that malformed files produce instead of panics.
//!
//! ```text
//! cargo run --release --example data_formats
//! ```

use fedsel::data::{load_idx_images, load_idx_labels, load_idx_pair};
use flate2::write::GzEncoder;
use flate2::Compression;
use std::fs;
use std::io::Write;

fn main() -> fedsel::Result<()> {
    let dir = std::env::temp_dir().join("fedsel-data-formats");
    fs::create_dir_all(&dir)?;

    // Two 2x2 images: big-endian magic, count, rows, cols, then pixels.
    let mut images = Vec::new();
    images.extend_from_slice(&2051u32.to_be_bytes());
    images.extend_from_slice(&2u32.to_be_bytes());
    images.extend_from_slice(&2u32.to_be_bytes());
    images.extend_from_slice(&2u32.to_be_bytes());
    images.extend_from_slice(&[0, 255, 128, 64, 9, 8, 7, 6]);

    let mut labels = Vec::new();
    labels.extend_from_slice(&2049u32.to_be_bytes());
    labels.extend_from_slice(&2u32.to_be_bytes());
    labels.extend_from_slice(&[7, 2]);

    let img_path = dir.join("images");
    let lbl_path = dir.join("labels");
    fs::write(&img_path, &images)?;
    fs::write(&lbl_path, &labels)?;

    let ds = load_idx_pair(&img_path, &lbl_path, "demo")?;
    println!("loaded {} images shaped {:?}", ds.len(), ds.feature_shape());
    println!("labels: {:?}", ds.labels);
    println!("first image, scaled to [0, 1]: {:?}", ds.samples.row(0));

    // Loaders sniff the gzip magic, so compressed files need no flag.
    let mut enc = GzEncoder::new(Vec::new(), Compression::default());
    enc.write_all(&images).unwrap();
    let gz_path = dir.join("images.gz");
    fs::write(&gz_path, enc.finish().unwrap())?;
    let from_gz = load_idx_images(&gz_path)?;
    println!("gzipped copy decodes to the same {:?} tensor", from_gz.shape());
    println!();

    // Malformed files come back as errors that name the byte offset.
    let mut bad_magic = images.clone();
    bad_magic[3] = 9;
    let bad_path = dir.join("bad-magic");
    fs::write(&bad_path, &bad_magic)?;
    println!("wrong magic   -> {}", load_idx_images(&bad_path).unwrap_err());

    let trunc_path = dir.join("truncated");
    fs::write(&trunc_path, &images[..19])?;
    println!("truncated     -> {}", load_idx_images(&trunc_path).unwrap_err());

    let mut short = labels.clone();
    short.truncate(9);
    let short_path = dir.join("short-labels");
    fs::write(&short_path, &short)?;
    println!("short labels  -> {}", load_idx_labels(&short_path).unwrap_err());

    fs::remove_dir_all(&dir)?;
    Ok(())
}
