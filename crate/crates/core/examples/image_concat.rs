//! Side-by-side composite of a query image and a retrieved image, plus the
//! duplication fallback. Writes PNGs to a temporary directory.
//!
//! cargo run --example image_concat

use ragvl::augment::{concat_images, RgbImage};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let query = RgbImage::from_fn(64, 48, |x, y| [(x * 4) as u8, (y * 5) as u8, 120])?;
    let retrieved = RgbImage::from_fn(200, 100, |x, _| if (x / 20) % 2 == 0 { [250, 250, 250] } else { [20, 20, 20] })?;

    let both = concat_images(&query, Some(&retrieved))?;
    let alone = concat_images(&query, None)?;
    println!("query 64x48 + retrieved 200x100 -> {}x{}", both.width(), both.height());
    println!("query 64x48 duplicated       -> {}x{}", alone.width(), alone.height());

    let dir = std::env::temp_dir().join("ragvl-image-concat");
    std::fs::create_dir_all(&dir)?;
    both.write_png(dir.join("composite.png"))?;
    alone.write_png(dir.join("duplicated.png"))?;
    println!("wrote {}", dir.display());
    Ok(())
}
