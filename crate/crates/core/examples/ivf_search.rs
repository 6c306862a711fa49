//! Builds an IVF index over clustered vectors and shows recall against
//! exact search as more lists are probed.
//!
//! cargo run --release --example ivf_search

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ragvl::embed_store::StoreBuilder;
use ragvl::index::{search_exact, IvfIndex};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (d, n, nlist) = (32, 20_000, 64);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let centres: Vec<Vec<f32>> = (0..nlist).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let mut b = StoreBuilder::new(d, true)?;
    for i in 0..n {
        let c = &centres[i % nlist];
        let v = c.iter().map(|x| x + rng.random_range(-0.3..0.3)).collect();
        b.push(format!("item{i}"), v)?;
    }
    let store = b.finish();
    let index = IvfIndex::build(&store, nlist, 1)?;
    println!("built {nlist} lists, {} empty", index.empty_clusters().len());

    let queries: Vec<Vec<f32>> = (0..50).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    for nprobe in [1, 2, 4, 8, 16, nlist] {
        let mut found = 0;
        for q in &queries {
            let truth = search_exact(&store, q, 10)?;
            let approx = index.search(&store, q, 10, nprobe)?;
            found += truth.iter().filter(|t| approx.iter().any(|a| a.id == t.id)).count();
        }
        println!("nprobe {nprobe:>2}: recall@10 {:.3}", found as f64 / (10 * queries.len()) as f64);
    }
    Ok(())
}
