//! Brute-force maximum inner product search over a small in-memory store.
//!
//! cargo run --example exact_search

use ragvl::embed_store::StoreBuilder;
use ragvl::index::search_exact;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut store = StoreBuilder::new(3, true)?;
    store
        .push("red-car".into(), vec![1.0, 0.1, 0.0])?
        .push("red-bus".into(), vec![0.9, 0.3, 0.1])?
        .push("blue-boat".into(), vec![0.0, 0.2, 1.0])?
        .push("green-tree".into(), vec![0.1, 1.0, 0.0])?;
    let store = store.finish();

    let query = [1.0, 0.2, 0.0];
    for hit in search_exact(&store, &query, 3)? {
        println!("{:<10} {:.4}", hit.id, hit.score);
    }
    Ok(())
}
