//! Regenerates the bundled fixtures under `fixtures/` from the synthetic builders.
//!
//! Usage: `cargo run -p flexcoord --example write_fixtures -- [DIR]` (default `fixtures`).

use std::path::PathBuf;

use flexcoord::io::{save_network, save_scenario};
use flexcoord::model::TimeGrid;
use flexcoord::synthetic::{scenario, three_bus_network, GridVariant, DEFAULT_SEED};

fn main() -> flexcoord::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    for (file, variant) in [
        ("congested.json", GridVariant::Congested),
        ("uncongested.json", GridVariant::Uncongested),
        ("unrelievable.json", GridVariant::Unrelievable),
    ] {
        save_scenario(&scenario(variant, DEFAULT_SEED), &dir.join(file))?;
    }
    save_network(&three_bus_network(&TimeGrid::default()), &dir.join("three_bus"))?;
    println!("fixtures written to {}", dir.display());
    Ok(())
}
