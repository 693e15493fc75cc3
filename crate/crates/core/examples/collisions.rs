//! Oracle calls needed to gather distinct blocks, and the maximum load of
//! balls thrown into bins, each against its closed form.

use apbcfw::bench::cmd_collision;
use apbcfw::engine::{max_load_bound, max_load_simulate};
use apbcfw::sampling::stream_rng;

fn main() -> apbcfw::Result<()> {
    print!("{}", cmd_collision(&[(2, 2), (10, 5), (100, 30), (100, 60)], 50_000, 1)?);

    let mut rng = stream_rng(2, 0);
    for (m, n) in [(10, 1000), (100, 100), (10_000, 10)] {
        let (mean, se) = max_load_simulate(m, n, 2000, &mut rng)?;
        let bound = max_load_bound(m, n);
        println!("m={m} n={n}: max load {mean:.2} +- {se:.2}, {} bound {:.2}", bound.name(), bound.value());
    }
    Ok(())
}
