//! Setup shared by the benchmark targets in `benches/`.

use std::sync::Arc;

use cardest_core::{generate_network, substream, FieldConfig, Network, Stream};

/// The scale every benchmark runs at: 300 alive nodes out of 350 IDs on the
/// unit square with radius 0.1, resampled until connected.
pub fn benchmark_network(seed: u64) -> Arc<Network> {
    for attempt in 0..1000 {
        let mut rng = substream(seed + attempt, Stream::Network);
        let net = generate_network(300, 350, FieldConfig::unit(0.1), &mut rng).unwrap();
        if net.is_connected() {
            return Arc::new(net);
        }
    }
    panic!("no connected 300-node network within 1000 attempts of seed {seed}");
}
