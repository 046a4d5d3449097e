mod common;

use common::mshr_ref::replay;
use proptest::prelude::*;

#[test]
fn fixed_streams() {
    replay(1, 20_000, 4096, 8);
    replay(2, 20_000, 4, 2);
    replay(3, 20_000, 1, 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn random_streams(seed in any::<u64>(), entries in 1usize..64, cap in 1usize..4) {
        replay(seed, 2_000, entries, cap);
    }
}
