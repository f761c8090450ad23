mod common;

use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn identities_hold_on_random_inputs((u, k, j) in common::identity_strategy()) {
        common::identity_case(&u, k, j)?;
    }
}
