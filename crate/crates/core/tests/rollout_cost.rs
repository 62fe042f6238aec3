//! Decoder rollout cost grows linearly in the horizon.

mod common;

use common::criteria;

#[test]
fn per_step_cost_is_flat() {
    let o = criteria::latency();
    assert!(o.pass, "{}", o.detail);
}
