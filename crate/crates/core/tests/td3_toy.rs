//! TD3 on a one-step task with a known optimal actor.

mod common;

use common::criteria;

#[test]
fn actor_steps_on_every_third_critic_update() {
    assert!(criteria::td3_delay_pattern(60));
}

#[test]
fn actor_reaches_the_optimum() {
    let o = criteria::td3();
    assert!(o.pass, "{}", o.detail);
}
