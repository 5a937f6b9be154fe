//! Generalized advantage estimation.

/// Returns `(advantages, returns)` for one environment's trajectory.
///
/// `dones[t]` marks that the episode ended on step `t`, cutting both the
/// bootstrap and the advantage recursion there. `bootstrap` is the value of
/// the state following the last step.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lam: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(values.len() == n && dones.len() == n, "misaligned GAE inputs");
    let mut adv = vec![0.0; n];
    let mut next_value = bootstrap;
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lam * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}
