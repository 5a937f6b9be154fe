use apiary::dynamics::{BodyParams, RigidState};
use apiary::env::{reward, Env, EnvConfig, EpisodeGoal, RewardWeights, Scenario, Termination, ACT_DIM};
use apiary::math3d::{Quat, Vec3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-r..r).prop_map(Vec3::from_array)
}

fn state() -> impl Strategy<Value = RigidState> {
    (vec3(1.0), vec3(1.5), vec3(0.3), vec3(0.5)).prop_map(|(position, rv, lin_vel, ang_vel)| RigidState {
        position,
        attitude: Quat::from_rotation_vector(rv),
        lin_vel,
        ang_vel,
    })
}

fn goal() -> impl Strategy<Value = EpisodeGoal> {
    (vec3(0.5), vec3(0.5)).prop_map(|(p, rv)| EpisodeGoal { position: p, attitude: Quat::from_rotation_vector(rv) })
}

fn actions(n: usize) -> impl Strategy<Value = Vec<[f64; ACT_DIM]>> {
    prop::collection::vec(prop::array::uniform6(-1.0f64..1.0), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn observation_and_reward_ignore_a_common_shift(
        s in state(), g in goal(), shift in vec3(100.0), a in prop::array::uniform6(-1.0f64..1.0), body_frame in any::<bool>()
    ) {
        let mut env = Env::default();
        env.config.body_frame_obs = body_frame;
        let moved_s = RigidState { position: s.position + shift, ..s };
        let moved_g = EpisodeGoal { position: g.position + shift, ..g };
        let mut e1 = env.start(s, g, env.body);
        let mut e2 = env.start(moved_s, moved_g, env.body);
        // sub-ulp differences in the shifted positions are all that may differ
        let close = |x: &[f64; 12], y: &[f64; 12]| x.iter().zip(y).all(|(u, v)| (u - v).abs() < 1e-12 * (1.0 + shift.norm()));
        prop_assert!(close(&e1.obs.to_array(), &e2.obs.to_array()));
        let t1 = env.step(&mut e1, &a).unwrap();
        let t2 = env.step(&mut e2, &a).unwrap();
        prop_assert!(close(&t1.obs.to_array(), &t2.obs.to_array()));
        prop_assert!((t1.reward - t2.reward).abs() < 1e-9 * (1.0 + shift.norm()));
    }

    #[test]
    fn pose_terms_telescope(g in goal(), acts in actions(200)) {
        let mut env = Env::default();
        env.weights = RewardWeights { w_linvel: 0.0, w_angvel: 0.0, bonus_success: 0.0, penalty_oob: 0.0, ..env.weights };
        let mut ep = env.start(RigidState::default(), g, env.body);
        let e0 = ep.obs;
        let mut sum = 0.0;
        for a in &acts {
            let tr = env.step(&mut ep, a).unwrap();
            sum += tr.reward;
            if tr.done {
                break;
            }
        }
        let w = env.weights;
        let expected = w.w_pos * (e0.pos_err.norm() - ep.obs.pos_err.norm()) + w.w_ori * (e0.ori_err.norm() - ep.obs.ori_err.norm());
        prop_assert!((sum - expected).abs() < 1e-9, "{sum} vs {expected}");
    }

    #[test]
    fn mass_never_enters_the_observation(s in state(), g in goal(), k in 0.5f64..2.0) {
        let env = Env::default();
        let light = env.start(s, g, env.body);
        let heavy = env.start(s, g, env.body.with_mass_scale(k));
        prop_assert_eq!(light.obs, heavy.obs);
    }

    #[test]
    fn every_episode_ends_by_episode_len(seed in any::<u64>(), len in 1usize..400) {
        let mut env = Env::default();
        env.config.episode_len = len;
        let mut ep = env.reset_seeded(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut steps = 0;
        loop {
            let a: [f64; ACT_DIM] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            steps += 1;
            if env.step(&mut ep, &a).unwrap().done {
                break;
            }
            prop_assert!(steps < len);
        }
        prop_assert!(steps <= len);
    }
}

#[test]
fn resting_at_the_goal_earns_the_bonus_and_succeeds() {
    let env = Env::default();
    let s = RigidState::at_rest(Vec3::new(0.2, -0.1, 0.3), Quat::from_rotation_vector(Vec3::new(0.1, 0.2, -0.3)));
    let mut ep = env.start(s, EpisodeGoal::from_state(&s), env.body);
    // q ⊗ q* is the identity only up to rounding
    assert!(ep.obs.to_array().iter().all(|v| v.abs() < 1e-15));
    let origin = env.start(RigidState::default(), EpisodeGoal::from_state(&RigidState::default()), env.body);
    assert_eq!(origin.obs.to_array(), [0.0; 12]);
    for k in 1..=env.config.hold_steps {
        let tr = env.step(&mut ep, &[0.0; ACT_DIM]).unwrap();
        assert_eq!(tr.reward, env.weights.bonus_success);
        assert_eq!(tr.done, k == env.config.hold_steps);
    }
    assert_eq!(ep.tick, env.config.hold_steps);
}

#[test]
fn reset_draws_cover_the_configured_ranges() {
    let env = Env::default();
    let c = env.config;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 4000;
    let (mut mean_p, mut mean_r, mut mean_m) = (Vec3::ZERO, Vec3::ZERO, 0.0);
    let (mut lo_m, mut hi_m) = (f64::MAX, f64::MIN);
    for _ in 0..n {
        let ep = env.reset(&mut rng);
        let p = ep.goal.position;
        let r = ep.goal.attitude.to_rotation_vector();
        assert!(p.to_array().iter().all(|v| v.abs() <= c.goal_pos_range));
        assert!(r.to_array().iter().all(|v| v.abs() <= c.goal_ang_range + 1e-12));
        let k = ep.params.mass / env.body.mass;
        assert!((c.mass_range[0]..=c.mass_range[1]).contains(&k));
        // inertia scales with mass
        assert!(((ep.params.inertia_diag.x / env.body.inertia_diag.x) - k).abs() < 1e-12);
        assert_eq!(ep.state, RigidState::default());
        mean_p = mean_p + p / n as f64;
        mean_r = mean_r + r / n as f64;
        mean_m += k / n as f64;
        lo_m = lo_m.min(k);
        hi_m = hi_m.max(k);
    }
    // uniform on ±a has σ = a/√3; allow four standard errors
    let se = |a: f64| 4.0 * a / 3f64.sqrt() / (n as f64).sqrt();
    assert!(mean_p.to_array().iter().all(|v| v.abs() < se(c.goal_pos_range)), "{mean_p:?}");
    assert!(mean_r.to_array().iter().all(|v| v.abs() < se(c.goal_ang_range)), "{mean_r:?}");
    assert!((mean_m - 1.0).abs() < se(0.25), "{mean_m}");
    assert!(lo_m < 0.76 && hi_m > 1.24);
}

#[test]
fn granite_resets_stay_planar() {
    let mut env = Env::default();
    env.config = EnvConfig { scenario: Scenario::Granite3dof, ..env.config };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let ep = env.reset(&mut rng);
        let r = ep.goal.attitude.to_rotation_vector();
        assert_eq!((ep.goal.position.z, r.x, r.y), (0.0, 0.0, 0.0));
    }
}

#[test]
fn out_of_bounds_ends_the_episode_with_the_penalty() {
    let env = Env::default();
    let far = EpisodeGoal { position: Vec3::new(1.99, 0.0, 0.0), attitude: Quat::IDENTITY };
    let s = RigidState { lin_vel: Vec3::new(-0.5, 0.0, 0.0), ..Default::default() };
    let mut ep = env.start(s, far, BodyParams::default());
    let mut last = None;
    for _ in 0..10 {
        let tr = env.step(&mut ep, &[0.0; ACT_DIM]).unwrap();
        if tr.done {
            last = Some(tr);
            break;
        }
    }
    let tr = last.expect("leaves the workspace");
    assert_eq!(tr.info.termination, Some(Termination::OutOfBounds));
    let prev_err = 1.99 + 0.5 * 0.016 * (ep.tick as f64 - 1.0);
    let expected = reward(
        &apiary::env::Observation { pos_err: Vec3::new(prev_err, 0.0, 0.0), lin_vel: s.lin_vel, ..Default::default() },
        &tr.obs,
        &env.weights,
        &env.config,
    );
    assert!((tr.reward - expected).abs() < 1e-9);
    assert!(tr.reward < -env.weights.penalty_oob + 0.1);
}
