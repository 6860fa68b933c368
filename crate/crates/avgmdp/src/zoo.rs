//! Small reference models and a random instance generator.

use rand::Rng;

use crate::model::{KernelSpace, MdpBuilder, MdpModel};

/// Two states; state 1 either moves to 2 (`*`) or loops on a poor reward
/// (`§`), state 2 either returns (`†`) or loops (`‡`). The cycle rewards are
/// lowered by `theta`.
pub fn regret_discontinuity(theta: f64) -> MdpModel {
    MdpBuilder::new("regret_discontinuity", &["1", "2"])
        .det(0, "*", 1, 0.5 - theta)
        .det(0, "§", 0, 0.1)
        .det(1, "†", 0, 0.5 - theta)
        .det(1, "‡", 1, 0.5)
        .build()
        .expect("valid reference model")
}

/// Two loops joined by zero-reward crossings; the loop at state 1 pays
/// `0.5 + theta`, the loop at state 2 pays `0.5`.
pub fn discontinuous_gaps(theta: f64) -> MdpModel {
    two_loops("discontinuous_gaps", [0.0, 0.5 + theta, 0.0, 0.5])
}

/// Same family, used to exercise co-exploration between the two loops.
pub fn coexploration(theta: f64) -> MdpModel {
    discontinuous_gaps(theta).with_name("coexploration")
}

pub fn leveling_original() -> MdpModel {
    two_loops("leveling", [0.6, 0.5, 0.1, 0.5])
}

pub fn leveling_perturbed() -> MdpModel {
    two_loops("leveling_perturbed", [0.59, 0.52, 0.12, 0.49])
}

/// Rewards in pair order `1,go`, `1,loop`, `2,back`, `2,loop`.
fn two_loops(name: &str, r: [f64; 4]) -> MdpModel {
    MdpBuilder::new(name, &["1", "2"])
        .det(0, "go", 1, r[0])
        .det(0, "loop", 0, r[1])
        .det(1, "back", 0, r[2])
        .det(1, "loop", 1, r[3])
        .build()
        .expect("valid reference model")
}

/// Random communicating model with up to `max_states` states and
/// `max_actions` actions per state. Kernel rows have random supports, so
/// deterministic transitions are common.
pub fn random_communicating<R: Rng>(rng: &mut R, max_states: usize, max_actions: usize, space: KernelSpace) -> MdpModel {
    loop {
        let n = rng.gen_range(1..=max_states);
        let labels: Vec<String> = (1..=n).map(|i| i.to_string()).collect();
        let mut b = MdpBuilder::with_states("random", labels);
        for s in 0..n {
            let k = rng.gen_range(1..=max_actions);
            for a in 0..k {
                let row = random_row(rng, n);
                let reward = (rng.gen::<f64>() * 1000.0).round() / 1000.0;
                b = b.action(s, &format!("a{a}"), row, reward);
            }
        }
        let m = b.build().expect("random rows are valid").with_space(space);
        if m.is_communicating() {
            return m;
        }
    }
}

fn random_row<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let support = rng.gen_range(1..=n);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..support {
        let j = rng.gen_range(i..n);
        idx.swap(i, j);
    }
    let mut row = vec![0.0; n];
    let weights: Vec<f64> = (0..support).map(|_| 0.05 + rng.gen::<f64>()).collect();
    let total: f64 = weights.iter().sum();
    for (i, w) in idx[..support].iter().zip(weights) {
        row[*i] = w / total;
    }
    row
}

/// Random perturbation of rewards and kernels within `radius` in model
/// distance, keeping every kernel support.
pub fn perturb_same_support<R: Rng>(rng: &mut R, model: &MdpModel, radius: f64) -> MdpModel {
    let mut rewards = Vec::with_capacity(model.n_pairs());
    let mut kernels = Vec::with_capacity(model.n_pairs());
    for p in 0..model.n_pairs() {
        let budget = radius * rng.gen::<f64>();
        let share = rng.gen::<f64>();
        let dr = budget * share * if rng.gen::<bool>() { 1.0 } else { -1.0 };
        rewards.push((model.reward(p) + dr).clamp(0.0, 1.0));
        let row = model.kernel(p);
        let support: Vec<usize> = model.support(p).collect();
        let mut new_row = row.to_vec();
        if support.len() > 1 {
            // move mass between two support states, keeping both positive
            let i = support[rng.gen_range(0..support.len())];
            let j = support[rng.gen_range(0..support.len())];
            if i != j {
                let room = 0.5 * row[j].min(budget * (1.0 - share));
                let delta = room * rng.gen::<f64>();
                new_row[i] += delta;
                new_row[j] -= delta;
            }
        }
        kernels.push(new_row);
    }
    model
        .with_rewards(rewards)
        .and_then(|m| m.with_kernels(kernels))
        .expect("perturbation keeps the model valid")
}
