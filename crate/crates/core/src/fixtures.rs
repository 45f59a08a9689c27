//! Reference models used by the tests, the examples and the acceptance suite.

use rand::Rng;

use crate::model::ModelSpec;

fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("s{i}")).collect()
}

/// One state, no dynamics: `f = -0.5`, a single self-shift costing `-1`.
pub fn m1() -> ModelSpec {
    ModelSpec::new(
        labels(1),
        &[vec![0.0]],
        vec![-0.5],
        vec![0],
        &[vec![-1.0]],
        vec![vec![0]],
        vec![0],
    )
    .expect("m1 is well formed")
}

/// Symmetric two-state chain with a costly state `s1` and cheap shifts to `s0`.
pub fn m2() -> ModelSpec {
    ModelSpec::new(
        labels(2),
        &[vec![-1.0, 1.0], vec![1.0, -1.0]],
        vec![0.0, -2.0],
        vec![0],
        &[vec![-0.1], vec![-0.1]],
        vec![vec![0, 1]],
        vec![0, 1, 2],
    )
    .expect("m2 is well formed")
}

/// `m2` with prohibitive shift costs: impulses never pay off.
pub fn m2_prohibitive() -> ModelSpec {
    m2().with_uniform_shift_cost(-100.0)
}

/// Three states, two impulse targets and a bounded domain `B_0 = {s0, s1}`.
/// Shift costs are `-0.2 - 0.1 |x - ξ|`, which satisfy the triangle inequality.
pub fn m3() -> ModelSpec {
    ModelSpec::new(
        labels(3),
        &[
            vec![-1.0, 0.6, 0.4],
            vec![0.5, -1.2, 0.7],
            vec![0.8, 0.2, -1.0],
        ],
        vec![0.0, -0.8, -1.6],
        vec![0, 1],
        &[vec![-0.2, -0.3], vec![-0.3, -0.2], vec![-0.4, -0.3]],
        vec![vec![0, 1], vec![0, 1, 2]],
        vec![0, 1, 2],
    )
    .expect("m3 is well formed")
}

/// Size limits for [`random_model`].
#[derive(Debug, Clone, Copy)]
pub struct RandomModelShape {
    pub max_states: usize,
    pub max_impulse_targets: usize,
    pub max_chain_len: usize,
    pub max_grid_level: u32,
}

impl Default for RandomModelShape {
    fn default() -> Self {
        RandomModelShape {
            max_states: 5,
            max_impulse_targets: 2,
            max_chain_len: 3,
            max_grid_level: 2,
        }
    }
}

/// Draws a model that passes validation: an irreducible generator (a ring
/// plus random extra edges), nonpositive `f`, and metric shift costs
/// `-a - b |p_x - p_ξ|` on random positions `p`.
pub fn random_model<R: Rng>(rng: &mut R, shape: RandomModelShape) -> ModelSpec {
    let n = rng.random_range(1..=shape.max_states);
    let mut q = vec![vec![0.0; n]; n];
    if n > 1 {
        for i in 0..n {
            q[i][(i + 1) % n] = rng.random_range(0.2..2.0);
            for j in 0..n {
                if j != i && q[i][j] == 0.0 && rng.random_bool(0.4) {
                    q[i][j] = rng.random_range(0.05..1.5);
                }
            }
        }
        for (i, row) in q.iter_mut().enumerate() {
            let s: f64 = row.iter().sum();
            row[i] = -s;
        }
    }
    let f: Vec<f64> = (0..n)
        .map(|_| {
            if rng.random_bool(0.2) {
                0.0
            } else {
                -rng.random_range(0.0..2.5)
            }
        })
        .collect();

    let u_len = rng.random_range(1..=shape.max_impulse_targets.min(n));
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let mut impulse_set: Vec<usize> = perm[..u_len].to_vec();
    impulse_set.sort_unstable();

    let base = rng.random_range(0.05..0.5);
    let slope = rng.random_range(0.0..1.0);
    let pos: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let shift_cost: Vec<Vec<f64>> = (0..n)
        .map(|x| {
            impulse_set
                .iter()
                .map(|&xi| -base - slope * (pos[x] - pos[xi]).abs())
                .collect()
        })
        .collect();

    // chain: U plus a few more states, grown to the full set
    let extra = n - u_len;
    let chain_len = rng.random_range(1..=shape.max_chain_len.min(extra + 1));
    let mut cuts: Vec<usize> = Vec::with_capacity(chain_len);
    // strictly increasing sizes ending at n
    let mut sizes: Vec<usize> = (u_len..n).collect();
    for i in (1..sizes.len()).rev() {
        sizes.swap(i, rng.random_range(0..=i));
    }
    sizes.truncate(chain_len - 1);
    sizes.sort_unstable();
    cuts.extend(sizes);
    cuts.push(n);
    let order: Vec<usize> = impulse_set
        .iter()
        .copied()
        .chain(perm[u_len..].iter().copied())
        .collect();
    let chain: Vec<Vec<usize>> = cuts
        .iter()
        .map(|&size| {
            let mut set = order[..size].to_vec();
            set.sort_unstable();
            set
        })
        .collect();

    let levels_len = rng.random_range(1..=(shape.max_grid_level as usize + 1));
    let mut levels: Vec<u32> = (0..=shape.max_grid_level).collect();
    for i in (1..levels.len()).rev() {
        levels.swap(i, rng.random_range(0..=i));
    }
    levels.truncate(levels_len);
    levels.sort_unstable();

    ModelSpec::new(labels(n), &q, f, impulse_set, &shift_cost, chain, levels)
        .expect("random model is well formed")
}
