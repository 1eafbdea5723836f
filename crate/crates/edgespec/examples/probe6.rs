//! Scratch diagnostic for the swap-matching quality check: where does a
//! random association beat the refined one, and by how much?

use edgespec::baselines::{baseline_allocation, random_assoc};
use edgespec::matching::{associate, SwapStrategy};
use edgespec::net::{evaluate, init_env, ScenarioConfig};
use edgespec::rng::substream;

struct Variant {
    label: &'static str,
    lambda: f64,
    fixed_budget: bool,
}

fn family_cfg(devices: usize, servers: usize, v: &Variant) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.system.devices = devices;
    cfg.system.servers = servers;
    cfg.system.slots = 10;
    cfg.servers.queue_mean = 0.0;
    cfg.objective.sync_penalty = v.lambda;
    cfg.objective.compute_energy_coeff = 1e-13;
    cfg.objective.comm_energy_coeff = 1e-12;
    cfg
}

fn main() {
    for v in [
        Variant { label: "shared-ones", lambda: 5.0, fixed_budget: false },
        Variant { label: "budget-1m", lambda: 5.0, fixed_budget: true },
        Variant { label: "budget-1m-l20", lambda: 20.0, fixed_budget: true },
    ] {
        run_family(&v);
    }
}

fn run_family(v: &Variant) {
    let mut losses = Vec::new();
    let mut ties = 0usize;
    let mut wins = 0usize;
    for inst in 0..200usize {
        let m = 4 + inst % 3;
        let e = 2 + inst % 2;
        let cfg = family_cfg(m, e, v);
        let state = init_env(&cfg, 600 + inst as u64).unwrap();
        let params = cfg.objective.params();
        let raw = if v.fixed_budget { 1.0 / m as f64 } else { 1.0 };
        let raw_y = vec![vec![raw; e]; m];
        let raw_z = vec![vec![raw; e]; m];

        let (alloc, _) =
            associate(&raw_y, &raw_z, &state, &params, SwapStrategy::FirstImprovement).unwrap();
        let obj = evaluate(&state, &alloc, &params).unwrap().objective;

        let mut rng = substream(600 + inst as u64, "baseline", 0);
        let rand_assign = random_assoc(&state, &mut rng);
        let rand_alloc = if v.fixed_budget {
            let mut a = edgespec::net::Allocation::from_assignment(&rand_assign, e);
            for (i, &j) in rand_assign.iter().enumerate() {
                a.y[i][j] = raw;
                a.z[i][j] = raw;
            }
            a
        } else {
            baseline_allocation(&rand_assign, e)
        };
        let rand_obj = evaluate(&state, &rand_alloc, &params).unwrap().objective;

        let swap_counts: Vec<usize> = (0..e)
            .map(|j| (0..m).filter(|&i| alloc.x[i][j]).count())
            .collect();
        let rand_counts: Vec<usize> = (0..e)
            .map(|j| rand_assign.iter().filter(|&&s| s == j).count())
            .collect();

        if obj < rand_obj {
            wins += 1;
        } else if obj == rand_obj {
            ties += 1;
        } else {
            losses.push((inst, m, e, obj, rand_obj, swap_counts, rand_counts));
        }
    }
    println!("{}: wins {wins}, ties {ties}, losses {}", v.label, losses.len());
    for (inst, m, e, obj, rand_obj, sc, rc) in losses.iter().take(6) {
        println!(
            "inst {inst} (M={m} E={e}): refined {obj:.3} counts {sc:?} vs random {rand_obj:.3} counts {rc:?}"
        );
    }
}
