use ncs_core::designer::*;
use ncs_core::linalg::SymMatrix;
use ncs_core::model::*;

fn main() {
    let (plant, config) = pendulum_example();
    let abort = run_design(&plant, &config, 1.2, Variant::LinearSearch, 1).unwrap_err();
    let run = abort.partial;
    println!("aborted: {}", abort.error);
    for e in &run.entries {
        let zmin = e.z.iter().map(|z| z.min_eig().unwrap()).fold(f64::INFINITY, f64::min);
        let zmax = e.z.iter().map(|z| z.max_eig().unwrap()).fold(0.0f64, f64::max);
        let pmin = e.phat.iter().map(|p| p.min_eig().unwrap()).fold(f64::INFINITY, f64::min);
        let pmax = e.phat.iter().map(|p| p.max_eig().unwrap()).fold(0.0f64, f64::max);
        println!(
            "k={:2} T={:.5} links={} Z:[{:.3},{:.3}] P:[{:.3},{:.3}]",
            e.k, e.t_len, e.alpha.len(), zmin, zmax, pmin, pmax
        );
    }
    // rebuild the failing problem and inspect residuals at the cold start
    let last = run.entries.last().unwrap();
    let prev = CertPair { z: last.z.clone(), phat: last.phat.clone() };
    let dims = plant.dims();
    let adjacency = plant.adjacency();
    let snapshot = plant.aggregate(last.t_end());
    let sp = assemble_stability_problem(&snapshot, last.k + 1, Some(&prev), &adjacency, &dims, &adjacency, &config).unwrap();
    let init = sp.initial_assignment(Some(&prev), None, &config);
    let mut rs = ncs_core::lmi::check_solution(&sp.problem, &init).unwrap();
    rs.sort_by(|a, b| b.residual.partial_cmp(&a.residual).unwrap());
    println!("worst residuals at cold init of the failing problem:");
    for r in rs.iter().take(10) {
        println!("  {} -> {:.4e}", r.id, r.residual);
    }
    // check: does the chain Z anchor fit under the cap?
    for (i, z) in prev.z.iter().enumerate() {
        let gap = SymMatrix::scaled_identity(4, 1.0 / config.epsilon[i]).sub(z).min_eig().unwrap();
        println!("cap gap {}: {:.4e}", i, gap);
    }
}
