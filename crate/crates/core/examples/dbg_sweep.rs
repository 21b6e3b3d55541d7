fn main() {
    let spec = landauer_core::experiments::SweepSpec {
        mode: landauer_core::experiments::SweepMode::FixedEnergy { e_max: 10.0 },
        tau_grid: landauer_core::experiments::log_grid(0.1, 1000.0, 20),
        n_steps: 100,
        mu: 0.1,
        beta: 1.0,
        samples_per_window: 16,
    };
    let recs = landauer_core::experiments::run_fixed_energy_sweep(&spec).unwrap();
    for r in &recs {
        let b = r.bounds.as_ref().unwrap();
        for rec in &b.records {
            if !rec.holds() {
                println!("tau={:.4} FAIL {}: lhs={:.6e} rhs={:.6e} slack={:.3e} note={:?}",
                    r.tau, rec.name, rec.lhs, rec.rhs, rec.slack, rec.note);
            }
        }
    }
    println!("done");
}
