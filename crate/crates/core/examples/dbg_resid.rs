use landauer_core::accounting::penalty_equality_residual;
use landauer_core::dynamics::integrate_master_equation;
use landauer_core::selftest::random_step_protocol;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    for seed in [1u64, 7, 42, 12345, 99999, 2026] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for k in 0..50 {
            let (s, m) = random_step_protocol(&mut rng, k % 2 == 1).unwrap();
            let t = integrate_master_equation(&s, &m, 1e-3 * s.tau, None).unwrap();
            let r = penalty_equality_residual(&t, 1.0).unwrap();
            if r > worst { worst = r; }
        }
        println!("seed {seed}: worst residual {worst:.3e}");
    }
}
