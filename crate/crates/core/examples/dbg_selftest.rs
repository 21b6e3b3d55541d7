fn main() {
    let t0 = std::time::Instant::now();
    let results = landauer_core::selftest::run_selftest(12345);
    for r in &results {
        println!("{} {:<35} {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    println!("elapsed: {:.1?}", t0.elapsed());
    if results.iter().any(|r| !r.passed) { std::process::exit(1); }
}
