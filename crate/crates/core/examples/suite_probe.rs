fn main() {
    let t0 = std::time::Instant::now();
    let report = mirrordepth_core::gradcheck::run_suite(7).unwrap();
    let mut worst: (f64, &str) = (0.0, "");
    for c in &report.checks {
        let e = c.max_rel_err();
        if e > worst.0 { worst = (e, &c.name); }
        if !c.pass { println!("FAIL {} {:.3e}", c.name, e); }
    }
    println!("checks: {} pass: {} worst: {} {:.3e} [{:?}]",
        report.checks.len(), report.pass, worst.1, worst.0, t0.elapsed());
}
