fn main() {
    use tailfuse::*;
    for (n0, seed) in [(200usize, 2026u64), (100, 2026)] {
        let scn = Scenario {
            name: format!("ln01-desk-n{n0}"),
            dist: DistSpec::Lognormal {
                mu: 0.0,
                sigma: 1.0,
            },
            p_true: 0.001,
            threshold: None,
            n0,
            n1: n0,
            support: Some((1.0, 60.0)),
            ci_level: 0.95,
            increment: Some(0.00005),
            cap: 0.95,
            runs: 50,
            im_reps: 100,
            fusions: 500,
            n_estimates: 50,
            seed,
            constrain_reference: false,
            u_quantile: 0.8,
        };
        let t0 = std::time::Instant::now();
        match run_comparison(&scn) {
            Ok(r) => {
                println!(
                    "n0={n0}: ROSF cov {:.3} len {:.5} mae {:.5} | POT cov {:.3} len {:.5} mae {:.5}  [{:.0}s]",
                    r.rosf.coverage, r.rosf.mean_ci_length, r.rosf.mae,
                    r.pot.coverage, r.pot.mean_ci_length, r.pot.mae,
                    t0.elapsed().as_secs_f64()
                );
                let mut miss: Vec<(usize, f64, f64, f64)> = r
                    .per_run
                    .iter()
                    .filter(|d| !d.rosf_covered)
                    .map(|d| (d.run, d.max_x0, d.rosf_lower, d.rosf_upper))
                    .collect();
                miss.sort_by(|a, b| a.1.total_cmp(&b.1));
                println!(
                    "  rosf misses ({}): {:?}",
                    miss.len(),
                    &miss[..miss.len().min(12)]
                );
            }
            Err(e) => println!("n0={n0}: ERROR {e}"),
        }
    }
}
