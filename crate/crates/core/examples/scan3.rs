fn main() {
    use tailfuse::*;
    // empirical covariance of (sigma_hat, xi_hat) over 2000 fits, n=500
    let (sigma, xi) = (1.0_f64, 0.2_f64);
    let mut s_all = Vec::new();
    let mut x_all = Vec::new();
    for rep in 0..2000u64 {
        let mut rr = streams::stream_rng(44, streams::purpose::REFERENCE, &[rep]);
        let y: Vec<f64> = (0..500)
            .map(|_| {
                let u: f64 = 1.0 - rand::Rng::gen::<f64>(&mut rr);
                sigma / xi * (u.powf(-xi) - 1.0)
            })
            .collect();
        if let Ok(f) = fit_gpd(&y) {
            s_all.push(f.sigma);
            x_all.push(f.xi);
        }
    }
    let n = s_all.len() as f64;
    let ms = s_all.iter().sum::<f64>() / n;
    let mx = x_all.iter().sum::<f64>() / n;
    let cov: f64 = s_all
        .iter()
        .zip(&x_all)
        .map(|(s, x)| (s - ms) * (x - mx))
        .sum::<f64>()
        / (n - 1.0);
    let vs: f64 = s_all.iter().map(|s| (s - ms) * (s - ms)).sum::<f64>() / (n - 1.0);
    let vx: f64 = x_all.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>() / (n - 1.0);
    println!("empirical (n=500, 2000 fits): var_s {vs:.5e} var_x {vx:.5e} cov {cov:.5e}");
    println!(
        "fd-theory at truth scaled to n=500: var_s {:.5e} var_x {:.5e} cov {:.5e}",
        (1.0 + xi) * 2.0 * sigma * sigma / 500.0,
        (1.0 + xi) * (1.0 + xi) / 500.0,
        -(1.0 + xi) * sigma / 500.0
    );
}
