use rand::Rng;
use rsnl::nn::Mlp;
use rsnl::rng::substream;

#[test]
fn mlp_backward_matches_finite_differences() {
    let mut rng = substream(21, &[]);
    for trial in 0..5 {
        let net = Mlp::new(&[3, 6, 4, 2], &mut rng);
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let up: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let objective = |net: &Mlp, x: &[f64]| -> f64 {
            net.forward(x)
                .unwrap()
                .iter()
                .zip(&up)
                .map(|(a, b)| a * b)
                .sum()
        };
        let (grads, gx) = net.backward(&x, &up).unwrap();
        let h = 1e-5;
        let check = |fd: f64, an: f64, what: &str| {
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
            assert!(
                rel <= 1e-5 || (fd - an).abs() < 1e-9,
                "trial {trial} {what}: {fd} vs {an}"
            );
        };
        for i in 0..3 {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            check(
                (objective(&net, &xp) - objective(&net, &xm)) / (2.0 * h),
                gx[i],
                "input",
            );
        }
        let analytic: Vec<f64> = grads.params().collect();
        for (k, &an) in analytic.iter().enumerate() {
            let bump = |delta: f64| {
                let mut n2 = net.clone();
                *n2.params_mut().nth(k).unwrap() += delta;
                objective(&n2, &x)
            };
            check((bump(h) - bump(-h)) / (2.0 * h), an, &format!("param {k}"));
        }
    }
}
