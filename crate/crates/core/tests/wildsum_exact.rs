use wildsim_core::exec::Sequential;
use wildsim_core::kernels::DiscreteKernel;
use wildsim_core::wildsum::{draw_mu_t, exact_mu_t_discrete, DiscreteLaw, WildSum};

#[test]
fn monte_carlo_matches_exact_discrete_solution() {
    let base = DiscreteLaw::new(vec![0.5, 0.3, 0.2]).unwrap();
    for (m, cap, t, n_max) in [(2usize, 3usize, 0.3, 8usize), (3, 4, 0.15, 6)] {
        let kernel = DiscreteKernel::CappedSum { m, cap };
        let exact = exact_mu_t_discrete(&base, &kernel, t, n_max, 1e9).unwrap();
        assert!(exact.tail < 1e-4, "tail {}", exact.tail);
        let cfg = WildSum::new(kernel.to_kernel(), base.to_base()).unwrap();
        let n = 100_000;
        let draws = draw_mu_t(&cfg, t, n, 17, &Sequential).unwrap();
        for (label, &p) in exact.probs.iter().enumerate() {
            let est = draws.expect(|x| if x == label as f64 { 1.0 } else { 0.0 });
            let se = (p.max(1e-6) * (1.0 - p) / n as f64).sqrt();
            assert!(
                (est.mean - p).abs() < 4.0 * se + exact.tail,
                "m={m} label={label}: mc {} exact {p}",
                est.mean
            );
        }
    }
}
