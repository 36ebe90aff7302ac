use fdcr::channel::{draw_geometry, draw_realization, ChannelRealization, SystemConfig};
use fdcr::experiments::{draw_trial, draw_trial_nested, trial_rng};
use fdcr::linalg::norm;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn draw(cfg: &SystemConfig, seed: u64) -> ChannelRealization {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let geo = draw_geometry(cfg, &mut rng);
    draw_realization(cfg, &geo, &mut rng).unwrap()
}

fn assert_in_balls(c: &ChannelRealization, kappa: f64) {
    for (r, (l, lh)) in c.l_true.iter().zip(&c.l_hat).enumerate() {
        assert!((c.eps_dl[r] - kappa * norm(l)).abs() <= 1e-12 * norm(l));
        let err: Vec<_> = l.iter().zip(lh).map(|(a, b)| a - b).collect();
        assert!(norm(&err) <= c.eps_dl[r] * (1.0 + 1e-12) + 1e-300);
    }
    for (j, (row, row_hat)) in c.e_true.iter().zip(&c.e_hat).enumerate() {
        for (r, (e, eh)) in row.iter().zip(row_hat).enumerate() {
            assert!((c.eps_ul[j][r] - kappa * e.norm()).abs() <= 1e-12 * e.norm());
            assert!((e - eh).norm() <= c.eps_ul[j][r] * (1.0 + 1e-12) + 1e-300);
        }
    }
}

#[test]
fn error_balls_hold_on_many_draws() {
    let cfg = SystemConfig { n_t: 6, ..SystemConfig::default() };
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    for _ in 0..100_000 {
        let geo = draw_geometry(&cfg, &mut rng);
        let c = draw_realization(&cfg, &geo, &mut rng).unwrap();
        assert_in_balls(&c, cfg.kappa());
    }
}

#[test]
fn replay_is_bit_identical() {
    let cfg = SystemConfig::default();
    let a = draw(&cfg, 42);
    let b = draw(&cfg, 42);
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
    assert_ne!(format!("{a:?}"), format!("{:?}", draw(&cfg, 43)));
}

#[test]
fn si_entries_have_unit_power() {
    let cfg = SystemConfig { n_t: 10, ..SystemConfig::default() };
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let (mut sum, mut n) = (0.0, 0usize);
    while n < 100_000 {
        let geo = draw_geometry(&cfg, &mut rng);
        let c = draw_realization(&cfg, &geo, &mut rng).unwrap();
        for i in 0..cfg.n_t {
            for j in 0..cfg.n_t {
                sum += c.h_si[(i, j)].norm_sqr();
                n += 1;
            }
        }
    }
    let mean = sum / n as f64;
    assert!((mean - 1.0).abs() <= 0.02, "mean |h|² = {mean}");
}

#[test]
fn nested_draws_share_true_channels() {
    let cfg9 = SystemConfig { n_t: 9, ..SystemConfig::default() };
    let cfg6 = SystemConfig { n_t: 6, ..cfg9.clone() };
    let a = draw_trial_nested(&cfg9, 9, &mut trial_rng(4, 2)).unwrap();
    let b = draw_trial_nested(&cfg6, 9, &mut trial_rng(4, 2)).unwrap();
    assert_eq!(a.resamples, b.resamples);
    for (x, y) in a.truth.h.iter().zip(&b.truth.h) {
        assert_eq!(&x[..6], &y[..]);
    }
    for (x, y) in a.truth.l_true.iter().zip(&b.truth.l_true) {
        assert_eq!(&x[..6], &y[..]);
    }
    assert_eq!(a.truth.e_true, b.truth.e_true);
    assert_in_balls(&b.truth, cfg6.kappa());
}

#[test]
fn truncation_rejects_bad_sizes() {
    let c = draw(&SystemConfig { n_t: 6, ..SystemConfig::default() }, 1);
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    assert!(c.truncated(0, 0.1, &mut rng).is_err());
    assert!(c.truncated(7, 0.1, &mut rng).is_err());
    assert_eq!(c.truncated(6, 0.1, &mut rng).unwrap().h_si.rows(), 6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn draws_are_finite_and_in_balls(seed in any::<u64>(), nt in 5usize..=10, kappa2 in 0.0f64..0.5) {
        let cfg = SystemConfig { n_t: nt, kappa2, ..SystemConfig::default() };
        let d = draw_trial(&cfg, &mut trial_rng(seed, 0)).unwrap();
        prop_assert!(d.truth.is_finite());
        assert_in_balls(&d.truth, cfg.kappa());
        prop_assert_eq!(d.truth.h.len(), cfg.k);
        prop_assert_eq!(d.truth.g.len(), cfg.j);
        prop_assert!(d.truth.h.iter().all(|h| h.len() == nt));
    }
}
