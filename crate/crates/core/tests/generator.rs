use mclose_core::expr::{eval_basis, parse_model};
use mclose_core::momentgen::{build_open_system, ito_rhs};
use mclose_core::sim::{euler_maruyama, McConfig};
use mclose_core::{models, Complex64, SdeModel};

fn max_degree(model: &SdeModel) -> (usize, usize) {
    let n = model.space().dim();
    let f = (0..n).map(|i| model.drift(i).max_order()).max().unwrap_or(0);
    let g = (0..n)
        .flat_map(|i| (0..model.channels()).map(move |c| (i, c)))
        .map(|(i, c)| model.noise(i, c).max_order())
        .max()
        .unwrap_or(0);
    (f, g)
}

#[test]
fn rhs_order_is_bounded_by_drift_and_noise_degree() {
    for src in [models::VAN_DER_POL, models::ORNSTEIN_UHLENBECK, "states: x, y\ndrift x = -x^3 + x*y\ndrift y = -y\nnoise x = y\n"] {
        let model = parse_model(src).unwrap();
        let (f, g) = max_degree(&model);
        let bound_shift = (f.max(1) - 1).max((2 * g).saturating_sub(2));
        for idx in model.space().enumerate_upto(4).unwrap() {
            let rhs = ito_rhs(&model, &idx).unwrap();
            for m in rhs.moments() {
                assert!(m.order() <= idx.order() + bound_shift, "{:?} -> {:?}", idx, m);
            }
        }
    }
}

#[test]
fn open_system_counts() {
    let cases = [(models::VAN_DER_POL, 2, 5, 3), (models::PENDULUM, 2, 8, 4), (models::ORNSTEIN_UHLENBECK, 3, 3, 0)];
    for (src, order, k, r) in cases {
        let open = build_open_system(&parse_model(src).unwrap(), order).unwrap();
        assert_eq!(open.basis().len(), k);
        assert_eq!(open.higher().len(), r);
        for h in open.higher() {
            assert!(h.order() > order);
        }
    }
}

#[test]
fn drift_enters_linearly() {
    let a = parse_model("states: x, y\ndrift x = x*y\ndrift y = -y^2\nnoise y = 0.3\n").unwrap();
    let b = parse_model("states: x, y\ndrift x = 2 - x^3\ndrift y = x\nnoise y = 0.3\n").unwrap();
    let ab = parse_model("states: x, y\ndrift x = x*y + 2 - x^3\ndrift y = -y^2 + x\nnoise y = 0.3\n").unwrap();
    let zero = parse_model("states: x, y\nnoise y = 0.3\n").unwrap();
    for idx in a.space().enumerate_upto(3).unwrap() {
        let sum = ito_rhs(&a, &idx).unwrap().as_poly().add(ito_rhs(&b, &idx).unwrap().as_poly());
        let noise_only = ito_rhs(&zero, &idx).unwrap();
        let want = ito_rhs(&ab, &idx).unwrap().as_poly().add(noise_only.as_poly());
        assert_eq!(sum, want, "{idx:?}");
    }
}

#[test]
fn conjugate_index_has_conjugate_rhs() {
    let model = parse_model(models::PENDULUM).unwrap();
    let s = model.space();
    for idx in s.enumerate_upto(3).unwrap() {
        let lhs = ito_rhs(&model, &s.conjugate(&idx)).unwrap();
        let rhs = ito_rhs(&model, &idx).unwrap().as_poly().conjugate(s);
        assert_eq!(lhs.as_poly(), &rhs, "{idx:?}");
    }
}

/// One Euler-Maruyama step from a point mass estimates the generator applied
/// to each observable; compare with the symbolic right-hand side.
fn check_slope(model: &SdeModel, x0: &[f64], h: f64) {
    let space = model.space();
    let basis = space.enumerate_upto(2).unwrap();
    let cfg = McConfig {
        t0: 0.0,
        t1: h,
        dt: h,
        paths: 20_000,
        seed: 11,
        save_every: 1,
    };
    let est = euler_maruyama(model, x0, &cfg, &basis).unwrap();
    let exact = |i: &mclose_core::ExtIndex| eval_basis(space, i, x0);
    for (p, idx) in basis.iter().enumerate() {
        let slope = (est.mean[1][p] - est.mean[0][p]) / h;
        let se = est.stderr[1][p] / h;
        let want: Complex64 = ito_rhs(model, idx).unwrap().eval_with(0.0, exact);
        let slack = 1e-6 * (1.0 + want.norm());
        assert!(
            (slope.re - want.re).abs() <= 3.0 * se.re + slack && (slope.im - want.im).abs() <= 3.0 * se.im + slack,
            "{}: slope {slope} vs {want} (se {se})",
            space.moment_label(idx)
        );
    }
}

#[test]
fn monte_carlo_slope_matches_generator_van_der_pol() {
    let model = parse_model(models::VAN_DER_POL).unwrap();
    check_slope(&model, &[0.1, 0.1], 1e-9);
}

#[test]
fn monte_carlo_slope_matches_generator_pendulum() {
    let model = parse_model(models::PENDULUM).unwrap();
    check_slope(&model, &[0.7, -0.4], 1e-7);
}
