use proptest::prelude::*;
use tapevar_core::numeric::normal;
use tapevar_core::*;

fn tape_strategy(max_len: usize) -> impl Strategy<Value = TradeTape> {
    prop::collection::vec((0u32..50, 0.01f64..1e4, 0.01f64..1e3), 1..max_len).prop_map(|rows| {
        let trades = rows
            .into_iter()
            .map(|(t, c, u)| Trade::new(f64::from(t) * 0.5, c, u).unwrap())
            .collect();
        TradeTape::new(trades, "prop").unwrap()
    })
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn window_selection_is_exact_and_idempotent(tape in tape_strategy(60), center in -2.0f64..30.0, width in 0.1f64..20.0) {
        let window = Window::new(center, width).unwrap();
        match tape.select(window) {
            Ok(slice) => {
                prop_assert!(slice.iter().all(|t| window.contains(t.t())));
                let inside = tape.trades().iter().filter(|t| window.contains(t.t())).count();
                prop_assert_eq!(inside, slice.count());
                let again = slice.select(window).unwrap();
                prop_assert_eq!(again.trades(), slice.trades());
            }
            Err(TapeError::EmptyWindow { .. }) => {
                prop_assert!(tape.trades().iter().all(|t| !window.contains(t.t())));
            }
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn csv_round_trip(tape in tape_strategy(40)) {
        let again = parse_tape(&tape.to_csv(), "prop").unwrap();
        prop_assert_eq!(again.trades(), tape.trades());
    }

    #[test]
    fn constant_volume_equivalence(values in prop::collection::vec(0.01f64..1e3, 1..200), u in 0.01f64..100.0) {
        let trades: Vec<Trade> = values.iter().enumerate().map(|(i, &c)| Trade::new(i as f64, c, u).unwrap()).collect();
        let m = compute_moments(&TradeSlice::from_trades(&trades).unwrap(), 4).unwrap();
        for r in &m.rows {
            prop_assert!(rel_close(r.p, r.pi, 1e-12), "n={} p={} pi={}", r.n, r.p, r.pi);
        }
    }

    #[test]
    fn unit_volume_price_distribution_is_value_distribution(values in prop::collection::vec(1u32..20, 1..50)) {
        let trades: Vec<Trade> = values.iter().enumerate().map(|(i, &c)| Trade::new(i as f64, f64::from(c) * 0.25, 1.0).unwrap()).collect();
        let slice = TradeSlice::from_trades(&trades).unwrap();
        prop_assert_eq!(price_distribution(&slice), value_distribution(&slice));
    }

    #[test]
    fn moment_bounds_and_vwap(tape in tape_strategy(80)) {
        let slice = tape.as_slice();
        let m = compute_moments(&slice, 4).unwrap();
        let (lo, hi) = m.price_range();
        for r in &m.rows {
            let (a, b) = (lo.powi(r.n as i32), hi.powi(r.n as i32));
            let slack = 1e-12 * b;
            prop_assert!(r.p >= a - slack && r.p <= b + slack);
            prop_assert!(r.pi >= a - slack && r.pi <= b + slack);
            prop_assert_eq!(r.c_mean, r.c_sum / m.count as f64);
            prop_assert_eq!(r.u_mean, r.u_sum / m.count as f64);
        }
        prop_assert_eq!(vwap(&slice).to_bits(), m.p(1).unwrap().to_bits());
        prop_assert!(volatility(&m, MeasureKind::Frequency).unwrap() >= 0.0);
    }

    #[test]
    fn scale_covariance(tape in tape_strategy(40), lambda in 0.1f64..10.0) {
        let base = compute_moments(&tape.as_slice(), 3).unwrap();
        let scaled_values: Vec<Trade> = tape.trades().iter().map(|t| Trade::new(t.t(), t.value() * lambda, t.volume()).unwrap()).collect();
        let scaled_volumes: Vec<Trade> = tape.trades().iter().map(|t| Trade::new(t.t(), t.value(), t.volume() * lambda).unwrap()).collect();
        let mv = compute_moments(&TradeSlice::from_trades(&scaled_values).unwrap(), 3).unwrap();
        let mu = compute_moments(&TradeSlice::from_trades(&scaled_volumes).unwrap(), 3).unwrap();
        for n in 1..=3u32 {
            let f = lambda.powi(n as i32);
            prop_assert!(rel_close(mv.p(n).unwrap(), base.p(n).unwrap() * f, 1e-12));
            prop_assert!(rel_close(mv.pi(n).unwrap(), base.pi(n).unwrap() * f, 1e-12));
            prop_assert!(rel_close(mu.p(n).unwrap(), base.p(n).unwrap() / f, 1e-12));
            prop_assert!(rel_close(mu.pi(n).unwrap(), base.pi(n).unwrap() / f, 1e-12));
        }
    }

    #[test]
    fn charfn_normalized_and_conjugate_symmetric(
        a1 in -50.0f64..50.0, a2 in 0.01f64..10.0, a3 in -2.0f64..2.0, x in -20.0f64..20.0
    ) {
        for f in [
            CharFnApprox::point_mass(a1, MeasureKind::Market).unwrap(),
            CharFnApprox::gaussian(a1, a2, MeasureKind::Market).unwrap(),
            CharFnApprox::skewed(a1, a2, a3, MeasureKind::Market).unwrap(),
        ] {
            let one = f.evaluate(0.0);
            prop_assert_eq!((one.re, one.im), (1.0, 0.0));
            prop_assert_eq!(f.evaluate(-x), f.evaluate(x).conj());
            if f.order() <= 2 {
                prop_assert!(f.evaluate(x).norm() <= 1.0 + 1e-15);
            }
        }
    }

    #[test]
    fn gaussian_quantile_round_trip(mean in -1e3f64..1e3, sigma in 1e-3f64..1e2, eps in 1e-6f64..0.999_999) {
        let stats = CentralStats { mean, variance: sigma * sigma, third_central: None, kind: MeasureKind::Market };
        let q = gaussian_quantile(&stats, eps).unwrap();
        prop_assert!((normal::cdf((q - mean) / stats.sigma()) - eps).abs() <= 1e-8);
    }

    #[test]
    fn empirical_coverage(levels in prop::collection::vec(0u32..30, 1..100), eps in 0.001f64..0.999) {
        let dist = FrequencyDistribution::from_levels(levels.iter().map(|&l| f64::from(l))).unwrap();
        let q = empirical_quantile(&dist, eps).unwrap();
        let (below, at) = dist.mass_below_and_at(q);
        prop_assert!(below < eps && at >= eps);
    }

    #[test]
    fn translation_and_scale_equivariance(tape in tape_strategy(30), shift in -5.0f64..5.0, lambda in 0.2f64..5.0) {
        let eps = [0.05];
        let base = compare(&tape.as_slice(), &eps, 2).unwrap();
        // Shift every price by `shift` (keeping volumes) and scale values by lambda.
        let min_price = tape.trades().iter().map(Trade::price).fold(f64::INFINITY, f64::min);
        prop_assume!(min_price + shift > 0.0);
        let shifted: Vec<Trade> = tape.trades().iter().map(|t| Trade::new(t.t(), (t.price() + shift) * t.volume(), t.volume()).unwrap()).collect();
        let scaled: Vec<Trade> = tape.trades().iter().map(|t| Trade::new(t.t(), t.value() * lambda, t.volume()).unwrap()).collect();
        let rs = compare(&TradeSlice::from_trades(&shifted).unwrap(), &eps, 2).unwrap();
        let rl = compare(&TradeSlice::from_trades(&scaled).unwrap(), &eps, 2).unwrap();
        let q = |r: &ComparisonReport, m| r.result(m, 0.05).map(|x| x.p_epsilon);
        let fg = q(&base, VarMeasure::FrequencyGaussian).unwrap();
        let scale = tape.trades().iter().map(|t| t.price().abs()).fold(1.0, f64::max);
        prop_assert!((q(&rs, VarMeasure::FrequencyGaussian).unwrap() - (fg + shift)).abs() <= 1e-6 * scale);
        prop_assert!(rel_close(q(&rl, VarMeasure::FrequencyGaussian).unwrap(), fg * lambda, 1e-9) || (fg * lambda).abs() < 1e-9 * scale * lambda);
        if let (Some(mg), Some(mg_scaled)) = (q(&base, VarMeasure::MarketGaussian), q(&rl, VarMeasure::MarketGaussian)) {
            prop_assert!((mg_scaled - mg * lambda).abs() <= 1e-6 * scale * lambda);
        }
    }
}

#[test]
fn constant_volume_tape_has_zero_divergence() {
    let spec = TapeSpec {
        count: 300,
        volume: VolumeProcess::Constant { volume: 7.0 },
        ..TapeSpec::default()
    };
    let tape = synthesize_tape(&spec, 11).unwrap();
    let r = compare(&tape.as_slice(), &[0.001, 0.01, 0.05, 0.5], 3).unwrap();
    assert_eq!(r.divergence.len(), 4);
    for d in &r.divergence {
        assert!(d.divergence.abs() < 1e-9, "{d:?}");
    }
}

#[test]
fn moment_matching_against_finite_differences() {
    // Central differences of F at zero, Richardson-extrapolated, as an
    // independent route to the raw moments.
    fn derivative(f: &CharFnApprox, n: u32, h: f64) -> fd_oracle::C {
        fd_oracle::derivative(|x| f.evaluate(x), n, h)
    }
    let sets = [(2.6, 97.0 / 13.0 - 6.76, -0.390_857_1), (0.0, 1.0, 0.0), (-3.0, 0.25, 0.05)];
    for (a1, a2, a3) in sets {
        for f in [
            CharFnApprox::point_mass(a1, MeasureKind::Market).unwrap(),
            CharFnApprox::gaussian(a1, a2, MeasureKind::Market).unwrap(),
            CharFnApprox::skewed(a1, a2, a3, MeasureKind::Market).unwrap(),
        ] {
            for n in 1..=f.order() {
                let d = derivative(&f, n, 1e-2);
                let i_pow = fd_oracle::i_pow_neg(n);
                let fd = fd_oracle::mul(d, i_pow).0;
                let analytic = f.moment(n).unwrap();
                assert!((fd - analytic).abs() <= 1e-4 * analytic.abs().max(1.0), "n={n} {fd} vs {analytic}");
            }
        }
    }
}

/// Minimal complex helpers so the oracle does not reuse the library's
/// complex arithmetic.
mod fd_oracle {
    pub type C = (f64, f64);

    pub fn mul(a: C, b: C) -> C {
        (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
    }

    /// `i^{-n}`.
    pub fn i_pow_neg(n: u32) -> C {
        match n % 4 {
            0 => (1.0, 0.0),
            1 => (0.0, -1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, 1.0),
        }
    }

    fn central<F: Fn(f64) -> tapevar_core::charfn::Complex64>(f: &F, n: u32, h: f64) -> C {
        let g = |k: f64| {
            let z = f(k * h);
            (z.re, z.im)
        };
        let comb = |terms: &[(f64, f64)], denom: f64| {
            let mut acc = (0.0, 0.0);
            for &(w, k) in terms {
                let v = g(k);
                acc.0 += w * v.0;
                acc.1 += w * v.1;
            }
            (acc.0 / denom, acc.1 / denom)
        };
        match n {
            1 => comb(&[(1.0, 1.0), (-1.0, -1.0)], 2.0 * h),
            2 => comb(&[(1.0, 1.0), (-2.0, 0.0), (1.0, -1.0)], h * h),
            3 => comb(&[(1.0, 2.0), (-2.0, 1.0), (2.0, -1.0), (-1.0, -2.0)], 2.0 * h * h * h),
            _ => unreachable!(),
        }
    }

    /// Two levels of Richardson extrapolation on an O(h²) central stencil.
    pub fn derivative<F: Fn(f64) -> tapevar_core::charfn::Complex64>(f: F, n: u32, h: f64) -> C {
        let d1 = central(&f, n, h);
        let d2 = central(&f, n, h / 2.0);
        let d4 = central(&f, n, h / 4.0);
        let r1 = ((4.0 * d2.0 - d1.0) / 3.0, (4.0 * d2.1 - d1.1) / 3.0);
        let r2 = ((4.0 * d4.0 - d2.0) / 3.0, (4.0 * d4.1 - d2.1) / 3.0);
        ((16.0 * r2.0 - r1.0) / 15.0, (16.0 * r2.1 - r1.1) / 15.0)
    }
}
