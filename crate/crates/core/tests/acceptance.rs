//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its pinned tolerances. Run with `cargo test --test acceptance` (add
//! `-- --nocapture` to see the lines).

use std::collections::BTreeMap;
use std::time::Instant;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use reebgap_core::certified::{Budget, CertifiedReal};
use reebgap_core::chmodel::{
    apply_derivation, gap_certificate_rational, gap_witness_irrational, limit_gap_report,
    AlgebraElement, ChAlgebra, ChError, DerivationTable, Monomial,
};
use reebgap_core::diophantine::{approx_ellipsoid, lcm_pair};
use reebgap_core::flow::{
    base_critical_values, base_flow_calibrate, detect_period_torus, exact_flow, find_closing_t,
    fit_frequencies, frequencies, integrate, ClosingOutcome, EllipsoidPoint,
    InvariantPerturbation, Profile, TorusFlowSpec,
};
use reebgap_core::index::{
    cz_nondegenerate, ellipsoid_linearized_path, rs_index, rs_rotation_block, HalfInt,
    SymplecticPath,
};
use reebgap_core::spectrum::{
    action_spectrum, cz_index, k_t_index, period, Ellipsoid, OrbitLabel, Period,
};

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn rational_ellipsoid(rng: &mut ChaCha8Rng, n: usize) -> Ellipsoid {
    let axes: Vec<CertifiedReal> = (0..n)
        .map(|_| {
            let num = rng.random_range(1i64..30);
            let den = rng.random_range(1i64..8);
            CertifiedReal::from_rational(rat(num, den))
        })
        .collect();
    Ellipsoid::new(axes).unwrap()
}

/// Brute-force merge oracle, independent of the streaming merge.
fn brute_force_values(e: &Ellipsoid, count: u64) -> Vec<(BigRational, usize, u64)> {
    let mut vals = Vec::new();
    for i in 1..=e.n() {
        let a = e.axis(i).as_rational().unwrap();
        for j in 1..=count {
            vals.push((a * BigRational::from_integer(BigInt::from(j)), i, j));
        }
    }
    vals.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    vals.truncate(count as usize);
    vals
}

#[test]
fn criterion_01_e23_end_to_end() {
    let start = Instant::now();
    let e = Ellipsoid::from_strs(&["2", "3"]).unwrap();
    match period(&e).unwrap() {
        Period::Finite(t) => assert_eq!(t.as_rational().unwrap(), &rat(6, 1)),
        Period::Infinite => panic!("E(2,3) is periodic"),
    }
    let (k_t, t) = k_t_index(&e).unwrap();
    assert_eq!(k_t, 4);
    assert_eq!(t.as_rational().unwrap(), &rat(6, 1));
    let s = action_spectrum(&e, 6).unwrap();
    assert_eq!(s.value(4).as_rational().unwrap(), &rat(6, 1));
    assert_eq!(s.value(5).as_rational().unwrap(), &rat(6, 1));
    let w = gap_certificate_rational(&e).unwrap();
    assert!(w.action_difference.is_zero());
    assert_eq!((w.sigma_rank, w.target_rank), (5, 4));
    w.verify().unwrap();
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!(
        "criterion 01 (E(2,3) end-to-end: T=6, k_T=4, M4=M5=6, gap diff 0, < 1 s): PASS ({:.3} s)",
        elapsed.as_secs_f64()
    );
}

#[test]
fn criterion_02_spectrum_oracle_and_conformality() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20230202);
    for case in 0..200 {
        let n = rng.random_range(1usize..=5);
        let e = rational_ellipsoid(&mut rng, n);
        let count = rng.random_range(50u64..=2000);
        let s = action_spectrum(&e, count).unwrap();
        let oracle = brute_force_values(&e, count);
        for (entry, (v, axis, j)) in s.entries.iter().zip(oracle.iter()) {
            assert_eq!(entry.value.as_rational().unwrap(), v, "case {case}");
            assert_eq!(entry.label.axis, *axis, "case {case}");
            assert_eq!(entry.label.iterate, *j, "case {case}");
        }
    }
    for case in 0..200 {
        let n = rng.random_range(1usize..=5);
        let e = rational_ellipsoid(&mut rng, n);
        let c = rat(rng.random_range(1i64..12), rng.random_range(1i64..12));
        let count = 300u64;
        let s1 = action_spectrum(&e, count).unwrap();
        let s2 = action_spectrum(&e.scale(&c).unwrap(), count).unwrap();
        for k in 1..=count {
            let lhs = s1.value(k).as_rational().unwrap() * &c;
            assert_eq!(&lhs, s2.value(k).as_rational().unwrap(), "case {case} rank {k}");
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!(
        "criterion 02 (200 oracle merges K<=2000 exact + 200 exact conformality pairs, < 30 s): PASS ({:.1} s)",
        elapsed.as_secs_f64()
    );
}

#[test]
fn criterion_03_cz_consistency() {
    // Irrational-tagged axes: one rational axis plus distinct square-root
    // multiples, so every action value is simple.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let primes = [2u64, 3, 5, 7, 11];
    let mut checked = 0;
    while checked < 50 {
        let n = rng.random_range(2usize..=3);
        let mut axes = vec![CertifiedReal::from_rational(rat(
            rng.random_range(1i64..=3),
            1,
        ))];
        for k in 0..n - 1 {
            let coeff = rat(rng.random_range(1i64..=2), 1);
            axes.push(CertifiedReal::sqrt_of(primes[k]).unwrap().scale(&coeff));
        }
        let e = Ellipsoid::new(axes).unwrap();
        let axis = rng.random_range(1usize..=n);
        let iterate = rng.random_range(1u64..=2);
        let label = OrbitLabel::new(axis, iterate);
        let expected = cz_index(&e, label).unwrap();
        let path = ellipsoid_linearized_path(&e, label).unwrap();
        let numeric = cz_nondegenerate(&path).unwrap();
        assert_eq!(numeric, expected, "ellipsoid {:?} label {label:?}", e.axes());
        checked += 1;
    }
    println!("criterion 03 (50 irrational ellipsoids: spectrum CZ == path CZ exactly): PASS");
}

#[test]
fn criterion_04_rs_engine_closed_form_and_axioms() {
    // Closed-form grid: 20 rates x 10 durations.
    let pi = std::f64::consts::PI;
    let thetas: Vec<f64> = (1..=10)
        .flat_map(|k| [k as f64 * pi / 4.0, -(k as f64) * pi / 4.0])
        .collect();
    let durations = [0.4, 0.6, 0.8, 1.0, 1.2, 1.5, 1.6, 2.0, 2.5, 3.0];
    let mut cases = 0;
    for &theta in &thetas {
        for &t in &durations {
            let numeric = rs_index(&SymplecticPath::rotation(theta, t).unwrap()).unwrap();
            let closed = rs_rotation_block(theta, t).unwrap();
            assert_eq!(
                numeric, closed,
                "rotation theta = {theta}, T = {t}: {numeric} vs {closed}"
            );
            cases += 1;
        }
    }
    assert_eq!(cases, 200);

    // Additivity and vanishing on random compositions.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut axiom_checks = 0;
    while axiom_checks < 200 {
        match rng.random_range(0u8..3) {
            0 => {
                // Direct sum of two rotations with well-separated rates.
                let r1 = 2.0 * pi * (rng.random_range(2..18) as f64 / 10.0 + 0.05);
                let r2 = r1 + 2.0 * pi * (rng.random_range(3..12) as f64 / 10.0 + 0.07);
                let a = SymplecticPath::rotation(r1, 1.0).unwrap();
                let b = SymplecticPath::rotation(r2, 1.0).unwrap();
                let lhs = rs_index(&a.direct_sum(&b).unwrap()).unwrap();
                let rhs = rs_index(&a).unwrap() + rs_index(&b).unwrap();
                assert_eq!(lhs, rhs, "direct sum rates {r1} {r2}");
            }
            1 => {
                // Concatenation of a rotation split at a random time.
                let rate = 2.0 * pi * (rng.random_range(3..25) as f64 / 10.0 + 0.03);
                let split = rng.random_range(2..9) as f64 / 10.0;
                let first = SymplecticPath::rotation(rate, split).unwrap();
                let second = SymplecticPath::from_fn(2, 1.0 - split, move |t| {
                    let s = rate * (t + split);
                    nalgebra::DMatrix::from_row_slice(
                        2,
                        2,
                        &[s.cos(), -s.sin(), s.sin(), s.cos()],
                    )
                })
                .unwrap();
                let joined = first.concat(&second).unwrap();
                let lhs = rs_index(&joined).unwrap();
                let rhs = rs_index(&first).unwrap() + rs_index(&second).unwrap();
                assert_eq!(lhs, rhs, "concat rate {rate} split {split}");
            }
            _ => {
                // Vanishing: shear and identity blocks, alone and summed.
                let shear = SymplecticPath::shear(1.0).unwrap();
                assert_eq!(rs_index(&shear).unwrap(), HalfInt::from_integer(0));
                let idp = SymplecticPath::identity(2, 1.0).unwrap();
                assert_eq!(rs_index(&idp).unwrap(), HalfInt::from_integer(0));
                let rate = 2.0 * pi * (rng.random_range(2..15) as f64 / 10.0 + 0.05);
                let rot = SymplecticPath::rotation(rate, 1.0).unwrap();
                let mixed = rot.direct_sum(&shear).unwrap();
                assert_eq!(rs_index(&mixed).unwrap(), rs_index(&rot).unwrap());
            }
        }
        axiom_checks += 1;
    }
    println!(
        "criterion 04 (RS numeric == closed form on 200-case grid; additivity/vanishing on 200 compositions): PASS"
    );
}

#[test]
fn criterion_05_parity_theorem() {
    // Paths Psi = direct sum of rotation blocks e^{J0 2 pi m_j t} (m_j
    // non-integer) plus a 2d-dimensional identity block: RS == n - 1 - d
    // mod 2 where 2(n - 1) is the total dimension.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..500 {
        let blocks = rng.random_range(1usize..=3);
        let d = rng.random_range(0usize..=2);
        let mut path: Option<SymplecticPath> = None;
        for _ in 0..blocks {
            // Winding numbers well away from integers.
            let m = rng.random_range(0..4) as f64 + 0.15 + 0.7 * rng.random::<f64>();
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let block =
                SymplecticPath::rotation(sign * 2.0 * std::f64::consts::PI * m, 1.0).unwrap();
            path = Some(match path {
                None => block,
                Some(p) => p.direct_sum(&block).unwrap(),
            });
        }
        let mut path = path.unwrap();
        if d > 0 {
            path = path
                .direct_sum(&SymplecticPath::identity(2 * d, 1.0).unwrap())
                .unwrap();
        }
        let rs = rs_index(&path).unwrap();
        let rs_int = rs
            .to_integer()
            .unwrap_or_else(|| panic!("case {case}: non-integer RS {rs}"));
        // n - 1 - d = number of rotation blocks.
        assert_eq!(
            rs_int.rem_euclid(2),
            (blocks as i64).rem_euclid(2),
            "case {case}: RS = {rs_int}, blocks = {blocks}, d = {d}"
        );
    }
    println!("criterion 05 (500 block-unitary paths satisfy RS == n-1-d mod 2): PASS");
}

#[test]
fn criterion_06_diophantine_certificates() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let primes = [2u64, 3, 5, 7, 11];
    let epsilons = [rat(1, 20), rat(1, 10), rat(3, 20), rat(1, 5)];
    for case in 0..100 {
        let n = rng.random_range(1usize..=3);
        let mut axes = Vec::with_capacity(n);
        for k in 0..n {
            if rng.random::<bool>() {
                axes.push(CertifiedReal::from_rational(rat(
                    rng.random_range(1i64..=5),
                    rng.random_range(1i64..=2),
                )));
            } else {
                let coeff = rat(1, 1);
                axes.push(CertifiedReal::sqrt_of(primes[k]).unwrap().scale(&coeff));
            }
        }
        let e = Ellipsoid::new(axes).unwrap();
        let eps = epsilons[rng.random_range(0..epsilons.len())].clone();
        let out = approx_ellipsoid(&e, &eps)
            .unwrap_or_else(|err| panic!("case {case}: {err}"));
        // Independent re-verification of the certificate inequalities.
        out.verify(e.axes(), e.budget())
            .unwrap_or_else(|err| panic!("case {case}: certificate failed: {err}"));
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!(
        "criterion 06 (100 certified approximants, n<=3, eps>=1/20, zero failures, < 60 s): PASS ({:.1} s)",
        elapsed.as_secs_f64()
    );
}

#[test]
fn criterion_07_irrational_gap_witness() {
    let e = Ellipsoid::from_strs(&["1", "sqrt(2)"]).unwrap();
    let budget = e.budget();
    let w = gap_witness_irrational(&e, &rat(1, 100)).unwrap();
    // n = 2: sigma rank is k + 1, certified difference below 1e-2.
    assert_eq!(w.sigma_rank, w.target_rank + 1);
    let bound = CertifiedReal::from_rational(rat(1, 100));
    assert!(w.action_difference.le(&bound, budget).unwrap());
    w.verify().unwrap();

    let mut witnesses = Vec::new();
    for eps in [rat(1, 2), rat(1, 10), rat(1, 100)] {
        let w = gap_witness_irrational(&e, &eps).unwrap();
        assert!(w
            .action_difference
            .le(&CertifiedReal::from_rational(eps.clone()), budget)
            .unwrap());
        witnesses.push((w, eps));
    }
    let report = limit_gap_report(&witnesses).unwrap();
    assert!(report.non_increasing());
    assert!(report.entries.last().unwrap().running_infimum <= rat(1, 100));
    println!(
        "criterion 07 (E(1,sqrt(2)): certified M_(k+1)-M_k <= 1e-2; non-increasing trend over eps = 1/2, 1/10, 1/100): PASS"
    );
}

#[test]
fn criterion_08_flow_fidelity() {
    let e = Ellipsoid::from_strs(&["2", "3"]).unwrap();
    // Exact flow returns at t = T = 6 with error < 1e-12.
    let z = EllipsoidPoint::on_torus(&e, &[0.35, 0.65], &[0.4, 1.1]).unwrap();
    let back = exact_flow(&e, &z, 6.0).unwrap();
    assert!(z.distance(&back) < 1e-12, "return error {}", z.distance(&back));

    // Perturbed integrator conserves the constraint and all moments to
    // < 1e-8 over t <= 100.
    let f = InvariantPerturbation::new(
        Profile::Linear {
            weights: vec![0.5, 0.2],
        },
        0.1,
    )
    .unwrap();
    let traj = integrate(&e, &f, &z, 100.0, 1e-10).unwrap();
    assert!(!traj.failed);
    assert!(
        traj.stats.max_constraint_drift < 1e-8,
        "constraint drift {}",
        traj.stats.max_constraint_drift
    );
    assert!(
        traj.stats.max_mu_drift < 1e-8,
        "mu drift {}",
        traj.stats.max_mu_drift
    );

    // Frequencies match the least-squares phase fit to < 1e-6 relative on
    // 20 random configurations.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..20 {
        let axes = [
            rat(rng.random_range(1i64..=4), 1),
            rat(rng.random_range(2i64..=5), rng.random_range(1i64..=2)),
        ];
        let e = Ellipsoid::new(vec![
            CertifiedReal::from_rational(axes[0].clone()),
            CertifiedReal::from_rational(axes[1].clone()),
        ])
        .unwrap();
        let m1 = 0.2 + 0.6 * rng.random::<f64>();
        let mu = [m1, 1.0 - m1];
        let z = EllipsoidPoint::on_torus(&e, &mu, &[0.0, 0.5]).unwrap();
        let f = InvariantPerturbation::new(
            Profile::Linear {
                weights: vec![rng.random::<f64>(), rng.random::<f64>()],
            },
            0.05 + 0.15 * rng.random::<f64>(),
        )
        .unwrap();
        let predicted = frequencies(&e, &f, &mu).unwrap();
        let traj = integrate(&e, &f, &z, 15.0, 1e-10).unwrap();
        let fitted = fit_frequencies(&traj);
        for (p, q) in predicted.iter().zip(&fitted) {
            assert!(
                ((p - q) / p).abs() < 1e-6,
                "case {case}: predicted {p}, fitted {q}"
            );
        }
    }
    println!(
        "criterion 08 (exact return < 1e-12 at T; constraint & mu drift < 1e-8 over t <= 100; frequency fit < 1e-6): PASS"
    );
}

#[test]
fn criterion_09_closing_search() {
    let e = Ellipsoid::from_strs(&["1", "sqrt(2)"]).unwrap();
    let bound = 10.0;
    let out = find_closing_t(
        &e,
        &Profile::Linear {
            weights: vec![0.2],
        },
        (0.0, 1.0),
        &[0.5, 0.5],
        bound,
    )
    .unwrap();
    match out {
        ClosingOutcome::Found(r) => {
            assert!((0.0..=1.0).contains(&r.t_star));
            assert!(r.period <= bound + 1e-9, "period {}", r.period);
            assert!(r.residual < 1e-6, "residual {}", r.residual);
            // The orbit passes through the support torus and closes.
            let return_err = r.orbit.points.last().unwrap().distance(&r.orbit.points[0]);
            assert!(return_err < 1e-6);
            println!(
                "criterion 09 (closing search: t* = {:.4}, period {:.4} <= {bound}, residual {:.2e} < 1e-6): PASS",
                r.t_star, r.period, r.residual
            );
        }
        ClosingOutcome::NotFound { nearest } => {
            panic!("no closing time found; nearest miss {nearest:?}")
        }
    }
}

#[test]
fn criterion_10_base_example() {
    // Critical values {1, 1 + pi/2, 1 + pi} to 1e-9.
    let pi = std::f64::consts::PI;
    let mut values: Vec<f64> = base_critical_values().iter().map(|(_, v)| *v).collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert!((values[0] - 1.0).abs() < 1e-9);
    assert!((values[1] - (1.0 + pi / 2.0)).abs() < 1e-9);
    assert!((values[2] - (1.0 + pi / 2.0)).abs() < 1e-9);
    assert!((values[3] - (1.0 + pi)).abs() < 1e-9);

    // Calibrated flow is 1-periodic to 1e-6.
    let cal = base_flow_calibrate().unwrap();
    assert!(cal.return_residual < 1e-6);

    // detect_period matches lcm(1/a1, 1/a2) for 50 random rational pairs.
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let budget = Budget::default();
    for case in 0..50 {
        let a1 = rat(rng.random_range(1i64..=12), rng.random_range(1i64..=12));
        let a2 = rat(rng.random_range(1i64..=12), rng.random_range(1i64..=12));
        let c1 = CertifiedReal::from_rational(a1.clone());
        let c2 = CertifiedReal::from_rational(a2.clone());
        let inv1 = CertifiedReal::from_rational(a1.recip());
        let inv2 = CertifiedReal::from_rational(a2.recip());
        let t_expected = lcm_pair(&inv1, &inv2, budget)
            .unwrap()
            .expect("rational pair is periodic")
            .as_rational()
            .unwrap()
            .to_f64()
            .unwrap();
        let spec = TorusFlowSpec::new(c1, c2);
        let detected = detect_period_torus(&spec, t_expected * 1.05, 1e-9)
            .unwrap_or_else(|| panic!("case {case}: no period under {t_expected}"));
        assert!(
            (detected - t_expected).abs() < 1e-9 * t_expected.max(1.0),
            "case {case}: detected {detected}, lcm {t_expected}"
        );
    }
    println!(
        "criterion 10 (critical values to 1e-9; calibrated flow 1-periodic to 1e-6; 50 detect_period == lcm): PASS"
    );
}

#[test]
fn criterion_11_algebra_model() {
    // Leibniz identity, exact, on 300 random pairs.
    let e = Ellipsoid::from_strs(&["2", "3"]).unwrap();
    let alg = ChAlgebra::new(&e, 16).unwrap();
    let mut images = BTreeMap::new();
    images.insert(5u64, AlgebraElement::generator(4));
    images.insert(3u64, AlgebraElement::generator(2));
    let table = DerivationTable::new(&alg, images).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let random_element = |rng: &mut ChaCha8Rng| {
        let mut x = AlgebraElement::zero();
        for _ in 0..rng.random_range(1..=3) {
            let ranks: Vec<u64> = (0..rng.random_range(1..=3))
                .map(|_| rng.random_range(1u64..=8))
                .collect();
            let coeff = rat(rng.random_range(-6i64..=6), rng.random_range(1i64..=4));
            if coeff.is_zero() {
                continue;
            }
            x = x.add(&AlgebraElement::from_monomial(
                Monomial::from_ranks(&ranks),
                coeff,
            ));
        }
        if x.is_zero() {
            AlgebraElement::unit()
        } else {
            x
        }
    };
    for case in 0..300 {
        let x = random_element(&mut rng);
        let y = random_element(&mut rng);
        let lhs = apply_derivation(&table, &x.mul(&y));
        let rhs = apply_derivation(&table, &x)
            .mul(&y)
            .add(&x.mul(&apply_derivation(&table, &y)));
        assert_eq!(lhs, rhs, "case {case}: Leibniz failed");
    }

    // 100 adversarial tables rejected: wrong degree on E(2,3), action
    // increase on the one-axis algebra (degree drop 0 there, so
    // x_k -> x_a x_b with a + b = k + 1 is degree-valid but action-raising).
    let e1 = Ellipsoid::from_strs(&["1"]).unwrap();
    let alg1 = ChAlgebra::new(&e1, 20).unwrap();
    let mut rejected = 0;
    for case in 0..100 {
        if case % 2 == 0 {
            let k = 3 + (case as u64) % 10;
            let mut images = BTreeMap::new();
            // Wrong degree: x_k -> x_{k-2} drops 4, not 2n - 2 = 2.
            images.insert(k, AlgebraElement::generator(k - 2));
            match DerivationTable::new(&alg, images) {
                Err(ChError::WrongDegree { .. }) => rejected += 1,
                other => panic!("case {case}: expected WrongDegree, got {other:?}"),
            }
        } else {
            let a = 1 + (case as u64) % 5;
            let b = 2 + (case as u64) % 4;
            let k = a + b - 1;
            let mut images = BTreeMap::new();
            images.insert(
                k,
                AlgebraElement::from_monomial(Monomial::from_ranks(&[a, b]), rat(1, 1)),
            );
            match DerivationTable::new(&alg1, images) {
                Err(ChError::ActionIncrease { .. }) => rejected += 1,
                other => panic!("case {case}: expected ActionIncrease, got {other:?}"),
            }
        }
    }
    assert_eq!(rejected, 100);
    println!(
        "criterion 11 (Leibniz exact on 300 pairs; 100 adversarial tables rejected): PASS"
    );
}
