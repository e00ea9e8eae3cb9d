use comono_rdd::dgp::{self, LinearRule, SkillModelParams, SyntheticTruth};
use comono_rdd::rng::substream;
use comono_rdd::Dataset;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// OLS of `y` on `[1, x]` over `rows`.
fn ols(ds: &Dataset, rows: &[usize], cols: &[usize], y: impl Fn(usize) -> f64) -> Vec<f64> {
    let a = DMatrix::from_fn(rows.len(), cols.len() + 1, |r, c| {
        if c == 0 {
            1.0
        } else {
            ds.x_row(rows[r])[cols[c - 1]]
        }
    });
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|&i| y(i)));
    let sol = a.svd(true, true).solve(&b, 1e-12).unwrap();
    sol.iter().copied().collect()
}

fn random_points(n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = substream(seed, 0);
    (0..n).map(|_| [rng.random(), rng.random()]).collect()
}

#[test]
fn tau_is_the_mean_difference() {
    let truths = [
        dgp::gen_expository(10, 1).unwrap().1,
        dgp::gen_linear_shifted(10, 0.7, -0.2, 0.1, 1).unwrap().1,
        dgp::gen_skill_model(
            10,
            &SkillModelParams::default(),
            &LinearRule {
                weights: vec![1.0, 0.0],
                cutoff: 0.0,
            },
            1,
        )
        .unwrap()
        .1,
    ];
    for truth in &truths {
        for x in random_points(1000, 2) {
            assert_eq!(truth.tau(&x), truth.mu1(&x) - truth.mu0(&x));
        }
    }
}

/// Along the frontier, q0 maps the treated mean to the untreated mean and
/// q1 inverts it.
fn check_frontier_maps(truth: &SyntheticTruth, frontier: impl Fn(f64) -> [f64; 2]) {
    for j in 0..=100 {
        let x = frontier(j as f64 / 100.0);
        let (m1, m0) = (truth.mu1(&x), truth.mu0(&x));
        let q0 = truth.q0(m1).expect("frontier mean inside the q0 domain");
        let q1 = truth.q1(m0).expect("frontier mean inside the q1 domain");
        assert!((q0 - m0).abs() < 1e-12, "q0({m1}) = {q0}, want {m0}");
        assert!((q1 - m1).abs() < 1e-12, "q1({m0}) = {q1}, want {m1}");
    }
}

#[test]
fn closed_form_transfer_curves_follow_the_frontier() {
    let (_, expo) = dgp::gen_expository(10, 3).unwrap();
    // 0.4 x1 + x2 = 0.7 over the unit square
    check_frontier_maps(&expo, |s| [s, 0.7 - 0.4 * s]);
    let (_, lin) = dgp::gen_linear_shifted(10, 0.5, 0.1, 0.1, 3).unwrap();
    check_frontier_maps(&lin, |s| [0.5, s]);
}

#[test]
fn transfer_curves_vanish_outside_their_domains() {
    let (_, expo) = dgp::gen_expository(10, 4).unwrap();
    let (lo, hi) = expo.q_domain(0).unwrap();
    assert!(expo.q0(lo - 1e-9).is_none() && expo.q0(hi + 1e-9).is_none());
    assert!(expo.q0(lo).is_some() && expo.q0(hi).is_some());
    let (lo, hi) = expo.q_domain(1).unwrap();
    assert!(expo.q1(lo - 1e-9).is_none() && expo.q1(hi + 1e-9).is_none());
}

#[test]
fn expository_treats_half_the_square() {
    let (ds, truth) = dgp::gen_expository(200_000, 5).unwrap();
    let share = ds.d().iter().filter(|&&d| d).count() as f64 / ds.n() as f64;
    assert!((share - 0.5).abs() < 0.005, "treated share {share}");
    for i in 0..ds.n() {
        assert_eq!(ds.d()[i], truth.treated(ds.x_row(i)));
    }
}

#[test]
fn linear_design_recovers_its_means() {
    let (ds, _) = dgp::gen_linear_shifted(40_000, 0.6, -0.3, 0.1, 6).unwrap();
    let (treated, untreated) = ds.partition();
    let y = |i| ds.y()[i];
    let c1 = ols(&ds, &treated, &[0, 1], y);
    let c0 = ols(&ds, &untreated, &[0, 1], y);
    for (got, want) in c1.iter().zip([0.0, 1.0, 1.0]) {
        assert!((got - want).abs() < 0.02, "treated {c1:?}");
    }
    for (got, want) in c0.iter().zip([-0.3, 0.6, 0.6]) {
        assert!((got - want).abs() < 0.02, "untreated {c0:?}");
    }
}

#[test]
fn stratified_slopes_differ_by_stratum() {
    let slopes = [0.4, 0.9];
    let (ds, truth) = dgp::gen_stratified_linear(40_000, slopes, 0.1, 7).unwrap();
    for (s, &want) in slopes.iter().enumerate() {
        let rows: Vec<usize> = (0..ds.n())
            .filter(|&i| !ds.d()[i] && (ds.x_row(i)[2] > 0.5) == (s == 1))
            .collect();
        let c = ols(&ds, &rows, &[0, 1], |i| ds.y()[i]);
        assert!(
            (c[1] - want).abs() < 0.1 && (c[2] - want).abs() < 0.1,
            "stratum {s}: {c:?}"
        );
        assert_eq!(truth.q0_stratum(1.0, s), Some(want));
    }
    let share = (0..ds.n()).filter(|&i| ds.x_row(i)[2] > 0.5).count() as f64 / ds.n() as f64;
    assert!((share - 0.5).abs() < 0.01);
}

#[test]
fn skill_scores_have_the_stated_covariance() {
    let params = SkillModelParams::default();
    let rule = LinearRule {
        weights: vec![1.0, 0.0],
        cutoff: 0.0,
    };
    let (ds, truth) = dgp::gen_skill_model(200_000, &params, &rule, 8).unwrap();
    let n = ds.n() as f64;
    let mean = |j: usize| (0..ds.n()).map(|i| ds.x_row(i)[j]).sum::<f64>() / n;
    let m = [mean(0), mean(1)];
    let want = params.score_covariance();
    for a in 0..2 {
        assert!((m[a] - [params.mu_r, params.mu_m][a]).abs() < 0.02);
        for b in 0..2 {
            let cov = (0..ds.n())
                .map(|i| (ds.x_row(i)[a] - m[a]) * (ds.x_row(i)[b] - m[b]))
                .sum::<f64>()
                / n;
            assert!(
                (cov - want[a][b]).abs() < 0.02,
                "cov[{a}][{b}] = {cov}, want {}",
                want[a][b]
            );
        }
    }
    // treated iff the reading score is at most zero
    for i in 0..ds.n() {
        assert_eq!(ds.d()[i], ds.x_row(i)[0] <= 0.0);
    }
    // outcomes are linear in the scores through the posterior mean of math skill
    let (treated, _) = ds.partition();
    let c = ols(&ds, &treated, &[0, 1], |i| ds.y()[i]);
    let x = [0.3, -0.2];
    let fitted = c[0] + c[1] * x[0] + c[2] * x[1];
    assert!((fitted - truth.mu1(&x)).abs() < 0.02, "{fitted} vs {}", truth.mu1(&x));
}

#[test]
fn generators_are_seeded() {
    let a = dgp::gen_expository(500, 9).unwrap().0;
    let b = dgp::gen_expository(500, 9).unwrap().0;
    let c = dgp::gen_expository(500, 10).unwrap().0;
    assert_eq!(a.y(), b.y());
    assert_eq!(a.x(), b.x());
    assert_ne!(a.y(), c.y());
}
