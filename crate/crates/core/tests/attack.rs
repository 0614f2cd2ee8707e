use privsel_core::beta::anticoncentration_beta_choice;
use privsel_core::fingerprint::{membership_experiment, privacy_upper_bound, z_statistic, BoundParameters, InstanceShape};
use privsel_core::instance::{sample_dataset, sample_population};
use privsel_core::mechanisms::{Mechanism, MechanismSpec};
use privsel_core::rng::trial_stream;
use privsel_core::stats::MeanEstimate;

fn shape(n: usize) -> InstanceShape {
    InstanceShape::new(1024, 8, n, anticoncentration_beta_choice(1024, 8).unwrap()).unwrap()
}

#[test]
fn data_independent_output_has_no_gap() {
    let spec = MechanismSpec::new(Mechanism::FirstK, 0.0, 0.0);
    let r = membership_experiment(&spec, &shape(25), 2000, 11).unwrap();
    assert!(r.member.covers(0.0), "{:?}", r.member);
    assert!(r.nonmember.covers(0.0), "{:?}", r.nonmember);
    assert!(r.gap.covers(0.0), "{:?}", r.gap);
}

#[test]
fn nonprivate_selection_is_traceable() {
    let spec = MechanismSpec::new(Mechanism::NonPrivate, 0.0, 0.0);
    let r = membership_experiment(&spec, &shape(25), 2000, 12).unwrap();
    assert!(r.gap.lower() > 0.0, "{:?}", r.gap);
}

/// Per row, the member score cannot beat a fresh row by more than the
/// privacy bound divided by `n`.
#[test]
fn peeling_gap_respects_privacy_bound() {
    let n = 2200;
    let spec = MechanismSpec::new(Mechanism::Peeling, 1.0, 1e-6);
    let r = membership_experiment(&spec, &shape(n), 1000, 13).unwrap();
    let params = BoundParameters::new(1.0, 1e-6, 8.0 / 2.0, 0.0, shape(n).beta_sym).unwrap();
    let per_row = privacy_upper_bound(&params, n, 8.0).unwrap() / n as f64;
    assert!(r.gap.lower() <= per_row, "{:?} vs {per_row}", r.gap);
}

/// Mean of `Z` stays below the privacy side for every private mechanism.
#[test]
fn z_respects_privacy_bound_per_mechanism() {
    let (d, k, n) = (256, 4, 300);
    let beta = 2.0;
    let trials = 400;
    for mechanism in [Mechanism::Peeling, Mechanism::ReportNoisyMax, Mechanism::SparseVector] {
        let spec = MechanismSpec::new(mechanism, 1.0, 1.0 / (n * d) as f64);
        let shape = InstanceShape::new(d, k, n, beta).unwrap();
        let mut zs = Vec::with_capacity(trials);
        let mut l2 = Vec::with_capacity(trials);
        for t in 0..trials {
            let mut rng = trial_stream(99, t as u64);
            let pop = sample_population(d, shape.prior(), &mut rng).unwrap();
            let x = sample_dataset(&pop, n, &mut rng).unwrap();
            let out = spec.run(&x.column_means(), k, &mut rng).unwrap();
            zs.push(z_statistic(&out, &x, &pop).unwrap().z_total);
            l2.push(out.l2_norm_sq());
        }
        let z = MeanEstimate::from_samples(&zs);
        let (eps, delta) = spec.privacy().unwrap();
        let cap = spec.l1_cap(d, k).unwrap() / 2.0;
        let params = BoundParameters::new(eps, delta, cap, 0.0, beta).unwrap();
        let upper = privacy_upper_bound(&params, n, MeanEstimate::from_samples(&l2).mean).unwrap();
        assert!(z.mean <= upper + z.ci_halfwidth, "{mechanism}: {z:?} vs {upper}");
    }
}
