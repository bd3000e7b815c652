// Shadowing, commutation and bounds on a Lorenz cover whose centres are a
// net of points along the attractor, so that orbits started on the attractor
// stay inside the partition for many windows.

use std::sync::OnceLock;

use segdyn::cover::{calibrate_centers, minimal_cover};
use segdyn::flow::{self, sample_trajectory};
use segdyn::quantities::{library_radius, reachable_bounds, segment_envelope};
use segdyn::segments::build_segments;
use segdyn::symbolic::{
    commutation_check, encode_orbit, reconstruct_pseudo_orbit, shadowing_error, shadowing_profile, true_orbit_windows,
};
use segdyn::transitions::estimate_transitions;
use segdyn::{
    CalibrationConfig, FlowModel, IntegratorConfig, Partition, QuantitySpec, SegmentLibrary, StateVector,
    SymbolSequence, TransitionMatrix,
};

const EPSILON: f64 = 2.0;
const HORIZON: f64 = 0.1;
const N_T: usize = 11;
const WORD_LEN: usize = 20;

struct Setup {
    model: FlowModel,
    cfg: IntegratorConfig,
    partition: Partition,
    lib: SegmentLibrary,
    gamma: TransitionMatrix,
    starts: Vec<StateVector>,
}

fn attractor_points(model: &FlowModel, cfg: &IntegratorConfig, skip: f64, span: f64, n: usize) -> Vec<StateVector> {
    let x = flow::advance(model, &vec![1.0, 1.0, 20.0].into(), skip, cfg).unwrap();
    sample_trajectory(model, &x, span, n, cfg).unwrap().states
}

fn setup() -> &'static Setup {
    static SETUP: OnceLock<Setup> = OnceLock::new();
    SETUP.get_or_init(|| {
        let model = FlowModel::lorenz();
        let cfg = IntegratorConfig::rk4(1e-3);
        let mut net: Vec<StateVector> = Vec::new();
        for p in attractor_points(&model, &cfg, 20.0, 100.0, 10_001) {
            if net.iter().all(|c| c.distance(&p) > 0.5) {
                net.push(p);
            }
        }
        let mut calib = CalibrationConfig::new(EPSILON / 2.0);
        calib.time_samples = N_T;
        let radii = calibrate_centers(&model, &net, HORIZON, EPSILON, &cfg, &calib).unwrap();
        let cover = minimal_cover(&net, &radii, &net).unwrap();
        let lib = build_segments(&model, &cover, HORIZON, N_T, EPSILON, &cfg).unwrap();
        let partition = Partition::new(cover);
        let (gamma, _) = estimate_transitions(&model, &partition, HORIZON, 50, &cfg, 3).unwrap();
        // starts further along the same orbit, none of them a centre
        let starts = attractor_points(&model, &cfg, 130.0, 60.0, 401);
        Setup {
            model,
            cfg,
            partition,
            lib,
            gamma,
            starts,
        }
    })
}

fn encodings(s: &Setup) -> Vec<(StateVector, SymbolSequence)> {
    s.starts
        .iter()
        .filter_map(|x| {
            encode_orbit(&s.model, &s.partition, x, WORD_LEN, HORIZON, &s.cfg)
                .ok()
                .map(|w| (x.clone(), w))
        })
        .collect()
}

#[test]
fn complete_encodings_shadow_within_epsilon() {
    let s = setup();
    let words = encodings(s);
    let complete: Vec<_> = words.iter().filter(|(_, w)| w.complete).collect();
    assert!(
        complete.len() >= 50,
        "only {} of {} encodings complete",
        complete.len(),
        words.len()
    );
    for (x0, w) in &words {
        let eta = reconstruct_pseudo_orbit(&s.lib, w).unwrap();
        let profile = shadowing_profile(&s.model, x0, &eta, &s.cfg).unwrap();
        let worst = profile.iter().copied().fold(0.0, f64::max);
        assert!(worst <= EPSILON + 1e-6, "shadowing error {worst} for word {:?}", w.word);
        assert_eq!(worst, shadowing_error(&s.model, x0, &eta, &s.cfg).unwrap());
    }
}

#[test]
fn shift_commutes_with_encoding() {
    let s = setup();
    for x0 in s.starts.iter().step_by(4) {
        if s.partition.assign_cell(x0).is_none() {
            continue;
        }
        match commutation_check(&s.model, &s.partition, x0, WORD_LEN, HORIZON, &s.cfg) {
            Ok(r) => assert!(r.holds),
            Err(segdyn::Error::StartOutsidePartition { .. }) => {}
            Err(e) => panic!("{e}"),
        }
    }
}

#[test]
fn encodings_agree_with_half_step_integration() {
    let s = setup();
    let fine = IntegratorConfig::rk4(5e-4);
    let mut compared = 0;
    for (x0, w) in encodings(s).iter().take(100) {
        let v = encode_orbit(&s.model, &s.partition, x0, WORD_LEN, HORIZON, &fine).unwrap();
        let common = w.len().min(v.len());
        assert_eq!(w.word[..common], v.word[..common]);
        compared += common;
    }
    assert!(compared > 0);
}

#[test]
fn energy_stays_inside_reachable_bounds() {
    let s = setup();
    let env = segment_envelope(&s.lib, &QuantitySpec::Energy).unwrap();
    let slack = QuantitySpec::Energy.lipschitz_slack(library_radius(&s.lib), EPSILON);
    let mut checked = 0;
    for (x0, w) in encodings(s) {
        if !w.word.windows(2).all(|p| s.gamma.is_admissible(p[0], p[1])) {
            continue;
        }
        let b = reachable_bounds(&env, &s.gamma, w.word[0], w.len()).unwrap();
        for x in true_orbit_windows(&s.model, &x0, w.len(), HORIZON, N_T, &s.cfg)
            .unwrap()
            .iter()
            .flatten()
        {
            let q = QuantitySpec::Energy.evaluate(x);
            assert!(
                q >= b.q_lo - slack && q <= b.q_hi + slack,
                "Q = {q} outside [{}, {}]",
                b.q_lo,
                b.q_hi
            );
        }
        checked += 1;
    }
    assert!(checked > 0);
}
