use ddmhe_core::analysis::learning_errors;
use ddmhe_core::estimators::learn_ddmhe;
use ddmhe_core::offline::{collect_offline, CollectionPlan};
use ddmhe_core::{LtiSystem, NoiseSpec};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Median learning errors (ΔΦ, ΔG, ΔH) over `trials` independent datasets.
fn medians(segments: usize, trials: u64, base: u64) -> [f64; 3] {
    let sys = LtiSystem::sea();
    let noise = NoiseSpec {
        sigma_w: 0.002,
        sigma_v: 0.002,
        sigma_chi: 0.01,
        sigma_u: 10.0,
        sigma_x0: 1.0,
        ..NoiseSpec::zero()
    };
    let errs: Vec<_> = (0..trials)
        .map(|j| {
            let ds = collect_offline(
                &sys,
                &CollectionPlan::new(segments, 10),
                &noise,
                base + 1000 * j,
            )
            .unwrap();
            learning_errors(&learn_ddmhe(&ds).unwrap(), &sys).unwrap()
        })
        .collect();
    [
        median(errs.iter().map(|e| e.delta_phi).collect()),
        median(errs.iter().map(|e| e.delta_g).collect()),
        median(errs.iter().map(|e| e.delta_h).collect()),
    ]
}

#[test]
fn quadrupling_samples_roughly_halves_errors() {
    let small = medians(200, 20, 1);
    let large = medians(800, 20, 7);
    for (name, (s, l)) in ["delta_Phi", "delta_G", "delta_H"]
        .iter()
        .zip(small.iter().zip(&large))
    {
        let ratio = l / s;
        assert!(
            (0.3..=0.7).contains(&ratio),
            "{name}: {s:e} -> {l:e}, ratio {ratio}"
        );
    }
}

#[test]
fn errors_shrink_along_the_grid() {
    let seq: Vec<f64> = [50, 150, 450, 950]
        .iter()
        .map(|&n| medians(n, 10, 3)[1])
        .collect();
    assert!(seq.windows(2).all(|w| w[1] < w[0]), "{seq:?}");
}
