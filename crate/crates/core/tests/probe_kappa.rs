use battfdd_core::basis::MultiIndexBasis;
use battfdd_core::correction::{plateau_reached, run_online, settle_step, OnlineOptions, WindowSpec};
use battfdd_core::galerkin::{assemble, UncertainInput};
use battfdd_core::scenario::{default_modes, ModeLabel, ModeSchedule, SynthesisSpec, synthesize, MODE_LABELS};
use battfdd_core::thermal::BatteryParams;

#[test]
fn probe_figure9_matrix() {
    let params = BatteryParams::default();
    let true_modes = default_modes();
    let basis = MultiIndexBasis::new(2, 2).unwrap();
    for mismatch_seed in [1u64, 23] {
        let assumed = true_modes.with_mean_mismatch(10.0, mismatch_seed);
        for label in MODE_LABELS {
            for trace_seed in [0x7ea1u64, 0xbeef] {
                let m = assumed.get(label);
                let sys = assemble(&params,
                    UncertainInput::new(m.current_mean, m.current_std, 0),
                    UncertainInput::new(m.r_cond_mean, m.r_cond_std, 1), &basis).unwrap();
                let trace = synthesize(&ModeSchedule::single(label), &true_modes, &params,
                    &SynthesisSpec { dt: 60.0, t_end: 160.0 * 60.0, noise_pct: 2.0, perturbation_hold: 60.0, seed: trace_seed + label.index() as u64 }).unwrap();
                let opts = OnlineOptions { init_gains: (0.05, 0.5), ..OnlineOptions::default() };
                let run = run_online(&trace, &WindowSpec::default(), &sys, &opts).unwrap();
                let mc = run.gains.mu_core_series();
                let ms = run.gains.mu_surf_series();
                let ok = plateau_reached(&mc) && plateau_reached(&ms) && settle_step(&ms) < settle_step(&mc);
                println!("mis {mismatch_seed} {label} trace {trace_seed:#x}: plateau ({}, {}), settle core {} surf {} {}",
                    plateau_reached(&mc), plateau_reached(&ms), settle_step(&mc), settle_step(&ms), if ok { "OK" } else { "--" });
            }
        }
    }
}
