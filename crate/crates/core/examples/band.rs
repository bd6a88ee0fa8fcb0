use ratelab_core::baselines::{run_controller, Controller, FixedLambdaPolicy};
use ratelab_core::env::{Action, CodecEnv, CodecProfile, CouplingParams, EnvState, SequenceSpec, SynthEnv};

struct FixedAction(Action);
impl Controller for FixedAction {
    fn reset(&mut self) {}
    fn decide(&mut self, _env: &dyn CodecEnv, _s: &EnvState) -> Action { self.0 }
}

fn main() {
    let profile = CodecProfile::default();
    let coupling = CouplingParams::default();
    let mut mins = Vec::new();
    let mut maxs = Vec::new();
    let mut mids = Vec::new();
    for seed in 0..60u64 {
        let env = SynthEnv::from_spec(
            &SequenceSpec::default().with_seed(seed).with_frames(32),
            coupling, profile, 20.0, true).unwrap();
        let lo = run_controller(&env, &mut FixedAction(Action { lambda: 256.0, m: 0.5 })).unwrap();
        let hi = run_controller(&env, &mut FixedAction(Action { lambda: 2048.0, m: 1.0 })).unwrap();
        let mid = run_controller(&env, &mut FixedLambdaPolicy::new(724.0, &profile).unwrap()).unwrap();
        mins.push(lo.avg_bpp);
        maxs.push(hi.avg_bpp);
        mids.push(mid.avg_bpp);
    }
    mins.sort_by(f64::total_cmp);
    maxs.sort_by(f64::total_cmp);
    mids.sort_by(f64::total_cmp);
    println!("min achievable (lam256,m0.5): lo {:.2} med {:.2} hi {:.2}", mins[0], mins[30], mins[59]);
    println!("max achievable (lam2048,m1):  lo {:.2} med {:.2} hi {:.2}", maxs[0], maxs[30], maxs[59]);
    println!("mid lambda=724,m=1:           lo {:.2} med {:.2} hi {:.2}", mids[0], mids[30], mids[59]);
    println!("feasible band across all seeds: [{:.2}, {:.2}]", mins[59], maxs[0]);

    // anchor sweep medians
    for lambda in [256.0, 512.0, 1024.0, 2048.0] {
        let mut v = Vec::new();
        for seed in 0..60u64 {
            let env = SynthEnv::from_spec(
                &SequenceSpec::default().with_seed(seed).with_frames(32),
                coupling, profile, 20.0, true).unwrap();
            let run = run_controller(&env, &mut FixedLambdaPolicy::new(lambda, &profile).unwrap()).unwrap();
            v.push(run.avg_bpp);
        }
        v.sort_by(f64::total_cmp);
        println!("lambda {lambda}: med bpp {:.2}  range [{:.2}, {:.2}]", v[30], v[0], v[59]);
    }
}
