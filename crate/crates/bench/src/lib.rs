//! Shared fixtures for the benchmarks.

use wtpgmr::dataio::gen_reaching;
use wtpgmr::relevance::{fit_step_gaussians, relevance_profile, StepGaussians};
use wtpgmr::tpmodel::fit_em;
use wtpgmr::{Dataset, EmConfig, RelevanceProfile, TaskFrame, TpGmm};

pub struct Fixture {
    pub dataset: Dataset,
    pub model: TpGmm,
    pub step_gaussians: StepGaussians,
    pub profile: RelevanceProfile,
    pub times: Vec<f64>,
    /// Start frame well outside the demonstrated region, demo goal frame.
    pub frames: Vec<TaskFrame>,
}

/// Reaching data (M = 4, T = `steps`) with a fitted K = 3 model.
pub fn reaching(steps: usize) -> Fixture {
    let dataset = gen_reaching(4, steps, 7, 0.001).expect("generator");
    let model = fit_em(&dataset, 3, &EmConfig::default()).expect("em").model;
    let step_gaussians = fit_step_gaussians(&dataset).expect("step gaussians");
    let profile = relevance_profile(&step_gaussians, -2.0, 11.min(steps | 1)).expect("profile");
    let times = dataset.require_aligned().expect("aligned");
    let goal = dataset.demos()[0].frames[1].clone();
    Fixture {
        dataset,
        model,
        step_gaussians,
        profile,
        times,
        frames: vec![TaskFrame::planar(3.0, -2.0, 0.7), goal],
    }
}
