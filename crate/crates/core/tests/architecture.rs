//! Gray-box attack through a network of the wrong width.

use std::sync::Arc;

use bayes_evasion::baselines::{graybox_attack, GrayboxProblem, ModelEnsemble};
use bayes_evasion::bayes::{
    BnnArch, BnnHead, Dataset, McmcChain, ParamDraw, ParamPrior, PosteriorBackend, PredictiveModel, Predictor,
    RwmSettings,
};
use bayes_evasion::feasible::{FeasibleSet, Norm};
use bayes_evasion::functional::Response;
use bayes_evasion::harness::{gen_synthetic, SynthSpec};
use bayes_evasion::point::{run_point_attack, PointAttackProblem, SgdSettings, StepSchedule};
use bayes_evasion::rng::SeedTree;
use bayes_evasion::stats::mean_se;
use bayes_evasion::Vector;
use rayon::prelude::*;

fn bnn(hidden: usize) -> PredictiveModel {
    PredictiveModel::SmallBnn(BnnArch { input_dim: 2, hidden, head: BnnHead::Regression })
}

fn fit(model: PredictiveModel, data: &Arc<Dataset>, tree: SeedTree) -> (Predictor, Vec<ParamDraw>) {
    let chain = McmcChain::for_model(
        model,
        data.clone(),
        ParamPrior { weight_sd: 1.0, noise_gamma: Some((2.0, 1.0)) },
        RwmSettings { burn_in: 10_000, thin: 10, initial_step: 0.05, target_accept: 0.3 },
    )
    .unwrap();
    let bank = chain.run(300, &mut tree.rng(0)).draws;
    (Predictor::new(model, PosteriorBackend::sample_bank(bank.clone()).unwrap()), bank)
}

fn bank_mean(model: &PredictiveModel, bank: &[ParamDraw], x: &Vector) -> f64 {
    bank.iter().map(|d| model.mean(x, d).unwrap()).sum::<f64>() / bank.len() as f64
}

#[test]
fn narrower_attacker_network_attacks_worse() {
    let target = 3.0;
    let x = Vector::from_vec(vec![0.5, 0.0]);
    let pairs: Vec<(f64, f64)> = (0..10u64)
        .into_par_iter()
        .map(|s| {
            let tree = SeedTree::new(404).child(s);
            let spec = SynthSpec { n: 100, ..SynthSpec::default() };
            let data = Arc::new(gen_synthetic(&spec, &mut tree.rng(0)).unwrap());
            let (defender, bank) = fit(bnn(5), &data, tree.child(1));
            let (attacker, _) = fit(bnn(3), &data, tree.child(2));
            let prob = PointAttackProblem::new(
                Arc::new(Response),
                Vector::from_element(1, target),
                FeasibleSet::new(x.clone(), 1.0, Norm::L2).unwrap(),
                SgdSettings { eta: 0.02, iterations: 400, schedule: StepSchedule::Cosine, ..Default::default() },
                16,
                16,
            )
            .unwrap();
            let stream = tree.child(3);
            let white = run_point_attack(&prob, &defender, &mut stream.rng(0)).unwrap().final_x;
            let gray = graybox_attack(GrayboxProblem::Point(&prob), &ModelEnsemble::single(attacker), &mut stream.rng(0))
                .unwrap()
                .final_x;
            let model = bnn(5);
            let res = |xa: &Vector| (bank_mean(&model, &bank, xa) - target).powi(2);
            (res(&white), res(&gray))
        })
        .collect();
    let (white, gray): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let (mw, sw) = mean_se(&white);
    let (mg, sg) = mean_se(&gray);
    let clean = {
        let tree = SeedTree::new(404).child(0);
        let data = Arc::new(gen_synthetic(&SynthSpec { n: 100, ..SynthSpec::default() }, &mut tree.rng(0)).unwrap());
        let (_, bank) = fit(bnn(5), &data, tree.child(1));
        (bank_mean(&bnn(5), &bank, &x) - target).powi(2)
    };
    println!("clean {clean:.4}, white {mw:.4} ± {sw:.4}, gray {mg:.4} ± {sg:.4}");
    assert!(mw < clean, "the white-box attack makes progress");
    assert!(mg >= mw, "white {mw} ± {sw}, gray {mg} ± {sg}");
}
