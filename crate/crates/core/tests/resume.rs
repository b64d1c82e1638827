use capinn::container::Container;
use capinn::mathcore::Rng;
use capinn::network::{init_glorot, ParamSet};
use capinn::optim::{BaseKind, CaConfig, OptimConfig, Optimizer};
use capinn::pde::{pinn_loss_grad, sample_domain, LossOptions, Problem, SamplePlan, Samples};
use capinn::trainer::{checkpoint, train, TrainConfig};

fn setup() -> (Problem, capinn::network::MlpSpec, Samples, ParamSet) {
    let p = Problem::heat(2);
    let spec = p.mlp_spec(12, 2, 10);
    let plan = SamplePlan::new(48, 16, 16);
    let samples = sample_domain(&p, &plan, &mut plan.train_rng(2));
    let init = init_glorot(&spec, &mut Rng::new(2));
    (p, spec, samples, init)
}

#[test]
fn checkpoint_resume_continues_bit_for_bit() {
    let (p, spec, samples, init) = setup();
    let opts = LossOptions::default();
    for kind in [BaseKind::Adamw, BaseKind::Muon, BaseKind::Soap] {
        let cfg = OptimConfig::new(kind).with_ca(CaConfig::default());
        let steps = |opt: &mut Optimizer, params: &mut ParamSet, n: usize| {
            for _ in 0..n {
                let (_, g) = pinn_loss_grad(&spec, params, &p, &samples, &opts).unwrap();
                opt.step(params, &g, 2e-3).unwrap();
            }
        };

        let mut straight = init.clone();
        let mut opt = Optimizer::new(&cfg).unwrap();
        steps(&mut opt, &mut straight, 30);

        let mut first = init.clone();
        let mut opt = Optimizer::new(&cfg).unwrap();
        steps(&mut opt, &mut first, 12);
        let bytes = checkpoint(&spec, &first, &opt, 0).to_bytes();
        let c = Container::from_bytes(&bytes).unwrap();
        let mut resumed = ParamSet::from_container(&c, &spec).unwrap();
        let mut opt = Optimizer::load_state(&c, resumed.layout()).unwrap();
        assert_eq!(opt.step_count(), 12);
        steps(&mut opt, &mut resumed, 18);

        assert_eq!(straight.to_flat(), resumed.to_flat(), "{}", kind.name());
    }
}

#[test]
fn short_training_run_reduces_the_loss() {
    let (p, spec, _, _) = setup();
    let plan = SamplePlan::new(128, 32, 32);
    let mut cfg = TrainConfig::new(
        400,
        1e-2,
        OptimConfig::new(BaseKind::Adamw).with_ca(CaConfig::default()),
    );
    cfg.eval_every = 400;
    let res = train(&spec, &p, &plan, &cfg, 0, None, &mut ()).unwrap();
    let first = res.history.first().unwrap().loss.total;
    let last = res.history.last().unwrap().loss.total;
    assert_eq!(res.history.len(), 400);
    assert!(last < first / 10.0, "{first} -> {last}");
    assert_eq!(res.violations.total(), 0);
}
