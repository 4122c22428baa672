use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thbsgs::ckks::{CkksContext, CkksParams};
use thbsgs::costmodel::{NamedSet, ParallelismConfig};
use thbsgs::dpsim::{self, ComputeInputs};
use thbsgs::helt::{max_abs_diff, mat_vec, DiagMatrix, LtEvaluator, LtPlan, LtSession};

fn session(plan: &LtPlan) -> LtSession {
    let ctx = CkksContext::new(CkksParams::toy()).unwrap();
    LtSession::new(ctx, std::slice::from_ref(plan), 11).unwrap()
}

fn configs() -> Vec<ParallelismConfig> {
    let mut out = vec![ParallelismConfig::ones(), NamedSet::Toy.parallelism()];
    out.push(ParallelismConfig::parse_list("3,2,2,3,7,3,2,3,4,6,1").unwrap());
    out.push(ParallelismConfig::parse_list("1,3,1,4,16,4,10,1,10,10,10").unwrap());
    for c in &mut out {
        c.dp = 4;
    }
    out
}

#[test]
fn compute_mode_is_bit_exact_with_reference() {
    let plan = LtPlan::th_bsgs(4, 4, 4).unwrap();
    let mut s = session(&plan);
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let f: Vec<Vec<f64>> = (0..64)
        .map(|_| (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let v: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let ct = s.encrypt_vector(&v, 64).unwrap();
    let diags = DiagMatrix::diagonalize(&f, s.ctx.slots())
        .unwrap()
        .encode(&s.ctx, &plan)
        .unwrap();
    let (reference, ref_trace) = LtEvaluator::new(&s.ctx, &s.keys)
        .th_bsgs(&ct, &diags, &plan)
        .unwrap();
    let p = dpsim::params_of(&s.ctx, &ct, 64).unwrap();
    let inputs = ComputeInputs {
        ctx: &s.ctx,
        ct: &ct,
        keys: &s.keys,
        diags: &diags,
    };
    for c in configs() {
        let r = dpsim::simulate(&p, &plan, &c, Some(&inputs)).unwrap();
        let out = r.output.as_ref().unwrap();
        assert_eq!(out, &reference, "config {c}");
        assert_eq!((r.trace.decompose, r.trace.moddown), (4 + 4 - 1, 4 + 4));
        assert_eq!(r.trace, ref_trace);
        let shape_only = dpsim::simulate(&p, &plan, &c, None).unwrap();
        assert_eq!(shape_only.meter, r.meter);
    }
    let got = s.decrypt_vector(&reference, 64).unwrap();
    assert!(max_abs_diff(&got, &mat_vec(&f, &v)) < 1e-3);
}

#[test]
fn compute_inputs_must_match_declared_shape() {
    let plan = LtPlan::th_bsgs(4, 4, 4).unwrap();
    let mut s = session(&plan);
    let ct = s.encrypt_vector(&[1.0; 64], 64).unwrap();
    let f: Vec<Vec<f64>> = (0..64).map(|i| (0..64).map(|j| (i == j) as u8 as f64).collect()).collect();
    let diags = DiagMatrix::diagonalize(&f, s.ctx.slots())
        .unwrap()
        .encode(&s.ctx, &plan)
        .unwrap();
    let inputs = ComputeInputs {
        ctx: &s.ctx,
        ct: &ct,
        keys: &s.keys,
        diags: &diags,
    };
    let wrong = NamedSet::SetA.params().with_n(64).unwrap();
    assert!(dpsim::simulate(&wrong, &plan, &ParallelismConfig::ones(), Some(&inputs)).is_err());
}
