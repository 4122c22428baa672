use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::{json, Value};
use thbsgs::ckks::serial::Container;
use thbsgs::ckks::CkksContext;
use thbsgs::costmodel::{self, Category, NamedSet, ParallelismConfig};
use thbsgs::dpsim::{self, ComputeInputs};
use thbsgs::helt::{lt_equivalence_check, DiagMatrix, LtEvaluator, LtPlan, LtSession, OpTrace};
use thbsgs::ring::Domain;

use crate::run::{Format, RunConfig};
use crate::Outcome;

pub const BANNER: &str = "NOT FOR PRODUCTION CRYPTOGRAPHY: toy parameters, non-hardened arithmetic";

fn emit(rc: &RunConfig, text: &str) -> anyhow::Result<()> {
    match &rc.out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn factors_str(f: &[usize]) -> String {
    f.iter().map(usize::to_string).collect::<Vec<_>>().join("x")
}

fn params_json(rc: &RunConfig) -> Value {
    let p = &rc.params;
    json!({
        "name": rc.set.map(|s| s.name()),
        "ring_dim": p.ring_dim,
        "q_count": p.q_count,
        "alpha": p.alpha,
        "beta": p.beta,
        "w": p.w,
        "n": p.n,
    })
}

fn trace_json(t: &OpTrace) -> Value {
    json!({
        "decompose": t.decompose,
        "moddown": t.moddown,
        "rescale": t.rescale,
        "key_switches": t.key_switches,
        "distinct_keys": t.distinct_keys(),
        "cwise_mult_limbs": t.cwise_mult_limbs,
    })
}

fn random_matrix(n: usize, rng: &mut ChaCha20Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect())
        .collect()
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

pub fn demo(
    rc: &RunConfig,
    compare: bool,
    identity_matrix: bool,
    pairwise_tolerance: Option<f64>,
) -> anyhow::Result<Outcome> {
    let compare = rc.flag(compare, "compare")?;
    let identity_matrix = rc.flag(identity_matrix, "identity")?;
    let pairwise_tolerance = rc.value(pairwise_tolerance, "pairwise-tolerance")?.unwrap_or(1e-4);
    let plans = rc.plans()?;
    let ctx = CkksContext::new(rc.ckks_params()?)?;
    eprintln!("{BANNER}");
    let n = rc.params.n;
    let mut session = LtSession::new(ctx, &plans, rc.seed)?;
    // Data comes from its own stream so adding a method does not change it.
    let mut rng = ChaCha20Rng::seed_from_u64(rc.seed ^ 0x5eed_da7a);
    let f = if identity_matrix {
        identity(n)
    } else {
        random_matrix(n, &mut rng)
    };
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let start = Instant::now();
    let report = lt_equivalence_check(&mut session, &f, &v, &plans)?;
    for r in &report.runs {
        eprintln!("{}: {:.3} s", r.plan, r.seconds);
    }
    eprintln!("total: {:.3} s", start.elapsed().as_secs_f64());

    let errors_ok = report.runs.iter().all(|r| r.max_error < rc.tolerance);
    let show_pairs = compare || plans.len() > 1;
    let pairs_ok = !compare || report.max_pairwise() < pairwise_tolerance;
    let passed = errors_ok && pairs_ok;
    let text = match rc.format {
        Format::Json => {
            let runs: Vec<Value> = report
                .runs
                .iter()
                .map(|r| {
                    json!({
                        "plan": r.plan,
                        "method": r.method.name(),
                        "factors": r.factors,
                        "max_error": r.max_error,
                        "pass": r.max_error < rc.tolerance,
                        "trace": trace_json(&r.trace),
                    })
                })
                .collect();
            let mut doc = json!({
                "banner": BANNER,
                "params": params_json(rc),
                "seed": rc.seed,
                "identity": identity_matrix,
                "tolerance": rc.tolerance,
                "runs": runs,
                "passed": passed,
            });
            if show_pairs {
                doc["pairwise"] = report
                    .pairwise
                    .iter()
                    .map(|&(i, j, d)| json!({"a": report.runs[i].plan, "b": report.runs[j].plan, "max_diff": d}))
                    .collect();
                doc["max_pairwise"] = json!(report.max_pairwise());
                doc["pairwise_tolerance"] = json!(pairwise_tolerance);
            }
            json_text(&doc)
        }
        Format::Csv => {
            let mut s = format!("# {BANNER}\n");
            s.push_str("plan,method,factors,max_error,decompose,moddown,rescale,key_switches,distinct_keys,cwise_mult_limbs,pass\n");
            for r in &report.runs {
                let t = &r.trace;
                writeln!(
                    s,
                    "{},{},{},{:.6e},{},{},{},{},{},{},{}",
                    r.plan.replace(',', "x"),
                    r.method.name(),
                    factors_str(&r.factors),
                    r.max_error,
                    t.decompose,
                    t.moddown,
                    t.rescale,
                    t.key_switches,
                    t.distinct_keys(),
                    t.cwise_mult_limbs,
                    r.max_error < rc.tolerance
                )?;
            }
            if show_pairs {
                for &(i, j, d) in &report.pairwise {
                    writeln!(
                        s,
                        "# pairwise,{},{},{d:.6e}",
                        report.runs[i].plan.replace(',', "x"),
                        report.runs[j].plan.replace(',', "x")
                    )?;
                }
            }
            s
        }
    };
    emit(rc, &text)?;
    eprintln!("{}", if passed { "PASS" } else { "FAIL" });
    Ok(if passed { Outcome::Pass } else { Outcome::Fail })
}

pub fn analyze(rc: &RunConfig) -> anyhow::Result<Outcome> {
    let conv = rc.convention()?;
    let p = &rc.params;
    let mut rows = Vec::new();
    let mut ratio = None;
    if rc.factors.is_some() {
        let plan = rc.plan(rc.single_method()?)?;
        rows.push((costmodel::complexity(p, &plan, conv, rc.packing)?, false, false));
    } else {
        let points = costmodel::tradeoff_curve(&rc.method.methods(), p, rc.packing)?;
        ratio = costmodel::best_tradeoff_ratio(&points);
        for t in points {
            let plan = LtPlan::new(t.method, p.n, &t.factors)?;
            rows.push((
                costmodel::complexity(p, &plan, conv, rc.packing)?,
                t.min_memory,
                t.best_tradeoff,
            ));
        }
    }
    let text = match rc.format {
        Format::Json => {
            let points: Vec<Value> = rows
                .iter()
                .map(|(c, mm, bt)| {
                    json!({
                        "method": c.method.name(),
                        "factors": c.factors,
                        "decompose": c.decompose,
                        "moddown": c.moddown,
                        "key_limbs": c.switching_key_limbs,
                        "key_bytes": c.key_bytes,
                        "modmuls": c.modmuls,
                        "min_memory": mm,
                        "best_tradeoff": bt,
                    })
                })
                .collect();
            json_text(&json!({
                "params": params_json(rc),
                "points": points,
                "dh_th_key_ratio": ratio,
            }))
        }
        Format::Csv => {
            let mut s = String::from(
                "method,factors,decompose,moddown,key_limbs,key_bytes,modmuls,min_memory,best_tradeoff\n",
            );
            for (c, mm, bt) in &rows {
                writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{}",
                    c.method.name(),
                    factors_str(&c.factors),
                    c.decompose,
                    c.moddown,
                    c.switching_key_limbs,
                    c.key_bytes,
                    c.modmuls,
                    mm,
                    bt
                )?;
            }
            if let Some(r) = ratio {
                writeln!(s, "# dh_th_key_ratio,{r:.4}")?;
            }
            s
        }
    };
    emit(rc, &text)?;
    Ok(Outcome::Pass)
}

fn th_plan(rc: &RunConfig) -> anyhow::Result<LtPlan> {
    match rc.method {
        crate::run::MethodSel::One(thbsgs::helt::Method::ThBsgs) => rc.plan(thbsgs::helt::Method::ThBsgs),
        _ => bail!("the datapath runs th-bsgs only"),
    }
}

pub fn simulate(rc: &RunConfig, compute: bool, emit_ct: Option<&Path>) -> anyhow::Result<Outcome> {
    let compute = rc.flag(compute, "compute")?;
    if emit_ct.is_some() && !compute {
        bail!("--emit-ciphertext needs --compute");
    }
    let plan = th_plan(rc)?;
    let config = rc.parallelism(&plan)?;
    let p = &rc.params;
    let mut outcome = Outcome::Pass;
    let mut extra = serde_json::Map::new();
    let report = if compute {
        let ctx = CkksContext::new(rc.ckks_params()?)?;
        eprintln!("{BANNER}");
        let mut session = LtSession::new(ctx, std::slice::from_ref(&plan), rc.seed)?;
        let mut rng = ChaCha20Rng::seed_from_u64(rc.seed ^ 0x5eed_da7a);
        let f = random_matrix(p.n, &mut rng);
        let v: Vec<f64> = (0..p.n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let ct = session.encrypt_vector(&v, p.n)?;
        let ctx = &session.ctx;
        let diags = DiagMatrix::diagonalize(&f, ctx.slots())?.encode(ctx, &plan)?;
        let (reference, _) = LtEvaluator::new(ctx, &session.keys).th_bsgs(&ct, &diags, &plan)?;
        let inputs = ComputeInputs {
            ctx,
            ct: &ct,
            keys: &session.keys,
            diags: &diags,
        };
        let r = dpsim::simulate(p, &plan, &config, Some(&inputs))?;
        let out = r.output.as_ref().expect("compute mode");
        let same = out == &reference;
        let got = session.decrypt_vector(out, p.n)?;
        let err = thbsgs::helt::max_abs_diff(&got, &thbsgs::helt::mat_vec(&f, &v));
        if !same || err >= rc.tolerance {
            outcome = Outcome::Fail;
        }
        extra.insert("bit_exact_with_reference".into(), json!(same));
        extra.insert("max_error".into(), json!(err));
        extra.insert("trace".into(), trace_json(&r.trace));
        if let Some(path) = emit_ct {
            std::fs::write(path, ctx.serialize_ciphertext(out))
                .with_context(|| format!("writing {}", path.display()))?;
        }
        r
    } else {
        dpsim::simulate(p, &plan, &config, None)?
    };
    let rounds = report.meter.rounds;
    let text = match rc.format {
        Format::Json => {
            let phases: Vec<Value> = report
                .meter
                .phases
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    let mut m = serde_json::Map::new();
                    m.insert("phase".into(), json!(i + 1));
                    for c in Category::ALL {
                        m.insert(c.name().into(), json!(row.get(c)));
                    }
                    m.insert("offchip".into(), json!(row.offchip()));
                    m.insert("peak_onchip".into(), json!(row.peak_onchip));
                    m.insert("rounds".into(), json!(rounds[i]));
                    Value::Object(m)
                })
                .collect();
            let mut doc = json!({
                "params": params_json(rc),
                "plan": plan.to_string(),
                "parallelism": config.to_string(),
                "dp": config.dp,
                "mode": if compute { "compute" } else { "count_only" },
                "unit": "limbs",
                "phases": phases,
                "offchip_total": report.meter.offchip_total(),
            });
            doc.as_object_mut().expect("object").extend(extra);
            json_text(&doc)
        }
        Format::Csv => {
            let mut s = String::from("phase");
            for c in Category::ALL {
                s.push(',');
                s.push_str(c.name());
            }
            s.push_str(",offchip,peak_onchip,rounds\n");
            for (i, row) in report.meter.phases.iter().enumerate() {
                write!(s, "{}", i + 1)?;
                for c in Category::ALL {
                    write!(s, ",{}", row.get(c))?;
                }
                writeln!(s, ",{},{},{}", row.offchip(), row.peak_onchip, rounds[i])?;
            }
            s
        }
    };
    emit(rc, &text)?;
    Ok(outcome)
}

pub fn validate(rc: &RunConfig, model_parallelism: Option<&str>, strict: bool) -> anyhow::Result<Outcome> {
    let strict = rc.flag(strict, "strict")?;
    let plan = th_plan(rc)?;
    let config = rc.parallelism(&plan)?;
    let model_config = match model_parallelism {
        Some(s) => {
            let mut c = ParallelismConfig::parse_list(s)?;
            c.dp = config.dp;
            c
        }
        None => config,
    };
    let r = dpsim::compare(&rc.params, &plan, &config, &model_config)?;
    let passed = if strict { r.passed_strict() } else { r.passed() };
    let text = match rc.format {
        Format::Json => {
            let mut doc = serde_json::to_value(&r)?;
            let o = doc.as_object_mut().expect("object");
            o.insert("plan".into(), json!(plan.to_string()));
            o.insert("model_config".into(), json!(model_config.to_string()));
            o.insert("strict".into(), json!(strict));
            o.insert("passed".into(), json!(passed));
            json_text(&doc)
        }
        Format::Csv => {
            let mut s = String::from("phase,category,simulated,model,delta,whitelisted,kind\n");
            for c in &r.cells {
                let kind = match c.kind {
                    Some(dpsim::DeltaKind::OpenQuestion) => "open_question",
                    Some(dpsim::DeltaKind::ModelDeviation) => "model_deviation",
                    None => "",
                };
                writeln!(
                    s,
                    "{},{},{},{},{},{},{}",
                    c.phase, c.category, c.simulated, c.model, c.delta, c.whitelisted, kind
                )?;
            }
            s
        }
    };
    emit(rc, &text)?;
    for c in r.nonzero() {
        eprintln!(
            "phase {} {}: delta {} ({})",
            c.phase,
            c.category,
            c.delta,
            c.reason.unwrap_or("unexplained")
        );
    }
    eprintln!("{}", if passed { "PASS" } else { "FAIL" });
    Ok(if passed { Outcome::Pass } else { Outcome::Fail })
}

pub fn inspect(rc: &RunConfig, file: Option<&Path>) -> anyhow::Result<Outcome> {
    let text = match file {
        Some(path) => {
            let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            let c = Container::decode(&bytes)?;
            let h = &c.header;
            let fields: Vec<(&str, Value)> = vec![
                ("kind", json!(h.kind.name())),
                (
                    "domain",
                    json!(match h.domain {
                        Domain::Coefficient => "coefficient",
                        Domain::Ntt => "ntt",
                    }),
                ),
                ("log_n", json!(h.log_n)),
                ("with_p", json!(h.with_p)),
                ("level", json!(h.level)),
                ("scale", json!(h.scale)),
                ("hoist_offset", json!(h.hoist_offset)),
                ("moduli", json!(h.moduli)),
                ("poly_count", json!(h.poly_count)),
                ("bytes", json!(bytes.len())),
            ];
            match rc.format {
                Format::Json => json_text(&Value::Object(
                    fields.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
                )),
                Format::Csv => {
                    let mut s = String::from("field,value\n");
                    for (k, v) in fields {
                        let v = match v {
                            Value::Array(a) => a.iter().map(Value::to_string).collect::<Vec<_>>().join(";"),
                            Value::String(x) => x,
                            other => other.to_string(),
                        };
                        writeln!(s, "{k},{v}")?;
                    }
                    s
                }
            }
        }
        None => {
            let sets: Vec<(NamedSet, costmodel::HeParams)> =
                NamedSet::ALL.iter().map(|&s| (s, s.params())).collect();
            match rc.format {
                Format::Json => json_text(&Value::Array(
                    sets.iter()
                        .map(|(s, p)| {
                            json!({
                                "name": s.name(),
                                "ring_dim": p.ring_dim,
                                "q_count": p.q_count,
                                "alpha": p.alpha,
                                "beta": p.beta,
                                "w": p.w,
                                "n": p.n,
                                "factors": s.factors(),
                                "parallelism": s.parallelism().to_string(),
                                "dp": s.parallelism().dp,
                            })
                        })
                        .collect(),
                )),
                Format::Csv => {
                    let mut s = String::from("name,ring_dim,q_count,alpha,beta,w,n,factors,parallelism,dp\n");
                    for (set, p) in &sets {
                        writeln!(
                            s,
                            "{},{},{},{},{},{},{},{},\"{}\",{}",
                            set.name(),
                            p.ring_dim,
                            p.q_count,
                            p.alpha,
                            p.beta,
                            p.w,
                            p.n,
                            factors_str(&set.factors()),
                            set.parallelism(),
                            set.parallelism().dp
                        )?;
                    }
                    s
                }
            }
        }
    };
    emit(rc, &text)?;
    Ok(Outcome::Pass)
}
