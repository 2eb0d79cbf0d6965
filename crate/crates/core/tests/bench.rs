use std::path::PathBuf;

use sunny_core::bench::{cross_validate, cross_validate_with_plan, simulate_run, FoldPlan};
use sunny_core::executor::ExecutorConfig;
use sunny_core::kb::{load_dir, neighbours_of_kind, KnowledgeBase, Outcome, ProblemInstance, SolverRecord};
use sunny_core::par::ExecMode;
use sunny_core::scheduler::{ParallelSchedule, Schedule};
use sunny_core::synth;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

/// Ten copies of the four-instance block, all with identical features.
fn blocks() -> KnowledgeBase {
    let base = load_dir(data("table1")).unwrap();
    let mut instances = Vec::new();
    let mut records = Vec::new();
    for b in 0..10 {
        for (i, p) in base.instances().iter().enumerate() {
            let id = format!("{}_{b}", p.id);
            instances.push(ProblemInstance::csp(id.clone(), vec![0.0, 0.0]));
            records.extend(base.records(i).iter().map(|r| (id.clone(), r.clone())));
        }
    }
    KnowledgeBase::new(instances, base.portfolio().to_vec(), records, 1800.0).unwrap()
}

#[test]
fn worked_example_schedule_per_instance() {
    let kb = blocks();
    let plan = FoldPlan::from_folds(40, (0..10).map(|b| (4 * b..4 * b + 4).collect()).collect()).unwrap();
    let cfg = ExecutorConfig { k: 36, simulated_overhead: 0.0, ..ExecutorConfig::default() };
    let report = cross_validate_with_plan(&kb, &plan, &[1], &cfg, ExecMode::Sequential).unwrap();
    let expected = ParallelSchedule::single(Schedule::from_pairs([("s4", 720.0), ("s1", 720.0), ("s2", 360.0)]).unwrap());
    for (i, sched) in report.core(1).unwrap().schedules.iter().enumerate() {
        let got = sched.as_ref().unwrap();
        assert_eq!(got.num_cores(), 1);
        let slots = got.core(1).slots();
        let want = expected.core(1).slots();
        assert_eq!(slots.len(), want.len(), "instance {i}");
        for (a, b) in slots.iter().zip(want) {
            assert_eq!(a.solver, b.solver);
            assert!((a.time - b.time).abs() < 1e-3);
        }
    }
    // p1 by s2 at 1440 + 593 > T; p2 by s1 at 720 + 3; p3 by s4 at 122; p4 by s4 at 60
    let sunny = &report.core(1).unwrap().strategies[0];
    let times: Vec<f64> = sunny.per_instance[..4].iter().map(|v| v.time).collect();
    assert_eq!(times, vec![1800.0, 723.0, 122.0, 60.0]);
}

#[test]
fn dominant_solver_gives_full_coverage() {
    let mut instances = Vec::new();
    let mut records = Vec::new();
    for i in 0..20 {
        let id = format!("i{i}");
        instances.push(ProblemInstance::csp(id.clone(), vec![i as f64, (i % 3) as f64]));
        records.push((id.clone(), SolverRecord::new("fast", Outcome::Sat, 0.5)));
        records.push((id.clone(), SolverRecord::new("slow", Outcome::Unk, 1800.0)));
    }
    let kb = KnowledgeBase::new(instances, vec!["slow".into(), "fast".into()], records, 1800.0).unwrap();
    let report = cross_validate(&kb, &[1, 2, 4, 8], &ExecutorConfig::default(), 3).unwrap();
    for r in &report.results {
        assert_eq!(r.strategies[0].aggregate.proven, 100.0, "cores {}", r.cores);
    }
}

#[test]
fn same_seed_same_report() {
    let kb = synth::cop_kb(5, 40, 4, 1800.0);
    let cfg = ExecutorConfig::default();
    let a = cross_validate(&kb, &[1, 2], &cfg, 11).unwrap();
    let b = cross_validate(&kb, &[1, 2], &cfg, 11).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.to_csv(), b.to_csv());
    let plan = FoldPlan::random(kb.len(), 10, 11).unwrap();
    let seq = cross_validate_with_plan(&kb, &plan, &[1, 2], &cfg, ExecMode::Sequential).unwrap();
    assert_eq!(a.to_csv(), seq.to_csv());
}

#[test]
fn two_cores_never_worse_on_synthetic_base() {
    let kb = synth::csp_kb(21, 40, 6, 1800.0);
    let report = cross_validate(&kb, &[1, 2], &ExecutorConfig::default(), 1).unwrap();
    let one = &report.core(1).unwrap().strategies[0];
    let two = &report.core(2).unwrap().strategies[0];
    assert!(two.aggregate.proven >= one.aggregate.proven);
    for (a, b) in one.per_instance.iter().zip(&two.per_instance) {
        assert!(b.proven || !a.proven);
    }
}

#[test]
fn test_instances_do_not_leak_into_neighbourhoods() {
    let kb = synth::csp_kb(2, 30, 4, 1800.0);
    let plan = FoldPlan::random(kb.len(), 10, 4).unwrap();
    for (f, fold) in plan.folds().iter().enumerate() {
        let training = kb.restrict(&plan.training(f));
        let (i, j) = (fold[0], fold[1]);
        let p = &kb.instances()[i];
        let before = neighbours_of_kind(p, &training, 10).unwrap();
        let reduced = kb.without(&kb.instances()[j].id);
        let keep: Vec<usize> = plan
            .training(f)
            .iter()
            .map(|&t| reduced.instance_index(&kb.instances()[t].id).unwrap())
            .collect();
        let after = neighbours_of_kind(p, &reduced.restrict(&keep), 10).unwrap();
        assert_eq!(before, after);
    }
}

#[test]
fn csv_layout() {
    let kb = synth::cop_kb(1, 20, 3, 1800.0);
    let report = cross_validate(&kb, &[1, 2], &ExecutorConfig::default(), 0).unwrap();
    let csv = report.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "cores,strategy,proven (%),time (s),score x 100,area (s)");
    let names: Vec<&str> = lines.map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(&names[..6], ["sunny(1)", "vps(1)", "vbs", "s0", "s1", "s2"]);
    assert_eq!(names.len(), 12);
}

#[test]
fn simulate_single_unknown_solver() {
    let kb = load_dir(data("table1")).unwrap();
    let sched = ParallelSchedule::single(Schedule::from_pairs([("s1", 1800.0)]).unwrap());
    let r = simulate_run("p1", &sched, &kb, &ExecutorConfig::default()).unwrap();
    assert_eq!(r.outcome, Outcome::Unk);
    assert_eq!(r.wall_time, 1800.0);
    assert!(simulate_run("nope", &sched, &kb, &ExecutorConfig::default()).is_err());
}

#[test]
fn simulate_worked_schedule_on_p3() {
    let kb = load_dir(data("table1")).unwrap();
    let sched =
        ParallelSchedule::single(Schedule::from_pairs([("s4", 720.0), ("s1", 720.0), ("s2", 360.0)]).unwrap());
    let r = simulate_run("p3", &sched, &kb, &ExecutorConfig::default()).unwrap();
    assert_eq!((r.outcome, r.wall_time, r.winner.as_deref()), (Outcome::Sat, 122.0, Some("s4")));
}
