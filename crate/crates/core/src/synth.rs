//! Seeded synthetic knowledge bases for property tests and benchmarks.
//!
//! Instances fall into one feature cluster per solver; the cluster's solver
//! is fast there and the others are slow or time out.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kb::{Direction, KnowledgeBase, Outcome, ProblemInstance, SolverRecord, TracePoint};

const DIMS: usize = 4;

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn portfolio(solvers: usize) -> Vec<String> {
    (0..solvers).map(|s| format!("s{s}")).collect()
}

fn features(rng: &mut ChaCha8Rng, cluster: usize) -> Vec<f64> {
    (0..DIMS)
        .map(|d| {
            let centre = ((cluster * 7 + d * 3) % 11) as f64;
            round2(centre + rng.random_range(-1.5..1.5))
        })
        .collect()
}

/// A CSP knowledge base with `n` instances and `solvers` solvers.
pub fn csp_kb(seed: u64, n: usize, solvers: usize, timeout: f64) -> KnowledgeBase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = portfolio(solvers);
    let mut instances = Vec::with_capacity(n);
    let mut records = Vec::with_capacity(n * solvers);
    for i in 0..n {
        let cluster = rng.random_range(0..solvers);
        let id = format!("i{i:03}");
        instances.push(ProblemInstance::csp(id.clone(), features(&mut rng, cluster)));
        let answer = if rng.random_bool(0.8) { Outcome::Sat } else { Outcome::Uns };
        for (s, name) in names.iter().enumerate() {
            let time = if s == cluster {
                round2(rng.random_range(0.01..timeout * 0.1))
            } else if rng.random_bool(0.35) {
                round2(rng.random_range(timeout * 0.05..timeout * 1.3))
            } else {
                timeout
            };
            let rec = if time < timeout {
                SolverRecord::new(name.clone(), answer, time)
            } else {
                SolverRecord::new(name.clone(), Outcome::Unk, timeout)
            };
            records.push((id.clone(), rec));
        }
    }
    KnowledgeBase::new(instances, names, records, timeout).expect("synthetic CSP base is valid")
}

/// A COP knowledge base. A quarter of the instances maximize.
pub fn cop_kb(seed: u64, n: usize, solvers: usize, timeout: f64) -> KnowledgeBase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = portfolio(solvers);
    let mut instances = Vec::with_capacity(n);
    let mut records = Vec::with_capacity(n * solvers);
    for i in 0..n {
        let cluster = rng.random_range(0..solvers);
        let id = format!("i{i:03}");
        let direction = if rng.random_bool(0.25) { Direction::Maximize } else { Direction::Minimize };
        instances.push(ProblemInstance::cop(id.clone(), direction, features(&mut rng, cluster)));
        let optimum = rng.random_range(100..1000) as f64;
        let sign = if direction == Direction::Minimize { 1.0 } else { -1.0 };
        for (s, name) in names.iter().enumerate() {
            let good = s == cluster || rng.random_bool(0.2);
            if !good && rng.random_bool(0.15) {
                records.push((id.clone(), SolverRecord::new(name.clone(), Outcome::Unk, timeout)));
                continue;
            }
            let points = rng.random_range(1..6);
            let gap = if good { 0.0 } else { rng.random_range(1..200) as f64 };
            let mut offsets: Vec<f64> = sample(&mut rng, 400, points - 1).iter().map(|o| (o + 1) as f64).collect();
            offsets.sort_by(|a, b| b.total_cmp(a));
            offsets.push(0.0);
            let mut t = rng.random_range(1.0..timeout * 0.02);
            let mut trace = Vec::with_capacity(points);
            for o in offsets {
                trace.push(TracePoint { t: round2(t), v: optimum + sign * (gap + o) });
                t += rng.random_range(1.0..timeout * 0.05);
            }
            let end = trace.last().map_or(0.0, |p| p.t);
            let rec = if good {
                let proof = round2(end + rng.random_range(0.0..timeout * 0.1));
                SolverRecord::new(name.clone(), Outcome::Opt, proof.max(end))
            } else {
                SolverRecord::new(name.clone(), Outcome::Sat, timeout)
            };
            records.push((id.clone(), rec.with_trace(trace)));
        }
    }
    KnowledgeBase::new(instances, names, records, timeout).expect("synthetic COP base is valid")
}
