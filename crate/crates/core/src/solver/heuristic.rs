//! Earliest-completion-time list scheduling plus first-improvement local
//! search with seeded restarts.

use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::problem::Problem;
use crate::model::Millis;

/// Dispatch sequence: repeatedly schedule the ready operation/machine pair
/// that would complete earliest. Ties go to the lower (job, machine) index.
pub(crate) fn dispatch(p: &Problem) -> Vec<(usize, usize)> {
    let mut next = vec![0usize; p.n_jobs()];
    let mut job_ready: Vec<Millis> = vec![0; p.n_jobs()];
    let mut mach_ready: Vec<Millis> = vec![0; p.n_machines()];
    let mut seq = Vec::with_capacity(p.n_ops());
    for _ in 0..p.n_ops() {
        let mut best: Option<(Millis, usize, usize)> = None;
        for j in 0..p.n_jobs() {
            let q = next[j];
            if q == p.stages {
                continue;
            }
            for m in 0..p.n_machines() {
                let c = job_ready[j].max(mach_ready[m]) + p.time(j, q, m);
                if best.is_none_or(|b| (c, j, m) < b) {
                    best = Some((c, j, m));
                }
            }
        }
        let (c, j, m) = best.expect("an operation is ready");
        next[j] += 1;
        job_ready[j] = c;
        mach_ready[m] = c;
        seq.push((j, m));
    }
    seq
}

/// Solution encoding for local search: a global operation order (job index
/// per slot; the i-th occurrence of a job is its stage i) plus a machine per
/// operation.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Encoding {
    order: Vec<usize>,
    machine: Vec<usize>, // indexed by j * K + q
}

impl Encoding {
    fn from_sequence(p: &Problem, seq: &[(usize, usize)]) -> Self {
        let mut next = vec![0usize; p.n_jobs()];
        let mut machine = vec![0; p.n_ops()];
        let mut order = Vec::with_capacity(seq.len());
        for &(j, m) in seq {
            machine[j * p.stages + next[j]] = m;
            next[j] += 1;
            order.push(j);
        }
        Self { order, machine }
    }

    fn to_sequence(&self, p: &Problem) -> Vec<(usize, usize)> {
        let mut next = vec![0usize; p.n_jobs()];
        self.order
            .iter()
            .map(|&j| {
                let q = next[j];
                next[j] += 1;
                (j, self.machine[j * p.stages + q])
            })
            .collect()
    }

    fn makespan(&self, p: &Problem) -> Millis {
        p.decode(&self.to_sequence(p)).makespan
    }
}

pub(crate) struct SearchOutcome {
    pub sequence: Vec<(usize, usize)>,
    pub makespan: Millis,
    #[cfg_attr(not(test), allow(dead_code))]
    pub seed_makespan: Millis,
    pub evaluations: u64,
}

/// Improves the dispatch sequence until no move helps, then perturbs the
/// best solution and repeats, `restarts` times or until `deadline`.
pub(crate) fn local_search(
    p: &Problem,
    rng: &mut ChaCha8Rng,
    restarts: usize,
    deadline: Instant,
) -> SearchOutcome {
    let seed_seq = dispatch(p);
    let seed_makespan = p.decode(&seed_seq).makespan;
    let mut best = Encoding::from_sequence(p, &seed_seq);
    let mut best_ms = seed_makespan;
    let mut evaluations = 1u64;

    if p.n_ops() > 0 {
        let mut current = best.clone();
        let mut current_ms = best_ms;
        for round in 0..=restarts {
            if round > 0 {
                current = best.clone();
                perturb(p, &mut current, rng);
                current_ms = current.makespan(p);
                evaluations += 1;
            }
            descend(p, &mut current, &mut current_ms, &mut evaluations, deadline);
            if current_ms < best_ms {
                best = current.clone();
                best_ms = current_ms;
            }
            if Instant::now() >= deadline {
                break;
            }
        }
    }

    SearchOutcome {
        sequence: best.to_sequence(p),
        makespan: best_ms,
        seed_makespan,
        evaluations,
    }
}

fn descend(
    p: &Problem,
    enc: &mut Encoding,
    ms: &mut Millis,
    evaluations: &mut u64,
    deadline: Instant,
) {
    'improve: loop {
        if Instant::now() >= deadline {
            return;
        }
        // reassign one operation
        for op in 0..enc.machine.len() {
            let original = enc.machine[op];
            for m in 0..p.n_machines() {
                if m == original {
                    continue;
                }
                enc.machine[op] = m;
                let cand = enc.makespan(p);
                *evaluations += 1;
                if cand < *ms {
                    *ms = cand;
                    continue 'improve;
                }
            }
            enc.machine[op] = original;
        }
        // swap adjacent operations of different jobs
        for i in 0..enc.order.len().saturating_sub(1) {
            if enc.order[i] == enc.order[i + 1] {
                continue;
            }
            enc.order.swap(i, i + 1);
            let cand = enc.makespan(p);
            *evaluations += 1;
            if cand < *ms {
                *ms = cand;
                continue 'improve;
            }
            enc.order.swap(i, i + 1);
        }
        return;
    }
}

fn perturb(p: &Problem, enc: &mut Encoding, rng: &mut ChaCha8Rng) {
    let moves = 1 + p.n_ops() / 4;
    for _ in 0..moves {
        if p.n_machines() > 1 && rng.random_bool(0.5) {
            let op = rng.random_range(0..enc.machine.len());
            enc.machine[op] = rng.random_range(0..p.n_machines());
        } else if enc.order.len() > 1 {
            let i = rng.random_range(0..enc.order.len() - 1);
            enc.order.swap(i, i + 1);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::example_instance;
    use rand::SeedableRng;
    use std::time::Duration;

    #[test]
    fn dispatch_is_a_complete_sequence() {
        let p = Problem::new(&example_instance());
        let seq = dispatch(&p);
        assert_eq!(seq.len(), 9);
        for j in 0..3 {
            assert_eq!(seq.iter().filter(|s| s.0 == j).count(), 3);
        }
    }

    #[test]
    fn encoding_round_trips_sequence() {
        let p = Problem::new(&example_instance());
        let seq = dispatch(&p);
        assert_eq!(Encoding::from_sequence(&p, &seq).to_sequence(&p), seq);
    }

    #[test]
    fn local_search_never_worse_than_dispatch() {
        let p = Problem::new(&example_instance());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = local_search(&p, &mut rng, 5, Instant::now() + Duration::from_secs(5));
        assert!(out.makespan <= out.seed_makespan);
        assert_eq!(p.decode(&out.sequence).makespan, out.makespan);
    }
}
