//! Depth-first branch-and-bound over semi-active schedules.
//!
//! Each branch appends one ready operation to one machine at the earliest
//! time both are free. Operations are appended in strictly increasing
//! `(start, job index)` order, so every semi-active schedule is generated
//! exactly once; some optimal schedule is always semi-active.

use std::time::Instant;

use super::problem::Problem;
use crate::model::Millis;

pub(crate) struct BnbOutcome {
    pub sequence: Vec<(usize, usize)>,
    pub makespan: Millis,
    pub complete: bool,
    pub nodes: u64,
}

struct Search<'a> {
    p: &'a Problem,
    next: Vec<usize>,
    job_ready: Vec<Millis>,
    mach_ready: Vec<Millis>,
    remaining_work: Millis,
    path: Vec<(usize, usize)>,
    best: Vec<(usize, usize)>,
    best_ms: Millis,
    nodes: u64,
    deadline: Instant,
    timed_out: bool,
}

/// Searches for a schedule strictly better than `incumbent` (whose makespan
/// is `incumbent_ms`). `root_bound` short-circuits the search once reached.
pub(crate) fn branch_and_bound(
    p: &Problem,
    incumbent: Vec<(usize, usize)>,
    incumbent_ms: Millis,
    root_bound: Millis,
    deadline: Instant,
) -> BnbOutcome {
    let mut s = Search {
        p,
        next: vec![0; p.n_jobs()],
        job_ready: vec![0; p.n_jobs()],
        mach_ready: vec![0; p.n_machines()],
        remaining_work: p.total_min_work(),
        path: Vec::with_capacity(p.n_ops()),
        best: incumbent,
        best_ms: incumbent_ms,
        nodes: 0,
        deadline,
        timed_out: false,
    };
    if s.best_ms > root_bound {
        s.dfs(0, usize::MAX, 0, root_bound);
    }
    BnbOutcome {
        sequence: s.best,
        makespan: s.best_ms,
        complete: !s.timed_out,
        nodes: s.nodes,
    }
}

impl Search<'_> {
    /// Returns true when the search should stop (bound reached or timeout).
    fn dfs(&mut self, last_start: Millis, last_job: usize, cur_max: Millis, root_bound: Millis) -> bool {
        self.nodes += 1;
        if self.nodes % 4096 == 0 && Instant::now() >= self.deadline {
            self.timed_out = true;
            return true;
        }
        let p = self.p;
        if self.path.len() == p.n_ops() {
            if cur_max < self.best_ms {
                self.best_ms = cur_max;
                self.best = self.path.clone();
            }
            return self.best_ms <= root_bound;
        }
        if self.bound(last_start, cur_max) >= self.best_ms {
            return false;
        }

        let mut children: Vec<(Millis, usize, usize, Millis)> = Vec::new();
        for j in 0..p.n_jobs() {
            let q = self.next[j];
            if q == p.stages {
                continue;
            }
            for m in 0..p.n_machines() {
                let start = self.job_ready[j].max(self.mach_ready[m]);
                let canonical = start > last_start || (start == last_start && (last_job == usize::MAX || j > last_job));
                if !canonical {
                    continue;
                }
                let end = start + p.time(j, q, m);
                if end >= self.best_ms {
                    continue;
                }
                children.push((end, j, m, start));
            }
        }
        children.sort_unstable();

        for (end, j, m, start) in children {
            if end >= self.best_ms {
                continue;
            }
            let q = self.next[j];
            let saved = (self.job_ready[j], self.mach_ready[m]);
            let min_q = p.min_time(j, q);
            self.next[j] += 1;
            self.job_ready[j] = end;
            self.mach_ready[m] = end;
            self.remaining_work -= min_q;
            self.path.push((j, m));

            let stop = self.dfs(start, j, cur_max.max(end), root_bound);

            self.path.pop();
            self.remaining_work += min_q;
            self.mach_ready[m] = saved.1;
            self.job_ready[j] = saved.0;
            self.next[j] -= 1;
            if stop {
                return true;
            }
        }
        false
    }

    fn bound(&self, last_start: Millis, cur_max: Millis) -> Millis {
        let p = self.p;
        let mut lb = cur_max;
        for j in 0..p.n_jobs() {
            let q = self.next[j];
            if q < p.stages {
                lb = lb.max(self.job_ready[j].max(last_start) + p.remaining_min(j, q));
            }
        }
        let m = p.n_machines() as Millis;
        if m > 0 {
            let committed: Millis = self.mach_ready.iter().map(|&r| r.max(last_start)).sum();
            lb = lb.max((committed + self.remaining_work).div_ceil(m));
        }
        lb
    }
}
