use std::collections::BTreeMap;

/// Something that can run one task at a time (except the server).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Resource {
    Cpu(usize),
    Uplink(usize),
    Downlink(usize),
    /// Half-duplex peer link, keyed by `(min id, max id)`.
    D2d(usize, usize),
    /// Processes every request immediately; no queueing.
    Server,
}

impl Resource {
    pub fn d2d(a: usize, b: usize) -> Self {
        Resource::D2d(a.min(b), a.max(b))
    }

    fn exclusive(self) -> bool {
        self != Resource::Server
    }
}

pub type TaskId = usize;

#[derive(Debug, Clone)]
struct Task {
    resource: Resource,
    duration: f64,
    preds: Vec<TaskId>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slot {
    pub start: f64,
    pub end: f64,
}

/// Task graph executed by non-preemptive list scheduling.
///
/// Tasks become ready when all predecessors have finished. Each exclusive
/// resource serves ready tasks in order of earliest possible start, ties going
/// to the task added first.
#[derive(Debug, Clone, Default)]
pub struct TaskGraph {
    tasks: Vec<Task>,
}

impl TaskGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, resource: Resource, duration: f64, preds: &[TaskId]) -> TaskId {
        assert!(preds.iter().all(|&p| p < self.tasks.len()), "predecessor must already exist");
        self.tasks.push(Task {
            resource,
            duration,
            preds: preds.to_vec(),
        });
        self.tasks.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn run(&self) -> Vec<Slot> {
        let n = self.tasks.len();
        let mut slots: Vec<Option<Slot>> = vec![None; n];
        let mut free: BTreeMap<Resource, f64> = BTreeMap::new();
        for _ in 0..n {
            let mut pick: Option<(f64, TaskId)> = None;
            for (id, task) in self.tasks.iter().enumerate() {
                if slots[id].is_some() {
                    continue;
                }
                let Some(ready) = task
                    .preds
                    .iter()
                    .try_fold(0.0f64, |acc, &p| slots[p].map(|s| acc.max(s.end)))
                else {
                    continue;
                };
                let start = if task.resource.exclusive() {
                    ready.max(free.get(&task.resource).copied().unwrap_or(0.0))
                } else {
                    ready
                };
                if pick.is_none_or(|(best, _)| start < best) {
                    pick = Some((start, id));
                }
            }
            let (start, id) = pick.expect("task graph is acyclic by construction");
            let task = &self.tasks[id];
            let end = start + task.duration;
            if task.resource.exclusive() {
                free.insert(task.resource, end);
            }
            slots[id] = Some(Slot { start, end });
        }
        slots.into_iter().map(|s| s.expect("all scheduled")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_accumulates() {
        let mut g = TaskGraph::new();
        let a = g.add(Resource::Cpu(0), 1.0, &[]);
        let b = g.add(Resource::Uplink(0), 0.5, &[a]);
        let c = g.add(Resource::Server, 0.25, &[b]);
        let s = g.run();
        assert_eq!(s[c], Slot { start: 1.5, end: 1.75 });
    }

    #[test]
    fn exclusive_resource_serializes_in_ready_order() {
        let mut g = TaskGraph::new();
        let late = g.add(Resource::Uplink(1), 2.0, &[]);
        let x = g.add(Resource::Cpu(0), 2.0, &[late]);
        let y = g.add(Resource::Cpu(0), 1.0, &[]);
        let s = g.run();
        assert_eq!(s[y], Slot { start: 0.0, end: 1.0 });
        assert_eq!(s[x], Slot { start: 2.0, end: 4.0 });
    }

    #[test]
    fn busy_resource_delays_ready_task() {
        let mut g = TaskGraph::new();
        let long = g.add(Resource::Cpu(0), 3.0, &[]);
        let pre = g.add(Resource::Uplink(0), 1.0, &[]);
        let wait = g.add(Resource::Cpu(0), 1.0, &[pre]);
        let s = g.run();
        assert_eq!(s[long].end, 3.0);
        assert_eq!(s[wait], Slot { start: 3.0, end: 4.0 });
    }

    #[test]
    fn server_runs_requests_in_parallel() {
        let mut g = TaskGraph::new();
        let a = g.add(Resource::Server, 1.0, &[]);
        let b = g.add(Resource::Server, 1.0, &[]);
        let s = g.run();
        assert_eq!(s[a], s[b]);
    }

    #[test]
    fn tie_goes_to_first_added() {
        let mut g = TaskGraph::new();
        let a = g.add(Resource::Cpu(0), 1.0, &[]);
        let b = g.add(Resource::Cpu(0), 1.0, &[]);
        let s = g.run();
        assert_eq!(s[a].start, 0.0);
        assert_eq!(s[b].start, 1.0);
    }
}
