//! CDCL SAT core with a pluggable theory: two watched literals, VSIDS,
//! first-UIP learning, phase saving, Luby restarts and assumptions.

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Lit(u32);

impl Lit {
    pub fn new(var: u32, negated: bool) -> Lit {
        Lit(var * 2 + negated as u32)
    }

    pub fn var(self) -> u32 {
        self.0 >> 1
    }

    pub fn is_neg(self) -> bool {
        self.0 & 1 == 1
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::ops::Not for Lit {
    type Output = Lit;

    fn not(self) -> Lit {
        Lit(self.0 ^ 1)
    }
}

/// Theory plugged into the search. Literals passed in are assigned true.
pub trait Theory {
    /// Asserts a theory literal. Implied literals are reported as
    /// `(implied, because)` pairs where `because` is a true literal.
    /// Returns a conflict as a set of true literals that cannot hold together.
    fn assert_lit(&mut self, lit: Lit, implied: &mut Vec<(Lit, Lit)>) -> Result<(), Vec<Lit>>;
    fn check(&mut self) -> Result<(), Vec<Lit>>;
    fn push_level(&mut self);
    fn pop_levels(&mut self, count: usize);
    fn on_model(&mut self);
}

/// Theory that accepts everything; used for pure SAT tests.
#[cfg(test)]
#[derive(Default)]
pub struct NoTheory;

#[cfg(test)]
impl Theory for NoTheory {
    fn assert_lit(&mut self, _: Lit, _: &mut Vec<(Lit, Lit)>) -> Result<(), Vec<Lit>> {
        Ok(())
    }
    fn check(&mut self) -> Result<(), Vec<Lit>> {
        Ok(())
    }
    fn push_level(&mut self) {}
    fn pop_levels(&mut self, _: usize) {}
    fn on_model(&mut self) {}
}

#[derive(Clone, Copy)]
enum Reason {
    Decision,
    Clause(u32),
    Implied(Lit),
}

struct Clause {
    lits: Vec<Lit>,
    learnt: bool,
    activity: f64,
    deleted: bool,
}

#[derive(Clone, Copy)]
struct Watch {
    clause: u32,
    blocker: Lit,
}

const UNDEF: i8 = 0;

struct VarHeap {
    heap: Vec<u32>,
    pos: Vec<i32>,
}

impl VarHeap {
    fn contains(&self, v: u32) -> bool {
        self.pos[v as usize] >= 0
    }

    fn up(&mut self, mut i: usize, act: &[f64]) {
        let v = self.heap[i];
        while i > 0 {
            let p = (i - 1) / 2;
            let pv = self.heap[p];
            if act[pv as usize] > act[v as usize] || (act[pv as usize] == act[v as usize] && pv < v) {
                break;
            }
            self.heap[i] = pv;
            self.pos[pv as usize] = i as i32;
            i = p;
        }
        self.heap[i] = v;
        self.pos[v as usize] = i as i32;
    }

    fn down(&mut self, mut i: usize, act: &[f64]) {
        let v = self.heap[i];
        let n = self.heap.len();
        loop {
            let l = 2 * i + 1;
            if l >= n {
                break;
            }
            let r = l + 1;
            let better = |a: u32, b: u32| act[a as usize] > act[b as usize] || (act[a as usize] == act[b as usize] && a < b);
            let c = if r < n && better(self.heap[r], self.heap[l]) { r } else { l };
            if !better(self.heap[c], v) {
                break;
            }
            let cv = self.heap[c];
            self.heap[i] = cv;
            self.pos[cv as usize] = i as i32;
            i = c;
        }
        self.heap[i] = v;
        self.pos[v as usize] = i as i32;
    }

    fn insert(&mut self, v: u32, act: &[f64]) {
        if self.contains(v) {
            return;
        }
        self.heap.push(v);
        let i = self.heap.len() - 1;
        self.pos[v as usize] = i as i32;
        self.up(i, act);
    }

    fn pop(&mut self, act: &[f64]) -> Option<u32> {
        let top = *self.heap.first()?;
        let last = self.heap.pop().unwrap();
        self.pos[top as usize] = -1;
        if !self.heap.is_empty() {
            self.heap[0] = last;
            self.pos[last as usize] = 0;
            self.down(0, act);
        }
        Some(top)
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SatStats {
    pub decisions: u64,
    pub conflicts: u64,
    pub propagations: u64,
    pub restarts: u64,
}

pub struct Sat<T: Theory> {
    pub theory: T,
    clauses: Vec<Clause>,
    watches: Vec<Vec<Watch>>,
    assigns: Vec<i8>,
    level: Vec<u32>,
    reason: Vec<Reason>,
    is_theory: Vec<bool>,
    trail: Vec<Lit>,
    trail_lim: Vec<usize>,
    qhead: usize,
    thead: usize,
    activity: Vec<f64>,
    var_inc: f64,
    clause_inc: f64,
    heap: VarHeap,
    phase: Vec<bool>,
    seen: Vec<bool>,
    ok: bool,
    model: Vec<bool>,
    num_learnts: usize,
    max_learnts: f64,
    implied_buf: Vec<(Lit, Lit)>,
    pub stats: SatStats,
}

enum Conflict {
    Clause(u32),
    Lits(Vec<Lit>),
}

enum SearchResult {
    Sat,
    Unsat,
    Restart,
}

impl<T: Theory> Sat<T> {
    pub fn new(theory: T) -> Self {
        Sat {
            theory,
            clauses: Vec::new(),
            watches: Vec::new(),
            assigns: Vec::new(),
            level: Vec::new(),
            reason: Vec::new(),
            is_theory: Vec::new(),
            trail: Vec::new(),
            trail_lim: Vec::new(),
            qhead: 0,
            thead: 0,
            activity: Vec::new(),
            var_inc: 1.0,
            clause_inc: 1.0,
            heap: VarHeap { heap: Vec::new(), pos: Vec::new() },
            phase: Vec::new(),
            seen: Vec::new(),
            ok: true,
            model: Vec::new(),
            num_learnts: 0,
            max_learnts: 2000.0,
            implied_buf: Vec::new(),
            stats: SatStats::default(),
        }
    }

    pub fn new_var(&mut self, theory: bool) -> u32 {
        let v = self.assigns.len() as u32;
        self.assigns.push(UNDEF);
        self.level.push(0);
        self.reason.push(Reason::Decision);
        self.is_theory.push(theory);
        self.activity.push(0.0);
        self.phase.push(false);
        self.seen.push(false);
        self.watches.push(Vec::new());
        self.watches.push(Vec::new());
        self.heap.pos.push(-1);
        self.heap.insert(v, &self.activity);
        v
    }

    /// Value of a literal under the current assignment.
    fn value(&self, l: Lit) -> i8 {
        let a = self.assigns[l.var() as usize];
        if l.is_neg() {
            -a
        } else {
            a
        }
    }

    fn decision_level(&self) -> usize {
        self.trail_lim.len()
    }

    fn enqueue(&mut self, l: Lit, why: Reason) {
        let v = l.var() as usize;
        debug_assert_eq!(self.assigns[v], UNDEF);
        self.assigns[v] = if l.is_neg() { -1 } else { 1 };
        self.level[v] = self.decision_level() as u32;
        self.reason[v] = why;
        self.trail.push(l);
    }

    fn cancel_until(&mut self, lvl: usize) {
        if self.decision_level() <= lvl {
            return;
        }
        let start = self.trail_lim[lvl];
        for i in (start..self.trail.len()).rev() {
            let l = self.trail[i];
            let v = l.var() as usize;
            self.assigns[v] = UNDEF;
            self.phase[v] = !l.is_neg();
            self.heap.insert(l.var(), &self.activity);
        }
        self.trail.truncate(start);
        let popped = self.decision_level() - lvl;
        self.trail_lim.truncate(lvl);
        self.qhead = start;
        self.thead = self.thead.min(start);
        self.theory.pop_levels(popped);
    }

    fn new_decision_level(&mut self) {
        self.trail_lim.push(self.trail.len());
        self.theory.push_level();
    }

    /// Adds a clause at decision level 0. Returns false if the clause set
    /// became unsatisfiable.
    pub fn add_clause(&mut self, lits: &[Lit]) -> bool {
        if !self.ok {
            return false;
        }
        self.cancel_until(0);
        let mut c: Vec<Lit> = lits.to_vec();
        c.sort();
        c.dedup();
        for w in c.windows(2) {
            if w[0] == !w[1] {
                return true;
            }
        }
        let mut kept = Vec::with_capacity(c.len());
        for &l in &c {
            match self.value(l) {
                1 => return true,
                -1 => {}
                _ => kept.push(l),
            }
        }
        match kept.len() {
            0 => {
                self.ok = false;
                false
            }
            1 => {
                self.enqueue(kept[0], Reason::Decision);
                if self.propagate().is_some() {
                    self.ok = false;
                }
                self.ok
            }
            _ => {
                self.attach(kept, false);
                true
            }
        }
    }

    fn attach(&mut self, lits: Vec<Lit>, learnt: bool) -> u32 {
        let id = self.clauses.len() as u32;
        self.watches[(!lits[0]).index()].push(Watch { clause: id, blocker: lits[1] });
        self.watches[(!lits[1]).index()].push(Watch { clause: id, blocker: lits[0] });
        if learnt {
            self.num_learnts += 1;
        }
        self.clauses.push(Clause { lits, learnt, activity: 0.0, deleted: false });
        id
    }

    fn propagate(&mut self) -> Option<Conflict> {
        loop {
            while self.qhead < self.trail.len() {
                let p = self.trail[self.qhead];
                self.qhead += 1;
                self.stats.propagations += 1;
                let false_lit = !p;
                let mut ws = std::mem::take(&mut self.watches[p.index()]);
                let mut i = 0;
                let mut j = 0;
                let mut conflict = None;
                while i < ws.len() {
                    let w = ws[i];
                    i += 1;
                    let cid = w.clause as usize;
                    if self.clauses[cid].deleted {
                        continue;
                    }
                    if self.value(w.blocker) == 1 {
                        ws[j] = w;
                        j += 1;
                        continue;
                    }
                    {
                        let lits = &mut self.clauses[cid].lits;
                        if lits[0] == false_lit {
                            lits.swap(0, 1);
                        }
                    }
                    let first = self.clauses[cid].lits[0];
                    if first != w.blocker && self.value(first) == 1 {
                        ws[j] = Watch { clause: w.clause, blocker: first };
                        j += 1;
                        continue;
                    }
                    let mut moved = false;
                    let len = self.clauses[cid].lits.len();
                    for k in 2..len {
                        let l = self.clauses[cid].lits[k];
                        if self.value(l) != -1 {
                            self.clauses[cid].lits.swap(1, k);
                            self.watches[(!l).index()].push(Watch { clause: w.clause, blocker: first });
                            moved = true;
                            break;
                        }
                    }
                    if moved {
                        continue;
                    }
                    ws[j] = Watch { clause: w.clause, blocker: first };
                    j += 1;
                    if self.value(first) == -1 {
                        conflict = Some(w.clause);
                        while i < ws.len() {
                            ws[j] = ws[i];
                            j += 1;
                            i += 1;
                        }
                    } else {
                        self.enqueue(first, Reason::Clause(w.clause));
                    }
                }
                ws.truncate(j);
                let slot = &mut self.watches[p.index()];
                ws.append(slot);
                *slot = ws;
                if let Some(c) = conflict {
                    return Some(Conflict::Clause(c));
                }
            }
            if self.thead >= self.trail.len() {
                return None;
            }
            while self.thead < self.trail.len() {
                let l = self.trail[self.thead];
                self.thead += 1;
                if !self.is_theory[l.var() as usize] {
                    continue;
                }
                let mut implied = std::mem::take(&mut self.implied_buf);
                implied.clear();
                let res = self.theory.assert_lit(l, &mut implied);
                if let Err(expl) = res {
                    self.implied_buf = implied;
                    return Some(Conflict::Lits(expl.into_iter().map(|x| !x).collect()));
                }
                for &(imp, because) in &implied {
                    match self.value(imp) {
                        0 => self.enqueue(imp, Reason::Implied(because)),
                        -1 => {
                            self.implied_buf = implied;
                            return Some(Conflict::Lits(vec![imp, !because]));
                        }
                        _ => {}
                    }
                }
                self.implied_buf = implied;
                if self.qhead < self.trail.len() {
                    break;
                }
            }
        }
    }

    fn bump_var(&mut self, v: u32) {
        let a = &mut self.activity[v as usize];
        *a += self.var_inc;
        if *a > 1e100 {
            for x in self.activity.iter_mut() {
                *x *= 1e-100;
            }
            self.var_inc *= 1e-100;
        }
        if self.heap.contains(v) {
            let i = self.heap.pos[v as usize] as usize;
            self.heap.up(i, &self.activity);
        }
    }

    fn bump_clause(&mut self, c: u32) {
        let cl = &mut self.clauses[c as usize];
        if !cl.learnt {
            return;
        }
        cl.activity += self.clause_inc;
        if cl.activity > 1e20 {
            for c in self.clauses.iter_mut().filter(|c| c.learnt) {
                c.activity *= 1e-20;
            }
            self.clause_inc *= 1e-20;
        }
    }

    fn conflict_lits(&self, c: &Conflict) -> Vec<Lit> {
        match c {
            Conflict::Clause(id) => self.clauses[*id as usize].lits.clone(),
            Conflict::Lits(l) => l.clone(),
        }
    }

    /// First-UIP analysis. The conflict clause must have at least one
    /// literal at the current decision level.
    fn analyze(&mut self, confl: Vec<Lit>, confl_id: Option<u32>) -> (Vec<Lit>, usize) {
        let current = self.decision_level() as u32;
        let mut learnt = vec![Lit(0)];
        let mut path = 0usize;
        let mut idx = self.trail.len();
        let mut lits = confl;
        let mut p: Option<Lit> = None;
        if let Some(id) = confl_id {
            self.bump_clause(id);
        }
        loop {
            for &q in &lits {
                if Some(q) == p {
                    continue;
                }
                let v = q.var() as usize;
                if !self.seen[v] && self.level[v] > 0 {
                    self.seen[v] = true;
                    self.bump_var(q.var());
                    if self.level[v] >= current {
                        path += 1;
                    } else {
                        learnt.push(q);
                    }
                }
            }
            loop {
                idx -= 1;
                if self.seen[self.trail[idx].var() as usize] {
                    break;
                }
            }
            let pl = self.trail[idx];
            self.seen[pl.var() as usize] = false;
            path -= 1;
            p = Some(pl);
            if path == 0 {
                break;
            }
            lits = match self.reason[pl.var() as usize] {
                Reason::Clause(id) => {
                    self.bump_clause(id);
                    self.clauses[id as usize].lits.clone()
                }
                Reason::Implied(because) => vec![pl, !because],
                Reason::Decision => unreachable!("decision literal reached before UIP"),
            };
        }
        learnt[0] = !p.unwrap();
        self.minimize(&mut learnt);
        for l in &learnt {
            self.seen[l.var() as usize] = false;
        }
        let mut bt = 0;
        if learnt.len() > 1 {
            let mut max_i = 1;
            for i in 2..learnt.len() {
                if self.level[learnt[i].var() as usize] > self.level[learnt[max_i].var() as usize] {
                    max_i = i;
                }
            }
            learnt.swap(1, max_i);
            bt = self.level[learnt[1].var() as usize] as usize;
        }
        (learnt, bt)
    }

    /// Removes literals implied by others in the clause (local minimization).
    fn minimize(&mut self, learnt: &mut Vec<Lit>) {
        for l in learnt.iter() {
            self.seen[l.var() as usize] = true;
        }
        let mut keep = vec![learnt[0]];
        for &l in &learnt[1..] {
            let v = l.var() as usize;
            let redundant = match self.reason[v] {
                Reason::Decision => false,
                Reason::Clause(id) => self.clauses[id as usize]
                    .lits
                    .iter()
                    .all(|&q| q.var() as usize == v || self.seen[q.var() as usize] || self.level[q.var() as usize] == 0),
                Reason::Implied(because) => {
                    let bv = because.var() as usize;
                    self.seen[bv] || self.level[bv] == 0
                }
            };
            if !redundant {
                keep.push(l);
            }
        }
        for l in learnt.iter() {
            self.seen[l.var() as usize] = false;
        }
        *learnt = keep;
    }

    /// Handles a conflict. Returns false when unsatisfiable at level 0.
    fn resolve_conflict(&mut self, c: Conflict) -> bool {
        self.stats.conflicts += 1;
        let cid = match c {
            Conflict::Clause(id) => Some(id),
            _ => None,
        };
        let lits = self.conflict_lits(&c);
        let max_level = lits.iter().map(|l| self.level[l.var() as usize] as usize).max().unwrap_or(0);
        if max_level == 0 {
            return false;
        }
        if max_level < self.decision_level() {
            self.cancel_until(max_level);
        }
        let (learnt, bt) = self.analyze(lits, cid);
        self.cancel_until(bt);
        if learnt.len() == 1 {
            self.enqueue(learnt[0], Reason::Decision);
        } else {
            let first = learnt[0];
            let id = self.attach(learnt, true);
            self.bump_clause(id);
            self.enqueue(first, Reason::Clause(id));
        }
        self.var_inc /= 0.95;
        self.clause_inc /= 0.999;
        true
    }

    fn locked(&self, id: usize) -> bool {
        let l = self.clauses[id].lits[0];
        let v = l.var() as usize;
        self.value(l) == 1 && matches!(self.reason[v], Reason::Clause(c) if c as usize == id)
    }

    fn reduce_db(&mut self) {
        let mut learnts: Vec<usize> = (0..self.clauses.len())
            .filter(|&i| self.clauses[i].learnt && !self.clauses[i].deleted && self.clauses[i].lits.len() > 2)
            .collect();
        learnts.sort_by(|&a, &b| {
            self.clauses[a]
                .activity
                .partial_cmp(&self.clauses[b].activity)
                .unwrap()
                .then(a.cmp(&b))
        });
        let half = learnts.len() / 2;
        for &i in &learnts[..half] {
            if !self.locked(i) {
                self.clauses[i].deleted = true;
                self.clauses[i].lits = Vec::new();
                self.num_learnts -= 1;
            }
        }
        for ws in self.watches.iter_mut() {
            let clauses = &self.clauses;
            ws.retain(|w| !clauses[w.clause as usize].deleted);
        }
    }

    fn pick_branch(&mut self) -> Option<Lit> {
        while let Some(v) = self.heap.pop(&self.activity) {
            if self.assigns[v as usize] == UNDEF {
                return Some(Lit::new(v, !self.phase[v as usize]));
            }
        }
        None
    }

    fn propagate_and_check(&mut self) -> Option<Conflict> {
        loop {
            if let Some(c) = self.propagate() {
                return Some(c);
            }
            match self.theory.check() {
                Ok(()) => return None,
                Err(expl) => return Some(Conflict::Lits(expl.into_iter().map(|x| !x).collect())),
            }
        }
    }

    fn search(&mut self, budget: u64, assumptions: &[Lit]) -> SearchResult {
        let mut conflicts = 0u64;
        loop {
            if let Some(c) = self.propagate_and_check() {
                conflicts += 1;
                if self.decision_level() == 0 || !self.resolve_conflict(c) {
                    self.ok = false;
                    return SearchResult::Unsat;
                }
                continue;
            }
            if conflicts >= budget {
                self.cancel_until(0);
                return SearchResult::Restart;
            }
            if self.num_learnts as f64 >= self.max_learnts + self.trail.len() as f64 {
                self.reduce_db();
                self.max_learnts *= 1.1;
            }
            let mut next = None;
            while self.decision_level() < assumptions.len() {
                let a = assumptions[self.decision_level()];
                match self.value(a) {
                    1 => self.new_decision_level(),
                    -1 => return SearchResult::Unsat,
                    _ => {
                        next = Some(a);
                        break;
                    }
                }
            }
            let next = match next {
                Some(a) => a,
                None => match self.pick_branch() {
                    Some(l) => {
                        self.stats.decisions += 1;
                        l
                    }
                    None => return SearchResult::Sat,
                },
            };
            self.new_decision_level();
            self.enqueue(next, Reason::Decision);
        }
    }

    /// Solves under assumptions. Returns true when satisfiable.
    pub fn solve(&mut self, assumptions: &[Lit]) -> bool {
        if !self.ok {
            return false;
        }
        self.cancel_until(0);
        let mut restart = 0u32;
        loop {
            let budget = (luby(restart) * 100.0) as u64;
            match self.search(budget, assumptions) {
                SearchResult::Sat => {
                    self.model = self.assigns.iter().map(|&a| a == 1).collect();
                    self.theory.on_model();
                    self.cancel_until(0);
                    return true;
                }
                SearchResult::Unsat => {
                    self.cancel_until(0);
                    return false;
                }
                SearchResult::Restart => {
                    restart += 1;
                    self.stats.restarts += 1;
                }
            }
        }
    }

    /// Model value after a satisfiable `solve`.
    pub fn model_value(&self, var: u32) -> bool {
        self.model.get(var as usize).copied().unwrap_or(false)
    }
}

fn luby(mut x: u32) -> f64 {
    let mut size = 1u32;
    let mut seq = 0u32;
    while size < x + 1 {
        seq += 1;
        size = 2 * size + 1;
    }
    while size - 1 != x {
        size = (size - 1) >> 1;
        seq -= 1;
        x %= size;
    }
    2f64.powi(seq as i32)
}
