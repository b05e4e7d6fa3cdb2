//! Polyhedral abstraction of points by the predicates of a formula.

use crate::stl::{CoarseRun, Predicate, StlFormula};

/// Open halfspace `h·r + a > 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Halfspace {
    pub coeffs: Vec<f64>,
    pub offset: f64,
}

impl Halfspace {
    pub fn new(coeffs: Vec<f64>, offset: f64) -> Self {
        Halfspace { coeffs, offset }
    }

    pub fn value(&self, point: &[f64]) -> f64 {
        self.coeffs.iter().zip(point).map(|(h, r)| h * r).sum::<f64>() + self.offset
    }

    fn scale(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Bit pattern after scaling the largest coefficient magnitude to 1.
    fn key(&self) -> Vec<u64> {
        let s = self.scale();
        let bits = |v: f64| {
            let v = v / s;
            if v == 0.0 {
                0
            } else {
                v.to_bits()
            }
        };
        self.coeffs.iter().map(|&c| bits(c)).chain([bits(self.offset)]).collect()
    }
}

impl From<&Predicate> for Halfspace {
    fn from(p: &Predicate) -> Self {
        Halfspace::new(p.coeffs.clone(), p.offset)
    }
}

/// Conjunction of halfspaces; no facets is the whole space.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Polyhedron {
    pub facets: Vec<Halfspace>,
}

impl Polyhedron {
    pub fn whole() -> Self {
        Polyhedron::default()
    }

    /// Deduplicates facets that agree after normalization, keeping the
    /// representative with the smallest coefficients.
    pub fn from_facets(facets: impl IntoIterator<Item = Halfspace>) -> Self {
        let mut out: Vec<(Vec<u64>, Halfspace)> = Vec::new();
        for h in facets {
            let key = h.key();
            match out.iter_mut().find(|(k, _)| *k == key) {
                Some((_, kept)) if h.scale() < kept.scale() => *kept = h,
                Some(_) => {}
                None => out.push((key, h)),
            }
        }
        Polyhedron { facets: out.into_iter().map(|(_, h)| h).collect() }
    }

    pub fn is_whole(&self) -> bool {
        self.facets.is_empty()
    }

    /// Strict membership.
    pub fn contains(&self, point: &[f64]) -> bool {
        self.facets.iter().all(|h| h.value(point) > 0.0)
    }

    /// Membership of the closure relaxed by `tol`: `h·r + a ≥ -tol`.
    pub fn contains_relaxed(&self, point: &[f64], tol: f64) -> bool {
        self.facets.iter().all(|h| h.value(point) >= -tol)
    }

    /// Smallest facet value at `point`; `+inf` for the whole space.
    pub fn min_slack(&self, point: &[f64]) -> f64 {
        self.facets.iter().map(|h| h.value(point)).fold(f64::INFINITY, f64::min)
    }

    /// Whether `h` is one of the facets up to normalization.
    pub fn has_facet(&self, h: &Halfspace) -> bool {
        let key = h.key();
        self.facets.iter().any(|f| f.key() == key)
    }
}

/// Halfspaces `f > 0` of the atoms of `f` (negated predicates contribute
/// their negation), duplicates removed, in order of first appearance.
pub fn atoms(f: &StlFormula) -> Vec<Predicate> {
    let mut out: Vec<Predicate> = Vec::new();
    for p in f.atoms() {
        if !out.contains(&p) {
            out.push(p);
        }
    }
    out
}

/// Atoms of `f` holding strictly at `point`.
pub fn label(f: &StlFormula, point: &[f64]) -> Vec<Predicate> {
    atoms(f).into_iter().filter(|p| p.eval(point) > 0.0).collect()
}

/// `α(r)`: the conjunction of the labels of `point`.
pub fn abstract_state(f: &StlFormula, point: &[f64]) -> Polyhedron {
    Polyhedron::from_facets(label(f, point).iter().map(Halfspace::from))
}

/// Region for steps between two consecutive coarse points: the predicates
/// labelling both of them.
pub fn hull_step(f: &StlFormula, p: &[f64], q: &[f64]) -> Polyhedron {
    let both = atoms(f).into_iter().filter(|a| a.eval(p) > 0.0 && a.eval(q) > 0.0);
    Polyhedron::from_facets(both.map(|a| Halfspace::from(&a)))
}

/// `P_0 … P_K` abstracted from a coarse run, with loop index and stretches.
/// `hulls[k-1]` is the region between `P_{k-1}` and `P_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretePlan {
    pub steps: Vec<Polyhedron>,
    pub hulls: Vec<Polyhedron>,
    pub loop_index: usize,
    pub stretches: Vec<usize>,
    pub source: CoarseRun,
}

impl DiscretePlan {
    /// `α(r̃_0) … α(r̃_K)` with zero stretches.
    pub fn from_coarse_run(f: &StlFormula, cr: CoarseRun) -> Self {
        let k = cr.k();
        let steps = (0..=k).map(|i| abstract_state(f, &cr.points[i])).collect();
        let hulls = (1..=k).map(|i| hull_step(f, &cr.points[i - 1], &cr.points[i])).collect();
        DiscretePlan { steps, hulls, loop_index: cr.loop_index, stretches: vec![0; k], source: cr }
    }

    pub fn k(&self) -> usize {
        self.steps.len() - 1
    }

    pub fn has_loop(&self) -> bool {
        self.loop_index <= self.k()
    }
}
