//! Finite Markov chains: recurrent classes, stationary laws, gain and bias of
//! reward processes, hitting times.

use nalgebra::{DMatrix, DVector};

/// Recurrent classes (closed strongly connected components) and transient states.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainStructure {
    pub classes: Vec<Vec<usize>>,
    pub class_of: Vec<Option<usize>>,
    pub transient: Vec<usize>,
}

impl ChainStructure {
    pub fn is_unichain(&self) -> bool {
        self.classes.len() == 1
    }
    pub fn is_irreducible(&self) -> bool {
        self.classes.len() == 1 && self.transient.is_empty()
    }
    pub fn is_recurrent(&self, s: usize) -> bool {
        self.class_of[s].is_some()
    }
}

/// Strongly connected components of a directed graph given by successor lists.
pub fn strongly_connected(succ: &[Vec<usize>]) -> Vec<Vec<usize>> {
    struct Tarjan<'a> {
        succ: &'a [Vec<usize>],
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        next: usize,
        out: Vec<Vec<usize>>,
    }
    impl Tarjan<'_> {
        fn visit(&mut self, v: usize) {
            self.index[v] = Some(self.next);
            self.low[v] = self.next;
            self.next += 1;
            self.stack.push(v);
            self.on_stack[v] = true;
            for i in 0..self.succ[v].len() {
                let w = self.succ[v][i];
                match self.index[w] {
                    None => {
                        self.visit(w);
                        self.low[v] = self.low[v].min(self.low[w]);
                    }
                    Some(iw) if self.on_stack[w] => self.low[v] = self.low[v].min(iw),
                    _ => {}
                }
            }
            if Some(self.low[v]) == self.index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = self.stack.pop().expect("tarjan stack");
                    self.on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                self.out.push(comp);
            }
        }
    }
    let n = succ.len();
    let mut t = Tarjan {
        succ,
        index: vec![None; n],
        low: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        next: 0,
        out: Vec::new(),
    };
    for v in 0..n {
        if t.index[v].is_none() {
            t.visit(v);
        }
    }
    t.out
}

fn successors(p: &[Vec<f64>]) -> Vec<Vec<usize>> {
    p.iter()
        .map(|row| row.iter().enumerate().filter(|(_, &x)| x > 0.0).map(|(j, _)| j).collect())
        .collect()
}

pub fn structure(p: &[Vec<f64>]) -> ChainStructure {
    let succ = successors(p);
    let comps = strongly_connected(&succ);
    let n = p.len();
    let mut comp_of = vec![0; n];
    for (c, comp) in comps.iter().enumerate() {
        for &s in comp {
            comp_of[s] = c;
        }
    }
    let mut classes: Vec<Vec<usize>> = comps
        .iter()
        .enumerate()
        .filter(|(c, comp)| comp.iter().all(|&s| succ[s].iter().all(|&t| comp_of[t] == *c)))
        .map(|(_, comp)| comp.clone())
        .collect();
    classes.sort_by_key(|c| c[0]);
    let mut class_of = vec![None; n];
    for (i, c) in classes.iter().enumerate() {
        for &s in c {
            class_of[s] = Some(i);
        }
    }
    let transient = (0..n).filter(|&s| class_of[s].is_none()).collect();
    ChainStructure { classes, class_of, transient }
}

pub(crate) fn solve(a: DMatrix<f64>, b: DVector<f64>) -> Option<DVector<f64>> {
    if a.nrows() == 0 {
        return Some(b);
    }
    let x = a.lu().solve(&b)?;
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Stationary distribution of the chain restricted to a closed class.
pub fn stationary_on(p: &[Vec<f64>], class: &[usize]) -> Vec<f64> {
    let k = class.len();
    if k == 1 {
        return vec![1.0];
    }
    let mut a = DMatrix::zeros(k, k);
    for (i, &s) in class.iter().enumerate() {
        for (j, &t) in class.iter().enumerate() {
            // row j of the transposed system: sum_i nu_i P(i, j) - nu_j = 0
            a[(j, i)] += p[s][t];
        }
        a[(i, i)] -= 1.0;
    }
    for i in 0..k {
        a[(k - 1, i)] = 1.0;
    }
    let mut b = DVector::zeros(k);
    b[k - 1] = 1.0;
    let nu = solve(a, b).unwrap_or_else(|| DVector::from_element(k, 1.0 / k as f64));
    let mut nu: Vec<f64> = nu.iter().map(|x| x.max(0.0)).collect();
    let total: f64 = nu.iter().sum();
    nu.iter_mut().for_each(|x| *x /= total);
    nu
}

/// Gain, bias and limiting behaviour of a Markov reward process.
///
/// The bias is normalized so that its stationary average vanishes on every
/// recurrent class, which makes it the Cesàro-limit bias.
#[derive(Debug, Clone)]
pub struct RewardProcess {
    pub structure: ChainStructure,
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
    pub class_gain: Vec<f64>,
    /// Stationary law of each class, aligned with `structure.classes`.
    pub stationary: Vec<Vec<f64>>,
    /// Probability of ending in each class, per state.
    pub absorption: Vec<Vec<f64>>,
}

impl RewardProcess {
    /// Stationary law of the class reached from `s`, spread over all states.
    pub fn limiting_law(&self, s: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.gain.len()];
        for (c, class) in self.structure.classes.iter().enumerate() {
            let w = self.absorption[s][c];
            if w > 0.0 {
                for (i, &t) in class.iter().enumerate() {
                    out[t] += w * self.stationary[c][i];
                }
            }
        }
        out
    }
}

pub fn reward_process(p: &[Vec<f64>], r: &[f64]) -> RewardProcess {
    let n = p.len();
    let st = structure(p);
    let mut gain = vec![0.0; n];
    let mut bias = vec![0.0; n];
    let mut class_gain = Vec::new();
    let mut stationary = Vec::new();
    let mut absorption = vec![vec![0.0; st.classes.len()]; n];
    for (c, class) in st.classes.iter().enumerate() {
        let nu = stationary_on(p, class);
        let g: f64 = class.iter().zip(&nu).map(|(&s, w)| w * r[s]).sum();
        let k = class.len();
        // (I - P_C + 1 nu^T) h = r - g
        let mut a = DMatrix::zeros(k, k);
        let mut b = DVector::zeros(k);
        for (i, &s) in class.iter().enumerate() {
            for (j, &t) in class.iter().enumerate() {
                a[(i, j)] = -p[s][t] + nu[j];
            }
            a[(i, i)] += 1.0;
            b[i] = r[s] - g;
        }
        let h = solve(a, b).unwrap_or_else(|| DVector::zeros(k));
        for (i, &s) in class.iter().enumerate() {
            gain[s] = g;
            bias[s] = h[i];
            absorption[s][c] = 1.0;
        }
        class_gain.push(g);
        stationary.push(nu);
    }
    let tr = &st.transient;
    if !tr.is_empty() {
        let k = tr.len();
        let mut q = DMatrix::identity(k, k);
        for (i, &s) in tr.iter().enumerate() {
            for (j, &t) in tr.iter().enumerate() {
                q[(i, j)] -= p[s][t];
            }
        }
        let lu = q.lu();
        for (c, class) in st.classes.iter().enumerate() {
            let rhs = DVector::from_iterator(k, tr.iter().map(|&s| class.iter().map(|&t| p[s][t]).sum::<f64>()));
            let b = lu.solve(&rhs).unwrap_or_else(|| DVector::zeros(k));
            for (i, &s) in tr.iter().enumerate() {
                absorption[s][c] = b[i].clamp(0.0, 1.0);
            }
        }
        for &s in tr {
            gain[s] = (0..st.classes.len()).map(|c| absorption[s][c] * class_gain[c]).sum();
        }
        let rhs = DVector::from_iterator(
            k,
            tr.iter().map(|&s| {
                let into_rec: f64 = (0..n).filter(|&t| st.class_of[t].is_some()).map(|t| p[s][t] * bias[t]).sum();
                r[s] - gain[s] + into_rec
            }),
        );
        let h = lu.solve(&rhs).unwrap_or_else(|| DVector::zeros(k));
        for (i, &s) in tr.iter().enumerate() {
            bias[s] = h[i];
        }
    }
    RewardProcess { structure: st, gain, bias, class_gain, stationary, absorption }
}

/// Expected number of steps to reach `target`; zero on the target and
/// infinite where the target is not reached almost surely.
pub fn hitting_steps(p: &[Vec<f64>], target: &[bool]) -> Vec<f64> {
    let n = p.len();
    let succ = successors(p);
    let mut pred = vec![Vec::new(); n];
    for (s, list) in succ.iter().enumerate() {
        for &t in list {
            pred[t].push(s);
        }
    }
    let mut can_reach = target.to_vec();
    let mut stack: Vec<usize> = (0..n).filter(|&s| target[s]).collect();
    while let Some(t) = stack.pop() {
        for &s in &pred[t] {
            if !can_reach[s] {
                can_reach[s] = true;
                stack.push(s);
            }
        }
    }
    // states from which a dead end is reachable before the target
    let mut doomed: Vec<bool> = can_reach.iter().map(|x| !x).collect();
    let mut stack: Vec<usize> = (0..n).filter(|&s| doomed[s]).collect();
    while let Some(t) = stack.pop() {
        for &s in &pred[t] {
            if !doomed[s] && !target[s] {
                doomed[s] = true;
                stack.push(s);
            }
        }
    }
    let free: Vec<usize> = (0..n).filter(|&s| !target[s] && !doomed[s]).collect();
    let mut out: Vec<f64> = (0..n).map(|s| if target[s] { 0.0 } else { f64::INFINITY }).collect();
    if free.is_empty() {
        return out;
    }
    let k = free.len();
    let mut a = DMatrix::identity(k, k);
    for (i, &s) in free.iter().enumerate() {
        for (j, &t) in free.iter().enumerate() {
            a[(i, j)] -= p[s][t];
        }
    }
    if let Some(x) = solve(a, DVector::from_element(k, 1.0)) {
        for (i, &s) in free.iter().enumerate() {
            out[s] = x[i];
        }
    }
    out
}
