use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{rng_for, Complexity, CountRange, Family, Feature, GenError, TaskKind, RETRY_BUDGET};
use crate::task::{AttributeKind, GraphBuilder, NodeId, TaskGraph};

const AUTOTASK_STREAM: u64 = 0x4155_544f;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoolOp {
    IsSame,
    NotSame,
    And,
    Or,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootOp {
    IsSame,
    NotSame,
    And,
    Or,
    GetLoc,
    GetCategory,
}

/// Which object properties comparisons and reports may touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSelection {
    Category,
    Location,
    /// Category, location and object identity.
    Both,
}

impl FeatureSelection {
    fn compare_kinds(self) -> &'static [AttributeKind] {
        match self {
            FeatureSelection::Category => &[AttributeKind::Category],
            FeatureSelection::Location => &[AttributeKind::Location],
            FeatureSelection::Both => &[AttributeKind::Category, AttributeKind::Location, AttributeKind::Identity],
        }
    }

    fn allows(self, root: RootOp) -> bool {
        match root {
            RootOp::GetLoc => self != FeatureSelection::Category,
            RootOp::GetCategory => self != FeatureSelection::Location,
            _ => true,
        }
    }
}

impl From<Feature> for FeatureSelection {
    fn from(f: Feature) -> Self {
        match f {
            Feature::Category => FeatureSelection::Category,
            Feature::Location => FeatureSelection::Location,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AutoTaskParams {
    pub n_and_or: CountRange,
    pub n_switch: CountRange,
    pub n_frames: CountRange,
    pub n_distractors: CountRange,
    pub boolean_operators: Vec<BoolOp>,
    pub root_operators: Vec<RootOp>,
    pub features: FeatureSelection,
}

const ALL_BOOL: [BoolOp; 4] = [BoolOp::IsSame, BoolOp::NotSame, BoolOp::And, BoolOp::Or];
const BOOL_ROOTS: [RootOp; 4] = [RootOp::IsSame, RootOp::NotSame, RootOp::And, RootOp::Or];
const ALL_ROOTS: [RootOp; 6] =
    [RootOp::IsSame, RootOp::NotSame, RootOp::And, RootOp::Or, RootOp::GetLoc, RootOp::GetCategory];

impl AutoTaskParams {
    fn preset(
        n_and_or: CountRange,
        n_switch: CountRange,
        n_frames: CountRange,
        n_distractors: usize,
        roots: &[RootOp],
        features: FeatureSelection,
    ) -> Self {
        AutoTaskParams {
            n_and_or,
            n_switch,
            n_frames,
            n_distractors: CountRange::exactly(n_distractors),
            boolean_operators: ALL_BOOL.to_vec(),
            root_operators: roots.to_vec(),
            features,
        }
    }

    pub fn low(features: FeatureSelection) -> Self {
        Self::preset(CountRange::exactly(1), CountRange::exactly(0), CountRange::exactly(6), 0, &BOOL_ROOTS, features)
    }

    pub fn medium(features: FeatureSelection) -> Self {
        Self::preset(CountRange::exactly(1), CountRange::exactly(1), CountRange::exactly(8), 0, &BOOL_ROOTS, features)
    }

    pub fn high(features: FeatureSelection) -> Self {
        Self::preset(CountRange::new(1, 2), CountRange::exactly(1), CountRange::exactly(9), 0, &ALL_ROOTS, features)
    }

    pub fn high_distractor(features: FeatureSelection) -> Self {
        Self::preset(CountRange::new(1, 2), CountRange::exactly(1), CountRange::exactly(12), 4, &ALL_ROOTS, features)
    }

    /// Broad mixture used to build fine-tuning data.
    pub fn finetune() -> Self {
        Self::preset(
            CountRange::new(0, 2),
            CountRange::new(0, 1),
            CountRange::new(3, 9),
            0,
            &ALL_ROOTS,
            FeatureSelection::Both,
        )
    }

    pub fn for_kind(kind: TaskKind) -> Option<Self> {
        let features = FeatureSelection::from(kind.feature());
        match kind.family() {
            Family::Composite(Complexity::Low) => Some(Self::low(features)),
            Family::Composite(Complexity::Medium) => Some(Self::medium(features)),
            Family::Composite(Complexity::High) => Some(Self::high(features)),
            _ => None,
        }
    }

    fn compare_ops(&self) -> Vec<bool> {
        // `true` means NotSame.
        let mut v = Vec::new();
        if self.boolean_operators.contains(&BoolOp::IsSame) {
            v.push(false);
        }
        if self.boolean_operators.contains(&BoolOp::NotSame) {
            v.push(true);
        }
        v
    }

    fn connective_ops(&self) -> Vec<bool> {
        // `true` means Or.
        let mut v = Vec::new();
        if self.boolean_operators.contains(&BoolOp::And) {
            v.push(false);
        }
        if self.boolean_operators.contains(&BoolOp::Or) {
            v.push(true);
        }
        v
    }

    fn effective_roots(&self) -> Vec<RootOp> {
        let conn = self.connective_ops();
        let mut roots: Vec<RootOp> = Vec::new();
        for &r in &self.root_operators {
            let usable = self.features.allows(r)
                && match r {
                    RootOp::And => conn.contains(&false),
                    RootOp::Or => conn.contains(&true),
                    _ => true,
                };
            if usable && !roots.contains(&r) {
                roots.push(r);
            }
        }
        roots
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: String| Err(GenError::InvalidParams(m));
        for (name, r) in [
            ("n_and_or", self.n_and_or),
            ("n_switch", self.n_switch),
            ("n_frames", self.n_frames),
            ("n_distractors", self.n_distractors),
        ] {
            if !r.is_valid() {
                return bad(format!("{name} range is empty"));
            }
        }
        if self.compare_ops().is_empty() {
            return bad("boolean_operators must include IsSame or NotSame".into());
        }
        if self.n_and_or.max > 0 && self.connective_ops().is_empty() {
            return bad("connectives requested but neither And nor Or is allowed".into());
        }
        if self.effective_roots().is_empty() {
            return bad("no root operator is compatible with the feature selection".into());
        }
        let min = min_selects(self).ok_or_else(|| GenError::InvalidParams("operator counts are unsatisfiable".into()))?;
        if self.n_frames.min < min.max(1) {
            return bad(format!("n_frames lower bound {} is below the {min} frames the operators need", self.n_frames.min));
        }
        Ok(())
    }
}

/// Fewest observed objects a graph drawn from `params` can reference, at the
/// lowest operator counts.
pub fn min_selects(params: &AutoTaskParams) -> Option<usize> {
    let roots = params.effective_roots();
    let conn = params.n_and_or.min;
    let sw = params.n_switch.min;
    let has_get = roots.iter().any(|r| matches!(r, RootOp::GetLoc | RootOp::GetCategory));
    let has_cmp = roots.iter().any(|r| matches!(r, RootOp::IsSame | RootOp::NotSame));
    let has_conn = roots.iter().any(|r| matches!(r, RootOp::And | RootOp::Or));
    if sw == 0 {
        if conn == 0 {
            return if has_get { Some(1) } else if has_cmp { Some(2) } else { None };
        }
        return has_conn.then_some(2 * (conn + 1));
    }
    let leaf = if has_get { 1 } else { 2 };
    Some(2 * sw + (sw + 1) * leaf + 2 * conn)
}

#[derive(Debug, Clone)]
enum Plan {
    Compare { negate: bool, kind: AttributeKind },
    Attr(AttributeKind),
    Conn { or: bool, a: Box<Plan>, b: Box<Plan> },
    Switch { cond: Box<Plan>, then: Box<Plan>, otherwise: Box<Plan> },
}

impl Plan {
    fn selects(&self) -> usize {
        match self {
            Plan::Compare { .. } => 2,
            Plan::Attr(_) => 1,
            Plan::Conn { a, b, .. } => a.selects() + b.selects(),
            Plan::Switch { cond, then, otherwise } => cond.selects() + then.selects() + otherwise.selects(),
        }
    }
}

struct Planner<'a, R> {
    rng: &'a mut R,
    params: &'a AutoTaskParams,
    cmp_ops: Vec<bool>,
    conn_ops: Vec<bool>,
}

impl<R: Rng> Planner<'_, R> {
    fn compare(&mut self) -> Plan {
        let negate = *self.cmp_ops.choose(self.rng).unwrap();
        let kind = *self.params.features.compare_kinds().choose(self.rng).unwrap();
        Plan::Compare { negate, kind }
    }

    /// Left-deep chain of `n` connectives over fresh comparisons; `top`
    /// forces the outermost connective.
    fn chain(&mut self, n: usize, top: Option<bool>) -> Plan {
        let mut acc = self.compare();
        for i in 0..n {
            let or = match top {
                Some(t) if i + 1 == n => t,
                _ => *self.conn_ops.choose(self.rng).unwrap(),
            };
            let rhs = self.compare();
            acc = Plan::Conn { or, a: Box::new(acc), b: Box::new(rhs) };
        }
        acc
    }

    fn value(&mut self, op: RootOp, extra: usize) -> Plan {
        match op {
            RootOp::IsSame => Plan::Compare { negate: false, kind: self.kind() },
            RootOp::NotSame => Plan::Compare { negate: true, kind: self.kind() },
            RootOp::And => self.chain(extra + 1, Some(false)),
            RootOp::Or => self.chain(extra + 1, Some(true)),
            RootOp::GetLoc => Plan::Attr(AttributeKind::Location),
            RootOp::GetCategory => Plan::Attr(AttributeKind::Category),
        }
    }

    fn kind(&mut self) -> AttributeKind {
        *self.params.features.compare_kinds().choose(self.rng).unwrap()
    }

    fn plan(&mut self, roots: &[RootOp]) -> Option<Plan> {
        let n_conn = self.params.n_and_or.sample(self.rng);
        let n_sw = self.params.n_switch.sample(self.rng);
        let is_conn = |r: &RootOp| matches!(r, RootOp::And | RootOp::Or);

        if n_sw == 0 {
            let candidates: Vec<RootOp> = roots.iter().copied().filter(|r| is_conn(r) == (n_conn > 0)).collect();
            let op = *candidates.choose(self.rng)?;
            return Some(self.value(op, n_conn.saturating_sub(1)));
        }

        // Switches chain through the else branch; each has a condition and a
        // then-branch, and the innermost else closes the chain.
        let value_ops: Vec<RootOp> = (0..=n_sw).map(|_| *roots.choose(self.rng).unwrap()).collect();
        let required = value_ops.iter().filter(|r| is_conn(r)).count();
        if required > n_conn {
            return None;
        }
        // Slots that can absorb extra connectives: conditions first, then
        // connective-valued branches.
        let mut slots: Vec<usize> = (0..n_sw).collect();
        slots.extend(value_ops.iter().enumerate().filter(|(_, r)| is_conn(r)).map(|(i, _)| n_sw + i));
        let mut extra = vec![0usize; 2 * n_sw + 1];
        for _ in 0..(n_conn - required) {
            extra[*slots.choose(self.rng).unwrap()] += 1;
        }
        let mut tail = self.value(value_ops[n_sw], extra[2 * n_sw]);
        for i in (0..n_sw).rev() {
            let cond = self.chain(extra[i], None);
            let then = self.value(value_ops[i], extra[n_sw + i]);
            tail = Plan::Switch { cond: Box::new(cond), then: Box::new(then), otherwise: Box::new(tail) };
        }
        Some(tail)
    }
}

/// Draws a random composite task graph. Every select reads its own frame,
/// the last frame is always observed, and ordinals follow frame order.
pub fn autotask(params: &AutoTaskParams, seed: u64) -> Result<TaskGraph, GenError> {
    params.validate()?;
    let mut rng = rng_for(seed, AUTOTASK_STREAM);
    let roots = params.effective_roots();
    for _ in 0..RETRY_BUDGET {
        let mut planner = Planner {
            rng: &mut rng,
            params,
            cmp_ops: params.compare_ops(),
            conn_ops: params.connective_ops(),
        };
        let Some(plan) = planner.plan(&roots) else { continue };
        let k = plan.selects();
        if k > params.n_frames.max {
            continue;
        }
        let n = rng.gen_range(params.n_frames.min.max(k)..=params.n_frames.max);
        let mut frames: Vec<usize> = rand::seq::index::sample(&mut rng, n - 1, k - 1).into_vec();
        frames.push(n - 1);
        let mut sorted = frames.clone();
        sorted.sort_unstable();
        frames.shuffle(&mut rng);
        let mut b = GraphBuilder::new();
        let mut next = frames.into_iter().map(|f| (f, sorted.binary_search(&f).unwrap() as u32 + 1));
        let root = emit(&plan, &mut b, &mut next);
        return Ok(b.build(root));
    }
    Err(GenError::GenerationFailure(format!("no graph fits {} frames after {RETRY_BUDGET} attempts", params.n_frames.max)))
}

fn emit(plan: &Plan, b: &mut GraphBuilder, next: &mut impl Iterator<Item = (usize, u32)>) -> NodeId {
    let mut sel = |b: &mut GraphBuilder| {
        let (f, k) = next.next().expect("one frame per select");
        b.select(f, k)
    };
    match plan {
        Plan::Compare { negate, kind } => {
            let a = sel(b);
            let c = sel(b);
            if *negate {
                b.not_same(*kind, a, c)
            } else {
                b.is_same(*kind, a, c)
            }
        }
        Plan::Attr(kind) => {
            let s = sel(b);
            b.get_attr(*kind, s)
        }
        Plan::Conn { or, a, b: rhs } => {
            let x = emit(a, b, next);
            let y = emit(rhs, b, next);
            if *or {
                b.or(x, y)
            } else {
                b.and(x, y)
            }
        }
        Plan::Switch { cond, then, otherwise } => {
            let c = emit(cond, b, next);
            let t = emit(then, b, next);
            let o = emit(otherwise, b, next);
            b.switch(c, t, o)
        }
    }
}
