//! Las Vegas sampling of join answers guided by an estimator.
//!
//! A trial walks down the trace tree choosing child `d` with probability
//! `u_d / u(t)` and fails with the leftover probability, so every answer
//! is returned with probability exactly `1 / u(root)`. Subtrees proven
//! empty are remembered with value 0 so repeated trials cannot loop
//! forever when there is nothing to find.

use std::collections::HashMap;

use num_traits::Float;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::binarise::{bin_constraints, bin_query, BinarisedQuery};
use crate::constraints::ConstraintSet;
use crate::estimate::{compensated_sum, EstimatorContext, EstimatorError, TraceWalker};
use crate::lp::LpScalar;
use crate::relation::{Code, JoinQuery, VarId};

/// Learned values of trace-tree nodes, keyed by prefix (codes in order
/// positions).
#[derive(Clone, Debug, Default)]
pub struct UpMemo<F> {
    overrides: HashMap<Vec<Code>, F>,
}

impl<F: Float> UpMemo<F> {
    pub fn new() -> Self {
        Self {
            overrides: HashMap::new(),
        }
    }

    pub fn get(&self, prefix: &[Code]) -> Option<F> {
        self.overrides.get(prefix).copied()
    }

    pub fn len(&self) -> usize {
        self.overrides.len()
    }

    pub fn is_empty(&self) -> bool {
        self.overrides.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[Code], F)> + '_ {
        self.overrides.iter().map(|(k, &v)| (k.as_slice(), v))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SamplerStats {
    pub trials: u64,
    pub failures: u64,
    pub answers_returned: u64,
    pub estimator_calls: u64,
    pub memo_entries: u64,
    /// Memo-adjusted `up(root)` before the first trial.
    pub initial_up_root: f64,
    pub final_up_root: f64,
}

impl SamplerStats {
    /// `trials / answers_returned`, or infinity with no answers.
    pub fn mean_trials_per_success(&self) -> f64 {
        if self.answers_returned == 0 {
            f64::INFINITY
        } else {
            self.trials as f64 / self.answers_returned as f64
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum SampleError {
    #[error("answer set empty")]
    Empty(SamplerStats),
    #[error("work budget exhausted after {} trials", .0.trials)]
    BudgetExhausted(SamplerStats),
}

impl SampleError {
    pub fn stats(&self) -> &SamplerStats {
        match self {
            SampleError::Empty(s) | SampleError::BudgetExhausted(s) => s,
        }
    }
}

/// Sampler state over one estimator context: memo and counters.
#[derive(Debug)]
pub struct Sampler<'c, F> {
    ctx: &'c EstimatorContext<F>,
    memo: UpMemo<F>,
    stats: SamplerStats,
    started: bool,
}

impl<'c, F: Float> Sampler<'c, F> {
    pub fn new(ctx: &'c EstimatorContext<F>) -> Self {
        Self {
            ctx,
            memo: UpMemo::new(),
            stats: SamplerStats::default(),
            started: false,
        }
    }

    pub fn memo(&self) -> &UpMemo<F> {
        &self.memo
    }

    pub fn stats(&self) -> &SamplerStats {
        &self.stats
    }

    /// Memo-adjusted estimator at the walker's node.
    fn up(&mut self, w: &TraceWalker<'c, F>) -> F {
        if let Some(v) = self.memo.get(w.prefix()) {
            return v;
        }
        self.stats.estimator_calls += 1;
        w.estimate()
    }

    /// Memo-adjusted `up(root)`.
    pub fn up_root(&mut self) -> F {
        let w = self.ctx.walker();
        self.up(&w)
    }

    /// Memo-adjusted values of every child of the walker's node.
    pub fn children_values(&mut self, w: &mut TraceWalker<'c, F>) -> Vec<F> {
        (0..w.domain_size() as Code)
            .map(|d| {
                w.bind(d);
                let v = self.up(w);
                w.unbind();
                v
            })
            .collect()
    }

    /// One walk from the root. Returns the answer (codes indexed by
    /// `VarId` of the context's query) or `None` on failure.
    pub fn sample_once<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<Vec<Code>> {
        self.stats.trials += 1;
        let mut w = self.ctx.walker();
        let mut u = self.up(&w);
        loop {
            if !w.is_consistent() || u <= F::zero() {
                self.stats.failures += 1;
                return None;
            }
            if w.is_full() {
                self.stats.answers_returned += 1;
                return Some(w.assignment().to_vec());
            }
            let values = self.children_values(&mut w);
            let r = F::from(rng.random::<f64>()).unwrap();
            let mut cumulative = F::zero();
            let mut chosen = None;
            for (d, &v) in values.iter().enumerate() {
                cumulative = cumulative + v / u;
                if v > F::zero() && r < cumulative {
                    chosen = Some(d);
                    break;
                }
            }
            match chosen {
                Some(d) => {
                    w.bind(d as Code);
                    u = values[d];
                }
                None => {
                    self.stats.failures += 1;
                    self.record_failure(&mut w, values);
                    return None;
                }
            }
        }
    }

    /// Marks the failing node and then its ancestors as resolved while all
    /// of their children are resolved or inconsistent.
    fn record_failure(&mut self, w: &mut TraceWalker<'c, F>, mut values: Vec<F>) {
        loop {
            let resolved = (0..values.len()).all(|d| {
                w.bind(d as Code);
                let done = !w.is_consistent() || self.memo.get(w.prefix()).is_some();
                w.unbind();
                done
            });
            if !resolved {
                return;
            }
            let total = compensated_sum(values.iter().copied());
            self.memo.overrides.insert(w.prefix().to_vec(), total);
            if w.depth() == 0 {
                return;
            }
            w.unbind();
            values = self.children_values(w);
        }
    }

    /// Draws `k` answers with replacement. Fails with
    /// [`SampleError::Empty`] once `up(root)` drops to 0, or
    /// [`SampleError::BudgetExhausted`] after `max_work` trials.
    pub fn sample<R: Rng + ?Sized>(
        &mut self,
        k: usize,
        rng: &mut R,
        max_work: Option<u64>,
    ) -> Result<Vec<Vec<Code>>, SampleError> {
        if !self.started {
            self.started = true;
            self.stats.initial_up_root = self.up_root().to_f64().unwrap_or(f64::NAN);
        }
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            if self.up_root() <= F::zero() {
                return Err(SampleError::Empty(self.finish()));
            }
            if max_work.is_some_and(|m| self.stats.trials >= m) {
                return Err(SampleError::BudgetExhausted(self.finish()));
            }
            if let Some(a) = self.sample_once(rng) {
                out.push(a);
            }
        }
        self.finish();
        Ok(out)
    }

    fn finish(&mut self) -> SamplerStats {
        self.stats.final_up_root = self.up_root().to_f64().unwrap_or(f64::NAN);
        self.stats.memo_entries = self.memo.len() as u64;
        self.stats.clone()
    }
}

/// Sampling over the binarised form of a query, returning answers of the
/// original query.
#[derive(Clone, Debug)]
pub struct BinarySampler {
    binarised: BinarisedQuery,
    ctx: EstimatorContext<f64>,
}

impl BinarySampler {
    /// AGM-guided, one weight per relation of `q`.
    pub fn agm<T: LpScalar>(
        q: &JoinQuery,
        order: &[VarId],
        weights: &[T],
    ) -> Result<Self, EstimatorError> {
        let binarised = bin_query(q);
        let border = binarised.layout.binarised_order(order);
        let ctx = EstimatorContext::agm(&binarised.query, &border, weights)?;
        Ok(Self { binarised, ctx })
    }

    /// Polymatroid-guided, one weight per constraint of `cs`.
    pub fn polymatroid<T: LpScalar>(
        q: &JoinQuery,
        cs: &ConstraintSet,
        order: &[VarId],
        weights: &[T],
    ) -> Result<Self, EstimatorError> {
        let binarised = bin_query(q);
        let bcs = bin_constraints(cs, &binarised.layout);
        let border = binarised.layout.binarised_order(order);
        let ctx = EstimatorContext::polymatroid(&binarised.query, &bcs, &border, weights)?;
        Ok(Self { binarised, ctx })
    }

    pub fn context(&self) -> &EstimatorContext<f64> {
        &self.ctx
    }

    pub fn binarised(&self) -> &BinarisedQuery {
        &self.binarised
    }

    /// Draws `k` answers (codes indexed by original `VarId`).
    pub fn sample<R: Rng + ?Sized>(
        &self,
        k: usize,
        rng: &mut R,
        max_work: Option<u64>,
    ) -> (Result<Vec<Vec<Code>>, SampleError>, SamplerStats) {
        let mut sampler = Sampler::new(&self.ctx);
        let result = sampler.sample(k, rng, max_work).map(|bits| {
            bits.iter()
                .map(|b| {
                    let mut codes = Vec::new();
                    self.binarised.layout.fold_into(b, &mut codes);
                    codes
                })
                .collect()
        });
        (result, sampler.stats().clone())
    }
}
