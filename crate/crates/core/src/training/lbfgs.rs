//! Limited-memory BFGS with a strong-Wolfe line search.

use std::collections::VecDeque;
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iters: usize,
    /// Stop when `‖∇f‖_∞` drops below this.
    pub grad_tol: f64,
    pub c1: f64,
    pub c2: f64,
    /// Objective evaluations allowed per line search.
    pub max_line_evals: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iters: 100,
            grad_tol: 1e-6,
            c1: 1e-4,
            c2: 0.9,
            max_line_evals: 25,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LbfgsStatus {
    Converged,
    MaxIterations,
    LineSearchFailed,
}

/// One accepted iterate. Iteration 0 is the starting point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub value: f64,
    pub grad_norm: f64,
    pub evaluations: usize,
    pub elapsed_secs: f64,
}

#[derive(Clone, Debug)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub status: LbfgsStatus,
    pub history: Vec<IterationRecord>,
    pub evaluations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct Point {
    alpha: f64,
    value: f64,
    slope: f64,
    x: Vec<f64>,
    grad: Vec<f64>,
}

/// Minimizer of the cubic through two points with known slopes, if it lies
/// inside the safeguarded interval; bisection otherwise.
fn interpolate(lo: &Point, hi: &Point) -> f64 {
    let (a, b) = (lo.alpha, hi.alpha);
    let d1 = lo.slope + hi.slope - 3.0 * (lo.value - hi.value) / (a - b);
    let disc = d1 * d1 - lo.slope * hi.slope;
    let mid = 0.5 * (a + b);
    if !(disc >= 0.0) {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2);
    let (left, right) = (a.min(b), a.max(b));
    let margin = 0.1 * (right - left);
    if t.is_finite() && t > left + margin && t < right - margin {
        t
    } else {
        mid
    }
}

struct LineSearch<'a, F> {
    f: &'a mut F,
    x: &'a [f64],
    dir: &'a [f64],
    value0: f64,
    slope0: f64,
    c1: f64,
    c2: f64,
    evals_left: usize,
    evaluations: usize,
    /// Lowest point seen that satisfies sufficient decrease.
    best: Option<Point>,
}

impl<F: FnMut(&[f64]) -> (f64, Vec<f64>)> LineSearch<'_, F> {
    fn eval(&mut self, alpha: f64) -> Option<Point> {
        if self.evals_left == 0 {
            return None;
        }
        self.evals_left -= 1;
        self.evaluations += 1;
        let x: Vec<f64> = self.x.iter().zip(self.dir).map(|(xi, di)| xi + alpha * di).collect();
        let (mut value, grad) = (self.f)(&x);
        let mut slope = dot(&grad, self.dir);
        if !value.is_finite() || !slope.is_finite() {
            value = f64::INFINITY;
            slope = f64::INFINITY;
        }
        let p = Point {
            alpha,
            value,
            slope,
            x,
            grad,
        };
        if self.sufficient(&p) && self.best.as_ref().is_none_or(|b| p.value < b.value) {
            self.best = Some(Point {
                alpha: p.alpha,
                value: p.value,
                slope: p.slope,
                x: p.x.clone(),
                grad: p.grad.clone(),
            });
        }
        Some(p)
    }

    fn sufficient(&self, p: &Point) -> bool {
        p.value <= self.value0 + self.c1 * p.alpha * self.slope0
    }

    fn curvature(&self, p: &Point) -> bool {
        p.slope.abs() <= -self.c2 * self.slope0
    }

    fn run(&mut self, alpha0: f64) -> Option<Point> {
        let mut prev = Point {
            alpha: 0.0,
            value: self.value0,
            slope: self.slope0,
            x: Vec::new(),
            grad: Vec::new(),
        };
        let mut alpha = alpha0;
        let mut first = true;
        loop {
            let p = self.eval(alpha)?;
            if !self.sufficient(&p) || (!first && p.value >= prev.value) {
                return self.zoom(prev, p);
            }
            if self.curvature(&p) {
                return Some(p);
            }
            if p.slope >= 0.0 {
                return self.zoom(p, prev);
            }
            alpha = 2.0 * p.alpha;
            prev = p;
            first = false;
        }
    }

    fn zoom(&mut self, mut lo: Point, mut hi: Point) -> Option<Point> {
        loop {
            let alpha = if hi.value.is_finite() {
                interpolate(&lo, &hi)
            } else {
                0.5 * (lo.alpha + hi.alpha)
            };
            if (hi.alpha - lo.alpha).abs() <= 1e-16 * lo.alpha.abs().max(1.0) {
                return None;
            }
            let p = self.eval(alpha)?;
            if !self.sufficient(&p) || p.value >= lo.value {
                hi = p;
            } else {
                if self.curvature(&p) {
                    return Some(p);
                }
                if p.slope * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = lo;
                }
                lo = p;
            }
        }
    }
}

/// Minimizes `f` from `x0`. `f` returns the value and gradient.
pub fn lbfgs_minimize<F>(f: F, x0: &[f64], opts: &LbfgsOptions) -> LbfgsResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    lbfgs_minimize_observed(f, x0, opts, |_| {})
}

/// As [`lbfgs_minimize`], calling `observer` after every accepted iterate.
pub fn lbfgs_minimize_observed<F, O>(mut f: F, x0: &[f64], opts: &LbfgsOptions, mut observer: O) -> LbfgsResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
    O: FnMut(&IterationRecord),
{
    let start = Instant::now();
    let mut x = x0.to_vec();
    let (mut value, mut grad) = f(&x);
    let mut evaluations = 1;
    let mut history = Vec::new();
    let mut record = |iter: usize, value: f64, grad: &[f64], evaluations: usize, history: &mut Vec<IterationRecord>| {
        let rec = IterationRecord {
            iter,
            value,
            grad_norm: inf_norm(grad),
            evaluations,
            elapsed_secs: start.elapsed().as_secs_f64(),
        };
        observer(&rec);
        history.push(rec);
    };
    record(0, value, &grad, evaluations, &mut history);

    let finish = |x, value, grad, status, history, evaluations| LbfgsResult {
        x,
        value,
        grad,
        status,
        history,
        evaluations,
    };
    if !value.is_finite() {
        return finish(x, value, grad, LbfgsStatus::LineSearchFailed, history, evaluations);
    }

    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    for iter in 1..=opts.max_iters {
        if inf_norm(&grad) < opts.grad_tol {
            return finish(x, value, grad, LbfgsStatus::Converged, history, evaluations);
        }

        // two-loop recursion
        let mut dir: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let a = rho * dot(s, &dir);
            for (d, yi) in dir.iter_mut().zip(y) {
                *d -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = pairs.back().map_or(1.0, |(s, y, _)| dot(s, y) / dot(y, y));
        dir.iter_mut().for_each(|d| *d *= gamma);
        for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &dir);
            for (d, si) in dir.iter_mut().zip(s) {
                *d += (a - b) * si;
            }
        }
        let mut slope = dot(&grad, &dir);
        if !(slope < 0.0) {
            pairs.clear();
            dir = grad.iter().map(|g| -g).collect();
            slope = -dot(&grad, &grad);
        }
        let alpha0 = if pairs.is_empty() {
            (1.0 / dot(&dir, &dir).sqrt()).min(1.0)
        } else {
            1.0
        };

        let mut ls = LineSearch {
            f: &mut f,
            x: &x,
            dir: &dir,
            value0: value,
            slope0: slope,
            c1: opts.c1,
            c2: opts.c2,
            evals_left: opts.max_line_evals,
            evaluations: 0,
            best: None,
        };
        let found = ls.run(alpha0);
        evaluations += ls.evaluations;
        let accepted = match found {
            Some(p) => Some(p),
            // fall back to the best sufficient-decrease point, if any
            None => ls.best.take().filter(|b| b.value < value),
        };
        let Some(p) = accepted else {
            return finish(x, value, grad, LbfgsStatus::LineSearchFailed, history, evaluations);
        };

        let s: Vec<f64> = p.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = p.grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        x = p.x;
        value = p.value;
        grad = p.grad;
        record(iter, value, &grad, evaluations, &mut history);
    }
    let status = if inf_norm(&grad) < opts.grad_tol {
        LbfgsStatus::Converged
    } else {
        LbfgsStatus::MaxIterations
    };
    finish(x, value, grad, status, history, evaluations)
}
