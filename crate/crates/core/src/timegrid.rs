//! Non-uniform time grids with local refinement around pointwise instants.

use crate::error::{Error, Result};
use crate::Scalar;

pub const DEFAULT_REFINE_RATIO: f64 = 1e-8;

/// Declarative description of a grid; [`TimeGridSpec::build`] realizes it.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGridSpec<T> {
    pub t_end: T,
    pub n_main: usize,
    /// Instants surrounded by `t ± ratio·Δ_main`.
    pub refine_at: Vec<T>,
    pub ratio: T,
    /// Plain extra samples (e.g. integration window ends).
    pub breakpoints: Vec<T>,
}

impl<T: Scalar> TimeGridSpec<T> {
    pub fn uniform(t_end: T, n_main: usize) -> Self {
        Self {
            t_end,
            n_main,
            refine_at: Vec::new(),
            ratio: T::lit(DEFAULT_REFINE_RATIO),
            breakpoints: Vec::new(),
        }
    }

    pub fn with_n_main(&self, n_main: usize) -> Self {
        Self { n_main, ..self.clone() }
    }

    pub fn build(&self) -> Result<TimeGrid<T>> {
        TimeGrid::new(self.t_end, self.n_main, &self.refine_at, self.ratio, &self.breakpoints)
    }
}

/// Strictly increasing samples `t_0 = 0 < … < t_N = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid<T> {
    samples: Vec<T>,
    dt_main: T,
    dt_imp: T,
    refined: Vec<T>,
}

/// Uniform grid with refinement pairs at `refine_at` and the default ratio.
pub fn build_timegrid<T: Scalar>(t_end: T, n_main: usize, refine_at: &[T]) -> Result<TimeGrid<T>> {
    TimeGrid::new(t_end, n_main, refine_at, T::lit(DEFAULT_REFINE_RATIO), &[])
}

impl<T: Scalar> TimeGrid<T> {
    pub fn new(t_end: T, n_main: usize, refine_at: &[T], ratio: T, breakpoints: &[T]) -> Result<Self> {
        if !(t_end > T::zero()) || !t_end.is_finite() {
            return Err(Error::invalid("time window T must be positive"));
        }
        if n_main == 0 {
            return Err(Error::invalid("N_main must be at least 1"));
        }
        if !(ratio > T::zero() && ratio < T::lit(0.5)) {
            return Err(Error::invalid("refinement ratio must lie in (0, 0.5)"));
        }
        let dt_main = t_end / T::from_count(n_main);
        let dt_imp = ratio * dt_main;
        let mut samples: Vec<T> = (0..=n_main)
            .map(|i| if i == n_main { t_end } else { T::from_count(i) * dt_main })
            .collect();
        let snap = dt_imp * T::lit(0.5);

        for &b in breakpoints {
            if !(b >= T::zero() && b <= t_end) {
                return Err(Error::invalid(format!("breakpoint {b} outside [0, {t_end}]")));
            }
            insert_snapped(&mut samples, b, snap, true);
        }
        let mut refined = Vec::new();
        for &t in refine_at {
            if !(t - dt_imp > T::zero() && t + dt_imp < t_end) {
                return Err(Error::invalid(format!(
                    "refinement instant {t} and its neighbours must lie inside (0, {t_end})"
                )));
            }
            if !(t - dt_imp < t && t + dt_imp > t) {
                return Err(Error::invalid(format!(
                    "refinement step {dt_imp} is below the resolution of the scalar type at t = {t}"
                )));
            }
            insert_snapped(&mut samples, t, snap, true);
            insert_snapped(&mut samples, t - dt_imp, snap, false);
            insert_snapped(&mut samples, t + dt_imp, snap, false);
            refined.push(t);
        }
        if samples.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("time samples are not strictly increasing"));
        }
        Ok(Self {
            samples,
            dt_main,
            dt_imp,
            refined,
        })
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_steps(&self) -> usize {
        self.samples.len() - 1
    }

    pub fn t_end(&self) -> T {
        self.samples[self.samples.len() - 1]
    }

    pub fn dt_main(&self) -> T {
        self.dt_main
    }

    pub fn dt_imp(&self) -> T {
        self.dt_imp
    }

    pub fn refined(&self) -> &[T] {
        &self.refined
    }

    /// Step length `t_n − t_{n−1}` for `n ≥ 1`.
    pub fn dt(&self, n: usize) -> T {
        self.samples[n] - self.samples[n - 1]
    }

    /// Index of the sample equal to `t` up to a few ulps.
    pub fn index_of(&self, t: T) -> Option<usize> {
        let tol = T::lit(4.0) * T::epsilon() * self.t_end();
        let i = self.samples.partition_point(|&s| s < t - tol);
        (i < self.samples.len() && (self.samples[i] - t).abs() <= tol).then_some(i)
    }

    pub fn require_index(&self, t: T) -> Result<usize> {
        self.index_of(t).ok_or_else(|| {
            Error::invalid(format!("time {t} is not a sample of the grid; add it as a refinement instant or breakpoint"))
        })
    }

    /// Trapezoid weights over the whole grid.
    pub fn trapezoid_weights(&self) -> Vec<T> {
        let n = self.samples.len();
        let half = T::lit(0.5);
        let mut c = vec![T::zero(); n];
        for k in 1..n {
            let h = self.dt(k) * half;
            c[k - 1] += h;
            c[k] += h;
        }
        c
    }

    /// Trapezoid weights restricted to `[t_a, t_b]`; both ends must be samples.
    pub fn window_weights(&self, t_a: T, t_b: T) -> Result<Vec<T>> {
        if t_b < t_a {
            return Err(Error::invalid(format!("empty window [{t_a}, {t_b}] is reversed")));
        }
        let a = self.require_index(t_a)?;
        let b = self.require_index(t_b)?;
        let half = T::lit(0.5);
        let mut c = vec![T::zero(); self.samples.len()];
        for k in a + 1..=b {
            let h = self.dt(k) * half;
            c[k - 1] += h;
            c[k] += h;
        }
        Ok(c)
    }
}

/// Inserts `t`, or reuses a sample closer than `snap`. A reused sample takes
/// the exact value `t` when `exact` is set.
fn insert_snapped<T: Scalar>(samples: &mut Vec<T>, t: T, snap: T, exact: bool) {
    let i = samples.partition_point(|&s| s < t);
    for j in [i.wrapping_sub(1), i] {
        if j < samples.len() && (samples[j] - t).abs() < snap {
            let last = samples.len() - 1;
            if exact && j != 0 && j != last {
                samples[j] = t;
            }
            return;
        }
    }
    samples.insert(i, t);
}
