//! Transport-equation delay lines sampled on a uniform grid.
//!
//! A [`DelayLine`] stores `φ(x, t)` at the nodes `x_i = iΔx` of `[0, α]`.
//! Time advances in steps of exactly `Δt = Δx`, so the transport
//! `φ_t + φ_x = 0` is solved by an exact shift along characteristics: the
//! boundary value enters at the head (`x = 0`) and every other sample moves
//! one node towards the tail (`x = α`), where it is read out.

use std::io::Write;

use crate::error::{Error, Result};
use crate::numkit::{Grid, SampledKernel, Vector};

/// Grid samples of a vector-valued transport profile.
///
/// Samples live in a ring buffer; `shift_in` rotates the head index and
/// overwrites the slot that drops off the tail.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayLine {
    grid: Grid,
    dim: usize,
    data: Vec<f64>,
    head: usize,
}

impl DelayLine {
    pub fn zeros(grid: Grid, dim: usize) -> Self {
        DelayLine {
            grid,
            dim,
            data: vec![0.0; grid.nodes() * dim],
            head: 0,
        }
    }

    /// Samples `f(x_i)` at every node. `f` must return `dim` values.
    pub fn from_fn(grid: Grid, dim: usize, mut f: impl FnMut(f64) -> Vec<f64>) -> Self {
        let mut line = Self::zeros(grid, dim);
        for i in 0..grid.nodes() {
            let v = f(grid.node(i));
            assert_eq!(v.len(), dim, "profile function returned wrong dimension");
            line.sample_mut(i).copy_from_slice(&v);
        }
        line
    }

    pub fn from_samples(grid: Grid, samples: &[Vector]) -> Result<Self> {
        if samples.len() != grid.nodes() {
            return Err(Error::shape(
                "DelayLine::from_samples",
                format!("{} samples", grid.nodes()),
                format!("{}", samples.len()),
            ));
        }
        let dim = samples[0].len();
        let mut line = Self::zeros(grid, dim);
        for (i, s) in samples.iter().enumerate() {
            if s.len() != dim {
                return Err(Error::shape("DelayLine::from_samples", dim, s.len()));
            }
            line.sample_mut(i).copy_from_slice(s.as_slice());
        }
        Ok(line)
    }

    /// Line filled with a past input signal: `φ(x, t) = u(t - x)`.
    ///
    /// `history(s)` is evaluated at `s = -x_i`.
    pub fn from_history(grid: Grid, dim: usize, mut history: impl FnMut(f64) -> Vec<f64>) -> Self {
        Self::from_fn(grid, dim, |x| history(-x))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn value_dim(&self) -> usize {
        self.dim
    }

    /// Number of samples, `M + 1`.
    pub fn len(&self) -> usize {
        self.grid.nodes()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    fn slot(&self, i: usize) -> usize {
        debug_assert!(i < self.len());
        let p = self.head + i;
        let n = self.len();
        if p >= n {
            p - n
        } else {
            p
        }
    }

    /// Value at node `i` (`x = iΔx`).
    #[inline]
    pub fn sample(&self, i: usize) -> &[f64] {
        let s = self.slot(i) * self.dim;
        &self.data[s..s + self.dim]
    }

    #[inline]
    pub fn sample_mut(&mut self, i: usize) -> &mut [f64] {
        let s = self.slot(i) * self.dim;
        &mut self.data[s..s + self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.len()).map(move |i| self.sample(i))
    }

    /// Scalar view of a one-dimensional line, head to tail.
    pub fn scalar_samples(&self) -> Vec<f64> {
        assert_eq!(self.dim, 1, "scalar_samples on a vector-valued line");
        self.iter().map(|s| s[0]).collect()
    }

    pub fn to_vectors(&self) -> Vec<Vector> {
        self.iter().map(Vector::from_column_slice).collect()
    }

    /// `φ(0)`, the boundary-injected value.
    pub fn head(&self) -> &[f64] {
        self.sample(0)
    }

    /// `φ(α)`, the delayed signal leaving the line.
    pub fn tail(&self) -> &[f64] {
        self.sample(self.grid.steps())
    }

    pub fn set_head(&mut self, u: &[f64]) -> Result<()> {
        self.check_dim(u.len(), "DelayLine::set_head")?;
        self.sample_mut(0).copy_from_slice(u);
        Ok(())
    }

    fn check_dim(&self, found: usize, context: &'static str) -> Result<()> {
        if found != self.dim {
            return Err(Error::shape(context, self.dim, found));
        }
        Ok(())
    }

    /// Advances one step `Δt = Δx`: every sample moves one node to the
    /// right, the tail sample is dropped and `u` enters at the head.
    pub fn shift_in(&mut self, u: &[f64]) -> Result<()> {
        self.check_dim(u.len(), "DelayLine::shift_in")?;
        self.head = if self.head == 0 {
            self.len() - 1
        } else {
            self.head - 1
        };
        self.sample_mut(0).copy_from_slice(u);
        Ok(())
    }

    /// Value-returning form of [`shift_in`](Self::shift_in).
    pub fn shifted(&self, u: &[f64]) -> Result<DelayLine> {
        let mut next = self.clone();
        next.shift_in(u)?;
        Ok(next)
    }

    /// Explicit Euler step of a distributed source:
    /// `samples[i] += Δt · kernel[i] · scalar` with `Δt = Δx`.
    pub fn add_distributed_source(&mut self, kernel: &SampledKernel, scalar: &[f64]) -> Result<()> {
        self.grid
            .ensure_same(kernel.grid(), "DelayLine::add_distributed_source")?;
        let (rows, cols) = kernel.shape();
        if rows != self.dim || cols != scalar.len() {
            return Err(Error::shape(
                "DelayLine::add_distributed_source",
                format!("{}x{} kernel", self.dim, scalar.len()),
                format!("{rows}x{cols}"),
            ));
        }
        if scalar.iter().all(|&s| s == 0.0) {
            return Ok(());
        }
        let dt = self.grid.spacing();
        for i in 0..self.len() {
            let k = kernel.sample(i);
            let out = self.sample_mut(i);
            for (r, o) in out.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (c, &s) in scalar.iter().enumerate() {
                    acc += k[(r, c)] * s;
                }
                *o += dt * acc;
            }
        }
        Ok(())
    }

    /// `e^{-λx} u` sampled on `grid`: the profile that solves
    /// `(λ - G) φ = 0` with boundary value `φ(0) = u`.
    pub fn resolvent_profile(lambda: f64, u: &[f64], grid: Grid) -> DelayLine {
        Self::from_fn(grid, u.len(), |x| {
            let s = (-lambda * x).exp();
            u.iter().map(|v| v * s).collect()
        })
    }

    /// Trapezoid `L²(0, α)` norm.
    pub fn l2_norm(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.len() {
            let w = self.grid.weight(i);
            acc += w * self.sample(i).iter().map(|v| v * v).sum::<f64>();
        }
        acc.sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self += scale · other`, node by node.
    pub fn add_scaled(&mut self, other: &DelayLine, scale: f64) -> Result<()> {
        self.grid.ensure_same(&other.grid, "DelayLine::add_scaled")?;
        self.check_dim(other.dim, "DelayLine::add_scaled")?;
        let d = self.dim;
        for i in 0..self.len() {
            let (ss, so) = (self.slot(i) * d, other.slot(i) * d);
            for k in 0..d {
                self.data[ss + k] += scale * other.data[so + k];
            }
        }
        Ok(())
    }

    /// CSV rows `x, component_0, …, component_{d-1}` from head to tail.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["x".to_string()];
        header.extend((0..self.dim).map(|k| format!("component_{k}")));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![format!("{}", self.grid.node(i))];
            row.extend(self.sample(i).iter().map(|v| format!("{v}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Matrix;
    use proptest::prelude::*;

    fn line(values: &[f64]) -> DelayLine {
        let grid = Grid::new(1.0, values.len() - 1).unwrap();
        DelayLine::from_samples(
            grid,
            &values.iter().map(|&v| Vector::from_element(1, v)).collect::<Vec<_>>(),
        )
        .unwrap()
    }

    #[test]
    fn shift_moves_right_and_injects() {
        let mut l = line(&[1.0, 2.0, 3.0]);
        l.shift_in(&[5.0]).unwrap();
        assert_eq!(l.scalar_samples(), vec![5.0, 1.0, 2.0]);
        assert_eq!(l.head(), &[5.0]);
        assert_eq!(l.tail(), &[2.0]);
    }

    #[test]
    fn zero_line_stays_zero() {
        let mut l = DelayLine::zeros(Grid::new(1.0, 4).unwrap(), 2);
        l.shift_in(&[0.0, 0.0]).unwrap();
        assert_eq!(l, {
            let mut z = DelayLine::zeros(Grid::new(1.0, 4).unwrap(), 2);
            z.shift_in(&[0.0, 0.0]).unwrap();
            z
        });
        assert!(l.iter().all(|s| s == [0.0, 0.0]));
        assert_eq!(l.tail(), &[0.0, 0.0]);
    }

    #[test]
    fn line_vanishes_after_flush() {
        let mut l = line(&[1.0, 2.0, 3.0, 4.0]);
        for _ in 0..3 {
            l.shift_in(&[0.0]).unwrap();
        }
        // after M shifts only the old boundary value remains, at x = α
        assert_eq!(l.scalar_samples(), vec![0.0, 0.0, 0.0, 1.0]);
        l.shift_in(&[0.0]).unwrap();
        assert!(l.scalar_samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn history_line_reads_delayed_signal() {
        let g = Grid::new(0.5, 50).unwrap();
        let l = DelayLine::from_history(g, 1, |s| vec![(3.0 * s).sin()]);
        assert_eq!(l.tail()[0], (3.0 * -0.5f64).sin());
        assert_eq!(l.head()[0], 0.0);
    }

    #[test]
    fn shift_rejects_wrong_dim() {
        let mut l = DelayLine::zeros(Grid::new(1.0, 3).unwrap(), 2);
        assert!(matches!(l.shift_in(&[1.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn distributed_source() {
        let g = Grid::new(1.0, 10).unwrap();
        let mut l = DelayLine::from_fn(g, 1, |x| vec![x]);
        let before = l.clone();
        let k = SampledKernel::from_fn(g, |_| Matrix::from_element(1, 1, 2.0)).unwrap();
        l.add_distributed_source(&k, &[0.0]).unwrap();
        assert_eq!(l, before);
        l.add_distributed_source(&k, &[3.0]).unwrap();
        for i in 0..l.len() {
            let expect = before.sample(i)[0] + g.spacing() * 6.0;
            assert!((l.sample(i)[0] - expect).abs() < 1e-15);
        }
        let other = SampledKernel::from_fn(Grid::new(1.0, 9).unwrap(), |_| Matrix::identity(1, 1))
            .unwrap();
        assert!(l.add_distributed_source(&other, &[1.0]).is_err());
    }

    #[test]
    fn resolvent_profiles() {
        let g = Grid::new(1.0, 100).unwrap();
        let c = DelayLine::resolvent_profile(0.0, &[2.0, -1.0], g);
        assert!(c.iter().all(|s| s == [2.0, -1.0]));
        let z = DelayLine::resolvent_profile(3.0, &[0.0], g);
        assert_eq!(z.max_abs(), 0.0);
        let e = DelayLine::resolvent_profile(1.0, &[1.0], g);
        assert!((e.tail()[0] - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn resolvent_relation_first_order() {
        // λ E - (backward difference of E) ≈ 0 away from the head
        let lambda = 1.7;
        let mut prev = f64::INFINITY;
        for m in [100, 200, 400] {
            let g = Grid::new(1.0, m).unwrap();
            let e = DelayLine::resolvent_profile(lambda, &[1.0], g).scalar_samples();
            let h = g.spacing();
            let res = (1..=m)
                .map(|i| (lambda * e[i] + (e[i] - e[i - 1]) / h).abs())
                .fold(0.0, f64::max);
            assert!(res < prev / 1.9);
            prev = res;
        }
    }

    #[test]
    fn csv_rows() {
        let l = line(&[1.0, 2.0]);
        let mut buf = Vec::new();
        l.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "x,component_0\n0,1\n1,2\n");
    }

    proptest! {
        #[test]
        fn shift_is_exact_transport(
            init in proptest::collection::vec(-10.0f64..10.0, 6),
            inputs in proptest::collection::vec(-10.0f64..10.0, 1..20),
        ) {
            let m = init.len() - 1;
            let mut l = line(&init);
            for (k, &u) in inputs.iter().enumerate() {
                l.shift_in(&[u]).unwrap();
                let shifts = k + 1;
                for i in 0..=m {
                    let expected = if i < shifts { inputs[k - i] } else { init[i - shifts] };
                    prop_assert_eq!(l.sample(i)[0], expected);
                }
            }
        }

        #[test]
        fn shifting_norm_is_bounded(
            init in proptest::collection::vec(-5.0f64..5.0, 9),
            inputs in proptest::collection::vec(-5.0f64..5.0, 1..30),
        ) {
            // ‖φ(t)‖² ≤ ‖φ(0)‖² + α·sup|u|², plus the trapezoid end-weight slack
            let mut l = line(&init);
            let g = *l.grid();
            let sup = inputs.iter().fold(0.0f64, |m, u| m.max(u.abs()));
            let bound = (l.l2_norm().powi(2)
                + 0.5 * g.spacing() * init[0] * init[0]
                + (g.length() + g.spacing()) * sup * sup)
                .sqrt();
            for &u in &inputs {
                l.shift_in(&[u]).unwrap();
                prop_assert!(l.l2_norm() <= bound + 1e-12);
            }
        }
    }
}
