//! Explicit ODE integration: classical RK4 and an adaptive Runge–Kutta–Fehlberg
//! 4(5) pair with a PI step-size controller.
//!
//! Systems that carry a fast timescale declare it through
//! [`OdeSystem::stiffness_scale`]; every step is then capped at
//! `stiff_fraction · scale`.

use crate::error::{Error, Result};
use crate::linalg;

/// States whose magnitude exceeds this are treated as a blowup.
pub const BLOWUP_THRESHOLD: f64 = 1e100;
/// Smallest step the adaptive controller may propose before giving up.
pub const MIN_STEP: f64 = 1e-14;

/// An autonomous or time-dependent vector field `ẏ = F(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);

    /// Fast timescale of the field, if any (ε for the sub-optimal dynamics).
    fn stiffness_scale(&self) -> Option<f64> {
        None
    }
}

impl<T: OdeSystem + ?Sized> OdeSystem for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        (**self).rhs(t, y, dy)
    }
    fn stiffness_scale(&self) -> Option<f64> {
        (**self).stiffness_scale()
    }
}

/// Adapts a closure into an [`OdeSystem`].
pub struct FnSystem<F> {
    dim: usize,
    f: F,
    stiffness: Option<f64>,
}

impl<F: Fn(f64, &[f64], &mut [f64])> FnSystem<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f, stiffness: None }
    }

    pub fn with_stiffness(mut self, scale: f64) -> Self {
        self.stiffness = Some(scale);
        self
    }
}

impl<F: Fn(f64, &[f64], &mut [f64])> OdeSystem for FnSystem<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        (self.f)(t, y, dy)
    }
    fn stiffness_scale(&self) -> Option<f64> {
        self.stiffness
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    FixedRk4,
    AdaptiveRkf45,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorOptions {
    pub method: Method,
    /// Fixed step, or the initial step for the adaptive method.
    pub h: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub t_end: f64,
    /// Keep every `record_every`-th accepted step (the final state is always kept).
    pub record_every: usize,
    /// Step cap as a fraction of the system's stiffness scale.
    pub stiff_fraction: f64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            method: Method::AdaptiveRkf45,
            h: 1e-3,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: 0.1,
            t_end: 10.0,
            record_every: 1,
            stiff_fraction: 0.5,
        }
    }
}

impl IntegratorOptions {
    /// Defaults for the ε-dynamics: `max_step = min(0.1, 0.5 ε)`.
    pub fn for_eps(eps: f64, t_end: f64) -> Self {
        Self { max_step: 0.1_f64.min(0.5 * eps), t_end, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name}={v} must be positive and finite")))
            }
        };
        positive("h", self.h)?;
        positive("rel_tol", self.rel_tol)?;
        positive("abs_tol", self.abs_tol)?;
        positive("stiff_fraction", self.stiff_fraction)?;
        if !(self.max_step > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "max_step={} must be positive",
                self.max_step
            )));
        }
        // a zero horizon yields the initial sample only
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "t_end={} must be finite and nonnegative",
                self.t_end
            )));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter("record_every must be at least 1".into()));
        }
        Ok(())
    }

    fn step_cap(&self, sys: &dyn OdeSystem) -> f64 {
        let cap = match sys.stiffness_scale() {
            Some(s) => self.max_step.min(self.stiff_fraction * s),
            None => self.max_step,
        };
        match self.method {
            Method::FixedRk4 => self.h.min(cap),
            Method::AdaptiveRkf45 => cap,
        }
    }
}

/// A scalar function of the state evaluated at every recorded sample.
pub struct Monitor<'a> {
    pub name: String,
    pub f: Box<dyn Fn(&[f64]) -> f64 + 'a>,
}

impl<'a> Monitor<'a> {
    pub fn new(name: impl Into<String>, f: impl Fn(&[f64]) -> f64 + 'a) -> Self {
        Self { name: name.into(), f: Box::new(f) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorSeries {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Horizon,
    Converged,
    TimeLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub monitors: Vec<MonitorSeries>,
    pub stop: StopReason,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl Trajectory {
    fn start(t0: f64, y0: &[f64], monitors: &[Monitor<'_>]) -> Self {
        let mut traj = Self {
            times: Vec::new(),
            states: Vec::new(),
            monitors: monitors
                .iter()
                .map(|m| MonitorSeries { name: m.name.clone(), values: Vec::new() })
                .collect(),
            stop: StopReason::Horizon,
            accepted_steps: 0,
            rejected_steps: 0,
        };
        traj.record(t0, y0, monitors);
        traj
    }

    fn record(&mut self, t: f64, y: &[f64], monitors: &[Monitor<'_>]) {
        if self.times.last() == Some(&t) {
            return;
        }
        self.times.push(t);
        self.states.push(y.to_vec());
        for (series, m) in self.monitors.iter_mut().zip(monitors) {
            series.values.push((m.f)(y));
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn final_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn monitor(&self, name: &str) -> Option<&[f64]> {
        self.monitors
            .iter()
            .find(|m| m.name == name)
            .map(|m| m.values.as_slice())
    }

    pub fn converged(&self) -> bool {
        self.stop == StopReason::Converged
    }
}

fn check_finite(t: f64, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite() && x.abs() < BLOWUP_THRESHOLD) {
        Ok(())
    } else {
        Err(Error::Blowup { t })
    }
}

fn eval(sys: &dyn OdeSystem, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
    sys.rhs(t, y, dy);
    if dy.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Blowup { t })
    }
}

/// One classical fourth-order Runge–Kutta step of size `h` from `(t, y)`.
pub fn rk4_step(sys: &dyn OdeSystem, y: &[f64], t: f64, h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("step h={h} must be positive")));
    }
    let mut ws = Workspace::new(y.len());
    let out = ws.rk4(sys, t, y, h)?;
    Ok(out)
}

mod rkf45 {
    pub const C: [f64; 6] = [0.0, 1.0 / 4.0, 3.0 / 8.0, 12.0 / 13.0, 1.0, 1.0 / 2.0];
    pub const A: [[f64; 5]; 6] = [
        [0.0, 0.0, 0.0, 0.0, 0.0],
        [1.0 / 4.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 32.0, 9.0 / 32.0, 0.0, 0.0, 0.0],
        [1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0, 0.0, 0.0],
        [439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0, 0.0],
        [-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0],
    ];
    pub const B4: [f64; 6] = [25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -1.0 / 5.0, 0.0];
    pub const B5: [f64; 6] =
        [16.0 / 135.0, 0.0, 6656.0 / 12825.0, 28561.0 / 56430.0, -9.0 / 50.0, 2.0 / 55.0];

    pub const SAFETY: f64 = 0.9;
    pub const MIN_FACTOR: f64 = 0.2;
    pub const MAX_FACTOR: f64 = 5.0;
    // PI controller exponents for a 4(5) pair
    pub const ALPHA: f64 = 0.7 / 5.0;
    pub const BETA: f64 = 0.4 / 5.0;
}

struct Workspace {
    k: [Vec<f64>; 6],
    tmp: Vec<f64>,
}

impl Workspace {
    fn new(dim: usize) -> Self {
        Self { k: std::array::from_fn(|_| vec![0.0; dim]), tmp: vec![0.0; dim] }
    }

    fn rk4(&mut self, sys: &dyn OdeSystem, t: f64, y: &[f64], h: f64) -> Result<Vec<f64>> {
        let [k1, k2, k3, k4, _, _] = &mut self.k;
        let tmp = &mut self.tmp;
        eval(sys, t, y, k1)?;
        for i in 0..y.len() {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        eval(sys, t + 0.5 * h, tmp, k2)?;
        for i in 0..y.len() {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        eval(sys, t + 0.5 * h, tmp, k3)?;
        for i in 0..y.len() {
            tmp[i] = y[i] + h * k3[i];
        }
        eval(sys, t + h, tmp, k4)?;
        let out: Vec<f64> = (0..y.len())
            .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect();
        check_finite(t + h, &out)?;
        Ok(out)
    }

    /// Returns the fifth-order solution and the scaled RMS error estimate.
    fn rkf45(
        &mut self,
        sys: &dyn OdeSystem,
        t: f64,
        y: &[f64],
        h: f64,
        opts: &IntegratorOptions,
    ) -> Result<(Vec<f64>, f64)> {
        let n = y.len();
        for s in 0..6 {
            for i in 0..n {
                let mut acc = y[i];
                for (j, a) in rkf45::A[s].iter().enumerate().take(s) {
                    acc += h * a * self.k[j][i];
                }
                self.tmp[i] = acc;
            }
            // a non-finite stage rejects the step instead of aborting it
            if eval(sys, t + rkf45::C[s] * h, &self.tmp, &mut self.k[s]).is_err() {
                return Ok((Vec::new(), f64::INFINITY));
            }
        }
        let mut y5 = vec![0.0; n];
        let mut err_sq = 0.0;
        for i in 0..n {
            let mut hi = 0.0;
            let mut lo = 0.0;
            for s in 0..6 {
                hi += rkf45::B5[s] * self.k[s][i];
                lo += rkf45::B4[s] * self.k[s][i];
            }
            y5[i] = y[i] + h * hi;
            let scale = opts.abs_tol + opts.rel_tol * y[i].abs().max(y5[i].abs());
            let e = h * (hi - lo) / scale;
            err_sq += e * e;
        }
        let err = if n == 0 { 0.0 } else { (err_sq / n as f64).sqrt() };
        Ok((y5, if err.is_nan() { f64::INFINITY } else { err }))
    }
}

/// Stateful stepper shared by the integration drivers.
struct Stepper<'s> {
    sys: &'s dyn OdeSystem,
    opts: IntegratorOptions,
    cap: f64,
    t: f64,
    y: Vec<f64>,
    h: f64,
    err_prev: f64,
    ws: Workspace,
    accepted: usize,
    rejected: usize,
}

impl<'s> Stepper<'s> {
    fn new(sys: &'s dyn OdeSystem, y0: &[f64], opts: &IntegratorOptions) -> Result<Self> {
        opts.validate()?;
        crate::error::dim_check("initial state", sys.dim(), y0.len())?;
        check_finite(0.0, y0)?;
        let cap = opts.step_cap(sys);
        Ok(Self {
            sys,
            opts: opts.clone(),
            cap,
            t: 0.0,
            y: y0.to_vec(),
            h: opts.h.min(cap),
            err_prev: 1.0,
            ws: Workspace::new(y0.len()),
            accepted: 0,
            rejected: 0,
        })
    }

    fn close_to(&self, target: f64) -> bool {
        target - self.t <= 1e-12 * target.abs().max(1.0)
    }

    /// Takes one accepted step toward `target` without passing it.
    fn step_toward(&mut self, target: f64) -> Result<()> {
        if self.close_to(target) {
            self.t = target;
            return Ok(());
        }
        match self.opts.method {
            Method::FixedRk4 => {
                let remaining = target - self.t;
                let h = self.cap.min(remaining);
                let landing = h >= remaining;
                self.y = self.ws.rk4(self.sys, self.t, &self.y, h)?;
                self.t = if landing { target } else { self.t + h };
                self.accepted += 1;
                Ok(())
            }
            Method::AdaptiveRkf45 => loop {
                let remaining = target - self.t;
                let mut h = self.h.min(self.cap);
                let landing = h >= remaining;
                if landing {
                    h = remaining;
                }
                let (y_new, err) = self.ws.rkf45(self.sys, self.t, &self.y, h, &self.opts)?;
                if err <= 1.0 {
                    let factor = if err == 0.0 {
                        rkf45::MAX_FACTOR
                    } else {
                        (rkf45::SAFETY * err.powf(-rkf45::ALPHA) * self.err_prev.powf(rkf45::BETA))
                            .clamp(rkf45::MIN_FACTOR, rkf45::MAX_FACTOR)
                    };
                    check_finite(self.t + h, &y_new)?;
                    self.y = y_new;
                    self.t = if landing { target } else { self.t + h };
                    self.err_prev = err.max(1e-4);
                    // a short landing step should not shrink the controller's step
                    self.h = if landing { self.h.max(h * factor) } else { h * factor };
                    self.accepted += 1;
                    return Ok(());
                }
                self.rejected += 1;
                let factor = (rkf45::SAFETY * err.powf(-0.2)).max(rkf45::MIN_FACTOR);
                self.h = h * factor;
                if self.h < MIN_STEP {
                    return Err(if err.is_finite() {
                        Error::Stiffness { t: self.t, h: self.h }
                    } else {
                        Error::Blowup { t: self.t }
                    });
                }
            },
        }
    }

    fn rhs_norm(&mut self) -> Result<f64> {
        let mut dy = vec![0.0; self.y.len()];
        eval(self.sys, self.t, &self.y, &mut dy)?;
        Ok(linalg::norm(&dy))
    }
}

/// Integrates from `t = 0` to `opts.t_end`, sampling every `record_every` steps.
pub fn integrate(
    sys: &dyn OdeSystem,
    y0: &[f64],
    opts: &IntegratorOptions,
    monitors: &[Monitor<'_>],
) -> Result<Trajectory> {
    let mut st = Stepper::new(sys, y0, opts)?;
    let mut traj = Trajectory::start(0.0, y0, monitors);
    let t_end = opts.t_end;
    while st.t < t_end {
        st.step_toward(t_end)?;
        if st.accepted % opts.record_every == 0 || st.t >= t_end {
            traj.record(st.t, &st.y, monitors);
        }
    }
    traj.accepted_steps = st.accepted;
    traj.rejected_steps = st.rejected;
    Ok(traj)
}

/// Stopping rule for [`integrate_until_converged`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceCriterion {
    /// Stop once `‖F(t, y)‖` falls below this.
    pub state_tol: f64,
    pub t_max: f64,
}

impl ConvergenceCriterion {
    pub fn validate(&self) -> Result<()> {
        if !(self.state_tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "state_tol={} must be positive",
                self.state_tol
            )));
        }
        if !(self.t_max >= 0.0) || !self.t_max.is_finite() {
            return Err(Error::InvalidParameter(format!("t_max={} must be finite", self.t_max)));
        }
        Ok(())
    }
}

/// Integrates until the vector field norm drops below `crit.state_tol` or
/// `crit.t_max` is reached; `opts.t_end` is ignored.
pub fn integrate_until_converged(
    sys: &dyn OdeSystem,
    y0: &[f64],
    crit: &ConvergenceCriterion,
    opts: &IntegratorOptions,
    monitors: &[Monitor<'_>],
) -> Result<Trajectory> {
    crit.validate()?;
    let opts = IntegratorOptions { t_end: crit.t_max, ..opts.clone() };
    let mut st = Stepper::new(sys, y0, &opts)?;
    let mut traj = Trajectory::start(0.0, y0, monitors);
    if st.rhs_norm()? < crit.state_tol {
        traj.stop = StopReason::Converged;
        return Ok(traj);
    }
    traj.stop = StopReason::TimeLimit;
    while st.t < crit.t_max {
        st.step_toward(crit.t_max)?;
        let done = st.rhs_norm()? < crit.state_tol;
        if done || st.accepted % opts.record_every == 0 || st.t >= crit.t_max {
            traj.record(st.t, &st.y, monitors);
        }
        if done {
            traj.stop = StopReason::Converged;
            break;
        }
    }
    traj.accepted_steps = st.accepted;
    traj.rejected_steps = st.rejected;
    Ok(traj)
}

/// Integrates through an increasing grid of output times, landing on each
/// exactly. The first grid time must be `0`.
pub fn integrate_to_times(
    sys: &dyn OdeSystem,
    y0: &[f64],
    times: &[f64],
    opts: &IntegratorOptions,
    monitors: &[Monitor<'_>],
) -> Result<Trajectory> {
    if times.first() != Some(&0.0) {
        return Err(Error::InvalidParameter("output grid must start at t = 0".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("output grid must be strictly increasing".into()));
    }
    let t_last = *times.last().unwrap_or(&0.0);
    let opts = IntegratorOptions { t_end: t_last, ..opts.clone() };
    let mut st = Stepper::new(sys, y0, &opts)?;
    let mut traj = Trajectory::start(0.0, y0, monitors);
    for &target in &times[1..] {
        while st.t < target {
            st.step_toward(target)?;
        }
        traj.record(target, &st.y, monitors);
    }
    traj.accepted_steps = st.accepted;
    traj.rejected_steps = st.rejected;
    Ok(traj)
}
