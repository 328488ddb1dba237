//! Method-of-lines reference solver for `u_t + alpha (u^2)_x = nu u_xx` on
//! `x in [-1, 1], t in [0, 1]` with `u(x, 0) = -A sin(pi x)` and homogeneous
//! Dirichlet boundaries. Second-order central differences in space, classical
//! RK4 in time.

use std::f64::consts::PI;

use super::reference::{linspace, Provenance, ReferenceField};
use crate::tasks::{Family, TaskConfig};
use crate::{Error, Result};

/// Largest stable step: `min(0.4 dx^2 / nu, 0.4 dx / (2 alpha max|u|))`.
pub fn burgers_dt_bound(task: &TaskConfig, nx: usize) -> f64 {
    let (alpha, nu, amp) = (task.value(0), task.value(1), task.value(2));
    let dx = 2.0 / nx as f64;
    let diffusive = 0.4 * dx * dx / nu;
    let speed = 2.0 * alpha.abs() * amp.abs();
    let advective = if speed > 0.0 { 0.4 * dx / speed } else { f64::INFINITY };
    diffusive.min(advective)
}

/// Smallest step count that is a multiple of `snapshots` and respects the bound.
pub fn burgers_stable_steps(task: &TaskConfig, nx: usize, snapshots: usize) -> Result<usize> {
    check(task, nx)?;
    if snapshots == 0 {
        return Err(Error::Config("need at least one snapshot".into()));
    }
    let bound = burgers_dt_bound(task, nx);
    let min_steps = (1.0 / bound).ceil() as usize;
    Ok(min_steps.max(1).div_ceil(snapshots) * snapshots)
}

fn check(task: &TaskConfig, nx: usize) -> Result<()> {
    if task.family != Family::Burgers1d {
        return Err(Error::InvalidTask(format!("{} task passed to the Burgers solver", task.family)));
    }
    if !(task.value(1) > 0.0) {
        return Err(Error::InvalidTask(format!("viscosity must be positive: {:?}", task.values)));
    }
    if nx < 64 {
        return Err(Error::Config(format!("Burgers reference needs nx >= 64, got {nx}")));
    }
    Ok(())
}

fn rhs(u: &[f64], out: &mut [f64], alpha: f64, nu: f64, dx: f64) {
    let n = u.len();
    out[0] = 0.0;
    out[n - 1] = 0.0;
    let (inv2dx, invdx2) = (1.0 / (2.0 * dx), 1.0 / (dx * dx));
    for i in 1..n - 1 {
        let flux = (u[i + 1] * u[i + 1] - u[i - 1] * u[i - 1]) * inv2dx;
        let diff = (u[i + 1] - 2.0 * u[i] + u[i - 1]) * invdx2;
        out[i] = -alpha * flux + nu * diff;
    }
}

/// Solves on `nx` spatial intervals with `nt` RK4 steps to `t = 1`, keeping
/// `snapshots + 1` evenly spaced time slices. Axes are `(x, t)`.
pub fn burgers_reference_solve(
    task: &TaskConfig,
    nx: usize,
    nt: usize,
    snapshots: usize,
) -> Result<ReferenceField> {
    check(task, nx)?;
    if snapshots == 0 || nt % snapshots != 0 {
        return Err(Error::Config(format!(
            "step count {nt} must be a positive multiple of the snapshot count {snapshots}"
        )));
    }
    let (alpha, nu, amp) = (task.value(0), task.value(1), task.value(2));
    let dt = 1.0 / nt as f64;
    let bound = burgers_dt_bound(task, nx);
    if dt > bound {
        return Err(Error::Config(format!(
            "time step {dt:.3e} violates stability bound dt <= min(0.4 dx^2/nu, 0.4 dx/(2 alpha max|u|)) = {bound:.3e}"
        )));
    }
    let xs = linspace(-1.0, 1.0, nx + 1);
    let dx = 2.0 / nx as f64;
    let mut u: Vec<f64> = xs.iter().map(|&x| -amp * (PI * x).sin()).collect();
    u[0] = 0.0;
    u[nx] = 0.0;

    let every = nt / snapshots;
    let mut slices = Vec::with_capacity(snapshots + 1);
    slices.push(u.clone());
    let n = u.len();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for step in 1..=nt {
        rhs(&u, &mut k1, alpha, nu, dx);
        for i in 0..n {
            tmp[i] = u[i] + 0.5 * dt * k1[i];
        }
        rhs(&tmp, &mut k2, alpha, nu, dx);
        for i in 0..n {
            tmp[i] = u[i] + 0.5 * dt * k2[i];
        }
        rhs(&tmp, &mut k3, alpha, nu, dx);
        for i in 0..n {
            tmp[i] = u[i] + dt * k3[i];
        }
        rhs(&tmp, &mut k4, alpha, nu, dx);
        for i in 0..n {
            u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if !u[n / 2].is_finite() {
            return Err(Error::NumericOverflow {
                context: format!("Burgers solve diverged at step {step}"),
            });
        }
        if step % every == 0 {
            slices.push(u.clone());
        }
    }
    let ts = linspace(0.0, 1.0, snapshots + 1);
    let mut values = Vec::with_capacity(n * ts.len());
    for i in 0..n {
        for s in &slices {
            values.push(s[i]);
        }
    }
    ReferenceField::new(
        vec![xs, ts],
        values,
        Provenance::FiniteDifference {
            nx: nx as u32,
            nt: nt as u32,
        },
    )
}
