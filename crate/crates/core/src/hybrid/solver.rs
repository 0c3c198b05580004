use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{HybridArc, HybridSystem, HybridTime, JumpContext, JumpRecord, SolveError, SolverConfig, Termination};

/// Scratch space for one classical Runge–Kutta step.
struct Rk4Buffers {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Buffers {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }
}

fn rk4_into<F>(field: &F, x: &[f64], h: f64, buf: &mut Rk4Buffers, out: &mut [f64])
where
    F: Fn(&[f64], &mut [f64]) + ?Sized,
{
    let n = x.len();
    field(x, &mut buf.k1);
    for i in 0..n {
        buf.tmp[i] = x[i] + 0.5 * h * buf.k1[i];
    }
    field(&buf.tmp, &mut buf.k2);
    for i in 0..n {
        buf.tmp[i] = x[i] + 0.5 * h * buf.k2[i];
    }
    field(&buf.tmp, &mut buf.k3);
    for i in 0..n {
        buf.tmp[i] = x[i] + h * buf.k3[i];
    }
    field(&buf.tmp, &mut buf.k4);
    for i in 0..n {
        out[i] = x[i] + h / 6.0 * (buf.k1[i] + 2.0 * buf.k2[i] + 2.0 * buf.k3[i] + buf.k4[i]);
    }
}

/// One explicit fourth-order Runge–Kutta step of `ẋ = field(x)`.
pub fn rk4_step<F>(field: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64], &mut [f64]),
{
    let mut buf = Rk4Buffers::new(x.len());
    let mut out = vec![0.0; x.len()];
    rk4_into(&field, x, h, &mut buf, &mut out);
    out
}

/// [`rk4_step`] with argument and result checks.
pub fn step_flow<F>(field: F, x: &[f64], h: f64) -> Result<Vec<f64>, SolveError>
where
    F: Fn(&[f64], &mut [f64]),
{
    if !(h > 0.0) {
        return Err(SolveError::InvalidConfig("step must be positive".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SolveError::NonFiniteState { t: 0.0, j: 0 });
    }
    let out = rk4_step(field, x, h);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(SolveError::NonFiniteState { t: h, j: 0 });
    }
    Ok(out)
}

struct Recorder<'a, S: HybridSystem + ?Sized> {
    sys: &'a S,
    arc: HybridArc,
    chan: Vec<f64>,
}

impl<'a, S: HybridSystem + ?Sized> Recorder<'a, S> {
    fn push(&mut self, time: HybridTime, x: &[f64]) -> usize {
        self.chan.clear();
        self.sys.channels(x, &mut self.chan);
        self.arc.push(time, x, &self.chan);
        self.arc.len() - 1
    }
}

/// Compute one solution of `sys` from `x0`.
///
/// Flows use fixed-step RK4. When a step ends inside the jump set, the step is
/// bisected until the entry time is known to within `jump_tol`, and the
/// solution jumps there. Jumps take priority over flows on `C ∩ D`.
pub fn solve<S>(sys: &S, x0: &[f64], cfg: &SolverConfig) -> Result<HybridArc, SolveError>
where
    S: HybridSystem + ?Sized,
{
    cfg.validate()?;
    let n = sys.dim();
    if x0.len() != n {
        return Err(SolveError::DimensionMismatch {
            expected: n,
            got: x0.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x = x0.to_vec();
    if cfg.renormalize {
        sys.renormalize(&mut x);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SolveError::NonFiniteState { t: 0.0, j: 0 });
    }
    let tol = cfg.jump_tol;
    if !(sys.in_flow_set(&x, tol) || sys.in_jump_set(&x) || sys.forced_jump(&x)) {
        return Err(SolveError::DeadlockState { t: 0.0, j: 0 });
    }

    let mut rec = Recorder {
        sys,
        arc: HybridArc::new(n, sys.channel_names()),
        chan: Vec::new(),
    };
    let mut t = 0.0_f64;
    let mut j = 0_usize;
    rec.push(HybridTime::new(t, j), &x);
    let mut recorded = true;

    let mut buf = Rk4Buffers::new(n);
    let mut x_new = vec![0.0; n];
    let mut x_mid = vec![0.0; n];
    let mut recent_jumps: VecDeque<f64> = VecDeque::new();
    let mut steps = 0_usize;
    let field = |y: &[f64], dy: &mut [f64]| sys.flow(y, dy);
    let horizon_eps = 1e-12 * cfg.horizon.max(1.0);

    loop {
        let flowable = sys.in_flow_set(&x, tol);
        if sys.in_jump_set(&x) || (!flowable && sys.forced_jump(&x)) {
            if rec.arc.jumps.len() >= cfg.max_jumps {
                rec.arc.termination = Termination::MaxJumps;
                break;
            }
            let jump = sys.jump(
                &x,
                &mut JumpContext {
                    rng: &mut rng,
                    time: HybridTime::new(t, j),
                    history: &rec.arc.jumps,
                },
            )?;
            if jump.state.len() != n {
                return Err(SolveError::DimensionMismatch {
                    expected: n,
                    got: jump.state.len(),
                });
            }
            if jump.state.iter().any(|v| !v.is_finite()) {
                return Err(SolveError::NonFiniteState { t, j: j + 1 });
            }
            while recent_jumps.front().is_some_and(|&s| s < t - cfg.zeno_window) {
                recent_jumps.pop_front();
            }
            recent_jumps.push_back(t);
            if recent_jumps.len() > cfg.zeno_count {
                return Err(SolveError::ZenoGuardTripped {
                    count: recent_jumps.len(),
                    window: cfg.zeno_window,
                    t,
                });
            }
            let pre_index = if recorded {
                rec.arc.len() - 1
            } else {
                rec.push(HybridTime::new(t, j), &x)
            };
            if !sys.in_flow_set(&jump.state, tol) || sys.in_jump_set(&jump.state) {
                rec.arc.reentry_violations += 1;
            }
            rec.arc.jumps.push(JumpRecord {
                time: HybridTime::new(t, j),
                pre: x.clone(),
                post: jump.state.clone(),
                reason: jump.reason,
                sample: pre_index,
            });
            x = jump.state;
            j += 1;
            rec.push(HybridTime::new(t, j), &x);
            recorded = true;
            continue;
        }

        if t >= cfg.horizon - horizon_eps {
            break;
        }
        if !flowable {
            return Err(SolveError::DeadlockState { t, j });
        }

        let h = cfg.step.min(cfg.horizon - t);
        rk4_into(&field, &x, h, &mut buf, &mut x_new);
        if cfg.renormalize {
            sys.renormalize(&mut x_new);
        }
        let mut taken = h;
        if sys.in_jump_set(&x_new) {
            let (mut lo, mut hi) = (0.0, h);
            while hi - lo > tol {
                let mid = 0.5 * (lo + hi);
                rk4_into(&field, &x, mid, &mut buf, &mut x_mid);
                if cfg.renormalize {
                    sys.renormalize(&mut x_mid);
                }
                if sys.in_jump_set(&x_mid) {
                    hi = mid;
                    std::mem::swap(&mut x_new, &mut x_mid);
                } else {
                    lo = mid;
                }
            }
            taken = hi;
        }
        if x_new.iter().any(|v| !v.is_finite()) {
            return Err(SolveError::NonFiniteState { t: t + taken, j });
        }
        t = if taken == h && h == cfg.horizon - t {
            cfg.horizon
        } else {
            t + taken
        };
        std::mem::swap(&mut x, &mut x_new);
        steps += 1;
        recorded = false;
        if steps.is_multiple_of(cfg.record_every) || sys.in_jump_set(&x) {
            rec.push(HybridTime::new(t, j), &x);
            recorded = true;
        }
    }
    if !recorded {
        rec.push(HybridTime::new(t, j), &x);
    }
    Ok(rec.arc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hybrid::HybridSystemDef;

    #[test]
    fn zero_field_step_is_identity() {
        let x = step_flow(|_, dx| dx.fill(0.0), &[3.0], 0.1).unwrap();
        assert_eq!(x, vec![3.0]);
    }

    #[test]
    fn exponential_step_matches_closed_form() {
        let x = step_flow(|y, dy| dy[0] = y[0], &[1.0], 0.1).unwrap();
        assert!((x[0] - 0.1_f64.exp()).abs() < 1e-7);
    }

    #[test]
    fn rotation_step_preserves_norm() {
        let x0 = [0.6, 0.8];
        let x = step_flow(|y, dy| {
            dy[0] = y[1];
            dy[1] = -y[0];
        }, &x0, 1e-2)
        .unwrap();
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        assert!((r - 1.0).abs() < 1e-8);
    }

    #[test]
    fn step_flow_rejects_nonfinite() {
        let err = step_flow(|_, dy| dy[0] = f64::NAN, &[1.0], 0.1).unwrap_err();
        assert!(matches!(err, SolveError::NonFiniteState { .. }));
        assert!(step_flow(|_, dy| dy[0] = 0.0, &[1.0], 0.0).is_err());
    }

    #[test]
    fn constant_system_never_jumps() {
        let sys = HybridSystemDef::continuous(2, |_, dx| dx.fill(0.0));
        let cfg = SolverConfig {
            step: 0.1,
            horizon: 2.0,
            ..Default::default()
        };
        let arc = solve(&sys, &[1.0, 2.0], &cfg).unwrap();
        assert!(arc.jumps.is_empty());
        assert!(arc.states().all(|x| x == [1.0, 2.0]));
        assert_eq!(arc.final_time().t, 2.0);
    }

    #[test]
    fn zero_horizon_gives_single_sample() {
        let sys = HybridSystemDef::continuous(1, |_, dx| dx[0] = 1.0);
        let cfg = SolverConfig {
            horizon: 0.0,
            ..Default::default()
        };
        let arc = solve(&sys, &[0.0], &cfg).unwrap();
        assert_eq!(arc.len(), 1);
    }

    #[test]
    fn deadlock_is_reported() {
        // Flow pushes the state out of C = {x ≤ 1}; D is empty.
        let sys = HybridSystemDef::new(
            1,
            |x, tol| x[0] <= 1.0 + tol,
            |_, dx| dx[0] = 1.0,
            |_| false,
            |x, _| x.to_vec(),
        );
        let cfg = SolverConfig {
            step: 0.1,
            horizon: 5.0,
            ..Default::default()
        };
        let err = solve(&sys, &[0.0], &cfg).unwrap_err();
        assert!(matches!(err, SolveError::DeadlockState { .. }));
        // Initial state outside C ∪ D.
        assert!(matches!(
            solve(&sys, &[2.0], &cfg).unwrap_err(),
            SolveError::DeadlockState { .. }
        ));
    }

    #[test]
    fn zeno_guard_trips_on_self_loop() {
        // The jump map lands back in D: infinitely many jumps at t = 0.
        let sys = HybridSystemDef::new(
            1,
            |_, _| true,
            |_, dx| dx[0] = 0.0,
            |x| x[0] >= 0.0,
            |x, _| x.to_vec(),
        );
        let cfg = SolverConfig {
            zeno_count: 10,
            ..Default::default()
        };
        let err = solve(&sys, &[1.0], &cfg).unwrap_err();
        assert!(matches!(err, SolveError::ZenoGuardTripped { count: 11, .. }));
    }

    #[test]
    fn max_jumps_terminates() {
        let sys = HybridSystemDef::new(
            1,
            |x, tol| x[0] <= 1.0 + tol,
            |_, dx| dx[0] = 1.0,
            |x| x[0] >= 1.0,
            |_, _| vec![0.0],
        );
        let cfg = SolverConfig {
            step: 0.01,
            horizon: 100.0,
            max_jumps: 3,
            ..Default::default()
        };
        let arc = solve(&sys, &[0.0], &cfg).unwrap();
        assert_eq!(arc.jumps.len(), 3);
        assert_eq!(arc.termination, Termination::MaxJumps);
    }
}
