//! Multinomial no-U-turn transitions with a diagonal Euclidean metric.
//!
//! The tree recursion follows the generalized U-turn criterion of Stan's
//! `base_nuts`, including the extra checks across subtree boundaries.

use rand::Rng;
use rand_distr::StandardNormal;

use super::LogDensity;

/// Energy error above which a trajectory is declared divergent.
pub const MAX_DELTA_H: f64 = 1000.0;

#[derive(Debug, Clone)]
pub(crate) struct PhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub grad: Vec<f64>,
    pub logp: f64,
}

impl PhasePoint {
    pub fn new<T: LogDensity + ?Sized>(target: &T, q: Vec<f64>) -> Self {
        let mut grad = vec![0.0; q.len()];
        let logp = target.log_density_and_grad(&q, &mut grad);
        PhasePoint {
            p: vec![0.0; q.len()],
            q,
            grad,
            logp,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TransitionInfo {
    pub accept_stat: f64,
    pub tree_depth: usize,
    pub n_leapfrog: usize,
    pub divergent: bool,
    pub energy: f64,
}

pub(crate) struct Integrator<'a, T: LogDensity + ?Sized> {
    pub target: &'a T,
    pub inv_metric: &'a [f64],
    pub step_size: f64,
}

impl<T: LogDensity + ?Sized> Integrator<'_, T> {
    pub fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p.iter().zip(self.inv_metric).map(|(pi, m)| pi * pi * m).sum::<f64>()
    }

    pub fn hamiltonian(&self, z: &PhasePoint) -> f64 {
        let h = self.kinetic(&z.p) - z.logp;
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    /// `dK/dp`, the velocity.
    pub fn p_sharp(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(self.inv_metric).map(|(pi, m)| pi * m).collect()
    }

    pub fn sample_momentum<R: Rng + ?Sized>(&self, z: &mut PhasePoint, rng: &mut R) {
        for (pi, m) in z.p.iter_mut().zip(self.inv_metric) {
            let n: f64 = rng.sample(StandardNormal);
            *pi = n / m.sqrt();
        }
    }

    pub fn leapfrog(&self, z: &mut PhasePoint, eps: f64) {
        let half = 0.5 * eps;
        for (pi, g) in z.p.iter_mut().zip(&z.grad) {
            *pi += half * g;
        }
        for ((qi, pi), m) in z.q.iter_mut().zip(&z.p).zip(self.inv_metric) {
            *qi += eps * m * pi;
        }
        z.logp = self.target.log_density_and_grad(&z.q, &mut z.grad);
        if !z.logp.is_finite() {
            z.logp = f64::NEG_INFINITY;
        }
        for (pi, g) in z.p.iter_mut().zip(&z.grad) {
            *pi += half * g;
        }
    }
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn add_assign(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

fn no_u_turn(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

struct TreeState {
    n_leapfrog: usize,
    sum_metro_prob: f64,
    divergent: bool,
    h0: f64,
}

/// Subtree boundary quantities written by `build_tree`.
struct Edges<'v> {
    p_sharp_beg: &'v mut Vec<f64>,
    p_sharp_end: &'v mut Vec<f64>,
    rho: &'v mut Vec<f64>,
    p_beg: &'v mut Vec<f64>,
    p_end: &'v mut Vec<f64>,
}

impl<T: LogDensity + ?Sized> Integrator<'_, T> {
    #[allow(clippy::too_many_arguments)]
    fn build_tree<R: Rng + ?Sized>(
        &self,
        depth: usize,
        z: &mut PhasePoint,
        z_propose: &mut PhasePoint,
        e: Edges<'_>,
        sign: f64,
        log_sum_weight: &mut f64,
        st: &mut TreeState,
        rng: &mut R,
    ) -> bool {
        let dim = z.q.len();
        if depth == 0 {
            self.leapfrog(z, sign * self.step_size);
            st.n_leapfrog += 1;
            let h = self.hamiltonian(z);
            if h - st.h0 > MAX_DELTA_H {
                st.divergent = true;
            }
            *log_sum_weight = log_sum_exp(*log_sum_weight, st.h0 - h);
            st.sum_metro_prob += if st.h0 - h > 0.0 { 1.0 } else { (st.h0 - h).exp() };
            z_propose.clone_from(z);
            *e.p_sharp_beg = self.p_sharp(&z.p);
            e.p_sharp_end.clone_from(e.p_sharp_beg);
            add_assign(e.rho, &z.p);
            e.p_beg.clone_from(&z.p);
            e.p_end.clone_from(&z.p);
            return !st.divergent;
        }

        let mut lsw_init = f64::NEG_INFINITY;
        let mut p_init_end = vec![0.0; dim];
        let mut p_sharp_init_end = vec![0.0; dim];
        let mut rho_init = vec![0.0; dim];
        let valid_init = self.build_tree(
            depth - 1,
            z,
            z_propose,
            Edges {
                p_sharp_beg: &mut *e.p_sharp_beg,
                p_sharp_end: &mut p_sharp_init_end,
                rho: &mut rho_init,
                p_beg: &mut *e.p_beg,
                p_end: &mut p_init_end,
            },
            sign,
            &mut lsw_init,
            st,
            rng,
        );
        if !valid_init {
            return false;
        }

        let mut z_propose_final = z.clone();
        let mut lsw_final = f64::NEG_INFINITY;
        let mut p_final_beg = vec![0.0; dim];
        let mut p_sharp_final_beg = vec![0.0; dim];
        let mut rho_final = vec![0.0; dim];
        let valid_final = self.build_tree(
            depth - 1,
            z,
            &mut z_propose_final,
            Edges {
                p_sharp_beg: &mut p_sharp_final_beg,
                p_sharp_end: &mut *e.p_sharp_end,
                rho: &mut rho_final,
                p_beg: &mut p_final_beg,
                p_end: &mut *e.p_end,
            },
            sign,
            &mut lsw_final,
            st,
            rng,
        );
        if !valid_final {
            return false;
        }

        let lsw_subtree = log_sum_exp(lsw_init, lsw_final);
        *log_sum_weight = log_sum_exp(*log_sum_weight, lsw_subtree);
        if lsw_final > lsw_subtree || rng.random::<f64>() < (lsw_final - lsw_subtree).exp() {
            std::mem::swap(z_propose, &mut z_propose_final);
        }

        let rho_subtree = add(&rho_init, &rho_final);
        add_assign(e.rho, &rho_subtree);
        let mut persist = no_u_turn(e.p_sharp_beg, e.p_sharp_end, &rho_subtree);
        persist &= no_u_turn(e.p_sharp_beg, &p_sharp_final_beg, &add(&rho_init, &p_final_beg));
        persist &= no_u_turn(&p_sharp_init_end, e.p_sharp_end, &add(&rho_final, &p_init_end));
        persist
    }

    /// One NUTS transition from `z`, which is replaced by the selected state.
    pub fn transition<R: Rng + ?Sized>(&self, z: &mut PhasePoint, max_depth: usize, rng: &mut R) -> TransitionInfo {
        let dim = z.q.len();
        self.sample_momentum(z, rng);
        let h0 = self.hamiltonian(z);

        let mut z_fwd = z.clone();
        let mut z_bck = z.clone();
        let mut z_sample = z.clone();
        let mut z_propose = z.clone();

        let ps = self.p_sharp(&z.p);
        let (mut p_sharp_fwd_fwd, mut p_sharp_fwd_bck) = (ps.clone(), ps.clone());
        let (mut p_sharp_bck_fwd, mut p_sharp_bck_bck) = (ps.clone(), ps);
        let (mut p_fwd_fwd, mut p_fwd_bck) = (z.p.clone(), z.p.clone());
        let (mut p_bck_fwd, mut p_bck_bck) = (z.p.clone(), z.p.clone());
        let mut rho = z.p.clone();

        let mut log_sum_weight = 0.0;
        let mut depth = 0;
        let mut st = TreeState {
            n_leapfrog: 0,
            sum_metro_prob: 0.0,
            divergent: false,
            h0,
        };

        while depth < max_depth {
            let mut rho_fwd = vec![0.0; dim];
            let mut rho_bck = vec![0.0; dim];
            let mut lsw_subtree = f64::NEG_INFINITY;
            let valid = if rng.random::<f64>() > 0.5 {
                rho_bck.clone_from(&rho);
                p_bck_fwd.clone_from(&p_fwd_bck);
                p_sharp_bck_fwd.clone_from(&p_sharp_fwd_bck);
                let mut zc = z_fwd.clone();
                let ok = self.build_tree(
                    depth,
                    &mut zc,
                    &mut z_propose,
                    Edges {
                        p_sharp_beg: &mut p_sharp_fwd_bck,
                        p_sharp_end: &mut p_sharp_fwd_fwd,
                        rho: &mut rho_fwd,
                        p_beg: &mut p_fwd_bck,
                        p_end: &mut p_fwd_fwd,
                    },
                    1.0,
                    &mut lsw_subtree,
                    &mut st,
                    rng,
                );
                z_fwd = zc;
                ok
            } else {
                rho_fwd.clone_from(&rho);
                p_fwd_bck.clone_from(&p_bck_fwd);
                p_sharp_fwd_bck.clone_from(&p_sharp_bck_fwd);
                let mut zc = z_bck.clone();
                let ok = self.build_tree(
                    depth,
                    &mut zc,
                    &mut z_propose,
                    Edges {
                        p_sharp_beg: &mut p_sharp_bck_fwd,
                        p_sharp_end: &mut p_sharp_bck_bck,
                        rho: &mut rho_bck,
                        p_beg: &mut p_bck_fwd,
                        p_end: &mut p_bck_bck,
                    },
                    -1.0,
                    &mut lsw_subtree,
                    &mut st,
                    rng,
                );
                z_bck = zc;
                ok
            };
            if !valid {
                break;
            }
            depth += 1;

            if lsw_subtree > log_sum_weight || rng.random::<f64>() < (lsw_subtree - log_sum_weight).exp() {
                z_sample.clone_from(&z_propose);
            }
            log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);

            rho = add(&rho_bck, &rho_fwd);
            let mut persist = no_u_turn(&p_sharp_bck_bck, &p_sharp_fwd_fwd, &rho);
            persist &= no_u_turn(&p_sharp_bck_bck, &p_sharp_fwd_bck, &add(&rho_bck, &p_fwd_bck));
            persist &= no_u_turn(&p_sharp_bck_fwd, &p_sharp_fwd_fwd, &add(&rho_fwd, &p_bck_fwd));
            if !persist {
                break;
            }
        }

        let info = TransitionInfo {
            accept_stat: if st.n_leapfrog > 0 {
                st.sum_metro_prob / st.n_leapfrog as f64
            } else {
                0.0
            },
            tree_depth: depth,
            n_leapfrog: st.n_leapfrog,
            divergent: st.divergent,
            energy: self.hamiltonian(&z_sample),
        };
        *z = z_sample;
        info
    }

    /// Doubles or halves the step size until one leapfrog step from `z` has
    /// acceptance probability crossing 0.8.
    pub fn find_reasonable_step_size<R: Rng + ?Sized>(&mut self, z: &PhasePoint, rng: &mut R) -> f64 {
        let ln_target = 0.8f64.ln();
        let try_step = |this: &Self, rng: &mut R| -> f64 {
            let mut w = z.clone();
            this.sample_momentum(&mut w, rng);
            let h0 = this.hamiltonian(&w);
            this.leapfrog(&mut w, this.step_size);
            h0 - this.hamiltonian(&w)
        };
        let delta = try_step(self, rng);
        let direction = if delta > ln_target { 1.0 } else { -1.0 };
        loop {
            let delta = try_step(self, rng);
            if (direction > 0.0 && !(delta > ln_target)) || (direction < 0.0 && !(delta < ln_target)) {
                break;
            }
            self.step_size = if direction > 0.0 {
                2.0 * self.step_size
            } else {
                0.5 * self.step_size
            };
            if self.step_size > 1e7 || self.step_size < 1e-12 {
                log::warn!("step size search stopped at {}", self.step_size);
                self.step_size = self.step_size.clamp(1e-12, 1e7);
                break;
            }
        }
        self.step_size
    }
}
