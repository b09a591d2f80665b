//! Multinomial NUTS with the generalized U-turn criterion and a diagonal
//! Euclidean metric.

use rand::Rng;

use super::adapt::{DualAveraging, WindowedAdaptation};
use super::draws::ChainDraws;
use super::{ChainRng, Model, SamplerConfig};
use crate::error::{Error, Result};
use crate::special::log_add_exp;

const MAX_ENERGY_ERROR: f64 = 1000.0;

#[derive(Debug, Clone)]
struct PhasePoint {
    q: Vec<f64>,
    p: Vec<f64>,
    grad: Vec<f64>,
    ln_density: f64,
}

struct Integrator<'a, M: Model> {
    model: &'a M,
    inv_metric: Vec<f64>,
    step_size: f64,
}

impl<M: Model> Integrator<'_, M> {
    fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p.iter().zip(&self.inv_metric).map(|(pi, m)| pi * pi * m).sum::<f64>()
    }

    fn hamiltonian(&self, z: &PhasePoint) -> f64 {
        let h = self.kinetic(&z.p) - z.ln_density;
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    fn velocity(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(&self.inv_metric).map(|(pi, m)| pi * m).collect()
    }

    fn leapfrog(&self, z: &mut PhasePoint, eps: f64) {
        for (p, g) in z.p.iter_mut().zip(&z.grad) {
            *p += 0.5 * eps * g;
        }
        for ((q, p), m) in z.q.iter_mut().zip(&z.p).zip(&self.inv_metric) {
            *q += eps * m * p;
        }
        z.ln_density = self.model.checked_ln_density_grad(&z.q, &mut z.grad);
        for (p, g) in z.p.iter_mut().zip(&z.grad) {
            *p += 0.5 * eps * g;
        }
    }

    fn sample_momentum(&self, rng: &mut ChainRng, p: &mut [f64]) {
        use rand_distr::{Distribution, StandardNormal};
        for (pi, m) in p.iter_mut().zip(&self.inv_metric) {
            let z: f64 = StandardNormal.sample(rng);
            *pi = z / m.sqrt();
        }
    }
}

fn no_u_turn(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Summary of a completed subtree.
struct Subtree {
    p_sharp_beg: Vec<f64>,
    p_sharp_end: Vec<f64>,
    p_beg: Vec<f64>,
    p_end: Vec<f64>,
    rho: Vec<f64>,
    ln_sum_weight: f64,
    proposal: PhasePoint,
}

#[derive(Default)]
struct TreeStats {
    n_leapfrog: usize,
    sum_metro_prob: f64,
    divergent: bool,
}

impl<M: Model> Integrator<'_, M> {
    /// Builds a subtree of `2^depth` leapfrog steps from `z` in direction
    /// `sign`. `z` ends at the far edge. Returns `None` when the subtree
    /// diverged or contains a U-turn.
    fn build_tree(
        &self,
        depth: usize,
        z: &mut PhasePoint,
        sign: f64,
        h0: f64,
        stats: &mut TreeStats,
        rng: &mut ChainRng,
    ) -> Option<Subtree> {
        if depth == 0 {
            self.leapfrog(z, sign * self.step_size);
            stats.n_leapfrog += 1;
            let h = self.hamiltonian(z);
            if h - h0 > MAX_ENERGY_ERROR {
                stats.divergent = true;
            }
            stats.sum_metro_prob += if h0 - h > 0.0 { 1.0 } else { (h0 - h).exp() };
            if stats.divergent {
                return None;
            }
            let p_sharp = self.velocity(&z.p);
            return Some(Subtree {
                p_sharp_beg: p_sharp.clone(),
                p_sharp_end: p_sharp,
                p_beg: z.p.clone(),
                p_end: z.p.clone(),
                rho: z.p.clone(),
                ln_sum_weight: h0 - h,
                proposal: z.clone(),
            });
        }
        let init = self.build_tree(depth - 1, z, sign, h0, stats, rng)?;
        let fin = self.build_tree(depth - 1, z, sign, h0, stats, rng)?;

        let ln_sum_weight = log_add_exp(init.ln_sum_weight, fin.ln_sum_weight);
        let accept = (fin.ln_sum_weight - ln_sum_weight).exp();
        let proposal = if rng.random::<f64>() < accept { fin.proposal } else { init.proposal };

        let rho = add(&init.rho, &fin.rho);
        let mut persist = no_u_turn(&init.p_sharp_beg, &fin.p_sharp_end, &rho);
        // extra checks across the junction of the two halves
        let rho_ext = add(&init.rho, &fin.p_beg);
        persist &= no_u_turn(&init.p_sharp_beg, &fin.p_sharp_beg, &rho_ext);
        let rho_ext = add(&fin.rho, &init.p_end);
        persist &= no_u_turn(&init.p_sharp_end, &fin.p_sharp_end, &rho_ext);
        if !persist {
            return None;
        }
        Some(Subtree {
            p_sharp_beg: init.p_sharp_beg,
            p_sharp_end: fin.p_sharp_end,
            p_beg: init.p_beg,
            p_end: fin.p_end,
            rho,
            ln_sum_weight,
            proposal,
        })
    }

    /// One NUTS transition from `z` (whose momentum is resampled).
    fn transition(&self, z: &PhasePoint, max_depth: usize, rng: &mut ChainRng) -> Transition {
        let mut start = z.clone();
        self.sample_momentum(rng, &mut start.p);
        let h0 = self.hamiltonian(&start);

        let mut fwd = start.clone();
        let mut bck = start.clone();
        // trajectory edges: momentum and velocity at both ends
        let mut p_fwd = start.p.clone();
        let mut p_bck = start.p.clone();
        let mut p_sharp_fwd = self.velocity(&start.p);
        let mut p_sharp_bck = p_sharp_fwd.clone();
        let mut rho = start.p.clone();
        let mut ln_sum_weight = 0.0;
        let mut sample = start.clone();
        let mut stats = TreeStats::default();
        let mut depth = 0;

        while depth < max_depth {
            let forward = rng.random::<f64>() > 0.5;
            let sub = if forward {
                self.build_tree(depth, &mut fwd, 1.0, h0, &mut stats, rng)
            } else {
                self.build_tree(depth, &mut bck, -1.0, h0, &mut stats, rng)
            };
            let Some(sub) = sub else { break };
            depth += 1;

            if sub.ln_sum_weight > ln_sum_weight
                || rng.random::<f64>() < (sub.ln_sum_weight - ln_sum_weight).exp()
            {
                sample = sub.proposal.clone();
            }
            ln_sum_weight = log_add_exp(ln_sum_weight, sub.ln_sum_weight);

            // old trajectory and new subtree, ordered backward to forward
            let (rho_bck, rho_fwd, beg_p, beg_sharp, end_p, end_sharp);
            if forward {
                rho_bck = rho.clone();
                rho_fwd = sub.rho;
                beg_p = (p_bck.clone(), p_sharp_bck.clone(), p_fwd.clone(), p_sharp_fwd.clone());
                end_p = (sub.p_beg, sub.p_sharp_beg, sub.p_end.clone(), sub.p_sharp_end.clone());
                p_fwd = sub.p_end;
                p_sharp_fwd = sub.p_sharp_end;
            } else {
                rho_fwd = rho.clone();
                rho_bck = sub.rho;
                // a backward subtree is built from its start outwards
                beg_p = (sub.p_end.clone(), sub.p_sharp_end.clone(), sub.p_beg, sub.p_sharp_beg);
                end_p = (p_bck.clone(), p_sharp_bck.clone(), p_fwd.clone(), p_sharp_fwd.clone());
                p_bck = sub.p_end;
                p_sharp_bck = sub.p_sharp_end;
            }
            let (_bck_bck, bck_bck_sharp, bck_fwd, bck_fwd_sharp) = beg_p;
            let (fwd_bck, fwd_bck_sharp, _fwd_fwd, fwd_fwd_sharp) = end_p;
            beg_sharp = bck_bck_sharp;
            end_sharp = fwd_fwd_sharp;

            rho = add(&rho_bck, &rho_fwd);
            let mut persist = no_u_turn(&beg_sharp, &end_sharp, &rho);
            let rho_ext = add(&rho_bck, &fwd_bck);
            persist &= no_u_turn(&beg_sharp, &fwd_bck_sharp, &rho_ext);
            let rho_ext = add(&rho_fwd, &bck_fwd);
            persist &= no_u_turn(&bck_fwd_sharp, &end_sharp, &rho_ext);
            if !persist {
                break;
            }
        }

        let energy_error = self.hamiltonian(&sample) - h0;
        Transition {
            point: sample,
            accept_stat: stats.sum_metro_prob / stats.n_leapfrog.max(1) as f64,
            divergent: stats.divergent,
            depth,
            n_leapfrog: stats.n_leapfrog,
            energy_error,
        }
    }

    /// Doubles or halves the step size until one leapfrog step crosses an
    /// acceptance probability of 0.8.
    fn init_step_size(&mut self, z: &PhasePoint, rng: &mut ChainRng) {
        let mut probe = z.clone();
        self.sample_momentum(rng, &mut probe.p);
        let h0 = self.hamiltonian(&probe);
        let mut trial = probe.clone();
        self.leapfrog(&mut trial, self.step_size);
        let delta = h0 - self.hamiltonian(&trial);
        let direction = if delta > 0.8f64.ln() { 1.0 } else { -1.0 };
        for _ in 0..100 {
            let mut trial = probe.clone();
            self.sample_momentum(rng, &mut trial.p);
            let h0 = self.hamiltonian(&trial);
            self.leapfrog(&mut trial, self.step_size);
            let delta = h0 - self.hamiltonian(&trial);
            if direction > 0.0 && !(delta > 0.8f64.ln()) {
                break;
            }
            if direction < 0.0 && !(delta < 0.8f64.ln()) {
                break;
            }
            let next = if direction > 0.0 { 2.0 * self.step_size } else { 0.5 * self.step_size };
            if !(next > 1e-12 && next < 1e7) {
                break;
            }
            self.step_size = next;
        }
    }
}

struct Transition {
    point: PhasePoint,
    accept_stat: f64,
    divergent: bool,
    depth: usize,
    n_leapfrog: usize,
    energy_error: f64,
}

pub(crate) fn run_chain<M: Model>(
    model: &M,
    init: Vec<f64>,
    cfg: &SamplerConfig,
    rng: &mut ChainRng,
) -> Result<ChainDraws> {
    let dim = model.dim();
    let mut grad = vec![0.0; dim];
    let ln_density = model.checked_ln_density_grad(&init, &mut grad);
    if !ln_density.is_finite() {
        return Err(Error::Init("log density is not finite at the initial point".into()));
    }
    let mut z = PhasePoint {
        q: init,
        p: vec![0.0; dim],
        grad,
        ln_density,
    };
    let mut integ = Integrator {
        model,
        inv_metric: vec![1.0; dim],
        step_size: 1.0,
    };
    integ.init_step_size(&z, rng);
    let mut dual = DualAveraging::new(cfg.target_accept, integ.step_size);
    let mut windows = WindowedAdaptation::new(dim, cfg.warmup);

    for iter in 0..cfg.warmup {
        let t = integ.transition(&z, cfg.max_depth, rng);
        z = t.point;
        integ.step_size = dual.update(t.accept_stat);
        if let Some(var) = windows.observe(iter, &z.q) {
            integ.inv_metric = var;
            integ.init_step_size(&z, rng);
            dual.restart(integ.step_size);
        }
    }
    integ.step_size = dual.final_step_size();

    let mut out = ChainDraws::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        let t = integ.transition(&z, cfg.max_depth, rng);
        z = t.point;
        out.draws.push(model.constrain(&z.q));
        out.divergent.push(t.divergent);
        out.accept_stat.push(t.accept_stat);
        out.tree_depth.push(t.depth);
        out.n_leapfrog.push(t.n_leapfrog);
        out.energy_error.push(t.energy_error);
    }
    out.step_size = integ.step_size;
    out.inv_metric = integ.inv_metric;
    Ok(out)
}
