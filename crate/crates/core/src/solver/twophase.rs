use std::time::Instant;

use super::band::{BandLdl, BandMatrix};
use super::nlp::{PolyhedralNlp, SparseRows};
use super::projection::{inf_norm, Projector};
use super::{IterationRecord, Phase, SolveReport, SolverConfig, SolverError, Termination};

/// Relative slack below which objective differences are treated as rounding.
const ROUNDING_SLACK: f64 = 1e-13;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sufficient decrease, or a rounding-level change whose endpoint slope shows
/// the step has not overshot the one-dimensional minimizer.
fn acceptable(f: f64, ft: f64, slope: f64, end_slope: f64, sigma: f64) -> bool {
    ft <= f + sigma * slope
        || (ft <= f + ROUNDING_SLACK * (1.0 + f.abs()) && end_slope <= 0.8 * slope.abs())
}

/// Orthogonal projector onto `{d : d_i = 0 off the free set, B d = 0}`.
struct FaceSpace {
    free: Vec<bool>,
    ldl: BandLdl,
    rhs: Vec<f64>,
    back: Vec<f64>,
}

impl FaceSpace {
    fn new(
        matrix: &SparseRows,
        columns: &[Vec<(usize, f64)>],
        width: usize,
        free: Vec<bool>,
    ) -> Self {
        let mut band = BandMatrix::zeros(matrix.nrows(), width);
        for (i, col) in columns.iter().enumerate() {
            if !free[i] {
                continue;
            }
            for (a, &(ra, va)) in col.iter().enumerate() {
                for &(rb, vb) in &col[..=a] {
                    band.add(ra, rb, va * vb);
                }
            }
        }
        let ldl = band.factor(1e-12);
        Self {
            free,
            ldl,
            rhs: vec![0.0; matrix.nrows()],
            back: vec![0.0; matrix.ncols()],
        }
    }

    fn project(&mut self, matrix: &SparseRows, v: &[f64], out: &mut [f64]) {
        for i in 0..v.len() {
            out[i] = if self.free[i] { v[i] } else { 0.0 };
        }
        if matrix.nrows() == 0 {
            return;
        }
        matrix.mul(out, &mut self.rhs);
        self.ldl.solve_in_place(&mut self.rhs);
        matrix.mul_transpose(&self.rhs, &mut self.back);
        for i in 0..v.len() {
            if self.free[i] {
                out[i] -= self.back[i];
            }
        }
    }
}

/// Limited-memory inverse Hessian on a fixed face.
struct Memory {
    cap: usize,
    pairs: Vec<(Vec<f64>, Vec<f64>, f64)>,
}

impl Memory {
    fn new(cap: usize) -> Self {
        Self {
            cap,
            pairs: Vec::new(),
        }
    }

    fn clear(&mut self) {
        self.pairs.clear();
    }

    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        let scale = dot(&s, &s).sqrt() * dot(&y, &y).sqrt();
        if !(sy > 1e-12 * scale) || self.cap == 0 {
            return;
        }
        if self.pairs.len() == self.cap {
            self.pairs.remove(0);
        }
        self.pairs.push((s, y, 1.0 / sy));
    }

    /// `out = -H r`.
    fn direction(&self, r: &[f64], default_scale: f64, out: &mut [f64]) {
        out.copy_from_slice(r);
        let mut alphas = vec![0.0; self.pairs.len()];
        for (idx, (s, y, rho)) in self.pairs.iter().enumerate().rev() {
            let a = rho * dot(s, out);
            alphas[idx] = a;
            for (o, yi) in out.iter_mut().zip(y) {
                *o -= a * yi;
            }
        }
        let gamma = match self.pairs.last() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => default_scale,
        };
        out.iter_mut().for_each(|v| *v *= gamma);
        for (idx, (s, y, rho)) in self.pairs.iter().enumerate() {
            let b = rho * dot(y, out);
            for (o, si) in out.iter_mut().zip(s) {
                *o += (alphas[idx] - b) * si;
            }
        }
        out.iter_mut().for_each(|v| *v = -*v);
    }
}

fn active_set(z: &[f64], lo: &[f64], hi: &[f64]) -> Vec<bool> {
    z.iter()
        .zip(lo.iter().zip(hi))
        .map(|(v, (l, h))| v <= l || v >= h)
        .collect()
}

struct Stationarity {
    projector: Projector,
    trial: Vec<f64>,
    out: Vec<f64>,
}

impl Stationarity {
    fn measure(&mut self, z: &[f64], g: &[f64]) -> Result<f64, SolverError> {
        for i in 0..z.len() {
            self.trial[i] = z[i] - g[i];
        }
        self.projector.project(&self.trial, &mut self.out)?;
        Ok(self
            .out
            .iter()
            .zip(z)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// Minimizes `nlp` from `z0` (projected first).
pub fn solve(
    nlp: &PolyhedralNlp,
    z0: &[f64],
    cfg: &SolverConfig,
) -> Result<SolveReport, SolverError> {
    cfg.validate()?;
    let dim = nlp.dim();
    if z0.len() != dim {
        return Err(SolverError::DimensionMismatch {
            expected: dim,
            found: z0.len(),
        });
    }
    let start = Instant::now();
    let (lo, hi) = (&nlp.lower, &nlp.upper);
    let matrix = &nlp.equality;
    let columns = matrix.columns();
    let width = matrix.normal_band_width();
    let mut step_proj = Projector::for_nlp(nlp, cfg.projection_tol);
    let mut stat = Stationarity {
        projector: Projector::for_nlp(nlp, cfg.projection_tol),
        trial: vec![0.0; dim],
        out: vec![0.0; dim],
    };

    let mut z = vec![0.0; dim];
    step_proj.project(z0, &mut z)?;
    let mut g = vec![0.0; dim];
    let mut f = nlp.objective.value_and_gradient(&z, &mut g)?;
    let mut evaluations = 1usize;
    let mut e = stat.measure(&z, &g)?;

    let gnorm = inf_norm(&g);
    let mut alpha = cfg
        .initial_step
        .unwrap_or(if gnorm > 0.0 { 1.0 / gnorm } else { 1.0 })
        .clamp(cfg.min_step, cfg.max_step);

    let mut zt = vec![0.0; dim];
    let mut gt = vec![0.0; dim];
    let mut y = vec![0.0; dim];
    let mut r = vec![0.0; dim];
    let mut rt = vec![0.0; dim];
    let mut dir = vec![0.0; dim];

    let mut phase = Phase::GradientProjection;
    let mut prev_active: Option<Vec<bool>> = None;
    let mut face: Option<FaceSpace> = None;
    let mut memory = Memory::new(cfg.memory);
    let (mut it1, mut it2) = (0usize, 0usize);
    let mut trace = Vec::new();
    let mut last_phase = phase;
    let mut last_step = 0.0;

    let termination = loop {
        if let Some(every) = cfg.trace_every {
            let iteration = it1 + it2;
            if phase != last_phase || iteration % every.max(1) == 0 {
                trace.push(IterationRecord {
                    iteration,
                    phase,
                    objective: f,
                    stationarity: e,
                    step: last_step,
                    free: z
                        .iter()
                        .zip(lo.iter().zip(hi))
                        .filter(|(v, (l, h))| l < v && v < h)
                        .count(),
                });
            }
            last_phase = phase;
        }
        if e <= cfg.tol {
            break Termination::Converged;
        }
        if it1 + it2 >= cfg.max_iters {
            break Termination::MaxIters;
        }
        match phase {
            Phase::GradientProjection => {
                it1 += 1;
                let znorm = 1.0 + inf_norm(&z);
                let mut a = alpha;
                let mut accepted = None;
                for _ in 0..200 {
                    for i in 0..dim {
                        y[i] = z[i] - a * g[i];
                    }
                    if step_proj.project(&y, &mut zt).is_err() {
                        // extreme trial points can defeat the projection's accuracy
                        step_proj.reset();
                        a *= cfg.backtrack;
                        continue;
                    }
                    let moved = zt
                        .iter()
                        .zip(&z)
                        .map(|(p, q)| (p - q).abs())
                        .fold(0.0, f64::max);
                    if moved <= 1e-15 * znorm {
                        break;
                    }
                    let slope: f64 = (0..dim).map(|i| g[i] * (zt[i] - z[i])).sum();
                    if let Ok(ft) = nlp.objective.value_and_gradient(&zt, &mut gt) {
                        evaluations += 1;
                        let end_slope: f64 = (0..dim).map(|i| gt[i] * (zt[i] - z[i])).sum();
                        if ft.is_finite() && acceptable(f, ft, slope, end_slope, cfg.armijo) {
                            accepted = Some(ft);
                            break;
                        }
                    }
                    a *= cfg.backtrack;
                }
                let Some(ft) = accepted else {
                    break Termination::LineSearchFailure;
                };
                let (mut ss, mut sy) = (0.0, 0.0);
                for i in 0..dim {
                    let s = zt[i] - z[i];
                    ss += s * s;
                    sy += s * (gt[i] - g[i]);
                }
                last_step = a;
                alpha = if sy > 0.0 { ss / sy } else { 4.0 * a };
                alpha = alpha.clamp(cfg.min_step, cfg.max_step);
                std::mem::swap(&mut z, &mut zt);
                std::mem::swap(&mut g, &mut gt);
                f = ft;
                let active = active_set(&z, lo, hi);
                if prev_active.as_ref() == Some(&active) {
                    phase = Phase::ActiveFace;
                    face = None;
                }
                prev_active = Some(active);
            }
            Phase::ActiveFace => {
                let space = face.get_or_insert_with(|| {
                    memory.clear();
                    let free = active_set(&z, lo, hi).into_iter().map(|a| !a).collect();
                    FaceSpace::new(matrix, &columns, width, free)
                });
                space.project(matrix, &g, &mut r);
                if inf_norm(&r) <= cfg.face_exit_ratio * e {
                    phase = Phase::GradientProjection;
                    prev_active = None;
                    face = None;
                    continue;
                }
                it2 += 1;
                memory.direction(&r, alpha, &mut y);
                space.project(matrix, &y, &mut dir);
                let mut slope = dot(&r, &dir);
                if !(slope < 0.0) {
                    memory.clear();
                    for i in 0..dim {
                        dir[i] = -alpha * r[i];
                    }
                    slope = dot(&r, &dir);
                }
                let mut amax = f64::INFINITY;
                for i in 0..dim {
                    if dir[i] > 0.0 {
                        amax = amax.min((hi[i] - z[i]) / dir[i]);
                    } else if dir[i] < 0.0 {
                        amax = amax.min((lo[i] - z[i]) / dir[i]);
                    }
                }
                let mut t = amax.min(1.0);
                let mut accepted = None;
                for _ in 0..60 {
                    let hits = t >= amax;
                    for i in 0..dim {
                        let v = z[i] + t * dir[i];
                        zt[i] = v.clamp(lo[i], hi[i]);
                        if hits && dir[i] != 0.0 {
                            let bound = if dir[i] > 0.0 { hi[i] } else { lo[i] };
                            if (bound - z[i]) / dir[i] <= amax * (1.0 + 1e-12) {
                                zt[i] = bound;
                            }
                        }
                    }
                    if matrix.residual_norm(&zt) > cfg.projection_tol * (1.0 + inf_norm(&zt)) {
                        y.copy_from_slice(&zt);
                        step_proj.project(&y, &mut zt)?;
                    }
                    let slope_t: f64 = (0..dim).map(|i| g[i] * (zt[i] - z[i])).sum();
                    if let Ok(ft) = nlp.objective.value_and_gradient(&zt, &mut gt) {
                        evaluations += 1;
                        let end_slope: f64 = (0..dim).map(|i| gt[i] * (zt[i] - z[i])).sum();
                        if ft.is_finite()
                            && slope_t < 0.0
                            && acceptable(f, ft, slope_t, end_slope, cfg.armijo)
                        {
                            accepted = Some((ft, hits));
                            break;
                        }
                    }
                    t *= cfg.backtrack;
                }
                let Some((ft, hit)) = accepted else {
                    phase = Phase::GradientProjection;
                    prev_active = None;
                    face = None;
                    continue;
                };
                last_step = t;
                let space = face.as_mut().expect("face is set in this phase");
                space.project(matrix, &gt, &mut rt);
                let s: Vec<f64> = zt.iter().zip(&z).map(|(a, b)| a - b).collect();
                let yv: Vec<f64> = rt.iter().zip(&r).map(|(a, b)| a - b).collect();
                std::mem::swap(&mut z, &mut zt);
                std::mem::swap(&mut g, &mut gt);
                f = ft;
                if hit {
                    phase = Phase::GradientProjection;
                    prev_active = None;
                    face = None;
                } else {
                    memory.push(s, yv);
                }
            }
        }
        e = stat.measure(&z, &g)?;
    };

    Ok(SolveReport {
        z,
        objective: f,
        stationarity: e,
        phase1_iters: it1,
        phase2_iters: it2,
        evaluations,
        elapsed: start.elapsed(),
        termination,
        trace,
    })
}
