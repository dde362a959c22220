//! Derivative-free box-constrained minimisation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmOptions {
    pub max_evals: usize,
    /// Stop when the simplex diameter (unit-box coordinates) falls below this.
    pub x_tol: f64,
    /// ... and the spread of objective values falls below this.
    pub f_tol: f64,
}

impl Default for NmOptions {
    fn default() -> Self {
        NmOptions { max_evals: 2000, x_tol: 1e-10, f_tol: 1e-14 }
    }
}

/// Maps unit-box coordinates into `[lo, hi]`.
#[derive(Debug, Clone)]
pub struct UnitBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl UnitBox {
    pub fn to_box(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(self.lo.iter().zip(&self.hi)).map(|(v, (l, h))| l + v * (h - l)).collect()
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.lo.iter().zip(&self.hi)).map(|(v, (l, h))| (v - l) / (h - l)).collect()
    }
}

/// Reflects a coordinate at the faces of `[0, 1]`, then clamps.
fn reflect(u: &mut [f64]) {
    for v in u.iter_mut() {
        if *v < 0.0 {
            *v = -*v;
        }
        if *v > 1.0 {
            *v = 2.0 - *v;
        }
        *v = v.clamp(0.0, 1.0);
    }
}

/// Nelder-Mead on the unit box starting at `u0` with initial edge `step`.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: &F, u0: &[f64], step: f64, opts: NmOptions) -> (Vec<f64>, f64, usize) {
    let d = u0.len();
    let mut simplex: Vec<Vec<f64>> = vec![u0.to_vec()];
    for j in 0..d {
        let mut v = u0.to_vec();
        v[j] += if v[j] + step <= 1.0 { step } else { -step };
        reflect(&mut v);
        simplex.push(v);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let mut evals = d + 1;
    let point = |c: &[f64], w: &[f64], t: f64| -> Vec<f64> {
        let mut v: Vec<f64> = c.iter().zip(w).map(|(a, b)| a + t * (b - a)).collect();
        reflect(&mut v);
        v
    };
    while evals < opts.max_evals {
        let mut idx: Vec<usize> = (0..=d).collect();
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        vals = idx.iter().map(|&i| vals[i]).collect();
        let diam = simplex[1..]
            .iter()
            .map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if diam < opts.x_tol && (vals[d] - vals[0]).abs() <= opts.f_tol * (1.0 + vals[0].abs()) {
            break;
        }
        let centroid: Vec<f64> = (0..d).map(|j| simplex[..d].iter().map(|v| v[j]).sum::<f64>() / d as f64).collect();
        let worst = simplex[d].clone();
        let xr = point(&centroid, &worst, -1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < vals[0] {
            let xe = point(&centroid, &worst, -2.0);
            let fe = f(&xe);
            evals += 1;
            if fe < fr {
                simplex[d] = xe;
                vals[d] = fe;
            } else {
                simplex[d] = xr;
                vals[d] = fr;
            }
        } else if fr < vals[d - 1] {
            simplex[d] = xr;
            vals[d] = fr;
        } else {
            let (xc, fc) = if fr < vals[d] {
                let xc = point(&centroid, &worst, -0.5);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = point(&centroid, &worst, 0.5);
                let fc = f(&xc);
                (xc, fc)
            };
            evals += 1;
            if fc < vals[d].min(fr) {
                simplex[d] = xc;
                vals[d] = fc;
            } else {
                let best = simplex[0].clone();
                for i in 1..=d {
                    simplex[i] = point(&best, &simplex[i], 0.5);
                    vals[i] = f(&simplex[i]);
                }
                evals += d;
            }
        }
    }
    let (bi, bv) =
        vals.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, v)| if *v < acc.1 { (i, *v) } else { acc });
    (simplex[bi].clone(), bv, evals)
}

/// Repeated Nelder-Mead restarts from the incumbent with shrinking simplices.
pub fn polish<F: Fn(&[f64]) -> f64>(f: &F, u0: &[f64], f0: f64, opts: NmOptions) -> (Vec<f64>, f64) {
    let (mut best, mut fbest) = (u0.to_vec(), f0);
    let mut step = 1e-2;
    for _ in 0..6 {
        let (u, v, _) = nelder_mead(f, &best, step, opts);
        if v < fbest {
            best = u;
            fbest = v;
        } else {
            step *= 0.1;
            if step < 1e-12 {
                break;
            }
        }
    }
    (best, fbest)
}

/// `n` Latin-hypercube points in the unit cube of dimension `d`.
pub fn latin_hypercube<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; d]; n];
    for j in 0..d {
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let k = rng.random_range(0..=i);
            perm.swap(i, k);
        }
        for (pt, k) in pts.iter_mut().zip(&perm) {
            pt[j] = (*k as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    pts
}

/// Levenberg-Marquardt on a residual vector over the unit box, with a
/// central-difference Jacobian. Returns the final point.
pub fn levenberg_marquardt<F: Fn(&[f64]) -> Option<Vec<f64>>>(r: &F, u0: &[f64], iters: usize) -> Vec<f64> {
    let d = u0.len();
    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let mut u = u0.to_vec();
    let Some(mut res) = r(&u) else { return u };
    let mut cost = sq(&res);
    let mut damping = 1e-3;
    for _ in 0..iters {
        if cost == 0.0 {
            break;
        }
        let m = res.len();
        let mut jac = DMatrix::<f64>::zeros(m, d);
        let mut ok = true;
        for j in 0..d {
            let h = 1e-7 * (1.0 + u[j].abs());
            let mut up = u.clone();
            let mut dn = u.clone();
            up[j] += h;
            dn[j] -= h;
            match (r(&up), r(&dn)) {
                (Some(a), Some(b)) => {
                    for i in 0..m {
                        jac[(i, j)] = (a[i] - b[i]) / (2.0 * h);
                    }
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            break;
        }
        let rv = DVector::from_vec(res.clone());
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * rv;
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for j in 0..d {
                a[(j, j)] += damping * (jtj[(j, j)].max(1e-300));
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                damping *= 10.0;
                continue;
            };
            let cand: Vec<f64> = u.iter().zip(step.iter()).map(|(a, b)| (a + b).clamp(0.0, 1.0)).collect();
            if let Some(rc) = r(&cand) {
                let c = sq(&rc);
                if c < cost {
                    u = cand;
                    res = rc;
                    cost = c;
                    damping = (damping * 0.3).max(1e-15);
                    improved = true;
                    break;
                }
            }
            damping *= 10.0;
        }
        if !improved {
            break;
        }
    }
    u
}
