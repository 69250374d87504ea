//! Independent reference computations used by the integration tests.
//! Nothing here calls the solver code it is checked against.

#![allow(dead_code)]

/// Euclidean projection onto `{x : x_i ≥ floor, Σx = 1}`.
pub fn project_simplex(y: &[f64], floor: f64) -> Vec<f64> {
    let k = y.len();
    let mass = 1.0 - floor * k as f64;
    let mut sorted: Vec<f64> = y.iter().map(|v| v - floor).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        cum += v;
        let t = (cum - mass) / (i + 1) as f64;
        if v - t > 0.0 {
            tau = t;
        }
    }
    y.iter()
        .map(|v| (v - floor - tau).max(0.0) + floor)
        .collect()
}

/// `Σ_ij μ_i μ_j P_ij (h_i − h_j − β/2)²` with `h = ln π − ln π_ref`, and its gradient in π.
pub fn ipo_loss(
    p: &[Vec<f64>],
    mu: &[f64],
    pi_ref: &[f64],
    beta: f64,
    pi: &[f64],
) -> (f64, Vec<f64>) {
    let k = pi.len();
    let h: Vec<f64> = (0..k).map(|i| pi[i].ln() - pi_ref[i].ln()).collect();
    let mut f = 0.0;
    let mut dh = vec![0.0; k];
    for i in 0..k {
        for j in 0..k {
            let d = h[i] - h[j] - beta / 2.0;
            let w = mu[i] * mu[j] * p[i][j];
            f += w * d * d;
            dh[i] += 2.0 * w * d;
            dh[j] -= 2.0 * w * d;
        }
    }
    let g = (0..k).map(|i| dh[i] / pi[i]).collect();
    (f, g)
}

/// Spectral projected gradient (Barzilai–Borwein steps, nonmonotone Armijo)
/// on the simplex. Returns the minimizer and the final projected-gradient norm.
pub fn ipo_oracle(p: &[Vec<f64>], mu: &[f64], pi_ref: &[f64], beta: f64) -> (Vec<f64>, f64) {
    const FLOOR: f64 = 1e-14;
    const MEMORY: usize = 10;
    let k = mu.len();
    let mut x = vec![1.0 / k as f64; k];
    let (mut fx, mut g) = ipo_loss(p, mu, pi_ref, beta, &x);
    let mut history = vec![fx];
    let pg_norm = |x: &[f64], g: &[f64]| {
        let y: Vec<f64> = x.iter().zip(g).map(|(a, b)| a - b).collect();
        project_simplex(&y, FLOOR)
            .iter()
            .zip(x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    let mut step = 1.0 / pg_norm(&x, &g).max(1e-300);
    let mut res = pg_norm(&x, &g);
    for _ in 0..200_000 {
        if res < 1e-15 {
            break;
        }
        let y: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - step * b).collect();
        let d: Vec<f64> = project_simplex(&y, FLOOR)
            .iter()
            .zip(&x)
            .map(|(a, b)| a - b)
            .collect();
        let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        let reference = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut t = 1.0;
        let (xn, fnew, gn) = loop {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            let (fv, gv) = ipo_loss(p, mu, pi_ref, beta, &xn);
            if fv <= reference + 1e-4 * t * slope || t < 1e-12 {
                break (xn, fv, gv);
            }
            t *= 0.5;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|a| a * a).sum();
        step = if sy > 0.0 {
            (ss / sy).clamp(1e-30, 1e30)
        } else {
            1e30f64.min(step * 10.0)
        };
        x = xn;
        fx = fnew;
        g = gn;
        history.push(fx);
        if history.len() > MEMORY {
            history.remove(0);
        }
        res = pg_norm(&x, &g);
        if ss == 0.0 {
            break;
        }
    }
    (x, res)
}

/// Numerically stable `ln σ(x)`.
pub fn ln_sigmoid(x: f64) -> f64 {
    if x > 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// `−Σ_{i≠j} μ_i μ_j P_ij ln σ(θ_i − θ_j)`.
pub fn dpo_loss(p: &[Vec<f64>], mu: &[f64], theta: &[f64]) -> f64 {
    let k = mu.len();
    let mut total = 0.0;
    for i in 0..k {
        for j in 0..k {
            if i != j {
                total -= mu[i] * mu[j] * p[i][j] * ln_sigmoid(theta[i] - theta[j]);
            }
        }
    }
    total
}

/// Smallest subset whose members all strictly beat every outsider.
pub fn brute_force_smith(p: &[Vec<f64>]) -> Vec<usize> {
    let k = p.len();
    let mut best: Option<Vec<usize>> = None;
    for mask in 1u32..(1 << k) {
        let set: Vec<usize> = (0..k).filter(|i| mask >> i & 1 == 1).collect();
        let dominant = set
            .iter()
            .all(|&i| (0..k).filter(|j| mask >> j & 1 == 0).all(|j| p[i][j] > 0.5));
        if dominant && best.as_ref().is_none_or(|b| set.len() < b.len()) {
            best = Some(set);
        }
    }
    best.expect("the full set is dominant")
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &t in &idx[i..=j] {
            r[t] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

/// `ln π` shifted to sum zero.
pub fn centered_log(pi: &[f64]) -> Vec<f64> {
    let l: Vec<f64> = pi.iter().map(|x| x.ln()).collect();
    let m = l.iter().sum::<f64>() / l.len() as f64;
    l.iter().map(|x| x - m).collect()
}

pub fn inf_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
