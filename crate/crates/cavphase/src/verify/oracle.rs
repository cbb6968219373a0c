//! Brute-force reference solver for small box-constrained QPs: tries every
//! lower/upper/free assignment and keeps the one satisfying the KKT system.

pub struct Kkt {
    pub x: Vec<f64>,
    pub assignment: Vec<u8>,
}

/// Dense symmetric solve by Gaussian elimination with partial pivoting.
pub fn dense_solve(n: usize, a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| m[i * n + k].abs().total_cmp(&m[j * n + k].abs()))?;
        if m[p * n + k].abs() < 1e-300 {
            return None;
        }
        if p != k {
            for c in 0..n {
                m.swap(k * n + c, p * n + c);
            }
            x.swap(k, p);
        }
        for i in k + 1..n {
            let f = m[i * n + k] / m[k * n + k];
            if f != 0.0 {
                for c in k..n {
                    m[i * n + c] -= f * m[k * n + c];
                }
                x[i] -= f * x[k];
            }
        }
    }
    for k in (0..n).rev() {
        let mut s = x[k];
        for c in k + 1..n {
            s -= m[k * n + c] * x[c];
        }
        x[k] = s / m[k * n + k];
    }
    Some(x)
}

/// Enumerates all 3^n assignments (0 = free, 1 = lower, 2 = upper).
pub fn enumerate_kkt(n: usize, a: &[f64], b: &[f64], tol: f64) -> Option<Kkt> {
    let total = 3usize.pow(n as u32);
    let mut assign = vec![0u8; n];
    for code in 0..total {
        let mut c = code;
        for s in assign.iter_mut() {
            *s = (c % 3) as u8;
            c /= 3;
        }
        let mut x = vec![0.0; n];
        for i in 0..n {
            if assign[i] == 2 {
                x[i] = 1.0;
            }
        }
        let free: Vec<usize> = (0..n).filter(|&i| assign[i] == 0).collect();
        if !free.is_empty() {
            let k = free.len();
            let mut sub = vec![0.0; k * k];
            let mut rhs = vec![0.0; k];
            for (r, &i) in free.iter().enumerate() {
                rhs[r] = b[i];
                for j in 0..n {
                    if assign[j] == 2 {
                        rhs[r] -= a[i * n + j];
                    }
                }
                for (s, &j) in free.iter().enumerate() {
                    sub[r * k + s] = a[i * n + j];
                }
            }
            let y = match dense_solve(k, &sub, &rhs) {
                Some(y) => y,
                None => continue,
            };
            if y.iter().any(|&v| v < -tol || v > 1.0 + tol) {
                continue;
            }
            for (r, &i) in free.iter().enumerate() {
                x[i] = y[r];
            }
        }
        let ok = (0..n).all(|i| {
            let r: f64 = (0..n).map(|j| a[i * n + j] * x[j]).sum::<f64>() - b[i];
            match assign[i] {
                1 => r >= -tol,
                2 => r <= tol,
                _ => true,
            }
        });
        if ok {
            return Some(Kkt {
                x,
                assignment: assign,
            });
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_solve_small_system() {
        let x = dense_solve(2, &[0.0, 2.0, 3.0, 1.0], &[4.0, 5.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
        assert!(dense_solve(2, &[1.0, 1.0, 1.0, 1.0], &[1.0, 1.0]).is_none());
    }

    #[test]
    fn enumeration_clamps_scalar_problems() {
        for (b, expect) in [(-3.0, 0.0), (0.5, 0.25), (7.0, 1.0)] {
            let k = enumerate_kkt(1, &[2.0], &[b], 1e-12).unwrap();
            assert_eq!(k.x, vec![expect]);
        }
    }
}
