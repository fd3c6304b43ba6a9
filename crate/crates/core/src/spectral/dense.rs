//! Dense real nonsymmetric eigenvalues: balancing, reduction to upper
//! Hessenberg form by stabilized elimination, then Francis double-shift QR.

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        DenseMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut m = DenseMatrix::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), n, "matrix must be square");
            m.data[i * n..(i + 1) * n].copy_from_slice(r);
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub fn modulus(self) -> f64 {
        self.re.hypot(self.im)
    }
}

/// 1-based view used by the QR sweep, which is easier to keep faithful to the
/// classical formulation with explicit index arithmetic.
struct Work {
    n: usize,
    a: Vec<f64>,
}

impl Work {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[(i - 1) * self.n + (j - 1)]
    }
    #[inline]
    fn put(&mut self, i: usize, j: usize, v: f64) {
        self.a[(i - 1) * self.n + (j - 1)] = v;
    }
    #[inline]
    fn sub(&mut self, i: usize, j: usize, v: f64) {
        self.a[(i - 1) * self.n + (j - 1)] -= v;
    }
}

fn balance(a: &mut DenseMatrix) {
    const RADIX: f64 = 2.0;
    let n = a.n;
    let sqrdx = RADIX * RADIX;
    loop {
        let mut done = true;
        for i in 0..n {
            let (mut r, mut c) = (0.0, 0.0);
            for j in 0..n {
                if j != i {
                    c += a.get(j, i).abs();
                    r += a.get(i, j).abs();
                }
            }
            if c != 0.0 && r != 0.0 {
                let mut g = r / RADIX;
                let mut f = 1.0;
                let s = c + r;
                while c < g {
                    f *= RADIX;
                    c *= sqrdx;
                }
                g = r * RADIX;
                while c > g {
                    f /= RADIX;
                    c /= sqrdx;
                }
                if (c + r) / f < 0.95 * s {
                    done = false;
                    let g = 1.0 / f;
                    for j in 0..n {
                        a.set(i, j, a.get(i, j) * g);
                    }
                    for j in 0..n {
                        a.set(j, i, a.get(j, i) * f);
                    }
                }
            }
        }
        if done {
            break;
        }
    }
}

fn hessenberg(a: &mut DenseMatrix) {
    let n = a.n;
    if n < 3 {
        return;
    }
    for m in 1..n - 1 {
        let mut x = 0.0f64;
        let mut i = m;
        for j in m..n {
            if a.get(j, m - 1).abs() > x.abs() {
                x = a.get(j, m - 1);
                i = j;
            }
        }
        if i != m {
            for j in (m - 1)..n {
                let t = a.get(i, j);
                a.set(i, j, a.get(m, j));
                a.set(m, j, t);
            }
            for j in 0..n {
                let t = a.get(j, i);
                a.set(j, i, a.get(j, m));
                a.set(j, m, t);
            }
        }
        if x != 0.0 {
            for i in (m + 1)..n {
                let mut y = a.get(i, m - 1);
                if y != 0.0 {
                    y /= x;
                    a.set(i, m - 1, y);
                    for j in m..n {
                        a.set(i, j, a.get(i, j) - y * a.get(m, j));
                    }
                    for j in 0..n {
                        a.set(j, m, a.get(j, m) + y * a.get(j, i));
                    }
                }
            }
        }
    }
    for i in 2..n {
        for j in 0..i - 1 {
            a.set(i, j, 0.0);
        }
    }
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Eigenvalues of an upper Hessenberg matrix. `None` if some eigenvalue needs
/// more than `max_iter` QR sweeps.
fn hqr(h: DenseMatrix, max_iter: usize) -> Option<Vec<Complex>> {
    let n = h.n;
    let mut w = Work { n, a: h.data };
    let mut wr = vec![0.0; n + 1];
    let mut wi = vec![0.0; n + 1];
    let mut anorm = 0.0;
    for i in 1..=n {
        for j in i.saturating_sub(1).max(1)..=n {
            anorm += w.at(i, j).abs();
        }
    }
    let mut nn = n;
    let mut t = 0.0;
    let (mut p, mut q, mut r): (f64, f64, f64);
    let (mut x, mut y, mut z);
    while nn >= 1 {
        let mut its = 0;
        loop {
            let mut l = nn;
            while l >= 2 {
                let mut s = w.at(l - 1, l - 1).abs() + w.at(l, l).abs();
                if s == 0.0 {
                    s = anorm;
                }
                if w.at(l, l - 1).abs() + s == s {
                    w.put(l, l - 1, 0.0);
                    break;
                }
                l -= 1;
            }
            x = w.at(nn, nn);
            if l == nn {
                wr[nn] = x + t;
                wi[nn] = 0.0;
                nn -= 1;
            } else {
                y = w.at(nn - 1, nn - 1);
                let ww = w.at(nn, nn - 1) * w.at(nn - 1, nn);
                if l == nn - 1 {
                    p = 0.5 * (y - x);
                    q = p * p + ww;
                    z = q.abs().sqrt();
                    x += t;
                    if q >= 0.0 {
                        z = p + sign(z, p);
                        wr[nn - 1] = x + z;
                        wr[nn] = x + z;
                        if z != 0.0 {
                            wr[nn] = x - ww / z;
                        }
                        wi[nn - 1] = 0.0;
                        wi[nn] = 0.0;
                    } else {
                        wr[nn - 1] = x + p;
                        wr[nn] = x + p;
                        wi[nn - 1] = -z;
                        wi[nn] = z;
                    }
                    nn -= 2;
                } else {
                    if its == max_iter {
                        return None;
                    }
                    let mut ww = ww;
                    if its > 0 && its % 10 == 0 {
                        // exceptional shift
                        t += x;
                        for i in 1..=nn {
                            w.sub(i, i, x);
                        }
                        let s = w.at(nn, nn - 1).abs() + w.at(nn - 1, nn - 2).abs();
                        x = 0.75 * s;
                        y = x;
                        ww = -0.4375 * s * s;
                    }
                    its += 1;
                    let mut m = nn - 2;
                    loop {
                        z = w.at(m, m);
                        let rr = x - z;
                        let s = y - z;
                        p = (rr * s - ww) / w.at(m + 1, m) + w.at(m, m + 1);
                        q = w.at(m + 1, m + 1) - z - rr - s;
                        r = w.at(m + 2, m + 1);
                        let s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = w.at(m, m - 1).abs() * (q.abs() + r.abs());
                        let v = p.abs() * (w.at(m - 1, m - 1).abs() + z.abs() + w.at(m + 1, m + 1).abs());
                        if u + v == v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in (m + 2)..=nn {
                        w.put(i, i - 2, 0.0);
                        if i != m + 2 {
                            w.put(i, i - 3, 0.0);
                        }
                    }
                    let mut k = m;
                    while k < nn {
                        if k != m {
                            p = w.at(k, k - 1);
                            q = w.at(k + 1, k - 1);
                            r = 0.0;
                            if k != nn - 1 {
                                r = w.at(k + 2, k - 1);
                            }
                            x = p.abs() + q.abs() + r.abs();
                            if x != 0.0 {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        let s = sign((p * p + q * q + r * r).sqrt(), p);
                        if s != 0.0 {
                            if k == m {
                                if l != m {
                                    let v = w.at(k, k - 1);
                                    w.put(k, k - 1, -v);
                                }
                            } else {
                                w.put(k, k - 1, -s * x);
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nn {
                                p = w.at(k, j) + q * w.at(k + 1, j);
                                if k != nn - 1 {
                                    p += r * w.at(k + 2, j);
                                    w.sub(k + 2, j, p * z);
                                }
                                w.sub(k + 1, j, p * y);
                                w.sub(k, j, p * x);
                            }
                            let mmin = if nn < k + 3 { nn } else { k + 3 };
                            for i in l..=mmin {
                                p = x * w.at(i, k) + y * w.at(i, k + 1);
                                if k != nn - 1 {
                                    p += z * w.at(i, k + 2);
                                    w.sub(i, k + 2, p * r);
                                }
                                w.sub(i, k + 1, p * q);
                                w.sub(i, k, p);
                            }
                        }
                        k += 1;
                    }
                }
            }
            if nn < 2 || l + 1 >= nn {
                break;
            }
        }
    }
    Some(
        (1..=n)
            .map(|i| Complex {
                re: wr[i],
                im: wi[i],
            })
            .collect(),
    )
}

/// All eigenvalues of a general real square matrix.
pub fn eigenvalues(m: &DenseMatrix) -> Option<Vec<Complex>> {
    match m.n {
        0 => return Some(Vec::new()),
        1 => {
            return Some(vec![Complex {
                re: m.data[0],
                im: 0.0,
            }])
        }
        _ => {}
    }
    let mut a = m.clone();
    balance(&mut a);
    hessenberg(&mut a);
    hqr(a, 300)
}
