//! Two-site DMRG for `H = -sum Z_i Z_{i+1} + g sum X_i` (open chain).

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::thin_svd;
use crate::mpo::{expectation, Mpo, Mps};
use crate::rng::rng_from;
use crate::tt::{chain, Core};

const W: usize = 3;
const ENERGY_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 50;
/// Largest discarded weight per truncation.
const DISCARD_TOL: f64 = 1e-14;

#[derive(Clone, Debug)]
pub struct DmrgResult {
    pub state: Mps,
    /// `<psi|H|psi>` of the returned normalized state.
    pub energy: f64,
    /// Lowest Ritz value at the end of every sweep.
    pub sweep_energies: Vec<f64>,
}

/// Bulk operator-valued transfer matrix `W[w][u]` as `(w, u, s, t)`:
/// row 2 = `[gX, -Z, I]`, row 1 = `[Z, 0, 0]`, row 0 = `[I, 0, 0]`.
fn bulk(g: f64) -> Vec<f64> {
    let mut w = vec![0.0; W * W * 4];
    let mut put = |a: usize, b: usize, op: [[f64; 2]; 2]| {
        for s in 0..2 {
            for t in 0..2 {
                w[a + W * (b + W * (s + 2 * t))] = op[s][t];
            }
        }
    };
    let id = [[1.0, 0.0], [0.0, 1.0]];
    let z = [[1.0, 0.0], [0.0, -1.0]];
    let x = [[0.0, 1.0], [1.0, 0.0]];
    put(0, 0, id);
    put(1, 0, z);
    put(2, 0, [[g * x[0][0], g * x[0][1]], [g * x[1][0], g * x[1][1]]]);
    put(2, 1, [[-z[0][0], 0.0], [0.0, -z[1][1]]]);
    put(2, 2, id);
    w
}

/// The Hamiltonian as an MPO with bond dimension 3 (boundary cores select
/// row 2 on the left and column 0 on the right).
pub fn ising_mpo(n: usize, g: f64) -> Result<Mpo> {
    if n < 2 {
        return Err(Error::InvalidArgument("Ising chain needs n >= 2".into()));
    }
    let w = bulk(g);
    let at = |a: usize, b: usize, i: usize, j: usize| Complex64::new(w[a + W * (b + W * (i + 2 * j))], 0.0);
    let cores = (0..n)
        .map(|k| {
            let (l, r) = (if k == 0 { 1 } else { W }, if k + 1 == n { 1 } else { W });
            Core::from_fn(l, 4, r, |a, s, b| {
                let a = if k == 0 { 2 } else { a };
                let b = if k + 1 == n { 0 } else { b };
                at(a, b, s % 2, s / 2)
            })
        })
        .collect();
    Mpo::new(2, cores)
}

/// Environment `(a, w, a')` flattened `a + la * (w + W * a')`.
struct Env {
    dim: usize,
    data: Vec<f64>,
}

impl Env {
    fn boundary(w: usize) -> Self {
        let mut data = vec![0.0; W];
        data[w] = 1.0;
        Self { dim: 1, data }
    }

    fn at(&self, a: usize, w: usize, b: usize) -> f64 {
        self.data[a + self.dim * (w + W * b)]
    }
}

fn extend_left(env: &Env, a: &Core<f64>, wop: &[f64]) -> Env {
    let (la, rb) = (a.left(), a.right());
    let mut data = vec![0.0; rb * W * rb];
    for w in 0..W {
        for u in 0..W {
            for s in 0..2 {
                for t in 0..2 {
                    let o = wop[w + W * (u + W * (s + 2 * t))];
                    if o == 0.0 {
                        continue;
                    }
                    // sum_{a, a'} A(a,s,b) env(a,w,a') A(a',t,b')
                    for b2 in 0..rb {
                        for a2 in 0..la {
                            let at2 = a.at(a2, t, b2) * o;
                            if at2 == 0.0 {
                                continue;
                            }
                            for a1 in 0..la {
                                let e = env.at(a1, w, a2) * at2;
                                if e == 0.0 {
                                    continue;
                                }
                                for b1 in 0..rb {
                                    data[b1 + rb * (u + W * b2)] += a.at(a1, s, b1) * e;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Env { dim: rb, data }
}

fn extend_right(env: &Env, b: &Core<f64>, wop: &[f64]) -> Env {
    let (la, rb) = (b.left(), b.right());
    let mut data = vec![0.0; la * W * la];
    for w in 0..W {
        for v in 0..W {
            for s in 0..2 {
                for t in 0..2 {
                    let o = wop[w + W * (v + W * (s + 2 * t))];
                    if o == 0.0 {
                        continue;
                    }
                    for b2 in 0..rb {
                        for b1 in 0..rb {
                            let e = env.at(b1, v, b2) * o;
                            if e == 0.0 {
                                continue;
                            }
                            for a2 in 0..la {
                                let eb = e * b.at(a2, t, b2);
                                for a1 in 0..la {
                                    data[a1 + la * (w + W * a2)] += b.at(a1, s, b1) * eb;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Env { dim: la, data }
}

/// `theta(a, s1, s2, b)` flattened `a + la * (s1 + 2 * (s2 + 2 * b))`.
fn apply_two_site(left: &Env, right: &Env, wop: &[f64], theta: &[f64], la: usize, rb: usize) -> Vec<f64> {
    // P(a, w, t1, t2, b') = sum_a' L(a, w, a') theta(a', t1, t2, b')
    let mut p = vec![0.0; la * W * 4 * rb];
    for rest in 0..4 * rb {
        for a2 in 0..la {
            let th = theta[a2 + la * rest];
            if th == 0.0 {
                continue;
            }
            for w in 0..W {
                for a1 in 0..la {
                    p[a1 + la * (w + W * rest)] += left.at(a1, w, a2) * th;
                }
            }
        }
    }
    // Q(a, u, s1, t2, b') = sum_{w, t1} W(w, u, s1, t1) P(a, w, t1, t2, b')
    let mut q = vec![0.0; la * W * 4 * rb];
    for b in 0..rb {
        for t2 in 0..2 {
            for w in 0..W {
                for u in 0..W {
                    for s1 in 0..2 {
                        for t1 in 0..2 {
                            let o = wop[w + W * (u + W * (s1 + 2 * t1))];
                            if o == 0.0 {
                                continue;
                            }
                            let src = la * (w + W * (t1 + 2 * (t2 + 2 * b)));
                            let dst = la * (u + W * (s1 + 2 * (t2 + 2 * b)));
                            for a in 0..la {
                                q[dst + a] += o * p[src + a];
                            }
                        }
                    }
                }
            }
        }
    }
    // S(a, s1, v, s2, b') = sum_{u, t2} W(u, v, s2, t2) Q(a, u, s1, t2, b')
    let mut sbuf = vec![0.0; la * 2 * W * 2 * rb];
    for b in 0..rb {
        for s1 in 0..2 {
            for u in 0..W {
                for v in 0..W {
                    for s2 in 0..2 {
                        for t2 in 0..2 {
                            let o = wop[u + W * (v + W * (s2 + 2 * t2))];
                            if o == 0.0 {
                                continue;
                            }
                            let src = la * (u + W * (s1 + 2 * (t2 + 2 * b)));
                            let dst = la * (s1 + 2 * (v + W * (s2 + 2 * b)));
                            for a in 0..la {
                                sbuf[dst + a] += o * q[src + a];
                            }
                        }
                    }
                }
            }
        }
    }
    // out(a, s1, s2, b) = sum_{v, b'} R(b, v, b') S(a, s1, v, s2, b')
    let mut out = vec![0.0; la * 4 * rb];
    for b2 in 0..rb {
        for v in 0..W {
            for b1 in 0..rb {
                let r = right.at(b1, v, b2);
                if r == 0.0 {
                    continue;
                }
                for s2 in 0..2 {
                    for s1 in 0..2 {
                        let src = la * (s1 + 2 * (v + W * (s2 + 2 * b2)));
                        let dst = la * (s1 + 2 * (s2 + 2 * b1));
                        for a in 0..la {
                            out[dst + a] += r * sbuf[src + a];
                        }
                    }
                }
            }
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Lowest eigenpair of a symmetric operator by restarted Lanczos with full
/// reorthogonalization.
fn lanczos(op: impl Fn(&[f64]) -> Vec<f64>, start: Vec<f64>) -> (f64, Vec<f64>) {
    let dim = start.len();
    let krylov = dim.min(40);
    let mut v = start;
    if normalize(&mut v) == 0.0 {
        v = vec![1.0 / (dim as f64).sqrt(); dim];
    }
    let mut best = (f64::INFINITY, v.clone());
    for _ in 0..20 {
        let mut basis: Vec<Vec<f64>> = vec![v.clone()];
        let mut alpha = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let mut tail = 0.0;
        for j in 0..krylov {
            let mut w = op(&basis[j]);
            alpha.push(dot(&w, &basis[j]));
            for _ in 0..2 {
                for b in &basis {
                    let c = dot(&w, b);
                    w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
                }
            }
            let nrm = normalize(&mut w);
            tail = nrm;
            if j + 1 == krylov || nrm < 1e-13 {
                break;
            }
            beta.push(nrm);
            basis.push(w);
        }
        let m = alpha.len();
        let t = DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                alpha[i]
            } else if i + 1 == j {
                beta[i]
            } else if j + 1 == i {
                beta[j]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let (imin, &theta) = eig.eigenvalues.iter().enumerate().min_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap();
        let y = eig.eigenvectors.column(imin);
        let mut ritz = vec![0.0; dim];
        for (c, b) in y.iter().zip(&basis) {
            ritz.iter_mut().zip(b).for_each(|(x, bv)| *x += c * bv);
        }
        normalize(&mut ritz);
        let residual = (tail * y[m - 1]).abs();
        best = (theta, ritz.clone());
        if residual < 1e-12 * theta.abs().max(1.0) || m < krylov {
            break;
        }
        v = ritz;
    }
    best
}

fn split(theta: &[f64], la: usize, rb: usize, max_bond: usize, move_right: bool) -> (Core<f64>, Core<f64>) {
    let m = DMatrix::from_column_slice(la * 2, 2 * rb, theta);
    let (u, s, vt) = thin_svd(&m);
    let total: f64 = s.iter().map(|x| x * x).sum();
    let mut keep = s.len().min(max_bond);
    let mut discarded: f64 = s[keep..].iter().map(|x| x * x).sum();
    while keep > 1 && discarded + s[keep - 1] * s[keep - 1] <= DISCARD_TOL * total {
        discarded += s[keep - 1] * s[keep - 1];
        keep -= 1;
    }
    let norm_kept: f64 = s[..keep].iter().map(|x| x * x).sum::<f64>().sqrt();
    let uk = DMatrix::from_fn(la * 2, keep, |r, c| u[(r, c)]);
    let vk = DMatrix::from_fn(keep, 2 * rb, |r, c| vt[(r, c)]);
    let sk: Vec<f64> = s[..keep].iter().map(|x| x / norm_kept).collect();
    if move_right {
        let svt = DMatrix::from_fn(keep, 2 * rb, |r, c| sk[r] * vk[(r, c)]);
        (Core::from_left_unfolding(&uk, la, 2), Core::from_right_unfolding(&svt, 2, rb))
    } else {
        let us = DMatrix::from_fn(la * 2, keep, |r, c| uk[(r, c)] * sk[c]);
        (Core::from_left_unfolding(&us, la, 2), Core::from_right_unfolding(&vk, 2, rb))
    }
}

fn merge(a: &Core<f64>, b: &Core<f64>) -> Vec<f64> {
    (a.left_unfolding() * b.right_unfolding()).as_slice().to_vec()
}

/// Ground state of the open transverse-field Ising chain by two-site DMRG
/// with bond dimension cap `max_bond`.
pub fn ising_ground(n: usize, g: f64, max_bond: usize) -> Result<DmrgResult> {
    if !(2..=20).contains(&n) || max_bond < 2 {
        return Err(Error::InvalidArgument("DMRG supports 2 <= n <= 20 and D >= 2".into()));
    }
    let wop = bulk(g);
    let bonds = super::capped_bonds(n, 2, max_bond);
    let mut full = vec![1];
    full.extend(&bonds);
    full.push(1);
    let mut rng = rng_from(0x1519);
    let init: Vec<Core<f64>> = (0..n).map(|k| Core::from_fn(full[k], 2, full[k + 1], |_, _, _| rng.random::<f64>() - 0.5)).collect();
    let mut cores = chain::right_orthogonalize(&init);
    let mut rights: Vec<Env> = Vec::with_capacity(n + 1);
    rights.push(Env::boundary(0));
    for k in (1..n).rev() {
        let next = extend_right(rights.last().unwrap(), &cores[k], &wop);
        rights.push(next);
    }
    rights.reverse(); // rights[k] is the environment right of site k
    let mut rights: Vec<Option<Env>> = rights.into_iter().map(Some).collect();
    rights.insert(0, None);
    // now rights[k + 1] is right of site k for k in 0..n
    let mut lefts: Vec<Option<Env>> = (0..=n).map(|_| None).collect();
    lefts[0] = Some(Env::boundary(2));

    let mut sweep_energies: Vec<f64> = Vec::new();
    let mut energy = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        for k in 0..n - 1 {
            energy = optimize_bond(&mut cores, &lefts, &rights, &wop, k, max_bond, true);
            lefts[k + 1] = Some(extend_left(lefts[k].as_ref().unwrap(), &cores[k], &wop));
        }
        for k in (0..n - 1).rev() {
            energy = optimize_bond(&mut cores, &lefts, &rights, &wop, k, max_bond, false);
            rights[k + 1] = Some(extend_right(rights[k + 2].as_ref().unwrap(), &cores[k + 1], &wop));
        }
        let converged = sweep_energies.last().is_some_and(|&prev: &f64| (prev - energy).abs() < ENERGY_TOL);
        sweep_energies.push(energy);
        if converged {
            let state = Mps::new(2, cores.iter().map(|c| c.map(|x| Complex64::new(x, 0.0))).collect())?.normalized()?;
            let exact = expectation(&state, &ising_mpo(n, g)?)?.re;
            return Ok(DmrgResult { state, energy: exact, sweep_energies });
        }
    }
    Err(Error::NotConverged { sweeps: MAX_SWEEPS, energy })
}

fn optimize_bond(
    cores: &mut [Core<f64>],
    lefts: &[Option<Env>],
    rights: &[Option<Env>],
    wop: &[f64],
    k: usize,
    max_bond: usize,
    move_right: bool,
) -> f64 {
    let (la, rb) = (cores[k].left(), cores[k + 1].right());
    let left = lefts[k].as_ref().expect("left environment built");
    let right = rights[k + 2].as_ref().expect("right environment built");
    let theta = merge(&cores[k], &cores[k + 1]);
    let (e, v) = lanczos(|x| apply_two_site(left, right, wop, x, la, rb), theta);
    let (a, b) = split(&v, la, rb, max_bond, move_right);
    cores[k] = a;
    cores[k + 1] = b;
    e
}
