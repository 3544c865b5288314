use crate::adapternet::ModelConfig;
use crate::error::{Error, Result};
use crate::numkit::{gelu, gelu_grad, Matrix, SeededRng};

/// One square branch of the share-adapter.
#[derive(Clone, Debug, PartialEq)]
pub struct SharePair {
    pub down: Matrix,
    pub up: Matrix,
}

impl SharePair {
    pub fn identity(r: usize) -> Self {
        Self {
            down: Matrix::identity(r),
            up: Matrix::identity(r),
        }
    }
}

/// Trainable state of one block: a local down/up projection and `M`
/// share-adapter branches, each with a scalar weight.
#[derive(Clone, Debug, PartialEq)]
pub struct FedAdapter {
    pub w_loc_d: Matrix,
    pub w_loc_u: Matrix,
    pub branches: Vec<SharePair>,
    pub alphas: Vec<f64>,
}

impl FedAdapter {
    pub fn width(&self) -> usize {
        self.w_loc_d.rows()
    }

    pub fn bottleneck(&self) -> usize {
        self.w_loc_d.cols()
    }

    pub fn num_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (m, r) = self.w_loc_d.shape();
        if r == 0 || self.w_loc_u.shape() != (r, m) {
            return Err(Error::Shape {
                op: "fed_adapter",
                lhs: self.w_loc_d.shape(),
                rhs: self.w_loc_u.shape(),
            });
        }
        if self.branches.is_empty() || self.branches.len() != self.alphas.len() {
            return Err(Error::InvalidArgument(format!(
                "{} branches but {} alphas",
                self.branches.len(),
                self.alphas.len()
            )));
        }
        for b in &self.branches {
            for mat in [&b.down, &b.up] {
                if mat.shape() != (r, r) {
                    return Err(Error::Shape {
                        op: "share_branch",
                        lhs: (r, r),
                        rhs: mat.shape(),
                    });
                }
            }
        }
        if self.alphas.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite { op: "alphas" });
        }
        Ok(())
    }

    /// `(Σ α_i·down_i, Σ α_i·up_i)`, accumulated in branch order from zero.
    pub fn combined_share(&self) -> (Matrix, Matrix) {
        let r = self.bottleneck();
        let mut s_d = Matrix::zeros(r, r);
        let mut s_u = Matrix::zeros(r, r);
        for (b, &alpha) in self.branches.iter().zip(&self.alphas) {
            s_d.add_scaled_assign(&b.down, alpha)
                .expect("validated shape");
            s_u.add_scaled_assign(&b.up, alpha)
                .expect("validated shape");
        }
        (s_d, s_u)
    }
}

/// Fresh adapter: `w_loc_d ~ N(0, 0.02²)`, `w_loc_u = 0`, identity branches,
/// own-branch scalar 1 and every other scalar 0. The owning branch is
/// `config.group_id`.
pub fn init_adapter(
    config: &ModelConfig,
    num_branches: usize,
    rng: &mut SeededRng,
) -> Result<FedAdapter> {
    if config.group_id >= num_branches {
        return Err(Error::InvalidArgument(format!(
            "group {} has no branch among {num_branches}",
            config.group_id
        )));
    }
    let (m, r) = (config.width, config.bottleneck);
    let mut alphas = vec![0.0; num_branches];
    alphas[config.group_id] = 1.0;
    Ok(FedAdapter {
        w_loc_d: rng.normal_matrix(m, r, 0.02),
        w_loc_u: Matrix::zeros(r, m),
        branches: (0..num_branches).map(|_| SharePair::identity(r)).collect(),
        alphas,
    })
}

/// Adapter with every entry random (scale `1/sqrt(fan_in)`) and scalars
/// uniform in `[-1, 1)`. Used by property checks, not by training.
pub fn random_adapter(m: usize, r: usize, num_branches: usize, rng: &mut SeededRng) -> FedAdapter {
    let share_std = 1.0 / (r as f64).sqrt();
    FedAdapter {
        w_loc_d: rng.normal_matrix(m, r, 1.0 / (m as f64).sqrt()),
        w_loc_u: rng.normal_matrix(r, m, share_std),
        branches: (0..num_branches)
            .map(|_| SharePair {
                down: rng.normal_matrix(r, r, share_std),
                up: rng.normal_matrix(r, r, share_std),
            })
            .collect(),
        alphas: (0..num_branches).map(|_| rng.uniform(-1.0, 1.0)).collect(),
    }
}

/// Intermediate values kept by [`adapter_forward`].
#[derive(Clone, Debug)]
pub struct AdapterCache {
    pub x: Matrix,
    /// `x · w_loc_d`
    pub projected: Matrix,
    /// `x · w_loc_d · S_d`, the GELU input.
    pub pre_act: Matrix,
    pub post_act: Matrix,
    /// `gelu(..) · S_u`
    pub mixed: Matrix,
    s_d: Matrix,
    s_u: Matrix,
}

/// Training-form transform `y = x + gelu(x·W_d·S_d)·S_u·W_u`.
pub fn adapter_forward(x: &Matrix, a: &FedAdapter) -> Result<(Matrix, AdapterCache)> {
    if x.cols() != a.width() {
        return Err(Error::Shape {
            op: "adapter_forward",
            lhs: x.shape(),
            rhs: a.w_loc_d.shape(),
        });
    }
    let (s_d, s_u) = a.combined_share();
    let projected = x.matmul(&a.w_loc_d)?;
    let pre_act = projected.matmul(&s_d)?;
    let post_act = gelu(&pre_act);
    let mixed = post_act.matmul(&s_u)?;
    let y = x.add(&mixed.matmul(&a.w_loc_u)?)?;
    Ok((
        y,
        AdapterCache {
            x: x.clone(),
            projected,
            pre_act,
            post_act,
            mixed,
            s_d,
            s_u,
        },
    ))
}

/// Collapses the adapter into `(A', B')` with `A' = W_d·ΣαW_sd` and
/// `B' = ΣαW_su·W_u` for inference.
pub fn adapter_fuse(a: &FedAdapter) -> Result<(Matrix, Matrix)> {
    let (s_d, s_u) = a.combined_share();
    #[allow(unused_mut)]
    let mut a_prime = a.w_loc_d.matmul(&s_d)?;
    let b_prime = s_u.matmul(&a.w_loc_u)?;
    #[cfg(feature = "fault-fuse")]
    {
        let v = a_prime.get(0, 0);
        a_prime.set(0, 0, v + 1e-6);
    }
    Ok((a_prime, b_prime))
}

/// `x + gelu(x·A')·B'`.
pub fn fused_forward(x: &Matrix, a_prime: &Matrix, b_prime: &Matrix) -> Result<Matrix> {
    x.add(&gelu(&x.matmul(a_prime)?).matmul(b_prime)?)
}

/// Gradients of one adapter. Foreign branch matrices are frozen and have no
/// entry here; every scalar does.
#[derive(Clone, Debug, PartialEq)]
pub struct AdapterGrads {
    pub w_loc_d: Matrix,
    pub w_loc_u: Matrix,
    pub own_down: Matrix,
    pub own_up: Matrix,
    pub alphas: Vec<f64>,
    pub dx: Matrix,
}

pub fn adapter_backward(
    cache: &AdapterCache,
    dy: &Matrix,
    a: &FedAdapter,
    own_branch: usize,
) -> Result<AdapterGrads> {
    if own_branch >= a.num_branches() {
        return Err(Error::InvalidArgument(format!(
            "own branch {own_branch} out of {}",
            a.num_branches()
        )));
    }
    if dy.shape() != cache.x.shape() {
        return Err(Error::Shape {
            op: "adapter_backward",
            lhs: cache.x.shape(),
            rhs: dy.shape(),
        });
    }
    let (s_d, s_u) = a.combined_share();
    if cache.x.cols() != a.width() || s_d != cache.s_d || s_u != cache.s_u {
        return Err(Error::InvalidArgument(
            "adapter cache was produced by a different adapter".into(),
        ));
    }

    let w_loc_u = cache.mixed.t_matmul(dy)?;
    let d_mixed = dy.matmul_t(&a.w_loc_u)?;
    let d_s_u = cache.post_act.t_matmul(&d_mixed)?;
    let d_post = d_mixed.matmul_t(&s_u)?;
    let d_pre = d_post.hadamard(&gelu_grad(&cache.pre_act))?;
    let d_s_d = cache.projected.t_matmul(&d_pre)?;
    let d_projected = d_pre.matmul_t(&s_d)?;
    let w_loc_d = cache.x.t_matmul(&d_projected)?;
    let dx = dy.add(&d_projected.matmul_t(&a.w_loc_d)?)?;

    let alphas = a
        .branches
        .iter()
        .map(|b| Ok(d_s_d.dot(&b.down)? + d_s_u.dot(&b.up)?))
        .collect::<Result<Vec<_>>>()?;
    let own_alpha = a.alphas[own_branch];

    Ok(AdapterGrads {
        w_loc_d,
        w_loc_u,
        own_down: d_s_d.scale(own_alpha),
        own_up: d_s_u.scale(own_alpha),
        alphas,
        dx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{frobenius_sq, gelu_scalar};

    fn cfg(group: usize, m: usize, r: usize) -> ModelConfig {
        ModelConfig {
            group_id: group,
            depth: 1,
            width: m,
            bottleneck: r,
            input_dim: m,
            num_classes: 2,
        }
    }

    #[test]
    fn fresh_adapter_is_passthrough() {
        let mut rng = SeededRng::new(1, "t");
        let a = init_adapter(&cfg(1, 6, 3), 3, &mut rng).unwrap();
        assert_eq!(a.alphas, vec![0.0, 1.0, 0.0]);
        let x = rng.normal_matrix(4, 6, 1.0);
        let (y, _) = adapter_forward(&x, &a).unwrap();
        assert_eq!(y, x);
        let (a_prime, b_prime) = adapter_fuse(&a).unwrap();
        assert_eq!(b_prime, Matrix::zeros(3, 6));
        assert_eq!(a_prime, a.w_loc_d);
    }

    #[test]
    fn init_is_deterministic() {
        let c = cfg(0, 8, 2);
        let a = init_adapter(&c, 2, &mut SeededRng::new(4, "adapter:0")).unwrap();
        let b = init_adapter(&c, 2, &mut SeededRng::new(4, "adapter:0")).unwrap();
        assert_eq!(a, b);
        assert!(init_adapter(&cfg(2, 8, 2), 2, &mut SeededRng::new(4, "x")).is_err());
    }

    #[test]
    fn single_identity_branch_reduces_to_plain_adapter() {
        let mut rng = SeededRng::new(2, "t");
        let mut a = random_adapter(5, 2, 1, &mut rng);
        a.branches[0] = SharePair::identity(2);
        a.alphas[0] = 1.0;
        let x = rng.normal_matrix(3, 5, 1.0);
        let (y, _) = adapter_forward(&x, &a).unwrap();
        let expected = x
            .add(
                &x.matmul(&a.w_loc_d)
                    .unwrap()
                    .map(gelu_scalar)
                    .matmul(&a.w_loc_u)
                    .unwrap(),
            )
            .unwrap();
        assert_eq!(y, expected);
    }

    #[test]
    fn forward_matches_explicit_sum_oracle() {
        let mut rng = SeededRng::new(42, "adapter-oracle");
        let a = random_adapter(6, 3, 2, &mut rng);
        let x = rng.normal_matrix(4, 6, 1.0);
        let (y, _) = adapter_forward(&x, &a).unwrap();

        // explicit S_d, S_u by scalar loops
        let mut s_d = Matrix::zeros(3, 3);
        let mut s_u = Matrix::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                let mut d = 0.0;
                let mut u = 0.0;
                for b in 0..2 {
                    d += a.alphas[b] * a.branches[b].down.get(i, j);
                    u += a.alphas[b] * a.branches[b].up.get(i, j);
                }
                s_d.set(i, j, d);
                s_u.set(i, j, u);
            }
        }
        let h = x
            .matmul(&a.w_loc_d)
            .unwrap()
            .matmul(&s_d)
            .unwrap()
            .map(gelu_scalar);
        let expected = x
            .add(&h.matmul(&s_u).unwrap().matmul(&a.w_loc_u).unwrap())
            .unwrap();
        assert_eq!(y, expected);
    }

    #[test]
    fn zero_alphas_fuse_to_zero() {
        let mut rng = SeededRng::new(3, "t");
        let mut a = random_adapter(4, 2, 3, &mut rng);
        a.alphas = vec![0.0; 3];
        let (ap, bp) = adapter_fuse(&a).unwrap();
        assert_eq!(frobenius_sq(&ap), 0.0);
        assert_eq!(frobenius_sq(&bp), 0.0);
    }

    #[test]
    fn fused_matches_training_form() {
        let mut rng = SeededRng::new(8, "fuse");
        for m in [4, 9, 16] {
            let a = random_adapter(m, 3, 3, &mut rng);
            let x = rng.normal_matrix(5, m, 1.0);
            let (y, _) = adapter_forward(&x, &a).unwrap();
            let (ap, bp) = adapter_fuse(&a).unwrap();
            let yf = fused_forward(&x, &ap, &bp).unwrap();
            assert!(y.max_abs_diff(&yf).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = SeededRng::new(5, "t");
        let a = random_adapter(6, 3, 2, &mut rng);
        let x = rng.normal_matrix(4, 6, 1.0);
        let (_, cache) = adapter_forward(&x, &a).unwrap();
        let g = adapter_backward(&cache, &Matrix::zeros(4, 6), &a, 1).unwrap();
        for m in [&g.w_loc_d, &g.w_loc_u, &g.own_down, &g.own_up, &g.dx] {
            assert_eq!(frobenius_sq(m), 0.0);
        }
        assert!(g.alphas.iter().all(|&v| v == 0.0));
    }

    /// Probe `f = <dy, adapter_forward(x)>` and compare each gradient against
    /// central differences.
    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = SeededRng::new(17, "adapter-fd");
        let (m, r, branches, n, own) = (6, 3, 3, 4, 1);
        let a = random_adapter(m, r, branches, &mut rng);
        let x = rng.normal_matrix(n, m, 1.0);
        let dy = rng.normal_matrix(n, m, 1.0);
        let (_, cache) = adapter_forward(&x, &a).unwrap();
        let g = adapter_backward(&cache, &dy, &a, own).unwrap();

        let probe = |a: &FedAdapter, x: &Matrix| adapter_forward(x, a).unwrap().0.dot(&dy).unwrap();
        let h = 1e-6;
        let check = |analytic: f64, fd: f64| {
            let scale = analytic.abs().max(fd.abs()).max(1e-6);
            assert!((analytic - fd).abs() / scale < 1e-4, "{analytic} vs {fd}");
        };

        type Getter = fn(&mut FedAdapter) -> &mut Matrix;
        let tensors: [(Getter, &Matrix); 4] = [
            (|a| &mut a.w_loc_d, &g.w_loc_d),
            (|a| &mut a.w_loc_u, &g.w_loc_u),
            (|a| &mut a.branches[1].down, &g.own_down),
            (|a| &mut a.branches[1].up, &g.own_up),
        ];
        for (get, grad) in tensors {
            for idx in 0..grad.len() {
                let mut plus = a.clone();
                get(&mut plus).data_mut()[idx] += h;
                let mut minus = a.clone();
                get(&mut minus).data_mut()[idx] -= h;
                check(
                    grad.data()[idx],
                    (probe(&plus, &x) - probe(&minus, &x)) / (2.0 * h),
                );
            }
        }
        for i in 0..branches {
            let mut plus = a.clone();
            plus.alphas[i] += h;
            let mut minus = a.clone();
            minus.alphas[i] -= h;
            let fd = (probe(&plus, &x) - probe(&minus, &x)) / (2.0 * h);
            check(g.alphas[i], fd);
            if i != own {
                assert!(fd.abs() > 1e-8, "foreign alpha gradient vanished");
            }
        }
        for idx in 0..x.len() {
            let mut plus = x.clone();
            plus.data_mut()[idx] += h;
            let mut minus = x.clone();
            minus.data_mut()[idx] -= h;
            check(
                g.dx.data()[idx],
                (probe(&a, &plus) - probe(&a, &minus)) / (2.0 * h),
            );
        }
    }

    #[test]
    fn backward_rejects_foreign_cache() {
        let mut rng = SeededRng::new(6, "t");
        let a = random_adapter(6, 3, 2, &mut rng);
        let b = random_adapter(6, 3, 2, &mut rng);
        let x = rng.normal_matrix(2, 6, 1.0);
        let (_, cache) = adapter_forward(&x, &a).unwrap();
        assert!(adapter_backward(&cache, &Matrix::zeros(2, 6), &b, 0).is_err());
        assert!(adapter_backward(&cache, &Matrix::zeros(2, 6), &a, 5).is_err());
    }
}
