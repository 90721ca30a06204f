//! Ultra-local augmentation of the transformed plant and the algebraic fault
//! reconstruction that reads the augmented estimate.
//!
//! Each lumped signal (`beta1 = g + Q1 fn`, `beta2 = fl`, `beta3 = fy`) is
//! modelled by an integrator chain of length `r_k` whose last derivative is
//! treated as an exogenous input. The augmented state is ordered
//! `[x; beta1; rho1; beta2; rho2; beta3; rho3]`, where `rho_k` stacks the
//! derivatives `1..r_k-1` of `beta_k`.

use crate::error::{dim_err, Error, Result};
use crate::matlib::{self, Mat, Vector};
use crate::model::TransformedPlant;

/// Derivative orders of the three ultra-local chains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UltraLocalOrders {
    pub r1: usize,
    pub r2: usize,
    pub r3: usize,
}

impl UltraLocalOrders {
    pub fn new(r1: usize, r2: usize, r3: usize) -> Result<Self> {
        if r1 == 0 || r2 == 0 || r3 == 0 {
            return Err(Error::InvalidArgument(format!(
                "ultra-local orders must be >= 1, got ({r1}, {r2}, {r3})"
            )));
        }
        Ok(Self { r1, r2, r3 })
    }

    pub fn uniform(r: usize) -> Result<Self> {
        Self::new(r, r, r)
    }
}

/// Offsets and widths of the blocks inside the augmented state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub n: usize,
    pub n_v: usize,
    pub n_g: usize,
    pub n_fl: usize,
    pub n_fy: usize,
    pub n_d: usize,
    pub orders: UltraLocalOrders,
}

impl StateLayout {
    pub fn beta1(&self) -> usize {
        self.n
    }
    pub fn beta2(&self) -> usize {
        self.beta1() + self.orders.r1 * self.n_g
    }
    pub fn beta3(&self) -> usize {
        self.beta2() + self.orders.r2 * self.n_fl
    }
    pub fn n_z(&self) -> usize {
        self.beta3() + self.orders.r3 * self.n_fy
    }
    /// Rows of the performance selector `Cbar_a`.
    pub fn n_perf(&self) -> usize {
        self.n_v + self.n_g + self.n_fl + self.n_fy
    }
    /// Columns of `D_a`: the plant disturbance plus one top derivative per channel.
    pub fn n_omega(&self) -> usize {
        self.n_d + self.n_g + self.n_fl + self.n_fy
    }

    /// `(offset, width, order)` for each of the three chains.
    pub fn chains(&self) -> [(usize, usize, usize); 3] {
        [
            (self.beta1(), self.n_g, self.orders.r1),
            (self.beta2(), self.n_fl, self.orders.r2),
            (self.beta3(), self.n_fy, self.orders.r3),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct AugmentedSystem {
    pub layout: StateLayout,
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
    pub cbar1: Mat,
    pub cbar2: Mat,
    pub cbar3: Mat,
    pub v_a: Mat,
    /// `[V_a; Cbar1; Cbar2; Cbar3]`.
    pub cbar_a: Mat,
}

impl AugmentedSystem {
    pub fn n_z(&self) -> usize {
        self.layout.n_z()
    }
    pub fn m(&self) -> usize {
        self.c.nrows()
    }
}

fn selector(rows: usize, n_z: usize, offset: usize) -> Mat {
    let mut m = Mat::zeros(rows, n_z);
    if rows > 0 {
        m.view_mut((0, offset), (rows, rows)).fill_with_identity();
    }
    m
}

pub fn build_augmented(tp: &TransformedPlant, orders: UltraLocalOrders) -> Result<AugmentedSystem> {
    let p = &tp.base;
    if tp.q2.ncols() != tp.r2.nrows() {
        return Err(dim_err("Q2/R2 inner dimension", tp.q2.ncols(), tp.r2.nrows()));
    }
    let layout = StateLayout {
        n: p.n(),
        n_v: p.n_v(),
        n_g: p.n_g(),
        n_fl: tp.n_fl(),
        n_fy: p.n_fy(),
        n_d: p.n_d(),
        orders,
    };
    let (n, n_z) = (layout.n, layout.n_z());

    let mut a = Mat::zeros(n_z, n_z);
    a.view_mut((0, 0), (n, n)).copy_from(&p.a);
    a.view_mut((0, layout.beta1()), (n, layout.n_g)).copy_from(&p.s);
    a.view_mut((0, layout.beta2()), (n, layout.n_fl)).copy_from(&tp.q2);

    let mut d = Mat::zeros(n_z, layout.n_omega());
    d.view_mut((0, 0), (n, layout.n_d)).copy_from(&p.d);

    let mut col = layout.n_d;
    for (offset, width, order) in layout.chains() {
        if width == 0 {
            continue;
        }
        // shift structure: derivative j feeds derivative j-1
        for j in 0..order - 1 {
            a.view_mut((offset + j * width, offset + (j + 1) * width), (width, width))
                .fill_with_identity();
        }
        // the r-th derivative enters the last link of the chain
        d.view_mut((offset + (order - 1) * width, col), (width, width))
            .fill_with_identity();
        col += width;
    }

    let mut b = Mat::zeros(n_z, p.l());
    b.view_mut((0, 0), (n, p.l())).copy_from(&p.b);

    let mut c = Mat::zeros(p.m(), n_z);
    c.view_mut((0, 0), (p.m(), n)).copy_from(&p.c);
    c.view_mut((0, layout.beta3()), (p.m(), layout.n_fy)).copy_from(&p.fy);

    let cbar1 = selector(layout.n_g, n_z, layout.beta1());
    let cbar2 = selector(layout.n_fl, n_z, layout.beta2());
    let cbar3 = selector(layout.n_fy, n_z, layout.beta3());
    let mut v_a = Mat::zeros(layout.n_v, n_z);
    v_a.view_mut((0, 0), (layout.n_v, n)).copy_from(&p.v);
    let cbar_a = matlib::vstack(&[&v_a, &cbar1, &cbar2, &cbar3])?;

    Ok(AugmentedSystem {
        layout,
        a,
        b,
        c,
        d,
        cbar1,
        cbar2,
        cbar3,
        v_a,
        cbar_a,
    })
}

/// Algebraic fault reconstruction with the left inverses precomputed.
#[derive(Debug, Clone)]
pub struct FaultReconstructor {
    /// Left inverse of `[R1; R2]`, `n_fx x (k1 + n_fl)`.
    r_stack_linv: Mat,
    /// Left inverse of `Q1`, `k1 x n_g`.
    q1_linv: Mat,
    cbar1: Mat,
    cbar2: Mat,
    cbar3: Mat,
    v_a: Mat,
}

impl FaultReconstructor {
    pub fn new(aug: &AugmentedSystem, tp: &TransformedPlant, tol: f64) -> Result<Self> {
        let r_stack = matlib::vstack(&[&tp.r1, &tp.r2])?;
        Ok(Self {
            r_stack_linv: matlib::left_inverse(&r_stack, tol)?,
            q1_linv: matlib::left_inverse(&tp.q1, tol)?,
            cbar1: aug.cbar1.clone(),
            cbar2: aug.cbar2.clone(),
            cbar3: aug.cbar3.clone(),
            v_a: aug.v_a.clone(),
        })
    }

    /// `(fx_hat, fy_hat)` from an augmented-state estimate.
    pub fn estimate(
        &self,
        tp: &TransformedPlant,
        xhat_a: &Vector,
        u: &Vector,
        t: f64,
    ) -> Result<(Vector, Vector)> {
        if xhat_a.len() != self.v_a.ncols() {
            return Err(dim_err("xhat_a", self.v_a.ncols(), xhat_a.len()));
        }
        let g = tp.base.eval_g_projected(&(&self.v_a * xhat_a), u, t)?;
        let lumped = &self.cbar1 * xhat_a - g;
        let aligned = &self.q1_linv * lumped;
        let orthogonal = &self.cbar2 * xhat_a;
        let mut stacked = Vector::zeros(aligned.len() + orthogonal.len());
        stacked.rows_mut(0, aligned.len()).copy_from(&aligned);
        stacked
            .rows_mut(aligned.len(), orthogonal.len())
            .copy_from(&orthogonal);
        let fx = &self.r_stack_linv * stacked;
        let fy = &self.cbar3 * xhat_a;
        Ok((fx, fy))
    }
}

/// One-shot reconstruction; builds the left inverses on every call.
pub fn extract_fault_estimates(
    aug: &AugmentedSystem,
    tp: &TransformedPlant,
    xhat_a: &Vector,
    u: &Vector,
    t: f64,
) -> Result<(Vector, Vector)> {
    FaultReconstructor::new(aug, tp, matlib::DEFAULT_RANK_TOL)?.estimate(tp, xhat_a, u, t)
}

/// The performance signals `[V x; beta1; beta2; beta3]` of the true plant,
/// i.e. what `Cbar_a x_a` equals on the exact augmented state.
pub fn true_performance_signals(
    tp: &TransformedPlant,
    x: &Vector,
    u: &Vector,
    t: f64,
    fx: &Vector,
    fy: &Vector,
) -> Result<Vector> {
    let p = &tp.base;
    let vx = &p.v * x;
    let beta1 = p.eval_g_projected(&vx, u, t)? + &tp.s_pinv * &p.fx * fx;
    let beta2 = &tp.r2 * fx;
    let parts = [vx.as_slice(), beta1.as_slice(), beta2.as_slice(), fy.as_slice()];
    Ok(Vector::from_iterator(
        parts.iter().map(|s| s.len()).sum(),
        parts.iter().flat_map(|s| s.iter().copied()),
    ))
}

/// Assemble an augmented state from its blocks. `rho_k` holds the higher
/// derivatives (length `(r_k - 1) * width_k`).
pub fn assemble_state(
    layout: &StateLayout,
    x: &Vector,
    chains: [(&Vector, &Vector); 3],
) -> Result<Vector> {
    let mut out = Vector::zeros(layout.n_z());
    if x.len() != layout.n {
        return Err(dim_err("x", layout.n, x.len()));
    }
    out.rows_mut(0, layout.n).copy_from(x);
    for ((offset, width, order), (beta, rho)) in layout.chains().into_iter().zip(chains) {
        if beta.len() != width || rho.len() != width * (order - 1) {
            return Err(dim_err(
                "chain block",
                format!("{width} + {}", width * (order - 1)),
                format!("{} + {}", beta.len(), rho.len()),
            ));
        }
        out.rows_mut(offset, width).copy_from(beta);
        out.rows_mut(offset + width, rho.len()).copy_from(rho);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{transform, PlantModel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
        Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn small_plant() -> TransformedPlant {
        // n = 2, n_g = 1, Fx with an S-orthogonal part, one faulty sensor
        let plant = PlantModel::linear(
            Mat::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]),
            Mat::from_row_slice(2, 1, &[0.0, 1.0]),
            Mat::from_row_slice(2, 1, &[0.0, 1.0]),
            Mat::identity(2, 2),
            Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            Mat::from_row_slice(2, 1, &[1.0, 0.0]),
            Mat::from_row_slice(2, 1, &[0.0, 1.0]),
            Mat::zeros(2, 0),
        )
        .unwrap();
        transform(plant, 1e-10).unwrap()
    }

    #[test]
    fn hand_assembled_small_instance() {
        let tp = small_plant();
        assert_eq!(tp.n_fl(), 1);
        let aug = build_augmented(&tp, UltraLocalOrders::uniform(2).unwrap()).unwrap();
        assert_eq!(aug.n_z(), 8);
        // rows: x1 x2 b1 b1' b2 b2' b3 b3'
        let mut a = Mat::zeros(8, 8);
        a[(0, 1)] = 1.0;
        a[(1, 0)] = -2.0;
        a[(1, 1)] = -3.0;
        a[(1, 2)] = 1.0; // S
        a[(0, 4)] = tp.q2[(0, 0)]; // Q2
        a[(1, 4)] = tp.q2[(1, 0)];
        a[(2, 3)] = 1.0;
        a[(4, 5)] = 1.0;
        a[(6, 7)] = 1.0;
        assert_eq!(aug.a, a);
        let mut d = Mat::zeros(8, 3);
        d[(3, 0)] = 1.0;
        d[(5, 1)] = 1.0;
        d[(7, 2)] = 1.0;
        assert_eq!(aug.d, d);
        let mut c = Mat::zeros(2, 8);
        c[(0, 0)] = 1.0;
        c[(1, 1)] = 1.0;
        c[(1, 6)] = 1.0;
        assert_eq!(aug.c, c);
        assert_eq!(aug.cbar_a.nrows(), 5);
    }

    #[test]
    fn empty_channels_degenerate_to_plant() {
        let plant = PlantModel::linear(
            Mat::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]),
            Mat::from_row_slice(2, 1, &[0.0, 1.0]),
            Mat::zeros(2, 0),
            Mat::identity(2, 2),
            Mat::from_row_slice(1, 2, &[1.0, 0.0]),
            Mat::zeros(2, 0),
            Mat::zeros(1, 0),
            Mat::zeros(2, 0),
        )
        .unwrap();
        let tp = transform(plant.clone(), 1e-10).unwrap();
        let aug = build_augmented(&tp, UltraLocalOrders::uniform(3).unwrap()).unwrap();
        assert_eq!(aug.a, plant.a);
        assert_eq!(aug.c, plant.c);
        assert_eq!(aug.d.ncols(), 0);
    }

    #[test]
    fn orders_must_be_positive() {
        assert!(UltraLocalOrders::new(1, 0, 2).is_err());
    }

    #[test]
    fn reconstruction_is_exact_on_true_state() {
        let tp = small_plant();
        let aug = build_augmented(&tp, UltraLocalOrders::uniform(2).unwrap()).unwrap();
        let rec = FaultReconstructor::new(&aug, &tp, 1e-10).unwrap();
        let x = Vector::from_vec(vec![0.3, -0.2]);
        let u = Vector::from_vec(vec![0.1]);
        let fx = Vector::from_vec(vec![0.7]);
        let fy = Vector::from_vec(vec![-0.4]);
        let perf = true_performance_signals(&tp, &x, &u, 0.0, &fx, &fy).unwrap();
        let beta1 = perf.rows(2, 1).into_owned();
        let beta2 = perf.rows(3, 1).into_owned();
        let rho = Vector::from_element(1, 9.0);
        let xa = assemble_state(&aug.layout, &x, [(&beta1, &rho), (&beta2, &rho), (&fy, &rho)]).unwrap();
        let (fx_hat, fy_hat) = rec.estimate(&tp, &xa, &u, 0.0).unwrap();
        assert!((fx_hat - fx).amax() < 1e-12);
        assert!((fy_hat - fy).amax() < 1e-12);
        assert!((&aug.cbar_a * &xa - perf).amax() < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::{any, prop_assert_eq, proptest, ProptestConfig};

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn selectors_recover_blocks(
                seed in any::<u64>(),
                n in 1usize..4, n_g in 0usize..3, n_fx in 0usize..3, n_fy in 0usize..2,
                r1 in 1usize..4, r2 in 1usize..4, r3 in 1usize..4,
            ) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let m = n_fy + 1;
                let plant = PlantModel::linear(
                    random(&mut rng, n, n), random(&mut rng, n, 1), random(&mut rng, n, n_g),
                    random(&mut rng, 2, n), random(&mut rng, m, n), random(&mut rng, n, n_fx),
                    random(&mut rng, m, n_fy), random(&mut rng, n, 1),
                ).unwrap();
                let tp = transform(plant, 1e-10).unwrap();
                let orders = UltraLocalOrders::new(r1, r2, r3).unwrap();
                let aug = build_augmented(&tp, orders).unwrap();
                let l = aug.layout;
                prop_assert_eq!(l.n_z(), n + r1 * n_g + r2 * tp.n_fl() + r3 * n_fy);
                prop_assert_eq!(aug.d.ncols(), 1 + n_g + tp.n_fl() + n_fy);
                let x = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
                let mk = |w: usize, rng: &mut ChaCha8Rng| Vector::from_fn(w, |_, _| rng.random_range(-1.0..1.0));
                let b1 = mk(n_g, &mut rng); let p1 = mk(n_g * (r1 - 1), &mut rng);
                let b2 = mk(tp.n_fl(), &mut rng); let p2 = mk(tp.n_fl() * (r2 - 1), &mut rng);
                let b3 = mk(n_fy, &mut rng); let p3 = mk(n_fy * (r3 - 1), &mut rng);
                let xa = assemble_state(&l, &x, [(&b1, &p1), (&b2, &p2), (&b3, &p3)]).unwrap();
                let v = &tp.base.v * &x;
                prop_assert_eq!(&aug.v_a * &xa, v);
                prop_assert_eq!(&aug.cbar1 * &xa, b1);
                prop_assert_eq!(&aug.cbar2 * &xa, b2);
                prop_assert_eq!(&aug.cbar3 * &xa, b3);
            }
        }
    }
}
