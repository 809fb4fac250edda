//! Independent pointwise oracles shared by integration tests.
#![allow(dead_code)]

use dss_lab::analytic::{TrigField, TrigVector};
use dss_lab::angular::AngularBasis;
use dss_lab::closure::{g1_project, g2_project, sym, ClosureJet};
use dss_lab::etd::Scheme;
use dss_lab::kinetic::{KineticConfig, KineticManufactured, KineticSolver};
use dss_lab::params::{omega, ModelParams, Peclet};
use dss_lab::spectral::Grid2D;
use nalgebra::{DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Smooth random hierarchy data: rho0 solves its transport equation at the
/// sampled instant, d_t u0 is an arbitrary divergence-free field.
pub struct HierarchySample {
    pub m: ModelParams,
    pub rho0: TrigField,
    pub u0: TrigVector,
    pub du0: TrigVector,
    pub rho1: TrigField,
    pub u1: TrigVector,
    pub x: Vector3<f64>,
}

impl HierarchySample {
    pub fn random(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = ModelParams {
            re: 0.0,
            pe: Peclet::Finite(rng.gen_range(0.5..4.0)),
            eps: 0.1,
            lambda: rng.gen_range(0.05..0.5),
            theta: rng.gen_range(-2.0..8.0),
            u0_swim: rng.gen_range(-1.5..1.5),
            dim,
        };
        let rho0 = TrigField::constant(1.0 / omega(dim))
            .add(&TrigField::random(&mut rng, dim, 3, 2, 0.03));
        let u0 = TrigVector::random_divergence_free(&mut rng, dim, 3, 2, 0.4);
        let du0 = TrigVector::random_divergence_free(&mut rng, dim, 3, 2, 0.4);
        let rho1 = TrigField::random(&mut rng, dim, 3, 2, 0.1);
        let u1 = TrigVector::random_divergence_free(&mut rng, dim, 3, 2, 0.4);
        let mut x = Vector3::zeros();
        for i in 0..dim {
            x[i] = rng.gen_range(0.0..1.0);
        }
        HierarchySample {
            m,
            rho0,
            u0,
            du0,
            rho1,
            u1,
            x,
        }
    }

    fn pe_inv(&self) -> f64 {
        self.m.pe.inverse()
    }

    fn grad_lap_rho0(&self) -> Vector3<f64> {
        Vector3::from_fn(|i, _| {
            (0..3)
                .map(|k| self.rho0.deriv_eval(&self.x, &[i, k, k]))
                .sum()
        })
    }

    fn lap_rho0(&self) -> f64 {
        (0..3).map(|k| self.rho0.deriv_eval(&self.x, &[k, k])).sum()
    }

    /// d_t rho0 from the transport-diffusion equation, and its gradient.
    fn rho0_dot(&self) -> (f64, Vector3<f64>) {
        let u = self.u0.eval(&self.x);
        let g = self.u0.gradient_at(&self.x);
        let gr = self.rho0.gradient_at(&self.x);
        let h = self.rho0.hessian_at(&self.x);
        let val = self.lap_rho0() * self.pe_inv() - u.dot(&gr);
        let grad = self.grad_lap_rho0() * self.pe_inv() - g.transpose() * gr - h * u;
        (val, grad)
    }

    /// d_k A1(u0), Laplace A1(u0).
    fn a1_derivatives(&self) -> ([Matrix3<f64>; 3], Matrix3<f64>) {
        let dg = self.u0.second_gradient_at(&self.x);
        let lg = self.u0.laplacian_gradient_at(&self.x);
        (dg.map(|m| m + m.transpose()), lg + lg.transpose())
    }

    /// A2'(rho0, u0) assembled from the jets by the product rule.
    pub fn a2_prime(&self) -> Matrix3<f64> {
        let x = &self.x;
        let rho = self.rho0.eval(x);
        let gr = self.rho0.gradient_at(x);
        let u = self.u0.eval(x);
        let g = self.u0.gradient_at(x);
        let a1 = g + g.transpose();
        let gd = self.du0.gradient_at(x);
        let a1_dot = gd + gd.transpose();
        let (rho_dot, _) = self.rho0_dot();
        let (da1, lap_a1) = self.a1_derivatives();
        let dt = a1 * rho_dot + a1_dot * rho;
        let mut lap = a1 * self.lap_rho0() + lap_a1 * rho;
        let mut conv = a1 * u.dot(&gr);
        for k in 0..3 {
            lap += da1[k] * (2.0 * gr[k]);
            conv += da1[k] * (rho * u[k]);
        }
        dt - lap * self.pe_inv() + conv + (g.transpose() * a1 + a1 * g) * rho
    }

    pub fn jet(&self) -> ClosureJet {
        let x = &self.x;
        let dg = self.u0.second_gradient_at(x);
        ClosureJet {
            rho0: self.rho0.eval(x),
            grad_rho0: self.rho0.gradient_at(x),
            hess_rho0: self.rho0.hessian_at(x),
            grad_u0: self.u0.gradient_at(x),
            grad_d0: dg.map(|m| sym(&m)),
            a2_prime: self.a2_prime(),
            rho1: self.rho1.eval(x),
            grad_rho1: self.rho1.gradient_at(x),
            grad_u1: self.u1.gradient_at(x),
        }
    }

    /// g1 evaluated directly from the fields.
    fn g1_at(&self, n: &Vector3<f64>) -> f64 {
        let d = self.m.dim as f64;
        let g = self.u0.gradient_at(&self.x);
        -self.m.u0_swim / (d - 1.0) * n.dot(&self.rho0.gradient_at(&self.x))
            + 0.5 * self.rho0.eval(&self.x) * n.dot(&(sym(&g) * n))
    }

    /// Tangential gradient of g1 at n.
    fn g1_tangential_gradient(&self, n: &Vector3<f64>) -> Vector3<f64> {
        let d = self.m.dim as f64;
        let g = self.u0.gradient_at(&self.x);
        let full = -self.rho0.gradient_at(&self.x) * (self.m.u0_swim / (d - 1.0))
            + sym(&g) * n * self.rho0.eval(&self.x);
        full - n * n.dot(&full)
    }

    /// Right-hand side of the g1 equation at n.
    pub fn g1_rhs(&self, n: &Vector3<f64>) -> f64 {
        let d = self.m.dim as f64;
        let g = self.u0.gradient_at(&self.x);
        self.m.u0_swim * n.dot(&self.rho0.gradient_at(&self.x))
            - d * n.dot(&(g * n)) * self.rho0.eval(&self.x)
    }

    /// Right-hand side of the g2 equation at every quadrature node.
    pub fn g2_rhs_nodal(&self, basis: &AngularBasis) -> DVector<f64> {
        let x = &self.x;
        let d = self.m.dim as f64;
        let c = 1.0 / (d - 1.0);
        let u0s = self.m.u0_swim;
        let pe_inv = self.pe_inv();
        let rho = self.rho0.eval(x);
        let gr = self.rho0.gradient_at(x);
        let hess = self.rho0.hessian_at(x);
        let u = self.u0.eval(x);
        let g0 = self.u0.gradient_at(x);
        let d0 = sym(&g0);
        let g1m = self.u1.gradient_at(x);
        let dd0 = sym(&self.du0.gradient_at(x));
        let (rho_dot, grad_rho_dot) = self.rho0_dot();
        let (da1, lap_a1) = self.a1_derivatives();
        let dd = da1.map(|m| m * 0.5);
        let lap_d0 = lap_a1 * 0.5;
        let lap_rho = self.lap_rho0();
        let glap = self.grad_lap_rho0();
        let mut lap_rd = d0 * lap_rho + lap_d0 * rho;
        let mut conv_rd = d0 * u.dot(&gr);
        for k in 0..3 {
            lap_rd += dd[k] * (2.0 * gr[k]);
            conv_rd += dd[k] * (rho * u[k]);
        }
        let rho1 = self.rho1.eval(x);
        let gr1 = self.rho1.gradient_at(x);
        let swim: Vec<f64> = basis
            .nodes()
            .iter()
            .map(|n| {
                let grad_g1: f64 = (0..3)
                    .map(|k| {
                        let dk = -u0s * c * (hess * n)[k]
                            + 0.5 * (gr[k] * n.dot(&(d0 * n)) + rho * n.dot(&(dd[k] * n)));
                        n[k] * dk
                    })
                    .sum();
                u0s * (n.dot(&gr1) + grad_g1)
            })
            .collect();
        let swim_mean = basis.quadrature(&DVector::from_vec(swim.clone())) / omega(self.m.dim);
        DVector::from_iterator(
            basis.n_nodes(),
            basis.nodes().iter().zip(swim).map(|(n, sw)| {
                let dt_g1 = -u0s * c * n.dot(&grad_rho_dot)
                    + 0.5 * rho_dot * n.dot(&(d0 * n))
                    + 0.5 * rho * n.dot(&(dd0 * n));
                let lap_g1 = -u0s * c * n.dot(&glap) + 0.5 * n.dot(&(lap_rd * n));
                let conv_g1 = -u0s * c * n.dot(&(hess * u)) + 0.5 * n.dot(&(conv_rd * n));
                let transport = dt_g1 - pe_inv * lap_g1 + conv_g1;
                let g1 = self.g1_at(n);
                let rot1 = -d * n.dot(&(g1m * n)) * rho;
                let rot0 = -d * n.dot(&(g0 * n)) * rho1
                    + self.g1_tangential_gradient(n).dot(&(g0 * n))
                    - d * n.dot(&(g0 * n)) * g1;
                transport + (sw - swim_mean) + rot1 + rot0
            }),
        )
    }

    /// max over nodes of |Laplace g1 - rhs|.
    pub fn g1_residual(&self, basis: &AngularBasis) -> f64 {
        let g1 = g1_project(basis, &self.m, &self.jet());
        let lhs = basis.synthesize(&basis.laplace_beltrami(&g1));
        basis
            .nodes()
            .iter()
            .zip(lhs.iter())
            .map(|(n, v)| (v - self.g1_rhs(n)).abs())
            .fold(0.0, f64::max)
    }

    /// max over nodes of |Laplace g2 - rhs|.
    pub fn g2_residual(&self, basis: &AngularBasis) -> f64 {
        let g2 = g2_project(basis, &self.m, &self.jet());
        let lhs = basis.synthesize(&basis.laplace_beltrami(&g2));
        (lhs - self.g2_rhs_nodal(basis)).amax()
    }
}

/// Active d = 2 parameters of the manufactured kinetic solution.
pub fn mms_params(re: f64) -> ModelParams {
    ModelParams {
        re,
        pe: Peclet::Finite(1.0),
        eps: 0.2,
        lambda: 0.5,
        theta: 2.0,
        u0_swim: 0.5,
        dim: 2,
    }
}

pub struct MmsRun {
    pub err_f: f64,
    pub err_u: f64,
    pub dt_halvings: usize,
    pub max_mass_defect: f64,
}

/// Kinetic run against the manufactured solution up to `t_end`.
pub fn mms_run(re: f64, n: usize, m: usize, dt: f64, scheme: Scheme, t_end: f64) -> MmsRun {
    let mms = KineticManufactured::standard(mms_params(re), m);
    let grid = Grid2D::new(n).unwrap();
    let mut s = mms.initial_state(grid).unwrap();
    let cfg = KineticConfig {
        n,
        m_max: m,
        dt,
        scheme,
        picard_tol: 1e-14,
        ..Default::default()
    };
    let solver = KineticSolver::new(cfg, &mms, Some(&mms)).unwrap();
    let sum = solver.run(&mut s, t_end, t_end, |_, _| Ok(())).unwrap();
    let (err_f, err_u) = mms.errors(&s);
    MmsRun {
        err_f,
        err_u,
        dt_halvings: sum.dt_halvings,
        max_mass_defect: sum.max_mass_defect,
    }
}
