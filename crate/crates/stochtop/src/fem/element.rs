use nalgebra::{DMatrix, SMatrix};

/// Material law mapping a design value to an element modulus/scale factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaterialModel {
    /// SIMP interpolation for continuum densities:
    /// `E = e_min + value^penal * (e0 - e_min)`.
    Simp {
        e0: f64,
        e_min: f64,
        poisson: f64,
        penal: f64,
    },
    /// Linear-elastic truss; the design value is the cross-sectional area and
    /// scales the unit-area bar stiffness directly.
    Truss { e0: f64 },
}

impl MaterialModel {
    /// Stiffness scale multiplying the element's unit matrix.
    pub fn modulus(&self, value: f64) -> f64 {
        match *self {
            MaterialModel::Simp {
                e0, e_min, penal, ..
            } => e_min + value.powf(penal) * (e0 - e_min),
            MaterialModel::Truss { e0 } => e0 * value,
        }
    }

    /// Derivative of [`Self::modulus`] with respect to the design value.
    pub fn dmodulus(&self, value: f64) -> f64 {
        match *self {
            MaterialModel::Simp {
                e0, e_min, penal, ..
            } => penal * value.powf(penal - 1.0) * (e0 - e_min),
            MaterialModel::Truss { e0 } => e0,
        }
    }

    pub fn poisson(&self) -> f64 {
        match *self {
            MaterialModel::Simp { poisson, .. } => poisson,
            MaterialModel::Truss { .. } => 0.0,
        }
    }

    pub fn with_penal(&self, penal: f64) -> Self {
        match *self {
            MaterialModel::Simp {
                e0, e_min, poisson, ..
            } => MaterialModel::Simp {
                e0,
                e_min,
                poisson,
                penal,
            },
            truss => truss,
        }
    }
}

/// Plane-stress Q4 stiffness for unit modulus and unit thickness, integrated
/// with 2x2 Gauss quadrature. `coords` lists the four nodes counter-clockwise.
pub fn q4_stiffness_unit(coords: &[[f64; 2]; 4], poisson: f64) -> SMatrix<f64, 8, 8> {
    let nu = poisson;
    // plane-stress constitutive matrix for E = 1
    let c = 1.0 / (1.0 - nu * nu);
    let d = [
        [c, c * nu, 0.0],
        [c * nu, c, 0.0],
        [0.0, 0.0, c * (1.0 - nu) / 2.0],
    ];

    let gp = 1.0 / 3.0_f64.sqrt();
    let points = [(-gp, -gp), (gp, -gp), (gp, gp), (-gp, gp)];

    let mut ke = SMatrix::<f64, 8, 8>::zeros();
    for &(xi, eta) in &points {
        // shape-function derivatives in parent coordinates
        let dn_dxi = [
            [-0.25 * (1.0 - eta), -0.25 * (1.0 - xi)],
            [0.25 * (1.0 - eta), -0.25 * (1.0 + xi)],
            [0.25 * (1.0 + eta), 0.25 * (1.0 + xi)],
            [-0.25 * (1.0 + eta), 0.25 * (1.0 - xi)],
        ];
        // Jacobian of the isoparametric map
        let mut jac = [[0.0_f64; 2]; 2];
        for a in 0..4 {
            for r in 0..2 {
                for s in 0..2 {
                    jac[r][s] += dn_dxi[a][r] * coords[a][s];
                }
            }
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        debug_assert!(det > 0.0, "element must be numbered counter-clockwise");
        let inv = [
            [jac[1][1] / det, -jac[0][1] / det],
            [-jac[1][0] / det, jac[0][0] / det],
        ];
        // gradients in physical coordinates
        let mut dn = [[0.0_f64; 2]; 4];
        for a in 0..4 {
            for s in 0..2 {
                dn[a][s] = inv[s][0] * dn_dxi[a][0] + inv[s][1] * dn_dxi[a][1];
            }
        }
        // B matrix, 3 x 8
        let mut b = [[0.0_f64; 8]; 3];
        for a in 0..4 {
            b[0][2 * a] = dn[a][0];
            b[1][2 * a + 1] = dn[a][1];
            b[2][2 * a] = dn[a][1];
            b[2][2 * a + 1] = dn[a][0];
        }
        // ke += B^T D B * det (unit Gauss weights for 2x2)
        for i in 0..8 {
            for j in 0..8 {
                let mut v = 0.0;
                for r in 0..3 {
                    for s in 0..3 {
                        v += b[r][i] * d[r][s] * b[s][j];
                    }
                }
                ke[(i, j)] += v * det;
            }
        }
    }
    ke
}

/// Truss-bar stiffness for unit axial rigidity `EA = 1`: `(d d^T / L)` on the
/// two end nodes, where `d` holds the direction cosines.
pub fn bar_stiffness_unit(direction: &[f64], length: f64, dim: usize) -> DMatrix<f64> {
    let n = 2 * dim;
    let mut k = DMatrix::zeros(n, n);
    for i in 0..dim {
        for j in 0..dim {
            let v = direction[i] * direction[j] / length;
            k[(i, j)] = v;
            k[(i + dim, j + dim)] = v;
            k[(i, j + dim)] = -v;
            k[(i + dim, j)] = -v;
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Independent Q4 integration written against a literal B-matrix
    /// assembled from analytic shape-function gradients on a rectangle,
    /// integrated on a dense 5x5 Gauss rule.
    fn q4_rectangle_oracle(w: f64, h: f64, nu: f64) -> DMatrix<f64> {
        // 5-point Gauss-Legendre abscissae/weights
        let a1 = (245.0 - 14.0 * 70.0_f64.sqrt()).sqrt() / 21.0;
        let a2 = (245.0 + 14.0 * 70.0_f64.sqrt()).sqrt() / 21.0;
        let w1 = (322.0 + 13.0 * 70.0_f64.sqrt()) / 900.0;
        let w2 = (322.0 - 13.0 * 70.0_f64.sqrt()) / 900.0;
        let pts = [
            (-a2, w2),
            (-a1, w1),
            (0.0, 128.0 / 225.0),
            (a1, w1),
            (a2, w2),
        ];

        let c = 1.0 / (1.0 - nu * nu);
        let d = [
            [c, c * nu, 0.0],
            [c * nu, c, 0.0],
            [0.0, 0.0, c * (1.0 - nu) / 2.0],
        ];
        // For a w x h rectangle: x = w(1+xi)/2, y = h(1+eta)/2, so
        // dN/dx = (2/w) dN/dxi and dA = (w h / 4) dxi deta.
        let signs = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
        let mut ke = DMatrix::zeros(8, 8);
        for &(xi, wx) in &pts {
            for &(eta, wy) in &pts {
                let mut b = [[0.0_f64; 8]; 3];
                for (a, &(sx, sy)) in signs.iter().enumerate() {
                    let dndx = 0.25 * sx * (1.0 + sy * eta) * 2.0 / w;
                    let dndy = 0.25 * sy * (1.0 + sx * xi) * 2.0 / h;
                    b[0][2 * a] = dndx;
                    b[1][2 * a + 1] = dndy;
                    b[2][2 * a] = dndy;
                    b[2][2 * a + 1] = dndx;
                }
                let scale = wx * wy * w * h / 4.0;
                for i in 0..8 {
                    for j in 0..8 {
                        let mut v = 0.0;
                        for r in 0..3 {
                            for s in 0..3 {
                                v += b[r][i] * d[r][s] * b[s][j];
                            }
                        }
                        ke[(i, j)] += v * scale;
                    }
                }
            }
        }
        ke
    }

    #[test]
    fn q4_matches_independent_quadrature_oracle() {
        for &(w, h) in &[(1.0, 1.0), (0.4, 0.4), (2.0, 0.5)] {
            let coords = [[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]];
            let ke = q4_stiffness_unit(&coords, 0.3);
            let oracle = q4_rectangle_oracle(w, h, 0.3);
            for i in 0..8 {
                for j in 0..8 {
                    assert_relative_eq!(ke[(i, j)], oracle[(i, j)], epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn q4_unit_square_reference_entries() {
        // Frozen from the rectangle oracle: unit square, E = 1, nu = 0.3.
        let coords = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let ke = q4_stiffness_unit(&coords, 0.3);
        assert_relative_eq!(ke[(0, 0)], 0.45 / 0.91, epsilon = 1e-14);
        assert_relative_eq!(ke[(0, 1)], 0.1625 / 0.91, epsilon = 1e-14);
        assert_relative_eq!(ke[(0, 2)], -0.275 / 0.91, epsilon = 1e-14);
        // rigid-body translation produces no force
        let ones_x = SMatrix::<f64, 8, 1>::from_fn(|i, _| if i % 2 == 0 { 1.0 } else { 0.0 });
        assert!((ke * ones_x).amax() < 1e-14);
    }

    #[test]
    fn q4_symmetry_and_spd_on_constrained_modes() {
        let coords = [[0.0, 0.0], [0.4, 0.0], [0.4, 0.4], [0.0, 0.4]];
        let ke = q4_stiffness_unit(&coords, 0.3);
        for i in 0..8 {
            for j in 0..8 {
                assert!((ke[(i, j)] - ke[(j, i)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn bar_axial_quadratic_form() {
        // unit bar along x: stretching one end by u gives energy u^2 / L
        let k = bar_stiffness_unit(&[1.0, 0.0, 0.0], 2.0, 2);
        let u = nalgebra::DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0]);
        let e = (u.transpose() * &k * &u)[(0, 0)];
        assert_relative_eq!(e, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn simp_modulus_and_derivative() {
        let m = MaterialModel::Simp {
            e0: 1.0,
            e_min: 1e-9,
            poisson: 0.3,
            penal: 3.0,
        };
        let rho: f64 = 0.5;
        assert_relative_eq!(m.modulus(rho), 1e-9 + 0.125 * (1.0 - 1e-9), epsilon = 1e-16);
        assert_relative_eq!(m.dmodulus(rho), 3.0 * 0.25 * (1.0 - 1e-9), epsilon = 1e-16);
        // rho at the ersatz floor
        let lo = m.modulus(1e-3);
        assert_relative_eq!(lo, 1e-9 + 1e-9 * (1.0 - 1e-9), epsilon = 1e-18);
    }
}
