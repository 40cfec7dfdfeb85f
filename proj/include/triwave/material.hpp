#pragma once

#include <Eigen/Dense>

#include "triwave/common.hpp"

namespace triwave {

// Linear isotropic elasticity. Voigt order is (xx, yy, zz, yz, xz, xy) with
// engineering shear strains; every strain operator in the library shares it.
struct Material {
    double youngs_modulus = 160e9; // Pa, polysilicon-like defaults
    double poisson_ratio = 0.22;
    double density = 2320.0; // kg/m^3

    Eigen::Matrix<double, 6, 6> elasticity() const {
        require(youngs_modulus > 0, "material: E must be positive");
        require(density > 0, "material: density must be positive");
        require(poisson_ratio >= 0 && poisson_ratio < 0.5, "material: nu must be in [0, 0.5)");
        double e = youngs_modulus, nu = poisson_ratio;
        double lambda = e * nu / ((1 + nu) * (1 - 2 * nu));
        double mu = e / (2 * (1 + nu));
        Eigen::Matrix<double, 6, 6> d = Eigen::Matrix<double, 6, 6>::Zero();
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) d(i, j) = lambda;
            d(i, i) = lambda + 2 * mu;
            d(3 + i, 3 + i) = mu;
        }
        return d;
    }
};

} // namespace triwave
