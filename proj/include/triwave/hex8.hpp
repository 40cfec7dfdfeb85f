#pragma once

#include <Eigen/Dense>
#include <array>

namespace triwave {
namespace hex8 {

// Trilinear 8-node hexahedron. Reference coordinates (xi, eta, zeta) in
// [-1,1]^3, node order: bottom face CCW then top face CCW.
inline constexpr double kNodeXi[8] = {-1, 1, 1, -1, -1, 1, 1, -1};
inline constexpr double kNodeEta[8] = {-1, -1, 1, 1, -1, -1, 1, 1};
inline constexpr double kNodeZeta[8] = {-1, -1, -1, -1, 1, 1, 1, 1};

inline void shape_values(const Eigen::Vector3d& xi, Eigen::Matrix<double, 8, 1>& n) {
    for (int a = 0; a < 8; ++a)
        n(a) = 0.125 * (1 + kNodeXi[a] * xi.x()) * (1 + kNodeEta[a] * xi.y()) *
               (1 + kNodeZeta[a] * xi.z());
}

// Reference-space gradients: column a holds dN_a/d(xi,eta,zeta).
inline void shape_gradients(const Eigen::Vector3d& xi, Eigen::Matrix<double, 3, 8>& dn) {
    for (int a = 0; a < 8; ++a) {
        double gx = 1 + kNodeXi[a] * xi.x();
        double gy = 1 + kNodeEta[a] * xi.y();
        double gz = 1 + kNodeZeta[a] * xi.z();
        dn(0, a) = 0.125 * kNodeXi[a] * gy * gz;
        dn(1, a) = 0.125 * kNodeEta[a] * gx * gz;
        dn(2, a) = 0.125 * kNodeZeta[a] * gx * gy;
    }
}

// 2x2x2 Gauss rule (all weights 1).
inline const std::array<Eigen::Vector3d, 8>& gauss_points() {
    static const std::array<Eigen::Vector3d, 8> pts = [] {
        std::array<Eigen::Vector3d, 8> p;
        const double g = 1.0 / std::sqrt(3.0);
        int idx = 0;
        for (int k = 0; k < 2; ++k)
            for (int j = 0; j < 2; ++j)
                for (int i = 0; i < 2; ++i)
                    p[idx++] = Eigen::Vector3d((i ? g : -g), (j ? g : -g), (k ? g : -g));
        return p;
    }();
    return pts;
}

// J(i, alpha) = sum_a X(a, i) * dN_a/dxi_alpha, X given as 8x3 nodal block.
inline Eigen::Matrix3d jacobian(const Eigen::Matrix<double, 8, 3>& coords,
                                const Eigen::Matrix<double, 3, 8>& dn_ref) {
    return (dn_ref * coords).transpose();
}

} // namespace hex8
} // namespace triwave
