#pragma once

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <map>
#include <vector>

// Quartic polynomial fit oracle for strain-energy landscapes. The discrete
// Green-Lagrange energy is an exact polynomial of total degree 4 in the modal
// amplitudes, so a least-squares fit over a 5^3 grid recovers its
// coefficients to round-off and provides an implementation-independent route
// to the cubic (3-wave) terms.
namespace twtest {

struct QuarticFit3 {
    // coefficients in normalized coordinates t = q / s, keyed by exponents
    std::map<std::array<int, 3>, double> coef;
    double residual = 0; // rms fit residual relative to the energy scale

    double at(int i, int j, int k) const {
        auto it = coef.find({i, j, k});
        return it == coef.end() ? 0.0 : it->second;
    }
};

inline QuarticFit3 fit_quartic_3(const std::function<double(double, double, double)>& energy_of_t) {
    std::vector<std::array<int, 3>> exps;
    for (int i = 0; i <= 4; ++i)
        for (int j = 0; j + i <= 4; ++j)
            for (int k = 0; k + j + i <= 4; ++k) exps.push_back({i, j, k});

    const int grid[5] = {-2, -1, 0, 1, 2};
    Eigen::MatrixXd a(125, static_cast<int>(exps.size()));
    Eigen::VectorXd b(125);
    int row = 0;
    for (int gi : grid)
        for (int gj : grid)
            for (int gk : grid) {
                b(row) = energy_of_t(gi, gj, gk);
                for (std::size_t c = 0; c < exps.size(); ++c)
                    a(row, static_cast<int>(c)) = std::pow(gi, exps[c][0]) *
                                                  std::pow(gj, exps[c][1]) *
                                                  std::pow(gk, exps[c][2]);
                ++row;
            }

    Eigen::VectorXd x = a.colPivHouseholderQr().solve(b);
    QuarticFit3 fit;
    for (std::size_t c = 0; c < exps.size(); ++c) fit.coef[exps[c]] = x(static_cast<int>(c));
    double scale = b.cwiseAbs().maxCoeff();
    fit.residual = (a * x - b).norm() / (scale > 0 ? scale : 1.0);
    return fit;
}

} // namespace twtest
