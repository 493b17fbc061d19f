#pragma once

#include <array>
#include <vector>

#include <Eigen/Eigenvalues>

#include "scenemetric/eval/novelty.hpp"

namespace scenemetric {

struct Projection {
    std::vector<std::array<double, 2>> points;
    bool zero_variance = false; ///< data had no spread; all points are (0, 0)
};

/// Projection onto the two leading principal axes of the centred data. Each
/// axis is signed so that its largest-magnitude loading is positive.
inline Projection project_2d(const Embeddings& z)
{
    require(z.size() >= 2, "projection needs at least 2 points");
    Eigen::MatrixXd x = eval_detail::to_matrix(z);
    const Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;
    const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(x.rows() - 1);
    Projection out;
    out.points.assign(z.size(), {0.0, 0.0});

    const double total = cov.trace();
    if (!(total > 0.0)) {
        out.zero_variance = true;
        return out;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const Eigen::Index d = cov.rows();
    for (Eigen::Index c = 0; c < 2 && c < d; ++c) {
        const Eigen::Index col = d - 1 - c; // eigenvalues ascend
        if (eig.eigenvalues()(col) <= 1e-12 * total)
            continue;
        Eigen::VectorXd axis = eig.eigenvectors().col(col);
        Eigen::Index arg = 0;
        axis.cwiseAbs().maxCoeff(&arg);
        if (axis(arg) < 0.0)
            axis = -axis;
        const Eigen::VectorXd coord = x * axis;
        for (std::size_t i = 0; i < z.size(); ++i)
            out.points[i][static_cast<std::size_t>(c)] = coord(static_cast<Eigen::Index>(i));
    }
    return out;
}

} // namespace scenemetric
