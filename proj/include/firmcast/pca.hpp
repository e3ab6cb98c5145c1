#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "firmcast/error.hpp"

namespace firmcast {

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order; eigenvectors[i] pairs with
/// eigenvalues[i]. Plenty for the small covariance matrices used here.
inline void jacobi_eigen_symmetric(std::vector<std::vector<double>> a, std::vector<double>& eigenvalues,
                                   std::vector<std::vector<double>>& eigenvectors) {
    const std::size_t n = a.size();
    eigenvectors.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) eigenvectors[i][i] = 1.0;

    auto off_norm = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) s += a[i][j] * a[i][j];
        return std::sqrt(2.0 * s);
    };
    double frob = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) frob += a[i][j] * a[i][j];
    frob = std::sqrt(frob);
    const double tol = 1e-14 * std::max(frob, 1.0);

    for (int sweep = 0; sweep < 100 && off_norm() > tol; ++sweep) {
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(a[p][q]) <= tol * 1e-2) continue;
                const double theta = 0.5 * std::atan2(2.0 * a[p][q], a[q][q] - a[p][p]);
                const double c = std::cos(theta), s = std::sin(theta);
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = eigenvectors[k][p], vkq = eigenvectors[k][q];
                    eigenvectors[k][p] = c * vkp - s * vkq;
                    eigenvectors[k][q] = s * vkp + c * vkq;
                }
            }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a[i][i] > a[j][j]; });
    eigenvalues.assign(n, 0.0);
    std::vector<std::vector<double>> sorted_vecs(n, std::vector<double>(n, 0.0));
    for (std::size_t r = 0; r < n; ++r) {
        eigenvalues[r] = a[order[r]][order[r]];
        for (std::size_t k = 0; k < n; ++k) sorted_vecs[r][k] = eigenvectors[k][order[r]];
    }
    eigenvectors = std::move(sorted_vecs);
}

/// Low-dimensional projection of a point cloud onto its leading principal
/// directions.
struct Embedding {
    std::vector<std::vector<double>> coords;      // one row per input vector, k columns
    std::vector<double> explained_variance;       // fraction per component, nonincreasing
    std::vector<std::vector<double>> components;  // k orthonormal directions
    std::vector<double> mean;
};

/// Mean-centers, eigen-decomposes the covariance, and projects onto the top-k
/// directions. Component signs are fixed by making the largest-magnitude
/// loading positive so plots are reproducible.
inline Embedding pca_project(const std::vector<std::vector<double>>& vectors, std::size_t k = 2) {
    if (vectors.size() < k + 1) throw DataError("pca_project: need at least k+1 vectors");
    const std::size_t d = vectors.front().size();
    if (d < k) throw DataError("pca_project: dimension smaller than k");
    for (const auto& v : vectors)
        if (v.size() != d) throw ConfigError("pca_project: ragged input");

    Embedding out;
    out.mean.assign(d, 0.0);
    for (const auto& v : vectors)
        for (std::size_t j = 0; j < d; ++j) out.mean[j] += v[j];
    for (auto& m : out.mean) m /= static_cast<double>(vectors.size());

    std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
    for (const auto& v : vectors)
        for (std::size_t i = 0; i < d; ++i) {
            const double di = v[i] - out.mean[i];
            for (std::size_t j = i; j < d; ++j) cov[i][j] += di * (v[j] - out.mean[j]);
        }
    const double denom = static_cast<double>(vectors.size()) - 1.0;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) {
            cov[i][j] /= denom;
            cov[j][i] = cov[i][j];
        }

    std::vector<double> eigenvalues;
    std::vector<std::vector<double>> eigenvectors;
    jacobi_eigen_symmetric(cov, eigenvalues, eigenvectors);

    double total = 0.0;
    for (double v : eigenvalues) total += std::max(v, 0.0);
    if (total <= 0.0) throw DataError("pca_project: zero total variance");
    if (eigenvalues[k - 1] <= 1e-12 * std::max(eigenvalues[0], 0.0))
        throw DataError("pca_project: degenerate spectrum (rank < k)");

    for (std::size_t r = 0; r < k; ++r) {
        auto& vec = eigenvectors[r];
        std::size_t arg = 0;
        for (std::size_t j = 1; j < d; ++j)
            if (std::abs(vec[j]) > std::abs(vec[arg])) arg = j;
        if (vec[arg] < 0.0)
            for (auto& x : vec) x = -x;
        out.components.push_back(vec);
        out.explained_variance.push_back(std::max(eigenvalues[r], 0.0) / total);
    }

    out.coords.assign(vectors.size(), std::vector<double>(k, 0.0));
    for (std::size_t r = 0; r < vectors.size(); ++r)
        for (std::size_t c = 0; c < k; ++c) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) acc += (vectors[r][j] - out.mean[j]) * out.components[c][j];
            out.coords[r][c] = acc;
        }
    return out;
}

} // namespace firmcast
