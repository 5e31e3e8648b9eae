#include <algorithm>
#include <tuple>
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "calars/calars.hpp"

namespace calars::testkit {

struct Instance {
    DataMatrix a;
    std::vector<double> b;
    Eigen::MatrixXd dense;  // normalized columns
};

/// i.i.d. standard normal entries, columns normalized, standard normal response.
inline Instance random_instance(Index m, Index n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::vector<double> v(static_cast<std::size_t>(m) * static_cast<std::size_t>(n));
    for (auto& x : v) x = nd(rng);
    Instance inst;
    inst.a = make_normalized_dense(m, n, std::move(v));
    inst.b.resize(static_cast<std::size_t>(m));
    for (auto& x : inst.b) x = nd(rng);
    inst.dense.resize(m, n);
    for (Index j = 0; j < n; ++j)
        for (Index i = 0; i < m; ++i) inst.dense(i, j) = inst.a.matrix.at(i, j);
    return inst;
}

/// A sparse instance stored CSC, roughly `density` of entries nonzero.
inline Instance random_sparse_instance(Index m, Index n, double density, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud;
    RawDataset raw;
    raw.n_rows = m;
    raw.n_cols = n;
    for (Index i = 0; i < m; ++i) {
        for (Index j = 0; j < n; ++j)
            if (ud(rng) < density || j == i % n) raw.entries.push_back({i, j, nd(rng)});
        raw.response.push_back(nd(rng));
    }
    // Make sure every column has an entry.
    for (Index j = 0; j < n; ++j) {
        bool has = false;
        for (const auto& e : raw.entries) has = has || e.col == j;
        if (!has) raw.entries.push_back({j % m, j, 1.0});
    }
    std::sort(raw.entries.begin(), raw.entries.end(), [](const Entry& x, const Entry& y) {
        return std::tie(x.row, x.col) < std::tie(y.row, y.col);
    });
    raw.entries.erase(std::unique(raw.entries.begin(), raw.entries.end(),
                                  [](const Entry& x, const Entry& y) { return x.row == y.row && x.col == y.col; }),
                      raw.entries.end());
    Instance inst;
    inst.a = normalize_columns(raw, NormalizeOptions{false, 2.0});
    inst.b = raw.response;
    inst.dense = Eigen::MatrixXd::Zero(m, inst.a.cols());
    for (Index j = 0; j < inst.a.cols(); ++j)
        inst.a.column(j).for_each([&](Index i, double v) { inst.dense(i, j) = v; });
    return inst;
}

inline Eigen::VectorXd to_eigen(std::span<const double> v)
{
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// Dense fit A·x from a sparse coefficient list.
inline Eigen::VectorXd fitted(const Instance& inst, const std::vector<std::pair<Index, double>>& coeffs)
{
    Eigen::VectorXd y = Eigen::VectorXd::Zero(inst.dense.rows());
    for (const auto& [j, x] : coeffs) y += x * inst.dense.col(j);
    return y;
}

inline Eigen::MatrixXd gram(const Eigen::MatrixXd& dense, std::span<const Index> cols)
{
    Eigen::MatrixXd sub(dense.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) sub.col(static_cast<Eigen::Index>(k)) = dense.col(cols[k]);
    return sub.transpose() * sub;
}

inline Eigen::MatrixXd to_eigen(const LowerTriangular& l)
{
    const auto n = static_cast<Eigen::Index>(l.order());
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) out(i, j) = l(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    return out;
}

}  // namespace calars::testkit
