#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "shelltopics/errors.hpp"
#include "shelltopics/logmath.hpp"

namespace shelltopics {

// Jensen-Shannon divergence in nats between two distributions on the same
// support.  Zero cells contribute nothing to their own KL term.
inline double jensen_shannon(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw ModelError("JSD requires equal-length distributions");
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double m = 0.5 * (p[i] + q[i]);
        if (p[i] > 0.0) acc += 0.5 * p[i] * std::log(p[i] / m);
        if (q[i] > 0.0) acc += 0.5 * q[i] * std::log(q[i] / m);
    }
    return std::max(acc, 0.0);
}

// H(mean) - mean(H) over equally weighted distributions.
inline double generalized_jensen_shannon(const std::vector<std::vector<double>>& dists) {
    if (dists.empty()) return 0.0;
    std::size_t dim = dists[0].size();
    std::vector<double> mean(dim, 0.0);
    double mean_h = 0.0;
    for (const auto& d : dists) {
        if (d.size() != dim) throw ModelError("JSD requires equal-length distributions");
        for (std::size_t i = 0; i < dim; ++i) mean[i] += d[i];
        mean_h += shannon_entropy(d);
    }
    for (auto& v : mean) v /= static_cast<double>(dists.size());
    mean_h /= static_cast<double>(dists.size());
    return std::max(shannon_entropy(mean) - mean_h, 0.0);
}

// Minimum-cost perfect matching on a square cost matrix (shortest augmenting
// paths with potentials, O(n^3)).  Returns assignment[row] = column.
inline std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
    int n = static_cast<int>(cost.size());
    if (n == 0) return {};
    for (const auto& row : cost)
        if (static_cast<int>(row.size()) != n)
            throw ModelError("hungarian requires a square cost matrix");
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            int i0 = p[j0], j1 = -1;
            double delta = inf;
            for (int j = 1; j <= n; ++j)
                if (!used[j]) {
                    double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if (cur < minv[j]) {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if (minv[j] < delta) {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            for (int j = 0; j <= n; ++j)
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> assignment(n, -1);
    for (int j = 1; j <= n; ++j)
        if (p[j] > 0) assignment[p[j] - 1] = j - 1;
    return assignment;
}

// Adjusted Rand index between two labelings of the same items.  Degenerate
// pairs (both partitions trivial) score 1.
inline double adjusted_rand_index(std::span<const std::int32_t> a,
                                  std::span<const std::int32_t> b) {
    if (a.size() != b.size()) throw ModelError("ARI requires equal-length labelings");
    std::size_t n = a.size();
    if (n < 2) return 1.0;  // no item pairs to agree or disagree on
    auto relabel = [](std::span<const std::int32_t> x) {
        std::vector<std::int32_t> sorted(x.begin(), x.end());
        std::sort(sorted.begin(), sorted.end());
        sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
        std::vector<std::int32_t> out(x.size());
        for (std::size_t i = 0; i < x.size(); ++i)
            out[i] = static_cast<std::int32_t>(
                std::lower_bound(sorted.begin(), sorted.end(), x[i]) - sorted.begin());
        return std::pair(out, static_cast<std::int32_t>(sorted.size()));
    };
    auto [ra, ka] = relabel(a);
    auto [rb, kb] = relabel(b);
    std::vector<std::vector<std::int64_t>> table(ka, std::vector<std::int64_t>(kb, 0));
    for (std::size_t i = 0; i < n; ++i) ++table[ra[i]][rb[i]];
    auto choose2 = [](std::int64_t m) { return 0.5 * static_cast<double>(m) * (m - 1); };
    double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
    std::vector<std::int64_t> rows(ka, 0), cols(kb, 0);
    for (int i = 0; i < ka; ++i)
        for (int j = 0; j < kb; ++j) {
            sum_ij += choose2(table[i][j]);
            rows[i] += table[i][j];
            cols[j] += table[i][j];
        }
    for (auto r : rows) sum_a += choose2(r);
    for (auto c : cols) sum_b += choose2(c);
    double total = choose2(static_cast<std::int64_t>(n));
    double expected = sum_a * sum_b / total;
    double max_index = 0.5 * (sum_a + sum_b);
    double denom = max_index - expected;
    if (denom == 0.0) return 1.0;
    return (sum_ij - expected) / denom;
}

} // namespace shelltopics
