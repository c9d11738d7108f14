#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "shelltopics/logmath.hpp"
#include "shelltopics/model.hpp"
#include "shelltopics/state.hpp"

namespace shelltopics {

// Collapsed log marginals.  Every block is a Dirichlet-multinomial (or
// Beta-Bernoulli) integral: finite mode evaluates ratios of multivariate
// beta functions; GEM mode evaluates the infinite limit, which charges the
// concentration once per occupied cell and a Gamma(count) per cell.

// P(t): session-topic assignment vector.
inline double log_marginal_t(const CountStats& c, const Hyperparameters& hp) {
    std::int64_t total = 0;
    for (auto v : c.T) total += v;
    if (hp.dirichlet()) {
        double acc = std::lgamma(hp.gamma_sum) -
                     std::lgamma(hp.gamma_sum + static_cast<double>(total));
        for (std::size_t k = 0; k < c.T.size(); ++k)
            if (c.T[k] > 0)
                acc += std::lgamma(hp.gamma[k] + static_cast<double>(c.T[k])) -
                       std::lgamma(hp.gamma[k]);
        return acc;
    }
    double g = hp.gamma_scalar();
    double acc = std::lgamma(g) - std::lgamma(g + static_cast<double>(total));
    for (auto v : c.T)
        if (v > 0) acc += std::log(g) + std::lgamma(static_cast<double>(v));
    return acc;
}

// P(s | t): command topics, one Dirichlet-multinomial block per session topic.
inline double log_marginal_s_given_t(const CountStats& c, const Hyperparameters& hp) {
    double acc = 0.0;
    for (std::size_t k = 0; k < c.S.size(); ++k) {
        if (c.S_row_total[k] == 0) continue;
        double nk = static_cast<double>(c.S_row_total[k]);
        if (hp.dirichlet()) {
            acc += std::lgamma(hp.tau_sum) - std::lgamma(hp.tau_sum + nk);
            for (std::size_t h = 0; h < c.S[k].size(); ++h)
                if (c.S[k][h] > 0)
                    acc += std::lgamma(hp.tau[h] + static_cast<double>(c.S[k][h])) -
                           std::lgamma(hp.tau[h]);
        } else {
            double tau = hp.tau_scalar();
            acc += c.S_row_nnz[k] * std::log(tau) + std::lgamma(tau) - std::lgamma(tau + nk);
            for (auto v : c.S[k])
                if (v > 0) acc += std::lgamma(static_cast<double>(v));
        }
    }
    return acc;
}

// P(z | s): Beta-Bernoulli block per word topic (identical in both modes;
// unoccupied topics contribute nothing).
inline double log_marginal_z_given_s(const CountStats& c, const Hyperparameters& hp) {
    double acc = 0.0;
    for (std::size_t h = 0; h < c.M_star.size(); ++h) {
        if (c.M_star[h] == 0) continue;
        double a = hp.alpha_at(static_cast<std::int32_t>(h)), a0 = hp.alpha0;
        acc += log_beta(a + static_cast<double>(c.Z[h]),
                        a0 + static_cast<double>(c.M_star[h] - c.Z[h])) -
               log_beta(a, a0);
    }
    return acc;
}

namespace detail {

// One emission block: finite Dirichlet-multinomial or its GEM limit.
inline double log_dm_block(const std::vector<std::int64_t>& row, std::int64_t total,
                           std::int32_t nnz, const std::vector<double>& conc,
                           double conc_sum, bool dirichlet) {
    if (total == 0) return 0.0;
    double acc;
    if (dirichlet) {
        acc = std::lgamma(conc_sum) - std::lgamma(conc_sum + static_cast<double>(total));
        for (std::size_t v = 0; v < row.size(); ++v)
            if (row[v] > 0)
                acc += std::lgamma(conc[v] + static_cast<double>(row[v])) -
                       std::lgamma(conc[v]);
    } else {
        double beta = conc[0];
        acc = nnz * std::log(beta) + std::lgamma(beta) -
              std::lgamma(beta + static_cast<double>(total));
        for (auto v : row)
            if (v > 0) acc += std::lgamma(static_cast<double>(v));
    }
    return acc;
}

} // namespace detail

// P(w | z, s): emission rows, row 0 being the shared secondary topic.
inline double log_marginal_w(const CountStats& c, const Hyperparameters& hp) {
    double acc = 0.0;
    for (std::size_t r = 0; r < c.W.size(); ++r)
        acc += detail::log_dm_block(c.W[r], c.W_total[r], c.W_nnz[r], hp.eta, hp.eta_sum,
                                    hp.dirichlet());
    return acc;
}

// P(u): vocabulary-wide word-cluster assignments.
inline double log_marginal_u(const CountStats& c, const Hyperparameters& hp) {
    std::int64_t total = 0;
    for (auto v : c.U) total += v;
    if (hp.dirichlet()) {
        double acc = std::lgamma(hp.chi_sum) -
                     std::lgamma(hp.chi_sum + static_cast<double>(total));
        for (std::size_t h = 0; h < c.U.size(); ++h)
            if (c.U[h] > 0)
                acc += std::lgamma(hp.chi[h] + static_cast<double>(c.U[h])) -
                       std::lgamma(hp.chi[h]);
        return acc;
    }
    double x = hp.chi_scalar();
    double acc = std::lgamma(x) - std::lgamma(x + static_cast<double>(total));
    for (auto v : c.U)
        if (v > 0) acc += std::log(x) + std::lgamma(static_cast<double>(v));
    return acc;
}

// P(w | t, u): parent words per session topic, child words per word cluster.
inline double log_marginal_w_parent_child(const CountStats& c, const Hyperparameters& hp) {
    double acc = 0.0;
    for (std::size_t k = 0; k < c.Wp.size(); ++k)
        acc += detail::log_dm_block(c.Wp[k], c.Wp_total[k], c.Wp_nnz[k], hp.tau, hp.tau_sum,
                                    hp.dirichlet());
    for (std::size_t h = 0; h < c.Wc.size(); ++h)
        acc += detail::log_dm_block(c.Wc[h], c.Wc_total[h], c.Wc_nnz[h], hp.eta, hp.eta_sum,
                                    hp.dirichlet());
    return acc;
}

inline double log_joint(const CountStats& c, const Hyperparameters& hp) {
    double acc = log_marginal_t(c, hp);
    if (has_word_clusters(hp.model))
        return acc + log_marginal_u(c, hp) + log_marginal_w_parent_child(c, hp);
    if (is_nested(hp.model)) acc += log_marginal_s_given_t(c, hp);
    if (has_secondary(hp.model)) acc += log_marginal_z_given_s(c, hp);
    return acc + log_marginal_w(c, hp);
}

inline double log_joint(const Corpus& corpus, const LatentState& state,
                        const Hyperparameters& hp) {
    return log_joint(counts_from_state(corpus, state, hp), hp);
}

// Predictive over {existing groups..., new group} after n observed labels.
inline std::vector<double> crp_predictive(const std::vector<std::int32_t>& labels,
                                          double beta) {
    std::int32_t k = 0;
    for (auto v : labels) k = std::max(k, v + 1);
    std::vector<double> counts(static_cast<std::size_t>(k), 0.0);
    for (auto v : labels) counts[v] += 1.0;
    double denom = beta + static_cast<double>(labels.size());
    std::vector<double> p(static_cast<std::size_t>(k) + 1);
    for (std::int32_t g = 0; g < k; ++g) p[g] = counts[g] / denom;
    p[k] = beta / denom;
    return p;
}

} // namespace shelltopics
