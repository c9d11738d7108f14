#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "shelltopics/corpus.hpp"
#include "shelltopics/logmath.hpp"
#include "shelltopics/metrics.hpp"
#include "shelltopics/model.hpp"
#include "shelltopics/state.hpp"

namespace shelltopics {

// Fraction of retained samples assigning sessions i and j to one topic.
inline std::vector<std::vector<double>> posterior_similarity(
    const std::vector<LatentState>& samples) {
    if (samples.empty()) throw ModelError("posterior similarity needs at least one sample");
    std::size_t D = samples[0].t.size();
    std::vector<std::vector<double>> sim(D, std::vector<double>(D, 0.0));
    for (const auto& st : samples)
        for (std::size_t i = 0; i < D; ++i)
            for (std::size_t j = i; j < D; ++j)
                if (st.t[i] == st.t[j]) {
                    sim[i][j] += 1.0;
                    sim[j][i] = sim[i][j];
                }
    for (std::size_t i = 0; i < D; ++i)
        for (std::size_t j = 0; j < D; ++j) sim[i][j] /= static_cast<double>(samples.size());
    return sim;
}

// Agglomerative complete-linkage clustering on similarity, cut at k clusters.
// Cluster similarity is the minimum pairwise entry; ties break toward the
// lexicographically smallest pair of smallest member indices.
inline std::vector<std::int32_t> complete_linkage_cut(
    const std::vector<std::vector<double>>& sim, std::int32_t k) {
    std::size_t D = sim.size();
    if (D == 0) return {};
    if (k < 1) k = 1;
    std::vector<std::vector<std::size_t>> clusters(D);
    for (std::size_t i = 0; i < D; ++i) clusters[i] = {i};
    std::vector<std::vector<double>> cs = sim;  // complete-linkage cluster similarity
    while (clusters.size() > static_cast<std::size_t>(k)) {
        std::size_t bi = 0, bj = 1;
        double best = -1.0;
        for (std::size_t i = 0; i < clusters.size(); ++i)
            for (std::size_t j = i + 1; j < clusters.size(); ++j)
                if (cs[i][j] > best) {
                    best = cs[i][j];
                    bi = i;
                    bj = j;
                }
        for (std::size_t m = 0; m < clusters.size(); ++m) {
            if (m == bi || m == bj) continue;
            double merged = std::min(cs[bi][m], cs[bj][m]);
            cs[bi][m] = merged;
            cs[m][bi] = merged;
        }
        clusters[bi].insert(clusters[bi].end(), clusters[bj].begin(), clusters[bj].end());
        std::sort(clusters[bi].begin(), clusters[bi].end());
        clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bj));
        cs.erase(cs.begin() + static_cast<std::ptrdiff_t>(bj));
        for (auto& row : cs) row.erase(row.begin() + static_cast<std::ptrdiff_t>(bj));
    }
    // stable labels: clusters ordered by smallest member
    std::vector<std::size_t> order(clusters.size());
    for (std::size_t c = 0; c < clusters.size(); ++c) order[c] = c;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return clusters[a].front() < clusters[b].front();
    });
    std::vector<std::int32_t> labels(D, 0);
    for (std::size_t rank = 0; rank < order.size(); ++rank)
        for (auto member : clusters[order[rank]])
            labels[member] = static_cast<std::int32_t>(rank);
    return labels;
}

namespace detail {

inline std::int32_t distinct_labels(const std::vector<std::int32_t>& v) {
    std::vector<std::int32_t> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    return static_cast<std::int32_t>(sorted.size());
}

inline std::int32_t modal_value(const std::vector<std::int32_t>& counts_per_sample) {
    std::map<std::int32_t, std::int64_t> hist;
    for (auto c : counts_per_sample) ++hist[c];
    std::int32_t best = 0;
    std::int64_t best_n = -1;
    for (auto [value, n] : hist)
        if (n > best_n) {  // map iterates ascending, so ties keep the smaller value
            best = value;
            best_n = n;
        }
    return best;
}

} // namespace detail

// Modal number of occupied session topics across samples; ties -> smaller.
inline std::int32_t modal_session_topics(const std::vector<LatentState>& samples) {
    std::vector<std::int32_t> ks;
    ks.reserve(samples.size());
    for (const auto& st : samples) ks.push_back(detail::distinct_labels(st.t));
    return detail::modal_value(ks);
}

inline std::int32_t modal_secondary_topics(const std::vector<LatentState>& samples,
                                           ModelKind model) {
    std::vector<std::int32_t> hs;
    hs.reserve(samples.size());
    for (const auto& st : samples) {
        if (is_nested(model)) {
            std::vector<std::int32_t> flat;
            for (const auto& row : st.s) flat.insert(flat.end(), row.begin(), row.end());
            hs.push_back(detail::distinct_labels(flat));
        } else if (has_word_clusters(model)) {
            hs.push_back(detail::distinct_labels(st.u));
        } else {
            hs.push_back(0);
        }
    }
    return detail::modal_value(hs);
}

// Hungarian matching of probability rows by Jensen-Shannon divergence; both
// sides are padded with uniform rows to a square problem.  Returns, for each
// row of cur, its matched slot in ref (slots >= ref.size() mean "unmatched").
inline std::vector<int> align_rows(const std::vector<std::vector<double>>& ref,
                                   const std::vector<std::vector<double>>& cur) {
    std::size_t m = std::max(ref.size(), cur.size());
    if (m == 0) return {};
    std::size_t dim = ref.empty() ? cur[0].size() : ref[0].size();
    std::vector<double> uniform(dim, 1.0 / static_cast<double>(dim));
    std::vector<std::vector<double>> cost(m, std::vector<double>(m, 0.0));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            const auto& a = i < cur.size() ? cur[i] : uniform;
            const auto& b = j < ref.size() ? ref[j] : uniform;
            cost[i][j] = jensen_shannon(a, b);
        }
    auto full = hungarian(cost);
    return {full.begin(), full.begin() + static_cast<std::ptrdiff_t>(cur.size())};
}

namespace detail {

inline std::vector<double> smoothed_row(const std::vector<std::int64_t>& counts,
                                        std::int64_t total, const std::vector<double>& conc,
                                        double conc_sum, bool dirichlet) {
    std::vector<double> out(counts.size());
    if (dirichlet) {
        for (std::size_t v = 0; v < counts.size(); ++v)
            out[v] = (static_cast<double>(counts[v]) + conc[v]) /
                     (static_cast<double>(total) + conc_sum);
    } else {
        // symmetric smoothing keeps empty rows uniform and occupied rows near
        // their empirical distribution
        double c = conc[0] / static_cast<double>(counts.size());
        for (std::size_t v = 0; v < counts.size(); ++v)
            out[v] = (static_cast<double>(counts[v]) + c) /
                     (static_cast<double>(total) + conc[0]);
    }
    return out;
}

inline std::vector<std::vector<double>> emission_rows(const CountStats& c,
                                                      const Hyperparameters& hp) {
    std::vector<std::vector<double>> rows;
    for (std::int32_t h = 0; h < c.n_h; ++h)
        rows.push_back(smoothed_row(c.W[h + 1], c.W_total[h + 1], hp.eta, hp.eta_sum,
                                    hp.dirichlet()));
    return rows;
}

} // namespace detail

struct PosteriorSummary {
    ModelKind model = ModelKind::CBC;
    PriorKind prior = PriorKind::Dirichlet;
    std::vector<std::vector<double>> similarity;
    std::vector<std::int32_t> consensus;  // complete-linkage cut at k_modal
    std::int32_t k_modal = 0;
    std::int32_t h_modal = 0;
    LatentState point;  // last retained sample
    std::int64_t n_samples = 0;

    std::vector<double> lambda_hat;                      // session-topic weights
    std::vector<std::vector<double>> phi_hat;            // word rows; [0] shared when secondary
    std::vector<std::vector<double>> psi_hat;            // nested: command-topic rows
    std::vector<double> theta_hat;                       // secondary: primary-word probability
    std::vector<double> upsilon_hat;                     // word-cluster weights
    std::vector<std::vector<double>> phi_parent_hat;     // parent-word rows
    std::vector<std::vector<double>> phi_child_hat;      // child rows per word cluster
    std::vector<std::vector<double>> cluster_membership; // per vocab word cluster probability
};

// Posterior-mean tables in the frame of the last sample.  Every retained
// sample's count tables are permuted onto that frame (emission rows first,
// then dependent tables) before averaging, so label switching cancels.
inline PosteriorSummary summarize_chain(const Corpus& corpus, const Hyperparameters& hp,
                                        const std::vector<LatentState>& samples) {
    if (samples.empty()) throw ModelError("summarize_chain needs at least one sample");
    PosteriorSummary out;
    out.model = hp.model;
    out.prior = hp.prior;
    out.point = samples.back();
    out.n_samples = static_cast<std::int64_t>(samples.size());
    out.similarity = posterior_similarity(samples);
    out.k_modal = modal_session_topics(samples);
    out.h_modal = modal_secondary_topics(samples, hp.model);
    out.consensus = complete_linkage_cut(out.similarity, out.k_modal);

    CountStats ref = counts_from_state(corpus, samples.back(), hp);
    std::int32_t RK = ref.n_k, RH = ref.n_h;
    double ns = static_cast<double>(samples.size());

    std::vector<double> T_bar(RK, 0.0), Z_bar(RK, 0.0), M_bar(RK, 0.0), U_bar(RH, 0.0);
    std::vector<std::vector<double>> S_bar(RK, std::vector<double>(RH, 0.0));
    std::vector<std::vector<double>> W_bar(RH + 1,
                                           std::vector<double>(corpus.vocab_size(), 0.0));
    std::vector<std::vector<double>> Wp_bar(RK, std::vector<double>(corpus.vocab_size(), 0.0));
    std::vector<std::vector<double>> Wc_bar(RH, std::vector<double>(corpus.vocab_size(), 0.0));
    std::vector<std::vector<double>> member(
        has_word_clusters(hp.model) ? corpus.vocab_size() : 0,
        std::vector<double>(RH, 0.0));
    if (has_secondary(hp.model)) {
        Z_bar.assign(RH, 0.0);
        M_bar.assign(RH, 0.0);
    }

    // parent-child keeps no shared emission table; its rows are matched below
    std::vector<std::vector<double>> ref_phi, ref_psi, ref_phip, ref_phic;
    if (!has_word_clusters(hp.model)) ref_phi = detail::emission_rows(ref, hp);
    if (is_nested(hp.model))
        for (std::int32_t k = 0; k < RK; ++k)
            ref_psi.push_back(detail::smoothed_row(ref.S[k], ref.S_row_total[k], hp.tau,
                                                   hp.tau_sum, hp.dirichlet()));
    if (has_word_clusters(hp.model)) {
        for (std::int32_t k = 0; k < RK; ++k)
            ref_phip.push_back(detail::smoothed_row(ref.Wp[k], ref.Wp_total[k], hp.tau,
                                                    hp.tau_sum, hp.dirichlet()));
        for (std::int32_t h = 0; h < RH; ++h)
            ref_phic.push_back(detail::smoothed_row(ref.Wc[h], ref.Wc_total[h], hp.eta,
                                                    hp.eta_sum, hp.dirichlet()));
    }

    for (const auto& st : samples) {
        CountStats c = counts_from_state(corpus, st, hp);
        if (is_nested(hp.model)) {
            auto perm_h = align_rows(ref_phi, detail::emission_rows(c, hp));
            for (std::int32_t h = 0; h < c.n_h; ++h) {
                int slot = perm_h[h];
                if (slot >= RH) continue;
                for (std::int32_t v = 0; v < corpus.vocab_size(); ++v)
                    W_bar[slot + 1][v] += static_cast<double>(c.W[h + 1][v]);
                if (has_secondary(hp.model)) {
                    Z_bar[slot] += static_cast<double>(c.Z[h]);
                    M_bar[slot] += static_cast<double>(c.M_star[h]);
                }
            }
            for (std::int32_t v = 0; v < corpus.vocab_size(); ++v)
                W_bar[0][v] += static_cast<double>(c.W[0][v]);
            // session rows matched on command-topic profiles in the ref frame
            std::vector<std::vector<double>> cur_psi;
            for (std::int32_t k = 0; k < c.n_k; ++k) {
                std::vector<std::int64_t> row(RH, 0);
                std::int64_t kept = 0;
                for (std::int32_t h = 0; h < c.n_h; ++h) {
                    int slot = perm_h[h];
                    if (slot >= RH) continue;
                    row[slot] += c.S[k][h];
                    kept += c.S[k][h];
                }
                cur_psi.push_back(detail::smoothed_row(row, kept, hp.tau, hp.tau_sum,
                                                       hp.dirichlet()));
            }
            auto perm_k = align_rows(ref_psi, cur_psi);
            for (std::int32_t k = 0; k < c.n_k; ++k) {
                int slot = perm_k[k];
                if (slot >= RK) continue;
                T_bar[slot] += static_cast<double>(c.T[k]);
                for (std::int32_t h = 0; h < c.n_h; ++h) {
                    int hs = perm_h[h];
                    if (hs < RH) S_bar[slot][hs] += static_cast<double>(c.S[k][h]);
                }
            }
        } else if (has_word_clusters(hp.model)) {
            std::vector<std::vector<double>> cur_phip, cur_phic;
            for (std::int32_t k = 0; k < c.n_k; ++k)
                cur_phip.push_back(detail::smoothed_row(c.Wp[k], c.Wp_total[k], hp.tau,
                                                        hp.tau_sum, hp.dirichlet()));
            for (std::int32_t h = 0; h < c.n_h; ++h)
                cur_phic.push_back(detail::smoothed_row(c.Wc[h], c.Wc_total[h], hp.eta,
                                                        hp.eta_sum, hp.dirichlet()));
            auto perm_k = align_rows(ref_phip, cur_phip);
            auto perm_h = align_rows(ref_phic, cur_phic);
            for (std::int32_t k = 0; k < c.n_k; ++k) {
                int slot = perm_k[k];
                if (slot >= RK) continue;
                T_bar[slot] += static_cast<double>(c.T[k]);
                for (std::int32_t v = 0; v < corpus.vocab_size(); ++v)
                    Wp_bar[slot][v] += static_cast<double>(c.Wp[k][v]);
            }
            for (std::int32_t h = 0; h < c.n_h; ++h) {
                int slot = perm_h[h];
                if (slot >= RH) continue;
                U_bar[slot] += static_cast<double>(c.U[h]);
                for (std::int32_t v = 0; v < corpus.vocab_size(); ++v)
                    Wc_bar[slot][v] += static_cast<double>(c.Wc[h][v]);
            }
            for (std::int32_t v = 0; v < corpus.vocab_size(); ++v) {
                int slot = perm_h[st.u[v]];
                if (slot < RH) member[v][slot] += 1.0;
            }
        } else {
            auto perm_k = align_rows(ref_phi, detail::emission_rows(c, hp));
            for (std::int32_t k = 0; k < c.n_k; ++k) {
                int slot = perm_k[k];
                if (slot >= RK) continue;
                T_bar[slot] += static_cast<double>(c.T[k]);
                for (std::int32_t v = 0; v < corpus.vocab_size(); ++v)
                    W_bar[slot + 1][v] += static_cast<double>(c.W[k + 1][v]);
                if (has_secondary(hp.model)) {
                    Z_bar[slot] += static_cast<double>(c.Z[k]);
                    M_bar[slot] += static_cast<double>(c.M_star[k]);
                }
            }
            for (std::int32_t v = 0; v < corpus.vocab_size(); ++v)
                W_bar[0][v] += static_cast<double>(c.W[0][v]);
        }
    }

    auto mean_rows = [&](std::vector<std::vector<double>>& rows) {
        for (auto& row : rows)
            for (auto& v : row) v /= ns;
    };
    for (auto& v : T_bar) v /= ns;
    for (auto& v : Z_bar) v /= ns;
    for (auto& v : M_bar) v /= ns;
    for (auto& v : U_bar) v /= ns;
    mean_rows(S_bar);
    mean_rows(W_bar);
    mean_rows(Wp_bar);
    mean_rows(Wc_bar);

    double D = static_cast<double>(corpus.n_sessions());
    out.lambda_hat.resize(RK);
    for (std::int32_t k = 0; k < RK; ++k)
        out.lambda_hat[k] = hp.dirichlet()
                                ? (T_bar[k] + hp.gamma[k]) / (D + hp.gamma_sum)
                                : T_bar[k] / (D + hp.gamma_scalar());

    auto smooth_real = [&](const std::vector<double>& counts, double total,
                           const std::vector<double>& conc, double conc_sum) {
        std::vector<double> row(counts.size());
        if (hp.dirichlet()) {
            for (std::size_t v = 0; v < counts.size(); ++v)
                row[v] = (counts[v] + conc[v]) / (total + conc_sum);
        } else {
            double c = conc[0] / static_cast<double>(counts.size());
            for (std::size_t v = 0; v < counts.size(); ++v)
                row[v] = (counts[v] + c) / (total + conc[0]);
        }
        return row;
    };
    auto row_total = [](const std::vector<double>& row) {
        double t = 0.0;
        for (auto v : row) t += v;
        return t;
    };

    if (has_word_clusters(hp.model)) {
        for (std::int32_t k = 0; k < RK; ++k)
            out.phi_parent_hat.push_back(
                smooth_real(Wp_bar[k], row_total(Wp_bar[k]), hp.tau, hp.tau_sum));
        for (std::int32_t h = 0; h < RH; ++h)
            out.phi_child_hat.push_back(
                smooth_real(Wc_bar[h], row_total(Wc_bar[h]), hp.eta, hp.eta_sum));
        out.upsilon_hat.resize(RH);
        double V = static_cast<double>(corpus.vocab_size());
        for (std::int32_t h = 0; h < RH; ++h)
            out.upsilon_hat[h] = hp.dirichlet() ? (U_bar[h] + hp.chi[h]) / (V + hp.chi_sum)
                                                : U_bar[h] / (V + hp.chi_scalar());
        out.cluster_membership.resize(corpus.vocab_size());
        for (std::int32_t v = 0; v < corpus.vocab_size(); ++v) {
            double tot = row_total(member[v]);
            out.cluster_membership[v].resize(RH);
            for (std::int32_t h = 0; h < RH; ++h)
                out.cluster_membership[v][h] =
                    tot > 0.0 ? member[v][h] / tot : 1.0 / static_cast<double>(RH);
        }
    } else {
        for (std::int32_t h = 0; h <= RH; ++h)
            out.phi_hat.push_back(
                smooth_real(W_bar[h], row_total(W_bar[h]), hp.eta, hp.eta_sum));
        if (is_nested(hp.model))
            for (std::int32_t k = 0; k < RK; ++k)
                out.psi_hat.push_back(
                    smooth_real(S_bar[k], row_total(S_bar[k]), hp.tau, hp.tau_sum));
        if (has_secondary(hp.model)) {
            out.theta_hat.resize(RH);
            for (std::int32_t h = 0; h < RH; ++h)
                out.theta_hat[h] =
                    (Z_bar[h] + hp.alpha_at(h)) / (M_bar[h] + hp.alpha_at(h) + hp.alpha0);
        }
    }
    return out;
}

struct RankedWord {
    std::int32_t word = -1;
    double score = 0.0;
};

// Highest-probability words of one emission row; ties resolve by token text.
inline std::vector<RankedWord> top_words(const std::vector<double>& row,
                                         const Vocabulary& vocab, std::size_t n) {
    std::vector<RankedWord> all(row.size());
    for (std::size_t v = 0; v < row.size(); ++v)
        all[v] = {static_cast<std::int32_t>(v), row[v]};
    std::sort(all.begin(), all.end(), [&](const RankedWord& a, const RankedWord& b) {
        if (a.score != b.score) return a.score > b.score;
        return vocab.token(a.word) < vocab.token(b.word);
    });
    if (all.size() > n) all.resize(n);
    return all;
}

// p(topic | word) with a uniform prior over the given emission rows.
inline std::vector<std::vector<double>> topic_given_word(
    const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return {};
    std::size_t V = rows[0].size();
    std::vector<std::vector<double>> out(V, std::vector<double>(rows.size(), 0.0));
    for (std::size_t v = 0; v < V; ++v) {
        double tot = 0.0;
        for (std::size_t k = 0; k < rows.size(); ++k) tot += rows[k][v];
        for (std::size_t k = 0; k < rows.size(); ++k)
            out[v][k] = tot > 0.0 ? rows[k][v] / tot : 1.0 / static_cast<double>(rows.size());
    }
    return out;
}

// Plug-in held-out log likelihood per word using posterior-mean tables.  The
// held-out corpus must already be encoded against the training vocabulary
// (out-of-vocabulary words dropped at encode time).
inline double heldout_loglik_per_word(const Corpus& heldout, const Hyperparameters& hp,
                                      const PosteriorSummary& fit) {
    std::int64_t words = heldout.total_words();
    if (words == 0) throw ModelError("held-out corpus has no scoreable words");
    std::int32_t RK = static_cast<std::int32_t>(fit.lambda_hat.size());
    double total = 0.0;
    for (const auto& sess : heldout.sessions) {
        std::vector<double> lk(RK, 0.0);
        for (std::int32_t k = 0; k < RK; ++k)
            lk[k] = std::log(std::max(fit.lambda_hat[k], 1e-300));
        switch (hp.model) {
            case ModelKind::CBC:
                for (const auto& cmd : sess.commands)
                    for (auto w : cmd.words)
                        for (std::int32_t k = 0; k < RK; ++k)
                            lk[k] += std::log(std::max(fit.phi_hat[k + 1][w], 1e-300));
                break;
            case ModelKind::CBC_Secondary:
                for (const auto& cmd : sess.commands)
                    for (auto w : cmd.words)
                        for (std::int32_t k = 0; k < RK; ++k)
                            lk[k] += std::log(std::max(
                                fit.theta_hat[k] * fit.phi_hat[k + 1][w] +
                                    (1.0 - fit.theta_hat[k]) * fit.phi_hat[0][w],
                                1e-300));
                break;
            case ModelKind::NCBC:
            case ModelKind::NCBC_Secondary: {
                std::int32_t RH = static_cast<std::int32_t>(fit.psi_hat.empty()
                                                                ? 0
                                                                : fit.psi_hat[0].size());
                for (const auto& cmd : sess.commands) {
                    std::vector<double> lh(RH, 0.0);
                    for (std::int32_t h = 0; h < RH; ++h) {
                        double acc = 0.0;
                        for (auto w : cmd.words) {
                            double pw = hp.model == ModelKind::NCBC_Secondary
                                            ? fit.theta_hat[h] * fit.phi_hat[h + 1][w] +
                                                  (1.0 - fit.theta_hat[h]) * fit.phi_hat[0][w]
                                            : fit.phi_hat[h + 1][w];
                            acc += std::log(std::max(pw, 1e-300));
                        }
                        lh[h] = acc;
                    }
                    for (std::int32_t k = 0; k < RK; ++k) {
                        std::vector<double> terms(RH);
                        for (std::int32_t h = 0; h < RH; ++h)
                            terms[h] = std::log(std::max(fit.psi_hat[k][h], 1e-300)) + lh[h];
                        lk[k] += log_sum_exp(terms);
                    }
                }
                break;
            }
            case ModelKind::PCNBC: {
                std::int32_t RH = static_cast<std::int32_t>(fit.phi_child_hat.size());
                for (const auto& cmd : sess.commands)
                    for (std::int32_t i = 0; i < cmd.size(); ++i) {
                        if (cmd.is_parent(i)) {
                            for (std::int32_t k = 0; k < RK; ++k)
                                lk[k] += std::log(
                                    std::max(fit.phi_parent_hat[k][cmd.words[i]], 1e-300));
                        } else {
                            std::int32_t pv = cmd.parent_word(i);
                            double pw = 0.0;
                            for (std::int32_t h = 0; h < RH; ++h)
                                pw += fit.cluster_membership[pv][h] *
                                      fit.phi_child_hat[h][cmd.words[i]];
                            double lw = std::log(std::max(pw, 1e-300));
                            for (std::int32_t k = 0; k < RK; ++k) lk[k] += lw;
                        }
                    }
                break;
            }
        }
        total += log_sum_exp(lk);
    }
    return total / static_cast<double>(words);
}

} // namespace shelltopics
