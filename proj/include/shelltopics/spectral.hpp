#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "shelltopics/corpus.hpp"
#include "shelltopics/model.hpp"
#include "shelltopics/rng.hpp"
#include "shelltopics/state.hpp"

namespace shelltopics {

enum class InitMethod { Spectral, Random };
enum class IndicatorInit { Threshold, Bernoulli };

struct InitConfig {
    InitMethod method = InitMethod::Spectral;
    IndicatorInit z_method = IndicatorInit::Threshold;
    double z_threshold = 0.10;  // command-document frequency below which a word is primary
    int kmeans_restarts = 10;
    int kmeans_max_iter = 100;
    int svd_rank = 0;       // 0: rank = number of clusters requested
    std::uint64_t seed = 0;
    std::int32_t k_init = 10;  // unbounded-prior runs: initial session topics
    std::int32_t h_init = 10;  // unbounded-prior runs: initial command topics / clusters
};

inline InitMethod parse_init_method(const std::string& s) {
    if (s == "spectral") return InitMethod::Spectral;
    if (s == "random") return InitMethod::Random;
    throw ConfigError("unknown init method: " + s);
}

inline IndicatorInit parse_indicator_init(const std::string& s) {
    if (s == "threshold") return IndicatorInit::Threshold;
    if (s == "bernoulli") return IndicatorInit::Bernoulli;
    throw ConfigError("unknown indicator init: " + s);
}

// Rows of U * Sigma for the top `rank` singular directions.
inline std::vector<std::vector<double>> truncated_svd_scores(const Eigen::MatrixXd& m,
                                                             int rank) {
    rank = std::min<int>(rank, static_cast<int>(std::min(m.rows(), m.cols())));
    if (rank < 1) rank = 1;
    Eigen::BDCSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU);
    Eigen::MatrixXd scores =
        svd.matrixU().leftCols(rank) * svd.singularValues().head(rank).asDiagonal();
    std::vector<std::vector<double>> out(static_cast<std::size_t>(m.rows()),
                                         std::vector<double>(rank));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (int r = 0; r < rank; ++r) out[static_cast<std::size_t>(i)][r] = scores(i, r);
    return out;
}

namespace detail {

inline double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

struct KmeansRun {
    std::vector<std::int32_t> labels;
    double inertia = std::numeric_limits<double>::infinity();
};

inline KmeansRun kmeans_once(const std::vector<std::vector<double>>& pts, int k,
                             int max_iter, Rng& rng) {
    int n = static_cast<int>(pts.size());
    std::size_t dim = pts[0].size();
    // k-means++ seeding
    std::vector<std::vector<double>> centers;
    centers.push_back(pts[rng.uniform_index(static_cast<std::size_t>(n))]);
    std::vector<double> d2(n);
    while (static_cast<int>(centers.size()) < k) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            double best = sq_dist(pts[i], centers[0]);
            for (std::size_t c = 1; c < centers.size(); ++c)
                best = std::min(best, sq_dist(pts[i], centers[c]));
            d2[i] = best;
            total += best;
        }
        int pick;
        if (total <= 0.0) {
            pick = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(n)));
        } else {
            double r = rng.uniform() * total;
            pick = 0;
            double acc = d2[0];
            while (pick + 1 < n && acc < r) acc += d2[++pick];
        }
        centers.push_back(pts[pick]);
    }

    KmeansRun run;
    run.labels.assign(n, 0);
    for (int iter = 0; iter < max_iter; ++iter) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double bd = sq_dist(pts[i], centers[0]);
            for (int c = 1; c < k; ++c) {
                double d = sq_dist(pts[i], centers[c]);
                if (d < bd) {
                    bd = d;
                    best = c;
                }
            }
            if (run.labels[i] != best) {
                run.labels[i] = best;
                changed = true;
            }
        }
        std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
        std::vector<std::int64_t> sizes(k, 0);
        for (int i = 0; i < n; ++i) {
            ++sizes[run.labels[i]];
            for (std::size_t t = 0; t < dim; ++t) sums[run.labels[i]][t] += pts[i][t];
        }
        for (int c = 0; c < k; ++c) {
            if (sizes[c] == 0) {
                // reseed an empty cluster at the point farthest from its center
                int far = 0;
                double fd = -1.0;
                for (int i = 0; i < n; ++i) {
                    double d = sq_dist(pts[i], centers[run.labels[i]]);
                    if (d > fd) {
                        fd = d;
                        far = i;
                    }
                }
                centers[c] = pts[far];
                run.labels[far] = c;
                changed = true;
            } else {
                for (std::size_t t = 0; t < dim; ++t)
                    centers[c][t] = sums[c][t] / static_cast<double>(sizes[c]);
            }
        }
        if (!changed && iter > 0) break;
    }
    run.inertia = 0.0;
    for (int i = 0; i < n; ++i) run.inertia += sq_dist(pts[i], centers[run.labels[i]]);
    return run;
}

} // namespace detail

inline std::vector<std::int32_t> kmeans(const std::vector<std::vector<double>>& pts, int k,
                                        int restarts, int max_iter, Rng& rng) {
    if (pts.empty()) return {};
    k = std::min<int>(k, static_cast<int>(pts.size()));
    if (k < 1) k = 1;
    detail::KmeansRun best;
    for (int r = 0; r < std::max(restarts, 1); ++r) {
        detail::KmeansRun run = detail::kmeans_once(pts, k, max_iter, rng);
        if (run.inertia < best.inertia) best = std::move(run);
    }
    return best.labels;
}

namespace detail {

// SVD + k-means over rows taken in canonical (lexicographically sorted)
// order, so the labels are a function of row content alone: permuting the
// input rows permutes the output labels correspondingly.
inline std::vector<std::int32_t> cluster_rows_canonical(const Eigen::MatrixXd& m, int k,
                                                        int rank, const InitConfig& cfg,
                                                        Rng& rng) {
    auto n = static_cast<std::size_t>(m.rows());
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (m(static_cast<Eigen::Index>(a), c) != m(static_cast<Eigen::Index>(b), c))
                return m(static_cast<Eigen::Index>(a), c) < m(static_cast<Eigen::Index>(b), c);
        }
        return false;
    });
    Eigen::MatrixXd sorted(m.rows(), m.cols());
    for (std::size_t i = 0; i < n; ++i)
        sorted.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(order[i]));
    auto scores = truncated_svd_scores(sorted, rank);
    auto canon = kmeans(scores, k, cfg.kmeans_restarts, cfg.kmeans_max_iter, rng);
    std::vector<std::int32_t> labels(n, 0);
    for (std::size_t i = 0; i < n; ++i) labels[order[i]] = canon[i];
    return labels;
}

} // namespace detail

// Clusters commands by bag-of-words SVD scores; returns per-session rows of
// command-topic labels.
inline std::vector<std::vector<std::int32_t>> spectral_init_commands(const Corpus& corpus,
                                                                     std::int32_t h,
                                                                     const InitConfig& cfg,
                                                                     Rng& rng) {
    std::int64_t total = corpus.total_commands();
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(total, corpus.vocab_size());
    std::int64_t g = 0;
    for (const auto& sess : corpus.sessions)
        for (const auto& cmd : sess.commands) {
            for (auto w : cmd.words) m(g, w) += 1.0;
            ++g;
        }
    int rank = cfg.svd_rank > 0 ? cfg.svd_rank : h;
    auto flat = detail::cluster_rows_canonical(m, h, rank, cfg, rng);
    std::vector<std::vector<std::int32_t>> s(corpus.n_sessions());
    g = 0;
    for (std::int32_t d = 0; d < corpus.n_sessions(); ++d) {
        s[d].resize(corpus.n_commands(d));
        for (auto& v : s[d]) v = flat[g++];
    }
    return s;
}

// Clusters the vocabulary by parent-to-child co-occurrence SVD scores.
inline std::vector<std::int32_t> spectral_init_word_clusters(const Corpus& corpus,
                                                             std::int32_t h,
                                                             const InitConfig& cfg, Rng& rng) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(corpus.vocab_size(), corpus.vocab_size());
    for (const auto& sess : corpus.sessions)
        for (const auto& cmd : sess.commands)
            for (std::int32_t i = 0; i < cmd.size(); ++i)
                if (!cmd.is_parent(i)) m(cmd.parent_word(i), cmd.words[i]) += 1.0;
    int rank = cfg.svd_rank > 0 ? cfg.svd_rank : h;
    return detail::cluster_rows_canonical(m, h, rank, cfg, rng);
}

// Clusters sessions: flat models use word counts, nested models use command
// topic counts, parent-child models use parent word counts.
inline std::vector<std::int32_t> spectral_init_sessions(
    const Corpus& corpus, ModelKind model, std::int32_t k,
    const std::vector<std::vector<std::int32_t>>& s, std::int32_t n_h, const InitConfig& cfg,
    Rng& rng) {
    std::int32_t D = corpus.n_sessions();
    Eigen::MatrixXd m;
    if (is_nested(model)) {
        m = Eigen::MatrixXd::Zero(D, n_h);
        for (std::int32_t d = 0; d < D; ++d)
            for (auto h : s[d]) m(d, h) += 1.0;
    } else if (has_word_clusters(model)) {
        m = Eigen::MatrixXd::Zero(D, corpus.vocab_size());
        for (std::int32_t d = 0; d < D; ++d)
            for (const auto& cmd : corpus.sessions[d].commands)
                for (std::int32_t i = 0; i < cmd.size(); ++i)
                    if (cmd.is_parent(i)) m(d, cmd.words[i]) += 1.0;
    } else {
        m = Eigen::MatrixXd::Zero(D, corpus.vocab_size());
        for (std::int32_t d = 0; d < D; ++d)
            for (const auto& cmd : corpus.sessions[d].commands)
                for (auto w : cmd.words) m(d, w) += 1.0;
    }
    int rank = cfg.svd_rank > 0 ? cfg.svd_rank : k;
    return detail::cluster_rows_canonical(m, k, rank, cfg, rng);
}

// Indicator seeding from command-document frequency: words seen in at least
// z_threshold of all commands start secondary.
inline std::vector<std::vector<std::vector<std::uint8_t>>> init_indicators(
    const Corpus& corpus, const InitConfig& cfg, Rng& rng) {
    std::vector<double> doc_frac(corpus.vocab_size(), 0.0);
    // frequencies are read from the vocabulary snapshot, not the (possibly
    // subset) corpus at hand, so seeding is stable across splits
    for (std::int32_t v = 0; v < corpus.vocab_size(); ++v)
        doc_frac[v] =
            static_cast<double>(corpus.vocab.command_freq(v)) /
            static_cast<double>(std::max<std::int64_t>(corpus.vocab.total_commands, 1));
    std::vector<std::vector<std::vector<std::uint8_t>>> z(corpus.n_sessions());
    for (std::int32_t d = 0; d < corpus.n_sessions(); ++d) {
        z[d].resize(corpus.n_commands(d));
        for (std::int32_t j = 0; j < corpus.n_commands(d); ++j) {
            const Command& cmd = corpus.sessions[d].commands[j];
            z[d][j].resize(cmd.size());
            for (std::int32_t i = 0; i < cmd.size(); ++i) {
                double f = doc_frac[cmd.words[i]];
                if (cfg.z_method == IndicatorInit::Threshold)
                    z[d][j][i] = f < cfg.z_threshold ? 1 : 0;
                else
                    z[d][j][i] = rng.bernoulli(1.0 - std::min(f, 1.0)) ? 1 : 0;
            }
        }
    }
    return z;
}

inline LatentState random_init(const Corpus& corpus, const Hyperparameters& hp,
                               std::int32_t k, std::int32_t h, const InitConfig& cfg,
                               Rng& rng) {
    LatentState st;
    st.t.resize(corpus.n_sessions());
    for (auto& v : st.t) v = static_cast<std::int32_t>(rng.uniform_index(k));
    if (is_nested(hp.model)) {
        st.s.resize(corpus.n_sessions());
        for (std::int32_t d = 0; d < corpus.n_sessions(); ++d) {
            st.s[d].resize(corpus.n_commands(d));
            for (auto& v : st.s[d]) v = static_cast<std::int32_t>(rng.uniform_index(h));
        }
    }
    if (has_word_clusters(hp.model)) {
        st.u.resize(corpus.vocab_size());
        for (auto& v : st.u) v = static_cast<std::int32_t>(rng.uniform_index(h));
    }
    if (has_secondary(hp.model)) st.z = init_indicators(corpus, cfg, rng);
    return st;
}

// Builds the chain's initial state.  Cluster counts come from k_max / h_max
// under a finite prior and from cfg.k_init / cfg.h_init under an unbounded one.
inline LatentState make_initial_state(const Corpus& corpus, const Hyperparameters& hp,
                                      const InitConfig& cfg) {
    Rng rng(cfg.seed);
    std::int32_t k = hp.dirichlet() ? hp.k_max : std::min<std::int32_t>(
                                                     std::max<std::int32_t>(cfg.k_init, 1),
                                                     corpus.n_sessions());
    std::int32_t h = hp.dirichlet()
                         ? hp.h_max
                         : std::max<std::int32_t>(cfg.h_init, 1);
    if (cfg.method == InitMethod::Random) return random_init(corpus, hp, k, h, cfg, rng);
    LatentState st;
    if (is_nested(hp.model)) {
        st.s = spectral_init_commands(
            corpus, std::min<std::int32_t>(h, static_cast<std::int32_t>(
                                                  corpus.total_commands())),
            cfg, rng);
        std::int32_t n_h = 0;
        for (const auto& row : st.s)
            for (auto v : row) n_h = std::max(n_h, v + 1);
        st.t = spectral_init_sessions(corpus, hp.model, k, st.s, std::max(n_h, 1), cfg, rng);
    } else if (has_word_clusters(hp.model)) {
        st.u = spectral_init_word_clusters(
            corpus, std::min<std::int32_t>(h, corpus.vocab_size()), cfg, rng);
        st.t = spectral_init_sessions(corpus, hp.model, k, {}, 0, cfg, rng);
    } else {
        st.t = spectral_init_sessions(corpus, hp.model, k, {}, 0, cfg, rng);
    }
    if (has_secondary(hp.model)) st.z = init_indicators(corpus, cfg, rng);
    return st;
}

} // namespace shelltopics
