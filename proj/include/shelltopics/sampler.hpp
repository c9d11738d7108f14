#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "shelltopics/corpus.hpp"
#include "shelltopics/marginals.hpp"
#include "shelltopics/rng.hpp"

namespace shelltopics {

struct SparseCounts {
    std::vector<std::pair<std::int32_t, std::int64_t>> items;
    std::int64_t total = 0;

    void add(std::int32_t v, std::int64_t c) {
        items.emplace_back(v, c);
        total += c;
    }
};

// A session's (or command's) movable contribution along one table dimension,
// plus its Beta-Bernoulli payload when a secondary topic is present.
struct Payload {
    SparseCounts x;
    std::int64_t z_total = 0;
    std::int64_t m_total = 0;
};

namespace detail {

// Allocation factor of adding x to a Dirichlet-multinomial row whose other
// contents are (row, row_total); null row means an empty (fresh) one.
inline double log_dm_alloc(const SparseCounts& x, const std::vector<std::int64_t>* row,
                           std::int64_t row_total, const std::vector<double>& conc,
                           double conc_sum) {
    double acc = 0.0;
    for (auto [v, c] : x.items) {
        double base = conc[v] + static_cast<double>(row ? (*row)[v] : 0);
        acc += log_rising(base, c);
    }
    return acc - log_rising(conc_sum + static_cast<double>(row_total), x.total);
}

// GEM limit: the first draw in an empty cell pays the concentration once,
// later draws pay their predecessor counts.
inline double log_dm_alloc_gem(const SparseCounts& x, const std::vector<std::int64_t>* row,
                               std::int64_t row_total, double beta) {
    double acc = 0.0;
    for (auto [v, c] : x.items) {
        std::int64_t cur = row ? (*row)[v] : 0;
        acc += cur == 0 ? std::log(beta) : std::log(static_cast<double>(cur));
        acc += log_rising(static_cast<double>(cur) + 1.0, c - 1);
    }
    return acc - log_rising(beta + static_cast<double>(row_total), x.total);
}

// Beta-Bernoulli allocation of (z_add primary out of m_add) words into a
// topic whose other words contribute Z_ex primaries out of M_ex.
inline double log_bb_alloc(std::int64_t z_add, std::int64_t m_add, double a, double a0,
                           std::int64_t Z_ex, std::int64_t M_ex) {
    return log_rising(a + static_cast<double>(Z_ex), z_add) +
           log_rising(a0 + static_cast<double>(M_ex - Z_ex), m_add - z_add) -
           log_rising(a + a0 + static_cast<double>(M_ex), m_add);
}

} // namespace detail

struct Conditional {
    std::vector<std::int32_t> labels;  // candidate label values, fresh label last (GEM)
    std::vector<double> probs;         // normalized, aligned with labels
    bool has_fresh = false;
};

struct SmResult {
    bool attempted = false;
    bool was_split = false;
    bool accepted = false;
    double log_accept = -std::numeric_limits<double>::infinity();
};

enum class ScanOrder { Systematic, Random };

struct SamplerConfig {
    std::int64_t iterations = 1000;
    std::int64_t burn_in = 100;
    std::int64_t thin = 1;
    std::uint64_t seed = 1;
    std::int64_t split_merge_period = 10;  // 0 disables split-merge
    ScanOrder scan_order = ScanOrder::Systematic;
    std::int64_t check_every = 0;  // cross-check incremental counts (testing)
};

struct TraceRow {
    std::int64_t iteration;
    double log_joint;
    std::int32_t k_nonempty;
    std::int32_t h_nonempty;
    std::int64_t sm_accepts;  // cumulative
};

struct ChainOutput {
    std::vector<TraceRow> trace;
    std::vector<LatentState> samples;
    std::int64_t sm_session_attempts = 0, sm_session_accepts = 0;
    std::int64_t sm_command_attempts = 0, sm_command_accepts = 0;
    std::uint64_t seed = 0;
    std::string rng_kind = "mt19937_64 seeded via splitmix64 stream derivation";
};

// Collapsed Gibbs sampler with split-merge moves.  Incrementally maintains
// CountStats; in GEM mode occupied labels stay contiguous (an emptied row is
// compacted immediately by swapping in the last row, and a fresh topic always
// takes label n_k / n_h).
class GibbsSampler {
public:
    GibbsSampler(const Corpus& corpus, const Hyperparameters& hp, LatentState init,
                 std::uint64_t seed)
        : corpus_(&corpus), hp_(hp), state_(std::move(init)), rng_(seed) {
        validate_state();
        if (!hp_.dirichlet()) canonicalize_labels();
        counts_ = counts_from_state(*corpus_, state_, hp_);
        if (hp_.model == ModelKind::CBC || has_word_clusters(hp_.model)) {
            static_session_.resize(corpus_->n_sessions());
            for (std::int32_t d = 0; d < corpus_->n_sessions(); ++d)
                static_session_[d] = collect_session_payload(d);
        }
        if (has_word_clusters(hp_.model)) {
            child_context_.resize(corpus_->vocab_size());
            std::vector<std::pair<std::int32_t, std::int32_t>> pairs;  // (parent, child)
            for (const auto& sess : corpus_->sessions)
                for (const auto& cmd : sess.commands)
                    for (std::int32_t i = 0; i < cmd.size(); ++i)
                        if (!cmd.is_parent(i))
                            pairs.emplace_back(cmd.parent_word(i), cmd.words[i]);
            std::sort(pairs.begin(), pairs.end());
            for (std::size_t a = 0; a < pairs.size();) {
                std::size_t b = a;
                while (b < pairs.size() && pairs[b] == pairs[a]) ++b;
                child_context_[pairs[a].first].x.add(pairs[a].second,
                                                     static_cast<std::int64_t>(b - a));
                a = b;
            }
        }
    }

    const LatentState& state() const { return state_; }
    const CountStats& counts() const { return counts_; }
    const Hyperparameters& hyper() const { return hp_; }
    double log_joint_current() const { return log_joint(counts_, hp_); }

    void verify_counts() const {
        if (!(counts_ == counts_from_state(*corpus_, state_, hp_)))
            throw ModelError("incremental counts diverged from state replay");
    }

    // --- Gibbs site updates -------------------------------------------------

    void resample_session_topic(std::int32_t d) {
        Payload p = session_payload(d);
        detach_session(d);
        std::vector<std::int32_t> labels;
        bool fresh = false;
        std::vector<double> lw = session_log_weights(p, labels, fresh);
        int pick = rng_.categorical_log(lw);
        attach_session_at(d, labels[pick], fresh && pick + 1 == static_cast<int>(labels.size()));
    }

    void resample_command_topic(std::int32_t d, std::int32_t j) {
        Payload p = command_payload(d, j);
        detach_command(d, j);
        std::vector<std::int32_t> labels;
        bool fresh = false;
        std::vector<double> lw = command_log_weights(d, p, labels, fresh);
        int pick = rng_.categorical_log(lw);
        attach_command_at(d, j, labels[pick],
                          fresh && pick + 1 == static_cast<int>(labels.size()));
    }

    void resample_indicator(std::int32_t d, std::int32_t j, std::int32_t i) {
        auto lw = indicator_log_weights(d, j, i);  // detaches the word
        double m = std::max(lw[0], lw[1]);
        double p1 = std::exp(lw[1] - m), p0 = std::exp(lw[0] - m);
        std::uint8_t b = rng_.uniform() * (p0 + p1) >= p0 ? 1 : 0;
        attach_word(d, j, i, b);
    }

    void resample_word_cluster(std::int32_t v) {
        detach_cluster(v);
        std::vector<std::int32_t> labels;
        bool fresh = false;
        std::vector<double> lw = cluster_log_weights(v, labels, fresh);
        int pick = rng_.categorical_log(lw);
        attach_cluster_at(v, labels[pick], fresh && pick + 1 == static_cast<int>(labels.size()));
    }

    void sweep(ScanOrder order = ScanOrder::Systematic) {
        std::int32_t D = corpus_->n_sessions();
        std::vector<std::int32_t> session_order(D);
        for (std::int32_t d = 0; d < D; ++d) session_order[d] = d;
        if (order == ScanOrder::Random) rng_.shuffle(session_order);
        for (auto d : session_order) resample_session_topic(d);
        if (is_nested(hp_.model))
            for (auto d : session_order)
                for (std::int32_t j = 0; j < corpus_->n_commands(d); ++j)
                    resample_command_topic(d, j);
        if (has_secondary(hp_.model))
            for (auto d : session_order)
                for (std::int32_t j = 0; j < corpus_->n_commands(d); ++j)
                    for (std::int32_t i = 0; i < corpus_->sessions[d].commands[j].size(); ++i)
                        resample_indicator(d, j, i);
        if (has_word_clusters(hp_.model)) {
            std::vector<std::int32_t> word_order(corpus_->vocab_size());
            for (std::int32_t v = 0; v < corpus_->vocab_size(); ++v) word_order[v] = v;
            if (order == ScanOrder::Random) rng_.shuffle(word_order);
            for (auto v : word_order) resample_word_cluster(v);
        }
    }

    // --- pure conditional queries (for verification) ------------------------

    Conditional session_conditional(std::int32_t d) const {
        GibbsSampler tmp(*this);
        Payload p = tmp.session_payload(d);
        tmp.detach_session(d);
        Conditional c;
        c.probs = tmp.session_log_weights(p, c.labels, c.has_fresh);
        normalize_log_weights(c.probs);
        return c;
    }

    Conditional command_conditional(std::int32_t d, std::int32_t j) const {
        GibbsSampler tmp(*this);
        Payload p = tmp.command_payload(d, j);
        tmp.detach_command(d, j);
        Conditional c;
        c.probs = tmp.command_log_weights(d, p, c.labels, c.has_fresh);
        normalize_log_weights(c.probs);
        return c;
    }

    std::array<double, 2> indicator_conditional(std::int32_t d, std::int32_t j,
                                                std::int32_t i) const {
        GibbsSampler tmp(*this);
        auto lw = tmp.indicator_log_weights(d, j, i);
        double m = std::max(lw[0], lw[1]);
        double w0 = std::exp(lw[0] - m), w1 = std::exp(lw[1] - m);
        return {w0 / (w0 + w1), w1 / (w0 + w1)};
    }

    Conditional cluster_conditional(std::int32_t v) const {
        GibbsSampler tmp(*this);
        tmp.detach_cluster(v);
        Conditional c;
        c.probs = tmp.cluster_log_weights(v, c.labels, c.has_fresh);
        normalize_log_weights(c.probs);
        return c;
    }

    // Applies candidate idx of the matching conditional; used to cross-check
    // conditionals against normalized joint ratios.
    void apply_session_candidate(std::int32_t d, int idx) {
        Payload p = session_payload(d);
        detach_session(d);
        std::vector<std::int32_t> labels;
        bool fresh = false;
        session_log_weights(p, labels, fresh);
        attach_session_at(d, labels[idx], fresh && idx + 1 == static_cast<int>(labels.size()));
    }

    void apply_command_candidate(std::int32_t d, std::int32_t j, int idx) {
        Payload p = command_payload(d, j);
        detach_command(d, j);
        std::vector<std::int32_t> labels;
        bool fresh = false;
        command_log_weights(d, p, labels, fresh);
        attach_command_at(d, j, labels[idx],
                          fresh && idx + 1 == static_cast<int>(labels.size()));
    }

    void apply_indicator_candidate(std::int32_t d, std::int32_t j, std::int32_t i,
                                   std::uint8_t b) {
        detach_word(d, j, i);
        attach_word(d, j, i, b);
    }

    void apply_cluster_candidate(std::int32_t v, int idx) {
        detach_cluster(v);
        std::vector<std::int32_t> labels;
        bool fresh = false;
        cluster_log_weights(v, labels, fresh);
        attach_cluster_at(v, labels[idx], fresh && idx + 1 == static_cast<int>(labels.size()));
    }

    // --- split-merge ---------------------------------------------------------

    SmResult split_merge_sessions() {
        std::int32_t D = corpus_->n_sessions();
        if (D < 2) return {};
        std::int32_t d1 = static_cast<std::int32_t>(rng_.uniform_index(D));
        std::int32_t d2 = static_cast<std::int32_t>(rng_.uniform_index(D - 1));
        if (d2 >= d1) ++d2;
        return split_merge_sessions_pair(d1, d2);
    }

    // Anchors exposed for targeted tests; identical anchors are degenerate.
    SmResult split_merge_sessions_pair(std::int32_t d1, std::int32_t d2) {
        SmResult res;
        res.attempted = true;
        if (d1 == d2) return res;
        if (state_.t[d1] == state_.t[d2])
            propose_session_split(d1, d2, res);
        else
            propose_session_merge(d1, d2, res);
        return res;
    }

    SmResult split_merge_commands() {
        std::int64_t total = corpus_->total_commands();
        if (total < 2) return {};
        auto locate = [&](std::int64_t g) {
            std::int32_t d = 0;
            while (g >= corpus_->n_commands(d)) {
                g -= corpus_->n_commands(d);
                ++d;
            }
            return std::pair<std::int32_t, std::int32_t>(d, static_cast<std::int32_t>(g));
        };
        std::int64_t g1 = static_cast<std::int64_t>(rng_.uniform_index(total));
        std::int64_t g2 = static_cast<std::int64_t>(rng_.uniform_index(total - 1));
        if (g2 >= g1) ++g2;
        auto [d1, j1] = locate(g1);
        auto [d2, j2] = locate(g2);
        return split_merge_commands_pair(d1, j1, d2, j2);
    }

    SmResult split_merge_commands_pair(std::int32_t d1, std::int32_t j1, std::int32_t d2,
                                       std::int32_t j2) {
        SmResult res;
        res.attempted = true;
        if (d1 == d2 && j1 == j2) return res;
        if (state_.s[d1][j1] == state_.s[d2][j2])
            propose_command_split(d1, j1, d2, j2, res);
        else
            propose_command_merge(d1, j1, d2, j2, res);
        return res;
    }

private:
    const Corpus* corpus_;
    Hyperparameters hp_;
    LatentState state_;
    CountStats counts_;
    Rng rng_;
    std::vector<Payload> static_session_;  // CBC words / parent-child parent words
    std::vector<Payload> child_context_;   // per vocab word: following child words

    // --- setup --------------------------------------------------------------

    void validate_state() {
        std::int32_t D = corpus_->n_sessions();
        if (static_cast<std::int32_t>(state_.t.size()) != D)
            throw ModelError("state.t size does not match corpus");
        if (is_nested(hp_.model)) {
            if (static_cast<std::int32_t>(state_.s.size()) != D)
                throw ModelError("state.s size does not match corpus");
            for (std::int32_t d = 0; d < D; ++d)
                if (static_cast<std::int32_t>(state_.s[d].size()) != corpus_->n_commands(d))
                    throw ModelError("state.s row does not match command count");
        }
        if (has_secondary(hp_.model)) {
            if (static_cast<std::int32_t>(state_.z.size()) != D)
                throw ModelError("state.z size does not match corpus");
            for (std::int32_t d = 0; d < D; ++d)
                for (std::int32_t j = 0; j < corpus_->n_commands(d); ++j)
                    if (static_cast<std::int32_t>(state_.z[d][j].size()) !=
                        corpus_->sessions[d].commands[j].size())
                        throw ModelError("state.z row does not match word count");
        } else {
            state_.z.clear();
        }
        if (has_word_clusters(hp_.model)) {
            if (static_cast<std::int32_t>(state_.u.size()) != corpus_->vocab_size())
                throw ModelError("state.u size does not match vocabulary");
        } else {
            state_.u.clear();
        }
        if (hp_.dirichlet()) {
            for (auto v : state_.t)
                if (v < 0 || v >= hp_.k_max) throw ModelError("t label out of range");
            for (const auto& row : state_.s)
                for (auto v : row)
                    if (v < 0 || v >= hp_.h_max) throw ModelError("s label out of range");
            for (auto v : state_.u)
                if (v < 0 || v >= hp_.h_max) throw ModelError("u label out of range");
        }
    }

    // First-appearance relabeling so GEM tables start contiguous.
    void canonicalize_labels() {
        auto canon = [](auto&& get, auto&& set, std::int64_t n) {
            std::vector<std::int32_t> map;
            for (std::int64_t i = 0; i < n; ++i) {
                std::int32_t v = get(i);
                if (v < 0) throw ModelError("negative label in initial state");
                while (static_cast<std::int32_t>(map.size()) <= v) map.push_back(-1);
                if (map[v] < 0) {
                    std::int32_t next = 0;
                    for (auto m : map) next = std::max(next, m + 1);
                    map[v] = next;
                }
                set(i, map[v]);
            }
        };
        canon([&](std::int64_t i) { return state_.t[i]; },
              [&](std::int64_t i, std::int32_t v) { state_.t[i] = v; },
              static_cast<std::int64_t>(state_.t.size()));
        if (is_nested(hp_.model)) {
            std::vector<std::int32_t*> flat;
            for (auto& row : state_.s)
                for (auto& v : row) flat.push_back(&v);
            canon([&](std::int64_t i) { return *flat[i]; },
                  [&](std::int64_t i, std::int32_t v) { *flat[i] = v; },
                  static_cast<std::int64_t>(flat.size()));
        }
        if (has_word_clusters(hp_.model))
            canon([&](std::int64_t i) { return state_.u[i]; },
                  [&](std::int64_t i, std::int32_t v) { state_.u[i] = v; },
                  static_cast<std::int64_t>(state_.u.size()));
    }

    // --- payloads ------------------------------------------------------------

    Payload collect_session_payload(std::int32_t d) const {
        Payload p;
        std::vector<std::int64_t> dense(std::max<std::int32_t>(corpus_->vocab_size(),
                                                               counts_.n_h),
                                        0);
        std::vector<std::int32_t> touched;
        const auto& cmds = corpus_->sessions[d].commands;
        auto note = [&](std::int32_t idx) {
            if (dense[idx]++ == 0) touched.push_back(idx);
        };
        switch (hp_.model) {
            case ModelKind::CBC:
                for (const auto& cmd : cmds)
                    for (auto w : cmd.words) note(w);
                break;
            case ModelKind::CBC_Secondary:
                for (std::int32_t j = 0; j < static_cast<std::int32_t>(cmds.size()); ++j)
                    for (std::int32_t i = 0; i < cmds[j].size(); ++i) {
                        ++p.m_total;
                        if (state_.z[d][j][i]) {
                            ++p.z_total;
                            note(cmds[j].words[i]);
                        }
                    }
                break;
            case ModelKind::NCBC:
            case ModelKind::NCBC_Secondary:
                for (std::int32_t j = 0; j < static_cast<std::int32_t>(cmds.size()); ++j)
                    note(state_.s[d][j]);
                break;
            case ModelKind::PCNBC:
                for (const auto& cmd : cmds)
                    for (std::int32_t i = 0; i < cmd.size(); ++i)
                        if (cmd.is_parent(i)) note(cmd.words[i]);
                break;
        }
        std::sort(touched.begin(), touched.end());
        for (auto idx : touched) p.x.add(idx, dense[idx]);
        return p;
    }

    Payload session_payload(std::int32_t d) const {
        if (!static_session_.empty()) return static_session_[d];
        return collect_session_payload(d);
    }

    Payload command_payload(std::int32_t d, std::int32_t j) const {
        Payload p;
        const Command& cmd = corpus_->sessions[d].commands[j];
        std::vector<std::int64_t> dense(corpus_->vocab_size(), 0);
        std::vector<std::int32_t> touched;
        for (std::int32_t i = 0; i < cmd.size(); ++i) {
            std::uint8_t zv = has_secondary(hp_.model) ? state_.z[d][j][i] : std::uint8_t{1};
            ++p.m_total;
            if (zv) {
                ++p.z_total;
                if (dense[cmd.words[i]]++ == 0) touched.push_back(cmd.words[i]);
            }
        }
        std::sort(touched.begin(), touched.end());
        for (auto w : touched) p.x.add(w, dense[w]);
        return p;
    }

    // --- attach / detach -------------------------------------------------------

    void detach_session(std::int32_t d) {
        std::int32_t k = state_.t[d];
        counts_.bump_session(k, -1);
        const auto& cmds = corpus_->sessions[d].commands;
        if (is_nested(hp_.model)) {
            for (std::int32_t j = 0; j < static_cast<std::int32_t>(cmds.size()); ++j)
                counts_.bump_command(k, state_.s[d][j], -1);
        } else if (has_word_clusters(hp_.model)) {
            for (const auto& cmd : cmds)
                for (std::int32_t i = 0; i < cmd.size(); ++i)
                    if (cmd.is_parent(i)) counts_.bump_parent_word(k, cmd.words[i], -1);
        } else {
            for (std::int32_t j = 0; j < static_cast<std::int32_t>(cmds.size()); ++j)
                for (std::int32_t i = 0; i < cmds[j].size(); ++i) {
                    std::uint8_t zv = has_secondary(hp_.model) ? state_.z[d][j][i]
                                                               : std::uint8_t{1};
                    if (zv) counts_.bump_word(k + 1, cmds[j].words[i], -1);
                    if (has_secondary(hp_.model)) counts_.bump_indicator(k, zv, -1);
                }
        }
        state_.t[d] = -1;
        if (!hp_.dirichlet() && counts_.T[k] == 0) compact_session_topic(k);
    }

    void attach_session_at(std::int32_t d, std::int32_t k, bool fresh) {
        if (fresh) counts_.grow_k(counts_.n_k + 1);
        counts_.bump_session(k, 1);
        const auto& cmds = corpus_->sessions[d].commands;
        if (is_nested(hp_.model)) {
            for (std::int32_t j = 0; j < static_cast<std::int32_t>(cmds.size()); ++j)
                counts_.bump_command(k, state_.s[d][j], 1);
        } else if (has_word_clusters(hp_.model)) {
            for (const auto& cmd : cmds)
                for (std::int32_t i = 0; i < cmd.size(); ++i)
                    if (cmd.is_parent(i)) counts_.bump_parent_word(k, cmd.words[i], 1);
        } else {
            for (std::int32_t j = 0; j < static_cast<std::int32_t>(cmds.size()); ++j)
                for (std::int32_t i = 0; i < cmds[j].size(); ++i) {
                    std::uint8_t zv = has_secondary(hp_.model) ? state_.z[d][j][i]
                                                               : std::uint8_t{1};
                    if (zv) counts_.bump_word(k + 1, cmds[j].words[i], 1);
                    if (has_secondary(hp_.model)) counts_.bump_indicator(k, zv, 1);
                }
        }
        state_.t[d] = k;
    }

    void detach_command(std::int32_t d, std::int32_t j) {
        std::int32_t k = state_.t[d];
        std::int32_t h = state_.s[d][j];
        counts_.bump_command(k, h, -1);
        const Command& cmd = corpus_->sessions[d].commands[j];
        for (std::int32_t i = 0; i < cmd.size(); ++i) {
            std::uint8_t zv = has_secondary(hp_.model) ? state_.z[d][j][i] : std::uint8_t{1};
            if (zv) counts_.bump_word(h + 1, cmd.words[i], -1);
            if (has_secondary(hp_.model)) counts_.bump_indicator(h, zv, -1);
        }
        state_.s[d][j] = -1;
        if (!hp_.dirichlet() && counts_.S_col_total[h] == 0) compact_command_topic(h);
    }

    void attach_command_at(std::int32_t d, std::int32_t j, std::int32_t h, bool fresh) {
        if (fresh) counts_.grow_h(counts_.n_h + 1);
        counts_.bump_command(state_.t[d], h, 1);
        const Command& cmd = corpus_->sessions[d].commands[j];
        for (std::int32_t i = 0; i < cmd.size(); ++i) {
            std::uint8_t zv = has_secondary(hp_.model) ? state_.z[d][j][i] : std::uint8_t{1};
            if (zv) counts_.bump_word(h + 1, cmd.words[i], 1);
            if (has_secondary(hp_.model)) counts_.bump_indicator(h, zv, 1);
        }
        state_.s[d][j] = h;
    }

    void detach_word(std::int32_t d, std::int32_t j, std::int32_t i) {
        std::int32_t h = word_topic_of(state_, hp_.model, d, j);
        std::uint8_t b = state_.z[d][j][i];
        counts_.bump_word(counts_.word_row(h, b), corpus_->sessions[d].commands[j].words[i], -1);
        counts_.bump_indicator(h, b, -1);
    }

    void attach_word(std::int32_t d, std::int32_t j, std::int32_t i, std::uint8_t b) {
        std::int32_t h = word_topic_of(state_, hp_.model, d, j);
        counts_.bump_word(counts_.word_row(h, b), corpus_->sessions[d].commands[j].words[i], 1);
        counts_.bump_indicator(h, b, 1);
        state_.z[d][j][i] = b;
    }

    void detach_cluster(std::int32_t v) {
        std::int32_t h = state_.u[v];
        counts_.bump_cluster(h, -1);
        for (auto [w, c] : child_context_[v].x.items) counts_.bump_child_word(h, w, -c);
        state_.u[v] = -1;
        if (!hp_.dirichlet() && counts_.U[h] == 0) compact_word_cluster(h);
    }

    void attach_cluster_at(std::int32_t v, std::int32_t h, bool fresh) {
        if (fresh) counts_.grow_h(counts_.n_h + 1);
        counts_.bump_cluster(h, 1);
        for (auto [w, c] : child_context_[v].x.items) counts_.bump_child_word(h, w, c);
        state_.u[v] = h;
    }

    // --- compaction -------------------------------------------------------------

    void compact_session_topic(std::int32_t a) {
        std::int32_t moved = counts_.swap_remove_k(a);
        if (moved != a)
            for (auto& v : state_.t)
                if (v == moved) v = a;
    }

    void compact_command_topic(std::int32_t a) {
        std::int32_t moved = counts_.swap_remove_h(a);
        if (moved != a)
            for (auto& row : state_.s)
                for (auto& v : row)
                    if (v == moved) v = a;
    }

    void compact_word_cluster(std::int32_t a) {
        std::int32_t moved = counts_.swap_remove_h(a);
        if (moved != a)
            for (auto& v : state_.u)
                if (v == moved) v = a;
    }

    // --- conditional weights ------------------------------------------------------

    // Data factor of placing a session payload into session-topic row k
    // (row < 0 means a fresh topic).
    double session_data_factor(const Payload& p, std::int32_t k) const {
        bool fresh = k < 0;
        double acc = 0.0;
        if (is_nested(hp_.model)) {
            const auto* row = fresh ? nullptr : &counts_.S[k];
            std::int64_t tot = fresh ? 0 : counts_.S_row_total[k];
            acc = hp_.dirichlet()
                      ? detail::log_dm_alloc(p.x, row, tot, hp_.tau, hp_.tau_sum)
                      : detail::log_dm_alloc_gem(p.x, row, tot, hp_.tau_scalar());
        } else if (has_word_clusters(hp_.model)) {
            const auto* row = fresh ? nullptr : &counts_.Wp[k];
            std::int64_t tot = fresh ? 0 : counts_.Wp_total[k];
            acc = hp_.dirichlet()
                      ? detail::log_dm_alloc(p.x, row, tot, hp_.tau, hp_.tau_sum)
                      : detail::log_dm_alloc_gem(p.x, row, tot, hp_.tau_scalar());
        } else {
            const auto* row = fresh ? nullptr : &counts_.W[k + 1];
            std::int64_t tot = fresh ? 0 : counts_.W_total[k + 1];
            acc = hp_.dirichlet()
                      ? detail::log_dm_alloc(p.x, row, tot, hp_.eta, hp_.eta_sum)
                      : detail::log_dm_alloc_gem(p.x, row, tot, hp_.eta_scalar());
            if (has_secondary(hp_.model)) {
                double a = fresh ? hp_.alpha[0] : hp_.alpha_at(k);
                std::int64_t Zx = fresh ? 0 : counts_.Z[k];
                std::int64_t Mx = fresh ? 0 : counts_.M_star[k];
                acc += detail::log_bb_alloc(p.z_total, p.m_total, a, hp_.alpha0, Zx, Mx);
            }
        }
        return acc;
    }

    std::vector<double> session_log_weights(const Payload& p, std::vector<std::int32_t>& labels,
                                            bool& has_fresh) const {
        std::vector<double> lw;
        if (hp_.dirichlet()) {
            has_fresh = false;
            for (std::int32_t k = 0; k < hp_.k_max; ++k) {
                labels.push_back(k);
                lw.push_back(std::log(hp_.gamma[k] + static_cast<double>(counts_.T[k])) +
                             session_data_factor(p, k));
            }
        } else {
            has_fresh = true;
            for (std::int32_t k = 0; k < counts_.n_k; ++k) {
                labels.push_back(k);
                lw.push_back(std::log(static_cast<double>(counts_.T[k])) +
                             session_data_factor(p, k));
            }
            labels.push_back(counts_.n_k);
            lw.push_back(std::log(hp_.gamma_scalar()) + session_data_factor(p, -1));
        }
        return lw;
    }

    double command_data_factor(const Payload& p, std::int32_t h) const {
        bool fresh = h < 0;
        const auto* row = fresh ? nullptr : &counts_.W[h + 1];
        std::int64_t tot = fresh ? 0 : counts_.W_total[h + 1];
        double acc = hp_.dirichlet()
                         ? detail::log_dm_alloc(p.x, row, tot, hp_.eta, hp_.eta_sum)
                         : detail::log_dm_alloc_gem(p.x, row, tot, hp_.eta_scalar());
        if (has_secondary(hp_.model)) {
            double a = fresh ? hp_.alpha[0] : hp_.alpha_at(h);
            std::int64_t Zx = fresh ? 0 : counts_.Z[h];
            std::int64_t Mx = fresh ? 0 : counts_.M_star[h];
            acc += detail::log_bb_alloc(p.z_total, p.m_total, a, hp_.alpha0, Zx, Mx);
        }
        return acc;
    }

    std::vector<double> command_log_weights(std::int32_t d, const Payload& p,
                                            std::vector<std::int32_t>& labels,
                                            bool& has_fresh) const {
        std::int32_t k = state_.t[d];
        std::vector<double> lw;
        if (hp_.dirichlet()) {
            has_fresh = false;
            for (std::int32_t h = 0; h < hp_.h_max; ++h) {
                labels.push_back(h);
                lw.push_back(std::log(hp_.tau[h] + static_cast<double>(counts_.S[k][h])) +
                             command_data_factor(p, h));
            }
        } else {
            has_fresh = true;
            double tau = hp_.tau_scalar();
            for (std::int32_t h = 0; h < counts_.n_h; ++h) {
                labels.push_back(h);
                std::int64_t cell = counts_.S[k][h];
                lw.push_back((cell == 0 ? std::log(tau)
                                        : std::log(static_cast<double>(cell))) +
                             command_data_factor(p, h));
            }
            labels.push_back(counts_.n_h);
            lw.push_back(std::log(tau) + command_data_factor(p, -1));
        }
        return lw;
    }

    // Detaches the word and returns log weights for z in {0, 1}.
    std::array<double, 2> indicator_log_weights(std::int32_t d, std::int32_t j, std::int32_t i) {
        detach_word(d, j, i);
        std::int32_t h = word_topic_of(state_, hp_.model, d, j);
        std::int32_t v = corpus_->sessions[d].commands[j].words[i];
        double a = hp_.alpha_at(h);
        auto emission = [&](std::int32_t row) {
            if (hp_.dirichlet())
                return std::log(hp_.eta[v] + static_cast<double>(counts_.W[row][v])) -
                       std::log(hp_.eta_sum + static_cast<double>(counts_.W_total[row]));
            double e = hp_.eta_scalar();
            double num = counts_.W[row][v] == 0
                             ? e
                             : static_cast<double>(counts_.W[row][v]);
            return std::log(num) - std::log(e + static_cast<double>(counts_.W_total[row]));
        };
        double lw1 = std::log(a + static_cast<double>(counts_.Z[h])) + emission(h + 1);
        double lw0 = std::log(hp_.alpha0 +
                              static_cast<double>(counts_.M_star[h] - counts_.Z[h])) +
                     emission(0);
        return {lw0, lw1};
    }

    double cluster_data_factor(std::int32_t v, std::int32_t h) const {
        bool fresh = h < 0;
        const auto* row = fresh ? nullptr : &counts_.Wc[h];
        std::int64_t tot = fresh ? 0 : counts_.Wc_total[h];
        return hp_.dirichlet()
                   ? detail::log_dm_alloc(child_context_[v].x, row, tot, hp_.eta, hp_.eta_sum)
                   : detail::log_dm_alloc_gem(child_context_[v].x, row, tot, hp_.eta_scalar());
    }

    std::vector<double> cluster_log_weights(std::int32_t v, std::vector<std::int32_t>& labels,
                                            bool& has_fresh) const {
        std::vector<double> lw;
        if (hp_.dirichlet()) {
            has_fresh = false;
            for (std::int32_t h = 0; h < hp_.h_max; ++h) {
                labels.push_back(h);
                lw.push_back(std::log(hp_.chi[h] + static_cast<double>(counts_.U[h])) +
                             cluster_data_factor(v, h));
            }
        } else {
            has_fresh = true;
            for (std::int32_t h = 0; h < counts_.n_h; ++h) {
                labels.push_back(h);
                lw.push_back(std::log(static_cast<double>(counts_.U[h])) +
                             cluster_data_factor(v, h));
            }
            labels.push_back(counts_.n_h);
            lw.push_back(std::log(hp_.chi_scalar()) + cluster_data_factor(v, -1));
        }
        return lw;
    }

    // --- split-merge internals ------------------------------------------------

    struct Slot {
        std::int32_t label = -1;
        std::int64_t n_items = 0;
        std::vector<std::int64_t> row;
        std::int64_t row_total = 0;
        std::int64_t Z = 0, M = 0;
        // command-level: restricted command counts per session-topic row
        std::vector<std::int64_t> per_k;

        void add(const Payload& p) {
            ++n_items;
            for (auto [v, c] : p.x.items) row[v] += c;
            row_total += p.x.total;
            Z += p.z_total;
            M += p.m_total;
        }
    };

    std::int32_t session_payload_dim() const {
        return is_nested(hp_.model) ? counts_.n_h : corpus_->vocab_size();
    }

    double slot_session_weight(const Payload& p, const Slot& slot) const {
        double prior = hp_.dirichlet()
                           ? std::log(hp_.gamma[slot.label] + static_cast<double>(slot.n_items))
                           : std::log(static_cast<double>(slot.n_items));
        double conc_sum = is_nested(hp_.model) || has_word_clusters(hp_.model) ? hp_.tau_sum
                                                                               : hp_.eta_sum;
        const std::vector<double>& conc =
            is_nested(hp_.model) || has_word_clusters(hp_.model) ? hp_.tau : hp_.eta;
        double data =
            hp_.dirichlet()
                ? detail::log_dm_alloc(p.x, &slot.row, slot.row_total, conc, conc_sum)
                : detail::log_dm_alloc_gem(p.x, &slot.row, slot.row_total, conc[0]);
        if (has_secondary(hp_.model) && !is_nested(hp_.model))
            data += detail::log_bb_alloc(p.z_total, p.m_total, hp_.alpha_at(slot.label),
                                         hp_.alpha0, slot.Z, slot.M);
        return prior + data;
    }

    void move_session(std::int32_t d, std::int32_t k) {
        detach_session(d);
        bool fresh = k == counts_.n_k;
        attach_session_at(d, k, fresh);
    }

    void propose_session_split(std::int32_t d1, std::int32_t d2, SmResult& res) {
        res.was_split = true;
        std::int32_t t_star = state_.t[d1];
        std::int32_t t_tilde = -1;
        if (hp_.dirichlet()) {
            for (std::int32_t k = 0; k < hp_.k_max && t_tilde < 0; ++k)
                if (counts_.T[k] == 0) t_tilde = k;
            if (t_tilde < 0) return;  // no free label: immediate reject
        } else {
            t_tilde = counts_.n_k;
        }
        std::vector<std::int32_t> members;
        for (std::int32_t e = 0; e < corpus_->n_sessions(); ++e)
            if (e != d1 && e != d2 && state_.t[e] == t_star) members.push_back(e);
        rng_.shuffle(members);

        Slot s0, s1;
        s0.label = t_star;
        s1.label = t_tilde;
        s0.row.assign(session_payload_dim(), 0);
        s1.row.assign(session_payload_dim(), 0);
        s0.add(session_payload(d1));
        s1.add(session_payload(d2));

        double logq = 0.0;
        std::vector<std::int32_t> to_tilde{d2};
        for (auto e : members) {
            Payload pe = session_payload(e);
            double lw0 = slot_session_weight(pe, s0);
            double lw1 = slot_session_weight(pe, s1);
            double lse = log_sum_exp(lw0, lw1);
            bool pick1 = rng_.uniform() < std::exp(lw1 - lse);
            logq += (pick1 ? lw1 : lw0) - lse;
            if (pick1) {
                s1.add(pe);
                to_tilde.push_back(e);
            } else {
                s0.add(pe);
            }
        }

        double lj_old = log_joint(counts_, hp_);
        LatentState state_save = state_;
        CountStats counts_save = counts_;
        for (auto e : to_tilde) move_session(e, t_tilde);
        double lj_new = log_joint(counts_, hp_);
        res.log_accept = lj_new - lj_old - logq;
        if (std::log(rng_.uniform()) < res.log_accept) {
            res.accepted = true;
        } else {
            state_ = std::move(state_save);
            counts_ = std::move(counts_save);
        }
    }

    void propose_session_merge(std::int32_t d1, std::int32_t d2, SmResult& res) {
        std::int32_t t_star = state_.t[d1];
        std::int32_t t_src = state_.t[d2];
        std::vector<std::int32_t> members;
        for (std::int32_t e = 0; e < corpus_->n_sessions(); ++e)
            if (e != d1 && e != d2 && (state_.t[e] == t_star || state_.t[e] == t_src))
                members.push_back(e);
        rng_.shuffle(members);

        Slot s0, s1;
        s0.label = t_star;
        s1.label = t_src;
        s0.row.assign(session_payload_dim(), 0);
        s1.row.assign(session_payload_dim(), 0);
        s0.add(session_payload(d1));
        s1.add(session_payload(d2));

        // Reverse-split probability of reproducing the current partition.
        double logq_rev = 0.0;
        for (auto e : members) {
            Payload pe = session_payload(e);
            double lw0 = slot_session_weight(pe, s0);
            double lw1 = slot_session_weight(pe, s1);
            double lse = log_sum_exp(lw0, lw1);
            bool in_src = state_.t[e] == t_src;
            logq_rev += (in_src ? lw1 : lw0) - lse;
            (in_src ? s1 : s0).add(pe);
        }

        double lj_old = log_joint(counts_, hp_);
        LatentState state_save = state_;
        CountStats counts_save = counts_;
        std::vector<std::int32_t> movers{d2};
        for (std::int32_t e = 0; e < corpus_->n_sessions(); ++e)
            if (e != d2 && state_.t[e] == t_src) movers.push_back(e);
        // Re-read the destination through anchor d1 after every detach: when the
        // last mover empties the source row, GEM compaction may relabel it.
        for (auto e : movers) {
            detach_session(e);
            attach_session_at(e, state_.t[d1], false);
        }
        double lj_new = log_joint(counts_, hp_);
        res.log_accept = lj_new - lj_old + logq_rev;
        if (std::log(rng_.uniform()) < res.log_accept) {
            res.accepted = true;
        } else {
            state_ = std::move(state_save);
            counts_ = std::move(counts_save);
        }
    }

    double slot_command_weight(const Payload& p, std::int32_t k, const Slot& slot) const {
        double prior;
        if (hp_.dirichlet()) {
            prior = std::log(hp_.tau[slot.label] + static_cast<double>(slot.per_k[k]));
        } else {
            std::int64_t cell = slot.per_k[k];
            prior = cell == 0 ? std::log(hp_.tau_scalar())
                              : std::log(static_cast<double>(cell));
        }
        double data = hp_.dirichlet()
                          ? detail::log_dm_alloc(p.x, &slot.row, slot.row_total, hp_.eta,
                                                 hp_.eta_sum)
                          : detail::log_dm_alloc_gem(p.x, &slot.row, slot.row_total,
                                                     hp_.eta_scalar());
        if (has_secondary(hp_.model))
            data += detail::log_bb_alloc(p.z_total, p.m_total, hp_.alpha_at(slot.label),
                                         hp_.alpha0, slot.Z, slot.M);
        return prior + data;
    }

    void move_command(std::int32_t d, std::int32_t j, std::int32_t h) {
        detach_command(d, j);
        bool fresh = h == counts_.n_h;
        attach_command_at(d, j, h, fresh);
    }

    void propose_command_split(std::int32_t d1, std::int32_t j1, std::int32_t d2,
                               std::int32_t j2, SmResult& res) {
        res.was_split = true;
        std::int32_t s_star = state_.s[d1][j1];
        std::int32_t s_tilde = -1;
        if (hp_.dirichlet()) {
            for (std::int32_t h = 0; h < hp_.h_max && s_tilde < 0; ++h)
                if (counts_.S_col_total[h] == 0) s_tilde = h;
            if (s_tilde < 0) return;
        } else {
            s_tilde = counts_.n_h;
        }
        std::vector<std::pair<std::int32_t, std::int32_t>> members;
        for (std::int32_t d = 0; d < corpus_->n_sessions(); ++d)
            for (std::int32_t j = 0; j < corpus_->n_commands(d); ++j)
                if (!(d == d1 && j == j1) && !(d == d2 && j == j2) &&
                    state_.s[d][j] == s_star)
                    members.emplace_back(d, j);
        rng_.shuffle(members);

        Slot s0, s1;
        s0.label = s_star;
        s1.label = s_tilde;
        s0.row.assign(corpus_->vocab_size(), 0);
        s1.row.assign(corpus_->vocab_size(), 0);
        s0.per_k.assign(counts_.n_k, 0);
        s1.per_k.assign(counts_.n_k, 0);
        auto add_cmd = [&](Slot& sl, std::int32_t d, std::int32_t j) {
            sl.add(command_payload(d, j));
            ++sl.per_k[state_.t[d]];
            --sl.n_items;  // per_k already tracks the item count per row
        };
        add_cmd(s0, d1, j1);
        add_cmd(s1, d2, j2);

        double logq = 0.0;
        std::vector<std::pair<std::int32_t, std::int32_t>> to_tilde{{d2, j2}};
        for (auto [d, j] : members) {
            Payload pe = command_payload(d, j);
            double lw0 = slot_command_weight(pe, state_.t[d], s0);
            double lw1 = slot_command_weight(pe, state_.t[d], s1);
            double lse = log_sum_exp(lw0, lw1);
            bool pick1 = rng_.uniform() < std::exp(lw1 - lse);
            logq += (pick1 ? lw1 : lw0) - lse;
            if (pick1) {
                add_cmd(s1, d, j);
                to_tilde.emplace_back(d, j);
            } else {
                add_cmd(s0, d, j);
            }
        }

        double lj_old = log_joint(counts_, hp_);
        LatentState state_save = state_;
        CountStats counts_save = counts_;
        for (auto [d, j] : to_tilde) move_command(d, j, s_tilde);
        double lj_new = log_joint(counts_, hp_);
        res.log_accept = lj_new - lj_old - logq;
        if (std::log(rng_.uniform()) < res.log_accept) {
            res.accepted = true;
        } else {
            state_ = std::move(state_save);
            counts_ = std::move(counts_save);
        }
    }

    void propose_command_merge(std::int32_t d1, std::int32_t j1, std::int32_t d2,
                               std::int32_t j2, SmResult& res) {
        std::int32_t s_star = state_.s[d1][j1];
        std::int32_t s_src = state_.s[d2][j2];
        std::vector<std::pair<std::int32_t, std::int32_t>> members;
        for (std::int32_t d = 0; d < corpus_->n_sessions(); ++d)
            for (std::int32_t j = 0; j < corpus_->n_commands(d); ++j)
                if (!(d == d1 && j == j1) && !(d == d2 && j == j2) &&
                    (state_.s[d][j] == s_star || state_.s[d][j] == s_src))
                    members.emplace_back(d, j);
        rng_.shuffle(members);

        Slot s0, s1;
        s0.label = s_star;
        s1.label = s_src;
        s0.row.assign(corpus_->vocab_size(), 0);
        s1.row.assign(corpus_->vocab_size(), 0);
        s0.per_k.assign(counts_.n_k, 0);
        s1.per_k.assign(counts_.n_k, 0);
        auto add_cmd = [&](Slot& sl, std::int32_t d, std::int32_t j) {
            sl.add(command_payload(d, j));
            ++sl.per_k[state_.t[d]];
            --sl.n_items;
        };
        add_cmd(s0, d1, j1);
        add_cmd(s1, d2, j2);

        double logq_rev = 0.0;
        for (auto [d, j] : members) {
            Payload pe = command_payload(d, j);
            double lw0 = slot_command_weight(pe, state_.t[d], s0);
            double lw1 = slot_command_weight(pe, state_.t[d], s1);
            double lse = log_sum_exp(lw0, lw1);
            bool in_src = state_.s[d][j] == s_src;
            logq_rev += (in_src ? lw1 : lw0) - lse;
            add_cmd(in_src ? s1 : s0, d, j);
        }

        double lj_old = log_joint(counts_, hp_);
        LatentState state_save = state_;
        CountStats counts_save = counts_;
        std::vector<std::pair<std::int32_t, std::int32_t>> movers{{d2, j2}};
        for (std::int32_t d = 0; d < corpus_->n_sessions(); ++d)
            for (std::int32_t j = 0; j < corpus_->n_commands(d); ++j)
                if (!(d == d2 && j == j2) && state_.s[d][j] == s_src) movers.emplace_back(d, j);
        // Anchor (d1, j1) stays put, so it tracks the destination label across
        // any compaction triggered when the source column empties.
        for (auto [d, j] : movers) {
            detach_command(d, j);
            attach_command_at(d, j, state_.s[d1][j1], false);
        }
        double lj_new = log_joint(counts_, hp_);
        res.log_accept = lj_new - lj_old + logq_rev;
        if (std::log(rng_.uniform()) < res.log_accept) {
            res.accepted = true;
        } else {
            state_ = std::move(state_save);
            counts_ = std::move(counts_save);
        }
    }
};

inline ChainOutput run_chain(const Corpus& corpus, const Hyperparameters& hp,
                             LatentState init, const SamplerConfig& cfg) {
    if (cfg.iterations < 0) throw ConfigError("iterations must be nonnegative");
    if (cfg.burn_in < 0) throw ConfigError("burn_in must be nonnegative");
    if (cfg.thin < 1) throw ConfigError("thin must be at least 1");
    GibbsSampler sampler(corpus, hp, std::move(init), cfg.seed);
    ChainOutput out;
    out.seed = cfg.seed;
    out.trace.reserve(static_cast<std::size_t>(cfg.iterations));
    for (std::int64_t iter = 1; iter <= cfg.iterations; ++iter) {
        sampler.sweep(cfg.scan_order);
        if (cfg.split_merge_period > 0 && iter % cfg.split_merge_period == 0) {
            SmResult r = sampler.split_merge_sessions();
            out.sm_session_attempts += r.attempted;
            out.sm_session_accepts += r.accepted;
            if (is_nested(hp.model)) {
                SmResult rc = sampler.split_merge_commands();
                out.sm_command_attempts += rc.attempted;
                out.sm_command_accepts += rc.accepted;
            }
        }
        out.trace.push_back({iter, sampler.log_joint_current(), sampler.counts().k_occupied(),
                             sampler.counts().h_occupied(),
                             out.sm_session_accepts + out.sm_command_accepts});
        if (iter > cfg.burn_in && (iter - cfg.burn_in) % cfg.thin == 0)
            out.samples.push_back(sampler.state());
        if (cfg.check_every > 0 && iter % cfg.check_every == 0) sampler.verify_counts();
    }
    return out;
}

} // namespace shelltopics
