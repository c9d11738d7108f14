#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "shelltopics/corpus.hpp"
#include "shelltopics/model.hpp"

namespace shelltopics {

// Topic labels are 0-based throughout.  z is empty for models without a
// secondary topic (every word then behaves as primary); u is empty except
// for the parent/child model.
struct LatentState {
    std::vector<std::int32_t> t;                            // [d]
    std::vector<std::vector<std::int32_t>> s;               // [d][j]
    std::vector<std::vector<std::vector<std::uint8_t>>> z;  // [d][j][i]
    std::vector<std::int32_t> u;                            // [v]

    std::uint8_t z_at(std::int32_t d, std::int32_t j, std::int32_t i) const {
        return z.empty() ? std::uint8_t{1} : z[d][j][i];
    }
};

// Sufficient statistics for the collapsed posterior.  Emission rows are
// indexed 0..n_h where row 0 collects secondary words and row h+1 the words
// of topic h; Z / M_star track primary counts and totals per topic along the
// same dimension.  For flat models that dimension is the session-topic one
// (n_h == n_k); for nested models it is the command-topic one; for the
// parent/child model it indexes word clusters (U, Wc) while Wp rows follow
// session topics.
class CountStats {
public:
    ModelKind model = ModelKind::CBC;
    PriorKind prior = PriorKind::Dirichlet;
    std::int32_t V = 0;
    std::int32_t n_k = 0;
    std::int32_t n_h = 0;

    std::vector<std::int64_t> T;

    std::vector<std::vector<std::int64_t>> S;
    std::vector<std::int64_t> S_row_total, S_col_total;
    std::vector<std::int32_t> S_row_nnz;

    std::vector<std::int64_t> Z, M_star;

    std::vector<std::vector<std::int64_t>> W;
    std::vector<std::int64_t> W_total;
    std::vector<std::int32_t> W_nnz;

    std::vector<std::int64_t> U;
    std::vector<std::vector<std::int64_t>> Wp;
    std::vector<std::int64_t> Wp_total;
    std::vector<std::int32_t> Wp_nnz;
    std::vector<std::vector<std::int64_t>> Wc;
    std::vector<std::int64_t> Wc_total;
    std::vector<std::int32_t> Wc_nnz;

    static CountStats make(ModelKind model, PriorKind prior, std::int32_t V,
                           std::int32_t n_k, std::int32_t n_h) {
        CountStats c;
        c.model = model;
        c.prior = prior;
        c.V = V;
        c.grow_k(n_k);
        if (is_nested(model) || has_word_clusters(model)) c.grow_h(n_h);
        return c;
    }

    std::int32_t word_row(std::int32_t h, std::uint8_t z) const { return z ? h + 1 : 0; }

    std::int32_t k_occupied() const {
        std::int32_t n = 0;
        for (auto v : T) n += v > 0;
        return n;
    }

    std::int32_t h_occupied() const {
        std::int32_t n = 0;
        if (is_nested(model)) {
            for (auto v : S_col_total) n += v > 0;
        } else if (has_word_clusters(model)) {
            for (auto v : U) n += v > 0;
        }
        return n;
    }

    // --- row growth -------------------------------------------------------

    void grow_k(std::int32_t n) {
        if (n <= n_k) return;
        T.resize(n, 0);
        if (is_nested(model)) {
            S.resize(n, std::vector<std::int64_t>(n_h, 0));
            S_row_total.resize(n, 0);
            S_row_nnz.resize(n, 0);
        } else if (has_word_clusters(model)) {
            Wp.resize(n, std::vector<std::int64_t>(V, 0));
            Wp_total.resize(n, 0);
            Wp_nnz.resize(n, 0);
        } else {
            grow_emission_rows(n);
        }
        n_k = n;
    }

    void grow_h(std::int32_t n) {
        if (n <= n_h) return;
        if (is_nested(model)) {
            for (auto& row : S) row.resize(n, 0);
            S_col_total.resize(n, 0);
            grow_emission_rows(n);
        } else if (has_word_clusters(model)) {
            U.resize(n, 0);
            Wc.resize(n, std::vector<std::int64_t>(V, 0));
            Wc_total.resize(n, 0);
            Wc_nnz.resize(n, 0);
            n_h = n;
        } else {
            grow_emission_rows(n);
        }
    }

    // --- incremental updates ----------------------------------------------

    void bump_session(std::int32_t k, std::int64_t delta) { T[k] += delta; }

    void bump_command(std::int32_t k, std::int32_t h, std::int64_t delta) {
        auto& cell = S[k][h];
        if (cell == 0 && delta > 0) ++S_row_nnz[k];
        cell += delta;
        if (cell == 0 && delta < 0) --S_row_nnz[k];
        S_row_total[k] += delta;
        S_col_total[h] += delta;
    }

    void bump_word(std::int32_t row, std::int32_t v, std::int64_t delta) {
        auto& cell = W[row][v];
        if (cell == 0 && delta > 0) ++W_nnz[row];
        cell += delta;
        if (cell == 0 && delta < 0) --W_nnz[row];
        W_total[row] += delta;
    }

    void bump_indicator(std::int32_t h, std::uint8_t z, std::int64_t delta) {
        if (z) Z[h] += delta;
        M_star[h] += delta;
    }

    void bump_cluster(std::int32_t h, std::int64_t delta) { U[h] += delta; }

    void bump_parent_word(std::int32_t k, std::int32_t v, std::int64_t delta) {
        auto& cell = Wp[k][v];
        if (cell == 0 && delta > 0) ++Wp_nnz[k];
        cell += delta;
        if (cell == 0 && delta < 0) --Wp_nnz[k];
        Wp_total[k] += delta;
    }

    void bump_child_word(std::int32_t h, std::int32_t v, std::int64_t delta) {
        auto& cell = Wc[h][v];
        if (cell == 0 && delta > 0) ++Wc_nnz[h];
        cell += delta;
        if (cell == 0 && delta < 0) --Wc_nnz[h];
        Wc_total[h] += delta;
    }

    // --- label compaction (GEM) --------------------------------------------
    // Drops an empty row by swapping the last row into its place and
    // shrinking; returns the label that moved there (== a when none moved).
    // The caller relabels the latent state accordingly.

    std::int32_t swap_remove_k(std::int32_t a) {
        std::int32_t last = n_k - 1;
        if (a != last) {
            std::swap(T[a], T[last]);
            if (is_nested(model)) {
                std::swap(S[a], S[last]);
                std::swap(S_row_total[a], S_row_total[last]);
                std::swap(S_row_nnz[a], S_row_nnz[last]);
            } else if (has_word_clusters(model)) {
                std::swap(Wp[a], Wp[last]);
                std::swap(Wp_total[a], Wp_total[last]);
                std::swap(Wp_nnz[a], Wp_nnz[last]);
            } else {
                swap_emission_rows(a, last);
            }
        }
        T.pop_back();
        if (is_nested(model)) {
            S.pop_back();
            S_row_total.pop_back();
            S_row_nnz.pop_back();
        } else if (has_word_clusters(model)) {
            Wp.pop_back();
            Wp_total.pop_back();
            Wp_nnz.pop_back();
        } else {
            pop_emission_row();
        }
        --n_k;
        return last;
    }

    std::int32_t swap_remove_h(std::int32_t a) {
        std::int32_t last = n_h - 1;
        if (is_nested(model)) {
            if (a != last) {
                for (auto& row : S) std::swap(row[a], row[last]);
                std::swap(S_col_total[a], S_col_total[last]);
                swap_emission_rows(a, last);
            }
            for (auto& row : S) row.pop_back();
            S_col_total.pop_back();
            pop_emission_row();
        } else if (has_word_clusters(model)) {
            if (a != last) {
                std::swap(U[a], U[last]);
                std::swap(Wc[a], Wc[last]);
                std::swap(Wc_total[a], Wc_total[last]);
                std::swap(Wc_nnz[a], Wc_nnz[last]);
            }
            U.pop_back();
            Wc.pop_back();
            Wc_total.pop_back();
            Wc_nnz.pop_back();
            --n_h;
        }
        return last;
    }

    bool operator==(const CountStats& o) const {
        return n_k == o.n_k && n_h == o.n_h && V == o.V && T == o.T && S == o.S &&
               S_row_total == o.S_row_total && S_col_total == o.S_col_total &&
               S_row_nnz == o.S_row_nnz && Z == o.Z && M_star == o.M_star && W == o.W &&
               W_total == o.W_total && W_nnz == o.W_nnz && U == o.U && Wp == o.Wp &&
               Wp_total == o.Wp_total && Wp_nnz == o.Wp_nnz && Wc == o.Wc &&
               Wc_total == o.Wc_total && Wc_nnz == o.Wc_nnz;
    }

private:
    // Emission rows plus the indicator tables share the word-topic dimension.
    void grow_emission_rows(std::int32_t n) {
        W.resize(static_cast<std::size_t>(n) + 1, std::vector<std::int64_t>(V, 0));
        W_total.resize(static_cast<std::size_t>(n) + 1, 0);
        W_nnz.resize(static_cast<std::size_t>(n) + 1, 0);
        Z.resize(n, 0);
        M_star.resize(n, 0);
        n_h = n;
    }

    // Topic labels a and b; emission rows sit one above (row 0 is secondary).
    void swap_emission_rows(std::int32_t a, std::int32_t b) {
        std::swap(W[a + 1], W[b + 1]);
        std::swap(W_total[a + 1], W_total[b + 1]);
        std::swap(W_nnz[a + 1], W_nnz[b + 1]);
        std::swap(Z[a], Z[b]);
        std::swap(M_star[a], M_star[b]);
    }

    void pop_emission_row() {
        W.pop_back();
        W_total.pop_back();
        W_nnz.pop_back();
        Z.pop_back();
        M_star.pop_back();
        --n_h;
    }
};

// Word-topic label of command (d,j): the command topic for nested models,
// the session topic otherwise.
inline std::int32_t word_topic_of(const LatentState& state, ModelKind model,
                                  std::int32_t d, std::int32_t j) {
    return is_nested(model) ? state.s[d][j] : state.t[d];
}

inline CountStats counts_from_state(const Corpus& corpus, const LatentState& state,
                                    const Hyperparameters& hp) {
    std::int32_t n_k, n_h;
    if (hp.dirichlet()) {
        n_k = hp.k_max;
        n_h = (is_nested(hp.model) || has_word_clusters(hp.model)) ? hp.h_max : hp.k_max;
    } else {
        n_k = 0;
        for (auto v : state.t) n_k = std::max(n_k, v + 1);
        n_h = n_k;
        if (is_nested(hp.model)) {
            n_h = 0;
            for (const auto& row : state.s)
                for (auto v : row) n_h = std::max(n_h, v + 1);
        } else if (has_word_clusters(hp.model)) {
            n_h = 0;
            for (auto v : state.u) n_h = std::max(n_h, v + 1);
        }
    }
    CountStats c = CountStats::make(hp.model, hp.prior, corpus.vocab_size(), n_k, n_h);
    for (std::int32_t d = 0; d < corpus.n_sessions(); ++d) {
        std::int32_t k = state.t[d];
        c.bump_session(k, 1);
        const auto& cmds = corpus.sessions[d].commands;
        for (std::int32_t j = 0; j < static_cast<std::int32_t>(cmds.size()); ++j) {
            const Command& cmd = cmds[j];
            if (has_word_clusters(hp.model)) {
                for (std::int32_t i = 0; i < cmd.size(); ++i) {
                    if (cmd.is_parent(i))
                        c.bump_parent_word(k, cmd.words[i], 1);
                    else
                        c.bump_child_word(state.u[cmd.parent_word(i)], cmd.words[i], 1);
                }
                continue;
            }
            std::int32_t h = word_topic_of(state, hp.model, d, j);
            if (is_nested(hp.model)) c.bump_command(k, h, 1);
            for (std::int32_t i = 0; i < cmd.size(); ++i) {
                std::uint8_t zv = has_secondary(hp.model) ? state.z_at(d, j, i) : std::uint8_t{1};
                c.bump_word(c.word_row(h, zv), cmd.words[i], 1);
                if (has_secondary(hp.model)) c.bump_indicator(h, zv, 1);
            }
        }
    }
    if (has_word_clusters(hp.model))
        for (auto v : state.u) c.bump_cluster(v, 1);
    return c;
}

} // namespace shelltopics
