#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "shelltopics/marginals.hpp"
#include "shelltopics/simulate.hpp"

using namespace shelltopics;

namespace {

SimulationParams base_params(ModelKind m) {
    SimulationParams p;
    p.model = m;
    p.n_sessions = 10;
    p.commands_per_session = 3;
    p.words_per_command = 4;
    p.vocab_size = 12;
    p.k_true = 3;
    p.h_true = 2;
    p.seed = 11;
    return p;
}

} // namespace

TEST_CASE("simulated corpora have the requested shapes and label ranges") {
    for (ModelKind m : {ModelKind::CBC, ModelKind::CBC_Secondary, ModelKind::NCBC,
                        ModelKind::NCBC_Secondary, ModelKind::PCNBC}) {
        SimulationParams p = base_params(m);
        SimulatedData data = generate(p);
        INFO("model " << model_name(m));

        REQUIRE(data.corpus.n_sessions() == p.n_sessions);
        REQUIRE(data.truth.t.size() == static_cast<std::size_t>(p.n_sessions));
        for (auto k : data.truth.t) {
            REQUIRE(k >= 0);
            REQUIRE(k < p.k_true);
        }
        for (std::int32_t d = 0; d < p.n_sessions; ++d) {
            REQUIRE(data.corpus.n_commands(d) == p.commands_per_session);
            for (const auto& cmd : data.corpus.sessions[d].commands) {
                REQUIRE(cmd.size() == p.words_per_command);
                REQUIRE(!cmd.parent_pos.empty());
                REQUIRE(cmd.parent_pos.front() == 0);
                for (std::size_t a = 1; a < cmd.parent_pos.size(); ++a)
                    REQUIRE(cmd.parent_pos[a] > cmd.parent_pos[a - 1]);
                for (auto w : cmd.words) {
                    REQUIRE(w >= 0);
                    REQUIRE(w < p.vocab_size);
                }
            }
        }

        REQUIRE(data.truth.s.empty() != is_nested(m));
        if (is_nested(m)) {
            REQUIRE(data.psi.size() == static_cast<std::size_t>(p.k_true));
            for (std::int32_t d = 0; d < p.n_sessions; ++d) {
                REQUIRE(data.truth.s[d].size() ==
                        static_cast<std::size_t>(p.commands_per_session));
                for (auto h : data.truth.s[d]) {
                    REQUIRE(h >= 0);
                    REQUIRE(h < p.h_true);
                }
            }
        }

        REQUIRE(data.truth.z.empty() != has_secondary(m));
        if (has_secondary(m))
            for (std::int32_t d = 0; d < p.n_sessions; ++d)
                for (std::int32_t j = 0; j < p.commands_per_session; ++j)
                    REQUIRE(data.truth.z[d][j].size() ==
                            static_cast<std::size_t>(p.words_per_command));

        REQUIRE(data.truth.u.empty() != has_word_clusters(m));
        if (has_word_clusters(m)) {
            REQUIRE(data.truth.u.size() == static_cast<std::size_t>(p.vocab_size));
            for (auto h : data.truth.u) {
                REQUIRE(h >= 0);
                REQUIRE(h < p.h_true);
            }
            REQUIRE(data.phi_parent.size() == static_cast<std::size_t>(p.k_true));
            REQUIRE(data.phi_child.size() == static_cast<std::size_t>(p.h_true));
        } else {
            // emission rows: one shared row plus one per word topic
            std::size_t word_topics =
                static_cast<std::size_t>(is_nested(m) ? p.h_true : p.k_true);
            REQUIRE(data.phi.size() == word_topics + 1);
            for (const auto& row : data.phi) {
                double tot = 0.0;
                for (auto v : row) {
                    REQUIRE(v >= 0.0);
                    tot += v;
                }
                REQUIRE(tot == Catch::Approx(1.0).margin(1e-9));
            }
        }
    }
}

TEST_CASE("simulated vocabularies carry recomputed command frequencies") {
    SimulationParams p = base_params(ModelKind::CBC);
    SimulatedData data = generate(p);
    REQUIRE(data.corpus.vocab_size() == p.vocab_size);
    for (std::int32_t v = 0; v < p.vocab_size; ++v)
        REQUIRE(data.corpus.vocab.token(v) == "w" + std::to_string(v));
    REQUIRE(data.corpus.vocab.total_commands ==
            static_cast<std::int64_t>(p.n_sessions) * p.commands_per_session);

    // independent recount of per-command-distinct occurrences
    std::vector<std::int64_t> freq(p.vocab_size, 0);
    for (const auto& sess : data.corpus.sessions)
        for (const auto& cmd : sess.commands) {
            std::set<std::int32_t> distinct(cmd.words.begin(), cmd.words.end());
            for (auto w : distinct) ++freq[w];
        }
    for (std::int32_t v = 0; v < p.vocab_size; ++v)
        REQUIRE(data.corpus.vocab.command_freq(v) == freq[v]);
}

TEST_CASE("simulation is a pure function of its seed") {
    for (ModelKind m : {ModelKind::CBC_Secondary, ModelKind::PCNBC}) {
        SimulationParams p = base_params(m);
        SimulatedData a = generate(p);
        SimulatedData b = generate(p);
        REQUIRE(a.truth.t == b.truth.t);
        REQUIRE(a.truth.s == b.truth.s);
        REQUIRE(a.truth.z == b.truth.z);
        REQUIRE(a.truth.u == b.truth.u);
        bool same_words = true;
        for (std::int32_t d = 0; d < p.n_sessions; ++d)
            for (std::int32_t j = 0; j < p.commands_per_session; ++j)
                same_words = same_words && a.corpus.sessions[d].commands[j].words ==
                                               b.corpus.sessions[d].commands[j].words;
        REQUIRE(same_words);

        p.seed = 999;
        SimulatedData c = generate(p);
        bool differs = a.truth.t != c.truth.t;
        for (std::int32_t d = 0; d < p.n_sessions && !differs; ++d)
            for (std::int32_t j = 0; j < p.commands_per_session && !differs; ++j)
                differs = a.corpus.sessions[d].commands[j].words !=
                          c.corpus.sessions[d].commands[j].words;
        REQUIRE(differs);
    }
}

TEST_CASE("poisson lengths stay positive and actually vary") {
    SimulationParams p = base_params(ModelKind::CBC);
    p.lengths = LengthMode::TruncatedPoisson;
    p.commands_per_session = 2;
    p.words_per_command = 3;
    p.n_sessions = 40;
    SimulatedData data = generate(p);
    std::set<std::int32_t> cmd_counts, word_counts;
    for (std::int32_t d = 0; d < data.corpus.n_sessions(); ++d) {
        cmd_counts.insert(data.corpus.n_commands(d));
        REQUIRE(data.corpus.n_commands(d) >= 1);
        for (const auto& cmd : data.corpus.sessions[d].commands) {
            REQUIRE(cmd.size() >= 1);
            word_counts.insert(cmd.size());
        }
    }
    REQUIRE(cmd_counts.size() > 1);
    REQUIRE(word_counts.size() > 1);
}

TEST_CASE("parent-child simulation opens multiple sub-commands") {
    SimulationParams p = base_params(ModelKind::PCNBC);
    p.words_per_command = 8;
    p.n_sessions = 20;
    SimulatedData data = generate(p);
    std::int64_t parents = 0, commands = 0;
    for (const auto& sess : data.corpus.sessions)
        for (const auto& cmd : sess.commands) {
            parents += static_cast<std::int64_t>(cmd.parent_pos.size());
            ++commands;
        }
    REQUIRE(parents > commands);  // parent_prob 0.3 over 7 optional slots per command
}

TEST_CASE("session splits partition the corpus and keep the vocabulary") {
    SimulationParams p = base_params(ModelKind::CBC);
    SimulatedData data = generate(p);
    auto [train, test] = split_sessions(data.corpus, 0.8, 5);
    REQUIRE(train.n_sessions() == 8);
    REQUIRE(test.n_sessions() == 2);
    REQUIRE(train.vocab_size() == data.corpus.vocab_size());
    REQUIRE(test.vocab_size() == data.corpus.vocab_size());

    std::set<std::string> ids;
    for (const auto& s : train.sessions) ids.insert(s.session_id);
    for (const auto& s : test.sessions) REQUIRE(!ids.count(s.session_id));
    for (const auto& s : test.sessions) ids.insert(s.session_id);
    REQUIRE(ids.size() == static_cast<std::size_t>(data.corpus.n_sessions()));

    auto [train2, test2] = split_sessions(data.corpus, 0.8, 5);
    REQUIRE(train2.sessions.size() == train.sessions.size());
    for (std::size_t i = 0; i < train.sessions.size(); ++i)
        REQUIRE(train2.sessions[i].session_id == train.sessions[i].session_id);

    // extreme fractions still leave both halves non-empty
    auto [almost_all, leftover] = split_sessions(data.corpus, 0.999, 5);
    REQUIRE(almost_all.n_sessions() == 9);
    REQUIRE(leftover.n_sessions() == 1);

    REQUIRE_THROWS_AS(split_sessions(data.corpus, 0.0, 1), ConfigError);
    REQUIRE_THROWS_AS(split_sessions(data.corpus, 1.0, 1), ConfigError);
    REQUIRE_THROWS_AS(split_sessions(data.corpus, -0.3, 1), ConfigError);
}

TEST_CASE("the generating labels score higher than shuffled ones") {
    int wins = 0;
    const int n_seeds = 20;
    for (int seed = 0; seed < n_seeds; ++seed) {
        SimulationParams p = base_params(ModelKind::CBC);
        p.n_sessions = 20;
        p.commands_per_session = 4;
        p.words_per_command = 6;
        p.vocab_size = 30;
        p.eta_sim = 0.05;
        p.seed = static_cast<std::uint64_t>(seed) + 100;
        SimulatedData data = generate(p);

        Hyperparameters hp;
        hp.model = ModelKind::CBC;
        hp.k_max = p.k_true;
        hp.vocab_size = p.vocab_size;
        hp = validated(hp);

        Rng rng(static_cast<std::uint64_t>(seed) + 7);
        LatentState shuffled = data.truth;
        for (auto& v : shuffled.t)
            v = static_cast<std::int32_t>(rng.uniform_index(p.k_true));

        if (log_joint(data.corpus, data.truth, hp) >
            log_joint(data.corpus, shuffled, hp))
            ++wins;
    }
    INFO("truth beat shuffled labels in " << wins << "/" << n_seeds << " seeds");
    REQUIRE(wins >= 18);
}

TEST_CASE("impossible simulation settings are rejected") {
    SimulationParams p = base_params(ModelKind::CBC);
    p.n_sessions = 0;
    REQUIRE_THROWS_AS(generate(p), ConfigError);
    p = base_params(ModelKind::CBC);
    p.vocab_size = 1;
    REQUIRE_THROWS_AS(generate(p), ConfigError);
    p = base_params(ModelKind::NCBC);
    p.h_true = 0;
    REQUIRE_THROWS_AS(generate(p), ConfigError);
    p = base_params(ModelKind::CBC);
    p.words_per_command = -2;
    REQUIRE_THROWS_AS(generate(p), ConfigError);
}
