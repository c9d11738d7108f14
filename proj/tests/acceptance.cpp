// Acceptance gate.  Runs nine end-to-end checks against the library and the
// CLI and prints exactly one line per criterion:
//
//   criterion N PASS: <evidence>
//   criterion N FAIL: <evidence>
//
// The process exit status is the number of failed criteria, so the binary
// doubles as a ctest entry.  Heavy checks fan out across threads but every
// random stream is seeded explicitly, so the verdict is reproducible.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "oracles.hpp"
#include "shelltopics/chain_io.hpp"
#include "shelltopics/estimate.hpp"
#include "shelltopics/marginals.hpp"
#include "shelltopics/metrics.hpp"
#include "shelltopics/sampler.hpp"
#include "shelltopics/simulate.hpp"
#include "shelltopics/spectral.hpp"
#include "shelltopics/tokenize.hpp"

using namespace shelltopics;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double secs_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double x, const char* fmt = "%.3g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, x);
    return buf;
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

void print_outcome(int id, const Outcome& o) {
    std::printf("criterion %d %s: %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
}

// ---------------------------------------------------------------------------
// criterion 1: Gibbs chains match exhaustively enumerated posteriors
// ---------------------------------------------------------------------------

// 3 sessions x 2 commands; every command is "parent word, child word".
Corpus tiny_two_word_corpus() {
    Corpus c;
    for (int v = 0; v < 4; ++v) c.vocab.add("w" + std::to_string(v), 1);
    const std::vector<std::vector<std::vector<std::int32_t>>> words{
        {{0, 1}, {2, 3}}, {{0, 2}, {1, 3}}, {{3, 3}, {0, 0}}};
    c.sessions.resize(3);
    for (int d = 0; d < 3; ++d) {
        c.sessions[d].session_id = "s" + std::to_string(d);
        c.sessions[d].commands.resize(2);
        for (int j = 0; j < 2; ++j) {
            c.sessions[d].commands[j].words = words[d][j];
            c.sessions[d].commands[j].parent_pos = {0};
        }
    }
    c.vocab.total_commands = 6;
    return c;
}

// Same shape with single-word commands, keeping indicator enumeration small.
Corpus tiny_one_word_corpus() {
    Corpus c;
    for (int v = 0; v < 4; ++v) c.vocab.add("w" + std::to_string(v), 1);
    const std::vector<std::vector<std::int32_t>> words{{0, 1}, {2, 3}, {3, 0}};
    c.sessions.resize(3);
    for (int d = 0; d < 3; ++d) {
        c.sessions[d].session_id = "s" + std::to_string(d);
        c.sessions[d].commands.resize(2);
        for (int j = 0; j < 2; ++j) {
            c.sessions[d].commands[j].words = {words[d][j]};
            c.sessions[d].commands[j].parent_pos = {0};
        }
    }
    c.vocab.total_commands = 6;
    return c;
}

Hyperparameters tiny_hyper(ModelKind m) {
    Hyperparameters hp;
    hp.model = m;
    hp.prior = PriorKind::Dirichlet;
    hp.k_max = 2;
    hp.h_max = (is_nested(m) || has_word_clusters(m)) ? 2 : 0;
    hp.vocab_size = 4;
    hp.gamma = {0.5};
    hp.tau = {0.5};
    hp.eta = {0.5};
    hp.chi = {0.5};
    return validated(hp);
}

LatentState zero_state(const Corpus& corpus, const Hyperparameters& hp) {
    LatentState st;
    st.t.assign(corpus.n_sessions(), 0);
    if (is_nested(hp.model)) {
        st.s.resize(corpus.n_sessions());
        for (std::int32_t d = 0; d < corpus.n_sessions(); ++d)
            st.s[d].assign(corpus.n_commands(d), 0);
    }
    if (has_secondary(hp.model)) {
        st.z.resize(corpus.n_sessions());
        for (std::int32_t d = 0; d < corpus.n_sessions(); ++d) {
            st.z[d].resize(corpus.n_commands(d));
            for (std::int32_t j = 0; j < corpus.n_commands(d); ++j)
                st.z[d][j].assign(corpus.sessions[d].commands[j].size(), 0);
        }
    }
    if (has_word_clusters(hp.model)) st.u.assign(corpus.vocab_size(), 0);
    return st;
}

std::string t_key(const std::vector<std::int32_t>& t) {
    std::string key;
    for (auto v : t) key += static_cast<char>('0' + v);
    return key;
}

struct TinyResult {
    double tv = 1.0;
    std::size_t n_states = 0;
    double secs = 0.0;
    std::string err;
};

TinyResult tiny_instance(ModelKind m, std::uint64_t seed) {
    TinyResult r;
    try {
        auto t0 = Clock::now();
        Corpus corpus = has_secondary(m) ? tiny_one_word_corpus() : tiny_two_word_corpus();
        Hyperparameters hp = tiny_hyper(m);

        auto joint = [](const Corpus& c, const LatentState& s, const Hyperparameters& h) {
            return log_joint(c, s, h);
        };
        auto e = oracles::enumerate_posterior(corpus, hp, joint);
        r.n_states = e.states.size();
        std::map<std::string, double> exact;
        for (std::size_t i = 0; i < e.states.size(); ++i)
            exact[t_key(e.states[i].t)] += std::exp(e.log_probs[i]);

        GibbsSampler s(corpus, hp, zero_state(corpus, hp), seed);
        const int burn = 1000, keep = 50000;
        std::map<std::string, double> empirical;
        for (int it = 0; it < burn + keep; ++it) {
            s.sweep();
            if (it >= burn) empirical[t_key(s.state().t)] += 1.0 / keep;
        }
        r.tv = oracles::total_variation(exact, empirical);
        r.secs = secs_since(t0);
    } catch (const std::exception& ex) {
        r.err = ex.what();
    }
    return r;
}

Outcome criterion1() {
    const std::vector<std::pair<ModelKind, std::size_t>> instances{
        {ModelKind::CBC, 8},
        {ModelKind::NCBC, 512},
        {ModelKind::CBC_Secondary, 512},
        {ModelKind::PCNBC, 128}};
    std::vector<TinyResult> results(instances.size());
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < instances.size(); ++i)
        pool.emplace_back([&, i] { results[i] = tiny_instance(instances[i].first, 11 + i); });
    for (auto& th : pool) th.join();

    Outcome o;
    o.pass = true;
    std::string detail;
    double max_secs = 0.0;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const TinyResult& r = results[i];
        if (!r.err.empty()) {
            o.pass = false;
            detail += model_name(instances[i].first) + " error: " + r.err + "; ";
            continue;
        }
        if (r.n_states != instances[i].second || r.tv >= 0.02 || r.secs >= 120.0)
            o.pass = false;
        max_secs = std::max(max_secs, r.secs);
        detail += model_name(instances[i].first) + " states=" + std::to_string(r.n_states) +
                  " TV=" + num(r.tv) + "; ";
    }
    o.detail = detail + "max elapsed " + num(max_secs, "%.1f") + "s (limit 120s/instance)";
    return o;
}

// ---------------------------------------------------------------------------
// criterion 2: single-site conditionals equal normalized joint ratios
// ---------------------------------------------------------------------------

void fold_site_error(const GibbsSampler& s, const Corpus& corpus, const Hyperparameters& hp,
                     double& max_err, long& checks) {
    auto fold = [&](const std::vector<double>& probs, std::vector<double> lj) {
        normalize_log_weights(lj);
        for (std::size_t i = 0; i < probs.size(); ++i) {
            max_err = std::max(max_err, std::fabs(probs[i] - lj[i]));
            ++checks;
        }
    };
    for (std::int32_t d = 0; d < corpus.n_sessions(); ++d) {
        Conditional c = s.session_conditional(d);
        std::vector<double> lj(c.labels.size());
        for (std::size_t idx = 0; idx < c.labels.size(); ++idx) {
            GibbsSampler probe = s;
            probe.apply_session_candidate(d, static_cast<int>(idx));
            lj[idx] = probe.log_joint_current();
        }
        fold(c.probs, std::move(lj));
    }
    if (is_nested(hp.model))
        for (std::int32_t d = 0; d < corpus.n_sessions(); ++d)
            for (std::int32_t j = 0; j < corpus.n_commands(d); ++j) {
                Conditional c = s.command_conditional(d, j);
                std::vector<double> lj(c.labels.size());
                for (std::size_t idx = 0; idx < c.labels.size(); ++idx) {
                    GibbsSampler probe = s;
                    probe.apply_command_candidate(d, j, static_cast<int>(idx));
                    lj[idx] = probe.log_joint_current();
                }
                fold(c.probs, std::move(lj));
            }
    if (has_secondary(hp.model))
        for (std::int32_t d = 0; d < corpus.n_sessions(); ++d)
            for (std::int32_t j = 0; j < corpus.n_commands(d); ++j)
                for (std::int32_t i = 0; i < corpus.sessions[d].commands[j].size(); ++i) {
                    auto c = s.indicator_conditional(d, j, i);
                    std::vector<double> lj(2);
                    for (int b = 0; b < 2; ++b) {
                        GibbsSampler probe = s;
                        probe.apply_indicator_candidate(d, j, i, static_cast<std::uint8_t>(b));
                        lj[b] = probe.log_joint_current();
                    }
                    fold({c[0], c[1]}, std::move(lj));
                }
    if (has_word_clusters(hp.model))
        for (std::int32_t v = 0; v < corpus.vocab_size(); ++v) {
            Conditional c = s.cluster_conditional(v);
            std::vector<double> lj(c.labels.size());
            for (std::size_t idx = 0; idx < c.labels.size(); ++idx) {
                GibbsSampler probe = s;
                probe.apply_cluster_candidate(v, static_cast<int>(idx));
                lj[idx] = probe.log_joint_current();
            }
            fold(c.probs, std::move(lj));
        }
}

Outcome criterion2() {
    const ModelKind models[] = {ModelKind::CBC, ModelKind::CBC_Secondary, ModelKind::NCBC,
                                ModelKind::NCBC_Secondary, ModelKind::PCNBC};
    struct Slot {
        double max_err = 0.0;
        long checks = 0;
        std::string err;
    };
    std::vector<Slot> slots(5);
    std::vector<std::thread> pool;
    for (int mi = 0; mi < 5; ++mi)
        pool.emplace_back([&, mi] {
            try {
                Rng rng(derive_stream_seed(24601, static_cast<std::uint64_t>(mi)));
                for (PriorKind p : {PriorKind::Dirichlet, PriorKind::GEM})
                    for (int trial = 0; trial < 200; ++trial) {
                        Corpus corpus = oracles::random_tiny_corpus(rng);
                        Hyperparameters hp =
                            oracles::random_hyper(rng, models[mi], p, corpus.vocab_size());
                        LatentState st = oracles::random_state(rng, corpus, hp);
                        GibbsSampler s(corpus, hp, st, 7);
                        fold_site_error(s, corpus, hp, slots[mi].max_err, slots[mi].checks);
                    }
            } catch (const std::exception& ex) {
                slots[mi].err = ex.what();
            }
        });
    for (auto& th : pool) th.join();

    Outcome o;
    double max_err = 0.0;
    long checks = 0;
    std::string errors;
    for (const auto& s : slots) {
        max_err = std::max(max_err, s.max_err);
        checks += s.checks;
        if (!s.err.empty()) errors += s.err + "; ";
    }
    o.pass = errors.empty() && max_err < 1e-10;
    o.detail = "200 random states per model/prior, " + std::to_string(checks) +
               " conditional entries, max |error| = " + num(max_err, "%.2e") +
               (errors.empty() ? "" : "; exceptions: " + errors);
    return o;
}

// ---------------------------------------------------------------------------
// criteria 3-7: recovery studies on simulated corpora
// ---------------------------------------------------------------------------

PosteriorSummary fit_model(const Corpus& corpus, Hyperparameters hp, std::uint64_t seed) {
    hp.vocab_size = corpus.vocab_size();
    hp = validated(hp);
    InitConfig ic;
    ic.seed = derive_stream_seed(seed, 1);
    LatentState init = make_initial_state(corpus, hp, ic);
    SamplerConfig sc;
    sc.iterations = 2000;
    sc.burn_in = 200;
    sc.thin = 5;
    sc.seed = derive_stream_seed(seed, 0);
    sc.split_merge_period = 10;
    ChainOutput out = run_chain(corpus, hp, init, sc);
    return summarize_chain(corpus, hp, out.samples);
}

Hyperparameters flat_dirichlet_hyper() {
    Hyperparameters hp;
    hp.model = ModelKind::CBC;
    hp.prior = PriorKind::Dirichlet;
    hp.k_max = 10;
    hp.gamma = {0.1};
    hp.eta = {1.0};
    return hp;  // validated inside fit_model once vocab_size is known
}

SimulationParams flat_sim(double eta_sim, std::uint64_t seed) {
    SimulationParams sim;
    sim.model = ModelKind::CBC;
    sim.n_sessions = 100;
    sim.commands_per_session = 10;
    sim.words_per_command = 10;
    sim.vocab_size = 50;
    sim.k_true = 5;
    sim.eta_sim = eta_sim;
    sim.seed = seed;
    return sim;
}

struct FlatBlock {
    std::vector<double> ari_sharp, ari_diffuse;
    std::vector<int> k_dir, k_gem;
    double sharp_secs = 0.0;
    std::string err;
};

FlatBlock flat_block() {
    const int n_seeds = 10;
    FlatBlock b;
    b.ari_sharp.resize(n_seeds);
    b.ari_diffuse.resize(n_seeds);
    b.k_dir.resize(n_seeds);
    b.k_gem.resize(n_seeds);
    std::vector<Corpus> corpora(n_seeds);
    std::vector<LatentState> truths(n_seeds);
    std::vector<std::string> errs(n_seeds);

    // phase A (timed): sharp-emission corpora, bounded-prior fits
    auto t0 = Clock::now();
    {
        std::vector<std::thread> pool;
        for (int i = 0; i < n_seeds; ++i)
            pool.emplace_back([&, i] {
                try {
                    SimulatedData data = generate(flat_sim(0.1, 1000 + i));
                    corpora[i] = data.corpus;
                    truths[i] = data.truth;
                    PosteriorSummary fit =
                        fit_model(data.corpus, flat_dirichlet_hyper(), 7000 + i);
                    b.ari_sharp[i] = adjusted_rand_index(data.truth.t, fit.consensus);
                    b.k_dir[i] = fit.k_modal;
                } catch (const std::exception& ex) {
                    errs[i] = ex.what();
                }
            });
        for (auto& th : pool) th.join();
    }
    b.sharp_secs = secs_since(t0);

    // phase B: unbounded-prior fits on the same corpora
    {
        std::vector<std::thread> pool;
        for (int i = 0; i < n_seeds; ++i)
            pool.emplace_back([&, i] {
                try {
                    Hyperparameters hp;
                    hp.model = ModelKind::CBC;
                    hp.prior = PriorKind::GEM;
                    hp.gamma = {0.1};
                    // unbounded-prior concentrations are total mass (per-cell
                    // counterpart eta/V), so matching the bounded fit's
                    // symmetric per-cell 1.0 over V=50 requires 50 here
                    hp.eta = {50.0};
                    PosteriorSummary fit = fit_model(corpora[i], hp, 7100 + i);
                    b.k_gem[i] = fit.k_modal;
                } catch (const std::exception& ex) {
                    errs[i] = ex.what();
                }
            });
        for (auto& th : pool) th.join();
    }

    // phase C: near-uniform emissions wash out the session signal
    {
        std::vector<std::thread> pool;
        for (int i = 0; i < n_seeds; ++i)
            pool.emplace_back([&, i] {
                try {
                    SimulatedData data = generate(flat_sim(10.0, 1000 + i));
                    PosteriorSummary fit =
                        fit_model(data.corpus, flat_dirichlet_hyper(), 7200 + i);
                    b.ari_diffuse[i] = adjusted_rand_index(data.truth.t, fit.consensus);
                } catch (const std::exception& ex) {
                    errs[i] = ex.what();
                }
            });
        for (auto& th : pool) th.join();
    }

    for (const auto& e : errs)
        if (!e.empty()) b.err += e + "; ";
    return b;
}

double mean(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::vector<std::int32_t> flatten(const std::vector<std::vector<std::int32_t>>& rows) {
    std::vector<std::int32_t> flat;
    for (const auto& row : rows) flat.insert(flat.end(), row.begin(), row.end());
    return flat;
}

struct NestedBlock {
    std::vector<double> cmd_ari, ll_nested, ll_flat;
    std::string err;
};

NestedBlock nested_block() {
    const int n_seeds = 10;
    NestedBlock b;
    b.cmd_ari.resize(n_seeds);
    b.ll_nested.resize(n_seeds);
    b.ll_flat.resize(n_seeds);
    std::vector<std::string> errs(n_seeds);

    std::vector<std::thread> pool;
    for (int i = 0; i < n_seeds; ++i)
        pool.emplace_back([&, i] {
            try {
                SimulationParams sim;
                sim.model = ModelKind::NCBC;
                sim.n_sessions = 100;
                sim.commands_per_session = 10;
                sim.words_per_command = 10;
                sim.vocab_size = 50;
                sim.k_true = 3;
                sim.h_true = 5;
                sim.eta_sim = 0.1;
                sim.tau_sim = 0.1;
                sim.seed = 2000 + i;
                SimulatedData data = generate(sim);

                Hyperparameters nested;
                nested.model = ModelKind::NCBC;
                nested.prior = PriorKind::Dirichlet;
                nested.k_max = 10;
                nested.h_max = 10;
                nested.gamma = {0.1};
                nested.tau = {0.1};
                nested.eta = {1.0};

                PosteriorSummary full = fit_model(data.corpus, nested, 8000 + i);
                b.cmd_ari[i] =
                    adjusted_rand_index(flatten(data.truth.s), flatten(full.point.s));

                auto [train, test] = split_sessions(data.corpus, 0.8, 900 + i);
                Hyperparameters hp_n = nested;
                hp_n.vocab_size = train.vocab_size();
                hp_n = validated(hp_n);
                PosteriorSummary fit_n = fit_model(train, nested, 8100 + i);
                b.ll_nested[i] = heldout_loglik_per_word(test, hp_n, fit_n);

                Hyperparameters flat = flat_dirichlet_hyper();
                Hyperparameters hp_f = flat;
                hp_f.vocab_size = train.vocab_size();
                hp_f = validated(hp_f);
                PosteriorSummary fit_f = fit_model(train, flat, 8200 + i);
                b.ll_flat[i] = heldout_loglik_per_word(test, hp_f, fit_f);
            } catch (const std::exception& ex) {
                errs[i] = ex.what();
            }
        });
    for (auto& th : pool) th.join();

    for (const auto& e : errs)
        if (!e.empty()) b.err += e + "; ";
    return b;
}

// ---------------------------------------------------------------------------
// criterion 8: module invariants, re-verified inline
// ---------------------------------------------------------------------------

Outcome criterion8_body();

Outcome criterion8() {
    try {
        return criterion8_body();
    } catch (const std::exception& ex) {
        Outcome o;
        o.pass = false;
        o.detail = std::string("exception: ") + ex.what();
        return o;
    }
}

Outcome criterion8_body() {
    std::vector<std::string> failures;
    auto check = [&](bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    };

    // tokenizer: documented URL and hex-payload commands, verbatim
    TokenizerConfig tok;
    check(tokenize_command("wget http://abc.def.ghi.jkl/Zerow.sh", tok) ==
              std::vector<std::string>{"wget", "http", "abc.def.ghi.jkl", "Zerow.sh"},
          "tokenizer URL example");
    check(tokenize_command("bin busybox echo -e x6b x61 x6d x69 dev dev .nippon", tok) ==
              std::vector<std::string>{"bin", "busybox", "echo", "-e", "HEX", "HEX", "HEX",
                                       "HEX", "dev", "dev", ".nippon"},
          "tokenizer hex example");

    // joint invariance under a global relabeling (symmetric concentrations)
    double max_swap = 0.0;
    {
        Rng rng(4810);
        for (int trial = 0; trial < 20; ++trial) {
            Corpus corpus = oracles::random_tiny_corpus(rng);
            Hyperparameters hp = oracles::random_hyper(rng, ModelKind::CBC,
                                                       PriorKind::Dirichlet,
                                                       corpus.vocab_size());
            LatentState st = oracles::random_state(rng, corpus, hp);
            LatentState swapped = st;
            for (auto& v : swapped.t) v = v == 0 ? 1 : v == 1 ? 0 : v;
            max_swap = std::max(max_swap, std::fabs(log_joint(corpus, st, hp) -
                                                    log_joint(corpus, swapped, hp)));
        }
        for (int trial = 0; trial < 20; ++trial) {
            Corpus corpus = oracles::random_tiny_corpus(rng);
            Hyperparameters hp = oracles::random_hyper(rng, ModelKind::NCBC,
                                                       PriorKind::Dirichlet,
                                                       corpus.vocab_size());
            LatentState st = oracles::random_state(rng, corpus, hp);
            LatentState swapped = st;
            for (auto& row : swapped.s)
                for (auto& v : row) v = v == 0 ? 1 : v == 1 ? 0 : v;
            max_swap = std::max(max_swap, std::fabs(log_joint(corpus, st, hp) -
                                                    log_joint(corpus, swapped, hp)));
        }
        check(max_swap < 1e-12, "label-permutation invariance of the joint");
    }

    // unbounded-prior partition marginal equals the sequential seating product
    double max_crp = 0.0;
    {
        Rng rng(515);
        for (double g : {0.3, 1.0, 2.7})
            for (int trial = 0; trial < 30; ++trial) {
                std::size_t n = 2 + rng.uniform_index(7);
                auto labels = oracles::random_canonical_labels(rng, n, 8);
                std::int32_t m =
                    1 + *std::max_element(labels.begin(), labels.end());
                double lp = 0.0;
                std::vector<std::int32_t> prefix;
                for (auto lab : labels) {
                    auto pred = crp_predictive(prefix, g);
                    lp += std::log(pred[static_cast<std::size_t>(lab)]);
                    prefix.push_back(lab);
                }
                Hyperparameters hp;
                hp.model = ModelKind::CBC;
                hp.prior = PriorKind::GEM;
                hp.vocab_size = 2;
                hp.gamma = {g};
                hp = validated(hp);
                CountStats c = CountStats::make(hp.model, hp.prior, 2, m, 0);
                for (auto lab : labels) ++c.T[static_cast<std::size_t>(lab)];
                max_crp = std::max(max_crp, std::fabs(log_marginal_t(c, hp) - lp));
            }
        check(max_crp < 1e-12, "CRP seating-product identity");
    }

    // incremental counts survive sweeps for every model/prior
    {
        Rng rng(909);
        bool ok = true;
        for (ModelKind m : {ModelKind::CBC, ModelKind::CBC_Secondary, ModelKind::NCBC,
                            ModelKind::NCBC_Secondary, ModelKind::PCNBC})
            for (PriorKind p : {PriorKind::Dirichlet, PriorKind::GEM}) {
                try {
                    Corpus corpus = oracles::random_tiny_corpus(rng);
                    Hyperparameters hp = oracles::random_hyper(rng, m, p, corpus.vocab_size());
                    GibbsSampler s(corpus, hp, oracles::random_state(rng, corpus, hp), 3);
                    for (int sweep = 0; sweep < 3; ++sweep) {
                        s.sweep();
                        s.verify_counts();
                    }
                } catch (const std::exception&) {
                    ok = false;
                }
            }
        check(ok, "count replay after sweeps");
    }

    // co-assignment similarity: symmetric, unit diagonal, within [0,1]
    {
        Rng rng(7117);
        std::vector<LatentState> samples(8);
        for (auto& st : samples) st.t = oracles::random_canonical_labels(rng, 7, 4);
        auto sim = posterior_similarity(samples);
        bool ok = true;
        for (std::size_t i = 0; i < sim.size(); ++i) {
            if (std::fabs(sim[i][i] - 1.0) > 1e-15) ok = false;
            for (std::size_t j = 0; j < sim.size(); ++j) {
                if (sim[i][j] != sim[j][i]) ok = false;
                if (sim[i][j] < 0.0 || sim[i][j] > 1.0) ok = false;
            }
        }
        check(ok, "posterior similarity symmetry/diagonal/range");
    }

    // Jensen-Shannon divergence bounds and extremes
    {
        Rng rng(31416);
        bool ok = true;
        const double ln2 = std::log(2.0);
        for (int trial = 0; trial < 50; ++trial) {
            auto draw = [&] {
                std::vector<double> p(6);
                double tot = 0.0;
                for (auto& x : p) tot += x = rng.uniform() + 1e-3;
                for (auto& x : p) x /= tot;
                return p;
            };
            auto p = draw(), q = draw();
            double d = jensen_shannon(p, q);
            if (d < 0.0 || d > ln2 + 1e-12) ok = false;
            if (std::fabs(jensen_shannon(p, p)) > 1e-13) ok = false;
        }
        std::vector<double> a{1.0, 0.0}, bq{0.0, 1.0};
        if (std::fabs(jensen_shannon(a, bq) - ln2) > 1e-12) ok = false;
        check(ok, "Jensen-Shannon bounds");
    }

    // Hungarian assignment equals exhaustive search
    {
        Rng rng(2718);
        bool ok = true;
        for (int trial = 0; trial < 30; ++trial) {
            std::vector<std::vector<double>> cost(4, std::vector<double>(4));
            for (auto& row : cost)
                for (auto& x : row) x = rng.uniform(-3.0, 3.0);
            auto got = hungarian(cost);
            auto best = oracles::brute_hungarian(cost);
            double cg = 0.0, cb = 0.0;
            std::vector<bool> used(4, false);
            for (int i = 0; i < 4; ++i) {
                cg += cost[i][static_cast<std::size_t>(got[i])];
                cb += cost[i][static_cast<std::size_t>(best[i])];
                if (got[i] < 0 || got[i] >= 4 || used[static_cast<std::size_t>(got[i])])
                    ok = false;
                else
                    used[static_cast<std::size_t>(got[i])] = true;
            }
            if (std::fabs(cg - cb) > 1e-10) ok = false;
        }
        check(ok, "Hungarian equals brute force");
    }

    // adjusted Rand: frozen contingency value and pair-counting oracle
    {
        std::vector<std::int32_t> a{0, 0, 0, 1, 1, 1}, bq{0, 0, 1, 1, 2, 2};
        bool ok = std::fabs(adjusted_rand_index(a, bq) - 8.0 / 33.0) < 1e-12;
        Rng rng(161803);
        for (int trial = 0; trial < 30; ++trial) {
            std::size_t n = 2 + rng.uniform_index(9);
            std::vector<std::int32_t> x(n), y(n);
            for (auto& v : x) v = static_cast<std::int32_t>(rng.uniform_index(4));
            for (auto& v : y) v = static_cast<std::int32_t>(rng.uniform_index(4));
            double got = adjusted_rand_index(x, y);
            if (std::fabs(got - oracles::pair_ari(x, y)) > 1e-12) ok = false;
            if (got > 1.0 + 1e-12 || got < -1.0 - 1e-12) ok = false;
        }
        check(ok, "adjusted Rand oracle agreement");
    }

    Outcome o;
    o.pass = failures.empty();
    if (o.pass) {
        o.detail = "tokenizer examples, joint label invariance (max dev " + num(max_swap, "%.1e") +
                   "), CRP identity (max dev " + num(max_crp, "%.1e") +
                   "), count replay, similarity, JSD, Hungarian, ARI all hold"
                   " (full set enforced by the unit suite)";
    } else {
        o.detail = "failed: ";
        for (const auto& f : failures) o.detail += f + "; ";
    }
    return o;
}

// ---------------------------------------------------------------------------
// criterion 9: CLI determinism and exit-code contract
// ---------------------------------------------------------------------------

int run_cmd(const std::string& cmd) {
    int rc = std::system(cmd.c_str());
    if (rc == -1) return -1;
    if (WIFEXITED(rc)) return WEXITSTATUS(rc);
    return -2;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome criterion9() {
    Outcome o;
    try {
        const std::string cli = SHELLTOPICS_CLI;
        const fs::path data = SHELLTOPICS_DATA_DIR;
        const fs::path base = fs::path("/tmp") /
                              ("shelltopics-accept-" + std::to_string(::getpid()));
        fs::create_directories(base);
        const std::string log = " >> " + (base / "cli.log").string() + " 2>&1";

        std::vector<std::string> problems;

        const std::string corpus = (base / "corpus.json").string();
        int rc_pre = run_cmd(cli + " preprocess --input " +
                             (data / "tiny_sessions.jsonl").string() + " --output " + corpus +
                             " --min-command-count 1 --max-command-fraction 1.0" + log);
        if (rc_pre != 0) problems.push_back("preprocess exit " + std::to_string(rc_pre));

        const std::string fit_flags =
            " fit --corpus " + corpus +
            " --model ncbc --prior dirichlet --k-max 4 --h-max 6 --gamma 0.5 --tau 0.5"
            " --eta 0.5 --iterations 300 --burn-in 100 --thin 5 --seed 31"
            " --split-merge-period 10";
        for (const char* run : {"runA", "runB"}) {
            int rc = run_cmd(cli + fit_flags + " --out " + (base / run).string() + log);
            if (rc != 0)
                problems.push_back(std::string(run) + " exit " + std::to_string(rc));
        }
        for (const char* f : {"trace_chain0.tsv", "samples_chain0.txt"}) {
            std::string a = slurp(base / "runA" / f), bq = slurp(base / "runB" / f);
            if (a.empty() || a != bq)
                problems.push_back(std::string("rerun differs: ") + f);
        }

        int rc_c = run_cmd(cli + " fit --corpus " + corpus + " --config " +
                           (base / "runA" / "run_config.json").string() + " --out " +
                           (base / "runC").string() + log);
        if (rc_c != 0) problems.push_back("config replay exit " + std::to_string(rc_c));
        for (const char* f : {"trace_chain0.tsv", "samples_chain0.txt"}) {
            std::string a = slurp(base / "runA" / f), cq = slurp(base / "runC" / f);
            if (a.empty() || a != cq)
                problems.push_back(std::string("config replay differs: ") + f);
        }

        int rc_cfg = run_cmd(cli + " fit --corpus " + corpus + " --out " +
                             (base / "badcfg").string() + " --model banana" + log);
        if (rc_cfg != 2) problems.push_back("config-error exit " + std::to_string(rc_cfg));

        int rc_io = run_cmd(cli + " fit --corpus " + (base / "missing.json").string() +
                            " --out " + (base / "badio").string() + " --model cbc" + log);
        if (rc_io != 3) problems.push_back("io-error exit " + std::to_string(rc_io));

        {
            std::ofstream bad(base / "degenerate.jsonl");
            bad << R"({"session_id": "x", "commands": [";;;"]})" << "\n";
        }
        int rc_model = run_cmd(cli + " preprocess --input " +
                               (base / "degenerate.jsonl").string() + " --output " +
                               (base / "degenerate.json").string() +
                               " --min-command-count 1 --max-command-fraction 1.0" + log);
        if (rc_model != 4) problems.push_back("model-error exit " + std::to_string(rc_model));

        o.pass = problems.empty();
        if (o.pass) {
            o.detail =
                "rerun and config-replay traces/samples byte-identical; exit codes "
                "0 (ok), 2 (config), 3 (io), 4 (model) observed";
        } else {
            o.detail = "";
            for (const auto& p : problems) o.detail += p + "; ";
        }
    } catch (const std::exception& ex) {
        o.pass = false;
        o.detail = std::string("exception: ") + ex.what();
    }
    return o;
}

} // namespace

int main() {
    int failures = 0;
    auto emit = [&](int id, const Outcome& o) {
        print_outcome(id, o);
        if (!o.pass) ++failures;
    };

    emit(1, criterion1());
    emit(2, criterion2());

    FlatBlock fb = flat_block();
    {
        Outcome o;
        if (!fb.err.empty()) {
            o.pass = false;
            o.detail = "exceptions: " + fb.err;
        } else {
            double m = mean(fb.ari_sharp);
            int k5 = static_cast<int>(std::count(fb.k_dir.begin(), fb.k_dir.end(), 5));
            o.pass = m >= 0.90 && k5 >= 7 && fb.sharp_secs < 600.0;
            o.detail = "mean session ARI = " + num(m, "%.3f") + " (need >= 0.90), modal K = 5 in " +
                       std::to_string(k5) + "/10 seeds (need >= 7), " +
                       num(fb.sharp_secs, "%.0f") + "s (limit 600s)";
        }
        emit(3, o);
    }

    NestedBlock nb = nested_block();
    {
        Outcome o;
        if (!nb.err.empty()) {
            o.pass = false;
            o.detail = "exceptions: " + nb.err;
        } else {
            double m = mean(nb.cmd_ari);
            o.pass = m >= 0.95;
            o.detail = "mean command ARI = " + num(m, "%.3f") + " (need >= 0.95)";
        }
        emit(4, o);
    }

    {
        Outcome o;
        if (!fb.err.empty()) {
            o.pass = false;
            o.detail = "exceptions: " + fb.err;
        } else {
            double sharp = mean(fb.ari_sharp), diffuse = mean(fb.ari_diffuse);
            o.pass = sharp > diffuse;
            o.detail = "mean ARI " + num(sharp, "%.3f") + " at concentrated emissions vs " +
                       num(diffuse, "%.3f") + " at near-uniform emissions";
        }
        emit(5, o);
    }

    {
        Outcome o;
        if (!fb.err.empty()) {
            o.pass = false;
            o.detail = "exceptions: " + fb.err;
        } else {
            int agree = 0;
            for (std::size_t i = 0; i < fb.k_dir.size(); ++i)
                if (fb.k_dir[i] == fb.k_gem[i]) ++agree;
            o.pass = agree >= 6;
            o.detail = "bounded and unbounded priors agree on modal K in " +
                       std::to_string(agree) + "/10 seeds (need >= 6)";
        }
        emit(6, o);
    }

    {
        Outcome o;
        if (!nb.err.empty()) {
            o.pass = false;
            o.detail = "exceptions: " + nb.err;
        } else {
            int wins = 0;
            for (std::size_t i = 0; i < nb.ll_nested.size(); ++i)
                if (nb.ll_nested[i] > nb.ll_flat[i]) ++wins;
            o.pass = wins >= 8;
            o.detail = "nested model wins held-out log-likelihood per word in " +
                       std::to_string(wins) + "/10 seeds (need >= 8); mean " +
                       num(mean(nb.ll_nested), "%.3f") + " vs " + num(mean(nb.ll_flat), "%.3f");
        }
        emit(7, o);
    }

    emit(8, criterion8());
    emit(9, criterion9());

    std::printf("acceptance: %d/9 criteria passed\n", 9 - failures);
    return failures;
}
