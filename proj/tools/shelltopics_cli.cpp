// Command-line front end: preprocess honeypot session logs, fit nested topic
// models by collapsed Gibbs sampling, run simulation studies, and evaluate
// saved chains.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "shelltopics/chain_io.hpp"
#include "shelltopics/corpus_io.hpp"
#include "shelltopics/estimate.hpp"
#include "shelltopics/metrics.hpp"
#include "shelltopics/pipeline.hpp"
#include "shelltopics/simulate.hpp"
#include "shelltopics/spectral.hpp"

using namespace shelltopics;

namespace {

struct FitFlags {
    std::string model = "cbc";
    std::string prior = "dirichlet";
    std::int32_t k_max = 10;
    std::int32_t h_max = 10;
    std::vector<double> gamma{0.1}, tau{0.1}, eta{1.0}, chi{0.1}, alpha{0.9};
    double alpha0 = 0.1;
    std::int64_t iterations = 2000;
    std::int64_t burn_in = 200;
    std::int64_t thin = 5;
    std::uint64_t seed = 1;
    std::int64_t split_merge_period = 10;
    std::string scan_order = "systematic";
    std::int64_t check_every = 0;
    std::string init = "spectral";
    std::string z_init = "threshold";
    double z_threshold = 0.10;
    int kmeans_restarts = 10;
    std::uint64_t svd_seed = 0;
    int svd_rank = 0;
    std::int32_t k_init = 10, h_init = 10;
    int chains = 1;
    std::string config_path;
};

void add_fit_flags(CLI::App* cmd, FitFlags& f) {
    cmd->add_option("--config", f.config_path, "JSON config file (flags override it)");
    cmd->add_option("--model", f.model,
                    "cbc | cbc-secondary | ncbc | ncbc-secondary | pcnbc");
    cmd->add_option("--prior", f.prior, "dirichlet | gem");
    cmd->add_option("--k-max", f.k_max, "session topics (finite prior)");
    cmd->add_option("--h-max", f.h_max, "command topics / word clusters (finite prior)");
    cmd->add_option("--gamma", f.gamma, "session topic concentration")->expected(-1);
    cmd->add_option("--tau", f.tau, "command topic concentration")->expected(-1);
    cmd->add_option("--eta", f.eta, "word emission concentration")->expected(-1);
    cmd->add_option("--chi", f.chi, "word cluster concentration")->expected(-1);
    cmd->add_option("--alpha", f.alpha, "indicator prior (primary)")->expected(-1);
    cmd->add_option("--alpha0", f.alpha0, "indicator prior (secondary)");
    cmd->add_option("--iterations", f.iterations, "sweeps");
    cmd->add_option("--burn-in", f.burn_in, "discarded sweeps");
    cmd->add_option("--thin", f.thin, "keep every n-th sweep after burn-in");
    cmd->add_option("--seed", f.seed, "master RNG seed");
    cmd->add_option("--split-merge-period", f.split_merge_period,
                    "split-merge attempt period (0 disables)");
    cmd->add_option("--scan-order", f.scan_order, "systematic | random");
    cmd->add_option("--check-every", f.check_every, "count self-check period (0 disables)");
    cmd->add_option("--init", f.init, "spectral | random");
    cmd->add_option("--z-init", f.z_init, "threshold | bernoulli");
    cmd->add_option("--z-threshold", f.z_threshold, "indicator init frequency threshold");
    cmd->add_option("--kmeans-restarts", f.kmeans_restarts, "k-means restarts");
    cmd->add_option("--svd-seed", f.svd_seed, "init RNG seed (0: derive from --seed)");
    cmd->add_option("--svd-rank", f.svd_rank, "SVD rank (0: number of clusters)");
    cmd->add_option("--k-init", f.k_init, "initial session topics (unbounded prior)");
    cmd->add_option("--h-init", f.h_init, "initial command topics (unbounded prior)");
    cmd->add_option("--chains", f.chains, "independent chains");
}

FitConfig to_fit_config(const FitFlags& f, const std::vector<std::string>& set_flags) {
    FitConfig cfg;
    if (!f.config_path.empty()) cfg = load_fit_config(f.config_path);
    auto overridden = [&](const std::string& name) {
        return f.config_path.empty() ||
               std::find(set_flags.begin(), set_flags.end(), name) != set_flags.end();
    };
    if (overridden("--model")) cfg.hyper.model = parse_model(f.model);
    if (overridden("--prior")) cfg.hyper.prior = parse_prior(f.prior);
    if (overridden("--k-max")) cfg.hyper.k_max = f.k_max;
    if (overridden("--h-max")) cfg.hyper.h_max = f.h_max;
    if (overridden("--gamma")) cfg.hyper.gamma = f.gamma;
    if (overridden("--tau")) cfg.hyper.tau = f.tau;
    if (overridden("--eta")) cfg.hyper.eta = f.eta;
    if (overridden("--chi")) cfg.hyper.chi = f.chi;
    if (overridden("--alpha")) cfg.hyper.alpha = f.alpha;
    if (overridden("--alpha0")) cfg.hyper.alpha0 = f.alpha0;
    if (overridden("--iterations")) cfg.sampler.iterations = f.iterations;
    if (overridden("--burn-in")) cfg.sampler.burn_in = f.burn_in;
    if (overridden("--thin")) cfg.sampler.thin = f.thin;
    if (overridden("--seed")) cfg.sampler.seed = f.seed;
    if (overridden("--split-merge-period"))
        cfg.sampler.split_merge_period = f.split_merge_period;
    if (overridden("--check-every")) cfg.sampler.check_every = f.check_every;
    if (overridden("--scan-order")) {
        if (f.scan_order == "random")
            cfg.sampler.scan_order = ScanOrder::Random;
        else if (f.scan_order == "systematic")
            cfg.sampler.scan_order = ScanOrder::Systematic;
        else
            throw ConfigError("unknown scan order: " + f.scan_order);
    }
    if (overridden("--init")) cfg.init.method = parse_init_method(f.init);
    if (overridden("--z-init")) cfg.init.z_method = parse_indicator_init(f.z_init);
    if (overridden("--z-threshold")) cfg.init.z_threshold = f.z_threshold;
    if (overridden("--kmeans-restarts")) cfg.init.kmeans_restarts = f.kmeans_restarts;
    if (overridden("--svd-seed")) cfg.init.seed = f.svd_seed;
    if (overridden("--svd-rank")) cfg.init.svd_rank = f.svd_rank;
    if (overridden("--k-init")) cfg.init.k_init = f.k_init;
    if (overridden("--h-init")) cfg.init.h_init = f.h_init;
    if (overridden("--chains")) cfg.chains = f.chains;
    return cfg;
}

std::vector<std::string> collect_set_flags(const CLI::App* cmd) {
    std::vector<std::string> out;
    for (const auto* opt : cmd->get_options())
        if (opt->count() > 0 && !opt->get_name().empty()) out.push_back(opt->get_name());
    return out;
}

int cmd_preprocess(const std::string& input, const std::string& output,
                   const TokenizerConfig& tok, bool dedupe, const std::string& report_path) {
    std::vector<LineDiagnostic> diags;
    std::vector<RawSession> raw = load_sessions(input, &diags);
    std::size_t before_dedupe = raw.size();
    if (dedupe) raw = dedupe_sessions(raw);
    validate_tokenizer_config(tok);
    std::vector<TokenizedSession> tokenized;
    tokenized.reserve(raw.size());
    std::size_t dropped_empty = 0;
    for (const auto& rs : raw) {
        TokenizedSession ts = tokenize_session(rs, tok);
        if (ts.commands.empty()) {
            ++dropped_empty;
            continue;
        }
        tokenized.push_back(std::move(ts));
    }
    if (tokenized.empty()) throw ModelError("no sessions survive tokenization");
    Vocabulary vocab = build_vocabulary(tokenized, tok);
    EncodeReport report;
    Corpus corpus = encode_corpus(tokenized, vocab, OovPolicy::Drop, &report);
    corpus.vocab.total_commands = vocab.total_commands;
    write_corpus(corpus, tok, output);

    nlohmann::json j;
    j["input_sessions"] = before_dedupe;
    j["deduped_sessions"] = before_dedupe - raw.size();
    j["empty_after_tokenize"] = dropped_empty;
    j["malformed_lines"] = diags.size();
    j["sessions"] = corpus.n_sessions();
    j["commands"] = corpus.total_commands();
    j["words"] = corpus.total_words();
    j["vocab_size"] = corpus.vocab_size();
    j["oov_words_dropped"] = report.words_dropped;
    j["emptied_commands_dropped"] = report.commands_dropped;
    nlohmann::json dlist = nlohmann::json::array();
    for (const auto& d : diags)
        dlist.push_back({{"line", d.line_number}, {"message", d.message}});
    j["diagnostics"] = dlist;
    nlohmann::json dropped = nlohmann::json::array();
    for (const auto& sid : report.dropped_session_ids) dropped.push_back(sid);
    j["dropped_session_ids"] = dropped;
    if (report_path.empty()) {
        std::cout << j.dump(2) << '\n';
    } else {
        std::ofstream os(report_path, std::ios::binary);
        if (!os) throw IoError("cannot write report: " + report_path);
        os << j.dump(2) << '\n';
    }
    return exit_ok;
}

int cmd_fit(const std::string& corpus_path, const std::string& out_dir, const FitConfig& cfg) {
    TokenizerConfig tok;
    Corpus corpus = load_corpus(corpus_path, &tok);
    std::vector<ChainOutput> chains = fit_corpus(corpus, cfg);
    write_fit_outputs(out_dir, corpus, cfg, chains);
    std::cout << "fit complete: " << chains.size() << " chain(s), "
              << pool_samples(chains).size() << " samples -> " << out_dir << '\n';
    return exit_ok;
}

int cmd_simulate(const SimulationParams& base, const FitConfig& fit_base, int n_seeds,
                 const std::vector<double>& eta_grid, const std::string& out_path,
                 double heldout_fraction) {
    std::vector<double> etas = eta_grid.empty() ? std::vector<double>{base.eta_sim} : eta_grid;
    std::ofstream os(out_path, std::ios::binary);
    if (!os) throw IoError("cannot write results: " + out_path);
    os << "model\tprior\teta_sim\tseed\tari_sessions\tari_commands\tk_modal\th_modal"
          "\theldout_ll\n";
    for (double eta_sim : etas) {
        for (int s = 0; s < n_seeds; ++s) {
            SimulationParams p = base;
            p.eta_sim = eta_sim;
            p.seed = derive_stream_seed(base.seed, static_cast<std::uint64_t>(s));
            SimulatedData sim = generate(p);
            FitConfig fc = fit_base;
            fc.sampler.seed = derive_stream_seed(p.seed, 101);
            Corpus train = sim.corpus;
            Corpus held;
            std::vector<std::int32_t> truth_t = sim.truth.t;
            if (heldout_fraction > 0.0) {
                Rng rng(derive_stream_seed(p.seed, 17));
                auto order = rng.permutation(static_cast<int>(sim.corpus.sessions.size()));
                std::size_t n_train = order.size() -
                                      static_cast<std::size_t>(std::round(
                                          heldout_fraction *
                                          static_cast<double>(order.size())));
                n_train = std::min(std::max<std::size_t>(n_train, 1), order.size() - 1);
                train.sessions.clear();
                held.vocab = sim.corpus.vocab;
                truth_t.clear();
                for (std::size_t i = 0; i < order.size(); ++i) {
                    if (i < n_train) {
                        train.sessions.push_back(sim.corpus.sessions[order[i]]);
                        truth_t.push_back(sim.truth.t[order[i]]);
                    } else {
                        held.sessions.push_back(sim.corpus.sessions[order[i]]);
                    }
                }
            }
            std::vector<ChainOutput> chains = fit_corpus(train, fc);
            FitConfig sized = fc;
            sized.hyper.vocab_size = train.vocab_size();
            Hyperparameters hp = validated(sized.hyper);
            PosteriorSummary fit = summarize_chain(train, hp, pool_samples(chains));
            double ari_s = adjusted_rand_index(truth_t, fit.consensus);
            double ari_c = std::numeric_limits<double>::quiet_NaN();
            if (is_nested(p.model)) {
                std::vector<std::int32_t> ts, es;
                // truth.s rows follow the original session order; command ARI
                // is only well defined without a held-out split
                if (heldout_fraction == 0.0) {
                    for (const auto& row : sim.truth.s)
                        ts.insert(ts.end(), row.begin(), row.end());
                    for (const auto& row : fit.point.s)
                        es.insert(es.end(), row.begin(), row.end());
                    ari_c = adjusted_rand_index(ts, es);
                }
            }
            double hll = std::numeric_limits<double>::quiet_NaN();
            if (heldout_fraction > 0.0) hll = heldout_loglik_per_word(held, hp, fit);
            os << model_name(p.model) << '\t' << prior_name(fc.hyper.prior) << '\t'
               << eta_sim << '\t' << s << '\t' << detail::format_double(ari_s) << '\t'
               << detail::format_double(ari_c) << '\t' << fit.k_modal << '\t' << fit.h_modal
               << '\t' << detail::format_double(hll) << '\n';
        }
    }
    std::cout << "simulation results -> " << out_path << '\n';
    return exit_ok;
}

int cmd_evaluate(const std::string& corpus_path, const std::vector<std::string>& sample_files,
                 const FitConfig& cfg, const std::string& truth_path,
                 const std::string& heldout_jsonl) {
    TokenizerConfig tok;
    Corpus corpus = load_corpus(corpus_path, &tok);
    std::vector<LatentState> samples;
    for (const auto& f : sample_files) {
        auto part = read_samples_file(f);
        samples.insert(samples.end(), part.begin(), part.end());
    }
    if (samples.empty()) throw ConfigError("no samples given");
    FitConfig sized = cfg;
    sized.hyper.vocab_size = corpus.vocab_size();
    Hyperparameters hp = validated(sized.hyper);
    PosteriorSummary fit = summarize_chain(corpus, hp, samples);
    nlohmann::json j = summary_to_json(corpus, hp, fit, 15);
    if (!truth_path.empty()) {
        std::ifstream is(truth_path);
        if (!is) throw IoError("cannot open truth labels: " + truth_path);
        std::map<std::string, std::int32_t> by_id;
        std::string line;
        std::int64_t lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            if (line.empty()) continue;
            auto tab = line.find('\t');
            if (tab == std::string::npos)
                throw IoError("truth line " + std::to_string(lineno) +
                              " is not session_id<TAB>label");
            by_id[line.substr(0, tab)] =
                static_cast<std::int32_t>(std::stol(line.substr(tab + 1)));
        }
        std::vector<std::int32_t> truth, cons, point;
        for (std::int32_t d = 0; d < corpus.n_sessions(); ++d) {
            auto it = by_id.find(corpus.sessions[d].session_id);
            if (it == by_id.end()) continue;
            truth.push_back(it->second);
            cons.push_back(fit.consensus[d]);
            point.push_back(fit.point.t[d]);
        }
        if (truth.empty()) throw ConfigError("truth labels match no session ids");
        j["ari_consensus"] = adjusted_rand_index(truth, cons);
        j["ari_point"] = adjusted_rand_index(truth, point);
        j["truth_matched"] = truth.size();
    }
    if (!heldout_jsonl.empty()) {
        std::vector<LineDiagnostic> diags;
        std::vector<RawSession> raw = load_sessions(heldout_jsonl, &diags);
        std::vector<TokenizedSession> tokenized;
        for (const auto& rs : raw) {
            TokenizedSession ts = tokenize_session(rs, tok);
            if (!ts.commands.empty()) tokenized.push_back(std::move(ts));
        }
        EncodeReport report;
        Corpus held = encode_corpus(tokenized, corpus.vocab, OovPolicy::Drop, &report);
        j["heldout_ll_per_word"] = heldout_loglik_per_word(held, hp, fit);
        j["heldout_words_scored"] = held.total_words();
        j["heldout_words_dropped"] = report.words_dropped;
    }
    std::cout << j.dump(2) << '\n';
    return exit_ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Nested Bayesian topic models for command-line session clustering"};
    app.require_subcommand(1);

    // preprocess
    auto* pre = app.add_subcommand("preprocess", "tokenize JSONL sessions into a corpus file");
    std::string pre_in, pre_out, pre_report;
    TokenizerConfig tok;
    bool dedupe = false;
    pre->add_option("--input", pre_in, "JSONL session file")->required();
    pre->add_option("--output", pre_out, "corpus output path")->required();
    pre->add_option("--min-command-count", tok.min_command_count,
                    "keep words seen in at least this many commands");
    pre->add_option("--max-command-fraction", tok.max_command_fraction,
                    "drop words seen in more than this fraction of commands");
    pre->add_flag("--dedupe", dedupe, "drop exact duplicate sessions");
    pre->add_option("--report", pre_report, "write the preprocessing report here");

    // fit
    auto* fit = app.add_subcommand("fit", "run MCMC on a corpus file");
    std::string fit_corpus_path, fit_out;
    FitFlags fit_flags;
    fit->add_option("--corpus", fit_corpus_path, "corpus file from preprocess")->required();
    fit->add_option("--out", fit_out, "output directory")->required();
    add_fit_flags(fit, fit_flags);

    // simulate
    auto* sim = app.add_subcommand("simulate", "parameter-recovery simulation study");
    FitFlags sim_flags;
    SimulationParams sim_params;
    std::string sim_model = "cbc", sim_lengths = "fixed", sim_out = "results.tsv";
    int sim_seeds = 10;
    std::vector<double> sim_eta_grid;
    double sim_heldout = 0.0;
    sim->add_option("--out", sim_out, "results TSV path")->required();
    sim->add_option("--sim-model", sim_model, "generating model");
    sim->add_option("--sessions", sim_params.n_sessions, "simulated sessions");
    sim->add_option("--commands", sim_params.commands_per_session, "commands per session");
    sim->add_option("--words", sim_params.words_per_command, "words per command");
    sim->add_option("--length-mode", sim_lengths, "fixed | poisson");
    sim->add_option("--vocab", sim_params.vocab_size, "vocabulary size");
    sim->add_option("--k-true", sim_params.k_true, "true session topics");
    sim->add_option("--h-true", sim_params.h_true, "true command topics / clusters");
    sim->add_option("--eta-sim", sim_params.eta_sim, "emission concentration");
    sim->add_option("--eta-grid", sim_eta_grid, "emission concentration grid")->expected(-1);
    sim->add_option("--tau-sim", sim_params.tau_sim, "command topic concentration");
    sim->add_option("--theta-sim", sim_params.theta_sim, "primary-word probability");
    sim->add_option("--parent-prob", sim_params.parent_prob, "parent-word probability");
    sim->add_option("--sim-seed", sim_params.seed, "simulation master seed");
    sim->add_option("--seeds", sim_seeds, "number of replicate seeds");
    sim->add_option("--heldout-fraction", sim_heldout, "held-out session fraction");
    add_fit_flags(sim, sim_flags);

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "summarize saved samples");
    std::string ev_corpus, ev_truth, ev_heldout;
    std::vector<std::string> ev_samples;
    FitFlags ev_flags;
    ev->add_option("--corpus", ev_corpus, "corpus file")->required();
    ev->add_option("--samples", ev_samples, "samples file(s)")->required()->expected(-1);
    ev->add_option("--truth", ev_truth, "session_id<TAB>label file for ARI");
    ev->add_option("--heldout", ev_heldout, "JSONL sessions scored out of sample");
    add_fit_flags(ev, ev_flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_config_error;
    }

    try {
        if (pre->parsed()) return cmd_preprocess(pre_in, pre_out, tok, dedupe, pre_report);
        if (fit->parsed())
            return cmd_fit(fit_corpus_path, fit_out,
                           to_fit_config(fit_flags, collect_set_flags(fit)));
        if (sim->parsed()) {
            sim_params.model = parse_model(sim_model);
            if (sim_lengths == "poisson")
                sim_params.lengths = LengthMode::TruncatedPoisson;
            else if (sim_lengths != "fixed")
                throw ConfigError("unknown length mode: " + sim_lengths);
            FitConfig fc = to_fit_config(sim_flags, collect_set_flags(sim));
            if (std::find(collect_set_flags(sim).begin(), collect_set_flags(sim).end(),
                          "--model") == collect_set_flags(sim).end())
                fc.hyper.model = sim_params.model;  // fit the generating model by default
            return cmd_simulate(sim_params, fc, sim_seeds, sim_eta_grid, sim_out,
                                sim_heldout);
        }
        if (ev->parsed())
            return cmd_evaluate(ev_corpus, ev_samples,
                                to_fit_config(ev_flags, collect_set_flags(ev)), ev_truth,
                                ev_heldout);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config_error;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return exit_io_error;
    } catch (const ModelError& e) {
        std::cerr << "model error: " << e.what() << '\n';
        return exit_model_error;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_failure;
    }
    return exit_config_error;
}
