#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "shelltopics/chain_io.hpp"
#include "shelltopics/corpus_io.hpp"
#include "shelltopics/estimate.hpp"
#include "shelltopics/sampler.hpp"
#include "shelltopics/simulate.hpp"
#include "shelltopics/spectral.hpp"

namespace shelltopics {

struct FitConfig {
    Hyperparameters hyper;   // validated() is applied by the runner
    SamplerConfig sampler;
    InitConfig init;
    int chains = 1;
};

namespace detail {

inline std::vector<double> json_conc(const nlohmann::json& j, const char* key,
                                     std::vector<double> fallback) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (v.is_number()) return {v.get<double>()};
    if (v.is_array()) {
        std::vector<double> out;
        for (const auto& e : v) out.push_back(e.get<double>());
        return out;
    }
    throw ConfigError(std::string("config field must be a number or array: ") + key);
}

inline nlohmann::json conc_json(const std::vector<double>& v) {
    if (v.size() == 1) return v[0];
    return nlohmann::json(v);
}

} // namespace detail

inline nlohmann::json fit_config_to_json(const FitConfig& cfg) {
    nlohmann::json j;
    j["model"] = model_name(cfg.hyper.model);
    j["prior"] = prior_name(cfg.hyper.prior);
    j["k_max"] = cfg.hyper.k_max;
    j["h_max"] = cfg.hyper.h_max;
    j["gamma"] = detail::conc_json(cfg.hyper.gamma);
    j["tau"] = detail::conc_json(cfg.hyper.tau);
    j["eta"] = detail::conc_json(cfg.hyper.eta);
    j["chi"] = detail::conc_json(cfg.hyper.chi);
    j["alpha"] = detail::conc_json(cfg.hyper.alpha);
    j["alpha0"] = cfg.hyper.alpha0;
    j["sampler"] = {{"iterations", cfg.sampler.iterations},
                    {"burn_in", cfg.sampler.burn_in},
                    {"thin", cfg.sampler.thin},
                    {"seed", cfg.sampler.seed},
                    {"split_merge_period", cfg.sampler.split_merge_period},
                    {"scan_order",
                     cfg.sampler.scan_order == ScanOrder::Random ? "random" : "systematic"},
                    {"check_every", cfg.sampler.check_every}};
    j["init"] = {{"method", cfg.init.method == InitMethod::Random ? "random" : "spectral"},
                 {"z_method",
                  cfg.init.z_method == IndicatorInit::Bernoulli ? "bernoulli" : "threshold"},
                 {"z_threshold", cfg.init.z_threshold},
                 {"kmeans_restarts", cfg.init.kmeans_restarts},
                 {"kmeans_max_iter", cfg.init.kmeans_max_iter},
                 {"svd_rank", cfg.init.svd_rank},
                 {"seed", cfg.init.seed},
                 {"k_init", cfg.init.k_init},
                 {"h_init", cfg.init.h_init}};
    j["chains"] = cfg.chains;
    return j;
}

inline FitConfig fit_config_from_json(const nlohmann::json& j) {
    FitConfig cfg;
    try {
        cfg.hyper.model = parse_model(j.at("model").get<std::string>());
        cfg.hyper.prior = parse_prior(j.at("prior").get<std::string>());
        cfg.hyper.k_max = j.value("k_max", cfg.hyper.k_max);
        cfg.hyper.h_max = j.value("h_max", cfg.hyper.h_max);
        cfg.hyper.gamma = detail::json_conc(j, "gamma", cfg.hyper.gamma);
        cfg.hyper.tau = detail::json_conc(j, "tau", cfg.hyper.tau);
        cfg.hyper.eta = detail::json_conc(j, "eta", cfg.hyper.eta);
        cfg.hyper.chi = detail::json_conc(j, "chi", cfg.hyper.chi);
        cfg.hyper.alpha = detail::json_conc(j, "alpha", cfg.hyper.alpha);
        cfg.hyper.alpha0 = j.value("alpha0", cfg.hyper.alpha0);
        if (j.contains("sampler")) {
            const auto& s = j.at("sampler");
            cfg.sampler.iterations = s.value("iterations", cfg.sampler.iterations);
            cfg.sampler.burn_in = s.value("burn_in", cfg.sampler.burn_in);
            cfg.sampler.thin = s.value("thin", cfg.sampler.thin);
            cfg.sampler.seed = s.value("seed", cfg.sampler.seed);
            cfg.sampler.split_merge_period =
                s.value("split_merge_period", cfg.sampler.split_merge_period);
            cfg.sampler.check_every = s.value("check_every", cfg.sampler.check_every);
            std::string order = s.value("scan_order", std::string("systematic"));
            if (order == "random")
                cfg.sampler.scan_order = ScanOrder::Random;
            else if (order == "systematic")
                cfg.sampler.scan_order = ScanOrder::Systematic;
            else
                throw ConfigError("unknown scan_order: " + order);
        }
        if (j.contains("init")) {
            const auto& s = j.at("init");
            cfg.init.method = parse_init_method(s.value("method", std::string("spectral")));
            cfg.init.z_method =
                parse_indicator_init(s.value("z_method", std::string("threshold")));
            cfg.init.z_threshold = s.value("z_threshold", cfg.init.z_threshold);
            cfg.init.kmeans_restarts = s.value("kmeans_restarts", cfg.init.kmeans_restarts);
            cfg.init.kmeans_max_iter = s.value("kmeans_max_iter", cfg.init.kmeans_max_iter);
            cfg.init.svd_rank = s.value("svd_rank", cfg.init.svd_rank);
            cfg.init.seed = s.value("seed", cfg.init.seed);
            cfg.init.k_init = s.value("k_init", cfg.init.k_init);
            cfg.init.h_init = s.value("h_init", cfg.init.h_init);
        }
        cfg.chains = j.value("chains", cfg.chains);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad fit config: ") + e.what());
    }
    if (cfg.chains < 1) throw ConfigError("chains must be at least 1");
    return cfg;
}

inline FitConfig load_fit_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file: " + path);
    nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path);
    return fit_config_from_json(j);
}

// Runs `chains` independent chains with per-chain seeds derived from the
// master seed; chain outputs are deterministic regardless of thread timing.
inline std::vector<ChainOutput> fit_corpus(const Corpus& corpus, const FitConfig& cfg_in) {
    FitConfig cfg = cfg_in;
    cfg.hyper.vocab_size = corpus.vocab_size();
    Hyperparameters hp = validated(cfg.hyper);
    std::vector<ChainOutput> outs(static_cast<std::size_t>(cfg.chains));
    std::vector<std::string> errors(static_cast<std::size_t>(cfg.chains));
    auto run_one = [&](int c) {
        try {
            SamplerConfig sc = cfg.sampler;
            sc.seed = derive_stream_seed(cfg.sampler.seed, static_cast<std::uint64_t>(2 * c));
            InitConfig ic = cfg.init;
            ic.seed = derive_stream_seed(
                cfg.init.seed != 0 ? cfg.init.seed : cfg.sampler.seed,
                static_cast<std::uint64_t>(2 * c + 1));
            LatentState init = make_initial_state(corpus, hp, ic);
            outs[static_cast<std::size_t>(c)] = run_chain(corpus, hp, std::move(init), sc);
        } catch (const std::exception& e) {
            errors[static_cast<std::size_t>(c)] = e.what();
        }
    };
    if (cfg.chains == 1) {
        run_one(0);
    } else {
        std::vector<std::thread> threads;
        threads.reserve(static_cast<std::size_t>(cfg.chains));
        for (int c = 0; c < cfg.chains; ++c) threads.emplace_back(run_one, c);
        for (auto& t : threads) t.join();
    }
    for (const auto& e : errors)
        if (!e.empty()) throw ModelError("chain failed: " + e);
    return outs;
}

inline std::vector<LatentState> pool_samples(const std::vector<ChainOutput>& chains) {
    std::vector<LatentState> pooled;
    for (const auto& c : chains)
        pooled.insert(pooled.end(), c.samples.begin(), c.samples.end());
    return pooled;
}

inline nlohmann::json summary_to_json(const Corpus& corpus, const Hyperparameters& hp,
                                      const PosteriorSummary& fit, std::size_t n_top_words) {
    nlohmann::json j;
    j["model"] = model_name(hp.model);
    j["prior"] = prior_name(hp.prior);
    j["n_sessions"] = corpus.n_sessions();
    j["vocab_size"] = corpus.vocab_size();
    j["n_samples"] = fit.n_samples;
    j["k_modal"] = fit.k_modal;
    j["h_modal"] = fit.h_modal;
    nlohmann::json assign = nlohmann::json::array();
    for (std::int32_t d = 0; d < corpus.n_sessions(); ++d)
        assign.push_back({{"session_id", corpus.sessions[d].session_id},
                          {"cluster", fit.consensus[d]},
                          {"point_topic", fit.point.t[d]}});
    j["sessions"] = assign;
    j["lambda"] = fit.lambda_hat;
    if (!fit.theta_hat.empty()) j["theta"] = fit.theta_hat;
    if (!fit.upsilon_hat.empty()) j["upsilon"] = fit.upsilon_hat;
    auto words_json = [&](const std::vector<std::vector<double>>& rows) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& row : rows) {
            nlohmann::json one = nlohmann::json::array();
            for (const auto& rw : top_words(row, corpus.vocab, n_top_words))
                one.push_back({{"token", corpus.vocab.token(rw.word)}, {"p", rw.score}});
            arr.push_back(one);
        }
        return arr;
    };
    if (!fit.phi_hat.empty()) j["top_words"] = words_json(fit.phi_hat);
    if (!fit.phi_parent_hat.empty()) j["top_parent_words"] = words_json(fit.phi_parent_hat);
    if (!fit.phi_child_hat.empty()) j["top_child_words"] = words_json(fit.phi_child_hat);
    return j;
}

// Writes per-chain traces and samples plus the exact config for reruns.
inline void write_fit_outputs(const std::string& dir, const Corpus& corpus,
                              const FitConfig& cfg, const std::vector<ChainOutput>& chains) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory: " + dir);
    for (std::size_t c = 0; c < chains.size(); ++c) {
        write_trace_file(dir + "/trace_chain" + std::to_string(c) + ".tsv", chains[c]);
        write_samples_file(dir + "/samples_chain" + std::to_string(c) + ".txt",
                           chains[c].samples);
    }
    std::ofstream cfg_os(dir + "/run_config.json", std::ios::binary);
    if (!cfg_os) throw IoError("cannot write run config");
    cfg_os << fit_config_to_json(cfg).dump(2) << '\n';

    FitConfig sized = cfg;
    sized.hyper.vocab_size = corpus.vocab_size();
    Hyperparameters hp = validated(sized.hyper);
    PosteriorSummary fit = summarize_chain(corpus, hp, pool_samples(chains));
    std::ofstream sum_os(dir + "/summary.json", std::ios::binary);
    if (!sum_os) throw IoError("cannot write summary");
    sum_os << summary_to_json(corpus, hp, fit, 15).dump(2) << '\n';

    std::ofstream sim_os(dir + "/similarity.tsv", std::ios::binary);
    if (!sim_os) throw IoError("cannot write similarity matrix");
    for (const auto& row : fit.similarity) {
        for (std::size_t i = 0; i < row.size(); ++i)
            sim_os << (i ? "\t" : "") << detail::format_double(row[i]);
        sim_os << '\n';
    }
}

} // namespace shelltopics
