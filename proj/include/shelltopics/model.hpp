#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "shelltopics/errors.hpp"

namespace shelltopics {

enum class ModelKind { CBC, CBC_Secondary, NCBC, NCBC_Secondary, PCNBC };
enum class PriorKind { Dirichlet, GEM };

inline bool has_secondary(ModelKind m) {
    return m == ModelKind::CBC_Secondary || m == ModelKind::NCBC_Secondary;
}
// Models with a per-command topic layer between sessions and words.
inline bool is_nested(ModelKind m) {
    return m == ModelKind::NCBC || m == ModelKind::NCBC_Secondary;
}
inline bool has_word_clusters(ModelKind m) { return m == ModelKind::PCNBC; }

inline std::string model_name(ModelKind m) {
    switch (m) {
        case ModelKind::CBC: return "cbc";
        case ModelKind::CBC_Secondary: return "cbc-secondary";
        case ModelKind::NCBC: return "ncbc";
        case ModelKind::NCBC_Secondary: return "ncbc-secondary";
        case ModelKind::PCNBC: return "pcnbc";
    }
    return "?";
}

inline ModelKind parse_model(const std::string& name) {
    if (name == "cbc") return ModelKind::CBC;
    if (name == "cbc-secondary") return ModelKind::CBC_Secondary;
    if (name == "ncbc") return ModelKind::NCBC;
    if (name == "ncbc-secondary") return ModelKind::NCBC_Secondary;
    if (name == "pcnbc") return ModelKind::PCNBC;
    throw ConfigError("unknown model: " + name);
}

inline std::string prior_name(PriorKind p) {
    return p == PriorKind::Dirichlet ? "dirichlet" : "gem";
}

inline PriorKind parse_prior(const std::string& name) {
    if (name == "dirichlet") return PriorKind::Dirichlet;
    if (name == "gem") return PriorKind::GEM;
    throw ConfigError("unknown prior: " + name);
}

// Concentration parameters.  Dirichlet mode carries full vectors (a size-1
// vector is expanded symmetrically during validation); GEM mode carries
// scalars held as size-1 vectors.
struct Hyperparameters {
    ModelKind model = ModelKind::CBC;
    PriorKind prior = PriorKind::Dirichlet;
    std::int32_t k_max = 0;  // session-topic slots (Dirichlet mode)
    std::int32_t h_max = 0;  // command-topic / word-cluster slots (Dirichlet mode)
    std::int32_t vocab_size = 0;

    std::vector<double> gamma{0.1};  // session topics
    std::vector<double> tau{0.1};    // command topics (nested) / parent words (pcnbc)
    std::vector<double> eta{1.0};    // word emissions
    std::vector<double> chi{0.1};    // word-cluster weights (pcnbc)
    std::vector<double> alpha{0.9};  // per-topic primary-word weight
    double alpha0 = 0.1;

    double gamma_sum = 0.0, tau_sum = 0.0, eta_sum = 0.0, chi_sum = 0.0;

    bool dirichlet() const { return prior == PriorKind::Dirichlet; }

    // GEM-mode scalar accessors.
    double gamma_scalar() const { return gamma[0]; }
    double tau_scalar() const { return tau[0]; }
    double eta_scalar() const { return eta[0]; }
    double chi_scalar() const { return chi[0]; }

    double alpha_at(std::int32_t h) const {
        return alpha.size() == 1 ? alpha[0] : alpha[static_cast<std::size_t>(h)];
    }

    // Slots along the dimension that keys word-emission rows and the
    // secondary indicator tables: session topics for flat models, command
    // topics for nested ones.
    std::int32_t word_topic_slots() const {
        return is_nested(model) ? h_max : k_max;
    }
};

namespace detail {

inline void expand_symmetric(std::vector<double>& v, std::int32_t n, const char* name) {
    if (n <= 0) throw ConfigError(std::string(name) + ": dimension must be positive");
    if (v.size() == 1) v.assign(static_cast<std::size_t>(n), v[0]);
    if (static_cast<std::int32_t>(v.size()) != n)
        throw ConfigError(std::string(name) + ": expected length " + std::to_string(n) +
                          ", got " + std::to_string(v.size()));
    for (double x : v)
        if (!(x > 0.0)) throw ConfigError(std::string(name) + ": entries must be positive");
}

inline void require_scalar(const std::vector<double>& v, const char* name) {
    if (v.size() != 1 || !(v[0] > 0.0))
        throw ConfigError(std::string(name) + ": GEM prior takes a single positive scalar");
}

} // namespace detail

// Expands symmetric scalars, checks dimensions and positivity, caches sums.
inline Hyperparameters validated(Hyperparameters hp) {
    if (hp.vocab_size <= 0) throw ConfigError("vocab_size must be positive");
    if (!(hp.alpha0 > 0.0)) throw ConfigError("alpha0 must be positive");
    if (hp.dirichlet()) {
        if (hp.k_max <= 0) throw ConfigError("k_max must be positive");
        detail::expand_symmetric(hp.gamma, hp.k_max, "gamma");
        if (is_nested(hp.model) || has_word_clusters(hp.model)) {
            if (hp.h_max <= 0) throw ConfigError("h_max must be positive");
        } else {
            hp.h_max = 0;
        }
        if (is_nested(hp.model)) detail::expand_symmetric(hp.tau, hp.h_max, "tau");
        if (has_word_clusters(hp.model)) {
            detail::expand_symmetric(hp.tau, hp.vocab_size, "tau");
            detail::expand_symmetric(hp.chi, hp.h_max, "chi");
        }
        detail::expand_symmetric(hp.eta, hp.vocab_size, "eta");
        if (has_secondary(hp.model))
            detail::expand_symmetric(hp.alpha, hp.word_topic_slots(), "alpha");
    } else {
        detail::require_scalar(hp.gamma, "gamma");
        detail::require_scalar(hp.tau, "tau");
        detail::require_scalar(hp.eta, "eta");
        detail::require_scalar(hp.chi, "chi");
        detail::require_scalar(hp.alpha, "alpha");
        hp.k_max = 0;
        hp.h_max = 0;
    }
    auto sum = [](const std::vector<double>& v) {
        return std::accumulate(v.begin(), v.end(), 0.0);
    };
    hp.gamma_sum = sum(hp.gamma);
    hp.tau_sum = sum(hp.tau);
    hp.eta_sum = sum(hp.eta);
    hp.chi_sum = sum(hp.chi);
    return hp;
}

} // namespace shelltopics
