#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "shelltopics/corpus.hpp"
#include "shelltopics/errors.hpp"

namespace shelltopics {

struct LineDiagnostic {
    std::size_t line_number;
    std::string message;
};

// Newline-delimited JSON, one record per session:
//   {"session_id": "...", "commands": ["...", ...]}
// Malformed lines are skipped and reported with their line numbers.
inline std::vector<RawSession> load_sessions(const std::string& path,
                                             std::vector<LineDiagnostic>* diagnostics = nullptr) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open session file: " + path);
    std::vector<RawSession> sessions;
    std::string line;
    std::size_t lineno = 0;
    auto report = [&](const std::string& msg) {
        if (diagnostics) diagnostics->push_back({lineno, msg});
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json rec = nlohmann::json::parse(line, nullptr, false);
        if (rec.is_discarded()) {
            report("invalid JSON");
            continue;
        }
        if (!rec.is_object() || !rec.contains("session_id") || !rec.contains("commands") ||
            !rec["session_id"].is_string() || !rec["commands"].is_array()) {
            report("record must be {\"session_id\": str, \"commands\": [str...]}");
            continue;
        }
        RawSession s;
        s.session_id = rec["session_id"].get<std::string>();
        bool ok = true;
        for (const auto& c : rec["commands"]) {
            if (!c.is_string()) {
                report("non-string command entry");
                ok = false;
                break;
            }
            std::string cmd = c.get<std::string>();
            // Trim surrounding whitespace; blank commands are dropped.
            auto b = cmd.find_first_not_of(" \t\r\n");
            auto e = cmd.find_last_not_of(" \t\r\n");
            if (b == std::string::npos) continue;
            s.commands.push_back(cmd.substr(b, e - b + 1));
        }
        if (!ok) continue;
        if (s.commands.empty()) {
            report("session has no non-blank commands");
            continue;
        }
        sessions.push_back(std::move(s));
    }
    if (sessions.empty()) throw IoError("no usable sessions in " + path);
    return sessions;
}

// Drops sessions whose command sequences are exact duplicates of an earlier
// session (raw string comparison, order-sensitive).
inline std::vector<RawSession> dedupe_sessions(std::vector<RawSession> sessions) {
    std::vector<RawSession> out;
    std::unordered_map<std::string, bool> seen;
    for (auto& s : sessions) {
        std::string key;
        for (const auto& c : s.commands) {
            key += c;
            key += '\n';
        }
        if (seen.count(key)) continue;
        seen.emplace(std::move(key), true);
        out.push_back(std::move(s));
    }
    return out;
}

inline constexpr const char* corpus_magic = "shelltopics-corpus v1";

// Versioned text format: magic line, JSON metadata line (tokenizer settings
// travel with the vocabulary so held-out data can be encoded identically),
// vocabulary block, then one block per session.
inline void write_corpus(const Corpus& corpus, const TokenizerConfig& cfg,
                         const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write corpus file: " + path);
    nlohmann::json meta{
        {"vocab_size", corpus.vocab.size()},
        {"n_sessions", corpus.n_sessions()},
        {"total_commands_at_build", corpus.vocab.total_commands},
        {"tokenizer",
         {{"token_pattern", cfg.token_pattern},
          {"hex_token", cfg.hex_token},
          {"ghilimea_marker", cfg.ghilimea_marker},
          {"ghilimea_token", cfg.ghilimea_token},
          {"separators", cfg.separators},
          {"min_command_count", cfg.min_command_count},
          {"max_command_fraction", cfg.max_command_fraction}}}};
    out << corpus_magic << '\n' << meta.dump() << '\n';
    for (std::int32_t v = 0; v < corpus.vocab.size(); ++v) {
        const std::string& tok = corpus.vocab.token(v);
        if (tok.find_first_of("\t\n") != std::string::npos)
            throw IoError("token contains tab or newline; cannot serialize");
        out << tok << '\t' << corpus.vocab.command_freq(v) << '\n';
    }
    for (const auto& sess : corpus.sessions) {
        out << "S\t" << sess.session_id << '\t' << sess.commands.size() << '\n';
        for (const auto& cmd : sess.commands) {
            out << "C " << cmd.words.size() << ' ' << cmd.parent_pos.size();
            for (auto p : cmd.parent_pos) out << ' ' << p;
            out << " :";
            for (auto w : cmd.words) out << ' ' << w;
            out << '\n';
        }
    }
    if (!out) throw IoError("write failed: " + path);
}

inline Corpus load_corpus(const std::string& path, TokenizerConfig* cfg_out = nullptr) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open corpus file: " + path);
    std::string line;
    std::size_t lineno = 0;
    auto next_line = [&](const char* what) {
        if (!std::getline(in, line))
            throw IoError(std::string("corpus file truncated; expected ") + what);
        ++lineno;
    };
    auto fail = [&](const std::string& msg) -> void {
        throw IoError("corpus file " + path + " line " + std::to_string(lineno) + ": " + msg);
    };
    next_line("magic");
    if (line != corpus_magic) fail("unrecognized corpus format header");
    next_line("metadata");
    nlohmann::json meta = nlohmann::json::parse(line, nullptr, false);
    if (meta.is_discarded()) fail("invalid metadata JSON");
    Corpus corpus;
    std::int64_t vocab_size = meta.at("vocab_size").get<std::int64_t>();
    std::int64_t n_sessions = meta.at("n_sessions").get<std::int64_t>();
    corpus.vocab.total_commands = meta.value("total_commands_at_build", std::int64_t{0});
    if (cfg_out && meta.contains("tokenizer")) {
        const auto& t = meta["tokenizer"];
        cfg_out->token_pattern = t.value("token_pattern", cfg_out->token_pattern);
        cfg_out->hex_token = t.value("hex_token", cfg_out->hex_token);
        cfg_out->ghilimea_marker = t.value("ghilimea_marker", cfg_out->ghilimea_marker);
        cfg_out->ghilimea_token = t.value("ghilimea_token", cfg_out->ghilimea_token);
        cfg_out->separators = t.value("separators", cfg_out->separators);
        cfg_out->min_command_count = t.value("min_command_count", cfg_out->min_command_count);
        cfg_out->max_command_fraction =
            t.value("max_command_fraction", cfg_out->max_command_fraction);
    }
    for (std::int64_t v = 0; v < vocab_size; ++v) {
        next_line("vocabulary entry");
        auto tab = line.find('\t');
        if (tab == std::string::npos) fail("vocabulary line missing tab");
        corpus.vocab.add(line.substr(0, tab), std::stoll(line.substr(tab + 1)));
    }
    for (std::int64_t d = 0; d < n_sessions; ++d) {
        next_line("session header");
        std::istringstream hs(line);
        std::string tag, sid;
        std::int64_t n_cmds = -1;
        if (!std::getline(hs, tag, '\t') || tag != "S") fail("expected session header");
        if (!std::getline(hs, sid, '\t')) fail("session header missing id");
        hs >> n_cmds;
        if (n_cmds < 0) fail("session header missing command count");
        Session sess;
        sess.session_id = sid;
        for (std::int64_t j = 0; j < n_cmds; ++j) {
            next_line("command line");
            std::istringstream cs(line);
            std::string ctag, colon;
            std::int64_t m = -1, a = -1;
            cs >> ctag >> m >> a;
            if (ctag != "C" || m < 0 || a < 0) fail("malformed command line");
            Command cmd;
            cmd.parent_pos.resize(a);
            for (auto& p : cmd.parent_pos)
                if (!(cs >> p)) fail("malformed parent positions");
            cs >> colon;
            if (colon != ":") fail("missing ':' delimiter");
            cmd.words.resize(m);
            for (auto& w : cmd.words)
                if (!(cs >> w)) fail("malformed word ids");
            sess.commands.push_back(std::move(cmd));
        }
        corpus.sessions.push_back(std::move(sess));
    }
    validate_corpus(corpus);
    return corpus;
}

} // namespace shelltopics
