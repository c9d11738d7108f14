#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "shelltopics/errors.hpp"
#include "shelltopics/tokenize.hpp"

namespace shelltopics {

struct RawSession {
    std::string session_id;
    std::vector<std::string> commands;
};

struct TokenizedSession {
    std::string session_id;
    std::vector<TokenizedCommand> commands;
};

// Bijection token <-> contiguous id, with per-token command-document
// frequency (number of distinct commands the token occurred in).
class Vocabulary {
public:
    std::int32_t add(const std::string& token, std::int64_t command_freq = 0) {
        auto it = index_.find(token);
        if (it != index_.end()) return it->second;
        auto id = static_cast<std::int32_t>(tokens_.size());
        index_.emplace(token, id);
        tokens_.push_back(token);
        command_freq_.push_back(command_freq);
        return id;
    }

    std::int32_t lookup(const std::string& token) const {
        auto it = index_.find(token);
        return it == index_.end() ? -1 : it->second;
    }

    const std::string& token(std::int32_t id) const { return tokens_.at(id); }
    std::int64_t command_freq(std::int32_t id) const { return command_freq_.at(id); }
    std::int32_t size() const { return static_cast<std::int32_t>(tokens_.size()); }

    std::int64_t total_commands = 0; // corpus-wide command count at build time

private:
    std::unordered_map<std::string, std::int32_t> index_;
    std::vector<std::string> tokens_;
    std::vector<std::int64_t> command_freq_;
};

struct Command {
    std::vector<std::int32_t> words;       // vocabulary ids, in order
    std::vector<std::int32_t> parent_pos;  // 0-based positions opening a sub-command

    std::int32_t size() const { return static_cast<std::int32_t>(words.size()); }

    bool is_parent(std::int32_t i) const {
        return std::binary_search(parent_pos.begin(), parent_pos.end(), i);
    }

    // Word id of the parent governing position i (largest parent position <= i).
    std::int32_t parent_word(std::int32_t i) const {
        auto it = std::upper_bound(parent_pos.begin(), parent_pos.end(), i);
        return words[*std::prev(it)];
    }
};

struct Session {
    std::string session_id;
    std::vector<Command> commands;
};

struct Corpus {
    std::vector<Session> sessions;
    Vocabulary vocab;

    std::int32_t n_sessions() const { return static_cast<std::int32_t>(sessions.size()); }
    std::int32_t n_commands(std::int32_t d) const {
        return static_cast<std::int32_t>(sessions[d].commands.size());
    }
    std::int64_t total_commands() const {
        std::int64_t n = 0;
        for (const auto& s : sessions) n += static_cast<std::int64_t>(s.commands.size());
        return n;
    }
    std::int64_t total_words() const {
        std::int64_t n = 0;
        for (const auto& s : sessions)
            for (const auto& c : s.commands) n += c.size();
        return n;
    }
    std::int32_t vocab_size() const { return vocab.size(); }
};

// Structural invariants: parent positions sorted, in range, first word is a
// parent, ids within vocabulary.  Commands may be empty only when hand-built.
inline void validate_corpus(const Corpus& corpus) {
    for (const auto& sess : corpus.sessions) {
        for (const auto& cmd : sess.commands) {
            if (cmd.words.empty()) {
                if (!cmd.parent_pos.empty())
                    throw ModelError("empty command with parent positions");
                continue;
            }
            if (cmd.parent_pos.empty() || cmd.parent_pos.front() != 0)
                throw ModelError("first word of a command must open a sub-command");
            for (std::size_t a = 0; a < cmd.parent_pos.size(); ++a) {
                if (cmd.parent_pos[a] < 0 || cmd.parent_pos[a] >= cmd.size())
                    throw ModelError("parent position out of range");
                if (a > 0 && cmd.parent_pos[a] <= cmd.parent_pos[a - 1])
                    throw ModelError("parent positions must be strictly increasing");
            }
            for (std::int32_t w : cmd.words)
                if (w < 0 || w >= corpus.vocab.size())
                    throw ModelError("word id outside vocabulary");
        }
    }
}

inline TokenizedSession tokenize_session(const RawSession& raw, const TokenizerConfig& cfg) {
    TokenizedSession out;
    out.session_id = raw.session_id;
    for (const auto& cmd : raw.commands) {
        TokenizedCommand tc = segment_parents(cmd, cfg);
        if (!tc.tokens.empty()) out.commands.push_back(std::move(tc));
    }
    return out;
}

// Keeps a token iff it appears in at least min_command_count commands and in
// at most max_command_fraction of all commands (both bounds inclusive).
// Ids are assigned in order of first appearance.
inline Vocabulary build_vocabulary(const std::vector<TokenizedSession>& sessions,
                                   const TokenizerConfig& cfg) {
    std::unordered_map<std::string, std::int64_t> freq;
    std::vector<std::string> first_seen;
    std::int64_t total_commands = 0;
    for (const auto& sess : sessions) {
        for (const auto& cmd : sess.commands) {
            ++total_commands;
            std::unordered_map<std::string, bool> seen;
            for (const auto& tok : cmd.tokens) {
                auto [it, fresh] = freq.try_emplace(tok, 0);
                if (fresh) first_seen.push_back(tok);
                if (!seen.count(tok)) {
                    seen.emplace(tok, true);
                    ++it->second;
                }
            }
        }
    }
    double cap = cfg.max_command_fraction * static_cast<double>(total_commands);
    Vocabulary vocab;
    vocab.total_commands = total_commands;
    for (const auto& tok : first_seen) {
        std::int64_t f = freq[tok];
        if (f >= cfg.min_command_count && static_cast<double>(f) <= cap)
            vocab.add(tok, f);
    }
    if (vocab.size() == 0)
        throw ModelError("vocabulary is empty after frequency pruning");
    return vocab;
}

enum class OovPolicy { Drop, Extend };

struct EncodeReport {
    std::int64_t sessions_in = 0;
    std::int64_t sessions_kept = 0;
    std::int64_t commands_dropped = 0;
    std::int64_t words_dropped = 0;
    std::int64_t new_tokens = 0;
    std::vector<std::string> dropped_session_ids;
};

// Maps tokens to ids.  Out-of-vocabulary tokens are dropped or appended
// depending on policy; emptied commands and then emptied sessions are
// removed.  Parent structure is rebuilt from the surviving tokens: the first
// retained token of each sub-command segment heads it.
inline Corpus encode_corpus(const std::vector<TokenizedSession>& sessions,
                            Vocabulary vocab, OovPolicy policy,
                            EncodeReport* report = nullptr) {
    Corpus corpus;
    EncodeReport local;
    local.sessions_in = static_cast<std::int64_t>(sessions.size());
    for (const auto& sess : sessions) {
        Session out;
        out.session_id = sess.session_id;
        for (const auto& cmd : sess.commands) {
            Command enc;
            std::int32_t prev_segment = -1;
            for (std::size_t i = 0; i < cmd.tokens.size(); ++i) {
                std::int32_t id = vocab.lookup(cmd.tokens[i]);
                if (id < 0) {
                    if (policy == OovPolicy::Drop) {
                        ++local.words_dropped;
                        continue;
                    }
                    id = vocab.add(cmd.tokens[i], 0);
                    ++local.new_tokens;
                }
                if (cmd.segment[i] != prev_segment) {
                    enc.parent_pos.push_back(enc.size());
                    prev_segment = cmd.segment[i];
                }
                enc.words.push_back(id);
            }
            if (enc.words.empty())
                ++local.commands_dropped;
            else
                out.commands.push_back(std::move(enc));
        }
        if (out.commands.empty())
            local.dropped_session_ids.push_back(sess.session_id);
        else
            corpus.sessions.push_back(std::move(out));
    }
    local.sessions_kept = corpus.n_sessions();
    corpus.vocab = std::move(vocab);
    validate_corpus(corpus);
    if (report) *report = local;
    return corpus;
}

} // namespace shelltopics
