#pragma once

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "shelltopics/errors.hpp"
#include "shelltopics/sampler.hpp"

namespace shelltopics {

inline constexpr const char* trace_magic = "# shelltopics-trace v1";
inline constexpr const char* samples_magic = "# shelltopics-samples v1";

namespace detail {

// Shortest decimal round-trip representation keeps traces byte-stable across
// writers while preserving the exact double.
inline std::string format_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    double back = std::strtod(buf, nullptr);
    for (int prec = 1; prec < 17; ++prec) {
        char probe[64];
        std::snprintf(probe, sizeof(probe), "%.*g", prec, x);
        if (std::strtod(probe, nullptr) == back) return probe;
    }
    return buf;
}

} // namespace detail

inline void write_trace(std::ostream& os, const ChainOutput& out) {
    os << trace_magic << '\n';
    os << "# seed=" << out.seed << " rng=" << out.rng_kind << '\n';
    os << "iteration\tlog_joint\tk_nonempty\th_nonempty\tsm_accepts\n";
    for (const auto& row : out.trace)
        os << row.iteration << '\t' << detail::format_double(row.log_joint) << '\t'
           << row.k_nonempty << '\t' << row.h_nonempty << '\t' << row.sm_accepts << '\n';
}

inline void write_trace_file(const std::string& path, const ChainOutput& out) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open trace file for writing: " + path);
    write_trace(os, out);
    if (!os) throw IoError("failed writing trace file: " + path);
}

inline std::vector<TraceRow> read_trace(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != trace_magic)
        throw IoError("missing trace header line");
    std::vector<TraceRow> rows;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (line.rfind("iteration\t", 0) == 0) continue;
        TraceRow r{};
        std::istringstream ss(line);
        if (!(ss >> r.iteration >> r.log_joint >> r.k_nonempty >> r.h_nonempty >>
              r.sm_accepts))
            throw IoError("malformed trace row: " + line);
        rows.push_back(r);
    }
    return rows;
}

inline std::vector<TraceRow> read_trace_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open trace file: " + path);
    return read_trace(is);
}

inline void write_samples(std::ostream& os, const std::vector<LatentState>& samples) {
    os << samples_magic << '\n';
    os << "n_samples\t" << samples.size() << '\n';
    for (std::size_t n = 0; n < samples.size(); ++n) {
        const LatentState& st = samples[n];
        os << "sample\t" << n << '\n';
        os << "t";
        for (auto v : st.t) os << '\t' << v;
        os << '\n';
        for (std::size_t d = 0; d < st.s.size(); ++d) {
            os << "s\t" << d;
            for (auto v : st.s[d]) os << '\t' << v;
            os << '\n';
        }
        for (std::size_t d = 0; d < st.z.size(); ++d)
            for (std::size_t j = 0; j < st.z[d].size(); ++j) {
                os << "z\t" << d << '\t' << j << '\t';
                for (auto b : st.z[d][j]) os << (b ? '1' : '0');
                os << '\n';
            }
        if (!st.u.empty()) {
            os << "u";
            for (auto v : st.u) os << '\t' << v;
            os << '\n';
        }
    }
}

inline void write_samples_file(const std::string& path, const std::vector<LatentState>& samples) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open samples file for writing: " + path);
    write_samples(os, samples);
    if (!os) throw IoError("failed writing samples file: " + path);
}

inline std::vector<LatentState> read_samples(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != samples_magic)
        throw IoError("missing samples header line");
    if (!std::getline(is, line) || line.rfind("n_samples\t", 0) != 0)
        throw IoError("missing n_samples line");
    std::size_t n = std::stoull(line.substr(10));
    std::vector<LatentState> samples;
    samples.reserve(n);
    auto parse_ints = [](std::istringstream& ss) {
        std::vector<std::int32_t> vals;
        std::int32_t v;
        while (ss >> v) vals.push_back(v);
        return vals;
    };
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string tag;
        std::getline(ss, tag, '\t');
        if (tag == "sample") {
            samples.emplace_back();
        } else if (samples.empty()) {
            throw IoError("sample body before first sample marker");
        } else if (tag == "t") {
            samples.back().t = parse_ints(ss);
        } else if (tag == "s") {
            std::size_t d;
            ss >> d;
            LatentState& st = samples.back();
            if (st.s.size() <= d) st.s.resize(d + 1);
            st.s[d] = parse_ints(ss);
        } else if (tag == "z") {
            std::size_t d, j;
            std::string bits;
            ss >> d >> j >> bits;
            LatentState& st = samples.back();
            if (st.z.size() <= d) st.z.resize(d + 1);
            if (st.z[d].size() <= j) st.z[d].resize(j + 1);
            st.z[d][j].clear();
            for (char ch : bits) {
                if (ch != '0' && ch != '1') throw IoError("bad indicator bit in samples file");
                st.z[d][j].push_back(ch == '1' ? 1 : 0);
            }
        } else if (tag == "u") {
            samples.back().u = parse_ints(ss);
        } else {
            throw IoError("unknown samples line tag: " + tag);
        }
    }
    if (samples.size() != n) throw IoError("samples file truncated");
    return samples;
}

inline std::vector<LatentState> read_samples_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open samples file: " + path);
    return read_samples(is);
}

} // namespace shelltopics
