#include <catch_amalgamated.hpp>

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "shelltopics/chain_io.hpp"

using namespace shelltopics;

namespace {

std::string temp_path(const std::string& stem) {
    static int counter = 0;
    return "/tmp/shelltopics-io-" + std::to_string(::getpid()) + "-" +
           std::to_string(counter++) + "-" + stem;
}

struct FileGuard {
    std::string path;
    ~FileGuard() { std::remove(path.c_str()); }
};

ChainOutput tricky_trace() {
    ChainOutput out;
    out.seed = 42;
    out.trace = {
        {1, -12345.678901234567, 3, 2, 0},
        {2, -0.1, 1, 0, 1},
        {3, -1.0 / 3.0, 2, 5, 1},
        {4, -1e-300, 7, 7, 2},
        {5, -1.7976931348623157e308, 1, 1, 2},
        {6, 0.0, 1, 1, 3},
    };
    return out;
}

} // namespace

TEST_CASE("doubles are written with the shortest exact decimal form") {
    const double cases[] = {0.1,
                            1.0 / 3.0,
                            1e-300,
                            -1.7976931348623157e308,
                            123456789.123456789,
                            3.141592653589793,
                            std::ldexp(1.0, -52),
                            17.0,
                            -0.0,
                            std::numeric_limits<double>::denorm_min()};
    for (double x : cases) {
        std::string s = detail::format_double(x);
        REQUIRE(std::strtod(s.c_str(), nullptr) == x);
    }
    REQUIRE(detail::format_double(0.5) == "0.5");
    REQUIRE(detail::format_double(2.0) == "2");
    REQUIRE(detail::format_double(0.1) == "0.1");
}

TEST_CASE("trace rows survive a write/read round trip exactly") {
    ChainOutput out = tricky_trace();
    std::stringstream ss;
    write_trace(ss, out);
    auto rows = read_trace(ss);
    REQUIRE(rows.size() == out.trace.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        REQUIRE(rows[i].iteration == out.trace[i].iteration);
        REQUIRE(rows[i].log_joint == out.trace[i].log_joint);  // bit-exact
        REQUIRE(rows[i].k_nonempty == out.trace[i].k_nonempty);
        REQUIRE(rows[i].h_nonempty == out.trace[i].h_nonempty);
        REQUIRE(rows[i].sm_accepts == out.trace[i].sm_accepts);
    }

    // the same content through files, and writes are byte-stable
    std::stringstream again;
    write_trace(again, out);
    REQUIRE(ss.str() == again.str());

    FileGuard f{temp_path("trace.tsv")};
    write_trace_file(f.path, out);
    auto from_file = read_trace_file(f.path);
    REQUIRE(from_file.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        REQUIRE(from_file[i].log_joint == rows[i].log_joint);
}

TEST_CASE("trace reading tolerates comments and rejects damage") {
    std::stringstream ok;
    ok << trace_magic << "\n\n# a comment\niteration\tlog_joint\tk\th\tsm\n"
       << "7\t-1.5\t2\t3\t4\n";
    auto rows = read_trace(ok);
    REQUIRE(rows.size() == 1);
    REQUIRE(rows[0].iteration == 7);
    REQUIRE(rows[0].log_joint == -1.5);

    std::stringstream empty;
    REQUIRE_THROWS_AS(read_trace(empty), IoError);
    std::stringstream wrong("not a trace\n1\t2\t3\t4\t5\n");
    REQUIRE_THROWS_AS(read_trace(wrong), IoError);
    std::stringstream garbled;
    garbled << trace_magic << "\n1\tnot-a-number\t0\t0\t0\n";
    REQUIRE_THROWS_AS(read_trace(garbled), IoError);
    REQUIRE_THROWS_AS(read_trace_file("/nonexistent/trace.tsv"), IoError);
}

TEST_CASE("sample states of every shape survive a round trip") {
    std::vector<LatentState> samples;
    {
        LatentState flat;  // session labels only
        flat.t = {0, 2, 1, 0};
        samples.push_back(flat);

        LatentState nested;  // + command labels
        nested.t = {1, 0};
        nested.s = {{0, 2, 1}, {1}};
        samples.push_back(nested);

        LatentState secondary;  // + per-word indicators
        secondary.t = {0, 1};
        secondary.z = {{{1, 0, 1}}, {{0}, {1, 1}}};
        samples.push_back(secondary);

        LatentState nested_secondary;
        nested_secondary.t = {0};
        nested_secondary.s = {{1, 0}};
        nested_secondary.z = {{{0, 1}, {1}}};
        samples.push_back(nested_secondary);

        LatentState clustered;  // + per-vocab-word clusters
        clustered.t = {2, 2, 0};
        clustered.u = {0, 1, 1, 0, 2};
        samples.push_back(clustered);
    }

    std::stringstream ss;
    write_samples(ss, samples);
    auto back = read_samples(ss);
    REQUIRE(back.size() == samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        REQUIRE(back[i].t == samples[i].t);
        REQUIRE(back[i].s == samples[i].s);
        REQUIRE(back[i].z == samples[i].z);
        REQUIRE(back[i].u == samples[i].u);
    }

    FileGuard f{temp_path("samples.tsv")};
    write_samples_file(f.path, samples);
    auto from_file = read_samples_file(f.path);
    REQUIRE(from_file.size() == samples.size());
    REQUIRE(from_file[4].u == samples[4].u);
}

TEST_CASE("chain samples from a real run round trip through files") {
    Rng rng(404);
    Corpus corpus = oracles::random_tiny_corpus(rng);
    Hyperparameters hp = oracles::random_hyper(rng, ModelKind::NCBC_Secondary,
                                               PriorKind::GEM, corpus.vocab_size());
    LatentState init = oracles::random_state(rng, corpus, hp);
    SamplerConfig cfg;
    cfg.iterations = 20;
    cfg.burn_in = 5;
    cfg.seed = 12;
    ChainOutput out = run_chain(corpus, hp, init, cfg);
    REQUIRE(!out.samples.empty());

    FileGuard f{temp_path("chain-samples.tsv")};
    write_samples_file(f.path, out.samples);
    auto back = read_samples_file(f.path);
    REQUIRE(back.size() == out.samples.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        REQUIRE(back[i].t == out.samples[i].t);
        REQUIRE(back[i].s == out.samples[i].s);
        REQUIRE(back[i].z == out.samples[i].z);
    }
}

TEST_CASE("damaged sample files are rejected with an io error") {
    std::stringstream bad_magic("wrong\n");
    REQUIRE_THROWS_AS(read_samples(bad_magic), IoError);

    std::stringstream no_count;
    no_count << samples_magic << "\nsample\t0\n";
    REQUIRE_THROWS_AS(read_samples(no_count), IoError);

    std::stringstream truncated;
    truncated << samples_magic << "\nn_samples\t3\nsample\t0\nt\t1\t2\n";
    REQUIRE_THROWS_AS(read_samples(truncated), IoError);

    std::stringstream stray;
    stray << samples_magic << "\nn_samples\t0\nt\t1\n";
    REQUIRE_THROWS_AS(read_samples(stray), IoError);

    std::stringstream bad_bit;
    bad_bit << samples_magic << "\nn_samples\t1\nsample\t0\nz\t0\t0\t012\n";
    REQUIRE_THROWS_AS(read_samples(bad_bit), IoError);

    std::stringstream bad_tag;
    bad_tag << samples_magic << "\nn_samples\t1\nsample\t0\nq\t1\n";
    REQUIRE_THROWS_AS(read_samples(bad_tag), IoError);

    REQUIRE_THROWS_AS(read_samples_file("/nonexistent/samples.tsv"), IoError);
}
