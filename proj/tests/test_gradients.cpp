#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <chrono>
#include <set>

#include "doctest.h"
#include "stnet/gradsuite.hpp"

using namespace stnet;

TEST_CASE("every component's analytic gradient matches finite differences") {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<GradSuiteEntry> entries = run_gradient_suite();
    const auto t1 = std::chrono::steady_clock::now();
    const double seconds = std::chrono::duration<double>(t1 - t0).count();

    REQUIRE(entries.size() >= 20);
    for (const GradSuiteEntry& e : entries) {
        INFO(e.name, ": max_rel_err=", e.max_rel_err, " compared=", e.compared);
        CHECK(e.pass);
        CHECK(e.max_rel_err <= 1e-4);
        CHECK(e.compared > 0);
    }

    // the suite covers each family of layers used by the five networks
    std::set<std::string> names;
    for (const GradSuiteEntry& e : entries) names.insert(e.name);
    for (const char* required :
         {"dense", "conv2d_valid", "conv3d_valid", "maxpool2d", "maxpool3d", "dropout_fixed_mask",
          "lstm_step", "bilstm_last", "convlstm_step", "convlstm_last", "scaled_dot_attention",
          "multi_head_attention", "layer_norm", "encoder_block", "mean_time", "softmax",
          "time_distributed_dense", "positional_encoding", "sequential_mlp"}) {
        INFO("missing suite entry: ", required);
        CHECK(names.count(required) == 1);
    }

    CHECK(seconds < 300.0);
}

TEST_CASE("checks run in double precision with three seeds per component") {
    // spot check: rerunning the suite is deterministic
    std::vector<GradSuiteEntry> a = run_gradient_suite();
    std::vector<GradSuiteEntry> b = run_gradient_suite();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].name == b[i].name);
        CHECK(a[i].max_rel_err == b[i].max_rel_err);
        CHECK(a[i].compared == b[i].compared);
    }
}
