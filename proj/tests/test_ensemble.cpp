#include "fishmerge/ensemble.hpp"

#include "fishmerge/rng.hpp"
#include "fishmerge/train.hpp"

#include <doctest.h>

#include <cmath>

using namespace fishmerge;

TEST_SUITE("ensemble") {

TEST_CASE("opposite deterministic models average to a coin flip") {
    ModelSpec spec;
    spec.input_dim = 1;
    spec.num_classes = 2;
    ParameterSet a;
    a.entries = zero_params_like(spec);
    a.lineage_id = "lin";
    a.entries.at("head.b").data[0] = 1000.0;  // p = (1, 0)
    ParameterSet b;
    b.entries = zero_params_like(spec);
    b.lineage_id = "lin";
    b.entries.at("head.b").data[1] = 1000.0;  // p = (0, 1)

    const std::vector<EnsembleMember> members = {{spec, a}, {spec, b}};
    const Vector x = (Vector(1) << 0.3).finished();
    const auto dist = predict_output_ensemble(members, x);
    CHECK(dist.log_probs[0] == doctest::Approx(std::log(0.5)).epsilon(1e-15));
    CHECK(dist.log_probs[1] == doctest::Approx(std::log(0.5)).epsilon(1e-15));
}

TEST_CASE("identical members leave the prediction unchanged") {
    ModelSpec spec;
    spec.input_dim = 2;
    spec.hidden = {{4, Activation::Tanh}};
    spec.num_classes = 3;
    const ParameterSet params = init_params(spec, 17);
    Rng rng(18);
    for (int m = 1; m <= 4; ++m) {
        const std::vector<EnsembleMember> members(static_cast<std::size_t>(m),
                                                  EnsembleMember{spec, params});
        for (int trial = 0; trial < 10; ++trial) {
            Vector x(2);
            x << rng.normal(), rng.normal();
            const auto single = forward(spec, params, x);
            const auto combined = predict_output_ensemble(members, x);
            int arg_single = 0;
            int arg_combined = 0;
            for (int c = 1; c < 3; ++c) {
                if (single.log_probs[c] > single.log_probs[arg_single]) arg_single = c;
                if (combined.log_probs[c] > combined.log_probs[arg_combined]) arg_combined = c;
            }
            CHECK(arg_single == arg_combined);
        }
    }
}

TEST_CASE("averaged probabilities stay normalized") {
    Rng rng(19);
    ModelSpec spec;
    spec.input_dim = 3;
    spec.hidden = {{5, Activation::Relu}};
    spec.num_classes = 4;
    std::vector<EnsembleMember> members;
    for (int i = 0; i < 5; ++i) members.push_back({spec, init_params(spec, 100 + i)});
    for (int trial = 0; trial < 20; ++trial) {
        Vector x(3);
        x << rng.normal(), rng.normal(), rng.normal();
        const auto dist = predict_output_ensemble(members, x);
        CHECK(std::abs(dist.log_probs.array().exp().sum() - 1.0) < 1e-12);
    }
}

TEST_CASE("class-count mismatch is rejected") {
    ModelSpec two;
    two.input_dim = 1;
    two.num_classes = 2;
    ModelSpec three;
    three.input_dim = 1;
    three.num_classes = 3;
    const std::vector<EnsembleMember> members = {{two, init_params(two, 1)},
                                                 {three, init_params(three, 1)}};
    const Vector x = (Vector(1) << 0.0).finished();
    CHECK_THROWS_WITH_AS(predict_output_ensemble(members, x),
                         doctest::Contains("class-count mismatch"), DataError);
}

TEST_CASE("five copies of one checkpoint score identically under all methods") {
    const TaskSuite suite = make_task_suite(606);
    TrainConfig config;
    config.epochs = 10;
    const TrainResult trained = train(suite.model, suite.shared_init, suite.tasks[0].train, config);

    // same-task ensembling: tag heads as body so they merge
    RoleTags tags;
    for (const auto& [name, t] : trained.params.entries) tags[name] = Role::Body;

    FisherConfig fc;
    fc.n_examples = 128;
    const FisherDiagonal fisher =
        estimate_fisher_exact(suite.model, trained.params, suite.tasks[0].train, fc);

    const std::vector<Checkpoint> checkpoints(5, Checkpoint{trained.params, tags});
    const std::vector<FisherDiagonal> fishers(5, fisher);
    const EnsembleReport report =
        ensemble_compare(checkpoints, fishers, suite.model, suite.tasks[0].test);

    CHECK(report.individual.size() == 5);
    const double acc = report.individual[0];
    for (const double v : report.individual) CHECK(v == acc);
    CHECK(report.fisher_merged == acc);
    CHECK(report.isotropic_merged == acc);
    CHECK(report.output_ensemble == acc);
    CHECK(report.inference_cost_ratio == 5);
    for (const double l : report.lambdas) CHECK(l == doctest::Approx(0.2).epsilon(1e-15));

    const std::string json = report.to_json();
    CHECK(json.find("\"inference_cost_ratio\": \"5:1\"") != std::string::npos);
    CHECK(report.to_csv().find("fisher_merged,") != std::string::npos);
}

TEST_CASE("seed-varied ensemble: merging stays close to output ensembling") {
    const TaskSuite suite = make_task_suite(707);
    RoleTags tags;
    for (const auto& [name, t] : suite.shared_init.entries) tags[name] = Role::Body;

    std::vector<Checkpoint> checkpoints;
    std::vector<FisherDiagonal> fishers;
    FisherConfig fc;
    fc.n_examples = 256;
    for (int i = 0; i < 5; ++i) {
        TrainConfig config;
        config.seed = static_cast<std::uint64_t>(1000 + i);
        const TrainResult trained =
            train(suite.model, suite.shared_init, suite.tasks[0].train, config);
        fishers.push_back(
            estimate_fisher_exact(suite.model, trained.params, suite.tasks[0].train, fc));
        checkpoints.push_back({trained.params, tags});
    }
    const EnsembleReport report =
        ensemble_compare(checkpoints, fishers, suite.model, suite.tasks[0].test);
    CHECK(report.fisher_merged >= report.isotropic_merged - 0.01);
    CHECK(report.fisher_merged >= report.output_ensemble - 0.03);
    CHECK(report.inference_cost_ratio == 5);
}

}  // TEST_SUITE
