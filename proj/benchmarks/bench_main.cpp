#include <benchmark/benchmark.h>

#include <cstddef>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "recon/belief_engine.hpp"
#include "recon/config_space.hpp"
#include "recon/knowledge_base.hpp"

using namespace recon;

namespace {

std::vector<std::string> labels(const std::string& stem, std::size_t count) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(stem + std::to_string(i));
    return out;
}

FeatureSchema bench_schema(bool with_software) {
    FeatureSchema schema;
    schema.os_features = {"f0", "f1"};
    schema.domains["f0"] = {"a", "b", "c"};
    schema.domains["f1"] = {"a", "b", "c"};
    if (with_software) {
        schema.software_features = {"g"};
        schema.domains["g"] = {"a", "b", "c"};
    }
    return schema;
}

// Deterministic row-stochastic tables: the base row rotated per label so
// labels stay distinguishable without any RNG in the hot path.
KnowledgeBase bench_kb(const FeatureSchema& schema, const std::vector<std::string>& os_labels,
                       const std::vector<std::string>& software_labels) {
    const double base[3] = {0.5, 0.3, 0.2};
    auto rotated = [&](std::size_t shift) {
        KnowledgeBase::Row row(3);
        for (std::size_t v = 0; v < 3; ++v) row[v] = base[(v + shift) % 3];
        return row;
    };
    std::map<std::string, KnowledgeBase::LabelTable> os_tables;
    for (std::size_t i = 0; i < os_labels.size(); ++i)
        for (const auto& feature : schema.os_features) os_tables[os_labels[i]][feature] = rotated(i);
    std::map<std::string, KnowledgeBase::LabelTable> software_tables;
    for (std::size_t i = 0; i < software_labels.size(); ++i)
        for (const auto& feature : schema.software_features)
            software_tables[software_labels[i]][feature] = rotated(i + 1);
    return KnowledgeBase(bench_schema(!software_labels.empty()), std::move(os_tables),
                         std::move(software_tables), 1.0);
}

Observation bench_observation(const FeatureSchema& schema, int octet) {
    std::map<std::string, std::string> values;
    for (const auto& [feature, domain] : schema.domains) values[feature] = domain.front();
    return Observation{NodeIdentity({"10.0.0." + std::to_string(octet)}), std::move(values)};
}

} // namespace

// Space size scales as 4 * 2^software, so range(0) sweeps the
// configuration count from 4 to 16384.
static void BM_BayesUpdate(benchmark::State& state) {
    const auto software = static_cast<std::size_t>(state.range(0));
    const auto schema = bench_schema(software > 0);
    auto space = std::make_shared<const ConfigurationSpace>(labels("os", 4),
                                                            labels("sw", software));
    const auto kb = bench_kb(schema, labels("os", 4), labels("sw", software));
    const Belief prior = uniform_belief(space);
    const Observation obs = bench_observation(schema, 1);
    for (auto _ : state) benchmark::DoNotOptimize(bayes_update(prior, obs, kb));
    state.counters["configs"] = static_cast<double>(space->size());
}
BENCHMARK(BM_BayesUpdate)->Arg(0)->Arg(4)->Arg(8)->Arg(12);

static void BM_UpdateStream(benchmark::State& state) {
    const auto length = static_cast<std::size_t>(state.range(0));
    const auto schema = bench_schema(true);
    auto space = std::make_shared<const ConfigurationSpace>(labels("os", 4), labels("sw", 4));
    const auto kb = bench_kb(schema, labels("os", 4), labels("sw", 4));
    const Belief prior = uniform_belief(space);
    const std::vector<Observation> stream(length, bench_observation(schema, 1));
    for (auto _ : state) benchmark::DoNotOptimize(update_stream(prior, stream, kb));
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * length));
}
BENCHMARK(BM_UpdateStream)->Arg(1)->Arg(16)->Arg(128);

static void BM_EstimateKb(benchmark::State& state) {
    const auto samples = static_cast<std::size_t>(state.range(0));
    const auto schema = bench_schema(true);
    const auto os_labels = labels("os", 4);
    const auto software_labels = labels("sw", 2);
    std::vector<TrainingRecord> records;
    records.reserve(samples);
    for (std::size_t i = 0; i < samples; ++i) {
        Observation obs = bench_observation(schema, 1);
        if (i % 5 == 4) {
            obs.values = {{"g", schema.domains.at("g")[i % 3]}};
            records.push_back({LabelKind::software, software_labels[i % 2], std::move(obs)});
        } else {
            obs.values.erase("g");
            obs.values["f0"] = schema.domains.at("f0")[i % 3];
            records.push_back({LabelKind::os, os_labels[i % os_labels.size()], std::move(obs)});
        }
    }
    for (auto _ : state) benchmark::DoNotOptimize(estimate_kb(records, schema, 1.0));
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * samples));
}
BENCHMARK(BM_EstimateKb)->Arg(100)->Arg(1000)->Arg(10000);

static void BM_EnumerateSpace(benchmark::State& state) {
    const auto software = static_cast<std::size_t>(state.range(0));
    const auto os_labels = labels("os", 4);
    const auto software_labels = labels("sw", software);
    for (auto _ : state) {
        ConfigurationSpace space(os_labels, software_labels);
        benchmark::DoNotOptimize(space.size());
    }
}
BENCHMARK(BM_EnumerateSpace)->Arg(4)->Arg(8)->Arg(12);

static void BM_JointOracle(benchmark::State& state) {
    const auto nodes = static_cast<std::size_t>(state.range(0));
    const auto schema = bench_schema(true);
    auto space = std::make_shared<const ConfigurationSpace>(labels("os", 2), labels("sw", 2));
    const auto kb = bench_kb(schema, labels("os", 2), labels("sw", 2));
    NetworkBelief network;
    std::map<NodeIdentity, std::vector<Observation>> streams;
    for (std::size_t n = 0; n < nodes; ++n) {
        const Observation obs = bench_observation(schema, static_cast<int>(n) + 1);
        network.set(obs.node, uniform_belief(space));
        streams[obs.node] = {obs, obs};
    }
    const JointBelief prior = JointBelief::from_marginals(network);
    for (auto _ : state) benchmark::DoNotOptimize(joint_update_oracle(prior, streams, kb));
    state.counters["joint_states"] =
        static_cast<double>(prior.mass().size());
}
BENCHMARK(BM_JointOracle)->Arg(1)->Arg(2);

BENCHMARK_MAIN();
