#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "recon/belief_engine.hpp"
#include "recon/config_space.hpp"
#include "recon/knowledge_base.hpp"
#include "recon/observation_ingest.hpp"

namespace recon {

struct GroundTruth {
    std::map<NodeIdentity, Configuration> per_node;
};

// One stream-perturbation rule: where the feature is present and matches,
// replace its value with the rule's probability, drawn from a seeded
// generator so runs are reproducible.
struct DeceptionRule {
    std::string feature;
    std::optional<std::string> match; // absent: any value matches
    std::string replace;
    double probability = 0.0;
    std::uint64_t seed = 0;
};

struct DeceptionRewrite {
    std::vector<DeceptionRule> rules;
};

// Applies each rule in order over all streams; stream lengths and
// observation order are unchanged.
std::map<NodeIdentity, std::vector<Observation>> apply_deception(
    const std::map<NodeIdentity, std::vector<Observation>>& streams,
    const DeceptionRewrite& rewrite, const FeatureSchema& schema);

struct NodeOutcome {
    BeliefTrajectory trajectory;
    double truth_probability = 0.0; // final mass on the ground-truth configuration
    // Smallest step index k with mass_k(truth) >= threshold; step 0 is
    // the prior, step k the posterior after k observations. Empty when
    // the threshold is never reached.
    std::optional<std::size_t> obs_to_threshold;
    bool map_correct = false;
};

struct ScenarioReport {
    double threshold = 0.9;
    std::map<NodeIdentity, NodeOutcome> per_node;
};

// Replays every node's stream against its prior and scores the result
// against ground truth. Deterministic given its inputs.
ScenarioReport run_scenario(const KnowledgeBase& kb,
                            const std::map<NodeIdentity, std::vector<Observation>>& streams,
                            const std::map<NodeIdentity, Belief>& priors, const GroundTruth& truth,
                            double threshold);

enum class ReportFormat { csv, json };

struct ReportArtifact {
    std::string name; // file name, e.g. "truth_probability.csv"
    std::string bytes;
};

// CSV format yields truth_probability.csv (`node,gt,prob`),
// observations_needed.csv (`node,gt,num`), and one trajectory CSV per
// node (long form, or `step,<config labels...>` wide form). JSON format
// yields a single report.json with raw full-precision values.
std::vector<ReportArtifact> emit_report(const ScenarioReport& report, ReportFormat format,
                                        bool wide);

// Per-node summary line: `node truth_prob obs_to_threshold map_correct`.
std::string summary_lines(const ScenarioReport& report);

// A fully loaded scenario: every referenced document parsed and
// validated, priors materialized per stream node.
struct Scenario {
    KnowledgeBase kb;
    SpacePtr space;
    std::map<NodeIdentity, std::vector<Observation>> streams;
    ParseReport parse_report;
    std::map<NodeIdentity, Belief> priors;
    GroundTruth truth;
    double threshold = 0.9;
    DeceptionRewrite deception;
};

// Loads a scenario document (versioned JSON; see README for the shape).
// File paths inside are resolved relative to the document's directory.
// seed_override reseeds deception rule i with seed_override + i.
Scenario load_scenario(const std::filesystem::path& path,
                       std::optional<std::uint64_t> seed_override = std::nullopt);

} // namespace recon
