#include "recon/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <json.hpp>

#include "recon/errors.hpp"
#include "recon/io_util.hpp"

namespace recon {

namespace {

// Uniform in [0,1) from the generator's top 53 bits; bit-identical on
// every platform, unlike std::uniform_real_distribution.
double uniform_unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

} // namespace

std::map<NodeIdentity, std::vector<Observation>> apply_deception(
    const std::map<NodeIdentity, std::vector<Observation>>& streams,
    const DeceptionRewrite& rewrite, const FeatureSchema& schema) {
    schema.validate();
    for (const auto& rule : rewrite.rules) {
        const auto& domain = schema.domain_of(rule.feature); // throws on unknown feature
        if (std::find(domain.begin(), domain.end(), rule.replace) == domain.end())
            raise(Errc::domain_violation, "replacement '" + rule.replace +
                                              "' is not in the domain of feature '" + rule.feature + "'");
        if (!std::isfinite(rule.probability) || rule.probability < 0.0 || rule.probability > 1.0)
            raise(Errc::invalid_argument, "rewrite probability outside [0,1]");
    }

    auto out = streams;
    for (const auto& rule : rewrite.rules) {
        std::mt19937_64 rng(rule.seed);
        for (auto& [node, observations] : out) {
            for (auto& obs : observations) {
                auto it = obs.values.find(rule.feature);
                if (it == obs.values.end()) continue;
                if (rule.match.has_value() && it->second != *rule.match) continue;
                if (uniform_unit(rng) < rule.probability) it->second = rule.replace;
            }
        }
    }
    return out;
}

ScenarioReport run_scenario(const KnowledgeBase& kb,
                            const std::map<NodeIdentity, std::vector<Observation>>& streams,
                            const std::map<NodeIdentity, Belief>& priors, const GroundTruth& truth,
                            double threshold) {
    if (!std::isfinite(threshold) || threshold <= 0.0 || threshold > 1.0)
        raise(Errc::invalid_argument, "threshold must lie in (0,1]");

    ScenarioReport report;
    report.threshold = threshold;
    for (const auto& [node, stream] : streams) {
        const std::string tag = "node '" + node.primary() + "': ";
        auto prior_it = priors.find(node);
        if (prior_it == priors.end()) raise(Errc::unknown_node, tag + "no prior");
        auto truth_it = truth.per_node.find(node);
        if (truth_it == truth.per_node.end()) raise(Errc::unknown_node, tag + "no ground truth");
        const Configuration& truth_config = truth_it->second;
        try {
            prior_it->second.space()->validate(truth_config);

            NodeOutcome outcome;
            outcome.trajectory = update_stream(prior_it->second, stream, kb);
            outcome.truth_probability = outcome.trajectory.final_belief().mass_of(truth_config);
            for (const auto& step : outcome.trajectory.steps) {
                if (step.belief.mass_of(truth_config) >= threshold) {
                    outcome.obs_to_threshold = step.obs_index;
                    break;
                }
            }
            outcome.map_correct = outcome.trajectory.final_map().configuration == truth_config;
            report.per_node.emplace(node, std::move(outcome));
        } catch (const Error& e) {
            raise(e.code(), tag + e.detail());
        }
    }
    return report;
}

namespace {

std::string obs_count_text(const std::optional<std::size_t>& count) {
    return count.has_value() ? std::to_string(*count) : "never";
}

nlohmann::json report_to_json(const ScenarioReport& report) {
    nlohmann::json doc;
    doc["version"] = 1;
    doc["threshold"] = report.threshold;
    nlohmann::json nodes = nlohmann::json::object();
    for (const auto& [node, outcome] : report.per_node) {
        nlohmann::json entry;
        entry["truth_probability"] = outcome.truth_probability;
        if (outcome.obs_to_threshold.has_value())
            entry["obs_to_threshold"] = *outcome.obs_to_threshold;
        else
            entry["obs_to_threshold"] = "never";
        entry["map_correct"] = outcome.map_correct;
        entry["map_configuration"] = outcome.trajectory.final_map().configuration.label();
        entry["map_tied"] = outcome.trajectory.final_map().tied;
        entry["evidence_zero_steps"] = outcome.trajectory.evidence_zero_steps;
        nlohmann::json steps = nlohmann::json::array();
        for (const auto& step : outcome.trajectory.steps) {
            nlohmann::json mass = nlohmann::json::object();
            const auto& configs = step.belief.space()->configurations();
            for (std::size_t i = 0; i < configs.size(); ++i)
                mass[configs[i].label()] = step.belief.mass_at(i);
            steps.push_back(nlohmann::json{{"obs_index", step.obs_index}, {"mass", std::move(mass)}});
        }
        entry["trajectory"] = std::move(steps);
        nodes[node.primary()] = std::move(entry);
    }
    doc["nodes"] = std::move(nodes);
    return doc;
}

} // namespace

std::vector<ReportArtifact> emit_report(const ScenarioReport& report, ReportFormat format,
                                        bool wide) {
    std::vector<ReportArtifact> artifacts;
    if (format == ReportFormat::json) {
        artifacts.push_back(ReportArtifact{"report.json", report_to_json(report).dump(2) + "\n"});
        return artifacts;
    }

    std::string prob_csv = "node,gt,prob\n";
    std::string needed_csv = "node,gt,num\n";
    for (const auto& [node, outcome] : report.per_node) {
        prob_csv += node.primary() + ",1," + format_probability(outcome.truth_probability) + "\n";
        needed_csv += node.primary() + ",1," + obs_count_text(outcome.obs_to_threshold) + "\n";
    }
    artifacts.push_back(ReportArtifact{"truth_probability.csv", std::move(prob_csv)});
    artifacts.push_back(ReportArtifact{"observations_needed.csv", std::move(needed_csv)});
    for (const auto& [node, outcome] : report.per_node) {
        artifacts.push_back(ReportArtifact{
            "trajectory_" + node.primary() + ".csv",
            wide ? trajectory_to_wide_csv(outcome.trajectory) : trajectory_to_csv(outcome.trajectory)});
    }
    return artifacts;
}

std::string summary_lines(const ScenarioReport& report) {
    std::string out;
    for (const auto& [node, outcome] : report.per_node) {
        out += node.primary();
        out += " " + format_probability_fixed(outcome.truth_probability);
        out += " " + obs_count_text(outcome.obs_to_threshold);
        out += outcome.map_correct ? " true" : " false";
        out += "\n";
    }
    return out;
}

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& doc, std::initializer_list<const char*> allowed,
                         const char* what) {
    for (const auto& [key, value] : doc.items()) {
        if (std::find_if(allowed.begin(), allowed.end(),
                         [&](const char* k) { return key == k; }) == allowed.end())
            raise(Errc::format_error, std::string(what) + " has unknown key '" + key + "'");
    }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& relative) {
    std::filesystem::path p(relative);
    return p.is_absolute() ? p : base / p;
}

std::string require_path(const json& doc, const char* key) {
    if (!doc.contains(key) || !doc[key].is_string() || doc[key].get<std::string>().empty())
        raise(Errc::format_error, std::string("scenario needs a \"") + key + "\" file path");
    return doc[key].get<std::string>();
}

Configuration configuration_from_node(const json& node) {
    if (!node.is_array() || node.size() != 2 || !node[0].is_string() || !node[1].is_array())
        raise(Errc::format_error, "configuration entries must be [os, [software...]] pairs");
    std::vector<std::string> software;
    for (const auto& s : node[1]) {
        if (!s.is_string())
            raise(Errc::format_error, "configuration entries must be [os, [software...]] pairs");
        software.push_back(s.get<std::string>());
    }
    return make_configuration(node[0].get<std::string>(), std::move(software));
}

DependencyModel dependency_from_node(const json& node) {
    if (!node.is_object()) raise(Errc::format_error, "\"dependency\" must be an object");
    reject_unknown_keys(node, {"chain_order", "conditionals"}, "dependency");
    if (!node.contains("chain_order") || !node["chain_order"].is_array())
        raise(Errc::format_error, "dependency needs a \"chain_order\" array");
    std::vector<std::string> chain;
    for (const auto& s : node["chain_order"]) {
        if (!s.is_string()) raise(Errc::format_error, "\"chain_order\" must be an array of strings");
        chain.push_back(s.get<std::string>());
    }
    DependencyModel dep(std::move(chain));
    if (node.contains("conditionals")) {
        if (!node["conditionals"].is_array())
            raise(Errc::format_error, "\"conditionals\" must be an array of objects");
        for (const auto& entry : node["conditionals"]) {
            if (!entry.is_object())
                raise(Errc::format_error, "\"conditionals\" must be an array of objects");
            reject_unknown_keys(entry, {"software", "os", "present", "probability"}, "conditional");
            if (!entry.contains("software") || !entry["software"].is_string() ||
                !entry.contains("os") || !entry["os"].is_string() || !entry.contains("probability") ||
                !entry["probability"].is_number())
                raise(Errc::format_error,
                      "conditional needs string \"software\"/\"os\" and numeric \"probability\"");
            std::vector<std::string> present;
            if (entry.contains("present")) {
                if (!entry["present"].is_array())
                    raise(Errc::format_error, "conditional \"present\" must be an array of strings");
                for (const auto& s : entry["present"]) {
                    if (!s.is_string())
                        raise(Errc::format_error, "conditional \"present\" must be an array of strings");
                    present.push_back(s.get<std::string>());
                }
            }
            dep.set_conditional(entry["software"].get<std::string>(), entry["os"].get<std::string>(),
                                std::move(present), entry["probability"].get<double>());
        }
    }
    return dep;
}

Belief prior_from_spec(const json& spec, const SpacePtr& space) {
    if (spec.is_string()) {
        if (spec.get<std::string>() == "uniform") return uniform_belief(space);
        raise(Errc::format_error, "prior '" + spec.get<std::string>() + "' is not recognized (use \"uniform\")");
    }
    if (!spec.is_object()) raise(Errc::format_error, "prior must be \"uniform\" or an object");
    reject_unknown_keys(spec, {"os", "dependency"}, "prior");
    if (!spec.contains("os") || !spec["os"].is_object())
        raise(Errc::format_error, "prior needs an \"os\" probability object");
    std::map<std::string, double> os_prior;
    for (const auto& [os, p] : spec["os"].items()) {
        if (!p.is_number()) raise(Errc::format_error, "os prior for '" + os + "' is not a number");
        os_prior[os] = p.get<double>();
    }
    DependencyModel dep;
    if (spec.contains("dependency")) {
        dep = dependency_from_node(spec["dependency"]);
    } else if (!space->software_universe().empty()) {
        raise(Errc::format_error,
              "prior needs a \"dependency\" model because the software universe is non-empty");
    }
    return chain_rule_prior(space, os_prior, dep);
}

DeceptionRewrite deception_from_node(const json& node) {
    if (!node.is_object()) raise(Errc::format_error, "\"deception\" must be an object");
    reject_unknown_keys(node, {"rules"}, "deception");
    DeceptionRewrite rewrite;
    if (!node.contains("rules") || !node["rules"].is_array())
        raise(Errc::format_error, "deception needs a \"rules\" array");
    for (const auto& entry : node["rules"]) {
        if (!entry.is_object()) raise(Errc::format_error, "deception rules must be objects");
        reject_unknown_keys(entry, {"feature", "match", "replace", "probability", "seed"},
                            "deception rule");
        if (!entry.contains("feature") || !entry["feature"].is_string() ||
            !entry.contains("replace") || !entry["replace"].is_string() ||
            !entry.contains("probability") || !entry["probability"].is_number())
            raise(Errc::format_error,
                  "deception rule needs string \"feature\"/\"replace\" and numeric \"probability\"");
        DeceptionRule rule;
        rule.feature = entry["feature"].get<std::string>();
        rule.replace = entry["replace"].get<std::string>();
        rule.probability = entry["probability"].get<double>();
        if (entry.contains("match")) {
            if (!entry["match"].is_string())
                raise(Errc::format_error, "deception rule \"match\" must be a string");
            rule.match = entry["match"].get<std::string>();
        }
        if (entry.contains("seed")) {
            if (!entry["seed"].is_number_integer())
                raise(Errc::format_error, "deception rule \"seed\" must be an integer");
            rule.seed = entry["seed"].get<std::uint64_t>();
        }
        rewrite.rules.push_back(std::move(rule));
    }
    return rewrite;
}

} // namespace

Scenario load_scenario(const std::filesystem::path& path,
                       std::optional<std::uint64_t> seed_override) {
    const std::string text = read_text_file(path);
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        raise(Errc::format_error, "scenario document is not a JSON object");
    reject_unknown_keys(doc,
                        {"version", "kb", "space", "observations", "ingest", "threshold", "priors",
                         "ground_truth", "deception"},
                        "scenario");
    if (!doc.contains("version") || !doc["version"].is_number_integer() || doc["version"] != 1)
        raise(Errc::format_error, "scenario document needs \"version\": 1");

    const std::filesystem::path base = path.has_parent_path() ? path.parent_path() : ".";

    KnowledgeBase kb = kb_from_json(read_text_file(resolve(base, require_path(doc, "kb"))));
    auto space = std::make_shared<const ConfigurationSpace>(
        space_from_json(read_text_file(resolve(base, require_path(doc, "space")))));

    IngestConfig ingest = identity_ingest(kb.schema());
    if (doc.contains("ingest"))
        ingest = ingest_from_json(read_text_file(resolve(base, require_path(doc, "ingest"))));

    ParsedStream parsed =
        parse_stream(read_text_file(resolve(base, require_path(doc, "observations"))), ingest,
                     kb.schema());

    double threshold = 0.9;
    if (doc.contains("threshold")) {
        if (!doc["threshold"].is_number()) raise(Errc::format_error, "\"threshold\" must be a number");
        threshold = doc["threshold"].get<double>();
    }

    if (!doc.contains("ground_truth") || !doc["ground_truth"].is_object())
        raise(Errc::format_error, "scenario needs a \"ground_truth\" object");
    GroundTruth truth;
    for (const auto& [addr, config_node] : doc["ground_truth"].items()) {
        NodeIdentity node({addr});
        Configuration config = configuration_from_node(config_node);
        space->validate(config);
        truth.per_node.emplace(std::move(node), std::move(config));
    }

    std::map<NodeIdentity, Belief> priors;
    {
        json default_spec = "uniform";
        json per_node_specs = json::object();
        if (doc.contains("priors")) {
            if (!doc["priors"].is_object()) raise(Errc::format_error, "\"priors\" must be an object");
            reject_unknown_keys(doc["priors"], {"default", "per_node"}, "priors");
            if (doc["priors"].contains("default")) default_spec = doc["priors"]["default"];
            if (doc["priors"].contains("per_node")) {
                if (!doc["priors"]["per_node"].is_object())
                    raise(Errc::format_error, "\"per_node\" priors must be an object");
                per_node_specs = doc["priors"]["per_node"];
            }
        }
        for (const auto& [addr, spec] : per_node_specs.items()) {
            if (!parsed.streams.contains(NodeIdentity({addr})))
                raise(Errc::unknown_node, "per-node prior for '" + addr + "', which has no observations");
        }
        for (const auto& [node, stream] : parsed.streams) {
            const std::string& addr = node.primary();
            try {
                priors.emplace(node, prior_from_spec(per_node_specs.contains(addr)
                                                         ? per_node_specs[addr]
                                                         : default_spec,
                                                     space));
            } catch (const Error& e) {
                raise(e.code(), "prior for node '" + addr + "': " + e.detail());
            }
        }
    }

    DeceptionRewrite deception;
    if (doc.contains("deception")) deception = deception_from_node(doc["deception"]);
    if (seed_override.has_value()) {
        for (std::size_t i = 0; i < deception.rules.size(); ++i)
            deception.rules[i].seed = *seed_override + i;
    }

    return Scenario{std::move(kb),    std::move(space), std::move(parsed.streams),
                    std::move(parsed.report), std::move(priors), std::move(truth),
                    threshold,        std::move(deception)};
}

} // namespace recon
