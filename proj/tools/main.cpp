#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "recon/belief_engine.hpp"
#include "recon/config_space.hpp"
#include "recon/errors.hpp"
#include "recon/io_util.hpp"
#include "recon/knowledge_base.hpp"
#include "recon/observation_ingest.hpp"
#include "recon/scenario.hpp"

namespace {

void warn_dropped(const recon::ParseReport& report) {
    if (report.rows_dropped == 0) return;
    std::cerr << "warning: dropped " << report.rows_dropped << " of " << report.rows_total
              << " observation rows\n";
    for (const auto& issue : report.issues)
        std::cerr << "  row " << issue.row << ": " << issue.reason << "\n";
}

struct BuildKbArgs {
    std::string records;
    std::string schema;
    std::string out;
    double alpha = 1.0;
};

int run_build_kb(const BuildKbArgs& args) {
    const auto schema = recon::schema_from_json(recon::read_text_file(args.schema));
    const auto records = recon::records_from_csv(recon::read_text_file(args.records), schema);
    const auto kb = recon::estimate_kb(records, schema, args.alpha);
    recon::write_text_file_atomic(args.out, recon::kb_to_json(kb));

    std::map<std::string, std::size_t> counts;
    for (const auto& record : records) {
        const char* kind = record.kind == recon::LabelKind::os ? "os " : "software ";
        counts[kind + record.label] += 1;
    }
    for (const auto& [label, count] : counts) std::cout << label << ": " << count << " records\n";
    std::cout << "total: " << records.size() << " records\n";
    std::cout << "kb written to " << args.out << "\n";
    if (kb.alpha() == 0.0 && kb.has_exact_zero_cells())
        std::cerr << "warning: alpha 0 leaves exact-zero cells; one mismatching observation can "
                     "permanently eliminate a configuration\n";
    return 0;
}

struct UpdateArgs {
    std::string kb;
    std::string space;
    std::string obs;
    std::string ingest;
    std::string node;
    std::string out;
    bool wide = false;
};

int run_update(const UpdateArgs& args) {
    const auto kb = recon::kb_from_json(recon::read_text_file(args.kb));
    auto space = std::make_shared<const recon::ConfigurationSpace>(
        recon::space_from_json(recon::read_text_file(args.space)));
    const auto ingest = args.ingest.empty()
                            ? recon::identity_ingest(kb.schema())
                            : recon::ingest_from_json(recon::read_text_file(args.ingest));
    auto parsed = recon::parse_stream(recon::read_text_file(args.obs), ingest, kb.schema());
    warn_dropped(parsed.report);

    auto it = parsed.streams.find(recon::NodeIdentity({args.node}));
    if (it == parsed.streams.end())
        recon::raise(recon::Errc::unknown_node, "no observations for node '" + args.node + "'");

    const auto trajectory = recon::update_stream(recon::uniform_belief(space), it->second, kb);
    const std::string csv = args.wide ? recon::trajectory_to_wide_csv(trajectory)
                                      : recon::trajectory_to_csv(trajectory);
    if (args.out.empty()) {
        std::cout << csv;
    } else {
        recon::write_text_file_atomic(args.out, csv);
        const auto& final_map = trajectory.final_map();
        std::cout << args.node << " map=" << final_map.configuration.label()
                  << " p=" << recon::format_probability_fixed(final_map.probability)
                  << (final_map.tied ? " tied" : "") << "\n";
    }
    return 0;
}

int run_inspect_kb(const std::string& kb_path) {
    const auto kb = recon::kb_from_json(recon::read_text_file(kb_path));
    const auto& schema = kb.schema();

    std::cout << "alpha: " << recon::format_probability(kb.alpha(), 6) << "\n";
    auto print_features = [&](const char* kind, const std::vector<std::string>& features) {
        std::cout << kind << ":";
        if (features.empty()) {
            std::cout << " (none)\n";
            return;
        }
        std::cout << "\n";
        for (const auto& feature : features) {
            std::cout << "  " << feature << ":";
            for (const auto& value : schema.domain_of(feature)) std::cout << " " << value;
            std::cout << "\n";
        }
    };
    print_features("os features", schema.os_features);
    print_features("software features", schema.software_features);

    auto print_tables = [&](const char* kind, const auto& tables,
                            const std::vector<std::string>& features) {
        for (const auto& [label, table] : tables) {
            std::cout << kind << " " << label << ":\n";
            for (const auto& feature : features) {
                std::cout << "  " << feature << ":";
                const auto& domain = schema.domain_of(feature);
                const auto& row = table.at(feature);
                for (std::size_t v = 0; v < domain.size(); ++v)
                    std::cout << " " << domain[v] << "=" << recon::format_probability(row[v], 6);
                std::cout << "\n";
            }
        }
    };
    print_tables("os", kb.os_tables(), schema.os_features);
    print_tables("software", kb.software_tables(), schema.software_features);
    return 0;
}

struct ScenarioArgs {
    std::string scenario;
    std::string format = "csv";
    std::string out_dir = ".";
    bool wide = false;
    std::optional<std::uint64_t> seed;
};

int run_scenario_cmd(const ScenarioArgs& args) {
    auto scenario = recon::load_scenario(args.scenario, args.seed);
    warn_dropped(scenario.parse_report);

    const auto streams =
        recon::apply_deception(scenario.streams, scenario.deception, scenario.kb.schema());
    const auto report = recon::run_scenario(scenario.kb, streams, scenario.priors, scenario.truth,
                                            scenario.threshold);
    const auto artifacts = recon::emit_report(
        report, args.format == "json" ? recon::ReportFormat::json : recon::ReportFormat::csv,
        args.wide);

    std::error_code ec;
    std::filesystem::create_directories(args.out_dir, ec);
    if (ec)
        recon::raise(recon::Errc::io_error,
                     "cannot create output directory '" + args.out_dir + "': " + ec.message());
    for (const auto& artifact : artifacts)
        recon::write_text_file_atomic(std::filesystem::path(args.out_dir) / artifact.name,
                                      artifact.bytes);
    std::cout << recon::summary_lines(report);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian belief modeling over passive host fingerprints"};
    app.require_subcommand(1);

    BuildKbArgs build_args;
    auto* build = app.add_subcommand("build-kb",
                                     "Estimate conditional probability tables from a labeled corpus");
    build->add_option("--records", build_args.records, "labeled corpus CSV")->required();
    build->add_option("--schema", build_args.schema, "feature schema JSON")->required();
    build->add_option("--alpha", build_args.alpha, "Laplace pseudocount (default 1)")
        ->check(CLI::NonNegativeNumber);
    build->add_option("--out", build_args.out, "output knowledge base path")->required();

    UpdateArgs update_args;
    auto* update = app.add_subcommand("update", "Run sequential belief updates for one node");
    update->add_option("--kb", update_args.kb, "knowledge base JSON")->required();
    update->add_option("--space", update_args.space, "configuration space JSON")->required();
    update->add_option("--obs", update_args.obs, "observation CSV")->required();
    update->add_option("--ingest", update_args.ingest, "ingest config JSON (default: identity)");
    update->add_option("--node", update_args.node, "node address to update")->required();
    update->add_option("--out", update_args.out, "trajectory CSV path (default: stdout)");
    update->add_flag("--wide", update_args.wide, "one column per configuration");

    std::string inspect_kb_path;
    auto* inspect = app.add_subcommand("inspect-kb", "Print a knowledge base in readable form");
    inspect->add_option("--kb", inspect_kb_path, "knowledge base JSON")->required();

    ScenarioArgs scenario_args;
    std::uint64_t seed_value = 0;
    auto* scenario = app.add_subcommand("run-scenario",
                                        "Replay observation streams against ground truth");
    scenario->add_option("scenario", scenario_args.scenario, "scenario JSON")->required();
    scenario->add_option("--format", scenario_args.format, "report format (default csv)")
        ->check(CLI::IsMember({"csv", "json"}));
    scenario->add_option("--out-dir", scenario_args.out_dir, "report directory (default .)");
    scenario->add_flag("--wide", scenario_args.wide, "wide trajectory CSVs");
    auto* seed_option =
        scenario->add_option("--seed", seed_value, "override deception seeds (rule i gets seed+i)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    if (seed_option->count() > 0) scenario_args.seed = seed_value;

    try {
        if (build->parsed()) return run_build_kb(build_args);
        if (update->parsed()) return run_update(update_args);
        if (inspect->parsed()) return run_inspect_kb(inspect_kb_path);
        if (scenario->parsed()) return run_scenario_cmd(scenario_args);
    } catch (const recon::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code() == recon::Errc::io_error ? 1 : 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
