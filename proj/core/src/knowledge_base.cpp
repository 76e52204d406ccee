#include "recon/knowledge_base.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "recon/errors.hpp"

namespace recon {

namespace {

constexpr double kRowSumTolerance = 1e-9;

// Feature names and domain values travel through unquoted CSV.
bool csv_safe(const std::string& text) {
    return text.find_first_of(",\r\n") == std::string::npos;
}

} // namespace

bool FeatureSchema::is_os_feature(const std::string& feature) const {
    return std::find(os_features.begin(), os_features.end(), feature) != os_features.end();
}

bool FeatureSchema::is_software_feature(const std::string& feature) const {
    return std::find(software_features.begin(), software_features.end(), feature) !=
           software_features.end();
}

bool FeatureSchema::has_feature(const std::string& feature) const {
    return is_os_feature(feature) || is_software_feature(feature);
}

const std::vector<std::string>& FeatureSchema::domain_of(const std::string& feature) const {
    auto it = domains.find(feature);
    if (it == domains.end() || !has_feature(feature))
        raise(Errc::schema_violation, "unknown feature '" + feature + "'");
    return it->second;
}

std::size_t FeatureSchema::value_index(const std::string& feature, const std::string& value) const {
    const auto& domain = domain_of(feature);
    auto it = std::find(domain.begin(), domain.end(), value);
    if (it == domain.end())
        raise(Errc::schema_violation, "value '" + value + "' not in domain of feature '" + feature + "'");
    return static_cast<std::size_t>(it - domain.begin());
}

void FeatureSchema::validate() const {
    std::set<std::string> seen;
    for (const auto* list : {&os_features, &software_features}) {
        for (const auto& feature : *list) {
            if (feature.empty()) raise(Errc::schema_violation, "empty feature name");
            if (feature == "src_addr" || feature == "kind" || feature == "label")
                raise(Errc::schema_violation, "feature name '" + feature + "' is reserved");
            if (!csv_safe(feature))
                raise(Errc::schema_violation, "feature name '" + feature + "' contains CSV separators");
            if (!seen.insert(feature).second)
                raise(Errc::schema_violation, "feature '" + feature + "' listed twice");
            auto it = domains.find(feature);
            if (it == domains.end() || it->second.empty())
                raise(Errc::schema_violation, "feature '" + feature + "' has no domain");
            for (const auto& value : it->second) {
                if (value.empty() || !csv_safe(value))
                    raise(Errc::schema_violation,
                          "feature '" + feature + "' has an empty or CSV-unsafe domain value");
            }
            std::set<std::string> values(it->second.begin(), it->second.end());
            if (values.size() != it->second.size())
                raise(Errc::schema_violation, "feature '" + feature + "' has duplicate domain values");
        }
    }
    for (const auto& [feature, domain] : domains) {
        if (!seen.contains(feature))
            raise(Errc::schema_violation, "domain for undeclared feature '" + feature + "'");
    }
    if (os_features.empty() && software_features.empty())
        raise(Errc::schema_violation, "schema declares no features");
}

void validate_observation(const Observation& obs, const FeatureSchema& schema) {
    for (const auto& [feature, value] : obs.values) {
        schema.value_index(feature, value); // throws on unknown feature or value
    }
}

KnowledgeBase::KnowledgeBase(FeatureSchema schema, std::map<std::string, LabelTable> os_tables,
                             std::map<std::string, LabelTable> software_tables, double alpha)
    : schema_(std::move(schema)), os_tables_(std::move(os_tables)),
      software_tables_(std::move(software_tables)), alpha_(alpha) {
    schema_.validate();
    if (!(alpha_ >= 0.0) || !std::isfinite(alpha_))
        raise(Errc::invalid_argument, "smoothing pseudocount must be a finite value >= 0");

    auto check_tables = [&](const std::map<std::string, LabelTable>& tables,
                            const std::vector<std::string>& features, const char* kind) {
        for (const auto& [label, table] : tables) {
            if (label.empty()) raise(Errc::schema_violation, std::string(kind) + " table with empty label");
            for (const auto& feature : features) {
                auto it = table.find(feature);
                if (it == table.end())
                    raise(Errc::schema_violation, std::string(kind) + " '" + label +
                                                      "' has no row for feature '" + feature + "'");
                const auto& row = it->second;
                const auto& domain = schema_.domain_of(feature);
                if (row.size() != domain.size())
                    raise(Errc::schema_violation, std::string(kind) + " '" + label + "' row for '" +
                                                      feature + "' has wrong length");
                double total = 0.0;
                for (double p : row) {
                    if (!std::isfinite(p) || p < 0.0 || p > 1.0)
                        raise(Errc::schema_violation, std::string(kind) + " '" + label +
                                                          "' has a probability outside [0,1]");
                    if (alpha_ > 0.0 && p == 0.0)
                        raise(Errc::schema_violation, std::string(kind) + " '" + label +
                                                          "' stores an exact zero despite smoothing");
                    total += p;
                }
                if (std::abs(total - 1.0) > kRowSumTolerance)
                    raise(Errc::schema_violation, std::string(kind) + " '" + label + "' row for '" +
                                                      feature + "' sums to " + std::to_string(total));
            }
            for (const auto& [feature, row] : table) {
                if (std::find(features.begin(), features.end(), feature) == features.end())
                    raise(Errc::schema_violation, std::string(kind) + " '" + label +
                                                      "' has a row for foreign feature '" + feature + "'");
            }
        }
    };
    check_tables(os_tables_, schema_.os_features, "OS");
    check_tables(software_tables_, schema_.software_features, "software");
}

namespace {

double lookup_probability(const FeatureSchema& schema,
                          const std::map<std::string, KnowledgeBase::LabelTable>& tables,
                          const std::string& label, const std::string& feature,
                          const std::string& value, double alpha, const char* kind) {
    const std::size_t index = schema.value_index(feature, value);
    auto it = tables.find(label);
    if (it == tables.end()) {
        if (alpha > 0.0) return 1.0 / static_cast<double>(schema.domain_of(feature).size());
        raise(Errc::unknown_label,
              std::string("no ") + kind + " table for '" + label + "' and no smoothing to cover it");
    }
    return it->second.at(feature)[index];
}

} // namespace

double KnowledgeBase::os_probability(const std::string& os, const std::string& feature,
                                     const std::string& value) const {
    if (!schema_.is_os_feature(feature))
        raise(Errc::schema_violation, "'" + feature + "' is not an OS feature");
    return lookup_probability(schema_, os_tables_, os, feature, value, alpha_, "OS");
}

double KnowledgeBase::software_probability(const std::string& software, const std::string& feature,
                                           const std::string& value) const {
    if (!schema_.is_software_feature(feature))
        raise(Errc::schema_violation, "'" + feature + "' is not a software feature");
    return lookup_probability(schema_, software_tables_, software, feature, value, alpha_, "software");
}

bool KnowledgeBase::has_exact_zero_cells() const noexcept {
    for (const auto* tables : {&os_tables_, &software_tables_}) {
        for (const auto& [label, table] : *tables) {
            for (const auto& [feature, row] : table) {
                for (double p : row) {
                    if (p == 0.0) return true;
                }
            }
        }
    }
    return false;
}

KnowledgeBase estimate_kb(const std::vector<TrainingRecord>& records, FeatureSchema schema,
                          double alpha) {
    schema.validate();
    if (records.empty()) raise(Errc::empty_corpus, "no training records");
    if (!(alpha >= 0.0) || !std::isfinite(alpha))
        raise(Errc::invalid_argument, "smoothing pseudocount must be a finite value >= 0");

    // counts[kind][label][feature] -> per-domain-value tallies
    std::map<std::string, std::map<std::string, std::vector<std::size_t>>> os_counts;
    std::map<std::string, std::map<std::string, std::vector<std::size_t>>> software_counts;

    for (std::size_t i = 0; i < records.size(); ++i) {
        const TrainingRecord& record = records[i];
        const std::string where = "record " + std::to_string(i + 1);
        if (record.label.empty()) raise(Errc::schema_violation, where + " has an empty label");
        validate_observation(record.observation, schema);
        const bool for_os = record.kind == LabelKind::os;
        const auto& own_features = for_os ? schema.os_features : schema.software_features;
        auto& counts = for_os ? os_counts[record.label] : software_counts[record.label];
        if (counts.empty()) {
            for (const auto& feature : own_features)
                counts[feature].assign(schema.domain_of(feature).size(), 0);
        }
        for (const auto& [feature, value] : record.observation.values) {
            auto it = counts.find(feature);
            if (it == counts.end())
                raise(Errc::schema_violation, where + " ('" + record.label + "') carries feature '" +
                                                  feature + "' of the wrong kind");
            it->second[schema.value_index(feature, value)] += 1;
        }
    }

    auto build_tables = [&](const auto& counts) {
        std::map<std::string, KnowledgeBase::LabelTable> tables;
        for (const auto& [label, per_feature] : counts) {
            KnowledgeBase::LabelTable table;
            for (const auto& [feature, tallies] : per_feature) {
                std::size_t total = 0;
                for (std::size_t c : tallies) total += c;
                KnowledgeBase::Row row(tallies.size());
                if (total == 0 && alpha == 0.0) {
                    std::fill(row.begin(), row.end(), 1.0 / static_cast<double>(row.size()));
                } else {
                    const double denom = static_cast<double>(total) +
                                         alpha * static_cast<double>(tallies.size());
                    for (std::size_t v = 0; v < tallies.size(); ++v)
                        row[v] = (static_cast<double>(tallies[v]) + alpha) / denom;
                }
                table[feature] = std::move(row);
            }
            tables[label] = std::move(table);
        }
        return tables;
    };

    return KnowledgeBase(std::move(schema), build_tables(os_counts), build_tables(software_counts),
                         alpha);
}

double observation_likelihood(const KnowledgeBase& kb, const Observation& obs,
                              const Configuration& config) {
    validate_observation(obs, kb.schema());
    double product = 1.0;
    for (const auto& [feature, value] : obs.values) {
        if (kb.schema().is_os_feature(feature)) {
            product *= kb.os_probability(config.os, feature, value);
        } else {
            for (const auto& software : config.software)
                product *= kb.software_probability(software, feature, value);
        }
    }
    return product;
}

double log_likelihood(const KnowledgeBase& kb, const Observation& obs, const Configuration& config) {
    validate_observation(obs, kb.schema());
    double sum = 0.0;
    for (const auto& [feature, value] : obs.values) {
        if (kb.schema().is_os_feature(feature)) {
            const double p = kb.os_probability(config.os, feature, value);
            if (p == 0.0) return -std::numeric_limits<double>::infinity();
            sum += std::log(p);
        } else {
            for (const auto& software : config.software) {
                const double p = kb.software_probability(software, feature, value);
                if (p == 0.0) return -std::numeric_limits<double>::infinity();
                sum += std::log(p);
            }
        }
    }
    return sum;
}

namespace {

using nlohmann::json;

json require_object(const json& doc, const char* what) {
    if (!doc.is_object()) raise(Errc::format_error, std::string(what) + " must be a JSON object");
    return doc;
}

void reject_unknown_keys(const json& doc, std::initializer_list<const char*> allowed,
                         const char* what) {
    for (const auto& [key, value] : doc.items()) {
        if (std::find_if(allowed.begin(), allowed.end(),
                         [&](const char* k) { return key == k; }) == allowed.end())
            raise(Errc::format_error, std::string(what) + " document has unknown key '" + key + "'");
    }
}

std::vector<std::string> string_list(const json& value, const char* what) {
    if (!value.is_array()) raise(Errc::format_error, std::string(what) + " must be an array of strings");
    std::vector<std::string> out;
    for (const auto& item : value) {
        if (!item.is_string()) raise(Errc::format_error, std::string(what) + " must be an array of strings");
        out.push_back(item.get<std::string>());
    }
    return out;
}

FeatureSchema schema_from_node(const json& node) {
    require_object(node, "schema");
    reject_unknown_keys(node, {"os_features", "software_features", "domains"}, "schema");
    FeatureSchema schema;
    if (node.contains("os_features")) schema.os_features = string_list(node["os_features"], "\"os_features\"");
    if (node.contains("software_features"))
        schema.software_features = string_list(node["software_features"], "\"software_features\"");
    if (!node.contains("domains") || !node["domains"].is_object())
        raise(Errc::format_error, "schema needs a \"domains\" object");
    for (const auto& [feature, domain] : node["domains"].items())
        schema.domains[feature] = string_list(domain, "feature domain");
    schema.validate();
    return schema;
}

json schema_to_node(const FeatureSchema& schema) {
    json node;
    node["os_features"] = schema.os_features;
    node["software_features"] = schema.software_features;
    node["domains"] = json::object();
    for (const auto& [feature, domain] : schema.domains) node["domains"][feature] = domain;
    return node;
}

std::map<std::string, KnowledgeBase::LabelTable> tables_from_node(const json& node,
                                                                  const FeatureSchema& schema,
                                                                  const char* what) {
    require_object(node, what);
    std::map<std::string, KnowledgeBase::LabelTable> tables;
    for (const auto& [label, per_feature] : node.items()) {
        require_object(per_feature, what);
        KnowledgeBase::LabelTable table;
        for (const auto& [feature, cells] : per_feature.items()) {
            require_object(cells, what);
            const auto& domain = schema.domain_of(feature);
            KnowledgeBase::Row row(domain.size(), 0.0);
            std::size_t filled = 0;
            for (const auto& [value, prob] : cells.items()) {
                if (!prob.is_number())
                    raise(Errc::format_error, std::string(what) + " probability for '" + value +
                                                  "' is not a number");
                row[schema.value_index(feature, value)] = prob.get<double>();
                ++filled;
            }
            if (filled != domain.size())
                raise(Errc::schema_violation, std::string(what) + " row for '" + label + "'/'" +
                                                  feature + "' does not cover the whole domain");
            table[feature] = std::move(row);
        }
        tables[label] = std::move(table);
    }
    return tables;
}

json tables_to_node(const std::map<std::string, KnowledgeBase::LabelTable>& tables,
                    const FeatureSchema& schema) {
    json node = json::object();
    for (const auto& [label, table] : tables) {
        json per_feature = json::object();
        for (const auto& [feature, row] : table) {
            const auto& domain = schema.domain_of(feature);
            json cells = json::object();
            for (std::size_t v = 0; v < domain.size(); ++v) cells[domain[v]] = row[v];
            per_feature[feature] = std::move(cells);
        }
        node[label] = std::move(per_feature);
    }
    return node;
}

json parse_document(std::string_view text, const char* what) {
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded()) raise(Errc::format_error, std::string(what) + " document is not valid JSON");
    if (!doc.is_object()) raise(Errc::format_error, std::string(what) + " document must be a JSON object");
    if (!doc.contains("version") || !doc["version"].is_number_integer() || doc["version"] != 1)
        raise(Errc::format_error, std::string(what) + " document needs \"version\": 1");
    return doc;
}

} // namespace

KnowledgeBase kb_from_json(std::string_view text) {
    json doc = parse_document(text, "knowledge base");
    reject_unknown_keys(doc, {"version", "schema", "alpha", "os_tables", "software_tables"},
                        "knowledge base");
    if (!doc.contains("schema")) raise(Errc::format_error, "knowledge base document needs \"schema\"");
    FeatureSchema schema = schema_from_node(doc["schema"]);
    double alpha = 1.0;
    if (doc.contains("alpha")) {
        if (!doc["alpha"].is_number()) raise(Errc::format_error, "\"alpha\" must be a number");
        alpha = doc["alpha"].get<double>();
    }
    auto os_tables = doc.contains("os_tables") ? tables_from_node(doc["os_tables"], schema, "os_tables")
                                               : std::map<std::string, KnowledgeBase::LabelTable>{};
    auto software_tables = doc.contains("software_tables")
                               ? tables_from_node(doc["software_tables"], schema, "software_tables")
                               : std::map<std::string, KnowledgeBase::LabelTable>{};
    return KnowledgeBase(std::move(schema), std::move(os_tables), std::move(software_tables), alpha);
}

std::string kb_to_json(const KnowledgeBase& kb) {
    json doc;
    doc["version"] = 1;
    doc["schema"] = schema_to_node(kb.schema());
    doc["alpha"] = kb.alpha();
    doc["os_tables"] = tables_to_node(kb.os_tables(), kb.schema());
    doc["software_tables"] = tables_to_node(kb.software_tables(), kb.schema());
    return doc.dump(2) + "\n";
}

FeatureSchema schema_from_json(std::string_view text) {
    json doc = parse_document(text, "schema");
    reject_unknown_keys(doc, {"version", "os_features", "software_features", "domains"}, "schema");
    json inner = doc;
    inner.erase("version");
    return schema_from_node(inner);
}

std::string schema_to_json(const FeatureSchema& schema) {
    json doc = schema_to_node(schema);
    doc["version"] = 1;
    return doc.dump(2) + "\n";
}

namespace {

std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream stream(line);
    while (std::getline(stream, cell, ',')) {
        // Trim surrounding blanks; the declared fields never need quoting.
        std::size_t begin = cell.find_first_not_of(" \t\r");
        std::size_t end = cell.find_last_not_of(" \t\r");
        cells.push_back(begin == std::string::npos ? "" : cell.substr(begin, end - begin + 1));
    }
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t pos = text.find('\n', start);
        if (pos == std::string_view::npos) pos = text.size();
        std::string_view line = text.substr(start, pos - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.emplace_back(line);
        start = pos + 1;
    }
    return lines;
}

} // namespace

std::vector<TrainingRecord> records_from_csv(std::string_view csv_text, const FeatureSchema& schema) {
    schema.validate();
    auto lines = split_lines(csv_text);
    if (lines.empty()) raise(Errc::format_error, "corpus has no header row");
    auto header = split_csv_row(lines[0]);
    if (header.size() < 3 || header[0] != "kind" || header[1] != "label" || header[2] != "src_addr")
        raise(Errc::format_error, "corpus header must start with kind,label,src_addr");
    std::vector<std::string> features(header.begin() + 3, header.end());
    for (const auto& feature : features) {
        if (!schema.has_feature(feature))
            raise(Errc::unknown_field, "corpus column '" + feature + "' is not a schema feature");
    }

    std::vector<TrainingRecord> records;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const std::string where = "corpus row " + std::to_string(i);
        auto cells = split_csv_row(lines[i]);
        if (cells.size() != header.size())
            raise(Errc::malformed_row, where + " has " + std::to_string(cells.size()) +
                                           " cells, expected " + std::to_string(header.size()));
        LabelKind kind;
        if (cells[0] == "os") {
            kind = LabelKind::os;
        } else if (cells[0] == "software") {
            kind = LabelKind::software;
        } else {
            raise(Errc::malformed_row, where + " has unknown kind '" + cells[0] + "'");
        }
        if (cells[1].empty()) raise(Errc::malformed_row, where + " has an empty label");
        try {
            Observation obs{NodeIdentity({cells[2]}), {}};
            for (std::size_t f = 0; f < features.size(); ++f) {
                if (!cells[f + 3].empty()) obs.values[features[f]] = cells[f + 3];
            }
            if (obs.values.empty())
                raise(Errc::malformed_row, "no feature values present");
            validate_observation(obs, schema);
            records.push_back(TrainingRecord{kind, cells[1], std::move(obs)});
        } catch (const Error& e) {
            raise(e.code(), where + ": " + e.detail());
        }
    }
    return records;
}

} // namespace recon
