#include "recon/observation_ingest.hpp"

#include <algorithm>
#include <charconv>
#include <optional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "recon/errors.hpp"

namespace recon {

void IngestConfig::validate() const {
    if (ttl_classes.empty()) raise(Errc::invalid_argument, "ttl_classes is empty");
    int previous = 0;
    for (int cls : ttl_classes) {
        if (cls < 1 || cls > 255)
            raise(Errc::invalid_argument, "TTL class " + std::to_string(cls) + " outside [1,255]");
        if (cls <= previous)
            raise(Errc::invalid_argument, "ttl_classes must be strictly increasing");
        previous = cls;
    }

    if (!window_bins.empty()) {
        std::uint32_t expected_lo = 0;
        std::set<std::string> labels;
        for (const auto& bin : window_bins) {
            if (bin.label.empty()) raise(Errc::invalid_argument, "window bin with empty label");
            if (!labels.insert(bin.label).second)
                raise(Errc::invalid_argument, "duplicate window bin label '" + bin.label + "'");
            if (bin.lo != expected_lo)
                raise(Errc::invalid_argument, "window bins must tile [0,65536) without gaps; bin '" +
                                                  bin.label + "' starts at " + std::to_string(bin.lo) +
                                                  ", expected " + std::to_string(expected_lo));
            if (bin.hi <= bin.lo)
                raise(Errc::invalid_argument, "window bin '" + bin.label + "' is empty");
            expected_lo = bin.hi;
        }
        if (expected_lo != 65536)
            raise(Errc::invalid_argument, "window bins must end at 65536, last ends at " +
                                              std::to_string(expected_lo));
    }

    if (field_mapping.empty()) raise(Errc::invalid_argument, "field_mapping is empty");
    std::set<std::string> raw_fields;
    std::set<std::string> features;
    bool uses_window = false;
    for (const auto& mapping : field_mapping) {
        if (mapping.raw_field.empty()) raise(Errc::invalid_argument, "field mapping with empty raw field");
        if (mapping.raw_field == "src_addr")
            raise(Errc::invalid_argument, "raw field name 'src_addr' is reserved");
        if (!raw_fields.insert(mapping.raw_field).second)
            raise(Errc::invalid_argument, "raw field '" + mapping.raw_field + "' mapped twice");
        if (mapping.feature.empty()) raise(Errc::invalid_argument, "field mapping with empty feature");
        if (!features.insert(mapping.feature).second)
            raise(Errc::invalid_argument, "feature '" + mapping.feature + "' is the target of two mappings");
        if (mapping.transform == FieldTransform::window) uses_window = true;
    }
    if (uses_window && window_bins.empty())
        raise(Errc::invalid_argument, "a window transform is declared but window_bins is empty");
}

IngestConfig identity_ingest(const FeatureSchema& schema) {
    schema.validate();
    IngestConfig config;
    for (const auto* list : {&schema.os_features, &schema.software_features}) {
        for (const auto& feature : *list)
            config.field_mapping.push_back(FieldMapping{feature, feature, FieldTransform::verbatim});
    }
    config.validate();
    return config;
}

int normalize_ttl(int observed, const std::vector<int>& classes) {
    if (observed < 1 || observed > 255)
        raise(Errc::out_of_range, "observed TTL " + std::to_string(observed) + " outside [1,255]");
    for (int cls : classes) {
        if (cls >= observed) return cls;
    }
    raise(Errc::out_of_range, "no TTL class >= " + std::to_string(observed));
}

std::string discretize_window(std::uint32_t ws, const std::vector<WindowBin>& bins) {
    if (ws > 65535)
        raise(Errc::out_of_range, "window size " + std::to_string(ws) + " outside [0,65535]");
    for (const auto& bin : bins) {
        if (ws >= bin.lo && ws < bin.hi) return bin.label;
    }
    raise(Errc::out_of_range, "no window bin contains " + std::to_string(ws));
}

namespace {

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

std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream stream(line);
    while (std::getline(stream, cell, ',')) {
        std::size_t begin = cell.find_first_not_of(" \t\r");
        std::size_t end = cell.find_last_not_of(" \t\r");
        cells.push_back(begin == std::string::npos ? "" : cell.substr(begin, end - begin + 1));
    }
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

std::optional<long> parse_integer(const std::string& text) {
    long value = 0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end) return std::nullopt;
    return value;
}

} // namespace

ParsedStream parse_stream(std::string_view csv_text, const IngestConfig& config,
                          const FeatureSchema& schema) {
    config.validate();
    schema.validate();

    std::map<std::string, const FieldMapping*> by_raw_field;
    for (const auto& mapping : config.field_mapping) {
        if (!schema.has_feature(mapping.feature))
            raise(Errc::unknown_field, "ingest maps '" + mapping.raw_field +
                                           "' to '" + mapping.feature + "', which is not a schema feature");
        // Transforms must land inside the target feature's domain, else
        // every row would be dropped for a configuration mistake.
        const auto& domain = schema.domain_of(mapping.feature);
        auto in_domain = [&](const std::string& value) {
            return std::find(domain.begin(), domain.end(), value) != domain.end();
        };
        if (mapping.transform == FieldTransform::ttl) {
            for (int cls : config.ttl_classes) {
                if (!in_domain(std::to_string(cls)))
                    raise(Errc::schema_violation, "TTL class " + std::to_string(cls) +
                                                      " is not in the domain of '" + mapping.feature + "'");
            }
        } else if (mapping.transform == FieldTransform::window) {
            for (const auto& bin : config.window_bins) {
                if (!in_domain(bin.label))
                    raise(Errc::schema_violation, "window bin '" + bin.label +
                                                      "' is not in the domain of '" + mapping.feature + "'");
            }
        }
        by_raw_field[mapping.raw_field] = &mapping;
    }

    auto lines = split_lines(csv_text);
    if (lines.empty()) raise(Errc::format_error, "observation file has no header row");
    auto header = split_csv_row(lines[0]);
    if (header.empty() || header[0] != "src_addr")
        raise(Errc::format_error, "observation header must start with src_addr");
    std::vector<const FieldMapping*> columns;
    std::set<std::string> seen_columns;
    for (std::size_t c = 1; c < header.size(); ++c) {
        if (!seen_columns.insert(header[c]).second)
            raise(Errc::format_error, "observation header repeats column '" + header[c] + "'");
        auto it = by_raw_field.find(header[c]);
        if (it == by_raw_field.end())
            raise(Errc::unknown_field, "observation column '" + header[c] + "' is not a declared raw field");
        columns.push_back(it->second);
    }

    ParsedStream out;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const std::size_t row = out.report.rows_total + 1;
        out.report.rows_total += 1;

        auto drop = [&](Errc code, const std::string& why) {
            out.report.rows_dropped += 1;
            out.report.issues.push_back(
                ParseIssue{row, std::string(errc_name(code)) + ": " + why});
        };

        auto cells = split_csv_row(lines[i]);
        if (cells.size() != header.size()) {
            drop(Errc::malformed_row, "expected " + std::to_string(header.size()) + " cells, got " +
                                          std::to_string(cells.size()));
            continue;
        }
        if (!is_ipv4_address(cells[0]) && !is_mac_address(cells[0])) {
            drop(Errc::malformed_row, "'" + cells[0] + "' is not an IPv4 or MAC address");
            continue;
        }

        Observation obs{NodeIdentity({cells[0]}), {}};
        bool dropped = false;
        for (std::size_t c = 0; c < columns.size() && !dropped; ++c) {
            const std::string& raw = cells[c + 1];
            if (raw.empty()) continue; // feature absent
            const FieldMapping& mapping = *columns[c];
            try {
                switch (mapping.transform) {
                case FieldTransform::ttl: {
                    auto value = parse_integer(raw);
                    if (!value) raise(Errc::malformed_row, "TTL '" + raw + "' is not an integer");
                    obs.values[mapping.feature] =
                        std::to_string(normalize_ttl(static_cast<int>(*value), config.ttl_classes));
                    break;
                }
                case FieldTransform::window: {
                    auto value = parse_integer(raw);
                    if (!value || *value < 0)
                        raise(Errc::malformed_row, "window size '" + raw + "' is not a non-negative integer");
                    if (*value > 65535)
                        raise(Errc::out_of_range, "window size " + raw + " outside [0,65535]");
                    obs.values[mapping.feature] =
                        discretize_window(static_cast<std::uint32_t>(*value), config.window_bins);
                    break;
                }
                case FieldTransform::verbatim: {
                    schema.value_index(mapping.feature, raw); // throws on a foreign value
                    obs.values[mapping.feature] = raw;
                    break;
                }
                }
            } catch (const Error& e) {
                drop(e.code(), "column '" + mapping.raw_field + "': " + e.detail());
                dropped = true;
            }
        }
        if (dropped) continue;
        if (obs.values.empty()) {
            drop(Errc::malformed_row, "no features present");
            continue;
        }
        out.streams[obs.node].push_back(std::move(obs));
    }
    return out;
}

std::string stream_to_csv(const std::map<NodeIdentity, std::vector<Observation>>& streams,
                          const FeatureSchema& schema) {
    schema.validate();
    std::vector<std::string> features;
    for (const auto* list : {&schema.os_features, &schema.software_features})
        features.insert(features.end(), list->begin(), list->end());

    std::string out = "src_addr";
    for (const auto& feature : features) {
        out += ",";
        out += feature;
    }
    out += "\n";
    for (const auto& [node, observations] : streams) {
        for (const auto& obs : observations) {
            out += node.primary();
            for (const auto& feature : features) {
                out += ",";
                auto it = obs.values.find(feature);
                if (it != obs.values.end()) out += it->second;
            }
            out += "\n";
        }
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

FieldTransform transform_from_name(const std::string& name) {
    if (name == "ttl") return FieldTransform::ttl;
    if (name == "window") return FieldTransform::window;
    if (name == "verbatim") return FieldTransform::verbatim;
    raise(Errc::format_error, "unknown transform '" + name + "' (expected ttl, window, or verbatim)");
}

const char* transform_name(FieldTransform transform) {
    switch (transform) {
    case FieldTransform::ttl: return "ttl";
    case FieldTransform::window: return "window";
    case FieldTransform::verbatim: return "verbatim";
    }
    return "verbatim";
}

} // namespace

IngestConfig ingest_from_json(std::string_view text) {
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        raise(Errc::format_error, "ingest document is not a JSON object");
    reject_unknown_keys(doc, {"version", "ttl_classes", "window_bins", "field_mapping"}, "ingest document");
    if (!doc.contains("version") || !doc["version"].is_number_integer() || doc["version"] != 1)
        raise(Errc::format_error, "ingest document needs \"version\": 1");

    IngestConfig config;
    if (doc.contains("ttl_classes")) {
        if (!doc["ttl_classes"].is_array())
            raise(Errc::format_error, "\"ttl_classes\" must be an array of integers");
        config.ttl_classes.clear();
        for (const auto& cls : doc["ttl_classes"]) {
            if (!cls.is_number_integer())
                raise(Errc::format_error, "\"ttl_classes\" must be an array of integers");
            config.ttl_classes.push_back(cls.get<int>());
        }
    }
    if (doc.contains("window_bins")) {
        if (!doc["window_bins"].is_array())
            raise(Errc::format_error, "\"window_bins\" must be an array of objects");
        for (const auto& entry : doc["window_bins"]) {
            if (!entry.is_object()) raise(Errc::format_error, "\"window_bins\" must be an array of objects");
            reject_unknown_keys(entry, {"lo", "hi", "label"}, "window bin");
            if (!entry.contains("lo") || !entry.contains("hi") || !entry.contains("label") ||
                !entry["lo"].is_number_integer() || !entry["hi"].is_number_integer() ||
                !entry["label"].is_string())
                raise(Errc::format_error, "window bin needs integer \"lo\"/\"hi\" and string \"label\"");
            const long lo = entry["lo"].get<long>();
            const long hi = entry["hi"].get<long>();
            if (lo < 0 || hi < 0 || lo > 65536 || hi > 65536)
                raise(Errc::format_error, "window bin bounds outside [0,65536]");
            config.window_bins.push_back(WindowBin{static_cast<std::uint32_t>(lo),
                                                   static_cast<std::uint32_t>(hi),
                                                   entry["label"].get<std::string>()});
        }
    }
    if (!doc.contains("field_mapping") || !doc["field_mapping"].is_array())
        raise(Errc::format_error, "ingest document needs a \"field_mapping\" array");
    for (const auto& entry : doc["field_mapping"]) {
        if (!entry.is_object()) raise(Errc::format_error, "\"field_mapping\" must be an array of objects");
        reject_unknown_keys(entry, {"raw_field", "feature", "transform"}, "field mapping");
        if (!entry.contains("raw_field") || !entry.contains("feature") ||
            !entry["raw_field"].is_string() || !entry["feature"].is_string())
            raise(Errc::format_error, "field mapping needs string \"raw_field\" and \"feature\"");
        FieldTransform transform = FieldTransform::verbatim;
        if (entry.contains("transform")) {
            if (!entry["transform"].is_string())
                raise(Errc::format_error, "field mapping \"transform\" must be a string");
            transform = transform_from_name(entry["transform"].get<std::string>());
        }
        config.field_mapping.push_back(FieldMapping{entry["raw_field"].get<std::string>(),
                                                    entry["feature"].get<std::string>(), transform});
    }
    config.validate();
    return config;
}

std::string ingest_to_json(const IngestConfig& config) {
    config.validate();
    json doc;
    doc["version"] = 1;
    doc["ttl_classes"] = config.ttl_classes;
    doc["window_bins"] = json::array();
    for (const auto& bin : config.window_bins)
        doc["window_bins"].push_back(json{{"lo", bin.lo}, {"hi", bin.hi}, {"label", bin.label}});
    doc["field_mapping"] = json::array();
    for (const auto& mapping : config.field_mapping)
        doc["field_mapping"].push_back(json{{"raw_field", mapping.raw_field},
                                            {"feature", mapping.feature},
                                            {"transform", transform_name(mapping.transform)}});
    return doc.dump(2) + "\n";
}

} // namespace recon
