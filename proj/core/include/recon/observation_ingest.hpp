#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "recon/config_space.hpp"
#include "recon/knowledge_base.hpp"

namespace recon {

// Right-open interval [lo, hi) carrying a discrete bin label.
struct WindowBin {
    std::uint32_t lo = 0;
    std::uint32_t hi = 0;
    std::string label;

    bool operator==(const WindowBin&) const = default;
};

enum class FieldTransform { ttl, window, verbatim };

struct FieldMapping {
    std::string raw_field;
    std::string feature;
    FieldTransform transform = FieldTransform::verbatim;

    bool operator==(const FieldMapping&) const = default;
};

// How raw capture fields become schema feature values: TTL observations
// snap to canonical initial values, window sizes fall into bins, and
// verbatim fields must already be domain values.
struct IngestConfig {
    std::vector<int> ttl_classes = {64, 128, 255}; // strictly increasing, each 1..255
    std::vector<WindowBin> window_bins;            // partition of [0, 65536)
    std::vector<FieldMapping> field_mapping;

    void validate() const;

    bool operator==(const IngestConfig&) const = default;
};

// Verbatim pass-through of every schema feature under its own name; the
// inverse of serialization for already-normalized observations.
IngestConfig identity_ingest(const FeatureSchema& schema);

// Smallest canonical class >= observed: an observed TTL has decayed by
// hop count from a canonical initial value, never grown.
int normalize_ttl(int observed, const std::vector<int>& classes);

// Label of the unique bin containing ws.
std::string discretize_window(std::uint32_t ws, const std::vector<WindowBin>& bins);

struct ParseIssue {
    std::size_t row = 0; // 1-based data row number (header excluded)
    std::string reason;
};

struct ParseReport {
    std::size_t rows_total = 0;
    std::size_t rows_dropped = 0;
    std::vector<ParseIssue> issues;
};

struct ParsedStream {
    std::map<NodeIdentity, std::vector<Observation>> streams; // file order per node
    ParseReport report;
};

// Parses observation CSV (header `src_addr,<raw field names...>`), maps
// raw fields through the ingest config, and groups rows by node.
// Malformed rows are dropped and accounted for; an undeclared header
// field is fatal.
ParsedStream parse_stream(std::string_view csv_text, const IngestConfig& config,
                          const FeatureSchema& schema);

// Normalized observations back to CSV, one column per schema feature;
// re-parseable with identity_ingest(schema).
std::string stream_to_csv(const std::map<NodeIdentity, std::vector<Observation>>& streams,
                          const FeatureSchema& schema);

// Versioned JSON document: {"version":1,"ttl_classes":[...],
// "window_bins":[{"lo":..,"hi":..,"label":..}],
// "field_mapping":[{"raw_field":..,"feature":..,"transform":..}]}.
IngestConfig ingest_from_json(std::string_view text);
std::string ingest_to_json(const IngestConfig& config);

} // namespace recon
