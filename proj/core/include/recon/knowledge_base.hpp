#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "recon/config_space.hpp"

namespace recon {

// Feature vocabulary: which features describe an operating system, which
// describe a software package, and each feature's finite value domain.
struct FeatureSchema {
    std::vector<std::string> os_features;
    std::vector<std::string> software_features;
    std::map<std::string, std::vector<std::string>> domains;

    bool is_os_feature(const std::string& feature) const;
    bool is_software_feature(const std::string& feature) const;
    bool has_feature(const std::string& feature) const;
    // Throws schema_violation for unknown features.
    const std::vector<std::string>& domain_of(const std::string& feature) const;
    // Index of a value within its feature's domain; throws schema_violation.
    std::size_t value_index(const std::string& feature, const std::string& value) const;

    // Feature lists duplicate-free and disjoint, every feature has a
    // non-empty duplicate-free domain.
    void validate() const;

    bool operator==(const FeatureSchema&) const = default;
};

// One fingerprint sample: the feature values seen for a node. Features
// not present are simply unobserved, not errors.
struct Observation {
    NodeIdentity node;
    std::map<std::string, std::string> values;

    bool operator==(const Observation&) const = default;
};

// Every feature known to the schema and every value in its domain.  An
// observation with no features is valid here and carries no evidence;
// the ingest and corpus readers reject such rows at the boundary.
void validate_observation(const Observation& obs, const FeatureSchema& schema);

enum class LabelKind { os, software };

// One labeled corpus sample: the label names the OS or software the
// observed values were captured from.
struct TrainingRecord {
    LabelKind kind;
    std::string label;
    Observation observation;
};

// Conditional probability tables Pr(feature = value | label), one table
// row per (label, feature), aligned with the feature's domain order.
// Immutable after construction; concurrent readers are safe.
class KnowledgeBase {
public:
    using Row = std::vector<double>;                 // domain-order probabilities
    using LabelTable = std::map<std::string, Row>;   // feature -> row

    KnowledgeBase(FeatureSchema schema, std::map<std::string, LabelTable> os_tables,
                  std::map<std::string, LabelTable> software_tables, double alpha);

    const FeatureSchema& schema() const noexcept { return schema_; }
    double alpha() const noexcept { return alpha_; }
    const std::map<std::string, LabelTable>& os_tables() const noexcept { return os_tables_; }
    const std::map<std::string, LabelTable>& software_tables() const noexcept {
        return software_tables_;
    }

    // Pr(feature = value | os). For an OS with no table: the uniform row
    // when alpha > 0 (smoothing covers unseen labels), UnknownLabel when
    // alpha = 0.
    double os_probability(const std::string& os, const std::string& feature,
                          const std::string& value) const;
    double software_probability(const std::string& software, const std::string& feature,
                                const std::string& value) const;

    bool has_exact_zero_cells() const noexcept;

private:
    FeatureSchema schema_;
    std::map<std::string, LabelTable> os_tables_;
    std::map<std::string, LabelTable> software_tables_;
    double alpha_ = 1.0;
};

// Laplace-smoothed estimation from a labeled corpus:
// Pr(f=v|label) = (count + alpha) / (total + alpha * |domain(f)|).
// Labels come from the records; rows with zero total count fall back to
// the uniform distribution. OS-labeled records may carry only OS
// features, software-labeled records only software features.
KnowledgeBase estimate_kb(const std::vector<TrainingRecord>& records, FeatureSchema schema,
                          double alpha);

// Pr(observation | configuration): product over present OS features of
// Pr(f=v | config.os), times, for each software in the configuration,
// the product over present software features of Pr(f=v | software).
// Absent features and the empty software set contribute factor 1.
double observation_likelihood(const KnowledgeBase& kb, const Observation& obs,
                              const Configuration& config);

// ln of the above, summed factor-wise; -infinity only when alpha = 0
// produced a true zero factor.
double log_likelihood(const KnowledgeBase& kb, const Observation& obs,
                      const Configuration& config);

// Versioned JSON document:
// {"version":1,"schema":{...},"alpha":1.0,
//  "os_tables":{os:{feature:{value:prob}}},"software_tables":{...}}.
// Probabilities round-trip exactly. Loading re-validates all invariants.
KnowledgeBase kb_from_json(std::string_view text);
std::string kb_to_json(const KnowledgeBase& kb);

FeatureSchema schema_from_json(std::string_view text);
std::string schema_to_json(const FeatureSchema& schema);

// Corpus CSV: header `kind,label,src_addr,<feature names...>`; kind is
// "os" or "software"; empty cells mean the feature was not observed.
// Any malformed row is fatal and names the offending row.
std::vector<TrainingRecord> records_from_csv(std::string_view csv_text,
                                             const FeatureSchema& schema);

} // namespace recon
