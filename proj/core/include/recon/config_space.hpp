#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace recon {

bool is_ipv4_address(std::string_view text) noexcept;
bool is_mac_address(std::string_view text) noexcept;

// A host identity: one or more network addresses (IPv4 or MAC). Addresses
// identify the node only; they never enter likelihoods.
class NodeIdentity {
public:
    explicit NodeIdentity(std::vector<std::string> addresses);

    const std::vector<std::string>& addresses() const noexcept { return addresses_; }
    // Lexicographically smallest address; used as the display/report key.
    const std::string& primary() const noexcept { return addresses_.front(); }
    bool has_address(std::string_view addr) const noexcept;

    bool operator==(const NodeIdentity&) const = default;
    auto operator<=>(const NodeIdentity&) const = default;

private:
    std::vector<std::string> addresses_; // sorted, unique, validated
};

// One candidate host state: an OS plus a set of installed software.
struct Configuration {
    std::string os;
    std::vector<std::string> software; // sorted, unique

    // "os" when the software set is empty, otherwise "os[s1+s2]".
    std::string label() const;

    bool operator==(const Configuration&) const = default;
    auto operator<=>(const Configuration&) const = default;
};

// Sorts the software set and rejects duplicates.
Configuration make_configuration(std::string os, std::vector<std::string> software);

// The hypothesis space for one node. Without an explicit admissible list
// the space is the full product: every OS paired with every software
// subset. Enumeration order is canonical: OS universe order first, then
// software subsets by ascending bitmask over the software universe.
class ConfigurationSpace {
public:
    static constexpr std::size_t kDefaultMaxSize = 100'000;

    ConfigurationSpace(std::vector<std::string> os_universe,
                       std::vector<std::string> software_universe,
                       std::optional<std::vector<Configuration>> admissible = std::nullopt,
                       std::size_t max_size = kDefaultMaxSize);

    const std::vector<std::string>& os_universe() const noexcept { return os_universe_; }
    const std::vector<std::string>& software_universe() const noexcept { return software_universe_; }
    bool has_explicit_admissible() const noexcept { return explicit_admissible_; }

    std::size_t size() const noexcept { return configurations_.size(); }
    const std::vector<Configuration>& configurations() const noexcept { return configurations_; }

    std::optional<std::size_t> index_of(const Configuration& config) const;
    bool is_admissible(const Configuration& config) const { return index_of(config).has_value(); }
    // Throws inadmissible_configuration with a reason.
    void validate(const Configuration& config) const;

    bool operator==(const ConfigurationSpace& other) const;

private:
    std::vector<std::string> os_universe_;
    std::vector<std::string> software_universe_;
    std::vector<Configuration> configurations_;
    std::map<Configuration, std::size_t> index_;
    bool explicit_admissible_ = false;
};

using SpacePtr = std::shared_ptr<const ConfigurationSpace>;

// The canonical enumeration, guarded by the caller's bound.
std::vector<Configuration> enumerate_space(const ConfigurationSpace& space, std::size_t max_size);

// A normalized probability distribution over a configuration space.
// Mass is stored in the space's enumeration order.
class Belief {
public:
    static constexpr double kSumTolerance = 1e-9;

    Belief(SpacePtr space, std::vector<double> mass);

    const SpacePtr& space() const noexcept { return space_; }
    const std::vector<double>& mass() const noexcept { return mass_; }
    double mass_at(std::size_t index) const { return mass_.at(index); }
    double mass_of(const Configuration& config) const;

private:
    SpacePtr space_;
    std::vector<double> mass_;
};

Belief uniform_belief(SpacePtr space);

// Factorized belief over a set of nodes: one marginal per node. The
// implied joint over the product space is the product of marginals.
class NetworkBelief {
public:
    NetworkBelief() = default;
    explicit NetworkBelief(std::map<NodeIdentity, Belief> per_node) : per_node_(std::move(per_node)) {}

    const std::map<NodeIdentity, Belief>& per_node() const noexcept { return per_node_; }
    void set(const NodeIdentity& node, Belief belief);
    const Belief& at(const NodeIdentity& node) const; // throws unknown_node

private:
    std::map<NodeIdentity, Belief> per_node_;
};

// Probability of a full assignment: product of per-node masses.
double joint_mass(const NetworkBelief& network,
                  const std::map<NodeIdentity, Configuration>& assignment);

// Versioned JSON document: {"version":1,"os":[...],"software":[...],
// "admissible":[[os,[sw,...]],...]?}. Unknown keys are rejected.
ConfigurationSpace space_from_json(std::string_view text);
std::string space_to_json(const ConfigurationSpace& space);

} // namespace recon
