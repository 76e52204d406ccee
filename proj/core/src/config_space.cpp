#include "recon/config_space.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "recon/errors.hpp"

namespace recon {

namespace {

bool parse_octet(std::string_view part) {
    if (part.empty() || part.size() > 3) return false;
    int value = 0;
    for (char c : part) {
        if (!std::isdigit(static_cast<unsigned char>(c))) return false;
        value = value * 10 + (c - '0');
    }
    return value <= 255;
}

std::vector<std::string_view> split(std::string_view text, char sep) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = text.find(sep, start);
        if (pos == std::string_view::npos) {
            parts.push_back(text.substr(start));
            break;
        }
        parts.push_back(text.substr(start, pos - start));
        start = pos + 1;
    }
    return parts;
}

} // namespace

bool is_ipv4_address(std::string_view text) noexcept {
    auto parts = split(text, '.');
    if (parts.size() != 4) return false;
    return std::all_of(parts.begin(), parts.end(), parse_octet);
}

bool is_mac_address(std::string_view text) noexcept {
    auto parts = split(text, ':');
    if (parts.size() != 6) return false;
    return std::all_of(parts.begin(), parts.end(), [](std::string_view p) {
        return p.size() == 2 && std::isxdigit(static_cast<unsigned char>(p[0])) &&
               std::isxdigit(static_cast<unsigned char>(p[1]));
    });
}

NodeIdentity::NodeIdentity(std::vector<std::string> addresses) : addresses_(std::move(addresses)) {
    if (addresses_.empty()) raise(Errc::invalid_argument, "node identity needs at least one address");
    for (const auto& addr : addresses_) {
        if (!is_ipv4_address(addr) && !is_mac_address(addr))
            raise(Errc::invalid_argument, "not an IPv4 or MAC address: '" + addr + "'");
    }
    std::sort(addresses_.begin(), addresses_.end());
    auto dup = std::adjacent_find(addresses_.begin(), addresses_.end());
    if (dup != addresses_.end())
        raise(Errc::invalid_argument, "duplicate address in node identity: '" + *dup + "'");
}

bool NodeIdentity::has_address(std::string_view addr) const noexcept {
    return std::binary_search(addresses_.begin(), addresses_.end(), addr);
}

std::string Configuration::label() const {
    if (software.empty()) return os;
    std::string out = os + "[";
    for (std::size_t i = 0; i < software.size(); ++i) {
        if (i > 0) out += "+";
        out += software[i];
    }
    out += "]";
    return out;
}

Configuration make_configuration(std::string os, std::vector<std::string> software) {
    std::sort(software.begin(), software.end());
    auto dup = std::adjacent_find(software.begin(), software.end());
    if (dup != software.end())
        raise(Errc::inadmissible_configuration, "duplicate software '" + *dup + "' in configuration");
    return Configuration{std::move(os), std::move(software)};
}

namespace {

// Universe labels appear in configuration labels ("os[s1+s2]") and CSV
// columns, so the separator characters are off limits.
void check_label(const std::string& label, const char* what) {
    if (label.empty()) raise(Errc::invalid_argument, std::string(what) + " universe has an empty label");
    if (label.find_first_of(",+[]\r\n") != std::string::npos)
        raise(Errc::invalid_argument,
              std::string(what) + " label '" + label + "' contains a reserved character");
}

void check_universe(const std::vector<std::string>& universe, const char* what) {
    if (universe.empty()) raise(Errc::invalid_argument, std::string(what) + " universe is empty");
    std::set<std::string> seen;
    for (const auto& label : universe) {
        check_label(label, what);
        if (!seen.insert(label).second)
            raise(Errc::invalid_argument, std::string(what) + " universe has duplicate label '" + label + "'");
    }
}

// Full-product cardinality |O| * 2^|S| when it fits under the bound.
std::optional<std::size_t> product_size(std::size_t os_count, std::size_t software_count,
                                        std::size_t bound) {
    if (software_count >= 63) return std::nullopt;
    const std::size_t subsets = std::size_t{1} << software_count;
    if (os_count > bound / subsets) return std::nullopt;
    return os_count * subsets;
}

// Subset-as-bitmask comparison over the software universe: compare the
// highest differing bit, ascending mask order.
bool subset_mask_less(const std::vector<bool>& a, const std::vector<bool>& b) {
    for (std::size_t i = a.size(); i-- > 0;) {
        if (a[i] != b[i]) return b[i];
    }
    return false;
}

} // namespace

ConfigurationSpace::ConfigurationSpace(std::vector<std::string> os_universe,
                                       std::vector<std::string> software_universe,
                                       std::optional<std::vector<Configuration>> admissible,
                                       std::size_t max_size)
    : os_universe_(std::move(os_universe)), software_universe_(std::move(software_universe)) {
    check_universe(os_universe_, "OS");
    // The software universe, unlike the OS universe, may be empty.
    std::set<std::string> seen_software;
    for (const auto& label : software_universe_) {
        check_label(label, "software");
        if (!seen_software.insert(label).second)
            raise(Errc::invalid_argument, "software universe has duplicate label '" + label + "'");
    }

    std::map<std::string, std::size_t> os_rank;
    for (std::size_t i = 0; i < os_universe_.size(); ++i) os_rank[os_universe_[i]] = i;
    std::map<std::string, std::size_t> software_rank;
    for (std::size_t i = 0; i < software_universe_.size(); ++i) software_rank[software_universe_[i]] = i;

    if (admissible.has_value()) {
        explicit_admissible_ = true;
        configurations_ = std::move(*admissible);
        if (configurations_.size() > max_size)
            raise(Errc::space_too_large, "admissible list has " + std::to_string(configurations_.size()) +
                                             " configurations, bound is " + std::to_string(max_size));
        // Validate against universes, then sort into canonical enumeration order.
        std::vector<std::pair<std::pair<std::size_t, std::vector<bool>>, Configuration>> keyed;
        keyed.reserve(configurations_.size());
        for (auto& config : configurations_) {
            auto os_it = os_rank.find(config.os);
            if (os_it == os_rank.end())
                raise(Errc::inadmissible_configuration, "OS '" + config.os + "' not in universe");
            std::vector<bool> mask(software_universe_.size(), false);
            std::sort(config.software.begin(), config.software.end());
            for (const auto& s : config.software) {
                auto it = software_rank.find(s);
                if (it == software_rank.end())
                    raise(Errc::inadmissible_configuration, "software '" + s + "' not in universe");
                if (mask[it->second])
                    raise(Errc::inadmissible_configuration, "duplicate software '" + s + "' in configuration");
                mask[it->second] = true;
            }
            keyed.emplace_back(std::make_pair(os_it->second, std::move(mask)), std::move(config));
        }
        std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
            if (a.first.first != b.first.first) return a.first.first < b.first.first;
            return subset_mask_less(a.first.second, b.first.second);
        });
        configurations_.clear();
        for (auto& [key, config] : keyed) configurations_.push_back(std::move(config));
        for (std::size_t i = 0; i + 1 < configurations_.size(); ++i) {
            if (configurations_[i] == configurations_[i + 1])
                raise(Errc::inadmissible_configuration,
                      "duplicate configuration '" + configurations_[i].label() + "' in admissible list");
        }
    } else {
        auto total = product_size(os_universe_.size(), software_universe_.size(), max_size);
        if (!total)
            raise(Errc::space_too_large,
                  "full product space exceeds bound " + std::to_string(max_size) +
                      "; supply an explicit admissible list");
        configurations_.reserve(*total);
        const std::size_t subsets = std::size_t{1} << software_universe_.size();
        for (const auto& os : os_universe_) {
            for (std::size_t mask = 0; mask < subsets; ++mask) {
                std::vector<std::string> software;
                for (std::size_t bit = 0; bit < software_universe_.size(); ++bit) {
                    if (mask & (std::size_t{1} << bit)) software.push_back(software_universe_[bit]);
                }
                std::sort(software.begin(), software.end());
                configurations_.push_back(Configuration{os, std::move(software)});
            }
        }
    }

    for (std::size_t i = 0; i < configurations_.size(); ++i) index_[configurations_[i]] = i;
}

std::optional<std::size_t> ConfigurationSpace::index_of(const Configuration& config) const {
    auto it = index_.find(config);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

void ConfigurationSpace::validate(const Configuration& config) const {
    if (!index_.contains(config))
        raise(Errc::inadmissible_configuration, "configuration '" + config.label() + "' not in space");
}

bool ConfigurationSpace::operator==(const ConfigurationSpace& other) const {
    return os_universe_ == other.os_universe_ && software_universe_ == other.software_universe_ &&
           configurations_ == other.configurations_;
}

std::vector<Configuration> enumerate_space(const ConfigurationSpace& space, std::size_t max_size) {
    if (space.size() > max_size)
        raise(Errc::space_too_large, "space has " + std::to_string(space.size()) +
                                         " configurations, bound is " + std::to_string(max_size));
    return space.configurations();
}

Belief::Belief(SpacePtr space, std::vector<double> mass)
    : space_(std::move(space)), mass_(std::move(mass)) {
    if (!space_) raise(Errc::invalid_argument, "belief needs a space");
    if (mass_.size() != space_->size())
        raise(Errc::invalid_argument, "belief mass has " + std::to_string(mass_.size()) +
                                          " entries for a space of " + std::to_string(space_->size()));
    double total = 0.0;
    for (double p : mass_) {
        if (!(p >= 0.0 && p <= 1.0) || !std::isfinite(p))
            raise(Errc::invalid_argument, "belief mass outside [0,1]");
        total += p;
    }
    if (std::abs(total - 1.0) > kSumTolerance)
        raise(Errc::invalid_argument, "belief mass sums to " + std::to_string(total) + ", expected 1");
}

double Belief::mass_of(const Configuration& config) const {
    auto index = space_->index_of(config);
    if (!index)
        raise(Errc::inadmissible_configuration, "configuration '" + config.label() + "' not in space");
    return mass_[*index];
}

Belief uniform_belief(SpacePtr space) {
    if (!space) raise(Errc::invalid_argument, "uniform_belief needs a space");
    const std::size_t n = space->size();
    std::vector<double> mass(n, 1.0 / static_cast<double>(n));
    return Belief(std::move(space), std::move(mass));
}

void NetworkBelief::set(const NodeIdentity& node, Belief belief) {
    per_node_.insert_or_assign(node, std::move(belief));
}

const Belief& NetworkBelief::at(const NodeIdentity& node) const {
    auto it = per_node_.find(node);
    if (it == per_node_.end()) raise(Errc::unknown_node, "no belief for node '" + node.primary() + "'");
    return it->second;
}

double joint_mass(const NetworkBelief& network,
                  const std::map<NodeIdentity, Configuration>& assignment) {
    double product = 1.0;
    for (const auto& [node, belief] : network.per_node()) {
        auto it = assignment.find(node);
        if (it == assignment.end())
            raise(Errc::unknown_node, "assignment misses node '" + node.primary() + "'");
        product *= belief.mass_of(it->second);
    }
    return product;
}

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& doc, std::initializer_list<const char*> allowed,
                         const char* what) {
    for (const auto& [key, value] : doc.items()) {
        if (std::find_if(allowed.begin(), allowed.end(),
                         [&](const char* k) { return key == k; }) == allowed.end())
            raise(Errc::format_error, std::string(what) + " document has unknown key '" + key + "'");
    }
}

json parse_json(std::string_view text, const char* what) {
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded()) raise(Errc::format_error, std::string(what) + " document is not valid JSON");
    return doc;
}

void check_version(const json& doc, const char* what) {
    if (!doc.contains("version") || !doc["version"].is_number_integer() || doc["version"] != 1)
        raise(Errc::format_error, std::string(what) + " document needs \"version\": 1");
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

} // namespace

ConfigurationSpace space_from_json(std::string_view text) {
    json doc = parse_json(text, "space");
    if (!doc.is_object()) raise(Errc::format_error, "space document must be a JSON object");
    reject_unknown_keys(doc, {"version", "os", "software", "admissible"}, "space");
    check_version(doc, "space");
    if (!doc.contains("os") || !doc.contains("software"))
        raise(Errc::format_error, "space document needs \"os\" and \"software\" lists");
    auto os = string_list(doc["os"], "\"os\"");
    auto software = string_list(doc["software"], "\"software\"");

    std::optional<std::vector<Configuration>> admissible;
    if (doc.contains("admissible")) {
        if (!doc["admissible"].is_array())
            raise(Errc::format_error, "\"admissible\" must be an array of [os, [software...]] pairs");
        admissible.emplace();
        for (const auto& entry : doc["admissible"]) {
            if (!entry.is_array() || entry.size() != 2 || !entry[0].is_string())
                raise(Errc::format_error, "\"admissible\" entries must be [os, [software...]] pairs");
            admissible->push_back(
                make_configuration(entry[0].get<std::string>(), string_list(entry[1], "admissible software")));
        }
    }
    return ConfigurationSpace(std::move(os), std::move(software), std::move(admissible));
}

std::string space_to_json(const ConfigurationSpace& space) {
    json doc;
    doc["version"] = 1;
    doc["os"] = space.os_universe();
    doc["software"] = space.software_universe();
    if (space.has_explicit_admissible()) {
        json list = json::array();
        for (const auto& config : space.configurations()) {
            list.push_back(json::array({config.os, config.software}));
        }
        doc["admissible"] = std::move(list);
    }
    return doc.dump(2) + "\n";
}

} // namespace recon
