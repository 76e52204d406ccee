#include "recon/belief_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <sstream>

#include "recon/errors.hpp"
#include "recon/io_util.hpp"

namespace recon {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

} // namespace

DependencyModel::DependencyModel(std::vector<std::string> chain_order)
    : chain_order_(std::move(chain_order)) {
    std::set<std::string> seen;
    for (const auto& software : chain_order_) {
        if (!seen.insert(software).second)
            raise(Errc::invalid_argument, "chain order lists '" + software + "' twice");
    }
}

void DependencyModel::set_conditional(std::string software, std::string os,
                                      std::vector<std::string> present_predecessors,
                                      double probability) {
    if (!std::isfinite(probability) || probability < 0.0 || probability > 1.0)
        raise(Errc::invalid_argument, "conditional probability outside [0,1]");
    std::sort(present_predecessors.begin(), present_predecessors.end());
    conditional_[Key{std::move(software), std::move(os), std::move(present_predecessors)}] =
        probability;
}

double DependencyModel::conditional(const std::string& software, const std::string& os,
                                    std::vector<std::string> present_predecessors) const {
    std::sort(present_predecessors.begin(), present_predecessors.end());
    auto it = conditional_.find(Key{software, os, present_predecessors});
    if (it == conditional_.end()) {
        std::string context = "{";
        for (std::size_t i = 0; i < present_predecessors.size(); ++i) {
            if (i > 0) context += ",";
            context += present_predecessors[i];
        }
        context += "}";
        raise(Errc::incomplete_dependency_model,
              "no conditional for software '" + software + "' given os '" + os + "', present " + context);
    }
    return it->second;
}

Belief chain_rule_prior(SpacePtr space, const std::map<std::string, double>& os_prior,
                        const DependencyModel& dep) {
    if (!space) raise(Errc::invalid_argument, "chain_rule_prior needs a space");

    double os_total = 0.0;
    for (const auto& [os, p] : os_prior) {
        if (std::find(space->os_universe().begin(), space->os_universe().end(), os) ==
            space->os_universe().end())
            raise(Errc::invalid_argument, "os prior names unknown OS '" + os + "'");
        if (!std::isfinite(p) || p < 0.0 || p > 1.0)
            raise(Errc::invalid_argument, "os prior for '" + os + "' outside [0,1]");
        os_total += p;
    }
    if (std::abs(os_total - 1.0) > 1e-9)
        raise(Errc::invalid_argument, "os prior sums to " + std::to_string(os_total) + ", expected 1");

    auto chain_sorted = dep.chain_order();
    std::sort(chain_sorted.begin(), chain_sorted.end());
    auto universe_sorted = space->software_universe();
    std::sort(universe_sorted.begin(), universe_sorted.end());
    if (chain_sorted != universe_sorted)
        raise(Errc::invalid_argument, "chain order must be a permutation of the software universe");

    std::vector<double> mass(space->size(), 0.0);
    const auto& configs = space->configurations();
    for (std::size_t i = 0; i < configs.size(); ++i) {
        const Configuration& config = configs[i];
        auto it = os_prior.find(config.os);
        double m = it == os_prior.end() ? 0.0 : it->second;
        if (m > 0.0) {
            const std::set<std::string> installed(config.software.begin(), config.software.end());
            std::vector<std::string> present; // chained-so-far software that is installed
            for (const auto& software : dep.chain_order()) {
                const double p = dep.conditional(software, config.os, present);
                if (installed.contains(software)) {
                    m *= p;
                    present.push_back(software);
                } else {
                    m *= 1.0 - p;
                }
            }
        }
        mass[i] = m;
    }

    double total = 0.0;
    for (double m : mass) total += m;
    if (total <= 0.0)
        raise(Errc::degenerate_prior, "prior mass over the admissible set is zero");
    for (double& m : mass) m /= total;
    return Belief(std::move(space), std::move(mass));
}

UpdateResult bayes_update(const Belief& belief, const Observation& obs, const KnowledgeBase& kb) {
    validate_observation(obs, kb.schema());
    // No features present means likelihood 1 everywhere; keep the prior
    // bit for bit instead of round-tripping it through log space.
    if (obs.values.empty()) return UpdateResult{belief, false};
    const auto& configs = belief.space()->configurations();
    const auto& prior = belief.mass();

    std::vector<double> log_weight(prior.size(), kNegInf);
    double max_weight = kNegInf;
    for (std::size_t i = 0; i < prior.size(); ++i) {
        if (prior[i] == 0.0) continue; // zero prior mass stays zero, exactly
        const double ll = log_likelihood(kb, obs, configs[i]);
        if (ll == kNegInf) continue;
        log_weight[i] = ll + std::log(prior[i]);
        max_weight = std::max(max_weight, log_weight[i]);
    }

    if (max_weight == kNegInf) {
        // Every configuration with prior mass got likelihood zero; the
        // normalizer is zero, so the update is refused.
        return UpdateResult{belief, true};
    }

    std::vector<double> posterior(prior.size(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < prior.size(); ++i) {
        if (log_weight[i] == kNegInf) continue;
        posterior[i] = std::exp(log_weight[i] - max_weight);
        total += posterior[i];
    }
    for (double& p : posterior) p /= total;
    return UpdateResult{Belief(belief.space(), std::move(posterior)), false};
}

MapEstimate map_estimate(const Belief& belief) {
    const auto& mass = belief.mass();
    std::size_t best = 0;
    bool tied = false;
    for (std::size_t i = 1; i < mass.size(); ++i) {
        if (mass[i] > mass[best]) {
            best = i;
            tied = false;
        } else if (mass[i] == mass[best]) {
            tied = true;
        }
    }
    return MapEstimate{belief.space()->configurations()[best], mass[best], tied};
}

BeliefTrajectory update_stream(const Belief& prior, const std::vector<Observation>& stream,
                               const KnowledgeBase& kb) {
    BeliefTrajectory trajectory;
    trajectory.steps.push_back(BeliefStep{0, prior});
    trajectory.map_sequence.push_back(map_estimate(prior));

    Belief current = prior;
    for (std::size_t k = 0; k < stream.size(); ++k) {
        std::optional<UpdateResult> result;
        try {
            result = bayes_update(current, stream[k], kb);
        } catch (const Error& e) {
            raise(e.code(), "observation " + std::to_string(k + 1) + ": " + e.detail());
        }
        if (result->evidence_zero) trajectory.evidence_zero_steps.push_back(k + 1);
        current = std::move(result->posterior);
        trajectory.steps.push_back(BeliefStep{k + 1, current});
        trajectory.map_sequence.push_back(map_estimate(current));
    }
    return trajectory;
}

std::string trajectory_to_csv(const BeliefTrajectory& trajectory) {
    std::string out = "obs_index,configuration_label,probability\n";
    for (const auto& step : trajectory.steps) {
        const auto& configs = step.belief.space()->configurations();
        for (std::size_t i = 0; i < configs.size(); ++i) {
            out += std::to_string(step.obs_index);
            out += ",";
            out += configs[i].label();
            out += ",";
            out += format_probability(step.belief.mass_at(i));
            out += "\n";
        }
    }
    return out;
}

std::string trajectory_to_wide_csv(const BeliefTrajectory& trajectory) {
    const auto& configs = trajectory.steps.front().belief.space()->configurations();
    std::string out = "step";
    for (const auto& config : configs) {
        out += ",";
        out += config.label();
    }
    out += "\n";
    for (const auto& step : trajectory.steps) {
        out += step.obs_index == 0 ? "init. belief" : "obs. " + std::to_string(step.obs_index);
        for (std::size_t i = 0; i < configs.size(); ++i) {
            out += ",";
            out += format_probability(step.belief.mass_at(i));
        }
        out += "\n";
    }
    return out;
}

JointBelief::JointBelief(std::vector<NodeIdentity> nodes, std::vector<SpacePtr> spaces,
                         std::vector<double> mass)
    : nodes_(std::move(nodes)), spaces_(std::move(spaces)), mass_(std::move(mass)) {
    if (nodes_.empty()) raise(Errc::invalid_argument, "joint belief needs at least one node");
    if (nodes_.size() != spaces_.size())
        raise(Errc::invalid_argument, "joint belief needs one space per node");
    std::set<NodeIdentity> unique(nodes_.begin(), nodes_.end());
    if (unique.size() != nodes_.size())
        raise(Errc::invalid_argument, "joint belief lists a node twice");

    std::size_t total = 1;
    for (const auto& space : spaces_) {
        if (!space || space->size() == 0) raise(Errc::invalid_argument, "joint belief needs non-empty spaces");
        if (total > kMaxJointSize / space->size())
            raise(Errc::space_too_large, "joint space exceeds " + std::to_string(kMaxJointSize));
        total *= space->size();
    }
    if (mass_.size() != total)
        raise(Errc::invalid_argument, "joint mass has " + std::to_string(mass_.size()) +
                                          " entries for a product space of " + std::to_string(total));
    double sum = 0.0;
    for (double p : mass_) {
        if (!std::isfinite(p) || p < 0.0 || p > 1.0)
            raise(Errc::invalid_argument, "joint mass outside [0,1]");
        sum += p;
    }
    if (std::abs(sum - 1.0) > Belief::kSumTolerance)
        raise(Errc::invalid_argument, "joint mass sums to " + std::to_string(sum) + ", expected 1");
}

JointBelief JointBelief::from_marginals(const NetworkBelief& network) {
    std::vector<NodeIdentity> nodes;
    std::vector<SpacePtr> spaces;
    for (const auto& [node, belief] : network.per_node()) {
        nodes.push_back(node);
        spaces.push_back(belief.space());
    }
    if (nodes.empty()) raise(Errc::invalid_argument, "joint belief needs at least one node");

    std::size_t total = 1;
    for (const auto& space : spaces) {
        if (total > kMaxJointSize / space->size())
            raise(Errc::space_too_large, "joint space exceeds " + std::to_string(kMaxJointSize));
        total *= space->size();
    }

    std::vector<double> mass(total, 1.0);
    // Mixed-radix walk, last node's configuration index varying fastest.
    for (std::size_t index = 0; index < total; ++index) {
        std::size_t rest = index;
        for (std::size_t n = nodes.size(); n-- > 0;) {
            const std::size_t digit = rest % spaces[n]->size();
            rest /= spaces[n]->size();
            mass[index] *= network.per_node().at(nodes[n]).mass_at(digit);
        }
    }
    return JointBelief(std::move(nodes), std::move(spaces), std::move(mass));
}

Belief JointBelief::marginal(std::size_t node_index) const {
    if (node_index >= nodes_.size())
        raise(Errc::invalid_argument, "node index " + std::to_string(node_index) + " out of range");

    std::size_t suffix = 1; // product of sizes after node_index
    for (std::size_t n = node_index + 1; n < spaces_.size(); ++n) suffix *= spaces_[n]->size();
    const std::size_t mine = spaces_[node_index]->size();

    std::vector<double> sums(mine, 0.0);
    for (std::size_t index = 0; index < mass_.size(); ++index) {
        sums[(index / suffix) % mine] += mass_[index];
    }
    return Belief(spaces_[node_index], std::move(sums));
}

JointBelief joint_update_oracle(const JointBelief& prior,
                                const std::map<NodeIdentity, std::vector<Observation>>& streams,
                                const KnowledgeBase& kb) {
    const auto& nodes = prior.nodes();
    const auto& spaces = prior.spaces();

    for (const auto& [node, stream] : streams) {
        if (std::find(nodes.begin(), nodes.end(), node) == nodes.end())
            raise(Errc::unknown_node, "stream for node '" + node.primary() + "' not in the joint");
    }

    // Per node, per configuration: the plain product of likelihoods over
    // the node's whole stream.
    std::vector<std::vector<double>> stream_likelihood(nodes.size());
    for (std::size_t n = 0; n < nodes.size(); ++n) {
        const auto& configs = spaces[n]->configurations();
        stream_likelihood[n].assign(configs.size(), 1.0);
        auto it = streams.find(nodes[n]);
        if (it == streams.end()) continue; // no observations: factor 1
        for (std::size_t c = 0; c < configs.size(); ++c) {
            for (const auto& obs : it->second)
                stream_likelihood[n][c] *= observation_likelihood(kb, obs, configs[c]);
        }
    }

    std::vector<double> weight(prior.mass().size(), 0.0);
    double total = 0.0;
    for (std::size_t index = 0; index < weight.size(); ++index) {
        double w = prior.mass()[index];
        std::size_t rest = index;
        for (std::size_t n = nodes.size(); n-- > 0;) {
            const std::size_t digit = rest % spaces[n]->size();
            rest /= spaces[n]->size();
            w *= stream_likelihood[n][digit];
        }
        weight[index] = w;
        total += w;
    }
    if (total <= 0.0) raise(Errc::invalid_argument, "joint evidence is zero; posterior undefined");
    for (double& w : weight) w /= total;

    return JointBelief(nodes, spaces, std::move(weight));
}

} // namespace recon
